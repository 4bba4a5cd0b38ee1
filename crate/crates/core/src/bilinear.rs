//! Bilinear (identity × expression) tensor face model: truncated mode bases
//! from the data tensor and alternating least-squares fitting.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{load_obj, save_obj, Mesh};
use crate::tensorfile::{Tensor, TensorSet};

/// Value of `kind` in a bilinear model manifest.
pub const KIND: &str = "bilinear_core";
const REFERENCE_FILE: &str = "reference.obj";

/// Singular values below this fraction of the largest count as zero when
/// deciding a mode's rank.
const MODE_RANK_TOLERANCE: f64 = 1e-10;

/// Residual (mm) below which a fit counts as exact and stops.
const RESIDUAL_FLOOR: f64 = 1e-9;

/// Condition-number limit for a least-squares subproblem.
const MIN_RELATIVE_SINGULAR_VALUE: f64 = 1e-12;

/// Reduced core plus the training grid's coefficients in each mode.
#[derive(Debug, Clone)]
pub struct BilinearModel {
    /// `(3n) x k_id x k_exp`.
    pub core: Array3<f64>,
    /// Row `i` holds identity `i`'s coefficients.
    pub id_coeffs: Array2<f64>,
    /// Row `e` holds expression `e`'s coefficients; row 0 is neutral.
    pub exp_coeffs: Array2<f64>,
    topology_mesh: Mesh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearFit {
    pub alpha_id: Vec<f64>,
    pub alpha_exp: Vec<f64>,
    /// Root-mean-square vertex distance in millimeters.
    pub residual: f64,
    pub iterations: usize,
    /// Residual before the first iteration, then after each iteration.
    pub residual_log: Vec<f64>,
}

fn flatten(mesh: &Mesh) -> Vec<f64> {
    mesh.vertices().iter().flatten().copied().collect()
}

/// Left singular vectors of `m` with singular value above
/// `MODE_RANK_TOLERANCE · σ_max`, at most `k` of them, as columns. Signs are
/// fixed so each column's largest-magnitude entry is positive.
fn mode_basis(m: DMatrix<f64>, k: usize) -> DMatrix<f64> {
    // thin SVD of the transpose: the mode dimension is the short side
    let svd = m.transpose().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let smax = sv.max();
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| sv[i] > MODE_RANK_TOLERANCE * smax)
        .take(k)
        .collect();
    let mut out = DMatrix::zeros(v_t.ncols(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let mut col = v_t.row(i).transpose();
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        out.set_column(c, &col);
    }
    out
}

impl BilinearModel {
    /// Builds the model from a complete identity × expression grid of meshes
    /// (`grid[i][e]`, expression 0 neutral). `k_id`/`k_exp` are clipped to the
    /// numerical rank of each mode, which is at most the grid size.
    pub fn build(grid: &[Vec<Mesh>], k_id: usize, k_exp: usize) -> Result<Self> {
        let ids = grid.len();
        let exps = grid.first().map_or(0, |r| r.len());
        if ids == 0 || exps == 0 {
            return Err(Error::InvalidArgument("empty mesh grid".into()));
        }
        if grid.iter().any(|r| r.len() != exps) {
            return Err(Error::InvalidArgument(
                "incomplete grid: every identity needs every expression".into(),
            ));
        }
        if k_id == 0 || k_exp == 0 {
            return Err(Error::InvalidArgument("ranks must be positive".into()));
        }
        let first = &grid[0][0];
        if grid.iter().flatten().any(|m| !first.shares_connectivity(m)) {
            return Err(Error::ConnectivityMismatch);
        }
        let d = 3 * first.vertex_count();
        let mut data = Array3::<f64>::zeros((d, ids, exps));
        for (i, row) in grid.iter().enumerate() {
            for (e, m) in row.iter().enumerate() {
                for (v, x) in flatten(m).into_iter().enumerate() {
                    data[[v, i, e]] = x;
                }
            }
        }
        let unfold_id = DMatrix::from_fn(ids, d * exps, |i, c| data[[c / exps, i, c % exps]]);
        let unfold_exp = DMatrix::from_fn(exps, d * ids, |e, c| data[[c / ids, c % ids, e]]);
        let u_id = mode_basis(unfold_id, k_id);
        let u_exp = mode_basis(unfold_exp, k_exp);
        let (k_id, k_exp) = (u_id.ncols(), u_exp.ncols());
        let mut core = Array3::<f64>::zeros((d, k_id, k_exp));
        for v in 0..d {
            let slab = data.index_axis(Axis(0), v);
            let m = DMatrix::from_fn(ids, exps, |i, e| slab[[i, e]]);
            let c = u_id.transpose() * m * &u_exp;
            for a in 0..k_id {
                for b in 0..k_exp {
                    core[[v, a, b]] = c[(a, b)];
                }
            }
        }
        Ok(BilinearModel {
            core,
            id_coeffs: Array2::from_shape_fn((ids, k_id), |(i, a)| u_id[(i, a)]),
            exp_coeffs: Array2::from_shape_fn((exps, k_exp), |(e, b)| u_exp[(e, b)]),
            topology_mesh: first.clone(),
        })
    }

    /// Mesh supplying the shared connectivity.
    pub fn topology(&self) -> &Mesh {
        &self.topology_mesh
    }

    pub fn k_id(&self) -> usize {
        self.core.dim().1
    }

    pub fn k_exp(&self) -> usize {
        self.core.dim().2
    }

    pub fn neutral_expression(&self) -> Array1<f64> {
        self.exp_coeffs.row(0).to_owned()
    }

    pub fn mean_identity(&self) -> Array1<f64> {
        self.id_coeffs
            .mean_axis(Axis(0))
            .expect("at least one identity")
    }

    pub fn mean_expression(&self) -> Array1<f64> {
        self.exp_coeffs
            .mean_axis(Axis(0))
            .expect("at least one expression")
    }

    fn flat(&self, alpha_id: &[f64], alpha_exp: &[f64]) -> Result<Vec<f64>> {
        if alpha_id.len() != self.k_id() || alpha_exp.len() != self.k_exp() {
            return Err(Error::dim(format!(
                "coefficients ({}, {}) for a ({}, {}) core",
                alpha_id.len(),
                alpha_exp.len(),
                self.k_id(),
                self.k_exp()
            )));
        }
        Ok(self
            .core
            .outer_iter()
            .map(|slab| {
                let mut s = 0.0;
                for (a, &wa) in alpha_id.iter().enumerate() {
                    for (b, &wb) in alpha_exp.iter().enumerate() {
                        s += slab[[a, b]] * wa * wb;
                    }
                }
                s
            })
            .collect())
    }

    /// `core ×₂ α_id ×₃ α_exp` as a mesh.
    pub fn reconstruct(&self, alpha_id: &[f64], alpha_exp: &[f64]) -> Result<Mesh> {
        let flat = self.flat(alpha_id, alpha_exp)?;
        let verts = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        self.topology_mesh.with_vertices(verts)
    }

    /// `(3n) x k` design matrix with one mode contracted by `fixed`.
    fn design(&self, fixed: &[f64], contract_exp: bool) -> DMatrix<f64> {
        let (d, ki, ke) = self.core.dim();
        if contract_exp {
            DMatrix::from_fn(d, ki, |v, a| {
                (0..ke).map(|b| self.core[[v, a, b]] * fixed[b]).sum()
            })
        } else {
            DMatrix::from_fn(d, ke, |v, b| {
                (0..ki).map(|a| self.core[[v, a, b]] * fixed[a]).sum()
            })
        }
    }

    fn rms(&self, target: &[f64], alpha_id: &[f64], alpha_exp: &[f64]) -> Result<f64> {
        let flat = self.flat(alpha_id, alpha_exp)?;
        let sq: f64 = flat.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum();
        Ok((sq / (target.len() / 3) as f64).sqrt())
    }

    /// Alternating least squares from an expression initialization (default:
    /// the mean training expression coefficients).
    pub fn fit(
        &self,
        mesh: &Mesh,
        init_exp: Option<&[f64]>,
        max_iter: usize,
        tol: f64,
    ) -> Result<BilinearFit> {
        if !self.topology_mesh.shares_connectivity(mesh) {
            return Err(Error::ConnectivityMismatch);
        }
        let target = flatten(mesh);
        let b = DVector::from_column_slice(&target);
        let mut alpha_exp = match init_exp {
            Some(a) => a.to_vec(),
            None => self.mean_expression().to_vec(),
        };
        if alpha_exp.len() != self.k_exp() {
            return Err(Error::dim(
                "initial expression coefficients have the wrong length",
            ));
        }
        let mut alpha_id = self.solve(&self.design(&alpha_exp, true), &b, "identity")?;
        let mut residual = self.rms(&target, &alpha_id, &alpha_exp)?;
        let mut log = vec![residual];
        let mut iterations = 0;
        while iterations < max_iter {
            iterations += 1;
            alpha_exp = self.solve(&self.design(&alpha_id, false), &b, "expression")?;
            alpha_id = self.solve(&self.design(&alpha_exp, true), &b, "identity")?;
            let next = self.rms(&target, &alpha_id, &alpha_exp)?;
            log.push(next);
            let change = (residual - next).abs() / residual.max(f64::MIN_POSITIVE);
            residual = next;
            if change < tol || residual < RESIDUAL_FLOOR {
                break;
            }
        }
        Ok(BilinearFit {
            alpha_id,
            alpha_exp,
            residual,
            iterations,
            residual_log: log,
        })
    }

    fn solve(&self, a: &DMatrix<f64>, b: &DVector<f64>, mode: &str) -> Result<Vec<f64>> {
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) || !smax.is_finite() {
            return Err(Error::Singular(format!("degenerate {mode} subproblem")));
        }
        // minimum-norm minimizer when the iterate makes the slice rank-deficient
        let cutoff = if svd.singular_values.min() < smax * MIN_RELATIVE_SINGULAR_VALUE {
            smax * MIN_RELATIVE_SINGULAR_VALUE
        } else {
            0.0
        };
        let x = svd
            .solve(b, cutoff)
            .map_err(|e| Error::Singular(format!("{mode} subproblem: {e}")))?;
        Ok(x.iter().copied().collect())
    }

    /// Expression of `source` on the identity of `target`.
    pub fn transfer(&self, source: &BilinearFit, target: &BilinearFit) -> Result<Mesh> {
        self.reconstruct(&target.alpha_id, &source.alpha_exp)
    }

    /// Identity part of a fit: its identity with the neutral expression.
    pub fn identity_mesh(&self, fit: &BilinearFit) -> Result<Mesh> {
        self.reconstruct(&fit.alpha_id, self.neutral_expression().as_slice().unwrap())
    }

    /// Expression part of a fit: its expression on the mean training identity.
    pub fn expression_mesh(&self, fit: &BilinearFit) -> Result<Mesh> {
        self.reconstruct(self.mean_identity().as_slice().unwrap(), &fit.alpha_exp)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let t = |name: &str, shape: Vec<usize>, data: Vec<f64>| Tensor {
            name: name.into(),
            shape,
            data,
        };
        let set = TensorSet {
            kind: Some(KIND.into()),
            config: serde_json::json!({
                "k_id": self.k_id(),
                "k_exp": self.k_exp(),
                "vertex_count": self.topology_mesh.vertex_count(),
            }),
            tensors: vec![
                t(
                    "core",
                    self.core.shape().to_vec(),
                    self.core.iter().copied().collect(),
                ),
                t(
                    "id_coeffs",
                    self.id_coeffs.shape().to_vec(),
                    self.id_coeffs.iter().copied().collect(),
                ),
                t(
                    "exp_coeffs",
                    self.exp_coeffs.shape().to_vec(),
                    self.exp_coeffs.iter().copied().collect(),
                ),
            ],
        };
        set.save(dir)?;
        save_obj(&self.topology_mesh, dir.join(REFERENCE_FILE))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let set = TensorSet::load(dir)?;
        if set.kind.as_deref() != Some(KIND) {
            return Err(Error::format(
                "bilinear manifest",
                format!("expected kind `{KIND}`, found {:?}", set.kind),
            )
            .in_file(dir));
        }
        let mesh = load_obj(dir.join(REFERENCE_FILE))?;
        let get3 = |name: &str| -> Result<Array3<f64>> {
            let t = set.get(name)?;
            match t.shape[..] {
                [a, b, c] => Array3::from_shape_vec((a, b, c), t.data.clone())
                    .map_err(|e| Error::format("bilinear", e.to_string())),
                _ => Err(Error::format("bilinear", format!("`{name}` must be 3-D"))),
            }
        };
        let get2 = |name: &str| -> Result<Array2<f64>> {
            let t = set.get(name)?;
            match t.shape[..] {
                [a, b] => Array2::from_shape_vec((a, b), t.data.clone())
                    .map_err(|e| Error::format("bilinear", e.to_string())),
                _ => Err(Error::format("bilinear", format!("`{name}` must be 2-D"))),
            }
        };
        let core = get3("core").map_err(|e| e.in_file(dir))?;
        let id_coeffs = get2("id_coeffs").map_err(|e| e.in_file(dir))?;
        let exp_coeffs = get2("exp_coeffs").map_err(|e| e.in_file(dir))?;
        let (d, ki, ke) = core.dim();
        if d != 3 * mesh.vertex_count() || id_coeffs.ncols() != ki || exp_coeffs.ncols() != ke {
            return Err(Error::format("bilinear", "tensor shapes disagree").in_file(dir));
        }
        Ok(BilinearModel {
            core,
            id_coeffs,
            exp_coeffs,
            topology_mesh: mesh,
        })
    }
}
