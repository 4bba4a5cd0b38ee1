//! Per-vertex deformation features relative to a fixed reference mesh.
//!
//! Each vertex stores the log of the rotation part of its local deformation
//! gradient (3 values) and the upper triangle of the symmetric stretch
//! (6 values). Decoding solves one global sparse least-squares problem.

mod drf;
mod polar;
mod rotation;

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::mesh::{cotangent_weights, cross as cross3, norm, sub, CotanWeights, Mesh};
use crate::sparse::{EnvelopeCholesky, SparseMatrix};

pub use drf::{decode_drf, encode_drf, load_drf, save_drf};
pub use polar::polar_decompose;
pub use rotation::{rotation_exp, rotation_log};

/// Feature width per vertex.
pub const FEATURE_DIM: usize = 9;

/// Eigenvalue floor of the 1-ring Gram matrix, relative to its trace.
pub const GRAM_REGULARIZATION: f64 = 1e-6;

/// `n x 9` deformation features, tagged with the reference they were encoded against.
#[derive(Debug, Clone, PartialEq)]
pub struct DrFeature {
    values: Array2<f64>,
    reference_id: String,
}

impl DrFeature {
    pub fn new(values: Array2<f64>, reference_id: impl Into<String>) -> Result<Self> {
        if values.ncols() != FEATURE_DIM {
            return Err(Error::dim(format!(
                "feature must have {FEATURE_DIM} columns, got {}",
                values.ncols()
            )));
        }
        Ok(DrFeature {
            values,
            reference_id: reference_id.into(),
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn reference_id(&self) -> &str {
        &self.reference_id
    }

    pub fn vertex_count(&self) -> usize {
        self.values.nrows()
    }

    /// Local transform `T_i = exp(log_i) S_i` for every vertex.
    pub fn transforms(&self) -> Vec<Matrix3<f64>> {
        self.values
            .rows()
            .into_iter()
            .map(unpack_transform)
            .collect()
    }
}

fn unpack_transform(row: ArrayView1<f64>) -> Matrix3<f64> {
    let r = rotation_exp(&Vector3::new(row[0], row[1], row[2]));
    let s = Matrix3::new(
        row[3], row[4], row[5], //
        row[4], row[6], row[7], //
        row[5], row[7], row[8],
    );
    r * s
}

fn pack_transform(t: &Matrix3<f64>) -> [f64; FEATURE_DIM] {
    let (r, s) = polar_decompose(t);
    let w = rotation_log(&r);
    [
        w.x,
        w.y,
        w.z,
        s[(0, 0)],
        s[(0, 1)],
        s[(0, 2)],
        s[(1, 1)],
        s[(1, 2)],
        s[(2, 2)],
    ]
}

/// Reference mesh plus everything precomputed for encoding and decoding against it.
#[derive(Debug, Clone)]
pub struct ReferenceFrame {
    mesh: Mesh,
    weights: CotanWeights,
    gram_inverse: Vec<Matrix3<f64>>,
    normals: Vec<NormalTerm>,
    solver: EnvelopeCholesky,
    rest: DrFeature,
    id: String,
}

impl ReferenceFrame {
    pub fn new(reference: Mesh) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::EmptyMesh);
        }
        if !reference.topology().is_connected() {
            return Err(Error::Disconnected);
        }
        let weights = cotangent_weights(&reference)?;
        let p = reference.vertices();
        let normals = reference_normals(&reference, &weights);
        let mut gram_inverse = Vec::with_capacity(p.len());
        for i in 0..p.len() {
            let mut g = Matrix3::zeros();
            for (&j, &c) in weights.neighbors(i).iter().zip(weights.ring(i)) {
                let d = Vector3::from(sub(p[i], p[j]));
                g += d * d.transpose() * c;
            }
            let nt = &normals[i];
            g += nt.normal * nt.normal.transpose() * nt.weight;
            let tr = g.trace();
            if !(tr > 0.0) {
                return Err(Error::CoincidentNeighborhood { vertex: i });
            }
            gram_inverse.push(floored_inverse(&g, GRAM_REGULARIZATION * tr));
        }
        let solver = EnvelopeCholesky::factor(&decode_system(&weights)?)?;
        let id = reference.content_hash();
        let mut frame = ReferenceFrame {
            mesh: reference,
            weights,
            gram_inverse,
            normals,
            solver,
            rest: DrFeature::new(Array2::zeros((0, FEATURE_DIM)), "")?,
            id,
        };
        frame.rest = frame.encode(&frame.mesh.clone())?;
        Ok(frame)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn weights(&self) -> &CotanWeights {
        &self.weights
    }

    /// Content hash identifying this reference.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    /// Feature of the reference encoded against itself (≈ identity transforms).
    pub fn rest_feature(&self) -> &DrFeature {
        &self.rest
    }

    fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if !self.mesh.shares_connectivity(mesh) {
            return Err(Error::ConnectivityMismatch);
        }
        Ok(())
    }

    /// Cotangent-weighted best-fit affine map of each 1-ring.
    ///
    /// Besides the 1-ring edges, the fit includes the scaled vertex normal
    /// (deformed normal scaled by the square root of the 1-ring area ratio),
    /// which fixes the out-of-plane column on nearly flat rings.
    pub fn deformation_gradients(&self, deformed: &Mesh) -> Result<Vec<Matrix3<f64>>> {
        self.check_mesh(deformed)?;
        let p = self.mesh.vertices();
        let q = deformed.vertices();
        let faces = face_normals(deformed);
        (0..p.len())
            .map(|i| {
                let mut cross = Matrix3::zeros();
                let mut moved = 0.0;
                for (&j, &c) in self.weights.neighbors(i).iter().zip(self.weights.ring(i)) {
                    let d = Vector3::from(sub(p[i], p[j]));
                    let dq = Vector3::from(sub(q[i], q[j]));
                    moved += dq.norm_squared();
                    cross += dq * d.transpose() * c;
                }
                if moved == 0.0 {
                    return Err(Error::CoincidentNeighborhood { vertex: i });
                }
                let nt = &self.normals[i];
                if nt.weight > 0.0 {
                    let (dir, area) = ring_normal(&faces, &self.vertex_faces()[i]);
                    if area > 0.0 {
                        let scaled = dir * (nt.length * (area / nt.area).sqrt());
                        cross += scaled * nt.normal.transpose() * nt.weight;
                    }
                }
                Ok(cross * self.gram_inverse[i])
            })
            .collect()
    }

    fn vertex_faces(&self) -> &[Vec<usize>] {
        self.mesh.topology().vertex_faces()
    }

    pub fn encode(&self, deformed: &Mesh) -> Result<DrFeature> {
        let ts = self.deformation_gradients(deformed)?;
        let mut values = Array2::zeros((ts.len(), FEATURE_DIM));
        for (mut row, t) in values.rows_mut().into_iter().zip(&ts) {
            for (dst, src) in row.iter_mut().zip(pack_transform(t)) {
                *dst = src;
            }
        }
        DrFeature::new(values, self.id.clone())
    }

    pub fn decode(&self, feature: &DrFeature) -> Result<Mesh> {
        if feature.reference_id() != self.id {
            return Err(Error::ReferenceMismatch {
                expected: self.id.clone(),
                found: feature.reference_id().to_owned(),
            });
        }
        if feature.vertex_count() != self.vertex_count() {
            return Err(Error::dim(format!(
                "feature has {} rows, reference has {} vertices",
                feature.vertex_count(),
                self.vertex_count()
            )));
        }
        if feature.values().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                component: "deformation feature".into(),
            });
        }
        self.decode_transforms(&feature.transforms())
    }

    /// Positions minimizing `Σ_i Σ_{j∈N_i} c_ij ‖(p'_i − p'_j) − T_i (p_i − p_j)‖²`,
    /// translated so the centroid matches the reference centroid.
    pub fn decode_transforms(&self, transforms: &[Matrix3<f64>]) -> Result<Mesh> {
        let n = self.vertex_count();
        if transforms.len() != n {
            return Err(Error::dim(format!(
                "{} transforms for {n} vertices",
                transforms.len()
            )));
        }
        let p = self.mesh.vertices();
        let mut rhs = vec![[0.0f64; 3]; n];
        for i in 0..n {
            for (&j, &c) in self.weights.neighbors(i).iter().zip(self.weights.ring(i)) {
                let b = transforms[i] * Vector3::from(sub(p[i], p[j])) * c;
                for k in 0..3 {
                    rhs[i][k] += b[k];
                    rhs[j][k] -= b[k];
                }
            }
        }
        let mut out = vec![[0.0f64; 3]; n];
        for k in 0..3 {
            let b: Vec<f64> = rhs[1..].iter().map(|r| r[k]).collect();
            let x = self.solver.solve(&b);
            for (i, xi) in x.into_iter().enumerate() {
                out[i + 1][k] = xi;
            }
        }
        let target = self.mesh.centroid();
        let mut c = [0.0; 3];
        for v in &out {
            for k in 0..3 {
                c[k] += v[k] / n as f64;
            }
        }
        for v in &mut out {
            for k in 0..3 {
                v[k] += target[k] - c[k];
            }
        }
        if out.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Singular(
                "decode produced non-finite positions".into(),
            ));
        }
        self.mesh.with_vertices(out)
    }

    /// The decode objective evaluated at `mesh` for the given transforms.
    pub fn decode_energy(&self, transforms: &[Matrix3<f64>], mesh: &Mesh) -> f64 {
        let p = self.mesh.vertices();
        let q = mesh.vertices();
        let mut e = 0.0;
        for i in 0..p.len() {
            for (&j, &c) in self.weights.neighbors(i).iter().zip(self.weights.ring(i)) {
                let r =
                    Vector3::from(sub(q[i], q[j])) - transforms[i] * Vector3::from(sub(p[i], p[j]));
                e += c * r.norm_squared();
            }
        }
        e
    }
}

/// Inverse of a symmetric PSD matrix with eigenvalues clamped to at least `floor`.
fn floored_inverse(g: &Matrix3<f64>, floor: f64) -> Matrix3<f64> {
    let eig = nalgebra::SymmetricEigen::new(*g);
    let inv = eig.eigenvalues.map(|l| 1.0 / l.max(floor));
    eig.eigenvectors * Matrix3::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Per-vertex normal constraint used by the gradient fit.
#[derive(Debug, Clone)]
struct NormalTerm {
    /// Unit reference normal scaled by `length`.
    normal: Vector3<f64>,
    length: f64,
    area: f64,
    weight: f64,
}

/// Per face: (unnormalized normal, area).
fn face_normals(mesh: &Mesh) -> Vec<(Vector3<f64>, f64)> {
    let v = mesh.vertices();
    mesh.faces()
        .iter()
        .map(|&[a, b, c]| {
            let n = Vector3::from(cross3(sub(v[b], v[a]), sub(v[c], v[a])));
            let area = 0.5 * n.norm();
            (n, area)
        })
        .collect()
}

/// Area-weighted unit normal and total area of a vertex's incident faces.
fn ring_normal(faces: &[(Vector3<f64>, f64)], incident: &[usize]) -> (Vector3<f64>, f64) {
    let mut n = Vector3::zeros();
    let mut area = 0.0;
    for &f in incident {
        n += faces[f].0;
        area += faces[f].1;
    }
    let len = n.norm();
    if len > 0.0 {
        (n / len, area)
    } else {
        (n, 0.0)
    }
}

fn reference_normals(mesh: &Mesh, weights: &CotanWeights) -> Vec<NormalTerm> {
    let faces = face_normals(mesh);
    let p = mesh.vertices();
    (0..p.len())
        .map(|i| {
            let (dir, area) = ring_normal(&faces, &mesh.topology().vertex_faces()[i]);
            let csum: f64 = weights.ring(i).iter().sum();
            let spread: f64 = weights
                .neighbors(i)
                .iter()
                .zip(weights.ring(i))
                .map(|(&j, &c)| c * norm(sub(p[i], p[j])).powi(2))
                .sum();
            if area > 0.0 && csum > 0.0 {
                let length = (spread / csum).sqrt();
                NormalTerm {
                    normal: dir * length,
                    length,
                    area,
                    weight: 0.5 * csum,
                }
            } else {
                NormalTerm {
                    normal: Vector3::zeros(),
                    length: 0.0,
                    area: 0.0,
                    weight: 0.0,
                }
            }
        })
        .collect()
}

/// Normal equations of the decode objective with vertex 0 pinned (row and
/// column removed); the remaining gauge is fixed after solving.
fn decode_system(weights: &CotanWeights) -> Result<SparseMatrix> {
    let n = weights.vertex_count();
    if n < 2 {
        return Err(Error::Singular("need at least two vertices".into()));
    }
    let mut trip = Vec::new();
    for i in 0..n {
        for (&j, &c) in weights.neighbors(i).iter().zip(weights.ring(i)) {
            // each undirected edge is visited from both ends
            for (a, b, v) in [(i, i, c), (j, j, c), (i, j, -c), (j, i, -c)] {
                if a > 0 && b > 0 {
                    trip.push((a - 1, b - 1, v));
                }
            }
        }
    }
    SparseMatrix::from_triplets(n - 1, trip, true)
}

/// Convenience: `ReferenceFrame::deformation_gradients`.
pub fn deformation_gradients(frame: &ReferenceFrame, deformed: &Mesh) -> Result<Vec<Matrix3<f64>>> {
    frame.deformation_gradients(deformed)
}

pub fn dr_encode(frame: &ReferenceFrame, deformed: &Mesh) -> Result<DrFeature> {
    frame.encode(deformed)
}

pub fn dr_decode(frame: &ReferenceFrame, feature: &DrFeature) -> Result<Mesh> {
    frame.decode(feature)
}
