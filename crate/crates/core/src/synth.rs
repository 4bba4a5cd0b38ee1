//! Deterministic face-like corpus: identities × expressions over one patch.
//!
//! The base mesh is an elliptic dome with a nose bump. Identities add smooth
//! radial-basis displacement fields whose coefficients are centered across
//! identities, so the base is exactly the mean neutral face. Expressions are
//! local warps (jaw hinge, brow raise, smile curl) whose amplitude depends on
//! a per-identity scalar, which makes the corpus non-bilinear.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::deform::{DrFeature, ReferenceFrame};
use crate::error::{Error, Result};
use crate::mesh::{load_obj, offset_patch, save_obj, Mesh, Vec3};

/// Half-extent of the base patch in millimeters along x and y.
const HALF_WIDTH: f64 = 65.0;
const HALF_HEIGHT: f64 = 75.0;

/// Strength of the identity-dependent expression amplitude modulation.
pub const COUPLING: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    /// Patch columns; the mesh has `cols * rows` vertices.
    pub cols: usize,
    pub rows: usize,
    pub identities: usize,
    pub expressions: usize,
    /// The last `held_out` identities form the test split.
    pub held_out: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            cols: 32,
            rows: 32,
            identities: 16,
            expressions: 12,
            held_out: 2,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn vertex_count(&self) -> usize {
        self.cols * self.rows
    }

    pub fn validate(&self) -> Result<()> {
        if self.cols < 3 || self.rows < 3 {
            return Err(Error::InvalidArgument(
                "patch needs at least 3x3 vertices".into(),
            ));
        }
        if self.identities < 2 || self.expressions < 1 {
            return Err(Error::InvalidArgument(
                "need at least 2 identities and 1 expression".into(),
            ));
        }
        if self.held_out >= self.identities {
            return Err(Error::InvalidArgument(
                "held-out identities must leave at least one for training".into(),
            ));
        }
        Ok(())
    }

    pub fn train_identities(&self) -> Vec<usize> {
        (0..self.identities - self.held_out).collect()
    }

    pub fn test_identities(&self) -> Vec<usize> {
        (self.identities - self.held_out..self.identities).collect()
    }
}

/// Weights of the expression primitives; all zero is neutral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expression {
    pub jaw: f64,
    pub brow: f64,
    pub smile_left: f64,
    pub smile_right: f64,
}

impl Expression {
    pub const NEUTRAL: Expression = Expression {
        jaw: 0.0,
        brow: 0.0,
        smile_left: 0.0,
        smile_right: 0.0,
    };

    fn new(jaw: f64, brow: f64, smile_left: f64, smile_right: f64) -> Self {
        Expression {
            jaw,
            brow,
            smile_left,
            smile_right,
        }
    }

    /// Largest absolute primitive weight.
    pub fn strength(&self) -> f64 {
        [self.jaw, self.brow, self.smile_left, self.smile_right]
            .into_iter()
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn expression_table(count: usize, rng: &mut ChaCha8Rng) -> Vec<Expression> {
    let fixed = [
        Expression::NEUTRAL,
        Expression::new(0.5, 0.0, 0.0, 0.0),
        Expression::new(1.0, 0.0, 0.0, 0.0),
        Expression::new(0.0, 1.0, 0.0, 0.0),
        Expression::new(0.0, 0.0, 1.0, 1.0),
        Expression::new(0.6, 0.0, 0.6, 0.6),
        Expression::new(0.0, 0.7, 0.7, 0.7),
        Expression::new(1.0, 1.0, 0.0, 0.0),
        Expression::new(0.0, 0.0, 1.0, 0.0),
        Expression::new(0.0, 0.0, 0.0, 1.0),
        Expression::new(0.0, -0.7, 0.0, 0.0),
        Expression::new(0.6, 0.6, 0.6, 0.6),
    ];
    let mut out: Vec<Expression> = fixed.into_iter().take(count).collect();
    while out.len() < count {
        out.push(Expression::new(
            rng.random_range(0.0..1.0),
            rng.random_range(-0.7..1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
        ));
    }
    out
}

fn bump(u: f64, v: f64, cu: f64, cv: f64, radius: f64) -> f64 {
    let d2 = ((u - cu) / radius).powi(2) + ((v - cv) / radius).powi(2);
    (-d2).exp()
}

fn smoothstep(x: f64) -> f64 {
    let t = x.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Identity displacement basis at normalized patch coordinates, in millimeters.
const IDENTITY_FIELDS: usize = 7;

fn identity_field(k: usize, u: f64, v: f64) -> Vec3 {
    match k {
        0 => [6.0 * u, 0.0, 0.0],
        1 => [0.0, 6.0 * v, 0.0],
        2 => [0.0, 0.0, 6.0 * bump(u, v, 0.0, 0.05, 0.18)],
        3 => [
            0.0,
            0.0,
            5.0 * (bump(u, v, -0.45, -0.1, 0.25) + bump(u, v, 0.45, -0.1, 0.25)),
        ],
        4 => {
            let g = bump(u, v, 0.0, -0.8, 0.3);
            [0.0, -3.0 * g, 5.0 * g]
        }
        5 => [0.0, 0.0, 6.0 * bump(u, v, 0.0, 0.75, 0.4)],
        _ => [
            0.0,
            0.0,
            -4.0 * (bump(u, v, -0.35, 0.3, 0.15) + bump(u, v, 0.35, 0.3, 0.15)),
        ],
    }
}

fn base_position(u: f64, v: f64) -> Vec3 {
    let z = 40.0 * (1.0 - 0.5 * u * u - 0.3 * v * v) + 10.0 * bump(u, v, 0.0, 0.0, 0.2);
    [HALF_WIDTH * u, HALF_HEIGHT * v, z]
}

/// Applies `expr` scaled by `gain` to positions `p` with patch coordinates `uv`.
fn apply_expression(p: &[Vec3], uv: &[[f64; 2]], expr: &Expression, gain: f64) -> Vec<Vec3> {
    let hinge_v = -0.05;
    let hinge = [0.0, HALF_HEIGHT * hinge_v, -30.0];
    p.iter()
        .zip(uv)
        .map(|(&q, &[u, v])| {
            let mut q = q;
            let brow =
                gain * expr.brow * (bump(u, v, -0.35, 0.45, 0.2) + bump(u, v, 0.35, 0.45, 0.2));
            q[1] += 5.0 * brow;
            q[2] += 1.5 * brow;
            for (side, amount) in [(-1.0, expr.smile_left), (1.0, expr.smile_right)] {
                let g = gain * amount * bump(u, v, 0.32 * side, -0.35, 0.18);
                q[0] += 3.0 * side * g;
                q[1] += 4.0 * g;
                q[2] -= 2.0 * g;
            }
            let w = smoothstep((hinge_v - v) / 0.35);
            let angle = 0.3 * gain * expr.jaw * w;
            if angle != 0.0 {
                let (s, c) = angle.sin_cos();
                let dy = q[1] - hinge[1];
                let dz = q[2] - hinge[2];
                q[1] = hinge[1] + dy * c - dz * s;
                q[2] = hinge[2] + dy * s + dz * c;
            }
            q
        })
        .collect()
}

/// A generated corpus with its ground truth.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub spec: CorpusSpec,
    /// The mean neutral face.
    pub reference: Mesh,
    /// `meshes[i][e]`: identity i performing expression e; `e = 0` is neutral.
    pub meshes: Vec<Vec<Mesh>>,
    /// `expression_meshes[e]`: expression e on the mean face.
    pub expression_meshes: Vec<Mesh>,
    pub expressions: Vec<Expression>,
    /// Per-identity centered coupling scalar in roughly `[-1, 1]`.
    pub coupling: Vec<f64>,
    uv: Vec<[f64; 2]>,
    identity_coeffs: Vec<[f64; IDENTITY_FIELDS]>,
}

/// DR features of one training example.
#[derive(Debug, Clone)]
pub struct Triplet {
    pub full: DrFeature,
    pub identity: DrFeature,
    pub expression: DrFeature,
    pub identity_index: usize,
    pub expression_index: usize,
}

impl Triplet {
    /// `(full, identity, expression)` borrowed, the form batches are built from.
    pub fn features(&self) -> (&DrFeature, &DrFeature, &DrFeature) {
        (&self.full, &self.identity, &self.expression)
    }
}

pub fn generate(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let patch = offset_patch(spec.cols, spec.rows);
    let uv: Vec<[f64; 2]> = patch.vertices().iter().map(|p| [p[0], p[1]]).collect();
    let base: Vec<Vec3> = uv.iter().map(|&[u, v]| base_position(u, v)).collect();
    let reference = patch.with_vertices(base.clone())?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ids = spec.identities;
    let mut coeffs: Vec<[f64; IDENTITY_FIELDS]> = (0..ids)
        .map(|_| std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    for k in 0..IDENTITY_FIELDS {
        let mean = coeffs.iter().map(|c| c[k]).sum::<f64>() / ids as f64;
        for c in &mut coeffs {
            c[k] -= mean;
        }
    }
    let mut coupling: Vec<f64> = (0..ids).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = coupling.iter().sum::<f64>() / ids as f64;
    for c in &mut coupling {
        *c -= mean;
    }
    let expressions = expression_table(spec.expressions, &mut rng);

    let mut meshes = Vec::with_capacity(ids);
    for i in 0..ids {
        let neutral: Vec<Vec3> = base
            .iter()
            .zip(&uv)
            .map(|(&p, &[u, v])| {
                let mut q = p;
                for (k, a) in coeffs[i].iter().enumerate() {
                    let f = identity_field(k, u, v);
                    for d in 0..3 {
                        q[d] += a * f[d];
                    }
                }
                q
            })
            .collect();
        let gain = 1.0 + COUPLING * coupling[i];
        let row = expressions
            .iter()
            .enumerate()
            .map(|(e, expr)| {
                if e == 0 && *expr == Expression::NEUTRAL {
                    reference.with_vertices(neutral.clone())
                } else {
                    reference.with_vertices(apply_expression(&neutral, &uv, expr, gain))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        meshes.push(row);
    }
    let expression_meshes = expressions
        .iter()
        .map(|expr| reference.with_vertices(apply_expression(&base, &uv, expr, 1.0)))
        .collect::<Result<Vec<_>>>()?;

    Ok(Corpus {
        spec: spec.clone(),
        reference,
        meshes,
        expression_meshes,
        expressions,
        coupling,
        uv,
        identity_coeffs: coeffs,
    })
}

impl Corpus {
    pub fn mesh(&self, identity: usize, expression: usize) -> &Mesh {
        &self.meshes[identity][expression]
    }

    pub fn identity_mesh(&self, identity: usize) -> &Mesh {
        &self.meshes[identity][0]
    }

    /// Ground truth for arbitrary identity coefficients and expression, used
    /// for oracles that need meshes outside the stored grid.
    pub fn synthesize(&self, identity: usize, expr: &Expression) -> Result<Mesh> {
        let neutral = self.identity_mesh(identity).vertices();
        let gain = 1.0 + COUPLING * self.coupling[identity];
        self.reference
            .with_vertices(apply_expression(neutral, &self.uv, expr, gain))
    }

    /// Largest displacement magnitude any expression primitive produces at
    /// unit gain, in millimeters.
    pub fn max_expression_amplitude(&self) -> f64 {
        self.expression_meshes
            .iter()
            .map(|m| {
                m.vertices()
                    .iter()
                    .zip(self.reference.vertices())
                    .map(|(a, b)| crate::mesh::norm(crate::mesh::sub(*a, *b)))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    pub fn identity_coefficients(&self, identity: usize) -> &[f64] {
        &self.identity_coeffs[identity]
    }

    /// DR triplets for the given identities (all expressions).
    pub fn triplets(&self, frame: &ReferenceFrame, identities: &[usize]) -> Result<Vec<Triplet>> {
        build_triplets(frame, &self.meshes, &self.expression_meshes, identities)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
        save_obj(&self.reference, dir.join("reference.obj"))?;
        for (i, row) in self.meshes.iter().enumerate() {
            for (e, m) in row.iter().enumerate() {
                save_obj(m, dir.join(format!("{i}_{e}.obj")))?;
            }
        }
        for (e, m) in self.expression_meshes.iter().enumerate() {
            save_obj(m, dir.join(format!("expr_{e}.obj")))?;
        }
        let manifest = CorpusManifest {
            spec: self.spec.clone(),
            train: self.spec.train_identities(),
            test: self.spec.test_identities(),
            expressions: self.expressions.clone(),
            coupling: self.coupling.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        let path = dir.join("manifest.json");
        fs::write(&path, text + "\n").map_err(|e| Error::from(e).in_file(&path))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub spec: CorpusSpec,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub expressions: Vec<Expression>,
    pub coupling: Vec<f64>,
}

/// Meshes read back from a corpus directory.
#[derive(Debug, Clone)]
pub struct CorpusFiles {
    pub manifest: CorpusManifest,
    pub reference: Mesh,
    pub meshes: Vec<Vec<Mesh>>,
    pub expression_meshes: Vec<Mesh>,
}

impl CorpusFiles {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
        let manifest: CorpusManifest =
            serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(&path))?;
        let reference = load_obj(dir.join("reference.obj"))?;
        // share one topology across everything loaded
        let load = |name: String| -> Result<Mesh> {
            let m = load_obj(dir.join(&name))?;
            if !reference.shares_connectivity(&m) {
                return Err(Error::ConnectivityMismatch.in_file(dir.join(&name)));
            }
            reference.with_vertices(m.vertices().to_vec())
        };
        let spec = &manifest.spec;
        let meshes = (0..spec.identities)
            .map(|i| {
                (0..spec.expressions)
                    .map(|e| load(format!("{i}_{e}.obj")))
                    .collect()
            })
            .collect::<Result<Vec<Vec<_>>>>()?;
        let expression_meshes = (0..spec.expressions)
            .map(|e| load(format!("expr_{e}.obj")))
            .collect::<Result<Vec<_>>>()?;
        Ok(CorpusFiles {
            manifest,
            reference,
            meshes,
            expression_meshes,
        })
    }

    /// DR triplets for the given identities.
    pub fn triplets(&self, frame: &ReferenceFrame, identities: &[usize]) -> Result<Vec<Triplet>> {
        build_triplets(frame, &self.meshes, &self.expression_meshes, identities)
    }
}

fn build_triplets(
    frame: &ReferenceFrame,
    meshes: &[Vec<Mesh>],
    expression_meshes: &[Mesh],
    identities: &[usize],
) -> Result<Vec<Triplet>> {
    let expr: Vec<DrFeature> = expression_meshes
        .iter()
        .map(|m| frame.encode(m))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(identities.len() * expr.len());
    for &i in identities {
        let row = meshes
            .get(i)
            .ok_or_else(|| Error::InvalidArgument(format!("identity {i} not in corpus")))?;
        let id_feature = frame.encode(&row[0])?;
        for (e, m) in row.iter().enumerate() {
            let full = if e == 0 {
                id_feature.clone()
            } else {
                frame.encode(m)?
            };
            out.push(Triplet {
                full,
                identity: id_feature.clone(),
                expression: expr[e].clone(),
                identity_index: i,
                expression_index: e,
            });
        }
    }
    Ok(out)
}
