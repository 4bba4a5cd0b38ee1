//! Helpers shared by the integration tests: small meshes, random graphs and
//! reference implementations used as oracles.
#![allow(dead_code)]

use facerep::deform::{DrFeature, ReferenceFrame};
use facerep::mesh::{offset_patch, Mesh};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

/// A gently curved 10-vertex patch.
pub fn small_mesh() -> Mesh {
    offset_patch(5, 2).map_vertices(|[x, y, _]| [x, y, 0.3 * x * x - 0.2 * y * y])
}

pub fn small_frame() -> ReferenceFrame {
    ReferenceFrame::new(small_mesh()).unwrap()
}

/// Rest feature of `frame` plus Gaussian noise of standard deviation `sigma`.
pub fn jittered_feature(frame: &ReferenceFrame, sigma: f64, rng: &mut impl Rng) -> DrFeature {
    let noise = Array2::from_shape_simple_fn(frame.rest_feature().values().raw_dim(), || {
        sigma * rng.sample::<f64, _>(StandardNormal)
    });
    DrFeature::new(frame.rest_feature().values() + &noise, frame.id()).unwrap()
}

/// Random connected simple graph: a random spanning tree plus extra edges.
pub fn random_graph(n: usize, extra: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        edges.push(ordered(order[k], parent));
    }
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && !edges.contains(&ordered(a, b)) {
            edges.push(ordered(a, b));
        }
    }
    edges
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// `I - D^{-1/2} A D^{-1/2}` built densely from an edge list.
pub fn dense_normalized_laplacian(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(n, n);
    for &(i, j) in edges {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j && deg[i] > 0.0 { 1.0 } else { 0.0 };
        if deg[i] > 0.0 && deg[j] > 0.0 {
            id - a[(i, j)] / (deg[i] * deg[j]).sqrt()
        } else {
            id
        }
    })
}

/// Spectral filtering `U diag(Σ_k θ_k T_k(λ̃)) Uᵀ` per (input, output)
/// channel pair, with `T_k(x) = cos(k·acos x)` on the eigenvalues.
pub fn spectral_filter_oracle(
    laplacian: &DMatrix<f64>,
    lambda_max: f64,
    theta: &[Array2<f64>],
    x: &Array2<f64>,
) -> Array2<f64> {
    let n = laplacian.nrows();
    let eig = SymmetricEigen::new(laplacian.clone());
    let u = &eig.eigenvectors;
    let (f_in, f_out) = theta[0].dim();
    let mut y = Array2::<f64>::zeros((n, f_out));
    for i in 0..f_in {
        for o in 0..f_out {
            let gains: Vec<f64> = eig
                .eigenvalues
                .iter()
                .map(|&lam| {
                    let t = (2.0 * lam / lambda_max - 1.0).clamp(-1.0, 1.0).acos();
                    theta
                        .iter()
                        .enumerate()
                        .map(|(k, th)| th[[i, o]] * (k as f64 * t).cos())
                        .sum()
                })
                .collect();
            let filter =
                u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(gains)) * u.transpose();
            for r in 0..n {
                y[[r, o]] += (0..n).map(|c| filter[(r, c)] * x[[c, i]]).sum::<f64>();
            }
        }
    }
    y
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central difference of `f` at `x[i]`.
pub fn central_difference(
    x: &mut [f64],
    i: usize,
    h: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let up = f(x);
    x[i] = orig - h;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * h)
}

/// Compares `grads` (same layout as `p`) with central differences of `loss`
/// on up to `per_tensor` random coordinates of each tensor whose name passes
/// `keep`. Returns the relative error over all sampled coordinates.
pub fn parameter_gradient_error<P: facerep::spectral::Parameters + Clone>(
    p: &P,
    grads: &P,
    per_tensor: usize,
    h: f64,
    rng: &mut impl Rng,
    keep: impl Fn(&str) -> bool,
    loss: impl Fn(&P) -> f64,
) -> f64 {
    let meta: Vec<(String, usize)> = p
        .params("")
        .into_iter()
        .map(|t| (t.name, t.data.len()))
        .collect();
    let analytic: Vec<Vec<f64>> = grads
        .params("")
        .into_iter()
        .map(|t| t.data.to_vec())
        .collect();
    let (mut a, mut f) = (Vec::new(), Vec::new());
    for (t, (name, len)) in meta.iter().enumerate() {
        if !keep(name) {
            continue;
        }
        let picks: Vec<usize> = if *len <= per_tensor {
            (0..*len).collect()
        } else {
            rand::seq::index::sample(rng, *len, per_tensor).into_vec()
        };
        for j in picks {
            let eval = |delta: f64| {
                let mut q = p.clone();
                q.params_mut()[t][j] += delta;
                loss(&q)
            };
            f.push((eval(h) - eval(-h)) / (2.0 * h));
            a.push(analytic[t][j]);
        }
    }
    relative_error(&a, &f)
}
