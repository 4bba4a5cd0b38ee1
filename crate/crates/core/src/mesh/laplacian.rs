use super::Mesh;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Upper bound on the spectrum of any normalized graph Laplacian.
pub const DEFAULT_LAMBDA_MAX: f64 = 2.0;

/// `L = I - D^{-1/2} A D^{-1/2}` of the mesh's edge graph.
pub fn normalized_laplacian(mesh: &Mesh) -> Result<SparseMatrix> {
    normalized_laplacian_from_edges(mesh.vertex_count(), &mesh.topology().edges())
}

/// Normalized Laplacian of an undirected graph given as an edge list.
/// Duplicate edges and self-loops are ignored.
pub fn normalized_laplacian_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<SparseMatrix> {
    let mut es: Vec<(usize, usize)> = edges
        .iter()
        .filter(|(a, b)| a != b)
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    es.sort_unstable();
    es.dedup();
    let mut degree = vec![0usize; n];
    for &(a, b) in &es {
        if a >= n || b >= n {
            return Err(Error::dim(format!("edge ({a}, {b}) outside {n} vertices")));
        }
        degree[a] += 1;
        degree[b] += 1;
    }
    if let Some(v) = degree.iter().position(|&d| d == 0) {
        return Err(Error::IsolatedVertex { vertex: v });
    }
    let mut trip = Vec::with_capacity(n + 2 * es.len());
    trip.extend((0..n).map(|i| (i, i, 1.0)));
    for &(a, b) in &es {
        let w = -1.0 / ((degree[a] * degree[b]) as f64).sqrt();
        trip.push((a, b, w));
        trip.push((b, a, w));
    }
    SparseMatrix::from_triplets(n, trip, true)
}

/// `L̃ = 2L/λ_max - I`.
pub fn scaled_laplacian(l: &SparseMatrix, lambda_max: f64) -> Result<SparseMatrix> {
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda_max must be positive, got {lambda_max}"
        )));
    }
    Ok(l.affine(2.0 / lambda_max, -1.0))
}
