use std::collections::HashMap;

use super::{cross, dot, norm, sub, Mesh};
use crate::error::{Error, Result};

/// Floor applied to every cotangent weight; obtuse angles would otherwise
/// produce negative weights and an indefinite decode system.
pub const MIN_COTAN_WEIGHT: f64 = 1e-8;

/// Cotangent weights `c_ij`, stored per vertex in the order of
/// [`Mesh::neighbors`].
#[derive(Debug, Clone, PartialEq)]
pub struct CotanWeights {
    per_vertex: Vec<Vec<f64>>,
    neighbors: Vec<Vec<usize>>,
}

impl CotanWeights {
    /// Weights of the 1-ring of `i`, aligned with `neighbors(i)`.
    pub fn ring(&self, i: usize) -> &[f64] {
        &self.per_vertex[i]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = self.neighbors[i].binary_search(&j).ok()?;
        Some(self.per_vertex[i][k])
    }

    pub fn vertex_count(&self) -> usize {
        self.per_vertex.len()
    }
}

/// `c_ij = max(½(cot α_ij + cot β_ij), 1e-8)` with α, β the angles opposite
/// edge `(i, j)`; a boundary edge uses its single opposite angle.
pub fn cotangent_weights(mesh: &Mesh) -> Result<CotanWeights> {
    let v = mesh.vertices();
    let mut acc: HashMap<(usize, usize), (f64, u8)> = HashMap::new();
    for (fi, f) in mesh.faces().iter().enumerate() {
        for k in 0..3 {
            let o = f[k];
            let p = f[(k + 1) % 3];
            let q = f[(k + 2) % 3];
            let a = sub(v[p], v[o]);
            let b = sub(v[q], v[o]);
            let s = norm(cross(a, b));
            if !(s > 0.0) {
                return Err(Error::ZeroAreaTriangle { face: fi });
            }
            let cot = dot(a, b) / s;
            let e = acc.entry((p.min(q), p.max(q))).or_insert((0.0, 0));
            e.0 += 0.5 * cot;
            e.1 += 1;
            if e.1 > 2 {
                return Err(Error::NonManifoldEdge(p.min(q), p.max(q)));
            }
        }
    }
    let neighbors = mesh.neighbors().to_vec();
    let per_vertex = neighbors
        .iter()
        .enumerate()
        .map(|(i, nb)| {
            nb.iter()
                .map(|&j| acc[&(i.min(j), i.max(j))].0.max(MIN_COTAN_WEIGHT))
                .collect()
        })
        .collect();
    Ok(CotanWeights {
        per_vertex,
        neighbors,
    })
}
