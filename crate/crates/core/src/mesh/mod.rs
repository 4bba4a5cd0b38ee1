//! Triangle meshes with shared, immutable connectivity.

mod cotan;
mod laplacian;
mod obj;
mod shapes;

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use cotan::{cotangent_weights, CotanWeights, MIN_COTAN_WEIGHT};
pub use laplacian::{
    normalized_laplacian, normalized_laplacian_from_edges, scaled_laplacian, DEFAULT_LAMBDA_MAX,
};
pub use obj::{load_obj, parse_obj, save_obj, write_obj};
pub use shapes::{grid_patch, icosphere, offset_patch};

pub type Vec3 = [f64; 3];

/// Face list plus derived 1-ring neighborhoods.
#[derive(Debug, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    faces: Vec<[usize; 3]>,
    neighbors: Vec<Vec<usize>>,
    vertex_faces: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(n: usize, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut vertex_faces: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::dim(format!(
                    "face {fi} references a vertex outside 0..{n}"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateFace { face: fi });
            }
            for k in 0..3 {
                vertex_faces[f[k]].push(fi);
                let (a, b) = (f[k], f[(k + 1) % 3]);
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
        }
        Ok(Topology {
            n,
            faces,
            neighbors,
            vertex_faces,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Sorted 1-ring neighbors of every vertex.
    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    /// Faces incident to every vertex.
    pub fn vertex_faces(&self) -> &[Vec<usize>] {
        &self.vertex_faces
    }

    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &self.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.n
    }
}

/// Vertex positions in millimeters over a shared [`Topology`].
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Vec3>,
    topology: Arc<Topology>,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.shares_connectivity(other)
    }
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let topology = Topology::new(vertices.len(), faces)?;
        Ok(Mesh {
            vertices,
            topology: Arc::new(topology),
        })
    }

    /// A mesh with new positions over this mesh's connectivity.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertex_count() {
            return Err(Error::dim(format!(
                "expected {} vertices, got {}",
                self.vertex_count(),
                vertices.len()
            )));
        }
        Ok(Mesh {
            vertices,
            topology: Arc::clone(&self.topology),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.topology.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        self.topology.faces()
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        self.topology.neighbors()
    }

    pub fn shares_connectivity(&self, other: &Mesh) -> bool {
        Arc::ptr_eq(&self.topology, &other.topology) || self.topology == other.topology
    }

    pub fn centroid(&self) -> Vec3 {
        let n = self.vertices.len().max(1) as f64;
        let mut c = [0.0; 3];
        for v in &self.vertices {
            for k in 0..3 {
                c[k] += v[k];
            }
        }
        c.map(|x| x / n)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        norm(sub(hi, lo))
    }

    pub fn map_vertices(&self, mut f: impl FnMut(Vec3) -> Vec3) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|&v| f(v)).collect(),
            topology: Arc::clone(&self.topology),
        }
    }

    pub fn translated(&self, t: Vec3) -> Mesh {
        self.map_vertices(|v| add(v, t))
    }

    pub fn triangle_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.faces()[face].map(|i| self.vertices[i]);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    /// SHA-256 over little-endian positions and face indices.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.vertices.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for x in v {
                h.update(x.to_le_bytes());
            }
        }
        h.update((self.face_count() as u64).to_le_bytes());
        for f in self.faces() {
            for &i in f {
                h.update((i as u64).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacency_is_symmetric_without_self_loops() {
        let m = icosphere(1);
        for (i, nb) in m.neighbors().iter().enumerate() {
            assert!(!nb.contains(&i));
            for &j in nb {
                assert!(m.neighbors()[j].contains(&i));
            }
        }
    }

    #[test]
    fn adjacency_matches_face_edge_set() {
        let m = icosphere(1);
        let mut from_faces: Vec<(usize, usize)> = m
            .faces()
            .iter()
            .flat_map(|f| (0..3).map(move |k| (f[k].min(f[(k + 1) % 3]), f[k].max(f[(k + 1) % 3]))))
            .collect();
        from_faces.sort();
        from_faces.dedup();
        assert_eq!(from_faces, m.topology().edges());
        // Euler characteristic of a sphere: V - E + F = 2
        assert_eq!(m.vertex_count() + m.face_count(), from_faces.len() + 2);
    }

    #[test]
    fn degenerate_face_rejected() {
        let r = Mesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 1]]);
        assert!(matches!(r, Err(Error::DegenerateFace { face: 0 })));
    }

    #[test]
    fn connectivity_detection() {
        let v = vec![[0.0; 3]; 6];
        let split = Mesh::new(v.clone(), vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        assert!(!split.topology().is_connected());
        let joined = Mesh::new(v, vec![[0, 1, 2], [2, 3, 4], [4, 5, 0]]).unwrap();
        assert!(joined.topology().is_connected());
    }

    #[test]
    fn hash_changes_with_positions() {
        let m = icosphere(1);
        let t = m.translated([1e-9, 0.0, 0.0]);
        assert_ne!(m.content_hash(), t.content_hash());
        assert_eq!(m.content_hash(), m.clone().content_hash());
    }
}
