//! Reconstruction and decomposition error measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{norm, sub, Mesh, Vec3};

/// Average vertex distance in millimeters.
pub fn e_avd(a: &Mesh, b: &Mesh) -> Result<f64> {
    if a.vertex_count() != b.vertex_count() {
        return Err(Error::dim(format!(
            "vertex counts differ: {} vs {}",
            a.vertex_count(),
            b.vertex_count()
        )));
    }
    if a.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let total: f64 = a
        .vertices()
        .iter()
        .zip(b.vertices())
        .map(|(p, q)| norm(sub(*p, *q)))
        .sum();
    Ok(total / a.vertex_count() as f64)
}

/// `a` translated so that its centroid coincides with the centroid of `to`.
pub fn align_centroid(a: &Mesh, to: &Mesh) -> Mesh {
    a.translated(sub(to.centroid(), a.centroid()))
}

/// [`e_avd`] after moving `a` onto the centroid of `b`. Meshes decoded from
/// deformation features carry the reference centroid, not the input's, so
/// this is the distance used whenever a decoded mesh meets ground truth.
pub fn e_avd_aligned(a: &Mesh, b: &Mesh) -> Result<f64> {
    if a.vertex_count() != b.vertex_count() {
        return e_avd(a, b);
    }
    e_avd(&align_centroid(a, b), b)
}

/// Spatial edge-difference error: mean over vertices of the length-weighted
/// standard deviation of relative edge-length change around each vertex.
/// Edge lengths of `original` provide the weights.
pub fn e_sed(original: &Mesh, reconstructed: &Mesh) -> Result<f64> {
    if !original.shares_connectivity(reconstructed) {
        return Err(Error::ConnectivityMismatch);
    }
    if original.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let p = original.vertices();
    let q = reconstructed.vertices();
    let mut total = 0.0;
    for (i, nb) in original.neighbors().iter().enumerate() {
        let mut wsum = 0.0;
        let mut edges = Vec::with_capacity(nb.len());
        for &j in nb {
            let l = norm(sub(p[i], p[j]));
            if l == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "zero-length reference edge ({i}, {j})"
                )));
            }
            let ed = ((l - norm(sub(q[i], q[j]))) / l).abs();
            wsum += l;
            edges.push((l, ed));
        }
        if edges.is_empty() {
            continue;
        }
        let mean = edges.iter().map(|(l, ed)| l * ed).sum::<f64>() / wsum;
        let var = edges
            .iter()
            .map(|(l, ed)| l * (ed - mean).powi(2))
            .sum::<f64>()
            / wsum;
        total += var.sqrt();
    }
    Ok(total / p.len() as f64)
}

/// Mean over vertices of the positional standard deviation across a mesh set.
pub fn decomposition_std(meshes: &[Mesh]) -> Result<f64> {
    if meshes.len() < 2 {
        return Err(Error::InvalidArgument(
            "decomposition spread needs at least two meshes".into(),
        ));
    }
    let first = &meshes[0];
    if meshes.iter().any(|m| !first.shares_connectivity(m)) {
        return Err(Error::ConnectivityMismatch);
    }
    let n = first.vertex_count();
    if n == 0 {
        return Err(Error::EmptyMesh);
    }
    let count = meshes.len() as f64;
    let mut total = 0.0;
    for i in 0..n {
        // offsets from the first mesh keep identical sets at exactly zero
        let origin = first.vertices()[i];
        let offsets: Vec<Vec3> = meshes
            .iter()
            .map(|m| sub(m.vertices()[i], origin))
            .collect();
        let mut mean = [0.0; 3];
        for d in &offsets {
            for k in 0..3 {
                mean[k] += d[k] / count;
            }
        }
        let var: f64 = offsets
            .iter()
            .map(|&d| norm(sub(d, mean)).powi(2))
            .sum::<f64>()
            / count;
        total += var.sqrt();
    }
    Ok(total / n as f64)
}

/// Per-mesh values of one metric with summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub values: Vec<(String, f64)>,
}

impl MetricReport {
    pub fn new(metric: impl Into<String>) -> Self {
        MetricReport {
            metric: metric.into(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, mesh_id: impl Into<String>, value: f64) {
        self.values.push((mesh_id.into(), value));
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        self.values.iter().map(|(_, v)| v).sum::<f64>() / self.values.len() as f64
    }

    pub fn median(&self) -> f64 {
        let mut v: Vec<f64> = self.values.iter().map(|(_, v)| *v).collect();
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        if v.len() % 2 == 1 {
            v[m]
        } else {
            0.5 * (v[m - 1] + v[m])
        }
    }

    /// CSV rows `metric,mesh_id,value`, then `mean` and `median` rows.
    pub fn write_csv_rows(&self, out: &mut String) {
        use std::fmt::Write;
        for (id, v) in &self.values {
            let _ = writeln!(out, "{},{},{}", self.metric, id, v);
        }
        let _ = writeln!(out, "{},mean,{}", self.metric, self.mean());
        let _ = writeln!(out, "{},median,{}", self.metric, self.median());
    }
}

/// One evaluated mesh of a held-out identity × expression grid: the input and
/// what a model made of it.
#[derive(Debug, Clone)]
pub struct DecomposedSample {
    pub identity: usize,
    pub expression: usize,
    pub original: Mesh,
    pub reconstruction: Mesh,
    pub identity_part: Mesh,
    pub expression_part: Mesh,
}

impl DecomposedSample {
    fn label(&self) -> String {
        format!("{}_{}", self.identity, self.expression)
    }
}

/// All four reports over a decomposed held-out grid, in the order
/// `E_avd`, `E_sed`, `E_id`, `E_exp`.
///
/// `E_avd` and `E_sed` are per input mesh (centroid-aligned reconstruction
/// against the input). `E_id` is the spread of the identity parts decomposed
/// from all expressions of one identity, reported per identity; `E_exp` is the
/// spread of the expression parts of one expression across identities,
/// reported per expression. Groups with fewer than two members are skipped.
pub fn evaluate_decompositions(samples: &[DecomposedSample]) -> Result<Vec<MetricReport>> {
    use std::collections::BTreeMap;
    let mut avd = MetricReport::new("E_avd");
    let mut sed = MetricReport::new("E_sed");
    let mut by_id: BTreeMap<usize, Vec<Mesh>> = BTreeMap::new();
    let mut by_exp: BTreeMap<usize, Vec<Mesh>> = BTreeMap::new();
    for s in samples {
        avd.push(s.label(), e_avd_aligned(&s.reconstruction, &s.original)?);
        sed.push(s.label(), e_sed(&s.original, &s.reconstruction)?);
        by_id
            .entry(s.identity)
            .or_default()
            .push(s.identity_part.clone());
        by_exp
            .entry(s.expression)
            .or_default()
            .push(s.expression_part.clone());
    }
    let mut e_id = MetricReport::new("E_id");
    for (i, set) in by_id.iter().filter(|(_, s)| s.len() >= 2) {
        e_id.push(format!("id{i}"), decomposition_std(set)?);
    }
    let mut e_exp = MetricReport::new("E_exp");
    for (e, set) in by_exp.iter().filter(|(_, s)| s.len() >= 2) {
        e_exp.push(format!("exp{e}"), decomposition_std(set)?);
    }
    Ok(vec![avd, sed, e_id, e_exp])
}

/// Header line for [`MetricReport::write_csv_rows`].
pub const CSV_HEADER: &str = "metric,mesh_id,value";
