//! Identity augmentation by random non-negative combinations of DR features.
//!
//! Weights come from a point drawn in hyperspherical coordinates with the
//! radius in `[0.5, 1.2]` and every angle in `[0, π/2]`, so all weights are
//! non-negative and their squares sum to the squared radius.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deform::{save_drf, DrFeature};
use crate::error::{Error, Result};

pub const RADIUS_RANGE: (f64, f64) = (0.5, 1.2);
pub const DEFAULT_SOURCES: usize = 5;
pub const DEFAULT_COUNT: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct PolarSample {
    pub r: f64,
    pub angles: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PolarSample {
    /// Converts `(r, θ_1..θ_{m-1})` to cartesian weights `a_1..a_m`.
    pub fn from_polar(r: f64, angles: Vec<f64>) -> Self {
        let m = angles.len() + 1;
        let mut weights = Vec::with_capacity(m);
        let mut sin_prod = r;
        for &t in &angles {
            weights.push(sin_prod * t.cos());
            sin_prod *= t.sin();
        }
        weights.push(sin_prod);
        PolarSample { r, angles, weights }
    }
}

pub fn sample_weights(m: usize, rng: &mut impl Rng) -> Result<PolarSample> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 sources to interpolate, got {m}"
        )));
    }
    let r = rng.random_range(RADIUS_RANGE.0..=RADIUS_RANGE.1);
    let angles = (0..m - 1)
        .map(|_| rng.random_range(0.0..=FRAC_PI_2))
        .collect();
    Ok(PolarSample::from_polar(r, angles))
}

/// `Σ a_i · sources[i]`.
pub fn combine(sources: &[&DrFeature], weights: &[f64]) -> Result<DrFeature> {
    let first = sources
        .first()
        .ok_or_else(|| Error::InvalidArgument("no sources to combine".into()))?;
    if sources.len() != weights.len() {
        return Err(Error::dim(format!(
            "{} sources for {} weights",
            sources.len(),
            weights.len()
        )));
    }
    let mut acc = Array2::zeros(first.values().raw_dim());
    for (f, &a) in sources.iter().zip(weights) {
        if f.reference_id() != first.reference_id() {
            return Err(Error::ReferenceMismatch {
                expected: first.reference_id().to_owned(),
                found: f.reference_id().to_owned(),
            });
        }
        if f.values().dim() != acc.dim() {
            return Err(Error::dim("source features differ in vertex count"));
        }
        acc.scaled_add(a, f.values());
    }
    DrFeature::new(acc, first.reference_id())
}

/// One generated feature and where it came from.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub feature: DrFeature,
    pub sources: Vec<usize>,
    pub weights: Vec<f64>,
}

/// `count` new features, each mixing `m` distinct inputs drawn uniformly.
pub fn augment_corpus(
    features: &[DrFeature],
    count: usize,
    m: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Augmented>> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "m must be at least 2, got {m}"
        )));
    }
    if features.len() < m {
        return Err(Error::InvalidArgument(format!(
            "need at least {m} input features, got {}",
            features.len()
        )));
    }
    (0..count)
        .map(|_| {
            let picks = sample(rng, features.len(), m).into_vec();
            let w = sample_weights(m, rng)?;
            let chosen: Vec<&DrFeature> = picks.iter().map(|&i| &features[i]).collect();
            Ok(Augmented {
                feature: combine(&chosen, &w.weights)?,
                sources: picks,
                weights: w.weights,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentManifest {
    pub seed: u64,
    pub m: usize,
    pub count: usize,
    pub inputs: Vec<String>,
    pub outputs: Vec<AugmentEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentEntry {
    pub file: String,
    pub sources: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Runs [`augment_corpus`] with a seeded stream and writes `aug_<k>.drf` plus `manifest.json`.
pub fn write_augmented(
    features: &[DrFeature],
    input_names: Vec<String>,
    count: usize,
    m: usize,
    seed: u64,
    dir: impl AsRef<Path>,
) -> Result<AugmentManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = augment_corpus(features, count, m, &mut rng)?;
    let mut outputs = Vec::with_capacity(out.len());
    for (k, a) in out.into_iter().enumerate() {
        let file = format!("aug_{k}.drf");
        save_drf(&a.feature, dir.join(&file))?;
        outputs.push(AugmentEntry {
            file,
            sources: a.sources,
            weights: a.weights,
        });
    }
    let manifest = AugmentManifest {
        seed,
        m,
        count,
        inputs: input_names,
        outputs,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| Error::from(e).in_file(&path))?;
    Ok(manifest)
}
