//! Model directories: `model.json` + `model.bin` and the `reference.obj`
//! the features are defined against.

use std::path::Path;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArchConfig, Model, Network, Normalizer, TrainConfig};
use crate::deform::ReferenceFrame;
use crate::error::{Error, Result};
use crate::mesh::{load_obj, save_obj};
use crate::spectral::Parameters;
use crate::tensorfile::{Tensor, TensorSet};

pub const REFERENCE_FILE: &str = "reference.obj";
/// Value of `kind` in a network model manifest.
pub const KIND: &str = "disentangle_net";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfig {
    arch: ArchConfig,
    train: TrainConfig,
    reference_id: String,
    vertex_count: usize,
}

pub fn save_model(model: &Model, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let config = ModelConfig {
        arch: model.arch.clone(),
        train: model.train.clone(),
        reference_id: model.frame().id().to_owned(),
        vertex_count: model.vertex_count(),
    };
    let mut tensors = vec![
        Tensor {
            name: "norm.mean".into(),
            shape: vec![model.normalizer.mean.len()],
            data: model.normalizer.mean.to_vec(),
        },
        Tensor {
            name: "norm.std".into(),
            shape: vec![model.normalizer.std.len()],
            data: model.normalizer.std.to_vec(),
        },
    ];
    tensors.extend(model.network.params("").into_iter().map(|p| Tensor {
        name: p.name,
        shape: p.shape,
        data: p.data.to_vec(),
    }));
    let set = TensorSet {
        kind: Some(KIND.into()),
        config: serde_json::to_value(config)?,
        tensors,
    };
    set.save(dir)?;
    save_obj(model.frame().mesh(), dir.join(REFERENCE_FILE))
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<Model> {
    let dir = dir.as_ref();
    let set = TensorSet::load(dir)?;
    if set.kind.as_deref() != Some(KIND) {
        return Err(Error::format(
            "model manifest",
            format!("expected kind `{KIND}`, found {:?}", set.kind),
        )
        .in_file(dir));
    }
    let config: ModelConfig = serde_json::from_value(set.config.clone())
        .map_err(|e| Error::format("model config", e.to_string()).in_file(dir))?;
    let frame = ReferenceFrame::new(load_obj(dir.join(REFERENCE_FILE))?)?;
    if frame.id() != config.reference_id || frame.vertex_count() != config.vertex_count {
        return Err(Error::ReferenceMismatch {
            expected: config.reference_id,
            found: frame.id().to_owned(),
        }
        .in_file(dir));
    }
    config.arch.validate()?;
    let normalizer = Normalizer {
        mean: Array1::from(set.get("norm.mean")?.data.clone()),
        std: Array1::from(set.get("norm.std")?.data.clone()),
    };
    if normalizer.mean.len() != crate::deform::FEATURE_DIM
        || normalizer.std.len() != crate::deform::FEATURE_DIM
        || normalizer.std.iter().any(|&s| s <= 0.0)
    {
        return Err(Error::format("model", "bad normalization tensors").in_file(dir));
    }
    let mut network = Network::init(
        frame.vertex_count(),
        &config.arch,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    let names: Vec<(String, Vec<usize>)> = network
        .params("")
        .into_iter()
        .map(|p| (p.name, p.shape))
        .collect();
    for ((name, shape), dst) in names.iter().zip(network.params_mut()) {
        let t = set.get(name).map_err(|e| e.in_file(dir))?;
        if &t.shape != shape {
            return Err(Error::format(
                "model",
                format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    t.shape, shape
                ),
            )
            .in_file(dir));
        }
        dst.copy_from_slice(&t.data);
    }
    Model::new(config.arch, config.train, normalizer, network, frame)
}
