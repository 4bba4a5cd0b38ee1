use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArchConfig, Batch, Losses, Model, Network, Noise, Normalizer};
use crate::augment::augment_corpus;
use crate::deform::{DrFeature, ReferenceFrame};
use crate::error::{Error, Result};
use crate::spectral::Parameters;
use crate::synth::Triplet;

/// Training phases, run in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Both branches on their reconstruction and KL terms.
    Decompose = 1,
    /// Fusion on reconstruction with the branches frozen.
    Fuse = 2,
    /// Everything on the full objective including the disentangling term.
    Joint = 3,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Decompose, Stage::Fuse, Stage::Joint];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs_per_stage: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub decay_every: usize,
    pub id_kld_weight: f64,
    pub exp_kld_weight: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Extra neutral identities mixed from training identities; 0 disables.
    pub augment_count: usize,
    pub augment_sources: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs_per_stage: 50,
            learning_rate: 1e-4,
            lr_decay: 0.6,
            decay_every: 10,
            id_kld_weight: 1e-5,
            exp_kld_weight: 1e-5,
            batch_size: 16,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            augment_count: 0,
            augment_sources: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("lr_decay", self.lr_decay),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::InvalidArgument(
                "batch_size and decay_every must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument(
                "moment coefficients must lie in [0, 1)".into(),
            ));
        }
        if self.id_kld_weight < 0.0 || self.exp_kld_weight < 0.0 {
            return Err(Error::InvalidArgument(
                "KL weights must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Step size for a 0-based epoch within a stage.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

/// Adaptive-moment optimizer over an ordered list of tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64) {
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// One CSV row of the training log (epoch-averaged losses).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub stage: Stage,
    pub losses: Losses,
    pub lr: f64,
}

pub const LOG_HEADER: &str = "epoch,stage,L_total,L_rec,L_dis,L_id,L_exp,L_id_kld,L_exp_kld,lr";

impl LogRow {
    pub fn csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let l = &self.losses;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.stage as u8,
            l.total,
            f(l.rec),
            f(l.dis),
            f(l.id),
            f(l.exp),
            f(l.id_kld),
            f(l.exp_kld),
            self.lr
        )
    }
}

/// Owns the model under training, the data and the random stream.
pub struct Trainer {
    model: Model,
    data: Vec<(DrFeature, DrFeature, DrFeature)>,
    rng: ChaCha8Rng,
    log: Vec<LogRow>,
}

impl Trainer {
    /// Fits the normalizer, optionally augments identities, and initializes
    /// the network from `config.seed`.
    pub fn new(
        arch: ArchConfig,
        config: TrainConfig,
        frame: ReferenceFrame,
        triplets: &[Triplet],
    ) -> Result<Self> {
        arch.validate()?;
        config.validate()?;
        if triplets.is_empty() {
            return Err(Error::InvalidArgument("no training triplets".into()));
        }
        for t in triplets {
            for f in [&t.full, &t.identity, &t.expression] {
                if f.reference_id() != frame.id() {
                    return Err(Error::ReferenceMismatch {
                        expected: frame.id().to_owned(),
                        found: f.reference_id().to_owned(),
                    });
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut data: Vec<(DrFeature, DrFeature, DrFeature)> = triplets
            .iter()
            .map(|t| (t.full.clone(), t.identity.clone(), t.expression.clone()))
            .collect();
        if config.augment_count > 0 {
            // distinct identities only; each mixes into a new neutral face
            let mut seen = Vec::new();
            let mut ids: Vec<DrFeature> = Vec::new();
            for t in triplets {
                if !seen.contains(&t.identity_index) {
                    seen.push(t.identity_index);
                    ids.push(t.identity.clone());
                }
            }
            let rest = frame.rest_feature().clone();
            for a in augment_corpus(&ids, config.augment_count, config.augment_sources, &mut rng)? {
                data.push((a.feature.clone(), a.feature, rest.clone()));
            }
        }
        let normalizer = Normalizer::fit(data.iter().flat_map(|(a, b, c)| [a, b, c]))?;
        let network = Network::init(frame.vertex_count(), &arch, &mut rng);
        let model = Model::new(arch, config, normalizer, network, frame)?;
        Ok(Trainer {
            model,
            data,
            rng,
            log: Vec::new(),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    pub fn sample_count(&self) -> usize {
        self.data.len()
    }

    /// Runs one epoch of `stage` and returns its log row.
    pub fn run_epoch(&mut self, stage: Stage, epoch: usize, adam: &mut Adam) -> Result<LogRow> {
        let cfg = self.model.train.clone();
        let lr = cfg.learning_rate_at(epoch);
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut grads = self.model.network.zeros_like();
        let mut acc = Losses::default();
        for chunk in order.chunks(cfg.batch_size) {
            let items: Vec<_> = chunk
                .iter()
                .map(|&i| (&self.data[i].0, &self.data[i].1, &self.data[i].2))
                .collect();
            let batch = Batch::new(&items)?;
            let noise = Noise::sample(batch.size, &self.model.arch, &mut self.rng);
            grads.fill_zero();
            let losses = self
                .model
                .evaluate(&batch, &noise, stage, Some(&mut grads))
                .map_err(|e| with_epoch(e, epoch))?;
            acc.accumulate(&losses, chunk.len() as f64);
            let g: Vec<&[f64]> = grads
                .stage_params(stage)
                .into_iter()
                .map(|p| p.data)
                .collect();
            adam.update(self.model.network.stage_params_mut(stage), g, lr);
        }
        let row = LogRow {
            epoch,
            stage,
            losses: acc.scaled(1.0 / self.data.len() as f64),
            lr,
        };
        if self
            .model
            .network
            .params("")
            .iter()
            .any(|p| p.data.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Diverged {
                stage: stage as u8,
                epoch,
                component: "parameters".into(),
            });
        }
        self.log.push(row);
        Ok(row)
    }

    /// All three stages; `on_epoch` sees every log row as it is produced.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&LogRow)) -> Result<()> {
        for stage in Stage::ALL {
            let cfg = &self.model.train;
            let mut adam = Adam::new(cfg.beta1, cfg.beta2, cfg.adam_eps);
            for epoch in 0..self.model.train.epochs_per_stage {
                let row = self.run_epoch(stage, epoch, &mut adam)?;
                on_epoch(&row);
            }
        }
        Ok(())
    }

    pub fn into_model(self) -> (Model, Vec<LogRow>) {
        (self.model, self.log)
    }
}

fn with_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Diverged {
            stage, component, ..
        } => Error::Diverged {
            stage,
            epoch,
            component,
        },
        other => other,
    }
}
