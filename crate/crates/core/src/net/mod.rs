//! Identity and expression branches, the fusion network, their losses and
//! the inference-time operations built on a trained model.

mod apply;
mod branch;
mod io;
mod train;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::deform::{DrFeature, ReferenceFrame, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::mesh::{normalized_laplacian, scaled_laplacian, DEFAULT_LAMBDA_MAX};
use crate::sparse::SparseMatrix;
use crate::spectral::{ParamRef, Parameters};

pub use apply::{stride_steps, Decomposition, InterpolationGrid};
pub use branch::{Branch, Decoder, Encoder, Fusion, LOGVAR_LIMIT};
pub use io::{load_model, save_model};
pub use train::{Adam, LogRow, Stage, TrainConfig, Trainer, LOG_HEADER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub cheb_order: usize,
    pub conv_width: usize,
    pub dense_width: usize,
    pub latent_id: usize,
    pub latent_exp: usize,
    pub conv_bias: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            cheb_order: 2,
            conv_width: 32,
            dense_width: 128,
            latent_id: 50,
            latent_exp: 25,
            conv_bias: true,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("cheb_order", self.cheb_order),
            ("conv_width", self.conv_width),
            ("dense_width", self.dense_width),
            ("latent_id", self.latent_id),
            ("latent_exp", self.latent_exp),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Per-channel standardization of DR features.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

/// Channels whose spread falls below this are not amplified further.
pub const MIN_CHANNEL_STD: f64 = 1e-4;

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer {
            mean: Array1::zeros(FEATURE_DIM),
            std: Array1::ones(FEATURE_DIM),
        }
    }

    pub fn fit<'a>(features: impl IntoIterator<Item = &'a DrFeature>) -> Result<Self> {
        let mut sum = Array1::<f64>::zeros(FEATURE_DIM);
        let mut sq = Array1::<f64>::zeros(FEATURE_DIM);
        let mut count = 0usize;
        for f in features {
            for row in f.values().rows() {
                sum += &row;
                sq += &row.mapv(|x| x * x);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::InvalidArgument("no features to normalize".into()));
        }
        let mean = sum / count as f64;
        let var = sq / count as f64 - mean.mapv(|m| m * m);
        let std = var.mapv(|v| v.max(0.0).sqrt().max(MIN_CHANNEL_STD));
        Ok(Normalizer { mean, std })
    }

    pub fn normalize(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.std
    }

    pub fn denormalize(&self, y: &Array2<f64>) -> Array2<f64> {
        y * &self.std + &self.mean
    }
}

/// All trainable tensors. Also used as the gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub identity: Branch,
    pub expression: Branch,
    pub fusion: Fusion,
}

impl Network {
    pub fn init(n: usize, arch: &ArchConfig, rng: &mut impl Rng) -> Self {
        Network {
            identity: Branch::init(n, arch, arch.latent_id, rng),
            expression: Branch::init(n, arch, arch.latent_exp, rng),
            fusion: Fusion::init(arch, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    /// Tensors updated in `stage`, in a stable order.
    pub fn stage_params_mut(&mut self, stage: Stage) -> Vec<&mut [f64]> {
        match stage {
            Stage::Decompose => {
                let mut v = self.identity.params_mut();
                v.extend(self.expression.params_mut());
                v
            }
            Stage::Fuse => self.fusion.params_mut(),
            Stage::Joint => self.params_mut(),
        }
    }

    pub fn stage_params(&self, stage: Stage) -> Vec<ParamRef<'_>> {
        match stage {
            Stage::Decompose => {
                let mut v = self.identity.params("identity.");
                v.extend(self.expression.params("expression."));
                v
            }
            Stage::Fuse => self.fusion.params("fusion."),
            Stage::Joint => self.params(""),
        }
    }
}

impl Parameters for Network {
    fn params(&self, prefix: &str) -> Vec<ParamRef<'_>> {
        let mut v = self.identity.params(&format!("{prefix}identity."));
        v.extend(self.expression.params(&format!("{prefix}expression.")));
        v.extend(self.fusion.params(&format!("{prefix}fusion.")));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.identity.params_mut();
        v.extend(self.expression.params_mut());
        v.extend(self.fusion.params_mut());
        v
    }
}

/// Stacked raw DR features of a batch, each `(B*n) x 9`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub full: Array2<f64>,
    pub identity: Array2<f64>,
    pub expression: Array2<f64>,
    pub size: usize,
}

impl Batch {
    pub fn new(items: &[(&DrFeature, &DrFeature, &DrFeature)]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let stack = |k: usize| {
            let views: Vec<_> = items
                .iter()
                .map(|t| [t.0, t.1, t.2][k].values().view())
                .collect();
            concatenate(Axis(0), &views).map_err(|e| Error::dim(e.to_string()))
        };
        Ok(Batch {
            full: stack(0)?,
            identity: stack(1)?,
            expression: stack(2)?,
            size: items.len(),
        })
    }
}

/// Standard-normal draws for every reparameterization in one evaluation.
#[derive(Debug, Clone)]
pub struct Noise {
    pub identity: Array2<f64>,
    pub expression: Array2<f64>,
    /// Used when the expression branch re-encodes the identity output.
    pub cross_expression: Array2<f64>,
    /// Used when the identity branch re-encodes the expression output.
    pub cross_identity: Array2<f64>,
}

impl Noise {
    /// Evaluation mode: `z = μ`.
    pub fn zeros(batch: usize, arch: &ArchConfig) -> Self {
        Noise {
            identity: Array2::zeros((batch, arch.latent_id)),
            expression: Array2::zeros((batch, arch.latent_exp)),
            cross_expression: Array2::zeros((batch, arch.latent_exp)),
            cross_identity: Array2::zeros((batch, arch.latent_id)),
        }
    }

    pub fn sample(batch: usize, arch: &ArchConfig, rng: &mut impl Rng) -> Self {
        let mut draw = |cols: usize| {
            Array2::from_shape_simple_fn((batch, cols), || rng.sample::<f64, _>(StandardNormal))
        };
        Noise {
            identity: draw(arch.latent_id),
            expression: draw(arch.latent_exp),
            cross_expression: draw(arch.latent_exp),
            cross_identity: draw(arch.latent_id),
        }
    }
}

/// `z = μ + exp(½ log σ²) ⊙ ε`.
pub fn reparameterize_with(
    mu: &Array2<f64>,
    logvar: &Array2<f64>,
    eps: &Array2<f64>,
) -> Array2<f64> {
    mu + &(logvar.mapv(|v| (0.5 * v).exp()) * eps)
}

/// Samples one latent vector.
pub fn reparameterize(mu: &Array1<f64>, logvar: &Array1<f64>, rng: &mut impl Rng) -> Array1<f64> {
    let eps = Array1::from_shape_simple_fn(mu.len(), || rng.sample::<f64, _>(StandardNormal));
    mu + &(logvar.mapv(|v| (0.5 * v).exp()) * eps)
}

/// `KL(N(μ, σ²) ‖ N(0, 1))` per row, summed over latent dimensions.
pub fn kl_divergence(mu: &Array2<f64>, logvar: &Array2<f64>) -> Array1<f64> {
    let terms = mu.mapv(|m| m * m) + logvar.mapv(f64::exp) - logvar - 1.0;
    terms.sum_axis(Axis(1)) * 0.5
}

/// Gradient of `z` with respect to log-variance, times upstream `dz`.
fn logvar_grad(dz: &Array2<f64>, logvar: &Array2<f64>, eps: &Array2<f64>) -> Array2<f64> {
    dz * eps * &logvar.mapv(|v| 0.5 * (0.5 * v).exp())
}

/// Loss components of one evaluation; terms a stage does not compute are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    /// The objective of the evaluated stage.
    pub total: f64,
    pub rec: Option<f64>,
    pub dis: Option<f64>,
    pub id: Option<f64>,
    pub exp: Option<f64>,
    pub id_kld: Option<f64>,
    pub exp_kld: Option<f64>,
}

impl Losses {
    fn check(&self, stage: Stage) -> Result<()> {
        let parts = [
            ("L_total", Some(self.total)),
            ("L_rec", self.rec),
            ("L_dis", self.dis),
            ("L_id", self.id),
            ("L_exp", self.exp),
            ("L_id_kld", self.id_kld),
            ("L_exp_kld", self.exp_kld),
        ];
        for (name, v) in parts {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::Diverged {
                        stage: stage as u8,
                        epoch: 0,
                        component: name.into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// A network together with everything needed to run it on meshes.
#[derive(Debug, Clone)]
pub struct Model {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub normalizer: Normalizer,
    pub network: Network,
    frame: ReferenceFrame,
    lt: SparseMatrix,
    rest: Array2<f64>,
}

/// Scaled normalized Laplacian of the reference connectivity.
pub fn reference_laplacian(frame: &ReferenceFrame) -> Result<SparseMatrix> {
    scaled_laplacian(&normalized_laplacian(frame.mesh())?, DEFAULT_LAMBDA_MAX)
}

impl Model {
    pub fn new(
        arch: ArchConfig,
        train: TrainConfig,
        normalizer: Normalizer,
        network: Network,
        frame: ReferenceFrame,
    ) -> Result<Self> {
        arch.validate()?;
        let lt = reference_laplacian(&frame)?;
        let rest = frame.rest_feature().values().clone();
        let n = frame.vertex_count();
        let expected_flat = n * arch.conv_width;
        if network.identity.encoder.fc1.in_features() != expected_flat
            || network.identity.latent_dim() != arch.latent_id
            || network.expression.latent_dim() != arch.latent_exp
        {
            return Err(Error::dim(
                "network shapes do not match the architecture and reference",
            ));
        }
        Ok(Model {
            arch,
            train,
            normalizer,
            network,
            frame,
            lt,
            rest,
        })
    }

    pub fn frame(&self) -> &ReferenceFrame {
        &self.frame
    }

    pub fn laplacian(&self) -> &SparseMatrix {
        &self.lt
    }

    pub fn vertex_count(&self) -> usize {
        self.frame.vertex_count()
    }

    /// Features of the mean neutral face.
    pub fn rest(&self) -> &Array2<f64> {
        &self.rest
    }

    /// Mean absolute error of `denormalize(y)` against `target` over all
    /// entries, and its gradient with respect to `y`.
    fn l1(&self, y: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
        let diff = self.normalizer.denormalize(y) - target;
        let count = diff.len() as f64;
        let value = diff.iter().map(|d| d.abs()).sum::<f64>() / count;
        let mut grad = diff.mapv(|d| {
            if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            }
        });
        grad *= &(&self.normalizer.std / count);
        (value, grad)
    }

    fn check_feature(&self, f: &DrFeature) -> Result<()> {
        if f.reference_id() != self.frame.id() {
            return Err(Error::ReferenceMismatch {
                expected: self.frame.id().to_owned(),
                found: f.reference_id().to_owned(),
            });
        }
        if f.vertex_count() != self.vertex_count() {
            return Err(Error::dim(format!(
                "feature has {} vertices, model expects {}",
                f.vertex_count(),
                self.vertex_count()
            )));
        }
        Ok(())
    }

    /// Losses of `stage` on one batch. When `grads` is given, the gradient of
    /// the stage objective with respect to the stage's trainable tensors is
    /// added into it.
    pub fn evaluate(
        &self,
        batch: &Batch,
        noise: &Noise,
        stage: Stage,
        grads: Option<&mut Network>,
    ) -> Result<Losses> {
        let lt = &self.lt;
        let net = &self.network;
        let b = batch.size;
        let n = self.vertex_count();
        if batch.full.nrows() != b * n {
            return Err(Error::dim(format!(
                "batch of {b} needs {} rows, got {}",
                b * n,
                batch.full.nrows()
            )));
        }
        let (a_id, a_exp) = (self.train.id_kld_weight, self.train.exp_kld_weight);
        let x = self.normalizer.normalize(&batch.full);

        let (mu_i, lv_i, enc_i) = net.identity.encoder.forward(&x, lt)?;
        let z_i = reparameterize_with(&mu_i, &lv_i, &noise.identity);
        let (y_i, dec_i) = net.identity.decoder.forward(z_i, lt)?;
        let (mu_e, lv_e, enc_e) = net.expression.encoder.forward(&x, lt)?;
        let z_e = reparameterize_with(&mu_e, &lv_e, &noise.expression);
        let (y_e, dec_e) = net.expression.decoder.forward(z_e, lt)?;

        let mut losses = Losses::default();
        let mut dy_i = Array2::zeros(y_i.raw_dim());
        let mut dy_e = Array2::zeros(y_e.raw_dim());
        let mut dmu_i = Array2::zeros(mu_i.raw_dim());
        let mut dlv_i = Array2::zeros(lv_i.raw_dim());
        let mut dmu_e = Array2::zeros(mu_e.raw_dim());
        let mut dlv_e = Array2::zeros(lv_e.raw_dim());

        if stage != Stage::Fuse {
            let (l, g) = self.l1(&y_i, &batch.identity);
            losses.id = Some(l);
            dy_i += &g;
            let (l, g) = self.l1(&y_e, &batch.expression);
            losses.exp = Some(l);
            dy_e += &g;
            let kl_i = kl_divergence(&mu_i, &lv_i).mean().unwrap_or(0.0);
            let kl_e = kl_divergence(&mu_e, &lv_e).mean().unwrap_or(0.0);
            losses.id_kld = Some(kl_i);
            losses.exp_kld = Some(kl_e);
            let bf = b as f64;
            dmu_i.scaled_add(a_id / bf, &mu_i);
            dlv_i.scaled_add(a_id / bf, &lv_i.mapv(|v| 0.5 * (v.exp() - 1.0)));
            dmu_e.scaled_add(a_exp / bf, &mu_e);
            dlv_e.scaled_add(a_exp / bf, &lv_e.mapv(|v| 0.5 * (v.exp() - 1.0)));
        }

        let mut fusion_tape = None;
        if stage != Stage::Decompose {
            let cat = concatenate(Axis(1), &[y_i.view(), y_e.view()])
                .map_err(|e| Error::dim(e.to_string()))?;
            let (y_f, tape) = net.fusion.forward(&cat, lt)?;
            let (l, g) = self.l1(&y_f, &batch.full);
            losses.rec = Some(l);
            fusion_tape = Some((tape, g));
        }

        let mut cross = None;
        if stage == Stage::Joint {
            let rest = tile(&self.rest, b);
            // expression branch fed the identity output should give the mean face
            let (mu_a, lv_a, enc_a) = net.expression.encoder.forward(&y_i, lt)?;
            let z_a = reparameterize_with(&mu_a, &lv_a, &noise.cross_expression);
            let (y_a, dec_a) = net.expression.decoder.forward(z_a, lt)?;
            let (l_a, g_a) = self.l1(&y_a, &rest);
            let (mu_b, lv_b, enc_b) = net.identity.encoder.forward(&y_e, lt)?;
            let z_b = reparameterize_with(&mu_b, &lv_b, &noise.cross_identity);
            let (y_b, dec_b) = net.identity.decoder.forward(z_b, lt)?;
            let (l_b, g_b) = self.l1(&y_b, &rest);
            losses.dis = Some(l_a + l_b);
            cross = Some((lv_a, enc_a, dec_a, g_a, lv_b, enc_b, dec_b, g_b));
        }

        losses.total = match stage {
            Stage::Decompose => {
                losses.id.unwrap_or(0.0)
                    + losses.exp.unwrap_or(0.0)
                    + a_id * losses.id_kld.unwrap_or(0.0)
                    + a_exp * losses.exp_kld.unwrap_or(0.0)
            }
            Stage::Fuse => losses.rec.unwrap_or(0.0),
            Stage::Joint => {
                losses.rec.unwrap_or(0.0)
                    + losses.dis.unwrap_or(0.0)
                    + losses.id.unwrap_or(0.0)
                    + losses.exp.unwrap_or(0.0)
                    + a_id * losses.id_kld.unwrap_or(0.0)
                    + a_exp * losses.exp_kld.unwrap_or(0.0)
            }
        };
        losses.check(stage)?;

        let Some(grads) = grads else {
            return Ok(losses);
        };

        if let Some((tape, g)) = fusion_tape {
            let dcat = net.fusion.backward(tape, &g, lt, &mut grads.fusion);
            if stage == Stage::Fuse {
                return Ok(losses);
            }
            dy_i += &dcat.slice(s![.., ..FEATURE_DIM]);
            dy_e += &dcat.slice(s![.., FEATURE_DIM..]);
        }

        if let Some((lv_a, enc_a, dec_a, g_a, lv_b, enc_b, dec_b, g_b)) = cross {
            let dz =
                net.expression
                    .decoder
                    .backward(dec_a, &g_a, lt, &mut grads.expression.decoder)?;
            let dlv = logvar_grad(&dz, &lv_a, &noise.cross_expression);
            dy_i += &net.expression.encoder.backward(
                enc_a,
                &dz,
                &dlv,
                lt,
                &mut grads.expression.encoder,
            )?;
            let dz = net
                .identity
                .decoder
                .backward(dec_b, &g_b, lt, &mut grads.identity.decoder)?;
            let dlv = logvar_grad(&dz, &lv_b, &noise.cross_identity);
            dy_e += &net.identity.encoder.backward(
                enc_b,
                &dz,
                &dlv,
                lt,
                &mut grads.identity.encoder,
            )?;
        }

        let dz = net
            .identity
            .decoder
            .backward(dec_i, &dy_i, lt, &mut grads.identity.decoder)?;
        dmu_i += &dz;
        dlv_i += &logvar_grad(&dz, &lv_i, &noise.identity);
        net.identity
            .encoder
            .backward(enc_i, &dmu_i, &dlv_i, lt, &mut grads.identity.encoder)?;
        let dz =
            net.expression
                .decoder
                .backward(dec_e, &dy_e, lt, &mut grads.expression.decoder)?;
        dmu_e += &dz;
        dlv_e += &logvar_grad(&dz, &lv_e, &noise.expression);
        net.expression.encoder.backward(
            enc_e,
            &dmu_e,
            &dlv_e,
            lt,
            &mut grads.expression.encoder,
        )?;
        Ok(losses)
    }

    fn single(&self, f: &DrFeature) -> Result<Array2<f64>> {
        self.check_feature(f)?;
        Ok(self.normalizer.normalize(f.values()))
    }

    fn wrap(&self, y: &Array2<f64>) -> Result<DrFeature> {
        DrFeature::new(self.normalizer.denormalize(y), self.frame.id())
    }

    fn encode_with(&self, branch: &Branch, f: &DrFeature) -> Result<(Array1<f64>, Array1<f64>)> {
        let (mu, lv, _) = branch.encoder.forward(&self.single(f)?, &self.lt)?;
        Ok((mu.row(0).to_owned(), lv.row(0).to_owned()))
    }

    fn decode_with(&self, branch: &Branch, z: &Array1<f64>) -> Result<DrFeature> {
        if z.len() != branch.latent_dim() {
            return Err(Error::dim(format!(
                "latent code has {} entries, branch expects {}",
                z.len(),
                branch.latent_dim()
            )));
        }
        let z = z.clone().insert_axis(Axis(0));
        let (y, _) = branch.decoder.forward(z, &self.lt)?;
        self.wrap(&y)
    }

    /// `(μ, log σ²)` of the identity code.
    pub fn encode_identity(&self, f: &DrFeature) -> Result<(Array1<f64>, Array1<f64>)> {
        self.encode_with(&self.network.identity, f)
    }

    pub fn encode_expression(&self, f: &DrFeature) -> Result<(Array1<f64>, Array1<f64>)> {
        self.encode_with(&self.network.expression, f)
    }

    /// Identity feature decoded from an identity code, in DR units.
    pub fn decode_identity(&self, z: &Array1<f64>) -> Result<DrFeature> {
        self.decode_with(&self.network.identity, z)
    }

    pub fn decode_expression(&self, z: &Array1<f64>) -> Result<DrFeature> {
        self.decode_with(&self.network.expression, z)
    }

    /// Fusion of an identity and an expression feature (identity first).
    pub fn fuse(&self, identity: &DrFeature, expression: &DrFeature) -> Result<DrFeature> {
        let a = self.single(identity)?;
        let b = self.single(expression)?;
        let cat =
            concatenate(Axis(1), &[a.view(), b.view()]).map_err(|e| Error::dim(e.to_string()))?;
        let (y, _) = self.network.fusion.forward(&cat, &self.lt)?;
        self.wrap(&y)
    }

    /// Evaluation-mode `L_total` and components averaged over `triplets`.
    pub fn mean_losses(
        &self,
        triplets: &[(&DrFeature, &DrFeature, &DrFeature)],
        stage: Stage,
    ) -> Result<Losses> {
        let mut acc = Losses::default();
        let mut count = 0usize;
        for chunk in triplets.chunks(self.train.batch_size.max(1)) {
            let batch = Batch::new(chunk)?;
            let l = self.evaluate(&batch, &Noise::zeros(batch.size, &self.arch), stage, None)?;
            acc.accumulate(&l, chunk.len() as f64);
            count += chunk.len();
        }
        Ok(acc.scaled(1.0 / count.max(1) as f64))
    }
}

impl Losses {
    pub(crate) fn accumulate(&mut self, other: &Losses, weight: f64) {
        let add = |a: &mut Option<f64>, b: Option<f64>| {
            if let Some(b) = b {
                *a = Some(a.unwrap_or(0.0) + weight * b);
            }
        };
        self.total += weight * other.total;
        add(&mut self.rec, other.rec);
        add(&mut self.dis, other.dis);
        add(&mut self.id, other.id);
        add(&mut self.exp, other.exp);
        add(&mut self.id_kld, other.id_kld);
        add(&mut self.exp_kld, other.exp_kld);
    }

    pub(crate) fn scaled(mut self, s: f64) -> Losses {
        self.total *= s;
        for v in [
            &mut self.rec,
            &mut self.dis,
            &mut self.id,
            &mut self.exp,
            &mut self.id_kld,
            &mut self.exp_kld,
        ] {
            if let Some(x) = v {
                *x *= s;
            }
        }
        self
    }
}

fn tile(a: &Array2<f64>, times: usize) -> Array2<f64> {
    let views: Vec<_> = (0..times).map(|_| a.view()).collect();
    concatenate(Axis(0), &views).expect("identical shapes")
}
