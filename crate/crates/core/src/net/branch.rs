//! Encoder, decoder and fusion stacks built from the spectral layers.

use ndarray::{s, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;
use crate::spectral::{
    activation_backward, activation_forward, ActTape, ChebConv, ChebTape, Dense, DenseTape,
    ParamRef, Parameters,
};

use super::ArchConfig;

/// Log-variance outputs are clamped to `[-LOGVAR_LIMIT, LOGVAR_LIMIT]`.
pub const LOGVAR_LIMIT: f64 = 10.0;

fn reshape(a: Array2<f64>, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let a = if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    };
    a.into_shape_with_order((rows, cols))
        .map_err(|e| Error::dim(format!("reshape to {rows}x{cols}: {e}")))
}

fn chain<'a>(parts: Vec<(&'a dyn Parameters, &str)>, prefix: &str) -> Vec<ParamRef<'a>> {
    parts
        .into_iter()
        .flat_map(|(p, name)| p.params(&format!("{prefix}{name}.")))
        .collect()
}

/// Graph convolutions, flatten, then dense layers to `(μ, log σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub conv1: ChebConv,
    pub conv2: ChebConv,
    pub fc1: Dense,
    pub fc2: Dense,
}

#[derive(Debug)]
pub struct EncoderTape {
    c1: ChebTape,
    a1: ActTape,
    c2: ChebTape,
    a2: ActTape,
    f1: DenseTape,
    a3: ActTape,
    f2: DenseTape,
    inside: Vec<bool>,
}

impl Encoder {
    pub fn init(n: usize, arch: &ArchConfig, latent: usize, rng: &mut impl Rng) -> Self {
        let (k, w, bias) = (arch.cheb_order, arch.conv_width, arch.conv_bias);
        Encoder {
            conv1: ChebConv::init(crate::deform::FEATURE_DIM, w, k, bias, rng),
            conv2: ChebConv::init(w, w, k, bias, rng),
            fc1: Dense::init(n * w, arch.dense_width, rng),
            fc2: Dense::init(arch.dense_width, 2 * latent, rng),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.fc2.out_features() / 2
    }

    /// `x` is `(B*n) x 9`; returns `B x L` mean and clamped log-variance.
    pub fn forward(
        &self,
        x: &Array2<f64>,
        lt: &SparseMatrix,
    ) -> Result<(Array2<f64>, Array2<f64>, EncoderTape)> {
        let n = lt.dim();
        let b = x.nrows() / n.max(1);
        let (h, c1) = self.conv1.forward(x, lt)?;
        let (h, a1) = activation_forward(h);
        let (h, c2) = self.conv2.forward(&h, lt)?;
        let (h, a2) = activation_forward(h);
        let w = h.ncols();
        let (h, f1) = self.fc1.forward(reshape(h, b, n * w)?)?;
        let (h, a3) = activation_forward(h);
        let (out, f2) = self.fc2.forward(h)?;
        let l = self.latent_dim();
        let mu = out.slice(s![.., ..l]).to_owned();
        let raw = out.slice(s![.., l..]);
        let inside = raw.iter().map(|v| v.abs() < LOGVAR_LIMIT).collect();
        let logvar = raw.mapv(|v| v.clamp(-LOGVAR_LIMIT, LOGVAR_LIMIT));
        let tape = EncoderTape {
            c1,
            a1,
            c2,
            a2,
            f1,
            a3,
            f2,
            inside,
        };
        Ok((mu, logvar, tape))
    }

    /// Accumulates parameter gradients into `grads`; returns `dL/dx`.
    pub fn backward(
        &self,
        tape: EncoderTape,
        dmu: &Array2<f64>,
        dlogvar: &Array2<f64>,
        lt: &SparseMatrix,
        grads: &mut Encoder,
    ) -> Result<Array2<f64>> {
        let n = lt.dim();
        let (b, l) = dmu.dim();
        let mut dout = Array2::zeros((b, 2 * l));
        dout.slice_mut(s![.., ..l]).assign(dmu);
        let mut dlv = dlogvar.clone();
        for (g, &inside) in dlv.iter_mut().zip(&tape.inside) {
            if !inside {
                *g = 0.0;
            }
        }
        dout.slice_mut(s![.., l..]).assign(&dlv);
        let g = self.fc2.backward(tape.f2, &dout);
        g.accumulate_into(&mut grads.fc2);
        let d = activation_backward(tape.a3, g.input);
        let g = self.fc1.backward(tape.f1, &d);
        g.accumulate_into(&mut grads.fc1);
        let w = self.conv2.out_features();
        let d = activation_backward(tape.a2, reshape(g.input, b * n, w)?);
        let g = self.conv2.backward(tape.c2, &d, lt);
        g.accumulate_into(&mut grads.conv2);
        let d = activation_backward(tape.a1, g.input);
        let g = self.conv1.backward(tape.c1, &d, lt);
        g.accumulate_into(&mut grads.conv1);
        Ok(g.input)
    }
}

impl Parameters for Encoder {
    fn params(&self, prefix: &str) -> Vec<ParamRef<'_>> {
        chain(
            vec![
                (&self.conv1, "conv1"),
                (&self.conv2, "conv2"),
                (&self.fc1, "fc1"),
                (&self.fc2, "fc2"),
            ],
            prefix,
        )
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.conv1.params_mut();
        out.extend(self.conv2.params_mut());
        out.extend(self.fc1.params_mut());
        out.extend(self.fc2.params_mut());
        out
    }
}

/// Dense layers from the latent code, reshape, then graph convolutions to `n x 9`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub fc1: Dense,
    pub fc2: Dense,
    pub conv1: ChebConv,
    pub conv2: ChebConv,
}

#[derive(Debug)]
pub struct DecoderTape {
    f1: DenseTape,
    a1: ActTape,
    f2: DenseTape,
    a2: ActTape,
    c1: ChebTape,
    a3: ActTape,
    c2: ChebTape,
}

impl Decoder {
    pub fn init(n: usize, arch: &ArchConfig, latent: usize, rng: &mut impl Rng) -> Self {
        let (k, w, bias) = (arch.cheb_order, arch.conv_width, arch.conv_bias);
        Decoder {
            fc1: Dense::init(latent, arch.dense_width, rng),
            fc2: Dense::init(arch.dense_width, n * w, rng),
            conv1: ChebConv::init(w, w, k, bias, rng),
            conv2: ChebConv::init(w, crate::deform::FEATURE_DIM, k, bias, rng),
        }
    }

    /// `z` is `B x L`; returns the normalized `(B*n) x 9` feature.
    pub fn forward(&self, z: Array2<f64>, lt: &SparseMatrix) -> Result<(Array2<f64>, DecoderTape)> {
        let n = lt.dim();
        let b = z.nrows();
        let (h, f1) = self.fc1.forward(z)?;
        let (h, a1) = activation_forward(h);
        let (h, f2) = self.fc2.forward(h)?;
        let (h, a2) = activation_forward(h);
        let w = self.conv1.in_features();
        let (h, c1) = self.conv1.forward(&reshape(h, b * n, w)?, lt)?;
        let (h, a3) = activation_forward(h);
        let (y, c2) = self.conv2.forward(&h, lt)?;
        Ok((
            y,
            DecoderTape {
                f1,
                a1,
                f2,
                a2,
                c1,
                a3,
                c2,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads`; returns `dL/dz`.
    pub fn backward(
        &self,
        tape: DecoderTape,
        dy: &Array2<f64>,
        lt: &SparseMatrix,
        grads: &mut Decoder,
    ) -> Result<Array2<f64>> {
        let n = lt.dim();
        let b = dy.nrows() / n.max(1);
        let g = self.conv2.backward(tape.c2, dy, lt);
        g.accumulate_into(&mut grads.conv2);
        let d = activation_backward(tape.a3, g.input);
        let g = self.conv1.backward(tape.c1, &d, lt);
        g.accumulate_into(&mut grads.conv1);
        let w = self.conv1.in_features();
        let d = activation_backward(tape.a2, reshape(g.input, b, n * w)?);
        let g = self.fc2.backward(tape.f2, &d);
        g.accumulate_into(&mut grads.fc2);
        let d = activation_backward(tape.a1, g.input);
        let g = self.fc1.backward(tape.f1, &d);
        g.accumulate_into(&mut grads.fc1);
        Ok(g.input)
    }
}

impl Parameters for Decoder {
    fn params(&self, prefix: &str) -> Vec<ParamRef<'_>> {
        chain(
            vec![
                (&self.fc1, "fc1"),
                (&self.fc2, "fc2"),
                (&self.conv1, "conv1"),
                (&self.conv2, "conv2"),
            ],
            prefix,
        )
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.fc1.params_mut();
        out.extend(self.fc2.params_mut());
        out.extend(self.conv1.params_mut());
        out.extend(self.conv2.params_mut());
        out
    }
}

/// One variational decomposition branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Branch {
    pub fn init(n: usize, arch: &ArchConfig, latent: usize, rng: &mut impl Rng) -> Self {
        Branch {
            encoder: Encoder::init(n, arch, latent, rng),
            decoder: Decoder::init(n, arch, latent, rng),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.latent_dim()
    }
}

impl Parameters for Branch {
    fn params(&self, prefix: &str) -> Vec<ParamRef<'_>> {
        chain(vec![(&self.encoder, "enc"), (&self.decoder, "dec")], prefix)
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.params_mut();
        out.extend(self.decoder.params_mut());
        out
    }
}

/// Graph convolutions from concatenated `n x 18` to `n x 9`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fusion {
    pub conv1: ChebConv,
    pub conv2: ChebConv,
    pub conv3: ChebConv,
}

#[derive(Debug)]
pub struct FusionTape {
    c1: ChebTape,
    a1: ActTape,
    c2: ChebTape,
    a2: ActTape,
    c3: ChebTape,
}

impl Fusion {
    pub fn init(arch: &ArchConfig, rng: &mut impl Rng) -> Self {
        let (k, w, bias) = (arch.cheb_order, arch.conv_width, arch.conv_bias);
        let d = crate::deform::FEATURE_DIM;
        Fusion {
            conv1: ChebConv::init(2 * d, w, k, bias, rng),
            conv2: ChebConv::init(w, w, k, bias, rng),
            conv3: ChebConv::init(w, d, k, bias, rng),
        }
    }

    pub fn forward(&self, x: &Array2<f64>, lt: &SparseMatrix) -> Result<(Array2<f64>, FusionTape)> {
        let (h, c1) = self.conv1.forward(x, lt)?;
        let (h, a1) = activation_forward(h);
        let (h, c2) = self.conv2.forward(&h, lt)?;
        let (h, a2) = activation_forward(h);
        let (y, c3) = self.conv3.forward(&h, lt)?;
        Ok((y, FusionTape { c1, a1, c2, a2, c3 }))
    }

    pub fn backward(
        &self,
        tape: FusionTape,
        dy: &Array2<f64>,
        lt: &SparseMatrix,
        grads: &mut Fusion,
    ) -> Array2<f64> {
        let g = self.conv3.backward(tape.c3, dy, lt);
        g.accumulate_into(&mut grads.conv3);
        let d = activation_backward(tape.a2, g.input);
        let g = self.conv2.backward(tape.c2, &d, lt);
        g.accumulate_into(&mut grads.conv2);
        let d = activation_backward(tape.a1, g.input);
        let g = self.conv1.backward(tape.c1, &d, lt);
        g.accumulate_into(&mut grads.conv1);
        g.input
    }
}

impl Parameters for Fusion {
    fn params(&self, prefix: &str) -> Vec<ParamRef<'_>> {
        chain(
            vec![
                (&self.conv1, "conv1"),
                (&self.conv2, "conv2"),
                (&self.conv3, "conv3"),
            ],
            prefix,
        )
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.conv1.params_mut();
        out.extend(self.conv2.params_mut());
        out.extend(self.conv3.params_mut());
        out
    }
}
