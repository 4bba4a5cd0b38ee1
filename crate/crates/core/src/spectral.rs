//! Chebyshev spectral graph convolution, dense layers and the leaky
//! rectifier, each with a hand-derived backward pass.
//!
//! Graph activations for a batch of `B` samples on an `n`-vertex graph are
//! stacked as `(B*n) x F` matrices, sample-major, so one GEMM covers the
//! whole batch. Dense activations are `B x F`.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Negative-side slope of the leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.1;

/// A named view of one parameter tensor.
pub struct ParamRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// Uniform access to trainable tensors. `params` and `params_mut` must
/// enumerate tensors in the same order.
pub trait Parameters {
    fn params(&self, prefix: &str) -> Vec<ParamRef<'_>>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.params("").iter().map(|p| p.data.len()).sum()
    }

    fn fill_zero(&mut self) {
        for t in self.params_mut() {
            t.fill(0.0);
        }
    }

    /// `self += scale * other`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        let src: Vec<Vec<f64>> = other
            .params("")
            .into_iter()
            .map(|p| p.data.to_vec())
            .collect();
        for (dst, s) in self.params_mut().into_iter().zip(src) {
            dst.iter_mut().zip(s).for_each(|(d, v)| *d += scale * v);
        }
    }
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameters are contiguous")
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are contiguous")
}

fn uniform(rows: usize, cols: usize, limit: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..=limit))
}

/// `Y = Σ_k T_k(L̃) X Θ_k + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebConv {
    pub theta: Vec<Array2<f64>>,
    pub bias: Option<Array1<f64>>,
}

/// Chebyshev basis terms `X_k` cached by the forward pass.
#[derive(Debug)]
pub struct ChebTape {
    basis: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct ChebGrads {
    pub input: Array2<f64>,
    pub theta: Vec<Array2<f64>>,
    pub bias: Option<Array1<f64>>,
}

impl ChebConv {
    pub fn zeros(f_in: usize, f_out: usize, order: usize, bias: bool) -> Self {
        assert!(order >= 1, "Chebyshev order must be at least 1");
        ChebConv {
            theta: (0..order).map(|_| Array2::zeros((f_in, f_out))).collect(),
            bias: bias.then(|| Array1::zeros(f_out)),
        }
    }

    /// Uniform in ±√(6 / (F_in·K + F_out)), zero bias.
    pub fn init(f_in: usize, f_out: usize, order: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (f_in * order + f_out) as f64).sqrt();
        ChebConv {
            theta: (0..order)
                .map(|_| uniform(f_in, f_out, limit, rng))
                .collect(),
            bias: bias.then(|| Array1::zeros(f_out)),
        }
    }

    pub fn order(&self) -> usize {
        self.theta.len()
    }

    pub fn in_features(&self) -> usize {
        self.theta[0].nrows()
    }

    pub fn out_features(&self) -> usize {
        self.theta[0].ncols()
    }

    pub fn forward(&self, x: &Array2<f64>, lt: &SparseMatrix) -> Result<(Array2<f64>, ChebTape)> {
        let n = lt.dim();
        if x.ncols() != self.in_features() || n == 0 || x.nrows() % n != 0 {
            return Err(Error::dim(format!(
                "cheb conv expects (B*{n}) x {}, got {:?}",
                self.in_features(),
                x.dim()
            )));
        }
        let mut basis = Vec::with_capacity(self.order());
        basis.push(x.clone());
        if self.order() > 1 {
            basis.push(lt.mul_blocks(x.view()));
        }
        for k in 2..self.order() {
            let mut next = lt.mul_blocks(basis[k - 1].view());
            next *= 2.0;
            next -= &basis[k - 2];
            basis.push(next);
        }
        let mut y = basis[0].dot(&self.theta[0]);
        for (xk, th) in basis.iter().zip(&self.theta).skip(1) {
            ndarray::linalg::general_mat_mul(1.0, xk, th, 1.0, &mut y);
        }
        if let Some(b) = &self.bias {
            y += b;
        }
        Ok((y, ChebTape { basis }))
    }

    /// Consumes the tape: one backward per forward.
    pub fn backward(&self, tape: ChebTape, dy: &Array2<f64>, lt: &SparseMatrix) -> ChebGrads {
        let k_max = self.order();
        let theta: Vec<Array2<f64>> = tape.basis.iter().map(|xk| xk.t().dot(dy)).collect();
        let bias = self.bias.as_ref().map(|_| dy.sum_axis(Axis(0)));
        // adjoint of the three-term recurrence; L̃ is symmetric
        let mut g: Vec<Array2<f64>> = self.theta.iter().map(|th| dy.dot(&th.t())).collect();
        for k in (2..k_max).rev() {
            let gk = std::mem::take(&mut g[k]);
            let lg = lt.mul_blocks(gk.view());
            g[k - 1].scaled_add(2.0, &lg);
            g[k - 2] -= &gk;
        }
        if k_max > 1 {
            let g1 = std::mem::take(&mut g[1]);
            g[0] += &lt.mul_blocks(g1.view());
        }
        ChebGrads {
            input: g.swap_remove(0),
            theta,
            bias,
        }
    }
}

impl ChebGrads {
    pub fn accumulate_into(&self, target: &mut ChebConv) {
        for (t, g) in target.theta.iter_mut().zip(&self.theta) {
            *t += g;
        }
        if let (Some(t), Some(g)) = (target.bias.as_mut(), self.bias.as_ref()) {
            *t += g;
        }
    }
}

impl Parameters for ChebConv {
    fn params(&self, prefix: &str) -> Vec<ParamRef<'_>> {
        let mut out: Vec<ParamRef<'_>> = self
            .theta
            .iter()
            .enumerate()
            .map(|(k, t)| ParamRef {
                name: format!("{prefix}theta{k}"),
                shape: t.shape().to_vec(),
                data: slice2(t),
            })
            .collect();
        if let Some(b) = &self.bias {
            out.push(ParamRef {
                name: format!("{prefix}bias"),
                shape: vec![b.len()],
                data: slice1(b),
            });
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self
            .theta
            .iter_mut()
            .map(|t| t.as_slice_mut().unwrap())
            .collect();
        if let Some(b) = &mut self.bias {
            out.push(b.as_slice_mut().unwrap());
        }
        out
    }
}

/// `Y = X W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug)]
pub struct DenseTape {
    input: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Array2<f64>,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(f_in: usize, f_out: usize) -> Self {
        Dense {
            weight: Array2::zeros((f_in, f_out)),
            bias: Array1::zeros(f_out),
        }
    }

    /// Uniform in ±√(6 / (F_in + F_out)), zero bias.
    pub fn init(f_in: usize, f_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (f_in + f_out) as f64).sqrt();
        Dense {
            weight: uniform(f_in, f_out, limit, rng),
            bias: Array1::zeros(f_out),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_features(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: Array2<f64>) -> Result<(Array2<f64>, DenseTape)> {
        if x.ncols() != self.in_features() {
            return Err(Error::dim(format!(
                "dense expects {} inputs, got {}",
                self.in_features(),
                x.ncols()
            )));
        }
        let y = x.dot(&self.weight) + &self.bias;
        Ok((y, DenseTape { input: x }))
    }

    pub fn backward(&self, tape: DenseTape, dy: &Array2<f64>) -> DenseGrads {
        DenseGrads {
            input: dy.dot(&self.weight.t()),
            weight: tape.input.t().dot(dy),
            bias: dy.sum_axis(Axis(0)),
        }
    }
}

impl DenseGrads {
    pub fn accumulate_into(&self, target: &mut Dense) {
        target.weight += &self.weight;
        target.bias += &self.bias;
    }
}

impl Parameters for Dense {
    fn params(&self, prefix: &str) -> Vec<ParamRef<'_>> {
        vec![
            ParamRef {
                name: format!("{prefix}weight"),
                shape: self.weight.shape().to_vec(),
                data: slice2(&self.weight),
            },
            ParamRef {
                name: format!("{prefix}bias"),
                shape: vec![self.bias.len()],
                data: slice1(&self.bias),
            },
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.weight.as_slice_mut().unwrap(),
            self.bias.as_slice_mut().unwrap(),
        ]
    }
}

/// Leaky rectifier; the tape keeps the pre-activation sign pattern.
#[derive(Debug)]
pub struct ActTape {
    positive: Vec<bool>,
}

pub fn activation_forward(mut x: Array2<f64>) -> (Array2<f64>, ActTape) {
    let positive = x.iter().map(|&v| v > 0.0).collect();
    x.mapv_inplace(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v });
    (x, ActTape { positive })
}

pub fn activation_backward(tape: ActTape, mut dy: Array2<f64>) -> Array2<f64> {
    for (g, &p) in dy.iter_mut().zip(&tape.positive) {
        if !p {
            *g *= LEAKY_SLOPE;
        }
    }
    dy
}
