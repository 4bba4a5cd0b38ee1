//! Compressed-row sparse matrices and an envelope Cholesky factorization.
//!
//! The factorization reorders the system with reverse Cuthill-McKee before
//! factoring, which keeps the profile of mesh Laplacians narrow (roughly the
//! width of a level set of the breadth-first traversal).

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};

/// Square sparse matrix in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Assemble from `(row, col, value)` triplets; duplicates are summed.
    ///
    /// When `symmetric` is set the assembled entries are checked to be
    /// symmetric to 1e-12.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        symmetric: bool,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::dim(format!("entry ({i}, {j}) outside {n}x{n}")));
            }
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if last == Some(j) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(cols.len());
        }
        let m = SparseMatrix {
            n,
            row_ptr,
            cols,
            vals,
            symmetric,
        };
        if symmetric && !m.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument(
                "matrix flagged symmetric has asymmetric entries".into(),
            ));
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_symmetric_flagged(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol))
    }

    /// `alpha * self + beta * I`, preserving the sparsity pattern plus the diagonal.
    pub fn affine(&self, alpha: f64, beta: f64) -> Self {
        let trip = (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, alpha * v)))
            .chain((0..self.n).map(|i| (i, i, beta)));
        Self::from_triplets(self.n, trip.collect::<Vec<_>>(), false)
            .map(|mut m| {
                m.symmetric = self.symmetric;
                m
            })
            .expect("indices come from a valid matrix")
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Applies the matrix to every `n`-row block of a stacked batch
    /// `(B*n) x F`, writing into `out` (same shape).
    pub fn mul_blocks_into(&self, x: ArrayView2<f64>, mut out: ArrayViewMut2<f64>) {
        let n = self.n;
        assert_eq!(x.nrows() % n.max(1), 0, "row count must be a multiple of n");
        assert_eq!(x.dim(), out.dim());
        let blocks = if n == 0 { 0 } else { x.nrows() / n };
        for b in 0..blocks {
            let base = b * n;
            for i in 0..n {
                let mut orow = out.row_mut(base + i);
                orow.fill(0.0);
                for (j, v) in self.row(i) {
                    orow.scaled_add(v, &x.row(base + j));
                }
            }
        }
    }

    pub fn mul_blocks(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.dim());
        self.mul_blocks_into(x, out.view_mut());
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[[i, j]] = v;
            }
        }
        d
    }

    /// Largest-magnitude eigenvalue estimate by power iteration.
    ///
    /// Starts from a fixed non-uniform vector so results are deterministic.
    pub fn power_iteration(&self, max_iter: usize, tol: f64) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let mut x: Vec<f64> = (0..self.n)
            .map(|i| 1.0 + ((i * 7919) % 97) as f64 / 97.0)
            .collect();
        normalize(&mut x);
        let mut lambda = 0.0;
        for _ in 0..max_iter {
            let mut y = self.mul_vec(&x);
            let next: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let norm = normalize(&mut y);
            if norm == 0.0 {
                return 0.0;
            }
            x = y;
            let done = (next - lambda).abs() <= tol * next.abs().max(1.0);
            lambda = next;
            if done {
                break;
            }
        }
        lambda.abs()
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

/// Reverse Cuthill-McKee ordering of the symmetric sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(m: &SparseMatrix) -> Vec<usize> {
    let n = m.dim();
    let degree: Vec<usize> = (0..n)
        .map(|i| m.row(i).filter(|&(j, _)| j != i).count())
        .collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = m
                .row(v)
                .map(|(j, _)| j)
                .filter(|&j| j != v && !visited[j])
                .collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// Cholesky factor `P A Pᵀ = L Lᵀ` stored by rows over each row's envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv_perm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let first: Vec<usize> = (0..n)
            .map(|i| {
                a.row(perm[i])
                    .map(|(j, _)| inv_perm[j])
                    .filter(|&j| j <= i)
                    .min()
                    .unwrap_or(i)
            })
            .collect();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; offsets[n]];
        for i in 0..n {
            for (j, v) in a.row(perm[i]) {
                let jj = inv_perm[j];
                if jj <= i {
                    data[offsets[i] + jj - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = data[offsets[i] + j - fi];
                for k in k0..j {
                    s -= data[offsets[i] + k - fi] * data[offsets[j] + k - fj];
                }
                let djj = data[offsets[j] + j - fj];
                data[offsets[i] + j - fi] = s / djj;
            }
            let mut d = data[offsets[i] + i - fi];
            for k in fi..i {
                let l = data[offsets[i] + k - fi];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Singular(format!(
                    "matrix is not positive definite (pivot {i})"
                )));
            }
            data[offsets[i] + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            n,
            perm,
            inv_perm,
            first,
            offsets,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn l(&self, i: usize, k: usize) -> f64 {
        self.data[self.offsets[i] + k - self.first[i]]
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in self.first[i]..i {
                s -= self.l(i, k) * y[k];
            }
            y[i] = s / self.l(i, i);
        }
        for i in (0..n).rev() {
            y[i] /= self.l(i, i);
            let yi = y[i];
            for k in self.first[i]..i {
                y[k] -= self.l(i, k) * yi;
            }
        }
        (0..n).map(|old| y[self.inv_perm[old]]).collect()
    }
}
