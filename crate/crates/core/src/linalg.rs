//! Small dense/sparse vector helpers shared by features, policies and learners.

use nalgebra::DVector;

/// A sparse vector stored as sorted `(index, value)` pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from unsorted pairs, merging duplicates and dropping exact zeros.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut out = SparseVec::new();
        for (i, v) in pairs {
            match out.indices.last() {
                Some(&last) if last == i => *out.values.last_mut().unwrap() += v,
                _ => {
                    out.indices.push(i);
                    out.values.push(v);
                }
            }
        }
        out.prune();
        out
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let mut out = SparseVec::new();
        for (i, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                out.indices.push(i);
                out.values.push(v);
            }
        }
        out
    }

    pub fn unit(index: usize) -> Self {
        SparseVec { indices: vec![index], values: vec![1.0] }
    }

    fn prune(&mut self) {
        let mut k = 0;
        for j in 0..self.indices.len() {
            if self.values[j] != 0.0 {
                self.indices[k] = self.indices[j];
                self.values[k] = self.values[j];
                k += 1;
            }
        }
        self.indices.truncate(k);
        self.values.truncate(k);
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    /// `dense += alpha * self`
    pub fn axpy(&self, alpha: f64, dense: &mut [f64]) {
        for (i, v) in self.iter() {
            dense[i] += alpha * v;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn to_dvector(&self, dim: usize) -> DVector<f64> {
        DVector::from_vec(self.to_dense(dim))
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Infinity norm (max absolute row sum) of `m - I`.
pub fn identity_residual_inf(m: &nalgebra::DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| {
                    let target = if i == j { 1.0 } else { 0.0 };
                    (m[(i, j)] - target).abs()
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}
