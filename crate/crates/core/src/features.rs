//! Critic state features `f_s`.

use nalgebra::DMatrix;

use crate::error::ModelError;
use crate::linalg::SparseVec;

/// Per-state feature vectors of a common dimension `d_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFeatures {
    dim: usize,
    rows: Vec<SparseVec>,
}

impl StateFeatures {
    /// `f_s = e_s`; `d_1 = |S|`.
    ///
    /// These features span the constant vector, so the TD matrix `A` is only
    /// negative semi-definite and the critic fixed point is unique only up to
    /// an additive constant.
    pub fn one_hot(n_states: usize) -> Self {
        StateFeatures { dim: n_states, rows: (0..n_states).map(SparseVec::unit).collect() }
    }

    /// One-hot with the coordinate of `reference` removed (`f_reference = 0`),
    /// so `d_1 = |S| - 1`. Values are learned relative to the reference state
    /// and `A` is negative definite on any ergodic chain.
    pub fn one_hot_reference(n_states: usize, reference: usize) -> Self {
        let rows = (0..n_states)
            .map(|s| match s.cmp(&reference) {
                std::cmp::Ordering::Less => SparseVec::unit(s),
                std::cmp::Ordering::Equal => SparseVec::new(),
                std::cmp::Ordering::Greater => SparseVec::unit(s - 1),
            })
            .collect();
        StateFeatures { dim: n_states.saturating_sub(1), rows }
    }

    pub fn from_dense_rows(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(ModelError::Features("rows must share one dimension".into()));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(ModelError::Features("non-finite feature entry".into()));
        }
        Ok(StateFeatures { dim, rows: rows.iter().map(|r| SparseVec::from_dense(r)).collect() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, s: usize) -> &SparseVec {
        &self.rows[s]
    }

    pub fn max_norm(&self) -> f64 {
        self.rows.iter().map(SparseVec::norm).fold(0.0, f64::max)
    }

    /// Feature matrix `F` with one row per state.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.dim);
        for (s, row) in self.rows.iter().enumerate() {
            for (i, v) in row.iter() {
                m[(s, i)] = v;
            }
        }
        m
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.to_dense(self.dim)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_features_drop_one_coordinate() {
        let f = StateFeatures::one_hot_reference(4, 2);
        assert_eq!(f.dim(), 3);
        assert_eq!(f.get(2).nnz(), 0);
        assert_eq!(f.get(3).indices, vec![2]);
        assert_eq!(f.max_norm(), 1.0);
    }

    #[test]
    fn dense_rows_must_agree() {
        assert!(StateFeatures::from_dense_rows(vec![vec![1.0], vec![1.0, 0.0]]).is_err());
        let f = StateFeatures::from_dense_rows(vec![vec![0.6, 0.8], vec![0.0, 0.0]]).unwrap();
        assert!((f.max_norm() - 1.0).abs() < 1e-15);
        assert_eq!(f.to_dense_rows(), vec![vec![0.6, 0.8], vec![0.0, 0.0]]);
    }
}
