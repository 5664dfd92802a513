//! Running Fisher estimate `G ← (1−a)G + aΨΨᵀ` and its inverse.
//!
//! `G` is stored as `c·Ĝ` with a scalar `c`, so the `(1−a)` decay costs O(1)
//! and each update is a rank-one change of `Ĝ` whose inverse follows from
//! Sherman–Morrison. Only the support of `Ψ` and of `Ĝ⁻¹Ψ` is touched, which
//! keeps updates cheap for tabular features. Every `refresh_every` updates the
//! inverse is recomputed from scratch by Cholesky.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::LearnerError;
use crate::linalg::{identity_residual_inf, SparseVec};

/// `c` is folded back into `Ĝ` once it falls below this.
const RENORMALIZE_BELOW: f64 = 1e-150;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefreshDiagnostics {
    /// Number of updates applied when the refresh happened.
    pub update: u64,
    /// `‖G·G⁻¹ − I‖_∞` with the freshly inverted `G⁻¹`.
    pub residual: f64,
    /// `‖G·G⁻¹ − I‖_∞` of the incrementally tracked inverse just before the refresh.
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherState {
    base: DMatrix<f64>,
    base_inv: DMatrix<f64>,
    scale: f64,
    refresh_every: u64,
    updates: u64,
    last_refresh: Option<RefreshDiagnostics>,
    max_residual: f64,
    refreshes: u64,
}

impl FisherState {
    /// `G = pI`.
    pub fn new(dim: usize, p: f64, refresh_every: u64) -> Result<Self, LearnerError> {
        if !(p.is_finite() && p > 0.0) {
            return Err(LearnerError::Dimension(format!("Fisher initialization p = {p} must be positive")));
        }
        if refresh_every == 0 {
            return Err(LearnerError::Dimension("Fisher refresh interval must be at least 1".into()));
        }
        Ok(FisherState {
            base: DMatrix::identity(dim, dim),
            base_inv: DMatrix::identity(dim, dim),
            scale: p,
            refresh_every,
            updates: 0,
            last_refresh: None,
            max_residual: 0.0,
            refreshes: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.base.nrows()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// `G`
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.base * self.scale
    }

    /// The tracked `G⁻¹`.
    pub fn inverse(&self) -> DMatrix<f64> {
        &self.base_inv / self.scale
    }

    pub fn last_refresh(&self) -> Option<RefreshDiagnostics> {
        self.last_refresh
    }

    /// Largest refresh residual seen so far.
    pub fn max_refresh_residual(&self) -> f64 {
        self.max_residual
    }

    pub fn refreshes(&self) -> u64 {
        self.refreshes
    }

    /// `‖G·G⁻¹ − I‖_∞` of the current tracked inverse (O(d³)).
    pub fn identity_residual(&self) -> f64 {
        identity_residual_inf(&(&self.base * &self.base_inv))
    }

    /// `(λ_min, λ_max)` of `G` (O(d³)).
    pub fn eigenvalue_range(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.base.clone()).eigenvalues;
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo * self.scale, hi * self.scale)
    }

    /// `Ĝ⁻¹ψ` as a dense vector.
    fn base_inv_times(&self, psi: &SparseVec) -> Vec<f64> {
        let d = self.dim();
        let mut u = vec![0.0; d];
        for (j, pj) in psi.iter() {
            if pj == 0.0 {
                continue;
            }
            let col = self.base_inv.column(j);
            for (ui, ci) in u.iter_mut().zip(col.iter()) {
                *ui += ci * pj;
            }
        }
        u
    }

    /// `G⁻¹ψ`
    pub fn natural_direction(&self, psi: &SparseVec) -> Vec<f64> {
        let mut u = self.base_inv_times(psi);
        u.iter_mut().for_each(|x| *x /= self.scale);
        u
    }

    /// `G ← (1−a)G + aψψᵀ`, refreshing the inverse when due. `t` is only used
    /// to label errors.
    pub fn update(&mut self, a: f64, psi: &SparseVec, t: u64) -> Result<(), LearnerError> {
        if !(a > 0.0 && a < 1.0) {
            return Err(LearnerError::Schedule(format!(
                "Fisher update needs 0 < a < 1, got a = {a} at iteration {t}"
            )));
        }
        let u = self.base_inv_times(psi);
        let new_scale = (1.0 - a) * self.scale;
        let w = a / new_scale;

        let support: Vec<(usize, f64)> = psi.iter().filter(|&(_, x)| x != 0.0).collect();
        for &(i, pi) in &support {
            for &(j, pj) in &support {
                self.base[(i, j)] += w * (pi * pj);
            }
        }

        let psi_u: f64 = support.iter().map(|&(j, pj)| pj * u[j]).sum();
        let coef = w / (1.0 + w * psi_u);
        let nz: Vec<(usize, f64)> = u.iter().copied().enumerate().filter(|&(_, x)| x != 0.0).collect();
        for &(i, ui) in &nz {
            for &(j, uj) in &nz {
                self.base_inv[(i, j)] -= coef * (ui * uj);
            }
        }

        self.scale = new_scale;
        if self.scale < RENORMALIZE_BELOW {
            self.base *= self.scale;
            self.base_inv /= self.scale;
            self.scale = 1.0;
        }
        if !self.scale.is_finite() || !psi_u.is_finite() {
            return Err(LearnerError::NonFinite { t, quantity: "Fisher matrix" });
        }

        self.updates += 1;
        if self.updates % self.refresh_every == 0 {
            self.refresh(t)?;
        }
        Ok(())
    }

    /// Recomputes `G⁻¹` by Cholesky factorization of `G`.
    pub fn refresh(&mut self, t: u64) -> Result<RefreshDiagnostics, LearnerError> {
        let drift = self.identity_residual();
        // fold the scale in so the factorization sees a well-scaled matrix
        self.base *= self.scale;
        self.base_inv /= self.scale;
        self.scale = 1.0;
        let chol = self
            .base
            .clone()
            .cholesky()
            .ok_or(LearnerError::FisherNotPositiveDefinite { t })?;
        let inv = chol.inverse();
        self.base_inv = (&inv + inv.transpose()) * 0.5;
        let residual = self.identity_residual();
        if !residual.is_finite() {
            return Err(LearnerError::FisherNotPositiveDefinite { t });
        }
        let diag = RefreshDiagnostics { update: self.updates, residual, drift };
        self.last_refresh = Some(diag);
        self.max_residual = self.max_residual.max(residual);
        self.refreshes += 1;
        Ok(diag)
    }
}
