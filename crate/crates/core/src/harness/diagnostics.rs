//! Convergence diagnostics computed from run output.

use crate::learner::{mixing_time, StepSchedule};

/// Decades of `t` a rate fit needs before it is attempted.
pub const RATE_MIN_DECADES: f64 = 3.0;
/// Decades at the end of the series used by the fit.
pub const RATE_FIT_DECADES: f64 = 2.0;

/// Sample mean and standard error `s/√n` (sample std with `n − 1`; zero for a
/// single value).
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut ss = 0.0;
    for v in values {
        ss += (v - mean) * (v - mean);
    }
    let std = (ss / (n - 1) as f64).sqrt();
    (mean, std / (n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateDiagnostic {
    Fitted {
        /// Slope of `log min_{k≤t} g_k` against `log t`.
        slope: f64,
        points: usize,
        t_from: u64,
        t_to: u64,
    },
    Skipped(String),
}

impl RateDiagnostic {
    pub fn slope(&self) -> Option<f64> {
        match self {
            RateDiagnostic::Fitted { slope, .. } => Some(*slope),
            RateDiagnostic::Skipped(_) => None,
        }
    }
}

/// Least-squares slope of `log(min_{k≤t} g_k)` against `log t` over the last
/// two decades of `t`. `series` holds `(t, ‖∇L‖²)` in increasing `t`.
pub fn rate_diagnostic(series: &[(u64, f64)]) -> RateDiagnostic {
    let pts: Vec<(u64, f64)> = series.iter().copied().filter(|&(t, g)| t > 0 && g.is_finite()).collect();
    let (Some(first), Some(last)) = (pts.first(), pts.last()) else {
        return RateDiagnostic::Skipped("empty gradient series".into());
    };
    let span = (last.0 as f64 / first.0 as f64).log10();
    if span < RATE_MIN_DECADES - 1e-12 {
        return RateDiagnostic::Skipped(format!(
            "series covers {span:.2} decades of t, at least {RATE_MIN_DECADES} needed"
        ));
    }
    let t_from_f = last.0 as f64 / 10f64.powf(RATE_FIT_DECADES);
    let mut running = f64::INFINITY;
    let mut xy = Vec::new();
    for &(t, g) in &pts {
        running = running.min(g);
        if t as f64 >= t_from_f && running > 0.0 {
            xy.push(((t as f64).ln(), running.ln()));
        }
    }
    if xy.len() < 2 {
        return RateDiagnostic::Skipped("fewer than two usable points in the fit window".into());
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    RateDiagnostic::Fitted {
        slope: sxy / sxx,
        points: xy.len(),
        t_from: pts.iter().find(|p| p.0 as f64 >= t_from_f).map_or(last.0, |p| p.0),
        t_to: last.0,
    }
}

/// Mixing-time-windowed critic error `(1/(1+t−τ_t)) Σ_{k=τ_t}^{t} e_k` with
/// prefix sums `prefix[k] = e_0 + … + e_{k−1}`. If the chain has no finite
/// mixing time the whole history is averaged.
pub fn windowed_average(prefix: &[f64], t: u64, b: f64, k: f64, schedule: &StepSchedule) -> f64 {
    let tau = mixing_time(b, k, schedule, t).unwrap_or(0).min(t);
    let sum = prefix[t as usize + 1] - prefix[tau as usize];
    sum / (1 + t - tau) as f64
}

/// The windowed critic error at each of `times`, from the per-step errors
/// `errors[k] = ‖v_k − v*‖²`.
pub fn critic_error_curve(errors: &[f64], b: f64, k: f64, schedule: &StepSchedule, times: &[u64]) -> Vec<(u64, f64)> {
    let mut prefix = Vec::with_capacity(errors.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for e in errors {
        acc += e;
        prefix.push(acc);
    }
    times
        .iter()
        .filter(|&&t| (t as usize) < errors.len())
        .map(|&t| (t, windowed_average(&prefix, t, b, k, schedule)))
        .collect()
}
