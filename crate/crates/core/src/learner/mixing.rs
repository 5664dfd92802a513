use super::schedule::StepSchedule;

/// Smallest `m ≥ 0` with `b·k^{m−1} ≤ threshold`.
///
/// Returns `None` when no such `m` exists (`k ≥ 1` and the bound never drops,
/// or non-positive threshold).
pub fn mixing_time_for_threshold(b: f64, k: f64, threshold: f64) -> Option<u64> {
    if !(threshold > 0.0) || !(b >= 0.0) || !(k >= 0.0) {
        return None;
    }
    if b == 0.0 {
        return Some(0);
    }
    if k == 0.0 {
        // k^{-1} is infinite; k^0 = 1
        return if b <= threshold { Some(1) } else { Some(2) };
    }
    if b / k <= threshold {
        return Some(0);
    }
    if k >= 1.0 {
        return None;
    }
    // start near the analytic answer and correct for rounding
    let guess = ((threshold / b).ln() / k.ln() + 1.0).ceil().max(1.0) as u64;
    let bound = |m: u64| b * k.powi((m as i64 - 1) as i32);
    let mut m = guess.saturating_sub(2).max(1);
    while bound(m) > threshold {
        m += 1;
    }
    while m > 1 && bound(m - 1) <= threshold {
        m -= 1;
    }
    Some(m)
}

/// `τ_t = min{m ≥ 0 : b·k^{m−1} ≤ min(a(t), b(t), c(t))}`.
pub fn mixing_time(b: f64, k: f64, schedule: &StepSchedule, t: u64) -> Option<u64> {
    mixing_time_for_threshold(b, k, schedule.step_sizes(t).min())
}
