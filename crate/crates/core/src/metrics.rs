//! Trial scoring and closed-form error-event bounds.
//!
//! Every bound takes the effective per-bin SNR `rho_b = f_i * rho`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::formats::csv_writer;
use crate::spectral_model::SparseSpectrum;

/// Aggregate over a batch of trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialStats {
    pub trials: usize,
    pub support_success: usize,
    /// Mean normalized l1 error over all trials.
    pub l1_error_mean: f64,
    pub samples_used: usize,
    pub wall_time: f64,
}

impl TrialStats {
    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.support_success as f64 / self.trials as f64
        }
    }
}

/// Exact support match and `||X_hat - X||_1 / ||X||_1` (0/0 is 0).
pub fn support_recovery(estimate: &SparseSpectrum, truth: &SparseSpectrum) -> Result<(bool, f64)> {
    if estimate.n() != truth.n() {
        return invalid(format!("lengths differ: {} vs {}", estimate.n(), truth.n()));
    }
    let success = estimate.support() == truth.support();
    let indices: BTreeSet<usize> = estimate.support().into_iter().chain(truth.support()).collect();
    let err: f64 = indices
        .iter()
        .map(|&l| (estimate.get(l).unwrap_or_default() - truth.get(l).unwrap_or_default()).norm())
        .sum();
    let norm: f64 = truth.entries().iter().map(|(_, v)| v.norm()).sum();
    let l1 = if norm == 0.0 {
        if err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        err / norm
    };
    Ok((success, l1))
}

/// Tail of `||u + w||^2 < (1 + gamma) D` for `w ~ CN(0, I_D)`:
/// `exp(-D (u - gamma)^2 / (2 + 4 u))` with `u = ||u||^2 / D`.
pub fn energy_tail_bound(u_energy_per_dim: f64, d: usize, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < u_energy_per_dim && u_energy_per_dim.is_finite()) || d == 0 {
        return invalid(format!(
            "need 0 < gamma < u and D >= 1, got gamma = {gamma}, u = {u_energy_per_dim}, D = {d}"
        ));
    }
    let u = u_energy_per_dim;
    Ok((-(d as f64) * (u - gamma).powi(2) / (2.0 + 4.0 * u)).exp())
}

/// False-alarm bound for a zero-ton bin, `2 exp(-D gamma^2 / 9)`.
pub fn zeroton_bound(d: usize, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0 / 3.0).contains(&gamma) {
        return invalid(format!("gamma must lie in [0, 1/3], got {gamma}"));
    }
    Ok(2.0 * (-(d as f64) * gamma * gamma / 9.0).exp())
}

/// Variance of Kay's estimator, `6 / (rho_b N (N^2 - 1))`.
pub fn kay_variance(rho_b: f64, n: usize) -> Result<f64> {
    if !(rho_b > 0.0) || n < 2 {
        return invalid(format!("need rho_b > 0 and N >= 2, got {rho_b}, {n}"));
    }
    let nf = n as f64;
    Ok(6.0 / (rho_b * nf * (nf * nf - 1.0)))
}

/// Standard normal upper tail.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Per-cluster phase-error probability `2 Q(pi/c1 sqrt(N (N^2 - 1) rho_b / 6))`,
/// and whether it falls below `1/n^3`.
pub fn prop1_bound(rho_b: f64, n_samples: usize, c1: f64, n: usize) -> Result<(f64, bool)> {
    if !(rho_b > 0.0) || n_samples < 2 || !(c1 > 0.0) || n == 0 {
        return invalid("prop1_bound needs rho_b > 0, N >= 2, c1 > 0, n >= 1");
    }
    let nf = n_samples as f64;
    let x = PI / c1 * (nf * (nf * nf - 1.0) * rho_b / 6.0).sqrt();
    let value = 2.0 * q_function(x);
    Ok((value, value < (n as f64).powi(-3)))
}

/// Wrong-constellation-point bound `exp(-D rho_b sin^2(pi / M2))`.
pub fn value_error_bound(rho_b: f64, d: usize, m2: usize) -> Result<f64> {
    if !(rho_b > 0.0) || d == 0 || m2 < 2 {
        return invalid("value_error_bound needs rho_b > 0, D >= 1, M2 >= 2");
    }
    Ok((-(d as f64) * rho_b * (PI / m2 as f64).sin().powi(2)).exp())
}

/// Multi-ton-accepted-as-singleton bound, maximized over degrees `2 <= L < ln k`
/// (at least `L = 2`). Exposed for reports only; it is too loose to tune thresholds.
pub fn multiton_bound(rho_b: f64, d: usize, gamma: f64, n: usize, k: usize, c3: f64) -> Result<f64> {
    if !(rho_b > 0.0 && gamma > 0.0 && c3 > 0.0) || d == 0 || n == 0 {
        return invalid("multiton_bound needs positive rho_b, gamma, c3, D and n");
    }
    let coherence = 2.0 * ((5.0 * n as f64).ln() / d as f64).sqrt();
    let top = ((k.max(1) as f64).ln().ceil() as usize).max(3);
    let worst = (2..top)
        .map(|l| {
            let lf = l as f64;
            let u = c3 * lf * rho_b * (1.0 - lf * coherence).max(0.0);
            if u <= gamma {
                1.0
            } else {
                (-(d as f64) * (u - gamma).powi(2) / (2.0 + 4.0 * u)).exp()
            }
        })
        .fold(0.0, f64::max);
    Ok(worst)
}

/// Parameters for [`write_bound_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct BoundParams {
    pub rho_b: f64,
    pub d: usize,
    pub gamma: f64,
    pub n_samples: usize,
    pub c1: f64,
    pub n: usize,
    pub k: usize,
    pub m2: usize,
}

#[derive(Serialize)]
struct BoundRow {
    bound: &'static str,
    rho_b: f64,
    d: usize,
    gamma: f64,
    n_samples: usize,
    c1: f64,
    n: usize,
    k: usize,
    m2: usize,
    value: f64,
}

/// `(name, value)` for every evaluator whose preconditions hold.
pub fn bound_table(p: &BoundParams) -> Vec<(&'static str, f64)> {
    let mut rows = Vec::new();
    if let Ok(v) = zeroton_bound(p.d, p.gamma.min(1.0 / 3.0)) {
        rows.push(("zeroton", v));
    }
    if let Ok(v) = energy_tail_bound(p.rho_b, p.d, p.gamma) {
        rows.push(("singleton_miss", v));
    }
    if let Ok(v) = kay_variance(p.rho_b, p.n_samples) {
        rows.push(("kay_variance", v));
    }
    if let Ok((v, _)) = prop1_bound(p.rho_b, p.n_samples, p.c1, p.n) {
        rows.push(("prop1", v));
    }
    if let Ok(v) = value_error_bound(p.rho_b, p.d, p.m2) {
        rows.push(("value_error", v));
    }
    if let Ok(v) = multiton_bound(p.rho_b, p.d, p.gamma, p.n, p.k, 1.0) {
        rows.push(("multiton", v));
    }
    rows
}

/// Bound report CSV: bound name, parameters, value.
pub fn write_bound_report<W: Write>(p: &BoundParams, w: W) -> Result<()> {
    let mut out = csv_writer(w)?;
    for (bound, value) in bound_table(p) {
        out.serialize(BoundRow {
            bound,
            rho_b: p.rho_b,
            d: p.d,
            gamma: p.gamma,
            n_samples: p.n_samples,
            c1: p.c1,
            n: p.n,
            k: p.k,
            m2: p.m2,
            value,
        })?;
    }
    out.flush()?;
    Ok(())
}
