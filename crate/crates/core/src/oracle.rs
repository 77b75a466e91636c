//! Slow, independent reference implementations used to check the fast paths.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::frontend::BinObservation;
use crate::planner::FrontendPlan;
use crate::spectral_model::{SparseSpectrum, TimeSignal};

/// Largest length [`dense_dft`] accepts.
pub const DENSE_DFT_MAX_N: usize = 100_000;
/// Coefficients below this magnitude are treated as absent.
pub const DENSE_DFT_FLOOR: f64 = 1e-9;

/// Outputs computed together in [`dense_dft`] for instruction-level parallelism.
const BLOCK: usize = 8;
/// Samples between exact twiddle reloads; rotation drift stays near 1e-13.
const RESYNC: usize = 64;

/// `X[l] = (1/n) sum_p x[p] exp(-2 pi j l p / n)` by direct summation.
///
/// Within a run of [`RESYNC`] samples each output's twiddle advances by one
/// complex rotation; every run starts from the exact table entry.
pub fn dense_dft(x: &TimeSignal) -> Result<SparseSpectrum> {
    let n = x.n();
    if n > DENSE_DFT_MAX_N {
        return invalid(format!(
            "dense DFT oracle is limited to n <= {DENSE_DFT_MAX_N}, got {n}"
        ));
    }
    let twiddle: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0, -2.0 * PI * i as f64 / n as f64))
        .collect();
    let re: Vec<f64> = x.samples().iter().map(|v| v.re).collect();
    let im: Vec<f64> = x.samples().iter().map(|v| v.im).collect();
    let mut entries = Vec::new();
    for start in (0..n).step_by(BLOCK) {
        let width = BLOCK.min(n - start);
        let (mut acc_re, mut acc_im) = ([0.0; BLOCK], [0.0; BLOCK]);
        let (mut step_re, mut step_im) = ([0.0; BLOCK], [0.0; BLOCK]);
        for b in 0..width {
            step_re[b] = twiddle[start + b].re;
            step_im[b] = twiddle[start + b].im;
        }
        for p0 in (0..n).step_by(RESYNC) {
            let (mut w_re, mut w_im) = ([0.0; BLOCK], [0.0; BLOCK]);
            for b in 0..width {
                let t = twiddle[((start + b) as u64 * p0 as u64 % n as u64) as usize];
                w_re[b] = t.re;
                w_im[b] = t.im;
            }
            for p in p0..(p0 + RESYNC).min(n) {
                let (sr, si) = (re[p], im[p]);
                for b in 0..BLOCK {
                    acc_re[b] += sr * w_re[b] - si * w_im[b];
                    acc_im[b] += sr * w_im[b] + si * w_re[b];
                    let r = w_re[b] * step_re[b] - w_im[b] * step_im[b];
                    w_im[b] = w_re[b] * step_im[b] + w_im[b] * step_re[b];
                    w_re[b] = r;
                }
            }
        }
        for b in 0..width {
            let v = Complex64::new(acc_re[b], acc_im[b]) / n as f64;
            if v.norm() >= DENSE_DFT_FLOOR {
                entries.push((start + b, v));
            }
        }
    }
    SparseSpectrum::new(n, entries)
}

/// Exhaustive least-squares singleton fit over the bin's residue class.
///
/// Returns `(l, v, residual)` for the column with the smallest residual.
pub fn brute_singleton(obs: &BinObservation, plan: &FrontendPlan) -> Result<(usize, Complex64, f64)> {
    let n = plan.n();
    let d = plan.delay_chains();
    if obs.y.len() != d || obs.stage >= plan.stages() || obs.bin >= plan.bin_counts()[obs.stage] {
        return invalid("observation does not conform to the plan");
    }
    let f = plan.bin_counts()[obs.stage];
    let gain = (f as f64).sqrt();
    let mut best: Option<(usize, Complex64, f64)> = None;
    for l in (obs.bin..n).step_by(f) {
        let column: Vec<Complex64> = plan
            .shifts()
            .iter()
            .map(|&r| {
                let turns = ((l as u128 * r as u128) % n as u128) as f64 / n as f64;
                Complex64::new((2.0 * PI * turns).cos(), (2.0 * PI * turns).sin())
            })
            .collect();
        let mut dot = Complex64::default();
        for (c, y) in column.iter().zip(&obs.y) {
            dot += c.conj() * y;
        }
        let v = dot / (gain * d as f64);
        let residual: f64 = column
            .iter()
            .zip(&obs.y)
            .map(|(c, y)| (y - c * v * gain).norm_sqr())
            .sum();
        if best.is_none_or(|b| residual < b.2) {
            best = Some((l, v, residual));
        }
    }
    Ok(best.expect("every residue class is non-empty"))
}

/// Pure graph peeling on alias counts: true iff repeatedly removing
/// coefficients that sit alone in some bin empties the graph.
pub fn noiseless_check(s: &SparseSpectrum, plan: &FrontendPlan) -> bool {
    let mut remaining: BTreeSet<usize> = s.support().into_iter().collect();
    loop {
        let lonely: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&l| {
                plan.bin_counts()
                    .iter()
                    .any(|&f| remaining.iter().filter(|&&m| m % f == l % f).count() == 1)
            })
            .collect();
        if lonely.is_empty() {
            return remaining.is_empty();
        }
        for l in lonely {
            remaining.remove(&l);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub matched: bool,
    pub max_abs_err: f64,
    pub details: String,
}

/// Compares two spectra entry by entry; supports must agree exactly.
pub fn compare(estimate: &SparseSpectrum, reference: &SparseSpectrum, tolerance: f64) -> OracleReport {
    if estimate.n() != reference.n() {
        return OracleReport {
            matched: false,
            max_abs_err: f64::INFINITY,
            details: format!("length {} vs {}", estimate.n(), reference.n()),
        };
    }
    let est: BTreeSet<usize> = estimate.support().into_iter().collect();
    let refr: BTreeSet<usize> = reference.support().into_iter().collect();
    let missing: Vec<usize> = refr.difference(&est).copied().collect();
    let spurious: Vec<usize> = est.difference(&refr).copied().collect();
    let max_abs_err = est
        .union(&refr)
        .map(|&l| {
            let a = estimate.get(l).unwrap_or_default();
            let b = reference.get(l).unwrap_or_default();
            (a - b).norm()
        })
        .fold(0.0, f64::max);
    let matched = missing.is_empty() && spurious.is_empty() && max_abs_err <= tolerance;
    let details = if matched {
        String::new()
    } else {
        format!("missing {missing:?}, spurious {spurious:?}, max error {max_abs_err:.3e}")
    };
    OracleReport {
        matched,
        max_abs_err,
        details,
    }
}
