//! Zero-ton / singleton / multi-ton classification of one bin, with Kay's
//! weighted phase-difference estimator per cluster and successive refinement
//! across clusters.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::formats::csv_writer;
use crate::frontend::{steering_entry, BinObservation};
use crate::planner::{FrontendPlan, ShiftLayout};
use crate::spectral_model::Constellation;

const TAU: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum VerdictKind {
    ZeroTon,
    Singleton,
    MultiTon,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinVerdict {
    pub kind: VerdictKind,
    pub support: Option<usize>,
    pub value: Option<Complex64>,
    pub residual: f64,
}

impl BinVerdict {
    pub fn zero_ton(residual: f64) -> Self {
        BinVerdict {
            kind: VerdictKind::ZeroTon,
            support: None,
            value: None,
            residual,
        }
    }

    pub fn multi_ton(residual: f64) -> Self {
        BinVerdict {
            kind: VerdictKind::MultiTon,
            support: None,
            value: None,
            residual,
        }
    }

    pub fn singleton(support: usize, value: Complex64, residual: f64) -> Self {
        BinVerdict {
            kind: VerdictKind::Singleton,
            support: Some(support),
            value: Some(value),
            residual,
        }
    }
}

/// Parabolic window of Kay's frequency estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct KayWeights {
    n_samples: usize,
    beta: Vec<f64>,
}

impl KayWeights {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }
}

/// `beta(t) = 6 (t+1)(N-1-t) / (N (N^2 - 1))` for `t = 0..N-2`.
pub fn kay_weights(n: usize) -> Result<KayWeights> {
    if n < 2 {
        return invalid(format!("Kay's estimator needs at least 2 samples, got {n}"));
    }
    let nf = n as f64;
    let denom = nf * (nf * nf - 1.0);
    let beta = (0..n - 1)
        .map(|t| 6.0 * (t + 1) as f64 * (n - 1 - t) as f64 / denom)
        .collect();
    Ok(KayWeights { n_samples: n, beta })
}

fn wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Weighted phase-difference estimate in `(-pi, pi]`, before division by the spacing.
///
/// Differences are unwrapped around the phase of their weighted sum, which
/// matches the plain weighted average whenever no difference straddles +-pi.
/// `None` when any sample is exactly zero.
pub fn kay_phase(samples: &[Complex64], w: &KayWeights) -> Option<f64> {
    if samples.len() != w.n_samples || samples.iter().any(|v| *v == Complex64::default()) {
        return None;
    }
    let diffs: Vec<Complex64> = samples.windows(2).map(|p| p[1] * p[0].conj()).collect();
    let centre: Complex64 = diffs.iter().zip(&w.beta).map(|(d, b)| d * b).sum();
    let reference = if centre == Complex64::default() {
        0.0
    } else {
        centre.arg()
    };
    let offset: f64 = diffs
        .iter()
        .zip(&w.beta)
        .map(|(d, b)| b * wrap(d.arg() - reference))
        .sum();
    Some(wrap(reference + offset))
}

/// Estimate of `omega` modulo `2 pi / spacing` from one cluster.
pub fn cluster_estimate(samples: &[Complex64], w: &KayWeights, spacing: f64) -> Option<f64> {
    let phase = kay_phase(samples, w)?;
    let period = TAU / spacing;
    Some((phase.rem_euclid(TAU) / spacing).rem_euclid(period))
}

/// Successive refinement: each estimate is lifted onto its `2 pi / b^i` grid
/// at the point nearest the running estimate.
pub fn refine(estimates: &[f64], base: u64) -> f64 {
    let Some((&first, rest)) = estimates.split_first() else {
        return 0.0;
    };
    if rest.is_empty() {
        return first;
    }
    let mut prev = first;
    let mut spacing = 1.0;
    for &new in rest {
        spacing *= base as f64;
        let period = TAU / spacing;
        prev = new + period * ((prev - new) / period).round();
    }
    prev.rem_euclid(TAU)
}

/// Index congruent to `bin` mod `f` nearest the fractional grid position `t`.
pub(crate) fn project_to_class(t: f64, bin: usize, f: usize, n: usize) -> usize {
    let m = ((t - bin as f64) / f as f64).round();
    let l = bin as f64 + m * f as f64;
    (l.rem_euclid(n as f64).round() as usize) % n
}

/// Classifier bound to one plan.
#[derive(Clone, Debug)]
pub struct SingletonEstimator<'a> {
    plan: &'a FrontendPlan,
    weights: Option<KayWeights>,
    snap: Option<Constellation>,
}

impl<'a> SingletonEstimator<'a> {
    pub fn new(plan: &'a FrontendPlan, snap: Option<Constellation>) -> Result<Self> {
        let weights = match plan.layout() {
            ShiftLayout::Clustered(p) => Some(kay_weights(p.per_cluster)?),
            ShiftLayout::Explicit => None,
        };
        Ok(SingletonEstimator { plan, weights, snap })
    }

    pub fn plan(&self) -> &FrontendPlan {
        self.plan
    }

    fn candidate(&self, stage: usize, bin: usize, y: &[Complex64]) -> Option<usize> {
        let n = self.plan.n();
        let f = self.plan.bin_counts()[stage];
        match (self.plan.layout(), &self.weights) {
            (ShiftLayout::Clustered(p), Some(w)) => {
                let mut estimates = Vec::with_capacity(p.clusters);
                let mut spacing = 1.0;
                for cluster in y.chunks(p.per_cluster) {
                    estimates.push(cluster_estimate(cluster, w, spacing)?);
                    spacing *= p.base as f64;
                }
                let omega = refine(&estimates, p.base);
                Some(project_to_class(omega * n as f64 / TAU, bin, f, n))
            }
            _ => {
                // No cluster structure: match every column of the residue class.
                let shifts = self.plan.shifts();
                (bin..n).step_by(f).max_by(|&a, &b| {
                    let score = |l: usize| {
                        shifts
                            .iter()
                            .zip(y)
                            .map(|(&r, v)| steering_entry(n, l, r).conj() * v)
                            .sum::<Complex64>()
                            .norm_sqr()
                    };
                    score(a).total_cmp(&score(b)).then(b.cmp(&a))
                })
            }
        }
    }

    /// Classifies bin `bin` of stage `stage` holding samples `y`.
    pub fn classify(&self, stage: usize, bin: usize, y: &[Complex64]) -> BinVerdict {
        let plan = self.plan;
        let energy: f64 = y.iter().map(|v| v.norm_sqr()).sum();
        let threshold = plan.threshold();
        if energy < threshold {
            return BinVerdict::zero_ton(energy);
        }
        let Some(q) = self.candidate(stage, bin, y) else {
            return BinVerdict::multi_ton(energy);
        };
        let n = plan.n();
        let d = plan.delay_chains() as f64;
        let gain = plan.stage_gain(stage);
        let steering: Vec<Complex64> = plan.shifts().iter().map(|&r| steering_entry(n, q, r)).collect();
        let v = steering.iter().zip(y).map(|(s, x)| s.conj() * x).sum::<Complex64>() / (gain * d);
        let residual: f64 = steering.iter().zip(y).map(|(s, x)| (x - gain * v * s).norm_sqr()).sum();
        // The fitted component must itself fail the zero-ton test. Noise bins
        // that cross the threshold otherwise find a column that explains a
        // little of their energy and leave a residual just under it.
        let component = gain * gain * v.norm_sqr() * d;
        if residual < threshold && component >= threshold {
            let value = self.snap.as_ref().map_or(v, |c| c.snap(v));
            BinVerdict::singleton(q, value, residual)
        } else {
            BinVerdict::multi_ton(residual)
        }
    }
}

/// One-shot classification of an observation.
pub fn classify_bin(obs: &BinObservation, plan: &FrontendPlan, snap: Option<Constellation>) -> Result<BinVerdict> {
    if obs.y.len() != plan.delay_chains() || obs.stage >= plan.stages() || obs.bin >= plan.bin_counts()[obs.stage] {
        return invalid("observation does not conform to the plan");
    }
    Ok(SingletonEstimator::new(plan, snap)?.classify(obs.stage, obs.bin, &obs.y))
}

#[derive(Serialize)]
struct VerdictRow {
    stage: usize,
    bin: usize,
    kind: VerdictKind,
    support: Option<usize>,
    value_re: Option<f64>,
    value_im: Option<f64>,
    residual: f64,
}

/// Verdict trace with columns stage, bin, kind, support, value_re, value_im, residual.
pub fn write_verdicts<'v, W: Write>(
    w: W,
    verdicts: impl IntoIterator<Item = (usize, usize, &'v BinVerdict)>,
) -> Result<()> {
    let mut out = csv_writer(w)?;
    for (stage, bin, v) in verdicts {
        out.serialize(VerdictRow {
            stage,
            bin,
            kind: v.kind,
            support: v.support,
            value_re: v.value.map(|c| c.re),
            value_im: v.value.map(|c| c.im),
            residual: v.residual,
        })?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::steering_vector;
    use crate::planner::{build_plan, PlannerConfig};

    fn tone(omega: f64, shifts: impl Iterator<Item = f64>) -> Vec<Complex64> {
        shifts.map(|r| Complex64::from_polar(1.0, omega * r)).collect()
    }

    #[test]
    fn weights() {
        assert!(kay_weights(1).is_err());
        assert_eq!(kay_weights(2).unwrap().beta(), &[1.0]);
        let b = kay_weights(3).unwrap();
        assert!((b.beta()[0] - 0.5).abs() < 1e-15 && (b.beta()[1] - 0.5).abs() < 1e-15);
        for n in 2..=64 {
            let s: f64 = kay_weights(n).unwrap().beta().iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "N = {n}");
            assert!(kay_weights(n).unwrap().beta().iter().all(|&b| b >= 0.0));
        }
    }

    #[test]
    fn noiseless_cluster_estimates() {
        let w = kay_weights(3).unwrap();
        let omega = TAU * 7.0 / 20.0;
        let y = tone(omega, (0..3).map(|t| 5.0 + t as f64));
        assert!((cluster_estimate(&y, &w, 1.0).unwrap() - omega).abs() < 1e-12);
        let y = tone(omega, (0..3).map(|t| 5.0 + 2.0 * t as f64));
        let est = cluster_estimate(&y, &w, 2.0).unwrap();
        assert!((est - omega.rem_euclid(PI)).abs() < 1e-12);
    }

    #[test]
    fn zero_sample_makes_cluster_unusable() {
        let w = kay_weights(3).unwrap();
        let y = [Complex64::new(1.0, 0.0), Complex64::default(), Complex64::new(0.0, 1.0)];
        assert_eq!(cluster_estimate(&y, &w, 1.0), None);
    }

    #[test]
    fn refinement() {
        assert_eq!(refine(&[1.25], 3), 1.25);
        let omega = TAU * 13.0 / 20.0;
        let est: Vec<f64> = (0..3).map(|i| omega.rem_euclid(TAU / 2f64.powi(i))).collect();
        assert!((refine(&est, 2) - omega).abs() < 1e-12);
    }

    #[test]
    fn refinement_with_bounded_errors_stays_in_final_cell() {
        let c1 = 8.0;
        // Each lift is safe while (b + 1) pi / c1 < pi, so b <= 6 at c1 = 8.
        for (base, clusters) in [(2u64, 6usize), (3, 5), (5, 4)] {
            for k in 0..200 {
                let omega = TAU * (k as f64 * 0.618_034).fract();
                let est: Vec<f64> = (0..clusters)
                    .map(|i| {
                        let sp = (base as f64).powi(i as i32);
                        // Pre-division error just below pi / c1, alternating sign.
                        let err = if (k + i) % 2 == 0 { 0.99 } else { -0.99 } * PI / c1;
                        ((omega * sp + err).rem_euclid(TAU) / sp).rem_euclid(TAU / sp)
                    })
                    .collect();
                let got = refine(&est, base);
                let diff = (got - omega + PI).rem_euclid(TAU) - PI;
                let cell = TAU / ((base as f64).powi(clusters as i32 - 1) * c1);
                assert!(diff.abs() <= cell, "b = {base}, k = {k}: {diff} > {cell}");
            }
        }
    }

    #[test]
    fn projection_respects_residue_class() {
        assert_eq!(project_to_class(10.2, 2, 4, 20), 10);
        assert_eq!(project_to_class(19.9, 0, 5, 20), 0);
        assert_eq!(project_to_class(11.9, 2, 4, 20), 10);
        assert_eq!(project_to_class(12.1, 2, 4, 20), 14);
    }

    #[test]
    fn zero_bin_is_zero_ton() {
        let plan = build_plan(20, 5, &PlannerConfig::default(), 0).unwrap();
        let v = classify_bin(
            &BinObservation {
                stage: 0,
                bin: 2,
                y: vec![Complex64::default(); 3],
            },
            &plan,
            None,
        )
        .unwrap();
        assert_eq!(v, BinVerdict::zero_ton(0.0));
    }

    #[test]
    fn noiseless_singletons_are_exact_under_snapping() {
        let c = Constellation::from_snr_db(10.0).unwrap();
        for (n, k) in [(20, 5), (1430, 20), (124_950, 40)] {
            let plan = build_plan(n, k, &PlannerConfig::default(), 11).unwrap();
            let est = SingletonEstimator::new(&plan, Some(c)).unwrap();
            for (idx, l) in (0..n).step_by(n / 20 + 1).enumerate() {
                let x = c.points()[idx % c.len()];
                for stage in 0..plan.stages() {
                    let g = plan.stage_gain(stage);
                    let y: Vec<Complex64> = steering_vector(l, &plan).unwrap().iter().map(|s| g * x * s).collect();
                    let bin = l % plan.bin_counts()[stage];
                    let v = est.classify(stage, bin, &y);
                    assert_eq!(v.kind, VerdictKind::Singleton, "n = {n}, l = {l}");
                    assert_eq!(v.support, Some(l));
                    assert_eq!(v.value, Some(x));
                }
            }
        }
    }

    #[test]
    fn verdict_csv() {
        let verdicts = [
            BinVerdict::zero_ton(0.5),
            BinVerdict::singleton(10, Complex64::new(1.0, -1.0), 0.0),
        ];
        let mut buf = Vec::new();
        write_verdicts(&mut buf, [(0, 0, &verdicts[0]), (0, 2, &verdicts[1])]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "stage,bin,kind,support,value_re,value_im,residual");
        assert_eq!(lines[2], "0,0,ZeroTon,,,,0.5");
        assert_eq!(lines[3], "0,2,Singleton,10,1.0,-1.0,0.0");
    }
}
