//! Peeling back-end: find singleton bins, record them, subtract their
//! contribution from every stage, repeat until nothing changes.

use std::collections::btree_map::{BTreeMap, Entry};
use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::frontend::{steering_vector, BinBank};
use crate::planner::FrontendPlan;
use crate::singleton::{SingletonEstimator, VerdictKind};
use crate::spectral_model::{Constellation, SparseSpectrum};

pub const DEFAULT_MAX_PASSES: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOptions {
    /// Snap recovered values to this constellation.
    pub snap: Option<Constellation>,
    pub max_passes: usize,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            snap: None,
            max_passes: DEFAULT_MAX_PASSES,
        }
    }
}

/// One non-zero-ton verdict acted on during decoding.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeelEvent {
    pub iteration: usize,
    pub stage: usize,
    pub bin: usize,
    pub kind: VerdictKind,
    pub support: Option<usize>,
    pub value_re: Option<f64>,
    pub value_im: Option<f64>,
    /// Set when a singleton named an index that was already recovered; the
    /// verdict is then discarded and logged as a multi-ton.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    pub spectrum: SparseSpectrum,
    pub iterations: usize,
    pub peel_log: Vec<PeelEvent>,
    /// Every bin passed the zero-ton test at exit.
    pub converged: bool,
}

impl DecodeResult {
    /// JSON-lines peel log, one event per line.
    pub fn write_peel_log<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.peel_log {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Subtracts coefficient `(p, v)` from its bin in every stage.
pub fn peel(bank: &mut BinBank, p: usize, v: Complex64, plan: &FrontendPlan) -> Result<()> {
    if !bank.conforms_to(plan) {
        return invalid("bank was not produced under this plan");
    }
    let s = steering_vector(p, plan)?;
    for (stage, &f) in plan.bin_counts().iter().enumerate() {
        let a = plan.stage_gain(stage) * v;
        for (y, sv) in bank.bin_mut(stage, p % f).iter_mut().zip(&s) {
            *y -= a * sv;
        }
    }
    Ok(())
}

fn all_zero_tons(bank: &BinBank, threshold: f64) -> bool {
    (0..bank.stages()).all(|i| (0..bank.bin_counts()[i]).all(|j| bank.energy(i, j) < threshold))
}

/// Runs the peeling decoder on a private copy of `bank`.
///
/// Each pass classifies every bin from the state at the start of the pass,
/// then applies peels stage-major, bin-minor.
pub fn decode(bank: &BinBank, plan: &FrontendPlan, opts: &DecodeOptions) -> Result<DecodeResult> {
    if !bank.conforms_to(plan) {
        return invalid("bank was not produced under this plan");
    }
    if opts.max_passes == 0 {
        return invalid("at least one decoding pass is required");
    }
    let mut bank = bank.clone();
    let estimator = SingletonEstimator::new(plan, opts.snap)?;
    let mut recovered: BTreeMap<usize, Complex64> = BTreeMap::new();
    let mut log = Vec::new();
    let mut iterations = 0;
    let mut converged = None;

    for pass in 1..=opts.max_passes {
        iterations = pass;
        let mut verdicts = Vec::new();
        for (stage, &f) in plan.bin_counts().iter().enumerate() {
            for bin in 0..f {
                let v = estimator.classify(stage, bin, bank.bin(stage, bin));
                if v.kind != VerdictKind::ZeroTon {
                    verdicts.push((stage, bin, v));
                }
            }
        }
        let quiet = verdicts.is_empty();
        let mut peels = 0;
        for (stage, bin, v) in verdicts {
            let mut event = PeelEvent {
                iteration: pass,
                stage,
                bin,
                kind: v.kind,
                support: None,
                value_re: None,
                value_im: None,
                duplicate_of: None,
            };
            if let (VerdictKind::Singleton, Some(p), Some(value)) = (v.kind, v.support, v.value) {
                if let Entry::Vacant(e) = recovered.entry(p) {
                    e.insert(value);
                    peel(&mut bank, p, value, plan)?;
                    peels += 1;
                    event.support = Some(p);
                    event.value_re = Some(value.re);
                    event.value_im = Some(value.im);
                } else {
                    event.kind = VerdictKind::MultiTon;
                    event.duplicate_of = Some(p);
                }
            }
            log.push(event);
        }
        if peels == 0 {
            converged = Some(quiet);
            break;
        }
    }
    let converged = converged.unwrap_or_else(|| all_zero_tons(&bank, plan.threshold()));
    Ok(DecodeResult {
        spectrum: SparseSpectrum::new(plan.n(), recovered.into_iter().collect())?,
        iterations,
        peel_log: log,
        converged,
    })
}
