//! Monte-Carlo harness: configuration, seeded trials, CSV output and the
//! signal-length sweep.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::formats::csv_writer;
use crate::frontend::{gather, transform};
use crate::metrics::{support_recovery, TrialStats};
use crate::peeling::{decode, DecodeOptions, DEFAULT_MAX_PASSES};
use crate::planner::{
    bins_for_periods, build_plan, build_plan_for_bins, preset, FrontendPlan, PlannerConfig, ShiftLayout, DEFAULT_C1,
    DEFAULT_GAMMA, DEFAULT_MAX_LOAD, DEFAULT_N_SCALE, MAX_SCREEN_DRAWS,
};
use crate::spectral_model::{random_spectrum_with, Constellation, SparseSource, ValueModel};

/// Constellation SNR used when the run is noiseless.
pub const NOISELESS_REFERENCE_DB: f64 = 10.0;
pub const DEFAULT_TARGET: f64 = 0.97;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    Constellation,
    /// Fixed amplitude `sqrt(rho)`, uniform phase.
    ArbitraryPhase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    /// Sets `k = round(n^delta)` when `k` is absent.
    pub delta: Option<f64>,
    /// `inf` means noiseless.
    pub snr_db: f64,
    pub values: ValueKind,
    /// Defaults to on for constellation values.
    pub snap: Option<bool>,
    pub clusters: Option<usize>,
    pub per_cluster: Option<usize>,
    pub gamma: f64,
    pub c1: f64,
    pub n_scale: f64,
    pub max_load: f64,
    pub max_passes: usize,
    pub trials: usize,
    pub seed: Option<u64>,
    /// Seed of the shift draw; defaults to `seed`.
    pub plan_seed: Option<u64>,
    /// Record wall-clock columns; off makes CSV bodies reproducible byte for byte.
    pub timing: bool,
    /// Fixed sampling periods, one per stage; bins become `n / period`.
    /// Empty keeps the preset bin counts, whose periods grow with `n`.
    pub periods: Vec<usize>,
    /// Signal lengths for a sweep.
    pub n_list: Vec<usize>,
    /// Success rate the sweep's (C, N) search must reach.
    pub target: f64,
    /// Largest cluster count the sweep tries.
    pub max_clusters: usize,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: None,
            n: None,
            k: None,
            delta: None,
            snr_db: 5.0,
            values: ValueKind::Constellation,
            snap: None,
            clusters: None,
            per_cluster: None,
            gamma: DEFAULT_GAMMA,
            c1: DEFAULT_C1,
            n_scale: DEFAULT_N_SCALE,
            max_load: DEFAULT_MAX_LOAD,
            max_passes: DEFAULT_MAX_PASSES,
            trials: 1,
            seed: None,
            plan_seed: None,
            timing: true,
            periods: Vec::new(),
            n_list: Vec::new(),
            target: DEFAULT_TARGET,
            max_clusters: 16,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn resolve_n(&self) -> Result<usize> {
        match (&self.preset, self.n) {
            (Some(name), n) => {
                let p = preset(name).ok_or_else(|| Error::InvalidArgument(format!("unknown preset `{name}`")))?;
                if n.is_some_and(|n| n != p.n) {
                    return invalid(format!("preset `{name}` has n = {}, not {}", p.n, n.unwrap_or(0)));
                }
                Ok(p.n)
            }
            (None, Some(n)) => Ok(n),
            (None, None) => invalid("either `preset` or `n` is required"),
        }
    }

    pub fn resolve_k(&self, n: usize) -> Result<usize> {
        match (self.k, self.delta) {
            (Some(k), _) => Ok(k),
            (None, Some(d)) if d > 0.0 && d < 1.0 => Ok((n as f64).powf(d).round() as usize),
            (None, Some(d)) => invalid(format!("delta must lie in (0, 1), got {d}")),
            (None, None) => invalid("either `k` or `delta` is required"),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidArgument("a seed is required".into()))
    }

    pub fn noiseless(&self) -> bool {
        self.snr_db == f64::INFINITY
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return invalid("trials must be at least 1");
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return invalid("snr_db must be a number or inf");
        }
        if !(self.target > 0.0 && self.target <= 1.0) {
            return invalid(format!("target must lie in (0, 1], got {}", self.target));
        }
        let n = self.resolve_n()?;
        let k = self.resolve_k(n)?;
        if k > n {
            return invalid(format!("k = {k} exceeds n = {n}"));
        }
        Ok(())
    }

    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            gamma: self.gamma,
            c1: self.c1,
            n_scale: self.n_scale,
            max_load: self.max_load,
            clusters: self.clusters,
            per_cluster: self.per_cluster,
            max_draws: MAX_SCREEN_DRAWS,
        }
    }

    /// Coefficient distribution implied by the SNR and value kind.
    pub fn value_model(&self) -> Result<ValueModel> {
        let db = if self.noiseless() {
            NOISELESS_REFERENCE_DB
        } else {
            self.snr_db
        };
        let c = Constellation::from_snr_db(db)?;
        Ok(match self.values {
            ValueKind::Constellation => ValueModel::Constellation(c),
            ValueKind::ArbitraryPhase => ValueModel::ArbitraryPhase {
                amplitude: c.mean_energy().sqrt(),
            },
        })
    }

    pub fn noise_variance(&self) -> f64 {
        if self.noiseless() {
            0.0
        } else {
            1.0
        }
    }

    pub fn decode_options(&self) -> Result<DecodeOptions> {
        let model = self.value_model()?;
        let snap = self.snap.unwrap_or(self.values == ValueKind::Constellation);
        Ok(DecodeOptions {
            snap: if snap { model.constellation().copied() } else { None },
            max_passes: self.max_passes,
        })
    }

    pub fn build_plan(&self) -> Result<FrontendPlan> {
        self.validate()?;
        let n = self.resolve_n()?;
        let k = self.resolve_k(n)?;
        let seed = self.plan_seed.map_or_else(|| self.seed(), Ok)?;
        if self.periods.is_empty() {
            build_plan(n, k, &self.planner_config(), seed)
        } else {
            build_plan_for_bins(n, bins_for_periods(n, &self.periods)?, &self.planner_config(), seed)
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub success: bool,
    pub l1: f64,
    pub m: usize,
    pub micros_frontend: u64,
    pub micros_decode: u64,
}

/// Per-trial seed, independent of how trials are scheduled.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed ^ trial as u64
}

fn noise_seed(trial_seed: u64) -> u64 {
    trial_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17) ^ 0xD1B5_4A32_D192_ED03
}

/// Generate, sample, decode and score one trial.
///
/// Timing covers the short DFTs and the decoder; signal synthesis and noise
/// generation happen while gathering samples and are excluded.
pub fn run_trial(
    plan: &FrontendPlan,
    k: usize,
    model: &ValueModel,
    noise_variance: f64,
    opts: &DecodeOptions,
    seed: u64,
) -> Result<TrialRecord> {
    let truth = random_spectrum_with(plan.n(), k, model, seed)?;
    let source = SparseSource::new(&truth, noise_variance, noise_seed(seed))?;
    let sub = gather(&source, plan)?;
    let t0 = Instant::now();
    let bank = transform(sub, plan)?;
    let t1 = Instant::now();
    let result = decode(&bank, plan, opts)?;
    let t2 = Instant::now();
    let (success, l1) = support_recovery(&result.spectrum, &truth)?;
    Ok(TrialRecord {
        seed,
        success,
        l1,
        m: plan.samples_used(),
        micros_frontend: (t1 - t0).as_micros() as u64,
        micros_decode: (t2 - t1).as_micros() as u64,
    })
}

#[derive(Clone, Debug)]
pub struct TrialSet {
    pub plan: FrontendPlan,
    pub records: Vec<TrialRecord>,
    pub stats: TrialStats,
}

impl TrialSet {
    pub fn mean_micros(&self) -> (f64, f64) {
        let t = self.records.len().max(1) as f64;
        (
            self.records.iter().map(|r| r.micros_frontend as f64).sum::<f64>() / t,
            self.records.iter().map(|r| r.micros_decode as f64).sum::<f64>() / t,
        )
    }

    /// Per-trial rows then a summary row whose seed column reads `summary`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv_writer(w)?;
        out.write_record(["seed", "success", "l1", "m", "micros_frontend", "micros_decode"])?;
        for r in &self.records {
            out.write_record([
                r.seed.to_string(),
                u8::from(r.success).to_string(),
                r.l1.to_string(),
                r.m.to_string(),
                r.micros_frontend.to_string(),
                r.micros_decode.to_string(),
            ])?;
        }
        let (fe, de) = self.mean_micros();
        out.write_record([
            "summary".to_string(),
            self.stats.success_rate().to_string(),
            self.stats.l1_error_mean.to_string(),
            self.stats.samples_used.to_string(),
            format!("{fe:.1}"),
            format!("{de:.1}"),
        ])?;
        out.flush()?;
        Ok(())
    }
}

/// Runs `cfg.trials` trials on one plan, in parallel.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<TrialSet> {
    let plan = cfg.build_plan()?;
    run_trials_on(cfg, plan)
}

pub fn run_trials_on(cfg: &ExperimentConfig, plan: FrontendPlan) -> Result<TrialSet> {
    run_trials_budget(cfg, plan, None)
}

/// Trials run in parallel chunks of this size when a failure budget applies.
const BUDGET_CHUNK: usize = 32;

/// Like [`run_trials_on`], but stops after the chunk in which failures first
/// exceed `max_failures`. The returned set then holds fewer than `cfg.trials`
/// records.
pub fn run_trials_budget(cfg: &ExperimentConfig, plan: FrontendPlan, max_failures: Option<usize>) -> Result<TrialSet> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let k = cfg.resolve_k(plan.n())?;
    let model = cfg.value_model()?;
    let opts = cfg.decode_options()?;
    let variance = cfg.noise_variance();
    let start = Instant::now();
    let chunk = if max_failures.is_some() {
        BUDGET_CHUNK
    } else {
        cfg.trials.max(1)
    };
    let mut records: Vec<TrialRecord> = Vec::with_capacity(cfg.trials);
    let mut failures = 0;
    for lo in (0..cfg.trials).step_by(chunk) {
        let hi = (lo + chunk).min(cfg.trials);
        let part = (lo..hi)
            .into_par_iter()
            .map(|t| run_trial(&plan, k, &model, variance, &opts, trial_seed(seed, t)))
            .collect::<Result<Vec<_>>>()?;
        failures += part.iter().filter(|r| !r.success).count();
        records.extend(part);
        if max_failures.is_some_and(|m| failures > m) {
            break;
        }
    }
    let wall_time = start.elapsed().as_secs_f64();
    if !cfg.timing {
        for r in &mut records {
            r.micros_frontend = 0;
            r.micros_decode = 0;
        }
    }
    let stats = TrialStats {
        trials: records.len(),
        support_success: records.iter().filter(|r| r.success).count(),
        l1_error_mean: records.iter().map(|r| r.l1).sum::<f64>() / records.len().max(1) as f64,
        samples_used: plan.samples_used(),
        wall_time,
    };
    Ok(TrialSet { plan, records, stats })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub k: usize,
    pub clusters: usize,
    pub per_cluster: usize,
    pub delay_chains: usize,
    pub m: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub micros_frontend: f64,
    pub micros_decode: f64,
    pub met_target: bool,
}

/// `(C, N)` candidates in increasing order of `D = C N`.
pub fn cluster_candidates(min_clusters: usize, max_clusters: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (2..=4)
        .flat_map(|per| (min_clusters.max(1)..=max_clusters).map(move |c| (c, per)))
        .collect();
    out.sort_by_key(|&(c, per)| (c * per, per));
    out
}

/// For each length in `cfg.n_list`, the cheapest `(C, N)` reaching `cfg.target`.
///
/// Falls back to the last candidate, flagged `met_target = false`, if none does.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    if cfg.n_list.is_empty() {
        return invalid("sweep needs a non-empty n_list");
    }
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    let budget = ((1.0 - cfg.target) * cfg.trials as f64 + 1e-9).floor().max(0.0) as usize;
    let mut floor_d = 0;
    for &n in &cfg.n_list {
        let point = ExperimentConfig {
            n: Some(n),
            preset: None,
            ..cfg.clone()
        };
        let k = point.resolve_k(n)?;
        let auto = crate::planner::choose_cluster_params_with(n, cfg.c1, cfg.n_scale);
        let mut chosen = None;
        let candidates = cluster_candidates(auto.clusters, cfg.max_clusters.max(auto.clusters));
        let last = candidates.len() - 1;
        for (i, &(c, per)) in candidates.iter().enumerate() {
            // Longer signals never get fewer delay chains than shorter ones.
            if c * per < floor_d && i != last {
                continue;
            }
            let trial_cfg = ExperimentConfig {
                clusters: Some(c),
                per_cluster: Some(per),
                ..point.clone()
            };
            let plan = trial_cfg.build_plan()?;
            let budget = if i == last { None } else { Some(budget) };
            let set = run_trials_budget(&trial_cfg, plan, budget)?;
            let met = set.stats.trials == cfg.trials && set.stats.success_rate() >= cfg.target;
            chosen = Some((set, met));
            if met {
                break;
            }
        }
        let (set, met) = chosen.expect("candidate list is never empty");
        let ShiftLayout::Clustered(p) = set.plan.layout() else {
            return invalid(format!("n = {n} has no clustered plan to sweep"));
        };
        let (fe, de) = set.mean_micros();
        floor_d = floor_d.max(set.plan.delay_chains());
        rows.push(SweepRow {
            n,
            k,
            clusters: p.clusters,
            per_cluster: p.per_cluster,
            delay_chains: set.plan.delay_chains(),
            m: set.plan.samples_used(),
            trials: set.stats.trials,
            success_rate: set.stats.success_rate(),
            micros_frontend: fe,
            micros_decode: de,
            met_target: met,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv_writer(w)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Lengths `{1, ..., count} x 124950`.
pub fn base_multiples(count: usize) -> Vec<usize> {
    (1..=count).map(|m| m * crate::planner::SWEEP_BASE_N).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_periods_scale_bins_with_n() {
        let cfg = ExperimentConfig {
            n: Some(2 * 124_950),
            k: Some(40),
            seed: Some(1),
            periods: vec![2550, 2499, 2450],
            ..ExperimentConfig::default()
        };
        assert_eq!(cfg.build_plan().unwrap().bin_counts(), &[98, 100, 102]);
        let bad = ExperimentConfig {
            periods: vec![7],
            ..cfg
        };
        assert!(bad.build_plan().is_err());
    }

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            n: Some(1430),
            k: Some(10),
            seed: Some(5),
            trials: 8,
            timing: false,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_round_trip_and_defaults() {
        let cfg = ExperimentConfig::from_toml("n = 1430\nk = 10\nsnr_db = inf\nseed = 1\n").unwrap();
        assert!(cfg.noiseless());
        assert_eq!(cfg.gamma, DEFAULT_GAMMA);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig { trials: 0, ..base() }.validate().is_err());
        assert!(ExperimentConfig { n: None, ..base() }.validate().is_err());
        let p = ExperimentConfig {
            n: None,
            preset: Some("paper-124950".into()),
            ..base()
        };
        assert_eq!(p.resolve_n().unwrap(), 124_950);
        let d = ExperimentConfig {
            k: None,
            delta: Some(0.5),
            ..base()
        };
        assert_eq!(d.resolve_k(1430).unwrap(), 38);
        assert!(ExperimentConfig {
            preset: Some("nope".into()),
            ..base()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn noiseless_worked_example_succeeds() {
        let cfg = ExperimentConfig {
            preset: Some("paper-20".into()),
            n: None,
            k: Some(5),
            snr_db: f64::INFINITY,
            trials: 1,
            ..base()
        };
        let set = run_trials(&cfg).unwrap();
        assert_eq!(set.stats.trials, 1);
        assert_eq!(set.records[0].m, 27);
        assert!(set.records[0].success);
        assert_eq!(set.records[0].l1, 0.0);
    }

    #[test]
    fn csv_is_reproducible_without_timing() {
        let cfg = base();
        let write = || {
            let mut buf = Vec::new();
            run_trials(&cfg).unwrap().write_csv(&mut buf).unwrap();
            buf
        };
        let a = write();
        assert_eq!(a, write());
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().count(), 1 + 1 + 8 + 1);
        assert!(text.lines().last().unwrap().starts_with("summary,"));
    }

    #[test]
    fn records_report_samples_used() {
        let set = run_trials(&base()).unwrap();
        for r in &set.records {
            assert_eq!(r.m, set.plan.delay_chains() * set.plan.total_bins());
        }
    }

    #[test]
    fn candidates_are_ordered_by_chain_count() {
        let c = cluster_candidates(6, 9);
        assert!(c.windows(2).all(|w| w[0].0 * w[0].1 <= w[1].0 * w[1].1));
        assert_eq!(c[0], (6, 2));
    }

    #[test]
    fn sweep_needs_lengths() {
        assert!(sweep(&base()).is_err());
    }
}
