//! Front-end design: stage count and bin counts, the clustered circular-shift
//! pattern, and mutual-incoherence screening of that pattern.
//!
//! Signal lengths come from a preset table of factorizable `n`; the planner
//! does not factor arbitrary integers.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_GAMMA: f64 = 0.2;
pub const DEFAULT_C1: f64 = 8.0;
pub const DEFAULT_N_SCALE: f64 = 2.0;
/// Upper bound on `k / sum(f_i)`.
pub const DEFAULT_MAX_LOAD: f64 = 0.4;
pub const MAX_SCREEN_DRAWS: usize = 200;

/// Largest cluster spacing we allow; beyond this `2 pi / b^i` is below f64 resolution.
const MAX_SPACING: f64 = 9.007_199_254_740_992e15;

/// Layout of the delay chains of one cluster family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Number of clusters `C`.
    pub clusters: usize,
    /// Delay chains per cluster `N`.
    pub per_cluster: usize,
    /// Spacing base `b`; cluster `c` is equispaced by `b^c`.
    pub base: u64,
}

impl ClusterParams {
    pub fn delay_chains(&self) -> usize {
        self.clusters * self.per_cluster
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftLayout {
    /// Cluster-major shifts `(r_c + j b^c) mod n`.
    Clustered(ClusterParams),
    /// Arbitrary shifts with no exploitable structure.
    Explicit,
}

/// Sparsity regime, from `delta = ln k / ln n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    VerySparse,
    LessSparse,
    /// Stage layout fixed by a preset.
    Forced,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageLayout {
    pub regime: Regime,
    pub bin_counts: Vec<usize>,
}

impl StageLayout {
    pub fn stages(&self) -> usize {
        self.bin_counts.len()
    }

    pub fn periods(&self, n: usize) -> Vec<usize> {
        self.bin_counts.iter().map(|f| n / f).collect()
    }
}

/// Frozen description of the sampling structure.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontendPlan {
    n: usize,
    bin_counts: Vec<usize>,
    shifts: Vec<usize>,
    layout: ShiftLayout,
    gamma: f64,
    c1: f64,
}

impl FrontendPlan {
    pub fn new(
        n: usize,
        bin_counts: Vec<usize>,
        shifts: Vec<usize>,
        layout: ShiftLayout,
        gamma: f64,
        c1: f64,
    ) -> Result<Self> {
        if n == 0 {
            return invalid("signal length must be positive");
        }
        if bin_counts.len() < 2 {
            return invalid("a front-end needs at least two stages");
        }
        if let Some(f) = bin_counts.iter().find(|&&f| f == 0 || !n.is_multiple_of(f)) {
            return invalid(format!("bin count {f} does not divide n = {n}"));
        }
        if shifts.is_empty() {
            return invalid("at least one delay chain is required");
        }
        if let Some(r) = shifts.iter().find(|&&r| r >= n) {
            return invalid(format!("shift {r} out of range for n = {n}"));
        }
        if !(gamma > 0.0 && gamma <= 1.0 / 3.0) {
            return invalid(format!("gamma must lie in (0, 1/3], got {gamma}"));
        }
        if !(c1.is_finite() && c1 > 0.0) {
            return invalid(format!("c1 must be positive, got {c1}"));
        }
        if let ShiftLayout::Clustered(p) = layout {
            if p.per_cluster < 2 || p.clusters == 0 {
                return invalid("clusters need at least two delay chains each");
            }
            if p.base < 2 || (n > 1 && (n as u64).is_multiple_of(p.base)) {
                return invalid(format!("spacing base {} must not divide n = {n}", p.base));
            }
            if (p.base as f64).powi(p.clusters as i32 - 1) > MAX_SPACING {
                return invalid(format!(
                    "{} clusters at base {} exceed f64 frequency resolution",
                    p.clusters, p.base
                ));
            }
            if shifts.len() != p.delay_chains() {
                return invalid(format!(
                    "{} shifts for {} clusters of {}",
                    shifts.len(),
                    p.clusters,
                    p.per_cluster
                ));
            }
            let heads: Vec<usize> = shifts.iter().step_by(p.per_cluster).copied().collect();
            if clustered_shifts(n, &heads, p.per_cluster, p.base) != shifts {
                return invalid("shifts do not follow the clustered pattern");
            }
        }
        Ok(FrontendPlan {
            n,
            bin_counts,
            shifts,
            layout,
            gamma,
            c1,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stages `d`.
    pub fn stages(&self) -> usize {
        self.bin_counts.len()
    }

    pub fn bin_counts(&self) -> &[usize] {
        &self.bin_counts
    }

    pub fn periods(&self) -> Vec<usize> {
        self.bin_counts.iter().map(|f| self.n / f).collect()
    }

    pub fn shifts(&self) -> &[usize] {
        &self.shifts
    }

    /// Number of delay chains `D`.
    pub fn delay_chains(&self) -> usize {
        self.shifts.len()
    }

    pub fn layout(&self) -> ShiftLayout {
        self.layout
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    /// Energy threshold `(1 + gamma) D`.
    pub fn threshold(&self) -> f64 {
        (1.0 + self.gamma) * self.delay_chains() as f64
    }

    pub fn total_bins(&self) -> usize {
        self.bin_counts.iter().sum()
    }

    /// Time-domain samples read by the front-end, `D * sum(f_i)`.
    pub fn samples_used(&self) -> usize {
        self.delay_chains() * self.total_bins()
    }

    /// Signal amplitude gain of a stage-`i` bin, `sqrt(f_i)`.
    pub fn stage_gain(&self, stage: usize) -> f64 {
        (self.bin_counts[stage] as f64).sqrt()
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0 / 3.0) {
            return invalid(format!("gamma must lie in (0, 1/3], got {gamma}"));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(&PlanFile::from(self))?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: PlanFile = toml::from_str(text)?;
        file.into_plan()
    }
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    n: u64,
    gamma: f64,
    c1: f64,
    shifts: Vec<u64>,
    layout: LayoutFile,
    stage: Vec<StageFile>,
}

#[derive(Serialize, Deserialize)]
struct LayoutFile {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    clusters: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    per_cluster: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    base: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct StageFile {
    bins: u64,
    period: u64,
}

impl From<&FrontendPlan> for PlanFile {
    fn from(p: &FrontendPlan) -> Self {
        let layout = match p.layout {
            ShiftLayout::Clustered(c) => LayoutFile {
                kind: "clustered".into(),
                clusters: Some(c.clusters as u64),
                per_cluster: Some(c.per_cluster as u64),
                base: Some(c.base),
            },
            ShiftLayout::Explicit => LayoutFile {
                kind: "explicit".into(),
                clusters: None,
                per_cluster: None,
                base: None,
            },
        };
        PlanFile {
            n: p.n as u64,
            gamma: p.gamma,
            c1: p.c1,
            shifts: p.shifts.iter().map(|&r| r as u64).collect(),
            layout,
            stage: p
                .bin_counts
                .iter()
                .map(|&f| StageFile {
                    bins: f as u64,
                    period: (p.n / f) as u64,
                })
                .collect(),
        }
    }
}

impl PlanFile {
    fn into_plan(self) -> Result<FrontendPlan> {
        let n = self.n as usize;
        let layout = match self.layout.kind.as_str() {
            "clustered" => {
                let field = |v: Option<u64>, name: &str| {
                    v.ok_or_else(|| Error::Format(format!("clustered layout is missing `{name}`")))
                };
                ShiftLayout::Clustered(ClusterParams {
                    clusters: field(self.layout.clusters, "clusters")? as usize,
                    per_cluster: field(self.layout.per_cluster, "per_cluster")? as usize,
                    base: field(self.layout.base, "base")?,
                })
            }
            "explicit" => ShiftLayout::Explicit,
            other => return Err(Error::Format(format!("unknown layout kind `{other}`"))),
        };
        for s in &self.stage {
            if s.bins == 0 || s.bins * s.period != self.n {
                return Err(Error::Format(format!(
                    "stage with {} bins and period {} does not tile n = {}",
                    s.bins, s.period, self.n
                )));
            }
        }
        FrontendPlan::new(
            n,
            self.stage.iter().map(|s| s.bins as usize).collect(),
            self.shifts.iter().map(|&r| r as usize).collect(),
            layout,
            self.gamma,
            self.c1,
        )
    }
}

/// Mutual-incoherence screening result for a shift pattern.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IncoherenceReport {
    pub mu_max: f64,
    /// `2 sqrt(ln(5n) / D)`.
    pub bound: f64,
    pub passed: bool,
}

/// A signal length with a known factorization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Preset {
    pub name: String,
    pub n: usize,
    /// Pairwise-coprime factors `P_0..P_{d-1}` whose product divides `n`.
    pub base_factors: Vec<usize>,
    /// Stage bin counts and shifts pinned by the preset, bypassing the regime rules.
    pub forced: Option<ForcedLayout>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForcedLayout {
    pub bin_counts: Vec<usize>,
    pub shifts: Vec<usize>,
}

pub const SWEEP_BASE_N: usize = 49 * 50 * 51;

pub fn presets() -> Vec<Preset> {
    let plain = |name: &str, factors: &[usize], cofactor: usize| Preset {
        name: name.to_string(),
        n: factors.iter().product::<usize>() * cofactor,
        base_factors: factors.to_vec(),
        forced: None,
    };
    let mut out = vec![
        Preset {
            name: "paper-20".into(),
            n: 20,
            base_factors: vec![4, 5],
            forced: Some(ForcedLayout {
                bin_counts: vec![4, 5],
                shifts: vec![0, 2, 9],
            }),
        },
        plain("small-1001", &[7, 11, 13], 1),
        plain("paper-1430", &[10, 11, 13], 1),
        plain("small-4080", &[15, 16, 17], 1),
        plain("small-7980", &[19, 20, 21], 1),
        plain("small-9177", &[19, 21, 23], 1),
        plain("paper-124950", &[49, 50, 51], 1),
    ];
    for m in 2..=12 {
        out.push(plain(&format!("paper-124950x{m}"), &[49, 50, 51], m));
    }
    out.push(plain("paper-delta-quarter", &[100, 101, 103], 99));
    out
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}

pub fn preset_for_n(n: usize) -> Option<Preset> {
    presets().into_iter().find(|p| p.n == n)
}

/// `ln k / ln n`, with `k <= 1` mapped to 0.
pub fn sparsity_index(n: usize, k: usize) -> f64 {
    if k <= 1 || n <= 1 {
        0.0
    } else {
        (k as f64).ln() / (n as f64).ln()
    }
}

/// Configuration knobs for [`build_plan`].
#[derive(Clone, Debug, PartialEq)]
pub struct PlannerConfig {
    pub gamma: f64,
    pub c1: f64,
    pub n_scale: f64,
    pub max_load: f64,
    /// Overrides for the automatic `(C, N)` choice.
    pub clusters: Option<usize>,
    pub per_cluster: Option<usize>,
    pub max_draws: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            gamma: DEFAULT_GAMMA,
            c1: DEFAULT_C1,
            n_scale: DEFAULT_N_SCALE,
            max_load: DEFAULT_MAX_LOAD,
            clusters: None,
            per_cluster: None,
            max_draws: MAX_SCREEN_DRAWS,
        }
    }
}

fn layout_for(preset: &Preset, k: usize, max_load: f64) -> std::result::Result<StageLayout, String> {
    if let Some(f) = &preset.forced {
        return Ok(StageLayout {
            regime: Regime::Forced,
            bin_counts: f.bin_counts.clone(),
        });
    }
    let n = preset.n;
    let delta = sparsity_index(n, k);
    let p = &preset.base_factors;
    let layout = if delta <= 1.0 / 3.0 {
        if p.len() != 3 {
            return Err(format!("very-sparse regime needs 3 coprime factors of {n}"));
        }
        StageLayout {
            regime: Regime::VerySparse,
            bin_counts: p.clone(),
        }
    } else {
        // At least three stages even where 1/(1-delta) rounds lower.
        let d = ((1.0 / (1.0 - delta)).round() as usize).max(3);
        if p.len() != d || p.iter().product::<usize>() != n {
            return Err(format!(
                "less-sparse regime (delta = {delta:.3}) needs n = {n} to be a product of {d} coprime factors"
            ));
        }
        StageLayout {
            regime: Regime::LessSparse,
            bin_counts: (0..d).map(|i| (i..i + d - 1).map(|j| p[j % d]).product()).collect(),
        }
    };
    let total: usize = layout.bin_counts.iter().sum();
    if k as f64 > max_load * total as f64 {
        return Err(format!(
            "k = {k} overloads {total} bins (load {:.2} > {max_load})",
            k as f64 / total as f64
        ));
    }
    Ok(layout)
}

fn closest_admissible(n: usize, k: usize, max_load: f64) -> Option<usize> {
    presets()
        .into_iter()
        .filter(|p| p.forced.is_none() && layout_for(p, k, max_load).is_ok())
        .map(|p| p.n)
        .min_by(|a, b| {
            let da = ((*a as f64).ln() - (n as f64).ln()).abs();
            let db = ((*b as f64).ln() - (n as f64).ln()).abs();
            da.total_cmp(&db)
        })
}

/// Stage count and per-stage bin counts for `(n, k)`.
pub fn plan_stages(n: usize, k: usize) -> Result<StageLayout> {
    plan_stages_with(n, k, DEFAULT_MAX_LOAD)
}

pub fn plan_stages_with(n: usize, k: usize, max_load: f64) -> Result<StageLayout> {
    let fail = |why: String| {
        let hint = match closest_admissible(n, k, max_load) {
            Some(m) => format!("; closest admissible n is {m}"),
            None => String::new(),
        };
        Error::Planning(format!("{why}{hint}"))
    };
    let preset = preset_for_n(n).ok_or_else(|| fail(format!("no preset factorization of n = {n}")))?;
    layout_for(&preset, k, max_load).map_err(fail)
}

/// Bin counts for fixed sampling periods, `f_i = n / period_i`.
pub fn bins_for_periods(n: usize, periods: &[usize]) -> Result<Vec<usize>> {
    periods
        .iter()
        .map(|&t| {
            if t == 0 || !n.is_multiple_of(t) {
                Err(Error::Planning(format!("period {t} does not divide n = {n}")))
            } else {
                Ok(n / t)
            }
        })
        .collect()
}

pub fn smallest_prime_not_dividing(n: usize) -> u64 {
    let n = n as u64;
    (2u64..)
        .filter(|&p| (2..p).take_while(|d| d * d <= p).all(|d| p % d != 0))
        .find(|&p| !n.is_multiple_of(p))
        .expect("infinitely many primes")
}

/// Cluster count, chains per cluster, and spacing base for length `n`.
pub fn choose_cluster_params(n: usize, c1: f64) -> ClusterParams {
    choose_cluster_params_with(n, c1, DEFAULT_N_SCALE)
}

pub fn choose_cluster_params_with(n: usize, c1: f64, n_scale: f64) -> ClusterParams {
    let base = smallest_prime_not_dividing(n);
    let ratio = (n as f64 / c1).ln() / (base as f64).ln();
    let nearest = ratio.round();
    // Exact powers must not be bumped up by rounding noise in the logarithms.
    let steps = if (ratio - nearest).abs() < 1e-9 {
        nearest
    } else {
        ratio.ceil()
    };
    let clusters = steps.max(0.0) as usize + 1;
    let per_cluster = (((n as f64).ln().max(0.0).cbrt() * n_scale).round() as usize).max(2);
    ClusterParams {
        clusters,
        per_cluster,
        base,
    }
}

fn pow_mod(base: u64, exp: usize, n: usize) -> usize {
    let n = n as u128;
    let mut acc = 1u128 % n;
    for _ in 0..exp {
        acc = acc * base as u128 % n;
    }
    acc as usize
}

/// Clustered shift sequence for the given cluster heads.
pub fn clustered_shifts(n: usize, heads: &[usize], per_cluster: usize, base: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(heads.len() * per_cluster);
    for (c, &head) in heads.iter().enumerate() {
        let spacing = pow_mod(base, c, n);
        for j in 0..per_cluster {
            out.push(((head as u128 + j as u128 * spacing as u128) % n as u128) as usize);
        }
    }
    out
}

/// Draws `C` uniform cluster heads and lays out the `N C` shifts cluster-major.
pub fn plan_delays(n: usize, params: ClusterParams, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heads: Vec<usize> = (0..params.clusters).map(|_| rng.gen_range(0..n)).collect();
    clustered_shifts(n, &heads, params.per_cluster, params.base)
}

/// `mu(l) = |sum_s exp(2 pi j l r_s / n)| / D` for every `l` in `0..n`.
pub fn coherence_profile(n: usize, shifts: &[usize]) -> Vec<f64> {
    let d = shifts.len() as f64;
    let table: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / n as f64))
        .collect();
    let mut idx = vec![0usize; shifts.len()];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let first = idx[0];
        let mu = if idx.iter().all(|&i| i == first) {
            1.0
        } else {
            (idx.iter().map(|&i| table[i]).sum::<Complex64>().norm() / d).min(1.0)
        };
        out.push(mu);
        for (i, &r) in idx.iter_mut().zip(shifts) {
            *i += r;
            if *i >= n {
                *i -= n;
            }
        }
    }
    out
}

/// Lemma-style incoherence bound `2 sqrt(ln(5n) / D)`.
pub fn incoherence_bound(n: usize, d: usize) -> f64 {
    2.0 * ((5.0 * n as f64).ln() / d as f64).sqrt()
}

pub fn verify_shifts(n: usize, shifts: &[usize]) -> IncoherenceReport {
    let mu_max = coherence_profile(n, shifts).into_iter().skip(1).fold(0.0, f64::max);
    let bound = incoherence_bound(n, shifts.len());
    IncoherenceReport {
        mu_max,
        bound,
        passed: mu_max < bound,
    }
}

/// `O(n D)` scan of the plan's shift pattern.
pub fn verify_incoherence(plan: &FrontendPlan) -> IncoherenceReport {
    verify_shifts(plan.n(), plan.shifts())
}

/// Gershgorin bounds `((1 - mu (s - 1))_+, 1 + mu (s - 1))`.
pub fn rip_bound(mu_max: f64, s: usize) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&mu_max) {
        return invalid(format!("mutual incoherence must lie in [0, 1], got {mu_max}"));
    }
    if s == 0 {
        return invalid("sparsity must be positive");
    }
    let spread = mu_max * (s - 1) as f64;
    Ok(((1.0 - spread).max(0.0), 1.0 + spread))
}

/// Seed of the `draw`-th screening attempt.
fn draw_seed(seed: u64, draw: usize) -> u64 {
    seed.wrapping_add((draw as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Draws shift patterns until one passes the incoherence bound.
///
/// Returns the shifts, their report and the number of draws used.
pub fn screen_delays(
    n: usize,
    params: ClusterParams,
    seed: u64,
    max_draws: usize,
) -> Result<(Vec<usize>, IncoherenceReport, usize)> {
    for draw in 0..max_draws {
        let shifts = plan_delays(n, params, draw_seed(seed, draw));
        let report = verify_shifts(n, &shifts);
        if report.passed {
            return Ok((shifts, report, draw + 1));
        }
    }
    Err(Error::Planning(format!(
        "no shift pattern passed the incoherence bound in {max_draws} draws"
    )))
}

/// Full planner: stages, cluster parameters and a screened shift pattern.
pub fn build_plan(n: usize, k: usize, cfg: &PlannerConfig, seed: u64) -> Result<FrontendPlan> {
    let stages = plan_stages_with(n, k, cfg.max_load)?;
    build_plan_for_bins(n, stages.bin_counts, cfg, seed)
}

/// Like [`build_plan`], with the bin counts supplied by the caller.
pub fn build_plan_for_bins(n: usize, bin_counts: Vec<usize>, cfg: &PlannerConfig, seed: u64) -> Result<FrontendPlan> {
    if let Some(forced) = preset_for_n(n).and_then(|p| p.forced) {
        if forced.bin_counts == bin_counts && cfg.clusters.is_none() && cfg.per_cluster.is_none() {
            return FrontendPlan::new(n, bin_counts, forced.shifts, ShiftLayout::Explicit, cfg.gamma, cfg.c1);
        }
    }
    let auto = choose_cluster_params_with(n, cfg.c1, cfg.n_scale);
    let params = ClusterParams {
        clusters: cfg.clusters.unwrap_or(auto.clusters),
        per_cluster: cfg.per_cluster.unwrap_or(auto.per_cluster),
        base: auto.base,
    };
    let (shifts, _, _) = screen_delays(n, params, seed, cfg.max_draws)?;
    FrontendPlan::new(n, bin_counts, shifts, ShiftLayout::Clustered(params), cfg.gamma, cfg.c1)
}
