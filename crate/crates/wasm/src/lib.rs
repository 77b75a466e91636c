//! Browser bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string; the `*_json` functions underneath are
//! plain Rust so they can be tested natively.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use rffast::frontend::{gather, transform};
use rffast::metrics::support_recovery;
use rffast::peeling::{decode, DecodeOptions};
use rffast::planner::{
    build_plan, choose_cluster_params, coherence_profile, plan_delays, preset, presets, smallest_prime_not_dividing,
    verify_shifts, ClusterParams, PlannerConfig, DEFAULT_C1,
};
use rffast::singleton::{cluster_estimate, kay_weights, refine, SingletonEstimator, VerdictKind};
use rffast::spectral_model::{random_spectrum, Constellation, SparseSource, SparseSpectrum};

/// Profiles longer than this are reduced to per-bucket maxima for plotting.
const PROFILE_POINTS: usize = 2048;

fn kind(k: VerdictKind) -> &'static str {
    match k {
        VerdictKind::ZeroTon => "zero-ton",
        VerdictKind::Singleton => "singleton",
        VerdictKind::MultiTon => "multi-ton",
    }
}

fn entries(s: &SparseSpectrum) -> Vec<(usize, f64, f64)> {
    s.entries().iter().map(|&(l, v)| (l, v.re, v.im)).collect()
}

#[derive(Serialize)]
struct PresetInfo {
    name: String,
    n: usize,
}

pub fn presets_json() -> String {
    let list: Vec<PresetInfo> = presets()
        .into_iter()
        .filter(|p| p.n <= 2_000_000)
        .map(|p| PresetInfo { name: p.name, n: p.n })
        .collect();
    serde_json::to_string(&list).expect("plain data serializes")
}

/// Plans, samples and decodes one instance. `snr_db = inf` is noiseless.
/// The n = 20 preset with k = 5 uses the support {1, 3, 5, 10, 15}.
pub fn decode_json(preset_name: &str, k: usize, snr_db: f64, seed: u32) -> Result<Value, String> {
    let p = preset(preset_name).ok_or_else(|| format!("unknown preset `{preset_name}`"))?;
    let seed = seed as u64;
    let noiseless = snr_db == f64::INFINITY;
    let c = Constellation::from_snr_db(if noiseless { 10.0 } else { snr_db }).map_err(|e| e.to_string())?;
    let plan = build_plan(p.n, k, &PlannerConfig::default(), seed).map_err(|e| e.to_string())?;
    let truth = if p.n == 20 && k == 5 {
        let pts = c.points();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = [1, 3, 5, 10, 15].map(|l| (l, pts[rng.gen_range(0..pts.len())]));
        SparseSpectrum::new(20, vals.to_vec())
    } else {
        random_spectrum(p.n, k, &c, seed)
    }
    .map_err(|e| e.to_string())?;
    let variance = if noiseless { 0.0 } else { 1.0 };
    let source = SparseSource::new(&truth, variance, seed ^ 0x006e_6f69_7365).map_err(|e| e.to_string())?;
    let bank = gather(&source, &plan)
        .and_then(|s| transform(s, &plan))
        .map_err(|e| e.to_string())?;

    let estimator = SingletonEstimator::new(&plan, Some(c)).map_err(|e| e.to_string())?;
    let roles: Vec<Vec<&str>> = (0..plan.stages())
        .map(|i| {
            (0..plan.bin_counts()[i])
                .map(|j| kind(estimator.classify(i, j, bank.bin(i, j)).kind))
                .collect()
        })
        .collect();
    let opts = DecodeOptions {
        snap: Some(c),
        ..DecodeOptions::default()
    };
    let result = decode(&bank, &plan, &opts).map_err(|e| e.to_string())?;
    let (success, l1) = support_recovery(&result.spectrum, &truth).map_err(|e| e.to_string())?;
    let events: Vec<Value> = result
        .peel_log
        .iter()
        .map(|e| json!({"pass": e.iteration, "stage": e.stage, "bin": e.bin, "kind": kind(e.kind), "support": e.support}))
        .collect();
    Ok(json!({
        "n": plan.n(),
        "k": k,
        "bins": plan.bin_counts(),
        "delay_chains": plan.delay_chains(),
        "samples": plan.samples_used(),
        "threshold": plan.threshold(),
        "truth": entries(&truth),
        "estimate": entries(&result.spectrum),
        "initial_roles": roles,
        "events": events,
        "passes": result.iterations,
        "converged": result.converged,
        "success": success,
        "l1": l1,
    }))
}

fn cn(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// One noisy tone through `clusters` clusters of `per_cluster` samples with
/// spacings `base^c`, showing each cluster's estimate and the refined result.
pub fn kay_json(
    omega: f64,
    rho_b: f64,
    per_cluster: usize,
    clusters: usize,
    base: u32,
    seed: u32,
) -> Result<Value, String> {
    if rho_b.is_nan() || rho_b <= 0.0 || clusters == 0 || base < 2 {
        return Err("need rho_b > 0, at least one cluster and base >= 2".into());
    }
    if (base as f64).powi(clusters as i32 - 1) > 2f64.powi(52) {
        return Err("base^(clusters - 1) is too large to represent exactly".into());
    }
    let w = kay_weights(per_cluster).map_err(|e| e.to_string())?;
    let omega = omega.rem_euclid(TAU);
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let phase0 = rng.gen_range(0.0..TAU);
    let mut estimates = Vec::with_capacity(clusters);
    let mut rows = Vec::with_capacity(clusters);
    let mut spacing = 1.0;
    for c in 0..clusters {
        let head = rng.gen_range(0.0..1e4);
        let y: Vec<Complex64> = (0..per_cluster)
            .map(|t| Complex64::from_polar(rho_b.sqrt(), omega * (head + t as f64 * spacing) + phase0) + cn(&mut rng))
            .collect();
        let est = cluster_estimate(&y, &w, spacing).ok_or("a noisy sample was exactly zero")?;
        estimates.push(est);
        let running = refine(&estimates, base as u64);
        let err = (running - omega + TAU / 2.0).rem_euclid(TAU) - TAU / 2.0;
        rows.push(json!({
            "cluster": c,
            "spacing": spacing,
            "period": TAU / spacing,
            "estimate": est,
            "refined": running,
            "error": err,
        }));
        spacing *= base as f64;
    }
    Ok(json!({"omega": omega, "clusters": rows, "refined": refine(&estimates, base as u64)}))
}

/// Shift pattern the planner would draw for `(C, N)` at length `n`.
pub fn draw_shifts(n: usize, clusters: usize, per_cluster: usize, seed: u32) -> Vec<u32> {
    let params = ClusterParams {
        clusters,
        per_cluster,
        base: smallest_prime_not_dividing(n),
    };
    plan_delays(n, params, seed as u64)
        .into_iter()
        .map(|r| r as u32)
        .collect()
}

/// `mu(l)` over all `l`, reduced to bucket maxima, with the screening verdict.
pub fn coherence_json(n: usize, shifts: &[u32]) -> Result<Value, String> {
    if !(2..=2_000_000).contains(&n) {
        return Err("n must lie in 2..=2000000".into());
    }
    if shifts.is_empty() || shifts.iter().any(|&r| r as usize >= n) {
        return Err("shifts must be non-empty and below n".into());
    }
    let shifts: Vec<usize> = shifts.iter().map(|&r| r as usize).collect();
    let profile = coherence_profile(n, &shifts);
    let bucket = n.div_ceil(PROFILE_POINTS);
    let reduced: Vec<f64> = profile[1..]
        .chunks(bucket)
        .map(|c| c.iter().copied().fold(0.0, f64::max))
        .collect();
    let report = verify_shifts(n, &shifts);
    let worst = profile
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(l, _)| l);
    Ok(json!({
        "n": n,
        "d": shifts.len(),
        "bucket": bucket,
        "profile": reduced,
        "mu_max": report.mu_max,
        "argmax": worst,
        "bound": report.bound,
        "passed": report.passed,
    }))
}

/// Default `(C, N)` and base for length `n`.
pub fn cluster_defaults_json(n: usize) -> Value {
    let p = choose_cluster_params(n, DEFAULT_C1);
    json!({"clusters": p.clusters, "per_cluster": p.per_cluster, "base": p.base})
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn list_presets() -> String {
    presets_json()
}

#[wasm_bindgen]
pub fn run_decode(preset_name: &str, k: usize, snr_db: f64, seed: u32) -> Result<String, JsError> {
    to_js(decode_json(preset_name, k, snr_db, seed))
}

#[wasm_bindgen]
pub fn explore_kay(
    omega: f64,
    rho_b: f64,
    per_cluster: usize,
    clusters: usize,
    base: u32,
    seed: u32,
) -> Result<String, JsError> {
    to_js(kay_json(omega, rho_b, per_cluster, clusters, base, seed))
}

#[wasm_bindgen]
pub fn scan_coherence(n: usize, clusters: usize, per_cluster: usize, seed: u32) -> Result<String, JsError> {
    if clusters == 0 || per_cluster == 0 {
        return Err(JsError::new("need at least one cluster and one chain per cluster"));
    }
    to_js(coherence_json(n, &draw_shifts(n, clusters, per_cluster, seed)))
}

#[wasm_bindgen]
pub fn cluster_defaults(n: usize) -> String {
    cluster_defaults_json(n).to_string()
}
