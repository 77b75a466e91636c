//! Oracle suites behind `rffast verify`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rffast::frontend::{steering_vector, subsample_and_transform, BinObservation};
use rffast::oracle::{brute_singleton, compare, dense_dft, noiseless_check};
use rffast::peeling::{decode, DecodeOptions};
use rffast::planner::{build_plan, presets, PlannerConfig};
use rffast::singleton::{classify_bin, VerdictKind};
use rffast::spectral_model::{random_spectrum, synthesize, Constellation, SparseSpectrum};

use crate::{Failure, Outcome};

type Suite = rffast::Result<Result<String, String>>;

fn inverse_pair(seed: u64) -> Suite {
    let c = Constellation::from_snr_db(10.0)?;
    for (i, p) in presets().iter().filter(|p| p.n <= 10_000).enumerate() {
        let s = random_spectrum(p.n, 5.min(p.n), &c, seed + i as u64)?;
        let r = compare(&dense_dft(&synthesize(&s))?, &s, 1e-9);
        if !r.matched {
            return Ok(Err(format!("n = {}: {}", p.n, r.details)));
        }
    }
    Ok(Ok("dense DFT inverts synthesis at every small preset".into()))
}

fn worked_example() -> Suite {
    let plan = build_plan(20, 5, &PlannerConfig::default(), 0)?;
    let c = Constellation::from_snr_db(10.0)?;
    let pts = c.points();
    let truth = SparseSpectrum::new(20, [1, 3, 5, 10, 15].iter().zip(&pts).map(|(&l, &v)| (l, v)).collect())?;
    let bank = subsample_and_transform(&synthesize(&truth), &plan)?;
    let kind = |b: usize| classify_bin(&bank.observation(0, b), &plan, Some(c)).map(|v| v.kind);
    let roles = [kind(0)?, kind(2)?, kind(1)?];
    let want = [VerdictKind::ZeroTon, VerdictKind::Singleton, VerdictKind::MultiTon];
    let opts = DecodeOptions {
        snap: Some(c),
        ..DecodeOptions::default()
    };
    let exact = decode(&bank, &plan, &opts)?.spectrum == truth;
    Ok(if roles == want && exact {
        Ok("n = 20 bin roles and exact decode".into())
    } else {
        Err(format!("roles {roles:?}, exact {exact}"))
    })
}

fn noiseless_equivalence(instances: usize, seed: u64) -> Suite {
    let pool: Vec<_> = presets().into_iter().filter(|p| p.n <= 10_000).collect();
    let c = Constellation::from_snr_db(10.0)?;
    let opts = DecodeOptions {
        snap: Some(c),
        ..DecodeOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for i in 0..instances as u64 {
        let p = &pool[rng.gen_range(0..pool.len())];
        let k = rng.gen_range(1..=if p.forced.is_some() { 5 } else { 50 });
        let plan = build_plan(p.n, k, &PlannerConfig::default(), seed ^ i)?;
        let truth = random_spectrum(p.n, k, &c, seed.wrapping_add(i))?;
        if !noiseless_check(&truth, &plan) {
            continue;
        }
        checked += 1;
        let x = synthesize(&truth);
        let got = decode(&subsample_and_transform(&x, &plan)?, &plan, &opts)?.spectrum;
        let r = compare(&got, &dense_dft(&x)?, 1e-9);
        if !r.matched {
            return Ok(Err(format!("n = {} k = {k}: {}", p.n, r.details)));
        }
    }
    Ok(Ok(format!("{checked} decodable instances match the dense DFT")))
}

fn singleton_agreement(seed: u64) -> Suite {
    let plan = build_plan(124_950, 40, &PlannerConfig::default(), seed)?;
    let c = Constellation::from_snr_db(5.0)?;
    let pts = c.points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = plan.bin_counts()[0];
    let mut accepted = 0;
    for t in 0..1000 {
        let l = rng.gen_range(0..plan.n());
        let y = steering_vector(l, &plan)?
            .iter()
            .map(|s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                (f as f64).sqrt() * pts[t % pts.len()] * s + Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            })
            .collect();
        let obs = BinObservation {
            stage: 0,
            bin: l % f,
            y,
        };
        let v = classify_bin(&obs, &plan, None)?;
        if v.kind != VerdictKind::Singleton {
            continue;
        }
        accepted += 1;
        let (lb, vb, _) = brute_singleton(&obs, &plan)?;
        if v.support != Some(lb) || (v.value.unwrap_or_default() - vb).norm() > 1e-9 {
            return Ok(Err(format!("index {l}: classifier {:?}, exhaustive {lb}", v.support)));
        }
    }
    Ok(Ok(format!(
        "{accepted} accepted singletons agree with exhaustive search"
    )))
}

pub fn run(instances: usize, seed: u64) -> Outcome<()> {
    let suites: [(&str, Suite); 4] = [
        ("inverse pair", inverse_pair(seed)),
        ("worked example", worked_example()),
        ("noiseless equivalence", noiseless_equivalence(instances, seed)),
        ("singleton agreement", singleton_agreement(seed)),
    ];
    let mut failed = Vec::new();
    for (name, result) in suites {
        match result? {
            Ok(msg) => println!("PASS {name}: {msg}"),
            Err(msg) => {
                println!("FAIL {name}: {msg}");
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verify(format!("failed suites: {}", failed.join(", "))))
    }
}
