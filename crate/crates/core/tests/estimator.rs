use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rffast::frontend::{steering_vector, BinObservation};
use rffast::metrics::kay_variance;
use rffast::oracle::brute_singleton;
use rffast::planner::{build_plan, FrontendPlan, PlannerConfig};
use rffast::singleton::{classify_bin, kay_phase, kay_weights, VerdictKind};

fn cn(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn noisy_singleton(plan: &FrontendPlan, l: usize, x: Complex64, rng: &mut ChaCha8Rng) -> BinObservation {
    let f = plan.bin_counts()[0];
    let gain = (f as f64).sqrt();
    let y = steering_vector(l, plan)
        .unwrap()
        .iter()
        .map(|s| gain * x * s + cn(rng))
        .collect();
    BinObservation {
        stage: 0,
        bin: l % f,
        y,
    }
}

#[test]
fn kay_is_unbiased_with_the_predicted_spread() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rho_b = 20.0_f64;
    for n in [4, 6] {
        let w = kay_weights(n).unwrap();
        let omega = 0.9;
        let trials = 4000;
        let errs: Vec<f64> = (0..trials)
            .map(|_| {
                let y: Vec<Complex64> = (0..n)
                    .map(|t| Complex64::from_polar(rho_b.sqrt(), omega * t as f64 + 0.3) + cn(&mut rng))
                    .collect();
                kay_phase(&y, &w).unwrap() - omega
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / trials as f64;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / trials as f64;
        let theory = kay_variance(rho_b, n).unwrap();
        assert!(
            mean.abs() < 4.0 * (theory / trials as f64).sqrt(),
            "N = {n}: bias {mean}"
        );
        assert!((var / theory - 1.0).abs() < 0.2, "N = {n}: {var} vs {theory}");
    }
}

#[test]
fn worked_example_multiton_is_rejected_by_exhaustive_search() {
    let plan = build_plan(20, 5, &PlannerConfig::default(), 0).unwrap();
    let c = rffast::spectral_model::Constellation::from_snr_db(10.0).unwrap();
    let pts = c.points();
    let s1 = steering_vector(1, &plan).unwrap();
    let s5 = steering_vector(5, &plan).unwrap();
    let y = s1
        .iter()
        .zip(&s5)
        .map(|(a, b)| 2.0 * (pts[0] * a + pts[5] * b))
        .collect();
    let obs = BinObservation { stage: 0, bin: 1, y };
    let (_, _, residual) = brute_singleton(&obs, &plan).unwrap();
    assert!(residual > plan.threshold());
    assert_eq!(classify_bin(&obs, &plan, Some(c)).unwrap().kind, VerdictKind::MultiTon);
}

#[test]
fn classifier_agrees_with_exhaustive_search() {
    // Clustered plan at the large preset and the explicit plan at n = 20.
    let c = rffast::spectral_model::Constellation::from_snr_db(5.0).unwrap();
    let large = build_plan(124_950, 40, &PlannerConfig::default(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pts = c.points();
    let trials = 10_000;
    let mut agree = 0;
    let mut accepted = 0;
    for t in 0..trials {
        let plan = &large;
        let l = rng.gen_range(0..plan.n());
        let x = pts[t % pts.len()];
        let obs = noisy_singleton(plan, l, x, &mut rng);
        let v = classify_bin(&obs, plan, None).unwrap();
        if v.kind != VerdictKind::Singleton {
            continue;
        }
        accepted += 1;
        let (lb, vb, _) = brute_singleton(&obs, plan).unwrap();
        if v.support == Some(lb) && (v.value.unwrap() - vb).norm() < 1e-9 {
            agree += 1;
        }
    }
    assert!(accepted > trials * 8 / 10, "only {accepted} accepted");
    assert_eq!(agree, accepted);
}

#[test]
fn classifier_rejects_pure_noise_as_singleton() {
    let plan = build_plan(124_950, 40, &PlannerConfig::default(), 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = plan.delay_chains();
    for t in 0..2000 {
        let y: Vec<Complex64> = (0..d).map(|_| cn(&mut rng)).collect();
        let obs = BinObservation {
            stage: 1,
            bin: t % plan.bin_counts()[1],
            y,
        };
        assert_ne!(classify_bin(&obs, &plan, None).unwrap().kind, VerdictKind::Singleton);
    }
}

#[test]
fn noiseless_singletons_are_exact_at_arbitrary_phase() {
    let plan = build_plan(124_950, 40, &PlannerConfig::default(), 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..500 {
        let l = rng.gen_range(0..plan.n());
        let x = Complex64::from_polar(1.5, rng.gen_range(0.0..2.0 * PI));
        let f = plan.bin_counts()[2];
        let y = steering_vector(l, &plan)
            .unwrap()
            .iter()
            .map(|s| (f as f64).sqrt() * x * s)
            .collect();
        let v = classify_bin(
            &BinObservation {
                stage: 2,
                bin: l % f,
                y,
            },
            &plan,
            None,
        )
        .unwrap();
        assert_eq!(v.support, Some(l));
        assert!((v.value.unwrap() - x).norm() < 1e-9);
    }
}
