use std::io::Cursor;

use proptest::prelude::*;

use rffast::experiment::{run_trials, ExperimentConfig};
use rffast::formats::{read_signal, read_spectrum, write_signal, write_spectrum};
use rffast::spectral_model::{add_noise, random_spectrum, synthesize, Constellation};

fn small(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        preset: Some("paper-1430".into()),
        k: Some(10),
        trials: 20,
        seed: Some(seed),
        timing: false,
        ..ExperimentConfig::default()
    }
}

#[test]
fn fixed_seed_gives_identical_csv() {
    let csv = |cfg: &ExperimentConfig| {
        let mut out = Vec::new();
        run_trials(cfg).unwrap().write_csv(&mut out).unwrap();
        out
    };
    let a = csv(&small(3));
    assert_eq!(a, csv(&small(3)));
    assert_ne!(a, csv(&small(4)));
    assert!(String::from_utf8(a).unwrap().starts_with("# ffast-csv v1\n"));
}

#[test]
fn noiseless_worked_example_run_succeeds() {
    let cfg = ExperimentConfig {
        preset: Some("paper-20".into()),
        k: Some(5),
        snr_db: f64::INFINITY,
        trials: 1,
        seed: Some(0),
        ..ExperimentConfig::default()
    };
    assert_eq!(run_trials(&cfg).unwrap().stats.success_rate(), 1.0);
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = small(9);
    assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    assert!(ExperimentConfig::from_toml("trials = 3\nbogus = 1\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn binary_formats_round_trip(seed in 0u64..1000, k in 0usize..20) {
        let c = Constellation::from_snr_db(5.0).unwrap();
        let s = random_spectrum(1430, k, &c, seed).unwrap();
        let mut buf = Vec::new();
        write_spectrum(&mut buf, &s).unwrap();
        prop_assert_eq!(read_spectrum(&mut Cursor::new(&buf)).unwrap(), s.clone());

        let x = add_noise(&synthesize(&s), 0.5, seed).unwrap();
        let mut buf = Vec::new();
        write_signal(&mut buf, &x).unwrap();
        prop_assert_eq!(read_signal(&mut Cursor::new(&buf)).unwrap(), x);
    }
}
