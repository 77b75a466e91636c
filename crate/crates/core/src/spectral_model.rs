//! Signal model: k-sparse spectra over a finite constellation, time-domain
//! synthesis, and additive circularly-symmetric white Gaussian noise.
//!
//! Synthesis follows `x[p] = sum_q X[l_q] exp(+2 pi j l_q p / n)` with no
//! `1/n` factor, so spectrum values stay equal to constellation points and the
//! analysis transform in [`crate::oracle::dense_dft`] is its exact inverse.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Converts a decibel SNR to the linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Finite set of admissible non-zero DFT values.
///
/// Magnitudes are `sqrt(rho)/2 + i*sqrt(rho)/m1` for `i = 0..=m1` and phases
/// are `2 pi i / m2` for `i = 0..m2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    rho: f64,
    m1: usize,
    m2: usize,
}

impl Constellation {
    pub const DEFAULT_M1: usize = 1;
    pub const DEFAULT_M2: usize = 8;

    pub fn new(rho: f64, m1: usize, m2: usize) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return invalid(format!("constellation SNR must be positive and finite, got {rho}"));
        }
        if m1 == 0 || m2 == 0 {
            return invalid("constellation level counts must be positive");
        }
        Ok(Constellation { rho, m1, m2 })
    }

    /// Constellation whose mean point energy equals `snr`, so that unit-variance
    /// noise yields exactly that SNR.
    ///
    /// The magnitude set scales with `sqrt(rho)` but its mean square exceeds
    /// `rho` (by 5/4 at `m1 = 1`); `rho` is shrunk to compensate.
    pub fn calibrated(snr: f64, m1: usize, m2: usize) -> Result<Self> {
        let unit = Self::new(1.0, m1, m2)?;
        Self::new(snr / unit.mean_energy(), m1, m2)
    }

    /// Calibrated constellation with the default level counts at an SNR in dB.
    pub fn from_snr_db(db: f64) -> Result<Self> {
        Self::calibrated(db_to_linear(db), Self::DEFAULT_M1, Self::DEFAULT_M2)
    }

    /// Mean of `|a|^2` over the constellation points.
    pub fn mean_energy(&self) -> f64 {
        let m = self.magnitudes();
        m.iter().map(|a| a * a).sum::<f64>() / m.len() as f64
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn magnitude_levels(&self) -> usize {
        self.m1
    }

    pub fn phase_levels(&self) -> usize {
        self.m2
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        let r = self.rho.sqrt();
        (0..=self.m1).map(|i| r / 2.0 + i as f64 * r / self.m1 as f64).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        (0..self.m2).map(|i| 2.0 * PI * i as f64 / self.m2 as f64).collect()
    }

    /// All `(m1 + 1) * m2` points, magnitude-major.
    pub fn points(&self) -> Vec<Complex64> {
        let phases = self.phases();
        self.magnitudes()
            .into_iter()
            .flat_map(|a| phases.iter().map(move |&p| Complex64::from_polar(a, p)))
            .collect()
    }

    pub fn len(&self) -> usize {
        (self.m1 + 1) * self.m2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Nearest constellation point in Euclidean distance.
    pub fn snap(&self, v: Complex64) -> Complex64 {
        self.points()
            .into_iter()
            .min_by(|a, b| (a - v).norm_sqr().total_cmp(&(b - v).norm_sqr()))
            .expect("constellation is never empty")
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Complex64 {
        let a = rng.gen_range(0..=self.m1);
        let p = rng.gen_range(0..self.m2);
        let r = self.rho.sqrt();
        Complex64::from_polar(
            r / 2.0 + a as f64 * r / self.m1 as f64,
            2.0 * PI * p as f64 / self.m2 as f64,
        )
    }
}

/// How non-zero coefficient values are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ValueModel {
    /// Uniform over a finite constellation.
    Constellation(Constellation),
    /// Fixed magnitude with a uniformly random phase in `[0, 2 pi)`.
    ArbitraryPhase { amplitude: f64 },
}

impl ValueModel {
    fn sample<R: Rng>(&self, rng: &mut R) -> Complex64 {
        match self {
            ValueModel::Constellation(c) => c.sample(rng),
            ValueModel::ArbitraryPhase { amplitude } => Complex64::from_polar(*amplitude, rng.gen_range(0.0..2.0 * PI)),
        }
    }

    pub fn constellation(&self) -> Option<&Constellation> {
        match self {
            ValueModel::Constellation(c) => Some(c),
            ValueModel::ArbitraryPhase { .. } => None,
        }
    }
}

/// A length-`n` DFT stored as its non-zero `(index, value)` pairs, sorted by index.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SparseSpectrum {
    n: usize,
    entries: Vec<(usize, Complex64)>,
}

impl SparseSpectrum {
    pub fn new(n: usize, mut entries: Vec<(usize, Complex64)>) -> Result<Self> {
        if n == 0 {
            return invalid("spectrum length must be positive");
        }
        entries.sort_by_key(|e| e.0);
        if let Some(&(l, _)) = entries.iter().find(|e| e.0 >= n) {
            return invalid(format!("index {l} out of range for n = {n}"));
        }
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return invalid("duplicate spectrum index");
        }
        Ok(SparseSpectrum { n, entries })
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, Complex64)] {
        &self.entries
    }

    /// Number of non-zero entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn support(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn get(&self, index: usize) -> Option<Complex64> {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut dense = vec![Complex64::new(0.0, 0.0); self.n];
        for &(l, v) in &self.entries {
            dense[l] = v;
        }
        dense
    }

    pub fn energy(&self) -> f64 {
        self.entries.iter().map(|e| e.1.norm_sqr()).sum()
    }
}

/// `n` complex time-domain samples.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSignal {
    samples: Vec<Complex64>,
}

impl TimeSignal {
    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        if samples.is_empty() {
            return invalid("signal must have at least one sample");
        }
        Ok(TimeSignal { samples })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }
}

/// Random-access view of a length-`n` time-domain signal.
pub trait SampleSource {
    fn len(&self) -> usize;
    fn sample(&self, p: usize) -> Complex64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSource for TimeSignal {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn sample(&self, p: usize) -> Complex64 {
        self.samples[p]
    }
}

/// Noisy synthesis of a sparse spectrum, evaluated only where read.
///
/// Sample `p` costs `O(k)`. Its noise comes from ChaCha stream `p` under
/// `seed`, so repeated reads of one index agree.
#[derive(Clone, Debug)]
pub struct SparseSource<'a> {
    spectrum: &'a SparseSpectrum,
    sigma: f64,
    seed: u64,
}

impl<'a> SparseSource<'a> {
    pub fn new(spectrum: &'a SparseSpectrum, noise_variance: f64, seed: u64) -> Result<Self> {
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return invalid(format!("noise variance must be non-negative, got {noise_variance}"));
        }
        Ok(SparseSource {
            spectrum,
            sigma: (noise_variance / 2.0).sqrt(),
            seed,
        })
    }
}

impl SampleSource for SparseSource<'_> {
    fn len(&self) -> usize {
        self.spectrum.n()
    }

    fn sample(&self, p: usize) -> Complex64 {
        let n = self.spectrum.n();
        let clean: Complex64 = self
            .spectrum
            .entries()
            .iter()
            .map(|&(l, v)| {
                let phase = (l as u128 * p as u128 % n as u128) as f64;
                v * Complex64::from_polar(1.0, 2.0 * PI * phase / n as f64)
            })
            .sum();
        if self.sigma == 0.0 {
            return clean;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(p as u64);
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        clean + Complex64::new(re, im) * self.sigma
    }
}

/// Draws a `k`-sparse spectrum with uniformly random support and constellation values.
pub fn random_spectrum(n: usize, k: usize, c: &Constellation, seed: u64) -> Result<SparseSpectrum> {
    random_spectrum_with(n, k, &ValueModel::Constellation(*c), seed)
}

pub fn random_spectrum_with(n: usize, k: usize, values: &ValueModel, seed: u64) -> Result<SparseSpectrum> {
    if k > n {
        return invalid(format!("sparsity {k} exceeds length {n}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut support = index::sample(&mut rng, n, k).into_vec();
    support.sort_unstable();
    let entries = support.into_iter().map(|l| (l, values.sample(&mut rng))).collect();
    SparseSpectrum::new(n, entries)
}

/// Time-domain signal whose DFT is `s`.
pub fn synthesize(s: &SparseSpectrum) -> TimeSignal {
    let n = s.n();
    let mut buf = s.to_dense();
    if !s.is_empty() {
        // rustfft's inverse is unnormalized with a +j exponent.
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    }
    TimeSignal { samples: buf }
}

/// Adds i.i.d. `CN(0, noise_variance)` noise to every sample.
pub fn add_noise(x: &TimeSignal, noise_variance: f64, seed: u64) -> Result<TimeSignal> {
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return invalid(format!("noise variance must be non-negative, got {noise_variance}"));
    }
    if noise_variance == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = (noise_variance / 2.0).sqrt();
    let samples = x
        .samples
        .iter()
        .map(|&s| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            s + Complex64::new(re, im) * sigma
        })
        .collect();
    Ok(TimeSignal { samples })
}
