//! Circular shifts, periodic subsampling and short DFTs, grouped into per-bin
//! observation vectors.
//!
//! Each short DFT is unnormalized and then scaled by `1/sqrt(f_i)`, so a bin
//! holds `sqrt(f_i) * sum_{l = j mod f_i} X[l] s_l` plus `CN(0, I_D)` noise
//! when the input noise has unit variance.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Result};
use crate::formats::csv_writer;
use crate::planner::FrontendPlan;
use crate::spectral_model::{SampleSource, TimeSignal};

/// One bin: `D` samples in the plan's shift order.
#[derive(Clone, Debug, PartialEq)]
pub struct BinObservation {
    pub stage: usize,
    pub bin: usize,
    pub y: Vec<Complex64>,
}

/// Every bin of every stage, stored bin-major per stage.
#[derive(Clone, Debug, PartialEq)]
pub struct BinBank {
    bin_counts: Vec<usize>,
    chains: usize,
    stages: Vec<Vec<Complex64>>,
}

impl BinBank {
    /// All-zero bank shaped for `plan`.
    pub fn zeros(plan: &FrontendPlan) -> Self {
        let chains = plan.delay_chains();
        BinBank {
            bin_counts: plan.bin_counts().to_vec(),
            chains,
            stages: plan
                .bin_counts()
                .iter()
                .map(|&f| vec![Complex64::default(); f * chains])
                .collect(),
        }
    }

    pub fn stages(&self) -> usize {
        self.bin_counts.len()
    }

    pub fn bin_counts(&self) -> &[usize] {
        &self.bin_counts
    }

    pub fn delay_chains(&self) -> usize {
        self.chains
    }

    pub fn total_bins(&self) -> usize {
        self.bin_counts.iter().sum()
    }

    /// Whether this bank has the shape `plan` produces.
    pub fn conforms_to(&self, plan: &FrontendPlan) -> bool {
        self.bin_counts == plan.bin_counts() && self.chains == plan.delay_chains()
    }

    pub fn bin(&self, stage: usize, bin: usize) -> &[Complex64] {
        &self.stages[stage][bin * self.chains..(bin + 1) * self.chains]
    }

    pub fn bin_mut(&mut self, stage: usize, bin: usize) -> &mut [Complex64] {
        &mut self.stages[stage][bin * self.chains..(bin + 1) * self.chains]
    }

    pub fn observation(&self, stage: usize, bin: usize) -> BinObservation {
        BinObservation {
            stage,
            bin,
            y: self.bin(stage, bin).to_vec(),
        }
    }

    pub fn observations(&self) -> impl Iterator<Item = BinObservation> + '_ {
        (0..self.stages()).flat_map(move |i| (0..self.bin_counts[i]).map(move |j| self.observation(i, j)))
    }

    pub fn energy(&self, stage: usize, bin: usize) -> f64 {
        self.bin(stage, bin).iter().map(|v| v.norm_sqr()).sum()
    }

    /// Debug dump with columns stage, bin, chain, shift, real, imag.
    pub fn write_csv<W: Write>(&self, plan: &FrontendPlan, w: W) -> Result<()> {
        let mut out = csv_writer(w)?;
        out.write_record(["stage", "bin", "chain", "shift", "real", "imag"])?;
        for (i, &f) in self.bin_counts.iter().enumerate() {
            for j in 0..f {
                for (s, v) in self.bin(i, j).iter().enumerate() {
                    out.serialize((i, j, s, plan.shifts()[s], v.re, v.im))?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Raw subsampled sequences, one `f_i`-point block per (stage, chain).
#[derive(Clone, Debug, PartialEq)]
pub struct Subsamples {
    stages: Vec<Vec<Complex64>>,
}

/// Reads the `D * sum(f_i)` samples the plan needs.
pub fn gather<S: SampleSource + ?Sized>(y: &S, plan: &FrontendPlan) -> Result<Subsamples> {
    let n = plan.n();
    if y.len() != n {
        return invalid(format!("signal length {} does not match plan length {n}", y.len()));
    }
    let stages = plan
        .bin_counts()
        .iter()
        .map(|&f| {
            let period = n / f;
            let mut out = Vec::with_capacity(f * plan.delay_chains());
            for &r in plan.shifts() {
                let mut p = r;
                for _ in 0..f {
                    out.push(y.sample(p));
                    p += period;
                    if p >= n {
                        p -= n;
                    }
                }
            }
            out
        })
        .collect();
    Ok(Subsamples { stages })
}

/// Short DFTs of gathered samples, scaled by `1/sqrt(f_i)` and regrouped by bin.
pub fn transform(mut sub: Subsamples, plan: &FrontendPlan) -> Result<BinBank> {
    let chains = plan.delay_chains();
    let shaped = sub.stages.len() == plan.stages()
        && sub
            .stages
            .iter()
            .zip(plan.bin_counts())
            .all(|(s, f)| s.len() == f * chains);
    if !shaped {
        return invalid("subsamples were not gathered under this plan");
    }
    let mut bank = BinBank::zeros(plan);
    let mut planner = FftPlanner::<f64>::new();
    for (i, &f) in plan.bin_counts().iter().enumerate() {
        let scale = 1.0 / (f as f64).sqrt();
        let fft = planner.plan_fft_forward(f);
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let stage = &mut bank.stages[i];
        for (s, block) in sub.stages[i].chunks_mut(f).enumerate() {
            fft.process_with_scratch(block, &mut scratch);
            for (j, v) in block.iter().enumerate() {
                stage[j * chains + s] = v * scale;
            }
        }
    }
    Ok(bank)
}

/// Runs the front-end on `y`.
pub fn subsample_and_transform(y: &TimeSignal, plan: &FrontendPlan) -> Result<BinBank> {
    transform(gather(y, plan)?, plan)
}

/// `exp(2 pi j (l r mod n) / n)`, with the product reduced in integers first.
pub(crate) fn steering_entry(n: usize, l: usize, r: usize) -> Complex64 {
    let phase = (l as u128 * r as u128 % n as u128) as f64;
    Complex64::from_polar(1.0, 2.0 * PI * phase / n as f64)
}

pub(crate) fn steering_into(n: usize, shifts: &[usize], l: usize, out: &mut Vec<Complex64>) {
    out.clear();
    out.extend(shifts.iter().map(|&r| steering_entry(n, l, r)));
}

/// Column `l` of the bin-measurement matrix.
pub fn steering_vector(l: usize, plan: &FrontendPlan) -> Result<Vec<Complex64>> {
    if l >= plan.n() {
        return invalid(format!("index {l} out of range for n = {}", plan.n()));
    }
    let mut out = Vec::with_capacity(plan.delay_chains());
    steering_into(plan.n(), plan.shifts(), l, &mut out);
    Ok(out)
}

/// Bin of stage `stage` that index `l` aliases into.
pub fn bin_index(l: usize, stage: usize, plan: &FrontendPlan) -> usize {
    l % plan.bin_counts()[stage]
}

/// Time-domain samples the front-end reads.
pub fn samples_read(plan: &FrontendPlan) -> usize {
    plan.samples_used()
}
