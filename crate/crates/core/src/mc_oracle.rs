//! Seeded Monte Carlo oracle.
//!
//! Work is split into a fixed number of partitions. Partition `k` draws from
//! ChaCha8 stream `k` of the configured seed, so results depend only on
//! `(seed, n_partitions)` and never on how many threads ran them. Partial
//! results are recombined in partition order.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TkoError};
use crate::gaussian_model::{CovarianceKernel, GaussianVectorModel};
use crate::operator_kernels::SampledSignal;
use crate::quadrature::{integrate, QuadConfig};
use crate::ratio_stats::RatioSpec;

const PILOT_SAMPLES: usize = 10_000;
const PILOT_STREAM: u64 = u64::MAX;
/// Guard on generated path length.
pub const MAX_PATH_SAMPLES: usize = 10_000_000;
/// Largest dense covariance accepted by the Cholesky fallback.
pub const MAX_CHOLESKY_PATH: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub n_partitions: usize,
    /// Histogram edges; `None` selects Freedman-Diaconis bins from a pilot run.
    pub bin_edges: Option<Vec<f64>>,
    /// Cap for adaptive sample doubling.
    pub max_samples: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            seed: 0x7e4a_11c3,
            n_samples: 1_000_000,
            n_partitions: 64,
            bin_edges: None,
            max_samples: 16_000_000,
        }
    }
}

impl McConfig {
    pub fn new(seed: u64, n_samples: usize) -> Self {
        Self { seed, n_samples, ..Self::default() }
    }

    pub fn with_edges(mut self, edges: Vec<f64>) -> Self {
        self.bin_edges = Some(edges);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_partitions == 0 || self.n_samples < self.n_partitions {
            return Err(TkoError::InvalidParameter(format!(
                "need n_samples >= n_partitions > 0, got {} and {}",
                self.n_samples, self.n_partitions
            )));
        }
        if let Some(e) = &self.bin_edges {
            if e.len() < 2 || e.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(TkoError::InvalidParameter("bin edges must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    fn partition_sizes(&self) -> Vec<usize> {
        let base = self.n_samples / self.n_partitions;
        let extra = self.n_samples % self.n_partitions;
        (0..self.n_partitions).map(|k| base + usize::from(k < extra)).collect()
    }
}

/// The generator for one partition.
pub fn partition_rng(seed: u64, partition: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(partition);
    rng
}

/// Fixed-edge histogram with out-of-range counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(edges: Vec<f64>) -> Self {
        let n = edges.len() - 1;
        Self { edges, counts: vec![0; n], underflow: 0, overflow: 0 }
    }

    pub fn add(&mut self, x: f64) {
        let n = self.counts.len();
        if !(x >= self.edges[0]) {
            self.underflow += 1;
        } else if x >= self.edges[n] {
            self.overflow += 1;
        } else {
            let i = self.edges.partition_point(|&e| e <= x) - 1;
            self.counts[i.min(n - 1)] += 1;
        }
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Density per bin, normalized by all recorded samples.
    pub fn density(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.edges
            .windows(2)
            .zip(&self.counts)
            .map(|(w, &c)| c as f64 / (n * (w[1] - w[0])))
            .collect()
    }

    /// Binomial standard error of each bin density.
    pub fn density_se(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.edges
            .windows(2)
            .zip(&self.counts)
            .map(|(w, &c)| {
                let p = c as f64 / n;
                (p * (1.0 - p) / n).sqrt() / (w[1] - w[0])
            })
            .collect()
    }

    /// `Σ|p̂_i - P_i|` over bins plus the out-of-range mass discrepancy, with
    /// `P_i` the model probability of each bin from its cdf.
    pub fn l1_against_cdf<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        let n = self.total() as f64;
        let cdfs: Vec<f64> = self.edges.iter().map(|&e| cdf(e)).collect();
        let inside: f64 = cdfs.windows(2).zip(&self.counts).map(|(w, &c)| (c as f64 / n - (w[1] - w[0])).abs()).sum();
        let below = (self.underflow as f64 / n - cdfs[0]).abs();
        let above = (self.overflow as f64 / n - (1.0 - cdfs[cdfs.len() - 1])).abs();
        inside + below + above
    }

    /// As [`Histogram::l1_against_cdf`] with bin probabilities integrated from
    /// a density; mass outside the edges is taken as one minus the inside mass.
    pub fn l1_against_pdf<F: Fn(f64) -> f64>(&self, pdf: F) -> f64 {
        let n = self.total() as f64;
        let cfg = QuadConfig { abs_tol: 1e-13, rel_tol: 1e-10, max_panels: 200 };
        let probs: Vec<f64> = self.edges.windows(2).map(|w| integrate(&pdf, w[0], w[1], &cfg).value).collect();
        let inside: f64 = probs.iter().zip(&self.counts).map(|(p, &c)| (c as f64 / n - p).abs()).sum();
        let outside_model = (1.0 - probs.iter().sum::<f64>()).max(0.0);
        let outside = (self.underflow + self.overflow) as f64 / n;
        inside + (outside - outside_model).abs()
    }
}

/// Freedman-Diaconis edges from a sample: width `2·IQR·n^{-1/3}` over the
/// sample's `[0.05%, 99.95%]` quantile range.
pub fn freedman_diaconis_edges(pilot: &[f64], n_final: usize) -> Vec<f64> {
    let mut s: Vec<f64> = pilot.iter().copied().filter(|x| x.is_finite()).collect();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
    let iqr = q(0.75) - q(0.25);
    let (lo, hi) = (q(0.0005), q(0.9995));
    let width = 2.0 * iqr * (n_final as f64).powf(-1.0 / 3.0);
    let span = hi - lo;
    if !(width > 0.0) || !(span > 0.0) {
        let c = q(0.5);
        let h = c.abs().max(1.0) * 1e-6;
        return vec![c - h, c + h];
    }
    let bins = ((span / width).ceil() as usize).clamp(1, 10_000);
    (0..=bins).map(|k| lo + span * k as f64 / bins as f64).collect()
}

/// Power sums of shifted values for cumulant estimation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct PowerSums {
    n: f64,
    s: [f64; 4],
}

impl PowerSums {
    fn add(&mut self, d: f64) {
        let d2 = d * d;
        self.n += 1.0;
        self.s[0] += d;
        self.s[1] += d2;
        self.s[2] += d2 * d;
        self.s[3] += d2 * d2;
    }

    fn merged(parts: &[PowerSums], skip: Option<usize>) -> PowerSums {
        let mut t = PowerSums::default();
        for (k, p) in parts.iter().enumerate() {
            if Some(k) == skip {
                continue;
            }
            t.n += p.n;
            for i in 0..4 {
                t.s[i] += p.s[i];
            }
        }
        t
    }

    /// Unbiased k-statistics `(k1, k2, k3, k4)` of the unshifted data.
    fn k_statistics(&self, shift: f64) -> [f64; 4] {
        let n = self.n;
        let mean = self.s[0] / n;
        let (r1, r2, r3, r4) = (mean, self.s[1] / n, self.s[2] / n, self.s[3] / n);
        let m2 = r2 - r1 * r1;
        let m3 = r3 - 3.0 * r1 * r2 + 2.0 * r1.powi(3);
        let m4 = r4 - 4.0 * r1 * r3 + 6.0 * r1 * r1 * r2 - 3.0 * r1.powi(4);
        let k2 = n / (n - 1.0) * m2;
        let k3 = n * n / ((n - 1.0) * (n - 2.0)) * m3;
        let k4 = n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2) / ((n - 1.0) * (n - 2.0) * (n - 3.0));
        [mean + shift, k2, k3, k4]
    }
}

/// Cumulant estimates with jackknife-over-partitions standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCumulants {
    pub k: [f64; 4],
    pub se: [f64; 4],
}

impl SampleCumulants {
    pub fn mean(&self) -> f64 {
        self.k[0]
    }

    pub fn variance(&self) -> f64 {
        self.k[1]
    }

    /// `(k_s - κ_s)/se_s`.
    pub fn z_scores(&self, exact: &[f64]) -> [f64; 4] {
        let mut z = [0.0; 4];
        for i in 0..4 {
            z[i] = (self.k[i] - exact[i]) / self.se[i];
        }
        z
    }
}

fn jackknife(parts: &[PowerSums], shift: f64) -> SampleCumulants {
    let full = PowerSums::merged(parts, None).k_statistics(shift);
    let g = parts.len() as f64;
    let loo: Vec<[f64; 4]> = (0..parts.len())
        .map(|k| PowerSums::merged(parts, Some(k)).k_statistics(shift))
        .collect();
    let mut se = [0.0; 4];
    for i in 0..4 {
        let avg = loo.iter().map(|v| v[i]).sum::<f64>() / g;
        let ss: f64 = loo.iter().map(|v| (v[i] - avg).powi(2)).sum();
        se[i] = ((g - 1.0) / g * ss).sqrt();
    }
    SampleCumulants { k: full, se }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadformSamples {
    pub n: usize,
    pub cumulants: SampleCumulants,
    pub histogram: Histogram,
}

impl QuadformSamples {
    pub fn mean(&self) -> f64 {
        self.cumulants.k[0]
    }
}

struct Sampler {
    mu: DVector<f64>,
    l: DMatrix<f64>,
}

impl Sampler {
    fn new(model: &GaussianVectorModel) -> Result<Self> {
        let l = Cholesky::new(model.covariance().clone()).ok_or(TkoError::NotPositiveDefinite)?.l();
        Ok(Self { mu: model.mu().clone(), l })
    }

    fn draw(&self, rng: &mut ChaCha8Rng, z: &mut DVector<f64>, x: &mut DVector<f64>) {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        x.copy_from(&self.mu);
        x.gemv(1.0, &self.l, z, 1.0);
    }
}

fn quad(x: &DVector<f64>, j: &DMatrix<f64>) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for c in 0..n {
        let mut col = 0.0;
        for r in 0..n {
            col += j[(r, c)] * x[r];
        }
        acc += col * x[c];
    }
    acc
}

/// Draws `V = X'JX`, `X ~ N(μ, M)`, and returns k-statistics and a histogram.
pub fn sample_quadform(model: &GaussianVectorModel, j: &DMatrix<f64>, cfg: &McConfig) -> Result<QuadformSamples> {
    cfg.validate()?;
    if j.nrows() != model.dim() || !j.is_square() {
        return Err(TkoError::DimensionMismatch { expected: model.dim(), got: j.nrows() });
    }
    let sampler = Sampler::new(model)?;
    let draw_n = |rng: &mut ChaCha8Rng, count: usize, mut sink: Box<dyn FnMut(f64) + '_>| {
        let mut z = DVector::zeros(model.dim());
        let mut x = DVector::zeros(model.dim());
        for _ in 0..count {
            sampler.draw(rng, &mut z, &mut x);
            sink(quad(&x, j));
        }
    };

    let mut pilot = Vec::with_capacity(PILOT_SAMPLES);
    draw_n(&mut partition_rng(cfg.seed, PILOT_STREAM), PILOT_SAMPLES, Box::new(|v| pilot.push(v)));
    let shift = pilot.iter().sum::<f64>() / pilot.len() as f64;
    let edges = cfg
        .bin_edges
        .clone()
        .unwrap_or_else(|| freedman_diaconis_edges(&pilot, cfg.n_samples));

    let parts: Vec<(PowerSums, Histogram)> = cfg
        .partition_sizes()
        .into_par_iter()
        .enumerate()
        .map(|(k, count)| {
            let mut rng = partition_rng(cfg.seed, k as u64);
            let mut sums = PowerSums::default();
            let mut hist = Histogram::new(edges.clone());
            draw_n(
                &mut rng,
                count,
                Box::new(|v| {
                    sums.add(v - shift);
                    hist.add(v);
                }),
            );
            (sums, hist)
        })
        .collect();

    let mut histogram = Histogram::new(edges);
    for (_, h) in &parts {
        histogram.merge(h);
    }
    let sums: Vec<PowerSums> = parts.iter().map(|(s, _)| *s).collect();
    Ok(QuadformSamples { n: cfg.n_samples, cumulants: jackknife(&sums, shift), histogram })
}

/// Draws `Σ_j λ_j N0 (U_j + s_j/√N0)²` directly from a mode list; `dof`
/// normal pairs per mode when narrowband (`dof = 2`).
pub fn sample_modes(
    lambdas: &[f64],
    s: &[f64],
    n0: f64,
    dof: usize,
    cfg: &McConfig,
) -> Result<QuadformSamples> {
    cfg.validate()?;
    if lambdas.len() != s.len() {
        return Err(TkoError::DimensionMismatch { expected: lambdas.len(), got: s.len() });
    }
    let sd = n0.sqrt();
    // narrowband: |√N0 Z + s|² with E|Z|² = 1 split over two parts
    let part_sd = if dof == 2 { (n0 / 2.0).sqrt() } else { sd };
    let one = |rng: &mut ChaCha8Rng| -> f64 {
        lambdas
            .iter()
            .zip(s)
            .map(|(&l, &si)| {
                let u: f64 = StandardNormal.sample(rng);
                let a = part_sd * u + si;
                if dof == 2 {
                    let w: f64 = StandardNormal.sample(rng);
                    let b = part_sd * w;
                    l * (a * a + b * b)
                } else {
                    l * a * a
                }
            })
            .sum()
    };
    let mut prng = partition_rng(cfg.seed, PILOT_STREAM);
    let pilot: Vec<f64> = (0..PILOT_SAMPLES).map(|_| one(&mut prng)).collect();
    let shift = pilot.iter().sum::<f64>() / pilot.len() as f64;
    let edges = cfg
        .bin_edges
        .clone()
        .unwrap_or_else(|| freedman_diaconis_edges(&pilot, cfg.n_samples));
    let parts: Vec<(PowerSums, Histogram)> = cfg
        .partition_sizes()
        .into_par_iter()
        .enumerate()
        .map(|(k, count)| {
            let mut rng = partition_rng(cfg.seed, k as u64);
            let mut sums = PowerSums::default();
            let mut hist = Histogram::new(edges.clone());
            for _ in 0..count {
                let v = one(&mut rng);
                sums.add(v - shift);
                hist.add(v);
            }
            (sums, hist)
        })
        .collect();
    let mut histogram = Histogram::new(edges);
    for (_, h) in &parts {
        histogram.merge(h);
    }
    let sums: Vec<PowerSums> = parts.iter().map(|(s, _)| *s).collect();
    Ok(QuadformSamples { n: cfg.n_samples, cumulants: jackknife(&sums, shift), histogram })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSamples {
    pub total: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    /// Binomial standard error of the acceptance rate.
    pub acceptance_se: f64,
    pub histogram: Histogram,
    /// Accepted ratios in partition order.
    pub ratios: Vec<f64>,
}

impl RatioSamples {
    pub fn mean(&self) -> f64 {
        self.ratios.iter().sum::<f64>() / self.ratios.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.ratios.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (self.ratios.len() as f64 - 1.0)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let mut s = self.ratios.clone();
        s.sort_by(f64::total_cmp);
        s[((s.len() - 1) as f64 * p).round() as usize]
    }

    pub fn iqr(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }
}

/// Joint draws of `(V1, V2)` on one vector; records `V1/V2` (or `V1²/V2`)
/// whenever `V2` exceeds the threshold (zero when unset).
pub fn sample_ratio(spec: &RatioSpec, cfg: &McConfig) -> Result<RatioSamples> {
    cfg.validate()?;
    let model = spec.model();
    let sampler = Sampler::new(model)?;
    let tau = spec.threshold().unwrap_or(0.0);
    let squared = spec.numerator_squared();
    let (jn, jd) = (spec.j_num(), spec.j_den());
    let ratio_of = |x: &DVector<f64>| -> Option<f64> {
        let v2 = quad(x, jd);
        if v2 > tau {
            let v1 = quad(x, jn);
            Some(if squared { v1 * v1 / v2 } else { v1 / v2 })
        } else {
            None
        }
    };
    let edges = match &cfg.bin_edges {
        Some(e) => e.clone(),
        None => {
            let mut rng = partition_rng(cfg.seed, PILOT_STREAM);
            let mut z = DVector::zeros(model.dim());
            let mut x = DVector::zeros(model.dim());
            let mut pilot = Vec::new();
            for _ in 0..PILOT_SAMPLES {
                sampler.draw(&mut rng, &mut z, &mut x);
                if let Some(r) = ratio_of(&x) {
                    pilot.push(r);
                }
            }
            if pilot.is_empty() {
                return Err(TkoError::AcceptanceTooSmall { rate: 0.0 });
            }
            freedman_diaconis_edges(&pilot, cfg.n_samples)
        }
    };
    let parts: Vec<(Vec<f64>, Histogram)> = cfg
        .partition_sizes()
        .into_par_iter()
        .enumerate()
        .map(|(k, count)| {
            let mut rng = partition_rng(cfg.seed, k as u64);
            let mut z = DVector::zeros(model.dim());
            let mut x = DVector::zeros(model.dim());
            let mut hist = Histogram::new(edges.clone());
            let mut kept = Vec::new();
            for _ in 0..count {
                sampler.draw(&mut rng, &mut z, &mut x);
                if let Some(r) = ratio_of(&x) {
                    hist.add(r);
                    kept.push(r);
                }
            }
            (kept, hist)
        })
        .collect();
    let mut histogram = Histogram::new(edges);
    let mut ratios = Vec::new();
    for (kept, h) in parts {
        histogram.merge(&h);
        ratios.extend(kept);
    }
    let accepted = ratios.len();
    if accepted == 0 {
        return Err(TkoError::AcceptanceTooSmall { rate: 0.0 });
    }
    let n = cfg.n_samples as f64;
    let rate = accepted as f64 / n;
    Ok(RatioSamples {
        total: cfg.n_samples,
        accepted,
        acceptance_rate: rate,
        acceptance_se: (rate * (1.0 - rate) / n).sqrt(),
        histogram,
        ratios,
    })
}

/// Estimate of `E[exp(i(ξ1 V1 + ξ2 V2))]` with its standard error (of the
/// complex mean, taken as `sqrt(E|z - m|²/n)`).
pub fn sample_joint_chf(spec: &RatioSpec, xi1: f64, xi2: f64, cfg: &McConfig) -> Result<(Complex64, f64)> {
    cfg.validate()?;
    let model = spec.model();
    let sampler = Sampler::new(model)?;
    let (jn, jd) = (spec.j_num(), spec.j_den());
    let parts: Vec<(Complex64, f64)> = cfg
        .partition_sizes()
        .into_par_iter()
        .enumerate()
        .map(|(k, count)| {
            let mut rng = partition_rng(cfg.seed, k as u64);
            let mut z = DVector::zeros(model.dim());
            let mut x = DVector::zeros(model.dim());
            let mut sum = Complex64::new(0.0, 0.0);
            for _ in 0..count {
                sampler.draw(&mut rng, &mut z, &mut x);
                let phase = xi1 * quad(&x, jn) + xi2 * quad(&x, jd);
                sum += Complex64::new(phase.cos(), phase.sin());
            }
            (sum, count as f64)
        })
        .collect();
    let n: f64 = parts.iter().map(|p| p.1).sum();
    let mean = parts.iter().map(|p| p.0).sum::<Complex64>() / n;
    // |e^{iθ}| = 1, so E|z - m|² = 1 - |m|²
    let se = ((1.0 - mean.norm_sqr()).max(0.0) / n).sqrt();
    Ok((mean, se))
}

/// How a noise path was generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMethod {
    CirculantEmbedding,
    CholeskyFallback,
}

/// A stationary Gaussian path with covariance `R(Δt)` sampled at `fs`.
pub fn sample_noise_path(
    kernel: &CovarianceKernel,
    duration: f64,
    fs: f64,
    cfg: &McConfig,
) -> Result<(SampledSignal, NoiseMethod)> {
    sample_noise_path_stream(kernel, duration, fs, cfg.seed, 0)
}

/// As [`sample_noise_path`] on an explicit generator stream, for drawing
/// many independent paths from one seed.
pub fn sample_noise_path_stream(
    kernel: &CovarianceKernel,
    duration: f64,
    fs: f64,
    seed: u64,
    stream: u64,
) -> Result<(SampledSignal, NoiseMethod)> {
    if !(fs > 0.0) || !(duration > 0.0) {
        return Err(TkoError::InvalidParameter("duration and fs must be positive".into()));
    }
    let n = (duration * fs).round() as usize;
    if n > MAX_PATH_SAMPLES {
        return Err(TkoError::InvalidParameter(format!(
            "path of {n} samples exceeds the {MAX_PATH_SAMPLES} limit"
        )));
    }
    if n < 2 {
        return Err(TkoError::SignalTooShort { needed: 2, got: n });
    }
    let mut rng = partition_rng(seed, stream);
    let m = (2 * n).next_power_of_two();
    let mut c: Vec<Complex64> = (0..m)
        .map(|k| Complex64::new(kernel.value(k.min(m - k) as f64 / fs), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut c);
    let max = c.iter().map(|z| z.re).fold(f64::MIN, f64::max);
    let min = c.iter().map(|z| z.re).fold(f64::MAX, f64::min);
    if min >= -1e-10 * max {
        let mut y: Vec<Complex64> = c
            .iter()
            .map(|l| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(a, b) * (l.re.max(0.0) / m as f64).sqrt()
            })
            .collect();
        fft.process(&mut y);
        let samples = y[..n].iter().map(|z| z.re).collect();
        return Ok((SampledSignal::new(samples, fs)?, NoiseMethod::CirculantEmbedding));
    }
    if n > MAX_CHOLESKY_PATH {
        return Err(TkoError::InvalidParameter(format!(
            "circulant embedding failed and {n} samples exceed the dense fallback limit"
        )));
    }
    let cov = DMatrix::from_fn(n, n, |i, j| kernel.value((i as f64 - j as f64) / fs));
    let jitter = DMatrix::<f64>::identity(n, n) * (1e-12 * kernel.scale);
    let l = Cholesky::new(cov + jitter).ok_or(TkoError::NotPositiveDefinite)?.l();
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let x = l * z;
    Ok((SampledSignal::new(x.iter().copied().collect(), fs)?, NoiseMethod::CholeskyFallback))
}

/// Biased sample autocovariance at lags `0..=max_lag` (mean assumed zero).
pub fn autocovariance(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    (0..=max_lag)
        .map(|k| x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / (n - k) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadform_stats::pdf_single_lambda;
    use crate::special::normal_cdf;

    #[test]
    fn chi_square_three_cumulants() {
        let model = GaussianVectorModel::new(DVector::zeros(3), DMatrix::identity(3, 3), 1.0).unwrap();
        let s = sample_quadform(&model, &DMatrix::identity(3, 3), &McConfig::new(1, 200_000)).unwrap();
        let z = s.cumulants.z_scores(&[3.0, 6.0, 24.0, 144.0]);
        for v in z {
            assert!(v.abs() < 5.0, "{z:?}");
        }
    }

    #[test]
    fn reproducible_for_fixed_partitions() {
        let model = GaussianVectorModel::new(DVector::from_vec(vec![0.2, 1.0]), DMatrix::identity(2, 2), 1.0).unwrap();
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5]));
        let cfg = McConfig::new(42, 50_000);
        let a = sample_quadform(&model, &j, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sample_quadform(&model, &j, &cfg).unwrap());
        assert_eq!(a, b);
        let c = sample_quadform(&model, &j, &McConfig::new(43, 50_000)).unwrap();
        assert_ne!(a.cumulants.k, c.cumulants.k);
    }

    #[test]
    fn standard_error_scales_like_root_n() {
        let model = GaussianVectorModel::new(DVector::zeros(3), DMatrix::identity(3, 3), 1.0).unwrap();
        let j = DMatrix::identity(3, 3);
        let a = sample_quadform(&model, &j, &McConfig::new(5, 200_000)).unwrap();
        let b = sample_quadform(&model, &j, &McConfig::new(5, 400_000)).unwrap();
        let ratio = b.cumulants.se[0] / a.cumulants.se[0];
        assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.2 * std::f64::consts::FRAC_1_SQRT_2);
    }

    #[test]
    fn single_mode_histogram_matches_density() {
        let s = sample_modes(&[1.0], &[0.0], 1.0, 1, &McConfig::new(7, 200_000)).unwrap();
        let l1 = s.histogram.l1_against_pdf(|v| pdf_single_lambda(v, 1.0, 0.0, 1.0).unwrap());
        assert!(l1 < 0.03, "{l1}");
        let l1c = s.histogram.l1_against_cdf(|v| if v <= 0.0 { 0.0 } else { 2.0 * normal_cdf(v.sqrt()) - 1.0 });
        assert!(l1c < 0.03, "{l1c}");
        assert!((l1 - l1c).abs() < 2e-3, "{l1} vs {l1c}");
    }

    #[test]
    fn histogram_accounting() {
        let mut h = Histogram::new(vec![0.0, 1.0, 2.0]);
        for x in [-1.0, 0.0, 0.5, 1.0, 1.999, 2.0, f64::NAN] {
            h.add(x);
        }
        assert_eq!(h.counts, vec![2, 2]);
        assert_eq!((h.underflow, h.overflow), (2, 1));
        assert_eq!(h.total(), 7);
    }

    #[test]
    fn freedman_diaconis_width() {
        let pilot: Vec<f64> = (0..10_000).map(|k| k as f64 / 10_000.0).collect();
        let e = freedman_diaconis_edges(&pilot, 1_000_000);
        let width = e[1] - e[0];
        assert!((width - 2.0 * 0.5 * 0.01).abs() < 1e-3);
    }

    #[test]
    fn noise_path_autocovariance() {
        let k = CovarianceKernel::new(0.5, 1.0).unwrap();
        let mut acc = vec![0.0; 4];
        let paths = 40;
        for s in 0..paths {
            let (p, method) = sample_noise_path_stream(&k, 4096.0, 1.0, 9, s).unwrap();
            assert_eq!(method, NoiseMethod::CirculantEmbedding);
            for (a, c) in acc.iter_mut().zip(autocovariance(&p.samples, 3)) {
                *a += c / paths as f64;
            }
        }
        for (lag, a) in acc.iter().enumerate() {
            assert!((a - k.value(lag as f64)).abs() < 0.02, "lag {lag}: {a}");
        }
        assert!((acc[1] - (-0.5f64).exp()).abs() < 0.02);
    }

    #[test]
    fn noise_path_guards() {
        let k = CovarianceKernel::new(0.5, 1.0).unwrap();
        assert!(sample_noise_path(&k, 2e7, 1.0, &McConfig::default()).is_err());
        assert!(sample_noise_path(&k, 10.0, 0.0, &McConfig::default()).is_err());
    }
}
