//! Densities of ratios of two quadratic forms on one Gaussian vector.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, TkoError};
use crate::gaussian_model::{check_symmetric, GaussianVectorModel};
use crate::mc_oracle::{sample_ratio, McConfig};
use crate::quadform_stats::{cdf_gil_pelaez, chf_matrix, ChfEvaluator, ChfVariant, DensityGrid};
use crate::quadrature::{integrate_semi_infinite, QuadConfig};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const PI: f64 = std::f64::consts::PI;
/// Largest tolerated `P(V2 ≤ 0)` for the unconditioned density.
pub const MAX_NEGATIVE_DENOMINATOR: f64 = 0.01;
/// Smallest tolerated acceptance probability for conditioned sampling.
pub const MIN_ACCEPTANCE: f64 = 0.01;
/// Target for the largest per-cell MC standard error relative to the peak.
pub const CELL_SE_TARGET: f64 = 0.02;

/// `V1 = X'J_num X` over `V2 = X'J_den X`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSpec {
    j_num: DMatrix<f64>,
    j_den: DMatrix<f64>,
    model: GaussianVectorModel,
    threshold: Option<f64>,
    numerator_squared: bool,
}

impl RatioSpec {
    pub fn new(j_num: DMatrix<f64>, j_den: DMatrix<f64>, model: GaussianVectorModel) -> Result<Self> {
        check_symmetric(&j_num)?;
        check_symmetric(&j_den)?;
        for j in [&j_num, &j_den] {
            if j.nrows() != model.dim() {
                return Err(TkoError::DimensionMismatch { expected: model.dim(), got: j.nrows() });
            }
        }
        Ok(Self { j_num, j_den, model, threshold: None, numerator_squared: false })
    }

    pub fn with_threshold(mut self, tau: f64) -> Result<Self> {
        if !(tau >= 0.0) {
            return Err(TkoError::InvalidParameter(format!("threshold must be nonnegative, got {tau}")));
        }
        self.threshold = Some(tau);
        Ok(self)
    }

    pub fn with_numerator_squared(mut self, on: bool) -> Self {
        self.numerator_squared = on;
        self
    }

    pub fn j_num(&self) -> &DMatrix<f64> {
        &self.j_num
    }

    pub fn j_den(&self) -> &DMatrix<f64> {
        &self.j_den
    }

    pub fn model(&self) -> &GaussianVectorModel {
        &self.model
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn numerator_squared(&self) -> bool {
        self.numerator_squared
    }

    pub fn numerator_chf(&self) -> Result<ChfEvaluator> {
        ChfEvaluator::from_model(&self.model, &self.j_num, ChfVariant::Real)
    }

    pub fn denominator_chf(&self) -> Result<ChfEvaluator> {
        ChfEvaluator::from_model(&self.model, &self.j_den, ChfVariant::Real)
    }

    /// `0.1 · E[V2]`, the demonstration threshold.
    pub fn default_threshold(&self) -> Result<f64> {
        Ok(0.1 * self.denominator_chf()?.mean())
    }

    /// `P(V2 ≤ 0)`; exactly zero for a semidefinite denominator.
    pub fn negative_denominator_probability(&self) -> Result<f64> {
        let chf = self.denominator_chf()?;
        let l = Cholesky::new(self.model.covariance().clone()).ok_or(TkoError::NotPositiveDefinite)?.l();
        let core = l.transpose() * &self.j_den * &l;
        let eig = SymmetricEigen::new((&core + core.transpose()) * 0.5).eigenvalues;
        let max = eig.amax();
        if eig.iter().all(|&e| e >= -1e-12 * max) {
            return Ok(0.0);
        }
        cdf_gil_pelaez(0.0, &chf)
    }
}

/// `E[exp(i(ξ1 V1 + ξ2 V2))]`, the matrix chf of the folded form.
pub fn joint_chf(xi1: f64, xi2: f64, spec: &RatioSpec) -> Result<Complex64> {
    let j = &spec.j_num * xi1 + &spec.j_den * xi2;
    chf_matrix(1.0, spec.model.mu(), spec.model.covariance(), &j)
}

/// Whitened pieces for the ratio integral at one `r`.
struct RatioKernel {
    nu: Vec<f64>,
    k2: DMatrix<f64>,
    m: DVector<f64>,
}

fn ratio_kernel(spec: &RatioSpec, l: &DMatrix<f64>, white_mu: &DVector<f64>, r: f64) -> RatioKernel {
    let k = &spec.j_num - &spec.j_den * r;
    let core = l.transpose() * k * l;
    let eig = SymmetricEigen::new((&core + core.transpose()) * 0.5);
    let q = eig.eigenvectors;
    let k2 = q.transpose() * (l.transpose() * &spec.j_den * l) * &q;
    let m = q.transpose() * white_mu;
    RatioKernel { nu: eig.eigenvalues.iter().copied().collect(), k2, m }
}

/// `E[V2 e^{iξ(V1 - rV2)}]` from the whitened eigenbasis.
fn weighted_chf(rk: &RatioKernel, xi: f64) -> Complex64 {
    let n = rk.nu.len();
    let one = Complex64::new(1.0, 0.0);
    let mut log_phi = Complex64::new(0.0, 0.0);
    let mut y = Vec::with_capacity(n);
    let mut trace = Complex64::new(0.0, 0.0);
    for jx in 0..n {
        let w = one - I * (2.0 * xi * rk.nu[jx]);
        log_phi += -0.5 * w.ln() + I * (xi * rk.nu[jx] * rk.m[jx] * rk.m[jx]) / w;
        y.push(rk.m[jx] / w);
        trace += rk.k2[(jx, jx)] / w;
    }
    let mut quad = Complex64::new(0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            quad += y[a] * rk.k2[(a, b)] * y[b];
        }
    }
    log_phi.exp() * (trace + quad)
}

/// Proportionality constant when `J_num = c·J_den`.
fn proportional(spec: &RatioSpec) -> Option<f64> {
    let dd = spec.j_den.dot(&spec.j_den);
    if dd == 0.0 {
        return None;
    }
    let c = spec.j_num.dot(&spec.j_den) / dd;
    let resid = (&spec.j_num - &spec.j_den * c).amax();
    (resid <= 1e-12 * spec.j_num.amax().max(1e-300)).then_some(c)
}

fn point_mass(grid: &[f64], at: f64) -> DensityGrid {
    let n = grid.len();
    let mut pdf = vec![0.0; n];
    if n >= 2 && at >= grid[0] && at <= grid[n - 1] {
        let i = (0..n)
            .min_by(|&a, &b| (grid[a] - at).abs().total_cmp(&(grid[b] - at).abs()))
            .unwrap_or(0);
        let left = if i > 0 { grid[i] - grid[i - 1] } else { 0.0 };
        let right = if i + 1 < n { grid[i + 1] - grid[i] } else { 0.0 };
        pdf[i] = 2.0 / (left + right);
    }
    DensityGrid::new(grid.to_vec(), pdf, None, 0.0, true)
}

/// Density of `R = V1/V2` on `r_grid`, from
/// `f_R(r) = (1/π) Re ∫_0^∞ E[V2 e^{iξ(V1 - rV2)}] dξ`, which is the ∂/∂ξ2
/// form of the joint chf along `ξ2 = -rξ1`.
pub fn ratio_pdf_geary(r_grid: &[f64], spec: &RatioSpec) -> Result<DensityGrid> {
    let prob = spec.negative_denominator_probability()?;
    if prob >= MAX_NEGATIVE_DENOMINATOR {
        return Err(TkoError::DenominatorNotPositive { prob });
    }
    if let Some(c) = proportional(spec) {
        return Ok(point_mass(r_grid, c));
    }
    let l = Cholesky::new(spec.model.covariance().clone()).ok_or(TkoError::NotPositiveDefinite)?.l();
    let white_mu = l.solve_lower_triangular(spec.model.mu()).ok_or(TkoError::NotPositiveDefinite)?;
    let cfg = QuadConfig { abs_tol: 1e-13, rel_tol: 1e-11, max_panels: 4000 };
    let points: Vec<(f64, f64, bool)> = r_grid
        .par_iter()
        .map(|&r| {
            let rk = ratio_kernel(spec, &l, &white_mu, r);
            let numax = rk.nu.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if numax == 0.0 {
                return (f64::INFINITY, 0.0, false);
            }
            let res = integrate_semi_infinite(|xi| weighted_chf(&rk, xi).re, 0.0, 1.0 / numax, &cfg);
            (res.value / PI, res.error / PI, res.converged)
        })
        .collect();
    let max_err = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let converged = points.iter().all(|p| p.2);
    Ok(DensityGrid::new(
        r_grid.to_vec(),
        points.iter().map(|p| p.0).collect(),
        None,
        max_err,
        converged,
    ))
}

/// Bin edges around grid points: midpoints inside, half cells at the ends.
pub fn edges_around(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut e = Vec::with_capacity(n + 1);
    e.push(grid[0] - 0.5 * (grid[1] - grid[0]));
    for w in grid.windows(2) {
        e.push(0.5 * (w[0] + w[1]));
    }
    e.push(grid[n - 1] + 0.5 * (grid[n - 1] - grid[n - 2]));
    e
}

/// MC density on grid cells, doubling the sample count until the largest
/// cell standard error is below 2% of the peak density or the cap is hit.
fn conditioned_mc(r_grid: &[f64], spec: &RatioSpec, cfg: &McConfig) -> Result<DensityGrid> {
    if r_grid.len() < 2 || r_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(TkoError::InvalidParameter("ratio grid must be strictly increasing".into()));
    }
    let edges = edges_around(r_grid);
    let pilot_cfg = McConfig { n_samples: 20_000.max(cfg.n_partitions), bin_edges: Some(edges.clone()), ..cfg.clone() };
    let pilot = sample_ratio(spec, &pilot_cfg);
    let rate = match &pilot {
        Ok(p) => p.acceptance_rate,
        Err(TkoError::AcceptanceTooSmall { .. }) => 0.0,
        Err(e) => return Err(e.clone()),
    };
    if rate < MIN_ACCEPTANCE {
        return Err(TkoError::AcceptanceTooSmall { rate });
    }
    let mut n = cfg.n_samples;
    loop {
        let run = sample_ratio(spec, &McConfig { n_samples: n, bin_edges: Some(edges.clone()), ..cfg.clone() })?;
        let h = &run.histogram;
        let acc = run.accepted as f64;
        let widths: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
        let dens: Vec<f64> = h.counts.iter().zip(&widths).map(|(&c, w)| c as f64 / (acc * w)).collect();
        let se: Vec<f64> = h
            .counts
            .iter()
            .zip(&widths)
            .map(|(&c, w)| {
                let p = c as f64 / acc;
                (p * (1.0 - p) / acc).sqrt() / w
            })
            .collect();
        let peak = dens.iter().copied().fold(0.0, f64::max);
        let worst = se.iter().copied().fold(0.0, f64::max);
        let certified = worst < CELL_SE_TARGET * peak;
        if certified || 2 * n > cfg.max_samples {
            let mut g = DensityGrid::new(r_grid.to_vec(), dens, None, worst, certified);
            g.meta.acceptance_rate = Some(run.acceptance_rate);
            return Ok(g);
        }
        n *= 2;
    }
}

/// Density of `V1/V2` given `V2 > τ` by rejection sampling.
pub fn ratio_pdf_conditioned(r_grid: &[f64], spec: &RatioSpec, cfg: &McConfig) -> Result<DensityGrid> {
    match spec.threshold {
        Some(t) if t > 0.0 => {}
        _ => return Err(TkoError::InvalidParameter("conditioned density needs a positive threshold".into())),
    }
    conditioned_mc(r_grid, &spec.clone().with_numerator_squared(false), cfg)
}

/// Density of `V1²/V2` (conditioned on `V2 > τ` when a threshold is set).
pub fn envelope_ratio_pdf(r_grid: &[f64], spec: &RatioSpec, cfg: &McConfig) -> Result<DensityGrid> {
    conditioned_mc(r_grid, &spec.clone().with_numerator_squared(true), cfg)
}

/// `f_{V3}(v3) = [f_{V1}(√v3) + f_{V1}(-√v3)] / (2√v3)` for `V3 = V1²`.
pub fn squared_density<F: Fn(f64) -> f64>(f_v1: F, v3: f64) -> f64 {
    if v3 <= 0.0 {
        return 0.0;
    }
    let r = v3.sqrt();
    (f_v1(r) + f_v1(-r)) / (2.0 * r)
}

/// `∫_0^∞ v f_num(r v) f_den(v) dv`, the density of a ratio of independent
/// variables with a positive denominator. `scale` sets the quadrature map.
pub fn independent_ratio_density<F: Fn(f64) -> f64, G: Fn(f64) -> f64>(
    f_num: F,
    f_den: G,
    r: f64,
    scale: f64,
) -> f64 {
    let cfg = QuadConfig { abs_tol: 1e-13, rel_tol: 1e-10, max_panels: 2000 };
    integrate_semi_infinite(|v| v * f_num(r * v) * f_den(v), 0.0, scale, &cfg).value
}

/// Mean and covariance of `(I1, Q1, I2, Q2)` for two adjacent complex samples
/// `C_k = A e^{iθ_k} + noise`, `θ_{1,2} = π/4 ∓ Δ/2`, complex noise covariance
/// `N0 [[1, ρe^{iφ}], [ρe^{-iφ}, 1]]`.
pub fn iq_model(amplitude: f64, phase_diff: f64, rho: Complex64, n0: f64) -> Result<GaussianVectorModel> {
    let t1 = std::f64::consts::FRAC_PI_4 - 0.5 * phase_diff;
    let t2 = std::f64::consts::FRAC_PI_4 + 0.5 * phase_diff;
    let cbar = [Complex64::from_polar(amplitude, t1), Complex64::from_polar(amplitude, t2)];
    let lc = DMatrix::from_row_slice(2, 2, &[Complex64::new(n0, 0.0), rho * n0, rho.conj() * n0, Complex64::new(n0, 0.0)]);
    iq_model_from_complex(&cbar, &lc)
}

/// Real 4-vector model `(I1, Q1, I2, Q2)` from a circular complex pair:
/// `E[I_k I_l] = E[Q_k Q_l] = Re(Lc_kl)/2`, `E[I_k Q_l] = -Im(Lc_kl)/2`.
pub fn iq_model_from_complex(cbar: &[Complex64; 2], lc: &DMatrix<Complex64>) -> Result<GaussianVectorModel> {
    let mu = DVector::from_vec(vec![cbar[0].re, cbar[0].im, cbar[1].re, cbar[1].im]);
    let mut m = DMatrix::zeros(4, 4);
    for k in 0..2 {
        for l in 0..2 {
            let sigma = lc[(k, l)].re / 2.0;
            let tau = -lc[(k, l)].im / 2.0;
            m[(2 * k, 2 * l)] = sigma;
            m[(2 * k + 1, 2 * l + 1)] = sigma;
            m[(2 * k, 2 * l + 1)] = tau;
            m[(2 * k + 1, 2 * l)] = -tau;
        }
    }
    let n0 = lc[(0, 0)].re;
    GaussianVectorModel::new(mu, m, n0)
}

/// Kernels on `(I1, Q1, I2, Q2)`.
pub mod iq_kernels {
    use nalgebra::DMatrix;

    fn pair(a: f64, b: f64) -> DMatrix<f64> {
        // a·I1Q2 + b·I2Q1  (I1=0, Q1=1, I2=2, Q2=3)
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 3)] = 0.5 * a;
        j[(3, 0)] = 0.5 * a;
        j[(1, 2)] = 0.5 * b;
        j[(2, 1)] = 0.5 * b;
        j
    }

    /// `2(I1Q2 - I2Q1)`
    pub fn sine_numerator() -> DMatrix<f64> {
        pair(2.0, -2.0)
    }

    /// `I1² + I2² + Q1² + Q2²`
    pub fn power() -> DMatrix<f64> {
        DMatrix::identity(4, 4)
    }

    /// `I1Q2 - I2Q1`
    pub fn cross() -> DMatrix<f64> {
        pair(1.0, -1.0)
    }

    /// `I1Q2 + I2Q1`
    pub fn cross_sum() -> DMatrix<f64> {
        pair(1.0, 1.0)
    }
}

/// Densities of the sine correlator `2(I1Q2 - I2Q1)/(I1² + I2² + Q1² + Q2²)`
/// (unconditioned ratio integral) and the tangent correlator
/// `(I1Q2 - I2Q1)/(I1Q2 + I2Q1)` (conditioned MC, default threshold).
pub fn iq_correlator_ratios(
    model: &GaussianVectorModel,
    grid_sine: &[f64],
    grid_tangent: &[f64],
    cfg: &McConfig,
) -> Result<(DensityGrid, DensityGrid)> {
    let sine = RatioSpec::new(iq_kernels::sine_numerator(), iq_kernels::power(), model.clone())?;
    let a = ratio_pdf_geary(grid_sine, &sine)?;
    let tangent = RatioSpec::new(iq_kernels::cross(), iq_kernels::cross_sum(), model.clone())?;
    let tau = tangent.default_threshold()?;
    let tangent = if tau > 0.0 {
        tangent.with_threshold(tau)?
    } else {
        tangent.with_threshold(0.0)?
    };
    let b = conditioned_mc(grid_tangent, &tangent, cfg)?;
    Ok((a, b))
}
