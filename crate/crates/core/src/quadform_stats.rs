//! Characteristic functions, cumulants and densities of a single quadratic
//! form `V = X'JX`, `X ~ N(μ, M)`.
//!
//! Every representation reduces to independent modes. A real mode contributes
//! `(1 - iξb)^{-1/2} exp(iξc / (1 - iξb))` to the chf with `b = 2λN0` and
//! `c = λs²`; a narrowband (two degrees of freedom) mode contributes
//! `(1 - iξb)^{-1} exp(iξc / (1 - iξb))` with `b = λN0`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TkoError};
use crate::gaussian_model::{check_hermitian, check_symmetric, decompose, GaussianVectorModel, SpectralDecomposition};
use crate::quadrature::{integrate, integrate_breaks, integrate_semi_infinite, QuadConfig, QuadResult};
use crate::special::bessel_i0e;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const TAU: f64 = std::f64::consts::TAU;
const PI: f64 = std::f64::consts::PI;

/// Default number of cumulants reported.
pub const DEFAULT_S_MAX: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChfVariant {
    /// One real degree of freedom per mode.
    Real,
    /// Two degrees of freedom per mode (complex envelope).
    Narrowband,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChfRepresentation {
    Matrix {
        mu: DVector<f64>,
        m: DMatrix<f64>,
        j: DMatrix<f64>,
    },
    Diagonal(SpectralDecomposition),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Mode {
    b: f64,
    c: f64,
}

/// The chf of one quadratic form, evaluable anywhere on the complex plane
/// away from its branch points on the imaginary axis.
#[derive(Debug, Clone)]
pub struct ChfEvaluator {
    representation: ChfRepresentation,
    variant: ChfVariant,
    modes: Vec<Mode>,
    /// `eig(MJ)` for the matrix representation; fixes the determinant branch.
    reference: Vec<f64>,
    m_chol: Option<Cholesky<f64, nalgebra::Dyn>>,
}

impl ChfEvaluator {
    pub fn from_matrix(mu: DVector<f64>, m: DMatrix<f64>, j: DMatrix<f64>, variant: ChfVariant) -> Result<Self> {
        let model = GaussianVectorModel::new(mu.clone(), m.clone(), 1.0)?;
        let d = decompose(&model, &j)?;
        let m_chol = Cholesky::new(m.clone()).ok_or(TkoError::NotPositiveDefinite)?;
        let mut ev = Self::from_decomposition(d, variant);
        ev.reference = ev.modes_lambda_n0();
        ev.representation = ChfRepresentation::Matrix { mu, m, j };
        ev.m_chol = Some(m_chol);
        Ok(ev)
    }

    pub fn from_model(model: &GaussianVectorModel, j: &DMatrix<f64>, variant: ChfVariant) -> Result<Self> {
        Self::from_matrix(model.mu().clone(), model.covariance().clone(), j.clone(), variant)
    }

    pub fn from_decomposition(d: SpectralDecomposition, variant: ChfVariant) -> Self {
        let factor = match variant {
            ChfVariant::Real => 2.0,
            ChfVariant::Narrowband => 1.0,
        };
        let modes = d
            .lambdas
            .iter()
            .zip(&d.s)
            .filter(|(l, _)| **l != 0.0)
            .map(|(&l, &s)| Mode { b: factor * l * d.n0, c: l * s * s })
            .collect();
        Self {
            representation: ChfRepresentation::Diagonal(d),
            variant,
            modes,
            reference: Vec::new(),
            m_chol: None,
        }
    }

    fn modes_lambda_n0(&self) -> Vec<f64> {
        let factor = match self.variant {
            ChfVariant::Real => 2.0,
            ChfVariant::Narrowband => 1.0,
        };
        self.modes.iter().map(|m| m.b / factor).collect()
    }

    pub fn variant(&self) -> ChfVariant {
        self.variant
    }

    pub fn representation(&self) -> &ChfRepresentation {
        &self.representation
    }

    /// Same form with the diagonal route, whatever the current representation.
    pub fn to_diagonal(&self) -> Self {
        let mut ev = self.clone();
        if let ChfRepresentation::Matrix { mu, m, j } = &self.representation {
            let model = GaussianVectorModel::new(mu.clone(), m.clone(), 1.0).expect("validated at construction");
            ev = Self::from_decomposition(decompose(&model, j).expect("validated at construction"), self.variant);
        }
        ev
    }

    /// `log φ(ξ)` on the per-mode principal branches.
    pub fn log_eval(&self, xi: Complex64) -> Complex64 {
        match &self.representation {
            ChfRepresentation::Diagonal(_) => self.diagonal_log(xi),
            ChfRepresentation::Matrix { mu, m, j } => {
                let chol = self.m_chol.as_ref().expect("matrix route keeps its factor");
                match self.variant {
                    ChfVariant::Real => matrix_real_log_chf(xi, mu, m, chol, j, &self.reference, 1.0),
                    ChfVariant::Narrowband => {
                        let zero = DVector::zeros(mu.len());
                        matrix_real_log_chf(xi, mu, m, chol, j, &self.reference, 0.5)
                            + matrix_real_log_chf(xi, &zero, m, chol, j, &self.reference, 0.5)
                    }
                }
            }
        }
    }

    pub fn eval(&self, xi: Complex64) -> Complex64 {
        self.log_eval(xi).exp()
    }

    pub fn eval_real(&self, xi: f64) -> Complex64 {
        self.eval(Complex64::new(xi, 0.0))
    }

    fn diagonal_log(&self, xi: Complex64) -> Complex64 {
        let power = self.power();
        self.modes
            .iter()
            .map(|m| {
                let w = Complex64::new(1.0, 0.0) - I * xi * m.b;
                -power * w.ln() + I * xi * m.c / w
            })
            .sum()
    }

    fn power(&self) -> f64 {
        match self.variant {
            ChfVariant::Real => 0.5,
            ChfVariant::Narrowband => 1.0,
        }
    }

    /// Upper bound of `|φ(ξ)|` on the real axis.
    pub fn envelope(&self, xi: f64) -> f64 {
        let power = self.power();
        self.modes
            .iter()
            .map(|m| (1.0 + xi * xi * m.b * m.b).powf(-0.5 * power))
            .product()
    }

    /// Cumulants `κ_1..κ_{s_max}` from the mode parameters.
    pub fn cumulants(&self, s_max: usize) -> CumulantSet {
        let power = self.power();
        let mut kappa = Vec::with_capacity(s_max);
        let mut fact = 1.0; // (k-1)!
        for k in 1..=s_max {
            if k > 1 {
                fact *= (k - 1) as f64;
            }
            let kf = k as f64;
            let v: f64 = self
                .modes
                .iter()
                .map(|m| power * fact * m.b.powi(k as i32) + kf * fact * m.c * m.b.powi(k as i32 - 1))
                .sum();
            kappa.push(v);
        }
        CumulantSet::from_kappa(kappa)
    }

    pub fn mean(&self) -> f64 {
        self.modes.iter().map(|m| self.power() * m.b + m.c).sum()
    }

    /// `max_j 1/|b_j|`: to the right of this abscissa every mode has `|1 - iξb| ≥ 1` in the lower and upper half
    /// planes, and the vertical ray from it carries no exponential growth.
    pub fn ray_abscissa(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| 1.0 / m.b.abs())
            .fold(0.0, f64::max)
    }

    /// `1/max|b_j|`, the natural ξ scale of the fastest mode.
    pub fn fast_scale(&self) -> f64 {
        let bmax = self.modes.iter().map(|m| m.b.abs()).fold(0.0, f64::max);
        if bmax > 0.0 {
            1.0 / bmax
        } else {
            1.0
        }
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// The degenerate form `V = 0`.
    pub fn is_trivial(&self) -> bool {
        self.modes.is_empty()
    }
}

/// `log` of the real-form matrix chf with covariance `scale · M`.
fn matrix_real_log_chf(
    xi: Complex64,
    mu: &DVector<f64>,
    m: &DMatrix<f64>,
    chol: &Cholesky<f64, nalgebra::Dyn>,
    j: &DMatrix<f64>,
    reference: &[f64],
    scale: f64,
) -> Complex64 {
    let n = mu.len();
    let mj = (m * j * scale).map(|x| Complex64::new(x, 0.0));
    let a = DMatrix::<Complex64>::identity(n, n) - mj * (I * xi * 2.0);
    let lu = a.clone().lu();
    let det = lu.determinant();
    let ref_log: Complex64 = reference
        .iter()
        .map(|&l| (Complex64::new(1.0, 0.0) - I * xi * (2.0 * l * scale)).ln())
        .sum();
    let principal = det.ln();
    let turns = ((ref_log.im - principal.im) / TAU).round();
    let log_det = Complex64::new(principal.re, principal.im + turns * TAU);
    if mu.iter().all(|&x| x == 0.0) {
        return -0.5 * log_det;
    }
    let muc = mu.map(|x| Complex64::new(x, 0.0));
    let Some(y) = lu.solve(&muc) else {
        return Complex64::new(f64::NAN, f64::NAN);
    };
    // M⁻¹[I - (I - 2iξMJ)⁻¹]μ, with M scaled
    let z = &muc - y;
    let zr = chol.solve(&z.map(|c| c.re)) / scale;
    let zi = chol.solve(&z.map(|c| c.im)) / scale;
    let quad = Complex64::new(mu.dot(&zr), mu.dot(&zi));
    -0.5 * log_det - 0.5 * quad
}

/// Matrix-form chf `exp{-½μ'M⁻¹[I - (I - 2iξMJ)⁻¹]μ} / det(I - 2iξMJ)^{1/2}`.
pub fn chf_matrix(xi: f64, mu: &DVector<f64>, m: &DMatrix<f64>, j: &DMatrix<f64>) -> Result<Complex64> {
    let ev = ChfEvaluator::from_matrix(mu.clone(), m.clone(), j.clone(), ChfVariant::Real)?;
    let v = ev.eval_real(xi);
    if !v.is_finite() {
        return Err(TkoError::SingularPencil);
    }
    Ok(v)
}

/// Diagonal-form chf of `Σ λ_j (√N0 U_j + s_j)²`.
pub fn chf_diagonal(xi: f64, d: &SpectralDecomposition) -> Complex64 {
    ChfEvaluator::from_decomposition(d.clone(), ChfVariant::Real).eval_real(xi)
}

/// Two-degree-of-freedom counterpart of [`chf_diagonal`].
pub fn chf_narrowband(xi: f64, d: &SpectralDecomposition) -> Complex64 {
    ChfEvaluator::from_decomposition(d.clone(), ChfVariant::Narrowband).eval_real(xi)
}

/// chf of `C†QC` for `C ~ CN(C̄, Lc)`:
/// `exp{-C̄†Lc⁻¹[I - (I - iξLcQ)⁻¹]C̄} / det(I - iξLcQ)`.
pub fn chf_complex(
    xi: f64,
    cbar: &DVector<Complex64>,
    lc: &DMatrix<Complex64>,
    q: &DMatrix<Complex64>,
) -> Result<Complex64> {
    check_hermitian(lc)?;
    check_hermitian(q)?;
    let n = lc.nrows();
    if q.nrows() != n || cbar.len() != n {
        return Err(TkoError::DimensionMismatch { expected: n, got: q.nrows().min(cbar.len()) });
    }
    let chol = Cholesky::new(lc.clone()).ok_or(TkoError::NotPositiveDefinite)?;
    let a = DMatrix::<Complex64>::identity(n, n) - lc * q * (I * xi);
    let lu = a.lu();
    let det = lu.determinant();
    if det.norm() == 0.0 {
        return Err(TkoError::SingularPencil);
    }
    let y = lu.solve(cbar).ok_or(TkoError::SingularPencil)?;
    let z = chol.solve(&(cbar - y));
    let quad = cbar.dotc(&z);
    Ok((-quad).exp() / det)
}

/// Cumulants and standardized cumulants of a form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantSet {
    /// `kappa[s-1] = κ_s`.
    pub kappa: Vec<f64>,
    /// `rho[s-3] = ρ_s = κ_s κ_2^{-s/2}`.
    pub rho: Vec<f64>,
}

impl CumulantSet {
    pub fn from_kappa(kappa: Vec<f64>) -> Self {
        let rho = if kappa.len() >= 3 {
            let k2 = kappa[1];
            (3..=kappa.len())
                .map(|s| kappa[s - 1] * k2.powf(-(s as f64) / 2.0))
                .collect()
        } else {
            Vec::new()
        };
        Self { kappa, rho }
    }

    pub fn kappa(&self, s: usize) -> f64 {
        self.kappa[s - 1]
    }

    pub fn rho(&self, s: usize) -> f64 {
        self.rho[s - 3]
    }

    pub fn mean(&self) -> f64 {
        self.kappa[0]
    }

    pub fn variance(&self) -> f64 {
        self.kappa[1]
    }
}

/// `κ_s = 2^{s-1}(s-1)! {tr((MJ)^s) + s μ'J(MJ)^{s-1}μ}` for `s = 1..s_max`.
///
/// `M` need only be symmetric positive semidefinite here.
pub fn cumulants(mu: &DVector<f64>, m: &DMatrix<f64>, j: &DMatrix<f64>, s_max: usize) -> Result<CumulantSet> {
    if s_max < 2 {
        return Err(TkoError::InvalidParameter(format!("s_max must be at least 2, got {s_max}")));
    }
    check_symmetric(m)?;
    check_symmetric(j)?;
    if m.nrows() != j.nrows() || mu.len() != m.nrows() {
        return Err(TkoError::DimensionMismatch { expected: m.nrows(), got: j.nrows() });
    }
    let b = m * j;
    let jmu = j * mu;
    let mut power = DMatrix::identity(m.nrows(), m.nrows()); // (MJ)^{s-1}
    let mut kappa = Vec::with_capacity(s_max);
    let mut fact = 1.0;
    for s in 1..=s_max {
        if s > 1 {
            fact *= (s - 1) as f64;
        }
        let quad = jmu.dot(&(&power * mu));
        power = &power * &b;
        let k = 2f64.powi(s as i32 - 1) * fact * (power.trace() + s as f64 * quad);
        kappa.push(k);
    }
    Ok(CumulantSet::from_kappa(kappa))
}

/// Route for the inversion integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InversionPath {
    /// Real segment `[0, Ξ0]`, then a vertical ray into the half plane where
    /// `e^{-iξv}` decays. Equal to the real-axis integral by Cauchy's theorem.
    Deformed,
    /// Real axis only, truncated where the envelope bound certifies the tail.
    RealAxis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    pub path: InversionPath,
    pub quad: QuadConfig,
    /// Real-axis truncation is capped at `max_cutoff · fast_scale`; hitting
    /// the cap is reported as non-convergence.
    pub max_cutoff: f64,
    /// Truncation target for `|φ(Ξ)|/Ξ`.
    pub tail_tol: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            path: InversionPath::Deformed,
            quad: QuadConfig { abs_tol: 1e-12, rel_tol: 1e-10, max_panels: 4000 },
            max_cutoff: 1e7,
            tail_tol: 1e-12,
        }
    }
}

/// Value and error estimate of one inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

fn combine(parts: &[QuadResult]) -> (f64, f64, bool) {
    parts.iter().fold((0.0, 0.0, true), |(v, e, c), r| (v + r.value, e + r.error, c && r.converged))
}

/// Dyadic break points `0, Ξ0/2^k, ..., Ξ0, 2Ξ0, ..., cutoff`.
fn dyadic_breaks(base: f64, cutoff: f64) -> Vec<f64> {
    let mut breaks = vec![0.0];
    let mut x = base / 64.0;
    while x < cutoff {
        breaks.push(x);
        x *= 2.0;
    }
    breaks.push(cutoff);
    breaks
}

/// Smallest dyadic `Ξ ≥ base` with `bound(Ξ) < tol`, or `None` past `cap`.
fn certified_cutoff<F: Fn(f64) -> f64>(bound: F, base: f64, cap: f64, tol: f64) -> (f64, bool) {
    let mut x = base;
    while x < cap {
        if bound(x) < tol {
            return (x, true);
        }
        x *= 2.0;
    }
    (cap, false)
}

/// Gil-Pelaez `F(v) = ½ - (1/π)∫_0^∞ Im[e^{-iξv}φ(ξ)]/ξ dξ` with full diagnostics.
pub fn cdf_inversion(v: f64, chf: &ChfEvaluator, cfg: &InversionConfig) -> Inversion {
    if chf.is_trivial() {
        let value = if v >= 0.0 { 1.0 } else { 0.0 };
        return Inversion { value, error: 0.0, converged: true };
    }
    let k = chf.cumulants(3);
    let (k1, k2, k3) = (k.kappa[0], k.kappa[1], k.kappa[2]);
    let small = 1e-4 * chf.fast_scale();
    let real_integrand = |xi: f64| {
        if xi < small {
            let d = k1 - v;
            return d - xi * xi * (k3 / 6.0 + d * k2 / 2.0 + d * d * d / 6.0);
        }
        let z = Complex64::new(xi, 0.0);
        ((-I * z * v).exp() * chf.eval(z)).im / xi
    };
    let (integral, error, converged) = match cfg.path {
        InversionPath::Deformed => {
            let x0 = chf.ray_abscissa();
            let seg = integrate_breaks(&real_integrand, &dyadic_breaks(x0, x0), &cfg.quad);
            let tail = deformed_tail(v, chf, x0, |z| ((-I * z * v).exp() * chf.eval(z)) / z, |c| c.im, &cfg.quad);
            combine(&[seg, tail])
        }
        InversionPath::RealAxis => {
            let base = chf.ray_abscissa();
            let (cut, ok) = certified_cutoff(
                |x| chf.envelope(x) / x,
                base,
                cfg.max_cutoff * chf.fast_scale(),
                cfg.tail_tol,
            );
            let r = integrate_breaks(&real_integrand, &dyadic_breaks(base, cut), &cfg.quad);
            (r.value, r.error, r.converged && ok)
        }
    };
    let raw = 0.5 - integral / PI;
    Inversion { value: raw.clamp(0.0, 1.0), error: error / PI, converged }
}

/// `∫_{x0}^∞ g(ξ)dξ` projected by `proj`, either along the real axis (`v = 0`)
/// or down/up the vertical ray `ξ = x0 - i·sign(v)·t`.
fn deformed_tail<G, P>(v: f64, chf: &ChfEvaluator, x0: f64, g: G, proj: P, quad: &QuadConfig) -> QuadResult
where
    G: Fn(Complex64) -> Complex64,
    P: Fn(Complex64) -> f64,
{
    if v == 0.0 {
        return integrate_semi_infinite(|x| proj(g(Complex64::new(x, 0.0))), x0, x0.max(chf.fast_scale()), quad);
    }
    let sigma = v.signum();
    let scale = (1.0 / v.abs()).clamp(1e-2 * chf.fast_scale(), 1e2 * x0.max(chf.fast_scale()));
    let dxi = Complex64::new(0.0, -sigma);
    integrate_semi_infinite(
        |t| proj(g(Complex64::new(x0, -sigma * t)) * dxi),
        0.0,
        scale,
        quad,
    )
}

/// CDF at `v` by Gil-Pelaez inversion, clamped to `[0, 1]`.
pub fn cdf_gil_pelaez(v: f64, chf: &ChfEvaluator) -> Result<f64> {
    let r = cdf_inversion(v, chf, &InversionConfig::default());
    if !r.converged && r.error > 1e-8 {
        return Err(TkoError::QuadratureNonConvergence { estimate: r.error });
    }
    Ok(r.value)
}

/// Density `f(v) = (1/π)∫_0^∞ Re[e^{-iξv}φ(ξ)] dξ` with diagnostics.
pub fn pdf_inversion(v: f64, chf: &ChfEvaluator, cfg: &InversionConfig) -> Inversion {
    if chf.is_trivial() {
        return Inversion { value: 0.0, error: 0.0, converged: true };
    }
    let mut quad = cfg.quad;
    quad.abs_tol *= chf.fast_scale();
    let real_integrand = |xi: f64| {
        let z = Complex64::new(xi, 0.0);
        ((-I * z * v).exp() * chf.eval(z)).re
    };
    let (integral, error, converged) = match cfg.path {
        InversionPath::Deformed => {
            let x0 = chf.ray_abscissa();
            let seg = integrate_breaks(&real_integrand, &dyadic_breaks(x0, x0), &quad);
            let tail = deformed_tail(v, chf, x0, |z| (-I * z * v).exp() * chf.eval(z), |c| c.re, &quad);
            combine(&[seg, tail])
        }
        InversionPath::RealAxis => {
            let base = chf.ray_abscissa();
            let (cut, ok) = certified_cutoff(
                |x| chf.envelope(x),
                base,
                cfg.max_cutoff * chf.fast_scale(),
                cfg.tail_tol * chf.fast_scale(),
            );
            let r = integrate_breaks(&real_integrand, &dyadic_breaks(base, cut), &quad);
            (r.value, r.error, r.converged && ok)
        }
    };
    Inversion { value: integral / PI, error: error / PI, converged }
}

/// Tabulated density with normalization diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub values: Vec<f64>,
    pub pdf: Vec<f64>,
    pub cdf: Option<Vec<f64>>,
    pub meta: DensityMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMeta {
    /// `|∫pdf - 1|` by the trapezoid rule over the grid.
    pub normalization_error: f64,
    /// Largest magnitude removed by clamping negative values to zero.
    pub clamp_magnitude: f64,
    pub support: (f64, f64),
    /// Largest per-point quadrature or Monte Carlo error estimate.
    pub max_point_error: f64,
    pub converged: bool,
    /// Set when the normalization error exceeds 0.01.
    pub flagged: bool,
    /// Fraction of draws kept, for densities estimated by rejection.
    pub acceptance_rate: Option<f64>,
}

/// Normalization errors beyond this are flagged.
pub const NORMALIZATION_FLAG: f64 = 0.01;

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

impl DensityGrid {
    /// Clamps the density, records diagnostics and attaches a cumulative
    /// trapezoid cdf when none is given.
    pub fn new(values: Vec<f64>, raw_pdf: Vec<f64>, cdf: Option<Vec<f64>>, max_point_error: f64, converged: bool) -> Self {
        let clamp_magnitude = raw_pdf.iter().filter(|&&p| p < 0.0).map(|p| -p).fold(0.0, f64::max);
        let pdf: Vec<f64> = raw_pdf.iter().map(|&p| p.max(0.0)).collect();
        let total = trapezoid(&values, &pdf);
        let normalization_error = (total - 1.0).abs();
        let cdf = cdf.map(|c| monotone(&c)).or_else(|| Some(cumulative(&values, &pdf)));
        let support = (
            values.first().copied().unwrap_or(f64::NAN),
            values.last().copied().unwrap_or(f64::NAN),
        );
        Self {
            values,
            pdf,
            cdf,
            meta: DensityMeta {
                normalization_error,
                clamp_magnitude,
                support,
                max_point_error,
                converged,
                flagged: normalization_error > NORMALIZATION_FLAG,
                acceptance_rate: None,
            },
        }
    }

    pub fn total_mass(&self) -> f64 {
        trapezoid(&self.values, &self.pdf)
    }

    /// Mass in `[lo, hi]` by the trapezoid rule on grid cells inside it.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .values
            .iter()
            .zip(&self.pdf)
            .filter(|(v, _)| **v >= lo && **v <= hi)
            .map(|(v, p)| (*v, *p))
            .collect();
        pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
    }

    /// Quantile of the grid-normalized distribution.
    pub fn quantile(&self, prob: f64) -> f64 {
        let cum = cumulative(&self.values, &self.pdf);
        let total = *cum.last().unwrap_or(&0.0);
        let target = prob * total;
        for i in 1..cum.len() {
            if cum[i] >= target {
                let span = cum[i] - cum[i - 1];
                let frac = if span > 0.0 { (target - cum[i - 1]) / span } else { 0.0 };
                return self.values[i - 1] + frac * (self.values[i] - self.values[i - 1]);
            }
        }
        *self.values.last().unwrap_or(&f64::NAN)
    }

    pub fn mean(&self) -> f64 {
        let xy: Vec<f64> = self.values.iter().zip(&self.pdf).map(|(x, p)| x * p).collect();
        trapezoid(&self.values, &xy) / self.total_mass()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let xy: Vec<f64> = self
            .values
            .iter()
            .zip(&self.pdf)
            .map(|(x, p)| (x - m) * (x - m) * p)
            .collect();
        trapezoid(&self.values, &xy) / self.total_mass()
    }

    pub fn iqr(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }
}

fn cumulative(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..x.len() {
        acc += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
        out.push(acc);
    }
    out
}

fn monotone(c: &[f64]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    c.iter()
        .map(|&v| {
            best = best.max(v);
            best
        })
        .collect()
}

/// Density on `grid` by numerical inversion, evaluated in parallel.
pub fn pdf_numeric(grid: &[f64], chf: &ChfEvaluator) -> DensityGrid {
    pdf_numeric_with(grid, chf, &InversionConfig::default())
}

pub fn pdf_numeric_with(grid: &[f64], chf: &ChfEvaluator, cfg: &InversionConfig) -> DensityGrid {
    let points: Vec<Inversion> = grid.par_iter().map(|&v| pdf_inversion(v, chf, cfg)).collect();
    let max_err = points.iter().map(|p| p.error).fold(0.0, f64::max);
    let converged = points.iter().all(|p| p.converged);
    DensityGrid::new(grid.to_vec(), points.iter().map(|p| p.value).collect(), None, max_err, converged)
}

/// CDF on `grid` by Gil-Pelaez inversion, evaluated in parallel.
pub fn cdf_numeric(grid: &[f64], chf: &ChfEvaluator) -> Result<Vec<f64>> {
    grid.par_iter().map(|&v| cdf_gil_pelaez(v, chf)).collect()
}

fn require_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(TkoError::InvalidParameter(format!("{name} must be positive, got {x}")))
    }
}

/// Density of `λ(√N0 U + s)²`, `λ > 0`.
pub fn pdf_single_lambda(v: f64, lambda: f64, s: f64, n0: f64) -> Result<f64> {
    require_positive("lambda", lambda)?;
    require_positive("N0", n0)?;
    if v <= 0.0 {
        return Ok(0.0);
    }
    let r = (v / lambda).sqrt();
    let s = s.abs();
    // e^{-(s² + r²)/2N0} cosh(sr/N0), written without overflow
    let core = (-(r - s) * (r - s) / (2.0 * n0)).exp() * 0.5 * (1.0 + (-2.0 * s * r / n0).exp());
    Ok(core / (2.0 * PI * n0 * lambda * v).sqrt())
}

/// Density of `λ|√N0 Z + s|²` with `Z` unit complex normal (Rician envelope squared).
pub fn pdf_rician_mode(v: f64, lambda: f64, s: f64, n0: f64) -> Result<f64> {
    require_positive("lambda", lambda)?;
    require_positive("N0", n0)?;
    if v <= 0.0 {
        return Ok(0.0);
    }
    let r = (v / lambda).sqrt();
    let s = s.abs();
    let arg = 2.0 * s * r / n0;
    Ok((-(r - s) * (r - s) / n0).exp() * bessel_i0e(arg) / (lambda * n0))
}

/// Density of `N0(λ1 U1² + λ2 U2²)` for positive `λ1, λ2`.
fn two_mode_positive(u: f64, l1: f64, l2: f64, n0: f64) -> f64 {
    if u < 0.0 {
        return 0.0;
    }
    let (a1, a2) = (l1 * n0, l2 * n0);
    let beta = (1.0 / a1 - 1.0 / a2).abs() / 4.0;
    let amax = a1.max(a2);
    (-u / (2.0 * amax)).exp() * bessel_i0e(beta * u) / (2.0 * (a1 * a2).sqrt())
}

/// Central density of `Σ_j λ_j N0 U_j²` with two positive and two negative
/// eigenvalues, by direct quadrature of the convolution of the two halves.
pub fn pdf_two_pos_two_neg(v: f64, l1: f64, l2: f64, l3: f64, l4: f64, n0: f64) -> Result<f64> {
    require_positive("lambda_1", l1)?;
    require_positive("lambda_2", l2)?;
    require_positive("-lambda_3", -l3)?;
    require_positive("-lambda_4", -l4)?;
    require_positive("N0", n0)?;
    let (m3, m4) = (-l3, -l4);
    let cfg = QuadConfig { abs_tol: 1e-15, rel_tol: 1e-12, max_panels: 2000 };
    let scale = n0 * l1.max(l2).max(m3).max(m4);
    let r = if v >= 0.0 {
        integrate_semi_infinite(
            |w| two_mode_positive(v + w, l1, l2, n0) * two_mode_positive(w, m3, m4, n0),
            0.0,
            scale,
            &cfg,
        )
    } else {
        integrate_semi_infinite(
            |u| two_mode_positive(u, l1, l2, n0) * two_mode_positive(u - v, m3, m4, n0),
            0.0,
            scale,
            &cfg,
        )
    };
    if !r.converged && r.error > 1e-10 {
        return Err(TkoError::QuadratureNonConvergence { estimate: r.error });
    }
    Ok(r.value)
}

/// Exposed for tests of the positive half on its own.
pub fn pdf_two_positive(u: f64, l1: f64, l2: f64, n0: f64) -> Result<f64> {
    require_positive("lambda_1", l1)?;
    require_positive("lambda_2", l2)?;
    require_positive("N0", n0)?;
    Ok(two_mode_positive(u, l1, l2, n0))
}

/// `∫_a^b f` with the default tolerances; a small helper for callers
/// checking normalization of closed forms.
pub fn integrate_density<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    integrate(f, a, b, &QuadConfig::default()).value
}

/// Eigenvalues of `MJ` via the symmetrized pencil, sorted descending.
pub fn form_eigenvalues(m: &DMatrix<f64>, j: &DMatrix<f64>) -> Result<Vec<f64>> {
    let l = Cholesky::new(m.clone()).ok_or(TkoError::NotPositiveDefinite)?.l();
    let core = l.transpose() * j * &l;
    let core = (&core + core.transpose()) * 0.5;
    let mut e: Vec<f64> = SymmetricEigen::new(core).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| b.total_cmp(a));
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::normal_cdf;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, n: usize) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let m = &a * a.transpose() + DMatrix::identity(n, n) * 0.2;
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let j = (&b + b.transpose()) * 0.5;
        let mu = DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5));
        (mu, m, j)
    }

    fn chi2_1() -> ChfEvaluator {
        ChfEvaluator::from_decomposition(SpectralDecomposition::central(vec![1.0], 1.0).unwrap(), ChfVariant::Real)
    }

    #[test]
    fn chf_basics() {
        let ev = chi2_1();
        assert_eq!(ev.eval_real(0.0), Complex64::new(1.0, 0.0));
        for xi in [-3.0, 0.2, 7.5] {
            let expect = (Complex64::new(1.0, -2.0 * xi)).powf(-0.5);
            assert!((ev.eval_real(xi) - expect).norm() < 1e-15);
        }
        let m = DMatrix::from_element(1, 1, 1.0);
        let v = chf_matrix(0.7, &DVector::zeros(1), &m, &m).unwrap();
        assert!((v - Complex64::new(1.0, -1.4).powf(-0.5)).norm() < 1e-15);
        let nb = chf_narrowband(0.7, &SpectralDecomposition::central(vec![1.5], 2.0).unwrap());
        assert!((nb - Complex64::new(1.0, -0.7 * 3.0).inv()).norm() < 1e-15);
    }

    #[test]
    fn dual_route_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(3..7);
            let (mu, m, j) = random_model(&mut rng, n);
            let model = GaussianVectorModel::new(mu.clone(), m.clone(), rng.random_range(0.3..2.0)).unwrap();
            let d = decompose(&model, &j).unwrap();
            for _ in 0..10 {
                let xi = rng.random_range(-50.0..50.0);
                let a = chf_matrix(xi, &mu, &m, &j).unwrap();
                let b = chf_diagonal(xi, &d);
                assert!((a - b).norm() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn matrix_route_tracks_branch_off_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mu, m, j) = random_model(&mut rng, 5);
        let mat = ChfEvaluator::from_matrix(mu, m, j, ChfVariant::Real).unwrap();
        let diag = mat.to_diagonal();
        let x0 = mat.ray_abscissa();
        for t in [0.0, 0.3, 4.0, 60.0] {
            for sgn in [-1.0, 1.0] {
                let z = Complex64::new(x0, sgn * t);
                assert!((mat.eval(z) - diag.eval(z)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn narrowband_is_real_times_noise_only_at_half_power() {
        let d = SpectralDecomposition::new(vec![0.8, -0.3, 0.1], vec![1.2, 0.4, -2.0], 0.9).unwrap();
        let half = SpectralDecomposition::new(d.lambdas.clone(), d.s.clone(), 0.45).unwrap();
        let half0 = SpectralDecomposition::central(d.lambdas.clone(), 0.45).unwrap();
        for xi in [-4.0, -0.5, 0.3, 2.0, 11.0] {
            let lhs = chf_narrowband(xi, &d);
            let rhs = chf_diagonal(xi, &half) * chf_diagonal(xi, &half0);
            assert!((lhs - rhs).norm() < 1e-14);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mu, m, j) = random_model(&mut rng, 4);
        let mat = ChfEvaluator::from_matrix(mu, m, j, ChfVariant::Narrowband).unwrap();
        let diag = mat.to_diagonal();
        for xi in [-3.0, 0.4, 9.0] {
            assert!((mat.eval_real(xi) - diag.eval_real(xi)).norm() < 1e-10);
        }
    }

    #[test]
    fn factorization_over_blocks() {
        let a = SpectralDecomposition::new(vec![0.7, -0.2], vec![0.5, 1.0], 1.3).unwrap();
        let b = SpectralDecomposition::new(vec![1.1], vec![-0.4], 1.3).unwrap();
        let ab = a.combine(&b).unwrap();
        for xi in [-2.0, 0.1, 5.0] {
            assert!((chf_diagonal(xi, &a) * chf_diagonal(xi, &b) - chf_diagonal(xi, &ab)).norm() < 1e-15);
        }
    }

    #[test]
    fn complex_form_reduces_to_narrowband() {
        // 2-dim complex pair with correlated noise
        let n0 = 0.8;
        let lc = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(n0, 0.0),
                Complex64::new(0.3, 0.2) * n0,
                Complex64::new(0.3, -0.2) * n0,
                Complex64::new(n0, 0.0),
            ],
        );
        let q = DMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.5), Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.0)],
        );
        let cbar = DVector::from_vec(vec![Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.9)]);
        let d = crate::gaussian_model::decompose_complex(&cbar, &lc, &q, n0).unwrap();
        for xi in [-5.0, -0.3, 0.0, 0.7, 3.0] {
            let a = chf_complex(xi, &cbar, &lc, &q).unwrap();
            let b = chf_narrowband(xi, &d);
            assert!((a - b).norm() < 1e-12, "{a} {b}");
        }
        // diagonal, central
        let lc = DMatrix::from_diagonal(&DVector::from_vec(vec![Complex64::new(2.0, 0.0), Complex64::new(0.5, 0.0)]));
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(-3.0, 0.0)]));
        let z = DVector::zeros(2);
        let xi = 0.9;
        let expect = (Complex64::new(1.0, -xi * 2.0) * Complex64::new(1.0, xi * 1.5)).inv();
        assert!((chf_complex(xi, &z, &lc, &q).unwrap() - expect).norm() < 1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, 1.0), Complex64::new(1.0, 0.0)]);
        assert!(chf_complex(xi, &z, &bad, &q).is_err());
    }

    #[test]
    fn cumulant_identities() {
        let i3 = DMatrix::identity(3, 3);
        let k = cumulants(&DVector::zeros(3), &i3, &i3, 4).unwrap();
        assert_eq!(k.kappa, vec![3.0, 6.0, 24.0, 144.0]);
        assert!((k.rho(3) - 24.0 / 6f64.powf(1.5)).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mu, m, j) = random_model(&mut rng, 4);
        let k = cumulants(&mu, &m, &j, DEFAULT_S_MAX).unwrap();
        let direct = (&m * &j).trace() + (mu.transpose() * &j * &mu)[(0, 0)];
        assert!((k.kappa(1) - direct).abs() < 1e-12);
        let ev = ChfEvaluator::from_matrix(mu, m, j, ChfVariant::Real).unwrap();
        let kd = ev.cumulants(DEFAULT_S_MAX);
        for s in 1..=DEFAULT_S_MAX {
            assert!((k.kappa(s) - kd.kappa(s)).abs() < 1e-9 * k.kappa(s).abs().max(1.0));
        }
        assert!(cumulants(&DVector::zeros(3), &i3, &i3, 1).is_err());
    }

    #[test]
    fn log_chf_derivatives_are_cumulants() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (mu, m, j) = random_model(&mut rng, 4);
        let k = cumulants(&mu, &m, &j, 2).unwrap();
        let ev = ChfEvaluator::from_matrix(mu, m, j, ChfVariant::Real).unwrap();
        let h = 1e-4;
        let lp = ev.log_eval(Complex64::new(h, 0.0));
        let lm = ev.log_eval(Complex64::new(-h, 0.0));
        // d/d(iξ) log φ = κ1; d²/d(iξ)² log φ = κ2
        let d1 = ((lp - lm) / (2.0 * h) / I).re;
        let d2 = -((lp + lm) / (h * h)).re;
        assert!((d1 - k.kappa(1)).abs() < 1e-6 * k.kappa(1).abs().max(1.0));
        assert!((d2 - k.kappa(2)).abs() < 1e-6 * k.kappa(2).abs().max(1.0));
    }

    #[test]
    fn gil_pelaez_chi_square() {
        let ev = chi2_1();
        let f1 = cdf_gil_pelaez(1.0, &ev).unwrap();
        assert!((f1 - 0.682_689_492_137_085_9).abs() < 1e-9, "{f1}");
        for v in [0.01f64, 0.3, 2.0, 7.0, 20.0] {
            let exact = 2.0 * normal_cdf(v.sqrt()) - 1.0;
            assert!((cdf_gil_pelaez(v, &ev).unwrap() - exact).abs() < 1e-9);
        }
        assert!(cdf_gil_pelaez(-5.0, &ev).unwrap() < 1e-12);
        let sym = ChfEvaluator::from_decomposition(SpectralDecomposition::central(vec![1.0, -1.0], 1.0).unwrap(), ChfVariant::Real);
        assert!((cdf_gil_pelaez(0.0, &sym).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn routes_agree_on_many_modes() {
        let d = SpectralDecomposition::new(
            vec![1.0, 0.8, 0.6, -0.5, -0.9, 0.3, 0.45, -0.2],
            vec![0.3, -0.1, 0.5, 0.2, 0.0, 0.4, 0.1, -0.3],
            1.0,
        )
        .unwrap();
        let ev = ChfEvaluator::from_decomposition(d, ChfVariant::Real);
        let real = InversionConfig { path: InversionPath::RealAxis, ..InversionConfig::default() };
        for v in [-3.0, -0.5, 0.0, 0.8, 2.5, 6.0] {
            let a = cdf_inversion(v, &ev, &InversionConfig::default());
            let b = cdf_inversion(v, &ev, &real);
            assert!(a.converged && b.converged);
            assert!((a.value - b.value).abs() < 1e-9, "{v}: {} {}", a.value, b.value);
            let pa = pdf_inversion(v, &ev, &InversionConfig::default());
            let pb = pdf_inversion(v, &ev, &real);
            assert!((pa.value - pb.value).abs() < 1e-9);
        }
    }

    #[test]
    fn real_axis_route_flags_slow_tails() {
        let r = cdf_inversion(1.0, &chi2_1(), &InversionConfig { path: InversionPath::RealAxis, max_cutoff: 1e4, ..InversionConfig::default() });
        assert!(!r.converged);
    }

    #[test]
    fn closed_forms_normalize() {
        let single = integrate_density(|v| pdf_single_lambda(v, 1.0, 1.0, 1.0).unwrap(), 0.0, 200.0);
        assert!((single - 1.0).abs() < 1e-8, "{single}");
        let rice = integrate_density(|v| pdf_rician_mode(v, 2.0, 1.0, 0.5).unwrap(), 0.0, 200.0);
        assert!((rice - 1.0).abs() < 1e-8);
        let f = |v: f64| pdf_two_pos_two_neg(v, 1.0, 0.5, -0.8, -0.3, 1.0).unwrap();
        let total = integrate_density(f, -60.0, 0.0) + integrate_density(f, 0.0, 80.0);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
        // chi-square(1) and exponential special cases
        let v = 0.7;
        let chi = (-v / 2.0f64).exp() / (2.0 * PI * v).sqrt();
        assert!((pdf_single_lambda(v, 1.0, 0.0, 1.0).unwrap() - chi).abs() < 1e-15);
        assert!((pdf_rician_mode(v, 2.0, 0.0, 0.5).unwrap() - (-v).exp()).abs() < 1e-15);
        assert_eq!(pdf_single_lambda(-1.0, 1.0, 0.3, 1.0).unwrap(), 0.0);
        assert!(pdf_single_lambda(1.0, -1.0, 0.3, 1.0).is_err());
    }

    #[test]
    fn two_plus_two_symmetry_and_degenerate_pairs() {
        for v in [0.1, 0.7, 3.0] {
            let a = pdf_two_pos_two_neg(v, 1.0, 0.4, -1.0, -0.4, 1.0).unwrap();
            let b = pdf_two_pos_two_neg(-v, 1.0, 0.4, -1.0, -0.4, 1.0).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        // equal positive pair: exponential with mean 2λN0
        let u = 1.3;
        let e = pdf_two_positive(u, 0.7, 0.7, 1.2).unwrap();
        let a = 0.7 * 1.2;
        assert!((e - (-u / (2.0 * a)).exp() / (2.0 * a)).abs() < 1e-15);
    }

    #[test]
    fn closed_forms_match_numeric_inversion() {
        let single = ChfEvaluator::from_decomposition(SpectralDecomposition::new(vec![1.0], vec![1.0], 1.0).unwrap(), ChfVariant::Real);
        for v in [0.1, 1.0, 5.0] {
            let a = pdf_inversion(v, &single, &InversionConfig::default()).value;
            assert!((a - pdf_single_lambda(v, 1.0, 1.0, 1.0).unwrap()).abs() < 1e-8);
        }
        let rice = ChfEvaluator::from_decomposition(SpectralDecomposition::new(vec![2.0], vec![1.0], 0.5).unwrap(), ChfVariant::Narrowband);
        for v in [0.05, 0.8, 3.0, 9.0] {
            let a = pdf_inversion(v, &rice, &InversionConfig::default()).value;
            assert!((a - pdf_rician_mode(v, 2.0, 1.0, 0.5).unwrap()).abs() < 1e-8);
        }
        let four = ChfEvaluator::from_decomposition(SpectralDecomposition::central(vec![1.0, 0.5, -0.8, -0.3], 1.0).unwrap(), ChfVariant::Real);
        for v in [-4.0, -0.2, 0.0, 0.3, 2.0, 6.0] {
            let a = pdf_inversion(v, &four, &InversionConfig::default()).value;
            assert!((a - pdf_two_pos_two_neg(v, 1.0, 0.5, -0.8, -0.3, 1.0).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn density_grid_bookkeeping() {
        let x: Vec<f64> = (0..=1000).map(|k| -6.0 + 12.0 * k as f64 / 1000.0).collect();
        let mut p: Vec<f64> = x.iter().map(|v| (-v * v / 2.0).exp() / (2.0 * PI).sqrt()).collect();
        p[3] = -1e-3;
        let g = DensityGrid::new(x, p, None, 0.0, true);
        assert_eq!(g.meta.clamp_magnitude, 1e-3);
        assert!(g.pdf.iter().all(|&v| v >= 0.0));
        assert!(g.meta.normalization_error < 1e-6);
        assert!(!g.meta.flagged);
        let cdf = g.cdf.as_ref().unwrap();
        assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
        assert!((g.quantile(0.5)).abs() < 1e-9);
        assert!((g.iqr() - 1.348_979_500_392_163_5).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn chf_symmetry_and_origin(seed in 0u64..5000, xi in -50.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(3..7);
            let (mu, m, j) = random_model(&mut rng, n);
            let ev = ChfEvaluator::from_matrix(mu, m, j, ChfVariant::Real).unwrap();
            prop_assert!((ev.eval_real(0.0) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
            prop_assert!((ev.eval_real(-xi) - ev.eval_real(xi).conj()).norm() < 1e-12);
            prop_assert!(ev.eval_real(xi).norm() <= ev.envelope(xi) * (1.0 + 1e-12));
        }

        #[test]
        fn cdf_is_monotone(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lambdas: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.5)).collect();
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ev = ChfEvaluator::from_decomposition(SpectralDecomposition::new(lambdas, s, 1.0).unwrap(), ChfVariant::Real);
            let mut last = 0.0;
            for k in 0..12 {
                let v = -4.0 + k as f64 * 0.7;
                let f = cdf_gil_pelaez(v, &ev).unwrap();
                prop_assert!(f >= last - 1e-9);
                last = f;
            }
        }
    }
}
