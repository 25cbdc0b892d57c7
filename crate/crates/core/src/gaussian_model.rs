//! Gaussian sample-vector model at the operator taps, and the spectral
//! decomposition that turns `X'JX` into `Σ λ_j (√N0 U_j + s_j)²`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TkoError};
use crate::operator_kernels::OperatorKernel;

const SYMMETRY_TOL: f64 = 1e-12;
const PD_TOL: f64 = 1e-12;
/// Eigenvalues below this fraction of the largest are set to zero.
pub const ZERO_EIGEN_REL: f64 = 1e-12;

/// Stationary covariance `R(t) = scale · exp(-c t²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceKernel {
    pub c: f64,
    pub scale: f64,
}

impl CovarianceKernel {
    pub fn new(c: f64, scale: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) || !(scale > 0.0 && scale.is_finite()) {
            return Err(TkoError::InvalidParameter(format!(
                "covariance kernel needs c > 0 and scale > 0, got c={c}, scale={scale}"
            )));
        }
        Ok(Self { c, scale })
    }

    pub fn value(&self, t: f64) -> f64 {
        self.scale * (-self.c * t * t).exp()
    }

    /// `Cov(x(t), ẋ(t + τ))` for `τ = -t`; i.e. `-R'(t)` evaluated at `t = t_i - t_j`.
    pub fn cov_value_derivative(&self, t: f64) -> f64 {
        2.0 * self.c * t * self.value(t)
    }

    /// `Cov(ẋ(t_i), ẋ(t_j)) = -R''(t_i - t_j)`.
    pub fn cov_derivative_derivative(&self, t: f64) -> f64 {
        (2.0 * self.c - 4.0 * self.c * self.c * t * t) * self.value(t)
    }

    /// Reporting scale `δ_c = 1/√c`.
    pub fn correlation_time(&self) -> f64 {
        1.0 / self.c.sqrt()
    }
}

/// `M[i][j] = R(t_i - t_j)`.
pub fn build_covariance(kernel: &CovarianceKernel, tap_times: &[f64]) -> Result<DMatrix<f64>> {
    if tap_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(TkoError::NonIncreasingTaps);
    }
    let n = tap_times.len();
    Ok(DMatrix::from_fn(n, n, |i, j| kernel.value(tap_times[i] - tap_times[j])))
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(TkoError::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(TkoError::NotSymmetric(asym));
    }
    Ok(())
}

/// `X ~ N(μ, M)` with `M` in noise-power units and `N0` the noise power used
/// to normalise it in the diagonal form.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianVectorModel {
    mu: DVector<f64>,
    m: DMatrix<f64>,
    n0: f64,
}

impl GaussianVectorModel {
    pub fn new(mu: DVector<f64>, m: DMatrix<f64>, n0: f64) -> Result<Self> {
        check_symmetric(&m)?;
        if mu.len() != m.nrows() {
            return Err(TkoError::DimensionMismatch { expected: m.nrows(), got: mu.len() });
        }
        if !(n0 > 0.0 && n0.is_finite()) {
            return Err(TkoError::InvalidParameter(format!("N0 must be positive, got {n0}")));
        }
        let eig = SymmetricEigen::new(m.clone()).eigenvalues;
        let max = eig.amax();
        if eig.iter().any(|&e| e <= PD_TOL * max) || max == 0.0 {
            return Err(TkoError::NotPositiveDefinite);
        }
        Ok(Self { mu, m, n0 })
    }

    /// Signal plus stationary noise sampled at the taps of `kernel`
    /// centred on `center` (seconds). `N0` is `R(0)`.
    pub fn at_kernel_taps(
        signal: &SignalSpec,
        noise: &CovarianceKernel,
        kernel: &OperatorKernel,
        center: f64,
    ) -> Result<Self> {
        let times = tap_times(kernel, center);
        let m = build_covariance(noise, &times)?;
        let mu = signal_tap_vector(signal, center, kernel);
        Self::new(mu, m, noise.scale)
    }

    /// The same taps for the derivative process `ẋ`. The noise derivative has
    /// covariance `-R''` and power `2c · scale`.
    pub fn derivative_at_kernel_taps(
        signal: &SignalSpec,
        noise: &CovarianceKernel,
        kernel: &OperatorKernel,
        center: f64,
    ) -> Result<Self> {
        let times = tap_times(kernel, center);
        let n = times.len();
        let m = DMatrix::from_fn(n, n, |i, j| noise.cov_derivative_derivative(times[i] - times[j]));
        let mu = DVector::from_iterator(n, times.iter().map(|&t| signal.derivative(t)));
        Self::new(mu, m, 2.0 * noise.c * noise.scale)
    }

    /// Joint vector `(x(t_1..t_r), ẋ(t_1..t_r))` used for `Ψ[ẋ]/Ψ[x]`.
    pub fn joint_signal_derivative(
        signal: &SignalSpec,
        noise: &CovarianceKernel,
        kernel: &OperatorKernel,
        center: f64,
    ) -> Result<Self> {
        let times = tap_times(kernel, center);
        let r = times.len();
        let m = DMatrix::from_fn(2 * r, 2 * r, |i, j| {
            let (ti, tj) = (times[i % r], times[j % r]);
            match (i < r, j < r) {
                (true, true) => noise.value(ti - tj),
                (true, false) => noise.cov_value_derivative(ti - tj),
                (false, true) => noise.cov_value_derivative(tj - ti),
                (false, false) => noise.cov_derivative_derivative(ti - tj),
            }
        });
        let mu = DVector::from_iterator(
            2 * r,
            times
                .iter()
                .map(|&t| signal.value(t))
                .chain(times.iter().map(|&t| signal.derivative(t))),
        );
        Self::new(mu, m, noise.scale)
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Same vector with the mean removed.
    pub fn noise_only(&self) -> Self {
        Self {
            mu: DVector::zeros(self.dim()),
            ..self.clone()
        }
    }

    /// Lower Cholesky factor of `M`.
    pub fn cholesky(&self) -> Result<DMatrix<f64>> {
        Cholesky::new(self.m.clone())
            .map(|c| c.l())
            .ok_or(TkoError::NotPositiveDefinite)
    }
}

/// Eigenvalues `λ_j` of `(M/N0) J` and noncentralities `s = P'L⁻¹μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    pub lambdas: Vec<f64>,
    pub s: Vec<f64>,
    pub n0: f64,
}

impl SpectralDecomposition {
    pub fn new(lambdas: Vec<f64>, s: Vec<f64>, n0: f64) -> Result<Self> {
        if lambdas.len() != s.len() {
            return Err(TkoError::DimensionMismatch { expected: lambdas.len(), got: s.len() });
        }
        if !(n0 > 0.0) {
            return Err(TkoError::InvalidParameter(format!("N0 must be positive, got {n0}")));
        }
        Ok(Self { lambdas, s, n0 })
    }

    pub fn central(lambdas: Vec<f64>, n0: f64) -> Result<Self> {
        let s = vec![0.0; lambdas.len()];
        Self::new(lambdas, s, n0)
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn negative_count(&self) -> usize {
        self.lambdas.iter().filter(|&&l| l < 0.0).count()
    }

    pub fn positive_count(&self) -> usize {
        self.lambdas.iter().filter(|&&l| l > 0.0).count()
    }

    /// Concatenation; the forms are independent and add.
    pub fn combine(&self, other: &Self) -> Result<Self> {
        if (self.n0 - other.n0).abs() > 1e-15 * self.n0 {
            return Err(TkoError::InvalidParameter("combined decompositions must share N0".into()));
        }
        let mut lambdas = self.lambdas.clone();
        lambdas.extend_from_slice(&other.lambdas);
        let mut s = self.s.clone();
        s.extend_from_slice(&other.s);
        Self::new(lambdas, s, self.n0)
    }
}

/// Diagonalises `X'JX` under `model`.
///
/// With `M = N0 · LL'` and `P'L'JLP = Λ`, the form equals
/// `Σ λ_j (√N0 U_j + s_j)²` for iid standard normal `U`.
pub fn decompose(model: &GaussianVectorModel, j: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    check_symmetric(j)?;
    if j.nrows() != model.dim() {
        return Err(TkoError::DimensionMismatch { expected: model.dim(), got: j.nrows() });
    }
    let normalised = &model.m / model.n0;
    let l = Cholesky::new(normalised)
        .ok_or(TkoError::NotPositiveDefinite)?
        .l();
    let core = l.transpose() * j * &l;
    let core = (&core + core.transpose()) * 0.5;
    let eig = SymmetricEigen::new(core);
    let whitened = l
        .solve_lower_triangular(&model.mu)
        .ok_or(TkoError::NotPositiveDefinite)?;
    let s = eig.eigenvectors.transpose() * whitened;
    let max = eig.eigenvalues.amax();
    let lambdas = eig
        .eigenvalues
        .iter()
        .map(|&l| if l.abs() <= ZERO_EIGEN_REL * max { 0.0 } else { l })
        .collect();
    SpectralDecomposition::new(lambdas, s.iter().copied().collect(), model.n0)
}

/// Narrowband counterpart: `C ~ CN(C̄, Lc)` with `Lc = N0 · LL†` and Hermitian
/// `Q`; returns `λ_j = eig(L†QL)` and `s_j = |(P†L⁻¹C̄)_j|`.
pub fn decompose_complex(
    cbar: &DVector<Complex64>,
    lc: &DMatrix<Complex64>,
    q: &DMatrix<Complex64>,
    n0: f64,
) -> Result<SpectralDecomposition> {
    check_hermitian(lc)?;
    check_hermitian(q)?;
    if lc.nrows() != q.nrows() || cbar.len() != lc.nrows() {
        return Err(TkoError::DimensionMismatch { expected: lc.nrows(), got: q.nrows() });
    }
    let normalised = lc.map(|z| z / n0);
    let l = Cholesky::new(normalised)
        .ok_or(TkoError::NotPositiveDefinite)?
        .l();
    let core = l.adjoint() * q * &l;
    let core = (&core + core.adjoint()).map(|z| z * 0.5);
    let eig = SymmetricEigen::new(core);
    let whitened = l
        .solve_lower_triangular(cbar)
        .ok_or(TkoError::NotPositiveDefinite)?;
    let s = eig.eigenvectors.adjoint() * whitened;
    let max = eig.eigenvalues.amax();
    let lambdas = eig
        .eigenvalues
        .iter()
        .map(|&l| if l.abs() <= ZERO_EIGEN_REL * max { 0.0 } else { l })
        .collect();
    SpectralDecomposition::new(lambdas, s.iter().map(|z| z.norm()).collect(), n0)
}

pub(crate) fn check_hermitian(m: &DMatrix<Complex64>) -> Result<()> {
    if !m.is_square() {
        return Err(TkoError::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let asym = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if asym > SYMMETRY_TOL * scale {
        return Err(TkoError::NotSymmetric(asym));
    }
    Ok(())
}

/// Mean and variance of `Ψ_p^q` written as `(s1+n1)(s2+n2) - (s3+n3)(s4+n4)`
/// with taps ordered `(n-p, n+p, n-q, n+q)`.
///
/// `lags[k]` is the noise covariance `m_k` at lag `k` (samples) and must
/// cover `0..=2q`. `n0` is the per-sample noise power (normally `m_0`).
pub fn tko_mean_variance(
    p: usize,
    q: usize,
    taps: [f64; 4],
    lags: &[f64],
    n0: f64,
) -> Result<(f64, f64)> {
    if p >= q {
        return Err(TkoError::InvalidDelays { p: p as i64, q: q as i64 });
    }
    if lags.len() <= 2 * q {
        return Err(TkoError::DimensionMismatch { expected: 2 * q + 1, got: lags.len() });
    }
    let [s1, s2, s3, s4] = taps;
    let m = |k: usize| lags[k];
    let mean = (s1 * s2 - s3 * s4) + (m(2 * p) - m(2 * q));

    let noise = crate::quadform_stats::cumulants(
        &DVector::zeros(4),
        &product_order_covariance(p, q, lags),
        &product_order_stencil(),
        2,
    )?;
    let variance = noise.kappa[1]
        + n0 * (s1 * s1 + s2 * s2 + s3 * s3 + s4 * s4)
        + 2.0
            * (s1 * s2 * m(2 * p) + s3 * s4 * m(2 * q)
                - (s1 * s3 + s2 * s4) * m(q - p)
                - (s1 * s4 + s2 * s3) * m(q + p));
    Ok((mean, variance))
}

/// 4×4 noise covariance for taps `(n-p, n+p, n-q, n+q)`; singular when `p = 0`.
pub fn product_order_covariance(p: usize, q: usize, lags: &[f64]) -> DMatrix<f64> {
    let pos = [-(p as i64), p as i64, -(q as i64), q as i64];
    DMatrix::from_fn(4, 4, |i, j| lags[(pos[i] - pos[j]).unsigned_abs() as usize])
}

/// `x1 x2 - x3 x4` as a symmetric matrix.
pub fn product_order_stencil() -> DMatrix<f64> {
    let mut j = DMatrix::zeros(4, 4);
    j[(0, 1)] = 0.5;
    j[(1, 0)] = 0.5;
    j[(2, 3)] = -0.5;
    j[(3, 2)] = -0.5;
    j
}

/// A single sinusoid `a cos(ωt + φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

/// Deterministic part of the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SignalSpec {
    Zero,
    Tones(Vec<Tone>),
    /// `a0 (1 + m cos Ω_a t) cos(ω0 t + β sin Ω_f t + φ)`
    AmFm {
        amplitude: f64,
        am_depth: f64,
        am_omega: f64,
        carrier: f64,
        fm_index: f64,
        fm_omega: f64,
        phase: f64,
    },
}

impl SignalSpec {
    pub fn tone(amplitude: f64, omega: f64, phase: f64) -> Self {
        SignalSpec::Tones(vec![Tone { amplitude, omega, phase }])
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            SignalSpec::Zero => 0.0,
            SignalSpec::Tones(tones) => tones
                .iter()
                .map(|k| k.amplitude * (k.omega * t + k.phase).cos())
                .sum(),
            SignalSpec::AmFm { amplitude, am_depth, am_omega, carrier, fm_index, fm_omega, phase } => {
                let env = amplitude * (1.0 + am_depth * (am_omega * t).cos());
                env * (carrier * t + fm_index * (fm_omega * t).sin() + phase).cos()
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            SignalSpec::Zero => 0.0,
            SignalSpec::Tones(tones) => tones
                .iter()
                .map(|k| -k.amplitude * k.omega * (k.omega * t + k.phase).sin())
                .sum(),
            SignalSpec::AmFm { amplitude, am_depth, am_omega, carrier, fm_index, fm_omega, phase } => {
                let env = amplitude * (1.0 + am_depth * (am_omega * t).cos());
                let denv = -amplitude * am_depth * am_omega * (am_omega * t).sin();
                let arg = carrier * t + fm_index * (fm_omega * t).sin() + phase;
                let darg = carrier + fm_index * fm_omega * (fm_omega * t).cos();
                denv * arg.cos() - env * darg * arg.sin()
            }
        }
    }

    /// Mean square over one period of the slowest component; tones only.
    pub fn power(&self) -> f64 {
        match self {
            SignalSpec::Zero => 0.0,
            SignalSpec::Tones(tones) => tones.iter().map(|k| 0.5 * k.amplitude * k.amplitude).sum(),
            SignalSpec::AmFm { amplitude, am_depth, .. } => {
                0.5 * amplitude * amplitude * (1.0 + 0.5 * am_depth * am_depth)
            }
        }
    }
}

/// Tap sample times around `center`, ordered as the kernel matrix.
pub fn tap_times(kernel: &OperatorKernel, center: f64) -> Vec<f64> {
    kernel
        .tap_offsets()
        .iter()
        .map(|&o| center + o as f64 * kernel.interval())
        .collect()
}

pub fn signal_tap_vector(signal: &SignalSpec, center: f64, kernel: &OperatorKernel) -> DVector<f64> {
    let times = tap_times(kernel, center);
    DVector::from_iterator(times.len(), times.iter().map(|&t| signal.value(t)))
}

/// Noise power giving `snr_db` for the given signal power.
pub fn noise_scale_for_snr(signal_power: f64, snr_db: f64) -> f64 {
    signal_power * 10f64.powf(-snr_db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_kernels::kernel_matrix;
    use crate::quadform_stats::cumulants;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.3
    }

    pub(crate) fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn covariance_entries() {
        let k = CovarianceKernel::new(0.5, 1.0).unwrap();
        let m = build_covariance(&k, &[-1.0, 0.0, 1.0]).unwrap();
        assert!((m[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((m[(0, 2)] - (-2.0f64).exp()).abs() < 1e-15);
        assert!((m[(0, 1)] - 0.6065).abs() < 1e-4);
        assert!((m[(0, 2)] - 0.1353).abs() < 1e-4);
        for i in 0..3 {
            assert_eq!(m[(i, i)], 1.0);
        }
        assert!(GaussianVectorModel::new(DVector::zeros(3), m, 1.0).is_ok());

        let k = CovarianceKernel::new(0.5, 2.0).unwrap();
        let far = build_covariance(&k, &[0.0, 40.0, 80.0]).unwrap();
        assert!((far - DMatrix::identity(3, 3) * 2.0).amax() < 1e-300);
    }

    #[test]
    fn covariance_rejects_duplicates() {
        let k = CovarianceKernel::new(0.5, 1.0).unwrap();
        assert_eq!(build_covariance(&k, &[0.0, 1.0, 1.0]), Err(TkoError::NonIncreasingTaps));
        assert!(CovarianceKernel::new(0.0, 1.0).is_err());
        assert!(CovarianceKernel::new(1.0, -1.0).is_err());
    }

    #[test]
    fn model_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(
            GaussianVectorModel::new(DVector::zeros(2), bad, 1.0),
            Err(TkoError::NotPositiveDefinite)
        );
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            GaussianVectorModel::new(DVector::zeros(2), asym, 1.0),
            Err(TkoError::NotSymmetric(_))
        ));
        assert!(matches!(
            GaussianVectorModel::new(DVector::zeros(3), DMatrix::identity(2, 2), 1.0),
            Err(TkoError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn identity_covariance_decompositions() {
        let model = GaussianVectorModel::new(DVector::zeros(3), DMatrix::identity(3, 3), 1.0).unwrap();
        let d = decompose(&model, &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0]))).unwrap();
        let mut l = d.lambdas.clone();
        l.sort_by(f64::total_cmp);
        assert_eq!(l, vec![-1.0, 1.0, 1.0]);
        assert!(d.s.iter().all(|&s| s == 0.0));

        let j = kernel_matrix(0, 1).unwrap();
        let d = decompose(&model, &j).unwrap();
        let mut l = d.lambdas.clone();
        l.sort_by(f64::total_cmp);
        let expect = [-0.5, 0.5, 1.0];
        for (a, b) in l.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn decompose_rejects_bad_input() {
        let model = GaussianVectorModel::new(DVector::zeros(3), DMatrix::identity(3, 3), 1.0).unwrap();
        assert!(matches!(decompose(&model, &DMatrix::identity(4, 4)), Err(TkoError::DimensionMismatch { .. })));
        let asym = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(decompose(&model, &asym), Err(TkoError::NotSymmetric(_))));
    }

    #[test]
    fn gaussian_kernel_sign_pattern() {
        let noise = CovarianceKernel::new(0.5, 1.0).unwrap();
        let k = OperatorKernel::new(0, 1).unwrap();
        let model = GaussianVectorModel::at_kernel_taps(&SignalSpec::Zero, &noise, &k, 0.0).unwrap();
        let d = decompose(&model, k.matrix()).unwrap();
        assert_eq!(d.negative_count(), 1);
        assert_eq!(d.positive_count(), 2);

        // every tested (p, q, c) has negative modes; 4-tap kernels have two
        for c in [0.05, 0.2, 0.5, 1.0, 3.0] {
            let noise = CovarianceKernel::new(c, 0.7).unwrap();
            for (p, q) in [(0, 1), (0, 2), (0, 4), (1, 2), (1, 3), (2, 4), (3, 7)] {
                let k = OperatorKernel::new(p, q).unwrap();
                let model = GaussianVectorModel::at_kernel_taps(&SignalSpec::Zero, &noise, &k, 0.0).unwrap();
                let d = decompose(&model, k.matrix()).unwrap();
                let expect = if p == 0 { 1 } else { 2 };
                assert_eq!(d.negative_count(), expect, "p={p} q={q} c={c}");
            }
        }
    }

    #[test]
    fn signal_tap_vectors() {
        let k = OperatorKernel::new(0, 1).unwrap();
        assert_eq!(signal_tap_vector(&SignalSpec::Zero, 3.0, &k), DVector::zeros(3));
        let w = 0.3;
        let v = signal_tap_vector(&SignalSpec::tone(1.0, w, 0.0), 0.0, &k);
        assert!((v[0] - w.cos()).abs() < 1e-15 && v[1] == 1.0 && (v[2] - w.cos()).abs() < 1e-15);

        let k = OperatorKernel::new(1, 3).unwrap();
        let a = SignalSpec::tone(1.0, 0.4, 0.1);
        let b = SignalSpec::tone(0.6, 0.92, 0.7);
        let both = SignalSpec::Tones(match (&a, &b) {
            (SignalSpec::Tones(x), SignalSpec::Tones(y)) => x.iter().chain(y).copied().collect(),
            _ => unreachable!(),
        });
        let sum = signal_tap_vector(&a, 2.0, &k) + signal_tap_vector(&b, 2.0, &k);
        assert!((signal_tap_vector(&both, 2.0, &k) - sum).amax() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let specs = [
            SignalSpec::tone(1.3, 0.7, 0.2),
            SignalSpec::AmFm {
                amplitude: 1.0,
                am_depth: 0.3,
                am_omega: 0.05,
                carrier: 0.8,
                fm_index: 2.0,
                fm_omega: 0.03,
                phase: 0.4,
            },
        ];
        for s in specs {
            for t in [0.0, 1.7, 13.2] {
                let h = 1e-5;
                let fd = (s.value(t + h) - s.value(t - h)) / (2.0 * h);
                assert!((fd - s.derivative(t)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn mean_variance_zero_signal_and_white_noise() {
        let noise = CovarianceKernel::new(0.5, 0.8).unwrap();
        let lags: Vec<f64> = (0..=8).map(|k| noise.value(k as f64)).collect();
        let (mean, _) = tko_mean_variance(2, 4, [0.0; 4], &lags, lags[0]).unwrap();
        assert!((mean - (lags[4] - lags[8])).abs() < 1e-15);
        let (mean, _) = tko_mean_variance(0, 1, [0.0; 4], &lags, lags[0]).unwrap();
        assert!((mean - (lags[0] - lags[2])).abs() < 1e-15);

        let mut white = vec![0.0; 9];
        white[0] = 1.3;
        let (mean, var) = tko_mean_variance(1, 3, [0.2, 0.5, -0.1, 0.7], &white, 1.3).unwrap();
        assert!((mean - (0.1 + 0.07)).abs() < 1e-15);
        // white noise: Var(n1 n2 - n3 n4) = 2 m0² plus signal terms
        let sig = 1.3 * (0.04 + 0.25 + 0.01 + 0.49);
        assert!((var - (2.0 * 1.69 + sig)).abs() < 1e-12);
    }

    #[test]
    fn mean_variance_agrees_with_cumulants() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = rng.random_range(0..3usize);
            let q = p + rng.random_range(1..4usize);
            let noise = CovarianceKernel::new(rng.random_range(0.05..2.0), rng.random_range(0.1..3.0)).unwrap();
            let lags: Vec<f64> = (0..=2 * q).map(|k| noise.value(k as f64)).collect();
            let taps = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ];
            let taps = if p == 0 { [taps[0], taps[0], taps[2], taps[3]] } else { taps };
            let (mean, var) = tko_mean_variance(p, q, taps, &lags, lags[0]).unwrap();
            let k = cumulants(
                &DVector::from_row_slice(&taps),
                &product_order_covariance(p, q, &lags),
                &product_order_stencil(),
                2,
            )
            .unwrap();
            assert!((mean - k.kappa[0]).abs() < 1e-10);
            assert!((var - k.kappa[1]).abs() < 1e-10 * var.abs().max(1.0));
        }
    }

    #[test]
    fn joint_model_blocks_match_single_models() {
        let noise = CovarianceKernel::new(0.5, 0.3).unwrap();
        let k = OperatorKernel::new(1, 2).unwrap();
        let sig = SignalSpec::tone(1.0, 0.4, 0.3);
        let x = GaussianVectorModel::at_kernel_taps(&sig, &noise, &k, 1.5).unwrap();
        let dx = GaussianVectorModel::derivative_at_kernel_taps(&sig, &noise, &k, 1.5).unwrap();
        let joint = GaussianVectorModel::joint_signal_derivative(&sig, &noise, &k, 1.5).unwrap();
        let m = joint.covariance();
        assert!((m.view((0, 0), (4, 4)) - x.covariance()).amax() < 1e-15);
        assert!((m.view((4, 4), (4, 4)) - dx.covariance()).amax() < 1e-15);
        assert!((joint.mu().rows(4, 4) - dx.mu()).amax() < 1e-15);
        // Cov(x(t), ẋ(t+h)) = d/dh R(h) < 0 for small h > 0
        let times = tap_times(&k, 1.5);
        assert!(times[1] > times[0]);
        assert!(m[(0, 5)] < 0.0);
    }

    proptest! {
        #[test]
        fn decomposition_reconstructs_traces(seed in 0u64..10_000, n in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_spd(&mut rng, n);
            let j = random_symmetric(&mut rng, n);
            let mu = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let n0 = rng.random_range(0.2..3.0);
            let model = GaussianVectorModel::new(mu.clone(), m.clone(), n0).unwrap();
            let d = decompose(&model, &j).unwrap();
            let mj = &m * &j;
            let sum: f64 = d.lambdas.iter().sum();
            let sum_sq: f64 = d.lambdas.iter().map(|l| l * l).sum();
            prop_assert!((sum * n0 - mj.trace()).abs() < 1e-10);
            prop_assert!((sum_sq * n0 * n0 - (&mj * &mj).trace()).abs() < 1e-10 * (1.0 + sum_sq * n0 * n0));
            let quad: f64 = d.lambdas.iter().zip(&d.s).map(|(l, s)| l * s * s).sum();
            let direct = (mu.transpose() * &j * &mu)[(0, 0)];
            prop_assert!((quad - direct).abs() < 1e-10 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn unit_noise_trace_identity() {
        // N0 = 1: Σλ = tr(MJ) directly
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_spd(&mut rng, 4);
        let j = random_symmetric(&mut rng, 4);
        let model = GaussianVectorModel::new(DVector::zeros(4), m.clone(), 1.0).unwrap();
        let d = decompose(&model, &j).unwrap();
        assert!((d.lambdas.iter().sum::<f64>() - (&m * &j).trace()).abs() < 1e-10);
    }
}
