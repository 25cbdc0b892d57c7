//! The reference tone-in-noise setup shared by the CLI demonstrations and
//! the acceptance tests: a unit-interval tone at `ω = 0.2` rad/sample in
//! Gaussian-correlated noise with `c = 0.05`, noise power set from an input
//! SNR over one period.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::gaussian_model::{noise_scale_for_snr, CovarianceKernel, GaussianVectorModel, SignalSpec};
use crate::operator_kernels::OperatorKernel;
use crate::ratio_stats::RatioSpec;

pub const TONE_OMEGA: f64 = 0.2;
pub const TONE_AMPLITUDE: f64 = 1.0;
pub const TONE_PHASE: f64 = 0.3;
pub const NOISE_C: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ToneScenario {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
    pub noise_c: f64,
    pub snr_db: f64,
}

impl ToneScenario {
    pub fn new(snr_db: f64) -> Self {
        Self { amplitude: TONE_AMPLITUDE, omega: TONE_OMEGA, phase: TONE_PHASE, noise_c: NOISE_C, snr_db }
    }

    pub fn signal(&self) -> SignalSpec {
        SignalSpec::tone(self.amplitude, self.omega, self.phase)
    }

    pub fn noise(&self) -> Result<CovarianceKernel> {
        CovarianceKernel::new(self.noise_c, noise_scale_for_snr(self.signal().power(), self.snr_db))
    }

    /// Tap vector at `t = 0` for a unit-interval kernel.
    pub fn model(&self, kernel: &OperatorKernel) -> Result<GaussianVectorModel> {
        GaussianVectorModel::at_kernel_taps(&self.signal(), &self.noise()?, kernel, 0.0)
    }

    /// `Ψ[ẋ]/Ψ[x]` on the joint (value, derivative) tap vector, an estimate of ω².
    pub fn if_squared_ratio(&self, kernel: &OperatorKernel) -> Result<RatioSpec> {
        let model = GaussianVectorModel::joint_signal_derivative(&self.signal(), &self.noise()?, kernel, 0.0)?;
        let j = kernel.matrix();
        let r = j.nrows();
        let mut num = DMatrix::zeros(2 * r, 2 * r);
        let mut den = DMatrix::zeros(2 * r, 2 * r);
        num.view_mut((r, r), (r, r)).copy_from(j);
        den.view_mut((0, 0), (r, r)).copy_from(j);
        RatioSpec::new(num, den, model)
    }
}

/// Output SNR `κ₁(S+N)/κ₁(N)` in dB.
pub fn output_snr_db(signal_plus_noise_mean: f64, noise_mean: f64) -> f64 {
    10.0 * (signal_plus_noise_mean / noise_mean).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadform_stats::{ChfEvaluator, ChfVariant};

    #[test]
    fn noise_power_follows_snr() {
        let s = ToneScenario::new(17.0);
        let n = s.noise().unwrap();
        assert!((10.0 * (0.5 / n.scale).log10() - 17.0).abs() < 1e-12);
    }

    #[test]
    fn if_ratio_noiseless_limit() {
        let s = ToneScenario { snr_db: 120.0, ..ToneScenario::new(0.0) };
        let k = OperatorKernel::new(0, 1).unwrap();
        let spec = s.if_squared_ratio(&k).unwrap();
        let mu = spec.model().mu();
        let v1 = (mu.transpose() * spec.j_num() * mu)[(0, 0)];
        let v2 = (mu.transpose() * spec.j_den() * mu)[(0, 0)];
        assert!((v1 / v2 / (TONE_OMEGA * TONE_OMEGA) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn model_mean_matches_tone_response() {
        let s = ToneScenario::new(17.0);
        for (p, q) in [(0, 1), (0, 4), (2, 4)] {
            let k = OperatorKernel::new(p, q).unwrap();
            let m = s.model(&k).unwrap();
            let full = ChfEvaluator::from_model(&m, k.matrix(), ChfVariant::Real).unwrap().mean();
            let noise = ChfEvaluator::from_model(&m.noise_only(), k.matrix(), ChfVariant::Real).unwrap().mean();
            let resp = crate::operator_kernels::freq_response(&k, TONE_OMEGA);
            assert!((full - noise - 0.5 * resp).abs() < 1e-12, "({p},{q})");
        }
    }
}
