//! Exact and simulated noise statistics for Teager-Kaiser energy operators.
//!
//! The crate covers the discrete operator family `Ψ_p^q` and its kernel
//! matrices, the Gaussian model of signal-plus-noise samples at the kernel
//! taps, characteristic functions and densities of the resulting indefinite
//! quadratic forms, densities of ratios of two such forms, the two-tone
//! negativity analysis, the energy separation demodulator, and a seeded Monte
//! Carlo engine that serves as an independent check on all of the above.

pub mod error;
pub mod esa_pipeline;
pub mod gaussian_model;
pub mod mc_oracle;
pub mod operator_kernels;
pub mod quadform_stats;
pub mod quadrature;
pub mod ratio_stats;
pub mod scenario;
pub mod special;
pub mod two_tone_analysis;

pub use error::{Result, TkoError};
pub use esa_pipeline::{binomial_filter, esa_demodulate, interpolate_derivative, EsaEstimate};
pub use gaussian_model::{
    build_covariance, decompose, CovarianceKernel, GaussianVectorModel, SignalSpec,
    SpectralDecomposition,
};
pub use mc_oracle::McConfig;
pub use operator_kernels::{apply_tko, freq_response, kernel_matrix, OperatorKernel, SampledSignal};
pub use quadform_stats::{ChfEvaluator, CumulantSet, DensityGrid};
pub use ratio_stats::RatioSpec;
pub use two_tone_analysis::TwoToneSignal;
