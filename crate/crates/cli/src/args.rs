use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tko_core::scenario;

use crate::output::Format;

pub const DEFAULT_SEED: u64 = 0x7e4a_11c3;

#[derive(Debug, Parser)]
#[command(name = "tko", version, about = "Noise statistics of Teager-Kaiser energy operators")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Output encoding.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file. CSV writes extra tables beside it as `<stem>.<table>.csv`.
    /// Without it the primary table (or JSON document) goes to stdout.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Seed for every Monte Carlo stage.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Monte Carlo sample count for --validate and conditioned densities.
    #[arg(long, global = true, default_value_t = 1_000_000)]
    pub mc_samples: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tone response of Ψ_p^q over a frequency grid.
    FreqResponse(FreqArgs),
    /// Density of the operator output for a tone in Gaussian noise.
    Pdf(DistArgs),
    /// Distribution function of the operator output.
    Cdf(DistArgs),
    /// Cumulants, eigenvalues and output SNR of the operator output.
    Cumulants(CumulantArgs),
    /// Density of the IF-squared ratio Ψ[ẋ]/Ψ[x].
    Ratio(RatioArgs),
    /// Two-tone response, extrema and negativity intervals.
    TwoTone(TwoToneArgs),
    /// Energy separation on a synthetic or file-supplied signal.
    Esa(EsaArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KernelArgs {
    #[arg(long, default_value_t = 0)]
    pub p: usize,
    #[arg(long, default_value_t = 1)]
    pub q: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FreqArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Sampling interval T in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub interval: f64,
    /// Upper end of the ω grid in rad/s (default π/T).
    #[arg(long)]
    pub omega_max: Option<f64>,
    #[arg(long, default_value_t = 513)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Real,
    Narrowband,
}

/// A unit-interval tone in Gaussian-correlated noise, sampled at the kernel taps.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Input SNR in dB: signal power over one period divided by noise power.
    #[arg(long, default_value_t = 17.0)]
    pub snr_db: f64,
    /// Drop the tone but keep the noise power set by --snr-db.
    #[arg(long)]
    pub noise_only: bool,
    #[arg(long, default_value_t = scenario::TONE_OMEGA)]
    pub omega: f64,
    #[arg(long, default_value_t = scenario::TONE_AMPLITUDE)]
    pub amplitude: f64,
    #[arg(long, default_value_t = scenario::TONE_PHASE)]
    pub phase: f64,
    /// Noise covariance R(τ) = N0·exp(-c τ²).
    #[arg(long, default_value_t = scenario::NOISE_C)]
    pub noise_c: f64,
    #[arg(long, value_enum, default_value_t = Variant::Real)]
    pub variant: Variant,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DistArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Grid start in units of the noise power N0 (default: mean - 8 sd, clipped to the support).
    #[arg(long, allow_negative_numbers = true)]
    pub v_min: Option<f64>,
    /// Grid end in units of N0 (default: mean + 8 sd).
    #[arg(long, allow_negative_numbers = true)]
    pub v_max: Option<f64>,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    /// Attach a Monte Carlo comparison (L1 distance, cumulant z-scores).
    #[arg(long)]
    pub validate: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CumulantArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Highest cumulant order.
    #[arg(long, default_value_t = 8)]
    pub orders: usize,
    #[arg(long)]
    pub validate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioMethod {
    /// Ratio integral when P(V2 <= 0) is small, else conditioned Monte Carlo
    /// if a threshold is given.
    Auto,
    Geary,
    Conditioned,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RatioArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Keep draws with Ψ[x] above this value (conditioned density).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum, default_value_t = RatioMethod::Auto)]
    pub method: RatioMethod,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    pub r_min: f64,
    /// Grid end (default 4ω²).
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    #[arg(long)]
    pub validate: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TwoToneArgs {
    #[arg(long, default_value_t = 0.6)]
    pub a: f64,
    #[arg(long, default_value_t = 2.3)]
    pub f: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    pub theta0: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    pub t0: f64,
    #[arg(long, default_value_t = 2.0)]
    pub t1: f64,
    /// Curve and excursion grid step (default 1/(256 f_fast)).
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EsaArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Single-column CSV of samples; replaces the synthetic tone.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 1.0)]
    pub fs: f64,
    /// Synthetic tone frequency in rad/sample.
    #[arg(long, default_value_t = scenario::TONE_OMEGA)]
    pub omega: f64,
    #[arg(long, default_value_t = scenario::TONE_AMPLITUDE)]
    pub amplitude: f64,
    /// Add Gaussian-correlated noise at this input SNR (noiseless if absent).
    #[arg(long, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    /// Noise covariance shape in 1/sample², R(k) = N0·exp(-c k²).
    #[arg(long, default_value_t = scenario::NOISE_C)]
    pub noise_c: f64,
    #[arg(long, default_value_t = 4096)]
    pub samples: usize,
    /// Validity threshold on Ψ[x] and Ψ[ẋ]: a number, or `auto` for 0.1·median Ψ[x].
    #[arg(long, default_value = "0")]
    pub threshold: String,
    /// Apply the (1,2,1)/4 post-detection filter to both operator outputs.
    #[arg(long)]
    pub filter: bool,
    #[arg(long, default_value_t = tko_core::esa_pipeline::DEFAULT_REFINE)]
    pub refine: usize,
}
