//! The discrete operator family `Ψ_p^q[x[n]] = (x[n-p]x[n+p] - x[n-q]x[n+q]) / T²`.
//!
//! For `p = 0` the operator reads three samples `(x[n-q], x[n], x[n+q])`; for
//! `p > 0` it reads four, `(x[n-q], x[n-p], x[n+p], x[n+q])`. Either way the
//! output at `n` is the quadratic form `X'JX / T²` with `J` from
//! [`kernel_matrix`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TkoError};

/// Grid density for bracketing roots of the discriminator equation.
const EXTREMA_GRID_PER_PI: usize = 1024;
const EXTREMA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorKernel {
    p: usize,
    q: usize,
    interval: f64,
    matrix: DMatrix<f64>,
}

impl OperatorKernel {
    pub fn new(p: usize, q: usize) -> Result<Self> {
        let matrix = kernel_matrix(p as i64, q as i64)?;
        Ok(Self { p, q, interval: 1.0, matrix })
    }

    /// Sets the sampling interval `T` (seconds). Delays stay integer sample
    /// counts; `T` only scales outputs and the frequency axis.
    pub fn with_interval(mut self, interval: f64) -> Result<Self> {
        if !(interval > 0.0 && interval.is_finite()) {
            return Err(TkoError::InvalidParameter(format!(
                "sampling interval must be positive, got {interval}"
            )));
        }
        self.interval = interval;
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn tap_count(&self) -> usize {
        self.matrix.nrows()
    }

    /// Tap offsets in samples, in the order used by [`kernel_matrix`].
    pub fn tap_offsets(&self) -> Vec<i64> {
        let (p, q) = (self.p as i64, self.q as i64);
        if p == 0 {
            vec![-q, 0, q]
        } else {
            vec![-q, -p, p, q]
        }
    }

    pub fn label(&self) -> String {
        format!("psi_{}^{}", self.p, self.q)
    }
}

/// Symmetric stencil matrix of `Ψ_p^q`.
pub fn kernel_matrix(p: i64, q: i64) -> Result<DMatrix<f64>> {
    if p < 0 || q <= 0 || p >= q {
        return Err(TkoError::InvalidDelays { p, q });
    }
    let m = if p == 0 {
        let mut m = DMatrix::zeros(3, 3);
        m[(1, 1)] = 1.0;
        m[(0, 2)] = -0.5;
        m[(2, 0)] = -0.5;
        m
    } else {
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 3)] = -0.5;
        m[(3, 0)] = -0.5;
        m[(1, 2)] = 0.5;
        m[(2, 1)] = 0.5;
        m
    };
    Ok(m)
}

/// A uniformly sampled real sequence.
///
/// `offset` is the index of `samples[0]` on the timeline of the signal this
/// one was derived from; trimming operators advance it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub offset: usize,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(TkoError::InvalidParameter(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        Ok(Self { samples, fs, offset: 0 })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn interval(&self) -> f64 {
        1.0 / self.fs
    }

    /// Time of `samples[i]` in seconds on the source timeline.
    pub fn time_of(&self, i: usize) -> f64 {
        (self.offset + i) as f64 / self.fs
    }
}

/// Applies `Ψ_p^q` along the signal. Edges are trimmed: output `k` is centred
/// on input sample `k + q`, and the result is `len - 2q` long.
pub fn apply_tko(signal: &SampledSignal, kernel: &OperatorKernel) -> Result<SampledSignal> {
    let (p, q) = (kernel.p, kernel.q);
    let x = &signal.samples;
    let needed = 2 * q + 1;
    if x.len() < needed {
        return Err(TkoError::SignalTooShort { needed, got: x.len() });
    }
    let inv_t2 = 1.0 / (kernel.interval * kernel.interval);
    let out = (q..x.len() - q)
        .map(|n| (x[n - p] * x[n + p] - x[n - q] * x[n + q]) * inv_t2)
        .collect();
    Ok(SampledSignal {
        samples: out,
        fs: signal.fs,
        offset: signal.offset + q,
    })
}

/// Response of `Ψ_p^q` to a unit tone at angular frequency `omega`
/// (rad per unit of `T`): `1 - cos 2ωt_q` for `p = 0`, else
/// `cos 2ωt_p - cos 2ωt_q`.
pub fn freq_response(kernel: &OperatorKernel, omega: f64) -> f64 {
    let tp = kernel.p as f64 * kernel.interval;
    let tq = kernel.q as f64 * kernel.interval;
    (2.0 * omega * tp).cos() - (2.0 * omega * tq).cos()
}

fn discriminator_equation(tp: f64, tq: f64, omega: f64) -> f64 {
    tp * (2.0 * omega * tp).sin() - tq * (2.0 * omega * tq).sin()
}

/// Roots of `t_p sin 2ωt_p = t_q sin 2ωt_q` in `[lo, hi]`, i.e. the extrema of
/// [`freq_response`] for a four-sample kernel.
pub fn discriminator_extrema(kernel: &OperatorKernel, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if kernel.p == 0 {
        return Err(TkoError::InvalidParameter(
            "discriminator extrema require p > 0".into(),
        ));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(TkoError::InvalidParameter(format!(
            "degenerate search interval [{lo}, {hi}]"
        )));
    }
    let tp = kernel.p as f64 * kernel.interval;
    let tq = kernel.q as f64 * kernel.interval;
    let g = |w: f64| discriminator_equation(tp, tq, w);
    // one oscillation of sin(2ωt_q) spans π/t_q in ω
    let per_unit = EXTREMA_GRID_PER_PI as f64 * tq / std::f64::consts::PI;
    let n = ((hi - lo) * per_unit).ceil().max(16.0) as usize;
    let step = (hi - lo) / n as f64;

    let mut roots: Vec<f64> = Vec::new();
    let push = |r: f64, roots: &mut Vec<f64>| {
        if roots.last().is_none_or(|&last| (r - last).abs() > 1e-9) {
            roots.push(r);
        }
    };
    let mut x0 = lo;
    let mut g0 = g(x0);
    if g0 == 0.0 {
        push(x0, &mut roots);
    }
    for i in 1..=n {
        let x1 = if i == n { hi } else { lo + i as f64 * step };
        let g1 = g(x1);
        if g1 == 0.0 {
            push(x1, &mut roots);
        } else if g0 != 0.0 && g0.signum() != g1.signum() {
            push(bisect(&g, x0, x1, g0, EXTREMA_TOL), &mut roots);
        }
        x0 = x1;
        g0 = g1;
    }
    Ok(roots)
}

/// Zeros of [`freq_response`] in `[lo, hi]`, sorted: `cos 2ωt_p = cos 2ωt_q`
/// holds exactly when `ω(t_q - t_p)` or `ω(t_q + t_p)` is a multiple of `π`.
pub fn response_zeros(kernel: &OperatorKernel, lo: f64, hi: f64) -> Vec<f64> {
    let tp = kernel.p as f64 * kernel.interval;
    let tq = kernel.q as f64 * kernel.interval;
    let mut z = Vec::new();
    for span in [tq - tp, tq + tp] {
        let step = std::f64::consts::PI / span;
        let first = (lo / step).ceil() as i64;
        let last = (hi / step).floor() as i64;
        z.extend((first..=last).map(|k| k as f64 * step));
    }
    z.sort_by(f64::total_cmp);
    z.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    z
}

pub(crate) fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> f64 {
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Mixing products of `Ψ_p^q` for `x(t) = a_k sin ω_k t + a_l sin ω_l t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossTerms {
    /// Constant part, `Σ a² [sin² ωt_q - sin² ωt_p]`.
    pub dc: f64,
    /// Coefficient of `cos (ω_k + ω_l) t`.
    pub sum_coeff: f64,
    /// Coefficient of `cos (ω_k - ω_l) t`.
    pub diff_coeff: f64,
}

pub fn cross_term_amplitudes(
    a_k: f64,
    a_l: f64,
    omega_k: f64,
    omega_l: f64,
    kernel: &OperatorKernel,
) -> CrossTerms {
    let tp = kernel.p as f64 * kernel.interval;
    let tq = kernel.q as f64 * kernel.interval;
    let dc_one = |a: f64, w: f64| a * a * ((w * tq).sin().powi(2) - (w * tp).sin().powi(2));
    let sum = omega_k + omega_l;
    let diff = omega_k - omega_l;
    CrossTerms {
        dc: dc_one(a_k, omega_k) + dc_one(a_l, omega_l),
        sum_coeff: -a_k * a_l * ((diff * tp).cos() - (diff * tq).cos()),
        diff_coeff: a_k * a_l * ((sum * tp).cos() - (sum * tq).cos()),
    }
}
