//! Negativity of `Ψ(x) = ẋ² - xẍ` for `x(t) = cos(2πt) + a cos(2πft + θ0)`.
//!
//! At an extremum `ẋ = 0`, so `Ψ = -xẍ = 4π²·Q(cos(2πft + θ0))` with the
//! quadratic `Q(y) = a²f²y² + a(f² + 1)cos(2πt)·y + cos²(2πt)`. Its roots are
//! `y_R = -cos(2πt)/a` and `y_G = -cos(2πt)/(af²)`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TkoError};

const TAU: f64 = std::f64::consts::TAU;
/// Grid density used to bracket roots of `ẋ`.
pub const POINTS_PER_PERIOD: usize = 64;
const ROOT_TOL: f64 = 1e-12;
/// Largest `|ẋ|` (relative to `2π(1 + af)`) accepted as an extremum.
pub const EXTREMUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoToneSignal {
    a: f64,
    f: f64,
    theta0: f64,
}

/// `(x, ẋ, ẍ)` at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Derivatives {
    pub x: f64,
    pub dx: f64,
    pub ddx: f64,
}

impl Derivatives {
    pub fn psi(&self) -> f64 {
        self.dx * self.dx - self.x * self.ddx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremumKind {
    Maximum,
    Minimum,
    /// `ẍ = 0`: an inflection with zero slope.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub t: f64,
    pub kind: ExtremumKind,
    /// Positive minimum or negative maximum, the cases where `-xẍ` can turn negative.
    pub vulnerable: bool,
}

impl TwoToneSignal {
    /// `a = 0` is accepted as the pure-tone limit.
    pub fn new(a: f64, f: f64, theta0: f64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) || !(f > 0.0 && f.is_finite()) || !theta0.is_finite() {
            return Err(TkoError::InvalidParameter(format!(
                "two-tone signal needs a >= 0 and f > 0, got a={a}, f={f}"
            )));
        }
        Ok(Self { a, f, theta0 })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    fn second_phase(&self, t: f64) -> f64 {
        TAU * self.f * t + self.theta0
    }

    pub fn evaluate(&self, t: f64) -> Derivatives {
        let (a, f) = (self.a, self.f);
        let (s1, c1) = (TAU * t).sin_cos();
        let (s2, c2) = self.second_phase(t).sin_cos();
        Derivatives {
            x: c1 + a * c2,
            dx: -TAU * (s1 + a * f * s2),
            ddx: -TAU * TAU * (c1 + a * f * f * c2),
        }
    }

    pub fn psi(&self, t: f64) -> f64 {
        self.evaluate(t).psi()
    }

    /// `ẋ/(-2π) = sin(2πt) + af sin(2πft + θ0)`.
    fn slope(&self, t: f64) -> f64 {
        (TAU * t).sin() + self.a * self.f * self.second_phase(t).sin()
    }

    /// `(M1, M2)`: the derivative of the first tone and the negated derivative
    /// of the second; they cross exactly at extrema of `x`.
    pub fn component_curves(&self, t: f64) -> (f64, f64) {
        (-TAU * (TAU * t).sin(), TAU * self.a * self.f * self.second_phase(t).sin())
    }

    fn fastest_frequency(&self) -> f64 {
        if self.a > 0.0 {
            self.f.max(1.0)
        } else {
            1.0
        }
    }

    /// All zeros of `ẋ` in `[t0, t1]`.
    pub fn find_extrema(&self, t0: f64, t1: f64) -> Result<Vec<Extremum>> {
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(TkoError::InvalidParameter(format!("window [{t0}, {t1}] is empty or not finite")));
        }
        let per_unit = POINTS_PER_PERIOD as f64 * self.fastest_frequency();
        let n = ((t1 - t0) * per_unit).ceil().max(1.0) as usize;
        let h = (t1 - t0) / n as f64;
        let g = |t: f64| self.slope(t);
        // slope/(-2π) is bounded by 1 + af; grid values below this are roots
        let zero = 1e-14 * (1.0 + self.a * self.f);
        let bis = |a: f64, b: f64| crate::operator_kernels::bisect(&g, a, b, g(a), ROOT_TOL);
        let mut roots: Vec<f64> = Vec::new();
        let mut ta = t0;
        let mut ga = g(ta);
        if ga.abs() <= zero {
            roots.push(ta);
        }
        for k in 1..=n {
            let tb = if k == n { t1 } else { t0 + k as f64 * h };
            let gb = g(tb);
            let a_zero = ga.abs() <= zero;
            let b_zero = gb.abs() <= zero;
            if b_zero {
                roots.push(tb);
            } else if !a_zero && ga * gb < 0.0 {
                roots.push(bis(ta, tb));
            } else if !a_zero {
                // no sign change: a close pair of roots hides around a turning point of the slope
                let curv = |t: f64| self.evaluate(t).ddx;
                let (ca, cb) = (curv(ta), curv(tb));
                if ca * cb < 0.0 {
                    let tm = crate::operator_kernels::bisect(&curv, ta, tb, ca, ROOT_TOL);
                    let gm = g(tm);
                    if gm.abs() <= zero {
                        roots.push(tm);
                    } else if gm * ga < 0.0 {
                        roots.push(bis(ta, tm));
                        roots.push(bis(tm, tb));
                    }
                }
            }
            ta = tb;
            ga = gb;
        }
        roots.dedup_by(|b, a| (*b - *a).abs() < 1e-10);
        Ok(roots.into_iter().map(|t| self.classify(t)).collect())
    }

    fn classify(&self, t: f64) -> Extremum {
        let d = self.evaluate(t);
        let kind = if d.ddx < 0.0 {
            ExtremumKind::Maximum
        } else if d.ddx > 0.0 {
            ExtremumKind::Minimum
        } else {
            ExtremumKind::Flat
        };
        let vulnerable = matches!((kind, d.x > 0.0, d.x < 0.0), (ExtremumKind::Minimum, true, _) | (ExtremumKind::Maximum, _, true));
        Extremum { t, kind, vulnerable }
    }

    /// `(y_R, y_G)` at time `t`.
    pub fn negativity_bounds(&self, t: f64) -> (f64, f64) {
        let c1 = (TAU * t).cos();
        (-c1 / self.a, -c1 / (self.a * self.f * self.f))
    }

    /// The quadratic `Q(cos(2πft + θ0))` at `t`; `Ψ = 4π²Q` at an extremum.
    pub fn negativity_quadratic(&self, t: f64) -> f64 {
        let (a, f) = (self.a, self.f);
        let c1 = (TAU * t).cos();
        let y = self.second_phase(t).cos();
        a * a * f * f * y * y + y * c1 * a * (f * f + 1.0) + c1 * c1
    }

    /// Evaluates the negativity condition at an extremum three ways.
    pub fn negativity_check(&self, t0: f64) -> Result<NegativityCheck> {
        let d = self.evaluate(t0);
        let scale = TAU * (1.0 + self.a * self.f);
        if d.dx.abs() > EXTREMUM_TOL * scale {
            return Err(TkoError::NotAnExtremum { residual: d.dx });
        }
        let quadratic = self.negativity_quadratic(t0);
        let between = if self.a == 0.0 {
            false
        } else {
            let c = self.second_phase(t0).cos();
            // roots of the quadratic from its coefficients
            let (qa, qb, qc) = {
                let c1 = (TAU * t0).cos();
                (self.a * self.a * self.f * self.f, self.a * (self.f * self.f + 1.0) * c1, c1 * c1)
            };
            let disc = qb * qb - 4.0 * qa * qc;
            if disc < 0.0 {
                false
            } else {
                let (y_r, y_g) = self.negativity_bounds(t0);
                c >= y_r.min(y_g) && c <= y_r.max(y_g)
            }
        };
        Ok(NegativityCheck {
            t: t0,
            quadratic,
            quadratic_negative: quadratic <= 0.0,
            between_bounds: between,
            psi: -d.x * d.ddx,
        })
    }

    /// True iff `Ψ ≤ 0` at the extremum `t0`.
    pub fn is_negative_at_extremum(&self, t0: f64) -> Result<bool> {
        let c = self.negativity_check(t0)?;
        debug_assert!(
            c.quadratic.abs() <= 1e-9 || c.quadratic_negative == c.between_bounds,
            "quadratic and bound routes disagree at t = {t0}"
        );
        Ok(c.quadratic_negative)
    }
}

/// Outcome of the negativity test at one extremum. `psi` is `-xẍ` computed
/// directly from the signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativityCheck {
    pub t: f64,
    pub quadratic: f64,
    pub quadratic_negative: bool,
    pub between_bounds: bool,
    pub psi: f64,
}

/// Statistics of the intervals where an operator output is negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionStats {
    /// Sign changes per unit time.
    pub zero_crossing_rate: f64,
    /// Durations of complete negative excursions, sorted ascending.
    pub negative_durations: Vec<f64>,
    pub mean_negative_duration: f64,
    /// `(start, end)` of each complete negative excursion.
    pub intervals: Vec<(f64, f64)>,
}

/// Excursion statistics of samples `psi[k]` taken at `t0 + k·dt`.
/// Crossing instants are located by linear interpolation; excursions cut by
/// the ends of the record are not counted as durations.
pub fn excursion_stats_from_samples(psi: &[f64], t0: f64, dt: f64) -> ExcursionStats {
    let n = psi.len();
    let mut crossings = 0usize;
    let mut intervals = Vec::new();
    let mut start: Option<f64> = None;
    let cross_time = |k: usize| {
        let (a, b) = (psi[k - 1], psi[k]);
        t0 + dt * ((k - 1) as f64 + a / (a - b))
    };
    for k in 1..n {
        let was_neg = psi[k - 1] < 0.0;
        let is_neg = psi[k] < 0.0;
        if was_neg != is_neg {
            crossings += 1;
            let tc = cross_time(k);
            if is_neg {
                start = Some(tc);
            } else if let Some(s) = start.take() {
                intervals.push((s, tc));
            }
        }
    }
    let span = dt * (n.saturating_sub(1)) as f64;
    let mut durations: Vec<f64> = intervals.iter().map(|(a, b)| b - a).collect();
    durations.sort_by(f64::total_cmp);
    let mean = if durations.is_empty() {
        0.0
    } else {
        durations.iter().sum::<f64>() / durations.len() as f64
    };
    ExcursionStats {
        zero_crossing_rate: if span > 0.0 { crossings as f64 / span } else { 0.0 },
        negative_durations: durations,
        mean_negative_duration: mean,
        intervals,
    }
}

/// Excursion statistics of the analytic `Ψ(x)` on `[t0, t1]` with step `dt`.
pub fn negative_excursion_stats(signal: &TwoToneSignal, t0: f64, t1: f64, dt: f64) -> Result<ExcursionStats> {
    let max_step = 1.0 / (POINTS_PER_PERIOD as f64 * signal.fastest_frequency());
    if !(dt > 0.0) || dt > max_step * (1.0 + 1e-12) {
        return Err(TkoError::InvalidParameter(format!("grid step {dt} exceeds {max_step}")));
    }
    if !(t1 > t0) {
        return Err(TkoError::InvalidParameter("empty window".into()));
    }
    let n = ((t1 - t0) / dt).round() as usize + 1;
    let psi: Vec<f64> = (0..n).map(|k| signal.psi(t0 + k as f64 * dt)).collect();
    Ok(excursion_stats_from_samples(&psi, t0, dt))
}

/// Draws a two-tone signal whose second component stands in for narrowband
/// noise at frequency ratio `f`: Rayleigh amplitude with scale `sigma`,
/// uniform phase.
pub fn random_two_tone<R: Rng + ?Sized>(rng: &mut R, f: f64, sigma: f64) -> Result<TwoToneSignal> {
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let a = sigma * (-2.0 * u.ln()).sqrt();
    let theta = Uniform::new(0.0, TAU).map_err(|e| TkoError::InvalidParameter(e.to_string()))?.sample(rng);
    TwoToneSignal::new(a, f, theta)
}
