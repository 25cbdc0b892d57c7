//! Special functions not covered by `libm`.

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Exponentially scaled modified Bessel function `e^{-|x|} I0(x)`.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x <= 15.0 {
        let y = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= y / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        // Hankel asymptotic series; terms decrease monotonically for x > 15
        // well past double precision.
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            let ratio = (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * x * k);
            if ratio >= 1.0 {
                break;
            }
            term *= ratio;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
            k += 1.0;
        }
        sum / (2.0 * std::f64::consts::PI * x).sqrt()
    }
}

/// `I0(x)`; overflows for `|x| > ~700`, prefer [`bessel_i0e`].
pub fn bessel_i0(x: f64) -> f64 {
    bessel_i0e(x) * x.abs().exp()
}
