//! Thin wrappers over double-exponential quadrature, including the half line.

use crate::error::{invalid, Result};

/// `∫_a^b f`, absolute target error `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    quadrature::integrate(f, a, b, tol).integral
}

/// `∫_0^∞ f`, split at `scale` so that mass near the origin is resolved on a
/// finite interval and the tail goes through `r = scale + s/(1-s)`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, scale: f64, tol: f64) -> Result<f64> {
    if !(scale.is_finite() && scale > 0.0) {
        return invalid(format!("split point must be positive, got {scale}"));
    }
    let head = integrate(&f, 0.0, scale, tol);
    let tail = integrate(
        |s: f64| {
            if s >= 1.0 {
                return 0.0;
            }
            let one = 1.0 - s;
            let v = f(scale + s / one) / (one * one);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    );
    Ok(head + tail)
}
