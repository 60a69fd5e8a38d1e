//! Angles on the torus `R / 2πZ`.

use std::f64::consts::{PI, TAU};

/// Reduces an angle to `[0, 2π)`.
#[inline]
pub fn canonical(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Shortest distance between two points on the circle, in `[0, π]`.
#[inline]
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = canonical(a - b);
    d.min(TAU - d)
}

/// Signed representative of `theta` in `(-π, π]`.
#[inline]
pub fn signed(theta: f64) -> f64 {
    let c = canonical(theta);
    if c > PI {
        c - TAU
    } else {
        c
    }
}

/// Equality modulo 2π up to `tol`.
#[inline]
pub fn angles_close(a: f64, b: f64, tol: f64) -> bool {
    circular_distance(a, b) <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_range() {
        for &x in &[-1e-18, -TAU, TAU, 3.0 * TAU + 0.5, -0.5, 0.0] {
            let c = canonical(x);
            assert!((0.0..TAU).contains(&c), "{x} -> {c}");
        }
        assert!((canonical(-0.5) - (TAU - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn distance_wraps() {
        assert!((circular_distance(0.1, TAU - 0.1) - 0.2).abs() < 1e-14);
        assert!((circular_distance(0.0, PI) - PI).abs() < 1e-15);
        assert!((signed(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }
}
