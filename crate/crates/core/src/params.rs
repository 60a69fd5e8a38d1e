use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Off-diagonal strength `t` of the free operator and its partner `r = √(1 - t²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandParameters {
    t: f64,
    r: f64,
}

impl BandParameters {
    /// `t` must lie strictly inside `(0, 1)`.
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0 && t < 1.0) {
            return Err(domain(format!("t = {t} outside (0, 1)")));
        }
        Ok(BandParameters {
            t,
            r: (1.0 - t * t).sqrt(),
        })
    }

    /// Parameters from the Verblunski modulus `r`, with `t = √(1 - r²)`.
    pub fn from_r(r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(domain(format!("r = {r} outside (0, 1)")));
        }
        Ok(BandParameters {
            t: (1.0 - r * r).sqrt(),
            r,
        })
    }

    #[inline]
    pub fn t(&self) -> f64 {
        self.t
    }

    #[inline]
    pub fn r(&self) -> f64 {
        self.r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pythagorean_at_working_precision() {
        for i in 1..1000 {
            let p = BandParameters::new(i as f64 / 1000.0).unwrap();
            assert!((p.r() * p.r() + p.t() * p.t() - 1.0).abs() <= 2.0 * f64::EPSILON);
            let q = BandParameters::from_r(i as f64 / 1000.0).unwrap();
            assert!((q.r() * q.r() + q.t() * q.t() - 1.0).abs() <= 2.0 * f64::EPSILON);
        }
    }

    #[test]
    fn endpoints_rejected() {
        assert!(BandParameters::new(0.0).is_err());
        assert!(BandParameters::new(1.0).is_err());
        assert!(BandParameters::new(f64::NAN).is_err());
        assert!(BandParameters::from_r(1.0).is_err());
    }
}
