//! Diagonal basis change taking the constant-modulus CMV matrix to `-U⁺`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angle::canonical;
use crate::disorder::VerblunskiPhaseSequence;
use crate::error::{domain, Result};
use crate::params::BandParameters;

use super::window::{build_cmv, build_u_plus};

/// Phases `β_j` of the unitary `B|j⟩ = e^{iβ_j}|j⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisChange {
    pub betas: Vec<f64>,
    pub beta0: f64,
}

impl BasisChange {
    /// Entry `(j, k)` of `B⁻¹ C B` given `C_jk`.
    pub fn conjugate_entry(&self, j: usize, k: usize, c: Complex64) -> Complex64 {
        c * Complex64::from_polar(1.0, self.betas[k] - self.betas[j])
    }
}

/// Builds `β_0..β_{size-1}` by the recursions
/// `β₁ - β₀ = θ₁ + π`, `β_{2k+1} - β_{2k-1} = θ_{2k+1}`, `β_{2k+2} - β_{2k} = -θ_{2k}`.
pub fn build_basis_change(thetas: &[f64], beta0: f64, size: usize) -> Result<BasisChange> {
    if size == 0 {
        return Err(domain("basis change needs at least one index"));
    }
    if thetas.len() < size {
        return Err(domain(format!(
            "basis change of size {size} needs {size} phases, got {}",
            thetas.len()
        )));
    }
    let mut betas = vec![0.0; size];
    betas[0] = canonical(beta0);
    for j in 1..size {
        betas[j] = if j == 1 {
            canonical(betas[0] + thetas[1] + PI)
        } else if j % 2 == 1 {
            canonical(betas[j - 2] + thetas[j])
        } else {
            canonical(betas[j - 2] - thetas[j - 2])
        };
    }
    Ok(BasisChange {
        betas,
        beta0: canonical(beta0),
    })
}

/// Closed-form `β_j`: odd `j = 2k+1` gives `θ_{2k+1} + θ_{2k-1} + … + θ₁ + β₀ + π`,
/// even `j = 2k+2` gives `β₀ - (θ_{2k} + θ_{2k-2} + … + θ₀)`.
pub fn basis_change_closed_form(thetas: &[f64], beta0: f64, j: usize) -> f64 {
    if j == 0 {
        return canonical(beta0);
    }
    if j % 2 == 1 {
        let s: f64 = (1..=j).step_by(2).map(|i| thetas[i]).sum();
        canonical(s + beta0 + PI)
    } else {
        let s: f64 = (0..j - 1).step_by(2).map(|i| thetas[i]).sum();
        canonical(beta0 - s)
    }
}

/// max-norm of `B⁻¹ C B + U⁺` over all rows except the last two, which the
/// far-edge closures of both matrices touch.
///
/// `U⁺` is built from `θ_k = η_k - η_{k-1}` (with `η_{-1} = 0`).
pub fn cmv_conjugation_check(v: &VerblunskiPhaseSequence, beta0: f64, size: usize) -> Result<f64> {
    if v.len() < size {
        return Err(domain(format!(
            "conjugation check of size {size} needs {size} Verblunski phases, got {}",
            v.len()
        )));
    }
    let c = build_cmv(v, size)?;
    let thetas = v.thetas();
    let b = build_basis_change(&thetas, beta0, size)?;
    let p = BandParameters::from_r(v.r)?;
    let u_plus = build_u_plus(&p, &v.theta_realization()?, size, 0.0)?;
    let mut defect: f64 = 0.0;
    for j in 0..size - 2 {
        for k in 0..size {
            let lhs = b.conjugate_entry(j, k, c.matrix()[(j, k)]);
            defect = defect.max((lhs + u_plus.matrix()[(j, k)]).norm());
        }
    }
    Ok(defect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angle::circular_distance;
    use crate::disorder::{correlated_verblunski, sample_phases, IndexRange, PhaseDistribution};

    #[test]
    fn zero_phases_give_pi_and_zero() {
        let b = build_basis_change(&[0.0; 9], 0.0, 9).unwrap();
        for (j, &beta) in b.betas.iter().enumerate() {
            let want = if j % 2 == 1 { PI } else { 0.0 };
            assert!(circular_distance(beta, want) < 1e-15, "{j}");
        }
    }

    #[test]
    fn recursion_agrees_with_closed_form() {
        let w = sample_phases(&PhaseDistribution::uniform(), 8, IndexRange::with_len(0, 64).unwrap()).unwrap();
        for &beta0 in &[0.0, 1.3, -2.0] {
            let b = build_basis_change(&w.phases, beta0, 64).unwrap();
            for j in 0..64 {
                let cf = basis_change_closed_form(&w.phases, beta0, j);
                assert!(circular_distance(cf, b.betas[j]) < 1e-12, "j={j}");
            }
        }
    }

    #[test]
    fn beta0_is_a_global_phase() {
        let w = sample_phases(&PhaseDistribution::uniform(), 2, IndexRange::with_len(0, 20).unwrap()).unwrap();
        let a = build_basis_change(&w.phases, 0.0, 20).unwrap();
        let b = build_basis_change(&w.phases, 0.9, 20).unwrap();
        for j in 0..20 {
            assert!(circular_distance(b.betas[j], a.betas[j] + 0.9) < 1e-12);
        }
    }

    #[test]
    fn conjugation_deterministic_and_random() {
        let v = VerblunskiPhaseSequence::from_etas(vec![0.0; 40], 0.6).unwrap();
        assert!(cmv_conjugation_check(&v, 0.0, 40).unwrap() < 1e-12);

        let w = sample_phases(&PhaseDistribution::uniform(), 13, IndexRange::with_len(0, 100).unwrap()).unwrap();
        let v = correlated_verblunski(&w, 0.37).unwrap();
        let d0 = cmv_conjugation_check(&v, 0.0, 100).unwrap();
        let d1 = cmv_conjugation_check(&v, 2.5, 100).unwrap();
        assert!(d0 < 1e-12, "{d0}");
        assert!((d0 - d1).abs() < 1e-12);
        assert!(cmv_conjugation_check(&v, 0.0, 102).is_err());
    }
}
