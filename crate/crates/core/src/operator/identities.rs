//! Exact vector identities behind the cyclicity of `{|-1⟩, |0⟩}` for `U_ω`
//! and of `|0⟩` for `U⁺_ω`.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{domain, Error, Result};

use super::window::{BandUnitaryWindow, Flavor};

/// Named max-norm defects.
pub type IdentityDefects = BTreeMap<String, f64>;

fn cis(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, x)
}

struct Ctx<'a> {
    w: &'a BandUnitaryWindow,
    r: f64,
    t: f64,
}

impl Ctx<'_> {
    fn e(&self, k: i64) -> Result<Vec<Complex64>> {
        self.w.basis(k)
    }

    /// Phase `θ_k` including the spectral shift carried by the window.
    fn theta(&self, k: i64) -> Result<f64> {
        let ph = self
            .w
            .phases()
            .ok_or_else(|| domain("window carries no phase realization"))?;
        Ok(ph.phase(k)? + self.w.alpha())
    }

    fn u(&self, k: i64) -> Result<Vec<Complex64>> {
        Ok(self.w.apply(&self.e(k)?))
    }

    fn u_inv(&self, k: i64) -> Result<Vec<Complex64>> {
        Ok(self.w.apply_adjoint(&self.e(k)?))
    }

    fn combo(&self, terms: &[(Complex64, i64)]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.w.size()];
        for &(c, k) in terms {
            let i = self.w.local(k).ok_or(Error::OutOfRange {
                index: k,
                lo: self.w.index_range().lo,
                hi: self.w.index_range().hi,
            })?;
            out[i] += c;
        }
        Ok(out)
    }
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn lin(a: Complex64, x: &[Complex64], b: Complex64, y: &[Complex64]) -> Vec<Complex64> {
    x.iter().zip(y).map(|(p, q)| a * p + b * q).collect()
}

/// Checks the expansions of `U|-1⟩`, `U|0⟩`, `U⁻¹|0⟩`, `U⁻¹|-1⟩` and the two
/// recovery identities for `|1⟩` and `|-2⟩` on a full-lattice window.
///
/// The window must cover lattice indices `-6..=5` so that every row involved
/// is away from the edge closure.
pub fn cyclicity_identity_check(w: &BandUnitaryWindow) -> Result<IdentityDefects> {
    if w.flavor() != Flavor::UFull {
        return Err(domain(format!("expected a U-full window, got {}", w.flavor().name())));
    }
    let range = w.index_range();
    if range.lo > -6 || range.hi < 5 {
        return Err(domain(format!(
            "window {}..={} too small: needs -6..=5",
            range.lo, range.hi
        )));
    }
    let p = w.params().ok_or_else(|| domain("window has no band parameters"))?;
    let ctx = Ctx {
        w,
        r: p.r(),
        t: p.t(),
    };
    let (r, t) = (ctx.r, ctx.t);
    let rt = Complex64::new(r * t, 0.0);
    let r2 = Complex64::new(r * r, 0.0);
    let t2 = Complex64::new(t * t, 0.0);
    let th = |k| ctx.theta(k);

    let mut out = IdentityDefects::new();

    let u_m1 = ctx.u(-1)?;
    let u_0 = ctx.u(0)?;

    let want = ctx.combo(&[
        (cis(-th(-2)?) * rt, -2),
        (cis(-th(-1)?) * r2, -1),
        (cis(-th(0)?) * rt, 0),
        (-cis(-th(1)?) * t2, 1),
    ])?;
    out.insert("U|-1> expansion".into(), max_diff(&u_m1, &want));

    let want = ctx.combo(&[
        (-cis(-th(-2)?) * t2, -2),
        (-cis(-th(-1)?) * rt, -1),
        (cis(-th(0)?) * r2, 0),
        (-cis(-th(1)?) * rt, 1),
    ])?;
    out.insert("U|0> expansion".into(), max_diff(&u_0, &want));

    let ph = cis(th(0)?);
    let want = ctx.combo(&[(ph * rt, -1), (ph * r2, 0), (ph * rt, 1), (-ph * t2, 2)])?;
    out.insert("U^-1|0> expansion".into(), max_diff(&ctx.u_inv(0)?, &want));

    let ph = cis(th(-1)?);
    let want = ctx.combo(&[(-ph * t2, -3), (-ph * rt, -2), (ph * r2, -1), (-ph * rt, 0)])?;
    out.insert("U^-1|-1> expansion".into(), max_diff(&ctx.u_inv(-1)?, &want));

    // |1⟩ = (e^{iθ₁}/t)(e^{-iθ₀} r|0⟩ - (tU|-1⟩ + rU|0⟩))
    let inner = lin(Complex64::new(t, 0.0), &u_m1, Complex64::new(r, 0.0), &u_0);
    let e0 = ctx.e(0)?;
    let rhs = lin(cis(-th(0)?) * r, &e0, Complex64::new(-1.0, 0.0), &inner);
    let ph1 = cis(th(1)?);
    let rhs: Vec<Complex64> = rhs.iter().map(|x| x * ph1 / t).collect();
    out.insert("|1> recovery".into(), max_diff(&ctx.e(1)?, &rhs));

    // |-2⟩ = (e^{iθ₋₂}/t)(rU|-1⟩ - tU|0⟩ - e^{-iθ₋₁} r|-1⟩)
    let inner = lin(Complex64::new(r, 0.0), &u_m1, Complex64::new(-t, 0.0), &u_0);
    let em1 = ctx.e(-1)?;
    let rhs = lin(Complex64::new(1.0, 0.0), &inner, -cis(-th(-1)?) * r, &em1);
    let ph2 = cis(th(-2)?);
    let rhs: Vec<Complex64> = rhs.iter().map(|x| x * ph2 / t).collect();
    out.insert("|-2> recovery".into(), max_diff(&ctx.e(-2)?, &rhs));

    Ok(out)
}

/// `|1⟩ = (e^{iθ₁}/t)(U⁺|0⟩ + r e^{-iθ₀}|0⟩)` on a half-lattice window.
pub fn half_lattice_identity_check(w: &BandUnitaryWindow) -> Result<f64> {
    if w.flavor() != Flavor::UPlus {
        return Err(domain(format!("expected a U-plus window, got {}", w.flavor().name())));
    }
    if w.size() < 4 {
        return Err(domain("window too small"));
    }
    let p = w.params().ok_or_else(|| domain("window has no band parameters"))?;
    let ctx = Ctx {
        w,
        r: p.r(),
        t: p.t(),
    };
    let (th0, th1) = (ctx.theta(0)?, ctx.theta(1)?);
    let rhs = lin(
        Complex64::new(1.0, 0.0),
        &ctx.u(0)?,
        cis(-th0) * ctx.r,
        &ctx.e(0)?,
    );
    let rhs: Vec<Complex64> = rhs.iter().map(|x| x * cis(th1) / ctx.t).collect();
    Ok(max_diff(&ctx.e(1)?, &rhs))
}
