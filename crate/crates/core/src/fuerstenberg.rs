//! Irreducibility and non-compactness data for the group generated by the
//! transfer matrices: the real lift `τ`, the structure matrices `A_i`, `B_i`,
//! and the group elements `C, E, L, J, K` with `tr K > 2`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angle::circular_distance;
use crate::error::{domain, Error, Result};
use crate::mat2::Mat2;
use crate::params::BandParameters;
use crate::transfer::{transfer_matrix, transfer_theta_derivative, CocycleProduct};

pub type Mat4 = [[f64; 4]; 4];

/// `τ(m) ∈ M₄(ℝ)`: each entry `a` becomes the block `Re(a)·I + Im(a)·J`
/// with `J = [[0, 1], [-1, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealLift {
    pub matrix: Mat4,
}

impl RealLift {
    /// Max-norm distance of every 2×2 block from the span of `I` and `J`.
    pub fn structure_defect(&self) -> f64 {
        let m = &self.matrix;
        let mut d: f64 = 0.0;
        for bi in 0..2 {
            for bj in 0..2 {
                let (i, j) = (2 * bi, 2 * bj);
                d = d.max((m[i][j] - m[i + 1][j + 1]).abs());
                d = d.max((m[i][j + 1] + m[i + 1][j]).abs());
            }
        }
        d
    }
}

pub fn tau_lift(m: &Mat2) -> RealLift {
    let mut out = [[0.0; 4]; 4];
    for (bi, bj, z) in [(0, 0, m.a), (0, 1, m.b), (1, 0, m.c), (1, 1, m.d)] {
        let (i, j) = (2 * bi, 2 * bj);
        out[i][j] = z.re;
        out[i][j + 1] = z.im;
        out[i + 1][j] = -z.im;
        out[i + 1][j + 1] = z.re;
    }
    RealLift { matrix: out }
}

pub fn mat4_mul(x: &Mat4, y: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| x[i][k] * y[k][j]).sum();
        }
    }
    out
}

pub fn mat4_dist(x: &Mat4, y: &Mat4) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            d = d.max((x[i][j] - y[i][j]).abs());
        }
    }
    d
}

/// `Σ c_i M_i`.
pub fn mat4_combine(terms: &[(f64, &Mat4)]) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for (c, m) in terms {
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] += c * m[i][j];
            }
        }
    }
    out
}

pub fn mat4_identity() -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    out
}

/// `τ(T(θ,θ)) = A₀ + A₁ sin θ + A₂ cos θ` and
/// `∂_θ τ(T(θ,η))|_{η=θ} = B₀ + B₁ sin θ + B₂ cos θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureMatrices {
    pub a0: Mat4,
    pub a1: Mat4,
    pub a2: Mat4,
    pub b0: Mat4,
    pub b1: Mat4,
    pub b2: Mat4,
}

pub fn structure_matrices(p: &BandParameters) -> StructureMatrices {
    let (r, t) = (p.r(), p.t());
    let q = r / t;
    let q2 = r * r / (t * t);
    let it2 = 1.0 / (t * t);
    let a0 = [
        [0.0, 0.0, q, 0.0],
        [0.0, 0.0, 0.0, q],
        [q, 0.0, 2.0 * q2, 0.0],
        [0.0, q, 0.0, 2.0 * q2],
    ];
    let a1 = [
        [0.0, 1.0, 0.0, q],
        [-1.0, 0.0, -q, 0.0],
        [0.0, q, 0.0, -1.0],
        [-q, 0.0, 1.0, 0.0],
    ];
    let a2 = mat4_combine(&[(-1.0, &a0), (-1.0, &mat4_identity())]);
    let b0 = [
        [0.0, 0.0, 0.0, q],
        [0.0, 0.0, -q, 0.0],
        [0.0, 0.0, 0.0, q2],
        [0.0, 0.0, -q2, 0.0],
    ];
    let b1 = [
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, it2, 0.0],
        [0.0, 0.0, 0.0, it2],
    ];
    let b2 = [
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -it2],
        [0.0, 0.0, it2, 0.0],
    ];
    StructureMatrices { a0, a1, a2, b0, b1, b2 }
}

/// Finite-difference step for the derivative oracle.
pub const FD_STEP: f64 = 1e-6;

/// Defects of the two structure identities at `θ`:
/// `(eqdiag1, eqdiag2 by central difference, eqdiag2 analytic)`.
pub fn structure_defects(theta: f64, p: &BandParameters) -> (f64, f64, f64) {
    let s = structure_matrices(p);
    let (sn, cs) = theta.sin_cos();
    let lhs1 = tau_lift(&transfer_matrix(theta, theta, p).entries).matrix;
    let rhs1 = mat4_combine(&[(1.0, &s.a0), (sn, &s.a1), (cs, &s.a2)]);
    let rhs2 = mat4_combine(&[(1.0, &s.b0), (sn, &s.b1), (cs, &s.b2)]);
    let h = FD_STEP;
    let plus = tau_lift(&transfer_matrix(theta + h, theta, p).entries).matrix;
    let minus = tau_lift(&transfer_matrix(theta - h, theta, p).entries).matrix;
    let fd = mat4_combine(&[(0.5 / h, &plus), (-0.5 / h, &minus)]);
    let analytic = tau_lift(&transfer_theta_derivative(theta, theta, p)).matrix;
    (mat4_dist(&lhs1, &rhs1), mat4_dist(&fd, &rhs2), mat4_dist(&analytic, &rhs2))
}

/// Group elements of `G(θ, η)` and every identity defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuerstenbergCertificate {
    pub t: f64,
    pub r: f64,
    pub theta: f64,
    pub eta: f64,
    pub c: Mat2,
    pub e: Mat2,
    pub l: Mat2,
    pub j: Mat2,
    pub k: Mat2,
    pub structure: StructureMatrices,
    pub trace_k: f64,
    /// `2 + (r²/t⁴)|x z̄ - 1|⁴`.
    pub trace_k_formula: f64,
    pub max_eigenvalue_k: f64,
    pub identity_defects: BTreeMap<String, f64>,
    pub noncompact_witnessed: bool,
}

/// Closed forms of `C, E, L, J` with `x = e^{-iθ}`, `z = e^{-iη}`.
pub fn closed_forms(theta: f64, eta: f64, p: &BandParameters) -> [Mat2; 4] {
    let q = p.r() / p.t();
    let q2 = q * q;
    let x = Complex64::from_polar(1.0, -theta);
    let z = Complex64::from_polar(1.0, -eta);
    let xz = x * z.conj();
    let zx = x.conj() * z;
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let m = (xz - one).norm_sqr();
    let c = Mat2::new(xz, zero, (xz - one) * q, one);
    let e = Mat2::new(one, (one - zx) * q, zero, zx);
    let l = Mat2::new(xz, (xz - one) * q, (xz - one) * q, zx - q2 * m);
    let j = Mat2::new(xz - q2 * (zx - one).norm_sqr(), (one - zx) * q, (one - zx) * q, zx);
    [c, e, l, j]
}

fn inv(m: &Mat2) -> Result<Mat2> {
    m.inverse()
        .ok_or_else(|| Error::SingularParameter("singular group element".into()))
}

/// Tolerances on the certificate identities.
pub const PRODUCT_TOL: f64 = 1e-12;
pub const DET_K_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;

/// Builds `C, E, L, J` both ways, `K = J⁻¹L`, and records every defect.
///
/// Defects are relative to the scale of the compared quantities where the
/// quantities themselves grow like `(r/t)⁴`.
pub fn group_elements(theta: f64, eta: f64, p: &BandParameters) -> Result<FuerstenbergCertificate> {
    let (r, t) = (p.r(), p.t());
    let tt = transfer_matrix(theta, theta, p).entries;
    let te = transfer_matrix(theta, eta, p).entries;
    let et = transfer_matrix(eta, theta, p).entries;
    let c_prod = tt * inv(&te)?;
    let e_prod = inv(&et)? * tt;
    let [c, e, l, j] = closed_forms(theta, eta, p);
    let l_prod = c * e;
    let j_prod = e * c;
    let k = inv(&j)? * l;

    let mut d = BTreeMap::new();
    let rel = |a: &Mat2, b: &Mat2| a.dist(b) / b.max_abs().max(1.0);
    d.insert("C closed form vs T(θ,θ)T(θ,η)⁻¹".to_string(), rel(&c_prod, &c));
    d.insert("E closed form vs T(η,θ)⁻¹T(θ,θ)".to_string(), rel(&e_prod, &e));
    d.insert("L closed form vs CE".to_string(), rel(&l_prod, &l));
    d.insert("J closed form vs EC".to_string(), rel(&j_prod, &j));
    d.insert("det L = 1".to_string(), (l.det() - 1.0).norm());
    d.insert("det J = 1".to_string(), (j.det() - 1.0).norm());
    d.insert("J⁻¹ = L*".to_string(), rel(&inv(&j)?, &l.adjoint()));
    d.insert("K = K*".to_string(), rel(&k, &k.adjoint()));
    d.insert("det K = 1".to_string(), (k.det() - 1.0).norm());

    let x = Complex64::from_polar(1.0, -theta);
    let z = Complex64::from_polar(1.0, -eta);
    let m = (x * z.conj() - 1.0).norm_sqr();
    let trace_k_formula = 2.0 + r * r / (t * t * t * t) * m * m;
    let trace_k = k.trace().re;
    let q2 = r * r / (t * t);
    let middle = 1.0 + 2.0 * q2 * m + (x * z.conj() - q2 * m).norm_sqr();
    d.insert(
        "tr K = 2 + (r²/t⁴)|xz̄-1|⁴".to_string(),
        (trace_k - trace_k_formula).abs() / trace_k_formula,
    );
    d.insert("tr K formula, absolute".to_string(), (trace_k - trace_k_formula).abs());
    d.insert(
        "tr K intermediate form".to_string(),
        (middle - trace_k_formula).abs() / trace_k_formula,
    );
    d.insert("Im tr K = 0".to_string(), k.trace().im.abs() / trace_k_formula);

    let (d1, d2, d3) = structure_defects(theta, p);
    d.insert("eqdiag1".to_string(), d1);
    d.insert("eqdiag2 finite difference".to_string(), d2);
    d.insert("eqdiag2 analytic derivative".to_string(), d3);
    let s = structure_matrices(p);
    let a2 = mat4_combine(&[(-1.0, &s.a0), (-1.0, &mat4_identity())]);
    d.insert("A2 = -(A0 + I)".to_string(), mat4_dist(&s.a2, &a2));

    // K is Hermitian with det 1, so its eigenvalues are λ and 1/λ
    let half = trace_k / 2.0;
    let max_eigenvalue_k = half + (half * half - 1.0).max(0.0).sqrt();
    let positive = k.a.re > 0.0 && trace_k > 0.0;
    let separated = circular_distance(theta, eta) > 1e-6;
    let within = |name: &str, tol: f64| d[name] < tol;
    let sound = within("C closed form vs T(θ,θ)T(θ,η)⁻¹", PRODUCT_TOL)
        && within("E closed form vs T(η,θ)⁻¹T(θ,θ)", PRODUCT_TOL)
        && within("L closed form vs CE", PRODUCT_TOL)
        && within("J closed form vs EC", PRODUCT_TOL)
        && within("tr K = 2 + (r²/t⁴)|xz̄-1|⁴", TRACE_TOL);
    let noncompact_witnessed = separated && sound && positive && trace_k > 2.0 && max_eigenvalue_k > 1.0;

    Ok(FuerstenbergCertificate {
        t,
        r,
        theta,
        eta,
        c,
        e,
        l,
        j,
        k,
        structure: s,
        trace_k,
        trace_k_formula,
        max_eigenvalue_k,
        identity_defects: d,
        noncompact_witnessed,
    })
}

/// `‖Kⁿ‖_F^{1/n}` with `n = powers`; tends to the largest eigenvalue of `K`
/// from above.
pub fn noncompactness_probe(theta: f64, eta: f64, p: &BandParameters, powers: usize) -> Result<f64> {
    if circular_distance(theta, eta) == 0.0 {
        return Err(domain("θ = η gives K = I: no growth to witness"));
    }
    if powers == 0 {
        return Err(domain("powers must be positive"));
    }
    let [_, _, l, j] = closed_forms(theta, eta, p);
    let k = inv(&j)? * l;
    let mut acc = CocycleProduct::identity();
    for _ in 0..powers {
        acc.push(&k);
    }
    Ok((acc.log_norm() / powers as f64).exp())
}
