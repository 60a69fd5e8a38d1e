//! Transfer matrices `T(θ, η)`, the cocycle `Φ(k, ω)`, Monte-Carlo Lyapunov
//! exponents, generalized eigenvectors and exponential decay fits.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::disorder::{sample_phases_stream, DisorderRealization, IndexRange, PhaseDistribution};
use crate::error::{domain, Error, Result};
use crate::exec::{try_map_indexed, Exec};
use crate::fmt::sci17;
use crate::mat2::Mat2;
use crate::params::BandParameters;

#[inline]
fn cis(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, x)
}

/// `T(θ, η)` together with the (already α-shifted) phases it was built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub entries: Mat2,
    pub theta: f64,
    pub eta: f64,
}

impl TransferMatrix {
    /// The exact determinant `e^{i(θ-η)}`.
    pub fn expected_det(&self) -> Complex64 {
        cis(self.theta - self.eta)
    }
}

#[inline]
fn tren(theta: f64, eta: f64, r: f64, t: f64) -> Mat2 {
    let rt = r / t;
    let t2 = t * t;
    let e_eta = cis(-eta);
    let e_diff = cis(theta - eta);
    let one = Complex64::new(1.0, 0.0);
    Mat2 {
        a: -e_eta,
        b: (e_diff - e_eta) * rt,
        c: (one - e_eta) * rt,
        d: -cis(theta) / t2 + (e_diff + one - e_eta) * (r * r / t2),
    }
}

/// `T(θ, η)` for band parameters `p`.
pub fn transfer_matrix(theta: f64, eta: f64, p: &BandParameters) -> TransferMatrix {
    TransferMatrix {
        entries: tren(theta, eta, p.r(), p.t()),
        theta,
        eta,
    }
}

/// `T(θ, η)` from a raw `t ∈ [0, 1]`; `t = 0` is singular.
pub fn transfer_matrix_raw(theta: f64, eta: f64, t: f64) -> Result<TransferMatrix> {
    if t == 0.0 {
        return Err(Error::SingularParameter("transfer matrix needs t > 0 (entries carry 1/t)".into()));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(domain(format!("t = {t} outside [0, 1]")));
    }
    let r = (1.0 - t * t).sqrt();
    Ok(TransferMatrix {
        entries: tren(theta, eta, r, t),
        theta,
        eta,
    })
}

/// `∂T(θ, η)/∂θ`.
pub fn transfer_theta_derivative(theta: f64, eta: f64, p: &BandParameters) -> Mat2 {
    let (r, t) = (p.r(), p.t());
    let i = Complex64::i();
    let e_diff = cis(theta - eta);
    let zero = Complex64::new(0.0, 0.0);
    Mat2 {
        a: zero,
        b: i * e_diff * (r / t),
        c: zero,
        d: -i * cis(theta) / (t * t) + i * e_diff * (r * r / (t * t)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        })
    }
}

/// Running product renormalized to unit Frobenius norm after every factor.
///
/// The unrenormalized product equals `exp(log_norm_sum) * product`.
/// `log_abs_det_sum` accumulates `ln|det|` of the factors, since the
/// determinant of the nearly rank-one renormalized product is lost to
/// cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CocycleProduct {
    pub product: Mat2,
    pub log_norm_sum: f64,
    pub log_abs_det_sum: f64,
    pub steps: usize,
}

impl Default for CocycleProduct {
    fn default() -> Self {
        Self::identity()
    }
}

impl CocycleProduct {
    pub fn identity() -> Self {
        CocycleProduct {
            product: Mat2::identity(),
            log_norm_sum: 0.0,
            log_abs_det_sum: 0.0,
            steps: 0,
        }
    }

    /// Left-multiplies by `m`.
    #[inline]
    pub fn push(&mut self, m: &Mat2) {
        let p = *m * self.product;
        let n = p.frobenius();
        self.product = p.scale(Complex64::new(1.0 / n, 0.0));
        self.log_norm_sum += n.ln();
        self.log_abs_det_sum += m.det().norm().ln();
        self.steps += 1;
    }

    /// `ln ‖Φ‖` in the Frobenius norm.
    pub fn log_norm(&self) -> f64 {
        self.log_norm_sum + self.product.frobenius().ln()
    }

    /// `ln |det Φ|` of the unrenormalized product.
    pub fn log_abs_det(&self) -> f64 {
        self.log_abs_det_sum
    }

    /// The unrenormalized product; overflows for long products.
    pub fn unscaled(&self) -> Mat2 {
        self.product.scale(Complex64::new(self.log_norm_sum.exp(), 0.0))
    }
}

/// `T(j, ω)`, built from `θ_{2j}+α`, `θ_{2j+1}+α`.
pub fn step_matrix(
    omega: &DisorderRealization,
    alpha: f64,
    j: i64,
    p: &BandParameters,
) -> Result<Mat2> {
    let th = omega.phase(2 * j)?;
    let et = omega.phase(2 * j + 1)?;
    Ok(transfer_matrix(th + alpha, et + alpha, p).entries)
}

/// `Φ(k, ω)` for `Forward` and `Φ(-k, ω)` for `Backward`.
pub fn cocycle(
    omega: &DisorderRealization,
    alpha: f64,
    k: usize,
    direction: Direction,
    p: &BandParameters,
) -> Result<CocycleProduct> {
    let mut phi = CocycleProduct::identity();
    for s in 0..k as i64 {
        let m = match direction {
            Direction::Forward => step_matrix(omega, alpha, s, p)?,
            Direction::Backward => step_matrix(omega, alpha, -(s + 1), p)?
                .inverse()
                .ok_or_else(|| Error::SingularParameter("singular transfer matrix".into()))?,
        };
        phi.push(&m);
    }
    Ok(phi)
}

/// Run parameters shared by every Lyapunov estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    /// Steps entering the average, after burn-in.
    pub steps: usize,
    pub runs: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl LyapunovConfig {
    pub fn new(steps: usize, runs: usize, seed: u64) -> Self {
        LyapunovConfig {
            steps,
            runs,
            burn_in: 100,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(domain("steps must be positive"));
        }
        if self.runs < 2 {
            return Err(domain("at least two runs are needed for an error bar"));
        }
        Ok(())
    }
}

/// `γ̂(e^{iα})` per transfer step (two lattice sites).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub alpha: f64,
    pub gamma_hat: f64,
    pub std_error: f64,
    pub steps_per_run: usize,
    pub runs: usize,
    pub direction: Direction,
}

impl LyapunovEstimate {
    pub fn gamma_per_site(&self) -> f64 {
        self.gamma_hat / 2.0
    }

    fn from_runs(alpha: f64, per_run: &[f64], steps: usize, direction: Direction) -> Self {
        let n = per_run.len() as f64;
        let mean = per_run.iter().sum::<f64>() / n;
        let var = per_run.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (n - 1.0);
        LyapunovEstimate {
            alpha,
            gamma_hat: mean,
            std_error: (var / n).sqrt(),
            steps_per_run: steps,
            runs: per_run.len(),
            direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovPair {
    pub forward: LyapunovEstimate,
    pub backward: LyapunovEstimate,
}

impl LyapunovPair {
    /// `|γ̂_fwd - γ̂_bwd|` and the combined standard error.
    pub fn disagreement(&self) -> (f64, f64) {
        let d = (self.forward.gamma_hat - self.backward.gamma_hat).abs();
        let se = self.forward.std_error.hypot(self.backward.std_error);
        (d, se)
    }
}

/// Growth rate of one realization, in both directions, for every α.
fn run_growth(
    omega: &DisorderRealization,
    alphas: &[f64],
    p: &BandParameters,
    cfg: &LyapunovConfig,
) -> Result<Vec<(f64, f64)>> {
    let total = (cfg.burn_in + cfg.steps) as i64;
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut rates = [0.0; 2];
        for (slot, dir) in [Direction::Forward, Direction::Backward].into_iter().enumerate() {
            let mut phi = CocycleProduct::identity();
            let mut at_burn = 0.0;
            for s in 0..total {
                if s == cfg.burn_in as i64 {
                    at_burn = phi.log_norm();
                }
                let m = match dir {
                    Direction::Forward => step_matrix(omega, alpha, s, p)?,
                    Direction::Backward => step_matrix(omega, alpha, -(s + 1), p)?
                        .inverse()
                        .ok_or_else(|| Error::SingularParameter("singular transfer matrix".into()))?,
                };
                phi.push(&m);
            }
            rates[slot] = (phi.log_norm() - at_burn) / cfg.steps as f64;
        }
        out.push((rates[0], rates[1]));
    }
    Ok(out)
}

/// Estimates for every α of `alphas`. Run `i` draws its phases from stream
/// `i` of `seed`; forward uses sites `0, 1, …`, backward `-1, -2, …`.
pub fn lyapunov_sweep(
    dist: &PhaseDistribution,
    p: &BandParameters,
    alphas: &[f64],
    cfg: &LyapunovConfig,
    exec: Exec,
) -> Result<Vec<LyapunovPair>> {
    cfg.validate()?;
    dist.validate()?;
    let half = 2 * (cfg.burn_in + cfg.steps) as i64;
    let range = IndexRange::new(-half, half - 1)?;
    let per_run = try_map_indexed(exec, cfg.runs, |i| {
        let omega = sample_phases_stream(dist, cfg.seed, i as u64, range)?;
        run_growth(&omega, alphas, p, cfg)
    })?;
    Ok(alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let fwd: Vec<f64> = per_run.iter().map(|r| r[a].0).collect();
            let bwd: Vec<f64> = per_run.iter().map(|r| r[a].1).collect();
            LyapunovPair {
                forward: LyapunovEstimate::from_runs(alpha, &fwd, cfg.steps, Direction::Forward),
                backward: LyapunovEstimate::from_runs(alpha, &bwd, cfg.steps, Direction::Backward),
            }
        })
        .collect())
}

pub fn lyapunov_estimate(
    dist: &PhaseDistribution,
    p: &BandParameters,
    alpha: f64,
    cfg: &LyapunovConfig,
    exec: Exec,
) -> Result<LyapunovPair> {
    Ok(lyapunov_sweep(dist, p, &[alpha], cfg, exec)?.remove(0))
}

/// Lyapunov sweep as CSV, one row per forward estimate.
pub fn lyapunov_csv(
    pairs: &[LyapunovPair],
    p: &BandParameters,
    dist: &PhaseDistribution,
    seed: u64,
) -> String {
    let mut out = String::from("alpha,gamma_hat,stderr,gamma_per_site,steps,runs,t,nu_spec,seed\n");
    let spec = dist.to_string();
    let spec = if spec.contains(',') || spec.contains('"') {
        format!("\"{}\"", spec.replace('"', "\"\""))
    } else {
        spec
    };
    for pair in pairs {
        let e = &pair.forward;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            sci17(e.alpha),
            sci17(e.gamma_hat),
            sci17(e.std_error),
            sci17(e.gamma_per_site()),
            e.steps_per_run,
            e.runs,
            sci17(p.t()),
            spec,
            seed
        ));
    }
    out
}

/// How a generalized eigenvector was seeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EigenSeed {
    /// `(c_{-1}, c_0)` on the full lattice.
    Pair(Complex64, Complex64),
    /// `c_0` on the half lattice.
    Boundary(Complex64),
}

/// Coefficients `c_k` of `ψ = Σ c_k |k⟩` solving `Uψ = e^{iα}ψ` row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedEigenvector {
    pub offset: i64,
    pub coefficients: Vec<Complex64>,
    pub alpha: f64,
    pub seed: EigenSeed,
}

impl GeneralizedEigenvector {
    pub fn range(&self) -> IndexRange {
        IndexRange {
            lo: self.offset,
            hi: self.offset + self.coefficients.len() as i64 - 1,
        }
    }

    pub fn get(&self, k: i64) -> Option<Complex64> {
        let i = k.checked_sub(self.offset)?;
        usize::try_from(i).ok().and_then(|i| self.coefficients.get(i).copied())
    }

    /// Magnitudes `|c_k|` paired with their lattice index.
    pub fn magnitudes(&self) -> Vec<(i64, f64)> {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| (self.offset + i as i64, c.norm()))
            .collect()
    }
}

fn is_zero(c: Complex64) -> bool {
    c.re == 0.0 && c.im == 0.0
}

/// Full-lattice solution through the seed `(c_{-1}, c_0)`; `range` must
/// contain `-1` and `0`.
pub fn build_generalized_eigenvector_full(
    omega: &DisorderRealization,
    alpha: f64,
    seed: (Complex64, Complex64),
    range: IndexRange,
    p: &BandParameters,
) -> Result<GeneralizedEigenvector> {
    if is_zero(seed.0) && is_zero(seed.1) {
        return Err(domain("seed pair must be nonzero"));
    }
    if !(range.contains(-1) && range.contains(0)) {
        return Err(domain("range must contain the seed sites -1 and 0"));
    }
    // pair j holds (c_{2j-1}, c_{2j})
    let j_lo = range.lo.div_euclid(2);
    let j_hi = (range.hi + 1).div_euclid(2);
    let mut pairs = std::collections::VecDeque::new();
    pairs.push_back([seed.0, seed.1]);
    let mut v = [seed.0, seed.1];
    for j in 0..j_hi {
        v = step_matrix(omega, alpha, j, p)?.apply(v);
        pairs.push_back(v);
    }
    let mut v = [seed.0, seed.1];
    for j in (j_lo..0).rev() {
        let m = step_matrix(omega, alpha, j, p)?
            .inverse()
            .ok_or_else(|| Error::SingularParameter("singular transfer matrix".into()))?;
        v = m.apply(v);
        pairs.push_front(v);
    }
    let first = 2 * j_lo - 1;
    let flat: Vec<Complex64> = pairs.into_iter().flatten().collect();
    let skip = (range.lo - first) as usize;
    Ok(GeneralizedEigenvector {
        offset: range.lo,
        coefficients: flat[skip..skip + range.len()].to_vec(),
        alpha,
        seed: EigenSeed::Pair(seed.0, seed.1),
    })
}

/// Half-lattice solution on `0..len` from `c_0`, the boundary formula for
/// `(c_1, c_2)` and the recursion onward.
pub fn build_generalized_eigenvector_half(
    omega: &DisorderRealization,
    alpha: f64,
    c0: Complex64,
    len: usize,
    p: &BandParameters,
) -> Result<GeneralizedEigenvector> {
    if is_zero(c0) {
        return Err(domain("c0 must be nonzero"));
    }
    if len < 3 {
        return Err(domain("half-lattice vector needs at least 3 sites"));
    }
    let (r, t) = (p.r(), p.t());
    let th0 = omega.phase(0)?;
    let th1 = omega.phase(1)?;
    let a = cis(-(th1 + alpha)) + cis(-(th1 - th0)) * r;
    let c1 = c0 * a / t;
    let c2 = c0 * (a * r / (t * t) - (cis(alpha + th0) + r) / (t * t));
    let mut coefficients = Vec::with_capacity(len + 1);
    coefficients.extend([c0, c1, c2]);
    let mut v = [c1, c2];
    let mut j = 1;
    while coefficients.len() < len {
        v = step_matrix(omega, alpha, j, p)?.apply(v);
        coefficients.extend(v);
        j += 1;
    }
    coefficients.truncate(len);
    Ok(GeneralizedEigenvector {
        offset: 0,
        coefficients,
        alpha,
        seed: EigenSeed::Boundary(c0),
    })
}

/// Least-squares fit of `ln|c| ≈ a - rate·d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Decay rate per lattice site; negative for growth.
    pub rate: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub points: usize,
}

/// Magnitudes below this are treated as underflow and skipped.
pub const MAGNITUDE_FLOOR: f64 = 1e-300;
pub const MIN_FIT_POINTS: usize = 20;

/// Fits `(distance, magnitude)` samples.
pub fn decay_rate_fit(samples: &[(f64, f64)]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, m)| m.is_finite() && *m > MAGNITUDE_FLOOR)
        .map(|&(d, m)| (d, m.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(domain(format!(
            "decay fit needs {MIN_FIT_POINTS} usable points, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(domain("decay fit needs at least two distinct distances"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    Ok(DecayFit {
        rate: -slope,
        intercept,
        residual: (ss / n).sqrt(),
        points: pts.len(),
    })
}

/// Fits `|c_k|` against `|k - center|` for `k` in `window`.
pub fn fit_generalized_eigenvector(
    v: &GeneralizedEigenvector,
    center: i64,
    window: IndexRange,
) -> Result<DecayFit> {
    if !v.range().covers(&window) {
        return Err(domain("fit window exceeds the vector's range"));
    }
    let samples: Vec<(f64, f64)> = (window.lo..=window.hi)
        .map(|k| ((k - center).abs() as f64, v.get(k).map_or(0.0, |c| c.norm())))
        .collect();
    decay_rate_fit(&samples)
}

/// Relative cutoff below the peak for [`eigenvector_decay`].
pub const TAIL_CUTOFF: f64 = 1e-12;

/// Decay of a normalized eigenvector: both tails pooled against distance
/// from the peak, keeping sites with `|c_k| ≥ TAIL_CUTOFF · max|c|`.
pub fn eigenvector_decay(v: &[Complex64]) -> Result<DecayFit> {
    let (peak, max) = v
        .iter()
        .enumerate()
        .map(|(i, c)| (i, c.norm()))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if max == 0.0 {
        return Err(domain("zero vector"));
    }
    let samples: Vec<(f64, f64)> = v
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() >= TAIL_CUTOFF * max)
        .map(|(i, c)| ((i as f64 - peak as f64).abs(), c.norm()))
        .collect();
    decay_rate_fit(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{build_u_plus, build_u_window};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn tren_examples() {
        let p = BandParameters::new(0.5).unwrap();
        assert!(transfer_matrix(0.0, 0.0, &p).entries.dist(&-Mat2::identity()) < 1e-15);
        let (r, t) = (p.r(), p.t());
        let want = Mat2::real(1.0, 0.0, 2.0 * r / t, -1.0);
        assert!(transfer_matrix(0.0, PI, &p).entries.dist(&want) < 1e-14);
    }

    #[test]
    fn singular_t() {
        assert!(matches!(transfer_matrix_raw(0.1, 0.2, 0.0), Err(Error::SingularParameter(_))));
        assert!(transfer_matrix_raw(0.1, 0.2, 1.5).is_err());
        let m = transfer_matrix_raw(0.1, 0.2, 1.0).unwrap();
        assert!((m.entries.det() - m.expected_det()).norm() < 1e-14);
    }

    #[test]
    fn derivative_matches_difference() {
        let p = BandParameters::new(0.4).unwrap();
        let h = 1e-6;
        for k in 0..16 {
            let (th, et) = (0.4 * k as f64, 1.1 - 0.3 * k as f64);
            let fd = (transfer_matrix(th + h, et, &p).entries - transfer_matrix(th - h, et, &p).entries)
                .scale(c(0.5 / h, 0.0));
            assert!(fd.dist(&transfer_theta_derivative(th, et, &p)) < 1e-8);
        }
    }

    #[test]
    fn cocycle_examples() {
        let p = BandParameters::new(0.5).unwrap();
        let range = IndexRange::new(-40, 39).unwrap();
        let zero = DisorderRealization::constant(range, 0.0);
        let phi = cocycle(&zero, 0.0, 0, Direction::Forward, &p).unwrap();
        assert_eq!(phi.product, Mat2::identity());
        assert_eq!(phi.log_norm_sum, 0.0);
        let phi = cocycle(&zero, 0.0, 3, Direction::Forward, &p).unwrap();
        assert!(phi.unscaled().dist(&-Mat2::identity()) < 1e-14);

        let om = crate::disorder::sample_phases(&PhaseDistribution::uniform(), 5, range).unwrap();
        // the round trip loses about e^{2γk}·ε, so stay where that is small
        let weak = BandParameters::new(0.8).unwrap();
        for (om, p, k) in [(&zero, &p, 20), (&om, &weak, 10), (&om, &p, 3)] {
            let mut phi = cocycle(om, 0.3, k, Direction::Forward, p).unwrap();
            for j in (0..k as i64).rev() {
                phi.push(&step_matrix(om, 0.3, j, p).unwrap().inverse().unwrap());
            }
            assert!(phi.unscaled().dist(&Mat2::identity()) < 1e-10 * k as f64, "k={k}");
        }
        assert!(cocycle(&om, 0.0, 21, Direction::Forward, &p).is_err());
        assert!(cocycle(&om, 0.0, 20, Direction::Backward, &p).is_ok());
    }

    #[test]
    fn renormalization_is_exact_bookkeeping() {
        let p = BandParameters::new(0.5).unwrap();
        let range = IndexRange::new(0, 59).unwrap();
        let om = crate::disorder::sample_phases(&PhaseDistribution::uniform(), 9, range).unwrap();
        let mut plain = Mat2::identity();
        for j in 0..30 {
            plain = step_matrix(&om, 0.0, j, &p).unwrap() * plain;
        }
        let phi = cocycle(&om, 0.0, 30, Direction::Forward, &p).unwrap();
        assert!((phi.log_norm() - plain.frobenius().ln()).abs() < 1e-10);
        assert!(phi.log_abs_det().abs() < 1e-10);
    }

    #[test]
    fn det_survives_a_million_steps() {
        let p = BandParameters::new(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut phi = CocycleProduct::identity();
        for _ in 0..1_000_000 {
            let th: f64 = rng.random_range(0.0..2.0 * PI);
            let et: f64 = rng.random_range(0.0..2.0 * PI);
            phi.push(&transfer_matrix(th, et, &p).entries);
        }
        assert!(phi.log_abs_det().abs() < 1e-8, "{}", phi.log_abs_det());
    }

    #[test]
    fn deterministic_oracle() {
        let p = BandParameters::new(0.5).unwrap();
        let cfg = LyapunovConfig::new(4000, 2, 1);
        let inside = lyapunov_estimate(&PhaseDistribution::point(0.0), &p, 0.2, &cfg, Exec::Sequential).unwrap();
        assert!(inside.forward.gamma_hat < 0.02);
        let alpha = PI;
        let rho = transfer_matrix(alpha, alpha, &p).entries.spectral_radius().ln();
        let out = lyapunov_estimate(&PhaseDistribution::point(0.0), &p, alpha, &cfg, Exec::Sequential).unwrap();
        assert!((out.forward.gamma_hat - rho).abs() < 0.01);
        assert!((out.backward.gamma_hat - rho).abs() < 0.01);
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let p = BandParameters::new(0.5).unwrap();
        let cfg = LyapunovConfig::new(500, 6, 3);
        let d = PhaseDistribution::uniform();
        let a = lyapunov_sweep(&d, &p, &[0.0, 1.0], &cfg, Exec::Sequential).unwrap();
        let b = lyapunov_sweep(&d, &p, &[0.0, 1.0], &cfg, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn alpha_shift_structure() {
        let p = BandParameters::new(0.5).unwrap();
        let range = IndexRange::new(-200, 199).unwrap();
        let om = crate::disorder::sample_phases(&PhaseDistribution::uniform(), 2, range).unwrap();
        let a = cocycle(&om, 0.7, 100, Direction::Forward, &p).unwrap();
        let b = cocycle(&om.rotated(0.7), 0.0, 100, Direction::Forward, &p).unwrap();
        assert!((a.log_norm() - b.log_norm()).abs() < 1e-11);
    }

    #[test]
    fn csv_layout() {
        let p = BandParameters::new(0.5).unwrap();
        let d = PhaseDistribution::arc(0.0, 0.5).unwrap();
        let cfg = LyapunovConfig::new(200, 3, 7);
        let pairs = lyapunov_sweep(&d, &p, &[0.0], &cfg, Exec::Sequential).unwrap();
        let csv = lyapunov_csv(&pairs, &p, &d, 7);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "alpha,gamma_hat,stderr,gamma_per_site,steps,runs,t,nu_spec,seed"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("0.0000000000000000e0,"));
        assert!(row.ends_with(",200,3,5.0000000000000000e-1,\"arc:0,0.5\",7"), "{row}");
    }

    fn full_residual(t: f64, alpha: f64, seed: u64) -> f64 {
        let p = BandParameters::new(t).unwrap();
        let range = IndexRange::new(-20, 19).unwrap();
        let om = crate::disorder::sample_phases(&PhaseDistribution::uniform(), seed, range).unwrap();
        let v = build_generalized_eigenvector_full(&om, alpha, (c(0.3, -1.0), c(1.0, 0.2)), range, &p).unwrap();
        let w = build_u_window(&p, &om, range, 0.0).unwrap();
        let uv = w.apply(&v.coefficients);
        let mut worst: f64 = 0.0;
        for i in w.interior_rows() {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(v.coefficients.len());
            let scale = v.coefficients[lo..hi].iter().map(|x| x.norm()).fold(0.0, f64::max);
            worst = worst.max((uv[i] - cis(alpha) * v.coefficients[i]).norm() / scale);
        }
        worst
    }

    #[test]
    fn full_vector_solves_window_rows() {
        for (t, alpha, seed) in [(0.5, 0.0, 1), (0.5, 2.0, 2), (0.2, 1.0, 3), (0.8, 4.0, 4)] {
            let res = full_residual(t, alpha, seed);
            assert!(res < 1e-10, "t={t} alpha={alpha}: {res}");
        }
    }

    #[test]
    fn half_vector_boundary_and_rows() {
        let p = BandParameters::new(0.5).unwrap();
        let range = IndexRange::new(0, 39).unwrap();
        let zero = DisorderRealization::constant(range, 0.0);
        let v = build_generalized_eigenvector_half(&zero, 0.0, c(1.0, 0.0), 40, &p).unwrap();
        assert!((v.coefficients[1] - c((1.0 + p.r()) / p.t(), 0.0)).norm() < 1e-14);
        assert!((v.coefficients[2] + 1.0).norm() < 1e-14);

        let om = crate::disorder::sample_phases(&PhaseDistribution::uniform(), 8, range).unwrap();
        for alpha in [0.0, 1.3, 5.0] {
            let v = build_generalized_eigenvector_half(&om, alpha, c(0.5, 0.5), 40, &p).unwrap();
            let w = build_u_plus(&p, &om, 40, 0.0).unwrap();
            let uv = w.apply(&v.coefficients);
            for i in w.interior_rows() {
                let hi = (i + 3).min(40);
                let scale = v.coefficients[i.saturating_sub(2)..hi].iter().map(|x| x.norm()).fold(0.0, f64::max);
                let res = (uv[i] - cis(alpha) * v.coefficients[i]).norm() / scale;
                assert!(res < 1e-10, "row {i}: {res}");
            }
        }
        assert!(build_generalized_eigenvector_half(&om, 0.0, c(0.0, 0.0), 40, &p).is_err());
    }

    #[test]
    fn half_and_full_share_the_cocycle() {
        let p = BandParameters::new(0.3).unwrap();
        let range = IndexRange::new(0, 59).unwrap();
        let om = crate::disorder::sample_phases(&PhaseDistribution::uniform(), 4, range).unwrap();
        let v = build_generalized_eigenvector_half(&om, 0.4, c(1.0, 0.0), 60, &p).unwrap();
        for k in 1..29 {
            let m = step_matrix(&om, 0.4, k, &p).unwrap();
            let next = m.apply([v.coefficients[2 * k as usize - 1], v.coefficients[2 * k as usize]]);
            assert_eq!(next[0], v.coefficients[2 * k as usize + 1]);
            assert_eq!(next[1], v.coefficients[2 * k as usize + 2]);
        }
    }

    #[test]
    fn free_band_vector_stays_bounded() {
        let p = BandParameters::new(0.5).unwrap();
        let range = IndexRange::new(-1, 1998).unwrap();
        let zero = DisorderRealization::constant(IndexRange::new(-2, 1999).unwrap(), 0.0);
        let v = build_generalized_eigenvector_full(&zero, 0.1, (c(1.0, 0.0), c(0.0, 1.0)), range, &p).unwrap();
        let max = v.coefficients.iter().map(|x| x.norm()).fold(0.0, f64::max);
        assert!(max < 100.0, "{max}");
    }

    #[test]
    fn zero_seed_refused() {
        let p = BandParameters::new(0.5).unwrap();
        let range = IndexRange::new(-4, 3).unwrap();
        let zero = DisorderRealization::constant(range, 0.0);
        assert!(build_generalized_eigenvector_full(&zero, 0.0, (c(0.0, 0.0), c(0.0, 0.0)), range, &p).is_err());
        let bad = IndexRange::new(1, 5).unwrap();
        assert!(build_generalized_eigenvector_full(&zero, 0.0, (c(1.0, 0.0), c(0.0, 0.0)), bad, &p).is_err());
    }

    #[test]
    fn exact_and_noisy_fits() {
        let exact: Vec<(f64, f64)> = (-40i32..=40).map(|k| ((k.abs()) as f64, (-0.3 * k.abs() as f64).exp())).collect();
        let f = decay_rate_fit(&exact).unwrap();
        assert!((f.rate - 0.3).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noisy: Vec<(f64, f64)> = (-60i32..=60)
            .map(|k| {
                let n: f64 = rng.random_range(-1.0..1.0);
                (k.abs() as f64, (-0.3 * k.abs() as f64).exp() * (1.0 + 0.1 * n))
            })
            .collect();
        assert!((decay_rate_fit(&noisy).unwrap().rate - 0.3).abs() < 0.02);

        let few: Vec<(f64, f64)> = (0..19).map(|k| (k as f64, 1.0)).collect();
        assert!(decay_rate_fit(&few).is_err());
        let floored: Vec<(f64, f64)> = (0..30).map(|k| (k as f64, if k < 10 { 1.0 } else { 0.0 })).collect();
        assert!(decay_rate_fit(&floored).is_err());
    }

    #[test]
    fn eigenvector_fit_on_synthetic_profile() {
        let v: Vec<Complex64> = (0..200).map(|i| cis(i as f64) * (-0.25 * (i as f64 - 80.0).abs()).exp()).collect();
        let f = eigenvector_decay(&v).unwrap();
        assert!((f.rate - 0.25).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn det_is_phase_difference(th in 0.0..2.0 * PI, et in 0.0..2.0 * PI, t in 0.01f64..0.99) {
            let p = BandParameters::new(t).unwrap();
            let m = transfer_matrix(th, et, &p);
            // entries scale like 1/t², so does the rounding in det
            let tol = 1e-14 * (0.25 / (t * t)).powi(2).max(1.0);
            prop_assert!((m.entries.det() - m.expected_det()).norm() < tol);
        }

        #[test]
        fn linear_in_seed(lr in -2.0f64..2.0, li in -2.0f64..2.0, seed in 0u64..50) {
            prop_assume!(lr.abs() + li.abs() > 1e-3);
            let p = BandParameters::new(0.5).unwrap();
            let range = IndexRange::new(-10, 9).unwrap();
            let om = crate::disorder::sample_phases(&PhaseDistribution::uniform(), seed, range).unwrap();
            let lam = c(lr, li);
            let a = build_generalized_eigenvector_full(&om, 0.3, (c(1.0, 0.0), c(0.5, 0.0)), range, &p).unwrap();
            let b = build_generalized_eigenvector_full(&om, 0.3, (lam, lam * 0.5), range, &p).unwrap();
            for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
                prop_assert!((x * lam - y).norm() <= 1e-12 * (1.0 + y.norm()));
            }
            let h1 = build_generalized_eigenvector_half(&om, 0.3, c(1.0, 0.0), 10, &p).unwrap();
            let h2 = build_generalized_eigenvector_half(&om, 0.3, lam, 10, &p).unwrap();
            for (x, y) in h1.coefficients.iter().zip(&h2.coefficients) {
                prop_assert!((x * lam - y).norm() <= 1e-12 * (1.0 + y.norm()));
            }
        }
    }
}
