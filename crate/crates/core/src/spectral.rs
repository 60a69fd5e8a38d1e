//! Dense eigenanalysis of finite windows: arc sets for `Σ(t)` and `Σ`,
//! unitary eigendecompositions, site spectral measures, θ₀-averaging,
//! Krylov cyclicity ranks and localization reports.

use std::f64::consts::{PI, TAU};

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angle::{canonical, circular_distance};
use crate::disorder::{sample_phases_stream, Arc, DisorderRealization, IndexRange, PhaseDistribution};
use crate::error::{domain, Error, Result};
use crate::exec::{try_map_indexed, Exec};
use crate::fmt::sci17;
use crate::operator::{build_u_window, BandUnitaryWindow};
use crate::params::BandParameters;
use crate::transfer::{eigenvector_decay, lyapunov_sweep, LyapunovConfig};

/// Finite union of closed arcs, kept disjoint and sorted by start angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumArcSet {
    pub arcs: Vec<Arc>,
}

impl SpectrumArcSet {
    /// Canonicalizes: arcs of halfwidth ≥ π give the full circle,
    /// overlapping or touching arcs merge.
    pub fn new(arcs: impl IntoIterator<Item = Arc>) -> Self {
        let mut iv: Vec<(f64, f64)> = Vec::new();
        for a in arcs {
            if a.halfwidth >= PI {
                return Self::full();
            }
            let lo = canonical(a.center - a.halfwidth);
            let hi = lo + 2.0 * a.halfwidth;
            if hi > TAU {
                iv.push((lo, TAU));
                iv.push((0.0, hi - TAU));
            } else {
                iv.push((lo, hi));
            }
        }
        iv.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (lo, hi) in iv {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        if merged.len() > 1 && merged[0].0 == 0.0 && merged.last().unwrap().1 >= TAU {
            let first = merged.remove(0);
            let last = merged.last_mut().unwrap();
            last.1 = TAU + first.1;
        }
        if merged.len() == 1 && merged[0].1 - merged[0].0 >= TAU {
            return Self::full();
        }
        let arcs = merged
            .into_iter()
            .map(|(lo, hi)| Arc {
                center: canonical((lo + hi) / 2.0),
                halfwidth: (hi - lo) / 2.0,
            })
            .collect();
        SpectrumArcSet { arcs }
    }

    pub fn full() -> Self {
        SpectrumArcSet { arcs: vec![Arc::full()] }
    }

    pub fn is_full(&self) -> bool {
        self.arcs.len() == 1 && self.arcs[0].halfwidth >= PI
    }

    /// Circular distance from `theta` to the set; 0 inside.
    pub fn distance(&self, theta: f64) -> f64 {
        self.arcs
            .iter()
            .map(|a| a.distance(theta))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, theta: f64, tol: f64) -> bool {
        self.distance(theta) <= tol
    }

    /// Every arc widened by `eps`.
    pub fn fattened(&self, eps: f64) -> Self {
        Self::new(self.arcs.iter().map(|a| Arc {
            center: a.center,
            halfwidth: a.halfwidth + eps,
        }))
    }

    /// The set multiplied by `e^{i shift}`.
    pub fn rotated(&self, shift: f64) -> Self {
        Self::new(self.arcs.iter().map(|a| Arc {
            center: a.center + shift,
            halfwidth: a.halfwidth,
        }))
    }

    /// Total arc length.
    pub fn measure(&self) -> f64 {
        self.arcs.iter().map(|a| 2.0 * a.halfwidth.min(PI)).sum()
    }
}

/// Halfwidth `arccos(1 - 2t²)` of `σ(S(t))`, an arc centered at phase 0.
pub fn free_halfwidth(t: f64) -> f64 {
    (1.0 - 2.0 * t * t).clamp(-1.0, 1.0).acos()
}

/// `σ(S(t)) = Σ(t)` for `t ∈ [0, 1]`.
pub fn spectrum_of_s(t: f64) -> Result<SpectrumArcSet> {
    if !(0.0..=1.0).contains(&t) {
        return Err(domain(format!("t = {t} outside [0, 1]")));
    }
    Ok(SpectrumArcSet::new([Arc {
        center: 0.0,
        halfwidth: free_halfwidth(t),
    }]))
}

/// `Σ = exp(-i supp ν) Σ(t)` as a Minkowski sum of arcs: a constant phase
/// `θ` turns `U_ω` into `e^{-iθ} S`.
pub fn almost_sure_spectrum(nu: &PhaseDistribution, t: f64) -> Result<SpectrumArcSet> {
    nu.validate()?;
    let h = spectrum_of_s(t)?.arcs[0].halfwidth;
    let s = nu.support();
    let arcs = s
        .arcs
        .iter()
        .map(|a| Arc {
            center: -a.center,
            halfwidth: a.halfwidth + h,
        })
        .chain(s.points.iter().map(|&p| Arc {
            center: -p,
            halfwidth: h,
        }));
    Ok(SpectrumArcSet::new(arcs))
}

/// Acceptance bounds on eigendecompositions.
pub const EIG_RESIDUAL_TOL: f64 = 1e-9;
pub const EIG_ORTHO_TOL: f64 = 1e-9;
pub const EIG_INPUT_TOL: f64 = 1e-10;

/// Eigenphases sorted in `[0, 2π)` with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct UnitaryEigenDecomposition {
    pub eigenphases: Vec<f64>,
    pub eigenvectors: Mat<Complex64>,
    /// `max_j ‖U v_j - e^{iλ_j} v_j‖`.
    pub residual: f64,
    /// `max |V*V - I|`.
    pub orthonormality_defect: f64,
    /// Lattice index of row 0.
    pub offset: i64,
}

impl UnitaryEigenDecomposition {
    pub fn size(&self) -> usize {
        self.eigenphases.len()
    }

    pub fn vector(&self, j: usize) -> Vec<Complex64> {
        self.eigenvectors.col(j).iter().copied().collect()
    }

    pub fn local(&self, lattice: i64) -> Option<usize> {
        let i = lattice.checked_sub(self.offset)?;
        usize::try_from(i).ok().filter(|&i| i < self.size())
    }
}

fn dense_unitarity_defect(m: &Mat<Complex64>) -> f64 {
    let g = m * m.adjoint();
    let mut d: f64 = 0.0;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let want = if i == j { 1.0 } else { 0.0 };
            d = d.max((g[(i, j)] - want).norm());
        }
    }
    d
}

fn decompose(m: &Mat<Complex64>, offset: i64) -> Result<UnitaryEigenDecomposition> {
    let n = m.nrows();
    let evd = m
        .eigen()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let vals: Vec<Complex64> = evd.S().column_vector().iter().copied().collect();
    let mut order: Vec<usize> = (0..n).collect();
    let keys: Vec<f64> = vals.iter().map(|z| canonical(z.arg())).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    let u = evd.U();
    let sorted = Mat::<Complex64>::from_fn(n, n, |i, j| u[(i, order[j])]);
    // Gram-Schmidt in phase order mixes only columns that are not already
    // orthogonal, i.e. (near-)degenerate clusters
    let q = sorted.qr().compute_thin_Q();
    let uq = m * &q;
    let mut eigenphases = Vec::with_capacity(n);
    let mut residual: f64 = 0.0;
    for j in 0..n {
        let rq: Complex64 = (0..n).map(|i| q[(i, j)].conj() * uq[(i, j)]).sum();
        let lam = canonical(rq.arg());
        let e = Complex64::from_polar(1.0, lam);
        let res = (0..n)
            .map(|i| (uq[(i, j)] - e * q[(i, j)]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        residual = residual.max(res);
        eigenphases.push(lam);
    }
    let g = q.adjoint() * &q;
    let mut ortho: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            ortho = ortho.max((g[(i, j)] - want).norm());
        }
    }
    if !(residual < EIG_RESIDUAL_TOL) {
        return Err(Error::NumericalCheck {
            what: "eigen-residual".into(),
            defect: residual,
            threshold: EIG_RESIDUAL_TOL,
        });
    }
    if !(ortho < EIG_ORTHO_TOL) {
        return Err(Error::NumericalCheck {
            what: "eigenvector orthonormality".into(),
            defect: ortho,
            threshold: EIG_ORTHO_TOL,
        });
    }
    // Rayleigh phases can reorder within rounding; keep the output sorted
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eigenphases[a].total_cmp(&eigenphases[b]).then(a.cmp(&b)));
    let eigenvectors = Mat::<Complex64>::from_fn(n, n, |i, j| q[(i, idx[j])]);
    let eigenphases = idx.iter().map(|&j| eigenphases[j]).collect();
    Ok(UnitaryEigenDecomposition {
        eigenphases,
        eigenvectors,
        residual,
        orthonormality_defect: ortho,
        offset,
    })
}

/// Full eigendecomposition of a window.
pub fn eig_unitary(w: &BandUnitaryWindow) -> Result<UnitaryEigenDecomposition> {
    let defect = w.unitarity_defect();
    if !(defect < EIG_INPUT_TOL) {
        return Err(Error::NumericalCheck {
            what: "input unitarity".into(),
            defect,
            threshold: EIG_INPUT_TOL,
        });
    }
    decompose(w.matrix(), w.offset())
}

/// Same for a bare dense matrix; refuses it with the measured defect when
/// it is not unitary.
pub fn eig_unitary_dense(m: &Mat<Complex64>, offset: i64) -> Result<UnitaryEigenDecomposition> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(domain("matrix must be square and nonempty"));
    }
    let defect = dense_unitarity_defect(m);
    if !(defect < EIG_INPUT_TOL) {
        return Err(Error::NumericalCheck {
            what: "input unitarity".into(),
            defect,
            threshold: EIG_INPUT_TOL,
        });
    }
    decompose(m, offset)
}

/// Atoms `(λ_j, |⟨site|v_j⟩|²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    pub site: i64,
    pub atoms: Vec<(f64, f64)>,
}

impl SpectralMeasure {
    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// `Σ_j w_j e^{inλ_j}`.
    pub fn moment(&self, n: i32) -> Complex64 {
        self.atoms
            .iter()
            .map(|&(l, w)| Complex64::from_polar(w, n as f64 * l))
            .sum()
    }

    /// Sum with another measure on the same phases (e.g. `μ⁻¹ + μ⁰`).
    pub fn combined(&self, other: &SpectralMeasure) -> Result<SpectralMeasure> {
        if self.atoms.len() != other.atoms.len() {
            return Err(domain("measures come from different decompositions"));
        }
        Ok(SpectralMeasure {
            site: self.site,
            atoms: self
                .atoms
                .iter()
                .zip(&other.atoms)
                .map(|(a, b)| (a.0, a.1 + b.1))
                .collect(),
        })
    }
}

pub fn spectral_measure(dec: &UnitaryEigenDecomposition, site: i64) -> Result<SpectralMeasure> {
    let i = dec.local(site).ok_or(Error::OutOfRange {
        index: site,
        lo: dec.offset,
        hi: dec.offset + dec.size() as i64 - 1,
    })?;
    let atoms = dec
        .eigenphases
        .iter()
        .enumerate()
        .map(|(j, &l)| (l, dec.eigenvectors[(i, j)].norm_sqr()))
        .collect();
    Ok(SpectralMeasure { site, atoms })
}

/// Highest moment returned by the averaging experiment.
pub const AVERAGED_MOMENTS: usize = 10;

/// `m̄_n` for `0 ≤ n ≤ 10`, averaging the site-0 measure over `grid`
/// equally spaced values of `θ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingResult {
    pub grid: usize,
    pub moments: Vec<Complex64>,
}

impl AveragingResult {
    /// `max_{1≤n≤n_max} |m̄_n|`.
    pub fn max_abs(&self, n_max: usize) -> f64 {
        self.moments[1..=n_max].iter().map(|m| m.norm()).fold(0.0, f64::max)
    }
}

/// The phase at site 0 of `omega` is ignored and replaced by the grid.
pub fn spectral_averaging_experiment(
    omega: &DisorderRealization,
    grid: usize,
    range: IndexRange,
    p: &BandParameters,
    exec: Exec,
) -> Result<AveragingResult> {
    if grid < 64 {
        return Err(domain(format!("θ₀ grid of {grid} points is below the minimum 64")));
    }
    if !range.contains(0) {
        return Err(domain("window must contain site 0"));
    }
    let per = try_map_indexed(exec, grid, |g| {
        let th0 = TAU * g as f64 / grid as f64;
        let om = omega.with_phase(0, th0)?;
        let w = build_u_window(p, &om, range, 0.0)?;
        let mu = spectral_measure(&eig_unitary(&w)?, 0)?;
        Ok::<_, Error>((0..=AVERAGED_MOMENTS).map(|n| mu.moment(n as i32)).collect::<Vec<_>>())
    })?;
    let moments = (0..=AVERAGED_MOMENTS)
        .map(|n| per.iter().map(|m| m[n]).sum::<Complex64>() / grid as f64)
        .collect();
    Ok(AveragingResult { grid, moments })
}

/// Numerical rank of a Krylov matrix and its singular values, largest first.
///
/// `arnoldi_rank` counts directions found by orthonormalizing `U q` against
/// the basis built so far; `arnoldi_min_ratio` is the smallest accepted
/// `‖new direction‖ / ‖U q‖`. Unlike the monomial matrix this does not
/// degrade with the overlap of far-away localized eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrylovReport {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub powers: Vec<i64>,
    pub arnoldi_rank: usize,
    pub arnoldi_min_ratio: f64,
}

pub const RANK_TOL: f64 = 1e-8;

/// Columns `Uⁿ|s⟩` for every site `s` and `span_order` consecutive powers
/// centered on 0.
pub fn krylov_cyclicity(w: &BandUnitaryWindow, sites: &[i64], span_order: usize) -> Result<KrylovReport> {
    if sites.is_empty() || span_order == 0 {
        return Err(domain("need at least one site and one power"));
    }
    let lo = -((span_order / 2) as i64);
    let powers: Vec<i64> = (lo..lo + span_order as i64).collect();
    let n = w.size();
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(sites.len() * span_order);
    for &s in sites {
        let e = w.basis(s)?;
        let mut fwd = vec![e.clone()];
        for _ in 0..*powers.last().unwrap() {
            let next = w.apply(fwd.last().unwrap());
            fwd.push(next);
        }
        let mut bwd = vec![e];
        for _ in 0..(-lo) {
            let next = w.apply_adjoint(bwd.last().unwrap());
            bwd.push(next);
        }
        for &k in &powers {
            cols.push(if k >= 0 { fwd[k as usize].clone() } else { bwd[(-k) as usize].clone() });
        }
    }
    let k = Mat::<Complex64>::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let mut sv = k
        .singular_values()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * top).count();
    let (arnoldi_rank, arnoldi_min_ratio) = arnoldi_rank(w, sites, span_order)?;
    Ok(KrylovReport {
        rank,
        singular_values: sv,
        powers,
        arnoldi_rank,
        arnoldi_min_ratio,
    })
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Block Arnoldi on `{|s⟩}` with two passes of Gram-Schmidt per vector.
fn arnoldi_rank(w: &BandUnitaryWindow, sites: &[i64], span_order: usize) -> Result<(usize, f64)> {
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut heads: Vec<Option<Vec<Complex64>>> = sites.iter().map(|_| None).collect();
    let mut alive = vec![true; sites.len()];
    let mut min_ratio = f64::INFINITY;
    for step in 0..span_order {
        for (k, &s) in sites.iter().enumerate() {
            if !alive[k] || basis.len() == w.size() {
                continue;
            }
            let mut v = match (step, &heads[k]) {
                (0, _) | (_, None) => w.basis(s)?,
                (_, Some(q)) => w.apply(q),
            };
            let before = norm(&v);
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &v);
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let after = norm(&v);
            if after > RANK_TOL * before {
                min_ratio = min_ratio.min(after / before);
                v.iter_mut().for_each(|x| *x /= after);
                heads[k] = Some(v.clone());
                basis.push(v);
            } else {
                alive[k] = false;
            }
        }
    }
    Ok((basis.len(), min_ratio))
}

/// Options for [`localization_report`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationOptions {
    /// Fattening of `Σ` for the containment fraction.
    pub epsilon: f64,
    /// Sites per edge whose mass decides boundary insulation.
    pub edge_sites: usize,
    pub edge_mass: f64,
    pub histogram_bins: usize,
    /// Lyapunov reference: steps, runs and α-grid points.
    pub lyapunov_steps: usize,
    pub lyapunov_runs: usize,
    pub lyapunov_grid: usize,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        LocalizationOptions {
            epsilon: 0.05,
            edge_sites: 10,
            edge_mass: 1e-6,
            histogram_bins: 64,
            lyapunov_steps: 20_000,
            lyapunov_runs: 10,
            lyapunov_grid: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvectorStats {
    pub phase: f64,
    pub participation_ratio: f64,
    pub edge_mass: f64,
    pub insulated: bool,
    /// Per-site decay rate; `None` when too few sites clear the fit cutoff.
    pub decay_rate: Option<f64>,
    /// Circular distance from the phase to `Σ`.
    pub distance_to_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationReport {
    pub stream: u64,
    pub residual: f64,
    pub eigenvectors: Vec<EigenvectorStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSummary {
    pub eigenvectors: usize,
    pub insulated: usize,
    /// Fraction of insulated eigenphases inside `Σ` fattened by `epsilon`.
    pub containment_fraction: f64,
    /// Smallest fattening that puts 99% of insulated eigenphases inside `Σ`.
    pub required_epsilon_99: f64,
    pub median_participation_ratio: f64,
    pub mean_participation_ratio: f64,
    pub median_participation_ratio_insulated: Option<f64>,
    pub median_decay_rate: Option<f64>,
    /// Median over fitted eigenvectors of `γ̂(λ_j)/2`.
    pub median_gamma_half: Option<f64>,
    /// Median of `decay_rate / (γ̂(λ_j)/2)`.
    pub median_decay_ratio: Option<f64>,
    pub fitted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub nu: String,
    pub t: f64,
    pub window: usize,
    pub offset: i64,
    pub seed: u64,
    pub options: LocalizationOptions,
    pub sigma: SpectrumArcSet,
    /// `(α, γ̂)` on the reference grid, per transfer step.
    pub lyapunov_reference: Vec<(f64, f64)>,
    pub realizations: Vec<RealizationReport>,
    pub summary: LocalizationSummary,
    /// Tolerance bands and the right-edge closure are choices of this
    /// implementation, not derived quantities.
    pub calibration_note: String,
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Periodic linear interpolation on an equally spaced grid over `[0, 2π)`.
fn interp_periodic(grid: &[(f64, f64)], x: f64) -> f64 {
    let n = grid.len();
    let h = TAU / n as f64;
    let u = canonical(x) / h;
    let i = (u.floor() as usize) % n;
    let f = u - u.floor();
    grid[i].1 * (1.0 - f) + grid[(i + 1) % n].1 * f
}

pub fn participation_ratio(v: &[Complex64]) -> f64 {
    let n2: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    let n4: f64 = v.iter().map(|c| c.norm_sqr() * c.norm_sqr()).sum();
    n2 * n2 / n4
}

/// Lower window index: `-size/2` rounded down to even.
pub fn centered_offset(size: usize) -> i64 {
    let h = -((size / 2) as i64);
    h - h.rem_euclid(2)
}

/// Eigenvector statistics of one realization.
pub fn analyze_realization(
    w: &BandUnitaryWindow,
    sigma: &SpectrumArcSet,
    opts: &LocalizationOptions,
    stream: u64,
) -> Result<RealizationReport> {
    let dec = eig_unitary(w)?;
    let n = dec.size();
    let edge = opts.edge_sites.min(n / 2);
    let eigenvectors = (0..n)
        .map(|j| {
            let v = dec.vector(j);
            let edge_mass: f64 = v[..edge].iter().chain(&v[n - edge..]).map(|c| c.norm_sqr()).sum();
            let phase = dec.eigenphases[j];
            EigenvectorStats {
                phase,
                participation_ratio: participation_ratio(&v),
                edge_mass,
                insulated: edge_mass <= opts.edge_mass,
                decay_rate: eigenvector_decay(&v).ok().map(|f| f.rate),
                distance_to_sigma: sigma.distance(phase),
            }
        })
        .collect();
    Ok(RealizationReport {
        stream,
        residual: dec.residual,
        eigenvectors,
    })
}

/// Localization evidence over `realizations` independent windows of
/// `window` sites centered on the origin; realization `i` uses stream `i`.
pub fn localization_report(
    nu: &PhaseDistribution,
    p: &BandParameters,
    window: usize,
    realizations: usize,
    seed: u64,
    opts: &LocalizationOptions,
    exec: Exec,
) -> Result<LocalizationReport> {
    if realizations == 0 {
        return Err(domain("need at least one realization"));
    }
    let sigma = almost_sure_spectrum(nu, p.t())?;
    let offset = centered_offset(window);
    let range = IndexRange::with_len(offset, window)?;
    let reps = try_map_indexed(exec, realizations, |i| {
        let om = sample_phases_stream(nu, seed, i as u64, range)?;
        let w = build_u_window(p, &om, range, 0.0)?;
        analyze_realization(&w, &sigma, opts, i as u64)
    })?;

    let alphas: Vec<f64> = (0..opts.lyapunov_grid)
        .map(|k| TAU * k as f64 / opts.lyapunov_grid as f64)
        .collect();
    let cfg = LyapunovConfig::new(opts.lyapunov_steps, opts.lyapunov_runs, seed);
    let lyap: Vec<(f64, f64)> = lyapunov_sweep(nu, p, &alphas, &cfg, exec)?
        .into_iter()
        .map(|pair| (pair.forward.alpha, pair.forward.gamma_hat))
        .collect();

    let summary = summarize(&reps, opts, &lyap);
    Ok(LocalizationReport {
        nu: nu.to_string(),
        t: p.t(),
        window,
        offset,
        seed,
        options: opts.clone(),
        sigma,
        lyapunov_reference: lyap,
        realizations: reps,
        summary,
        calibration_note: "edge filter, fattening and decay bands are calibration choices; \
                           the right window edge uses a mirror closure with no infinite-volume counterpart"
            .into(),
    })
}

fn summarize(reps: &[RealizationReport], opts: &LocalizationOptions, lyap: &[(f64, f64)]) -> LocalizationSummary {
    let all: Vec<&EigenvectorStats> = reps.iter().flat_map(|r| &r.eigenvectors).collect();
    let ins: Vec<&EigenvectorStats> = all.iter().copied().filter(|e| e.insulated).collect();
    let inside = ins.iter().filter(|e| e.distance_to_sigma <= opts.epsilon).count();
    let mut dists: Vec<f64> = ins.iter().map(|e| e.distance_to_sigma).collect();
    dists.sort_by(f64::total_cmp);
    let required = if dists.is_empty() {
        0.0
    } else {
        let k = ((0.99 * dists.len() as f64).ceil() as usize).clamp(1, dists.len());
        dists[k - 1]
    };
    let mut pr: Vec<f64> = all.iter().map(|e| e.participation_ratio).collect();
    let mean_pr = pr.iter().sum::<f64>() / pr.len().max(1) as f64;
    let mut pr_ins: Vec<f64> = ins.iter().map(|e| e.participation_ratio).collect();
    let fitted: Vec<(f64, f64)> = ins
        .iter()
        .filter_map(|e| e.decay_rate.map(|d| (d, interp_periodic(lyap, e.phase) / 2.0)))
        .collect();
    let mut rates: Vec<f64> = fitted.iter().map(|f| f.0).collect();
    let mut halves: Vec<f64> = fitted.iter().map(|f| f.1).collect();
    let mut ratios: Vec<f64> = fitted.iter().map(|f| f.0 / f.1).collect();
    LocalizationSummary {
        eigenvectors: all.len(),
        insulated: ins.len(),
        containment_fraction: if ins.is_empty() { 1.0 } else { inside as f64 / ins.len() as f64 },
        required_epsilon_99: required,
        median_participation_ratio: median(&mut pr).unwrap_or(0.0),
        mean_participation_ratio: mean_pr,
        median_participation_ratio_insulated: median(&mut pr_ins),
        median_decay_rate: median(&mut rates),
        median_gamma_half: median(&mut halves),
        median_decay_ratio: median(&mut ratios),
        fitted: fitted.len(),
    }
}

/// Eigenphase histogram as CSV `bin_center,count` over `[0, 2π)`.
pub fn eigenphase_histogram_csv(phases: impl IntoIterator<Item = f64>, bins: usize) -> String {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for p in phases {
        let b = ((canonical(p) / TAU) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let mut out = String::from("bin_center,count\n");
    for (i, c) in counts.iter().enumerate() {
        out.push_str(&format!("{},{}\n", sci17(TAU * (i as f64 + 0.5) / bins as f64), c));
    }
    out
}

impl LocalizationReport {
    pub fn histogram_csv(&self) -> String {
        eigenphase_histogram_csv(
            self.realizations
                .iter()
                .flat_map(|r| r.eigenvectors.iter().map(|e| e.phase)),
            self.options.histogram_bins,
        )
    }
}

/// `true` when `a` and `b` are the same phase set up to `tol` after sorting.
pub fn phases_match(a: &[f64], b: &[f64], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    a.iter().all(|&x| {
        match (0..b.len())
            .filter(|&j| !used[j])
            .min_by(|&i, &j| circular_distance(x, b[i]).total_cmp(&circular_distance(x, b[j])))
        {
            Some(j) if circular_distance(x, b[j]) <= tol => {
                used[j] = true;
                true
            }
            _ => false,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::sample_phases;
    use crate::operator::{apply_phases, build_diagonal, build_s_plus, build_s_window, build_u_plus, Boundary};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn free_spectrum_examples() {
        let s0 = spectrum_of_s(0.0).unwrap();
        assert_eq!(s0.arcs.len(), 1);
        assert_eq!(s0.arcs[0].halfwidth, 0.0);
        let s = spectrum_of_s(std::f64::consts::FRAC_1_SQRT_2).unwrap();
        assert!((s.arcs[0].halfwidth - PI / 2.0).abs() < 1e-12);
        assert!(spectrum_of_s(1.0).unwrap().is_full());
        assert!(spectrum_of_s(1.5).is_err());
    }

    #[test]
    fn almost_sure_examples() {
        let t = 0.5;
        let h = free_halfwidth(t);
        assert_eq!(almost_sure_spectrum(&PhaseDistribution::point(0.0), t).unwrap(), spectrum_of_s(t).unwrap());
        assert!(almost_sure_spectrum(&PhaseDistribution::uniform(), t).unwrap().is_full());
        let sig = almost_sure_spectrum(&PhaseDistribution::arc(0.0, 0.3).unwrap(), t).unwrap();
        assert_eq!(sig.arcs.len(), 1);
        assert!((sig.arcs[0].halfwidth - (0.3 + h)).abs() < 1e-12);
        // dense sampling of supp ν rotated by Σ(t)
        let shifts: Vec<f64> = (0..=2000).map(|a| -0.3 + 0.6 * a as f64 / 2000.0).collect();
        for i in 0..4000 {
            let x = TAU * i as f64 / 4000.0;
            let brute = shifts.iter().map(|&s| circular_distance(x, s)).fold(f64::INFINITY, f64::min) - h;
            let brute = brute.max(0.0);
            assert!((brute - sig.distance(x)).abs() < 1e-3, "{x}");
        }
    }

    #[test]
    fn asymmetric_support_matches_eigenphases() {
        let p = BandParameters::new(0.3).unwrap();
        let nu = PhaseDistribution::point(1.5);
        let sig = almost_sure_spectrum(&nu, p.t()).unwrap();
        let range = IndexRange::new(-40, 39).unwrap();
        let om = DisorderRealization::constant(range, 1.5);
        let free = build_s_window(&p, 80, -40, Boundary::Wrap).unwrap();
        let dec = eig_unitary(&apply_phases(&free, &om, 0.0).unwrap()).unwrap();
        let worst = dec.eigenphases.iter().map(|&l| sig.distance(l)).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
        let away = SpectrumArcSet::new([Arc { center: 1.5, halfwidth: free_halfwidth(p.t()) }]);
        assert!(dec.eigenphases.iter().any(|&l| away.distance(l) > 1.0));
        let rot = sig.rotated(-0.4);
        let dec = eig_unitary(&apply_phases(&free, &om, 0.4).unwrap()).unwrap();
        assert!(dec.eigenphases.iter().all(|&l| rot.distance(l) < 1e-9));
    }

    #[test]
    fn arc_set_merging() {
        let s = SpectrumArcSet::new([
            Arc { center: 0.1, halfwidth: 0.2 },
            Arc { center: 0.4, halfwidth: 0.15 },
            Arc { center: 6.2, halfwidth: 0.1 },
            Arc { center: 3.0, halfwidth: 0.1 },
        ]);
        assert_eq!(s.arcs.len(), 2);
        assert!(s.contains(6.15, 0.0) && s.contains(0.5, 0.0) && s.contains(3.05, 0.0));
        assert!(!s.contains(1.0, 0.0));
        let total: f64 = s.arcs.iter().map(|a| 2.0 * a.halfwidth).sum();
        assert!((total - (0.55 - (6.1 - TAU) + 0.2)).abs() < 1e-12);
        assert!(SpectrumArcSet::new([Arc { center: 1.0, halfwidth: 3.2 }]).is_full());
        assert!(SpectrumArcSet::new([Arc { center: 0.0, halfwidth: 1.6 }, Arc { center: PI, halfwidth: 1.6 }]).is_full());
    }

    #[test]
    fn diagonal_eigenphases() {
        let range = IndexRange::new(0, 11).unwrap();
        let om = sample_phases(&PhaseDistribution::uniform(), 3, range).unwrap();
        let d = build_diagonal(&om, range).unwrap();
        let dec = eig_unitary(&d).unwrap();
        let want: Vec<f64> = om.phases.iter().map(|&t| canonical(-t)).collect();
        assert!(phases_match(&dec.eigenphases, &want, 1e-12));
        for j in 0..12 {
            let mu = spectral_measure(&dec, j as i64).unwrap();
            let heavy: Vec<_> = mu.atoms.iter().filter(|a| a.1 > 1e-12).collect();
            assert_eq!(heavy.len(), 1);
            assert!(circular_distance(heavy[0].0, want[j]) < 1e-12);
        }
    }

    #[test]
    fn reflection_block() {
        let p = BandParameters::new(0.6).unwrap();
        let (r, t) = (p.r(), p.t());
        let m = Mat::<Complex64>::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c(r, 0.0),
            (1, 1) => c(-r, 0.0),
            _ => c(t, 0.0),
        });
        let dec = eig_unitary_dense(&m, 0).unwrap();
        assert!(phases_match(&dec.eigenphases, &[0.0, PI], 1e-12));
        let bad = Mat::<Complex64>::from_fn(2, 2, |i, j| if i == j { c(1.1, 0.0) } else { c(0.0, 0.0) });
        match eig_unitary_dense(&bad, 0) {
            Err(Error::NumericalCheck { defect, .. }) => assert!((defect - 0.21).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_window_decomposition() {
        let p = BandParameters::new(0.5).unwrap();
        let range = IndexRange::with_len(-250, 500).unwrap();
        let om = sample_phases(&PhaseDistribution::uniform(), 21, range).unwrap();
        let w = build_u_window(&p, &om, range, 0.0).unwrap();
        let dec = eig_unitary(&w).unwrap();
        assert!(dec.residual < 1e-9 && dec.orthonormality_defect < 1e-9);
        assert!(dec.eigenphases.windows(2).all(|x| x[0] <= x[1]));
        assert!(dec.eigenphases.iter().all(|&l| (0.0..TAU).contains(&l)));
        let ev = w.matrix().eigenvalues().unwrap();
        assert!(ev.iter().all(|z| (z.norm() - 1.0).abs() < 1e-10));
        let mu = spectral_measure(&dec, 0).unwrap();
        assert!((mu.mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn measure_moments_match_matrix_powers() {
        let p = BandParameters::new(0.4).unwrap();
        let range = IndexRange::new(-20, 19).unwrap();
        let om = sample_phases(&PhaseDistribution::arc(1.0, 0.7).unwrap(), 4, range).unwrap();
        let w = build_u_window(&p, &om, range, 0.0).unwrap();
        let dec = eig_unitary(&w).unwrap();
        for site in [-1i64, 0, 7] {
            let mu = spectral_measure(&dec, site).unwrap();
            let e = w.basis(site).unwrap();
            let i = w.local(site).unwrap();
            let (mut f, mut b) = (e.clone(), e);
            for n in 0..=10 {
                assert!((mu.moment(n) - f[i]).norm() < 1e-9, "n={n}");
                assert!((mu.moment(-n) - b[i]).norm() < 1e-9, "n=-{n}");
                f = w.apply(&f);
                b = w.apply_adjoint(&b);
            }
        }
        assert!(spectral_measure(&dec, 20).is_err());
    }

    #[test]
    fn averaging_small() {
        let p = BandParameters::new(0.5).unwrap();
        let range = IndexRange::new(-20, 19).unwrap();
        let om = sample_phases(&PhaseDistribution::uniform(), 5, range).unwrap();
        let avg = spectral_averaging_experiment(&om, 64, range, &p, Exec::Sequential).unwrap();
        assert!((avg.moments[0] - 1.0).norm() < 1e-12);
        assert!(avg.max_abs(10) < 1e-12);
        assert!(spectral_averaging_experiment(&om, 32, range, &p, Exec::Sequential).is_err());
    }

    #[test]
    fn krylov_ranks() {
        let p = BandParameters::new(0.5).unwrap();
        let range = IndexRange::new(-20, 19).unwrap();
        let om = sample_phases(&PhaseDistribution::uniform(), 6, range).unwrap();
        let d = build_diagonal(&om, range).unwrap();
        assert_eq!(krylov_cyclicity(&d, &[-1, 0], 20).unwrap().rank, 2);
        let w = build_u_window(&p, &om, range, 0.0).unwrap();
        assert_eq!(krylov_cyclicity(&w, &[-1, 0], 20).unwrap().rank, 40);
        let k = krylov_cyclicity(&d, &[-1, 0], 20).unwrap();
        assert_eq!(k.arnoldi_rank, 2);
        let om0 = om.restrict(IndexRange::new(0, 11).unwrap()).unwrap();
        let up = build_u_plus(&p, &om0, 12, 0.0).unwrap();
        assert_eq!(krylov_cyclicity(&up, &[0], 12).unwrap().rank, 12);
        // in the orthonormalized chain every new direction has norm t
        let half = IndexRange::new(0, 39).unwrap();
        let om0 = sample_phases(&PhaseDistribution::uniform(), 6, half).unwrap();
        let up = build_u_plus(&p, &om0, 40, 0.0).unwrap();
        let k = krylov_cyclicity(&up, &[0], 40).unwrap();
        assert_eq!(k.arnoldi_rank, 40);
        assert!((k.arnoldi_min_ratio - p.t()).abs() < 1e-6, "{}", k.arnoldi_min_ratio);
        let sp = build_s_plus(&p, 20).unwrap();
        assert_eq!(krylov_cyclicity(&sp, &[0], 20).unwrap().arnoldi_rank, 20);
    }

    #[test]
    fn histogram_layout() {
        let csv = eigenphase_histogram_csv([0.1, 0.2, 3.2, 6.28], 4);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "bin_center,count");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].ends_with(",2"));
        assert!(lines[3].ends_with(",1"));
        assert!(lines[4].ends_with(",1"));
    }

    #[test]
    fn offsets_are_even() {
        for n in [40usize, 42, 200, 500, 1000, 1002] {
            let o = centered_offset(n);
            assert_eq!(o.rem_euclid(2), 0);
            assert!(o <= -(n as i64) / 2 && o >= -(n as i64) / 2 - 1);
        }
    }

    proptest! {
        #[test]
        fn arc_set_membership(arcs in proptest::collection::vec((0.0..TAU, 0.0..1.5f64), 1..6), x in 0.0..TAU) {
            let raw: Vec<Arc> = arcs.iter().map(|&(c, h)| Arc { center: c, halfwidth: h }).collect();
            let s = SpectrumArcSet::new(raw.clone());
            let direct = raw.iter().any(|a| circular_distance(a.center, x) <= a.halfwidth + 1e-12);
            let d = s.distance(x);
            if direct {
                prop_assert!(d <= 1e-9);
            } else {
                prop_assert!(d > 0.0);
            }
            for w in s.arcs.windows(2) {
                prop_assert!(canonical(w[0].center - w[0].halfwidth) < canonical(w[1].center - w[1].halfwidth) || s.arcs.len() == 1);
            }
        }
    }
}
