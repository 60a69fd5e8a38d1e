//! The eight acceptance criteria as runnable checks.
//!
//! Each criterion returns a [`CriterionOutcome`] listing the measured
//! quantities next to their bounds. The test target and the `selftest`
//! subcommand both print these; neither relaxes a bound.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::circular_distance;
use crate::disorder::{correlated_verblunski, sample_phases, sample_phases_stream, IndexRange, PhaseDistribution};
use crate::exec::{try_map_indexed, Exec};
use crate::fuerstenberg::{group_elements, mat4_dist, mat4_mul, tau_lift};
use crate::mat2::Mat2;
use crate::operator::{
    build_cmv, build_diagonal, build_s_plus, build_s_window, build_u_plus, build_u_window, cmv_conjugation_check,
    cyclicity_identity_check, half_lattice_identity_check, s_full_entry, s_plus_entry, unitarity_tolerance,
    BandUnitaryWindow, Boundary,
};
use crate::params::BandParameters;
use crate::spectral::{
    centered_offset, free_halfwidth, krylov_cyclicity, localization_report, spectral_averaging_experiment, LocalizationOptions,
    LocalizationReport,
};
use crate::transfer::{lyapunov_sweep, transfer_matrix, LyapunovConfig, LyapunovPair};
use crate::Result;

/// Seed shared by every randomized criterion.
pub const SEED: u64 = 20_241_017;

/// One measured quantity and its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound: format!("< {limit:e}"),
            passed: value < limit,
        }
    }

    fn above(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound: format!("> {limit:e}"),
            passed: value > limit,
        }
    }

    fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound: format!("in [{lo}, {hi}]"),
            passed: (lo..=hi).contains(&value),
        }
    }

    fn holds(name: impl Into<String>, value: f64, bound: impl Into<String>, passed: bool) -> Self {
        Check {
            name: name.into(),
            value,
            bound: bound.into(),
            passed,
        }
    }

    /// A measurement printed for context; never fails.
    fn info(name: impl Into<String>, value: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound: "reported".into(),
            passed: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub checks: Vec<Check>,
    /// Wall time; left out of serialized output so reruns compare equal.
    #[serde(skip)]
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// The single verdict line.
    pub fn verdict(&self) -> String {
        format!(
            "criterion {} ({}): {} [{:.1} s]",
            self.id,
            self.title,
            if self.passed() { "PASS" } else { "FAIL" },
            self.seconds
        )
    }
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.verdict())?;
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "    {mark} {}: {:.6e} ({})", c.name, c.value, c.bound)?;
        }
        Ok(())
    }
}

pub const CRITERIA: [u8; 8] = [1, 2, 3, 4, 5, 6, 7, 8];

pub fn run_criterion(id: u8, exec: Exec) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let (title, checks) = match id {
        1 => ("exact algebraic identities", algebraic_identities()?),
        2 => ("Fuerstenberg certificate", fuerstenberg_grid()?),
        3 => ("Lyapunov estimator calibration", lyapunov_calibration(exec)?),
        4 => ("positivity sweep", positivity_sweep(exec)?),
        5 => ("localization evidence", localization_evidence(exec)?),
        6 => ("spectrum containment", spectrum_containment(exec)?),
        7 => ("spectral averaging", spectral_averaging(exec)?),
        8 => ("cyclicity", cyclicity(exec)?),
        _ => return Err(crate::error::domain(format!("no acceptance criterion {id}"))),
    };
    Ok(CriterionOutcome {
        id,
        title: title.into(),
        checks,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn uniform() -> PhaseDistribution {
    PhaseDistribution::uniform()
}

fn max_of(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

fn algebraic_identities() -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    // unitarity, reported as defect / size-dependent tolerance
    let mut worst = 0.0f64;
    for &t in &[0.3, 0.5, 0.8] {
        let p = BandParameters::new(t)?;
        for &n in &[10usize, 100, 500, 2000] {
            let off = centered_offset(n);
            let range = IndexRange::with_len(off, n)?;
            let om = sample_phases(&uniform(), SEED, range)?;
            let om_plus = sample_phases(&uniform(), SEED, IndexRange::with_len(0, n)?)?;
            let v = correlated_verblunski(&om_plus, p.r())?;
            let windows: Vec<BandUnitaryWindow> = vec![
                build_s_window(&p, n, off, Boundary::ScalarCompletion)?,
                build_s_window(&p, n, off, Boundary::Wrap)?,
                build_s_plus(&p, n)?,
                build_u_window(&p, &om, range, 0.3)?,
                build_u_plus(&p, &om_plus, n, 0.3)?,
                build_diagonal(&om, range)?,
                build_cmv(&v, n)?,
            ];
            for w in &windows {
                worst = worst.max(w.unitarity_defect() / unitarity_tolerance(n));
            }
        }
    }
    checks.push(Check::below("unitarity defect / tolerance, sizes 10..2000", worst, 1.0));

    // interior entry patterns against the closed-form entries
    let mut pattern = 0.0f64;
    let mut counts_ok = true;
    for &t in &[0.3, 0.5, 0.8] {
        let p = BandParameters::new(t)?;
        let s = build_s_window(&p, 40, -20, Boundary::ScalarCompletion)?;
        for i in s.interior_rows() {
            let row = -20 + i as i64;
            counts_ok &= s.row(i).iter().filter(|e| e.1 != Complex64::new(0.0, 0.0)).count() == 4;
            for col in -20..20 {
                pattern = pattern.max((s.entry(row, col) - s_full_entry(&p, row, col)).norm());
            }
        }
        let sp = build_s_plus(&p, 40)?;
        for i in sp.interior_rows() {
            for j in 0..40 {
                pattern = pattern.max((sp.entry(i as i64, j) - s_plus_entry(&p, i as i64, j)).norm());
            }
        }
    }
    checks.push(Check::holds(
        "S and S+ interior entries vs closed form",
        pattern,
        "= 0",
        pattern == 0.0,
    ));
    checks.push(Check::holds(
        "four nonzeros in every interior row of S",
        if counts_ok { 4.0 } else { 0.0 },
        "= 4",
        counts_ok,
    ));

    // det T over random samples
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut det = 0.0f64;
    for _ in 0..10_000 {
        let theta = rng.random_range(-PI..PI);
        let eta = rng.random_range(-PI..PI);
        let t = rng.random_range(0.5..1.0);
        let m = transfer_matrix(theta, eta, &BandParameters::new(t)?);
        det = det.max((m.entries.det() - m.expected_det()).norm());
    }
    checks.push(Check::below("det T - e^{i(θ-η)}, 10⁴ samples, t in [0.5, 1)", det, 1e-14));

    // cyclicity identities on full and half lattice windows
    let mut cyc = 0.0f64;
    for (k, &t) in [0.2, 0.5, 0.8].iter().enumerate() {
        let p = BandParameters::new(t)?;
        let range = IndexRange::new(-12, 11)?;
        let om = sample_phases_stream(&uniform(), SEED, k as u64, range)?;
        let w = build_u_window(&p, &om, range, 0.4)?;
        cyc = cyc.max(max_of(cyclicity_identity_check(&w)?.into_values()));
        let om0 = om.restrict(IndexRange::new(0, 11)?)?;
        cyc = cyc.max(half_lattice_identity_check(&build_u_plus(&p, &om0, 12, 0.4)?)?);
    }
    checks.push(Check::below("cyclicity identities, full and half lattice", cyc, 1e-12));

    let om = sample_phases(&uniform(), SEED, IndexRange::with_len(0, 500)?)?;
    let v = correlated_verblunski(&om, 0.6)?;
    checks.push(Check::below(
        "CMV conjugation interior defect, size 500",
        cmv_conjugation_check(&v, 0.0, 500)?,
        1e-12,
    ));

    let mut tau = 0.0f64;
    let draw = |rng: &mut ChaCha8Rng| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    for _ in 0..1000 {
        let x = Mat2::new(draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let y = Mat2::new(draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let lhs = tau_lift(&(x * y)).matrix;
        let rhs = mat4_mul(&tau_lift(&x).matrix, &tau_lift(&y).matrix);
        tau = tau.max(mat4_dist(&lhs, &rhs));
    }
    checks.push(Check::below("τ homomorphism", tau, 1e-13));
    Ok(checks)
}

/// `t` values of the certificate grid.
pub const CERTIFICATE_TS: [f64; 5] = [0.3, 0.45, 0.6, 0.75, 0.9];

fn fuerstenberg_grid() -> Result<Vec<Check>> {
    let mut products = 0.0f64;
    let mut herm = 0.0f64;
    let mut det_k = 0.0f64;
    let mut trace = 0.0f64;
    let mut eq1 = 0.0f64;
    let mut eq2 = 0.0f64;
    let mut min_eig = f64::INFINITY;
    let mut excess = f64::INFINITY;
    for &t in &CERTIFICATE_TS {
        let p = BandParameters::new(t)?;
        for i in 0..16 {
            for j in 0..16 {
                let theta = TAU * i as f64 / 16.0;
                let eta = TAU * j as f64 / 16.0;
                let c = group_elements(theta, eta, &p)?;
                let d = &c.identity_defects;
                products = products.max(max_of(
                    [
                        "C closed form vs T(θ,θ)T(θ,η)⁻¹",
                        "E closed form vs T(η,θ)⁻¹T(θ,θ)",
                        "L closed form vs CE",
                        "J closed form vs EC",
                    ]
                    .map(|k| d[k]),
                ));
                herm = herm.max(d["K = K*"]);
                det_k = det_k.max(d["det K = 1"]);
                trace = trace.max(d["tr K formula, absolute"]);
                eq1 = eq1.max(d["eqdiag1"]);
                eq2 = eq2.max(d["eqdiag2 finite difference"]);
                let [a, b] = c.k.eigenvalues();
                min_eig = min_eig.min(a.re.min(b.re));
                if circular_distance(theta, eta) > 1e-6 {
                    excess = excess.min(c.trace_k - 2.0);
                }
            }
        }
    }
    Ok(vec![
        Check::below("closed forms C, E, L, J vs products", products, 1e-12),
        Check::below("K - K*", herm, 1e-10),
        Check::above("smallest eigenvalue of K", min_eig, 0.0),
        Check::below("det K - 1", det_k, 1e-10),
        Check::below("tr K - (2 + (r²/t⁴)|xz̄-1|⁴)", trace, 1e-10),
        Check::above("min tr K - 2 off the diagonal θ = η", excess, 0.0),
        Check::below("eqdiag1", eq1, 1e-12),
        Check::below("eqdiag2, finite difference", eq2, 1e-6),
    ])
}

fn alpha_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| TAU * k as f64 / points as f64).collect()
}

fn lyapunov_calibration(exec: Exec) -> Result<Vec<Check>> {
    let p = BandParameters::new(0.5)?;
    let alphas = alpha_grid(16);
    let h = free_halfwidth(p.t());
    let cfg = LyapunovConfig::new(100_000, 2, SEED);
    let det = lyapunov_sweep(&PhaseDistribution::point(0.0), &p, &alphas, &cfg, exec)?;
    let mut inside = 0.0f64;
    let mut outside = 0.0f64;
    let mut oracle_fb = 0.0f64;
    for pair in &det {
        let a = pair.forward.alpha;
        let (gf, gb) = (pair.forward.gamma_hat, pair.backward.gamma_hat);
        if circular_distance(a, 0.0) <= h {
            inside = inside.max(gf.max(gb));
        } else {
            let rho = transfer_matrix(a, a, &p).entries.spectral_radius().ln();
            outside = outside.max((gf - rho).abs().max((gb - rho).abs()));
        }
        oracle_fb = oracle_fb.max((gf - gb).abs());
    }
    let cfg = LyapunovConfig::new(100_000, 16, SEED);
    let rnd = lyapunov_sweep(&uniform(), &p, &alphas, &cfg, exec)?;
    Ok(vec![
        Check::below("deterministic ν, max γ̂ inside Σ(t)", inside, 0.02),
        Check::below("deterministic ν, max |γ̂ - ln ρ(T(α,α))| outside Σ(t)", outside, 0.01),
        Check::below("deterministic ν, max |forward - backward|", oracle_fb, 0.01),
        Check::below(
            "uniform ν, max |forward - backward| / combined stderr",
            worst_disagreement(&rnd),
            3.0,
        ),
    ])
}

fn worst_disagreement(pairs: &[LyapunovPair]) -> f64 {
    max_of(pairs.iter().map(|p| {
        let (d, se) = p.disagreement();
        d.abs() / se
    }))
}

fn positivity_sweep(exec: Exec) -> Result<Vec<Check>> {
    let alphas = alpha_grid(32);
    let cfg = LyapunovConfig::new(100_000, 16, SEED);
    let mut checks = Vec::new();
    for nu in [PhaseDistribution::arc(0.0, 0.5)?, uniform()] {
        for &t in &[0.2, 0.5, 0.8] {
            let p = BandParameters::new(t)?;
            let pairs = lyapunov_sweep(&nu, &p, &alphas, &cfg, exec)?;
            let margin = pairs
                .iter()
                .flat_map(|q| [&q.forward, &q.backward])
                .map(|e| e.gamma_hat - 3.0 * e.std_error)
                .fold(f64::INFINITY, f64::min);
            checks.push(Check::above(format!("{nu}, t = {t}: min γ̂ - 3·stderr"), margin, 0.0));
        }
    }
    Ok(checks)
}

/// Mean and standard error over realizations of the per-realization median
/// participation ratio.
fn participation_stats(r: &LocalizationReport) -> (f64, f64) {
    let meds: Vec<f64> = r
        .realizations
        .iter()
        .map(|rep| {
            let mut v: Vec<f64> = rep.eigenvectors.iter().map(|e| e.participation_ratio).collect();
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        })
        .collect();
    let n = meds.len() as f64;
    let mean = meds.iter().sum::<f64>() / n;
    if meds.len() < 2 {
        return (mean, 0.0);
    }
    let var = meds.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn localization_evidence(exec: Exec) -> Result<Vec<Check>> {
    let p = BandParameters::new(0.5)?;
    let opts = LocalizationOptions::default();
    let big = localization_report(&uniform(), &p, 1000, 20, SEED, &opts, exec)?;
    let small = localization_report(&uniform(), &p, 500, 20, SEED, &opts, exec)?;
    let ratio = big.summary.median_decay_ratio.unwrap_or(f64::NAN);
    let (pr_big, se_big) = participation_stats(&big);
    let (pr_small, se_small) = participation_stats(&small);
    let growth = pr_big - pr_small;
    let noise = 3.0 * se_big.hypot(se_small);

    // every realization of the deterministic control is the same window
    let point = PhaseDistribution::point(0.0);
    let c_big = localization_report(&point, &p, 1000, 1, SEED, &opts, exec)?;
    let c_small = localization_report(&point, &p, 500, 1, SEED, &opts, exec)?;
    let control = c_big.summary.median_participation_ratio / c_small.summary.median_participation_ratio;
    Ok(vec![
        Check::within("median decay rate / (γ̂/2), window 1000", ratio, 0.8, 1.2),
        Check::info("median per-site decay rate", big.summary.median_decay_rate.unwrap_or(f64::NAN)),
        Check::info("boundary-insulated eigenvectors fitted", big.summary.fitted as f64),
        Check::info("median participation ratio, window 500", pr_small),
        Check::info("median participation ratio, window 1000", pr_big),
        Check::holds(
            "participation ratio change 500 → 1000",
            growth,
            format!("<= 3 combined stderr = {noise:e}"),
            growth <= noise,
        ),
        Check::within("deterministic control, PR(1000)/PR(500)", control, 1.8, 2.2),
    ])
}

fn spectrum_containment(exec: Exec) -> Result<Vec<Check>> {
    let p = BandParameters::new(0.5)?;
    let nu = PhaseDistribution::arc(0.0, 0.3)?;
    let opts = LocalizationOptions::default();
    let small = localization_report(&nu, &p, 500, 10, SEED, &opts, exec)?;
    let half = LocalizationOptions {
        epsilon: opts.epsilon / 2.0,
        ..opts
    };
    let big = localization_report(&nu, &p, 1000, 10, SEED, &half, exec)?;
    let (e5, e10) = (small.summary.required_epsilon_99, big.summary.required_epsilon_99);
    Ok(vec![
        Check::holds(
            "window 500, fraction inside Σ fattened by 0.05",
            small.summary.containment_fraction,
            ">= 0.99",
            small.summary.containment_fraction >= 0.99,
        ),
        Check::holds(
            "window 1000, fraction inside Σ fattened by 0.025",
            big.summary.containment_fraction,
            ">= 0.99",
            big.summary.containment_fraction >= 0.99,
        ),
        Check::info("fattening needed for 99%, window 500", e5),
        Check::holds(
            "fattening needed for 99%, window 1000",
            e10,
            format!("<= 1.5 · {e5:e} / 2"),
            e10 <= 0.75 * e5,
        ),
        Check::info("insulated eigenvectors, window 500", small.summary.insulated as f64),
    ])
}

/// Below this both quadrature errors are rounding, and their ratio carries
/// no convergence information.
pub const AVERAGING_FLOOR: f64 = 1e-12;

fn spectral_averaging(exec: Exec) -> Result<Vec<Check>> {
    let p = BandParameters::new(0.5)?;
    let range = IndexRange::new(-100, 99)?;
    let om = sample_phases(&uniform(), SEED, range)?;
    let coarse = spectral_averaging_experiment(&om, 256, range, &p, exec)?.max_abs(5);
    let fine = spectral_averaging_experiment(&om, 512, range, &p, exec)?.max_abs(5);
    let ratio = fine / coarse;
    let exact = coarse < AVERAGING_FLOOR && fine < AVERAGING_FLOOR;
    Ok(vec![
        Check::below("grid 256, max |m̄_n|, 1 <= n <= 5", coarse, 1e-2),
        Check::info("grid 512, max |m̄_n|, 1 <= n <= 5", fine),
        Check::holds(
            "error ratio under grid doubling",
            ratio,
            format!("< 0.6, or both errors below {AVERAGING_FLOOR:e}"),
            ratio < 0.6 || exact,
        ),
    ])
}

fn cyclicity(exec: Exec) -> Result<Vec<Check>> {
    let p = BandParameters::new(0.5)?;
    let full = IndexRange::new(-20, 19)?;
    let half = IndexRange::new(0, 39)?;
    let ranks = try_map_indexed(exec, 20, |i| -> Result<[usize; 6]> {
        let om = sample_phases_stream(&uniform(), SEED, i as u64, full)?;
        let om_plus = sample_phases_stream(&uniform(), SEED, i as u64, half)?;
        let kf = krylov_cyclicity(&build_u_window(&p, &om, full, 0.0)?, &[-1, 0], 20)?;
        let kh = krylov_cyclicity(&build_u_plus(&p, &om_plus, 40, 0.0)?, &[0], 40)?;
        let df = krylov_cyclicity(&build_diagonal(&om, full)?, &[-1, 0], 20)?;
        let dh = krylov_cyclicity(&build_diagonal(&om_plus, half)?, &[0], 40)?;
        Ok([kf.rank, kh.rank, df.rank, dh.rank, kf.arnoldi_rank, kh.arnoldi_rank])
    })?;
    let min = |k: usize| ranks.iter().map(|r| r[k]).min().unwrap_or(0) as f64;
    let max = |k: usize| ranks.iter().map(|r| r[k]).max().unwrap_or(0) as f64;
    let full_hits = ranks.iter().filter(|r| r[0] == 40).count();
    let half_hits = ranks.iter().filter(|r| r[1] == 40).count();
    Ok(vec![
        Check::holds(
            format!("full lattice, sites {{-1, 0}}: min rank ({full_hits}/20 trials at 40)"),
            min(0),
            "= 40 in every trial",
            full_hits == 20,
        ),
        Check::holds(
            format!("half lattice, site {{0}}: min rank ({half_hits}/20 trials at 40)"),
            min(1),
            "= 40 in every trial",
            half_hits == 20,
        ),
        Check::info("half lattice, site {0}: max rank", max(1)),
        Check::holds("diagonal control, sites {-1, 0}: max rank", max(2), "= 2", max(2) == 2.0 && min(2) == 2.0),
        Check::holds("diagonal control, site {0}: max rank", max(3), "= 1", max(3) == 1.0 && min(3) == 1.0),
        Check::info("full lattice, orthonormalized Krylov rank, min", min(4)),
        Check::info("half lattice, orthonormalized Krylov rank, min", min(5)),
    ])
}
