use std::fs;
use std::io::Write;

use bandloc::acceptance::{run_criterion, CriterionOutcome, CRITERIA};
use bandloc::disorder::{correlated_verblunski, sample_phases, DisorderRealization, IndexRange, PhaseDistribution};
use bandloc::fmt::{sci17, to_json};
use bandloc::fuerstenberg::{group_elements, noncompactness_probe, FuerstenbergCertificate};
use bandloc::operator::{
    apply_phases, build_cmv, build_diagonal, build_s_plus, build_s_window, build_u_plus, build_u_window,
    cmv_conjugation_check, window_csv, window_header, BandUnitaryWindow, Boundary, WindowHeader,
};
use bandloc::spectral::{
    almost_sure_spectrum, analyze_realization, centered_offset, krylov_cyclicity, localization_report,
    spectral_averaging_experiment, EigenvectorStats, KrylovReport, LocalizationOptions, LocalizationReport,
    SpectrumArcSet,
};
use bandloc::transfer::{lyapunov_csv, lyapunov_sweep, LyapunovConfig, LyapunovPair};
use bandloc::{BandParameters, Error, Exec};
use serde::Serialize;

use crate::{
    AverageArgs, BuildArgs, Cli, CmvCheckArgs, Command, CyclicityArgs, EdgeMode, Flavor, Format, FuerstenbergArgs,
    Lattice, LocalizeArgs, LyapunovArgs, OperatorKind, Output, SelftestArgs, SpectrumArgs,
};

/// CMV conjugation defect accepted by `cmv-check`.
const CMV_THRESHOLD: f64 = 1e-12;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalCheck { .. } | Error::Eigensolver(_) => Failure::numerical(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

type Outcome = Result<String, Failure>;

pub fn run(cli: Cli) -> Outcome {
    let jobs = cli.jobs.unwrap_or(0);
    let exec = if jobs == 1 { Exec::Sequential } else { Exec::Parallel };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::invalid(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| match cli.command {
        Command::Build(a) => build(&a),
        Command::Lyapunov(a) => lyapunov(&a, exec),
        Command::Spectrum(a) => spectrum(&a),
        Command::Localize(a) => localize(&a, exec),
        Command::Average(a) => average(&a, exec),
        Command::Fuerstenberg(a) => fuerstenberg(&a),
        Command::CmvCheck(a) => cmv_check(&a),
        Command::Cyclicity(a) => cyclicity(&a),
        Command::Selftest(a) => selftest(&a, exec),
    })
}

/// The effective configuration, echoed into JSON artifacts.
#[derive(Serialize)]
struct Echo<'a, T: Serialize> {
    subcommand: &'static str,
    #[serde(flatten)]
    args: &'a T,
}

fn echo<'a, T: Serialize>(subcommand: &'static str, args: &'a T) -> Echo<'a, T> {
    Echo { subcommand, args }
}

fn write_artifact(out: &Output, body: &str) -> Result<String, Failure> {
    match &out.out {
        Some(path) => {
            fs::write(path, body).map_err(|e| Failure::invalid(format!("cannot write '{}': {e}", path.display())))?;
            Ok(format!("written to {}", path.display()))
        }
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(body.as_bytes())
                .and_then(|_| so.flush())
                .map_err(|e| Failure::invalid(format!("cannot write to stdout: {e}")))?;
            Ok("written to stdout".into())
        }
    }
}

fn json_line<T: Serialize>(v: &T) -> String {
    let mut s = to_json(v);
    s.push('\n');
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn params(t: f64) -> Result<BandParameters, Failure> {
    Ok(BandParameters::new(t)?)
}

fn nu(spec: &str) -> Result<PhaseDistribution, Failure> {
    Ok(spec.parse()?)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Failure> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<T>()
                .map_err(|_| Failure::invalid(format!("bad {what} '{x}' in '{s}'")))
        })
        .collect()
}

/// `start,end,points`, both ends included.
pub fn alpha_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        return Err(Failure::invalid(format!("alpha grid needs start,end,points, got '{spec}'")));
    }
    let bad = |x: &str| Failure::invalid(format!("bad alpha grid value '{x}'"));
    let start: f64 = parts[0].trim().parse().map_err(|_| bad(parts[0]))?;
    let end: f64 = parts[1].trim().parse().map_err(|_| bad(parts[1]))?;
    let points: usize = parts[2].trim().parse().map_err(|_| bad(parts[2]))?;
    if points == 0 || !start.is_finite() || !end.is_finite() {
        return Err(Failure::invalid(format!("alpha grid '{spec}' is empty or not finite")));
    }
    if points == 1 {
        return Ok(vec![start]);
    }
    let h = (end - start) / (points - 1) as f64;
    Ok((0..points).map(|k| start + h * k as f64).collect())
}

fn full_range(size: usize, offset: Option<i64>) -> Result<IndexRange, Failure> {
    Ok(IndexRange::with_len(offset.unwrap_or_else(|| centered_offset(size)), size)?)
}

fn half_range(size: usize) -> Result<IndexRange, Failure> {
    Ok(IndexRange::with_len(0, size)?)
}

fn phases(dist: &PhaseDistribution, seed: u64, range: IndexRange) -> Result<DisorderRealization, Failure> {
    Ok(sample_phases(dist, seed, range)?)
}

#[derive(Serialize)]
struct BuildOut<'a> {
    config: Echo<'a, BuildArgs>,
    header: WindowHeader,
    entries: Vec<(usize, usize, f64, f64)>,
}

fn build_window(a: &BuildArgs) -> Result<BandUnitaryWindow, Failure> {
    let p = params(a.t)?;
    let dist = nu(&a.nu)?;
    let edge = match a.boundary {
        EdgeMode::Scalar => Boundary::ScalarCompletion,
        EdgeMode::Wrap => Boundary::Wrap,
    };
    let full = || full_range(a.size, a.offset);
    let w = match a.flavor {
        Flavor::S => build_s_window(&p, a.size, full()?.lo, edge)?,
        Flavor::SPlus => build_s_plus(&p, a.size)?,
        Flavor::U => {
            let range = full()?;
            let om = phases(&dist, a.seed, range)?;
            let s = build_s_window(&p, a.size, range.lo, edge)?;
            apply_phases(&s, &om, a.alpha)?
        }
        Flavor::UPlus => build_u_plus(&p, &phases(&dist, a.seed, half_range(a.size)?)?, a.size, a.alpha)?,
        Flavor::Diagonal => {
            let range = full()?;
            build_diagonal(&phases(&dist, a.seed, range)?, range)?
        }
        Flavor::Cmv => {
            let om = phases(&dist, a.seed, half_range(a.size)?)?;
            build_cmv(&correlated_verblunski(&om, p.r())?, a.size)?
        }
    };
    Ok(w)
}

fn build(a: &BuildArgs) -> Outcome {
    let w = build_window(a)?;
    let header = window_header(&w);
    let body = match a.output.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            if let Some(path) = &a.output.out {
                let side = format!("{}.header.json", path.display());
                fs::write(&side, json_line(&header)).map_err(|e| Failure::invalid(format!("cannot write '{side}': {e}")))?;
            }
            window_csv(&w)
        }
        Format::Json => {
            let entries = (0..w.size())
                .flat_map(|i| w.row(i).iter().map(move |&(j, v)| (i, j, v.re, v.im)))
                .collect();
            json_line(&BuildOut {
                config: echo("build", a),
                header,
                entries,
            })
        }
    };
    let dest = write_artifact(&a.output, &body)?;
    Ok(format!(
        "build: {} window of size {} at offset {}, unitarity defect {:e}; {dest}",
        w.flavor().name(),
        w.size(),
        w.offset(),
        w.unitarity_defect()
    ))
}

#[derive(Serialize)]
struct LyapunovOut<'a> {
    config: Echo<'a, LyapunovArgs>,
    pairs: &'a [LyapunovPair],
}

fn lyapunov(a: &LyapunovArgs, exec: Exec) -> Outcome {
    let p = params(a.t)?;
    let dist = nu(&a.nu)?;
    let alphas = alpha_grid(&a.alpha_grid)?;
    let cfg = LyapunovConfig {
        burn_in: a.burn_in,
        ..LyapunovConfig::new(a.steps, a.runs, a.seed)
    };
    let pairs = lyapunov_sweep(&dist, &p, &alphas, &cfg, exec)?;
    let body = match a.output.format.unwrap_or(Format::Csv) {
        Format::Csv => lyapunov_csv(&pairs, &p, &dist, a.seed),
        Format::Json => json_line(&LyapunovOut {
            config: echo("lyapunov", a),
            pairs: &pairs,
        }),
    };
    let dest = write_artifact(&a.output, &body)?;
    let min = pairs
        .iter()
        .map(|q| q.forward.gamma_hat)
        .fold(f64::INFINITY, f64::min);
    Ok(format!("lyapunov: {} alphas, smallest gamma_hat {min:.6}; {dest}", pairs.len()))
}

#[derive(Serialize)]
struct SpectrumOut<'a> {
    config: Echo<'a, SpectrumArgs>,
    sigma: &'a SpectrumArcSet,
    residual: f64,
    containment_fraction: Option<f64>,
    eigenvectors: &'a [EigenvectorStats],
}

fn spectrum(a: &SpectrumArgs) -> Outcome {
    let p = params(a.t)?;
    let dist = nu(&a.nu)?;
    let w = match a.lattice {
        Lattice::Full => {
            let range = full_range(a.size, None)?;
            build_u_window(&p, &phases(&dist, a.seed, range)?, range, a.alpha)?
        }
        Lattice::Half => build_u_plus(&p, &phases(&dist, a.seed, half_range(a.size)?)?, a.size, a.alpha)?,
    };
    let sigma = almost_sure_spectrum(&dist, a.t)?.rotated(-a.alpha);
    let opts = LocalizationOptions {
        epsilon: a.epsilon,
        ..LocalizationOptions::default()
    };
    let rep = analyze_realization(&w, &sigma, &opts, 0)?;
    let ins: Vec<&EigenvectorStats> = rep.eigenvectors.iter().filter(|e| e.insulated).collect();
    let inside = ins.iter().filter(|e| e.distance_to_sigma <= a.epsilon).count();
    let fraction = (!ins.is_empty()).then(|| inside as f64 / ins.len() as f64);
    let body = match a.output.format.unwrap_or(Format::Json) {
        Format::Csv => {
            let mut s = String::from("index,phase,distance_to_sigma,edge_mass,insulated\n");
            for (i, e) in rep.eigenvectors.iter().enumerate() {
                s.push_str(&format!(
                    "{i},{},{},{},{}\n",
                    sci17(e.phase),
                    sci17(e.distance_to_sigma),
                    sci17(e.edge_mass),
                    e.insulated
                ));
            }
            s
        }
        Format::Json => json_line(&SpectrumOut {
            config: echo("spectrum", a),
            sigma: &sigma,
            residual: rep.residual,
            containment_fraction: fraction,
            eigenvectors: &rep.eigenvectors,
        }),
    };
    let dest = write_artifact(&a.output, &body)?;
    Ok(format!(
        "spectrum: {} eigenphases, {} boundary-insulated, {} inside Σ fattened by {}; {dest}",
        rep.eigenvectors.len(),
        ins.len(),
        inside,
        a.epsilon
    ))
}

#[derive(Serialize)]
struct LocalizeOut<'a> {
    config: Echo<'a, LocalizeArgs>,
    report: &'a LocalizationReport,
}

fn localize(a: &LocalizeArgs, exec: Exec) -> Outcome {
    let p = params(a.t)?;
    let dist = nu(&a.nu)?;
    let opts = LocalizationOptions {
        epsilon: a.epsilon,
        edge_sites: a.edge_sites,
        edge_mass: a.edge_mass,
        histogram_bins: a.bins,
        lyapunov_steps: a.steps,
        lyapunov_runs: a.runs,
        lyapunov_grid: a.lyapunov_grid,
    };
    let rep = localization_report(&dist, &p, a.window, a.realizations, a.seed, &opts, exec)?;
    let body = match a.output.format.unwrap_or(Format::Json) {
        Format::Csv => rep.histogram_csv(),
        Format::Json => json_line(&LocalizeOut {
            config: echo("localize", a),
            report: &rep,
        }),
    };
    let dest = write_artifact(&a.output, &body)?;
    let s = &rep.summary;
    let show = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    Ok(format!(
        "localize: {} eigenvectors, {} insulated, containment {:.4}, median decay/(γ̂/2) {}; {dest}",
        s.eigenvectors,
        s.insulated,
        s.containment_fraction,
        show(s.median_decay_ratio)
    ))
}

#[derive(Serialize)]
struct Moment {
    n: usize,
    re: f64,
    im: f64,
    abs: f64,
}

#[derive(Serialize)]
struct AverageOut<'a> {
    config: Echo<'a, AverageArgs>,
    grid: usize,
    moments: Vec<Moment>,
}

fn average(a: &AverageArgs, exec: Exec) -> Outcome {
    let p = params(a.t)?;
    let dist = nu(&a.nu)?;
    let range = full_range(a.size, None)?;
    let om = phases(&dist, a.seed, range)?;
    let res = spectral_averaging_experiment(&om, a.grid, range, &p, exec)?;
    let moments: Vec<Moment> = res
        .moments
        .iter()
        .enumerate()
        .map(|(n, m)| Moment {
            n,
            re: m.re,
            im: m.im,
            abs: m.norm(),
        })
        .collect();
    let body = match a.output.format.unwrap_or(Format::Json) {
        Format::Csv => {
            let mut s = String::from("n,re,im,abs\n");
            for m in &moments {
                s.push_str(&format!("{},{},{},{}\n", m.n, sci17(m.re), sci17(m.im), sci17(m.abs)));
            }
            s
        }
        Format::Json => json_line(&AverageOut {
            config: echo("average", a),
            grid: res.grid,
            moments,
        }),
    };
    let dest = write_artifact(&a.output, &body)?;
    Ok(format!("average: max |m̄_n| for 1 <= n <= 5 is {:e}; {dest}", res.max_abs(5)))
}

#[derive(Serialize)]
struct FuerstenbergOut<'a> {
    config: Echo<'a, FuerstenbergArgs>,
    certificate: &'a FuerstenbergCertificate,
    /// `‖Kⁿ‖^{1/n}`; absent when `θ = η`.
    growth_rate: Option<f64>,
}

fn fuerstenberg(a: &FuerstenbergArgs) -> Outcome {
    let p = params(a.t)?;
    let cert = group_elements(a.theta, a.eta, &p)?;
    let growth = noncompactness_probe(a.theta, a.eta, &p, a.powers).ok();
    let body = match a.output.format.unwrap_or(Format::Json) {
        Format::Csv => {
            let mut s = String::from("quantity,value\n");
            let mut row = |k: &str, v: f64| s.push_str(&format!("{},{}\n", csv_field(k), sci17(v)));
            row("trace_k", cert.trace_k);
            row("trace_k_formula", cert.trace_k_formula);
            row("max_eigenvalue_k", cert.max_eigenvalue_k);
            row("noncompact_witnessed", if cert.noncompact_witnessed { 1.0 } else { 0.0 });
            row("growth_rate", growth.unwrap_or(f64::NAN));
            for (k, v) in &cert.identity_defects {
                row(&format!("defect: {k}"), *v);
            }
            s
        }
        Format::Json => json_line(&FuerstenbergOut {
            config: echo("fuerstenberg", a),
            certificate: &cert,
            growth_rate: growth,
        }),
    };
    let dest = write_artifact(&a.output, &body)?;
    Ok(format!(
        "fuerstenberg: tr K = {:.12}, noncompact_witnessed = {}; {dest}",
        cert.trace_k, cert.noncompact_witnessed
    ))
}

#[derive(Serialize)]
struct CmvOut<'a> {
    config: Echo<'a, CmvCheckArgs>,
    defect: f64,
    threshold: f64,
    passed: bool,
}

fn cmv_check(a: &CmvCheckArgs) -> Outcome {
    let dist = nu(&a.nu)?;
    let om = phases(&dist, a.seed, half_range(a.size)?)?;
    let v = correlated_verblunski(&om, a.r)?;
    let defect = cmv_conjugation_check(&v, a.beta0, a.size)?;
    let passed = defect < CMV_THRESHOLD;
    let body = match a.output.format.unwrap_or(Format::Json) {
        Format::Csv => format!("r,size,seed,defect\n{},{},{},{}\n", sci17(a.r), a.size, a.seed, sci17(defect)),
        Format::Json => json_line(&CmvOut {
            config: echo("cmv-check", a),
            defect,
            threshold: CMV_THRESHOLD,
            passed,
        }),
    };
    let dest = write_artifact(&a.output, &body)?;
    if !passed {
        return Err(Failure::numerical(format!(
            "CMV conjugation defect {defect:e} reaches {CMV_THRESHOLD:e}"
        )));
    }
    Ok(format!("cmv-check: interior defect {defect:e} < {CMV_THRESHOLD:e}; {dest}"))
}

#[derive(Serialize)]
struct CyclicityOut<'a> {
    config: Echo<'a, CyclicityArgs>,
    sites: &'a [i64],
    span_order: usize,
    #[serde(flatten)]
    report: &'a KrylovReport,
}

fn cyclicity(a: &CyclicityArgs) -> Outcome {
    let p = params(a.t)?;
    let dist = nu(&a.nu)?;
    let range = match a.lattice {
        Lattice::Full => full_range(a.size, None)?,
        Lattice::Half => half_range(a.size)?,
    };
    let om = phases(&dist, a.seed, range)?;
    let w = match (a.operator, a.lattice) {
        (OperatorKind::Diagonal, _) => build_diagonal(&om, range)?,
        (OperatorKind::U, Lattice::Full) => build_u_window(&p, &om, range, 0.0)?,
        (OperatorKind::U, Lattice::Half) => build_u_plus(&p, &om, a.size, 0.0)?,
    };
    let sites: Vec<i64> = match (&a.sites, a.lattice) {
        (Some(s), _) => parse_list(s, "site")?,
        (None, Lattice::Full) => vec![-1, 0],
        (None, Lattice::Half) => vec![0],
    };
    if sites.is_empty() {
        return Err(Failure::invalid("no sites given"));
    }
    let span = a.span_order.unwrap_or(a.size.div_ceil(sites.len()));
    let rep = krylov_cyclicity(&w, &sites, span)?;
    let body = match a.output.format.unwrap_or(Format::Json) {
        Format::Csv => {
            let mut s = String::from("index,singular_value\n");
            for (i, v) in rep.singular_values.iter().enumerate() {
                s.push_str(&format!("{i},{}\n", sci17(*v)));
            }
            s
        }
        Format::Json => json_line(&CyclicityOut {
            config: echo("cyclicity", a),
            sites: &sites,
            span_order: span,
            report: &rep,
        }),
    };
    let dest = write_artifact(&a.output, &body)?;
    Ok(format!(
        "cyclicity: numerical rank {} of {}, orthonormalized rank {}; {dest}",
        rep.rank,
        w.size(),
        rep.arnoldi_rank
    ))
}

fn selftest(a: &SelftestArgs, exec: Exec) -> Outcome {
    let ids: Vec<u8> = match &a.criteria {
        Some(s) => parse_list(s, "criterion")?,
        None => CRITERIA.to_vec(),
    };
    let mut outcomes: Vec<CriterionOutcome> = Vec::new();
    for id in ids {
        let o = run_criterion(id, exec)?;
        eprint!("{o}");
        outcomes.push(o);
    }
    let body = match a.output.format.unwrap_or(Format::Json) {
        Format::Csv => {
            let mut s = String::from("criterion,title,check,value,bound,passed\n");
            for o in &outcomes {
                for c in &o.checks {
                    s.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        o.id,
                        csv_field(&o.title),
                        csv_field(&c.name),
                        sci17(c.value),
                        csv_field(&c.bound),
                        c.passed
                    ));
                }
            }
            s
        }
        Format::Json => json_line(&outcomes),
    };
    let dest = write_artifact(&a.output, &body)?;
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed())
        .map(|o| o.id.to_string())
        .collect();
    if failed.is_empty() {
        Ok(format!("selftest: {} criteria passed; {dest}", outcomes.len()))
    } else {
        Err(Failure::numerical(format!(
            "selftest: criteria {} failed; {dest}",
            failed.join(", ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_grid_includes_both_ends() {
        let g = alpha_grid("0,1,5").unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(alpha_grid("2,9,1").unwrap(), vec![2.0]);
        assert!(alpha_grid("0,1").is_err());
        assert!(alpha_grid("0,1,0").is_err());
        assert!(alpha_grid("a,1,3").is_err());
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("T(θ,η)"), "\"T(θ,η)\"");
    }

    #[test]
    fn error_codes() {
        assert_eq!(Failure::from(Error::Parse("x".into())).code, 2);
        let e = Error::NumericalCheck {
            what: "unitarity".into(),
            defect: 1.0,
            threshold: 0.0,
        };
        assert_eq!(Failure::from(e).code, 3);
    }
}
