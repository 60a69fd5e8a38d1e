//! `bandloc`: seeded, reproducible runs of every experiment in the library.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "bandloc",
    version,
    about = "Random unitary band matrices: windows, Lyapunov exponents, spectra, localization",
    args_override_self = true,
    after_help = "Exit status: 0 success, 2 invalid input or unwritable output, 3 failed numerical check.\n\
                  Angles are radians. Floats are written with 17 significant digits.\n\
                  A config file holds key=value lines named after long flags; flags override it."
)]
pub struct Cli {
    /// Flat key=value file; may also name the subcommand as `subcommand=...`.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Worker threads [default: available parallelism].
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dump a finite window of one of the operators.
    #[command(after_help = "CSV: row,col,re,im over the nonzero entries, local 0-based indices; \
                            with --out a header <out>.header.json {flavor,size,offset,t,seed} is written next to it.\n\
                            JSON: {config, header, entries: [[row, col, re, im], ...]}.")]
    Build(BuildArgs),
    /// Lyapunov exponents of the transfer cocycle over an α grid.
    #[command(after_help = "CSV (default): alpha,gamma_hat,stderr,gamma_per_site,steps,runs,t,nu_spec,seed \
                            (forward direction; gamma per transfer step).\n\
                            JSON: {config, pairs: [{forward, backward}]} with both directions.")]
    Lyapunov(LyapunovArgs),
    /// Eigenphases of one window and their distance to the almost sure spectrum.
    #[command(after_help = "CSV: index,phase,distance_to_sigma,edge_mass,insulated.\n\
                            JSON (default): {config, sigma, residual, containment_fraction, eigenvectors: \
                            [{phase, participation_ratio, edge_mass, insulated, decay_rate, distance_to_sigma}]}.")]
    Spectrum(SpectrumArgs),
    /// Localization report over independent realizations.
    #[command(after_help = "JSON (default): {config, report: {nu, t, window, offset, seed, options, sigma, \
                            lyapunov_reference, realizations, summary, calibration_note}}.\n\
                            CSV: eigenphase histogram bin_center,count.")]
    Localize(LocalizeArgs),
    /// Spectral averaging over the phase at site 0.
    #[command(after_help = "CSV: n,re,im,abs for the averaged moments n = 0..10.\n\
                            JSON (default): {config, grid, moments: [{n, re, im, abs}]}.")]
    Average(AverageArgs),
    /// Non-compactness certificate for the pair (θ, η).
    #[command(after_help = "JSON (default): {config, certificate: {t, r, theta, eta, c, e, l, j, k, structure, \
                            trace_k, trace_k_formula, max_eigenvalue_k, identity_defects, noncompact_witnessed}, \
                            growth_rate}.\nCSV: quantity,value.")]
    Fuerstenberg(FuerstenbergArgs),
    /// Interior defect of the CMV conjugation identity.
    #[command(after_help = "JSON (default): {config, defect, threshold, passed}. CSV: r,size,seed,defect.\n\
                            Exits 3 when the defect reaches the threshold.")]
    CmvCheck(CmvCheckArgs),
    /// Numerical rank of the Krylov vectors of the given sites.
    #[command(after_help = "JSON (default): {config, rank, arnoldi_rank, arnoldi_min_ratio, singular_values, powers}.\n\
                            CSV: index,singular_value.")]
    Cyclicity(CyclicityArgs),
    /// Run the acceptance criteria.
    #[command(after_help = "JSON (default): [{id, title, checks: [{name, value, bound, passed}]}].\n\
                            CSV: criterion,title,check,value,bound,passed.\n\
                            Exits 3 when a criterion fails.")]
    Selftest(SelftestArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    /// Output file [default: stdout].
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    S,
    SPlus,
    U,
    UPlus,
    Diagonal,
    Cmv,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Lattice {
    Full,
    Half,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMode {
    Scalar,
    Wrap,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    U,
    Diagonal,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BuildArgs {
    #[arg(long, value_enum, default_value = "u")]
    pub flavor: Flavor,
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    /// Phase distribution: uniform | arc:<c>,<h> | atoms:<p>@<w>;... | mix:<w>,arc:<c>,<h>,atoms:...
    #[arg(long, default_value = "uniform")]
    pub nu: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub size: usize,
    /// Lowest lattice index of full-lattice windows; even [default: about -size/2].
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<i64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "scalar")]
    pub boundary: EdgeMode,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct LyapunovArgs {
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, default_value = "uniform")]
    pub nu: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// start,end,points; equally spaced, both ends included.
    #[arg(long, default_value = "0,6.283185307179586,32", allow_hyphen_values = true)]
    pub alpha_grid: String,
    /// Transfer steps per run after burn-in.
    #[arg(long, default_value_t = 100_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 16)]
    pub runs: usize,
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SpectrumArgs {
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, default_value = "uniform")]
    pub nu: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub size: usize,
    #[arg(long, value_enum, default_value = "full")]
    pub lattice: Lattice,
    /// Fattening of the almost sure spectrum.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub alpha: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct LocalizeArgs {
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, default_value = "uniform")]
    pub nu: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub window: usize,
    #[arg(long, default_value_t = 10)]
    pub realizations: usize,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Sites per edge used by the boundary-insulation filter.
    #[arg(long, default_value_t = 10)]
    pub edge_sites: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub edge_mass: f64,
    #[arg(long, default_value_t = 64)]
    pub bins: usize,
    #[arg(long, default_value_t = 20_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Points of the α grid for the Lyapunov reference.
    #[arg(long, default_value_t = 16)]
    pub lyapunov_grid: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AverageArgs {
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, default_value = "uniform")]
    pub nu: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub size: usize,
    /// Equally spaced θ₀ values, at least 64.
    #[arg(long, default_value_t = 256)]
    pub grid: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FuerstenbergArgs {
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 3.141592653589793, allow_hyphen_values = true)]
    pub eta: f64,
    /// Power of K used for the growth rate ‖Kⁿ‖^{1/n}.
    #[arg(long, default_value_t = 64)]
    pub powers: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CmvCheckArgs {
    /// Modulus of the Verblunski coefficients.
    #[arg(long, default_value_t = 0.6)]
    pub r: f64,
    #[arg(long, default_value = "uniform")]
    pub nu: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub size: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta0: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CyclicityArgs {
    #[arg(long, default_value_t = 0.5)]
    pub t: f64,
    #[arg(long, default_value = "uniform")]
    pub nu: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub size: usize,
    #[arg(long, value_enum, default_value = "full")]
    pub lattice: Lattice,
    /// `diagonal` drops S and keeps the phases only.
    #[arg(long, value_enum, default_value = "u")]
    pub operator: OperatorKind,
    /// Comma-separated lattice sites [default: -1,0 full, 0 half].
    #[arg(long, allow_hyphen_values = true)]
    pub sites: Option<String>,
    /// Krylov powers per site [default: size / number of sites, rounded up].
    #[arg(long)]
    pub span_order: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SelftestArgs {
    /// Comma-separated criterion numbers [default: all].
    #[arg(long)]
    pub criteria: Option<String>,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

fn main() -> ExitCode {
    let names: Vec<String> = Cli::command()
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    let args = match config::merge_args(std::env::args().collect(), &names) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(summary) => {
            eprintln!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
