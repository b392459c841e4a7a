//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::demo::{self, ContinuousDiag, ExampleId};
use crate::discovery::{discover, DiscoveryConfig, DiscoveryRow, WeightRule};
use crate::error::{Error, Result};
use crate::fir::{fir_realize, FirController, SparsityPattern};
use crate::fit::{fit_ct_controller, FitOptions, RationalTf, Structure, TfMatrix};
use crate::io::{self, CertificateSummary, ControllerFile};
use crate::lti::{
    close_loop, hinf_norm, hinf_norm_grid_with, zoh_discretize, GeneralizedPlant, NormGrid,
    StateSpace,
};
use crate::sdp::{backend_from_env, SdpBackend};
use crate::synthesis::{suggest_mu, synthesize, InnerMode, Synthesis, SynthesisConfig, TraceRow};

pub const EXIT_IO: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InfeasibleRelaxation(_) | Error::InnerInfeasible { .. } => EXIT_INFEASIBLE,
        Error::NoConvergence { .. } => EXIT_NO_CONVERGENCE,
        _ => EXIT_IO,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "sparse-hinf",
    version,
    about = "Sparse FIR H-infinity controller synthesis"
)]
pub struct Cli {
    #[arg(long, value_enum, default_value_t = OutputFormat::Text, global = true)]
    pub output: OutputFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Zero-order-hold discretization of a continuous plant.
    Discretize(DiscretizeArgs),
    /// Sparse FIR synthesis by alternating convex programs.
    Synth(SynthArgs),
    /// Sparsity pattern discovery by reweighted l1 minimization.
    Discover(DiscoverArgs),
    /// H-infinity norm of a plant's performance channel, open or closed loop.
    HinfNorm(HinfNormArgs),
    /// Fit continuous transfer functions to a discrete controller.
    FitCt(FitCtArgs),
    /// Run one of the bundled examples and compare against published numbers.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct DiscretizeArgs {
    #[arg(long)]
    pub plant: PathBuf,
    #[arg(long)]
    pub ts: f64,
    /// Write the discretized plant document here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub plant: PathBuf,
    /// Sample time used to discretize a continuous plant.
    #[arg(long)]
    pub ts: Option<f64>,
    /// Bound on the squared closed-loop norm; suggested when omitted.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Number of FIR taps (1 = static gain).
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Pattern document path, `full` or `diag`.
    #[arg(long, default_value = "full")]
    pub pattern: String,
    /// Iteration caps k0,k1,k2.
    #[arg(long, default_value = "10,5,2")]
    pub k: String,
    #[arg(long, default_value_t = 200)]
    pub max_outer: usize,
    /// Inner solve semantics: centered, solver-cap or staged-margin.
    #[arg(long, default_value = "centered")]
    pub inner: String,
    #[arg(long)]
    pub regularize_p0: bool,
    /// Recorded in the report; the pipeline itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also report the continuous closed-loop norm of a fitted equivalent.
    #[arg(long)]
    pub ct_norm: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Iteration trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[arg(long)]
    pub plant: PathBuf,
    #[arg(long)]
    pub ts: Option<f64>,
    #[arg(long)]
    pub mu: f64,
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    #[arg(long, default_value_t = 10)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long, default_value_t = crate::fir::DEFAULT_PATTERN_THRESHOLD)]
    pub rel_threshold: f64,
    /// Put eps inside the absolute value of the weight.
    #[arg(long)]
    pub eps_inside: bool,
    /// Pattern document output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub controller_out: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HinfNormArgs {
    #[arg(long)]
    pub plant: PathBuf,
    /// Close the loop with this controller first.
    #[arg(long)]
    pub controller: Option<PathBuf>,
    #[arg(long, default_value_t = 2048)]
    pub grid: usize,
}

#[derive(Debug, Args)]
pub struct FitCtArgs {
    #[arg(long)]
    pub controller: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub zeros: usize,
    /// Poles per entry; defaults to taps - 1.
    #[arg(long)]
    pub poles: Option<usize>,
    #[arg(long, default_value_t = 500)]
    pub n_freq: usize,
    /// Continuous plant for a closed-loop norm with the fitted controller.
    #[arg(long)]
    pub plant: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(value_parser = ["ex1", "ex2", "ex3"])]
    pub name: String,
    /// Also run pattern discovery (example 3; slow).
    #[arg(long)]
    pub discover: bool,
    /// Write synthesis traces as `<dir>/<label>.csv`.
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
}

fn load_plant(path: &Path) -> Result<GeneralizedPlant> {
    io::parse_plant(&io::read_to_string(path)?)
}

fn discrete_input(plant: GeneralizedPlant, ts: Option<f64>) -> Result<GeneralizedPlant> {
    match (plant.domain.is_discrete(), ts) {
        (true, None) => Ok(plant),
        (true, Some(_)) => Err(Error::InvalidArgument(
            "plant is already discrete; drop --ts".into(),
        )),
        (false, Some(ts)) => zoh_discretize(&plant, ts),
        (false, None) => Err(Error::InvalidArgument(
            "plant is continuous; pass --ts to discretize it".into(),
        )),
    }
}

pub fn parse_k(s: &str) -> Result<[u32; 3]> {
    let v: Vec<u32> = s
        .split(',')
        .map(|t| t.trim().parse::<u32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("--k: {e}")))?;
    <[u32; 3]>::try_from(v)
        .map_err(|v| Error::InvalidArgument(format!("--k needs three values, got {}", v.len())))
}

pub fn resolve_pattern(spec: &str, nu: usize, ny: usize) -> Result<SparsityPattern> {
    let s = match spec {
        "full" => SparsityPattern::full(nu, ny),
        "diag" => SparsityPattern::diagonal(nu, ny),
        path => io::parse_pattern(&io::read_to_string(Path::new(path))?)?,
    };
    if (s.nrows(), s.ncols()) != (nu, ny) {
        return Err(Error::Dimension(format!(
            "pattern is {}x{}, plant needs {nu}x{ny}",
            s.nrows(),
            s.ncols()
        )));
    }
    Ok(s)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn csv_text<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Numeric(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Numeric(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Trace CSV with columns `iter,stage,status,margin`.
pub fn synthesis_trace_csv(trace: &[TraceRow]) -> Result<String> {
    let mut text = csv_text(trace)?;
    if trace.is_empty() {
        text = "iter,stage,status,margin\n".into();
    }
    Ok(text)
}

pub fn discovery_trace_csv(trace: &[DiscoveryRow]) -> Result<String> {
    csv_text(trace)
}

/// Four significant digits, the way matrices are printed in tables.
pub fn sig4(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-4..=5).contains(&mag) {
        return format!("{v:.3e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn format_matrix(name: &str, m: &DMatrix<f64>) -> String {
    let cells: Vec<Vec<String>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| sig4(m[(i, j)])).collect())
        .collect();
    let width = cells.iter().flatten().map(|c| c.len()).max().unwrap_or(1);
    let mut out = format!("{name} =\n");
    for row in cells {
        let line: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
        out.push_str("  ");
        out.push_str(&line.join("  "));
        out.push('\n');
    }
    out
}

fn emit<T: Serialize>(fmt: OutputFormat, value: &T, text: impl FnOnce() -> String) -> String {
    match fmt {
        OutputFormat::Json => {
            serde_json::to_string_pretty(value).expect("report serializes") + "\n"
        }
        OutputFormat::Text => text(),
    }
}

#[derive(Debug, Serialize)]
struct DiscretizeReport {
    ts: f64,
    plant: io::PlantFile,
}

fn cmd_discretize(a: &DiscretizeArgs, fmt: OutputFormat) -> Result<String> {
    let plant = load_plant(&a.plant)?;
    if plant.domain.is_discrete() {
        return Err(Error::Domain("plant is already discrete".into()));
    }
    let d = zoh_discretize(&plant, a.ts)?;
    if let Some(out) = &a.out {
        write_file(out, &io::emit_plant(&d))?;
    }
    let report = DiscretizeReport {
        ts: a.ts,
        plant: io::PlantFile::from_plant(&d),
    };
    Ok(emit(fmt, &report, || {
        format!(
            "ZOH discretization at Ts = {}\n{}{}{}",
            a.ts,
            format_matrix("A", &d.a),
            format_matrix("B1", &d.b1),
            format_matrix("B2", &d.b2)
        )
    }))
}

#[derive(Debug, Serialize)]
pub struct SynthReport {
    pub mu: f64,
    pub mu_suggested: bool,
    pub n_f: usize,
    pub k: [u32; 3],
    pub inner: &'static str,
    pub seed: u64,
    pub outer_iterations: usize,
    pub min_eig_f: f64,
    pub discrete_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuous_norm: Option<f64>,
    pub warnings: Vec<String>,
    pub controller: ControllerFile,
}

/// Continuous closed-loop norm with each nonzero entry fitted by
/// `0` zeros and `n_f - 1` poles.
pub fn continuous_equivalent_norm(plant_ct: &GeneralizedPlant, k: &FirController) -> Result<f64> {
    let poles = k.n_taps() - 1;
    let fit = fit_ct_controller(k, |_, _| Structure::new(0, poles), &FitOptions::default())?;
    if fit.any_reflected() {
        warn!("fitted controller had right half-plane poles; they were mirrored");
    }
    hinf_norm(&close_loop(plant_ct, &fit.tf.to_state_space())?)
}

fn cmd_synth(a: &SynthArgs, fmt: OutputFormat, backend: &dyn SdpBackend) -> Result<String> {
    let source = load_plant(&a.plant)?;
    let plant = discrete_input(source.clone(), a.ts)?;
    let d = plant.dims();
    let pattern = resolve_pattern(&a.pattern, d.nu, d.ny)?;
    let inner = InnerMode::parse(&a.inner)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown inner mode {:?}", a.inner)))?;
    let (mu, mu_suggested) = match a.mu {
        Some(mu) => (mu, false),
        None => (suggest_mu(&plant, backend)?, true),
    };
    let mut cfg = SynthesisConfig::new(mu, a.order, pattern.clone());
    cfg.k = parse_k(&a.k)?;
    cfg.max_outer = a.max_outer;
    cfg.regularize_p0 = a.regularize_p0;
    cfg.inner = inner;
    let k = cfg.k;
    let s = synthesize(&plant, cfg, backend)?;
    if let Some(path) = &a.trace {
        write_file(path, &synthesis_trace_csv(&s.trace)?)?;
    }
    let continuous_norm = if a.ct_norm && !source.domain.is_discrete() {
        Some(continuous_equivalent_norm(&source, &s.controller)?)
    } else {
        None
    };
    let report = synth_report(
        &s,
        mu,
        mu_suggested,
        k,
        inner,
        a.seed,
        &pattern,
        continuous_norm,
    );
    if let Some(out) = &a.out {
        write_file(out, &io::emit_controller(&report.controller))?;
    }
    Ok(emit(fmt, &report, || synth_text(&report)))
}

#[allow(clippy::too_many_arguments)]
fn synth_report(
    s: &Synthesis,
    mu: f64,
    mu_suggested: bool,
    k: [u32; 3],
    inner: InnerMode,
    seed: u64,
    pattern: &SparsityPattern,
    continuous_norm: Option<f64>,
) -> SynthReport {
    let cert = &s.certificate;
    SynthReport {
        mu,
        mu_suggested,
        n_f: s.controller.n_taps(),
        k,
        inner: inner.name(),
        seed,
        outer_iterations: s.outer_iterations,
        min_eig_f: cert.min_eig_f,
        discrete_norm: cert.closed_loop_norm,
        continuous_norm,
        warnings: s.warnings.clone(),
        controller: ControllerFile::from_controller(
            &s.controller,
            Some(pattern),
            Some(CertificateSummary {
                mu,
                min_eig_f: cert.min_eig_f,
                closed_loop_norm: cert.closed_loop_norm,
            }),
        ),
    }
}

fn synth_text(r: &SynthReport) -> String {
    let mut out = String::new();
    out += &format!(
        "mu = {}{}\nk = {:?}  inner = {}  seed = {}\n",
        r.mu,
        if r.mu_suggested { " (suggested)" } else { "" },
        r.k,
        r.inner,
        r.seed
    );
    out += &format!(
        "outer iterations = {}\nmin eig F = {:.4e}\ndiscrete closed-loop norm = {:.6}\n",
        r.outer_iterations, r.min_eig_f, r.discrete_norm
    );
    if let Some(n) = r.continuous_norm {
        out += &format!("continuous closed-loop norm (fitted) = {n:.6}\n");
    }
    for w in &r.warnings {
        out += &format!("warning: {w}\n");
    }
    for (i, t) in r.controller.taps.iter().enumerate() {
        let m = DMatrix::from_fn(t.len(), t.first().map_or(0, |r| r.len()), |a, b| t[a][b]);
        out += &format_matrix(&format!("Q{i}"), &m);
    }
    out
}

#[derive(Debug, Serialize)]
struct DiscoverReport {
    mu: f64,
    n_f: usize,
    max_iter: usize,
    eps: f64,
    weight_rule: WeightRule,
    non_monotone: bool,
    pattern: Vec<Vec<u8>>,
    trace: Vec<DiscoveryRow>,
}

fn cmd_discover(a: &DiscoverArgs, fmt: OutputFormat, backend: &dyn SdpBackend) -> Result<String> {
    let plant = discrete_input(load_plant(&a.plant)?, a.ts)?;
    let mut cfg = DiscoveryConfig::new(a.mu, a.order, a.max_iter);
    cfg.eps = a.eps;
    cfg.rel_threshold = a.rel_threshold;
    if a.eps_inside {
        cfg.rule = WeightRule::InsideAbs;
    }
    let d = discover(&plant, &cfg, backend)?;
    if let Some(path) = &a.out {
        write_file(path, &io::emit_pattern(&d.pattern))?;
    }
    if let Some(path) = &a.controller_out {
        let f = ControllerFile::from_controller(&d.controller, Some(&d.pattern), None);
        write_file(path, &io::emit_controller(&f))?;
    }
    if let Some(path) = &a.trace {
        write_file(path, &discovery_trace_csv(&d.trace)?)?;
    }
    let report = DiscoverReport {
        mu: a.mu,
        n_f: a.order,
        max_iter: a.max_iter,
        eps: a.eps,
        weight_rule: cfg.rule,
        non_monotone: d.non_monotone,
        pattern: d.pattern.to_rows(),
        trace: d.trace,
    };
    Ok(emit(fmt, &report, || {
        let mut out = String::from("iter  objective  nonzeros\n");
        for r in &report.trace {
            out += &format!("{:4}  {:9.4}  {:8}\n", r.iter, r.objective, r.nonzeros);
        }
        if report.non_monotone {
            out += "note: nonzero count rose near the end of the run\n";
        }
        out += "pattern:\n";
        for row in &report.pattern {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out += &format!("  {}\n", cells.join(" "));
        }
        out
    }))
}

#[derive(Debug, Serialize)]
struct NormReport {
    norm: f64,
    peak_frequency: f64,
    domain: &'static str,
    closed_loop: bool,
}

fn cmd_hinf_norm(a: &HinfNormArgs, fmt: OutputFormat) -> Result<String> {
    let plant = load_plant(&a.plant)?;
    let sys = match &a.controller {
        Some(path) => {
            let k = io::parse_controller(&io::read_to_string(path)?)?.to_controller()?;
            close_loop(&plant, &fir_realize(&k))?
        }
        None => plant.performance_channel(),
    };
    let cfg = NormGrid {
        n_grid: a.grid,
        ..NormGrid::default()
    };
    let n = hinf_norm_grid_with(&sys, &cfg)?;
    let report = NormReport {
        norm: n.value,
        peak_frequency: n.peak_frequency,
        domain: if sys.domain.is_discrete() {
            "discrete"
        } else {
            "continuous"
        },
        closed_loop: a.controller.is_some(),
    };
    Ok(emit(fmt, &report, || {
        format!(
            "H-infinity norm = {:.6} at w = {:.6} rad/s ({})\n",
            report.norm, report.peak_frequency, report.domain
        )
    }))
}

#[derive(Debug, Serialize)]
struct FitEntryReport {
    row: usize,
    col: usize,
    num: Vec<f64>,
    den: Vec<f64>,
    residual: f64,
    reflected: bool,
}

#[derive(Debug, Serialize)]
struct FitReport {
    entries: Vec<FitEntryReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    continuous_norm: Option<f64>,
}

fn cmd_fit_ct(a: &FitCtArgs, fmt: OutputFormat) -> Result<String> {
    let k = io::parse_controller(&io::read_to_string(&a.controller)?)?.to_controller()?;
    let poles = a.poles.unwrap_or(k.n_taps() - 1);
    let opts = FitOptions {
        n_freq: a.n_freq,
        ..FitOptions::default()
    };
    let fit = fit_ct_controller(&k, |_, _| Structure::new(a.zeros, poles), &opts)?;
    let mut entries = Vec::new();
    for (i, row) in fit.fits.iter().enumerate() {
        for (j, f) in row.iter().enumerate() {
            if let Some(f) = f {
                entries.push(FitEntryReport {
                    row: i,
                    col: j,
                    num: f.tf.num.clone(),
                    den: f.tf.den.clone(),
                    residual: f.residual,
                    reflected: f.reflected,
                });
            }
        }
    }
    let continuous_norm = match &a.plant {
        Some(p) => {
            let plant = load_plant(p)?;
            if plant.domain.is_discrete() {
                return Err(Error::Domain("--plant must be continuous".into()));
            }
            Some(hinf_norm(&close_loop(&plant, &fit.tf.to_state_space())?)?)
        }
        None => None,
    };
    let report = FitReport {
        entries,
        continuous_norm,
    };
    Ok(emit(fmt, &report, || {
        let mut out = String::new();
        for e in &report.entries {
            out += &format!(
                "K({},{}) = {} / {}   residual {:.2e}{}\n",
                e.row + 1,
                e.col + 1,
                poly_text(&e.num),
                poly_text(&e.den),
                e.residual,
                if e.reflected {
                    "  (poles mirrored)"
                } else {
                    ""
                }
            );
        }
        if let Some(n) = report.continuous_norm {
            out += &format!("continuous closed-loop norm = {n:.6}\n");
        }
        out
    }))
}

fn poly_text(c: &[f64]) -> String {
    let n = c.len() - 1;
    let terms: Vec<String> = c
        .iter()
        .enumerate()
        .map(|(i, v)| match n - i {
            0 => sig4(*v),
            1 => format!("{} s", sig4(*v)),
            p => format!("{} s^{p}", sig4(*v)),
        })
        .collect();
    format!("({})", terms.join(" + "))
}

/// One line of the demo comparison table.
#[derive(Clone, Debug, Serialize)]
pub struct DemoRow {
    pub item: String,
    pub domain: &'static str,
    pub published: Option<f64>,
    pub achieved: Option<f64>,
    pub replay: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct DemoReport {
    pub example: &'static str,
    pub ts: f64,
    pub rows: Vec<DemoRow>,
    pub notes: Vec<String>,
}

fn diag_tf(d: &ContinuousDiag) -> TfMatrix {
    TfMatrix::from_diagonal(
        d.iter()
            .map(|(n, den)| {
                RationalTf::new(n.clone(), den.clone()).expect("published coefficients are valid")
            })
            .collect(),
    )
}

/// Embed a diagonal transfer matrix into the slots of a larger one.
fn embed_tf(small: TfMatrix, slots: &[usize], n: usize) -> TfMatrix {
    let mut entries = vec![vec![None; n]; n];
    for (k, &s) in slots.iter().enumerate() {
        entries[s][s] = small.entries[k][k].clone();
    }
    TfMatrix { entries }
}

fn replay_discrete(plant: &GeneralizedPlant, k: &FirController) -> Result<f64> {
    hinf_norm(&close_loop(plant, &fir_realize(k))?)
}

fn replay_continuous(plant_ct: &GeneralizedPlant, k: &StateSpace) -> Result<f64> {
    hinf_norm(&close_loop(plant_ct, k)?)
}

fn static_continuous(k: &FirController) -> StateSpace {
    StateSpace::static_gain(k.tap(0).clone(), crate::lti::Domain::Continuous)
        .expect("static gain is consistent")
}

struct Run {
    label: &'static str,
    n_f: usize,
    mu: f64,
    k: [u32; 3],
    published: f64,
    /// Compare the static gain on the continuous plant.
    continuous: bool,
}

fn run_synthesis(
    ex: ExampleId,
    run: &Run,
    backend: &dyn SdpBackend,
    trace_dir: Option<&Path>,
) -> (Option<Synthesis>, DemoRow) {
    let mut row = DemoRow {
        item: run.label.to_string(),
        domain: if run.continuous {
            "continuous"
        } else {
            "discrete"
        },
        published: Some(run.published),
        achieved: None,
        replay: None,
        note: format!(
            "synthesis, n_f = {}, mu = {}, k = {:?}",
            run.n_f, run.mu, run.k
        ),
    };
    let plant = match ex.discrete_plant() {
        Ok(p) => p,
        Err(e) => {
            row.note = e.to_string();
            return (None, row);
        }
    };
    let mut cfg = SynthesisConfig::new(run.mu, run.n_f, ex.pattern());
    cfg.k = run.k;
    match synthesize(&plant, cfg, backend) {
        Ok(s) => {
            if let Some(dir) = trace_dir {
                let path = dir.join(format!("{}_{}.csv", ex.name(), run.label.replace(' ', "_")));
                if let Err(e) = synthesis_trace_csv(&s.trace).and_then(|t| write_file(&path, &t)) {
                    warn!("could not write trace: {e}");
                }
            }
            row.achieved = if run.continuous {
                replay_continuous(&ex.continuous_plant(), &static_continuous(&s.controller)).ok()
            } else {
                Some(s.certificate.closed_loop_norm)
            };
            row.note += &format!(", {} outer iterations", s.outer_iterations);
            (Some(s), row)
        }
        Err(e) => {
            row.note += &format!(": {e}");
            (None, row)
        }
    }
}

fn replay_row(item: &str, domain: &'static str, published: f64, value: Result<f64>) -> DemoRow {
    let (replay, note) = match value {
        Ok(v) => (Some(v), "published controller".to_string()),
        Err(e) => (None, e.to_string()),
    };
    DemoRow {
        item: item.to_string(),
        domain,
        published: Some(published),
        achieved: None,
        replay,
        note,
    }
}

fn fit_row(item: &str, published: f64, plant_ct: &GeneralizedPlant, k: &FirController) -> DemoRow {
    let (achieved, note) = match continuous_equivalent_norm(plant_ct, k) {
        Ok(v) => (
            Some(v),
            format!("frequency-domain fit, {} pole(s) per entry", k.n_taps() - 1),
        ),
        Err(e) => (None, e.to_string()),
    };
    DemoRow {
        item: item.to_string(),
        domain: "continuous",
        published: Some(published),
        achieved,
        replay: None,
        note,
    }
}

pub fn demo_report(
    ex: ExampleId,
    with_discovery: bool,
    backend: &dyn SdpBackend,
    trace_dir: Option<&Path>,
) -> Result<DemoReport> {
    let plant_ct = ex.continuous_plant();
    let plant = ex.discrete_plant()?;
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    match ex {
        ExampleId::Ex1 => {
            rows.push(replay_row(
                "K0",
                "continuous",
                1.85,
                replay_continuous(&plant_ct, &static_continuous(&demo::ex1_k0())),
            ));
            rows.push(replay_row(
                "K1",
                "discrete",
                1.9043,
                replay_discrete(&plant, &demo::ex1_k1()),
            ));
            rows.push(replay_row(
                "K1 continuous equivalent",
                "continuous",
                1.9517,
                replay_continuous(
                    &plant_ct,
                    &diag_tf(&demo::ex1_k1_continuous()).to_state_space(),
                ),
            ));
            rows.push(replay_row(
                "K2",
                "discrete",
                1.9795,
                replay_discrete(&plant, &demo::ex1_k2()),
            ));
            rows.push(replay_row(
                "K2 continuous equivalent",
                "continuous",
                1.9711,
                replay_continuous(
                    &plant_ct,
                    &diag_tf(&demo::ex1_k2_continuous()).to_state_space(),
                ),
            ));
            rows.push(fit_row("K1 refit", 1.9517, &plant_ct, &demo::ex1_k1()));
            let runs = [
                Run {
                    label: "K0 synth",
                    n_f: 1,
                    mu: 24.0,
                    k: [10, 5, 2],
                    published: 1.85,
                    continuous: true,
                },
                Run {
                    label: "K1 synth",
                    n_f: 2,
                    mu: 9.0,
                    k: [10, 5, 2],
                    published: 1.9043,
                    continuous: false,
                },
                Run {
                    label: "K2 synth",
                    n_f: 3,
                    mu: 9.0,
                    k: [12, 5, 2],
                    published: 1.9795,
                    continuous: false,
                },
            ];
            for run in &runs {
                let (s, row) = run_synthesis(ex, run, backend, trace_dir);
                rows.push(row);
                if let (Some(s), 2) = (s, run.n_f) {
                    rows.push(fit_row("K1 synth refit", 1.9517, &plant_ct, &s.controller));
                }
            }
            notes.push("benchmark from the literature: 1.995".into());
        }
        ExampleId::Ex2 => {
            rows.push(replay_row(
                "K1",
                "discrete",
                0.0163,
                replay_discrete(&plant, &demo::ex2_k1()),
            ));
            rows.push(replay_row(
                "K0",
                "discrete",
                0.0165,
                replay_discrete(&plant, &demo::ex2_k0()),
            ));
            rows.push(replay_row(
                "K1 continuous equivalent",
                "continuous",
                0.0163,
                replay_continuous(
                    &plant_ct,
                    &embed_tf(diag_tf(&demo::ex2_k1_continuous()), &[1, 4], 5).to_state_space(),
                ),
            ));
            rows.push(fit_row("K1 refit", 0.0163, &plant_ct, &demo::ex2_k1()));
            let runs = [
                Run {
                    label: "K1 synth",
                    n_f: 2,
                    mu: 0.1,
                    k: [2, 5, 2],
                    published: 0.0163,
                    continuous: false,
                },
                Run {
                    label: "K0 synth",
                    n_f: 1,
                    mu: 0.1,
                    k: [2, 5, 2],
                    published: 0.0165,
                    continuous: false,
                },
            ];
            for run in &runs {
                rows.push(run_synthesis(ex, run, backend, trace_dir).1);
            }
            notes.push("all four D blocks are taken as zero, including D21".into());
        }
        ExampleId::Ex3 => {
            rows.push(replay_row(
                "Kv",
                "discrete",
                8.2909,
                replay_discrete(&plant, &demo::ex3_kv()),
            ));
            let run = Run {
                label: "Kv synth",
                n_f: 1,
                mu: 83.0,
                k: [10, 5, 2],
                published: 8.2909,
                continuous: false,
            };
            rows.push(run_synthesis(ex, &run, backend, trace_dir).1);
            if with_discovery {
                let cfg = DiscoveryConfig::new(80.0, 2, 40);
                let note = match discover(&plant, &cfg, backend) {
                    Ok(d) => {
                        let n = demo::EXAMPLE3_MASSES;
                        let mags = crate::fir::entry_magnitudes(&d.controller);
                        let kp = (0..n).flat_map(|i| (0..n).map(move |j| (i, j)));
                        let kp_max = kp.map(|(i, j)| mags[(i, j)]).fold(0.0, f64::max);
                        let kv_min = (0..n)
                            .map(|i| mags[(i, n + i)])
                            .fold(f64::INFINITY, f64::min);
                        format!(
                            "discovery (mu = 80, n_f = 2, N = 40): {} nonzero entries, max |Kp| = {kp_max:.4}, min |Kv diag| = {kv_min:.4}",
                            d.pattern.count_nonzero()
                        )
                    }
                    Err(e) => format!("discovery failed: {e}"),
                };
                notes.push(note);
            }
            notes
                .push("D22 is set to zero; the printed D12 = D22 block is read as D12 only".into());
            notes.push(
                "velocity rows use +T with T tridiagonal (-2 on the diagonal); the printed -T would model negative springs"
                    .into(),
            );
        }
    }
    Ok(DemoReport {
        example: ex.name(),
        ts: ex.sample_time(),
        rows,
        notes,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.4}"))
}

pub fn demo_text(r: &DemoReport) -> String {
    let mut out = format!("{} (Ts = {})\n", r.example, r.ts);
    out += &format!(
        "{:<26} {:<10} {:>8} {:>9} {:>8}  note\n",
        "item", "domain", "published", "achieved", "replay"
    );
    for row in &r.rows {
        out += &format!(
            "{:<26} {:<10} {:>8} {:>9} {:>8}  {}\n",
            row.item,
            row.domain,
            opt(row.published),
            opt(row.achieved),
            opt(row.replay),
            row.note
        );
    }
    for n in &r.notes {
        out += &format!("note: {n}\n");
    }
    out
}

fn cmd_demo(a: &DemoArgs, fmt: OutputFormat, backend: &dyn SdpBackend) -> Result<String> {
    let ex = ExampleId::parse(&a.name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown example {}", a.name)))?;
    if let Some(dir) = &a.trace_dir {
        std::fs::create_dir_all(dir)?;
    }
    let report = demo_report(ex, a.discover, backend, a.trace_dir.as_deref())?;
    Ok(emit(fmt, &report, || demo_text(&report)))
}

/// Run a parsed command line; returns the text to print.
pub fn execute(cli: &Cli) -> Result<String> {
    let fmt = cli.output;
    match &cli.command {
        Command::Discretize(a) => cmd_discretize(a, fmt),
        Command::HinfNorm(a) => cmd_hinf_norm(a, fmt),
        Command::FitCt(a) => cmd_fit_ct(a, fmt),
        Command::Synth(a) => cmd_synth(a, fmt, backend_from_env()?.as_ref()),
        Command::Discover(a) => cmd_discover(a, fmt, backend_from_env()?.as_ref()),
        Command::Demo(a) => cmd_demo(a, fmt, backend_from_env()?.as_ref()),
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_IO } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
