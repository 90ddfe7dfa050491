//! Command-line front end. Every run writes its artifacts plus a
//! `manifest.json` into `--out`; `rerun` replays a manifest.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bessel::{oracle_compare, OracleForcing};
use crate::diffusive::{build_xi_quadrature, kernel_check, DEFAULT_N_XI, DEFAULT_XI_MAX, DEFAULT_XI_MIN};
use crate::error::{Error, Result};
use crate::evolution::{default_fit_window, fit_decay_exponent, prepare_initial_state, simulate, InitialPreset};
use crate::fit::log_space;
use crate::manifest::{GridParams, InitialKind, RunInputs, RunManifest, RunStatus, ScanTarget};
use crate::model::{Kappa, KappaTable, ProblemSpec, Variant};
use crate::resolvent::{fit_scan, resolvent_norms, theoretical_exponents, DiagonalStub, Regime, ResolventScan};
use crate::spatial::{assemble_operator, build_x_grid, default_grade, SystemOperator};

/// Maximum relative kernel error accepted by `verify-kernel`.
pub const KERNEL_TOLERANCE: f64 = 1e-4;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_THRESHOLD: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "degschro", version, about = "Degenerate Schrödinger equations with fractional boundary damping")]
pub struct Cli {
    /// Problem description (JSON); command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Time integration with energy trace and decay-rate fit.
    Simulate(SimulateArgs),
    /// Resolvent norm scan along the imaginary axis.
    Scan(ScanArgs),
    /// Compare the diffusive kernel with its closed form.
    VerifyKernel(VerifyKernelArgs),
    /// Refinement study against the Bessel-function resolvent.
    OracleCompare(OracleArgs),
    /// Repeat the run recorded in a manifest.
    Rerun(RerunArgs),
    /// Write the assembled generator in coordinate format.
    ExportOperator(ExportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProblemArg {
    #[value(name = "P")]
    P,
    #[value(name = "Pprime", alias = "pprime", alias = "P'")]
    Pprime,
}

impl From<ProblemArg> for Variant {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::P => Variant::P,
            ProblemArg::Pprime => Variant::Pprime,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct PhysicsArgs {
    #[arg(long, value_enum, ignore_case = true)]
    pub problem: Option<ProblemArg>,
    /// Exponent of kappa(x) = x^alpha.
    #[arg(long, conflicts_with = "kappa")]
    pub alpha: Option<f64>,
    /// CSV table of kappa samples with header `x,kappa`.
    #[arg(long, value_name = "FILE")]
    pub kappa: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[arg(long, default_value_t = 400)]
    pub nx: usize,
    /// Mesh grading exponent (default: 1, or 2 for strong degeneracy).
    #[arg(long)]
    pub grade: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_N_XI)]
    pub nxi: usize,
    #[arg(long, default_value_t = DEFAULT_XI_MIN)]
    pub xi_min: f64,
    #[arg(long, default_value_t = DEFAULT_XI_MAX)]
    pub xi_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitialArg {
    SmoothBump,
    LowestMode,
    #[value(hide = true)]
    Zero,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 200.0)]
    pub t_final: f64,
    #[arg(long, default_value_t = 0.005)]
    pub dt: f64,
    #[arg(long, value_enum, default_value = "smooth-bump")]
    pub y0: InitialArg,
    /// `LO:HI`; defaults to the last decade of the run.
    #[arg(long, value_name = "LO:HI")]
    pub fit_window: Option<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Low,
    High,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub lambda_min: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, value_enum, default_value = "low")]
    pub regime: RegimeArg,
    /// Scan the diagonal stub `A = -I` of this size instead.
    #[arg(long, hide = true, value_name = "SIZE")]
    pub stub: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyKernelArgs {
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    pub tau_min: f64,
    #[arg(long, default_value_t = 1e2)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 41)]
    pub n_tau: usize,
    #[arg(long, default_value_t = DEFAULT_N_XI)]
    pub nxi: usize,
    #[arg(long, default_value_t = DEFAULT_XI_MIN)]
    pub xi_min: f64,
    #[arg(long, default_value_t = DEFAULT_XI_MAX)]
    pub xi_max: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, value_delimiter = ',', default_value = "100,200,400,800,1600")]
    pub nx_list: Vec<usize>,
    #[arg(long, default_value_t = 3.0)]
    pub grade: f64,
    #[arg(long, default_value_t = DEFAULT_N_XI)]
    pub nxi: usize,
    #[arg(long, default_value_t = DEFAULT_XI_MIN)]
    pub xi_min: f64,
    #[arg(long, default_value_t = DEFAULT_XI_MAX)]
    pub xi_max: f64,
    /// Use zero forcing instead of unit boundary data.
    #[arg(long, hide = true)]
    pub zero_forcing: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RerunArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Problem fields accepted by `--config`, all optional so that flags can
/// fill the gaps.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub variant: Option<Variant>,
    pub alpha: Option<f64>,
    pub kappa_samples: Option<Vec<(f64, f64)>>,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => serde_json::from_slice(&fs::read(p)?)
                .map_err(|e| Error::Configuration(format!("{}: {e}", p.display()))),
        }
    }
}

pub fn read_kappa_csv(path: &Path) -> Result<KappaTable> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "kappa" {
        return Err(Error::Configuration(format!(
            "{}: expected header `x,kappa`",
            path.display()
        )));
    }
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Configuration(format!("{}: bad number `{s}`", path.display())))
        };
        samples.push((parse(&rec[0])?, parse(&rec[1])?));
    }
    KappaTable::new(&samples)
}

/// Merges the config file with the flags; flags win.
pub fn resolve_spec(cfg: &ConfigFile, p: &PhysicsArgs, default_variant: Option<Variant>) -> Result<ProblemSpec> {
    let variant = p
        .problem
        .map(Variant::from)
        .or(cfg.variant)
        .or(default_variant)
        .ok_or_else(|| Error::Configuration("--problem is required".into()))?;
    let kappa = match (p.alpha, &p.kappa, cfg.alpha, &cfg.kappa_samples) {
        (Some(alpha), _, _, _) => Kappa::PowerLaw { alpha },
        (None, Some(path), _, _) => Kappa::Tabulated(read_kappa_csv(path)?),
        (None, None, Some(alpha), None) => Kappa::PowerLaw { alpha },
        (None, None, None, Some(s)) => Kappa::Tabulated(KappaTable::new(s)?),
        (None, None, Some(_), Some(_)) => {
            return Err(Error::Configuration(
                "config gives both `alpha` and `kappa_samples`".into(),
            ))
        }
        (None, None, None, None) => {
            return Err(Error::Configuration("one of --alpha or --kappa is required".into()))
        }
    };
    let beta = p
        .beta
        .or(cfg.beta)
        .ok_or_else(|| Error::Configuration("--beta is required".into()))?;
    let rho = p.rho.or(cfg.rho).unwrap_or(1.0);
    ProblemSpec::new(variant, kappa, beta, rho, cfg.gamma.unwrap_or(0.0))
}

fn resolve_grid(spec: &ProblemSpec, g: &GridArgs) -> GridParams {
    GridParams {
        nx: g.nx,
        grade: g.grade.unwrap_or_else(|| default_grade(spec)),
        nxi: g.nxi,
        xi_min: g.xi_min,
        xi_max: g.xi_max,
    }
}

fn parse_window(s: &str) -> Result<[f64; 2]> {
    let bad = || Error::Configuration(format!("--fit-window expects LO:HI, got `{s}`"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi > lo) {
        return Err(bad());
    }
    Ok([lo, hi])
}

/// Turns parsed arguments into fully resolved run inputs.
pub fn resolve(cfg: &ConfigFile, cmd: &Command) -> Result<(RunInputs, PathBuf)> {
    Ok(match cmd {
        Command::Simulate(a) => {
            let spec = resolve_spec(cfg, &a.physics, None)?;
            let grid = resolve_grid(&spec, &a.grid);
            if !(a.t_final > 0.0 && a.dt > 0.0 && a.dt <= a.t_final) {
                return Err(Error::Configuration("need 0 < dt <= t_final".into()));
            }
            let fit_window = match &a.fit_window {
                Some(s) => parse_window(s)?,
                None => default_fit_window(a.t_final),
            };
            let y0 = match a.y0 {
                InitialArg::SmoothBump => InitialKind::SmoothBump,
                InitialArg::LowestMode => InitialKind::LowestMode,
                InitialArg::Zero => InitialKind::Zero,
            };
            (
                RunInputs::Simulate {
                    spec,
                    grid,
                    t_final: a.t_final,
                    dt: a.dt,
                    y0,
                    fit_window,
                },
                a.out.clone(),
            )
        }
        Command::Scan(a) => {
            let regime = match a.regime {
                RegimeArg::Low => Regime::NearZero,
                RegimeArg::High => Regime::HighFrequency,
            };
            let (dmin, dmax, dn) = regime.default_window();
            let (lambda_min, lambda_max, points) = (
                a.lambda_min.unwrap_or(dmin),
                a.lambda_max.unwrap_or(dmax),
                a.points.unwrap_or(dn),
            );
            if !(lambda_min > 0.0 && lambda_max > lambda_min && points >= 2) {
                return Err(Error::Configuration(
                    "need 0 < lambda-min < lambda-max and at least 2 points".into(),
                ));
            }
            let target = match a.stub {
                Some(size) if size > 0 => ScanTarget::Stub { size },
                Some(_) => return Err(Error::Configuration("stub size must be positive".into())),
                None => {
                    let spec = resolve_spec(cfg, &a.physics, None)?;
                    let grid = resolve_grid(&spec, &a.grid);
                    ScanTarget::Operator { spec, grid }
                }
            };
            (
                RunInputs::Scan {
                    target,
                    lambda_min,
                    lambda_max,
                    points,
                    regime,
                },
                a.out.clone(),
            )
        }
        Command::VerifyKernel(a) => {
            let beta = a
                .beta
                .or(cfg.beta)
                .ok_or_else(|| Error::Configuration("--beta is required".into()))?;
            (
                RunInputs::VerifyKernel {
                    beta,
                    rho: a.rho.or(cfg.rho).unwrap_or(1.0),
                    tau_min: a.tau_min,
                    tau_max: a.tau_max,
                    n_tau: a.n_tau,
                    nxi: a.nxi,
                    xi_min: a.xi_min,
                    xi_max: a.xi_max,
                },
                a.out.clone(),
            )
        }
        Command::OracleCompare(a) => {
            let spec = resolve_spec(cfg, &a.physics, Some(Variant::P))?;
            if a.nx_list.is_empty() {
                return Err(Error::Configuration("--nx-list is empty".into()));
            }
            (
                RunInputs::OracleCompare {
                    spec,
                    lambda: a.lambda,
                    nx_list: a.nx_list.clone(),
                    grade: a.grade,
                    nxi: a.nxi,
                    xi_min: a.xi_min,
                    xi_max: a.xi_max,
                    forcing: if a.zero_forcing {
                        OracleForcing::Zero
                    } else {
                        OracleForcing::UnitBoundary
                    },
                },
                a.out.clone(),
            )
        }
        Command::ExportOperator(a) => {
            let spec = resolve_spec(cfg, &a.physics, None)?;
            let grid = resolve_grid(&spec, &a.grid);
            (RunInputs::ExportOperator { spec, grid }, a.out.clone())
        }
        Command::Rerun(a) => (RunManifest::read(&a.manifest)?.inputs, a.out.clone()),
    })
}

/// Result of a completed run.
#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub status: RunStatus,
    pub outputs: Vec<String>,
    pub summary: String,
}

fn build_operator(spec: &ProblemSpec, g: &GridParams) -> Result<SystemOperator> {
    let xgrid = build_x_grid(g.nx, g.grade)?;
    let xigrid = build_xi_quadrature(spec.beta(), g.nxi, g.xi_min, g.xi_max)?;
    assemble_operator(spec, &xgrid, &xigrid)
}

struct Sink<'a> {
    dir: &'a Path,
    outputs: Vec<String>,
}

impl Sink<'_> {
    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        self.outputs.push(name.to_string());
        fs::write(self.dir.join(name), serde_json::to_vec_pretty(v)?)?;
        Ok(())
    }
}

/// Runs resolved inputs, writing artifacts into `out` (created if needed).
pub fn execute(inputs: &RunInputs, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let mut sink = Sink {
        dir: out,
        outputs: Vec::new(),
    };
    let mut status = RunStatus::Ok;
    let summary = match inputs {
        RunInputs::Simulate {
            spec,
            grid,
            t_final,
            dt,
            y0,
            fit_window,
        } => {
            let op = build_operator(spec, grid)?;
            let preset = match y0 {
                InitialKind::SmoothBump => InitialPreset::SmoothBump,
                InitialKind::LowestMode => InitialPreset::LowestMode,
                InitialKind::Zero => InitialPreset::Zero,
            };
            let y = prepare_initial_state(&op, preset)?;
            let trace = simulate(&op, &y, *t_final, *dt)?;
            trace.write_csv(sink.file("trace.csv")?)?;
            let predicted = theoretical_exponents(spec);
            if trace.e.iter().all(|e| *e == 0.0) {
                sink.json(
                    "fit.json",
                    &json!({ "measured": null, "predicted": predicted, "note": "energy is identically zero" }),
                )?;
                "zero initial data: energy identically zero".to_string()
            } else {
                let fit = fit_decay_exponent(&trace, *fit_window)?;
                sink.json("fit.json", &json!({ "measured": fit, "predicted": predicted }))?;
                format!(
                    "decay exponent {:.4} (r^2 {:.4}) on [{}, {}]; predicted {:.4}",
                    fit.exponent, fit.r_squared, fit_window[0], fit_window[1], predicted.decay_exponent
                )
            }
        }
        RunInputs::Scan {
            target,
            lambda_min,
            lambda_max,
            points,
            regime,
        } => {
            let lambdas = log_space(*lambda_min, *lambda_max, *points);
            let (norms, predicted) = match target {
                ScanTarget::Operator { spec, grid } => {
                    let op = build_operator(spec, grid)?;
                    (resolvent_norms(&op, &lambdas)?, Some(theoretical_exponents(spec)))
                }
                ScanTarget::Stub { size } => (resolvent_norms(&DiagonalStub::minus_identity(*size), &lambdas)?, None),
            };
            ResolventScan::write_csv(&lambdas, &norms, sink.file("scan.csv")?)?;
            let fit = fit_scan(&lambdas, &norms, *regime)?;
            let [a, b] = fit.window;
            let note = match regime {
                Regime::HighFrequency => Some("informative only"),
                Regime::NearZero => None,
            };
            sink.json(
                "fit.json",
                &json!({
                    "regime": regime,
                    "exponent": fit.exponent,
                    "r_squared": fit.r_squared,
                    "window": [lambdas[a], lambdas[b]],
                    "window_index": fit.window,
                    "theta_theoretical": predicted.as_ref().map(|p| p.theta),
                    "upsilon_theoretical": predicted.as_ref().map(|p| p.upsilon),
                    "upsilon_provenance": predicted.as_ref().and_then(|p| p.upsilon_provenance.clone()),
                    "decay_exponent_predicted": predicted.as_ref().map(|p| p.decay_exponent),
                    "note": note,
                }),
            )?;
            match (regime, &predicted) {
                (Regime::NearZero, Some(p)) => format!(
                    "measured slope {:.4} (r^2 {:.4}); predicted {:.4}",
                    fit.exponent, fit.r_squared, -p.theta
                ),
                _ => format!("measured slope {:.4} (r^2 {:.4})", fit.exponent, fit.r_squared),
            }
        }
        RunInputs::VerifyKernel {
            beta,
            rho,
            tau_min,
            tau_max,
            n_tau,
            nxi,
            xi_min,
            xi_max,
        } => {
            let grid = build_xi_quadrature(*beta, *nxi, *xi_min, *xi_max)?;
            let check = kernel_check(&grid, *rho, *tau_min, *tau_max, *n_tau)?;
            check.write_csv(sink.file("kernel.csv")?)?;
            let excluded = check.resolved.iter().filter(|r| !**r).count();
            if check.max_rel_error > KERNEL_TOLERANCE {
                status = RunStatus::ThresholdFailed;
            }
            format!(
                "max relative error {:.3e} over {} resolved points ({} excluded); tolerance {:.0e}",
                check.max_rel_error,
                check.tau.len() - excluded,
                excluded,
                KERNEL_TOLERANCE
            )
        }
        RunInputs::OracleCompare {
            spec,
            lambda,
            nx_list,
            grade,
            nxi,
            xi_min,
            xi_max,
            forcing,
        } => {
            let xi = build_xi_quadrature(spec.beta(), *nxi, *xi_min, *xi_max)?;
            let rep = oracle_compare(spec, &xi, *lambda, nx_list, *grade, *forcing)?;
            rep.write_csv(sink.file("oracle.csv")?)?;
            sink.json(
                "oracle.json",
                &json!({ "observed_order": rep.observed_order, "strictly_decreasing": rep.strictly_decreasing }),
            )?;
            match rep.observed_order {
                Some(o) => format!("observed order {o:.3}, strictly decreasing: {}", rep.strictly_decreasing),
                None => "zero error at every level".to_string(),
            }
        }
        RunInputs::ExportOperator { spec, grid } => {
            let op = build_operator(spec, grid)?;
            op.write_coo(sink.file("operator.coo")?)?;
            sink.json("operator.json", &op.metadata())?;
            format!("dimension {}, {} nonzeros", op.dim(), op.coo_entries().len())
        }
    };
    Ok(Outcome {
        status,
        outputs: sink.outputs,
        summary,
    })
}

/// Exit code for an error raised while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain { .. }
        | Error::InvalidCoefficient(_)
        | Error::HypothesisViolation(_)
        | Error::Shape { .. }
        | Error::Configuration(_)
        | Error::UnsupportedGrid(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

/// Runs inputs and records the manifest next to the artifacts.
pub fn run_and_record(inputs: RunInputs, out: &Path) -> Result<(RunManifest, Result<Outcome>)> {
    let mut manifest = RunManifest::begin(inputs)?;
    let result = execute(&manifest.inputs, out);
    manifest.finished_at = crate::manifest::now_unix();
    match &result {
        Ok(o) => {
            manifest.status = o.status;
            manifest.outputs = o.outputs.clone();
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.diagnostics = Some(e.to_string());
        }
    }
    if out.is_dir() {
        manifest.write(&out.join("manifest.json"))?;
    }
    Ok((manifest, result))
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let resolved = ConfigFile::load(cli.config.as_deref()).and_then(|cfg| resolve(&cfg, &cli.command));
    let (inputs, out) = match resolved {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Command::Rerun(a) = &cli.command {
        if let Ok(m) = RunManifest::read(&a.manifest) {
            if inputs.content_hash().ok().as_deref() != Some(m.input_hash.as_str()) {
                eprintln!("warning: manifest inputs do not match the recorded hash");
            }
        }
    }
    match run_and_record(inputs, &out) {
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Ok((_, Err(e))) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Ok((m, Ok(o))) => {
            println!("{}: {}", m.inputs.command(), o.summary);
            match o.status {
                RunStatus::ThresholdFailed => EXIT_THRESHOLD,
                _ => EXIT_OK,
            }
        }
    }
}
