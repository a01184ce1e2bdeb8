//! `run` and `verify`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use ompd_core::experiments::{self, ExperimentError, ExperimentRun, SeparationData, Variant};
use ompd_core::losses::{validate_constants, ErrorModel};
use ompd_core::regret::{self, Regime};
use ompd_core::rng::{self, SubSeed};
use ompd_core::solver::{
    self, IterateTable, Optimum, RunTrace, StepRecord, TraceIoError, TraceRow,
};
use ompd_core::{DVector, ProblemStream, SolverConfig};

use crate::config::{self, ConfigError, ExperimentKind, ExperimentSpec, Settings};
use crate::manifest::{Manifest, MANIFEST_FILE};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Config = 2,
    OutputExists = 3,
    MissingTrace = 4,
    Sanity = 5,
    Constants = 6,
    BoundViolated = 7,
    Solver = 8,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot read config {path}: {source}")]
    ConfigFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("output directory {0} is not empty (pass --overwrite to replace its files)")]
    OutputExists(PathBuf),
    #[error("{0}")]
    MissingTrace(String),
    #[error("sanity: {0}")]
    Sanity(String),
    #[error("constant validation: {0}")]
    Constants(String),
    #[error("bound violated for variant {variant} at T' = {horizon}: margin {margin:e}")]
    BoundViolated {
        variant: &'static str,
        horizon: usize,
        margin: f64,
    },
    #[error("solver: {0}")]
    Solver(String),
    #[error("i/o on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit(&self) -> Exit {
        match self {
            CliError::Config(_) | CliError::ConfigFile { .. } => Exit::Config,
            CliError::OutputExists(_) => Exit::OutputExists,
            CliError::MissingTrace(_) => Exit::MissingTrace,
            CliError::Sanity(_) => Exit::Sanity,
            CliError::Constants(_) => Exit::Constants,
            CliError::BoundViolated { .. } => Exit::BoundViolated,
            CliError::Solver(_) | CliError::Io { .. } => Exit::Solver,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> Result<(), TraceIoError>,
) -> Result<(), CliError> {
    let mut w = create(path)?;
    f(&mut w).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_config_text(path: Option<&Path>) -> Result<String, CliError> {
    match path {
        None => Ok(String::new()),
        Some(p) => fs::read_to_string(p).map_err(|source| CliError::ConfigFile {
            path: p.to_path_buf(),
            source,
        }),
    }
}

/// A generated stream with everything needed to run or replay it.
pub struct Prepared {
    pub settings: Settings,
    pub stream: ProblemStream,
    pub solver: SolverConfig,
    pub optimum_tolerance: f64,
    pub truth: Option<Vec<DVector<f64>>>,
    pub separation: Option<SeparationData>,
}

impl Prepared {
    pub fn new(settings: Settings) -> Result<Self, ExperimentError> {
        let (stream, solver, tol, truth, separation) = match &settings.spec {
            ExperimentSpec::Example1(c) => {
                let data = experiments::generate_gauss_markov(c)?;
                (
                    data.stream,
                    c.solver_config(),
                    regret::OPTIMUM_TOLERANCE,
                    Some(data.truth),
                    None,
                )
            }
            ExperimentSpec::Example2(c) => {
                let data = experiments::generate_separation(c)?;
                let tol = experiments::separation_tolerance(&data);
                (
                    data.stream.clone(),
                    c.solver_config(),
                    tol,
                    None,
                    Some(data),
                )
            }
            ExperimentSpec::Custom(c) => (
                experiments::generate_drift(c)?,
                c.solver_config(),
                regret::OPTIMUM_TOLERANCE,
                None,
                None,
            ),
        };
        let stream = settings.constants.apply(&stream);
        Ok(Self {
            settings,
            stream,
            solver,
            optimum_tolerance: tol,
            truth,
            separation,
        })
    }

    pub fn model(&self, variant: Variant) -> ErrorModel {
        match &self.settings.spec {
            ExperimentSpec::Example1(c) => c.error_model(variant),
            ExperimentSpec::Example2(c) => c.error_model(variant),
            ExperimentSpec::Custom(c) => c.error_model(variant),
        }
    }

    pub fn seed(&self) -> u64 {
        match &self.settings.spec {
            ExperimentSpec::Example1(c) => c.seed,
            ExperimentSpec::Example2(c) => c.seed,
            ExperimentSpec::Custom(c) => c.seed,
        }
    }
}

fn file(out: &Path, variant: Variant, what: &str) -> PathBuf {
    out.join(format!("{}_{what}.csv", variant.name()))
}

pub fn trace_path(out: &Path, variant: Variant) -> PathBuf {
    file(out, variant, "trace")
}

pub struct RunArgs {
    pub experiment: ExperimentKind,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub overwrite: bool,
    pub horizon: Option<usize>,
    pub variants: Vec<Variant>,
}

fn prepare_output(out: &Path, overwrite: bool) -> Result<(), CliError> {
    if out.exists() {
        let mut entries = fs::read_dir(out).map_err(|e| io_err(out, e))?;
        if entries.next().is_some() && !overwrite {
            return Err(CliError::OutputExists(out.to_path_buf()));
        }
    }
    fs::create_dir_all(out).map_err(|e| io_err(out, e))
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let text = read_config_text(args.config.as_deref())?;
    let settings = config::load(args.experiment, &text, args.seed, args.horizon)?;
    prepare_output(&args.out, args.overwrite)?;

    let manifest = Manifest {
        experiment: args.experiment,
        seed: args.seed,
        horizon: args.horizon,
        variants: args.variants.clone(),
        config: args.config.as_ref().map(|_| config_copy_name().to_string()),
    };
    if args.config.is_some() {
        fs::write(args.out.join(config_copy_name()), &text).map_err(|e| io_err(&args.out, e))?;
    }
    manifest.write(&args.out.join(MANIFEST_FILE))?;

    let prepared = Prepared::new(settings).map_err(|e| {
        CliError::Config(ConfigError {
            line: 0,
            key: "stream".into(),
            message: e.to_string(),
        })
    })?;
    let optima = regret::compute_optima(&prepared.stream, prepared.optimum_tolerance)
        .map_err(|e| CliError::Solver(format!("offline optimum: {e}")))?;

    let results: Vec<(Variant, Result<ExperimentRun, ExperimentError>)> = args
        .variants
        .par_iter()
        .map(|&v| {
            let r = experiments::run_on_stream(
                &prepared.stream,
                &prepared.solver,
                &prepared.model(v),
                &optima,
                v,
            );
            (v, r)
        })
        .collect();

    let mut failure = None;
    for (variant, result) in results {
        match result {
            Ok(run) => {
                write_run(&args.out, &prepared, &run)?;
                print_summary(&run);
            }
            Err(ExperimentError::Run(e)) => {
                // Flush the rounds that did complete.
                let mut partial = e.trace.clone();
                let done = partial.horizon();
                let _ = regret::attach_optima(&mut partial, &optima[..done]);
                write_with(&file(&args.out, variant, "iterates"), |w| {
                    solver::write_iterates_csv(&partial, w)
                })?;
                write_with(&trace_path(&args.out, variant), |w| {
                    solver::write_trace_csv(&partial, w)
                })?;
                failure.get_or_insert(CliError::Solver(format!(
                    "variant {} failed at round {}: {}",
                    variant.name(),
                    e.round,
                    e.source
                )));
            }
            Err(e) => {
                failure.get_or_insert(CliError::Solver(format!("variant {}: {e}", variant.name())));
            }
        }
    }
    failure.map_or(Ok(()), Err)
}

fn config_copy_name() -> &'static str {
    "config.ini"
}

fn write_run(out: &Path, prepared: &Prepared, run: &ExperimentRun) -> Result<(), CliError> {
    let v = run.variant;
    write_with(&trace_path(out, v), |w| run.write_trace_csv(w))?;
    write_with(&file(out, v, "ledger"), |w| run.write_ledger_csv(w))?;
    write_with(&file(out, v, "iterates"), |w| run.write_iterates_csv(w))?;
    if let Some(truth) = &prepared.truth {
        write_with(&file(out, v, "coefficients"), |w| {
            experiments::write_coefficients_csv(truth, &run.trace, w)
        })?;
    }
    if let (ExperimentSpec::Example2(cfg), Some(data)) =
        (&prepared.settings.spec, &prepared.separation)
    {
        let (support, snapshots) = experiments::score_separation(cfg, data, &run.trace);
        for s in &snapshots {
            let base = format!("{}_snapshot_{:04}", v.name(), s.k);
            write_with(&out.join(format!("{base}_low_rank.csv")), |w| {
                experiments::write_matrix_csv(&s.low_rank, w)
            })?;
            write_with(&out.join(format!("{base}_sparse.csv")), |w| {
                experiments::write_matrix_csv(&s.sparse, w)
            })?;
        }
        println!("variant={} support_f1={:.6}", v.name(), support.f1());
    }
    Ok(())
}

fn print_summary(run: &ExperimentRun) {
    let t = run.trace.horizon();
    println!(
        "variant={} T={t} R_T={:.10e} R_T/T={:.10e} margin={:.10e} certified={}",
        run.variant.name(),
        run.final_regret(),
        run.final_regret() / t.max(1) as f64,
        run.certificate.worst_margin,
        run.certificate.holds()
    );
}

pub struct VerifyArgs {
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub variants: Option<Vec<Variant>>,
}

/// Rounds of `stream` whose declared constants are checked by `verify`.
const CONSTANT_SAMPLES: usize = 8;

pub fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let manifest_path = args.out.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Err(CliError::MissingTrace(format!(
            "no run manifest at {}",
            manifest_path.display()
        )));
    }
    let manifest = Manifest::read(&manifest_path)?;
    let variants = args
        .variants
        .clone()
        .unwrap_or_else(|| manifest.variants.clone());

    // Check the traces exist and pass the cheap sanity test before
    // regenerating anything.
    let mut traces = Vec::new();
    for &v in &variants {
        let path = trace_path(&args.out, v);
        let f = File::open(&path)
            .map_err(|_| CliError::MissingTrace(format!("missing trace {}", path.display())))?;
        let rows = solver::read_trace_csv(BufReader::new(f)).map_err(|e| {
            CliError::MissingTrace(format!("unreadable trace {}: {e}", path.display()))
        })?;
        check_rows(v, &rows)?;
        traces.push((v, rows));
    }

    let config_path = args
        .config
        .clone()
        .or_else(|| manifest.config.as_ref().map(|c| args.out.join(c)));
    let text = read_config_text(config_path.as_deref())?;
    let settings = config::load(manifest.experiment, &text, manifest.seed, manifest.horizon)?;
    let prepared = Prepared::new(settings).map_err(|e| {
        CliError::Config(ConfigError {
            line: 0,
            key: "stream".into(),
            message: e.to_string(),
        })
    })?;

    for (v, rows) in traces {
        let path = file(&args.out, v, "iterates");
        let f = File::open(&path)
            .map_err(|_| CliError::MissingTrace(format!("missing iterates {}", path.display())))?;
        let table = solver::read_iterates_csv(BufReader::new(f)).map_err(|e| {
            CliError::MissingTrace(format!("unreadable iterates {}: {e}", path.display()))
        })?;
        check_constants(&prepared, &table)?;
        let trace = rebuild_trace(&prepared, v, &rows, &table)?;
        let run = experiments::finish_run(trace, prepared.stream.domain(), &prepared.solver, v)
            .map_err(|e| CliError::Sanity(format!("variant {}: {e}", v.name())))?;
        let cert = &run.certificate;
        println!(
            "variant={} regime={} T={} worst_margin={:.10e} worst_horizon={} certified={}",
            v.name(),
            match Regime::of(prepared.stream.domain()) {
                Regime::Bounded => "bounded",
                Regime::WholeSpace => "whole_space",
            },
            run.trace.horizon(),
            cert.worst_margin,
            cert.worst_horizon,
            cert.holds()
        );
        if let Some(h) = cert.first_violation {
            return Err(CliError::BoundViolated {
                variant: v.name(),
                horizon: h,
                margin: run.rhs[h - 1] - run.regret[h - 1],
            });
        }
    }
    Ok(())
}

fn sanity_tolerance(value: f64) -> f64 {
    regret::COMPARISON_TOLERANCE * value.abs().max(1.0)
}

fn check_rows(v: Variant, rows: &[TraceRow]) -> Result<(), CliError> {
    for (i, r) in rows.iter().enumerate() {
        if r.k != i + 1 {
            return Err(CliError::Sanity(format!(
                "variant {}: row {} has round index {}",
                v.name(),
                i + 1,
                r.k
            )));
        }
        if r.optimum_value - r.loss > sanity_tolerance(r.optimum_value) {
            return Err(CliError::Sanity(format!(
                "variant {}: f_k(x_k) = {:e} lies below f_k(x_k*) = {:e} at k = {}",
                v.name(),
                r.loss,
                r.optimum_value,
                r.k
            )));
        }
    }
    Ok(())
}

fn check_constants(prepared: &Prepared, table: &IterateTable) -> Result<(), CliError> {
    let spread = table
        .x
        .iter()
        .chain(&table.opt)
        .map(|v| v.amax())
        .fold(1.0, f64::max);
    let seed = SubSeed::Stream.derive(prepared.seed()) ^ 0x434f_4e53;
    let failures: Vec<(usize, String)> = prepared
        .stream
        .steps()
        .par_iter()
        .enumerate()
        .filter_map(|(i, step)| {
            let mut r = rng::round_rng(seed, i + 1);
            let rep = validate_constants(step, CONSTANT_SAMPLES, spread, &mut r);
            (!rep.passed()).then(|| {
                let mut what = Vec::new();
                if rep.descent_lemma > 0.0 {
                    what.push(format!(
                        "descent lemma with L_k = {} off by {:e}",
                        step.smoothness, rep.descent_lemma
                    ));
                }
                if rep.regularizer_lipschitz > 0.0 {
                    what.push(format!(
                        "Lipschitz bound B_k = {} off by {:e}",
                        step.regularizer_lipschitz, rep.regularizer_lipschitz
                    ));
                }
                if rep.smooth_convexity > 0.0 || rep.regularizer_convexity > 0.0 {
                    what.push("convexity".into());
                }
                (i + 1, what.join(", "))
            })
        })
        .collect();
    match failures.first() {
        None => Ok(()),
        Some((k, what)) => Err(CliError::Constants(format!(
            "{} of {} rounds fail; first at k = {k}: {what}",
            failures.len(),
            prepared.stream.horizon()
        ))),
    }
}

/// Rebuilds the solver trace from the exported files and the regenerated
/// stream. Gradients and gradient errors are recomputed; the reported losses
/// must agree with the stream evaluated at the exported iterates.
fn rebuild_trace(
    prepared: &Prepared,
    v: Variant,
    rows: &[TraceRow],
    table: &IterateTable,
) -> Result<RunTrace, CliError> {
    let bad = |m: String| CliError::Sanity(format!("variant {}: {m}", v.name()));
    let n = rows.len();
    if n == 0 {
        return Err(bad("empty trace".into()));
    }
    if n > prepared.stream.horizon() {
        return Err(bad(format!(
            "trace has {n} rounds but the stream only {}",
            prepared.stream.horizon()
        )));
    }
    if table.x.len() != n || table.y.len() != n || table.opt.len() != n {
        return Err(bad(
            "iterates and trace disagree on the number of rounds".into()
        ));
    }
    let initial = table
        .initial_point
        .clone()
        .ok_or_else(|| bad("iterates lack x_0".into()))?;
    let dim = prepared.stream.dim();
    if initial.len() != dim {
        return Err(bad(format!(
            "iterates have dimension {} but the stream {dim}",
            initial.len()
        )));
    }
    let model = prepared.model(v);
    let mut records = Vec::with_capacity(n);
    let mut prev = initial.clone();
    for (i, row) in rows.iter().enumerate() {
        let k = i + 1;
        let step = &prepared.stream.steps()[i];
        let x = table.x[i].clone();
        let loss = step.value(&x);
        if (loss - row.loss).abs() > 1e-9 * (1.0 + loss.abs()) {
            return Err(bad(format!(
                "reported f_k(x_k) = {:e} but the stream gives {loss:e} at k = {k}",
                row.loss
            )));
        }
        let gradient_error = model.gradient_error(k, dim);
        if (gradient_error.norm() - row.gradient_error_norm).abs()
            > 1e-9 * (1.0 + row.gradient_error_norm)
        {
            return Err(bad(format!(
                "gradient error norm at k = {k} does not match the seed"
            )));
        }
        records.push(StepRecord {
            k,
            gradient: step.smooth_gradient(&prev),
            gradient_error,
            x: x.clone(),
            y: table.y[i].clone(),
            eps: row.eps,
            loss: row.loss,
            smoothness: step.smoothness,
            regularizer_lipschitz: step.regularizer_lipschitz,
            optimum: Some(Optimum {
                point: table.opt[i].clone(),
                value: row.optimum_value,
            }),
            wall_time: Default::default(),
        });
        prev = x;
    }
    Ok(RunTrace {
        initial_point: initial,
        records,
    })
}
