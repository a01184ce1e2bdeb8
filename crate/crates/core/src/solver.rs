//! The online loop.

use std::io::{Read, Write};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::bregman::DistanceGenerator;
use crate::losses::{Domain, ErrorModel, ProblemStream};
use crate::prox::{
    self, ProxError, ProxRule, SubproblemSpec, INNER_MAX_ITERATIONS, INNER_TOLERANCE,
};

/// Slack used when checking that a point lies in `Ω`.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub step_size: f64,
    pub generator: DistanceGenerator,
    pub initial_point: DVector<f64>,
    pub enforce_stepsize_rule: bool,
    pub inner_tolerance: f64,
}

impl SolverConfig {
    pub fn new(step_size: f64, generator: DistanceGenerator, initial_point: DVector<f64>) -> Self {
        Self {
            step_size,
            generator,
            initial_point,
            enforce_stepsize_rule: true,
            inner_tolerance: INNER_TOLERANCE,
        }
    }

    /// Checks dimensions, feasibility of `x_0` and, if enforced,
    /// `λ ≤ 2σ_ω / max_k L_k`.
    pub fn validate(&self, stream: &ProblemStream) -> Result<(), ProxError> {
        if self.initial_point.len() != stream.dim() {
            return Err(ProxError::InvalidParameter(format!(
                "initial point has dimension {}, stream has {}",
                self.initial_point.len(),
                stream.dim()
            )));
        }
        if !stream
            .domain()
            .contains(&self.initial_point, FEASIBILITY_TOLERANCE)
        {
            return Err(ProxError::InvalidParameter(
                "initial point lies outside the domain".into(),
            ));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(ProxError::InvalidParameter(format!(
                "step size {} must be positive",
                self.step_size
            )));
        }
        if self.enforce_stepsize_rule {
            prox::check_step_rule(
                self.step_size,
                stream.max_smoothness(),
                self.generator.sigma_omega(),
            )?;
        }
        Ok(())
    }
}

/// `x_k*` and `f_k(x_k*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub point: DVector<f64>,
    pub value: f64,
}

/// Everything recorded at round `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    /// Played point `x_k`.
    pub x: DVector<f64>,
    /// Exact subproblem solution `y_k`.
    pub y: DVector<f64>,
    /// `∇g_k(x_{k-1})` without error.
    pub gradient: DVector<f64>,
    /// Realized `e_k`.
    pub gradient_error: DVector<f64>,
    /// Realized `ε_k`.
    pub eps: f64,
    /// `f_k(x_k)`.
    pub loss: f64,
    pub smoothness: f64,
    pub regularizer_lipschitz: f64,
    pub optimum: Option<Optimum>,
    pub wall_time: Duration,
}

impl StepRecord {
    pub fn gradient_error_norm(&self) -> f64 {
        self.gradient_error.norm()
    }

    /// `∇g_k(x_{k-1}) + e_k`.
    pub fn noisy_gradient(&self) -> DVector<f64> {
        &self.gradient + &self.gradient_error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub initial_point: DVector<f64>,
    pub records: Vec<StepRecord>,
}

impl RunTrace {
    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    /// `x_{k-1}` for `k ≥ 1`.
    pub fn anchor(&self, k: usize) -> &DVector<f64> {
        if k <= 1 {
            &self.initial_point
        } else {
            &self.records[k - 2].x
        }
    }

    pub fn has_optima(&self) -> bool {
        self.records.iter().all(|r| r.optimum.is_some())
    }

    pub fn truncated(&self, horizon: usize) -> Self {
        Self {
            initial_point: self.initial_point.clone(),
            records: self.records[..horizon.min(self.records.len())].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Error)]
#[error("run stopped at round {round}: {source}")]
pub struct RunError {
    pub round: usize,
    #[source]
    pub source: ProxError,
    /// Rounds completed before the failure.
    pub trace: RunTrace,
}

/// Runs the inexact online proximal mirror descent over `stream`.
pub fn run(
    stream: &ProblemStream,
    config: &SolverConfig,
    model: &ErrorModel,
) -> Result<RunTrace, RunError> {
    let mut trace = RunTrace {
        initial_point: config.initial_point.clone(),
        records: Vec::with_capacity(stream.horizon()),
    };
    if let Err(source) = config.validate(stream) {
        return Err(RunError {
            round: 0,
            source,
            trace,
        });
    }
    let domain = stream.domain();
    let mut prev = config.initial_point.clone();
    for (i, step) in stream.steps().iter().enumerate() {
        let k = i + 1;
        let started = Instant::now();
        let gradient = step.smooth_gradient(&prev);
        let gradient_error = model.gradient_error(k, prev.len());
        let noisy = &gradient + &gradient_error;
        let outcome = SubproblemSpec::new(
            step,
            &config.generator,
            &prev,
            &noisy,
            config.step_size,
            domain,
            config.enforce_stepsize_rule,
        )
        .and_then(|mut spec| {
            spec.inner_tolerance = config.inner_tolerance;
            spec.inner_max_iterations = INNER_MAX_ITERATIONS;
            prox::inexact_mirror_prox(&spec, model, k)
        });
        let out = match outcome {
            Ok(out) => out,
            Err(source) => {
                return Err(RunError {
                    round: k,
                    source,
                    trace,
                })
            }
        };
        let loss = step.value(&out.x);
        trace.records.push(StepRecord {
            k,
            x: out.x.clone(),
            y: out.y,
            gradient,
            gradient_error,
            eps: out.eps,
            loss,
            smoothness: step.smoothness,
            regularizer_lipschitz: step.regularizer_lipschitz,
            optimum: None,
            wall_time: started.elapsed(),
        });
        prev = out.x;
    }
    Ok(trace)
}

/// Plain online proximal gradient descent
/// `x_k = P_Ω(prox_{λh_k}(x_{k-1} − λ(∇g_k(x_{k-1}) + e_k)))`, perturbed by
/// the same prox errors as [`run`].
///
/// Written without the mirror machinery so it can serve as a reference for
/// the Euclidean case.
pub fn run_proximal_gradient(
    stream: &ProblemStream,
    config: &SolverConfig,
    model: &ErrorModel,
) -> Result<RunTrace, RunError> {
    let mut trace = RunTrace {
        initial_point: config.initial_point.clone(),
        records: Vec::with_capacity(stream.horizon()),
    };
    let euclidean = SolverConfig {
        generator: DistanceGenerator::euclidean(),
        ..config.clone()
    };
    if let Err(source) = euclidean.validate(stream) {
        return Err(RunError {
            round: 0,
            source,
            trace,
        });
    }
    let lam = config.step_size;
    let domain = stream.domain();
    let mut x = config.initial_point.clone();
    for (i, step) in stream.steps().iter().enumerate() {
        let k = i + 1;
        let started = Instant::now();
        let fail = |source, trace| RunError {
            round: k,
            source,
            trace,
        };
        let gradient = step.smooth_gradient(&x);
        let gradient_error = model.gradient_error(k, x.len());
        let mut v = x.clone();
        for j in 0..v.len() {
            v[j] -= lam * (gradient[j] + gradient_error[j]);
        }
        let y = match plain_prox(&step.regularizer, domain, v, lam) {
            Ok(y) => y,
            Err(e) => return Err(fail(e, trace)),
        };
        let (offset, eps) = model.prox_error(k, y.len());
        let next = if eps == 0.0 {
            y.clone()
        } else {
            domain.project(&(&y + offset))
        };
        let eps = eps.max((&next - &y).norm());
        trace.records.push(StepRecord {
            k,
            x: next.clone(),
            y,
            gradient,
            gradient_error,
            eps,
            loss: step.value(&next),
            smoothness: step.smoothness,
            regularizer_lipschitz: step.regularizer_lipschitz,
            optimum: None,
            wall_time: started.elapsed(),
        });
        x = next;
    }
    Ok(trace)
}

fn plain_prox(
    rule: &ProxRule,
    domain: &Domain,
    mut v: DVector<f64>,
    lam: f64,
) -> Result<DVector<f64>, ProxError> {
    if !rule.composes_with(domain) {
        return Err(ProxError::NonCommutingComposition {
            rule: rule.name().to_string(),
            domain: prox::domain_name(domain).to_string(),
        });
    }
    match rule {
        ProxRule::Zero | ProxRule::Indicator(_) => {}
        ProxRule::L1 { weight } => {
            let t = lam * weight;
            for c in v.iter_mut() {
                *c = c.signum() * (c.abs() - t).max(0.0);
            }
        }
        ProxRule::NuclearNorm { rows, cols, weight } => {
            let z = DMatrix::from_column_slice(*rows, *cols, v.as_slice());
            let out =
                prox::singular_value_threshold(&z, lam * weight, &prox::NalgebraSvd::default())?;
            v.copy_from_slice(out.as_slice());
        }
        ProxRule::LowRankPlusSparse {
            rows,
            cols,
            nuclear_weight,
            l1_weight,
        } => {
            let n = rows * cols;
            let z = DMatrix::from_column_slice(*rows, *cols, &v.as_slice()[..n]);
            let l = prox::singular_value_threshold(
                &z,
                lam * nuclear_weight,
                &prox::NalgebraSvd::default(),
            )?;
            v.as_mut_slice()[..n].copy_from_slice(l.as_slice());
            let t = lam * l1_weight;
            for c in v.as_mut_slice()[n..].iter_mut() {
                *c = c.signum() * (c.abs() - t).max(0.0);
            }
        }
    }
    if let ProxRule::Indicator(d) = rule {
        v = d.project(&v);
    }
    Ok(match domain {
        Domain::WholeSpace => v,
        d => d.project(&v),
    })
}

/// One row of the trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub loss: f64,
    pub optimum_value: f64,
    pub instantaneous_regret: f64,
    pub gradient_error_norm: f64,
    pub eps: f64,
    pub distance_to_optimum: f64,
    pub cumulative_regret: f64,
}

pub const TRACE_HEADER: [&str; 8] = [
    "k",
    "f_k(x_k)",
    "f_k(x_k*)",
    "instantaneous_regret",
    "norm_e_k",
    "eps_k",
    "dist_x_k_to_opt",
    "cumulative_regret",
];

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("round {0} has no optimum attached")]
    MissingOptimum(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Rows of the trace CSV; the trace must carry optima.
pub fn trace_rows(trace: &RunTrace) -> Result<Vec<TraceRow>, TraceIoError> {
    let mut cumulative = 0.0;
    trace
        .records
        .iter()
        .map(|r| {
            let opt = r
                .optimum
                .as_ref()
                .ok_or(TraceIoError::MissingOptimum(r.k))?;
            let inst = r.loss - opt.value;
            cumulative += inst;
            Ok(TraceRow {
                k: r.k,
                loss: r.loss,
                optimum_value: opt.value,
                instantaneous_regret: inst,
                gradient_error_norm: r.gradient_error_norm(),
                eps: r.eps,
                distance_to_optimum: (&r.x - &opt.point).norm(),
                cumulative_regret: cumulative,
            })
        })
        .collect()
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trace_csv<W: Write>(trace: &RunTrace, out: W) -> Result<(), TraceIoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for row in trace_rows(trace)? {
        w.write_record([
            row.k.to_string(),
            fmt_f64(row.loss),
            fmt_f64(row.optimum_value),
            fmt_f64(row.instantaneous_regret),
            fmt_f64(row.gradient_error_norm),
            fmt_f64(row.eps),
            fmt_f64(row.distance_to_optimum),
            fmt_f64(row.cumulative_regret),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>, TraceIoError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(TraceIoError::Malformed {
            line: 1,
            message: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |j: usize| -> Result<f64, TraceIoError> {
            rec.get(j)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| TraceIoError::Malformed {
                    line,
                    message: format!("column {} is not a number", TRACE_HEADER[j]),
                })
        };
        let k = rec
            .get(0)
            .and_then(|s| s.trim().parse::<usize>().ok())
            .ok_or_else(|| TraceIoError::Malformed {
                line,
                message: "column k is not an index".into(),
            })?;
        rows.push(TraceRow {
            k,
            loss: num(1)?,
            optimum_value: num(2)?,
            instantaneous_regret: num(3)?,
            gradient_error_norm: num(4)?,
            eps: num(5)?,
            distance_to_optimum: num(6)?,
            cumulative_regret: num(7)?,
        });
    }
    Ok(rows)
}

/// Dense dump of `x_k`, `y_k` and `x_k*`: one row per round and kind.
pub fn write_iterates_csv<W: Write>(trace: &RunTrace, out: W) -> Result<(), TraceIoError> {
    let mut w = csv::Writer::from_writer(out);
    let dim = trace.initial_point.len();
    let mut header = vec!["k".to_string(), "kind".to_string()];
    header.extend((0..dim).map(|j| format!("c{j}")));
    w.write_record(&header)?;
    let mut row = |k: usize, kind: &str, v: &DVector<f64>| -> Result<(), TraceIoError> {
        let mut rec = vec![k.to_string(), kind.to_string()];
        rec.extend(v.iter().map(|c| fmt_f64(*c)));
        w.write_record(&rec)?;
        Ok(())
    };
    row(0, "x", &trace.initial_point)?;
    for r in &trace.records {
        row(r.k, "x", &r.x)?;
        row(r.k, "y", &r.y)?;
        if let Some(opt) = &r.optimum {
            row(r.k, "opt", &opt.point)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Iterates read back from [`write_iterates_csv`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterateTable {
    pub initial_point: Option<DVector<f64>>,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub opt: Vec<DVector<f64>>,
}

pub fn read_iterates_csv<R: Read>(input: R) -> Result<IterateTable, TraceIoError> {
    let mut r = csv::Reader::from_reader(input);
    let mut table = IterateTable::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |message: &str| TraceIoError::Malformed {
            line,
            message: message.to_string(),
        };
        let k: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad round index"))?;
        let kind = rec.get(1).ok_or_else(|| bad("missing kind"))?.to_string();
        let values = rec
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>().map_err(|_| bad("non-numeric coordinate")))
            .collect::<Result<Vec<_>, _>>()?;
        let v = DVector::from_vec(values);
        let (list, expected) = match (kind.as_str(), k) {
            ("x", 0) => {
                table.initial_point = Some(v);
                continue;
            }
            ("x", _) => (&mut table.x, k),
            ("y", _) => (&mut table.y, k),
            ("opt", _) => (&mut table.opt, k),
            _ => return Err(bad("unknown kind")),
        };
        if list.len() + 1 != expected {
            return Err(bad("rounds out of order"));
        }
        list.push(v);
    }
    Ok(table)
}
