//! End-to-end experiment: robustify, simulate both loops, monitor, and
//! report.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::delay::{measure_budget, DelayBudget, DelayError};
use crate::monitor::{evaluate, tube_profile, MonitorError, Trajectory};
use crate::rtl::{self, Formula, PropositionTable, RtlError};
use crate::scenarios::{ConstantsSpec, Scenario};
use crate::sim::{integrate_event_triggered, integrate_ideal, CoSimulation, SimError};
use crate::trigger::{
    alpha_of, beta_of, epsilon1, error_bound_forecast, estimate_constants, kappa_over_box, DeltaHistory,
    ErrorForecast, LyapunovConstants, TriggerError, TriggerKind, TriggerPolicy,
};

pub const SCHEMA_VERSION: u32 = 1;
/// Grid points per axis when taking the sup over Ω for κ.
pub const KAPPA_GRID: usize = 31;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Formula(#[from] RtlError),
    #[error("Lyapunov constants: {0}")]
    Constants(#[from] TriggerError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    /// Process exit code: 3 for divergence, 2 for everything else that
    /// stops a run before a verdict.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Sim(_) => 3,
            _ => 2,
        }
    }
}

/// Everything fixed before the event-triggered run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub formula: Formula,
    pub robust_formula: Formula,
    pub robust_table: PropositionTable,
    pub ideal: Trajectory,
    pub constants: LyapunovConstants,
    pub constants_estimated: bool,
    pub eps1: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub policy: TriggerPolicy,
}

fn validate(s: &Scenario) -> Result<(), PipelineError> {
    let bad = |m: String| Err(PipelineError::Invalid(m));
    if !(s.epsilon > 0.0) || !s.epsilon.is_finite() {
        return bad(format!("epsilon must be positive, got {}", s.epsilon));
    }
    if !(s.step > 0.0) || !s.step.is_finite() {
        return bad(format!("step must be positive, got {}", s.step));
    }
    if !(s.horizon > s.t0) {
        return bad(format!("horizon {} must exceed t0 = {}", s.horizon, s.t0));
    }
    for (name, prop) in s.table.iter() {
        let projected = prop.projection.as_ref().map_or(s.system.dim(), |d| d.len());
        if prop.projection.as_ref().is_some_and(|d| d.iter().any(|&i| i >= s.system.dim())) {
            return bad(format!("region '{name}' projects onto a missing state coordinate"));
        }
        if projected != prop.region.dim() {
            return bad(format!(
                "region '{name}' has dimension {} but sees {projected} state coordinates",
                prop.region.dim()
            ));
        }
    }
    Ok(())
}

pub fn policy_for(kind: TriggerKind, eps1: f64, alpha: f64, kappa: f64) -> TriggerPolicy {
    match kind {
        TriggerKind::Delta => TriggerPolicy::Delta { eps1 },
        TriggerKind::Quadratic => TriggerPolicy::Quadratic { alpha, eps1 },
        TriggerKind::Kappa => TriggerPolicy::Kappa { kappa, eps1 },
        TriggerKind::EveryStep => TriggerPolicy::EveryStep,
        TriggerKind::Never => TriggerPolicy::Never,
    }
}

/// Parses and robustifies the formula, simulates the ideal loop, and fixes
/// the Lyapunov constants and trigger.
pub fn prepare(scenario: Scenario) -> Result<Prepared, PipelineError> {
    validate(&scenario)?;
    let parsed = rtl::parse(&scenario.formula)?;
    scenario.table.resolve(&parsed)?;
    let formula = rtl::to_nnf(&parsed);
    let (robust_formula, robust_table) = rtl::robustify(&formula, scenario.epsilon, &scenario.table)?;
    let ctrl = scenario.controller.as_ref();
    let ideal =
        integrate_ideal(&scenario.system, ctrl, &scenario.x0, scenario.t0, scenario.horizon, scenario.step)?;
    let (constants, constants_estimated) = match scenario.constants {
        ConstantsSpec::Explicit(c) => (c, false),
        ConstantsSpec::Estimate => (estimate_constants(&scenario.system, ctrl, &ideal)?.constants, true),
    };
    let eps1 = epsilon1(&constants, scenario.epsilon)?;
    let alpha = alpha_of(&scenario.system, ctrl);
    let kappa = kappa_over_box(
        &scenario.system,
        ctrl,
        scenario.t0,
        &scenario.omega.0,
        &scenario.omega.1,
        KAPPA_GRID,
    )?;
    let policy = policy_for(scenario.trigger, eps1, alpha, kappa);
    Ok(Prepared {
        scenario,
        formula,
        robust_formula,
        robust_table,
        ideal,
        constants,
        constants_estimated,
        eps1,
        alpha,
        kappa,
        policy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckReport {
    pub scenario: String,
    pub formula: String,
    pub robust_formula: String,
    pub epsilon: f64,
    pub constants: LyapunovConstants,
    pub constants_estimated: bool,
    pub eps1: f64,
    pub alpha: f64,
    pub kappa: f64,
    /// Quadratic threshold with β taken at the initial state.
    pub quadratic_threshold_at_x0: f64,
    pub kappa_threshold: f64,
    /// Budget for the quadratic trigger with `l`, `p_m` and `ε̄` taken along
    /// the ideal trajectory.
    pub nominal_delay_budget: Option<f64>,
}

pub fn check(p: &Prepared) -> CheckReport {
    let s = &p.scenario;
    let ctrl = s.controller.as_ref();
    let quad = TriggerPolicy::Quadratic { alpha: p.alpha, eps1: p.eps1 };
    let beta0 = beta_of(&s.system, ctrl, s.t0, &s.x0);
    let mut l = 0.0_f64;
    let mut p_m = 0.0_f64;
    let mut eps_bar = f64::INFINITY;
    let mut mode = 0;
    for (t, x) in p.ideal.times().iter().zip(p.ideal.states()) {
        mode = ctrl.next_mode(mode, x);
        let u = ctrl.control(mode, x);
        let lk = s.system.drift_lipschitz()
            + (0..s.system.input_count()).map(|i| s.system.input_lipschitz(i) * u[i].abs()).sum::<f64>();
        l = l.max(lk);
        p_m = p_m.max(s.system.closed_loop(*t, x, &u).norm());
        let beta = beta_of(&s.system, ctrl, *t, x);
        eps_bar = eps_bar.min(quad.deviation_threshold(beta).unwrap());
    }
    let nominal_delay_budget = crate::delay::delay_budget(l, p_m, eps_bar, eps_bar).ok();
    CheckReport {
        scenario: s.name.clone(),
        formula: p.formula.to_string(),
        robust_formula: p.robust_formula.to_string(),
        epsilon: s.epsilon,
        constants: p.constants,
        constants_estimated: p.constants_estimated,
        eps1: p.eps1,
        alpha: p.alpha,
        kappa: p.kappa,
        quadratic_threshold_at_x0: quad.deviation_threshold(beta0).unwrap(),
        kappa_threshold: p.eps1 / p.kappa,
        nominal_delay_budget,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verdicts {
    /// The ideal trajectory satisfies the ε-robust formula.
    pub ideal_sat_robust: bool,
    /// The event-triggered trajectory satisfies the original formula.
    pub evt_sat_original: bool,
    /// `sup‖x − xₑ‖ ≤ ε`.
    pub tube_contained: bool,
}

impl Verdicts {
    pub fn all(&self) -> bool {
        self.ideal_sat_robust && self.evt_sat_original && self.tube_contained
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastSummary {
    pub final_bound: f64,
    pub sup_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputFiles {
    pub ideal: String,
    pub event: String,
    pub events: String,
    pub tube: String,
    pub trace: String,
}

impl Default for OutputFiles {
    fn default() -> Self {
        Self {
            ideal: "ideal.csv".into(),
            event: "event.csv".into(),
            events: "events.csv".into(),
            tube: "tube.csv".into(),
            trace: "trace.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub formula: String,
    pub robust_formula: String,
    pub epsilon: f64,
    pub step: f64,
    pub horizon: f64,
    pub trigger: String,
    pub delay: String,
    pub verdicts: Verdicts,
    pub sup_error: f64,
    pub event_count: usize,
    pub min_inter_event: Option<f64>,
    pub mean_inter_event: Option<f64>,
    pub eps1: f64,
    pub constants: LyapunovConstants,
    pub constants_estimated: bool,
    pub alpha: f64,
    pub kappa: f64,
    pub forecast: ForecastSummary,
    pub delay_budget: Option<DelayBudget>,
    pub max_observed_delay_pair: f64,
    pub files: OutputFiles,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub cosim: CoSimulation,
    pub forecast: ErrorForecast,
    pub error_profile: Vec<f64>,
}

pub fn delta_history(step: f64, cosim: &CoSimulation) -> DeltaHistory {
    DeltaHistory {
        step,
        before: cosim.log.trace.iter().map(|t| t.delta_before).collect(),
        after: cosim.log.trace.iter().map(|t| t.delta_after).collect(),
    }
}

/// Runs the event-triggered loop against the prepared ideal trajectory and
/// evaluates every verdict. Nothing is written to disk.
pub fn execute(p: &Prepared) -> Result<RunOutcome, PipelineError> {
    let started = Instant::now();
    let s = &p.scenario;
    let ctrl = s.controller.as_ref();
    let (evt, log) =
        integrate_event_triggered(&s.system, ctrl, &p.policy, &s.delay, &s.x0, s.t0, s.horizon, s.step)?;
    let error_profile = tube_profile(&p.ideal, &evt)?;
    let sup_error = error_profile.iter().copied().fold(0.0, f64::max);
    let verdicts = Verdicts {
        ideal_sat_robust: evaluate(&p.robust_formula, &p.ideal, &p.robust_table)?.satisfied,
        evt_sat_original: evaluate(&p.formula, &evt, &s.table)?.satisfied,
        tube_contained: sup_error <= s.epsilon,
    };
    let cosim = CoSimulation { ideal: p.ideal.clone(), evt, log, sup_error };
    let forecast = error_bound_forecast(&p.constants, &delta_history(s.step, &cosim));
    let delay_budget = match p.policy {
        TriggerPolicy::Quadratic { .. } | TriggerPolicy::Kappa { .. } => {
            Some(measure_budget(&s.system, &p.policy, &cosim.evt, &cosim.log)?)
        }
        _ => None,
    };
    let gaps = cosim.log.inter_event_times();
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        scenario: s.name.clone(),
        formula: p.formula.to_string(),
        robust_formula: p.robust_formula.to_string(),
        epsilon: s.epsilon,
        step: s.step,
        horizon: s.horizon,
        trigger: p.policy.name().to_string(),
        delay: s.delay.name().to_string(),
        verdicts,
        sup_error,
        event_count: cosim.log.len(),
        min_inter_event: gaps.iter().copied().reduce(f64::min),
        mean_inter_event: (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
        eps1: p.eps1,
        constants: p.constants,
        constants_estimated: p.constants_estimated,
        alpha: p.alpha,
        kappa: p.kappa,
        forecast: ForecastSummary { final_bound: forecast.final_bound, sup_bound: forecast.sup_bound },
        delay_budget,
        max_observed_delay_pair: cosim.log.max_delay_pair(),
        files: OutputFiles::default(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutcome { report, cosim, forecast, error_profile })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn write_file<F>(path: &Path, body: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Writes `report.json` through a temporary file and a rename.
pub fn write_report_atomic(path: &Path, report: &RunReport) -> Result<(), PipelineError> {
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    write_file(&tmp, |w| writeln!(w, "{text}"))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Writes the CSV outputs and `report.json` into `dir`.
pub fn write_outputs(dir: &Path, outcome: &RunOutcome) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = &outcome.report.files;
    let co = &outcome.cosim;
    write_file(&dir.join(&files.ideal), |w| co.ideal.write_csv(w))?;
    write_file(&dir.join(&files.event), |w| co.evt.write_csv(w))?;
    write_file(&dir.join(&files.events), |w| co.log.write_csv(w))?;
    write_file(&dir.join(&files.trace), |w| co.log.write_trace_csv(w))?;
    write_file(&dir.join(&files.tube), |w| {
        writeln!(w, "t,error")?;
        for (t, e) in co.ideal.times().iter().zip(&outcome.error_profile) {
            writeln!(w, "{t},{e}")?;
        }
        Ok(())
    })?;
    write_report_atomic(&dir.join("report.json"), &outcome.report)
}

/// `prepare`, `execute` and, when `out` is given, `write_outputs`.
pub fn run(scenario: Scenario, out: Option<&Path>) -> Result<RunOutcome, PipelineError> {
    let prepared = prepare(scenario)?;
    let outcome = execute(&prepared)?;
    if let Some(dir) = out {
        write_outputs(dir, &outcome)?;
    }
    Ok(outcome)
}
