use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use etc_rtl::config::{parse_delay_spec, ScenarioConfig};
use etc_rtl::delay::DelayModel;
use etc_rtl::pipeline::{self, PipelineError, RunOutcome};
use etc_rtl::scenarios::Scenario;
use etc_rtl::trigger::TriggerKind;
use rayon::prelude::*;

const OUT_ENV: &str = "ETC_RTL_OUT";
const DEFAULT_OUT: &str = "out";

#[derive(Parser)]
#[command(name = "etc-rtl", version, about = "Event-triggered control under temporal logic constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate both loops, monitor the formula and write reports.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Output directory (default: config `out`, then $ETC_RTL_OUT, then ./out/<scenario>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Configs to run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Validate a config and print the trigger constants without the event-triggered run.
    Check {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args, Clone)]
struct Overrides {
    /// Integrator step.
    #[arg(long)]
    step: Option<f64>,
    /// delta | quadratic | kappa | every-step | never
    #[arg(long)]
    trigger: Option<TriggerKind>,
    /// none | constant:D | random:MAX | sequence:D1,D2,...
    #[arg(long, value_name = "KIND[:PARAM]")]
    delay: Option<String>,
    /// Seed for random delays.
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Pipeline(PipelineError),
    Config(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Pipeline(e) => e.exit_code() as u8,
            Failure::Config(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Pipeline(e) => write!(f, "{e}"),
            Failure::Config(m) => write!(f, "{m}"),
        }
    }
}

fn load(path: &Path, ov: &Overrides) -> Result<(ScenarioConfig, Scenario), Failure> {
    let cfg = ScenarioConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    let mut scenario = cfg.resolve().map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if let Some(h) = ov.step {
        scenario.step = h;
    }
    if let Some(kind) = ov.trigger {
        scenario.trigger = kind;
    }
    let seed = ov.seed.unwrap_or(cfg.seed());
    if let Some(spec) = &ov.delay {
        scenario.delay = parse_delay_spec(spec, seed).map_err(|e| Failure::Config(e.to_string()))?;
    } else if let (Some(s), DelayModel::RandomBounded { seed: old, .. }) = (ov.seed, &mut scenario.delay) {
        *old = s;
    }
    Ok((cfg, scenario))
}

/// Flag, then config, then environment, then `./out/<scenario>`. A flag or
/// environment directory shared by several configs gets one subdirectory
/// per config.
fn output_dir(flag: Option<&Path>, cfg: &ScenarioConfig, config_path: &Path, batch: bool) -> PathBuf {
    let per_config = |base: &Path| {
        if batch {
            let stem = config_path.file_stem().map_or_else(|| cfg.scenario.clone().into(), |s| s.to_owned());
            base.join(stem)
        } else {
            base.to_path_buf()
        }
    };
    if let Some(dir) = flag {
        return per_config(dir);
    }
    if let Some(dir) = &cfg.out {
        return dir.clone();
    }
    match std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        Some(env) => per_config(Path::new(&env)),
        None => Path::new(DEFAULT_OUT).join(&cfg.scenario),
    }
}

fn run_one(
    path: &Path,
    ov: &Overrides,
    out: Option<&Path>,
    batch: bool,
) -> Result<(PathBuf, RunOutcome), Failure> {
    let (cfg, scenario) = load(path, ov)?;
    let dir = output_dir(out, &cfg, path, batch);
    let outcome = pipeline::run(scenario, Some(&dir)).map_err(Failure::Pipeline)?;
    Ok((dir, outcome))
}

fn summarize(path: &Path, result: &Result<(PathBuf, RunOutcome), Failure>) -> u8 {
    match result {
        Ok((dir, outcome)) => {
            let r = &outcome.report;
            let v = r.verdicts;
            println!(
                "{}: trigger={} events={} sup_error={:.6} eps={} ideal_sat_robust={} evt_sat_original={} tube_contained={} -> {}",
                path.display(),
                r.trigger,
                r.event_count,
                r.sup_error,
                r.epsilon,
                v.ideal_sat_robust,
                v.evt_sat_original,
                v.tube_contained,
                dir.display()
            );
            if let Some(b) = &r.delay_budget {
                println!(
                    "  delay budget {:.6e} s, observed pair {:.6e} s, utilization {:.3}{}",
                    b.budget,
                    b.max_observed_delay_pair,
                    b.utilization,
                    if b.violated { " (violated)" } else { "" }
                );
            }
            if v.all() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn check(path: &Path, ov: &Overrides) -> u8 {
    let prepared = load(path, ov).and_then(|(_, s)| pipeline::prepare(s).map_err(Failure::Pipeline));
    match prepared {
        Ok(p) => {
            let c = pipeline::check(&p);
            println!("scenario = {}", c.scenario);
            println!("formula = {}", c.formula);
            println!("robust_formula = {}", c.robust_formula);
            println!("epsilon = {}", c.epsilon);
            let k = c.constants;
            let source = if c.constants_estimated { "estimated" } else { "explicit" };
            println!("constants = c1 {} c2 {} c3 {} c4 {} ({source})", k.c1, k.c2, k.c3, k.c4);
            println!("eps1 = {}", c.eps1);
            println!("alpha = {}", c.alpha);
            println!("kappa = {}", c.kappa);
            println!("quadratic_threshold_at_x0 = {}", c.quadratic_threshold_at_x0);
            println!("kappa_threshold = {}", c.kappa_threshold);
            match c.nominal_delay_budget {
                Some(b) => println!("nominal_delay_budget = {b}"),
                None => println!("nominal_delay_budget = unavailable"),
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { configs, overrides, out, jobs } => {
            let batch = configs.len() > 1;
            let results: Vec<_> = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
                Ok(pool) => pool.install(|| {
                    configs.par_iter().map(|p| run_one(p, &overrides, out.as_deref(), batch)).collect()
                }),
                Err(e) => {
                    eprintln!("error: cannot start worker pool: {e}");
                    return ExitCode::from(2);
                }
            };
            configs.iter().zip(&results).map(|(p, r)| summarize(p, r)).max().unwrap_or(0)
        }
        Command::Check { config, overrides } => check(&config, &overrides),
    };
    ExitCode::from(code)
}
