use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mihexec::figure1;
use mihexec::hawkes::simulate;
use mihexec::market::{replay, write_trace_csv, MarketState};
use mihexec::montecarlo::{estimate_cost, CostPolicy, McResults};
use mihexec::pms::{mihm_diagnosis, poisson_arbitrage, poisson_arbitrage_cost, poisson_optimal_cost};
use mihexec::strategy::{ow_expected_cost, write_trajectory_csv, Mode, OptimalStrategy};
use serde_json::{json, Value};

mod config;

use config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "mihexec", version, about = "Optimal execution against Hawkes order flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one order-flow path and write it as CSV.
    Simulate(RunArgs),
    /// Run the optimal strategy on one simulated path.
    Execute {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Feedback)]
        mode: ModeArg,
    },
    /// Value function and optimal initial position at time 0.
    Value(RunArgs),
    /// Monte Carlo estimate of the expected cost of a policy.
    McCost {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = PolicyArg::Optimal)]
        policy: PolicyArg,
        /// Round-trip fraction of the poisson-arb policy.
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
    },
    /// Check the no-manipulation conditions.
    PmsCheck(RunArgs),
    /// Poisson round trip on one path, with its closed-form expected cost.
    PoissonArb {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
    },
    /// Both panels of the illustration plus the OW benchmark.
    Figure1 {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        grid_step: Option<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        no_timestamp: bool,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON configuration file.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    grid_step: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Leave the `generated_at` field out of JSON artifacts.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Feedback,
    Explicit,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Optimal,
    Ow,
    PoissonArb,
}

#[derive(Debug)]
enum Failure {
    Config(ConfigError),
    Numeric(mihexec::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<mihexec::Error> for Failure {
    fn from(e: mihexec::Error) -> Self {
        Failure::Numeric(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numeric(e.into())
    }
}

/// Loaded configuration with the command-line overrides applied.
struct Run {
    cfg: RunConfig,
    seed: u64,
    paths: usize,
    grid_step: f64,
    out: PathBuf,
    timestamp: bool,
}

impl Run {
    fn load(args: &RunArgs) -> Result<Self, Failure> {
        let cfg = RunConfig::load(&args.config)?;
        let paths = args.paths.unwrap_or(cfg.numerics.n_paths);
        if paths < 2 {
            return Err(ConfigError {
                path: "--paths".into(),
                message: format!("must be >= 2, got {paths}"),
            }
            .into());
        }
        let grid_step = args.grid_step.unwrap_or_else(|| cfg.grid_step());
        if !(grid_step.is_finite() && grid_step > 0.0) {
            return Err(ConfigError {
                path: "--grid-step".into(),
                message: format!("must be > 0, got {grid_step}"),
            }
            .into());
        }
        std::fs::create_dir_all(&args.out)?;
        Ok(Self {
            seed: args.seed.unwrap_or(cfg.numerics.seed),
            paths,
            grid_step,
            out: args.out.clone(),
            timestamp: !args.no_timestamp,
            cfg,
        })
    }

    fn write_json(&self, name: &str, value: Value) -> Result<PathBuf, Failure> {
        write_json(&self.out, name, value, self.timestamp)
    }
}

fn write_json(dir: &Path, name: &str, mut value: Value, timestamp: bool) -> Result<PathBuf, Failure> {
    if timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        if let Value::Object(map) = &mut value {
            map.insert("generated_at".into(), json!(secs));
        }
    }
    let file = dir.join(name);
    let mut text = serde_json::to_string_pretty(&value).map_err(mihexec::Error::from)?;
    text.push('\n');
    std::fs::write(&file, text)?;
    Ok(file)
}

fn simulate_cmd(args: &RunArgs) -> Result<Vec<PathBuf>, Failure> {
    let run = Run::load(args)?;
    let path = simulate(&run.cfg.spec(), run.cfg.execution.horizon, run.seed)?;
    let file = run.out.join("events.csv");
    path.write_csv(File::create(&file)?)?;
    Ok(vec![file])
}

fn execute_cmd(args: &RunArgs, mode: ModeArg) -> Result<Vec<PathBuf>, Failure> {
    let run = Run::load(args)?;
    let problem = run.cfg.problem();
    let strat = OptimalStrategy::new(problem.clone())?;
    let path = simulate(&problem.spec, problem.horizon, run.seed)?;
    let (mode, label) = match mode {
        ModeArg::Feedback => (Mode::Feedback, "feedback"),
        ModeArg::Explicit => (Mode::Explicit, "explicit"),
    };
    let exec = strat.execute(&path, mode, run.grid_step)?;
    let csv = run.out.join("trajectory.csv");
    write_trajectory_csv(&exec.trajectory, File::create(&csv)?)?;
    let summary = json!({
        "mode": label,
        "seed": run.seed,
        "grid_step": run.grid_step,
        "n_events": path.events.len(),
        "cost": exec.cost,
        "value_function": strat.initial_value()?,
        "optimal_x0": strat.optimal_initial_position(problem.d0, problem.delta0()),
    });
    Ok(vec![csv, run.write_json("execution.json", summary)?])
}

fn value_cmd(args: &RunArgs) -> Result<Vec<PathBuf>, Failure> {
    let run = Run::load(args)?;
    let problem = run.cfg.problem();
    let strat = OptimalStrategy::new(problem.clone())?;
    let summary = json!({
        "t": 0.0,
        "x0": problem.x0,
        "D0": problem.d0,
        "S0": problem.s0,
        "delta0": problem.delta0(),
        "sigma0": problem.sigma0(),
        "value_function": strat.initial_value()?,
        "ow_expected_cost": ow_expected_cost(problem.x0, problem.p0(), &problem.params, problem.horizon),
        "optimal_x0": strat.optimal_initial_position(problem.d0, problem.delta0()),
    });
    Ok(vec![run.write_json("value.json", summary)?])
}

fn mc_cost_cmd(args: &RunArgs, policy: PolicyArg, lambda: f64) -> Result<Vec<PathBuf>, Failure> {
    let run = Run::load(args)?;
    let problem = run.cfg.problem();
    let policy = match policy {
        PolicyArg::Optimal => CostPolicy::Optimal,
        PolicyArg::Ow => CostPolicy::Ow,
        PolicyArg::PoissonArb => CostPolicy::PoissonArb(lambda),
    };
    let est = estimate_cost(&policy, &problem, run.paths, run.seed, run.grid_step)?;
    let results = McResults::new(&policy, &problem, run.seed, run.grid_step, &est)?;
    let value = serde_json::to_value(results).map_err(mihexec::Error::from)?;
    Ok(vec![run.write_json("mc_cost.json", value)?])
}

fn pms_check_cmd(args: &RunArgs) -> Result<Vec<PathBuf>, Failure> {
    let run = Run::load(args)?;
    let report = mihm_diagnosis(&run.cfg.problem())?;
    let value = serde_json::to_value(report).map_err(mihexec::Error::from)?;
    Ok(vec![run.write_json("pms_check.json", value)?])
}

fn poisson_arb_cmd(args: &RunArgs, lambda: f64) -> Result<Vec<PathBuf>, Failure> {
    let run = Run::load(args)?;
    let h = &run.cfg.hawkes;
    let excited = h.phi_s.iter().chain(&h.phi_c).any(|t| t.coef != 0.0);
    if h.beta != 0.0 || excited || h.kappa0_plus != h.kappa0_minus {
        return Err(ConfigError {
            path: "hawkes".into(),
            message: "poisson-arb needs beta = 0, no excitation and kappa0_plus = kappa0_minus".into(),
        }
        .into());
    }
    let problem = run.cfg.problem();
    let path = simulate(&problem.spec, problem.horizon, run.seed)?;
    let schedule = poisson_arbitrage(lambda, &path, &problem.params)?;
    let init = MarketState::new(problem.s0, problem.d0, 0.0);
    let r = replay(&path, &schedule, init, &problem.params, true)?;
    let csv = run.out.join("poisson_arb.csv");
    write_trace_csv(&r.trace, File::create(&csv)?)?;
    let m2 = problem.spec.marks.m2();
    let kappa0 = h.kappa0_plus;
    let summary = json!({
        "lambda": lambda,
        "seed": run.seed,
        "n_events": path.events.len(),
        "realized_cost": r.cost,
        "expected_cost": poisson_arbitrage_cost(lambda, kappa0, m2, &problem.params, problem.horizon)?,
        "optimal_round_trip_cost": poisson_optimal_cost(0.0, kappa0, m2, &problem.params, problem.horizon)?,
    });
    Ok(vec![csv, run.write_json("poisson_arb.json", summary)?])
}

fn figure1_cmd(seed: Option<u64>, grid_step: Option<f64>, out: &Path, timestamp: bool) -> Result<Vec<PathBuf>, Failure> {
    let grid_step = grid_step.unwrap_or(figure1::HORIZON / mihexec::montecarlo::DEFAULT_GRID_STEPS as f64);
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(ConfigError {
            path: "--grid-step".into(),
            message: format!("must be > 0, got {grid_step}"),
        }
        .into());
    }
    let seed = seed.unwrap_or(0);
    let fig = figure1::run(seed, grid_step)?;
    let mut written = fig.write(out)?;
    let summary = json!({
        "seed": seed,
        "grid_step": grid_step,
        "n_events": fig.path.events.len(),
        "rho25": {
            "cost": fig.reverting.cost,
            "opposite_share": figure1::reaction_share(&fig.path, &fig.reverting, true),
        },
        "rho16": {
            "cost": fig.trending.cost,
            "same_sign_share": figure1::reaction_share(&fig.path, &fig.trending, false),
        },
        "ow_cost": fig.ow.cost,
    });
    written.push(write_json(out, "figure1.json", summary, timestamp)?);
    Ok(written)
}

fn dispatch(command: &Command) -> Result<Vec<PathBuf>, Failure> {
    match command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Execute { run, mode } => execute_cmd(run, *mode),
        Command::Value(a) => value_cmd(a),
        Command::McCost { run, policy, lambda } => mc_cost_cmd(run, *policy, *lambda),
        Command::PmsCheck(a) => pms_check_cmd(a),
        Command::PoissonArb { run, lambda } => poisson_arb_cmd(run, *lambda),
        Command::Figure1 {
            seed,
            grid_step,
            out,
            no_timestamp,
        } => figure1_cmd(*seed, *grid_step, out, !no_timestamp),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error at {e}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
