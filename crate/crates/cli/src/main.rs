use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mininfo::adversary::{self, NoSample};
use mininfo::components::end_component_report;
use mininfo::mdp::{self, Mdp};
use mininfo::synthesis::{self, load_policy_file, Agent, Mode, PolicyFile, SolverOptions, Status, Synthesis, SynthesisError};
use mininfo::worlds::{self, GridSpec};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "mininfo", version, about = "Minimum-information policy synthesis for MDPs")]
struct Cli {
    /// worker threads for path simulation and subset search (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check an MDP file for structural errors
    Validate(ModelArgs),
    /// Report maximal and unobserved maximal end components
    Analyze(ModelArgs),
    /// Synthesize a minimum-information admissible policy
    Synthesize(SynthArgs),
    /// Simulate paths and estimate transition probabilities at observed states
    Simulate(SimArgs),
    /// Cramer-Rao lower bounds of a policy
    Bounds(BoundArgs),
    /// Generate a grid-world MDP from a spec
    Grid(GridArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    mdp: PathBuf,
    /// output file (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long, default_value = "closed")]
    mode: Mode,
    /// final barrier parameter
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solve: SolveArgs,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// policy file written by `synthesize`
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    /// maximum transitions per path (default: 10 per state)
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// per-state CSV with columns state,count,mse,bound
    #[arg(long)]
    csv: Option<PathBuf>,
    /// leave observed states without samples out of the MSE totals
    #[arg(long)]
    exclude_unsampled: bool,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    policy: PathBuf,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// grid spec JSON
    #[arg(long)]
    spec: PathBuf,
    /// MDP output file (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
    /// also synthesize a policy on the generated MDP
    #[arg(long)]
    synthesize: bool,
    #[command(flatten)]
    solve: SolveArgs,
    /// policy output file for --synthesize
    #[arg(long)]
    policy_out: Option<PathBuf>,
    /// residence-time heatmap CSV for --synthesize
    #[arg(long)]
    heatmap: Option<PathBuf>,
    /// overrides the weight of every exit group
    #[arg(long)]
    exit_weight: Option<f64>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<SynthesisError> for Failure {
    fn from(e: SynthesisError) -> Self {
        let code = match e {
            SynthesisError::Numerical { .. } => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate(args) => validate(&args),
        Command::Analyze(args) => {
            let m = load_mdp(&args.mdp)?;
            emit(args.out.as_deref(), &to_json(&end_component_report(&m)))
        }
        Command::Synthesize(args) => {
            let m = load_mdp(&args.model.mdp)?;
            let s = solve(&m, &args.solve, Vec::new())?;
            write_policy(&m, &s, args.model.out.as_deref())
        }
        Command::Simulate(args) => simulate(&args),
        Command::Bounds(args) => {
            let m = load_mdp(&args.model.mdp)?;
            let agent = load_agent(&m, &args.policy)?;
            let b = adversary::agent_bounds(&m, &agent).map_err(Failure::input)?;
            emit(args.model.out.as_deref(), &to_json(&b))
        }
        Command::Grid(args) => grid(&args),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_mdp(path: &Path) -> Result<Mdp, Failure> {
    let m = Mdp::from_json_str(&read(path)?).map_err(Failure::input)?;
    let violations = mdp::validate(&m);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Failure::input(format!("invalid MDP: {}", list.join("; "))));
    }
    for w in mdp::warnings(&m) {
        eprintln!("warning: {w}");
    }
    Ok(m)
}

fn load_agent(m: &Mdp, path: &Path) -> Result<Agent, Failure> {
    let file: PolicyFile = serde_json::from_str(&read(path)?).map_err(|e| Failure::input(format!("malformed policy file: {e}")))?;
    load_policy_file(m, &file).map_err(Failure::input)
}

#[derive(Serialize)]
struct ValidationReport {
    valid: bool,
    violations: Vec<mdp::Violation>,
    warnings: Vec<mdp::Warning>,
}

fn validate(args: &ModelArgs) -> Result<(), Failure> {
    let m = Mdp::from_json_str(&read(&args.mdp)?).map_err(Failure::input)?;
    let violations = mdp::validate(&m);
    let report = ValidationReport {
        valid: violations.is_empty(),
        violations,
        warnings: mdp::warnings(&m),
    };
    emit(args.out.as_deref(), &to_json(&report))?;
    if report.valid {
        Ok(())
    } else {
        Err(Failure::input(format!("{} violation(s)", report.violations.len())))
    }
}

fn solve(m: &Mdp, args: &SolveArgs, penalties: Vec<synthesis::GroupPenalty>) -> Result<Synthesis, Failure> {
    let opts = SolverOptions {
        mu_final: args.tol,
        penalties,
        ..SolverOptions::default()
    };
    let s = synthesis::synthesize(m, args.mode, &opts)?;
    eprintln!(
        "status={} objective={} reach_prob={} max_reach={} mode={}",
        s.status, s.objective, s.reach_prob, s.feasibility.max_reach, s.mode
    );
    if s.status == Status::Infeasible {
        return Err(Failure {
            code: 3,
            message: format!(
                "no admissible policy: maximum reach probability {} is below the threshold {}",
                s.feasibility.max_reach, s.feasibility.threshold
            ),
        });
    }
    Ok(s)
}

fn write_policy(m: &Mdp, s: &Synthesis, out: Option<&Path>) -> Result<(), Failure> {
    let file = PolicyFile::from_synthesis(m, s)?.expect("feasible synthesis has a policy");
    emit(out, &to_json(&file))
}

#[derive(Serialize)]
struct CsvRow<'a> {
    state: &'a str,
    count: u64,
    mse: Option<f64>,
    bound: Option<f64>,
}

fn simulate(args: &SimArgs) -> Result<(), Failure> {
    if args.paths == 0 {
        return Err(Failure::input("--paths must be at least 1"));
    }
    let m = load_mdp(&args.model.mdp)?;
    let agent = load_agent(&m, &args.policy)?;
    let horizon = args.horizon.unwrap_or_else(|| adversary::default_horizon(&m));
    if horizon == 0 {
        return Err(Failure::input("--horizon must be at least 1"));
    }
    let paths = adversary::simulate_paths(&m, &agent, args.paths, horizon, args.seed).map_err(Failure::input)?;
    let no_sample = if args.exclude_unsampled {
        NoSample::Exclude
    } else {
        NoSample::Uniform
    };
    let mut report = adversary::mse_report(adversary::estimate(&paths, &m), &m, &agent, no_sample).map_err(Failure::input)?;
    match adversary::agent_bounds(&m, &agent) {
        Ok(b) => {
            for e in report.states.iter_mut() {
                e.bound = b.states.iter().find(|s| s.state == e.state).map(|s| s.bound);
            }
            report.bounds = Some(b);
        }
        Err(e) => eprintln!("warning: no bounds: {e}"),
    }
    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path).map_err(Failure::input)?;
        for e in &report.states {
            w.serialize(CsvRow {
                state: &e.state,
                count: e.count,
                mse: e.mse,
                bound: e.bound,
            })
            .map_err(Failure::input)?;
        }
        w.flush().map_err(Failure::input)?;
    }
    emit(args.model.out.as_deref(), &to_json(&report))
}

fn grid(args: &GridArgs) -> Result<(), Failure> {
    let mut spec = GridSpec::from_json_str(&read(&args.spec)?).map_err(Failure::input)?;
    if let Some(w) = args.exit_weight {
        for g in spec.exit_groups.iter_mut() {
            g.weight = w;
        }
    }
    let m = worlds::build_grid_mdp(&spec).map_err(Failure::input)?;
    emit(args.out.as_deref(), &format!("{}\n", m.to_json_string()))?;
    if !args.synthesize {
        return Ok(());
    }
    let penalties = worlds::exit_information_terms(&spec, &m).map_err(Failure::input)?;
    let s = solve(&m, &args.solve, penalties)?;
    if let Some(p) = &args.policy_out {
        write_policy(&m, &s, Some(p))?;
    }
    if let Some(p) = &args.heatmap {
        let x = s.solution.as_ref().map(|sol| sol.state_residence()).unwrap_or_default();
        let x: Vec<f64> = x.into_iter().take(m.num_states()).collect();
        let csv = worlds::export_heatmap(&m, &x).map_err(Failure::input)?;
        fs::write(p, csv).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}
