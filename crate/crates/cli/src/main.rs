mod config;

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use tsocs_core::harness::{
    ablate, bench, gen, landscape, local_minima, tradeoff, write_csv, BenchSpec, FinalVelocityMode, LandscapeSpec,
    ProblemFile,
};
use tsocs_core::simulator::Mode;
use tsocs_core::{solve, t_upper_bound, Problem, State, Vec2};

use config::{Preset, Settings};

#[derive(Debug, Parser)]
#[command(name = "tsocs", version, about = "Time-optimal control of omnidirectional robots with bounded acceleration")]
struct Cli {
    /// Settings file (TOML, or JSON with a .json extension).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Controller preset, used unless the settings file has a controller table.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a problem file.
    Gen(GenArgs),
    /// Solve every problem in a file once.
    Solve(SolveArgs),
    /// Closed-loop simulation of one mode at one noise level.
    Simulate(SimulateArgs),
    /// Solver failure rates for the five ablation rows.
    Ablate(AblateArgs),
    /// Closed-loop runs over several modes and noise levels.
    Bench(BenchArgs),
    /// Final errors against β_min.
    Tradeoff(TradeoffArgs),
    /// F_BV on a grid over (α₁, α₄, T) with α₂ = 1.
    Landscape(LandscapeArgs),
}

#[derive(Debug, Args)]
struct Output {
    /// Result file (default: stdout).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SummaryOutput {
    /// Result CSV (default: stdout).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Summary JSON (default: stdout when --out is given, else stderr).
    #[arg(long, value_name = "FILE")]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimFlags {
    #[arg(long)]
    seed: Option<u64>,
    /// Control rate in Hz.
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, value_parser = parse_final_vel)]
    final_vel: Option<FinalVelocityMode>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct SolveArgs {
    problems: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    problems: PathBuf,
    #[arg(long, default_value = "tsocs", value_parser = parse_mode)]
    mode: Mode,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    beta_min: Option<f64>,
    #[command(flatten)]
    sim: SimFlags,
    #[command(flatten)]
    output: SummaryOutput,
}

#[derive(Debug, Args)]
struct AblateArgs {
    problems: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct BenchArgs {
    problems: PathBuf,
    /// Comma-separated modes.
    #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
    modes: Vec<Mode>,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    noise: Vec<f64>,
    #[arg(long)]
    beta_min: Option<f64>,
    #[command(flatten)]
    sim: SimFlags,
    #[command(flatten)]
    output: SummaryOutput,
}

#[derive(Debug, Args)]
struct TradeoffArgs {
    problems: PathBuf,
    /// Comma-separated β_min values in (0, 1].
    #[arg(long, value_delimiter = ',')]
    beta_min: Vec<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[command(flatten)]
    sim: SimFlags,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct LandscapeArgs {
    /// Problem file; without it the grid is built for the rest to
    /// X = (1, 0), V = (-2, 4) problem with u_max = 1.
    #[arg(long)]
    problems: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    #[command(flatten)]
    output: SummaryOutput,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_final_vel(s: &str) -> Result<FinalVelocityMode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct SolveRow {
    index: usize,
    success: bool,
    cost: f64,
    alpha1: f64,
    alpha2: f64,
    alpha3: f64,
    alpha4: f64,
    duration: f64,
    t_max: f64,
    stage1_cost: f64,
    stage1_iterations: usize,
    stage2_iterations: usize,
    solve_ms: f64,
}

#[derive(Debug, Serialize)]
struct LandscapeSummary {
    problem: tsocs_core::harness::ProblemRecord,
    solution_cost: f64,
    solution_duration: f64,
    t_max: f64,
    grid: LandscapeSpec,
    min_cost: f64,
    local_minima: Vec<tsocs_core::harness::LandscapeCell>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    if let Some(p) = cli.preset {
        settings.preset = p;
    }
    if cli.workers.is_some() {
        settings.workers = cli.workers;
    }
    match cli.command {
        Command::Gen(a) => cmd_gen(&settings, a),
        Command::Solve(a) => cmd_solve(&settings, a),
        Command::Simulate(a) => cmd_simulate(settings, a),
        Command::Ablate(a) => cmd_ablate(&settings, a),
        Command::Bench(a) => cmd_bench(settings, a),
        Command::Tradeoff(a) => cmd_tradeoff(settings, a),
        Command::Landscape(a) => cmd_landscape(&settings, a),
    }
}

fn load_problems(path: &Path) -> Result<Vec<Problem>> {
    let file = ProblemFile::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(file.problems()?)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_csv<T: Serialize>(path: Option<&Path>, rows: &[T]) -> Result<()> {
    write_csv(sink(path)?, rows)?;
    Ok(())
}

fn emit_summary<T: Serialize>(output: &SummaryOutput, summary: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)? + "\n";
    match (&output.summary, &output.out) {
        (Some(p), _) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        (None, Some(_)) => io::stdout().write_all(text.as_bytes())?,
        (None, None) => io::stderr().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn apply_sim_flags(settings: &mut Settings, flags: &SimFlags) {
    if let Some(s) = flags.seed {
        settings.sim.seed = s;
    }
    if let Some(r) = flags.rate {
        settings.sim.rate = r;
    }
}

fn apply_beta_min(settings: &mut Settings, beta_min: Option<f64>) {
    if let Some(b) = beta_min {
        let mut c = settings.controller();
        c.beta_min = b;
        settings.controller = Some(c);
    }
}

fn cmd_gen(settings: &Settings, a: GenArgs) -> Result<()> {
    let mut spec = settings.sampler;
    if let Some(c) = a.count {
        spec.count = c;
    }
    if let Some(m) = a.final_vel {
        spec.final_vel_mode = m;
    }
    let file = gen(&spec, a.seed.unwrap_or(settings.sim.seed))?;
    let text = file.to_json()? + "\n";
    sink(a.output.out.as_deref())?.write_all(text.as_bytes())?;
    Ok(())
}

fn cmd_solve(settings: &Settings, a: SolveArgs) -> Result<()> {
    let problems = load_problems(&a.problems)?;
    let cfg = settings.solver();
    cfg.validate()?;
    let rows = tsocs_core::harness::run_parallel(problems.len(), settings.workers, |i| {
        let p = &problems[i];
        let r = solve(p, &cfg);
        let [alpha1, alpha2, alpha3, alpha4] = r.params.alpha();
        SolveRow {
            index: i,
            success: r.success,
            cost: r.cost,
            alpha1,
            alpha2,
            alpha3,
            alpha4,
            duration: r.params.duration,
            t_max: t_upper_bound(p),
            stage1_cost: r.stage1_cost,
            stage1_iterations: r.stage1_iterations,
            stage2_iterations: r.stage2_iterations,
            solve_ms: r.wall_time * 1e3,
        }
    })?;
    emit_csv(a.output.out.as_deref(), &rows)
}

fn run_bench(settings: &Settings, problems: &[Problem], spec: &BenchSpec, output: &SummaryOutput) -> Result<()> {
    let out = bench(problems, &settings.controller(), &settings.sim, spec, settings.workers)?;
    emit_csv(output.out.as_deref(), &out.records)?;
    emit_summary(output, &out)
}

fn cmd_simulate(mut settings: Settings, a: SimulateArgs) -> Result<()> {
    let problems = load_problems(&a.problems)?;
    apply_sim_flags(&mut settings, &a.sim);
    apply_beta_min(&mut settings, a.beta_min);
    let spec = BenchSpec {
        modes: vec![a.mode],
        noise_levels: vec![a.noise.unwrap_or(settings.sim.noise_level)],
        ..settings.bench.clone()
    };
    run_bench(&settings, &problems, &spec, &a.output)
}

fn cmd_ablate(settings: &Settings, a: AblateArgs) -> Result<()> {
    let problems = load_problems(&a.problems)?;
    let rows = ablate(&problems, &settings.solver(), settings.workers)?;
    emit_csv(a.output.out.as_deref(), &rows)
}

fn cmd_bench(mut settings: Settings, a: BenchArgs) -> Result<()> {
    let problems = load_problems(&a.problems)?;
    apply_sim_flags(&mut settings, &a.sim);
    apply_beta_min(&mut settings, a.beta_min);
    let mut spec = settings.bench.clone();
    if !a.modes.is_empty() {
        spec.modes = a.modes;
    }
    if !a.noise.is_empty() {
        spec.noise_levels = a.noise;
    }
    run_bench(&settings, &problems, &spec, &a.output)
}

fn cmd_tradeoff(mut settings: Settings, a: TradeoffArgs) -> Result<()> {
    let problems = load_problems(&a.problems)?;
    apply_sim_flags(&mut settings, &a.sim);
    let betas = if a.beta_min.is_empty() {
        settings.tradeoff.beta_mins.clone()
    } else {
        a.beta_min
    };
    let sim = tsocs_core::simulator::SimConfig {
        noise_level: a.noise.unwrap_or(settings.tradeoff.noise_level),
        ..settings.sim
    };
    let rows = tradeoff(&problems, &settings.controller(), &sim, &betas, settings.workers)?;
    emit_csv(a.output.out.as_deref(), &rows)
}

fn figure_problem() -> Problem {
    Problem {
        initial: State::default(),
        goal: State::new(Vec2::new(1.0, 0.0), Vec2::new(-2.0, 4.0)),
        u_max: 1.0,
    }
}

fn cmd_landscape(settings: &Settings, a: LandscapeArgs) -> Result<()> {
    let problem = match &a.problems {
        Some(path) => {
            let problems = load_problems(path)?;
            match problems.get(a.index) {
                Some(p) => *p,
                None => bail!("{} holds {} problems, index {} requested", path.display(), problems.len(), a.index),
            }
        }
        None => figure_problem(),
    };
    let solved = solve(&problem, &settings.solver());
    let half_width = a.half_width.unwrap_or(settings.landscape.half_width);
    let count = a.count.unwrap_or(settings.landscape.count);
    let spec = LandscapeSpec::around(&solved.params, half_width, count);
    let cells = landscape(&problem, &spec)?;
    let min_cost = cells.iter().filter(|c| !c.singular).map(|c| c.cost).fold(f64::INFINITY, f64::min);
    let local_minima = local_minima(&spec, &cells).into_iter().map(|k| cells[k]).collect();
    emit_csv(a.output.out.as_deref(), &cells)?;
    emit_summary(
        &a.output,
        &LandscapeSummary {
            problem: (&problem).into(),
            solution_cost: solved.cost,
            solution_duration: solved.params.duration,
            t_max: t_upper_bound(&problem),
            grid: spec,
            min_cost,
            local_minima,
        },
    )
}
