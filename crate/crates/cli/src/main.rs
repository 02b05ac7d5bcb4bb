use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use socsim_core::bench::{run_benchmark, BenchError};
use socsim_core::calibrate::{calibrate_timing, measured_timing_anchors, Grid};
use socsim_core::config::SystemConfig;
use socsim_core::driver::{run_dual_driver, DriverOptions};
use socsim_core::dse::{check_ratios, recommend, study_space, sweep, SweepRow, SweepTable};
use socsim_core::exec::Execution;
use socsim_core::reference::{scores_csv, scores_markdown, VAX_MIPS_1_1, VAX_MIPS_2_1};
use socsim_core::resources::{estimate, DesignPoint};
use socsim_core::workload::synthesize;

/// Directory searched for relative `--config` paths not found in the
/// working directory.
const CONFIG_DIR_ENV: &str = "SOCSIM_CONFIG_DIR";

const EXIT_UNFIT: u8 = 1;
const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "socsim", version, about = "Multicore soft-processor SoC simulator and design-space explorer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark one configuration.
    Simulate(SimulateArgs),
    /// Benchmark every configuration of a design space.
    Sweep(SweepArgs),
    /// Check whether a configuration fits the device (exit 1 if not).
    Fit(FitArgs),
    /// Fit timing parameters to the measured anchor rows.
    Calibrate(CalibrateArgs),
    /// Write a synthetic trace, or the workload profile as a config.
    GenWorkload(GenWorkloadArgs),
    /// Run the two-CPU mailbox driver and print its transcript.
    DualDriver(DualDriverArgs),
    /// Sweep, recommendation, trade-off checks and reference scores.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
    PlotData,
}

#[derive(Args)]
struct Common {
    /// TOML configuration (defaults built in when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PointArgs {
    #[arg(long)]
    cpus: Option<u32>,
    #[arg(long)]
    ic_kb: Option<u32>,
    #[arg(long)]
    dc_kb: Option<u32>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    point: PointArgs,
    #[arg(long)]
    seed: u64,
    /// Measured iterations per core (default: [bench] iterations).
    #[arg(long)]
    iterations: Option<u64>,
    /// Simulate even if the configuration does not fit.
    #[arg(long)]
    allow_unfit: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Experiment1,
    Experiment2,
    Full,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: u64,
    /// Design space (default: the config's [sweep] section, else full).
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Run points one after another on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    point: PointArgs,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    /// Workload seed to fit on.
    #[arg(long)]
    seed: u64,
    /// Also search workload seeds 0..N (slow: one full grid per seed).
    #[arg(long)]
    search_seeds: Option<u64>,
    /// Residual report CSV path.
    #[arg(long)]
    residuals: Option<PathBuf>,
}

#[derive(Args)]
struct GenWorkloadArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    iterations: u64,
    /// Emit the workload profile as a config file instead of a trace.
    #[arg(long)]
    profile: bool,
}

#[derive(Args)]
struct DualDriverArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: u64,
    /// Driver loop rounds.
    #[arg(long, default_value_t = 10)]
    rounds: u64,
    /// Benchmark iterations per round on CPU1 (getter).
    #[arg(long, default_value_t = 100)]
    iterations: u64,
    /// Benchmark iterations per round on CPU2 (poster); defaults to --iterations.
    #[arg(long)]
    poster_iterations: Option<u64>,
    /// Mailbox capacity in messages (default: derived from the buffer).
    #[arg(long)]
    capacity: Option<u32>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long, value_enum, default_value = "markdown")]
    format: Format,
}

enum Failure {
    Unfit(String),
    Error(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Unfit(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_UNFIT)
        }
        Err(Failure::Error(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Fit(a) => fit(a),
        Command::Calibrate(a) => calibrate(a),
        Command::GenWorkload(a) => gen_workload(a),
        Command::DualDriver(a) => dual_driver(a),
        Command::Report(a) => report(a),
    }
}

fn resolve_config(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
            return Path::new(&dir).join(path);
        }
    }
    path.to_path_buf()
}

fn load_config(common: &Common) -> Result<SystemConfig, Failure> {
    match &common.config {
        Some(p) => Ok(SystemConfig::load(&resolve_config(p))?),
        None => Ok(SystemConfig::default()),
    }
}

fn apply_point(config: SystemConfig, p: &PointArgs) -> Result<SystemConfig, Failure> {
    let mut point = config.design_point();
    point.n_cpus = p.cpus.unwrap_or(point.n_cpus);
    point.ic_kb = p.ic_kb.unwrap_or(point.ic_kb);
    point.dc_kb = p.dc_kb.unwrap_or(point.dc_kb);
    let c = config.with_point(&point);
    c.validate()?;
    Ok(c)
}

fn emit(common: &Common, text: &str) -> Result<(), Failure> {
    match &common.out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Failure::Error(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render(table: &SweepTable, format: Format) -> String {
    match format {
        Format::Csv => table.to_csv(),
        Format::Markdown => table.to_markdown(),
        Format::PlotData => table.to_plot_data(),
    }
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let config = apply_point(load_config(&a.common)?, &a.point)?;
    let iterations = a.iterations.unwrap_or(config.bench.iterations);
    let result = match run_benchmark(&config, iterations, a.seed, a.allow_unfit) {
        Err(BenchError::DoesNotFit(report)) => {
            return Err(Failure::Unfit(format!(
                "configuration does not fit; pass --allow-unfit to simulate anyway\n{report}"
            )))
        }
        r => r?,
    };
    let row = SweepRow {
        point: result.point,
        m9k_used: result.resources.m9k_used,
        fits: result.resources.fits,
        result: Some(result),
    };
    emit(&a.common, &render(&SweepTable { rows: vec![row] }, a.format))
}

fn run_sweep(a: SweepArgs) -> Result<(), Failure> {
    let config = load_config(&a.common)?;
    let space = match (a.preset, &config.sweep) {
        (Some(Preset::Experiment1), _) => socsim_core::dse::experiment1_space(),
        (Some(Preset::Experiment2), _) => socsim_core::dse::experiment2_space(),
        (Some(Preset::Full), _) => study_space(),
        (None, Some(s)) => s.space()?,
        (None, None) => study_space(),
    };
    let exec = if a.sequential { Execution::Sequential } else { Execution::Parallel };
    let table = sweep(&config, &space, a.iterations.unwrap_or(config.bench.iterations), a.seed, exec)?;
    emit(&a.common, &render(&table, a.format))
}

fn fit(a: FitArgs) -> Result<(), Failure> {
    let config = apply_point(load_config(&a.common)?, &a.point)?;
    let est = estimate(&config.design_point(), &config.costs, &config.budget);
    emit(&a.common, &est.report())?;
    if est.fits {
        Ok(())
    } else {
        Err(Failure::Unfit(format!("{} does not fit", est.point.label())))
    }
}

fn calibrate(a: CalibrateArgs) -> Result<(), Failure> {
    let mut config = load_config(&a.common)?;
    let mut grid = Grid::default().with_seed(a.seed);
    if let Some(n) = a.search_seeds {
        grid.workload_seeds = (0..n).collect();
        if !grid.workload_seeds.contains(&a.seed) {
            grid.workload_seeds.push(a.seed);
        }
    }
    let cal = calibrate_timing(&config, &measured_timing_anchors(), &grid, Execution::Parallel)?;
    cal.params.apply(&mut config);
    let mut summary = format!(
        "fitted on workload seed {} ({} grid points, {} candidates rejected); max anchor error {:.2}%\n",
        cal.params.workload_seed,
        cal.grid_points,
        cal.rejected,
        cal.max_rel_error * 100.0
    );
    for c in &cal.ratio_checks {
        writeln!(summary, "check {}: {} = {:.4}", c.id, c.description, c.value).unwrap();
    }
    eprint!("{summary}");
    if let Some(path) = &a.residuals {
        std::fs::write(path, cal.residuals_csv())
            .map_err(|e| Failure::Error(format!("cannot write {}: {e}", path.display())))?;
    }
    emit(&a.common, &config.to_toml_string()?)
}

fn gen_workload(a: GenWorkloadArgs) -> Result<(), Failure> {
    let config = load_config(&a.common)?;
    if a.profile {
        return emit(&a.common, &config.to_toml_string()?);
    }
    let trace = synthesize(&config.workload, a.iterations, a.seed)?;
    emit(&a.common, &trace.to_text())
}

fn dual_driver(a: DualDriverArgs) -> Result<(), Failure> {
    let mut config = load_config(&a.common)?;
    if let Some(c) = a.capacity {
        config.mailbox.capacity = c;
    }
    let opts = DriverOptions {
        rounds: a.rounds,
        getter_iterations: a.iterations,
        poster_iterations: a.poster_iterations.unwrap_or(a.iterations),
    };
    let r = run_dual_driver(&config, a.seed, opts)?;
    let s = r.stats;
    eprintln!(
        "posts {} (accepted {}, full {}), gets {} (ok {}, empty {}), residue {}",
        s.posts,
        s.posts_accepted,
        s.full_rejections,
        s.gets,
        s.gets_successful,
        s.empty_rejections,
        r.residue.len()
    );
    emit(&a.common, &r.transcript())
}

fn report(a: ReportArgs) -> Result<(), Failure> {
    let config = load_config(&a.common)?;
    let space = match &config.sweep {
        Some(s) => s.space()?,
        None => study_space(),
    };
    let table = sweep(&config, &space, a.iterations.unwrap_or(config.bench.iterations), a.seed, Execution::Parallel)?;
    let rec = recommend(&table);
    let checks = check_ratios(&table).unwrap_or_default();
    let label = |p: Option<DesignPoint>| p.map_or_else(|| "none".to_owned(), |p| p.label());
    let mut out = String::new();
    match a.format {
        Format::Markdown => {
            out += "## Sweep\n\n";
            out += &table.to_markdown();
            writeln!(out, "\n## Recommendation\n\n{}\n", rec.rationale).unwrap();
            if !checks.is_empty() {
                out += "## Trade-off checks\n\n| Check | Value | Pass |\n|---|---:|:---:|\n";
                for c in &checks {
                    writeln!(
                        out,
                        "| ({}) {} | {:.4} | {} |",
                        c.id,
                        c.description,
                        c.value,
                        if c.pass { "yes" } else { "no" }
                    )
                    .unwrap();
                }
                out.push('\n');
            }
            out += "## Reference scores\n\n";
            out += &scores_markdown("Dhrystone 1.1", &VAX_MIPS_1_1);
            out.push('\n');
            out += &scores_markdown("Dhrystone 2.1", &VAX_MIPS_2_1);
        }
        Format::Csv => {
            out += &table.to_csv();
            writeln!(out, "\nrecommendation\n{}", label(rec.choice)).unwrap();
            if !checks.is_empty() {
                out += "\ncheck,value,pass\n";
                for c in &checks {
                    writeln!(out, "{},{:.4},{}", c.id, c.value, c.pass).unwrap();
                }
            }
            out += "\n";
            out += &scores_csv(&VAX_MIPS_1_1);
            out += "\n";
            out += &scores_csv(&VAX_MIPS_2_1);
        }
        Format::PlotData => {
            out += &table.to_plot_data();
        }
    }
    emit(&a.common, &out)
}
