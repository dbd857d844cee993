//! Command-line front end: deployment generation, bound reports, parameter
//! sweeps, and the estimator-versus-bound study.
//!
//! Exit codes: 0 on success (including `--help` and `--version`), 1 for
//! usage problems (bad flags, unreadable or malformed configuration), 2
//! when the requested computation fails.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use micrlb::crlb::{compare_modes, crlb_paper, crlb_standard};
use micrlb::deployment::{parse_scene, write_scene};
use micrlb::experiments::{
    efficiency_study, emit_csv, emit_efficiency_csv, emit_plot_svg, run_sweep,
};
use micrlb::fim::{fim_oracle_fd, fim_oracle_mc, fim_paper, fim_standard};
use micrlb::{
    CrlbOptions, CrlbReport, EfficiencyRow, FimMatrix, FimMode, MeasurementGraph, MiError,
    SweepConfig,
};

use config::{default_text, RunConfig};

#[derive(Parser)]
#[command(
    name = "micrlb",
    version,
    about = "Localization error bounds for magnetic-induction sensor networks"
)]
struct Cli {
    /// Worker threads (0 = one per core). Overrides MICRLB_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a seeded deployment and write its scene file.
    Generate {
        /// Run configuration; built-in defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Deployment seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scene file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Bound report for one scene file.
    Crlb(CrlbArgs),
    /// Monte-Carlo parameter sweep driven by a run configuration.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimator RMSE against the bound on a fixed deployment.
    Efficiency {
        #[arg(long)]
        config: PathBuf,
        /// Override estimator.trials from the configuration.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Configuration file helpers.
    Config {
        /// Print the built-in defaults with every key spelled out.
        #[arg(long)]
        defaults: bool,
    },
}

#[derive(Args)]
struct CrlbArgs {
    /// Scene file produced by `generate`.
    #[arg(long)]
    scene: PathBuf,
    /// Information matrix construction: standard, paper, oracle-mc or
    /// oracle-fd.
    #[arg(long, default_value = "standard")]
    fim_mode: String,
    /// Measurement samples for the oracle constructions.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Finite-difference step in meters for oracle-fd; defaults to 1e-4 of
    /// the scene diameter.
    #[arg(long)]
    fd_step: Option<f64>,
    /// Sampling seed for the oracle constructions.
    #[arg(long, default_value_t = 0)]
    oracle_seed: u64,
    /// Also build the transcribed matrix and report how far the two
    /// constructions disagree.
    #[arg(long)]
    compare_modes: bool,
    /// Write the dense information matrix to this path, one
    /// whitespace-separated row per line.
    #[arg(long)]
    fim_out: Option<PathBuf>,
    /// Condition number beyond which a matrix counts as singular.
    #[arg(long, default_value_t = 1e12)]
    cond_threshold: f64,
    /// Report pseudo-inverse bounds instead of infinities when singular.
    #[arg(long)]
    pseudo_inverse: bool,
}

enum CliError {
    Usage(String),
    Compute(String),
}

impl From<MiError> for CliError {
    fn from(e: MiError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version land here too; they are not failures.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Err(e) = init_threads(cli.threads) {
        return report(e);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    match e {
        CliError::Usage(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        CliError::Compute(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Resolve the worker count (flag beats MICRLB_THREADS) and size the global
/// pool before any parallel work runs. 0 or absent keeps the default.
fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("MICRLB_THREADS") {
            Ok(s) => s.trim().parse::<usize>().map_err(|_| {
                CliError::Usage(format!("MICRLB_THREADS must be an integer, got '{s}'"))
            })?,
            Err(_) => 0,
        },
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Compute(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate { config, seed, out } => cmd_generate(config.as_deref(), seed, &out),
        Command::Crlb(args) => cmd_crlb(&args),
        Command::Sweep { config } => cmd_sweep(&config),
        Command::Efficiency { config, trials } => cmd_efficiency(&config, trials),
        Command::Config { defaults } => cmd_config(defaults),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = read_input(p)?;
            RunConfig::parse(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
        }
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Compute(format!("cannot write {}: {e}", path.display())))
}

/// Nine significant digits, the same shape the CSV emitters use.
fn fmt9(v: f64) -> String {
    format!("{v:.8e}")
}

fn cmd_generate(config: Option<&Path>, seed: u64, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let (deployment, graph) = cfg.scenario.realize(seed)?;
    write_output(out, &write_scene(&deployment, &graph))?;
    println!(
        "wrote {}: {} anchors, {} things, {} edges, seed {}",
        out.display(),
        deployment.anchors.len(),
        deployment.things.len(),
        graph.edges.len(),
        seed
    );
    Ok(())
}

fn parse_fim_mode(s: &str) -> Result<FimMode, CliError> {
    FimMode::from_str(&s.replace('-', "_")).map_err(|e| CliError::Usage(e.to_string()))
}

/// Bounding-box diagonal of the node positions, the reference length for
/// the finite-difference step.
fn scene_diameter(positions: &[[f64; 3]]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in positions {
        for axis in 0..3 {
            lo[axis] = lo[axis].min(p[axis]);
            hi[axis] = hi[axis].max(p[axis]);
        }
    }
    ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt()
}

fn build_fim(
    args: &CrlbArgs,
    graph: &MeasurementGraph,
    positions: &[[f64; 3]],
    mode: FimMode,
) -> Result<FimMatrix, CliError> {
    let fim = match mode {
        FimMode::Standard => fim_standard(graph, positions)?,
        FimMode::Paper => fim_paper(graph, positions)?,
        FimMode::OracleMc => fim_oracle_mc(graph, positions, args.samples, args.oracle_seed)?,
        FimMode::OracleFd => {
            let step = args.fd_step.unwrap_or(1e-4 * scene_diameter(positions));
            fim_oracle_fd(graph, positions, args.samples, step, args.oracle_seed)?
        }
    };
    Ok(fim)
}

fn print_report(report: &CrlbReport) {
    println!("condition_number = {}", fmt9(report.condition_number));
    println!("singular = {}", report.singular);
    for (i, b) in report.per_node.iter().enumerate() {
        println!("per_node[{i}] = {}", fmt9(*b));
    }
    println!("aggregate = {}", fmt9(report.aggregate));
}

fn cmd_crlb(args: &CrlbArgs) -> Result<(), CliError> {
    let mode = parse_fim_mode(&args.fim_mode)?;
    let (deployment, graph) = parse_scene(&read_input(&args.scene)?)?;
    let positions = deployment.positions();
    let opts = CrlbOptions {
        cond_threshold: args.cond_threshold,
        pseudo_inverse: args.pseudo_inverse,
    };

    let fim = build_fim(args, &graph, &positions, mode)?;
    if let Some(path) = &args.fim_out {
        write_output(path, &matrix_dump(&fim))?;
    }

    println!("mode = {}", mode.as_str());
    println!(
        "nodes = {} ({} anchors, {} things)",
        graph.node_count(),
        graph.anchor_count,
        graph.thing_count
    );
    println!("edges = {}", graph.edges.len());
    if let Some(se) = fim.stderr() {
        let max_se = se.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        println!("max_entry_se = {}", fmt9(max_se));
    }

    let report = crlb_standard(&fim, &opts)?;
    print_report(&report);
    if mode == FimMode::Paper {
        match crlb_paper(&fim, &opts) {
            Ok(v) => println!("paper_formula = {}", fmt9(v)),
            Err(e) => println!("paper_formula = singular ({e})"),
        }
    }

    if args.compare_modes {
        let cmp = compare_modes(&graph, &positions, &opts)?;
        println!("compare.standard_aggregate = {}", fmt9(cmp.standard.aggregate));
        println!("compare.paper_aggregate = {}", fmt9(cmp.paper.aggregate));
        match cmp.paper.paper_formula {
            Some(v) => println!("compare.paper_formula = {}", fmt9(v)),
            None => println!("compare.paper_formula = singular"),
        }
        println!("compare.rel_frobenius_gap = {}", fmt9(cmp.rel_frobenius_gap));
        println!("compare.max_abs_entry_gap = {}", fmt9(cmp.max_abs_entry_gap));
        println!("compare.paper_negative_diagonals = {}", cmp.paper_negative_diagonals);
    }
    Ok(())
}

/// Dense whitespace-separated matrix dump, one row per line, full
/// precision.
fn matrix_dump(fim: &FimMatrix) -> String {
    let m = fim.matrix();
    let mut out = String::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.17e}", m[(r, c)]);
        }
        out.push('\n');
    }
    out
}

fn cmd_sweep(config: &Path) -> Result<(), CliError> {
    let cfg = load_config(Some(config))?;
    let sweep = SweepConfig {
        base: cfg.scenario.clone(),
        parameter: cfg.sweep_parameter,
        values: cfg.sweep_values.clone(),
        trials: cfg.sweep_trials,
        master_seed: cfg.sweep_seed,
        fim_mode: cfg.fim_mode,
        allow_out_of_range: cfg.allow_out_of_range,
        crlb: cfg.crlb,
    };
    let result = run_sweep(&sweep)?;
    let csv = emit_csv(&result);

    match &cfg.out_csv {
        Some(path) => {
            write_output(path, &csv)?;
            for row in &result.rows {
                println!(
                    "{} = {}: mean {}, std {}, {}/{} singular, {}",
                    result.parameter.as_str(),
                    fmt9(row.value),
                    fmt9(row.mean_crlb),
                    fmt9(row.std_crlb),
                    row.singular,
                    row.trials,
                    row.status.as_str()
                );
            }
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    if let Some(path) = &cfg.out_plot {
        write_output(path, &emit_plot_svg(&result))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_efficiency(config: &Path, trials: Option<usize>) -> Result<(), CliError> {
    let cfg = load_config(Some(config))?;
    let trials = trials.unwrap_or(cfg.efficiency_trials);
    let rows = efficiency_study(
        &cfg.scenario,
        &cfg.efficiency_sigmas,
        trials,
        cfg.efficiency_starts,
        cfg.efficiency_seed,
        &cfg.solve,
    )?;

    for r in &rows {
        println!(
            "sigma {}: rmse {}, sqrt_crlb {}, se {}, {} trials",
            fmt9(r.sigma),
            fmt9(r.rmse),
            fmt9(r.sqrt_bound),
            fmt9(r.rmse_se),
            r.trials
        );
    }
    if let Some(path) = &cfg.out_csv {
        write_output(path, &emit_efficiency_csv(&rows))?;
        println!("wrote {}", path.display());
    }

    let violations: Vec<&EfficiencyRow> =
        rows.iter().filter(|r| r.rmse < r.sqrt_bound - 3.0 * r.rmse_se).collect();
    if violations.is_empty() {
        println!("bound respected at every noise level");
        Ok(())
    } else {
        let mut msg = String::from("estimator RMSE below the bound beyond its error bars at");
        for r in violations {
            let _ = write!(
                msg,
                " sigma {} (rmse {} < sqrt_crlb {} - 3 se {})",
                fmt9(r.sigma),
                fmt9(r.rmse),
                fmt9(r.sqrt_bound),
                fmt9(r.rmse_se)
            );
        }
        Err(CliError::Compute(msg))
    }
}

fn cmd_config(defaults: bool) -> Result<(), CliError> {
    if !defaults {
        return Err(CliError::Usage("nothing to do; pass --defaults".into()));
    }
    print!("{}", default_text());
    Ok(())
}
