//! Command-line surface: schedule single problems, generate random inputs,
//! run parameter sweeps, and verify schedules.
//!
//! Exit codes: 0 success, 1 infeasible instances or verification violations,
//! 2 usage or parse errors.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use gapsched::generator::{generate_dag, generate_preoccupation, GenParams, OccupancyParams};
use gapsched::io;
use gapsched::metrics::normalized_reward;
use gapsched::oracle::verify_schedule;
use gapsched::periodic::{schedule_periodic, SchedulerOptions};
use gapsched::sweep::{run_sweep, write_sweep_csv, Axis, SweepConfig};
use gapsched::types::{Rat, Tick};
use gapsched::workload::{validate_dag, DagSpec};
use gapsched::Platform;

#[derive(Parser)]
#[command(name = "gapsched", version, about = "QoS-aware gap scheduling of periodic DAGs on pre-occupied VMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Schedule DAGs onto a platform and write the hyper-schedule.
    Schedule(ScheduleArgs),
    /// Generate a random DAG and pre-occupied platform pair.
    Generate(GenerateArgs),
    /// Run the occupancy / CCR / processor-count experiment grids.
    Sweep(SweepArgs),
    /// Check a schedule file against every feasibility constraint.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ScheduleArgs {
    /// DAG JSON files.
    #[arg(required = false)]
    dags: Vec<PathBuf>,
    /// Platform JSON file.
    #[arg(long)]
    platform: PathBuf,
    /// Where to write the hyper-schedule JSON.
    #[arg(long, default_value = "schedule.json")]
    output: PathBuf,
    /// Optionally write a Gantt CSV (vm, start, finish, dag, task, level, origin).
    #[arg(long)]
    gantt: Option<PathBuf>,
    /// Hyperperiods to lay out; 2 doubles every cycle count.
    #[arg(long, default_value_t = 1)]
    repetition_factor: u32,
    /// Skip the quality-enhancement pass (base schedule only).
    #[arg(long)]
    no_enhance: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    n_tasks: usize,
    #[arg(long, default_value_t = 0.3)]
    edge_density: f64,
    #[arg(long, default_value_t = 2)]
    n_levels: u32,
    #[arg(long, default_value_t = 4)]
    n_vms: usize,
    /// Target pre-occupation in percent of the background period.
    #[arg(long, default_value_t = 30)]
    occupancy: u64,
    #[arg(long, default_value_t = 40)]
    background_period: Tick,
    #[arg(long, default_value_t = 2)]
    min_slot: Tick,
    /// Round the DAG period up to a multiple of this many ticks.
    #[arg(long, default_value_t = 1)]
    period_round_to: Tick,
    #[arg(long, default_value = "dag.json")]
    dag_out: PathBuf,
    #[arg(long, default_value = "platform.json")]
    platform_out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Full grids as in the evaluation writeup (sizes 10..50, 100 DAGs each).
    #[arg(long)]
    preset: Option<Preset>,
    /// Axes to run (occupancy, ccr, processors).
    #[arg(long, value_delimiter = ',')]
    axes: Vec<String>,
    /// DAG sizes to sweep.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long)]
    dags_per_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Occupancy percent held fixed while other axes vary.
    #[arg(long)]
    fixed_occupancy: Option<u64>,
    /// Output stem: writes <stem>.csv and <stem>_aggregate.csv.
    #[arg(long, default_value = "sweep")]
    output: PathBuf,
    /// Record per-cell wall time; off by default so outputs are byte-stable.
    #[arg(long)]
    timings: bool,
}

#[derive(Clone, clap::ValueEnum)]
enum Preset {
    PaperSweep,
}

#[derive(Args)]
struct VerifyArgs {
    /// DAG JSON files the schedule refers to.
    #[arg(required = false)]
    dags: Vec<PathBuf>,
    #[arg(long)]
    platform: PathBuf,
    #[arg(long)]
    schedule: PathBuf,
}

/// Errors that should surface as exit code 2 (bad input), carrying a
/// human-readable diagnostic.
struct UsageError(String);

impl<E: std::fmt::Display> From<E> for UsageError {
    fn from(e: E) -> Self {
        UsageError(e.to_string())
    }
}

fn load_problem(
    dag_paths: &[PathBuf],
    platform_path: &PathBuf,
) -> Result<(Vec<DagSpec>, Platform), UsageError> {
    let platform = io::load_platform(platform_path)?;
    platform.validate()?;
    let mut dags = Vec::new();
    for p in dag_paths {
        let dag = io::load_dag(p)?;
        let report = validate_dag(&dag, &platform);
        if let Some(v) = report.first() {
            return Err(UsageError(format!("{}: invalid DAG: {v}", p.display())));
        }
        dags.push(dag);
    }
    Ok((dags, platform))
}

fn write_gantt(
    path: &PathBuf,
    hs: &gapsched::HyperSchedule,
    platform: &Platform,
) -> Result<(), UsageError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| UsageError(e.to_string()))?;
    w.write_record(["vm", "start", "finish", "dag", "task", "level", "origin"])?;
    let span = hs
        .horizon()
        .max(platform.background_period)
        .next_multiple_of(platform.background_period);
    for vm in &platform.vms {
        let mut offset = 0;
        while offset < span {
            for (s, e) in platform.busy_pattern(&vm.vm_id) {
                if offset + s < span {
                    w.write_record([
                        vm.vm_id.as_str(),
                        &(offset + s).to_string(),
                        &(offset + e).min(span).to_string(),
                        "",
                        "",
                        "",
                        "background",
                    ])?;
                }
            }
            offset += platform.background_period;
        }
    }
    for e in &hs.entries {
        w.write_record([
            e.vm.as_str(),
            &e.start.to_string(),
            &e.finish.to_string(),
            e.instance.dag_id.as_str(),
            e.instance.source_task.as_str(),
            &e.level.to_string(),
            "scheduled",
        ])?;
    }
    w.flush().map_err(|e| UsageError(e.to_string()))?;
    Ok(())
}

fn cmd_schedule(args: &ScheduleArgs) -> Result<ExitCode, UsageError> {
    let (dags, platform) = load_problem(&args.dags, &args.platform)?;
    let opts = SchedulerOptions {
        repetition_factor: args.repetition_factor,
        enhance: !args.no_enhance,
    };
    let hs = schedule_periodic(&dags, &platform, opts)?;
    io::save_schedule(&args.output, &hs)?;
    if let Some(gantt) = &args.gantt {
        write_gantt(gantt, &hs, &platform)?;
    }
    let report = normalized_reward(&hs, &dags)?;
    println!(
        "hyperperiod {} x{}: {} entries, {} failed instances, NR {}%",
        hs.hyperperiod,
        hs.repetition_factor,
        hs.entries.len(),
        hs.failures.len(),
        report.nr_display(),
    );
    for f in &hs.failures {
        eprintln!("failed: {} cycle {}: {}", f.dag_id, f.cycle_index, f.reason);
    }
    Ok(if hs.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_generate(args: &GenerateArgs) -> Result<ExitCode, UsageError> {
    if args.occupancy >= 100 {
        return Err(UsageError("occupancy must be below 100 percent".into()));
    }
    let dag = generate_dag(&GenParams {
        n_tasks: args.n_tasks,
        edge_density: args.edge_density,
        n_levels: args.n_levels,
        n_vms: args.n_vms,
        period_round_to: args.period_round_to,
        seed: args.seed,
        ..GenParams::default()
    })?;
    let platform = generate_preoccupation(&OccupancyParams {
        n_vms: args.n_vms,
        occupancy_fraction: Rat::new(args.occupancy, 100),
        background_period: args.background_period,
        min_slot: args.min_slot,
        seed: args.seed,
    })?;
    io::save_dag(&args.dag_out, &dag)?;
    io::save_platform(&args.platform_out, &platform)?;
    println!(
        "wrote {} ({} tasks, period {}) and {} ({} VMs, {}% occupied)",
        args.dag_out.display(),
        dag.tasks.len(),
        dag.period,
        args.platform_out.display(),
        platform.vms.len(),
        args.occupancy,
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode, UsageError> {
    let mut config = match args.preset {
        Some(Preset::PaperSweep) => SweepConfig::default(),
        None => SweepConfig {
            dag_sizes: vec![10],
            dags_per_size: 10,
            ..SweepConfig::default()
        },
    };
    if !args.axes.is_empty() {
        config.axes = args
            .axes
            .iter()
            .map(|a| match a.as_str() {
                "occupancy" => Ok(Axis::Occupancy),
                "ccr" => Ok(Axis::Ccr),
                "processors" => Ok(Axis::Processors),
                other => Err(UsageError(format!("unknown axis `{other}`"))),
            })
            .collect::<Result<_, _>>()?;
    }
    if !args.sizes.is_empty() {
        config.dag_sizes = args.sizes.clone();
    }
    if let Some(n) = args.dags_per_size {
        config.dags_per_size = n;
    }
    if let Some(occ) = args.fixed_occupancy {
        config.fixed_occupancy = occ;
    }
    config.base_seed = args.seed;
    config.timings = args.timings;

    let result = run_sweep(&config)?;
    write_sweep_csv(&result, &args.output)?;
    println!(
        "{} rows, {} aggregates -> {}.csv",
        result.raw.len(),
        result.aggregate.len(),
        args.output.display(),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: &VerifyArgs) -> Result<ExitCode, UsageError> {
    let (dags, platform) = load_problem(&args.dags, &args.platform)?;
    let hs = io::load_schedule(&args.schedule)?;
    let report = verify_schedule(&hs, &dags, &platform);
    if report.is_empty() {
        println!("ok: {} entries, no violations", hs.entries.len());
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &report {
            println!("{v}");
        }
        eprintln!("{} violations", report.len());
        Ok(ExitCode::from(1))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Schedule(a) => cmd_schedule(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => code,
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
