//! `slotmesh-bench`: runs the pairwise/multi-peer scaling benchmark and
//! manages schedule files.
//!
//! Without a subcommand the benchmark runs: for every requested node count
//! it executes the round-robin (pairwise) and/or clique (multi-peer)
//! schedule the configured number of times, verifies that every node ended
//! up holding every other node's payload, and writes a CSV of per-count
//! means plus a sidecar summary with the quadratic fits. Exit code 0 means
//! all runs completed and verified.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use slotmesh::bench::{
    aggregate, emit_results, fit_quadratic, run_benchmark, BenchConfig, BenchMode, ModeChoice,
    TransportKind,
};
use slotmesh::schedule::SlotSchedule;

#[derive(Parser)]
#[command(
    name = "slotmesh-bench",
    about = "Slot-synchronized peer exchange benchmark",
    args_conflicts_with_subcommands = true
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    #[command(flatten)]
    bench: BenchArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or check schedule files.
    Schedule {
        #[command(subcommand)]
        action: ScheduleAction,
    },
}

#[derive(Subcommand)]
enum ScheduleAction {
    /// Write a generated schedule in the text format to a file or stdout.
    Gen {
        #[arg(long, value_enum)]
        kind: ScheduleKind,
        /// Number of nodes (>= 2).
        #[arg(long)]
        nodes: u32,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a schedule file and list every violation.
    Check { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleKind {
    RoundRobin,
    Clique,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,

    /// Node counts: a comma list like "10,20,30" or a range "a:b:step".
    #[arg(long, default_value = "10,20,30,40")]
    nodes: String,

    /// Repetitions per (mode, node count) configuration.
    #[arg(long, default_value_t = 10)]
    reps: u32,

    #[arg(long, value_enum, default_value_t = TransportArg::Sim)]
    transport: TransportArg,

    #[arg(long, default_value_t = 64)]
    payload_bytes: usize,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Receive watchdog in milliseconds; turns a wedged run into a failed
    /// run. Default: block indefinitely.
    #[arg(long)]
    timeout_ms: Option<u64>,

    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Pairwise,
    Multipeer,
    Both,
}

impl From<ModeArg> for ModeChoice {
    fn from(value: ModeArg) -> Self {
        match value {
            ModeArg::Pairwise => ModeChoice::Pairwise,
            ModeArg::Multipeer => ModeChoice::Multipeer,
            ModeArg::Both => ModeChoice::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Sim,
    Tcp,
}

impl From<TransportArg> for TransportKind {
    fn from(value: TransportArg) -> Self {
        match value {
            TransportArg::Sim => TransportKind::Sim,
            TransportArg::Tcp => TransportKind::TcpLoopback,
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Some(Command::Schedule { action }) => run_schedule_command(action),
        None => run_bench_command(cli.bench),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run_bench_command(args: BenchArgs) -> Result<ExitCode, String> {
    let node_counts = parse_node_counts(&args.nodes)?;
    let cfg = BenchConfig {
        mode: args.mode.into(),
        node_counts,
        repetitions: args.reps,
        transport: args.transport.into(),
        payload_bytes: args.payload_bytes,
        seed: args.seed,
        watchdog: args.timeout_ms.map(Duration::from_millis),
    };
    let outcome = run_benchmark(&cfg).map_err(|e| e.to_string())?;
    let report = aggregate(&outcome.records);

    println!("mode       nodes  mean(s)      stddev(s)    samples");
    for row in &report.rows {
        println!(
            "{:<10} {:<6} {:<12.6} {:<12.6} {}",
            row.mode.to_string(),
            row.node_count,
            row.mean_elapsed,
            row.stddev,
            row.sample_count
        );
    }
    for (mode, n) in &report.skipped_groups {
        println!("skipped {mode} n={n}: no verified samples");
    }

    let mut fits = Vec::new();
    for mode in [BenchMode::Pairwise, BenchMode::Multipeer] {
        let rows: Vec<_> = report
            .rows
            .iter()
            .filter(|r| r.mode == mode)
            .cloned()
            .collect();
        if rows.is_empty() {
            continue;
        }
        match fit_quadratic(&rows) {
            Ok(fit) => {
                println!(
                    "{mode} fit: c2={:.6e} c1={:.6e} c0={:.6e} R^2={:.6}",
                    fit.c2, fit.c1, fit.c0, fit.r_squared
                );
                fits.push((mode, fit));
            }
            Err(e) => println!("{mode} fit unavailable: {e}"),
        }
    }

    emit_results(&report.rows, &fits, &args.out).map_err(|e| e.to_string())?;
    println!("wrote {}", args.out.display());

    if outcome.all_verified() {
        Ok(ExitCode::SUCCESS)
    } else {
        for failed in &outcome.failed_runs {
            eprintln!(
                "failed run: {} n={} run {}: {}",
                failed.mode, failed.node_count, failed.run_index, failed.reason
            );
        }
        Ok(ExitCode::FAILURE)
    }
}

fn run_schedule_command(action: ScheduleAction) -> Result<ExitCode, String> {
    match action {
        ScheduleAction::Gen { kind, nodes, out } => {
            let schedule = match kind {
                ScheduleKind::RoundRobin => SlotSchedule::round_robin(nodes),
                ScheduleKind::Clique => SlotSchedule::clique(nodes),
            }
            .map_err(|e| e.to_string())?;
            let text = schedule.to_text();
            match out {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|e| format!("writing {}: {e}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        ScheduleAction::Check { path } => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("reading {}: {e}", path.display()))?;
            let schedule = SlotSchedule::from_text(&text).map_err(|e| e.to_string())?;
            let violations = schedule.validate();
            if violations.is_empty() {
                println!(
                    "ok: {} nodes, {} slots",
                    schedule.node_count(),
                    schedule.slot_count()
                );
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &violations {
                    eprintln!("violation: {v}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

/// Accepts "10", "10,20,30" or "20:200:20" (inclusive of the upper bound
/// when the step lands on it).
fn parse_node_counts(spec: &str) -> Result<Vec<u32>, String> {
    let parse_one = |tok: &str| {
        tok.trim()
            .parse::<u32>()
            .map_err(|_| format!("bad node count '{tok}'"))
    };
    let counts: Vec<u32> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("bad range '{spec}', expected a:b:step"));
        }
        let (start, end, step) = (parse_one(parts[0])?, parse_one(parts[1])?, parse_one(parts[2])?);
        if step == 0 {
            return Err("range step must be positive".to_string());
        }
        if start > end {
            return Err(format!("empty range '{spec}'"));
        }
        (start..=end).step_by(step as usize).collect()
    } else {
        spec.split(',')
            .map(parse_one)
            .collect::<Result<Vec<u32>, String>>()?
    };
    if counts.is_empty() {
        return Err("no node counts given".to_string());
    }
    if let Some(&bad) = counts.iter().find(|&&n| n < 2) {
        return Err(format!("node count {bad} too small; need at least 2"));
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::parse_node_counts;

    #[test]
    fn comma_lists_and_singletons() {
        assert_eq!(parse_node_counts("10").unwrap(), vec![10]);
        assert_eq!(parse_node_counts("10,20,30").unwrap(), vec![10, 20, 30]);
        assert_eq!(parse_node_counts(" 4 , 6 ").unwrap(), vec![4, 6]);
    }

    #[test]
    fn ranges_are_inclusive_when_aligned() {
        assert_eq!(
            parse_node_counts("20:200:20").unwrap(),
            (1..=10).map(|k| 20 * k).collect::<Vec<u32>>()
        );
        assert_eq!(parse_node_counts("2:7:3").unwrap(), vec![2, 5]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_node_counts("").is_err());
        assert!(parse_node_counts("abc").is_err());
        assert!(parse_node_counts("4:2:1").is_err());
        assert!(parse_node_counts("2:10:0").is_err());
        assert!(parse_node_counts("1,4").is_err());
        assert!(parse_node_counts("3:5").is_err());
    }
}
