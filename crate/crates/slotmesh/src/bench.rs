//! Benchmark harness: runs the pairwise and multi-peer exchange modes
//! across node counts, times each node's full schedule run, verifies that
//! every node collected all other payloads, and fits the scaling trend.
//!
//! The two modes are semantically equivalent — a round-robin tournament
//! spread over many slots and a single-slot clique both leave every node
//! holding every other node's payload — so their per-node results are
//! cross-checked before any timing is trusted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::{Duration, Instant};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::protocol::{Endpoint, SlotError};
use crate::schedule::SlotSchedule;
use crate::transport::tcp::loopback_mesh;
use crate::transport::{sim_create, DeliveryPolicy, Transport};
use crate::{NodeId, TimeSlot};

/// One benchmarked communication mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BenchMode {
    /// Round-robin tournament: one peer per slot.
    Pairwise,
    /// Clique: all peers in a single slot.
    Multipeer,
}

impl BenchMode {
    pub fn schedule(self, n: u32) -> Result<SlotSchedule, crate::schedule::ScheduleError> {
        match self {
            BenchMode::Pairwise => SlotSchedule::round_robin(n),
            BenchMode::Multipeer => SlotSchedule::clique(n),
        }
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchMode::Pairwise => write!(f, "pairwise"),
            BenchMode::Multipeer => write!(f, "multipeer"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeChoice {
    Pairwise,
    Multipeer,
    Both,
}

impl ModeChoice {
    pub fn modes(self) -> &'static [BenchMode] {
        match self {
            ModeChoice::Pairwise => &[BenchMode::Pairwise],
            ModeChoice::Multipeer => &[BenchMode::Multipeer],
            ModeChoice::Both => &[BenchMode::Pairwise, BenchMode::Multipeer],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Sim,
    TcpLoopback,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub mode: ModeChoice,
    pub node_counts: Vec<u32>,
    pub repetitions: u32,
    pub transport: TransportKind,
    pub payload_bytes: usize,
    pub seed: u64,
    /// Converts a wedged run into a failed run instead of hanging forever.
    pub watchdog: Option<Duration>,
}

impl Default for BenchConfig {
    /// Desk-scale defaults; the full-scale sweep stays available by
    /// overriding `node_counts` and `repetitions`.
    fn default() -> Self {
        BenchConfig {
            mode: ModeChoice::Both,
            node_counts: vec![10, 20, 30, 40],
            repetitions: 10,
            transport: TransportKind::Sim,
            payload_bytes: 64,
            seed: 1,
            watchdog: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.node_counts.is_empty() {
            return Err(BenchError::InvalidConfig("node counts must be non-empty"));
        }
        if self.node_counts.iter().any(|&n| n < 2) {
            return Err(BenchError::InvalidConfig("every node count must be >= 2"));
        }
        if self.repetitions < 1 {
            return Err(BenchError::InvalidConfig("repetitions must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark config: {0}")]
    InvalidConfig(&'static str),
}

/// One measured node execution. `verified` reflects the whole run: it is
/// false when any node of the run errored or came up short, because a
/// partial run's timings are not comparable.
#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub mode: BenchMode,
    pub node_count: u32,
    pub run_index: u32,
    pub node_id: NodeId,
    pub elapsed: Duration,
    pub verified: bool,
}

/// A run that produced unusable timings, with the first reason found.
#[derive(Debug, Clone)]
pub struct FailedRun {
    pub mode: BenchMode,
    pub node_count: u32,
    pub run_index: u32,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct BenchOutcome {
    pub records: Vec<BenchRecord>,
    pub failed_runs: Vec<FailedRun>,
}

impl BenchOutcome {
    /// True when every run completed and verified.
    pub fn all_verified(&self) -> bool {
        self.failed_runs.is_empty() && self.records.iter().all(|r| r.verified)
    }
}

/// The deterministic payload node `id` contributes under `seed`.
pub fn bench_payload(seed: u64, id: NodeId, len: usize) -> Vec<u8> {
    let mixed = seed.wrapping_add((id.get() as u64).wrapping_mul(0x517C_C1B7_2722_0A95));
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    let mut payload = vec![0u8; len];
    rng.fill_bytes(&mut payload);
    payload
}

/// Result of one node's schedule run inside a mesh.
#[derive(Debug)]
pub struct NodeRun {
    pub node: NodeId,
    pub elapsed: Duration,
    pub result: Result<BTreeMap<TimeSlot, Vec<Vec<u8>>>, SlotError>,
    /// Slot counter after the run; every node of a completed schedule ends
    /// at the schedule's slot count, skipped slots included.
    pub final_slot: TimeSlot,
    /// Messages left in the slot buffer; 0 after a completed run.
    pub residual_buffer: usize,
}

/// Spawns one thread per transport, runs the schedule on every node and
/// joins them all. Threads synchronize on a barrier before starting their
/// clocks, so the measured section covers the exchange loop only — never
/// endpoint setup or connection establishment.
pub fn run_mesh<T, F>(
    transports: Vec<(NodeId, T)>,
    schedule: &SlotSchedule,
    payload_of: F,
    watchdog: Option<Duration>,
) -> Vec<NodeRun>
where
    T: Transport + Send + 'static,
    F: Fn(NodeId, TimeSlot) -> Vec<u8> + Send + Sync + 'static,
{
    let payload_of = Arc::new(payload_of);
    let barrier = Arc::new(Barrier::new(transports.len()));
    let mut threads = Vec::new();
    for (id, transport) in transports {
        let payload_of = Arc::clone(&payload_of);
        let barrier = Arc::clone(&barrier);
        let schedule = schedule.clone();
        threads.push(
            thread::Builder::new()
                .name(format!("slotmesh-node-{id}"))
                .spawn(move || {
                    let mut endpoint = Endpoint::new(id, transport);
                    if let Some(timeout) = watchdog {
                        endpoint = endpoint.with_watchdog(timeout);
                    }
                    barrier.wait();
                    let started = Instant::now();
                    let result = endpoint.run_schedule(&schedule, |slot| payload_of(id, slot));
                    NodeRun {
                        node: id,
                        elapsed: started.elapsed(),
                        result,
                        final_slot: endpoint.time_slot(),
                        residual_buffer: endpoint.buffer_size(),
                    }
                })
                .expect("spawn node thread"),
        );
    }
    threads
        .into_iter()
        .map(|t| t.join().expect("node thread panicked"))
        .collect()
}

/// Pairs each received payload with the peer that sent it, using the
/// schedule's positional alignment, and returns the set of such pairs.
/// Two semantically equivalent schedule runs yield equal sets.
pub fn peer_payload_sets(
    schedule: &SlotSchedule,
    node: NodeId,
    results: &BTreeMap<TimeSlot, Vec<Vec<u8>>>,
) -> BTreeSet<(NodeId, Vec<u8>)> {
    let mut set = BTreeSet::new();
    for plan in schedule.slots() {
        let (Some(peers), Some(payloads)) = (plan.peers(node), results.get(&plan.slot())) else {
            continue;
        };
        for (k, &peer) in peers.iter().enumerate() {
            if let Some(payload) = payloads.get(k) {
                set.insert((peer, payload.clone()));
            }
        }
    }
    set
}

/// Runs the configured sweep. Protocol or transport failures mark the
/// affected run as failed and the sweep continues; timings from failed
/// runs are kept in the records but flagged unverified.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchOutcome, BenchError> {
    cfg.validate()?;
    let mut outcome = BenchOutcome::default();
    for &mode in cfg.mode.modes() {
        for &n in &cfg.node_counts {
            let schedule = mode
                .schedule(n)
                .expect("node counts are validated to be >= 2");
            debug_assert!(schedule.is_valid());
            let payloads: Arc<BTreeMap<NodeId, Vec<u8>>> = Arc::new(
                (1..=n)
                    .map(|i| {
                        let id = NodeId::new(i);
                        (id, bench_payload(cfg.seed, id, cfg.payload_bytes))
                    })
                    .collect(),
            );
            for run_index in 0..cfg.repetitions {
                run_once(cfg, mode, n, run_index, &schedule, &payloads, &mut outcome);
            }
        }
    }
    Ok(outcome)
}

fn run_once(
    cfg: &BenchConfig,
    mode: BenchMode,
    n: u32,
    run_index: u32,
    schedule: &SlotSchedule,
    payloads: &Arc<BTreeMap<NodeId, Vec<u8>>>,
    outcome: &mut BenchOutcome,
) {
    let payload_of = {
        let payloads = Arc::clone(payloads);
        move |id: NodeId, _slot: TimeSlot| payloads[&id].clone()
    };
    let runs = match cfg.transport {
        TransportKind::Sim => {
            let (_net, handles) = sim_create(n, DeliveryPolicy::Fifo);
            let transports = handles
                .into_iter()
                .enumerate()
                .map(|(i, h)| (NodeId::new(i as u32 + 1), h))
                .collect();
            run_mesh(transports, schedule, payload_of, cfg.watchdog)
        }
        TransportKind::TcpLoopback => match loopback_mesh(n) {
            Ok(mesh) => run_mesh(mesh, schedule, payload_of, cfg.watchdog),
            Err(e) => {
                outcome.failed_runs.push(FailedRun {
                    mode,
                    node_count: n,
                    run_index,
                    reason: format!("transport setup: {e}"),
                });
                return;
            }
        },
    };

    let mut failure: Option<String> = None;
    for run in &runs {
        match &run.result {
            Err(e) => {
                failure.get_or_insert_with(|| e.to_string());
            }
            Ok(results) => {
                let got = peer_payload_sets(schedule, run.node, results);
                let expected: BTreeSet<(NodeId, Vec<u8>)> = payloads
                    .iter()
                    .filter(|(&id, _)| id != run.node)
                    .map(|(&id, p)| (id, p.clone()))
                    .collect();
                if got != expected {
                    failure.get_or_insert_with(|| {
                        format!("node {} holds {} of {} peer payloads", run.node, got.len(), expected.len())
                    });
                }
            }
        }
    }

    let verified = failure.is_none();
    if let Some(reason) = failure {
        outcome.failed_runs.push(FailedRun {
            mode,
            node_count: n,
            run_index,
            reason,
        });
    }
    for run in runs {
        outcome.records.push(BenchRecord {
            mode,
            node_count: n,
            run_index,
            node_id: run.node,
            elapsed: run.elapsed,
            verified,
        });
    }
}

/// Mean and population standard deviation of elapsed time per
/// (mode, node count), over verified records only.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub mode: BenchMode,
    pub node_count: u32,
    pub mean_elapsed: f64,
    pub stddev: f64,
    pub sample_count: usize,
}

#[derive(Debug, Default)]
pub struct AggregateReport {
    pub rows: Vec<AggregateRow>,
    /// Groups that appeared in the records but had no verified samples.
    pub skipped_groups: Vec<(BenchMode, u32)>,
}

pub fn aggregate(records: &[BenchRecord]) -> AggregateReport {
    let mut groups: BTreeMap<(BenchMode, u32), Vec<f64>> = BTreeMap::new();
    for r in records {
        let samples = groups.entry((r.mode, r.node_count)).or_default();
        if r.verified {
            samples.push(r.elapsed.as_secs_f64());
        }
    }
    let mut report = AggregateReport::default();
    for ((mode, node_count), samples) in groups {
        if samples.is_empty() {
            report.skipped_groups.push((mode, node_count));
            continue;
        }
        let count = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / count;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / count;
        report.rows.push(AggregateRow {
            mode,
            node_count,
            mean_elapsed: mean,
            stddev: var.sqrt(),
            sample_count: samples.len(),
        });
    }
    report
}

/// Least-squares fit of `y ≈ c2·n² + c1·n + c0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub r_squared: f64,
}

impl QuadraticFit {
    pub fn predict(&self, n: f64) -> f64 {
        self.c2 * n * n + self.c1 * n + self.c0
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FitError {
    #[error("quadratic fit needs at least 3 distinct node counts")]
    InsufficientPoints,
}

/// Fits one mode's aggregate rows against node count.
pub fn fit_quadratic(rows: &[AggregateRow]) -> Result<QuadraticFit, FitError> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.node_count as f64, r.mean_elapsed))
        .collect();
    fit_quadratic_points(&points)
}

/// Ordinary least squares on `(n, y)` points with basis `{n², n, 1}`,
/// solved through the normal equations.
pub fn fit_quadratic_points(points: &[(f64, f64)]) -> Result<QuadraticFit, FitError> {
    let distinct: BTreeSet<u64> = points.iter().map(|&(n, _)| n.to_bits()).collect();
    if distinct.len() < 3 {
        return Err(FitError::InsufficientPoints);
    }
    // Accumulate Xᵀ·X and Xᵀ·y for the 3-term basis.
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for &(n, y) in points {
        let row = [n * n, n, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            aty[i] += row[i] * y;
        }
    }
    let [c2, c1, c0] = solve3(ata, aty).ok_or(FitError::InsufficientPoints)?;

    let mean_y = points.iter().map(|&(_, y)| y).sum::<f64>() / points.len() as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for &(n, y) in points {
        let predicted = c2 * n * n + c1 * n + c0;
        ss_res += (y - predicted).powi(2);
        ss_tot += (y - mean_y).powi(2);
    }
    let r_squared = if ss_tot == 0.0 {
        // Constant data: the fit either reproduces it or it does not.
        if ss_res < 1e-24 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(QuadraticFit {
        c2,
        c1,
        c0,
        r_squared,
    })
}

/// Gaussian elimination with partial pivoting on a 3x3 system.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < f64::EPSILON {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let factor = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (k, cell) in a[row].iter_mut().enumerate().skip(col) {
                *cell -= factor * pivot_row[k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut sum = b[row];
        for k in row + 1..3 {
            sum -= a[row][k] * x[k];
        }
        x[row] = sum / a[row][row];
    }
    Some(x)
}

#[derive(Debug, Error)]
#[error("writing {path}: {source}")]
pub struct EmitError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

/// Writes the aggregate rows as CSV plus a sidecar text summary
/// (`<out>.summary.txt` next to the CSV) holding the fits and the
/// pairwise/multipeer mean ratio per node count.
pub fn emit_results(
    rows: &[AggregateRow],
    fits: &[(BenchMode, QuadraticFit)],
    path: &Path,
) -> Result<(), EmitError> {
    let wrap = |source| EmitError {
        path: path.to_path_buf(),
        source,
    };
    let mut csv = String::from("mode,nodeCount,meanElapsed,stddev,sampleCount\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.mode, row.node_count, row.mean_elapsed, row.stddev, row.sample_count
        ));
    }
    std::fs::write(path, csv).map_err(wrap)?;

    let summary_path = path.with_extension("summary.txt");
    let wrap_summary = |source| EmitError {
        path: summary_path.clone(),
        source,
    };
    let mut summary = Vec::new();
    writeln!(summary, "quadratic fits (elapsed ~ c2*n^2 + c1*n + c0):").map_err(wrap_summary)?;
    for (mode, fit) in fits {
        writeln!(
            summary,
            "  {mode}: c2={:.6e} c1={:.6e} c0={:.6e} R^2={:.6}",
            fit.c2, fit.c1, fit.c0, fit.r_squared
        )
        .map_err(wrap_summary)?;
    }
    writeln!(summary, "\nmean elapsed ratio pairwise/multipeer:").map_err(wrap_summary)?;
    let by_key: BTreeMap<(BenchMode, u32), f64> = rows
        .iter()
        .map(|r| ((r.mode, r.node_count), r.mean_elapsed))
        .collect();
    let counts: BTreeSet<u32> = rows.iter().map(|r| r.node_count).collect();
    for &n in &counts {
        let pair = by_key.get(&(BenchMode::Pairwise, n));
        let multi = by_key.get(&(BenchMode::Multipeer, n));
        match (pair, multi) {
            (Some(p), Some(m)) if *m > 0.0 => {
                writeln!(summary, "  n={n}: {:.3}", p / m).map_err(wrap_summary)?
            }
            _ => writeln!(summary, "  n={n}: (needs both modes)").map_err(wrap_summary)?,
        }
    }
    std::fs::write(&summary_path, summary).map_err(wrap_summary)?;
    Ok(())
}
