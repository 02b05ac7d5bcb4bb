//! Dual-CPU driver: CPU2 benchmarks and posts its result, CPU1 benchmarks
//! and collects it through the shared mailbox.

use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

use crate::bench::{build_cores, BenchError};
use crate::config::SystemConfig;
use crate::core_model::Cycles;
use crate::mailbox::{GetCode, Mailbox, MailboxError, MailboxStats, MutexEvent, PostResult};
use crate::system::{run_programs, RunRecord, SyncDevice, SyncOp, SyncOutcome, Task};
use crate::workload::{synthesize_body, Trace};

pub const GETTER_CORE: usize = 0;
pub const POSTER_CORE: usize = 1;

/// Mutex acquire, queue update and release, each one on-chip access.
pub const ACCESSES_PER_OP: u64 = 3;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("dual driver needs exactly 2 CPUs, configuration has {0}")]
    NeedsTwoCores(u32),
    #[error("benchmark iteration counts must be at least 1")]
    NoIterations,
    #[error(transparent)]
    Mailbox(#[from] MailboxError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriverOptions {
    /// Driver loop rounds on each CPU.
    pub rounds: u64,
    /// Dhrystone iterations per benchmark run on CPU1.
    pub getter_iterations: u64,
    /// Dhrystone iterations per benchmark run on CPU2.
    pub poster_iterations: u64,
}

impl DriverOptions {
    pub fn symmetric(rounds: u64, iterations: u64) -> Self {
        Self { rounds, getter_iterations: iterations, poster_iterations: iterations }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranscriptLine {
    pub round: u64,
    pub posted: u32,
    pub post_result: PostResult,
    pub received: Option<u32>,
}

impl fmt::Display for TranscriptLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.received {
            Some(v) => write!(f, "{},{},{}", self.round, self.posted, v),
            None => write!(f, "{},{},EMPTY", self.round, self.posted),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DriverReport {
    pub lines: Vec<TranscriptLine>,
    pub stats: MailboxStats,
    pub mutex_events: Vec<MutexEvent>,
    /// Messages still queued when both programs finished.
    pub residue: Vec<u32>,
    pub end: Cycles,
}

impl DriverReport {
    pub fn transcript(&self) -> String {
        let mut s = String::from("iter,poster_value,getter_value\n");
        for l in &self.lines {
            s.push_str(&l.to_string());
            s.push('\n');
        }
        s
    }

    /// Values the mailbox accepted, in post order.
    pub fn accepted(&self) -> Vec<u32> {
        self.lines.iter().filter(|l| l.post_result == PostResult::Ok).map(|l| l.posted).collect()
    }

    pub fn received(&self) -> Vec<u32> {
        self.lines.iter().filter_map(|l| l.received).collect()
    }
}

struct MailboxDevice {
    mailbox: Mailbox,
    hold: Cycles,
    retry: Cycles,
    clock_hz: u64,
    posted: Vec<(u32, PostResult)>,
    received: Vec<Option<u32>>,
}

impl MailboxDevice {
    fn rate(&self, run: &RunRecord) -> u32 {
        let r = Ratio::from_integer(run.iterations as u128 * self.clock_hz as u128) / run.duration().as_ratio();
        r.round().to_integer().min(u32::MAX as u128) as u32
    }
}

impl SyncDevice for MailboxDevice {
    fn attempt(&mut self, core: usize, op: SyncOp, at: Cycles, last_run: Option<&RunRecord>) -> SyncOutcome {
        let outcome = match op {
            SyncOp::Post => {
                let value = last_run.map(|r| self.rate(r)).unwrap_or(0);
                self.mailbox.post_at(core, value, at, self.hold).map(|res| self.posted.push((value, res)))
            }
            SyncOp::Get => self.mailbox.get_at(core, at, self.hold).map(|(v, code)| {
                debug_assert_eq!(v.is_some(), code == GetCode::Ok);
                self.received.push(v)
            }),
        };
        match outcome {
            Ok(()) => SyncOutcome::Done(self.hold),
            Err(MailboxError::Busy { .. }) => SyncOutcome::RetryAt(at + self.retry),
            Err(e) => panic!("mailbox failed: {e}"),
        }
    }
}

/// Runs the driver loop on a 2-CPU configuration.
pub fn run_dual_driver(config: &SystemConfig, seed: u64, opts: DriverOptions) -> Result<DriverReport, DriverError> {
    if config.core.n_cpus != 2 {
        return Err(DriverError::NeedsTwoCores(config.core.n_cpus));
    }
    if opts.getter_iterations == 0 || opts.poster_iterations == 0 {
        return Err(DriverError::NoIterations);
    }
    config.validate().map_err(BenchError::from)?;
    let body = synthesize_body(&config.workload, seed).map_err(BenchError::from)?;
    let (cores, mut mem) = build_cores(config)?;
    let program = |core: usize, iterations: u64, op: SyncOp| -> Vec<Task> {
        let trace = Trace::repeat(body.clone(), iterations).relocated(core as u32 * config.memory.segment_bytes);
        (0..opts.rounds).flat_map(|_| [Task::Run(trace.clone()), Task::Sync(op)]).collect()
    };
    let programs = vec![
        program(GETTER_CORE, opts.getter_iterations, SyncOp::Get),
        program(POSTER_CORE, opts.poster_iterations, SyncOp::Post),
    ];
    let onchip = Cycles::whole(config.memory.onchip_latency as u64);
    let mut device = MailboxDevice {
        mailbox: Mailbox::new(config.mailbox.name.clone(), config.mailbox_capacity())?,
        hold: onchip * ACCESSES_PER_OP,
        retry: onchip,
        clock_hz: config.core.clock_hz,
        posted: Vec::new(),
        received: Vec::new(),
    };
    let reports = run_programs(cores, programs, &mut mem, &mut device).map_err(BenchError::from)?;
    let lines = device
        .posted
        .iter()
        .zip(&device.received)
        .enumerate()
        .map(|(i, (&(posted, post_result), &received))| TranscriptLine {
            round: i as u64 + 1,
            posted,
            post_result,
            received,
        })
        .collect();
    Ok(DriverReport {
        lines,
        stats: *device.mailbox.stats(),
        mutex_events: device.mailbox.mutex().events().to_vec(),
        residue: device.mailbox.queued(),
        end: reports.iter().map(|r| r.end).max().unwrap_or(Cycles::ZERO),
    })
}
