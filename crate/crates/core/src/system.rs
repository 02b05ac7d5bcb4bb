//! Cycle-ordered event loop for several cores sharing one interconnect.
//!
//! Each core runs a program of tasks: trace runs and synchronisation
//! operations (mailbox post/get). A core advances privately through cache
//! hits and compute until it needs the interconnect or a sync device; the
//! loop then serves every core waiting in the earliest cycle as one batch.

use crate::core_model::{Core, CoreError, CoreStats, Cycles, Transactions};
use crate::interconnect::{Domain, Interconnect, Request};
use crate::workload::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncOp {
    Post,
    Get,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyncOutcome {
    /// The operation completed and held the core for this long.
    Done(Cycles),
    /// The device was busy; try again at the given instant.
    RetryAt(Cycles),
}

/// Timing record of one finished trace run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunRecord {
    pub task: usize,
    pub iterations: u64,
    pub start: Cycles,
    pub end: Cycles,
    pub stats: CoreStats,
}

impl RunRecord {
    pub fn duration(&self) -> Cycles {
        self.end - self.start
    }
}

/// A shared device reached through synchronisation tasks.
pub trait SyncDevice {
    fn attempt(&mut self, core: usize, op: SyncOp, at: Cycles, last_run: Option<&RunRecord>) -> SyncOutcome;
}

/// Device for programs that contain no sync tasks.
pub struct NoSync;

impl SyncDevice for NoSync {
    fn attempt(&mut self, _: usize, op: SyncOp, _: Cycles, _: Option<&RunRecord>) -> SyncOutcome {
        panic!("program issued {op:?} but no sync device is attached")
    }
}

#[derive(Debug, Clone)]
pub enum Task {
    Run(Trace),
    Sync(SyncOp),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Waiting {
    Memory(Domain),
    Sync(SyncOp),
}

struct Lane {
    core: Core,
    program: Vec<Task>,
    task: usize,
    pos: u64,
    txns: Transactions,
    next_txn: usize,
    in_instruction: bool,
    run_open: Option<(Cycles, CoreStats)>,
    now: Cycles,
    waiting: Option<Waiting>,
    runs: Vec<RunRecord>,
}

impl Lane {
    fn advance(&mut self, mem: &Interconnect) -> Result<(), CoreError> {
        loop {
            if self.waiting.is_some() {
                return Ok(());
            }
            if self.next_txn < self.txns.len() {
                self.waiting = Some(Waiting::Memory(self.txns[self.next_txn]));
                return Ok(());
            }
            if self.in_instruction {
                self.core.retire();
                self.now += self.core.config().base_cpi;
                self.in_instruction = false;
                self.pos += 1;
            }
            let Some(task) = self.program.get(self.task) else {
                return Ok(());
            };
            match task {
                Task::Run(trace) => {
                    if self.run_open.is_none() {
                        self.run_open = Some((self.now, *self.core.stats()));
                    }
                    if let Some(instr) = trace.get(self.pos) {
                        self.txns = self
                            .core
                            .prepare(instr, mem.map())
                            .map_err(|e| CoreError::AtInstruction { index: self.pos, source: Box::new(e) })?;
                        self.next_txn = 0;
                        self.in_instruction = true;
                    } else {
                        let (start, before) = self.run_open.take().unwrap();
                        self.runs.push(RunRecord {
                            task: self.task,
                            iterations: trace.iterations(),
                            start,
                            end: self.now,
                            stats: self.core.stats().delta(&before),
                        });
                        self.task += 1;
                        self.pos = 0;
                    }
                }
                Task::Sync(op) => {
                    self.waiting = Some(Waiting::Sync(*op));
                    return Ok(());
                }
            }
        }
    }
}

/// Final state of one core after its program finished.
#[derive(Debug, Clone)]
pub struct LaneReport {
    pub core: usize,
    pub stats: CoreStats,
    pub runs: Vec<RunRecord>,
    pub end: Cycles,
}

/// Runs one program per core to completion. `cores[k]` must have id `k`.
pub fn run_programs<D: SyncDevice>(
    cores: Vec<Core>,
    programs: Vec<Vec<Task>>,
    mem: &mut Interconnect,
    device: &mut D,
) -> Result<Vec<LaneReport>, CoreError> {
    assert_eq!(cores.len(), programs.len());
    let mut lanes: Vec<Lane> = cores
        .into_iter()
        .zip(programs)
        .map(|(core, program)| Lane {
            core,
            program,
            task: 0,
            pos: 0,
            txns: Transactions::new(),
            next_txn: 0,
            in_instruction: false,
            run_open: None,
            now: Cycles::ZERO,
            waiting: None,
            runs: Vec::new(),
        })
        .collect();

    let mut batch: Vec<usize> = Vec::with_capacity(lanes.len());
    let mut requests: Vec<Request> = Vec::with_capacity(lanes.len());
    loop {
        for lane in &mut lanes {
            lane.advance(mem)?;
        }
        let Some(cycle) = lanes.iter().filter(|l| l.waiting.is_some()).map(|l| l.now.floor()).min() else {
            break;
        };
        batch.clear();
        batch.extend((0..lanes.len()).filter(|&k| lanes[k].waiting.is_some() && lanes[k].now.floor() == cycle));

        requests.clear();
        for &k in &batch {
            if let Some(Waiting::Memory(domain)) = lanes[k].waiting {
                requests.push(Request { core: lanes[k].core.id(), domain });
            }
        }
        if requests.len() == 1 {
            let k = batch.iter().copied().find(|&k| matches!(lanes[k].waiting, Some(Waiting::Memory(_)))).unwrap();
            let lat = mem.service_one(requests[0].core, requests[0].domain);
            grant(&mut lanes[k], lat);
        } else if !requests.is_empty() {
            let lats = mem.service(&requests);
            let mut it = lats.into_iter();
            for &k in &batch {
                if matches!(lanes[k].waiting, Some(Waiting::Memory(_))) {
                    grant(&mut lanes[k], it.next().unwrap());
                }
            }
        }
        // Sync attempts in the same cycle are offered in core order.
        for &k in &batch {
            let lane = &mut lanes[k];
            if let Some(Waiting::Sync(op)) = lane.waiting {
                match device.attempt(lane.core.id(), op, lane.now, lane.runs.last()) {
                    SyncOutcome::Done(cost) => {
                        lane.now += cost;
                        lane.task += 1;
                        lane.waiting = None;
                    }
                    SyncOutcome::RetryAt(at) => {
                        debug_assert!(at > lane.now);
                        lane.now = at;
                    }
                }
            }
        }
    }

    Ok(lanes
        .into_iter()
        .map(|l| LaneReport { core: l.core.id(), stats: *l.core.stats(), runs: l.runs, end: l.now })
        .collect())
}

fn grant(lane: &mut Lane, latency: u32) {
    lane.core.charge_stall(latency);
    lane.now += Cycles::whole(latency as u64);
    lane.next_txn += 1;
    lane.waiting = None;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{CacheGeometry, KIB};
    use crate::core_model::CoreConfig;
    use crate::interconnect::{LatencyModel, MemoryMap};
    use crate::workload::{default_profile, synthesize, AbstractInstruction};

    fn setup(n: usize, ic_kb: u32, dc_kb: u32) -> (Vec<Core>, Interconnect) {
        let map = MemoryMap::uniform(n, 0x4_0000, 0x0800_0000, 1024, 0x80_0000).unwrap();
        let mem = Interconnect::new(map, LatencyModel::default(), n).unwrap();
        let cores = (0..n)
            .map(|k| {
                Core::new(
                    k,
                    CoreConfig::default(),
                    CacheGeometry::instruction(ic_kb * KIB).unwrap(),
                    CacheGeometry::data(dc_kb * KIB).unwrap(),
                )
                .unwrap()
            })
            .collect();
        (cores, mem)
    }

    #[test]
    fn single_lane_matches_run_trace() {
        let t = synthesize(&default_profile(), 5, 2).unwrap();
        let (mut cores, mut mem) = setup(1, 4, 0);
        let mut solo = cores[0].clone();
        let mut solo_mem = mem.clone();
        let expect = solo.run_trace(&t, &mut solo_mem).unwrap();
        let reports = run_programs(vec![cores.remove(0)], vec![vec![Task::Run(t)]], &mut mem, &mut NoSync).unwrap();
        assert_eq!(reports[0].stats, expect);
        assert_eq!(reports[0].end, expect.cycles);
        assert_eq!(reports[0].runs[0].duration(), expect.cycles);
    }

    #[test]
    fn lockstep_cores_collide_once_then_desync() {
        let body = vec![AbstractInstruction::alu(0x0), AbstractInstruction::alu(0x40)];
        let (cores, mut mem) = setup(2, 8, 8);
        let t0 = Trace::from_instructions(body.clone());
        let t1 = t0.relocated(0x4_0000);
        let reports =
            run_programs(cores, vec![vec![Task::Run(t0)], vec![Task::Run(t1)]], &mut mem, &mut NoSync).unwrap();
        // core 0 wins the cycle-0 conflict (40 + 1); core 1 completes at 80,
        // so their second misses land in different cycles
        assert_eq!(reports[0].end, Cycles::whole(82));
        assert_eq!(reports[1].end, Cycles::whole(80 + 1 + 40 + 1));
        assert_eq!(mem.granted_cycles(), 40 + 80 + 40 + 40);
    }

    #[test]
    fn stall_conservation() {
        let t = synthesize(&default_profile(), 3, 8).unwrap();
        let (cores, mut mem) = setup(2, 2, 0);
        let programs = vec![vec![Task::Run(t.clone())], vec![Task::Run(t.relocated(0x4_0000))]];
        let reports = run_programs(cores, programs, &mut mem, &mut NoSync).unwrap();
        let stalls: u64 = reports.iter().map(|r| r.stats.stall_cycles).sum();
        assert_eq!(stalls, mem.granted_cycles());
    }
}
