//! Timing model of one soft core.
//!
//! Each abstract instruction costs `base_cpi` plus the completion latency of
//! every memory transaction it causes: an instruction-cache fill, data-cache
//! fills and dirty-victim write-backs, and uncached on-chip accesses. Cache
//! state is updated when the instruction starts; only latency is deferred to
//! the interconnect.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};

use num_rational::Ratio;
use smallvec::SmallVec;
use thiserror::Error;

use crate::cache::{Access, AccessOp, CacheError, CacheGeometry, CacheState, CacheStats};
use crate::interconnect::{Domain, Interconnect, MemoryMap, Region};
use crate::workload::{AbstractInstruction, RefKind, Trace};

pub const MICROS_PER_CYCLE: u64 = 1_000_000;

/// Time in micro-cycle resolution, so fractional CPIs stay exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cycles(u64);

impl Cycles {
    pub const ZERO: Cycles = Cycles(0);

    pub const fn whole(cycles: u64) -> Self {
        Cycles(cycles * MICROS_PER_CYCLE)
    }

    pub const fn from_micros(micros: u64) -> Self {
        Cycles(micros)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    /// The integral cycle this instant falls in.
    pub const fn floor(self) -> u64 {
        self.0 / MICROS_PER_CYCLE
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_CYCLE as f64
    }

    pub fn as_ratio(self) -> Ratio<u128> {
        Ratio::new(self.0 as u128, MICROS_PER_CYCLE as u128)
    }
}

impl fmt::Display for Cycles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(MICROS_PER_CYCLE) {
            write!(f, "{}", self.floor())
        } else {
            write!(f, "{:.6}", self.as_f64())
        }
    }
}

impl Add for Cycles {
    type Output = Cycles;
    fn add(self, rhs: Cycles) -> Cycles {
        Cycles(self.0 + rhs.0)
    }
}

impl AddAssign for Cycles {
    fn add_assign(&mut self, rhs: Cycles) {
        self.0 += rhs.0;
    }
}

impl Sub for Cycles {
    type Output = Cycles;
    fn sub(self, rhs: Cycles) -> Cycles {
        Cycles(self.0 - rhs.0)
    }
}

impl Mul<u64> for Cycles {
    type Output = Cycles;
    fn mul(self, rhs: u64) -> Cycles {
        Cycles(self.0 * rhs)
    }
}

impl Sum for Cycles {
    fn sum<I: Iterator<Item = Cycles>>(iter: I) -> Cycles {
        Cycles(iter.map(|c| c.0).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoreConfig {
    pub clock_hz: u64,
    pub base_cpi: Cycles,
    /// Informational only.
    pub pipeline_depth: u32,
}

impl Default for CoreConfig {
    fn default() -> Self {
        Self { clock_hz: 66_500_000, base_cpi: Cycles::whole(1), pipeline_depth: 6 }
    }
}

impl CoreConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.clock_hz == 0 || self.base_cpi.micros() == 0 {
            return Err(CoreError::BadConfig);
        }
        Ok(())
    }

    /// Exact simulated wall time for `cycles`.
    pub fn seconds(&self, cycles: Cycles) -> Ratio<u128> {
        cycles.as_ratio() / Ratio::from_integer(self.clock_hz as u128)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoreError {
    #[error("core {core} touched {address:#010x}, outside its segment and the shared on-chip buffer")]
    SegmentationFault { core: usize, address: u32 },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("clock and base CPI must be positive")]
    BadConfig,
    #[error("instruction {index}: {source}")]
    AtInstruction { index: u64, source: Box<CoreError> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoreStats {
    pub instructions_retired: u64,
    pub cycles: Cycles,
    pub stall_cycles: u64,
    pub ic_accesses: u64,
    pub ic_misses: u64,
    pub dc_accesses: u64,
    pub dc_misses: u64,
    pub dc_writebacks: u64,
    pub memory_requests: u64,
    pub onchip_requests: u64,
}

impl CoreStats {
    pub fn delta(&self, earlier: &CoreStats) -> CoreStats {
        CoreStats {
            instructions_retired: self.instructions_retired - earlier.instructions_retired,
            cycles: self.cycles - earlier.cycles,
            stall_cycles: self.stall_cycles - earlier.stall_cycles,
            ic_accesses: self.ic_accesses - earlier.ic_accesses,
            ic_misses: self.ic_misses - earlier.ic_misses,
            dc_accesses: self.dc_accesses - earlier.dc_accesses,
            dc_misses: self.dc_misses - earlier.dc_misses,
            dc_writebacks: self.dc_writebacks - earlier.dc_writebacks,
            memory_requests: self.memory_requests - earlier.memory_requests,
            onchip_requests: self.onchip_requests - earlier.onchip_requests,
        }
    }
}

/// Memory transactions one instruction must complete before it retires.
pub(crate) type Transactions = SmallVec<[Domain; 4]>;

/// One core with its private instruction and data caches.
#[derive(Debug, Clone)]
pub struct Core {
    id: usize,
    config: CoreConfig,
    ic: CacheState,
    dc: CacheState,
    stats: CoreStats,
}

impl Core {
    pub fn new(id: usize, config: CoreConfig, ic: CacheGeometry, dc: CacheGeometry) -> Result<Self, CoreError> {
        config.validate()?;
        Ok(Self { id, config, ic: CacheState::new(ic)?, dc: CacheState::new(dc)?, stats: CoreStats::default() })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn config(&self) -> &CoreConfig {
        &self.config
    }

    pub fn stats(&self) -> &CoreStats {
        &self.stats
    }

    pub fn icache(&self) -> &CacheState {
        &self.ic
    }

    pub fn dcache(&self) -> &CacheState {
        &self.dc
    }

    pub fn ic_stats(&self) -> &CacheStats {
        self.ic.stats()
    }

    fn region_check(&self, map: &MemoryMap, address: u32) -> Result<Domain, CoreError> {
        match map.resolve(address) {
            Region::Segment(k) if k == self.id => Ok(Domain::MainMemory),
            Region::OnChip => Ok(Domain::OnChip),
            _ => Err(CoreError::SegmentationFault { core: self.id, address }),
        }
    }

    /// Performs the instruction's cache lookups and returns the memory
    /// transactions it needs, in issue order.
    pub(crate) fn prepare(&mut self, instr: &AbstractInstruction, map: &MemoryMap) -> Result<Transactions, CoreError> {
        let mut txns = Transactions::new();
        let fetch_domain = self.region_check(map, instr.fetch_address)?;
        self.stats.ic_accesses += 1;
        if fetch_domain == Domain::OnChip {
            txns.push(Domain::OnChip);
        } else if let Access::Miss { .. } = self.ic.access(instr.fetch_address, AccessOp::Read)? {
            self.stats.ic_misses += 1;
            txns.push(Domain::MainMemory);
        }
        for r in &instr.data_refs {
            let domain = self.region_check(map, r.address)?;
            if domain == Domain::OnChip {
                // the mailbox buffer is accessed uncached
                txns.push(Domain::OnChip);
                continue;
            }
            let op = match r.kind {
                RefKind::Read => AccessOp::Read,
                RefKind::Write => AccessOp::Write,
            };
            self.stats.dc_accesses += 1;
            if let Access::Miss { writeback } = self.dc.access(r.address, op)? {
                self.stats.dc_misses += 1;
                if writeback {
                    self.stats.dc_writebacks += 1;
                    txns.push(Domain::MainMemory);
                }
                txns.push(Domain::MainMemory);
            }
        }
        for d in &txns {
            match d {
                Domain::MainMemory => self.stats.memory_requests += 1,
                Domain::OnChip => self.stats.onchip_requests += 1,
            }
        }
        Ok(txns)
    }

    pub(crate) fn charge_stall(&mut self, latency: u32) {
        self.stats.stall_cycles += latency as u64;
        self.stats.cycles += Cycles::whole(latency as u64);
    }

    pub(crate) fn retire(&mut self) {
        self.stats.instructions_retired += 1;
        self.stats.cycles += self.config.base_cpi;
    }

    /// Executes one instruction with every transaction issued alone on the
    /// interconnect. Returns the cycles it consumed.
    pub fn step(&mut self, instr: &AbstractInstruction, mem: &mut Interconnect) -> Result<Cycles, CoreError> {
        let before = self.stats.cycles;
        let txns = self.prepare(instr, mem.map())?;
        for d in txns {
            let lat = mem.service_one(self.id, d);
            self.charge_stall(lat);
        }
        self.retire();
        Ok(self.stats.cycles - before)
    }

    /// Runs a whole trace in isolation. Stats accumulate on top of whatever
    /// the core already holds; the returned value covers only this trace.
    pub fn run_trace(&mut self, trace: &Trace, mem: &mut Interconnect) -> Result<CoreStats, CoreError> {
        let before = self.stats;
        for (index, instr) in trace.iter().enumerate() {
            self.step(instr, mem).map_err(|e| CoreError::AtInstruction { index: index as u64, source: Box::new(e) })?;
        }
        Ok(self.stats.delta(&before))
    }
}
