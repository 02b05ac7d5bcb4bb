//! Direct-mapped instruction and data caches.
//!
//! Only tags and state bits are tracked; line contents are never stored. A
//! capacity of zero is a legal geometry and models a core built without that
//! cache: every access misses and nothing is ever written back.

use thiserror::Error;

pub const KIB: u32 = 1024;
pub const DEFAULT_LINE_BYTES: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CacheKind {
    Instruction,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessOp {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Hit,
    /// The line was filled. `writeback` is set when the evicted victim was dirty.
    Miss {
        writeback: bool,
    },
}

impl Access {
    pub fn is_hit(self) -> bool {
        matches!(self, Access::Hit)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CacheError {
    #[error("line size {0} B is not a power of two >= 4")]
    BadLineSize(u32),
    #[error("capacity {capacity} B must be 0 or a power of two >= the {line} B line")]
    BadCapacity { capacity: u32, line: u32 },
    #[error("write access to instruction cache at {0:#010x}")]
    WriteToInstructionCache(u32),
}

/// Size and organisation of one cache. Associativity is always 1; the data
/// cache is write-back with write-allocate, the instruction cache read-only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheGeometry {
    pub capacity_bytes: u32,
    pub line_bytes: u32,
    pub kind: CacheKind,
}

impl CacheGeometry {
    pub fn new(kind: CacheKind, capacity_bytes: u32, line_bytes: u32) -> Result<Self, CacheError> {
        let geometry = Self { capacity_bytes, line_bytes, kind };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn instruction(capacity_bytes: u32) -> Result<Self, CacheError> {
        Self::new(CacheKind::Instruction, capacity_bytes, DEFAULT_LINE_BYTES)
    }

    pub fn data(capacity_bytes: u32) -> Result<Self, CacheError> {
        Self::new(CacheKind::Data, capacity_bytes, DEFAULT_LINE_BYTES)
    }

    pub fn validate(&self) -> Result<(), CacheError> {
        if self.line_bytes < 4 || !self.line_bytes.is_power_of_two() {
            return Err(CacheError::BadLineSize(self.line_bytes));
        }
        if self.capacity_bytes != 0 && (!self.capacity_bytes.is_power_of_two() || self.capacity_bytes < self.line_bytes)
        {
            return Err(CacheError::BadCapacity { capacity: self.capacity_bytes, line: self.line_bytes });
        }
        Ok(())
    }

    pub fn num_lines(&self) -> u32 {
        self.capacity_bytes / self.line_bytes
    }

    pub const fn associativity(&self) -> u32 {
        1
    }

    pub fn capacity_kib(&self) -> u32 {
        self.capacity_bytes / KIB
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub writebacks: u64,
}

impl CacheStats {
    pub fn miss_rate(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.misses as f64 / self.accesses as f64
        }
    }

    pub fn delta(&self, earlier: &CacheStats) -> CacheStats {
        CacheStats {
            accesses: self.accesses - earlier.accesses,
            hits: self.hits - earlier.hits,
            misses: self.misses - earlier.misses,
            writebacks: self.writebacks - earlier.writebacks,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Line {
    tag: u32,
    valid: bool,
    dirty: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheState {
    geometry: CacheGeometry,
    lines: Vec<Line>,
    offset_bits: u32,
    index_mask: u32,
    index_bits: u32,
    stats: CacheStats,
}

impl CacheState {
    pub fn new(geometry: CacheGeometry) -> Result<Self, CacheError> {
        geometry.validate()?;
        let num_lines = geometry.num_lines();
        Ok(Self {
            geometry,
            lines: vec![Line::default(); num_lines as usize],
            offset_bits: geometry.line_bytes.trailing_zeros(),
            index_mask: num_lines.saturating_sub(1),
            index_bits: if num_lines == 0 { 0 } else { num_lines.trailing_zeros() },
            stats: CacheStats::default(),
        })
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    pub fn access(&mut self, address: u32, op: AccessOp) -> Result<Access, CacheError> {
        if op == AccessOp::Write && self.geometry.kind == CacheKind::Instruction {
            return Err(CacheError::WriteToInstructionCache(address));
        }
        self.stats.accesses += 1;
        if self.lines.is_empty() {
            self.stats.misses += 1;
            return Ok(Access::Miss { writeback: false });
        }
        let block = address >> self.offset_bits;
        let index = (block & self.index_mask) as usize;
        let tag = block.checked_shr(self.index_bits).unwrap_or(0);
        let line = &mut self.lines[index];
        if line.valid && line.tag == tag {
            self.stats.hits += 1;
            if op == AccessOp::Write {
                line.dirty = true;
            }
            return Ok(Access::Hit);
        }
        let writeback = line.valid && line.dirty;
        *line = Line { tag, valid: true, dirty: op == AccessOp::Write };
        self.stats.misses += 1;
        if writeback {
            self.stats.writebacks += 1;
        }
        Ok(Access::Miss { writeback })
    }

    /// Invalidates every line and returns how many dirty lines were written back.
    pub fn flush(&mut self) -> u64 {
        let mut dirty = 0;
        for line in &mut self.lines {
            if line.valid && line.dirty {
                dirty += 1;
            }
            *line = Line::default();
        }
        self.stats.writebacks += dirty;
        dirty
    }

    pub fn dirty_lines(&self) -> usize {
        self.lines.iter().filter(|l| l.valid && l.dirty).count()
    }

    pub fn valid_lines(&self) -> usize {
        self.lines.iter().filter(|l| l.valid).count()
    }
}
