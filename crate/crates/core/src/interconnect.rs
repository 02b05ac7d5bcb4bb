//! Shared memory system: per-core segments in main memory, an on-chip buffer
//! for the mailbox, and a round-robin arbiter in front of each memory device.
//!
//! Only timing is simulated. Requests to the same device issued in the same
//! cycle are serialised; requests issued in different cycles overlap freely.

use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("segments {0} and {1} overlap")]
    SegmentOverlap(usize, usize),
    #[error("on-chip buffer overlaps segment {0}")]
    OnChipOverlap(usize),
    #[error("segment {0} extends past the end of main memory")]
    SegmentOutOfMemory(usize),
    #[error("empty region")]
    EmptyRegion,
    #[error("latencies must be at least one cycle")]
    ZeroLatency,
}

/// Which mapped region an address falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Segment(usize),
    OnChip,
    Fault,
}

/// Contention domain: one physical device behind one fabric port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    MainMemory,
    OnChip,
}

impl Region {
    pub fn domain(self) -> Option<Domain> {
        match self {
            Region::Segment(_) => Some(Domain::MainMemory),
            Region::OnChip => Some(Domain::OnChip),
            Region::Fault => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryMap {
    segments: Vec<Range<u32>>,
    onchip: Range<u32>,
    main_memory_bytes: u32,
}

impl MemoryMap {
    pub fn new(segments: Vec<Range<u32>>, onchip: Range<u32>, main_memory_bytes: u32) -> Result<Self, MapError> {
        if onchip.is_empty() || segments.iter().any(|s| s.is_empty()) {
            return Err(MapError::EmptyRegion);
        }
        for (i, a) in segments.iter().enumerate() {
            if a.end > main_memory_bytes {
                return Err(MapError::SegmentOutOfMemory(i));
            }
            if overlaps(a, &onchip) {
                return Err(MapError::OnChipOverlap(i));
            }
            for (j, b) in segments.iter().enumerate().skip(i + 1) {
                if overlaps(a, b) {
                    return Err(MapError::SegmentOverlap(i, j));
                }
            }
        }
        Ok(Self { segments, onchip, main_memory_bytes })
    }

    /// `n` equal segments packed from address zero.
    pub fn uniform(
        n: usize,
        segment_bytes: u32,
        onchip_base: u32,
        onchip_bytes: u32,
        main_memory_bytes: u32,
    ) -> Result<Self, MapError> {
        let segments = (0..n as u32).map(|k| k * segment_bytes..(k + 1) * segment_bytes).collect();
        Self::new(segments, onchip_base..onchip_base + onchip_bytes, main_memory_bytes)
    }

    pub fn segment(&self, core: usize) -> Option<&Range<u32>> {
        self.segments.get(core)
    }

    pub fn segments(&self) -> &[Range<u32>] {
        &self.segments
    }

    pub fn onchip(&self) -> &Range<u32> {
        &self.onchip
    }

    pub fn main_memory_bytes(&self) -> u32 {
        self.main_memory_bytes
    }

    pub fn max_mapped_address(&self) -> u32 {
        self.segments.iter().map(|s| s.end - 1).chain([self.onchip.end - 1]).max().unwrap_or(0)
    }

    pub fn resolve(&self, address: u32) -> Region {
        if self.onchip.contains(&address) {
            return Region::OnChip;
        }
        match self.segments.iter().position(|s| s.contains(&address)) {
            Some(k) => Region::Segment(k),
            None => Region::Fault,
        }
    }
}

fn overlaps(a: &Range<u32>, b: &Range<u32>) -> bool {
    a.start < b.end && b.start < a.end
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencyModel {
    /// Cycles for one line fill or write-back from main memory.
    pub main_memory: u32,
    pub onchip: u32,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self { main_memory: 40, onchip: 1 }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), MapError> {
        if self.main_memory == 0 || self.onchip == 0 {
            return Err(MapError::ZeroLatency);
        }
        Ok(())
    }

    pub fn of(&self, domain: Domain) -> u32 {
        match domain {
            Domain::MainMemory => self.main_memory,
            Domain::OnChip => self.onchip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub core: usize,
    pub domain: Domain,
}

/// Arbiter plus latency model for one simulated system.
#[derive(Debug, Clone)]
pub struct Interconnect {
    map: MemoryMap,
    latency: LatencyModel,
    n_cores: usize,
    // Next core to receive priority, per domain. Advances past the first
    // grantee of every batch so that first-grant rotates under conflict.
    pointer: [usize; 2],
    granted_cycles: u64,
}

impl Interconnect {
    pub fn new(map: MemoryMap, latency: LatencyModel, n_cores: usize) -> Result<Self, MapError> {
        latency.validate()?;
        Ok(Self { map, latency, n_cores: n_cores.max(1), pointer: [0; 2], granted_cycles: 0 })
    }

    pub fn map(&self) -> &MemoryMap {
        &self.map
    }

    pub fn latency(&self) -> &LatencyModel {
        &self.latency
    }

    pub fn pointer(&self, domain: Domain) -> usize {
        self.pointer[domain as usize]
    }

    /// Sum of all completion latencies handed out so far.
    pub fn granted_cycles(&self) -> u64 {
        self.granted_cycles
    }

    /// Resolves one batch of same-cycle requests. Returns the completion
    /// latency of each request, in input order.
    pub fn service(&mut self, requests: &[Request]) -> Vec<u32> {
        debug_assert!(
            {
                let mut cores: Vec<_> = requests.iter().map(|r| r.core).collect();
                cores.sort_unstable();
                cores.windows(2).all(|w| w[0] != w[1])
            },
            "more than one outstanding request per core"
        );
        let mut out = vec![0; requests.len()];
        for domain in [Domain::MainMemory, Domain::OnChip] {
            let mut queue: Vec<usize> = (0..requests.len()).filter(|&i| requests[i].domain == domain).collect();
            if queue.is_empty() {
                continue;
            }
            let start = self.pointer[domain as usize];
            let n = self.n_cores;
            queue.sort_by_key(|&i| (requests[i].core + n - start % n) % n);
            let lat = self.latency.of(domain);
            for (pos, &i) in queue.iter().enumerate() {
                out[i] = (pos as u32 + 1) * lat;
                self.granted_cycles += out[i] as u64;
            }
            let first = requests[queue[0]].core;
            self.pointer[domain as usize] = (first + 1) % n;
        }
        out
    }

    /// Single-request fast path, identical to `service(&[req])[0]`.
    pub fn service_one(&mut self, core: usize, domain: Domain) -> u32 {
        self.pointer[domain as usize] = (core + 1) % self.n_cores;
        let lat = self.latency.of(domain);
        self.granted_cycles += lat as u64;
        lat
    }
}
