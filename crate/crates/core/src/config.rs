//! `SystemConfig`: one design point plus everything needed to simulate and
//! fit it, loaded from and saved to TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{CacheError, CacheGeometry, DEFAULT_LINE_BYTES, KIB};
use crate::core_model::{CoreConfig, Cycles, MICROS_PER_CYCLE};
use crate::interconnect::{LatencyModel, MapError, MemoryMap};
use crate::mailbox::{Mailbox, DEFAULT_MAILBOX_NAME};
use crate::resources::{CostCoefficients, DesignPoint, ResourceBudget, ResourceError};
use crate::workload::{WorkloadError, WorkloadProfile, DATA_BASE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialise config: {0}")]
    Serialise(#[from] toml::ser::Error),
    #[error("[core] {0}")]
    Core(String),
    #[error("[cache] {0}")]
    Cache(#[from] CacheError),
    #[error("[memory] {0}")]
    Memory(#[from] MapError),
    #[error("[memory] {0}")]
    Layout(String),
    #[error("[workload] {0}")]
    Workload(#[from] WorkloadError),
    #[error("[budget]/[costs] {0}")]
    Resources(#[from] ResourceError),
    #[error("[sweep] {0}")]
    Sweep(String),
    #[error("[mailbox] {0}")]
    Mailbox(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoreSection {
    pub n_cpus: u32,
    pub clock_hz: u64,
    /// Cycles per instruction with every access hitting. Stored internally
    /// in micro-cycles.
    pub base_cpi: f64,
    pub pipeline_depth: u32,
}

impl Default for CoreSection {
    fn default() -> Self {
        Self { n_cpus: 2, clock_hz: 66_500_000, base_cpi: crate::calibrate::FROZEN.base_cpi, pipeline_depth: 6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSection {
    pub capacity_bytes: u32,
    pub line_bytes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CachesSection {
    pub ic: CacheSection,
    pub dc: CacheSection,
}

impl Default for CachesSection {
    fn default() -> Self {
        Self {
            ic: CacheSection { capacity_bytes: 8 * KIB, line_bytes: DEFAULT_LINE_BYTES },
            dc: CacheSection { capacity_bytes: 8 * KIB, line_bytes: DEFAULT_LINE_BYTES },
        }
    }
}

impl Default for CacheSection {
    fn default() -> Self {
        Self { capacity_bytes: 0, line_bytes: DEFAULT_LINE_BYTES }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemorySection {
    pub main_memory_bytes: u32,
    /// Each core owns `segment_bytes` of main memory, packed from address 0.
    pub segment_bytes: u32,
    pub onchip_base: u32,
    pub onchip_bytes: u32,
    /// Cycles per line fill or write-back.
    pub main_memory_latency: u32,
    pub onchip_latency: u32,
}

impl Default for MemorySection {
    fn default() -> Self {
        Self {
            main_memory_bytes: 8 * 1024 * KIB,
            segment_bytes: 256 * KIB,
            onchip_base: 0x0800_0000,
            onchip_bytes: KIB,
            main_memory_latency: crate::calibrate::FROZEN.main_memory_latency,
            onchip_latency: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MailboxSection {
    pub name: String,
    /// Messages; 0 derives it from the on-chip buffer size.
    pub capacity: u32,
}

impl Default for MailboxSection {
    fn default() -> Self {
        Self { name: DEFAULT_MAILBOX_NAME.to_owned(), capacity: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub iterations: u64,
    pub warmup_iterations: u64,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { iterations: 10_000, warmup_iterations: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepPreset {
    Experiment1,
    Experiment2,
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<SweepPreset>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<DesignPoint>,
}

impl SweepSection {
    pub fn space(&self) -> Result<Vec<DesignPoint>, ConfigError> {
        match (self.preset, self.points.is_empty()) {
            (Some(_), false) => Err(ConfigError::Sweep("give either `preset` or `points`, not both".into())),
            (Some(SweepPreset::Experiment1), true) => Ok(crate::dse::experiment1_space()),
            (Some(SweepPreset::Experiment2), true) => Ok(crate::dse::experiment2_space()),
            (Some(SweepPreset::Full), true) => Ok(crate::dse::study_space()),
            (None, _) => Ok(self.points.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub core: CoreSection,
    pub cache: CachesSection,
    pub memory: MemorySection,
    pub mailbox: MailboxSection,
    pub bench: BenchSection,
    pub workload: WorkloadProfile,
    pub budget: ResourceBudget,
    pub costs: CostCoefficients,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl SystemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SystemConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.core.n_cpus == 0 {
            return Err(ConfigError::Core("n_cpus must be at least 1".into()));
        }
        self.core_config().validate().map_err(|e| ConfigError::Core(e.to_string()))?;
        self.ic_geometry()?;
        self.dc_geometry()?;
        self.latency_model().validate()?;
        self.memory_map()?;
        self.workload.validate()?;
        let ws_end = DATA_BASE as u64 + self.workload.working_set_bytes as u64;
        if self.workload.code_footprint_bytes > DATA_BASE || ws_end > self.memory.segment_bytes as u64 {
            return Err(ConfigError::Layout(format!(
                "segment_bytes {} cannot hold code ({} B below {DATA_BASE:#x}) and data up to {ws_end:#x}",
                self.memory.segment_bytes, self.workload.code_footprint_bytes
            )));
        }
        self.budget.validate()?;
        self.costs.validate()?;
        if self.mailbox_capacity() == 0 {
            return Err(ConfigError::Mailbox("on-chip buffer too small for one message".into()));
        }
        if let Some(s) = &self.sweep {
            s.space()?;
        }
        Ok(())
    }

    pub fn design_point(&self) -> DesignPoint {
        DesignPoint::new(self.core.n_cpus, self.cache.ic.capacity_bytes / KIB, self.cache.dc.capacity_bytes / KIB)
    }

    /// Copy of this config resized to `p`.
    pub fn with_point(&self, p: &DesignPoint) -> Self {
        let mut c = self.clone();
        c.core.n_cpus = p.n_cpus;
        c.cache.ic.capacity_bytes = p.ic_kb * KIB;
        c.cache.dc.capacity_bytes = p.dc_kb * KIB;
        c
    }

    pub fn base_cpi(&self) -> Cycles {
        Cycles::from_micros((self.core.base_cpi * MICROS_PER_CYCLE as f64).round() as u64)
    }

    pub fn core_config(&self) -> CoreConfig {
        CoreConfig { clock_hz: self.core.clock_hz, base_cpi: self.base_cpi(), pipeline_depth: self.core.pipeline_depth }
    }

    pub fn ic_geometry(&self) -> Result<CacheGeometry, CacheError> {
        CacheGeometry::new(crate::cache::CacheKind::Instruction, self.cache.ic.capacity_bytes, self.cache.ic.line_bytes)
    }

    pub fn dc_geometry(&self) -> Result<CacheGeometry, CacheError> {
        CacheGeometry::new(crate::cache::CacheKind::Data, self.cache.dc.capacity_bytes, self.cache.dc.line_bytes)
    }

    pub fn latency_model(&self) -> LatencyModel {
        LatencyModel { main_memory: self.memory.main_memory_latency, onchip: self.memory.onchip_latency }
    }

    pub fn memory_map(&self) -> Result<MemoryMap, MapError> {
        let m = &self.memory;
        MemoryMap::uniform(
            self.core.n_cpus as usize,
            m.segment_bytes,
            m.onchip_base,
            m.onchip_bytes,
            m.main_memory_bytes,
        )
    }

    pub fn mailbox_capacity(&self) -> usize {
        match self.mailbox.capacity {
            0 => Mailbox::capacity_for_buffer(self.memory.onchip_bytes),
            n => n as usize,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = SystemConfig::default();
        c.validate().unwrap();
        let text = c.to_toml_string().unwrap();
        assert_eq!(SystemConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn sections_present() {
        let text = SystemConfig::default().to_toml_string().unwrap();
        for h in
            ["[core]", "[cache.ic]", "[cache.dc]", "[memory]", "[mailbox]", "[workload]", "[budget]", "[costs.m9k]"]
        {
            assert!(text.contains(h), "missing {h}");
        }
    }

    #[test]
    fn partial_file_takes_defaults() {
        let c = SystemConfig::from_toml_str("[core]\nn_cpus = 1\n[cache.dc]\ncapacity_bytes = 4096\n").unwrap();
        assert_eq!(c.design_point(), DesignPoint::new(1, 8, 4));
        assert_eq!(c.memory, MemorySection::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(SystemConfig::from_toml_str("[core]\ncpus = 2\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn bad_values_rejected() {
        assert!(matches!(
            SystemConfig::from_toml_str("[cache.ic]\ncapacity_bytes = 3000\n"),
            Err(ConfigError::Cache(_))
        ));
        assert!(matches!(SystemConfig::from_toml_str("[core]\nn_cpus = 0\n"), Err(ConfigError::Core(_))));
        assert!(SystemConfig::from_toml_str("[memory]\nmain_memory_latency = 0\n").is_err());
        assert!(matches!(SystemConfig::from_toml_str("[memory]\nsegment_bytes = 4096\n"), Err(ConfigError::Layout(_))));
    }

    #[test]
    fn sweep_section() {
        let c = SystemConfig::from_toml_str("[sweep]\npreset = \"experiment1\"\n").unwrap();
        assert_eq!(c.sweep.unwrap().space().unwrap().len(), 8);
        let c = SystemConfig::from_toml_str("[[sweep.points]]\nn_cpus = 1\nic_kb = 2\ndc_kb = 0\n").unwrap();
        assert_eq!(c.sweep.clone().unwrap().space().unwrap(), vec![DesignPoint::new(1, 2, 0)]);
        assert_eq!(SystemConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap(), c);
    }

    #[test]
    fn mailbox_capacity_from_buffer() {
        assert_eq!(SystemConfig::default().mailbox_capacity(), 128);
    }

    #[test]
    fn fractional_cpi_exact_in_micros() {
        let mut c = SystemConfig::default();
        c.core.base_cpi = 6.25;
        assert_eq!(c.base_cpi(), Cycles::from_micros(6_250_000));
    }
}
