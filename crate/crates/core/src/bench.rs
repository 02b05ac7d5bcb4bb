//! Benchmark harness: simulated cycles to Dhrystones per second and VAX
//! MIPS.

use num_rational::Ratio;
use thiserror::Error;

use crate::cache::CacheError;
use crate::config::{ConfigError, SystemConfig};
use crate::core_model::{Core, CoreError, CoreStats, Cycles};
use crate::interconnect::{Interconnect, MapError};
use crate::resources::{estimate, DesignPoint, ResourceEstimate};
use crate::system::{run_programs, NoSync, Task};
use crate::workload::{synthesize_body, AbstractInstruction, Trace, WorkloadError};

/// Dhrystones per second of the VAX-11/780.
pub const VAX_DHRYSTONES_PER_SEC: u64 = 1_757;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration does not fit the device (pass the what-if override to simulate anyway)\n{0}")]
    DoesNotFit(String),
    #[error("measured iteration count must be at least 1")]
    NoIterations,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

impl From<CacheError> for BenchError {
    fn from(e: CacheError) -> Self {
        BenchError::Config(e.into())
    }
}

impl From<MapError> for BenchError {
    fn from(e: MapError) -> Self {
        BenchError::Config(e.into())
    }
}

pub fn vax_mips(dhrystones_per_sec: Ratio<u128>) -> Ratio<u128> {
    dhrystones_per_sec / VAX_DHRYSTONES_PER_SEC as u128
}

/// Rounds half-up to `decimals` places and renders without exponent.
pub fn format_fixed(value: Ratio<u128>, decimals: u32) -> String {
    let scale = 10u128.pow(decimals);
    let scaled = (value * scale + Ratio::new(1, 2)).floor().to_integer();
    if decimals == 0 {
        return scaled.to_string();
    }
    format!("{}.{:0width$}", scaled / scale, scaled % scale, width = decimals as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub point: DesignPoint,
    pub iterations: u64,
    pub instructions_per_iteration: u64,
    /// Measured-phase stats per core.
    pub per_core: Vec<CoreStats>,
    /// Longest measured phase over all cores.
    pub measured_cycles: Cycles,
    pub dhrystones_per_sec: Ratio<u128>,
    pub vax_mips: Ratio<u128>,
    pub resources: ResourceEstimate,
}

impl SimResult {
    pub fn dhrystones_display(&self) -> String {
        format_fixed(self.dhrystones_per_sec, 0)
    }

    pub fn vax_mips_display(&self) -> String {
        format_fixed(self.vax_mips, 2)
    }

    pub fn cycles_per_iteration(&self) -> Ratio<u128> {
        self.measured_cycles.as_ratio() / self.iterations as u128
    }
}

/// Aggregate rate when each of `n_cpus` cores completes `iterations` in
/// `cycles`.
pub fn dhrystones_per_sec(iterations: u64, n_cpus: u32, clock_hz: u64, cycles: Cycles) -> Ratio<u128> {
    Ratio::from_integer(iterations as u128 * n_cpus as u128 * clock_hz as u128) / cycles.as_ratio()
}

pub(crate) fn build_cores(config: &SystemConfig) -> Result<(Vec<Core>, Interconnect), BenchError> {
    let n = config.core.n_cpus as usize;
    let mem = Interconnect::new(config.memory_map()?, config.latency_model(), n)?;
    let cores = (0..n)
        .map(|k| Core::new(k, config.core_config(), config.ic_geometry()?, config.dc_geometry()?))
        .collect::<Result<Vec<_>, CoreError>>()?;
    Ok((cores, mem))
}

/// Runs `body` on every core of `config`: warm-up, then `iterations`
/// measured. Core `k` executes the body relocated into its own segment.
pub fn run_body(config: &SystemConfig, body: &[AbstractInstruction], iterations: u64) -> Result<SimResult, BenchError> {
    if iterations == 0 {
        return Err(BenchError::NoIterations);
    }
    config.validate()?;
    let (cores, mut mem) = build_cores(config)?;
    let warmup = config.bench.warmup_iterations;
    let programs: Vec<Vec<Task>> = (0..cores.len() as u32)
        .map(|k| {
            let base = Trace::repeat(body.to_vec(), 1).relocated(k * config.memory.segment_bytes);
            let mut p = Vec::with_capacity(2);
            if warmup > 0 {
                p.push(Task::Run(base.with_iterations(warmup)));
            }
            p.push(Task::Run(base.with_iterations(iterations)));
            p
        })
        .collect();
    let reports = run_programs(cores, programs, &mut mem, &mut NoSync)?;
    let per_core: Vec<CoreStats> = reports.iter().map(|r| r.runs.last().unwrap().stats).collect();
    let measured_cycles = reports.iter().map(|r| r.runs.last().unwrap().duration()).max().unwrap();
    let d = dhrystones_per_sec(iterations, config.core.n_cpus, config.core.clock_hz, measured_cycles);
    Ok(SimResult {
        point: config.design_point(),
        iterations,
        instructions_per_iteration: body.len() as u64,
        per_core,
        measured_cycles,
        dhrystones_per_sec: d,
        vax_mips: vax_mips(d),
        resources: estimate(&config.design_point(), &config.costs, &config.budget),
    })
}

/// Synthesises the workload from `seed` and benchmarks `config`. Refuses
/// configurations that do not fit unless `allow_unfit`.
pub fn run_benchmark(
    config: &SystemConfig,
    iterations: u64,
    seed: u64,
    allow_unfit: bool,
) -> Result<SimResult, BenchError> {
    config.validate()?;
    let est = estimate(&config.design_point(), &config.costs, &config.budget);
    if !est.fits && !allow_unfit {
        return Err(BenchError::DoesNotFit(est.report()));
    }
    let body = synthesize_body(&config.workload, seed)?;
    run_body(config, &body, iterations)
}

/// Memory traffic of one steady-state iteration on a single core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationCounts {
    pub instructions: u64,
    pub main_requests: u64,
    pub onchip_requests: u64,
}

impl IterationCounts {
    /// Cycles of one iteration under the additive timing model.
    pub fn cycles(&self, base_cpi: Cycles, main_latency: u32, onchip_latency: u32) -> Cycles {
        base_cpi * self.instructions
            + Cycles::whole(self.main_requests * main_latency as u64 + self.onchip_requests * onchip_latency as u64)
    }
}

/// A direct-mapped cache replaying a fixed body reaches the same state after
/// every iteration, so the second iteration is the steady state.
pub fn steady_state_counts(config: &SystemConfig, body: &[AbstractInstruction]) -> Result<IterationCounts, BenchError> {
    let mut single = config.clone();
    single.core.n_cpus = 1;
    let (mut cores, mut mem) = build_cores(&single)?;
    let core = &mut cores[0];
    core.run_trace(&Trace::repeat(body.to_vec(), 1), &mut mem)?;
    let before = *core.stats();
    core.run_trace(&Trace::repeat(body.to_vec(), 1), &mut mem)?;
    let d = core.stats().delta(&before);
    Ok(IterationCounts {
        instructions: d.instructions_retired,
        main_requests: d.memory_requests,
        onchip_requests: d.onchip_requests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::KIB;

    fn ratio(n: u128) -> Ratio<u128> {
        Ratio::from_integer(n)
    }

    #[test]
    fn vax_mips_examples() {
        assert_eq!(format_fixed(vax_mips(ratio(87_118)), 2), "49.58");
        assert_eq!(format_fixed(vax_mips(ratio(71_428)), 2), "40.65");
        assert_eq!(format_fixed(vax_mips(ratio(1_757)), 2), "1.00");
        assert_eq!(vax_mips(ratio(1_757)), ratio(1));
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(format_fixed(Ratio::new(1, 200), 2), "0.01");
        assert_eq!(format_fixed(Ratio::new(1, 201), 2), "0.00");
        assert_eq!(format_fixed(Ratio::new(5, 2), 0), "3");
        assert_eq!(format_fixed(Ratio::new(123_456, 1000), 1), "123.5");
    }

    fn all_hit_config() -> SystemConfig {
        let mut c = SystemConfig::default().with_point(&DesignPoint::new(1, 16, 16));
        c.core.base_cpi = 1.0;
        c.workload.working_set_bytes = 2 * KIB;
        c.workload.code_footprint_bytes = 4 * KIB;
        c
    }

    #[test]
    fn all_hit_closed_form() {
        let c = all_hit_config();
        let body = synthesize_body(&c.workload, 3).unwrap();
        let r = run_body(&c, &body, 50).unwrap();
        assert_eq!(r.per_core[0].memory_requests, 0);
        assert_eq!(r.dhrystones_per_sec, Ratio::new(c.core.clock_hz as u128, body.len() as u128));
    }

    #[test]
    fn steady_state_predicts_long_runs() {
        for p in [DesignPoint::new(1, 2, 0), DesignPoint::new(1, 8, 4), DesignPoint::new(1, 4, 2)] {
            let mut c = SystemConfig::default().with_point(&p);
            c.workload.working_set_bytes = 6 * KIB;
            let body = synthesize_body(&c.workload, 11).unwrap();
            let k = steady_state_counts(&c, &body).unwrap();
            let r = run_body(&c, &body, 40).unwrap();
            let per_iter = k.cycles(c.base_cpi(), c.memory.main_memory_latency, c.memory.onchip_latency);
            assert_eq!(r.measured_cycles, per_iter * 40, "{p:?}");
        }
    }

    #[test]
    fn deterministic() {
        let c = SystemConfig::default();
        let a = run_benchmark(&c, 20, 5, false).unwrap();
        let b = run_benchmark(&c, 20, 5, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn refuses_unfit_without_override() {
        let c = SystemConfig::default().with_point(&DesignPoint::new(2, 32, 0));
        assert!(matches!(run_benchmark(&c, 5, 1, false), Err(BenchError::DoesNotFit(_))));
        assert!(run_benchmark(&c, 5, 1, true).is_ok());
    }
}
