//! Affine FPGA resource model: M9K blocks, logic elements and registers as a
//! function of core count and total cache capacity, checked against a
//! device budget.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const M9K_BITS: u64 = 9_216;

/// Cache capacities the sweep ladder steps through, in KB.
pub const CACHE_LADDER_KB: [u32; 8] = [0, 2, 4, 8, 16, 32, 64, 128];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResourceError {
    #[error("need at least 3 anchors to fit 3 coefficients, got {0}")]
    TooFewAnchors(usize),
    #[error("anchor set is rank deficient (rank {rank} of 3): the anchors do not separate per-CPU, IC and DC costs")]
    RankDeficient { rank: usize },
    #[error("budget block_memory_bits {bits} != m9k_blocks {blocks} x {M9K_BITS}")]
    InconsistentBudget { bits: u64, blocks: u64 },
    #[error("coefficient {0} is negative")]
    NegativeCoefficient(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DesignPoint {
    pub n_cpus: u32,
    /// Instruction cache per core, KB.
    pub ic_kb: u32,
    /// Data cache per core, KB.
    pub dc_kb: u32,
}

impl DesignPoint {
    pub const fn new(n_cpus: u32, ic_kb: u32, dc_kb: u32) -> Self {
        Self { n_cpus, ic_kb, dc_kb }
    }

    fn features(&self) -> [f64; 3] {
        [self.n_cpus as f64, (self.n_cpus * self.ic_kb) as f64, (self.n_cpus * self.dc_kb) as f64]
    }

    pub fn label(&self) -> String {
        format!("{}cpu_ic{}k_dc{}k", self.n_cpus, self.ic_kb, self.dc_kb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceBudget {
    pub logic_elements: u64,
    pub registers: u64,
    pub labs: u64,
    pub m9k_blocks: u64,
    pub block_memory_bits: u64,
    pub io_pins: u64,
}

impl Default for ResourceBudget {
    /// Cyclone III EP3C25.
    fn default() -> Self {
        Self {
            logic_elements: 24_624,
            registers: 25_629,
            labs: 1_539,
            m9k_blocks: 66,
            block_memory_bits: 608_256,
            io_pins: 216,
        }
    }
}

impl ResourceBudget {
    pub fn validate(&self) -> Result<(), ResourceError> {
        if self.block_memory_bits != self.m9k_blocks * M9K_BITS {
            return Err(ResourceError::InconsistentBudget { bits: self.block_memory_bits, blocks: self.m9k_blocks });
        }
        Ok(())
    }

    /// Same budget with a different M9K count (bits kept consistent).
    pub fn with_m9k(mut self, blocks: u64) -> Self {
        self.m9k_blocks = blocks;
        self.block_memory_bits = blocks * M9K_BITS;
        self
    }
}

/// `fixed + per_cpu * n + per_ic_kb * sum(IC KB) + per_dc_kb * sum(DC KB)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineCost {
    #[serde(default)]
    pub fixed: f64,
    pub per_cpu: f64,
    pub per_ic_kb: f64,
    pub per_dc_kb: f64,
}

impl AffineCost {
    pub fn breakdown(&self, p: &DesignPoint) -> Breakdown {
        let [n, ic, dc] = p.features();
        Breakdown {
            fixed: self.fixed,
            cpus: self.per_cpu * n,
            icache: self.per_ic_kb * ic,
            dcache: self.per_dc_kb * dc,
        }
    }

    pub fn eval(&self, p: &DesignPoint) -> f64 {
        self.breakdown(p).total()
    }

    /// Whole units consumed.
    pub fn used(&self, p: &DesignPoint) -> u64 {
        (self.eval(p) - 1e-9).ceil().max(0.0) as u64
    }

    fn check(&self, name: &'static str) -> Result<(), ResourceError> {
        if [self.fixed, self.per_cpu, self.per_ic_kb, self.per_dc_kb].iter().any(|c| *c < 0.0) {
            return Err(ResourceError::NegativeCoefficient(name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Breakdown {
    pub fixed: f64,
    pub cpus: f64,
    pub icache: f64,
    pub dcache: f64,
}

impl Breakdown {
    pub fn total(&self) -> f64 {
        self.fixed + self.cpus + self.icache + self.dcache
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostCoefficients {
    pub m9k: AffineCost,
    pub logic_elements: AffineCost,
    pub registers: AffineCost,
}

impl Default for CostCoefficients {
    fn default() -> Self {
        FITTED_COEFFICIENTS
    }
}

/// Fit of the three Cyclone III synthesis reports, frozen.
pub const FITTED_COEFFICIENTS: CostCoefficients = CostCoefficients {
    m9k: AffineCost { fixed: 0.0, per_cpu: 12.5, per_ic_kb: 0.8125, per_dc_kb: 1.0625 },
    logic_elements: AffineCost {
        fixed: 0.0,
        per_cpu: 4_870.586_206_896_552,
        per_ic_kb: 0.0,
        per_dc_kb: 127.558_189_655_172_4,
    },
    registers: AffineCost { fixed: 0.0, per_cpu: 2_450.0, per_ic_kb: 17.5, per_dc_kb: 90.6875 },
};

impl CostCoefficients {
    pub fn validate(&self) -> Result<(), ResourceError> {
        self.m9k.check("m9k")?;
        self.logic_elements.check("logic_elements")?;
        self.registers.check("registers")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub m9k: u64,
    pub logic_elements: u64,
    pub registers: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Anchor {
    pub point: DesignPoint,
    pub usage: Usage,
}

/// Post-synthesis usage of three measured configurations.
pub fn measured_anchors() -> [Anchor; 3] {
    [
        Anchor { point: DesignPoint::new(2, 16, 0), usage: Usage { m9k: 51, logic_elements: 9_718, registers: 5_460 } },
        Anchor { point: DesignPoint::new(1, 8, 32), usage: Usage { m9k: 53, logic_elements: 8_937, registers: 5_492 } },
        Anchor { point: DesignPoint::new(2, 8, 8), usage: Usage { m9k: 55, logic_elements: 11_813, registers: 6_631 } },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostFit {
    pub coefficients: CostCoefficients,
    /// Per anchor: predicted minus observed, for (m9k, LEs, registers).
    pub residuals: Vec<[f64; 3]>,
}

/// Nonnegative least squares by enumerating active column sets. Exact for
/// the tiny systems here (three columns).
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let cols = a.ncols();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 1u32..(1 << cols) {
        let keep: Vec<usize> = (0..cols).filter(|c| mask & (1 << c) != 0).collect();
        let sub = a.select_columns(&keep);
        let Ok(x) = sub.clone().svd(true, true).solve(b, 1e-12) else { continue };
        if x.iter().any(|&v| v < -1e-9) {
            continue;
        }
        let resid = (&sub * &x - b).norm_squared();
        if best.as_ref().is_none_or(|(r, _)| resid < *r - 1e-12) {
            let mut full = DVector::zeros(cols);
            for (k, &c) in keep.iter().enumerate() {
                full[c] = x[k].max(0.0);
            }
            best = Some((resid, full));
        }
    }
    best.map(|(_, x)| x).unwrap_or_else(|| DVector::zeros(cols))
}

/// Fits one affine cost per resource over (CPU count, total IC KB, total
/// DC KB). The fixed term is held at zero: three anchors cannot pin four
/// coefficients.
pub fn calibrate_costs(anchors: &[Anchor]) -> Result<CostFit, ResourceError> {
    if anchors.len() < 3 {
        return Err(ResourceError::TooFewAnchors(anchors.len()));
    }
    let a = DMatrix::from_fn(anchors.len(), 3, |r, c| anchors[r].point.features()[c]);
    let rank = a.clone().svd(false, false).rank(1e-9);
    if rank < 3 {
        return Err(ResourceError::RankDeficient { rank });
    }
    let fit = |pick: fn(&Usage) -> u64| {
        let b = DVector::from_iterator(anchors.len(), anchors.iter().map(|x| pick(&x.usage) as f64));
        let x = nnls(&a, &b);
        AffineCost { fixed: 0.0, per_cpu: x[0], per_ic_kb: x[1], per_dc_kb: x[2] }
    };
    let coefficients = CostCoefficients {
        m9k: fit(|u| u.m9k),
        logic_elements: fit(|u| u.logic_elements),
        registers: fit(|u| u.registers),
    };
    let residuals = anchors
        .iter()
        .map(|x| {
            [
                coefficients.m9k.eval(&x.point) - x.usage.m9k as f64,
                coefficients.logic_elements.eval(&x.point) - x.usage.logic_elements as f64,
                coefficients.registers.eval(&x.point) - x.usage.registers as f64,
            ]
        })
        .collect();
    Ok(CostFit { coefficients, residuals })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceEstimate {
    pub point: DesignPoint,
    pub m9k_used: u64,
    pub logic_elements_used: u64,
    pub registers_used: u64,
    pub fits: bool,
    pub m9k_breakdown: Breakdown,
    pub budget: ResourceBudget,
}

impl ResourceEstimate {
    pub fn usage(&self) -> Usage {
        Usage { m9k: self.m9k_used, logic_elements: self.logic_elements_used, registers: self.registers_used }
    }

    /// Multi-line human-readable report.
    pub fn report(&self) -> String {
        let pct = |used: u64, total: u64| (used * 100 + total / 2).checked_div(total).unwrap_or(0);
        let row =
            |name: &str, used: u64, total: u64| format!("{name:<16}{used:>8} / {total:<8}({}%)\n", pct(used, total));
        let p = self.point;
        let mut out = format!("config          {} CPU, IC {} KB, DC {} KB\n", p.n_cpus, p.ic_kb, p.dc_kb);
        out += &row("M9K blocks", self.m9k_used, self.budget.m9k_blocks);
        out += &row("logic elements", self.logic_elements_used, self.budget.logic_elements);
        out += &row("registers", self.registers_used, self.budget.registers);
        let b = &self.m9k_breakdown;
        out += &format!(
            "M9K by part     cpus {:.2}, icache {:.2}, dcache {:.2}, fixed {:.2}\n",
            b.cpus, b.icache, b.dcache, b.fixed
        );
        out += if self.fits { "fits            yes\n" } else { "fits            no\n" };
        out
    }
}

pub fn estimate(point: &DesignPoint, coefficients: &CostCoefficients, budget: &ResourceBudget) -> ResourceEstimate {
    let m9k_used = coefficients.m9k.used(point);
    let logic_elements_used = coefficients.logic_elements.used(point);
    let registers_used = coefficients.registers.used(point);
    let fits = m9k_used <= budget.m9k_blocks
        && logic_elements_used <= budget.logic_elements
        && registers_used <= budget.registers;
    ResourceEstimate {
        point: *point,
        m9k_used,
        logic_elements_used,
        registers_used,
        fits,
        m9k_breakdown: coefficients.m9k.breakdown(point),
        budget: *budget,
    }
}

pub fn next_cache_size(kb: u32) -> u32 {
    if kb == 0 {
        2
    } else {
        kb * 2
    }
}

/// Single-step enlargements: one more CPU, or either cache one size up.
pub fn enlargements(p: &DesignPoint) -> [DesignPoint; 3] {
    [
        DesignPoint { n_cpus: p.n_cpus + 1, ..*p },
        DesignPoint { ic_kb: next_cache_size(p.ic_kb), ..*p },
        DesignPoint { dc_kb: next_cache_size(p.dc_kb), ..*p },
    ]
}

/// Fitting points of `space` none of whose enlargements fit.
pub fn feasible_frontier(
    coefficients: &CostCoefficients,
    budget: &ResourceBudget,
    space: &[DesignPoint],
) -> Vec<DesignPoint> {
    let fits = |p: &DesignPoint| estimate(p, coefficients, budget).fits;
    space.iter().filter(|p| fits(p) && !enlargements(p).iter().any(fits)).copied().collect()
}
