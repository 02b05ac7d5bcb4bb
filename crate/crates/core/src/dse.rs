//! Design-space sweep, report rendering and configuration recommendation.

use std::cmp::Ordering;
use std::fmt::Write as _;

use num_rational::Ratio;

use crate::bench::{format_fixed, run_body, BenchError, SimResult};
use crate::config::SystemConfig;
use crate::exec::Execution;
use crate::resources::{estimate, DesignPoint};
use crate::workload::synthesize_body;

pub const CSV_HEADER: &str = "n_cpus,ic_kb,dc_kb,dhrystones_per_sec,vax_mips,m9k_used,fits";

/// Instruction-cache sweep without data cache, in published row order.
pub fn experiment1_space() -> Vec<DesignPoint> {
    (1..=2).flat_map(|n| [2, 4, 8, 16].map(|ic| DesignPoint::new(n, ic, 0))).collect()
}

/// Data-cache sweep at 8 KB instruction cache, in published row order.
pub fn experiment2_space() -> Vec<DesignPoint> {
    let mut v: Vec<DesignPoint> = [4, 8, 16, 32].map(|dc| DesignPoint::new(1, 8, dc)).to_vec();
    v.extend([4, 8].map(|dc| DesignPoint::new(2, 8, dc)));
    v
}

/// The dual-processor reference design.
pub const PROPOSED: DesignPoint = DesignPoint::new(2, 8, 8);

pub fn study_space() -> Vec<DesignPoint> {
    let mut v = experiment1_space();
    v.extend(experiment2_space());
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: DesignPoint,
    pub m9k_used: u64,
    pub fits: bool,
    pub result: Option<SimResult>,
}

impl SweepRow {
    pub fn dhrystones_per_sec(&self) -> Option<Ratio<u128>> {
        self.result.as_ref().map(|r| r.dhrystones_per_sec)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

/// Fit-checks every point and benchmarks the fitting ones. One workload body
/// (from `seed`) is shared by all points.
pub fn sweep(
    base: &SystemConfig,
    space: &[DesignPoint],
    iterations: u64,
    seed: u64,
    exec: Execution,
) -> Result<SweepTable, BenchError> {
    if space.is_empty() {
        return Ok(SweepTable::default());
    }
    let body = synthesize_body(&base.workload, seed)?;
    let rows = exec.map(space, |p| -> Result<SweepRow, BenchError> {
        let est = estimate(p, &base.costs, &base.budget);
        let result = if est.fits { Some(run_body(&base.with_point(p), &body, iterations)?) } else { None };
        Ok(SweepRow { point: *p, m9k_used: est.m9k_used, fits: est.fits, result })
    });
    Ok(SweepTable { rows: rows.into_iter().collect::<Result<_, _>>()? })
}

fn kb(v: u32) -> String {
    if v == 0 {
        "0".into()
    } else {
        format!("{v} KB")
    }
}

impl SweepTable {
    pub fn get(&self, p: DesignPoint) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.point == p)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let (d, v) = match &r.result {
                Some(s) => (s.dhrystones_display(), s.vax_mips_display()),
                None => (String::new(), String::new()),
            };
            let p = r.point;
            writeln!(out, "{},{},{},{d},{v},{},{}", p.n_cpus, p.ic_kb, p.dc_kb, r.m9k_used, r.fits).unwrap();
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Number of CPUs | IC Size | DC Size | Dhrystones/Second | VAX MIPS | M9K | Fits |\n\
             |---:|---:|---:|---:|---:|---:|:---:|\n",
        );
        for r in &self.rows {
            let (d, v) = match &r.result {
                Some(s) => (s.dhrystones_display(), s.vax_mips_display()),
                None => ("-".into(), "-".into()),
            };
            let p = r.point;
            let fits = if r.fits { "yes" } else { "no" };
            writeln!(out, "| {} | {} | {} | {d} | {v} | {} | {fits} |", p.n_cpus, kb(p.ic_kb), kb(p.dc_kb), r.m9k_used)
                .unwrap();
        }
        out
    }

    /// `label value` per simulated row, in sweep order.
    pub fn to_plot_data(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            if let Some(s) = &r.result {
                writeln!(out, "{} {}", r.point.label(), s.dhrystones_display()).unwrap();
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub choice: Option<DesignPoint>,
    pub dhrystones_per_sec: Option<Ratio<u128>>,
    pub m9k_used: Option<u64>,
    pub rationale: String,
}

fn rank(a: &SweepRow, b: &SweepRow) -> Ordering {
    // better first: faster, then fewer M9K, then fewer CPUs
    b.dhrystones_per_sec()
        .cmp(&a.dhrystones_per_sec())
        .then(a.m9k_used.cmp(&b.m9k_used))
        .then(a.point.n_cpus.cmp(&b.point.n_cpus))
        .then(a.point.cmp(&b.point))
}

pub fn recommend(table: &SweepTable) -> Recommendation {
    let mut fitting: Vec<&SweepRow> = table.rows.iter().filter(|r| r.fits && r.result.is_some()).collect();
    fitting.sort_by(|a, b| rank(a, b));
    let Some(best) = fitting.first() else {
        return Recommendation {
            choice: None,
            dhrystones_per_sec: None,
            m9k_used: None,
            rationale: format!("none of the {} configurations fits the budget", table.rows.len()),
        };
    };
    let mut rationale = format!(
        "{} CPU, IC {} KB, DC {} KB: {} Dhrystones/s using {} M9K blocks",
        best.point.n_cpus,
        best.point.ic_kb,
        best.point.dc_kb,
        format_fixed(best.dhrystones_per_sec().unwrap(), 0),
        best.m9k_used
    );
    if let Some(next) = fitting.get(1) {
        let d0 = best.dhrystones_per_sec().unwrap();
        let d1 = next.dhrystones_per_sec().unwrap();
        let why = if d0 > d1 {
            "faster than"
        } else if best.m9k_used < next.m9k_used {
            "ties on speed, fewer M9K than"
        } else {
            "ties, fewer CPUs than"
        };
        write!(rationale, "; {why} runner-up {}", next.point.label()).unwrap();
    }
    let excluded = table.rows.iter().filter(|r| !r.fits).count();
    if excluded > 0 {
        write!(rationale, "; {excluded} configuration(s) excluded as not fitting").unwrap();
    }
    Recommendation {
        choice: Some(best.point),
        dhrystones_per_sec: best.dhrystones_per_sec(),
        m9k_used: Some(best.m9k_used),
        rationale,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioCheck {
    pub id: &'static str,
    pub description: String,
    pub value: f64,
    pub pass: bool,
}

fn rate(table: &SweepTable, p: DesignPoint) -> Result<f64, String> {
    let d = table
        .get(p)
        .and_then(|r| r.dhrystones_per_sec())
        .ok_or_else(|| format!("sweep has no simulated row for {}", p.label()))?;
    Ok(*d.numer() as f64 / *d.denom() as f64)
}

/// Qualitative trade-off checks over a sweep of the full study space.
pub fn check_ratios(table: &SweepTable) -> Result<Vec<RatioCheck>, String> {
    let mut out = Vec::new();
    let mut worst: Option<(f64, DesignPoint)> = None;
    for single in table.rows.iter().filter(|r| r.point.n_cpus == 1) {
        let dual = DesignPoint { n_cpus: 2, ..single.point };
        if table.get(dual).is_none() {
            continue;
        }
        let s = rate(table, dual)? / rate(table, single.point)?;
        if worst.is_none_or(|(w, _)| (s - 2.0).abs() > (w - 2.0).abs()) {
            worst = Some((s, single.point));
        }
    }
    let (s, at) = worst.ok_or("sweep has no matched single/dual pair")?;
    out.push(RatioCheck {
        id: "a",
        description: format!("dual/single speedup in [1.9, 2.1] at every matched config (worst {})", at.label()),
        value: s,
        pass: (1.9..=2.1).contains(&s),
    });

    let b = rate(table, DesignPoint::new(1, 16, 0))? / rate(table, DesignPoint::new(1, 2, 0))? - 1.0;
    out.push(RatioCheck {
        id: "b",
        description: "1 CPU gain IC 2 KB -> 16 KB <= 15%".into(),
        value: b,
        pass: b <= 0.15,
    });

    let with_dc = rate(table, DesignPoint::new(1, 8, 4))?;
    let best_no_dc = experiment1_space().into_iter().map(|p| rate(table, p)).collect::<Result<Vec<_>, _>>()?;
    let best_all = best_no_dc.iter().cloned().fold(0.0, f64::max);
    let best_single = best_no_dc[..4].iter().cloned().fold(0.0, f64::max);
    let c1 = with_dc / best_all;
    let c2 = with_dc / best_single;
    out.push(RatioCheck {
        id: "c1",
        description: "4 KB DC vs best no-DC row >= 1.8x".into(),
        value: c1,
        pass: c1 >= 1.8,
    });
    out.push(RatioCheck {
        id: "c2",
        description: "4 KB DC vs best 1-CPU no-DC row >= 3.0x".into(),
        value: c2,
        pass: c2 >= 3.0,
    });

    let d = rate(table, DesignPoint::new(1, 8, 32))? / with_dc - 1.0;
    out.push(RatioCheck {
        id: "d",
        description: "1 CPU gain DC 4 KB -> 32 KB <= 10%".into(),
        value: d,
        pass: d <= 0.10,
    });

    let choice = recommend(table).choice;
    out.push(RatioCheck {
        id: "e",
        description: format!(
            "recommendation is {} (got {})",
            PROPOSED.label(),
            choice.map_or_else(|| "none".to_owned(), |p| p.label())
        ),
        value: if choice == Some(PROPOSED) { 1.0 } else { 0.0 },
        pass: choice == Some(PROPOSED),
    });
    Ok(out)
}
