//! Published measurements kept as static context for reports. Nothing here
//! is simulated.

use crate::resources::DesignPoint;

/// A measured hardware row: Dhrystones per second for versions 1.1 and 2.1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasuredRow {
    pub point: DesignPoint,
    pub dhrystones_1_1: u64,
    pub dhrystones_2_1: u64,
}

const fn row(n: u32, ic: u32, dc: u32, d11: u64, d21: u64) -> MeasuredRow {
    MeasuredRow { point: DesignPoint::new(n, ic, dc), dhrystones_1_1: d11, dhrystones_2_1: d21 }
}

/// Instruction-cache sweep without data cache.
pub const EXPERIMENT1: [MeasuredRow; 8] = [
    row(1, 2, 0, 10_000, 10_204),
    row(1, 4, 0, 10_638, 10_537),
    row(1, 8, 0, 11_238, 10_870),
    row(1, 16, 0, 11_297, 11_364),
    row(2, 2, 0, 19_999, 20_409),
    row(2, 4, 0, 21_277, 21_074),
    row(2, 8, 0, 22_471, 21_738),
    row(2, 16, 0, 22_473, 22_727),
];

/// Data-cache sweep at 8 KB instruction cache.
pub const EXPERIMENT2: [MeasuredRow; 6] = [
    row(1, 8, 4, 41_666, 41_667),
    row(1, 8, 8, 41_670, 41_667),
    row(1, 8, 16, 45_450, 41_667),
    row(1, 8, 32, 45_454, 41_667),
    row(2, 8, 4, 83_332, 68_234),
    row(2, 8, 8, 87_118, 71_428),
];

pub fn measured(point: DesignPoint) -> Option<&'static MeasuredRow> {
    EXPERIMENT1.iter().chain(EXPERIMENT2.iter()).find(|r| r.point == point)
}

/// Third-party processor scores, VAX MIPS kept as printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CpuScore {
    pub cpu: &'static str,
    pub mhz: &'static str,
    pub vax_mips: &'static str,
}

const fn cpu(cpu: &'static str, mhz: &'static str, vax_mips: &'static str) -> CpuScore {
    CpuScore { cpu, mhz, vax_mips }
}

pub const VAX_MIPS_1_1: [CpuScore; 8] = [
    cpu("AMD 80386", "40", "4.32"),
    cpu("IBM 486D2", "50", "7.89"),
    cpu("AMD 5X86", "133", "9.37"),
    cpu("IBM 486BL", "100", "12"),
    cpu("80486 DX2", "66", "12"),
    cpu("Nios II Dual-Processor System", "66.5", "49.58"),
    cpu("AMD K62", "500", "77.8"),
    cpu("AMD K63", "450", "76.3"),
];

pub const VAX_MIPS_2_1: [CpuScore; 8] = [
    cpu("AMD 80386", "40", "4.53"),
    cpu("IBM 486D2", "50", "7.89"),
    cpu("AMD 5X86", "133", "9.42"),
    cpu("IBM 486BL", "100", "11.8"),
    cpu("80486 DX2", "66", "12.4"),
    cpu("Nios II Dual-Processor System", "66.5", "40.65"),
    cpu("AMD K6", "200", "43.3"),
    cpu("IBM 6x86", "150", "43.9"),
];

pub fn scores_markdown(title: &str, rows: &[CpuScore]) -> String {
    let mut s = format!("### {title}\n\n| CPU | MHz | VAX MIPS |\n|---|---:|---:|\n");
    for r in rows {
        s.push_str(&format!("| {} | {} | {} |\n", r.cpu, r.mhz, r.vax_mips));
    }
    s
}

pub fn scores_csv(rows: &[CpuScore]) -> String {
    let mut s = String::from("cpu,mhz,vax_mips\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.cpu, r.mhz, r.vax_mips));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{format_fixed, vax_mips};
    use crate::dse::{experiment1_space, experiment2_space};
    use num_rational::Ratio;

    #[test]
    fn rows_follow_sweep_order() {
        let pts: Vec<_> = EXPERIMENT1.iter().map(|r| r.point).collect();
        assert_eq!(pts, experiment1_space());
        let pts: Vec<_> = EXPERIMENT2.iter().map(|r| r.point).collect();
        assert_eq!(pts, experiment2_space());
    }

    #[test]
    fn proposed_scores_match_conversion() {
        let r = measured(DesignPoint::new(2, 8, 8)).unwrap();
        assert_eq!(format_fixed(vax_mips(Ratio::from_integer(r.dhrystones_1_1 as u128)), 2), VAX_MIPS_1_1[5].vax_mips);
        assert_eq!(format_fixed(vax_mips(Ratio::from_integer(r.dhrystones_2_1 as u128)), 2), VAX_MIPS_2_1[5].vax_mips);
    }

    #[test]
    fn markdown_has_every_row() {
        let md = scores_markdown("x", &VAX_MIPS_2_1);
        assert_eq!(md.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| CPU")).count(), 8);
    }
}
