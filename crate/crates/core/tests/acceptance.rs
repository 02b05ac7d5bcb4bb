//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.

use std::collections::{HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use socsim_core::bench::{format_fixed, run_benchmark, vax_mips};
use socsim_core::cache::{Access, AccessOp, CacheGeometry, CacheKind, CacheState, KIB};
use socsim_core::calibrate::{calibrate_timing, measured_timing_anchors, Grid, CALIBRATION_SEED, FROZEN};
use socsim_core::config::SystemConfig;
use socsim_core::core_model::Cycles;
use socsim_core::driver::{run_dual_driver, DriverOptions};
use socsim_core::dse::{check_ratios, study_space, sweep};
use socsim_core::exec::Execution;
use socsim_core::mailbox::{model_check, mutually_exclusive, GetCode, Mailbox, MailboxError, PostResult};
use socsim_core::resources::{calibrate_costs, estimate, measured_anchors, DesignPoint, ResourceBudget};
use socsim_core::workload::{default_profile, synthesize, validate};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1. VAX MIPS conversion.

fn vax_oracle(dhrystones: u64) -> String {
    // hundredths, rounded half-up, in integer arithmetic
    let h = (dhrystones * 200 + 1757) / (2 * 1757);
    format!("{}.{:02}", h / 100, h % 100)
}

fn criterion_1() -> Outcome {
    let cases = [(87_118u64, "49.58"), (71_428, "40.65"), (1_757, "1.00")];
    let mut detail = Vec::new();
    let mut ok = true;
    for (d, want) in cases {
        let got = format_fixed(vax_mips(Ratio::from_integer(d as u128)), 2);
        ok &= got == want && vax_oracle(d) == want;
        detail.push(format!("{d} -> {got}"));
    }
    ok &= vax_mips(Ratio::from_integer(1_757)) == Ratio::from_integer(1);
    ensure(ok, detail.join(", "))
}

// 2. Resource anchors and feasibility boundaries.

fn criterion_2() -> Outcome {
    let fit = calibrate_costs(&measured_anchors()).map_err(|e| e.to_string())?;
    let budget = ResourceBudget::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for (p, m9k) in
        [(DesignPoint::new(2, 16, 0), 51u64), (DesignPoint::new(1, 8, 32), 53), (DesignPoint::new(2, 8, 8), 55)]
    {
        let est = estimate(&p, &fit.coefficients, &budget);
        ok &= est.m9k_used.abs_diff(m9k) <= 2;
        detail.push(format!("{} M9K {} (measured {m9k})", p.label(), est.m9k_used));
    }
    let unfit: Vec<String> = study_space()
        .into_iter()
        .filter(|p| !estimate(p, &fit.coefficients, &budget).fits)
        .map(|p| p.label())
        .collect();
    ok &= unfit.is_empty();
    detail.push(format!("{} of 14 study configs fit", 14 - unfit.len()));
    for p in [DesignPoint::new(2, 32, 0), DesignPoint::new(1, 8, 64)] {
        let fits = estimate(&p, &fit.coefficients, &budget).fits;
        ok &= !fits;
        detail.push(format!("{} {}", p.label(), if fits { "fits" } else { "infeasible" }));
    }
    ensure(ok, detail.join("; "))
}

// 3. Calibration, then trade-off ratios over a long sweep.

const SWEEP_ITERATIONS: u64 = 10_000;
const SWEEP_TIME_LIMIT: Duration = Duration::from_secs(60);

fn criterion_3() -> Outcome {
    let base = SystemConfig::default();
    let cal = calibrate_timing(&base, &measured_timing_anchors(), &Grid::default(), Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let mut detail = vec![format!(
        "fitted cpi {} lat {} ws {} fp {} seed {} (max anchor error {:.2}%)",
        cal.params.base_cpi,
        cal.params.main_memory_latency,
        cal.params.working_set_bytes,
        cal.params.code_footprint_bytes,
        cal.params.workload_seed,
        cal.max_rel_error * 100.0
    )];
    let mut ok = cal.params == FROZEN;
    if !ok {
        detail.push("differs from the frozen fixture".into());
    }

    let mut cfg = base.clone();
    cal.params.apply(&mut cfg);
    let start = Instant::now();
    let table = sweep(&cfg, &study_space(), SWEEP_ITERATIONS, cal.params.workload_seed, Execution::Parallel)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ok &= elapsed < SWEEP_TIME_LIMIT;
    for c in check_ratios(&table)? {
        ok &= c.pass;
        detail.push(format!("{} {:.4} {}", c.id, c.value, if c.pass { "ok" } else { "FAIL" }));
    }
    detail.push(format!("sweep {:.1}s", elapsed.as_secs_f64()));
    ensure(ok, detail.join("; "))
}

// 4. Cache against a brute-force shadow model.

const ORACLE_TRACES: usize = 1_000;
const ORACLE_TIME_LIMIT: Duration = Duration::from_secs(30);

struct Shadow {
    lines: u64,
    line_bytes: u64,
    // set -> (line number, dirty)
    resident: HashMap<u64, (u64, bool)>,
}

impl Shadow {
    fn access(&mut self, address: u32, write: bool) -> Access {
        if self.lines == 0 {
            return Access::Miss { writeback: false };
        }
        let line = address as u64 / self.line_bytes;
        let set = line % self.lines;
        match self.resident.get_mut(&set) {
            Some((l, dirty)) if *l == line => {
                *dirty |= write;
                Access::Hit
            }
            other => {
                let writeback = other.is_some_and(|(_, d)| *d);
                self.resident.insert(set, (line, write));
                Access::Miss { writeback }
            }
        }
    }
}

fn oracle_trace(case: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(case);
    let kind = if rng.random_bool(0.5) { CacheKind::Data } else { CacheKind::Instruction };
    let capacity = [0, 1, 2, 4, 8, 16, 32, 64][rng.random_range(0..8)] * KIB;
    let line_bytes = [16, 32, 32, 32, 64][rng.random_range(0..5)];
    let geometry = CacheGeometry::new(kind, capacity, line_bytes).unwrap();
    let mut cache = CacheState::new(geometry).unwrap();
    let mut shadow =
        Shadow { lines: (capacity / line_bytes) as u64, line_bytes: line_bytes as u64, resident: HashMap::new() };
    let refs = rng.random_range(1..=10_000);
    let span = [4 * KIB, 64 * KIB, 1 << 20][rng.random_range(0..3)];
    let hot = rng.random_range(64..=4 * KIB);
    for _ in 0..refs {
        let address = if rng.random_bool(0.7) { rng.random_range(0..hot) } else { rng.random_range(0..span) };
        let write = kind == CacheKind::Data && rng.random_bool(0.3);
        let op = if write { AccessOp::Write } else { AccessOp::Read };
        if cache.access(address, op).unwrap() != shadow.access(address, write) {
            return false;
        }
    }
    true
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let cases: Vec<u64> = (0..ORACLE_TRACES as u64).collect();
    let results = Execution::Parallel.map(&cases, |&c| oracle_trace(c));
    let elapsed = start.elapsed();
    let mismatched = results.iter().filter(|ok| !**ok).count();
    ensure(
        mismatched == 0 && elapsed < ORACLE_TIME_LIMIT,
        format!("{ORACLE_TRACES} traces, {mismatched} mismatched, {:.1}s", elapsed.as_secs_f64()),
    )
}

// 5. Workload mixes against the profile.

const MIX_TOLERANCE_PP: f64 = 2.0;

fn criterion_5() -> Outcome {
    let profile = default_profile();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for seed in 0..10 {
        let trace = synthesize(&profile, 1_000, seed).map_err(|e| e.to_string())?;
        let d = validate(&trace, &profile).map_err(|e| e.to_string())?;
        ok &= d.operator.is_some() && d.operand_type.is_some() && d.locality.is_some();
        worst = worst.max(d.max());
    }
    ok &= worst <= MIX_TOLERANCE_PP;
    ensure(ok, format!("10 seeds, worst mix deviation {worst:.2} pp (limit {MIX_TOLERANCE_PP})"))
}

// 6. Mailbox protocol.

fn random_mailbox_run(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let capacity = rng.random_range(1..=8);
    let mut mb = Mailbox::new("random", capacity).unwrap();
    let mut reference = VecDeque::new();
    let mut free_at = Cycles::ZERO;
    let hold = Cycles::whole(3);
    for msg in 0..300u32 {
        let core = rng.random_range(0..2);
        let overlap = free_at > Cycles::ZERO && rng.random_bool(0.2);
        let at = if overlap {
            free_at - Cycles::whole(rng.random_range(1..=2))
        } else {
            free_at + Cycles::whole(rng.random_range(0..3))
        };
        if rng.random_bool(0.5) {
            match (mb.post_at(core, msg, at, hold), overlap) {
                (Err(MailboxError::Busy { .. }), true) => {}
                (Ok(r), false) => {
                    let want = if reference.len() < capacity { PostResult::Ok } else { PostResult::Full };
                    if r != want {
                        return Err(format!("seed {seed}: post returned {r:?}"));
                    }
                    if r == PostResult::Ok {
                        reference.push_back(msg);
                    }
                    free_at = at + hold;
                }
                (r, _) => return Err(format!("seed {seed}: unexpected post outcome {r:?}")),
            }
        } else {
            match (mb.get_at(core, at, hold), overlap) {
                (Err(MailboxError::Busy { .. }), true) => {}
                (Ok((v, code)), false) => {
                    let want = reference.pop_front();
                    if v != want || (code == GetCode::Ok) != want.is_some() {
                        return Err(format!("seed {seed}: get returned {v:?}/{code:?}, expected {want:?}"));
                    }
                    free_at = at + hold;
                }
                (r, _) => return Err(format!("seed {seed}: unexpected get outcome {r:?}")),
            }
        }
        let s = mb.stats();
        if s.posts_accepted != s.gets_successful + mb.len() as u64 {
            return Err(format!("seed {seed}: conservation broken"));
        }
    }
    if !mutually_exclusive(mb.mutex().events()) {
        return Err(format!("seed {seed}: mutex overlap"));
    }
    Ok(())
}

fn random_driver_run(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = SystemConfig::default();
    cfg.mailbox.capacity = rng.random_range(1..=4);
    let opts = DriverOptions {
        rounds: rng.random_range(1..=12),
        getter_iterations: rng.random_range(1..=8),
        poster_iterations: rng.random_range(1..=8),
    };
    let a = run_dual_driver(&cfg, seed, opts).map_err(|e| e.to_string())?;
    let b = run_dual_driver(&cfg, seed, opts).map_err(|e| e.to_string())?;
    if a.transcript() != b.transcript() {
        return Err(format!("seed {seed}: transcript not deterministic"));
    }
    let s = a.stats;
    if s.posts_accepted != s.gets_successful + a.residue.len() as u64 {
        return Err(format!("seed {seed}: conservation broken"));
    }
    let accepted = a.accepted();
    let received = a.received();
    if received[..] != accepted[..received.len()] || accepted[received.len()..] != a.residue[..] {
        return Err(format!("seed {seed}: received values are not the accepted ones in order"));
    }
    if !mutually_exclusive(&a.mutex_events) {
        return Err(format!("seed {seed}: mutex overlap"));
    }
    Ok(())
}

fn criterion_6() -> Outcome {
    let mut detail = Vec::new();
    for capacity in 1..=3 {
        let r = model_check(capacity, 6);
        if !r.violations.is_empty() {
            return Err(format!("capacity {capacity}: {}", r.violations[0]));
        }
        detail.push(format!("cap {capacity}: {} sequences", r.sequences));
    }
    let seeds: Vec<u64> = (0..200).collect();
    Execution::Parallel.map(&seeds, |&s| random_mailbox_run(s)).into_iter().collect::<Result<Vec<_>, _>>()?;
    detail.push("200 random mailbox runs".into());
    let seeds: Vec<u64> = (0..40).collect();
    Execution::Parallel.map(&seeds, |&s| random_driver_run(s)).into_iter().collect::<Result<Vec<_>, _>>()?;
    detail.push("40 random driver runs".into());
    let mut small = SystemConfig::default();
    small.mailbox.capacity = 1;
    let r = run_dual_driver(&small, 4, DriverOptions { rounds: 12, getter_iterations: 20, poster_iterations: 1 })
        .map_err(|e| e.to_string())?;
    detail.push(format!("fast poster: {} full rejections", r.stats.full_rejections));
    ensure(r.stats.full_rejections > 0, detail.join("; "))
}

// 7. Deterministic output for a fixed seed and config.

fn outputs(seed: u64, exec: Execution) -> Result<Vec<String>, String> {
    let cfg = SystemConfig::default();
    let e = |x: &dyn std::fmt::Display| x.to_string();
    Ok(vec![
        sweep(&cfg, &study_space(), 100, seed, exec).map_err(|x| e(&x))?.to_csv(),
        sweep(&cfg, &study_space(), 100, seed, exec).map_err(|x| e(&x))?.to_markdown(),
        format!("{:?}", run_benchmark(&cfg, 100, seed, false).map_err(|x| e(&x))?),
        synthesize(&cfg.workload, 3, seed).map_err(|x| e(&x))?.to_text(),
        run_dual_driver(&cfg, seed, DriverOptions::symmetric(5, 3)).map_err(|x| e(&x))?.transcript(),
        cfg.to_toml_string().map_err(|x| e(&x))?,
    ])
}

fn criterion_7() -> Outcome {
    let mut ok = true;
    for seed in [0, 7, CALIBRATION_SEED] {
        let a = outputs(seed, Execution::Parallel)?;
        let b = outputs(seed, Execution::Parallel)?;
        let c = outputs(seed, Execution::Sequential)?;
        ok &= a == b && a == c;
    }
    ensure(ok, "sweep/simulate/trace/driver/config outputs byte-identical across reruns and execution modes".into())
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("VAX MIPS arithmetic", criterion_1),
        ("resource anchors and fit boundaries", criterion_2),
        ("calibrated ratio reproduction", criterion_3),
        ("cache oracle equivalence", criterion_4),
        ("workload fidelity", criterion_5),
        ("mailbox suite", criterion_6),
        ("determinism", criterion_7),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {} PASS {name} ({secs:.1}s): {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} FAIL {name} ({secs:.1}s): {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
