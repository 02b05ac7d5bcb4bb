//! Synthetic Dhrystone-like workloads.
//!
//! A loop body of `statements_per_iteration` statements is drawn once from the
//! seed so that its statement, operator, operand-type and operand-locality
//! counts follow the profile (largest-remainder apportionment, then shuffled).
//! The body is lowered to abstract instructions and replayed for every
//! iteration, so code and data addresses repeat exactly like a compiled
//! benchmark loop.
//!
//! Lowering:
//! - assignment: one `load` per memory-resident source operand, one `alu`,
//!   one `store` if the destination is memory-resident;
//! - control: `alu` + `branch`;
//! - call: `call_overhead`, one `store` per passed parameter, `call_overhead`.
//!
//! An operand is memory-resident when it is a global, a by-reference
//! parameter, or an array/record element. Locals, constants, by-value
//! parameters and function results live in registers.
//!
//! The PRNG is ChaCha8 seeded through `SeedableRng::seed_from_u64`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

/// Code is laid out from the start of a core's segment.
pub const CODE_BASE: u32 = 0;
/// Data (hot stack region followed by globals) starts here, segment-relative.
pub const DATA_BASE: u32 = 0x1_0000;
pub const MIN_WORKING_SET_BYTES: u32 = 32;
const WORD: u32 = 4;
const HOT_REGION_BYTES: u32 = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("working set of {0} B is smaller than one cache line")]
    WorkingSetTooSmall(u32),
    #[error("code footprint of {footprint} B cannot hold {needed} B of lowered code")]
    CodeFootprintTooSmall { footprint: u32, needed: u32 },
    #[error("{mix} mix sums to {sum:.2}%, expected 100% +/- 0.2")]
    MixSum { mix: &'static str, sum: f64 },
    #[error("{0} mix is empty or negative")]
    EmptyMix(&'static str),
    #[error("profile must have at least one statement per iteration")]
    NoStatements,
    #[error("trace is empty")]
    EmptyTrace,
    #[error("{op} instruction must carry {expected} data references, got {got}")]
    RefArity { op: OpClass, expected: &'static str, got: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub trait Category: Copy + Eq + 'static {
    const ALL: &'static [Self];
    const MIX: &'static str;
    fn label(self) -> &'static str;
    fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }
}

macro_rules! category {
    ($name:ident, $mix:literal, [$($variant:ident => $label:literal),+ $(,)?]) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl Category for $name {
            const ALL: &'static [Self] = &[$($name::$variant),+];
            const MIX: &'static str = $mix;
            fn label(self) -> &'static str {
                match self { $($name::$variant => $label),+ }
            }
        }
    };
}

category!(StatementKind, "statement", [Assignment => "assignment", Control => "control", Call => "call"]);
category!(OperatorClass, "operator", [Arithmetic => "arithmetic", Comparison => "comparison", Logic => "logic"]);
category!(OperandType, "operand_type", [
    Integer => "integer", Character => "character", Pointer => "pointer",
    String => "string", Array => "array", Record => "record",
]);
category!(Locality, "locality", [
    Local => "local", Global => "global", Parameter => "parameter",
    FunctionResult => "function_result", Constant => "constant",
]);

/// Percentages per category, in `Category::ALL` order.
pub trait Mix {
    type Of: Category;
    fn shares(&self) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatementMix {
    pub assignment: f64,
    pub control: f64,
    pub call: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorMix {
    pub arithmetic: f64,
    pub comparison: f64,
    pub logic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperandTypeMix {
    pub integer: f64,
    pub character: f64,
    pub pointer: f64,
    pub string: f64,
    pub array: f64,
    pub record: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalityMix {
    pub local: f64,
    pub global: f64,
    pub parameter: f64,
    pub function_result: f64,
    pub constant: f64,
}

impl Mix for StatementMix {
    type Of = StatementKind;
    fn shares(&self) -> Vec<f64> {
        vec![self.assignment, self.control, self.call]
    }
}

impl Mix for OperatorMix {
    type Of = OperatorClass;
    fn shares(&self) -> Vec<f64> {
        vec![self.arithmetic, self.comparison, self.logic]
    }
}

impl Mix for OperandTypeMix {
    type Of = OperandType;
    fn shares(&self) -> Vec<f64> {
        vec![self.integer, self.character, self.pointer, self.string, self.array, self.record]
    }
}

impl Mix for LocalityMix {
    type Of = Locality;
    fn shares(&self) -> Vec<f64> {
        vec![self.local, self.global, self.parameter, self.function_result, self.constant]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadProfile {
    pub statement_mix: StatementMix,
    pub operator_mix: OperatorMix,
    pub operand_type_mix: OperandTypeMix,
    pub locality_mix: LocalityMix,
    pub avg_call_params: f64,
    pub statements_per_iteration: u32,
    pub operators_per_iteration: u32,
    pub operands_per_iteration: u32,
    /// Fraction of parameter operands passed by reference.
    pub by_reference_share: f64,
    pub working_set_bytes: u32,
    pub code_footprint_bytes: u32,
}

impl Default for WorkloadProfile {
    fn default() -> Self {
        default_profile()
    }
}

/// Dhrystone 2.1 statement and operand distribution.
pub fn default_profile() -> WorkloadProfile {
    WorkloadProfile {
        statement_mix: StatementMix { assignment: 51.0, control: 32.4, call: 16.7 },
        operator_mix: OperatorMix { arithmetic: 50.8, comparison: 42.8, logic: 6.3 },
        operand_type_mix: OperandTypeMix {
            integer: 72.3,
            character: 18.6,
            pointer: 5.0,
            string: 2.5,
            array: 0.8,
            record: 0.8,
        },
        locality_mix: LocalityMix { local: 47.1, global: 9.1, parameter: 18.6, function_result: 2.5, constant: 22.7 },
        avg_call_params: 1.82,
        statements_per_iteration: 103,
        operators_per_iteration: 63,
        operands_per_iteration: 242,
        by_reference_share: 22.0 / 45.0,
        working_set_bytes: crate::calibrate::FROZEN.working_set_bytes,
        code_footprint_bytes: crate::calibrate::FROZEN.code_footprint_bytes,
    }
}

fn check_mix<M: Mix>(mix: &M) -> Result<(), WorkloadError> {
    let shares = mix.shares();
    let name = <M::Of as Category>::MIX;
    if shares.iter().any(|s| !s.is_finite() || *s < 0.0) || shares.iter().sum::<f64>() <= 0.0 {
        return Err(WorkloadError::EmptyMix(name));
    }
    let sum: f64 = shares.iter().sum();
    if (sum - 100.0).abs() > 0.2 + 1e-9 {
        return Err(WorkloadError::MixSum { mix: name, sum });
    }
    Ok(())
}

impl WorkloadProfile {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        check_mix(&self.statement_mix)?;
        check_mix(&self.operator_mix)?;
        check_mix(&self.operand_type_mix)?;
        check_mix(&self.locality_mix)?;
        if self.statements_per_iteration == 0 {
            return Err(WorkloadError::NoStatements);
        }
        if self.working_set_bytes < MIN_WORKING_SET_BYTES {
            return Err(WorkloadError::WorkingSetTooSmall(self.working_set_bytes));
        }
        Ok(())
    }

    fn hot_region_bytes(&self) -> u32 {
        (HOT_REGION_BYTES.min(self.working_set_bytes / 2) / WORD * WORD).max(WORD)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpClass {
    Alu,
    Load,
    Store,
    Branch,
    CallOverhead,
}

impl OpClass {
    pub fn as_str(self) -> &'static str {
        match self {
            OpClass::Alu => "alu",
            OpClass::Load => "load",
            OpClass::Store => "store",
            OpClass::Branch => "branch",
            OpClass::CallOverhead => "call_overhead",
        }
    }
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "alu" => OpClass::Alu,
            "load" => OpClass::Load,
            "store" => OpClass::Store,
            "branch" => OpClass::Branch,
            "call_overhead" => OpClass::CallOverhead,
            other => return Err(format!("unknown op class `{other}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RefKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DataRef {
    pub address: u32,
    pub kind: RefKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Operand {
    pub ty: OperandType,
    pub locality: Locality,
    pub by_reference: bool,
}

impl Operand {
    pub fn memory_resident(&self) -> bool {
        self.locality == Locality::Global
            || self.by_reference
            || matches!(self.ty, OperandType::Array | OperandType::Record)
    }
}

/// Source-level bookkeeping carried by the first instruction of a lowered
/// statement. Not part of the text trace format.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StatementNote {
    pub operators: Vec<OperatorClass>,
    pub operands: Vec<Operand>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractInstruction {
    pub fetch_address: u32,
    pub op_class: OpClass,
    pub data_refs: SmallVec<[DataRef; 2]>,
    pub note: Option<Box<StatementNote>>,
}

impl AbstractInstruction {
    /// Builds an instruction, checking that loads/stores carry data
    /// references and everything else carries none.
    pub fn new(fetch_address: u32, op_class: OpClass, data_refs: &[DataRef]) -> Result<Self, WorkloadError> {
        let needs_refs = matches!(op_class, OpClass::Load | OpClass::Store);
        if needs_refs == data_refs.is_empty() {
            return Err(WorkloadError::RefArity {
                op: op_class,
                expected: if needs_refs { ">= 1" } else { "0" },
                got: data_refs.len(),
            });
        }
        Ok(Self { fetch_address, op_class, data_refs: SmallVec::from_slice(data_refs), note: None })
    }

    pub fn alu(fetch_address: u32) -> Self {
        Self::new(fetch_address, OpClass::Alu, &[]).unwrap()
    }

    pub fn load(fetch_address: u32, address: u32) -> Self {
        Self::new(fetch_address, OpClass::Load, &[DataRef { address, kind: RefKind::Read }]).unwrap()
    }

    pub fn store(fetch_address: u32, address: u32) -> Self {
        Self::new(fetch_address, OpClass::Store, &[DataRef { address, kind: RefKind::Write }]).unwrap()
    }
}

/// A loop body replayed `iterations` times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    body: Vec<AbstractInstruction>,
    iterations: u64,
}

impl Trace {
    pub fn repeat(body: Vec<AbstractInstruction>, iterations: u64) -> Self {
        Self { body, iterations }
    }

    pub fn from_instructions(instructions: Vec<AbstractInstruction>) -> Self {
        Self { body: instructions, iterations: 1 }
    }

    pub fn empty() -> Self {
        Self { body: Vec::new(), iterations: 0 }
    }

    pub fn body(&self) -> &[AbstractInstruction] {
        &self.body
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn len(&self) -> u64 {
        self.body.len() as u64 * self.iterations
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: u64) -> Option<&AbstractInstruction> {
        if index >= self.len() {
            return None;
        }
        self.body.get((index % self.body.len() as u64) as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AbstractInstruction> + '_ {
        (0..self.iterations).flat_map(move |_| self.body.iter())
    }

    pub fn with_iterations(&self, iterations: u64) -> Self {
        Self { body: self.body.clone(), iterations }
    }

    /// Shifts every code and data address by `offset` (placing the trace in
    /// another core's segment).
    pub fn relocated(&self, offset: u32) -> Self {
        let body = self
            .body
            .iter()
            .map(|i| {
                let mut i = i.clone();
                i.fetch_address += offset;
                for r in &mut i.data_refs {
                    r.address += offset;
                }
                i
            })
            .collect();
        Self { body, iterations: self.iterations }
    }

    /// One line per instruction: `fetch_addr op_class [R|W addr]*`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for instr in self.iter() {
            write!(out, "{:#010x} {}", instr.fetch_address, instr.op_class).unwrap();
            for r in &instr.data_refs {
                let k = match r.kind {
                    RefKind::Read => 'R',
                    RefKind::Write => 'W',
                };
                write!(out, " {k} {:#010x}", r.address).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self, WorkloadError> {
        let mut body = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| WorkloadError::Parse { line: n + 1, msg };
            let mut tok = line.split_whitespace();
            let fetch = parse_addr(tok.next().unwrap()).map_err(err)?;
            let op: OpClass = tok.next().ok_or_else(|| err("missing op class".into()))?.parse().map_err(err)?;
            let mut refs: SmallVec<[DataRef; 2]> = SmallVec::new();
            while let Some(k) = tok.next() {
                let kind = match k {
                    "R" => RefKind::Read,
                    "W" => RefKind::Write,
                    other => return Err(err(format!("expected R or W, got `{other}`"))),
                };
                let addr = tok.next().ok_or_else(|| err("missing address".into()))?;
                refs.push(DataRef { address: parse_addr(addr).map_err(err)?, kind });
            }
            body.push(AbstractInstruction::new(fetch, op, &refs).map_err(|e| err(e.to_string()))?);
        }
        Ok(Self::from_instructions(body))
    }
}

fn parse_addr(s: &str) -> Result<u32, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("bad address `{s}`: {e}"))
}

/// Largest-remainder apportionment of `total` items over `shares`.
pub fn apportion(total: u32, shares: &[f64]) -> Vec<u32> {
    let sum: f64 = shares.iter().sum();
    if sum <= 0.0 {
        return vec![0; shares.len()];
    }
    let quotas: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut counts: Vec<u32> = quotas.iter().map(|q| q.floor() as u32).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let assigned: u32 = counts.iter().sum();
    for &i in order.iter().take((total - assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

fn draw<C: Category>(total: u32, shares: &[f64], rng: &mut ChaCha8Rng) -> Vec<C> {
    let mut items: Vec<C> = apportion(total, shares)
        .into_iter()
        .zip(C::ALL)
        .flat_map(|(n, &c)| std::iter::repeat_n(c, n as usize))
        .collect();
    items.shuffle(rng);
    items
}

struct Statement {
    kind: StatementKind,
    operators: Vec<OperatorClass>,
    operands: Vec<Operand>,
}

fn draw_statements(profile: &WorkloadProfile, rng: &mut ChaCha8Rng) -> Vec<Statement> {
    let kinds: Vec<StatementKind> = draw(profile.statements_per_iteration, &profile.statement_mix.shares(), rng);
    let mut stmts: Vec<Statement> =
        kinds.into_iter().map(|kind| Statement { kind, operators: Vec::new(), operands: Vec::new() }).collect();

    let mut targets: Vec<usize> = (0..stmts.len()).filter(|&i| stmts[i].kind != StatementKind::Call).collect();
    targets.shuffle(rng);
    let operators: Vec<OperatorClass> = draw(profile.operators_per_iteration, &profile.operator_mix.shares(), rng);
    if !targets.is_empty() {
        for (j, op) in operators.into_iter().enumerate() {
            stmts[targets[j % targets.len()]].operators.push(op);
        }
    }

    let total = profile.operands_per_iteration;
    let types: Vec<OperandType> = draw(total, &profile.operand_type_mix.shares(), rng);
    let localities: Vec<Locality> = draw(total, &profile.locality_mix.shares(), rng);
    let n_params = localities.iter().filter(|&&l| l == Locality::Parameter).count();
    let mut by_ref_left = (n_params as f64 * profile.by_reference_share).round() as usize;
    let mut operands = types.into_iter().zip(localities).map(|(ty, locality)| {
        let by_reference = locality == Locality::Parameter && by_ref_left > 0;
        if by_reference {
            by_ref_left -= 1;
        }
        Operand { ty, locality, by_reference }
    });

    // Operand counts: calls take the average parameter count, every other
    // statement gets up to two, and the remainder lands on random statements.
    let params = profile.avg_call_params.round().max(0.0) as u32;
    let mut counts = vec![0u32; stmts.len()];
    let mut left = total;
    for (i, s) in stmts.iter().enumerate() {
        if s.kind == StatementKind::Call {
            let n = params.min(left);
            counts[i] = n;
            left -= n;
        }
    }
    let spill: Vec<usize> = if targets.is_empty() { (0..stmts.len()).collect() } else { targets.clone() };
    for _ in 0..2 {
        for &i in &targets {
            if left > 0 {
                counts[i] += 1;
                left -= 1;
            }
        }
    }
    while left > 0 && !spill.is_empty() {
        counts[spill[rng.random_range(0..spill.len())]] += 1;
        left -= 1;
    }
    for (s, n) in stmts.iter_mut().zip(counts) {
        s.operands.extend(operands.by_ref().take(n as usize));
    }
    stmts
}

struct DataLayout {
    working_set: u32,
    hot: u32,
    next_param_slot: u32,
}

impl DataLayout {
    fn operand_address(&self, op: &Operand, rng: &mut ChaCha8Rng) -> u32 {
        let span = if op.by_reference && !matches!(op.ty, OperandType::Array | OperandType::Record) {
            self.hot
        } else {
            self.working_set
        };
        DATA_BASE + rng.random_range(0..span / WORD) * WORD
    }

    fn param_slot(&mut self) -> u32 {
        let addr = DATA_BASE + self.next_param_slot;
        self.next_param_slot = (self.next_param_slot + WORD) % self.hot;
        addr
    }
}

/// Lowered instructions for one statement, addresses not yet placed.
fn lower(
    stmt: &Statement,
    layout: &mut DataLayout,
    params: u32,
    rng: &mut ChaCha8Rng,
) -> Vec<(OpClass, Option<DataRef>)> {
    let mut ops = Vec::new();
    match stmt.kind {
        StatementKind::Assignment => {
            let (dest, sources) = match stmt.operands.split_first() {
                Some((d, s)) => (Some(d), s),
                None => (None, &[][..]),
            };
            for src in sources.iter().filter(|o| o.memory_resident()) {
                let address = layout.operand_address(src, rng);
                ops.push((OpClass::Load, Some(DataRef { address, kind: RefKind::Read })));
            }
            ops.push((OpClass::Alu, None));
            if let Some(d) = dest.filter(|d| d.memory_resident()) {
                let address = layout.operand_address(d, rng);
                ops.push((OpClass::Store, Some(DataRef { address, kind: RefKind::Write })));
            }
        }
        StatementKind::Control => {
            ops.push((OpClass::Alu, None));
            ops.push((OpClass::Branch, None));
        }
        StatementKind::Call => {
            ops.push((OpClass::CallOverhead, None));
            for _ in 0..params {
                let address = layout.param_slot();
                ops.push((OpClass::Store, Some(DataRef { address, kind: RefKind::Write })));
            }
            ops.push((OpClass::CallOverhead, None));
        }
    }
    ops
}

/// Builds the lowered loop body for `profile` from `seed`.
pub fn synthesize_body(profile: &WorkloadProfile, seed: u64) -> Result<Vec<AbstractInstruction>, WorkloadError> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stmts = draw_statements(profile, &mut rng);
    let params = profile.avg_call_params.round().max(0.0) as u32;
    let mut layout = DataLayout {
        working_set: profile.working_set_bytes / WORD * WORD,
        hot: profile.hot_region_bytes(),
        next_param_slot: 0,
    };
    let lowered: Vec<_> = stmts.iter().map(|s| lower(s, &mut layout, params, &mut rng)).collect();

    // Code placement: statements keep program order, separated by random
    // word-granular gaps so the body is spread across the whole footprint.
    let code_words: u32 = lowered.iter().map(|l| l.len() as u32).sum();
    let needed = code_words * WORD;
    if needed > profile.code_footprint_bytes {
        return Err(WorkloadError::CodeFootprintTooSmall { footprint: profile.code_footprint_bytes, needed });
    }
    let spare_words = (profile.code_footprint_bytes - needed) / WORD;
    let mut cuts: Vec<u32> = (0..lowered.len()).map(|_| rng.random_range(0..=spare_words)).collect();
    cuts.sort_unstable();

    let mut body = Vec::with_capacity(code_words as usize);
    let mut pc_words = 0u32;
    let mut prev_cut = 0u32;
    for ((stmt, ops), cut) in stmts.iter().zip(lowered).zip(cuts) {
        pc_words += cut - prev_cut;
        prev_cut = cut;
        for (k, (op, data)) in ops.into_iter().enumerate() {
            let refs: SmallVec<[DataRef; 2]> = data.into_iter().collect();
            let mut instr = AbstractInstruction::new(CODE_BASE + pc_words * WORD, op, &refs)?;
            if k == 0 {
                instr.note = Some(Box::new(StatementNote {
                    operators: stmt.operators.clone(),
                    operands: stmt.operands.clone(),
                }));
            }
            body.push(instr);
            pc_words += 1;
        }
    }
    Ok(body)
}

pub fn synthesize(profile: &WorkloadProfile, iterations: u64, seed: u64) -> Result<Trace, WorkloadError> {
    Ok(Trace::repeat(synthesize_body(profile, seed)?, iterations))
}

/// Splits an instruction sequence back into statements by op pattern.
pub fn classify_statements(instrs: &[AbstractInstruction]) -> Vec<StatementKind> {
    use OpClass::*;
    let mut out = Vec::new();
    let mut i = 0;
    let at = |i: usize| instrs.get(i).map(|x| x.op_class);
    while i < instrs.len() {
        match instrs[i].op_class {
            CallOverhead => {
                i += 1;
                while at(i) == Some(Store) {
                    i += 1;
                }
                if at(i) == Some(CallOverhead) {
                    i += 1;
                }
                out.push(StatementKind::Call);
            }
            Branch => {
                i += 1;
                out.push(StatementKind::Control);
            }
            Alu if at(i + 1) == Some(Branch) => {
                i += 2;
                out.push(StatementKind::Control);
            }
            Load | Alu | Store => {
                while at(i) == Some(Load) {
                    i += 1;
                }
                if at(i) == Some(Alu) {
                    i += 1;
                }
                if at(i) == Some(Store) {
                    i += 1;
                }
                out.push(StatementKind::Assignment);
            }
        }
    }
    out
}

/// Largest absolute deviation, in percentage points, of each measured mix
/// from the profile. `None` means the trace carries no statement notes from
/// which that mix could be measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixDeviation {
    pub statement: f64,
    pub operator: Option<f64>,
    pub operand_type: Option<f64>,
    pub locality: Option<f64>,
}

impl MixDeviation {
    pub fn max(&self) -> f64 {
        [Some(self.statement), self.operator, self.operand_type, self.locality]
            .into_iter()
            .flatten()
            .fold(0.0, f64::max)
    }
}

fn deviation<C: Category>(observed: impl IntoIterator<Item = C>, expected: &[f64]) -> Option<f64> {
    let mut counts = vec![0u64; C::ALL.len()];
    for c in observed {
        counts[c.index()] += 1;
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let dev =
        counts.iter().zip(expected).map(|(&n, &e)| (100.0 * n as f64 / total as f64 - e).abs()).fold(0.0, f64::max);
    Some(dev)
}

pub fn validate(trace: &Trace, profile: &WorkloadProfile) -> Result<MixDeviation, WorkloadError> {
    check_mix(&profile.statement_mix)?;
    check_mix(&profile.operator_mix)?;
    check_mix(&profile.operand_type_mix)?;
    check_mix(&profile.locality_mix)?;
    if trace.is_empty() {
        return Err(WorkloadError::EmptyTrace);
    }
    // Every iteration replays the same body, so the body's proportions are the trace's.
    let body = trace.body();
    let notes: Vec<&StatementNote> = body.iter().filter_map(|i| i.note.as_deref()).collect();
    let operands = || notes.iter().flat_map(|n| n.operands.iter());
    Ok(MixDeviation {
        statement: deviation(classify_statements(body), &profile.statement_mix.shares()).unwrap_or(100.0),
        operator: deviation(notes.iter().flat_map(|n| n.operators.iter().copied()), &profile.operator_mix.shares()),
        operand_type: deviation(operands().map(|o| o.ty), &profile.operand_type_mix.shares()),
        locality: deviation(operands().map(|o| o.locality), &profile.locality_mix.shares()),
    })
}
