//! Leveled protocol programs with failure-reset semantics, the built-in
//! network protocols, and a small declarative text format for variants.
//!
//! A protocol is a list of levels. Each level runs one or two independent
//! instances (two when the same step is repeated on disjoint cell pairs),
//! and every instance ends with parity checks over the qubits it measured.
//! A post-selecting check that fails sends control back to the level's
//! failure reset level (FRL). The last level couples the GHZ resource to
//! the data qubits and reports the stabilizer outcome.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pauli::{Gate, GateKind, PauliString};

/// Stabilizer type measured by a protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Z,
    X,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Z => "Z",
            Basis::X => "X",
        })
    }
}

impl FromStr for Basis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Z" | "z" => Ok(Basis::Z),
            "X" | "x" => Ok(Basis::X),
            other => Err(Error::parse(format!("unknown basis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProtocolKind {
    Expedient,
    Stringent,
    StringentPlus,
    Monolithic,
    Custom,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Expedient => "EXPEDIENT",
            ProtocolKind::Stringent => "STRINGENT",
            ProtocolKind::StringentPlus => "STRINGENT_PLUS",
            ProtocolKind::Monolithic => "MONOLITHIC",
            ProtocolKind::Custom => "CUSTOM",
        }
    }

    /// The compiled-in definition, in the Z basis.
    pub fn builtin(self) -> Option<ProtocolSpec> {
        match self {
            ProtocolKind::Expedient => Some(expedient()),
            ProtocolKind::Stringent => Some(stringent()),
            ProtocolKind::StringentPlus => Some(stringent_plus()),
            ProtocolKind::Monolithic => Some(monolithic()),
            ProtocolKind::Custom => None,
        }
    }

    /// Published per-level success probabilities and the noise point they
    /// were computed at.
    pub fn reference_success(self) -> Option<ReferenceSuccess> {
        match self {
            ProtocolKind::Expedient => Some(ReferenceSuccess {
                p_local: 0.006,
                p_n: 0.1,
                levels: &[(1, 0.7346), (2, 0.7506), (3, 0.8619), (4, 0.8550), (5, 0.8651), (6, 0.8619), (7, 0.8550), (8, 0.8654)],
            }),
            ProtocolKind::Stringent => Some(ReferenceSuccess {
                p_local: 0.0075,
                p_n: 0.1,
                levels: &[
                    (1, 0.7277),
                    (2, 0.7429),
                    (3, 0.8586),
                    (4, 0.8509),
                    (5, 0.8019),
                    (6, 0.8586),
                    (7, 0.8509),
                    (8, 0.8043),
                    (9, 0.8586),
                    (10, 0.8509),
                    (11, 0.6588),
                    (12, 0.8586),
                    (13, 0.8509),
                    (14, 0.6454),
                ],
            }),
            _ => None,
        }
    }
}

/// Reference success probabilities `(level, p)` at `p_g = p_m = p_local`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSuccess {
    pub p_local: f64,
    pub p_n: f64,
    pub levels: &'static [(usize, f64)],
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['-', '+'], "_").as_str() {
            "EXPEDIENT" => Ok(ProtocolKind::Expedient),
            "STRINGENT" => Ok(ProtocolKind::Stringent),
            "STRINGENT_PLUS" | "STRINGENT_" => Ok(ProtocolKind::StringentPlus),
            "MONOLITHIC" => Ok(ProtocolKind::Monolithic),
            "CUSTOM" => Ok(ProtocolKind::Custom),
            other => Err(Error::parse(format!("unknown protocol {other:?}"))),
        }
    }
}

/// What happens with the parity of a group of measurement outcomes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckRole {
    /// Ideal parity is even; an odd parity aborts to the FRL.
    PostSelect,
    /// Outcome is random; an odd parity triggers this Pauli correction.
    Correct(PauliString),
    /// The parity is the reported stabilizer outcome.
    Report,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheck {
    pub measured: Vec<usize>,
    pub role: CheckRole,
}

/// One instance of a level: gates in program order, then checks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LevelInstance {
    pub gates: Vec<Gate>,
    pub checks: Vec<ParityCheck>,
}

impl LevelInstance {
    pub fn postselects(&self) -> bool {
        self.checks.iter().any(|c| c.role == CheckRole::PostSelect)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolLevel {
    /// 1-based level index.
    pub index: usize,
    pub name: String,
    /// Time steps, one per elementary operation in the busiest cell.
    pub steps: u32,
    pub instances: Vec<LevelInstance>,
    /// Failure reset level.
    pub frl: usize,
    /// Levels sharing a group id run as two simultaneous instances.
    pub parallel_group: Option<u32>,
}

impl ProtocolLevel {
    pub fn postselects(&self) -> bool {
        self.instances.iter().any(LevelInstance::postselects)
    }
}

/// Classical flag left by the post-coupling filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbortFilterOutcome {
    Pass,
    /// Filter failed, but the GHZ read out in a valid Z-basis pattern.
    FailGood,
    /// Filter failed and the GHZ Z-basis pattern was invalid.
    FailBad,
}

impl AbortFilterOutcome {
    pub const ALL: [AbortFilterOutcome; 3] =
        [AbortFilterOutcome::Pass, AbortFilterOutcome::FailGood, AbortFilterOutcome::FailBad];

    pub fn name(self) -> &'static str {
        match self {
            AbortFilterOutcome::Pass => "PASS",
            AbortFilterOutcome::FailGood => "FAIL_GOOD",
            AbortFilterOutcome::FailBad => "FAIL_BAD",
        }
    }
}

/// Filter run on the GHZ after it has been coupled to the data qubits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbortFilter {
    /// Number of gates of the final level that precede the filter.
    pub after_gate: usize,
    pub instance: LevelInstance,
    pub steps: u32,
    /// GHZ qubits measured in the Z basis when the filter fails.
    pub abort_readout: Vec<usize>,
}

/// Qubit register of a protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub cells: usize,
    pub ancillas_per_cell: usize,
    /// Cell owning each qubit.
    pub cell_of: Vec<usize>,
    /// The four data qubits, in stabilizer order.
    pub data: [usize; 4],
}

impl Layout {
    /// `cells` cells of one data qubit (slot 0) plus `ancillas` ancilla tiers.
    pub fn network(cells: usize, ancillas: usize) -> Layout {
        let per = ancillas + 1;
        let cell_of = (0..cells * per).map(|q| q / per).collect();
        let data = [0, per, 2 * per, 3 * per];
        Layout { cells, ancillas_per_cell: ancillas, cell_of, data }
    }

    pub fn qubits(&self) -> usize {
        self.cell_of.len()
    }

    /// Qubit at `tier` (0 = data) of network cell `cell`.
    pub fn slot(&self, cell: usize, tier: usize) -> usize {
        cell * (self.ancillas_per_cell + 1) + tier
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub name: String,
    pub basis: Basis,
    pub layout: Layout,
    pub levels: Vec<ProtocolLevel>,
    pub filter: Option<AbortFilter>,
}

impl ProtocolSpec {
    pub fn qubits(&self) -> usize {
        self.layout.qubits()
    }

    pub fn final_level(&self) -> &ProtocolLevel {
        self.levels.last().expect("protocol has levels")
    }

    /// Minimum duration: every level once.
    pub fn total_steps(&self) -> u32 {
        self.levels.iter().map(|l| l.steps).sum::<u32>() + self.filter.as_ref().map_or(0, |f| f.steps)
    }

    /// Same protocol measuring the X-type stabilizer instead of the Z-type
    /// one: each data qubit is conjugated by a Hadamard. GHZ couplings
    /// `CZ(anc, data)` become `CNOT(anc -> data)`; a data-controlled
    /// `CNOT(data -> anc)` becomes `CNOT(anc -> data)` with the ancilla's
    /// preparation and readout moved to the X basis.
    pub fn in_basis(&self, basis: Basis) -> Result<ProtocolSpec> {
        if basis == self.basis {
            return Ok(self.clone());
        }
        if self.basis != Basis::Z {
            return Err(Error::contract("basis change is defined from the Z-type definition"));
        }
        let data = self.layout.data;
        let is_data = |q: usize| data.contains(&q);
        let mut flipped = vec![false; self.qubits()];
        let mut gates: Vec<&mut Gate> = Vec::new();
        let mut out = self.clone();
        out.basis = basis;
        for level in &mut out.levels {
            for inst in &mut level.instances {
                gates.extend(inst.gates.iter_mut());
            }
        }
        if let Some(f) = &mut out.filter {
            gates.extend(f.instance.gates.iter_mut());
        }
        for g in gates.iter_mut() {
            let t = g.targets().to_vec();
            match g.kind {
                GateKind::Cz if is_data(t[1]) && !is_data(t[0]) => **g = Gate::cnot(t[0], t[1]),
                GateKind::Cz if is_data(t[0]) && !is_data(t[1]) => **g = Gate::cnot(t[1], t[0]),
                GateKind::Cnot if is_data(t[0]) && !is_data(t[1]) => {
                    flipped[t[1]] = true;
                    **g = Gate::cnot(t[1], t[0]);
                }
                GateKind::Cnot if is_data(t[1]) => {
                    return Err(Error::contract(format!("cannot rewrite data-targeted `{g}`")));
                }
                _ => {}
            }
        }
        for g in gates.iter_mut() {
            let t = g.targets().to_vec();
            if !t.iter().any(|&q| flipped[q]) {
                continue;
            }
            let kind = match g.kind {
                GateKind::PrepZ => GateKind::PrepX,
                GateKind::PrepX => GateKind::PrepZ,
                GateKind::MeasZ => GateKind::MeasX,
                GateKind::MeasX => GateKind::MeasZ,
                GateKind::Cnot if is_data(t[1]) => continue,
                _ => return Err(Error::contract(format!("cannot rewrite `{g}` on a basis-flipped ancilla"))),
            };
            **g = Gate::one(kind, t[0]);
        }
        Ok(out)
    }

    /// Checks every structural invariant; an empty list means valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let n = self.qubits();
        if self.levels.is_empty() {
            v.push("protocol has no levels".into());
            return v;
        }
        for (d, &q) in self.layout.data.iter().enumerate() {
            if q >= n {
                v.push(format!("data qubit {d} references undeclared qubit {q}"));
            }
        }
        let last = self.levels.len() - 1;
        for (pos, level) in self.levels.iter().enumerate() {
            let tag = format!("level {}", level.index);
            if level.index != pos + 1 {
                v.push(format!("{tag}: index out of sequence (expected {})", pos + 1));
            }
            if level.frl == 0 || level.frl > level.index {
                v.push(format!("{tag}: frl {} exceeds index", level.frl));
            }
            if level.instances.is_empty() {
                v.push(format!("{tag}: no instances"));
            }
            for inst in &level.instances {
                check_instance(&tag, inst, n, &mut v);
                let reports = inst.checks.iter().filter(|c| c.role == CheckRole::Report).count();
                if pos == last {
                    if inst.postselects() {
                        v.push(format!("{tag}: final level must not post-select"));
                    }
                    if reports != 1 {
                        v.push(format!("{tag}: final level must report exactly one parity"));
                    }
                } else if reports > 0 {
                    v.push(format!("{tag}: only the final level may report"));
                }
            }
            let counted = steps_of(&level.instances, &self.layout);
            if counted != Some(level.steps) && counted.is_some() {
                v.push(format!("{tag}: declares {} steps, gates take {}", level.steps, counted.unwrap()));
            }
        }
        if let Some(f) = &self.filter {
            check_instance("filter", &f.instance, n, &mut v);
            if f.after_gate > self.final_level().instances[0].gates.len() {
                v.push("filter: insertion point past the final level".into());
            }
            if let Some(&q) = f.abort_readout.iter().find(|&&q| q >= n) {
                v.push(format!("filter: abort readout references undeclared qubit {q}"));
            }
        }
        v
    }

    /// Serializes to the declarative protocol format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "protocol {}", self.name);
        let _ = writeln!(s, "kind {}", self.kind);
        let _ = writeln!(s, "basis {}", self.basis);
        let l = &self.layout;
        let _ = writeln!(s, "layout {} {}", l.cells, l.ancillas_per_cell);
        let _ = writeln!(s, "cells {}", join(&l.cell_of));
        let _ = writeln!(s, "data {}", join(&l.data));
        for level in &self.levels {
            let _ = write!(s, "level {} steps {} frl {}", level.index, level.steps, level.frl);
            if let Some(g) = level.parallel_group {
                let _ = write!(s, " parallel {g}");
            }
            let _ = writeln!(s, " name {}", level.name);
            for inst in &level.instances {
                write_instance(&mut s, inst);
            }
        }
        if let Some(f) = &self.filter {
            let _ = writeln!(s, "filter after {} steps {} abort {}", f.after_gate, f.steps, join(&f.abort_readout));
            write_instance(&mut s, &f.instance);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<ProtocolSpec> {
        parse_protocol(text)
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn write_instance(s: &mut String, inst: &LevelInstance) {
    s.push_str("instance\n");
    for g in &inst.gates {
        let _ = writeln!(s, "  {g}");
    }
    for c in &inst.checks {
        let qs = join(&c.measured);
        let _ = match &c.role {
            CheckRole::PostSelect => writeln!(s, "  check postselect {qs}"),
            CheckRole::Report => writeln!(s, "  check report {qs}"),
            CheckRole::Correct(p) => writeln!(s, "  check correct {p} {qs}"),
        };
    }
    s.push_str("end\n");
}

fn check_instance(tag: &str, inst: &LevelInstance, n: usize, v: &mut Vec<String>) {
    for g in &inst.gates {
        if let Some(q) = g.targets().iter().find(|&&q| q >= n) {
            v.push(format!("{tag}: gate `{g}` references undeclared qubit {q}"));
        }
    }
    for c in &inst.checks {
        if c.measured.is_empty() {
            v.push(format!("{tag}: empty parity check"));
        }
        for q in &c.measured {
            let measured = inst
                .gates
                .iter()
                .any(|g| matches!(g.kind, GateKind::MeasZ | GateKind::MeasX) && g.targets()[0] == *q);
            if *q >= n {
                v.push(format!("{tag}: check references undeclared qubit {q}"));
            } else if !measured {
                v.push(format!("{tag}: check uses qubit {q} which the instance never measures"));
            }
        }
        if let CheckRole::Correct(p) = &c.role {
            if p.len() != n {
                v.push(format!("{tag}: correction has width {} (register has {n})", p.len()));
            }
        }
    }
}

/// Time steps taken by the busiest cell across all instances, or `None`
/// if a gate touches an undeclared qubit.
pub fn steps_of(instances: &[LevelInstance], layout: &Layout) -> Option<u32> {
    let mut per_cell = vec![0u32; layout.cells.max(1)];
    for inst in instances {
        for g in &inst.gates {
            let mut cells: Vec<usize> = Vec::with_capacity(2);
            for &q in g.targets() {
                let c = *layout.cell_of.get(q)?;
                if !cells.contains(&c) {
                    cells.push(c);
                }
            }
            for c in cells {
                *per_cell.get_mut(c)? += 1;
            }
        }
    }
    per_cell.into_iter().max()
}

// ---------------------------------------------------------------------------
// Builders

/// Convenience for writing network circuits by (cell, tier).
struct Circuit<'a> {
    layout: &'a Layout,
    inst: LevelInstance,
    /// Tier used to purify fresh pairs on creation, if the cells have one.
    spare: Option<usize>,
}

impl<'a> Circuit<'a> {
    fn new(layout: &'a Layout) -> Self {
        let spare = (layout.ancillas_per_cell > 3).then_some(layout.ancillas_per_cell);
        Circuit { layout, inst: LevelInstance::default(), spare }
    }

    fn q(&self, cell: usize, tier: usize) -> usize {
        self.layout.slot(cell, tier)
    }

    fn bell(&mut self, a: usize, b: usize, tier: usize) -> &mut Self {
        let g = Gate::bell(self.q(a, tier), self.q(b, tier));
        self.inst.gates.push(g);
        self
    }

    /// Fresh pair that outlives the level. With a spare tier it is
    /// phase-checked against a second raw pair there.
    fn kept_bell(&mut self, a: usize, b: usize, tier: usize) -> &mut Self {
        self.bell(a, b, tier);
        if let Some(spare) = self.spare.filter(|&s| s != tier) {
            self.bell(a, b, spare).cnot(&[a, b], spare, tier).meas(&[a, b], spare, Basis::X).postselect(&[a, b], spare);
        }
        self
    }

    /// CNOT from `control` tier to `target` tier inside each listed cell.
    fn cnot(&mut self, cells: &[usize], control: usize, target: usize) -> &mut Self {
        for &c in cells {
            let g = Gate::cnot(self.q(c, control), self.q(c, target));
            self.inst.gates.push(g);
        }
        self
    }

    fn cz(&mut self, cells: &[usize], a: usize, b: usize) -> &mut Self {
        for &c in cells {
            let g = Gate::cz(self.q(c, a), self.q(c, b));
            self.inst.gates.push(g);
        }
        self
    }

    fn meas(&mut self, cells: &[usize], tier: usize, basis: Basis) -> &mut Self {
        let kind = match basis {
            Basis::Z => GateKind::MeasZ,
            Basis::X => GateKind::MeasX,
        };
        for &c in cells {
            let g = Gate::one(kind, self.q(c, tier));
            self.inst.gates.push(g);
        }
        self
    }

    fn postselect(&mut self, cells: &[usize], tier: usize) -> &mut Self {
        let measured = cells.iter().map(|&c| self.q(c, tier)).collect();
        self.inst.checks.push(ParityCheck { measured, role: CheckRole::PostSelect });
        self
    }

    fn finish(&mut self) -> LevelInstance {
        std::mem::take(&mut self.inst)
    }
}

const A: usize = 0;
const B: usize = 1;
const C: usize = 2;
const D: usize = 3;
const ALL_CELLS: [usize; 4] = [A, B, C, D];

/// Which error type a purification step screens the kept pair for.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Screen {
    /// Bit flips: kept pair controls, sacrificial pair measured in Z.
    BitFlip,
    /// Phase flips: sacrificial pair controls, measured in X.
    PhaseFlip,
}

/// Single selection of the pair on `kept` between cells `a`, `b` using a
/// fresh pair on `anc`. When `create_kept` the kept pair is made first.
fn single_selection(c: &mut Circuit, a: usize, b: usize, kept: usize, anc: usize, create_kept: bool, screen: Screen) {
    if create_kept {
        c.kept_bell(a, b, kept);
    }
    c.bell(a, b, anc);
    match screen {
        Screen::BitFlip => {
            c.cnot(&[a, b], kept, anc).meas(&[a, b], anc, Basis::Z);
        }
        Screen::PhaseFlip => {
            c.cnot(&[a, b], anc, kept).meas(&[a, b], anc, Basis::X);
        }
    }
    c.postselect(&[a, b], anc);
}

/// Double selection: a first sacrificial pair on `anc1` screens the kept
/// pair, a second on `anc2` screens the first for the errors it would
/// otherwise feed back. `fresh` lists which of kept and `anc1` are created
/// here rather than carried over from earlier levels.
fn double_selection(c: &mut Circuit, a: usize, b: usize, tiers: [usize; 3], fresh: [bool; 2], screen: Screen) {
    let [kept, anc1, anc2] = tiers;
    if fresh[0] {
        c.kept_bell(a, b, kept);
    }
    if fresh[1] {
        c.bell(a, b, anc1);
    }
    match screen {
        Screen::BitFlip => {
            c.cnot(&[a, b], kept, anc1);
            c.bell(a, b, anc2);
            c.cnot(&[a, b], anc2, anc1);
            c.meas(&[a, b], anc1, Basis::Z).meas(&[a, b], anc2, Basis::X);
        }
        Screen::PhaseFlip => {
            c.cnot(&[a, b], anc1, kept);
            c.bell(a, b, anc2);
            c.cnot(&[a, b], anc1, anc2);
            c.meas(&[a, b], anc1, Basis::X).meas(&[a, b], anc2, Basis::Z);
        }
    }
    c.postselect(&[a, b], anc1).postselect(&[a, b], anc2);
}

fn level(index: usize, name: &str, frl: usize, group: Option<u32>, instances: Vec<LevelInstance>, layout: &Layout) -> ProtocolLevel {
    let steps = steps_of(&instances, layout).expect("builder uses declared qubits");
    ProtocolLevel { index, name: name.to_string(), steps, instances, frl, parallel_group: group }
}

/// Per-pair instances of a purification step on two disjoint cell pairs.
fn paired(layout: &Layout, pairs: [(usize, usize); 2], mut body: impl FnMut(&mut Circuit, usize, usize)) -> Vec<LevelInstance> {
    pairs
        .iter()
        .map(|&(a, b)| {
            let mut c = Circuit::new(layout);
            body(&mut c, a, b);
            c.finish()
        })
        .collect()
}

/// Fuses two Bell pairs on tier 1 (A-B, C-D) through pairs on tier 2
/// (A-C, B-D) into a four-cell GHZ state on tier 1. With `screen`, fresh
/// pairs on tier 3 check the tier-2 pairs for phase errors before readout.
fn fuse_ghz(layout: &Layout, screen: bool) -> LevelInstance {
    let mut c = Circuit::new(layout);
    c.cnot(&ALL_CELLS, 1, 2);
    if screen {
        for (a, b) in AC_BD {
            c.bell(a, b, 3);
        }
        c.cnot(&ALL_CELLS, 3, 2);
    }
    c.meas(&ALL_CELLS, 2, Basis::Z);
    if screen {
        c.meas(&ALL_CELLS, 3, Basis::X);
    }
    let n = layout.qubits();
    let mut fix = PauliString::identity(n);
    fix.set(layout.slot(C, 1), crate::pauli::Pauli::X);
    fix.set(layout.slot(D, 1), crate::pauli::Pauli::X);
    c.inst.checks.push(ParityCheck { measured: vec![c.q(A, 2), c.q(C, 2)], role: CheckRole::Correct(fix) });
    c.postselect(&ALL_CELLS, 2);
    if screen {
        for (a, b) in AC_BD {
            c.postselect(&[a, b], 3);
        }
    }
    c.finish()
}

/// Checks the Z-parities of the GHZ on tier 1 against pairs on tier 2,
/// optionally screened by fresh pairs on tier 3.
fn check_ghz(layout: &Layout, pairs: [(usize, usize); 2], screen: bool) -> LevelInstance {
    let mut c = Circuit::new(layout);
    c.cnot(&ALL_CELLS, 1, 2);
    if screen {
        for (a, b) in pairs {
            c.bell(a, b, 3);
        }
        c.cnot(&ALL_CELLS, 3, 2);
    }
    c.meas(&ALL_CELLS, 2, Basis::Z);
    if screen {
        c.meas(&ALL_CELLS, 3, Basis::X);
    }
    for (a, b) in pairs {
        c.postselect(&[a, b], 2);
        if screen {
            c.postselect(&[a, b], 3);
        }
    }
    c.finish()
}

/// Couples the tier-1 GHZ to the data qubits and reads out in X.
fn measure_stabilizer(layout: &Layout) -> LevelInstance {
    let mut c = Circuit::new(layout);
    c.cz(&ALL_CELLS, 1, 0).meas(&ALL_CELLS, 1, Basis::X);
    let measured = ALL_CELLS.iter().map(|&cell| c.q(cell, 1)).collect();
    c.inst.checks.push(ParityCheck { measured, role: CheckRole::Report });
    c.finish()
}

const AB_CD: [(usize, usize); 2] = [(A, B), (C, D)];
const AC_BD: [(usize, usize); 2] = [(A, C), (B, D)];

/// Four-cell protocol with three ancillas per cell, nine levels.
pub fn expedient() -> ProtocolSpec {
    let l = Layout::network(4, 3);
    let levels = vec![
        level(1, "Round one Bell pair production", 1, Some(1), paired(&l, AB_CD, |c, a, b| {
            double_selection(c, a, b, [1, 2, 3], [true, true], Screen::BitFlip)
        }), &l),
        level(2, "Round two Bell pair production", 1, Some(1), paired(&l, AB_CD, |c, a, b| {
            double_selection(c, a, b, [1, 2, 3], [false, true], Screen::PhaseFlip)
        }), &l),
        level(3, "Round one single selection", 3, Some(2), paired(&l, AC_BD, |c, a, b| {
            single_selection(c, a, b, 2, 3, true, Screen::BitFlip)
        }), &l),
        level(4, "Round two single selection", 3, Some(2), paired(&l, AC_BD, |c, a, b| {
            single_selection(c, a, b, 2, 3, false, Screen::PhaseFlip)
        }), &l),
        level(5, "Make GHZ", 1, None, vec![fuse_ghz(&l, false)], &l),
        level(6, "Round one single selection", 6, Some(3), paired(&l, AC_BD, |c, a, b| {
            single_selection(c, a, b, 2, 3, true, Screen::BitFlip)
        }), &l),
        level(7, "Round two single selection", 7, Some(3), paired(&l, AC_BD, |c, a, b| {
            single_selection(c, a, b, 2, 3, false, Screen::PhaseFlip)
        }), &l),
        level(8, "Check GHZ", 1, None, vec![check_ghz(&l, AC_BD, false)], &l),
        level(9, "Measure stabilizer", 9, None, vec![measure_stabilizer(&l)], &l),
    ];
    ProtocolSpec {
        kind: ProtocolKind::Expedient,
        name: "EXPEDIENT".into(),
        basis: Basis::Z,
        layout: l,
        levels,
        filter: None,
    }
}

pub fn stringent() -> ProtocolSpec {
    let l = Layout::network(4, 3);
    let mut levels = stringent_levels(&l);
    levels.push(level(15, "Measure stabilizer", 15, None, vec![measure_stabilizer(&l)], &l));
    ProtocolSpec {
        kind: ProtocolKind::Stringent,
        name: "STRINGENT".into(),
        basis: Basis::Z,
        layout: l,
        levels,
        filter: None,
    }
}

fn stringent_levels(l: &Layout) -> Vec<ProtocolLevel> {
    // a fourth ancilla upgrades single selection to double selection
    let extra = l.ancillas_per_cell > 3;
    let sel = |i: usize, frl: usize, pairs, first: bool| {
        let group = if i < 11 { 1 } else { 2 };
        let scr = if first { Screen::BitFlip } else { Screen::PhaseFlip };
        let (name, instances) = match (first, extra) {
            (true, false) => ("Round one single selection", paired(l, pairs, |c, a, b| single_selection(c, a, b, 2, 3, true, scr))),
            (false, false) => ("Round two single selection", paired(l, pairs, |c, a, b| single_selection(c, a, b, 2, 3, false, scr))),
            (true, true) => ("Round one double selection", paired(l, pairs, |c, a, b| double_selection(c, a, b, [2, 3, 4], [true, true], scr))),
            (false, true) => ("Round two double selection", paired(l, pairs, |c, a, b| double_selection(c, a, b, [2, 3, 4], [false, true], scr))),
        };
        level(i, name, frl, Some(group), instances, l)
    };
    vec![
        level(1, "Bell pair production", 1, Some(1), paired(l, AB_CD, |c, a, b| {
            double_selection(c, a, b, [1, 2, 3], [true, true], Screen::BitFlip)
        }), l),
        level(2, "Bell pair check 1", 1, Some(1), paired(l, AB_CD, |c, a, b| {
            double_selection(c, a, b, [1, 2, 3], [false, true], Screen::PhaseFlip)
        }), l),
        sel(3, 3, AB_CD, true),
        sel(4, 3, AB_CD, false),
        level(5, "Bell pair check 2", 1, Some(1), paired(l, AB_CD, |c, a, b| {
            double_selection(c, a, b, [1, 2, 3], [false, false], Screen::BitFlip)
        }), l),
        sel(6, 6, AB_CD, true),
        sel(7, 6, AB_CD, false),
        level(8, "Bell pair check 3", 1, Some(1), paired(l, AB_CD, |c, a, b| {
            double_selection(c, a, b, [1, 2, 3], [false, false], Screen::PhaseFlip)
        }), l),
        sel(9, 9, AC_BD, true),
        sel(10, 9, AC_BD, false),
        level(11, "Make GHZ", 1, None, vec![fuse_ghz(l, true)], l),
        sel(12, 12, AC_BD, true),
        sel(13, 12, AC_BD, false),
        level(14, "Check GHZ", 1, None, vec![check_ghz(l, AC_BD, true)], l),
    ]
}

/// STRINGENT on four ancillas per cell, with a filter on the GHZ after it
/// is coupled to the data.
pub fn stringent_plus() -> ProtocolSpec {
    let l = Layout::network(4, 4);
    let mut levels = stringent_levels(&l);
    levels.push(level(15, "Filter pair production", 15, Some(3), paired(&l, AB_CD, |c, a, b| {
        double_selection(c, a, b, [2, 3, 4], [true, true], Screen::BitFlip)
    }), &l));
    levels.push(level(16, "Filter pair check", 15, Some(3), paired(&l, AB_CD, |c, a, b| {
        double_selection(c, a, b, [2, 3, 4], [false, true], Screen::PhaseFlip)
    }), &l));
    levels.push(level(17, "Measure stabilizer", 17, None, vec![measure_stabilizer(&l)], &l));
    let mut c = Circuit::new(&l);
    c.cnot(&ALL_CELLS, 1, 2).meas(&ALL_CELLS, 2, Basis::Z);
    for (a, b) in AB_CD {
        c.postselect(&[a, b], 2);
    }
    let instance = c.finish();
    let steps = steps_of(std::slice::from_ref(&instance), &l).expect("builder uses declared qubits");
    let filter = AbortFilter {
        after_gate: ALL_CELLS.len(),
        instance,
        steps,
        abort_readout: ALL_CELLS.iter().map(|&cell| l.slot(cell, 1)).collect(),
    };
    ProtocolSpec {
        kind: ProtocolKind::StringentPlus,
        name: "STRINGENT_PLUS".into(),
        basis: Basis::Z,
        layout: l,
        levels,
        filter: Some(filter),
    }
}

/// Single shared ancilla, four CNOTs from the data qubits, one readout.
pub fn monolithic() -> ProtocolSpec {
    let cell_of = vec![0; 5];
    let layout = Layout { cells: 1, ancillas_per_cell: 1, cell_of, data: [0, 1, 2, 3] };
    let anc = 4;
    let mut gates = vec![Gate::one(GateKind::PrepZ, anc)];
    gates.extend((0..4).map(|d| Gate::cnot(d, anc)));
    gates.push(Gate::one(GateKind::MeasZ, anc));
    let inst = LevelInstance { gates, checks: vec![ParityCheck { measured: vec![anc], role: CheckRole::Report }] };
    let levels = vec![level(1, "Measure stabilizer", 1, None, vec![inst], &layout)];
    ProtocolSpec {
        kind: ProtocolKind::Monolithic,
        name: "MONOLITHIC".into(),
        basis: Basis::Z,
        layout,
        levels,
        filter: None,
    }
}

// ---------------------------------------------------------------------------
// Parser

fn parse_protocol(text: &str) -> Result<ProtocolSpec> {
    let mut name = None;
    let mut kind = ProtocolKind::Custom;
    let mut basis = None;
    let mut dims = None;
    let mut cell_of: Option<Vec<usize>> = None;
    let mut data: Option<[usize; 4]> = None;
    let mut levels: Vec<ProtocolLevel> = Vec::new();
    let mut filter: Option<AbortFilter> = None;
    let mut current: Option<LevelInstance> = None;
    // where a finished instance goes: a level or the filter
    let mut into_filter = false;

    let num = |tok: Option<&str>, what: &str, line: usize| -> Result<usize> {
        tok.ok_or_else(|| Error::parse(format!("line {line}: missing {what}")))?
            .parse::<usize>()
            .map_err(|e| Error::parse(format!("line {line}: bad {what}: {e}")))
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let head = toks.next().unwrap();
        if let Some(inst) = current.as_mut() {
            match head {
                "end" => {
                    let inst = current.take().unwrap();
                    if into_filter {
                        filter.as_mut().unwrap().instance = inst;
                    } else {
                        levels
                            .last_mut()
                            .ok_or_else(|| Error::parse(format!("line {line}: instance outside a level")))?
                            .instances
                            .push(inst);
                    }
                }
                "check" => {
                    let role_tok = toks.next().ok_or_else(|| Error::parse(format!("line {line}: missing check role")))?;
                    let role = match role_tok {
                        "postselect" => CheckRole::PostSelect,
                        "report" => CheckRole::Report,
                        "correct" => {
                            let p = toks.next().ok_or_else(|| Error::parse(format!("line {line}: missing correction")))?;
                            CheckRole::Correct(p.parse()?)
                        }
                        other => return Err(Error::parse(format!("line {line}: unknown check role {other:?}"))),
                    };
                    let measured = toks
                        .map(|t| t.parse::<usize>().map_err(|e| Error::parse(format!("line {line}: {e}"))))
                        .collect::<Result<Vec<_>>>()?;
                    inst.checks.push(ParityCheck { measured, role });
                }
                op => {
                    let kind = GateKind::from_mnemonic(op)
                        .ok_or_else(|| Error::parse(format!("line {line}: unknown operation {op:?}")))?;
                    let targets = toks
                        .map(|t| t.parse::<usize>().map_err(|e| Error::parse(format!("line {line}: {e}"))))
                        .collect::<Result<Vec<_>>>()?;
                    inst.gates.push(Gate::new(kind, &targets).map_err(|e| Error::parse(format!("line {line}: {e}")))?);
                }
            }
            continue;
        }
        match head {
            "protocol" => name = Some(toks.collect::<Vec<_>>().join(" ")),
            "kind" => kind = toks.next().unwrap_or("").parse()?,
            "basis" => basis = Some(toks.next().unwrap_or("").parse::<Basis>()?),
            "layout" => dims = Some((num(toks.next(), "cells", line)?, num(toks.next(), "ancillas", line)?)),
            "cells" => {
                cell_of = Some(toks.map(|t| t.parse::<usize>().map_err(|e| Error::parse(format!("line {line}: {e}")))).collect::<Result<_>>()?)
            }
            "data" => {
                let v: Vec<usize> = toks
                    .map(|t| t.parse::<usize>().map_err(|e| Error::parse(format!("line {line}: {e}"))))
                    .collect::<Result<_>>()?;
                data = Some(v.try_into().map_err(|_| Error::parse(format!("line {line}: need exactly 4 data qubits")))?);
            }
            "level" => {
                let index = num(toks.next(), "level index", line)?;
                let mut steps = None;
                let mut frl = None;
                let mut group = None;
                let mut lname = String::new();
                while let Some(key) = toks.next() {
                    match key {
                        "steps" => steps = Some(num(toks.next(), "steps", line)? as u32),
                        "frl" => frl = Some(num(toks.next(), "frl", line)?),
                        "parallel" => group = Some(num(toks.next(), "parallel group", line)? as u32),
                        "name" => {
                            lname = toks.by_ref().collect::<Vec<_>>().join(" ");
                        }
                        other => return Err(Error::parse(format!("line {line}: unknown level key {other:?}"))),
                    }
                }
                levels.push(ProtocolLevel {
                    index,
                    name: lname,
                    steps: steps.ok_or_else(|| Error::parse(format!("line {line}: level without steps")))?,
                    instances: Vec::new(),
                    frl: frl.ok_or_else(|| Error::parse(format!("line {line}: level without frl")))?,
                    parallel_group: group,
                });
                into_filter = false;
            }
            "filter" => {
                let mut after = None;
                let mut steps = None;
                let mut abort = Vec::new();
                while let Some(key) = toks.next() {
                    match key {
                        "after" => after = Some(num(toks.next(), "filter position", line)?),
                        "steps" => steps = Some(num(toks.next(), "steps", line)? as u32),
                        "abort" => {
                            abort = toks
                                .by_ref()
                                .map(|t| t.parse::<usize>().map_err(|e| Error::parse(format!("line {line}: {e}"))))
                                .collect::<Result<_>>()?
                        }
                        other => return Err(Error::parse(format!("line {line}: unknown filter key {other:?}"))),
                    }
                }
                filter = Some(AbortFilter {
                    after_gate: after.ok_or_else(|| Error::parse(format!("line {line}: filter without position")))?,
                    instance: LevelInstance::default(),
                    steps: steps.unwrap_or(0),
                    abort_readout: abort,
                });
                into_filter = true;
            }
            "instance" => current = Some(LevelInstance::default()),
            other => return Err(Error::parse(format!("line {line}: unexpected {other:?}"))),
        }
    }
    if current.is_some() {
        return Err(Error::parse("unterminated instance block"));
    }
    let (cells, ancillas) = dims.ok_or_else(|| Error::parse("missing layout line"))?;
    let cell_of = cell_of.ok_or_else(|| Error::parse("missing cells line"))?;
    let layout = Layout {
        cells,
        ancillas_per_cell: ancillas,
        cell_of,
        data: data.ok_or_else(|| Error::parse("missing data line"))?,
    };
    let spec = ProtocolSpec {
        kind,
        name: name.ok_or_else(|| Error::parse("missing protocol line"))?,
        basis: basis.ok_or_else(|| Error::parse("missing basis line"))?,
        layout,
        levels,
        filter,
    };
    let violations = spec.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidProtocol(violations.join("; ")));
    }
    Ok(spec)
}
