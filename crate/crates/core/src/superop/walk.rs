//! Error-frame walk through a protocol.
//!
//! The walk carries a [`SparseErrorDist`] over the whole register through
//! every noisy operation and post-selection. To keep the support small it
//! merges frames that differ by a stabilizer of the ideal ancilla state.
//! Such frames act identically on the state, but a merge may still move a
//! data error `E` to `E * S'` at readout. A noiseless planning pass finds,
//! for every step, the stabilizers whose descendants reach the data at
//! most as the measured stabilizer `S`, and only those are used for
//! merging. Up to the equivalence `E ~ E * S` the result is identical to
//! the unmerged walk.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::LevelSuccess;
use crate::error::{Error, Result};
use crate::noise::{embed_channel, flip_channel, gate_channel, measurement_flip_prob, raw_bell_channel_with, NoiseParams};
use crate::pauli::{conjugate_through, Gate, GateKind, Pauli, PauliString, SparseErrorDist};
use crate::protocols::{Basis, CheckRole, LevelInstance, ProtocolSpec};

/// Parity observable of the outcomes of `measured`, each in the basis of
/// its last measurement within `inst`.
pub(super) fn observable(inst: &LevelInstance, measured: &[usize], n: usize) -> Result<PauliString> {
    let mut obs = PauliString::identity(n);
    for &q in measured {
        let last = inst
            .gates
            .iter()
            .rev()
            .find(|g| matches!(g.kind, GateKind::MeasZ | GateKind::MeasX) && g.targets()[0] == q)
            .ok_or_else(|| Error::contract(format!("qubit {q} is checked but never measured")))?;
        let letter = if last.kind == GateKind::MeasZ { Pauli::Z } else { Pauli::X };
        obs.set(q, letter);
    }
    Ok(obs)
}

pub(super) fn measured_mask(inst: &LevelInstance) -> u64 {
    inst.gates
        .iter()
        .filter(|g| matches!(g.kind, GateKind::MeasZ | GateKind::MeasX))
        .fold(0, |m, g| m | 1u64 << g.targets()[0])
}

// Pauli strings as symplectic vectors: x bits high, z bits low.

fn key(p: &PauliString) -> u128 {
    (p.x_mask() as u128) << 64 | p.z_mask() as u128
}

fn unkey(n: usize, v: u128) -> PauliString {
    PauliString::from_masks(n, (v >> 64) as u64, v as u64).expect("width within register")
}

fn top_bit(v: u128) -> u128 {
    1u128 << (127 - v.leading_zeros())
}

fn columns(mask: u64) -> u128 {
    (mask as u128) << 64 | mask as u128
}

fn commute(a: u128, b: u128) -> bool {
    let lo = u64::MAX as u128;
    let (ax, az, bx, bz) = (a >> 64, a & lo, b >> 64, b & lo);
    ((ax & bz) ^ (az & bx)).count_ones() % 2 == 0
}

/// Keeps the subgroup of elements acting trivially on `cols`.
fn eliminate(rows: &mut Vec<u128>, cols: u128) {
    let mut c = cols;
    while c != 0 {
        let bit = c & c.wrapping_neg();
        c ^= bit;
        if let Some(i) = rows.iter().position(|r| r & bit != 0) {
            let pivot = rows.swap_remove(i);
            for r in rows.iter_mut() {
                if *r & bit != 0 {
                    *r ^= pivot;
                }
            }
        }
    }
    rows.retain(|&r| r != 0);
}

/// Reduced row echelon basis of the span of `rows`.
fn echelon(rows: &[u128]) -> Vec<u128> {
    let mut basis: Vec<u128> = Vec::new();
    for &r in rows {
        let mut r = r;
        for b in &basis {
            if r & top_bit(*b) != 0 {
                r ^= b;
            }
        }
        if r == 0 {
            continue;
        }
        let t = top_bit(r);
        for b in basis.iter_mut() {
            if *b & t != 0 {
                *b ^= r;
            }
        }
        basis.push(r);
    }
    basis
}

fn reduce(basis: &[u128], v: u128) -> u128 {
    basis.iter().fold(v, |v, &b| if v & top_bit(b) != 0 { v ^ b } else { v })
}

/// Unsigned stabilizer group of the ideal (noiseless) ancilla state.
#[derive(Debug, Clone, Default)]
struct IdealGroup {
    rows: Vec<u128>,
    /// Echelon basis of the elements without data support.
    data_free: Vec<u128>,
}

impl IdealGroup {
    fn refresh(&mut self, data: u64) {
        self.rows = echelon(&self.rows);
        let mut free = self.rows.clone();
        eliminate(&mut free, columns(data));
        self.data_free = echelon(&free);
    }

    fn conjugate(&mut self, gate: &Gate, n: usize) -> Result<()> {
        for r in self.rows.iter_mut() {
            *r = key(&conjugate_through(gate, &unkey(n, *r))?);
        }
        Ok(())
    }

    /// Ideal measurement of the single-qubit observable `m`.
    fn measure(&mut self, m: u128) {
        if let Some(i) = self.rows.iter().position(|&r| !commute(r, m)) {
            let g = self.rows.swap_remove(i);
            for r in self.rows.iter_mut() {
                if !commute(*r, m) {
                    *r ^= g;
                }
            }
        }
        self.rows.push(m);
    }
}

/// Stabilizer recorded by the planning pass, followed to the end.
#[derive(Debug, Clone)]
struct Virtual {
    origin: u64,
    row: u128,
    image: u128,
    /// Post-selections whose outcome the descendant has flipped.
    flips: Vec<u32>,
}

/// Merging basis per step id.
pub(super) type Plan = BTreeMap<u64, Vec<u128>>;

#[derive(Debug, Clone)]
enum Mode {
    Plan { virtuals: Vec<Virtual>, events: u32 },
    Run(Arc<Plan>),
}

#[derive(Debug, Clone)]
pub(super) struct Walk {
    noise: NoiseParams,
    eps: f64,
    pub(super) dist: SparseErrorDist,
    group: IdealGroup,
    data: u64,
    branch: u64,
    step: u64,
    mode: Mode,
}

impl Walk {
    fn planner(spec: &ProtocolSpec) -> Walk {
        Walk::with_mode(spec, NoiseParams::noiseless(), 0.0, SparseErrorDist::identity(spec.qubits()), Mode::Plan { virtuals: Vec::new(), events: 0 })
    }

    pub(super) fn runner(spec: &ProtocolSpec, noise: NoiseParams, eps: f64, start: SparseErrorDist) -> Result<Walk> {
        let plan = plan(spec)?;
        Ok(Walk::with_mode(spec, noise, eps, start, Mode::Run(plan)))
    }

    fn with_mode(spec: &ProtocolSpec, noise: NoiseParams, eps: f64, dist: SparseErrorDist, mode: Mode) -> Walk {
        let data = spec.layout.data.iter().fold(0, |m, &q| m | 1u64 << q);
        Walk { noise, eps, dist, group: IdealGroup::default(), data, branch: 0, step: 0, mode }
    }

    fn n(&self) -> usize {
        self.dist.qubits()
    }

    fn planning(&self) -> bool {
        matches!(self.mode, Mode::Plan { .. })
    }

    fn map_virtuals(&mut self, f: impl Fn(u128) -> Result<u128>) -> Result<()> {
        if let Mode::Plan { virtuals, .. } = &mut self.mode {
            for v in virtuals.iter_mut() {
                v.image = f(v.image)?;
            }
        }
        Ok(())
    }

    /// Closes one step: refreshes the group, then records (planning) or
    /// merges and truncates (running).
    fn tick(&mut self) {
        self.group.refresh(self.data);
        let id = self.branch << 32 | self.step;
        self.step += 1;
        match &mut self.mode {
            Mode::Plan { virtuals, .. } => {
                virtuals.extend(
                    self.group.data_free.iter().map(|&row| Virtual { origin: id, row, image: row, flips: Vec::new() }),
                );
            }
            Mode::Run(_) => self.dist = self.dist.truncate(self.eps),
        }
    }

    /// Merging basis of the step about to close.
    fn merge_basis(&self) -> &[u128] {
        match &self.mode {
            Mode::Run(plan) => plan.get(&(self.branch << 32 | self.step)).map_or(&[], |b| b.as_slice()),
            Mode::Plan { .. } => &[],
        }
    }

    /// Runs the frames through `pre`, then `channel`, then merges.
    fn evolve(&mut self, pre: impl FnMut(&PauliString) -> PauliString, channel: &[(PauliString, f64)]) -> Result<()> {
        let n = self.n();
        let basis = self.merge_basis();
        self.dist = self.dist.evolve(pre, channel, |p| unkey(n, reduce(basis, key(p))))?;
        Ok(())
    }

    pub(super) fn run_gate(&mut self, gate: &Gate) -> Result<()> {
        let n = self.n();
        let t = gate.targets();
        let single = |q: usize, l: Pauli| key(&PauliString::single(n, q, l));
        let mut cleared = 0u64;
        match gate.kind {
            k if k.is_unitary() => self.group.conjugate(gate, n)?,
            GateKind::PrepZ | GateKind::PrepX => {
                let basis = if gate.kind == GateKind::PrepZ { Pauli::Z } else { Pauli::X };
                cleared = 1 << t[0];
                eliminate(&mut self.group.rows, columns(cleared));
                self.group.rows.push(single(t[0], basis));
            }
            GateKind::MeasZ => self.group.measure(single(t[0], Pauli::Z)),
            GateKind::MeasX => self.group.measure(single(t[0], Pauli::X)),
            GateKind::BellRaw => {
                cleared = 1 << t[0] | 1 << t[1];
                eliminate(&mut self.group.rows, columns(cleared));
                self.group.rows.push(single(t[0], Pauli::X) ^ single(t[1], Pauli::X));
                self.group.rows.push(single(t[0], Pauli::Z) ^ single(t[1], Pauli::Z));
            }
            other => return Err(Error::contract(format!("no noise model for {}", other.mnemonic()))),
        }
        if self.planning() {
            if gate.kind.is_unitary() {
                self.map_virtuals(|v| Ok(key(&conjugate_through(gate, &unkey(n, v))?)))?;
            } else {
                self.map_virtuals(|v| Ok(v & !columns(cleared)))?;
            }
        } else {
            let flip = |letter| embed_channel(&flip_channel(measurement_flip_prob(self.noise.p_m), letter), n, &t[..1]);
            let clear = |p: &PauliString| p.cleared(cleared);
            match gate.kind {
                k if k.is_unitary() => {
                    let noise = embed_channel(&gate_channel(self.noise.p_g, k.arity())?, n, t);
                    self.evolve(|p| conjugate_through(gate, p).expect("gate fits the register"), &noise)?;
                }
                GateKind::PrepZ => self.evolve(clear, &flip(Pauli::X))?,
                GateKind::PrepX => self.evolve(clear, &flip(Pauli::Z))?,
                GateKind::MeasZ => self.evolve(|p| *p, &flip(Pauli::X))?,
                GateKind::MeasX => self.evolve(|p| *p, &flip(Pauli::Z))?,
                _ => {
                    let bell = embed_channel(&raw_bell_channel_with(self.noise.p_n, self.noise.bell), n, t);
                    self.evolve(clear, &bell)?;
                }
            }
        }
        self.tick();
        Ok(())
    }

    pub(super) fn run_gates(&mut self, gates: &[Gate]) -> Result<()> {
        gates.iter().try_for_each(|g| self.run_gate(g))
    }

    /// Applies `fix` to every frame that flips `obs`.
    pub(super) fn feed_forward(&mut self, obs: &PauliString, fix: &PauliString) -> Result<()> {
        if self.planning() {
            let (o, f) = (key(obs), key(fix));
            self.map_virtuals(|v| Ok(if commute(v, o) { v } else { v ^ f }))
        } else {
            self.dist = self.dist.feed_forward(obs, fix);
            Ok(())
        }
    }

    /// Marks the virtuals that would flip any of `observables` as one
    /// new post-selection event.
    fn mark(&mut self, observables: &[PauliString]) {
        if let Mode::Plan { virtuals, events } = &mut self.mode {
            let keys: Vec<u128> = observables.iter().map(key).collect();
            for v in virtuals.iter_mut() {
                for (i, &o) in keys.iter().enumerate() {
                    if !commute(v.image, o) {
                        v.flips.push(*events + i as u32);
                    }
                }
            }
            *events += keys.len() as u32;
        }
    }

    fn postselect(&mut self, obs: &PauliString) -> Result<f64> {
        if self.planning() {
            self.mark(std::slice::from_ref(obs));
            return Ok(1.0);
        }
        let (kept, p) = self.dist.condition(obs, 0.0, false)?;
        self.dist = kept;
        Ok(p)
    }

    /// Forgets measured qubits, which are free for reuse afterwards.
    pub(super) fn discard(&mut self, mask: u64) -> Result<()> {
        eliminate(&mut self.group.rows, columns(mask));
        if self.planning() {
            self.map_virtuals(|v| Ok(v & !columns(mask)))?;
        } else {
            self.evolve(|p| p.cleared(mask), &[(PauliString::identity(self.n()), 1.0)])?;
        }
        self.tick();
        Ok(())
    }

    /// Splits into the branch whose frames satisfy `keep` and the rest,
    /// each with its probability. Planning follows both branches and treats
    /// `observables` as post-selected.
    pub(super) fn split(
        &mut self,
        observables: &[PauliString],
        keep: impl FnMut(&PauliString) -> bool,
    ) -> ((Walk, f64), (Walk, f64)) {
        if self.planning() {
            self.mark(observables);
            return ((self.clone(), 1.0), (self.clone(), 1.0));
        }
        let ((yes, p_yes), (no, p_no)) = self.dist.partition(keep);
        ((Walk { dist: yes, ..self.clone() }, p_yes), (Walk { dist: no, ..self.clone() }, p_no))
    }

    pub(super) fn enter_branch(&mut self, branch: u64) {
        self.branch = branch;
        self.step = 0;
        if let Mode::Plan { events, .. } = &mut self.mode {
            *events = (branch as u32) << 24;
        }
    }

    /// Runs one instance and returns its post-selection success probability.
    fn run_instance(&mut self, inst: &LevelInstance) -> Result<f64> {
        self.run_gates(&inst.gates)?;
        let n = self.n();
        let mut success = 1.0;
        for check in &inst.checks {
            let obs = observable(inst, &check.measured, n)?;
            match &check.role {
                CheckRole::PostSelect => success *= self.postselect(&obs)?,
                CheckRole::Correct(fix) => self.feed_forward(&obs, fix)?,
                CheckRole::Report => return Err(Error::contract("only the final level reports")),
            }
        }
        self.discard(measured_mask(inst))?;
        Ok(success)
    }

    /// Every level except the final one.
    pub(super) fn run_body(&mut self, spec: &ProtocolSpec) -> Result<Vec<LevelSuccess>> {
        let body = &spec.levels[..spec.levels.len() - 1];
        let mut out = Vec::with_capacity(body.len());
        for level in body {
            let mut per_instance = Vec::new();
            for inst in &level.instances {
                let p = self.run_instance(inst)?;
                if inst.postselects() {
                    per_instance.push(p);
                }
            }
            out.push(LevelSuccess { index: level.index, name: level.name.clone(), per_instance });
        }
        Ok(out)
    }
}

/// Where a traversal of the protocol stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum EndKind {
    /// Final readout of a protocol without filter.
    Final,
    /// Filter passed, stabilizer read out.
    Pass,
    /// Filter failed, GHZ read out in Z and its outcomes fed forward.
    Abort,
}

pub(super) struct End {
    pub kind: EndKind,
    pub share: f64,
    pub walk: Walk,
}

pub(super) struct Traversal {
    pub success: Vec<LevelSuccess>,
    pub ends: Vec<End>,
}

/// Walks the whole protocol, forking at the filter if there is one.
pub(super) fn traverse(spec: &ProtocolSpec, mut walk: Walk) -> Result<Traversal> {
    let n = spec.qubits();
    let success = walk.run_body(spec)?;
    let final_inst = &spec.final_level().instances[0];
    let Some(filter) = &spec.filter else {
        walk.run_gates(&final_inst.gates)?;
        walk.mark(&[report_observable(spec)?]);
        return Ok(Traversal { success, ends: vec![End { kind: EndKind::Final, share: 1.0, walk }] });
    };
    let (coupling, rest) = final_inst.gates.split_at(filter.after_gate);
    walk.run_gates(coupling)?;
    walk.run_gates(&filter.instance.gates)?;
    let checks = filter
        .instance
        .checks
        .iter()
        .map(|c| observable(&filter.instance, &c.measured, n))
        .collect::<Result<Vec<_>>>()?;
    let used = measured_mask(&filter.instance);
    let ((mut pass, p_pass), (mut abort, p_abort)) = walk.split(&checks, |p| checks.iter().all(|o| !p.anticommutes_with(o)));

    pass.enter_branch(1);
    pass.discard(used)?;
    pass.run_gates(rest)?;
    pass.mark(&[report_observable(spec)?]);

    abort.enter_branch(2);
    abort.discard(used)?;
    let letter = super::stabilizer_of(spec.basis).get(0);
    for &q in &filter.abort_readout {
        abort.run_gate(&Gate::one(GateKind::MeasZ, q))?;
    }
    // each GHZ outcome drives a stabilizer-letter correction on its cell's data qubit
    for &q in &filter.abort_readout {
        let cell = spec.layout.cell_of[q];
        let d = spec
            .layout
            .data
            .iter()
            .copied()
            .find(|&d| spec.layout.cell_of[d] == cell)
            .ok_or_else(|| Error::contract(format!("abort readout qubit {q} has no data qubit in its cell")))?;
        abort.feed_forward(&PauliString::single(n, q, Pauli::Z), &PauliString::single(n, d, letter))?;
    }
    abort.mark(&abort_parities(&filter.abort_readout, n));
    Ok(Traversal {
        success,
        ends: vec![
            End { kind: EndKind::Pass, share: p_pass, walk: pass },
            End { kind: EndKind::Abort, share: p_abort, walk: abort },
        ],
    })
}

/// Parity observable of the reported measurements of the final level.
pub(super) fn report_observable(spec: &ProtocolSpec) -> Result<PauliString> {
    let inst = &spec.final_level().instances[0];
    let check = inst
        .checks
        .iter()
        .find(|c| c.role == CheckRole::Report)
        .ok_or_else(|| Error::contract("final level reports no parity"))?;
    observable(inst, &check.measured, spec.qubits())
}

/// `Z Z` on consecutive qubits of the aborted GHZ readout.
pub(super) fn abort_parities(readout: &[usize], n: usize) -> Vec<PauliString> {
    readout
        .windows(2)
        .map(|pair| {
            let mut z = PauliString::single(n, pair[0], Pauli::Z);
            z.set(pair[1], Pauli::Z);
            z
        })
        .collect()
}

/// Data part of a symplectic vector modulo the measured stabilizer, as
/// bit indices. Merging by an element whose data part is the stabilizer
/// only turns a data error `E` into the equivalent `E * S`.
fn data_footprint(v: u128, spec: &ProtocolSpec) -> Vec<u64> {
    let (x, z) = ((v >> 64) as u64, v as u64);
    let bit = |m: u64, q: usize| m >> q & 1 == 1;
    let d = spec.layout.data;
    let mut out = Vec::new();
    for (k, &q) in d.iter().enumerate() {
        let (mut xb, mut zb) = (bit(x, q), bit(z, q));
        // quotient by S: measure every letter relative to the first qubit's
        match spec.basis {
            Basis::Z => zb ^= bit(z, d[0]),
            Basis::X => xb ^= bit(x, d[0]),
        }
        if xb {
            out.push(2 * k as u64);
        }
        if zb {
            out.push(2 * k as u64 + 1);
        }
    }
    out
}

/// Footprint bit of an outcome at end `end`.
fn tag(end: usize, bit: u64) -> u64 {
    (end as u64) << 40 | bit
}

const DATA_BIT: u64 = 1 << 39;

/// Noiseless pass computing, per step, the stabilizers safe to merge by:
/// those whose descendant at every end of the protocol is trivial on the
/// data qubits and flips no post-selected or read outcome.
fn plan(spec: &ProtocolSpec) -> Result<Arc<Plan>> {
    let traversal = traverse(spec, Walk::planner(spec))?;
    let mut footprint: BTreeMap<(u64, u128), Vec<u64>> = BTreeMap::new();
    for (i, end) in traversal.ends.iter().enumerate() {
        let Mode::Plan { virtuals, .. } = &end.walk.mode else { unreachable!("planner walks stay in plan mode") };
        for v in virtuals {
            let bits = footprint.entry((v.origin, v.row)).or_default();
            bits.extend(data_footprint(v.image, spec).into_iter().map(|b| tag(i, DATA_BIT | b)));
            bits.extend(v.flips.iter().map(|&e| tag(i, e as u64)));
        }
    }
    let mut by_step: BTreeMap<u64, Vec<(u128, BTreeSet<u64>)>> = BTreeMap::new();
    for ((origin, row), bits) in footprint {
        // a repeated flip cancels
        let mut set = BTreeSet::new();
        for b in bits {
            if !set.remove(&b) {
                set.insert(b);
            }
        }
        by_step.entry(origin).or_default().push((row, set));
    }
    let plan = by_step.into_iter().map(|(id, rows)| (id, echelon(&kernel(rows)))).collect();
    Ok(Arc::new(plan))
}

/// Span of the row combinations whose footprints cancel.
fn kernel(mut rows: Vec<(u128, BTreeSet<u64>)>) -> Vec<u128> {
    while let Some(i) = rows.iter().position(|(_, f)| !f.is_empty()) {
        let (row, f) = rows.swap_remove(i);
        let bit = *f.iter().next().expect("non-empty");
        for r in rows.iter_mut() {
            if r.1.contains(&bit) {
                r.0 ^= row;
                r.1 = &r.1 ^ &f;
            }
        }
    }
    rows.into_iter().map(|(r, _)| r).collect()
}
