//! Surface-code memory experiment driven by extracted superoperators.
//!
//! Every stabilizer of the code is measured once per round by drawing one
//! `(error, projection)` entry from its superoperator. A final perfect round
//! closes the history. Detection events are decoded by minimum-weight
//! perfect matching on the spacetime graph of each check type.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matching::{mwpm_decode, MatchingGraph};
use crate::protocols::{AbortFilterOutcome, Basis};
use crate::rng::{stream, SampleRng};
use crate::superop::{twirl, Extraction, Projection, StabilizerSuperoperator, TwirlGroup};

/// Weight given to an edge whose mechanism has zero probability.
pub const MAX_EDGE_WEIGHT: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Geometry {
    #[default]
    Toric,
    Planar,
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Geometry::Toric => "toric",
            Geometry::Planar => "planar",
        })
    }
}

impl FromStr for Geometry {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "toric" => Ok(Geometry::Toric),
            "planar" => Ok(Geometry::Planar),
            other => Err(Error::parse(format!("unknown geometry {other:?}"))),
        }
    }
}

/// The two stabilizer types. `Z` checks detect X errors and vice versa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CheckKind {
    Z,
    X,
}

impl CheckKind {
    pub const BOTH: [CheckKind; 2] = [CheckKind::Z, CheckKind::X];
}

/// Code layout: data qubits, checks and logical operators.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeLattice {
    pub distance: usize,
    /// Noisy measurement rounds before the final perfect round.
    pub rounds: usize,
    pub geometry: Geometry,
    qubits: usize,
    /// Support of each check, in cell order A, B, C, D; boundary checks have a hole.
    checks: [Vec<[Option<usize>; 4]>; 2],
    /// For each qubit, the one or two checks of each kind that contain it.
    touching: [Vec<Vec<usize>>; 2],
    /// Supports whose parity with the residual error reveals a logical flip,
    /// per kind of residual the kind's checks detect.
    logical_cuts: [Vec<Vec<usize>>; 2],
}

fn idx(kind: CheckKind) -> usize {
    match kind {
        CheckKind::Z => 0,
        CheckKind::X => 1,
    }
}

impl CodeLattice {
    pub fn new(distance: usize, rounds: usize, geometry: Geometry) -> Result<Self> {
        if distance < 2 {
            return Err(Error::contract(format!("distance {distance} below 2")));
        }
        if rounds == 0 {
            return Err(Error::contract("at least one round is required"));
        }
        let d = distance;
        let (qubits, z_checks, x_checks, z_cuts, x_cuts) = match geometry {
            Geometry::Toric => {
                // h(i, j) joins vertices (i, j), (i, j+1); v(i, j) joins (i, j), (i+1, j)
                let h = |i: usize, j: usize| (i % d) * d + (j % d);
                let v = |i: usize, j: usize| d * d + (i % d) * d + (j % d);
                let mut plaquettes = Vec::new();
                let mut stars = Vec::new();
                for i in 0..d {
                    for j in 0..d {
                        plaquettes.push([Some(h(i, j)), Some(v(i, j + 1)), Some(h(i + 1, j)), Some(v(i, j))]);
                        stars.push([Some(h(i, j)), Some(v(i, j)), Some(h(i, j + d - 1)), Some(v(i + d - 1, j))]);
                    }
                }
                let z_cuts = vec![(0..d).map(|j| h(0, j)).collect(), (0..d).map(|i| v(i, 0)).collect()];
                let x_cuts = vec![(0..d).map(|i| h(i, 0)).collect(), (0..d).map(|j| v(0, j)).collect()];
                (2 * d * d, plaquettes, stars, z_cuts, x_cuts)
            }
            Geometry::Planar => {
                // vertices (i, j) for i < d, j < d-1; h(i, j) for j <= d-1 dangles at the
                // left and right ends; v(i, j) joins (i, j), (i+1, j)
                let h = |i: usize, j: usize| i * d + j;
                let v = |i: usize, j: usize| d * d + i * (d - 1) + j;
                let mut stars = Vec::new();
                for i in 0..d {
                    for j in 0..d - 1 {
                        let up = (i > 0).then(|| v(i - 1, j));
                        let down = (i + 1 < d).then(|| v(i, j));
                        stars.push([Some(h(i, j + 1)), down, Some(h(i, j)), up]);
                    }
                }
                let mut plaquettes = Vec::new();
                for i in 0..d - 1 {
                    for j in 0..d {
                        let left = (j > 0).then(|| v(i, j - 1));
                        let right = (j + 1 < d).then(|| v(i, j));
                        plaquettes.push([Some(h(i, j)), right, Some(h(i + 1, j)), left]);
                    }
                }
                let z_cuts = vec![(0..d).map(|j| h(0, j)).collect()];
                let x_cuts = vec![(0..d).map(|i| h(i, 0)).collect()];
                (d * d + (d - 1) * (d - 1), plaquettes, stars, z_cuts, x_cuts)
            }
        };
        let touching = |checks: &[[Option<usize>; 4]]| {
            let mut t = vec![Vec::new(); qubits];
            for (c, support) in checks.iter().enumerate() {
                for q in support.iter().flatten() {
                    t[*q].push(c);
                }
            }
            t
        };
        let lattice = CodeLattice {
            distance,
            rounds,
            geometry,
            qubits,
            touching: [touching(&z_checks), touching(&x_checks)],
            checks: [z_checks, x_checks],
            logical_cuts: [z_cuts, x_cuts],
        };
        Ok(lattice)
    }

    /// Toric lattice with `d` noisy rounds.
    pub fn toric(distance: usize) -> Result<Self> {
        Self::new(distance, distance, Geometry::Toric)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn checks(&self, kind: CheckKind) -> &[[Option<usize>; 4]] {
        &self.checks[idx(kind)]
    }

    /// Checks of `kind` that contain qubit `q`.
    pub fn touching(&self, kind: CheckKind, q: usize) -> &[usize] {
        &self.touching[idx(kind)][q]
    }

    /// Parity of `errors` on each check of `kind`.
    pub fn syndrome(&self, kind: CheckKind, errors: &[bool]) -> Vec<bool> {
        self.checks(kind).iter().map(|s| s.iter().flatten().fold(false, |acc, &q| acc ^ errors[q])).collect()
    }

    /// Whether an error without syndrome on `kind` checks is a nontrivial logical.
    pub fn crosses_logical(&self, kind: CheckKind, errors: &[bool]) -> bool {
        self.logical_cuts[idx(kind)].iter().any(|cut| cut.iter().fold(false, |acc, &q| acc ^ errors[q]))
    }
}

/// Pauli frame on the data qubits.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PauliFrame {
    pub x: Vec<bool>,
    pub z: Vec<bool>,
}

impl PauliFrame {
    pub fn new(qubits: usize) -> Self {
        PauliFrame { x: vec![false; qubits], z: vec![false; qubits] }
    }

    /// The component detected by checks of `kind`.
    pub fn detected_by(&self, kind: CheckKind) -> &[bool] {
        match kind {
            CheckKind::Z => &self.x,
            CheckKind::X => &self.z,
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.x.iter().chain(&self.z).any(|&b| b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct CheckEntry {
    flag: Option<AbortFilterOutcome>,
    x: u8,
    z: u8,
    incorrect: bool,
}

/// Sampling table for one stabilizer measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckModel {
    entries: Vec<CheckEntry>,
    cumulative: Vec<f64>,
    incorrect: f64,
    /// Probability that cell `k` receives an X component, and a Z component.
    marginal: [[f64; 4]; 2],
}

impl CheckModel {
    pub fn from_superop(so: &StabilizerSuperoperator) -> Result<Self> {
        Self::from_cases(&[(None, 1.0, so)])
    }

    /// A measurement that reports which filter case occurred.
    pub fn from_filter_cases(cases: &[(AbortFilterOutcome, f64, &StabilizerSuperoperator)]) -> Result<Self> {
        let cases: Vec<_> = cases.iter().map(|&(o, p, so)| (Some(o), p, so)).collect();
        Self::from_cases(&cases)
    }

    fn from_cases(cases: &[(Option<AbortFilterOutcome>, f64, &StabilizerSuperoperator)]) -> Result<Self> {
        let mut entries = Vec::new();
        let mut weights = Vec::new();
        for &(flag, p, so) in cases {
            if !(p >= 0.0) {
                return Err(Error::contract(format!("case probability {p}")));
            }
            let total = so.total();
            if !(total > 0.0) {
                return Err(Error::contract("superoperator carries no weight"));
            }
            for (e, proj, w) in so.entries() {
                entries.push(CheckEntry {
                    flag,
                    x: e.x_mask() as u8,
                    z: e.z_mask() as u8,
                    incorrect: proj == Projection::Incorrect,
                });
                weights.push(p * w / total);
            }
        }
        let norm: f64 = weights.iter().sum();
        if !(norm > 0.0) {
            return Err(Error::contract("measurement model carries no weight"));
        }
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        let mut incorrect = 0.0;
        let mut marginal = [[0.0; 4]; 2];
        for (e, w) in entries.iter().zip(&weights) {
            let w = w / norm;
            acc += w;
            cumulative.push(acc);
            if e.incorrect {
                incorrect += w;
            }
            for k in 0..4 {
                if e.x >> k & 1 == 1 {
                    marginal[0][k] += w;
                }
                if e.z >> k & 1 == 1 {
                    marginal[1][k] += w;
                }
            }
        }
        Ok(CheckModel { entries, cumulative, incorrect, marginal })
    }

    fn sample(&self, rng: &mut SampleRng) -> CheckEntry {
        let u: f64 = rng.gen::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.entries.len() - 1);
        self.entries[i]
    }

    /// Probability of a wrong reported outcome.
    pub fn incorrect_probability(&self) -> f64 {
        self.incorrect
    }

    /// Probability that cell `cell` receives an error flipping checks of `kind`.
    pub fn flip_marginal(&self, kind: CheckKind, cell: usize) -> f64 {
        // Z checks see X components
        match kind {
            CheckKind::Z => self.marginal[0][cell],
            CheckKind::X => self.marginal[1][cell],
        }
    }
}

/// Measurement models for both check types plus the non-reporting rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeNoise {
    pub z_checks: CheckModel,
    pub x_checks: CheckModel,
    /// Probability that a stabilizer measurement fails to report in a round.
    pub missing: f64,
}

impl LatticeNoise {
    pub fn new(so_z: &StabilizerSuperoperator, so_x: &StabilizerSuperoperator) -> Result<Self> {
        if so_z.basis != Basis::Z || so_x.basis != Basis::X {
            return Err(Error::contract("expected a Z-basis and an X-basis superoperator"));
        }
        Ok(LatticeNoise { z_checks: CheckModel::from_superop(so_z)?, x_checks: CheckModel::from_superop(so_x)?, missing: 0.0 })
    }

    /// Models from a Z-basis extraction, twirled over cyclic cell rotations.
    /// X checks use the dual. Filter cases, when present, become flags.
    pub fn from_extraction(ex: &Extraction) -> Result<Self> {
        let group = TwirlGroup::Cyclic.permutations();
        let model = |dual: bool| -> Result<CheckModel> {
            let prep = |so: &StabilizerSuperoperator| -> Result<StabilizerSuperoperator> {
                let so = if dual { so.dual() } else { so.clone() };
                twirl(&so, &group)
            };
            match &ex.filter_cases {
                None => CheckModel::from_superop(&prep(&ex.superop)?),
                Some(cases) => {
                    let prepared: Vec<_> =
                        cases.iter().map(|c| Ok((c.outcome, c.probability, prep(&c.superop)?))).collect::<Result<_>>()?;
                    let refs: Vec<_> = prepared.iter().map(|(o, p, so)| (*o, *p, so)).collect();
                    CheckModel::from_filter_cases(&refs)
                }
            }
        };
        if ex.superop.basis != Basis::Z {
            return Err(Error::contract("extraction must be in the Z basis"));
        }
        Ok(LatticeNoise { z_checks: model(false)?, x_checks: model(true)?, missing: 0.0 })
    }

    pub fn with_missing(mut self, missing: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&missing) {
            return Err(Error::contract(format!("missing rate {missing} outside [0, 1)")));
        }
        self.missing = missing;
        Ok(self)
    }

    pub fn model(&self, kind: CheckKind) -> &CheckModel {
        match kind {
            CheckKind::Z => &self.z_checks,
            CheckKind::X => &self.x_checks,
        }
    }
}

/// Spacetime coordinate of a check outcome: `(kind, check, round)`.
pub type Site = (CheckKind, usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SyndromeHistory {
    /// Detection events `(check, round)` per kind; round `rounds` is the perfect round.
    pub events: [Vec<(usize, usize)>; 2],
    /// Filter outcome of every measurement that did not pass.
    pub flags: BTreeMap<Site, AbortFilterOutcome>,
    pub missing: BTreeSet<Site>,
}

impl SyndromeHistory {
    pub fn events(&self, kind: CheckKind) -> &[(usize, usize)] {
        &self.events[idx(kind)]
    }
}

/// Runs `lattice.rounds` noisy rounds and one perfect round from a clean code state.
pub fn sample_syndrome_history(
    lattice: &CodeLattice,
    noise: &LatticeNoise,
    rng: &mut SampleRng,
) -> (SyndromeHistory, PauliFrame) {
    let mut frame = PauliFrame::new(lattice.qubits);
    let mut history = SyndromeHistory::default();
    let mut last: [Vec<bool>; 2] = CheckKind::BOTH.map(|k| vec![false; lattice.checks(k).len()]);
    for round in 0..lattice.rounds {
        for kind in CheckKind::BOTH {
            let model = noise.model(kind);
            for (c, support) in lattice.checks(kind).iter().enumerate() {
                if noise.missing > 0.0 && rng.gen::<f64>() < noise.missing {
                    history.missing.insert((kind, c, round));
                    continue;
                }
                let e = model.sample(rng);
                let parity = support.iter().flatten().fold(false, |acc, &q| acc ^ frame.detected_by(kind)[q]);
                let outcome = parity ^ e.incorrect;
                if outcome != last[idx(kind)][c] {
                    history.events[idx(kind)].push((c, round));
                    last[idx(kind)][c] = outcome;
                }
                if let Some(flag) = e.flag.filter(|f| *f != AbortFilterOutcome::Pass) {
                    history.flags.insert((kind, c, round), flag);
                }
                for (k, q) in support.iter().enumerate() {
                    if let Some(q) = q {
                        frame.x[*q] ^= e.x >> k & 1 == 1;
                        frame.z[*q] ^= e.z >> k & 1 == 1;
                    }
                }
            }
        }
    }
    for kind in CheckKind::BOTH {
        let syndrome = lattice.syndrome(kind, frame.detected_by(kind));
        for (c, s) in syndrome.into_iter().enumerate() {
            if s != last[idx(kind)][c] {
                history.events[idx(kind)].push((c, lattice.rounds));
            }
        }
    }
    (history, frame)
}

/// Per-round edge weights of the decoding graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    /// Space-edge weight of each qubit, per kind.
    pub space: [Vec<f64>; 2],
    /// Time-edge weight per kind.
    pub time: [f64; 2],
    /// Tag naming the recipe, carried into sweep output.
    pub recipe: &'static str,
}

fn neg_log(p: f64) -> f64 {
    if p <= 0.0 {
        MAX_EDGE_WEIGHT
    } else {
        (-p.ln()).clamp(0.0, MAX_EDGE_WEIGHT)
    }
}

impl EdgeWeights {
    /// `-ln p` of the per-round marginal flip probability of each qubit and
    /// of each check's wrong-outcome probability.
    pub fn marginal(lattice: &CodeLattice, noise: &LatticeNoise) -> Self {
        let mut space = [vec![0.0; lattice.qubits], vec![0.0; lattice.qubits]];
        for detect in CheckKind::BOTH {
            for q in 0..lattice.qubits {
                // every measurement touching q may flip it
                let mut bias = 1.0;
                for source in CheckKind::BOTH {
                    for &c in lattice.touching(source, q) {
                        let cell = lattice.checks(source)[c].iter().position(|&s| s == Some(q)).unwrap();
                        bias *= 1.0 - 2.0 * noise.model(source).flip_marginal(detect, cell);
                    }
                }
                space[idx(detect)][q] = neg_log((1.0 - bias) / 2.0);
            }
        }
        let time = CheckKind::BOTH.map(|k| neg_log(noise.model(k).incorrect_probability()));
        EdgeWeights { space, time, recipe: "marginal" }
    }

    /// Unit space edges and unit time edges.
    pub fn uniform(lattice: &CodeLattice) -> Self {
        EdgeWeights { space: [vec![1.0; lattice.qubits], vec![1.0; lattice.qubits]], time: [1.0; 2], recipe: "uniform" }
    }
}

/// Shortest paths on one layer of the decoding graph of a check kind. Node
/// `checks` stands for the boundary of a planar code.
#[derive(Debug, Clone)]
struct SpaceTable {
    nodes: usize,
    /// `(neighbor, qubit)` edges of each node.
    adjacency: Vec<Vec<(usize, usize)>>,
    dist: Vec<f64>,
    /// First step `(node, qubit)` on a shortest path from `a` toward `b`.
    next: Vec<(usize, usize)>,
}

impl SpaceTable {
    fn new(lattice: &CodeLattice, kind: CheckKind, weights: &EdgeWeights) -> Self {
        let checks = lattice.checks(kind).len();
        let nodes = checks + 1;
        let mut adjacency = vec![Vec::new(); nodes];
        for q in 0..lattice.qubits {
            match *lattice.touching(kind, q) {
                [a, b] => {
                    adjacency[a].push((b, q));
                    adjacency[b].push((a, q));
                }
                [a] => {
                    adjacency[a].push((checks, q));
                    adjacency[checks].push((a, q));
                }
                _ => {}
            }
        }
        let w = &weights.space[idx(kind)];
        let mut dist = vec![f64::INFINITY; nodes * nodes];
        let mut next = vec![(usize::MAX, usize::MAX); nodes * nodes];
        for target in 0..nodes {
            // a tree grown from the target gives every node its first step toward it
            let row = &mut dist[target * nodes..(target + 1) * nodes];
            let mut step = vec![(usize::MAX, usize::MAX); nodes];
            let mut heap = BinaryHeap::new();
            row[target] = 0.0;
            heap.push(Reverse((0u64, target)));
            while let Some(Reverse((key, u))) = heap.pop() {
                let d = f64::from_bits(key);
                if d > row[u] {
                    continue;
                }
                for &(v, q) in &adjacency[u] {
                    let nd = d + w[q];
                    if nd < row[v] {
                        row[v] = nd;
                        step[v] = (u, q);
                        heap.push(Reverse((nd.to_bits(), v)));
                    }
                }
            }
            for (a, s) in step.into_iter().enumerate() {
                next[a * nodes + target] = s;
            }
        }
        SpaceTable { nodes, adjacency, dist, next }
    }

    fn distance(&self, a: usize, b: usize) -> f64 {
        self.dist[b * self.nodes + a]
    }

    fn path(&self, mut a: usize, b: usize, flips: &mut [bool]) {
        while a != b {
            let (n, q) = self.next[a * self.nodes + b];
            flips[q] ^= true;
            a = n;
        }
    }
}

/// Decoder state shared by every history of one lattice and noise model.
#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    lattice: &'a CodeLattice,
    weights: EdgeWeights,
    tables: [SpaceTable; 2],
}

impl<'a> Decoder<'a> {
    pub fn new(lattice: &'a CodeLattice, weights: EdgeWeights) -> Self {
        let tables = CheckKind::BOTH.map(|k| SpaceTable::new(lattice, k, &weights));
        Decoder { lattice, weights, tables }
    }

    pub fn weights(&self) -> &EdgeWeights {
        &self.weights
    }

    /// Builds the matching graph of `kind`. With `favor`, space edges at the
    /// qubits of a `FAIL_BAD` measurement have their weight multiplied by it,
    /// in the flagged round and the next.
    pub fn matching_graph(&self, history: &SyndromeHistory, kind: CheckKind, favor: Option<f64>) -> Result<DecodingGraph<'_>> {
        let lattice = self.lattice;
        let checks = lattice.checks(kind).len();
        let layers = lattice.rounds + 1;
        let defects: Vec<(usize, usize)> = history.events(kind).to_vec();
        for &(c, r) in &defects {
            if c >= checks || r >= layers {
                return Err(Error::contract(format!("event ({c}, {r}) outside the lattice")));
            }
        }
        let mut favored = Vec::new();
        if let Some(f) = favor {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::contract(format!("favor factor {f} must be positive")));
            }
            if f != 1.0 {
                for (&(k, c, round), &flag) in &history.flags {
                    if flag == AbortFilterOutcome::FailBad {
                        for q in lattice.checks(k)[c].iter().flatten() {
                            favored.push((*q, round));
                            favored.push((*q, round + 1));
                        }
                    }
                }
            }
        }
        let merged: Vec<(usize, usize)> = history.missing.iter().filter(|s| s.0 == kind).map(|s| (s.1, s.2)).collect();
        let table = &self.tables[idx(kind)];
        let time_w = self.weights.time[idx(kind)];
        let n = defects.len();
        let planar = lattice.geometry == Geometry::Planar;
        let mut graph = MatchingGraph::new(if planar { 2 * n } else { n });
        let routes = if favored.is_empty() && merged.is_empty() {
            for (i, &(c, r)) in defects.iter().enumerate() {
                for (j, &(c2, r2)) in defects.iter().enumerate().skip(i + 1) {
                    graph.add_edge(i, j, table.distance(c, c2) + time_w * r.abs_diff(r2) as f64);
                }
            }
            Routes::Product
        } else {
            let mut scale = vec![1.0; layers * lattice.qubits];
            for (q, layer) in favored {
                if layer < layers {
                    scale[layer * lattice.qubits + q] = favor.unwrap_or(1.0);
                }
            }
            let mut zero_time = vec![false; layers * checks];
            for (c, r) in merged {
                zero_time[r * checks + c] = true;
            }
            let st = Spacetime { table, qubits: lattice.qubits, space: &self.weights.space[idx(kind)], time: time_w, checks, layers, scale, zero_time };
            let trees: Vec<_> = defects.iter().map(|&(c, r)| st.dijkstra(r * checks + c)).collect();
            for (i, (dist, _)) in trees.iter().enumerate() {
                for (j, &(c2, r2)) in defects.iter().enumerate().skip(i + 1) {
                    graph.add_edge(i, j, dist[r2 * checks + c2]);
                }
            }
            Routes::Trees { boundary: st.boundary(), trees }
        };
        if planar {
            let bnode = checks;
            for (i, &(c, _)) in defects.iter().enumerate() {
                let d = match &routes {
                    Routes::Product => table.distance(c, bnode),
                    Routes::Trees { boundary, trees } => trees[i].0[*boundary],
                };
                if d.is_finite() {
                    graph.add_edge(i, n + i, d);
                }
                for j in i + 1..n {
                    graph.add_edge(n + i, n + j, 0.0);
                }
            }
        }
        graph.edges.retain(|e| e.2.is_finite());
        Ok(DecodingGraph { kind, defects, graph, table, routes })
    }

    /// Decodes both check kinds of one history; `true` on a logical failure.
    pub fn decode(&self, history: &SyndromeHistory, frame: &PauliFrame, favor: Option<f64>) -> Result<bool> {
        let mut failed = false;
        for kind in CheckKind::BOTH {
            let dg = self.matching_graph(history, kind, favor)?;
            let matching = mwpm_decode(&dg.graph)?;
            let correction = dg.correction(&matching, self.lattice.qubits)?;
            failed |= logical_failure(self.lattice, kind, frame.detected_by(kind), &correction)?;
        }
        Ok(failed)
    }
}

#[derive(Debug, Clone)]
enum Routes {
    /// Homogeneous spacetime: paths come from the single-layer table.
    Product,
    /// Distances and predecessors `(node, qubit)` from each defect.
    Trees { boundary: usize, trees: Vec<(Vec<f64>, Vec<(usize, usize)>)> },
}

struct Spacetime<'a> {
    table: &'a SpaceTable,
    qubits: usize,
    space: &'a [f64],
    time: f64,
    checks: usize,
    layers: usize,
    scale: Vec<f64>,
    zero_time: Vec<bool>,
}

impl Spacetime<'_> {
    fn boundary(&self) -> usize {
        self.layers * self.checks
    }

    fn dijkstra(&self, source: usize) -> (Vec<f64>, Vec<(usize, usize)>) {
        let n = self.boundary() + 1;
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![(usize::MAX, usize::MAX); n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Reverse((0u64, source)));
        let mut relax = |v: usize, nd: f64, from: (usize, usize), heap: &mut BinaryHeap<_>, dist: &mut Vec<f64>| {
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = from;
                heap.push(Reverse((nd.to_bits(), v)));
            }
        };
        while let Some(Reverse((key, u))) = heap.pop() {
            let d = f64::from_bits(key);
            if d > dist[u] || u == self.boundary() {
                continue;
            }
            let (layer, c) = (u / self.checks, u % self.checks);
            for &(o, q) in &self.table.adjacency[c] {
                let v = if o == self.checks { self.boundary() } else { layer * self.checks + o };
                let w = self.space[q] * self.scale[layer * self.qubits + q];
                relax(v, d + w, (u, q), &mut heap, &mut dist);
            }
            let tw = |l: usize| if self.zero_time[l * self.checks + c] { 0.0 } else { self.time };
            if layer + 1 < self.layers {
                relax(u + self.checks, d + tw(layer), (u, usize::MAX), &mut heap, &mut dist);
            }
            if layer > 0 {
                relax(u - self.checks, d + tw(layer - 1), (u, usize::MAX), &mut heap, &mut dist);
            }
        }
        (dist, pred)
    }
}

/// Spacetime decoding problem for one check kind.
#[derive(Debug, Clone)]
pub struct DecodingGraph<'a> {
    pub kind: CheckKind,
    /// Detection events `(check, round)`; matching node `i` is event `i`, and
    /// for planar codes node `n + i` is its boundary partner.
    pub defects: Vec<(usize, usize)>,
    pub graph: MatchingGraph,
    table: &'a SpaceTable,
    routes: Routes,
}

impl DecodingGraph<'_> {
    /// Qubits flipped by the correction a matching implies.
    pub fn correction(&self, matching: &[(usize, usize)], qubits: usize) -> Result<Vec<bool>> {
        let n = self.defects.len();
        let bnode = self.table.nodes - 1;
        let mut flips = vec![false; qubits];
        for &(a, b) in matching {
            let (a, b) = (a.min(b), a.max(b));
            if a >= n {
                continue;
            }
            let to_boundary = b >= n;
            if to_boundary && b != n + a {
                return Err(Error::contract(format!("matched pair ({a}, {b}) has no edge")));
            }
            match &self.routes {
                Routes::Product => {
                    let target = if to_boundary { bnode } else { self.defects[b].0 };
                    self.table.path(self.defects[a].0, target, &mut flips);
                }
                Routes::Trees { boundary, trees } => {
                    let (c, r) = self.defects[a];
                    let source = r * bnode + c;
                    let mut at = if to_boundary { *boundary } else { self.defects[b].1 * bnode + self.defects[b].0 };
                    let pred = &trees[a].1;
                    while at != source {
                        let (prev, q) = pred[at];
                        if prev == usize::MAX {
                            return Err(Error::contract(format!("matched pair ({a}, {b}) is disconnected")));
                        }
                        if q != usize::MAX {
                            flips[q] ^= true;
                        }
                        at = prev;
                    }
                }
            }
        }
        Ok(flips)
    }
}

/// Builds the matching graph of `kind` for one history; see [`Decoder::matching_graph`].
pub fn build_matching_graph<'a>(
    decoder: &'a Decoder<'_>,
    history: &SyndromeHistory,
    kind: CheckKind,
    favor: Option<f64>,
) -> Result<DecodingGraph<'a>> {
    decoder.matching_graph(history, kind, favor)
}

/// Applies `correction` to the detected component of `true_error` and reports
/// whether the result is a nontrivial logical. A correction that leaves a
/// syndrome is an error.
pub fn logical_failure(lattice: &CodeLattice, kind: CheckKind, true_error: &[bool], correction: &[bool]) -> Result<bool> {
    let residual: Vec<bool> = true_error.iter().zip(correction).map(|(a, b)| a ^ b).collect();
    let left = lattice.syndrome(kind, &residual).into_iter().filter(|&s| s).count();
    if left > 0 {
        return Err(Error::ResidualSyndrome(left));
    }
    Ok(lattice.crosses_logical(kind, &residual))
}

/// Options for [`logical_error_rate`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecodeOptions {
    /// Reweight edges near `FAIL_BAD` flags by this factor.
    pub favor: Option<f64>,
    /// Use unit edge weights instead of marginal probabilities.
    pub uniform_weights: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub samples: usize,
    pub failures: usize,
    pub rate: f64,
    /// Binomial standard error.
    pub stderr: f64,
}

impl RateEstimate {
    pub fn from_counts(samples: usize, failures: usize) -> Self {
        let rate = failures as f64 / samples as f64;
        RateEstimate { samples, failures, rate, stderr: (rate * (1.0 - rate) / samples as f64).sqrt() }
    }
}

/// Fraction of `samples` histories that end in a logical failure. Sample `i`
/// draws from stream `(seed, i)`.
pub fn logical_error_rate(
    lattice: &CodeLattice,
    noise: &LatticeNoise,
    samples: usize,
    seed: u64,
    opts: DecodeOptions,
) -> Result<RateEstimate> {
    if samples == 0 {
        return Err(Error::contract("samples must be at least 1"));
    }
    let weights = if opts.uniform_weights { EdgeWeights::uniform(lattice) } else { EdgeWeights::marginal(lattice, noise) };
    let decoder = Decoder::new(lattice, weights);
    let outcomes: Vec<bool> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let (history, frame) = sample_syndrome_history(lattice, noise, &mut stream(seed, i));
            decoder.decode(&history, &frame, opts.favor)
        })
        .collect::<Result<_>>()?;
    Ok(RateEstimate::from_counts(samples, outcomes.iter().filter(|&&f| f).count()))
}

/// Flag-aware against flag-blind decoding of the same histories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedComparison {
    pub aware: RateEstimate,
    pub blind: RateEstimate,
    /// Histories only the flag-blind decoder failed.
    pub blind_only: usize,
    /// Histories only the flag-aware decoder failed.
    pub aware_only: usize,
}

impl PairedComparison {
    /// McNemar statistic: how many standard deviations the aware decoder is ahead.
    pub fn z_score(&self) -> f64 {
        let n = (self.blind_only + self.aware_only) as f64;
        if n == 0.0 {
            0.0
        } else {
            (self.blind_only as f64 - self.aware_only as f64) / n.sqrt()
        }
    }
}

pub fn compare_flag_decoding(
    lattice: &CodeLattice,
    noise: &LatticeNoise,
    samples: usize,
    seed: u64,
    favor: f64,
) -> Result<PairedComparison> {
    if samples == 0 {
        return Err(Error::contract("samples must be at least 1"));
    }
    let decoder = Decoder::new(lattice, EdgeWeights::marginal(lattice, noise));
    let pairs: Vec<(bool, bool)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let (history, frame) = sample_syndrome_history(lattice, noise, &mut stream(seed, i));
            let aware = decoder.decode(&history, &frame, Some(favor))?;
            let blind = decoder.decode(&history, &frame, None)?;
            Ok((aware, blind))
        })
        .collect::<Result<_>>()?;
    let count = |f: &dyn Fn(&(bool, bool)) -> bool| pairs.iter().filter(|p| f(p)).count();
    Ok(PairedComparison {
        aware: RateEstimate::from_counts(samples, count(&|p| p.0)),
        blind: RateEstimate::from_counts(samples, count(&|p| p.1)),
        blind_only: count(&|p| p.1 && !p.0),
        aware_only: count(&|p| p.0 && !p.1),
    })
}
