//! Pauli strings, Clifford conjugation and exact sparse distributions over
//! Pauli error frames.
//!
//! Signs and phases are never tracked: a [`PauliString`] is an error class.
//! Whether an error flips a measurement is decided purely by anticommutation.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};

/// Largest register a [`PauliString`] can describe.
pub const MAX_QUBITS: usize = 64;

/// Unkeyed hasher so accumulation order (and hence float rounding) is the
/// same in every process.
type StableMap<K, V> = FxHashMap<K, V>;

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    fn from_bits(x: bool, z: bool) -> Pauli {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    /// Rank used for the lexicographic key order `I < X < Y < Z`.
    fn rank(self) -> u8 {
        self as u8
    }
}

/// An `n`-qubit Pauli operator up to phase, stored as X and Z bit masks.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    len: u8,
    x: u64,
    z: u64,
}

impl PauliString {
    pub fn identity(len: usize) -> Self {
        assert!(len <= MAX_QUBITS, "at most {MAX_QUBITS} qubits supported");
        PauliString { len: len as u8, x: 0, z: 0 }
    }

    /// Identity everywhere except `letter` on `qubit`.
    pub fn single(len: usize, qubit: usize, letter: Pauli) -> Self {
        let mut p = Self::identity(len);
        p.set(qubit, letter);
        p
    }

    pub fn from_letters(letters: &[Pauli]) -> Self {
        let mut p = Self::identity(letters.len());
        for (q, &l) in letters.iter().enumerate() {
            p.set(q, l);
        }
        p
    }

    /// Build from raw masks; bits at or above `len` are rejected.
    pub fn from_masks(len: usize, x: u64, z: u64) -> Result<Self> {
        if len > MAX_QUBITS {
            return Err(Error::contract(format!("{len} qubits exceeds the {MAX_QUBITS}-qubit limit")));
        }
        let valid = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        if (x | z) & !valid != 0 {
            return Err(Error::contract("mask bits outside the declared qubit range"));
        }
        Ok(PauliString { len: len as u8, x, z })
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    pub fn get(&self, qubit: usize) -> Pauli {
        debug_assert!(qubit < self.len());
        Pauli::from_bits(self.x >> qubit & 1 == 1, self.z >> qubit & 1 == 1)
    }

    pub fn set(&mut self, qubit: usize, letter: Pauli) {
        assert!(qubit < self.len(), "qubit {qubit} out of range for length {}", self.len);
        let (x, z) = letter.bits();
        let bit = 1u64 << qubit;
        self.x = if x { self.x | bit } else { self.x & !bit };
        self.z = if z { self.z | bit } else { self.z & !bit };
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    /// Number of non-identity positions.
    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    /// Product up to phase. Panics on length mismatch.
    pub fn compose(&self, other: &PauliString) -> PauliString {
        assert_eq!(self.len, other.len, "length mismatch in Pauli product");
        PauliString { len: self.len, x: self.x ^ other.x, z: self.z ^ other.z }
    }

    /// `true` iff the two strings anticommute.
    pub fn anticommutes_with(&self, other: &PauliString) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) & 1 == 1
    }

    /// Clears every qubit in `mask` to identity.
    pub fn cleared(&self, mask: u64) -> PauliString {
        PauliString { len: self.len, x: self.x & !mask, z: self.z & !mask }
    }

    /// Picks out `qubits` (in order) as a new, shorter string.
    pub fn restrict(&self, qubits: &[usize]) -> PauliString {
        let mut out = PauliString::identity(qubits.len());
        for (i, &q) in qubits.iter().enumerate() {
            out.set(i, self.get(q));
        }
        out
    }

    /// Places this string on `qubits` of a `len`-qubit register.
    pub fn embed(&self, len: usize, qubits: &[usize]) -> PauliString {
        assert_eq!(qubits.len(), self.len(), "embedding needs one target per letter");
        let mut out = PauliString::identity(len);
        for (i, &q) in qubits.iter().enumerate() {
            out.set(q, self.get(i));
        }
        out
    }

    /// Relabels positions: letter at `i` moves to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> PauliString {
        assert_eq!(perm.len(), self.len());
        let mut out = PauliString::identity(self.len());
        for (i, &to) in perm.iter().enumerate() {
            out.set(to, self.get(i));
        }
        out
    }

    /// Swaps X and Z letters everywhere (conjugation by H on every qubit).
    pub fn hadamard_all(&self) -> PauliString {
        PauliString { len: self.len, x: self.z, z: self.x }
    }

    pub fn letters(&self) -> impl Iterator<Item = Pauli> + '_ {
        (0..self.len()).map(move |q| self.get(q))
    }

    /// Key realizing `I < X < Y < Z` per qubit with qubit 0 most significant.
    fn sort_key(&self) -> u128 {
        let mut key = 0u128;
        for q in 0..self.len() {
            key = (key << 2) | self.get(q).rank() as u128;
        }
        key
    }
}

impl Ord for PauliString {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len.cmp(&other.len).then_with(|| self.sort_key().cmp(&other.sort_key()))
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in self.letters() {
            write!(f, "{}", l.as_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliString({self})")
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| match c {
                'I' | '1' | '_' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::parse(format!("invalid Pauli letter {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if letters.len() > MAX_QUBITS {
            return Err(Error::parse(format!("Pauli string longer than {MAX_QUBITS} qubits")));
        }
        Ok(PauliString::from_letters(&letters))
    }
}

/// Elementary operations of the protocol circuits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    Cnot,
    Cz,
    H,
    Swap,
    PrepZ,
    PrepX,
    MeasZ,
    MeasX,
    BellRaw,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Cnot | GateKind::Cz | GateKind::Swap | GateKind::BellRaw => 2,
            _ => 1,
        }
    }

    pub fn is_unitary(self) -> bool {
        matches!(self, GateKind::Cnot | GateKind::Cz | GateKind::H | GateKind::Swap)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            GateKind::Cnot => "cnot",
            GateKind::Cz => "cz",
            GateKind::H => "h",
            GateKind::Swap => "swap",
            GateKind::PrepZ => "prep_z",
            GateKind::PrepX => "prep_x",
            GateKind::MeasZ => "meas_z",
            GateKind::MeasX => "meas_x",
            GateKind::BellRaw => "bell",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<GateKind> {
        Some(match s {
            "cnot" => GateKind::Cnot,
            "cz" => GateKind::Cz,
            "h" => GateKind::H,
            "swap" => GateKind::Swap,
            "prep_z" => GateKind::PrepZ,
            "prep_x" => GateKind::PrepX,
            "meas_z" => GateKind::MeasZ,
            "meas_x" => GateKind::MeasX,
            "bell" => GateKind::BellRaw,
            _ => return None,
        })
    }
}

/// A gate together with its qubit targets. For `Cnot` the first target is the control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Gate {
    pub kind: GateKind,
    targets: [usize; 2],
}

impl Gate {
    pub fn new(kind: GateKind, targets: &[usize]) -> Result<Gate> {
        if targets.len() != kind.arity() {
            return Err(Error::contract(format!(
                "{} takes {} qubit(s), got {}",
                kind.mnemonic(),
                kind.arity(),
                targets.len()
            )));
        }
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(Error::contract(format!("{} needs two distinct qubits", kind.mnemonic())));
        }
        let mut t = [usize::MAX; 2];
        t[..targets.len()].copy_from_slice(targets);
        Ok(Gate { kind, targets: t })
    }

    pub fn cnot(control: usize, target: usize) -> Gate {
        Gate::new(GateKind::Cnot, &[control, target]).expect("distinct qubits")
    }

    pub fn cz(a: usize, b: usize) -> Gate {
        Gate::new(GateKind::Cz, &[a, b]).expect("distinct qubits")
    }

    pub fn one(kind: GateKind, q: usize) -> Gate {
        Gate::new(kind, &[q]).expect("single-qubit gate")
    }

    pub fn bell(a: usize, b: usize) -> Gate {
        Gate::new(GateKind::BellRaw, &[a, b]).expect("distinct qubits")
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets[..self.kind.arity()]
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.mnemonic())?;
        for t in self.targets() {
            write!(f, " {t}")?;
        }
        Ok(())
    }
}

/// Returns `U p U†` up to sign.
pub fn conjugate_through(gate: &Gate, p: &PauliString) -> Result<PauliString> {
    if !gate.kind.is_unitary() {
        return Err(Error::contract(format!("{} is not a unitary gate", gate.kind.mnemonic())));
    }
    if let Some(&q) = gate.targets().iter().find(|&&q| q >= p.len()) {
        return Err(Error::contract(format!("gate target {q} outside {}-qubit string", p.len())));
    }
    let (mut x, mut z) = (p.x, p.z);
    let bit = |m: u64, q: usize| m >> q & 1;
    match gate.kind {
        GateKind::Cnot => {
            let (c, t) = (gate.targets[0], gate.targets[1]);
            x ^= bit(x, c) << t;
            z ^= bit(z, t) << c;
        }
        GateKind::Cz => {
            let (a, b) = (gate.targets[0], gate.targets[1]);
            z ^= bit(x, a) << b;
            z ^= bit(x, b) << a;
        }
        GateKind::H => {
            let q = gate.targets[0];
            let (xb, zb) = (bit(x, q), bit(z, q));
            x = (x & !(1 << q)) | (zb << q);
            z = (z & !(1 << q)) | (xb << q);
        }
        GateKind::Swap => {
            let (a, b) = (gate.targets[0], gate.targets[1]);
            let swap = |m: u64| {
                let d = (bit(m, a) ^ bit(m, b)) & 1;
                m ^ (d << a) ^ (d << b)
            };
            x = swap(x);
            z = swap(z);
        }
        _ => unreachable!(),
    }
    Ok(PauliString { len: p.len, x, z })
}

/// `true` iff `p` and `observable` anticommute.
pub fn anticommutes(p: &PauliString, observable: &PauliString) -> Result<bool> {
    if p.len() != observable.len() {
        return Err(Error::contract(format!(
            "length mismatch: {} vs {} qubits",
            p.len(),
            observable.len()
        )));
    }
    Ok(p.anticommutes_with(observable))
}

/// A Pauli channel: a list of error frames with their probabilities.
pub type PauliChannel = Vec<(PauliString, f64)>;

/// Exact distribution over Pauli error frames.
///
/// Entries are kept sorted by key; every stored probability is positive.
/// Mass dropped by [`SparseErrorDist::truncate`] is accumulated in
/// `truncated_mass` so the books always balance.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseErrorDist {
    qubits: usize,
    entries: Vec<(PauliString, f64)>,
    truncated_mass: f64,
}

impl SparseErrorDist {
    /// Point mass on the identity frame.
    pub fn identity(qubits: usize) -> Self {
        SparseErrorDist { qubits, entries: vec![(PauliString::identity(qubits), 1.0)], truncated_mass: 0.0 }
    }

    /// Builds a distribution from (frame, probability) pairs, merging duplicates.
    pub fn from_entries(qubits: usize, entries: impl IntoIterator<Item = (PauliString, f64)>) -> Result<Self> {
        let mut acc: StableMap<PauliString, f64> = StableMap::default();
        for (p, w) in entries {
            if p.len() != qubits {
                return Err(Error::contract("frame length differs from distribution width"));
            }
            if !(w >= 0.0) {
                return Err(Error::contract(format!("negative or NaN probability {w}")));
            }
            *acc.entry(p).or_insert(0.0) += w;
        }
        Ok(Self::from_map(qubits, acc, 0.0))
    }

    fn from_map(qubits: usize, acc: StableMap<PauliString, f64>, truncated_mass: f64) -> Self {
        let mut entries: Vec<_> = acc.into_iter().filter(|&(_, w)| w > 0.0).collect();
        entries.sort_by_cached_key(|(p, _)| p.sort_key());
        SparseErrorDist { qubits, entries, truncated_mass }
    }

    /// Rebuilds from a key map that preserves input order for accumulation.
    fn remap(&self, mut f: impl FnMut(&PauliString) -> PauliString) -> Self {
        let mut acc: StableMap<PauliString, f64> = StableMap::default();
        acc.reserve(self.entries.len());
        for (p, w) in &self.entries {
            *acc.entry(f(p)).or_insert(0.0) += *w;
        }
        Self::from_map(self.qubits, acc, self.truncated_mass)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn entries(&self) -> &[(PauliString, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    /// Sum of stored probabilities (excluding truncated mass).
    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }

    pub fn probability(&self, p: &PauliString) -> f64 {
        self.entries.binary_search_by(|(k, _)| k.cmp(p)).map(|i| self.entries[i].1).unwrap_or(0.0)
    }

    /// Conjugates every frame through a unitary gate.
    pub fn apply_gate(&self, gate: &Gate) -> Result<Self> {
        // validate once, then map
        conjugate_through(gate, &PauliString::identity(self.qubits))?;
        Ok(self.remap(|p| conjugate_through(gate, p).expect("validated")))
    }

    /// Convolves with a Pauli channel given on the full register.
    pub fn mix_channel(&self, channel: &[(PauliString, f64)]) -> Result<Self> {
        let total: f64 = channel.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("channel sums to {total}, not 1")));
        }
        if let Some((p, _)) = channel.iter().find(|(p, _)| p.len() != self.qubits) {
            return Err(Error::contract(format!("channel element {p} has the wrong width")));
        }
        let channel: Vec<_> = channel.iter().filter(|(_, w)| *w > 0.0).collect();
        if channel.len() == 1 && channel[0].0.is_identity() {
            return Ok(self.clone());
        }
        let mut acc: StableMap<PauliString, f64> = StableMap::default();
        acc.reserve(self.entries.len() * channel.len());
        for (p, w) in &self.entries {
            for (e, q) in &channel {
                *acc.entry(p.compose(e)).or_insert(0.0) += w * q;
            }
        }
        Ok(Self::from_map(self.qubits, acc, self.truncated_mass))
    }

    /// One combined step: every frame `p` becomes `post(pre(p) * e)` with
    /// probability of `e` under `channel`.
    pub fn evolve(
        &self,
        mut pre: impl FnMut(&PauliString) -> PauliString,
        channel: &[(PauliString, f64)],
        mut post: impl FnMut(&PauliString) -> PauliString,
    ) -> Result<Self> {
        let total: f64 = channel.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("channel sums to {total}, not 1")));
        }
        if let Some((p, _)) = channel.iter().find(|(p, _)| p.len() != self.qubits) {
            return Err(Error::contract(format!("channel element {p} has the wrong width")));
        }
        let channel: Vec<_> = channel.iter().filter(|(_, w)| *w > 0.0).collect();
        let mut acc: StableMap<PauliString, f64> = StableMap::default();
        acc.reserve(self.entries.len() * channel.len());
        for (p, w) in &self.entries {
            let q = pre(p);
            for (e, r) in &channel {
                *acc.entry(post(&q.compose(e))).or_insert(0.0) += w * r;
            }
        }
        Ok(Self::from_map(self.qubits, acc, self.truncated_mass))
    }

    /// Splits mass by whether each frame flips `observable`, folds in an
    /// independent outcome flip with probability `flip_prob`, keeps the
    /// branch whose outcome flip equals `kept_flipped`, and renormalizes so
    /// that stored plus truncated mass is one. Returns the kept branch and
    /// its share of the stored mass.
    pub fn condition(&self, observable: &PauliString, flip_prob: f64, kept_flipped: bool) -> Result<(Self, f64)> {
        if observable.len() != self.qubits {
            return Err(Error::contract("observable width differs from distribution width"));
        }
        if !(0.0..=1.0).contains(&flip_prob) {
            return Err(Error::contract(format!("flip probability {flip_prob} outside [0, 1]")));
        }
        let mut kept = Vec::with_capacity(self.entries.len());
        for (p, w) in &self.entries {
            let flipped = p.anticommutes_with(observable);
            let keep_weight = if flipped == kept_flipped { 1.0 - flip_prob } else { flip_prob };
            if keep_weight > 0.0 {
                kept.push((*p, w * keep_weight));
            }
        }
        let kept_mass: f64 = kept.iter().map(|(_, w)| w).sum();
        if !(kept_mass > 0.0) {
            return Err(Error::DegeneratePostSelection(observable.to_string()));
        }
        let success = kept_mass / self.mass();
        // the truncated mass may all have survived: count it in the norm
        let norm = kept_mass + self.truncated_mass;
        for e in &mut kept {
            e.1 /= norm;
        }
        kept.retain(|(_, w)| *w > 0.0);
        let truncated_mass = self.truncated_mass / norm;
        Ok((SparseErrorDist { qubits: self.qubits, entries: kept, truncated_mass }, success))
    }

    /// Probability mass (including both branches' measurement-flip folding) that
    /// reports a flipped outcome.
    pub fn flip_probability(&self, observable: &PauliString) -> f64 {
        self.entries.iter().filter(|(p, _)| p.anticommutes_with(observable)).map(|(_, w)| w).sum()
    }

    /// Applies `correction` to every frame that flips `observable`: the
    /// classical feed-forward of a measurement whose outcome was misread.
    pub fn feed_forward(&self, observable: &PauliString, correction: &PauliString) -> Self {
        self.remap(|p| if p.anticommutes_with(observable) { p.compose(correction) } else { *p })
    }

    /// Relabels every frame through `f`, merging frames that collide.
    pub fn map_frames(&self, f: impl FnMut(&PauliString) -> PauliString) -> Self {
        self.remap(f)
    }

    /// Forgets the frame on every qubit in `mask` (the qubits are discarded).
    pub fn discard(&self, mask: u64) -> Self {
        self.remap(|p| p.cleared(mask))
    }

    /// Marginal over the listed qubits.
    pub fn restrict(&self, qubits: &[usize]) -> Self {
        let mut out = self.remap(|p| p.restrict(qubits));
        out.qubits = qubits.len();
        out
    }

    /// Splits into the frames satisfying `keep` and the rest. Each part comes
    /// back renormalized (as in [`SparseErrorDist::condition`]) together
    /// with its share of the stored mass; an empty part
    /// is returned as an empty distribution with share zero.
    pub fn partition(&self, mut keep: impl FnMut(&PauliString) -> bool) -> ((Self, f64), (Self, f64)) {
        let (yes, no): (Vec<_>, Vec<_>) = self.entries.iter().partition(|(p, _)| keep(p));
        let total = self.mass();
        let part = |v: Vec<&(PauliString, f64)>| {
            let m: f64 = v.iter().map(|(_, w)| w).sum();
            if !(m > 0.0) {
                return (SparseErrorDist { qubits: self.qubits, entries: Vec::new(), truncated_mass: 0.0 }, 0.0);
            }
            let norm = m + self.truncated_mass;
            let entries = v.iter().map(|(p, w)| (*p, w / norm)).collect();
            let truncated_mass = self.truncated_mass / norm;
            (SparseErrorDist { qubits: self.qubits, entries, truncated_mass }, m / total)
        };
        (part(yes), part(no))
    }

    /// Drops entries below `eps`, moving their mass into `truncated_mass`.
    pub fn truncate(&self, eps: f64) -> Self {
        if eps <= 0.0 {
            return self.clone();
        }
        let mut removed = 0.0;
        let entries: Vec<_> = self
            .entries
            .iter()
            .filter(|(_, w)| {
                if *w < eps {
                    removed += w;
                    false
                } else {
                    true
                }
            })
            .copied()
            .collect();
        SparseErrorDist { qubits: self.qubits, entries, truncated_mass: self.truncated_mass + removed }
    }
}
