//! Exact extraction of the noisy stabilizer-measurement superoperator.
//!
//! A real stabilizer measurement is a mixture of the ideal projector that
//! reports the right parity (`Correct`) and the one that reports the wrong
//! parity (`Incorrect`), each followed by a Pauli error on the four data
//! qubits. Extraction walks the successful branch of a protocol with an
//! exact [`SparseErrorDist`] over the whole register, conditioning on every
//! post-selection, and reads the weights off at the final readout.

mod record;
mod table;
mod walk;

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::noise::NoiseParams;
use crate::pauli::{Pauli, PauliString, SparseErrorDist};
use crate::protocols::{AbortFilterOutcome, Basis, ProtocolSpec};

pub use record::*;
pub use table::*;
use walk::{abort_parities, report_observable, traverse, EndKind, Walk};

pub const DEFAULT_EPS: f64 = 1e-12;
pub const DEFAULT_TRUNCATION_BUDGET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Projection {
    Correct,
    Incorrect,
}

impl Projection {
    pub fn name(self) -> &'static str {
        match self {
            Projection::Correct => "CORRECT",
            Projection::Incorrect => "INCORRECT",
        }
    }

    fn flipped(self, flip: bool) -> Projection {
        match (self, flip) {
            (p, false) => p,
            (Projection::Correct, true) => Projection::Incorrect,
            (Projection::Incorrect, true) => Projection::Correct,
        }
    }
}

impl FromStr for Projection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CORRECT" => Ok(Projection::Correct),
            "INCORRECT" => Ok(Projection::Incorrect),
            other => Err(Error::parse(format!("unknown projection tag {other:?}"))),
        }
    }
}

/// Weights `a_e` (correct projection) and `b_e` (incorrect projection) over
/// four-qubit data errors `E_e`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizerSuperoperator {
    pub basis: Basis,
    pub protocol: String,
    pub noise: NoiseParams,
    entries: BTreeMap<(PauliString, Projection), f64>,
}

impl StabilizerSuperoperator {
    pub fn new(
        basis: Basis,
        protocol: impl Into<String>,
        noise: NoiseParams,
        entries: impl IntoIterator<Item = ((PauliString, Projection), f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for ((e, proj), w) in entries {
            if e.len() != 4 {
                return Err(Error::contract(format!("superoperator error {e} is not on four qubits")));
            }
            if !(w >= 0.0) {
                return Err(Error::contract(format!("negative weight {w} for {e}")));
            }
            if w > 0.0 {
                *map.entry((e, proj)).or_insert(0.0) += w;
            }
        }
        Ok(StabilizerSuperoperator { basis, protocol: protocol.into(), noise, entries: map })
    }

    /// The noiseless measurement: a correct projection and nothing else.
    pub fn ideal(basis: Basis) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert((PauliString::identity(4), Projection::Correct), 1.0);
        StabilizerSuperoperator { basis, protocol: "IDEAL".into(), noise: NoiseParams::noiseless(), entries }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&PauliString, Projection, f64)> {
        self.entries.iter().map(|((e, p), w)| (e, *p, *w))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weight(&self, error: &PauliString, projection: Projection) -> f64 {
        self.entries.get(&(*error, projection)).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Total weight of incorrect projections.
    pub fn incorrect_probability(&self) -> f64 {
        self.entries.iter().filter(|((_, p), _)| *p == Projection::Incorrect).map(|(_, w)| w).sum()
    }

    /// The stabilizer this superoperator measures, as a four-qubit string.
    pub fn stabilizer(&self) -> PauliString {
        stabilizer_of(self.basis)
    }

    /// Rescales so the weights sum to one.
    pub fn normalized(&self) -> Self {
        let t = self.total();
        let mut out = self.clone();
        for w in out.entries.values_mut() {
            *w /= t;
        }
        out
    }

    /// Relabels every error letter X <-> Z and switches the basis.
    pub fn dual(&self) -> Self {
        let basis = match self.basis {
            Basis::Z => Basis::X,
            Basis::X => Basis::Z,
        };
        let entries = self.entries.iter().map(|((e, p), w)| ((e.hadamard_all(), *p), *w)).collect();
        StabilizerSuperoperator { basis, protocol: self.protocol.clone(), noise: self.noise, entries }
    }

    /// Mixture `sum_i w_i * so_i` of superoperators in the same basis.
    pub fn mixture(parts: &[(f64, &StabilizerSuperoperator)]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::contract("empty mixture"))?.1;
        let mut entries: BTreeMap<(PauliString, Projection), f64> = BTreeMap::new();
        for (w, so) in parts {
            if so.basis != first.basis {
                return Err(Error::contract("mixture of superoperators in different bases"));
            }
            for (k, v) in &so.entries {
                *entries.entry(*k).or_insert(0.0) += w * v;
            }
        }
        Ok(StabilizerSuperoperator { basis: first.basis, protocol: first.protocol.clone(), noise: first.noise, entries })
    }

    /// An error `pre` that strikes the data just before this measurement,
    /// folded into post-projection form: `E P^M pre = E pre P^(M xor c)` where
    /// `c` says whether `pre` anticommutes with the stabilizer.
    pub fn after_error(&self, pre: &SparseErrorDist) -> Result<Self> {
        if pre.qubits() != 4 {
            return Err(Error::contract("pre-measurement error must act on four data qubits"));
        }
        let s = self.stabilizer();
        let mut entries: BTreeMap<(PauliString, Projection), f64> = BTreeMap::new();
        for (e1, w1) in pre.entries() {
            let flip = e1.anticommutes_with(&s);
            for ((e2, p), w2) in &self.entries {
                *entries.entry((e2.compose(e1), p.flipped(flip))).or_insert(0.0) += w1 * w2;
            }
        }
        Ok(StabilizerSuperoperator { basis: self.basis, protocol: self.protocol.clone(), noise: self.noise, entries })
    }
}

fn stabilizer_of(basis: Basis) -> PauliString {
    let l = match basis {
        Basis::Z => Pauli::Z,
        Basis::X => Pauli::X,
    };
    PauliString::from_letters(&[l; 4])
}

/// Reduces an error modulo the measured stabilizer: `E` and `E * S` act
/// identically after the projection. Picks the lower weight, then the
/// lexicographically smaller string.
pub fn canonical_error(e: &PauliString, stabilizer: &PauliString) -> PauliString {
    let other = e.compose(stabilizer);
    match e.weight().cmp(&other.weight()) {
        std::cmp::Ordering::Less => *e,
        std::cmp::Ordering::Greater => other,
        std::cmp::Ordering::Equal => (*e).min(other),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    /// Entries below this are dropped after every noisy step.
    pub eps: f64,
    /// Truncated mass above this sets [`Extraction::budget_exceeded`].
    pub truncation_budget: f64,
    /// Reduce data errors modulo the measured stabilizer. Without it the
    /// representative of `E ~ E * S` is whatever the frame merging left.
    pub canonicalize: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { eps: DEFAULT_EPS, truncation_budget: DEFAULT_TRUNCATION_BUDGET, canonicalize: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSuccess {
    pub index: usize,
    pub name: String,
    /// Conditional success probability of each instance of the level.
    pub per_instance: Vec<f64>,
}

impl LevelSuccess {
    /// Probability of a single instance (the mean over instances).
    pub fn probability(&self) -> f64 {
        self.per_instance.iter().sum::<f64>() / self.per_instance.len() as f64
    }

    /// Probability that every instance succeeds.
    pub fn joint(&self) -> f64 {
        self.per_instance.iter().product()
    }
}


/// Per-case result of the post-coupling filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCase {
    pub outcome: AbortFilterOutcome,
    pub probability: f64,
    /// Measurement conditioned on this case. An abort includes the fresh
    /// unfiltered round that follows it.
    pub superop: StabilizerSuperoperator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// Flag-blind superoperator (the mixture over filter cases, if any).
    pub superop: StabilizerSuperoperator,
    pub success: Vec<LevelSuccess>,
    /// Upper bound on the probability dropped by truncation.
    pub truncated_mass: f64,
    pub budget_exceeded: bool,
    /// Present for protocols with an abort filter.
    pub filter_cases: Option<Vec<FilterCase>>,
}

impl Extraction {
    pub fn filter_probability(&self, outcome: AbortFilterOutcome) -> Option<f64> {
        let cases = self.filter_cases.as_ref()?;
        Some(cases.iter().filter(|c| c.outcome == outcome).map(|c| c.probability).sum())
    }
}

/// Extracts the superoperator of `spec` at `noise`.
pub fn extract_superoperator(spec: &ProtocolSpec, noise: &NoiseParams, opts: &ExtractOptions) -> Result<Extraction> {
    extract_with_parity(spec, noise, opts, false)
}

/// Extraction with the data starting in the odd (`true`) or even parity
/// sector of the measured stabilizer. The weights do not depend on it.
pub fn extract_with_parity(
    spec: &ProtocolSpec,
    noise: &NoiseParams,
    opts: &ExtractOptions,
    odd_parity: bool,
) -> Result<Extraction> {
    check_inputs(spec, noise, opts)?;
    let n = spec.qubits();
    let reference = if odd_parity {
        let letter = match spec.basis {
            Basis::Z => Pauli::X,
            Basis::X => Pauli::Z,
        };
        PauliString::single(n, spec.layout.data[0], letter)
    } else {
        PauliString::identity(n)
    };
    let start = SparseErrorDist::from_entries(n, [(reference, 1.0)])?;
    let traversal = traverse(spec, Walk::runner(spec, *noise, opts.eps, start)?)?;
    let readout = Readout::new(spec, noise, opts, reference, odd_parity)?;

    let Some(filter) = &spec.filter else {
        let dist = &traversal.ends[0].walk.dist;
        let truncated_mass = dist.truncated_mass();
        return Ok(Extraction {
            superop: readout.read(dist),
            success: traversal.success,
            truncated_mass,
            budget_exceeded: truncated_mass > opts.truncation_budget,
            filter_cases: None,
        });
    };

    let mut cases = Vec::new();
    let mut truncated_mass = 0.0;
    let mut fresh = None;
    for end in traversal.ends.iter().filter(|e| e.share > 0.0) {
        let dist = &end.walk.dist;
        if end.kind != EndKind::Abort {
            truncated_mass += end.share * dist.truncated_mass();
            cases.push(FilterCase {
                outcome: AbortFilterOutcome::Pass,
                probability: end.share,
                superop: readout.read(dist),
            });
            continue;
        }
        let parities = abort_parities(&filter.abort_readout, n);
        let ((good, p_good), (bad, p_bad)) = dist.partition(|p| parities.iter().all(|z| !p.anticommutes_with(z)));
        let fresh: &Extraction = match &fresh {
            Some(f) => f,
            None => {
                let unfiltered = ProtocolSpec { filter: None, ..spec.clone() };
                fresh.insert(extract_with_parity(&unfiltered, noise, opts, odd_parity)?)
            }
        };
        for (outcome, dist, share) in
            [(AbortFilterOutcome::FailGood, good, p_good), (AbortFilterOutcome::FailBad, bad, p_bad)]
        {
            if share > 0.0 {
                let probability = end.share * share;
                truncated_mass += probability * (dist.truncated_mass() + fresh.truncated_mass);
                let superop = fresh.superop.after_error(&readout.data_errors(&dist)?)?;
                cases.push(FilterCase { outcome, probability, superop });
            }
        }
    }
    let parts: Vec<(f64, &StabilizerSuperoperator)> = cases.iter().map(|c| (c.probability, &c.superop)).collect();
    let superop = StabilizerSuperoperator::mixture(&parts)?;
    Ok(Extraction {
        superop,
        success: traversal.success,
        truncated_mass,
        budget_exceeded: truncated_mass > opts.truncation_budget,
        filter_cases: Some(cases),
    })
}

/// Conditional success probability of every post-selecting level, in
/// protocol order, each conditioned on all earlier levels succeeding.
pub fn success_probabilities(spec: &ProtocolSpec, noise: &NoiseParams) -> Result<Vec<LevelSuccess>> {
    let opts = ExtractOptions::default();
    check_inputs(spec, noise, &opts)?;
    let mut walk = Walk::runner(spec, *noise, opts.eps, SparseErrorDist::identity(spec.qubits()))?;
    let all = walk.run_body(spec)?;
    Ok(all.into_iter().filter(|s| !s.per_instance.is_empty()).collect())
}

fn check_inputs(spec: &ProtocolSpec, noise: &NoiseParams, opts: &ExtractOptions) -> Result<()> {
    let violations = spec.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidProtocol(violations.join("; ")));
    }
    noise.validate()?;
    if !(opts.eps >= 0.0) {
        return Err(Error::contract("truncation eps must be non-negative"));
    }
    Ok(())
}

/// Turns a final error frame into data error plus projection tag.
struct Readout {
    basis: Basis,
    protocol: String,
    noise: NoiseParams,
    data: [usize; 4],
    report: PauliString,
    reference: PauliString,
    odd_parity: bool,
    canonicalize: bool,
}

impl Readout {
    fn new(
        spec: &ProtocolSpec,
        noise: &NoiseParams,
        opts: &ExtractOptions,
        reference: PauliString,
        odd_parity: bool,
    ) -> Result<Self> {
        Ok(Readout {
            basis: spec.basis,
            protocol: spec.name.clone(),
            noise: *noise,
            data: spec.layout.data,
            report: report_observable(spec)?,
            reference: reference.restrict(&spec.layout.data),
            odd_parity,
            canonicalize: opts.canonicalize,
        })
    }

    fn data_error(&self, frame: &PauliString) -> PauliString {
        let e = frame.restrict(&self.data).compose(&self.reference);
        if self.canonicalize {
            canonical_error(&e, &stabilizer_of(self.basis))
        } else {
            e
        }
    }

    /// Conditional weights given the walk reached the readout.
    fn read(&self, dist: &SparseErrorDist) -> StabilizerSuperoperator {
        let mass = dist.mass();
        let mut entries: BTreeMap<(PauliString, Projection), f64> = BTreeMap::new();
        for (frame, w) in dist.entries() {
            let flipped = frame.anticommutes_with(&self.report);
            let proj = if flipped == self.odd_parity { Projection::Correct } else { Projection::Incorrect };
            *entries.entry((self.data_error(frame), proj)).or_insert(0.0) += w / mass;
        }
        StabilizerSuperoperator { basis: self.basis, protocol: self.protocol.clone(), noise: self.noise, entries }
    }

    /// Marginal distribution of the (uncanonicalized) data error.
    fn data_errors(&self, dist: &SparseErrorDist) -> Result<SparseErrorDist> {
        let total = dist.mass();
        SparseErrorDist::from_entries(
            4,
            dist.entries().iter().map(|(f, w)| (f.restrict(&self.data).compose(&self.reference), w / total)),
        )
    }
}

