//! Cell-label twirling and aggregation into error classes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::{canonical_error, Projection, StabilizerSuperoperator};
use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliString};
use crate::protocols::Basis;

/// Cell permutations averaged over by [`twirl`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TwirlGroup {
    /// The four cyclic rotations of the cell labels.
    #[default]
    Cyclic,
    /// All 24 relabelings.
    Full,
}

impl TwirlGroup {
    pub fn permutations(self) -> Vec<[usize; 4]> {
        match self {
            TwirlGroup::Cyclic => (0..4).map(|r| [r, (r + 1) % 4, (r + 2) % 4, (r + 3) % 4]).collect(),
            TwirlGroup::Full => {
                let mut out = Vec::with_capacity(24);
                for a in 0..4 {
                    for b in 0..4 {
                        for c in 0..4 {
                            for d in 0..4 {
                                let p = [a, b, c, d];
                                if (0..4).all(|i| p.contains(&i)) {
                                    out.push(p);
                                }
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

impl FromStr for TwirlGroup {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cyclic" => Ok(TwirlGroup::Cyclic),
            "full" => Ok(TwirlGroup::Full),
            other => Err(Error::parse(format!("unknown twirl group {other:?}"))),
        }
    }
}

/// Averages every weight over the orbit of its error under `group`.
pub fn twirl(so: &StabilizerSuperoperator, group: &[[usize; 4]]) -> Result<StabilizerSuperoperator> {
    if group.is_empty() {
        return Err(Error::contract("empty twirl group"));
    }
    if let Some(p) = group.iter().find(|p| !(0..4).all(|i| p.contains(&i))) {
        return Err(Error::contract(format!("{p:?} is not a permutation of the four cells")));
    }
    let share = 1.0 / group.len() as f64;
    let mut entries: BTreeMap<(PauliString, Projection), f64> = BTreeMap::new();
    for ((e, proj), w) in &so.entries {
        for perm in group {
            *entries.entry((e.permuted(perm), *proj)).or_insert(0.0) += w * share;
        }
    }
    Ok(StabilizerSuperoperator { entries, ..so.clone() })
}

/// Data-error classes of weight at most two, named for a Z-type stabilizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorClass {
    I,
    Z,
    X,
    Y,
    ZZ,
    XX,
    YY,
    XZ,
    YZ,
    XY,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 10] = [
        ErrorClass::I,
        ErrorClass::Z,
        ErrorClass::X,
        ErrorClass::Y,
        ErrorClass::ZZ,
        ErrorClass::XX,
        ErrorClass::YY,
        ErrorClass::XZ,
        ErrorClass::YZ,
        ErrorClass::XY,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ErrorClass::I => "I",
            ErrorClass::Z => "Z",
            ErrorClass::X => "X",
            ErrorClass::Y => "Y",
            ErrorClass::ZZ => "ZZ",
            ErrorClass::XX => "XX",
            ErrorClass::YY => "YY",
            ErrorClass::XZ => "XZ",
            ErrorClass::YZ => "YZ",
            ErrorClass::XY => "XY",
        }
    }

    /// The same class seen from an X-type stabilizer (X and Z swapped).
    pub fn dual(self) -> ErrorClass {
        match self {
            ErrorClass::Z => ErrorClass::X,
            ErrorClass::X => ErrorClass::Z,
            ErrorClass::ZZ => ErrorClass::XX,
            ErrorClass::XX => ErrorClass::ZZ,
            ErrorClass::YZ => ErrorClass::XY,
            ErrorClass::XY => ErrorClass::YZ,
            other => other,
        }
    }

    /// Label in the naming of a `basis`-type stabilizer.
    pub fn label_in(self, basis: Basis) -> &'static str {
        match basis {
            Basis::Z => self.label(),
            Basis::X => self.dual().label(),
        }
    }

    /// Class of a four-qubit error, or `None` above weight two.
    pub fn of(e: &PauliString) -> Option<ErrorClass> {
        let mut letters: Vec<Pauli> = e.letters().filter(|&l| l != Pauli::I).collect();
        letters.sort_by_key(|l| l.as_char());
        Some(match letters.as_slice() {
            [] => ErrorClass::I,
            [Pauli::X] => ErrorClass::X,
            [Pauli::Y] => ErrorClass::Y,
            [Pauli::Z] => ErrorClass::Z,
            [Pauli::X, Pauli::X] => ErrorClass::XX,
            [Pauli::Y, Pauli::Y] => ErrorClass::YY,
            [Pauli::Z, Pauli::Z] => ErrorClass::ZZ,
            [Pauli::X, Pauli::Z] => ErrorClass::XZ,
            [Pauli::Y, Pauli::Z] => ErrorClass::YZ,
            [Pauli::X, Pauli::Y] => ErrorClass::XY,
            _ => return None,
        })
    }

    pub(super) fn from_label(s: &str) -> Option<ErrorClass> {
        ErrorClass::ALL.into_iter().find(|c| c.label() == s)
    }
}

/// Class totals `A_*` (correct projection) and `B_*` (incorrect), keyed by
/// the Z-stabilizer naming. Weight-3 and weight-4 errors go to a remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    pub basis: Basis,
    classes: BTreeMap<(Projection, ErrorClass), f64>,
    remainder: [f64; 2],
}

impl WeightTable {
    pub fn get(&self, projection: Projection, class: ErrorClass) -> f64 {
        self.classes.get(&(projection, class)).copied().unwrap_or(0.0)
    }

    pub fn a(&self, class: ErrorClass) -> f64 {
        self.get(Projection::Correct, class)
    }

    pub fn b(&self, class: ErrorClass) -> f64 {
        self.get(Projection::Incorrect, class)
    }

    pub fn remainder(&self, projection: Projection) -> f64 {
        self.remainder[projection as usize]
    }

    pub fn total(&self) -> f64 {
        self.classes.values().sum::<f64>() + self.remainder.iter().sum::<f64>()
    }

    /// Label such as `A_ZZ` in this table's basis naming.
    pub fn label(&self, projection: Projection, class: ErrorClass) -> String {
        format!("{}_{}", prefix(projection), class.label_in(self.basis))
    }

    /// `(label, weight)` for all twenty classes, A before B.
    pub fn rows(&self) -> Vec<(String, f64)> {
        [Projection::Correct, Projection::Incorrect]
            .into_iter()
            .flat_map(|p| ErrorClass::ALL.into_iter().map(move |c| (p, c)))
            .map(|(p, c)| (self.label(p, c), self.get(p, c)))
            .collect()
    }
}

pub(super) fn prefix(p: Projection) -> &'static str {
    match p {
        Projection::Correct => "A",
        Projection::Incorrect => "B",
    }
}

/// Sums the weights by error class. Errors are first reduced modulo the
/// measured stabilizer, so `IZZZ` counts as a single `Z`.
pub fn aggregate(so: &StabilizerSuperoperator) -> WeightTable {
    let stabilizer = so.stabilizer();
    let mut classes = BTreeMap::new();
    let mut remainder = [0.0; 2];
    for ((e, proj), w) in &so.entries {
        let e = canonical_error(e, &stabilizer);
        let e = match so.basis {
            Basis::Z => e,
            Basis::X => e.hadamard_all(),
        };
        match ErrorClass::of(&e) {
            Some(c) => *classes.entry((*proj, c)).or_insert(0.0) += w,
            None => remainder[*proj as usize] += w,
        }
    }
    WeightTable { basis: so.basis, classes, remainder }
}

impl fmt::Display for WeightTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, w) in self.rows() {
            writeln!(f, "{label:<5} {w:.6e}")?;
        }
        write!(f, "rest  {:.6e}", self.remainder.iter().sum::<f64>())
    }
}
