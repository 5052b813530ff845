//! The three noise sources: local gates, measurement/initialization, and the
//! network's raw Bell pairs. All are Pauli channels.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pauli::{Pauli, PauliChannel, PauliString};

/// Error rates driving one simulation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Two-qubit gate error rate.
    pub p_g: f64,
    /// Measurement and initialization error rate.
    pub p_m: f64,
    /// Raw network Bell-pair error rate.
    pub p_n: f64,
    pub bell: BellNoise,
}

impl NoiseParams {
    pub fn new(p_g: f64, p_m: f64, p_n: f64) -> Result<Self> {
        let params = NoiseParams { p_g, p_m, p_n, bell: BellNoise::Werner };
        params.validate()?;
        Ok(params)
    }

    /// Equal local rates `p_g = p_m = p_local`.
    pub fn local(p_local: f64, p_n: f64) -> Result<Self> {
        Self::new(p_local, p_local, p_n)
    }

    pub fn noiseless() -> Self {
        NoiseParams { p_g: 0.0, p_m: 0.0, p_n: 0.0, bell: BellNoise::Werner }
    }

    pub fn with_bell_noise(mut self, bell: BellNoise) -> Self {
        self.bell = bell;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p_g", self.p_g), ("p_m", self.p_m), ("p_n", self.p_n)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::contract(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Convention for the error left on a raw Bell pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BellNoise {
    /// Uniform split over the three non-identity Bell states.
    #[default]
    Werner,
    /// Phase flips only.
    Dephasing,
}

impl fmt::Display for BellNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BellNoise::Werner => "werner",
            BellNoise::Dephasing => "dephasing",
        })
    }
}

impl FromStr for BellNoise {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "werner" => Ok(BellNoise::Werner),
            "dephasing" => Ok(BellNoise::Dephasing),
            other => Err(Error::parse(format!("unknown Bell-noise convention {other:?}"))),
        }
    }
}

/// Depolarizing channel on `arity` qubits: each of the `4^arity - 1`
/// non-identity Paulis with probability `p_g / (4^arity - 1)`.
pub fn gate_channel(p_g: f64, arity: usize) -> Result<PauliChannel> {
    if !(1..=2).contains(&arity) {
        return Err(Error::contract(format!("gate arity {arity} not in {{1, 2}}")));
    }
    if p_g == 0.0 {
        return Ok(vec![(PauliString::identity(arity), 1.0)]);
    }
    let terms = 4usize.pow(arity as u32) - 1;
    let each = p_g / terms as f64;
    let mut out = vec![(PauliString::identity(arity), 1.0 - p_g)];
    for code in 1..=terms {
        let letters: Vec<Pauli> = (0..arity).map(|q| Pauli::ALL[(code >> (2 * q)) & 3]).collect();
        out.push((PauliString::from_letters(&letters), each));
    }
    Ok(out)
}

/// Probability a measurement reports the wrong outcome. Initialization uses
/// the same rate as a flip orthogonal to the prepared state.
pub fn measurement_flip_prob(p_m: f64) -> f64 {
    p_m
}

/// Error channel on a perfect Bell pair `(a, b)` as two-qubit strings.
pub fn raw_bell_channel(p_n: f64) -> PauliChannel {
    raw_bell_channel_with(p_n, BellNoise::Werner)
}

pub fn raw_bell_channel_with(p_n: f64, convention: BellNoise) -> PauliChannel {
    if p_n == 0.0 {
        return vec![(PauliString::identity(2), 1.0)];
    }
    let on_first = |l| PauliString::from_letters(&[l, Pauli::I]);
    match convention {
        BellNoise::Werner => vec![
            (PauliString::identity(2), 1.0 - p_n),
            (on_first(Pauli::X), p_n / 3.0),
            (on_first(Pauli::Y), p_n / 3.0),
            (on_first(Pauli::Z), p_n / 3.0),
        ],
        BellNoise::Dephasing => vec![(PauliString::identity(2), 1.0 - p_n), (on_first(Pauli::Z), p_n)],
    }
}

/// Single-qubit flip channel `{I: 1-p, letter: p}`.
pub fn flip_channel(p: f64, letter: Pauli) -> PauliChannel {
    if p == 0.0 {
        return vec![(PauliString::identity(1), 1.0)];
    }
    vec![(PauliString::identity(1), 1.0 - p), (PauliString::single(1, 0, letter), p)]
}

/// Places a channel given on `k` qubits onto `qubits` of an `n`-qubit register.
pub fn embed_channel(channel: &[(PauliString, f64)], n: usize, qubits: &[usize]) -> PauliChannel {
    channel.iter().map(|(p, w)| (p.embed(n, qubits), *w)).collect()
}
