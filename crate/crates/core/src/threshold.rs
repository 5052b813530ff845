//! Noise sweeps of the memory experiment and the crossing of the logical
//! error rate curves for two code distances.

use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lattice::{logical_error_rate, CodeLattice, DecodeOptions, Geometry, LatticeNoise, RateEstimate};
use crate::noise::{BellNoise, NoiseParams};
use crate::protocols::ProtocolSpec;
use crate::rng::derive_seed;
use crate::superop::{extract_superoperator, ExtractOptions};

/// Which noise parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// `p_g = p_m = p` at fixed `p_n`.
    Local,
    Network,
}

impl SweepAxis {
    pub fn value(self, noise: &NoiseParams) -> f64 {
        match self {
            SweepAxis::Local => noise.p_g,
            SweepAxis::Network => noise.p_n,
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Local => "local",
            SweepAxis::Network => "network",
        })
    }
}

/// Everything about a sweep except the swept values.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub protocol: ProtocolSpec,
    pub distances: Vec<usize>,
    /// Noisy rounds per sample; `None` means `T = d`.
    pub rounds: Option<usize>,
    pub geometry: Geometry,
    pub samples: usize,
    pub seed: u64,
    pub decode: DecodeOptions,
    pub extract: ExtractOptions,
    /// Fraction of stabilizer measurements that report nothing.
    pub missing: f64,
    pub bell: BellNoise,
}

impl SweepConfig {
    pub fn new(protocol: ProtocolSpec, distances: Vec<usize>, samples: usize, seed: u64) -> Self {
        SweepConfig {
            protocol,
            distances,
            rounds: None,
            geometry: Geometry::Toric,
            samples,
            seed,
            decode: DecodeOptions::default(),
            extract: ExtractOptions::default(),
            missing: 0.0,
            bell: BellNoise::default(),
        }
    }

    pub fn recipe(&self) -> &'static str {
        if self.decode.uniform_weights {
            "uniform"
        } else {
            "marginal"
        }
    }
}

/// One estimated logical error rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub protocol: String,
    pub noise: NoiseParams,
    pub distance: usize,
    pub rounds: usize,
    pub geometry: Geometry,
    pub estimate: RateEstimate,
    /// Seed handed to the sampler for this point.
    pub seed: u64,
    pub recipe: &'static str,
    pub favor: Option<f64>,
    pub missing: f64,
    pub truncated_mass: f64,
    pub budget_exceeded: bool,
}

impl SweepPoint {
    pub fn rate(&self) -> f64 {
        self.estimate.rate
    }

    pub fn stderr(&self) -> f64 {
        self.estimate.stderr
    }
}

/// Sweeps `p_g = p_m = p` over `p_values` at fixed `p_n`.
pub fn sweep_local(cfg: &SweepConfig, p_values: &[f64], p_n: f64) -> Result<Vec<SweepPoint>> {
    let noises = p_values.iter().map(|&p| NoiseParams::local(p, p_n).map(|n| n.with_bell_noise(cfg.bell))).collect::<Result<Vec<_>>>()?;
    sweep(cfg, &noises)
}

/// Sweeps `p_n` over `p_n_values` at fixed `p_g = p_m = p_local`.
pub fn sweep_network(cfg: &SweepConfig, p_n_values: &[f64], p_local: f64) -> Result<Vec<SweepPoint>> {
    let noises = p_n_values.iter().map(|&pn| NoiseParams::local(p_local, pn).map(|n| n.with_bell_noise(cfg.bell))).collect::<Result<Vec<_>>>()?;
    sweep(cfg, &noises)
}

/// One point per `(noise, distance)`; each is seeded from its own
/// parameters, so any point can be rerun alone.
pub fn sweep(cfg: &SweepConfig, noises: &[NoiseParams]) -> Result<Vec<SweepPoint>> {
    if noises.is_empty() || cfg.distances.is_empty() {
        return Err(Error::contract("a sweep needs at least one noise value and one distance"));
    }
    let mut points = Vec::with_capacity(noises.len() * cfg.distances.len());
    for noise in noises {
        let ex = extract_superoperator(&cfg.protocol, noise, &cfg.extract)?;
        let lattice_noise = LatticeNoise::from_extraction(&ex)?.with_missing(cfg.missing)?;
        for &d in &cfg.distances {
            let rounds = cfg.rounds.unwrap_or(d);
            let lattice = CodeLattice::new(d, rounds, cfg.geometry)?;
            let seed = point_seed(cfg.seed, noise, d, rounds);
            let estimate = logical_error_rate(&lattice, &lattice_noise, cfg.samples, seed, cfg.decode)?;
            points.push(SweepPoint {
                protocol: cfg.protocol.name.clone(),
                noise: *noise,
                distance: d,
                rounds,
                geometry: cfg.geometry,
                estimate,
                seed,
                recipe: cfg.recipe(),
                favor: cfg.decode.favor,
                missing: cfg.missing,
                truncated_mass: ex.truncated_mass,
                budget_exceeded: ex.budget_exceeded,
            });
        }
    }
    Ok(points)
}

/// Sampler seed of one sweep point.
pub fn point_seed(seed: u64, noise: &NoiseParams, distance: usize, rounds: usize) -> u64 {
    let key = noise.p_g.to_bits()
        ^ noise.p_m.to_bits().rotate_left(16)
        ^ noise.p_n.to_bits().rotate_left(32)
        ^ (distance as u64).rotate_left(48)
        ^ (rounds as u64).rotate_left(56);
    derive_seed(seed, key)
}

/// Outcome of [`find_crossing`].
#[derive(Debug, Clone, PartialEq)]
pub enum CrossingResult {
    /// The crossing lies between these two swept values.
    Interval(f64, f64),
    Unresolved(String),
}

impl CrossingResult {
    pub fn interval(&self) -> Option<(f64, f64)> {
        match self {
            CrossingResult::Interval(lo, hi) => Some((*lo, *hi)),
            CrossingResult::Unresolved(_) => None,
        }
    }

    /// True when a resolved interval lies inside `[lo, hi]`.
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.interval().is_some_and(|(a, b)| a >= lo && b <= hi)
    }
}

impl fmt::Display for CrossingResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrossingResult::Interval(lo, hi) => write!(f, "crossing between {} and {}", sci(*lo), sci(*hi)),
            CrossingResult::Unresolved(why) => write!(f, "unresolved: {why}"),
        }
    }
}

/// Significance gate on the rate difference between the two distances.
pub const CROSSING_SIGMA: f64 = 2.0;

/// Compares the smallest and largest distance at every swept value. The
/// crossing lies between the last value where the larger code is better by
/// at least 2σ and the first where it is worse by at least 2σ.
pub fn find_crossing(points: &[SweepPoint], axis: SweepAxis) -> Result<CrossingResult> {
    let mut pts: Vec<&SweepPoint> = Vec::new();
    for p in points {
        let x = axis.value(&p.noise);
        match pts.iter().find(|q| axis.value(&q.noise) == x && q.distance == p.distance) {
            Some(q) if q.estimate == p.estimate => {}
            Some(_) => {
                return Err(Error::contract(format!("conflicting estimates for d = {} at {}", p.distance, sci(x))));
            }
            None => pts.push(p),
        }
    }
    let (Some(small), Some(large)) = (pts.iter().map(|p| p.distance).min(), pts.iter().map(|p| p.distance).max())
    else {
        return Ok(CrossingResult::Unresolved("no points".into()));
    };
    if small == large {
        return Ok(CrossingResult::Unresolved("need two distances".into()));
    }
    let mut xs: Vec<f64> = pts.iter().map(|p| axis.value(&p.noise)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut better = Vec::new();
    let mut worse = Vec::new();
    for &x in &xs {
        let at = |d| pts.iter().find(|p| p.distance == d && axis.value(&p.noise) == x);
        let (Some(s), Some(l)) = (at(small), at(large)) else { continue };
        let diff = l.rate() - s.rate();
        let sigma = l.stderr().hypot(s.stderr());
        if diff < -CROSSING_SIGMA * sigma {
            better.push(x);
        } else if diff > CROSSING_SIGMA * sigma {
            worse.push(x);
        }
    }
    let result = match (better.last(), worse.first()) {
        (None, None) => CrossingResult::Unresolved("no value separates the distances by 2σ".into()),
        (Some(_), None) => CrossingResult::Unresolved("larger distance better at every resolved value".into()),
        (None, Some(_)) => CrossingResult::Unresolved("larger distance worse at every resolved value".into()),
        (Some(&lo), Some(&hi)) if lo < hi => CrossingResult::Interval(lo, hi),
        (Some(&lo), Some(&hi)) => {
            CrossingResult::Unresolved(format!("scaling not monotone: better at {}, worse at {}", sci(lo), sci(hi)))
        }
    };
    Ok(result)
}

/// Scientific notation with 12 significant digits.
pub fn sci(x: f64) -> String {
    format!("{x:.11e}")
}

pub const CSV_HEADER: &str =
    "protocol,geometry,d,T,p_g,p_m,p_n,samples,failures,rate,stderr,seed,recipe,favor,missing,truncated_mass";

/// One row per point under [`CSV_HEADER`].
pub fn points_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        let favor = p.favor.map(sci).unwrap_or_else(|| "none".into());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.protocol,
            p.geometry,
            p.distance,
            p.rounds,
            sci(p.noise.p_g),
            sci(p.noise.p_m),
            sci(p.noise.p_n),
            p.estimate.samples,
            p.estimate.failures,
            sci(p.rate()),
            sci(p.stderr()),
            p.seed,
            p.recipe,
            favor,
            sci(p.missing),
            sci(p.truncated_mass),
        );
    }
    out
}

/// Rate table by swept value and distance, then the crossing.
pub fn summary(points: &[SweepPoint], axis: SweepAxis, crossing: &CrossingResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{axis} sweep");
    for p in points {
        let _ = writeln!(
            out,
            "{} = {}  d = {}  rate = {} +- {}",
            match axis {
                SweepAxis::Local => "p",
                SweepAxis::Network => "p_n",
            },
            sci(axis.value(&p.noise)),
            p.distance,
            sci(p.rate()),
            sci(p.stderr())
        );
    }
    let _ = writeln!(out, "{crossing}");
    out
}
