//! Completion time of a leveled post-selective protocol.
//!
//! Each level costs a fixed number of time steps. A failed post-selection
//! sends control back to the level's failure-reset level (FRL) while the
//! clock keeps running.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::protocols::ProtocolSpec;
use crate::rng::{stream, SampleRng};
use crate::superop::LevelSuccess;

/// Timing data for one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTiming {
    pub steps: u32,
    /// Success probability of one instance; `None` for a level that always completes.
    pub p_success: Option<f64>,
    /// 1-based level to resume from after a failure.
    pub frl: usize,
    pub parallel_group: Option<u32>,
}

impl LevelTiming {
    pub fn new(steps: u32, p_success: Option<f64>, frl: usize) -> Self {
        LevelTiming { steps, p_success, frl, parallel_group: None }
    }

    pub fn in_group(mut self, group: u32) -> Self {
        self.parallel_group = Some(group);
        self
    }
}

/// How levels sharing a parallel group are timed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParallelMode {
    /// Two instances walk the group independently; the slower one gates the next level.
    #[default]
    Independent,
    /// Two instances, but both must clear each level before either starts the next.
    Lockstep,
    /// Every level is walked once, as a single instance.
    Serial,
}

impl fmt::Display for ParallelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParallelMode::Independent => "independent",
            ParallelMode::Lockstep => "lockstep",
            ParallelMode::Serial => "serial",
        })
    }
}

impl FromStr for ParallelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "independent" | "parallel" => Ok(ParallelMode::Independent),
            "lockstep" => Ok(ParallelMode::Lockstep),
            "serial" => Ok(ParallelMode::Serial),
            other => Err(Error::parse(format!("unknown parallel mode {other:?}"))),
        }
    }
}

/// Builds timings from a protocol and its per-level success probabilities.
pub fn timings(spec: &ProtocolSpec, success: &[LevelSuccess]) -> Result<Vec<LevelTiming>> {
    let mut out = Vec::with_capacity(spec.levels.len());
    for level in &spec.levels {
        let p = if level.postselects() {
            let s = success
                .iter()
                .find(|s| s.index == level.index)
                .ok_or_else(|| Error::contract(format!("no success probability for level {}", level.index)))?;
            Some(s.probability())
        } else {
            None
        };
        out.push(LevelTiming { steps: level.steps, p_success: p, frl: level.frl, parallel_group: level.parallel_group });
    }
    validate(&out)?;
    Ok(out)
}

/// Timings with the published success probabilities of a built-in protocol.
pub fn reference_timings(spec: &ProtocolSpec) -> Result<Vec<LevelTiming>> {
    let reference = spec
        .kind
        .reference_success()
        .ok_or_else(|| Error::contract(format!("no reference success probabilities for {}", spec.name)))?;
    let success: Vec<LevelSuccess> = reference
        .levels
        .iter()
        .map(|&(index, p)| LevelSuccess { index, name: String::new(), per_instance: vec![p] })
        .collect();
    timings(spec, &success)
}

fn validate(levels: &[LevelTiming]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::contract("no levels"));
    }
    for (i, l) in levels.iter().enumerate() {
        if let Some(p) = l.p_success {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::contract(format!("level {} success probability {p} outside (0, 1]", i + 1)));
            }
        }
        if l.frl == 0 || l.frl > i + 1 {
            return Err(Error::contract(format!("level {} resets to level {}", i + 1, l.frl)));
        }
    }
    Ok(())
}

/// `(Σ t_L, Π p_L)`: the shortest completion time and the chance of hitting it
/// counting each level once.
pub fn min_duration(levels: &[LevelTiming]) -> (u64, f64) {
    let t = levels.iter().map(|l| l.steps as u64).sum();
    let p = levels.iter().filter_map(|l| l.p_success).product();
    (t, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DurationStats {
    pub mean: f64,
    /// Order-statistic quantiles at 0.5, 0.95, 0.99 and 0.999.
    pub quantiles: BTreeMap<Quantile, u64>,
    pub min_duration: u64,
    /// Fraction of samples that took exactly `min_duration`.
    pub p_min: f64,
    pub sample_count: usize,
    pub histogram: Vec<(u64, u64)>,
    sorted: Vec<u64>,
}

/// A quantile level in parts per thousand, so it can key a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Quantile(pub u32);

impl Quantile {
    pub const MEDIAN: Quantile = Quantile(500);
    pub const Q95: Quantile = Quantile(950);
    pub const Q99: Quantile = Quantile(990);
    pub const Q999: Quantile = Quantile(999);

    pub fn level(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl DurationStats {
    pub fn from_samples(mut samples: Vec<u64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::contract("no samples"));
        }
        samples.sort_unstable();
        let n = samples.len();
        let mean = samples.iter().map(|&s| s as f64).sum::<f64>() / n as f64;
        let min = samples[0];
        let at_min = samples.iter().take_while(|&&s| s == min).count();
        let mut histogram: Vec<(u64, u64)> = Vec::new();
        for &s in &samples {
            match histogram.last_mut() {
                Some((t, c)) if *t == s => *c += 1,
                _ => histogram.push((s, 1)),
            }
        }
        let mut stats = DurationStats {
            mean,
            quantiles: BTreeMap::new(),
            min_duration: min,
            p_min: at_min as f64 / n as f64,
            sample_count: n,
            histogram,
            sorted: samples,
        };
        for q in [Quantile::MEDIAN, Quantile::Q95, Quantile::Q99, Quantile::Q999] {
            let v = stats.quantile(q.level())?;
            stats.quantiles.insert(q, v);
        }
        Ok(stats)
    }

    /// Smallest sampled duration `t` with at least a fraction `q` of samples `≤ t`.
    pub fn quantile(&self, q: f64) -> Result<u64> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::QuantileOutOfRange(q));
        }
        let n = self.sorted.len();
        let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
        Ok(self.sorted[rank - 1])
    }

    pub fn median(&self) -> u64 {
        self.quantiles[&Quantile::MEDIAN]
    }

    pub fn samples(&self) -> &[u64] {
        &self.sorted
    }

    /// Histogram as CSV with columns `steps,count`.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("steps,count\n");
        for (t, c) in &self.histogram {
            out.push_str(&format!("{t},{c}\n"));
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "samples = {}\nmin_duration = {}\np_min = {:.6}\nmean = {:.4}\n",
            self.sample_count, self.min_duration, self.p_min, self.mean
        );
        for (q, v) in &self.quantiles {
            out.push_str(&format!("q{} = {}\n", q.level(), v));
        }
        out
    }
}

/// The duration by which a fraction `completion_target` of runs finished.
pub fn sheet_time(stats: &DurationStats, completion_target: f64) -> Result<u64> {
    stats.quantile(completion_target)
}

/// Samples `samples` completion times; sample `i` uses stream `(seed, i)`.
pub fn simulate_duration(levels: &[LevelTiming], samples: usize, seed: u64, mode: ParallelMode) -> Result<DurationStats> {
    validate(levels)?;
    if samples == 0 {
        return Err(Error::contract("samples must be at least 1"));
    }
    let durations: Vec<u64> =
        (0..samples as u64).into_par_iter().map(|i| sample_duration(levels, mode, &mut stream(seed, i))).collect();
    DurationStats::from_samples(durations)
}

/// One completion time.
pub fn sample_duration(levels: &[LevelTiming], mode: ParallelMode, rng: &mut SampleRng) -> u64 {
    let mut clock = 0u64;
    let mut at = 0usize;
    while at < levels.len() {
        let group = match mode {
            ParallelMode::Serial => None,
            _ => levels[at].parallel_group,
        };
        let Some(g) = group else {
            clock += levels[at].steps as u64;
            at = if passes(&levels[at], rng) { at + 1 } else { levels[at].frl - 1 };
            continue;
        };
        let end = (at..levels.len()).find(|&j| levels[j].parallel_group != Some(g)).unwrap_or(levels.len());
        let start = (0..=at).rev().take_while(|&j| levels[j].parallel_group == Some(g)).last().unwrap_or(at);
        let outcome = match mode {
            ParallelMode::Lockstep => lockstep_block(levels, start, at, end, rng),
            _ => independent_block(levels, start, at, end, rng),
        };
        match outcome {
            Ok(t) => {
                clock += t;
                at = end;
            }
            Err((t, to)) => {
                clock += t;
                at = to;
            }
        }
    }
    clock
}

type BlockOutcome = std::result::Result<u64, (u64, usize)>;

fn independent_block(levels: &[LevelTiming], start: usize, from: usize, end: usize, rng: &mut SampleRng) -> BlockOutcome {
    let a = walk_block(levels, start, from, end, rng);
    let b = walk_block(levels, start, from, end, rng);
    match (a, b) {
        (Ok(ta), Ok(tb)) => Ok(ta.max(tb)),
        (Err(e), Ok(_)) | (Ok(_), Err(e)) => Err(e),
        (Err(ea), Err(eb)) => Err(if ea.0 <= eb.0 { ea } else { eb }),
    }
}

fn lockstep_block(levels: &[LevelTiming], start: usize, from: usize, end: usize, rng: &mut SampleRng) -> BlockOutcome {
    let mut clock = 0u64;
    for level in from..end {
        let mut slowest = 0u64;
        for _ in 0..2 {
            match walk_block(levels, start, level, level + 1, rng) {
                Ok(t) => slowest = slowest.max(t),
                Err((t, to)) => return Err((clock + t, to)),
            }
        }
        clock += slowest;
    }
    Ok(clock)
}

/// One instance walking levels `from..end` of a group that begins at `start`.
/// Resets inside the group stay local; a reset to before `start` aborts with
/// its time and target.
fn walk_block(levels: &[LevelTiming], start: usize, from: usize, end: usize, rng: &mut SampleRng) -> BlockOutcome {
    let mut clock = 0u64;
    let mut at = from;
    while at < end {
        clock += levels[at].steps as u64;
        if passes(&levels[at], rng) {
            at += 1;
        } else {
            at = levels[at].frl - 1;
            if at < start {
                return Err((clock, at));
            }
        }
    }
    Ok(clock)
}

fn passes(level: &LevelTiming, rng: &mut SampleRng) -> bool {
    match level.p_success {
        None => true,
        Some(p) => rng.gen::<f64>() < p,
    }
}

/// Decay rate per second for a memory where a fraction `1/e` survives `lifetime` seconds.
pub fn decay_rate_from_lifetime(lifetime: f64) -> Result<f64> {
    if !(lifetime > 0.0) {
        return Err(Error::contract(format!("lifetime {lifetime} must be positive")));
    }
    Ok(1.0 / lifetime)
}

/// Probability that a stored qubit decays within `duration` seconds.
pub fn memory_error(decay_rate: f64, duration: f64) -> Result<f64> {
    if decay_rate < 0.0 || duration < 0.0 {
        return Err(Error::contract("decay rate and duration must be non-negative"));
    }
    Ok(-(-decay_rate * duration).exp_m1())
}
