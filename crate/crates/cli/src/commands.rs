//! The six pipeline stages. Each resolves its defaults back into the
//! settings, so the echo written with the output reproduces the run.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use netstab::lattice::{compare_flag_decoding, CodeLattice, DecodeOptions, Geometry, LatticeNoise, RateEstimate};
use netstab::protocols::{Basis, ProtocolKind, ProtocolSpec};
use netstab::schedule::{
    decay_rate_from_lifetime, memory_error, min_duration, reference_timings, simulate_duration, timings, ParallelMode,
    Quantile,
};
use netstab::superop::{
    aggregate, extract_superoperator, serialize_superoperator, success_probabilities, Extraction, ExtractOptions,
    WeightTable, DEFAULT_EPS,
};
use netstab::threshold::{
    find_crossing, point_seed, points_csv, sci, summary, sweep_local, sweep_network, CrossingResult, SweepAxis,
    SweepConfig, SweepPoint,
};
use netstab::{BellNoise, NoiseParams};

use crate::config::Settings;
use crate::Failure;

/// Largest accepted gap between a computed and a published success probability.
pub const CALIBRATION_TOLERANCE: f64 = 0.005;

/// Truncation threshold for protocols with an abort filter.
const FILTER_EPS: f64 = 1e-14;

pub fn dispatch(name: &str, mut s: Settings) -> Result<(), Failure> {
    s.command = Some(name.to_string());
    s.version = Some(format!("netstab {}", env!("CARGO_PKG_VERSION")));
    match name {
        "extract" => extract(s),
        "calibrate" => calibrate(s),
        "duration" => duration(s),
        "sample" => sample(s),
        "sweep-local" => sweep(s, SweepAxis::Local),
        "sweep-network" => sweep(s, SweepAxis::Network),
        other => Err(Failure::Config(format!("unknown command {other:?}"))),
    }
}

fn parse<T: FromStr<Err = netstab::Error>>(value: &str) -> Result<T, Failure> {
    value.parse().map_err(|e: netstab::Error| Failure::Config(e.to_string()))
}

fn protocol(s: &mut Settings) -> Result<ProtocolSpec, Failure> {
    let spec = match (&s.protocol_file, &s.protocol) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read protocol {}: {e}", path.display())))?;
            ProtocolSpec::from_text(&text)?
        }
        (None, Some(name)) => {
            let kind: ProtocolKind = parse(name)?;
            let spec = kind.builtin().ok_or_else(|| Failure::Config("custom protocols need --protocol-file".into()))?;
            s.protocol = Some(kind.name().to_ascii_lowercase());
            spec
        }
        (None, None) => return Err(Failure::Config("no protocol given (--protocol or --protocol-file)".into())),
    };
    let basis: Basis = parse(s.basis.get_or_insert_with(|| "Z".into()))?;
    Ok(spec.in_basis(basis)?)
}

/// Noise point from the flags, falling back to the protocol's reference point.
fn noise(s: &mut Settings, spec: &ProtocolSpec) -> Result<NoiseParams, Failure> {
    let reference = spec.kind.reference_success().map(|r| (r.p_local, r.p_n));
    let local = s.p.or(reference.map(|r| r.0));
    let (Some(p_g), Some(p_m), Some(p_n)) =
        (s.pg.or(local), s.pm.or(local), s.pn.or(reference.map(|r| r.1)))
    else {
        return Err(Failure::Config("noise point incomplete (--pg, --pm, --pn)".into()));
    };
    let bell: BellNoise = parse(s.bell.get_or_insert_with(|| BellNoise::default().to_string()))?;
    s.p = None;
    (s.pg, s.pm, s.pn) = (Some(p_g), Some(p_m), Some(p_n));
    Ok(NoiseParams::new(p_g, p_m, p_n)?.with_bell_noise(bell))
}

fn extract_options(s: &mut Settings, spec: &ProtocolSpec) -> Result<ExtractOptions, Failure> {
    let default = if spec.filter.is_some() { FILTER_EPS } else { DEFAULT_EPS };
    let eps = *s.eps.get_or_insert(default);
    if !(eps >= 0.0) {
        return Err(Failure::Config(format!("eps {eps} must be non-negative")));
    }
    Ok(ExtractOptions { eps, ..Default::default() })
}

fn seed(s: &Settings) -> Result<u64, Failure> {
    s.seed.ok_or_else(|| Failure::Config(format!("--seed is required for {}", s.command.as_deref().unwrap_or(""))))
}

fn samples(s: &mut Settings, default: usize) -> Result<usize, Failure> {
    match *s.samples.get_or_insert(default) {
        0 => Err(Failure::Config("--samples must be at least 1".into())),
        n => Ok(n),
    }
}

fn write(dir: &Path, file: &str, content: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(file);
    fs::write(&path, content).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Writes `body` to `file` behind the config echo and prints it.
fn report(s: &Settings, file: &str, body: &str) -> Result<(), Failure> {
    print!("{body}");
    write(&s.out_dir(), file, &format!("{}{body}", s.echo()))
}

fn table_lines(out: &mut String, table: &WeightTable) {
    for (label, w) in table.rows() {
        let _ = writeln!(out, "{label} {}", sci(w));
    }
}

fn budget_check(ex: &Extraction, eps: f64) -> Result<(), Failure> {
    if ex.budget_exceeded {
        return Err(Failure::Budget(format!("truncated mass {} at eps {}", sci(ex.truncated_mass), sci(eps))));
    }
    Ok(())
}

fn extract(mut s: Settings) -> Result<(), Failure> {
    let spec = protocol(&mut s)?;
    let noise = noise(&mut s, &spec)?;
    let opts = extract_options(&mut s, &spec)?;
    let ex = extract_superoperator(&spec, &noise, &opts)?;
    let echo = s.echo();
    let dir = s.out_dir();
    write(&dir, "superop.txt", &format!("{echo}{}", serialize_superoperator(&ex.superop)))?;
    let mut body = String::new();
    let _ = writeln!(body, "protocol {}", spec.name);
    let _ = writeln!(body, "truncated_mass {}", sci(ex.truncated_mass));
    for level in &ex.success {
        let _ = writeln!(body, "success {} {}", level.index, sci(level.probability()));
    }
    table_lines(&mut body, &aggregate(&ex.superop));
    for case in ex.filter_cases.iter().flatten() {
        let name = case.outcome.name().to_ascii_lowercase();
        let _ = writeln!(body, "case {} probability {}", case.outcome.name(), sci(case.probability));
        write(&dir, &format!("superop_{name}.txt"), &format!("{echo}{}", serialize_superoperator(&case.superop)))?;
    }
    report(&s, "extract.txt", &body)?;
    budget_check(&ex, opts.eps)
}

fn calibrate(mut s: Settings) -> Result<(), Failure> {
    let spec = protocol(&mut s)?;
    let reference = spec
        .kind
        .reference_success()
        .ok_or_else(|| Failure::Config(format!("no published success probabilities for {}", spec.name)))?;
    let noise = noise(&mut s, &spec)?;
    let computed = success_probabilities(&spec, &noise)?;
    let mut csv = String::from("level,name,computed,published,delta\n");
    let mut body = String::new();
    let mut drift = Vec::new();
    for &(index, published) in reference.levels {
        let Some(level) = computed.iter().find(|l| l.index == index) else {
            return Err(Failure::Runtime(format!("level {index} does not post-select")));
        };
        let p = level.probability();
        let delta = p - published;
        let _ = writeln!(csv, "{index},{},{},{},{}", level.name, sci(p), sci(published), sci(delta));
        let mark = if delta.abs() > CALIBRATION_TOLERANCE { "  DRIFT" } else { "" };
        let _ = writeln!(body, "level {index:>2} {:<28} computed {} published {published:.4} delta {:+.4}{mark}", level.name, sci(p), delta);
        if !mark.is_empty() {
            drift.push(index);
        }
    }
    write(&s.out_dir(), "calibration.csv", &csv)?;
    write(&s.out_dir(), "calibration.toml", &s.echo())?;
    report(&s, "calibration.txt", &body)?;
    if drift.is_empty() {
        Ok(())
    } else {
        Err(Failure::Calibration(format!("levels {drift:?} off by more than {CALIBRATION_TOLERANCE}")))
    }
}

fn duration(mut s: Settings) -> Result<(), Failure> {
    let seed = seed(&s)?;
    let spec = protocol(&mut s)?;
    let samples = samples(&mut s, 100_000)?;
    let mode: ParallelMode = parse(s.parallel_mode.get_or_insert_with(|| ParallelMode::default().to_string()))?;
    let default_source = if spec.kind.reference_success().is_some() { "reference" } else { "computed" };
    let levels = match s.success.get_or_insert_with(|| default_source.into()).as_str() {
        "reference" => reference_timings(&spec)?,
        "computed" => {
            let noise = noise(&mut s, &spec)?;
            timings(&spec, &success_probabilities(&spec, &noise)?)?
        }
        other => return Err(Failure::Config(format!("unknown success source {other:?}"))),
    };
    let stats = simulate_duration(&levels, samples, seed, mode)?;
    let (t_min, p_min) = min_duration(&levels);
    let mut body = String::new();
    let _ = writeln!(body, "protocol {}", spec.name);
    let _ = writeln!(body, "parallel_mode {mode}");
    let _ = writeln!(body, "samples {}", stats.sample_count);
    let _ = writeln!(body, "min_duration {t_min}");
    let _ = writeln!(body, "p_min {}", sci(p_min));
    let _ = writeln!(body, "sampled_min {}", stats.min_duration);
    let _ = writeln!(body, "sampled_p_min {}", sci(stats.p_min));
    let _ = writeln!(body, "mean {}", sci(stats.mean));
    for (q, v) in &stats.quantiles {
        let _ = writeln!(body, "q{} {v}", q.level());
    }
    if let Some(lifetime) = s.lifetime {
        let rate = decay_rate_from_lifetime(lifetime)?;
        let _ = writeln!(body, "decay_rate {}", sci(rate));
        let _ = writeln!(body, "memory_error_per_second {}", sci(memory_error(rate, 1.0)?));
        if let Some(step) = s.step_seconds {
            let q99 = stats.quantiles[&Quantile::Q99] as f64;
            let _ = writeln!(body, "memory_error_mean {}", sci(memory_error(rate, stats.mean * step)?));
            let _ = writeln!(body, "memory_error_q99 {}", sci(memory_error(rate, q99 * step)?));
        }
    }
    write(&s.out_dir(), "duration.csv", &stats.histogram_csv())?;
    write(&s.out_dir(), "duration.toml", &s.echo())?;
    report(&s, "duration.txt", &body)
}

/// Lattice settings shared by `sample` and the sweeps.
fn sweep_config(s: &mut Settings, spec: ProtocolSpec, distances: Vec<usize>) -> Result<SweepConfig, Failure> {
    let seed = seed(s)?;
    let samples = samples(s, 10_000)?;
    let extract = extract_options(s, &spec)?;
    let geometry: Geometry = parse(s.geometry.get_or_insert_with(|| Geometry::default().to_string()))?;
    let uniform_weights = match s.weights.get_or_insert_with(|| "marginal".into()).as_str() {
        "marginal" => false,
        "uniform" => true,
        other => return Err(Failure::Config(format!("unknown weight recipe {other:?}"))),
    };
    let favor = if spec.filter.is_some() { Some(*s.favor.get_or_insert(0.5)) } else { None };
    if favor.is_some_and(|f| !(f > 0.0 && f <= 1.0)) {
        return Err(Failure::Config("--favor must lie in (0, 1]".into()));
    }
    let missing = *s.missing.get_or_insert(0.0);
    let bell: BellNoise = parse(s.bell.get_or_insert_with(|| BellNoise::default().to_string()))?;
    let mut cfg = SweepConfig::new(spec, distances, samples, seed);
    cfg.rounds = s.rounds;
    cfg.geometry = geometry;
    cfg.decode = DecodeOptions { favor, uniform_weights };
    cfg.extract = extract;
    cfg.missing = missing;
    cfg.bell = bell;
    Ok(cfg)
}

fn sample(mut s: Settings) -> Result<(), Failure> {
    let spec = protocol(&mut s)?;
    let noise = noise(&mut s, &spec)?;
    let d = *s.distance.get_or_insert(4);
    let cfg = sweep_config(&mut s, spec, vec![d])?;
    let paired = *s.paired.get_or_insert(false);
    let rounds = cfg.rounds.unwrap_or(d);
    let ex = extract_superoperator(&cfg.protocol, &noise, &cfg.extract)?;
    let lattice_noise = LatticeNoise::from_extraction(&ex)?.with_missing(cfg.missing)?;
    let lattice = CodeLattice::new(d, rounds, cfg.geometry)?;
    let seed = point_seed(cfg.seed, &noise, d, rounds);
    let point = |estimate: RateEstimate, favor: Option<f64>| SweepPoint {
        protocol: cfg.protocol.name.clone(),
        noise,
        distance: d,
        rounds,
        geometry: cfg.geometry,
        estimate,
        seed,
        recipe: cfg.recipe(),
        favor,
        missing: cfg.missing,
        truncated_mass: ex.truncated_mass,
        budget_exceeded: ex.budget_exceeded,
    };
    let mut body = String::new();
    let points = match (paired, cfg.decode.favor) {
        (true, Some(favor)) if !cfg.decode.uniform_weights => {
            let c = compare_flag_decoding(&lattice, &lattice_noise, cfg.samples, seed, favor)?;
            let _ = writeln!(body, "flag_aware_rate {} +- {}", sci(c.aware.rate), sci(c.aware.stderr));
            let _ = writeln!(body, "flag_blind_rate {} +- {}", sci(c.blind.rate), sci(c.blind.stderr));
            let _ = writeln!(body, "blind_only {}", c.blind_only);
            let _ = writeln!(body, "aware_only {}", c.aware_only);
            let _ = writeln!(body, "z_score {}", sci(c.z_score()));
            vec![point(c.aware, Some(favor)), point(c.blind, None)]
        }
        (true, _) => return Err(Failure::Config("--paired needs a protocol with flags and marginal weights".into())),
        (false, favor) => {
            let r = netstab::lattice::logical_error_rate(&lattice, &lattice_noise, cfg.samples, seed, cfg.decode)?;
            let _ = writeln!(body, "rate {} +- {}", sci(r.rate), sci(r.stderr));
            vec![point(r, favor)]
        }
    };
    write(&s.out_dir(), "sample.csv", &points_csv(&points))?;
    write(&s.out_dir(), "sample.toml", &s.echo())?;
    report(&s, "sample.txt", &body)?;
    budget_check(&ex, cfg.extract.eps)
}

fn sweep(mut s: Settings, axis: SweepAxis) -> Result<(), Failure> {
    let spec = protocol(&mut s)?;
    let distances = s.distances.get_or_insert_with(|| vec![4, 6]).clone();
    let cfg = sweep_config(&mut s, spec, distances)?;
    let points = match axis {
        SweepAxis::Local => {
            let values = s.p_values.clone().ok_or_else(|| Failure::Config("--p-values is required".into()))?;
            let p_n = *s.pn.get_or_insert(0.1);
            sweep_local(&cfg, &values, p_n)?
        }
        SweepAxis::Network => {
            let values = s.pn_values.clone().ok_or_else(|| Failure::Config("--pn-values is required".into()))?;
            let p = *s.p.get_or_insert(0.006);
            sweep_network(&cfg, &values, p)?
        }
    };
    let crossing = find_crossing(&points, axis)?;
    write(&s.out_dir(), "sweep.csv", &points_csv(&points))?;
    write(&s.out_dir(), "sweep.toml", &s.echo())?;
    report(&s, "sweep.txt", &summary(&points, axis, &crossing))?;
    if let Some(p) = points.iter().find(|p| p.budget_exceeded) {
        return Err(Failure::Budget(format!("truncated mass {} at {}", sci(p.truncated_mass), sci(axis.value(&p.noise)))));
    }
    match crossing {
        CrossingResult::Interval(..) => Ok(()),
        CrossingResult::Unresolved(why) => Err(Failure::Unresolved(why)),
    }
}
