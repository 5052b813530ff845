//! End-to-end acceptance run. Prints one verdict line per criterion and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use netstab::lattice::{compare_flag_decoding, logical_error_rate, CodeLattice, DecodeOptions, Geometry, LatticeNoise};
use netstab::matching::min_weight_perfect_matching;
use netstab::protocols::{expedient, monolithic, stringent, stringent_plus, AbortFilterOutcome, ProtocolSpec};
use netstab::schedule::{
    decay_rate_from_lifetime, memory_error, min_duration, reference_timings, simulate_duration, ParallelMode, Quantile,
};
use netstab::superop::{aggregate, extract_superoperator, serialize_superoperator, success_probabilities, ErrorClass, ExtractOptions};
use netstab::threshold::{find_crossing, points_csv, sweep_local, sweep_network, SweepAxis, SweepConfig};
use netstab::NoiseParams;
use netstab_suite::{Check, Report};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 1;
const LATTICE_SAMPLES: usize = 10_000;
const DURATION_SAMPLES: usize = 100_000;

fn noise(p: f64, p_n: f64) -> NoiseParams {
    NoiseParams::local(p, p_n).expect("valid noise")
}

fn filter_opts() -> ExtractOptions {
    ExtractOptions { eps: 1e-14, ..Default::default() }
}

fn normalization() -> Result<Vec<Check>, String> {
    let cases: [(&str, ProtocolSpec, NoiseParams); 3] = [
        ("EXPEDIENT", expedient(), noise(0.006, 0.1)),
        ("STRINGENT", stringent(), noise(0.0075, 0.1)),
        ("MONOLITHIC", monolithic(), noise(0.009, 0.0)),
    ];
    let mut checks = Vec::new();
    for (name, spec, n) in cases {
        let start = Instant::now();
        let ex = extract_superoperator(&spec, &n, &ExtractOptions::default()).map_err(|e| e.to_string())?;
        checks.push(Check::below(&format!("{name} |sum - 1|"), (ex.superop.total() - 1.0).abs(), 1e-9));
        checks.push(Check::below(&format!("{name} truncated mass"), ex.truncated_mass, 1e-6));
        checks.push(Check::below(&format!("{name} seconds"), start.elapsed().as_secs_f64(), 10.0));
    }
    Ok(checks)
}

fn weight_table() -> Result<Vec<Check>, String> {
    let ex = extract_superoperator(&expedient(), &noise(0.006, 0.1), &ExtractOptions::default()).map_err(|e| e.to_string())?;
    let t = aggregate(&ex.superop);
    let mono = extract_superoperator(&monolithic(), &noise(0.009, 0.0), &ExtractOptions::default()).map_err(|e| e.to_string())?;
    let m = aggregate(&mono.superop);
    Ok(vec![
        Check::near("EXPEDIENT A_I", t.a(ErrorClass::I), 0.9117, 0.01),
        Check::near("EXPEDIENT B_I", t.b(ErrorClass::I), 0.0617, 0.01),
        Check::factor("EXPEDIENT A_Z", t.a(ErrorClass::Z), 0.00681, 1.5),
        Check::factor("EXPEDIENT A_X", t.a(ErrorClass::X), 0.00314, 1.5),
        Check::factor("EXPEDIENT A_Y", t.a(ErrorClass::Y), 0.00314, 1.5),
        Check::near("MONOLITHIC A_I", m.a(ErrorClass::I), 0.951, 0.01),
    ])
}

fn calibration() -> Result<Vec<Check>, String> {
    let mut checks = Vec::new();
    for spec in [expedient(), stringent()] {
        let reference = spec.kind.reference_success().ok_or("no reference")?;
        let computed = success_probabilities(&spec, &noise(reference.p_local, reference.p_n)).map_err(|e| e.to_string())?;
        for &(index, published) in reference.levels {
            let level = computed.iter().find(|l| l.index == index).ok_or(format!("level {index} missing"))?;
            checks.push(Check::near(&format!("{} level {index}", spec.name), level.probability(), published, 0.005));
        }
    }
    Ok(checks)
}

fn durations() -> Result<Vec<Check>, String> {
    let start = Instant::now();
    let mode = ParallelMode::default();
    let mut checks = vec![Check::holds(format!("parallel mode {mode}"), true)];
    let levels = reference_timings(&expedient()).map_err(|e| e.to_string())?;
    let stats = simulate_duration(&levels, DURATION_SAMPLES, SEED, mode).map_err(|e| e.to_string())?;
    let (t_min, p_min) = min_duration(&levels);
    let q = |k| stats.quantiles[&k] as f64;
    checks.extend([
        Check::exact("EXPEDIENT sampled min", stats.min_duration, 33),
        Check::exact("EXPEDIENT min", t_min, 33),
        Check::near("EXPEDIENT P(min)", p_min, 0.2242, 0.004),
        Check::near("EXPEDIENT mean", stats.mean, 68.2, 2.0),
        Check::near("EXPEDIENT median", q(Quantile::MEDIAN), 57.0, 3.0),
        Check::near("EXPEDIENT q95", q(Quantile::Q95), 138.0, 7.0),
        Check::near("EXPEDIENT q99", q(Quantile::Q99), 195.0, 10.0),
        Check::near("EXPEDIENT q999", q(Quantile::Q999), 278.0, 20.0),
    ]);
    let levels = reference_timings(&stringent()).map_err(|e| e.to_string())?;
    let stats = simulate_duration(&levels, DURATION_SAMPLES, SEED, mode).map_err(|e| e.to_string())?;
    let (t_min, p_min) = min_duration(&levels);
    checks.extend([
        Check::exact("STRINGENT sampled min", stats.min_duration, 63),
        Check::exact("STRINGENT min", t_min, 63),
        Check::near("STRINGENT P(min)", p_min, 0.0422, 0.002),
        Check::near("STRINGENT mean", stats.mean, 278.0, 8.0),
        Check::near("STRINGENT q99", stats.quantiles[&Quantile::Q99] as f64, 1067.0, 50.0),
        Check::below("seconds", start.elapsed().as_secs_f64(), 60.0),
    ]);
    Ok(checks)
}

fn memory() -> Result<Vec<Check>, String> {
    let rate = decay_rate_from_lifetime(2.0).map_err(|e| e.to_string())?;
    Ok(vec![
        Check::near("error per second", memory_error(rate, 1.0).map_err(|e| e.to_string())?, 0.393, 0.001),
        Check::near("error over 2 ms", memory_error(rate, 2e-3).map_err(|e| e.to_string())?, 1.0e-3, 0.5e-4),
    ])
}

/// Exhaustive minimum over all perfect matchings of a complete graph.
fn exhaustive(free: &mut Vec<usize>, w: &[Vec<i64>]) -> i64 {
    if free.is_empty() {
        return 0;
    }
    let a = free.remove(0);
    let mut best = i64::MAX;
    for i in 0..free.len() {
        let b = free.remove(i);
        best = best.min(w[a][b] + exhaustive(free, w));
        free.insert(i, b);
    }
    free.insert(0, a);
    best
}

fn decoder() -> Result<Vec<Check>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = 2 * rng.gen_range(1..=4);
        let mut w = vec![vec![0i64; n]; n];
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let x = rng.gen_range(0..1000);
                w[a][b] = x;
                w[b][a] = x;
                edges.push((a, b, x));
            }
        }
        let pairs = min_weight_perfect_matching(n, &edges).map_err(|e| e.to_string())?;
        let total: i64 = pairs.iter().map(|&(a, b)| w[a][b]).sum();
        if total != exhaustive(&mut (0..n).collect(), &w) {
            mismatches += 1;
        }
    }
    let mut checks = vec![Check::exact("blossom vs exhaustive mismatches in 1000", mismatches, 0)];
    // decode returns an error when a correction leaves a syndrome behind
    let ex = extract_superoperator(&expedient(), &noise(0.008, 0.1), &ExtractOptions::default()).map_err(|e| e.to_string())?;
    let lattice_noise = LatticeNoise::from_extraction(&ex).map_err(|e| e.to_string())?;
    for geometry in [Geometry::Toric, Geometry::Planar] {
        for d in [3, 4, 5] {
            let lattice = CodeLattice::new(d, d, geometry).map_err(|e| e.to_string())?;
            let r = logical_error_rate(&lattice, &lattice_noise, 500, SEED, DecodeOptions::default());
            checks.push(Check::holds(format!("{geometry} d = {d}: 500 decoded samples back in codespace"), r.is_ok()));
        }
    }
    Ok(checks)
}

fn sweep_config(spec: ProtocolSpec) -> SweepConfig {
    SweepConfig::new(spec, vec![4, 6], LATTICE_SAMPLES, SEED)
}

fn thresholds() -> Result<Vec<Check>, String> {
    let mut checks = Vec::new();
    let mono = sweep_local(&sweep_config(monolithic()), &[0.008, 0.009, 0.0095, 0.0105], 0.0).map_err(|e| e.to_string())?;
    let exp_local =
        sweep_local(&sweep_config(expedient()), &[0.004, 0.006, 0.008, 0.010, 0.012], 0.1).map_err(|e| e.to_string())?;
    let exp_net =
        sweep_network(&sweep_config(expedient()), &[0.09, 0.095, 0.10, 0.105, 0.11], 0.006).map_err(|e| e.to_string())?;
    for (name, points, axis, lo, hi) in [
        ("monolithic local sweep", &mono, SweepAxis::Local, 0.008, 0.0105),
        ("EXPEDIENT network sweep", &exp_net, SweepAxis::Network, 0.095, 0.105),
        ("EXPEDIENT local sweep", &exp_local, SweepAxis::Local, 0.004, 0.012),
    ] {
        for p in points.iter() {
            println!(
                "      {name}: x = {:.4} d = {} rate = {:.4} +- {:.4}",
                axis.value(&p.noise),
                p.distance,
                p.rate(),
                p.stderr()
            );
        }
        let crossing = find_crossing(points, axis).map_err(|e| e.to_string())?;
        checks.push(Check::holds(format!("{name}: {crossing} (want within [{lo}, {hi}])"), crossing.within(lo, hi)));
    }
    Ok(checks)
}

fn stringent_plus_behaviour() -> Result<Vec<Check>, String> {
    let n = noise(0.006, 0.1);
    let ex = extract_superoperator(&stringent_plus(), &n, &filter_opts()).map_err(|e| e.to_string())?;
    let freq = |o| ex.filter_probability(o).unwrap_or(f64::NAN);
    let mut checks = vec![
        Check::near("pass", freq(AbortFilterOutcome::Pass), 0.92, 0.02),
        Check::near("fail good", freq(AbortFilterOutcome::FailGood), 0.04, 0.02),
        Check::near("fail bad", freq(AbortFilterOutcome::FailBad), 0.04, 0.02),
    ];
    let plain = extract_superoperator(&stringent(), &n, &ExtractOptions::default()).map_err(|e| e.to_string())?;
    let (a_plus, a_plain) = (aggregate(&ex.superop).a(ErrorClass::I), aggregate(&plain.superop).a(ErrorClass::I));
    checks.push(Check::holds(format!("flag-blind A_I {a_plus:.5} <= STRINGENT A_I {a_plain:.5}"), a_plus <= a_plain));
    let lattice_noise = LatticeNoise::from_extraction(&ex).map_err(|e| e.to_string())?;
    let lattice = CodeLattice::toric(4).map_err(|e| e.to_string())?;
    let c = compare_flag_decoding(&lattice, &lattice_noise, LATTICE_SAMPLES, SEED, 0.5).map_err(|e| e.to_string())?;
    checks.push(Check::holds(
        format!(
            "d = 4 paired: aware {:.4} blind {:.4}, z = {:.2} (want aware <= blind, z >= 2)",
            c.aware.rate,
            c.blind.rate,
            c.z_score()
        ),
        c.aware.rate <= c.blind.rate && c.z_score() >= 2.0,
    ));
    Ok(checks)
}

/// Renders a small run of every stochastic stage inside a pool of `threads` workers.
fn rendered(threads: usize) -> Result<String, String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
    pool.install(|| {
        let levels = reference_timings(&expedient()).map_err(|e| e.to_string())?;
        let stats = simulate_duration(&levels, 20_000, 7, ParallelMode::default()).map_err(|e| e.to_string())?;
        let ex = extract_superoperator(&stringent_plus(), &noise(0.006, 0.1), &filter_opts()).map_err(|e| e.to_string())?;
        let mut cfg = sweep_config(expedient());
        cfg.samples = 1000;
        cfg.seed = 7;
        let points = sweep_local(&cfg, &[0.005, 0.009], 0.1).map_err(|e| e.to_string())?;
        Ok(format!("{}{}{}", stats.histogram_csv(), serialize_superoperator(&ex.superop), points_csv(&points)))
    })
}

fn reproducibility() -> Result<Vec<Check>, String> {
    let one = rendered(1)?;
    let again = rendered(1)?;
    let four = rendered(4)?;
    Ok(vec![
        Check::holds("re-run with the same seed is bit-identical", one == again),
        Check::holds("1 and 4 workers are bit-identical", one == four),
    ])
}

/// Flag-aware STRINGENT+ at `p = 0.77%`, `p_n = 0.2`: the larger code should do better.
fn stringent_plus_tolerance() -> Result<Vec<Check>, String> {
    let mut cfg = SweepConfig::new(stringent_plus(), vec![4, 6], LATTICE_SAMPLES, SEED);
    cfg.extract = filter_opts();
    cfg.decode = DecodeOptions { favor: Some(0.5), uniform_weights: false };
    let pts = sweep_local(&cfg, &[0.0077], 0.2).map_err(|e| e.to_string())?;
    let (d4, d6) = (&pts[0], &pts[1]);
    let z = (d4.rate() - d6.rate()) / d4.stderr().hypot(d6.stderr());
    Ok(vec![
        Check::holds(format!("d = 4 rate {:.4} +- {:.4}", d4.rate(), d4.stderr()), true),
        Check::holds(format!("d = 6 rate {:.4} +- {:.4}", d6.rate(), d6.stderr()), true),
        Check::holds(format!("d = 6 below d = 4 by {z:.1} sigma (want >= 2)"), z >= 2.0),
    ])
}

fn main() -> ExitCode {
    let mut report = Report::default();
    report.criterion("criterion 1 (superoperator normalization and truncation)", normalization);
    report.criterion("criterion 2 (weight table reproduction)", weight_table);
    report.criterion("criterion 3 (per-level success calibration)", calibration);
    report.criterion("criterion 4 (duration statistics)", durations);
    report.criterion("criterion 5 (memory arithmetic)", memory);
    report.criterion("criterion 6 (matching oracle and codespace return)", decoder);
    report.criterion("criterion 7 (threshold brackets)", thresholds);
    report.criterion("criterion 8 (STRINGENT+ filter cases and flag-aware decoding)", stringent_plus_behaviour);
    report.criterion("criterion 9 (reproducibility across reruns and worker counts)", reproducibility);
    report.criterion("extra (STRINGENT+ at p_n = 0.2 decreases with distance)", stringent_plus_tolerance);
    print!("{}", report.summary());
    if report.failures().is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
