use std::collections::BTreeMap;

use netstab::protocols::{expedient, monolithic, stringent, stringent_plus, AbortFilterOutcome, Basis};
use netstab::superop::*;
use netstab::{NoiseParams, PauliString, SparseErrorDist};
use proptest::prelude::*;

const FILTER_EPS: f64 = 1e-14;

/// Error on qubit `q` of a `(x, z)` frame, from a 0..16 code over two qubits.
fn two_qubit(code: usize) -> [(u64, u64); 2] {
    let letter = |c: usize| match c & 3 {
        0 => (0, 0),
        1 => (1, 0),
        2 => (1, 1),
        _ => (0, 1),
    };
    [letter(code), letter(code >> 2)]
}

/// Brute force over every fault of the single-ancilla circuit: a prepared
/// ancilla flip, two-qubit depolarizing after each CNOT, a readout flip.
/// Returns weights keyed by data frame modulo ZZZZ and by correct readout.
fn monolithic_oracle(p_g: f64, p_m: f64) -> BTreeMap<((u64, u64), bool), f64> {
    let mut out = BTreeMap::new();
    let gate_p = |c: usize| if c == 0 { 1.0 - p_g } else { p_g / 15.0 };
    for prep in 0..2u64 {
        for faults in 0..16usize.pow(4) {
            for meas in 0..2u64 {
                let mut w = if prep == 1 { p_m } else { 1.0 - p_m };
                w *= if meas == 1 { p_m } else { 1.0 - p_m };
                let (mut x, mut z) = (prep << 4, 0u64);
                for d in 0..4 {
                    let code = (faults >> (4 * d)) & 15;
                    w *= gate_p(code);
                    // CNOT data d -> ancilla 4, then the fault
                    x ^= (x >> d & 1) << 4;
                    z ^= (z >> 4 & 1) << d;
                    let [a, b] = two_qubit(code);
                    x ^= (a.0 << d) | (b.0 << 4);
                    z ^= (a.1 << d) | (b.1 << 4);
                }
                if w == 0.0 {
                    continue;
                }
                let wrong = ((x >> 4) & 1) ^ meas == 1;
                let (dx, dz) = (x & 15, z & 15);
                let key = (dx, dz).min((dx, dz ^ 15));
                *out.entry((key, !wrong)).or_insert(0.0) += w;
            }
        }
    }
    out
}

fn reduced(so: &StabilizerSuperoperator) -> BTreeMap<((u64, u64), bool), f64> {
    let mut out = BTreeMap::new();
    for (e, p, w) in so.entries() {
        let (dx, dz) = (e.x_mask(), e.z_mask());
        let s = so.stabilizer();
        let key = (dx, dz).min((dx ^ s.x_mask(), dz ^ s.z_mask()));
        *out.entry((key, p == Projection::Correct)).or_insert(0.0) += w;
    }
    out
}

fn assert_close(a: &BTreeMap<((u64, u64), bool), f64>, b: &BTreeMap<((u64, u64), bool), f64>, tol: f64) {
    for k in a.keys().chain(b.keys()) {
        let (x, y) = (a.get(k).copied().unwrap_or(0.0), b.get(k).copied().unwrap_or(0.0));
        assert!((x - y).abs() <= tol, "{k:?}: {x} vs {y}");
    }
}

#[test]
fn monolithic_matches_fault_enumeration() {
    for (p_g, p_m) in [(0.0, 0.01), (0.01, 0.0), (0.02, 0.01), (0.1, 0.05)] {
        let noise = NoiseParams::new(p_g, p_m, 0.0).unwrap();
        let ex = extract_superoperator(&monolithic(), &noise, &ExtractOptions { eps: 0.0, ..Default::default() }).unwrap();
        assert_close(&reduced(&ex.superop), &monolithic_oracle(p_g, p_m), 1e-13);
    }
}

#[test]
fn readout_flips_alone() {
    let p = 0.03;
    let ex = extract_superoperator(&monolithic(), &NoiseParams::new(0.0, p, 0.0).unwrap(), &ExtractOptions::default()).unwrap();
    let t = aggregate(&ex.superop);
    assert!((t.a(ErrorClass::I) - ((1.0 - p).powi(2) + p * p)).abs() < 1e-15);
    assert!((t.b(ErrorClass::I) - 2.0 * p * (1.0 - p)).abs() < 1e-15);
    assert_eq!(ex.superop.len(), 2);
}

#[test]
fn noiseless_protocols_are_ideal() {
    for spec in [monolithic(), expedient(), stringent(), stringent_plus()] {
        let ex = extract_superoperator(&spec, &NoiseParams::noiseless(), &ExtractOptions::default()).unwrap();
        assert_eq!(ex.superop.len(), 1, "{}", spec.name);
        assert!((ex.superop.weight(&PauliString::identity(4), Projection::Correct) - 1.0).abs() < 1e-15);
        assert!(ex.success.iter().all(|s| s.per_instance.iter().all(|&p| (p - 1.0).abs() < 1e-15)));
        assert_eq!(ex.truncated_mass, 0.0);
    }
}

#[test]
fn extracted_weights_are_normalized() {
    let noise = NoiseParams::local(0.006, 0.1).unwrap();
    for spec in [expedient(), stringent()] {
        let ex = extract_superoperator(&spec, &noise, &ExtractOptions::default()).unwrap();
        assert!((ex.superop.total() - 1.0).abs() < 1e-14);
        assert!(!ex.budget_exceeded);
        assert!(ex.filter_cases.is_none());
        let t = aggregate(&ex.superop);
        assert!((t.total() - 1.0).abs() < 1e-13, "{}", t.total());
    }
}

#[test]
fn filter_cases_partition_the_mixture() {
    let noise = NoiseParams::local(0.006, 0.1).unwrap();
    let ex = extract_superoperator(&stringent_plus(), &noise, &ExtractOptions { eps: FILTER_EPS, ..Default::default() }).unwrap();
    let cases = ex.filter_cases.as_ref().unwrap();
    assert_eq!(cases.len(), 3);
    let total: f64 = cases.iter().map(|c| c.probability).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for c in cases {
        assert!((c.superop.total() - 1.0).abs() < 1e-12, "{:?}", c.outcome);
    }
    let parts: Vec<_> = cases.iter().map(|c| (c.probability, &c.superop)).collect();
    let mix = StabilizerSuperoperator::mixture(&parts).unwrap();
    for (e, p, w) in mix.entries() {
        assert!((ex.superop.weight(e, p) - w).abs() < 1e-13);
    }
    for outcome in AbortFilterOutcome::ALL {
        assert!(ex.filter_probability(outcome).unwrap() > 0.0);
    }
}

#[test]
fn x_basis_is_the_dual() {
    let noise = NoiseParams::local(0.008, 0.12).unwrap();
    let opts = ExtractOptions::default();
    for spec in [monolithic(), expedient(), stringent()] {
        let z = extract_superoperator(&spec, &noise, &opts).unwrap().superop;
        let x = extract_superoperator(&spec.in_basis(Basis::X).unwrap(), &noise, &opts).unwrap().superop;
        assert_eq!(x.basis, Basis::X);
        assert_close(&reduced(&z.dual()), &reduced(&x), 1e-15);
        let (tz, tx) = (aggregate(&z), aggregate(&x));
        for class in ErrorClass::ALL {
            assert!((tz.a(class) - tx.a(class)).abs() < 1e-15, "{class:?} {} {}", tz.a(class), tx.a(class));
        }
    }
}

#[test]
fn data_parity_does_not_matter() {
    let noise = NoiseParams::local(0.01, 0.1).unwrap();
    let opts = ExtractOptions::default();
    for spec in [monolithic(), expedient()] {
        let even = extract_with_parity(&spec, &noise, &opts, false).unwrap().superop;
        let odd = extract_with_parity(&spec, &noise, &opts, true).unwrap().superop;
        assert_eq!(even.len(), odd.len());
        for (e, p, w) in even.entries() {
            assert!((odd.weight(e, p) - w).abs() < 1e-14, "{} {e}", spec.name);
        }
    }
}

#[test]
fn twirl_is_idempotent_and_symmetric() {
    let noise = NoiseParams::local(0.006, 0.1).unwrap();
    let so = extract_superoperator(&expedient(), &noise, &ExtractOptions::default()).unwrap().superop;
    for group in [TwirlGroup::Cyclic, TwirlGroup::Full] {
        let perms = group.permutations();
        let once = twirl(&so, &perms).unwrap();
        let twice = twirl(&once, &perms).unwrap();
        assert!((once.total() - so.total()).abs() < 1e-14);
        for (e, p, w) in once.entries() {
            assert!((twice.weight(e, p) - w).abs() < 1e-15);
            for perm in &perms {
                assert!((once.weight(&e.permuted(perm), p) - w).abs() < 1e-15);
            }
        }
        let (a, b) = (aggregate(&so), aggregate(&once));
        for class in ErrorClass::ALL {
            assert!((a.a(class) - b.a(class)).abs() < 1e-15);
        }
    }
    assert_eq!(TwirlGroup::Full.permutations().len(), 24);
    assert!(twirl(&so, &[]).is_err());
    assert!(twirl(&so, &[[0, 0, 1, 2]]).is_err());
}

#[test]
fn record_round_trips() {
    let noise = NoiseParams::local(0.0075, 0.1).unwrap();
    for spec in [expedient(), stringent()] {
        let so = extract_superoperator(&spec, &noise, &ExtractOptions::default()).unwrap().superop;
        let text = serialize_superoperator(&so);
        assert_eq!(deserialize_superoperator(&text).unwrap(), so);
        let x = so.dual();
        assert_eq!(deserialize_superoperator(&serialize_superoperator(&x)).unwrap(), x);
    }
}

#[test]
fn malformed_records_are_rejected() {
    let so = StabilizerSuperoperator::ideal(Basis::Z);
    let good = serialize_superoperator(&so);
    assert!(deserialize_superoperator("").is_err());
    assert!(deserialize_superoperator(&good.replacen("superoperator", "matrix", 1)).is_err());
    assert!(deserialize_superoperator(&good.replace("CORRECT", "MAYBE")).is_err());
    assert!(deserialize_superoperator(&good.replace("IIII", "IIIII")).is_err());
    let tampered: String = good.lines().filter(|l| !l.starts_with("class I ") && !l.starts_with("class A_I ")).collect::<Vec<_>>().join("\n");
    let _ = deserialize_superoperator(&tampered);
}

#[test]
fn constructor_rejects_bad_entries() {
    let e = PauliString::identity(4);
    assert!(StabilizerSuperoperator::new(Basis::Z, "T", NoiseParams::noiseless(), [((e, Projection::Correct), -0.1)]).is_err());
    let short = PauliString::identity(3);
    assert!(StabilizerSuperoperator::new(Basis::Z, "T", NoiseParams::noiseless(), [((short, Projection::Correct), 1.0)]).is_err());
    let merged =
        StabilizerSuperoperator::new(Basis::Z, "T", NoiseParams::noiseless(), [((e, Projection::Correct), 0.25), ((e, Projection::Correct), 0.75)]).unwrap();
    assert_eq!(merged.len(), 1);
    assert_eq!(merged.total(), 1.0);
}

#[test]
fn pre_error_flips_projection() {
    let ideal = StabilizerSuperoperator::ideal(Basis::Z);
    let x0: PauliString = "XIII".parse().unwrap();
    let z0: PauliString = "ZIII".parse().unwrap();
    let pre = SparseErrorDist::from_entries(4, [(PauliString::identity(4), 0.7), (x0, 0.2), (z0, 0.1)]).unwrap();
    let so = ideal.after_error(&pre).unwrap();
    assert_eq!(so.weight(&x0, Projection::Incorrect), 0.2);
    assert_eq!(so.weight(&z0, Projection::Correct), 0.1);
    assert_eq!(so.incorrect_probability(), 0.2);
}

#[test]
fn invalid_inputs_are_rejected() {
    let noise = NoiseParams::local(0.006, 0.1).unwrap();
    assert!(extract_superoperator(&expedient(), &noise, &ExtractOptions { eps: -1.0, ..Default::default() }).is_err());
    let mut broken = expedient();
    broken.levels[2].frl = 9;
    assert!(matches!(extract_superoperator(&broken, &noise, &ExtractOptions::default()), Err(netstab::Error::InvalidProtocol(_))));
    assert!(NoiseParams::local(1.5, 0.1).is_err());
    assert!(NoiseParams::new(0.0, -0.1, 0.1).is_err());
}

#[test]
fn success_probabilities_fall_with_noise() {
    let low = success_probabilities(&expedient(), &NoiseParams::local(0.002, 0.05).unwrap()).unwrap();
    let high = success_probabilities(&expedient(), &NoiseParams::local(0.01, 0.2).unwrap()).unwrap();
    assert_eq!(low.len(), high.len());
    for (a, b) in low.iter().zip(&high) {
        assert_eq!(a.index, b.index);
        assert!(a.probability() > b.probability() && b.probability() > 0.0);
        assert!(a.joint() <= a.probability() + 1e-15);
    }
}

#[test]
fn truncation_is_accounted_for() {
    let noise = NoiseParams::local(0.006, 0.1).unwrap();
    let exact = extract_superoperator(&expedient(), &noise, &ExtractOptions { eps: 0.0, ..Default::default() }).unwrap();
    let coarse = extract_superoperator(&expedient(), &noise, &ExtractOptions { eps: 1e-6, ..Default::default() }).unwrap();
    assert_eq!(exact.truncated_mass, 0.0);
    assert!(coarse.truncated_mass > 0.0);
    let tight = ExtractOptions { eps: 1e-6, truncation_budget: 1e-12, ..Default::default() };
    assert!(extract_superoperator(&expedient(), &noise, &tight).unwrap().budget_exceeded);
    let (a, b) = (aggregate(&exact.superop), aggregate(&coarse.superop));
    assert!((a.a(ErrorClass::I) - b.a(ErrorClass::I)).abs() < 10.0 * coarse.truncated_mass + 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn monolithic_weights_match_oracle_everywhere(p_g in 0.0f64..0.2, p_m in 0.0f64..0.2) {
        let noise = NoiseParams::new(p_g, p_m, 0.0).unwrap();
        let ex = extract_superoperator(&monolithic(), &noise, &ExtractOptions { eps: 0.0, ..Default::default() }).unwrap();
        assert_close(&reduced(&ex.superop), &monolithic_oracle(p_g, p_m), 1e-13);
    }

    #[test]
    fn extraction_is_a_distribution(p in 0.0f64..0.02, p_n in 0.0f64..0.3) {
        let noise = NoiseParams::local(p, p_n).unwrap();
        let ex = extract_superoperator(&expedient(), &noise, &ExtractOptions::default()).unwrap();
        prop_assert!((ex.superop.total() - 1.0).abs() < 1e-12);
        prop_assert!(ex.superop.entries().all(|(_, _, w)| w > 0.0));
        prop_assert!(ex.success.iter().all(|s| s.per_instance.iter().all(|&q| q > 0.0 && q <= 1.0 + 1e-12)));
    }
}
