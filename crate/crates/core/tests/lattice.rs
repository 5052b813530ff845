use netstab::lattice::*;
use netstab::protocols::{expedient, stringent_plus, Basis};
use netstab::rng::stream;
use netstab::superop::{extract_superoperator, ExtractOptions, Projection, StabilizerSuperoperator};
use netstab::{NoiseParams, PauliString};

fn uniform_noise(correct: &[(&str, f64)], incorrect: &[(&str, f64)]) -> LatticeNoise {
    let entries = |basis: Basis| {
        let flip = |s: &str| -> PauliString {
            let e: PauliString = s.parse().unwrap();
            if basis == Basis::X { e.hadamard_all() } else { e }
        };
        let mut v: Vec<((PauliString, Projection), f64)> = Vec::new();
        v.extend(correct.iter().map(|&(s, w)| ((flip(s), Projection::Correct), w)));
        v.extend(incorrect.iter().map(|&(s, w)| ((flip(s), Projection::Incorrect), w)));
        StabilizerSuperoperator::new(basis, "TEST", NoiseParams::noiseless(), v).unwrap()
    };
    LatticeNoise::new(&entries(Basis::Z), &entries(Basis::X)).unwrap()
}

fn ideal() -> LatticeNoise {
    LatticeNoise::new(&StabilizerSuperoperator::ideal(Basis::Z), &StabilizerSuperoperator::ideal(Basis::X)).unwrap()
}

fn extracted(p: f64, p_n: f64) -> LatticeNoise {
    let ex = extract_superoperator(&expedient(), &NoiseParams::local(p, p_n).unwrap(), &ExtractOptions::default()).unwrap();
    LatticeNoise::from_extraction(&ex).unwrap()
}

/// Toric edge indices: `h(i, j)` joins vertices `(i, j)` and `(i, j+1)`.
fn h(d: usize, i: usize, j: usize) -> usize {
    (i % d) * d + j % d
}

#[test]
fn ideal_measurements_produce_no_events() {
    let lattice = CodeLattice::toric(4).unwrap();
    for i in 0..20 {
        let (history, frame) = sample_syndrome_history(&lattice, &ideal(), &mut stream(3, i));
        assert!(history.events(CheckKind::Z).is_empty() && history.events(CheckKind::X).is_empty());
        assert!(frame.is_identity());
    }
    let r = logical_error_rate(&lattice, &ideal(), 200, 3, DecodeOptions::default()).unwrap();
    assert_eq!(r.failures, 0);
}

#[test]
fn always_wrong_outcomes_fire_first_and_last() {
    let noise = uniform_noise(&[], &[("IIII", 1.0)]);
    for rounds in [3, 4] {
        let lattice = CodeLattice::new(3, rounds, Geometry::Toric).unwrap();
        let (history, frame) = sample_syndrome_history(&lattice, &noise, &mut stream(1, 0));
        assert!(frame.is_identity());
        for kind in CheckKind::BOTH {
            let checks = lattice.checks(kind).len();
            // a constant wrong readout differs from the reference only at the ends
            assert_eq!(history.events(kind).len(), checks * 2);
            assert!(history.events(kind).iter().all(|&(_, r)| r == 0 || r == rounds));
        }
        let decoder = Decoder::new(&lattice, EdgeWeights::uniform(&lattice));
        assert!(!decoder.decode(&history, &frame, None).unwrap());
    }
}

#[test]
fn single_error_lights_its_two_checks() {
    for d in [3, 4, 5] {
        let lattice = CodeLattice::toric(d).unwrap();
        for q in 0..lattice.qubits() {
            let mut errors = vec![false; lattice.qubits()];
            errors[q] = true;
            for kind in CheckKind::BOTH {
                let lit: Vec<usize> =
                    lattice.syndrome(kind, &errors).iter().enumerate().filter(|(_, &s)| s).map(|(c, _)| c).collect();
                let mut touching = lattice.touching(kind, q).to_vec();
                touching.sort_unstable();
                assert_eq!(lit, touching);
                assert_eq!(lit.len(), 2);
            }
        }
    }
}

#[test]
fn planar_boundary_qubits_touch_one_check() {
    let lattice = CodeLattice::new(4, 4, Geometry::Planar).unwrap();
    assert_eq!(lattice.qubits(), 16 + 9);
    assert_eq!(lattice.checks(CheckKind::X).len(), 4 * 3);
    assert_eq!(lattice.checks(CheckKind::Z).len(), 3 * 4);
    for kind in CheckKind::BOTH {
        let singles = (0..lattice.qubits()).filter(|&q| lattice.touching(kind, q).len() == 1).count();
        assert_eq!(singles, 2 * 4);
    }
}

#[test]
fn logical_string_is_undetected_but_fails() {
    let d = 4;
    let lattice = CodeLattice::toric(d).unwrap();
    let mut frame = PauliFrame::new(lattice.qubits());
    for i in 0..d {
        frame.x[h(d, i, 0)] = true;
    }
    assert!(lattice.syndrome(CheckKind::Z, &frame.x).iter().all(|&s| !s));
    assert!(lattice.crosses_logical(CheckKind::Z, &frame.x));
    let decoder = Decoder::new(&lattice, EdgeWeights::uniform(&lattice));
    assert!(decoder.decode(&SyndromeHistory::default(), &frame, None).unwrap());
}

#[test]
fn stabilizer_is_not_a_logical() {
    let lattice = CodeLattice::toric(4).unwrap();
    for kind in CheckKind::BOTH {
        let other = match kind {
            CheckKind::Z => CheckKind::X,
            CheckKind::X => CheckKind::Z,
        };
        // a check of the other kind is an operator of the detected type
        for support in lattice.checks(other) {
            let mut errors = vec![false; lattice.qubits()];
            for q in support.iter().flatten() {
                errors[*q] = true;
            }
            assert!(lattice.syndrome(kind, &errors).iter().all(|&s| !s));
            assert!(!lattice.crosses_logical(kind, &errors));
        }
    }
}

#[test]
fn single_error_is_corrected() {
    for geometry in [Geometry::Toric, Geometry::Planar] {
        let lattice = CodeLattice::new(5, 3, geometry).unwrap();
        let decoder = Decoder::new(&lattice, EdgeWeights::uniform(&lattice));
        for q in 0..lattice.qubits() {
            let mut frame = PauliFrame::new(lattice.qubits());
            frame.x[q] = true;
            let mut history = SyndromeHistory::default();
            for c in lattice.touching(CheckKind::Z, q) {
                history.events[0].push((*c, lattice.rounds));
            }
            history.events[0].sort_unstable();
            assert!(!decoder.decode(&history, &frame, None).unwrap(), "{geometry} qubit {q}");
        }
    }
}

#[test]
fn decoding_always_returns_to_codespace() {
    let noise = extracted(0.01, 0.1);
    for geometry in [Geometry::Toric, Geometry::Planar] {
        for d in [3, 4, 5] {
            let lattice = CodeLattice::new(d, d, geometry).unwrap();
            for weights in [false, true] {
                let opts = DecodeOptions { favor: None, uniform_weights: weights };
                let r = logical_error_rate(&lattice, &noise, 300, 5, opts).unwrap();
                assert!(r.rate > 0.0 && r.rate < 1.0);
            }
        }
    }
}

#[test]
fn missing_measurements_still_decode() {
    let noise = extracted(0.006, 0.1).with_missing(0.05).unwrap();
    for geometry in [Geometry::Toric, Geometry::Planar] {
        let lattice = CodeLattice::new(4, 4, geometry).unwrap();
        let (history, _) = sample_syndrome_history(&lattice, &noise, &mut stream(2, 0));
        assert!(!history.missing.is_empty());
        logical_error_rate(&lattice, &noise, 300, 2, DecodeOptions::default()).unwrap();
    }
    assert!(extracted(0.006, 0.1).with_missing(1.0).is_err());
}

#[test]
fn low_noise_scales_down_with_distance() {
    let noise = extracted(0.003, 0.1);
    let r3 = logical_error_rate(&CodeLattice::toric(3).unwrap(), &noise, 3000, 9, DecodeOptions::default()).unwrap();
    let r5 = logical_error_rate(&CodeLattice::toric(5).unwrap(), &noise, 3000, 9, DecodeOptions::default()).unwrap();
    assert!(r5.rate < r3.rate, "{} vs {}", r5.rate, r3.rate);
}

#[test]
fn favor_one_matches_flag_blind_graph() {
    let ex = extract_superoperator(
        &stringent_plus(),
        &NoiseParams::local(0.006, 0.1).unwrap(),
        &ExtractOptions { eps: 1e-14, ..Default::default() },
    )
    .unwrap();
    let noise = LatticeNoise::from_extraction(&ex).unwrap();
    let lattice = CodeLattice::toric(4).unwrap();
    let decoder = Decoder::new(&lattice, EdgeWeights::marginal(&lattice, &noise));
    let mut flagged = 0;
    for i in 0..200 {
        let (history, _) = sample_syndrome_history(&lattice, &noise, &mut stream(4, i));
        flagged += usize::from(!history.flags.is_empty());
        for kind in CheckKind::BOTH {
            let aware = decoder.matching_graph(&history, kind, Some(1.0)).unwrap();
            let blind = decoder.matching_graph(&history, kind, None).unwrap();
            assert_eq!(aware.graph, blind.graph);
        }
    }
    assert!(flagged > 0);
}

#[test]
fn uniform_weights_are_translation_invariant() {
    let d = 5;
    let lattice = CodeLattice::toric(d).unwrap();
    let decoder = Decoder::new(&lattice, EdgeWeights::uniform(&lattice));
    let shift = |c: usize, di: usize, dj: usize| ((c / d + di) % d) * d + (c % d + dj) % d;
    let base = [(0usize, 1usize), (7, 2), (13, 2), (24, 4)];
    let weights = |events: Vec<(usize, usize)>| {
        let mut events = events;
        events.sort_unstable();
        let history = SyndromeHistory { events: [events, Vec::new()], ..Default::default() };
        let g = decoder.matching_graph(&history, CheckKind::Z, None).unwrap();
        let defects = g.defects.clone();
        let mut w = Vec::new();
        for a in 0..defects.len() {
            for b in a + 1..defects.len() {
                w.push(((defects[a], defects[b]), g.graph.edge_weight(a, b)));
            }
        }
        w
    };
    let reference: Vec<f64> = {
        let mut w = weights(base.to_vec());
        w.sort_by(|a, b| a.0.cmp(&b.0));
        w.into_iter().map(|(_, x)| x.unwrap()).collect()
    };
    for (di, dj) in [(1, 0), (0, 1), (2, 3)] {
        let moved: Vec<_> = base.iter().map(|&(c, r)| (shift(c, di, dj), r)).collect();
        let w = weights(moved.clone());
        let lookup = |a: (usize, usize), b: (usize, usize)| {
            w.iter().find(|(k, _)| *k == (a, b) || *k == (b, a)).and_then(|(_, x)| *x).unwrap()
        };
        let mut pairs = Vec::new();
        for a in 0..base.len() {
            for b in a + 1..base.len() {
                pairs.push(((base[a], base[b]), lookup(moved[a], moved[b])));
            }
        }
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        let got: Vec<f64> = pairs.into_iter().map(|(_, x)| x).collect();
        assert_eq!(got, reference);
    }
}

#[test]
fn marginal_weights_are_capped() {
    let lattice = CodeLattice::toric(3).unwrap();
    let w = EdgeWeights::marginal(&lattice, &ideal());
    assert!(w.space.iter().flatten().all(|&x| x == MAX_EDGE_WEIGHT));
    assert_eq!(w.time, [MAX_EDGE_WEIGHT; 2]);
    let w = EdgeWeights::marginal(&lattice, &extracted(0.006, 0.1));
    assert!(w.space.iter().flatten().all(|&x| x > 0.0 && x < MAX_EDGE_WEIGHT));
}

#[test]
fn estimates_do_not_depend_on_worker_count() {
    let noise = extracted(0.008, 0.1);
    let lattice = CodeLattice::new(4, 4, Geometry::Planar).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| logical_error_rate(&lattice, &noise, 400, 11, DecodeOptions::default()).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn paired_comparison_counts_are_consistent() {
    let ex = extract_superoperator(
        &stringent_plus(),
        &NoiseParams::local(0.006, 0.1).unwrap(),
        &ExtractOptions { eps: 1e-14, ..Default::default() },
    )
    .unwrap();
    let noise = LatticeNoise::from_extraction(&ex).unwrap();
    let lattice = CodeLattice::toric(3).unwrap();
    let c = compare_flag_decoding(&lattice, &noise, 500, 6, 0.5).unwrap();
    assert_eq!(c.aware.failures + c.blind_only, c.blind.failures + c.aware_only);
    let aware = logical_error_rate(&lattice, &noise, 500, 6, DecodeOptions { favor: Some(0.5), uniform_weights: false });
    assert_eq!(aware.unwrap(), c.aware);
}

#[test]
fn rejects_bad_lattices() {
    assert!(CodeLattice::new(1, 3, Geometry::Toric).is_err());
    assert!(CodeLattice::new(3, 0, Geometry::Planar).is_err());
    assert!("hexagonal".parse::<Geometry>().is_err());
    assert_eq!("planar".parse::<Geometry>().unwrap(), Geometry::Planar);
}
