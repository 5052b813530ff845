use netstab::noise::{embed_channel, flip_channel, gate_channel, raw_bell_channel, raw_bell_channel_with};
use netstab::pauli::{anticommutes, conjugate_through};
use netstab::{BellNoise, Gate, GateKind, Pauli, PauliString, SparseErrorDist};
use proptest::prelude::*;

const N: usize = 6;

fn pauli_string() -> impl Strategy<Value = PauliString> {
    (0u64..1 << N, 0u64..1 << N).prop_map(|(x, z)| PauliString::from_masks(N, x, z).unwrap())
}

fn unitary() -> impl Strategy<Value = Gate> {
    (0usize..4, 0..N, 1..N).prop_map(|(k, a, off)| {
        let b = (a + off) % N;
        match k {
            0 => Gate::cnot(a, b),
            1 => Gate::cz(a, b),
            2 => Gate::one(GateKind::H, a),
            _ => Gate::new(GateKind::Swap, &[a, b]).unwrap(),
        }
    })
}

/// Symplectic form computed letter by letter.
fn anticommute_by_letters(a: &PauliString, b: &PauliString) -> bool {
    a.letters().zip(b.letters()).filter(|&(p, q)| p != Pauli::I && q != Pauli::I && p != q).count() % 2 == 1
}

proptest! {
    #[test]
    fn composition_is_a_group(a in pauli_string(), b in pauli_string(), c in pauli_string()) {
        prop_assert_eq!(a.compose(&b).compose(&c), a.compose(&b.compose(&c)));
        prop_assert_eq!(a.compose(&b), b.compose(&a));
        prop_assert!(a.compose(&a).is_identity());
        prop_assert_eq!(a.compose(&PauliString::identity(N)), a);
    }

    #[test]
    fn commutation_matches_letters(a in pauli_string(), b in pauli_string()) {
        prop_assert_eq!(a.anticommutes_with(&b), anticommute_by_letters(&a, &b));
        prop_assert_eq!(anticommutes(&a, &b).unwrap(), a.anticommutes_with(&b));
    }

    #[test]
    fn conjugation_is_an_involution(g in unitary(), p in pauli_string()) {
        let once = conjugate_through(&g, &p).unwrap();
        prop_assert_eq!(conjugate_through(&g, &once).unwrap(), p);
    }

    #[test]
    fn conjugation_preserves_commutation(g in unitary(), a in pauli_string(), b in pauli_string()) {
        let (ga, gb) = (conjugate_through(&g, &a).unwrap(), conjugate_through(&g, &b).unwrap());
        prop_assert_eq!(ga.anticommutes_with(&gb), a.anticommutes_with(&b));
        prop_assert_eq!(conjugate_through(&g, &a.compose(&b)).unwrap(), ga.compose(&gb));
    }

    #[test]
    fn text_round_trips(p in pauli_string()) {
        let text = p.to_string();
        prop_assert_eq!(text.len(), N);
        prop_assert_eq!(text.parse::<PauliString>().unwrap(), p);
    }

    #[test]
    fn hadamard_all_swaps_x_and_z(p in pauli_string()) {
        let h = p.hadamard_all();
        prop_assert_eq!(h.x_mask(), p.z_mask());
        prop_assert_eq!(h.z_mask(), p.x_mask());
        prop_assert_eq!(h.weight(), p.weight());
    }

    #[test]
    fn channels_conserve_mass(ps in prop::collection::vec((pauli_string(), 0.01f64..1.0), 1..20), p in 0.0f64..0.5, eps in 0.0f64..0.05) {
        let total: f64 = ps.iter().map(|(_, w)| w).sum();
        let dist = SparseErrorDist::from_entries(N, ps.into_iter().map(|(e, w)| (e, w / total))).unwrap();
        let channel = embed_channel(&gate_channel(p, 2).unwrap(), N, &[1, 4]);
        let mixed = dist.mix_channel(&channel).unwrap();
        prop_assert!((mixed.mass() - 1.0).abs() < 1e-12);
        let cut = mixed.truncate(eps);
        prop_assert!((cut.mass() + cut.truncated_mass() - 1.0).abs() < 1e-12);
        prop_assert!(cut.entries().iter().all(|&(_, w)| w >= eps));
    }
}

#[test]
fn known_conjugations() {
    let p = |s: &str| s.parse::<PauliString>().unwrap();
    let cnot = Gate::cnot(0, 1);
    assert_eq!(conjugate_through(&cnot, &p("XI")).unwrap(), p("XX"));
    assert_eq!(conjugate_through(&cnot, &p("IZ")).unwrap(), p("ZZ"));
    assert_eq!(conjugate_through(&cnot, &p("ZI")).unwrap(), p("ZI"));
    assert_eq!(conjugate_through(&Gate::cz(0, 1), &p("XI")).unwrap(), p("XZ"));
    assert_eq!(conjugate_through(&Gate::one(GateKind::H, 0), &p("YI")).unwrap(), p("YI"));
    assert!(conjugate_through(&Gate::one(GateKind::MeasZ, 0), &p("XI")).is_err());
    assert!(conjugate_through(&Gate::cnot(0, 5), &p("XI")).is_err());
    assert!(anticommutes(&p("XI"), &p("Z")).is_err());
}

#[test]
fn malformed_strings_are_rejected() {
    assert!("XQZ".parse::<PauliString>().is_err());
    assert!(PauliString::from_masks(3, 0b1000, 0).is_err());
    assert!(Gate::new(GateKind::Cnot, &[1, 1]).is_err());
    assert!(Gate::new(GateKind::H, &[0, 1]).is_err());
    assert!(SparseErrorDist::from_entries(2, [(PauliString::identity(3), 1.0)]).is_err());
    assert!(SparseErrorDist::identity(2).mix_channel(&[(PauliString::identity(2), 0.5)]).is_err());
}

#[test]
fn noise_channels_sum_to_one() {
    for p in [0.0, 0.01, 0.3] {
        for arity in [1, 2] {
            let ch = gate_channel(p, arity).unwrap();
            assert!((ch.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-15);
            if p > 0.0 {
                assert_eq!(ch.len(), 4usize.pow(arity as u32));
                let mut keys: Vec<_> = ch.iter().map(|(e, _)| *e).collect();
                keys.sort();
                keys.dedup();
                assert_eq!(keys.len(), ch.len());
            }
        }
        for ch in [raw_bell_channel(p), raw_bell_channel_with(p, BellNoise::Dephasing), flip_channel(p, Pauli::X)] {
            assert!((ch.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }
    assert!(gate_channel(0.1, 3).is_err());
    let werner = raw_bell_channel(0.3);
    let z = werner.iter().find(|(e, _)| e.to_string() == "ZI").unwrap().1;
    assert!((z - 0.1).abs() < 1e-15);
    assert_eq!("dephasing".parse::<BellNoise>().unwrap(), BellNoise::Dephasing);
    assert!("bitflip".parse::<BellNoise>().is_err());
}
