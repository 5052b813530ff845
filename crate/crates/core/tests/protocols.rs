use netstab::protocols::*;
use netstab::ProtocolKind;

fn builtins() -> Vec<ProtocolSpec> {
    vec![monolithic(), expedient(), stringent(), stringent_plus()]
}

#[test]
fn builtins_are_valid() {
    for spec in builtins() {
        assert!(spec.validate().is_empty(), "{}: {:?}", spec.name, spec.validate());
        assert_eq!(spec.kind.builtin().unwrap(), spec);
        assert_eq!(spec.name, spec.kind.name());
        for (i, level) in spec.levels.iter().enumerate() {
            assert_eq!(level.index, i + 1);
            assert!(level.frl >= 1 && level.frl <= level.index);
        }
    }
    assert!(ProtocolKind::Custom.builtin().is_none());
}

#[test]
fn minimum_step_counts() {
    assert_eq!(expedient().total_steps(), 33);
    assert_eq!(stringent().total_steps(), 63);
    assert_eq!(expedient().levels.len(), 9);
    assert_eq!(stringent().levels.len(), 15);
}

#[test]
fn reference_probabilities_cover_every_postselecting_level() {
    for spec in [expedient(), stringent()] {
        let reference = spec.kind.reference_success().unwrap();
        let postselecting: Vec<usize> = spec.levels.iter().filter(|l| l.postselects()).map(|l| l.index).collect();
        let listed: Vec<usize> = reference.levels.iter().map(|&(i, _)| i).collect();
        assert_eq!(postselecting, listed);
        assert!(reference.levels.iter().all(|&(_, p)| p > 0.0 && p < 1.0));
    }
    assert!(ProtocolKind::Monolithic.reference_success().is_none());
}

#[test]
fn text_form_round_trips() {
    for spec in builtins() {
        let text = spec.to_text();
        let back = ProtocolSpec::from_text(&text).unwrap();
        assert_eq!(back, spec, "{}", spec.name);
        assert_eq!(back.to_text(), text);
    }
}

#[test]
fn basis_change_keeps_structure() {
    for spec in builtins() {
        let x = spec.in_basis(Basis::X).unwrap();
        assert_eq!(x.basis, Basis::X);
        assert!(x.validate().is_empty());
        assert_eq!(x.total_steps(), spec.total_steps());
        assert_eq!(x.levels.len(), spec.levels.len());
        assert_eq!(ProtocolSpec::from_text(&x.to_text()).unwrap(), x);
        assert_eq!(spec.in_basis(Basis::Z).unwrap(), spec);
        assert!(x.in_basis(Basis::Z).is_err());
    }
}

#[test]
fn filter_sits_in_the_final_level() {
    let spec = stringent_plus();
    let filter = spec.filter.as_ref().unwrap();
    assert!(filter.after_gate <= spec.final_level().instances[0].gates.len());
    assert!(!filter.abort_readout.is_empty());
    assert!(expedient().filter.is_none());
}

#[test]
fn validation_catches_broken_specs() {
    let mut spec = expedient();
    spec.levels[3].frl = 7;
    assert!(!spec.validate().is_empty());

    let mut spec = expedient();
    spec.levels[0].instances[0].gates.push(netstab::Gate::cnot(0, 99));
    assert!(!spec.validate().is_empty());

    let mut spec = expedient();
    spec.levels.last_mut().unwrap().instances[0].checks.retain(|c| c.role != CheckRole::Report);
    assert!(!spec.validate().is_empty());
}

#[test]
fn parser_rejects_garbage() {
    assert!(ProtocolSpec::from_text("").is_err());
    assert!(ProtocolSpec::from_text("protocol X\nfrobnicate 3\n").is_err());
    let text = expedient().to_text();
    let cut: String = text.lines().take(text.lines().count() / 2).collect::<Vec<_>>().join("\n");
    assert!(ProtocolSpec::from_text(&cut).is_err());
    assert!("NOPE".parse::<ProtocolKind>().is_err());
    assert_eq!("stringent".parse::<ProtocolKind>().unwrap(), ProtocolKind::Stringent);
}
