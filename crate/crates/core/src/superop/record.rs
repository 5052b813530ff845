//! Portable text record of a superoperator.

use std::fmt::Write as _;

use super::table::{aggregate, prefix, ErrorClass};
use super::{Projection, StabilizerSuperoperator};
use crate::error::{Error, Result};
use crate::noise::{BellNoise, NoiseParams};
use crate::pauli::PauliString;
use crate::protocols::Basis;

/// Writes the portable text record: header, every entry, then class totals.
pub fn serialize_superoperator(so: &StabilizerSuperoperator) -> String {
    let mut s = String::new();
    let n = &so.noise;
    let _ = writeln!(s, "superoperator");
    let _ = writeln!(s, "basis {}", so.basis);
    let _ = writeln!(s, "protocol {}", so.protocol);
    let _ = writeln!(s, "noise p_g {:.16e} p_m {:.16e} p_n {:.16e} bell {}", n.p_g, n.p_m, n.p_n, n.bell);
    for ((e, p), w) in &so.entries {
        let _ = writeln!(s, "entry {e} {} {w:.16e}", p.name());
    }
    let table = aggregate(so);
    for (label, w) in table.rows() {
        let _ = writeln!(s, "class {label} {w:.16e}");
    }
    for p in [Projection::Correct, Projection::Incorrect] {
        let _ = writeln!(s, "remainder {} {:.16e}", prefix(p), table.remainder(p));
    }
    s
}

pub fn deserialize_superoperator(text: &str) -> Result<StabilizerSuperoperator> {
    let mut basis: Option<Basis> = None;
    let mut protocol = None;
    let mut noise = None;
    let mut entries = Vec::new();
    let mut classes = Vec::new();
    let float = |t: Option<&str>, line: usize| -> Result<f64> {
        t.ok_or_else(|| Error::parse(format!("line {line}: missing number")))?
            .parse::<f64>()
            .map_err(|e| Error::parse(format!("line {line}: {e}")))
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, l)) if l.trim() == "superoperator" => {}
        _ => return Err(Error::parse("missing `superoperator` header")),
    }
    for (i, raw) in lines {
        let line = i + 1;
        let mut t = raw.split_whitespace();
        match t.next().unwrap() {
            "basis" => basis = Some(t.next().unwrap_or("").parse()?),
            "protocol" => protocol = Some(t.collect::<Vec<_>>().join(" ")),
            "noise" => {
                let mut vals = [0.0; 3];
                let mut bell = BellNoise::default();
                let mut seen = 0;
                while let Some(key) = t.next() {
                    match key {
                        "p_g" => vals[0] = float(t.next(), line)?,
                        "p_m" => vals[1] = float(t.next(), line)?,
                        "p_n" => vals[2] = float(t.next(), line)?,
                        "bell" => bell = t.next().unwrap_or("").parse()?,
                        other => return Err(Error::parse(format!("line {line}: unknown noise key {other:?}"))),
                    }
                    seen += 1;
                }
                if seen < 3 {
                    return Err(Error::parse(format!("line {line}: incomplete noise parameters")));
                }
                noise = Some(NoiseParams::new(vals[0], vals[1], vals[2])?.with_bell_noise(bell));
            }
            "entry" => {
                let e: PauliString = t.next().unwrap_or("").parse()?;
                let p: Projection = t.next().unwrap_or("").parse()?;
                entries.push(((e, p), float(t.next(), line)?));
            }
            "class" => {
                let label = t.next().unwrap_or("");
                classes.push((line, label.to_string(), float(t.next(), line)?));
            }
            "remainder" => {}
            other => return Err(Error::parse(format!("line {line}: unknown field {other:?}"))),
        }
    }
    let basis = basis.ok_or_else(|| Error::parse("missing basis field"))?;
    let so = StabilizerSuperoperator::new(
        basis,
        protocol.ok_or_else(|| Error::parse("missing protocol field"))?,
        noise.ok_or_else(|| Error::parse("missing noise field"))?,
        entries,
    )
    .map_err(|e| Error::parse(e.to_string()))?;
    let table = aggregate(&so);
    for (line, label, w) in classes {
        let parsed = label.split_once('_').and_then(|(pre, cls)| {
            let proj = match pre {
                "A" => Projection::Correct,
                "B" => Projection::Incorrect,
                _ => return None,
            };
            let class = ErrorClass::from_label(cls)?;
            Some(match basis {
                Basis::Z => (proj, class),
                Basis::X => (proj, class.dual()),
            })
        });
        let (proj, class) = parsed.ok_or_else(|| Error::parse(format!("line {line}: unknown class label {label:?}")))?;
        if (table.get(proj, class) - w).abs() > 1e-12 {
            return Err(Error::parse(format!("line {line}: class {label} disagrees with the entries")));
        }
    }
    Ok(so)
}
