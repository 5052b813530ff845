//! Bookkeeping for the acceptance run: one verdict line per criterion.

use std::time::Instant;

/// One checked quantity inside a criterion.
#[derive(Debug, Clone)]
pub struct Check {
    pub what: String,
    pub pass: bool,
}

impl Check {
    /// `value` within `tol` of `target`.
    pub fn near(what: &str, value: f64, target: f64, tol: f64) -> Check {
        Check { what: format!("{what} = {value:.6} (want {target} +- {tol})"), pass: (value - target).abs() <= tol }
    }

    /// `value` within a factor `factor` of `target`.
    pub fn factor(what: &str, value: f64, target: f64, factor: f64) -> Check {
        let pass = value >= target / factor && value <= target * factor;
        Check { what: format!("{what} = {value:.6} (want {target} within x{factor})"), pass }
    }

    pub fn below(what: &str, value: f64, bound: f64) -> Check {
        Check { what: format!("{what} = {value:.3e} (want < {bound:e})"), pass: value < bound }
    }

    pub fn exact<T: PartialEq + std::fmt::Display>(what: &str, value: T, target: T) -> Check {
        let pass = value == target;
        Check { what: format!("{what} = {value} (want {target})"), pass }
    }

    pub fn holds(what: impl Into<String>, pass: bool) -> Check {
        Check { what: what.into(), pass }
    }
}

/// Verdicts of the whole run.
#[derive(Debug, Default)]
pub struct Report {
    verdicts: Vec<(String, bool)>,
}

impl Report {
    /// Runs one criterion, prints its details and a single verdict line.
    pub fn criterion(&mut self, label: &str, body: impl FnOnce() -> Result<Vec<Check>, String>) {
        let start = Instant::now();
        let (pass, details) = match body() {
            Ok(checks) => (checks.iter().all(|c| c.pass), checks),
            Err(e) => (false, vec![Check::holds(format!("error: {e}"), false)]),
        };
        for c in &details {
            println!("    [{}] {}", if c.pass { "ok" } else { "FAIL" }, c.what);
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{label}: {verdict} ({:.1} s)", start.elapsed().as_secs_f64());
        self.verdicts.push((label.to_string(), pass));
    }

    pub fn failures(&self) -> Vec<&str> {
        self.verdicts.iter().filter(|(_, p)| !p).map(|(l, _)| l.as_str()).collect()
    }

    /// Final tally; the verdict lines again, one per criterion.
    pub fn summary(&self) -> String {
        let mut out = String::from("summary\n");
        for (label, pass) in &self.verdicts {
            out.push_str(&format!("{label}: {}\n", if *pass { "PASS" } else { "FAIL" }));
        }
        out
    }
}
