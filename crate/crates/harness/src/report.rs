//! Experiment reports: summary statistics, fits, assertions and raw samples.
//!
//! The CSV is a single long-format table so that every experiment shares one
//! schema:
//! `section,config,name,index,value,expected,lower,upper,passed`.
//! Numbers are written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// One asserted comparison with both sides and the accepted interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub observed: f64,
    /// Reference value, when the check compares against one.
    pub expected: Option<f64>,
    pub lower: f64,
    pub upper: f64,
    pub passed: bool,
}

impl Assertion {
    /// Passes when `lower <= observed <= upper`.
    pub fn within(name: impl Into<String>, observed: f64, lower: f64, upper: f64) -> Self {
        Assertion { name: name.into(), observed, expected: None, lower, upper, passed: observed >= lower && observed <= upper }
    }

    /// Passes when `|observed - expected| <= tol`.
    pub fn close(name: impl Into<String>, observed: f64, expected: f64, tol: f64) -> Self {
        let mut a = Self::within(name, observed, expected - tol, expected + tol);
        a.expected = Some(expected);
        a
    }

    /// Passes when `observed <= bound`.
    pub fn at_most(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self::within(name, observed, f64::NEG_INFINITY, bound)
    }

    /// Passes when `observed >= bound`.
    pub fn at_least(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self::within(name, observed, bound, f64::INFINITY)
    }

    /// Exact boolean check recorded as 1 (held) or 0 (violated).
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        let mut a = Self::within(name, if ok { 1.0 } else { 0.0 }, 1.0, 1.0);
        a.expected = Some(1.0);
        a
    }

    pub fn with_expected(mut self, expected: f64) -> Self {
        self.expected = Some(expected);
        self
    }
}

/// A named statistic of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Stat {
    pub config: String,
    pub name: String,
    pub value: f64,
}

/// A fitted scaling exponent with its bootstrap interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub name: String,
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// A raw per-seed sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub config: String,
    pub name: String,
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub experiment: String,
    pub model: String,
    pub stats: Vec<Stat>,
    pub fits: Vec<Fit>,
    pub assertions: Vec<Assertion>,
    pub samples: Vec<Sample>,
    /// Excluded configurations, flagged runs and similar remarks.
    pub notes: Vec<String>,
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Report {
    pub fn new(experiment: &str, model: &str) -> Self {
        Report { experiment: experiment.into(), model: model.into(), ..Default::default() }
    }

    pub fn stat(&mut self, config: impl Into<String>, name: impl Into<String>, value: f64) {
        self.stats.push(Stat { config: config.into(), name: name.into(), value });
    }

    pub fn fit(&mut self, name: impl Into<String>, slope: f64, ci: (f64, f64)) {
        self.fits.push(Fit { name: name.into(), slope, ci_low: ci.0, ci_high: ci.1 });
    }

    pub fn check(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub fn samples(&mut self, config: &str, name: &str, values: &[f64]) {
        for (index, &value) in values.iter().enumerate() {
            self.samples.push(Sample { config: config.into(), name: name.into(), index, value });
        }
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    /// Appends another report's content (used to combine sub-experiments).
    pub fn absorb(&mut self, other: Report) {
        self.stats.extend(other.stats);
        self.fits.extend(other.fits);
        self.assertions.extend(other.assertions);
        self.samples.extend(other.samples);
        self.notes.extend(other.notes);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,config,name,index,value,expected,lower,upper,passed\n");
        for s in &self.stats {
            let _ = writeln!(out, "stat,{},{},,{},,,,", field(&s.config), field(&s.name), num(s.value));
        }
        for f in &self.fits {
            let _ = writeln!(out, "fit,,{},,{},,{},{},", field(&f.name), num(f.slope), num(f.ci_low), num(f.ci_high));
        }
        for a in &self.assertions {
            let _ = writeln!(
                out,
                "assert,,{},,{},{},{},{},{}",
                field(&a.name),
                num(a.observed),
                a.expected.map(num).unwrap_or_default(),
                num(a.lower),
                num(a.upper),
                a.passed
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "note,,{},,,,,,", field(n));
        }
        for s in &self.samples {
            let _ = writeln!(out, "sample,{},{},{},{},,,,", field(&s.config), field(&s.name), s.index, num(s.value));
        }
        out
    }

    /// `{experiment}_{model}_{timestamp}.csv`.
    pub fn file_name(&self) -> String {
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        format!("{}_{}_{ts}.csv", self.experiment, self.model)
    }

    /// Writes the CSV into `dir` and returns its path.
    pub fn write_csv(&self, dir: &Path) -> io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name());
        fs::write(&path, self.to_csv())?;
        Ok(path)
    }

    /// Human-readable summary: fits, assertions and notes.
    pub fn summary(&self) -> String {
        let mut out = format!("{} on {}\n", self.experiment, self.model);
        for f in &self.fits {
            let _ = writeln!(out, "  fit {}: {:.4} (95% CI {:.4} .. {:.4})", f.name, f.slope, f.ci_low, f.ci_high);
        }
        for a in &self.assertions {
            let target = match a.expected {
                Some(e) => format!("target {e:.6e}, "),
                None => String::new(),
            };
            let _ = writeln!(
                out,
                "  [{}] {}: observed {:.6e} ({target}accept [{:.6e}, {:.6e}])",
                if a.passed { "pass" } else { "FAIL" },
                a.name,
                a.observed,
                a.lower,
                a.upper
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "  note: {n}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assertion_kinds() {
        assert!(Assertion::within("a", 0.5, 0.35, 0.65).passed);
        assert!(!Assertion::within("a", 0.7, 0.35, 0.65).passed);
        assert!(Assertion::close("b", 1.05, 1.0, 0.1).passed);
        assert!(!Assertion::at_most("c", 2.0, 1.0).passed);
        assert!(!Assertion::within("nan", f64::NAN, 0.0, 1.0).passed);
        assert!(!Assertion::holds("d", false).passed);
    }

    #[test]
    fn csv_layout() {
        let mut r = Report::new("tracking", "valley");
        r.stat("eta=0.01", "q90", 0.25);
        r.fit("slope", 0.5, (0.4, 0.6));
        r.check(Assertion::within("slope in range", 0.5, 0.35, 0.65));
        r.samples("eta=0.01", "err", &[1.0, 2.0]);
        r.note("a, b");
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[1], "stat,eta=0.01,q90,,2.5000000000000000e-1,,,,");
        assert!(lines[3].ends_with(",true"));
        assert_eq!(lines[4], "note,,\"a, b\",,,,,,");
        assert!(r.file_name().starts_with("tracking_valley_"));
    }
}
