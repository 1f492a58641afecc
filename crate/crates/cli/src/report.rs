//! Check reports shared by the verify suites.

use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// One named check with the measured quantity and the bound it was compared to.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    /// Passes when `measured <= bound`.
    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured <= bound,
            measured,
            bound,
            detail: String::new(),
        }
    }

    /// Passes when `measured >= bound`.
    pub fn at_least(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured >= bound,
            measured,
            bound,
            detail: String::new(),
        }
    }

    pub fn flag(name: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed,
            measured: if passed { 1.0 } else { 0.0 },
            bound: 1.0,
            detail: String::new(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// A file produced by a suite, written next to the JSON report.
#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub name: String,
    #[serde(skip)]
    pub contents: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub seed: u64,
    pub wall_seconds: f64,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
    /// Set when the suite aborted before finishing its checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SuiteReport {
    pub fn new(suite: &str, seed: u64) -> Self {
        Self {
            suite: suite.to_string(),
            passed: true,
            seed,
            wall_seconds: 0.0,
            checks: Vec::new(),
            artifacts: Vec::new(),
            error: None,
        }
    }

    pub fn push(&mut self, c: Check) {
        self.passed &= c.passed;
        self.checks.push(c);
    }

    pub fn fail(&mut self, message: String) {
        self.passed = false;
        self.error = Some(message);
    }

    pub fn human(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "verify {} (seed {})", self.suite, self.seed);
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let _ = write!(
                s,
                "  {} {:width$}  measured {:.6e}  bound {:.6e}",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                c.measured,
                c.bound
            );
            if !c.detail.is_empty() {
                let _ = write!(s, "  ({})", c.detail);
            }
            s.push('\n');
        }
        if let Some(e) = &self.error {
            let _ = writeln!(s, "  error: {e}");
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(
            s,
            "{}: {} checks, {} failed, {:.1} s",
            if self.passed { "PASS" } else { "FAIL" },
            self.checks.len(),
            failed,
            self.wall_seconds
        );
        s
    }

    /// Writes `verify_<suite>.json` and the artifacts into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for a in &self.artifacts {
            let p = dir.join(&a.name);
            std::fs::write(&p, &a.contents)?;
            out.push(p);
        }
        let p = dir.join(format!("verify_{}.json", self.suite));
        let mut json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        json.push('\n');
        std::fs::write(&p, json)?;
        out.push(p);
        Ok(out)
    }
}
