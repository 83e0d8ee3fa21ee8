use serde::Serialize;

/// A single failed check, with the location(s) where it failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: String,
    pub at: Vec<f64>,
    pub detail: String,
}

/// Outcome of a grid-based validation pass. Never an error: callers decide
/// what a failure means for them.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub subject: String,
    pub checks_run: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn new(subject: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            ..Self::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, check: &str) -> bool {
        self.violations.iter().any(|v| v.check == check)
    }

    pub(crate) fn expect(
        &mut self,
        ok: bool,
        check: &str,
        at: &[f64],
        detail: impl FnOnce() -> String,
    ) {
        self.checks_run += 1;
        if !ok {
            self.violations.push(Violation {
                check: check.to_string(),
                at: at.to_vec(),
                detail: detail(),
            });
        }
    }

    /// One line per violation, for logs and error messages.
    pub fn summary(&self) -> String {
        if self.passed() {
            return format!("{}: {} checks passed", self.subject, self.checks_run);
        }
        let mut out = format!(
            "{}: {} of {} checks failed",
            self.subject,
            self.violations.len(),
            self.checks_run
        );
        for v in self.violations.iter().take(8) {
            out.push_str(&format!("\n  {} at {:?}: {}", v.check, v.at, v.detail));
        }
        if self.violations.len() > 8 {
            out.push_str(&format!("\n  ... {} more", self.violations.len() - 8));
        }
        out
    }
}
