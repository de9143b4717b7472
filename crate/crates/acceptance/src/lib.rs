//! Runner for numbered acceptance criteria: each one prints a single
//! PASS/FAIL line and the process fails if any criterion did.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// Detail text on success, reason on failure.
pub type Outcome = Result<String, String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

#[derive(Debug, Default)]
pub struct Suite {
    selected: Vec<u32>,
    failed: Vec<u32>,
    ran: usize,
}

impl Suite {
    /// Numeric command-line arguments pick criteria; none means all.
    pub fn from_args() -> Self {
        let selected = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
        Suite {
            selected,
            ..Suite::default()
        }
    }

    pub fn wants(&self, id: u32) -> bool {
        self.selected.is_empty() || self.selected.contains(&id)
    }

    pub fn run(&mut self, id: u32, name: &str, f: impl FnOnce() -> Outcome) {
        if !self.wants(id) {
            return;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        self.ran += 1;
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} criterion {id:>2}: {name} [{secs:.1} s] {detail}");
        if outcome.is_err() {
            self.failed.push(id);
        }
    }

    /// Prints the tally and exits non-zero on any failure.
    pub fn finish(self) {
        println!(
            "acceptance: {} of {} criteria passed",
            self.ran - self.failed.len(),
            self.ran
        );
        if !self.failed.is_empty() {
            println!("failed: {:?}", self.failed);
            std::process::exit(1);
        }
    }
}
