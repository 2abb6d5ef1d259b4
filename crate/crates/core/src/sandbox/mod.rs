//! Executes candidate programs against test cases and reports the pass rate
//! `K / N`.
//!
//! Every test runs in its own child process with its own stdin, wall-clock
//! timeout, address-space limit and output cap, so a crash or hang only
//! affects the verdict of that test. A test passes iff the process exits
//! cleanly within limits and its normalized stdout equals the normalized
//! expected output.

mod exec;
mod runner;

pub use exec::{global_worker_cap, WORKERS_ENV};
pub use runner::{RunnerSet, RunnerSpec};

use crate::corpus::{Problem, TestCase};
use crate::policy::{SyntheticProblem, Token};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("runner `{runner}`: executable `{program}` not found")]
    RunnerNotFound { runner: String, program: String },
    #[error("runner `{0}`: invalid command template: {1}")]
    BadRunner(String, String),
    #[error("no test cases to run")]
    NoTests,
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
    #[error("sandbox io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecLimits {
    pub wall_timeout_ms: u64,
    pub memory_limit_bytes: u64,
    pub max_output_bytes: u64,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            wall_timeout_ms: 2000,
            memory_limit_bytes: 512 << 20,
            max_output_bytes: 1 << 20,
        }
    }
}

impl ExecLimits {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if self.wall_timeout_ms == 0 || self.memory_limit_bytes == 0 || self.max_output_bytes == 0 {
            return Err(SandboxError::InvalidLimits(format!(
                "all limits must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestStatus {
    Pass,
    WrongOutput,
    Timeout,
    RuntimeError,
    OutputTruncated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub test_index: usize,
    pub status: TestStatus,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassReport {
    pub verdicts: Vec<TestVerdict>,
    pub passed: usize,
    pub total: usize,
    pub pass_rate: f64,
}

impl PassReport {
    /// Builds a report from per-test verdicts. Errors on an empty list.
    pub fn from_verdicts(verdicts: Vec<TestVerdict>) -> Result<Self, SandboxError> {
        if verdicts.is_empty() {
            return Err(SandboxError::NoTests);
        }
        let passed = verdicts
            .iter()
            .filter(|v| v.status == TestStatus::Pass)
            .count();
        let total = verdicts.len();
        Ok(Self {
            verdicts,
            passed,
            total,
            pass_rate: passed as f64 / total as f64,
        })
    }

    pub fn statuses(&self) -> Vec<TestStatus> {
        self.verdicts.iter().map(|v| v.status).collect()
    }
}

/// Strips trailing whitespace from every line and drops trailing blank lines.
pub fn normalize_output(text: &str) -> String {
    let mut lines: Vec<&str> = text.split('\n').map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

/// Runs `source` against every test of `problem`, using up to the global
/// worker cap in parallel.
pub fn run_solution(
    source: &str,
    problem: &Problem,
    limits: &ExecLimits,
    runner: &RunnerSpec,
) -> Result<PassReport, SandboxError> {
    run_tests(source, &problem.tests, limits, runner, global_worker_cap())
}

/// Like [`run_solution`] with an explicit bound on concurrent test processes.
pub fn run_tests(
    source: &str,
    tests: &[TestCase],
    limits: &ExecLimits,
    runner: &RunnerSpec,
    parallelism: usize,
) -> Result<PassReport, SandboxError> {
    if tests.is_empty() {
        return Err(SandboxError::NoTests);
    }
    limits.validate()?;
    let verdicts = exec::execute(source, tests, limits, runner, parallelism.max(1))?;
    PassReport::from_verdicts(verdicts)
}

/// Scores a token sequence against a synthetic problem: test `j` passes iff
/// token `j` equals target token `j`. Missing positions fail.
pub fn run_synthetic(solution: &[Token], problem: &SyntheticProblem) -> PassReport {
    let verdicts = problem
        .target
        .iter()
        .enumerate()
        .map(|(j, want)| TestVerdict {
            test_index: j,
            status: if solution.get(j) == Some(want) {
                TestStatus::Pass
            } else {
                TestStatus::WrongOutput
            },
            elapsed_ms: 0,
        })
        .collect();
    PassReport::from_verdicts(verdicts).expect("synthetic targets are non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_output("42 \n"), "42");
        assert_eq!(normalize_output("a\nb\n\n\n"), "a\nb");
        assert_eq!(normalize_output("a\r\n b \t\n"), "a\n b");
        assert_eq!(normalize_output("a\nb"), "a\nb");
        assert_eq!(normalize_output(""), "");
        assert_eq!(normalize_output("\n\n"), "");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "[ a-c\t\r\n]{0,40}") {
            let once = normalize_output(&s);
            prop_assert_eq!(normalize_output(&once), once);
        }
    }

    fn synthetic(bits: &[u8]) -> SyntheticProblem {
        SyntheticProblem::new("s", bits.iter().map(|b| Token::bit(*b == 1)).collect())
    }

    #[test]
    fn synthetic_scoring() {
        let bits: Vec<u8> = (0..16).map(|i| (i % 3 == 0) as u8).collect();
        let p = synthetic(&bits);
        let exact = p.target.clone();
        assert_eq!(run_synthetic(&exact, &p).pass_rate, 1.0);

        let mut four_off = exact.clone();
        for j in [1, 5, 9, 13] {
            four_off[j] = Token::bit(four_off[j] == Token::Bit0);
        }
        let r = run_synthetic(&four_off, &p);
        assert_eq!((r.passed, r.total, r.pass_rate), (12, 16, 0.75));

        let r = run_synthetic(&[], &p);
        assert_eq!((r.passed, r.pass_rate), (0, 0.0));

        // a short solution only loses the missing tail
        let r = run_synthetic(&exact[..10], &p);
        assert_eq!(r.passed, 10);
    }

    #[test]
    fn report_requires_tests() {
        assert!(matches!(
            PassReport::from_verdicts(vec![]),
            Err(SandboxError::NoTests)
        ));
    }
}
