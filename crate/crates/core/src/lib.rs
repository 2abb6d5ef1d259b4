//! Training harness that mixes critique reinforcement learning (CRL) items
//! into a standard verifiable-reward RL schedule and optimizes a policy
//! with GRPO.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: problems, critique examples, test-case filtering, stats and
//!   line-delimited file I/O.
//! - [`sandbox`]: running candidate programs against test cases to get a
//!   pass rate.
//! - [`critique`]: the CRL prompt, output parsers, critique labeling, hybrid
//!   mixing and critique-based best-of-n selection.
//! - [`reward`]: per-item rewards and batch dispatch with phase scaling.
//! - [`grpo`]: group advantages, the clipped surrogate objective and its
//!   gradient.
//! - [`policy`]: a small differentiable autoregressive policy and the
//!   synthetic verifiable environment it is trained on.
//! - [`trainer`]: the end-to-end loop, phase schedule and checkpoint
//!   selection.

pub mod corpus;
pub mod critique;
pub mod grpo;
pub mod optim;
pub mod policy;
pub mod reward;
pub mod sandbox;
pub mod trainer;

mod seed;

pub use corpus::{CorpusStats, CritiqueExample, Judgment, Problem, TestCase};
pub use critique::ParsedJudgment;
pub use sandbox::{ExecLimits, PassReport, RunnerSpec, TestStatus, TestVerdict};
