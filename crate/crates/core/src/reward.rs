//! Rewards for the two item kinds and their batch-level dispatch.
//!
//! A CRL item scores 1 when the parsed judgment equals the ground truth and
//! 0 otherwise (a missing judgment scores 0). An RL item scores its pass
//! rate `K / N`. During the first (short-response) phase CRL rewards are
//! multiplied by `crl_scale` before advantages are computed.

use crate::corpus::Judgment;
use crate::critique::{ItemKind, ParsedJudgment};
use crate::sandbox::PassReport;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RewardError {
    #[error("pass report has zero tests")]
    EmptyReport,
    #[error("batch item {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("invalid phase config: {0}")]
    BadPhase(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardItem {
    pub kind: ItemKind,
    pub crl: Option<(ParsedJudgment, Judgment)>,
    pub rl: Option<PassReport>,
}

impl RewardItem {
    pub fn crl(predicted: ParsedJudgment, truth: Judgment) -> Self {
        Self {
            kind: ItemKind::Crl,
            crl: Some((predicted, truth)),
            rl: None,
        }
    }

    pub fn rl(report: PassReport) -> Self {
        Self {
            kind: ItemKind::Rl,
            crl: None,
            rl: Some(report),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Phase16k,
    Phase32k,
}

impl Phase {
    /// 1 for the short-response phase, 2 after the switch.
    pub fn number(self) -> u8 {
        match self {
            Phase::Phase16k => 1,
            Phase::Phase32k => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub phase: Phase,
    pub crl_scale: f64,
    pub max_response_tokens: usize,
}

impl PhaseConfig {
    pub fn new(
        phase: Phase,
        crl_scale: f64,
        max_response_tokens: usize,
    ) -> Result<Self, RewardError> {
        if !(crl_scale > 0.0 && crl_scale <= 1.0) {
            return Err(RewardError::BadPhase(format!(
                "crl_scale {crl_scale} outside (0, 1]"
            )));
        }
        if max_response_tokens == 0 {
            return Err(RewardError::BadPhase(
                "max_response_tokens must be positive".into(),
            ));
        }
        Ok(Self {
            phase,
            crl_scale,
            max_response_tokens,
        })
    }

    pub fn phase16k(max_response_tokens: usize) -> Self {
        Self::new(Phase::Phase16k, 0.8, max_response_tokens).expect("valid")
    }

    pub fn phase32k(max_response_tokens: usize) -> Self {
        Self::new(Phase::Phase32k, 1.0, max_response_tokens).expect("valid")
    }
}

pub fn reward_crl(predicted: ParsedJudgment, truth: Judgment) -> f64 {
    if predicted.as_judgment() == Some(truth) {
        1.0
    } else {
        0.0
    }
}

pub fn reward_rl(report: &PassReport) -> Result<f64, RewardError> {
    if report.total == 0 {
        return Err(RewardError::EmptyReport);
    }
    Ok(report.passed as f64 / report.total as f64)
}

/// Element `i` is the scaled CRL reward or the RL pass rate of item `i`.
pub fn dispatch_rewards(
    batch: &[RewardItem],
    phase: &PhaseConfig,
) -> Result<Vec<f64>, RewardError> {
    batch
        .iter()
        .enumerate()
        .map(|(index, item)| match (item.kind, &item.crl, &item.rl) {
            (ItemKind::Crl, Some((pred, truth)), None) => {
                Ok(phase.crl_scale * reward_crl(*pred, *truth))
            }
            (ItemKind::Rl, None, Some(report)) => {
                reward_rl(report).map_err(|e| RewardError::Malformed {
                    index,
                    reason: e.to_string(),
                })
            }
            (kind, _, _) => Err(RewardError::Malformed {
                index,
                reason: format!("{kind:?} item must carry exactly its own payload"),
            }),
        })
        .collect()
}
