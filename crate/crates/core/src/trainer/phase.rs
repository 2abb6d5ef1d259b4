//! Two-phase response-length schedule.
//!
//! Training starts with the short budget and the scaled CRL reward. It moves
//! to the long budget once the reward has stabilized or at a hard step,
//! whichever comes first, and never moves back.

use super::StepMetrics;
use crate::reward::{Phase, PhaseConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    pub phase1_max_tokens: usize,
    pub phase2_max_tokens: usize,
    pub crl_scale_phase1: f64,
    /// Moving-average window `W`, in steps.
    pub window: usize,
    /// Stabilization threshold `delta` on the moving-average change.
    pub delta: f64,
    /// Switch after this many completed steps regardless of the trend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard_step: Option<usize>,
}

impl Default for PhaseSchedule {
    fn default() -> Self {
        Self {
            phase1_max_tokens: 24,
            phase2_max_tokens: 48,
            crl_scale_phase1: 0.8,
            window: 20,
            delta: 0.01,
            hard_step: None,
        }
    }
}

impl PhaseSchedule {
    pub fn validate(&self) -> Result<(), String> {
        if self.phase1_max_tokens == 0 || self.phase2_max_tokens < self.phase1_max_tokens {
            return Err("need 0 < phase1_max_tokens <= phase2_max_tokens".into());
        }
        if !(self.crl_scale_phase1 > 0.0 && self.crl_scale_phase1 <= 1.0) {
            return Err("crl_scale_phase1 must lie in (0, 1]".into());
        }
        if self.window == 0 {
            return Err("window must be positive".into());
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err("delta must be finite and >= 0".into());
        }
        Ok(())
    }

    pub fn phase_config(&self, phase: Phase) -> PhaseConfig {
        let built = match phase {
            Phase::Phase16k => {
                PhaseConfig::new(phase, self.crl_scale_phase1, self.phase1_max_tokens)
            }
            Phase::Phase32k => PhaseConfig::new(phase, 1.0, self.phase2_max_tokens),
        };
        built.expect("schedule was validated")
    }

    /// True when the mean of the last `W` rewards differs from the mean of
    /// the `W` before them by less than `delta`. Needs `2W` entries.
    pub fn stabilized(&self, rewards: &[f64]) -> bool {
        let (n, w) = (rewards.len(), self.window);
        if n < 2 * w {
            return false;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / w as f64;
        (mean(&rewards[n - w..]) - mean(&rewards[n - 2 * w..n - w])).abs() < self.delta
    }
}

/// Phase for the step that follows `history`.
pub fn advance_phase(history: &[StepMetrics], schedule: &PhaseSchedule) -> PhaseConfig {
    let switched = history
        .last()
        .is_some_and(|m| m.phase == Phase::Phase32k.number());
    let hard = schedule.hard_step.is_some_and(|h| history.len() >= h);
    let rewards: Vec<f64> = history.iter().map(|m| m.mean_reward).collect();
    let phase = if switched || hard || schedule.stabilized(&rewards) {
        Phase::Phase32k
    } else {
        Phase::Phase16k
    };
    schedule.phase_config(phase)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(rewards: &[f64]) -> Vec<StepMetrics> {
        rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| StepMetrics {
                step: i + 1,
                phase: 1,
                mean_reward: r,
                ..StepMetrics::default()
            })
            .collect()
    }

    fn sched(hard_step: Option<usize>) -> PhaseSchedule {
        PhaseSchedule {
            window: 5,
            hard_step,
            ..PhaseSchedule::default()
        }
    }

    #[test]
    fn constant_rewards_switch_after_two_windows() {
        let s = sched(None);
        assert_eq!(
            advance_phase(&history(&[0.4; 9]), &s).phase,
            Phase::Phase16k
        );
        let p = advance_phase(&history(&[0.4; 10]), &s);
        assert_eq!(p.phase, Phase::Phase32k);
        assert_eq!((p.crl_scale, p.max_response_tokens), (1.0, 48));
    }

    #[test]
    fn hard_step_wins() {
        let rising: Vec<f64> = (0..7).map(|i| i as f64 * 0.1).collect();
        assert_eq!(
            advance_phase(&history(&rising[..6]), &sched(Some(7))).phase,
            Phase::Phase16k
        );
        assert_eq!(
            advance_phase(&history(&rising), &sched(Some(7))).phase,
            Phase::Phase32k
        );
    }

    #[test]
    fn drifting_rewards_do_not_switch() {
        // noise around a linear drift of 0.01 per step: window means move by 0.05
        let noisy: Vec<f64> = (0..60)
            .map(|i| 0.2 + 0.01 * i as f64 + if i % 2 == 0 { 0.03 } else { -0.03 })
            .collect();
        let s = sched(None);
        for n in 0..=noisy.len() {
            assert_eq!(
                advance_phase(&history(&noisy[..n]), &s).phase,
                Phase::Phase16k,
                "n = {n}"
            );
        }
    }

    #[test]
    fn switch_is_one_way() {
        let mut h = history(&[0.1, 0.9, 0.1, 0.9]);
        h[1].phase = 2;
        h[2].phase = 2;
        h[3].phase = 2;
        let p = advance_phase(&h, &sched(None));
        assert_eq!(p.phase, Phase::Phase32k);
    }

    #[test]
    fn first_phase_scales_crl() {
        let p = advance_phase(&[], &PhaseSchedule::default());
        assert_eq!(
            (p.phase, p.crl_scale, p.max_response_tokens),
            (Phase::Phase16k, 0.8, 24)
        );
    }
}
