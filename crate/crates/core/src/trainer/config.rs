use super::phase::PhaseSchedule;
use crate::grpo::GrpoConfig;
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::policy::PolicyConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// Argmax decoding; deterministic.
    #[default]
    Greedy,
    /// Sampling at the rollout temperature with a fixed seed per problem.
    Sampled,
}

/// How a CRL item picks one of its problem's critiques.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CritiqueSampling {
    Uniform,
    /// Draw a label uniformly among those the problem has, then a critique
    /// with that label.
    #[default]
    LabelBalanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Seeds the split, the hybrid schedule and every rollout.
    pub seed: u64,
    /// Seeds the policy initialization.
    pub init_seed: u64,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    pub group_size: usize,
    pub eps_low: f64,
    pub eps_high: f64,
    pub kl_coeff: f64,
    pub crl_fraction: f64,
    #[serde(default)]
    pub critique_sampling: CritiqueSampling,
    /// Pass-rate threshold for labeling critiques generated from a corpus.
    pub label_threshold: f64,
    pub temperature: f64,
    pub validation_fraction: f64,
    #[serde(default)]
    pub validation_mode: ValidationMode,
    pub eval_every: usize,
    /// Number of update steps. When absent, training makes exactly one pass
    /// over the schedule; when set, the schedule is reshuffled and repeated
    /// as needed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    pub max_consecutive_failures: usize,
    /// Worker threads for rollouts and gradients; 0 uses every core.
    pub threads: usize,
    pub phase: PhaseSchedule,
    pub policy: PolicyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Desk-scale settings for the synthetic environment.
    pub fn desk() -> Self {
        Self {
            seed: 0,
            init_seed: 1,
            batch_size: 32,
            lr: 5e-3,
            optimizer: OptimizerKind::Adam,
            group_size: 8,
            eps_low: 0.2,
            eps_high: 0.3,
            kl_coeff: 1e-3,
            crl_fraction: 0.2,
            critique_sampling: CritiqueSampling::LabelBalanced,
            label_threshold: 0.8,
            temperature: 1.0,
            validation_fraction: 0.2,
            validation_mode: ValidationMode::Greedy,
            eval_every: 20,
            steps: Some(300),
            max_consecutive_failures: 5,
            threads: 0,
            phase: PhaseSchedule {
                hard_step: Some(200),
                ..PhaseSchedule::default()
            },
            policy: PolicyConfig::default(),
        }
    }

    /// The large-model hyperparameters: batch 128, learning rate 1e-6 with
    /// plain gradient ascent, one pass over the data.
    pub fn large_scale() -> Self {
        Self {
            batch_size: 128,
            lr: 1e-6,
            optimizer: OptimizerKind::Sgd,
            steps: None,
            phase: PhaseSchedule::default(),
            ..Self::desk()
        }
    }

    pub fn grpo(&self) -> GrpoConfig {
        GrpoConfig {
            eps_low: self.eps_low,
            eps_high: self.eps_high,
            kl_coeff: self.kl_coeff,
            group_size: self.group_size,
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig::from_kind(self.optimizer, self.lr)
    }

    pub fn validate(&self) -> Result<(), String> {
        let frac = |name: &str, v: f64, lo_open: bool| {
            let ok = if lo_open {
                v > 0.0 && v < 1.0
            } else {
                (0.0..=1.0).contains(&v)
            };
            if ok {
                Ok(())
            } else {
                Err(format!("{name} = {v} is out of range"))
            }
        };
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        self.grpo().validate().map_err(|e| e.to_string())?;
        self.optimizer_config().validate()?;
        frac("crl_fraction", self.crl_fraction, false)?;
        frac("label_threshold", self.label_threshold, true)?;
        frac("validation_fraction", self.validation_fraction, true)?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err("temperature must be positive".into());
        }
        if self.eval_every == 0 {
            return Err("eval_every must be positive".into());
        }
        if self.steps == Some(0) {
            return Err("steps must be positive when set".into());
        }
        self.phase.validate()?;
        self.policy.validate().map_err(|e| e.to_string())?;
        if self.phase.phase2_max_tokens > self.policy.max_output_len {
            return Err("phase2_max_tokens exceeds policy.max_output_len".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
