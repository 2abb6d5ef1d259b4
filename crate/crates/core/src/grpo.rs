//! Group Relative Policy Optimization.
//!
//! For a group of `G` outputs sampled for the same input the objective is
//!
//! ```text
//! J = 1/G sum_i 1/|o_i| sum_t [ min(rho A, clip(rho, 1 - eps_low, 1 + eps_high) A) - beta * kl ]
//! rho = exp(logp_new - logp_old),   kl = r - ln r - 1,   r = exp(logp_ref - logp_new)
//! ```
//!
//! with `A` the output's group-standardized reward broadcast to its tokens.

use crate::policy::{PolicyError, Token, ToyPolicy};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Groups whose reward standard deviation is below this get zero advantage.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GrpoError {
    #[error("group size {0} is below 2")]
    GroupTooSmall(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite log-probability at output {output}, token {token}")]
    NonFinite { output: usize, token: usize },
    #[error("invalid GRPO config: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub eps_low: f64,
    pub eps_high: f64,
    /// KL coefficient; no default is implied by the method, so it is always
    /// explicit in configs.
    pub kl_coeff: f64,
    pub group_size: usize,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            eps_low: 0.2,
            eps_high: 0.3,
            kl_coeff: 1e-3,
            group_size: 8,
        }
    }
}

impl GrpoConfig {
    /// Single-epsilon clipping.
    pub fn symmetric(eps: f64, kl_coeff: f64, group_size: usize) -> Self {
        Self {
            eps_low: eps,
            eps_high: eps,
            kl_coeff,
            group_size,
        }
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        let in_unit = |e: f64| e > 0.0 && e < 1.0;
        if !in_unit(self.eps_low) || !in_unit(self.eps_high) {
            return Err(GrpoError::Config("clip bounds must lie in (0, 1)".into()));
        }
        if !(self.kl_coeff >= 0.0 && self.kl_coeff.is_finite()) {
            return Err(GrpoError::Config("kl_coeff must be finite and >= 0".into()));
        }
        if self.group_size < 2 {
            return Err(GrpoError::GroupTooSmall(self.group_size));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub input_id: String,
    pub prompt: Vec<Token>,
    pub outputs: Vec<Vec<Token>>,
    pub old_logprobs: Vec<Vec<f64>>,
    pub ref_logprobs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl RolloutGroup {
    pub fn size(&self) -> usize {
        self.outputs.len()
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        let g = self.outputs.len();
        if g < 2 {
            return Err(GrpoError::GroupTooSmall(g));
        }
        if self.old_logprobs.len() != g || self.ref_logprobs.len() != g || self.rewards.len() != g {
            return Err(GrpoError::Shape(format!(
                "group `{}` arrays disagree on G = {g}",
                self.input_id
            )));
        }
        for i in 0..g {
            let n = self.outputs[i].len();
            if n == 0 {
                return Err(GrpoError::Shape(format!("output {i} is empty")));
            }
            if self.old_logprobs[i].len() != n || self.ref_logprobs[i].len() != n {
                return Err(GrpoError::Shape(format!(
                    "output {i}: logprobs do not match {n} tokens"
                )));
            }
        }
        Ok(())
    }

    /// True when the rewards carry no learning signal.
    pub fn is_degenerate(&self) -> bool {
        population_std(&self.rewards) < STD_FLOOR
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub per_output: Vec<f64>,
}

impl Advantages {
    /// Advantage of token `t` of output `i`; the same for every token.
    pub fn at(&self, i: usize, _t: usize) -> f64 {
        self.per_output[i]
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// `(R_i - mean) / std` with the population standard deviation; all zero
/// when the std is below [`STD_FLOOR`].
pub fn group_advantages(rewards: &[f64]) -> Result<Advantages, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    let m = mean(rewards);
    let s = population_std(rewards);
    let per_output = if s < STD_FLOOR {
        vec![0.0; rewards.len()]
    } else {
        rewards.iter().map(|r| (r - m) / s).collect()
    };
    Ok(Advantages { per_output })
}

/// Per-token KL estimate `r - ln r - 1`, `r = pi_ref / pi_theta`.
pub fn kl_estimate(new_logprob: f64, ref_logprob: f64) -> f64 {
    let log_r = ref_logprob - new_logprob;
    // exp_m1 keeps the estimate exact near r = 1
    log_r.exp_m1() - log_r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenTerm {
    pub ratio: f64,
    pub advantage: f64,
    pub surrogate: f64,
    pub kl: f64,
    /// The clipped branch was selected and differs from the unclipped one.
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport {
    pub objective: f64,
    /// Weighted surrogate part of the objective.
    pub surrogate: f64,
    /// Weighted mean KL estimate (before multiplying by beta).
    pub kl: f64,
    pub clip_fraction: f64,
    pub terms: Vec<Vec<TokenTerm>>,
}

/// Surrogate value and its derivative with respect to the new logprob.
fn surrogate(ratio: f64, adv: f64, cfg: &GrpoConfig) -> (f64, f64, bool) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - cfg.eps_low, 1.0 + cfg.eps_high) * adv;
    if unclipped <= clipped {
        (unclipped, unclipped, false)
    } else {
        (clipped, 0.0, true)
    }
}

struct Accum {
    objective: f64,
    surrogate: f64,
    kl: f64,
    clipped: usize,
    tokens: usize,
}

fn term(new: f64, old: f64, reference: f64, adv: f64, cfg: &GrpoConfig) -> (TokenTerm, f64) {
    let ratio = (new - old).exp();
    let (sur, dsur, clipped) = surrogate(ratio, adv, cfg);
    let kl = kl_estimate(new, reference);
    // d kl / d new = 1 - r
    let dkl = 1.0 - (reference - new).exp();
    let t = TokenTerm {
        ratio,
        advantage: adv,
        surrogate: sur,
        kl,
        clipped,
    };
    (t, dsur - cfg.kl_coeff * dkl)
}

fn check_finite(v: f64, output: usize, token: usize) -> Result<(), GrpoError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(GrpoError::NonFinite { output, token })
    }
}

/// Evaluates the objective for `new_logprobs` (per output, per token).
pub fn grpo_objective(
    group: &RolloutGroup,
    new_logprobs: &[Vec<f64>],
    cfg: &GrpoConfig,
) -> Result<ObjectiveReport, GrpoError> {
    group.validate()?;
    if new_logprobs.len() != group.size()
        || new_logprobs
            .iter()
            .zip(&group.outputs)
            .any(|(l, o)| l.len() != o.len())
    {
        return Err(GrpoError::Shape("new logprobs do not match outputs".into()));
    }
    let adv = group_advantages(&group.rewards)?;
    let g = group.size() as f64;
    let mut acc = Accum {
        objective: 0.0,
        surrogate: 0.0,
        kl: 0.0,
        clipped: 0,
        tokens: 0,
    };
    let mut terms = Vec::with_capacity(group.size());
    for (i, lps) in new_logprobs.iter().enumerate() {
        let w = 1.0 / (g * lps.len() as f64);
        let mut row = Vec::with_capacity(lps.len());
        for (t, &new) in lps.iter().enumerate() {
            let (old, reference) = (group.old_logprobs[i][t], group.ref_logprobs[i][t]);
            for v in [new, old, reference] {
                check_finite(v, i, t)?;
            }
            let (tt, _) = term(new, old, reference, adv.at(i, t), cfg);
            acc.surrogate += w * tt.surrogate;
            acc.kl += w * tt.kl;
            acc.objective += w * (tt.surrogate - cfg.kl_coeff * tt.kl);
            acc.clipped += tt.clipped as usize;
            acc.tokens += 1;
            row.push(tt);
        }
        terms.push(row);
    }
    Ok(ObjectiveReport {
        objective: acc.objective,
        surrogate: acc.surrogate,
        kl: acc.kl,
        clip_fraction: acc.clipped as f64 / acc.tokens as f64,
        terms,
    })
}

/// Objective summary plus `dJ/dtheta` for one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupGradient {
    pub objective: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub grad: Vec<f64>,
}

/// Exact gradient of [`grpo_objective`] with respect to the policy
/// parameters, evaluated at `policy`.
pub fn grpo_gradient(
    group: &RolloutGroup,
    policy: &ToyPolicy,
    cfg: &GrpoConfig,
) -> Result<GroupGradient, GrpoError> {
    group.validate()?;
    let adv = group_advantages(&group.rewards)?;
    let g = group.size() as f64;
    let mut grad = vec![0.0; policy.num_params()];
    let mut acc = Accum {
        objective: 0.0,
        surrogate: 0.0,
        kl: 0.0,
        clipped: 0,
        tokens: 0,
    };
    for (i, out) in group.outputs.iter().enumerate() {
        let w = 1.0 / (g * out.len() as f64);
        let mut bad = None;
        policy.accumulate_gradient(
            &group.prompt,
            out,
            |t, new| {
                let (old, reference) = (group.old_logprobs[i][t], group.ref_logprobs[i][t]);
                if !(new.is_finite() && old.is_finite() && reference.is_finite()) {
                    bad.get_or_insert(t);
                    return 0.0;
                }
                let (tt, d) = term(new, old, reference, adv.at(i, t), cfg);
                acc.surrogate += w * tt.surrogate;
                acc.kl += w * tt.kl;
                acc.objective += w * (tt.surrogate - cfg.kl_coeff * tt.kl);
                acc.clipped += tt.clipped as usize;
                acc.tokens += 1;
                w * d
            },
            &mut grad,
        )?;
        if let Some(t) = bad {
            return Err(GrpoError::NonFinite {
                output: i,
                token: t,
            });
        }
    }
    Ok(GroupGradient {
        objective: acc.objective,
        kl: acc.kl,
        clip_fraction: acc.clipped as f64 / acc.tokens.max(1) as f64,
        grad,
    })
}

/// Mean of per-group objectives and gradients over a batch, computed in
/// parallel and reduced in group order so the result does not depend on
/// the thread count.
pub fn batch_gradient(
    groups: &[RolloutGroup],
    policy: &ToyPolicy,
    cfg: &GrpoConfig,
) -> Result<GroupGradient, GrpoError> {
    let parts: Vec<GroupGradient> = groups
        .par_iter()
        .map(|g| grpo_gradient(g, policy, cfg))
        .collect::<Result<_, _>>()?;
    let mut total = GroupGradient {
        objective: 0.0,
        kl: 0.0,
        clip_fraction: 0.0,
        grad: vec![0.0; policy.num_params()],
    };
    if parts.is_empty() {
        return Ok(total);
    }
    let n = parts.len() as f64;
    for p in &parts {
        total.objective += p.objective / n;
        total.kl += p.kl / n;
        total.clip_fraction += p.clip_fraction / n;
        for (a, b) in total.grad.iter_mut().zip(&p.grad) {
            *a += b / n;
        }
    }
    Ok(total)
}
