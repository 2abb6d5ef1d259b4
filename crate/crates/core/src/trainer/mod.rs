//! The hybrid CRL + RL training loop on the synthetic environment.
//!
//! Each step draws a batch from the hybrid schedule, samples `G` outputs per
//! item from the current policy, scores them (RL items by position matches,
//! CRL items by parsing the emitted conclusion against the label), converts
//! rewards into group advantages and applies one GRPO ascent step. The
//! reference policy is the initialization, frozen.

mod config;
mod phase;

pub use config::{CritiqueSampling, TrainConfig, ValidationMode};
pub use phase::{advance_phase, PhaseSchedule};

use crate::corpus::Judgment;
use crate::critique::{mix_hybrid_ids, parse_conclusion, CritiqueError, ItemKind, ScheduleItem};
use crate::grpo::{batch_gradient, GrpoError, RolloutGroup};
use crate::optim::Optimizer;
use crate::policy::{
    render_output, PolicyError, PolicySnapshot, SyntheticCritique, SyntheticProblem, Token,
    ToyPolicy,
};
use crate::reward::{dispatch_rewards, reward_crl, PhaseConfig, RewardError, RewardItem};
use crate::sandbox::run_synthetic;
use crate::seed::rng_for;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

const SPLIT_TAG: u64 = 0x5911;
const SCHEDULE_TAG: u64 = 0x5C4E;
const EPOCH_TAG: u64 = 0xE90C;
const ROLLOUT_TAG: u64 = 0x2011;
const VALIDATION_TAG: u64 = 0x7A11;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("validation set overlaps training set on `{0}`")]
    SplitOverlap(String),
    #[error("{failures} consecutive failed steps, last at step {step}: {last}")]
    TooManyFailures {
        step: usize,
        failures: usize,
        last: String,
    },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Critique(#[from] CritiqueError),
    #[error("metrics sink: {0}")]
    Sink(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub phase: u8,
    /// Mean dispatched reward over every sampled output.
    pub mean_reward: f64,
    pub mean_r_rl: Option<f64>,
    /// Mean dispatched (phase-scaled) CRL reward.
    pub mean_r_crl: Option<f64>,
    /// Fraction of sampled CRL outputs whose judgment matches the label.
    pub crl_accuracy: Option<f64>,
    pub mean_output_len: f64,
    pub kl: f64,
    pub objective: f64,
    pub clip_fraction: f64,
    pub rl_items: usize,
    pub crl_items: usize,
    pub skipped_groups: usize,
    pub val_score: Option<f64>,
    pub val_crl_accuracy: Option<f64>,
    pub wall_ms: u64,
}

impl StepMetrics {
    /// The record with its timing field zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_ms: 0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub policy: PolicySnapshot,
    /// Mean held-out R_rl.
    pub score: f64,
    pub crl_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub step: usize,
    pub score: f64,
    pub crl_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: ToyPolicy,
    pub best: Checkpoint,
    pub evaluations: Vec<Evaluation>,
    pub metrics: Vec<StepMetrics>,
    /// Every item fed to training, in order.
    pub scheduled: Vec<ScheduleItem>,
    pub held_out: Vec<String>,
}

/// Train/validation partition of problem indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub held_out: Vec<usize>,
}

/// Holds out `round(fraction * n)` problems (at least one, and at least one
/// left for training) chosen by a seeded shuffle. Both sides keep corpus
/// order.
pub fn split_problems(n: usize, fraction: f64, seed: u64) -> Result<Split, TrainError> {
    if n < 2 {
        return Err(TrainError::Data(
            "need at least two problems to hold some out".into(),
        ));
    }
    let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, SPLIT_TAG, 0));
    let held: HashSet<usize> = order[..k].iter().copied().collect();
    let (held_out, train) = (0..n).partition(|i| held.contains(i));
    Ok(Split { train, held_out })
}

fn solution_of(output: &[Token]) -> &[Token] {
    let end = output
        .iter()
        .position(|&t| t == Token::Eos)
        .unwrap_or(output.len());
    &output[..end]
}

fn decode(
    policy: &ToyPolicy,
    prompt: &[Token],
    max_len: usize,
    mode: ValidationMode,
    temperature: f64,
    seed: (u64, u64),
) -> Result<Vec<Token>, PolicyError> {
    match mode {
        ValidationMode::Greedy => policy.greedy(prompt, max_len),
        ValidationMode::Sampled => {
            let mut rng = rng_for(seed.0, VALIDATION_TAG, seed.1);
            Ok(policy.sample(prompt, max_len, temperature, &mut rng)?.0)
        }
    }
}

/// Mean R_rl of greedy decodes on `held_out`; errors if any id also
/// appears in `train`.
pub fn validate(
    policy: &ToyPolicy,
    held_out: &[SyntheticProblem],
    train: &[SyntheticProblem],
    max_len: usize,
) -> Result<f64, TrainError> {
    validate_with(
        policy,
        held_out,
        train,
        max_len,
        ValidationMode::Greedy,
        1.0,
        0,
    )
}

pub fn validate_with(
    policy: &ToyPolicy,
    held_out: &[SyntheticProblem],
    train: &[SyntheticProblem],
    max_len: usize,
    mode: ValidationMode,
    temperature: f64,
    seed: u64,
) -> Result<f64, TrainError> {
    let train_ids: HashSet<&str> = train.iter().map(|p| p.id.as_str()).collect();
    if let Some(p) = held_out.iter().find(|p| train_ids.contains(p.id.as_str())) {
        return Err(TrainError::SplitOverlap(p.id.clone()));
    }
    if held_out.is_empty() {
        return Err(TrainError::Data("empty validation set".into()));
    }
    let scores = held_out
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let out = decode(
                policy,
                &p.rl_prompt(),
                max_len,
                mode,
                temperature,
                (seed, i as u64),
            )?;
            Ok(run_synthetic(solution_of(&out), p).pass_rate)
        })
        .collect::<Result<Vec<f64>, TrainError>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Fraction of critiques whose decoded judgment equals the label.
pub fn crl_accuracy(
    policy: &ToyPolicy,
    problems: &[SyntheticProblem],
    critiques: &[SyntheticCritique],
    max_len: usize,
) -> Result<f64, TrainError> {
    if critiques.is_empty() {
        return Err(TrainError::Data("no critiques to evaluate".into()));
    }
    let by_id: HashMap<&str, &SyntheticProblem> =
        problems.iter().map(|p| (p.id.as_str(), p)).collect();
    let hits = critiques
        .par_iter()
        .map(|c| {
            let p = by_id
                .get(c.problem_id.as_str())
                .ok_or_else(|| TrainError::Data(format!("critique `{}` has no problem", c.id)))?;
            let out = policy.greedy(&p.crl_prompt(&c.candidate), max_len)?;
            Ok(reward_crl(parse_conclusion(&render_output(&out)), c.label))
        })
        .collect::<Result<Vec<f64>, TrainError>>()?;
    Ok(hits.iter().sum::<f64>() / hits.len() as f64)
}

/// Items for step `step` (0-based) from an endless stream of per-epoch
/// shuffles of `schedule`.
fn batch_indices(
    n: usize,
    batch: usize,
    step: usize,
    limit: usize,
    seed: u64,
    perms: &mut HashMap<usize, Vec<usize>>,
) -> Vec<usize> {
    (step * batch..((step + 1) * batch).min(limit))
        .map(|k| {
            let epoch = k / n;
            let perm = perms.entry(epoch).or_insert_with(|| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng_for(seed, EPOCH_TAG, epoch as u64));
                p
            });
            perm[k % n]
        })
        .collect()
}

struct ItemRollout {
    group: RolloutGroup,
    kind: ItemKind,
    rewards: Vec<f64>,
    correct: Vec<bool>,
}

struct Env<'a> {
    cfg: &'a TrainConfig,
    problems: &'a [SyntheticProblem],
    critiques_of: HashMap<&'a str, Vec<&'a SyntheticCritique>>,
    index_of: HashMap<&'a str, usize>,
    reference: PolicySnapshot,
}

impl Env<'_> {
    fn rollout(
        &self,
        policy: &ToyPolicy,
        item: &ScheduleItem,
        phase: &PhaseConfig,
        step: usize,
        slot: usize,
    ) -> Result<ItemRollout, TrainError> {
        let mut rng = rng_for(
            self.cfg.seed,
            ROLLOUT_TAG ^ ((step as u64) << 16),
            slot as u64,
        );
        let problem = &self.problems[self.index_of[item.problem_id.as_str()]];
        let critique = match item.kind {
            ItemKind::Rl => None,
            ItemKind::Crl => {
                let cs = &self.critiques_of[item.problem_id.as_str()];
                Some(pick_critique(cs, self.cfg.critique_sampling, &mut rng))
            }
        };
        let prompt = match critique {
            None => problem.rl_prompt(),
            Some(c) => problem.crl_prompt(&c.candidate),
        };
        let g = self.cfg.group_size;
        let (mut outputs, mut old, mut reference, mut items, mut correct) = (
            Vec::with_capacity(g),
            Vec::with_capacity(g),
            Vec::with_capacity(g),
            Vec::with_capacity(g),
            Vec::new(),
        );
        for _ in 0..g {
            let (out, lps) = policy.sample(
                &prompt,
                phase.max_response_tokens,
                self.cfg.temperature,
                &mut rng,
            )?;
            reference.push(self.reference.logprobs(&prompt, &out)?);
            items.push(match critique {
                None => RewardItem::rl(run_synthetic(solution_of(&out), problem)),
                Some(c) => {
                    let parsed = parse_conclusion(&render_output(&out));
                    correct.push(parsed.as_judgment() == Some(c.label));
                    RewardItem::crl(parsed, c.label)
                }
            });
            outputs.push(out);
            old.push(lps);
        }
        let rewards = dispatch_rewards(&items, phase)?;
        Ok(ItemRollout {
            group: RolloutGroup {
                input_id: critique.map_or_else(|| problem.id.clone(), |c| c.id.clone()),
                prompt,
                outputs,
                old_logprobs: old,
                ref_logprobs: reference,
                rewards: rewards.clone(),
            },
            kind: item.kind,
            rewards,
            correct,
        })
    }
}

/// Chooses the critique a CRL item is built from. Balanced sampling first
/// draws a label uniformly among those present for the problem.
fn pick_critique<'a, R: Rng + ?Sized>(
    cs: &[&'a SyntheticCritique],
    mode: CritiqueSampling,
    rng: &mut R,
) -> &'a SyntheticCritique {
    match mode {
        CritiqueSampling::Uniform => cs[rng.random_range(0..cs.len())],
        CritiqueSampling::LabelBalanced => {
            let n_true = cs.iter().filter(|c| c.label == Judgment::True).count();
            let want = if n_true == 0 || n_true == cs.len() {
                cs[0].label
            } else if rng.random::<bool>() {
                Judgment::True
            } else {
                Judgment::False
            };
            let pool: Vec<_> = cs.iter().filter(|c| c.label == want).collect();
            pool[rng.random_range(0..pool.len())]
        }
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Runs [`train_with`] without a metrics sink.
pub fn train(
    config: &TrainConfig,
    problems: &[SyntheticProblem],
    critiques: &[SyntheticCritique],
) -> Result<TrainOutcome, TrainError> {
    train_with(config, problems, critiques, |_| Ok(()))
}

/// Trains a freshly initialized policy; `on_step` sees each metrics record
/// as soon as its step completes.
pub fn train_with(
    config: &TrainConfig,
    problems: &[SyntheticProblem],
    critiques: &[SyntheticCritique],
    on_step: impl FnMut(&StepMetrics) -> std::io::Result<()> + Send,
) -> Result<TrainOutcome, TrainError> {
    config.validate().map_err(TrainError::Config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if config.threads > 0 {
        builder = builder.num_threads(config.threads);
    }
    let pool = builder
        .build()
        .map_err(|e| TrainError::Config(e.to_string()))?;
    let policy = ToyPolicy::random(config.policy, &mut rng_for(config.init_seed, 0, 0))?;
    pool.install(|| train_from(config, policy, problems, critiques, on_step))
}

/// Trains starting from `policy`, which also becomes the frozen reference.
pub fn train_from(
    config: &TrainConfig,
    mut policy: ToyPolicy,
    problems: &[SyntheticProblem],
    critiques: &[SyntheticCritique],
    mut on_step: impl FnMut(&StepMetrics) -> std::io::Result<()> + Send,
) -> Result<TrainOutcome, TrainError> {
    config.validate().map_err(TrainError::Config)?;
    if problems.is_empty() {
        return Err(TrainError::Data("empty problem corpus".into()));
    }
    if config.crl_fraction > 0.0 && critiques.is_empty() {
        return Err(TrainError::Data(
            "crl_fraction > 0 needs a non-empty critique corpus".into(),
        ));
    }
    let mut index_of = HashMap::new();
    for (i, p) in problems.iter().enumerate() {
        if index_of.insert(p.id.as_str(), i).is_some() {
            return Err(TrainError::Data(format!("duplicate problem id `{}`", p.id)));
        }
    }
    let mut critiques_of: HashMap<&str, Vec<&SyntheticCritique>> = HashMap::new();
    for c in critiques {
        if !index_of.contains_key(c.problem_id.as_str()) {
            return Err(TrainError::Data(format!(
                "critique `{}` names unknown problem `{}`",
                c.id, c.problem_id
            )));
        }
        critiques_of
            .entry(c.problem_id.as_str())
            .or_default()
            .push(c);
    }

    let split = split_problems(problems.len(), config.validation_fraction, config.seed)?;
    let train_set: Vec<SyntheticProblem> =
        split.train.iter().map(|&i| problems[i].clone()).collect();
    let held_set: Vec<SyntheticProblem> = split
        .held_out
        .iter()
        .map(|&i| problems[i].clone())
        .collect();
    let held_ids: HashSet<&str> = held_set.iter().map(|p| p.id.as_str()).collect();
    let held_critiques: Vec<SyntheticCritique> = critiques
        .iter()
        .filter(|c| held_ids.contains(c.problem_id.as_str()))
        .cloned()
        .collect();

    let train_ids: Vec<&str> = train_set.iter().map(|p| p.id.as_str()).collect();
    let schedule = mix_hybrid_ids(
        &train_ids,
        |id| critiques_of.contains_key(id),
        config.crl_fraction,
        rng_for(config.seed, SCHEDULE_TAG, 0).random(),
    )?;
    let n_items = schedule.len();
    let total_steps = config.steps.unwrap_or(n_items.div_ceil(config.batch_size));
    let limit = if config.steps.is_some() {
        usize::MAX
    } else {
        n_items
    };

    let env = Env {
        cfg: config,
        problems,
        critiques_of,
        index_of,
        reference: policy.snapshot(),
    };
    let grpo = config.grpo();
    let mut optimizer = Optimizer::new(config.optimizer_config(), policy.num_params());
    let val_len = config.phase.phase2_max_tokens;
    let evaluate = |policy: &ToyPolicy, step: usize| -> Result<Evaluation, TrainError> {
        let score = validate_with(
            policy,
            &held_set,
            &train_set,
            val_len,
            config.validation_mode,
            config.temperature,
            config.seed ^ step as u64,
        )?;
        let acc = if held_critiques.is_empty() {
            None
        } else {
            Some(crl_accuracy(policy, problems, &held_critiques, val_len)?)
        };
        Ok(Evaluation {
            step,
            score,
            crl_accuracy: acc,
        })
    };

    let first = evaluate(&policy, 0)?;
    let mut best = Checkpoint {
        step: 0,
        policy: policy.snapshot(),
        score: first.score,
        crl_accuracy: first.crl_accuracy,
    };
    let mut evaluations = vec![first];
    let mut metrics: Vec<StepMetrics> = Vec::with_capacity(total_steps);
    let mut scheduled = Vec::with_capacity(total_steps * config.batch_size);
    let mut perms = HashMap::new();
    let mut failures = 0usize;

    for step in 0..total_steps {
        let started = Instant::now();
        let phase = advance_phase(&metrics, &config.phase);
        let idx = batch_indices(
            n_items,
            config.batch_size,
            step,
            limit,
            config.seed,
            &mut perms,
        );
        let batch: Vec<&ScheduleItem> = idx.iter().map(|&i| &schedule[i]).collect();

        let attempt =
            || -> Result<(Vec<ItemRollout>, Option<crate::grpo::GroupGradient>), TrainError> {
                let rollouts = batch
                    .par_iter()
                    .enumerate()
                    .map(|(slot, item)| env.rollout(&policy, item, &phase, step, slot))
                    .collect::<Result<Vec<_>, _>>()?;
                let informative: Vec<RolloutGroup> = rollouts
                    .iter()
                    .filter(|r| !r.group.is_degenerate())
                    .map(|r| r.group.clone())
                    .collect();
                let grad = if informative.is_empty() {
                    None
                } else {
                    Some(batch_gradient(&informative, &policy, &grpo)?)
                };
                Ok((rollouts, grad))
            };
        let (rollouts, grad) = match attempt() {
            Ok(r) => {
                failures = 0;
                r
            }
            Err(e) => {
                failures += 1;
                log::error!("step {}: {e}", step + 1);
                if failures >= config.max_consecutive_failures.max(1) {
                    return Err(TrainError::TooManyFailures {
                        step: step + 1,
                        failures,
                        last: e.to_string(),
                    });
                }
                continue;
            }
        };
        if let Some(g) = &grad {
            optimizer.step(policy.params_mut(), &g.grad);
        }
        scheduled.extend(batch.iter().map(|&i| i.clone()));

        let all_rewards = rollouts.iter().flat_map(|r| r.rewards.iter().copied());
        let of_kind = |k: ItemKind| rollouts.iter().filter(move |r| r.kind == k);
        let mut m = StepMetrics {
            step: step + 1,
            phase: phase.phase.number(),
            mean_reward: mean(all_rewards).unwrap_or(0.0),
            mean_r_rl: mean(of_kind(ItemKind::Rl).flat_map(|r| r.rewards.iter().copied())),
            mean_r_crl: mean(of_kind(ItemKind::Crl).flat_map(|r| r.rewards.iter().copied())),
            crl_accuracy: mean(
                of_kind(ItemKind::Crl).flat_map(|r| r.correct.iter().map(|&c| c as u8 as f64)),
            ),
            mean_output_len: mean(
                rollouts
                    .iter()
                    .flat_map(|r| r.group.outputs.iter().map(|o| o.len() as f64)),
            )
            .unwrap_or(0.0),
            kl: grad.as_ref().map_or(0.0, |g| g.kl),
            objective: grad.as_ref().map_or(0.0, |g| g.objective),
            clip_fraction: grad.as_ref().map_or(0.0, |g| g.clip_fraction),
            rl_items: of_kind(ItemKind::Rl).count(),
            crl_items: of_kind(ItemKind::Crl).count(),
            skipped_groups: rollouts.iter().filter(|r| r.group.is_degenerate()).count(),
            ..StepMetrics::default()
        };

        if (step + 1) % config.eval_every == 0 || step + 1 == total_steps {
            let ev = evaluate(&policy, step + 1)?;
            m.val_score = Some(ev.score);
            m.val_crl_accuracy = ev.crl_accuracy;
            if ev.score > best.score {
                best = Checkpoint {
                    step: step + 1,
                    policy: policy.snapshot(),
                    score: ev.score,
                    crl_accuracy: ev.crl_accuracy,
                };
            }
            evaluations.push(ev);
        }
        m.wall_ms = started.elapsed().as_millis() as u64;
        on_step(&m)?;
        metrics.push(m);
    }

    Ok(TrainOutcome {
        policy,
        best,
        evaluations,
        metrics,
        scheduled,
        held_out: held_set.into_iter().map(|p| p.id).collect(),
    })
}

/// Appends one JSON record per line.
pub struct MetricsWriter {
    out: std::io::BufWriter<std::fs::File>,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self {
            out: std::io::BufWriter::new(std::fs::File::create(path)?),
        })
    }

    pub fn write(&mut self, m: &StepMetrics) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, m)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> std::io::Result<Vec<StepMetrics>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}

/// Label given a match fraction, for callers that regenerate critiques.
pub fn label_for(match_fraction: f64, threshold: f64) -> Judgment {
    Judgment::from_bool(match_fraction > threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::make_synthetic_corpus;

    fn tiny() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            steps: Some(6),
            eval_every: 3,
            threads: 1,
            ..TrainConfig::desk()
        }
    }

    #[test]
    fn split_is_disjoint_and_sized() {
        let s = split_problems(50, 0.2, 3).unwrap();
        assert_eq!(s.held_out.len(), 10);
        assert_eq!(s.train.len(), 40);
        let all: HashSet<usize> = s.train.iter().chain(&s.held_out).copied().collect();
        assert_eq!(all.len(), 50);
        assert_eq!(split_problems(50, 0.2, 3).unwrap(), s);
    }

    #[test]
    fn validate_rejects_overlap() {
        let (ps, _) = make_synthetic_corpus(4, 8, 1);
        let pol = ToyPolicy::zeros(Default::default()).unwrap();
        assert!(
            matches!(validate(&pol, &ps[..2], &ps[1..], 16), Err(TrainError::SplitOverlap(id)) if id == ps[1].id)
        );
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let (ps, cs) = make_synthetic_corpus(40, 16, 2);
        let cfg = TrainConfig { lr: 0.0, ..tiny() };
        let out = train(&cfg, &ps, &cs).unwrap();
        let init = ToyPolicy::random(cfg.policy, &mut rng_for(cfg.init_seed, 0, 0)).unwrap();
        assert_eq!(out.policy.params(), init.params());
        assert_eq!(out.metrics.len(), 6);
    }

    #[test]
    fn pure_rl_schedules_no_critiques() {
        let (ps, cs) = make_synthetic_corpus(40, 16, 2);
        let out = train(
            &TrainConfig {
                crl_fraction: 0.0,
                ..tiny()
            },
            &ps,
            &cs,
        )
        .unwrap();
        assert!(out.scheduled.iter().all(|i| i.kind == ItemKind::Rl));
        assert!(out
            .metrics
            .iter()
            .all(|m| m.crl_items == 0 && m.mean_r_crl.is_none()));
    }

    #[test]
    fn crl_needs_critiques() {
        let (ps, _) = make_synthetic_corpus(10, 16, 2);
        assert!(matches!(train(&tiny(), &ps, &[]), Err(TrainError::Data(_))));
    }

    #[test]
    fn best_checkpoint_is_earliest_maximum() {
        let (ps, cs) = make_synthetic_corpus(40, 16, 5);
        let out = train(&tiny(), &ps, &cs).unwrap();
        let max = out
            .evaluations
            .iter()
            .map(|e| e.score)
            .fold(f64::MIN, f64::max);
        let first = out.evaluations.iter().find(|e| e.score == max).unwrap();
        assert_eq!((out.best.step, out.best.score), (first.step, max));
    }

    #[test]
    fn balanced_critique_choice_splits_labels_evenly() {
        let mk = |k: usize, label: Judgment| SyntheticCritique {
            id: format!("c{k}"),
            problem_id: "p".into(),
            candidate: vec![Token::Bit0],
            label,
            match_fraction: 0.0,
        };
        let (t0, t1, f) = (
            mk(0, Judgment::True),
            mk(1, Judgment::True),
            mk(2, Judgment::False),
        );
        let cs = [&t0, &t1, &f];
        let mut rng = rng_for(1, 2, 3);
        let n = 20_000;
        let count = |mode| {
            let mut rng = rng_for(1, 2, 3);
            (0..n)
                .filter(|_| pick_critique(&cs, mode, &mut rng).label == Judgment::False)
                .count() as f64
                / n as f64
        };
        // one False among three: 1/3 uniform, 1/2 balanced
        assert!((count(CritiqueSampling::Uniform) - 1.0 / 3.0).abs() < 0.02);
        assert!((count(CritiqueSampling::LabelBalanced) - 0.5).abs() < 0.02);
        let only_true = [&t0, &t1];
        for _ in 0..100 {
            let c = pick_critique(&only_true, CritiqueSampling::LabelBalanced, &mut rng);
            assert_eq!(c.label, Judgment::True);
        }
    }
}
