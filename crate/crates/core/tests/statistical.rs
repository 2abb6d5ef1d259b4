//! Sampling-based checks against closed-form oracles.

use crl_core::grpo::{grpo_gradient, GrpoConfig, RolloutGroup};
use crl_core::optim::{Optimizer, OptimizerConfig};
use crl_core::policy::{
    make_synthetic_corpus, make_synthetic_corpus_with, PolicyConfig, SyntheticProblem, Token,
    ToyPolicy, VOCAB_SIZE,
};
use crl_core::sandbox::run_synthetic;
use crl_core::trainer::{validate_with, ValidationMode};
use crl_core::Judgment;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn binomial(n: u64, k: u64, p: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

#[test]
fn single_token_frequencies_match_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let policy = ToyPolicy::random(PolicyConfig::default(), &mut rng).unwrap();
    let prompt = vec![Token::Bit1, Token::Bit0, Token::Bit1];
    let probs = policy.next_distribution(&prompt, &[]).unwrap();
    let n = 10_000;
    let mut counts = [0usize; VOCAB_SIZE];
    for _ in 0..n {
        let (out, _) = policy.sample(&prompt, 1, 1.0, &mut rng).unwrap();
        assert_eq!(out.len(), 1);
        counts[out[0].id()] += 1;
    }
    for (id, &p) in probs.iter().enumerate() {
        let freq = counts[id] as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (freq - p).abs() <= 3.0 * se.max(1e-4),
            "token {id}: frequency {freq} vs probability {p} (se {se})"
        );
    }
}

#[test]
fn label_rate_matches_binomial_tail() {
    // match fraction > 0.8 on 16 positions means at most 3 flips
    let p = 0.1;
    let want: f64 = (0..=3).map(|k| binomial(16, k, p)).sum();
    let (_, critiques) = make_synthetic_corpus_with(1000, 16, 77, &[p], 0.8);
    assert_eq!(critiques.len(), 1000);
    let rate = critiques
        .iter()
        .filter(|c| c.label == Judgment::True)
        .count() as f64
        / 1000.0;
    let se = (want * (1.0 - want) / 1000.0).sqrt();
    assert!(
        (rate - want).abs() <= 3.0 * se,
        "True rate {rate} vs binomial tail {want} (se {se})"
    );
}

/// Zero weights except for an output bias that rules out everything but the
/// two bit tokens: every position is a fair coin.
fn coin_policy() -> ToyPolicy {
    let mut policy = ToyPolicy::zeros(PolicyConfig::default()).unwrap();
    let n = policy.num_params();
    let bias = &mut policy.params_mut()[n - VOCAB_SIZE..];
    for t in [Token::JudgeT, Token::JudgeF, Token::Eos] {
        bias[t.id()] = -60.0;
    }
    policy
}

#[test]
fn random_policy_validation_is_one_half() {
    let (problems, _) = make_synthetic_corpus(300, 16, 5);
    let policy = coin_policy();
    let score =
        validate_with(&policy, &problems, &[], 16, ValidationMode::Sampled, 1.0, 9).unwrap();
    let se = (0.25 / (16.0 * problems.len() as f64)).sqrt();
    assert!(
        (score - 0.5).abs() <= 3.0 * se,
        "random-policy score {score} (se {se})"
    );
    let again =
        validate_with(&policy, &problems, &[], 16, ValidationMode::Sampled, 1.0, 9).unwrap();
    assert_eq!(score.to_bits(), again.to_bits());
}

fn expected_pass_rate(policy: &ToyPolicy, problem: &SyntheticProblem, rng: &mut ChaCha8Rng) -> f64 {
    let n = 200;
    (0..n)
        .map(|_| {
            let (out, _) = policy.sample(&problem.rl_prompt(), 24, 1.0, rng).unwrap();
            let end = out
                .iter()
                .position(|&t| t == Token::Eos)
                .unwrap_or(out.len());
            run_synthetic(&out[..end], problem).pass_rate
        })
        .sum::<f64>()
        / n as f64
}

#[test]
fn reinforce_learns_a_single_problem() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let target: Vec<Token> = (0..16).map(|_| Token::bit(rng.random())).collect();
    let problem = SyntheticProblem::new("only", target);
    let mut policy = ToyPolicy::random(PolicyConfig::default(), &mut rng).unwrap();
    // no KL and on-policy ratios: the update is REINFORCE with a group baseline
    let cfg = GrpoConfig {
        kl_coeff: 0.0,
        ..GrpoConfig::default()
    };
    let mut opt = Optimizer::new(OptimizerConfig::adam(1e-2), policy.num_params());
    let start = expected_pass_rate(&policy, &problem, &mut rng);
    let mut reached = None;
    for step in 0..2000 {
        let samples: Vec<(Vec<Token>, Vec<f64>)> = (0..8)
            .map(|_| {
                policy
                    .sample(&problem.rl_prompt(), 24, 1.0, &mut rng)
                    .unwrap()
            })
            .collect();
        let rewards: Vec<f64> = samples
            .iter()
            .map(|(out, _)| {
                let end = out
                    .iter()
                    .position(|&t| t == Token::Eos)
                    .unwrap_or(out.len());
                run_synthetic(&out[..end], &problem).pass_rate
            })
            .collect();
        let group = RolloutGroup {
            input_id: problem.id.clone(),
            prompt: problem.rl_prompt(),
            outputs: samples.iter().map(|s| s.0.clone()).collect(),
            old_logprobs: samples.iter().map(|s| s.1.clone()).collect(),
            ref_logprobs: samples.iter().map(|s| s.1.clone()).collect(),
            rewards,
        };
        if !group.is_degenerate() {
            let g = grpo_gradient(&group, &policy, &cfg).unwrap();
            opt.step(policy.params_mut(), &g.grad);
        }
        if (step + 1) % 50 == 0 && expected_pass_rate(&policy, &problem, &mut rng) > 0.95 {
            reached = Some(step + 1);
            break;
        }
    }
    assert!(
        reached.is_some(),
        "expected pass rate stayed at or below 0.95 (start {start:.3})"
    );
}
