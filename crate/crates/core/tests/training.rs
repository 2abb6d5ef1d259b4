//! Properties of the training loop observable from its outputs.

use crl_core::critique::ItemKind;
use crl_core::policy::{make_synthetic_corpus, ToyPolicy};
use crl_core::trainer::{
    read_metrics, split_problems, train, train_with, MetricsWriter, PhaseSchedule, TrainConfig,
};
use std::collections::{HashMap, HashSet};

fn small(crl_fraction: f64) -> TrainConfig {
    TrainConfig {
        crl_fraction,
        batch_size: 16,
        steps: Some(40),
        eval_every: 10,
        threads: 1,
        phase: PhaseSchedule {
            window: 5,
            hard_step: Some(25),
            ..PhaseSchedule::default()
        },
        ..TrainConfig::desk()
    }
}

#[test]
fn one_epoch_schedules_every_training_problem_once() {
    let (problems, critiques) = make_synthetic_corpus(100, 16, 8);
    for fraction in [0.0, 0.2, 0.5, 1.0] {
        let cfg = TrainConfig {
            crl_fraction: fraction,
            steps: None,
            ..small(fraction)
        };
        let out = train(&cfg, &problems, &critiques).unwrap();
        let split = split_problems(problems.len(), cfg.validation_fraction, cfg.seed).unwrap();
        let mut want: Vec<&str> = split
            .train
            .iter()
            .map(|&i| problems[i].id.as_str())
            .collect();
        let mut got: Vec<&str> = out
            .scheduled
            .iter()
            .map(|s| s.problem_id.as_str())
            .collect();
        want.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, want, "fraction {fraction}");

        let crl = out
            .scheduled
            .iter()
            .filter(|s| s.kind == ItemKind::Crl)
            .count();
        assert_eq!(crl, (fraction * want.len() as f64).round() as usize);
        assert_eq!(out.metrics.len(), want.len().div_ceil(cfg.batch_size));
        let per_step: usize = out.metrics.iter().map(|m| m.rl_items + m.crl_items).sum();
        assert_eq!(per_step, want.len());
    }
}

#[test]
fn item_kinds_are_fixed_across_epochs() {
    let (problems, critiques) = make_synthetic_corpus(60, 16, 4);
    let out = train(&small(0.2), &problems, &critiques).unwrap();
    let mut kind: HashMap<&str, ItemKind> = HashMap::new();
    for s in &out.scheduled {
        let k = *kind.entry(s.problem_id.as_str()).or_insert(s.kind);
        assert_eq!(k, s.kind, "{} changed kind", s.problem_id);
    }
}

#[test]
fn phase_never_decreases_and_scales_crl_in_phase_one() {
    let (problems, critiques) = make_synthetic_corpus(80, 16, 2);
    let out = train(&small(0.5), &problems, &critiques).unwrap();
    let phases: Vec<u8> = out.metrics.iter().map(|m| m.phase).collect();
    assert!(phases.windows(2).all(|w| w[0] <= w[1]), "{phases:?}");
    assert_eq!(phases[0], 1);
    assert_eq!(*phases.last().unwrap(), 2, "hard step 25 of 40 must switch");
    for m in &out.metrics {
        if let (Some(r), Some(acc)) = (m.mean_r_crl, m.crl_accuracy) {
            let scale = if m.phase == 1 { 0.8 } else { 1.0 };
            assert!(
                (r - scale * acc).abs() < 1e-12,
                "step {}: phase {} reward {r} accuracy {acc}",
                m.step,
                m.phase
            );
        }
    }
}

#[test]
fn best_checkpoint_is_the_maximum_evaluation() {
    let (problems, critiques) = make_synthetic_corpus(80, 16, 6);
    let out = train(&small(0.2), &problems, &critiques).unwrap();
    let max = out
        .evaluations
        .iter()
        .map(|e| e.score)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best.score, max);
    let first_max = out.evaluations.iter().find(|e| e.score == max).unwrap();
    assert_eq!(out.best.step, first_max.step);
    let steps: Vec<usize> = out.evaluations.iter().map(|e| e.step).collect();
    assert_eq!(steps, vec![0, 10, 20, 30, 40]);
}

#[test]
fn held_out_problems_never_reach_training() {
    let (problems, critiques) = make_synthetic_corpus(80, 16, 1);
    let out = train(&small(1.0), &problems, &critiques).unwrap();
    let held: HashSet<&str> = out.held_out.iter().map(String::as_str).collect();
    assert_eq!(held.len(), 16);
    assert!(out
        .scheduled
        .iter()
        .all(|s| !held.contains(s.problem_id.as_str())));
}

#[test]
fn zero_learning_rate_keeps_the_initial_policy() {
    let (problems, critiques) = make_synthetic_corpus(40, 16, 3);
    let cfg = TrainConfig {
        lr: 0.0,
        steps: Some(5),
        ..small(0.2)
    };
    let out = train(&cfg, &problems, &critiques).unwrap();
    let init = &out.best.policy;
    assert_eq!(out.best.step, 0);
    let same = |a: &ToyPolicy, b: &ToyPolicy| {
        a.params()
            .iter()
            .zip(b.params())
            .all(|(x, y)| x.to_bits() == y.to_bits())
    };
    assert!(same(init.policy(), &out.policy));
    assert_eq!(out.metrics.len(), 5);
}

#[test]
fn metrics_file_round_trips_what_the_loop_emitted() {
    let (problems, critiques) = make_synthetic_corpus(40, 16, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.jsonl");
    let mut writer = MetricsWriter::create(&path).unwrap();
    let cfg = TrainConfig {
        steps: Some(6),
        ..small(0.2)
    };
    let out = train_with(&cfg, &problems, &critiques, |m| writer.write(m)).unwrap();
    drop(writer);
    let read = read_metrics(&path).unwrap();
    assert_eq!(read, out.metrics);
}

#[test]
fn runs_are_reproducible_single_threaded() {
    let (problems, critiques) = make_synthetic_corpus(60, 16, 5);
    let cfg = small(0.2);
    let a = train(&cfg, &problems, &critiques).unwrap();
    let b = train(&cfg, &problems, &critiques).unwrap();
    let strip = |o: &crl_core::trainer::TrainOutcome| {
        o.metrics
            .iter()
            .map(|m| serde_json::to_string(&m.without_timing()).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.scheduled, b.scheduled);
}

#[test]
fn thread_count_does_not_change_results() {
    let (problems, critiques) = make_synthetic_corpus(60, 16, 5);
    let one = train(&small(0.2), &problems, &critiques).unwrap();
    let four = train(
        &TrainConfig {
            threads: 4,
            ..small(0.2)
        },
        &problems,
        &critiques,
    )
    .unwrap();
    let strip = |o: &crl_core::trainer::TrainOutcome| {
        o.metrics
            .iter()
            .map(|m| m.without_timing())
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&one), strip(&four));
}
