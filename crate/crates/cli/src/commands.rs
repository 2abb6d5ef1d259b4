use crate::{FilterArgs, GenArgs, MakeCritiquesArgs, Preset, TrainArgs};
use crl_core::corpus::{
    corpus_stats, filter_corpus, read_corpus, read_corpus_with_meta, read_critiques, write_corpus,
    write_corpus_with_meta, write_critiques, CorpusError, CorpusMeta, CritiqueMeta, FilterOptions,
    Judgment, Problem, Tokenizer,
};
use crl_core::critique::{
    label_candidates, select_best_of_n, CandidateSet, CritiqueError, CritiqueRecord,
};
use crl_core::policy::{
    make_synthetic_corpus, save_checkpoint, synthetic_from_corpus, synthetic_to_corpus,
};
use crl_core::sandbox::{run_solution, ExecLimits, RunnerSet, SandboxError};
use crl_core::trainer::{train_with, MetricsWriter, TrainConfig, TrainError};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use std::collections::HashMap;
use std::path::Path;

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const RUNTIME: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

fn fail(code: u8, message: impl std::fmt::Display) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

fn usage(m: impl std::fmt::Display) -> Failure {
    fail(USAGE, m)
}

fn data(m: impl std::fmt::Display) -> Failure {
    fail(DATA, m)
}

fn runtime(m: impl std::fmt::Display) -> Failure {
    fail(RUNTIME, m)
}

fn read_err(path: &Path, e: CorpusError) -> Failure {
    match e {
        CorpusError::InvalidOptions(m) => usage(m),
        CorpusError::Io { .. } => data(e),
        other => data(format!("{}: {other}", path.display())),
    }
}

fn write_err(e: CorpusError) -> Failure {
    runtime(e)
}

fn train_err(e: TrainError) -> Failure {
    match e {
        TrainError::Config(_) | TrainError::Data(_) | TrainError::SplitOverlap(_) => data(e),
        other => runtime(other),
    }
}

fn print_json(v: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("json value serializes")
    );
}

/// Non-blank lines of a JSON-lines file, each tagged with its line number.
fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .map_err(|e| data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateLine {
    problem_id: String,
    solution: String,
    #[serde(default)]
    runner: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CritiqueLine {
    problem_id: String,
    /// Position of the candidate among its problem's candidates, from 0.
    candidate: usize,
    text: String,
}

/// Candidates grouped by problem, problems in order of first appearance.
fn group_candidates(
    lines: Vec<(usize, CandidateLine)>,
) -> Vec<(String, Vec<(usize, CandidateLine)>)> {
    let mut order: Vec<(String, Vec<(usize, CandidateLine)>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (n, c) in lines {
        let slot = *index.entry(c.problem_id.clone()).or_insert_with(|| {
            order.push((c.problem_id.clone(), Vec::new()));
            order.len() - 1
        });
        order[slot].1.push((n, c));
    }
    order
}

pub fn train(a: TrainArgs) -> Result<(), Failure> {
    let config = TrainConfig::load(&a.config).map_err(data)?;
    let (problems, critiques) = match &a.corpus {
        Some(path) => {
            let ps = read_corpus(path).map_err(|e| read_err(path, e))?;
            let cs = match &a.critique {
                Some(c) => read_critiques(c).map_err(|e| read_err(c, e))?,
                None => Vec::new(),
            };
            synthetic_from_corpus(&ps, &cs).map_err(data)?
        }
        None => {
            if a.synthetic_problems == 0 || a.synthetic_len == 0 {
                return Err(usage("synthetic corpus size and length must be positive"));
            }
            make_synthetic_corpus(a.synthetic_problems, a.synthetic_len, config.seed)
        }
    };
    log::info!(
        "{} problems, {} critiques, {:?} steps",
        problems.len(),
        critiques.len(),
        config.steps
    );

    let mut writer = match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
            std::fs::write(dir.join("config.toml"), config.to_toml())
                .map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
            Some(MetricsWriter::create(dir.join("metrics.jsonl")).map_err(runtime)?)
        }
        None => None,
    };
    let outcome = train_with(&config, &problems, &critiques, |m| {
        if let Some(v) = m.val_score {
            log::info!(
                "step {} phase {} val {:.3} crl acc {}",
                m.step,
                m.phase,
                v,
                m.val_crl_accuracy
                    .map_or("-".to_string(), |x| format!("{x:.3}"))
            );
        }
        match writer.as_mut() {
            Some(w) => w.write(m),
            None => Ok(()),
        }
    })
    .map_err(train_err)?;

    let last = outcome.metrics.last();
    let summary = json!({
        "steps": outcome.metrics.len(),
        "final_phase": last.map(|m| m.phase),
        "best": {
            "step": outcome.best.step,
            "score": outcome.best.score,
            "crl_accuracy": outcome.best.crl_accuracy,
        },
        "evaluations": outcome.evaluations,
        "held_out": outcome.held_out.len(),
    });
    if let Some(dir) = &a.out {
        save_checkpoint(
            outcome.best.policy.policy(),
            Some(outcome.best.step),
            dir.join("best.ckpt.json"),
        )
        .map_err(runtime)?;
        save_checkpoint(
            &outcome.policy,
            last.map(|m| m.step),
            dir.join("final.ckpt.json"),
        )
        .map_err(runtime)?;
        let text = serde_json::to_string_pretty(&summary).expect("json value serializes");
        std::fs::write(dir.join("summary.json"), text + "\n")
            .map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    print_json(&summary);
    Ok(())
}

pub fn filter(a: FilterArgs) -> Result<(), Failure> {
    let opts = FilterOptions {
        max_token_len: a.max_tokens,
        max_cases: a.max_cases,
        seed: a.seed,
        tokenizer: if a.chars {
            Tokenizer::Chars
        } else {
            Tokenizer::Whitespace
        },
    };
    let (problems, _) = read_corpus_with_meta(&a.input).map_err(|e| read_err(&a.input, e))?;
    let kept = filter_corpus(&problems, &opts).map_err(|e| read_err(&a.input, e))?;
    write_corpus_with_meta(&kept, &CorpusMeta { seed: Some(a.seed) }, &a.out).map_err(write_err)?;
    print_json(&json!({
        "before": corpus_stats(&problems),
        "after": corpus_stats(&kept),
    }));
    Ok(())
}

pub fn stats(input: &Path) -> Result<(), Failure> {
    let problems = read_corpus(input).map_err(|e| read_err(input, e))?;
    print_json(&serde_json::to_value(corpus_stats(&problems)).expect("stats serialize"));
    Ok(())
}

fn load_runners(path: Option<&Path>) -> Result<RunnerSet, Failure> {
    let Some(path) = path else {
        return Ok(RunnerSet::default());
    };
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    RunnerSet::from_toml(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn sandbox_err(e: SandboxError) -> Failure {
    match e {
        SandboxError::NoTests => data(e),
        SandboxError::InvalidLimits(_) => usage(e),
        other => runtime(other),
    }
}

pub fn make_critiques(a: MakeCritiquesArgs) -> Result<(), Failure> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(usage(CritiqueError::BadThreshold(a.threshold)));
    }
    let runners = load_runners(a.runner_config.as_deref())?;
    let mut limits = ExecLimits::default();
    if let Some(ms) = a.timeout_ms {
        limits.wall_timeout_ms = ms;
    }
    limits.validate().map_err(usage)?;

    let problems = read_corpus(&a.corpus).map_err(|e| read_err(&a.corpus, e))?;
    let by_id: HashMap<&str, &Problem> = problems.iter().map(|p| (p.id.as_str(), p)).collect();
    let lines = read_jsonl::<CandidateLine>(&a.candidates)?;

    let mut examples = Vec::new();
    for (pid, cands) in group_candidates(lines) {
        let problem = by_id.get(pid.as_str()).ok_or_else(|| {
            data(format!(
                "{}:{}: unknown problem `{pid}`",
                a.candidates.display(),
                cands[0].0
            ))
        })?;
        let mut set = CandidateSet {
            problem_id: pid.clone(),
            candidates: Vec::with_capacity(cands.len()),
        };
        for (n, c) in cands {
            let runner = match &c.runner {
                Some(name) => runners.get(name).ok_or_else(|| {
                    data(format!(
                        "{}:{n}: unknown runner `{name}`",
                        a.candidates.display()
                    ))
                })?,
                None => runners
                    .get(&a.runner)
                    .ok_or_else(|| usage(format!("unknown runner `{}`", a.runner)))?,
            };
            let report =
                run_solution(&c.solution, problem, &limits, runner).map_err(|e| match e {
                    SandboxError::NoTests => data(format!("problem `{pid}` has no test cases")),
                    other => sandbox_err(other),
                })?;
            log::debug!(
                "{pid} candidate {}: pass rate {}",
                set.candidates.len(),
                report.pass_rate
            );
            set.candidates.push((c.solution, report));
        }
        examples.extend(label_candidates(&set, &problem.prompt, a.threshold).map_err(usage)?);
    }
    write_critiques(
        &examples,
        &CritiqueMeta {
            label_threshold: a.threshold,
        },
        &a.out,
    )
    .map_err(write_err)?;
    let trues = examples
        .iter()
        .filter(|e| e.label == Judgment::True)
        .count();
    print_json(&json!({
        "examples": examples.len(),
        "true": trues,
        "false": examples.len() - trues,
    }));
    Ok(())
}

pub fn select(candidates: &Path, critiques: &Path) -> Result<(), Failure> {
    let groups = group_candidates(read_jsonl::<CandidateLine>(candidates)?);
    let slot: HashMap<&str, usize> = groups
        .iter()
        .enumerate()
        .map(|(i, (pid, _))| (pid.as_str(), i))
        .collect();
    let mut records: Vec<Vec<Vec<CritiqueRecord>>> = groups
        .iter()
        .map(|(_, cs)| vec![Vec::new(); cs.len()])
        .collect();
    for (n, c) in read_jsonl::<CritiqueLine>(critiques)? {
        let at = |m: String| data(format!("{}:{n}: {m}", critiques.display()));
        let &g = slot
            .get(c.problem_id.as_str())
            .ok_or_else(|| at(format!("unknown problem `{}`", c.problem_id)))?;
        let per = records[g].get_mut(c.candidate).ok_or_else(|| {
            at(format!(
                "problem `{}` has no candidate {}",
                c.problem_id, c.candidate
            ))
        })?;
        per.push(CritiqueRecord::from_text(&c.text));
    }
    for ((pid, cands), recs) in groups.iter().zip(&records) {
        let k = select_best_of_n(recs).map_err(|e| data(format!("problem `{pid}`: {e}")))?;
        println!(
            "{}",
            json!({"problem_id": pid, "selected": k, "solution": cands[k].1.solution})
        );
    }
    Ok(())
}

pub fn gen_synthetic(a: GenArgs) -> Result<(), Failure> {
    if a.problems == 0 || a.len == 0 {
        return Err(usage("--problems and --len must be positive"));
    }
    let (ps, cs) = make_synthetic_corpus(a.problems, a.len, a.seed);
    let (problems, critiques) = synthetic_to_corpus(&ps, &cs);
    write_corpus(&problems, &a.corpus).map_err(write_err)?;
    write_critiques(&critiques, &CritiqueMeta::default(), &a.critiques).map_err(write_err)?;
    print_json(&json!({"problems": problems.len(), "critiques": critiques.len()}));
    Ok(())
}

pub fn print_config(preset: Preset) -> Result<(), Failure> {
    let cfg = match preset {
        Preset::Desk => TrainConfig::desk(),
        Preset::LargeScale => TrainConfig::large_scale(),
    };
    print!("{}", cfg.to_toml());
    Ok(())
}
