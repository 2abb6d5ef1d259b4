//! Critique-side machinery: the CRL prompt, parsing of model outputs,
//! labeling candidate solutions by pass rate, mixing CRL items into an RL
//! schedule, and critique-based best-of-n selection.

mod parse;

pub use parse::{extract_code_block, parse_conclusion, parse_conclusion_with, ConclusionMode};

use crate::corpus::{count_tokens, CritiqueExample, Judgment, Problem};
use crate::sandbox::PassReport;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// The CRL prompt template; `{question}` and `{solution}` are the slots.
pub const CRL_PROMPT_TEMPLATE: &str = include_str!("../../assets/crl_prompt.v1.txt");
pub const CRL_PROMPT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CritiqueError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("threshold {0} is outside (0, 1)")]
    BadThreshold(f64),
    #[error("crl fraction {0} is outside [0, 1]")]
    BadFraction(f64),
    #[error("candidate {0} has no critiques")]
    NoCritiques(usize),
    #[error("no candidates to select from")]
    NoCandidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParsedJudgment {
    True,
    False,
    Missing,
}

impl ParsedJudgment {
    pub fn as_judgment(self) -> Option<Judgment> {
        match self {
            ParsedJudgment::True => Some(Judgment::True),
            ParsedJudgment::False => Some(Judgment::False),
            ParsedJudgment::Missing => None,
        }
    }
}

impl From<Judgment> for ParsedJudgment {
    fn from(j: Judgment) -> Self {
        match j {
            Judgment::True => ParsedJudgment::True,
            Judgment::False => ParsedJudgment::False,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CritiquePrompt {
    pub question: String,
    pub solution: String,
    pub rendered: String,
}

/// Fills the template slots. Each slot is substituted exactly once, so
/// slot-like text inside the inputs is left alone.
pub fn render_crl_prompt(question: &str, solution: &str) -> Result<CritiquePrompt, CritiqueError> {
    if question.is_empty() {
        return Err(CritiqueError::EmptyInput("question"));
    }
    if solution.is_empty() {
        return Err(CritiqueError::EmptyInput("solution"));
    }
    let (head, rest) = CRL_PROMPT_TEMPLATE
        .split_once("{question}")
        .expect("template has a question slot");
    let (mid, tail) = rest
        .split_once("{solution}")
        .expect("template has a solution slot");
    let mut rendered =
        String::with_capacity(CRL_PROMPT_TEMPLATE.len() + question.len() + solution.len());
    rendered.push_str(head);
    rendered.push_str(question);
    rendered.push_str(mid);
    rendered.push_str(solution);
    rendered.push_str(tail);
    Ok(CritiquePrompt {
        question: question.to_string(),
        solution: solution.to_string(),
        rendered,
    })
}

/// Candidate solutions for one problem together with their execution
/// reports.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub problem_id: String,
    pub candidates: Vec<(String, PassReport)>,
}

/// One critique example per candidate; labeled `True` iff its pass rate is
/// strictly above `threshold`.
pub fn label_candidates(
    cands: &CandidateSet,
    question: &str,
    threshold: f64,
) -> Result<Vec<CritiqueExample>, CritiqueError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CritiqueError::BadThreshold(threshold));
    }
    Ok(cands
        .candidates
        .iter()
        .enumerate()
        .map(|(k, (solution, report))| CritiqueExample {
            id: format!("{}-c{k}", cands.problem_id),
            question: question.to_string(),
            solution: solution.clone(),
            label: Judgment::from_bool(report.pass_rate > threshold),
            source_pass_rate: report.pass_rate,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ItemKind {
    Rl,
    Crl,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScheduleItem {
    pub problem_id: String,
    pub kind: ItemKind,
}

/// Designates `round(crl_fraction * n)` problems, chosen uniformly under
/// `seed`, as CRL items. A designated problem for which `has_critiques`
/// is false falls back to RL with a warning. Output follows input order.
pub fn mix_hybrid_ids(
    ids: &[&str],
    has_critiques: impl Fn(&str) -> bool,
    crl_fraction: f64,
    seed: u64,
) -> Result<Vec<ScheduleItem>, CritiqueError> {
    if !(0.0..=1.0).contains(&crl_fraction) {
        return Err(CritiqueError::BadFraction(crl_fraction));
    }
    let n_crl = (crl_fraction * ids.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let designated: HashSet<usize> = order.into_iter().take(n_crl).collect();
    Ok(ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let mut kind = if designated.contains(&i) {
                ItemKind::Crl
            } else {
                ItemKind::Rl
            };
            if kind == ItemKind::Crl && !has_critiques(id) {
                log::warn!(
                    "problem `{id}` designated CRL has no critique examples; using it as RL"
                );
                kind = ItemKind::Rl;
            }
            ScheduleItem {
                problem_id: id.to_string(),
                kind,
            }
        })
        .collect())
}

/// [`mix_hybrid_ids`] over a problem corpus; a problem has critiques when
/// some example's question equals its prompt.
pub fn mix_hybrid(
    rl: &[Problem],
    critiques: &[CritiqueExample],
    crl_fraction: f64,
    seed: u64,
) -> Result<Vec<ScheduleItem>, CritiqueError> {
    let questions: HashSet<&str> = critiques.iter().map(|c| c.question.as_str()).collect();
    let prompts: std::collections::HashMap<&str, &str> = rl
        .iter()
        .map(|p| (p.id.as_str(), p.prompt.as_str()))
        .collect();
    let ids: Vec<&str> = rl.iter().map(|p| p.id.as_str()).collect();
    mix_hybrid_ids(
        &ids,
        |id| prompts.get(id).is_some_and(|q| questions.contains(q)),
        crl_fraction,
        seed,
    )
}

/// One critique of a candidate: its parsed verdict and the length of the
/// critique text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueRecord {
    pub judgment: ParsedJudgment,
    pub thinking_tokens: usize,
}

impl CritiqueRecord {
    /// Parses a raw critique; its length is its corpus-tokenizer count.
    pub fn from_text(text: &str) -> Self {
        Self {
            judgment: parse_conclusion(text),
            thinking_tokens: count_tokens(text),
        }
    }
}

/// Picks the candidate with the most `True` critiques; ties go to the
/// candidate owning the shortest critique, then to the lowest index.
pub fn select_best_of_n(critiques: &[Vec<CritiqueRecord>]) -> Result<usize, CritiqueError> {
    if critiques.is_empty() {
        return Err(CritiqueError::NoCandidates);
    }
    let mut best: Option<(usize, usize, usize)> = None; // (index, trues, shortest)
    for (i, cs) in critiques.iter().enumerate() {
        let shortest = cs
            .iter()
            .map(|c| c.thinking_tokens)
            .min()
            .ok_or(CritiqueError::NoCritiques(i))?;
        let trues = cs
            .iter()
            .filter(|c| c.judgment == ParsedJudgment::True)
            .count();
        let better = match best {
            None => true,
            Some((_, bt, bs)) => trues > bt || (trues == bt && shortest < bs),
        };
        if better {
            best = Some((i, trues, shortest));
        }
    }
    Ok(best.expect("non-empty").0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::{TestStatus, TestVerdict};

    fn report(passed: usize, total: usize) -> PassReport {
        PassReport::from_verdicts(
            (0..total)
                .map(|i| TestVerdict {
                    test_index: i,
                    status: if i < passed {
                        TestStatus::Pass
                    } else {
                        TestStatus::WrongOutput
                    },
                    elapsed_ms: 0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn prompt_contains_inputs_and_ends_with_instruction() {
        let p = render_crl_prompt("Sum two ints", "print(a+b)").unwrap();
        assert!(p
            .rendered
            .starts_with("You will be given a question (problem specification)"));
        assert!(p
            .rendered
            .contains("Question: Sum two ints\n\nSolution: print(a+b)\n"));
        assert!(p
            .rendered
            .ends_with("Conclude with \\conclusion{T} for correct, \\conclusion{F} for wrong."));
        assert_eq!(p, render_crl_prompt("Sum two ints", "print(a+b)").unwrap());
    }

    #[test]
    fn slot_text_inside_inputs_is_preserved() {
        let p = render_crl_prompt("Echo {solution} literally", "{question}").unwrap();
        assert!(p.rendered.contains("Question: Echo {solution} literally\n"));
        assert!(p.rendered.contains("Solution: {question}\n"));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert_eq!(
            render_crl_prompt("", "x"),
            Err(CritiqueError::EmptyInput("question"))
        );
        assert_eq!(
            render_crl_prompt("q", ""),
            Err(CritiqueError::EmptyInput("solution"))
        );
    }

    #[test]
    fn labels_use_strict_threshold() {
        let set = CandidateSet {
            problem_id: "p".into(),
            candidates: vec![
                ("a".into(), report(17, 20)), // 0.85
                ("b".into(), report(4, 5)),   // 0.80
                ("c".into(), report(10, 10)),
                ("d".into(), report(5, 10)),
                ("e".into(), report(81, 100)),
            ],
        };
        let ex = label_candidates(&set, "q", 0.8).unwrap();
        let labels: Vec<Judgment> = ex.iter().map(|e| e.label).collect();
        assert_eq!(
            labels,
            [
                Judgment::True,
                Judgment::False,
                Judgment::True,
                Judgment::False,
                Judgment::True
            ]
        );
        assert_eq!(ex[1].source_pass_rate, 0.8);
        assert_eq!(ex[0].id, "p-c0");
        assert!(label_candidates(
            &CandidateSet {
                problem_id: "p".into(),
                candidates: vec![]
            },
            "q",
            0.8
        )
        .unwrap()
        .is_empty());
        assert_eq!(
            label_candidates(&set, "q", 1.0),
            Err(CritiqueError::BadThreshold(1.0))
        );
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn mix_counts() {
        let owned = ids(100);
        let ids: Vec<&str> = owned.iter().map(String::as_str).collect();
        let count = |f: f64| {
            mix_hybrid_ids(&ids, |_| true, f, 7)
                .unwrap()
                .iter()
                .filter(|i| i.kind == ItemKind::Crl)
                .count()
        };
        assert_eq!(count(0.2), 20);
        assert_eq!(count(0.0), 0);
        assert_eq!(count(1.0), 100);
        assert!(mix_hybrid_ids(&ids, |_| true, 1.5, 0).is_err());
    }

    #[test]
    fn mix_falls_back_without_critiques() {
        let owned = ids(10);
        let ids: Vec<&str> = owned.iter().map(String::as_str).collect();
        let s = mix_hybrid_ids(&ids, |id| id != "p3", 1.0, 0).unwrap();
        assert_eq!(s[3].kind, ItemKind::Rl);
        assert_eq!(s.iter().filter(|i| i.kind == ItemKind::Crl).count(), 9);
    }

    #[test]
    fn mix_over_problems_matches_questions() {
        let problems: Vec<Problem> = (0..4)
            .map(|i| Problem {
                id: format!("p{i}"),
                prompt: format!("q{i}"),
                tests: vec![],
            })
            .collect();
        let crit = vec![CritiqueExample {
            id: "c".into(),
            question: "q2".into(),
            solution: "s".into(),
            label: Judgment::True,
            source_pass_rate: 1.0,
        }];
        let s = mix_hybrid(&problems, &crit, 1.0, 1).unwrap();
        let crl: Vec<&str> = s
            .iter()
            .filter(|i| i.kind == ItemKind::Crl)
            .map(|i| i.problem_id.as_str())
            .collect();
        assert_eq!(crl, ["p2"]);
    }

    fn recs(spec: &[(bool, usize)]) -> Vec<CritiqueRecord> {
        spec.iter()
            .map(|&(t, n)| CritiqueRecord {
                judgment: if t {
                    ParsedJudgment::True
                } else {
                    ParsedJudgment::False
                },
                thinking_tokens: n,
            })
            .collect()
    }

    #[test]
    fn best_of_n_examples() {
        // True counts [3, 7, 7]; shortest critiques [_, 120, 80]
        let table = vec![
            recs(&[(true, 10), (true, 10), (true, 10), (false, 5)]),
            [recs(&[(true, 120); 7]), recs(&[(false, 300)])].concat(),
            [recs(&[(true, 90); 6]), recs(&[(true, 80)])].concat(),
        ];
        assert_eq!(select_best_of_n(&table), Ok(2));
        assert_eq!(select_best_of_n(&[recs(&[(false, 3)])]), Ok(0));
        let zeros = vec![
            recs(&[(false, 50), (false, 40)]),
            recs(&[(false, 12)]),
            recs(&[(false, 30)]),
        ];
        assert_eq!(select_best_of_n(&zeros), Ok(1));
        assert_eq!(select_best_of_n(&[]), Err(CritiqueError::NoCandidates));
        assert_eq!(
            select_best_of_n(&[recs(&[(true, 1)]), vec![]]),
            Err(CritiqueError::NoCritiques(1))
        );
    }

    #[test]
    fn record_from_text() {
        let r = CritiqueRecord::from_text("looks fine to me \\conclusion{T}");
        assert_eq!(r.judgment, ParsedJudgment::True);
        assert_eq!(r.thinking_tokens, 5);
    }
}
