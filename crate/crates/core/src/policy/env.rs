//! Synthetic verifiable environment.
//!
//! An RL item is a random bit string; the policy sees it as its prompt and
//! must reproduce it, each position acting as one test case. A CRL item
//! shows the target followed by a candidate copy with some bits flipped;
//! the policy must emit a judgment token, and the ground truth is whether
//! the candidate's match fraction exceeds the label threshold.

use super::Token;
use crate::corpus::{CritiqueExample, Judgment, Problem, TestCase};
use crate::critique::{label_candidates, CandidateSet};
use crate::sandbox::run_synthetic;
use crate::seed::rng_for;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Per-bit flip probabilities of the generated critique candidates.
pub const FLIP_PROBS: [f64; 3] = [0.0, 0.1, 0.3];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticProblem {
    pub id: String,
    pub target: Vec<Token>,
}

impl SyntheticProblem {
    pub fn new(id: impl Into<String>, target: Vec<Token>) -> Self {
        assert!(!target.is_empty(), "synthetic targets are non-empty");
        Self {
            id: id.into(),
            target,
        }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn rl_prompt(&self) -> Vec<Token> {
        self.target.clone()
    }

    /// Target followed by the candidate: the `[question; solution]` input.
    pub fn crl_prompt(&self, candidate: &[Token]) -> Vec<Token> {
        let mut p = self.target.clone();
        p.extend_from_slice(candidate);
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCritique {
    pub id: String,
    pub problem_id: String,
    pub candidate: Vec<Token>,
    pub label: Judgment,
    pub match_fraction: f64,
}

pub fn bits_to_string(tokens: &[Token]) -> String {
    tokens.iter().map(|t| t.to_string()).collect()
}

/// Parses a string of `0`/`1` characters.
pub fn parse_bits(s: &str) -> Option<Vec<Token>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(Token::Bit0),
            '1' => Some(Token::Bit1),
            _ => None,
        })
        .collect()
}

/// Text form of a policy output: bits as digits and judgment tokens as
/// `\conclusion{T}` / `\conclusion{F}`; stops at EOS.
pub fn render_output(tokens: &[Token]) -> String {
    let mut s = String::new();
    for t in tokens {
        match t {
            Token::Bit0 => s.push('0'),
            Token::Bit1 => s.push('1'),
            Token::JudgeT => s.push_str("\\conclusion{T}"),
            Token::JudgeF => s.push_str("\\conclusion{F}"),
            Token::Eos => break,
        }
    }
    s
}

/// Generates `n` random targets of length `len` and, for each, one
/// corrupted candidate per entry of [`FLIP_PROBS`], labeled with the
/// standard threshold rule (`match fraction > 0.8`).
pub fn make_synthetic_corpus(
    n: usize,
    len: usize,
    seed: u64,
) -> (Vec<SyntheticProblem>, Vec<SyntheticCritique>) {
    make_synthetic_corpus_with(n, len, seed, &FLIP_PROBS, 0.8)
}

pub fn make_synthetic_corpus_with(
    n: usize,
    len: usize,
    seed: u64,
    flip_probs: &[f64],
    threshold: f64,
) -> (Vec<SyntheticProblem>, Vec<SyntheticCritique>) {
    assert!(
        n >= 1 && len >= 1,
        "need at least one problem of length >= 1"
    );
    let mut problems = Vec::with_capacity(n);
    let mut critiques = Vec::with_capacity(n * flip_probs.len());
    for i in 0..n {
        let mut rng = rng_for(seed, 0x5EED, i as u64);
        let target: Vec<Token> = (0..len).map(|_| Token::bit(rng.random::<bool>())).collect();
        let problem = SyntheticProblem::new(format!("syn-{i:05}"), target);

        let candidates: Vec<Vec<Token>> = flip_probs
            .iter()
            .map(|&p| {
                problem
                    .target
                    .iter()
                    .map(|&b| {
                        if rng.random::<f64>() < p {
                            Token::bit(b == Token::Bit0)
                        } else {
                            b
                        }
                    })
                    .collect()
            })
            .collect();
        let set = CandidateSet {
            problem_id: problem.id.clone(),
            candidates: candidates
                .iter()
                .map(|c| (bits_to_string(c), run_synthetic(c, &problem)))
                .collect(),
        };
        let labeled = label_candidates(&set, &bits_to_string(&problem.target), threshold)
            .expect("threshold is in (0, 1)");
        for (k, (ex, cand)) in labeled.into_iter().zip(candidates).enumerate() {
            critiques.push(SyntheticCritique {
                id: format!("{}-c{k}", problem.id),
                problem_id: problem.id.clone(),
                candidate: cand,
                label: ex.label,
                match_fraction: ex.source_pass_rate,
            });
        }
        problems.push(problem);
    }
    (problems, critiques)
}

/// File representation: the prompt is the bit string and test `j` maps
/// input `j` to bit `j`. Critique questions and solutions are bit strings.
pub fn synthetic_to_corpus(
    problems: &[SyntheticProblem],
    critiques: &[SyntheticCritique],
) -> (Vec<Problem>, Vec<CritiqueExample>) {
    let by_id: HashMap<&str, &SyntheticProblem> =
        problems.iter().map(|p| (p.id.as_str(), p)).collect();
    let ps = problems
        .iter()
        .map(|p| Problem {
            id: p.id.clone(),
            prompt: bits_to_string(&p.target),
            tests: p
                .target
                .iter()
                .enumerate()
                .map(|(j, b)| TestCase::new(j.to_string(), b.to_string()))
                .collect(),
        })
        .collect();
    let cs = critiques
        .iter()
        .filter_map(|c| {
            let p = by_id.get(c.problem_id.as_str())?;
            Some(CritiqueExample {
                id: c.id.clone(),
                question: bits_to_string(&p.target),
                solution: bits_to_string(&c.candidate),
                label: c.label,
                source_pass_rate: c.match_fraction,
            })
        })
        .collect();
    (ps, cs)
}

/// Inverse of [`synthetic_to_corpus`]. Critiques are attached to the first
/// problem whose prompt equals their question; unmatched or non-bit records
/// are reported by id.
pub fn synthetic_from_corpus(
    problems: &[Problem],
    critiques: &[CritiqueExample],
) -> Result<(Vec<SyntheticProblem>, Vec<SyntheticCritique>), String> {
    let mut ps = Vec::with_capacity(problems.len());
    let mut by_prompt: HashMap<&str, usize> = HashMap::new();
    for (i, p) in problems.iter().enumerate() {
        let target = parse_bits(&p.prompt)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| format!("problem `{}`: prompt is not a bit string", p.id))?;
        by_prompt.entry(p.prompt.as_str()).or_insert(i);
        ps.push(SyntheticProblem::new(p.id.clone(), target));
    }
    let mut cs = Vec::with_capacity(critiques.len());
    for c in critiques {
        let &i = by_prompt
            .get(c.question.as_str())
            .ok_or_else(|| format!("critique `{}`: question matches no problem", c.id))?;
        let candidate = parse_bits(&c.solution)
            .ok_or_else(|| format!("critique `{}`: solution is not a bit string", c.id))?;
        cs.push(SyntheticCritique {
            id: c.id.clone(),
            problem_id: ps[i].id.clone(),
            candidate,
            label: c.label,
            match_fraction: c.source_pass_rate,
        });
    }
    Ok((ps, cs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_labels_follow_threshold() {
        let (ps, cs) = make_synthetic_corpus(50, 16, 3);
        assert_eq!(ps.len(), 50);
        assert_eq!(cs.len(), 150);
        for c in &cs {
            let p = ps.iter().find(|p| p.id == c.problem_id).unwrap();
            let matches = p
                .target
                .iter()
                .zip(&c.candidate)
                .filter(|(a, b)| a == b)
                .count();
            assert_eq!(c.match_fraction, matches as f64 / 16.0);
            assert_eq!(c.label == Judgment::True, matches as f64 / 16.0 > 0.8);
        }
        // p = 0 candidates are exact copies
        for c in cs.iter().filter(|c| c.id.ends_with("-c0")) {
            assert_eq!(c.label, Judgment::True);
            assert_eq!(c.match_fraction, 1.0);
        }
    }

    #[test]
    fn four_flips_is_false() {
        let target = vec![Token::Bit1; 16];
        let p = SyntheticProblem::new("x", target.clone());
        let mut cand = target;
        for c in &mut cand[..4] {
            *c = Token::Bit0;
        }
        let set = CandidateSet {
            problem_id: "x".into(),
            candidates: vec![(bits_to_string(&cand), run_synthetic(&cand, &p))],
        };
        let ex = label_candidates(&set, "q", 0.8).unwrap();
        assert_eq!(ex[0].source_pass_rate, 0.75);
        assert_eq!(ex[0].label, Judgment::False);
    }

    #[test]
    fn deterministic_and_round_trips_through_files() {
        let a = make_synthetic_corpus(20, 8, 9);
        let b = make_synthetic_corpus(20, 8, 9);
        assert_eq!(a, b);
        let (ps, cs) = synthetic_to_corpus(&a.0, &a.1);
        assert_eq!(ps[0].tests.len(), 8);
        let back = synthetic_from_corpus(&ps, &cs).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn render_stops_at_eos() {
        let out = [
            Token::Bit1,
            Token::JudgeF,
            Token::Bit0,
            Token::Eos,
            Token::JudgeT,
        ];
        assert_eq!(render_output(&out), "1\\conclusion{F}0");
        assert_eq!(
            parse_bits("0110"),
            Some(vec![Token::Bit0, Token::Bit1, Token::Bit1, Token::Bit0])
        );
        assert_eq!(parse_bits("01x"), None);
    }
}
