//! Problems with verification tests, critique examples, the test-case
//! filtering pass and corpus statistics.
//!
//! Filtering drops every test case whose input is longer than a token budget
//! and then keeps a uniform random subset of at most `max_cases` survivors
//! per problem. Problems with no surviving case are dropped, since a pass
//! rate over zero tests is undefined.

mod io;

pub use io::{
    read_corpus, read_corpus_with_meta, read_critiques, read_critiques_with_meta, write_corpus,
    write_corpus_with_meta, write_critiques, CorpusMeta, CritiqueMeta, CORPUS_FORMAT,
    CRITIQUE_FORMAT, FORMAT_VERSION,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("invalid filter options: {0}")]
    InvalidOptions(String),
}

/// Ground-truth or predicted correctness of a solution. Serialized as a JSON
/// boolean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "bool", into = "bool")]
pub enum Judgment {
    True,
    False,
}

impl Judgment {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Judgment::True
        } else {
            Judgment::False
        }
    }

    pub fn as_bool(self) -> bool {
        self == Judgment::True
    }
}

impl From<bool> for Judgment {
    fn from(b: bool) -> Self {
        Judgment::from_bool(b)
    }
}

impl From<Judgment> for bool {
    fn from(j: Judgment) -> bool {
        j.as_bool()
    }
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Judgment::True => "True",
            Judgment::False => "False",
        })
    }
}

/// How the length budget of a test input is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tokenizer {
    /// Maximal runs of non-whitespace characters.
    #[default]
    Whitespace,
    /// Unicode scalar values; pair it with a budget around 4x the token one.
    Chars,
}

impl Tokenizer {
    pub fn count(self, text: &str) -> usize {
        match self {
            Tokenizer::Whitespace => text.split_whitespace().count(),
            Tokenizer::Chars => text.chars().count(),
        }
    }
}

/// Whitespace-chunk token count used throughout the crate.
pub fn count_tokens(text: &str) -> usize {
    Tokenizer::Whitespace.count(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    pub expected_output: String,
}

impl TestCase {
    pub fn new(input: impl Into<String>, expected_output: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            expected_output: expected_output.into(),
        }
    }

    /// Token count of the input under the default tokenizer.
    pub fn token_count(&self) -> usize {
        count_tokens(&self.input)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub prompt: String,
    pub tests: Vec<TestCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueExample {
    pub id: String,
    pub question: String,
    pub solution: String,
    pub label: Judgment,
    pub source_pass_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    pub max_token_len: usize,
    pub max_cases: usize,
    pub seed: u64,
    pub tokenizer: Tokenizer,
}

impl FilterOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            max_token_len: 200,
            max_cases: 30,
            seed,
            tokenizer: Tokenizer::Whitespace,
        }
    }

    /// Character-budget variant: 800 characters stands in for 200 tokens.
    pub fn chars(seed: u64) -> Self {
        Self {
            max_token_len: 800,
            tokenizer: Tokenizer::Chars,
            ..Self::new(seed)
        }
    }
}

/// Generator used to sample the retained cases of the problem at `index`
/// (its position in the unfiltered input): ChaCha8 seeded with `seed`, on
/// stream `index`.
pub fn sampling_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Drops over-long test cases, samples at most `max_cases` of the survivors
/// (keeping their original relative order) and drops problems left empty.
pub fn filter_corpus(
    problems: &[Problem],
    opts: &FilterOptions,
) -> Result<Vec<Problem>, CorpusError> {
    if opts.max_cases == 0 {
        return Err(CorpusError::InvalidOptions(
            "max_cases must be at least 1".into(),
        ));
    }
    let mut out = Vec::with_capacity(problems.len());
    for (index, problem) in problems.iter().enumerate() {
        let survivors: Vec<&TestCase> = problem
            .tests
            .iter()
            .filter(|t| opts.tokenizer.count(&t.input) <= opts.max_token_len)
            .collect();
        if survivors.is_empty() {
            continue;
        }
        let tests = if survivors.len() <= opts.max_cases {
            survivors.into_iter().cloned().collect()
        } else {
            let mut rng = sampling_rng(opts.seed, index);
            let mut picked =
                rand::seq::index::sample(&mut rng, survivors.len(), opts.max_cases).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| survivors[i].clone()).collect()
        };
        out.push(Problem {
            id: problem.id.clone(),
            prompt: problem.prompt.clone(),
            tests,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_problems: usize,
    pub avg_tests: f64,
    /// Lower middle for an even number of problems.
    pub median_tests: f64,
    /// Mean input length in characters over every test case in the corpus.
    pub avg_test_input_chars: f64,
    /// Set when the corpus had no problems; every other field is zero.
    pub empty: bool,
}

pub fn corpus_stats(problems: &[Problem]) -> CorpusStats {
    if problems.is_empty() {
        log::warn!("corpus_stats called on an empty corpus");
        return CorpusStats {
            num_problems: 0,
            avg_tests: 0.0,
            median_tests: 0.0,
            avg_test_input_chars: 0.0,
            empty: true,
        };
    }
    let mut counts: Vec<usize> = problems.iter().map(|p| p.tests.len()).collect();
    let total_tests: usize = counts.iter().sum();
    counts.sort_unstable();
    let median = counts[(counts.len() - 1) / 2];
    let total_chars: usize = problems
        .iter()
        .flat_map(|p| &p.tests)
        .map(|t| t.input.chars().count())
        .sum();
    CorpusStats {
        num_problems: problems.len(),
        avg_tests: total_tests as f64 / problems.len() as f64,
        median_tests: median as f64,
        avg_test_input_chars: if total_tests == 0 {
            0.0
        } else {
            total_chars as f64 / total_tests as f64
        },
        empty: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(id: &str, inputs: &[&str]) -> Problem {
        Problem {
            id: id.into(),
            prompt: format!("prompt {id}"),
            tests: inputs.iter().map(|i| TestCase::new(*i, "x")).collect(),
        }
    }

    fn tokens(n: usize) -> String {
        vec!["7"; n].join(" ")
    }

    #[test]
    fn count_tokens_examples() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("1 2 3\n4"), 4);
        assert_eq!(count_tokens("  \t\n "), 0);
        let big = tokens(10_000);
        assert_eq!(count_tokens(&big), 10_000);
        assert_eq!(Tokenizer::Chars.count("héllo"), 5);
    }

    #[test]
    fn keeps_thirty_of_ninety_five_survivors() {
        let mut inputs: Vec<String> = (0..100).map(|i| format!("{i} {i}")).collect();
        for k in [3, 20, 41, 77, 99] {
            inputs[k] = tokens(201);
        }
        let p = Problem {
            id: "p".into(),
            prompt: "q".into(),
            tests: inputs
                .iter()
                .map(|i| TestCase::new(i.clone(), ""))
                .collect(),
        };
        let out = filter_corpus(std::slice::from_ref(&p), &FilterOptions::new(1)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].tests.len(), 30);
        assert!(out[0].tests.iter().all(|t| t.token_count() <= 200));
        // order preserved relative to the source
        let pos: Vec<usize> = out[0]
            .tests
            .iter()
            .map(|t| p.tests.iter().position(|s| s == t).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn drops_problem_without_survivors() {
        let long = tokens(250);
        let ps = vec![problem("a", &[&long, &long]), problem("b", &["1 2"])];
        let out = filter_corpus(&ps, &FilterOptions::new(0)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "b");
    }

    #[test]
    fn boundary_token_count_is_kept() {
        let exact = tokens(200);
        let over = tokens(201);
        let out = filter_corpus(&[problem("a", &[&exact, &over])], &FilterOptions::new(0)).unwrap();
        assert_eq!(out[0].tests.len(), 1);
        assert_eq!(out[0].tests[0].input, exact);
    }

    #[test]
    fn rejects_zero_max_cases() {
        let opts = FilterOptions {
            max_cases: 0,
            ..FilterOptions::new(0)
        };
        assert!(filter_corpus(&[], &opts).is_err());
        assert!(filter_corpus(&[], &FilterOptions::new(0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn char_mode_uses_char_budget() {
        let s = "x".repeat(801);
        let out = filter_corpus(&[problem("a", &[&s, "ok"])], &FilterOptions::chars(0)).unwrap();
        assert_eq!(out[0].tests.len(), 1);
    }

    #[test]
    fn stats_examples() {
        let ten: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        let twenty: Vec<String> = (0..20).map(|i| i.to_string()).collect();
        let a = Problem {
            id: "a".into(),
            prompt: String::new(),
            tests: ten.iter().map(|s| TestCase::new(s.clone(), "")).collect(),
        };
        let b = Problem {
            id: "b".into(),
            prompt: String::new(),
            tests: twenty
                .iter()
                .map(|s| TestCase::new(s.clone(), ""))
                .collect(),
        };
        let s = corpus_stats(&[a, b]);
        assert_eq!(s.avg_tests, 15.0);
        assert_eq!(s.median_tests, 10.0);

        let one = problem("c", &[&"z".repeat(40)]);
        assert_eq!(corpus_stats(&[one]).avg_test_input_chars, 40.0);

        let e = corpus_stats(&[]);
        assert!(e.empty);
        assert_eq!(e.num_problems, 0);
        assert_eq!(e.avg_tests, 0.0);
    }

    #[test]
    fn judgment_serializes_as_bool() {
        assert_eq!(serde_json::to_string(&Judgment::True).unwrap(), "true");
        let j: Judgment = serde_json::from_str("false").unwrap();
        assert_eq!(j, Judgment::False);
    }
}
