//! Line-delimited JSON corpus files.
//!
//! The first line is a header `{"format": ..., "version": 1, ...}`; every
//! following non-empty line is one record. Problem records carry
//! `{id, prompt, tests: [{input, expected_output}]}` and critique records
//! carry `{id, question, solution, label, source_pass_rate}`.

use super::{CorpusError, CritiqueExample, Judgment, Problem, TestCase};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const CORPUS_FORMAT: &str = "crl-corpus";
pub const CRITIQUE_FORMAT: &str = "crl-critiques";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    /// Seed of the filtering pass that produced the file, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueMeta {
    /// Pass-rate threshold the labels were generated with.
    pub label_threshold: f64,
}

impl Default for CritiqueMeta {
    fn default() -> Self {
        Self {
            label_threshold: 0.8,
        }
    }
}

#[derive(Serialize)]
struct Header<'a, M> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    meta: &'a M,
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(line: usize, field: impl Into<String>, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn write_lines<M: Serialize, T: Serialize>(
    path: &Path,
    format: &str,
    meta: &M,
    records: &[T],
) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    let header = Header {
        format,
        version: FORMAT_VERSION,
        meta,
    };
    serde_json::to_writer(&mut buf, &header).expect("header serializes");
    buf.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("record serializes");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&buf).map_err(|e| io_err(path, e))
}

type Records = Vec<(usize, Map<String, Value>)>;

/// Splits a file into its header object and `(line_number, record)` pairs.
fn read_lines(path: &Path, format: &str) -> Result<(Map<String, Value>, Records), CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (hline, htext) = lines
        .next()
        .ok_or_else(|| parse_err(1, "format", "missing header line"))?;
    let header = parse_object(hline, htext)?;
    match header.get("format").and_then(Value::as_str) {
        Some(f) if f == format => {}
        Some(f) => {
            return Err(parse_err(
                hline,
                "format",
                format!("expected `{format}`, found `{f}`"),
            ))
        }
        None => return Err(parse_err(hline, "format", "missing header")),
    }
    match header.get("version").and_then(Value::as_u64) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(parse_err(
                hline,
                "version",
                format!("unsupported version {v}"),
            ))
        }
        None => return Err(parse_err(hline, "version", "missing or not an integer")),
    }

    let mut records = Vec::new();
    for (n, l) in lines {
        records.push((n, parse_object(n, l)?));
    }
    Ok((header, records))
}

fn parse_object(line: usize, text: &str) -> Result<Map<String, Value>, CorpusError> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(parse_err(line, "<record>", "expected a JSON object")),
        Err(e) => Err(parse_err(line, "<record>", e.to_string())),
    }
}

fn str_field(
    line: usize,
    obj: &Map<String, Value>,
    name: &str,
    path: &str,
) -> Result<String, CorpusError> {
    match obj.get(name) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(parse_err(line, path, "expected a string")),
        None => Err(parse_err(line, path, "missing field")),
    }
}

fn problem_from(line: usize, obj: &Map<String, Value>) -> Result<Problem, CorpusError> {
    let id = str_field(line, obj, "id", "id")?;
    let prompt = str_field(line, obj, "prompt", "prompt")?;
    let tests = match obj.get("tests") {
        Some(Value::Array(a)) => a,
        Some(_) => return Err(parse_err(line, "tests", "expected an array")),
        None => return Err(parse_err(line, "tests", "missing field")),
    };
    let mut cases = Vec::with_capacity(tests.len());
    for (k, t) in tests.iter().enumerate() {
        let Value::Object(t) = t else {
            return Err(parse_err(line, format!("tests[{k}]"), "expected an object"));
        };
        let input = str_field(line, t, "input", &format!("tests[{k}].input"))?;
        let expected = str_field(
            line,
            t,
            "expected_output",
            &format!("tests[{k}].expected_output"),
        )?;
        cases.push(TestCase::new(input, expected));
    }
    Ok(Problem {
        id,
        prompt,
        tests: cases,
    })
}

fn critique_from(line: usize, obj: &Map<String, Value>) -> Result<CritiqueExample, CorpusError> {
    let id = str_field(line, obj, "id", "id")?;
    let question = str_field(line, obj, "question", "question")?;
    let solution = str_field(line, obj, "solution", "solution")?;
    let label = match obj.get("label") {
        Some(Value::Bool(b)) => Judgment::from_bool(*b),
        Some(_) => return Err(parse_err(line, "label", "expected a boolean")),
        None => return Err(parse_err(line, "label", "missing field")),
    };
    let source_pass_rate = match obj.get("source_pass_rate") {
        Some(Value::Number(n)) => n.as_f64().unwrap_or(f64::NAN),
        Some(_) => return Err(parse_err(line, "source_pass_rate", "expected a number")),
        None => return Err(parse_err(line, "source_pass_rate", "missing field")),
    };
    if !(0.0..=1.0).contains(&source_pass_rate) {
        return Err(parse_err(line, "source_pass_rate", "must lie in [0, 1]"));
    }
    Ok(CritiqueExample {
        id,
        question,
        solution,
        label,
        source_pass_rate,
    })
}

fn check_unique<'a>(ids: impl Iterator<Item = (usize, &'a str)>) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for (line, id) in ids {
        if !seen.insert(id) {
            return Err(CorpusError::DuplicateId {
                line,
                id: id.to_string(),
            });
        }
    }
    Ok(())
}

pub fn write_corpus(problems: &[Problem], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_lines(
        path.as_ref(),
        CORPUS_FORMAT,
        &CorpusMeta::default(),
        problems,
    )
}

pub fn write_corpus_with_meta(
    problems: &[Problem],
    meta: &CorpusMeta,
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    write_lines(path.as_ref(), CORPUS_FORMAT, meta, problems)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Problem>, CorpusError> {
    read_corpus_with_meta(path).map(|(p, _)| p)
}

pub fn read_corpus_with_meta(
    path: impl AsRef<Path>,
) -> Result<(Vec<Problem>, CorpusMeta), CorpusError> {
    let (header, records) = read_lines(path.as_ref(), CORPUS_FORMAT)?;
    let meta = CorpusMeta {
        seed: header.get("seed").and_then(Value::as_u64),
    };
    let problems = records
        .iter()
        .map(|(n, obj)| problem_from(*n, obj))
        .collect::<Result<Vec<_>, _>>()?;
    check_unique(
        records
            .iter()
            .map(|(n, _)| *n)
            .zip(problems.iter().map(|p| p.id.as_str())),
    )?;
    Ok((problems, meta))
}

pub fn write_critiques(
    examples: &[CritiqueExample],
    meta: &CritiqueMeta,
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    write_lines(path.as_ref(), CRITIQUE_FORMAT, meta, examples)
}

pub fn read_critiques(path: impl AsRef<Path>) -> Result<Vec<CritiqueExample>, CorpusError> {
    read_critiques_with_meta(path).map(|(c, _)| c)
}

pub fn read_critiques_with_meta(
    path: impl AsRef<Path>,
) -> Result<(Vec<CritiqueExample>, CritiqueMeta), CorpusError> {
    let (header, records) = read_lines(path.as_ref(), CRITIQUE_FORMAT)?;
    let meta = CritiqueMeta {
        label_threshold: header
            .get("label_threshold")
            .and_then(Value::as_f64)
            .unwrap_or(CritiqueMeta::default().label_threshold),
    };
    let examples = records
        .iter()
        .map(|(n, obj)| critique_from(*n, obj))
        .collect::<Result<Vec<_>, _>>()?;
    check_unique(
        records
            .iter()
            .map(|(n, _)| *n)
            .zip(examples.iter().map(|c| c.id.as_str())),
    )?;
    Ok((examples, meta))
}
