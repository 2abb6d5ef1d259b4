//! Total parsers over free-form model output. Both take the last
//! qualifying occurrence in the text.

use super::ParsedJudgment;
use serde::{Deserialize, Serialize};

const CONCLUSION: &str = "\\conclusion{";
const FENCE: &str = "```";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConclusionMode {
    /// Only `T` and `F` are judgments.
    #[default]
    Strict,
    /// Also accepts `True`/`False` in any case, with surrounding spaces.
    Lenient,
}

/// Judgment of the last `\conclusion{...}` in `output`; `Missing` when
/// there is none or its payload is not a judgment.
pub fn parse_conclusion(output: &str) -> ParsedJudgment {
    parse_conclusion_with(output, ConclusionMode::Strict)
}

pub fn parse_conclusion_with(output: &str, mode: ConclusionMode) -> ParsedJudgment {
    let mut last = None;
    let mut rest = output;
    while let Some(pos) = rest.find(CONCLUSION) {
        let after = &rest[pos + CONCLUSION.len()..];
        match after.find('}') {
            Some(end) => {
                last = Some(&after[..end]);
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    let Some(payload) = last else {
        return ParsedJudgment::Missing;
    };
    match (payload, mode) {
        ("T", _) => ParsedJudgment::True,
        ("F", _) => ParsedJudgment::False,
        (p, ConclusionMode::Lenient) => match p.trim().to_ascii_lowercase().as_str() {
            "t" | "true" => ParsedJudgment::True,
            "f" | "false" => ParsedJudgment::False,
            _ => ParsedJudgment::Missing,
        },
        _ => ParsedJudgment::Missing,
    }
}

/// Body of the last fenced code block whose body is not blank. When the
/// body spans lines, its first line is the info string (language tag) and
/// is dropped. Unterminated fences are ignored.
pub fn extract_code_block(output: &str) -> Option<String> {
    let mut found = None;
    let mut rest = output;
    while let Some(open) = rest.find(FENCE) {
        let after = &rest[open + FENCE.len()..];
        let Some(close) = after.find(FENCE) else {
            break;
        };
        let raw = &after[..close];
        let body = match raw.find('\n') {
            Some(nl) => &raw[nl + 1..],
            None => raw,
        };
        let body = body.trim_end_matches(['\n', '\r']);
        if !body.trim().is_empty() {
            found = Some(body);
        }
        rest = &after[close + FENCE.len()..];
    }
    found.map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ParsedJudgment::*;

    #[test]
    fn conclusion_basics() {
        assert_eq!(parse_conclusion("...therefore \\conclusion{T}"), True);
        assert_eq!(parse_conclusion("no conclusion present"), Missing);
        assert_eq!(
            parse_conclusion("\\conclusion{F} ... revised: \\conclusion{T}"),
            True
        );
        assert_eq!(
            parse_conclusion("\\conclusion{T} then \\conclusion{maybe}"),
            Missing
        );
        assert_eq!(parse_conclusion("\\conclusion{True}"), Missing);
        assert_eq!(parse_conclusion("\\conclusion{T"), Missing);
    }

    #[test]
    fn lenient_mode() {
        assert_eq!(
            parse_conclusion_with("\\conclusion{ true }", ConclusionMode::Lenient),
            True
        );
        assert_eq!(
            parse_conclusion_with("\\conclusion{False}", ConclusionMode::Lenient),
            False
        );
        assert_eq!(
            parse_conclusion_with("\\conclusion{x}", ConclusionMode::Lenient),
            Missing
        );
    }

    #[test]
    fn code_block_basics() {
        assert_eq!(
            extract_code_block("```\nprint(1)\n```").as_deref(),
            Some("print(1)")
        );
        assert_eq!(extract_code_block("```python\n   \n```"), None);
        assert_eq!(
            extract_code_block("```python\nprint(1)\n```\nthen\n```python\nprint(2)\n```")
                .as_deref(),
            Some("print(2)")
        );
        assert_eq!(
            extract_code_block("```print(3)```").as_deref(),
            Some("print(3)")
        );
        assert_eq!(
            extract_code_block("```py\nx\n```\n```\n\n```").as_deref(),
            Some("x")
        );
        assert_eq!(extract_code_block("```python\nunterminated"), None);
    }
}
