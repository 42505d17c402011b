//! Function/class boundary detection for attributing changed lines.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpan {
    pub file_path: String,
    pub qualified_name: String,
    pub start_line: u64,
    pub end_line: u64,
}

impl FunctionSpan {
    pub fn contains(&self, line: u64) -> bool {
        self.start_line <= line && line <= self.end_line
    }
}

/// Maps file text to the definitions it contains.
pub trait BoundaryDetector: Send + Sync {
    fn spans(&self, text: &str, path: &str) -> Vec<FunctionSpan>;
}

/// Indentation-scoped `def`/`class` detection (Python and similar).
///
/// A definition runs from its header line to the last code line before the
/// next statement at the same or shallower indentation. Lines inside
/// brackets, triple-quoted strings, or after a `\` continuation never end a
/// block. Names are dotted through enclosing definitions (`A.f`).
#[derive(Debug, Clone, Copy, Default)]
pub struct IndentDetector;

impl BoundaryDetector for IndentDetector {
    fn spans(&self, text: &str, path: &str) -> Vec<FunctionSpan> {
        extract_indent_spans(text, path)
    }
}

pub fn extract_function_spans(text: &str, path: &str) -> Vec<FunctionSpan> {
    IndentDetector.spans(text, path)
}

/// Decodes source bytes, reporting why a file cannot be used.
pub fn decode_source(bytes: &[u8]) -> Result<&str, String> {
    std::str::from_utf8(bytes).map_err(|e| format!("file is not valid UTF-8: {e}"))
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[ \t]*(?:async[ \t]+)?(?:def|class)[ \t]+([A-Za-z_][A-Za-z0-9_]*)").unwrap())
}

#[derive(Debug, Clone, Copy)]
struct LineInfo {
    indent: usize,
    /// Starts a new logical line (not inside a bracket, string, or continuation).
    structural: bool,
    /// Has code outside comments.
    code: bool,
}

fn indent_width(line: &str) -> usize {
    let mut width = 0;
    for c in line.chars() {
        match c {
            ' ' => width += 1,
            '\t' => width = (width / 8 + 1) * 8,
            '\x0c' => width = 0,
            _ => break,
        }
    }
    width
}

fn classify(text: &str) -> Vec<LineInfo> {
    let mut infos = Vec::new();
    let mut depth: i64 = 0;
    let mut triple: Option<&'static str> = None;
    let mut continued = false;
    for line in text.lines() {
        let inside = depth > 0 || triple.is_some() || continued;
        let trimmed = line.trim_start();
        let mut code = triple.is_some() || (!trimmed.is_empty() && !trimmed.starts_with('#'));
        if inside && !trimmed.is_empty() {
            code = true;
        }
        continued = false;

        let bytes = line.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if let Some(q) = triple {
                if line[i..].starts_with(q) {
                    triple = None;
                    i += 3;
                } else {
                    i += if bytes[i] == b'\\' { 2 } else { 1 };
                }
                continue;
            }
            match bytes[i] {
                b'#' => break,
                b'(' | b'[' | b'{' => depth += 1,
                b')' | b']' | b'}' => depth = (depth - 1).max(0),
                b'"' | b'\'' => {
                    let q = if bytes[i] == b'"' { "\"\"\"" } else { "'''" };
                    if line[i..].starts_with(q) {
                        triple = Some(q);
                        i += 3;
                        continue;
                    }
                    let quote = bytes[i];
                    i += 1;
                    while i < bytes.len() && bytes[i] != quote {
                        i += if bytes[i] == b'\\' { 2 } else { 1 };
                    }
                }
                b'\\' if i + 1 == bytes.len() => continued = true,
                _ => {}
            }
            i += 1;
        }
        infos.push(LineInfo { indent: indent_width(line), structural: !inside && code, code });
    }
    infos
}

fn extract_indent_spans(text: &str, path: &str) -> Vec<FunctionSpan> {
    let lines: Vec<&str> = text.lines().collect();
    let infos = classify(text);
    let mut spans = Vec::new();
    let mut stack: Vec<(usize, String)> = Vec::new();
    for (i, info) in infos.iter().enumerate() {
        if !info.structural {
            continue;
        }
        while stack.last().is_some_and(|(d, _)| *d >= info.indent) {
            stack.pop();
        }
        let Some(caps) = header_re().captures(lines[i]) else {
            continue;
        };
        let name = &caps[1];
        let qualified =
            stack.iter().map(|(_, n)| n.as_str()).chain(std::iter::once(name)).collect::<Vec<_>>().join(".");
        let mut end = i;
        for (j, next) in infos.iter().enumerate().skip(i + 1) {
            if next.structural && next.indent <= info.indent {
                break;
            }
            if next.code {
                end = j;
            }
        }
        spans.push(FunctionSpan {
            file_path: path.to_string(),
            qualified_name: qualified.clone(),
            start_line: i as u64 + 1,
            end_line: end as u64 + 1,
        });
        stack.push((info.indent, name.to_string()));
    }
    spans
}

/// The innermost span covering `line`, if any.
pub fn innermost(spans: &[FunctionSpan], line: u64) -> Option<&FunctionSpan> {
    spans.iter().filter(|s| s.contains(line)).max_by_key(|s| (s.start_line, std::cmp::Reverse(s.end_line)))
}
