//! Unified diff parsing (plain and git-flavoured) and hunk application.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::TruthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Context,
    Added,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HunkLine {
    pub kind: LineKind,
    pub text: String,
    /// Followed by `\ No newline at end of file`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_newline: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchHunk {
    pub file_path: String,
    pub pre_start: u64,
    pub pre_len: u64,
    pub post_start: u64,
    pub post_len: u64,
    pub changed_pre_lines: BTreeSet<u64>,
    pub changed_post_lines: BTreeSet<u64>,
    pub lines: Vec<HunkLine>,
}

impl PatchHunk {
    /// Changed lines in pre-image coordinates. Removed lines map to
    /// themselves; a pure insertion maps to the pre-image line it follows
    /// (line 1 for an insertion at the top of the file).
    pub fn changed_base_lines(&self) -> BTreeSet<u64> {
        let mut out = BTreeSet::new();
        let mut pre_no = first_line(self.pre_start, self.pre_len);
        let mut block_removed = false;
        let mut block_added = false;
        let flush = |out: &mut BTreeSet<u64>, removed: bool, added: bool, pre_no: u64| {
            if added && !removed {
                out.insert(pre_no.saturating_sub(1).max(1));
            }
        };
        for line in &self.lines {
            match line.kind {
                LineKind::Context => {
                    flush(&mut out, block_removed, block_added, pre_no);
                    block_removed = false;
                    block_added = false;
                    pre_no += 1;
                }
                LineKind::Removed => {
                    out.insert(pre_no);
                    block_removed = true;
                    pre_no += 1;
                }
                LineKind::Added => block_added = true,
            }
        }
        flush(&mut out, block_removed, block_added, pre_no);
        out
    }

    /// Added lines numbered in the post-image and removed lines numbered in
    /// the pre-image, in hunk order.
    pub fn changes(&self) -> Vec<(LineKind, u64, &str)> {
        let mut pre_no = first_line(self.pre_start, self.pre_len);
        let mut post_no = first_line(self.post_start, self.post_len);
        let mut out = Vec::new();
        for line in &self.lines {
            match line.kind {
                LineKind::Context => {
                    pre_no += 1;
                    post_no += 1;
                }
                LineKind::Removed => {
                    out.push((LineKind::Removed, pre_no, line.text.as_str()));
                    pre_no += 1;
                }
                LineKind::Added => {
                    out.push((LineKind::Added, post_no, line.text.as_str()));
                    post_no += 1;
                }
            }
        }
        out
    }
}

fn first_line(start: u64, len: u64) -> u64 {
    if len == 0 {
        start + 1
    } else {
        start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileChange {
    Modified,
    Added,
    Deleted,
    Renamed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilePatch {
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    pub change: FileChange,
    pub hunks: Vec<PatchHunk>,
}

impl FilePatch {
    /// The path this change is credited to: the post-image path, or the
    /// pre-image path for a deletion.
    pub fn path(&self) -> &str {
        self.new_path.as_deref().or(self.old_path.as_deref()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSet {
    pub files: Vec<FilePatch>,
}

impl PatchSet {
    pub fn hunks(&self) -> impl Iterator<Item = &PatchHunk> {
        self.files.iter().flat_map(|f| f.hunks.iter())
    }

    pub fn changed_line_count(&self) -> usize {
        self.hunks().flat_map(|h| h.lines.iter()).filter(|l| l.kind != LineKind::Context).count()
    }
}

fn hunk_header() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@").unwrap())
}

/// Strips `a/`/`b/` prefixes and trailing timestamps; `/dev/null` is `None`.
fn header_path(raw: &str) -> Option<String> {
    let raw = raw.split('\t').next().unwrap_or(raw).trim_end();
    let raw = raw.strip_prefix('"').and_then(|r| r.strip_suffix('"')).unwrap_or(raw);
    if raw == "/dev/null" {
        return None;
    }
    let stripped = raw.strip_prefix("a/").or_else(|| raw.strip_prefix("b/")).unwrap_or(raw);
    Some(stripped.to_string())
}

fn git_header_paths(rest: &str) -> (Option<String>, Option<String>) {
    match rest.split_once(" b/") {
        Some((a, b)) => (Some(a.strip_prefix("a/").unwrap_or(a).to_string()), Some(b.to_string())),
        None => (None, None),
    }
}

#[derive(Default)]
struct Pending {
    old_path: Option<String>,
    new_path: Option<String>,
    added: bool,
    deleted: bool,
    renamed: bool,
    saw_minus: bool,
    saw_plus: bool,
    hunks: Vec<PatchHunk>,
}

impl Pending {
    fn finish(self) -> FilePatch {
        let added = self.added || (self.saw_minus && self.old_path.is_none());
        let deleted = self.deleted || (self.saw_plus && self.new_path.is_none());
        let change = if added {
            FileChange::Added
        } else if deleted {
            FileChange::Deleted
        } else if self.renamed || (self.old_path.is_some() && self.old_path != self.new_path) {
            FileChange::Renamed
        } else {
            FileChange::Modified
        };
        let (old_path, new_path) = match change {
            FileChange::Added => (None, self.new_path),
            FileChange::Deleted => (self.old_path, None),
            _ => (self.old_path, self.new_path),
        };
        let mut fp = FilePatch { old_path, new_path, change, hunks: self.hunks };
        let path = fp.path().to_string();
        for h in &mut fp.hunks {
            h.file_path = path.clone();
        }
        fp
    }
}

/// Parses a unified diff, possibly covering several files.
///
/// Lines outside file sections (commit messages and the like) are ignored.
/// A malformed or truncated hunk is an error carrying its byte offset.
pub fn parse_patch(text: &str) -> Result<PatchSet, TruthError> {
    let mut lines: Vec<(usize, &str)> = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let line = raw.strip_suffix('\n').unwrap_or(raw);
        let line = line.strip_suffix('\r').unwrap_or(line);
        lines.push((offset, line));
        offset += raw.len();
    }

    let mut files = Vec::new();
    let mut current: Option<Pending> = None;
    let mut i = 0;
    while i < lines.len() {
        let (off, line) = lines[i];
        if let Some(rest) = line.strip_prefix("diff --git ") {
            if let Some(p) = current.take() {
                files.push(p.finish());
            }
            let (old_path, new_path) = git_header_paths(rest);
            current = Some(Pending { old_path, new_path, ..Pending::default() });
        } else if line.starts_with("--- ") && i + 1 < lines.len() && lines[i + 1].1.starts_with("+++ ") {
            let reuse = current.as_ref().is_some_and(|p| !p.saw_minus && p.hunks.is_empty());
            if !reuse {
                if let Some(p) = current.take() {
                    files.push(p.finish());
                }
                current = Some(Pending::default());
            }
            let p = current.as_mut().expect("file section");
            p.old_path = header_path(&line[4..]);
            p.new_path = header_path(&lines[i + 1].1[4..]);
            p.saw_minus = true;
            p.saw_plus = true;
            i += 2;
            continue;
        } else if line.starts_with("@@") {
            let Some(p) = current.as_mut() else {
                return Err(TruthError::Patch { offset: off, message: "hunk outside a file section".into() });
            };
            let (hunk, next) = parse_hunk(&lines, i)?;
            p.hunks.push(hunk);
            i = next;
            continue;
        } else if let Some(p) = current.as_mut() {
            if line.starts_with("new file mode") {
                p.added = true;
            } else if line.starts_with("deleted file mode") {
                p.deleted = true;
            } else if let Some(from) = line.strip_prefix("rename from ") {
                p.old_path = Some(from.to_string());
                p.renamed = true;
            } else if let Some(to) = line.strip_prefix("rename to ") {
                p.new_path = Some(to.to_string());
                p.renamed = true;
            } else if line.starts_with("copy to ") {
                p.added = true;
            }
        }
        i += 1;
    }
    if let Some(p) = current.take() {
        files.push(p.finish());
    }
    Ok(PatchSet { files })
}

fn parse_hunk(lines: &[(usize, &str)], start: usize) -> Result<(PatchHunk, usize), TruthError> {
    let (off, header) = lines[start];
    let caps = hunk_header()
        .captures(header)
        .ok_or_else(|| TruthError::Patch { offset: off, message: format!("malformed hunk header {header:?}") })?;
    let num = |i: usize, default: u64| -> Result<u64, TruthError> {
        caps.get(i).map_or(Ok(default), |m| {
            m.as_str()
                .parse()
                .map_err(|_| TruthError::Patch { offset: off, message: "hunk range out of bounds".into() })
        })
    };
    let (pre_start, pre_len, post_start, post_len) = (num(1, 0)?, num(2, 1)?, num(3, 0)?, num(4, 1)?);

    let mut hunk = PatchHunk {
        file_path: String::new(),
        pre_start,
        pre_len,
        post_start,
        post_len,
        changed_pre_lines: BTreeSet::new(),
        changed_post_lines: BTreeSet::new(),
        lines: Vec::new(),
    };
    let (mut pre_left, mut post_left) = (pre_len, post_len);
    let mut pre_no = first_line(pre_start, pre_len);
    let mut post_no = first_line(post_start, post_len);
    let mut i = start + 1;
    while pre_left > 0 || post_left > 0 {
        let Some(&(_, line)) = lines.get(i) else {
            return Err(TruthError::Patch { offset: off, message: "hunk ends before its declared length".into() });
        };
        let (kind, text) = match line.as_bytes().first() {
            Some(b' ') => (LineKind::Context, &line[1..]),
            None => (LineKind::Context, ""),
            Some(b'-') => (LineKind::Removed, &line[1..]),
            Some(b'+') => (LineKind::Added, &line[1..]),
            Some(b'\\') => {
                if let Some(last) = hunk.lines.last_mut() {
                    last.no_newline = true;
                }
                i += 1;
                continue;
            }
            _ => {
                return Err(TruthError::Patch {
                    offset: lines[i].0,
                    message: format!("unexpected line in hunk: {line:?}"),
                })
            }
        };
        let fits = match kind {
            LineKind::Context => pre_left > 0 && post_left > 0,
            LineKind::Removed => pre_left > 0,
            LineKind::Added => post_left > 0,
        };
        if !fits {
            return Err(TruthError::Patch {
                offset: lines[i].0,
                message: "hunk longer than its header declares".into(),
            });
        }
        match kind {
            LineKind::Context => {
                pre_left -= 1;
                post_left -= 1;
                pre_no += 1;
                post_no += 1;
            }
            LineKind::Removed => {
                hunk.changed_pre_lines.insert(pre_no);
                pre_left -= 1;
                pre_no += 1;
            }
            LineKind::Added => {
                hunk.changed_post_lines.insert(post_no);
                post_left -= 1;
                post_no += 1;
            }
        }
        hunk.lines.push(HunkLine { kind, text: text.to_string(), no_newline: false });
        i += 1;
    }
    if let Some(&(_, line)) = lines.get(i) {
        if line.starts_with('\\') {
            if let Some(last) = hunk.lines.last_mut() {
                last.no_newline = true;
            }
            i += 1;
        }
    }
    Ok((hunk, i))
}

fn split_text(text: &str) -> (Vec<&str>, bool) {
    if text.is_empty() {
        return (Vec::new(), true);
    }
    let trailing = text.ends_with('\n');
    let body = text.strip_suffix('\n').unwrap_or(text);
    (body.split('\n').collect(), trailing)
}

/// Applies one file's hunks to its pre-image, checking every context and
/// removed line.
pub fn apply_file_patch(pre: &str, patch: &FilePatch) -> Result<String, TruthError> {
    let path = patch.path().to_string();
    let mismatch = |line: u64, msg: &str| TruthError::Apply { path: path.clone(), line, message: msg.to_string() };
    let (pre_lines, pre_trailing) = split_text(pre);
    let mut out: Vec<&str> = Vec::new();
    let mut trailing = pre_trailing;
    let mut cursor = 0usize;
    for hunk in &patch.hunks {
        let begin = if hunk.pre_len == 0 { hunk.pre_start } else { hunk.pre_start.saturating_sub(1) } as usize;
        if begin < cursor || begin > pre_lines.len() {
            return Err(mismatch(hunk.pre_start, "hunk out of order or past end of file"));
        }
        out.extend_from_slice(&pre_lines[cursor..begin]);
        cursor = begin;
        for line in &hunk.lines {
            match line.kind {
                LineKind::Context | LineKind::Removed => {
                    if pre_lines.get(cursor) != Some(&line.text.as_str()) {
                        return Err(mismatch(cursor as u64 + 1, "pre-image does not match hunk"));
                    }
                    if line.kind == LineKind::Context {
                        out.push(&line.text);
                    }
                    cursor += 1;
                }
                LineKind::Added => out.push(&line.text),
            }
        }
        let reaches_end = cursor == pre_lines.len();
        if let Some(last_post) = hunk.lines.iter().rev().find(|l| l.kind != LineKind::Removed) {
            if last_post.no_newline {
                trailing = false;
            } else if reaches_end {
                trailing = true;
            }
        }
    }
    out.extend_from_slice(&pre_lines[cursor..]);
    if out.is_empty() {
        return Ok(String::new());
    }
    let mut text = out.join("\n");
    if trailing {
        text.push('\n');
    }
    Ok(text)
}
