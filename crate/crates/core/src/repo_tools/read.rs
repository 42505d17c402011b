use std::fs;

use super::root::{RepoRoot, ToolError};
use super::{Entry, Observation, ReadFileArgs, ToolLimits};

/// Reads an inclusive 1-based line range. Without `end_line` the read is
/// capped at `limits.read_max_lines` lines starting from `start_line` (or 1).
pub fn read_file(root: &RepoRoot, args: &ReadFileArgs, limits: &ToolLimits) -> Observation {
    match read_inner(root, args, limits) {
        Ok((entries, truncated)) => Observation::from_entries(0, entries, truncated),
        Err(e) => Observation::error(0, e.to_string()),
    }
}

fn read_inner(root: &RepoRoot, args: &ReadFileArgs, limits: &ToolLimits) -> Result<(Vec<Entry>, bool), ToolError> {
    let rel = root.resolve(&args.path)?;
    let full = root.absolute(&rel);
    let meta = fs::symlink_metadata(&full).map_err(|_| ToolError::NotFound(rel.clone()))?;
    if !meta.is_file() {
        return Err(ToolError::NotAFile(rel));
    }
    if root.files().binary_search(&rel).is_err() {
        return Err(ToolError::Excluded(rel));
    }
    let start = args.start_line.unwrap_or(1);
    if start == 0 {
        return Err(ToolError::BadRange("start_line must be at least 1".into()));
    }
    if let Some(end) = args.end_line {
        if end < start {
            return Err(ToolError::BadRange(format!("start_line {start} > end_line {end}")));
        }
    }
    let bytes = fs::read(&full).map_err(|e| ToolError::Io { path: rel.clone(), message: e.to_string() })?;
    let text = String::from_utf8_lossy(&bytes);
    let lines: Vec<&str> = text.lines().collect();
    let total = lines.len() as u64;
    if start > total {
        return Ok((Vec::new(), false));
    }
    let (last, truncated) = match args.end_line {
        Some(end) => (end.min(total), false),
        None => {
            let capped = start + limits.read_max_lines as u64 - 1;
            (capped.min(total), capped < total)
        }
    };
    let entries = (start..=last).map(|n| Entry::line(&rel, n, lines[(n - 1) as usize])).collect();
    Ok((entries, truncated))
}
