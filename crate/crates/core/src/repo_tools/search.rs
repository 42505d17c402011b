use std::collections::BTreeSet;
use std::fs;

use globset::{GlobBuilder, GlobMatcher};
use regex::Regex;

use super::root::{is_binary, RepoRoot, ToolError};
use super::{Entry, GlobArgs, GrepArgs, GrepMode, Observation, ToolLimits};

fn compile_glob(pattern: &str) -> Result<GlobMatcher, ToolError> {
    GlobBuilder::new(pattern)
        .literal_separator(true)
        .build()
        .map(|g| g.compile_matcher())
        .map_err(|e| ToolError::BadGlob(e.to_string()))
}

fn base_dir(root: &RepoRoot, path: Option<&str>) -> Result<String, ToolError> {
    match path {
        Some(p) => root.resolve(p),
        None => Ok(String::new()),
    }
}

fn relative_to<'a>(file: &'a str, base: &str) -> &'a str {
    if base.is_empty() {
        file
    } else {
        file.strip_prefix(base).and_then(|rest| rest.strip_prefix('/')).unwrap_or(file)
    }
}

/// Regex content search over the repository.
///
/// Patterns use the `regex` crate dialect. A `glob` filter without a `/`
/// matches file names; with a `/` it matches the repository-relative path.
pub fn grep(root: &RepoRoot, args: &GrepArgs, limits: &ToolLimits) -> Observation {
    match grep_inner(root, args, limits) {
        Ok((entries, truncated)) => Observation::from_entries(0, entries, truncated),
        Err(e) => Observation::error(0, e.to_string()),
    }
}

fn grep_inner(root: &RepoRoot, args: &GrepArgs, limits: &ToolLimits) -> Result<(Vec<Entry>, bool), ToolError> {
    if args.pattern.is_empty() {
        return Err(ToolError::BadRegex("empty pattern".into()));
    }
    let regex = Regex::new(&args.pattern).map_err(|e| ToolError::BadRegex(e.to_string()))?;
    let base = base_dir(root, args.path.as_deref())?;
    let filter = args.glob.as_deref().map(compile_glob).transpose()?;
    let filter_on_path = args.glob.as_deref().is_some_and(|g| g.contains('/'));
    let mode = args.output_mode.unwrap_or_default();
    let cap = limits.grep_max_entries;

    let mut entries = Vec::new();
    let mut matched_lines = 0usize;
    let mut truncated = false;

    for file in root.files_under(&base)? {
        if let Some(matcher) = &filter {
            let subject = if filter_on_path { file.as_str() } else { file.rsplit('/').next().unwrap_or(&file) };
            if !matcher.is_match(subject) {
                continue;
            }
        }
        let Ok(bytes) = fs::read(root.absolute(&file)) else {
            continue;
        };
        if is_binary(&bytes) {
            continue;
        }
        let text = String::from_utf8_lossy(&bytes);
        let lines: Vec<&str> = text.lines().collect();
        let hits: Vec<usize> = lines.iter().enumerate().filter(|(_, l)| regex.is_match(l)).map(|(i, _)| i).collect();
        if hits.is_empty() {
            continue;
        }
        match mode {
            GrepMode::FilesWithMatches | GrepMode::Count => {
                if entries.len() == cap {
                    truncated = true;
                    break;
                }
                entries.push(match mode {
                    GrepMode::Count => Entry::count(&file, hits.len() as u64),
                    _ => Entry::file(&file),
                });
            }
            GrepMode::Content => {
                let room = cap - matched_lines;
                if room == 0 {
                    truncated = true;
                    break;
                }
                let taken = &hits[..hits.len().min(room)];
                if taken.len() < hits.len() {
                    truncated = true;
                }
                matched_lines += taken.len();
                let ctx = limits.grep_context_lines;
                let mut shown = BTreeSet::new();
                for &i in taken {
                    let lo = i.saturating_sub(ctx);
                    let hi = (i + ctx).min(lines.len() - 1);
                    shown.extend(lo..=hi);
                }
                entries.extend(shown.into_iter().map(|i| Entry::line(&file, i as u64 + 1, lines[i])));
                if truncated {
                    break;
                }
            }
        }
    }
    Ok((entries, truncated))
}

/// File-name pattern matching. `*` stays within one path segment; `**`
/// spans directories. Patterns are matched relative to `path` when given.
pub fn glob(root: &RepoRoot, args: &GlobArgs, limits: &ToolLimits) -> Observation {
    match glob_inner(root, args, limits) {
        Ok((entries, truncated)) => Observation::from_entries(0, entries, truncated),
        Err(e) => Observation::error(0, e.to_string()),
    }
}

fn glob_inner(root: &RepoRoot, args: &GlobArgs, limits: &ToolLimits) -> Result<(Vec<Entry>, bool), ToolError> {
    if args.pattern.is_empty() {
        return Err(ToolError::BadGlob("empty pattern".into()));
    }
    let base = base_dir(root, args.path.as_deref())?;
    let pattern = args.pattern.strip_prefix("./").unwrap_or(&args.pattern);
    let matcher = compile_glob(pattern)?;
    let mut matched: Vec<Entry> = root
        .files_under(&base)?
        .into_iter()
        .filter(|f| matcher.is_match(relative_to(f, &base)))
        .map(Entry::file)
        .collect();
    let truncated = matched.len() > limits.glob_max_paths;
    matched.truncate(limits.glob_max_paths);
    Ok((matched, truncated))
}
