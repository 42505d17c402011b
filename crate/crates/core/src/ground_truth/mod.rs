//! Localization ground truth from gold patches, plus the instance
//! admission rules applied before evaluation or training.

mod diff;
mod spans;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loc_metrics::EntityId;

pub use diff::{apply_file_patch, parse_patch, FileChange, FilePatch, HunkLine, LineKind, PatchHunk, PatchSet};
pub use spans::{decode_source, extract_function_spans, innermost, BoundaryDetector, FunctionSpan, IndentDetector};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TruthError {
    #[error("patch parse error at byte {offset}: {message}")]
    Patch { offset: usize, message: String },
    #[error("patch does not apply to {path} at line {line}: {message}")]
    Apply { path: String, line: u64, message: String },
    #[error("missing {side} image for {path}")]
    MissingImage { side: &'static str, path: String },
    #[error("cannot decode {path}: {message}")]
    Decode { path: String, message: String },
}

pub type FileImages = BTreeMap<String, String>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub files: BTreeSet<EntityId>,
    pub functions: BTreeSet<EntityId>,
    /// Merged, disjoint, sorted inclusive intervals in pre-image coordinates.
    pub line_ranges: BTreeMap<String, Vec<[u64; 2]>>,
}

/// Merges a set of line numbers into maximal inclusive intervals.
pub fn merge_lines(lines: &BTreeSet<u64>) -> Vec<[u64; 2]> {
    let mut out: Vec<[u64; 2]> = Vec::new();
    for &l in lines {
        match out.last_mut() {
            Some(last) if last[1] + 1 == l => last[1] = l,
            _ => out.push([l, l]),
        }
    }
    out
}

fn image<'a>(images: &'a FileImages, side: &'static str, path: &str) -> Result<&'a str, TruthError> {
    images.get(path).map(String::as_str).ok_or_else(|| TruthError::MissingImage { side, path: path.to_string() })
}

/// Per-file attribution of changed lines to function spans.
struct FileAttribution {
    path: String,
    /// `(qualified name, found in pre-image)` for every changed line inside a span.
    credited: Vec<(String, bool)>,
    /// Changed lines that fall outside every span.
    uncovered: usize,
    base_lines: BTreeSet<u64>,
}

fn attribute(
    file: &FilePatch,
    pre_images: &FileImages,
    post_images: &FileImages,
    detector: &dyn BoundaryDetector,
) -> Result<FileAttribution, TruthError> {
    let path = file.path().to_string();
    let pre_spans = match (&file.old_path, file.change) {
        (Some(old), c) if c != FileChange::Added => detector.spans(image(pre_images, "pre", old)?, old),
        _ => Vec::new(),
    };
    let post_spans = match (&file.new_path, file.change) {
        (Some(new), c) if c != FileChange::Deleted => detector.spans(image(post_images, "post", new)?, new),
        _ => Vec::new(),
    };
    let pre_names: BTreeSet<&str> = pre_spans.iter().map(|s| s.qualified_name.as_str()).collect();

    let mut credited = Vec::new();
    let mut uncovered = 0;
    let mut base_lines = BTreeSet::new();
    for hunk in &file.hunks {
        for (kind, line, text) in hunk.changes() {
            if text.trim().is_empty() {
                continue;
            }
            let spans = if kind == LineKind::Removed { &pre_spans } else { &post_spans };
            match innermost(spans, line) {
                Some(s) => {
                    let existed = kind == LineKind::Removed || pre_names.contains(s.qualified_name.as_str());
                    credited.push((s.qualified_name.clone(), existed));
                }
                None => uncovered += 1,
            }
        }
        base_lines.extend(hunk.changed_base_lines());
    }
    Ok(FileAttribution { path, credited, uncovered, base_lines })
}

/// Files, innermost modified functions, and merged line ranges of a patch.
///
/// Removed lines are attributed through pre-image spans and added lines
/// through post-image spans; whitespace-only lines credit no function. A renamed file is credited to its new path.
pub fn derive_ground_truth(
    patch: &PatchSet,
    pre_images: &FileImages,
    post_images: &FileImages,
    detector: &dyn BoundaryDetector,
) -> Result<GroundTruth, TruthError> {
    let mut truth = GroundTruth::default();
    for file in &patch.files {
        let attr = attribute(file, pre_images, post_images, detector)?;
        truth.files.insert(EntityId::file(&attr.path));
        for (name, _) in attr.credited {
            truth.functions.insert(EntityId::function(&attr.path, name));
        }
        if !attr.base_lines.is_empty() {
            truth.line_ranges.insert(attr.path.clone(), merge_lines(&attr.base_lines));
        }
    }
    Ok(truth)
}

/// Reads pre-images from a repository snapshot and builds post-images by
/// applying the patch.
pub fn load_images(repo: &Path, patch: &PatchSet) -> Result<(FileImages, FileImages), TruthError> {
    let mut pre = FileImages::new();
    let mut post = FileImages::new();
    for file in &patch.files {
        let before = match (&file.old_path, file.change) {
            (Some(old), c) if c != FileChange::Added => {
                let bytes = fs::read(repo.join(old))
                    .map_err(|_| TruthError::MissingImage { side: "pre", path: old.clone() })?;
                let text = decode_source(&bytes)
                    .map_err(|message| TruthError::Decode { path: old.clone(), message })?
                    .to_string();
                pre.insert(old.clone(), text.clone());
                text
            }
            _ => String::new(),
        };
        if let (Some(new), c) = (&file.new_path, file.change) {
            if c != FileChange::Deleted {
                post.insert(new.clone(), apply_file_patch(&before, file)?);
            }
        }
    }
    Ok((pre, post))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    NewFile,
    NoChange,
    NewFunctionOnly,
    ShortIssue,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::NewFile => "new_file",
            ExclusionReason::NoChange => "no_change",
            ExclusionReason::NewFunctionOnly => "new_function_only",
            ExclusionReason::ShortIssue => "short_issue",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmissionConfig {
    pub min_issue_chars: usize,
}

impl Default for AdmissionConfig {
    fn default() -> Self {
        Self { min_issue_chars: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admission {
    pub admissible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<ExclusionReason>,
}

impl Admission {
    fn accept() -> Self {
        Self { admissible: true, reason: None }
    }

    fn reject(reason: ExclusionReason) -> Self {
        Self { admissible: false, reason: Some(reason) }
    }
}

/// Applies the exclusion rules in a fixed priority order so each rejected
/// instance carries exactly one reason: `new_file`, `no_change`,
/// `new_function_only`, then `short_issue`.
///
/// The new-function rule needs file images; when they are unavailable it is
/// skipped.
pub fn admissible_instance(
    issue: &str,
    patch: &PatchSet,
    images: Option<(&FileImages, &FileImages)>,
    detector: &dyn BoundaryDetector,
    cfg: &AdmissionConfig,
) -> Admission {
    if patch.files.iter().any(|f| f.change == FileChange::Added) {
        return Admission::reject(ExclusionReason::NewFile);
    }
    if patch.changed_line_count() == 0 {
        return Admission::reject(ExclusionReason::NoChange);
    }
    if let Some((pre, post)) = images {
        let attributions: Result<Vec<_>, _> = patch.files.iter().map(|f| attribute(f, pre, post, detector)).collect();
        if let Ok(attrs) = attributions {
            let only_new = attrs.iter().any(|a| !a.credited.is_empty())
                && attrs.iter().all(|a| a.uncovered == 0 && a.credited.iter().all(|(_, existed)| !existed));
            if only_new {
                return Admission::reject(ExclusionReason::NewFunctionOnly);
            }
        }
    }
    if issue.trim().chars().count() < cfg.min_issue_chars {
        return Admission::reject(ExclusionReason::ShortIssue);
    }
    Admission::accept()
}

/// One dataset line: an issue, its gold patch, and where the repository lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub repo: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_commit: Option<String>,
    pub issue: String,
    pub patch: String,
}

/// One output line of ground-truth extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub id: String,
    pub files: BTreeSet<EntityId>,
    pub functions: BTreeSet<EntityId>,
    pub line_ranges: BTreeMap<String, Vec<[u64; 2]>>,
    pub admissible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<ExclusionReason>,
}

impl TruthRecord {
    pub fn new(id: &str, truth: GroundTruth, admission: Admission) -> Self {
        Self {
            id: id.to_string(),
            files: truth.files,
            functions: truth.functions,
            line_ranges: truth.line_ranges,
            admissible: admission.admissible,
            reason: admission.reason,
        }
    }

    pub fn truth(&self) -> GroundTruth {
        GroundTruth {
            files: self.files.clone(),
            functions: self.functions.clone(),
            line_ranges: self.line_ranges.clone(),
        }
    }
}
