use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::ground_truth::{
    admissible_instance, derive_ground_truth, load_images, parse_patch, AdmissionConfig, BoundaryDetector,
    ExclusionReason, GroundTruth, InstanceRecord, TruthRecord,
};

/// A repository checkout: a directory in the store, or a tar archive
/// extracted to a private temporary directory.
#[derive(Debug)]
pub enum RepoSnapshot {
    Dir(PathBuf),
    Extracted { dir: tempfile::TempDir, root: PathBuf },
}

impl RepoSnapshot {
    pub fn path(&self) -> &Path {
        match self {
            RepoSnapshot::Dir(p) => p,
            RepoSnapshot::Extracted { root, .. } => root,
        }
    }
}

fn extract(archive: &Path) -> Result<RepoSnapshot, String> {
    let file = File::open(archive).map_err(|e| format!("{}: {e}", archive.display()))?;
    let name = archive.to_string_lossy();
    let reader: Box<dyn std::io::Read> = if name.ends_with(".gz") || name.ends_with(".tgz") {
        Box::new(flate2::read::GzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    tar::Archive::new(reader).unpack(dir.path()).map_err(|e| format!("{}: {e}", archive.display()))?;
    // An archive holding a single top-level directory is rooted there.
    let entries: Vec<PathBuf> =
        std::fs::read_dir(dir.path()).map_err(|e| e.to_string())?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    let root = match entries.as_slice() {
        [only] if only.is_dir() => only.clone(),
        _ => dir.path().to_path_buf(),
    };
    Ok(RepoSnapshot::Extracted { dir, root })
}

/// Looks up `<store>/<repo>` as a directory, then `<repo>.tar`, `.tar.gz`,
/// and `.tgz` archives.
pub fn resolve_repo(store: &Path, repo: &str) -> Result<RepoSnapshot, String> {
    if repo.is_empty() || Path::new(repo).components().any(|c| matches!(c, std::path::Component::ParentDir)) {
        return Err(format!("invalid repository reference {repo:?}"));
    }
    let dir = store.join(repo);
    if dir.is_dir() {
        return Ok(RepoSnapshot::Dir(dir));
    }
    for ext in ["tar", "tar.gz", "tgz"] {
        let archive = store.join(format!("{repo}.{ext}"));
        if archive.is_file() {
            return extract(&archive);
        }
    }
    Err(format!("repository {repo:?} not found in {}", store.display()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub admissible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<ExclusionReason>,
    /// Set when the instance could not be evaluated at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AdmittedInstance {
    pub record: InstanceRecord,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub instances: Vec<AdmittedInstance>,
    /// One entry per input record, in input order.
    pub manifest: Vec<ManifestEntry>,
    /// Ground truth for every record that could be analysed.
    pub truths: Vec<TruthRecord>,
}

pub fn read_dataset(path: &Path) -> Result<Vec<InstanceRecord>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Data(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| BenchError::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn error_entry(id: &str, error: String) -> ManifestEntry {
    ManifestEntry { id: id.to_string(), admissible: false, reason: None, error: Some(error) }
}

/// Applies the admission rules to every record and derives ground truth for
/// the retained ones. Records whose patch or repository cannot be processed
/// get an error entry and are skipped.
pub fn ingest_dataset(
    records: &[InstanceRecord],
    store: &Path,
    detector: &dyn BoundaryDetector,
    cfg: &AdmissionConfig,
) -> Ingested {
    let mut out = Ingested::default();
    for record in records {
        let patch = match parse_patch(&record.patch) {
            Ok(p) => p,
            Err(e) => {
                out.manifest.push(error_entry(&record.id, format!("bad patch: {e}")));
                continue;
            }
        };
        let snapshot = match resolve_repo(store, &record.repo) {
            Ok(s) => s,
            Err(e) => {
                out.manifest.push(error_entry(&record.id, e));
                continue;
            }
        };
        let images = load_images(snapshot.path(), &patch);
        let admission =
            admissible_instance(&record.issue, &patch, images.as_ref().ok().map(|(a, b)| (a, b)), detector, cfg);
        let truth = match &images {
            Ok((pre, post)) => derive_ground_truth(&patch, pre, post, detector),
            Err(e) => Err(e.clone()),
        };
        match truth {
            Ok(truth) => {
                out.truths.push(TruthRecord::new(&record.id, truth.clone(), admission));
                if admission.admissible {
                    out.instances.push(AdmittedInstance { record: record.clone(), truth });
                }
                out.manifest.push(ManifestEntry {
                    id: record.id.clone(),
                    admissible: admission.admissible,
                    reason: admission.reason,
                    error: None,
                });
            }
            // A rejected record is reported by its rule even when its images
            // are unusable, e.g. a patch that adds a file.
            Err(_) if !admission.admissible => out.manifest.push(ManifestEntry {
                id: record.id.clone(),
                admissible: false,
                reason: admission.reason,
                error: None,
            }),
            Err(e) => out.manifest.push(error_entry(&record.id, format!("ground truth: {e}"))),
        }
    }
    out
}
