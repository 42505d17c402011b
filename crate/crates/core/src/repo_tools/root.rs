use std::fs;
use std::path::{Component, Path, PathBuf};

use ignore::WalkBuilder;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ToolError {
    #[error("repository root {0} is not a readable directory")]
    BadRoot(String),
    #[error("path {0:?} is outside the repository")]
    OutsideRoot(String),
    #[error("path {0:?} does not exist")]
    NotFound(String),
    #[error("path {0:?} is not a regular file")]
    NotAFile(String),
    #[error("path {0:?} is excluded from search")]
    Excluded(String),
    #[error("invalid regex: {0}")]
    BadRegex(String),
    #[error("invalid glob: {0}")]
    BadGlob(String),
    #[error("invalid line range: {0}")]
    BadRange(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// An immutable repository snapshot on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepoRoot {
    path: PathBuf,
    id: String,
}

impl RepoRoot {
    pub fn open(path: impl AsRef<Path>, id: impl Into<String>) -> Result<Self, ToolError> {
        let raw = path.as_ref();
        let canonical = fs::canonicalize(raw).map_err(|_| ToolError::BadRoot(raw.display().to_string()))?;
        if !canonical.is_dir() || fs::read_dir(&canonical).is_err() {
            return Err(ToolError::BadRoot(raw.display().to_string()));
        }
        Ok(Self { path: canonical, id: id.into() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Maps a user-supplied path (absolute or relative) to a normalized
    /// repository-relative path. The empty string denotes the root itself.
    ///
    /// Resolution is lexical; `..` may not climb above the root, and no
    /// existing component along the way may be a symbolic link.
    pub fn resolve(&self, raw: &str) -> Result<String, ToolError> {
        let candidate = Path::new(raw);
        let relative: &Path = if candidate.is_absolute() {
            candidate.strip_prefix(&self.path).map_err(|_| ToolError::OutsideRoot(raw.to_string()))?
        } else {
            candidate
        };
        let mut parts: Vec<String> = Vec::new();
        for component in relative.components() {
            match component {
                Component::Normal(p) => parts.push(p.to_string_lossy().into_owned()),
                Component::CurDir => {}
                Component::ParentDir => {
                    if parts.pop().is_none() {
                        return Err(ToolError::OutsideRoot(raw.to_string()));
                    }
                }
                Component::RootDir | Component::Prefix(_) => return Err(ToolError::OutsideRoot(raw.to_string())),
            }
        }
        let mut walk = self.path.clone();
        for part in &parts {
            walk.push(part);
            match fs::symlink_metadata(&walk) {
                Ok(meta) if meta.file_type().is_symlink() => return Err(ToolError::OutsideRoot(raw.to_string())),
                Ok(_) => {}
                Err(_) => break,
            }
        }
        Ok(parts.join("/"))
    }

    pub fn absolute(&self, relative: &str) -> PathBuf {
        if relative.is_empty() {
            self.path.clone()
        } else {
            self.path.join(relative)
        }
    }

    /// All searchable regular files, sorted. Skips `.git`, paths matched by
    /// the repository's ignore files, and symbolic links.
    pub fn files(&self) -> Vec<String> {
        let mut out = Vec::new();
        let walker = WalkBuilder::new(&self.path)
            .hidden(false)
            .parents(false)
            .ignore(true)
            .git_ignore(true)
            .git_global(false)
            .git_exclude(false)
            .require_git(false)
            .follow_links(false)
            .filter_entry(|e| e.file_name() != ".git")
            .build();
        for entry in walker.flatten() {
            if !entry.file_type().is_some_and(|t| t.is_file()) {
                continue;
            }
            if let Ok(rel) = entry.path().strip_prefix(&self.path) {
                let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                out.push(parts.join("/"));
            }
        }
        out.sort();
        out
    }

    /// Files under `base` (a resolved relative path, file or directory).
    pub fn files_under(&self, base: &str) -> Result<Vec<String>, ToolError> {
        let all = self.files();
        if base.is_empty() {
            return Ok(all);
        }
        if !self.absolute(base).exists() {
            return Err(ToolError::NotFound(base.to_string()));
        }
        let prefix = format!("{base}/");
        let under: Vec<String> = all.into_iter().filter(|f| f == base || f.starts_with(&prefix)).collect();
        Ok(under)
    }
}

pub(crate) fn is_binary(bytes: &[u8]) -> bool {
    bytes.iter().take(8 * 1024).any(|&b| b == 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repo() -> (tempfile::TempDir, RepoRoot) {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("src/pkg")).unwrap();
        fs::create_dir_all(dir.path().join(".git")).unwrap();
        fs::write(dir.path().join(".git/config"), "x").unwrap();
        fs::write(dir.path().join("a.py"), "a\n").unwrap();
        fs::write(dir.path().join("src/pkg/b.py"), "b\n").unwrap();
        fs::write(dir.path().join("build.log"), "log\n").unwrap();
        fs::write(dir.path().join(".gitignore"), "*.log\n").unwrap();
        let root = RepoRoot::open(dir.path(), "t").unwrap();
        (dir, root)
    }

    #[test]
    fn listing_skips_git_and_ignored() {
        let (_d, root) = repo();
        assert_eq!(root.files(), vec![".gitignore", "a.py", "src/pkg/b.py"]);
    }

    #[test]
    fn resolve_rejects_escapes() {
        let (_d, root) = repo();
        assert_eq!(root.resolve("src/../a.py").unwrap(), "a.py");
        assert_eq!(root.resolve("./src/pkg").unwrap(), "src/pkg");
        assert_eq!(root.resolve("").unwrap(), "");
        assert!(matches!(root.resolve("../etc/passwd"), Err(ToolError::OutsideRoot(_))));
        assert!(matches!(root.resolve("src/../../x"), Err(ToolError::OutsideRoot(_))));
        assert!(matches!(root.resolve("/etc/passwd"), Err(ToolError::OutsideRoot(_))));
        let abs = root.path().join("src/pkg/b.py");
        assert_eq!(root.resolve(abs.to_str().unwrap()).unwrap(), "src/pkg/b.py");
    }

    #[cfg(unix)]
    #[test]
    fn symlinks_are_not_followed() {
        let (dir, root) = repo();
        std::os::unix::fs::symlink("/etc", dir.path().join("etc_link")).unwrap();
        assert!(matches!(root.resolve("etc_link/passwd"), Err(ToolError::OutsideRoot(_))));
        assert!(!root.files().iter().any(|f| f.starts_with("etc_link")));
    }

    #[test]
    fn open_rejects_missing_dir() {
        assert!(RepoRoot::open("/definitely/not/here", "x").is_err());
    }
}
