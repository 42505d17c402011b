//! Random repositories and tool-call batches.

use std::path::Path;

use locfuse_core::repo_tools::{GlobArgs, GrepArgs, GrepMode, ReadFileArgs, ToolCall, ToolRequest};
use rand::rngs::StdRng;
use rand::Rng;

use super::write_tree;

const WORDS: &[&str] = &["alpha", "beta", "gamma", "def", "class", "return", "SECRET", "x = 1", "import"];
pub const DIRS: &[&str] = &["", "src/", "src/pkg/", "docs/", "tests/"];
const EXTS: &[&str] = &["py", "md", "txt", "rs"];

pub fn random_repo(rng: &mut StdRng, root: &Path) {
    let n = rng.gen_range(1..25);
    let mut files = Vec::new();
    for i in 0..n {
        let path = format!("{}f{i}.{}", DIRS[rng.gen_range(0..DIRS.len())], EXTS[rng.gen_range(0..EXTS.len())]);
        let lines: Vec<String> = (0..rng.gen_range(0..120))
            .map(|_| {
                (0..rng.gen_range(0..4)).map(|_| WORDS[rng.gen_range(0..WORDS.len() - 3)]).collect::<Vec<_>>().join(" ")
            })
            .collect();
        files.push((path, lines.join("\n") + "\n"));
    }
    let refs: Vec<(&str, &str)> = files.iter().map(|(p, t)| (p.as_str(), t.as_str())).collect();
    write_tree(root, &refs);
}

pub fn random_path(rng: &mut StdRng) -> String {
    let parts = ["src", "pkg", "..", ".", "docs", "f1.py", "f0.md", "missing", "/etc"];
    (0..rng.gen_range(0..4)).map(|_| parts[rng.gen_range(0..parts.len())]).collect::<Vec<_>>().join("/")
}

pub fn random_call(rng: &mut StdRng, index: usize) -> ToolCall {
    let opt_path = |rng: &mut StdRng| if rng.gen_bool(0.5) { Some(random_path(rng)) } else { None };
    let request = match rng.gen_range(0..3) {
        0 => {
            let patterns = ["alpha", "def \\w+", "(", "^class", "beta|gamma", "SECRET", "[a-z]+ = 1"];
            ToolRequest::Grep(GrepArgs {
                pattern: patterns[rng.gen_range(0..patterns.len())].into(),
                path: opt_path(rng),
                glob: if rng.gen_bool(0.3) {
                    Some(["*.py", "src/**/*.md", "[", "*.txt"][rng.gen_range(0..4)].into())
                } else {
                    None
                },
                output_mode: match rng.gen_range(0..4) {
                    0 => None,
                    1 => Some(GrepMode::FilesWithMatches),
                    2 => Some(GrepMode::Content),
                    _ => Some(GrepMode::Count),
                },
            })
        }
        1 => {
            let patterns = ["**/*.py", "*.md", "src/*", "**", "{", "**/f1*"];
            ToolRequest::Glob(GlobArgs {
                pattern: patterns[rng.gen_range(0..patterns.len())].into(),
                path: opt_path(rng),
            })
        }
        _ => {
            let start = if rng.gen_bool(0.5) { Some(rng.gen_range(0..130)) } else { None };
            let end = if rng.gen_bool(0.5) { Some(rng.gen_range(0..130)) } else { None };
            let path = if rng.gen_bool(0.7) {
                format!(
                    "{}f{}.{}",
                    DIRS[rng.gen_range(0..DIRS.len())],
                    rng.gen_range(0..25),
                    EXTS[rng.gen_range(0..EXTS.len())]
                )
            } else {
                random_path(rng)
            };
            ToolRequest::ReadFile(ReadFileArgs { path, start_line: start, end_line: end })
        }
    };
    ToolCall::new(index, request)
}
