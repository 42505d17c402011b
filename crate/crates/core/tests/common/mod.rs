//! Fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod fuzz;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use locfuse_core::ground_truth::InstanceRecord;
use locfuse_core::rational::{ratio, Ratio};

pub fn write_tree(root: &Path, files: &[(&str, &str)]) {
    for (path, text) in files {
        let full = root.join(path);
        fs::create_dir_all(full.parent().unwrap()).unwrap();
        fs::write(full, text).unwrap();
    }
}

// ---------------------------------------------------------------------------
// Hand-annotated ground-truth fixture.

pub const GT_MODELS_PRE: &str = "import os

DEFAULT = 1


class Outer:
    \"\"\"Outer docs.\"\"\"

    class Inner:
        def method(self):
            x = 1
            return x

    def run(self):
        value = compute()
        return value


def compute():
    return DEFAULT
";

pub const GT_MODELS_POST: &str = "import os

DEFAULT = 2


class Outer:
    \"\"\"Outer docs.\"\"\"

    class Inner:
        def method(self):
            x = 2
            return x

    def run(self):
        value = compute() * 2
        return value


def compute():
    return DEFAULT
";

pub const GT_UTIL_PRE: &str = "def helper(a):
    return a + 1


def unused():
    return 0
";

pub const GT_UTIL_POST: &str = "def helper(a):
    return a + 2
";

pub const GT_OLD_NAME_PRE: &str = "def legacy():
    return \"old\"
";

pub const GT_NEW_NAME_POST: &str = "def legacy():
    return \"new\"
";

pub const GT_GONE_PRE: &str = "def obsolete():
    pass
";

pub const GT_PATCH: &str = "diff --git a/pkg/models.py b/pkg/models.py
index 1111111..2222222 100644
--- a/pkg/models.py
+++ b/pkg/models.py
@@ -1,5 +1,5 @@
 import os

-DEFAULT = 1
+DEFAULT = 2


@@ -8,10 +8,10 @@ class Outer:

     class Inner:
         def method(self):
-            x = 1
+            x = 2
             return x

     def run(self):
-        value = compute()
+        value = compute() * 2
         return value

diff --git a/pkg/util.py b/pkg/util.py
index 3333333..4444444 100644
--- a/pkg/util.py
+++ b/pkg/util.py
@@ -1,6 +1,2 @@
 def helper(a):
-    return a + 1
-
-
-def unused():
-    return 0
+    return a + 2
diff --git a/pkg/old_name.py b/pkg/new_name.py
similarity index 50%
rename from pkg/old_name.py
rename to pkg/new_name.py
index 5555555..6666666 100644
--- a/pkg/old_name.py
+++ b/pkg/new_name.py
@@ -1,2 +1,2 @@
 def legacy():
-    return \"old\"
+    return \"new\"
diff --git a/pkg/gone.py b/pkg/gone.py
deleted file mode 100644
index 7777777..0000000
--- a/pkg/gone.py
+++ /dev/null
@@ -1,2 +0,0 @@
-def obsolete():
-    pass
";

pub fn gt_pre_files() -> Vec<(&'static str, &'static str)> {
    vec![
        ("pkg/models.py", GT_MODELS_PRE),
        ("pkg/util.py", GT_UTIL_PRE),
        ("pkg/old_name.py", GT_OLD_NAME_PRE),
        ("pkg/gone.py", GT_GONE_PRE),
    ]
}

pub fn gt_post_files() -> BTreeMap<String, String> {
    [("pkg/models.py", GT_MODELS_POST), ("pkg/util.py", GT_UTIL_POST), ("pkg/new_name.py", GT_NEW_NAME_POST)]
        .into_iter()
        .map(|(p, t)| (p.to_string(), t.to_string()))
        .collect()
}

/// The annotation: files, innermost functions, and pre-image line ranges.
pub struct GtAnnotation {
    pub files: Vec<&'static str>,
    pub functions: Vec<&'static str>,
    pub line_ranges: Vec<(&'static str, Vec<[u64; 2]>)>,
}

pub fn gt_annotation() -> GtAnnotation {
    GtAnnotation {
        files: vec!["pkg/gone.py", "pkg/models.py", "pkg/new_name.py", "pkg/util.py"],
        functions: vec![
            "pkg/gone.py::obsolete",
            "pkg/models.py::Outer.Inner.method",
            "pkg/models.py::Outer.run",
            "pkg/new_name.py::legacy",
            "pkg/util.py::helper",
            "pkg/util.py::unused",
        ],
        line_ranges: vec![
            ("pkg/gone.py", vec![[1, 2]]),
            ("pkg/models.py", vec![[3, 3], [11, 11], [15, 15]]),
            ("pkg/new_name.py", vec![[2, 2]]),
            ("pkg/util.py", vec![[2, 6]]),
        ],
    }
}

// ---------------------------------------------------------------------------
// Replay fixture: three turns, five calls, known answer.

pub const REPLAY_APP: &str = "import util\n\ndef main():\n    return util.helper(1)\n";
pub const REPLAY_UTIL: &str = "def helper(x):\n    return x + 1\n";

pub fn replay_repo(root: &Path) {
    write_tree(root, &[("src/app.py", REPLAY_APP), ("src/util.py", REPLAY_UTIL), ("README.md", "hello\n")]);
}

pub const REPLAY_QUERY: &str = "helper() returns the wrong value when called from main().";

pub fn replay_script() -> Vec<String> {
    vec![
        concat!(
            "I will search in parallel.\n",
            r#"<tool_call>{"name": "glob", "arguments": {"pattern": "**/*.py"}}</tool_call>"#,
            "\n",
            r#"<tool_call>{"name": "grep", "arguments": {"pattern": "helper"}}</tool_call>"#,
            "\n",
            r#"<tool_call>{"name": "read_file", "arguments": {"path": "src/util.py"}}</tool_call>"#,
        )
        .to_string(),
        concat!(
            r#"<tool_call>{"name": "read_file", "arguments": {"path": "src/util.py"}}</tool_call>"#,
            "\n",
            r#"<tool_call>{"name": "grep", "arguments": {"pattern": "def main", "output_mode": "content"}}</tool_call>"#,
        )
        .to_string(),
        "The bug is in helper.\n\n## Locations to Modify\n- src/util.py::helper\n- src/app.py\n\n## Related Context\n- README.md\n"
            .to_string(),
    ]
}

/// Hand-computed per-turn gains under snapshot mode.
pub fn replay_gains_snapshot() -> Vec<Vec<Ratio>> {
    vec![vec![ratio(1, 1), ratio(1, 1), ratio(1, 1)], vec![ratio(0, 1), ratio(1, 1)]]
}

/// Hand-computed per-turn gains under strict mode.
pub fn replay_gains_strict() -> Vec<Vec<Ratio>> {
    vec![vec![ratio(1, 1), ratio(0, 1), ratio(1, 1)], vec![ratio(0, 1), ratio(1, 1)]]
}

pub fn replay_truth_json() -> &'static str {
    r#"{"id":"replay","files":["src/util.py"],"functions":["src/util.py::helper"],"line_ranges":{"src/util.py":[[2,2]]},"admissible":true}"#
}

// ---------------------------------------------------------------------------
// Ten-instance admission fixture over one shared repository.

pub const PROJ_CORE: &str = "import math


def area(r):
    return math.pi * r * r


class Shape:
    def scale(self, k):
        self.k = k
        return self

    def name(self):
        return \"shape\"
";

pub const PROJ_IO: &str = "def load(path):
    with open(path) as f:
        return f.read()


def save(path, text):
    with open(path, \"w\") as f:
        f.write(text)
";

pub fn proj_repo(root: &Path) {
    write_tree(root, &[("proj/core.py", PROJ_CORE), ("proj/io.py", PROJ_IO)]);
}

pub fn long_issue(topic: &str) -> String {
    format!(
        "When using {topic} the library produces an incorrect result. Steps to reproduce: call it with \
         ordinary inputs and compare against the documented behaviour; the values differ noticeably."
    )
}

/// `(record, expected reason)`; `None` means admissible.
pub fn admission_dataset(repo: &str) -> Vec<(InstanceRecord, Option<&'static str>)> {
    let rec = |id: &str, issue: String, patch: &str| InstanceRecord {
        id: id.to_string(),
        repo: repo.to_string(),
        base_commit: None,
        issue,
        patch: patch.to_string(),
    };
    let area = "--- a/proj/core.py\n+++ b/proj/core.py\n@@ -4,2 +4,2 @@\n def area(r):\n-    return math.pi * r * r\n+    return math.pi * r ** 2\n";
    let scale = "--- a/proj/core.py\n+++ b/proj/core.py\n@@ -9,3 +9,3 @@\n     def scale(self, k):\n-        self.k = k\n+        self.k = float(k)\n         return self\n";
    let name = "--- a/proj/core.py\n+++ b/proj/core.py\n@@ -13,2 +13,2 @@\n     def name(self):\n-        return \"shape\"\n+        return type(self).__name__\n";
    let load = "--- a/proj/io.py\n+++ b/proj/io.py\n@@ -1,3 +1,3 @@\n def load(path):\n-    with open(path) as f:\n+    with open(path, encoding=\"utf-8\") as f:\n         return f.read()\n";
    let save = "--- a/proj/io.py\n+++ b/proj/io.py\n@@ -6,3 +6,3 @@\n def save(path, text):\n-    with open(path, \"w\") as f:\n+    with open(path, \"w\", encoding=\"utf-8\") as f:\n         f.write(text)\n";
    let import = "--- a/proj/core.py\n+++ b/proj/core.py\n@@ -1 +1,2 @@\n import math\n+import sys\n";
    let new_file = "diff --git a/proj/extra.py b/proj/extra.py\nnew file mode 100644\n--- /dev/null\n+++ b/proj/extra.py\n@@ -0,0 +1,2 @@\n+def extra():\n+    return 1\n";
    let mode_only = "diff --git a/proj/io.py b/proj/io.py\nold mode 100644\nnew mode 100755\n";
    let new_method =
        "--- a/proj/core.py\n+++ b/proj/core.py\n@@ -14,0 +15,3 @@\n+\n+    def perimeter(self):\n+        return 0\n";
    vec![
        (rec("i01", long_issue("area()"), area), None),
        (rec("i02", long_issue("Shape.scale"), scale), None),
        (rec("i03", long_issue("Shape.name"), name), None),
        (rec("i04", long_issue("load()"), load), None),
        (rec("i05", long_issue("save()"), save), None),
        (rec("i06", long_issue("the module imports"), import), None),
        (rec("i07", long_issue("extras"), new_file), Some("new_file")),
        (rec("i08", long_issue("file permissions"), mode_only), Some("no_change")),
        (rec("i09", long_issue("perimeter"), new_method), Some("new_function_only")),
        (rec("i10", "area is wrong".to_string(), area), Some("short_issue")),
    ]
}

// ---------------------------------------------------------------------------
// Parallel vs sequential fixture: the same four calls issued two per turn or
// one per turn.

pub fn compare_calls() -> Vec<&'static str> {
    vec![
        r#"<tool_call>{"name": "glob", "arguments": {"pattern": "**/*.py"}}</tool_call>"#,
        r#"<tool_call>{"name": "grep", "arguments": {"pattern": "def ", "output_mode": "content"}}</tool_call>"#,
        r#"<tool_call>{"name": "read_file", "arguments": {"path": "proj/core.py"}}</tool_call>"#,
        r#"<tool_call>{"name": "read_file", "arguments": {"path": "proj/io.py", "start_line": 1, "end_line": 3}}</tool_call>"#,
    ]
}

pub const COMPARE_ANSWER: &str = "## Locations to Modify\n- proj/core.py::area\n";

pub fn par_script() -> Vec<String> {
    let c = compare_calls();
    vec![format!("{}\n{}", c[0], c[1]), format!("{}\n{}", c[2], c[3]), COMPARE_ANSWER.to_string()]
}

pub fn seq_script() -> Vec<String> {
    let mut s: Vec<String> = compare_calls().into_iter().map(String::from).collect();
    s.push(COMPARE_ANSWER.to_string());
    s
}

pub fn script_json(actions: &[String]) -> String {
    serde_json::to_string(actions).unwrap()
}

// ---------------------------------------------------------------------------
// Independent oracles.

/// P, R, F1 from raw counts using the closed form `F1 = 2h / (p + t)`.
pub fn prf1_oracle(predicted: &[String], truth: &[String]) -> (Ratio, Ratio, Ratio) {
    let mut pred = predicted.to_vec();
    pred.sort();
    pred.dedup();
    let mut gold = truth.to_vec();
    gold.sort();
    gold.dedup();
    let hits = pred.iter().filter(|p| gold.iter().any(|g| g == *p)).count() as i64;
    let frac = |n: i64, d: usize| if d == 0 { ratio(0, 1) } else { ratio(n, d as i64) };
    let f1 = if hits == 0 { ratio(0, 1) } else { ratio(2 * hits, (pred.len() + gold.len()) as i64) };
    (frac(hits, pred.len()), frac(hits, gold.len()), f1)
}

/// Gains for a trajectory of per-call entity lists, by direct set scans.
pub fn gains_oracle(turns: &[Vec<Vec<String>>], strict: bool) -> Vec<Vec<Ratio>> {
    let mut seen: Vec<String> = Vec::new();
    let mut out = Vec::new();
    for turn in turns {
        let mut visible = seen.clone();
        let mut gains = Vec::new();
        for call in turn {
            let mut uniq = call.clone();
            uniq.sort();
            uniq.dedup();
            let novel = uniq.iter().filter(|e| !visible.contains(e)).count();
            gains.push(if uniq.is_empty() { ratio(0, 1) } else { ratio(novel as i64, uniq.len() as i64) });
            if strict {
                visible.extend(uniq.iter().cloned());
            }
        }
        for call in turn {
            seen.extend(call.iter().cloned());
        }
        out.push(gains);
    }
    out
}

pub fn mean_oracle(values: &[Ratio]) -> Ratio {
    if values.is_empty() {
        return ratio(0, 1);
    }
    let mut sum = ratio(0, 1);
    for v in values {
        sum += v;
    }
    sum / ratio(values.len() as i64, 1)
}
