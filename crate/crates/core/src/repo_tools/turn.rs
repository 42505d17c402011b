use std::thread;

use super::{glob, grep, read_file, Observation, RepoRoot, ToolCall, ToolLimits, ToolRequest};

/// Runs a single call. The returned observation carries the call's index.
pub fn run_call(root: &RepoRoot, call: &ToolCall, limits: &ToolLimits) -> Observation {
    let obs = match &call.request {
        ToolRequest::Grep(a) => grep(root, a, limits),
        ToolRequest::Glob(a) => glob(root, a, limits),
        ToolRequest::ReadFile(a) => read_file(root, a, limits),
    };
    obs.with_index(call.call_index)
}

/// Executes every call of one turn concurrently, one scoped thread per call.
///
/// Output is ordered by `call_index` regardless of completion order. A
/// failing call only affects its own observation.
pub fn execute_turn(root: &RepoRoot, calls: &[ToolCall], limits: &ToolLimits) -> Vec<Observation> {
    let mut out: Vec<Observation> = thread::scope(|scope| {
        let handles: Vec<_> = calls.iter().map(|call| scope.spawn(move || run_call(root, call, limits))).collect();
        handles
            .into_iter()
            .zip(calls)
            .map(|(h, call)| {
                h.join().unwrap_or_else(|_| Observation::error(call.call_index, "tool execution panicked"))
            })
            .collect()
    });
    out.sort_by_key(|o| o.call_index);
    out
}
