//! Runtime and evaluation harness for a code-localization agent that issues
//! parallel read-only tool calls over a repository.

pub mod agent_loop;
pub mod bench;
pub mod data_pipeline;
pub mod entity_gain;
pub mod ground_truth;
pub mod loc_metrics;
pub mod rational;
pub mod repo_tools;
