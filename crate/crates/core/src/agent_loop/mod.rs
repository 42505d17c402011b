//! The localization turn loop: ask the model for an action, run its tool
//! calls concurrently, score the results, feed them back, and stop at the
//! first action without tool calls.

pub mod action;
pub mod answer;
pub mod driver;
pub mod episode;
pub mod http;
pub mod presearch;
pub mod prompt;
pub mod trajectory;

pub use action::{format_call, parse_action, parse_call, Action, ParsedCall};
pub use answer::{parse_answer, AnswerOutcome, ParsedAnswer, LOCATIONS_HEADER, RELATED_HEADER};
pub use driver::{ChatMessage, DriverError, DriverKind, DriverReply, ModelDriver, Role, ScriptedDriver, Usage};
pub use episode::{estimate_tokens, run_episode, Clock, EpisodeMeta, FixedClock, SystemClock};
pub use http::{HttpChatConfig, HttpChatDriver};
pub use presearch::{presearch_artifact, PresearchBundle};
pub use prompt::{render_observations, tool_definitions, SYSTEM_PROMPT};
pub use trajectory::{fingerprint, read_trajectories, Budget, CostRecord, EpisodeConfig, Trajectory, Turn};
