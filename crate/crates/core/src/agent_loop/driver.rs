use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DriverReply {
    pub text: String,
    /// Provider-reported usage, when the provider reports it.
    pub usage: Option<Usage>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DriverError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("bad response from model endpoint: {0}")]
    Protocol(String),
    #[error("scripted driver has no action for turn {0}")]
    ScriptExhausted(usize),
    #[error("driver configuration: {0}")]
    Config(String),
}

impl DriverError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, DriverError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverKind {
    HttpChat,
    ScriptedReplay,
}

/// Produces the next action from the full message history.
pub trait ModelDriver: Send {
    fn kind(&self) -> DriverKind;
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<DriverReply, DriverError>;
}

impl<D: ModelDriver + ?Sized> ModelDriver for Box<D> {
    fn kind(&self) -> DriverKind {
        (**self).kind()
    }

    fn complete(&mut self, messages: &[ChatMessage]) -> Result<DriverReply, DriverError> {
        (**self).complete(messages)
    }
}

/// Replays a fixed list of actions. The action for a request is selected by
/// the number of assistant messages already in the history, so identical
/// histories always get identical replies.
#[derive(Debug, Clone)]
pub struct ScriptedDriver {
    actions: Vec<String>,
    repeat_last: bool,
}

impl ScriptedDriver {
    pub fn new<I, S>(actions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { actions: actions.into_iter().map(Into::into).collect(), repeat_last: false }
    }

    /// Keep returning the final action once the script runs out.
    pub fn repeating_last(mut self) -> Self {
        self.repeat_last = true;
        self
    }

    /// Loads `["action", ...]` or `{"actions": [...], "repeat_last": bool}`.
    pub fn from_json(text: &str) -> Result<Self, DriverError> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Script {
            List(Vec<String>),
            Object {
                actions: Vec<String>,
                #[serde(default)]
                repeat_last: bool,
            },
        }
        match serde_json::from_str(text) {
            Ok(Script::List(actions)) => Ok(Self::new(actions)),
            Ok(Script::Object { actions, repeat_last }) => Ok(Self { actions, repeat_last }),
            Err(e) => Err(DriverError::Config(format!("bad script: {e}"))),
        }
    }
}

impl ModelDriver for ScriptedDriver {
    fn kind(&self) -> DriverKind {
        DriverKind::ScriptedReplay
    }

    fn complete(&mut self, messages: &[ChatMessage]) -> Result<DriverReply, DriverError> {
        let turn = messages.iter().filter(|m| m.role == Role::Assistant).count();
        let text = match self.actions.get(turn) {
            Some(a) => a.clone(),
            None if self.repeat_last && !self.actions.is_empty() => self.actions[self.actions.len() - 1].clone(),
            None => return Err(DriverError::ScriptExhausted(turn + 1)),
        };
        Ok(DriverReply { text, usage: None })
    }
}
