//! Access to language models: a remote OpenAI-compatible endpoint and a
//! deterministic rule-driven mock, behind one gateway that adds caching,
//! retries, structured-output validation and token accounting.

mod cache;
mod gateway;
mod mock;
mod parse;
mod pricing;
mod remote;

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheKey, ResponseCache};
pub use gateway::{Accounting, CallRecord, Gateway, RetryPolicy, UsageSnapshot};
pub use mock::{Faults, LatencyModel, MockConfig, MockOracle, MockRule, Verdict, VerdictOp};
pub use parse::{parse_bool, parse_response, strip_fences};
pub use pricing::{cost, Pricing};
pub use remote::OpenAiProvider;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        TokenUsage {
            input_tokens,
            output_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, o: TokenUsage) -> TokenUsage {
        TokenUsage::new(self.input_tokens + o.input_tokens, self.output_tokens + o.output_tokens)
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, o: TokenUsage) {
        *self = *self + o;
    }
}

/// ⌈chars/4⌉, the stand-in token count when no tokenizer report exists.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scalar {
    Bool,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Item {
    Scalar(Scalar),
    /// `{"first": .., "second": ..}`
    Pair(Scalar, Scalar),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseFormat {
    FreeText,
    JsonBool,
    JsonPair(Scalar, Scalar),
    JsonArray { len: usize, item: Item },
    JsonStringList,
}

/// A validated structured value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Parsed {
    Null,
    Bool(bool),
    Text(String),
    Pair(Box<Parsed>, Box<Parsed>),
    List(Vec<Parsed>),
}

impl Parsed {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Parsed::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Parsed::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn into_list(self) -> Option<Vec<Parsed>> {
        match self {
            Parsed::List(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Filter,
    Proj,
    Join,
    Compare,
    Agg,
    Compress,
    Deduce,
    Verify,
}

/// Column values visible to one prompt, keyed by lowercase column name
/// (both bare and `alias.column`).
pub type Fields = BTreeMap<String, String>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskItem {
    pub fields: Fields,
    /// The right-hand tuple of a join pair or comparison.
    pub right: Option<Fields>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStep {
    pub kind: TaskKind,
    pub template: String,
    pub alias: Option<String>,
}

/// What a request is asking, in structured form. Never sent over the wire
/// and not part of the cache key; the mock oracle evaluates it instead of
/// reading prompt text.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub kind: TaskKind,
    pub template: String,
    pub items: Vec<TaskItem>,
    pub fused: Option<(TaskStep, TaskStep)>,
    /// Values for aggregation, candidate predicates for verification.
    pub extra: Vec<String>,
}

impl Task {
    pub fn new(kind: TaskKind, template: impl Into<String>) -> Self {
        Task {
            kind,
            template: template.into(),
            items: Vec::new(),
            fused: None,
            extra: Vec::new(),
        }
    }

    pub fn with_items(mut self, items: Vec<TaskItem>) -> Self {
        self.items = items;
        self
    }

    pub fn with_extra(mut self, extra: Vec<String>) -> Self {
        self.extra = extra;
        self
    }
}

#[derive(Debug, Clone)]
pub struct LlmRequest {
    pub model: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub response_format: ResponseFormat,
    pub task: Option<Task>,
    /// Issuer tag for the call trace, e.g. `SemFilter#3`.
    pub label: String,
}

impl LlmRequest {
    pub fn new(
        model: impl Into<String>,
        system_prompt: impl Into<String>,
        user_prompt: impl Into<String>,
        response_format: ResponseFormat,
    ) -> Self {
        LlmRequest {
            model: model.into(),
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: 0.0,
            response_format,
            task: None,
            label: String::new(),
        }
    }

    pub fn with_task(mut self, task: Task) -> Self {
        self.task = Some(task);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }
}

/// Raw provider output before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    pub usage: Option<TokenUsage>,
    /// Simulated latency; `None` means the gateway measures wall clock.
    pub latency: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmResponse {
    pub text: String,
    /// Present for structured formats.
    pub parsed: Option<Parsed>,
    pub usage: TokenUsage,
    pub latency: Duration,
    pub from_cache: bool,
    /// Usage was estimated because the provider reported none.
    pub estimated: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed model output ({reason}): {raw}")]
    Malformed {
        reason: String,
        raw: String,
        usage: TokenUsage,
        latency: Duration,
    },
    #[error("mock oracle: {0}")]
    Mock(String),
    #[error("{0}")]
    Config(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        match self {
            LlmError::Transport(_) => true,
            LlmError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, req: &LlmRequest) -> Result<ProviderReply, LlmError>;
}
