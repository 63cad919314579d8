//! A deterministic stand-in for a model. Verdicts come from an ordered
//! rule list evaluated against the structured task attached to each
//! request, so results are a pure function of the request.

use std::path::Path;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    estimate_tokens, Item, LlmError, LlmProvider, LlmRequest, ProviderReply, ResponseFormat,
    Scalar, Task, TaskItem, TaskKind, TokenUsage,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictOp {
    /// The first `words` words of a field.
    EchoWords { field: String, words: usize },
    /// The value of a field.
    Field { field: String },
    /// Whether the left and right tuples share a word in the given fields.
    SharesWord { left: String, right: String },
    /// For comparisons: the left tuple precedes when its field is no longer.
    ShorterFirst { field: String },
    /// For aggregation: `"<n> values"`.
    CountSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Verdict {
    Bool(bool),
    Text(String),
    Op(VerdictOp),
    /// Any other JSON, returned verbatim.
    Raw(Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    /// Task kind; any kind when absent.
    #[serde(default)]
    pub task: Option<TaskKind>,
    /// Case-insensitive substring of the task template.
    #[serde(default)]
    pub template: Option<String>,
    /// Field to test; all fields when absent.
    #[serde(default)]
    pub field: Option<String>,
    /// Matches when the field contains any of these (case-insensitive).
    #[serde(default)]
    pub contains_any: Vec<String>,
    #[serde(default)]
    pub regex: Option<String>,
    #[serde(default)]
    pub negate: bool,
    pub verdict: Verdict,
    /// Overrides the per-item simulated latency.
    #[serde(default)]
    pub latency_ms: Option<f64>,
    /// Overrides token accounting for single-item requests.
    #[serde(default)]
    pub tokens: Option<TokenUsage>,
}

/// Simulated response time: a fixed cost per call plus a cost per item
/// depending on how the item was packed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    pub per_call_ms: f64,
    pub single_item_ms: f64,
    pub fused_item_ms: f64,
    pub batched_item_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            per_call_ms: 50.0,
            single_item_ms: 0.0,
            fused_item_ms: 5.0,
            batched_item_ms: 5.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Faults {
    /// Fraction of booleans negated in batched (array) responses.
    pub batched_flip_rate: f64,
    /// Fraction of fused responses whose second verdict is negated.
    pub fused_flip_rate: f64,
    /// Batched responses with an item containing this text lose their last
    /// element.
    pub truncate_marker: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub rules: Vec<MockRule>,
    pub latency: LatencyModel,
    pub faults: Faults,
    /// Verdict for filter, join and verification items no rule matches.
    pub default_bool: bool,
}

impl MockConfig {
    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// One evaluated item.
#[derive(Debug, Clone, PartialEq)]
enum Answer {
    Bool(bool),
    Text(String),
    Json(Value),
}

impl Answer {
    fn truthy(&self) -> bool {
        match self {
            Answer::Bool(b) => *b,
            Answer::Text(s) => s.trim().eq_ignore_ascii_case("true"),
            Answer::Json(v) => v.as_bool().unwrap_or(false),
        }
    }

    fn text(&self) -> String {
        match self {
            Answer::Bool(b) => b.to_string(),
            Answer::Text(s) => s.clone(),
            Answer::Json(Value::String(s)) => s.clone(),
            Answer::Json(v) => v.to_string(),
        }
    }

    fn json(&self, kind: Scalar) -> Value {
        match kind {
            Scalar::Bool => Value::Bool(self.truthy()),
            Scalar::Text => Value::String(self.text()),
        }
    }
}

pub struct MockOracle {
    config: MockConfig,
    regexes: Vec<Option<Regex>>,
}

fn fnv(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ seed;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn hit(rate: f64, prompt: &str, index: usize) -> bool {
    rate > 0.0 && (fnv(prompt.as_bytes(), index as u64) as f64 / u64::MAX as f64) < rate
}

fn words(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
}

impl MockOracle {
    pub fn new(config: MockConfig) -> Result<Self, LlmError> {
        let regexes = config
            .rules
            .iter()
            .map(|r| {
                r.regex
                    .as_deref()
                    .map(Regex::new)
                    .transpose()
                    .map_err(|e| LlmError::Config(format!("bad rule regex: {e}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(MockOracle { config, regexes })
    }

    pub fn from_file(path: &Path) -> crate::Result<Self> {
        Ok(Self::new(MockConfig::load(path)?)?)
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    fn matching_rule(&self, kind: TaskKind, template: &str, item: &TaskItem) -> Option<&MockRule> {
        let template = template.to_lowercase();
        self.config.rules.iter().zip(&self.regexes).find_map(|(r, re)| {
            if r.task.is_some_and(|k| k != kind) {
                return None;
            }
            if r.template.as_ref().is_some_and(|t| !template.contains(&t.to_lowercase())) {
                return None;
            }
            let hay = match &r.field {
                Some(f) => item.fields.get(&f.to_lowercase()).cloned().unwrap_or_default(),
                None => item.fields.values().cloned().collect::<Vec<_>>().join(" "),
            };
            let lower = hay.to_lowercase();
            let mut ok = r.contains_any.is_empty()
                || r.contains_any.iter().any(|w| lower.contains(&w.to_lowercase()));
            if let Some(re) = re {
                ok &= re.is_match(&hay);
            }
            (ok != r.negate).then_some(r)
        })
    }

    fn apply(&self, verdict: &Verdict, item: &TaskItem, task: &Task) -> Answer {
        let field = |f: &str, m: &crate::llm::Fields| m.get(&f.to_lowercase()).cloned().unwrap_or_default();
        match verdict {
            Verdict::Bool(b) => Answer::Bool(*b),
            Verdict::Text(s) => Answer::Text(s.clone()),
            Verdict::Raw(v) => Answer::Json(v.clone()),
            Verdict::Op(op) => match op {
                VerdictOp::EchoWords { field: f, words: n } => Answer::Text(
                    field(f, &item.fields)
                        .split_whitespace()
                        .take(*n)
                        .collect::<Vec<_>>()
                        .join(" "),
                ),
                VerdictOp::Field { field: f } => Answer::Text(field(f, &item.fields)),
                VerdictOp::SharesWord { left, right } => {
                    let l: std::collections::BTreeSet<String> = words(&field(left, &item.fields)).collect();
                    let r = item.right.as_ref().map(|m| field(right, m)).unwrap_or_default();
                    let shared = words(&r).any(|w| l.contains(&w));
                    Answer::Bool(shared)
                }
                VerdictOp::ShorterFirst { field: f } => {
                    let a = field(f, &item.fields).chars().count();
                    let b = item
                        .right
                        .as_ref()
                        .map_or(usize::MAX, |m| field(f, m).chars().count());
                    Answer::Bool(a <= b)
                }
                VerdictOp::CountSummary => Answer::Text(format!("{} values", task.extra.len())),
            },
        }
    }

    fn default_answer(&self, kind: TaskKind, task: &Task) -> Answer {
        match kind {
            TaskKind::Filter | TaskKind::Join | TaskKind::Compare => Answer::Bool(self.config.default_bool),
            TaskKind::Proj => Answer::Text(String::new()),
            TaskKind::Agg => Answer::Text(format!("{} values", task.extra.len())),
            TaskKind::Compress => Answer::Text(task.template.clone()),
            TaskKind::Deduce => Answer::Json(json!([])),
            TaskKind::Verify => Answer::Json(Value::Array(
                task.extra.iter().map(|_| Value::Bool(self.config.default_bool)).collect(),
            )),
        }
    }

    /// Answer for one item plus the latency override of the rule used.
    fn eval(&self, kind: TaskKind, template: &str, item: &TaskItem, task: &Task) -> (Answer, Option<&MockRule>) {
        match self.matching_rule(kind, template, item) {
            Some(rule) => (self.apply(&rule.verdict, item, task), Some(rule)),
            None => (self.default_answer(kind, task), None),
        }
    }

    fn eval_fused(&self, task: &Task, item: &TaskItem) -> (Answer, Option<Answer>) {
        let (first, second) = task.fused.as_ref().expect("fused task");
        let (a, _) = self.eval(first.kind, &first.template, item, task);
        if first.kind == TaskKind::Filter && !a.truthy() {
            return (a, None);
        }
        let mut item = item.clone();
        if let Some(alias) = &first.alias {
            item.fields.insert(alias.to_lowercase(), a.text());
        }
        let (b, _) = self.eval(second.kind, &second.template, &item, task);
        (a, Some(b))
    }

    fn render(&self, req: &LlmRequest, task: &Task) -> (String, f64, Option<TokenUsage>) {
        let lat = &self.config.latency;
        let faults = &self.config.faults;
        let items: Vec<TaskItem> = if task.items.is_empty() {
            vec![TaskItem::default()]
        } else {
            task.items.clone()
        };
        let item_cost = |rule: Option<&MockRule>, base: f64| rule.and_then(|r| r.latency_ms).unwrap_or(base);

        if task.fused.is_some() {
            let pair_json = |i: usize, item: &TaskItem, a: Scalar, b: Scalar| {
                let (x, y) = self.eval_fused(task, item);
                let mut second = y.map_or(Value::Null, |y| y.json(b));
                if hit(faults.fused_flip_rate, &req.user_prompt, i) {
                    if let Value::Bool(v) = second {
                        second = Value::Bool(!v);
                    }
                }
                json!({"first": x.json(a), "second": second})
            };
            return match req.response_format {
                ResponseFormat::JsonArray {
                    item: Item::Pair(a, b),
                    ..
                } => {
                    let mut arr: Vec<Value> = items.iter().enumerate().map(|(i, it)| pair_json(i, it, a, b)).collect();
                    self.batch_faults(&mut arr, req, &items);
                    let ms = lat.per_call_ms + lat.batched_item_ms * items.len() as f64;
                    (Value::Array(arr).to_string(), ms, None)
                }
                ResponseFormat::JsonPair(a, b) => {
                    let v = pair_json(0, &items[0], a, b);
                    (v.to_string(), lat.per_call_ms + lat.fused_item_ms, None)
                }
                _ => (String::new(), lat.per_call_ms, None),
            };
        }

        let kind = task.kind;
        match req.response_format {
            ResponseFormat::JsonArray { item, .. } if kind != TaskKind::Verify => {
                let scalar = match item {
                    Item::Scalar(s) => s,
                    Item::Pair(a, _) => a,
                };
                let mut ms = lat.per_call_ms;
                let mut arr = Vec::with_capacity(items.len());
                for it in &items {
                    let (ans, rule) = self.eval(kind, &task.template, it, task);
                    ms += item_cost(rule, lat.batched_item_ms);
                    arr.push(ans.json(scalar));
                }
                self.batch_faults(&mut arr, req, &items);
                (Value::Array(arr).to_string(), ms, None)
            }
            format => {
                let (ans, rule) = self.eval(kind, &task.template, &items[0], task);
                let ms = lat.per_call_ms + item_cost(rule, lat.single_item_ms);
                let text = match (format, &ans) {
                    (ResponseFormat::JsonBool, a) => a.truthy().to_string(),
                    (ResponseFormat::JsonArray { len, .. }, Answer::Bool(b)) => {
                        Value::Array(vec![Value::Bool(*b); len]).to_string()
                    }
                    (_, Answer::Json(v)) => v.to_string(),
                    (ResponseFormat::JsonPair(..), a) => json!({"first": a.text()}).to_string(),
                    (ResponseFormat::JsonStringList, a) => json!([a.text()]).to_string(),
                    (_, a) => a.text(),
                };
                (text, ms, rule.and_then(|r| r.tokens))
            }
        }
    }

    fn batch_faults(&self, arr: &mut Vec<Value>, req: &LlmRequest, items: &[TaskItem]) {
        let faults = &self.config.faults;
        for (i, v) in arr.iter_mut().enumerate() {
            if !hit(faults.batched_flip_rate, &req.user_prompt, i) {
                continue;
            }
            match v {
                Value::Bool(b) => *b = !*b,
                Value::Object(o) => {
                    if let Some(Value::Bool(b)) = o.get_mut("first") {
                        *b = !*b;
                    }
                }
                _ => {}
            }
        }
        if let Some(marker) = &faults.truncate_marker {
            let marker = marker.to_lowercase();
            let marked = items
                .iter()
                .any(|it| it.fields.values().any(|v| v.to_lowercase().contains(&marker)));
            if marked {
                arr.pop();
            }
        }
    }
}

impl LlmProvider for MockOracle {
    fn complete(&self, req: &LlmRequest) -> Result<ProviderReply, LlmError> {
        let task = req
            .task
            .as_ref()
            .ok_or_else(|| LlmError::Mock("request carries no task description".into()))?;
        let (text, ms, tokens) = self.render(req, task);
        let usage = tokens.unwrap_or_else(|| {
            TokenUsage::new(
                estimate_tokens(&req.system_prompt) + estimate_tokens(&req.user_prompt),
                estimate_tokens(&text),
            )
        });
        Ok(ProviderReply {
            text,
            usage: Some(usage),
            latency: Some(Duration::from_secs_f64(ms / 1e3)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Fields, Parsed, TaskStep};

    fn item(pairs: &[(&str, &str)]) -> TaskItem {
        TaskItem {
            fields: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<Fields>(),
            right: None,
        }
    }

    fn positive_oracle() -> MockOracle {
        let cfg: MockConfig = serde_json::from_value(json!({
            "rules": [
                {"task": "filter", "template": "positive", "field": "review",
                 "contains_any": ["great", "good"], "verdict": true},
                {"task": "filter", "template": "positive", "verdict": false},
                {"task": "proj", "template": "keywords", "verdict": {"kind": "echo_words", "field": "review", "words": 3}}
            ]
        }))
        .unwrap();
        MockOracle::new(cfg).unwrap()
    }

    fn ask(m: &MockOracle, format: ResponseFormat, task: Task) -> String {
        let req = LlmRequest::new("mock", "", "prompt", format).with_task(task);
        m.complete(&req).unwrap().text
    }

    #[test]
    fn first_matching_rule_wins() {
        let m = positive_oracle();
        let t = |v: &str| {
            Task::new(TaskKind::Filter, "{review} is positive").with_items(vec![item(&[("review", v)])])
        };
        assert_eq!(ask(&m, ResponseFormat::JsonBool, t("Really good")), "true");
        assert_eq!(ask(&m, ResponseFormat::JsonBool, t("meh")), "false");
    }

    #[test]
    fn batched_and_fused_shapes() {
        let m = positive_oracle();
        let items = vec![item(&[("review", "good")]), item(&[("review", "bad")])];
        let task = Task::new(TaskKind::Filter, "{review} is positive").with_items(items.clone());
        let fmt = ResponseFormat::JsonArray {
            len: 2,
            item: Item::Scalar(Scalar::Bool),
        };
        assert_eq!(ask(&m, fmt, task), "[true,false]");

        let mut fused = Task::new(TaskKind::Filter, "combined").with_items(items);
        fused.fused = Some((
            TaskStep {
                kind: TaskKind::Filter,
                template: "{review} is positive".into(),
                alias: None,
            },
            TaskStep {
                kind: TaskKind::Proj,
                template: "keywords of {review}".into(),
                alias: Some("kw".into()),
            },
        ));
        let fmt = ResponseFormat::JsonArray {
            len: 2,
            item: Item::Pair(Scalar::Bool, Scalar::Text),
        };
        let out: Value = serde_json::from_str(&ask(&m, fmt, fused)).unwrap();
        assert_eq!(out, json!([{"first": true, "second": "good"}, {"first": false, "second": null}]));
    }

    #[test]
    fn deterministic_and_charged_by_length() {
        let m = positive_oracle();
        let req = LlmRequest::new("mock", "abcd", "abcdefgh", ResponseFormat::JsonBool).with_task(
            Task::new(TaskKind::Filter, "{review} is positive").with_items(vec![item(&[("review", "great")])]),
        );
        let a = m.complete(&req).unwrap();
        assert_eq!(a, m.complete(&req).unwrap());
        assert_eq!(a.usage, Some(TokenUsage::new(3, 1)));
        assert_eq!(crate::llm::parse_response(&a.text, &req.response_format).unwrap(), Some(Parsed::Bool(true)));
    }

    #[test]
    fn truncation_fault_drops_one_element() {
        let mut cfg = positive_oracle().config.clone();
        cfg.faults.truncate_marker = Some("poison".into());
        let m = MockOracle::new(cfg).unwrap();
        let fmt = ResponseFormat::JsonArray {
            len: 2,
            item: Item::Scalar(Scalar::Bool),
        };
        let clean = Task::new(TaskKind::Filter, "{review} is positive")
            .with_items(vec![item(&[("review", "good")]), item(&[("review", "ok")])]);
        let poisoned = Task::new(TaskKind::Filter, "{review} is positive")
            .with_items(vec![item(&[("review", "good")]), item(&[("review", "poison")])]);
        assert_eq!(ask(&m, fmt, clean), "[true,false]");
        assert_eq!(ask(&m, fmt, poisoned), "[true]");
    }
}
