use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::Serialize;

use super::cache::{CacheKey, ResponseCache};
use super::parse::parse_response;
use super::pricing::{cost, Pricing};
use super::{
    estimate_tokens, LlmError, LlmProvider, LlmRequest, LlmResponse, ProviderReply, ResponseFormat,
    TokenUsage,
};

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_backoff: Duration,
}

impl RetryPolicy {
    /// No waiting between attempts. For tests.
    pub fn immediate(attempts: u32) -> Self {
        RetryPolicy {
            attempts,
            base_backoff: Duration::ZERO,
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.base_backoff * 2u32.pow(attempt)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_backoff: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CallRecord {
    pub label: String,
    pub from_cache: bool,
    pub usage: TokenUsage,
    #[serde(serialize_with = "ser_ms")]
    pub latency: Duration,
    pub estimated: bool,
}

fn ser_ms<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1e3)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct UsageSnapshot {
    /// Upstream calls, cache hits excluded.
    pub calls: u64,
    pub cache_hits: u64,
    pub usage: TokenUsage,
    #[serde(serialize_with = "ser_ms")]
    pub latency: Duration,
}

impl UsageSnapshot {
    pub fn since(&self, earlier: &UsageSnapshot) -> UsageSnapshot {
        UsageSnapshot {
            calls: self.calls - earlier.calls,
            cache_hits: self.cache_hits - earlier.cache_hits,
            usage: TokenUsage::new(
                self.usage.input_tokens - earlier.usage.input_tokens,
                self.usage.output_tokens - earlier.usage.output_tokens,
            ),
            latency: self.latency.saturating_sub(earlier.latency),
        }
    }
}

#[derive(Default)]
pub struct Accounting {
    calls: AtomicU64,
    cache_hits: AtomicU64,
    input_tokens: AtomicU64,
    output_tokens: AtomicU64,
    latency_ns: AtomicU64,
    trace: Mutex<Vec<CallRecord>>,
}

impl Accounting {
    fn record(&self, rec: CallRecord) {
        if rec.from_cache {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
        } else {
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.input_tokens.fetch_add(rec.usage.input_tokens, Ordering::Relaxed);
            self.output_tokens.fetch_add(rec.usage.output_tokens, Ordering::Relaxed);
            self.latency_ns
                .fetch_add(rec.latency.as_nanos() as u64, Ordering::Relaxed);
        }
        self.trace.lock().push(rec);
    }

    pub fn snapshot(&self) -> UsageSnapshot {
        UsageSnapshot {
            calls: self.calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            usage: TokenUsage::new(
                self.input_tokens.load(Ordering::Relaxed),
                self.output_tokens.load(Ordering::Relaxed),
            ),
            latency: Duration::from_nanos(self.latency_ns.load(Ordering::Relaxed)),
        }
    }

    pub fn trace(&self) -> Vec<CallRecord> {
        self.trace.lock().clone()
    }
}

/// The single entry point for model calls.
pub struct Gateway {
    provider: Arc<dyn LlmProvider>,
    model: String,
    aux_model: String,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    pricing: Pricing,
    accounting: Accounting,
}

impl Gateway {
    pub fn new(provider: Arc<dyn LlmProvider>, model: impl Into<String>) -> Self {
        let model = model.into();
        Gateway {
            provider,
            aux_model: model.clone(),
            model,
            cache: None,
            retry: RetryPolicy::default(),
            pricing: Pricing::default(),
            accounting: Accounting::default(),
        }
    }

    pub fn with_cache(mut self, enabled: bool) -> Self {
        self.cache = enabled.then(ResponseCache::new);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_pricing(mut self, pricing: Pricing) -> Self {
        self.pricing = pricing;
        self
    }

    /// Model used for expression optimization calls.
    pub fn with_aux_model(mut self, model: impl Into<String>) -> Self {
        self.aux_model = model.into();
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn aux_model(&self) -> &str {
        &self.aux_model
    }

    pub fn pricing(&self) -> &Pricing {
        &self.pricing
    }

    pub fn snapshot(&self) -> UsageSnapshot {
        self.accounting.snapshot()
    }

    pub fn trace(&self) -> Vec<CallRecord> {
        self.accounting.trace()
    }

    pub fn cost(&self, usage: TokenUsage) -> f64 {
        cost(usage, &self.pricing)
    }

    /// A temperature-0 request for the main model.
    pub fn request(
        &self,
        system: impl Into<String>,
        user: impl Into<String>,
        format: ResponseFormat,
    ) -> LlmRequest {
        LlmRequest::new(self.model.clone(), system, user, format)
    }

    fn fetch(&self, req: &LlmRequest) -> Result<(ProviderReply, Duration), LlmError> {
        let mut attempt = 0;
        loop {
            let started = Instant::now();
            match self.provider.complete(req) {
                Ok(reply) => {
                    let latency = reply.latency.unwrap_or_else(|| started.elapsed());
                    return Ok((reply, latency));
                }
                Err(e) if e.is_retryable() && attempt + 1 < self.retry.attempts => {
                    log::warn!("model call failed ({e}); retrying");
                    std::thread::sleep(self.retry.backoff(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Sends a request, consulting the cache when enabled, and validates
    /// the reply against the requested format. A malformed reply is still
    /// accounted and comes back as `LlmError::Malformed`.
    pub fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        if req.temperature < 0.0 {
            return Err(LlmError::Config("temperature must be non-negative".into()));
        }
        let (reply, latency, from_cache) = match &self.cache {
            Some(cache) => {
                let (res, fetched) = cache.get_or_fetch(CacheKey::of(req), || {
                    self.fetch(req).map(|(mut r, lat)| {
                        r.latency = Some(lat);
                        r
                    })
                });
                let reply = res?;
                let lat = reply.latency.unwrap_or_default();
                (reply, lat, !fetched)
            }
            None => {
                let (reply, lat) = self.fetch(req)?;
                (reply, lat, false)
            }
        };
        let (usage, estimated) = match reply.usage {
            _ if from_cache => (TokenUsage::default(), false),
            Some(u) => (u, false),
            None => (
                TokenUsage::new(
                    estimate_tokens(&req.system_prompt) + estimate_tokens(&req.user_prompt),
                    estimate_tokens(&reply.text),
                ),
                true,
            ),
        };
        let latency = if from_cache { Duration::ZERO } else { latency };
        self.accounting.record(CallRecord {
            label: req.label.clone(),
            from_cache,
            usage,
            latency,
            estimated,
        });
        match parse_response(&reply.text, &req.response_format) {
            Ok(parsed) => Ok(LlmResponse {
                text: reply.text,
                parsed,
                usage,
                latency,
                from_cache,
                estimated,
            }),
            Err(reason) => Err(LlmError::Malformed {
                reason,
                raw: reply.text,
                usage,
                latency,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Parsed;
    use std::sync::atomic::AtomicUsize;

    struct Counting {
        calls: AtomicUsize,
        fail_first: usize,
        text: &'static str,
    }

    impl LlmProvider for Counting {
        fn complete(&self, _req: &LlmRequest) -> Result<ProviderReply, LlmError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(2));
            if n < self.fail_first {
                return Err(LlmError::Transport("connection reset".into()));
            }
            Ok(ProviderReply {
                text: self.text.into(),
                usage: None,
                latency: Some(Duration::from_millis(5)),
            })
        }
    }

    fn provider(fail_first: usize, text: &'static str) -> Arc<Counting> {
        Arc::new(Counting {
            calls: AtomicUsize::new(0),
            fail_first,
            text,
        })
    }

    #[test]
    fn cache_hit_costs_nothing() {
        let p = provider(0, "true");
        let g = Gateway::new(p.clone(), "m").with_cache(true);
        let req = g.request("sys", "is it?", ResponseFormat::JsonBool);
        let a = g.complete(&req).unwrap();
        let b = g.complete(&req).unwrap();
        assert!(!a.from_cache && b.from_cache);
        assert_eq!(a.parsed, b.parsed);
        assert_eq!(b.usage, TokenUsage::default());
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
        let hotter = req.clone().with_temperature(0.5);
        g.complete(&hotter).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn concurrent_identical_requests_are_single_flight() {
        let p = provider(0, "false");
        let g = Gateway::new(p.clone(), "m").with_cache(true);
        let req = g.request("sys", "same", ResponseFormat::JsonBool);
        std::thread::scope(|s| {
            for _ in 0..100 {
                s.spawn(|| assert_eq!(g.complete(&req).unwrap().parsed, Some(Parsed::Bool(false))));
            }
        });
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
        assert_eq!(g.snapshot().calls, 1);
        assert_eq!(g.snapshot().cache_hits, 99);
    }

    #[test]
    fn transport_failures_are_retried_then_surfaced() {
        let p = provider(2, "true");
        let g = Gateway::new(p.clone(), "m").with_retry(RetryPolicy::immediate(3));
        assert!(g.complete(&g.request("", "x", ResponseFormat::JsonBool)).is_ok());
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);

        let p = provider(5, "true");
        let g = Gateway::new(p.clone(), "m").with_retry(RetryPolicy::immediate(3));
        let err = g.complete(&g.request("", "x", ResponseFormat::JsonBool)).unwrap_err();
        assert!(matches!(err, LlmError::Transport(_)));
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn missing_usage_is_estimated_and_malformed_output_is_still_charged() {
        let g = Gateway::new(provider(0, "perhaps"), "m");
        let err = g
            .complete(&g.request("abcd", "abcdefgh", ResponseFormat::JsonBool))
            .unwrap_err();
        let LlmError::Malformed { usage, raw, .. } = err else {
            panic!()
        };
        assert_eq!(raw, "perhaps");
        assert_eq!(usage, TokenUsage::new(1 + 2, 2));
        assert_eq!(g.snapshot().usage, usage);
        assert!(g.trace()[0].estimated);
    }
}
