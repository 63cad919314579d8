use std::collections::HashMap;
use std::sync::Arc;

use once_cell::sync::OnceCell;
use parking_lot::Mutex;

use super::{LlmError, LlmRequest, ProviderReply, ResponseFormat};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    model: String,
    system: String,
    user: String,
    temperature_bits: u64,
    format: ResponseFormat,
}

impl CacheKey {
    pub fn of(req: &LlmRequest) -> Self {
        CacheKey {
            model: req.model.clone(),
            system: req.system_prompt.clone(),
            user: req.user_prompt.clone(),
            temperature_bits: req.temperature.to_bits(),
            format: req.response_format,
        }
    }
}

type Slot = Arc<OnceCell<Result<ProviderReply, LlmError>>>;

/// Response cache with single-flight: concurrent identical requests wait
/// for one upstream call.
#[derive(Default)]
pub struct ResponseCache {
    slots: Mutex<HashMap<CacheKey, Slot>>,
}

impl ResponseCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the reply and whether this caller performed the fetch.
    pub fn get_or_fetch(
        &self,
        key: CacheKey,
        fetch: impl FnOnce() -> Result<ProviderReply, LlmError>,
    ) -> (Result<ProviderReply, LlmError>, bool) {
        let slot = self.slots.lock().entry(key.clone()).or_default().clone();
        let mut fetched = false;
        let result = slot
            .get_or_init(|| {
                fetched = true;
                fetch()
            })
            .clone();
        if result.is_err() && fetched {
            // Failures are not cached.
            let mut slots = self.slots.lock();
            if slots.get(&key).is_some_and(|s| Arc::ptr_eq(s, &slot)) {
                slots.remove(&key);
            }
        }
        (result, fetched)
    }

    pub fn len(&self) -> usize {
        self.slots.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
