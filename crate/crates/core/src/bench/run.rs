use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::catalog::{load_manifest, Catalog};
use crate::engine::{execute, physical_plan, EngineConfig, QueryResult};
use crate::llm::{Gateway, MockOracle, OpenAiProvider, Pricing};
use crate::optimizer::{optimize, OptimizerFlags, OptimizerReport};
use crate::sql::{explain, parse, PlanNode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    /// Any endpoint speaking the OpenAI chat-completions protocol.
    OpenAi,
}

impl std::str::FromStr for ProviderKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mock" => Ok(ProviderKind::Mock),
            "openai" | "remote" => Ok(ProviderKind::OpenAi),
            other => Err(format!("unknown provider {other:?}; expected mock or openai")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub mock_rules: Option<PathBuf>,
    pub base_url: Option<String>,
    pub model: String,
    /// Model for optimizer calls; the main model when unset.
    pub aux_model: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub pricing: Option<PathBuf>,
    pub cache: bool,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            mock_rules: None,
            base_url: None,
            model: "mock".into(),
            aux_model: None,
            api_key_env: "OPENAI_API_KEY".into(),
            pricing: None,
            cache: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunConfig {
    pub provider: ProviderConfig,
    pub tables: Option<PathBuf>,
    pub optimizer: OptimizerFlags,
    pub engine: EngineConfig,
    pub metrics_out: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.provider;
        match p.kind {
            ProviderKind::Mock if p.mock_rules.is_none() => {
                return Err(Error::Config("the mock provider needs a ruleset (--mock-oracle rules.json)".into()))
            }
            ProviderKind::OpenAi if p.base_url.is_none() => {
                return Err(Error::Config("the openai provider needs --base-url".into()))
            }
            _ => {}
        }
        if p.model.trim().is_empty() {
            return Err(Error::Config("model name is empty".into()));
        }
        self.engine.validate()
    }

    pub fn gateway(&self) -> Result<Gateway> {
        let p = &self.provider;
        let mut gw = match p.kind {
            ProviderKind::Mock => {
                let path = p.mock_rules.as_deref().ok_or_else(|| Error::Config("no mock ruleset".into()))?;
                Gateway::new(Arc::new(MockOracle::from_file(path)?), p.model.clone())
            }
            ProviderKind::OpenAi => {
                let url = p.base_url.clone().ok_or_else(|| Error::Config("no base url".into()))?;
                let provider = OpenAiProvider::from_env(url, &p.api_key_env)?;
                Gateway::new(Arc::new(provider), p.model.clone())
            }
        };
        if let Some(path) = &p.pricing {
            gw = gw.with_pricing(Pricing::load(path)?);
        }
        if let Some(aux) = &p.aux_model {
            gw = gw.with_aux_model(aux.clone());
        }
        Ok(gw.with_cache(p.cache))
    }

    pub fn catalog(&self) -> Result<Catalog> {
        let catalog = Catalog::new();
        if let Some(path) = &self.tables {
            load_manifest(path, &catalog)?;
        }
        Ok(catalog)
    }
}

/// Everything one query execution produced.
#[derive(Debug)]
pub struct RunOutput {
    pub logical: PlanNode,
    pub optimized: PlanNode,
    pub physical: PlanNode,
    pub optimizer: OptimizerReport,
    pub result: QueryResult,
}

impl RunOutput {
    /// Model calls of the whole run, optimizer included.
    pub fn total_calls(&self) -> u64 {
        self.optimizer.aux_calls + self.result.usage.calls
    }

    pub fn metrics_json(&self) -> serde_json::Value {
        serde_json::json!({
            "plan": explain(&self.physical),
            "optimizer": self.optimizer,
            "execution": self.result.metrics,
            "llm_calls": self.result.usage.calls,
            "cache_hits": self.result.usage.cache_hits,
            "input_tokens": self.result.usage.usage.input_tokens,
            "output_tokens": self.result.usage.usage.output_tokens,
            "llm_latency_ms": self.result.usage.latency.as_secs_f64() * 1e3,
            "wall_ms": self.result.wall.as_secs_f64() * 1e3,
            "rows": self.result.table.num_rows(),
        })
    }
}

/// Parse, optimize, plan physically and execute.
pub fn run_query(
    query: &str,
    catalog: &Catalog,
    gateway: &Gateway,
    optimizer: OptimizerFlags,
    engine: &EngineConfig,
) -> Result<RunOutput> {
    engine.validate()?;
    let logical = parse(query, catalog)?;
    let (optimized, report) = optimize(logical.clone(), catalog, gateway, optimizer);
    let physical = physical_plan(&optimized, engine);
    let result = execute(&physical, catalog, gateway, engine)?;
    Ok(RunOutput {
        logical,
        optimized,
        physical,
        optimizer: report,
        result,
    })
}

/// The physical plan without running the optimizer or any model call.
pub fn explain_query(query: &str, catalog: &Catalog, engine: &EngineConfig) -> Result<String> {
    let logical = parse(query, catalog)?;
    Ok(explain(&physical_plan(&logical, engine)))
}

/// Writes the metrics tree and the adaptive-execution traces when the
/// configuration asks for them.
pub fn write_reports(cfg: &RunConfig, out: &RunOutput) -> Result<()> {
    if let Some(path) = &cfg.metrics_out {
        write_json(path, &out.metrics_json())?;
    }
    if let Some(path) = &cfg.trace_out {
        write_json(path, &out.result.aqe_traces)?;
    }
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
