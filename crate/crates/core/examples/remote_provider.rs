//! Runs a semantic filter against any OpenAI-compatible endpoint.
//!
//!     SEMQL_BASE_URL=http://localhost:8000/v1 SEMQL_MODEL=gemma-3-12b \
//!     OPENAI_API_KEY=... cargo run --example remote_provider
//!
//! Without SEMQL_BASE_URL it only prints the configuration it would use.

use std::path::PathBuf;

use semql::bench::{render_table, run_query, OutputFormat, ProviderConfig, ProviderKind, RunConfig};
use semql::catalog::Table;
use semql::value::{DataType, Value};

fn main() -> semql::Result<()> {
    let cfg = RunConfig {
        provider: ProviderConfig {
            kind: ProviderKind::OpenAi,
            base_url: std::env::var("SEMQL_BASE_URL").ok(),
            model: std::env::var("SEMQL_MODEL").unwrap_or_else(|_| "gemma-3-12b".into()),
            api_key_env: "OPENAI_API_KEY".into(),
            pricing: std::env::var("SEMQL_PRICING").ok().map(PathBuf::from),
            cache: true,
            ..ProviderConfig::default()
        },
        ..RunConfig::default()
    };
    if cfg.provider.base_url.is_none() {
        println!("{}", serde_json::to_string_pretty(&cfg.provider)?);
        println!("set SEMQL_BASE_URL to send requests");
        return Ok(());
    }
    cfg.validate()?;
    let gateway = cfg.gateway()?;
    let catalog = cfg.catalog()?;
    catalog.register(Table::from_columns(
        "reviews",
        vec![(
            "review",
            DataType::Text,
            ["I love this keyboard", "Stopped working after a day", "Does the job"]
                .map(Value::from)
                .to_vec(),
        )],
    )?);
    let out = run_query(
        "SELECT review FROM reviews WHERE s'{review} is a positive review'",
        &catalog,
        &gateway,
        cfg.optimizer,
        &cfg.engine,
    )?;
    print!("{}", render_table(&out.result.table, OutputFormat::Table)?);
    let spent = gateway.snapshot();
    println!(
        "{} calls, {} + {} tokens, ${:.6}",
        spent.calls,
        spent.usage.input_tokens,
        spent.usage.output_tokens,
        gateway.cost(spent.usage)
    );
    Ok(())
}
