//! Running queries end to end, measuring them, and generating synthetic
//! corpora with known verdicts to measure against.

mod corpus;
mod harness;
mod output;
mod quality;
mod run;

pub use corpus::{
    corpus_rules, filter_template, generate_corpus, write_corpus, Corpus, CorpusSpec, CorpusStats,
    PairTarget, MARKERS, MCC_TOLERANCE,
};
pub use harness::{run_bench, standard_variants, BenchReport, Variant, VariantReport};
pub use output::{render_table, OutputFormat};
pub use quality::{quality, set_quality, word_overlap, QualityReport};
pub use run::{
    explain_query, run_query, write_json, write_reports, ProviderConfig, ProviderKind, RunConfig,
    RunOutput,
};
