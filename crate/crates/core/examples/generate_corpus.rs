//! Generates a labelled corpus with controlled filter selectivities and a
//! correlated pair, writes it to a directory the CLI can load, and reports
//! the realized statistics.

use semql::bench::{generate_corpus, write_corpus, CorpusSpec};

fn main() -> semql::Result<()> {
    let spec = CorpusSpec::new(1000, &[0.3, 0.5, 0.8], 42)
        .with_correlation(0, 1, 0.4)
        .with_nan_rate(0.1);
    let corpus = generate_corpus(&spec)?;

    for (i, f) in corpus.filters.iter().enumerate() {
        println!("f{}: {:<28} selectivity {:.3}", i + 1, f, corpus.stats.selectivities[i]);
    }
    for (i, j, m) in &corpus.stats.mcc {
        println!("mcc(f{}, f{}) = {m:.3}", i + 1, j + 1);
    }
    println!("{} nan rows", corpus.stats.nan_rows);

    let dir = std::env::temp_dir().join("semql-corpus");
    write_corpus(&corpus, &dir)?;
    println!("written to {}", dir.display());
    println!(
        "try: semql run --tables {0}/manifest.json --query-file {0}/queries/conjunction.sql --mock-oracle {0}/rules.json",
        dir.display()
    );
    Ok(())
}
