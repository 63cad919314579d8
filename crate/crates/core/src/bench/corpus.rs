//! Synthetic text tables whose semantic-filter verdicts are known: each
//! filter has a marker word planted in the rows it accepts, and the mock
//! ruleset answers by looking for that word.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::aqe::mcc;
use crate::catalog::Table;
use crate::llm::{MockConfig, MockRule, Verdict};
use crate::value::{DataType, Value};
use crate::{Error, Result};

pub const MARKERS: [&str; 12] = [
    "amber", "basalt", "cobalt", "dunes", "fjord", "garnet", "harbor", "indigo", "jasper", "kelp",
    "lumen", "onyx",
];

const FILLER: [&str; 40] = [
    "the", "report", "notes", "a", "steady", "quarter", "with", "several", "updates", "on", "market",
    "volume", "and", "team", "plans", "for", "next", "release", "users", "asked", "about", "pricing",
    "while", "support", "tickets", "stayed", "flat", "across", "regions", "overall", "sentiment",
    "was", "mixed", "during", "review", "period", "sales", "grew", "slowly", "again",
];

/// How far realized pairwise correlations may sit from their targets.
pub const MCC_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTarget {
    pub i: usize,
    pub j: usize,
    pub mcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub rows: usize,
    pub selectivities: Vec<f64>,
    #[serde(default)]
    pub correlations: Vec<PairTarget>,
    #[serde(default)]
    pub seed: u64,
    /// Fraction of rows whose text is the literal `nan`; such rows fail
    /// every filter.
    #[serde(default)]
    pub nan_rate: f64,
    #[serde(default = "default_table")]
    pub table: String,
}

fn default_table() -> String {
    "corpus".into()
}

impl CorpusSpec {
    pub fn new(rows: usize, selectivities: &[f64], seed: u64) -> Self {
        CorpusSpec {
            rows,
            selectivities: selectivities.to_vec(),
            correlations: Vec::new(),
            seed,
            nan_rate: 0.0,
            table: default_table(),
        }
    }

    pub fn with_correlation(mut self, i: usize, j: usize, mcc: f64) -> Self {
        self.correlations.push(PairTarget { i, j, mcc });
        self
    }

    pub fn with_nan_rate(mut self, rate: f64) -> Self {
        self.nan_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Corpus(m));
        let k = self.selectivities.len();
        if k == 0 || k > MARKERS.len() {
            return bad(format!("between 1 and {} filters are supported, got {k}", MARKERS.len()));
        }
        if !(0.0..1.0).contains(&self.nan_rate) {
            return bad(format!("nan rate {} is outside [0, 1)", self.nan_rate));
        }
        for (i, &s) in self.selectivities.iter().enumerate() {
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("selectivity {s} of filter {} is outside [0, 1]", i + 1));
            }
            if s > 1.0 - self.nan_rate + 1e-9 {
                return bad(format!("selectivity {s} exceeds the share of non-nan rows"));
            }
        }
        for t in &self.correlations {
            if t.i >= k || t.j >= k || t.i == t.j {
                return bad(format!("correlation target ({}, {}) names unknown filters", t.i, t.j));
            }
            if !(-1.0..=1.0).contains(&t.mcc) {
                return bad(format!("correlation {} is outside [-1, 1]", t.mcc));
            }
            let (si, sj) = (self.selectivities[t.i], self.selectivities[t.j]);
            let spread = (si * (1.0 - si) * sj * (1.0 - sj)).sqrt();
            if spread == 0.0 && t.mcc != 0.0 {
                return bad(format!("filter pair ({}, {}) includes a constant filter; only mcc 0 fits", t.i, t.j));
            }
            let p11 = si * sj + t.mcc * spread;
            let lo = (si + sj - (1.0 - self.nan_rate)).max(0.0);
            let hi = si.min(sj);
            if p11 < lo - 1e-9 || p11 > hi + 1e-9 {
                return bad(format!(
                    "correlation {} between filters {} and {} is infeasible for selectivities {si} and {sj}",
                    t.mcc,
                    t.i + 1,
                    t.j + 1
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub selectivities: Vec<f64>,
    /// Realized correlation of every filter pair `(i, j, mcc)`, `i < j`.
    pub mcc: Vec<(usize, usize, f64)>,
    pub nan_rows: usize,
}

impl CorpusStats {
    pub fn mcc(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = (i.min(j), i.max(j));
        self.mcc.iter().find(|m| m.0 == a && m.1 == b).map(|m| m.2)
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub table: Table,
    pub rules: MockConfig,
    /// Filter templates, one per target selectivity.
    pub filters: Vec<String>,
    /// Oracle verdicts, `verdicts[filter][row]`.
    pub verdicts: Vec<Vec<bool>>,
    pub stats: CorpusStats,
}

impl Corpus {
    /// Rows accepted by every filter in `which`.
    pub fn conjunction(&self, which: &[usize]) -> Vec<bool> {
        (0..self.spec.rows)
            .map(|r| which.iter().all(|&f| self.verdicts[f][r]))
            .collect()
    }

    /// `SELECT id FROM <table> WHERE <every filter>`.
    pub fn conjunctive_query(&self) -> String {
        let preds: Vec<String> = self.filters.iter().map(|f| format!("s'{f}'")).collect();
        format!("SELECT id FROM {} WHERE {}", self.spec.table, preds.join(" AND "))
    }
}

pub fn filter_template(i: usize) -> String {
    format!("{{text}} mentions {}", MARKERS[i])
}

/// Mock rules answering filter `i` by the presence of its marker, plus
/// projection, comparison and aggregation behaviour over the text column.
pub fn corpus_rules(filters: usize) -> MockConfig {
    let mut rules = Vec::new();
    for m in MARKERS.iter().take(filters) {
        let template = Some(format!("mentions {m}"));
        rules.push(MockRule {
            task: Some(crate::llm::TaskKind::Filter),
            template: template.clone(),
            field: Some("text".into()),
            contains_any: vec![m.to_string()],
            regex: None,
            negate: false,
            verdict: Verdict::Bool(true),
            latency_ms: None,
            tokens: None,
        });
    }
    let mut cfg: MockConfig = serde_json::from_value(json!({
        "rules": [
            {"task": "proj", "verdict": {"kind": "echo_words", "field": "text", "words": 3}},
            {"task": "compare", "verdict": {"kind": "shorter_first", "field": "text"}},
            {"task": "agg", "verdict": {"kind": "count_summary"}}
        ]
    }))
    .expect("static rules");
    rules.append(&mut cfg.rules);
    cfg.rules = rules;
    cfg
}

/// Squared distance of the overlap counts from their targets.
fn overlap_error(overlaps: &[i64], targets: &[i64]) -> i64 {
    overlaps.iter().zip(targets).map(|(o, t)| (o - t) * (o - t)).sum()
}

/// Verdicts for one filter with exactly `count` accepted rows among
/// `valid`, searched by swaps so that the overlap with each constraining
/// earlier filter approaches its target.
fn assign(
    rng: &mut ChaCha8Rng,
    n: usize,
    valid: &[usize],
    count: usize,
    constraints: &[(&[bool], i64)],
) -> Vec<bool> {
    let mut order = valid.to_vec();
    order.shuffle(rng);
    let mut v = vec![false; n];
    for &r in &order[..count] {
        v[r] = true;
    }
    if constraints.is_empty() || count == 0 || count == valid.len() {
        return v;
    }
    let (mut on, mut off): (Vec<usize>, Vec<usize>) = (order[..count].to_vec(), order[count..].to_vec());
    let targets: Vec<i64> = constraints.iter().map(|c| c.1).collect();
    let mut overlaps: Vec<i64> = constraints
        .iter()
        .map(|(u, _)| on.iter().filter(|&&r| u[r]).count() as i64)
        .collect();
    let mut err = overlap_error(&overlaps, &targets);
    let budget = 200 * valid.len();
    for _ in 0..budget {
        if err == 0 {
            break;
        }
        let a = rng.random_range(0..on.len());
        let b = rng.random_range(0..off.len());
        let (ra, rb) = (on[a], off[b]);
        let moved: Vec<i64> = constraints
            .iter()
            .zip(&overlaps)
            .map(|((u, _), o)| o + u[rb] as i64 - u[ra] as i64)
            .collect();
        let e = overlap_error(&moved, &targets);
        if e < err {
            err = e;
            overlaps = moved;
            on[a] = rb;
            off[b] = ra;
            v[ra] = false;
            v[rb] = true;
        }
    }
    v
}

fn row_text(rng: &mut ChaCha8Rng, markers: &[&str]) -> String {
    let len = rng.random_range(6..=12);
    let mut words: Vec<&str> = (0..len).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect();
    for m in markers {
        let at = rng.random_range(0..=words.len());
        words.insert(at, m);
    }
    words.join(" ")
}

/// Builds the table, its oracle verdicts and a mock ruleset. Selectivities
/// are hit to the nearest row; pair correlations within
/// [`MCC_TOLERANCE`], or the spec is rejected.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let n = spec.rows;
    let k = spec.selectivities.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    let nan_rows = (spec.nan_rate * n as f64).round() as usize;
    let mut is_nan = vec![false; n];
    for &r in &rows[..nan_rows] {
        is_nan[r] = true;
    }
    let valid: Vec<usize> = (0..n).filter(|&r| !is_nan[r]).collect();
    let counts: Vec<usize> = spec
        .selectivities
        .iter()
        .map(|s| ((s * n as f64).round() as usize).min(valid.len()))
        .collect();

    let mut verdicts: Vec<Vec<bool>> = Vec::with_capacity(k);
    for j in 0..k {
        let constraints: Vec<(&[bool], i64)> = spec
            .correlations
            .iter()
            .filter_map(|t| {
                let (i, jj) = (t.i.min(t.j), t.i.max(t.j));
                (jj == j).then_some((i, t.mcc))
            })
            .map(|(i, m)| {
                let (si, sj) = (counts[i] as f64 / n as f64, counts[j] as f64 / n as f64);
                let p11 = si * sj + m * (si * (1.0 - si) * sj * (1.0 - sj)).sqrt();
                let lo = (counts[i] + counts[j]).saturating_sub(valid.len()) as i64;
                let hi = counts[i].min(counts[j]) as i64;
                let t = ((p11 * n as f64).round() as i64).clamp(lo, hi);
                (verdicts[i].as_slice(), t)
            })
            .collect();
        let v = assign(&mut rng, n, &valid, counts[j], &constraints);
        verdicts.push(v);
    }

    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let m = if n == 0 { 0.0 } else { mcc(&verdicts[i], &verdicts[j])? };
            pairs.push((i, j, m));
        }
    }
    let stats = CorpusStats {
        selectivities: counts.iter().map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 }).collect(),
        mcc: pairs,
        nan_rows,
    };
    for t in &spec.correlations {
        let got = stats.mcc(t.i, t.j).expect("every pair measured");
        if (got - t.mcc).abs() > MCC_TOLERANCE {
            return Err(Error::Corpus(format!(
                "correlation target {} for filters {} and {} is not realizable together with the others (reached {got:.3})",
                t.mcc,
                t.i + 1,
                t.j + 1
            )));
        }
    }

    let mut text = Vec::with_capacity(n);
    let mut score = Vec::with_capacity(n);
    for r in 0..n {
        let markers: Vec<&str> = (0..k).filter(|&f| verdicts[f][r]).map(|f| MARKERS[f]).collect();
        let t = if is_nan[r] { "nan".to_string() } else { row_text(&mut rng, &markers) };
        text.push(Value::Text(t));
        score.push(Value::Int(rng.random_range(0..100)));
    }
    let table = Table::from_columns(
        &spec.table,
        vec![
            ("id", DataType::Int64, (0..n as i64).map(Value::Int).collect()),
            ("text", DataType::Text, text),
            ("score", DataType::Int64, score),
        ],
    )?;
    Ok(Corpus {
        spec: spec.clone(),
        table,
        rules: corpus_rules(k),
        filters: (0..k).map(filter_template).collect(),
        verdicts,
        stats,
    })
}

/// Writes `<table>.csv`, `manifest.json`, `rules.json`, `labels.csv`,
/// `corpus.json` and `queries/*.sql` into `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("queries"))?;
    let name = &corpus.spec.table;
    let csv_name = format!("{name}.csv");
    let mut w = csv::Writer::from_path(dir.join(&csv_name)).map_err(|e| Error::Corpus(e.to_string()))?;
    let csv_err = |e: csv::Error| Error::Corpus(e.to_string());
    w.write_record(corpus.table.schema.fields.iter().map(|f| f.name.as_str()))
        .map_err(csv_err)?;
    for row in corpus.table.rows() {
        w.write_record(row.iter().map(Value::render)).map_err(csv_err)?;
    }
    w.flush()?;

    let mut labels = csv::Writer::from_path(dir.join("labels.csv")).map_err(csv_err)?;
    let mut header = vec!["id".to_string()];
    header.extend((1..=corpus.filters.len()).map(|i| format!("f{i}")));
    labels.write_record(&header).map_err(csv_err)?;
    for r in 0..corpus.spec.rows {
        let mut rec = vec![r.to_string()];
        rec.extend(corpus.verdicts.iter().map(|v| u8::from(v[r]).to_string()));
        labels.write_record(&rec).map_err(csv_err)?;
    }
    labels.flush()?;

    let manifest = json!([{
        "name": name,
        "path": csv_name,
        "schema": {"id": "int64", "text": "text", "score": "int64"}
    }]);
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    std::fs::write(dir.join("rules.json"), serde_json::to_string_pretty(&corpus.rules)?)?;
    let report = json!({
        "spec": corpus.spec,
        "filters": corpus.filters,
        "realized": corpus.stats,
    });
    std::fs::write(dir.join("corpus.json"), serde_json::to_string_pretty(&report)?)?;

    let queries = dir.join("queries");
    std::fs::write(queries.join("conjunction.sql"), format!("{};\n", corpus.conjunctive_query()))?;
    let f0 = &corpus.filters[0];
    std::fs::write(
        queries.join("filter_project.sql"),
        format!("SELECT id, s'the first words of {{text}}' AS gist FROM {name} WHERE s'{f0}';\n"),
    )?;
    std::fs::write(
        queries.join("aggregate.sql"),
        format!("SELECT sem_agg(s'summarize the topics of {{text}}', text) AS summary FROM {name} WHERE s'{f0}';\n"),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_never_contains_markers() {
        for m in MARKERS {
            for w in FILLER {
                assert!(!w.contains(m), "{w} contains {m}");
            }
            for o in MARKERS {
                assert!(m == o || !o.contains(m));
            }
            assert!(!"nan".contains(m));
        }
    }

    #[test]
    fn selectivities_and_correlation() {
        let spec = CorpusSpec::new(864, &[0.66, 0.77, 0.22], 7).with_correlation(0, 1, 0.755);
        let c = generate_corpus(&spec).unwrap();
        for (got, want) in c.stats.selectivities.iter().zip(&spec.selectivities) {
            assert!((got - want).abs() <= 0.02, "{got} vs {want}");
        }
        assert!((c.stats.mcc(0, 1).unwrap() - 0.755).abs() <= MCC_TOLERANCE);
        let text = |r: usize| c.table.columns[1].values[r].render();
        for r in 0..spec.rows {
            for f in 0..3 {
                assert_eq!(text(r).contains(MARKERS[f]), c.verdicts[f][r]);
            }
        }
    }

    #[test]
    fn seed_determinism() {
        let spec = CorpusSpec::new(300, &[0.4, 0.5], 11).with_correlation(0, 1, 0.6);
        let (a, b) = (generate_corpus(&spec).unwrap(), generate_corpus(&spec).unwrap());
        assert_eq!(a.table, b.table);
        assert_eq!(a.rules, b.rules);
        let other = generate_corpus(&CorpusSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.table, other.table);
    }

    #[test]
    fn edge_targets() {
        let c = generate_corpus(&CorpusSpec::new(50, &[1.0], 1)).unwrap();
        assert!(c.verdicts[0].iter().all(|&v| v));
        let infeasible = CorpusSpec::new(100, &[0.3, 0.6], 1).with_correlation(0, 1, 1.0);
        assert!(matches!(generate_corpus(&infeasible), Err(Error::Corpus(_))));
        assert!(generate_corpus(&CorpusSpec::new(10, &[1.2], 1)).is_err());
    }

    #[test]
    fn nan_rows_fail_every_filter() {
        let c = generate_corpus(&CorpusSpec::new(200, &[0.3, 0.5], 3).with_nan_rate(0.4)).unwrap();
        assert_eq!(c.stats.nan_rows, 80);
        for r in 0..200 {
            if c.table.columns[1].values[r].render() == "nan" {
                assert!(!c.verdicts[0][r] && !c.verdicts[1][r]);
            }
        }
    }
}
