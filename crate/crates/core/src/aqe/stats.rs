use serde::Serialize;

use crate::catalog::Chunk;
use crate::engine::{eval_sem_filter, CallStats, SemCtx};
use crate::sql::{EvalMode, NlExpr};
use crate::{Error, Result};

/// Matthews correlation of two verdict vectors; 0 when any factor of the
/// denominator is 0.
pub fn mcc(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Config(format!(
            "mcc needs two non-empty vectors of equal length, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0f64, 0f64, 0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        match (x, y) {
            (true, true) => tp += 1.0,
            (false, false) => tn += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
        }
    }
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((tp * tn - fp * fn_) / den.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCorrelation {
    pub i: usize,
    pub j: usize,
    pub mcc: f64,
}

/// What the first phase learns about each filter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterStats {
    pub selectivity: Vec<f64>,
    #[serde(skip)]
    pub results: Vec<Vec<bool>>,
    /// One entry per unordered pair `i < j`.
    pub pairs: Vec<PairCorrelation>,
}

impl FilterStats {
    pub fn from_results(results: Vec<Vec<bool>>) -> Result<Self> {
        let selectivity = results
            .iter()
            .map(|r| {
                if r.is_empty() {
                    0.0
                } else {
                    r.iter().filter(|b| **b).count() as f64 / r.len() as f64
                }
            })
            .collect();
        let mut pairs = Vec::new();
        for i in 0..results.len() {
            for j in i + 1..results.len() {
                let m = if results[i].is_empty() { 0.0 } else { mcc(&results[i], &results[j])? };
                pairs.push(PairCorrelation { i, j, mcc: m });
            }
        }
        Ok(FilterStats {
            selectivity,
            results,
            pairs,
        })
    }

    pub fn mcc(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let (i, j) = (i.min(j), i.max(j));
        self.pairs
            .iter()
            .find(|p| p.i == i && p.j == j)
            .map_or(0.0, |p| p.mcc)
    }

    /// Rows passing every filter.
    pub fn conjunction(&self, rows: usize) -> Vec<bool> {
        (0..rows)
            .map(|r| self.results.iter().all(|v| v[r]))
            .collect()
    }
}

/// Runs every filter tuple by tuple over the whole sample.
pub fn collect_filter_stats(
    ctx: &SemCtx,
    filters: &[NlExpr],
    sample: &Chunk,
) -> Result<(FilterStats, CallStats)> {
    let mut stats = CallStats::default();
    let mut results = Vec::with_capacity(filters.len());
    for f in filters {
        let (v, s) = eval_sem_filter(ctx, sample, f, EvalMode::PerTuple)?;
        stats += s;
        results.push(v);
    }
    Ok((FilterStats::from_results(results)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcc_examples() {
        let v = [true, false, true, true, false];
        let not: Vec<bool> = v.iter().map(|b| !b).collect();
        assert!((mcc(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((mcc(&v, &not).unwrap() + 1.0).abs() < 1e-12);
        // TP=3, TN=3, FP=1, FN=1
        let a = [true, true, true, false, false, false, false, true];
        let b = [true, true, true, false, false, false, true, false];
        assert!((mcc(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(mcc(&[true; 4], &[true, false, true, false]).unwrap(), 0.0);
        assert!(mcc(&[true], &[true, false]).is_err());
    }

    #[test]
    fn single_filter_has_no_pairs() {
        let s = FilterStats::from_results(vec![vec![true, false]]).unwrap();
        assert!(s.pairs.is_empty());
        assert_eq!(s.selectivity, [0.5]);
        let s = FilterStats::from_results(vec![vec![true, false, true], vec![true, false, true]]).unwrap();
        assert_eq!(s.mcc(0, 1), 1.0);
        assert_eq!(s.conjunction(3), [true, false, true]);
    }
}
