use std::collections::HashSet;

use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct QualityReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Confusion-matrix scores of `predicted` against `reference`. Precision,
/// recall and F1 are 0 when undefined; accuracy of two empty vectors is 1.
pub fn quality(predicted: &[bool], reference: &[bool]) -> Result<QualityReport> {
    if predicted.len() != reference.len() {
        return Err(Error::Config(format!(
            "quality needs equal lengths, got {} and {}",
            predicted.len(),
            reference.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &r) in predicted.iter().zip(reference) {
        match (p, r) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
    let accuracy = if predicted.is_empty() { 1.0 } else { ratio(tp + tn, predicted.len()) };
    Ok(QualityReport {
        accuracy,
        precision,
        recall,
        f1,
    })
}

fn tokens(text: &str) -> HashSet<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Share of the reference's distinct words that also occur in `generated`.
pub fn word_overlap(generated: &str, reference: &str) -> f64 {
    let r = tokens(reference);
    if r.is_empty() {
        return 0.0;
    }
    let g = tokens(generated);
    r.iter().filter(|w| g.contains(*w)).count() as f64 / r.len() as f64
}

/// Scores a predicted multiset of rows against a reference one: each
/// distinct row of either side is one position of the selection vectors.
pub fn set_quality(predicted: &[String], reference: &[String]) -> QualityReport {
    let mut universe: Vec<&String> = predicted.iter().chain(reference).collect();
    universe.sort();
    universe.dedup();
    let p: HashSet<&String> = predicted.iter().collect();
    let r: HashSet<&String> = reference.iter().collect();
    let pv: Vec<bool> = universe.iter().map(|u| p.contains(u)).collect();
    let rv: Vec<bool> = universe.iter().map(|u| r.contains(u)).collect();
    quality(&pv, &rv).expect("equal lengths")
}
