use serde::{Deserialize, Serialize};

use super::paths::{Candidate, PathKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Latency,
    Cost,
}

impl std::str::FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "latency" | "latency_first" => Ok(Objective::Latency),
            "cost" | "cost_first" | "token" => Ok(Objective::Cost),
            other => Err(format!("unknown objective {other:?}; expected latency or cost")),
        }
    }
}

fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Indices of the non-dominated points, in input order. Identical points
/// do not dominate each other, so both are kept.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|&q| dominates(q, points[i])))
        .collect()
}

/// Picks from the accuracy-passing candidates' frontier. Returns the
/// chosen candidate index and the frontier (candidate indices).
pub fn select_path(candidates: &[Candidate], objective: Objective) -> Option<(usize, Vec<usize>)> {
    let live: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].passed && candidates[i].metrics.is_some())
        .collect();
    let points: Vec<(f64, f64)> = live
        .iter()
        .map(|&i| {
            let m = candidates[i].metrics.as_ref().expect("filtered");
            (m.latency_ms, m.cost)
        })
        .collect();
    let frontier: Vec<usize> = pareto_frontier(&points).into_iter().map(|k| live[k]).collect();
    let key = |i: usize| {
        let m = candidates[i].metrics.as_ref().expect("filtered");
        let primary = match objective {
            Objective::Latency => m.latency_ms,
            Objective::Cost => m.cost,
        };
        let not_ref = candidates[i].path.kind != PathKind::Reference || candidates[i].path.batched;
        (primary, candidates[i].path.steps.len(), not_ref)
    };
    let chosen = frontier.iter().copied().min_by(|&a, &b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)).then(ka.2.cmp(&kb.2))
    })?;
    Some((chosen, frontier))
}
