//! Choosing a subset of paths that trades utility against disparity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{Coalition, Engine, Transform};
use crate::error::{Error, Result};

/// Largest path count accepted by [`exhaustive_select`].
pub const EXHAUSTIVE_LIMIT: usize = 15;

/// `-Σ Ψ(p) + λ |Σ Φ(p)|` over the paths in `keep`.
pub fn selection_loss(phi: &[f64], psi: &[f64], keep: &[usize], lambda: f64) -> f64 {
    let u: f64 = keep.iter().map(|&p| psi[p]).sum();
    let d: f64 = keep.iter().map(|&p| phi[p]).sum();
    -u + lambda * d.abs()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub removed: usize,
    pub kept: Vec<usize>,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    pub loss: f64,
    /// One step per removal, from all paths down to none.
    pub trace: Vec<SelectionStep>,
}

fn validate(phi: &[f64], psi: &[f64], lambda: f64) -> Result<()> {
    if phi.len() != psi.len() {
        return Err(Error::InvalidArgument(format!(
            "{} disparity contributions but {} utility contributions",
            phi.len(),
            psi.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and non-negative, got {lambda}"
        )));
    }
    Ok(())
}

/// Remove paths one at a time, each time the one whose removal gives the
/// lowest loss (ties to the smaller id), and return the best set seen.
pub fn greedy_select(phi: &[f64], psi: &[f64], lambda: f64) -> Result<SelectionResult> {
    validate(phi, psi, lambda)?;
    let mut kept: Vec<usize> = (0..phi.len()).collect();
    let mut best = (selection_loss(phi, psi, &kept, lambda), kept.clone());
    let mut trace = Vec::with_capacity(phi.len());
    while !kept.is_empty() {
        let mut choice: Option<(f64, usize)> = None;
        for (i, &p) in kept.iter().enumerate() {
            let rest: Vec<usize> = kept.iter().copied().filter(|&q| q != p).collect();
            let loss = selection_loss(phi, psi, &rest, lambda);
            if choice.is_none_or(|(l, _)| loss < l) {
                choice = Some((loss, i));
            }
        }
        let (loss, i) = choice.expect("non-empty set");
        let removed = kept.remove(i);
        if loss < best.0 {
            best = (loss, kept.clone());
        }
        trace.push(SelectionStep {
            removed,
            kept: kept.clone(),
            loss,
        });
    }
    Ok(SelectionResult {
        selected: best.1,
        loss: best.0,
        trace,
    })
}

/// Minimum-loss subset by enumeration; the smallest bitmask wins ties.
pub fn exhaustive_select(phi: &[f64], psi: &[f64], lambda: f64) -> Result<SelectionResult> {
    validate(phi, psi, lambda)?;
    let n = phi.len();
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::GuardExceeded {
            paths: n,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1 << n) {
        let keep: Vec<usize> = (0..n).filter(|&p| mask >> p & 1 == 1).collect();
        let loss = selection_loss(phi, psi, &keep, lambda);
        if best.as_ref().is_none_or(|(l, _)| loss < *l) {
            best = Some((loss, keep));
        }
    }
    let (loss, selected) = best.expect("at least the empty set");
    Ok(SelectionResult {
        selected,
        loss,
        trace: Vec::new(),
    })
}

/// Score of a row with only the selected paths carrying observed values.
pub fn adjusted_prediction(engine: &Engine<'_>, row: usize, selected: &Coalition) -> Result<f64> {
    engine.value(row, selected, Transform::Identity)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub lambda: f64,
    pub selected: Vec<usize>,
    pub loss: f64,
    /// Share of rows where the thresholded adjusted score equals the outcome.
    pub accuracy: f64,
    /// Group gap in mean adjusted score.
    pub disparity: f64,
}

/// Adjusted scores of every row of `engine` for one selection.
pub fn adjusted_scores(engine: &Engine<'_>, selected: &Coalition) -> Result<Vec<f64>> {
    let rows: Vec<usize> = (0..engine.rows()).collect();
    let chunks: Vec<Vec<f64>> = rows
        .par_chunks(64)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&r| {
                    engine
                        .values(r, std::slice::from_ref(selected))
                        .map(|v| v[0])
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Greedy selection for each `lambda` (strictly ascending), evaluated on the rows of `engine`.
pub fn sweep(
    lambdas: &[f64],
    phi: &[f64],
    psi: &[f64],
    engine: &Engine<'_>,
    threshold: f64,
) -> Result<Vec<TradeoffPoint>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("no lambda values given".into()));
    }
    if let Some(w) = lambdas.windows(2).find(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(format!(
            "lambda values must be strictly ascending ({} then {})",
            w[0], w[1]
        )));
    }
    let data = engine.data();
    if !data.has_outcome() {
        return Err(Error::MissingOutcome(
            "accuracy needs an outcome column".into(),
        ));
    }
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let sel = greedy_select(phi, psi, lambda)?;
        let coalition = Coalition::from_ids(engine.path_count(), &sel.selected)?;
        let scores = adjusted_scores(engine, &coalition)?;
        let mut correct = 0usize;
        let mut sums = [0.0; 2];
        let mut counts = [0usize; 2];
        for (r, &s) in scores.iter().enumerate() {
            let label = if s >= threshold { 1.0 } else { 0.0 };
            if Some(label) == data.outcome(r) {
                correct += 1;
            }
            let g = (data.sensitive(r) == 1.0) as usize;
            sums[g] += s;
            counts[g] += 1;
        }
        if counts[0] == 0 || counts[1] == 0 {
            return Err(Error::Data(
                "evaluation rows cover only one sensitive group".into(),
            ));
        }
        out.push(TradeoffPoint {
            lambda,
            selected: sel.selected,
            loss: sel.loss,
            accuracy: correct as f64 / scores.len() as f64,
            disparity: sums[1] / counts[1] as f64 - sums[0] / counts[0] as f64,
        });
    }
    Ok(out)
}
