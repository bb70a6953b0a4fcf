//! Evaluation measures: score inconsistency against the central reference,
//! standardized mean differences on the matched sample, and the survival-gap
//! distance between curves.

use std::collections::HashMap;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matching::MatchedSet;
use crate::propensity::PropensityScores;
use crate::survival::SurvivalCurve;

/// Covariate balance on a matched sample.
#[derive(Debug, Clone)]
pub struct BalanceReport {
    /// One standardized mean difference per original covariate.
    pub per_covariate_smd: Vec<f64>,
    /// `max_j |d_j|`.
    pub masmd: f64,
}

/// Everything one analysis mode produced for one dataset.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: MethodLabel,
    pub scores: PropensityScores,
    pub matched: MatchedSet,
    pub curves: (SurvivalCurve, SurvivalCurve),
    pub balance: BalanceReport,
    pub sample_size: usize,
}

/// Analysis mode, as shown in reports.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MethodLabel {
    /// Central analysis of the pooled dataset (the reference).
    Ca,
    /// Local analysis by the party at (k, l).
    La(usize, usize),
    /// Local matching, central curve estimation.
    Lmca,
    /// Data-collaboration estimation; the string names the scope variant.
    Dcqe(String),
}

impl std::fmt::Display for MethodLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MethodLabel::Ca => write!(f, "CA"),
            MethodLabel::La(k, l) => write!(f, "LA({k},{l})"),
            MethodLabel::Lmca => write!(f, "LMCA"),
            MethodLabel::Dcqe(name) => write!(f, "DC-QE({name})"),
        }
    }
}

/// Root-mean-square difference between two score vectors covering the same
/// ids.
pub fn inconsistency(scores: &PropensityScores, reference: &PropensityScores) -> Result<f64> {
    if scores.ids.len() != reference.ids.len() {
        return Err(Error::Validation(format!(
            "score sets cover {} vs {} ids",
            scores.ids.len(),
            reference.ids.len()
        )));
    }
    let ref_by_id: HashMap<u64, f64> = reference
        .ids
        .iter()
        .zip(&reference.scores)
        .map(|(&id, &s)| (id, s))
        .collect();
    let mut total = 0.0;
    for (&id, &s) in scores.ids.iter().zip(&scores.scores) {
        let r = ref_by_id
            .get(&id)
            .ok_or_else(|| Error::Validation(format!("reference lacks id {id}")))?;
        total += (s - r) * (s - r);
    }
    Ok((total / scores.ids.len() as f64).sqrt())
}

/// Standardized mean difference with the pooled-variance denominator
/// `sqrt((var_T + var_C) / 2)`, sample variances (n-1).
pub fn smd(treated: &[f64], control: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
    };
    let mt = mean(treated);
    let mc = mean(control);
    let vt = var(treated, mt);
    let vc = var(control, mc);
    let denom = ((vt + vc) / 2.0).sqrt();
    if denom == 0.0 {
        if mt == mc {
            return 0.0;
        }
        log::warn!("zero variance in both arms with different means; SMD is infinite");
        return if mt > mc { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    (mt - mc) / denom
}

/// Per-covariate SMD of the matched treated vs matched controls, over the
/// original covariates of `dataset`, plus the maximum absolute value.
///
/// This uses the full covariate table and is therefore a benchmark-harness
/// measurement; a real analyst in the collaborative mode could not compute
/// it.
pub fn masmd(dataset: &Dataset, matched: &MatchedSet) -> Result<BalanceReport> {
    let ids = matched.matched_ids();
    if ids.is_empty() {
        return Err(Error::Data("empty matched set".into()));
    }
    let positions = dataset.positions_of(&ids)?;
    let (mut treated_rows, mut control_rows) = (Vec::new(), Vec::new());
    for &p in &positions {
        if dataset.treat[p] == 1 {
            treated_rows.push(p);
        } else {
            control_rows.push(p);
        }
    }
    if treated_rows.len() < 2 || control_rows.len() < 2 {
        return Err(Error::Data("each arm needs at least 2 matched samples".into()));
    }
    let mut per = Vec::with_capacity(dataset.m());
    for j in 0..dataset.m() {
        let t: Vec<f64> = treated_rows.iter().map(|&i| dataset.x[(i, j)]).collect();
        let c: Vec<f64> = control_rows.iter().map(|&i| dataset.x[(i, j)]).collect();
        per.push(smd(&t, &c));
    }
    let masmd = per.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    Ok(BalanceReport { per_covariate_smd: per, masmd })
}

/// Root-mean-square vertical distance between `curve` and `reference`,
/// evaluated on the reference curve's event-time grid.
pub fn gap(curve: &SurvivalCurve, reference: &SurvivalCurve) -> f64 {
    if reference.times.is_empty() {
        log::warn!("reference curve has no event times; gap defined as 0");
        return 0.0;
    }
    let total: f64 = reference
        .times
        .iter()
        .zip(&reference.survival)
        .map(|(&t, &s_ref)| {
            let s = curve.eval_step(t);
            (s - s_ref) * (s - s_ref)
        })
        .sum();
    (total / reference.times.len() as f64).sqrt()
}
