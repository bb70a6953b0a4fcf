//! Kaplan-Meier survival-curve estimation.
//!
//! Product-limit estimate over the distinct times with at least one event.
//! At tied times, events are processed before censorings: a unit censored at
//! `t` is still at risk for events at `t`. Curves are right-continuous step
//! functions starting at 1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Treated,
    Control,
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arm::Treated => write!(f, "treated"),
            Arm::Control => write!(f, "control"),
        }
    }
}

/// A fitted survival curve: survival value, at-risk count, and event count
/// at each distinct event time.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<u64>,
    pub events: Vec<u64>,
    pub group: Arm,
}

impl SurvivalCurve {
    /// Right-continuous evaluation: 1 before the first event time, the
    /// post-jump value at and after each grid time.
    pub fn eval_step(&self, t: f64) -> f64 {
        // index of the last grid time <= t
        let mut result = 1.0;
        for (i, &ti) in self.times.iter().enumerate() {
            if ti <= t {
                result = self.survival[i];
            } else {
                break;
            }
        }
        result
    }
}

/// Kaplan-Meier estimate for the units selected by `subset` (positions into
/// `times`/`events`).
pub fn kaplan_meier(times: &[f64], events: &[u8], subset: &[usize], group: Arm) -> Result<SurvivalCurve> {
    if times.len() != events.len() {
        return Err(Error::Dimension("times and events must align".into()));
    }
    if subset.is_empty() {
        return Err(Error::Data("empty subset for survival estimation".into()));
    }
    let mut obs: Vec<(f64, u8)> = Vec::with_capacity(subset.len());
    for &i in subset {
        let (t, e) = times
            .get(i)
            .zip(events.get(i))
            .ok_or_else(|| Error::Validation(format!("subset index {i} out of range")))?;
        if t.is_nan() || *t < 0.0 {
            return Err(Error::Data(format!("negative or NaN time {t}")));
        }
        obs.push((*t, *e));
    }
    obs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut curve = SurvivalCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
        group,
    };
    let mut remaining = obs.len() as u64;
    let mut survival = 1.0;
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let mut d = 0u64;
        let mut c = 0u64;
        while i < obs.len() && obs[i].0 == t {
            if obs[i].1 == 1 {
                d += 1;
            } else {
                c += 1;
            }
            i += 1;
        }
        if d > 0 {
            // everyone with an observed time >= t is at risk just before t,
            // including units censored exactly at t
            survival *= 1.0 - d as f64 / remaining as f64;
            curve.times.push(t);
            curve.survival.push(survival);
            curve.at_risk.push(remaining);
            curve.events.push(d);
        }
        remaining -= d + c;
    }
    Ok(curve)
}

/// Curves for the treated and control arms of a matched sample.
///
/// `positions` maps each matched id to its row in `times`/`events`/`treat`.
pub fn km_by_group(
    matched_ids: &[u64],
    positions: &[usize],
    times: &[f64],
    events: &[u8],
    treat: &[u8],
) -> Result<(SurvivalCurve, SurvivalCurve)> {
    if matched_ids.len() != positions.len() {
        return Err(Error::Dimension("ids and positions must align".into()));
    }
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for &pos in positions {
        if pos >= treat.len() {
            return Err(Error::Validation(format!("position {pos} out of range")));
        }
        if treat[pos] == 1 {
            treated.push(pos);
        } else {
            control.push(pos);
        }
    }
    if treated.is_empty() || control.is_empty() {
        return Err(Error::Data("an arm is empty after matching".into()));
    }
    Ok((
        kaplan_meier(times, events, &treated, Arm::Treated)?,
        kaplan_meier(times, events, &control, Arm::Control)?,
    ))
}

/// Write curves as CSV rows `(group, time, survival, at_risk, events)`.
pub fn write_curves_csv(path: &Path, curves: &[&SurvivalCurve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["group", "time", "survival", "at_risk", "events"])?;
    for curve in curves {
        for i in 0..curve.times.len() {
            w.write_record([
                curve.group.to_string(),
                fmt_f64(curve.times[i]),
                fmt_f64(curve.survival[i]),
                curve.at_risk[i].to_string(),
                curve.events[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
