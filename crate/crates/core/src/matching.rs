//! Greedy 1:1 caliper matching on the logit propensity scale.
//!
//! The caliper is a multiple (default 0.2) of the pooled standard deviation
//! of all logits. Treated units are processed in descending score order;
//! each takes the closest still-unmatched control, skipping units with no
//! control inside the caliper. Ties in distance go to the lower control id,
//! so the procedure is fully deterministic given its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propensity::{logit, PropensityScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OrderRule {
    #[default]
    DescendingScore,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchConfig {
    #[serde(default = "default_caliper_multiplier")]
    pub caliper_multiplier: f64,
    #[serde(default)]
    pub order_rule: OrderRule,
    #[serde(default)]
    pub replacement: bool,
    /// Reserved; the greedy procedure draws no random numbers.
    #[serde(default)]
    pub seed: u64,
}

fn default_caliper_multiplier() -> f64 {
    0.2
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            caliper_multiplier: 0.2,
            order_rule: OrderRule::DescendingScore,
            replacement: false,
            seed: 0,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.caliper_multiplier.is_nan() || self.caliper_multiplier <= 0.0 {
            return Err(Error::Config(format!(
                "caliper multiplier must be positive, got {}",
                self.caliper_multiplier
            )));
        }
        Ok(())
    }
}

/// Matched treated/control pairs, by sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSet {
    pub pairs: Vec<(u64, u64)>,
    pub caliper_width: f64,
}

impl MatchedSet {
    /// Treated + control count, the convention used in reports.
    pub fn sample_size(&self) -> usize {
        2 * self.pairs.len()
    }

    /// All matched ids, treated first within each pair.
    pub fn matched_ids(&self) -> Vec<u64> {
        self.pairs.iter().flat_map(|&(t, c)| [t, c]).collect()
    }
}

/// Pooled sample standard deviation (denominator n-1).
fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Greedy caliper matching of treated units to controls.
///
/// `z` must align with `scores.ids` row-for-row.
pub fn caliper_match(
    scores: &PropensityScores,
    z: &[u8],
    config: &MatchConfig,
) -> Result<MatchedSet> {
    config.validate()?;
    let n = scores.ids.len();
    if z.len() != n {
        return Err(Error::Dimension("scores and treatment must align".into()));
    }
    let treated_count: usize = z.iter().map(|&v| usize::from(v)).sum();
    if treated_count == 0 || treated_count == n {
        return Err(Error::Data("both treatment classes are required for matching".into()));
    }

    let logits = logit(&scores.scores)?;
    let sd = sample_sd(&logits);
    let caliper = config.caliper_multiplier * sd;
    if sd == 0.0 {
        log::warn!("all propensity scores equal; caliper width 0, exact ties only");
    }

    let mut treated: Vec<usize> = (0..n).filter(|&i| z[i] == 1).collect();
    treated.sort_by(|&a, &b| {
        scores.scores[b]
            .partial_cmp(&scores.scores[a])
            .unwrap()
            .then(scores.ids[a].cmp(&scores.ids[b]))
    });
    let controls: Vec<usize> = (0..n).filter(|&i| z[i] == 0).collect();
    let mut control_used = vec![false; n];

    let mut pairs = Vec::new();
    for &t in &treated {
        let mut best: Option<(f64, u64, usize)> = None;
        for &c in &controls {
            if !config.replacement && control_used[c] {
                continue;
            }
            let dist = (logits[t] - logits[c]).abs();
            let candidate = (dist, scores.ids[c], c);
            best = match best {
                None => Some(candidate),
                Some(current) => {
                    if candidate.0 < current.0
                        || (candidate.0 == current.0 && candidate.1 < current.1)
                    {
                        Some(candidate)
                    } else {
                        Some(current)
                    }
                }
            };
        }
        if let Some((dist, control_id, c)) = best {
            if dist <= caliper {
                pairs.push((scores.ids[t], control_id));
                control_used[c] = true;
            }
        }
    }

    Ok(MatchedSet { pairs, caliper_width: caliper })
}
