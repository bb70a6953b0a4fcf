//! Propensity-score estimation by maximum-likelihood logistic regression.
//!
//! One fit per analysis mode: on raw covariates for central/local analyses,
//! on the fused representation for the collaborative one. Features enter the
//! model as given (no internal re-standardization), so the modes differ only
//! by feature source. Optimization is damped Newton with step halving; a
//! tiny ridge on the non-intercept block keeps the Hessian factorizable but
//! does not enter the objective, so the optimum is the plain MLE.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
const HESSIAN_RIDGE: f64 = 1e-8;
const SCORE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub intercept: f64,
    pub weights: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_grad_norm: f64,
}

/// Which analysis produced a score vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScoreSource {
    /// Central analysis on the pooled raw covariates.
    Central,
    /// Local analysis by institution `k`.
    Local(usize),
    /// Local matching + central estimation (locally fitted scores, pooled).
    LocalMatched,
    /// Data-collaboration analysis; the label names the party scope.
    Collaborative(String),
}

#[derive(Debug, Clone)]
pub struct PropensityScores {
    pub ids: Vec<u64>,
    /// In (0, 1), clamped away from the boundary so logits stay finite.
    pub scores: Vec<f64>,
    pub source: ScoreSource,
}

impl PropensityScores {
    /// Subset aligned to `ids`, in that order.
    pub fn restrict(&self, ids: &[u64]) -> Result<PropensityScores> {
        let index: std::collections::HashMap<u64, usize> =
            self.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut scores = Vec::with_capacity(ids.len());
        for id in ids {
            let &pos = index
                .get(id)
                .ok_or_else(|| Error::Validation(format!("score for id {id} not present")))?;
            scores.push(self.scores[pos]);
        }
        Ok(PropensityScores { ids: ids.to_vec(), scores, source: self.source.clone() })
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `sum_i z_i eta_i - log(1 + exp(eta_i))`, evaluated stably.
fn log_likelihood(eta: &DVector<f64>, z: &[u8]) -> f64 {
    eta.iter()
        .zip(z)
        .map(|(&e, &zi)| f64::from(zi) * e - (e.max(0.0) + (-e.abs()).exp().ln_1p()))
        .sum()
}

/// Maximize the Bernoulli log-likelihood of `z` given an intercept plus
/// `features`. Stops at max-abs gradient <= 1e-8 or 100 iterations.
pub fn fit_logistic(features: &DMatrix<f64>, z: &[u8]) -> Result<LogisticModel> {
    let n = z.len();
    if features.nrows() != n {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            n
        )));
    }
    if n < 2 {
        return Err(Error::Data("need at least 2 samples".into()));
    }
    let treated: usize = z.iter().map(|&v| usize::from(v)).sum();
    if treated == 0 || treated == n {
        return Err(Error::DegenerateLabels(format!(
            "all {n} samples share one treatment class"
        )));
    }

    let p = features.ncols();
    let mut beta = DVector::zeros(p + 1);
    let eta_of = |beta: &DVector<f64>| -> DVector<f64> {
        let mut eta = DVector::from_element(n, beta[0]);
        for j in 0..p {
            let w = beta[j + 1];
            if w != 0.0 {
                for i in 0..n {
                    eta[i] += w * features[(i, j)];
                }
            }
        }
        eta
    };

    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    for iter in 0..MAX_ITER {
        iterations = iter + 1;
        let eta = eta_of(&beta);
        let probs: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();

        let mut grad = DVector::zeros(p + 1);
        for i in 0..n {
            let resid = f64::from(z[i]) - probs[i];
            grad[0] += resid;
            for j in 0..p {
                grad[j + 1] += features[(i, j)] * resid;
            }
        }
        grad_norm = grad.amax();
        if grad_norm <= GRAD_TOL {
            converged = true;
            iterations = iter;
            break;
        }

        let mut hessian = DMatrix::zeros(p + 1, p + 1);
        for i in 0..n {
            let w = probs[i] * (1.0 - probs[i]);
            if w == 0.0 {
                continue;
            }
            // accumulate the lower triangle; column 0 is the intercept
            hessian[(0, 0)] += w;
            for a in 0..p {
                let fa = features[(i, a)];
                hessian[(a + 1, 0)] += w * fa;
                for b in 0..=a {
                    hessian[(a + 1, b + 1)] += w * fa * features[(i, b)];
                }
            }
        }
        for a in 0..=p {
            for b in 0..a {
                hessian[(b, a)] = hessian[(a, b)];
            }
        }
        for a in 1..=p {
            hessian[(a, a)] += HESSIAN_RIDGE;
        }

        let step = match hessian.clone().cholesky() {
            Some(chol) => chol.solve(&grad),
            None => match hessian.lu().solve(&grad) {
                Some(s) => s,
                None => break,
            },
        };

        let ll_old = log_likelihood(&eta, z);
        // slack absorbs rounding noise near the optimum, where the true
        // improvement drops below float resolution of the objective
        let slack = 1e-10 * (1.0 + ll_old.abs());
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = &beta + &step * scale;
            if log_likelihood(&eta_of(&candidate), z) >= ll_old - slack {
                beta = candidate;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break; // no ascent left at this precision
        }
    }

    let eta = eta_of(&beta);
    if converged && eta.iter().any(|&e| e.abs() > 30.0) {
        log::warn!("possible quasi-separation: |linear predictor| exceeds 30");
    }
    if !converged {
        // recompute the final gradient norm for reporting
        let probs: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let mut g0: f64 = 0.0;
        let mut gmax: f64 = 0.0;
        for i in 0..n {
            g0 += f64::from(z[i]) - probs[i];
        }
        gmax = gmax.max(g0.abs());
        for j in 0..p {
            let gj: f64 =
                (0..n).map(|i| features[(i, j)] * (f64::from(z[i]) - probs[i])).sum();
            gmax = gmax.max(gj.abs());
        }
        grad_norm = gmax;
        log::warn!("logistic fit stopped after {iterations} iterations (grad {grad_norm:.3e})");
    }

    Ok(LogisticModel {
        intercept: beta[0],
        weights: beta.rows(1, p).into_owned(),
        converged,
        iterations,
        final_grad_norm: grad_norm,
    })
}

/// Predicted treatment probabilities, clamped to (0, 1).
pub fn score(
    model: &LogisticModel,
    features: &DMatrix<f64>,
    ids: &[u64],
    source: ScoreSource,
) -> Result<PropensityScores> {
    if features.ncols() != model.weights.len() {
        return Err(Error::Dimension(format!(
            "model has {} weights, features have {} columns",
            model.weights.len(),
            features.ncols()
        )));
    }
    if features.nrows() != ids.len() {
        return Err(Error::Dimension("ids and rows must align".into()));
    }
    let scores = (0..features.nrows())
        .map(|i| {
            let mut eta = model.intercept;
            for j in 0..features.ncols() {
                eta += model.weights[j] * features[(i, j)];
            }
            sigmoid(eta).clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP)
        })
        .collect();
    Ok(PropensityScores { ids: ids.to_vec(), scores, source })
}

/// Elementwise log-odds.
pub fn logit(scores: &[f64]) -> Result<Vec<f64>> {
    scores
        .iter()
        .map(|&s| {
            if s > 0.0 && s < 1.0 {
                Ok((s / (1.0 - s)).ln())
            } else {
                Err(Error::Data(format!("logit undefined at {s}")))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_for;
    use rand::Rng;

    fn random_problem(n: usize, p: usize, tag: &str) -> (DMatrix<f64>, Vec<u8>) {
        let mut rng = rng_for(77, tag);
        let x = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-1.5..1.5));
        let z: Vec<u8> = (0..n)
            .map(|i| {
                let eta: f64 = 0.3 + x.row(i).iter().sum::<f64>() * 0.8;
                u8::from(rng.gen::<f64>() < sigmoid(eta))
            })
            .collect();
        (x, z)
    }

    #[test]
    fn intercept_only_closed_form() {
        let n = 100;
        let features = DMatrix::zeros(n, 1);
        let z: Vec<u8> = (0..n).map(|i| u8::from(i < 30)).collect();
        let model = fit_logistic(&features, &z).unwrap();
        let expected = (0.3f64 / 0.7).ln();
        assert!((model.intercept - expected).abs() < 1e-6, "{}", model.intercept);
        assert!((expected - -0.8473).abs() < 1e-4);
        assert!(model.weights[0].abs() < 1e-6);
        assert!(model.converged);
    }

    #[test]
    fn gradient_vanishes_at_optimum() {
        let (x, z) = random_problem(400, 3, "grad");
        let model = fit_logistic(&x, &z).unwrap();
        assert!(model.converged);
        assert!(model.final_grad_norm <= 1e-8);
    }

    #[test]
    fn mean_score_equals_treated_fraction() {
        let (x, z) = random_problem(500, 2, "meanscore");
        let model = fit_logistic(&x, &z).unwrap();
        let ids: Vec<u64> = (0..500).collect();
        let scores = score(&model, &x, &ids, ScoreSource::Central).unwrap();
        let mean = scores.scores.iter().sum::<f64>() / 500.0;
        let frac = z.iter().map(|&v| f64::from(v)).sum::<f64>() / 500.0;
        assert!((mean - frac).abs() < 1e-8);
    }

    #[test]
    fn probabilities_invariant_under_affine_feature_maps() {
        let (x, z) = random_problem(300, 3, "affine");
        let base = fit_logistic(&x, &z).unwrap();
        let ids: Vec<u64> = (0..300).collect();
        let p0 = score(&base, &x, &ids, ScoreSource::Central).unwrap();

        let mut rng = rng_for(5, "affine-map");
        let a = DMatrix::from_fn(3, 3, |i, j| {
            let base = if i == j { 1.0 } else { 0.0 };
            base + rng.gen_range(-0.3..0.3)
        });
        let shift = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
        let mut mapped = &x * &a;
        for i in 0..300 {
            for j in 0..3 {
                mapped[(i, j)] += shift[j];
            }
        }
        let refit = fit_logistic(&mapped, &z).unwrap();
        let p1 = score(&refit, &mapped, &ids, ScoreSource::Central).unwrap();
        for i in 0..300 {
            assert!((p0.scores[i] - p1.scores[i]).abs() <= 1e-6);
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        // independent log-likelihood evaluation for the oracle
        fn ll(x: &DMatrix<f64>, z: &[u8], beta: &[f64]) -> f64 {
            let mut total = 0.0;
            for i in 0..x.nrows() {
                let mut eta = beta[0];
                for j in 0..x.ncols() {
                    eta += beta[j + 1] * x[(i, j)];
                }
                let p: f64 = 1.0 / (1.0 + (-eta).exp());
                total += if z[i] == 1 { p.ln() } else { (1.0 - p).ln() };
            }
            total
        }

        let (x, z) = random_problem(60, 2, "fd");
        let beta = [0.2, -0.4, 0.7];
        let h = 1e-6;
        for j in 0..3 {
            let mut up = beta;
            let mut down = beta;
            up[j] += h;
            down[j] -= h;
            let numeric = (ll(&x, &z, &up) - ll(&x, &z, &down)) / (2.0 * h);

            // analytic: sum_i d_ij (z_i - p_i)
            let mut analytic = 0.0;
            for i in 0..x.nrows() {
                let mut eta = beta[0];
                for c in 0..x.ncols() {
                    eta += beta[c + 1] * x[(i, c)];
                }
                let p = sigmoid(eta);
                let d = if j == 0 { 1.0 } else { x[(i, j - 1)] };
                analytic += d * (f64::from(z[i]) - p);
            }
            let denom = analytic.abs().max(1.0);
            assert!(
                (numeric - analytic).abs() / denom < 1e-4,
                "component {j}: {numeric} vs {analytic}"
            );
        }
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = DMatrix::zeros(10, 1);
        let z = vec![1u8; 10];
        assert!(matches!(fit_logistic(&x, &z), Err(Error::DegenerateLabels(_))));
    }

    #[test]
    fn score_examples() {
        let model = LogisticModel {
            intercept: 0.0,
            weights: DVector::zeros(0),
            converged: true,
            iterations: 0,
            final_grad_norm: 0.0,
        };
        let features = DMatrix::zeros(3, 0);
        let s = score(&model, &features, &[0, 1, 2], ScoreSource::Central).unwrap();
        assert!(s.scores.iter().all(|&v| v == 0.5));

        let model2 = LogisticModel { intercept: 2.0, ..model };
        let s2 = score(&model2, &features, &[0, 1, 2], ScoreSource::Central).unwrap();
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((s2.scores[0] - expected).abs() < 1e-12);
        assert!((expected - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn monotone_in_positively_weighted_feature() {
        let model = LogisticModel {
            intercept: -0.5,
            weights: DVector::from_vec(vec![1.2]),
            converged: true,
            iterations: 0,
            final_grad_norm: 0.0,
        };
        let lo = DMatrix::from_vec(1, 1, vec![0.3]);
        let hi = DMatrix::from_vec(1, 1, vec![0.4]);
        let s_lo = score(&model, &lo, &[0], ScoreSource::Central).unwrap().scores[0];
        let s_hi = score(&model, &hi, &[0], ScoreSource::Central).unwrap().scores[0];
        assert!(s_hi > s_lo);
    }

    #[test]
    fn logit_inverts_scores() {
        assert_eq!(logit(&[0.5]).unwrap()[0], 0.0);
        let v = logit(&[0.8808]).unwrap()[0];
        assert!((v - 2.0).abs() < 1e-3);
        assert!(logit(&[0.0]).is_err());

        let model = LogisticModel {
            intercept: 0.7,
            weights: DVector::from_vec(vec![-1.1, 0.4]),
            converged: true,
            iterations: 0,
            final_grad_norm: 0.0,
        };
        let mut rng = rng_for(3, "logit-rt");
        let x = DMatrix::from_fn(20, 2, |_, _| rng.gen_range(-2.0..2.0));
        let ids: Vec<u64> = (0..20).collect();
        let s = score(&model, &x, &ids, ScoreSource::Central).unwrap();
        let l = logit(&s.scores).unwrap();
        for i in 0..20 {
            let eta = model.intercept + model.weights[0] * x[(i, 0)] + model.weights[1] * x[(i, 1)];
            assert!((l[i] - eta).abs() < 1e-9);
        }
    }

    #[test]
    fn restrict_aligns_by_id() {
        let s = PropensityScores {
            ids: vec![5, 6, 7],
            scores: vec![0.1, 0.2, 0.3],
            source: ScoreSource::Central,
        };
        let r = s.restrict(&[7, 5]).unwrap();
        assert_eq!(r.ids, vec![7, 5]);
        assert_eq!(r.scores, vec![0.3, 0.1]);
        assert!(s.restrict(&[9]).is_err());
    }
}
