//! Synthetic benchmark generator.
//!
//! Draws correlated Gaussian covariates (two blocks of three, 0.5
//! within-block correlation), assigns treatment with probability
//! `logistic(sum(x)/3)`, draws Weibull survival times whose rate depends on
//! the same covariate sum and on treatment, and censors each sample by an
//! independent fair coin. For samples with an event the observed time is the
//! survival time shrunk by a Uniform(0.8, 1.0) factor; censored samples keep
//! the survival time as observed.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seeding;

/// Number of covariates produced by the generator.
pub const NUM_COVARIATES: usize = 6;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    /// Weibull scale.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Weibull shape.
    #[serde(default = "default_shape")]
    pub shape: f64,
    /// Marginal treatment effect on the log rate.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_lambda() -> f64 {
    2.0
}

fn default_shape() -> f64 {
    2.0
}

fn default_gamma() -> f64 {
    -1.0
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n: 1000, lambda: 2.0, shape: 2.0, gamma: -1.0, seed: 0 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.lambda) || !positive(self.shape) {
            return Err(Error::Config(format!(
                "Weibull parameters must be positive (lambda={}, shape={})",
                self.lambda, self.shape
            )));
        }
        Ok(())
    }
}

/// The 6x6 covariance: two 3x3 blocks with unit diagonal and 0.5
/// off-diagonals, no cross-block correlation.
pub fn covariance() -> DMatrix<f64> {
    DMatrix::from_fn(NUM_COVARIATES, NUM_COVARIATES, |i, j| {
        if i == j {
            1.0
        } else if i / 3 == j / 3 {
            0.5
        } else {
            0.0
        }
    })
}

/// Draw `n` rows from N(0, covariance()).
pub fn gen_covariates<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let chol = covariance()
        .cholesky()
        .expect("fixed covariance is positive definite");
    let l = chol.l();
    let mut x = DMatrix::zeros(n, NUM_COVARIATES);
    let mut z = [0.0f64; NUM_COVARIATES];
    for i in 0..n {
        for slot in z.iter_mut() {
            *slot = StandardNormal.sample(rng);
        }
        for j in 0..NUM_COVARIATES {
            // row = L * z, taking the lower-triangular structure into account
            let mut acc = 0.0;
            for (t, &zt) in z.iter().enumerate().take(j + 1) {
                acc += l[(j, t)] * zt;
            }
            x[(i, j)] = acc;
        }
    }
    x
}

/// Treatment-assignment probability for one covariate row:
/// `1 / (1 + exp(-sum(x)/3))`.
pub fn treatment_probability(row: &[f64]) -> f64 {
    let s: f64 = row.iter().sum();
    1.0 / (1.0 + (-s / 3.0).exp())
}

/// Bernoulli treatment draws with per-sample probability
/// [`treatment_probability`].
pub fn assign_treatment<R: Rng>(x: &DMatrix<f64>, rng: &mut R) -> Result<Vec<u8>> {
    if x.ncols() != NUM_COVARIATES {
        return Err(Error::Dimension(format!(
            "expected {NUM_COVARIATES} covariates, got {}",
            x.ncols()
        )));
    }
    Ok((0..x.nrows())
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let p = treatment_probability(&row);
            u8::from(rng.gen::<f64>() < p)
        })
        .collect())
}

/// Inverse-transform Weibull draw: the survival time corresponding to the
/// uniform variate `u` under log-rate `linpred` (with scale `lambda` and
/// shape `v`).
pub fn weibull_time(u: f64, linpred: f64, lambda: f64, v: f64) -> f64 {
    (-u.ln() / (lambda * linpred.exp())).powf(1.0 / v)
}

/// Survival draws for one generated cohort.
#[derive(Debug, Clone)]
pub struct SurvivalDraws {
    /// Latent survival times (diagnostic only; the dataset carries `observed`).
    pub latent: Vec<f64>,
    pub event: Vec<u8>,
    /// Observed times: latent shrunk by Uniform(0.8, 1.0) when an event
    /// occurred, latent unchanged when censored.
    pub observed: Vec<f64>,
}

/// Draw survival times, event indicators, and observed times.
pub fn gen_survival<R: Rng>(
    x: &DMatrix<f64>,
    z: &[u8],
    config: &SynthConfig,
    rng: &mut R,
) -> Result<SurvivalDraws> {
    config.validate()?;
    if x.nrows() != z.len() {
        return Err(Error::Dimension("covariates and treatment must align".into()));
    }
    let n = x.nrows();
    let mut latent = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    let mut observed = Vec::with_capacity(n);
    for (i, &zi) in z.iter().enumerate() {
        let sum: f64 = x.row(i).iter().sum();
        let linpred = -sum / 3.0 + config.gamma * f64::from(zi);
        let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE); // keep ln finite
        let t = weibull_time(u, linpred, config.lambda, config.shape);
        let d = u8::from(rng.gen::<f64>() < 0.5);
        let obs = if d == 1 { rng.gen_range(0.8..1.0) * t } else { t };
        latent.push(t);
        event.push(d);
        observed.push(obs);
    }
    Ok(SurvivalDraws { latent, event, observed })
}

/// Generate a full benchmark dataset from `config.seed`.
pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = seeding::rng_for(config.seed, "synth");
    let x = gen_covariates(config.n, &mut rng);
    let z = assign_treatment(&x, &mut rng)?;
    let draws = gen_survival(&x, &z, config, &mut rng)?;
    let names = (1..=NUM_COVARIATES).map(|j| format!("x{j}")).collect();
    Dataset::new(
        (0..config.n as u64).collect(),
        x,
        draws.observed,
        draws.event,
        z,
        names,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_for;

    fn sample_corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for i in 0..a.len() {
            cov += (a[i] - ma) * (b[i] - mb);
            va += (a[i] - ma).powi(2);
            vb += (b[i] - mb).powi(2);
        }
        cov / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn cholesky_factor_reproduces_covariance() {
        let s = covariance();
        let l = s.clone().cholesky().unwrap().l();
        let back = &l * l.transpose();
        assert!((back - s).abs().max() < 1e-12);
    }

    #[test]
    fn covariate_moments_match_target() {
        let n = 200_000;
        let mut rng = rng_for(42, "synth-moments");
        let x = gen_covariates(n, &mut rng);
        for j in 0..NUM_COVARIATES {
            let mean = x.column(j).iter().sum::<f64>() / n as f64;
            assert!(mean.abs() < 0.02, "column {j} mean {mean}");
        }
        let c0: Vec<f64> = x.column(0).iter().copied().collect();
        let c1: Vec<f64> = x.column(1).iter().copied().collect();
        let c3: Vec<f64> = x.column(3).iter().copied().collect();
        let within = sample_corr(&c0, &c1);
        let across = sample_corr(&c0, &c3);
        assert!((within - 0.5).abs() < 0.02, "within-block corr {within}");
        assert!(across.abs() < 0.02, "cross-block corr {across}");
    }

    #[test]
    fn treatment_probability_values() {
        assert_eq!(treatment_probability(&[0.0; 6]), 0.5);
        let p = treatment_probability(&[3.0; 6]);
        // logistic(6) = 1 / (1 + e^{ -6 })
        assert!((p - 1.0 / (1.0 + (-6.0f64).exp())).abs() < 1e-15);
        assert!((p - 0.9975).abs() < 1e-4);
    }

    #[test]
    fn treated_fraction_near_half() {
        let n = 200_000;
        let mut rng = rng_for(7, "synth-frac");
        let x = gen_covariates(n, &mut rng);
        let z = assign_treatment(&x, &mut rng).unwrap();
        let frac = z.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "treated fraction {frac}");
    }

    #[test]
    fn weibull_time_closed_form() {
        // u = e^-1 makes -ln u = 1; with zero covariates and no treatment the
        // rate is lambda, so t = (1/2)^(1/2) at lambda = 2, v = 2.
        let t = weibull_time((-1.0f64).exp(), 0.0, 2.0, 2.0);
        // sqrt(1/2) = 0.70711 to five decimals
        assert!((t - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn censored_samples_keep_latent_time() {
        let config = SynthConfig { n: 4000, seed: 9, ..Default::default() };
        let mut rng = rng_for(config.seed, "synth-obs");
        let x = gen_covariates(config.n, &mut rng);
        let z = assign_treatment(&x, &mut rng).unwrap();
        let draws = gen_survival(&x, &z, &config, &mut rng).unwrap();
        let mut saw_event = false;
        let mut saw_censor = false;
        for i in 0..config.n {
            if draws.event[i] == 0 {
                assert_eq!(draws.observed[i], draws.latent[i]);
                saw_censor = true;
            } else {
                assert!(draws.observed[i] >= 0.8 * draws.latent[i] - 1e-12);
                assert!(draws.observed[i] <= draws.latent[i] + 1e-12);
                saw_event = true;
            }
        }
        assert!(saw_event && saw_censor);
    }

    #[test]
    fn non_positive_weibull_parameters_rejected() {
        let bad = SynthConfig { lambda: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SynthConfig { shape: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn same_seed_bit_identical() {
        let config = SynthConfig { n: 300, seed: 123, ..Default::default() };
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 124, ..config }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn treatment_prolongs_survival_at_scale() {
        // negative gamma shrinks the event rate, so at large n the treated
        // arm's survival curve lies above the control arm's at interior
        // times (fit on the full cohort; no estimation step in between)
        use crate::survival::{kaplan_meier, Arm};
        let config = SynthConfig { n: 100_000, seed: 77, ..Default::default() };
        let dataset = generate(&config).unwrap();
        let treated: Vec<usize> = (0..config.n).filter(|&i| dataset.treat[i] == 1).collect();
        let control: Vec<usize> = (0..config.n).filter(|&i| dataset.treat[i] == 0).collect();
        let t_curve = kaplan_meier(&dataset.time, &dataset.event, &treated, Arm::Treated).unwrap();
        let c_curve = kaplan_meier(&dataset.time, &dataset.event, &control, Arm::Control).unwrap();
        let t_max = t_curve.times.last().unwrap().min(*c_curve.times.last().unwrap());
        let mut saw_gap = false;
        for i in 1..40 {
            let t = t_max * i as f64 / 40.0;
            let st = t_curve.eval_step(t);
            let sc = c_curve.eval_step(t);
            assert!(st >= sc - 1e-3, "treated {st} below control {sc} at t={t}");
            if st > sc + 0.02 {
                saw_gap = true;
            }
        }
        assert!(saw_gap, "treatment effect should separate the curves");
    }

    #[test]
    fn larger_linear_predictor_shrinks_survival_time() {
        // Group samples at fixed z = 0 by the sign of the log-rate term
        // -sum(x)/3: larger values must shorten the latent time on average.
        let config = SynthConfig { n: 100_000, seed: 31, ..Default::default() };
        let mut rng = rng_for(config.seed, "synth-confounding");
        let x = gen_covariates(config.n, &mut rng);
        let z = vec![0u8; config.n];
        let draws = gen_survival(&x, &z, &config, &mut rng).unwrap();
        let mut hi = (0.0, 0usize);
        let mut lo = (0.0, 0usize);
        for i in 0..config.n {
            let linpred = -x.row(i).iter().sum::<f64>() / 3.0;
            if linpred > 0.5 {
                hi = (hi.0 + draws.latent[i], hi.1 + 1);
            } else if linpred < -0.5 {
                lo = (lo.0 + draws.latent[i], lo.1 + 1);
            }
        }
        let hi_mean = hi.0 / hi.1 as f64;
        let lo_mean = lo.0 / lo.1 as f64;
        assert!(
            hi_mean < lo_mean,
            "high log-rate mean {hi_mean} should be below low log-rate mean {lo_mean}"
        );
    }
}
