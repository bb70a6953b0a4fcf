//! Covariate-adjusted survival curves from data partitioned across parties.
//!
//! Institutions hold disjoint sample groups, and each institution's
//! covariates may be split column-wise across parties. Instead of pooling
//! raw data, every party shares only a dimensionality-reduced view of its
//! block together with its reduction of a common random anchor matrix. The
//! analyst aligns the reduced coordinate systems on the anchor, fuses them
//! into one feature matrix, estimates propensity scores by logistic
//! regression, forms matched treated/control pairs with a caliper on the
//! logit scale, and estimates per-arm Kaplan-Meier curves on the matched
//! sample.
//!
//! The crate also ships the evaluation harness used to benchmark that
//! pipeline against central analysis, per-party local analysis, and
//! local-matching baselines, plus a file-exchange protocol (see
//! [`protocol`]) in which the user and analyst roles run as separate
//! processes and every shared artifact is digest-checked and auditable for
//! the reduced-dimension privacy constraint.

pub mod anchor;
pub mod collab;
pub mod csvio;
pub mod data;
pub mod error;
pub mod matching;
pub mod metrics;
pub mod numfmt;
pub mod pipeline;
pub mod plot;
pub mod prep;
pub mod propensity;
pub mod protocol;
pub mod reduce;
pub mod report;
pub mod seeding;
pub mod survival;
pub mod synth;

mod mat;
mod svd;

pub use data::{Dataset, PartitionScheme, PartyBlock};
pub use error::{Error, Result};
pub use matching::{MatchConfig, MatchedSet};
pub use metrics::MethodResult;
pub use pipeline::ExperimentConfig;
pub use survival::SurvivalCurve;
