//! Orchestration of the four analysis modes and the repeated-benchmark
//! harness.
//!
//! Within one repetition every mode consumes the same generated dataset and
//! partition, so differences between rows of the report are attributable to
//! the modes themselves. The central analysis is always run: it is the
//! reference against which score inconsistency and curve gaps are measured.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anchor::{self, AnchorDataset};
use crate::collab;
use crate::data::{self, CsvSchema, Dataset, Outcomes, PartitionScheme, PartyBlock};
use crate::error::{Error, Result};
use crate::matching::{self, MatchConfig, MatchedSet};
use crate::metrics::{self, MethodLabel, MethodResult};
use crate::propensity::{self, PropensityScores, ScoreSource};
use crate::reduce;
use crate::report::{MeanCurve, MeanSd, ReportRow, ReportTable};
use crate::seeding;
use crate::survival::{self, Arm, SurvivalCurve};
use crate::synth::{self, SynthConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SynthConfig),
    Csv { path: PathBuf, schema: CsvSchema },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub institutions: usize,
    /// Number of even covariate groups; ignored when `column_groups` is set.
    #[serde(default = "default_one")]
    pub covariate_groups: usize,
    #[serde(default)]
    pub column_groups: Option<Vec<Vec<usize>>>,
}

fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Ca,
    La,
    Lmca,
    Dcqe,
}

/// Which parties take part in a collaborative variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Every institution's first column group.
    Left,
    /// All column groups of the first institution.
    Top,
    /// Every party.
    Whole,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReducedDims {
    Uniform(usize),
    PerParty(Vec<PartyDim>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartyDim {
    pub k: usize,
    pub l: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DcqeVariantConfig {
    pub name: String,
    #[serde(default)]
    pub scope: Option<Scope>,
    /// Explicit `[k, l]` pairs; overrides `scope`.
    #[serde(default)]
    pub parties: Option<Vec<[usize; 2]>>,
    /// Per-party reduced dimension; default is ceil(m_l / 2).
    #[serde(default)]
    pub reduced_dims: Option<ReducedDims>,
    /// Fused dimension; default is the smallest institution width.
    #[serde(default)]
    pub fused_dim: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub partition: PartitionConfig,
    /// Analysis modes to run; the central analysis always runs as reference.
    #[serde(default)]
    pub methods: Option<Vec<MethodChoice>>,
    /// The local-analysis party reported in the table.
    #[serde(default)]
    pub la_user: Option<[usize; 2]>,
    /// Parties acting as independent users in local-matching mode.
    #[serde(default)]
    pub lmca_parties: Option<Vec<[usize; 2]>>,
    #[serde(default)]
    pub dcqe: Option<Vec<DcqeVariantConfig>>,
    /// Standardize covariates inside each party's reducer. Defaults to true
    /// for CSV sources and false for the synthetic benchmark.
    #[serde(default)]
    pub standardize: Option<bool>,
    /// Anchor row count; defaults to the sample count.
    #[serde(default)]
    pub anchor_rows: Option<usize>,
    #[serde(default, rename = "match")]
    pub match_config: MatchConfig,
    pub repetitions: usize,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Read a config file; a relative CSV data path resolves against the
    /// config file's directory.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        if let DataSource::Csv { path: data_path, .. } = &mut config.data {
            if data_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *data_path = dir.join(&data_path);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.partition.institutions == 0 {
            return Err(Error::Config("at least one institution".into()));
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate()?;
        }
        self.match_config.validate()?;
        Ok(())
    }

    /// Digest of the canonical JSON encoding, recorded in reports.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// Central analysis: fit and match on the pooled raw covariates.
pub fn run_ca(dataset: &Dataset, match_config: &MatchConfig) -> Result<MethodResult> {
    let model = propensity::fit_logistic(&dataset.x, &dataset.treat)?;
    let scores = propensity::score(&model, &dataset.x, &dataset.ids, ScoreSource::Central)?;
    let matched = matching::caliper_match(&scores, &dataset.treat, match_config)?;
    let curves = curves_on_dataset(dataset, &matched)?;
    let balance = metrics::masmd(dataset, &matched)?;
    Ok(MethodResult {
        method: MethodLabel::Ca,
        sample_size: matched.sample_size(),
        scores,
        matched,
        curves,
        balance,
    })
}

/// Local analysis: one party alone, using its own covariates and its
/// institution's outcomes. Balance is still measured on the full covariate
/// table (a benchmark-harness privilege).
pub fn run_la(
    dataset: &Dataset,
    block: &PartyBlock,
    outcomes: &Outcomes,
    match_config: &MatchConfig,
) -> Result<MethodResult> {
    let (scores, matched, curves) = local_estimate(
        block,
        outcomes,
        match_config,
        ScoreSource::Local(block.k),
    )?;
    let balance = metrics::masmd(dataset, &matched)?;
    Ok(MethodResult {
        method: MethodLabel::La(block.k, block.l),
        sample_size: matched.sample_size(),
        scores,
        matched,
        curves,
        balance,
    })
}

fn local_estimate(
    block: &PartyBlock,
    outcomes: &Outcomes,
    match_config: &MatchConfig,
    source: ScoreSource,
) -> Result<(PropensityScores, MatchedSet, (SurvivalCurve, SurvivalCurve))> {
    if outcomes.time.len() != block.n() {
        return Err(Error::Dimension("outcomes must align with the block".into()));
    }
    let model = propensity::fit_logistic(&block.x, &outcomes.treat)
        .map_err(|e| annotate_party(e, block.k, block.l))?;
    let scores = propensity::score(&model, &block.x, &block.ids, source)?;
    let matched = matching::caliper_match(&scores, &outcomes.treat, match_config)?;
    let ids = matched.matched_ids();
    let positions = positions_in(&block.ids, &ids)?;
    let curves =
        survival::km_by_group(&ids, &positions, &outcomes.time, &outcomes.event, &outcomes.treat)?;
    Ok((scores, matched, curves))
}

fn annotate_party(e: Error, k: usize, l: usize) -> Error {
    match e {
        Error::DegenerateLabels(msg) => {
            Error::DegenerateLabels(format!("party ({k},{l}): {msg}"))
        }
        other => other,
    }
}

/// Local matching + central estimation: every user matches on its own
/// covariates, then only matched outcome triples are pooled for the curves.
/// Scores are the locally fitted ones, stacked by id.
pub fn run_lmca(
    dataset: &Dataset,
    users: &[(&PartyBlock, &Outcomes)],
    match_config: &MatchConfig,
) -> Result<MethodResult> {
    if users.is_empty() {
        return Err(Error::Validation("no users in scope".into()));
    }
    let mut institutions = BTreeSet::new();
    for (block, _) in users {
        if !institutions.insert(block.k) {
            return Err(Error::Validation(format!(
                "institution {} appears twice in the local-matching scope",
                block.k
            )));
        }
    }

    let mut all_ids = Vec::new();
    let mut all_scores = Vec::new();
    let mut pooled_pairs = Vec::new();
    let mut widest_caliper: f64 = 0.0;
    let mut pooled_time = Vec::new();
    let mut pooled_event = Vec::new();
    let mut pooled_treat = Vec::new();
    let mut pooled_ids = Vec::new();
    for (block, outcomes) in users {
        let (scores, matched, _curves) =
            local_estimate(block, outcomes, match_config, ScoreSource::LocalMatched)?;
        all_ids.extend_from_slice(&scores.ids);
        all_scores.extend_from_slice(&scores.scores);
        widest_caliper = widest_caliper.max(matched.caliper_width);
        let ids = matched.matched_ids();
        let positions = positions_in(&block.ids, &ids)?;
        for (&id, &pos) in ids.iter().zip(&positions) {
            pooled_ids.push(id);
            pooled_time.push(outcomes.time[pos]);
            pooled_event.push(outcomes.event[pos]);
            pooled_treat.push(outcomes.treat[pos]);
        }
        pooled_pairs.extend(matched.pairs);
    }

    let matched = MatchedSet { pairs: pooled_pairs, caliper_width: widest_caliper };
    let positions: Vec<usize> = (0..pooled_ids.len()).collect();
    let curves = survival::km_by_group(
        &pooled_ids,
        &positions,
        &pooled_time,
        &pooled_event,
        &pooled_treat,
    )?;
    let balance = metrics::masmd(dataset, &matched)?;
    Ok(MethodResult {
        method: MethodLabel::Lmca,
        sample_size: matched.sample_size(),
        scores: PropensityScores {
            ids: all_ids,
            scores: all_scores,
            source: ScoreSource::LocalMatched,
        },
        matched,
        curves,
        balance,
    })
}

/// Analyst-side inputs of one collaborative run, one entry per institution
/// in ascending institution order. Whether these come from in-process
/// matrices or from an exchange directory, the estimation path is the same.
#[derive(Debug, Clone)]
pub struct DcqeInputs {
    /// (ids, horizontally concatenated reduced data) per institution.
    pub data_reps: Vec<(Vec<u64>, DMatrix<f64>)>,
    /// Reduced anchor per institution, same column layout as the data rep.
    pub anchor_reps: Vec<DMatrix<f64>>,
    /// Outcome vectors per institution, aligned with the data rep rows.
    pub outcomes: Vec<Outcomes>,
    pub fused_dim: usize,
    pub label: String,
}

/// Fuse, fit, match, and estimate curves from shared representations.
pub fn dcqe_analyze(
    inputs: &DcqeInputs,
    match_config: &MatchConfig,
) -> Result<(PropensityScores, MatchedSet, (SurvivalCurve, SurvivalCurve))> {
    let transforms = collab::build_collab_transforms(&inputs.anchor_reps, inputs.fused_dim)?;
    let fused = collab::build_collab_representation(&inputs.data_reps, &transforms)?;
    log::debug!(
        "{}: anchor alignment error {:.3e}",
        inputs.label,
        collab::anchor_alignment_error(&inputs.anchor_reps, &transforms)
    );

    let mut time = Vec::with_capacity(fused.ids.len());
    let mut event = Vec::with_capacity(fused.ids.len());
    let mut treat = Vec::with_capacity(fused.ids.len());
    for outcomes in &inputs.outcomes {
        time.extend_from_slice(&outcomes.time);
        event.extend_from_slice(&outcomes.event);
        treat.extend_from_slice(&outcomes.treat);
    }
    if time.len() != fused.ids.len() {
        return Err(Error::Dimension(format!(
            "{} outcome rows for {} fused rows",
            time.len(),
            fused.ids.len()
        )));
    }

    let model = propensity::fit_logistic(&fused.x_check, &treat)?;
    let scores = propensity::score(
        &model,
        &fused.x_check,
        &fused.ids,
        ScoreSource::Collaborative(inputs.label.clone()),
    )?;
    let matched = matching::caliper_match(&scores, &treat, match_config)?;
    let ids = matched.matched_ids();
    let positions = positions_in(&fused.ids, &ids)?;
    let curves = survival::km_by_group(&ids, &positions, &time, &event, &treat)?;
    Ok((scores, matched, curves))
}

/// Run the collaborative mode in-process: fit each party's reducer, share
/// the reduced matrices with the analyst role, and estimate.
#[allow(clippy::too_many_arguments)]
pub fn run_dcqe(
    dataset: &Dataset,
    parties: &[&PartyBlock],
    outcomes_of: &HashMap<usize, &Outcomes>,
    anchor_data: &AnchorDataset,
    dims: &HashMap<(usize, usize), usize>,
    fused_dim: usize,
    standardize: bool,
    match_config: &MatchConfig,
    label: &str,
) -> Result<MethodResult> {
    let inputs = encode_parties(parties, outcomes_of, anchor_data, dims, standardize, fused_dim, label)?;
    let (scores, matched, curves) = dcqe_analyze(&inputs, match_config)?;
    let balance = metrics::masmd(dataset, &matched)?;
    Ok(MethodResult {
        method: MethodLabel::Dcqe(label.to_string()),
        sample_size: matched.sample_size(),
        scores,
        matched,
        curves,
        balance,
    })
}

/// User-side phase: per-party reduction of data and anchor, grouped by
/// institution in ascending order.
pub fn encode_parties(
    parties: &[&PartyBlock],
    outcomes_of: &HashMap<usize, &Outcomes>,
    anchor_data: &AnchorDataset,
    dims: &HashMap<(usize, usize), usize>,
    standardize: bool,
    fused_dim: usize,
    label: &str,
) -> Result<DcqeInputs> {
    if parties.is_empty() {
        return Err(Error::Validation("no parties in scope".into()));
    }
    let mut by_institution: BTreeMap<usize, Vec<&PartyBlock>> = BTreeMap::new();
    for block in parties {
        by_institution.entry(block.k).or_default().push(block);
    }
    let mut layout: Option<Vec<usize>> = None;
    for blocks in by_institution.values_mut() {
        blocks.sort_by_key(|b| b.l);
        let ls: Vec<usize> = blocks.iter().map(|b| b.l).collect();
        match &layout {
            None => layout = Some(ls),
            Some(expected) if *expected == ls => {}
            Some(_) => {
                return Err(Error::Validation(
                    "institutions in scope hold different column groups".into(),
                ))
            }
        }
    }

    let mut data_reps = Vec::new();
    let mut anchor_reps = Vec::new();
    let mut outcomes = Vec::new();
    for (&k, blocks) in &by_institution {
        let mut data_parts = Vec::new();
        let mut anchor_parts = Vec::new();
        for block in blocks {
            let &dim = dims.get(&(block.k, block.l)).ok_or_else(|| {
                Error::Config(format!("no reduced dimension for party ({},{})", block.k, block.l))
            })?;
            let reducer = reduce::fit_reducer(&block.x, dim, standardize)?;
            data_parts.push(reducer.apply(&block.x)?);
            let anchor_slice = anchor::slice_anchor(anchor_data, &block.col_indices)?;
            anchor_parts.push(reducer.apply(&anchor_slice)?);
        }
        let ids = blocks[0].ids.clone();
        if blocks.iter().any(|b| b.ids != ids) {
            return Err(Error::Validation(format!(
                "institution {k}: parties disagree on sample ids"
            )));
        }
        data_reps.push((ids, crate::mat::hcat(&data_parts)));
        anchor_reps.push(crate::mat::hcat(&anchor_parts));
        let out = outcomes_of
            .get(&k)
            .ok_or_else(|| Error::Validation(format!("no outcomes for institution {k}")))?;
        outcomes.push((*out).clone());
    }
    Ok(DcqeInputs { data_reps, anchor_reps, outcomes, fused_dim, label: label.to_string() })
}

fn curves_on_dataset(
    dataset: &Dataset,
    matched: &MatchedSet,
) -> Result<(SurvivalCurve, SurvivalCurve)> {
    let ids = matched.matched_ids();
    let positions = dataset.positions_of(&ids)?;
    survival::km_by_group(&ids, &positions, &dataset.time, &dataset.event, &dataset.treat)
}

fn positions_in(ids: &[u64], wanted: &[u64]) -> Result<Vec<usize>> {
    let index: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    wanted
        .iter()
        .map(|id| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Validation(format!("id {id} not present")))
        })
        .collect()
}

/// Per-method metrics of one repetition.
#[derive(Debug, Clone)]
pub struct MethodMetrics {
    pub sample_size: usize,
    pub masmd: f64,
    pub inconsistency: f64,
    pub gap_treated: f64,
    pub gap_control: f64,
}

fn metrics_against_reference(result: &MethodResult, ca: &MethodResult) -> Result<MethodMetrics> {
    let reference = ca.scores.restrict(&result.scores.ids)?;
    Ok(MethodMetrics {
        sample_size: result.sample_size,
        masmd: result.balance.masmd,
        inconsistency: metrics::inconsistency(&result.scores, &reference)?,
        gap_treated: metrics::gap(&result.curves.0, &ca.curves.0),
        gap_control: metrics::gap(&result.curves.1, &ca.curves.1),
    })
}

struct RepOutput {
    metrics: Vec<(String, MethodMetrics)>,
    curves: Vec<(String, Arm, SurvivalCurve)>,
}

/// Everything `run_experiment` produces.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub table: ReportTable,
    pub mean_curves: Vec<MeanCurve>,
    pub metadata: ReportMetadata,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportMetadata {
    pub repetitions: usize,
    pub failed_repetitions: usize,
    pub master_seed: u64,
    pub config_digest: String,
    /// The local-analysis party shown in the table, when local analysis ran.
    pub la_user: Option<[usize; 2]>,
    pub rep_errors: Vec<String>,
}

struct ResolvedPlan {
    base_csv: Option<Dataset>,
    n: usize,
    col_groups: Vec<Vec<usize>>,
    methods: Vec<MethodChoice>,
    la_user: [usize; 2],
    lmca_parties: Vec<[usize; 2]>,
    dcqe_variants: Vec<ResolvedVariant>,
    standardize: bool,
}

struct ResolvedVariant {
    name: String,
    parties: Vec<[usize; 2]>,
    dims: HashMap<(usize, usize), usize>,
    fused_dim: usize,
}

fn expand_scope(scope: Scope, c: usize, d: usize) -> Vec<[usize; 2]> {
    match scope {
        Scope::Left => (0..c).map(|k| [k, 0]).collect(),
        Scope::Top => (0..d).map(|l| [0, l]).collect(),
        Scope::Whole => (0..c).flat_map(|k| (0..d).map(move |l| [k, l])).collect(),
    }
}

fn resolve_plan(config: &ExperimentConfig) -> Result<ResolvedPlan> {
    let c = config.partition.institutions;
    let (base_csv, n, m) = match &config.data {
        DataSource::Synthetic(s) => {
            s.validate()?;
            (None, s.n, synth::NUM_COVARIATES)
        }
        DataSource::Csv { path, schema } => {
            let (dataset, summary) = data::load_csv(path, schema)?;
            if summary.rows_dropped_missing > 0 {
                log::info!(
                    "{}: using {} of {} rows",
                    path.display(),
                    dataset.n(),
                    summary.rows_read
                );
            }
            let (n, m) = (dataset.n(), dataset.m());
            (Some(dataset), n, m)
        }
    };

    let col_groups = match &config.partition.column_groups {
        Some(groups) => groups.clone(),
        None => data::even_groups(m, config.partition.covariate_groups)?,
    };
    let scheme_probe = PartitionScheme::new(
        vec![(0..n).collect()],
        col_groups.clone(),
    )?;
    if scheme_probe.m() != m {
        return Err(Error::Config(format!(
            "column groups cover {} of {m} covariates",
            scheme_probe.m()
        )));
    }
    let d = col_groups.len();

    let methods = config
        .methods
        .clone()
        .unwrap_or_else(|| vec![MethodChoice::Ca, MethodChoice::La, MethodChoice::Lmca, MethodChoice::Dcqe]);

    let la_user = config.la_user.unwrap_or([0, 0]);
    if la_user[0] >= c || la_user[1] >= d {
        return Err(Error::Config(format!(
            "la_user ({},{}) outside the {c}x{d} party grid",
            la_user[0], la_user[1]
        )));
    }

    let lmca_parties = config
        .lmca_parties
        .clone()
        .unwrap_or_else(|| (0..c).map(|k| [k, 0]).collect());
    for &[k, l] in &lmca_parties {
        if k >= c || l >= d {
            return Err(Error::Config(format!("lmca party ({k},{l}) outside the grid")));
        }
    }

    let variant_configs = config.dcqe.clone().unwrap_or_else(|| {
        vec![DcqeVariantConfig { name: "whole".into(), scope: Some(Scope::Whole), parties: None, reduced_dims: None, fused_dim: None }]
    });
    let mut dcqe_variants = Vec::new();
    for vc in &variant_configs {
        let parties = match (&vc.parties, vc.scope) {
            (Some(p), _) => p.clone(),
            (None, Some(scope)) => expand_scope(scope, c, d),
            (None, None) => {
                return Err(Error::Config(format!(
                    "variant '{}' needs a scope or a party list",
                    vc.name
                )))
            }
        };
        let mut seen = BTreeSet::new();
        for &[k, l] in &parties {
            if k >= c || l >= d {
                return Err(Error::Config(format!(
                    "variant '{}': party ({k},{l}) outside the grid",
                    vc.name
                )));
            }
            if !seen.insert((k, l)) {
                return Err(Error::Config(format!(
                    "variant '{}': duplicate party ({k},{l})",
                    vc.name
                )));
            }
        }

        let mut dims = HashMap::new();
        for &[k, l] in &parties {
            let m_l = col_groups[l].len();
            let dim = match &vc.reduced_dims {
                None => m_l.div_ceil(2),
                Some(ReducedDims::Uniform(v)) => *v,
                Some(ReducedDims::PerParty(list)) => list
                    .iter()
                    .find(|pd| pd.k == k && pd.l == l)
                    .map(|pd| pd.dim)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "variant '{}': no dimension for party ({k},{l})",
                            vc.name
                        ))
                    })?,
            };
            if dim == 0 || dim > m_l {
                return Err(Error::Config(format!(
                    "variant '{}': dimension {dim} invalid for a {m_l}-column group",
                    vc.name
                )));
            }
            dims.insert((k, l), dim);
        }

        // fused default: the narrowest institution width in scope
        let mut width_of: BTreeMap<usize, usize> = BTreeMap::new();
        for &[k, l] in &parties {
            *width_of.entry(k).or_insert(0) += dims[&(k, l)];
        }
        let fused_dim = vc.fused_dim.unwrap_or_else(|| *width_of.values().min().unwrap());
        dcqe_variants.push(ResolvedVariant { name: vc.name.clone(), parties, dims, fused_dim });
    }

    let standardize = config
        .standardize
        .unwrap_or(matches!(config.data, DataSource::Csv { .. }));

    Ok(ResolvedPlan {
        base_csv,
        n,
        col_groups,
        methods,
        la_user,
        lmca_parties,
        dcqe_variants,
        standardize,
    })
}

fn run_single_rep(
    config: &ExperimentConfig,
    plan: &ResolvedPlan,
    rep: usize,
) -> Result<RepOutput> {
    let rep_seed = seeding::rep_seed(config.master_seed, rep);
    let dataset = match &config.data {
        DataSource::Synthetic(s) => {
            let mut rep_config = s.clone();
            rep_config.seed = seeding::seed_for(rep_seed, "data");
            synth::generate(&rep_config)?
        }
        DataSource::Csv { .. } => plan.base_csv.clone().expect("csv loaded in plan"),
    };

    let mut rows_rng = seeding::rng_for(rep_seed, "rows");
    let scheme = PartitionScheme::new(
        data::random_row_groups(plan.n, config.partition.institutions, &mut rows_rng)?,
        plan.col_groups.clone(),
    )?;
    let blocks = data::partition(&dataset, &scheme)?;
    let d = scheme.d();
    let block_at = |k: usize, l: usize| -> &PartyBlock { &blocks[k * d + l] };
    let outcomes_of: HashMap<usize, &Outcomes> = (0..scheme.c())
        .map(|k| (k, block_at(k, 0).outcomes.as_ref().expect("outcome holder")))
        .collect();

    let anchor_seed = seeding::seed_for(rep_seed, "anchor");
    let ranges = anchor::ranges_from_dataset(&dataset);
    let anchor_rows = config.anchor_rows.unwrap_or(dataset.n());
    let anchor_data = anchor::generate_anchor(&ranges, anchor_rows, anchor_seed)?;

    let ca = run_ca(&dataset, &config.match_config)?;

    let mut labeled: Vec<(String, MethodResult)> = Vec::new();
    if plan.methods.contains(&MethodChoice::La) {
        let [k, l] = plan.la_user;
        let result = run_la(&dataset, block_at(k, l), outcomes_of[&k], &config.match_config)?;
        labeled.push((result.method.to_string(), result));
    }
    if plan.methods.contains(&MethodChoice::Lmca) {
        let users: Vec<(&PartyBlock, &Outcomes)> = plan
            .lmca_parties
            .iter()
            .map(|&[k, l]| (block_at(k, l), outcomes_of[&k]))
            .collect();
        let result = run_lmca(&dataset, &users, &config.match_config)?;
        labeled.push((result.method.to_string(), result));
    }
    if plan.methods.contains(&MethodChoice::Dcqe) {
        for variant in &plan.dcqe_variants {
            let parties: Vec<&PartyBlock> =
                variant.parties.iter().map(|&[k, l]| block_at(k, l)).collect();
            let result = run_dcqe(
                &dataset,
                &parties,
                &outcomes_of,
                &anchor_data,
                &variant.dims,
                variant.fused_dim,
                plan.standardize,
                &config.match_config,
                &variant.name,
            )?;
            labeled.push((result.method.to_string(), result));
        }
    }
    labeled.push((ca.method.to_string(), ca.clone()));

    let mut metrics_rows = Vec::new();
    let mut curves = Vec::new();
    for (label, result) in &labeled {
        metrics_rows.push((label.clone(), metrics_against_reference(result, &ca)?));
        curves.push((label.clone(), Arm::Treated, result.curves.0.clone()));
        curves.push((label.clone(), Arm::Control, result.curves.1.clone()));
    }
    Ok(RepOutput { metrics: metrics_rows, curves })
}

/// Run the repeated benchmark: every repetition re-derives its seed,
/// regenerates (or re-partitions) the data, runs the requested modes, and
/// measures each against that repetition's central analysis.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentReport> {
    config.validate()?;
    let plan = resolve_plan(config)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<RepOutput>> = pool.install(|| {
        (0..config.repetitions)
            .into_par_iter()
            .map(|rep| run_single_rep(config, &plan, rep))
            .collect()
    });

    let mut rep_errors = Vec::new();
    let mut successes = Vec::new();
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(output) => successes.push(output),
            Err(e) => rep_errors.push(format!("repetition {rep}: {e}")),
        }
    }
    if successes.is_empty() {
        return Err(Error::Data(format!(
            "all repetitions failed; first error: {}",
            rep_errors.first().cloned().unwrap_or_default()
        )));
    }

    // aggregate in the per-rep method order
    let label_order: Vec<String> =
        successes[0].metrics.iter().map(|(label, _)| label.clone()).collect();
    let mut rows = Vec::new();
    for label in &label_order {
        let collect = |f: &dyn Fn(&MethodMetrics) -> f64| -> Vec<f64> {
            successes
                .iter()
                .filter_map(|rep| {
                    rep.metrics.iter().find(|(l, _)| l == label).map(|(_, m)| f(m))
                })
                .collect()
        };
        rows.push(ReportRow {
            method: label.clone(),
            sample_size: MeanSd::from_values(&collect(&|m| m.sample_size as f64)),
            masmd: MeanSd::from_values(&collect(&|m| m.masmd)),
            inconsistency: MeanSd::from_values(&collect(&|m| m.inconsistency)),
            gap_treated: MeanSd::from_values(&collect(&|m| m.gap_treated)),
            gap_control: MeanSd::from_values(&collect(&|m| m.gap_control)),
        });
    }

    let digest = config.digest();
    let table = ReportTable {
        rows,
        repetitions: config.repetitions,
        failed_repetitions: rep_errors.len(),
        config_digest: digest.clone(),
    };

    let mean_curves = build_mean_curves(&label_order, &successes);

    Ok(ExperimentReport {
        table,
        mean_curves,
        metadata: ReportMetadata {
            repetitions: config.repetitions,
            failed_repetitions: rep_errors.len(),
            master_seed: config.master_seed,
            config_digest: digest,
            la_user: plan.methods.contains(&MethodChoice::La).then_some(plan.la_user),
            rep_errors,
        },
    })
}

/// Write the standard experiment output set: metric table (CSV and aligned
/// text), pointwise mean curves, run metadata, and optionally an SVG plot.
pub fn write_report_files(
    report: &ExperimentReport,
    out_dir: &std::path::Path,
    svg: bool,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    report.table.write_csv(&out_dir.join("report.csv"))?;
    std::fs::write(out_dir.join("report.txt"), report.table.to_text())?;
    crate::report::write_mean_curves_csv(&out_dir.join("mean_curves.csv"), &report.mean_curves)?;
    std::fs::write(
        out_dir.join("metadata.json"),
        serde_json::to_string_pretty(&report.metadata)?,
    )?;
    if svg {
        let series: Vec<crate::plot::StepSeries> = report
            .mean_curves
            .iter()
            .enumerate()
            .map(|(i, c)| crate::plot::StepSeries {
                label: if i % 2 == 0 {
                    format!("{} ({})", c.method, c.arm)
                } else {
                    String::new()
                },
                times: &c.times,
                survival: &c.survival,
                color: i / 2,
                dashed: i % 2 == 1,
            })
            .collect();
        std::fs::write(out_dir.join("mean_curves.svg"), crate::plot::step_plot_svg(&series))?;
    }
    Ok(())
}

fn build_mean_curves(label_order: &[String], reps: &[RepOutput]) -> Vec<MeanCurve> {
    const GRID_POINTS: usize = 201;
    let mut out = Vec::new();
    for label in label_order {
        for arm in [Arm::Treated, Arm::Control] {
            let curves: Vec<&SurvivalCurve> = reps
                .iter()
                .flat_map(|rep| {
                    rep.curves
                        .iter()
                        .filter(|(l, a, _)| l == label && *a == arm)
                        .map(|(_, _, c)| c)
                })
                .collect();
            if curves.is_empty() {
                continue;
            }
            let t_max = curves
                .iter()
                .filter_map(|c| c.times.last().copied())
                .fold(0.0f64, f64::max)
                .max(f64::MIN_POSITIVE);
            let times: Vec<f64> = (0..GRID_POINTS)
                .map(|i| t_max * i as f64 / (GRID_POINTS - 1) as f64)
                .collect();
            let survival: Vec<f64> = times
                .iter()
                .map(|&t| {
                    curves.iter().map(|c| c.eval_step(t)).sum::<f64>() / curves.len() as f64
                })
                .collect();
            out.push(MeanCurve { method: label.clone(), arm, times, survival });
        }
    }
    out
}
