//! File-based realization of the two-role protocol.
//!
//! Parties and the analyst exchange nothing but files in a shared directory:
//! the anchor pair, one reduced data matrix and one reduced anchor matrix
//! per party, and one outcome table per institution. A manifest records
//! every file with its SHA-256 digest plus each party's declared original
//! and reduced dimension, which makes the privacy constraint auditable from
//! the directory alone: no raw covariate block, no reducer, and no matrix
//! wider than declared may appear.
//!
//! The analyst side feeds the loaded matrices into the same estimation code
//! the in-process benchmark uses; because numeric files round-trip floats
//! bit-exactly, both routes produce identical results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anchor;
use crate::csvio;
use crate::data::{Dataset, Outcomes, PartitionScheme};
use crate::error::{Error, Result};
use crate::matching::MatchConfig;
use crate::numfmt::fmt_f64;
use crate::pipeline::{dcqe_analyze, DcqeInputs};
use crate::plot;
use crate::reduce;
use crate::survival::write_curves_csv;

pub const MANIFEST_FILE: &str = "manifest.json";

/// One party's user-side configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartyConfig {
    pub k: usize,
    pub l: usize,
    /// Global covariate indices of this party's columns, used to slice the
    /// shared anchor.
    pub col_indices: Vec<usize>,
    /// Reduced dimension; must be strictly below the party's column count.
    pub target_dim: usize,
    #[serde(default)]
    pub standardize: bool,
    /// Whether this party also shares its institution's outcome table.
    #[serde(default)]
    pub outcome_holder: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestAnchor {
    pub file: String,
    pub meta_file: String,
    pub digest: String,
    pub meta_digest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestParty {
    pub k: usize,
    pub l: usize,
    pub data_file: String,
    pub anchor_file: String,
    pub data_digest: String,
    pub anchor_digest: String,
    pub original_dim: usize,
    pub reduced_dim: usize,
    pub col_indices: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestOutcomes {
    pub k: usize,
    pub file: String,
    pub digest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct Manifest {
    pub anchor: Option<ManifestAnchor>,
    pub parties: Vec<ManifestParty>,
    pub outcomes: Vec<ManifestOutcomes>,
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex::encode(hasher.finalize()))
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(Manifest::default());
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn save_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}

/// Generate the shared anchor into the exchange directory and record it in
/// the manifest.
pub fn publish_anchor(dir: &Path, ranges: &[(f64, f64)], rows: usize, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let anchor_data = anchor::generate_anchor(ranges, rows, seed)?;
    anchor::write_anchor_files(&anchor_data, dir)?;
    let mut manifest = load_manifest(dir)?;
    manifest.anchor = Some(ManifestAnchor {
        file: "anchor.csv".into(),
        meta_file: "anchor.meta.json".into(),
        digest: file_digest(&dir.join("anchor.csv"))?,
        meta_digest: file_digest(&dir.join("anchor.meta.json"))?,
    });
    save_manifest(dir, &manifest)
}

fn read_outcomes_csv(path: &Path) -> Result<(Vec<u64>, Outcomes)> {
    let (ids, header, m) = csvio::read_ids_matrix(path)?;
    if header != ["time", "event", "treat"] {
        return Err(Error::Data(format!(
            "{}: expected columns id,time,event,treat",
            path.display()
        )));
    }
    let flag = |v: f64, what: &str| -> Result<u8> {
        if v == 0.0 || v == 1.0 {
            Ok(v as u8)
        } else {
            Err(Error::Data(format!("{}: {what} must be 0/1, got {v}", path.display())))
        }
    };
    let mut outcomes =
        Outcomes { time: Vec::with_capacity(ids.len()), event: Vec::new(), treat: Vec::new() };
    for i in 0..ids.len() {
        outcomes.time.push(m[(i, 0)]);
        outcomes.event.push(flag(m[(i, 1)], "event")?);
        outcomes.treat.push(flag(m[(i, 2)], "treat")?);
    }
    Ok((ids, outcomes))
}

pub fn write_outcomes_csv(path: &Path, ids: &[u64], outcomes: &Outcomes) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "time", "event", "treat"])?;
    for (i, id) in ids.iter().enumerate() {
        w.write_record([
            id.to_string(),
            fmt_f64(outcomes.time[i]),
            outcomes.event[i].to_string(),
            outcomes.treat[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// User-side encode: fit the private reducer on the party's raw block, write
/// the reduced data and reduced anchor into the exchange directory, and (for
/// the outcome holder) the institution's outcome table. The reducer itself
/// and the raw block never leave this function.
pub fn user_encode(
    exchange_dir: &Path,
    party: &PartyConfig,
    data_csv: &Path,
    outcomes_csv: Option<&Path>,
) -> Result<()> {
    let anchor_data = anchor::read_anchor_files(exchange_dir)?;
    let (ids, _names, x) = csvio::read_ids_matrix(data_csv)?;
    let m_l = x.ncols();
    if party.col_indices.len() != m_l {
        return Err(Error::Config(format!(
            "party ({},{}): {} anchor columns declared for {} data columns",
            party.k,
            party.l,
            party.col_indices.len(),
            m_l
        )));
    }
    if party.target_dim >= m_l {
        return Err(Error::Privacy(format!(
            "party ({},{}): reduced dimension {} must be strictly below the {} covariates",
            party.k, party.l, party.target_dim, m_l
        )));
    }

    let reducer = reduce::fit_reducer(&x, party.target_dim, party.standardize)?;
    let data_rep = reducer.apply(&x)?;
    let anchor_slice = anchor::slice_anchor(&anchor_data, &party.col_indices)?;
    let anchor_rep = reducer.apply(&anchor_slice)?;

    let data_file = format!("party_{}_{}.data.csv", party.k, party.l);
    let anchor_file = format!("party_{}_{}.anchor.csv", party.k, party.l);
    let rep_header: Vec<String> = (1..=party.target_dim).map(|j| format!("r{j}")).collect();
    csvio::write_ids_matrix(&exchange_dir.join(&data_file), &ids, &rep_header, &data_rep)?;
    csvio::write_matrix(&exchange_dir.join(&anchor_file), &rep_header, &anchor_rep)?;

    let mut manifest = load_manifest(exchange_dir)?;
    manifest.parties.retain(|p| !(p.k == party.k && p.l == party.l));
    manifest.parties.push(ManifestParty {
        k: party.k,
        l: party.l,
        data_digest: file_digest(&exchange_dir.join(&data_file))?,
        anchor_digest: file_digest(&exchange_dir.join(&anchor_file))?,
        data_file,
        anchor_file,
        original_dim: m_l,
        reduced_dim: party.target_dim,
        col_indices: party.col_indices.clone(),
    });
    manifest.parties.sort_by_key(|p| (p.k, p.l));

    if party.outcome_holder {
        let outcomes_path = outcomes_csv.ok_or_else(|| {
            Error::Config(format!(
                "party ({},{}) is the outcome holder but no outcome table was given",
                party.k, party.l
            ))
        })?;
        let (outcome_ids, outcomes) = read_outcomes_csv(outcomes_path)?;
        if outcome_ids != ids {
            return Err(Error::Validation(format!(
                "party ({},{}): outcome ids do not match the data block",
                party.k, party.l
            )));
        }
        let file = format!("party_{}.outcomes.csv", party.k);
        write_outcomes_csv(&exchange_dir.join(&file), &outcome_ids, &outcomes)?;
        manifest.outcomes.retain(|o| o.k != party.k);
        manifest.outcomes.push(ManifestOutcomes {
            k: party.k,
            digest: file_digest(&exchange_dir.join(&file))?,
            file,
        });
        manifest.outcomes.sort_by_key(|o| o.k);
    }
    save_manifest(exchange_dir, &manifest)
}

/// What the audit verified.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub files_checked: usize,
    pub parties: usize,
}

/// Verify the exchange directory against its manifest: digests match, every
/// party's matrices have exactly the declared reduced width, the reduced
/// width is strictly below the declared original width, and no undeclared
/// file is present.
pub fn audit(dir: &Path) -> Result<AuditReport> {
    let manifest = load_manifest(dir)?;
    let mut declared: Vec<String> = vec![MANIFEST_FILE.to_string()];
    let mut files_checked = 0;

    let check = |file: &str, digest: &str| -> Result<()> {
        let path = dir.join(file);
        if !path.exists() {
            return Err(Error::Integrity(format!("{file} is listed but missing")));
        }
        let actual = file_digest(&path)?;
        if actual != digest {
            return Err(Error::Integrity(format!("{file}: digest mismatch")));
        }
        Ok(())
    };

    if let Some(a) = &manifest.anchor {
        check(&a.file, &a.digest)?;
        check(&a.meta_file, &a.meta_digest)?;
        declared.push(a.file.clone());
        declared.push(a.meta_file.clone());
        files_checked += 2;
    }
    for p in &manifest.parties {
        check(&p.data_file, &p.data_digest)?;
        check(&p.anchor_file, &p.anchor_digest)?;
        declared.push(p.data_file.clone());
        declared.push(p.anchor_file.clone());
        files_checked += 2;

        if p.reduced_dim >= p.original_dim {
            return Err(Error::Privacy(format!(
                "party ({},{}): declared reduced dimension {} is not below original {}",
                p.k, p.l, p.reduced_dim, p.original_dim
            )));
        }
        let (_, _, data) = csvio::read_ids_matrix(&dir.join(&p.data_file))?;
        if data.ncols() != p.reduced_dim {
            return Err(Error::Privacy(format!(
                "{}: {} columns, declared reduced dimension is {}",
                p.data_file,
                data.ncols(),
                p.reduced_dim
            )));
        }
        let (_, anchor_rep) = csvio::read_matrix(&dir.join(&p.anchor_file))?;
        if anchor_rep.ncols() != p.reduced_dim {
            return Err(Error::Privacy(format!(
                "{}: {} columns, declared reduced dimension is {}",
                p.anchor_file,
                anchor_rep.ncols(),
                p.reduced_dim
            )));
        }
    }
    for o in &manifest.outcomes {
        check(&o.file, &o.digest)?;
        declared.push(o.file.clone());
        files_checked += 1;
    }

    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().to_string();
        if !declared.contains(&name) {
            return Err(Error::Integrity(format!("undeclared file in exchange: {name}")));
        }
    }
    Ok(AuditReport { files_checked, parties: manifest.parties.len() })
}

/// Analyst-side run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Parties whose shares enter the fusion.
    pub parties: Vec<[usize; 2]>,
    /// Fused dimension; defaults to the narrowest institution width.
    #[serde(default)]
    pub fused_dim: Option<usize>,
    #[serde(default, rename = "match")]
    pub match_config: MatchConfig,
    #[serde(default)]
    pub label: Option<String>,
    /// Also write the fused representation (audit/debug aid).
    #[serde(default)]
    pub emit_collab: bool,
    /// Also write matched pairs with their logit gaps.
    #[serde(default)]
    pub emit_pairs: bool,
    /// Also render the curves as an SVG step plot.
    #[serde(default)]
    pub emit_svg: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisSummary {
    pub label: String,
    pub samples: usize,
    pub fused_dim: usize,
    pub caliper_width: f64,
    pub matched_sample_size: usize,
}

/// Analyst-side run: verify the exchange, assemble per-institution inputs,
/// estimate, and write curves plus a summary into `out_dir`.
pub fn analyst_run(
    exchange_dir: &Path,
    config: &AnalysisConfig,
    out_dir: &Path,
) -> Result<AnalysisSummary> {
    audit(exchange_dir)?;
    let manifest = load_manifest(exchange_dir)?;

    let mut missing = Vec::new();
    let mut selected: BTreeMap<usize, Vec<&ManifestParty>> = BTreeMap::new();
    for &[k, l] in &config.parties {
        match manifest.parties.iter().find(|p| p.k == k && p.l == l) {
            Some(p) => selected.entry(k).or_default().push(p),
            None => missing.push(format!("({k},{l})")),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "exchange is missing party shares: {}",
            missing.join(", ")
        )));
    }

    let mut data_reps = Vec::new();
    let mut anchor_reps = Vec::new();
    let mut outcomes = Vec::new();
    let mut widths = Vec::new();
    for (k, parties) in &mut selected {
        parties.sort_by_key(|p| p.l);
        let mut ids: Option<Vec<u64>> = None;
        let mut data_parts = Vec::new();
        let mut anchor_parts = Vec::new();
        for p in parties.iter() {
            let (part_ids, _, data) = csvio::read_ids_matrix(&exchange_dir.join(&p.data_file))?;
            match &ids {
                None => ids = Some(part_ids),
                Some(expected) if *expected == part_ids => {}
                Some(_) => {
                    return Err(Error::Integrity(format!(
                        "institution {k}: parties disagree on sample ids"
                    )))
                }
            }
            let (_, anchor_rep) = csvio::read_matrix(&exchange_dir.join(&p.anchor_file))?;
            data_parts.push(data);
            anchor_parts.push(anchor_rep);
        }
        let entry = manifest
            .outcomes
            .iter()
            .find(|o| o.k == *k)
            .ok_or_else(|| Error::Data(format!("no outcome table for institution {k}")))?;
        let (outcome_ids, out) = read_outcomes_csv(&exchange_dir.join(&entry.file))?;
        let ids = ids.expect("at least one party per institution");
        if outcome_ids != ids {
            return Err(Error::Integrity(format!(
                "institution {k}: outcome ids do not match the data shares"
            )));
        }
        let data_rep = crate::mat::hcat(&data_parts);
        widths.push(data_rep.ncols());
        data_reps.push((ids, data_rep));
        anchor_reps.push(crate::mat::hcat(&anchor_parts));
        outcomes.push(out);
    }

    let fused_dim = config.fused_dim.unwrap_or_else(|| *widths.iter().min().unwrap());
    let label = config.label.clone().unwrap_or_else(|| "dcqe".to_string());
    let inputs = DcqeInputs {
        data_reps,
        anchor_reps,
        outcomes,
        fused_dim,
        label: label.clone(),
    };
    let samples: usize = inputs.data_reps.iter().map(|(ids, _)| ids.len()).sum();
    let (scores, matched, curves) = dcqe_analyze(&inputs, &config.match_config)?;

    std::fs::create_dir_all(out_dir)?;
    write_curves_csv(&out_dir.join("curves.csv"), &[&curves.0, &curves.1])?;
    if config.emit_collab {
        let transforms = crate::collab::build_collab_transforms(&inputs.anchor_reps, fused_dim)?;
        let fused = crate::collab::build_collab_representation(&inputs.data_reps, &transforms)?;
        let header: Vec<String> = (1..=fused_dim).map(|j| format!("c{j}")).collect();
        csvio::write_ids_matrix(&out_dir.join("collab.csv"), &fused.ids, &header, &fused.x_check)?;
    }
    if config.emit_pairs {
        write_pairs_csv(&out_dir.join("pairs.csv"), &scores, &matched)?;
    }
    if config.emit_svg {
        let svg = plot::curves_svg(&[(label.clone(), &curves.0, &curves.1)]);
        std::fs::write(out_dir.join("curves.svg"), svg)?;
    }
    let summary = AnalysisSummary {
        label,
        samples,
        fused_dim,
        caliper_width: matched.caliper_width,
        matched_sample_size: matched.sample_size(),
    };
    std::fs::write(
        out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

fn write_pairs_csv(
    path: &Path,
    scores: &crate::propensity::PropensityScores,
    matched: &crate::matching::MatchedSet,
) -> Result<()> {
    let logits = crate::propensity::logit(&scores.scores)?;
    let index: std::collections::HashMap<u64, usize> =
        scores.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["treated_id", "control_id", "logit_gap"])?;
    for &(t, c) in &matched.pairs {
        let gap = (logits[index[&t]] - logits[index[&c]]).abs();
        w.write_record([t.to_string(), c.to_string(), fmt_f64(gap)])?;
    }
    w.flush()?;
    Ok(())
}

/// Simulation helper: write each party's raw block (and each institution's
/// outcome table) into a private directory, plus ready-to-edit party
/// configs. These are the files institutions would already hold; only
/// `user_encode` outputs belong in the exchange directory.
pub fn split_to_private_dir(
    dataset: &Dataset,
    scheme: &PartitionScheme,
    dir: &Path,
    standardize: bool,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let blocks = crate::data::partition(dataset, scheme)?;
    let mut written = Vec::new();
    for block in &blocks {
        let data_path = dir.join(format!("party_{}_{}.csv", block.k, block.l));
        let names: Vec<String> =
            block.col_indices.iter().map(|&c| dataset.covariate_names[c].clone()).collect();
        csvio::write_ids_matrix(&data_path, &block.ids, &names, &block.x)?;
        written.push(data_path);

        let config = PartyConfig {
            k: block.k,
            l: block.l,
            col_indices: block.col_indices.clone(),
            target_dim: (block.m() / 2).max(1),
            standardize,
            outcome_holder: block.outcomes.is_some(),
        };
        let config_path = dir.join(format!("party_{}_{}.config.json", block.k, block.l));
        std::fs::write(&config_path, serde_json::to_string_pretty(&config)?)?;
        written.push(config_path);

        if let Some(outcomes) = &block.outcomes {
            let path = dir.join(format!("institution_{}.outcomes.csv", block.k));
            write_outcomes_csv(&path, &block.ids, outcomes)?;
            written.push(path);
        }
    }
    Ok(written)
}
