//! Acceptance suite: one test per shipped guarantee, each printing a
//! `criterion N: PASS/FAIL` line (run with `--nocapture` to see them all).
//!
//! Criteria 1-5 evaluate the bundled synthetic benchmark config at its
//! pinned seed; criterion 6 needs the user-supplied colon dataset and is
//! skipped (and reported as skipped) when the file is absent. Criteria 7-13
//! are property checks with independent oracles implemented in this file.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use once_cell::sync::Lazy;
use rand::Rng;

use dcsurv::anchor;
use dcsurv::collab::{pseudoinverse, truncated_svd};
use dcsurv::data::{self, PartitionScheme};
use dcsurv::error::Error;
use dcsurv::matching::{caliper_match, MatchConfig};
use dcsurv::metrics;
use dcsurv::pipeline::{self, ExperimentConfig};
use dcsurv::propensity::{self, ScoreSource};
use dcsurv::protocol;
use dcsurv::report::ReportTable;
use dcsurv::seeding;
use dcsurv::survival::{kaplan_meier, Arm};
use dcsurv::synth::{self, SynthConfig};

fn workspace_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn check(criterion: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("acceptance criterion {criterion}: {verdict} - {detail}");
    assert!(pass, "criterion {criterion} failed: {detail}");
}

static EXPERIMENT1: Lazy<ReportTable> = Lazy::new(|| {
    let text = std::fs::read_to_string(workspace_path("configs/experiment1.json"))
        .expect("bundled experiment config");
    let config = ExperimentConfig::from_json(&text).expect("valid config");
    let report = pipeline::run_experiment(&config, None).expect("experiment runs");
    assert_eq!(report.table.failed_repetitions, 0, "no repetition may fail");
    report.table
});

fn row(table: &ReportTable, method: &str) -> (f64, f64, f64, f64, f64) {
    let r = table.row(method).unwrap_or_else(|| panic!("row {method}"));
    (
        r.sample_size.mean,
        r.masmd.mean,
        r.inconsistency.mean,
        r.gap_treated.mean,
        r.gap_control.mean,
    )
}

#[test]
fn criterion_1_central_analysis_balance_and_size() {
    let (size, masmd, _, _, _) = row(&EXPERIMENT1, "CA");
    let pass = (0.08..=0.16).contains(&masmd) && (560.0..=690.0).contains(&size);
    check(
        "1",
        pass,
        &format!("CA mean MASMD {masmd:.4} in [0.08,0.16], matched size {size:.2} in [560,690]"),
    );
}

#[test]
fn criterion_2_local_analysis_brackets() {
    let (_, masmd, incons, _, _) = row(&EXPERIMENT1, "LA(0,0)");
    let pass = (0.14..=0.21).contains(&incons) && (0.55..=0.82).contains(&masmd);
    check(
        "2",
        pass,
        &format!("LA mean inconsistency {incons:.4} in [0.14,0.21], MASMD {masmd:.4} in [0.55,0.82]"),
    );
}

#[test]
fn criterion_3_top_collaboration_inconsistency() {
    let (_, _, incons, _, _) = row(&EXPERIMENT1, "DC-QE(top)");
    check(
        "3",
        (0.03..=0.08).contains(&incons),
        &format!("top-scope mean inconsistency {incons:.4} in [0.03,0.08]"),
    );
}

#[test]
fn criterion_4_whole_collaboration_gaps() {
    let (_, _, _, gap_t, gap_c) = row(&EXPERIMENT1, "DC-QE(whole)");
    check(
        "4",
        gap_t <= 0.05 && gap_c <= 0.045,
        &format!("whole-scope mean gaps treated {gap_t:.4} <= 0.05, control {gap_c:.4} <= 0.045"),
    );
}

#[test]
fn criterion_5_orderings() {
    let la = row(&EXPERIMENT1, "LA(0,0)");
    let top = row(&EXPERIMENT1, "DC-QE(top)");
    let left = row(&EXPERIMENT1, "DC-QE(left)");
    let whole = row(&EXPERIMENT1, "DC-QE(whole)");
    let ca = row(&EXPERIMENT1, "CA");

    let incons_ok = top.2 < whole.2 && whole.2 < left.2 && left.2 < la.2;
    let gap_ok = whole.3 < left.3 && left.3 < top.3 && top.3 < la.3;
    let masmd_ok = ca.1 < whole.1 && whole.1 < la.1;
    println!(
        "  inconsistency chain top<whole<left<LA: {} ({:.4} / {:.4} / {:.4} / {:.4})",
        if incons_ok { "holds" } else { "violated" },
        top.2,
        whole.2,
        left.2,
        la.2
    );
    println!(
        "  gap(treated) chain whole<left<top<LA: {} ({:.4} / {:.4} / {:.4} / {:.4})",
        if gap_ok { "holds" } else { "violated" },
        whole.3,
        left.3,
        top.3,
        la.3
    );
    println!(
        "  MASMD chain CA<whole<LA: {} ({:.4} / {:.4} / {:.4})",
        if masmd_ok { "holds" } else { "violated" },
        ca.1,
        whole.1,
        la.1
    );
    check(
        "5",
        incons_ok && gap_ok && masmd_ok,
        "method orderings across inconsistency, gap(treated), and MASMD",
    );
}

#[test]
fn criterion_6_colon_dataset_if_present() {
    let data_dir = std::env::var("DCSURV_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|_| workspace_path("data"));
    let colon = data_dir.join("colon.csv");
    if !colon.exists() {
        println!(
            "acceptance criterion 6: SKIPPED - {} not present (user-supplied dataset)",
            colon.display()
        );
        return;
    }
    let text = std::fs::read_to_string(workspace_path("configs/experiment2_colon.json")).unwrap();
    let mut config = ExperimentConfig::from_json(&text).unwrap();
    if let pipeline::DataSource::Csv { path, .. } = &mut config.data {
        *path = colon;
    }
    let report = pipeline::run_experiment(&config, None).expect("colon experiment runs");
    assert_eq!(report.table.failed_repetitions, 0);
    let la = row(&report.table, "LA(0,0)");
    let dcqe = row(&report.table, "DC-QE(whole)");
    check(
        "6",
        dcqe.2 < la.2 && dcqe.3 <= la.3,
        &format!(
            "colon: collaborative inconsistency {:.4} < local {:.4}, gap(treated) {:.4} <= {:.4}",
            dcqe.2, la.2, dcqe.3, la.3
        ),
    );
}

/// Product-limit estimate computed directly from its definition by
/// exhaustive risk-set counting; independent of the implementation.
fn km_oracle(times: &[f64], events: &[u8], t: f64) -> f64 {
    let mut event_times: Vec<f64> = times
        .iter()
        .zip(events)
        .filter(|(_, &e)| e == 1)
        .map(|(&ti, _)| ti)
        .collect();
    event_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    event_times.dedup();
    let mut s = 1.0;
    for &ti in event_times.iter().filter(|&&ti| ti <= t) {
        let d = times.iter().zip(events).filter(|(&tj, &e)| tj == ti && e == 1).count();
        let n = times.iter().filter(|&&tj| tj >= ti).count();
        s *= 1.0 - d as f64 / n as f64;
    }
    s
}

#[test]
fn criterion_7_kaplan_meier_exhaustive_oracle() {
    let layouts: [&[f64]; 4] = [
        &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
        &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0],
        &[2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0],
        &[0.0, 1.0, 1.0, 1.0, 2.0, 5.0, 5.0, 9.0],
    ];
    let probes = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.5, 5.0, 8.0, 100.0];
    let mut cases = 0usize;
    for n in 1..=8usize {
        for layout in layouts {
            let times = &layout[..n];
            for pattern in 0u32..(1 << n) {
                let events: Vec<u8> = (0..n).map(|i| ((pattern >> i) & 1) as u8).collect();
                let subset: Vec<usize> = (0..n).collect();
                let curve = kaplan_meier(times, &events, &subset, Arm::Treated).unwrap();
                for &t in &probes {
                    let got = curve.eval_step(t);
                    let want = km_oracle(times, &events, t);
                    assert!(
                        (got - want).abs() < 1e-12,
                        "n={n} pattern={pattern:b} t={t}: {got} vs {want}"
                    );
                }
                cases += 1;
            }
        }
    }
    check("7", true, &format!("{cases} exhaustive event/censor patterns match the oracle at 1e-12"));
}

#[test]
fn criterion_8_degenerate_equivalence() {
    let dataset = synth::generate(&SynthConfig { n: 500, seed: 2024, ..Default::default() }).unwrap();
    let scheme = PartitionScheme::single(500, 6).unwrap();
    let blocks = data::partition(&dataset, &scheme).unwrap();
    let outcomes_of = HashMap::from([(0usize, blocks[0].outcomes.as_ref().unwrap())]);
    let anchor_data = anchor::generate_anchor(
        &anchor::ranges_from_dataset(&dataset),
        500,
        seeding::seed_for(2024, "anchor"),
    )
    .unwrap();
    let dims = HashMap::from([((0usize, 0usize), 6usize)]);
    let ca = pipeline::run_ca(&dataset, &MatchConfig::default()).unwrap();
    let dcqe = pipeline::run_dcqe(
        &dataset,
        &[&blocks[0]],
        &outcomes_of,
        &anchor_data,
        &dims,
        6,
        false,
        &MatchConfig::default(),
        "degenerate",
    )
    .unwrap();
    let max_diff = dcqe
        .scores
        .scores
        .iter()
        .zip(&ca.scores.scores)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let gap_t = metrics::gap(&dcqe.curves.0, &ca.curves.0);
    let gap_c = metrics::gap(&dcqe.curves.1, &ca.curves.1);
    check(
        "8",
        max_diff <= 1e-6 && gap_t == 0.0 && gap_c == 0.0,
        &format!("full-rank single-party fusion: max score diff {max_diff:.2e} <= 1e-6, gaps {gap_t}/{gap_c}"),
    );
}

#[test]
fn criterion_9_logistic_invariance_and_gradient() {
    let mut rng = seeding::rng_for(99, "acceptance-logistic");
    let n = 300;
    let x = DMatrix::from_fn(n, 3, |_, _| rng.gen_range(-1.5..1.5));
    let z: Vec<u8> = (0..n)
        .map(|i| {
            let eta: f64 = 0.4 + 0.9 * x.row(i).iter().sum::<f64>();
            u8::from(rng.gen::<f64>() < 1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    let ids: Vec<u64> = (0..n as u64).collect();

    let base = propensity::fit_logistic(&x, &z).unwrap();
    let p0 = propensity::score(&base, &x, &ids, ScoreSource::Central).unwrap();

    // invertible affine map of the features
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[1.2, 0.3, -0.4, 0.0, -0.8, 0.5, 0.2, 0.1, 1.1],
    );
    let shift = [3.0, -1.0, 0.25];
    let mut mapped = &x * &a;
    for i in 0..n {
        for j in 0..3 {
            mapped[(i, j)] += shift[j];
        }
    }
    let refit = propensity::fit_logistic(&mapped, &z).unwrap();
    let p1 = propensity::score(&refit, &mapped, &ids, ScoreSource::Central).unwrap();
    let max_diff = p0
        .scores
        .iter()
        .zip(&p1.scores)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);

    // analytic gradient at an arbitrary point vs central finite differences
    // of an independently coded log-likelihood
    let ll = |beta: &[f64]| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let mut eta = beta[0];
            for j in 0..3 {
                eta += beta[j + 1] * x[(i, j)];
            }
            let p = 1.0 / (1.0 + (-eta).exp());
            total += if z[i] == 1 { p.ln() } else { (1.0 - p).ln() };
        }
        total
    };
    let beta = [0.1, -0.3, 0.6, 0.2];
    let h = 1e-6;
    let mut worst_rel: f64 = 0.0;
    for j in 0..4 {
        let mut up = beta;
        let mut down = beta;
        up[j] += h;
        down[j] -= h;
        let numeric = (ll(&up) - ll(&down)) / (2.0 * h);
        let mut analytic = 0.0;
        for i in 0..n {
            let mut eta = beta[0];
            for c in 0..3 {
                eta += beta[c + 1] * x[(i, c)];
            }
            let p = 1.0 / (1.0 + (-eta).exp());
            let d = if j == 0 { 1.0 } else { x[(i, j - 1)] };
            analytic += d * (f64::from(z[i]) - p);
        }
        worst_rel = worst_rel.max((numeric - analytic).abs() / analytic.abs().max(1.0));
    }

    check(
        "9",
        max_diff <= 1e-6 && worst_rel <= 1e-4,
        &format!("affine-map score shift {max_diff:.2e} <= 1e-6; gradient FD mismatch {worst_rel:.2e} <= 1e-4"),
    );
}

#[test]
fn criterion_10_matching_audit() {
    let mut rng = seeding::rng_for(5, "acceptance-matching");
    let mut audited = 0usize;
    for case in 0..50 {
        let n = rng.gen_range(10..120);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.02..0.98)).collect();
        let z: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.5)).collect();
        let treated: usize = z.iter().map(|&v| usize::from(v)).sum();
        if treated == 0 || treated == n {
            continue;
        }
        let s = propensity::PropensityScores {
            ids: (0..n as u64).collect(),
            scores,
            source: ScoreSource::Central,
        };
        let m = caliper_match(&s, &z, &MatchConfig::default()).unwrap();
        let logits = propensity::logit(&s.scores).unwrap();

        for &(t, c) in &m.pairs {
            let gap = (logits[t as usize] - logits[c as usize]).abs();
            assert!(gap <= m.caliper_width + 1e-12, "case {case}: pair outside caliper");
        }
        let ids = m.matched_ids();
        let unique: std::collections::HashSet<_> = ids.iter().collect();
        assert_eq!(unique.len(), ids.len(), "case {case}: id reused");

        // greedy replay in descending-score order
        let mut order: Vec<usize> = (0..n).filter(|&i| z[i] == 1).collect();
        order.sort_by(|&a, &b| {
            s.scores[b].partial_cmp(&s.scores[a]).unwrap().then(a.cmp(&b))
        });
        let mut used = vec![false; n];
        let mut pairs = m.pairs.iter().peekable();
        for &t in &order {
            let available: Vec<usize> = (0..n).filter(|&c| z[c] == 0 && !used[c]).collect();
            let best = available
                .iter()
                .map(|&c| (logits[t] - logits[c]).abs())
                .fold(f64::INFINITY, f64::min);
            match pairs.peek() {
                Some(&&(pt, pc)) if pt == t as u64 => {
                    pairs.next();
                    let dist = (logits[t] - logits[pc as usize]).abs();
                    assert!(dist <= best + 1e-12, "case {case}: closer control was available");
                    used[pc as usize] = true;
                }
                _ => assert!(
                    best > m.caliper_width - 1e-12,
                    "case {case}: skipped treated had an in-caliper control"
                ),
            }
        }
        assert_eq!(m, caliper_match(&s, &z, &MatchConfig::default()).unwrap());
        audited += 1;
    }
    check("10", audited > 30, &format!("{audited} random matchings audited (caliper, uniqueness, greedy replay)"));
}

/// Singular values by cyclic Jacobi on `A^T A`; the acceptance oracle for
/// the truncation-error identity.
fn jacobi_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s = a.transpose() * a;
    let n = s.nrows();
    let frob = s.norm().max(1e-300);
    for _ in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += s[(p, q)] * s[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * frob {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if s[(p, q)].abs() <= 1e-300 {
                    continue;
                }
                let tau = (s[(q, q)] - s[(p, p)]) / (2.0 * s[(p, q)]);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for i in 0..n {
                    let sip = s[(i, p)];
                    let siq = s[(i, q)];
                    s[(i, p)] = c * sip - sn * siq;
                    s[(i, q)] = sn * sip + c * siq;
                }
                for j in 0..n {
                    let spj = s[(p, j)];
                    let sqj = s[(q, j)];
                    s[(p, j)] = c * spj - sn * sqj;
                    s[(q, j)] = sn * spj + c * sqj;
                }
            }
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|i| s[(i, i)].max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

#[test]
fn criterion_11_linear_algebra_contracts() {
    let mut rng = seeding::rng_for(6, "acceptance-linalg");
    let mut penrose_checked = 0;
    let mut eckart_checked = 0;
    for _ in 0..12 {
        let rows = rng.gen_range(2..=50usize);
        let cols = rng.gen_range(2..=50usize);
        let a = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0f64));

        // Penrose conditions at relative 1e-8
        let p = pseudoinverse(&a, None);
        let scale = a.norm();
        assert!((&a * &p * &a - &a).norm() <= 1e-8 * scale);
        assert!((&p * &a * &p - &p).norm() <= 1e-8 * p.norm());
        let ap = &a * &p;
        let pa = &p * &a;
        assert!((&ap - ap.transpose()).norm() <= 1e-8 * scale.max(1.0));
        assert!((&pa - pa.transpose()).norm() <= 1e-8 * scale.max(1.0));
        penrose_checked += 1;

        // Eckart-Young truncation error against the independent oracle
        let max_rank = rows.min(cols);
        let rank = rng.gen_range(1..=max_rank);
        let (u, s, v) = truncated_svd(&a, rank).unwrap();
        let recon = &u * DMatrix::from_diagonal(&s) * v.transpose();
        let err = (&a - recon).norm();
        let sv = jacobi_singular_values(&a);
        let expected: f64 = sv[rank..].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(
            (err - expected).abs() <= 1e-8 * scale.max(1.0),
            "{rows}x{cols} rank {rank}: err {err} vs {expected}"
        );
        eckart_checked += 1;
    }
    // a rank-deficient case as well
    let basis = DMatrix::from_fn(40, 3, |_, _| rng.gen_range(-1.0..1.0f64));
    let mix = DMatrix::from_fn(3, 8, |_, _| rng.gen_range(-1.0..1.0f64));
    let deficient = &basis * mix;
    let p = pseudoinverse(&deficient, None);
    assert!((&deficient * &p * &deficient - &deficient).norm() <= 1e-8 * deficient.norm());
    check(
        "11",
        true,
        &format!("{penrose_checked} Penrose checks and {eckart_checked} truncation-error checks up to 50x50"),
    );
}

#[test]
fn criterion_12_experiment_determinism() {
    let exe = env!("CARGO_BIN_EXE_dcsurv");
    let config = workspace_path("configs/experiment1_smoke.json");
    let text = std::fs::read_to_string(&config).unwrap();
    let mut parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    parsed["repetitions"] = serde_json::json!(4);
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("config.json");
    std::fs::write(&config_path, serde_json::to_string(&parsed).unwrap()).unwrap();

    let run = |out: &Path, workers: &str| {
        let status = std::process::Command::new(exe)
            .args([
                "experiment",
                "--config",
                config_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--workers",
                workers,
                "--svg",
            ])
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
    };
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    run(&out_a, "1");
    run(&out_b, "4");

    let mut names: Vec<String> = std::fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().to_string())
        .collect();
    names.sort();
    assert!(names.contains(&"report.csv".to_string()));
    for name in &names {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
    check(
        "12",
        true,
        &format!("two runs (1 vs 4 workers) produced byte-identical {names:?}"),
    );
}

#[test]
fn criterion_13_privacy_audit() {
    let dataset = synth::generate(&SynthConfig { n: 160, seed: 31, ..Default::default() }).unwrap();
    let mut rng = seeding::rng_for(31, "rows");
    let scheme = PartitionScheme::new(
        data::random_row_groups(160, 2, &mut rng).unwrap(),
        data::even_groups(6, 2).unwrap(),
    )
    .unwrap();
    let private = tempfile::tempdir().unwrap();
    let exchange = tempfile::tempdir().unwrap();
    protocol::split_to_private_dir(&dataset, &scheme, private.path(), false).unwrap();
    protocol::publish_anchor(
        exchange.path(),
        &anchor::ranges_from_dataset(&dataset),
        160,
        7,
    )
    .unwrap();
    for k in 0..2 {
        for l in 0..2 {
            let config = protocol::PartyConfig {
                k,
                l,
                col_indices: scheme.col_groups[l].clone(),
                target_dim: 2,
                standardize: false,
                outcome_holder: l == 0,
            };
            let outcomes = (l == 0)
                .then(|| private.path().join(format!("institution_{k}.outcomes.csv")));
            protocol::user_encode(
                exchange.path(),
                &config,
                &private.path().join(format!("party_{k}_{l}.csv")),
                outcomes.as_deref(),
            )
            .unwrap();
        }
    }

    protocol::audit(exchange.path()).unwrap();
    let manifest = protocol::load_manifest(exchange.path()).unwrap();
    for p in &manifest.parties {
        assert!(p.reduced_dim < p.original_dim);
    }
    // no file in the exchange may carry a party's full covariate width, and
    // no reducer serialization may exist anywhere on disk
    for entry in std::fs::read_dir(exchange.path()).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().to_string();
        assert!(!name.contains("reducer"), "unexpected file {name}");
        if name.starts_with("party_") && name.ends_with(".data.csv") {
            let mut r = csv::Reader::from_path(entry.path()).unwrap();
            let width = r.headers().unwrap().len() - 1; // id column
            assert!(width < 3, "{name} exposes {width} columns");
        }
    }

    // a full-width share must be refused outright
    let bad = protocol::PartyConfig {
        k: 0,
        l: 0,
        col_indices: scheme.col_groups[0].clone(),
        target_dim: 3,
        standardize: false,
        outcome_holder: false,
    };
    let err = protocol::user_encode(
        exchange.path(),
        &bad,
        &private.path().join("party_0_0.csv"),
        None,
    );
    assert!(matches!(err, Err(Error::Privacy(_))));
    check(
        "13",
        true,
        "exchange holds only reduced matrices, audit passes, full-width share refused",
    );
}
