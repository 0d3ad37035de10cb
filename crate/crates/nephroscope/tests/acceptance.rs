//! Acceptance gate: one PASS/FAIL line per primary criterion.
//!
//! Runs without the libtest harness so the verdict lines always reach the
//! terminal. Exits non-zero when any criterion fails.
//!
//! The real cohort is used when `NEPHROSCOPE_CKD_CSV` or `data/ckd.csv`
//! exists; otherwise the dataset-dependent criteria run against the
//! bundled synthetic generator and say so in their detail text.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use nephroscope::commands::{self, TrainArtifacts, MODEL_FILE, TRAIN_REPORT_JSON, TRAIN_REPORT_TEXT};
use nephroscope::config::AppConfig;
use nephroscope::csv_io::write_dataset;
use nephroscope::suite::default_suite;
use nephroscope_core::anchors::{induce_anchor, AnchorConfig, PerturbationSpace};
use nephroscope_core::data::{Dataset, PatientRecord, Provenance};
use nephroscope_core::dependence::{pd_curve, PdGrid};
use nephroscope_core::evaluation::{roc_auc, spearman};
use nephroscope_core::learners::{ForestModel, LearnerKind, Node, Tree};
use nephroscope_core::local::{find_counterfactual, DistanceConfig};
use nephroscope_core::resample::{smote_nc_traced, ResampleConfig};
use nephroscope_core::safety::run_suite;
use nephroscope_core::shap::{attribute, attribute_oracle, background_rows, global_summary, ShapConfig};
use nephroscope_core::synth::{generate, SynthConfig};
use nephroscope_core::{Class, Classifier, FeatureKind, FeatureSchema, FeatureSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- shared run

struct Trained {
    dir: tempfile::TempDir,
    second: tempfile::TempDir,
    art: TrainArtifacts,
    real_data: bool,
}

fn real_csv() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("NEPHROSCOPE_CKD_CSV") {
        return Some(PathBuf::from(p));
    }
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ckd.csv");
    p.exists().then_some(p)
}

/// Two default trainings on identical inputs; the first serves every
/// dataset-dependent criterion.
fn trained() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let second = tempfile::tempdir().unwrap();
        let cfg = AppConfig::default();
        let (data, real_data) = match real_csv() {
            Some(p) => (p, true),
            None => {
                let p = dir.path().join("synthetic.csv");
                write_dataset(&p, &generate(&SynthConfig::default()).unwrap().dataset).unwrap();
                (p, false)
            }
        };
        let art = commands::train(&data, &cfg, &dir.path().join("a")).unwrap();
        commands::train(&data, &cfg, &second.path().join("b")).unwrap();
        Trained {
            dir,
            second,
            art,
            real_data,
        }
    })
}

fn source(t: &Trained) -> &'static str {
    if t.real_data {
        "cohort CSV"
    } else {
        "synthetic cohort"
    }
}

// ------------------------------------------------------------ 1. additivity

fn random_instance(schema: &FeatureSchema, rng: &mut ChaCha8Rng) -> Vec<f64> {
    schema
        .specs()
        .iter()
        .map(|s| match s.kind {
            FeatureKind::Binary => rng.random_range(0..2) as f64,
            FeatureKind::Numeric => rng.random::<f64>(),
        })
        .collect()
}

fn shapley_additivity() -> Outcome {
    let t = trained();
    let out = &t.art.outcome;
    let cfg = ShapConfig::default();
    let bg = background_rows(&out.train, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut bad = 0;
    for _ in 0..500 {
        let x = random_instance(&out.train.schema, &mut rng);
        let a = attribute(&out.champion, &x, &bg, &cfg).map_err(|e| e.to_string())?;
        let mut total = a.base_value;
        for p in &a.phis {
            total += p;
        }
        let err = (total - out.champion.predict_proba(&x)).abs();
        worst = worst.max(err);
        if err > 1e-9 {
            bad += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        bad == 0 && secs < 60.0,
        format!(
            "500/500 within 1e-9 needed, {} ok; max err {worst:.2e}; {secs:.1}s on {} champion",
            500 - bad,
            out.champion.kind()
        ),
    )
}

// ------------------------------------------------------- 2. oracle agreement

fn random_tree(rng: &mut ChaCha8Rng, n_features: usize, depth: usize) -> Tree {
    fn grow(nodes: &mut Vec<Node>, rng: &mut ChaCha8Rng, n_features: usize, depth: usize) -> u32 {
        let id = nodes.len() as u32;
        if depth == 0 || rng.random_bool(0.2) {
            nodes.push(Node::Leaf {
                value: rng.random(),
                n_neg: 1,
                n_pos: 1,
            });
            return id;
        }
        nodes.push(Node::Leaf {
            value: 0.0,
            n_neg: 0,
            n_pos: 0,
        });
        let feature = rng.random_range(0..n_features) as u32;
        let threshold = [0.25, 0.5, 0.75][rng.random_range(0..3)];
        let left = grow(nodes, rng, n_features, depth - 1);
        let right = grow(nodes, rng, n_features, depth - 1);
        nodes[id as usize] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
    let mut nodes = Vec::new();
    grow(&mut nodes, rng, n_features, depth);
    Tree { nodes }
}

/// Values on a coarse lattice so many land exactly on split thresholds.
fn lattice_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0..5) as f64 / 4.0).collect()
}

fn shapley_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=10);
        let depth = rng.random_range(1..=4);
        let n_trees = rng.random_range(1..=5);
        let forest = ForestModel::from_trees((0..n_trees).map(|_| random_tree(&mut rng, n, depth)).collect());
        let bg: Vec<Vec<f64>> = (0..rng.random_range(1..=16)).map(|_| lattice_row(&mut rng, n)).collect();
        let x = lattice_row(&mut rng, n);
        let fast = attribute(&forest, &x, &bg, &ShapConfig::default()).map_err(|e| e.to_string())?;
        let slow = attribute_oracle(&forest, &x, &bg).map_err(|e| e.to_string())?;
        worst = worst.max((fast.base_value - slow.base_value).abs());
        for (a, b) in fast.phis.iter().zip(&slow.phis) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-9, format!("200 random forests, max |phi - oracle| = {worst:.2e}"))
}

// ------------------------------------------------------------------- 3. AUC

fn auc_brute(scores: &[f64], labels: &[Class]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, li) in labels.iter().enumerate() {
        if !li.is_positive() {
            continue;
        }
        for (j, lj) in labels.iter().enumerate() {
            if lj.is_positive() {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs
}

fn auc_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=50);
        let mut labels: Vec<Class> = (0..n).map(|_| Class::from_positive(rng.random_bool(0.4))).collect();
        labels[0] = Class::Ckd;
        labels[1] = Class::NoCkd;
        // Few distinct levels so ties are common.
        let levels = rng.random_range(1..=8);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let auc = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
        if auc != auc_brute(&scores, &labels) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("1000 random sets, {mismatches} exact mismatches"))
}

// ------------------------------------------------------------------- 4. PDP

fn toy_dataset(rng: &mut ChaCha8Rng, n_features: usize, n_records: usize) -> Dataset {
    let specs = (0..n_features)
        .map(|f| {
            if f % 3 == 2 {
                FeatureSpec::binary(&format!("b{f}"))
            } else {
                FeatureSpec::numeric(&format!("x{f}"), "", (0.0, 1.0))
            }
        })
        .collect();
    let schema = FeatureSchema::new(specs, "Label").unwrap();
    let records = (0..n_records)
        .map(|_| {
            let v = random_instance(&schema, rng);
            PatientRecord::new(v, Some(Class::from_positive(rng.random_bool(0.5))))
        })
        .collect();
    Dataset::new(schema, records, Provenance::Scaled)
}

fn pdp_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut not_flat = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=5);
        let n_records = rng.random_range(1..=20);
        let ds = toy_dataset(&mut rng, n, n_records);
        let ignored = rng.random_range(0..n);
        let w: Vec<f64> = (0..n).map(|f| if f == ignored { 0.0 } else { rng.random_range(-3.0..3.0) }).collect();
        let model = move |x: &[f64]| {
            let mut z = 0.0;
            for (f, wf) in w.iter().enumerate() {
                let g = (f + 1) % x.len();
                if f != ignored {
                    z += wf * x[f];
                    if g != ignored {
                        z += 0.5 * wf * x[f] * x[g];
                    }
                }
            }
            1.0 / (1.0 + (-z).exp())
        };
        let grid: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
        for f in 0..n {
            let values = if ds.schema.spec(f).is_binary() { vec![0.0, 1.0] } else { grid.clone() };
            let name = ds.schema.name(f).to_owned();
            let c = pd_curve(&model, &ds, &name, &PdGrid::Scaled { values: values.clone() }).map_err(|e| e.to_string())?;
            let mut expected_grid = values.clone();
            expected_grid.sort_by(f64::total_cmp);
            expected_grid.dedup();
            if c.grid_scaled != expected_grid {
                return Err(format!("grid {:?} is not the sorted request {expected_grid:?}", c.grid_scaled));
            }
            for (g, v) in c.grid_scaled.iter().enumerate() {
                let mut sum = 0.0;
                for r in &ds.records {
                    let mut z = r.values.clone();
                    z[f] = *v;
                    sum += model(&z);
                }
                worst = worst.max((c.pd_values[g] - sum / ds.len() as f64).abs());
            }
            if f == ignored && c.pd_values.iter().any(|p| *p != c.pd_values[0]) {
                not_flat += 1;
            }
        }
    }
    check(
        worst <= 1e-12 && not_flat == 0,
        format!("200 toy models, max |pd - brute| = {worst:.2e}, non-flat ignored curves {not_flat}"),
    )
}

// ----------------------------------------------------------------- 5. SMOTE

fn smote_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let schema = FeatureSchema::new(
        vec![
            FeatureSpec::numeric("a", "", (0.0, 1.0)),
            FeatureSpec::numeric("b", "", (0.0, 1.0)),
            FeatureSpec::binary("c"),
        ],
        "Label",
    )
    .unwrap();
    let (n_min, n_maj) = (100, 10_100);
    let records: Vec<PatientRecord> = (0..n_min + n_maj)
        .map(|i| {
            let pos = i < n_min;
            let shift = if pos { 0.3 } else { 0.0 };
            let v = vec![
                rng.random::<f64>() * 0.5 + shift,
                rng.random::<f64>() * 0.5 + shift,
                rng.random_bool(if pos { 0.7 } else { 0.3 }) as u8 as f64,
            ];
            PatientRecord::new(v, Some(Class::from_positive(pos)))
        })
        .collect();
    let ds = Dataset::new(schema, records, Provenance::Scaled);
    let cfg = ResampleConfig {
        k_neighbors: 5,
        target_ratio: 1.0,
        seed: 5,
    };
    let res = smote_nc_traced(&ds, &cfg).map_err(|e| e.to_string())?;
    let synth = &res.dataset.records[ds.len()..];

    // Reference metric: squared Euclidean on numerics, plus the squared
    // median minority std per categorical mismatch.
    let minority: Vec<&Vec<f64>> = ds.records[..n_min].iter().map(|r| &r.values).collect();
    let mut stds: Vec<f64> = (0..2)
        .map(|f| {
            let m = minority.iter().map(|r| r[f]).sum::<f64>() / n_min as f64;
            (minority.iter().map(|r| (r[f] - m).powi(2)).sum::<f64>() / n_min as f64).sqrt()
        })
        .collect();
    stds.sort_by(f64::total_cmp);
    let med = (stds[0] + stds[1]) / 2.0;
    let d2 = |a: &[f64], b: &[f64]| {
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + if a[2] != b[2] { med * med } else { 0.0 }
    };

    let mut violations = 0;
    for (rec, o) in synth.iter().zip(&res.origins) {
        let base = &ds.records[o.base].values;
        let nb = &ds.records[o.neighbor].values;
        for f in 0..2 {
            let (lo, hi) = (base[f].min(nb[f]), base[f].max(nb[f]));
            if !(lo <= rec.values[f] && rec.values[f] <= hi) {
                violations += 1;
            }
        }
        let ones = o.neighbors.iter().filter(|&&j| ds.records[j].values[2] == 1.0).count();
        let zeros = o.neighbors.len() - ones;
        let want = match ones.cmp(&zeros) {
            std::cmp::Ordering::Greater => 1.0,
            std::cmp::Ordering::Less => 0.0,
            std::cmp::Ordering::Equal => base[2],
        };
        if rec.values[2] != want || rec.label != Some(Class::Ckd) {
            violations += 1;
        }
        if !o.neighbors.contains(&o.neighbor) {
            violations += 1;
        }
        // The recorded neighbours are the 5 nearest minority records.
        let mut all: Vec<f64> = (0..n_min).filter(|&j| j != o.base).map(|j| d2(base, minority[j])).collect();
        all.sort_by(f64::total_cmp);
        let mut got: Vec<f64> = o.neighbors.iter().map(|&j| d2(base, &ds.records[j].values)).collect();
        got.sort_by(f64::total_cmp);
        if got.iter().zip(&all).any(|(g, a)| (g - a).abs() > 1e-12) {
            violations += 1;
        }
    }
    let [neg, pos] = res.dataset.class_counts();
    let ratio_ok = (pos as i64 - neg as i64).abs() <= 1;
    check(
        synth.len() == 10_000 && violations == 0 && ratio_ok,
        format!(
            "{} synthetic samples, {violations} violations, classes {pos}:{neg}",
            synth.len()
        ),
    )
}

// -------------------------------------------------------- 6. counterfactual

fn counterfactual_minimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = DistanceConfig::default();
    let (mut queries, mut matched, mut none_agree) = (0, 0, 0);
    for _ in 0..100 {
        let n = rng.random_range(2..=6);
        let n_records = rng.random_range(1..=200);
        let pool = toy_dataset(&mut rng, n, n_records);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let b = rng.random_range(-2.0..2.0);
        let model = move |x: &[f64]| {
            let z: f64 = b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            1.0 / (1.0 + (-z).exp())
        };
        let threshold = 0.5;
        // Denominators: unscaled MAD per numeric column, 1 when zero.
        let median = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            let m = v.len() / 2;
            if v.len() % 2 == 1 {
                v[m]
            } else {
                (v[m - 1] + v[m]) / 2.0
            }
        };
        let scales: Vec<f64> = (0..n)
            .map(|f| {
                if pool.schema.spec(f).is_binary() {
                    return 1.0;
                }
                let col: Vec<f64> = pool.records.iter().map(|r| r.values[f]).collect();
                let m = median(col.clone());
                let mad = median(col.iter().map(|x| (x - m).abs()).collect());
                if mad > 0.0 {
                    mad
                } else {
                    1.0
                }
            })
            .collect();
        for _ in 0..10 {
            let x = random_instance(&pool.schema, &mut rng);
            let cls = model(&x) >= threshold;
            let mut best: Option<(f64, usize)> = None;
            for (i, r) in pool.records.iter().enumerate() {
                if (model(&r.values) >= threshold) == cls {
                    continue;
                }
                let mut d = 0.0;
                for f in 0..n {
                    d += if pool.schema.spec(f).is_binary() {
                        if x[f] != r.values[f] {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        (x[f] - r.values[f]).abs() / scales[f]
                    };
                }
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
            let got = find_counterfactual(&x, &pool, &model, threshold, &cfg).map_err(|e| e.to_string())?;
            queries += 1;
            match (best, got) {
                (None, None) => {
                    matched += 1;
                    none_agree += 1;
                }
                (Some((d, i)), Some(p)) if p.pool_index == i || (p.distance - d).abs() <= 1e-12 => {
                    matched += 1;
                }
                _ => {}
            }
        }
    }
    check(
        matched == queries,
        format!("{matched}/{queries} queries match the exhaustive scan ({none_agree} with no counterfactual)"),
    )
}

// ----------------------------------------------------------------- 7. anchors

fn anchor_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let schema = FeatureSchema::new((0..4).map(|i| FeatureSpec::binary(&format!("F{i}"))).collect(), "Label").unwrap();
    let (mut good, mut fidelity) = (0, 0);
    let trials = 200;
    for trial in 0..trials {
        // Reference rows with uneven marginals.
        let p: Vec<f64> = (0..4).map(|_| rng.random_range(0.15..0.85)).collect();
        let n_rows = rng.random_range(12..=40);
        let records: Vec<PatientRecord> = (0..n_rows)
            .map(|_| PatientRecord::new(p.iter().map(|&q| rng.random_bool(q) as u8 as f64).collect(), None))
            .collect();
        let space = PerturbationSpace::new(&Dataset::new(schema.clone(), records, Provenance::Scaled))
            .map_err(|e| e.to_string())?;
        let marg: Vec<f64> = space
            .columns
            .iter()
            .map(|c| c.iter().filter(|v| **v == 1.0).count() as f64 / c.len() as f64)
            .collect();
        let w: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let model = move |x: &[f64]| {
            let z = w[4] + w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + w[3] * x[3] - 1.5 * x[0] * x[3];
            1.0 / (1.0 + (-z).exp())
        };
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(0..2) as f64).collect();
        let cfg = AnchorConfig {
            tau: 0.95,
            seed: trial,
            ..AnchorConfig::default()
        };
        let rule = induce_anchor(&model, &x, &space, 0.5, &cfg).map_err(|e| e.to_string())?;
        let target = model(&x) >= 0.5;
        let anchored: Vec<usize> = rule.predicates.iter().map(|p| p.feature).collect();
        // Exact precision: free features drawn independently from the
        // reference marginals, anchored ones fixed to the instance.
        let mut precision = 0.0;
        for mask in 0..16u32 {
            let z: Vec<f64> = (0..4)
                .map(|f| if anchored.contains(&f) { x[f] } else { ((mask >> f) & 1) as f64 })
                .collect();
            if (0..4).any(|f| anchored.contains(&f) && (mask >> f) & 1 != 0) {
                continue;
            }
            let mut prob = 1.0;
            for f in (0..4).filter(|f| !anchored.contains(f)) {
                prob *= if z[f] == 1.0 { marg[f] } else { 1.0 - marg[f] };
            }
            if (model(&z) >= 0.5) == target {
                precision += prob;
            }
        }
        if precision >= 0.90 {
            good += 1;
        }
        let pools = space.anchored_pools(&rule.predicates);
        let mut srng = ChaCha8Rng::seed_from_u64(trial);
        for _ in 0..200 {
            let z = space.sample(&x, &rule.predicates, cfg.anchored_sampling, &pools, &mut srng);
            if anchored.iter().any(|&f| z[f] != x[f]) {
                fidelity += 1;
            }
        }
    }
    let share = good as f64 / trials as f64;
    check(
        share >= 0.90 && fidelity == 0,
        format!("{good}/{trials} rules with exact precision >= 0.90; {fidelity} fidelity violations"),
    )
}

// ------------------------------------------------------ 8. reference metrics

fn reference_metrics() -> Outcome {
    let t = trained();
    let out = &t.art.outcome;
    let m = &out.test_metrics;
    let champ = out.champion_family().kind;
    if t.real_data {
        check(
            champ == LearnerKind::Forest && m.sensitivity >= 0.80 && m.specificity >= 0.55,
            format!(
                "{}: champion {champ}, test sensitivity {:.3}, specificity {:.3} (need forest, >= 0.80, >= 0.55)",
                source(t),
                m.sensitivity,
                m.specificity
            ),
        )
    } else {
        check(
            m.sensitivity >= 0.85,
            format!(
                "{}: champion {champ}, test sensitivity {:.3} (need >= 0.85), specificity {:.3}, AUC {:.3}",
                source(t),
                m.sensitivity,
                m.specificity,
                m.rocauc
            ),
        )
    }
}

// ------------------------------------------------------ 9. global ranking

fn global_ranking() -> Outcome {
    let t = trained();
    let out = &t.art.outcome;
    let cfg = ShapConfig::default();
    let bg = background_rows(&out.train, &cfg);
    let g = global_summary(&out.champion, &out.test, &bg, &cfg).map_err(|e| e.to_string())?;
    let top7 = g.top(7);
    let expected = ["DM_meds", "eGFR", "ACEI_ARB", "DM", "HbA1C"];
    let hits = expected.iter().filter(|e| top7.contains(e)).count();
    let egfr = out.test.schema.index_of("eGFR").unwrap();
    let (phi, raw): (Vec<f64>, Vec<f64>) = g.features[egfr].points.iter().copied().unzip();
    let rho = spearman(&phi, &raw).unwrap_or(f64::NAN);
    check(
        hits >= 4 && rho < 0.0,
        format!("{}: {hits}/5 expected features in top-7 {top7:?}; rho(phi_eGFR, eGFR) = {rho:.3}", source(t)),
    )
}

// ------------------------------------------------------------ 10. safety

fn safety_suite() -> Outcome {
    let t = trained();
    let model = &t.art.model;
    let r = run_suite(&default_suite(), &model.model, &model.schema, &model.scaler, model.threshold);
    let mut failed = Vec::new();
    for id in ["edge-1", "edge-2", "edge-3"] {
        match r.verdict(id) {
            Some(v) if v.class_ok == Some(true) => {}
            _ => failed.push(id),
        }
    }
    let ordering = r.orderings.iter().any(|o| o.higher == "edge-2" && o.lower == "edge-3" && o.holds);
    let probs: Vec<String> = r
        .verdicts
        .iter()
        .map(|v| format!("{}={:.3}", v.id, v.probability_ckd.unwrap_or(f64::NAN)))
        .collect();
    check(
        failed.is_empty() && ordering && r.passed,
        format!(
            "{}: class failures {failed:?}; ordering edge-2 >= edge-3 {}; P(CKD) {}",
            source(t),
            if ordering { "holds" } else { "violated" },
            probs.join(" ")
        ),
    )
}

// ------------------------------------------------------- 11. determinism

fn determinism() -> Outcome {
    let t = trained();
    let mut differing = Vec::new();
    for f in [MODEL_FILE, TRAIN_REPORT_JSON, TRAIN_REPORT_TEXT] {
        let a = std::fs::read(t.dir.path().join("a").join(f)).map_err(|e| e.to_string())?;
        let b = std::fs::read(t.second.path().join("b").join(f)).map_err(|e| e.to_string())?;
        if a != b {
            differing.push(f);
        }
    }
    check(
        differing.is_empty(),
        format!("two trainings, differing artifacts {differing:?}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("shapley additivity", shapley_additivity),
        ("shapley oracle equivalence", shapley_oracle),
        ("auc correctness", auc_correctness),
        ("pdp correctness", pdp_correctness),
        ("smote-nc geometry", smote_geometry),
        ("counterfactual minimality", counterfactual_minimality),
        ("anchor calibration", anchor_calibration),
        ("reference metrics", reference_metrics),
        ("global ranking", global_ranking),
        ("safety suite", safety_suite),
        ("determinism", determinism),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("PASS  {name:<28} {d} [{secs:.1}s]"),
            Err(d) => {
                failures += 1;
                println!("FAIL  {name:<28} {d} [{secs:.1}s]");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
