//! Anchor rules: conjunctions of predicates that locally pin the model's
//! prediction, found by beam search over sampled precision.
//!
//! Perturbations resample free features from the training marginals.
//! Anchored binary features keep the instance's value; anchored numeric
//! features are drawn from the training values that satisfy the predicate
//! (or fixed at the instance's value under [`AnchoredSampling::FixInstance`]).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ScalerParams};
use crate::error::{invalid, Error, Result};
use crate::learners::Classifier;
use crate::schema::{Class, FeatureKind, FeatureSchema};
use crate::stats::{clopper_pearson_lower, fnv1a, mix_seed, nearest_rank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Le,
    Gt,
    Eq,
}

impl Op {
    fn symbol(self) -> &'static str {
        match self {
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub feature: usize,
    pub name: String,
    pub op: Op,
    /// Cut or category in model (scaled) units.
    pub value: f64,
    /// Same value in clinical units.
    pub value_raw: f64,
    /// Category label for binary features ("yes", "woman", ...).
    pub label: Option<String>,
}

impl Predicate {
    pub fn holds(&self, x: &[f64]) -> bool {
        self.holds_value(x[self.feature])
    }

    pub fn holds_value(&self, v: f64) -> bool {
        match self.op {
            Op::Le => v <= self.value,
            Op::Gt => v > self.value,
            Op::Eq => v == self.value,
        }
    }

    fn key(&self) -> (usize, u8, u64) {
        (self.feature, self.op as u8, self.value.to_bits())
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.label {
            Some(l) => write!(f, "{} {} {}", self.name, self.op.symbol(), l),
            None => write!(f, "{} {} {:.2}", self.name, self.op.symbol(), self.value_raw),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRule {
    pub predicates: Vec<Predicate>,
    pub predicted_class: Class,
    pub precision: f64,
    /// One-sided Clopper-Pearson lower bound on the precision.
    pub precision_lower: f64,
    pub coverage: f64,
    pub samples_used: usize,
    /// False when no rule within the length limit cleared the target.
    pub meets_target: bool,
}

impl fmt::Display for AnchorRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("IF ")?;
        if self.predicates.is_empty() {
            f.write_str("TRUE")?;
        }
        for (i, p) in self.predicates.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{p}")?;
        }
        write!(
            f,
            " THEN {} [precision={:.4}, coverage={:.4}, n={}]",
            self.predicted_class, self.precision, self.coverage, self.samples_used
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchoredSampling {
    SatisfyPredicate,
    FixInstance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorConfig {
    pub tau: f64,
    pub beam_width: usize,
    pub max_predicates: usize,
    pub n_samples: usize,
    pub confidence: f64,
    pub seed: u64,
    pub anchored_sampling: AnchoredSampling,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            tau: 0.95,
            beam_width: 2,
            max_predicates: 4,
            n_samples: 1000,
            confidence: 0.95,
            seed: 42,
            anchored_sampling: AnchoredSampling::SatisfyPredicate,
        }
    }
}

/// Training-set marginals used to perturb free features, plus the
/// reference rows used for exact coverage.
#[derive(Debug, Clone)]
pub struct PerturbationSpace {
    pub schema: FeatureSchema,
    pub scaler: Option<ScalerParams>,
    /// Column-major training values (scaled), in record order.
    pub columns: Vec<Vec<f64>>,
    pub rows: Vec<Vec<f64>>,
}

impl PerturbationSpace {
    pub fn new(reference: &Dataset) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::Empty { module: "anchors" });
        }
        let rows: Vec<Vec<f64>> = reference.records.iter().map(|r| r.values.clone()).collect();
        let columns = (0..reference.schema.len())
            .map(|f| rows.iter().map(|r| r[f]).collect())
            .collect();
        Ok(Self {
            schema: reference.schema.clone(),
            scaler: reference.scaler.clone(),
            columns,
            rows,
        })
    }

    fn raw(&self, feature: usize, v: f64) -> f64 {
        self.scaler.as_ref().map_or(v, |s| s.invert_value(feature, v))
    }

    /// Predicates consistent with `instance`: for numeric features one per
    /// distinct cut among the training deciles and the instance's value;
    /// for binary features equality with the instance.
    pub fn candidate_predicates(&self, instance: &[f64]) -> Vec<Predicate> {
        let mut out = Vec::new();
        for (f, &x) in instance.iter().enumerate().take(self.schema.len()) {
            let name: String = self.schema.name(f).into();
            match self.schema.spec(f).kind {
                FeatureKind::Binary => out.push(Predicate {
                    feature: f,
                    name,
                    op: Op::Eq,
                    value: x,
                    value_raw: x,
                    label: Some(self.schema.binary_label(f, x).into()),
                }),
                FeatureKind::Numeric => {
                    let mut sorted = self.columns[f].clone();
                    sorted.sort_by(f64::total_cmp);
                    let mut cuts: Vec<f64> = (1..10).map(|d| nearest_rank(&sorted, d as f64 / 10.0)).collect();
                    cuts.push(x);
                    cuts.sort_by(f64::total_cmp);
                    cuts.dedup();
                    for c in cuts {
                        let op = if x <= c { Op::Le } else { Op::Gt };
                        out.push(Predicate {
                            feature: f,
                            name: name.clone(),
                            op,
                            value: c,
                            value_raw: self.raw(f, c),
                            label: None,
                        });
                    }
                }
            }
        }
        out
    }

    /// One perturbation of `instance` under `rule`.
    pub fn sample<R: Rng>(&self, instance: &[f64], rule: &[Predicate], mode: AnchoredSampling, pools: &[Vec<f64>], rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(instance.len());
        for (f, col) in self.columns.iter().enumerate() {
            let v = match rule.iter().position(|p| p.feature == f) {
                Some(k) => {
                    let pool = &pools[k];
                    if mode == AnchoredSampling::FixInstance || rule[k].op == Op::Eq || pool.is_empty() {
                        instance[f]
                    } else {
                        pool[rng.random_range(0..pool.len())]
                    }
                }
                None => col[rng.random_range(0..col.len())],
            };
            out.push(v);
        }
        out
    }

    /// Training values satisfying each predicate, aligned with `rule`.
    pub fn anchored_pools(&self, rule: &[Predicate]) -> Vec<Vec<f64>> {
        rule.iter()
            .map(|p| {
                self.columns[p.feature]
                    .iter()
                    .copied()
                    .filter(|&v| p.holds_value(v))
                    .collect()
            })
            .collect()
    }
}

/// Exact fraction of `rows` satisfying every predicate; 1.0 for the empty
/// rule.
pub fn rule_coverage<R: AsRef<[f64]>>(predicates: &[Predicate], rows: &[R]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let hits = rows
        .iter()
        .filter(|r| predicates.iter().all(|p| p.holds(r.as_ref())))
        .count();
    hits as f64 / rows.len() as f64
}

fn rule_seed(base: u64, rule: &[Predicate]) -> u64 {
    let mut bytes = Vec::with_capacity(rule.len() * 17);
    for p in rule {
        let (f, op, v) = p.key();
        bytes.extend_from_slice(&(f as u64).to_le_bytes());
        bytes.push(op);
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    mix_seed(base, fnv1a(&bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionEstimate {
    pub precision: f64,
    pub lower_bound: f64,
    pub samples: usize,
}

/// Fraction of perturbations whose thresholded prediction equals `target`,
/// with its one-sided Clopper-Pearson lower bound. The generator is seeded
/// from the rule itself so results do not depend on evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn estimate_precision<M: Classifier + ?Sized>(
    rule: &[Predicate],
    model: &M,
    space: &PerturbationSpace,
    instance: &[f64],
    target: Class,
    threshold: f64,
    cfg: &AnchorConfig,
) -> Result<PrecisionEstimate> {
    if cfg.n_samples == 0 {
        return Err(invalid("anchors", "n_samples must be at least 1"));
    }
    let classify = |x: &[f64]| Class::from_positive(model.predict_proba(x) >= threshold);
    let all_fixed = space.columns.len() == rule.len()
        && (cfg.anchored_sampling == AnchoredSampling::FixInstance || rule.iter().all(|p| p.op == Op::Eq));
    if all_fixed {
        let p = if classify(instance) == target { 1.0 } else { 0.0 };
        return Ok(PrecisionEstimate {
            precision: p,
            lower_bound: p,
            samples: 1,
        });
    }
    let pools = space.anchored_pools(rule);
    let mut rng = ChaCha8Rng::seed_from_u64(rule_seed(cfg.seed, rule));
    let mut hits = 0usize;
    for _ in 0..cfg.n_samples {
        let z = space.sample(instance, rule, cfg.anchored_sampling, &pools, &mut rng);
        debug_assert!(rule.iter().all(|p| p.holds(&z)));
        if classify(&z) == target {
            hits += 1;
        }
    }
    Ok(PrecisionEstimate {
        precision: hits as f64 / cfg.n_samples as f64,
        lower_bound: clopper_pearson_lower(hits, cfg.n_samples, cfg.confidence),
        samples: cfg.n_samples,
    })
}

struct Scored {
    rule: Vec<Predicate>,
    est: PrecisionEstimate,
    coverage: f64,
}

fn canonical(mut rule: Vec<Predicate>) -> Vec<Predicate> {
    rule.sort_by(|a, b| {
        a.key()
            .0
            .cmp(&b.key().0)
            .then(a.key().1.cmp(&b.key().1))
            .then(a.value.total_cmp(&b.value))
    });
    rule
}

fn keys(rule: &[Predicate]) -> Vec<(usize, u8, u64)> {
    rule.iter().map(Predicate::key).collect()
}

/// Bottom-up beam search for the highest-coverage rule whose precision
/// lower bound reaches `cfg.tau`. Falls back to the best bound found,
/// flagged with `meets_target = false`.
pub fn induce_anchor<M: Classifier + ?Sized>(
    model: &M,
    instance: &[f64],
    space: &PerturbationSpace,
    threshold: f64,
    cfg: &AnchorConfig,
) -> Result<AnchorRule> {
    if !(cfg.tau > 0.5 && cfg.tau <= 1.0) {
        return Err(invalid("anchors", "tau must lie in (0.5, 1]"));
    }
    if cfg.beam_width == 0 || cfg.max_predicates == 0 {
        return Err(invalid("anchors", "beam width and rule length must be positive"));
    }
    if instance.len() != space.schema.len() {
        return Err(Error::SchemaMismatch(format!(
            "instance has {} values, schema has {}",
            instance.len(),
            space.schema.len()
        )));
    }
    let target = Class::from_positive(model.predict_proba(instance) >= threshold);
    let finish = |s: &Scored, meets: bool| AnchorRule {
        predicates: s.rule.clone(),
        predicted_class: target,
        precision: s.est.precision,
        precision_lower: s.est.lower_bound,
        coverage: s.coverage,
        samples_used: s.est.samples,
        meets_target: meets,
    };
    let empty = Scored {
        rule: Vec::new(),
        est: estimate_precision(&[], model, space, instance, target, threshold, cfg)?,
        coverage: 1.0,
    };
    if empty.est.lower_bound >= cfg.tau {
        return Ok(finish(&empty, true));
    }
    let preds = space.candidate_predicates(instance);
    let mut beam: Vec<Vec<Predicate>> = alloc::vec![Vec::new()];
    let mut best: Option<Scored> = None;
    for _depth in 0..cfg.max_predicates {
        let mut expansions: Vec<Vec<Predicate>> = Vec::new();
        let mut seen: Vec<Vec<(usize, u8, u64)>> = Vec::new();
        for rule in &beam {
            for p in &preds {
                if rule.iter().any(|q| q.feature == p.feature) {
                    continue;
                }
                let mut r = rule.clone();
                r.push(p.clone());
                let r = canonical(r);
                let k = keys(&r);
                if !seen.contains(&k) {
                    seen.push(k);
                    expansions.push(r);
                }
            }
        }
        if expansions.is_empty() {
            break;
        }
        let scored: Vec<Scored> = crate::par::map_indexed(expansions.len(), |i| {
            let rule = &expansions[i];
            estimate_precision(rule, model, space, instance, target, threshold, cfg).map(|est| Scored {
                rule: rule.clone(),
                est,
                coverage: rule_coverage(rule, &space.rows),
            })
        })
        .into_iter()
        .collect::<Result<_>>()?;

        let mut stop: Option<&Scored> = None;
        for s in scored.iter().filter(|s| s.est.lower_bound >= cfg.tau) {
            let better = stop.is_none_or(|b| {
                s.coverage
                    .total_cmp(&b.coverage)
                    .then(s.est.precision.total_cmp(&b.est.precision))
                    .is_gt()
            });
            if better {
                stop = Some(s);
            }
        }
        if let Some(s) = stop {
            return Ok(finish(s, true));
        }

        let mut order: Vec<usize> = (0..scored.len()).collect();
        order.sort_by(|&a, &b| {
            let (a_, b_) = (&scored[a], &scored[b]);
            b_.est
                .lower_bound
                .total_cmp(&a_.est.lower_bound)
                .then(b_.coverage.total_cmp(&a_.coverage))
                .then(a.cmp(&b))
        });
        let top = &scored[order[0]];
        if best.as_ref().is_none_or(|b| top.est.lower_bound > b.est.lower_bound) {
            best = Some(Scored {
                rule: top.rule.clone(),
                est: top.est,
                coverage: top.coverage,
            });
        }
        beam = order
            .into_iter()
            .take(cfg.beam_width)
            .map(|i| scored[i].rule.clone())
            .collect();
    }
    Ok(finish(best.as_ref().unwrap_or(&empty), false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PatientRecord, Provenance};
    use crate::schema::FeatureSpec;
    use alloc::vec;

    fn binary_space() -> PerturbationSpace {
        let schema = FeatureSchema::new((0..4).map(|i| FeatureSpec::binary(&format!("F{i}"))).collect(), "Label").unwrap();
        let records = (0..16u32)
            .map(|m| PatientRecord::new((0..4).map(|b| ((m >> b) & 1) as f64).collect(), None))
            .collect();
        PerturbationSpace::new(&Dataset::new(schema, records, Provenance::Scaled)).unwrap()
    }

    #[test]
    fn single_decisive_feature() {
        let space = binary_space();
        let model = |x: &[f64]| x[2];
        let r = induce_anchor(&model, &[0.0, 1.0, 1.0, 0.0], &space, 0.5, &AnchorConfig::default()).unwrap();
        assert!(r.meets_target);
        assert_eq!(r.predicates.len(), 1);
        assert_eq!(r.predicates[0].name, "F2");
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.coverage, 0.5);
        assert_eq!(r.to_string(), "IF F2 = yes THEN CKD [precision=1.0000, coverage=0.5000, n=1000]");
    }

    #[test]
    fn coverage_examples() {
        let space = binary_space();
        assert_eq!(rule_coverage(&[], &space.rows), 1.0);
        let p0 = |v: f64| Predicate {
            feature: 0,
            name: "F0".into(),
            op: Op::Eq,
            value: v,
            value_raw: v,
            label: None,
        };
        assert_eq!(rule_coverage(&[p0(0.0), p0(1.0)], &space.rows), 0.0);
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let le = Predicate {
            feature: 0,
            name: "x".into(),
            op: Op::Le,
            value: 2.0,
            value_raw: 2.0,
            label: None,
        };
        assert_eq!(rule_coverage(&[le], &rows), 0.3);
    }

    #[test]
    fn constant_model_precision() {
        let space = binary_space();
        let model = |_: &[f64]| 0.9;
        let cfg = AnchorConfig {
            n_samples: 100,
            ..AnchorConfig::default()
        };
        let e = estimate_precision(&[], &model, &space, &[0.0; 4], Class::Ckd, 0.5, &cfg).unwrap();
        assert_eq!(e.precision, 1.0);
        assert!(e.lower_bound >= 0.95);
        let r = induce_anchor(&model, &[0.0; 4], &space, 0.5, &cfg).unwrap();
        assert!(r.predicates.is_empty() && r.meets_target);
    }

    #[test]
    fn fair_coin_rule_is_rejected() {
        let space = binary_space();
        let model = |x: &[f64]| x[3];
        let e = estimate_precision(&[], &model, &space, &[0.0, 0.0, 0.0, 1.0], Class::Ckd, 0.5, &AnchorConfig::default()).unwrap();
        assert!(e.lower_bound < 0.95);
    }

    #[test]
    fn numeric_cuts_and_fidelity() {
        let schema = FeatureSchema::new(
            vec![FeatureSpec::numeric("eGFR", "", (0.0, 250.0)), FeatureSpec::binary("DM")],
            "Label",
        )
        .unwrap();
        let records = (0..100)
            .map(|i| PatientRecord::new(vec![i as f64 / 100.0, (i % 3 == 0) as u8 as f64], None))
            .collect();
        let space = PerturbationSpace::new(&Dataset::new(schema, records, Provenance::Scaled)).unwrap();
        let x = [0.155, 1.0];
        let preds = space.candidate_predicates(&x);
        assert!(preds.iter().all(|p| p.holds(&x)));
        assert!(preds.iter().any(|p| p.op == Op::Le && p.value == 0.155));
        assert!(preds.iter().any(|p| p.op == Op::Gt && p.value == 0.09));
        let rule = vec![preds[0].clone(), preds.last().unwrap().clone()];
        let pools = space.anchored_pools(&rule);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let z = space.sample(&x, &rule, AnchoredSampling::SatisfyPredicate, &pools, &mut rng);
            assert!(rule.iter().all(|p| p.holds(&z)));
        }
        let model = |v: &[f64]| if v[0] <= 0.3 && v[1] == 1.0 { 0.9 } else { 0.1 };
        let a = induce_anchor(&model, &x, &space, 0.5, &AnchorConfig::default()).unwrap();
        let b = induce_anchor(&model, &x, &space, 0.5, &AnchorConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.meets_target);
        assert_eq!(a.predicates.len(), 2);
        assert!(a.predicates.iter().all(|p| p.holds(&x)));
    }
}
