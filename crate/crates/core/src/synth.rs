//! Schema-identical synthetic cohort with a planted risk structure.
//!
//! Used when the clinical CSV is not available. Ground truth is drawn from a
//! known logistic model, so explanations can be checked against it: treatment
//! flags act as markers of established disease, eGFR drops steeply between
//! roughly 86 and 106, and male sex adds a small effect.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PatientRecord, Provenance, MISSING};
use crate::error::{invalid, Result};
use crate::learners::sigmoid;
use crate::schema::{Class, FeatureSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    /// Target mean of the ground-truth probability.
    pub prevalence: f64,
    pub missing_hba1c: f64,
    pub missing_tg: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 491,
            prevalence: 0.114,
            missing_hba1c: 0.08,
            missing_tg: 0.05,
            seed: 42,
        }
    }
}

/// Planted coefficients, in raw units, excluding the intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffects {
    pub dm_meds: f64,
    pub acei_arb: f64,
    pub dm: f64,
    pub hba1c_per_pct: f64,
    pub male: f64,
    pub age_per_decade: f64,
    pub ht: f64,
    /// Height of the logistic step in eGFR.
    pub egfr_step: f64,
    pub egfr_mid: f64,
    pub egfr_width: f64,
}

pub const PLANTED: PlantedEffects = PlantedEffects {
    dm_meds: 1.6,
    acei_arb: 1.3,
    dm: 0.9,
    hba1c_per_pct: 0.45,
    male: 0.25,
    age_per_decade: 0.3,
    ht: 0.3,
    egfr_step: 6.5,
    egfr_mid: 96.0,
    egfr_width: 4.0,
};

// Canonical column positions.
const GENDER: usize = 0;
const AGE: usize = 1;
const DM: usize = 2;
const HT: usize = 6;
const DM_MEDS: usize = 10;
const ACEI_ARB: usize = 12;
const TG: usize = 14;
const HBA1C: usize = 15;
const EGFR: usize = 17;

/// Intercept-free logit of the planted model on a complete raw record.
pub fn planted_logit(raw: &[f64]) -> f64 {
    let e = PLANTED;
    let egfr = raw[EGFR];
    e.dm_meds * raw[DM_MEDS]
        + e.acei_arb * raw[ACEI_ARB]
        + e.dm * raw[DM]
        + e.hba1c_per_pct * (raw[HBA1C] - 5.7)
        + e.male * raw[GENDER]
        + e.age_per_decade * (raw[AGE] - 55.0) / 10.0
        + e.ht * raw[HT]
        + e.egfr_step * sigmoid((e.egfr_mid - egfr) / e.egfr_width)
}

fn bern<R: Rng>(rng: &mut R, p: f64) -> f64 {
    (rng.random::<f64>() < p) as u8 as f64
}

fn normal<R: Rng>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let v = Normal::new(mean, sd).expect("finite sd").sample(rng);
    v.clamp(lo, hi)
}

fn round_to(v: f64, places: i32) -> f64 {
    let f = libm::pow(10.0, places as f64);
    libm::round(v * f) / f
}

/// Complete raw feature vector (no missingness yet).
fn patient<R: Rng>(rng: &mut R) -> Vec<f64> {
    let gender = bern(rng, 0.5);
    let age = libm::round(normal(rng, 54.0, 13.0, 23.0, 89.0));
    let older = (age - 50.0).max(0.0) / 40.0;
    let dm = bern(rng, 0.2 + 0.3 * older);
    let ht = bern(rng, 0.35 + 0.4 * older);
    let dlp = bern(rng, 0.55 + 0.2 * older);
    let chd = bern(rng, 0.05 + 0.15 * older);
    let vasc = bern(rng, 0.03 + 0.05 * older);
    let smoking = bern(rng, if gender > 0.5 { 0.22 } else { 0.08 });
    let bmi = round_to(normal(rng, 28.5, 5.0, 16.0, 50.0), 1);
    let obesity = (bmi >= 30.0) as u8 as f64;
    let dlp_meds = bern(rng, if dlp > 0.5 { 0.7 } else { 0.04 });
    let dm_meds = bern(rng, if dm > 0.5 { 0.8 } else { 0.02 });
    let ht_meds = bern(rng, if ht > 0.5 { 0.85 } else { 0.03 });
    let acei_arb = bern(rng, if ht > 0.5 { 0.45 } else { 0.03 } + if dm > 0.5 { 0.15 } else { 0.0 });
    let chol = round_to(normal(rng, 5.1 - 0.5 * dlp_meds, 1.0, 2.0, 10.5), 2);
    let tg_mean = libm::log(1.3 + 0.5 * dlp + 0.3 * dm);
    let tg = round_to(LogNormal::new(tg_mean, 0.4).expect("finite").sample(rng).clamp(0.3, 8.0), 2);
    let hba1c = round_to(
        if dm > 0.5 {
            normal(rng, 7.3, 1.3, 5.5, 14.0)
        } else {
            normal(rng, 5.6, 0.35, 4.3, 6.4)
        },
        2,
    );
    let egfr_mean = 128.0 - 0.85 * (age - 25.0) - 6.0 * dm - 4.0 * ht;
    let egfr = round_to(normal(rng, egfr_mean, 15.0, 12.0, 150.0), 2);
    // Roughly inverts a creatinine-based eGFR equation.
    let cr_base = if gender > 0.5 { 8200.0 } else { 6400.0 };
    let cr = round_to((cr_base / egfr * LogNormal::new(0.0, 0.08).expect("finite").sample(rng)).clamp(30.0, 900.0), 2);
    let sbp = libm::round(normal(rng, 126.0 + 12.0 * ht + 0.2 * (age - 50.0), 15.0, 90.0, 210.0));
    let dbp = libm::round(normal(rng, 0.45 * sbp + 18.0, 7.0, 50.0, 120.0));
    alloc::vec![
        gender, age, dm, chd, vasc, smoking, ht, dlp, obesity, dlp_meds, dm_meds, ht_meds, acei_arb, chol, tg, hba1c,
        cr, egfr, sbp, dbp, bmi,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    /// Raw-provenance dataset with MCAR gaps in HbA1C and TG.
    pub dataset: Dataset,
    /// Ground-truth P(CKD) per record.
    pub truth: Vec<f64>,
    pub intercept: f64,
}

/// Intercept such that the mean planted probability equals `prevalence`.
fn calibrate(logits: &[f64], prevalence: f64) -> f64 {
    let mean_p = |b: f64| logits.iter().map(|&z| sigmoid(z + b)).sum::<f64>() / logits.len() as f64;
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < prevalence {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn generate(cfg: &SynthConfig) -> Result<SyntheticCohort> {
    if cfg.n == 0 {
        return Err(invalid("synth", "n must be positive"));
    }
    if !(cfg.prevalence > 0.0 && cfg.prevalence < 1.0) {
        return Err(invalid("synth", "prevalence must lie in (0, 1)"));
    }
    for p in [cfg.missing_hba1c, cfg.missing_tg] {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid("synth", "missingness rates must lie in [0, 1)"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows: Vec<Vec<f64>> = (0..cfg.n).map(|_| patient(&mut rng)).collect();
    let logits: Vec<f64> = rows.iter().map(|r| planted_logit(r)).collect();
    let intercept = calibrate(&logits, cfg.prevalence);
    let truth: Vec<f64> = logits.iter().map(|&z| sigmoid(z + intercept)).collect();
    let records = rows
        .into_iter()
        .zip(&truth)
        .map(|(mut values, &p)| {
            let label = Class::from_positive(rng.random::<f64>() < p);
            if rng.random::<f64>() < cfg.missing_hba1c {
                values[HBA1C] = MISSING;
            }
            if rng.random::<f64>() < cfg.missing_tg {
                values[TG] = MISSING;
            }
            PatientRecord::new(values, Some(label))
        })
        .collect();
    Ok(SyntheticCohort {
        dataset: Dataset::new(FeatureSchema::ckd(), records, Provenance::Raw),
        truth,
        intercept,
    })
}
