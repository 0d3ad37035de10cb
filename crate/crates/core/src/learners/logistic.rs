use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub l2_penalty: f64,
    pub max_iter: usize,
    /// Stop once the loss changes by less than this between iterations.
    pub tolerance: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            l2_penalty: 1e-4,
            max_iter: 10_000,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub l2_penalty: f64,
}

impl LogisticModel {
    pub fn logit(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub model: LogisticModel,
    /// Penalised mean log-loss before each update, plus the final value.
    pub loss_trace: Vec<f64>,
}

fn loss(model: &LogisticModel, rows: &[&[f64]], labels: &[u8]) -> f64 {
    let mut total = 0.0;
    for (x, &y) in rows.iter().zip(labels) {
        let z = model.logit(x);
        // log(1 + e^z) - y z, computed without overflow
        let softplus = if z > 0.0 {
            z + libm::log1p(libm::exp(-z))
        } else {
            libm::log1p(libm::exp(z))
        };
        total += softplus - f64::from(y) * z;
    }
    let reg: f64 = model.weights.iter().map(|w| w * w).sum::<f64>() * model.l2_penalty / 2.0;
    total / rows.len() as f64 + reg
}

/// Full-batch gradient descent with step 1/L, where L bounds the Hessian's
/// largest eigenvalue; the loss is therefore non-increasing.
pub(super) fn fit(rows: &[&[f64]], labels: &[u8], p: &LogisticParams) -> LogisticFit {
    let d = rows.first().map_or(0, |r| r.len());
    let n = rows.len() as f64;
    let trace_bound: f64 = rows
        .iter()
        .map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / n;
    let lipschitz = 0.25 * trace_bound + p.l2_penalty;
    let step = 1.0 / lipschitz;

    let mut model = LogisticModel {
        weights: alloc::vec![0.0; d],
        intercept: 0.0,
        l2_penalty: p.l2_penalty,
    };
    let mut trace = Vec::new();
    let mut prev = loss(&model, rows, labels);
    trace.push(prev);
    let mut gw = alloc::vec![0.0; d];
    for _ in 0..p.max_iter {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (x, &y) in rows.iter().zip(labels) {
            let r = model.predict_proba(x) - f64::from(y);
            gb += r;
            for (g, v) in gw.iter_mut().zip(x.iter()) {
                *g += r * v;
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= step * (g / n + p.l2_penalty * *w);
        }
        model.intercept -= step * gb / n;
        let cur = loss(&model, rows, labels);
        trace.push(cur);
        if (prev - cur).abs() < p.tolerance {
            break;
        }
        prev = cur;
    }
    LogisticFit {
        model,
        loss_trace: trace,
    }
}
