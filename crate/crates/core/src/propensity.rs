//! Behavior-policy probabilities `μ(a; s)`.
//!
//! Probabilities are floored at `c₀` (default 0.01) so importance weights
//! stay bounded by `1 / c₀`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Transition};
use crate::error::{Error, Result};
use crate::policy::{check_simplex, Policy, SoftmaxPolicy};

pub const DEFAULT_FLOOR: f64 = 0.01;
/// Ridge penalty used when the unpenalized likelihood has no finite maximum.
pub const SEPARATION_RIDGE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub enum PropensityKind {
    /// Randomization probabilities known by design.
    KnownConstant(Vec<f64>),
    /// Multinomial logistic model of action on state.
    Logistic(SoftmaxPolicy),
    /// Per-transition probabilities logged with the data (online designs).
    Logged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    kind: PropensityKind,
    floor: f64,
}

impl PropensityModel {
    pub fn known(probs: Vec<f64>) -> Result<Self> {
        check_simplex(&probs)?;
        Ok(PropensityModel {
            kind: PropensityKind::KnownConstant(probs),
            floor: DEFAULT_FLOOR,
        })
    }

    pub fn logged() -> Self {
        PropensityModel {
            kind: PropensityKind::Logged,
            floor: DEFAULT_FLOOR,
        }
    }

    pub fn logistic(policy: SoftmaxPolicy) -> Self {
        PropensityModel {
            kind: PropensityKind::Logistic(policy),
            floor: DEFAULT_FLOOR,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor <= 1.0) {
            return Err(Error::InvalidParameter("propensity floor must lie in (0, 1]".into()));
        }
        self.floor = floor;
        Ok(self)
    }

    pub fn kind(&self) -> &PropensityKind {
        &self.kind
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// `max(μ(action; state), c₀)`. Logged models have no state-level
    /// probability; use [`transition_probability`](Self::transition_probability).
    pub fn probability(&self, action: usize, state: &[f64]) -> f64 {
        let raw = match &self.kind {
            PropensityKind::KnownConstant(p) => p[action],
            PropensityKind::Logistic(policy) => policy.probabilities(state)[action],
            PropensityKind::Logged => f64::NAN,
        };
        raw.max(self.floor)
    }

    /// Floored behavior probability of the action taken in `tr`.
    pub fn transition_probability(&self, tr: &Transition<'_>, index: usize) -> Result<f64> {
        match self.kind {
            PropensityKind::Logged => tr
                .behavior_prob
                .map(|p| p.max(self.floor))
                .ok_or(Error::MissingLoggedProbability { index }),
            _ => Ok(self.probability(tr.action, tr.state)),
        }
    }
}

/// Diagnostics from a logistic propensity fit.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub model: PropensityModel,
    /// Mean log-likelihood (penalized if the ridge fallback was used) after
    /// each accepted Newton step, starting from the null model.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub ridge_fallback: bool,
    /// Coefficients on standardized states, `(K - 1) × d` row-major with the
    /// intercept last, and their standard errors.
    pub standardized_coef: Vec<f64>,
    pub standard_errors: Vec<f64>,
}

/// Maximum-likelihood multinomial logistic regression of action on state
/// (with intercept), using the same last-action-reference parameterization
/// as [`SoftmaxPolicy`].
pub fn fit_logistic_propensity(dataset: &Dataset) -> Result<LogisticFit> {
    let k = dataset.action_count();
    let mut seen = alloc::vec![false; k];
    for tr in dataset.transitions() {
        seen[tr.action] = true;
    }
    if k < 2 || seen.iter().filter(|s| **s).count() < 2 {
        return Err(Error::SingleAction);
    }
    let (center, scale) = standardization(dataset.observed_states_for_transitions(), dataset.state_dim());
    let rows: Vec<(Vec<f64>, usize)> = dataset
        .transitions()
        .map(|tr| (standardize(tr.state, &center, &scale), tr.action))
        .collect();

    let fit = newton(&rows, k, 0.0);
    let (mut fit, ridge_fallback) = match fit {
        Some(f) if f.converged && f.coef.iter().all(|c| c.abs() < 30.0) && !saturated(&rows, &f.coef, k) => {
            (f, false)
        }
        _ => {
            log::warn!("logistic propensity fit did not converge (separation?); using ridge {SEPARATION_RIDGE}");
            let f = newton(&rows, k, SEPARATION_RIDGE).ok_or(Error::NonFinite("logistic fit"))?;
            (f, true)
        }
    };
    let d = center.len() + 1;
    let mut raw = alloc::vec![0.0; fit.coef.len()];
    for j in 0..k - 1 {
        let row = &fit.coef[j * d..(j + 1) * d];
        let mut intercept = row[d - 1];
        for i in 0..d - 1 {
            raw[j * d + i] = row[i] / scale[i];
            intercept -= row[i] * center[i] / scale[i];
        }
        raw[j * d + d - 1] = intercept;
    }
    let policy = SoftmaxPolicy::new(k, d - 1, raw)?;
    Ok(LogisticFit {
        model: PropensityModel::logistic(policy),
        loglik_trace: core::mem::take(&mut fit.trace),
        iterations: fit.iterations,
        converged: fit.converged,
        ridge_fallback,
        standardized_coef: fit.coef,
        standard_errors: fit.std_errors,
    })
}

impl Dataset {
    fn observed_states_for_transitions(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.transitions().map(|tr| tr.state)
    }
}

/// Per-component mean and standard deviation (sd of a constant component
/// is reported as 1).
pub(crate) fn standardization<'a>(
    states: impl Iterator<Item = &'a [f64]>,
    p: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut sum = alloc::vec![0.0; p];
    let mut sumsq = alloc::vec![0.0; p];
    let mut n = 0usize;
    let states: Vec<&[f64]> = states.collect();
    for s in &states {
        for j in 0..p {
            sum[j] += s[j];
        }
        n += 1;
    }
    let nf = n.max(1) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    for s in &states {
        for j in 0..p {
            let d = s[j] - mean[j];
            sumsq[j] += d * d;
        }
    }
    let sd = sumsq
        .iter()
        .map(|v| {
            let sd = libm::sqrt(v / nf);
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, sd)
}

pub(crate) fn standardize(state: &[f64], center: &[f64], scale: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = state
        .iter()
        .zip(center.iter().zip(scale))
        .map(|(s, (c, sc))| (s - c) / sc)
        .collect();
    x.push(1.0);
    x
}

struct NewtonFit {
    coef: Vec<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    std_errors: Vec<f64>,
}

fn class_probs(coef: &[f64], x: &[f64], k: usize, out: &mut [f64]) {
    let d = x.len();
    let mut max = 0.0f64;
    for j in 0..k - 1 {
        out[j] = coef[j * d..(j + 1) * d].iter().zip(x).map(|(b, v)| b * v).sum();
        max = max.max(out[j]);
    }
    out[k - 1] = 0.0;
    let mut total = 0.0;
    for v in out.iter_mut() {
        *v = libm::exp(*v - max);
        total += *v;
    }
    for v in out.iter_mut() {
        *v /= total;
    }
}

fn objective(rows: &[(Vec<f64>, usize)], coef: &[f64], k: usize, ridge: f64) -> f64 {
    let mut probs = alloc::vec![0.0; k];
    let mut ll = 0.0;
    for (x, a) in rows {
        class_probs(coef, x, k, &mut probs);
        ll += libm::log(probs[*a].max(1e-300));
    }
    ll / rows.len() as f64 - 0.5 * ridge * coef.iter().map(|c| c * c).sum::<f64>()
}

/// Whether some fitted probability is numerically 0 or 1, the symptom of
/// (quasi-)separation.
fn saturated(rows: &[(Vec<f64>, usize)], coef: &[f64], k: usize) -> bool {
    let mut probs = alloc::vec![0.0; k];
    rows.iter().any(|(x, _)| {
        class_probs(coef, x, k, &mut probs);
        probs.iter().any(|&p| p < 1e-8)
    })
}

fn newton(rows: &[(Vec<f64>, usize)], k: usize, ridge: f64) -> Option<NewtonFit> {
    let d = rows[0].0.len();
    let m = (k - 1) * d;
    let n = rows.len() as f64;
    let mut coef = alloc::vec![0.0; m];
    let mut current = objective(rows, &coef, k, ridge);
    let mut trace = alloc::vec![current];
    let mut probs = alloc::vec![0.0; k];
    let mut converged = false;
    let mut iterations = 0;
    let mut neg_hess = DMatrix::<f64>::zeros(m, m);
    for _ in 0..100 {
        let mut grad = DVector::<f64>::zeros(m);
        neg_hess.fill(0.0);
        for (x, a) in rows {
            class_probs(&coef, x, k, &mut probs);
            for j in 0..k - 1 {
                let resid = if *a == j { 1.0 } else { 0.0 } - probs[j];
                for i in 0..d {
                    grad[j * d + i] += resid * x[i];
                }
                for l in 0..k - 1 {
                    let w = probs[j] * (if j == l { 1.0 } else { 0.0 } - probs[l]);
                    for i in 0..d {
                        let wi = w * x[i];
                        for h in 0..d {
                            neg_hess[(j * d + i, l * d + h)] += wi * x[h];
                        }
                    }
                }
            }
        }
        grad /= n;
        neg_hess /= n;
        for i in 0..m {
            grad[i] -= ridge * coef[i];
            neg_hess[(i, i)] += ridge;
        }
        if grad.norm() <= 1e-8 {
            converged = true;
            break;
        }
        let step = neg_hess.clone().cholesky().map(|c| c.solve(&grad))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = coef.iter().zip(step.iter()).map(|(c, s)| c + t * s).collect();
            let value = objective(rows, &trial, k, ridge);
            if value.is_finite() && value >= current {
                coef = trial;
                current = value;
                trace.push(value);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // no ascent possible at machine precision
            converged = grad.norm() <= 1e-6;
            break;
        }
    }
    let std_errors = neg_hess
        .clone()
        .try_inverse()
        .map(|inv| (0..m).map(|i| libm::sqrt(inv[(i, i)].max(0.0) / n)).collect())
        .unwrap_or_else(|| alloc::vec![f64::NAN; m]);
    Some(NewtonFit {
        coef,
        trace,
        iterations,
        converged,
        std_errors,
    })
}
