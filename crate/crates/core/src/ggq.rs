//! Greedy gradient Q-learning baseline.
//!
//! `Q(s, a; η)` is linear in the design `(1, s)` plus, for every action
//! `k ≥ 1`, the interaction block `1{a = k}(1, s)`; action 0 is the
//! reference and contributes main effects only. `η̂` minimizes the squared
//! norm of the Bellman-optimality estimating function
//!
//! ```text
//! Dₙ(η) = n⁻¹ Σᵢ Σₜ {Uᵢₜ + γ maxₐ Q(sᵢₜ₊₁, a; η) − Q(sᵢₜ, aᵢₜ; η)} q(sᵢₜ, aᵢₜ)
//! ```
//!
//! by Nelder–Mead from a regression warm start and random restarts.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::policy::{epsilon_greedy, Policy};
use crate::propensity::standardization;
use crate::rng::stream_rng;

/// Length of the interaction design for `action_count` actions and
/// `state_dim` covariates.
pub fn q_feature_dim(action_count: usize, state_dim: usize) -> usize {
    action_count * (state_dim + 1)
}

pub fn q_features_into(state: &[f64], action: usize, action_count: usize, out: &mut [f64]) {
    let d = state.len() + 1;
    debug_assert_eq!(out.len(), action_count * d);
    out.iter_mut().for_each(|v| *v = 0.0);
    out[0] = 1.0;
    out[1..d].copy_from_slice(state);
    if action > 0 {
        let block = &mut out[action * d..(action + 1) * d];
        block[0] = 1.0;
        block[1..].copy_from_slice(state);
    }
}

pub fn q_features(state: &[f64], action: usize, action_count: usize) -> Result<Vec<f64>> {
    if action >= action_count {
        return Err(Error::ActionOutOfRange {
            action,
            action_count,
        });
    }
    let mut out = alloc::vec![0.0; q_feature_dim(action_count, state.len())];
    q_features_into(state, action, action_count, &mut out);
    Ok(out)
}

/// `Q(s, a; η)` without building the design vector.
fn q_value(eta: &[f64], state: &[f64], action: usize) -> f64 {
    let d = state.len() + 1;
    let block = |k: usize| eta[k * d] + eta[k * d + 1..(k + 1) * d].iter().zip(state).map(|(e, s)| e * s).sum::<f64>();
    let main = block(0);
    if action == 0 {
        main
    } else {
        main + block(action)
    }
}

/// Linear Q-function on raw states.
#[derive(Debug, Clone, PartialEq)]
pub struct QModel {
    eta: Vec<f64>,
    action_count: usize,
    state_dim: usize,
}

impl QModel {
    pub fn new(action_count: usize, state_dim: usize, eta: Vec<f64>) -> Result<Self> {
        let dim = q_feature_dim(action_count, state_dim);
        if eta.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: eta.len(),
            });
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Q coefficients"));
        }
        Ok(QModel {
            eta,
            action_count,
            state_dim,
        })
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn q_value(&self, state: &[f64], action: usize) -> f64 {
        q_value(&self.eta, state, action)
    }

    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        (0..self.action_count).map(|a| self.q_value(state, a)).collect()
    }

    /// `argmaxₐ Q(s, a)`, ties to the lower index.
    pub fn greedy_action(&self, state: &[f64]) -> usize {
        let mut best = 0;
        let mut best_q = self.q_value(state, 0);
        for a in 1..self.action_count {
            let q = self.q_value(state, a);
            if q > best_q {
                best = a;
                best_q = q;
            }
        }
        best
    }
}

/// The greedy rule of a [`QModel`], optionally ε-greedy.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPolicy {
    model: QModel,
    epsilon: f64,
}

impl GreedyPolicy {
    pub fn new(model: QModel) -> Self {
        GreedyPolicy { model, epsilon: 0.0 }
    }

    pub fn with_epsilon(model: QModel, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter("epsilon must lie in [0, 1]".into()));
        }
        Ok(GreedyPolicy { model, epsilon })
    }

    pub fn model(&self) -> &QModel {
        &self.model
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Policy for GreedyPolicy {
    fn action_count(&self) -> usize {
        self.model.action_count
    }

    fn probabilities_into(&self, state: &[f64], out: &mut [f64]) {
        let greedy = self.model.greedy_action(state);
        let k = self.model.action_count;
        if self.epsilon == 0.0 || k == 1 {
            out.iter_mut().for_each(|p| *p = 0.0);
            out[greedy] = 1.0;
        } else {
            let other = self.epsilon / (k - 1) as f64;
            out.iter_mut().for_each(|p| *p = other);
            out[greedy] = 1.0 - self.epsilon;
        }
    }
}

/// Dataset in the form the residual needs.
#[derive(Debug, Clone)]
struct Prepared {
    k: usize,
    d: usize,
    n_patients: usize,
    states: Vec<f64>,
    next_states: Vec<f64>,
    actions: Vec<usize>,
    utilities: Vec<f64>,
}

impl Prepared {
    fn new(dataset: &Dataset, center: &[f64], scale: &[f64]) -> Self {
        let p = dataset.state_dim();
        let total = dataset.transition_count();
        let mut states = Vec::with_capacity(total * p);
        let mut next_states = Vec::with_capacity(total * p);
        let mut actions = Vec::with_capacity(total);
        let mut utilities = Vec::with_capacity(total);
        for tr in dataset.transitions() {
            for j in 0..p {
                states.push((tr.state[j] - center[j]) / scale[j]);
                next_states.push((tr.next_state[j] - center[j]) / scale[j]);
            }
            actions.push(tr.action);
            utilities.push(tr.utility);
        }
        Prepared {
            k: dataset.action_count(),
            d: p + 1,
            n_patients: dataset.n_patients(),
            states,
            next_states,
            actions,
            utilities,
        }
    }

    fn residual(&self, eta: &[f64], gamma: f64, out: &mut [f64]) {
        let p = self.d - 1;
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in 0..self.actions.len() {
            let s = &self.states[t * p..(t + 1) * p];
            let s_next = &self.next_states[t * p..(t + 1) * p];
            let a = self.actions[t];
            let max_next = (0..self.k)
                .map(|b| q_value(eta, s_next, b))
                .fold(f64::NEG_INFINITY, f64::max);
            let delta = self.utilities[t] + gamma * max_next - q_value(eta, s, a);
            out[0] += delta;
            for (o, x) in out[1..self.d].iter_mut().zip(s) {
                *o += delta * x;
            }
            if a > 0 {
                let block = &mut out[a * self.d..(a + 1) * self.d];
                block[0] += delta;
                for (o, x) in block[1..].iter_mut().zip(s) {
                    *o += delta * x;
                }
            }
        }
        let inv_n = 1.0 / self.n_patients as f64;
        out.iter_mut().for_each(|v| *v *= inv_n);
    }

    fn objective(&self, eta: &[f64], gamma: f64, buf: &mut [f64]) -> f64 {
        self.residual(eta, gamma, buf);
        buf.iter().map(|v| v * v).sum()
    }

    /// Least-squares regression of `U` on the design (the `γ = 0` fit).
    fn regression(&self) -> Result<Vec<f64>> {
        let m = self.k * self.d;
        let rows = self.actions.len();
        let p = self.d - 1;
        let mut x = DMatrix::zeros(rows, m);
        let mut f = alloc::vec![0.0; m];
        for t in 0..rows {
            q_features_into(&self.states[t * p..(t + 1) * p], self.actions[t], self.k, &mut f);
            for j in 0..m {
                x[(t, j)] = f[j];
            }
        }
        let y = DVector::from_column_slice(&self.utilities);
        Ok(least_squares(&x, &y)?.as_slice().to_vec())
    }
}

/// `Dₙ(η)` on raw states.
pub fn ggq_residual_vector(dataset: &Dataset, eta: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let p = dataset.state_dim();
    let k = dataset.action_count();
    let dim = q_feature_dim(k, p);
    if eta.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: eta.len(),
        });
    }
    let prepared = Prepared::new(dataset, &alloc::vec![0.0; p], &alloc::vec![1.0; p]);
    let mut out = alloc::vec![0.0; dim];
    prepared.residual(eta, gamma, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgqConfig {
    /// Number of Nelder–Mead starts; the first is the regression warm
    /// start, the others perturb it at random.
    pub starts: usize,
    pub nelder_mead: NelderMeadConfig,
    pub seed: u64,
}

impl Default for GgqConfig {
    fn default() -> Self {
        GgqConfig {
            starts: 5,
            nelder_mead: NelderMeadConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GgqFit {
    pub model: QModel,
    /// `‖Dₙ(η̂)‖²` in the search coordinates (standardized states).
    pub objective: f64,
    /// `‖Dₙ‖²` at the warm start, same coordinates.
    pub warm_objective: f64,
    pub evaluations: usize,
    /// Whether any start improved on the warm start.
    pub improved: bool,
}

/// Fits `η̂` by minimizing `‖Dₙ(η)‖²`.
///
/// The search runs on z-scored states (so `Ω` is the identity in those
/// coordinates) and the result is mapped back to raw states.
pub fn fit_ggq(dataset: &Dataset, gamma: f64, config: &GgqConfig) -> Result<GgqFit> {
    if config.starts == 0 {
        return Err(Error::InvalidParameter("GGQ needs at least one start".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(alloc::format!("discount {gamma} outside [0, 1)")));
    }
    let p = dataset.state_dim();
    let k = dataset.action_count();
    let (center, scale) = standardization(dataset.transitions().map(|tr| tr.state), p);
    let prepared = Prepared::new(dataset, &center, &scale);
    let warm = prepared.regression()?;
    let m = warm.len();
    let mut buf = alloc::vec![0.0; m];
    let mut evaluations = 0usize;
    let mut objective = |eta: &[f64]| {
        evaluations += 1;
        prepared.objective(eta, gamma, &mut buf)
    };
    let warm_objective = objective(&warm);
    let mut best = (warm.clone(), warm_objective);
    let mut rng = stream_rng(config.seed, 0);
    for start in 0..config.starts {
        let x0: Vec<f64> = if start == 0 {
            warm.clone()
        } else {
            warm.iter()
                .map(|w| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    w + z * (1.0 + w.abs())
                })
                .collect()
        };
        let first = nelder_mead(&mut objective, &x0, &config.nelder_mead);
        // a fresh simplex around the first answer escapes early collapse
        let second = nelder_mead(&mut objective, &first.x, &config.nelder_mead);
        let found = if second.value <= first.value { second } else { first };
        if found.value < best.1 {
            best = (found.x, found.value);
        }
    }
    let improved = best.1 < warm_objective;
    if !improved {
        log::warn!("GGQ search did not improve on the regression warm start");
    }
    let d = p + 1;
    let mut raw = best.0.clone();
    for block in 0..k {
        let b = &best.0[block * d..(block + 1) * d];
        let mut intercept = b[0];
        for j in 0..p {
            raw[block * d + 1 + j] = b[1 + j] / scale[j];
            intercept -= b[1 + j] * center[j] / scale[j];
        }
        raw[block * d] = intercept;
    }
    Ok(GgqFit {
        model: QModel::new(k, p, raw)?,
        objective: best.1,
        warm_objective,
        evaluations,
        improved,
    })
}

/// Greedy policy of `model` with exploration `epsilon`, as a probability
/// vector for `state`.
pub fn ggq_action_probabilities(model: &QModel, state: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    epsilon_greedy(model.greedy_action(state), model.action_count, epsilon)
}
