//! The V-learning estimator.
//!
//! For a policy `π` and the linear model `V(s) = Φ(s)ᵀθ`, the weighted
//! Bellman estimating function is linear in `θ`:
//!
//! ```text
//! Λₙ(π, θ) = b − Aθ
//! A = n⁻¹ Σᵢ Σₜ wᵢₜ Φ(sᵢₜ) {Φ(sᵢₜ) − γ Φ(sᵢₜ₊₁)}ᵀ
//! b = n⁻¹ Σᵢ Σₜ wᵢₜ Uᵢₜ Φ(sᵢₜ),        wᵢₜ = π(aᵢₜ; sᵢₜ) / μ(aᵢₜ; sᵢₜ)
//! ```
//!
//! with `n` the number of patients. `θ̂` minimizes `‖Λₙ‖² + λₙ‖θ‖²`, the
//! value of `π` is `νᵀθ̂` for the mean feature vector `ν`, and the policy
//! search maximizes that value over the softmax class.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::basis::FeatureMap;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{ridge_solve, solve_square};
use crate::optim::{anneal, bfgs, AnnealConfig, BfgsConfig};
use crate::policy::{Policy, SoftmaxPolicy};
use crate::propensity::{standardization, PropensityModel};
use crate::rng::stream_rng;

/// The linear system behind `Λₙ(π, θ) = b − Aθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub gamma: f64,
    pub n_patients: usize,
    pub transitions: usize,
}

impl BellmanSystem {
    /// `Λₙ(π, θ)`.
    pub fn residual(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * theta
    }
}

/// Which states the reference distribution averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NuMode {
    #[default]
    AllStates,
    InitialStates,
}

/// Fitted value model for one policy.
#[derive(Debug, Clone)]
pub struct ValueModel {
    pub theta: DVector<f64>,
    pub nu: DVector<f64>,
    pub gamma: f64,
    pub feature_map: FeatureMap,
}

impl ValueModel {
    pub fn state_value(&self, state: &[f64]) -> Result<f64> {
        let phi = self.feature_map.features(state)?;
        Ok(phi.iter().zip(self.theta.iter()).map(|(a, b)| a * b).sum())
    }

    pub fn policy_value(&self) -> f64 {
        self.nu.dot(&self.theta)
    }
}

/// Transition-level quantities that do not depend on the evaluated policy,
/// computed once per dataset so that each policy evaluation is a weighted
/// accumulation plus a small solve.
#[derive(Debug, Clone)]
pub struct ValueProblem {
    q: usize,
    p: usize,
    gamma: f64,
    n_patients: usize,
    action_count: usize,
    features: Vec<f64>,
    // Φ(s) − γΦ(s')
    td: Vec<f64>,
    utilities: Vec<f64>,
    behavior: Vec<f64>,
    actions: Vec<usize>,
    states: Vec<f64>,
}

impl ValueProblem {
    pub fn new(
        dataset: &Dataset,
        propensity: &PropensityModel,
        feature_map: &FeatureMap,
        gamma: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(alloc::format!(
                "discount {gamma} outside [0, 1)"
            )));
        }
        if feature_map.state_dim() != dataset.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: feature_map.state_dim(),
                found: dataset.state_dim(),
            });
        }
        let q = feature_map.dim();
        let p = dataset.state_dim();
        let total = dataset.transition_count();
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut features = Vec::with_capacity(total * q);
        let mut td = Vec::with_capacity(total * q);
        let mut utilities = Vec::with_capacity(total);
        let mut behavior = Vec::with_capacity(total);
        let mut actions = Vec::with_capacity(total);
        let mut states = Vec::with_capacity(total * p);
        let mut phi = alloc::vec![0.0; q];
        let mut phi_next = alloc::vec![0.0; q];
        for (index, tr) in dataset.transitions().enumerate() {
            feature_map.features_into(tr.state, &mut phi)?;
            feature_map.features_into(tr.next_state, &mut phi_next)?;
            features.extend_from_slice(&phi);
            td.extend(phi.iter().zip(&phi_next).map(|(a, b)| a - gamma * b));
            if !tr.utility.is_finite() {
                return Err(Error::NonFinite("utility"));
            }
            utilities.push(tr.utility);
            behavior.push(propensity.transition_probability(&tr, index)?);
            actions.push(tr.action);
            states.extend_from_slice(tr.state);
        }
        Ok(ValueProblem {
            q,
            p,
            gamma,
            n_patients: dataset.n_patients(),
            action_count: dataset.action_count(),
            features,
            td,
            utilities,
            behavior,
            actions,
            states,
        })
    }

    pub fn transitions(&self) -> usize {
        self.utilities.len()
    }

    pub fn n_patients(&self) -> usize {
        self.n_patients
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Importance weights `π(a; s) / μ(a; s)` for every transition.
    pub fn weights(&self, policy: &dyn Policy) -> Result<Vec<f64>> {
        if policy.action_count() != self.action_count {
            return Err(Error::DimensionMismatch {
                expected: self.action_count,
                found: policy.action_count(),
            });
        }
        let mut probs = alloc::vec![0.0; self.action_count];
        let weights = (0..self.transitions())
            .map(|t| {
                policy.probabilities_into(&self.states[t * self.p..(t + 1) * self.p], &mut probs);
                probs[self.actions[t]] / self.behavior[t]
            })
            .collect();
        Ok(weights)
    }

    pub fn assemble(&self, policy: &dyn Policy) -> Result<BellmanSystem> {
        let w = self.weights(policy)?;
        Ok(self.assemble_weighted(&w))
    }

    /// `A` and `b` for arbitrary per-transition weights.
    pub fn assemble_weighted(&self, weights: &[f64]) -> BellmanSystem {
        let q = self.q;
        let mut a = alloc::vec![0.0; q * q];
        let mut b = alloc::vec![0.0; q];
        for (t, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let phi = &self.features[t * q..(t + 1) * q];
            let td = &self.td[t * q..(t + 1) * q];
            let u = self.utilities[t];
            for i in 0..q {
                let c = w * phi[i];
                if c == 0.0 {
                    continue;
                }
                let row = &mut a[i * q..(i + 1) * q];
                for (r, d) in row.iter_mut().zip(td) {
                    *r += c * d;
                }
                b[i] += c * u;
            }
        }
        let inv_n = 1.0 / self.n_patients as f64;
        BellmanSystem {
            a: DMatrix::from_row_slice(q, q, &a) * inv_n,
            b: DVector::from_vec(b) * inv_n,
            gamma: self.gamma,
            n_patients: self.n_patients,
            transitions: self.transitions(),
        }
    }

    /// Plug-in variance `σ̂² = νᵀ ŵ₁⁻¹ ŵ₀ ŵ₁⁻ᵀ ν` of `√n (V̂ − V)`, where
    /// `n` is the number of patients.
    ///
    /// `ŵ₁` is the assembled `A` and
    /// `ŵ₀ = n⁻¹ Σ w² δ² Φ(s)Φ(s)ᵀ` with TD residual `δ = U + γΦ(s')ᵀθ − Φ(s)ᵀθ`.
    /// Both use the per-patient empirical measure, so `σ̂/√n` is the
    /// standard error of `νᵀθ̂`.
    pub fn variance(&self, policy: &dyn Policy, theta: &DVector<f64>, nu: &DVector<f64>) -> Result<f64> {
        let q = self.q;
        if theta.len() != q || nu.len() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                found: if theta.len() != q { theta.len() } else { nu.len() },
            });
        }
        let w = self.weights(policy)?;
        let system = self.assemble_weighted(&w);
        let x = solve_square(&system.a.transpose(), nu, "ŵ₁")?;
        let mut total = 0.0;
        for (t, &wt) in w.iter().enumerate() {
            let phi = &self.features[t * q..(t + 1) * q];
            let td = &self.td[t * q..(t + 1) * q];
            let delta = self.utilities[t] - td.iter().zip(theta.iter()).map(|(a, b)| a * b).sum::<f64>();
            let proj: f64 = phi.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            total += wt * wt * delta * delta * proj * proj;
        }
        Ok((total / self.n_patients as f64).max(0.0))
    }
}

/// `A`, `b` for `policy` on `dataset`.
pub fn assemble_system(
    dataset: &Dataset,
    policy: &dyn Policy,
    propensity: &PropensityModel,
    feature_map: &FeatureMap,
    gamma: f64,
) -> Result<BellmanSystem> {
    ValueProblem::new(dataset, propensity, feature_map, gamma)?.assemble(policy)
}

/// `θ̂ = argmin ‖Aθ − b‖² + λ‖θ‖²`. At `λ = 0` a rank-deficient `A` gets
/// the minimum-norm solution and a warning.
pub fn solve_theta(system: &BellmanSystem, lambda: f64) -> Result<DVector<f64>> {
    let sol = ridge_solve(&system.a, &system.b, lambda)?;
    if sol.dropped > 0 {
        log::warn!(
            "Bellman matrix is rank deficient ({} of {} directions dropped); using pseudo-inverse",
            sol.dropped,
            system.a.nrows()
        );
    }
    Ok(sol.x)
}

/// Mean feature vector `ν` of the reference distribution.
pub fn reference_vector(dataset: &Dataset, feature_map: &FeatureMap, mode: NuMode) -> Result<DVector<f64>> {
    let q = feature_map.dim();
    let mut nu = DVector::zeros(q);
    let mut phi = alloc::vec![0.0; q];
    let mut count = 0usize;
    let mut add = |s: &[f64], nu: &mut DVector<f64>| -> Result<()> {
        feature_map.features_into(s, &mut phi)?;
        for (n, f) in nu.iter_mut().zip(&phi) {
            *n += f;
        }
        count += 1;
        Ok(())
    };
    match mode {
        NuMode::AllStates => {
            for s in dataset.observed_states() {
                add(s, &mut nu)?;
            }
        }
        NuMode::InitialStates => {
            for traj in dataset.trajectories() {
                if traj.followup()[0] {
                    add(traj.state(0), &mut nu)?;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(nu / count as f64)
}

/// `νᵀθ̂`.
pub fn estimate_value(theta: &DVector<f64>, nu: &DVector<f64>) -> Result<f64> {
    if theta.len() != nu.len() {
        return Err(Error::DimensionMismatch {
            expected: nu.len(),
            found: theta.len(),
        });
    }
    Ok(nu.dot(theta))
}

/// Plug-in variance of the value estimate; see [`ValueProblem::variance`].
#[allow(clippy::too_many_arguments)]
pub fn variance_estimate(
    dataset: &Dataset,
    policy: &dyn Policy,
    theta: &DVector<f64>,
    propensity: &PropensityModel,
    feature_map: &FeatureMap,
    gamma: f64,
    nu: &DVector<f64>,
) -> Result<f64> {
    ValueProblem::new(dataset, propensity, feature_map, gamma)?.variance(policy, theta, nu)
}

/// Default θ penalty `n^(-3/4)` for `n` patients.
pub fn default_lambda_theta(n_patients: usize) -> f64 {
    libm::pow(n_patients.max(1) as f64, -0.75)
}

/// Default β penalty `0.1 / √(transitions)`.
pub fn default_lambda_beta(transitions: usize) -> f64 {
    0.1 / libm::sqrt(transitions.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub anneal: AnnealConfig,
    pub bfgs: BfgsConfig,
    /// `None` uses [`default_lambda_beta`].
    pub lambda_beta: Option<f64>,
    /// `None` uses [`default_lambda_theta`].
    pub lambda_theta: Option<f64>,
    pub nu_mode: NuMode,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            anneal: AnnealConfig::default(),
            bfgs: BfgsConfig::default(),
            lambda_beta: None,
            lambda_theta: None,
            nu_mode: NuMode::AllStates,
            seed: 0,
        }
    }
}

/// Result of a policy search.
#[derive(Debug, Clone)]
pub struct PolicyFit {
    /// Maximizer in raw-state coordinates.
    pub policy: SoftmaxPolicy,
    /// Unpenalized `νᵀθ̂` at the maximizer.
    pub value: f64,
    /// Penalized objective at the maximizer.
    pub objective: f64,
    /// Penalized objective of the uniform policy (`β = 0`).
    pub baseline_objective: f64,
    pub model: ValueModel,
    /// Coefficients on standardized states (the search coordinates).
    pub search_beta: Vec<f64>,
    pub lambda_theta: f64,
    pub lambda_beta: f64,
    pub evaluations: usize,
}

/// Maps search coordinates on standardized states to a raw-state policy.
///
/// The search runs on `(s − mean) / sd` so that one box and one penalty
/// scale suit every state component; the policy class is the same.
#[derive(Debug, Clone)]
pub struct PolicyCoordinates {
    action_count: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl PolicyCoordinates {
    pub fn fit(dataset: &Dataset) -> Self {
        let (center, scale) = standardization(dataset.observed_states(), dataset.state_dim());
        PolicyCoordinates {
            action_count: dataset.action_count(),
            center,
            scale,
        }
    }

    pub fn parameter_count(&self) -> usize {
        (self.action_count - 1) * (self.center.len() + 1)
    }

    pub fn to_policy(&self, search_beta: &[f64]) -> Result<SoftmaxPolicy> {
        let d = self.center.len() + 1;
        let mut raw = alloc::vec![0.0; search_beta.len()];
        for j in 0..self.action_count - 1 {
            let row = &search_beta[j * d..(j + 1) * d];
            let mut intercept = row[d - 1];
            for i in 0..d - 1 {
                raw[j * d + i] = row[i] / self.scale[i];
                intercept -= row[i] * self.center[i] / self.scale[i];
            }
            raw[j * d + d - 1] = intercept;
        }
        SoftmaxPolicy::new(self.action_count, d - 1, raw)
    }
}

/// Estimated value of a fixed policy: solve for `θ̂` and return the model.
pub fn evaluate_policy(
    problem: &ValueProblem,
    policy: &dyn Policy,
    nu: &DVector<f64>,
    feature_map: &FeatureMap,
    lambda_theta: f64,
) -> Result<ValueModel> {
    let system = problem.assemble(policy)?;
    let theta = solve_theta(&system, lambda_theta)?;
    Ok(ValueModel {
        theta,
        nu: nu.clone(),
        gamma: problem.gamma,
        feature_map: feature_map.clone(),
    })
}

/// Searches the softmax class for the policy with the largest estimated
/// value: annealing from `β = 0` locates a neighborhood, then BFGS with
/// finite-difference gradients refines it. The objective is
/// `νᵀθ̂(β) − λ_β‖β‖²`.
pub fn optimize_policy(
    dataset: &Dataset,
    propensity: &PropensityModel,
    feature_map: &FeatureMap,
    gamma: f64,
    search: &SearchConfig,
) -> Result<PolicyFit> {
    let problem = ValueProblem::new(dataset, propensity, feature_map, gamma)?;
    let nu = reference_vector(dataset, feature_map, search.nu_mode)?;
    let coords = PolicyCoordinates::fit(dataset);
    optimize_on(&problem, &nu, &coords, feature_map, search)
}

/// [`optimize_policy`] on precomputed pieces.
pub fn optimize_on(
    problem: &ValueProblem,
    nu: &DVector<f64>,
    coords: &PolicyCoordinates,
    feature_map: &FeatureMap,
    search: &SearchConfig,
) -> Result<PolicyFit> {
    let lambda_theta = search
        .lambda_theta
        .unwrap_or_else(|| default_lambda_theta(problem.n_patients()));
    let lambda_beta = search
        .lambda_beta
        .unwrap_or_else(|| default_lambda_beta(problem.transitions()));
    if !(lambda_theta >= 0.0 && lambda_beta >= 0.0) {
        return Err(Error::InvalidParameter("penalties must be >= 0".into()));
    }
    let mut evaluations = 0usize;
    let value_of = |beta: &[f64]| -> Option<f64> {
        let policy = coords.to_policy(beta).ok()?;
        let system = problem.assemble(&policy).ok()?;
        let theta = solve_theta(&system, lambda_theta).ok()?;
        let v = nu.dot(&theta);
        v.is_finite().then_some(v)
    };
    let mut neg_objective = |beta: &[f64]| -> f64 {
        evaluations += 1;
        let penalty = lambda_beta * beta.iter().map(|b| b * b).sum::<f64>();
        match value_of(beta) {
            Some(v) => -(v - penalty),
            None => f64::INFINITY,
        }
    };
    let m = coords.parameter_count();
    let zero = alloc::vec![0.0; m];
    let baseline = -neg_objective(&zero);
    let mut rng = stream_rng(search.seed, 0);
    let annealed = anneal(&mut neg_objective, &zero, &search.anneal, &mut rng);
    let refined = bfgs(&mut neg_objective, &annealed.x, &search.bfgs);
    let (best, best_neg) = if refined.value <= annealed.value {
        (refined.x, refined.value)
    } else {
        (annealed.x, annealed.value)
    };
    if !best_neg.is_finite() || best_neg >= 1e30 {
        if !baseline.is_finite() {
            return Err(Error::ObjectiveNotFinite);
        }
    }
    let (best, objective) = if best_neg.is_finite() && -best_neg >= baseline {
        (best, -best_neg)
    } else {
        (zero, baseline)
    };
    let policy = coords.to_policy(&best)?;
    let model = evaluate_policy(problem, &policy, nu, feature_map, lambda_theta)?;
    Ok(PolicyFit {
        value: model.policy_value(),
        objective,
        baseline_objective: baseline,
        policy,
        model,
        search_beta: best,
        lambda_theta,
        lambda_beta,
        evaluations,
    })
}
