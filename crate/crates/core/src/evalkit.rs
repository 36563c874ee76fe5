//! Replicated simulation experiments and their summaries.
//!
//! One replication is a pure function of the experiment configuration and
//! its index, so replications can run in any order or in parallel and be
//! reduced by index afterwards.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::basis::{BasisKind, FeatureMap};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ggq::{fit_ggq, GgqConfig, GreedyPolicy};
use crate::online::{run_online, run_online_individualized, GgqEstimator, OnlineConfig, PolicyEstimator, VLearnEstimator};
use crate::policy::Policy;
use crate::propensity::{fit_logistic_propensity, PropensityModel};
use crate::rng::derive_seed;
use crate::simenv::{generate_offline, rollout_value, SimEnv, DEFAULT_BURN_IN};
use crate::vlearn::{optimize_policy, SearchConfig};

/// An estimation method compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    VLearn(BasisKind),
    Ggq,
    /// The data-generating policy itself.
    Observed,
}

impl Method {
    pub const OFFLINE: [Method; 5] = [
        Method::VLearn(BasisKind::Linear),
        Method::VLearn(BasisKind::Polynomial2),
        Method::VLearn(BasisKind::GaussianRbf),
        Method::Ggq,
        Method::Observed,
    ];

    /// Column label, e.g. `Gaussian VL`.
    pub fn label(&self) -> &'static str {
        match self {
            Method::VLearn(BasisKind::Linear) => "Linear VL",
            Method::VLearn(BasisKind::Polynomial2) => "Polynomial VL",
            Method::VLearn(BasisKind::GaussianRbf) => "Gaussian VL",
            Method::VLearn(BasisKind::Tabular) => "Tabular VL",
            Method::Ggq => "GGQ",
            Method::Observed => "Observed",
        }
    }

    /// Identifier, e.g. `vl_gaussian`.
    pub fn id(&self) -> String {
        match self {
            Method::VLearn(b) => alloc::format!("vl_{}", b.name()),
            Method::Ggq => "ggq".into(),
            Method::Observed => "observed".into(),
        }
    }

    /// Accepts ids (`vl_gaussian`, `ggq`, `observed`) and labels.
    pub fn parse(s: &str) -> Option<Self> {
        let lower = s.trim().to_ascii_lowercase();
        if let Some(basis) = lower.strip_prefix("vl_") {
            return BasisKind::parse(basis).map(Method::VLearn);
        }
        match lower.as_str() {
            "ggq" => Some(Method::Ggq),
            "observed" => Some(Method::Observed),
            _ => Method::OFFLINE
                .iter()
                .copied()
                .find(|m| m.label().eq_ignore_ascii_case(s.trim())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub env: SimEnv,
    pub n: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub burn_in: usize,
    pub n_eval: usize,
    pub t_eval: usize,
    pub search: SearchConfig,
    pub ggq: GgqConfig,
}

impl ExperimentConfig {
    pub fn new(env: SimEnv, n: usize, horizon: usize, replications: usize, seed: u64) -> Self {
        ExperimentConfig {
            env,
            n,
            horizon,
            gamma: 0.9,
            replications,
            methods: Method::OFFLINE.to_vec(),
            seed,
            burn_in: DEFAULT_BURN_IN,
            n_eval: 100,
            t_eval: 100,
            search: SearchConfig::default(),
            ggq: GgqConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replication count must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter(alloc::format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if self.n == 0 || self.horizon == 0 || self.n_eval == 0 || self.t_eval == 0 {
            return Err(Error::InvalidParameter("n, T and evaluation sizes must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        Ok(())
    }

    pub fn data_seed(&self, replication: usize) -> u64 {
        derive_seed(self.seed, 2 * replication as u64)
    }

    /// Evaluation cohorts are shared by all methods of a replication.
    pub fn eval_seed(&self, replication: usize) -> u64 {
        derive_seed(self.seed, 2 * replication as u64 + 1)
    }
}

/// Behavior-policy model used for estimation: known randomization for
/// the toy model, a fitted logistic model for the glucose model.
pub fn estimation_propensity(env: &SimEnv, data: &Dataset) -> Result<PropensityModel> {
    match env {
        SimEnv::Toy(_) => PropensityModel::known(env.behavior_policy().probs().to_vec()),
        SimEnv::T1d(_) => Ok(fit_logistic_propensity(data)?.model),
    }
}

/// Fits `method` on `data` and returns the policy to evaluate.
pub fn fit_method(
    method: Method,
    env: &SimEnv,
    data: &Dataset,
    propensity: &PropensityModel,
    gamma: f64,
    search: &SearchConfig,
    ggq: &GgqConfig,
) -> Result<Arc<dyn Policy>> {
    match method {
        Method::VLearn(basis) => {
            let fmap = FeatureMap::fit(basis, data)?;
            let fit = optimize_policy(data, propensity, &fmap, gamma, search)?;
            Ok(Arc::new(fit.policy))
        }
        Method::Ggq => {
            let fit = fit_ggq(data, gamma, ggq)?;
            Ok(Arc::new(GreedyPolicy::new(fit.model)))
        }
        Method::Observed => Ok(Arc::new(env.behavior_policy())),
    }
}

/// Per-method rollout values of one replication; `None` marks a failed fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub values: Vec<(Method, Option<f64>)>,
}

/// Generate data, fit every method, roll each policy out.
pub fn run_replication(config: &ExperimentConfig, replication: usize) -> Result<ReplicationOutcome> {
    config.validate()?;
    let env = &config.env;
    let data_seed = config.data_seed(replication);
    let data = generate_offline(env, &env.behavior_policy(), config.n, config.horizon, config.burn_in, data_seed)?;
    let propensity = estimation_propensity(env, &data);
    let mut values = Vec::with_capacity(config.methods.len());
    for (k, &method) in config.methods.iter().enumerate() {
        let seed = derive_seed(data_seed, k as u64 + 1);
        let search = SearchConfig { seed, ..config.search };
        let ggq = GgqConfig { seed, ..config.ggq };
        let fitted = propensity
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|prop| fit_method(method, env, &data, prop, config.gamma, &search, &ggq));
        let value = fitted.and_then(|policy| {
            rollout_value(
                env,
                policy.as_ref(),
                config.n_eval,
                config.t_eval,
                config.burn_in,
                config.eval_seed(replication),
            )
        });
        match value {
            Ok(v) => values.push((method, Some(v))),
            Err(e) => {
                log::warn!("replication {replication}: {} failed ({e})", method.id());
                values.push((method, None));
            }
        }
    }
    Ok(ReplicationOutcome { replication, values })
}

/// Summary of one method over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub n: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub mean_value: f64,
    /// Sample standard deviation of the per-replication values.
    pub mc_sd: f64,
    /// `mc_sd / √replications`.
    pub mc_se: f64,
    /// Replications that produced a value.
    pub replications: usize,
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 for a
/// single value, NaN for none).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, libm::sqrt(ss / (n - 1) as f64))
}

pub fn summarize(method: &str, n: usize, horizon: usize, gamma: f64, values: &[f64]) -> ResultRow {
    let (mean_value, mc_sd) = mean_sd(values);
    ResultRow {
        method: method.into(),
        n,
        horizon,
        gamma,
        mean_value,
        mc_sd,
        mc_se: mc_sd / libm::sqrt(values.len().max(1) as f64),
        replications: values.len(),
    }
}

/// One row per method, reducing outcomes in replication order.
pub fn aggregate(config: &ExperimentConfig, outcomes: &[ReplicationOutcome]) -> Vec<ResultRow> {
    let mut sorted: Vec<&ReplicationOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.replication);
    config
        .methods
        .iter()
        .map(|&m| {
            let values: Vec<f64> = sorted
                .iter()
                .filter_map(|o| o.values.iter().find(|(mm, _)| *mm == m).and_then(|(_, v)| *v))
                .collect();
            summarize(&m.id(), config.n, config.horizon, config.gamma, &values)
        })
        .collect()
}

/// All replications, sequentially.
pub fn run_offline_experiment(config: &ExperimentConfig) -> Result<(Vec<ResultRow>, Vec<ReplicationOutcome>)> {
    config.validate()?;
    let outcomes = (0..config.replications)
        .map(|r| run_replication(config, r))
        .collect::<Result<Vec<_>>>()?;
    Ok((aggregate(config, &outcomes), outcomes))
}

/// Whether online patients share one policy or get their own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnlineMode {
    Universal,
    Individualized,
}

/// Settings of an online experiment cell.
#[derive(Debug, Clone)]
pub struct OnlineExperiment {
    pub env: SimEnv,
    pub method: Method,
    pub mode: OnlineMode,
    pub n: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub seed: u64,
    pub search: SearchConfig,
    pub ggq: GgqConfig,
}

impl OnlineExperiment {
    pub fn estimator(&self) -> Result<alloc::boxed::Box<dyn PolicyEstimator>> {
        match self.method {
            Method::VLearn(basis) => Ok(alloc::boxed::Box::new(VLearnEstimator {
                basis,
                gamma: self.gamma,
                search: self.search,
            })),
            Method::Ggq => Ok(alloc::boxed::Box::new(GgqEstimator {
                gamma: self.gamma,
                config: self.ggq,
                epsilon_base: 0.5,
            })),
            Method::Observed => Err(Error::InvalidParameter("the observed policy is not estimated online".into())),
        }
    }

    /// Realized online value of replication `replication`.
    pub fn run(&self, replication: usize) -> Result<f64> {
        let estimator = self.estimator()?;
        let config = OnlineConfig::new(self.n, self.horizon, derive_seed(self.seed, replication as u64));
        let result = match self.mode {
            OnlineMode::Universal => run_online(&self.env, estimator.as_ref(), &config)?,
            OnlineMode::Individualized => run_online_individualized(&self.env, estimator.as_ref(), &config)?,
        };
        Ok(result.value)
    }
}

/// `Eₙ Σₜ γᵗ Uᵗ`: each patient's discounted utility sum from the start of
/// follow-up, averaged over patients.
pub fn discounted_observed_value(dataset: &Dataset, gamma: f64) -> f64 {
    let total: f64 = dataset
        .trajectories()
        .iter()
        .map(|traj| {
            let mut discount = 1.0;
            let mut sum = 0.0;
            for (t, u) in traj.utilities().iter().enumerate() {
                if traj.followup()[t] {
                    sum += discount * u;
                }
                discount *= gamma;
            }
            sum
        })
        .sum();
    total / dataset.n_patients() as f64
}

/// `(label, probability)` for every action of `policy` at `state`.
pub fn report_action_probabilities(policy: &dyn Policy, state: &[f64], labels: &[String]) -> Result<Vec<(String, f64)>> {
    let k = policy.action_count();
    if labels.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: labels.len(),
        });
    }
    let probs = policy.probabilities(state);
    Ok(labels.iter().cloned().zip(probs).collect())
}

/// Renders the table as `label<TAB>probability` lines with four decimals.
pub fn format_action_probabilities(rows: &[(String, f64)]) -> String {
    let mut out = String::new();
    for (label, p) in rows {
        out.push_str(&alloc::format!("{label}\t{p:.4}\n"));
    }
    out
}
