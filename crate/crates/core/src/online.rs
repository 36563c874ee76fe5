//! Online estimation: patients are followed step by step and the policy
//! they follow is re-estimated in batches from all data collected so far.
//!
//! Every logged action stores the probability that the then-active policy
//! gave it, and refits use those probabilities as propensities.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::basis::{BasisKind, FeatureMap};
use crate::data::{Dataset, Trajectory};
use crate::error::{Error, Result};
use crate::ggq::{fit_ggq, GgqConfig, GreedyPolicy};
use crate::policy::{sample_index, FixedPolicy, MixturePolicy, Policy};
use crate::propensity::PropensityModel;
use crate::rng::{derive_seed, StreamRng};
use crate::simenv::{patient_rng, PatientSim, SimEnv, DEFAULT_BURN_IN};
use crate::vlearn::{optimize_policy, SearchConfig};

/// Something that turns the data collected so far into a policy.
pub trait PolicyEstimator: Send + Sync {
    fn name(&self) -> String;

    /// `update` counts estimations from 1.
    fn estimate(&self, data: &Dataset, update: usize, seed: u64) -> Result<Arc<dyn Policy>>;
}

/// V-learning over the softmax class; the fitted randomized rule is
/// followed as is.
#[derive(Debug, Clone)]
pub struct VLearnEstimator {
    pub basis: BasisKind,
    pub gamma: f64,
    pub search: SearchConfig,
}

impl PolicyEstimator for VLearnEstimator {
    fn name(&self) -> String {
        alloc::format!("vl_{}", self.basis.name())
    }

    fn estimate(&self, data: &Dataset, _update: usize, seed: u64) -> Result<Arc<dyn Policy>> {
        let fmap = FeatureMap::fit(self.basis, data)?;
        // penalties default to the current data volume
        let search = SearchConfig { seed, ..self.search };
        let fit = optimize_policy(data, &PropensityModel::logged(), &fmap, self.gamma, &search)?;
        Ok(Arc::new(fit.policy))
    }
}

/// GGQ followed ε-greedily with `ε = base^update`.
#[derive(Debug, Clone)]
pub struct GgqEstimator {
    pub gamma: f64,
    pub config: GgqConfig,
    pub epsilon_base: f64,
}

impl PolicyEstimator for GgqEstimator {
    fn name(&self) -> String {
        "ggq".into()
    }

    fn estimate(&self, data: &Dataset, update: usize, seed: u64) -> Result<Arc<dyn Policy>> {
        let config = GgqConfig { seed, ..self.config };
        let fit = fit_ggq(data, self.gamma, &config)?;
        let epsilon = libm::pow(self.epsilon_base, update as f64);
        Ok(Arc::new(GreedyPolicy::with_epsilon(fit.model, epsilon)?))
    }
}

/// Always returns the same policy.
#[derive(Debug, Clone)]
pub struct FrozenEstimator {
    pub policy: Arc<dyn Policy>,
}

impl PolicyEstimator for FrozenEstimator {
    fn name(&self) -> String {
        "frozen".into()
    }

    fn estimate(&self, _data: &Dataset, _update: usize, _seed: u64) -> Result<Arc<dyn Policy>> {
        Ok(self.policy.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineConfig {
    pub n_patients: usize,
    /// Steps followed after burn-in.
    pub horizon: usize,
    pub burn_in: usize,
    pub first_update: usize,
    pub update_interval: usize,
    /// Individualized mode mixes patient policies with the first pooled
    /// policy with weight `ε_k = mixing_base^k` at update `k`.
    pub mixing_base: f64,
    pub seed: u64,
}

impl OnlineConfig {
    pub fn new(n_patients: usize, horizon: usize, seed: u64) -> Self {
        OnlineConfig {
            n_patients,
            horizon,
            burn_in: DEFAULT_BURN_IN,
            first_update: 12,
            update_interval: 6,
            mixing_base: 0.5,
            seed,
        }
    }

    /// Update times `first, first + interval, …` that still leave at least
    /// one step to act on.
    pub fn update_times(&self) -> Vec<usize> {
        let mut times = Vec::new();
        let mut t = self.first_update;
        while t < self.horizon {
            times.push(t);
            if self.update_interval == 0 {
                break;
            }
            t += self.update_interval;
        }
        times
    }

    fn validate(&self) -> Result<()> {
        if self.n_patients == 0 || self.horizon == 0 {
            return Err(Error::InvalidParameter("online run needs n >= 1 and T >= 1".into()));
        }
        if self.first_update == 0 {
            return Err(Error::InvalidParameter("first update must come after at least one step".into()));
        }
        if !(0.0..=1.0).contains(&self.mixing_base) {
            return Err(Error::InvalidParameter("mixing base must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    /// 1-based estimation count.
    pub index: usize,
    pub t: usize,
    pub estimator: String,
    /// Mean utility over everything observed before this update.
    pub value_so_far: f64,
    /// Snapshot adopted by the pooled policy (or, in individualized mode,
    /// by the first patient) after this update.
    pub snapshot: usize,
    /// Fits that failed and left the previous policy in place.
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct OnlineResult {
    /// Mean utility over all patients and all steps from the first update
    /// on (all steps when no update happens).
    pub value: f64,
    pub update_times: Vec<usize>,
    pub updates: Vec<UpdateRecord>,
    /// Everything observed, with per-transition generation probabilities.
    pub dataset: Dataset,
    /// Policy snapshots; snapshot 0 is the initial policy.
    pub snapshots: Vec<Arc<dyn Policy>>,
    /// `active[i][t]`: snapshot that generated patient `i`'s action `t`.
    pub active: Vec<Vec<usize>>,
}

struct Cohort<'a> {
    env: &'a SimEnv,
    p: usize,
    patients: Vec<PatientSim>,
    rngs: Vec<StreamRng>,
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<usize>>,
    utilities: Vec<Vec<f64>>,
    logged: Vec<Vec<f64>>,
    active: Vec<Vec<usize>>,
}

impl<'a> Cohort<'a> {
    fn start(env: &'a SimEnv, config: &OnlineConfig, initial: &dyn Policy) -> Self {
        let n = config.n_patients;
        let mut patients = Vec::with_capacity(n);
        let mut rngs = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = patient_rng(config.seed, i);
            let mut patient = env.new_patient(&mut rng);
            env.burn_in(&mut patient, initial, config.burn_in, &mut rng);
            let mut s = Vec::with_capacity((config.horizon + 1) * env.state_dim());
            patient.write_state(&mut s);
            states.push(s);
            patients.push(patient);
            rngs.push(rng);
        }
        Cohort {
            env,
            p: env.state_dim(),
            patients,
            rngs,
            states,
            actions: alloc::vec![Vec::new(); n],
            utilities: alloc::vec![Vec::new(); n],
            logged: alloc::vec![Vec::new(); n],
            active: alloc::vec![Vec::new(); n],
        }
    }

    /// One step for every patient; `policy_of(i)` gives patient `i`'s
    /// snapshot id.
    fn step(&mut self, snapshots: &[Arc<dyn Policy>], policy_of: &[usize]) {
        let mut probs = alloc::vec![0.0; self.env.action_count()];
        for i in 0..self.patients.len() {
            let t = self.actions[i].len();
            let state = &self.states[i][t * self.p..(t + 1) * self.p];
            let id = policy_of[i];
            snapshots[id].probabilities_into(state, &mut probs);
            let a = sample_index(&probs, &mut self.rngs[i]);
            self.logged[i].push(probs[a]);
            self.actions[i].push(a);
            self.active[i].push(id);
            let u = self.env.step(&mut self.patients[i], a, &mut self.rngs[i]);
            self.utilities[i].push(u);
            self.patients[i].write_state(&mut self.states[i]);
        }
    }

    fn trajectory(&self, i: usize) -> Result<Trajectory> {
        let t = self.actions[i].len();
        Trajectory::new(
            alloc::format!("{}", i + 1),
            self.p,
            self.states[i][..(t + 1) * self.p].to_vec(),
            self.actions[i].clone(),
            self.utilities[i].clone(),
            Vec::new(),
        )?
        .with_behavior_probs(self.logged[i].clone())
    }

    fn dataset(&self) -> Result<Dataset> {
        let trajs = (0..self.patients.len())
            .map(|i| self.trajectory(i))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(trajs, self.env.action_count())
    }

    fn mean_utility(&self, from: usize) -> f64 {
        let (mut total, mut count) = (0.0, 0usize);
        for u in &self.utilities {
            if u.len() > from {
                total += u[from..].iter().sum::<f64>();
                count += u.len() - from;
            }
        }
        if count == 0 {
            f64::NAN
        } else {
            total / count as f64
        }
    }

    fn finish(
        self,
        update_times: Vec<usize>,
        updates: Vec<UpdateRecord>,
        snapshots: Vec<Arc<dyn Policy>>,
    ) -> Result<OnlineResult> {
        let first = update_times.first().copied().unwrap_or(0);
        let value = match self.mean_utility(first) {
            v if v.is_finite() => v,
            _ => self.mean_utility(0),
        };
        Ok(OnlineResult {
            value,
            update_times,
            updates,
            dataset: self.dataset()?,
            snapshots,
            active: self.active,
        })
    }
}

fn initial_policy(env: &SimEnv) -> Arc<dyn Policy> {
    Arc::new(FixedPolicy::uniform(env.action_count()))
}

/// Online estimation with one policy shared by all patients.
///
/// Patients start from the uniform random policy (also used for burn-in).
/// At each update time the estimator is refitted on all data so far; a
/// failed fit keeps the previous policy.
pub fn run_online(env: &SimEnv, estimator: &dyn PolicyEstimator, config: &OnlineConfig) -> Result<OnlineResult> {
    config.validate()?;
    let mut snapshots = alloc::vec![initial_policy(env)];
    let mut cohort = Cohort::start(env, config, snapshots[0].as_ref());
    let update_times = config.update_times();
    let mut updates = Vec::new();
    let mut current = alloc::vec![0usize; config.n_patients];
    let mut next_update = 0;
    for t in 0..config.horizon {
        if next_update < update_times.len() && update_times[next_update] == t {
            let index = next_update + 1;
            let data = cohort.dataset()?;
            let seed = derive_seed(config.seed, index as u64);
            let mut failures = 0;
            match estimator.estimate(&data, index, seed) {
                Ok(policy) => {
                    snapshots.push(policy);
                    current.iter_mut().for_each(|c| *c = snapshots.len() - 1);
                }
                Err(e) => {
                    log::warn!("update {index} at t = {t} failed ({e}); keeping previous policy");
                    failures = 1;
                }
            }
            updates.push(UpdateRecord {
                index,
                t,
                estimator: estimator.name(),
                value_so_far: cohort.mean_utility(0),
                snapshot: current[0],
                failures,
            });
            next_update += 1;
        }
        cohort.step(&snapshots, &current);
    }
    cohort.finish(update_times, updates, snapshots)
}

/// Online estimation with patient-specific policies.
///
/// The first update fits one pooled policy `π̂¹` on all patients. Update
/// `k ≥ 2` fits each patient's policy `π̂ᵢᵏ` on that patient's data alone,
/// and the patient then follows `(1 − ε_k)π̂ᵢᵏ + ε_k π̂¹`. A failed
/// per-patient fit leaves that patient on `π̂¹` for the round.
pub fn run_online_individualized(
    env: &SimEnv,
    estimator: &dyn PolicyEstimator,
    config: &OnlineConfig,
) -> Result<OnlineResult> {
    config.validate()?;
    let n = config.n_patients;
    let mut snapshots = alloc::vec![initial_policy(env)];
    let mut cohort = Cohort::start(env, config, snapshots[0].as_ref());
    let update_times = config.update_times();
    let mut updates = Vec::new();
    let mut current = alloc::vec![0usize; n];
    let mut pooled: Option<usize> = None;
    let mut next_update = 0;
    for t in 0..config.horizon {
        if next_update < update_times.len() && update_times[next_update] == t {
            let index = next_update + 1;
            let seed = derive_seed(config.seed, index as u64);
            let mut failures = 0;
            match pooled {
                None => match estimator.estimate(&cohort.dataset()?, index, seed) {
                    Ok(policy) => {
                        snapshots.push(policy);
                        let id = snapshots.len() - 1;
                        pooled = Some(id);
                        current.iter_mut().for_each(|c| *c = id);
                    }
                    Err(e) => {
                        log::warn!("pooled update at t = {t} failed ({e}); keeping previous policy");
                        failures = 1;
                    }
                },
                Some(pooled_id) => {
                    let epsilon = libm::pow(config.mixing_base, index as f64);
                    for i in 0..n {
                        let data = Dataset::new(alloc::vec![cohort.trajectory(i)?], env.action_count())?;
                        let patient_seed = derive_seed(seed, i as u64);
                        let fitted = estimator.estimate(&data, index, patient_seed).and_then(|own| {
                            MixturePolicy::new(own, snapshots[pooled_id].clone(), epsilon)
                        });
                        match fitted {
                            Ok(mix) => {
                                snapshots.push(Arc::new(mix));
                                current[i] = snapshots.len() - 1;
                            }
                            Err(e) => {
                                log::warn!("patient {} update at t = {t} failed ({e}); using pooled policy", i + 1);
                                current[i] = pooled_id;
                                failures += 1;
                            }
                        }
                    }
                }
            }
            updates.push(UpdateRecord {
                index,
                t,
                estimator: alloc::format!("{}_individualized", estimator.name()),
                value_so_far: cohort.mean_utility(0),
                snapshot: current[0],
                failures,
            });
            next_update += 1;
        }
        cohort.step(&snapshots, &current);
    }
    cohort.finish(update_times, updates, snapshots)
}
