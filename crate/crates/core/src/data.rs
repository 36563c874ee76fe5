//! Trajectory data model and utility definitions.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::format;

use crate::error::{Error, Result};

/// One patient's logged sequence of states, actions and utilities.
///
/// A trajectory with `T` transitions holds `T + 1` states. `followup[t]`
/// records whether the patient was still observed at time `t`; once it
/// turns false it stays false, and transitions starting at an
/// unobserved time carry zero utility and are skipped by the estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    patient_id: String,
    state_dim: usize,
    states: Vec<f64>,
    actions: Vec<usize>,
    utilities: Vec<f64>,
    followup: Vec<bool>,
    behavior_probs: Option<Vec<f64>>,
}

impl Trajectory {
    /// `states` is row-major with `actions.len() + 1` rows of `state_dim`.
    /// An empty `followup` means the patient is followed throughout.
    pub fn new(
        patient_id: impl Into<String>,
        state_dim: usize,
        states: Vec<f64>,
        actions: Vec<usize>,
        utilities: Vec<f64>,
        followup: Vec<bool>,
    ) -> Result<Self> {
        let patient_id = patient_id.into();
        let bad = |reason: String| Error::InvalidTrajectory {
            patient: patient_id.clone(),
            reason,
        };
        if state_dim == 0 {
            return Err(bad("state dimension must be positive".into()));
        }
        let horizon = actions.len();
        if states.len() != (horizon + 1) * state_dim {
            return Err(bad(format!(
                "expected {} state values for {} transitions of dimension {}, found {}",
                (horizon + 1) * state_dim,
                horizon,
                state_dim,
                states.len()
            )));
        }
        if utilities.len() != horizon {
            return Err(bad(format!(
                "{} utilities for {} transitions",
                utilities.len(),
                horizon
            )));
        }
        let followup = if followup.is_empty() {
            alloc::vec![true; horizon + 1]
        } else {
            followup
        };
        if followup.len() != horizon + 1 {
            return Err(bad(format!(
                "{} follow-up flags for {} states",
                followup.len(),
                horizon + 1
            )));
        }
        if let Some(t) = followup.windows(2).position(|w| !w[0] && w[1]) {
            return Err(bad(format!("follow-up resumes at time {} after loss", t + 1)));
        }
        if states.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite state value".into()));
        }
        let mut trajectory = Trajectory {
            patient_id,
            state_dim,
            states,
            actions,
            utilities,
            followup,
            behavior_probs: None,
        };
        trajectory.zero_after_dropout();
        Ok(trajectory)
    }

    /// Attaches the probability with which each logged action was chosen.
    pub fn with_behavior_probs(mut self, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != self.actions.len() {
            return Err(Error::InvalidTrajectory {
                patient: self.patient_id.clone(),
                reason: format!(
                    "{} behavior probabilities for {} transitions",
                    probs.len(),
                    self.actions.len()
                ),
            });
        }
        if probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::InvalidTrajectory {
                patient: self.patient_id.clone(),
                reason: "behavior probabilities must lie in (0, 1]".into(),
            });
        }
        self.behavior_probs = Some(probs);
        Ok(self)
    }

    fn zero_after_dropout(&mut self) {
        for (u, &f) in self.utilities.iter_mut().zip(&self.followup) {
            if !f {
                *u = 0.0;
            }
        }
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Number of logged transitions `T_i`.
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn states_flat(&self) -> &[f64] {
        &self.states
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    pub fn followup(&self) -> &[bool] {
        &self.followup
    }

    pub fn behavior_probs(&self) -> Option<&[f64]> {
        self.behavior_probs.as_deref()
    }

    /// Number of transitions that start while the patient is followed.
    pub fn observed_transitions(&self) -> usize {
        self.followup[..self.horizon()].iter().filter(|f| **f).count()
    }
}

/// A borrowed view of one observed transition.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub patient: usize,
    pub t: usize,
    pub state: &'a [f64],
    pub action: usize,
    pub utility: f64,
    pub next_state: &'a [f64],
    pub behavior_prob: Option<f64>,
}

/// A validated collection of trajectories sharing one action set and
/// state dimension. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
    action_count: usize,
    state_dim: usize,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>, action_count: usize) -> Result<Self> {
        if action_count == 0 {
            return Err(Error::InvalidParameter("action count must be positive".into()));
        }
        let first = trajectories.first().ok_or(Error::EmptyDataset)?;
        let state_dim = first.state_dim;
        for traj in &trajectories {
            if traj.state_dim != state_dim {
                return Err(Error::DimensionMismatch {
                    expected: state_dim,
                    found: traj.state_dim,
                });
            }
            if let Some(&action) = traj.actions.iter().find(|a| **a >= action_count) {
                return Err(Error::ActionOutOfRange {
                    action,
                    action_count,
                });
            }
        }
        if trajectories.iter().all(|t| t.observed_transitions() == 0) {
            return Err(Error::EmptyDataset);
        }
        Ok(Dataset {
            trajectories,
            action_count,
            state_dim,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Number of patients `n`.
    pub fn n_patients(&self) -> usize {
        self.trajectories.len()
    }

    /// Total number of observed transitions across patients.
    pub fn transition_count(&self) -> usize {
        self.trajectories
            .iter()
            .map(Trajectory::observed_transitions)
            .sum()
    }

    /// Observed transitions in patient-then-time order.
    pub fn transitions(&self) -> impl Iterator<Item = Transition<'_>> + '_ {
        self.trajectories
            .iter()
            .enumerate()
            .flat_map(|(patient, traj)| {
                (0..traj.horizon())
                    .filter(move |&t| traj.followup[t])
                    .map(move |t| Transition {
                        patient,
                        t,
                        state: traj.state(t),
                        action: traj.actions[t],
                        utility: traj.utilities[t],
                        next_state: traj.state(t + 1),
                        behavior_prob: traj.behavior_probs.as_ref().map(|p| p[t]),
                    })
            })
    }

    /// Every state observed while in follow-up, including final states.
    pub fn observed_states(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.trajectories.iter().flat_map(|traj| {
            (0..=traj.horizon())
                .filter(move |&t| traj.followup[t])
                .map(move |t| traj.state(t))
        })
    }

    /// Dataset restricted to the given patient indices.
    pub fn subset(&self, patients: &[usize]) -> Result<Dataset> {
        let trajectories = patients
            .iter()
            .map(|&i| self.trajectories[i].clone())
            .collect();
        Dataset::new(trajectories, self.action_count)
    }
}

/// How utilities are derived from observed states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilitySpec {
    /// `2 s'_1 + s'_2 - (2a - 1) / 4` on the two-covariate model.
    SimpleToy,
    /// Sum of glycemic weights of the glucose reading before (`state`)
    /// and after (`next_state`) the decision.
    Glycemic { glucose_index: usize },
    /// Utilities are taken as logged.
    Column,
}

impl UtilitySpec {
    /// `u(next_state, action, state)`.
    pub fn evaluate(&self, next_state: &[f64], action: usize, state: &[f64]) -> f64 {
        match *self {
            UtilitySpec::SimpleToy => {
                let sign = if action == 1 { 1.0 } else { -1.0 };
                2.0 * next_state[0] + next_state[1] - 0.25 * sign
            }
            UtilitySpec::Glycemic { glucose_index } => {
                (glycemic_weight(state[glucose_index]) + glycemic_weight(next_state[glucose_index]))
                    as f64
            }
            UtilitySpec::Column => f64::NAN,
        }
    }

    fn check(&self, state_dim: usize) -> Result<()> {
        match *self {
            UtilitySpec::SimpleToy if state_dim < 2 => Err(Error::ComponentOutOfRange {
                index: 1,
                dim: state_dim,
            }),
            UtilitySpec::Glycemic { glucose_index } if glucose_index >= state_dim => {
                Err(Error::ComponentOutOfRange {
                    index: glucose_index,
                    dim: state_dim,
                })
            }
            _ => Ok(()),
        }
    }
}

/// Clinical severity weight of an average glucose reading in mg/dL.
pub fn glycemic_weight(glucose: f64) -> i32 {
    if glucose <= 70.0 {
        -3
    } else if glucose <= 80.0 {
        -1
    } else if glucose <= 120.0 {
        0
    } else if glucose <= 150.0 {
        -1
    } else {
        -2
    }
}

/// Recomputes every utility from the states under `spec`. Utilities of
/// transitions after loss to follow-up are zero. With
/// [`UtilitySpec::Column`] the logged utilities are kept.
pub fn compute_utilities(dataset: &Dataset, spec: &UtilitySpec) -> Result<Dataset> {
    spec.check(dataset.state_dim)?;
    if let UtilitySpec::Column = spec {
        return Ok(dataset.clone());
    }
    let mut out = dataset.clone();
    for traj in &mut out.trajectories {
        for t in 0..traj.horizon() {
            traj.utilities[t] = if traj.followup[t] {
                spec.evaluate(traj.state(t + 1), traj.actions[t], traj.state(t))
            } else {
                0.0
            };
        }
    }
    Ok(out)
}
