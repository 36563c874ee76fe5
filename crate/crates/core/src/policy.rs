//! Randomized decision rules.
//!
//! [`SoftmaxPolicy`] is the parametric class searched by V-learning. The
//! last action is the reference level: its logit is fixed at zero and
//! every other action `j` has logit `xᵀβ_j`, where `x` is the raw state
//! with a trailing 1 appended.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

/// A state-dependent distribution over `action_count` actions.
pub trait Policy: Send + Sync + core::fmt::Debug {
    fn action_count(&self) -> usize;

    /// Writes the action distribution for `state` into `out`.
    fn probabilities_into(&self, state: &[f64], out: &mut [f64]);

    fn probabilities(&self, state: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.action_count()];
        self.probabilities_into(state, &mut out);
        out
    }
}

/// Draws an index from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the total; take the last action with mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn sample_action<P: Policy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    state: &[f64],
    rng: &mut R,
) -> usize {
    let mut probs = [0.0; 16];
    let k = policy.action_count();
    if k <= probs.len() {
        policy.probabilities_into(state, &mut probs[..k]);
        sample_index(&probs[..k], rng)
    } else {
        sample_index(&policy.probabilities(state), rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    action_count: usize,
    input_dim: usize,
    // (K - 1) x d, row-major; column d - 1 multiplies the intercept
    beta: Vec<f64>,
}

impl SoftmaxPolicy {
    /// `beta` is row-major `(K - 1) × d` with `d = state_dim + 1`.
    pub fn new(action_count: usize, state_dim: usize, beta: Vec<f64>) -> Result<Self> {
        if action_count < 2 {
            return Err(Error::InvalidParameter(
                "a softmax policy needs at least two actions".into(),
            ));
        }
        let input_dim = state_dim + 1;
        if beta.len() != (action_count - 1) * input_dim {
            return Err(Error::DimensionMismatch {
                expected: (action_count - 1) * input_dim,
                found: beta.len(),
            });
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("policy coefficients"));
        }
        Ok(SoftmaxPolicy {
            action_count,
            input_dim,
            beta,
        })
    }

    /// The uniform policy (`β = 0`).
    pub fn uniform(action_count: usize, state_dim: usize) -> Result<Self> {
        Self::new(
            action_count,
            state_dim,
            alloc::vec![0.0; (action_count - 1) * (state_dim + 1)],
        )
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Policy-feature dimension `d` (state dimension plus intercept).
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn state_dim(&self) -> usize {
        self.input_dim - 1
    }

    fn logit(&self, row: usize, state: &[f64]) -> f64 {
        let coef = &self.beta[row * self.input_dim..(row + 1) * self.input_dim];
        let (slopes, intercept) = coef.split_at(self.input_dim - 1);
        intercept[0] + slopes.iter().zip(state).map(|(b, x)| b * x).sum::<f64>()
    }
}

impl Policy for SoftmaxPolicy {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn probabilities_into(&self, state: &[f64], out: &mut [f64]) {
        debug_assert_eq!(state.len(), self.input_dim - 1);
        let k = self.action_count;
        let mut max = 0.0f64;
        for j in 0..k - 1 {
            out[j] = self.logit(j, state);
            max = max.max(out[j]);
        }
        out[k - 1] = 0.0;
        let mut total = 0.0;
        for v in out[..k].iter_mut() {
            *v = libm::exp(*v - max);
            total += *v;
        }
        for v in out[..k].iter_mut() {
            *v /= total;
        }
    }
}

/// A state-independent distribution, e.g. a micro-randomized design.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPolicy {
    probs: Vec<f64>,
}

impl FixedPolicy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_simplex(&probs)?;
        Ok(FixedPolicy { probs })
    }

    pub fn uniform(action_count: usize) -> Self {
        FixedPolicy {
            probs: alloc::vec![1.0 / action_count as f64; action_count],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl Policy for FixedPolicy {
    fn action_count(&self) -> usize {
        self.probs.len()
    }

    fn probabilities_into(&self, _state: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.probs);
    }
}

pub(crate) fn check_simplex(probs: &[f64]) -> Result<()> {
    if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter(
            "probabilities must lie in [0, 1]".into(),
        ));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(alloc::format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Follows `main` with probability `1 - epsilon` and `fallback` otherwise.
#[derive(Debug, Clone)]
pub struct MixturePolicy {
    main: Arc<dyn Policy>,
    fallback: Arc<dyn Policy>,
    epsilon: f64,
}

impl MixturePolicy {
    pub fn new(main: Arc<dyn Policy>, fallback: Arc<dyn Policy>, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter("epsilon must lie in [0, 1]".into()));
        }
        if main.action_count() != fallback.action_count() {
            return Err(Error::DimensionMismatch {
                expected: main.action_count(),
                found: fallback.action_count(),
            });
        }
        Ok(MixturePolicy {
            main,
            fallback,
            epsilon,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Policy for MixturePolicy {
    fn action_count(&self) -> usize {
        self.main.action_count()
    }

    fn probabilities_into(&self, state: &[f64], out: &mut [f64]) {
        if self.epsilon == 0.0 {
            return self.main.probabilities_into(state, out);
        }
        if self.epsilon == 1.0 {
            return self.fallback.probabilities_into(state, out);
        }
        let k = out.len();
        let mut other = [0.0; 16];
        let mut heap;
        let other: &mut [f64] = if k <= other.len() {
            &mut other[..k]
        } else {
            heap = alloc::vec![0.0; k];
            &mut heap
        };
        self.main.probabilities_into(state, out);
        self.fallback.probabilities_into(state, other);
        for (o, f) in out.iter_mut().zip(other.iter()) {
            *o = (1.0 - self.epsilon) * *o + self.epsilon * f;
        }
    }
}

/// Probability vector putting `1 - epsilon` on `greedy` and spreading
/// `epsilon` evenly over the other actions.
pub fn epsilon_greedy(greedy: usize, action_count: usize, epsilon: f64) -> Result<Vec<f64>> {
    if action_count < 2 {
        return Err(Error::InvalidParameter(
            "epsilon-greedy needs at least two actions".into(),
        ));
    }
    if greedy >= action_count {
        return Err(Error::ActionOutOfRange {
            action: greedy,
            action_count,
        });
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter("epsilon must lie in [0, 1]".into()));
    }
    let mut probs = alloc::vec![epsilon / (action_count - 1) as f64; action_count];
    probs[greedy] = 1.0 - epsilon;
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn zero_beta_is_uniform() {
        let p = SoftmaxPolicy::uniform(2, 3).unwrap();
        assert_eq!(p.probabilities(&[1.0, -4.0, 9.0]), vec![0.5, 0.5]);
        let p = SoftmaxPolicy::uniform(8, 2).unwrap();
        for v in p.probabilities(&[3.0, 1.0]) {
            assert!((v - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn binary_reduces_to_logistic() {
        let b0 = 0.7;
        let p = SoftmaxPolicy::new(2, 2, vec![0.0, 0.0, b0]).unwrap();
        let sigma = 1.0 / (1.0 + libm::exp(-b0));
        let probs = p.probabilities(&[5.0, -3.0]);
        assert!((probs[0] - sigma).abs() < 1e-15);
        assert!((probs[1] - (1.0 - sigma)).abs() < 1e-15);
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let p = SoftmaxPolicy::new(3, 1, vec![800.0, 0.0, -800.0, 0.0]).unwrap();
        let probs = p.probabilities(&[1.0]);
        assert!(probs.iter().all(|v| v.is_finite()));
        assert!((probs[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_beta() {
        assert!(matches!(
            SoftmaxPolicy::new(2, 1, vec![f64::NAN, 0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn epsilon_greedy_examples() {
        assert_eq!(epsilon_greedy(0, 2, 0.5).unwrap(), vec![0.5, 0.5]);
        let p = epsilon_greedy(2, 4, 0.3).unwrap();
        let want = [0.1, 0.1, 0.7, 0.1];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(epsilon_greedy(1, 3, 0.0).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(epsilon_greedy(0, 1, 0.1).is_err());
    }

    #[test]
    fn mixture_limits() {
        let main: Arc<dyn Policy> = Arc::new(FixedPolicy::new(vec![0.9, 0.1]).unwrap());
        let fb: Arc<dyn Policy> = Arc::new(FixedPolicy::new(vec![0.2, 0.8]).unwrap());
        let m = MixturePolicy::new(main.clone(), fb.clone(), 1.0).unwrap();
        assert_eq!(m.probabilities(&[0.0]), vec![0.2, 0.8]);
        let m = MixturePolicy::new(main.clone(), fb.clone(), 0.0).unwrap();
        assert_eq!(m.probabilities(&[0.0]), vec![0.9, 0.1]);
        let m = MixturePolicy::new(main, fb, 0.5).unwrap();
        let p = m.probabilities(&[0.0]);
        assert!((p[0] - 0.55).abs() < 1e-15 && (p[1] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn point_mass_always_sampled() {
        let p = SoftmaxPolicy::new(2, 1, vec![0.0, 1000.0]).unwrap();
        let mut rng = stream_rng(3, 0);
        for _ in 0..1000 {
            assert_eq!(sample_action(&p, &[0.0], &mut rng), 0);
        }
    }

    #[test]
    fn empirical_frequencies_match_probabilities() {
        let p = SoftmaxPolicy::new(3, 1, vec![0.3, 0.2, -0.5, 0.1]).unwrap();
        let state = [0.8];
        let probs = p.probabilities(&state);
        let mut rng = stream_rng(11, 0);
        let draws = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            counts[sample_action(&p, &state, &mut rng)] += 1;
        }
        for (c, q) in counts.iter().zip(&probs) {
            let freq = *c as f64 / draws as f64;
            let se = libm::sqrt(q * (1.0 - q) / draws as f64);
            assert!((freq - q).abs() < 3.0 * se, "freq {freq} vs {q}");
        }
    }

    #[test]
    fn sampling_reproducible_given_seed() {
        let p = SoftmaxPolicy::new(2, 1, vec![0.4, -0.2]).unwrap();
        let draw = |seed| {
            let mut rng = stream_rng(seed, 0);
            (0..50).map(|_| sample_action(&p, &[1.0], &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    // Direct evaluation of exp(z_j) / (1 + Σ exp(z_k)) without max shift.
    fn direct_softmax(beta: &[f64], k: usize, state: &[f64]) -> Vec<f64> {
        let d = state.len() + 1;
        let z: Vec<f64> = (0..k - 1)
            .map(|j| {
                let row = &beta[j * d..(j + 1) * d];
                row[d - 1] + row[..d - 1].iter().zip(state).map(|(b, x)| b * x).sum::<f64>()
            })
            .collect();
        let denom = 1.0 + z.iter().map(|v| libm::exp(*v)).sum::<f64>();
        let mut out: Vec<f64> = z.iter().map(|v| libm::exp(*v) / denom).collect();
        out.push(1.0 / denom);
        out
    }

    proptest! {
        #[test]
        fn softmax_matches_direct_formula(
            k in 2usize..6,
            raw in proptest::collection::vec(-3.0f64..3.0, 30),
            state in proptest::collection::vec(-3.0f64..3.0, 2),
        ) {
            let d = state.len() + 1;
            let beta = raw[..(k - 1) * d].to_vec();
            let p = SoftmaxPolicy::new(k, state.len(), beta.clone()).unwrap();
            let probs = p.probabilities(&state);
            let want = direct_softmax(&beta, k, &state);
            let total: f64 = probs.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (a, b) in probs.iter().zip(&want) {
                prop_assert!(*a > 0.0 && *a < 1.0);
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn shifting_all_logits_leaves_probabilities(
            raw in proptest::collection::vec(-3.0f64..3.0, 6),
            shift in -50.0f64..50.0,
        ) {
            // adding c to every logit including the reference is the same as
            // leaving the reference at 0 and subtracting nothing: compare the
            // max-shifted evaluation with one whose logits are all offset by c
            let state = [0.4, -1.1];
            let p = SoftmaxPolicy::new(3, 2, raw.clone()).unwrap();
            let probs = p.probabilities(&state);
            let mut z: Vec<f64> = (0..2)
                .map(|j| raw[j * 3 + 2] + raw[j * 3] * state[0] + raw[j * 3 + 1] * state[1])
                .collect();
            z.push(0.0);
            let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
            let max = shifted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = shifted.iter().map(|v| libm::exp(v - max)).collect();
            let s: f64 = e.iter().sum();
            for (a, b) in probs.iter().zip(e.iter().map(|v| v / s)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn epsilon_greedy_is_a_simplex(k in 2usize..10, g in 0usize..10, eps in 0.0f64..=1.0) {
            let g = g % k;
            let p = epsilon_greedy(g, k, eps).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((p[g] - (1.0 - eps)).abs() < 1e-15);
            prop_assert!(p.iter().all(|v| *v >= 0.0));
        }
    }
}
