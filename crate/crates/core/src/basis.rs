//! Feature maps for the linear working value model `V(s) = Φ(s)ᵀθ`.
//!
//! Every map starts with a constant 1. State components are min-max
//! scaled with bounds fitted on training states. Gaussian features clamp
//! the scaled value to `[0, 1]` first so unseen states stay bounded;
//! linear and quadratic features use the scaled value as is.

use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Centers of the per-component Gaussian bumps on the scaled axis.
pub const RBF_CENTERS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
/// Bump width on the scaled axis.
pub const RBF_WIDTH: f64 = 0.25;
/// Largest number of distinct states a tabular map will enumerate.
pub const TABULAR_LIMIT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Linear,
    Polynomial2,
    GaussianRbf,
    Tabular,
}

impl BasisKind {
    pub fn name(&self) -> &'static str {
        match self {
            BasisKind::Linear => "linear",
            BasisKind::Polynomial2 => "poly",
            BasisKind::GaussianRbf => "gaussian",
            BasisKind::Tabular => "tabular",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(BasisKind::Linear),
            "poly" | "polynomial" | "polynomial2" => Some(BasisKind::Polynomial2),
            "gaussian" | "rbf" | "gaussian_rbf" => Some(BasisKind::GaussianRbf),
            "tabular" => Some(BasisKind::Tabular),
            _ => None,
        }
    }

    /// Output dimension `q` for state dimension `p` (not defined for tabular).
    pub fn output_dim(&self, p: usize) -> Option<usize> {
        match self {
            BasisKind::Linear => Some(1 + p),
            BasisKind::Polynomial2 => Some(1 + p + p * (p + 1) / 2),
            BasisKind::GaussianRbf => Some(1 + p * RBF_CENTERS.len()),
            BasisKind::Tabular => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    kind: BasisKind,
    mins: Vec<f64>,
    maxs: Vec<f64>,
    // distinct training states in first-seen order (tabular only)
    table: Vec<Vec<f64>>,
    dim: usize,
}

impl FeatureMap {
    /// Fits scaling bounds (and the state table for tabular maps) on every
    /// observed state of `dataset`.
    pub fn fit(kind: BasisKind, dataset: &Dataset) -> Result<Self> {
        let p = dataset.state_dim();
        let mut mins = alloc::vec![f64::INFINITY; p];
        let mut maxs = alloc::vec![f64::NEG_INFINITY; p];
        let mut table: Vec<Vec<f64>> = Vec::new();
        for s in dataset.observed_states() {
            for j in 0..p {
                mins[j] = mins[j].min(s[j]);
                maxs[j] = maxs[j].max(s[j]);
            }
            if kind == BasisKind::Tabular && !table.iter().any(|row| row.as_slice() == s) {
                table.push(s.to_vec());
                if table.len() > TABULAR_LIMIT {
                    return Err(Error::NotDiscrete {
                        distinct: table.len(),
                        limit: TABULAR_LIMIT,
                    });
                }
            }
        }
        if mins.iter().any(|m| !m.is_finite()) {
            return Err(Error::EmptyDataset);
        }
        for j in 0..p {
            if mins[j] == maxs[j] {
                log::warn!("state component {j} is constant; its scaled value is fixed at 0.5");
            }
        }
        let dim = match kind {
            BasisKind::Tabular => table.len(),
            _ => kind.output_dim(p).unwrap_or(0),
        };
        Ok(FeatureMap {
            kind,
            mins,
            maxs,
            table,
            dim,
        })
    }

    /// A map with explicit scaling bounds; `mins = 0, maxs = 1` leaves
    /// states unscaled.
    pub fn with_scaling(kind: BasisKind, mins: Vec<f64>, maxs: Vec<f64>) -> Result<Self> {
        if mins.len() != maxs.len() || mins.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: mins.len(),
                found: maxs.len(),
            });
        }
        if kind == BasisKind::Tabular {
            return Err(Error::InvalidParameter(
                "tabular maps must be fitted on data".into(),
            ));
        }
        let dim = kind.output_dim(mins.len()).unwrap_or(0);
        Ok(FeatureMap {
            kind,
            mins,
            maxs,
            table: Vec::new(),
            dim,
        })
    }

    /// Tabular map over an explicit list of distinct states. The first
    /// state is the reference level.
    pub fn tabular(states: Vec<Vec<f64>>) -> Result<Self> {
        let p = states.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        if states.iter().any(|s| s.len() != p) {
            return Err(Error::InvalidParameter("ragged tabular states".into()));
        }
        let mut mins = alloc::vec![f64::INFINITY; p];
        let mut maxs = alloc::vec![f64::NEG_INFINITY; p];
        for s in &states {
            for j in 0..p {
                mins[j] = mins[j].min(s[j]);
                maxs[j] = maxs[j].max(s[j]);
            }
        }
        Ok(FeatureMap {
            kind: BasisKind::Tabular,
            mins,
            maxs,
            dim: states.len(),
            table: states,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// Number of features `q`, intercept included.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state_dim(&self) -> usize {
        self.mins.len()
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.mins, &self.maxs)
    }

    fn scaled(&self, j: usize, x: f64) -> f64 {
        let range = self.maxs[j] - self.mins[j];
        if range > 0.0 {
            (x - self.mins[j]) / range
        } else {
            0.5
        }
    }

    /// Writes `Φ(state)` into `out` (length [`dim`](Self::dim)).
    pub fn features_into(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        let p = self.state_dim();
        if state.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: state.len(),
            });
        }
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: out.len(),
            });
        }
        out[0] = 1.0;
        match self.kind {
            BasisKind::Linear => {
                for j in 0..p {
                    out[1 + j] = self.scaled(j, state[j]);
                }
            }
            BasisKind::Polynomial2 => {
                for j in 0..p {
                    out[1 + j] = self.scaled(j, state[j]);
                }
                let mut k = 1 + p;
                for i in 0..p {
                    for j in i..p {
                        out[k] = out[1 + i] * out[1 + j];
                        k += 1;
                    }
                }
            }
            BasisKind::GaussianRbf => {
                let denom = 2.0 * RBF_WIDTH * RBF_WIDTH;
                let mut k = 1;
                for j in 0..p {
                    let x = self.scaled(j, state[j]).clamp(0.0, 1.0);
                    for c in RBF_CENTERS {
                        let d = x - c;
                        out[k] = libm::exp(-d * d / denom);
                        k += 1;
                    }
                }
            }
            BasisKind::Tabular => {
                for v in out[1..].iter_mut() {
                    *v = 0.0;
                }
                // reference coding: the first tabulated state is the intercept alone
                match self.table.iter().position(|row| row.as_slice() == state) {
                    Some(0) => {}
                    Some(i) => out[i] = 1.0,
                    None => {
                        return Err(Error::InvalidParameter(
                            "state not present in tabular basis".into(),
                        ))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn features(&self, state: &[f64]) -> Result<Vec<f64>> {
        let mut out = alloc::vec![0.0; self.dim];
        self.features_into(state, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Trajectory;
    use alloc::vec;
    use proptest::prelude::*;

    fn toy_dataset() -> Dataset {
        let states = vec![0.0, -2.0, 1.0, 2.0, 0.5, 0.0];
        let t = Trajectory::new("a", 2, states, vec![0, 1], vec![0.0, 0.0], vec![]).unwrap();
        Dataset::new(vec![t], 2).unwrap()
    }

    #[test]
    fn output_dimensions() {
        let d = toy_dataset();
        assert_eq!(FeatureMap::fit(BasisKind::Linear, &d).unwrap().dim(), 3);
        assert_eq!(FeatureMap::fit(BasisKind::Polynomial2, &d).unwrap().dim(), 6);
        assert_eq!(FeatureMap::fit(BasisKind::GaussianRbf, &d).unwrap().dim(), 11);
        assert_eq!(FeatureMap::fit(BasisKind::Tabular, &d).unwrap().dim(), 3);
    }

    #[test]
    fn identity_scaled_linear() {
        let m = FeatureMap::with_scaling(BasisKind::Linear, vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(m.features(&[0.5, -1.0]).unwrap(), vec![1.0, 0.5, -1.0]);
    }

    #[test]
    fn polynomial_has_squares_and_cross_term() {
        let m =
            FeatureMap::with_scaling(BasisKind::Polynomial2, vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(
            m.features(&[2.0, 3.0]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]
        );
    }

    #[test]
    fn rbf_values() {
        let m = FeatureMap::with_scaling(BasisKind::GaussianRbf, vec![0.0], vec![1.0]).unwrap();
        let f = m.features(&[0.25]).unwrap();
        assert_eq!(f[2], 1.0);
        let f = m.features(&[0.5]).unwrap();
        assert!((f[2] - libm::exp(-0.5)).abs() < 1e-15);
        assert!((f[2] - 0.6065306597126334).abs() < 1e-12);
    }

    #[test]
    fn constant_component_maps_to_half() {
        let t = Trajectory::new("a", 1, vec![3.0, 3.0], vec![0], vec![0.0], vec![]).unwrap();
        let d = Dataset::new(vec![t], 2).unwrap();
        let m = FeatureMap::fit(BasisKind::Linear, &d).unwrap();
        assert_eq!(m.features(&[3.0]).unwrap(), vec![1.0, 0.5]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = FeatureMap::fit(BasisKind::Linear, &toy_dataset()).unwrap();
        assert!(matches!(
            m.features(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn tabular_rejects_continuous_states() {
        let n = TABULAR_LIMIT + 5;
        let states: Vec<f64> = (0..=n).map(|i| i as f64 * 0.37).collect();
        let t = Trajectory::new("a", 1, states, vec![0; n], vec![0.0; n], vec![]).unwrap();
        let d = Dataset::new(vec![t], 2).unwrap();
        assert!(matches!(
            FeatureMap::fit(BasisKind::Tabular, &d),
            Err(Error::NotDiscrete { .. })
        ));
    }

    #[test]
    fn tabular_vectors_are_distinct_indicators() {
        let m = FeatureMap::fit(BasisKind::Tabular, &toy_dataset()).unwrap();
        let a = m.features(&[0.0, -2.0]).unwrap();
        let b = m.features(&[1.0, 2.0]).unwrap();
        let c = m.features(&[0.5, 0.0]).unwrap();
        assert_eq!(a, vec![1.0, 0.0, 0.0]);
        assert_eq!(b, vec![1.0, 1.0, 0.0]);
        assert_eq!(c, vec![1.0, 0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn rbf_features_bounded_and_pure(x in -50.0f64..50.0, y in -50.0f64..50.0) {
            let m = FeatureMap::fit(BasisKind::GaussianRbf, &toy_dataset()).unwrap();
            let f = m.features(&[x, y]).unwrap();
            let g = m.features(&[x, y]).unwrap();
            prop_assert_eq!(f[0], 1.0);
            for (a, b) in f.iter().zip(&g) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            for v in &f[1..] {
                prop_assert!(*v >= libm::exp(-8.0) && *v <= 1.0);
            }
        }
    }
}
