//! Finite-support laws on the nonnegative integers with explicit truncation loss.
//!
//! A [`Pmf`] stores `P(V = k)` for `k = 0..=M` and the mass `lost_mass` that
//! was cut off beyond `M`. Probabilities are never renormalized: everything
//! downstream carries the loss as an explicit error budget.

use crate::error::{Error, Result};

/// Slack allowed on `sum(probs) + lost_mass` around one.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
    lost_mass: f64,
}

impl Pmf {
    /// Validating constructor.
    pub fn new(probs: Vec<f64>, lost_mass: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidPmf("empty probability vector".into()));
        }
        if !(lost_mass >= 0.0 && lost_mass.is_finite()) {
            return Err(Error::InvalidPmf(format!(
                "lost mass {lost_mass} is not >= 0"
            )));
        }
        if let Some((k, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::InvalidPmf(format!("P({k}) = {p} outside [0, 1]")));
        }
        let total: f64 = probs.iter().sum::<f64>() + lost_mass;
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidPmf(format!(
                "probabilities plus lost mass sum to {total}"
            )));
        }
        Ok(Self { probs, lost_mass })
    }

    /// Builds a pmf whose loss is whatever the listed probabilities leave
    /// uncovered (clamped at zero against rounding).
    pub fn with_residual_loss(probs: Vec<f64>) -> Result<Self> {
        let lost = (1.0 - probs.iter().sum::<f64>()).max(0.0);
        Self::new(probs, lost)
    }

    pub fn point_mass(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Self {
            probs,
            lost_mass: 0.0,
        }
    }

    /// Crate-internal constructor for results of exact arithmetic pipelines
    /// whose invariants hold by construction.
    pub(crate) fn from_parts(probs: Vec<f64>, lost_mass: f64) -> Self {
        debug_assert!(!probs.is_empty());
        debug_assert!(lost_mass >= 0.0);
        Self { probs, lost_mass }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn lost_mass(&self) -> f64 {
        self.lost_mass
    }

    /// `P(V = k)`, zero beyond the stored support.
    pub fn get(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    /// Truncation point `M` (largest stored index).
    pub fn cap(&self) -> usize {
        self.probs.len() - 1
    }

    /// Mass held in the stored probabilities (excludes `lost_mass`).
    pub fn stored_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Largest index carrying positive probability.
    pub fn max_support(&self) -> usize {
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// `sum k P(V = k)` over the stored support.
    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    pub fn into_parts(self) -> (Vec<f64>, f64) {
        (self.probs, self.lost_mass)
    }
}
