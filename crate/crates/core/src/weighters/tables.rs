use serde::{Deserialize, Serialize};

use crate::ndmath::BetaParams;
use crate::{Error, Result};

/// Bound on `|log a|` and `|log b|`; outer steps that would leave it are
/// clipped so the shapes stay representable.
pub const LOG_PARAM_LIMIT: f64 = 20.0;

/// Per-instance Beta distributions over the instance weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaWeightTable {
    params: Vec<BetaParams>,
    active: Vec<bool>,
    domains: Option<Vec<u16>>,
}

impl BetaWeightTable {
    /// `n` uniform priors, all active.
    pub fn new(n: usize) -> Self {
        Self {
            params: vec![BetaParams::UNIFORM; n],
            active: vec![true; n],
            domains: None,
        }
    }

    pub fn with_domains(mut self, domains: Vec<u16>) -> Result<Self> {
        if domains.len() != self.params.len() {
            return Err(Error::contract(format!(
                "{} domain tags for {} instances",
                domains.len(),
                self.params.len()
            )));
        }
        self.domains = Some(domains);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self, i: usize) -> BetaParams {
        self.params[i]
    }

    pub fn set_params(&mut self, i: usize, p: BetaParams) -> Result<()> {
        self.check_active(i)?;
        self.params[i] = p;
        Ok(())
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn domains(&self) -> Option<&[u16]> {
        self.domains.as_deref()
    }

    /// `E[w_i] = a_i / (a_i + b_i)` for every instance, pruned ones included.
    pub fn expected_weights(&self) -> Vec<f64> {
        self.params.iter().map(BetaParams::mean).collect()
    }

    pub(crate) fn check_active(&self, i: usize) -> Result<()> {
        match self.active.get(i) {
            Some(true) => Ok(()),
            Some(false) => Err(Error::contract(format!("instance {i} has been pruned"))),
            None => Err(Error::contract(format!("instance {i} out of range ({})", self.len()))),
        }
    }

    pub(crate) fn deactivate(&mut self, i: usize) {
        self.active[i] = false;
    }

    pub(crate) fn params_mut(&mut self, i: usize) -> &mut BetaParams {
        &mut self.params[i]
    }
}

/// Point-estimate weights in `[0, 1]`, initialised to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarWeightTable {
    weights: Vec<f64>,
    active: Vec<bool>,
}

impl ScalarWeightTable {
    pub fn new(n: usize) -> Self {
        Self::filled(n, 0.0)
    }

    /// Every weight set to `w`, clipped into `[0, 1]`.
    pub fn filled(n: usize, w: f64) -> Self {
        Self {
            weights: vec![w.clamp(0.0, 1.0); n],
            active: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Stores `w` clipped into `[0, 1]`.
    pub fn set_weight(&mut self, i: usize, w: f64) -> Result<()> {
        self.check_active(i)?;
        if w.is_nan() {
            return Err(Error::domain(format!("weight for instance {i} is NaN")));
        }
        self.weights[i] = w.clamp(0.0, 1.0);
        Ok(())
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.active[i]).collect()
    }

    pub(crate) fn check_active(&self, i: usize) -> Result<()> {
        match self.active.get(i) {
            Some(true) => Ok(()),
            Some(false) => Err(Error::contract(format!("instance {i} has been pruned"))),
            None => Err(Error::contract(format!("instance {i} out of range ({})", self.len()))),
        }
    }

    pub(crate) fn deactivate(&mut self, i: usize) {
        self.active[i] = false;
    }
}
