use serde::{Deserialize, Serialize};

use super::{BetaWeightTable, ScalarWeightTable};
use crate::ndmath::beta_cdf;
use crate::{Error, Result};

/// Which side of `CDF(lambda) vs rho` is discarded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneRule {
    /// Prune when more than `rho` of the mass lies below `lambda`.
    #[default]
    MassBelow,
    /// Keep only instances with `CDF(lambda) > rho`.
    KeepMassBelow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub lambda: f64,
    pub rho: f64,
    #[serde(default)]
    pub rule: PruneRule,
}

impl PruneConfig {
    pub fn new(lambda: f64, rho: f64) -> Result<Self> {
        let pc = Self {
            lambda,
            rho,
            rule: PruneRule::MassBelow,
        };
        pc.validate()?;
        Ok(pc)
    }

    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.lambda) || !open(self.rho) {
            return Err(Error::config(format!(
                "prune thresholds must lie in (0, 1), got lambda={} rho={}",
                self.lambda, self.rho
            )));
        }
        Ok(())
    }
}

/// Deactivates active instances whose Beta marginal puts too much mass below
/// `lambda`. Returns how many were pruned by this call.
pub fn prune_bdw(table: &mut BetaWeightTable, pc: &PruneConfig) -> Result<usize> {
    pc.validate()?;
    let mut pruned = 0;
    for i in table.active_indices() {
        let mass = beta_cdf(pc.lambda, table.params(i))?;
        let drop = match pc.rule {
            PruneRule::MassBelow => mass > pc.rho,
            PruneRule::KeepMassBelow => mass <= pc.rho,
        };
        if drop {
            table.deactivate(i);
            pruned += 1;
        }
    }
    Ok(pruned)
}

/// Keeps an instance iff its weight exceeds `lambda`.
pub fn prune_dw(table: &mut ScalarWeightTable, lambda: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::config(format!("DW prune threshold must lie in [0, 1), got {lambda}")));
    }
    let mut pruned = 0;
    for i in table.active_indices() {
        if table.weight(i) <= lambda {
            table.deactivate(i);
            pruned += 1;
        }
    }
    Ok(pruned)
}
