//! Instance weighting: Beta-distributed weights learned by meta-gradients
//! (BDW), point-estimate weights (DW), per-batch reweighting (L2RW), fixed
//! nearest-neighbour weights, and the pruning rules built on them.

mod nn;
mod prune;
mod steps;
mod tables;

pub use nn::{nearest_distances, nn_weights};
pub use prune::{prune_bdw, prune_dw, PruneConfig, PruneRule};
pub use steps::{
    bdw_step, bdw_step_with, dw_step, hypergrad_weights, hypergrad_weights_factored, l2rw_step,
    l2rw_weights, weighted_step, BdwStep, HyperParams, StepOutcome,
};
pub use tables::{BetaWeightTable, ScalarWeightTable, LOG_PARAM_LIMIT};
