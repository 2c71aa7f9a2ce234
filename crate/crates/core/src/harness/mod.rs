//! Simulation, exact-inference oracles and rolling out-of-sample evaluation.

mod brute;
pub mod instances;
mod recovery;
mod rolling;
mod simulate;

pub use brute::{brute_force, brute_force_posterior, ExactInference, MAX_BRUTE_FORCE_STATES};
pub use recovery::{recovery_report, RecoveryReport};
pub use rolling::{
    cumulative_net, rolling_evaluate, weekly_totals, write_eval_rows, write_net_series, EvalRow,
    Method, RollingConfig, PROBABILITY_FLOOR,
};
pub use simulate::{round_robin_skeleton, simulate, write_latents, LatentTrajectories, Simulation};
