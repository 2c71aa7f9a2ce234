//! MAP parameter learning by EM over the factor graph.

mod em;
mod emission;
mod hyper;
mod modelfile;
mod mstep;

pub use em::{
    e_step, em_fit, em_from, em_iterations, m_step, random_init, FitResult, TrainConfig, TrainTrace,
};
pub use emission::{
    emission_objective, m_step_emission_constrained, monotonicity_violation, solve_emission,
    EmissionSolverConfig,
};
pub use hyper::{
    hyperparams_for, make_emission_dirichlet, make_transition_alphas, DEFAULT_C_GOAL,
    DEFAULT_C_TRANSITION,
};
pub use modelfile::{content_hash, ModelBody, ModelFile, MODEL_FORMAT_VERSION};
pub use mstep::{m_step_initial, m_step_transition, SufficientStats};
