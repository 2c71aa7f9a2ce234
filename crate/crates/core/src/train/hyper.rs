//! Dirichlet hyperparameters from pseudocount totals.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::{Cardinalities, EdgeKind, Hyperparams};
use crate::schedule::Schedule;

pub const DEFAULT_C_TRANSITION: f64 = 87.0;
pub const DEFAULT_C_GOAL: f64 = 236.0;

fn decay(kind: EdgeKind) -> f64 {
    match kind {
        EdgeKind::Within => 8.0,
        EdgeKind::Between => 2.0,
    }
}

/// `alpha[j][k] = 1 + c * w(|k - j|) / sum_m w(|m - j|)` with geometric decay
/// `w(d) = 8^-d` within a season and `2^-d` between seasons. Rows sum to `c + S`.
pub fn make_transition_alphas(num_states: usize, c: f64, kind: EdgeKind) -> Array2<f64> {
    let base = decay(kind);
    let w = |d: usize| base.powi(-(d as i32));
    Array2::from_shape_fn((num_states, num_states), |(j, k)| {
        let z: f64 = (0..num_states).map(|m| w(m.abs_diff(j))).sum();
        1.0 + c * w(k.abs_diff(j)) / z
    })
}

/// `1 + c * f_g` for each goal value.
pub fn make_emission_dirichlet(goal_frequencies: &[f64], c: f64) -> Result<Array1<f64>> {
    let sum: f64 = goal_frequencies.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || goal_frequencies.iter().any(|&f| !(f >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "goal frequencies must form a distribution, sum is {sum}"
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "pseudocount total must be positive, got {c}"
        )));
    }
    Ok(goal_frequencies.iter().map(|f| 1.0 + c * f).collect())
}

/// Hyperparameters with emission priors shaped by the schedule's empirical
/// home and away goal frequencies.
pub fn hyperparams_for(
    schedule: &Schedule,
    card: Cardinalities,
    c_transition: f64,
    c_goal: f64,
) -> Result<Hyperparams> {
    if !(c_transition > 0.0 && c_transition.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "transition pseudocount must be positive, got {c_transition}"
        )));
    }
    let (home, away) = schedule.goal_frequencies(card.num_goal_states);
    let s = card.num_strength_states;
    let hyper = Hyperparams {
        alpha_within: make_transition_alphas(s, c_transition, EdgeKind::Within),
        alpha_between: make_transition_alphas(s, c_transition, EdgeKind::Between),
        beta: make_emission_dirichlet(&home, c_goal)?,
        phi: make_emission_dirichlet(&away, c_goal)?,
        c_transition,
        c_goal,
    };
    hyper.validate()?;
    Ok(hyper)
}
