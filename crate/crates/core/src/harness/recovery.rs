//! Scores a fit against the parameters and latent paths that generated the data.

use itertools::Itertools;
use ndarray::Array2;
use serde::Serialize;

use super::simulate::LatentTrajectories;
use crate::error::{Error, Result};
use crate::model::{expected_goals, EdgeKind, ModelParams, Role};
use crate::posterior::Posterior;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    /// `fitted state = offense_permutation[true state]`.
    pub offense_permutation: Vec<usize>,
    pub defense_permutation: Vec<usize>,
    /// Max absolute expected-goals error over both CPTs after alignment.
    pub expected_goals_error: f64,
    /// Frobenius distances for omega within/between, delta within/between.
    pub transition_distance: [f64; 4],
    /// Max absolute diagonal error per transition matrix, same order.
    pub transition_diagonal_error: [f64; 4],
    pub mean_true_state_probability: f64,
}

fn surface_error(truth: &Array2<f64>, fit: &Array2<f64>, po: &[usize], pd: &[usize]) -> f64 {
    truth
        .indexed_iter()
        .map(|((i, j), &t)| (t - fit[[po[i], pd[j]]]).abs())
        .fold(0.0, f64::max)
}

fn aligned(m: &Array2<f64>, p: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(m.dim(), |(a, b)| m[[p[a], p[b]]])
}

/// Aligns the fitted state labels to the truth by the pair of permutations
/// minimizing the expected-goals error, then compares.
pub fn recovery_report(
    truth: &ModelParams,
    latents: &LatentTrajectories,
    fitted: &ModelParams,
    posterior: &Posterior,
) -> Result<RecoveryReport> {
    if truth.card != fitted.card || posterior.num_states != truth.card.num_strength_states {
        return Err(Error::InvalidInput(format!(
            "cardinality mismatch: truth {:?}, fitted {:?}, posterior S = {}",
            truth.card, fitted.card, posterior.num_states
        )));
    }
    let s = truth.card.num_strength_states;
    let (tp, tg) = (expected_goals(&truth.psi), expected_goals(&truth.gamma_cpt));
    let (fp, fg) = (
        expected_goals(&fitted.psi),
        expected_goals(&fitted.gamma_cpt),
    );
    let perms: Vec<Vec<usize>> = (0..s).permutations(s).collect();
    let mut best = (f64::INFINITY, 0, 0);
    for (a, po) in perms.iter().enumerate() {
        for (b, pd) in perms.iter().enumerate() {
            // psi pairs home offense with away defense, gamma the other way round
            let err = surface_error(&tp, &fp, po, pd).max(surface_error(&tg, &fg, po, pd));
            if err < best.0 {
                best = (err, a, b);
            }
        }
    }
    let (po, pd) = (&perms[best.1], &perms[best.2]);

    let mut transition_distance = [0.0; 4];
    let mut diag = [0.0f64; 4];
    let pairs = [
        (Role::Offense, EdgeKind::Within, po),
        (Role::Offense, EdgeKind::Between, po),
        (Role::Defense, EdgeKind::Within, pd),
        (Role::Defense, EdgeKind::Between, pd),
    ];
    for (k, (role, kind, p)) in pairs.into_iter().enumerate() {
        let t = truth.transition(role, kind);
        let f = aligned(fitted.transition(role, kind), p);
        transition_distance[k] = (t - &f).mapv(|x| x * x).sum().sqrt();
        for i in 0..s {
            diag[k] = diag[k].max((t[[i, i]] - f[[i, i]]).abs());
        }
    }

    let (mut total, mut count) = (0.0, 0usize);
    for (team, chain) in posterior.chains.iter().enumerate() {
        for (role, paths, p) in [
            (Role::Offense, &latents.offense, po),
            (Role::Defense, &latents.defense, pd),
        ] {
            let Some(path) = paths.get(team) else {
                continue;
            };
            if path.len() != chain.weeks.len() {
                return Err(Error::InvalidInput(format!(
                    "team {team} has {} latent states but {} posterior weeks",
                    path.len(),
                    chain.weeks.len()
                )));
            }
            for (g, &x) in chain.gamma(role).iter().zip(path) {
                total += g[p[x]];
                count += 1;
            }
        }
    }
    Ok(RecoveryReport {
        offense_permutation: po.clone(),
        defense_permutation: pd.clone(),
        expected_goals_error: best.0,
        transition_distance,
        transition_diagonal_error: diag,
        mean_true_state_probability: if count == 0 {
            f64::NAN
        } else {
            total / count as f64
        },
    })
}
