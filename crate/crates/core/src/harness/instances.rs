//! Random model instances for testing inference and learning.

use chrono::{Duration, NaiveDate};
use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::graph::build_graph;
use crate::model::{Cardinalities, ModelParams};
use crate::schedule::{MatchRecord, Schedule, TeamId, Week};

/// Dirichlet sample with every entry at least `floor`, renormalized.
pub fn random_simplex(rng: &mut impl Rng, n: usize, concentration: f64, floor: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut v: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v.iter_mut().for_each(|x| *x = x.max(floor));
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn random_stochastic(rng: &mut impl Rng, s: usize) -> Array2<f64> {
    let rows: Vec<f64> = (0..s)
        .flat_map(|_| random_simplex(rng, s, 1.0, 1e-3))
        .collect();
    Array2::from_shape_vec((s, s), rows).expect("s x s")
}

fn random_cpt(rng: &mut impl Rng, s: usize, g: usize) -> Array3<f64> {
    let flat: Vec<f64> = (0..s * s)
        .flat_map(|_| random_simplex(rng, g, 1.0, 1e-3))
        .collect();
    Array3::from_shape_vec((s, s, g), flat).expect("s x s x g")
}

/// Strictly positive parameters with no structural constraints.
pub fn random_params(rng: &mut impl Rng, card: Cardinalities) -> ModelParams {
    let s = card.num_strength_states;
    let g = card.num_goal_states;
    ModelParams {
        card,
        pi: Array1::from(random_simplex(rng, s, 1.0, 1e-3)),
        rho: Array1::from(random_simplex(rng, s, 1.0, 1e-3)),
        omega_within: random_stochastic(rng, s),
        omega_between: random_stochastic(rng, s),
        delta_within: random_stochastic(rng, s),
        delta_between: random_stochastic(rng, s),
        psi: random_cpt(rng, s, g),
        gamma_cpt: random_cpt(rng, s, g),
    }
}

/// Random schedule whose latent graph is a forest, with at most
/// `max_nodes` latent nodes per role. Goals are uniform on `0..card.G`.
/// Weeks occasionally fall in a second season to exercise between-season edges.
pub fn random_forest_schedule(
    rng: &mut impl Rng,
    card: Cardinalities,
    max_teams: usize,
    max_weeks: usize,
    max_nodes: usize,
) -> Schedule {
    let start = NaiveDate::from_ymd_opt(2000, 8, 1).expect("valid date");
    loop {
        let teams = rng.random_range(2..=max_teams.max(2));
        let weeks = rng.random_range(1..=max_weeks.max(1));
        let split = if weeks > 1 && rng.random_bool(0.3) {
            rng.random_range(1..weeks)
        } else {
            weeks
        };
        let mut out = Vec::with_capacity(weeks);
        for w in 0..weeks {
            let season = usize::from(w >= split);
            let date = start + Duration::days(7 * w as i64 + 90 * season as i64);
            let mut matches = Vec::new();
            if rng.random_bool(0.8) {
                let h = rng.random_range(0..teams);
                let mut a = rng.random_range(0..teams - 1);
                if a >= h {
                    a += 1;
                }
                let gh = rng.random_range(0..card.num_goal_states) as u32;
                let ga = rng.random_range(0..card.num_goal_states) as u32;
                matches.push(
                    MatchRecord::new(date, TeamId(h), TeamId(a), gh, ga, card.goal_cap())
                        .expect("distinct teams"),
                );
            }
            out.push(Week {
                start: date,
                end: date,
                season,
                matches,
            });
        }
        let Ok(schedule) = Schedule::new(out, teams) else {
            continue;
        };
        let graph = build_graph(&schedule, card);
        let nodes = graph.num_latent_nodes() / 2;
        if nodes == 0 || nodes > max_nodes || !graph.is_forest() {
            continue;
        }
        return schedule;
    }
}

/// Three teams, each pair meeting once over three weeks.
pub fn round_robin_three(goals: [(u32, u32); 3], goal_cap: usize) -> Schedule {
    let start = NaiveDate::from_ymd_opt(2000, 8, 1).expect("valid date");
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let weeks = pairs
        .iter()
        .zip(goals)
        .enumerate()
        .map(|(w, (&(h, a), (gh, ga)))| {
            let date = start + Duration::days(7 * w as i64);
            let m = MatchRecord::new(date, TeamId(h), TeamId(a), gh, ga, goal_cap)
                .expect("distinct teams");
            Week {
                start: date,
                end: date,
                season: 0,
                matches: vec![m],
            }
        })
        .collect();
    Schedule::new(weeks, 3).expect("valid round robin")
}
