//! Elo ratings with an ordered-logistic win/draw/loss mapping.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Outcome, PredictionTriple};
use crate::schedule::{MatchRecord, TeamId, TeamRegistry};

pub const INITIAL_RATING: f64 = 1500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloModel {
    /// Indexed by team id; teams beyond the end are at [`INITIAL_RATING`].
    pub ratings: Vec<f64>,
    pub k_factor: f64,
    pub home_advantage: f64,
    /// Ordered-logistic cut points `(c1, c2)` with `c1 < c2`.
    pub thresholds: (f64, f64),
}

/// Home expected score `1 / (1 + 10^(-(r_home + ha - r_away) / 400))`.
pub fn elo_expected(r_home: f64, r_away: f64, home_advantage: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf(-(r_home + home_advantage - r_away) / 400.0))
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Ordered logistic over the scaled rating difference `x / 400`.
pub fn ordered_logistic(x: f64, thresholds: (f64, f64)) -> PredictionTriple {
    let (c1, c2) = thresholds;
    let lo = logistic(c1 - x / 400.0);
    let hi = logistic(c2 - x / 400.0);
    PredictionTriple::new(1.0 - hi, hi - lo, lo)
}

fn score(outcome: Outcome) -> f64 {
    match outcome {
        Outcome::HomeWin => 1.0,
        Outcome::Draw => 0.5,
        Outcome::AwayWin => 0.0,
    }
}

impl EloModel {
    pub fn new(k_factor: f64, home_advantage: f64, thresholds: (f64, f64)) -> Result<Self> {
        if !(k_factor > 0.0 && k_factor.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "K-factor must be positive, got {k_factor}"
            )));
        }
        if !(thresholds.0 < thresholds.1) {
            return Err(Error::InvalidInput(format!(
                "thresholds must be ordered, got {thresholds:?}"
            )));
        }
        Ok(Self {
            ratings: Vec::new(),
            k_factor,
            home_advantage,
            thresholds,
        })
    }

    pub fn rating(&self, team: TeamId) -> f64 {
        self.ratings.get(team.0).copied().unwrap_or(INITIAL_RATING)
    }

    fn rating_mut(&mut self, team: TeamId) -> &mut f64 {
        if self.ratings.len() <= team.0 {
            self.ratings.resize(team.0 + 1, INITIAL_RATING);
        }
        &mut self.ratings[team.0]
    }

    fn difference(&self, home: TeamId, away: TeamId) -> f64 {
        self.rating(home) + self.home_advantage - self.rating(away)
    }

    /// Zero-sum exchange of `K (s - E)` points.
    pub fn update(&mut self, m: &MatchRecord) {
        let e = elo_expected(
            self.rating(m.home),
            self.rating(m.away),
            self.home_advantage,
        );
        let delta = self.k_factor * (score(m.outcome()) - e);
        *self.rating_mut(m.home) += delta;
        *self.rating_mut(m.away) -= delta;
    }

    pub fn predict(&self, home: TeamId, away: TeamId) -> PredictionTriple {
        ordered_logistic(self.difference(home, away), self.thresholds)
    }
}

pub fn elo_update(model: &EloModel, m: &MatchRecord) -> EloModel {
    let mut next = model.clone();
    next.update(m);
    next
}

pub fn elo_predict(model: &EloModel, home: TeamId, away: TeamId) -> PredictionTriple {
    model.predict(home, away)
}

/// Search space for [`elo_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct EloGrid {
    pub k_factors: Vec<f64>,
    pub home_advantages: Vec<f64>,
    pub thresholds: Vec<(f64, f64)>,
}

impl Default for EloGrid {
    fn default() -> Self {
        let cuts: Vec<f64> = (-20..=20).map(|i| i as f64 / 10.0).collect();
        let mut thresholds = Vec::new();
        for (a, &c1) in cuts.iter().enumerate() {
            for &c2 in &cuts[a + 1..] {
                thresholds.push((c1, c2));
            }
        }
        Self {
            k_factors: (1..=10).map(|i| 5.0 * i as f64).collect(),
            home_advantages: (0..=6).map(|i| 25.0 * i as f64).collect(),
            thresholds,
        }
    }
}

/// Log probability floor so a degenerate cut point cannot produce `-inf`.
const LL_FLOOR: f64 = 1e-300;

/// Grid search maximizing the sequential log-likelihood of observed outcomes.
/// Ties go to the earliest grid point, i.e. smaller K, then smaller home
/// advantage, then earlier thresholds.
pub fn elo_fit(train: &[MatchRecord], grid: &EloGrid) -> Result<EloModel> {
    if train.is_empty() {
        return Err(Error::InvalidInput("cannot fit Elo on no matches".into()));
    }
    if grid.k_factors.is_empty() || grid.home_advantages.is_empty() || grid.thresholds.is_empty() {
        return Err(Error::InvalidInput("Elo grid has an empty axis".into()));
    }
    let mut order: Vec<&MatchRecord> = train.iter().collect();
    order.sort_by_key(|m| m.date);
    let combos: Vec<(f64, f64)> = grid
        .k_factors
        .iter()
        .flat_map(|&k| grid.home_advantages.iter().map(move |&h| (k, h)))
        .collect();
    let best: Vec<(f64, usize)> = combos
        .par_iter()
        .map(|&(k, ha)| {
            let mut model = EloModel {
                ratings: Vec::new(),
                k_factor: k,
                home_advantage: ha,
                thresholds: (-1.0, 1.0),
            };
            let mut xs = Vec::with_capacity(order.len());
            for m in &order {
                xs.push((model.difference(m.home, m.away), m.outcome()));
                model.update(m);
            }
            let mut best = (f64::NEG_INFINITY, 0);
            for (t, &cuts) in grid.thresholds.iter().enumerate() {
                let ll: f64 = xs
                    .iter()
                    .map(|&(x, o)| {
                        ordered_logistic(x, cuts)
                            .probability_of(o)
                            .max(LL_FLOOR)
                            .ln()
                    })
                    .sum();
                if ll > best.0 {
                    best = (ll, t);
                }
            }
            best
        })
        .collect();
    let mut pick = 0;
    for (c, b) in best.iter().enumerate() {
        if b.0 > best[pick].0 {
            pick = c;
        }
    }
    let (k, ha) = combos[pick];
    let mut model = EloModel::new(k, ha, grid.thresholds[best[pick].1])?;
    for m in &order {
        model.update(m);
    }
    Ok(model)
}

/// JSON form with ratings keyed by team name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloFile {
    pub ratings: BTreeMap<String, f64>,
    pub k_factor: f64,
    pub home_advantage: f64,
    pub thresholds: (f64, f64),
}

impl EloFile {
    pub fn new(model: &EloModel, teams: &TeamRegistry) -> Self {
        let ratings = teams
            .names()
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), model.rating(TeamId(i))))
            .collect();
        Self {
            ratings,
            k_factor: model.k_factor,
            home_advantage: model.home_advantage,
            thresholds: model.thresholds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;

    fn game(h: usize, a: usize, gh: u32, ga: u32, day: u32) -> MatchRecord {
        MatchRecord::new(
            NaiveDate::from_ymd_opt(2010, 1, day).unwrap(),
            TeamId(h),
            TeamId(a),
            gh,
            ga,
            9,
        )
        .unwrap()
    }

    #[test]
    fn expected_score_examples() {
        assert_eq!(elo_expected(1500.0, 1500.0, 0.0), 0.5);
        assert_abs_diff_eq!(
            elo_expected(1900.0, 1500.0, 0.0),
            10.0 / 11.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            elo_expected(1700.0, 1500.0, 200.0),
            10.0 / 11.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn update_examples() {
        let mut m = EloModel::new(20.0, 0.0, (-0.5, 0.5)).unwrap();
        m.update(&game(0, 1, 1, 0, 1));
        assert_eq!((m.rating(TeamId(0)), m.rating(TeamId(1))), (1510.0, 1490.0));
        let mut d = EloModel::new(20.0, 0.0, (-0.5, 0.5)).unwrap();
        d.update(&game(0, 1, 2, 2, 1));
        assert_eq!(d.rating(TeamId(0)), 1500.0);
        let mut u = EloModel::new(20.0, 0.0, (-0.5, 0.5)).unwrap();
        u.ratings = vec![1600.0, 1400.0];
        u.update(&game(0, 1, 3, 1, 1));
        assert_abs_diff_eq!(u.rating(TeamId(0)) - 1600.0, 4.81, epsilon = 0.01);
    }

    #[test]
    fn predict_examples() {
        let p = ordered_logistic(0.0, (-0.5, 0.5));
        assert_abs_diff_eq!(p.home_win, p.away_win, epsilon = 1e-15);
        assert_abs_diff_eq!(p.draw, 0.2449, epsilon = 1e-4);
        let far = ordered_logistic(1e6, (-0.5, 0.5));
        assert_abs_diff_eq!(far.home_win, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_match_picks_smallest_k() {
        let fit = elo_fit(&[game(0, 1, 1, 0, 1)], &EloGrid::default()).unwrap();
        assert_eq!(fit.k_factor, 5.0);
    }

    #[test]
    fn all_draws_maximize_draw_probability() {
        let games: Vec<_> = (1..=10)
            .map(|d| game(d as usize % 2, 1 - d as usize % 2, 1, 1, d))
            .collect();
        let grid = EloGrid::default();
        let fit = elo_fit(&games, &grid).unwrap();
        let p = fit.predict(TeamId(0), TeamId(1)).draw;
        // widest cut points on the grid
        assert_eq!(fit.thresholds, (-2.0, 2.0));
        assert!(p > 0.75);
    }

    proptest::proptest! {
        #[test]
        fn updates_are_zero_sum(games in proptest::collection::vec((0usize..5, 1usize..5, 0u32..5, 0u32..5), 1..40),
                                k in 5.0f64..50.0, ha in 0.0f64..150.0) {
            let mut m = EloModel::new(k, ha, (-0.5, 0.5)).unwrap();
            for (i, &(h, d, gh, ga)) in games.iter().enumerate() {
                m.update(&game(h, (h + d) % 5, gh, ga, 1 + (i % 28) as u32));
            }
            let total: f64 = (0..5).map(|t| m.rating(TeamId(t))).sum();
            proptest::prop_assert!((total - 5.0 * INITIAL_RATING).abs() < 1e-9);
        }

        #[test]
        fn home_win_rises_with_home_rating(r in 1000.0f64..2000.0, step in 1.0f64..400.0,
                                           c1 in -2.0f64..0.0, width in 0.1f64..2.0) {
            let mut m = EloModel::new(20.0, 50.0, (c1, c1 + width)).unwrap();
            m.ratings = vec![r, 1500.0];
            let lo = m.predict(TeamId(0), TeamId(1));
            m.ratings[0] = r + step;
            let hi = m.predict(TeamId(0), TeamId(1));
            proptest::prop_assert!(hi.home_win >= lo.home_win);
            proptest::prop_assert!(hi.away_win <= lo.away_win);
            proptest::prop_assert!((hi.sum() - 1.0).abs() < 1e-12);
        }
    }
}
