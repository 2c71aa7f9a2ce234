//! Forecasts, strength timelines and the Poisson comparison report.

use std::collections::BTreeSet;
use std::io::Write;

use chrono::NaiveDate;
use ndarray::{Array1, Array2, Array3};
use serde::Serialize;
use statrs::distribution::{Discrete, Poisson};

use crate::error::{Error, Result};
use crate::model::{strength_expectation, ModelParams, PredictionTriple, Role};
use crate::posterior::Posterior;
use crate::schedule::{Calendar, Schedule, TeamId};

/// Joint distribution of (home goals, away goals).
#[derive(Debug, Clone, PartialEq)]
pub struct ScorelineDistribution {
    pub joint: Array2<f64>,
}

impl ScorelineDistribution {
    /// Product of independent home and away goal distributions.
    pub fn from_marginals(home: &Array1<f64>, away: &Array1<f64>) -> Self {
        let joint = Array2::from_shape_fn((home.len(), away.len()), |(h, a)| home[h] * away[a]);
        Self { joint }
    }

    pub fn home_goals(&self) -> Array1<f64> {
        self.joint.sum_axis(ndarray::Axis(1))
    }

    pub fn away_goals(&self) -> Array1<f64> {
        self.joint.sum_axis(ndarray::Axis(0))
    }
}

/// Win/draw/loss by partitioning the scoreline cells.
pub fn wdl(dist: &ScorelineDistribution) -> PredictionTriple {
    let (mut h, mut d, mut a) = (0.0, 0.0, 0.0);
    for ((gh, ga), &p) in dist.joint.indexed_iter() {
        match gh.cmp(&ga) {
            std::cmp::Ordering::Greater => h += p,
            std::cmp::Ordering::Equal => d += p,
            std::cmp::Ordering::Less => a += p,
        }
    }
    PredictionTriple::new(h, d, a)
}

/// Propagates the team's latest marginal before `target_week` through the
/// transitions between that week and the target.
pub fn predictive_state(
    team: TeamId,
    role: Role,
    posterior: &Posterior,
    params: &ModelParams,
    calendar: &Calendar,
    target_week: usize,
) -> Result<Array1<f64>> {
    let (pos, week) = posterior.last_before(team, target_week).ok_or_else(|| {
        Error::UnknownTeam(format!(
            "team {team} has no history before week {target_week}"
        ))
    })?;
    let chain = posterior.chain(team)?;
    let mut v = chain.gamma(role)[pos].clone();
    for kind in calendar.transition_steps(week, target_week)? {
        v = v.dot(params.transition(role, kind));
    }
    let z = v.sum();
    Ok(v / z)
}

/// Like [`predictive_state`], falling back to the initial-state prior for a
/// team with no history.
pub fn predictive_state_or_prior(
    team: TeamId,
    role: Role,
    posterior: &Posterior,
    params: &ModelParams,
    calendar: &Calendar,
    target_week: usize,
) -> Result<Array1<f64>> {
    if posterior.last_before(team, target_week).is_none() {
        return Ok(params.initial(role).clone());
    }
    predictive_state(team, role, posterior, params, calendar, target_week)
}

/// `out[g] ~ sum_ij o[i] d[j] cpt[i][j][g]`.
pub fn goal_distribution(
    offense: &Array1<f64>,
    defense: &Array1<f64>,
    cpt: &Array3<f64>,
) -> Array1<f64> {
    let (s1, s2, g) = cpt.dim();
    let mut out = Array1::zeros(g);
    for i in 0..s1 {
        for j in 0..s2 {
            let w = offense[i] * defense[j];
            if w != 0.0 {
                for k in 0..g {
                    out[k] += w * cpt[[i, j, k]];
                }
            }
        }
    }
    let z = out.sum();
    if z > 0.0 {
        out /= z;
    }
    out
}

/// Scoreline forecast from predictive states of both teams.
pub fn scoreline(
    home_offense: &Array1<f64>,
    home_defense: &Array1<f64>,
    away_offense: &Array1<f64>,
    away_defense: &Array1<f64>,
    params: &ModelParams,
) -> ScorelineDistribution {
    let home = goal_distribution(home_offense, away_defense, &params.psi);
    let away = goal_distribution(away_offense, home_defense, &params.gamma_cpt);
    ScorelineDistribution::from_marginals(&home, &away)
}

pub fn predict_match(
    home: TeamId,
    away: TeamId,
    week: usize,
    posterior: &Posterior,
    params: &ModelParams,
    calendar: &Calendar,
) -> Result<ScorelineDistribution> {
    let st = |t, r| predictive_state(t, r, posterior, params, calendar, week);
    Ok(scoreline(
        &st(home, Role::Offense)?,
        &st(home, Role::Defense)?,
        &st(away, Role::Offense)?,
        &st(away, Role::Defense)?,
        params,
    ))
}

/// [`predict_match`] with the prior standing in for teams without history.
pub fn predict_match_or_prior(
    home: TeamId,
    away: TeamId,
    week: usize,
    posterior: &Posterior,
    params: &ModelParams,
    calendar: &Calendar,
) -> Result<ScorelineDistribution> {
    let st = |t, r| predictive_state_or_prior(t, r, posterior, params, calendar, week);
    Ok(scoreline(
        &st(home, Role::Offense)?,
        &st(home, Role::Defense)?,
        &st(away, Role::Offense)?,
        &st(away, Role::Defense)?,
        params,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelinePoint {
    pub week: usize,
    pub date: NaiveDate,
    pub strength: f64,
}

/// Strength on 0..=100 for each week of every season the team plays in.
/// Bridge nodes across seasons it sat out are skipped, leaving a gap.
pub fn timeline(
    team: TeamId,
    role: Role,
    posterior: &Posterior,
    schedule: &Schedule,
) -> Result<Vec<TimelinePoint>> {
    let chain = posterior.chain(team)?;
    let weeks = schedule.weeks();
    let played: BTreeSet<usize> = weeks
        .iter()
        .filter(|w| w.matches.iter().any(|m| m.involves(team)))
        .map(|w| w.season)
        .collect();
    let mut out = Vec::with_capacity(chain.weeks.len());
    for (&week, g) in chain.weeks.iter().zip(chain.gamma(role)) {
        let w = weeks
            .get(week)
            .ok_or_else(|| Error::InvalidInput(format!("week {week} missing from schedule")))?;
        if !played.contains(&w.season) {
            continue;
        }
        let strength = strength_expectation(g.as_slice().expect("contiguous"))?;
        out.push(TimelinePoint {
            week,
            date: w.start,
            strength,
        });
    }
    Ok(out)
}

/// Columns `team_name, role, week, date, strength`.
pub fn write_timeline<'a>(
    rows: impl IntoIterator<Item = (&'a str, Role, &'a TimelinePoint)>,
    out: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["team_name", "role", "week", "date", "strength"])?;
    for (name, role, p) in rows {
        w.write_record([
            name.to_string(),
            role.to_string(),
            p.week.to_string(),
            p.date.format("%Y-%m-%d").to_string(),
            p.strength.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub date: NaiveDate,
    pub home: String,
    pub away: String,
    pub triple: PredictionTriple,
    pub joint: Array2<f64>,
}

/// Columns `date, home, away, p_win, p_draw, p_away` then `g{h}_{a}` cells row-major.
pub fn write_predictions(rows: &[PredictionRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let g = rows.first().map_or(0, |r| r.joint.nrows());
    let mut header: Vec<String> = ["date", "home", "away", "p_win", "p_draw", "p_away"]
        .map(String::from)
        .to_vec();
    for h in 0..g {
        for a in 0..g {
            header.push(format!("g{h}_{a}"));
        }
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.date.format("%Y-%m-%d").to_string(),
            r.home.clone(),
            r.away.clone(),
            r.triple.home_win.to_string(),
            r.triple.draw.to_string(),
            r.triple.away_win.to_string(),
        ];
        rec.extend(r.joint.iter().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonReport {
    /// Expected goals under the CPT row.
    pub mean: f64,
    /// Rate whose truncated Poisson has that same expectation.
    pub lambda: f64,
    pub model: Vec<f64>,
    pub poisson: Vec<f64>,
    pub total_variation: f64,
}

/// Poisson pmf on `0..g`, renormalized over that range.
pub fn truncated_poisson(lambda: f64, g: usize) -> Result<Vec<f64>> {
    if lambda == 0.0 {
        let mut v = vec![0.0; g];
        v[0] = 1.0;
        return Ok(v);
    }
    let dist = Poisson::new(lambda)
        .map_err(|e| Error::InvalidInput(format!("Poisson rate {lambda}: {e}")))?;
    let mut v: Vec<f64> = (0..g as u64).map(|k| dist.pmf(k)).collect();
    let z: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= z);
    Ok(v)
}

fn mean_of(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
}

/// Solves `mean(truncated_poisson(lambda, g)) = target` by bisection. The
/// truncated mean is increasing in `lambda` and tends to `g - 1`.
fn matched_rate(target: f64, g: usize) -> Result<f64> {
    if target <= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while mean_of(&truncated_poisson(hi, g)?) < target {
        if hi > 1e6 {
            return Ok(hi);
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_of(&truncated_poisson(mid, g)?) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Compares one CPT row with the truncated Poisson of equal mean.
pub fn poisson_deviation(cpt: &Array3<f64>, i: usize, j: usize) -> Result<PoissonReport> {
    let (s1, s2, g) = cpt.dim();
    if i >= s1 || j >= s2 {
        return Err(Error::InvalidInput(format!(
            "state pair ({i}, {j}) outside {s1} x {s2}"
        )));
    }
    let model: Vec<f64> = (0..g).map(|k| cpt[[i, j, k]]).collect();
    let mean = mean_of(&model);
    let lambda = matched_rate(mean, g)?;
    let poisson = truncated_poisson(lambda, g)?;
    let total_variation = 0.5
        * model
            .iter()
            .zip(&poisson)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    Ok(PoissonReport {
        mean,
        lambda,
        model,
        poisson,
        total_variation,
    })
}
