//! Sampling scorelines from the generative model.

use std::io::Write;

use chrono::{Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{validate_params, ModelParams, Role};
use crate::schedule::{MatchRecord, Schedule, TeamId, TeamRegistry, Week};

/// True latent states along each team's chain positions.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectories {
    pub offense: Vec<Vec<usize>>,
    pub defense: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub schedule: Schedule,
    pub latents: LatentTrajectories,
}

fn draw(rng: &mut ChaCha8Rng, probs: impl IntoIterator<Item = f64>) -> Result<usize> {
    let dist = WeightedIndex::new(probs)
        .map_err(|e| Error::InvalidInput(format!("cannot sample: {e}")))?;
    Ok(dist.sample(rng))
}

/// Samples states along every chain and goals for every skeleton match.
/// Existing goals in the skeleton are ignored; odds and seasons are kept.
pub fn simulate(params: &ModelParams, skeleton: &Schedule, seed: u64) -> Result<Simulation> {
    if let Some(v) = validate_params(params).first() {
        return Err(Error::InvalidInput(format!(
            "invalid parameters: {}",
            v.message
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offense = Vec::with_capacity(skeleton.num_teams());
    let mut defense = Vec::with_capacity(skeleton.num_teams());
    for t in 0..skeleton.num_teams() {
        let team = TeamId(t);
        let edges = skeleton.chain_edges(team);
        let len = skeleton.presence(team).len();
        let mut chains = [Vec::with_capacity(len), Vec::with_capacity(len)];
        for (r, role) in [Role::Offense, Role::Defense].into_iter().enumerate() {
            if len == 0 {
                continue;
            }
            let mut x = draw(&mut rng, params.initial(role).iter().copied())?;
            chains[r].push(x);
            for &kind in &edges {
                x = draw(
                    &mut rng,
                    params.transition(role, kind).row(x).iter().copied(),
                )?;
                chains[r].push(x);
            }
        }
        let [o, d] = chains;
        offense.push(o);
        defense.push(d);
    }
    let mut schedule = skeleton.clone();
    let cap = params.card.goal_cap();
    let presence: Vec<Vec<usize>> = (0..skeleton.num_teams())
        .map(|t| skeleton.presence(TeamId(t)).to_vec())
        .collect();
    for (w, week) in schedule.weeks_mut().iter_mut().enumerate() {
        for m in &mut week.matches {
            let pos = |t: TeamId| {
                presence[t.0]
                    .binary_search(&w)
                    .expect("players are present")
            };
            let (hp, ap) = (pos(m.home), pos(m.away));
            let (oh, dh) = (offense[m.home.0][hp], defense[m.home.0][hp]);
            let (oa, da) = (offense[m.away.0][ap], defense[m.away.0][ap]);
            let gh = draw(&mut rng, (0..=cap).map(|g| params.psi[[oh, da, g]]))?;
            let ga = draw(&mut rng, (0..=cap).map(|g| params.gamma_cpt[[oa, dh, g]]))?;
            m.raw_home_goals = gh as u32;
            m.raw_away_goals = ga as u32;
            m.recap(cap);
        }
    }
    Ok(Simulation {
        schedule,
        latents: LatentTrajectories { offense, defense },
    })
}

/// Single round robin repeated `num_weeks` times (circle method), one fixture
/// per team per week when `num_teams` is even. Weeks are seven days apart;
/// every `weeks_per_season` weeks a 90-day break starts a new season.
pub fn round_robin_skeleton(
    num_teams: usize,
    num_weeks: usize,
    weeks_per_season: Option<usize>,
    start: NaiveDate,
) -> Result<Schedule> {
    if num_teams < 2 {
        return Err(Error::InvalidInput(
            "a round robin needs at least two teams".into(),
        ));
    }
    let n = num_teams + num_teams % 2;
    let mut weeks = Vec::with_capacity(num_weeks);
    let mut date = start;
    for w in 0..num_weeks {
        let season = weeks_per_season.map_or(0, |len| w / len.max(1));
        if w > 0 {
            date += if season != weeks.last().map_or(0, |x: &Week| x.season) {
                Duration::days(90)
            } else {
                Duration::days(7)
            };
        }
        let round = w % (n - 1);
        let mut matches = Vec::new();
        for k in 0..n / 2 {
            let a = if k == 0 { n - 1 } else { (round + k) % (n - 1) };
            let b = (round + n - 1 - k) % (n - 1);
            if a >= num_teams || b >= num_teams {
                continue;
            }
            // alternate venues between repeats of the cycle
            let flip = (w / (n - 1) + k) % 2 == 1;
            let (h, aw) = if flip { (b, a) } else { (a, b) };
            matches.push(MatchRecord::new(
                date,
                TeamId(h),
                TeamId(aw),
                0,
                0,
                usize::MAX,
            )?);
        }
        weeks.push(Week {
            start: date,
            end: date,
            season,
            matches,
        });
    }
    Schedule::new(weeks, num_teams)
}

/// CSV with columns `team, week, offense, defense`.
pub fn write_latents(
    schedule: &Schedule,
    latents: &LatentTrajectories,
    teams: Option<&TeamRegistry>,
    out: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["team", "week", "offense", "defense"])?;
    for t in 0..schedule.num_teams() {
        let name = teams
            .and_then(|r| r.name(TeamId(t)))
            .map_or_else(|| t.to_string(), str::to_string);
        for (p, &week) in schedule.presence(TeamId(t)).iter().enumerate() {
            w.write_record([
                name.clone(),
                week.to_string(),
                latents.offense[t][p].to_string(),
                latents.defense[t][p].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
