//! Matches, the week-bucketed schedule and per-team chain presence.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EdgeKind, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TeamId(pub usize);

impl fmt::Display for TeamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Decimal odds for home win, draw and away win.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Odds {
    pub home: f64,
    pub draw: f64,
    pub away: f64,
}

impl Odds {
    pub fn new(home: f64, draw: f64, away: f64) -> Result<Self> {
        for (name, o) in [("home", home), ("draw", draw), ("away", away)] {
            if !(o.is_finite() && o > 1.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} odds must exceed 1.0, got {o}"
                )));
            }
        }
        Ok(Self { home, draw, away })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub date: NaiveDate,
    pub home: TeamId,
    pub away: TeamId,
    /// Goals after capping at the model's goal cap.
    pub home_goals: usize,
    pub away_goals: usize,
    pub raw_home_goals: u32,
    pub raw_away_goals: u32,
    pub odds: Option<Odds>,
    pub season: Option<String>,
}

impl MatchRecord {
    pub fn new(
        date: NaiveDate,
        home: TeamId,
        away: TeamId,
        raw_home_goals: u32,
        raw_away_goals: u32,
        goal_cap: usize,
    ) -> Result<Self> {
        if home == away {
            return Err(Error::InvalidInput(format!(
                "team {home} cannot play itself"
            )));
        }
        Ok(Self {
            date,
            home,
            away,
            home_goals: (raw_home_goals as usize).min(goal_cap),
            away_goals: (raw_away_goals as usize).min(goal_cap),
            raw_home_goals,
            raw_away_goals,
            odds: None,
            season: None,
        })
    }

    pub fn with_odds(mut self, odds: Option<Odds>) -> Self {
        self.odds = odds;
        self
    }

    pub fn with_season(mut self, season: Option<String>) -> Self {
        self.season = season;
        self
    }

    /// Result on the uncapped score.
    pub fn outcome(&self) -> Outcome {
        Outcome::from_goals(self.raw_home_goals as usize, self.raw_away_goals as usize)
    }

    pub fn involves(&self, team: TeamId) -> bool {
        self.home == team || self.away == team
    }

    /// Re-applies a goal cap to the preserved raw goals.
    pub fn recap(&mut self, goal_cap: usize) {
        self.home_goals = (self.raw_home_goals as usize).min(goal_cap);
        self.away_goals = (self.raw_away_goals as usize).min(goal_cap);
    }
}

/// Stable mapping between team names and ids, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TeamRegistry {
    names: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, TeamId>,
}

impl TeamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names(names: impl IntoIterator<Item = String>) -> Self {
        let mut reg = Self::new();
        for n in names {
            reg.get_or_insert(&n);
        }
        reg
    }

    pub fn get_or_insert(&mut self, name: &str) -> TeamId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = TeamId(self.names.len());
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<TeamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: TeamId) -> Option<&str> {
        self.names.get(id.0).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Names sharing a case-insensitive prefix or substring with `name`.
    pub fn near_matches(&self, name: &str) -> Vec<&str> {
        let needle = name.to_lowercase();
        let head: String = needle.chars().take(3).collect();
        self.names
            .iter()
            .filter(|n| {
                let hay = n.to_lowercase();
                hay.contains(&needle)
                    || needle.contains(&hay)
                    || (!head.is_empty() && hay.starts_with(&head))
            })
            .map(String::as_str)
            .collect()
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.index = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), TeamId(i)))
            .collect();
    }
}

/// One populated time bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct Week {
    /// Earliest match date in the bucket.
    pub start: NaiveDate,
    /// Latest match date in the bucket.
    pub end: NaiveDate,
    /// Season segment index; a change between adjacent weeks is a season boundary.
    pub season: usize,
    pub matches: Vec<MatchRecord>,
}

/// Dates and season segmentation of the weeks, without any results.
#[derive(Debug, Clone, PartialEq)]
pub struct Calendar {
    pub starts: Vec<NaiveDate>,
    pub ends: Vec<NaiveDate>,
    pub seasons: Vec<usize>,
}

impl Calendar {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn is_boundary(&self, week: usize) -> bool {
        week > 0 && week < self.seasons.len() && self.seasons[week] != self.seasons[week - 1]
    }

    /// Transitions a chain takes from its node at `from` to a node at `to`,
    /// following the presence rule: every week of a season the team plays in,
    /// but only one bridge step across each season it sits out.
    pub fn transition_steps(&self, from: usize, to: usize) -> Result<Vec<EdgeKind>> {
        if from >= to || to >= self.len() {
            return Err(Error::InvalidInput(format!(
                "cannot step from week {from} to week {to} in a {}-week calendar",
                self.len()
            )));
        }
        let (s_from, s_to) = (self.seasons[from], self.seasons[to]);
        let mut steps = Vec::new();
        for k in from + 1..=to {
            if self.is_boundary(k) {
                steps.push(EdgeKind::Between);
            } else if self.seasons[k] == s_to || self.seasons[k] == s_from {
                steps.push(EdgeKind::Within);
            }
        }
        Ok(steps)
    }
}

/// Week-bucketed matches for a fixed set of teams `0..num_teams`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    weeks: Vec<Week>,
    num_teams: usize,
    presence: Vec<Vec<usize>>,
}

impl Schedule {
    /// Validates the buckets and derives default presence: a team occupies every
    /// week of each season it plays in, plus the first week of any season it sits
    /// out between its first and last seasons.
    pub fn new(weeks: Vec<Week>, num_teams: usize) -> Result<Self> {
        validate_weeks(&weeks, num_teams)?;
        let presence = default_presence(&weeks, num_teams);
        Ok(Self {
            weeks,
            num_teams,
            presence,
        })
    }

    /// Replaces the presence sets. Every team must be present in each week it plays.
    pub fn with_presence(mut self, presence: Vec<Vec<usize>>) -> Result<Self> {
        if presence.len() != self.num_teams {
            return Err(Error::Schedule(format!(
                "presence lists {} teams, schedule has {}",
                presence.len(),
                self.num_teams
            )));
        }
        for (t, weeks) in presence.iter().enumerate() {
            if weeks.windows(2).any(|w| w[0] >= w[1])
                || weeks.iter().any(|&w| w >= self.weeks.len())
            {
                return Err(Error::Schedule(format!(
                    "presence of team {t} is not a sorted set of weeks"
                )));
            }
        }
        for (w, week) in self.weeks.iter().enumerate() {
            for m in &week.matches {
                for team in [m.home, m.away] {
                    if presence[team.0].binary_search(&w).is_err() {
                        return Err(Error::Schedule(format!(
                            "team {team} plays in week {w} but is not present"
                        )));
                    }
                }
            }
        }
        self.presence = presence;
        Ok(self)
    }

    pub fn weeks(&self) -> &[Week] {
        &self.weeks
    }

    pub fn num_weeks(&self) -> usize {
        self.weeks.len()
    }

    pub fn num_teams(&self) -> usize {
        self.num_teams
    }

    pub fn num_matches(&self) -> usize {
        self.weeks.iter().map(|w| w.matches.len()).sum()
    }

    pub fn presence(&self, team: TeamId) -> &[usize] {
        &self.presence[team.0]
    }

    pub fn matches(&self) -> impl Iterator<Item = (usize, &MatchRecord)> {
        self.weeks
            .iter()
            .enumerate()
            .flat_map(|(w, week)| week.matches.iter().map(move |m| (w, m)))
    }

    pub fn calendar(&self) -> Calendar {
        Calendar {
            starts: self.weeks.iter().map(|w| w.start).collect(),
            ends: self.weeks.iter().map(|w| w.end).collect(),
            seasons: self.weeks.iter().map(|w| w.season).collect(),
        }
    }

    pub fn is_boundary(&self, week: usize) -> bool {
        week > 0
            && week < self.weeks.len()
            && self.weeks[week].season != self.weeks[week - 1].season
    }

    pub fn season_boundaries(&self) -> Vec<usize> {
        (1..self.weeks.len())
            .filter(|&w| self.is_boundary(w))
            .collect()
    }

    /// Edge kinds between consecutive presence weeks of `team`.
    pub fn chain_edges(&self, team: TeamId) -> Vec<EdgeKind> {
        self.presence[team.0]
            .windows(2)
            .map(|w| {
                if self.weeks[w[0]].season != self.weeks[w[1]].season {
                    EdgeKind::Between
                } else {
                    EdgeKind::Within
                }
            })
            .collect()
    }

    /// View of the first `weeks` weeks; presence is re-derived from what remains.
    pub fn truncated(&self, weeks: usize) -> Schedule {
        let kept: Vec<Week> = self.weeks[..weeks.min(self.weeks.len())].to_vec();
        let presence = default_presence(&kept, self.num_teams);
        Schedule {
            weeks: kept,
            num_teams: self.num_teams,
            presence,
        }
    }

    /// Same structure with goals replaced week by week.
    pub(crate) fn weeks_mut(&mut self) -> &mut [Week] {
        &mut self.weeks
    }

    /// Empirical home and away goal frequencies over capped goals.
    pub fn goal_frequencies(&self, num_goal_states: usize) -> (Vec<f64>, Vec<f64>) {
        let mut home = vec![0.0; num_goal_states];
        let mut away = vec![0.0; num_goal_states];
        let mut n = 0.0;
        for (_, m) in self.matches() {
            home[m.home_goals.min(num_goal_states - 1)] += 1.0;
            away[m.away_goals.min(num_goal_states - 1)] += 1.0;
            n += 1.0;
        }
        if n == 0.0 {
            let u = 1.0 / num_goal_states as f64;
            return (vec![u; num_goal_states], vec![u; num_goal_states]);
        }
        home.iter_mut().chain(away.iter_mut()).for_each(|x| *x /= n);
        (home, away)
    }
}

fn validate_weeks(weeks: &[Week], num_teams: usize) -> Result<()> {
    for (w, week) in weeks.iter().enumerate() {
        if w > 0 {
            let prev = &weeks[w - 1];
            if week.start <= prev.start {
                return Err(Error::Schedule(format!(
                    "week {w} does not start after week {}",
                    w - 1
                )));
            }
            if week.season < prev.season {
                return Err(Error::Schedule(format!(
                    "season index decreases at week {w}"
                )));
            }
        } else if week.season != 0 {
            return Err(Error::Schedule("first week must belong to season 0".into()));
        }
        let mut seen = vec![false; num_teams];
        for m in &week.matches {
            if m.home == m.away {
                return Err(Error::Schedule(format!(
                    "team {} plays itself in week {w}",
                    m.home
                )));
            }
            for team in [m.home, m.away] {
                if team.0 >= num_teams {
                    return Err(Error::Schedule(format!(
                        "team {team} out of range in week {w}"
                    )));
                }
                if std::mem::replace(&mut seen[team.0], true) {
                    return Err(Error::Schedule(format!(
                        "team {team} plays twice in week {w}"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn default_presence(weeks: &[Week], num_teams: usize) -> Vec<Vec<usize>> {
    let num_seasons = weeks.last().map_or(0, |w| w.season + 1);
    let mut season_weeks: Vec<Vec<usize>> = vec![Vec::new(); num_seasons];
    for (w, week) in weeks.iter().enumerate() {
        season_weeks[week.season].push(w);
    }
    let mut plays = vec![vec![false; num_seasons]; num_teams];
    for week in weeks {
        for m in &week.matches {
            plays[m.home.0][week.season] = true;
            plays[m.away.0][week.season] = true;
        }
    }
    plays
        .iter()
        .map(|seasons| {
            let first = seasons.iter().position(|&p| p);
            let last = seasons.iter().rposition(|&p| p);
            let mut out = Vec::new();
            if let (Some(first), Some(last)) = (first, last) {
                for s in first..=last {
                    if seasons[s] {
                        out.extend_from_slice(&season_weeks[s]);
                    } else if let Some(&w) = season_weeks[s].first() {
                        out.push(w);
                    }
                }
            }
            out
        })
        .collect()
}
