//! football-data.co.uk style CSV ingestion and week bucketing.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PredictionTriple;
use crate::schedule::{MatchRecord, Odds, Schedule, TeamId, TeamRegistry, Week};

/// Column names of the input CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub date: String,
    pub home_team: String,
    pub away_team: String,
    pub home_goals: String,
    pub away_goals: String,
    pub odds_home: String,
    pub odds_draw: String,
    pub odds_away: String,
    /// Optional explicit season column; used only when present in the header.
    pub season: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            date: "Date".into(),
            home_team: "HomeTeam".into(),
            away_team: "AwayTeam".into(),
            home_goals: "FTHG".into(),
            away_goals: "FTAG".into(),
            odds_home: "WHH".into(),
            odds_draw: "WHD".into(),
            odds_away: "WHA".into(),
            season: "Season".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Abort on the first bad row.
    #[default]
    Strict,
    /// Skip bad rows and report them.
    Lenient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ParsedMatches {
    pub records: Vec<MatchRecord>,
    pub teams: TeamRegistry,
    pub skipped: Vec<RowError>,
}

struct Columns {
    date: usize,
    home: usize,
    away: usize,
    fthg: usize,
    ftag: usize,
    odds: Option<[usize; 3]>,
    season: Option<usize>,
}

/// Parses match rows. Team ids are assigned in first-appearance order, starting
/// from whatever `teams` already holds.
pub fn parse_matches_with(
    input: impl Read,
    schema: &CsvSchema,
    goal_cap: usize,
    mode: ParseMode,
    mut teams: TeamRegistry,
) -> Result<ParsedMatches> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
    };
    let required = |name: &str| {
        find(name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("unknown required column `{name}`"),
        })
    };
    let cols = Columns {
        date: required(&schema.date)?,
        home: required(&schema.home_team)?,
        away: required(&schema.away_team)?,
        fthg: required(&schema.home_goals)?,
        ftag: required(&schema.away_goals)?,
        odds: match (
            find(&schema.odds_home),
            find(&schema.odds_draw),
            find(&schema.odds_away),
        ) {
            (Some(h), Some(d), Some(a)) => Some([h, d, a]),
            _ => None,
        },
        season: find(&schema.season),
    };

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(str::is_empty) {
            continue;
        }
        match parse_row(&row, &cols, goal_cap, &mut teams) {
            Ok(rec) => records.push(rec),
            Err(message) => match mode {
                ParseMode::Strict => return Err(Error::Parse { line, message }),
                ParseMode::Lenient => skipped.push(RowError { line, message }),
            },
        }
    }
    Ok(ParsedMatches {
        records,
        teams,
        skipped,
    })
}

pub fn parse_matches(
    input: impl Read,
    schema: &CsvSchema,
    goal_cap: usize,
    mode: ParseMode,
) -> Result<ParsedMatches> {
    parse_matches_with(input, schema, goal_cap, mode, TeamRegistry::new())
}

fn parse_row(
    row: &csv::StringRecord,
    cols: &Columns,
    goal_cap: usize,
    teams: &mut TeamRegistry,
) -> std::result::Result<MatchRecord, String> {
    let field = |i: usize| row.get(i).unwrap_or("");
    let date = parse_date(field(cols.date))?;
    let home_name = field(cols.home);
    let away_name = field(cols.away);
    if home_name.is_empty() || away_name.is_empty() {
        return Err("missing team name".into());
    }
    let goals = |i: usize, what: &str| {
        field(i)
            .parse::<u32>()
            .map_err(|_| format!("non-integer {what} `{}`", field(i)))
    };
    let hg = goals(cols.fthg, "home goals")?;
    let ag = goals(cols.ftag, "away goals")?;
    let odds = match cols.odds {
        Some(idx) if idx.iter().all(|&i| !field(i).is_empty()) => {
            let mut v = [0.0; 3];
            for (slot, &i) in v.iter_mut().zip(&idx) {
                *slot = field(i)
                    .parse::<f64>()
                    .map_err(|_| format!("malformed odds `{}`", field(i)))?;
            }
            Some(Odds::new(v[0], v[1], v[2]).map_err(|e| e.to_string())?)
        }
        _ => None,
    };
    let season = cols
        .season
        .map(field)
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    if home_name == away_name {
        return Err(format!("team `{home_name}` cannot play itself"));
    }
    let home = teams.get_or_insert(home_name);
    let away = teams.get_or_insert(away_name);
    let rec = MatchRecord::new(date, home, away, hg, ag, goal_cap).map_err(|e| e.to_string())?;
    Ok(rec.with_odds(odds).with_season(season))
}

/// Accepts `DD/MM/YY` (years below 50 map to 20xx) and `DD/MM/YYYY`.
pub fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    let bad = || format!("malformed date `{s}`");
    let parts: Vec<&str> = s.split('/').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let day: u32 = parts[0].parse().map_err(|_| bad())?;
    let month: u32 = parts[1].parse().map_err(|_| bad())?;
    let year: i32 = match parts[2].len() {
        2 => {
            let yy: i32 = parts[2].parse().map_err(|_| bad())?;
            if yy < 50 {
                2000 + yy
            } else {
                1900 + yy
            }
        }
        4 => parts[2].parse().map_err(|_| bad())?,
        _ => return Err(bad()),
    };
    NaiveDate::from_ymd_opt(year, month, day).ok_or_else(bad)
}

pub fn format_date(d: NaiveDate) -> String {
    d.format("%d/%m/%Y").to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketOptions {
    /// A calendar gap longer than this between populated weeks starts a new season.
    pub season_gap_days: i64,
    /// When false, a team appearing twice in one 7-day window is an error instead
    /// of splitting the window at the second fixture's date.
    pub split_double_bookings: bool,
    /// Matches after this date never share a bucket with matches on or before it.
    pub cutoff: Option<NaiveDate>,
    /// Team count; defaults to the largest id seen plus one.
    pub num_teams: Option<usize>,
}

impl Default for BucketOptions {
    fn default() -> Self {
        Self {
            season_gap_days: 45,
            split_double_bookings: true,
            cutoff: None,
            num_teams: None,
        }
    }
}

/// Groups records into 7-day windows anchored at the earliest date. Empty windows
/// are dropped, so week indices count populated windows only.
pub fn bucket_weeks(mut records: Vec<MatchRecord>, opts: &BucketOptions) -> Result<Schedule> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no match records to bucket".into()));
    }
    records.sort_by_key(|r| r.date);
    let mut keys = BTreeSet::new();
    for r in &records {
        if !keys.insert((r.home, r.away, r.date)) {
            return Err(Error::Schedule(format!(
                "duplicate match {} vs {} on {}",
                r.home, r.away, r.date
            )));
        }
    }
    let num_teams = opts.num_teams.unwrap_or_else(|| {
        records
            .iter()
            .map(|r| r.home.0.max(r.away.0))
            .max()
            .unwrap_or(0)
            + 1
    });
    let anchor = records[0].date;
    let window_of = |d: NaiveDate| {
        (
            (d - anchor).num_days().div_euclid(7),
            opts.cutoff.is_some_and(|c| d > c),
        )
    };

    let mut buckets: Vec<Vec<MatchRecord>> = Vec::new();
    let mut current: Vec<MatchRecord> = Vec::new();
    let mut current_window = window_of(anchor);
    for rec in records {
        let win = window_of(rec.date);
        if win != current_window {
            buckets.push(std::mem::take(&mut current));
            current_window = win;
        }
        if let Some(clash) = current
            .iter()
            .find(|m| m.involves(rec.home) || m.involves(rec.away))
        {
            let team = if clash.involves(rec.home) {
                rec.home
            } else {
                rec.away
            };
            if !opts.split_double_bookings {
                return Err(Error::Schedule(format!(
                    "team {team} plays twice in week {} (from {})",
                    buckets.len(),
                    current[0].date
                )));
            }
            if clash.date == rec.date {
                return Err(Error::Schedule(format!(
                    "team {team} plays twice on {}",
                    rec.date
                )));
            }
            // split at this fixture's date: same-day matches already placed move along
            let split_at = current
                .iter()
                .position(|m| m.date == rec.date)
                .unwrap_or(current.len());
            let moved = current.split_off(split_at);
            buckets.push(std::mem::take(&mut current));
            current = moved;
        }
        current.push(rec);
    }
    buckets.push(current);
    let buckets: Vec<Vec<MatchRecord>> = buckets.into_iter().filter(|b| !b.is_empty()).collect();

    let mut weeks: Vec<Week> = Vec::with_capacity(buckets.len());
    for matches in buckets {
        let start = matches
            .iter()
            .map(|m| m.date)
            .min()
            .expect("non-empty bucket");
        let end = matches
            .iter()
            .map(|m| m.date)
            .max()
            .expect("non-empty bucket");
        let season = match weeks.last() {
            None => 0,
            Some(prev) => {
                let gap = (start - prev.end).num_days();
                let prev_id = prev.matches.iter().find_map(|m| m.season.as_deref());
                let this_id = matches.iter().find_map(|m| m.season.as_deref());
                let changed = matches!((prev_id, this_id), (Some(a), Some(b)) if a != b);
                if gap > opts.season_gap_days || changed {
                    prev.season + 1
                } else {
                    prev.season
                }
            }
        };
        weeks.push(Week {
            start,
            end,
            season,
            matches,
        });
    }
    Schedule::new(weeks, num_teams)
}

/// Inverse odds normalized to sum to one (proportional overround removal).
pub fn implied_probabilities(odds: &Odds) -> Result<PredictionTriple> {
    let odds = Odds::new(odds.home, odds.draw, odds.away)?;
    let inv = [1.0 / odds.home, 1.0 / odds.draw, 1.0 / odds.away];
    let total: f64 = inv.iter().sum();
    Ok(PredictionTriple::new(
        inv[0] / total,
        inv[1] / total,
        inv[2] / total,
    ))
}

/// Writes records in the input dialect with raw (uncapped) goals.
pub fn write_matches(
    records: &[MatchRecord],
    teams: &TeamRegistry,
    schema: &CsvSchema,
    out: impl Write,
) -> Result<()> {
    let with_season = records.iter().any(|r| r.season.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        schema.date.as_str(),
        schema.home_team.as_str(),
        schema.away_team.as_str(),
        schema.home_goals.as_str(),
        schema.away_goals.as_str(),
        schema.odds_home.as_str(),
        schema.odds_draw.as_str(),
        schema.odds_away.as_str(),
    ];
    if with_season {
        header.push(schema.season.as_str());
    }
    w.write_record(&header)?;
    let name = |id: TeamId| {
        teams
            .name(id)
            .map(str::to_string)
            .ok_or_else(|| Error::UnknownTeam(id.to_string()))
    };
    for r in records {
        let (oh, od, oa) = match r.odds {
            Some(o) => (o.home.to_string(), o.draw.to_string(), o.away.to_string()),
            None => Default::default(),
        };
        let mut row = vec![
            format_date(r.date),
            name(r.home)?,
            name(r.away)?,
            r.raw_home_goals.to_string(),
            r.raw_away_goals.to_string(),
            oh,
            od,
            oa,
        ];
        if with_season {
            row.push(r.season.clone().unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamEntry {
    pub id: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekEntry {
    pub week: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub season: usize,
}

/// JSON companion of the canonical match file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub teams: Vec<TeamEntry>,
    pub weeks: Vec<WeekEntry>,
}

impl Sidecar {
    pub fn new(teams: &TeamRegistry, schedule: &Schedule) -> Self {
        Self {
            teams: teams
                .names()
                .iter()
                .enumerate()
                .map(|(id, name)| TeamEntry {
                    id,
                    name: name.clone(),
                })
                .collect(),
            weeks: schedule
                .weeks()
                .iter()
                .enumerate()
                .map(|(week, w)| WeekEntry {
                    week,
                    start: w.start,
                    end: w.end,
                    season: w.season,
                })
                .collect(),
        }
    }

    pub fn registry(&self) -> TeamRegistry {
        let mut reg = TeamRegistry::from_names(self.teams.iter().map(|t| t.name.clone()));
        reg.rebuild_index();
        reg
    }
}
