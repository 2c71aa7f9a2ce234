//! File plumbing: reading inputs with the right exit codes and writing outputs atomically.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use teamstrength::ingest::{
    bucket_weeks, parse_date, parse_matches_with, BucketOptions, CsvSchema, ParseMode,
    ParsedMatches,
};
use teamstrength::schedule::{MatchRecord, Schedule, TeamRegistry};
use teamstrength::train::ModelFile;

use crate::config::RunConfig;
use crate::CliError;

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::config(format!("cannot open {}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    let file = open(path)?;
    ModelFile::load(std::io::BufReader::new(file))
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Team ids a model was trained with, so data read under it lines up.
pub fn model_registry(model: &ModelFile) -> TeamRegistry {
    TeamRegistry::from_names(model.body.teams.iter().cloned())
}

pub fn read_matches(
    path: &Path,
    cfg: &RunConfig,
    goal_cap: usize,
    teams: TeamRegistry,
) -> Result<ParsedMatches, CliError> {
    let mode = if cfg.lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };
    let parsed = parse_matches_with(open(path)?, &cfg.schema, goal_cap, mode, teams)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    for skip in &parsed.skipped {
        log::warn!(
            "{}: skipped line {}: {}",
            path.display(),
            skip.line,
            skip.message
        );
    }
    if parsed.records.is_empty() {
        return Err(CliError::runtime(format!(
            "{}: no usable match rows",
            path.display()
        )));
    }
    Ok(parsed)
}

pub fn bucket(
    records: Vec<MatchRecord>,
    cfg: &RunConfig,
    num_teams: usize,
    cutoff: Option<NaiveDate>,
) -> Result<Schedule, CliError> {
    let opts = BucketOptions {
        season_gap_days: cfg.season_gap_days,
        cutoff,
        num_teams: Some(num_teams),
        ..BucketOptions::default()
    };
    Ok(bucket_weeks(records, &opts)?)
}

/// Reads date, home and away columns only; goals are set to zero.
/// Team names are resolved through `resolve`, which may reject or register them.
pub fn read_fixtures(
    path: &Path,
    schema: &CsvSchema,
    mut resolve: impl FnMut(&str) -> Result<teamstrength::schedule::TeamId, CliError>,
) -> Result<Vec<MatchRecord>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(open(path)?);
    let bad = |msg: String| CliError::runtime(format!("{}: {msg}", path.display()));
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (dc, hc, ac) = (
        col(&schema.date)?,
        col(&schema.home_team)?,
        col(&schema.away_team)?,
    );
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.iter().all(str::is_empty) {
            continue;
        }
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("");
        let date = parse_date(field(dc)).map_err(|m| bad(format!("line {line}: {m}")))?;
        let home = resolve(field(hc))?;
        let away = resolve(field(ac))?;
        let rec = MatchRecord::new(date, home, away, 0, 0, 0)
            .map_err(|e| bad(format!("line {line}: {e}")))?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(bad("no fixtures".into()));
    }
    Ok(out)
}

pub fn unknown_team(name: &str, teams: &TeamRegistry) -> CliError {
    let near = teams.near_matches(name);
    if near.is_empty() {
        CliError::config(format!("unknown team `{name}`"))
    } else {
        CliError::config(format!(
            "unknown team `{name}`; did you mean: {}",
            near.join(", ")
        ))
    }
}

/// Writes to a temporary file in `dir` and renames it over `dir/name`.
pub fn write_atomic(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut dyn Write) -> teamstrength::error::Result<()>,
) -> Result<PathBuf, CliError> {
    let target = dir.join(name);
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::config(format!("cannot write in {}: {e}", dir.display())))?;
    let mut w = BufWriter::new(tmp);
    body(&mut w)?;
    let tmp = w
        .into_inner()
        .map_err(|e| CliError::runtime(format!("writing {}: {}", target.display(), e.error())))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", target.display())))?;
    tmp.persist(&target)
        .map_err(|e| CliError::runtime(format!("writing {}: {}", target.display(), e.error)))?;
    Ok(target)
}
