//! Week-by-week out-of-sample comparison of the model against the baselines.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::baselines::{bookmaker_predict, elo_fit, naive_fit, EloGrid};
use crate::error::{Error, Result};
use crate::graph::build_graph;
use crate::model::{Cardinalities, Hyperparams, Outcome, PredictionTriple};
use crate::predict::{predict_match_or_prior, wdl};
use crate::schedule::{MatchRecord, Schedule, TeamId, TeamRegistry};
use crate::train::{e_step, em_fit, em_iterations, TrainConfig};

/// Smallest probability credited to an outcome, so log-likelihoods stay finite.
pub const PROBABILITY_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Model,
    Elo,
    Naive,
    Book,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Model, Method::Elo, Method::Naive, Method::Book];

    fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Model => "model",
            Method::Elo => "elo",
            Method::Naive => "naive",
            Method::Book => "book",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}'")))
    }
}

/// One evaluated match. Methods without input (no odds) are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub week: usize,
    /// Position of the match in schedule order.
    pub match_id: usize,
    pub date: NaiveDate,
    pub home: TeamId,
    pub away: TeamId,
    pub outcome: Outcome,
    pub probability: [Option<f64>; 4],
}

impl EvalRow {
    pub fn p(&self, method: Method) -> Option<f64> {
        self.probability[method.index()]
    }

    pub fn ll(&self, method: Method) -> Option<f64> {
        self.p(method).map(f64::ln)
    }

    fn set(&mut self, method: Method, triple: Option<PredictionTriple>) {
        self.probability[method.index()] =
            triple.map(|t| t.probability_of(self.outcome).clamp(PROBABILITY_FLOOR, 1.0));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingConfig {
    pub train: TrainConfig,
    pub weekly_iters: usize,
    pub elo_grid: EloGrid,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            weekly_iters: 10,
            elo_grid: EloGrid::default(),
        }
    }
}

/// Trains on weeks before `split_week`, then predicts each later week from a
/// view truncated just before it and folds that week in with
/// `weekly_iters` warm-started EM iterations.
pub fn rolling_evaluate(
    schedule: &Schedule,
    card: Cardinalities,
    hyper: &Hyperparams,
    config: &RollingConfig,
    split_week: usize,
) -> Result<Vec<EvalRow>> {
    if split_week == 0 || split_week >= schedule.num_weeks() {
        return Err(Error::InvalidInput(format!(
            "split week {split_week} must be inside 1..{}",
            schedule.num_weeks()
        )));
    }
    if config.weekly_iters == 0 {
        return Err(Error::InvalidInput(
            "weekly_iters must be at least 1".into(),
        ));
    }
    let calendar = schedule.calendar();
    let train = schedule.truncated(split_week);
    let train_matches: Vec<MatchRecord> = train.matches().map(|(_, m)| m.clone()).collect();
    let fit =
        em_fit(&train, card, hyper, &config.train).map_err(|e| e.context("initial training"))?;
    let (mut params, mut posterior) = (fit.params, fit.posterior);
    let mut elo = elo_fit(&train_matches, &config.elo_grid)?;
    let naive = naive_fit(&train_matches)?;

    let mut rows = Vec::new();
    let mut match_id = train_matches.len();
    for w in split_week..schedule.num_weeks() {
        let week = &schedule.weeks()[w];
        for m in &week.matches {
            let dist = predict_match_or_prior(m.home, m.away, w, &posterior, &params, &calendar)
                .map_err(|e| e.context(format!("predicting week {w}")))?;
            let mut row = EvalRow {
                week: w,
                match_id,
                date: m.date,
                home: m.home,
                away: m.away,
                outcome: m.outcome(),
                probability: [None; 4],
            };
            row.set(Method::Model, Some(wdl(&dist)));
            row.set(Method::Elo, Some(elo.predict(m.home, m.away)));
            row.set(Method::Naive, Some(naive));
            row.set(Method::Book, bookmaker_predict(m)?);
            rows.push(row);
            match_id += 1;
        }
        for m in &week.matches {
            elo.update(m);
        }
        if w + 1 == schedule.num_weeks() {
            break;
        }
        let ctx = |e: Error| e.context(format!("weekly update after week {w}"));
        let graph = build_graph(&schedule.truncated(w + 1), card);
        let (post, _) = e_step(&graph, &params, hyper, &config.train).map_err(ctx)?;
        let (p, post, _) = em_iterations(
            &graph,
            hyper,
            params,
            post,
            config.weekly_iters,
            &config.train,
        )
        .map_err(ctx)?;
        params = p;
        posterior = post;
    }
    Ok(rows)
}

/// Running sum of `ll(method) - ll(baseline)` over rows ordered by week then
/// match id. Rows missing either method are skipped.
pub fn cumulative_net(rows: &[EvalRow], method: Method, baseline: Method) -> Vec<(usize, f64)> {
    let mut ordered: Vec<&EvalRow> = rows.iter().collect();
    ordered.sort_by_key(|r| (r.week, r.match_id));
    let mut total = 0.0;
    let mut out = Vec::new();
    for r in ordered {
        if let (Some(a), Some(b)) = (r.ll(method), r.ll(baseline)) {
            total += a - b;
            out.push((r.week, total));
        }
    }
    out
}

/// Value at the end of each week; weeks with no comparable rows are absent.
pub fn weekly_totals(series: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for &(w, v) in series {
        match out.last_mut() {
            Some(last) if last.0 == w => last.1 = v,
            _ => out.push((w, v)),
        }
    }
    out
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Columns `week, date, home, away, outcome`, then `p_*` and `ll_*` per method.
/// Absent values are empty cells.
pub fn write_eval_rows(rows: &[EvalRow], teams: &TeamRegistry, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "week".to_string(),
        "date".into(),
        "home".into(),
        "away".into(),
        "outcome".into(),
    ];
    header.extend(Method::ALL.iter().map(|m| format!("p_{m}")));
    header.extend(Method::ALL.iter().map(|m| format!("ll_{m}")));
    w.write_record(&header)?;
    let name = |t: TeamId| {
        teams
            .name(t)
            .map(str::to_string)
            .unwrap_or_else(|| t.to_string())
    };
    for r in rows {
        let mut rec = vec![
            r.week.to_string(),
            r.date.format("%Y-%m-%d").to_string(),
            name(r.home),
            name(r.away),
            r.outcome.as_str().to_string(),
        ];
        rec.extend(Method::ALL.iter().map(|&m| cell(r.p(m))));
        rec.extend(Method::ALL.iter().map(|&m| cell(r.ll(m))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `week, cum_net_vs_naive, cum_net_vs_elo, cum_net_vs_book`, one row
/// per evaluated week.
pub fn write_net_series(rows: &[EvalRow], out: impl Write) -> Result<()> {
    let baselines = [Method::Naive, Method::Elo, Method::Book];
    let series: Vec<Vec<(usize, f64)>> = baselines
        .iter()
        .map(|&b| weekly_totals(&cumulative_net(rows, Method::Model, b)))
        .collect();
    let mut weeks: Vec<usize> = rows.iter().map(|r| r.week).collect();
    weeks.sort_unstable();
    weeks.dedup();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "week",
        "cum_net_vs_naive",
        "cum_net_vs_elo",
        "cum_net_vs_book",
    ])?;
    for week in weeks {
        let mut rec = vec![week.to_string()];
        for s in &series {
            // carry the last value forward through weeks without comparable rows
            let v = s
                .iter()
                .take_while(|(w, _)| *w <= week)
                .last()
                .map(|&(_, v)| v);
            rec.push(cell(v));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
