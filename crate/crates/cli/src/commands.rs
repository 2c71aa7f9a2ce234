use std::path::{Path, PathBuf};

use teamstrength::baselines::EloGrid;
use teamstrength::graph::build_graph;
use teamstrength::harness::{
    rolling_evaluate, simulate as run_simulation, write_eval_rows, write_latents, write_net_series,
    Method, RollingConfig,
};
use teamstrength::ingest::{parse_date, write_matches, Sidecar};
use teamstrength::model::{Cardinalities, Role};
use teamstrength::posterior::Posterior;
use teamstrength::predict::{
    predict_match_or_prior, timeline as strength_timeline, wdl, write_predictions, write_timeline,
    PredictionRow,
};
use teamstrength::schedule::{MatchRecord, Schedule, TeamRegistry};
use teamstrength::train::{
    e_step, em_fit, hyperparams_for, ModelBody, ModelFile, MODEL_FORMAT_VERSION,
};

use crate::config::RunConfig;
use crate::data::{
    bucket, load_model, model_registry, read_fixtures, read_matches, unknown_team, write_atomic,
};
use crate::{CliError, GlobalArgs};

pub struct Context {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
    /// Cardinalities given on the command line, checked against model files.
    flag_card: (Option<usize>, Option<usize>),
}

impl Context {
    pub fn new(g: &GlobalArgs) -> Result<Self, CliError> {
        let mut cfg = RunConfig::load(g.config.as_deref())?;
        if let Some(v) = g.states {
            cfg.states = v;
        }
        if let Some(v) = g.goal_states {
            cfg.goal_states = v;
        }
        if let Some(v) = g.c_transition {
            cfg.c_transition = v;
        }
        if let Some(v) = g.c_goal {
            cfg.c_goal = v;
        }
        if let Some(v) = g.restarts {
            cfg.train.restarts = v;
        }
        if let Some(v) = g.max_iterations {
            cfg.train.max_iterations = v;
        }
        if let Some(v) = g.bp_cycles {
            cfg.train.bp_cycles = v;
        }
        if let Some(v) = g.convergence_tol {
            cfg.train.convergence_tol = v;
        }
        if let Some(v) = g.seed {
            cfg.train.seed = v;
        }
        if let Some(v) = g.season_gap_days {
            cfg.season_gap_days = v;
        }
        if let Some(v) = g.weekly_iters {
            cfg.weekly_iters = v;
        }
        cfg.lenient |= g.lenient;
        cfg.validate()?;
        std::fs::create_dir_all(&g.out_dir)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", g.out_dir.display())))?;
        Ok(Self {
            cfg,
            out_dir: g.out_dir.clone(),
            flag_card: (g.states, g.goal_states),
        })
    }

    fn check_card(&self, model: &Cardinalities) -> Result<(), CliError> {
        let (s, g) = self.flag_card;
        if s.is_some_and(|s| s != model.num_strength_states)
            || g.is_some_and(|g| g != model.num_goal_states)
        {
            return Err(CliError::config(format!(
                "cardinality mismatch: flags ask for S = {}, G = {} but the model has S = {}, G = {}",
                s.map_or("-".into(), |v| v.to_string()),
                g.map_or("-".into(), |v| v.to_string()),
                model.num_strength_states,
                model.num_goal_states
            )));
        }
        Ok(())
    }

    fn load_model(&self, path: &Path) -> Result<ModelFile, CliError> {
        let model = load_model(path)?;
        self.check_card(&model.body.cardinalities)?;
        Ok(model)
    }

    fn write(
        &self,
        name: &str,
        body: impl FnOnce(&mut dyn std::io::Write) -> teamstrength::error::Result<()>,
    ) -> Result<(), CliError> {
        let path = write_atomic(&self.out_dir, name, body)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

/// Data read and bucketed under a model's team ids and goal cap.
struct ModelData {
    model: ModelFile,
    teams: TeamRegistry,
    schedule: Schedule,
}

fn load_with_model(ctx: &Context, model: &Path, matches: &Path) -> Result<ModelData, CliError> {
    let model = ctx.load_model(model)?;
    let card = model.body.cardinalities;
    let parsed = read_matches(matches, &ctx.cfg, card.goal_cap(), model_registry(&model))?;
    let schedule = bucket(parsed.records, &ctx.cfg, parsed.teams.len(), None)?;
    Ok(ModelData {
        model,
        teams: parsed.teams,
        schedule,
    })
}

fn posterior_for(
    ctx: &Context,
    model: &ModelFile,
    schedule: &Schedule,
) -> Result<(Posterior, f64), CliError> {
    let graph = build_graph(schedule, model.body.cardinalities);
    Ok(e_step(
        &graph,
        &model.body.params,
        &model.body.hyper,
        &ctx.cfg.train,
    )?)
}

pub fn ingest(ctx: &Context, matches: &Path) -> Result<(), CliError> {
    let card = ctx.cfg.cardinalities()?;
    let parsed = read_matches(matches, &ctx.cfg, card.goal_cap(), TeamRegistry::new())?;
    let skipped = parsed.skipped.len();
    let schedule = bucket(parsed.records, &ctx.cfg, parsed.teams.len(), None)?;
    let records: Vec<MatchRecord> = schedule.matches().map(|(_, m)| m.clone()).collect();
    ctx.write("matches.csv", |w| {
        write_matches(&records, &parsed.teams, &ctx.cfg.schema, w)
    })?;
    let sidecar = Sidecar::new(&parsed.teams, &schedule);
    ctx.write("sidecar.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &sidecar)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    println!(
        "{} matches, {} teams, {} weeks, {} seasons, {} rows skipped",
        schedule.num_matches(),
        schedule.num_teams(),
        schedule.num_weeks(),
        schedule.season_boundaries().len() + 1,
        skipped
    );
    Ok(())
}

pub fn train(ctx: &Context, matches: &Path) -> Result<(), CliError> {
    let card = ctx.cfg.cardinalities()?;
    let parsed = read_matches(matches, &ctx.cfg, card.goal_cap(), TeamRegistry::new())?;
    let schedule = bucket(parsed.records, &ctx.cfg, parsed.teams.len(), None)?;
    let hyper = hyperparams_for(&schedule, card, ctx.cfg.c_transition, ctx.cfg.c_goal)
        .map_err(CliError::config)?;
    let fit = em_fit(&schedule, card, &hyper, &ctx.cfg.train)?;
    let final_objective = fit.trace.final_objectives[fit.trace.selected];
    let model = ModelFile::new(ModelBody {
        format_version: MODEL_FORMAT_VERSION,
        cardinalities: card,
        params: fit.params,
        hyper,
        train_config: ctx.cfg.train.clone(),
        final_objective,
        teams: parsed.teams.names().to_vec(),
    })?;
    ctx.write("model.json", |w| model.save(w))?;
    ctx.write("trace.csv", |w| fit.trace.write_csv(w))?;
    for (r, (series, f)) in fit
        .trace
        .objectives
        .iter()
        .zip(&fit.trace.final_objectives)
        .enumerate()
    {
        let mark = if r == fit.trace.selected { " *" } else { "" };
        println!(
            "restart {r}: {} iterations, objective {f:.6}{mark}",
            series.len() - 1
        );
    }
    println!(
        "final objective {final_objective:.6} (restart {})",
        fit.trace.selected
    );
    Ok(())
}

pub fn infer(ctx: &Context, model: &Path, matches: &Path) -> Result<(), CliError> {
    let data = load_with_model(ctx, model, matches)?;
    let (posterior, objective) = posterior_for(ctx, &data.model, &data.schedule)?;
    ctx.write("marginals.csv", |w| {
        posterior.write_csv(Some(&data.teams), w)
    })?;
    println!(
        "objective {objective:.6} over {} weeks",
        data.schedule.num_weeks()
    );
    Ok(())
}

pub fn timeline(
    ctx: &Context,
    model: &Path,
    matches: &Path,
    team: &str,
    role: Role,
) -> Result<(), CliError> {
    let data = load_with_model(ctx, model, matches)?;
    let id = data
        .teams
        .id(team)
        .ok_or_else(|| unknown_team(team, &data.teams))?;
    if data.schedule.presence(id).is_empty() {
        return Err(CliError::config(format!(
            "team `{team}` has no matches in {}",
            matches.display()
        )));
    }
    let (posterior, _) = posterior_for(ctx, &data.model, &data.schedule)?;
    let points = strength_timeline(id, role, &posterior, &data.schedule)?;
    ctx.write("timeline.csv", |w| {
        write_timeline(points.iter().map(|p| (team, role, p)), w)
    })?;
    println!("{} weeks of {role} strength for {team}", points.len());
    Ok(())
}

pub fn predict(
    ctx: &Context,
    model: &Path,
    matches: &Path,
    fixtures: &Path,
) -> Result<(), CliError> {
    let data = load_with_model(ctx, model, matches)?;
    let teams = &data.teams;
    let fixtures = read_fixtures(fixtures, &ctx.cfg.schema, |name| {
        teams.id(name).ok_or_else(|| unknown_team(name, teams))
    })?;
    let last = data
        .schedule
        .weeks()
        .last()
        .expect("bucketed data has weeks")
        .end;
    if let Some(early) = fixtures.iter().find(|f| f.date <= last) {
        return Err(CliError::config(format!(
            "fixture on {} is not after the last match ({last})",
            early.date
        )));
    }
    // Bucket data and fixtures together so fixture weeks get a calendar and
    // season labels; the cutoff keeps them out of the data's weeks.
    let observed = data.schedule.num_weeks();
    let mut all: Vec<MatchRecord> = data.schedule.matches().map(|(_, m)| m.clone()).collect();
    all.extend(fixtures);
    let full = bucket(all, &ctx.cfg, teams.len(), Some(last))?;
    let calendar = full.calendar();
    let (posterior, _) = posterior_for(ctx, &data.model, &full.truncated(observed))?;
    let params = &data.model.body.params;
    let name = |id| teams.name(id).unwrap_or_default().to_string();
    let mut rows = Vec::new();
    for (week, m) in full.matches().filter(|(w, _)| *w >= observed) {
        let dist = predict_match_or_prior(m.home, m.away, week, &posterior, params, &calendar)?;
        rows.push(PredictionRow {
            date: m.date,
            home: name(m.home),
            away: name(m.away),
            triple: wdl(&dist),
            joint: dist.joint,
        });
    }
    ctx.write("predictions.csv", |w| write_predictions(&rows, w))?;
    for r in &rows {
        println!(
            "{} {} v {}: {:.3} {:.3} {:.3}",
            r.date, r.home, r.away, r.triple.home_win, r.triple.draw, r.triple.away_win
        );
    }
    Ok(())
}

pub fn evaluate(
    ctx: &Context,
    matches: &Path,
    split_week: Option<usize>,
    split_date: Option<&str>,
) -> Result<(), CliError> {
    let card = ctx.cfg.cardinalities()?;
    let parsed = read_matches(matches, &ctx.cfg, card.goal_cap(), TeamRegistry::new())?;
    let schedule = bucket(parsed.records, &ctx.cfg, parsed.teams.len(), None)?;
    let n = schedule.num_weeks();
    let split = match (split_week, split_date) {
        (Some(w), _) => w,
        (None, Some(d)) => {
            let date = parse_date(d)
                .or_else(|_| d.parse())
                .map_err(|_| CliError::config(format!("bad --split-date `{d}`")))?;
            schedule
                .weeks()
                .iter()
                .position(|w| w.start >= date)
                .ok_or_else(|| {
                    CliError::config(format!("--split-date {date} is after the last week"))
                })?
        }
        (None, None) => {
            return Err(CliError::config(
                "evaluate needs --split-week or --split-date",
            ))
        }
    };
    if split == 0 || split >= n {
        return Err(CliError::config(format!(
            "split week {split} must be inside 1..{n}"
        )));
    }
    // priors come from the training weeks only
    let hyper = hyperparams_for(
        &schedule.truncated(split),
        card,
        ctx.cfg.c_transition,
        ctx.cfg.c_goal,
    )
    .map_err(CliError::config)?;
    let config = RollingConfig {
        train: ctx.cfg.train.clone(),
        weekly_iters: ctx.cfg.weekly_iters,
        elo_grid: EloGrid::default(),
    };
    let rows = rolling_evaluate(&schedule, card, &hyper, &config, split)?;
    ctx.write("eval.csv", |w| write_eval_rows(&rows, &parsed.teams, w))?;
    ctx.write("net.csv", |w| write_net_series(&rows, w))?;
    println!("{} held-out matches from week {split}", rows.len());
    for m in Method::ALL {
        let lls: Vec<f64> = rows.iter().filter_map(|r| r.ll(m)).collect();
        if lls.is_empty() {
            println!("{m:>6}: unavailable");
        } else {
            let total: f64 = lls.iter().sum();
            println!(
                "{m:>6}: log-likelihood {total:.3} over {} ({:.4} per match)",
                lls.len(),
                total / lls.len() as f64
            );
        }
    }
    Ok(())
}

pub fn simulate(ctx: &Context, model: &Path, skeleton: &Path) -> Result<(), CliError> {
    let model = ctx.load_model(model)?;
    let mut teams = model_registry(&model);
    let fixtures = read_fixtures(skeleton, &ctx.cfg.schema, |name| {
        if name.is_empty() {
            return Err(CliError::runtime("missing team name in skeleton"));
        }
        Ok(teams.get_or_insert(name))
    })?;
    let skeleton = bucket(fixtures, &ctx.cfg, teams.len(), None)?;
    let sim = run_simulation(&model.body.params, &skeleton, ctx.cfg.train.seed)?;
    let records: Vec<MatchRecord> = sim.schedule.matches().map(|(_, m)| m.clone()).collect();
    ctx.write("matches.csv", |w| {
        write_matches(&records, &teams, &ctx.cfg.schema, w)
    })?;
    ctx.write("latents.csv", |w| {
        write_latents(&sim.schedule, &sim.latents, Some(&teams), w)
    })?;
    println!(
        "simulated {} matches over {} weeks with seed {}",
        records.len(),
        sim.schedule.num_weeks(),
        ctx.cfg.train.seed
    );
    Ok(())
}

pub fn validate(ctx: &Context, model: &Path) -> Result<(), CliError> {
    let file = std::fs::File::open(model)
        .map_err(|e| CliError::config(format!("cannot open {}: {e}", model.display())))?;
    let m = ModelFile::load(std::io::BufReader::new(file))
        .map_err(|e| CliError::runtime(format!("{}: {e}", model.display())))?;
    ctx.check_card(&m.body.cardinalities)?;
    let c = m.body.cardinalities;
    println!(
        "ok: S = {}, G = {}, {} teams, objective {:.6}, hash {}",
        c.num_strength_states,
        c.num_goal_states,
        m.body.teams.len(),
        m.body.final_objective,
        m.content_hash
    );
    Ok(())
}
