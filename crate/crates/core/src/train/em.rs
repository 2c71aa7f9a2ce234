//! MAP expectation-maximization with random restarts.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::emission::{emission_objective, solve_emission, EmissionSolverConfig};
use super::mstep::{m_step_initial, m_step_transition, SufficientStats};
use crate::error::{Error, Result};
use crate::graph::{build_graph, log_posterior, run_bp, BpConfig, FactorGraph};
use crate::model::{
    expected_goals, validate_params, Cardinalities, EdgeKind, Hyperparams, ModelParams, Role,
};
use crate::posterior::Posterior;
use crate::schedule::Schedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    pub bp_cycles: usize,
    /// Relative change of the objective below which a restart stops.
    pub convergence_tol: f64,
    pub monotonicity_tol: f64,
    pub emission_solver_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            restarts: 8,
            seed: 0,
            bp_cycles: 20,
            convergence_tol: 1e-6,
            monotonicity_tol: 1e-9,
            emission_solver_iters: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("max_iterations", self.max_iterations),
            ("restarts", self.restarts),
            ("bp_cycles", self.bp_cycles),
            ("emission_solver_iters", self.emission_solver_iters),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("convergence_tol", self.convergence_tol),
            ("monotonicity_tol", self.monotonicity_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn bp(&self) -> BpConfig {
        BpConfig::with_cycles(self.bp_cycles)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Objective after each E step, per restart; entry 0 is the initialization.
    pub objectives: Vec<Vec<f64>>,
    pub final_objectives: Vec<f64>,
    pub selected: usize,
}

impl TrainTrace {
    /// CSV with columns `restart, iteration, objective`.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["restart", "iteration", "objective"])?;
        for (r, series) in self.objectives.iter().enumerate() {
            for (i, v) in series.iter().enumerate() {
                w.write_record([r.to_string(), i.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    pub posterior: Posterior,
    pub trace: TrainTrace,
}

fn dirichlet_row(rng: &mut impl Rng, alpha: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .expect("positive shape")
                .sample(rng)
                .max(1e-300)
        })
        .collect();
    let z: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= z);
    v
}

fn random_transition(rng: &mut impl Rng, s: usize) -> Array2<f64> {
    let mut t = Array2::zeros((s, s));
    for j in 0..s {
        for (k, p) in dirichlet_row(rng, &vec![5.0; s]).into_iter().enumerate() {
            t[[j, k]] = 0.5 * p + if j == k { 0.5 } else { 0.0 };
        }
    }
    t
}

/// Rows drawn around the prior shape, then permuted so expected goals rise in
/// the offense state and fall in the defense state.
fn random_cpt(rng: &mut impl Rng, s: usize, prior: &Array1<f64>) -> Array3<f64> {
    let mean = prior.mean().unwrap_or(1.0);
    let alpha: Vec<f64> = prior.iter().map(|a| a / mean).collect();
    let g = prior.len();
    let mut cpt = Array3::zeros((s, s, g));
    for i in 0..s {
        for j in 0..s {
            for (k, p) in dirichlet_row(rng, &alpha).into_iter().enumerate() {
                cpt[[i, j, k]] = p;
            }
        }
    }
    // sort each defense column ascending over offense, then each offense row
    // descending over defense; the second pass keeps the first ordering
    for j in 0..s {
        let e = expected_goals(&cpt);
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| e[[a, j]].total_cmp(&e[[b, j]]));
        let rows: Vec<Array1<f64>> = order
            .iter()
            .map(|&i| cpt.slice(ndarray::s![i, j, ..]).to_owned())
            .collect();
        for (i, r) in rows.into_iter().enumerate() {
            cpt.slice_mut(ndarray::s![i, j, ..]).assign(&r);
        }
    }
    for i in 0..s {
        let e = expected_goals(&cpt);
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| e[[i, b]].total_cmp(&e[[i, a]]));
        let rows: Vec<Array1<f64>> = order
            .iter()
            .map(|&j| cpt.slice(ndarray::s![i, j, ..]).to_owned())
            .collect();
        for (j, r) in rows.into_iter().enumerate() {
            cpt.slice_mut(ndarray::s![i, j, ..]).assign(&r);
        }
    }
    cpt
}

/// Random feasible starting point for one restart.
pub fn random_init(card: Cardinalities, hyper: &Hyperparams, rng: &mut impl Rng) -> ModelParams {
    let s = card.num_strength_states;
    ModelParams {
        card,
        pi: Array1::from(dirichlet_row(rng, &vec![1.0; s])),
        rho: Array1::from(dirichlet_row(rng, &vec![1.0; s])),
        omega_within: random_transition(rng, s),
        omega_between: random_transition(rng, s),
        delta_within: random_transition(rng, s),
        delta_between: random_transition(rng, s),
        psi: random_cpt(rng, s, &hyper.beta),
        gamma_cpt: random_cpt(rng, s, &hyper.phi),
    }
}

fn check_shapes(card: Cardinalities, hyper: &Hyperparams) -> Result<()> {
    let s = card.num_strength_states;
    let g = card.num_goal_states;
    if hyper.alpha_within.dim() != (s, s)
        || hyper.alpha_between.dim() != (s, s)
        || hyper.beta.len() != g
        || hyper.phi.len() != g
    {
        return Err(Error::InvalidInput(format!(
            "hyperparameters do not match cardinalities S={s} G={g}"
        )));
    }
    Ok(())
}

/// The full M step. Keeps the previous emission table when the constrained
/// solve fails to improve its objective.
pub fn m_step(
    params: &ModelParams,
    hyper: &Hyperparams,
    posterior: &Posterior,
    config: &TrainConfig,
) -> Result<ModelParams> {
    let stats = SufficientStats::from_posterior(posterior, params.card.num_goal_states);
    let (pi, rho) = m_step_initial(posterior);
    let t = |role, kind| {
        let alpha = match kind {
            EdgeKind::Within => &hyper.alpha_within,
            EdgeKind::Between => &hyper.alpha_between,
        };
        m_step_transition(stats.xi_sums(role, kind), alpha)
    };
    let solver = EmissionSolverConfig {
        tol: config.monotonicity_tol,
        max_newton_steps: config.emission_solver_iters,
    };
    let emission =
        |counts: &Array3<f64>, prior: &Array1<f64>, old: &Array3<f64>| -> Result<Array3<f64>> {
            let new = solve_emission(counts, prior, solver, Some(old))?;
            let old_ok = super::emission::monotonicity_violation(old) <= config.monotonicity_tol;
            if old_ok
                && emission_objective(counts, prior, old) > emission_objective(counts, prior, &new)
            {
                Ok(old.clone())
            } else {
                Ok(new)
            }
        };
    Ok(ModelParams {
        card: params.card,
        pi,
        rho,
        omega_within: t(Role::Offense, EdgeKind::Within),
        omega_between: t(Role::Offense, EdgeKind::Between),
        delta_within: t(Role::Defense, EdgeKind::Within),
        delta_between: t(Role::Defense, EdgeKind::Between),
        psi: emission(&stats.psi_counts, &hyper.beta, &params.psi)?,
        gamma_cpt: emission(&stats.gamma_counts, &hyper.phi, &params.gamma_cpt)?,
    })
}

/// E step followed by the objective at those parameters.
pub fn e_step(
    graph: &FactorGraph,
    params: &ModelParams,
    hyper: &Hyperparams,
    config: &TrainConfig,
) -> Result<(Posterior, f64)> {
    let posterior = run_bp(graph, params, &config.bp())?;
    let lp = log_posterior(params, hyper, &posterior);
    Ok((posterior, lp.value))
}

/// `iterations` rounds of (M step, E step) from `params` and its posterior.
/// Returns the final parameters, their posterior and the objective after each round.
pub fn em_iterations(
    graph: &FactorGraph,
    hyper: &Hyperparams,
    params: ModelParams,
    posterior: Posterior,
    iterations: usize,
    config: &TrainConfig,
) -> Result<(ModelParams, Posterior, Vec<f64>)> {
    let mut params = params;
    let mut posterior = posterior;
    let mut objectives = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let ctx = |e: Error| e.context(format!("EM iteration {}", it + 1));
        params = m_step(&params, hyper, &posterior, config).map_err(ctx)?;
        let (post, obj) = e_step(graph, &params, hyper, config).map_err(ctx)?;
        posterior = post;
        objectives.push(obj);
    }
    Ok((params, posterior, objectives))
}

/// Runs EM from `params` until the relative objective change falls below the
/// tolerance or the iteration cap is hit.
pub fn em_from(
    graph: &FactorGraph,
    hyper: &Hyperparams,
    params: ModelParams,
    config: &TrainConfig,
) -> Result<(ModelParams, Posterior, Vec<f64>)> {
    let (mut posterior, mut obj) =
        e_step(graph, &params, hyper, config).map_err(|e| e.context("initial E step"))?;
    let mut params = params;
    let mut series = vec![obj];
    for it in 0..config.max_iterations {
        let ctx = |e: Error| e.context(format!("EM iteration {}", it + 1));
        let next = m_step(&params, hyper, &posterior, config).map_err(ctx)?;
        let (post, next_obj) = e_step(graph, &next, hyper, config).map_err(ctx)?;
        params = next;
        posterior = post;
        series.push(next_obj);
        let done = (next_obj - obj).abs() <= config.convergence_tol * obj.abs().max(1.0);
        obj = next_obj;
        if done {
            break;
        }
    }
    Ok((params, posterior, series))
}

/// Fits the model with `config.restarts` random starts (seeds `seed + r`) and
/// keeps the restart with the highest final objective (earliest on ties).
pub fn em_fit(
    schedule: &Schedule,
    card: Cardinalities,
    hyper: &Hyperparams,
    config: &TrainConfig,
) -> Result<FitResult> {
    config.validate()?;
    hyper.validate()?;
    check_shapes(card, hyper)?;
    if schedule.num_matches() == 0 {
        return Err(Error::InvalidInput(
            "cannot train on a schedule without matches".into(),
        ));
    }
    let graph = build_graph(schedule, card);
    let runs: Vec<Result<(ModelParams, Posterior, Vec<f64>)>> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(r as u64));
            let init = random_init(card, hyper, &mut rng);
            em_from(&graph, hyper, init, config).map_err(|e| e.context(format!("restart {r}")))
        })
        .collect();
    let mut runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let finals: Vec<f64> = runs
        .iter()
        .map(|r| *r.2.last().expect("at least one objective"))
        .collect();
    let mut selected = 0;
    for (r, &v) in finals.iter().enumerate() {
        let best = finals[selected];
        if v > best || (!best.is_finite() && v.is_finite()) {
            selected = r;
        }
    }
    let objectives = runs.iter().map(|r| r.2.clone()).collect();
    let (params, posterior, _) = runs.swap_remove(selected);
    if let Some(v) = validate_params(&params).first() {
        return Err(Error::NonFinite(format!(
            "fitted parameters are invalid: {}",
            v.message
        )));
    }
    Ok(FitResult {
        params,
        posterior,
        trace: TrainTrace {
            objectives,
            final_objectives: finals,
            selected,
        },
    })
}
