//! Exact marginals by summing the joint over every latent configuration.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::{EdgeKind, ModelParams, Role};
use crate::posterior::{ChainPosterior, MatchPosterior, Posterior};
use crate::schedule::{Schedule, TeamId};

/// Largest joint state space the enumerator accepts.
pub const MAX_BRUTE_FORCE_STATES: f64 = 1e7;

#[derive(Debug, Clone)]
pub struct ExactInference {
    pub posterior: Posterior,
    /// `ln P(goals | params)`.
    pub log_evidence: f64,
}

struct Layout {
    /// First node index of each team's chain; offense node `o = base + p`,
    /// defense node `o + n_per_role`.
    base: Vec<usize>,
    presence: Vec<Vec<usize>>,
    edges: Vec<Vec<EdgeKind>>,
    n_per_role: usize,
    /// (week, home, away, home node pos, away node pos, home goals, away goals)
    matches: Vec<(usize, usize, usize, usize, usize, usize, usize)>,
}

fn layout(schedule: &Schedule, cap: usize) -> Layout {
    let mut base = Vec::new();
    let mut presence = Vec::new();
    let mut edges = Vec::new();
    let mut n = 0;
    for t in 0..schedule.num_teams() {
        let p = schedule.presence(TeamId(t)).to_vec();
        base.push(n);
        n += p.len();
        edges.push(schedule.chain_edges(TeamId(t)));
        presence.push(p);
    }
    let matches = schedule
        .matches()
        .map(|(w, m)| {
            let pos = |t: TeamId| {
                presence[t.0]
                    .iter()
                    .position(|&x| x == w)
                    .expect("player present")
            };
            (
                w,
                m.home.0,
                m.away.0,
                pos(m.home),
                pos(m.away),
                m.home_goals.min(cap),
                m.away_goals.min(cap),
            )
        })
        .collect();
    Layout {
        base,
        presence,
        edges,
        n_per_role: n,
        matches,
    }
}

/// Exact γ, ξ, ζ and log evidence. Refuses instances whose joint state
/// space exceeds [`MAX_BRUTE_FORCE_STATES`].
pub fn brute_force(schedule: &Schedule, params: &ModelParams) -> Result<ExactInference> {
    let s = params.card.num_strength_states;
    let lay = layout(schedule, params.card.goal_cap());
    let nodes = 2 * lay.n_per_role;
    let states = (s as f64).powi(nodes as i32);
    if states > MAX_BRUTE_FORCE_STATES {
        return Err(Error::TooLarge {
            states,
            limit: MAX_BRUTE_FORCE_STATES,
        });
    }
    let off = |t: usize, p: usize| lay.base[t] + p;
    let def = |t: usize, p: usize| lay.n_per_role + lay.base[t] + p;

    let mut gamma = vec![vec![0.0; s]; nodes];
    // one s x s accumulator per chain edge and role, indexed like `gamma` by the edge's left node
    let mut xi = vec![vec![0.0; s * s]; nodes];
    let mut zeta = vec![[vec![0.0; s * s], vec![0.0; s * s]]; lay.matches.len()];
    let mut z = 0.0;

    let mut x = vec![0usize; nodes];
    let total = states as usize;
    for _ in 0..total {
        let mut w = 1.0;
        for t in 0..lay.presence.len() {
            let len = lay.presence[t].len();
            if len == 0 {
                continue;
            }
            w *= params.pi[x[off(t, 0)]] * params.rho[x[def(t, 0)]];
            for (p, &kind) in lay.edges[t].iter().enumerate() {
                w *= params.transition(Role::Offense, kind)[[x[off(t, p)], x[off(t, p + 1)]]];
                w *= params.transition(Role::Defense, kind)[[x[def(t, p)], x[def(t, p + 1)]]];
            }
        }
        for &(_, h, a, hp, ap, gh, ga) in &lay.matches {
            w *= params.psi[[x[off(h, hp)], x[def(a, ap)], gh]];
            w *= params.gamma_cpt[[x[off(a, ap)], x[def(h, hp)], ga]];
        }
        if w > 0.0 {
            z += w;
            for (v, &xv) in x.iter().enumerate() {
                gamma[v][xv] += w;
            }
            for t in 0..lay.presence.len() {
                for p in 0..lay.edges[t].len() {
                    for v in [off(t, p), def(t, p)] {
                        xi[v][x[v] * s + x[v + 1]] += w;
                    }
                }
            }
            for (m, &(_, h, a, hp, ap, _, _)) in lay.matches.iter().enumerate() {
                zeta[m][0][x[off(h, hp)] * s + x[def(a, ap)]] += w;
                zeta[m][1][x[off(a, ap)] * s + x[def(h, hp)]] += w;
            }
        }
        // odometer
        for d in x.iter_mut() {
            *d += 1;
            if *d < s {
                break;
            }
            *d = 0;
        }
    }
    if !(z > 0.0) {
        return Err(Error::ContradictoryEvidence(
            "observed goals have zero probability".into(),
        ));
    }
    let norm = |v: &[f64]| Array1::from_iter(v.iter().map(|x| x / z));
    let norm2 = |v: &[f64]| Array2::from_shape_fn((s, s), |(i, j)| v[i * s + j] / z);
    let mut chains = Vec::new();
    for t in 0..lay.presence.len() {
        let len = lay.presence[t].len();
        let played: Vec<bool> = lay.presence[t]
            .iter()
            .map(|&w| {
                lay.matches
                    .iter()
                    .any(|m| m.0 == w && (m.1 == t || m.2 == t))
            })
            .collect();
        chains.push(ChainPosterior {
            team: TeamId(t),
            weeks: lay.presence[t].clone(),
            edge_kinds: lay.edges[t].clone(),
            plays: played,
            offense: (0..len).map(|p| norm(&gamma[off(t, p)])).collect(),
            defense: (0..len).map(|p| norm(&gamma[def(t, p)])).collect(),
            xi_offense: (0..lay.edges[t].len())
                .map(|p| norm2(&xi[off(t, p)]))
                .collect(),
            xi_defense: (0..lay.edges[t].len())
                .map(|p| norm2(&xi[def(t, p)]))
                .collect(),
        });
    }
    let matches = lay
        .matches
        .iter()
        .zip(&zeta)
        .map(|(&(w, h, a, _, _, gh, ga), zm)| MatchPosterior {
            week: w,
            home: TeamId(h),
            away: TeamId(a),
            home_goals: gh,
            away_goals: ga,
            zeta_home: norm2(&zm[0]),
            zeta_away: norm2(&zm[1]),
        })
        .collect();
    Ok(ExactInference {
        posterior: Posterior {
            num_states: s,
            chains,
            matches,
        },
        log_evidence: z.ln(),
    })
}

pub fn brute_force_posterior(schedule: &Schedule, params: &ModelParams) -> Result<Posterior> {
    brute_force(schedule, params).map(|e| e.posterior)
}
