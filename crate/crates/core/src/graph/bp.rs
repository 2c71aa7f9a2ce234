//! Sum-product message passing over the coupled chains.
//!
//! Only factor-to-variable messages are stored; variable-to-factor messages
//! are cavity products formed on demand. One cycle is a forward sweep over
//! weeks (emission factors of the week, then messages to the next week)
//! followed by the mirror-image backward sweep.

use ndarray::{Array1, Array2};

use super::ops::{check_sum, normalize};
use super::FactorGraph;
use crate::error::{Error, Result};
use crate::model::{EdgeKind, ModelParams, Role};
use crate::posterior::{ChainPosterior, MatchPosterior, Posterior};

#[derive(Debug, Clone, PartialEq)]
pub struct BpConfig {
    pub cycles: usize,
    /// Weight kept from the previous message, in `[0, 1)`.
    pub damping: f64,
    /// Stop once the largest L1 change of any message in a cycle falls below this.
    pub early_stop_tol: Option<f64>,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            cycles: 20,
            damping: 0.0,
            early_stop_tol: None,
        }
    }
}

impl BpConfig {
    pub fn with_cycles(cycles: usize) -> Self {
        Self {
            cycles,
            ..Self::default()
        }
    }
}

const ROLES: [Role; 2] = [Role::Offense, Role::Defense];

fn role_idx(role: Role) -> usize {
    match role {
        Role::Offense => 0,
        Role::Defense => 1,
    }
}

fn kind_idx(kind: EdgeKind) -> usize {
    match kind {
        EdgeKind::Within => 0,
        EdgeKind::Between => 1,
    }
}

/// Parameters flattened for the inner loops.
struct Kernels {
    s: usize,
    prior: [Vec<f64>; 2],
    /// `[role][kind]`, row-major `s x s`.
    trans: [[Vec<f64>; 2]; 2],
    /// `[g][i][j]` for the home and away CPTs.
    psi: Vec<f64>,
    gamma: Vec<f64>,
}

impl Kernels {
    fn new(params: &ModelParams) -> Self {
        let s = params.card.num_strength_states;
        let g = params.card.num_goal_states;
        let flat_t = |role, kind| {
            params
                .transition(role, kind)
                .iter()
                .copied()
                .collect::<Vec<f64>>()
        };
        let flat_cpt = |cpt: &ndarray::Array3<f64>| {
            let mut out = vec![0.0; g * s * s];
            for i in 0..s {
                for j in 0..s {
                    for k in 0..g {
                        out[(k * s + i) * s + j] = cpt[[i, j, k]];
                    }
                }
            }
            out
        };
        Self {
            s,
            prior: [params.pi.to_vec(), params.rho.to_vec()],
            trans: [
                [
                    flat_t(Role::Offense, EdgeKind::Within),
                    flat_t(Role::Offense, EdgeKind::Between),
                ],
                [
                    flat_t(Role::Defense, EdgeKind::Within),
                    flat_t(Role::Defense, EdgeKind::Between),
                ],
            ],
            psi: flat_cpt(&params.psi),
            gamma: flat_cpt(&params.gamma_cpt),
        }
    }

    fn slice<'a>(&self, cpt: &'a [f64], g: usize) -> &'a [f64] {
        let n = self.s * self.s;
        &cpt[g * n..(g + 1) * n]
    }
}

struct Messages {
    /// Into each node from the transition factor on its left (uniform at heads).
    fwd: [Vec<f64>; 2],
    /// Into each node from the transition factor on its right (uniform at tails).
    bwd: [Vec<f64>; 2],
    /// Into each node from its emission factor (uniform when it does not play).
    emis: [Vec<f64>; 2],
}

struct Engine<'a> {
    graph: &'a FactorGraph,
    k: Kernels,
    msg: Messages,
    damping: f64,
    cycle_delta: f64,
    tmp_a: Vec<f64>,
    tmp_b: Vec<f64>,
    tmp_out: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(graph: &'a FactorGraph, params: &ModelParams, damping: f64) -> Self {
        let s = params.card.num_strength_states;
        let n = graph.nodes_per_role() * s;
        let u = vec![1.0 / s as f64; n];
        Self {
            graph,
            k: Kernels::new(params),
            msg: Messages {
                fwd: [u.clone(), u.clone()],
                bwd: [u.clone(), u.clone()],
                emis: [u.clone(), u],
            },
            damping,
            cycle_delta: 0.0,
            tmp_a: vec![0.0; s],
            tmp_b: vec![0.0; s],
            tmp_out: vec![0.0; s],
        }
    }

    fn node(&self, team: usize, pos: usize) -> usize {
        (self.graph.chains[team].offset + pos) * self.k.s
    }

    fn label(&self, role: Role, team: usize, pos: usize) -> String {
        let c = &self.graph.chains[team];
        format!("team {} {role} week {}", c.team, c.weeks[pos])
    }

    /// Product of messages into a node, excluding the given sources.
    fn cavity(
        &self,
        role: Role,
        team: usize,
        pos: usize,
        skip_fwd: bool,
        skip_bwd: bool,
        skip_emis: bool,
        out: &mut [f64],
    ) {
        let r = role_idx(role);
        let base = self.node(team, pos);
        let s = self.k.s;
        if pos == 0 {
            out.copy_from_slice(&self.k.prior[r]);
        } else {
            out.iter_mut().for_each(|x| *x = 1.0);
        }
        if !skip_fwd && pos > 0 {
            for (o, m) in out.iter_mut().zip(&self.msg.fwd[r][base..base + s]) {
                *o *= m;
            }
        }
        if !skip_bwd {
            for (o, m) in out.iter_mut().zip(&self.msg.bwd[r][base..base + s]) {
                *o *= m;
            }
        }
        if !skip_emis {
            for (o, m) in out.iter_mut().zip(&self.msg.emis[r][base..base + s]) {
                *o *= m;
            }
        }
    }

    /// Normalizes `new`, applies damping and writes it into the message table.
    fn store(&mut self, which: Which, role: Role, team: usize, pos: usize) -> Result<()> {
        let sum = normalize(&mut self.tmp_out);
        check_sum(sum, || self.label(role, team, pos))?;
        let base = self.node(team, pos);
        let s = self.k.s;
        let r = role_idx(role);
        let table = match which {
            Which::Fwd => &mut self.msg.fwd[r],
            Which::Bwd => &mut self.msg.bwd[r],
            Which::Emis => &mut self.msg.emis[r],
        };
        let dst = &mut table[base..base + s];
        let mut delta = 0.0;
        if self.damping > 0.0 {
            let d = self.damping;
            for (o, n) in dst.iter_mut().zip(&self.tmp_out) {
                let v = d * *o + (1.0 - d) * n;
                delta += (v - *o).abs();
                *o = v;
            }
        } else {
            for (o, n) in dst.iter_mut().zip(&self.tmp_out) {
                delta += (n - *o).abs();
                *o = *n;
            }
        }
        if !delta.is_finite() {
            return Err(Error::NonFinite(self.label(role, team, pos)));
        }
        self.cycle_delta = self.cycle_delta.max(delta);
        Ok(())
    }

    fn update_match(&mut self, m: usize) -> Result<()> {
        let mf = &self.graph.matches[m];
        let (h, a) = (mf.home.0, mf.away.0);
        let (hp, ap) = (mf.home_pos, mf.away_pos);
        let (gh, ga) = (mf.home_goals, mf.away_goals);
        // home goals: home offense x away defense
        self.emission(h, hp, a, ap, gh, true)?;
        // away goals: away offense x home defense
        self.emission(a, ap, h, hp, ga, false)
    }

    fn emission(
        &mut self,
        off_team: usize,
        off_pos: usize,
        def_team: usize,
        def_pos: usize,
        g: usize,
        home: bool,
    ) -> Result<()> {
        let s = self.k.s;
        let mut cav_o = std::mem::take(&mut self.tmp_a);
        let mut cav_d = std::mem::take(&mut self.tmp_b);
        self.cavity(
            Role::Offense,
            off_team,
            off_pos,
            false,
            false,
            true,
            &mut cav_o,
        );
        self.cavity(
            Role::Defense,
            def_team,
            def_pos,
            false,
            false,
            true,
            &mut cav_d,
        );
        let cpt = if home { &self.k.psi } else { &self.k.gamma };
        let table = self.k.slice(cpt, g);
        for i in 0..s {
            let row = &table[i * s..(i + 1) * s];
            self.tmp_out[i] = row.iter().zip(&cav_d).map(|(c, d)| c * d).sum();
        }
        let res = self.store(Which::Emis, Role::Offense, off_team, off_pos);
        if res.is_ok() {
            let cpt = if home { &self.k.psi } else { &self.k.gamma };
            let table = self.k.slice(cpt, g);
            for j in 0..s {
                self.tmp_out[j] = (0..s).map(|i| cav_o[i] * table[i * s + j]).sum();
            }
        }
        let res = res.and_then(|_| self.store(Which::Emis, Role::Defense, def_team, def_pos));
        self.tmp_a = cav_o;
        self.tmp_b = cav_d;
        res
    }

    fn send_forward(&mut self, role: Role, team: usize, pos: usize) -> Result<()> {
        let chain = &self.graph.chains[team];
        if pos + 1 >= chain.len() {
            return Ok(());
        }
        let kind = chain.edges[pos];
        let s = self.k.s;
        let mut cav = std::mem::take(&mut self.tmp_a);
        self.cavity(role, team, pos, false, true, false, &mut cav);
        let t = &self.k.trans[role_idx(role)][kind_idx(kind)];
        self.tmp_out.iter_mut().for_each(|x| *x = 0.0);
        for (i, ci) in cav.iter().enumerate() {
            for (o, tk) in self.tmp_out.iter_mut().zip(&t[i * s..(i + 1) * s]) {
                *o += ci * tk;
            }
        }
        self.tmp_a = cav;
        self.store(Which::Fwd, role, team, pos + 1)
    }

    fn send_backward(&mut self, role: Role, team: usize, pos: usize) -> Result<()> {
        if pos == 0 {
            return Ok(());
        }
        let kind = self.graph.chains[team].edges[pos - 1];
        let s = self.k.s;
        let mut cav = std::mem::take(&mut self.tmp_a);
        self.cavity(role, team, pos, true, false, false, &mut cav);
        let t = &self.k.trans[role_idx(role)][kind_idx(kind)];
        for i in 0..s {
            self.tmp_out[i] = t[i * s..(i + 1) * s]
                .iter()
                .zip(&cav)
                .map(|(tk, c)| tk * c)
                .sum();
        }
        self.tmp_a = cav;
        self.store(Which::Bwd, role, team, pos - 1)
    }

    fn cycle(&mut self) -> Result<()> {
        self.cycle_delta = 0.0;
        let graph = self.graph;
        for w in 0..graph.num_weeks() {
            for &m in &graph.matches_by_week[w] {
                self.update_match(m)?;
            }
            for &(t, p) in &graph.nodes_by_week[w] {
                for role in ROLES {
                    self.send_forward(role, t, p)?;
                }
            }
        }
        for w in (0..graph.num_weeks()).rev() {
            for &m in &graph.matches_by_week[w] {
                self.update_match(m)?;
            }
            for &(t, p) in &graph.nodes_by_week[w] {
                for role in ROLES {
                    self.send_backward(role, t, p)?;
                }
            }
        }
        Ok(())
    }

    fn posterior(&self, params: &ModelParams) -> Result<Posterior> {
        let s = self.k.s;
        let mut a = vec![0.0; s];
        let mut b = vec![0.0; s];
        let mut chains = Vec::with_capacity(self.graph.chains.len());
        for (t, c) in self.graph.chains.iter().enumerate() {
            let mut gammas: [Vec<Array1<f64>>; 2] =
                [Vec::with_capacity(c.len()), Vec::with_capacity(c.len())];
            let mut xis: [Vec<Array2<f64>>; 2] = [Vec::new(), Vec::new()];
            for role in ROLES {
                let r = role_idx(role);
                for p in 0..c.len() {
                    self.cavity(role, t, p, false, false, false, &mut a);
                    check_sum(normalize(&mut a), || self.label(role, t, p))?;
                    gammas[r].push(Array1::from(a.clone()));
                }
                for p in 0..c.edges.len() {
                    self.cavity(role, t, p, false, true, false, &mut a);
                    self.cavity(role, t, p + 1, true, false, false, &mut b);
                    let trans = params.transition(role, c.edges[p]);
                    let xi = super::ops::pairwise_marginal(&a, &b, trans)
                        .map_err(|e| e.context(self.label(role, t, p)))?;
                    xis[r].push(xi);
                }
            }
            let [offense, defense] = gammas;
            let [xi_offense, xi_defense] = xis;
            chains.push(ChainPosterior {
                team: c.team,
                weeks: c.weeks.clone(),
                edge_kinds: c.edges.clone(),
                plays: c.match_at.iter().map(Option::is_some).collect(),
                offense,
                defense,
                xi_offense,
                xi_defense,
            });
        }
        let mut matches = Vec::with_capacity(self.graph.matches.len());
        for (idx, m) in self.graph.matches.iter().enumerate() {
            let (h, ap) = (m.home.0, m.away_pos);
            let (aw, hp) = (m.away.0, m.home_pos);
            let ctx = |e: Error| e.context(format!("match {idx} in week {}", m.week));
            self.cavity(Role::Offense, h, hp, false, false, true, &mut a);
            self.cavity(Role::Defense, aw, ap, false, false, true, &mut b);
            let zeta_home =
                super::ops::match_pair_marginal(&a, &b, &params.psi, m.home_goals).map_err(ctx)?;
            self.cavity(Role::Offense, aw, ap, false, false, true, &mut a);
            self.cavity(Role::Defense, h, hp, false, false, true, &mut b);
            let zeta_away =
                super::ops::match_pair_marginal(&a, &b, &params.gamma_cpt, m.away_goals)
                    .map_err(ctx)?;
            matches.push(MatchPosterior {
                week: m.week,
                home: m.home,
                away: m.away,
                home_goals: m.home_goals,
                away_goals: m.away_goals,
                zeta_home,
                zeta_away,
            });
        }
        Ok(Posterior {
            num_states: s,
            chains,
            matches,
        })
    }
}

#[derive(Clone, Copy)]
enum Which {
    Fwd,
    Bwd,
    Emis,
}

/// Runs `config.cycles` sweeps (fewer with early stopping) and returns all marginals.
pub fn run_bp(graph: &FactorGraph, params: &ModelParams, config: &BpConfig) -> Result<Posterior> {
    if config.cycles == 0 {
        return Err(Error::InvalidInput(
            "belief propagation needs at least one cycle".into(),
        ));
    }
    if !(0.0..1.0).contains(&config.damping) {
        return Err(Error::InvalidInput(format!(
            "damping must lie in [0, 1), got {}",
            config.damping
        )));
    }
    if params.card != graph.card {
        return Err(Error::InvalidInput(
            "parameter and graph cardinalities differ".into(),
        ));
    }
    let mut engine = Engine::new(graph, params, config.damping);
    for _ in 0..config.cycles {
        engine.cycle()?;
        if config
            .early_stop_tol
            .is_some_and(|tol| engine.cycle_delta < tol)
        {
            break;
        }
    }
    engine.posterior(params)
}
