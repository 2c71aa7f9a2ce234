//! Model-facing value types shared by every stage of the pipeline.
//!
//! Strength states and goal values are 0-based. A higher strength state means a
//! stronger unit: a stronger offense scores more, a stronger defense concedes less.

use std::fmt;

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;
const MONOTONE_TOL: f64 = 1e-9;

/// Number of latent strength states and of goal states (goal cap + 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cardinalities {
    pub num_strength_states: usize,
    pub num_goal_states: usize,
}

impl Default for Cardinalities {
    fn default() -> Self {
        Self {
            num_strength_states: 4,
            num_goal_states: 5,
        }
    }
}

impl Cardinalities {
    /// `num_strength_states == 1` is accepted as the degenerate no-latent-structure model.
    pub fn new(num_strength_states: usize, num_goal_states: usize) -> Result<Self> {
        if num_strength_states < 1 || num_goal_states < 2 {
            return Err(Error::InvalidInput(format!(
                "cardinalities need S >= 1 and G >= 2, got S={num_strength_states} G={num_goal_states}"
            )));
        }
        Ok(Self {
            num_strength_states,
            num_goal_states,
        })
    }

    pub fn goal_cap(&self) -> usize {
        self.num_goal_states - 1
    }
}

/// Which half of a team a latent chain describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Offense,
    Defense,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Offense => "offense",
            Role::Defense => "defense",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "offense" | "o" => Ok(Role::Offense),
            "defense" | "d" => Ok(Role::Defense),
            other => Err(Error::InvalidInput(format!("unknown role `{other}`"))),
        }
    }
}

/// Transition edge type between consecutive chain nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Within,
    Between,
}

/// theta: initial distributions, within/between transitions and the two emission CPTs.
///
/// CPTs are indexed `[offense state][defense state][goals]`; `psi` governs home
/// goals (home offense vs away defense) and `gamma_cpt` away goals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub card: Cardinalities,
    pub pi: Array1<f64>,
    pub rho: Array1<f64>,
    pub omega_within: Array2<f64>,
    pub omega_between: Array2<f64>,
    pub delta_within: Array2<f64>,
    pub delta_between: Array2<f64>,
    pub psi: Array3<f64>,
    pub gamma_cpt: Array3<f64>,
}

impl ModelParams {
    /// Uniform distributions everywhere.
    pub fn uniform(card: Cardinalities) -> Self {
        let s = card.num_strength_states;
        let g = card.num_goal_states;
        let vec = Array1::from_elem(s, 1.0 / s as f64);
        let mat = Array2::from_elem((s, s), 1.0 / s as f64);
        let cpt = Array3::from_elem((s, s, g), 1.0 / g as f64);
        Self {
            card,
            pi: vec.clone(),
            rho: vec,
            omega_within: mat.clone(),
            omega_between: mat.clone(),
            delta_within: mat.clone(),
            delta_between: mat,
            psi: cpt.clone(),
            gamma_cpt: cpt,
        }
    }

    pub fn transition(&self, role: Role, kind: EdgeKind) -> &Array2<f64> {
        match (role, kind) {
            (Role::Offense, EdgeKind::Within) => &self.omega_within,
            (Role::Offense, EdgeKind::Between) => &self.omega_between,
            (Role::Defense, EdgeKind::Within) => &self.delta_within,
            (Role::Defense, EdgeKind::Between) => &self.delta_between,
        }
    }

    pub fn initial(&self, role: Role) -> &Array1<f64> {
        match role {
            Role::Offense => &self.pi,
            Role::Defense => &self.rho,
        }
    }
}

/// Dirichlet hyperparameters Lambda plus the pseudocount totals they were built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha_within: Array2<f64>,
    pub alpha_between: Array2<f64>,
    /// Home emission prior.
    pub beta: Array1<f64>,
    /// Away emission prior.
    pub phi: Array1<f64>,
    pub c_transition: f64,
    pub c_goal: f64,
}

impl Hyperparams {
    /// Entries must be >= 1 and the within-season prior strictly diagonally peaked.
    pub fn validate(&self) -> Result<()> {
        let all = self
            .alpha_within
            .iter()
            .chain(self.alpha_between.iter())
            .chain(self.beta.iter())
            .chain(self.phi.iter());
        for &a in all {
            if !(a.is_finite() && a >= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "Dirichlet parameters must be finite and >= 1, found {a}"
                )));
            }
        }
        let s = self.alpha_within.nrows();
        for j in 0..s {
            for k in 0..s {
                if k != j && self.alpha_within[[j, j]] <= self.alpha_within[[j, k]] {
                    return Err(Error::InvalidInput(format!(
                        "alpha_within row {j} is not peaked on the diagonal"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Win/draw/loss probabilities from the home side's perspective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionTriple {
    pub home_win: f64,
    pub draw: f64,
    pub away_win: f64,
}

impl PredictionTriple {
    pub fn new(home_win: f64, draw: f64, away_win: f64) -> Self {
        Self {
            home_win,
            draw,
            away_win,
        }
    }

    pub fn probability_of(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::HomeWin => self.home_win,
            Outcome::Draw => self.draw,
            Outcome::AwayWin => self.away_win,
        }
    }

    pub fn sum(&self) -> f64 {
        self.home_win + self.draw + self.away_win
    }
}

/// Full-time result from the home side's perspective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    HomeWin,
    Draw,
    AwayWin,
}

impl Outcome {
    pub fn from_goals(home: usize, away: usize) -> Self {
        match home.cmp(&away) {
            std::cmp::Ordering::Greater => Outcome::HomeWin,
            std::cmp::Ordering::Equal => Outcome::Draw,
            std::cmp::Ordering::Less => Outcome::AwayWin,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::HomeWin => "win",
            Outcome::Draw => "draw",
            Outcome::AwayWin => "loss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Shape,
    NonFinite,
    Negative,
    Sum,
    Monotonicity,
}

/// One failed invariant, naming the component and index.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Checks every `ModelParams` invariant, monotone expected goals included.
pub fn validate_params(params: &ModelParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let s = params.card.num_strength_states;
    let g = params.card.num_goal_states;
    let mut push = |kind, message: String| out.push(Violation { kind, message });

    for (name, v) in [("pi", &params.pi), ("rho", &params.rho)] {
        if v.len() != s {
            push(
                ViolationKind::Shape,
                format!("{name} has length {} (expected {s})", v.len()),
            );
            continue;
        }
        check_row(name.to_string(), v.iter().copied(), &mut push);
    }
    for (name, m) in [
        ("omega_within", &params.omega_within),
        ("omega_between", &params.omega_between),
        ("delta_within", &params.delta_within),
        ("delta_between", &params.delta_between),
    ] {
        if m.dim() != (s, s) {
            push(
                ViolationKind::Shape,
                format!("{name} has shape {:?} (expected ({s}, {s}))", m.dim()),
            );
            continue;
        }
        for (r, row) in m.outer_iter().enumerate() {
            check_row(format!("{name} row {r}"), row.iter().copied(), &mut push);
        }
    }
    for (name, cpt) in [("psi", &params.psi), ("gamma_cpt", &params.gamma_cpt)] {
        if cpt.dim() != (s, s, g) {
            push(
                ViolationKind::Shape,
                format!(
                    "{name} has shape {:?} (expected ({s}, {s}, {g}))",
                    cpt.dim()
                ),
            );
            continue;
        }
        for i in 0..s {
            for j in 0..s {
                let row = (0..g).map(|k| cpt[[i, j, k]]);
                check_row(format!("{name} row ({i},{j})"), row, &mut push);
            }
        }
        let eg = expected_goals(cpt);
        for j in 0..s {
            for i in 1..s {
                if eg[[i, j]] < eg[[i - 1, j]] - MONOTONE_TOL {
                    push(
                        ViolationKind::Monotonicity,
                        format!(
                            "{name} expected goals decrease in offense at defense {j}: state {} -> {i} ({:.6} -> {:.6})",
                            i - 1,
                            eg[[i - 1, j]],
                            eg[[i, j]]
                        ),
                    );
                }
            }
        }
        for i in 0..s {
            for j in 1..s {
                if eg[[i, j]] > eg[[i, j - 1]] + MONOTONE_TOL {
                    push(
                        ViolationKind::Monotonicity,
                        format!(
                            "{name} expected goals increase in defense at offense {i}: state {} -> {j} ({:.6} -> {:.6})",
                            j - 1,
                            eg[[i, j - 1]],
                            eg[[i, j]]
                        ),
                    );
                }
            }
        }
    }
    out
}

fn check_row(
    label: String,
    row: impl Iterator<Item = f64>,
    push: &mut impl FnMut(ViolationKind, String),
) {
    let mut sum = 0.0;
    for (idx, x) in row.enumerate() {
        if !x.is_finite() {
            push(
                ViolationKind::NonFinite,
                format!("{label}: non-finite entry {x} at {idx}"),
            );
            return;
        }
        if x < 0.0 {
            push(
                ViolationKind::Negative,
                format!("{label}: negative entry {x} at {idx}"),
            );
        }
        sum += x;
    }
    if (sum - 1.0).abs() > SUM_TOL {
        push(ViolationKind::Sum, format!("{label} sums to {sum}"));
    }
}

/// Surface of expected goals `sum_g g * cpt[i][j][g]`.
pub fn expected_goals(cpt: &Array3<f64>) -> Array2<f64> {
    let (s1, s2, g) = cpt.dim();
    Array2::from_shape_fn((s1, s2), |(i, j)| {
        (0..g).map(|k| k as f64 * cpt[[i, j, k]]).sum()
    })
}

/// Expected state index rescaled onto 0..=100.
pub fn strength_expectation(dist: &[f64]) -> Result<f64> {
    let sum: f64 = dist.iter().sum();
    if dist.is_empty() || (sum - 1.0).abs() > 1e-6 || dist.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidInput(format!(
            "strength distribution must be normalized, sums to {sum}"
        )));
    }
    if dist.len() == 1 {
        return Ok(0.0);
    }
    let mean: f64 = dist.iter().enumerate().map(|(s, p)| s as f64 * p).sum();
    Ok(100.0 * mean / (dist.len() - 1) as f64)
}
