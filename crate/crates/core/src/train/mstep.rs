//! Closed-form M-step updates and sufficient-statistic accumulation.

use ndarray::{Array1, Array2, Array3, Axis};

use crate::model::{EdgeKind, Role};
use crate::posterior::Posterior;

/// Expected counts gathered from one E step.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub head_offense: Array1<f64>,
    pub head_defense: Array1<f64>,
    /// `[role][kind]` summed pairwise marginals; role 0 is offense, kind 0 within-season.
    pub xi: [[Array2<f64>; 2]; 2],
    /// `[i][j][g]` expected home-goal counts over (home offense, away defense).
    pub psi_counts: Array3<f64>,
    pub gamma_counts: Array3<f64>,
}

impl SufficientStats {
    pub fn from_posterior(posterior: &Posterior, num_goal_states: usize) -> Self {
        let s = posterior.num_states;
        let zero2 = || Array2::<f64>::zeros((s, s));
        let mut st = Self {
            head_offense: Array1::zeros(s),
            head_defense: Array1::zeros(s),
            xi: [[zero2(), zero2()], [zero2(), zero2()]],
            psi_counts: Array3::zeros((s, s, num_goal_states)),
            gamma_counts: Array3::zeros((s, s, num_goal_states)),
        };
        for c in &posterior.chains {
            if c.is_empty() {
                continue;
            }
            st.head_offense += &c.offense[0];
            st.head_defense += &c.defense[0];
            for (r, role) in [Role::Offense, Role::Defense].into_iter().enumerate() {
                for (x, &kind) in c.xi(role).iter().zip(&c.edge_kinds) {
                    let k = usize::from(kind == EdgeKind::Between);
                    st.xi[r][k] += x;
                }
            }
        }
        for m in &posterior.matches {
            let mut slot = st.psi_counts.index_axis_mut(Axis(2), m.home_goals);
            slot += &m.zeta_home;
            let mut slot = st.gamma_counts.index_axis_mut(Axis(2), m.away_goals);
            slot += &m.zeta_away;
        }
        st
    }

    pub fn xi_sums(&self, role: Role, kind: EdgeKind) -> &Array2<f64> {
        let r = usize::from(role == Role::Defense);
        let k = usize::from(kind == EdgeKind::Between);
        &self.xi[r][k]
    }
}

fn normalized_or_uniform(v: &Array1<f64>) -> Array1<f64> {
    let sum = v.sum();
    if sum > 0.0 {
        v / sum
    } else {
        Array1::from_elem(v.len(), 1.0 / v.len() as f64)
    }
}

/// Initial-state distributions: normalized chain-head marginals summed over teams.
pub fn m_step_initial(posterior: &Posterior) -> (Array1<f64>, Array1<f64>) {
    let s = posterior.num_states;
    let mut pi = Array1::zeros(s);
    let mut rho = Array1::zeros(s);
    for c in posterior.chains.iter().filter(|c| !c.is_empty()) {
        pi += &c.offense[0];
        rho += &c.defense[0];
    }
    (normalized_or_uniform(&pi), normalized_or_uniform(&rho))
}

/// Row-wise MAP transition update `(alpha - 1 + xi) / sum`. A row with no
/// counts and no pseudocounts becomes uniform.
pub fn m_step_transition(xi_sums: &Array2<f64>, alpha: &Array2<f64>) -> Array2<f64> {
    let s = xi_sums.nrows();
    let mut out = alpha - 1.0 + xi_sums;
    for (j, mut row) in out.rows_mut().into_iter().enumerate() {
        let z = row.sum();
        if z > 0.0 {
            row /= z;
        } else {
            log::warn!("transition row {j} has no counts or pseudocounts; set to uniform");
            row.fill(1.0 / s as f64);
        }
    }
    out
}
