//! Training objective evaluated on a set of marginals.

use ndarray::{Array1, Array2, Array3};

use crate::model::{EdgeKind, Hyperparams, ModelParams, Role};
use crate::posterior::Posterior;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPosterior {
    pub value: f64,
    /// Terms where a zero probability carried positive weight.
    pub non_finite_terms: usize,
}

impl LogPosterior {
    pub fn is_finite(&self) -> bool {
        self.non_finite_terms == 0 && self.value.is_finite()
    }
}

#[derive(Default)]
struct Acc {
    value: f64,
    bad: usize,
}

impl Acc {
    /// Adds `w ln p`, with `0 ln 0 = 0`.
    fn add(&mut self, w: f64, p: f64) {
        if w == 0.0 {
            return;
        }
        if p > 0.0 {
            self.value += w * p.ln();
        } else {
            self.value = f64::NEG_INFINITY;
            self.bad += 1;
        }
    }

    fn add_vec(&mut self, w: &Array1<f64>, p: &Array1<f64>) {
        w.iter().zip(p).for_each(|(&w, &p)| self.add(w, p));
    }

    fn add_mat(&mut self, w: &Array2<f64>, p: &Array2<f64>) {
        w.iter().zip(p).for_each(|(&w, &p)| self.add(w, p));
    }

    fn add_dirichlet_rows(&mut self, alpha: &Array2<f64>, p: &Array2<f64>) {
        alpha
            .iter()
            .zip(p)
            .for_each(|(&a, &p)| self.add(a - 1.0, p));
    }

    fn add_dirichlet_cpt(&mut self, alpha: &Array1<f64>, cpt: &Array3<f64>) {
        for row in cpt.lanes(ndarray::Axis(2)) {
            row.iter()
                .zip(alpha)
                .for_each(|(&p, &a)| self.add(a - 1.0, p));
        }
    }
}

/// Expected complete-data log posterior, up to the normalizing constant of
/// the priors: initial-state, transition and emission terms weighted by their
/// marginals, plus the Dirichlet log densities of the parameters.
pub fn joint_log_posterior(
    params: &ModelParams,
    hyper: &Hyperparams,
    posterior: &Posterior,
) -> LogPosterior {
    let mut acc = Acc::default();
    for c in &posterior.chains {
        if c.is_empty() {
            continue;
        }
        for role in [Role::Offense, Role::Defense] {
            acc.add_vec(&c.gamma(role)[0], params.initial(role));
            for (xi, &kind) in c.xi(role).iter().zip(&c.edge_kinds) {
                acc.add_mat(xi, params.transition(role, kind));
            }
        }
    }
    for m in &posterior.matches {
        let psi = params.psi.index_axis(ndarray::Axis(2), m.home_goals);
        let gam = params.gamma_cpt.index_axis(ndarray::Axis(2), m.away_goals);
        m.zeta_home
            .iter()
            .zip(psi)
            .for_each(|(&w, &p)| acc.add(w, p));
        m.zeta_away
            .iter()
            .zip(gam)
            .for_each(|(&w, &p)| acc.add(w, p));
    }
    for role in [Role::Offense, Role::Defense] {
        acc.add_dirichlet_rows(
            &hyper.alpha_within,
            params.transition(role, EdgeKind::Within),
        );
        acc.add_dirichlet_rows(
            &hyper.alpha_between,
            params.transition(role, EdgeKind::Between),
        );
    }
    acc.add_dirichlet_cpt(&hyper.beta, &params.psi);
    acc.add_dirichlet_cpt(&hyper.phi, &params.gamma_cpt);
    LogPosterior {
        value: acc.value,
        non_finite_terms: acc.bad,
    }
}

fn entropy<'a>(xs: impl IntoIterator<Item = &'a f64>) -> f64 {
    xs.into_iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum()
}

/// Bethe entropy of the marginals: factor entropies minus over-counted node
/// entropies. Exact on forests.
pub fn bethe_entropy(posterior: &Posterior) -> f64 {
    let mut h = 0.0;
    for c in &posterior.chains {
        let n = c.weeks.len();
        for role in [Role::Offense, Role::Defense] {
            h += c.xi(role).iter().map(entropy).sum::<f64>();
            for (p, g) in c.gamma(role).iter().enumerate() {
                let degree = usize::from(p > 0) + usize::from(p + 1 < n) + usize::from(c.plays[p]);
                h -= (degree as f64 - 1.0) * entropy(g);
            }
        }
    }
    for m in &posterior.matches {
        h += entropy(&m.zeta_home) + entropy(&m.zeta_away);
    }
    h
}

/// `joint_log_posterior` plus the Bethe entropy. On forests this equals the
/// log posterior of the parameters given the data, up to a constant, so EM
/// never decreases it there.
pub fn log_posterior(
    params: &ModelParams,
    hyper: &Hyperparams,
    posterior: &Posterior,
) -> LogPosterior {
    let mut lp = joint_log_posterior(params, hyper, posterior);
    lp.value += bethe_entropy(posterior);
    lp
}
