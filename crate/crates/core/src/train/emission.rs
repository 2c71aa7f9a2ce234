//! Emission CPT update under expected-goal monotonicity.
//!
//! Maximizes `sum W[i][j][g] ln p[i][j][g]` with `W = counts + dirichlet - 1`
//! over CPTs whose expected goals are non-decreasing in the offense state and
//! non-increasing in the defense state. When the analytic optimum already
//! satisfies the ordering it is returned as is; otherwise a primal log-barrier
//! Newton method runs from a strictly feasible start.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array3};

use crate::error::{Error, Result};
use crate::model::expected_goals;

/// Weight given to goal values with no counts and no pseudocounts, so a value
/// unseen in training keeps a tiny positive probability instead of making
/// later evidence impossible.
pub const EMISSION_WEIGHT_FLOOR: f64 = 1e-9;

/// Objective `sum W ln p` with `0 ln 0 = 0`.
pub fn emission_objective(counts: &Array3<f64>, dirichlet: &Array1<f64>, cpt: &Array3<f64>) -> f64 {
    let mut total = 0.0;
    for ((idx, &c), &p) in counts.indexed_iter().zip(cpt.iter()) {
        let w = c + dirichlet[idx.2] - 1.0;
        if w > 0.0 {
            total += if p > 0.0 {
                w * p.ln()
            } else {
                f64::NEG_INFINITY
            };
        }
    }
    total
}

/// Largest violation of the two orderings (0 when monotone).
pub fn monotonicity_violation(cpt: &Array3<f64>) -> f64 {
    let e = expected_goals(cpt);
    let s = e.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..s {
        for j in 0..s {
            if i + 1 < s {
                worst = worst.max(e[[i, j]] - e[[i + 1, j]]);
            }
            if j + 1 < s {
                worst = worst.max(e[[i, j + 1]] - e[[i, j]]);
            }
        }
    }
    worst
}

fn analytic(w: &[f64], rows: usize, g: usize) -> Vec<f64> {
    let mut p = w.to_vec();
    for r in 0..rows {
        let row = &mut p[r * g..(r + 1) * g];
        let z: f64 = row.iter().sum();
        if z > 0.0 {
            row.iter_mut().for_each(|x| *x /= z);
        } else {
            row.iter_mut().for_each(|x| *x = 1.0 / g as f64);
        }
    }
    p
}

/// Solver settings; `max_newton_steps` bounds the total work across barrier rounds.
#[derive(Debug, Clone, Copy)]
pub struct EmissionSolverConfig {
    pub tol: f64,
    pub max_newton_steps: usize,
}

impl Default for EmissionSolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_newton_steps: 500,
        }
    }
}

/// Constrained update with default solver effort.
pub fn m_step_emission_constrained(
    counts: &Array3<f64>,
    dirichlet: &Array1<f64>,
    tol: f64,
) -> Result<Array3<f64>> {
    solve_emission(
        counts,
        dirichlet,
        EmissionSolverConfig {
            tol,
            ..Default::default()
        },
        None,
    )
}

/// Constrained update. `previous` seeds the interior start when it is feasible.
pub fn solve_emission(
    counts: &Array3<f64>,
    dirichlet: &Array1<f64>,
    config: EmissionSolverConfig,
    previous: Option<&Array3<f64>>,
) -> Result<Array3<f64>> {
    let (s, s2, g) = counts.dim();
    if s != s2 || dirichlet.len() != g {
        return Err(Error::InvalidInput(
            "emission counts and prior have inconsistent shapes".into(),
        ));
    }
    if counts.iter().any(|&c| !(c >= 0.0 && c.is_finite()))
        || dirichlet.iter().any(|&a| !(a >= 1.0))
    {
        return Err(Error::InvalidInput(
            "emission counts must be non-negative and priors >= 1".into(),
        ));
    }
    let w: Vec<f64> = counts
        .indexed_iter()
        .map(|(idx, &c)| (c + dirichlet[idx.2] - 1.0).max(EMISSION_WEIGHT_FLOOR))
        .collect();
    let rows = s * s;
    let to_cpt = |p: Vec<f64>| Array3::from_shape_vec((s, s, g), p).expect("shape");
    let free = to_cpt(analytic(&w, rows, g));
    if monotonicity_violation(&free) <= config.tol {
        return Ok(free);
    }
    let problem = Barrier::new(s, g, w);
    let start = problem.start(previous);
    let p = problem.solve(start, config.max_newton_steps);
    let mut cpt = to_cpt(p);
    for mut row in cpt.lanes_mut(ndarray::Axis(2)) {
        let z = row.sum();
        row /= z;
    }
    Ok(cpt)
}

struct Barrier {
    s: usize,
    g: usize,
    w: Vec<f64>,
    /// Ordered pairs `(hi, lo)` of row indices requiring `E[hi] >= E[lo]`.
    cons: Vec<(usize, usize)>,
}

impl Barrier {
    fn new(s: usize, g: usize, w: Vec<f64>) -> Self {
        let row = |i: usize, j: usize| i * s + j;
        let mut cons = Vec::new();
        for i in 0..s {
            for j in 0..s {
                if i + 1 < s {
                    cons.push((row(i + 1, j), row(i, j)));
                }
                if j + 1 < s {
                    cons.push((row(i, j), row(i, j + 1)));
                }
            }
        }
        Self { s, g, w, cons }
    }

    fn n(&self) -> usize {
        self.s * self.s * self.g
    }

    fn expected(&self, p: &[f64], r: usize) -> f64 {
        p[r * self.g..(r + 1) * self.g]
            .iter()
            .enumerate()
            .map(|(k, x)| k as f64 * x)
            .sum()
    }

    fn margins(&self, p: &[f64]) -> Vec<f64> {
        self.cons
            .iter()
            .map(|&(hi, lo)| self.expected(p, hi) - self.expected(p, lo))
            .collect()
    }

    fn strictly_feasible(&self, p: &[f64]) -> bool {
        p.iter().all(|&x| x > 0.0) && self.margins(p).iter().all(|&m| m > 0.0)
    }

    /// Rows tilted toward high goals by `0.1 * (i - j)`: strictly ordered and positive.
    fn tilted(&self) -> Vec<f64> {
        let (s, g) = (self.s, self.g);
        let mut p = vec![0.0; self.n()];
        for i in 0..s {
            for j in 0..s {
                let t = 0.1 * (i as f64 - j as f64);
                let row = &mut p[(i * s + j) * g..(i * s + j + 1) * g];
                for (k, x) in row.iter_mut().enumerate() {
                    *x = (t * k as f64).exp();
                }
                let z: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= z);
            }
        }
        p
    }

    fn start(&self, previous: Option<&Array3<f64>>) -> Vec<f64> {
        let q = self.tilted();
        if let Some(prev) = previous.filter(|p| p.len() == self.n()) {
            let blend: Vec<f64> = prev
                .iter()
                .zip(&q)
                .map(|(a, b)| 0.5 * a + 0.5 * b)
                .collect();
            if self.strictly_feasible(&blend) {
                return blend;
            }
        }
        q
    }

    fn value(&self, p: &[f64], mu: f64) -> f64 {
        let mut v = 0.0;
        for (&w, &x) in self.w.iter().zip(p) {
            v += (w + mu) * x.ln();
        }
        for m in self.margins(p) {
            v += mu * m.ln();
        }
        v
    }

    /// One Newton direction on the equality-constrained barrier problem.
    fn direction(&self, p: &[f64], mu: f64) -> Option<(Vec<f64>, f64)> {
        let n = self.n();
        let rows = self.s * self.s;
        let g = self.g;
        let margins = self.margins(p);
        let mut grad: Vec<f64> = self.w.iter().zip(p).map(|(&w, &x)| (w + mu) / x).collect();
        let mut kkt = DMatrix::<f64>::zeros(n + rows, n + rows);
        for (v, (&w, &x)) in self.w.iter().zip(p).enumerate() {
            kkt[(v, v)] = -(w + mu) / (x * x);
        }
        for (&(hi, lo), &m) in self.cons.iter().zip(&margins) {
            let coef: Vec<(usize, f64)> = (0..g)
                .flat_map(|k| [(hi * g + k, k as f64), (lo * g + k, -(k as f64))])
                .filter(|&(_, a)| a != 0.0)
                .collect();
            for &(u, a) in &coef {
                grad[u] += mu * a / m;
                for &(v, b) in &coef {
                    kkt[(u, v)] -= mu * a * b / (m * m);
                }
            }
        }
        for r in 0..rows {
            for k in 0..g {
                kkt[(n + r, r * g + k)] = 1.0;
                kkt[(r * g + k, n + r)] = 1.0;
            }
        }
        let mut rhs = DVector::<f64>::zeros(n + rows);
        for (v, gv) in grad.iter().enumerate() {
            rhs[v] = -gv;
        }
        // stationarity of the quadratic model: H dx + A' nu = -grad, A dx = 0
        let sol = kkt.lu().solve(&rhs)?;
        let dx: Vec<f64> = (0..n).map(|v| sol[v]).collect();
        let slope: f64 = dx.iter().zip(&grad).map(|(d, gr)| d * gr).sum();
        Some((dx, slope))
    }

    fn solve(&self, mut p: Vec<f64>, max_steps: usize) -> Vec<f64> {
        let scale: f64 = self.w.iter().sum::<f64>().max(1.0);
        let mut mu = scale / self.n() as f64;
        let mu_final = 1e-12 * scale;
        let mut steps = 0;
        loop {
            // centering
            while steps < max_steps {
                steps += 1;
                let Some((dx, slope)) = self.direction(&p, mu) else {
                    break;
                };
                if !(slope.is_finite()) || slope <= 1e-14 * scale {
                    break;
                }
                let f0 = self.value(&p, mu);
                let mut t = 1.0;
                let mut moved = false;
                while t > 1e-12 {
                    let cand: Vec<f64> = p.iter().zip(&dx).map(|(x, d)| x + t * d).collect();
                    if self.strictly_feasible(&cand)
                        && self.value(&cand, mu) >= f0 + 0.25 * t * slope
                    {
                        p = cand;
                        moved = true;
                        break;
                    }
                    t *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            if mu <= mu_final || steps >= max_steps {
                break;
            }
            mu = (mu * 0.1).max(mu_final);
        }
        p
    }
}
