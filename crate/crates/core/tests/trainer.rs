use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teamstrength::graph::{build_graph, run_bp, BpConfig};
use teamstrength::harness::instances::{random_forest_schedule, random_params};
use teamstrength::model::{Cardinalities, EdgeKind};
use teamstrength::train::{
    em_fit, emission_objective, hyperparams_for, m_step_emission_constrained, m_step_initial,
    m_step_transition, make_transition_alphas, monotonicity_violation, TrainConfig,
};

/// Exponentiated-gradient ascent of `sum w ln p` on the simplex.
fn mirror_ascent(w: &[f64]) -> Vec<f64> {
    let n = w.len();
    let mut p = vec![1.0 / n as f64; n];
    let total: f64 = w.iter().sum();
    let eta = 0.5 / total.max(1e-9);
    for _ in 0..200_000 {
        let mut next: Vec<f64> = p
            .iter()
            .zip(w)
            .map(|(p, w)| p * (eta * w / p).exp())
            .collect();
        let z: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= z);
        let delta: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        p = next;
        if delta < 1e-15 {
            break;
        }
    }
    p
}

#[test]
fn transition_update_matches_numeric_maximizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let s = rng.random_range(2..=4);
        let xi = Array2::from_shape_fn((s, s), |_| rng.random_range(0.0..5.0));
        let c = rng.random_range(0.5..20.0);
        let kind = if rng.random_bool(0.5) {
            EdgeKind::Within
        } else {
            EdgeKind::Between
        };
        let alpha = make_transition_alphas(s, c, kind);
        let out = m_step_transition(&xi, &alpha);
        for j in 0..s {
            let w: Vec<f64> = (0..s).map(|k| xi[[j, k]] + alpha[[j, k]] - 1.0).collect();
            let oracle = mirror_ascent(&w);
            for k in 0..s {
                assert!(
                    (out[[j, k]] - oracle[k]).abs() < 1e-6,
                    "row {j}: {} vs {}",
                    out[[j, k]],
                    oracle[k]
                );
            }
            assert!((out.row(j).sum() - 1.0).abs() <= 4.0 * f64::EPSILON);
        }
    }
}

#[test]
fn initial_update_matches_numeric_maximizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let card = Cardinalities::new(3, 2).unwrap();
    for _ in 0..20 {
        let schedule = random_forest_schedule(&mut rng, card, 3, 3, 6);
        let params = random_params(&mut rng, card);
        let post = run_bp(&build_graph(&schedule, card), &params, &BpConfig::default()).unwrap();
        let (pi, rho) = m_step_initial(&post);
        let mut w_pi = vec![0.0; 3];
        let mut w_rho = vec![0.0; 3];
        for c in post.chains.iter().filter(|c| !c.is_empty()) {
            for k in 0..3 {
                w_pi[k] += c.offense[0][k];
                w_rho[k] += c.defense[0][k];
            }
        }
        for (est, w) in [(&pi, w_pi), (&rho, w_rho)] {
            let oracle = mirror_ascent(&w);
            for k in 0..3 {
                assert!((est[k] - oracle[k]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn two_team_head_average() {
    use teamstrength::posterior::{ChainPosterior, Posterior};
    use teamstrength::schedule::TeamId;
    let chain = |t: usize, g: [f64; 2]| ChainPosterior {
        team: TeamId(t),
        weeks: vec![0],
        edge_kinds: vec![],
        plays: vec![true],
        offense: vec![Array1::from(g.to_vec())],
        defense: vec![Array1::from(vec![0.5, 0.5])],
        xi_offense: vec![],
        xi_defense: vec![],
    };
    let post = Posterior {
        num_states: 2,
        chains: vec![chain(0, [0.2, 0.8]), chain(1, [0.6, 0.4])],
        matches: vec![],
    };
    let (pi, _) = m_step_initial(&post);
    assert!((pi[0] - 0.4).abs() < 1e-15 && (pi[1] - 0.6).abs() < 1e-15);
}

/// Best objective over CPTs with every P(g = 1) on a 0.01 grid, subject to the
/// expected-goal orderings. With G = 2 the expected goals of a row is P(g = 1).
fn grid_oracle(counts: &Array3<f64>, prior: &Array1<f64>) -> f64 {
    let n = 101;
    let grid: Vec<f64> = (0..n).map(|k| k as f64 / 100.0).collect();
    let term = |w: f64, p: f64| {
        if w == 0.0 {
            0.0
        } else if p > 0.0 {
            w * p.ln()
        } else {
            f64::NEG_INFINITY
        }
    };
    let row_value = |i: usize, j: usize| -> Vec<f64> {
        let w0 = counts[[i, j, 0]] + prior[0] - 1.0;
        let w1 = counts[[i, j, 1]] + prior[1] - 1.0;
        grid.iter()
            .map(|&q| term(w0, 1.0 - q) + term(w1, q))
            .collect()
    };
    let (fa, fb, fc, fd) = (
        row_value(0, 0),
        row_value(0, 1),
        row_value(1, 0),
        row_value(1, 1),
    );
    // orderings: b <= a <= c and b <= d <= c
    let mut best = f64::NEG_INFINITY;
    for b in 0..n {
        for a in b..n {
            for c in a..n {
                let mut best_d = f64::NEG_INFINITY;
                for d in b..=c {
                    best_d = best_d.max(fd[d]);
                }
                best = best.max(fa[a] + fb[b] + fc[c] + best_d);
            }
        }
    }
    best
}

#[test]
fn constrained_emission_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let prior = Array1::from(vec![1.0, 1.0]);
    let mut constrained = 0;
    for _ in 0..12 {
        let counts = Array3::from_shape_fn((2, 2, 2), |_| rng.random_range(0.0..3.0));
        let out = m_step_emission_constrained(&counts, &prior, 1e-9).unwrap();
        assert!(monotonicity_violation(&out) <= 1e-9);
        let got = emission_objective(&counts, &prior, &out);
        let oracle = grid_oracle(&counts, &prior);
        assert!(
            (got - oracle).abs() <= 1e-3,
            "solver {got} vs grid {oracle}"
        );
        let free: f64 = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| {
                let z = counts[[i, j, 0]] + counts[[i, j, 1]];
                (0..2)
                    .map(|g| counts[[i, j, g]] * (counts[[i, j, g]] / z).ln())
                    .sum::<f64>()
            })
            .sum();
        if free > got + 1e-9 {
            constrained += 1;
        }
    }
    assert!(constrained > 0, "no instance exercised the constraints");
}

#[test]
fn constrained_emission_is_a_kkt_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for _ in 0..10 {
        let (s, g) = (3, 4);
        let counts = Array3::from_shape_fn((s, s, g), |_| rng.random_range(0.0..20.0));
        let prior = Array1::from_shape_fn(g, |_| rng.random_range(1.0..4.0));
        let out = m_step_emission_constrained(&counts, &prior, 1e-9).unwrap();
        assert!(monotonicity_violation(&out) <= 1e-9);
        let base = emission_objective(&counts, &prior, &out);
        // move 1e-4 of mass between two goal values of one row
        for i in 0..s {
            for j in 0..s {
                for from in 0..g {
                    for to in 0..g {
                        if from == to || out[[i, j, from]] < 1e-4 {
                            continue;
                        }
                        let mut p = out.clone();
                        p[[i, j, from]] -= 1e-4;
                        p[[i, j, to]] += 1e-4;
                        if monotonicity_violation(&p) > 1e-9 {
                            continue;
                        }
                        let v = emission_objective(&counts, &prior, &p);
                        assert!(
                            v <= base + 1e-9 * base.abs().max(1.0),
                            "perturbation improves {base} -> {v}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn em_fit_is_deterministic_and_valid() {
    let card = Cardinalities::new(2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let truth = {
        let mut p = random_params(&mut rng, card);
        p.psi = Array3::from_shape_fn((2, 2, 3), |(i, j, g)| {
            [[0.5, 0.3, 0.2], [0.3, 0.4, 0.3], [0.2, 0.3, 0.5]][1 + i - j][g]
        });
        p.gamma_cpt = p.psi.clone();
        p
    };
    let skel = teamstrength::harness::round_robin_skeleton(
        4,
        12,
        Some(6),
        chrono::NaiveDate::from_ymd_opt(2001, 8, 1).unwrap(),
    )
    .unwrap();
    let sim = teamstrength::harness::simulate(&truth, &skel, 5).unwrap();
    let hyper = hyperparams_for(&sim.schedule, card, 10.0, 10.0).unwrap();
    let config = TrainConfig {
        max_iterations: 15,
        restarts: 3,
        seed: 11,
        ..Default::default()
    };
    let a = em_fit(&sim.schedule, card, &hyper, &config).unwrap();
    let b = em_fit(&sim.schedule, card, &hyper, &config).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.trace.objectives.len(), 3);
    let best = a
        .trace
        .final_objectives
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.trace.final_objectives[a.trace.selected], best);
    assert!(teamstrength::model::validate_params(&a.params).is_empty());
}

#[test]
fn single_state_restarts_agree() {
    let card = Cardinalities::new(1, 3).unwrap();
    let skel = teamstrength::harness::round_robin_skeleton(
        4,
        6,
        None,
        chrono::NaiveDate::from_ymd_opt(2001, 8, 1).unwrap(),
    )
    .unwrap();
    let truth = teamstrength::model::ModelParams::uniform(card);
    let sim = teamstrength::harness::simulate(&truth, &skel, 2).unwrap();
    let hyper = hyperparams_for(&sim.schedule, card, 5.0, 5.0).unwrap();
    let fit = em_fit(
        &sim.schedule,
        card,
        &hyper,
        &TrainConfig {
            restarts: 4,
            seed: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let f = &fit.trace.final_objectives;
    assert!(f.iter().all(|v| (v - f[0]).abs() < 1e-9), "{f:?}");
}
