use chrono::NaiveDate;
use ndarray::{Array1, Array2, Array3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teamstrength::graph::{build_graph, run_bp, BpConfig};
use teamstrength::harness::instances::random_params;
use teamstrength::harness::{round_robin_skeleton, simulate};
use teamstrength::model::{Cardinalities, ModelParams, Role};
use teamstrength::predict::{goal_distribution, predict_match, predictive_state, scoreline, wdl};
use teamstrength::schedule::TeamId;
use teamstrength::train::{hyperparams_for, random_init};

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2005, 8, 13).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    let v = Array1::from_shape_fn(n, |_| rng.random_range(0.05..1.0));
    let z = v.sum();
    v / z
}

#[test]
fn predictive_state_matches_markov_arithmetic() {
    let card = Cardinalities::new(3, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let skel = round_robin_skeleton(4, 12, Some(5), start()).unwrap();
    let calendar = skel.calendar();
    let hyper = hyperparams_for(&skel, card, 10.0, 10.0).unwrap();
    for trial in 0..10 {
        let params = random_init(card, &hyper, &mut rng);
        let sim = simulate(&params, &skel, trial).unwrap();
        let cut = rng.random_range(2..8);
        let view = sim.schedule.truncated(cut);
        let post = run_bp(&build_graph(&view, card), &params, &BpConfig::default()).unwrap();
        let target = rng.random_range(cut..calendar.len());
        for team in 0..4 {
            for role in [Role::Offense, Role::Defense] {
                let got = predictive_state(TeamId(team), role, &post, &params, &calendar, target)
                    .unwrap();
                let chain = &post.chains[team];
                let last = *chain.weeks.last().unwrap();
                let mut v = chain.gamma(role).last().unwrap().to_vec();
                let (within, between) = match role {
                    Role::Offense => (&params.omega_within, &params.omega_between),
                    Role::Defense => (&params.delta_within, &params.delta_between),
                };
                for k in last + 1..=target {
                    let t = if calendar.seasons[k] != calendar.seasons[k - 1] {
                        between
                    } else {
                        within
                    };
                    v = (0..3)
                        .map(|b| (0..3).map(|a| v[a] * t[[a, b]]).sum())
                        .collect();
                }
                let z: f64 = v.iter().sum();
                for s in 0..3 {
                    assert!((got[s] - v[s] / z).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn predictive_state_identity_and_mixing() {
    let card = Cardinalities::new(2, 2).unwrap();
    let skel = round_robin_skeleton(2, 4, None, start()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let hyper = hyperparams_for(&skel, card, 10.0, 10.0).unwrap();
    let mut params = random_init(card, &hyper, &mut rng);
    let sim = simulate(&params, &skel, 0).unwrap();
    let view = sim.schedule.truncated(2);
    let calendar = skel.calendar();
    params.omega_within = Array2::eye(2);
    let post = run_bp(&build_graph(&view, card), &params, &BpConfig::default()).unwrap();
    let got = predictive_state(TeamId(0), Role::Offense, &post, &params, &calendar, 3).unwrap();
    assert_eq!(got, post.chains[0].offense[1]);
    params.omega_within = Array2::from_elem((2, 2), 0.5);
    let got = predictive_state(TeamId(0), Role::Offense, &post, &params, &calendar, 3).unwrap();
    assert!(got.iter().all(|&x| (x - 0.5).abs() < 1e-15));
    assert!(predictive_state(TeamId(5), Role::Offense, &post, &params, &calendar, 3).is_err());
}

#[test]
fn goal_distribution_matches_weighted_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cpt = Array3::from_shape_fn((2, 2, 2), |_| rng.random_range(0.1..1.0));
    let mut cpt = cpt;
    for i in 0..2 {
        for j in 0..2 {
            let z = cpt[[i, j, 0]] + cpt[[i, j, 1]];
            cpt[[i, j, 0]] /= z;
            cpt[[i, j, 1]] /= z;
        }
    }
    let (o, d) = ([0.7, 0.3], [0.1, 0.9]);
    let got = goal_distribution(&Array1::from(o.to_vec()), &Array1::from(d.to_vec()), &cpt);
    for g in 0..2 {
        let want = o[0] * d[0] * cpt[[0, 0, g]]
            + o[0] * d[1] * cpt[[0, 1, g]]
            + o[1] * d[0] * cpt[[1, 0, g]]
            + o[1] * d[1] * cpt[[1, 1, g]];
        assert!((got[g] - want).abs() < 1e-12);
    }
}

#[test]
fn scoreline_matches_monte_carlo() {
    let card = Cardinalities::new(3, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let params = random_params(&mut rng, card);
    let states: Vec<Array1<f64>> = (0..4).map(|_| random_vec(&mut rng, 3)).collect();
    let dist = scoreline(&states[0], &states[1], &states[2], &states[3], &params);
    assert!((dist.joint.sum() - 1.0).abs() < 1e-9);
    let pick = |v: &Array1<f64>| WeightedIndex::new(v.iter().copied()).unwrap();
    let samplers: Vec<_> = states.iter().map(pick).collect();
    let mut counts = Array2::<f64>::zeros((4, 4));
    let n = 1_000_000;
    for _ in 0..n {
        let (ho, hd, ao, ad) = (
            samplers[0].sample(&mut rng),
            samplers[1].sample(&mut rng),
            samplers[2].sample(&mut rng),
            samplers[3].sample(&mut rng),
        );
        let gh = pick(&params.psi.slice(ndarray::s![ho, ad, ..]).to_owned()).sample(&mut rng);
        let ga = pick(&params.gamma_cpt.slice(ndarray::s![ao, hd, ..]).to_owned()).sample(&mut rng);
        counts[[gh, ga]] += 1.0;
    }
    for ((h, a), &c) in counts.indexed_iter() {
        assert!((c / n as f64 - dist.joint[[h, a]]).abs() < 0.01);
    }
}

#[test]
fn symmetric_model_gives_transposed_scoreline() {
    let card = Cardinalities::new(2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut params = random_params(&mut rng, card);
    params.gamma_cpt = params.psi.clone();
    let (o, d) = (random_vec(&mut rng, 2), random_vec(&mut rng, 2));
    let dist = scoreline(&o, &d, &o, &d, &params);
    for h in 0..3 {
        for a in 0..3 {
            assert!((dist.joint[[h, a]] - dist.joint[[a, h]]).abs() < 1e-15);
        }
    }
    let t = wdl(&dist);
    assert!((t.home_win - t.away_win).abs() < 1e-12);
}

#[test]
fn deterministic_model_gives_point_mass() {
    let card = Cardinalities::new(2, 3).unwrap();
    let mut params = ModelParams::uniform(card);
    params.pi = Array1::from(vec![0.0, 1.0]);
    params.rho = Array1::from(vec![1.0, 0.0]);
    for m in [&mut params.omega_within, &mut params.delta_within] {
        *m = Array2::eye(2);
    }
    params.psi = Array3::zeros((2, 2, 3));
    params.gamma_cpt = Array3::zeros((2, 2, 3));
    for i in 0..2 {
        for j in 0..2 {
            params.psi[[i, j, 1 + i - i * j]] = 1.0;
            params.gamma_cpt[[i, j, i]] = 1.0;
        }
    }
    let skel = round_robin_skeleton(2, 3, None, start()).unwrap();
    let sim = simulate(&params, &skel, 4).unwrap();
    let view = sim.schedule.truncated(2);
    let post = run_bp(&build_graph(&view, card), &params, &BpConfig::default()).unwrap();
    let dist = predict_match(TeamId(0), TeamId(1), 2, &post, &params, &skel.calendar()).unwrap();
    // offense state 1 against defense state 0 scores two; the reverse scores one
    assert_eq!(dist.joint[[2, 1]], 1.0);
}

#[test]
fn timeline_skips_seasons_the_team_sat_out() {
    use teamstrength::ingest::{bucket_weeks, BucketOptions};
    use teamstrength::model::strength_expectation;
    use teamstrength::predict::timeline;
    use teamstrength::schedule::MatchRecord;

    // three seasons of two weeks; team 2 is missing from the middle one
    let mut records = Vec::new();
    for season in 0..3i64 {
        for week in 0..2i64 {
            let date = start() + chrono::Duration::days(season * 365 + week * 7);
            let home = if season == 1 { 4 } else { 2 };
            records.push(MatchRecord::new(date, TeamId(0), TeamId(1), 1, 0, 2).unwrap());
            records.push(
                MatchRecord::new(
                    date + chrono::Duration::days(1),
                    TeamId(home),
                    TeamId(3),
                    0,
                    2,
                    2,
                )
                .unwrap(),
            );
        }
    }
    let sched = bucket_weeks(records, &BucketOptions::default()).unwrap();
    assert_eq!(sched.num_weeks(), 6);
    assert_eq!(sched.presence(TeamId(2)), &[0, 1, 2, 4, 5]);

    let card = Cardinalities::new(3, 3).unwrap();
    let hyper = hyperparams_for(&sched, card, 10.0, 10.0).unwrap();
    let params = random_init(card, &hyper, &mut ChaCha8Rng::seed_from_u64(4));
    let post = run_bp(&build_graph(&sched, card), &params, &BpConfig::default()).unwrap();

    let gap = timeline(TeamId(2), Role::Defense, &post, &sched).unwrap();
    assert_eq!(
        gap.iter().map(|p| p.week).collect::<Vec<_>>(),
        vec![0, 1, 4, 5]
    );
    let full = timeline(TeamId(0), Role::Offense, &post, &sched).unwrap();
    assert_eq!(full.len(), 6);
    for p in gap.iter().chain(&full) {
        assert!((0.0..=100.0).contains(&p.strength));
        assert_eq!(p.date, sched.weeks()[p.week].start);
    }
    let g = post.gamma(TeamId(2), Role::Defense, 4).unwrap();
    assert_eq!(
        gap[2].strength,
        strength_expectation(g.as_slice().unwrap()).unwrap()
    );
    assert!(timeline(TeamId(7), Role::Offense, &post, &sched).is_err());
}
