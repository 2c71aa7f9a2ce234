//! Constant outcome frequencies.

use crate::error::{Error, Result};
use crate::model::{Outcome, PredictionTriple};
use crate::schedule::MatchRecord;

/// Empirical (home win, draw, away win) frequencies.
pub fn naive_fit(train: &[MatchRecord]) -> Result<PredictionTriple> {
    if train.is_empty() {
        return Err(Error::InvalidInput(
            "cannot fit outcome frequencies on no matches".into(),
        ));
    }
    let mut counts = [0usize; 3];
    for m in train {
        counts[match m.outcome() {
            Outcome::HomeWin => 0,
            Outcome::Draw => 1,
            Outcome::AwayWin => 2,
        }] += 1;
    }
    let n = train.len() as f64;
    Ok(PredictionTriple::new(
        counts[0] as f64 / n,
        counts[1] as f64 / n,
        counts[2] as f64 / n,
    ))
}

pub fn naive_predict(model: &PredictionTriple) -> PredictionTriple {
    *model
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::TeamId;
    use chrono::NaiveDate;

    fn game(gh: u32, ga: u32) -> MatchRecord {
        MatchRecord::new(
            NaiveDate::from_ymd_opt(2010, 1, 1).unwrap(),
            TeamId(0),
            TeamId(1),
            gh,
            ga,
            4,
        )
        .unwrap()
    }

    #[test]
    fn counts_outcomes() {
        let t = naive_fit(&[game(2, 0), game(1, 0), game(1, 1), game(0, 3)]).unwrap();
        assert_eq!(t, PredictionTriple::new(0.5, 0.25, 0.25));
        assert_eq!(
            naive_fit(&[game(0, 0), game(2, 2)]).unwrap(),
            PredictionTriple::new(0.0, 1.0, 0.0)
        );
        assert!(naive_fit(&[]).is_err());
    }

    #[test]
    fn frequencies_beat_any_grid_triple() {
        let games = [
            game(2, 0),
            game(1, 0),
            game(1, 1),
            game(0, 3),
            game(4, 1),
            game(0, 0),
            game(1, 2),
        ];
        let t = naive_fit(&games).unwrap();
        let ll = |p: &PredictionTriple| {
            games
                .iter()
                .map(|m| p.probability_of(m.outcome()).ln())
                .sum::<f64>()
        };
        let best = ll(&t);
        for a in 1..1000 {
            for b in 1..(1000 - a) {
                let p = PredictionTriple::new(
                    a as f64 / 1000.0,
                    b as f64 / 1000.0,
                    (1000 - a - b) as f64 / 1000.0,
                );
                assert!(ll(&p) <= best + 1e-12);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn fitted_triple_is_a_distribution(goals in proptest::collection::vec((0u32..6, 0u32..6), 1..60)) {
            let games: Vec<MatchRecord> = goals.iter().map(|&(h, a)| game(h, a)).collect();
            let t = naive_fit(&games).unwrap();
            proptest::prop_assert!((t.sum() - 1.0).abs() < 1e-12);
            let draws = goals.iter().filter(|(h, a)| h == a).count();
            proptest::prop_assert_eq!(t.draw, draws as f64 / goals.len() as f64);
            proptest::prop_assert_eq!(naive_predict(&t), t);
        }
    }
}
