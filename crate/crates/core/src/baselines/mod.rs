//! Reference forecasters: Elo, constant frequencies and bookmaker odds.

mod elo;
mod naive;

pub use elo::{
    elo_expected, elo_fit, elo_predict, elo_update, ordered_logistic, EloFile, EloGrid, EloModel,
    INITIAL_RATING,
};
pub use naive::{naive_fit, naive_predict};

use crate::error::Result;
use crate::model::PredictionTriple;
use crate::schedule::MatchRecord;

/// Bookmaker forecast from the match's decimal odds, if it has any.
pub fn bookmaker_predict(m: &MatchRecord) -> Result<Option<PredictionTriple>> {
    m.odds
        .as_ref()
        .map(crate::ingest::implied_probabilities)
        .transpose()
}
