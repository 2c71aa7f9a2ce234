//! Local sum-product computations on single factors and nodes.

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};

/// Scales `v` to unit sum. Returns the pre-normalization sum; zero or
/// non-finite sums leave `v` untouched.
pub(crate) fn normalize(v: &mut [f64]) -> f64 {
    let sum: f64 = v.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        let inv = 1.0 / sum;
        v.iter_mut().for_each(|x| *x *= inv);
    }
    sum
}

pub(crate) fn check_sum(sum: f64, what: impl FnOnce() -> String) -> Result<()> {
    if !sum.is_finite() {
        Err(Error::NonFinite(what()))
    } else if sum <= 0.0 {
        Err(Error::ContradictoryEvidence(what()))
    } else {
        Ok(())
    }
}

fn check_goal(cpt: &Array3<f64>, g: usize) -> Result<()> {
    if g >= cpt.dim().2 {
        return Err(Error::InvalidInput(format!(
            "observed goal value {g} outside 0..{}",
            cpt.dim().2
        )));
    }
    Ok(())
}

fn check_len(v: &[f64], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::InvalidInput(format!(
            "{what} has length {} (expected {n})",
            v.len()
        )));
    }
    Ok(())
}

/// Message from an emission factor to its offense node: `out[i] ~ sum_j d[j] cpt[i][j][g]`.
pub fn emission_message_to_offense(
    cpt: &Array3<f64>,
    defense_msg: &[f64],
    observed_g: usize,
) -> Result<Array1<f64>> {
    check_goal(cpt, observed_g)?;
    let (s_off, s_def, _) = cpt.dim();
    check_len(defense_msg, s_def, "defense message")?;
    let mut out: Vec<f64> = (0..s_off)
        .map(|i| {
            (0..s_def)
                .map(|j| defense_msg[j] * cpt[[i, j, observed_g]])
                .sum()
        })
        .collect();
    check_sum(normalize(&mut out), || "emission message to offense".into())?;
    Ok(Array1::from(out))
}

/// Message from an emission factor to its defense node: `out[j] ~ sum_i o[i] cpt[i][j][g]`.
pub fn emission_message_to_defense(
    cpt: &Array3<f64>,
    offense_msg: &[f64],
    observed_g: usize,
) -> Result<Array1<f64>> {
    check_goal(cpt, observed_g)?;
    let (s_off, s_def, _) = cpt.dim();
    check_len(offense_msg, s_off, "offense message")?;
    let mut out: Vec<f64> = (0..s_def)
        .map(|j| {
            (0..s_off)
                .map(|i| offense_msg[i] * cpt[[i, j, observed_g]])
                .sum()
        })
        .collect();
    check_sum(normalize(&mut out), || "emission message to defense".into())?;
    Ok(Array1::from(out))
}

/// Element-wise product of incoming messages, rescaled to unit sum.
pub fn node_marginal(incoming: &[&[f64]]) -> Result<Array1<f64>> {
    let first = incoming
        .first()
        .ok_or_else(|| Error::InvalidInput("node marginal needs at least one message".into()))?;
    let mut out = first.to_vec();
    for m in &incoming[1..] {
        check_len(m, out.len(), "incoming message")?;
        out.iter_mut().zip(m.iter()).for_each(|(o, x)| *o *= x);
    }
    check_sum(normalize(&mut out), || "node marginal".into())?;
    Ok(Array1::from(out))
}

/// Joint of two chain neighbours: `out[i][j] ~ left[i] T[i][j] right[j]`.
pub fn pairwise_marginal(
    left: &[f64],
    right: &[f64],
    transition: &Array2<f64>,
) -> Result<Array2<f64>> {
    let (s1, s2) = transition.dim();
    check_len(left, s1, "left message")?;
    check_len(right, s2, "right message")?;
    let mut out = Array2::from_shape_fn((s1, s2), |(i, j)| left[i] * transition[[i, j]] * right[j]);
    let sum = out.sum();
    check_sum(sum, || "pairwise marginal".into())?;
    out /= sum;
    Ok(out)
}

/// Joint of the offense and defense feeding one emission factor, given cavity messages.
pub fn match_pair_marginal(
    offense_msg: &[f64],
    defense_msg: &[f64],
    cpt: &Array3<f64>,
    observed_g: usize,
) -> Result<Array2<f64>> {
    check_goal(cpt, observed_g)?;
    let (s_off, s_def, _) = cpt.dim();
    check_len(offense_msg, s_off, "offense message")?;
    check_len(defense_msg, s_def, "defense message")?;
    let mut out = Array2::from_shape_fn((s_off, s_def), |(i, j)| {
        offense_msg[i] * defense_msg[j] * cpt[[i, j, observed_g]]
    });
    let sum = out.sum();
    check_sum(sum, || "match pair marginal".into())?;
    out /= sum;
    Ok(out)
}
