//! Comparison policies: greedy ratio maximization, Robbins-Monro with a
//! vanishing stepsize, and drift-plus-penalty with a running-ratio estimate.

use serde::{Deserialize, Serialize};

use crate::controller::Decision;
use crate::error::{Error, Result};
use crate::model::{dot, TaskMatrix, TaskRow};

/// Index of the first row attaining the maximum score.
fn first_argmax(scores: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Row maximizing `R / T` among rows accepted by `filter`.
pub fn greedy_step(a: &TaskMatrix, filter: Option<&dyn Fn(&TaskRow) -> bool>) -> Result<Decision> {
    let scores = a
        .rows()
        .iter()
        .enumerate()
        .filter(|(_, r)| filter.map_or(true, |f| f(r)))
        .map(|(i, r)| (i, r.reward / r.duration));
    let i = first_argmax(scores).ok_or(Error::NoFeasibleRow)?;
    Ok(Decision::from_row(a, i))
}

/// Filter keeping rows whose penalties are all nonpositive; for System 2
/// this is `energy / T <= p_av`.
pub fn nonpositive_penalties(row: &TaskRow) -> bool {
    row.penalties.iter().all(|&y| y <= 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmState {
    /// Running estimate of the optimal reward per unit time.
    pub theta: f64,
    /// Index of the next task.
    pub k: u64,
}

impl Default for RmState {
    fn default() -> Self {
        Self { theta: 0.0, k: 1 }
    }
}

/// Picks the row maximizing `R - theta T`, then moves `theta` by
/// `(R - theta T) / (k + 1)`.
pub fn robbins_monro_step(state: &RmState, a: &TaskMatrix) -> Result<(Decision, RmState)> {
    if a.n() > 0 {
        return Err(Error::Unsupported(
            "Robbins-Monro baseline handles no penalty processes".into(),
        ));
    }
    let theta = state.theta;
    let scores = a
        .rows()
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.reward - theta * r.duration));
    let dec = Decision::from_row(a, first_argmax(scores).ok_or(Error::EmptyMatrix)?);
    let step = 1.0 / (state.k as f64 + 1.0);
    let next = RmState {
        theta: theta + step * (dec.r - theta * dec.t),
        k: state.k + 1,
    };
    Ok((dec, next))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DppState {
    /// Uncapped penalty queues.
    pub q: Vec<f64>,
    pub cum_r: f64,
    pub cum_t: f64,
    /// Index of the next task.
    pub k: u64,
}

impl DppState {
    pub fn new(n: usize) -> Self {
        Self {
            q: vec![0.0; n],
            cum_r: 0.0,
            cum_t: 0.0,
            k: 1,
        }
    }

    /// Running ratio of all rewards to all durations so far (0 before any task).
    pub fn theta(&self) -> f64 {
        if self.k > 1 {
            self.cum_r / self.cum_t
        } else {
            0.0
        }
    }
}

/// Minimizes `-v (R - theta T) + Q.Y` with `theta` the running ratio, then
/// applies `Q_i <- max(0, Q_i + Y_i)`.
pub fn dpp_ratio_step(state: &DppState, a: &TaskMatrix, v: f64) -> Result<(Decision, DppState)> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidParams(format!("v must be positive, got {v}")));
    }
    if a.n() != state.q.len() {
        return Err(Error::DimensionMismatch {
            expected: state.q.len(),
            found: a.n(),
        });
    }
    let theta = state.theta();
    let scores = a.rows().iter().enumerate().map(|(i, r)| {
        let cost = -v * (r.reward - theta * r.duration) + dot(&state.q, &r.penalties);
        (i, -cost)
    });
    let dec = Decision::from_row(a, first_argmax(scores).ok_or(Error::EmptyMatrix)?);
    let next = DppState {
        q: state.q.iter().zip(&dec.y).map(|(q, y)| (q + y).max(0.0)).collect(),
        cum_r: state.cum_r + dec.r,
        cum_t: state.cum_t + dec.t,
        k: state.k + 1,
    };
    Ok((dec, next))
}
