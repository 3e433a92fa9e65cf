//! Task matrices, boundedness data and controller knobs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack accepted when checking a row against its bounds.
///
/// Generators compute penalties such as `energy - p_av * duration` in floating
/// point, which can land one ulp past an endpoint derived in exact arithmetic.
pub const BOUND_SLACK: f64 = 1e-12;

/// Projection of `z` onto `[lo, hi]`.
///
/// Panics when `lo > hi` (or either bound is NaN).
pub fn clamp(z: f64, lo: f64, hi: f64) -> f64 {
    assert!(lo <= hi, "clamp called with empty interval [{lo}, {hi}]");
    hi.min(lo.max(z))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt().abs()
}

/// One processing option: `(duration, reward, penalties)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub duration: f64,
    pub reward: f64,
    pub penalties: Vec<f64>,
}

impl TaskRow {
    pub fn new(duration: f64, reward: f64, penalties: Vec<f64>) -> Self {
        Self {
            duration,
            reward,
            penalties,
        }
    }

    /// A row without penalty processes.
    pub fn plain(duration: f64, reward: f64) -> Self {
        Self::new(duration, reward, Vec::new())
    }

    fn violation(&self, bounds: &Bounds) -> Option<String> {
        let s = BOUND_SLACK;
        if !(self.duration.is_finite() && self.reward.is_finite())
            || self.penalties.iter().any(|y| !y.is_finite())
        {
            return Some("non-finite entry".into());
        }
        if self.duration < bounds.t_min - s || self.duration > bounds.t_max + s {
            return Some(format!(
                "duration {} outside [{}, {}]",
                self.duration, bounds.t_min, bounds.t_max
            ));
        }
        if self.reward < -s || self.reward > bounds.r_max + s {
            return Some(format!(
                "reward {} outside [0, {}]",
                self.reward, bounds.r_max
            ));
        }
        for (i, &y) in self.penalties.iter().enumerate() {
            if y < -bounds.y_min[i] - s || y > bounds.y_max[i] + s {
                return Some(format!(
                    "penalty {} = {} outside [{}, {}]",
                    i, y, -bounds.y_min[i], bounds.y_max[i]
                ));
            }
        }
        if norm(&self.penalties) > bounds.c + s {
            return Some(format!(
                "penalty norm {} exceeds c = {}",
                norm(&self.penalties),
                bounds.c
            ));
        }
        None
    }
}

/// The option set offered for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMatrix {
    rows: Vec<TaskRow>,
    n: usize,
}

impl TaskMatrix {
    pub fn new(rows: Vec<TaskRow>) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyMatrix)?;
        let n = first.penalties.len();
        if let Some(bad) = rows.iter().find(|r| r.penalties.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.penalties.len(),
            });
        }
        Ok(Self { rows, n })
    }

    /// Builds a matrix of `(duration, reward)` rows with no penalties.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(t, r)| TaskRow::plain(t, r)).collect())
    }

    pub fn rows(&self) -> &[TaskRow] {
        &self.rows
    }

    pub fn row(&self, index: usize) -> &TaskRow {
        &self.rows[index]
    }

    /// Number of rows `M[k]`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Penalty dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Rejects the matrix when any row falls outside `bounds`.
    pub fn check(&self, bounds: &Bounds) -> Result<()> {
        if self.n != bounds.n() {
            return Err(Error::DimensionMismatch {
                expected: bounds.n(),
                found: self.n,
            });
        }
        for (row, r) in self.rows.iter().enumerate() {
            if let Some(reason) = r.violation(bounds) {
                return Err(Error::RowOutOfBounds { row, reason });
            }
        }
        Ok(())
    }
}

/// Sure bounds on every row any task can offer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub t_min: f64,
    pub t_max: f64,
    pub r_max: f64,
    /// Bound on the Euclidean norm of the penalty vector.
    pub c: f64,
    /// Penalties satisfy `-y_min[i] <= Y_i`.
    pub y_min: Vec<f64>,
    /// Penalties satisfy `Y_i <= y_max[i]`.
    pub y_max: Vec<f64>,
}

impl Bounds {
    /// Bounds for a system without penalties.
    pub fn unconstrained(t_min: f64, t_max: f64, r_max: f64) -> Self {
        Self {
            t_min,
            t_max,
            r_max,
            c: 0.0,
            y_min: Vec::new(),
            y_max: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.y_min.len()
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.t_min, self.t_max, self.r_max, self.c]
            .iter()
            .chain(&self.y_min)
            .chain(&self.y_max)
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::InvalidBounds("non-finite constant".into()));
        }
        if self.t_min <= 0.0 {
            return Err(Error::InvalidBounds(format!(
                "t_min must be positive, got {}",
                self.t_min
            )));
        }
        if self.t_min > self.t_max {
            return Err(Error::InvalidBounds(format!(
                "t_min {} exceeds t_max {}",
                self.t_min, self.t_max
            )));
        }
        if self.r_max < 0.0 || self.c < 0.0 {
            return Err(Error::InvalidBounds("r_max and c must be nonnegative".into()));
        }
        if self.y_min.len() != self.y_max.len() {
            return Err(Error::InvalidBounds(format!(
                "y_min has {} entries but y_max has {}",
                self.y_min.len(),
                self.y_max.len()
            )));
        }
        if self.y_min.iter().chain(&self.y_max).any(|&y| y < 0.0) {
            return Err(Error::InvalidBounds("y_min and y_max must be nonnegative".into()));
        }
        Ok(())
    }

    /// Bounds of the reweighted penalty `w * Y`.
    pub fn weighted(&self, w: f64) -> Self {
        Self {
            c: self.c * w,
            y_min: self.y_min.iter().map(|y| y * w).collect(),
            y_max: self.y_max.iter().map(|y| y * w).collect(),
            ..self.clone()
        }
    }

    /// Tightest bounds covering every row of every matrix.
    ///
    /// Returns `None` for an empty iterator.
    pub fn covering<'a>(matrices: impl IntoIterator<Item = &'a TaskMatrix>) -> Option<Self> {
        let mut out: Option<Bounds> = None;
        for m in matrices {
            for row in m.rows() {
                let b = out.get_or_insert_with(|| Bounds {
                    t_min: row.duration,
                    t_max: row.duration,
                    r_max: 0.0,
                    c: 0.0,
                    y_min: vec![0.0; m.n()],
                    y_max: vec![0.0; m.n()],
                });
                b.t_min = b.t_min.min(row.duration);
                b.t_max = b.t_max.max(row.duration);
                b.r_max = b.r_max.max(row.reward);
                b.c = b.c.max(norm(&row.penalties));
                for (i, &y) in row.penalties.iter().enumerate() {
                    b.y_min[i] = b.y_min[i].max(-y);
                    b.y_max[i] = b.y_max[i].max(y);
                }
            }
        }
        out
    }
}

/// Knobs of the adaptive controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoParams {
    /// Inverse stepsize.
    pub v: f64,
    pub alpha: f64,
    /// Virtual-queue caps are `q[i] * v`.
    pub q: Vec<f64>,
    /// Penalty weight; the controller acts on `w * Y`.
    #[serde(default = "unit_weight")]
    pub w: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl AlgoParams {
    pub fn new(v: f64, alpha: f64, q: Vec<f64>) -> Self {
        Self {
            v,
            alpha,
            q,
            w: 1.0,
        }
    }

    pub fn with_weight(mut self, w: f64) -> Self {
        self.w = w;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.v.is_finite() && self.v > 0.0) {
            return Err(Error::InvalidParams(format!("v must be positive, got {}", self.v)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParams(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(Error::InvalidParams(format!("w must be positive, got {}", self.w)));
        }
        if self.q.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.q.len(),
            });
        }
        if self.q.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::InvalidParams("q entries must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Upper caps `q_i * v` of the penalty queues.
    pub fn caps(&self) -> Vec<f64> {
        self.q.iter().map(|q| q * self.v).collect()
    }
}
