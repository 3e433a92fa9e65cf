//! Task-matrix generators and distribution-change schedules.
//!
//! System 1 is a project-selection model without penalties; System 2 is a
//! compute device choosing between idling, local processing and offloading
//! under an average-power budget `p_av`. Finite-support scenarios draw whole
//! matrices from an explicit list of atoms and feed the exact oracle.
//!
//! All uniforms come from [`TaskRng::uniform`], i.e. `lo + u (hi - lo)` with
//! `u` in `[0, 1)`. Endpoints carry zero probability, so the half-open
//! convention does not affect any statistic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Bounds, TaskMatrix, TaskRow};
use crate::rng::{StreamKey, TaskRng};

pub const SYSTEM1_ROW_PROBS: [[f64; 4]; 2] = [[0.1, 0.6, 0.15, 0.15], [0.0, 0.2, 0.4, 0.4]];

/// Default average power budget of System 2.
pub const SYSTEM2_P_AV: f64 = 1.0 / 3.0;

/// A processing option before penalty columns are formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRow {
    pub duration: f64,
    pub reward: f64,
    pub energy: Option<f64>,
    pub quality: Option<f64>,
}

impl RawRow {
    pub fn with_energy(duration: f64, reward: f64, energy: f64) -> Self {
        Self {
            duration,
            reward,
            energy: Some(energy),
            quality: None,
        }
    }
}

/// Turns energy (and optionally quality) columns into penalties
/// `[q_av - quality, energy - p_av duration]`; the quality entry is present
/// only when `q_av` is given.
pub fn penalty_transform(raw: &[RawRow], p_av: f64, q_av: Option<f64>) -> Result<TaskMatrix> {
    let mut rows = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        let energy = r
            .energy
            .ok_or_else(|| Error::InvalidScenario(format!("row {i} has no energy column")))?;
        let mut y = Vec::with_capacity(2);
        if let Some(q_av) = q_av {
            let quality = r
                .quality
                .ok_or_else(|| Error::InvalidScenario(format!("row {i} has no quality column")))?;
            y.push(q_av - quality);
        }
        y.push(energy - p_av * r.duration);
        rows.push(TaskRow::new(r.duration, r.reward, y));
    }
    TaskMatrix::new(rows)
}

/// Replaces rewards by `R + (r_min / t_min) T`, which is nonnegative when
/// rewards are bounded below by `-r_min` and leaves the reward-per-time
/// ranking of policies unchanged.
pub fn shift_rewards(a: &TaskMatrix, r_min: f64, t_min: f64) -> Result<TaskMatrix> {
    TaskMatrix::new(
        a.rows()
            .iter()
            .map(|r| TaskRow::new(r.duration, r.reward + (r_min / t_min) * r.duration, r.penalties.clone()))
            .collect(),
    )
}

fn check_dist(dist: u32) -> Result<usize> {
    match dist {
        1 | 2 => Ok(dist as usize - 1),
        _ => Err(Error::InvalidScenario(format!("unknown distribution {dist}"))),
    }
}

/// One non-vacation row of System 1 from its underlying draws.
pub fn system1_row(dist: u32, t: f64, g: f64, h: f64) -> TaskRow {
    match dist {
        1 => TaskRow::plain(t, t * g),
        _ => TaskRow::plain(t, g * t + h),
    }
}

/// Draw order: one uniform for the row count, then per extra row `T, G`
/// (and `H` under distribution 2).
pub fn sample_system1(dist: u32, rng: &mut TaskRng) -> Result<TaskMatrix> {
    let probs = &SYSTEM1_ROW_PROBS[check_dist(dist)?];
    let u = rng.unit();
    let mut acc = 0.0;
    let mut m = probs.len();
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            m = i + 1;
            break;
        }
    }
    let mut rows = vec![TaskRow::plain(1.0, 0.0)];
    for _ in 1..m {
        let t = rng.uniform(1.0, 10.0);
        let row = if dist == 1 {
            let g = rng.uniform(0.0, 50.0);
            system1_row(1, t, g, 0.0)
        } else {
            let g = rng.uniform(10.0, 30.0);
            let h = rng.uniform(0.0, 200.0);
            system1_row(2, t, g, h)
        };
        rows.push(row);
    }
    TaskMatrix::new(rows)
}

/// The three System 2 rows (idle, local, offload) for given `U1, U2`.
pub fn system2_rows(dist: u32, p_av: f64, u1: f64, u2: f64) -> Result<TaskMatrix> {
    check_dist(dist)?;
    let shared = 10.0 * u1 * (u2 + 1.0);
    let local_reward = if dist == 1 {
        shared
    } else {
        (20.0 * (u2 + 1.0)).min(20.0)
    };
    let raw = [
        RawRow::with_energy(1.0, 0.0, 0.0),
        RawRow::with_energy(1.0 + 9.0 * u1, local_reward, 1.0 + 9.0 * u1),
        RawRow::with_energy(6.0 + 6.0 * u1, shared, u1),
    ];
    penalty_transform(&raw, p_av, None)
}

pub fn sample_system2(dist: u32, p_av: f64, rng: &mut TaskRng) -> Result<TaskMatrix> {
    let u1 = rng.unit();
    let u2 = rng.unit();
    system2_rows(dist, p_av, u1, u2)
}

pub fn system1_bounds() -> Bounds {
    Bounds::unconstrained(1.0, 10.0, 500.0)
}

/// Bounds of System 2 (both distributions) by interval arithmetic over
/// `U1, U2` in `[0, 1]`; each penalty is affine in `U1`, so the extremes sit
/// at the endpoints.
pub fn system2_bounds(p_av: f64) -> Bounds {
    let endpoints = [
        -p_av,
        (1.0 - p_av) * 1.0,
        (1.0 - p_av) * 10.0,
        -6.0 * p_av,
        1.0 - 12.0 * p_av,
    ];
    let hi = endpoints.iter().cloned().fold(0.0, f64::max);
    let lo = endpoints.iter().cloned().fold(0.0, f64::min);
    Bounds {
        t_min: 1.0,
        t_max: 12.0,
        r_max: 20.0,
        c: hi.max(-lo),
        y_min: vec![-lo],
        y_max: vec![hi],
    }
}

/// Midpoint discretization of System 2: `grid^2` equiprobable atoms at
/// `U = (i + 1/2) / grid`.
pub fn system2_surrogate(dist: u32, p_av: f64, grid: usize) -> Result<FiniteSupportSpec> {
    if grid == 0 {
        return Err(Error::InvalidScenario("surrogate grid must be positive".into()));
    }
    let p = 1.0 / (grid * grid) as f64;
    let mut atoms = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            let u1 = (i as f64 + 0.5) / grid as f64;
            let u2 = (j as f64 + 0.5) / grid as f64;
            atoms.push(Atom {
                probability: p,
                matrix: system2_rows(dist, p_av, u1, u2)?,
            });
        }
    }
    FiniteSupportSpec::new(atoms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AtomRepr", into = "AtomRepr")]
pub struct Atom {
    pub probability: f64,
    pub matrix: TaskMatrix,
}

/// Config form of an atom: rows are `[duration, reward, y_1, ..., y_n]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomRepr {
    probability: f64,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<AtomRepr> for Atom {
    type Error = Error;

    fn try_from(r: AtomRepr) -> Result<Self> {
        let rows = r
            .rows
            .into_iter()
            .map(|row| {
                if row.len() < 2 {
                    return Err(Error::InvalidScenario(
                        "atom rows need at least duration and reward".into(),
                    ));
                }
                Ok(TaskRow::new(row[0], row[1], row[2..].to_vec()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Atom {
            probability: r.probability,
            matrix: TaskMatrix::new(rows)?,
        })
    }
}

impl From<Atom> for AtomRepr {
    fn from(a: Atom) -> Self {
        AtomRepr {
            probability: a.probability,
            rows: a
                .matrix
                .rows()
                .iter()
                .map(|r| {
                    let mut v = vec![r.duration, r.reward];
                    v.extend_from_slice(&r.penalties);
                    v
                })
                .collect(),
        }
    }
}

/// An explicit discrete distribution over task matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SupportRepr", into = "SupportRepr")]
pub struct FiniteSupportSpec {
    atoms: Vec<Atom>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SupportRepr {
    atoms: Vec<Atom>,
}

impl TryFrom<SupportRepr> for FiniteSupportSpec {
    type Error = Error;

    fn try_from(r: SupportRepr) -> Result<Self> {
        FiniteSupportSpec::new(r.atoms)
    }
}

impl From<FiniteSupportSpec> for SupportRepr {
    fn from(s: FiniteSupportSpec) -> Self {
        SupportRepr { atoms: s.atoms }
    }
}

impl FiniteSupportSpec {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| Error::InvalidScenario("finite support needs at least one atom".into()))?;
        let n = first.matrix.n();
        let mut total = 0.0;
        for a in &atoms {
            if !(a.probability.is_finite() && a.probability > 0.0) {
                return Err(Error::InvalidScenario(format!(
                    "atom probability {} is not positive",
                    a.probability
                )));
            }
            if a.matrix.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: a.matrix.n(),
                });
            }
            total += a.probability;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidScenario(format!(
                "atom probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { atoms })
    }

    /// Convenience constructor from `(probability, rows)` pairs, rows being
    /// `[duration, reward, y...]`.
    pub fn from_rows(atoms: &[(f64, Vec<Vec<f64>>)]) -> Result<Self> {
        let atoms = atoms
            .iter()
            .map(|(p, rows)| {
                Atom::try_from(AtomRepr {
                    probability: *p,
                    rows: rows.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn n(&self) -> usize {
        self.atoms[0].matrix.n()
    }

    /// Tightest bounds covering every row of every atom.
    pub fn bounds(&self) -> Bounds {
        Bounds::covering(self.atoms.iter().map(|a| &a.matrix)).expect("spec has atoms")
    }

    /// Index of the atom selected by one uniform draw.
    pub fn pick(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            acc += a.probability;
            if u < acc {
                return i;
            }
        }
        self.atoms.len() - 1
    }

    pub fn sample(&self, rng: &mut TaskRng) -> TaskMatrix {
        self.atoms[self.pick(rng.unit())].matrix.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub start_task: u64,
    pub distribution: u32,
}

/// Distribution id active at task `k`: the last change point at or before `k`.
pub fn distribution_at(schedule: &[ScheduleEntry], k: u64) -> u32 {
    schedule
        .iter()
        .take_while(|e| e.start_task <= k)
        .last()
        .map(|e| e.distribution)
        .unwrap_or(schedule[0].distribution)
}

fn default_p_av() -> f64 {
    SYSTEM2_P_AV
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemKind {
    System1,
    System2 {
        #[serde(default = "default_p_av")]
        p_av: f64,
    },
    /// Distribution id `i` refers to `distributions[i - 1]`.
    FiniteSupport { distributions: Vec<FiniteSupportSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub system: SystemKind,
    pub schedule: Vec<ScheduleEntry>,
    /// Overrides the scenario's built-in bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
}

impl ScenarioSpec {
    pub fn new(system: SystemKind, schedule: Vec<ScheduleEntry>) -> Result<Self> {
        let s = Self {
            system,
            schedule,
            bounds: None,
        };
        s.validate()?;
        Ok(s)
    }

    /// A single distribution for the whole run.
    pub fn stationary(system: SystemKind, distribution: u32) -> Result<Self> {
        Self::new(
            system,
            vec![ScheduleEntry {
                start_task: 1,
                distribution,
            }],
        )
    }

    /// Distribution ids switching at the given tasks, e.g.
    /// `switching(sys, &[(1, 1), (10_001, 2)])`.
    pub fn switching(system: SystemKind, changes: &[(u64, u32)]) -> Result<Self> {
        Self::new(
            system,
            changes
                .iter()
                .map(|&(start_task, distribution)| ScheduleEntry {
                    start_task,
                    distribution,
                })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .schedule
            .first()
            .ok_or_else(|| Error::InvalidScenario("schedule is empty".into()))?;
        if first.start_task != 1 {
            return Err(Error::InvalidScenario("schedule must start at task 1".into()));
        }
        if self.schedule.windows(2).any(|w| w[1].start_task <= w[0].start_task) {
            return Err(Error::InvalidScenario(
                "schedule change points must be strictly increasing".into(),
            ));
        }
        let max_id = match &self.system {
            SystemKind::System1 => 2,
            SystemKind::System2 { p_av } => {
                if !(p_av.is_finite() && *p_av >= 0.0) {
                    return Err(Error::InvalidScenario(format!("invalid p_av {p_av}")));
                }
                2
            }
            SystemKind::FiniteSupport { distributions } => {
                let n = distributions
                    .first()
                    .ok_or_else(|| Error::InvalidScenario("no finite-support distributions".into()))?
                    .n();
                if let Some(d) = distributions.iter().find(|d| d.n() != n) {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: d.n(),
                    });
                }
                distributions.len() as u32
            }
        };
        if let Some(e) = self
            .schedule
            .iter()
            .find(|e| e.distribution == 0 || e.distribution > max_id)
        {
            return Err(Error::InvalidScenario(format!(
                "distribution id {} out of range 1..={max_id}",
                e.distribution
            )));
        }
        let bounds = self.bounds();
        bounds.validate()?;
        if let SystemKind::FiniteSupport { distributions } = &self.system {
            for d in distributions {
                for a in d.atoms() {
                    a.matrix.check(&bounds)?;
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        match &self.system {
            SystemKind::System1 => 0,
            SystemKind::System2 { .. } => 1,
            SystemKind::FiniteSupport { distributions } => distributions[0].n(),
        }
    }

    pub fn bounds(&self) -> Bounds {
        if let Some(b) = &self.bounds {
            return b.clone();
        }
        match &self.system {
            SystemKind::System1 => system1_bounds(),
            SystemKind::System2 { p_av } => system2_bounds(*p_av),
            SystemKind::FiniteSupport { distributions } => {
                Bounds::covering(distributions.iter().flat_map(|d| d.atoms().iter().map(|a| &a.matrix)))
                    .expect("validated distributions are nonempty")
            }
        }
    }

    /// Power budget when penalties are `energy - p_av T`.
    pub fn p_av(&self) -> Option<f64> {
        match &self.system {
            SystemKind::System2 { p_av } => Some(*p_av),
            _ => None,
        }
    }

    pub fn distribution_at(&self, k: u64) -> u32 {
        distribution_at(&self.schedule, k)
    }

    /// The matrix offered at task `k` of replication `replication`.
    pub fn sample(&self, master_seed: u64, replication: u64, k: u64) -> Result<TaskMatrix> {
        let mut rng = StreamKey::new(master_seed, replication).task(k);
        let dist = self.distribution_at(k);
        match &self.system {
            SystemKind::System1 => sample_system1(dist, &mut rng),
            SystemKind::System2 { p_av } => sample_system2(dist, *p_av, &mut rng),
            SystemKind::FiniteSupport { distributions } => {
                Ok(distributions[dist as usize - 1].sample(&mut rng))
            }
        }
    }
}
