//! Replication and ensemble drivers with inline invariant checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{dpp_ratio_step, greedy_step, nonpositive_penalties, robbins_monro_step, DppState, RmState};
use crate::controller::{Controller, ControllerState, Decision, StepDiagnostics};
use crate::error::{Error, Result};
use crate::metrics::{cumulative_ratio_series, energy_series, window_ratio_series};
use crate::model::{norm, AlgoParams, TaskRow};
use crate::rng::StreamKey;
use crate::scenarios::ScenarioSpec;

/// Absolute tolerance of the inline invariant checks.
pub const INVARIANT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyFilter {
    #[default]
    None,
    /// Only rows with every penalty `<= 0`.
    NonpositivePenalties,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Algorithm {
    Adaptive(AlgoParams),
    Greedy { filter: GreedyFilter },
    RobbinsMonro,
    DppRatio { v: f64 },
}

/// Algorithm state between tasks; serializable for pause and resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AlgoState {
    Adaptive(ControllerState),
    Greedy { k: u64 },
    RobbinsMonro(RmState),
    DppRatio(DppState),
}

impl AlgoState {
    /// Index of the next task.
    pub fn next_task(&self) -> u64 {
        match self {
            AlgoState::Adaptive(s) => s.k,
            AlgoState::Greedy { k } => *k,
            AlgoState::RobbinsMonro(s) => s.k,
            AlgoState::DppRatio(s) => s.k,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("algorithm state: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub scenario: ScenarioSpec,
    pub algorithm: Algorithm,
    pub horizon: u64,
    pub replications: u64,
    pub seed: u64,
    /// Moving-window length for the window ratio.
    pub window: usize,
}

impl Experiment {
    /// Checks the scenario and its pairing with the algorithm.
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.horizon == 0 {
            return Err(Error::InvalidParams("horizon must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParams("replications must be at least 1".into()));
        }
        if self.window == 0 {
            return Err(Error::InvalidParams("window must be at least 1".into()));
        }
        let n = self.scenario.n();
        match &self.algorithm {
            Algorithm::Adaptive(p) => {
                Controller::new(self.scenario.bounds(), p.clone())?;
            }
            Algorithm::RobbinsMonro if n > 0 => {
                return Err(Error::Unsupported(
                    "Robbins-Monro baseline requires a scenario without penalties".into(),
                ))
            }
            Algorithm::DppRatio { v } if !(v.is_finite() && *v > 0.0) => {
                return Err(Error::InvalidParams(format!("v must be positive, got {v}")))
            }
            _ => {}
        }
        Ok(())
    }

    /// Hex SHA-256 of the experiment's JSON form.
    pub fn fingerprint(&self) -> String {
        fingerprint_of(&serde_json::to_vec(self).expect("experiment serializes"))
    }

    pub fn initial_state(&self) -> Result<AlgoState> {
        Ok(match &self.algorithm {
            Algorithm::Adaptive(p) => {
                AlgoState::Adaptive(Controller::new(self.scenario.bounds(), p.clone())?.initial_state())
            }
            Algorithm::Greedy { .. } => AlgoState::Greedy { k: 1 },
            Algorithm::RobbinsMonro => AlgoState::RobbinsMonro(RmState::default()),
            Algorithm::DppRatio { .. } => AlgoState::DppRatio(DppState::new(self.scenario.n())),
        })
    }
}

pub fn fingerprint_of(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub k: u64,
    /// 1-based row number.
    pub row: usize,
    pub t: f64,
    pub r: f64,
    /// Unweighted penalties of the chosen row.
    pub y: Vec<f64>,
    /// `gamma[k]` chosen during this task (adaptive only).
    pub gamma: Option<f64>,
    /// Penalty queues entering the task (adaptive and DPP).
    pub q: Vec<f64>,
    /// Duration queue entering the task (adaptive only).
    pub j: Option<f64>,
    pub diagnostics: Option<StepDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub replication: u64,
    pub records: Vec<TaskRecord>,
    /// State after the last task, e.g. for `J[horizon + 1]` or resuming.
    pub final_state: AlgoState,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.r).collect()
    }

    pub fn durations(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn penalty(&self, i: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.y[i]).collect()
    }

    /// `J` entering task `k`, including `k = horizon + 1`.
    pub fn j_at(&self, k: u64) -> Option<f64> {
        let first = self.records.first()?.k;
        match self.records.get((k - first) as usize) {
            Some(rec) => rec.j,
            None if k == first + self.records.len() as u64 => match &self.final_state {
                AlgoState::Adaptive(s) => Some(s.j),
                _ => None,
            },
            None => None,
        }
    }

    /// Appends a trace that continues this one.
    pub fn extend(&mut self, next: Trace) -> Result<()> {
        let expected = self.final_state.next_task();
        if next.records.first().map(|r| r.k) != Some(expected) {
            return Err(Error::InvalidParams(format!(
                "continuation must start at task {expected}"
            )));
        }
        self.records.extend(next.records);
        self.final_state = next.final_state;
        Ok(())
    }
}

/// Per-step checks: queue ranges, `gamma` range, the `J` bound, the drift
/// bound and `J >= v beta1 => gamma does not increase`.
fn check_step(
    ctrl: &Controller,
    before: &ControllerState,
    after: &ControllerState,
    diag: &StepDiagnostics,
) -> Result<()> {
    let k = before.k;
    let fail = |what: String| Err(Error::InvariantViolation { k, what });
    let p = ctrl.params();
    let c = ctrl.constants();
    for (i, (q, cap)) in after.q.iter().zip(&p.q).enumerate() {
        if *q < -INVARIANT_TOL || *q > cap * p.v + INVARIANT_TOL {
            return fail(format!("Q_{} = {q} outside [0, {}]", i + 1, cap * p.v));
        }
    }
    if after.gamma < c.gamma_min - INVARIANT_TOL || after.gamma > c.gamma_max + INVARIANT_TOL {
        return fail(format!(
            "gamma = {} outside [{}, {}]",
            after.gamma, c.gamma_min, c.gamma_max
        ));
    }
    let j_max = c.j_bound(p.v);
    if after.j < -INVARIANT_TOL || after.j > j_max + INVARIANT_TOL {
        return fail(format!("J = {} outside [0, {j_max}]", after.j));
    }
    if diag.delta_l > diag.drift_rhs + INVARIANT_TOL {
        return fail(format!(
            "drift {} exceeds bound {}",
            diag.delta_l, diag.drift_rhs
        ));
    }
    if before.j >= p.v * c.beta1 && after.gamma > before.gamma + INVARIANT_TOL {
        return fail(format!(
            "gamma rose from {} to {} with J = {} >= v beta1",
            before.gamma, after.gamma, before.j
        ));
    }
    Ok(())
}

/// Simulates tasks `state.next_task() ..= last_task` of one replication.
pub fn run_segment(exp: &Experiment, replication: u64, state: AlgoState, last_task: u64) -> Result<Trace> {
    let first = state.next_task();
    let bounds = exp.scenario.bounds();
    let controller = match &exp.algorithm {
        Algorithm::Adaptive(p) => Some(Controller::new(bounds.clone(), p.clone())?),
        _ => None,
    };
    let mut records = Vec::with_capacity(last_task.saturating_sub(first - 1) as usize);
    let mut state = state;
    for k in first..=last_task {
        let a = exp.scenario.sample(exp.seed, replication, k)?;
        a.check(&bounds)?;
        let (dec, next, rec_extra): (Decision, AlgoState, (Option<f64>, Vec<f64>, Option<f64>, Option<StepDiagnostics>)) =
            match (&exp.algorithm, &state) {
                (Algorithm::Adaptive(_), AlgoState::Adaptive(s)) => {
                    let ctrl = controller.as_ref().expect("built above");
                    let (dec, next, diag) = ctrl.step(s, &a)?;
                    check_step(ctrl, s, &next, &diag)?;
                    let extra = (Some(next.gamma), s.q.clone(), Some(s.j), Some(diag));
                    (dec, AlgoState::Adaptive(next), extra)
                }
                (Algorithm::Greedy { filter }, AlgoState::Greedy { k }) => {
                    let dec = match filter {
                        GreedyFilter::None => greedy_step(&a, None)?,
                        GreedyFilter::NonpositivePenalties => {
                            let f: &dyn Fn(&TaskRow) -> bool = &nonpositive_penalties;
                            greedy_step(&a, Some(f))?
                        }
                    };
                    (dec, AlgoState::Greedy { k: k + 1 }, (None, Vec::new(), None, None))
                }
                (Algorithm::RobbinsMonro, AlgoState::RobbinsMonro(s)) => {
                    let (dec, next) = robbins_monro_step(s, &a)?;
                    (dec, AlgoState::RobbinsMonro(next), (None, Vec::new(), None, None))
                }
                (Algorithm::DppRatio { v }, AlgoState::DppRatio(s)) => {
                    let (dec, next) = dpp_ratio_step(s, &a, *v)?;
                    let q = s.q.clone();
                    (dec, AlgoState::DppRatio(next), (None, q, None, None))
                }
                _ => {
                    return Err(Error::InvalidParams(
                        "algorithm state does not match the algorithm".into(),
                    ))
                }
            };
        let (gamma, q, j, diagnostics) = rec_extra;
        records.push(TaskRecord {
            k,
            row: dec.row_number(),
            t: dec.t,
            r: dec.r,
            y: dec.y,
            gamma,
            q,
            j,
            diagnostics,
        });
        state = next;
    }
    Ok(Trace {
        replication,
        records,
        final_state: state,
    })
}

/// Simulates tasks `1..=horizon` of one replication.
pub fn run_replication(exp: &Experiment, replication: u64) -> Result<Trace> {
    if exp.horizon == 0 {
        return Err(Error::InvalidParams("horizon must be at least 1".into()));
    }
    run_segment(exp, replication, exp.initial_state()?, exp.horizon)
}

/// Checks, for every `(k0, m)`, that the windowed penalty and duration sums
/// respect the bounds implied by the queue updates.
pub fn check_windows(trace: &Trace, params: &AlgoParams, y_max: &[f64], pairs: &[(u64, u64)]) -> Result<()> {
    let first = trace
        .records
        .first()
        .ok_or_else(|| Error::InvalidParams("empty trace".into()))?
        .k;
    for &(k0, m) in pairs {
        let end = k0 + m;
        if m == 0 || k0 < first || end > first + trace.len() as u64 {
            return Err(Error::InvalidParams(format!("window ({k0}, {m}) outside the trace")));
        }
        let window = &trace.records[(k0 - first) as usize..(end - first) as usize];
        let mf = m as f64;
        for i in 0..params.q.len() {
            let lhs: f64 = window
                .iter()
                .map(|rec| {
                    let hit = rec.diagnostics.as_ref().map_or(false, |d| d.indicators[i]);
                    params.w * rec.y[i] - if hit { params.w * y_max[i] } else { 0.0 }
                })
                .sum::<f64>()
                / mf;
            let rhs = params.q[i] * params.v / mf;
            if lhs > rhs + INVARIANT_TOL {
                return Err(Error::InvariantViolation {
                    k: k0,
                    what: format!("penalty {} window of {m}: {lhs} > {rhs}", i + 1),
                });
            }
        }
        let lhs: f64 = window
            .iter()
            .map(|rec| rec.t - 1.0 / rec.gamma.expect("adaptive trace"))
            .sum::<f64>()
            / mf;
        let rhs = trace
            .j_at(end)
            .ok_or_else(|| Error::InvalidParams("window check needs an adaptive trace".into()))?
            / mf;
        if lhs > rhs + INVARIANT_TOL {
            return Err(Error::InvariantViolation {
                k: k0,
                what: format!("duration window of {m}: {lhs} > {rhs}"),
            });
        }
    }
    Ok(())
}

/// `count` windows `(k0, m)` drawn uniformly with `1 <= k0` and
/// `k0 + m - 1 <= horizon`, from a stream disjoint from every task's draws.
pub fn random_windows(seed: u64, replication: u64, horizon: u64, count: usize) -> Vec<(u64, u64)> {
    let mut rng = StreamKey::new(seed, replication).task(u64::MAX);
    (0..count)
        .map(|_| {
            let k0 = 1 + ((rng.unit() * horizon as f64) as u64).min(horizon - 1);
            let room = horizon + 1 - k0;
            let m = 1 + ((rng.unit() * room as f64) as u64).min(room - 1);
            (k0, m)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub replications: u64,
    pub fingerprint: String,
    pub window: usize,
    pub mean_r: Vec<f64>,
    pub mean_t: Vec<f64>,
    /// `mean_y[i][k - 1]`.
    pub mean_y: Vec<Vec<f64>>,
    pub cum_ratio: Vec<f64>,
    pub window_ratio: Vec<Option<f64>>,
    /// Present when the last penalty is `energy - p_av T`.
    pub power_ratio: Option<Vec<f64>>,
    pub mean_j: Option<Vec<f64>>,
    pub mean_norm_q: Option<Vec<f64>>,
}

impl EnsembleSummary {
    pub fn len(&self) -> usize {
        self.mean_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_r.is_empty()
    }

    /// Builds the summary from traces, summing in the order given.
    pub fn from_traces(traces: &[Trace], window: usize, p_av: Option<f64>, fingerprint: String) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| Error::InvalidParams("no traces to summarize".into()))?;
        let len = first.len();
        let n = first.records.first().map_or(0, |r| r.y.len());
        if traces.iter().any(|t| t.len() != len) {
            return Err(Error::InvalidParams("traces differ in length".into()));
        }
        let has_j = first.records.iter().all(|r| r.j.is_some());
        let has_q = n > 0 && first.records.iter().all(|r| r.q.len() == n);
        let count = traces.len() as f64;

        let mut sum_r = vec![0.0; len];
        let mut sum_t = vec![0.0; len];
        let mut sum_y = vec![vec![0.0; len]; n];
        let mut sum_j = vec![0.0; len];
        let mut sum_q = vec![0.0; len];
        for trace in traces {
            for (k, rec) in trace.records.iter().enumerate() {
                sum_r[k] += rec.r;
                sum_t[k] += rec.t;
                for (s, y) in sum_y.iter_mut().zip(&rec.y) {
                    s[k] += y;
                }
                if has_j {
                    sum_j[k] += rec.j.unwrap_or(0.0);
                }
                if has_q {
                    sum_q[k] += norm(&rec.q);
                }
            }
        }
        let mean = |v: Vec<f64>| v.into_iter().map(|x| x / count).collect::<Vec<_>>();
        let mean_r = mean(sum_r);
        let mean_t = mean(sum_t);
        let mean_y: Vec<Vec<f64>> = sum_y.into_iter().map(mean).collect();
        let power_ratio = match (p_av, mean_y.last()) {
            (Some(p), Some(y)) => Some(cumulative_ratio_series(&energy_series(y, &mean_t, p), &mean_t)),
            _ => None,
        };
        Ok(Self {
            replications: traces.len() as u64,
            fingerprint,
            window,
            cum_ratio: cumulative_ratio_series(&mean_r, &mean_t),
            window_ratio: window_ratio_series(&mean_r, &mean_t, window),
            power_ratio,
            mean_j: has_j.then(|| mean(sum_j)),
            mean_norm_q: has_q.then(|| mean(sum_q)),
            mean_r,
            mean_t,
            mean_y,
        })
    }

    /// Moving-window energy ratio over the `w` tasks before each `k0`.
    pub fn power_window_series(&self, p_av: f64, w: usize) -> Option<Vec<Option<f64>>> {
        let y = self.mean_y.last()?;
        let e = energy_series(y, &self.mean_t, p_av);
        Some(window_ratio_series(&e, &self.mean_t, w))
    }
}

/// Runs replications `0..exp.replications` and returns their traces in order.
pub fn run_traces(exp: &Experiment, threads: Option<usize>) -> Result<Vec<Trace>> {
    exp.validate()?;
    let job = || {
        (0..exp.replications)
            .into_par_iter()
            .map(|rep| run_replication(exp, rep))
            .collect::<Result<Vec<_>>>()
    };
    match threads {
        None => job(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(job),
    }
}

/// Runs the ensemble and averages across replications in index order, so
/// the result does not depend on `threads`.
pub fn run_ensemble(exp: &Experiment, threads: Option<usize>) -> Result<EnsembleSummary> {
    let traces = run_traces(exp, threads)?;
    EnsembleSummary::from_traces(&traces, exp.window, exp.scenario.p_av(), exp.fingerprint())
}
