//! The adaptive renewal controller.
//!
//! Each task runs three stages: pick the row minimizing
//! `-v R + J T + Q.(wY)`, move the auxiliary variable `gamma` by a projected
//! prox step, then update the penalty queues `Q` (capped at `q_i v`) and the
//! duration queue `J`. Every step also reports the Lyapunov quantities needed
//! to check the drift and queue bounds on the sample path.

use serde::{Deserialize, Serialize};

use crate::constants::{derive_constants, DerivedConstants};
use crate::error::{Error, Result};
use crate::model::{clamp, dot, norm, AlgoParams, Bounds, TaskMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// Penalty virtual queues `Q[k]`.
    pub q: Vec<f64>,
    /// Duration virtual queue `J[k]`.
    pub j: f64,
    /// `gamma[k-1]`, the auxiliary value entering task `k`.
    pub gamma: f64,
    /// Index of the next task (starts at 1).
    pub k: u64,
}

impl ControllerState {
    pub fn initial(n: usize, consts: &DerivedConstants) -> Self {
        Self {
            q: vec![0.0; n],
            j: 0.0,
            gamma: consts.gamma_min,
            k: 1,
        }
    }

    /// `L = J^2/2 + |Q|^2/2`.
    pub fn lyapunov(&self) -> f64 {
        0.5 * self.j * self.j + 0.5 * dot(&self.q, &self.q)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("controller state: {e}")))
    }
}

/// The row chosen for a task, copied verbatim from the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// 0-based row index.
    pub row_index: usize,
    pub t: f64,
    pub r: f64,
    pub y: Vec<f64>,
}

impl Decision {
    pub fn from_row(a: &TaskMatrix, row_index: usize) -> Self {
        let row = a.row(row_index);
        Self {
            row_index,
            t: row.duration,
            r: row.reward,
            y: row.penalties.clone(),
        }
    }

    /// 1-based row number, as reported in traces.
    pub fn row_number(&self) -> usize {
        self.row_index + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub delta_l: f64,
    pub l_before: f64,
    pub l_after: f64,
    /// `|Q[k]|` before the update.
    pub z: f64,
    /// `Q_i[k] > q_i v - w y_max_i`.
    pub indicators: Vec<bool>,
    pub gamma_objective_value: f64,
    /// `b + J (T - 1/gamma) + Q.(wY)`, the bound on `delta_l`.
    pub drift_rhs: f64,
}

#[derive(Debug, Clone)]
pub struct Controller {
    bounds: Bounds,
    params: AlgoParams,
    consts: DerivedConstants,
}

impl Controller {
    pub fn new(bounds: Bounds, params: AlgoParams) -> Result<Self> {
        let consts = derive_constants(&bounds, &params, None)?;
        Ok(Self {
            bounds,
            params,
            consts,
        })
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn params(&self) -> &AlgoParams {
        &self.params
    }

    pub fn constants(&self) -> &DerivedConstants {
        &self.consts
    }

    pub fn initial_state(&self) -> ControllerState {
        ControllerState::initial(self.bounds.n(), &self.consts)
    }

    /// `Q.(wY)` with the weight applied to each penalty before the product.
    fn weighted_dot(&self, q: &[f64], y: &[f64]) -> f64 {
        q.iter().zip(y).map(|(q, y)| q * (self.params.w * y)).sum()
    }

    /// Row minimizing `-v R + J T + Q.(wY)`; exact ties go to the lowest index.
    pub fn select_row(&self, a: &TaskMatrix, state: &ControllerState) -> Result<Decision> {
        a.check(&self.bounds)?;
        let v = self.params.v;
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for (i, row) in a.rows().iter().enumerate() {
            let val = -v * row.reward + state.j * row.duration + self.weighted_dot(&state.q, &row.penalties);
            if val < best_val {
                best = i;
                best_val = val;
            }
        }
        Ok(Decision::from_row(a, best))
    }

    /// Closed-form minimizer of
    /// `gamma [-vR + JT + Q.(wY)] + (gamma_prev alpha v^2 / 2)(gamma - gamma_prev)^2`
    /// over `[gamma_min, gamma_max]`.
    pub fn update_gamma(&self, state: &ControllerState, dec: &Decision) -> f64 {
        let (v, alpha) = (self.params.v, self.params.alpha);
        let prev = state.gamma;
        let drive = v * dec.r - state.j * dec.t - self.weighted_dot(&state.q, &dec.y);
        clamp(
            prev + drive / (prev * alpha * v * v),
            self.consts.gamma_min,
            self.consts.gamma_max,
        )
    }

    /// Returns `(Q[k+1], J[k+1])`.
    pub fn update_queues(&self, state: &ControllerState, dec: &Decision, gamma_k: f64) -> (Vec<f64>, f64) {
        let v = self.params.v;
        let q = state
            .q
            .iter()
            .zip(&dec.y)
            .zip(&self.params.q)
            .map(|((q, y), cap)| clamp(q + self.params.w * y, 0.0, cap * v))
            .collect();
        let j = (state.j + dec.t - 1.0 / gamma_k).max(0.0);
        (q, j)
    }

    pub fn step(
        &self,
        state: &ControllerState,
        a: &TaskMatrix,
    ) -> Result<(Decision, ControllerState, StepDiagnostics)> {
        let dec = self.select_row(a, state)?;
        let gamma = self.update_gamma(state, &dec);
        let (q, j) = self.update_queues(state, &dec, gamma);
        let next = ControllerState {
            q,
            j,
            gamma,
            k: state.k + 1,
        };

        let qy = self.weighted_dot(&state.q, &dec.y);
        let (v, alpha) = (self.params.v, self.params.alpha);
        let l_before = state.lyapunov();
        let l_after = next.lyapunov();
        let indicators = state
            .q
            .iter()
            .zip(&self.params.q)
            .zip(&self.bounds.y_max)
            .map(|((q, cap), ymax)| *q > cap * v - self.params.w * ymax)
            .collect();
        let per_unit = -v * dec.r + state.j * dec.t + qy;
        let diag = StepDiagnostics {
            delta_l: l_after - l_before,
            l_before,
            l_after,
            z: norm(&state.q),
            indicators,
            gamma_objective_value: gamma * per_unit
                + 0.5 * state.gamma * alpha * v * v * (gamma - state.gamma).powi(2),
            drift_rhs: self.consts.b + state.j * (dec.t - 1.0 / gamma) + qy,
        };
        Ok((dec, next, diag))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskRow;
    use proptest::prelude::*;

    fn eq2_matrix() -> TaskMatrix {
        TaskMatrix::from_pairs(&[(5.1, 3.6), (10.2, 2.8), (2.7, 3.0)]).unwrap()
    }

    fn eq2_controller() -> Controller {
        Controller::new(Bounds::unconstrained(1.0, 11.0, 5.0), AlgoParams::new(1.0, 1.0, vec![])).unwrap()
    }

    fn state(q: Vec<f64>, j: f64, gamma: f64) -> ControllerState {
        ControllerState { q, j, gamma, k: 1 }
    }

    #[test]
    fn select_row_with_empty_duration_queue_maximizes_reward() {
        let d = eq2_controller().select_row(&eq2_matrix(), &state(vec![], 0.0, 0.1)).unwrap();
        assert_eq!(d.row_number(), 1);
        assert_eq!((d.t, d.r), (5.1, 3.6));
    }

    #[test]
    fn select_row_with_unit_duration_queue() {
        let d = eq2_controller().select_row(&eq2_matrix(), &state(vec![], 1.0, 0.1)).unwrap();
        assert_eq!(d.row_number(), 3);
    }

    #[test]
    fn select_row_tie_goes_to_first() {
        let a = TaskMatrix::from_pairs(&[(2.0, 1.0), (2.0, 1.0)]).unwrap();
        let d = eq2_controller().select_row(&a, &state(vec![], 0.3, 0.1)).unwrap();
        assert_eq!(d.row_index, 0);
    }

    #[test]
    fn select_row_rejects_out_of_bounds_row() {
        let a = TaskMatrix::from_pairs(&[(2.0, 1.0), (12.0, 1.0)]).unwrap();
        let err = eq2_controller().select_row(&a, &state(vec![], 0.0, 0.1)).unwrap_err();
        assert!(matches!(err, Error::RowOutOfBounds { row: 1, .. }));
    }

    fn gamma_controller() -> Controller {
        Controller::new(Bounds::unconstrained(1.0, 10.0, 500.0), AlgoParams::new(10.0, 1.0, vec![])).unwrap()
    }

    #[test]
    fn update_gamma_examples() {
        let c = gamma_controller();
        let dec = Decision { row_index: 0, t: 2.0, r: 3.0, y: vec![] };
        assert_eq!(c.update_gamma(&state(vec![], 0.0, 0.5), &dec), 1.0);
        assert_eq!(c.update_gamma(&state(vec![], 100.0, 0.5), &dec), 0.1);
        let idle = Decision { row_index: 0, t: 2.0, r: 0.0, y: vec![] };
        assert_eq!(c.update_gamma(&state(vec![], 0.0, 0.37), &idle), 0.37);
    }

    #[test]
    fn update_queues_examples() {
        let bounds = Bounds {
            t_min: 1.0,
            t_max: 10.0,
            r_max: 10.0,
            c: 10.0,
            y_min: vec![10.0],
            y_max: vec![10.0],
        };
        let c = Controller::new(bounds, AlgoParams::new(2.0, 1.0, vec![3.0])).unwrap();
        let s = state(vec![5.0], 2.0, 0.5);
        let up = Decision { row_index: 0, t: 3.0, r: 0.0, y: vec![3.0] };
        let (q, j) = c.update_queues(&s, &up, 1.0);
        assert_eq!(q, vec![6.0]);
        assert_eq!(j, 4.0);
        let down = Decision { row_index: 0, t: 1.0, r: 0.0, y: vec![-7.0] };
        let (q, j) = c.update_queues(&s, &down, 0.25);
        assert_eq!(q, vec![0.0]);
        assert_eq!(j, 0.0);
    }

    #[test]
    fn weight_applies_to_queue_increment() {
        let bounds = Bounds {
            t_min: 1.0,
            t_max: 10.0,
            r_max: 10.0,
            c: 10.0,
            y_min: vec![10.0],
            y_max: vec![10.0],
        };
        let c = Controller::new(bounds, AlgoParams::new(2.0, 1.0, vec![100.0]).with_weight(2.0)).unwrap();
        let dec = Decision { row_index: 0, t: 1.0, r: 0.0, y: vec![1.5] };
        let (q, _) = c.update_queues(&state(vec![1.0], 0.0, 0.5), &dec, 1.0);
        assert_eq!(q, vec![4.0]);
    }

    #[test]
    fn first_step_from_fresh_state() {
        let c = gamma_controller();
        let a = TaskMatrix::from_pairs(&[(2.0, 6.0)]).unwrap();
        let s0 = c.initial_state();
        assert_eq!((s0.j, s0.gamma, s0.k), (0.0, 0.1, 1));
        let (dec, s1, diag) = c.step(&s0, &a).unwrap();
        assert_eq!(dec.row_index, 0);
        assert_eq!(s1.gamma, 1.0);
        assert_eq!(s1.j, 1.0);
        assert_eq!(s1.k, 2);
        assert_eq!(diag.delta_l, 0.5);
        assert!(diag.delta_l <= diag.drift_rhs);
    }

    #[test]
    fn fresh_state_picks_max_reward() {
        let c = gamma_controller();
        let a = TaskMatrix::from_pairs(&[(1.0, 0.0), (9.0, 40.0), (2.0, 30.0)]).unwrap();
        let (dec, _, _) = c.step(&c.initial_state(), &a).unwrap();
        assert_eq!(dec.row_index, 1);
    }

    #[test]
    fn state_json_round_trip_is_lossless() {
        let s = state(vec![0.1 + 0.2, 1.0 / 3.0], std::f64::consts::PI, 0.123456789012345678, );
        let back = ControllerState::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    // Exhaustive oracle for the row choice: first index attaining the minimum.
    fn brute_force_row(a: &TaskMatrix, s: &ControllerState, v: f64, w: f64) -> usize {
        let objs: Vec<f64> = a
            .rows()
            .iter()
            .map(|r| {
                let mut o = -v * r.reward + s.j * r.duration;
                for (q, y) in s.q.iter().zip(&r.penalties) {
                    o += q * (w * y);
                }
                o
            })
            .collect();
        let min = objs.iter().cloned().fold(f64::INFINITY, f64::min);
        objs.iter().position(|&o| o == min).unwrap()
    }

    // Golden-section minimization of the gamma objective; the objective is a
    // convex quadratic so the bracket shrinks onto the constrained minimizer.
    fn golden_gamma(per_unit: f64, prev: f64, alpha: f64, v: f64, lo: f64, hi: f64) -> f64 {
        let f = |g: f64| g * per_unit + 0.5 * prev * alpha * v * v * (g - prev).powi(2);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let x1 = b - phi * (b - a);
            let x2 = a + phi * (b - a);
            if f(x1) <= f(x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        0.5 * (a + b)
    }

    fn arb_case() -> impl Strategy<Value = (TaskMatrix, ControllerState, f64, f64, f64)> {
        let row = (1.0f64..10.0, 0.0f64..50.0, -3.0f64..2.0, -3.0f64..2.0)
            .prop_map(|(t, r, y1, y2)| TaskRow::new(t, r, vec![y1, y2]));
        (
            prop::collection::vec(row, 1..6),
            0.0f64..40.0,
            0.0f64..400.0,
            0.1f64..1.0,
            0.5f64..50.0,
            0.1f64..10.0,
            0.5f64..3.0,
            0u8..4,
        )
            .prop_map(|(mut rows, q1, j, gamma, v, alpha, w, dup)| {
                // duplicate rows to exercise exact ties
                if dup == 0 && rows.len() > 1 {
                    let last = rows.len() - 1;
                    rows[last] = rows[0].clone();
                }
                let a = TaskMatrix::new(rows).unwrap();
                let s = ControllerState { q: vec![q1, 0.5 * q1], j, gamma, k: 3 };
                (a, s, v, alpha, w)
            })
    }

    fn wide_bounds() -> Bounds {
        Bounds {
            t_min: 1.0,
            t_max: 10.0,
            r_max: 50.0,
            c: 5.0,
            y_min: vec![3.0, 3.0],
            y_max: vec![2.0, 2.0],
        }
    }

    proptest! {
        #[test]
        fn select_row_matches_enumeration((a, s, v, alpha, w) in arb_case()) {
            let c = Controller::new(wide_bounds(), AlgoParams::new(v, alpha, vec![100.0, 100.0]).with_weight(w)).unwrap();
            let d = c.select_row(&a, &s).unwrap();
            prop_assert_eq!(d.row_index, brute_force_row(&a, &s, v, w));
            prop_assert_eq!(&d, &Decision::from_row(&a, d.row_index));
        }

        #[test]
        fn update_gamma_matches_golden_section((a, s, v, alpha, w) in arb_case()) {
            let c = Controller::new(wide_bounds(), AlgoParams::new(v, alpha, vec![100.0, 100.0]).with_weight(w)).unwrap();
            let d = c.select_row(&a, &s).unwrap();
            let g = c.update_gamma(&s, &d);
            let per_unit = -v * d.r + s.j * d.t + s.q.iter().zip(&d.y).map(|(q, y)| q * w * y).sum::<f64>();
            let k = c.constants();
            let oracle = golden_gamma(per_unit, s.gamma, alpha, v, k.gamma_min, k.gamma_max);
            prop_assert!((g - oracle).abs() < 1e-6, "closed form {} vs search {}", g, oracle);
        }

        #[test]
        fn step_diagnostics_are_consistent((a, s, v, alpha, w) in arb_case()) {
            let c = Controller::new(wide_bounds(), AlgoParams::new(v, alpha, vec![1.0, 3.0]).with_weight(w)).unwrap();
            let k = c.constants().clone();
            let caps = c.params().caps();
            let s = ControllerState {
                q: s.q.iter().zip(&caps).map(|(q, cap)| q.min(*cap)).collect(),
                gamma: s.gamma.max(k.gamma_min),
                ..s
            };
            let (_, next, diag) = c.step(&s, &a).unwrap();
            prop_assert_eq!(diag.delta_l, diag.l_after - diag.l_before);
            prop_assert!(diag.delta_l <= diag.drift_rhs + 1e-9 * diag.drift_rhs.abs().max(1.0));
            prop_assert!(next.gamma >= k.gamma_min && next.gamma <= k.gamma_max);
            for (q, cap) in next.q.iter().zip(&caps) {
                prop_assert!(*q >= 0.0 && q <= cap);
            }
            prop_assert!(next.j >= 0.0);
        }
    }
}
