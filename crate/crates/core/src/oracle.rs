//! Exact optimal ratio, Slater margin and distance to the achievable
//! expectation set for finite-support task distributions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenarios::FiniteSupportSpec;
use crate::simplex::{LinearProgram, LpOutcome};

/// Width of the final bracket around the optimal ratio.
pub const THETA_TOL: f64 = 1e-10;

/// One-task expectation `(t, r, y)` of a stationary policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectationPoint {
    pub t: f64,
    pub r: f64,
    pub y: Vec<f64>,
}

impl ExpectationPoint {
    pub fn new(t: f64, r: f64, y: Vec<f64>) -> Self {
        Self { t, r, y }
    }

    pub fn ratio(&self) -> f64 {
        self.r / self.t
    }

    fn coords(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 + self.y.len());
        v.push(self.t);
        v.push(self.r);
        v.extend_from_slice(&self.y);
        v
    }
}

/// Per-atom probability vectors over that atom's rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryPolicy {
    pub probs: Vec<Vec<f64>>,
}

impl StationaryPolicy {
    pub fn new(spec: &FiniteSupportSpec, probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.len() != spec.atoms().len() {
            return Err(Error::DimensionMismatch {
                expected: spec.atoms().len(),
                found: probs.len(),
            });
        }
        for (p, atom) in probs.iter().zip(spec.atoms()) {
            if p.len() != atom.matrix.len() {
                return Err(Error::DimensionMismatch {
                    expected: atom.matrix.len(),
                    found: p.len(),
                });
            }
            let sum: f64 = p.iter().sum();
            if p.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParams(
                    "policy rows must be probability vectors".into(),
                ));
            }
        }
        Ok(Self { probs })
    }

    /// Deterministic policy choosing row `choice[a]` (0-based) in atom `a`.
    pub fn pure(spec: &FiniteSupportSpec, choice: &[usize]) -> Result<Self> {
        let probs = spec
            .atoms()
            .iter()
            .zip(choice)
            .map(|(atom, &c)| {
                let mut p = vec![0.0; atom.matrix.len()];
                *p.get_mut(c).ok_or(Error::RowOutOfBounds {
                    row: c,
                    reason: "policy choice beyond atom rows".into(),
                })? = 1.0;
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(spec, probs)
    }

    pub fn expectation(&self, spec: &FiniteSupportSpec) -> ExpectationPoint {
        let mut e = ExpectationPoint::new(0.0, 0.0, vec![0.0; spec.n()]);
        for (atom, probs) in spec.atoms().iter().zip(&self.probs) {
            for (row, &p) in atom.matrix.rows().iter().zip(probs) {
                let w = atom.probability * p;
                e.t += w * row.duration;
                e.r += w * row.reward;
                for (acc, y) in e.y.iter_mut().zip(&row.penalties) {
                    *acc += w * y;
                }
            }
        }
        e
    }

    fn from_lp(spec: &FiniteSupportSpec, x: &[f64]) -> Self {
        let mut offset = 0;
        let probs = spec
            .atoms()
            .iter()
            .map(|atom| {
                let xs = &x[offset..offset + atom.matrix.len()];
                offset += atom.matrix.len();
                let total: f64 = xs.iter().map(|v| v.max(0.0)).sum();
                if total > 0.0 {
                    xs.iter().map(|v| v.max(0.0) / total).collect()
                } else {
                    let mut p = vec![0.0; xs.len()];
                    p[0] = 1.0;
                    p
                }
            })
            .collect();
        Self { probs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    /// Optimal reward per unit time; NaN when infeasible.
    pub theta_star: f64,
    pub policy: Option<StationaryPolicy>,
    pub slater_s: f64,
    pub feasible: bool,
    pub expectation_point: Option<ExpectationPoint>,
    /// `(theta, value)` pairs evaluated while bracketing the root.
    #[serde(skip)]
    pub trajectory: Vec<(f64, f64)>,
}

/// Value of the parametric problem at one `theta` and a maximizing policy.
struct Evaluation {
    value: f64,
    policy: StationaryPolicy,
}

/// Finds the largest `theta` with nonnegative parametric value.
///
/// Each evaluation tightens both ends: the maximizing policy is feasible, so
/// its ratio bounds the optimum from below, and every policy satisfies
/// `E[R] - theta E[T] <= value` with `E[T] >= t_min`, bounding it from above.
/// Queries alternate between the current lower end and the bracket midpoint.
fn bracket_root(
    spec: &FiniteSupportSpec,
    hi: f64,
    mut eval: impl FnMut(f64) -> Result<Evaluation>,
) -> Result<(StationaryPolicy, Vec<(f64, f64)>)> {
    let t_min = spec.bounds().t_min;
    let mut lo = 0.0;
    let mut hi = hi;
    let mut best: Option<(f64, StationaryPolicy)> = None;
    let mut trajectory = Vec::new();
    let mut query = 0.0;
    for _ in 0..500 {
        let width = hi - lo;
        let e = eval(query)?;
        trajectory.push((query, e.value));
        let point = e.policy.expectation(spec);
        let ratio = point.ratio();
        if best.as_ref().map_or(true, |(r, _)| ratio > *r) {
            best = Some((ratio, e.policy));
        }
        lo = lo.max(ratio);
        hi = hi.min(if e.value >= 0.0 { query + e.value / t_min } else { query });
        if hi < lo {
            hi = lo;
        }
        if hi - lo <= THETA_TOL {
            break;
        }
        query = if hi - lo <= 0.5 * width && query != lo { lo } else { 0.5 * (lo + hi) };
    }
    let (_, policy) = best.expect("at least one evaluation");
    Ok((policy, trajectory))
}

/// Asserts that the recorded parametric values are nonincreasing in theta.
fn check_monotone(trajectory: &[(f64, f64)], tol: f64) {
    let mut sorted = trajectory.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        assert!(
            w[1].1 <= w[0].1 + tol,
            "parametric value increased from {:?} to {:?}",
            w[0],
            w[1]
        );
    }
}

fn finish(spec: &FiniteSupportSpec, policy: StationaryPolicy, trajectory: Vec<(f64, f64)>, slater_s: f64) -> OracleResult {
    let point = policy.expectation(spec);
    OracleResult {
        theta_star: point.ratio(),
        policy: Some(policy),
        slater_s,
        feasible: true,
        expectation_point: Some(point),
        trajectory,
    }
}

/// Optimal ratio without penalty constraints.
pub fn theta_star_unconstrained(spec: &FiniteSupportSpec) -> Result<OracleResult> {
    if spec.n() != 0 {
        return Err(Error::Unsupported(
            "unconstrained oracle requires n = 0; use theta_star_constrained".into(),
        ));
    }
    let b = spec.bounds();
    let (policy, trajectory) = bracket_root(spec, b.r_max / b.t_min, |theta| {
        let mut value = 0.0;
        let mut choice = Vec::with_capacity(spec.atoms().len());
        for atom in spec.atoms() {
            let (i, best) = atom
                .matrix
                .rows()
                .iter()
                .map(|r| r.reward - theta * r.duration)
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
            value += atom.probability * best;
            choice.push(i);
        }
        Ok(Evaluation {
            value,
            policy: StationaryPolicy::pure(spec, &choice)?,
        })
    })?;
    check_monotone(&trajectory, 0.0);
    Ok(finish(spec, policy, trajectory, f64::INFINITY))
}

/// Linear program over joint variables `x(a, r) = p_a pi_a(r)`.
fn policy_lp(spec: &FiniteSupportSpec, objective: impl Fn(f64, f64) -> f64, extra_vars: usize) -> LinearProgram {
    let rows: Vec<_> = spec.atoms().iter().flat_map(|a| a.matrix.rows()).collect();
    let nv = rows.len() + extra_vars;
    let mut c: Vec<f64> = rows.iter().map(|r| objective(r.duration, r.reward)).collect();
    c.resize(nv, 0.0);
    let mut lp = LinearProgram::new(c);
    let mut offset = 0;
    for atom in spec.atoms() {
        let mut a = vec![0.0; nv];
        a[offset..offset + atom.matrix.len()].fill(1.0);
        lp.add_eq(a, atom.probability);
        offset += atom.matrix.len();
    }
    for i in 0..spec.n() {
        let mut a: Vec<f64> = rows.iter().map(|r| r.penalties[i]).collect();
        a.resize(nv, 0.0);
        lp.add_le(a, 0.0);
    }
    lp
}

/// Optimal ratio subject to `E[Y_i] <= 0` for every penalty.
pub fn theta_star_constrained(spec: &FiniteSupportSpec) -> Result<OracleResult> {
    if spec.n() == 0 {
        return Err(Error::Unsupported(
            "constrained oracle requires n >= 1; use theta_star_unconstrained".into(),
        ));
    }
    let slater_s = slater_margin(spec)?;
    if let LpOutcome::Infeasible = policy_lp(spec, |_, _| 0.0, 0).solve()? {
        return Ok(OracleResult {
            theta_star: f64::NAN,
            policy: None,
            slater_s,
            feasible: false,
            expectation_point: None,
            trajectory: Vec::new(),
        });
    }
    let b = spec.bounds();
    let (policy, trajectory) = bracket_root(spec, b.r_max / b.t_min, |theta| {
        match policy_lp(spec, |t, r| r - theta * t, 0).solve()? {
            LpOutcome::Optimal { x, value } => Ok(Evaluation {
                value,
                policy: StationaryPolicy::from_lp(spec, &x),
            }),
            other => Err(Error::Lp(format!("parametric program at theta={theta}: {other:?}"))),
        }
    })?;
    check_monotone(&trajectory, 1e-9 * (1.0 + b.r_max));
    Ok(finish(spec, policy, trajectory, slater_s))
}

/// Dispatches on the number of penalty processes.
pub fn theta_star(spec: &FiniteSupportSpec) -> Result<OracleResult> {
    if spec.n() == 0 {
        theta_star_unconstrained(spec)
    } else {
        theta_star_constrained(spec)
    }
}

/// Largest `s` such that some policy has `E[Y_i] <= -s` for all `i`;
/// `+inf` when there are no penalties.
pub fn slater_margin(spec: &FiniteSupportSpec) -> Result<f64> {
    if spec.n() == 0 {
        return Ok(f64::INFINITY);
    }
    let n_rows: usize = spec.atoms().iter().map(|a| a.matrix.len()).sum();
    // s = s_plus - s_minus, appended after the policy variables
    let mut lp = policy_lp(spec, |_, _| 0.0, 2);
    lp.objective[n_rows] = 1.0;
    lp.objective[n_rows + 1] = -1.0;
    for (a, _) in lp.le.iter_mut() {
        a[n_rows] = 1.0;
        a[n_rows + 1] = -1.0;
    }
    match lp.solve()? {
        LpOutcome::Optimal { value, .. } => Ok(value),
        other => Err(Error::Lp(format!("slater program: {other:?}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-8,
        }
    }
}

/// Euclidean distance from `point` to the closed set of one-task expectations
/// achievable by stationary policies.
pub fn distance_to_gamma(point: &ExpectationPoint, spec: &FiniteSupportSpec) -> Result<f64> {
    distance_to_gamma_with(point, spec, ProjectionOptions::default())
}

/// Block pairwise Frank-Wolfe with exact line search: each iteration moves
/// mass inside the single atom with the largest pairwise gap.
pub fn distance_to_gamma_with(
    point: &ExpectationPoint,
    spec: &FiniteSupportSpec,
    opts: ProjectionOptions,
) -> Result<f64> {
    if point.y.len() != spec.n() {
        return Err(Error::DimensionMismatch {
            expected: spec.n(),
            found: point.y.len(),
        });
    }
    let z = point.coords();
    let vertices: Vec<Vec<Vec<f64>>> = spec
        .atoms()
        .iter()
        .map(|a| {
            a.matrix
                .rows()
                .iter()
                .map(|r| ExpectationPoint::new(r.duration, r.reward, r.penalties.clone()).coords())
                .collect()
        })
        .collect();
    let mut pi: Vec<Vec<f64>> = vertices
        .iter()
        .map(|v| {
            let mut p = vec![0.0; v.len()];
            p[0] = 1.0;
            p
        })
        .collect();
    let mut e = StationaryPolicy { probs: pi.clone() }.expectation(spec).coords();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    for _ in 0..opts.max_iter {
        let grad: Vec<f64> = e.iter().zip(&z).map(|(a, b)| a - b).collect();
        let dist = dot(&grad, &grad).sqrt();
        if dist <= opts.tol {
            return Ok(dist);
        }
        let mut fw_gap = 0.0;
        let mut best: Option<(usize, usize, usize, f64)> = None;
        for (a, (verts, p)) in vertices.iter().zip(&pi).enumerate() {
            let scores: Vec<f64> = verts.iter().map(|v| dot(v, &grad)).collect();
            let (s, s_score) = scores
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, x)| if x < acc.1 { (i, x) } else { acc });
            let (w, w_score) = scores
                .iter()
                .copied()
                .enumerate()
                .filter(|&(i, _)| p[i] > 0.0)
                .fold((0, f64::NEG_INFINITY), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc });
            let prob = spec.atoms()[a].probability;
            let current: f64 = scores.iter().zip(p).map(|(x, q)| x * q).sum();
            fw_gap += prob * (current - s_score);
            let pair_gap = prob * (w_score - s_score);
            if best.map_or(true, |b| pair_gap > b.3) {
                best = Some((a, s, w, pair_gap));
            }
        }
        if fw_gap <= opts.tol * dist {
            return Ok(dist);
        }
        let (a, s, w, pair_gap) = best.expect("spec has atoms");
        if pair_gap <= 0.0 || s == w {
            return Ok(dist);
        }
        let prob = spec.atoms()[a].probability;
        let d: Vec<f64> = vertices[a][s]
            .iter()
            .zip(&vertices[a][w])
            .map(|(x, y)| prob * (x - y))
            .collect();
        let dd = dot(&d, &d);
        if dd == 0.0 {
            return Ok(dist);
        }
        let step = (-dot(&grad, &d) / dd).clamp(0.0, pi[a][w]);
        pi[a][w] -= step;
        pi[a][s] += step;
        e.iter_mut().zip(&d).for_each(|(x, y)| *x += step * y);
    }
    let grad: Vec<f64> = e.iter().zip(&z).map(|(a, b)| a - b).collect();
    Ok(dot(&grad, &grad).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(atoms: &[(f64, Vec<Vec<f64>>)]) -> FiniteSupportSpec {
        FiniteSupportSpec::from_rows(atoms).unwrap()
    }

    #[test]
    fn unconstrained_examples() {
        let s = spec(&[(1.0, vec![vec![1.0, 0.0], vec![2.0, 4.0]])]);
        let r = theta_star_unconstrained(&s).unwrap();
        assert!((r.theta_star - 2.0).abs() < 1e-8);
        assert_eq!(r.policy.unwrap().probs, vec![vec![0.0, 1.0]]);
        assert_eq!(r.slater_s, f64::INFINITY);

        let s = spec(&[(1.0, vec![vec![2.0, 6.0]])]);
        assert!((theta_star_unconstrained(&s).unwrap().theta_star - 3.0).abs() < 1e-8);

        let s = spec(&[
            (0.5, vec![vec![1.0, 10.0]]),
            (0.5, vec![vec![1.0, 0.0], vec![10.0, 0.0]]),
        ]);
        let r = theta_star_unconstrained(&s).unwrap();
        assert!((r.theta_star - 5.0).abs() < 1e-8);
        assert_eq!(r.policy.unwrap().probs[1], vec![1.0, 0.0]);
    }

    #[test]
    fn constrained_examples() {
        let s = spec(&[(1.0, vec![vec![1.0, 10.0, 1.0], vec![1.0, 0.0, -1.0]])]);
        let r = theta_star_constrained(&s).unwrap();
        assert!(r.feasible);
        assert!((r.theta_star - 5.0).abs() < 1e-8);
        let p = &r.policy.unwrap().probs[0];
        assert!((p[0] - 0.5).abs() < 1e-8);
        assert!((r.slater_s - 1.0).abs() < 1e-12);

        let s = spec(&[(1.0, vec![vec![1.0, 10.0, 1.0], vec![2.0, 0.0, 1.0]])]);
        let r = theta_star_constrained(&s).unwrap();
        assert!(!r.feasible);
        assert!(r.theta_star.is_nan());
        assert!(r.slater_s < 0.0);
    }

    #[test]
    fn slack_constraints_match_unconstrained() {
        let plain = spec(&[
            (0.3, vec![vec![1.0, 2.0], vec![3.0, 9.0]]),
            (0.7, vec![vec![1.0, 0.0], vec![4.0, 5.0], vec![2.0, 3.0]]),
        ]);
        let slack = spec(&[
            (0.3, vec![vec![1.0, 2.0, -1.0], vec![3.0, 9.0, -1.0]]),
            (0.7, vec![vec![1.0, 0.0, -1.0], vec![4.0, 5.0, -1.0], vec![2.0, 3.0, -1.0]]),
        ]);
        let a = theta_star_unconstrained(&plain).unwrap().theta_star;
        let b = theta_star_constrained(&slack).unwrap().theta_star;
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn slater_examples() {
        let s = spec(&[(1.0, vec![vec![1.0, 10.0, 1.0], vec![1.0, 0.0, -1.0]])]);
        assert!((slater_margin(&s).unwrap() - 1.0).abs() < 1e-12);
        let s = spec(&[(1.0, vec![vec![1.0, 10.0, 0.0], vec![1.0, 0.0, 0.0]])]);
        assert!(slater_margin(&s).unwrap().abs() < 1e-12);
        let s = spec(&[(1.0, vec![vec![1.0, 1.0]])]);
        assert_eq!(slater_margin(&s).unwrap(), f64::INFINITY);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let s = spec(&[(1.0, vec![vec![1.0, 1.0, 0.0]])]);
        assert!(theta_star_unconstrained(&s).is_err());
        let s = spec(&[(1.0, vec![vec![1.0, 1.0]])]);
        assert!(theta_star_constrained(&s).is_err());
    }

    #[test]
    fn distance_examples() {
        let s = spec(&[(1.0, vec![vec![2.0, 6.0]])]);
        let d = distance_to_gamma(&ExpectationPoint::new(2.0, 7.0, vec![]), &s).unwrap();
        assert!((d - 1.0).abs() < 1e-8);

        let s = spec(&[
            (0.4, vec![vec![1.0, 2.0, 1.0], vec![3.0, 9.0, -2.0]]),
            (0.6, vec![vec![1.0, 0.0, 0.5], vec![4.0, 5.0, -1.0], vec![2.0, 3.0, 0.0]]),
        ]);
        let policy = StationaryPolicy::new(&s, vec![vec![0.25, 0.75], vec![0.2, 0.3, 0.5]]).unwrap();
        let d = distance_to_gamma(&policy.expectation(&s), &s).unwrap();
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn distance_outside_segment() {
        // Gamma is the segment from (1, 0) to (1, 2); (0, 1) is at distance 1
        let s = spec(&[(1.0, vec![vec![1.0, 0.0], vec![1.0, 2.0]])]);
        let d = distance_to_gamma(&ExpectationPoint::new(0.0, 1.0, vec![]), &s).unwrap();
        assert!((d - 1.0).abs() < 1e-8);
        // beyond an endpoint the nearest point is the vertex
        let d = distance_to_gamma(&ExpectationPoint::new(1.0, 5.0, vec![]), &s).unwrap();
        assert!((d - 3.0).abs() < 1e-8);
    }

    #[test]
    fn policy_validation() {
        let s = spec(&[(1.0, vec![vec![1.0, 0.0], vec![1.0, 2.0]])]);
        assert!(StationaryPolicy::new(&s, vec![vec![0.5, 0.4]]).is_err());
        assert!(StationaryPolicy::new(&s, vec![vec![1.0]]).is_err());
        assert!(StationaryPolicy::pure(&s, &[2]).is_err());
    }
}
