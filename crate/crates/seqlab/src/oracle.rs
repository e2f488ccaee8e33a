//! Exact optimal truncated sequential tests on two-letter models, and
//! exact operating characteristics by path enumeration.
//!
//! For a two-letter observation alphabet every test statistic in this crate
//! is a function of `(n, k)` with k the count of "up" letters, so backward
//! induction over that grid computes exact optimal policies:
//!
//! - [`optimal_bayes_test`]: minimizes
//!   `sum_i prior_i (loss_i * P_i(wrong) + cost * E_i[T])` for two simple
//!   hypotheses, truncated at a horizon.
//! - [`optimal_kw_test`]: minimizes `E_G[T] + v0 P_0(d=1) + v1 P_1(d=0)`
//!   for an intermediate sampling measure G; the one-sided penalties are
//!   Lagrange multipliers for the error constraints, and
//!   [`optimal_kw_matched`] searches them to hit target error levels.
//!
//! Operating characteristics of the computed policies (and of any
//! deterministic test, via [`enumerate_test`]) come from exact forward
//! probability propagation, no simulation involved.

use crate::error::{Error, Result};
use crate::model::{Density, SimpleModel};

// ---------------------------------------------------------------------------
// Two-letter problems
// ---------------------------------------------------------------------------

/// Observation values of a two-letter alphabet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPointSupport {
    pub up: f64,
    pub dn: f64,
}

/// Probability of the "up" letter under each hypothesis of a two-letter
/// model (Bernoulli `up=1, dn=0` or an explicit two-point alphabet).
pub fn two_point_up_probs(model: &SimpleModel) -> Result<(TwoPointSupport, Vec<f64>)> {
    let mut support = None;
    let mut ups = Vec::with_capacity(model.len());
    for d in model.densities() {
        match d {
            Density::Bernoulli { p } => {
                support = Some(TwoPointSupport { up: 1.0, dn: 0.0 });
                ups.push(*p);
            }
            Density::Discrete { support: s, probs } if s.len() == 2 => {
                support = Some(TwoPointSupport { up: s[0], dn: s[1] });
                ups.push(probs[0]);
            }
            other => {
                return Err(Error::Precondition(format!(
                    "exact grid methods need a two-letter alphabet, got {other:?}"
                )))
            }
        }
    }
    Ok((support.unwrap(), ups))
}

/// Action of the optimal policy at a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Stop0,
    Stop1,
    Continue,
}

/// Hard cap on backward-induction horizons.
pub const MAX_HORIZON: usize = 200;

/// Value function and policy on the `(n, k)` grid, with exact operating
/// characteristics of the policy.
#[derive(Debug, Clone)]
pub struct DpGrid {
    pub horizon: usize,
    /// `values[n][k]`, n = 0..=horizon, k = 0..=n.
    pub values: Vec<Vec<f64>>,
    pub policy: Vec<Vec<Action>>,
    pub oc: DpOc,
}

/// Exact operating characteristics from forward propagation, one entry per
/// measure (the order matches the problem: hypotheses first, then G where
/// present).
#[derive(Debug, Clone)]
pub struct DpOc {
    /// P_0(d=1).
    pub alpha0: f64,
    /// P_1(d=0).
    pub alpha1: f64,
    /// E[T] per measure.
    pub ess: Vec<f64>,
    /// P(T = horizon forced) per measure.
    pub forced_stop_prob: Vec<f64>,
}

impl DpGrid {
    /// Continuation interval in the raw statistic `S_n = k*up + (n-k)*dn`
    /// per layer; `None` when the layer has no continuation states.
    pub fn continuation_boundary(&self, support: TwoPointSupport) -> Vec<(usize, Option<(f64, f64)>)> {
        let mut out = Vec::with_capacity(self.horizon + 1);
        for (n, row) in self.policy.iter().enumerate() {
            let ks: Vec<usize> = (0..row.len()).filter(|&k| row[k] == Action::Continue).collect();
            let s_of = |k: usize| k as f64 * support.up + (n - k) as f64 * support.dn;
            let entry = if ks.is_empty() {
                None
            } else {
                let lo = ks.iter().map(|&k| s_of(k)).fold(f64::INFINITY, f64::min);
                let hi = ks.iter().map(|&k| s_of(k)).fold(f64::NEG_INFINITY, f64::max);
                Some((lo, hi))
            };
            out.push((n, entry));
        }
        out
    }

    /// True when every layer's continuation set is contiguous in k.
    pub fn continuation_is_interval(&self) -> bool {
        self.policy.iter().all(|row| {
            let ks: Vec<usize> = (0..row.len()).filter(|&k| row[k] == Action::Continue).collect();
            ks.windows(2).all(|w| w[1] == w[0] + 1)
        })
    }

    /// Largest Bellman residual over all nodes: how far each stored value
    /// sits from the recomputed minimum of its actions.
    pub fn max_bellman_residual(&self, recompute: impl Fn(usize, usize) -> f64) -> f64 {
        let mut worst = 0.0f64;
        for n in 0..self.values.len() {
            for k in 0..self.values[n].len() {
                worst = worst.max((self.values[n][k] - recompute(n, k)).abs());
            }
        }
        worst
    }
}

fn check_horizon(h: usize) -> Result<()> {
    if h == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    if h > MAX_HORIZON {
        return Err(Error::Capacity(format!("horizon {h} exceeds the grid cap {MAX_HORIZON}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Bayes-optimal truncated test
// ---------------------------------------------------------------------------

/// Two-hypothesis Bayes problem on a two-letter alphabet.
#[derive(Debug, Clone, Copy)]
pub struct BayesProblem {
    pub p0_up: f64,
    pub p1_up: f64,
    /// Prior probability of H_0.
    pub prior_p0: f64,
    /// Loss of accepting H_1 when H_0 is true.
    pub loss0: f64,
    /// Loss of accepting H_0 when H_1 is true.
    pub loss1: f64,
    /// Cost per observation.
    pub cost: f64,
    pub horizon: usize,
}

/// Exact Bayes-optimal truncated test by backward induction.
///
/// Decisions are allowed from n = 1 on (a test takes at least one
/// observation); at the horizon the better terminal decision is forced.
pub fn optimal_bayes_test(p: &BayesProblem) -> Result<DpGrid> {
    check_horizon(p.horizon)?;
    for v in [p.p0_up, p.p1_up, p.prior_p0] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Precondition(format!("probabilities must sit in (0,1), got {v}")));
        }
    }
    if p.loss0 <= 0.0 || p.loss1 <= 0.0 || p.cost <= 0.0 {
        return Err(Error::Precondition("losses and cost must be positive".into()));
    }
    let h = p.horizon;
    // posterior log-odds of H_1 at (n, k)
    let base = ((1.0 - p.prior_p0) / p.prior_p0).ln();
    let zu = (p.p1_up / p.p0_up).ln();
    let zd = ((1.0 - p.p1_up) / (1.0 - p.p0_up)).ln();
    let post1 = |n: usize, k: usize| -> f64 {
        let lodds = base + k as f64 * zu + (n - k) as f64 * zd;
        1.0 / (1.0 + (-lodds).exp())
    };
    let mut values: Vec<Vec<f64>> = (0..=h).map(|n| vec![0.0; n + 1]).collect();
    let mut policy: Vec<Vec<Action>> = (0..=h).map(|n| vec![Action::Continue; n + 1]).collect();
    for n in (0..=h).rev() {
        for k in 0..=n {
            let pi1 = post1(n, k);
            let stop0 = p.loss1 * pi1;
            let stop1 = p.loss0 * (1.0 - pi1);
            let (stop_val, stop_act) =
                if stop0 <= stop1 { (stop0, Action::Stop0) } else { (stop1, Action::Stop1) };
            if n == h {
                values[n][k] = stop_val;
                policy[n][k] = stop_act;
                continue;
            }
            let pu = (1.0 - pi1) * p.p0_up + pi1 * p.p1_up;
            let cont = p.cost + pu * values[n + 1][k + 1] + (1.0 - pu) * values[n + 1][k];
            if n == 0 || cont < stop_val {
                values[n][k] = cont;
                policy[n][k] = Action::Continue;
            } else {
                values[n][k] = stop_val;
                policy[n][k] = stop_act;
            }
        }
    }
    let oc = forward_oc_policy(&policy, &[p.p0_up, p.p1_up], h);
    Ok(DpGrid { horizon: h, values, policy, oc })
}

/// Exact Bayes risk of the policy recomputed by forward propagation; must
/// match `values[0][0]`.
pub fn bayes_risk_forward(p: &BayesProblem, grid: &DpGrid) -> f64 {
    let oc = &grid.oc;
    p.prior_p0 * (p.loss0 * oc.alpha0 + p.cost * oc.ess[0])
        + (1.0 - p.prior_p0) * (p.loss1 * oc.alpha1 + p.cost * oc.ess[1])
}

// ---------------------------------------------------------------------------
// Modified minimax (intermediate-measure) problem
// ---------------------------------------------------------------------------

/// Intermediate-measure problem: sampling under G, penalized errors under
/// the two hypotheses.
#[derive(Debug, Clone, Copy)]
pub struct KwProblem {
    pub p0_up: f64,
    pub p1_up: f64,
    pub g_up: f64,
    pub horizon: usize,
}

/// Exact minimizer of `E_G[T] + v0 P_0(d=1) + v1 P_1(d=0)` by backward
/// induction. The OC order is `[P_0, P_1, G]`.
pub fn optimal_kw_test(p: &KwProblem, v0: f64, v1: f64) -> Result<DpGrid> {
    check_horizon(p.horizon)?;
    for v in [p.p0_up, p.p1_up, p.g_up] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Precondition(format!("probabilities must sit in (0,1), got {v}")));
        }
    }
    if v0 < 0.0 || v1 < 0.0 {
        return Err(Error::Precondition("multipliers must be nonnegative".into()));
    }
    let h = p.horizon;
    // log likelihood-ratio exponents of P_i against G along a path
    let l0u = (p.p0_up / p.g_up).ln();
    let l0d = ((1.0 - p.p0_up) / (1.0 - p.g_up)).ln();
    let l1u = (p.p1_up / p.g_up).ln();
    let l1d = ((1.0 - p.p1_up) / (1.0 - p.g_up)).ln();
    // soft clamp keeps pathological exponents inside f64 range
    let weight = |v: f64, e: f64| -> f64 {
        if v == 0.0 {
            0.0
        } else {
            (v.ln() + e).min(600.0).exp()
        }
    };
    let mut values: Vec<Vec<f64>> = (0..=h).map(|n| vec![0.0; n + 1]).collect();
    let mut policy: Vec<Vec<Action>> = (0..=h).map(|n| vec![Action::Continue; n + 1]).collect();
    for n in (0..=h).rev() {
        for k in 0..=n {
            let e0 = k as f64 * l0u + (n - k) as f64 * l0d;
            let e1 = k as f64 * l1u + (n - k) as f64 * l1d;
            // deciding 1 risks the H_0 penalty, deciding 0 the H_1 penalty
            let stop1 = weight(v0, e0);
            let stop0 = weight(v1, e1);
            let (stop_val, stop_act) =
                if stop0 <= stop1 { (stop0, Action::Stop0) } else { (stop1, Action::Stop1) };
            if n == h {
                values[n][k] = stop_val;
                policy[n][k] = stop_act;
                continue;
            }
            let cont = 1.0 + p.g_up * values[n + 1][k + 1] + (1.0 - p.g_up) * values[n + 1][k];
            if n == 0 || cont < stop_val {
                values[n][k] = cont;
                policy[n][k] = Action::Continue;
            } else {
                values[n][k] = stop_val;
                policy[n][k] = stop_act;
            }
        }
    }
    let oc = forward_oc_policy(&policy, &[p.p0_up, p.p1_up, p.g_up], h);
    Ok(DpGrid { horizon: h, values, policy, oc })
}

/// Multiplier-matched optimal test: nested bisection (v0 outer, v1 inner)
/// drives the achieved error probabilities to the targets.
#[derive(Debug, Clone)]
pub struct KwMatched {
    pub grid: DpGrid,
    pub v0: f64,
    pub v1: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    /// E_G[T] of the matched optimal test.
    pub ess_g: f64,
}

/// Searches `(v0, v1)` so both achieved errors land within `rel_tol`
/// (relative) of their targets. Each error is monotone decreasing in its
/// own multiplier, which the nested bisection exploits; because the
/// achievable error levels form a step function of the multipliers, every
/// evaluated pair is remembered and the best one wins.
pub fn optimal_kw_matched(
    p: &KwProblem,
    target_alpha0: f64,
    target_alpha1: f64,
    rel_tol: f64,
    max_outer: usize,
) -> Result<KwMatched> {
    if !(target_alpha0 > 0.0 && target_alpha0 < 0.5 && target_alpha1 > 0.0 && target_alpha1 < 0.5) {
        return Err(Error::Precondition("targets must sit in (0, 0.5)".into()));
    }
    let dev = |a: f64, t: f64| {
        if a <= 0.0 {
            f64::INFINITY
        } else {
            (a / t).ln().abs()
        }
    };
    let mut best: Option<(f64, KwMatched)> = None;
    let consider = |v0: f64, v1: f64, grid: &DpGrid, best: &mut Option<(f64, KwMatched)>| {
        let worst = dev(grid.oc.alpha0, target_alpha0).max(dev(grid.oc.alpha1, target_alpha1));
        if best.as_ref().map_or(true, |(w, _)| worst < *w) {
            *best = Some((
                worst,
                KwMatched {
                    grid: grid.clone(),
                    v0,
                    v1,
                    alpha0: grid.oc.alpha0,
                    alpha1: grid.oc.alpha1,
                    ess_g: grid.oc.ess[2],
                },
            ));
        }
    };
    // inner pass: drive alpha1 toward its target at fixed v0, returning the
    // closest grid seen
    let inner = |v0: f64, best: &mut Option<(f64, KwMatched)>| -> Result<DpGrid> {
        let (mut lo, mut hi) = (1.0f64.ln(), 1e12f64.ln());
        let mut closest: Option<(f64, DpGrid)> = None;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let grid = optimal_kw_test(p, v0, mid.exp())?;
            consider(v0, mid.exp(), &grid, best);
            let a1 = grid.oc.alpha1;
            let d = dev(a1, target_alpha1);
            if closest.as_ref().map_or(true, |(cd, _)| d < *cd) {
                closest = Some((d, grid.clone()));
            }
            if d <= rel_tol {
                break;
            }
            if a1 > target_alpha1 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(closest.expect("at least one inner evaluation").1)
    };
    let (mut lo, mut hi) = (1.0f64.ln(), 1e12f64.ln());
    for _ in 0..max_outer {
        let mid = 0.5 * (lo + hi);
        let v0 = mid.exp();
        let grid = inner(v0, &mut best)?;
        if let Some((w, _)) = &best {
            if *w <= rel_tol {
                break;
            }
        }
        if grid.oc.alpha0 > target_alpha0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (worst, matched) = best.expect("at least one evaluation");
    // ln-scale deviation bounds the relative one for small tolerances
    if worst <= rel_tol {
        Ok(matched)
    } else {
        Err(Error::Calibration(format!(
            "multiplier search missed the targets: best achieved alpha0={:.6}, alpha1={:.6} \
             for targets ({target_alpha0}, {target_alpha1}) at rel tol {rel_tol}",
            matched.alpha0, matched.alpha1
        )))
    }
}

/// Forward propagation of a `(n, k)` policy under each measure's
/// up-probability. Exact (no simulation).
fn forward_oc_policy(policy: &[Vec<Action>], p_up: &[f64], horizon: usize) -> DpOc {
    let n_meas = p_up.len();
    let mut ess = vec![0.0; n_meas];
    let mut forced = vec![0.0; n_meas];
    let mut alpha0 = 0.0;
    let mut alpha1 = 0.0;
    for (m, &pu) in p_up.iter().enumerate() {
        let mut mass = vec![1.0f64]; // running probability at layer n over k
        for n in 1..=horizon {
            let mut next = vec![0.0f64; n + 1];
            for (k, &w) in mass.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                next[k + 1] += w * pu;
                next[k] += w * (1.0 - pu);
            }
            for (k, w) in next.iter_mut().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                match policy[n][k] {
                    Action::Continue => {}
                    act => {
                        ess[m] += *w * n as f64;
                        if n == horizon {
                            forced[m] += *w;
                        }
                        let d = usize::from(act == Action::Stop1);
                        if m == 0 && d == 1 {
                            alpha0 += *w;
                        }
                        if m == 1 && d == 0 {
                            alpha1 += *w;
                        }
                        *w = 0.0;
                    }
                }
            }
            // horizon layers always stop, so no mass survives the last loop
            mass = next;
        }
    }
    DpOc { alpha0, alpha1, ess, forced_stop_prob: forced }
}

// ---------------------------------------------------------------------------
// Exact operating characteristics of arbitrary tests
// ---------------------------------------------------------------------------

/// A sequential test driven one observation at a time with cloneable state,
/// so exact path enumeration can branch.
pub trait PathTest {
    type State: Clone;
    fn initial(&self) -> Self::State;
    /// Absorbs one observation; `Some(d)` stops and accepts hypothesis d.
    fn absorb(&self, state: &mut Self::State, x: f64) -> Option<usize>;
}

/// Closure-backed [`PathTest`].
pub struct FnPathTest<S: Clone, F: Fn(&mut S, f64) -> Option<usize>> {
    pub init: S,
    pub step: F,
}

impl<S: Clone, F: Fn(&mut S, f64) -> Option<usize>> PathTest for FnPathTest<S, F> {
    type State = S;
    fn initial(&self) -> S {
        self.init.clone()
    }
    fn absorb(&self, state: &mut S, x: f64) -> Option<usize> {
        (self.step)(state, x)
    }
}

/// Exact decision probabilities and expected sample sizes of a
/// deterministic test on a finite-alphabet model, by full path enumeration
/// up to `horizon`. Paths alive at the horizon count toward `trunc_prob`
/// and contribute `horizon` to the ESS.
#[derive(Debug, Clone)]
pub struct ExactOc {
    /// `decision_prob[measure][decision]`.
    pub decision_prob: Vec<Vec<f64>>,
    pub ess: Vec<f64>,
    pub trunc_prob: Vec<f64>,
}

/// Path cap for the enumeration.
pub const MAX_PATHS: f64 = 1e7;

pub fn enumerate_test<T: PathTest>(
    model: &SimpleModel,
    test: &T,
    horizon: usize,
) -> Result<ExactOc> {
    let (letters, probs) = finite_alphabet(model)?;
    let n_paths = (letters.len() as f64).powi(horizon as i32);
    if n_paths > MAX_PATHS {
        return Err(Error::Capacity(format!(
            "{} letters to depth {horizon} is {n_paths:.2e} paths (cap {MAX_PATHS:.0e})",
            letters.len()
        )));
    }
    let n_meas = model.len();
    let max_decision = n_meas; // decisions index hypotheses
    let mut oc = ExactOc {
        decision_prob: vec![vec![0.0; max_decision]; n_meas],
        ess: vec![0.0; n_meas],
        trunc_prob: vec![0.0; n_meas],
    };
    let mut mass: Vec<f64> = vec![1.0; n_meas];
    let state = test.initial();
    dfs(test, &letters, &probs, state, 0, horizon, &mut mass, &mut oc);
    Ok(oc)
}

#[allow(clippy::too_many_arguments)]
fn dfs<T: PathTest>(
    test: &T,
    letters: &[f64],
    probs: &[Vec<f64>],
    state: T::State,
    depth: usize,
    horizon: usize,
    mass: &mut Vec<f64>,
    oc: &mut ExactOc,
) {
    if depth == horizon {
        for m in 0..mass.len() {
            oc.trunc_prob[m] += mass[m];
            oc.ess[m] += mass[m] * horizon as f64;
        }
        return;
    }
    for (li, &x) in letters.iter().enumerate() {
        let mut st = state.clone();
        let saved = mass.clone();
        for (m, w) in mass.iter_mut().enumerate() {
            *w *= probs[m][li];
        }
        match test.absorb(&mut st, x) {
            Some(d) => {
                for m in 0..mass.len() {
                    oc.decision_prob[m][d] += mass[m];
                    oc.ess[m] += mass[m] * (depth + 1) as f64;
                }
            }
            None => dfs(test, letters, probs, st, depth + 1, horizon, mass, oc),
        }
        *mass = saved;
    }
}

fn finite_alphabet(model: &SimpleModel) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut letters: Option<Vec<f64>> = None;
    let mut probs = Vec::new();
    for d in model.densities() {
        match d {
            Density::Bernoulli { p } => {
                letters = Some(vec![1.0, 0.0]);
                probs.push(vec![*p, 1.0 - *p]);
            }
            Density::Discrete { support, probs: pr } => {
                letters = Some(support.clone());
                probs.push(pr.clone());
            }
            other => {
                return Err(Error::Precondition(format!(
                    "path enumeration needs a finite alphabet, got {other:?}"
                )))
            }
        }
    }
    Ok((letters.unwrap(), probs))
}

/// Exact OC of a stop rule expressed on the `(n, k)` grid of a two-point
/// model: `stop(n, k)` returns the accepted hypothesis or `None`.
pub fn forward_oc_two_point(
    p_up: &[f64],
    stop: impl Fn(usize, usize) -> Option<usize>,
    horizon: usize,
) -> ExactOc {
    let n_meas = p_up.len();
    let mut oc = ExactOc {
        decision_prob: vec![vec![0.0; 2]; n_meas],
        ess: vec![0.0; n_meas],
        trunc_prob: vec![0.0; n_meas],
    };
    for (m, &pu) in p_up.iter().enumerate() {
        let mut mass = vec![1.0f64];
        for n in 1..=horizon {
            let mut next = vec![0.0f64; n + 1];
            for (k, &w) in mass.iter().enumerate() {
                if w > 0.0 {
                    next[k + 1] += w * pu;
                    next[k] += w * (1.0 - pu);
                }
            }
            for (k, w) in next.iter_mut().enumerate() {
                if *w > 0.0 {
                    if let Some(d) = stop(n, k) {
                        oc.decision_prob[m][d] += *w;
                        oc.ess[m] += *w * n as f64;
                        *w = 0.0;
                    }
                }
            }
            mass = next;
        }
        let leftover: f64 = mass.iter().sum();
        oc.trunc_prob[m] += leftover;
        oc.ess[m] += leftover * horizon as f64;
    }
    oc
}
