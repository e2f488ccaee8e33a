//! Wald's sequential probability ratio test and its operating-characteristic
//! bounds.
//!
//! The SPRT observes X_1, X_2, ... and tracks the cumulative LLR
//! `lambda_n = sum_t log[f_1(X_t)/f_0(X_t)]`, stopping at the first n with
//! `lambda_n >= a1` (accept H_1) or `lambda_n <= a0` (accept H_0).
//! Crossings are closed: an exact tie with a threshold counts as a stop.
//!
//! Beyond the executor, this module carries the overshoot-aware bounds on
//! the SPRT's operating characteristics: an upper bound on the expected
//! sample size under H_1 driven by the worst-case overshoot moment
//! `E[(Z^+)^2]/E[Z]`, and a matching lower bound on the error probability.

use crate::error::{Error, Result};
use crate::model::{LlrPath, ObsSource, SimpleModel};

/// Log-threshold pair for the SPRT, `a0 < 0 < a1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SprtConfig {
    pub a0: f64,
    pub a1: f64,
}

impl SprtConfig {
    pub fn new(a0: f64, a1: f64) -> Result<Self> {
        if !(a0.is_finite() && a1.is_finite() && a0 < 0.0 && a1 > 0.0) {
            return Err(Error::Precondition(format!(
                "SPRT thresholds need a0 < 0 < a1, got a0={a0}, a1={a1}"
            )));
        }
        Ok(SprtConfig { a0, a1 })
    }
}

/// Outcome of one sequential test run: stopping time, accepted hypothesis,
/// terminal statistic, truncation flag, and (optionally) the statistic path.
#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    /// Stopping time T >= 1 (the cap, when truncated).
    pub stop_time: usize,
    /// Index of the accepted hypothesis.
    pub decision: usize,
    /// Value of the decisive statistic at the stop.
    pub terminal_llr: f64,
    /// True when the cap was reached before a boundary crossing; the
    /// decision is then the best call from the terminal statistic.
    pub truncated: bool,
    pub path: Option<LlrPath>,
}

/// Runs the SPRT on hypotheses (H_0, H_1) of `model`.
///
/// Reaching `cap` without a crossing is not an error: the outcome comes
/// back flagged `truncated` with the decision taken from the sign of the
/// terminal LLR.
pub fn run_sprt(
    model: &SimpleModel,
    cfg: &SprtConfig,
    stream: &mut dyn ObsSource,
    cap: usize,
    record_path: bool,
) -> Result<TestOutcome> {
    if cap == 0 {
        return Err(Error::Precondition("cap must be at least 1".into()));
    }
    let mut lambda = 0.0;
    let mut increments = if record_path { Some(Vec::new()) } else { None };
    for n in 1..=cap {
        let x = stream.next_obs();
        let z = model.log_ratio(1, 0, x)?;
        lambda += z;
        if let Some(zs) = increments.as_mut() {
            zs.push(z);
        }
        if lambda >= cfg.a1 || lambda <= cfg.a0 {
            return Ok(TestOutcome {
                stop_time: n,
                decision: usize::from(lambda >= cfg.a1),
                terminal_llr: lambda,
                truncated: false,
                path: increments.map(LlrPath::from_increments),
            });
        }
    }
    Ok(TestOutcome {
        stop_time: cap,
        decision: usize::from(lambda > 0.0),
        terminal_llr: lambda,
        truncated: true,
        path: increments.map(LlrPath::from_increments),
    })
}

/// Classical threshold approximations from target error probabilities:
/// `a1 = log((1-alpha1)/alpha0)`, `a0 = log(alpha1/(1-alpha0))`.
pub fn wald_thresholds(alpha0: f64, alpha1: f64) -> Result<SprtConfig> {
    if !(alpha0 > 0.0 && alpha1 > 0.0 && alpha0 + alpha1 < 1.0) {
        return Err(Error::Precondition(format!(
            "error targets need alpha0, alpha1 > 0 and alpha0 + alpha1 < 1, got ({alpha0}, {alpha1})"
        )));
    }
    SprtConfig::new((alpha1 / (1.0 - alpha0)).ln(), ((1.0 - alpha1) / alpha0).ln())
}

/// Upper bound on E_1[T] for the SPRT:
/// `((1-alpha1)*a1 - alpha1*a0)/m + E[(Z^+)^2]/m^2`,
/// with `m = E_1[Z]` and the second term the worst-case overshoot bound
/// divided by the drift.
pub fn lorden_ess_upper(model: &SimpleModel, cfg: &SprtConfig, alpha1: f64) -> Result<f64> {
    let m = model.kl(1, 0)?;
    if m <= 0.0 {
        return Err(Error::Precondition(format!("nonpositive drift E_1[Z] = {m}")));
    }
    let q = model.llr_plus_sq_moment(1, 0)?;
    if !q.is_finite() {
        return Err(Error::Precondition("E[(Z^+)^2] is not finite".into()));
    }
    Ok(((1.0 - alpha1) * cfg.a1 - alpha1 * cfg.a0) / m + q / (m * m))
}

/// Lower bound on the type-I error probability alpha0 of the SPRT with
/// upper threshold `a1`:
/// `(1 - e^{-a1}) * exp{-(a1 + E[(Z^+)^2]/((1-e^{-a1}) m))}`.
///
/// The swapped call (hypotheses exchanged, `a1 = -a0`) bounds alpha1.
pub fn error_prob_lower(model: &SimpleModel, a1: f64) -> Result<f64> {
    if a1 <= 0.0 {
        return Err(Error::Precondition(format!("a1 must be positive, got {a1}")));
    }
    let m = model.kl(1, 0)?;
    if m <= 0.0 {
        return Err(Error::Precondition(format!("nonpositive drift E_1[Z] = {m}")));
    }
    let q = model.llr_plus_sq_moment(1, 0)?;
    let shrink = 1.0 - (-a1).exp();
    Ok(shrink * (-(a1 + q / (shrink * m))).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{mc_run, McConfig};
    use crate::model::{Density, SliceSource};

    fn bern_model() -> SimpleModel {
        SimpleModel::binary(Density::Bernoulli { p: 0.4 }, Density::Bernoulli { p: 0.6 }).unwrap()
    }

    #[test]
    fn single_step_crossing() {
        // Z_1 = log(0.6/0.4) with x = 1; choose a1 just below it.
        let m = bern_model();
        let cfg = SprtConfig::new(-2.0, 0.405).unwrap();
        let mut src = SliceSource::new(&[1.0]);
        let out = run_sprt(&m, &cfg, &mut src, 10, false).unwrap();
        assert_eq!(out.stop_time, 1);
        assert_eq!(out.decision, 1);
        assert!(!out.truncated);
    }

    #[test]
    fn hypothesis_swap_negates_decision() {
        let fwd = bern_model();
        let swapped =
            SimpleModel::binary(Density::Bernoulli { p: 0.6 }, Density::Bernoulli { p: 0.4 })
                .unwrap();
        let data = [1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let cfg = SprtConfig::new(-1.8, 1.8).unwrap();
        let neg = SprtConfig::new(-cfg.a1, -cfg.a0).unwrap();
        let a = run_sprt(&fwd, &cfg, &mut SliceSource::new(&data), data.len(), false).unwrap();
        let b = run_sprt(&swapped, &neg, &mut SliceSource::new(&data), data.len(), false).unwrap();
        assert_eq!(a.stop_time, b.stop_time);
        assert_eq!(a.decision, 1 - b.decision);
        assert_eq!(a.terminal_llr, -b.terminal_llr);
    }

    #[test]
    fn truncation_is_flagged_not_fatal() {
        let m = bern_model();
        let cfg = SprtConfig::new(-50.0, 50.0).unwrap();
        let data = vec![1.0; 20];
        let out = run_sprt(&m, &cfg, &mut SliceSource::new(&data), 20, false).unwrap();
        assert!(out.truncated);
        assert_eq!(out.stop_time, 20);
        assert_eq!(out.decision, 1);
    }

    #[test]
    fn tie_with_threshold_counts_as_crossing() {
        let m = SimpleModel::binary(
            Density::Discrete { support: vec![0.0, 1.0], probs: vec![0.5, 0.5] },
            Density::Discrete { support: vec![0.0, 1.0], probs: vec![0.25, 0.75] },
        )
        .unwrap();
        let z = m.log_ratio(1, 0, 1.0).unwrap(); // ln(1.5)
        let cfg = SprtConfig::new(-10.0, 2.0 * z).unwrap();
        let out = run_sprt(&m, &cfg, &mut SliceSource::new(&[1.0, 1.0, 1.0]), 3, false).unwrap();
        assert_eq!(out.stop_time, 2);
        assert_eq!(out.decision, 1);
    }

    #[test]
    fn wald_thresholds_symmetric_case() {
        let cfg = wald_thresholds(0.01, 0.01).unwrap();
        assert!((cfg.a1 - 99.0f64.ln()).abs() < 1e-12);
        assert!((cfg.a0 + 99.0f64.ln()).abs() < 1e-12);
        let asym = wald_thresholds(0.05, 0.2).unwrap();
        assert!((asym.a1 - (0.8f64 / 0.05).ln()).abs() < 1e-12);
        assert!((asym.a0 - (0.2f64 / 0.95).ln()).abs() < 1e-12);
    }

    #[test]
    fn mc_error_probability_respects_wald_bound() {
        // Under H_1 the probability of wrongly accepting H_0 is at most
        // e^{a0}; under H_0 accepting H_1 has probability at most e^{-a1}.
        let m = bern_model();
        let a = 99.0f64.ln();
        let cfg = SprtConfig::new(-a, a).unwrap();
        let mc = McConfig { reps: 20_000, seed: 42, cap: 100_000, parallelism: 0 };
        let summary = mc_run(&mc, |_, rng| {
            let mut src = || m.sample(1, rng);
            let out = run_sprt(&m, &cfg, &mut src, mc.cap, false)?;
            Ok(out.into())
        })
        .unwrap();
        let err_rate = summary.decision_rate(0);
        assert!(
            err_rate.mean <= (-a).exp() + 3.0 * err_rate.se,
            "alpha1 hat {} vs bound {}",
            err_rate.mean,
            (-a).exp()
        );
        // sandwich: the overshoot-aware lower bound must sit below the MC rate
        let swapped =
            SimpleModel::binary(Density::Bernoulli { p: 0.6 }, Density::Bernoulli { p: 0.4 })
                .unwrap();
        let lower = error_prob_lower(&swapped, a).unwrap();
        assert!(
            err_rate.mean >= lower - 3.0 * err_rate.se,
            "alpha1 hat {} vs lower bound {lower}",
            err_rate.mean
        );
    }

    #[test]
    fn ess_upper_bound_plug_in_and_mc() {
        let m = bern_model();
        let a = 99.0f64.ln();
        let cfg = SprtConfig::new(-a, a).unwrap();
        let drift = m.kl(1, 0).unwrap();
        let q = m.llr_plus_sq_moment(1, 0).unwrap();
        let bound = lorden_ess_upper(&m, &cfg, 0.01).unwrap();
        assert!((bound - ((0.99 * a + 0.01 * a) / drift + q / (drift * drift))).abs() < 1e-12);

        // monotone in a1
        let larger = SprtConfig::new(-a, a + 1.0).unwrap();
        assert!(lorden_ess_upper(&m, &larger, 0.01).unwrap() > bound);

        // MC mean of T under H_1 stays below the bound
        let mc = McConfig { reps: 20_000, seed: 7, cap: 100_000, parallelism: 0 };
        let summary = mc_run(&mc, |_, rng| {
            let mut src = || m.sample(1, rng);
            let out = run_sprt(&m, &cfg, &mut src, mc.cap, false)?;
            Ok(out.into())
        })
        .unwrap();
        let ess = summary.stop_time_estimate();
        assert!(
            ess.mean <= bound + 3.0 * ess.se,
            "E1[T] hat {} vs bound {bound}",
            ess.mean
        );
    }

    #[test]
    fn error_lower_bound_stays_below_wald_and_has_the_right_limit() {
        let m = bern_model();
        let q = m.llr_plus_sq_moment(1, 0).unwrap();
        let drift = m.kl(1, 0).unwrap();
        let mut prev_gap = f64::INFINITY;
        for &a1 in &[10.0, 20.0, 40.0] {
            let lower = error_prob_lower(&m, a1).unwrap();
            assert!(lower < (-a1).exp());
            let ratio = lower / (-a1).exp();
            let limit = (-q / drift).exp();
            let gap = (ratio - limit).abs();
            assert!(gap <= prev_gap + 1e-12, "ratio should approach exp(-q/m)");
            prev_gap = gap;
        }
        let lower = error_prob_lower(&m, 40.0).unwrap();
        assert!((lower / (-40.0f64).exp() - (-q / drift).exp()).abs() < 1e-3);
    }
}
