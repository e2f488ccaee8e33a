//! The 2-SPRT and the modified minimax testing problem.
//!
//! The SPRT is optimal at the two hypotheses but can be slow between them.
//! The 2-SPRT runs two one-sided SPRTs of an intermediate measure G
//! against each hypothesis:
//!
//! `T_0 = inf{n: lambda_1(n) >= a1}`, `T_1 = inf{n: lambda_0(n) >= a0}`,
//!
//! with `lambda_i = log dG/dP_i` cumulated; stopping via `T_0` rejects H_1
//! (decision 0), via `T_1` rejects H_0 (decision 1). For one-parameter
//! exponential families with G = P_theta the continuation region is a
//! triangle in the `(n, S_n - bdot(theta) n)` plane: two straight
//! boundaries meeting at the apex `n*(theta)`, so the test is truncated.
//!
//! The minimax machinery picks the tuning point: `theta*` equates the two
//! first-order ESS envelopes `|log alpha_1|/I(theta,theta_0) =
//! |log alpha_0|/I(theta,theta_1)`, and the second-order (Huffman) point
//! shifts it by `r*/(sigma_{theta*} sqrt(n*(theta*)))` with
//! `Phi(r*) = |gamma(theta*,theta_1)| / (|gamma(theta*,theta_1)| +
//! gamma(theta*,theta_0))`, `gamma(t,s) = (t-s)/I(t,s)`.

use crate::error::{Error, Result};
use crate::model::{Density, ExpFamily1D, ObsSource, SimpleModel};
use crate::msprt::ThresholdMatrix;
use crate::numeric::{bisect_root, inv_normal_cdf, normal_cdf};
use crate::sprt::TestOutcome;

/// `gamma(theta, other) = (theta - other) / I(theta, other)`.
pub fn gamma(fam: &ExpFamily1D, theta: f64, other: f64) -> f64 {
    (theta - other) / fam.kl(theta, other)
}

// ---------------------------------------------------------------------------
// Executors
// ---------------------------------------------------------------------------

/// Runs the 2-SPRT of the intermediate density `g` against `(f0, f1)`.
///
/// Stopping via the `lambda_1` boundary accepts H_0 and vice versa; on a
/// simultaneous crossing the larger terminal excess wins, ties to d = 0.
pub fn run_2sprt(
    g: &Density,
    f0: &Density,
    f1: &Density,
    a0: f64,
    a1: f64,
    stream: &mut dyn ObsSource,
    cap: usize,
) -> Result<TestOutcome> {
    if a0 <= 0.0 || a1 <= 0.0 {
        return Err(Error::Precondition("2-SPRT thresholds must be positive".into()));
    }
    // common family enforced by model construction: indices 0, 1, G=2
    let model = SimpleModel::new(vec![f0.clone(), f1.clone(), g.clone()])?;
    let mut lam0 = 0.0; // log dG/dP_0
    let mut lam1 = 0.0; // log dG/dP_1
    for n in 1..=cap {
        let x = stream.next_obs();
        lam0 += model.log_ratio(2, 0, x)?;
        lam1 += model.log_ratio(2, 1, x)?;
        let up = lam0 - a0; // fires T_1: reject H_0
        let dn = lam1 - a1; // fires T_0: reject H_1
        if up >= 0.0 || dn >= 0.0 {
            let decision = if dn >= up { 0 } else { 1 };
            return Ok(TestOutcome {
                stop_time: n,
                decision,
                terminal_llr: if decision == 0 { lam1 } else { lam0 },
                truncated: false,
                path: None,
            });
        }
    }
    let decision = usize::from(lam0 - a0 > lam1 - a1);
    Ok(TestOutcome {
        stop_time: cap,
        decision,
        terminal_llr: if decision == 0 { lam1 } else { lam0 },
        truncated: true,
        path: None,
    })
}

/// Modified accepting matrix SPRT: all likelihood ratios are taken of the
/// intermediate measure G against the hypotheses, and H_i is accepted at
/// the first n with `lambda_j(n) >= a_ji` for every `j != i`.
///
/// With N = 1 this is exactly the 2-SPRT (`a1 = a_{10}`, `a0 = a_{01}`).
pub fn run_modified_msprt(
    g: &Density,
    hypotheses: &[Density],
    thr: &ThresholdMatrix,
    stream: &mut dyn ObsSource,
    cap: usize,
) -> Result<TestOutcome> {
    let n_hyp = hypotheses.len();
    if thr.n_hyp() != n_hyp {
        return Err(Error::Precondition("threshold matrix size must match the hypotheses".into()));
    }
    let mut densities = hypotheses.to_vec();
    densities.push(g.clone());
    let model = SimpleModel::new(densities)?;
    let g_idx = n_hyp;
    let mut lam = vec![0.0f64; n_hyp]; // lambda_j = log dG/dP_j
    for n in 1..=cap {
        let x = stream.next_obs();
        for (j, l) in lam.iter_mut().enumerate() {
            *l += model.log_ratio(g_idx, j, x)?;
        }
        let mut winner: Option<(usize, f64)> = None;
        for i in 0..n_hyp {
            let mut excess = f64::INFINITY;
            for j in 0..n_hyp {
                if j != i {
                    excess = excess.min(lam[j] - thr.get(j, i));
                }
            }
            if excess >= 0.0 {
                let better = match winner {
                    None => true,
                    Some((_, w)) => excess > w,
                };
                if better {
                    winner = Some((i, excess));
                }
            }
        }
        if let Some((i, excess)) = winner {
            return Ok(TestOutcome {
                stop_time: n,
                decision: i,
                terminal_llr: excess,
                truncated: false,
                path: None,
            });
        }
    }
    // forced call at the cap: hypothesis with the largest worst-case excess
    let best = (0..n_hyp)
        .map(|i| {
            let excess = (0..n_hyp)
                .filter(|&j| j != i)
                .map(|j| lam[j] - thr.get(j, i))
                .fold(f64::INFINITY, f64::min);
            (i, excess)
        })
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(TestOutcome {
        stop_time: cap,
        decision: best,
        terminal_llr: lam[best],
        truncated: true,
        path: None,
    })
}

// ---------------------------------------------------------------------------
// Triangle geometry for exponential families
// ---------------------------------------------------------------------------

/// Linear stopping boundaries of the 2-SPRT tuned to `theta` in the
/// centered-sum plane `(n, S_n - bdot(theta) n)`.
#[derive(Debug, Clone, Copy)]
pub struct TriangleDesign {
    pub theta: f64,
    pub theta0: f64,
    pub theta1: f64,
    /// `a_i = |log alpha_i|`.
    pub a0: f64,
    pub a1: f64,
    pub upper_intercept: f64,
    pub upper_slope: f64,
    pub lower_intercept: f64,
    pub lower_slope: f64,
    /// Apex: the boundaries meet here, truncating the test.
    pub n_star: f64,
}

impl TriangleDesign {
    /// Upper boundary (crossing rejects H_0).
    pub fn h_upper(&self, n: f64) -> f64 {
        self.upper_intercept + self.upper_slope * n
    }

    /// Lower boundary (crossing rejects H_1).
    pub fn h_lower(&self, n: f64) -> f64 {
        self.lower_intercept + self.lower_slope * n
    }

    /// Runs the test through the boundary geometry: track the centered sum
    /// and stop on the first boundary exit. An independent route to the
    /// same test as [`run_2sprt_expfam`].
    pub fn run(
        &self,
        fam: &ExpFamily1D,
        stream: &mut dyn ObsSource,
        cap: usize,
    ) -> Result<TestOutcome> {
        let drift = fam.bdot(self.theta);
        let mut s_centered = 0.0;
        for n in 1..=cap {
            s_centered += stream.next_obs() - drift;
            let up = s_centered - self.h_upper(n as f64);
            let dn = self.h_lower(n as f64) - s_centered;
            if up >= 0.0 || dn >= 0.0 {
                // scale the geometric excesses back to the LLR scale so the
                // simultaneous-crossing rule matches the LLR route
                let up_llr = up * (self.theta - self.theta0);
                let dn_llr = dn * (self.theta1 - self.theta);
                let decision = usize::from(dn_llr < up_llr);
                return Ok(TestOutcome {
                    stop_time: n,
                    decision,
                    terminal_llr: s_centered,
                    truncated: false,
                    path: None,
                });
            }
        }
        Ok(TestOutcome {
            stop_time: cap,
            decision: usize::from(s_centered > 0.0),
            terminal_llr: s_centered,
            truncated: true,
            path: None,
        })
    }
}

/// Builds the triangle of the 2-SPRT tuned to `theta` with thresholds
/// `|log alpha_i|`.
pub fn triangle(
    fam: &ExpFamily1D,
    theta: f64,
    theta0: f64,
    theta1: f64,
    alpha0: f64,
    alpha1: f64,
) -> Result<TriangleDesign> {
    if !(theta0 < theta && theta < theta1) {
        return Err(Error::Precondition(format!(
            "tuning point must sit strictly between the hypotheses, got {theta0} < {theta} < {theta1}"
        )));
    }
    if !(alpha0 > 0.0 && alpha0 < 1.0 && alpha1 > 0.0 && alpha1 < 1.0) {
        return Err(Error::Precondition("error targets must sit in (0,1)".into()));
    }
    let a0 = alpha0.ln().abs();
    let a1 = alpha1.ln().abs();
    let i0 = fam.kl(theta, theta0);
    let i1 = fam.kl(theta, theta1);
    let g0 = gamma(fam, theta, theta0);
    let g1 = gamma(fam, theta, theta1);
    debug_assert!(g1 < 0.0 && 0.0 < g0);
    let n_star = (g0 * a1 / i1 + g1.abs() * a0 / i0) / (g0 + g1.abs());
    let design = TriangleDesign {
        theta,
        theta0,
        theta1,
        a0,
        a1,
        upper_intercept: a0 / (theta - theta0),
        upper_slope: -i0 / (theta - theta0),
        lower_intercept: -a1 / (theta1 - theta),
        lower_slope: i1 / (theta1 - theta),
        n_star,
    };
    let gap = (design.h_upper(n_star) - design.h_lower(n_star)).abs();
    if gap > 1e-9 * (1.0 + design.h_upper(0.0).abs()) {
        return Err(Error::Numeric(format!(
            "triangle apex failed to close: boundary gap {gap:e} at n* = {n_star}"
        )));
    }
    Ok(design)
}

/// 2-SPRT for an exponential family via the cumulative LLRs directly
/// (the threshold route the triangle geometry must agree with).
pub fn run_2sprt_expfam(
    fam: &ExpFamily1D,
    theta: f64,
    theta0: f64,
    theta1: f64,
    a0: f64,
    a1: f64,
    stream: &mut dyn ObsSource,
    cap: usize,
) -> Result<TestOutcome> {
    run_2sprt(&fam.density(theta), &fam.density(theta0), &fam.density(theta1), a0, a1, stream, cap)
}

// ---------------------------------------------------------------------------
// Minimax tuning
// ---------------------------------------------------------------------------

/// First-order least favorable point: the root of
/// `|log alpha1| / I(theta, theta0) = |log alpha0| / I(theta, theta1)`
/// in `(theta0, theta1)`, returned with `n*(theta*)` (their common value).
pub fn theta_star(
    fam: &ExpFamily1D,
    theta0: f64,
    theta1: f64,
    alpha0: f64,
    alpha1: f64,
) -> Result<(f64, f64)> {
    if !(theta0 < theta1) {
        return Err(Error::Precondition("need theta0 < theta1".into()));
    }
    let a0 = alpha0.ln().abs();
    let a1 = alpha1.ln().abs();
    // root of a1*I(theta,theta1) - a0*I(theta,theta0), which changes sign
    // across (theta0, theta1) without the poles of the ratio form
    let eps = 1e-12 * (theta1 - theta0);
    let root = bisect_root(
        |t| a1 * fam.kl(t, theta1) - a0 * fam.kl(t, theta0),
        theta0 + eps,
        theta1 - eps,
        1e-10,
        300,
    )?;
    let n_star = 0.5 * (a1 / fam.kl(root, theta0) + a0 / fam.kl(root, theta1));
    Ok((root, n_star))
}

/// Minimax tuning summary: the first-order point, the normal-quantile
/// offset, and the second-order point.
#[derive(Debug, Clone, Copy)]
pub struct MinimaxTuning {
    pub theta_star_fo: f64,
    pub r_star: f64,
    pub theta_star_so: f64,
    pub sigma_at_star: f64,
    pub n_star: f64,
}

/// Second-order minimax tuning point
/// `theta_so = theta* + r*/(sigma_{theta*} sqrt(n*(theta*)))`.
pub fn huffman_tuning(
    fam: &ExpFamily1D,
    theta0: f64,
    theta1: f64,
    alpha0: f64,
    alpha1: f64,
) -> Result<MinimaxTuning> {
    let (fo, n_star) = theta_star(fam, theta0, theta1, alpha0, alpha1)?;
    let g0 = gamma(fam, fo, theta0);
    let g1_abs = gamma(fam, fo, theta1).abs();
    let ratio = g1_abs / (g1_abs + g0);
    let r_star = inv_normal_cdf(ratio)?;
    let sigma = fam.sigma(fo);
    let so = fo + r_star / (sigma * n_star.sqrt());
    Ok(MinimaxTuning {
        theta_star_fo: fo,
        r_star,
        theta_star_so: so,
        sigma_at_star: sigma,
        n_star,
    })
}

/// Renewal-corrected error-probability approximations of the 2-SPRT tuned
/// to `theta`:
/// `alpha0 ~ [|g1|/(|g1|+g0)] zeta0 e^{-a0}` and
/// `alpha1 ~ [g0/(|g1|+g0)] zeta1 e^{-a1}` with `g_i = gamma(theta, theta_i)`.
pub fn error_prob_2sprt_asymptotic(
    fam: &ExpFamily1D,
    theta: f64,
    theta0: f64,
    theta1: f64,
    a0: f64,
    a1: f64,
    zeta0: f64,
    zeta1: f64,
) -> Result<(f64, f64)> {
    if !(theta0 < theta && theta < theta1) {
        return Err(Error::Precondition("theta must sit strictly between the hypotheses".into()));
    }
    if zeta0 <= 0.0 || zeta1 <= 0.0 {
        return Err(Error::Precondition("zeta factors must be positive".into()));
    }
    let g0 = gamma(fam, theta, theta0);
    let g1_abs = gamma(fam, theta, theta1).abs();
    let denom = g0 + g1_abs;
    Ok((g1_abs / denom * zeta0 * (-a0).exp(), g0 / denom * zeta1 * (-a1).exp()))
}

/// Convenience: `Phi(r*)` consistency residual of a tuning result.
pub fn tuning_residual(fam: &ExpFamily1D, t: &MinimaxTuning, theta0: f64, theta1: f64) -> f64 {
    let g0 = gamma(fam, t.theta_star_fo, theta0);
    let g1_abs = gamma(fam, t.theta_star_fo, theta1).abs();
    (normal_cdf(t.r_star) - g1_abs / (g1_abs + g0)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{mc_run, rep_rng, McConfig};
    use crate::model::{logit, ExpFamilyKind, SliceSource};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gauss_fam() -> ExpFamily1D {
        ExpFamily1D::new(ExpFamilyKind::GaussianUnitVar, -10.0, 10.0).unwrap()
    }

    fn bern_fam() -> ExpFamily1D {
        ExpFamily1D::new(ExpFamilyKind::Bernoulli, -6.0, 6.0).unwrap()
    }

    #[test]
    fn degenerate_g_equal_to_f1_always_rejects_h0() {
        // G = P_1: lambda_1 stays at zero, so only the lambda_0 boundary
        // can fire
        let g = Density::Bernoulli { p: 0.6 };
        let f0 = Density::Bernoulli { p: 0.4 };
        let f1 = Density::Bernoulli { p: 0.6 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let data: Vec<f64> =
                (0..4000).map(|_| g.sample(&mut rng)).collect();
            let out = run_2sprt(&g, &f0, &f1, 2.0, 2.0, &mut SliceSource::new(&data), 4000).unwrap();
            if !out.truncated {
                assert_eq!(out.decision, 1);
            }
        }
    }

    #[test]
    fn symmetric_case_decides_each_way_half_the_time() {
        let fam = gauss_fam();
        let (t0, t1) = (-0.3, 0.3);
        let mc = McConfig { reps: 20_000, seed: 4, cap: 100_000, parallelism: 0 };
        let summary = mc_run(&mc, |_, rng| {
            let mut src = || fam.sample(0.0, rng);
            Ok(run_2sprt_expfam(&fam, 0.0, t0, t1, 3.0, 3.0, &mut src, mc.cap)?.into())
        })
        .unwrap();
        let p1 = summary.decision_rate(1);
        assert!((p1.mean - 0.5).abs() <= 3.0 * p1.se, "P(d=1) = {}", p1.mean);
    }

    #[test]
    fn modified_msprt_with_two_hypotheses_is_the_2sprt() {
        let g = Density::Bernoulli { p: 0.5 };
        let hyps = [Density::Bernoulli { p: 0.4 }, Density::Bernoulli { p: 0.6 }];
        let (a01, a10) = (1.7, 2.4);
        let thr = ThresholdMatrix::from_fn(2, |j, _| if j == 0 { a01 } else { a10 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..300 {
            let data: Vec<f64> = (0..600).map(|_| g.sample(&mut rng)).collect();
            let mm =
                run_modified_msprt(&g, &hyps, &thr, &mut SliceSource::new(&data), 600).unwrap();
            let ts = run_2sprt(&g, &hyps[0], &hyps[1], a01, a10, &mut SliceSource::new(&data), 600)
                .unwrap();
            assert_eq!((mm.stop_time, mm.decision), (ts.stop_time, ts.decision));
        }
    }

    #[test]
    fn modified_msprt_error_bounds_hold_in_mc() {
        // symmetric three-hypothesis Gaussian problem with G in the middle
        let fam = gauss_fam();
        let hyps = [fam.density(-0.5), fam.density(0.0), fam.density(0.5)];
        let g = fam.density(0.0);
        // G equals the middle hypothesis: by symmetry the outer decisions
        // split evenly and the middle is favored; measure G(d=j) by MC
        let a = 2.5;
        let thr = ThresholdMatrix::uniform(3, a).unwrap();
        let mc = McConfig { reps: 10_000, seed: 13, cap: 100_000, parallelism: 0 };
        let under_g = mc_run(&mc, |_, rng| {
            let mut src = || g.sample(rng);
            Ok(run_modified_msprt(&g, &hyps, &thr, &mut src, mc.cap)?.into())
        })
        .unwrap();
        for truth in 0..3usize {
            let summary = mc_run(&mc, |_, rng| {
                let mut src = || hyps[truth].sample(rng);
                Ok(run_modified_msprt(&g, &hyps, &thr, &mut src, mc.cap)?.into())
            })
            .unwrap();
            for j in 0..3usize {
                if j != truth {
                    let rate = summary.decision_rate(j);
                    let gj = under_g.decision_rate(j);
                    let bound = (-thr.get(truth, j)).exp() * gj.mean;
                    let se = 3.0 * (rate.se + (-thr.get(truth, j)).exp() * gj.se);
                    assert!(
                        rate.mean <= bound + se,
                        "alpha[{truth}][{j}] = {} vs bound {bound}",
                        rate.mean
                    );
                }
            }
        }
    }

    #[test]
    fn symmetric_gaussian_triangle_apex() {
        let fam = gauss_fam();
        let delta = 0.4;
        let alpha = 1e-2;
        let d = triangle(&fam, 0.0, -delta, delta, alpha, alpha).unwrap();
        let expect = 2.0 * alpha.ln().abs() / (delta * delta);
        assert!((d.n_star - expect).abs() < 1e-9, "n* {} vs {expect}", d.n_star);
        // boundary signs at n = 0
        assert!(d.h_upper(0.0) > 0.0);
        assert!(d.h_lower(0.0) < 0.0);
        // apex closes
        assert!((d.h_upper(d.n_star) - d.h_lower(d.n_star)).abs() < 1e-9);
    }

    #[test]
    fn triangle_truncates_at_the_apex() {
        let fam = bern_fam();
        let (t0, t1) = (logit(0.4), logit(0.6));
        let d = triangle(&fam, 0.0, t0, t1, 1e-2, 1e-2).unwrap();
        let cap = d.n_star.ceil() as usize;
        let mc = McConfig { reps: 20_000, seed: 2, cap, parallelism: 0 };
        let summary = mc_run(&mc, |_, rng| {
            let mut src = || fam.sample(0.05, rng);
            Ok(d.run(&fam, &mut src, cap)?.into())
        })
        .unwrap();
        assert_eq!(summary.capped_fraction(), 0.0, "a path outlived the apex");
        assert!(summary.records.iter().all(|r| r.stop_time <= cap));
    }

    #[test]
    fn geometry_route_equals_llr_route_path_for_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (fam, t0, t1, sample_at) in [
            (gauss_fam(), -0.3f64, 0.3f64, 0.1f64),
            (bern_fam(), logit(0.4), logit(0.6), 0.0),
        ] {
            let tri = triangle(&fam, sample_at.min(t1 - 1e-9).max(t0 + 1e-9), t0, t1, 5e-3, 2e-2)
                .unwrap();
            let cap = tri.n_star.ceil() as usize + 1;
            for _ in 0..400 {
                let data: Vec<f64> = (0..cap).map(|_| fam.sample(sample_at, &mut rng)).collect();
                let geo = tri.run(&fam, &mut SliceSource::new(&data), cap).unwrap();
                let llr = run_2sprt_expfam(
                    &fam,
                    tri.theta,
                    t0,
                    t1,
                    tri.a0,
                    tri.a1,
                    &mut SliceSource::new(&data),
                    cap,
                )
                .unwrap();
                assert_eq!((geo.stop_time, geo.decision), (llr.stop_time, llr.decision));
            }
        }
    }

    #[test]
    fn theta_star_symmetric_gaussian_is_the_midpoint() {
        let fam = gauss_fam();
        let (root, n_star) = theta_star(&fam, -0.4, 0.4, 1e-2, 1e-2).unwrap();
        assert!(root.abs() < 1e-9);
        assert!((n_star - 1e-2f64.ln().abs() / fam.kl(0.0, -0.4)).abs() < 1e-6);
    }

    #[test]
    fn theta_star_minimizes_the_apex_and_maximizes_the_envelope() {
        let fam = bern_fam();
        let (t0, t1) = (logit(0.4), logit(0.6));
        let (a0, a1) = (1e-3, 1e-2);
        let (root, _) = theta_star(&fam, t0, t1, a0, a1).unwrap();
        let la0 = a0.ln().abs();
        let la1 = a1.ln().abs();
        let apex = |t: f64| triangle(&fam, t, t0, t1, a0, a1).unwrap().n_star;
        let envelope = |t: f64| (la1 / fam.kl(t, t0)).min(la0 / fam.kl(t, t1));
        let apex_at_root = apex(root);
        let env_at_root = envelope(root);
        let step = (t1 - t0) / 102.0;
        for k in 1..=101 {
            let t = t0 + step * k as f64;
            assert!(apex(t) >= apex_at_root - 1e-9, "apex dips below n*(theta*) at {t}");
            assert!(envelope(t) <= env_at_root + 1e-9, "envelope peaks off theta* at {t}");
        }
        // the envelope's two branches meet at the root
        assert!((la1 / fam.kl(root, t0) - la0 / fam.kl(root, t1)).abs() < 1e-9);
    }

    #[test]
    fn huffman_symmetric_case_has_zero_offset() {
        let fam = gauss_fam();
        let t = huffman_tuning(&fam, -0.4, 0.4, 1e-2, 1e-2).unwrap();
        assert!(t.r_star.abs() < 1e-9);
        assert!((t.theta_star_so - t.theta_star_fo).abs() < 1e-12);
        assert!(tuning_residual(&fam, &t, -0.4, 0.4) < 1e-10);
    }

    #[test]
    fn huffman_offset_sign_tracks_the_error_asymmetry() {
        let fam = gauss_fam();
        for (a0, a1) in [(1e-3, 1e-2), (1e-2, 1e-3), (1e-4, 1e-2), (0.02, 0.002)] {
            let t = huffman_tuning(&fam, -0.4, 0.4, a0, a1).unwrap();
            let want = (a0 / a1).ln().signum();
            assert_eq!(
                t.r_star.signum(),
                want,
                "alpha0={a0}, alpha1={a1}: r* = {}",
                t.r_star
            );
            assert!(tuning_residual(&fam, &t, -0.4, 0.4) < 1e-10);
        }
    }

    #[test]
    fn huffman_point_is_nearly_minimax_for_bernoulli() {
        // sweep E_theta[T] of the tuned test over a theta grid with common
        // random numbers; the supremum must hug the value at the tuning
        // point itself
        let fam = bern_fam();
        let (t0, t1) = (logit(0.4), logit(0.6));
        let (a0, a1) = (1e-3, 1e-2);
        let tune = huffman_tuning(&fam, t0, t1, a0, a1).unwrap();
        let tri = triangle(&fam, tune.theta_star_so, t0, t1, a0, a1).unwrap();
        let cap = tri.n_star.ceil() as usize + 1;
        let reps = 4_000;
        let mean_t = |theta: f64| -> f64 {
            let mut total = 0usize;
            for k in 0..reps {
                let mut rng = rep_rng(1234, k as u64);
                let mut src = || fam.sample(theta, &mut rng);
                let out = tri.run(&fam, &mut src, cap).unwrap();
                total += out.stop_time;
            }
            total as f64 / reps as f64
        };
        let at_tune = mean_t(tune.theta_star_so);
        let mut sup = f64::NEG_INFINITY;
        for k in 0..=40 {
            let t = t0 + (t1 - t0) * k as f64 / 40.0;
            sup = sup.max(mean_t(t));
        }
        assert!(
            sup <= at_tune * 1.03,
            "sup_theta E[T] = {sup} vs E at tuning point {at_tune}"
        );
    }

    #[test]
    fn asymptotic_error_formulas() {
        let fam = gauss_fam();
        // unit zeta, symmetric gamma: both approximations are e^{-a}/2
        let (x0, x1) =
            error_prob_2sprt_asymptotic(&fam, 0.0, -0.4, 0.4, 3.0, 3.0, 1.0, 1.0).unwrap();
        assert!((x0 - 0.5 * (-3.0f64).exp()).abs() < 1e-12);
        assert!((x1 - 0.5 * (-3.0f64).exp()).abs() < 1e-12);
        // with zeta <= 1 the approximations sit below the crude bounds
        let (y0, y1) =
            error_prob_2sprt_asymptotic(&fam, 0.1, -0.4, 0.4, 2.0, 4.0, 0.7, 0.9).unwrap();
        assert!(y0 < (-2.0f64).exp());
        assert!(y1 < (-4.0f64).exp());
    }

    #[test]
    fn asymptotic_errors_track_mc_for_bernoulli() {
        let fam = bern_fam();
        let (t0, t1) = (logit(0.4), logit(0.6));
        let a = (1e3f64).ln();
        let (root, _) = theta_star(&fam, t0, t1, 1e-3, 1e-3).unwrap();
        // zeta factors of the two one-sided walks via the renewal series
        let m0 = SimpleModel::binary(fam.density(t0), fam.density(root)).unwrap();
        let m1 = SimpleModel::binary(fam.density(t1), fam.density(root)).unwrap();
        let z0 = crate::renewal::zeta(&m0, 1, 0, 1e-7, 0, 0).unwrap().value;
        let z1 = crate::renewal::zeta(&m1, 1, 0, 1e-7, 0, 0).unwrap().value;
        let (approx0, approx1) =
            error_prob_2sprt_asymptotic(&fam, root, t0, t1, a, a, z0, z1).unwrap();
        let mc = McConfig { reps: 60_000, seed: 77, cap: 10_000, parallelism: 0 };
        for (truth, approx, wrong_decision) in [(t0, approx0, 1usize), (t1, approx1, 0usize)] {
            let summary = mc_run(&mc, |_, rng| {
                let mut src = || fam.sample(truth, rng);
                Ok(run_2sprt_expfam(&fam, root, t0, t1, a, a, &mut src, mc.cap)?.into())
            })
            .unwrap();
            let rate = summary.decision_rate(wrong_decision);
            assert!(
                approx <= rate.mean * 1.5 + 3.0 * rate.se
                    && approx >= (rate.mean - 3.0 * rate.se) / 1.5,
                "approx {approx} vs MC {} +/- {}",
                rate.mean,
                rate.se
            );
        }
    }
}
