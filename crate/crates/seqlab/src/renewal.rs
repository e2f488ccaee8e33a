//! Boundary-crossing overshoot machinery.
//!
//! For a random walk `S_n = Z_1 + ... + Z_n` with positive drift and the
//! first passage `T(a) = inf{n: S_n > a}`, the overshoot is
//! `R_a = S_{T(a)} - a`. Three related quantities live here:
//!
//! - Lorden's worst-case bound `sup_a E[R_a] <= E[(Z^+)^2]/E[Z]`,
//!   together with a Monte Carlo sweep that probes it on an `a`-grid.
//! - The L-numbers
//!   `L_ij = exp{-sum_{n>=1} (1/n)[P_j(lambda_ij(n) > 0) + P_i(lambda_ij(n) <= 0)]}`,
//!   computed by exact per-term tail evaluation where the law of
//!   `lambda_ij(n)` has a closed form (two/three-letter alphabets,
//!   unit-variance Gaussian, Poisson, exponential) and by a Monte Carlo
//!   series otherwise. `L_ii = 1` by convention, `0 < L_ij <= 1`, and
//!   `L_ij = L_ji`.
//! - The overshoot correction factors `zeta_ij = L_ij / I_ij`, the limit of
//!   `E_i[exp{-(lambda_ij(T) - a)}]` as the boundary `a` grows.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{Error, Result};
use crate::harness::rep_rng;
use crate::model::{Density, SimpleModel};
use crate::numeric::{self, normal_cdf};

/// Per-walk step budget before a crossing attempt is declared runaway.
const WALK_STEP_CAP: usize = 1_000_000;

// ---------------------------------------------------------------------------
// Step distributions and Lorden's bound
// ---------------------------------------------------------------------------

/// Increment distribution of a random walk, with closed-form moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepDist {
    Deterministic { value: f64 },
    TwoPoint { plus: f64, minus: f64, p_plus: f64 },
    Exponential { rate: f64 },
    Gaussian { mean: f64, sd: f64 },
}

impl StepDist {
    pub fn mean(&self) -> f64 {
        match *self {
            StepDist::Deterministic { value } => value,
            StepDist::TwoPoint { plus, minus, p_plus } => p_plus * plus + (1.0 - p_plus) * minus,
            StepDist::Exponential { rate } => 1.0 / rate,
            StepDist::Gaussian { mean, .. } => mean,
        }
    }

    /// E[(Z^+)^2].
    pub fn plus_sq_moment(&self) -> f64 {
        match *self {
            StepDist::Deterministic { value } => {
                if value > 0.0 {
                    value * value
                } else {
                    0.0
                }
            }
            StepDist::TwoPoint { plus, minus, p_plus } => {
                let mut m = 0.0;
                if plus > 0.0 {
                    m += p_plus * plus * plus;
                }
                if minus > 0.0 {
                    m += (1.0 - p_plus) * minus * minus;
                }
                m
            }
            StepDist::Exponential { rate } => 2.0 / (rate * rate),
            StepDist::Gaussian { mean, sd } => crate::model::gaussian_plus_sq_moment(mean, sd),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            StepDist::Deterministic { value } => value,
            StepDist::TwoPoint { plus, minus, p_plus } => {
                if rng.gen_bool(p_plus) {
                    plus
                } else {
                    minus
                }
            }
            StepDist::Exponential { rate } => Exp::new(rate).expect("positive rate").sample(rng),
            StepDist::Gaussian { mean, sd } => {
                Normal::new(mean, sd).expect("positive sd").sample(rng)
            }
        }
    }
}

/// Lorden's worst-case expected-overshoot bound `E[(Z^+)^2]/E[Z]`.
pub fn lorden_bound(z: &StepDist) -> Result<f64> {
    let m = z.mean();
    if m <= 0.0 {
        return Err(Error::Precondition(format!("step mean must be positive, got {m}")));
    }
    Ok(z.plus_sq_moment() / m)
}

/// Monte Carlo sweep of `E[R_a]` over an `a`-grid.
#[derive(Debug, Clone)]
pub struct OvershootReport {
    /// `E[(Z^+)^2]/E[Z]`.
    pub bound: f64,
    /// Largest grid estimate of `E[R_a]`.
    pub empirical_sup: f64,
    pub grid: Vec<f64>,
    pub means: Vec<f64>,
    pub ses: Vec<f64>,
    pub reps: usize,
}

impl OvershootReport {
    pub fn max_se(&self) -> f64 {
        self.ses.iter().cloned().fold(0.0, f64::max)
    }

    /// The sweep's check of the bound: empirical sup within 3 max-SE of it
    /// (plus a float-noise allowance for zero-variance step laws).
    pub fn bound_holds(&self) -> bool {
        self.empirical_sup <= self.bound + 3.0 * self.max_se() + 1e-9
    }
}

/// Estimates `E[R_a]` for each grid point with `reps` fresh walks per point.
pub fn overshoot_sweep(
    z: &StepDist,
    a_grid: &[f64],
    reps: usize,
    seed: u64,
) -> Result<OvershootReport> {
    if reps < 1_000 {
        return Err(Error::Precondition("overshoot sweep needs reps >= 1000".into()));
    }
    if a_grid.iter().any(|a| *a < 0.0) {
        return Err(Error::Precondition("a-grid must be nonnegative".into()));
    }
    let bound = lorden_bound(z)?;
    let mut means = Vec::with_capacity(a_grid.len());
    let mut ses = Vec::with_capacity(a_grid.len());
    for (gi, &a) in a_grid.iter().enumerate() {
        let mut rng = rep_rng(seed, gi as u64);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..reps {
            let mut s = 0.0;
            let mut steps = 0usize;
            let r = loop {
                s += z.sample(&mut rng);
                steps += 1;
                if s > a {
                    break s - a;
                }
                if steps >= WALK_STEP_CAP {
                    return Err(Error::Precondition(format!(
                        "walk failed to cross a={a} within {WALK_STEP_CAP} steps; drift looks nonpositive"
                    )));
                }
            };
            sum += r;
            sumsq += r * r;
        }
        let n = reps as f64;
        let mean = sum / n;
        let var = (sumsq - n * mean * mean).max(0.0) / (n - 1.0);
        means.push(mean);
        ses.push((var / n).sqrt());
    }
    let empirical_sup = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(OvershootReport { bound, empirical_sup, grid: a_grid.to_vec(), means, ses, reps })
}

/// Geometric-plus-linear grid on `[0, 20*mean]`. The geometric half
/// resolves the small-`a` region where `E[R_a]` is most irregular.
pub fn hybrid_a_grid(mean: f64, points: usize) -> Vec<f64> {
    assert!(mean > 0.0 && points >= 4);
    let mut grid = vec![0.0];
    let geo = (points - 1) / 2;
    let lin = points - 1 - geo;
    let lo = mean / 20.0;
    let mid = 2.0 * mean;
    for k in 0..geo {
        grid.push(lo * (mid / lo).powf(k as f64 / (geo - 1).max(1) as f64));
    }
    let hi = 20.0 * mean;
    for k in 1..=lin {
        grid.push(mid + (hi - mid) * k as f64 / lin as f64);
    }
    grid
}

// ---------------------------------------------------------------------------
// L-numbers
// ---------------------------------------------------------------------------

/// How a series was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesMethod {
    ExactSeries,
    McSeries,
}

/// One term of the L-number series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermEstimate {
    pub n: usize,
    pub value: f64,
    pub se: f64,
}

/// An evaluated L-number.
#[derive(Debug, Clone)]
pub struct LNumber {
    pub value: f64,
    /// Standard error of `value` (0 for exact series).
    pub se: f64,
    pub n_terms_used: usize,
    pub terms: Vec<TermEstimate>,
    pub method: SeriesMethod,
}

/// Law of `lambda_ij(n)` as far as the series terms need it.
enum PairLaw {
    /// Two-letter alphabet: counts of the first letter are binomial.
    TwoPoint { z: [f64; 2], p_i: f64, p_j: f64 },
    /// Three-letter alphabet: multinomial enumeration.
    ThreePoint { z: [f64; 3], p_i: [f64; 3], p_j: [f64; 3] },
    /// lambda(n) is Gaussian under both measures.
    Gaussian { delta: f64 },
    Poisson { rate_i: f64, rate_j: f64 },
    ExpRate { rate_i: f64, rate_j: f64 },
    /// No usable closed form; simulate.
    Mc,
}

impl PairLaw {
    fn classify(fi: &Density, fj: &Density) -> PairLaw {
        match (fi, fj) {
            (Density::Bernoulli { p: pi }, Density::Bernoulli { p: pj }) => {
                let z1 = (pi / pj).ln();
                let z0 = ((1.0 - pi) / (1.0 - pj)).ln();
                PairLaw::TwoPoint { z: [z1, z0], p_i: *pi, p_j: *pj }
            }
            (
                Density::Discrete { probs: pi, .. },
                Density::Discrete { probs: pj, .. },
            ) if pi.len() == 2 => PairLaw::TwoPoint {
                z: [(pi[0] / pj[0]).ln(), (pi[1] / pj[1]).ln()],
                p_i: pi[0],
                p_j: pj[0],
            },
            (
                Density::Discrete { probs: pi, .. },
                Density::Discrete { probs: pj, .. },
            ) if pi.len() == 3 => PairLaw::ThreePoint {
                z: [
                    (pi[0] / pj[0]).ln(),
                    (pi[1] / pj[1]).ln(),
                    (pi[2] / pj[2]).ln(),
                ],
                p_i: [pi[0], pi[1], pi[2]],
                p_j: [pj[0], pj[1], pj[2]],
            },
            (
                Density::GaussianUnitVar { mean: mi },
                Density::GaussianUnitVar { mean: mj },
            ) => PairLaw::Gaussian { delta: (mi - mj).abs() },
            (Density::Poisson { rate: ri }, Density::Poisson { rate: rj }) => {
                PairLaw::Poisson { rate_i: *ri, rate_j: *rj }
            }
            (
                Density::ExponentialRate { rate: ri },
                Density::ExponentialRate { rate: rj },
            ) => PairLaw::ExpRate { rate_i: *ri, rate_j: *rj },
            _ => PairLaw::Mc,
        }
    }

    /// Exact `P_j(lambda(n) > 0) + P_i(lambda(n) <= 0)` when available.
    fn exact_term(&self, n: usize) -> Option<f64> {
        match *self {
            PairLaw::TwoPoint { z, p_i, p_j } => {
                let lam = |k: usize| k as f64 * z[0] + (n - k) as f64 * z[1];
                let mut pj_pos = 0.0;
                let mut pi_nonpos = 0.0;
                for k in 0..=n {
                    let l = lam(k);
                    if l > 0.0 {
                        pj_pos += numeric::binom_pmf(n, k, p_j);
                    } else {
                        pi_nonpos += numeric::binom_pmf(n, k, p_i);
                    }
                }
                Some(pj_pos + pi_nonpos)
            }
            PairLaw::ThreePoint { z, p_i, p_j } => {
                use statrs::function::gamma::ln_gamma;
                let ln_fact = |k: usize| ln_gamma(k as f64 + 1.0);
                let mut pj_pos = 0.0;
                let mut pi_nonpos = 0.0;
                for k0 in 0..=n {
                    for k1 in 0..=(n - k0) {
                        let k2 = n - k0 - k1;
                        let l = k0 as f64 * z[0] + k1 as f64 * z[1] + k2 as f64 * z[2];
                        let ln_coef = ln_fact(n) - ln_fact(k0) - ln_fact(k1) - ln_fact(k2);
                        if l > 0.0 {
                            pj_pos += (ln_coef
                                + k0 as f64 * p_j[0].ln()
                                + k1 as f64 * p_j[1].ln()
                                + k2 as f64 * p_j[2].ln())
                            .exp();
                        } else {
                            pi_nonpos += (ln_coef
                                + k0 as f64 * p_i[0].ln()
                                + k1 as f64 * p_i[1].ln()
                                + k2 as f64 * p_i[2].ln())
                            .exp();
                        }
                    }
                }
                Some(pj_pos + pi_nonpos)
            }
            PairLaw::Gaussian { delta } => {
                // lambda(n) ~ N(+-n d^2/2, n d^2) under P_i / P_j.
                Some(2.0 * normal_cdf(-0.5 * (n as f64).sqrt() * delta))
            }
            PairLaw::Poisson { rate_i, rate_j } => {
                // lambda(n) = c1 * S - n c2, S ~ Poisson(n * rate).
                let c1 = (rate_i / rate_j).ln();
                let c2 = rate_i - rate_j;
                let t = n as f64 * c2 / c1; // lambda > 0 <=> c1 S > n c2
                if c1 > 0.0 {
                    let k = t.floor() as i64; // S > t <=> S >= floor(t)+1
                    let pj_pos = 1.0 - numeric::poisson_cdf(k, n as f64 * rate_j);
                    let pi_nonpos = numeric::poisson_cdf(k, n as f64 * rate_i);
                    Some(pj_pos + pi_nonpos)
                } else {
                    let k = (t.ceil() as i64) - 1; // S < t <=> S <= ceil(t)-1
                    let pj_pos = numeric::poisson_cdf(k, n as f64 * rate_j);
                    let pi_nonpos = 1.0 - numeric::poisson_cdf(k, n as f64 * rate_i);
                    Some(pj_pos + pi_nonpos)
                }
            }
            PairLaw::ExpRate { rate_i, rate_j } => {
                // lambda(n) = n ln(ri/rj) + (rj - ri) S, S ~ Gamma(n, rate).
                let c1 = rate_j - rate_i;
                let t = n as f64 * (rate_j / rate_i).ln() / c1;
                if c1 > 0.0 {
                    let pj_pos = 1.0 - numeric::gamma_cdf(n as f64, rate_j, t);
                    let pi_nonpos = numeric::gamma_cdf(n as f64, rate_i, t);
                    Some(pj_pos + pi_nonpos)
                } else {
                    let pj_pos = numeric::gamma_cdf(n as f64, rate_j, t);
                    let pi_nonpos = 1.0 - numeric::gamma_cdf(n as f64, rate_i, t);
                    Some(pj_pos + pi_nonpos)
                }
            }
            PairLaw::Mc => None,
        }
    }
}

/// Series cap: stop declaring non-convergence only after this many terms.
/// Information-scaled, floored for healthy pairs and walled for degenerate
/// ones (a near-zero-information pair would otherwise ask for billions of
/// terms before admitting defeat).
fn series_cap(kl_sum: f64, tol: f64) -> usize {
    let scaled = 10.0 * tol.ln().abs() / kl_sum;
    (scaled.min(5_000.0).ceil() as usize).max(20)
}

/// Evaluates the L-number `L_ij` of a hypothesis pair.
///
/// `i == j` returns 1 exactly. The series is truncated once three
/// consecutive terms fall below `tol`; failing to get there inside the
/// information-scaled cap is a convergence error.
pub fn l_number(
    model: &SimpleModel,
    i: usize,
    j: usize,
    tol: f64,
    reps_per_term: usize,
    seed: u64,
) -> Result<LNumber> {
    if i == j {
        return Ok(LNumber {
            value: 1.0,
            se: 0.0,
            n_terms_used: 0,
            terms: Vec::new(),
            method: SeriesMethod::ExactSeries,
        });
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Precondition(format!("tol must sit in (0,1), got {tol}")));
    }
    let kl_sum = model.kl(i, j)? + model.kl(j, i)?;
    if kl_sum <= 0.0 {
        return Err(Error::Precondition("degenerate pair: zero information".into()));
    }
    let cap = series_cap(kl_sum, tol);
    let law = PairLaw::classify(model.density(i), model.density(j));
    match law.exact_term(1) {
        Some(_) => {
            run_series(cap, tol, SeriesMethod::ExactSeries, |n| Ok((law.exact_term(n).unwrap(), 0.0)))
        }
        None => {
            if reps_per_term < 100 {
                return Err(Error::Precondition(
                    "Monte Carlo series needs reps_per_term >= 100".into(),
                ));
            }
            // One walk per replication serves every n: count sign events at
            // each prefix length under both measures.
            let mut pos_under_j = vec![0u32; cap + 1];
            let mut nonpos_under_i = vec![0u32; cap + 1];
            let mut rng = rep_rng(seed, 0);
            for _ in 0..reps_per_term {
                let mut lam = 0.0;
                for n in 1..=cap {
                    let x = model.sample(i, &mut rng);
                    lam += model.log_ratio(i, j, x)?;
                    if lam <= 0.0 {
                        nonpos_under_i[n] += 1;
                    }
                }
            }
            let mut rng = rep_rng(seed, 1);
            for _ in 0..reps_per_term {
                let mut lam = 0.0;
                for n in 1..=cap {
                    let x = model.sample(j, &mut rng);
                    lam += model.log_ratio(i, j, x)?;
                    if lam > 0.0 {
                        pos_under_j[n] += 1;
                    }
                }
            }
            let r = reps_per_term as f64;
            run_series(cap, tol, SeriesMethod::McSeries, |n| {
                let pj = pos_under_j[n] as f64 / r;
                let pi = nonpos_under_i[n] as f64 / r;
                let se = ((pj * (1.0 - pj) + pi * (1.0 - pi)) / r).sqrt();
                Ok((pj + pi, se))
            })
        }
    }
}

fn run_series(
    cap: usize,
    tol: f64,
    method: SeriesMethod,
    mut prob_sum_at: impl FnMut(usize) -> Result<(f64, f64)>,
) -> Result<LNumber> {
    let mut terms = Vec::new();
    let mut exponent = 0.0;
    let mut exponent_var = 0.0;
    let mut small_streak = 0usize;
    for n in 1..=cap {
        let (p, p_se) = prob_sum_at(n)?;
        let value = p / n as f64;
        let se = p_se / n as f64;
        terms.push(TermEstimate { n, value, se });
        exponent += value;
        exponent_var += se * se;
        small_streak = if value < tol { small_streak + 1 } else { 0 };
        if small_streak >= 3 {
            let value = (-exponent).exp();
            return Ok(LNumber {
                value,
                se: value * exponent_var.sqrt(),
                n_terms_used: n,
                terms,
                method,
            });
        }
    }
    Err(Error::Numeric(format!(
        "L-number series not visibly converging within {cap} terms (tol {tol:e})"
    )))
}

/// Overshoot correction factor `zeta_ij = L_ij / I_ij`.
#[derive(Debug, Clone)]
pub struct Zeta {
    pub value: f64,
    pub l_number: LNumber,
    pub kl: f64,
}

/// `zeta_ij = L_ij / I_ij`. For arithmetic (lattice) LLR distributions the
/// limit characterization of zeta is only heuristic, but the ratio itself
/// is still well defined and is what the threshold corrections consume.
pub fn zeta(
    model: &SimpleModel,
    i: usize,
    j: usize,
    tol: f64,
    reps_per_term: usize,
    seed: u64,
) -> Result<Zeta> {
    if i == j {
        return Err(Error::Precondition("zeta needs i != j".into()));
    }
    let l = l_number(model, i, j, tol, reps_per_term, seed)?;
    let kl = model.kl(i, j)?;
    Ok(Zeta { value: l.value / kl, l_number: l, kl })
}

/// Direct finite-boundary estimate of `E_i[exp{-(lambda_ij(T(a)) - a)}]`,
/// the quantity whose large-`a` limit zeta approximates. Used as a
/// cross-check oracle for the series route.
pub fn zeta_mc_direct(
    model: &SimpleModel,
    i: usize,
    j: usize,
    a: f64,
    reps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if a <= 0.0 || reps < 2 {
        return Err(Error::Precondition("zeta_mc_direct needs a > 0 and reps >= 2".into()));
    }
    let mut rng = rep_rng(seed, 0);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..reps {
        let mut lam = 0.0;
        let mut steps = 0usize;
        while lam < a {
            let x = model.sample(i, &mut rng);
            lam += model.log_ratio(i, j, x)?;
            steps += 1;
            if steps >= WALK_STEP_CAP {
                return Err(Error::Precondition(
                    "LLR walk failed to cross; nonpositive information?".into(),
                ));
            }
        }
        let v = (-(lam - a)).exp();
        sum += v;
        sumsq += v * v;
    }
    let n = reps as f64;
    let mean = sum / n;
    let var = (sumsq - n * mean * mean).max(0.0) / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// L-number of a stream subset in the multistream testing problem:
/// `lambda_B(n) = sum_{s in B} lambda_s(n)` with per-stream null/signal
/// density pairs `(g_s, f_s)`.
///
/// Exact when every member stream is unit-variance Gaussian; Monte Carlo
/// otherwise.
pub fn l_number_multistream(
    streams: &[(Density, Density)],
    members: &[usize],
    tol: f64,
    reps_per_term: usize,
    seed: u64,
) -> Result<LNumber> {
    if members.is_empty() {
        return Err(Error::Precondition("subset must be nonempty".into()));
    }
    // Aggregate information of the subset walk under signal and null.
    let mut info_fwd = 0.0;
    let mut info_bwd = 0.0;
    let mut gaussian_delta_sq = Some(0.0);
    for &s in members {
        let (g, f) = &streams[s];
        let pair = SimpleModel::binary(g.clone(), f.clone())?;
        info_fwd += pair.kl(1, 0)?;
        info_bwd += pair.kl(0, 1)?;
        gaussian_delta_sq = match (gaussian_delta_sq, g, f) {
            (
                Some(acc),
                Density::GaussianUnitVar { mean: mg },
                Density::GaussianUnitVar { mean: mf },
            ) => Some(acc + (mf - mg) * (mf - mg)),
            _ => None,
        };
    }
    if info_fwd + info_bwd <= 0.0 {
        return Err(Error::Precondition("subset carries zero information".into()));
    }
    let cap = series_cap(info_fwd + info_bwd, tol);
    if let Some(d2) = gaussian_delta_sq {
        let delta = d2.sqrt();
        return run_series(cap, tol, SeriesMethod::ExactSeries, |n| {
            Ok((2.0 * normal_cdf(-0.5 * (n as f64).sqrt() * delta), 0.0))
        });
    }
    if reps_per_term < 100 {
        return Err(Error::Precondition("Monte Carlo series needs reps_per_term >= 100".into()));
    }
    let pairs: Vec<SimpleModel> = members
        .iter()
        .map(|&s| SimpleModel::binary(streams[s].0.clone(), streams[s].1.clone()))
        .collect::<Result<_>>()?;
    let mut pos_under_null = vec![0u32; cap + 1];
    let mut nonpos_under_signal = vec![0u32; cap + 1];
    for (arr, hyp, count_pos) in
        [(&mut nonpos_under_signal, 1usize, false), (&mut pos_under_null, 0usize, true)]
    {
        let mut rng = rep_rng(seed, hyp as u64);
        for _ in 0..reps_per_term {
            let mut lam = 0.0;
            for n in 1..=cap {
                for pair in &pairs {
                    let x = pair.sample(hyp, &mut rng);
                    lam += pair.log_ratio(1, 0, x)?;
                }
                if count_pos && lam > 0.0 {
                    arr[n] += 1;
                } else if !count_pos && lam <= 0.0 {
                    arr[n] += 1;
                }
            }
        }
    }
    let r = reps_per_term as f64;
    run_series(cap, tol, SeriesMethod::McSeries, |n| {
        let pj = pos_under_null[n] as f64 / r;
        let pi = nonpos_under_signal[n] as f64 / r;
        let se = ((pj * (1.0 - pj) + pi * (1.0 - pi)) / r).sqrt();
        Ok((pj + pi, se))
    })
}
