//! Probability models for sequential inference.
//!
//! Two model families are provided:
//!
//! - [`SimpleModel`]: a finite list of mutually absolutely continuous
//!   sampling distributions (simple hypotheses H_0..H_N) over a common
//!   support, with log-likelihood-ratio evaluation and sampling.
//! - [`ExpFamily1D`]: a one-parameter exponential family in natural form,
//!   with density ratio `f_t(x)/f_s(x) = exp{(t-s)x - (b(t)-b(s))}`.
//!   It carries `b`, its derivatives, the Kullback-Leibler number
//!   `I(t,s) = (t-s)*bdot(t) - (b(t)-b(s))`, and the clamped MLE.
//!
//! Log-likelihood ratios are the universal currency here: every test
//! statistic downstream is built from `log f_i(x) - log f_j(x)`.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use crate::error::{Error, Result};
use crate::numeric;

/// Support classification of a sampling distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportKind {
    Discrete,
    Continuous,
}

/// A single sampling distribution with log-density evaluation and sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    /// P(X=1) = p on {0, 1}.
    Bernoulli { p: f64 },
    /// N(mean, 1).
    GaussianUnitVar { mean: f64 },
    /// Exponential with the given rate (mean 1/rate).
    ExponentialRate { rate: f64 },
    /// Poisson with the given rate.
    Poisson { rate: f64 },
    /// Finite alphabet with explicit point probabilities.
    Discrete { support: Vec<f64>, probs: Vec<f64> },
}

impl Density {
    pub fn support_kind(&self) -> SupportKind {
        match self {
            Density::Bernoulli { .. } | Density::Poisson { .. } | Density::Discrete { .. } => {
                SupportKind::Discrete
            }
            Density::GaussianUnitVar { .. } | Density::ExponentialRate { .. } => {
                SupportKind::Continuous
            }
        }
    }

    /// Log density (or log pmf) at `x`. Returns `-inf` outside the support.
    pub fn log_density(&self, x: f64) -> f64 {
        match self {
            Density::Bernoulli { p } => {
                if x == 1.0 {
                    p.ln()
                } else if x == 0.0 {
                    (1.0 - p).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Density::GaussianUnitVar { mean } => {
                let d = x - mean;
                -0.5 * d * d - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Density::ExponentialRate { rate } => {
                if x >= 0.0 {
                    rate.ln() - rate * x
                } else {
                    f64::NEG_INFINITY
                }
            }
            Density::Poisson { rate } => {
                if x >= 0.0 && x.fract() == 0.0 {
                    let k = x;
                    k * rate.ln() - rate - statrs::function::gamma::ln_gamma(k + 1.0)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Density::Discrete { support, probs } => match find_support_point(support, x) {
                Some(idx) => probs[idx].ln(),
                None => f64::NEG_INFINITY,
            },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Density::Bernoulli { p } => {
                if rng.gen_bool(*p) {
                    1.0
                } else {
                    0.0
                }
            }
            Density::GaussianUnitVar { mean } => {
                Normal::new(*mean, 1.0).expect("unit variance").sample(rng)
            }
            Density::ExponentialRate { rate } => Exp::new(*rate).expect("positive rate").sample(rng),
            Density::Poisson { rate } => Poisson::new(*rate).expect("positive rate").sample(rng),
            Density::Discrete { support, probs } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (x, p) in support.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *x;
                    }
                }
                *support.last().expect("nonempty support")
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Density::Bernoulli { p } => p.is_finite() && *p > 0.0 && *p < 1.0,
            Density::GaussianUnitVar { mean } => mean.is_finite(),
            Density::ExponentialRate { rate } | Density::Poisson { rate } => {
                rate.is_finite() && *rate > 0.0
            }
            Density::Discrete { support, probs } => {
                let sum: f64 = probs.iter().sum();
                !support.is_empty()
                    && support.len() == probs.len()
                    && probs.iter().all(|p| p.is_finite() && *p > 0.0)
                    && (sum - 1.0).abs() <= 1e-12
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("invalid density parameters: {self:?}")))
        }
    }

    fn same_family(&self, other: &Density) -> bool {
        match (self, other) {
            (Density::Bernoulli { .. }, Density::Bernoulli { .. })
            | (Density::GaussianUnitVar { .. }, Density::GaussianUnitVar { .. })
            | (Density::ExponentialRate { .. }, Density::ExponentialRate { .. })
            | (Density::Poisson { .. }, Density::Poisson { .. }) => true,
            (
                Density::Discrete { support: a, .. },
                Density::Discrete { support: b, .. },
            ) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12),
            _ => false,
        }
    }
}

fn find_support_point(support: &[f64], x: f64) -> Option<usize> {
    support.iter().position(|s| (s - x).abs() <= 1e-9)
}

// ---------------------------------------------------------------------------
// SimpleModel
// ---------------------------------------------------------------------------

/// A finite family of N+1 simple hypotheses over a common support.
///
/// Mutual absolute continuity is enforced structurally: all hypotheses come
/// from the same family, and discrete families must put positive mass on
/// every shared support point. A zero density at an observed point is
/// therefore a hard model error, not a data event.
#[derive(Debug, Clone)]
pub struct SimpleModel {
    densities: Vec<Density>,
}

impl SimpleModel {
    pub fn new(densities: Vec<Density>) -> Result<Self> {
        if densities.len() < 2 {
            return Err(Error::Precondition(
                "a hypothesis family needs at least two members (N >= 1)".into(),
            ));
        }
        for d in &densities {
            d.validate()?;
        }
        let first = &densities[0];
        if !densities.iter().all(|d| d.same_family(first)) {
            return Err(Error::Precondition(
                "all hypotheses must share one family and support".into(),
            ));
        }
        Ok(SimpleModel { densities })
    }

    /// Two-hypothesis shorthand: H_0 = `f0`, H_1 = `f1`.
    pub fn binary(f0: Density, f1: Density) -> Result<Self> {
        SimpleModel::new(vec![f0, f1])
    }

    /// Number of hypotheses, N+1.
    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn density(&self, i: usize) -> &Density {
        &self.densities[i]
    }

    pub fn densities(&self) -> &[Density] {
        &self.densities
    }

    pub fn support_kind(&self) -> SupportKind {
        self.densities[0].support_kind()
    }

    /// log f_i(x) - log f_j(x).
    ///
    /// Errors if `i == j` or if either log density is not finite at `x`
    /// (support mismatch breaks mutual absolute continuity).
    pub fn log_ratio(&self, i: usize, j: usize, x: f64) -> Result<f64> {
        if i == j {
            return Err(Error::Precondition(format!("log_ratio needs i != j, got i=j={i}")));
        }
        let li = self.densities[i].log_density(x);
        let lj = self.densities[j].log_density(x);
        if !li.is_finite() {
            return Err(Error::Precondition(format!(
                "density {i} is not positive and finite at x={x}"
            )));
        }
        if !lj.is_finite() {
            return Err(Error::Precondition(format!(
                "density {j} is not positive and finite at x={x}"
            )));
        }
        Ok(li - lj)
    }

    /// Kullback-Leibler information number I_ij = E_i[log f_i/f_j], in
    /// closed form for every built-in family.
    pub fn kl(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Err(Error::Precondition(format!("kl needs i != j, got i=j={i}")));
        }
        let v = match (&self.densities[i], &self.densities[j]) {
            (Density::Bernoulli { p: pi }, Density::Bernoulli { p: pj }) => {
                pi * (pi / pj).ln() + (1.0 - pi) * ((1.0 - pi) / (1.0 - pj)).ln()
            }
            (
                Density::GaussianUnitVar { mean: mi },
                Density::GaussianUnitVar { mean: mj },
            ) => 0.5 * (mi - mj) * (mi - mj),
            (
                Density::ExponentialRate { rate: ri },
                Density::ExponentialRate { rate: rj },
            ) => (ri / rj).ln() + rj / ri - 1.0,
            (Density::Poisson { rate: ri }, Density::Poisson { rate: rj }) => {
                ri * (ri / rj).ln() + rj - ri
            }
            (
                Density::Discrete { probs: pi, .. },
                Density::Discrete { probs: pj, .. },
            ) => pi
                .iter()
                .zip(pj)
                .map(|(a, b)| a * (a / b).ln())
                .sum(),
            _ => unreachable!("construction enforces a common family"),
        };
        Ok(v)
    }

    /// Monte Carlo estimate of I_ij with its standard error; an independent
    /// route used to cross-check the closed forms.
    pub fn kl_mc<R: Rng + ?Sized>(
        &self,
        i: usize,
        j: usize,
        reps: usize,
        rng: &mut R,
    ) -> Result<(f64, f64)> {
        if reps < 2 {
            return Err(Error::Precondition("kl_mc needs reps >= 2".into()));
        }
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..reps {
            let x = self.densities[i].sample(rng);
            let z = self.log_ratio(i, j, x)?;
            sum += z;
            sumsq += z * z;
        }
        let n = reps as f64;
        let mean = sum / n;
        let var = (sumsq - n * mean * mean).max(0.0) / (n - 1.0);
        Ok((mean, (var / n).sqrt()))
    }

    /// LLR path of `observations` for the pair (i, j).
    pub fn llr_path(&self, i: usize, j: usize, observations: &[f64]) -> Result<LlrPath> {
        if observations.is_empty() {
            return Err(Error::Precondition("llr_path needs a nonempty observation slice".into()));
        }
        let mut increments = Vec::with_capacity(observations.len());
        for (t, &x) in observations.iter().enumerate() {
            let z = self.log_ratio(i, j, x).map_err(|e| {
                Error::Precondition(format!("observation {t}: {e}"))
            })?;
            increments.push(z);
        }
        Ok(LlrPath::from_increments(increments))
    }

    /// E_i[(Z_ij^+)^2], the positive-part second moment of one LLR
    /// increment, in closed form for every built-in family.
    pub fn llr_plus_sq_moment(&self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Err(Error::Precondition("llr_plus_sq_moment needs i != j".into()));
        }
        let v = match (&self.densities[i], &self.densities[j]) {
            (Density::Bernoulli { p: pi }, Density::Bernoulli { p: pj }) => {
                let z1 = (pi / pj).ln();
                let z0 = ((1.0 - pi) / (1.0 - pj)).ln();
                let mut m = 0.0;
                if z1 > 0.0 {
                    m += pi * z1 * z1;
                }
                if z0 > 0.0 {
                    m += (1.0 - pi) * z0 * z0;
                }
                m
            }
            (Density::Discrete { probs: pi, .. }, Density::Discrete { probs: pj, .. }) => pi
                .iter()
                .zip(pj)
                .map(|(a, b)| {
                    let z = (a / b).ln();
                    if z > 0.0 {
                        a * z * z
                    } else {
                        0.0
                    }
                })
                .sum(),
            (
                Density::GaussianUnitVar { mean: mi },
                Density::GaussianUnitVar { mean: mj },
            ) => {
                // Z ~ N(I, d^2) under H_i with d = mi - mj, I = d^2/2.
                let d = mi - mj;
                let mu = 0.5 * d * d;
                let sd = d.abs();
                gaussian_plus_sq_moment(mu, sd)
            }
            (Density::Poisson { rate: ri }, Density::Poisson { rate: rj }) => {
                // Z = k ln(ri/rj) - (ri - rj), k ~ Poisson(ri).
                let c1 = (ri / rj).ln();
                let c0 = -(ri - rj);
                let kmax = (ri + 40.0 * ri.sqrt() + 40.0).ceil() as i64;
                let mut pmf = (-ri).exp();
                let mut m = 0.0;
                for k in 0..=kmax {
                    let z = c0 + c1 * k as f64;
                    if z > 0.0 {
                        m += pmf * z * z;
                    }
                    pmf *= ri / (k + 1) as f64;
                }
                m
            }
            (
                Density::ExponentialRate { rate: ri },
                Density::ExponentialRate { rate: rj },
            ) => {
                // Z = ln(ri/rj) + (rj - ri) x, x ~ Exp(ri).
                let a = (ri / rj).ln();
                let b = rj - ri;
                exp_affine_plus_sq_moment(a, b, *ri)
            }
            _ => unreachable!("construction enforces a common family"),
        };
        Ok(v)
    }

    pub fn sample<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> f64 {
        self.densities[i].sample(rng)
    }
}

/// E[(Z^+)^2] for Z ~ N(mu, sd^2).
pub(crate) fn gaussian_plus_sq_moment(mu: f64, sd: f64) -> f64 {
    let r = mu / sd;
    (mu * mu + sd * sd) * numeric::normal_cdf(r) + mu * sd * numeric::normal_pdf(r)
}

/// E[((a + bX)^+)^2] for X ~ Exp(rate).
fn exp_affine_plus_sq_moment(a: f64, b: f64, rate: f64) -> f64 {
    // tail integral from t: int_t^inf (a+bx)^2 rate e^{-rate x} dx
    let tail = |t: f64| -> f64 {
        let v = a + b * t;
        (-rate * t).exp() * (v * v + 2.0 * b * v / rate + 2.0 * b * b / (rate * rate))
    };
    if b == 0.0 {
        return if a > 0.0 { a * a } else { 0.0 };
    }
    let x_star = -a / b;
    if b > 0.0 {
        tail(x_star.max(0.0))
    } else if x_star <= 0.0 {
        0.0
    } else {
        tail(0.0) - tail(x_star)
    }
}

// ---------------------------------------------------------------------------
// LlrPath
// ---------------------------------------------------------------------------

/// Increments and cumulative sums of a log-likelihood-ratio path.
///
/// `cumulative(0) == 0` by the empty-sum convention; `cumulative(n)` is
/// computed in the same left-to-right order as the increments, exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrPath {
    increments: Vec<f64>,
    cumulative: Vec<f64>, // length n+1, leading 0
}

impl LlrPath {
    pub fn from_increments(increments: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(increments.len() + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for z in &increments {
            acc += z;
            cumulative.push(acc);
        }
        LlrPath { increments, cumulative }
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Cumulative LLR after n observations; n = 0 gives 0.
    pub fn cumulative(&self, n: usize) -> f64 {
        self.cumulative[n]
    }

    pub fn terminal(&self) -> f64 {
        *self.cumulative.last().expect("leading zero always present")
    }
}

// ---------------------------------------------------------------------------
// One-parameter exponential family
// ---------------------------------------------------------------------------

/// Built-in exponential families, parameterized by the natural parameter.
///
/// The density ratio is `exp{(t-s)x - (b(t)-b(s))}`:
/// - Gaussian N(t, 1):          b(t) = t^2/2
/// - Bernoulli, t = logit p:    b(t) = ln(1+e^t)
/// - Poisson, t = ln rate:      b(t) = e^t
/// - Exponential, t = -rate:    b(t) = -ln(-t) on t < 0
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpFamilyKind {
    GaussianUnitVar,
    Bernoulli,
    Poisson,
    ExponentialRate,
}

/// One-parameter exponential family on a closed natural-parameter interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFamily1D {
    pub kind: ExpFamilyKind,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

impl ExpFamily1D {
    pub fn new(kind: ExpFamilyKind, theta_lo: f64, theta_hi: f64) -> Result<Self> {
        if !(theta_lo.is_finite() && theta_hi.is_finite() && theta_lo < theta_hi) {
            return Err(Error::Precondition(format!(
                "natural parameter interval must be finite with lo < hi, got [{theta_lo}, {theta_hi}]"
            )));
        }
        if kind == ExpFamilyKind::ExponentialRate && theta_hi >= 0.0 {
            return Err(Error::Precondition(
                "exponential-rate family needs a negative natural parameter interval".into(),
            ));
        }
        Ok(ExpFamily1D { kind, theta_lo, theta_hi })
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.theta_lo && theta <= self.theta_hi
    }

    /// Log-partition function b.
    pub fn b(&self, theta: f64) -> f64 {
        match self.kind {
            ExpFamilyKind::GaussianUnitVar => 0.5 * theta * theta,
            ExpFamilyKind::Bernoulli => softplus(theta),
            ExpFamilyKind::Poisson => theta.exp(),
            ExpFamilyKind::ExponentialRate => -(-theta).ln(),
        }
    }

    /// bdot = E_theta[X].
    pub fn bdot(&self, theta: f64) -> f64 {
        match self.kind {
            ExpFamilyKind::GaussianUnitVar => theta,
            ExpFamilyKind::Bernoulli => sigmoid(theta),
            ExpFamilyKind::Poisson => theta.exp(),
            ExpFamilyKind::ExponentialRate => -1.0 / theta,
        }
    }

    /// bddot = Var_theta(X) > 0.
    pub fn bddot(&self, theta: f64) -> f64 {
        match self.kind {
            ExpFamilyKind::GaussianUnitVar => 1.0,
            ExpFamilyKind::Bernoulli => {
                let s = sigmoid(theta);
                s * (1.0 - s)
            }
            ExpFamilyKind::Poisson => theta.exp(),
            ExpFamilyKind::ExponentialRate => 1.0 / (theta * theta),
        }
    }

    pub fn sigma(&self, theta: f64) -> f64 {
        self.bddot(theta).sqrt()
    }

    /// Kullback-Leibler number I(theta, other) = (t-s)bdot(t) - (b(t)-b(s)).
    pub fn kl(&self, theta: f64, other: f64) -> f64 {
        (theta - other) * self.bdot(theta) - (self.b(theta) - self.b(other))
    }

    /// LLR of theta against other for one observation x.
    pub fn log_ratio(&self, theta: f64, other: f64, x: f64) -> f64 {
        (theta - other) * x - (self.b(theta) - self.b(other))
    }

    /// Cumulative LLR of theta against other given S_n and n.
    pub fn llr_from_sufficient(&self, theta: f64, other: f64, s_n: f64, n: usize) -> f64 {
        (theta - other) * s_n - n as f64 * (self.b(theta) - self.b(other))
    }

    /// Concrete sampling distribution at theta.
    pub fn density(&self, theta: f64) -> Density {
        match self.kind {
            ExpFamilyKind::GaussianUnitVar => Density::GaussianUnitVar { mean: theta },
            ExpFamilyKind::Bernoulli => Density::Bernoulli { p: sigmoid(theta) },
            ExpFamilyKind::Poisson => Density::Poisson { rate: theta.exp() },
            ExpFamilyKind::ExponentialRate => Density::ExponentialRate { rate: -theta },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        self.density(theta).sample(rng)
    }

    /// Maximizer of `theta*S_n - n*b(theta)` over `[lo, hi]`: the root of
    /// `bdot(theta) = S_n/n` when interior, else the nearer endpoint.
    ///
    /// Derivative-free bisection on `bdot(theta) - S_n/n` to 1e-10 in theta.
    pub fn mle_clamped(&self, s_n: f64, n: usize, lo: f64, hi: f64) -> Result<f64> {
        if n == 0 {
            return Err(Error::Precondition("mle needs n >= 1".into()));
        }
        if lo < self.theta_lo - 1e-12 || hi > self.theta_hi + 1e-12 || lo >= hi {
            return Err(Error::Precondition(format!(
                "mle interval [{lo}, {hi}] must sit inside the parameter space [{}, {}]",
                self.theta_lo, self.theta_hi
            )));
        }
        let xbar = s_n / n as f64;
        if xbar <= self.bdot(lo) {
            return Ok(lo);
        }
        if xbar >= self.bdot(hi) {
            return Ok(hi);
        }
        numeric::bisect_root(|t| self.bdot(t) - xbar, lo, hi, 1e-10, 200)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Natural parameter of a Bernoulli success probability.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

// ---------------------------------------------------------------------------
// Observation sources
// ---------------------------------------------------------------------------

/// Source of scalar observations consumed by the sequential executors.
///
/// Executors state how many observations they may pull (their `cap`);
/// sources must be able to supply at least that many.
pub trait ObsSource {
    fn next_obs(&mut self) -> f64;
}

impl<F: FnMut() -> f64> ObsSource for F {
    fn next_obs(&mut self) -> f64 {
        self()
    }
}

/// Replays a recorded slice of observations.
pub struct SliceSource<'a> {
    data: &'a [f64],
    pos: usize,
}

impl<'a> SliceSource<'a> {
    pub fn new(data: &'a [f64]) -> Self {
        SliceSource { data, pos: 0 }
    }
}

impl ObsSource for SliceSource<'_> {
    fn next_obs(&mut self) -> f64 {
        let x = self.data[self.pos];
        self.pos += 1;
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bern_model() -> SimpleModel {
        SimpleModel::binary(Density::Bernoulli { p: 0.4 }, Density::Bernoulli { p: 0.6 }).unwrap()
    }

    #[test]
    fn log_ratio_rejects_equal_indices() {
        let m = bern_model();
        assert!(m.log_ratio(1, 1, 1.0).is_err());
    }

    #[test]
    fn bernoulli_log_ratio_matches_arithmetic() {
        let m = bern_model();
        let z = m.log_ratio(1, 0, 1.0).unwrap();
        assert!((z - (0.6f64 / 0.4).ln()).abs() < 1e-12);
        assert!((z - 0.405_465_108_108_164_4).abs() < 1e-12);
    }

    #[test]
    fn gaussian_log_ratio_is_affine_in_x() {
        let (t0, t1) = (-0.3, 0.9);
        let m = SimpleModel::binary(
            Density::GaussianUnitVar { mean: t0 },
            Density::GaussianUnitVar { mean: t1 },
        )
        .unwrap();
        let d = t1 - t0;
        for &x in &[-2.0, 0.0, 0.7, 3.5] {
            let z = m.log_ratio(1, 0, x).unwrap();
            let expect = d * x - d * (t0 + t1) / 2.0;
            assert!((z - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn log_ratio_flags_support_mismatch() {
        let m = SimpleModel::binary(
            Density::ExponentialRate { rate: 1.0 },
            Density::ExponentialRate { rate: 2.0 },
        )
        .unwrap();
        let err = m.log_ratio(0, 1, -1.0).unwrap_err();
        assert!(err.to_string().contains("density 0"));
    }

    #[test]
    fn discrete_probabilities_must_sum_to_one() {
        let bad = SimpleModel::binary(
            Density::Discrete { support: vec![0.0, 1.0], probs: vec![0.5, 0.499] },
            Density::Discrete { support: vec![0.0, 1.0], probs: vec![0.4, 0.6] },
        );
        assert!(bad.is_err());
    }

    #[test]
    fn kl_closed_forms() {
        let m = bern_model();
        let i = m.kl(1, 0).unwrap();
        let expect = 0.6 * (1.5f64).ln() + 0.4 * (2.0f64 / 3.0).ln();
        assert!((i - expect).abs() < 1e-12);
        assert!((i - 0.081_093).abs() < 1e-6);

        let g = SimpleModel::binary(
            Density::GaussianUnitVar { mean: 0.0 },
            Density::GaussianUnitVar { mean: 0.8 },
        )
        .unwrap();
        assert!((g.kl(1, 0).unwrap() - 0.32).abs() < 1e-12);
    }

    #[test]
    fn kl_mc_agrees_with_closed_form_within_three_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [
            bern_model(),
            SimpleModel::binary(
                Density::GaussianUnitVar { mean: 0.0 },
                Density::GaussianUnitVar { mean: 0.5 },
            )
            .unwrap(),
            SimpleModel::binary(
                Density::Poisson { rate: 2.0 },
                Density::Poisson { rate: 3.0 },
            )
            .unwrap(),
            SimpleModel::binary(
                Density::ExponentialRate { rate: 1.0 },
                Density::ExponentialRate { rate: 1.7 },
            )
            .unwrap(),
        ] {
            let exact = m.kl(1, 0).unwrap();
            let (mc, se) = m.kl_mc(1, 0, 40_000, &mut rng).unwrap();
            assert!(
                (mc - exact).abs() <= 3.0 * se,
                "kl mc {mc} +/- {se} vs exact {exact}"
            );
            assert!(exact > 0.0);
        }
    }

    #[test]
    fn llr_path_cumulative_and_empty_prefix() {
        let m = bern_model();
        let path = m.llr_path(1, 0, &[1.0, 0.0]).unwrap();
        assert_eq!(path.cumulative(0), 0.0);
        assert!((path.cumulative(1) - 0.405_465_108_108_164_4).abs() < 1e-12);
        assert!(path.cumulative(2).abs() < 1e-12);
    }

    #[test]
    fn llr_path_additivity_through_middle_hypothesis() {
        let m = SimpleModel::new(vec![
            Density::Bernoulli { p: 0.3 },
            Density::Bernoulli { p: 0.5 },
            Density::Bernoulli { p: 0.7 },
        ])
        .unwrap();
        let data = [1.0, 0.0, 0.0, 1.0, 1.0];
        let p02 = m.llr_path(0, 2, &data).unwrap();
        let p01 = m.llr_path(0, 1, &data).unwrap();
        let p12 = m.llr_path(1, 2, &data).unwrap();
        for n in 0..=data.len() {
            assert!((p02.cumulative(n) - (p01.cumulative(n) + p12.cumulative(n))).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn llr_antisymmetry_is_exact(bits in proptest::collection::vec(prop::bool::ANY, 1..40)) {
            let m = bern_model();
            let data: Vec<f64> = bits.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
            let fwd = m.llr_path(1, 0, &data).unwrap();
            let bwd = m.llr_path(0, 1, &data).unwrap();
            for n in 0..=data.len() {
                prop_assert_eq!(fwd.cumulative(n), -bwd.cumulative(n));
            }
        }

        #[test]
        fn path_cumulative_matches_running_sum(zs in proptest::collection::vec(-5.0f64..5.0, 1..60)) {
            let path = LlrPath::from_increments(zs.clone());
            let mut acc = 0.0;
            for (t, z) in zs.iter().enumerate() {
                acc += z;
                prop_assert_eq!(path.cumulative(t + 1), acc);
            }
        }
    }

    #[test]
    fn expfamily_identities_match_density_ratio() {
        let cases = [
            (ExpFamily1D::new(ExpFamilyKind::GaussianUnitVar, -5.0, 5.0).unwrap(), 0.9, -0.4, 1.3),
            (ExpFamily1D::new(ExpFamilyKind::Bernoulli, -4.0, 4.0).unwrap(), logit(0.6), logit(0.4), 1.0),
            (ExpFamily1D::new(ExpFamilyKind::Poisson, -2.0, 2.0).unwrap(), 0.5, -0.2, 3.0),
            (ExpFamily1D::new(ExpFamilyKind::ExponentialRate, -6.0, -0.1).unwrap(), -1.0, -2.5, 0.7),
        ];
        for (fam, t, s, x) in cases {
            let m = SimpleModel::binary(fam.density(s), fam.density(t)).unwrap();
            let from_density = m.log_ratio(1, 0, x).unwrap();
            let from_family = fam.log_ratio(t, s, x);
            assert!(
                (from_density - from_family).abs() < 1e-10,
                "{:?}: {from_density} vs {from_family}",
                fam.kind
            );
            // I(t, s) equals the closed-form family KL of the projections.
            let kl_density = m.kl(1, 0).unwrap();
            assert!((fam.kl(t, s) - kl_density).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_kl_is_half_squared_distance() {
        let fam = ExpFamily1D::new(ExpFamilyKind::GaussianUnitVar, -10.0, 10.0).unwrap();
        assert!((fam.kl(1.2, 0.5) - 0.5 * 0.7 * 0.7).abs() < 1e-14);
        assert_eq!(fam.kl(0.8, 0.8), 0.0);
    }

    #[test]
    fn expfamily_moments_verified_by_mc() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fams = [
            (ExpFamily1D::new(ExpFamilyKind::GaussianUnitVar, -5.0, 5.0).unwrap(), 0.7),
            (ExpFamily1D::new(ExpFamilyKind::Bernoulli, -4.0, 4.0).unwrap(), logit(0.35)),
            (ExpFamily1D::new(ExpFamilyKind::Poisson, -2.0, 2.0).unwrap(), 0.9),
            (ExpFamily1D::new(ExpFamilyKind::ExponentialRate, -6.0, -0.1).unwrap(), -1.4),
        ];
        let reps = 60_000;
        for (fam, theta) in fams {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..reps {
                let x = fam.sample(theta, &mut rng);
                sum += x;
                sumsq += x * x;
            }
            let n = reps as f64;
            let mean = sum / n;
            let var = (sumsq - n * mean * mean) / (n - 1.0);
            let se_mean = (fam.bddot(theta) / n).sqrt();
            assert!(
                (mean - fam.bdot(theta)).abs() <= 3.0 * se_mean,
                "{:?} mean", fam.kind
            );
            // crude SE for the variance estimate; 3-sigma band with slack
            let se_var = var * (2.0 / n).sqrt() * 3.0;
            assert!(
                (var - fam.bddot(theta)).abs() <= 3.0 * se_var.max(1e-3),
                "{:?} var {var} vs {}", fam.kind, fam.bddot(theta)
            );
        }
    }

    #[test]
    fn mle_clamped_gaussian_is_clamped_mean() {
        let fam = ExpFamily1D::new(ExpFamilyKind::GaussianUnitVar, -5.0, 5.0).unwrap();
        let m = fam.mle_clamped(3.0, 4, -1.0, 1.0).unwrap();
        assert!((m - 0.75).abs() < 1e-9);
        assert_eq!(fam.mle_clamped(30.0, 4, -1.0, 1.0).unwrap(), 1.0);
        assert_eq!(fam.mle_clamped(-30.0, 4, -1.0, 1.0).unwrap(), -1.0);
    }

    #[test]
    fn mle_clamps_when_mean_outside_bdot_range() {
        let fam = ExpFamily1D::new(ExpFamilyKind::Bernoulli, -2.0, 2.0).unwrap();
        // S_n/n above bdot(hi): all successes
        assert_eq!(fam.mle_clamped(8.0, 8, -2.0, 2.0).unwrap(), 2.0);
    }

    #[test]
    fn mle_objective_dominates_grid() {
        let cases = [
            (ExpFamily1D::new(ExpFamilyKind::Bernoulli, -3.0, 3.0).unwrap(), 13.0, 20),
            (ExpFamily1D::new(ExpFamilyKind::Poisson, -1.5, 1.5).unwrap(), 47.0, 20),
            (ExpFamily1D::new(ExpFamilyKind::ExponentialRate, -8.0, -0.2).unwrap(), 9.3, 20),
        ];
        for (fam, s_n, n) in cases {
            let (lo, hi) = (fam.theta_lo, fam.theta_hi);
            let mle = fam.mle_clamped(s_n, n, lo, hi).unwrap();
            let obj = |t: f64| t * s_n - n as f64 * fam.b(t);
            let best = obj(mle);
            for k in 0..=64 {
                let t = lo + (hi - lo) * k as f64 / 64.0;
                assert!(
                    best >= obj(t) - 1e-9,
                    "{:?}: grid point {t} beats mle {mle}",
                    fam.kind
                );
            }
        }
    }

    #[test]
    fn llr_plus_sq_moment_matches_mc() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for m in [
            bern_model(),
            SimpleModel::binary(
                Density::GaussianUnitVar { mean: -0.2 },
                Density::GaussianUnitVar { mean: 0.6 },
            )
            .unwrap(),
            SimpleModel::binary(Density::Poisson { rate: 1.5 }, Density::Poisson { rate: 2.5 }).unwrap(),
            SimpleModel::binary(
                Density::ExponentialRate { rate: 2.0 },
                Density::ExponentialRate { rate: 0.9 },
            )
            .unwrap(),
        ] {
            let exact = m.llr_plus_sq_moment(1, 0).unwrap();
            let reps = 60_000;
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..reps {
                let x = m.sample(1, &mut rng);
                let z = m.log_ratio(1, 0, x).unwrap().max(0.0);
                let v = z * z;
                sum += v;
                sumsq += v * v;
            }
            let n = reps as f64;
            let mean = sum / n;
            let se = (((sumsq - n * mean * mean) / (n - 1.0)).max(0.0) / n).sqrt();
            assert!(
                (mean - exact).abs() <= 3.5 * se + 1e-9,
                "moment {mean} +/- {se} vs exact {exact}"
            );
        }
    }
}
