//! Accepting matrix SPRT for N+1 hypotheses, threshold designs, and the
//! weighted multistream generalized sequential likelihood ratio test.
//!
//! The matrix SPRT accepts hypothesis i at the first n where
//! `lambda_ij(n) >= a_ji` for every `j != i`. Internally the executor runs
//! the accepting-time form
//! `T_i = inf{n: lambda_i0(n) >= max_{j != i}[lambda_j0(n) + a_ji]}`
//! (with `lambda_00 = 0` supplying the j = 0 term) and verifies the direct
//! pairwise form at every stop; a mismatch would indicate a broken
//! threshold matrix.
//!
//! Threshold designs:
//! - first order: `a_ji = |log alpha_ji|`, which guarantees
//!   `alpha_ij(test) <= exp(-a_ij)`;
//! - overshoot-corrected: `a_ji = log(zeta_ij / alpha_ji)`, so the achieved
//!   errors track the targets instead of undershooting them;
//! - Bayes: `A_ji = (pi_j/pi_i) L_ji L-number_ij / c` for sampling cost c.
//!
//! The multistream test watches N independent streams of which an unknown
//! subset B carries signal. It thresholds the weighted generalized LLR
//! `max_B [lambda_B(n) + log pi_B]`, with subset weights optionally skewed
//! by the subset L-numbers (`pi_1 ∝ pi/L_B`, `pi_0 ∝ pi*L_B`).

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Density, ObsSource, SimpleModel};
use crate::sprt::TestOutcome;

// ---------------------------------------------------------------------------
// Threshold matrices
// ---------------------------------------------------------------------------

/// Square matrix of log-thresholds; entry (j, i) is `a_ji`, the level the
/// LLR of i against j must reach before i can be accepted. The diagonal is
/// ignored. `f64::INFINITY` means "never accept against this rival".
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMatrix {
    n_hyp: usize,
    a: Vec<f64>,
}

impl ThresholdMatrix {
    pub fn from_fn(n_hyp: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        if n_hyp < 2 {
            return Err(Error::Precondition("threshold matrix needs N >= 1".into()));
        }
        let mut a = vec![0.0; n_hyp * n_hyp];
        for j in 0..n_hyp {
            for i in 0..n_hyp {
                if i != j {
                    let v = f(j, i);
                    if v.is_nan() {
                        return Err(Error::Precondition(format!("threshold a[{j}][{i}] is NaN")));
                    }
                    a[j * n_hyp + i] = v;
                }
            }
        }
        Ok(ThresholdMatrix { n_hyp, a })
    }

    pub fn uniform(n_hyp: usize, a: f64) -> Result<Self> {
        Self::from_fn(n_hyp, |_, _| a)
    }

    pub fn n_hyp(&self) -> usize {
        self.n_hyp
    }

    /// `a_ji`: threshold on `lambda_ij` for accepting i against j.
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.a[j * self.n_hyp + i]
    }

    pub fn set(&mut self, j: usize, i: usize, v: f64) {
        self.a[j * self.n_hyp + i] = v;
    }
}

/// First-order design `a_ji = |log alpha_ji|` from an error-target matrix.
pub fn thresholds_first_order(alpha: &[Vec<f64>]) -> Result<ThresholdMatrix> {
    validate_alpha(alpha)?;
    ThresholdMatrix::from_fn(alpha.len(), |j, i| alpha[j][i].ln().abs())
}

/// Overshoot-corrected design `a_ji = log(zeta_ij / alpha_ji)`.
///
/// `zeta[i][j]` must hold the correction factor `zeta_ij = L_ij / I_ij` of
/// the pair; the achieved error of accepting i under j is then close to
/// the target `alpha_ji` rather than a factor `zeta` below it.
pub fn thresholds_zeta_corrected(
    alpha: &[Vec<f64>],
    zeta: &[Vec<f64>],
) -> Result<ThresholdMatrix> {
    validate_alpha(alpha)?;
    if zeta.len() != alpha.len() {
        return Err(Error::Precondition("zeta matrix size mismatch".into()));
    }
    ThresholdMatrix::from_fn(alpha.len(), |j, i| (zeta[i][j] / alpha[j][i]).ln())
}

/// Bayes design `A_ji(c) = (pi_j / pi_i) * loss_ji * L_ij / c`.
pub fn thresholds_bayes(
    prior: &[f64],
    loss: &[Vec<f64>],
    lnums: &[Vec<f64>],
    cost: f64,
) -> Result<ThresholdMatrix> {
    let n = prior.len();
    if cost <= 0.0 {
        return Err(Error::Precondition(format!("sampling cost must be positive, got {cost}")));
    }
    if prior.iter().any(|p| *p <= 0.0) {
        return Err(Error::Precondition("prior must be strictly positive".into()));
    }
    if loss.len() != n || lnums.len() != n {
        return Err(Error::Precondition("loss / L-number matrix size mismatch".into()));
    }
    for j in 0..n {
        for i in 0..n {
            if i != j {
                if loss[j][i] <= 0.0 {
                    return Err(Error::Precondition(format!("loss[{j}][{i}] must be positive")));
                }
                if !(lnums[i][j] > 0.0 && lnums[i][j] <= 1.0) {
                    return Err(Error::Precondition(format!(
                        "L-number [{i}][{j}] must sit in (0,1], got {}",
                        lnums[i][j]
                    )));
                }
            }
        }
    }
    ThresholdMatrix::from_fn(n, |j, i| ((prior[j] / prior[i]) * loss[j][i] * lnums[i][j] / cost).ln())
}

fn validate_alpha(alpha: &[Vec<f64>]) -> Result<()> {
    let n = alpha.len();
    if n < 2 || alpha.iter().any(|row| row.len() != n) {
        return Err(Error::Precondition("alpha must be a square matrix with N >= 1".into()));
    }
    for (j, row) in alpha.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            if i != j && !(v > 0.0 && v < 1.0) {
                return Err(Error::Precondition(format!(
                    "alpha[{j}][{i}] must sit in (0,1), got {v}"
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Matrix SPRT executor
// ---------------------------------------------------------------------------

/// Runs the accepting matrix SPRT. Accepts the unique hypothesis whose
/// every pairwise LLR clears its threshold; with some nonpositive
/// thresholds several hypotheses can qualify at the same step, in which
/// case the lowest index wins (deterministic tie rule).
pub fn run_msprt(
    model: &SimpleModel,
    thr: &ThresholdMatrix,
    stream: &mut dyn ObsSource,
    cap: usize,
) -> Result<TestOutcome> {
    let n_hyp = model.len();
    if thr.n_hyp() != n_hyp {
        return Err(Error::Precondition(format!(
            "threshold matrix is {}x{} but the model has {n_hyp} hypotheses",
            thr.n_hyp(),
            thr.n_hyp()
        )));
    }
    if cap == 0 {
        return Err(Error::Precondition("cap must be at least 1".into()));
    }
    // lambda_i0 for every i; lambda_00 stays identically 0.
    let mut lam0 = vec![0.0f64; n_hyp];
    for n in 1..=cap {
        let x = stream.next_obs();
        for i in 1..n_hyp {
            lam0[i] += model.log_ratio(i, 0, x)?;
        }
        for i in 0..n_hyp {
            // accepting-time form: lambda_i0 >= max_{j != i} (lambda_j0 + a_ji)
            let mut rival = f64::NEG_INFINITY;
            for j in 0..n_hyp {
                if j != i {
                    rival = rival.max(lam0[j] + thr.get(j, i));
                }
            }
            if lam0[i] >= rival {
                // direct pairwise form must agree at the stop
                let direct =
                    (0..n_hyp).all(|j| j == i || lam0[i] - lam0[j] >= thr.get(j, i));
                if !direct {
                    return Err(Error::Numeric(format!(
                        "accepting-time and direct matrix-SPRT forms disagree at n={n}, i={i}; \
                         threshold matrix looks inconsistent"
                    )));
                }
                let margin = lam0[i] - rival;
                return Ok(TestOutcome {
                    stop_time: n,
                    decision: i,
                    terminal_llr: margin,
                    truncated: false,
                    path: None,
                });
            }
        }
    }
    // forced call: hypothesis with the largest base LLR
    let best = (0..n_hyp)
        .max_by(|&a, &b| lam0[a].partial_cmp(&lam0[b]).unwrap())
        .unwrap_or(0);
    Ok(TestOutcome {
        stop_time: cap,
        decision: best,
        terminal_llr: lam0[best],
        truncated: true,
        path: None,
    })
}

/// First-order expected-sample-size predictions
/// `E_i[T] ~ max_{j != i} |log alpha_ji| / I_ij`.
pub fn ess_first_order(model: &SimpleModel, alpha: &[Vec<f64>]) -> Result<Vec<f64>> {
    validate_alpha(alpha)?;
    if alpha.len() != model.len() {
        return Err(Error::Precondition("alpha matrix size must match the model".into()));
    }
    let n = model.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut worst = 0.0f64;
        for j in 0..n {
            if j != i {
                let info = model.kl(i, j)?;
                if info <= 0.0 {
                    return Err(Error::Precondition(format!(
                        "degenerate pair ({i},{j}): nonpositive information"
                    )));
                }
                worst = worst.max(alpha[j][i].ln().abs() / info);
            }
        }
        out.push(worst);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Multistream weighted GSLRT
// ---------------------------------------------------------------------------

/// N independent streams with per-stream null/signal densities, a class of
/// admissible signal subsets (bitmasks over streams), and a prior over the
/// class.
#[derive(Debug, Clone)]
pub struct StreamsSpec {
    pub streams: Vec<(Density, Density)>,
    /// Admissible subsets as bitmasks; every mask nonzero.
    pub subsets: Vec<u64>,
    /// Prior weights over `subsets`: strictly positive, summing to 1.
    pub pi: Vec<f64>,
}

/// Hard cap on the subset class size.
pub const MAX_SUBSETS: usize = 1 << 20;

impl StreamsSpec {
    pub fn new(streams: Vec<(Density, Density)>, subsets: Vec<u64>, pi: Vec<f64>) -> Result<Self> {
        if streams.is_empty() || streams.len() > 63 {
            return Err(Error::Precondition("need between 1 and 63 streams".into()));
        }
        if subsets.is_empty() {
            return Err(Error::Precondition("subset class must be nonempty".into()));
        }
        if subsets.len() > MAX_SUBSETS {
            return Err(Error::Capacity(format!(
                "subset class has {} members, cap is {MAX_SUBSETS}",
                subsets.len()
            )));
        }
        let full: u64 = if streams.len() == 63 { u64::MAX >> 1 } else { (1 << streams.len()) - 1 };
        if subsets.iter().any(|&b| b == 0 || b & !full != 0) {
            return Err(Error::Precondition("subsets must be nonempty sets of stream indices".into()));
        }
        if pi.len() != subsets.len() || pi.iter().any(|p| *p <= 0.0) {
            return Err(Error::Precondition("pi must be positive and aligned with subsets".into()));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!("pi must sum to 1, got {total}")));
        }
        for (g, f) in &streams {
            // exercise mutual absolute continuity checks per stream
            SimpleModel::binary(g.clone(), f.clone())?;
        }
        Ok(StreamsSpec { streams, subsets, pi })
    }

    /// All subsets of size between 1 and `k`, uniform prior.
    pub fn k_bounded(streams: Vec<(Density, Density)>, k: usize) -> Result<Self> {
        let n = streams.len();
        if n == 0 || k == 0 || k > n {
            return Err(Error::Precondition("k must sit in 1..=n_streams".into()));
        }
        let mut subsets = Vec::new();
        let full: u64 = (1u64 << n) - 1;
        for mask in 1..=full {
            if (mask.count_ones() as usize) <= k {
                subsets.push(mask);
                if subsets.len() > MAX_SUBSETS {
                    return Err(Error::Capacity(format!(
                        "k-bounded class exceeds the {MAX_SUBSETS}-subset cap"
                    )));
                }
            }
        }
        let w = 1.0 / subsets.len() as f64;
        let pi = vec![w; subsets.len()];
        StreamsSpec::new(streams, subsets, pi)
    }

    /// Singleton subsets, uniform prior.
    pub fn singletons(streams: Vec<(Density, Density)>) -> Result<Self> {
        let n = streams.len();
        let subsets: Vec<u64> = (0..n).map(|s| 1u64 << s).collect();
        let pi = vec![1.0 / n as f64; n];
        StreamsSpec::new(streams, subsets, pi)
    }

    pub fn n_streams(&self) -> usize {
        self.streams.len()
    }

    pub fn members(&self, subset_idx: usize) -> Vec<usize> {
        let mask = self.subsets[subset_idx];
        (0..self.n_streams()).filter(|s| mask & (1 << s) != 0).collect()
    }
}

/// L-number-skewed weight pair of the multistream GSLRT:
/// `pi_1 ∝ pi_B / L_B` and `pi_0 ∝ pi_B * L_B`, both normalized.
pub fn multistream_weights(pi: &[f64], lnums: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if pi.len() != lnums.len() || pi.is_empty() {
        return Err(Error::Precondition("pi and L-number slices must align".into()));
    }
    if lnums.iter().any(|l| !(*l > 0.0 && *l <= 1.0)) {
        return Err(Error::Precondition("subset L-numbers must sit in (0,1]".into()));
    }
    let raw1: Vec<f64> = pi.iter().zip(lnums).map(|(p, l)| p / l).collect();
    let raw0: Vec<f64> = pi.iter().zip(lnums).map(|(p, l)| p * l).collect();
    let s1: f64 = raw1.iter().sum();
    let s0: f64 = raw0.iter().sum();
    Ok((raw1.iter().map(|v| v / s1).collect(), raw0.iter().map(|v| v / s0).collect()))
}

/// Source of one observation per stream per time step.
pub trait VecObsSource {
    /// Fills `buf` (length = number of streams) with the next column.
    fn next_column(&mut self, buf: &mut [f64]);
}

/// Samples stream columns with a given signal subset (`None` = all null).
pub struct StreamsSampler<'a, R: Rng> {
    spec: &'a StreamsSpec,
    signal_mask: u64,
    rng: &'a mut R,
}

impl<'a, R: Rng> StreamsSampler<'a, R> {
    pub fn new(spec: &'a StreamsSpec, signal_mask: Option<u64>, rng: &'a mut R) -> Self {
        StreamsSampler { spec, signal_mask: signal_mask.unwrap_or(0), rng }
    }
}

impl<R: Rng> VecObsSource for StreamsSampler<'_, R> {
    fn next_column(&mut self, buf: &mut [f64]) {
        for (s, slot) in buf.iter_mut().enumerate() {
            let (g, f) = &self.spec.streams[s];
            *slot = if self.signal_mask & (1 << s) != 0 {
                f.sample(self.rng)
            } else {
                g.sample(self.rng)
            };
        }
    }
}

/// Replays recorded columns.
pub struct ColumnSource<'a> {
    data: &'a [Vec<f64>],
    pos: usize,
}

impl<'a> ColumnSource<'a> {
    pub fn new(data: &'a [Vec<f64>]) -> Self {
        ColumnSource { data, pos: 0 }
    }
}

impl VecObsSource for ColumnSource<'_> {
    fn next_column(&mut self, buf: &mut [f64]) {
        buf.copy_from_slice(&self.data[self.pos]);
        self.pos += 1;
    }
}

/// Runs the weighted multistream GSLRT with weight vectors `pi1`, `pi0`
/// (pass the base prior twice for the uncorrected test):
/// stop at the first n with `max_B[lambda_B + log pi1_B] >= a1` (accept
/// signal, d = 1) or `max_B[lambda_B + log pi0_B] <= -a0` (accept null,
/// d = 0). Ties among maximizing subsets resolve to the lowest index.
pub fn run_multistream_gslrt(
    spec: &StreamsSpec,
    pi1: &[f64],
    pi0: &[f64],
    a0: f64,
    a1: f64,
    stream: &mut dyn VecObsSource,
    cap: usize,
) -> Result<TestOutcome> {
    if a0 <= 0.0 || a1 <= 0.0 {
        return Err(Error::Precondition("thresholds a0, a1 must be positive".into()));
    }
    if pi1.len() != spec.subsets.len() || pi0.len() != spec.subsets.len() {
        return Err(Error::Precondition("weight vectors must align with the subset class".into()));
    }
    let n_streams = spec.n_streams();
    let mut lam = vec![0.0f64; n_streams];
    let mut col = vec![0.0f64; n_streams];
    let log_pi1: Vec<f64> = pi1.iter().map(|p| p.ln()).collect();
    let log_pi0: Vec<f64> = pi0.iter().map(|p| p.ln()).collect();
    let pair_models: Vec<SimpleModel> = spec
        .streams
        .iter()
        .map(|(g, f)| SimpleModel::binary(g.clone(), f.clone()))
        .collect::<Result<_>>()?;
    for n in 1..=cap {
        stream.next_column(&mut col);
        for s in 0..n_streams {
            lam[s] += pair_models[s].log_ratio(1, 0, col[s])?;
        }
        let mut best1 = f64::NEG_INFINITY;
        let mut best0 = f64::NEG_INFINITY;
        for (b, &mask) in spec.subsets.iter().enumerate() {
            let mut lam_b = 0.0;
            let mut m = mask;
            while m != 0 {
                let s = m.trailing_zeros() as usize;
                lam_b += lam[s];
                m &= m - 1;
            }
            if lam_b + log_pi1[b] > best1 {
                best1 = lam_b + log_pi1[b];
            }
            if lam_b + log_pi0[b] > best0 {
                best0 = lam_b + log_pi0[b];
            }
        }
        if best1 >= a1 {
            return Ok(TestOutcome {
                stop_time: n,
                decision: 1,
                terminal_llr: best1,
                truncated: false,
                path: None,
            });
        }
        if best0 <= -a0 {
            return Ok(TestOutcome {
                stop_time: n,
                decision: 0,
                terminal_llr: best0,
                truncated: false,
                path: None,
            });
        }
    }
    let mut best1 = f64::NEG_INFINITY;
    for (b, &mask) in spec.subsets.iter().enumerate() {
        let mut lam_b = 0.0;
        let mut m = mask;
        while m != 0 {
            lam_b += lam[m.trailing_zeros() as usize];
            m &= m - 1;
        }
        best1 = best1.max(lam_b + log_pi1[b]);
    }
    Ok(TestOutcome {
        stop_time: cap,
        decision: usize::from(best1 > 0.0),
        terminal_llr: best1,
        truncated: true,
        path: None,
    })
}

/// Subset L-number via the renewal series (exact for Gaussian streams).
pub fn l_number_subset(
    spec: &StreamsSpec,
    subset_idx: usize,
    tol: f64,
    reps_per_term: usize,
    seed: u64,
) -> Result<crate::renewal::LNumber> {
    let members = spec.members(subset_idx);
    crate::renewal::l_number_multistream(&spec.streams, &members, tol, reps_per_term, seed)
}
