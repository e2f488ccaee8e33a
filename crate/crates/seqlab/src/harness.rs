//! Deterministic Monte Carlo engine and threshold calibration.
//!
//! Replication k of a batch draws its RNG from `(seed, k)` through a
//! SplitMix64 derivation, so results are bit-identical for a fixed
//! `(reps, seed, cap)` regardless of how many workers run the batch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::splitmix64;
use crate::sprt::TestOutcome;

/// Monte Carlo batch configuration.
#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub reps: usize,
    pub seed: u64,
    /// Per-run sample cap handed to the executors.
    pub cap: usize,
    /// Worker count; 0 picks the global rayon default, 1 runs serially.
    pub parallelism: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { reps: 10_000, seed: 0, cap: 1_000_000, parallelism: 0 }
    }
}

/// RNG for replication `k` of a batch seeded with `seed`.
pub fn rep_rng(seed: u64, k: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(k.wrapping_add(0x5851_f42d_4c95_7f2d))))
}

/// One replication record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McRecord {
    pub stop_time: usize,
    pub decision: usize,
    pub terminal: f64,
    pub truncated: bool,
}

impl From<TestOutcome> for McRecord {
    fn from(o: TestOutcome) -> Self {
        McRecord {
            stop_time: o.stop_time,
            decision: o.decision,
            terminal: o.terminal_llr,
            truncated: o.truncated,
        }
    }
}

/// Mean with standard error. Capped (truncated) runs are excluded from the
/// mean and reported through `capped_fraction` instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n_effective: usize,
    pub capped_fraction: f64,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Estimate {
        let n = values.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, se: f64::NAN, n_effective: 0, capped_fraction: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate { mean, se: (var / n as f64).sqrt(), n_effective: n, capped_fraction: 0.0 }
    }

    /// Binomial rate estimate from `hits` out of `n`.
    pub fn rate(hits: usize, n: usize) -> Estimate {
        let p = hits as f64 / n as f64;
        Estimate {
            mean: p,
            se: (p * (1.0 - p) / n as f64).sqrt(),
            n_effective: n,
            capped_fraction: 0.0,
        }
    }
}

/// Aggregated batch result: the per-replication records (in replication
/// order) plus derived estimates.
#[derive(Debug, Clone)]
pub struct McSummary {
    pub records: Vec<McRecord>,
}

impl McSummary {
    /// Mean stopping time over uncapped runs; the capped fraction is kept
    /// separate rather than folded into the mean.
    pub fn stop_time_estimate(&self) -> Estimate {
        let uncapped: Vec<f64> =
            self.records.iter().filter(|r| !r.truncated).map(|r| r.stop_time as f64).collect();
        let capped = self.records.len() - uncapped.len();
        let mut est = Estimate::from_values(&uncapped);
        est.capped_fraction = capped as f64 / self.records.len() as f64;
        est
    }

    /// Mean stopping time conditional on a given decision (uncapped runs).
    pub fn stop_time_given_decision(&self, d: usize) -> Estimate {
        let vals: Vec<f64> = self
            .records
            .iter()
            .filter(|r| !r.truncated && r.decision == d)
            .map(|r| r.stop_time as f64)
            .collect();
        Estimate::from_values(&vals)
    }

    /// Fraction of replications that decided `d` (capped runs included in
    /// the denominator; their forced decisions count).
    pub fn decision_rate(&self, d: usize) -> Estimate {
        let hits = self.records.iter().filter(|r| r.decision == d).count();
        Estimate::rate(hits, self.records.len())
    }

    pub fn capped_fraction(&self) -> f64 {
        self.records.iter().filter(|r| r.truncated).count() as f64 / self.records.len() as f64
    }
}

/// Runs `reps` independent replications of `runner`, replication k seeing
/// the RNG derived from `(seed, k)`.
///
/// Any replication error aborts the whole batch; no partial aggregation.
pub fn mc_run<F>(cfg: &McConfig, runner: F) -> Result<McSummary>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<McRecord> + Sync,
{
    if cfg.reps == 0 {
        return Err(Error::Precondition("reps must be at least 1".into()));
    }
    let run_one = |k: usize| -> Result<McRecord> {
        let mut rng = rep_rng(cfg.seed, k as u64);
        runner(k, &mut rng)
    };
    let records: Result<Vec<McRecord>> = if cfg.parallelism == 1 {
        (0..cfg.reps).map(run_one).collect()
    } else if cfg.parallelism == 0 {
        (0..cfg.reps).into_par_iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .map_err(|e| Error::Numeric(format!("worker pool: {e}")))?;
        pool.install(|| (0..cfg.reps).into_par_iter().map(run_one).collect())
    };
    Ok(McSummary { records: records? })
}

/// Stochastic bisection of a scalar threshold against a target metric.
///
/// `eval` must be deterministic for a given threshold (fix its seeds
/// internally). Monotonicity of the metric in the threshold is probed on
/// the endpoints and midpoint before bisecting; a non-monotone probe
/// pattern is a calibration error. Returns a threshold whose achieved
/// metric is within `rel_tol` (relative) of `target`.
pub fn calibrate_threshold<F>(
    eval: F,
    target: f64,
    bracket: (f64, f64),
    rel_tol: f64,
    max_iter: usize,
) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) || target <= 0.0 {
        return Err(Error::Precondition(format!(
            "calibration needs lo < hi and a positive target, got [{lo}, {hi}], target {target}"
        )));
    }
    let mut f_lo = eval(lo)?;
    let mut f_hi = eval(hi)?;
    let f_mid = eval(0.5 * (lo + hi))?;
    let increasing = f_hi > f_lo;
    let monotone = if increasing {
        f_lo <= f_mid && f_mid <= f_hi
    } else {
        f_lo >= f_mid && f_mid >= f_hi
    };
    if !monotone {
        return Err(Error::Calibration(format!(
            "metric not monotone on probes: f({lo})={f_lo}, f(mid)={f_mid}, f({hi})={f_hi}"
        )));
    }
    let within = |v: f64| (v / target - 1.0).abs() <= rel_tol;
    if within(f_lo) {
        return Ok(lo);
    }
    if within(f_hi) {
        return Ok(hi);
    }
    let spans = if increasing {
        f_lo <= target && target <= f_hi
    } else {
        f_hi <= target && target <= f_lo
    };
    if !spans {
        return Err(Error::Calibration(format!(
            "target {target} outside achieved range [{}, {}]",
            f_lo.min(f_hi),
            f_lo.max(f_hi)
        )));
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let f_mid = eval(mid)?;
        if within(f_mid) {
            return Ok(mid);
        }
        if (f_mid < target) == increasing {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
        let _ = (f_lo, f_hi);
    }
    Err(Error::Calibration(format!(
        "no threshold within {rel_tol:.0e} of target {target} after {max_iter} bisections; bracket [{lo}, {hi}]"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rep_equals_direct_run() {
        let cfg = McConfig { reps: 1, seed: 9, cap: 100, parallelism: 1 };
        let summary = mc_run(&cfg, |k, rng| {
            assert_eq!(k, 0);
            let mut direct = rep_rng(9, 0);
            use rand::Rng;
            assert_eq!(rng.gen::<u64>(), direct.gen::<u64>());
            Ok(McRecord { stop_time: 3, decision: 1, terminal: 0.5, truncated: false })
        })
        .unwrap();
        assert_eq!(summary.records.len(), 1);
    }

    #[test]
    fn parallelism_does_not_change_records() {
        use rand::Rng;
        let runner = |_k: usize, rng: &mut ChaCha8Rng| {
            let t = (rng.gen::<u32>() % 50 + 1) as usize;
            Ok(McRecord { stop_time: t, decision: t % 2, terminal: rng.gen(), truncated: false })
        };
        let serial =
            mc_run(&McConfig { reps: 500, seed: 3, cap: 1, parallelism: 1 }, runner).unwrap();
        let wide =
            mc_run(&McConfig { reps: 500, seed: 3, cap: 1, parallelism: 8 }, runner).unwrap();
        assert_eq!(serial.records, wide.records);
    }

    #[test]
    fn se_scales_like_inverse_sqrt_reps() {
        use rand::Rng;
        let runner = |_k: usize, rng: &mut ChaCha8Rng| {
            let t = (rng.gen::<f64>() * 100.0) as usize + 1;
            Ok(McRecord { stop_time: t, decision: 0, terminal: 0.0, truncated: false })
        };
        let mut ses = Vec::new();
        for reps in [1_000, 10_000, 100_000] {
            let s = mc_run(&McConfig { reps, seed: 1, cap: 1, parallelism: 0 }, runner).unwrap();
            ses.push(s.stop_time_estimate().se);
        }
        for w in ses.windows(2) {
            let ratio = w[1] / w[0];
            assert!(ratio > 0.28 && ratio < 0.36, "ratio {ratio}");
        }
    }

    #[test]
    fn worker_failure_aborts_batch() {
        let cfg = McConfig { reps: 100, seed: 0, cap: 1, parallelism: 0 };
        let res = mc_run(&cfg, |k, _| {
            if k == 57 {
                Err(Error::Numeric("boom".into()))
            } else {
                Ok(McRecord { stop_time: 1, decision: 0, terminal: 0.0, truncated: false })
            }
        });
        assert!(res.is_err());
    }

    #[test]
    fn calibration_recovers_exact_exponential_relation() {
        // metric(threshold) = e^{-threshold}, no noise: target alpha gives
        // threshold -ln(alpha) up to the relative tolerance.
        let target = 0.01;
        let got =
            calibrate_threshold(|a| Ok((-a).exp()), target, (0.1, 20.0), 1e-6, 200).unwrap();
        assert!(((-got).exp() / target - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn calibration_rejects_non_monotone_metric() {
        let res = calibrate_threshold(|a| Ok((a - 1.0) * (a - 1.0)), 0.5, (0.0, 2.0), 0.1, 50);
        assert!(matches!(res, Err(Error::Calibration(_))));
    }

    #[test]
    fn capped_runs_kept_out_of_the_mean() {
        let summary = McSummary {
            records: vec![
                McRecord { stop_time: 10, decision: 0, terminal: 0.0, truncated: false },
                McRecord { stop_time: 1_000_000, decision: 1, terminal: 0.0, truncated: true },
                McRecord { stop_time: 20, decision: 0, terminal: 0.0, truncated: false },
            ],
        };
        let est = summary.stop_time_estimate();
        assert_eq!(est.mean, 15.0);
        assert_eq!(est.n_effective, 2);
        assert!((est.capped_fraction - 1.0 / 3.0).abs() < 1e-15);
    }
}
