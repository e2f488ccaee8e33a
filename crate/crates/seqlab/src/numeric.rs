//! Shared numerical routines: root bracketing, adaptive quadrature, normal
//! distribution functions, and a few discrete-distribution tails.

use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// SplitMix64 step, used to derive independent RNG seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Bisection for a root of `f` on `[lo, hi]`.
///
/// Requires a sign change on the bracket; converges to `x_tol` in the
/// argument or returns the bracket state in the error.
pub fn bisect_root<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    x_tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.is_nan() || fhi.is_nan() {
        return Err(Error::Numeric(format!(
            "bisection endpoints not finite: f({lo})={flo}, f({hi})={fhi}"
        )));
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Numeric(format!(
            "no sign change on bracket [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}"
        )));
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if fmid == 0.0 || (hi - lo).abs() < x_tol {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    if (hi - lo).abs() < x_tol {
        Ok(0.5 * (lo + hi))
    } else {
        Err(Error::Numeric(format!(
            "bisection did not converge after {max_iter} iterations; bracket [{lo}, {hi}]"
        )))
    }
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    converged: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *converged = false;
        return left + right;
    }
    adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, converged)
        + adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, converged)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance
/// `abs_tol`. Non-convergence at the maximum recursion depth reports the
/// achieved estimate in the error message.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if !(b > a) {
        return Err(Error::Precondition(format!("empty integration range [{a}, {b}]")));
    }
    let fa = f(a);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    let mut converged = true;
    let value = adaptive_simpson_rec(&f, a, b, fa, fm, fb, whole, abs_tol, 48, &mut converged);
    if converged {
        Ok(value)
    } else {
        Err(Error::Numeric(format!(
            "quadrature did not reach tolerance {abs_tol:e} on [{a}, {b}]; achieved estimate {value:e}"
        )))
    }
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal cdf.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal cdf (Wichura's PPND16 rational approximation,
/// AS 241). Absolute error below 1e-9 over (1e-12, 1 - 1e-12).
#[allow(clippy::excessive_precision)]
pub fn inv_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Precondition(format!("inverse normal cdf needs p in (0,1), got {p}")));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        // central region
        const A: [f64; 8] = [
            3.3871328727963666080,
            133.14166789178437745,
            1971.5909503065514427,
            13731.693765509461125,
            45921.953931549871457,
            67265.770927008700853,
            33430.575583588128105,
            2509.0809287301226727,
        ];
        const B: [f64; 8] = [
            1.0,
            42.313330701600911252,
            687.18700749205790830,
            5394.1960214247511077,
            21213.794301586595867,
            39307.895800092710610,
            28729.085735721942674,
            5226.4952788528545610,
        ];
        let r = 0.180625 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        const C: [f64; 8] = [
            1.42343711074968357734,
            4.63033784615654529590,
            5.76949722146069140550,
            3.64784832476320460504,
            1.27045825245236838258,
            0.241780725177450611770,
            2.27238449892691845833e-2,
            7.74545014278341407640e-4,
        ];
        const D: [f64; 8] = [
            1.0,
            2.05319162663775882187,
            1.67638483018380384940,
            0.689767334985100004550,
            0.148103976427480074590,
            1.51986665636164571966e-2,
            5.47593808499534494600e-4,
            1.05075007164441684324e-9,
        ];
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        const E: [f64; 8] = [
            6.65790464350110377720,
            5.46378491116411436990,
            1.78482653991729133580,
            0.296560571828504891230,
            2.65321895265761230930e-2,
            1.24266094738807843860e-3,
            2.71155556874348757815e-5,
            2.01033439929228813265e-7,
        ];
        const F: [f64; 8] = [
            1.0,
            0.599832206555887937690,
            0.136929880922735805310,
            1.48753612908506148525e-2,
            7.86869131145613259100e-4,
            1.84631831751005468180e-5,
            1.42151175831644588870e-7,
            2.04426310338993978564e-15,
        ];
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    Ok(if q < 0.0 { -x } else { x })
}

fn poly(coeffs: &[f64; 8], x: f64) -> f64 {
    // Horner with coeffs[0] the constant term.
    let mut acc = coeffs[7];
    for c in coeffs[..7].iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// log n-choose-k.
pub fn ln_choose(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Binomial pmf, computed in log space for stability at large n.
pub fn binom_pmf(n: usize, k: usize, p: f64) -> f64 {
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

/// P(Poisson(mu) <= k), via the regularized upper incomplete gamma.
pub fn poisson_cdf(k: i64, mu: f64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    gamma_ur(k as f64 + 1.0, mu)
}

/// P(Gamma(shape, rate) <= x).
pub fn gamma_cdf(shape: f64, rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_lr(shape, rate * x)
}

/// Piecewise-linear interpolation on a sorted grid, clamped at the ends.
pub fn lerp_grid(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    debug_assert!(!xs.is_empty());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let idx = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => return ys[i],
        Err(i) => i,
    };
    let (x0, x1) = (xs[idx - 1], xs[idx]);
    let w = (x - x0) / (x1 - x0);
    ys[idx - 1] * (1.0 - w) + ys[idx] * w
}
