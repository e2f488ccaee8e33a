// temporary probe
use seqlab::kiefer_weiss::*;
use seqlab::model::{logit, ExpFamily1D, ExpFamilyKind};
use seqlab::harness::rep_rng;
fn main() {
    let fam = ExpFamily1D::new(ExpFamilyKind::Bernoulli, -6.0, 6.0).unwrap();
    let (t0, t1) = (logit(0.4), logit(0.6));
    let (a0, a1) = (1e-3, 1e-2);
    let (root, nstar) = theta_star(&fam, t0, t1, a0, a1).unwrap();
    println!("theta* = {root:.6}, n* = {nstar:.3}");
    // apex argmin on fine grid
    let mut best = (0.0, f64::INFINITY);
    for k in 1..=1000 {
        let t = t0 + (t1 - t0) * k as f64 / 1001.0;
        let n = triangle(&fam, t, t0, t1, a0, a1).unwrap().n_star;
        if n < best.1 { best = (t, n); }
    }
    println!("apex argmin = {:.6} (value {:.4}), dist from theta* = {:.6}, grid step (101pt) = {:.6}",
        best.0, best.1, (best.0 - root).abs(), (t1 - t0) / 100.0);
    let tune = huffman_tuning(&fam, t0, t1, a0, a1).unwrap();
    println!("huffman: r* = {:.4}, theta_so = {:.6}", tune.r_star, tune.theta_star_so);
    let tri = triangle(&fam, tune.theta_star_so, t0, t1, a0, a1).unwrap();
    let cap = tri.n_star.ceil() as usize + 1;
    let reps = 20_000;
    let mean_t = |theta: f64| -> f64 {
        let mut total = 0usize;
        for k in 0..reps {
            let mut rng = rep_rng(1234, k as u64);
            let mut src = || fam.sample(theta, &mut rng);
            total += tri.run(&fam, &mut src, cap).unwrap().stop_time;
        }
        total as f64 / reps as f64
    };
    let at_tune = mean_t(tune.theta_star_so);
    let mut sup = (0.0, f64::NEG_INFINITY);
    for k in 0..=60 {
        let t = t0 + (t1 - t0) * k as f64 / 60.0;
        let m = mean_t(t);
        if m > sup.1 { sup = (t, m); }
    }
    println!("at_tune = {at_tune:.3}, sup = {:.3} at {:.4}, ratio = {:.4}", sup.1, sup.0, sup.1 / at_tune);
    // also compare with first-order tuning for reference
    let tri_fo = triangle(&fam, tune.theta_star_fo, t0, t1, a0, a1).unwrap();
    let cap2 = tri_fo.n_star.ceil() as usize + 1;
    let mean_t2 = |theta: f64| -> f64 {
        let mut total = 0usize;
        for k in 0..reps {
            let mut rng = rep_rng(1234, k as u64);
            let mut src = || fam.sample(theta, &mut rng);
            total += tri_fo.run(&fam, &mut src, cap2).unwrap().stop_time;
        }
        total as f64 / reps as f64
    };
    let at_fo = mean_t2(tune.theta_star_fo);
    let mut sup2 = (0.0, f64::NEG_INFINITY);
    for k in 0..=60 {
        let t = t0 + (t1 - t0) * k as f64 / 60.0;
        let m = mean_t2(t);
        if m > sup2.1 { sup2 = (t, m); }
    }
    println!("[first-order] at_fo = {at_fo:.3}, sup = {:.3} at {:.4}, ratio = {:.4}", sup2.1, sup2.0, sup2.1 / at_fo);
}
