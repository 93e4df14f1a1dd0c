use bfai::experiments::{build, ExperimentId};
use bfai::harness::{derive_seed, rng_from_seed, run_once_with, RunOptions};
use bfai::rates::{fe_log_rate, hitting_time};
use bfai::sampler::phi_estimate;
use bfai::{
    solve_allocation, Algorithm, PosteriorState, ProblemInstance, RateModel, SamplerConfig,
};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// P(arm 0 is best feasible) for two independent Gaussian arms with one
/// constraint each.
fn two_arm_probability(mean: [[f64; 2]; 2], var: [[f64; 2]; 2], gamma: f64) -> f64 {
    let feas = |i: usize| cdf((gamma - mean[i][1]) / var[i][1].sqrt());
    let better = cdf((mean[0][0] - mean[1][0]) / (var[0][0] + var[1][0]).sqrt());
    feas(0) * ((1.0 - feas(1)) + feas(1) * better)
}

#[test]
fn closed_form_two_arm_probability() {
    let mean = [[0.3, -0.2], [0.5, 0.1]];
    let var = [[0.2, 0.3], [0.4, 0.25]];
    let exact = two_arm_probability(mean, var, 0.0);
    // One sample per arm: the posterior is N(mean, var).
    let mut s = PosteriorState::new(vec![var[0].to_vec(), var[1].to_vec()]);
    s.update(0, &mean[0]);
    s.update(1, &mean[1]);
    assert_eq!(s.counts(), &[1, 1]);
    let mut prev = f64::INFINITY;
    for (d, seed) in [(1_000usize, 1u64), (10_000, 2), (100_000, 3)] {
        let mut rng = rng_from_seed(seed);
        let est = s.estimate_p(&[0.0], d, &mut rng).unwrap();
        let err = (est.p_of(0) - exact).abs();
        let se = (exact * (1.0 - exact) / d as f64).sqrt();
        assert!(err <= 4.0 * se, "D = {d}: error {err}, standard error {se}");
        prev = prev.min(4.0 * se);
        assert!(err <= prev);
    }
}

/// `ln P(Z > z)` for a standard normal, exact while the tail is
/// representable and bracketed by the Mills-ratio bounds beyond.
fn ln_upper_tail(z: f64) -> (f64, f64) {
    let p = 1.0 - cdf(z);
    if p > 1e-300 && z < 8.0 {
        return (p.ln(), p.ln());
    }
    let ln_pdf = -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
    (ln_pdf + (z / (1.0 + z * z)).ln(), ln_pdf - z.ln())
}

#[test]
fn false_evaluation_rate_tracks_exact_tail() {
    let (mu, sigma2, gamma) = (0.6, 0.5, 0.0);
    let means = vec![vec![0.0, -1.0], vec![1.0, mu]];
    let vars = vec![vec![1.0, 1.0], vec![1.0, sigma2]];
    for n in [100.0f64, 1e3, 1e4] {
        let counts = [n / 2.0, n / 2.0];
        let rate = fe_log_rate(&means, &vars, &[gamma], &counts, n, 0).per_arm[1];
        // P(theta <= gamma) with theta ~ N(mu, sigma2 / N)
        let z = (mu - gamma) / (sigma2 / counts[1]).sqrt();
        let (lo, hi) = ln_upper_tail(z);
        let bound = 2.0 / n.sqrt() * (gamma - mu).abs() / sigma2.sqrt() + n.ln() / n;
        for ln_p in [lo, hi] {
            let gap = (-ln_p / n - rate).abs();
            assert!(gap <= bound, "n = {n}: {gap} > {bound}");
        }
    }
}

#[test]
fn selection_frequencies_match_formula() {
    let spec = build(ExperimentId::Exp5);
    let inst = &spec.instance;
    let gamma = inst.thresholds();
    let mut rng = rng_from_seed(41);
    let mut s = PosteriorState::for_instance(inst);
    let mut r = vec![0.0; 2];
    for _ in 0..6 {
        for arm in 0..inst.k() {
            inst.sample_into(arm, &mut rng, &mut r);
            s.update(arm, &r);
        }
    }
    for beta in [0.3, 0.5, 0.8] {
        let calls = 50_000;
        let chk = phi_estimate(&s, &SamplerConfig::with_beta(beta), gamma, calls, &mut rng).unwrap();
        for (f, e) in chk.formula.iter().zip(&chk.empirical) {
            let se = (2.0 * f * (1.0 - f) / calls as f64).sqrt();
            assert!((f - e).abs() <= 3.0 * se.max(1e-4), "beta {beta}: {f} vs {e}");
        }
    }
}

fn leader_fraction(id: ExperimentId, n: usize) -> f64 {
    let inst = build(id).instance;
    let start = n * 9 / 10;
    let cfg = SamplerConfig::with_beta(0.5);
    let opts = RunOptions { checkpoints: vec![start], ..Default::default() };
    let total: f64 = (0..20u64)
        .into_par_iter()
        .map(|s| {
            let r = run_once_with(&inst, Algorithm::BfaiTs, &cfg, n, derive_seed(5, s, 0), &opts)
                .unwrap();
            r.leader_hits[1] as f64 / (n - start) as f64
        })
        .sum();
    total / 20.0
}

#[test]
fn leader_settles_on_best_arm() {
    let exp1 = leader_fraction(ExperimentId::Exp1, 100 * 50 * 2);
    assert!(exp1 > 0.95, "exp1: {exp1}");
    let exp5 = leader_fraction(ExperimentId::Exp5, 8000);
    assert!(exp5 > 0.95, "exp5: {exp5}");
}

#[test]
fn hitting_time_is_finite() {
    let inst = ProblemInstance::new(
        vec![vec![1.0, -1.0], vec![-0.095, -1.0], vec![2.0, 0.894]],
        vec![vec![1.0; 2]; 3],
        vec![0.0],
    )
    .unwrap();
    let alpha = solve_allocation(&RateModel::from_instance(&inst), 0.5).unwrap().alpha;
    let cfg = SamplerConfig::with_beta(0.5);
    let opts = RunOptions { history_every: Some(100), ..Default::default() };
    let hits = (0..20u64)
        .into_par_iter()
        .filter(|&s| {
            let r = run_once_with(&inst, Algorithm::BfaiTs, &cfg, 20_000, derive_seed(11, s, 0), &opts)
                .unwrap();
            hitting_time(r.history.as_ref().unwrap(), inst.means(), &alpha, 0.1, 20_000).is_some()
        })
        .count();
    assert!(hits >= 18, "{hits} of 20");
}

#[test]
fn exact_fallback_matches_unlimited_redraws() {
    let inst = build(ExperimentId::Exp5).instance;
    let mut s = PosteriorState::for_instance(&inst);
    let mut rng = rng_from_seed(77);
    let mut r = vec![0.0; 2];
    for _ in 0..30 {
        for arm in 0..inst.k() {
            inst.sample_into(arm, &mut rng, &mut r);
            s.update(arm, &r);
        }
    }
    let gamma = inst.thresholds();
    let freq = |cap: usize, seed: u64| {
        let cfg = SamplerConfig { resample_cap: cap, ..SamplerConfig::with_beta(1e-9) };
        let mut rng = rng_from_seed(seed);
        let mut plays = vec![0.0; inst.k()];
        let n = 100_000;
        for _ in 0..n {
            plays[bfai::select_arm(&s, &cfg, gamma, &mut rng).unwrap().played] += 1.0 / n as f64;
        }
        plays
    };
    let exact = freq(1, 1);
    let redraw = freq(1_000_000, 2);
    for (a, b) in exact.iter().zip(&redraw) {
        let se = (2.0 * a * (1.0 - a) / 1e5).sqrt();
        assert!((a - b).abs() <= 4.0 * se.max(1e-4), "{exact:?} vs {redraw:?}");
    }
}

#[test]
fn quadrature_probabilities_match_closed_form_and_sampling() {
    let mean = [[0.3, -0.2], [0.5, 0.1]];
    let var = [[0.2, 0.3], [0.4, 0.25]];
    let mut s = PosteriorState::new(vec![var[0].to_vec(), var[1].to_vec()]);
    s.update(0, &mean[0]);
    s.update(1, &mean[1]);
    let exact = s.exact_p(&[0.0]).unwrap();
    assert!((exact.p[0] - two_arm_probability(mean, var, 0.0)).abs() < 1e-9);
    let empty = (1.0 - cdf(0.2 / 0.3f64.sqrt())) * (1.0 - cdf(-0.1 / 0.5));
    assert!((exact.empty - empty).abs() < 1e-12);
    assert!((exact.p.iter().sum::<f64>() + exact.empty - 1.0).abs() < 1e-9);

    let inst = build(ExperimentId::Exp3).instance;
    let mut st = PosteriorState::for_instance(&inst);
    let mut rng = rng_from_seed(5);
    let mut r = vec![0.0; inst.m() + 1];
    for _ in 0..2 {
        for arm in 0..inst.k() {
            inst.sample_into(arm, &mut rng, &mut r);
            st.update(arm, &r);
        }
    }
    let q = st.exact_p(inst.thresholds()).unwrap();
    let d = 200_000;
    let est = st.estimate_p(inst.thresholds(), d, &mut rng).unwrap();
    for (a, b) in q.p.iter().zip(est.p()) {
        assert!((a - b).abs() <= 4.0 * (a * (1.0 - a) / d as f64).sqrt() + 1e-4, "{a} vs {b}");
    }
    assert!((q.p.iter().sum::<f64>() + q.empty - 1.0).abs() < 1e-7);
}
