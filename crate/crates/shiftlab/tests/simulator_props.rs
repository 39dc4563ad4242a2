use shiftlab::activation::ActivationSpec;
use shiftlab::ljsd::{make_diatomic, make_pure_scale, Ljsd};
use shiftlab::simulator::{
    realize_cov, run_bias_variance, run_error, run_linear_regression, run_linearized, Backend, SimConfig, SimEstimate,
};
use shiftlab::theory::{lr_error_finite, predict, ModelConfig};

fn config(n0: usize, phi: f64, ratio: f64, sigma: ActivationSpec, trials: usize, seed: u64) -> SimConfig {
    let mut c = SimConfig::from_ratios(n0, phi, ratio, 0.1, 0.1, sigma).unwrap();
    c.trials = trials;
    c.replicates = 2;
    c.n_test = 100;
    c.seed = seed;
    c
}

fn within(a: &SimEstimate, b: &SimEstimate, k: f64, rel: f64) -> bool {
    let se = (a.error_se.powi(2) + b.error_se.powi(2)).sqrt();
    (a.error_mean - b.error_mean).abs() <= (k * se).max(rel * b.error_mean.abs())
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mu = make_diatomic(2.0, 0.5).unwrap();
    let cov = realize_cov(&mu, 48).unwrap();
    let c = config(48, 0.75, 1.5, ActivationSpec::Relu, 6, 11);
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(|| run_bias_variance(&cov, &c).unwrap());
    let three = pool(3).install(|| run_bias_variance(&cov, &c).unwrap());
    assert_eq!(one, three);
    assert!((one.error_mean - one.bias_mean - one.variance_mean).abs() < 1e-12 * one.error_mean);
    let again = run_bias_variance(&cov, &c).unwrap();
    assert_eq!(one, again);
}

#[test]
fn error_only_leaves_decomposition_blank() {
    let cov = realize_cov(&make_pure_scale(1.0, 1.0).unwrap(), 32).unwrap();
    let est = run_error(&cov, &config(32, 1.0, 2.0, ActivationSpec::Relu, 3, 1)).unwrap();
    assert!(est.error_mean.is_finite() && est.bias_mean.is_nan() && est.variance_mean.is_nan());
    let mut c = config(32, 1.0, 2.0, ActivationSpec::Relu, 3, 1);
    c.replicates = 1;
    assert!(run_bias_variance(&cov, &c).is_err());
}

#[test]
fn least_squares_matches_finite_formula() {
    let mu = make_diatomic(3.0, 1.0).unwrap();
    let cov = realize_cov(&mu, 40).unwrap();
    let m = 100;
    let est = run_linear_regression(&cov, m, 0.5, 400, 3).unwrap();
    let exact = lr_error_finite(&cov.train_diagonal(), &cov.test_diagonal(), m, 0.5).unwrap();
    assert!((est.error_mean - exact).abs() <= 3.0 * est.error_se, "{est:?} vs {exact}");
}

#[test]
fn affine_features_match_their_linearization() {
    let mu = make_diatomic(2.0, -1.0).unwrap();
    let cov = realize_cov(&mu, 64).unwrap();
    let c = config(64, 0.5, 2.0, ActivationSpec::Affine { a: 1.3, b: 0.0 }, 20, 5);
    let nl = run_bias_variance(&cov, &c).unwrap();
    let lin = run_linearized(&cov, &c).unwrap();
    assert!(within(&nl, &lin, 3.0, 0.0), "{nl:?} vs {lin:?}");
}

#[test]
fn relu_features_match_their_linearization() {
    let mu = make_diatomic(2.0, 1.0).unwrap();
    let cov = realize_cov(&mu, 128).unwrap();
    let c = config(128, 1.0, 2.0, ActivationSpec::Relu, 30, 6);
    let nl = run_bias_variance(&cov, &c).unwrap();
    let lin = run_linearized(&cov, &c).unwrap();
    assert!(within(&nl, &lin, 3.0, 0.05), "{nl:?} vs {lin:?}");
}

#[test]
fn constant_shift_of_activation_is_harmless() {
    let mu = make_diatomic(2.0, 0.0).unwrap();
    let cov = realize_cov(&mu, 512).unwrap();
    let shifted = ActivationSpec::custom("relu+1", |x| x.max(0.0) + 1.0);
    let a = run_error(&cov, &config(512, 1.0, 0.5, ActivationSpec::Relu, 12, 7)).unwrap();
    let b = run_error(&cov, &config(512, 1.0, 0.5, shifted, 12, 8)).unwrap();
    assert!(within(&a, &b, 3.0, 0.05), "{a:?} vs {b:?}");
}

#[test]
fn huge_ridge_predicts_zero() {
    let mu = make_diatomic(2.0, 1.0).unwrap();
    let cov = realize_cov(&mu, 64).unwrap();
    let mut c = config(64, 1.0, 1.0, ActivationSpec::Relu, 20, 9);
    c.gamma = 1e12;
    let est = run_bias_variance(&cov, &c).unwrap();
    let s_star = cov.scales().1;
    assert!((est.bias_mean - s_star).abs() <= (3.0 * est.bias_se).max(0.05 * s_star), "{est:?}");
    assert!(est.variance_mean.abs() < 1e-9, "{est:?}");
}

#[test]
fn dropping_feature_noise_breaks_agreement() {
    let mu = make_diatomic(2.0, 0.0).unwrap();
    let cov = realize_cov(&mu, 128).unwrap();
    let mut c = config(128, 1.0, 2.0, ActivationSpec::Relu, 20, 10);
    let theory = predict(&mu, &ModelConfig::with_ratio(1.0, 2.0, c.gamma, c.sigma_eps2, ActivationSpec::Relu)).unwrap();
    let full = run_linearized(&cov, &c).unwrap();
    c.backend = Backend::LinearizedSignalOnly;
    let ablated = run_bias_variance(&cov, &c).unwrap();
    let gap = |e: &SimEstimate| (e.error_mean - theory.error).abs() / e.error_se;
    assert!(gap(&full) < 3.0, "full {full:?} vs {}", theory.error);
    assert!(gap(&ablated) > 5.0, "ablated {ablated:?} vs {}", theory.error);
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

#[test]
fn single_trial_error_concentrates_as_size_grows() {
    let mu: Ljsd = make_diatomic(2.0, 0.5).unwrap();
    let (phi, ratio) = (2.0, 0.5);
    let theory = predict(&mu, &ModelConfig::with_ratio(phi, ratio, 0.1, 0.1, ActivationSpec::Relu)).unwrap().error;
    let mut devs = Vec::new();
    for n0 in [128usize, 256, 512, 1024] {
        let cov = realize_cov(&mu, n0).unwrap();
        let per_seed: Vec<f64> = (0..20)
            .map(|seed| {
                let mut c = config(n0, phi, ratio, ActivationSpec::Relu, 1, 100 + seed);
                c.n_test = 4 * n0;
                (run_error(&cov, &c).unwrap().error_mean - theory).abs()
            })
            .collect();
        devs.push(median(per_seed));
    }
    assert!(devs[3] < 0.6 * devs[0], "median deviations {devs:?}");
    assert!(devs.windows(2).filter(|w| w[1] > w[0]).count() <= 1, "median deviations {devs:?}");
}
