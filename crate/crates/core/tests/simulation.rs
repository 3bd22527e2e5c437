use ipd_core::group_rates::estimate_group_rates;
use ipd_core::simulation::{
    fit_rule, generate_categorical_dgp, generate_linear_dgp, mcar_labels, run_monte_carlo, CategoricalDgpConfig,
    LinearDgpConfig, McConfig, PredictionRule,
};
use ipd_core::{seed, stats, EstimatorConfig, Method, TargetSpec};

#[test]
fn forest_on_all_features_predicts_well_out_of_sample() {
    let train = generate_linear_dgp(&LinearDgpConfig::standard(1000, 1)).unwrap();
    let rule = fit_rule(&train, &PredictionRule::trees((0..10).collect()), 2).unwrap();
    let test = generate_linear_dgp(&LinearDgpConfig::standard(10_000, 3)).unwrap();
    let r = stats::correlation(&rule.predict_all(&test.z), &test.y).unwrap();
    assert!(r > 0.8, "correlation {r}");
}

#[test]
fn prediction_powered_means_are_unbiased() {
    let mut cfg = McConfig::slope_study(
        PredictionRule::attenuated(0.8, vec![1, 2]),
        vec![Method::Ppi, Method::PpiPlusPlus, Method::Pspa],
        1000,
        7,
    );
    cfg.target = TargetSpec::mean();
    let rep = run_monte_carlo(&cfg).unwrap();
    for row in &rep.rows {
        assert!(
            row.mean_bias.abs() < 2.0 * row.mean_bias_mc_se,
            "{}: {} vs {}",
            row.estimator,
            row.mean_bias,
            row.mean_bias_mc_se
        );
    }
    assert_eq!(rep.mcar_imbalanced, 0);
}

/// `P(o = 1 | g_hat = h)` by total probability over the true group.
fn naive_limit(cfg: &CategoricalDgpConfig, h: usize) -> f64 {
    let k = cfg.priors.len();
    let num: f64 = (0..k).map(|g| cfg.priors[g] * cfg.confusion[g][h] * cfg.rates[g]).sum();
    let den: f64 = (0..k).map(|g| cfg.priors[g] * cfg.confusion[g][h]).sum();
    num / den
}

fn asymmetric() -> CategoricalDgpConfig {
    CategoricalDgpConfig {
        categories: ["w", "b", "h", "a"].iter().map(|s| s.to_string()).collect(),
        priors: vec![0.6, 0.15, 0.15, 0.1],
        rates: vec![0.75, 0.6, 0.5, 0.55],
        confusion: vec![
            vec![0.95, 0.02, 0.02, 0.01],
            vec![0.25, 0.70, 0.03, 0.02],
            vec![0.20, 0.02, 0.75, 0.03],
            vec![0.25, 0.02, 0.03, 0.70],
        ],
        n: 200_000,
        seed: 5,
    }
}

#[test]
fn naive_group_rates_follow_the_mixture_and_shrink_to_the_global_mean() {
    let cfg = asymmetric();
    let cd = generate_categorical_dgp(&cfg).unwrap();
    let res = estimate_group_rates(&cd, &EstimatorConfig::new(Method::Naive)).unwrap();
    let global: f64 = cfg.priors.iter().zip(&cfg.rates).map(|(p, r)| p * r).sum();
    for (h, gr) in res.groups.iter().enumerate() {
        let limit = naive_limit(&cfg, h);
        let est = gr.rate.unwrap();
        assert!((est - limit).abs() < 4.0 * gr.std_error.unwrap(), "{h}: {est} vs {limit}");
        // Contamination pulls each rate between its truth and the global mean.
        let truth = cfg.rates[h];
        assert!((limit - global).abs() < (truth - global).abs(), "{h}");
    }
}

#[test]
fn bayes_closure_holds_for_every_method() {
    let mut cfg = asymmetric();
    cfg.n = 4000;
    let full = generate_categorical_dgp(&cfg).unwrap();
    let mut rng = seed::rng_from_seed(8);
    let cd = full.masked(&mcar_labels(cfg.n, 800, &mut rng)).unwrap();
    for m in [Method::Naive, Method::Classical, Method::Ppi, Method::PpiPlusPlus, Method::Pspa] {
        let res = estimate_group_rates(&cd, &EstimatorConfig::new(m)).unwrap();
        let lhs: f64 = res.inputs.p_group_given_outcome.iter().map(|p| p.unwrap() * res.inputs.p_outcome).sum();
        let rhs: f64 = res.groups.iter().zip(&res.inputs.p_group).map(|(g, p)| g.raw_rate.unwrap() * p.unwrap()).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{m}");
        for g in &res.groups {
            let r = g.rate.unwrap();
            assert!((0.0..=1.0).contains(&r));
            assert!(g.ci_lower.unwrap() <= r && r <= g.ci_upper.unwrap());
        }
    }
}
