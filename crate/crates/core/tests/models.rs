use bayesdoe::io::{campaign_from_json, campaign_to_json};
use bayesdoe::{
    expected_improvement, fit_targets, init_campaign, pareto_front, tell, CampaignConfig, DesignSpace, FitConfig, GpModel,
    Incumbent, IncumbentSource, KernelParams, Observation, OutputColumn, Posterior, Sense, Smoothness, Variable,
};
use proptest::prelude::*;

fn square() -> DesignSpace {
    DesignSpace::new(vec![Variable::new("a", -2.0, 2.0), Variable::new("b", 10.0, 20.0)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn posterior_variance_is_nonnegative_and_shrinks_at_data(
        pts in prop::collection::vec((-2.0f64..2.0, 10.0f64..20.0), 2..10),
        q in (-2.0f64..2.0, 10.0f64..20.0),
        ls in 0.05f64..2.0,
    ) {
        let points: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a, b]).collect();
        let ys: Vec<f64> = points.iter().map(|p| p[0].sin() + 0.1 * p[1]).collect();
        let kernel = KernelParams::isotropic(2, 1.0, ls, Smoothness::ThreeHalves).unwrap();
        let m = GpModel::from_params(&square(), &points, &ys, kernel, 1e-6).unwrap();
        let prior = m.transform().output_map.invert_variance(1.0);
        let post = m.posterior(&[q.0, q.1]).unwrap();
        prop_assert!(post.variance >= 0.0);
        prop_assert!(post.variance <= prior * (1.0 + 1e-9));
        let at = m.posterior(&points[0]).unwrap();
        prop_assert!(at.variance <= post.variance.max(at.variance) + 1e-12);
        prop_assert!(at.variance < 0.05 * prior);
    }

    #[test]
    fn campaign_json_round_trips_any_finite_values(
        rows in prop::collection::vec((-2.0f64..2.0, 10.0f64..20.0, any::<f64>()), 0..8),
        seed in any::<u64>(),
    ) {
        let cols = vec![OutputColumn::objective("y", Sense::Maximize)];
        let s = init_campaign(square(), cols, CampaignConfig::default(), seed).unwrap();
        let obs = rows
            .iter()
            .filter(|r| r.2.is_finite())
            .map(|&(a, b, y)| Observation::new(vec![a, b], vec![y]))
            .collect();
        let s = tell(&s, obs).unwrap();
        let back = campaign_from_json(&campaign_to_json(&s).unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn pareto_front_matches_pairwise_check(
        pts in prop::collection::vec(prop::collection::vec(0u8..6, 3), 0..40),
    ) {
        let outputs: Vec<Vec<f64>> = pts.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let senses = [Sense::Maximize, Sense::Minimize, Sense::Maximize];
        let front = pareto_front(&outputs, &senses);
        let better = |a: &[f64], b: &[f64]| {
            let ge = a[0] >= b[0] && a[1] <= b[1] && a[2] >= b[2];
            let gt = a[0] > b[0] || a[1] < b[1] || a[2] > b[2];
            ge && gt
        };
        let expect: Vec<usize> = (0..outputs.len())
            .filter(|&i| !(0..outputs.len()).any(|j| better(&outputs[j], &outputs[i])))
            .collect();
        prop_assert_eq!(front, expect);
    }
}

#[test]
fn ei_at_zero_variance_is_the_plain_improvement() {
    let inc = Incumbent::new(1.0, IncumbentSource::BestObserved).unwrap();
    assert_eq!(expected_improvement(&Posterior::new(1.5, 0.0), &inc).unwrap(), 0.5);
    assert_eq!(expected_improvement(&Posterior::new(0.5, 0.0), &inc).unwrap(), 0.0);
    assert!(expected_improvement(&Posterior::new(0.0, -1.0), &inc).is_err());
}

#[test]
fn fitted_hyperparameters_stay_in_bounds() {
    let points: Vec<Vec<f64>> = (0..12).map(|i| vec![-2.0 + i as f64 / 3.0, 10.0 + (i * 7 % 12) as f64 * 0.8]).collect();
    let ys: Vec<f64> = points.iter().map(|p| (p[0] * 1.3).cos() * p[1]).collect();
    let cfg = FitConfig {
        restarts: 4,
        ..FitConfig::default()
    };
    let m = fit_targets(&square(), &points, &ys, &cfg).unwrap();
    let k = m.kernel();
    for l in &k.length_scales {
        assert!((cfg.length_scale_bounds.0..=cfg.length_scale_bounds.1).contains(l));
    }
    assert!((cfg.noise_bounds.0..=cfg.noise_bounds.1).contains(&m.noise_var()));
    let info = m.fit_info().unwrap();
    assert!(info.log_marginal_likelihood.is_finite());
}
