use cwmv::aggregation::{
    cwmv, cwmv_adapted, from_full_scale, mv, to_full_scale, to_weight, AdaptedParams, AggregationError, Confidence,
    Decision::{self, Negative as N, Positive as P},
    Response,
};
use cwmv::fit::{
    bayes_factor_from_bic, estimate_sigma_i, fit_by_group, grid_fit, likelihood_ratio_test, normal_log_density,
    trial_log_likelihood, GridSpec, ModelVariant, PermutationScope,
};
use cwmv::ideal::{
    find_sequence, generate_sequence, ideal_response, pooled_ideal, sequence_likelihood, Coin, CoinModel, IdealError,
    StimulusSequence,
};
use cwmv::io::dataset_to_csv;
use cwmv::scenario::{build_scenarios, default_scenario_spec};
use cwmv::simulate::{
    run_experiment, simulate_group, simulate_individual, Dataset, ExperimentDesign, ModelParams, TiePolicy,
};
use cwmv::stats::{
    calibration_regression, exact_binomial_test, fisher_mean_r, paired_t_test, rmse, t_p_value, Sides, StatsError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn r(d: Decision, p: f64) -> Response {
    Response::new(d, p).unwrap()
}

fn scenario_two() -> [Response; 3] {
    [r(P, 0.76), r(N, 0.51), r(N, 0.51)]
}

fn design() -> ExperimentDesign {
    ExperimentDesign::standard(&build_scenarios(&default_scenario_spec()).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// aggregation

#[test]
fn weights() {
    assert!(close(to_weight(Confidence::new(0.76).unwrap()).unwrap(), 1.1527, 5e-5));
    assert_eq!(to_weight(Confidence::new(0.5).unwrap()).unwrap(), 0.0);
    assert!(close(to_weight(Confidence::new(0.9).unwrap()).unwrap(), 2.1972245773362196, 1e-14));
    assert!(matches!(to_weight(Confidence::new(1.0).unwrap()), Err(AggregationError::DegenerateConfidence(_))));
}

#[test]
fn majority() {
    assert_eq!(mv(&[P, N, N]), Ok(N));
    assert_eq!(mv(&[P, P, P]), Ok(P));
    assert_eq!(mv(&[P, N]), Err(AggregationError::Tie));
}

#[test]
fn naive_cwmv() {
    let g = cwmv(&scenario_two()).unwrap();
    assert_eq!(g.decision, P);
    assert!(close(g.p(), 0.745, 0.0005));

    let g = cwmv(&[r(P, 1.0), r(N, 0.70)]).unwrap();
    assert_eq!((g.decision, g.p()), (P, 1.0));

    let g = cwmv(&[r(P, 0.87), r(P, 0.70), r(P, 0.62)]).unwrap();
    assert_eq!(g.decision, P);
    assert!(close(g.p(), 0.962, 0.0005));
}

#[test]
fn adapted_cwmv() {
    let naive = cwmv(&scenario_two()).unwrap();
    assert_eq!(cwmv_adapted(&scenario_two(), AdaptedParams::NAIVE).unwrap(), naive);
    for gamma in [0.0, 0.3, 1.0, 2.0] {
        let g = cwmv_adapted(&scenario_two(), AdaptedParams::new(0.0, gamma).unwrap()).unwrap();
        assert_eq!(g.decision, N);
    }
    let g = cwmv_adapted(&scenario_two(), AdaptedParams::new(0.67, 0.53).unwrap()).unwrap();
    assert_eq!(g.decision, P);
    assert!(close(g.p(), 0.6130780977797023, 1e-12));
}

#[test]
fn scale_transforms() {
    assert!(close(to_full_scale(&r(N, 0.6), P), 0.4, 1e-15));
    assert_eq!(to_full_scale(&r(P, 0.6), P), 0.6);
    assert_eq!(to_full_scale(&r(P, 0.5), N), 0.5);
    assert_eq!(to_full_scale(&r(N, 0.5), N), 0.5);
    let back = from_full_scale(0.4, P).unwrap();
    assert_eq!(back.decision, N);
    assert!(close(back.p(), 0.6, 1e-15));
    assert_eq!(from_full_scale(0.75, P).unwrap(), r(P, 0.75));
    assert_eq!(from_full_scale(0.5, P).unwrap(), r(P, 0.5));
}

// ideal observer

#[test]
fn likelihoods() {
    let m = CoinModel::default();
    let s = StimulusSequence::parse("RRBRR").unwrap();
    assert!(close(sequence_likelihood(&s, Coin::Fair, &m), 0.03125, 1e-15));
    assert!(close(sequence_likelihood(&s, Coin::Biased, &m), 0.05184, 1e-15));
    let one = StimulusSequence::parse("R").unwrap();
    assert_eq!(sequence_likelihood(&one, Coin::Fair, &m), 0.5);
}

#[test]
fn ideal_responses() {
    let m = CoinModel::default();
    let rr = ideal_response(&StimulusSequence::parse("RRBRR").unwrap(), &m);
    assert_eq!(rr.decision, Coin::Biased.decision());
    assert!(close(rr.p(), 0.6239017932362498, 1e-12));

    let flat = CoinModel { p_red_biased: 0.5, ..CoinModel::default() };
    let tie = ideal_response(&StimulusSequence::parse("RBR").unwrap(), &flat);
    assert_eq!((tie.decision, tie.p()), (Coin::Fair.decision(), 0.5));

    let reds = ideal_response(&StimulusSequence::from_counts(11, 11).unwrap(), &m);
    assert_eq!(reds.decision, Coin::Biased.decision());
    assert!(close(reds.p(), 0.8813772158414185, 1e-12));
}

#[test]
fn pooled_ideals() {
    let m = CoinModel::default();
    let file = build_scenarios(&default_scenario_spec()).unwrap();
    let first = &file.scenarios[0];
    let g = pooled_ideal(&first.sequences, &m).unwrap();
    assert_eq!(g.decision, Coin::Fair.decision());
    assert!(close(g.p(), 0.96, 0.01));
    let fourth = &file.scenarios[3];
    let g = pooled_ideal(&fourth.sequences, &m).unwrap();
    assert_eq!(g.decision, Coin::Fair.decision());
    assert!(close(g.p(), 0.54, 0.01));

    let s = StimulusSequence::parse("RRBRBBR").unwrap();
    assert_eq!(pooled_ideal(std::slice::from_ref(&s), &m).unwrap(), ideal_response(&s, &m));
}

#[test]
fn sequence_search() {
    let m = CoinModel::default();
    let s = find_sequence(&r(P, 0.88), 11..=13, 0.01, &m).unwrap();
    assert_eq!((s.len(), s.red()), (11, 11));
    let s = find_sequence(&r(P, 0.62), 5..=5, 0.01, &m).unwrap();
    assert_eq!((s.red(), s.blue()), (4, 1));
    assert!(matches!(find_sequence(&r(P, 0.999), 11..=13, 0.01, &m), Err(IdealError::NoSequence { .. })));
}

#[test]
fn generated_sequences() {
    let m = CoinModel::default();
    let a = generate_sequence(Coin::Fair, 12, &m, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let b = generate_sequence(Coin::Fair, 12, &m, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(a, b);
    let long = generate_sequence(Coin::Biased, 100_000, &m, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert!(close(long.red() as f64 / 1e5, 0.6, 0.01));
    assert_eq!(generate_sequence(Coin::Fair, 1, &m, &mut ChaCha8Rng::seed_from_u64(6)).unwrap().len(), 1);
    assert!(generate_sequence(Coin::Fair, 0, &m, &mut ChaCha8Rng::seed_from_u64(6)).is_err());
}

// simulation

#[test]
fn individual_noise() {
    let ideal = r(P, 0.54);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(simulate_individual(&ideal, 0.0, &mut rng), ideal);

    let n = 100_000;
    let flips = (0..n).filter(|_| simulate_individual(&ideal, 0.133, &mut rng).decision != P).count();
    assert!(close(flips as f64 / n as f64, 0.3818, 0.01), "{flips}");

    let a = simulate_individual(&ideal, 0.133, &mut ChaCha8Rng::seed_from_u64(9));
    let b = simulate_individual(&ideal, 0.133, &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(a, b);
}

#[test]
fn group_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let naive = ModelParams::new(0.0, 1.0, 1.0, 0.0).unwrap();
    let g = simulate_group(&scenario_two(), &naive, P, TiePolicy::Error, &mut rng).unwrap();
    assert_eq!(g.decision, P);
    assert!(close(g.p(), 0.745, 0.0005));

    let adapted = ModelParams::new(0.0, 0.67, 0.53, 0.0).unwrap();
    let g = simulate_group(&scenario_two(), &adapted, P, TiePolicy::Error, &mut rng).unwrap();
    assert!(close(g.p(), 0.6130780977797023, 1e-12));

    let noisy = ModelParams::new(0.0, 0.67, 0.53, 0.11).unwrap();
    let a = simulate_group(&scenario_two(), &noisy, P, TiePolicy::Error, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let b = simulate_group(&scenario_two(), &noisy, P, TiePolicy::Error, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(a, b);

    let tied = [r(P, 0.7), r(N, 0.7)];
    assert!(simulate_group(&tied, &naive, P, TiePolicy::Error, &mut rng).is_err());
    assert!(simulate_group(&tied, &naive, P, TiePolicy::Coin, &mut rng).is_ok());
}

#[test]
fn experiments() {
    let params = ModelParams::new(0.133, 0.67, 0.53, 0.11).unwrap();
    let d = run_experiment(&design(), &params, 7, 1, TiePolicy::Error).unwrap();
    assert_eq!(d.trials.len(), 84);

    let ideal = run_experiment(&design(), &ModelParams::IDEAL, 5, 1, TiePolicy::Error).unwrap();
    for t in &ideal.trials {
        assert_eq!(t.members, t.ideal_members);
        assert_eq!(t.group.decision, t.ideal_group.decision);
        assert!(close(t.group.p(), t.ideal_group.p(), 1e-12));
    }

    let again = run_experiment(&design(), &params, 7, 1, TiePolicy::Error).unwrap();
    assert_eq!(dataset_to_csv(&d).unwrap(), dataset_to_csv(&again).unwrap());
    assert!(run_experiment(&design(), &params, 0, 1, TiePolicy::Error).is_err());
}

// model fitting

#[test]
fn sigma_i_estimate() {
    let d = run_experiment(&design(), &ModelParams::IDEAL, 7, 1, TiePolicy::Error).unwrap();
    assert_eq!(estimate_sigma_i(&d.trials).unwrap(), 0.0);

    let params = ModelParams::new(0.133, 0.67, 0.53, 0.11).unwrap();
    let d = run_experiment(&design(), &params, 7, 2, TiePolicy::Error).unwrap();
    assert!(close(estimate_sigma_i(&d.trials).unwrap(), 0.133, 0.03));
}

#[test]
fn densities() {
    assert!(close(normal_log_density(0.5, 0.5, 0.1), 1.3836465597893728, 1e-12));
    assert_eq!(normal_log_density(0.5, 0.5, 0.0), f64::INFINITY);
    assert_eq!(normal_log_density(0.6, 0.5, 0.0), f64::NEG_INFINITY);

    let d = run_experiment(&design(), &ModelParams::IDEAL, 1, 1, TiePolicy::Error).unwrap();
    let t = &d.trials[0];
    let p = ModelParams { sigma_i: 0.0, beta: 1.0, gamma: 1.0, sigma_g: 0.1 };
    assert!(trial_log_likelihood(t, &p) > 1.38);
}

#[test]
fn grid_fit_recovers_naive_model() {
    let truth = ModelParams::new(0.133, 1.0, 1.0, 0.05).unwrap();
    let d = run_experiment(&design(), &truth, 50, 17, TiePolicy::Error).unwrap();
    let fit = grid_fit(&d.trials, ModelVariant::Full, &GridSpec::default()).unwrap();
    assert!(close(fit.params.beta, 1.0, 0.1), "{:?}", fit.params);
    assert!(close(fit.params.gamma, 1.0, 0.1), "{:?}", fit.params);
    assert!(close(fit.params.sigma_g, 0.05, 0.1), "{:?}", fit.params);
    assert_eq!(fit.n_trials, 600);
    assert_eq!(fit.bic, 3.0 * 600f64.ln() - 2.0 * fit.log_likelihood);
}

#[test]
fn grid_fit_noise_free() {
    let truth = ModelParams::new(0.1, 0.85, 1.35, 0.0).unwrap();
    let d = run_experiment(&design(), &truth, 1, 8, TiePolicy::Error).unwrap();
    let grid: GridSpec = "s:0.01:0.3:0.01".parse().unwrap();
    let fit = grid_fit(&d.trials, ModelVariant::Full, &grid).unwrap();
    assert!(close(fit.params.beta, 0.85, 0.011), "{:?}", fit.params);
    assert!(close(fit.params.gamma, 1.35, 0.011), "{:?}", fit.params);
}

#[test]
fn equal_weight_variant_on_uninformative_confidences() {
    // Group confidences generated by majority vote, individual confidences shuffled.
    let truth = ModelParams::new(0.133, 0.0, 0.53, 0.11).unwrap();
    let d = run_experiment(&design(), &truth, 7, 23, TiePolicy::Error).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let shuffled = Dataset::new(cwmv::fit::permute_confidences(&d.trials, PermutationScope::Global, &mut rng));
    let grid = GridSpec::default();
    let full = fit_by_group(&shuffled, ModelVariant::Full, &grid).unwrap();
    let equal = fit_by_group(&shuffled, ModelVariant::BetaFixed0, &grid).unwrap();
    let n_groups = full.groups.len() as f64;
    let slack = n_groups * 12f64.ln();
    assert!(2.0 * (full.total_log_likelihood - equal.total_log_likelihood) <= slack);
    assert!(equal.total_bic <= full.total_bic);
}

#[test]
fn model_comparison() {
    assert_eq!(bayes_factor_from_bic(-90.0, -90.0), 1.0);
    assert!(bayes_factor_from_bic(-101.0, -59.0) > 1000.0);
    assert!(close(bayes_factor_from_bic(-101.0, -102.0), 0.6065306597126334, 1e-12));

    let l = likelihood_ratio_test(8.45, 0.0, 7);
    assert!(close(l.chi2, 16.9, 1e-12));
    assert!(close(l.p, 0.018, 0.0005));
    let l = likelihood_ratio_test(-4.0, -4.0, 2);
    assert_eq!((l.chi2, l.p), (0.0, 1.0));
    let l = likelihood_ratio_test(3.841 / 2.0, 0.0, 1);
    assert!(close(l.p, 0.050, 0.0005));
}

// statistics

#[test]
fn regression() {
    let ident: Vec<(f64, f64)> = [0.5, 0.6, 0.8, 0.95].iter().map(|&x| (x, x)).collect();
    let f = calibration_regression(&ident).unwrap();
    assert!(close(f.value_at_half, 0.5, 1e-12) && close(f.slope, 1.0, 1e-12));

    let under: Vec<(f64, f64)> = [0.5, 0.62, 0.75, 0.96].iter().map(|&x| (x, 0.25 + 0.5 * x)).collect();
    let f = calibration_regression(&under).unwrap();
    assert!(close(f.slope, 0.5, 1e-12));
    assert!(close(f.intercept, 0.25, 1e-12));

    assert_eq!(calibration_regression(&[(0.6, 0.5), (0.6, 0.7)]), Err(StatsError::DegenerateX));
}

#[test]
fn fisher_pooling() {
    assert!(close(fisher_mean_r(&[0.3, 0.3]).unwrap(), 0.3, 1e-15));
    assert!(close(fisher_mean_r(&[0.5, -0.5]).unwrap(), 0.0, 1e-15));
    // tanh((atanh 0.9 + atanh 0.3) / 2)
    assert!(close(fisher_mean_r(&[0.9, 0.3]).unwrap(), 0.7118229518951368, 1e-12));
    assert!(matches!(fisher_mean_r(&[1.0, 0.2]), Err(StatsError::DegenerateR(_))));
}

#[test]
fn root_mean_square() {
    assert_eq!(rmse(&[(0.3, 0.3), (0.9, 0.9)]).unwrap(), 0.0);
    assert!(close(rmse(&[(0.5, 0.6), (0.7, 0.8)]).unwrap(), 0.1, 1e-12));
    assert!(close(rmse(&[(0.5, 0.7), (0.8, 0.6)]).unwrap(), 0.2, 1e-12));
    assert!(rmse(&[]).is_err());
}

#[test]
fn binomial() {
    assert_eq!(exact_binomial_test(7, 7, 0.5, Sides::Two).unwrap(), 0.015625);
    assert!(close(exact_binomial_test(5, 10, 0.5, Sides::Two).unwrap(), 1.0, 1e-12));
    assert!(close(exact_binomial_test(6, 7, 0.5, Sides::Two).unwrap(), 0.125, 1e-12));
}

#[test]
fn t_tests() {
    assert!(close(t_p_value(2.83, 6.0), 0.030, 0.002));
    let t = paired_t_test(&[0.2, -0.2, 0.1, -0.1]).unwrap();
    assert_eq!((t.t, t.df), (0.0, 3));
    assert!(close(t.p, 1.0, 1e-12));
    assert!(close(t_p_value(2.447, 6.0), 0.050, 0.0005));
    assert_eq!(paired_t_test(&[0.1, 0.1]), Err(StatsError::ZeroVariance));
}
