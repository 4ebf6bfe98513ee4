use berkson_logit::model::{
    fit_known_tau, fit_unknown_tau, log_likelihood, score, simulate, success_prob, Design, FitOptions, ModelParams,
    Sampler,
};
use berkson_logit::Kernel64;

#[test]
fn zero_error_variance_is_recovered() {
    let k = Kernel64::default_f64();
    let p = ModelParams::new(-0.2, 1.0, 0.0).unwrap();
    let design = Design::Structural {
        sampler: "normal,0,4".parse::<Sampler>().unwrap(),
        n: 50_000,
    };
    let d = simulate(&k, &p, &design, 11).unwrap();
    let f = fit_unknown_tau(&k, &d, None, &FitOptions::default()).unwrap();
    assert!(f.converged, "{f:?}");
    assert!(f.estimate.s.abs() <= 0.05, "s = {}", f.estimate.s);
    assert!((f.estimate.b1 - 1.0).abs() < 0.1);
}

#[test]
fn reduced_parameters_carry_the_model() {
    let k = Kernel64::default_f64();
    let p = ModelParams::new(0.4, -1.3, 0.6).unwrap();
    let theta = p.reduced();
    assert!((theta.s - 1.3f64 * 1.3 * 0.6).abs() < 1e-15);
    for &x in &[-3.0, -0.5, 0.0, 1.7] {
        let direct = k.l(0, theta.b0 + theta.b1 * x, theta.s).unwrap();
        assert!((success_prob(&k, &p, x).unwrap() - direct).abs() < 1e-15);
    }
    // a known-tau fit lands on the s = b1^2 tau2 surface
    let d = simulate(&k, &p, &Design::Functional((0..400).map(|i| -4.0 + 0.02 * i as f64).collect()), 3).unwrap();
    let known = fit_known_tau(&k, &d, 0.6, None, &FitOptions::default()).unwrap();
    assert!(known.converged);
    let est = known.estimate;
    assert!((est.s - est.b1 * est.b1 * 0.6).abs() < 1e-12);
    let g = score(&k, &est, &d).unwrap();
    // stationarity along the constrained directions: d/db0 and d/db1 + 2 b1 tau2 d/ds
    assert!(g[0].abs() < 1e-6);
    assert!((g[1] + 2.0 * est.b1 * 0.6 * g[2]).abs() < 1e-6);
    assert!(log_likelihood(&k, &est, &d).unwrap().is_finite());
}
