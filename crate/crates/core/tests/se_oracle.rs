//! Replicate standard errors behind the estimation envelopes in the acceptance
//! suite. Slow; run with `cargo test --release --test se_oracle -- --ignored --nocapture`.

use berkson_logit::model::{fit_known_tau, fit_unknown_tau, simulate, Design, FitOptions, ModelParams, Sampler};
use berkson_logit::Kernel64;

const REPLICATES: u64 = 50;

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| -3.0 + 6.0 * i as f64 / (n - 1) as f64).collect()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

fn summarise(name: &str, est: &[[f64; 3]]) {
    for (j, label) in ["b0", "b1", "s"].iter().enumerate() {
        let col: Vec<f64> = est.iter().map(|e| e[j]).collect();
        let (m, sd) = mean_sd(&col);
        println!("{name} {label}: mean {m:.6} se {sd:.6}");
    }
}

#[test]
#[ignore]
fn known_tau_n20000() {
    let k = Kernel64::default_f64();
    let p = ModelParams::new(0.3, 1.2, 0.25).unwrap();
    let design = Design::Functional(grid(20_000));
    let mut est = Vec::new();
    for seed in 1000..1000 + REPLICATES {
        let d = simulate(&k, &p, &design, seed).unwrap();
        let f = fit_known_tau(&k, &d, 0.25, None, &FitOptions::default()).unwrap();
        assert!(f.converged, "seed {seed}: {f:?}");
        est.push([f.estimate.b0, f.estimate.b1, f.estimate.s]);
    }
    summarise("known", &est);
}

#[test]
#[ignore]
fn unknown_tau_n50000() {
    let k = Kernel64::default_f64();
    let p = ModelParams::new(0.3, 1.2, 0.25).unwrap();
    let sampler: Sampler = "normal,0,4".parse().unwrap();
    let design = Design::Structural { sampler, n: 50_000 };
    let mut est = Vec::new();
    for seed in 2000..2000 + REPLICATES {
        let d = simulate(&k, &p, &design, seed).unwrap();
        let f = fit_unknown_tau(&k, &d, None, &FitOptions::default()).unwrap();
        assert!(f.converged, "seed {seed}: {f:?}");
        est.push([f.estimate.b0, f.estimate.b1, f.estimate.s]);
    }
    summarise("unknown", &est);
}

