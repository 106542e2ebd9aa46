use nalgebra::Matrix2;
use sl2_anomaly::circle::{conjugate_ensemble, projective_act, BasisLabel};
use sl2_anomaly::mc::{run_chain, ChainConfig, Collectors, Histogram};
use sl2_anomaly::models::{build_ensemble, Distribution, ModelSpec};
use sl2_anomaly::perturbation::{classify, predict, DEFAULT_TOL};
use sl2_anomaly::sl2::build_transfer;
use sl2_anomaly::{Angle, BasisChange, Ensemble, QPolynomial, TracelessGenerator};

fn vw() -> Ensemble {
    let mut pairs = vec![];
    for v in [-1.0, 1.0] {
        for w in [-1.0, 1.0] {
            pairs.push((TracelessGenerator::new(v, w, -w), QPolynomial::zero()));
        }
    }
    Ensemble::uniform(pairs).unwrap()
}

fn anderson() -> Ensemble {
    build_ensemble(&ModelSpec::anderson_edge(1.0, Distribution::uniform(vec![-1.0, 1.0]), 0.09)).unwrap().0
}

/// `Σ mᵢ (E f(T·θᵢ) − f(θᵢ))` for a binned measure.
fn invariance_defect(e: &Ensemble, lambda: f64, h: &Histogram, f: impl Fn(f64) -> f64) -> f64 {
    let transfers: Vec<_> = e.atoms().iter().map(|a| (a.weight, build_transfer(lambda, &a.p, &a.q))).collect();
    (0..h.bin_count)
        .map(|i| {
            let theta = Angle::new(h.bin_center(i));
            let pushed: f64 = transfers
                .iter()
                .map(|(w, t)| w * f(projective_act(t, theta).value()))
                .sum();
            h.masses[i] * (pushed - f(theta.value()))
        })
        .sum()
}

#[test]
fn empirical_measure_is_stationary() {
    let e = anderson();
    let lambda = 0.3;
    let cfg = ChainConfig::new(lambda).with_steps(400_000, 5_000).with_replicas(8).with_seed(21);
    let col = Collectors {
        histogram_bins: Some(512),
        ..Collectors::default()
    };
    let h = run_chain(&e, &cfg, &col).unwrap().histogram().unwrap();
    let uniform = Histogram::from_counts(&vec![1; 512]);
    for f in [|t: f64| (2.0 * t).cos(), |t: f64| (2.0 * t).sin(), |t: f64| (4.0 * t).cos()] {
        let defect = invariance_defect(&e, lambda, &h, f).abs();
        assert!(defect < 2e-3, "defect {defect}");
    }
    let c2 = |t: f64| (2.0 * t).sin();
    assert!(invariance_defect(&e, lambda, &uniform, c2).abs() > 2e-2);
}

#[test]
fn lyapunov_does_not_depend_on_initial_angle() {
    let e = vw();
    let base = ChainConfig::new(0.2).with_steps(200_000, 2_000).with_replicas(16);
    let estimates: Vec<_> = [0.0, 1.0, 2.5]
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let cfg = base.clone().with_seed(100 + k as u64).with_theta0(Angle::new(t));
            run_chain(&e, &cfg, &Collectors::gains_only()).unwrap().lyapunov()
        })
        .collect();
    for a in &estimates {
        for b in &estimates {
            assert!((a.value - b.value).abs() <= 4.0 * a.stderr.hypot(b.stderr), "{a} vs {b}");
        }
    }
}

#[test]
fn conjugation_preserves_class_prediction_and_lyapunov() {
    let e = vw();
    let m = BasisChange::new(Matrix2::new(2.0, 1.0, 1.0, 1.0), BasisLabel::Custom).unwrap();
    let c = conjugate_ensemble(&m, &e);
    assert_eq!(classify(&e, DEFAULT_TOL), classify(&c, DEFAULT_TOL));
    let (p, q) = (predict(&e, 64).unwrap(), predict(&c, 64).unwrap());
    assert!((p.gamma_leading - q.gamma_leading).abs() < 1e-8);
    assert!((p.sigma_leading.value().unwrap() - q.sigma_leading.value().unwrap()).abs() < 1e-8);

    let cfg = ChainConfig::new(0.2).with_steps(200_000, 2_000).with_replicas(16);
    let a = run_chain(&e, &cfg.clone().with_seed(1), &Collectors::gains_only()).unwrap().lyapunov();
    let b = run_chain(&c, &cfg.with_seed(2), &Collectors::gains_only()).unwrap().lyapunov();
    assert!((a.value - b.value).abs() <= 4.0 * a.stderr.hypot(b.stderr), "{a} vs {b}");
}

#[test]
fn elliptic_conjugation_keeps_rotation_speed() {
    let chain = build_ensemble(&ModelSpec::harmonic_chain(Distribution::uniform(vec![0.5, 1.5]), 0.1)).unwrap().0;
    let m = BasisChange::new(Matrix2::new(3.0, 0.5, -1.0, 2.0), BasisLabel::Custom).unwrap();
    let c = conjugate_ensemble(&m, &chain);
    let (p, q) = (predict(&chain, 64).unwrap(), predict(&c, 64).unwrap());
    assert!((p.class.eta - q.class.eta).abs() < 1e-10);
    assert!((p.gamma_leading - q.gamma_leading).abs() < 1e-10);
}
