//! Acceptance suite: one line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Criteria listed in
//! `KNOWN_FAILING` are still evaluated and reported but do not fail the run.

use sl2_anomaly::cli::{loglog_slope, Experiment, ExperimentConfig, SimRow};
use sl2_anomaly::fourier::FourierDensity;
use sl2_anomaly::mc::{run_law, ChainConfig, Collectors, Estimate, TestFunction};
use sl2_anomaly::models::{raw_law, Distribution, ModelSpec};
use sl2_anomaly::perturbation::galerkin::apply_adjoint;
use sl2_anomaly::perturbation::{
    assemble_generator, elliptic_correlation_prediction, predict, solve_stationary_density, AnomalyKind,
    SigmaLeading,
};
use sl2_anomaly::Ensemble;
use std::f64::consts::PI;
use std::process::Command;
use std::time::Instant;

const KNOWN_FAILING: &[u32] = &[4];

const CHAIN: &str = include_str!("../configs/harmonic_chain.toml");
const ANDERSON: &str = include_str!("../configs/anderson_edge.toml");
const CENTERED: &str = include_str!("../configs/centered_vw.toml");
const DIAGONAL: &str = include_str!("../configs/diagonal.toml");

/// Var(m)/(8E[m]) for masses {0.5, 1.5}.
const C_CHAIN: f64 = 0.03125;
/// `C_s` for the centered ensemble, from an independent quadrature.
const C_S_ORACLE: f64 = 0.45694658104446356;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn experiment(text: &str) -> Experiment {
    Experiment::new(ExperimentConfig::from_toml(text).expect("config parses")).expect("experiment builds")
}

fn combined(a: &Estimate, b: &Estimate) -> f64 {
    a.stderr.hypot(b.stderr)
}

struct Shared {
    chain: Vec<SimRow>,
    anderson: Vec<SimRow>,
    anderson_mass: Vec<Estimate>,
    centered: Vec<SimRow>,
}

fn criterion_1(s: &Shared) -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    for r in &s.chain {
        let w2 = r.coupling * r.coupling;
        let ratio = r.gamma.value / w2;
        let band = (0.15 * C_CHAIN).max(3.0 * r.gamma.stderr / w2);
        ok &= (ratio - C_CHAIN).abs() <= band;
        parts.push(format!("ω={} γ/ω²={ratio:.5}", r.coupling));
    }
    let xs: Vec<f64> = s.chain.iter().map(|r| r.coupling).collect();
    let slope = loglog_slope(&xs, &s.chain.iter().map(|r| r.gamma.value).collect::<Vec<_>>());
    ok &= (slope - 2.0).abs() <= 0.1;
    outcome(ok, format!("{}; slope {slope:.4} (C = {C_CHAIN})", parts.join(", ")))
}

fn criterion_2(s: &Shared) -> Outcome {
    let mut ok = true;
    let mut parts = vec![];
    for r in &s.chain {
        let diff = (r.sigma.value - r.gamma.value).abs();
        ok &= diff <= (0.15 * r.gamma.value).max(3.0 * combined(&r.sigma, &r.gamma));
        parts.push(format!("ω={} σ/γ={:.3}", r.coupling, r.sigma.value / r.gamma.value));
    }
    outcome(ok, parts.join(", "))
}

fn criterion_3(s: &Shared) -> Outcome {
    let last = s.anderson.last().unwrap();
    let dev = (last.gamma.value / last.coupling.sqrt() - 1.0).abs();
    let xs: Vec<f64> = s.anderson.iter().map(|r| r.coupling).collect();
    let slope = loglog_slope(&xs, &s.anderson.iter().map(|r| r.gamma.value).collect::<Vec<_>>());
    outcome(
        dev <= 0.15 && (slope - 0.5).abs() <= 0.05,
        format!("|γ/√λ − 1| = {dev:.4} at λ={}; slope {slope:.4}", last.coupling),
    )
}

fn criterion_4(s: &Shared) -> Outcome {
    let last = s.anderson.last().unwrap();
    let ratio = last.sigma.value / last.gamma.value;
    let xs: Vec<f64> = s.anderson.iter().map(|r| r.coupling).collect();
    let slope = loglog_slope(&xs, &s.anderson.iter().map(|r| r.sigma.value).collect::<Vec<_>>());
    outcome(
        ratio <= 0.2 && slope >= 1.2,
        format!("σ/γ = {ratio:.4} at λ={}; σ slope {slope:.4} (needs ≥ 1.2)", last.coupling),
    )
}

fn criterion_5(s: &Shared) -> Outcome {
    let ratios: Vec<f64> = s.anderson_mass.windows(2).map(|w| w[0].value / w[1].value).collect();
    let ok = ratios.len() == 2 && ratios.iter().all(|r| (1.4..=2.9).contains(r));
    let masses: Vec<String> = s.anderson_mass.iter().map(|m| format!("{:.3e}", m.value)).collect();
    outcome(ok, format!("mass outside λ^(1/4) {masses:?}; ratios {ratios:.3?}"))
}

fn criterion_6(s: &Shared, e: &Ensemble) -> Outcome {
    let report = predict(e, 64).expect("centered prediction");
    let c_s = report.gamma_leading;
    let mut ok = report.gamma_exponent == 2.0 && (c_s - C_S_ORACLE).abs() <= 1e-9;
    let mut parts = vec![];
    for r in &s.centered {
        let l2 = r.coupling * r.coupling;
        let ratio = r.gamma.value / l2;
        ok &= (ratio - c_s).abs() <= (0.15 * c_s).max(3.0 * r.gamma.stderr / l2);
        parts.push(format!("λ={} γ/λ²={ratio:.4}", r.coupling));
    }
    let xs: Vec<f64> = s.centered.iter().map(|r| r.coupling).collect();
    let slope = loglog_slope(&xs, &s.centered.iter().map(|r| r.gamma.value).collect::<Vec<_>>());
    ok &= (slope - 2.0).abs() <= 0.1;
    outcome(ok, format!("C_s = {c_s:.6}; {}; slope {slope:.4}", parts.join(", ")))
}

fn criterion_7(s: &Shared, e: &Ensemble) -> Outcome {
    let report = predict(e, 64).expect("centered prediction");
    let SigmaLeading::Value(cp) = report.sigma_leading else {
        return outcome(false, "no σ constant".into());
    };
    let mut ok = true;
    let mut parts = vec![];
    for r in &s.centered {
        let l2 = r.coupling * r.coupling;
        let ratio = r.sigma.value / l2;
        ok &= (ratio - cp).abs() <= (0.25 * cp).max(3.0 * r.sigma.stderr / l2);
        parts.push(format!("λ={} σ/λ²={ratio:.4}±{:.4}", r.coupling, r.sigma.stderr / l2));
    }
    outcome(ok, format!("C's = {cp:.6}; {}", parts.join(", ")))
}

fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = PI / n as f64;
    let mut s = f(0.0) + f(PI);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn criterion_8(e: &Ensemble) -> Outcome {
    let uniform = solve_stationary_density(&FourierDensity::constant(0.7), &FourierDensity::zeros(0), 64).unwrap();
    let uniform_err = uniform.max_nonconstant_coeff();

    let (d, b) = assemble_generator(e).unwrap();
    let dd = |t: f64| 0.5 * (1.0 + (2.0 * t).sin().powi(2));
    let z = simpson(|t| dd(t).powf(-0.5), 20_000);
    let rho = solve_stationary_density(&d, &b, 64).unwrap();
    let closed = FourierDensity::grid(1024)
        .into_iter()
        .map(|t| (rho.eval(t) - dd(t).powf(-0.5) / z).abs())
        .fold(0.0, f64::max);
    let residual = apply_adjoint(&d, &b, &rho).sup_norm(1024);
    let rho2 = solve_stationary_density(&d, &b, 128).unwrap();
    let stability = (&rho - &rho2).sup_norm(1024);
    outcome(
        uniform_err <= 1e-14 && closed <= 1e-8 && residual <= 1e-8 && stability <= 1e-8,
        format!("uniform {uniform_err:.1e}, closed form {closed:.1e}, residual {residual:.1e}, K→2K {stability:.1e}"),
    )
}

fn criterion_9() -> Outcome {
    let exp = experiment(DIAGONAL);
    let r = exp.simulate().unwrap()[0];
    let g_ok = r.gamma.within(0.0, 3.0);
    let s_ok = r.sigma.within(0.01, 3.0);
    outcome(g_ok && s_ok, format!("γ̂ = {}, σ̂ = {}", r.gamma, r.sigma))
}

fn criterion_10() -> Outcome {
    let mut cfg = ExperimentConfig::from_toml(CHAIN).unwrap();
    cfg.lambda_list = vec![0.1];
    let thetas = [PI / 8.0, PI / 4.0, 3.0 * PI / 8.0];
    let section = cfg.correlate.as_mut().unwrap();
    section.theta0 = thetas.to_vec();
    section.functions = vec!["cos2".into()];
    let exp = Experiment::new(cfg).unwrap();
    let eta = exp.classify().unwrap().class.eta;
    let rows = exp.correlate().unwrap();
    let f = TestFunction::Cos2.to_fourier();
    let mut ok = rows.len() == thetas.len();
    let mut parts = vec![];
    for r in &rows {
        let target = -5.0 * (2.0 * r.theta0).sin();
        let pred = elliptic_correlation_prediction(&f, eta, 0.1, r.theta0);
        ok &= (pred - target).abs() < 1e-12 && (r.j.value - target).abs() <= 2.5;
        parts.push(format!("θ₀={:.4} Ĵ={:.3}±{:.3} (−5 sin 2θ₀ = {target:.3})", r.theta0, r.j.value, r.j.stderr));
    }
    outcome(ok, format!("H={}; {}", rows.first().map_or(0, |r| r.horizon), parts.join(", ")))
}

fn criterion_11(s: &Shared) -> Outcome {
    let spec = ModelSpec::harmonic_chain(Distribution::uniform(vec![0.5, 1.5]), 0.1);
    let reduced = s.chain.iter().find(|r| r.coupling == 0.1).unwrap();
    let cfg = ChainConfig::new(0.1).with_seed(reduced.seed.wrapping_add(1));
    let raw = run_law(&raw_law(&spec).unwrap(), &cfg, &Collectors::gains_only()).unwrap().lyapunov();
    let z = (raw.value - reduced.gamma.value) / combined(&raw, &reduced.gamma);
    outcome(z.abs() <= 3.0, format!("raw {raw}, reduced {}, z = {z:.2}", reduced.gamma))
}

fn criterion_12() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("det.toml");
    std::fs::write(
        &config,
        CHAIN.replace("steps = 2000000", "steps = 100000").replace("replicas = 200", "replicas = 16"),
    )
    .unwrap();
    let run = |threads: &str| {
        let out = dir.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_sl2-anomaly"))
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads])
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        std::fs::read(out.join("simulate.csv")).unwrap()
    };
    let a = run("1");
    let b = run("8");
    outcome(!a.is_empty() && a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let start = Instant::now();
    let chain = experiment(CHAIN);
    let anderson = experiment(ANDERSON);
    let centered = experiment(CENTERED);
    assert_eq!(chain.classify().unwrap().class.tag, AnomalyKind::Elliptic);
    assert_eq!(anderson.classify().unwrap().class.tag, AnomalyKind::Hyperbolic);

    let anderson_measure = anderson.measure().unwrap();
    let shared = Shared {
        chain: chain.simulate().unwrap(),
        anderson: anderson.simulate().unwrap(),
        anderson_mass: anderson_measure.iter().map(|m| m.outside).collect(),
        centered: centered.simulate().unwrap(),
    };
    let e = centered.ensemble.clone();

    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "elliptic γ", Box::new(|| criterion_1(&shared))),
        (2, "single parameter scaling", Box::new(|| criterion_2(&shared))),
        (3, "hyperbolic γ", Box::new(|| criterion_3(&shared))),
        (4, "hyperbolic σ suppression", Box::new(|| criterion_4(&shared))),
        (5, "measure concentration", Box::new(|| criterion_5(&shared))),
        (6, "centered γ", Box::new(|| criterion_6(&shared, &e))),
        (7, "centered σ", Box::new(|| criterion_7(&shared, &e))),
        (8, "density solver", Box::new(|| criterion_8(&e))),
        (9, "estimator calibration", Box::new(criterion_9)),
        (10, "correlation-sum law", Box::new(criterion_10)),
        (11, "reduction consistency", Box::new(|| criterion_11(&shared))),
        (12, "determinism", Box::new(criterion_12)),
    ];

    let mut unexpected = vec![];
    for (n, name, run) in &criteria {
        let o = run();
        let tag = match (o.pass, KNOWN_FAILING.contains(n)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected.push(*n);
                "FAIL"
            }
        };
        println!("criterion {n:>2} {name}: {tag} | {}", o.detail);
    }
    println!("acceptance finished in {:.1?}", start.elapsed());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
