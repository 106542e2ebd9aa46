//! Monte Carlo estimation on the angle chain `θ_{n+1} = S_{λ,n}(θ_n)`.
//!
//! Replicas run independently, each on its own [`ReplicaRng`] stream, and are
//! reduced in replica order, so results do not depend on the number of
//! worker threads.

use crate::circle::Angle;
use crate::error::{Error, Result};
use crate::fourier::FourierDensity;
use crate::rng::{ReplicaRng, CORRELATION_DOMAIN};
use crate::sl2::{build_transfer, Ensemble, Unimodular2x2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Steps between renormalizations of the state vector on the fast path.
const RENORM: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub lambda: f64,
    pub steps: usize,
    pub burn_in: usize,
    pub theta0: Angle,
    pub replicas: usize,
    pub master_seed: u64,
}

impl ChainConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            steps: 2_000_000,
            burn_in: 10_000,
            theta0: Angle::ZERO,
            replicas: 200,
            master_seed: 0,
        }
    }

    pub fn with_steps(mut self, steps: usize, burn_in: usize) -> Self {
        self.steps = steps;
        self.burn_in = burn_in;
        self
    }

    pub fn with_replicas(mut self, replicas: usize) -> Self {
        self.replicas = replicas;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_theta0(mut self, theta0: Angle) -> Self {
        self.theta0 = theta0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if self.steps <= self.burn_in {
            return Err(Error::InvalidParameter(format!(
                "steps ({}) must exceed burn_in ({})",
                self.steps, self.burn_in
            )));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidParameter("replicas must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Number of post-burn-in steps per replica.
    pub fn measured_steps(&self) -> usize {
        self.steps - self.burn_in
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_effective: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            n_effective: 0,
        }
    }

    /// Mean of per-replica values with standard error `sd/√M`.
    pub fn from_samples(samples: &[f64]) -> Self {
        let m = samples.len();
        let mean = neumaier_sum(samples.iter().copied()) / m as f64;
        let stderr = if m < 2 {
            f64::INFINITY
        } else {
            let ss = neumaier_sum(samples.iter().map(|x| (x - mean) * (x - mean)));
            (ss / (m - 1) as f64).sqrt() / (m as f64).sqrt()
        };
        Self {
            value: mean,
            stderr,
            n_effective: m as u64,
        }
    }

    /// `|value − target| ≤ k·stderr`
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6e} ± {:.2e}", self.value, self.stderr)
    }
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Compensated::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[derive(Clone, Copy, Debug, Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.c
    }
}

/// Empirical measure on uniform bins of `[0, π)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_count: usize,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub const DEFAULT_BINS: usize = 256;

    pub fn from_counts(counts: &[u64]) -> Self {
        let total: u64 = counts.iter().sum();
        let masses = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self {
            bin_count: counts.len(),
            masses,
        }
    }

    pub fn bin_width(&self) -> f64 {
        PI / self.bin_count as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width()
    }

    /// Mass divided by bin width.
    pub fn density(&self, i: usize) -> f64 {
        self.masses[i] / self.bin_width()
    }

    /// `∫ f dν̂` by the midpoint rule.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        neumaier_sum((0..self.bin_count).map(|i| self.masses[i] * f(self.bin_center(i))))
    }

    /// Largest deviation of the density from the uniform value `1/π`.
    pub fn sup_deviation_from_uniform(&self) -> f64 {
        (0..self.bin_count)
            .map(|i| (self.density(i) - 1.0 / PI).abs())
            .fold(0.0, f64::max)
    }
}

/// Observables accepted by the Birkhoff and correlation estimators.
#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    Cos2,
    Sin2,
    Cos4,
    Sin4,
    Sin2Sq,
    Trig(FourierDensity),
}

impl TestFunction {
    pub const NAMED: [TestFunction; 5] = [
        TestFunction::Cos2,
        TestFunction::Sin2,
        TestFunction::Cos4,
        TestFunction::Sin4,
        TestFunction::Sin2Sq,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::Cos2 => "cos2",
            TestFunction::Sin2 => "sin2",
            TestFunction::Cos4 => "cos4",
            TestFunction::Sin4 => "sin4",
            TestFunction::Sin2Sq => "sin2sq",
            TestFunction::Trig(_) => "trig",
        }
    }

    /// Value at `θ` from `(cos 2θ, sin 2θ)`.
    #[inline]
    pub fn eval_double_angle(&self, c2: f64, s2: f64) -> f64 {
        match self {
            TestFunction::Cos2 => c2,
            TestFunction::Sin2 => s2,
            TestFunction::Cos4 => c2 * c2 - s2 * s2,
            TestFunction::Sin4 => 2.0 * c2 * s2,
            TestFunction::Sin2Sq => s2 * s2,
            TestFunction::Trig(f) => f.eval_from_double_angle(c2, s2),
        }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let (s, c) = (2.0 * theta).sin_cos();
        self.eval_double_angle(c, s)
    }

    pub fn to_fourier(&self) -> FourierDensity {
        match self {
            TestFunction::Cos2 => FourierDensity::harmonic(1, 1.0, 0.0),
            TestFunction::Sin2 => FourierDensity::harmonic(1, 0.0, 1.0),
            TestFunction::Cos4 => FourierDensity::harmonic(2, 1.0, 0.0),
            TestFunction::Sin4 => FourierDensity::harmonic(2, 0.0, 1.0),
            TestFunction::Sin2Sq => {
                &FourierDensity::constant(0.5) + &FourierDensity::harmonic(2, -0.5, 0.0)
            }
            TestFunction::Trig(f) => f.clone(),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::NAMED
            .iter()
            .find(|f| f.name() == s)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown test function '{s}'")))
    }
}

/// What each replica records after burn-in. Gain sums are always kept.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Collectors {
    pub histogram_bins: Option<usize>,
    pub test_functions: Vec<TestFunction>,
    /// Count steps with `dist(θ, center) > radius`.
    pub outside: Option<(Angle, f64)>,
    pub gain_squares: bool,
}

impl Collectors {
    pub fn gains_only() -> Self {
        Self::default()
    }

    fn per_step(&self) -> bool {
        self.histogram_bins.is_some()
            || !self.test_functions.is_empty()
            || self.outside.is_some()
            || self.gain_squares
    }
}

/// Raw sums of one replica over its measured steps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicaSums {
    pub replica: u64,
    pub steps: u64,
    pub gain_sum: f64,
    pub gain_sq_sum: f64,
    pub histogram: Vec<u64>,
    pub test_sums: Vec<f64>,
    pub outside_count: u64,
}

/// Per-atom transfer matrices at a fixed coupling, ready for sampling.
#[derive(Clone, Debug)]
pub struct TransferLaw {
    matrices: Vec<Unimodular2x2>,
    cumulative: Vec<f64>,
}

impl TransferLaw {
    pub fn from_ensemble(e: &Ensemble, lambda: f64) -> Self {
        let weights: Vec<f64> = e.atoms().iter().map(|a| a.weight).collect();
        let matrices = e
            .atoms()
            .iter()
            .map(|a| build_transfer(lambda, &a.p, &a.q))
            .collect();
        Self::new(&weights, matrices).expect("ensemble weights are valid")
    }

    pub fn new(weights: &[f64], matrices: Vec<Unimodular2x2>) -> Result<Self> {
        if weights.len() != matrices.len() || weights.is_empty() {
            return Err(Error::InvalidEnsemble("weights and matrices differ in length".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidEnsemble(format!("invalid weights, sum {total}")));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self { matrices, cumulative })
    }

    pub fn matrices(&self) -> &[Unimodular2x2] {
        &self.matrices
    }

    /// One uniform draw, same convention as [`crate::sl2::sample_atom`].
    #[inline]
    fn sample(&self, rng: &mut ReplicaRng) -> &Unimodular2x2 {
        if self.matrices.len() == 1 {
            rng.next_u64();
            return &self.matrices[0];
        }
        let u = rng.uniform();
        let i = self.cumulative.partition_point(|&c| c <= u);
        &self.matrices[i.min(self.matrices.len() - 1)]
    }

    /// Steps between renormalizations, so that the unnormalized state cannot
    /// overflow.
    fn renorm_interval(&self) -> usize {
        let worst = self
            .matrices
            .iter()
            .map(|m| m.max_abs().max(1.0).ln() + 1.0)
            .fold(0.0, f64::max);
        ((300.0 / worst) as usize).clamp(1, RENORM)
    }
}

/// Output of [`run_chain`].
#[derive(Clone, Debug)]
pub struct ChainRun {
    pub config: ChainConfig,
    pub replicas: Vec<ReplicaSums>,
}

impl ChainRun {
    pub fn lyapunov(&self) -> Estimate {
        let n = self.config.measured_steps() as f64;
        let per: Vec<f64> = self.replicas.iter().map(|r| r.gain_sum / n).collect();
        let mut e = Estimate::from_samples(&per);
        e.n_effective = self.replicas.len() as u64 * self.config.measured_steps() as u64;
        e
    }

    /// Sample variance of `(L_r − nγ̂)/√n`, stderr `σ̂·√(2/(M−1))`.
    pub fn variance(&self) -> Estimate {
        let n = self.config.measured_steps() as f64;
        let gamma = self.lyapunov().value;
        let m = self.replicas.len();
        let stats = self.replicas.iter().map(|r| {
            let s = (r.gain_sum - n * gamma) / n.sqrt();
            s * s
        });
        let (value, stderr) = if m < 2 {
            (f64::NAN, f64::INFINITY)
        } else {
            let v = neumaier_sum(stats) / (m - 1) as f64;
            (v, v * (2.0 / (m - 1) as f64).sqrt())
        };
        Estimate {
            value,
            stderr,
            n_effective: m as u64,
        }
    }

    pub fn histogram(&self) -> Option<Histogram> {
        let bins = self.replicas.first()?.histogram.len();
        if bins == 0 {
            return None;
        }
        let mut counts = vec![0u64; bins];
        for r in &self.replicas {
            for (c, x) in counts.iter_mut().zip(&r.histogram) {
                *c += x;
            }
        }
        Some(Histogram::from_counts(&counts))
    }

    /// Birkhoff mean of the `i`-th collected test function.
    pub fn birkhoff(&self, i: usize) -> Estimate {
        let n = self.config.measured_steps() as f64;
        let per: Vec<f64> = self.replicas.iter().map(|r| r.test_sums[i] / n).collect();
        Estimate::from_samples(&per)
    }

    pub fn mass_outside(&self) -> Estimate {
        let n = self.config.measured_steps() as f64;
        let per: Vec<f64> = self
            .replicas
            .iter()
            .map(|r| r.outside_count as f64 / n)
            .collect();
        Estimate::from_samples(&per)
    }
}

pub fn run_chain(e: &Ensemble, cfg: &ChainConfig, collectors: &Collectors) -> Result<ChainRun> {
    cfg.validate()?;
    run_law(&TransferLaw::from_ensemble(e, cfg.lambda), cfg, collectors)
}

/// Same as [`run_chain`] for an explicit law of transfer matrices (the
/// coupling in `cfg` is then only recorded).
pub fn run_law(law: &TransferLaw, cfg: &ChainConfig, collectors: &Collectors) -> Result<ChainRun> {
    if cfg.steps <= cfg.burn_in || cfg.replicas == 0 {
        cfg.validate()?;
    }
    if let Some(bins) = collectors.histogram_bins {
        if bins < 8 {
            return Err(Error::InvalidParameter(format!("histogram needs ≥ 8 bins, got {bins}")));
        }
    }
    let replicas = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| run_replica(law, cfg, collectors, r))
        .collect();
    Ok(ChainRun {
        config: cfg.clone(),
        replicas,
    })
}

fn run_replica(law: &TransferLaw, cfg: &ChainConfig, col: &Collectors, r: u64) -> ReplicaSums {
    let mut rng = ReplicaRng::new(cfg.master_seed, r);
    let [mut x, mut y] = cfg.theta0.unit_vector();
    let interval = law.renorm_interval();

    for i in 0..cfg.burn_in {
        let t = law.sample(&mut rng);
        let nx = t.t11 * x + t.t12 * y;
        y = t.t21 * x + t.t22 * y;
        x = nx;
        if (i + 1) % interval == 0 {
            let norm = x.hypot(y);
            x /= norm;
            y /= norm;
        }
    }
    let norm = x.hypot(y);
    x /= norm;
    y /= norm;

    let measured = cfg.measured_steps();
    let mut out = ReplicaSums {
        replica: r,
        steps: measured as u64,
        gain_sum: 0.0,
        gain_sq_sum: 0.0,
        histogram: vec![0; col.histogram_bins.unwrap_or(0)],
        test_sums: vec![0.0; col.test_functions.len()],
        outside_count: 0,
    };

    if !col.per_step() {
        let mut gains = Compensated::default();
        let mut done = 0;
        while done < measured {
            let block = interval.min(measured - done);
            for _ in 0..block {
                let t = law.sample(&mut rng);
                let nx = t.t11 * x + t.t12 * y;
                y = t.t21 * x + t.t22 * y;
                x = nx;
            }
            let r2 = x * x + y * y;
            gains.add(0.5 * r2.ln());
            let norm = r2.sqrt();
            x /= norm;
            y /= norm;
            done += block;
        }
        out.gain_sum = gains.value();
        return out;
    }

    let mut gains = Compensated::default();
    let mut gains_sq = Compensated::default();
    let mut tests = vec![Compensated::default(); col.test_functions.len()];
    let bins = col.histogram_bins.unwrap_or(0);
    let bin_scale = bins as f64 / PI;
    let outside = col.outside.map(|(c, radius)| {
        let (s, c) = c.value().sin_cos();
        (c, s, radius.sin())
    });
    for _ in 0..measured {
        let t = law.sample(&mut rng);
        let nx = t.t11 * x + t.t12 * y;
        let ny = t.t21 * x + t.t22 * y;
        let r2 = nx * nx + ny * ny;
        let g = 0.5 * r2.ln();
        gains.add(g);
        if col.gain_squares {
            gains_sq.add(g * g);
        }
        let norm = r2.sqrt();
        x = nx / norm;
        y = ny / norm;

        // observables of the new angle θ_n
        if !tests.is_empty() {
            let c2 = x * x - y * y;
            let s2 = 2.0 * x * y;
            for (acc, f) in tests.iter_mut().zip(&col.test_functions) {
                acc.add(f.eval_double_angle(c2, s2));
            }
        }
        if bins > 0 {
            let theta = Angle::new(y.atan2(x)).value();
            let b = ((theta * bin_scale) as usize).min(bins - 1);
            out.histogram[b] += 1;
        }
        if let Some((cc, sc, sr)) = outside {
            if (y * cc - x * sc).abs() > sr {
                out.outside_count += 1;
            }
        }
    }
    out.gain_sum = gains.value();
    out.gain_sq_sum = gains_sq.value();
    out.test_sums = tests.into_iter().map(Compensated::value).collect();
    out
}

pub fn estimate_lyapunov(e: &Ensemble, cfg: &ChainConfig) -> Result<Estimate> {
    Ok(run_chain(e, cfg, &Collectors::gains_only())?.lyapunov())
}

pub fn estimate_variance(e: &Ensemble, cfg: &ChainConfig) -> Result<Estimate> {
    Ok(run_chain(e, cfg, &Collectors::gains_only())?.variance())
}

pub fn estimate_invariant_histogram(e: &Ensemble, cfg: &ChainConfig, bins: usize) -> Result<Histogram> {
    let col = Collectors {
        histogram_bins: Some(bins),
        ..Collectors::default()
    };
    Ok(run_chain(e, cfg, &col)?.histogram().expect("histogram requested"))
}

pub fn birkhoff_sum(e: &Ensemble, cfg: &ChainConfig, f: &TestFunction) -> Result<Estimate> {
    let col = Collectors {
        test_functions: vec![f.clone()],
        ..Collectors::default()
    };
    Ok(run_chain(e, cfg, &col)?.birkhoff(0))
}

pub fn measure_mass_outside(e: &Ensemble, cfg: &ChainConfig, center: Angle, radius: f64) -> Result<Estimate> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be > 0, got {radius}")));
    }
    if radius >= PI / 2.0 {
        return Ok(Estimate::exact(0.0));
    }
    let col = Collectors {
        outside: Some((center, radius)),
        ..Collectors::default()
    };
    Ok(run_chain(e, cfg, &col)?.mass_outside())
}

/// Truncation horizon `⌈8/γ̂⌉`, capped at `steps/10`.
pub fn truncation_horizon(gamma_guess: f64, steps: usize) -> usize {
    let cap = (steps / 10).max(1);
    if !(gamma_guess > 0.0) || !gamma_guess.is_finite() {
        return cap;
    }
    let h = (8.0 / gamma_guess).ceil();
    if h >= cap as f64 {
        cap
    } else {
        (h as usize).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub estimate: Estimate,
    pub horizon: usize,
    /// Stationary mean `ν̂(f)` that was subtracted.
    pub stationary_mean: Estimate,
}

/// `Σ_{n=1}^{H} (f(θ_n) − ν̂(f))` averaged over replicas started at
/// `cfg.theta0` without burn-in.
///
/// `ν̂(f)` comes from the stationary run `stationary` (burn-in and all), whose
/// streams are kept apart from the correlation replicas. The standard error
/// combines both sources, the stationary one amplified by `H`.
pub fn correlation_sum(
    e: &Ensemble,
    cfg: &ChainConfig,
    f: &TestFunction,
    horizon: usize,
    stationary: &ChainConfig,
) -> Result<CorrelationEstimate> {
    let nu = birkhoff_sum(e, stationary, f)?;
    correlation_sum_with_mean(e, cfg, f, horizon, nu)
}

/// [`correlation_sum`] with a precomputed stationary mean `ν̂(f)`.
pub fn correlation_sum_with_mean(
    e: &Ensemble,
    cfg: &ChainConfig,
    f: &TestFunction,
    horizon: usize,
    nu: Estimate,
) -> Result<CorrelationEstimate> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be ≥ 1".into()));
    }
    cfg.validate()?;
    let law = TransferLaw::from_ensemble(e, cfg.lambda);
    let transient = ChainConfig {
        steps: horizon,
        burn_in: 0,
        master_seed: cfg.master_seed ^ CORRELATION_DOMAIN,
        ..cfg.clone()
    };
    let col = Collectors {
        test_functions: vec![f.clone()],
        ..Collectors::default()
    };
    let run = run_law(&law, &transient, &col)?;
    let per: Vec<f64> = run
        .replicas
        .iter()
        .map(|r| r.test_sums[0] - horizon as f64 * nu.value)
        .collect();
    let mut est = Estimate::from_samples(&per);
    est.stderr = est.stderr.hypot(horizon as f64 * nu.stderr);
    Ok(CorrelationEstimate {
        estimate: est,
        horizon,
        stationary_mean: nu,
    })
}
