//! Experiment runner behind the `sl2-anomaly` binary.
//!
//! Every command reads an [`ExperimentConfig`] and writes into the output
//! directory (`--out`, else `[outputs] dir`). Exit codes: 0 ok, 1 usage or
//! configuration error, 2 numerical failure, 3 failed acceptance check.

pub mod config;
pub mod output;

pub use config::{ExperimentConfig, LawKind, Subject};

use crate::circle::{Angle, BasisChange};
use crate::error::{Error, Result};
use crate::mc::{
    correlation_sum_with_mean, run_chain, run_law, truncation_horizon, ChainConfig, Collectors, Estimate,
    Histogram, TestFunction, TransferLaw,
};
use crate::models::{build_ensemble, raw_law, reference_prediction, ModelSpec};
use crate::perturbation::{classify, elliptic_normal_form, hyperbolic_normal_form, predict, AnomalyClass, AnomalyKind, PredictionReport, SigmaLeading, DEFAULT_TOL};
use crate::sl2::Ensemble;
use clap::{Args, Parser, Subcommand};
use output::{fmt_f64, line_chart, Axes, CsvTable, Series};
use serde::Serialize;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_ACCEPTANCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sl2-anomaly", version, about = "Lyapunov exponents of random SL(2,R) products near the identity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment file (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory, overrides `[outputs] dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed, overrides `[chain] seed`.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Anomaly class, η and normal-form basis (JSON).
    Classify(Common),
    /// Leading-order prediction (JSON).
    Predict(Common),
    /// Monte Carlo γ̂ and σ̂ for every coupling (CSV).
    Simulate(Common),
    /// Invariant histogram, mass outside a ball, Birkhoff means (CSV).
    Measure(Common),
    /// Correlation sums from fixed initial angles (CSV).
    Correlate(Common),
    /// Monte Carlo against prediction with the acceptance tolerances.
    Compare(Common),
    /// All of the above.
    Sweep(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Classify(c)
            | Command::Predict(c)
            | Command::Simulate(c)
            | Command::Measure(c)
            | Command::Correlate(c)
            | Command::Compare(c)
            | Command::Sweep(c) => c,
        }
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

fn execute(cmd: &Command) -> Result<i32> {
    let common = cmd.common();
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.chain.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.outputs.dir = out.clone();
    }
    let exp = Experiment::new(cfg)?;
    let threads = common.threads.map(|n| n as usize).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| exp.dispatch(cmd))
}

/// One coupling of the sweep.
#[derive(Clone, Debug)]
pub struct Point {
    /// Value from `lambda_list`.
    pub coupling: f64,
    /// Coupling of the reduced ensemble.
    pub mu: f64,
    pub law: TransferLaw,
}

/// A validated configuration with its ensemble and prediction.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub ensemble: Ensemble,
    pub points: Vec<Point>,
    model: Option<ModelSpec>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassifyReport {
    #[serde(flatten)]
    pub class: AnomalyClass,
    pub normal_form: BasisChange,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimRow {
    pub coupling: f64,
    pub gamma: Estimate,
    pub sigma: Estimate,
    pub steps: usize,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct MeasureResult {
    pub coupling: f64,
    pub histogram: Histogram,
    pub radius: f64,
    pub outside: Estimate,
    pub birkhoff: Vec<(String, Estimate)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelateRow {
    pub coupling: f64,
    pub theta0: f64,
    pub f_name: String,
    pub j: Estimate,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub label: String,
    pub observed: f64,
    pub expected: String,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub table: CsvTable,
    pub slopes: CsvTable,
    pub checks: Vec<Check>,
}

impl Comparison {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (ensemble, model) = match config.subject() {
            Subject::Ensemble(e) => (e, None),
            Subject::Model(kind) => {
                let spec = ModelSpec {
                    kind,
                    coupling: config.lambda_list[0],
                };
                (build_ensemble(&spec)?.0, Some(spec))
            }
        };
        let points = config
            .lambda_list
            .iter()
            .map(|&coupling| match &model {
                None => Ok(Point {
                    coupling,
                    mu: coupling,
                    law: TransferLaw::from_ensemble(&ensemble, coupling),
                }),
                Some(spec) => {
                    let spec = spec.with_coupling(coupling);
                    let (e, mu) = build_ensemble(&spec)?;
                    let law = match config.chain.law {
                        LawKind::Reduced => TransferLaw::from_ensemble(&e, mu),
                        LawKind::Raw => raw_law(&spec)?,
                    };
                    Ok(Point { coupling, mu, law })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            ensemble,
            points,
            model,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.outputs.dir
    }

    fn dispatch(&self, cmd: &Command) -> Result<i32> {
        std::fs::create_dir_all(self.out_dir())?;
        match cmd {
            Command::Classify(_) => {
                let json = serde_json::to_string_pretty(&self.classify()?).expect("serializable");
                self.emit_json("classify.json", &json)?;
            }
            Command::Predict(_) => {
                let json = self.predict_json()?;
                self.emit_json("predict.json", &json)?;
            }
            Command::Simulate(_) => {
                let rows = self.simulate()?;
                self.write_simulate(&rows)?;
            }
            Command::Measure(_) => {
                let m = self.measure()?;
                self.write_measure(&m)?;
            }
            Command::Correlate(_) => {
                let rows = self.correlate()?;
                self.write_correlate(&rows)?;
            }
            Command::Compare(_) => {
                let rows = self.simulate()?;
                self.write_simulate(&rows)?;
                return self.finish_compare(&rows);
            }
            Command::Sweep(_) => {
                let json = serde_json::to_string_pretty(&self.classify()?).expect("serializable");
                self.emit_json("classify.json", &json)?;
                let json = self.predict_json()?;
                self.emit_json("predict.json", &json)?;
                let rows = self.simulate()?;
                self.write_simulate(&rows)?;
                let m = self.measure()?;
                self.write_measure(&m)?;
                if self.config.correlate.is_some() {
                    let c = self.correlate()?;
                    self.write_correlate(&c)?;
                }
                return self.finish_compare(&rows);
            }
        }
        Ok(EXIT_OK)
    }

    fn emit_json(&self, name: &str, json: &str) -> Result<()> {
        println!("{json}");
        std::fs::write(self.out_dir().join(name), format!("{json}\n"))?;
        Ok(())
    }

    fn wrote(&self, name: &str) {
        eprintln!("wrote {}", self.out_dir().join(name).display());
    }

    pub fn classify(&self) -> Result<ClassifyReport> {
        let class = classify(&self.ensemble, DEFAULT_TOL);
        if class.tag == AnomalyKind::Parabolic {
            return Err(Error::Parabolic);
        }
        let normal_form = match class.tag {
            AnomalyKind::Elliptic => elliptic_normal_form(&self.ensemble)?.0,
            AnomalyKind::Hyperbolic => hyperbolic_normal_form(&self.ensemble)?.0,
            _ => BasisChange::identity(),
        };
        Ok(ClassifyReport { class, normal_form })
    }

    /// Prediction for the reduced ensemble, in powers of its coupling `μ`.
    pub fn prediction(&self) -> Result<PredictionReport> {
        predict(&self.ensemble, self.config.galerkin_order)
    }

    pub fn predict_json(&self) -> Result<String> {
        let report = self.prediction()?;
        let json = match &self.model {
            None => report.to_json(),
            Some(spec) => {
                #[derive(Serialize)]
                struct WithReference<'a> {
                    #[serde(flatten)]
                    pipeline: &'a PredictionReport,
                    reference: PredictionReport,
                    coupling_power: f64,
                }
                serde_json::to_string_pretty(&WithReference {
                    pipeline: &report,
                    reference: reference_prediction(spec)?,
                    coupling_power: spec.coupling_power(),
                })
                .expect("serializable")
            }
        };
        Ok(json)
    }

    fn chain_config(&self, p: &Point) -> ChainConfig {
        self.config.chain_config(p.mu)
    }

    pub fn simulate(&self) -> Result<Vec<SimRow>> {
        self.points
            .iter()
            .map(|p| {
                let cfg = self.chain_config(p);
                let run = run_law(&p.law, &cfg, &Collectors::gains_only())?;
                Ok(SimRow {
                    coupling: p.coupling,
                    gamma: run.lyapunov(),
                    sigma: run.variance(),
                    steps: cfg.steps,
                    replicas: cfg.replicas,
                    seed: cfg.master_seed,
                })
            })
            .collect()
    }

    pub fn simulate_table(rows: &[SimRow]) -> CsvTable {
        let mut t = CsvTable::new(&[
            "lambda",
            "gamma_hat",
            "gamma_stderr",
            "sigma_hat",
            "sigma_stderr",
            "N",
            "M",
            "seed",
        ]);
        for r in rows {
            t.push(vec![
                fmt_f64(r.coupling),
                fmt_f64(r.gamma.value),
                fmt_f64(r.gamma.stderr),
                fmt_f64(r.sigma.value),
                fmt_f64(r.sigma.stderr),
                r.steps.to_string(),
                r.replicas.to_string(),
                r.seed.to_string(),
            ]);
        }
        t
    }

    fn write_simulate(&self, rows: &[SimRow]) -> Result<()> {
        Self::simulate_table(rows).write(&self.out_dir().join("simulate.csv"))?;
        self.wrote("simulate.csv");
        if self.config.outputs.svg && rows.len() > 1 {
            let report = self.prediction()?;
            let mc = |f: fn(&SimRow) -> f64, name: &str| Series {
                name: name.into(),
                points: rows.iter().map(|r| (r.coupling, f(r))).collect(),
                dashed: false,
            };
            let mut series = vec![mc(|r| r.gamma.value, "gamma_hat"), mc(|r| r.sigma.value, "sigma_hat")];
            series.push(Series {
                name: "gamma predicted".into(),
                points: self.points.iter().map(|p| (p.coupling, report.gamma_at(p.mu))).collect(),
                dashed: true,
            });
            if let Some(c) = report.sigma_leading.value() {
                series.push(Series {
                    name: "sigma predicted".into(),
                    points: self
                        .points
                        .iter()
                        .map(|p| (p.coupling, c * p.mu.powf(report.sigma_exponent)))
                        .collect(),
                    dashed: true,
                });
            }
            let axes = Axes { log_x: true, log_y: true };
            if let Some(svg) = line_chart("Lyapunov exponent and variance", "lambda", "value", &series, axes) {
                std::fs::write(self.out_dir().join("simulate.svg"), svg)?;
                self.wrote("simulate.svg");
            }
        }
        Ok(())
    }

    /// Ball radius `coupling^radius_exponent` around `[measure] center`.
    pub fn measure(&self) -> Result<Vec<MeasureResult>> {
        let functions = self.config.test_functions()?;
        self.points
            .iter()
            .map(|p| {
                let radius = p.coupling.powf(self.config.measure.radius_exponent);
                let col = Collectors {
                    histogram_bins: Some(self.config.chain.bins),
                    test_functions: functions.clone(),
                    outside: Some((Angle::new(self.config.measure.center), radius)),
                    gain_squares: false,
                };
                let run = run_law(&p.law, &self.chain_config(p), &col)?;
                let outside = if radius >= std::f64::consts::FRAC_PI_2 {
                    Estimate::exact(0.0)
                } else {
                    run.mass_outside()
                };
                Ok(MeasureResult {
                    coupling: p.coupling,
                    histogram: run.histogram().expect("histogram collected"),
                    radius,
                    outside,
                    birkhoff: functions
                        .iter()
                        .enumerate()
                        .map(|(i, f)| (f.name().to_string(), run.birkhoff(i)))
                        .collect(),
                })
            })
            .collect()
    }

    pub fn measure_tables(results: &[MeasureResult], center: f64) -> [CsvTable; 3] {
        let mut hist = CsvTable::new(&["lambda", "bin_center", "mass"]);
        let mut out = CsvTable::new(&["lambda", "center", "radius", "mass_outside", "stderr"]);
        let mut birk = CsvTable::new(&["lambda", "f_name", "mean", "stderr"]);
        for m in results {
            for (i, mass) in m.histogram.masses.iter().enumerate() {
                hist.push(vec![fmt_f64(m.coupling), fmt_f64(m.histogram.bin_center(i)), fmt_f64(*mass)]);
            }
            out.push(vec![
                fmt_f64(m.coupling),
                fmt_f64(center),
                fmt_f64(m.radius),
                fmt_f64(m.outside.value),
                fmt_f64(m.outside.stderr),
            ]);
            for (name, e) in &m.birkhoff {
                birk.push(vec![fmt_f64(m.coupling), name.clone(), fmt_f64(e.value), fmt_f64(e.stderr)]);
            }
        }
        [hist, out, birk]
    }

    fn write_measure(&self, results: &[MeasureResult]) -> Result<()> {
        let [hist, out, birk] = Self::measure_tables(results, self.config.measure.center);
        for (t, name) in [(hist, "histogram.csv"), (out, "mass_outside.csv"), (birk, "birkhoff.csv")] {
            t.write(&self.out_dir().join(name))?;
            self.wrote(name);
        }
        if self.config.outputs.svg {
            let series: Vec<Series> = results
                .iter()
                .map(|m| Series {
                    name: format!("lambda = {:.3e}", m.coupling),
                    points: (0..m.histogram.bin_count)
                        .map(|i| (m.histogram.bin_center(i), m.histogram.density(i)))
                        .collect(),
                    dashed: false,
                })
                .collect();
            if let Some(svg) = line_chart("Invariant density", "theta", "density", &series, Axes::default()) {
                std::fs::write(self.out_dir().join("histogram.svg"), svg)?;
                self.wrote("histogram.svg");
            }
        }
        Ok(())
    }

    /// Correlation sums on the reduced ensemble. The stationary mean comes
    /// from a run with the `[chain]` parameters.
    pub fn correlate(&self) -> Result<Vec<CorrelateRow>> {
        let section = self
            .config
            .correlate
            .as_ref()
            .ok_or_else(|| Error::Config("missing [correlate] section".into()))?;
        let functions: Vec<TestFunction> = section
            .functions
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?;
        let report = self.prediction()?;
        let mut rows = vec![];
        for p in &self.points {
            let stationary = self.chain_config(p);
            let col = Collectors {
                test_functions: functions.clone(),
                ..Collectors::default()
            };
            let run = run_chain(&self.ensemble, &stationary, &col)?;
            let horizon = section
                .horizon
                .unwrap_or_else(|| truncation_horizon(report.gamma_at(p.mu), stationary.steps));
            for (i, f) in functions.iter().enumerate() {
                let nu = run.birkhoff(i);
                for &theta0 in &section.theta0 {
                    let cfg = stationary
                        .clone()
                        .with_replicas(section.replicas)
                        .with_theta0(Angle::new(theta0));
                    let j = correlation_sum_with_mean(&self.ensemble, &cfg, f, horizon, nu)?;
                    rows.push(CorrelateRow {
                        coupling: p.coupling,
                        theta0,
                        f_name: f.name().to_string(),
                        j: j.estimate,
                        horizon,
                    });
                }
            }
        }
        Ok(rows)
    }

    pub fn correlate_table(rows: &[CorrelateRow]) -> CsvTable {
        let mut t = CsvTable::new(&["lambda", "theta0", "f_name", "J_hat", "J_stderr", "H"]);
        for r in rows {
            t.push(vec![
                fmt_f64(r.coupling),
                fmt_f64(r.theta0),
                r.f_name.clone(),
                fmt_f64(r.j.value),
                fmt_f64(r.j.stderr),
                r.horizon.to_string(),
            ]);
        }
        t
    }

    fn write_correlate(&self, rows: &[CorrelateRow]) -> Result<()> {
        Self::correlate_table(rows).write(&self.out_dir().join("correlate.csv"))?;
        self.wrote("correlate.csv");
        Ok(())
    }

    /// Join simulation rows with the prediction.
    ///
    /// Values are checked with `|mc − pred| ≤ max(tol·pred, 3·stderr)`. An
    /// upper-bound-only σ is checked through `σ̂/γ̂ ≤ sigma_ratio_max` at the
    /// smallest coupling and through its slope, which must not fall below the
    /// bound exponent by more than `slope_tol`.
    pub fn compare(&self, rows: &[SimRow]) -> Result<Comparison> {
        let report = self.prediction()?;
        let tol = &self.config.acceptance;
        let power = self.model.as_ref().map_or(1.0, |m| m.coupling_power());
        let mut table = CsvTable::new(&["lambda", "quantity", "mc", "mc_stderr", "predicted", "ratio", "pass"]);
        let mut checks = vec![];
        let last = rows.len().saturating_sub(1);
        for (k, (r, p)) in rows.iter().zip(&self.points).enumerate() {
            let g_pred = report.gamma_at(p.mu);
            let g_pass = within(r.gamma, g_pred, tol.gamma_rel_tol);
            table.push(row(r.coupling, "gamma", r.gamma, fmt_f64(g_pred), r.gamma.value / g_pred, Some(g_pass)));
            checks.push(Check {
                label: format!("gamma at lambda={:.6e}", r.coupling),
                observed: r.gamma.value,
                expected: fmt_f64(g_pred),
                pass: g_pass,
            });
            match report.sigma_leading {
                SigmaLeading::Value(c) => {
                    let s_pred = c * p.mu.powf(report.sigma_exponent);
                    let pass = within(r.sigma, s_pred, tol.sigma_rel_tol);
                    table.push(row(r.coupling, "sigma", r.sigma, fmt_f64(s_pred), r.sigma.value / s_pred, Some(pass)));
                    checks.push(Check {
                        label: format!("sigma at lambda={:.6e}", r.coupling),
                        observed: r.sigma.value,
                        expected: fmt_f64(s_pred),
                        pass,
                    });
                }
                SigmaLeading::UpperBoundOnly => {
                    let ratio = r.sigma.value / r.gamma.value;
                    let verdict = (k == last).then_some(ratio <= tol.sigma_ratio_max);
                    table.push(row(r.coupling, "sigma/gamma", r.sigma, "upper-bound-only".into(), ratio, verdict));
                    if let Some(pass) = verdict {
                        checks.push(Check {
                            label: format!("sigma/gamma at lambda={:.6e}", r.coupling),
                            observed: ratio,
                            expected: format!("<= {}", tol.sigma_ratio_max),
                            pass,
                        });
                    }
                }
            }
        }
        let mut slopes = CsvTable::new(&["quantity", "slope", "expected", "tolerance", "pass"]);
        if rows.len() >= 2 {
            let xs: Vec<f64> = rows.iter().map(|r| r.coupling).collect();
            let g = loglog_slope(&xs, &rows.iter().map(|r| r.gamma.value).collect::<Vec<_>>());
            let g_exp = report.gamma_exponent * power;
            let g_pass = (g - g_exp).abs() <= tol.slope_tol;
            slopes.push(vec!["gamma".into(), fmt_f64(g), fmt_f64(g_exp), fmt_f64(tol.slope_tol), verdict(g_pass)]);
            checks.push(Check {
                label: "gamma log-log slope".into(),
                observed: g,
                expected: format!("{g_exp} ± {}", tol.slope_tol),
                pass: g_pass,
            });
            let s = loglog_slope(&xs, &rows.iter().map(|r| r.sigma.value).collect::<Vec<_>>());
            let s_exp = report.sigma_exponent * power;
            let (s_pass, rule) = match report.sigma_leading {
                SigmaLeading::Value(_) => ((s - s_exp).abs() <= tol.slope_tol, format!("{s_exp} ± {}", tol.slope_tol)),
                SigmaLeading::UpperBoundOnly => (s >= s_exp - tol.slope_tol, format!(">= {s_exp} - {}", tol.slope_tol)),
            };
            slopes.push(vec!["sigma".into(), fmt_f64(s), fmt_f64(s_exp), fmt_f64(tol.slope_tol), verdict(s_pass)]);
            checks.push(Check {
                label: "sigma log-log slope".into(),
                observed: s,
                expected: rule,
                pass: s_pass,
            });
        }
        Ok(Comparison { table, slopes, checks })
    }

    fn finish_compare(&self, rows: &[SimRow]) -> Result<i32> {
        let cmp = self.compare(rows)?;
        cmp.table.write(&self.out_dir().join("compare.csv"))?;
        cmp.slopes.write(&self.out_dir().join("slopes.csv"))?;
        print!("{}", cmp.table.pretty());
        if !cmp.slopes.rows.is_empty() {
            println!();
            print!("{}", cmp.slopes.pretty());
        }
        for c in cmp.checks.iter().filter(|c| !c.pass) {
            eprintln!("FAIL {}: observed {:.6e}, expected {}", c.label, c.observed, c.expected);
        }
        Ok(if cmp.all_pass() { EXIT_OK } else { EXIT_ACCEPTANCE })
    }
}

fn within(mc: Estimate, pred: f64, rel: f64) -> bool {
    (mc.value - pred).abs() <= (rel * pred.abs()).max(3.0 * mc.stderr)
}

fn verdict(pass: bool) -> String {
    if pass { "pass" } else { "fail" }.to_string()
}

fn row(lambda: f64, q: &str, mc: Estimate, pred: String, ratio: f64, pass: Option<bool>) -> Vec<String> {
    vec![
        fmt_f64(lambda),
        q.to_string(),
        fmt_f64(mc.value),
        fmt_f64(mc.stderr),
        pred,
        fmt_f64(ratio),
        pass.map_or_else(|| "-".to_string(), verdict),
    ]
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_cfg(extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            r#"
lambda_list = [0.1, 0.05]
test_functions = ["cos2"]
[model]
kind = "harmonic-chain"
masses = {{ values = [0.5, 1.5] }}
[chain]
steps = 2000
burn_in = 100
replicas = 4
seed = 3
bins = 16
{extra}
"#
        ))
        .unwrap()
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.7)).collect();
        assert!((loglog_slope(&xs, &ys) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn classify_chain() {
        let exp = Experiment::new(chain_cfg("")).unwrap();
        let c = exp.classify().unwrap();
        assert_eq!(c.class.tag, AnomalyKind::Elliptic);
        assert!((c.class.eta - 1.0).abs() < 1e-12);
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["class"], "elliptic");
    }

    #[test]
    fn simulate_is_deterministic_and_shaped() {
        let exp = Experiment::new(chain_cfg("")).unwrap();
        let a = Experiment::simulate_table(&exp.simulate().unwrap()).render();
        let b = Experiment::simulate_table(&exp.simulate().unwrap()).render();
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 3);
        assert!(a.starts_with("lambda,gamma_hat,gamma_stderr,sigma_hat,sigma_stderr,N,M,seed\n"));
    }

    #[test]
    fn raw_law_points() {
        let exp = Experiment::new(chain_cfg("law = \"raw\"")).unwrap();
        assert_eq!(exp.points.len(), 2);
        assert!(exp.simulate().unwrap().iter().all(|r| r.gamma.value.is_finite()));
    }

    #[test]
    fn measure_tables_have_all_bins() {
        let exp = Experiment::new(chain_cfg("")).unwrap();
        let m = exp.measure().unwrap();
        let [h, o, b] = Experiment::measure_tables(&m, 0.0);
        assert_eq!(h.rows.len(), 32);
        assert_eq!(o.rows.len(), 2);
        assert_eq!(b.rows.len(), 2);
        let total: f64 = m[0].histogram.masses.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compare_flags_a_wrong_prediction() {
        let exp = Experiment::new(chain_cfg("")).unwrap();
        let rows = exp.simulate().unwrap();
        let mut bad = rows.clone();
        for r in &mut bad {
            r.gamma = Estimate { value: r.gamma.value * 10.0, stderr: 0.0, n_effective: 1 };
        }
        assert!(!exp.compare(&bad).unwrap().all_pass());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Parabolic), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(main_with_args(["sl2-anomaly", "bogus"]), EXIT_USAGE);
        assert_eq!(main_with_args(["sl2-anomaly", "simulate", "--config", "/nonexistent.toml"]), EXIT_USAGE);
    }
}
