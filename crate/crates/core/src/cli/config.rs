//! Experiment configuration files (TOML).
//!
//! ```toml
//! lambda_list = [0.1, 0.05, 0.025]     # strictly positive, descending
//! test_functions = ["cos2", "sin2sq"]  # cos2 sin2 cos4 sin4 sin2sq
//!
//! # exactly one of [model] or [ensemble]
//! [model]
//! kind = "harmonic-chain"              # anderson-edge | kronig-penney
//! masses = { values = [0.5, 1.5] }     # optional weights = [...]
//!
//! # [[ensemble.atoms]]
//! # weight = 0.25
//! # p = [a, b, c]                      # ((a, b), (c, −a))
//! # q = [[a, b, c]]                    # Q^(0), Q^(1), Q^(2); optional
//!
//! [chain]
//! steps = 2000000
//! burn_in = 10000
//! replicas = 200
//! seed = 0
//! theta0 = 0.0
//! bins = 256
//! law = "reduced"                      # or "raw" (chain, Anderson)
//!
//! [measure]
//! center = 0.0
//! radius_exponent = 0.25               # radius = coupling^exponent
//!
//! [correlate]
//! theta0 = [0.39269908169872414]
//! functions = ["cos2"]
//! replicas = 4000
//! # horizon = 25600                    # default ⌈8/γ⌉ from the prediction
//!
//! [acceptance]
//! gamma_rel_tol = 0.15
//! sigma_rel_tol = 0.15
//! slope_tol = 0.1
//! sigma_ratio_max = 0.2                # hyperbolic σ/γ bound
//!
//! [outputs]
//! dir = "out"
//! svg = true
//! ```
//!
//! Unknown keys anywhere are errors. For a model, `lambda_list` holds the
//! model coupling (`ω`, `λ` or `ε`).

use crate::circle::Angle;
use crate::error::{Error, Result};
use crate::mc::{ChainConfig, TestFunction};
use crate::models::{ModelKind, ModelSpec};
use crate::perturbation::DEFAULT_ORDER;
use crate::sl2::Ensemble;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub ensemble: Option<Ensemble>,
    #[serde(default)]
    pub model: Option<ModelKind>,
    pub lambda_list: Vec<f64>,
    #[serde(default)]
    pub test_functions: Vec<String>,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub measure: MeasureSection,
    #[serde(default)]
    pub correlate: Option<CorrelateSection>,
    #[serde(default)]
    pub acceptance: AcceptanceSection,
    #[serde(default)]
    pub outputs: OutputSection,
    #[serde(default = "default_order")]
    pub galerkin_order: usize,
}

fn default_order() -> usize {
    DEFAULT_ORDER
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    #[default]
    Reduced,
    Raw,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub steps: usize,
    pub burn_in: usize,
    pub replicas: usize,
    pub seed: u64,
    pub theta0: f64,
    pub bins: usize,
    pub law: LawKind,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            steps: 2_000_000,
            burn_in: 10_000,
            replicas: 200,
            seed: 0,
            theta0: 0.0,
            bins: 256,
            law: LawKind::Reduced,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureSection {
    pub center: f64,
    pub radius_exponent: f64,
}

impl Default for MeasureSection {
    fn default() -> Self {
        Self {
            center: 0.0,
            radius_exponent: 0.25,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateSection {
    pub theta0: Vec<f64>,
    #[serde(default = "default_correlate_functions")]
    pub functions: Vec<String>,
    #[serde(default = "default_correlate_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub horizon: Option<usize>,
}

fn default_correlate_functions() -> Vec<String> {
    vec!["cos2".into()]
}

fn default_correlate_replicas() -> usize {
    4000
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceptanceSection {
    pub gamma_rel_tol: f64,
    pub sigma_rel_tol: f64,
    pub slope_tol: f64,
    pub sigma_ratio_max: f64,
}

impl Default for AcceptanceSection {
    fn default() -> Self {
        Self {
            gamma_rel_tol: 0.15,
            sigma_rel_tol: 0.15,
            slope_tol: 0.1,
            sigma_ratio_max: 0.2,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            svg: true,
        }
    }
}

/// What the experiment simulates.
#[derive(Clone, Debug)]
pub enum Subject {
    Ensemble(Ensemble),
    Model(ModelKind),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.ensemble, &self.model) {
            (Some(_), Some(_)) => return Err(Error::Config("give either [model] or [ensemble], not both".into())),
            (None, None) => return Err(Error::Config("missing [model] or [ensemble]".into())),
            _ => {}
        }
        if self.lambda_list.is_empty() {
            return Err(Error::Config("lambda_list is empty".into()));
        }
        if self.lambda_list.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::Config("lambda_list entries must be > 0".into()));
        }
        if self.lambda_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("lambda_list must be strictly descending".into()));
        }
        if let Some(model) = &self.model {
            ModelSpec {
                kind: model.clone(),
                coupling: self.lambda_list[0],
            }
            .validate()?;
        }
        self.test_functions()?;
        if let Some(c) = &self.correlate {
            if c.theta0.is_empty() {
                return Err(Error::Config("correlate.theta0 is empty".into()));
            }
            for f in &c.functions {
                f.parse::<TestFunction>()?;
            }
            if c.replicas == 0 || c.horizon == Some(0) {
                return Err(Error::Config("correlate.replicas and horizon must be ≥ 1".into()));
            }
        }
        if self.chain.law == LawKind::Raw && !matches!(self.model, Some(ModelKind::HarmonicChain { .. } | ModelKind::AndersonEdge { .. })) {
            return Err(Error::Config("law = \"raw\" needs a harmonic-chain or anderson-edge model".into()));
        }
        if self.chain.bins < 8 {
            return Err(Error::Config("chain.bins must be ≥ 8".into()));
        }
        if !(self.measure.radius_exponent > 0.0) {
            return Err(Error::Config("measure.radius_exponent must be > 0".into()));
        }
        self.chain_config(self.lambda_list[0]).validate()?;
        Ok(())
    }

    pub fn subject(&self) -> Subject {
        match (&self.ensemble, &self.model) {
            (Some(e), _) => Subject::Ensemble(e.clone()),
            (_, Some(m)) => Subject::Model(m.clone()),
            _ => unreachable!("validated"),
        }
    }

    pub fn test_functions(&self) -> Result<Vec<TestFunction>> {
        self.test_functions.iter().map(|s| s.parse()).collect()
    }

    /// Chain parameters at coupling `lambda` (the effective coupling is
    /// substituted by the caller for models).
    pub fn chain_config(&self, lambda: f64) -> ChainConfig {
        ChainConfig {
            lambda,
            steps: self.chain.steps,
            burn_in: self.chain.burn_in,
            theta0: Angle::new(self.chain.theta0),
            replicas: self.chain.replicas,
            master_seed: self.chain.seed,
        }
    }
}
