//! Harmonic chain, Anderson band edge and Kronig–Penney ensembles in their
//! reduced coordinates.
//!
//! Each model yields a transfer matrix `1 + μA + μ²B + 𝒪(μ³)` after the basis
//! changes, with `μ` the effective coupling. It is matched to
//! `exp(μP + μ²Q)` by `P = A` and `Q = B − A²/2 = B + (det A/2)·1`.

use crate::circle::{BasisChange, BasisLabel};
use crate::error::{Error, Result};
use crate::mc::TransferLaw;
use crate::perturbation::{
    classify, predict, AnomalyClass, AnomalyKind, PredictionReport, SigmaLeading, DEFAULT_ORDER,
    DEFAULT_TOL,
};
use crate::sl2::{Atom, Ensemble, QPolynomial, TracelessGenerator, Unimodular2x2};
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Finite distribution of a scalar; weights default to uniform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Distribution {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Distribution {
    pub fn uniform(values: Vec<f64>) -> Self {
        Self { values, weights: None }
    }

    pub fn weights(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / self.values.len().max(1) as f64; self.values.len()],
        }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidParameter(format!("{what}: no values")));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{what}: non-finite value")));
        }
        let w = self.weights();
        if w.len() != self.values.len() {
            return Err(Error::InvalidParameter(format!("{what}: {} weights for {} values", w.len(), self.values.len())));
        }
        let total: f64 = w.iter().sum();
        if w.iter().any(|x| !(*x >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("{what}: weights must be ≥ 0 and sum to 1")));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(self.weights()).map(|(v, w)| v * w).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.values.iter().zip(self.weights()).map(|(v, w)| v * v * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().zip(self.weights()).map(|(v, w)| (v - m) * (v - m) * w).sum()
    }

    fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.weights()).map(|(v, w)| (w, v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Below,
    Above,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelKind {
    HarmonicChain {
        masses: Distribution,
    },
    /// Energy `E = 2 + wλ`.
    AndersonEdge {
        w: f64,
        potential: Distribution,
    },
    /// Energy `E_l ∓ ε`.
    KronigPenney {
        l: u32,
        side: Side,
        potential: Distribution,
    },
}

/// A model with its coupling: `ω` (chain), `λ` (Anderson) or `ε`
/// (Kronig–Penney).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub coupling: f64,
}

impl ModelSpec {
    pub fn harmonic_chain(masses: Distribution, omega: f64) -> Self {
        Self {
            kind: ModelKind::HarmonicChain { masses },
            coupling: omega,
        }
    }

    pub fn anderson_edge(w: f64, potential: Distribution, lambda: f64) -> Self {
        Self {
            kind: ModelKind::AndersonEdge { w, potential },
            coupling: lambda,
        }
    }

    pub fn kronig_penney(l: u32, side: Side, potential: Distribution, epsilon: f64) -> Self {
        Self {
            kind: ModelKind::KronigPenney { l, side, potential },
            coupling: epsilon,
        }
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        Self {
            kind: self.kind.clone(),
            coupling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coupling > 0.0) || !self.coupling.is_finite() {
            return Err(Error::InvalidParameter(format!("coupling must be > 0, got {}", self.coupling)));
        }
        match &self.kind {
            ModelKind::HarmonicChain { masses } => {
                masses.validate("masses")?;
                if masses.values.iter().any(|m| !(*m > 0.0)) {
                    return Err(Error::InvalidParameter("masses must be > 0".into()));
                }
            }
            ModelKind::AndersonEdge { w, potential } => {
                potential.validate("potential")?;
                if !w.is_finite() || *w - potential.mean() == 0.0 {
                    return Err(Error::InvalidParameter("band-edge offset w − E[v] must be nonzero".into()));
                }
            }
            ModelKind::KronigPenney { l, potential, .. } => {
                potential.validate("potential")?;
                if *l < 1 {
                    return Err(Error::InvalidParameter("l must be ≥ 1".into()));
                }
                if !(potential.mean() > 0.0) {
                    return Err(Error::InvalidParameter("Kronig-Penney needs a positive mean potential".into()));
                }
            }
        }
        Ok(())
    }

    /// Coupling of the reduced ensemble: `ω`, `λ^{1/2}` or `ε^{1/2}`.
    pub fn effective_lambda(&self) -> f64 {
        match self.kind {
            ModelKind::HarmonicChain { .. } => self.coupling,
            _ => self.coupling.sqrt(),
        }
    }

    /// Exponent converting powers of the effective coupling into powers of
    /// the model coupling.
    pub fn coupling_power(&self) -> f64 {
        match self.kind {
            ModelKind::HarmonicChain { .. } => 1.0,
            _ => 0.5,
        }
    }
}

const J: [[f64; 2]; 2] = [[0.0, -1.0], [1.0, 0.0]];

fn mat(m: [[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

/// `(P, Q)` from `1 + μA + μ²B`.
fn match_expansion(a: &Matrix2<f64>, b: &Matrix2<f64>) -> (TracelessGenerator, QPolynomial) {
    let p = TracelessGenerator::traceless_part(a);
    let q = b + Matrix2::identity() * (0.5 * a.determinant());
    (p, QPolynomial::constant(TracelessGenerator::traceless_part(&q)))
}

/// Reduced expansion `(A, B)` for one value of the random parameter.
fn reduced_expansion(kind: &ModelKind, x: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    match kind {
        ModelKind::HarmonicChain { masses } => {
            let s = masses.mean().sqrt();
            let a = mat([[0.0, -s], [x / s, 0.0]]);
            let b = mat([[-x, 0.0], [0.0, 0.0]]);
            (a, b)
        }
        ModelKind::AndersonEdge { w, potential } => {
            // u = w − v after M₂M₁: 1 + μ((0,1),(u,0)) + μ² diag(u, 0)
            let u = w - x;
            let a = mat([[0.0, 1.0], [u, 0.0]]);
            let b = mat([[u, 0.0], [0.0, 0.0]]);
            let m3 = anderson_m3(w - potential.mean());
            let inv = m3.try_inverse().expect("M3 is invertible");
            (m3 * a * inv, m3 * b * inv)
        }
        ModelKind::KronigPenney { l, side, potential } => {
            let el = (PI * *l as f64).powi(2);
            let vbar = potential.mean();
            let eta = (vbar / (2.0 * el)).sqrt();
            let k = 1.0 / (2.0 * (2.0 * vbar * el).sqrt());
            let dv = x - vbar;
            let n1 = mat([[-1.0, 1.0], [-1.0, 1.0]]);
            let j = mat(J);
            match side {
                Side::Below => {
                    // R_{−ημ} = 1 − ημJ − ½η²μ² + 𝒪(μ³) times the bracket
                    let s = mat([[0.0, 1.0], [1.0, 0.0]]);
                    let a = j * (-eta) + n1 * (k * dv);
                    let b = Matrix2::identity() * (-0.5 * eta * eta)
                        - s * (vbar / (4.0 * el) + dv / (2.0 * el))
                        - j * n1 * (eta * k * dv);
                    (a, b)
                }
                Side::Above => {
                    let a = mat([[-eta, 0.0], [0.0, eta]]) + n1 * (k * dv);
                    let b = mat([[1.0, 1.0], [1.0, 1.0]]) * (x / (4.0 * el));
                    (a, b)
                }
            }
        }
    }
}

/// Last basis change at the Anderson band edge, for `w_eff = w − E[v]`.
fn anderson_m3(w_eff: f64) -> Matrix2<f64> {
    if w_eff > 0.0 {
        let r = w_eff.sqrt();
        mat([[r, 1.0], [-r, 1.0]])
    } else {
        mat([[-(-w_eff).sqrt(), 0.0], [0.0, 1.0]])
    }
}

fn random_parameter(kind: &ModelKind) -> &Distribution {
    match kind {
        ModelKind::HarmonicChain { masses } => masses,
        ModelKind::AndersonEdge { potential, .. } => potential,
        ModelKind::KronigPenney { potential, .. } => potential,
    }
}

/// Reduced ensemble and its effective coupling.
pub fn build_ensemble(spec: &ModelSpec) -> Result<(Ensemble, f64)> {
    spec.validate()?;
    let atoms = random_parameter(&spec.kind)
        .atoms()
        .map(|(w, x)| {
            let (a, b) = reduced_expansion(&spec.kind, x);
            let (p, q) = match_expansion(&a, &b);
            Atom::new(w, p, q)
        })
        .collect();
    Ok((Ensemble::new(atoms)?, spec.effective_lambda()))
}

/// The full basis change from raw to reduced coordinates (chain and
/// Anderson), `M₃M₂M₁`.
pub fn reduction_basis(spec: &ModelSpec) -> Result<BasisChange> {
    spec.validate()?;
    let m1 = mat([[1.0, 0.0], [1.0, -1.0]]);
    let m2 = mat([[spec.effective_lambda(), 0.0], [0.0, 1.0]]);
    let m3 = match &spec.kind {
        ModelKind::HarmonicChain { masses } => mat([[-masses.mean().sqrt(), 0.0], [0.0, 1.0]]),
        ModelKind::AndersonEdge { w, potential } => anderson_m3(w - potential.mean()),
        ModelKind::KronigPenney { .. } => return Err(Error::RawFormUnavailable),
    };
    BasisChange::new(m3 * m2 * m1, BasisLabel::Custom)
}

/// Unreduced transfer matrix for one value of the random parameter.
pub fn raw_transfer(spec: &ModelSpec, sample: f64) -> Result<Unimodular2x2> {
    let t = match &spec.kind {
        ModelKind::HarmonicChain { .. } => 2.0 - spec.coupling * spec.coupling * sample,
        ModelKind::AndersonEdge { w, .. } => 2.0 + w * spec.coupling - spec.coupling * sample,
        ModelKind::KronigPenney { .. } => return Err(Error::RawFormUnavailable),
    };
    Unimodular2x2::new(t, -1.0, 1.0, 0.0)
}

/// Law of the unreduced transfer matrices.
pub fn raw_law(spec: &ModelSpec) -> Result<TransferLaw> {
    spec.validate()?;
    let dist = random_parameter(&spec.kind);
    let matrices = dist
        .values
        .iter()
        .map(|&x| raw_transfer(spec, x))
        .collect::<Result<Vec<_>>>()?;
    TransferLaw::new(&dist.weights(), matrices)
}

pub const FLAG_ANDERSON_CLOSED_FORM: &str =
    "below-band Anderson edge: the closed form (E[v^2] - w^2)/(8w) disagrees with the generic pipeline; pipeline value reported";

/// Closed-form constants per model, in powers of the effective coupling
/// (`gamma_at(effective_lambda)` gives the prediction).
pub fn reference_prediction(spec: &ModelSpec) -> Result<PredictionReport> {
    spec.validate()?;
    let elliptic = |eta: f64, c: f64, basis: BasisChange, flags: Vec<String>| PredictionReport {
        class: AnomalyClass {
            tag: AnomalyKind::Elliptic,
            eta,
        },
        gamma_leading: c,
        gamma_exponent: 2.0,
        sigma_leading: SigmaLeading::Value(c),
        sigma_exponent: 2.0,
        normal_form: basis,
        flags,
        centered: None,
    };
    let hyperbolic = |eta: f64, basis: BasisChange| PredictionReport {
        class: AnomalyClass {
            tag: AnomalyKind::Hyperbolic,
            eta,
        },
        gamma_leading: eta,
        gamma_exponent: 1.0,
        sigma_leading: SigmaLeading::UpperBoundOnly,
        sigma_exponent: 1.5,
        normal_form: basis,
        flags: vec![],
        centered: None,
    };
    match &spec.kind {
        ModelKind::HarmonicChain { masses } => {
            let em = masses.mean();
            let c = (masses.second_moment() - em * em) / (8.0 * em);
            Ok(elliptic(em.sqrt(), c, reduction_basis(spec)?, vec![]))
        }
        ModelKind::AndersonEdge { w, potential } => {
            let w_eff = w - potential.mean();
            if w_eff > 0.0 {
                Ok(hyperbolic(w_eff.sqrt(), reduction_basis(spec)?))
            } else {
                let c = potential.variance() / (8.0 * -w_eff);
                let closed = (potential.second_moment() - w * w) / (8.0 * w);
                let flag = format!("{FLAG_ANDERSON_CLOSED_FORM} (closed-form value {closed:.6e})");
                Ok(elliptic((-w_eff).sqrt(), c, reduction_basis(spec)?, vec![flag]))
            }
        }
        ModelKind::KronigPenney { l, side, potential } => {
            let el = (PI * *l as f64).powi(2);
            let vbar = potential.mean();
            let eta = (vbar / (2.0 * el)).sqrt();
            match side {
                Side::Below => {
                    let c = potential.variance() / (16.0 * vbar * el);
                    Ok(elliptic(eta, c, BasisChange::identity(), vec![]))
                }
                Side::Above => Ok(hyperbolic(eta, BasisChange::identity())),
            }
        }
    }
}

/// `predict ∘ build_ensemble`.
pub fn pipeline_prediction(spec: &ModelSpec) -> Result<PredictionReport> {
    let (e, _) = build_ensemble(spec)?;
    predict(&e, DEFAULT_ORDER)
}

pub fn model_class(spec: &ModelSpec) -> Result<AnomalyClass> {
    Ok(classify(&build_ensemble(spec)?.0, DEFAULT_TOL))
}
