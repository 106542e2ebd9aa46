//! Anomaly classification, normal forms and the second-order predictions
//! for the Lyapunov exponent `γ_λ` and the CLT variance `σ_λ`.

pub mod galerkin;

use crate::circle::{conjugate_ensemble, BasisChange, BasisLabel};
use crate::error::{Error, Result};
use crate::fourier::FourierDensity;
use crate::sl2::{Ensemble, MomentTable, TracelessGenerator};
use nalgebra::Matrix2;
use serde::{Serialize, Serializer};
use std::fmt;

pub use galerkin::{
    solve_poisson, solve_stationary_density, solve_stationary_density_adaptive, PoissonSolution,
    DEFAULT_ORDER,
};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyKind {
    Elliptic,
    Hyperbolic,
    Centered,
    Parabolic,
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AnomalyKind::Elliptic => "elliptic",
            AnomalyKind::Hyperbolic => "hyperbolic",
            AnomalyKind::Centered => "centered",
            AnomalyKind::Parabolic => "parabolic",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnomalyClass {
    #[serde(rename = "class")]
    pub tag: AnomalyKind,
    pub eta: f64,
}

/// Trichotomy on `E[P]` with the band `tol·(1 + ‖E[P]‖²)`.
pub fn classify(e: &Ensemble, tol: f64) -> AnomalyClass {
    classify_mean(&e.moments().mean_p, tol)
}

pub fn classify_mean(mean: &TracelessGenerator, tol: f64) -> AnomalyClass {
    let norm = mean.norm();
    let band = tol * (1.0 + norm * norm);
    let det = mean.det();
    if norm <= band {
        AnomalyClass {
            tag: AnomalyKind::Centered,
            eta: 0.0,
        }
    } else if det > band {
        AnomalyClass {
            tag: AnomalyKind::Elliptic,
            eta: det.sqrt(),
        }
    } else if det < -band {
        AnomalyClass {
            tag: AnomalyKind::Hyperbolic,
            eta: (-det).sqrt(),
        }
    } else {
        AnomalyClass {
            tag: AnomalyKind::Parabolic,
            eta: 0.0,
        }
    }
}

fn expect_class(e: &Ensemble, want: AnomalyKind) -> Result<AnomalyClass> {
    let class = classify(e, DEFAULT_TOL);
    if class.tag != want {
        return Err(Error::WrongClass {
            expected: want.to_string(),
            found: class.tag.to_string(),
        });
    }
    Ok(class)
}

fn check_residual(got: &TracelessGenerator, want: &TracelessGenerator, scale: f64) -> Result<()> {
    let r = (*got - *want).norm();
    if r > 1e-10 * (1.0 + scale) {
        return Err(Error::InvalidParameter(format!("normal form residual {r:.3e}")));
    }
    Ok(())
}

/// `M` with `M E[P] M⁻¹ = ((0, −η), (η, 0))`.
///
/// For `E[P] = (a, b, c)` with `c > 0`, `M = ((αc/η, −αa/η), (0, α))`,
/// `α = √(η/c)`, which has unit determinant and positive first column. For
/// `c < 0` the orientation is reversed by `diag(1, −1)` first, so `det M = −1`.
pub fn elliptic_normal_form(e: &Ensemble) -> Result<(BasisChange, Ensemble)> {
    let class = expect_class(e, AnomalyKind::Elliptic)?;
    let eta = class.eta;
    let mean = e.moments().mean_p;
    let flip = mean.c < 0.0;
    let (a, c) = (mean.a, if flip { -mean.c } else { mean.c });
    let alpha = (eta / c).sqrt();
    let mut m = Matrix2::new(alpha * c / eta, -alpha * a / eta, 0.0, alpha);
    if flip {
        m *= Matrix2::new(1.0, 0.0, 0.0, -1.0);
    }
    let basis = BasisChange::new(m, BasisLabel::EllipticNormal)?;
    let out = conjugate_ensemble(&basis, e);
    check_residual(&out.moments().mean_p, &TracelessGenerator::rotation(eta), mean.norm())?;
    Ok((basis, out))
}

/// `M` with `M E[P] M⁻¹ = diag(η, −η)`, `det M = 1`.
pub fn hyperbolic_normal_form(e: &Ensemble) -> Result<(BasisChange, Ensemble)> {
    let class = expect_class(e, AnomalyKind::Hyperbolic)?;
    let eta = class.eta;
    let TracelessGenerator { a, b, c } = e.moments().mean_p;
    let larger = |x: [f64; 2], y: [f64; 2]| {
        if x[0].hypot(x[1]) >= y[0].hypot(y[1]) {
            x
        } else {
            y
        }
    };
    // eigenvectors for +η and −η
    let u = larger([b, eta - a], [a + eta, c]);
    let w = larger([b, -(a + eta)], [eta - a, -c]);
    let un = u[0].hypot(u[1]);
    let mut u = [u[0] / un, u[1] / un];
    let det = u[0] * w[1] - u[1] * w[0];
    let mut w = [w[0] / det, w[1] / det];
    // first column of M is (w₂, −u₂): make its first nonzero entry positive
    if w[1] < 0.0 || (w[1] == 0.0 && u[1] > 0.0) {
        u = [-u[0], -u[1]];
        w = [-w[0], -w[1]];
    }
    let m = Matrix2::new(w[1], -w[0], -u[1], u[0]);
    let basis = BasisChange::new(m, BasisLabel::HyperbolicNormal)?;
    let out = conjugate_ensemble(&basis, e);
    check_residual(
        &out.moments().mean_p,
        &TracelessGenerator::new(eta, 0.0, 0.0),
        TracelessGenerator::new(a, b, c).norm(),
    )?;
    Ok((basis, out))
}

/// Either a leading coefficient or only an upper bound on the exponent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaLeading {
    Value(f64),
    UpperBoundOnly,
}

impl SigmaLeading {
    pub fn value(self) -> Option<f64> {
        match self {
            SigmaLeading::Value(v) => Some(v),
            SigmaLeading::UpperBoundOnly => None,
        }
    }
}

impl Serialize for SigmaLeading {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SigmaLeading::Value(v) => s.serialize_f64(*v),
            SigmaLeading::UpperBoundOnly => s.serialize_str("upper-bound-only"),
        }
    }
}

/// Ingredients of a centered prediction.
#[derive(Clone, Debug, Serialize)]
pub struct CenteredDetails {
    pub c_s: f64,
    pub c_s_prime: f64,
    pub galerkin_order: usize,
    #[serde(skip)]
    pub rho: FourierDensity,
    #[serde(skip)]
    pub poisson: FourierDensity,
    #[serde(skip)]
    pub f: FourierDensity,
}

#[derive(Clone, Debug, Serialize)]
pub struct PredictionReport {
    #[serde(flatten)]
    pub class: AnomalyClass,
    pub gamma_leading: f64,
    pub gamma_exponent: f64,
    pub sigma_leading: SigmaLeading,
    pub sigma_exponent: f64,
    pub normal_form: BasisChange,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centered: Option<CenteredDetails>,
}

impl PredictionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Predicted `γ_λ` to leading order.
    pub fn gamma_at(&self, lambda: f64) -> f64 {
        self.gamma_leading * lambda.powf(self.gamma_exponent)
    }
}

pub const FLAG_ELLIPTIC_DEGENERATE: &str =
    "degenerate: variance of the centered normal-form perturbation vanishes, positivity hypothesis violated";
pub const FLAG_HYPERBOLIC_DEGENERATE: &str =
    "degenerate: E[p2^2] = 0 in normal form, two-fixed-point hypothesis violated";

/// `C_e = (4 Var p̃₁ + Var(p̃₂ + p̃₃))/8` in the elliptic normal form.
pub fn predict_elliptic(e: &Ensemble) -> Result<PredictionReport> {
    let class = expect_class(e, AnomalyKind::Elliptic)?;
    let (basis, normal) = elliptic_normal_form(e)?;
    let m = normal.moments();
    let c_e = (4.0 * m.variance(0) + m.variance_of([0.0, 1.0, 1.0])) / 8.0;
    let mut flags = vec![];
    if c_e <= 1e-14 * (1.0 + m.mean_p.norm().powi(2)) {
        flags.push(FLAG_ELLIPTIC_DEGENERATE.to_string());
    }
    Ok(PredictionReport {
        class,
        gamma_leading: c_e,
        gamma_exponent: 2.0,
        sigma_leading: SigmaLeading::Value(c_e),
        sigma_exponent: 2.0,
        normal_form: basis,
        flags,
        centered: None,
    })
}

/// `γ_λ = λη`, `σ_λ = 𝒪(λ^{3/2})`.
pub fn predict_hyperbolic(e: &Ensemble) -> Result<PredictionReport> {
    let class = expect_class(e, AnomalyKind::Hyperbolic)?;
    let (basis, normal) = hyperbolic_normal_form(e)?;
    let m = normal.moments();
    let mut flags = vec![];
    if m.second_moments[1][1] <= 1e-14 * (1.0 + class.eta * class.eta) {
        flags.push(FLAG_HYPERBOLIC_DEGENERATE.to_string());
    }
    Ok(PredictionReport {
        class,
        gamma_leading: class.eta,
        gamma_exponent: 1.0,
        sigma_leading: SigmaLeading::UpperBoundOnly,
        sigma_exponent: 1.5,
        normal_form: basis,
        flags,
        centered: None,
    })
}

/// Diffusion and drift coefficients `D = ½E[p²]`, `b = E[q + ½pp']`.
pub fn assemble_generator(e: &Ensemble) -> Result<(FourierDensity, FourierDensity)> {
    expect_class(e, AnomalyKind::Centered)?;
    assemble_from_moments(e.moments())
}

fn assemble_from_moments(m: &MomentTable) -> Result<(FourierDensity, FourierDensity)> {
    let d = m.p_sq.scale(0.5);
    let min = d.min_on_grid(2048);
    let max = d.sup_norm(2048);
    if !(min > 1e-12 * max.max(1e-300)) {
        return Err(Error::NotElliptic(min));
    }
    Ok((d, m.drift2.clone()))
}

/// Coefficient of `λ²` in `E[g_n | θ_{n−1} = θ]`.
pub fn second_order_gain(m: &MomentTable) -> FourierDensity {
    let s = &m.second_moments;
    let q = m.mean_q0;
    let p23 = s[1][1] + 2.0 * s[1][2] + s[2][2];
    let constant = (4.0 * s[0][0] + p23) / 8.0;
    let cos2 = q.a + 0.25 * (s[2][2] - s[1][1]);
    let sin2 = 0.5 * (q.b + q.c + s[0][1] - s[0][2]);
    let cos4 = -(4.0 * s[0][0] - p23) / 8.0;
    let sin4 = -0.5 * (s[0][1] + s[0][2]);
    FourierDensity::from_cos_sin(&[constant, cos2, cos4], &[0.0, sin2, sin4])
}

/// `C_s = ⟨ρ|f⟩` and `C'_s = ⟨ρ, E[(h − pF')²]⟩` with `𝓛F = f − C_s`.
pub fn predict_centered(e: &Ensemble, order: usize) -> Result<PredictionReport> {
    let class = expect_class(e, AnomalyKind::Centered)?;
    let m = e.moments();
    let (d, b) = assemble_from_moments(m)?;
    let (rho, k) = solve_stationary_density_adaptive(&d, &b, order)?;
    let f = second_order_gain(m);
    let c_s = rho.inner(&f);
    let poisson = solve_poisson(&d, &b, &rho, &f, k)?;
    let fp = poisson.f.derivative();
    let integrand = &(&m.h_sq - &(&m.hp * &fp).scale(2.0)) + &(&m.p_sq * &(&fp * &fp));
    let c_s_prime = rho.inner(&integrand);
    Ok(PredictionReport {
        class,
        gamma_leading: c_s,
        gamma_exponent: 2.0,
        sigma_leading: SigmaLeading::Value(c_s_prime),
        sigma_exponent: 2.0,
        normal_form: BasisChange::identity(),
        flags: vec![],
        centered: Some(CenteredDetails {
            c_s,
            c_s_prime,
            galerkin_order: k,
            rho,
            poisson: poisson.f,
            f,
        }),
    })
}

pub fn predict(e: &Ensemble, order: usize) -> Result<PredictionReport> {
    match classify(e, DEFAULT_TOL).tag {
        AnomalyKind::Elliptic => predict_elliptic(e),
        AnomalyKind::Hyperbolic => predict_hyperbolic(e),
        AnomalyKind::Centered => predict_centered(e, order),
        AnomalyKind::Parabolic => Err(Error::Parabolic),
    }
}

/// Leading elliptic correlation sum `−(F(θ₀) − ν(F))/(λη)` with `F' = f − ν(f)`
/// and `ν` approximated by the uniform measure.
pub fn elliptic_correlation_prediction(f: &FourierDensity, eta: f64, lambda: f64, theta0: f64) -> f64 {
    let big_f = f.antiderivative();
    -(big_f.eval(theta0) - big_f.mean()) / (lambda * eta)
}
