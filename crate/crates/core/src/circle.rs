//! Projective dynamics on the half circle `[0, π)`.

use crate::error::{Error, Result};
use crate::sl2::{Ensemble, TracelessGenerator, Unimodular2x2};
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Point of the projective line, `0 ≤ θ < π`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    /// Reduces an arbitrary finite real modulo π.
    pub fn new(theta: f64) -> Self {
        Angle(fold(theta.rem_euclid(PI)))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `e_θ = (cos θ, sin θ)`
    pub fn unit_vector(self) -> [f64; 2] {
        let (s, c) = self.0.sin_cos();
        [c, s]
    }

    /// Signed displacement `other − self` taken in `[−π/2, π/2)`.
    pub fn delta_to(self, other: Angle) -> f64 {
        let d = other.0 - self.0;
        if d >= PI / 2.0 {
            d - PI
        } else if d < -PI / 2.0 {
            d + PI
        } else {
            d
        }
    }

    /// Distance on the circle of length π.
    pub fn distance(self, other: Angle) -> f64 {
        self.delta_to(other).abs()
    }

    pub fn shifted(self, by: f64) -> Angle {
        Angle(fold(self.0 + by))
    }
}

/// Single conditional fold of a value in `[−π, 2π)` into `[0, π)`.
#[inline]
fn fold(t: f64) -> f64 {
    let t = if t < 0.0 {
        t + PI
    } else if t >= PI {
        t - PI
    } else {
        t
    };
    // t + π can round up to exactly π for tiny negative t
    if t >= PI {
        0.0
    } else {
        t
    }
}

pub fn angle_of_vector(v: [f64; 2]) -> Result<Angle> {
    if v[0] == 0.0 && v[1] == 0.0 || !(v[0].is_finite() && v[1].is_finite()) {
        return Err(Error::DegenerateDirection);
    }
    Ok(Angle(fold(v[1].atan2(v[0]))))
}

pub fn projective_act(t: &Unimodular2x2, theta: Angle) -> Angle {
    let w = t.apply(theta.unit_vector());
    Angle(fold(w[1].atan2(w[0])))
}

/// `½ log ‖T e_θ‖²`
pub fn log_norm_gain(t: &Unimodular2x2, theta: Angle) -> f64 {
    let w = t.apply(theta.unit_vector());
    0.5 * (w[0] * w[0] + w[1] * w[1]).ln()
}

/// `p(θ) = −a sin 2θ − b sin²θ + c cos²θ`
pub fn p_function(g: &TracelessGenerator, theta: Angle) -> f64 {
    let (s, c) = theta.value().sin_cos();
    -2.0 * g.a * s * c - g.b * s * s + g.c * c * c
}

/// `λ E[p](θ) + λ² E[q + ½ p p'](θ)`, the mean one-step displacement to
/// second order.
pub fn drift_expansion(e: &Ensemble, lambda: f64, theta: Angle) -> f64 {
    let m = e.moments();
    lambda * m.mean_angular.eval(theta.value()) + lambda * lambda * m.drift2.eval(theta.value())
}

/// `t_λ(θ̂) = arctan(λ^{−1/2} tan θ̂)` on the branch fixing 0 and π/2.
pub fn zoom(lambda: f64, theta_hat: Angle) -> Result<Angle> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("zoom needs λ > 0, got {lambda}")));
    }
    let (s, c) = theta_hat.value().sin_cos();
    Ok(Angle(fold((s / lambda.sqrt()).atan2(c))))
}

pub fn unzoom(lambda: f64, theta: Angle) -> Result<Angle> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("unzoom needs λ > 0, got {lambda}")));
    }
    let (s, c) = theta.value().sin_cos();
    Ok(Angle(fold((s * lambda.sqrt()).atan2(c))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisLabel {
    EllipticNormal,
    HyperbolicNormal,
    Custom,
}

/// Invertible real 2×2 matrix used to conjugate an ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisChange {
    m: Matrix2<f64>,
    inverse: Matrix2<f64>,
    label: BasisLabel,
}

impl BasisChange {
    pub fn new(m: Matrix2<f64>, label: BasisLabel) -> Result<Self> {
        let det = m.determinant();
        if !(det.abs() > 1e-12) || !det.is_finite() {
            return Err(Error::SingularBasisChange(det));
        }
        let inverse = Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det;
        Ok(Self { m, inverse, label })
    }

    pub fn identity() -> Self {
        Self::new(Matrix2::identity(), BasisLabel::Custom).expect("identity is invertible")
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.m
    }

    pub fn inverse(&self) -> &Matrix2<f64> {
        &self.inverse
    }

    pub fn label(&self) -> BasisLabel {
        self.label
    }

    pub fn det(&self) -> f64 {
        self.m.determinant()
    }

    /// `N · self` (apply `self` first).
    pub fn then(&self, n: &Matrix2<f64>, label: BasisLabel) -> Result<Self> {
        Self::new(n * self.m, label)
    }

    pub fn conjugate(&self, g: &TracelessGenerator) -> TracelessGenerator {
        g.conjugate(&self.m, &self.inverse)
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        [[self.m[(0, 0)], self.m[(0, 1)]], [self.m[(1, 0)], self.m[(1, 1)]]]
    }
}

impl Serialize for BasisChange {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("BasisChange", 2)?;
        st.serialize_field("matrix", &self.rows())?;
        st.serialize_field("label", &self.label)?;
        st.end()
    }
}

/// `P ↦ M P M⁻¹` and `Q^{(j)} ↦ M Q^{(j)} M⁻¹` on every atom.
pub fn conjugate_ensemble(m: &BasisChange, e: &Ensemble) -> Ensemble {
    e.map_generators(|g| m.conjugate(g))
}
