//! π-periodic real functions as truncated Fourier series in `e^{2ikθ}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

/// `f(θ) = Σ_{k=-K..K} c_k e^{2ikθ}`, stored as `c_{-K}, …, c_K`.
///
/// Real functions satisfy `c_{-k} = conj(c_k)`; the constructors here keep
/// that symmetry and [`FourierDensity::symmetrize`] restores it after a
/// numerical solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierDensity {
    coeffs: Vec<Complex64>,
}

impl FourierDensity {
    pub fn zeros(order: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * order + 1],
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            coeffs: vec![Complex64::new(value, 0.0)],
        }
    }

    /// Coefficients `c_{-K..=K}`; the length must be odd.
    pub fn from_coeffs(coeffs: Vec<Complex64>) -> Self {
        assert!(coeffs.len() % 2 == 1, "coefficient vector must have odd length");
        Self { coeffs }
    }

    /// `α cos(2kθ) + β sin(2kθ)`.
    pub fn harmonic(k: usize, cos_coef: f64, sin_coef: f64) -> Self {
        if k == 0 {
            return Self::constant(cos_coef);
        }
        let mut out = Self::zeros(k);
        // cos = (z + z̄)/2, sin = (z − z̄)/(2i)
        out.set(k as i64, Complex64::new(0.5 * cos_coef, -0.5 * sin_coef));
        out.set(-(k as i64), Complex64::new(0.5 * cos_coef, 0.5 * sin_coef));
        out
    }

    /// Real trig polynomial from `a_0 + Σ_k (a_k cos 2kθ + b_k sin 2kθ)`.
    pub fn from_cos_sin(cos: &[f64], sin: &[f64]) -> Self {
        let order = cos.len().max(sin.len()).saturating_sub(1);
        let mut out = Self::zeros(order);
        for k in 0..=order {
            let a = cos.get(k).copied().unwrap_or(0.0);
            let b = sin.get(k).copied().unwrap_or(0.0);
            out = &out + &Self::harmonic(k, a, b);
        }
        out
    }

    pub fn order(&self) -> usize {
        (self.coeffs.len() - 1) / 2
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: i64) -> Complex64 {
        let order = self.order() as i64;
        if k.abs() > order {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + order) as usize]
        }
    }

    pub fn set(&mut self, k: i64, value: Complex64) {
        let order = self.order() as i64;
        assert!(k.abs() <= order, "harmonic {k} outside order {order}");
        self.coeffs[(k + order) as usize] = value;
    }

    /// Same function with room for harmonics up to `order` (or truncated to it).
    pub fn with_order(&self, order: usize) -> Self {
        let mut out = Self::zeros(order);
        let o = order as i64;
        for k in -o..=o {
            out.set(k, self.coeff(k));
        }
        out
    }

    pub fn eval_complex(&self, theta: f64) -> Complex64 {
        let order = self.order() as i64;
        let z = Complex64::from_polar(1.0, 2.0 * theta);
        let zinv = z.conj();
        let mut acc = self.coeff(0);
        let mut zp = Complex64::new(1.0, 0.0);
        let mut zm = Complex64::new(1.0, 0.0);
        for k in 1..=order {
            zp *= z;
            zm *= zinv;
            acc += self.coeff(k) * zp + self.coeff(-k) * zm;
        }
        acc
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.eval_complex(theta).re
    }

    /// Evaluation from `z = e^{2iθ}` given as `(cos 2θ, sin 2θ)`; avoids
    /// trigonometric calls in the Monte Carlo loop.
    #[inline]
    pub fn eval_from_double_angle(&self, cos2: f64, sin2: f64) -> f64 {
        let order = self.order() as i64;
        let z = Complex64::new(cos2, sin2);
        let mut acc = self.coeff(0).re;
        let mut zp = Complex64::new(1.0, 0.0);
        for k in 1..=order {
            zp *= z;
            // c_k z^k + c_{-k} z̄^k, real part
            acc += (self.coeff(k) * zp).re + (self.coeff(-k) * zp.conj()).re;
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        let order = self.order() as i64;
        let mut out = Self::zeros(order as usize);
        for k in -order..=order {
            out.set(k, self.coeff(k) * Complex64::new(0.0, 2.0 * k as f64));
        }
        out
    }

    /// Antiderivative with zero mean; the constant term of `self` is ignored.
    pub fn antiderivative(&self) -> Self {
        let order = self.order() as i64;
        let mut out = Self::zeros(order as usize);
        for k in -order..=order {
            if k != 0 {
                out.set(k, self.coeff(k) / Complex64::new(0.0, 2.0 * k as f64));
            }
        }
        out
    }

    /// Exact product (orders add).
    pub fn product(&self, other: &Self) -> Self {
        let (p, q) = (self.order() as i64, other.order() as i64);
        let mut out = Self::zeros((p + q) as usize);
        for j in -p..=p {
            let cj = self.coeff(j);
            if cj == Complex64::new(0.0, 0.0) {
                continue;
            }
            for k in -q..=q {
                let idx = (j + k + p + q) as usize;
                out.coeffs[idx] += cj * other.coeff(k);
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.coeff(0).re
    }

    /// `∫_0^π f(θ) dθ`.
    pub fn integral(&self) -> f64 {
        PI * self.coeff(0).re
    }

    /// `⟨f|g⟩ = ∫_0^π f g dθ` for real `f`, `g`.
    pub fn inner(&self, other: &Self) -> f64 {
        let order = self.order().min(other.order()) as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in -order..=order {
            acc += self.coeff(k) * other.coeff(-k);
        }
        PI * acc.re
    }

    /// Enforce `c_{-k} = conj(c_k)`.
    pub fn symmetrize(&mut self) {
        let order = self.order() as i64;
        for k in 0..=order {
            let avg = 0.5 * (self.coeff(k) + self.coeff(-k).conj());
            self.set(k, avg);
            self.set(-k, avg.conj());
        }
    }

    /// Uniform grid `θ_j = jπ/n`, `j = 0..n`.
    pub fn grid(n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |j| j as f64 * PI / n as f64)
    }

    pub fn sup_norm(&self, grid_points: usize) -> f64 {
        Self::grid(grid_points)
            .map(|t| self.eval(t).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_on_grid(&self, grid_points: usize) -> f64 {
        Self::grid(grid_points)
            .map(|t| self.eval(t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_imag_on_grid(&self, grid_points: usize) -> f64 {
        Self::grid(grid_points)
            .map(|t| self.eval_complex(t).im.abs())
            .fold(0.0, f64::max)
    }

    /// Largest modulus among coefficients with `k != 0`.
    pub fn max_nonconstant_coeff(&self) -> f64 {
        let order = self.order() as i64;
        (-order..=order)
            .filter(|&k| k != 0)
            .map(|k| self.coeff(k).norm())
            .fold(0.0, f64::max)
    }
}

impl Add for &FourierDensity {
    type Output = FourierDensity;

    fn add(self, rhs: Self) -> FourierDensity {
        let order = self.order().max(rhs.order());
        let o = order as i64;
        let mut out = FourierDensity::zeros(order);
        for k in -o..=o {
            out.set(k, self.coeff(k) + rhs.coeff(k));
        }
        out
    }
}

impl Sub for &FourierDensity {
    type Output = FourierDensity;

    fn sub(self, rhs: Self) -> FourierDensity {
        self + &rhs.scale(-1.0)
    }
}

impl Mul for &FourierDensity {
    type Output = FourierDensity;

    fn mul(self, rhs: Self) -> FourierDensity {
        self.product(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn harmonic_evaluates_cos_and_sin() {
        let f = FourierDensity::harmonic(2, 0.3, -1.2);
        for t in [0.0f64, 0.4, 1.3, 2.9] {
            let exact = 0.3 * (4.0 * t).cos() - 1.2 * (4.0 * t).sin();
            assert_abs_diff_eq!(f.eval(t), exact, epsilon = 1e-14);
            assert_abs_diff_eq!(f.eval_complex(t).im, 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(
                f.eval_from_double_angle((2.0 * t).cos(), (2.0 * t).sin()),
                exact,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn product_and_derivative_match_pointwise() {
        let f = FourierDensity::from_cos_sin(&[0.5, 1.0, 0.25], &[0.0, -0.5]);
        let g = FourierDensity::from_cos_sin(&[1.0, 0.0, 0.0, 0.1], &[0.0, 0.3]);
        let fg = &f * &g;
        let df = f.derivative();
        for t in [0.1, 0.7, 2.2] {
            assert_abs_diff_eq!(fg.eval(t), f.eval(t) * g.eval(t), epsilon = 1e-13);
            let h = 1e-6;
            let fd = (f.eval(t + h) - f.eval(t - h)) / (2.0 * h);
            assert_abs_diff_eq!(df.eval(t), fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn antiderivative_inverts_derivative_up_to_mean() {
        let f = FourierDensity::from_cos_sin(&[2.0, 1.0, 0.25], &[0.0, -0.5, 0.7]);
        let back = f.derivative().antiderivative();
        for t in [0.0, 0.9, 2.5] {
            assert_abs_diff_eq!(back.eval(t), f.eval(t) - 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn inner_product_is_integral() {
        let f = FourierDensity::from_cos_sin(&[1.0, 2.0], &[0.0, 1.0]);
        // ∫ (1 + 2cos2θ + sin2θ)^2 = π(1 + 2 + 1/2)
        assert_abs_diff_eq!(f.inner(&f), PI * 3.5, epsilon = 1e-13);
        assert_abs_diff_eq!(f.integral(), PI, epsilon = 1e-15);
    }
}
