//! sl(2,ℝ) generators, SL(2,ℝ) transfer matrices and finite-support ensembles.

use crate::error::{Error, Result};
use crate::fourier::FourierDensity;
use nalgebra::Matrix2;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

/// Traceless matrix `((a, b), (c, -a))`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct TracelessGenerator {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl From<[f64; 3]> for TracelessGenerator {
    fn from([a, b, c]: [f64; 3]) -> Self {
        Self { a, b, c }
    }
}

impl From<TracelessGenerator> for [f64; 3] {
    fn from(g: TracelessGenerator) -> Self {
        [g.a, g.b, g.c]
    }
}

impl TracelessGenerator {
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0);

    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// `η · ((0, -1), (1, 0))`, the generator of a counter-clockwise rotation.
    pub const fn rotation(eta: f64) -> Self {
        Self::new(0.0, -eta, eta)
    }

    pub fn det(&self) -> f64 {
        -self.a * self.a - self.b * self.c
    }

    pub fn entries(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (2.0 * self.a * self.a + self.b * self.b + self.c * self.c).sqrt()
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.a, self.b, self.c, -self.a)
    }

    /// Traceless part of an arbitrary 2×2 matrix.
    pub fn traceless_part(m: &Matrix2<f64>) -> Self {
        Self::new(0.5 * (m[(0, 0)] - m[(1, 1)]), m[(0, 1)], m[(1, 0)])
    }

    /// `M G M⁻¹` (tracelessness is preserved exactly by taking the traceless
    /// part of the product).
    pub fn conjugate(&self, m: &Matrix2<f64>, m_inv: &Matrix2<f64>) -> Self {
        Self::traceless_part(&(m * self.to_matrix() * m_inv))
    }

    /// Angular velocity field `p(θ) = -a sin 2θ - b sin²θ + c cos²θ` as a
    /// trig series.
    pub fn angular_series(&self) -> FourierDensity {
        &FourierDensity::constant(0.5 * (self.c - self.b))
            + &FourierDensity::harmonic(1, 0.5 * (self.c + self.b), -self.a)
    }

    /// First-order gain `h(θ) = e_θ* G e_θ = a cos 2θ + ½(b + c) sin 2θ`.
    pub fn gain_series(&self) -> FourierDensity {
        FourierDensity::harmonic(1, self.a, 0.5 * (self.b + self.c))
    }
}

impl Add for TracelessGenerator {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }
}

impl Sub for TracelessGenerator {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.a - o.a, self.b - o.b, self.c - o.c)
    }
}

impl Neg for TracelessGenerator {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.a, -self.b, -self.c)
    }
}

impl Mul<f64> for TracelessGenerator {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s)
    }
}

/// Determinant tolerance relative to the squared entry scale; a product of
/// entries of size `s` cannot be resolved better than `s²·ε`.
fn det_tolerance(max_abs: f64) -> f64 {
    1e-12 * max_abs.powi(2).max(1.0)
}

/// Element of SL(2,ℝ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unimodular2x2 {
    pub t11: f64,
    pub t12: f64,
    pub t21: f64,
    pub t22: f64,
}

impl Unimodular2x2 {
    pub const IDENTITY: Self = Self {
        t11: 1.0,
        t12: 0.0,
        t21: 0.0,
        t22: 1.0,
    };

    pub fn new(t11: f64, t12: f64, t21: f64, t22: f64) -> Result<Self> {
        let m = Self { t11, t12, t21, t22 };
        let det = m.det();
        if !det.is_finite() || (det - 1.0).abs() > det_tolerance(m.max_abs()) {
            return Err(Error::NotUnimodular(det));
        }
        Ok(m)
    }

    pub(crate) const fn new_unchecked(t11: f64, t12: f64, t21: f64, t22: f64) -> Self {
        Self { t11, t12, t21, t22 }
    }

    pub fn from_matrix(m: &Matrix2<f64>) -> Result<Self> {
        Self::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new_unchecked(c, -s, s, c)
    }

    pub fn det(&self) -> f64 {
        self.t11 * self.t22 - self.t12 * self.t21
    }

    pub fn max_abs(&self) -> f64 {
        self.t11
            .abs()
            .max(self.t12.abs())
            .max(self.t21.abs())
            .max(self.t22.abs())
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.t11, self.t12, self.t21, self.t22)
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.t11, self.t12, self.t21, self.t22]
    }

    #[inline]
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.t11 * v[0] + self.t12 * v[1],
            self.t21 * v[0] + self.t22 * v[1],
        ]
    }

    pub fn inverse(&self) -> Self {
        Self::new_unchecked(self.t22, -self.t12, -self.t21, self.t11)
    }
}

impl Mul for Unimodular2x2 {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        let out = Self::new_unchecked(
            self.t11 * o.t11 + self.t12 * o.t21,
            self.t11 * o.t12 + self.t12 * o.t22,
            self.t21 * o.t11 + self.t22 * o.t21,
            self.t21 * o.t12 + self.t22 * o.t22,
        );
        debug_assert!(
            (out.det() - 1.0).abs() <= det_tolerance(self.max_abs() * o.max_abs()),
            "product left SL(2): det = {}",
            out.det()
        );
        out
    }
}

/// `exp(λG) = cosh(λd)·1 + sinh(λd)/d·G` with `d = √(-det G)`, real or
/// imaginary.
pub fn exponential(lambda: f64, g: &TracelessGenerator) -> Unimodular2x2 {
    // x2 = (λd)², negative on the elliptic branch.
    let x2 = -lambda * lambda * g.det();
    let (c, s) = if x2.abs() < 1e-8 {
        // |λd| < 1e-4: series avoids the 0/0 in sinh(λd)/d.
        (
            1.0 + x2 / 2.0 + x2 * x2 / 24.0,
            lambda * (1.0 + x2 / 6.0 + x2 * x2 / 120.0),
        )
    } else if x2 > 0.0 {
        let x = x2.sqrt();
        (x.cosh(), lambda * x.sinh() / x)
    } else {
        let x = (-x2).sqrt();
        (x.cos(), lambda * x.sin() / x)
    };
    Unimodular2x2::new_unchecked(c + s * g.a, s * g.b, s * g.c, c - s * g.a)
}

/// Second-order part `Q(λ) = Σ_j λ^j Q^{(j)}` of the generator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QPolynomial {
    coefficients: Vec<TracelessGenerator>,
}

impl QPolynomial {
    pub const MAX_DEGREE: usize = 2;

    pub fn new(coefficients: Vec<TracelessGenerator>) -> Result<Self> {
        if coefficients.len() > Self::MAX_DEGREE + 1 {
            return Err(Error::InvalidEnsemble(format!(
                "Q polynomial of degree {} exceeds the maximum {}",
                coefficients.len() - 1,
                Self::MAX_DEGREE
            )));
        }
        Ok(Self { coefficients })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(q: TracelessGenerator) -> Self {
        Self {
            coefficients: vec![q],
        }
    }

    pub fn coefficients(&self) -> &[TracelessGenerator] {
        &self.coefficients
    }

    /// `Q^{(0)}`, the only part entering second-order predictions.
    pub fn leading(&self) -> TracelessGenerator {
        self.coefficients.first().copied().unwrap_or_default()
    }

    pub fn eval(&self, lambda: f64) -> TracelessGenerator {
        self.coefficients
            .iter()
            .rev()
            .fold(TracelessGenerator::ZERO, |acc, &q| acc * lambda + q)
    }

    pub fn map(&self, f: impl Fn(&TracelessGenerator) -> TracelessGenerator) -> Self {
        Self {
            coefficients: self.coefficients.iter().map(f).collect(),
        }
    }
}

/// `exp(λP + λ²Q(λ))`, generator assembled first.
pub fn build_transfer(lambda: f64, p: &TracelessGenerator, q: &QPolynomial) -> Unimodular2x2 {
    let generator = *p * lambda + q.eval(lambda) * (lambda * lambda);
    exponential(1.0, &generator)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub weight: f64,
    pub p: TracelessGenerator,
    #[serde(default)]
    pub q: QPolynomial,
}

impl Atom {
    pub fn new(weight: f64, p: TracelessGenerator, q: QPolynomial) -> Self {
        Self { weight, p, q }
    }
}

/// Expectations of an ensemble needed by the predictors.
///
/// Trig series are in the variable `θ` and carry harmonics 0, 2 and 4.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    pub mean_p: TracelessGenerator,
    pub det_mean_p: f64,
    /// `E[p_i p_j]` for `(p_1, p_2, p_3) = (a, b, c)`.
    pub second_moments: [[f64; 3]; 3],
    pub covariance: [[f64; 3]; 3],
    pub mean_q0: TracelessGenerator,
    /// `E[p(θ)²]`
    pub p_sq: FourierDensity,
    /// `E[h(θ)²]`
    pub h_sq: FourierDensity,
    /// `E[h(θ) p(θ)]`
    pub hp: FourierDensity,
    /// `E[q(θ) + ½ p(θ) p'(θ)]`
    pub drift2: FourierDensity,
    /// `E[p(θ)]`
    pub mean_angular: FourierDensity,
}

impl MomentTable {
    pub fn variance(&self, i: usize) -> f64 {
        self.covariance[i][i]
    }

    /// `Var(Σ_i w_i p_i)`.
    pub fn variance_of(&self, w: [f64; 3]) -> f64 {
        let mut v = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                v += w[i] * w[j] * self.covariance[i][j];
            }
        }
        v
    }
}

/// Finite-support distribution over `(P, Q)` pairs.
#[derive(Debug, Serialize, Deserialize)]
#[serde(try_from = "EnsembleRepr", into = "EnsembleRepr")]
pub struct Ensemble {
    atoms: Vec<Atom>,
    cumulative: Vec<f64>,
    moments: OnceLock<MomentTable>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleRepr {
    atoms: Vec<Atom>,
}

impl TryFrom<EnsembleRepr> for Ensemble {
    type Error = Error;
    fn try_from(r: EnsembleRepr) -> Result<Self> {
        Ensemble::new(r.atoms)
    }
}

impl From<Ensemble> for EnsembleRepr {
    fn from(e: Ensemble) -> Self {
        EnsembleRepr { atoms: e.atoms }
    }
}

impl Clone for Ensemble {
    fn clone(&self) -> Self {
        Self {
            atoms: self.atoms.clone(),
            cumulative: self.cumulative.clone(),
            moments: self.moments.clone(),
        }
    }
}

impl PartialEq for Ensemble {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms
    }
}

impl Ensemble {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidEnsemble("no atoms".into()));
        }
        for (i, atom) in atoms.iter().enumerate() {
            if !(atom.weight >= 0.0) || !atom.weight.is_finite() {
                return Err(Error::InvalidEnsemble(format!(
                    "atom {i} has invalid weight {}",
                    atom.weight
                )));
            }
            if atom.q.coefficients().len() > QPolynomial::MAX_DEGREE + 1 {
                return Err(Error::InvalidEnsemble(format!("atom {i}: Q degree too large")));
            }
            let finite = atom.p.entries().iter().all(|x| x.is_finite())
                && atom
                    .q
                    .coefficients()
                    .iter()
                    .all(|g| g.entries().iter().all(|x| x.is_finite()));
            if !finite {
                return Err(Error::InvalidEnsemble(format!("atom {i} has non-finite entries")));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidEnsemble(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|a| {
                acc += a.weight;
                acc
            })
            .collect();
        Ok(Self {
            atoms,
            cumulative,
            moments: OnceLock::new(),
        })
    }

    /// Equal weights.
    pub fn uniform(pairs: Vec<(TracelessGenerator, QPolynomial)>) -> Result<Self> {
        let w = 1.0 / pairs.len().max(1) as f64;
        Self::new(pairs.into_iter().map(|(p, q)| Atom::new(w, p, q)).collect())
    }

    pub fn single(p: TracelessGenerator, q: QPolynomial) -> Self {
        Self::new(vec![Atom::new(1.0, p, q)]).expect("single atom is a valid ensemble")
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Same weights, generators mapped.
    pub fn map_generators(
        &self,
        f: impl Fn(&TracelessGenerator) -> TracelessGenerator,
    ) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom::new(a.weight, f(&a.p), a.q.map(&f)))
            .collect();
        Self::new(atoms).expect("weights unchanged")
    }

    /// Index of an atom drawn with probability `weight_i`, from exactly one
    /// uniform draw.
    #[inline]
    pub fn sample_index(&self, u: f64) -> usize {
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.atoms.len() - 1)
    }

    pub fn moments(&self) -> &MomentTable {
        self.moments.get_or_init(|| compute_moments(self))
    }
}

/// Draw one atom; consumes exactly one `u64` from `rng`.
pub fn sample_atom<'a, R: RngCore>(e: &'a Ensemble, rng: &mut R) -> &'a Atom {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    &e.atoms[e.sample_index(u)]
}

pub fn ensemble_moments(e: &Ensemble) -> &MomentTable {
    e.moments()
}

fn compute_moments(e: &Ensemble) -> MomentTable {
    let mut mean = [0.0; 3];
    let mut second = [[0.0; 3]; 3];
    let mut mean_q0 = TracelessGenerator::ZERO;
    let mut p_sq = FourierDensity::zeros(2);
    let mut h_sq = FourierDensity::zeros(2);
    let mut hp = FourierDensity::zeros(2);
    let mut drift2 = FourierDensity::zeros(2);
    let mut mean_angular = FourierDensity::zeros(1);
    for atom in &e.atoms {
        let w = atom.weight;
        let p = atom.p.entries();
        for i in 0..3 {
            mean[i] += w * p[i];
            for j in 0..3 {
                second[i][j] += w * p[i] * p[j];
            }
        }
        let q0 = atom.q.leading();
        mean_q0 = mean_q0 + q0 * w;

        let ps = atom.p.angular_series();
        let hs = atom.p.gain_series();
        let pp = &ps * &ps;
        p_sq = &p_sq + &pp.scale(w);
        h_sq = &h_sq + &(&hs * &hs).scale(w);
        hp = &hp + &(&hs * &ps).scale(w);
        let d = &q0.angular_series() + &(&ps * &ps.derivative()).scale(0.5);
        drift2 = &drift2 + &d.scale(w);
        mean_angular = &mean_angular + &ps.scale(w);
    }
    let mut covariance = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            covariance[i][j] = second[i][j] - mean[i] * mean[j];
        }
    }
    let mean_p = TracelessGenerator::from(mean);
    MomentTable {
        mean_p,
        det_mean_p: mean_p.det(),
        second_moments: second,
        covariance,
        mean_q0,
        p_sq,
        h_sq,
        hp,
        drift2,
        mean_angular,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ReplicaRng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn assert_matrix(m: &Unimodular2x2, expected: [f64; 4], tol: f64) {
        for (x, y) in m.entries().iter().zip(expected) {
            assert_abs_diff_eq!(*x, y, epsilon = tol);
        }
    }

    #[test]
    fn exponential_of_rotation_generator() {
        let m = exponential(0.3, &TracelessGenerator::rotation(1.0));
        let (s, c) = 0.3f64.sin_cos();
        assert_matrix(&m, [c, -s, s, c], 1e-15);
    }

    #[test]
    fn exponential_of_diagonal_generator() {
        let m = exponential(0.1, &TracelessGenerator::new(1.0, 0.0, 0.0));
        assert_matrix(&m, [0.1f64.exp(), 0.0, 0.0, (-0.1f64).exp()], 1e-15);
    }

    #[test]
    fn exponential_of_nilpotent_generator() {
        let m = exponential(0.2, &TracelessGenerator::new(0.0, 1.0, 0.0));
        assert_matrix(&m, [1.0, 0.2, 0.0, 1.0], 0.0);
    }

    #[test]
    fn exponential_near_parabolic_is_continuous() {
        // det slightly positive / negative around the series switch
        for eps in [1e-20, 1e-12, 1e-9, 1e-8, 1.1e-8, 1e-7] {
            for sign in [-1.0, 1.0] {
                let g = TracelessGenerator::new(0.0, 1.0, sign * eps);
                let m = exponential(1.0, &g);
                assert_abs_diff_eq!(m.t12, 1.0, epsilon = 1e-7);
                assert_abs_diff_eq!(m.det(), 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn build_transfer_examples() {
        let q0 = QPolynomial::zero();
        assert_eq!(
            build_transfer(0.0, &TracelessGenerator::new(3.0, 1.0, 2.0), &q0),
            Unimodular2x2::IDENTITY
        );
        let m = build_transfer(0.1, &TracelessGenerator::new(1.0, 0.0, 0.0), &q0);
        assert_matrix(&m, [0.1f64.exp(), 0.0, 0.0, (-0.1f64).exp()], 1e-15);
        let shear = QPolynomial::constant(TracelessGenerator::new(0.0, 1.0, 0.0));
        let m = build_transfer(0.1, &TracelessGenerator::ZERO, &shear);
        assert_matrix(&m, [1.0, 0.01, 0.0, 1.0], 1e-16);
    }

    #[test]
    fn q_polynomial_degree_is_bounded() {
        let g = TracelessGenerator::ZERO;
        assert!(QPolynomial::new(vec![g; 3]).is_ok());
        assert!(QPolynomial::new(vec![g; 4]).is_err());
        let q = QPolynomial::new(vec![
            TracelessGenerator::new(1.0, 0.0, 0.0),
            TracelessGenerator::new(0.0, 1.0, 0.0),
            TracelessGenerator::new(0.0, 0.0, 1.0),
        ])
        .unwrap();
        assert_eq!(q.eval(2.0), TracelessGenerator::new(1.0, 2.0, 4.0));
    }

    #[test]
    fn ensemble_validation() {
        let p = TracelessGenerator::ZERO;
        let q = QPolynomial::zero();
        assert!(Ensemble::new(vec![]).is_err());
        assert!(Ensemble::new(vec![Atom::new(0.5, p, q.clone())]).is_err());
        assert!(Ensemble::new(vec![Atom::new(-0.5, p, q.clone()), Atom::new(1.5, p, q.clone())]).is_err());
        let thirds = vec![Atom::new(1.0 / 3.0, p, q.clone()); 3];
        assert!(Ensemble::new(thirds).is_ok());
    }

    #[test]
    fn moments_single_atom() {
        let e = Ensemble::single(TracelessGenerator::new(1.0, 0.0, 0.0), QPolynomial::zero());
        let m = e.moments();
        assert_eq!(m.mean_p, TracelessGenerator::new(1.0, 0.0, 0.0));
        assert_eq!(m.det_mean_p, -1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.covariance[i][j], 0.0);
            }
        }
    }

    #[test]
    fn moments_symmetric_pair() {
        let d = TracelessGenerator::new(1.0, 0.0, 0.0);
        let e = Ensemble::uniform(vec![(d, QPolynomial::zero()), (-d, QPolynomial::zero())]).unwrap();
        let m = e.moments();
        assert_eq!(m.mean_p, TracelessGenerator::ZERO);
        assert_eq!(m.variance(0), 1.0);
    }

    #[test]
    fn moments_of_vw_ensemble() {
        // p(θ) = -v sin 2θ - w, averaged by hand: E[p²] = sin²2θ + 1,
        // E[p p'] = sin 4θ, E[h²] = cos²2θ, E[hp] = -½ sin 4θ.
        let mut pairs = vec![];
        for v in [-1.0, 1.0] {
            for w in [-1.0, 1.0] {
                pairs.push((TracelessGenerator::new(v, w, -w), QPolynomial::zero()));
            }
        }
        let e = Ensemble::uniform(pairs).unwrap();
        let m = e.moments();
        for t in [0.0f64, 0.3, 1.1, 2.7] {
            let s2 = (2.0 * t).sin();
            let c2 = (2.0 * t).cos();
            assert_abs_diff_eq!(m.p_sq.eval(t), s2 * s2 + 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(m.drift2.eval(t), 0.5 * (4.0 * t).sin(), epsilon = 1e-14);
            assert_abs_diff_eq!(m.h_sq.eval(t), c2 * c2, epsilon = 1e-14);
            assert_abs_diff_eq!(m.hp.eval(t), -0.5 * (4.0 * t).sin(), epsilon = 1e-14);
            assert_abs_diff_eq!(m.mean_angular.eval(t), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn sampling_follows_weights() {
        let p = TracelessGenerator::new(1.0, 0.0, 0.0);
        let q = QPolynomial::zero();
        let single = Ensemble::single(p, q.clone());
        let mut rng = ReplicaRng::new(11, 0);
        for _ in 0..100 {
            assert_eq!(sample_atom(&single, &mut rng).p, p);
        }
        let degenerate = Ensemble::new(vec![Atom::new(1.0, p, q.clone()), Atom::new(0.0, -p, q.clone())]).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_atom(&degenerate, &mut rng).p, p);
        }
        let fair = Ensemble::uniform(vec![(p, q.clone()), (-p, q)]).unwrap();
        let n = 100_000;
        let hits = (0..n).filter(|_| sample_atom(&fair, &mut rng).p == p).count();
        let freq = hits as f64 / n as f64;
        assert!((0.49..=0.51).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn sampling_consumes_one_draw() {
        let p = TracelessGenerator::new(1.0, 0.0, 0.0);
        let fair = Ensemble::uniform(vec![(p, QPolynomial::zero()), (-p, QPolynomial::zero())]).unwrap();
        let mut a = ReplicaRng::new(5, 5);
        let mut b = ReplicaRng::new(5, 5);
        sample_atom(&fair, &mut a);
        b.next_u64();
        assert_eq!(a.next_u64(), b.next_u64());
    }
    /// Scaling and squaring with a 20-term Taylor series, independent of the
    /// closed form.
    fn taylor_exp(lambda: f64, g: &TracelessGenerator) -> Matrix2<f64> {
        let a = g.to_matrix() * lambda;
        let norm = a.abs().max().max(1e-300);
        let s = (norm.log2().ceil() + 4.0).max(0.0) as i32;
        let a = a / 2f64.powi(s);
        let mut term = Matrix2::identity();
        let mut sum = Matrix2::identity();
        for k in 1..=20 {
            term = term * a / k as f64;
            sum += term;
        }
        for _ in 0..s {
            sum = sum * sum;
        }
        sum
    }

    fn scale_of(m: &Unimodular2x2) -> f64 {
        m.max_abs().max(1.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn exponential_is_unimodular(lambda in 0.0f64..=1.0, g in prop::array::uniform3(-10.0f64..10.0)) {
            let m = exponential(lambda, &TracelessGenerator::from(g));
            let s = scale_of(&m);
            prop_assert!((m.det() - 1.0).abs() <= 1e-12 * s * s, "det {} at scale {}", m.det(), s);
        }

        #[test]
        fn exponential_inverse(lambda in 0.0f64..=1.0, g in prop::array::uniform3(-10.0f64..10.0)) {
            let g = TracelessGenerator::from(g);
            let m = exponential(lambda, &g);
            let prod = m * exponential(-lambda, &g);
            let s = scale_of(&m);
            for (x, y) in prod.entries().iter().zip([1.0, 0.0, 0.0, 1.0]) {
                prop_assert!((x - y).abs() <= 1e-10 * s * s);
            }
        }

        #[test]
        fn exponential_matches_taylor(lambda in 0.0f64..=1.0, g in prop::array::uniform3(-10.0f64..10.0)) {
            let g = TracelessGenerator::from(g);
            let m = exponential(lambda, &g);
            let t = taylor_exp(lambda, &g);
            let s = scale_of(&m);
            for (x, y) in m.entries().iter().zip([t[(0, 0)], t[(0, 1)], t[(1, 0)], t[(1, 1)]]) {
                prop_assert!((x - y).abs() <= 1e-10 * s, "{x} vs {y}");
            }
        }

        #[test]
        fn moments_are_linear_in_weights(
            w in 0.0f64..=1.0,
            p in prop::array::uniform3(-3.0f64..3.0),
            r in prop::array::uniform3(-3.0f64..3.0),
            q in prop::array::uniform3(-3.0f64..3.0),
        ) {
            let (p, r, q) = (TracelessGenerator::from(p), TracelessGenerator::from(r), QPolynomial::constant(TracelessGenerator::from(q)));
            let mixed = Ensemble::new(vec![Atom::new(w, p, q.clone()), Atom::new(1.0 - w, r, QPolynomial::zero())]).unwrap();
            let a = Ensemble::single(p, q);
            let b = Ensemble::single(r, QPolynomial::zero());
            let (m, ma, mb) = (mixed.moments(), a.moments(), b.moments());
            for i in 0..3 {
                for j in 0..3 {
                    let lin = w * ma.second_moments[i][j] + (1.0 - w) * mb.second_moments[i][j];
                    prop_assert!((m.second_moments[i][j] - lin).abs() <= 1e-12);
                }
            }
            for t in [0.0, 0.7, 2.0] {
                let lin = w * ma.p_sq.eval(t) + (1.0 - w) * mb.p_sq.eval(t);
                prop_assert!((m.p_sq.eval(t) - lin).abs() <= 1e-11);
                let lin = w * ma.drift2.eval(t) + (1.0 - w) * mb.drift2.eval(t);
                prop_assert!((m.drift2.eval(t) - lin).abs() <= 1e-11);
            }
            prop_assert_eq!(ma.mean_p, p);
            prop_assert_eq!(ma.mean_q0, a.atoms()[0].q.leading());
        }
    }
}
