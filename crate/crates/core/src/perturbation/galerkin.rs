//! Fourier–Galerkin solves for the centered diffusion
//! `𝓛 = D ∂² + b ∂` on `[0, π)`.

use crate::error::{Error, Result};
use crate::fourier::FourierDensity;
use num_complex::Complex64;

pub const DEFAULT_ORDER: usize = 64;
pub const MAX_ORDER: usize = 512;
pub const RESIDUAL_TOL: f64 = 1e-8;
pub const NEGATIVITY_TOL: f64 = -1e-9;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Square complex band matrix with LU factorization by partial pivoting.
///
/// Row `i` keeps columns `i − kl ..= i + ku + kl`; the extra `kl`
/// superdiagonals hold the fill-in from row swaps.
struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl BandMatrix {
    fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![ZERO; n * width],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    fn set(&mut self, i: usize, j: usize, v: Complex64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry outside the band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Solves `A x = rhs` in place, destroying the factorization storage.
    fn solve(mut self, rhs: &mut [Complex64]) -> Result<()> {
        let n = self.n;
        let reach = self.kl + self.ku;
        let scale = self.data.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1.0);
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].norm();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-14 * scale {
                return Err(Error::IncreaseK(format!("singular Galerkin system at row {k}")));
            }
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
                rhs.swap(k, p);
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last_row {
                let li = self.idx(i, k);
                let factor = self.data[li] / pivot;
                if factor == ZERO {
                    continue;
                }
                self.data[li] = ZERO;
                for j in k + 1..=last_col {
                    let (a, b) = (self.idx(i, j), self.idx(k, j));
                    let u = self.data[b];
                    self.data[a] -= factor * u;
                }
                let r = rhs[k];
                rhs[i] -= factor * r;
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + reach).min(n - 1);
            let mut acc = rhs[k];
            for j in k + 1..=last_col {
                acc -= self.data[self.idx(k, j)] * rhs[j];
            }
            rhs[k] = acc / self.data[self.idx(k, k)];
        }
        Ok(())
    }
}

/// `𝓛* ρ = (Dρ)'' − (bρ)'`, exact in Fourier space.
pub fn apply_adjoint(d: &FourierDensity, b: &FourierDensity, rho: &FourierDensity) -> FourierDensity {
    &(d * rho).derivative().derivative() - &(b * rho).derivative()
}

/// `𝓛 F = D F'' + b F'`.
pub fn apply_generator(d: &FourierDensity, b: &FourierDensity, f: &FourierDensity) -> FourierDensity {
    let df = f.derivative();
    &(d * &df.derivative()) + &(b * &df)
}

fn band_of(d: &FourierDensity, b: &FourierDensity) -> usize {
    d.order().max(b.order()).max(1)
}

fn check_order(order: usize) -> Result<()> {
    if order < 16 {
        return Err(Error::InvalidParameter(format!("Galerkin order must be ≥ 16, got {order}")));
    }
    Ok(())
}

/// Unit-integral null vector of `𝓛*` at truncation order `K`.
///
/// The `k = 0` row of `𝓛*` vanishes identically and is replaced by
/// `π ρ_0 = 1`. Fails with [`Error::IncreaseK`] if the grid residual exceeds
/// `1e-8` or `ρ` dips below `−1e-9`.
pub fn solve_stationary_density(d: &FourierDensity, b: &FourierDensity, order: usize) -> Result<FourierDensity> {
    check_order(order)?;
    let k = order as i64;
    let n = 2 * order + 1;
    let band = band_of(d, b);
    let mut a = BandMatrix::new(n, band, band);
    for row in -k..=k {
        let i = (row + k) as usize;
        if row == 0 {
            a.set(i, i, Complex64::new(std::f64::consts::PI, 0.0));
            continue;
        }
        let kk = row as f64;
        for col in (row - band as i64).max(-k)..=(row + band as i64).min(k) {
            let j = (col + k) as usize;
            let v = d.coeff(row - col) * (-4.0 * kk * kk)
                - b.coeff(row - col) * Complex64::new(0.0, 2.0 * kk);
            a.set(i, j, v);
        }
    }
    let mut x = vec![ZERO; n];
    x[order] = Complex64::new(1.0, 0.0);
    a.solve(&mut x)?;
    let mut rho = FourierDensity::from_coeffs(x);
    rho.symmetrize();
    rho.set(0, Complex64::new(1.0 / std::f64::consts::PI, 0.0));

    let grid = 4 * order;
    let residual = apply_adjoint(d, b, &rho).sup_norm(grid);
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::IncreaseK(format!("stationary density residual {residual:.3e} at K={order}")));
    }
    let min = rho.min_on_grid(grid);
    if min < NEGATIVITY_TOL {
        return Err(Error::IncreaseK(format!("stationary density reaches {min:.3e} at K={order}")));
    }
    Ok(rho)
}

/// Retries [`solve_stationary_density`] with `K` doubled up to [`MAX_ORDER`].
pub fn solve_stationary_density_adaptive(
    d: &FourierDensity,
    b: &FourierDensity,
    order: usize,
) -> Result<(FourierDensity, usize)> {
    let mut k = order;
    loop {
        match solve_stationary_density(d, b, k) {
            Ok(rho) => return Ok((rho, k)),
            Err(Error::IncreaseK(msg)) if k * 2 > MAX_ORDER => return Err(Error::IncreaseK(msg)),
            Err(Error::IncreaseK(_)) => k *= 2,
            Err(e) => return Err(e),
        }
    }
}

/// Solution of the Poisson problem `𝓛F = f − μ` with `F_0 = 0`.
#[derive(Clone, Debug)]
pub struct PoissonSolution {
    pub f: FourierDensity,
    /// The compatibility constant; agrees with `⟨ρ|f⟩` up to truncation.
    pub mu: f64,
}

/// Bordered solve of `𝓛F + μ = f`: the `F_0` column of `𝓛` vanishes and is
/// replaced by the unknown `μ`.
pub fn solve_poisson(
    d: &FourierDensity,
    b: &FourierDensity,
    rho: &FourierDensity,
    f: &FourierDensity,
    order: usize,
) -> Result<PoissonSolution> {
    check_order(order)?;
    let k = order as i64;
    let n = 2 * order + 1;
    let band = band_of(d, b);
    let mut a = BandMatrix::new(n, band, band);
    for row in -k..=k {
        let i = (row + k) as usize;
        for col in (row - band as i64).max(-k)..=(row + band as i64).min(k) {
            let j = (col + k) as usize;
            let v = if col == 0 {
                if row == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    ZERO
                }
            } else {
                let c = col as f64;
                d.coeff(row - col) * (-4.0 * c * c) + b.coeff(row - col) * Complex64::new(0.0, 2.0 * c)
            };
            a.set(i, j, v);
        }
    }
    let mut x: Vec<Complex64> = (-k..=k).map(|j| f.coeff(j)).collect();
    a.solve(&mut x)?;
    let mu = x[order].re;
    x[order] = ZERO;
    let mut sol = FourierDensity::from_coeffs(x);
    sol.symmetrize();

    let grid = 4 * order;
    let target = f - &FourierDensity::constant(mu);
    let residual = (&apply_generator(d, b, &sol) - &target).sup_norm(grid);
    let scale = f.sup_norm(grid).max(1.0);
    if !(residual <= RESIDUAL_TOL * scale) {
        return Err(Error::IncreaseK(format!("Poisson residual {residual:.3e} at K={order}")));
    }
    let solvability = rho.inner(&f) - mu;
    if !(solvability.abs() <= 1e-9 * scale) {
        return Err(Error::IncreaseK(format!(
            "Poisson compatibility off by {solvability:.3e} at K={order}"
        )));
    }
    Ok(PoissonSolution { f: sol, mu })
}
