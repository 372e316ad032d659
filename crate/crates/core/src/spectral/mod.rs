//! Truncated Fourier representation of 2-component velocity fields on the torus.
//!
//! Coefficients follow `u_k = (2 pi)^{-2} \int u e^{-ik.x} dx`, so every norm
//! and inner product here is a plain sum over coefficients. The retained lattice
//! is the rectangle `|k1| <= n_h/2`, `|k2| <= n_v/2`, stored row-major in `k1`
//! with `k2` running fastest.

mod io;
mod lp;
pub(crate) mod transform;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_fields_binary, write_fields_binary, FieldRecord, FIELD_FORMAT_VERSION};
pub use lp::{chi_profile, lp_block, lp_equivalence_bounds, lp_norm, theta_profile, LittlewoodPaleyPartition};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Tolerance (relative to the L2 norm) under which a field counts as divergence-free.
pub const SOLENOIDAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub n_h: usize,
    pub n_v: usize,
    #[serde(default = "default_dealias")]
    pub dealias_fraction: f64,
}

fn default_dealias() -> f64 {
    2.0 / 3.0
}

impl Grid {
    /// Grid with the 2/3-rule padding.
    pub fn new(n_h: usize, n_v: usize) -> Result<Self> {
        Self::with_dealias(n_h, n_v, default_dealias())
    }

    pub fn with_dealias(n_h: usize, n_v: usize, dealias_fraction: f64) -> Result<Self> {
        let g = Grid {
            n_h,
            n_v,
            dealias_fraction,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_h", self.n_h), ("n_v", self.n_v)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "{name} = {n} must be even and >= 4"
                )));
            }
        }
        if !(self.dealias_fraction > 0.0 && self.dealias_fraction <= 1.0) {
            return Err(Error::InvalidGrid(format!(
                "dealias_fraction = {} outside (0, 1]",
                self.dealias_fraction
            )));
        }
        Ok(())
    }

    pub fn kmax_h(&self) -> i64 {
        (self.n_h / 2) as i64
    }

    pub fn kmax_v(&self) -> i64 {
        (self.n_v / 2) as i64
    }

    /// Number of stored wavenumbers.
    pub fn len(&self) -> usize {
        (self.n_h + 1) * (self.n_v + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, k1: i64, k2: i64) -> Option<usize> {
        let (a, b) = (self.kmax_h(), self.kmax_v());
        if k1.abs() > a || k2.abs() > b {
            return None;
        }
        Some(((k1 + a) as usize) * (self.n_v + 1) + (k2 + b) as usize)
    }

    #[inline]
    pub fn wavenumber(&self, idx: usize) -> (i64, i64) {
        let m = self.n_v + 1;
        ((idx / m) as i64 - self.kmax_h(), (idx % m) as i64 - self.kmax_v())
    }

    /// Index of `-k` for the wavenumber at `idx`.
    #[inline]
    pub fn mirror(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    /// Physical grid used by pseudo-spectral products: the smallest even size
    /// `>= (n + 1) / dealias_fraction`. Quadratic products are alias-free when
    /// the fraction is at most 2/3.
    pub fn padded_size(&self) -> (usize, usize) {
        let pad = |n: usize| {
            let p = ((n + 1) as f64 / self.dealias_fraction - 1e-9).ceil() as usize;
            p + p % 2
        };
        (pad(self.n_h), pad(self.n_v))
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: *self,
                right: *other,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Horizontal variable `x1`, the dissipative direction.
    X1,
    /// Vertical variable `x2`.
    X2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<[Complex64; 2]>,
    solenoidal: bool,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        SpectralField {
            grid,
            coeffs: vec![[ZERO; 2]; grid.len()],
            solenoidal: true,
        }
    }

    pub fn from_coeffs(grid: Grid, coeffs: Vec<[Complex64; 2]>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: coeffs.len(),
            });
        }
        let mut f = SpectralField {
            grid,
            coeffs,
            solenoidal: false,
        };
        f.solenoidal = f.divergence_ratio() <= SOLENOIDAL_TOL;
        Ok(f)
    }

    /// Field with the given modes; each `k` also sets `-k` to the conjugate.
    pub fn from_modes(grid: Grid, modes: &[((i64, i64), [Complex64; 2])]) -> Result<Self> {
        let mut coeffs = vec![[ZERO; 2]; grid.len()];
        for &((k1, k2), c) in modes {
            let idx = grid.index(k1, k2).ok_or_else(|| {
                Error::InvalidParameter(format!("mode ({k1}, {k2}) outside the grid"))
            })?;
            coeffs[idx] = c;
            coeffs[grid.mirror(idx)] = [c[0].conj(), c[1].conj()];
        }
        Self::from_coeffs(grid, coeffs)
    }

    /// Samples `f` on the padded physical grid and keeps the retained modes.
    /// Exact for trigonometric polynomials that fit the grid.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let (ph, pv) = grid.padded_size();
        let mut a = Vec::with_capacity(ph * pv);
        let mut b = Vec::with_capacity(ph * pv);
        let tau = std::f64::consts::TAU;
        for i in 0..ph {
            for j in 0..pv {
                let v = f(tau * i as f64 / ph as f64, tau * j as f64 / pv as f64);
                a.push(v[0]);
                b.push(v[1]);
            }
        }
        let (ca, cb) = transform::with_transform(&grid, |t| t.forward_pair(&grid, &a, &b));
        let coeffs = ca.into_iter().zip(cb).map(|(x, y)| [x, y]).collect();
        let mut out = SpectralField {
            grid,
            coeffs,
            solenoidal: false,
        };
        out.enforce_reality();
        out.solenoidal = out.divergence_ratio() <= SOLENOIDAL_TOL;
        out
    }

    /// Random real field with coefficient amplitudes `(1 + |k|^2)^{-decay/2}`.
    /// Not projected.
    pub fn random<R: Rng + ?Sized>(grid: Grid, rng: &mut R, decay: f64) -> Self {
        let mut coeffs = vec![[ZERO; 2]; grid.len()];
        let centre = grid.len() / 2;
        for idx in 0..=centre {
            let (k1, k2) = grid.wavenumber(idx);
            let amp = (1.0 + (k1 * k1 + k2 * k2) as f64).powf(-decay / 2.0);
            let mut draw = || {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * amp
            };
            let c = [draw(), draw()];
            if idx == centre {
                coeffs[idx] = [Complex64::new(c[0].re, 0.0), Complex64::new(c[1].re, 0.0)];
            } else {
                coeffs[idx] = c;
                coeffs[grid.mirror(idx)] = [c[0].conj(), c[1].conj()];
            }
        }
        let mut f = SpectralField {
            grid,
            coeffs,
            solenoidal: false,
        };
        f.solenoidal = f.divergence_ratio() <= SOLENOIDAL_TOL;
        f
    }

    /// Random divergence-free, mean-zero field.
    pub fn random_solenoidal<R: Rng + ?Sized>(grid: Grid, rng: &mut R, decay: f64) -> Self {
        let mut f = project_leray(&Self::random(grid, rng, decay));
        f.coeffs[grid.len() / 2] = [ZERO; 2];
        f
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[[Complex64; 2]] {
        &self.coeffs
    }

    /// Mutable access clears the divergence-free flag.
    pub fn coeffs_mut(&mut self) -> &mut [[Complex64; 2]] {
        self.solenoidal = false;
        &mut self.coeffs
    }

    pub fn mode(&self, k1: i64, k2: i64) -> Option<[Complex64; 2]> {
        self.grid.index(k1, k2).map(|i| self.coeffs[i])
    }

    pub fn is_solenoidal(&self) -> bool {
        self.solenoidal
    }

    /// Scalar coefficients of one component.
    pub fn component(&self, c: usize) -> Vec<Complex64> {
        self.coeffs.iter().map(|v| v[c]).collect()
    }

    pub fn axpy(&mut self, alpha: f64, other: &SpectralField) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            a[0] += b[0] * alpha;
            a[1] += b[1] * alpha;
        }
        self.solenoidal &= other.solenoidal;
    }

    pub fn scaled(&self, alpha: f64) -> SpectralField {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.coeffs {
            a[0] *= alpha;
            a[1] *= alpha;
        }
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Multiplies each mode by a real per-index factor.
    pub fn apply_diagonal(&mut self, factors: &[f64]) {
        for (a, &f) in self.coeffs.iter_mut().zip(factors) {
            a[0] *= f;
            a[1] *= f;
        }
    }

    /// `sum_k Re(u_k . conj(v_k))`, i.e. `(2 pi)^{-2} \int u.v dx`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a[0] * b[0].conj()).re + (a[1] * b[1].conj()).re)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|a| a[0].norm_sqr() + a[1].norm_sqr())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `max_k |k . u_k|`.
    pub fn max_divergence(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(idx, a)| {
                let (k1, k2) = self.grid.wavenumber(idx);
                (a[0] * k1 as f64 + a[1] * k2 as f64).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `max_k |k . u_k| / |u|`, zero for the zero field.
    pub fn divergence_ratio(&self) -> f64 {
        let n = self.norm();
        if n == 0.0 {
            0.0
        } else {
            self.max_divergence() / n
        }
    }

    /// `max_k |u_k - conj(u_{-k})|`.
    pub fn reality_defect(&self) -> f64 {
        (0..self.grid.len())
            .map(|idx| {
                let a = self.coeffs[idx];
                let b = self.coeffs[self.grid.mirror(idx)];
                (a[0] - b[0].conj()).norm().max((a[1] - b[1].conj()).norm())
            })
            .fold(0.0, f64::max)
    }

    /// Symmetrizes `u_k` and `conj(u_{-k})`.
    pub fn enforce_reality(&mut self) {
        let n = self.grid.len();
        for idx in 0..=n / 2 {
            let m = self.grid.mirror(idx);
            let a = self.coeffs[idx];
            let b = self.coeffs[m];
            let s = [(a[0] + b[0].conj()) * 0.5, (a[1] + b[1].conj()) * 0.5];
            self.coeffs[idx] = s;
            self.coeffs[m] = [s[0].conj(), s[1].conj()];
        }
    }

    /// Samples on the padded physical grid, `(u1, u2)` each `p_h * p_v` row-major.
    pub fn to_physical(&self) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = (self.component(0), self.component(1));
        transform::with_transform(&self.grid, |t| t.inverse_pair(&self.grid, &a, &b))
    }

    /// Mean of `|u|^2` over the physical samples; equals `norm_sq` by Parseval.
    pub fn physical_energy(&self) -> f64 {
        let (u1, u2) = self.to_physical();
        let n = u1.len() as f64;
        u1.iter().zip(&u2).map(|(a, b)| a * a + b * b).sum::<f64>() / n
    }

    pub(crate) fn set_solenoidal(&mut self, flag: bool) {
        self.solenoidal = flag;
    }
}

/// `u_k -> (I - k k^T / |k|^2) u_k` for `k != 0`; the mean mode is untouched.
pub fn project_leray(f: &SpectralField) -> SpectralField {
    let mut out = f.clone();
    for (idx, a) in out.coeffs.iter_mut().enumerate() {
        let (k1, k2) = f.grid.wavenumber(idx);
        if k1 == 0 && k2 == 0 {
            continue;
        }
        let (k1, k2) = (k1 as f64, k2 as f64);
        let dot = (a[0] * k1 + a[1] * k2) / (k1 * k1 + k2 * k2);
        a[0] -= dot * k1;
        a[1] -= dot * k2;
    }
    out.solenoidal = true;
    out
}

/// `u_k -> (i k_axis)^order u_k`.
pub fn derivative(f: &SpectralField, axis: Axis, order: u32) -> SpectralField {
    let mut out = f.clone();
    for (idx, a) in out.coeffs.iter_mut().enumerate() {
        let (k1, k2) = f.grid.wavenumber(idx);
        let k = match axis {
            Axis::X1 => k1,
            Axis::X2 => k2,
        } as f64;
        let m = Complex64::new(0.0, k).powu(order);
        a[0] *= m;
        a[1] *= m;
    }
    out
}

/// `(sum_k (1+k1^2)^s (1+k2^2)^{s'} |u_k|^2)^{1/2}`.
pub fn aniso_norm(f: &SpectralField, s: f64, s_prime: f64) -> f64 {
    weighted_norm_sq(f, |k1, k2| {
        (1.0 + k1 * k1).powf(s) * (1.0 + k2 * k2).powf(s_prime)
    })
    .sqrt()
}

/// Isotropic `(sum_k (1+|k|^2)^s |u_k|^2)^{1/2}`.
pub fn hs_norm(f: &SpectralField, s: f64) -> f64 {
    weighted_norm_sq(f, |k1, k2| (1.0 + k1 * k1 + k2 * k2).powf(s)).sqrt()
}

pub(crate) fn weighted_norm_sq(f: &SpectralField, w: impl Fn(f64, f64) -> f64) -> f64 {
    f.coeffs
        .iter()
        .enumerate()
        .map(|(idx, a)| {
            let (k1, k2) = f.grid.wavenumber(idx);
            w(k1 as f64, k2 as f64) * (a[0].norm_sqr() + a[1].norm_sqr())
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid4() -> Grid {
        Grid::new(4, 4).unwrap()
    }

    #[test]
    fn grid_rejects_odd_or_small() {
        assert!(Grid::new(5, 8).is_err());
        assert!(Grid::new(2, 8).is_err());
        assert!(Grid::with_dealias(8, 8, 0.0).is_err());
        assert!(Grid::with_dealias(8, 8, 1.0).is_ok());
    }

    #[test]
    fn padded_size_removes_quadratic_aliasing() {
        for n in [4usize, 8, 16, 32] {
            let g = Grid::new(n, n).unwrap();
            let (ph, _) = g.padded_size();
            assert!(ph >= 3 * n / 2 + 1, "n = {n}, p = {ph}");
            assert_eq!(ph % 2, 0);
        }
    }

    #[test]
    fn index_roundtrip_and_mirror() {
        let g = Grid::new(8, 6).unwrap();
        for idx in 0..g.len() {
            let (k1, k2) = g.wavenumber(idx);
            assert_eq!(g.index(k1, k2), Some(idx));
            assert_eq!(g.wavenumber(g.mirror(idx)), (-k1, -k2));
        }
    }

    #[test]
    fn gradient_mode_is_annihilated() {
        let alpha = 0.7;
        let c = Complex64::new(0.0, alpha);
        let f = SpectralField::from_modes(grid4(), &[((1, 1), [c, c])]).unwrap();
        let p = project_leray(&f);
        assert!(p.norm() < 1e-15);
    }

    #[test]
    fn divergence_free_mode_is_fixed() {
        let one = Complex64::new(1.0, 0.0);
        let f = SpectralField::from_modes(grid4(), &[((0, 1), [one, ZERO])]).unwrap();
        assert!(f.is_solenoidal());
        assert_eq!(project_leray(&f), f);
    }

    #[test]
    fn projection_matches_dense_matrix_per_mode() {
        let g = grid4();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = SpectralField::random(g, &mut rng, 0.0);
        let p = project_leray(&f);
        for idx in 0..g.len() {
            let (k1, k2) = g.wavenumber(idx);
            let u = f.coeffs()[idx];
            let expect = if k1 == 0 && k2 == 0 {
                u
            } else {
                let k = [k1 as f64, k2 as f64];
                let kk = k[0] * k[0] + k[1] * k[1];
                let mut m = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        m[i][j] = if i == j { 1.0 } else { 0.0 } - k[i] * k[j] / kk;
                    }
                }
                [
                    u[0] * m[0][0] + u[1] * m[0][1],
                    u[0] * m[1][0] + u[1] * m[1][1],
                ]
            };
            let got = p.coeffs()[idx];
            assert!((got[0] - expect[0]).norm() < 1e-14);
            assert!((got[1] - expect[1]).norm() < 1e-14);
        }
        assert_eq!(p.mode(0, 0), f.mode(0, 0));
    }

    #[test]
    fn second_derivative_of_sine() {
        let g = Grid::new(8, 8).unwrap();
        let u = SpectralField::from_fn(g, |x1, _| [0.0, x1.sin()]);
        let d = derivative(&u, Axis::X1, 2);
        let expect = u.scaled(-1.0);
        assert!(d.sub(&expect).norm() < 1e-14);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = Grid::new(8, 8).unwrap();
        let u = SpectralField::from_modes(
            g,
            &[((0, 0), [Complex64::new(1.5, 0.0), Complex64::new(-0.25, 0.0)])],
        )
        .unwrap();
        for axis in [Axis::X1, Axis::X2] {
            for order in 1..4 {
                assert_eq!(derivative(&u, axis, order).norm(), 0.0);
            }
        }
    }

    #[test]
    fn derivative_composes() {
        let g = Grid::new(8, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = SpectralField::random(g, &mut rng, 1.0);
        let twice = derivative(&derivative(&f, Axis::X2, 1), Axis::X2, 1);
        let once = derivative(&f, Axis::X2, 2);
        assert!(twice.sub(&once).norm() <= 1e-12 * once.norm().max(1.0));
        assert!(twice.reality_defect() < 1e-13);
    }

    #[test]
    fn norms_of_simple_fields() {
        let g = Grid::new(8, 8).unwrap();
        assert_eq!(aniso_norm(&SpectralField::zeros(g), 1.0, 1.0), 0.0);
        let u = SpectralField::from_fn(g, |x1, _| [0.0, x1.sin()]);
        let c = u.mode(1, 0).unwrap()[1];
        assert!((c - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((aniso_norm(&u, 1.0, 0.0).powi(2) - 1.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = SpectralField::random(g, &mut rng, 1.0);
        assert!((aniso_norm(&f, 0.0, 0.0) - f.norm()).abs() < 1e-14 * f.norm());
        assert!((hs_norm(&f, 0.0) - f.norm()).abs() < 1e-14 * f.norm());
    }

    #[test]
    fn parseval_matches_physical_energy() {
        let g = Grid::new(16, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = SpectralField::random(g, &mut rng, 1.0);
        let e = f.physical_energy();
        assert!((e - aniso_norm(&f, 0.0, 0.0).powi(2)).abs() < 1e-10 * e);
    }

    #[test]
    fn from_fn_roundtrips_through_physical() {
        let g = Grid::new(8, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f = SpectralField::random(g, &mut rng, 1.0);
        let (a, b) = f.to_physical();
        let (ph, pv) = g.padded_size();
        let back = SpectralField::from_fn(g, |x1, x2| {
            let i = (x1 / std::f64::consts::TAU * ph as f64).round() as usize;
            let j = (x2 / std::f64::consts::TAU * pv as f64).round() as usize;
            [a[i * pv + j], b[i * pv + j]]
        });
        assert!(back.sub(&f).norm() < 1e-12 * f.norm());
    }
}
