//! Diffusion coefficients `sigma(t, u)` with closed-form growth and Lipschitz
//! constants, and reproducible cylindrical Wiener increments.
//!
//! Column `j` of `sigma(t, u)` is `q_j s_j(u) e_j`, where `e_j` runs over the
//! lowest-`|k|` divergence-free Fourier modes (unit `H` norm, cosine then sine
//! for each `k` in the half lattice) and `s_j = 1` (additive) or
//! `s_j(u) = 1 + coupling * tanh(<u, e_j>)` (diagonal multiplicative). Neither
//! family reads `d1 u`, so `K2`, `K~2` and `L2` vanish.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{aniso_norm, derivative, hs_norm, Axis, Grid, SpectralField};

/// Growth bound thresholds required for well-posedness.
pub const K2_THRESHOLD: f64 = 2.0 / 21.0;
pub const K2_TILDE_THRESHOLD: f64 = 1.0 / 5.0;
pub const L2_THRESHOLD: f64 = 1.0 / 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Additive,
    DiagonalMultiplicative,
}

/// Noise block of the experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Number of retained noise directions `J`.
    pub directions: usize,
    /// Geometric ratio `r` in `q_j = amplitude * r^j`.
    pub decay: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub coupling: f64,
    /// Master seed for the per-sample Wiener streams.
    #[serde(default)]
    pub seed: u64,
    /// Largest admissible discarded tail `sum_{j > J} q_j^2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_tolerance: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            kind: NoiseKind::Additive,
            directions: 8,
            decay: 0.5,
            amplitude: 1.0,
            coupling: 0.0,
            seed: 0,
            tail_tolerance: None,
        }
    }
}

/// Constants in the growth conditions
/// `|sigma|^2_{HS(l2,H^-1)} <= K'0 + K'1 |u|^2`,
/// `|sigma|^2_{HS(l2,H)} <= K0 + K1 |u|^2 + K2 |d1 u|^2`,
/// `|sigma|^2_{HS(l2,H^{0,1})} <= K~0 + K~1 |u|^2_{H^{0,1}} + K~2 (|d1 u|^2 + |d1 d2 u|^2)`
/// and the Lipschitz condition `|sigma(u) - sigma(v)|^2 <= L1 |u-v|^2 + L2 |d1(u-v)|^2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseConstants {
    pub k0_prime: f64,
    pub k1_prime: f64,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k0_tilde: f64,
    pub k1_tilde: f64,
    pub k2_tilde: f64,
    pub l1: f64,
    pub l2: f64,
}

impl NoiseConstants {
    pub fn within_thresholds(&self) -> bool {
        self.k2 < K2_THRESHOLD && self.k2_tilde < K2_TILDE_THRESHOLD && self.l2 < L2_THRESHOLD
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormTarget {
    /// Isotropic `H^{-1}`.
    HMinusOne,
    H,
    /// Anisotropic `H^{0,1}`.
    H01,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsNormReport {
    pub value: f64,
    pub bound: f64,
    pub certified: bool,
}

#[derive(Clone, Debug)]
pub struct NoiseModel {
    kind: NoiseKind,
    weights: Vec<f64>,
    coupling: f64,
    columns: Vec<SpectralField>,
    wavenumbers: Vec<(i64, i64)>,
    constants: NoiseConstants,
    tail: f64,
}

/// Lowest-`|k|` divergence-free unit modes: `sqrt(2) cos(k.x) k_perp/|k|` and
/// `sqrt(2) sin(k.x) k_perp/|k|` for `k` in the half lattice ordered by
/// `(|k|^2, k1, k2)`.
pub fn noise_basis(grid: Grid, count: usize) -> Result<Vec<((i64, i64), SpectralField)>> {
    let mut ks: Vec<(i64, i64)> = (0..grid.len())
        .map(|i| grid.wavenumber(i))
        .filter(|&(k1, k2)| k1 > 0 || (k1 == 0 && k2 > 0))
        .collect();
    ks.sort_by_key(|&(k1, k2)| (k1 * k1 + k2 * k2, k1, k2));
    if 2 * ks.len() < count {
        return Err(Error::InvalidParameter(format!(
            "{count} noise directions requested, grid supports {}",
            2 * ks.len()
        )));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(count);
    for &(k1, k2) in &ks {
        let norm = ((k1 * k1 + k2 * k2) as f64).sqrt();
        let perp = [-(k2 as f64) / norm, k1 as f64 / norm];
        for phase in [Complex64::new(h, 0.0), Complex64::new(0.0, -h)] {
            if out.len() == count {
                return Ok(out);
            }
            let c = [phase * perp[0], phase * perp[1]];
            out.push(((k1, k2), SpectralField::from_modes(grid, &[((k1, k2), c)])?));
        }
    }
    Ok(out)
}

pub fn make_noise_model(spec: &NoiseSpec, grid: Grid) -> Result<NoiseModel> {
    if spec.directions == 0 {
        return Err(Error::InvalidParameter("noise needs at least one direction".into()));
    }
    if !(spec.decay >= 0.0 && spec.decay < 1.0) {
        return Err(Error::NotSummable(format!(
            "decay ratio {} gives a non-square-summable weight sequence",
            spec.decay
        )));
    }
    if !(spec.amplitude >= 0.0 && spec.amplitude.is_finite()) {
        return Err(Error::InvalidParameter(format!("amplitude {}", spec.amplitude)));
    }
    let weights: Vec<f64> = (1..=spec.directions)
        .map(|j| spec.amplitude * spec.decay.powi(j as i32))
        .collect();
    let r2 = spec.decay * spec.decay;
    let tail = spec.amplitude.powi(2) * r2.powi(spec.directions as i32 + 1) / (1.0 - r2);
    if let Some(tol) = spec.tail_tolerance {
        if tail > tol {
            return Err(Error::NotSummable(format!(
                "discarded tail {tail:e} exceeds tolerance {tol:e} at J = {}",
                spec.directions
            )));
        }
    }
    let mut m = NoiseModel::from_weights(spec.kind, weights, spec.coupling, grid)?;
    m.tail = tail;
    Ok(m)
}

impl NoiseModel {
    /// Model with explicit weights; the recorded tail is zero.
    pub fn from_weights(kind: NoiseKind, weights: Vec<f64>, coupling: f64, grid: Grid) -> Result<Self> {
        if weights.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&coupling) {
            return Err(Error::InvalidParameter(format!("coupling {coupling} outside [0, 1]")));
        }
        let coupling = match kind {
            NoiseKind::Additive => 0.0,
            NoiseKind::DiagonalMultiplicative => coupling,
        };
        let basis = noise_basis(grid, weights.len())?;
        let (wavenumbers, columns): (Vec<_>, Vec<_>) = basis.into_iter().unzip();
        let constants = certify(&weights, &columns, coupling);
        Ok(NoiseModel {
            kind,
            weights,
            coupling,
            columns,
            wavenumbers,
            constants,
            tail: 0.0,
        })
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn dims(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn constants(&self) -> &NoiseConstants {
        &self.constants
    }

    /// Discarded `sum_{j > J} q_j^2`.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn basis(&self) -> &[SpectralField] {
        &self.columns
    }

    pub fn wavenumbers(&self) -> &[(i64, i64)] {
        &self.wavenumbers
    }

    pub fn grid(&self) -> &Grid {
        self.columns[0].grid()
    }

    /// Same model with all weights scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> NoiseModel {
        let weights: Vec<f64> = self.weights.iter().map(|q| q * factor.abs()).collect();
        let constants = certify(&weights, &self.columns, self.coupling);
        NoiseModel {
            weights,
            constants,
            tail: self.tail * factor * factor,
            ..self.clone()
        }
    }

    /// `q_j s_j(u)` for every column.
    pub fn column_factors(&self, _t: f64, u: &SpectralField) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.columns)
            .map(|(&q, e)| {
                if self.coupling == 0.0 {
                    q
                } else {
                    q * (1.0 + self.coupling * u.inner(e).tanh())
                }
            })
            .collect()
    }

    /// Column `j` of `sigma(t, u)`.
    pub fn column(&self, t: f64, u: &SpectralField, j: usize) -> SpectralField {
        self.columns[j].scaled(self.column_factors(t, u)[j])
    }

    /// `sigma(t, u) xi = sum_j xi_j q_j s_j(u) e_j`.
    pub fn sigma_apply(&self, t: f64, u: &SpectralField, xi: &[f64]) -> Result<SpectralField> {
        if xi.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: xi.len(),
            });
        }
        let mut out = SpectralField::zeros(*self.grid());
        self.add_sigma(t, u, xi, 1.0, &mut out);
        Ok(out)
    }

    /// `out += scale * sigma(t, u) xi`; lengths must already agree.
    pub(crate) fn add_sigma(&self, t: f64, u: &SpectralField, xi: &[f64], scale: f64, out: &mut SpectralField) {
        for ((f, e), x) in self.column_factors(t, u).iter().zip(&self.columns).zip(xi) {
            let a = scale * f * x;
            if a != 0.0 {
                out.axpy(a, e);
            }
        }
    }

    /// `sigma(t, u)^T y`, component `j` being `q_j s_j(u) <e_j, y>`.
    pub fn sigma_transpose(&self, t: f64, u: &SpectralField, y: &SpectralField) -> Vec<f64> {
        self.column_factors(t, u)
            .iter()
            .zip(&self.columns)
            .map(|(f, e)| f * e.inner(y))
            .collect()
    }

    /// `sum_j |sigma(t,u) psi_j|^2_target` with the growth-condition certificate.
    pub fn sigma_hs_norm(&self, t: f64, u: &SpectralField, target: NormTarget) -> HsNormReport {
        let c = &self.constants;
        let norm_sq = |e: &SpectralField| match target {
            NormTarget::HMinusOne => hs_norm(e, -1.0).powi(2),
            NormTarget::H => e.norm_sq(),
            NormTarget::H01 => aniso_norm(e, 0.0, 1.0).powi(2),
        };
        let value = self
            .column_factors(t, u)
            .iter()
            .zip(&self.columns)
            .map(|(f, e)| f * f * norm_sq(e))
            .sum();
        let d1u = derivative(u, Axis::X1, 1);
        let bound = match target {
            NormTarget::HMinusOne => c.k0_prime + c.k1_prime * u.norm_sq(),
            NormTarget::H => c.k0 + c.k1 * u.norm_sq() + c.k2 * d1u.norm_sq(),
            NormTarget::H01 => {
                let d12u = derivative(&d1u, Axis::X2, 1);
                c.k0_tilde
                    + c.k1_tilde * aniso_norm(u, 0.0, 1.0).powi(2)
                    + c.k2_tilde * (d1u.norm_sq() + d12u.norm_sq())
            }
        };
        HsNormReport {
            value,
            bound,
            certified: value <= bound * (1.0 + 1e-12) + 1e-300,
        }
    }

    /// `(|sigma(u) - sigma(v)|^2_{HS(l2,H)}, L1 |u-v|^2 + L2 |d1(u-v)|^2)`.
    pub fn lipschitz_check(&self, t: f64, u: &SpectralField, v: &SpectralField) -> (f64, f64) {
        let fu = self.column_factors(t, u);
        let fv = self.column_factors(t, v);
        let lhs = fu
            .iter()
            .zip(&fv)
            .zip(&self.columns)
            .map(|((a, b), e)| (a - b).powi(2) * e.norm_sq())
            .sum();
        let w = u.sub(v);
        let rhs = self.constants.l1 * w.norm_sq()
            + self.constants.l2 * derivative(&w, Axis::X1, 1).norm_sq();
        (lhs, rhs)
    }
}

fn certify(weights: &[f64], columns: &[SpectralField], coupling: f64) -> NoiseConstants {
    let smax2 = (1.0 + coupling).powi(2);
    let sum = |f: &dyn Fn(&SpectralField) -> f64| -> f64 {
        weights.iter().zip(columns).map(|(q, e)| q * q * f(e)).sum()
    };
    let max_col = weights
        .iter()
        .zip(columns)
        .map(|(q, e)| q * q * e.norm_sq())
        .fold(0.0, f64::max);
    let max_basis = columns.iter().map(|e| e.norm_sq()).fold(0.0, f64::max);
    NoiseConstants {
        k0_prime: smax2 * sum(&|e| hs_norm(e, -1.0).powi(2)),
        k1_prime: 0.0,
        k0: smax2 * sum(&|e| e.norm_sq()),
        k1: 0.0,
        k2: 0.0,
        k0_tilde: smax2 * sum(&|e| aniso_norm(e, 0.0, 1.0).powi(2)),
        k1_tilde: 0.0,
        k2_tilde: 0.0,
        l1: coupling * coupling * max_col * max_basis,
        l2: 0.0,
    }
}

/// SplitMix64 finalizer over `(master, stream, index)`; independent of evaluation order.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    for _ in 0..2 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Increments `W(t_{n+1}) - W(t_n)` of `J` independent Brownian motions.
#[derive(Clone, Debug, PartialEq)]
pub struct WienerPath {
    seed: u64,
    dt: f64,
    dims: usize,
    increments: Vec<Vec<f64>>,
}

impl WienerPath {
    pub fn generate(seed: u64, dt: f64, dims: usize, steps: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = dt.sqrt();
        let increments = (0..steps)
            .map(|_| {
                (0..dims)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * sd
                    })
                    .collect()
            })
            .collect();
        WienerPath {
            seed,
            dt,
            dims,
            increments,
        }
    }

    /// A path that never moves.
    pub fn zero(dt: f64, dims: usize, steps: usize) -> Self {
        WienerPath {
            seed: 0,
            dt,
            dims,
            increments: vec![vec![0.0; dims]; steps],
        }
    }

    /// Sums consecutive blocks of `factor` increments: the same Brownian
    /// realization sampled at `factor * dt`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.increments.len() % factor != 0 {
            return Err(Error::InvalidParameter(format!(
                "cannot coarsen {} steps by {factor}",
                self.increments.len()
            )));
        }
        let increments = self
            .increments
            .chunks(factor)
            .map(|block| {
                (0..self.dims)
                    .map(|j| block.iter().map(|x| x[j]).sum())
                    .collect()
            })
            .collect();
        Ok(WienerPath {
            seed: self.seed,
            dt: self.dt * factor as f64,
            dims: self.dims,
            increments,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn increment(&self, n: usize) -> &[f64] {
        &self.increments[n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::project_leray;

    fn grid() -> Grid {
        Grid::new(8, 8).unwrap()
    }

    fn additive(j: usize) -> NoiseModel {
        let spec = NoiseSpec {
            directions: j,
            ..NoiseSpec::default()
        };
        make_noise_model(&spec, grid()).unwrap()
    }

    fn multiplicative(c: f64) -> NoiseModel {
        let spec = NoiseSpec {
            kind: NoiseKind::DiagonalMultiplicative,
            coupling: c,
            ..NoiseSpec::default()
        };
        make_noise_model(&spec, grid()).unwrap()
    }

    #[test]
    fn basis_is_orthonormal_and_solenoidal() {
        let b = noise_basis(grid(), 12).unwrap();
        assert_eq!(b[0].0, (0, 1));
        assert_eq!(b[2].0, (1, 0));
        for (i, (_, e)) in b.iter().enumerate() {
            assert!(e.is_solenoidal());
            assert!(e.reality_defect() == 0.0);
            assert_eq!(&project_leray(e), e);
            for (j, (_, f)) in b.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((e.inner(f) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn additive_constants_by_direct_sum() {
        let m = additive(8);
        let c = m.constants();
        assert_eq!((c.k1, c.k2, c.l1, c.l2), (0.0, 0.0, 0.0, 0.0));
        let k0: f64 = (1..=8)
            .zip(m.basis())
            .map(|(j, e)| 2f64.powi(-2 * j) * e.norm_sq())
            .sum();
        assert!((c.k0 - k0).abs() < 1e-15);
        assert!(c.within_thresholds());
        let tail: f64 = (9..200).map(|j| 2f64.powi(-2 * j)).sum();
        assert!((m.tail() - tail).abs() < 1e-18);
    }

    #[test]
    fn zero_coupling_has_zero_lipschitz_constant() {
        let m = multiplicative(0.0);
        assert_eq!(m.constants().l1, 0.0);
        assert_eq!(m.constants().l2, 0.0);
    }

    #[test]
    fn multiplicative_is_accepted_below_thresholds() {
        let m = multiplicative(0.5);
        assert_eq!(m.constants().k2, 0.0);
        assert!(m.constants().l1 > 0.0);
        assert!(m.constants().within_thresholds());
    }

    #[test]
    fn non_summable_weights_rejected() {
        let spec = NoiseSpec {
            decay: 1.0,
            ..NoiseSpec::default()
        };
        assert!(matches!(make_noise_model(&spec, grid()), Err(Error::NotSummable(_))));
        let spec = NoiseSpec {
            decay: 0.9,
            tail_tolerance: Some(1e-6),
            ..NoiseSpec::default()
        };
        assert!(matches!(make_noise_model(&spec, grid()), Err(Error::NotSummable(_))));
    }

    #[test]
    fn sigma_apply_single_column_and_zero() {
        let m = additive(8);
        let u = SpectralField::zeros(grid());
        let mut xi = vec![0.0; 8];
        assert_eq!(m.sigma_apply(0.0, &u, &xi).unwrap().norm(), 0.0);
        xi[0] = 1.0;
        let got = m.sigma_apply(0.0, &u, &xi).unwrap();
        assert_eq!(got, m.basis()[0].scaled(0.5));
        assert!(m.sigma_apply(0.0, &u, &xi[..3]).is_err());
    }

    #[test]
    fn multiplicative_apply_matches_column_assembly() {
        use rand::SeedableRng;
        let m = multiplicative(0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = SpectralField::random_solenoidal(grid(), &mut rng, 1.0).scaled(3.0);
        let xi: Vec<f64> = (0..8).map(|j| (j as f64 - 3.5) * 0.3).collect();
        let mut want = SpectralField::zeros(grid());
        for (j, x) in xi.iter().enumerate() {
            let col = project_leray(&m.column(0.0, &u, j));
            want.axpy(*x, &col);
        }
        let got = m.sigma_apply(0.0, &u, &xi).unwrap();
        assert!(got.sub(&want).norm() < 1e-14);
        assert!(got.is_solenoidal());
    }

    #[test]
    fn hs_norm_certificates() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let add = additive(8);
        let zero = NoiseModel::from_weights(NoiseKind::Additive, vec![0.0; 4], 0.0, grid()).unwrap();
        let mul = multiplicative(1.0);
        let u0 = SpectralField::zeros(grid());
        for _ in 0..100 {
            let u = SpectralField::random_solenoidal(grid(), &mut rng, 0.5).scaled(5.0);
            for target in [NormTarget::HMinusOne, NormTarget::H, NormTarget::H01] {
                let a = add.sigma_hs_norm(0.0, &u, target);
                assert_eq!(a.value, add.sigma_hs_norm(0.0, &u0, target).value);
                assert!(a.certified);
                assert!(mul.sigma_hs_norm(0.0, &u, target).certified);
                assert_eq!(zero.sigma_hs_norm(0.0, &u, target).value, 0.0);
            }
            let v = SpectralField::random_solenoidal(grid(), &mut rng, 0.5);
            let (lhs, rhs) = mul.lipschitz_check(0.0, &u, &v);
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn wiener_path_is_reproducible_and_coarsens() {
        let a = WienerPath::generate(42, 1e-3, 4, 64);
        let b = WienerPath::generate(42, 1e-3, 4, 64);
        assert_eq!(a, b);
        assert_ne!(a, WienerPath::generate(43, 1e-3, 4, 64));
        let c = a.coarsen(8).unwrap();
        assert_eq!(c.steps(), 8);
        assert!((c.dt() - 8e-3).abs() < 1e-18);
        let total_fine: f64 = (0..64).map(|n| a.increment(n)[2]).sum();
        let total_coarse: f64 = (0..8).map(|n| c.increment(n)[2]).sum();
        assert!((total_fine - total_coarse).abs() < 1e-14);
        assert!(a.coarsen(5).is_err());
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut s: Vec<u64> = (0..1000).map(|i| derive_seed(7, 1, i)).collect();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 1000);
        assert_ne!(derive_seed(7, 1, 0), derive_seed(7, 2, 0));
    }
}
