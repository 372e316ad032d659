//! Vertical Littlewood-Paley blocks.
//!
//! The profile pair is built from one smooth cutoff `phi` with `phi = 1` on
//! `[0, 3/4]` and `phi = 0` on `[4/3, inf)`: `chi = phi` and
//! `theta(z) = phi(z/2) - phi(z)`, so `supp theta` lies in `[3/4, 8/3]` and the
//! partial sums telescope to `phi(2^{-J-1} z)`.

use serde::{Deserialize, Serialize};

use super::{weighted_norm_sq, SpectralField};
use crate::error::{Error, Result};

const INNER: f64 = 0.75;
const OUTER: f64 = 4.0 / 3.0;

fn smooth_step(t: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        h(t) / (h(t) + h(1.0 - t))
    }
}

/// Low-frequency profile `chi`.
pub fn chi_profile(z: f64) -> f64 {
    1.0 - smooth_step((z.abs() - INNER) / (OUTER - INNER))
}

/// Annulus profile `theta`.
pub fn theta_profile(z: f64) -> f64 {
    chi_profile(z / 2.0) - chi_profile(z)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LittlewoodPaleyPartition {
    kmax_v: i64,
    /// `chi(|k2|)` for `|k2| = 0..=kmax_v`.
    chi: Vec<f64>,
    /// `theta[j][|k2|] = theta(2^{-j} |k2|)` for `j = 0..=j_max`.
    theta: Vec<Vec<f64>>,
    j_max: i32,
}

impl LittlewoodPaleyPartition {
    pub fn new(grid: &super::Grid) -> Self {
        let kmax_v = grid.kmax_v();
        let mut j_max = 0;
        while (kmax_v as f64) > INNER * 2f64.powi(j_max + 1) {
            j_max += 1;
        }
        let chi = (0..=kmax_v).map(|z| chi_profile(z as f64)).collect();
        let theta = (0..=j_max)
            .map(|j| {
                (0..=kmax_v)
                    .map(|z| theta_profile(z as f64 / 2f64.powi(j)))
                    .collect()
            })
            .collect();
        LittlewoodPaleyPartition {
            kmax_v,
            chi,
            theta,
            j_max,
        }
    }

    /// Largest block index with support on the grid.
    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn kmax_v(&self) -> i64 {
        self.kmax_v
    }

    pub fn chi(&self) -> &[f64] {
        &self.chi
    }

    pub fn theta(&self, j: i32) -> Option<&[f64]> {
        usize::try_from(j).ok().and_then(|j| self.theta.get(j)).map(Vec::as_slice)
    }

    /// Multiplier of block `j` at vertical wavenumber `k2`.
    pub fn multiplier(&self, j: i32, k2: i64) -> Result<f64> {
        self.check_block(j)?;
        let z = k2.unsigned_abs() as usize;
        Ok(if j < 0 {
            self.chi[z]
        } else {
            self.theta[j as usize][z]
        })
    }

    fn check_block(&self, j: i32) -> Result<()> {
        if j < -1 || j > self.j_max {
            Err(Error::BlockOutOfRange {
                index: j,
                max: self.j_max,
            })
        } else {
            Ok(())
        }
    }

    fn check_grid(&self, f: &SpectralField) -> Result<()> {
        if f.grid().kmax_v() != self.kmax_v {
            return Err(Error::InvalidParameter(format!(
                "partition built for |k2| <= {}, field has |k2| <= {}",
                self.kmax_v,
                f.grid().kmax_v()
            )));
        }
        Ok(())
    }
}

/// `Delta^v_j f`: multiplies `f_k` by `chi(|k2|)` for `j = -1` and by
/// `theta(2^{-j}|k2|)` for `j >= 0`.
pub fn lp_block(f: &SpectralField, j: i32, part: &LittlewoodPaleyPartition) -> Result<SpectralField> {
    part.check_block(j)?;
    part.check_grid(f)?;
    let grid = *f.grid();
    let factors: Vec<f64> = (0..grid.len())
        .map(|idx| part.multiplier(j, grid.wavenumber(idx).1))
        .collect::<Result<_>>()?;
    let mut out = f.clone();
    out.apply_diagonal(&factors);
    Ok(out)
}

/// `(sum_j 2^{2 j s'} |Delta^v_j f|^2_{L^2_v(H^s_h)})^{1/2}`.
pub fn lp_norm(f: &SpectralField, s: f64, s_prime: f64, part: &LittlewoodPaleyPartition) -> Result<f64> {
    part.check_grid(f)?;
    let mut total = 0.0;
    for j in -1..=part.j_max {
        let block = lp_block(f, j, part)?;
        let w = 2f64.powf(2.0 * j as f64 * s_prime);
        total += w * weighted_norm_sq(&block, |k1, _| (1.0 + k1 * k1).powf(s));
    }
    Ok(total.sqrt())
}

/// Two-sided constants `(c, C)` with `c |f|_{H^{s,s'}} <= lp_norm(f) <= C |f|_{H^{s,s'}}`
/// for every field on the partition's grid. Both norms are diagonal in `k2`, so
/// the constants are the extreme square-root ratios of the per-`|k2|` weights.
pub fn lp_equivalence_bounds(part: &LittlewoodPaleyPartition, s_prime: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for z in 0..=part.kmax_v {
        let mut w = 0.0;
        for j in -1..=part.j_max {
            let m = part.multiplier(j, z).expect("block in range");
            w += 2f64.powf(2.0 * j as f64 * s_prime) * m * m;
        }
        let r = (w / (1.0 + (z * z) as f64).powf(s_prime)).sqrt();
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{aniso_norm, Grid};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn profile_supports() {
        assert_eq!(chi_profile(0.0), 1.0);
        assert_eq!(chi_profile(0.75), 1.0);
        assert_eq!(chi_profile(4.0 / 3.0), 0.0);
        assert_eq!(theta_profile(0.7), 0.0);
        assert_eq!(theta_profile(8.0 / 3.0 + 1e-12), 0.0);
        assert!(theta_profile(1.5) > 0.0);
    }

    #[test]
    fn partition_of_unity_on_lattice() {
        for n in [4usize, 8, 16, 32, 64] {
            let g = Grid::new(8, n).unwrap();
            let p = LittlewoodPaleyPartition::new(&g);
            for z in 0..=g.kmax_v() {
                let s: f64 = (-1..=p.j_max()).map(|j| p.multiplier(j, z).unwrap()).sum();
                assert!((s - 1.0).abs() < 1e-12, "n = {n}, z = {z}, sum = {s}");
            }
        }
    }

    #[test]
    fn blocks_separated_by_two_are_disjoint() {
        let g = Grid::new(8, 64).unwrap();
        let p = LittlewoodPaleyPartition::new(&g);
        for i in -1..=p.j_max() {
            for j in -1..=p.j_max() {
                if (i - j).abs() > 1 {
                    for z in 0..=g.kmax_v() {
                        let prod = p.multiplier(i, z).unwrap() * p.multiplier(j, z).unwrap();
                        assert_eq!(prod, 0.0, "blocks {i}, {j} overlap at {z}");
                    }
                }
            }
        }
    }

    #[test]
    fn blocks_reconstruct_field() {
        let g = Grid::new(16, 16).unwrap();
        let p = LittlewoodPaleyPartition::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = SpectralField::random(g, &mut rng, 0.5);
        let mut sum = SpectralField::zeros(g);
        for j in -1..=p.j_max() {
            sum.axpy(1.0, &lp_block(&f, j, &p).unwrap());
        }
        assert!(sum.sub(&f).norm() <= 1e-12 * f.norm());
    }

    #[test]
    fn horizontal_only_field_lives_in_low_block() {
        let g = Grid::new(16, 16).unwrap();
        let p = LittlewoodPaleyPartition::new(&g);
        let c = Complex64::new(0.0, -0.5);
        let f = SpectralField::from_modes(g, &[((3, 0), [Complex64::new(0.0, 0.0), c])]).unwrap();
        assert_eq!(lp_block(&f, -1, &p).unwrap(), f);
        for j in 0..=p.j_max() {
            assert_eq!(lp_block(&f, j, &p).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn out_of_range_block_is_rejected() {
        let g = Grid::new(8, 8).unwrap();
        let p = LittlewoodPaleyPartition::new(&g);
        let f = SpectralField::zeros(g);
        assert!(matches!(
            lp_block(&f, p.j_max() + 1, &p),
            Err(Error::BlockOutOfRange { .. })
        ));
        assert!(lp_block(&f, -2, &p).is_err());
    }

    #[test]
    fn lp_norm_within_equivalence_bounds() {
        let g = Grid::new(16, 32).unwrap();
        let p = LittlewoodPaleyPartition::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(s, sp) in &[(0.0, 1.0), (1.0, 1.0), (0.25, 2.0)] {
            let (c, cc) = lp_equivalence_bounds(&p, sp);
            for _ in 0..100 {
                let f = SpectralField::random(g, &mut rng, 1.0);
                let r = lp_norm(&f, s, sp, &p).unwrap() / aniso_norm(&f, s, sp);
                assert!(r >= c * (1.0 - 1e-12) && r <= cc * (1.0 + 1e-12));
            }
        }
    }
}
