//! Convection operator `B(u, v) = P_H(u . grad v)`, the trilinear form
//! `b(u, v, w) = <B(u, v), w>`, and numerical diagnostics for the product
//! estimates it satisfies.
//!
//! Products are formed pseudo-spectrally on the grid's padded physical lattice;
//! with the default 2/3 fraction the retained coefficients of every quadratic
//! product are exact.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    aniso_norm, derivative, lp_block, project_leray, transform, Axis, Grid, LittlewoodPaleyPartition,
    SpectralField,
};

type Physical = (Vec<f64>, Vec<f64>);

fn to_physical(f: &SpectralField) -> Physical {
    f.to_physical()
}

/// Physical samples of `(d_1 v_j, d_2 v_j)` for `j = 0, 1`.
fn gradient_physical(v: &SpectralField) -> [Physical; 2] {
    let grid = *v.grid();
    let mut out: [Physical; 2] = Default::default();
    for (j, slot) in out.iter_mut().enumerate() {
        let comp = v.component(j);
        let mut d1 = Vec::with_capacity(comp.len());
        let mut d2 = Vec::with_capacity(comp.len());
        for (idx, c) in comp.iter().enumerate() {
            let (k1, k2) = grid.wavenumber(idx);
            d1.push(c * Complex64::new(0.0, k1 as f64));
            d2.push(c * Complex64::new(0.0, k2 as f64));
        }
        *slot = transform::with_transform(&grid, |t| t.inverse_pair(&grid, &d1, &d2));
    }
    out
}

fn from_physical(grid: Grid, w1: &[f64], w2: &[f64]) -> SpectralField {
    let (a, b) = transform::with_transform(&grid, |t| t.forward_pair(&grid, w1, w2));
    let coeffs = a.into_iter().zip(b).map(|(x, y)| [x, y]).collect();
    let mut f = SpectralField::from_coeffs(grid, coeffs).expect("length matches grid");
    f.enforce_reality();
    f
}

fn accumulate_advection(w: &mut [Vec<f64>; 2], u: &Physical, grad_v: &[Physical; 2]) {
    for j in 0..2 {
        let (d1, d2) = &grad_v[j];
        for (n, wj) in w[j].iter_mut().enumerate() {
            *wj += u.0[n] * d1[n] + u.1[n] * d2[n];
        }
    }
}

fn check_grids(fields: &[&SpectralField]) -> Result<Grid> {
    let g = *fields[0].grid();
    for f in &fields[1..] {
        g.ensure_same(f.grid())?;
    }
    Ok(g)
}

/// `u . grad v`, truncated to the retained modes, without projection.
pub fn advection(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    let grid = check_grids(&[u, v])?;
    let n = padded_len(&grid);
    let mut w = [vec![0.0; n], vec![0.0; n]];
    accumulate_advection(&mut w, &to_physical(u), &gradient_physical(v));
    Ok(from_physical(grid, &w[0], &w[1]))
}

/// `B(u, v) = P_H(u . grad v)`.
pub fn nonlinear_term(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    Ok(project_leray(&advection(u, v)?))
}

/// `P_H(sum_i a_i . grad b_i)` with one forward transform.
pub fn nonlinear_sum(terms: &[(&SpectralField, &SpectralField)]) -> Result<SpectralField> {
    let all: Vec<&SpectralField> = terms.iter().flat_map(|(a, b)| [*a, *b]).collect();
    if all.is_empty() {
        return Err(Error::InvalidParameter("empty nonlinear sum".into()));
    }
    let grid = check_grids(&all)?;
    let n = padded_len(&grid);
    let mut w = [vec![0.0; n], vec![0.0; n]];
    for (a, b) in terms {
        accumulate_advection(&mut w, &to_physical(a), &gradient_physical(b));
    }
    Ok(project_leray(&from_physical(grid, &w[0], &w[1])))
}

/// `P_H((grad u)^T y)`, component `i` being `sum_j (d_i u_j) y_j`. This is the
/// adjoint of `x -> P_H(x . grad u)` on divergence-free fields.
pub fn gradient_transpose(u: &SpectralField, y: &SpectralField) -> Result<SpectralField> {
    let grid = check_grids(&[u, y])?;
    let gu = gradient_physical(u);
    let yp = to_physical(y);
    let n = padded_len(&grid);
    let mut w = [vec![0.0; n], vec![0.0; n]];
    for m in 0..n {
        // gu[j] = (d_1 u_j, d_2 u_j)
        w[0][m] = gu[0].0[m] * yp.0[m] + gu[1].0[m] * yp.1[m];
        w[1][m] = gu[0].1[m] * yp.0[m] + gu[1].1[m] * yp.1[m];
    }
    Ok(project_leray(&from_physical(grid, &w[0], &w[1])))
}

fn padded_len(grid: &Grid) -> usize {
    let (ph, pv) = grid.padded_size();
    ph * pv
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrilinearReport {
    /// `b(u, v, w)`.
    pub value: f64,
    /// `|u|_{H^{1,0}} |v|_{H^{1,1}} |w|_{L^2}`.
    pub bound_rhs: f64,
    /// `|value| / bound_rhs`, zero when the bound vanishes.
    pub ratio: f64,
}

pub fn trilinear(u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<TrilinearReport> {
    check_grids(&[u, v, w])?;
    let value = nonlinear_term(u, v)?.inner(w);
    let bound_rhs = aniso_norm(u, 1.0, 0.0) * aniso_norm(v, 1.0, 1.0) * aniso_norm(w, 0.0, 0.0);
    let ratio = if bound_rhs > 0.0 {
        value.abs() / bound_rhs
    } else {
        0.0
    };
    Ok(TrilinearReport {
        value,
        bound_rhs,
        ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub block: i32,
    /// `|<Delta_k(u . grad w), Delta_k w>|`.
    pub lhs: f64,
    /// `2^{-2ks}` times the four-term product bracket, unit constant.
    pub rhs: f64,
    pub ratio: f64,
}

/// Localized convection estimate in vertical block `k` with `s >= s0 > 1/2`.
pub fn commutator_diagnostic(
    u: &SpectralField,
    w: &SpectralField,
    k: i32,
    s: f64,
    s0: f64,
    part: &LittlewoodPaleyPartition,
) -> Result<CommutatorReport> {
    if s0 <= 0.5 {
        return Err(Error::InvalidParameter(format!("s0 = {s0} must exceed 1/2")));
    }
    if s < s0 {
        return Err(Error::InvalidParameter(format!("s = {s} must be >= s0 = {s0}")));
    }
    check_grids(&[u, w])?;
    let conv = advection(u, w)?;
    let lhs = lp_block(&conv, k, part)?.inner(&lp_block(w, k, part)?).abs();

    let d1u = derivative(u, Axis::X1, 1);
    let d1w = derivative(w, Axis::X1, 1);
    let n = |f: &SpectralField, a: f64, b: f64| aniso_norm(f, a, b);
    let bracket = n(u, 0.25, s0) * n(&d1w, 0.0, s)
        + n(u, 0.25, s) * n(&d1w, 0.0, s0)
        + n(&d1u, 0.0, s0) * n(w, 0.25, s)
        + n(&d1u, 0.0, s) * n(w, 0.25, s0);
    let rhs = 2f64.powf(-2.0 * k as f64 * s) * n(w, 0.25, s) * bracket;
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(CommutatorReport {
        block: k,
        lhs,
        rhs,
        ratio,
    })
}

/// Terms of the vertical-derivative convection estimate
/// `|<d2 u, d2(u . grad u)>| <= a |d1 d2 u|^2 + C (1 + |d1 u|^2) |d2 u|^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerticalConvectionReport {
    pub lhs: f64,
    /// `|d1 d2 u|^2`.
    pub dissipation: f64,
    /// `(1 + |d1 u|^2) |d2 u|^2`.
    pub growth: f64,
}

impl VerticalConvectionReport {
    /// Smallest `C` making the estimate hold for this field at the given `a`.
    pub fn required_constant(&self, a: f64) -> f64 {
        if self.growth > 0.0 {
            ((self.lhs - a * self.dissipation) / self.growth).max(0.0)
        } else if self.lhs <= a * self.dissipation {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

pub fn vertical_convection_diagnostic(u: &SpectralField) -> Result<VerticalConvectionReport> {
    let d2u = derivative(u, Axis::X2, 1);
    let conv = advection(u, u)?;
    let lhs = d2u.inner(&derivative(&conv, Axis::X2, 1)).abs();
    let d1u = derivative(u, Axis::X1, 1);
    let d12u = derivative(&d1u, Axis::X2, 1);
    Ok(VerticalConvectionReport {
        lhs,
        dissipation: d12u.norm_sq(),
        growth: (1.0 + d1u.norm_sq()) * d2u.norm_sq(),
    })
}
