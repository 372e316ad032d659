//! Padded 2D FFTs between retained Fourier coefficients and physical samples.
//!
//! Physical samples live on a `p_h x p_v` grid, `x = 2*pi*j/p`. With
//! `u(x) = sum_k u_k e^{ik.x}` the inverse map is an unnormalized inverse DFT and
//! the forward map divides by `p_h * p_v`. Two real scalar fields are packed into
//! one complex transform.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Grid;

pub(crate) struct Transform {
    ph: usize,
    pv: usize,
    h_fwd: Arc<dyn Fft<f64>>,
    h_inv: Arc<dyn Fft<f64>>,
    v_fwd: Arc<dyn Fft<f64>>,
    v_inv: Arc<dyn Fft<f64>>,
}

thread_local! {
    static CACHE: RefCell<HashMap<(usize, usize), Rc<Transform>>> = RefCell::new(HashMap::new());
}

/// Runs `f` with the cached transform for the padded size of `grid`.
pub(crate) fn with_transform<R>(grid: &Grid, f: impl FnOnce(&Transform) -> R) -> R {
    let key = grid.padded_size();
    let t = CACHE.with(|c| {
        c.borrow_mut()
            .entry(key)
            .or_insert_with(|| Rc::new(Transform::new(key.0, key.1)))
            .clone()
    });
    f(&t)
}

impl Transform {
    fn new(ph: usize, pv: usize) -> Self {
        let mut planner = FftPlanner::new();
        Transform {
            ph,
            pv,
            h_fwd: planner.plan_fft_forward(ph),
            h_inv: planner.plan_fft_inverse(ph),
            v_fwd: planner.plan_fft_forward(pv),
            v_inv: planner.plan_fft_inverse(pv),
        }
    }

    fn fft2(&self, buf: &mut Vec<Complex64>, forward: bool) {
        let (ph, pv) = (self.ph, self.pv);
        let (fv, fh) = if forward {
            (&self.v_fwd, &self.h_fwd)
        } else {
            (&self.v_inv, &self.h_inv)
        };
        fv.process(buf);
        let mut t = vec![Complex64::new(0.0, 0.0); ph * pv];
        for i in 0..ph {
            for j in 0..pv {
                t[j * ph + i] = buf[i * pv + j];
            }
        }
        fh.process(&mut t);
        for i in 0..ph {
            for j in 0..pv {
                buf[i * pv + j] = t[j * ph + i];
            }
        }
    }

    #[inline]
    fn slot(&self, k1: i64, k2: i64) -> usize {
        let i = k1.rem_euclid(self.ph as i64) as usize;
        let j = k2.rem_euclid(self.pv as i64) as usize;
        i * self.pv + j
    }

    /// Physical samples of two real scalar fields given their coefficients.
    pub(crate) fn inverse_pair(
        &self,
        grid: &Grid,
        a: &[Complex64],
        b: &[Complex64],
    ) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::new(0.0, 1.0);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.ph * self.pv];
        for idx in 0..grid.len() {
            let (k1, k2) = grid.wavenumber(idx);
            buf[self.slot(k1, k2)] = a[idx] + i * b[idx];
        }
        self.fft2(&mut buf, false);
        buf.iter().map(|z| (z.re, z.im)).unzip()
    }

    /// Retained coefficients of two real scalar fields given physical samples.
    pub(crate) fn forward_pair(
        &self,
        grid: &Grid,
        a: &[f64],
        b: &[f64],
    ) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut buf: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| Complex64::new(x, y))
            .collect();
        self.fft2(&mut buf, true);
        let norm = 1.0 / (self.ph * self.pv) as f64;
        let half_i = Complex64::new(0.0, -0.5);
        let mut out_a = Vec::with_capacity(grid.len());
        let mut out_b = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let (k1, k2) = grid.wavenumber(idx);
            let f = buf[self.slot(k1, k2)] * norm;
            let g = buf[self.slot(-k1, -k2)].conj() * norm;
            out_a.push((f + g) * 0.5);
            out_b.push((f - g) * half_i);
        }
        (out_a, out_b)
    }
}
