//! Algebraic identities checked on random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::CheckResult;
use crate::dynamics::{integrate_deterministic, integrate_skeleton, IntegratorConfig};
use crate::error::Result;
use crate::forms::{advection, nonlinear_term};
use crate::noise::{make_noise_model, NoiseSpec};
use crate::ratefn::{control_cost, ControlPath};
use crate::spectral::{lp_block, project_leray, Grid, LittlewoodPaleyPartition, SpectralField};

/// Relative tolerance of every identity.
pub const IDENTITY_TOL: f64 = 1e-10;

fn worst(name: &str, ratios: impl Iterator<Item = f64>, instances: usize) -> CheckResult {
    let w = ratios.fold(0.0f64, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
    CheckResult::at_most(
        name,
        w,
        IDENTITY_TOL,
        format!("worst relative defect {w:.2e} over {instances} instances"),
    )
}

fn rel(defect: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        defect / scale
    } else {
        defect
    }
}

/// Runs every identity on `instances` random fields.
pub fn identity_battery(grid: Grid, instances: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let part = LittlewoodPaleyPartition::new(&grid);
    let (mut idem, mut orth, mut skew0, mut anti, mut lp) = (vec![], vec![], vec![], vec![], vec![]);
    for _ in 0..instances {
        let f = SpectralField::random(grid, &mut rng, 1.0);
        let p = project_leray(&f);
        idem.push(rel(project_leray(&p).sub(&p).norm(), p.norm()));
        orth.push(rel(f.sub(&p).inner(&p).abs(), f.norm_sq()));

        let u = SpectralField::random_solenoidal(grid, &mut rng, 1.5);
        let v = SpectralField::random_solenoidal(grid, &mut rng, 1.5);
        let w = SpectralField::random_solenoidal(grid, &mut rng, 1.5);
        let uv = advection(&u, &v)?;
        let uw = advection(&u, &w)?;
        skew0.push(rel(nonlinear_term(&u, &v)?.inner(&v).abs(), uv.norm() * v.norm()));
        let b_vw = nonlinear_term(&u, &v)?.inner(&w);
        let b_wv = nonlinear_term(&u, &w)?.inner(&v);
        anti.push(rel((b_vw + b_wv).abs(), uv.norm() * w.norm() + uw.norm() * v.norm()));

        let mut sum = SpectralField::zeros(grid);
        for j in -1..=part.j_max() {
            sum.axpy(1.0, &lp_block(&f, j, &part)?);
        }
        lp.push(rel(sum.sub(&f).norm(), f.norm()));
    }

    // Skeleton linearity around a short deterministic run.
    let cfg = IntegratorConfig::new(1e-3, 0.02)?;
    let noise = make_noise_model(&NoiseSpec::default(), grid)?;
    let u0 = SpectralField::random_solenoidal(grid, &mut rng, 2.0);
    let u0 = u0.scaled(1.0 / u0.norm().max(f64::MIN_POSITIVE));
    let det = integrate_deterministic(&u0, &cfg)?;
    let (mut lin, mut cost) = (vec![], vec![]);
    for _ in 0..instances {
        let p1 = ControlPath::random(&mut rng, cfg.dt, cfg.steps(), noise.dims());
        let p2 = ControlPath::random(&mut rng, cfg.dt, cfg.steps(), noise.dims());
        let (a, b): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let mut mix = p1.scaled(a);
        mix.axpy(b, &p2);
        let x1 = integrate_skeleton(&p1, &det, &noise, 0.0, &cfg)?;
        let x2 = integrate_skeleton(&p2, &det, &noise, 0.0, &cfg)?;
        let xm = integrate_skeleton(&mix, &det, &noise, 0.0, &cfg)?;
        let mut defect = 0.0f64;
        let mut scale = 0.0f64;
        for ((f1, f2), fm) in x1.fields.iter().zip(&x2.fields).zip(&xm.fields) {
            let mut l = f1.scaled(a);
            l.axpy(b, f2);
            defect = defect.max(l.sub(fm).norm());
            scale = scale.max(fm.norm());
        }
        lin.push(rel(defect, scale));

        let c: f64 = rng.gen_range(-3.0..3.0);
        let base = control_cost(&p1);
        cost.push(rel((control_cost(&p1.scaled(c)) - c * c * base).abs(), c * c * base));
    }

    let n = instances;
    Ok(vec![
        worst("projection-idempotence", idem.into_iter(), n),
        worst("projection-orthogonality", orth.into_iter(), n),
        worst("b(u,v,v)=0", skew0.into_iter(), n),
        worst("b(u,v,w)=-b(u,w,v)", anti.into_iter(), n),
        worst("lp-reconstruction", lp.into_iter(), n),
        worst("skeleton-linearity", lin.into_iter(), n),
        worst("cost-scaling", cost.into_iter(), n),
    ])
}
