//! Controls, their cost, and the constrained minimization defining the
//! moderate-deviation rate function.
//!
//! The skeleton map `phi -> X^phi` is linear, so the penalized problem
//! `min  0.5 |X^phi - g|_W^2 + rho cost(phi)` is quadratic. Each penalty stage
//! runs conjugate gradients with an Armijo backtracking line search whose
//! first trial is the exact minimizing step along the search direction. New
//! directions are conjugated against a window of stored ones, which keeps
//! convergence finite in floating point on the badly conditioned terminal
//! objective. `rho` shrinks tenfold per stage until the residual meets the
//! tolerance or stagnates.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, Equation, IntegratorConfig, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::forms::{gradient_transpose, nonlinear_term};
use crate::noise::NoiseModel;
use crate::spectral::{aniso_norm, SpectralField};
use crate::util::inf_f64;

/// Largest divergence ratio accepted for a target field.
pub const TARGET_DIVERGENCE_TOL: f64 = 1e-10;

/// Piecewise-constant control, one `l^2` vector of length `J` per time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    dt: f64,
    values: Vec<Vec<f64>>,
}

impl ControlPath {
    pub fn new(dt: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("control dt = {dt} must be positive")));
        }
        let dims = values.first().map_or(0, Vec::len);
        if let Some(bad) = values.iter().find(|v| v.len() != dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: bad.len(),
            });
        }
        if values.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("control has non-finite entries".into()));
        }
        Ok(ControlPath { dt, values })
    }

    pub fn zeros(dt: f64, steps: usize, dims: usize) -> Self {
        ControlPath {
            dt,
            values: vec![vec![0.0; dims]; steps],
        }
    }

    /// I.i.d. standard normal entries.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dt: f64, steps: usize, dims: usize) -> Self {
        ControlPath {
            dt,
            values: (0..steps)
                .map(|_| (0..dims).map(|_| rng.sample(StandardNormal)).collect())
                .collect(),
        }
    }

    pub fn constant(dt: f64, steps: usize, value: &[f64]) -> Self {
        ControlPath {
            dt,
            values: vec![value.to_vec(); steps],
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    pub fn dims(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn value(&self, n: usize) -> &[f64] {
        &self.values[n]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// `sum_n |phi_n|^2 dt`.
    pub fn l2_sq(&self) -> f64 {
        self.dot(self)
    }

    /// `sum_n <a_n, b_n> dt`.
    pub fn dot(&self, other: &ControlPath) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum::<f64>()
            * self.dt
    }

    /// Membership in `S_N = {sum |phi_n|^2 dt <= N}`.
    pub fn in_level(&self, n: f64) -> bool {
        self.l2_sq() <= n
    }

    pub fn scaled(&self, c: f64) -> ControlPath {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().flatten().for_each(|x| *x *= c);
    }

    pub fn axpy(&mut self, alpha: f64, other: &ControlPath) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().flatten().all(|&x| x == 0.0)
    }
}

/// `0.5 sum_n |phi_n|^2 dt` (left-endpoint quadrature).
pub fn control_cost(phi: &ControlPath) -> f64 {
    0.5 * phi.l2_sq()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// `|X_N - g_N|_H^2`.
    TerminalH,
    /// `sum_n |X_n - g_n|_H^2 dt`, `n = 0..=N`.
    #[default]
    PathL2H,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RateTarget {
    /// One field per time step, `steps + 1` entries.
    Path(Vec<SpectralField>),
    Terminal(SpectralField),
}

impl RateTarget {
    pub fn from_trajectory(t: &TrajectoryRecord) -> Result<Self> {
        if !t.is_dense() {
            return Err(Error::TrajectoryMismatch(
                "target trajectory must record every step".into(),
            ));
        }
        Ok(RateTarget::Path(t.fields.clone()))
    }

    fn fields(&self) -> &[SpectralField] {
        match self {
            RateTarget::Path(f) => f,
            RateTarget::Terminal(f) => std::slice::from_ref(f),
        }
    }
}

/// The skeleton map around a fixed deterministic trajectory together with a
/// target and a matching metric.
pub struct RateProblem<'a> {
    base: &'a [SpectralField],
    noise: &'a NoiseModel,
    cfg: IntegratorConfig,
    factors: Vec<f64>,
    /// `(step, weight, target)` of every matched time.
    targets: Vec<(usize, f64, SpectralField)>,
    target_norm_sq: f64,
}

impl<'a> RateProblem<'a> {
    pub fn new(
        u0_traj: &'a TrajectoryRecord,
        noise: &'a NoiseModel,
        cfg: &IntegratorConfig,
        target: &RateTarget,
        objective: Objective,
    ) -> Result<Self> {
        cfg.validate()?;
        let steps = cfg.steps();
        if !u0_traj.is_dense() || u0_traj.fields.len() != steps + 1 {
            return Err(Error::TrajectoryMismatch(format!(
                "deterministic trajectory must record all {} steps",
                steps + 1
            )));
        }
        let base = &u0_traj.fields[..];
        let grid = *base[0].grid();
        grid.ensure_same(noise.grid())?;
        for f in target.fields() {
            grid.ensure_same(f.grid())?;
            let r = f.divergence_ratio();
            if r > TARGET_DIVERGENCE_TOL {
                return Err(Error::NotSolenoidal(r));
            }
        }
        let targets: Vec<_> = match (target, objective) {
            (RateTarget::Terminal(g), Objective::TerminalH) => vec![(steps, 1.0, g.clone())],
            (RateTarget::Path(p), _) if p.len() != steps + 1 => {
                return Err(Error::TrajectoryMismatch(format!(
                    "target path has {} fields, need {}",
                    p.len(),
                    steps + 1
                )))
            }
            (RateTarget::Path(p), Objective::TerminalH) => vec![(steps, 1.0, p[steps].clone())],
            (RateTarget::Path(p), Objective::PathL2H) => p
                .iter()
                .enumerate()
                .map(|(n, g)| (n, cfg.dt, g.clone()))
                .collect(),
            (RateTarget::Terminal(_), Objective::PathL2H) => {
                return Err(Error::InvalidParameter(
                    "path objective needs a path target".into(),
                ))
            }
        };
        let target_norm_sq = targets.iter().map(|(_, w, g)| w * g.norm_sq()).sum();
        Ok(RateProblem {
            base,
            noise,
            factors: crate::dynamics::propagator(&grid, cfg.dt, 0.0),
            cfg: cfg.clone().with_record_every(1),
            targets,
            target_norm_sq,
        })
    }

    pub fn steps(&self) -> usize {
        self.cfg.steps()
    }

    pub fn dims(&self) -> usize {
        self.noise.dims()
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt
    }

    pub fn zero_control(&self) -> ControlPath {
        ControlPath::zeros(self.dt(), self.steps(), self.dims())
    }

    /// `X^phi` at every step.
    pub fn forward(&self, phi: &ControlPath) -> Result<Vec<SpectralField>> {
        let zero = SpectralField::zeros(*self.base[0].grid());
        let rec = integrate(
            Equation::Skeleton {
                base: self.base,
                noise: self.noise,
                control: phi,
                eps2: 0.0,
            },
            &zero,
            &self.cfg,
            None,
        )?;
        Ok(rec.fields)
    }

    /// `sum w_n |X_n - g_n|^2`.
    pub fn misfit(&self, x: &[SpectralField]) -> f64 {
        self.targets
            .iter()
            .map(|(n, w, g)| w * x[*n].sub(g).norm_sq())
            .sum()
    }

    /// Relative residual `sqrt(misfit / sum w_n |g_n|^2)`, absolute when the
    /// target vanishes.
    pub fn residual(&self, x: &[SpectralField]) -> f64 {
        let m = self.misfit(x).sqrt();
        if self.target_norm_sq > 0.0 {
            m / self.target_norm_sq.sqrt()
        } else {
            m
        }
    }

    /// `0.5 misfit + weight cost(phi)`.
    pub fn objective(&self, phi: &ControlPath, weight: f64) -> Result<f64> {
        let x = self.forward(phi)?;
        Ok(0.5 * self.misfit(&x) + weight * control_cost(phi))
    }

    /// Pulls per-step field sensitivities `dJ/dX_n` back to the control.
    fn adjoint(&self, mut seed: impl FnMut(usize) -> Option<SpectralField>) -> Result<ControlPath> {
        let steps = self.steps();
        let dt = self.dt();
        let grid = *self.base[0].grid();
        let mut grad = self.zero_control();
        let mut lambda = seed(steps).unwrap_or_else(|| SpectralField::zeros(grid));
        for n in (0..steps).rev() {
            let u = &self.base[n];
            let mut y = lambda;
            y.apply_diagonal(&self.factors);
            let g = self.noise.sigma_transpose(n as f64 * dt, u, &y);
            grad.values[n] = g.into_iter().map(|v| v * dt).collect();
            if n == 0 {
                break;
            }
            // (I + dt A_n^T) y with A_n^T y = -P((grad u)^T y) + P(u . grad y)
            let mut next = y.clone();
            next.axpy(-dt, &gradient_transpose(u, &y)?);
            next.axpy(dt, &nonlinear_term(u, &y)?);
            if let Some(s) = seed(n) {
                next.axpy(1.0, &s);
            }
            lambda = next;
        }
        Ok(grad)
    }

    fn misfit_gradient(&self, x: &[SpectralField]) -> Result<ControlPath> {
        self.weighted_adjoint(x, true)
    }

    /// `L^T W x`, or `L^T W (x - g)` when `residual` is set.
    fn weighted_adjoint(&self, x: &[SpectralField], residual: bool) -> Result<ControlPath> {
        self.adjoint(|n| {
            let mut acc: Option<SpectralField> = None;
            for (m, w, g) in &self.targets {
                if *m == n {
                    let r = if residual { x[n].sub(g) } else { x[n].clone() }.scaled(*w);
                    acc = Some(match acc {
                        Some(a) => a.add(&r),
                        None => r,
                    });
                }
            }
            acc
        })
    }

    /// `L^T y` for the map `phi -> X_n^phi` at one step `n`.
    fn terminal_adjoint(&self, n: usize, y: &SpectralField) -> Result<ControlPath> {
        let sub = RateProblem {
            base: &self.base[..=n],
            noise: self.noise,
            cfg: IntegratorConfig {
                t_final: n as f64 * self.dt(),
                ..self.cfg.clone()
            },
            factors: self.factors.clone(),
            targets: Vec::new(),
            target_norm_sq: 0.0,
        };
        let mut g = sub.adjoint(|m| (m == n).then(|| y.clone()))?;
        g.values.resize(self.steps(), vec![0.0; self.dims()]);
        Ok(g)
    }
}

/// Gradient of `0.5 |X^phi - g|_W^2 + weight cost(phi)` with respect to the
/// control entries, by the discrete adjoint of the skeleton scheme.
pub fn rate_gradient(problem: &RateProblem<'_>, phi: &ControlPath, weight: f64) -> Result<ControlPath> {
    check_control(problem, phi)?;
    let x = problem.forward(phi)?;
    let mut g = problem.misfit_gradient(&x)?;
    g.axpy(weight * phi.dt(), phi);
    Ok(g)
}

fn check_control(problem: &RateProblem<'_>, phi: &ControlPath) -> Result<()> {
    if phi.steps() != problem.steps() || phi.dims() != problem.dims() {
        return Err(Error::TrajectoryMismatch(format!(
            "control is {}x{}, problem needs {}x{}",
            phi.steps(),
            phi.dims(),
            problem.steps(),
            problem.dims()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateOptions {
    /// Cost weight of the first stage, relative to the estimated squared norm
    /// of the skeleton map.
    pub initial_weight: f64,
    /// Factor by which the penalty grows per stage.
    pub penalty_factor: f64,
    /// Residual at which the constraint counts as met.
    pub tolerance: f64,
    /// Conjugate-gradient iterations per stage.
    pub max_iters: usize,
    pub max_stages: usize,
    /// Number of past directions each new direction is conjugated against.
    pub conjugation_memory: usize,
    /// Stage stops when `|grad| <= gradient_tol |grad_0|`.
    pub gradient_tol: f64,
    /// A stage must shrink the residual by this factor, else the target is
    /// declared unreachable.
    pub stagnation_ratio: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            initial_weight: 1e-2,
            penalty_factor: 10.0,
            tolerance: 1e-6,
            max_iters: 600,
            max_stages: 24,
            conjugation_memory: 256,
            gradient_tol: 1e-13,
            stagnation_ratio: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub weight: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    /// `cost(minimizer)`, or `+inf` when the target is unreachable.
    #[serde(with = "inf_f64")]
    pub value: f64,
    pub minimizer: ControlPath,
    pub target_residual: f64,
    pub iterations: usize,
    pub feasible: bool,
    /// False if any accepted step increased the penalized objective.
    pub monotone: bool,
    pub stages: Vec<StageReport>,
}

impl RateResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Scratch state of one CG stage: control, its image, and the misfit.
struct Iterate {
    phi: ControlPath,
    x: Vec<SpectralField>,
}

fn lin_comb(a: &[SpectralField], alpha: f64, b: &[SpectralField]) -> Vec<SpectralField> {
    a.iter()
        .zip(b)
        .map(|(p, q)| {
            let mut r = p.clone();
            r.axpy(alpha, q);
            r
        })
        .collect()
}

/// Estimate of the rate function at the target of `problem`.
pub fn rate_function(problem: &RateProblem<'_>, opts: &RateOptions) -> Result<RateResult> {
    if !(opts.tolerance > 0.0 && opts.penalty_factor > 1.0 && opts.initial_weight > 0.0) {
        return Err(Error::InvalidParameter(
            "rate options need tolerance > 0, penalty_factor > 1, initial_weight > 0".into(),
        ));
    }
    let dt = problem.dt();
    let phi = problem.zero_control();
    let x = problem.forward(&phi)?;
    let mut it = Iterate { phi, x };
    // Scale the first weight by the curvature of the misfit along the first
    // gradient, a cheap estimate of the operator's squared norm.
    let g_first = problem.misfit_gradient(&it.x)?;
    let g_first_sq = g_first.l2_sq();
    let curvature = if g_first_sq > 0.0 {
        problem.misfit_dir(&problem.forward(&g_first)?) / g_first_sq
    } else {
        0.0
    };
    let mut weight = opts.initial_weight * curvature;
    let mut stages = Vec::new();
    let mut total = 0;
    let mut monotone = true;
    let mut residual = problem.residual(&it.x);

    let finish = |it: Iterate, residual, feasible, total, monotone, stages| RateResult {
        value: if feasible { control_cost(&it.phi) } else { f64::INFINITY },
        minimizer: it.phi,
        target_residual: residual,
        iterations: total,
        feasible,
        monotone,
        stages,
    };

    if residual <= opts.tolerance {
        return Ok(finish(it, residual, true, 0, true, stages));
    }
    if curvature == 0.0 {
        // The target is orthogonal to everything the controls can reach.
        return Ok(finish(it, residual, false, 0, true, stages));
    }
    for _ in 0..opts.max_stages {
        let j = |it: &Iterate| 0.5 * problem.misfit(&it.x) + weight * control_cost(&it.phi);
        let grad_of = |it: &Iterate| -> Result<ControlPath> {
            let mut g = problem.misfit_gradient(&it.x)?;
            g.axpy(weight * dt, &it.phi);
            Ok(g)
        };
        let mut g = grad_of(&it)?;
        let g0 = g.l2_sq().sqrt();
        let mut d = g.scaled(-1.0);
        // Previous directions with their images under the Hessian, for
        // explicit A-conjugation.
        let mut history: Vec<(ControlPath, ControlPath, f64)> = Vec::new();
        let mut iters = 0;
        let mut f = j(&it);
        while iters < opts.max_iters {
            let gn = g.l2_sq().sqrt();
            if gn == 0.0 || gn <= opts.gradient_tol * g0 {
                break;
            }
            // Entries are in the Euclidean metric; `dot` carries a dt factor.
            let mut slope = g.dot(&d) / dt;
            if slope >= 0.0 {
                history.clear();
                d = g.scaled(-1.0);
                slope = g.dot(&d) / dt;
            }
            let xd = problem.forward(&d)?;
            let curv = problem.misfit_dir(&xd) + weight * d.l2_sq();
            let mut alpha = if curv > 0.0 { -slope / curv } else { 1.0 };
            let mut accepted = None;
            for _ in 0..40 {
                let mut phi = it.phi.clone();
                phi.axpy(alpha, &d);
                let cand = Iterate {
                    x: lin_comb(&it.x, alpha, &xd),
                    phi,
                };
                let fc = j(&cand);
                if fc <= f + 1e-4 * alpha * slope {
                    accepted = Some((cand, fc));
                    break;
                }
                alpha *= 0.5;
            }
            iters += 1;
            let Some((cand, fc)) = accepted else { break };
            if fc > f {
                monotone = false;
            }
            let improvement = f - fc;
            it = cand;
            f = fc;
            g = grad_of(&it)?;
            if improvement <= f64::EPSILON * f.abs() {
                break;
            }
            let mut ad = problem.weighted_adjoint(&xd, false)?;
            ad.axpy(weight * dt, &d);
            let dad = d.dot(&ad);
            if history.len() == opts.conjugation_memory {
                history.remove(0);
            }
            if dad > 0.0 {
                history.push((d, ad, dad));
            }
            let mut next = g.scaled(-1.0);
            for (di, adi, dadi) in &history {
                next.axpy(g.dot(adi) / dadi, di);
            }
            d = next;
        }
        total += iters;
        // Recompute the image to shed drift from incremental updates.
        it.x = problem.forward(&it.phi)?;
        let new_residual = problem.residual(&it.x);
        stages.push(StageReport {
            weight,
            residual: new_residual,
            iterations: iters,
        });
        let stagnated = new_residual > opts.stagnation_ratio * residual && stages.len() > 2;
        residual = new_residual;
        if residual <= opts.tolerance {
            return Ok(finish(it, residual, true, total, monotone, stages));
        }
        if stagnated {
            break;
        }
        weight /= opts.penalty_factor;
    }
    Ok(finish(it, residual, false, total, monotone, stages))
}

impl RateProblem<'_> {
    /// `sum w_n |X_n|^2` of a direction image.
    fn misfit_dir(&self, xd: &[SpectralField]) -> f64 {
        self.targets.iter().map(|(n, w, _)| w * xd[*n].norm_sq()).sum()
    }
}

/// Images of sampled controls from `S_N` and their spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetProbe {
    pub level: f64,
    /// `sum |phi_n|^2 dt` of every sample.
    pub control_norms: Vec<f64>,
    /// `sup_t |X|_H` of every image.
    pub sup_h: Vec<f64>,
    /// `sup_t |X|^2_{H^{0,1}} + int |X|^2_{H^{1,1}} dt` of every image.
    pub apriori: Vec<f64>,
    /// Largest pairwise `sup_t |X - Y|_H`.
    pub diameter_sup_h: f64,
    /// Largest pairwise `(int |X - Y|^2_{H^{1,0}} dt)^{1/2}`.
    pub diameter_l2_h10: f64,
    pub max_apriori: f64,
    #[serde(skip)]
    pub images: Vec<Vec<SpectralField>>,
}

/// Samples controls in `S_N` (even indices on the boundary `sum |phi|^2 dt = N`,
/// odd indices inside) and maps them through the skeleton equation.
pub fn level_set_probe(
    u0_traj: &TrajectoryRecord,
    noise: &NoiseModel,
    cfg: &IntegratorConfig,
    level: f64,
    samples: usize,
    seed: u64,
) -> Result<LevelSetProbe> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::InvalidParameter(format!("level N = {level} must be >= 0")));
    }
    let zero = RateTarget::Terminal(SpectralField::zeros(*noise.grid()));
    let problem = RateProblem::new(u0_traj, noise, cfg, &zero, Objective::TerminalH)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = if level == 0.0 { 1 } else { samples.max(1) };
    let mut controls = Vec::with_capacity(count);
    for i in 0..count {
        let mut phi = ControlPath::random(&mut rng, cfg.dt, problem.steps(), problem.dims());
        let radius: f64 = if i % 2 == 0 { 1.0 } else { rng.gen::<f64>().sqrt() };
        let norm = phi.l2_sq().sqrt();
        let c = if norm > 0.0 { radius * level.sqrt() / norm } else { 0.0 };
        phi.scale(c);
        controls.push(phi);
    }
    let images = controls
        .iter()
        .map(|phi| problem.forward(phi))
        .collect::<Result<Vec<_>>>()?;
    let dt = cfg.dt;
    let apriori: Vec<f64> = images
        .iter()
        .map(|x| {
            let sup01 = x.iter().map(|f| aniso_norm(f, 0.0, 1.0).powi(2)).fold(0.0, f64::max);
            let int11: f64 = x.iter().map(|f| aniso_norm(f, 1.0, 1.0).powi(2) * dt).sum();
            sup01 + int11
        })
        .collect();
    let (mut d_sup, mut d_l2) = (0.0f64, 0.0f64);
    for a in 0..images.len() {
        for b in a + 1..images.len() {
            let (mut s, mut l) = (0.0f64, 0.0);
            for (p, q) in images[a].iter().zip(&images[b]) {
                let diff = p.sub(q);
                s = s.max(diff.norm());
                l += aniso_norm(&diff, 1.0, 0.0).powi(2) * dt;
            }
            d_sup = d_sup.max(s);
            d_l2 = d_l2.max(l.sqrt());
        }
    }
    Ok(LevelSetProbe {
        level,
        control_norms: controls.iter().map(ControlPath::l2_sq).collect(),
        sup_h: images
            .iter()
            .map(|x| x.iter().map(SpectralField::norm).fold(0.0, f64::max))
            .collect(),
        max_apriori: apriori.iter().copied().fold(0.0, f64::max),
        apriori,
        diameter_sup_h: d_sup,
        diameter_l2_h10: d_l2,
        images,
    })
}

/// `max_n s_n^2` over the sampled steps, where `s_n` is the largest singular
/// value of `phi -> X_n^phi` from controls with norm `(sum |phi_n|^2 dt)^{1/2}`
/// into `H`, estimated by power iteration.
pub fn skeleton_gain(
    u0_traj: &TrajectoryRecord,
    noise: &NoiseModel,
    cfg: &IntegratorConfig,
    times: &[usize],
    iterations: usize,
    seed: u64,
) -> Result<f64> {
    let zero = RateTarget::Terminal(SpectralField::zeros(*noise.grid()));
    let problem = RateProblem::new(u0_traj, noise, cfg, &zero, Objective::TerminalH)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s_max: f64 = 0.0;
    for &n in times {
        if n == 0 || n > problem.steps() {
            continue;
        }
        let mut phi = ControlPath::random(&mut rng, cfg.dt, problem.steps(), problem.dims());
        let mut s2 = 0.0;
        for _ in 0..iterations.max(1) {
            let norm = phi.l2_sq().sqrt();
            if norm == 0.0 {
                break;
            }
            phi.scale(1.0 / norm);
            let x = problem.forward(&phi)?;
            s2 = x[n].norm_sq();
            // Euclidean adjoint carries one dt; divide it out for the dt-metric.
            phi = problem.terminal_adjoint(n, &x[n])?;
            phi.scale(1.0 / cfg.dt);
        }
        s_max = s_max.max(s2);
    }
    Ok(s_max)
}

/// `inf { cost(phi) : max_n |X^phi_n|_H >= delta }` over the sampled steps,
/// i.e. `delta^2 / (2 gain)` with `gain` from [`skeleton_gain`].
pub fn tail_rate_from_gain(delta: f64, gain: f64) -> f64 {
    if delta == 0.0 {
        0.0
    } else if gain > 0.0 {
        delta * delta / (2.0 * gain)
    } else {
        f64::INFINITY
    }
}

pub fn tail_rate_bound(
    u0_traj: &TrajectoryRecord,
    noise: &NoiseModel,
    cfg: &IntegratorConfig,
    delta: f64,
    times: &[usize],
    iterations: usize,
    seed: u64,
) -> Result<f64> {
    if delta == 0.0 {
        return Ok(0.0);
    }
    let gain = skeleton_gain(u0_traj, noise, cfg, times, iterations, seed)?;
    Ok(tail_rate_from_gain(delta, gain))
}
