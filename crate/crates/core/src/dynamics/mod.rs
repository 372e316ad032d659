//! Time integrators for the primal, deterministic, limit, scaled, controlled
//! and skeleton equations.
//!
//! Every scheme has the form `x_{n+1} = E(dt) [x_n + D_n(x_n)]` where `E(dt)`
//! multiplies mode `k` by `exp(-(k1^2 + eps2 k2^2) dt)` and `D_n` collects the
//! explicit convection, the control drift and the Euler-Maruyama noise
//! increment.

mod energy;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forms::{nonlinear_sum, nonlinear_term};
use crate::noise::{NoiseModel, WienerPath};
use crate::ratefn::ControlPath;
use crate::spectral::{aniso_norm, Grid, SpectralField};

pub use energy::{energy_report, EnergyReport};

/// Norm above which a run is declared blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

/// The pair `(eps, lambda(eps) = eps^{-a})` with `a` strictly inside `(0, 1/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationScale {
    eps: f64,
    exponent: f64,
}

impl DeviationScale {
    pub fn new(eps: f64, exponent: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
        }
        if exponent <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "scale exponent {exponent} <= 0 is the central-limit regime, not a moderate deviation"
            )));
        }
        if exponent >= 0.5 {
            return Err(Error::InvalidParameter(format!(
                "scale exponent {exponent} >= 1/2 is the large-deviation regime, not a moderate deviation"
            )));
        }
        Ok(DeviationScale { eps, exponent })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// `lambda(eps) = eps^{-a}`.
    pub fn lambda(&self) -> f64 {
        self.eps.powf(-self.exponent)
    }

    /// `sqrt(eps) lambda(eps) = eps^{1/2 - a}`.
    pub fn coupling(&self) -> f64 {
        self.eps.sqrt() * self.lambda()
    }
}

/// Normalization of `u^eps - u^0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scaling {
    /// `(u^eps - u^0) / sqrt(eps)`.
    Clt { eps: f64 },
    /// `(u^eps - u^0) / (sqrt(eps) lambda(eps))`.
    Moderate(DeviationScale),
}

impl Scaling {
    pub fn eps(&self) -> f64 {
        match self {
            Scaling::Clt { eps } => *eps,
            Scaling::Moderate(s) => s.eps(),
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Scaling::Clt { .. } => 1.0,
            Scaling::Moderate(s) => s.lambda(),
        }
    }

    /// `sqrt(eps) lambda`.
    pub fn denominator(&self) -> f64 {
        self.eps().sqrt() * self.lambda()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    SemiImplicitEm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_final: f64) -> Result<Self> {
        let c = IntegratorConfig {
            dt,
            t_final,
            scheme: Scheme::SemiImplicitEm,
            record_every: 1,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final = {} must be positive", self.t_final)));
        }
        let n = (self.t_final / self.dt).round();
        if n < 1.0 || (n * self.dt - self.t_final).abs() > 1e-12 * self.t_final.max(1.0) {
            return Err(Error::Config(format!(
                "dt = {} does not divide t_final = {}",
                self.dt, self.t_final
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        hash_json(self)
    }

    /// Same horizon with `factor` times smaller steps.
    pub fn refined(&self, factor: usize) -> Self {
        IntegratorConfig {
            dt: self.dt / factor as f64,
            record_every: self.record_every * factor,
            ..self.clone()
        }
    }
}

pub(crate) fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Squared norms of one snapshot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormSample {
    pub time: f64,
    /// `|u|_H^2`.
    pub h: f64,
    pub h10: f64,
    pub h01: f64,
    pub h11: f64,
    pub h02: f64,
    pub h12: f64,
}

impl NormSample {
    pub fn of(time: f64, f: &SpectralField) -> Self {
        let n = |s, sp| aniso_norm(f, s, sp).powi(2);
        NormSample {
            time,
            h: f.norm_sq(),
            h10: n(1.0, 0.0),
            h01: n(0.0, 1.0),
            h11: n(1.0, 1.0),
            h02: n(0.0, 2.0),
            h12: n(1.0, 2.0),
        }
    }

    /// `|d1 u|_H^2 = |u|^2_{H^{1,0}} - |u|^2_H`.
    pub fn d1(&self) -> f64 {
        (self.h10 - self.h).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub fields: Vec<SpectralField>,
    pub norms: Vec<NormSample>,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub dt: f64,
    pub record_every: usize,
    /// Largest `max_k |k.u_k| / |u|` over recorded fields.
    pub max_divergence_ratio: f64,
    /// Largest explicit-convection CFL bound `dt (K1 |u1|_l1 + K2 |u2|_l1)`.
    pub max_cfl: f64,
}

#[derive(Serialize)]
struct NormsExport<'a> {
    seed: Option<u64>,
    config_hash: &'a str,
    dt: f64,
    record_every: usize,
    max_divergence_ratio: f64,
    max_cfl: f64,
    norms: &'a [NormSample],
}

impl TrajectoryRecord {
    pub fn grid(&self) -> Option<&Grid> {
        self.fields.first().map(|f| f.grid())
    }

    pub fn last(&self) -> Option<&SpectralField> {
        self.fields.last()
    }

    /// True when every step is recorded.
    pub fn is_dense(&self) -> bool {
        self.record_every == 1
    }

    /// JSON export of the recorded norms.
    pub fn norms_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&NormsExport {
            seed: self.seed,
            config_hash: &self.config_hash,
            dt: self.dt,
            record_every: self.record_every,
            max_divergence_ratio: self.max_divergence_ratio,
            max_cfl: self.max_cfl,
            norms: &self.norms,
        })?)
    }

    /// CSV export of the recorded norms.
    pub fn norms_csv(&self) -> String {
        let mut s = String::from("time,h,h10,h01,h11,h02,h12\n");
        for n in &self.norms {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                n.time, n.h, n.h10, n.h01, n.h11, n.h02, n.h12
            ));
        }
        s
    }
}

/// Exact propagator `exp(-(k1^2 + eps2 k2^2) dt)` per mode.
pub fn propagator(grid: &Grid, dt: f64, eps2: f64) -> Vec<f64> {
    (0..grid.len())
        .map(|idx| {
            let (k1, k2) = grid.wavenumber(idx);
            (-((k1 * k1) as f64 + eps2 * (k2 * k2) as f64) * dt).exp()
        })
        .collect()
}

fn cfl(f: &SpectralField, dt: f64) -> f64 {
    let (a, b) = f
        .coeffs()
        .iter()
        .fold((0.0, 0.0), |(a, b), c| (a + c[0].norm(), b + c[1].norm()));
    let g = f.grid();
    dt * (g.kmax_h() as f64 * a + g.kmax_v() as f64 * b)
}

/// Equation selector for [`integrate`].
#[derive(Clone, Copy)]
pub enum Equation<'a> {
    /// `du = d1^2 u dt - B(u) dt`.
    Deterministic,
    /// `du = d1^2 u dt - B(u) dt + sqrt(eps) sigma(t,u) dW`; `nonlinear = false`
    /// drops `B` (test hook).
    Primal {
        eps: f64,
        noise: &'a NoiseModel,
        path: &'a WienerPath,
        nonlinear: bool,
    },
    /// `dV = d1^2 V dt - B(V,u0) dt - B(u0,V) dt + sigma(t,u0) dW`.
    CltLimit {
        base: &'a [SpectralField],
        noise: &'a NoiseModel,
        path: &'a WienerPath,
    },
    /// `dX = d1^2 X dt + eps2 d2^2 X dt - B(X,u0) dt - B(u0,X) dt + sigma(t,u0) phi dt`.
    Skeleton {
        base: &'a [SpectralField],
        noise: &'a NoiseModel,
        control: &'a ControlPath,
        eps2: f64,
    },
    /// With `y = u0 + coupling X`:
    /// `dX = d1^2 X dt - B(X,y) dt - B(u0,X) dt + sigma(t,y) v dt + noise_scale sigma(t,y) dW`.
    Controlled {
        base: &'a [SpectralField],
        noise: &'a NoiseModel,
        control: Option<&'a ControlPath>,
        path: &'a WienerPath,
        coupling: f64,
        noise_scale: f64,
    },
}

impl Equation<'_> {
    fn eps2(&self) -> f64 {
        match self {
            Equation::Skeleton { eps2, .. } => *eps2,
            _ => 0.0,
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Equation::Primal { path, .. }
            | Equation::CltLimit { path, .. }
            | Equation::Controlled { path, .. } => Some(path.seed()),
            _ => None,
        }
    }

    fn check(&self, steps: usize, dt: f64, grid: &Grid) -> Result<()> {
        let check_path = |path: &WienerPath, noise: &NoiseModel| -> Result<()> {
            if path.steps() != steps || (path.dt() - dt).abs() > 1e-15 * dt.max(1.0) {
                return Err(Error::TrajectoryMismatch(format!(
                    "Wiener path has {} steps of {}, config needs {steps} of {dt}",
                    path.steps(),
                    path.dt()
                )));
            }
            if path.dims() != noise.dims() {
                return Err(Error::DimensionMismatch {
                    expected: noise.dims(),
                    actual: path.dims(),
                });
            }
            grid.ensure_same(noise.grid())
        };
        let check_base = |base: &[SpectralField]| -> Result<()> {
            if base.len() != steps + 1 {
                return Err(Error::TrajectoryMismatch(format!(
                    "base trajectory has {} snapshots, need every step ({})",
                    base.len(),
                    steps + 1
                )));
            }
            grid.ensure_same(base[0].grid())
        };
        let check_control = |c: &ControlPath, noise: &NoiseModel| -> Result<()> {
            if c.steps() != steps || c.dims() != noise.dims() {
                return Err(Error::TrajectoryMismatch(format!(
                    "control is {}x{}, need {steps}x{}",
                    c.steps(),
                    c.dims(),
                    noise.dims()
                )));
            }
            Ok(())
        };
        match *self {
            Equation::Deterministic => Ok(()),
            Equation::Primal { eps, noise, path, .. } => {
                if !(eps >= 0.0) {
                    return Err(Error::InvalidParameter(format!("eps = {eps} must be >= 0")));
                }
                check_path(path, noise)
            }
            Equation::CltLimit { base, noise, path } => {
                check_base(base)?;
                check_path(path, noise)
            }
            Equation::Skeleton {
                base,
                noise,
                control,
                eps2,
            } => {
                if !(eps2 >= 0.0) {
                    return Err(Error::InvalidParameter(format!("eps2 = {eps2} must be >= 0")));
                }
                check_base(base)?;
                grid.ensure_same(noise.grid())?;
                check_control(control, noise)
            }
            Equation::Controlled {
                base,
                noise,
                control,
                path,
                ..
            } => {
                check_base(base)?;
                check_path(path, noise)?;
                match control {
                    Some(c) => check_control(c, noise),
                    None => Ok(()),
                }
            }
        }
    }

    /// `D_n(x)` at step `n`.
    fn increment(&self, n: usize, dt: f64, x: &SpectralField) -> Result<SpectralField> {
        let t = n as f64 * dt;
        match *self {
            Equation::Deterministic => Ok(nonlinear_term(x, x)?.scaled(-dt)),
            Equation::Primal {
                eps,
                noise,
                path,
                nonlinear,
            } => {
                let mut d = if nonlinear {
                    nonlinear_term(x, x)?.scaled(-dt)
                } else {
                    SpectralField::zeros(*x.grid())
                };
                if eps > 0.0 {
                    noise.add_sigma(t, x, path.increment(n), eps.sqrt(), &mut d);
                }
                Ok(d)
            }
            Equation::CltLimit { base, noise, path } => {
                let u = &base[n];
                let mut d = nonlinear_sum(&[(x, u), (u, x)])?.scaled(-dt);
                noise.add_sigma(t, u, path.increment(n), 1.0, &mut d);
                Ok(d)
            }
            Equation::Skeleton {
                base,
                noise,
                control,
                ..
            } => {
                let u = &base[n];
                let mut d = nonlinear_sum(&[(x, u), (u, x)])?.scaled(-dt);
                noise.add_sigma(t, u, control.value(n), dt, &mut d);
                Ok(d)
            }
            Equation::Controlled {
                base,
                noise,
                control,
                path,
                coupling,
                noise_scale,
            } => {
                let u = &base[n];
                let y = if coupling == 0.0 {
                    u.clone()
                } else {
                    let mut y = u.clone();
                    y.axpy(coupling, x);
                    y
                };
                let mut d = nonlinear_sum(&[(x, &y), (u, x)])?.scaled(-dt);
                if let Some(c) = control {
                    noise.add_sigma(t, &y, c.value(n), dt, &mut d);
                }
                if noise_scale != 0.0 {
                    noise.add_sigma(t, &y, path.increment(n), noise_scale, &mut d);
                }
                Ok(d)
            }
        }
    }
}

/// Integrates `eq` from `x0`, calling `observer(n, x_n)` at every step
/// `n = 0..=steps` and storing every `record_every`-th snapshot (and the last).
pub fn integrate(
    eq: Equation<'_>,
    x0: &SpectralField,
    cfg: &IntegratorConfig,
    mut observer: Option<&mut dyn FnMut(usize, &SpectralField) -> Result<()>>,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let grid = *x0.grid();
    let steps = cfg.steps();
    let dt = cfg.dt;
    eq.check(steps, dt, &grid)?;
    let factors = propagator(&grid, dt, eq.eps2());

    let mut rec = TrajectoryRecord {
        times: Vec::new(),
        fields: Vec::new(),
        norms: Vec::new(),
        seed: eq.seed(),
        config_hash: cfg.hash(),
        dt,
        record_every: cfg.record_every,
        max_divergence_ratio: 0.0,
        max_cfl: 0.0,
    };
    let record = |n: usize, x: &SpectralField, rec: &mut TrajectoryRecord| {
        let t = n as f64 * dt;
        rec.times.push(t);
        rec.norms.push(NormSample::of(t, x));
        rec.max_divergence_ratio = rec.max_divergence_ratio.max(x.divergence_ratio());
        rec.fields.push(x.clone());
    };

    let mut x = x0.clone();
    record(0, &x, &mut rec);
    if let Some(obs) = observer.as_mut() {
        obs(0, &x)?;
    }
    for n in 0..steps {
        rec.max_cfl = rec.max_cfl.max(cfl(&x, dt));
        let d = eq.increment(n, dt, &x)?;
        let solenoidal = x.is_solenoidal() && d.is_solenoidal();
        x.axpy(1.0, &d);
        x.apply_diagonal(&factors);
        x.set_solenoidal(solenoidal);
        let norm = x.norm();
        if !norm.is_finite() || norm > BLOWUP_THRESHOLD {
            return Err(Error::BlowUp {
                time: (n + 1) as f64 * dt,
                quantity: "|u|_H",
                value: norm,
            });
        }
        if let Some(obs) = observer.as_mut() {
            obs(n + 1, &x)?;
        }
        if (n + 1) % cfg.record_every == 0 || n + 1 == steps {
            record(n + 1, &x, &mut rec);
        }
    }
    Ok(rec)
}

pub fn integrate_deterministic(u0: &SpectralField, cfg: &IntegratorConfig) -> Result<TrajectoryRecord> {
    integrate(Equation::Deterministic, u0, cfg, None)
}

pub fn integrate_primal(
    u0: &SpectralField,
    eps: f64,
    noise: &NoiseModel,
    path: &WienerPath,
    cfg: &IntegratorConfig,
) -> Result<TrajectoryRecord> {
    integrate(
        Equation::Primal {
            eps,
            noise,
            path,
            nonlinear: true,
        },
        u0,
        cfg,
        None,
    )
}

fn dense_base<'a>(traj: &'a TrajectoryRecord, cfg: &IntegratorConfig) -> Result<&'a [SpectralField]> {
    if !traj.is_dense() || traj.fields.len() != cfg.steps() + 1 || (traj.dt - cfg.dt).abs() > 1e-15 {
        return Err(Error::TrajectoryMismatch(format!(
            "deterministic trajectory must record every step of dt = {} ({} snapshots), got {} of dt = {} every {}",
            cfg.dt,
            cfg.steps() + 1,
            traj.fields.len(),
            traj.dt,
            traj.record_every
        )));
    }
    Ok(&traj.fields)
}

pub fn integrate_clt_limit(
    u0_traj: &TrajectoryRecord,
    noise: &NoiseModel,
    path: &WienerPath,
    cfg: &IntegratorConfig,
) -> Result<TrajectoryRecord> {
    let base = dense_base(u0_traj, cfg)?;
    let zero = SpectralField::zeros(*base[0].grid());
    integrate(Equation::CltLimit { base, noise, path }, &zero, cfg, None)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScaledMode {
    /// Coupled difference `(u^eps - u^0) / (sqrt(eps) lambda)`.
    #[default]
    Difference,
    /// Direct integration of the scaled equation.
    Direct,
}

pub fn integrate_scaled(
    u0: &SpectralField,
    scaling: Scaling,
    noise: &NoiseModel,
    path: &WienerPath,
    cfg: &IntegratorConfig,
    mode: ScaledMode,
) -> Result<TrajectoryRecord> {
    let eps = scaling.eps();
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
    }
    let dense = cfg.clone().with_record_every(1);
    let det = integrate_deterministic(u0, &dense)?;
    let denom = scaling.denominator();
    match mode {
        ScaledMode::Difference => {
            let primal = integrate_primal(u0, eps, noise, path, &dense)?;
            let diffs: Vec<SpectralField> = primal
                .fields
                .iter()
                .zip(&det.fields)
                .map(|(a, b)| a.sub(b).scaled(1.0 / denom))
                .collect();
            Ok(thin(&diffs, cfg, path.seed()))
        }
        ScaledMode::Direct => {
            let zero = SpectralField::zeros(*u0.grid());
            integrate(
                Equation::Controlled {
                    base: &det.fields,
                    noise,
                    control: None,
                    path,
                    coupling: denom,
                    noise_scale: 1.0 / scaling.lambda(),
                },
                &zero,
                cfg,
                None,
            )
        }
    }
}

fn thin(fields: &[SpectralField], cfg: &IntegratorConfig, seed: u64) -> TrajectoryRecord {
    let steps = fields.len() - 1;
    let mut rec = TrajectoryRecord {
        times: Vec::new(),
        fields: Vec::new(),
        norms: Vec::new(),
        seed: Some(seed),
        config_hash: cfg.hash(),
        dt: cfg.dt,
        record_every: cfg.record_every,
        max_divergence_ratio: 0.0,
        max_cfl: 0.0,
    };
    for (n, f) in fields.iter().enumerate() {
        if n % cfg.record_every == 0 || n == steps {
            let t = n as f64 * cfg.dt;
            rec.times.push(t);
            rec.norms.push(NormSample::of(t, f));
            rec.max_divergence_ratio = rec.max_divergence_ratio.max(f.divergence_ratio());
            rec.fields.push(f.clone());
        }
    }
    rec
}

pub fn integrate_skeleton(
    phi: &ControlPath,
    u0_traj: &TrajectoryRecord,
    noise: &NoiseModel,
    eps2: f64,
    cfg: &IntegratorConfig,
) -> Result<TrajectoryRecord> {
    let base = dense_base(u0_traj, cfg)?;
    let zero = SpectralField::zeros(*base[0].grid());
    integrate(
        Equation::Skeleton {
            base,
            noise,
            control: phi,
            eps2,
        },
        &zero,
        cfg,
        None,
    )
}

/// Strength parameters of the controlled equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlledParams {
    /// `sqrt(eps) lambda(eps)`.
    pub coupling: f64,
    /// `lambda(eps)^{-1}`.
    pub noise_scale: f64,
}

impl From<DeviationScale> for ControlledParams {
    fn from(s: DeviationScale) -> Self {
        ControlledParams {
            coupling: s.coupling(),
            noise_scale: 1.0 / s.lambda(),
        }
    }
}

pub fn integrate_controlled(
    v: &ControlPath,
    params: ControlledParams,
    u0_traj: &TrajectoryRecord,
    noise: &NoiseModel,
    path: &WienerPath,
    cfg: &IntegratorConfig,
) -> Result<TrajectoryRecord> {
    let base = dense_base(u0_traj, cfg)?;
    let zero = SpectralField::zeros(*base[0].grid());
    integrate(
        Equation::Controlled {
            base,
            noise,
            control: Some(v),
            path,
            coupling: params.coupling,
            noise_scale: params.noise_scale,
        },
        &zero,
        cfg,
        None,
    )
}
