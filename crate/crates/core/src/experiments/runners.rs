use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::identities::identity_battery;
use super::report::{
    CheckResult, ExperimentKind, ExperimentReport, FitVariable, LevelStat, RunOutput, Series, TailCell,
};
use crate::dynamics::{
    energy_report, integrate, integrate_clt_limit, integrate_controlled, integrate_deterministic, ControlledParams,
    DeviationScale, EnergyReport, Equation, IntegratorConfig, TrajectoryRecord,
};
use crate::error::{Error, Result};
use crate::noise::{derive_seed, NoiseModel, WienerPath};
use crate::ratefn::{
    rate_function, skeleton_gain, tail_rate_from_gain, ControlPath, Objective, RateOptions, RateProblem, RateResult,
    RateTarget,
};
use crate::spectral::{aniso_norm, SpectralField};

/// Seed streams of [`derive_seed`].
const WIENER_STREAM: u64 = 1;
const CONTROL_STREAM: u64 = 2;
const GAIN_STREAM: u64 = 3;

/// Instances per identity in the invariant suite.
const IDENTITY_INSTANCES: usize = 100;
/// Largest admissible max/min ratio of a moment across the ladder.
const MOMENT_SPREAD: f64 = 10.0;

struct Context {
    cfg: ExperimentConfig,
    noise: NoiseModel,
    dense: IntegratorConfig,
    u0: SpectralField,
    det: TrajectoryRecord,
    seeds: Vec<u64>,
}

impl Context {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let noise = cfg.noise_model()?;
        let dense = cfg.integrator.clone().with_record_every(1);
        let u0 = cfg.initial.build(cfg.grid)?;
        let det = integrate_deterministic(&u0, &dense)?;
        let seeds = (0..cfg.mc.samples as u64)
            .map(|i| derive_seed(cfg.master_seed(), WIENER_STREAM, i))
            .collect();
        Ok(Context {
            cfg: cfg.clone(),
            noise,
            dense,
            u0,
            det,
            seeds,
        })
    }

    fn steps(&self) -> usize {
        self.dense.steps()
    }

    fn path(&self, i: usize) -> WienerPath {
        WienerPath::generate(self.seeds[i], self.dense.dt, self.noise.dims(), self.steps())
    }

    /// Primal run at `eps`, streaming every state to `obs`.
    fn primal(&self, eps: f64, path: &WienerPath, obs: &mut dyn FnMut(usize, &SpectralField) -> Result<()>) -> Result<()> {
        let cfg = self.dense.clone().with_record_every(self.steps());
        integrate(
            Equation::Primal {
                eps,
                noise: &self.noise,
                path,
                nonlinear: true,
            },
            &self.u0,
            &cfg,
            Some(obs),
        )
        .map(|_| ())
    }

    fn report(
        &self,
        kind: ExperimentKind,
        series: Vec<Series>,
        tail: Vec<TailCell>,
        checks: Vec<CheckResult>,
        diagnostics: Vec<String>,
    ) -> ExperimentReport {
        ExperimentReport {
            experiment: kind,
            config_hash: self.cfg.hash(),
            config: self.cfg.canonical(),
            master_seed: self.cfg.master_seed(),
            samples: self.cfg.mc.samples,
            sample_seeds: self.seeds.clone(),
            series,
            tail,
            checks,
            diagnostics,
        }
    }

    fn snapshots(&self) -> Result<Vec<(String, Vec<SpectralField>)>> {
        if !self.cfg.output.snapshots {
            return Ok(Vec::new());
        }
        let every = self.cfg.integrator.record_every;
        let thinned: Vec<SpectralField> = self
            .det
            .fields
            .iter()
            .enumerate()
            .filter(|(n, _)| n % every == 0 || *n == self.steps())
            .map(|(_, f)| f.clone())
            .collect();
        let mut out = vec![("deterministic".to_string(), thinned)];
        let path = self.path(0);
        for (k, &eps) in self.cfg.ladder.eps.iter().enumerate() {
            let mut last = None;
            let steps = self.steps();
            let res = self.primal(eps, &path, &mut |n, x| {
                if n == steps {
                    last = Some(x.clone());
                }
                Ok(())
            });
            if let (Ok(()), Some(f)) = (res, last) {
                out.push((format!("sample0_eps{k}"), vec![f]));
            }
        }
        Ok(out)
    }
}

/// Running `sup` and trapezoidal integral over a uniform time grid.
struct PathAcc {
    dt: f64,
    sup: f64,
    integral: f64,
    prev: Option<f64>,
}

impl PathAcc {
    fn new(dt: f64) -> Self {
        PathAcc {
            dt,
            sup: 0.0,
            integral: 0.0,
            prev: None,
        }
    }

    fn push(&mut self, sup_value: f64, integrand: f64) {
        self.sup = self.sup.max(sup_value);
        if let Some(p) = self.prev {
            self.integral += 0.5 * self.dt * (p + integrand);
        }
        self.prev = Some(integrand);
    }
}

/// Per-sample, per-level statistic vectors; `None` marks a failed sample.
type SampleStats = Vec<Vec<Option<f64>>>;

fn guarded(
    i: usize,
    eps: f64,
    width: usize,
    diags: &mut Vec<String>,
    f: impl FnOnce() -> Result<Vec<f64>>,
) -> Vec<Option<f64>> {
    match f() {
        Ok(v) if v.iter().all(|x| x.is_finite()) => v.into_iter().map(Some).collect(),
        Ok(v) => {
            diags.push(format!("sample {i}, eps {eps:e}: non-finite statistic {v:?}"));
            vec![None; width]
        }
        Err(e) => {
            diags.push(format!("sample {i}, eps {eps:e}: {e}"));
            vec![None; width]
        }
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs `per_sample` for every sample index on `threads` workers and returns
/// the results in index order, so the reduction never depends on scheduling.
fn fan_out<F>(threads: usize, samples: usize, per_sample: F) -> Result<(Vec<SampleStats>, Vec<String>, usize)>
where
    F: Fn(usize, &mut Vec<String>) -> Result<SampleStats> + Sync + Send,
{
    let pool = pool(threads)?;
    let used = pool.current_num_threads();
    let results: Vec<Result<(SampleStats, Vec<String>)>> = pool.install(|| {
        (0..samples)
            .into_par_iter()
            .map(|i| {
                let mut d = Vec::new();
                per_sample(i, &mut d).map(|s| (s, d))
            })
            .collect()
    });
    let mut stats = Vec::with_capacity(samples);
    let mut diags = Vec::new();
    for r in results {
        let (s, d) = r?;
        stats.push(s);
        diags.extend(d);
    }
    Ok((stats, diags, used))
}

fn levels(eps: &[f64], stats: &[SampleStats], which: usize) -> Vec<LevelStat> {
    eps.iter()
        .enumerate()
        .map(|(k, &e)| {
            let values: Vec<Option<f64>> = stats.iter().map(|s| s[k][which]).collect();
            LevelStat::from_values(e, &values)
        })
        .collect()
}

fn flag_failures(series: &[Series], diags: &mut Vec<String>) {
    for s in series {
        for l in &s.levels {
            if l.failures > 0 {
                diags.push(format!(
                    "{}: eps {:e} lost {} of {} samples",
                    s.name,
                    l.eps,
                    l.failures,
                    l.failures + l.count
                ));
            }
        }
    }
    diags.dedup();
}

/// Coupled differences `u^eps - u^0` on a ladder sharing one Wiener path per
/// sample: `sup_t |.|_H^2` and `sup_t |.|_H^2 + int |.|^2_{H^{1,0}}`.
pub fn run_clt_rate(cfg: &ExperimentConfig, threads: usize) -> Result<RunOutput> {
    let start = Instant::now();
    let ctx = Context::new(cfg)?;
    let eps = ctx.cfg.ladder.eps.clone();
    let dt = ctx.dense.dt;
    let (stats, mut diags, used) = fan_out(threads, ctx.cfg.mc.samples, |i, d| {
        let path = ctx.path(i);
        Ok(eps
            .iter()
            .map(|&e| {
                guarded(i, e, 2, d, || {
                    let mut acc = PathAcc::new(dt);
                    ctx.primal(e, &path, &mut |n, x| {
                        let diff = x.sub(&ctx.det.fields[n]);
                        acc.push(diff.norm_sq(), aniso_norm(&diff, 1.0, 0.0).powi(2));
                        Ok(())
                    })?;
                    Ok(vec![acc.sup, acc.sup + acc.integral])
                })
            })
            .collect())
    })?;
    let series = vec![
        Series::new(
            "sup_h",
            "E sup_t |u^eps - u^0|_H^2",
            levels(&eps, &stats, 0),
            Some(FitVariable::Eps),
        ),
        Series::new(
            "sup_h_plus_int_h10",
            "E [sup_t |u^eps - u^0|_H^2 + int |u^eps - u^0|^2_{H^{1,0}} dt]",
            levels(&eps, &stats, 1),
            Some(FitVariable::Eps),
        ),
    ];
    flag_failures(&series, &mut diags);
    if series.iter().all(|s| s.degenerate) {
        diags.push("all differences vanish; slope undefined (degenerate)".into());
    }
    Ok(RunOutput {
        report: ctx.report(ExperimentKind::CltRate, series, Vec::new(), Vec::new(), diags),
        runtime_seconds: start.elapsed().as_secs_f64(),
        threads: used,
        snapshots: ctx.snapshots()?,
    })
}

/// `V^eps = (u^eps - u^0)/sqrt(eps)` against the limit `V^0` driven by the same
/// path: `sup_t |V^eps - V^0|_H^2` and the same plus `int |.|^2_{H^{1,0}}`.
pub fn run_clt_limit(cfg: &ExperimentConfig, threads: usize) -> Result<RunOutput> {
    let start = Instant::now();
    let ctx = Context::new(cfg)?;
    let eps = ctx.cfg.ladder.eps.clone();
    let dt = ctx.dense.dt;
    let (stats, mut diags, used) = fan_out(threads, ctx.cfg.mc.samples, |i, d| {
        let path = ctx.path(i);
        let v0 = match integrate_clt_limit(&ctx.det, &ctx.noise, &path, &ctx.dense) {
            Ok(v) => v,
            Err(e) => {
                d.push(format!("sample {i}: limit equation failed: {e}"));
                return Ok(vec![vec![None; 2]; eps.len()]);
            }
        };
        Ok(eps
            .iter()
            .map(|&e| {
                guarded(i, e, 2, d, || {
                    let mut acc = PathAcc::new(dt);
                    let inv = 1.0 / e.sqrt();
                    ctx.primal(e, &path, &mut |n, x| {
                        let mut w = x.sub(&ctx.det.fields[n]).scaled(inv);
                        w.axpy(-1.0, &v0.fields[n]);
                        acc.push(w.norm_sq(), aniso_norm(&w, 1.0, 0.0).powi(2));
                        Ok(())
                    })?;
                    Ok(vec![acc.sup, acc.sup + acc.integral])
                })
            })
            .collect())
    })?;
    let series = vec![
        Series::new(
            "sup_h",
            "E sup_t |V^eps - V^0|_H^2",
            levels(&eps, &stats, 0),
            Some(FitVariable::SqrtEps),
        ),
        Series::new(
            "sup_h_plus_int_h10",
            "E [sup_t |V^eps - V^0|_H^2 + int |V^eps - V^0|^2_{H^{1,0}} dt]",
            levels(&eps, &stats, 1),
            Some(FitVariable::SqrtEps),
        ),
    ];
    flag_failures(&series, &mut diags);
    let mut checks = Vec::new();
    for s in &series {
        let means: Vec<f64> = s.levels.iter().map(|l| l.mean).collect();
        let decreasing = means.windows(2).all(|w| w[1] < w[0]);
        checks.push(CheckResult::flag(
            &format!("{}-decreasing", s.name),
            decreasing,
            format!("means {means:?}"),
        ));
        if let (Some(first), Some(last)) = (means.first(), means.last()) {
            checks.push(CheckResult::at_most(
                &format!("{}-tenfold-decay", s.name),
                last / first,
                0.1,
                format!("last/first = {:.3e}", last / first),
            ));
        }
    }
    Ok(RunOutput {
        report: ctx.report(ExperimentKind::CltLimit, series, Vec::new(), checks, diags),
        runtime_seconds: start.elapsed().as_secs_f64(),
        threads: used,
        snapshots: ctx.snapshots()?,
    })
}

/// Monte Carlo tail probabilities `P(sup_t |u^eps - u^0|_H >= delta sqrt(eps) lambda)`
/// with the transformed statistic `-lambda^{-2} log P`, a Chebyshev
/// cross-check from the second moment of the same samples, and optional
/// skeleton lower bounds.
pub fn run_mdp_tail(cfg: &ExperimentConfig, threads: usize) -> Result<RunOutput> {
    let start = Instant::now();
    let ctx = Context::new(cfg)?;
    let eps = ctx.cfg.ladder.eps.clone();
    let deltas = ctx.cfg.ladder.deltas.clone();
    let (stats, mut diags, used) = fan_out(threads, ctx.cfg.mc.samples, |i, d| {
        let path = ctx.path(i);
        Ok(eps
            .iter()
            .map(|&e| {
                guarded(i, e, 1, d, || {
                    let mut sup: f64 = 0.0;
                    ctx.primal(e, &path, &mut |n, x| {
                        sup = sup.max(x.sub(&ctx.det.fields[n]).norm_sq());
                        Ok(())
                    })?;
                    Ok(vec![sup])
                })
            })
            .collect())
    })?;
    let second = Series::new(
        "sup_h",
        "E sup_t |u^eps - u^0|_H^2",
        levels(&eps, &stats, 0),
        Some(FitVariable::Eps),
    );
    let gain = if ctx.cfg.ladder.rate_bounds {
        let stride = ctx.cfg.integrator.record_every.max(ctx.steps() / 10).max(1);
        let times: Vec<usize> = (stride..=ctx.steps()).step_by(stride).collect();
        Some(skeleton_gain(
            &ctx.det,
            &ctx.noise,
            &ctx.dense,
            &times,
            30,
            derive_seed(ctx.cfg.master_seed(), GAIN_STREAM, 0),
        )?)
    } else {
        None
    };

    let mut tail = Vec::new();
    for (k, &e) in eps.iter().enumerate() {
        let scale = DeviationScale::new(e, ctx.cfg.ladder.exponent)?;
        let lambda = scale.lambda();
        let sups: Vec<f64> = stats.iter().filter_map(|s| s[k][0]).collect();
        let m = sups.len();
        let lvl = &second.levels[k];
        for &delta in &deltas {
            let threshold = delta * scale.coupling();
            let hits = sups.iter().filter(|s| s.sqrt() >= threshold).count();
            let p = if m > 0 { hits as f64 / m as f64 } else { f64::NAN };
            let se = (p * (1.0 - p) / m as f64).sqrt();
            let transformed = if hits == 0 {
                f64::INFINITY
            } else if hits == m {
                0.0
            } else {
                -p.ln() / (lambda * lambda)
            };
            let (bound, bound_se) = if threshold > 0.0 {
                let t2 = threshold * threshold;
                (lvl.mean / t2, lvl.std_error / t2)
            } else {
                (f64::INFINITY, f64::INFINITY)
            };
            let slack = 3.0 * (se * se + bound_se * bound_se).sqrt();
            tail.push(TailCell {
                eps: e,
                delta,
                threshold,
                hits,
                count: m,
                probability: p,
                std_error: se,
                transformed,
                chebyshev_bound: bound,
                chebyshev_std_error: bound_se,
                chebyshev_consistent: !(p > bound + slack),
                rate_bound: gain.map(|g| tail_rate_from_gain(delta, g)),
            });
            if hits == 0 {
                diags.push(format!("eps {e:e}, delta {delta}: zero hits, rate reported as +inf"));
            }
        }
    }
    let monotone = eps.iter().all(|&e| {
        let row: Vec<f64> = tail.iter().filter(|c| c.eps == e).map(|c| c.transformed).collect();
        row.windows(2).all(|w| w[1] >= w[0])
    });
    let checks = vec![
        CheckResult::flag(
            "tail-monotone-in-delta",
            monotone,
            "transformed statistic nondecreasing in delta at every eps",
        ),
        CheckResult::flag(
            "chebyshev-consistent",
            tail.iter().all(|c| c.chebyshev_consistent),
            "empirical tail <= second-moment bound within 3 standard errors",
        ),
    ];
    let series = vec![second];
    flag_failures(&series, &mut diags);
    Ok(RunOutput {
        report: ctx.report(ExperimentKind::MdpTail, series, tail, checks, diags),
        runtime_seconds: start.elapsed().as_secs_f64(),
        threads: used,
        snapshots: ctx.snapshots()?,
    })
}

/// A control on the boundary of `S_N`: a random direction held constant in
/// time. White-noise controls of the same energy average out and barely move
/// the skeleton.
fn boundary_control(ctx: &Context, i: usize) -> ControlPath {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.cfg.master_seed(), CONTROL_STREAM, i as u64));
    let dir = ControlPath::random(&mut rng, ctx.dense.dt, 1, ctx.noise.dims());
    let mut v = ControlPath::constant(ctx.dense.dt, ctx.steps(), dir.value(0));
    let n = v.l2_sq().sqrt();
    if n > 0.0 {
        v.scale(ctx.cfg.ladder.control_level.sqrt() / n);
    }
    v
}

const MOMENTS: [(&str, &str); 4] = [
    ("energy", "E [sup_t |u^eps|_H^2 + 2 int |d1 u^eps|_H^2 dt]"),
    ("vertical", "E [sup_t |u^eps|^2_{H^{0,1}} + int |u^eps|^2_{H^{1,1}} dt]"),
    ("fluctuation", "E int |V^eps|_H^2 |V^eps|^2_{H^{1,0}} dt, V^eps = (u^eps - u^0)/sqrt(eps)"),
    (
        "controlled-weighted",
        "E [sup_t e^{-k g} |X^eps|^2_{H^{0,1}} + int e^{-k g} |X^eps|^2_{H^{1,1}} dt], g = int |d1 X^eps|^2",
    ),
];

/// Identity battery, energy balance, and boundedness of the moment
/// quantities across the ladder.
pub fn run_invariant_suite(cfg: &ExperimentConfig, threads: usize) -> Result<RunOutput> {
    let start = Instant::now();
    let ctx = Context::new(cfg)?;
    let eps = ctx.cfg.ladder.eps.clone();
    let dt = ctx.dense.dt;
    let k = ctx.cfg.ladder.weight_k;
    let (stats, mut diags, used) = fan_out(threads, ctx.cfg.mc.samples, |i, d| {
        let path = ctx.path(i);
        let v = boundary_control(&ctx, i);
        Ok(eps
            .iter()
            .map(|&e| {
                guarded(i, e, MOMENTS.len() + 1, d, || {
                    let mut energy = PathAcc::new(dt);
                    let mut vertical = PathAcc::new(dt);
                    let mut fluct = PathAcc::new(dt);
                    let mut div: f64 = 0.0;
                    let inv = 1.0 / e.sqrt();
                    ctx.primal(e, &path, &mut |n, x| {
                        let h = x.norm_sq();
                        energy.push(h, 2.0 * (aniso_norm(x, 1.0, 0.0).powi(2) - h));
                        vertical.push(aniso_norm(x, 0.0, 1.0).powi(2), aniso_norm(x, 1.0, 1.0).powi(2));
                        let w = x.sub(&ctx.det.fields[n]).scaled(inv);
                        fluct.push(0.0, w.norm_sq() * aniso_norm(&w, 1.0, 0.0).powi(2));
                        div = div.max(x.divergence_ratio());
                        Ok(())
                    })?;
                    let scale = DeviationScale::new(e, ctx.cfg.ladder.exponent)?;
                    let x = integrate_controlled(
                        &v,
                        ControlledParams::from(scale),
                        &ctx.det,
                        &ctx.noise,
                        &path,
                        &ctx.dense,
                    )?;
                    let r = energy_report(&x, k)?;
                    div = div.max(x.max_divergence_ratio);
                    Ok(vec![
                        energy.sup + energy.integral,
                        vertical.sup + vertical.integral,
                        fluct.integral,
                        r.weighted_sup_h01 + r.weighted_int_h11,
                        div,
                    ])
                })
            })
            .collect())
    })?;
    let series: Vec<Series> = MOMENTS
        .iter()
        .enumerate()
        .map(|(j, (name, desc))| Series::new(name, desc, levels(&eps, &stats, j), None))
        .collect();
    flag_failures(&series, &mut diags);

    let mut checks = identity_battery(ctx.cfg.grid, IDENTITY_INSTANCES, ctx.cfg.master_seed())?;
    checks.extend(balance_checks(&ctx)?);
    let max_div = stats
        .iter()
        .flat_map(|s| s.iter().map(|l| l[MOMENTS.len()].unwrap_or(0.0)))
        .fold(ctx.det.max_divergence_ratio, f64::max);
    checks.push(CheckResult::at_most(
        "divergence-free",
        max_div,
        1e-10,
        format!("largest max_k |k.u_k| / |u| over all states: {max_div:.2e}"),
    ));
    for s in &series {
        let finite = s.levels.iter().all(|l| l.mean.is_finite() && l.failures == 0);
        let spread = s.spread();
        checks.push(CheckResult::at_most(
            &format!("{}-bounded", s.name),
            if finite { spread } else { f64::INFINITY },
            MOMENT_SPREAD,
            format!("max/min across the ladder {spread:.3}"),
        ));
    }
    Ok(RunOutput {
        report: ctx.report(ExperimentKind::Invariants, series, Vec::new(), checks, diags),
        runtime_seconds: start.elapsed().as_secs_f64(),
        threads: used,
        snapshots: ctx.snapshots()?,
    })
}

/// The deterministic energy-balance residual must be `O(dt)`: halving the
/// step halves it.
fn balance_checks(ctx: &Context) -> Result<Vec<CheckResult>> {
    let coarse = energy_report(&ctx.det, ctx.cfg.ladder.weight_k)?;
    let fine = energy_report(&integrate_deterministic(&ctx.u0, &ctx.dense.refined(2).with_record_every(1))?, ctx.cfg.ladder.weight_k)?;
    let scale = coarse.sup_h.max(f64::MIN_POSITIVE);
    let mut out = Vec::new();
    if coarse.max_balance_residual <= 1e-12 * scale {
        out.push(CheckResult::at_most(
            "energy-balance-first-order",
            coarse.max_balance_residual / scale,
            1e-12,
            "balance exact to roundoff",
        ));
    } else {
        let ratio = coarse.max_balance_residual / fine.max_balance_residual;
        out.push(CheckResult {
            name: "energy-balance-first-order".into(),
            passed: (1.5..=2.5).contains(&ratio),
            value: ratio,
            threshold: 2.0,
            detail: format!(
                "residual {:.3e} at dt, {:.3e} at dt/2 (ratio {ratio:.3})",
                coarse.max_balance_residual, fine.max_balance_residual
            ),
        });
    }
    out.push(CheckResult::flag(
        "energy-nonincreasing",
        coarse.h_nonincreasing,
        "deterministic |u|_H never grows",
    ));
    let a_priori = [coarse.sup_h01, coarse.int_h11, coarse.sup_h02, coarse.int_h12];
    out.push(CheckResult::flag(
        "deterministic-a-priori-finite",
        a_priori.iter().all(|v| v.is_finite()),
        format!("sup H01, int H11, sup H02, int H12 = {a_priori:?}"),
    ));
    Ok(out)
}

/// One primal trajectory at `eps` (default: the first ladder level) driven by
/// sample 0's Wiener path.
pub struct Simulation {
    pub trajectory: TrajectoryRecord,
    pub energy: EnergyReport,
    pub eps: f64,
}

pub fn run_simulate(cfg: &ExperimentConfig, eps: Option<f64>) -> Result<Simulation> {
    let ctx = Context::new(cfg)?;
    let eps = eps.unwrap_or(ctx.cfg.ladder.eps[0]);
    let path = ctx.path(0);
    let trajectory = integrate(
        Equation::Primal {
            eps,
            noise: &ctx.noise,
            path: &path,
            nonlinear: true,
        },
        &ctx.u0,
        &ctx.cfg.integrator,
        None,
    )?;
    let energy = energy_report(&trajectory, ctx.cfg.ladder.weight_k)?;
    Ok(Simulation { trajectory, energy, eps })
}

/// Rate function of a stored target around the configured deterministic
/// trajectory. One field is a terminal target; `steps + 1` fields are a path.
pub fn run_rate_min(
    cfg: &ExperimentConfig,
    target: Vec<SpectralField>,
    objective: Option<Objective>,
    opts: &RateOptions,
) -> Result<RateResult> {
    let ctx = Context::new(cfg)?;
    let (target, objective) = match target.len() {
        1 => (
            RateTarget::Terminal(target.into_iter().next().expect("one field")),
            objective.unwrap_or(Objective::TerminalH),
        ),
        n if n == ctx.steps() + 1 => (RateTarget::Path(target), objective.unwrap_or_default()),
        n => {
            return Err(Error::TrajectoryMismatch(format!(
                "target file holds {n} fields; expected 1 (terminal) or {} (path)",
                ctx.steps() + 1
            )))
        }
    };
    let problem = RateProblem::new(&ctx.det, &ctx.noise, &ctx.dense, &target, objective)?;
    rate_function(&problem, opts)
}
