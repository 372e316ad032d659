use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::spectral::{write_fields_binary, SpectralField};
use crate::util::inf_f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CltRate,
    CltLimit,
    MdpTail,
    Invariants,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CltRate => "clt-rate",
            ExperimentKind::CltLimit => "clt-limit",
            ExperimentKind::MdpTail => "mdp-tail",
            ExperimentKind::Invariants => "invariants",
        }
    }
}

/// Sample mean and standard error at one noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStat {
    pub eps: f64,
    #[serde(with = "inf_f64")]
    pub mean: f64,
    #[serde(with = "inf_f64")]
    pub std_error: f64,
    /// Samples that entered the mean.
    pub count: usize,
    /// Samples dropped after a blow-up or a non-finite value.
    pub failures: usize,
}

impl LevelStat {
    pub fn from_values(eps: f64, values: &[Option<f64>]) -> Self {
        let ok: Vec<f64> = values.iter().flatten().copied().collect();
        let n = ok.len();
        let mean = if n > 0 { ok.iter().sum::<f64>() / n as f64 } else { f64::NAN };
        let std_error = if n > 1 {
            let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        LevelStat {
            eps,
            mean,
            std_error,
            count: n,
            failures: values.len() - n,
        }
    }
}

/// Variable on the horizontal axis of a log-log fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitVariable {
    Eps,
    SqrtEps,
}

/// Least-squares line `log(mean) = intercept + slope log(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub variable: FitVariable,
    pub slope: f64,
    pub intercept: f64,
    /// 95% Student-t interval for the slope; infinite with two points.
    #[serde(with = "inf_f64")]
    pub slope_low: f64,
    #[serde(with = "inf_f64")]
    pub slope_high: f64,
    pub points: usize,
}

impl Fit {
    /// `None` when fewer than two levels have a positive finite mean or any
    /// level is nonpositive.
    pub fn log_log(levels: &[LevelStat], variable: FitVariable) -> Option<Fit> {
        if levels.len() < 2 || levels.iter().any(|l| !(l.mean > 0.0 && l.mean.is_finite())) {
            return None;
        }
        let xs: Vec<f64> = levels
            .iter()
            .map(|l| match variable {
                FitVariable::Eps => l.eps.ln(),
                FitVariable::SqrtEps => 0.5 * l.eps.ln(),
            })
            .collect();
        let ys: Vec<f64> = levels.iter().map(|l| l.mean.ln()).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let (slope_low, slope_high) = if xs.len() > 2 {
            let ssr: f64 = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (y - intercept - slope * x).powi(2))
                .sum();
            let se = (ssr / (n - 2.0) / sxx).sqrt();
            let t = StudentsT::new(0.0, 1.0, n - 2.0)
                .expect("positive dof")
                .inverse_cdf(0.975);
            (slope - t * se, slope + t * se)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        };
        Some(Fit {
            variable,
            slope,
            intercept,
            slope_low,
            slope_high,
            points: xs.len(),
        })
    }
}

/// One Monte Carlo statistic across the ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub description: String,
    pub levels: Vec<LevelStat>,
    pub fit: Option<Fit>,
    /// All means zero (or missing), so no rate is defined.
    pub degenerate: bool,
}

impl Series {
    pub fn new(name: &str, description: &str, levels: Vec<LevelStat>, variable: Option<FitVariable>) -> Self {
        let degenerate = levels.iter().all(|l| !(l.mean > 0.0));
        let fit = variable.and_then(|v| Fit::log_log(&levels, v));
        Series {
            name: name.into(),
            description: description.into(),
            levels,
            fit,
            degenerate,
        }
    }

    /// Largest over smallest mean; infinite if some mean is zero.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self
            .levels
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), l| (lo.min(l.mean), hi.max(l.mean)));
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    }
}

/// Monte Carlo estimate of `P(sup_t |u^eps - u^0|_H >= delta sqrt(eps) lambda)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCell {
    pub eps: f64,
    pub delta: f64,
    pub threshold: f64,
    pub hits: usize,
    pub count: usize,
    pub probability: f64,
    pub std_error: f64,
    /// `-lambda^{-2} log(probability)`, `+inf` with zero hits.
    #[serde(with = "inf_f64")]
    pub transformed: f64,
    /// `E sup |u^eps - u^0|^2 / threshold^2`.
    #[serde(with = "inf_f64")]
    pub chebyshev_bound: f64,
    #[serde(with = "inf_f64")]
    pub chebyshev_std_error: f64,
    /// `probability <= bound + 3 (combined standard error)`.
    pub chebyshev_consistent: bool,
    /// Skeleton lower bound of the rate on the closed tail set.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "crate::util::inf_f64_opt")]
    pub rate_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    #[serde(with = "inf_f64")]
    pub value: f64,
    #[serde(with = "inf_f64")]
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            detail: detail.into(),
        }
    }

    pub fn flag(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            value: if passed { 1.0 } else { 0.0 },
            threshold: 1.0,
            detail: detail.into(),
        }
    }
}

/// Everything needed to regenerate and audit a run. Wall time and worker
/// count are kept out so the file is identical across machines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub samples: usize,
    pub sample_seeds: Vec<u64>,
    pub series: Vec<Series>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tail: Vec<TailCell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckResult>,
    pub diagnostics: Vec<String>,
}

impl ExperimentReport {
    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One row per series and noise level.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("experiment,series,eps,mean,std_error,count,failures\n");
        for series in &self.series {
            for l in &series.levels {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    self.experiment.name(),
                    series.name,
                    l.eps,
                    l.mean,
                    l.std_error,
                    l.count,
                    l.failures
                );
            }
        }
        s
    }

    pub fn tail_csv(&self) -> String {
        let mut s = String::from(
            "eps,delta,threshold,hits,count,probability,std_error,transformed,chebyshev_bound,chebyshev_consistent,rate_bound\n",
        );
        for c in &self.tail {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                c.eps,
                c.delta,
                c.threshold,
                c.hits,
                c.count,
                c.probability,
                c.std_error,
                c.transformed,
                c.chebyshev_bound,
                c.chebyshev_consistent,
                c.rate_bound.map_or(String::new(), |r| r.to_string())
            );
        }
        s
    }

    /// Human-readable table for terminals.
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} ({} samples, config {})", self.experiment.name(), self.samples, &self.config_hash[..12]);
        for series in &self.series {
            let _ = writeln!(s, "  {}", series.name);
            for l in &series.levels {
                let _ = writeln!(
                    s,
                    "    eps {:>9.2e}  mean {:>12.5e}  se {:>10.3e}  n {:>4}{}",
                    l.eps,
                    l.mean,
                    l.std_error,
                    l.count,
                    if l.failures > 0 { format!("  failed {}", l.failures) } else { String::new() }
                );
            }
            match (&series.fit, series.degenerate) {
                (_, true) => {
                    let _ = writeln!(s, "    slope: degenerate");
                }
                (Some(f), _) => {
                    let _ = writeln!(
                        s,
                        "    slope vs {:?}: {:.3}  [{:.3}, {:.3}]",
                        f.variable, f.slope, f.slope_low, f.slope_high
                    );
                }
                _ => {}
            }
        }
        for c in &self.tail {
            let _ = writeln!(
                s,
                "  eps {:>9.2e} delta {:>5.2}  p {:>8.4}  -log(p)/lambda^2 {:>9.4}  chebyshev {}",
                c.eps,
                c.delta,
                c.probability,
                c.transformed,
                if c.chebyshev_consistent { "ok" } else { "VIOLATED" }
            );
        }
        for c in &self.checks {
            let _ = writeln!(s, "  [{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
        }
        for d in &self.diagnostics {
            let _ = writeln!(s, "  note: {d}");
        }
        s
    }
}

/// Report plus the run-dependent extras that stay out of `report.json`.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub runtime_seconds: f64,
    pub threads: usize,
    pub snapshots: Vec<(String, Vec<SpectralField>)>,
}

#[derive(Serialize)]
struct Runtime {
    seconds: f64,
    threads: usize,
}

impl RunOutput {
    /// Writes `report.json`, `summary.csv`, `runtime.json`, `tail.csv` for tail
    /// probes and `fields/*.bin` when snapshots exist. Returns the paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        let mut put = |name: &str, body: String| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, body)?;
            out.push(p);
            Ok(())
        };
        put("report.json", self.report.to_json()?)?;
        put("summary.csv", self.report.summary_csv())?;
        if !self.report.tail.is_empty() {
            put("tail.csv", self.report.tail_csv())?;
        }
        put(
            "runtime.json",
            serde_json::to_string_pretty(&Runtime {
                seconds: self.runtime_seconds,
                threads: self.threads,
            })?,
        )?;
        if !self.snapshots.is_empty() {
            let fdir = dir.join("fields");
            std::fs::create_dir_all(&fdir)?;
            for (name, fields) in &self.snapshots {
                let p = fdir.join(format!("{name}.bin"));
                let mut buf = Vec::new();
                write_fields_binary(&mut buf, fields)?;
                std::fs::write(&p, buf)?;
                out.push(p);
            }
        }
        Ok(out)
    }
}
