use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{hash_json, DeviationScale, IntegratorConfig};
use crate::error::{Error, Result};
use crate::noise::{make_noise_model, NoiseModel, NoiseSpec};
use crate::spectral::{Grid, SpectralField};

/// Environment variable that overrides `output.dir`.
pub const OUTPUT_DIR_ENV: &str = "ANISO_SNS_OUT";

fn default_grid() -> Grid {
    Grid::new(16, 16).expect("default grid")
}

fn default_integrator() -> IntegratorConfig {
    IntegratorConfig::new(1e-3, 0.5).expect("default integrator")
}

fn default_eps() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}

fn default_deltas() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.2, 0.4, 0.8]
}

fn quarter() -> f64 {
    0.25
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn default_samples() -> usize {
    64
}

fn default_dir() -> PathBuf {
    PathBuf::from("results")
}

/// Initial velocity `u_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Random divergence-free field with `|u_k| ~ (1 + |k|^2)^{-decay/2}`,
    /// rescaled to `|u_0|_H = norm`.
    Random {
        #[serde(default)]
        seed: u64,
        #[serde(default = "two")]
        decay: f64,
        #[serde(default = "one")]
        norm: f64,
    },
    /// `(amplitude sin x2, 0)`.
    Shear { amplitude: f64 },
    Zero,
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Random {
            seed: 0,
            decay: 2.0,
            norm: 1.0,
        }
    }
}

impl InitialCondition {
    pub fn build(&self, grid: Grid) -> Result<SpectralField> {
        match *self {
            InitialCondition::Random { seed, decay, norm } => {
                if !(norm >= 0.0 && norm.is_finite()) {
                    return Err(Error::Config(format!("initial norm {norm} must be finite and >= 0")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let u = SpectralField::random_solenoidal(grid, &mut rng, decay);
                let n = u.norm();
                Ok(if n > 0.0 { u.scaled(norm / n) } else { u })
            }
            InitialCondition::Shear { amplitude } => {
                let mut u = SpectralField::zeros(grid);
                if let Some(i) = grid.index(0, 1) {
                    u.coeffs_mut()[i][0] = num_complex::Complex64::new(0.0, -0.5 * amplitude);
                    let m = grid.mirror(i);
                    u.coeffs_mut()[m][0] = num_complex::Complex64::new(0.0, 0.5 * amplitude);
                }
                SpectralField::from_coeffs(grid, u.coeffs().to_vec())
            }
            InitialCondition::Zero => Ok(SpectralField::zeros(grid)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    /// Strictly decreasing noise intensities.
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    /// Deviation exponent `a` in `lambda(eps) = eps^{-a}`.
    #[serde(default = "quarter")]
    pub exponent: f64,
    /// Strictly increasing tail thresholds for the deviation probe.
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Constant `k` of the exponential weights.
    #[serde(default = "one")]
    pub weight_k: f64,
    /// Level `N` of the control set sampled for controlled runs.
    #[serde(default = "one")]
    pub control_level: f64,
    /// Attach skeleton-based rate lower bounds to the tail probe.
    #[serde(default)]
    pub rate_bounds: bool,
}

impl Default for LadderConfig {
    fn default() -> Self {
        LadderConfig {
            eps: default_eps(),
            exponent: quarter(),
            deltas: default_deltas(),
            weight_k: one(),
            control_level: one(),
            rate_bounds: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples: default_samples(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Write `fields/*.bin` snapshots.
    #[serde(default)]
    pub snapshots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            snapshots: false,
        }
    }
}

/// Experiment configuration file. `noise.seed` is the master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_grid")]
    pub grid: Grid,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub ladder: LadderConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            grid: default_grid(),
            integrator: default_integrator(),
            initial: InitialCondition::default(),
            noise: NoiseSpec::default(),
            ladder: LadderConfig::default(),
            mc: McConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.integrator.validate()?;
        let eps = &self.ladder.eps;
        if eps.is_empty() {
            return Err(Error::Config("eps ladder is empty".into()));
        }
        if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::Config(format!("eps ladder entry {e} must be positive")));
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(format!("eps ladder {eps:?} must be strictly decreasing")));
        }
        DeviationScale::new(eps[0], self.ladder.exponent).map_err(|e| Error::Config(e.to_string()))?;
        let d = &self.ladder.deltas;
        if d.iter().any(|x| !(*x >= 0.0 && x.is_finite())) || d.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "delta ladder {d:?} must be nonnegative and strictly increasing"
            )));
        }
        if !(self.ladder.weight_k >= 0.0 && self.ladder.control_level >= 0.0) {
            return Err(Error::Config("weight_k and control_level must be >= 0".into()));
        }
        if self.mc.samples < 2 {
            return Err(Error::Config(format!("samples = {} must be >= 2", self.mc.samples)));
        }
        self.noise_model()?;
        self.initial.build(self.grid)?;
        Ok(())
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        make_noise_model(&self.noise, self.grid)
    }

    pub fn master_seed(&self) -> u64 {
        self.noise.seed
    }

    /// Output directory after the environment override.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.output.dir.clone(),
        }
    }

    /// The configuration without its output location, which does not affect
    /// any statistic.
    pub fn canonical(&self) -> ExperimentConfig {
        ExperimentConfig {
            output: OutputConfig {
                dir: PathBuf::new(),
                snapshots: self.output.snapshots,
            },
            ..self.clone()
        }
    }

    pub fn hash(&self) -> String {
        hash_json(&self.canonical())
    }
}
