use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use aniso_sns::experiments::{
    run_clt_limit, run_clt_rate, run_invariant_suite, run_mdp_tail, run_rate_min, run_simulate, ExperimentConfig,
    RunOutput, OUTPUT_DIR_ENV,
};
use aniso_sns::ratefn::{Objective, RateOptions};
use aniso_sns::spectral::{read_fields_binary, write_fields_binary};

#[derive(Parser)]
#[command(name = "aniso-sns", version, about = "Anisotropic stochastic Navier-Stokes experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write its norms and energy report.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Noise intensity; defaults to the first ladder level.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Rate of E sup |u^eps - u^0|^2 across the eps ladder.
    CltRate(Common),
    /// Convergence of the rescaled fluctuation to its linear limit.
    CltLimit(Common),
    /// Monte Carlo tail probabilities on the delta ladder.
    MdpTail(Common),
    /// Rate function of a stored target.
    RateMin {
        #[command(flatten)]
        common: Common,
        /// Binary field file: one terminal field or a full path.
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum)]
        objective: Option<ObjectiveArg>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Identities, energy balance and moment bounds.
    Invariants(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, replacing `noise.seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Output directory.
    #[arg(long, env = OUTPUT_DIR_ENV)]
    out: Option<PathBuf>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Terminal,
    Path,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf, usize)> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.noise.seed = s;
        }
        if let Some(m) = self.samples {
            cfg.mc.samples = m;
        }
        if let Some(d) = &self.out {
            cfg.output.dir = d.clone();
        }
        cfg.validate()?;
        let threads = match self.threads {
            Some(0) => bail!("--threads must be positive"),
            Some(t) => t,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let dir = self.out.clone().unwrap_or_else(|| cfg.output_dir());
        Ok((cfg, dir, threads))
    }
}

fn finish(out: RunOutput, dir: &Path) -> Result<()> {
    print!("{}", out.report.summary_table());
    out.write(dir).with_context(|| format!("writing results to {}", dir.display()))?;
    println!("wrote {} ({:.1} s, {} threads)", dir.display(), out.runtime_seconds, out.threads);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::CltRate(c) => {
            let (cfg, dir, t) = c.load()?;
            finish(run_clt_rate(&cfg, t)?, &dir)
        }
        Command::CltLimit(c) => {
            let (cfg, dir, t) = c.load()?;
            finish(run_clt_limit(&cfg, t)?, &dir)
        }
        Command::MdpTail(c) => {
            let (cfg, dir, t) = c.load()?;
            finish(run_mdp_tail(&cfg, t)?, &dir)
        }
        Command::Invariants(c) => {
            let (cfg, dir, t) = c.load()?;
            let out = run_invariant_suite(&cfg, t)?;
            let ok = out.report.all_checks_pass();
            finish(out, &dir)?;
            if !ok {
                bail!("one or more invariant checks failed");
            }
            Ok(())
        }
        Command::Simulate { common, eps } => {
            let (cfg, dir, _) = common.load()?;
            let sim = run_simulate(&cfg, eps)?;
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("norms.csv"), sim.trajectory.norms_csv())?;
            std::fs::write(dir.join("energy.json"), serde_json::to_string_pretty(&sim.energy)? + "\n")?;
            if cfg.output.snapshots {
                std::fs::create_dir_all(dir.join("fields"))?;
                let f = std::fs::File::create(dir.join("fields").join("trajectory.bin"))?;
                write_fields_binary(std::io::BufWriter::new(f), &sim.trajectory.fields)?;
            }
            let e = &sim.energy;
            println!("simulate eps {:e}: {} records", sim.eps, sim.trajectory.times.len());
            println!("  sup |u|_H^2 {:.6e}  sup |u|^2_H01 {:.6e}  int |u|^2_H11 {:.6e}", e.sup_h, e.sup_h01, e.int_h11);
            println!("wrote {}", dir.display());
            Ok(())
        }
        Command::RateMin {
            common,
            target,
            objective,
            tolerance,
        } => {
            let (cfg, dir, _) = common.load()?;
            let file = std::fs::File::open(&target).with_context(|| format!("opening target {}", target.display()))?;
            let fields = read_fields_binary(std::io::BufReader::new(file))
                .with_context(|| format!("reading target {}", target.display()))?;
            let mut opts = RateOptions::default();
            if let Some(t) = tolerance {
                if !(t > 0.0) {
                    bail!("--tolerance must be positive");
                }
                opts.tolerance = t;
            }
            let objective = objective.map(|o| match o {
                ObjectiveArg::Terminal => Objective::TerminalH,
                ObjectiveArg::Path => Objective::PathL2H,
            });
            let result = run_rate_min(&cfg, fields, objective, &opts)?;
            let json = result.to_json()? + "\n";
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("rate.json"), &json)?;
            print!("{json}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
