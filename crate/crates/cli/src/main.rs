use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qas_core::experiment::{
    emit_plot, episodes_to_threshold, run_curriculum, run_single, ROLLING_WINDOW,
};
use qas_core::{ExperimentConfig, Mode, RunLog};

/// Quantum architecture search with deep Q-learning and policy reuse.
#[derive(Debug, Parser)]
#[command(name = "qas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one policy in one environment.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Noise environment, 0 through 5.
        #[arg(long)]
        env: Option<u32>,
        /// `from_scratch` or `ppr`.
        #[arg(long)]
        mode: Option<Mode>,
        /// Policy library directory (required in ppr mode).
        #[arg(long)]
        library: Option<PathBuf>,
    },
    /// Train environment 0 from scratch, then environments 1-5 with reuse.
    Curriculum {
        #[command(flatten)]
        common: CommonArgs,
        /// Skip environments already present in the output library.
        #[arg(long)]
        resume: bool,
    },
    /// Render a score plot and rolling-mean CSV from a run log.
    Plot {
        /// Run log CSV written by `run` or `curriculum`.
        input: PathBuf,
        /// Image path; defaults to the input path with an `.svg` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML file with experiment settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(episodes) = self.episodes {
            config.episodes = episodes;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        Ok(config)
    }
}

fn summarize(log: &RunLog) -> String {
    let scores = log.scores();
    let tail = scores.len().min(100);
    let mean = scores[scores.len() - tail..].iter().sum::<f64>() / tail.max(1) as f64;
    let reached = episodes_to_threshold(&scores, ROLLING_WINDOW, 0.9)
        .map_or_else(|| "never".to_string(), |e| e.to_string());
    format!(
        "{} episodes, last-{tail} mean {mean:.4}, rolling mean >= 0.9 at {reached}",
        scores.len()
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            common,
            env,
            mode,
            library,
        } => {
            let mut config = common.load()?;
            if let Some(env) = env {
                config.env = env;
            }
            if let Some(mode) = mode {
                config.mode = mode;
            }
            if library.is_some() {
                config.library = library;
            }
            let log = run_single(&config).with_context(|| format!("run {}", config.run_name()))?;
            println!("{}: {}", config.run_name(), summarize(&log));
            println!(
                "wrote {}",
                config
                    .out
                    .join(format!("{}.csv", config.run_name()))
                    .display()
            );
        }
        Command::Curriculum { common, resume } => {
            let config = common.load()?;
            let report = run_curriculum(&config, &config.out, resume).context("curriculum")?;
            for env in &report.skipped {
                println!("env {env}: already in library, skipped");
            }
            for (env, log) in &report.logs {
                println!("env {env}: {}", summarize(log));
            }
            println!(
                "library: {} policies in {}",
                report.library.len(),
                config.out.join("library").display()
            );
        }
        Command::Plot { input, out } => {
            let log =
                RunLog::read_csv(&input).with_context(|| format!("reading {}", input.display()))?;
            let image = out.unwrap_or_else(|| input.with_extension("svg"));
            let rolling = emit_plot(&log, &image)?;
            println!("wrote {} and {}", image.display(), rolling.display());
        }
    }
    Ok(())
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
