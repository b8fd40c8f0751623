use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vanhove_lab::commands::{self, Figure};
use vanhove_lab::io::RunConfig;
use vanhove_lab::{Error, Result};

/// Simulate, analyse and fit repeated weak density measurements of an
/// elongated condensate.
#[derive(Parser)]
#[command(name = "vanhove", version)]
struct Cli {
    /// Worker threads (default: VANHOVE_WORKERS, else all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set simulation.shots=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Option<RunConfig>> {
        match &self.config {
            Some(p) => RunConfig::load(p, &self.overrides).map(Some),
            None if self.overrides.is_empty() => Ok(None),
            None => RunConfig::from_toml("", &self.overrides).map(Some),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a shot ensemble and write it as a container.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long, default_value = "ensemble.vhl")]
        out: PathBuf,
    },
    /// CCFs, Van Hove matrix and DSF of an ensemble.
    Analyze {
        ensemble: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long, default_value = "analysis")]
        out: PathBuf,
    },
    /// Post-selected weak values of an ensemble.
    Qwv {
        ensemble: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long, default_value = "qwv")]
        out: PathBuf,
    },
    /// Line-shape fit of an analysis products container.
    Fit {
        products: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long, default_value = "fit")]
        out: PathBuf,
    },
    /// Run a bundled recipe: fig2, fig3 or fig4.
    Reproduce {
        figure: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(short, long, default_value = "reproduce")]
        out: PathBuf,
    },
}

fn workers(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("VANHOVE_WORKERS") {
        Ok(v) => v.parse().map(Some).map_err(|_| Error::Config(format!("VANHOVE_WORKERS={v:?} is not a count"))),
        Err(_) => Ok(None),
    }
}

fn report(m: &commands::Manifest, dir: &Path) {
    println!("{}: {} files in {}", m.command, m.files.len(), dir.display());
    println!("config {}", m.config_hash);
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = workers(cli.workers)?.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { cfg, out } => {
            let config = cfg.load()?.ok_or_else(|| Error::Config("simulate needs --config or --set".into()))?;
            let hash = commands::cmd_simulate(&config, &out)?;
            println!("{} {hash}", out.display());
        }
        Command::Analyze { ensemble, cfg, out } => report(&commands::cmd_analyze(&ensemble, cfg.load()?.as_ref(), &out)?, &out),
        Command::Qwv { ensemble, cfg, out } => report(&commands::cmd_qwv(&ensemble, cfg.load()?.as_ref(), &out)?, &out),
        Command::Fit { products, cfg, out } => report(&commands::cmd_fit(&products, cfg.load()?.as_ref(), &out)?, &out),
        Command::Reproduce { figure, overrides, out } => {
            let figure: Figure = figure.parse()?;
            report(&commands::cmd_reproduce(figure, &overrides, &out)?, &out.join(figure.to_string()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
