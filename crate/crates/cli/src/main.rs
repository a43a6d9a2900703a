use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use masterfl::acceptance::{self, AcceptOptions};
use masterfl::experiment::{self, ConfigOverrides, RunConfig};
use masterfl::master::RunMode;

/// Federated learning under drift with the multiscale master scheme.
#[derive(Parser)]
#[command(name = "masterfl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write rounds.csv, summary.json and config.toml.
    Run(RunArgs),
    /// Run several methods on the same data and write comparison.json.
    Compare(CompareArgs),
    /// Run the acceptance suite.
    Accept(AcceptArgs),
    /// List the bundled presets.
    Presets,
}

#[derive(Args)]
struct Common {
    /// Bundled preset used as the base configuration.
    #[arg(long)]
    preset: Option<String>,
    /// Override the seed.
    #[arg(long)]
    seed: Option<u64>,
    /// LIBSVM file; replaces the configured data source.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides { seed: self.seed, data_path: self.data.clone() }
    }

    fn load(&self, path: Option<&PathBuf>) -> Result<RunConfig> {
        if self.preset.is_none() && path.is_none() {
            bail!("pass --preset NAME and/or --config PATH");
        }
        let config = experiment::load_config_file(self.preset.as_deref(), path.map(PathBuf::as_path), &self.overrides());
        match path {
            Some(p) => config.with_context(|| format!("loading {}", p.display())),
            None => config.context("loading preset"),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Config file layered over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CompareArgs {
    /// Config file, one per method; each is layered over the preset.
    /// With zero or one file the master run is compared with its
    /// single-instance baseline.
    #[arg(long)]
    config: Vec<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct AcceptArgs {
    /// Run only these criteria.
    #[arg(long = "only", value_name = "ID")]
    only: Vec<u32>,
    /// LIBSVM file for the dataset replay criterion.
    #[arg(long)]
    data: Option<PathBuf>,
}

fn run(args: &RunArgs) -> Result<()> {
    let config = args.common.load(args.config.as_ref())?;
    let out = &args.common.out;
    let outcome = experiment::run_experiment(&config, out).context("running experiment")?;
    let s = &outcome.summary;
    println!("{} seed {} T {}", s.label, s.seed, s.horizon);
    println!("mean loss {:.6}", s.mean_loss);
    if let Some(acc) = s.mean_accuracy {
        println!("mean accuracy {acc:.4}");
    }
    if let Some(r) = s.final_regret {
        println!("final dynamic regret {r:.6}");
    }
    println!("restarts {} at {:?}", s.restarts, s.restart_rounds);
    println!("wrote {}", out.display());
    Ok(())
}

fn compare(args: &CompareArgs) -> Result<()> {
    let configs = match args.config.len() {
        0 | 1 => {
            let mut master = args.common.load(args.config.first())?;
            master.mode = RunMode::Master;
            let mut baseline = master.clone();
            baseline.mode = RunMode::SingleInstanceBaseline;
            vec![master, baseline]
        }
        _ => args.config.iter().map(|p| args.common.load(Some(p))).collect::<Result<_>>()?,
    };
    let comparison = experiment::compare_to_dir(&configs, &args.common.out).context("running comparison")?;
    for m in &comparison.methods {
        let acc = m.mean_accuracy.map_or("-".to_string(), |a| format!("{a:.4}"));
        let regret = m.final_regret.map_or("-".to_string(), |r| format!("{r:.4}"));
        println!(
            "{:<20} loss {:.6} accuracy {acc} regret {regret} restarts {}",
            m.label, m.mean_loss, m.restarts
        );
    }
    println!("wrote {}", args.common.out.join("comparison.json").display());
    Ok(())
}

fn accept(args: &AcceptArgs) -> Result<bool> {
    let opts = AcceptOptions { libsvm: args.data.clone() };
    let selected: Vec<_> = if args.only.is_empty() {
        acceptance::CRITERIA.iter().collect()
    } else {
        args.only
            .iter()
            .map(|&id| acceptance::criterion(id).with_context(|| format!("no criterion {id}")))
            .collect::<Result<_>>()?
    };
    let mut ok = true;
    for c in selected {
        let report = c.run(&opts);
        println!("{report}");
        ok &= report.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Compare(a) => compare(a).map(|_| true),
        Command::Accept(a) => accept(a),
        Command::Presets => {
            for name in experiment::preset_names() {
                println!("{name}");
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
