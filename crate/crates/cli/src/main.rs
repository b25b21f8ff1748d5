use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ppa_cli::{cmd_estimate, cmd_gen, cmd_plan, cmd_run, Config, Overrides, StrategySelection};
use ppa_core::FlushMode;

#[derive(Parser)]
#[command(name = "ppa", version, about = "Plan, cost and simulate aggregate pushdown below joins")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate datasets and a realized-stats sidecar.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Output directory; defaults to the config's data_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enumerate and cost the alternatives, print the decision tree.
    Plan {
        #[command(flatten)]
        common: Common,
    },
    /// Execute alternatives and check them against the reference result.
    Run {
        #[command(flatten)]
        common: Common,
        /// chosen, all, 1, 2 or 3.
        #[arg(long, default_value = "chosen")]
        strategy: StrategySelection,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print reduction ratio, push verdict and batch NDV for the query.
    Estimate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FlushArg {
    Partition,
    Batch,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    batch: Option<u64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, value_enum)]
    flush: Option<FlushArg>,
    #[arg(long = "broadcast-threshold")]
    broadcast_threshold: Option<u64>,
}

impl Common {
    fn load(&self) -> anyhow::Result<Config> {
        let mut cfg = Config::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            nodes: self.nodes,
            batch: self.batch,
            theta: self.theta,
            flush: self.flush.map(|f| match f {
                FlushArg::Partition => FlushMode::Partition,
                FlushArg::Batch => FlushMode::Batch,
            }),
            broadcast_threshold: self.broadcast_threshold,
        });
        Ok(cfg)
    }
}

fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Gen { common, out: dir } => {
            let cfg = common.load()?;
            let dir = dir
                .or_else(|| cfg.data_dir.clone())
                .ok_or_else(|| anyhow::anyhow!("no output directory: pass --out or set data_dir"))?;
            cmd_gen(&cfg, &dir, out)?;
        }
        Command::Plan { common } => {
            cmd_plan(&common.load()?, out)?;
        }
        Command::Run { common, strategy, report } => {
            let report = cmd_run(&common.load()?, strategy, report.as_deref(), out)?;
            if !report.all_match() {
                writeln!(out, "result mismatch against the reference evaluation")?;
                return Ok(ExitCode::from(2));
            }
        }
        Command::Estimate { common } => {
            cmd_estimate(&common.load()?, out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
