use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use natlex::pipeline::{self, apply_override, Ladder, PipelineConfig, Run};
use natlex::Error;

#[derive(Parser)]
#[command(name = "natlex", version, about = "Raw-data priors for lexical choice in distilled NAT training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config override as a dotted key, e.g. `--set nat.steps=500`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize or import the train/test corpora.
    Gen,
    /// Train the raw-data and evaluation lexicons.
    Align,
    /// Train (or build the oracle) teacher.
    Teach,
    /// Distill the training corpus with the teacher.
    Distill,
    /// Train one NAT system.
    Train {
        #[arg(long)]
        system: Option<String>,
    },
    /// Evaluate one NAT system on the test set.
    Eval {
        #[arg(long)]
        system: Option<String>,
    },
    /// Run a full ladder of systems and write the comparison.
    Experiment {
        /// table2, table3, table4, table6 or noise.
        ladder: String,
    },
}

fn load_config(cli: &Cli, system: Option<&String>) -> natlex::Result<PipelineConfig> {
    let mut table = match &cli.config {
        Some(path) => {
            if !path.exists() {
                return Err(Error::MissingArtifact("config", path.clone()));
            }
            natlex::fsio::read_to_string(path)?.parse::<toml::Table>().map_err(|e| Error::invalid(e.to_string()))?
        }
        None => toml::Table::new(),
    };
    for spec in &cli.overrides {
        apply_override(&mut table, spec)?;
    }
    let mut config = PipelineConfig::from_value(table)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(name) = system {
        config.system = Some(name.clone());
    }
    Ok(config)
}

fn run(cli: &Cli) -> natlex::Result<()> {
    let system = match &cli.command {
        Command::Train { system } | Command::Eval { system } => system.as_ref(),
        _ => None,
    };
    let config = load_config(cli, system)?;
    if let Command::Experiment { ladder } = &cli.command {
        let ladder: Ladder = ladder.parse()?;
        let comparison = pipeline::cmd_experiment(&config, ladder)?;
        print!("{}", comparison.render());
        return Ok(());
    }
    let mut run = Run::new(&config)?;
    match &cli.command {
        Command::Gen => pipeline::cmd_gen(&mut run),
        Command::Align => pipeline::cmd_align(&mut run),
        Command::Teach => pipeline::cmd_teach(&mut run),
        Command::Distill => pipeline::cmd_distill(&mut run),
        Command::Train { .. } => pipeline::cmd_train(&mut run),
        Command::Eval { .. } => {
            let report = pipeline::cmd_eval(&mut run)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Experiment { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
