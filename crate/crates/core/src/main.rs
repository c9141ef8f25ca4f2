use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use flag_core::experiment::synth::{self, NodeSynthSpec};
use flag_core::experiment::{self, noise_csv, arms_csv, ExperimentKind, ExperimentReport, ExperimentSpec};
use flag_core::train::ConfigEntries;
use flag_core::{Error, Result};

#[derive(Parser)]
#[command(name = "flag", version, about = "Adversarial feature augmentation for graph neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration.
    Run(Common),
    /// Train one configuration over a seed range.
    SweepSeeds(Common),
    /// Compare clean, pgd, free, freelb and flag training.
    Compare(Common),
    /// Compare clean(N), flag(N) and flag(N/M) epochs.
    FreeBudget(Common),
    /// Clean vs FGSM training with Gaussian feature noise.
    NoiseSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated noise levels.
        #[arg(long, value_delimiter = ',', required = true)]
        sigmas: Vec<f64>,
    },
    /// Write a synthetic node-classification dataset.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthKind::Toy)]
        kind: SynthKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Toy,
    CoraScale,
    Graphs,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key (`key=value` or `section.key=value`).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Inclusive seed range `a..b`, or a single seed.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("seeds: expected a..b or a single integer, got {s:?}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if b < a {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![s.trim().parse().map_err(|_| bad())?]),
    }
}

fn spec(kind: ExperimentKind, c: Common, sigmas: Vec<f64>) -> Result<ExperimentSpec> {
    let mut config = match &c.config {
        Some(p) => ConfigEntries::load(p)?,
        None => ConfigEntries::default(),
    };
    for s in &c.set {
        config.set_pair(s)?;
    }
    Ok(ExperimentSpec {
        kind,
        config,
        seeds: c.seeds.as_deref().map(parse_seeds).transpose()?,
        sigmas,
        out: c.out,
    })
}

fn execute(cli: Cli) -> Result<()> {
    let spec = match cli.command {
        Command::Run(c) => spec(ExperimentKind::Single, c, Vec::new())?,
        Command::SweepSeeds(c) => spec(ExperimentKind::SweepSeeds, c, Vec::new())?,
        Command::Compare(c) => spec(ExperimentKind::CompareStrategies, c, Vec::new())?,
        Command::FreeBudget(c) => spec(ExperimentKind::FreeBudget, c, Vec::new())?,
        Command::NoiseSweep { common, sigmas } => spec(ExperimentKind::NoiseSweep, common, sigmas)?,
        Command::Synth { kind, seed, out } => {
            match kind {
                SynthKind::Toy | SynthKind::CoraScale => {
                    let s = if matches!(kind, SynthKind::Toy) {
                        NodeSynthSpec::toy()
                    } else {
                        NodeSynthSpec::cora_scale()
                    };
                    let files = synth::write_node_dataset(&out, &synth::node_dataset(&s, seed)?)?;
                    print!("{}", files.config_section());
                }
                SynthKind::Graphs => {
                    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                        path: out.clone(),
                        source: e,
                    })?;
                    let path = out.join("graphs.txt");
                    synth::write_graphs(&path, &synth::graph_dataset(200, seed)?)?;
                    println!("[data]\ngraphs = {}", path.display());
                }
            }
            return Ok(());
        }
    };
    match experiment::run(&spec)? {
        ExperimentReport::Single(s) => println!(
            "selected epoch {}: val_acc {} test_acc {}",
            s.selected.epoch, s.selected.val_acc, s.selected.test_acc
        ),
        ExperimentReport::Arms(arms) => print!("{}", arms_csv(&arms)),
        ExperimentReport::Noise(rows) => print!("{}", noise_csv(&rows)),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
