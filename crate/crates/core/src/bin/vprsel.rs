use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vprsel::pipeline::{Overrides, Pipeline, RunOptions, Stage, Strategy};
use vprsel::synthetic::{generate, SynthSpec};
use vprsel::Result;

#[derive(Parser)]
#[command(name = "vprsel", version, about = "Per-query complementary technique selection for place recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one pipeline stage, or `all`.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "all")]
        stage: String,
        /// selector, best-average, dataset-specific, oracle or pair:<name>
        #[arg(long, default_value = "selector")]
        strategy: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pca_k: Option<usize>,
        #[arg(long)]
        emit_svg: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, out } => {
            let spec = SynthSpec::load(&spec)?;
            let manifest = generate(&spec)?.write_to(&out)?;
            log::info!("wrote {}", manifest.display());
            Ok(())
        }
        Command::Pipeline {
            config,
            stage,
            strategy,
            seed,
            out,
            pca_k,
            emit_svg,
        } => {
            let stage: Stage = stage.parse()?;
            let strategy: Strategy = strategy.parse()?;
            let overrides = Overrides {
                seed,
                out_dir: out,
                pca_k,
            };
            let pipeline = Pipeline::from_file(&config, &overrides)?;
            pipeline.run(stage, &RunOptions { strategy, emit_svg })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
