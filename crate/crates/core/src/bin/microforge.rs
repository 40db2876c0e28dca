use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use microforge::pipeline::{self, PipelineConfig, Profile};

#[derive(Parser)]
#[command(name = "microforge", version, about = "Dual-phase steel microstructure design pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Phase-field dataset of labelled microstructures.
    GenDataset(Common),
    /// FEM property labels for a seeded subset of the dataset.
    FemBatch(Common),
    /// Train the generator and critic.
    TrainGan(Common),
    /// Train the four per-mode property regressors.
    TrainCnn(Common),
    /// Random search over the latent space.
    Search(Common),
    /// FEM check of the search winner against its prediction.
    Verify(Common),
    /// Random vs space-filling sampling study.
    CompareSampling(Common),
    /// Markdown and CSV summary of whatever stages have finished.
    Report(Common),
    /// Every stage in order.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// JSON overlay on the profile defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "desk")]
    profile: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep partial stage output and continue from it.
    #[arg(long)]
    resume: bool,
}

impl Common {
    fn load(&self) -> microforge::Result<PipelineConfig> {
        let profile: Profile = self.profile.parse()?;
        PipelineConfig::load(profile, self.config.as_deref(), self.seed, self.out.as_deref())
    }
}

fn run(cli: Cli) -> microforge::Result<()> {
    match cli.command {
        Command::Report(c) => {
            let missing = pipeline::cmd_report(&c.load()?)?;
            for m in missing {
                eprintln!("[report] missing: {m}");
            }
            Ok(())
        }
        Command::Run(c) => pipeline::run_all(&c.load()?, c.resume),
        Command::GenDataset(c) => pipeline::cmd_gen_dataset(&c.load()?, c.resume).map(drop),
        Command::FemBatch(c) => pipeline::cmd_fem_batch(&c.load()?, c.resume).map(drop),
        Command::TrainGan(c) => pipeline::cmd_train_gan(&c.load()?, c.resume).map(drop),
        Command::TrainCnn(c) => pipeline::cmd_train_cnn(&c.load()?, c.resume).map(drop),
        Command::Search(c) => pipeline::cmd_search(&c.load()?, c.resume).map(drop),
        Command::Verify(c) => pipeline::cmd_verify(&c.load()?, c.resume).map(drop),
        Command::CompareSampling(c) => pipeline::cmd_compare_sampling(&c.load()?, c.resume).map(drop),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
