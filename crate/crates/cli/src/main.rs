//! `ripple` — command-line front end for the variation-aware spam
//! detection pipeline.
//!
//! Every stage subcommand takes `--config PATH` plus optional `--force`,
//! `--seed N`, and trailing `key=value` config overrides. Exit codes:
//! 0 on success, 1 on validation or usage errors, 2 when a required
//! upstream stage has not been run yet.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use ripple_core::pipeline::{
    nearest_query, run_all, run_stage, write_synthetic, BenchmarkReport, PipelineConfig,
    PipelineError, Stage, SynthOptions,
};

#[derive(Parser)]
#[command(
    name = "ripple",
    version,
    about = "Variation-aware Chinese spam text detection pipeline",
    after_help = "Quick start:\n  \
        ripple gen-data --out world\n  \
        ripple run --config world/ripple.conf\n  \
        ripple nearest <CHAR> --config world/ripple.conf --k 3"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Arguments shared by every stage subcommand.
#[derive(Args)]
struct StageArgs {
    /// Pipeline configuration file (flat key=value lines).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Re-run even if the stage's artifacts are already current.
    #[arg(long)]
    force: bool,

    /// Override the config's base seed (shorthand for `seed=N`).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Config overrides applied after the file is read.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl StageArgs {
    fn load(&self) -> Result<PipelineConfig, PipelineError> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        PipelineConfig::load(&self.config, &overrides)
    }
}

#[derive(Args)]
struct NearestArgs {
    /// Query character.
    #[arg(value_name = "CHAR")]
    character: char,

    /// Number of nearest characters to return.
    #[arg(long, value_name = "N", default_value_t = 3)]
    k: usize,

    /// Pipeline configuration file (flat key=value lines).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Config overrides applied after the file is read.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct GenDataArgs {
    /// Directory to write encoding.tsv, train.tsv, test.tsv, ripple.conf.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Number of variation groups in the synthetic vocabulary.
    #[arg(long, value_name = "N")]
    groups: Option<usize>,

    /// Characters per variation group.
    #[arg(long, value_name = "N")]
    group_size: Option<usize>,

    /// Spam keyword groups; their sibling characters are held out of all
    /// generated text so mutation introduces genuinely unseen characters.
    #[arg(long, value_name = "N")]
    keywords: Option<usize>,

    /// Training examples to generate.
    #[arg(long, value_name = "N")]
    train_texts: Option<usize>,

    /// Test examples to generate.
    #[arg(long, value_name = "N")]
    test_texts: Option<usize>,

    /// Fraction of each split labeled spam (exclusive 0..1).
    #[arg(long, value_name = "F")]
    spam_fraction: Option<f64>,

    /// Minimum text length in characters.
    #[arg(long, value_name = "N")]
    min_len: Option<usize>,

    /// Maximum text length in characters.
    #[arg(long, value_name = "N")]
    max_len: Option<usize>,

    /// Generator seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

impl GenDataArgs {
    fn options(&self) -> SynthOptions {
        let mut o = SynthOptions::default();
        if let Some(v) = self.groups {
            o.groups = v;
        }
        if let Some(v) = self.group_size {
            o.group_size = v;
        }
        if let Some(v) = self.keywords {
            o.keywords = v;
        }
        if let Some(v) = self.train_texts {
            o.train_texts = v;
        }
        if let Some(v) = self.test_texts {
            o.test_texts = v;
        }
        if let Some(v) = self.spam_fraction {
            o.spam_fraction = v;
        }
        if let Some(v) = self.min_len {
            o.min_len = v;
        }
        if let Some(v) = self.max_len {
            o.max_len = v;
        }
        if let Some(v) = self.seed {
            o.seed = v;
        }
        o
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the character variation graph from the encoding table.
    BuildGraph(StageArgs),
    /// Generate hierarchical random walks over the variation graph.
    Walk(StageArgs),
    /// Infer variation families and train character/family embeddings.
    TrainVfge(StageArgs),
    /// Train textual skip-gram vectors and pretrain the bidirectional LM.
    PretrainLm(StageArgs),
    /// Train the spam detector on the clean training corpus.
    Train(StageArgs),
    /// Mutate the test corpus's spam texts through the variation graph.
    Mutate(StageArgs),
    /// Evaluate the trained detector on the mutated test corpus.
    Eval(StageArgs),
    /// Train and evaluate the four model variants side by side.
    Benchmark(StageArgs),
    /// Run every stage in order, build-graph through benchmark.
    Run(StageArgs),
    /// Show the characters nearest to CHAR in the learned embedding space.
    Nearest(NearestArgs),
    /// Generate a self-contained synthetic benchmark directory.
    GenData(GenDataArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version exit 0; anything else is a usage problem,
            // which this tool reports as a validation error (exit 1) so
            // that exit 2 always means "missing upstream stage".
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::BuildGraph(a) => stage(Stage::BuildGraph, &a),
        Command::Walk(a) => stage(Stage::Walk, &a),
        Command::TrainVfge(a) => stage(Stage::TrainVfge, &a),
        Command::PretrainLm(a) => stage(Stage::PretrainLm, &a),
        Command::Train(a) => stage(Stage::Train, &a),
        Command::Mutate(a) => stage(Stage::Mutate, &a),
        Command::Eval(a) => stage(Stage::Eval, &a),
        Command::Benchmark(a) => stage(Stage::Benchmark, &a),
        Command::Run(a) => {
            let config = a.load()?;
            for outcome in run_all(&config, a.force)? {
                print!("{}", outcome.aligned());
            }
            print!("{}", BenchmarkReport::reference_block());
            Ok(())
        }
        Command::Nearest(a) => {
            let config = PipelineConfig::load(&a.config, &a.overrides)?;
            for (c, score) in nearest_query(&config, a.character, a.k)? {
                println!("{c}  {score:.6}");
            }
            Ok(())
        }
        Command::GenData(a) => {
            let (data, files) = write_synthetic(&a.out, &a.options())?;
            println!("characters      {}", data.records.len());
            println!("train texts     {}", data.train.len());
            println!("test texts      {}", data.test.len());
            println!("spam keywords   {}", data.keywords.iter().collect::<String>());
            println!("encoding table  {}", files.encoding_table.display());
            println!("train corpus    {}", files.train_corpus.display());
            println!("test corpus     {}", files.test_corpus.display());
            println!("config          {}", files.config.display());
            Ok(())
        }
    }
}

fn stage(stage: Stage, args: &StageArgs) -> Result<(), PipelineError> {
    let config = args.load()?;
    let outcome = run_stage(stage, &config, args.force)?;
    print!("{}", outcome.aligned());
    if stage == Stage::Benchmark {
        print!("{}", BenchmarkReport::reference_block());
    }
    Ok(())
}
