//! `treble`: file-based front end for the tri-modal retrieval workspace.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::path::PathBuf;
use std::process;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use treble_cli::commands::{self, CommonOpts};
use treble_core::Modality;

#[derive(Parser)]
#[command(
    name = "treble",
    version,
    about = "Tri-modal retrieval: synthetic corpora, two-phase training, evaluation, indexing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Score column driving a ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModalityArg {
    Dense,
    Sparse,
    Colbert,
    Ensemble,
}

impl From<ModalityArg> for Modality {
    fn from(arg: ModalityArg) -> Self {
        match arg {
            ModalityArg::Dense => Modality::Dense,
            ModalityArg::Sparse => Modality::Sparse,
            ModalityArg::Colbert => Modality::Colbert,
            ModalityArg::Ensemble => Modality::Ensemble,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; built-in defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed override; each subcommand documents what it seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory shared by the whole pipeline.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Replace existing artifacts instead of refusing to clobber them.
    #[arg(long)]
    overwrite: bool,
}

impl From<Common> for CommonOpts {
    fn from(c: Common) -> Self {
        CommonOpts {
            config: c.config,
            seed: c.seed,
            out: c.out,
            overwrite: c.overwrite,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the seeded synthetic corpus into the output directory.
    GenSynthetic {
        #[command(flatten)]
        common: Common,
    },
    /// Phase-1 contrastive training over train.jsonl.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Phase-2 distillation of a fresh student from model.ckpt.
    Distill {
        #[command(flatten)]
        common: Common,
    },
    /// Ranking metrics on test.jsonl.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Score column to rank by.
        #[arg(long, value_enum, default_value_t = ModalityArg::Ensemble)]
        modality: ModalityArg,
    },
    /// Encode passages.jsonl and build the vector index.
    IndexBuild {
        #[command(flatten)]
        common: Common,
    },
    /// Nearest neighbors for each query in queries.jsonl.
    IndexQuery {
        #[command(flatten)]
        common: Common,
        /// Score column; the index stores dense embeddings only.
        #[arg(long, value_enum, default_value_t = ModalityArg::Dense)]
        modality: ModalityArg,
        /// Neighbors per query (default 10).
        #[arg(long, value_name = "N")]
        k: Option<usize>,
    },
    /// Category-IoU evaluation of note retrieval.
    RagEval {
        #[command(flatten)]
        common: Common,
        /// Dense retrieval by default; other values re-rank the pool.
        #[arg(long, value_enum, default_value_t = ModalityArg::Dense)]
        modality: ModalityArg,
        /// Chunks retrieved per query (default from config).
        #[arg(long, value_name = "N")]
        k: Option<usize>,
    },
    /// Finite-difference verification of both phase gradients.
    GradCheck {
        #[command(flatten)]
        common: Common,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit(); // exits 0
            }
            // Clap's own usage exit code differs from the contract, so
            // print its message and exit 1 explicitly.
            let _ = e.print();
            process::exit(1);
        }
    };
    let result = match cli.command {
        Command::GenSynthetic { common } => commands::gen_synthetic(&common.into()),
        Command::Train { common } => commands::train(&common.into()),
        Command::Distill { common } => commands::distill(&common.into()),
        Command::Eval { common, modality } => commands::eval(&common.into(), modality.into()),
        Command::IndexBuild { common } => commands::index_build(&common.into()),
        Command::IndexQuery { common, modality, k } => {
            commands::index_query(&common.into(), modality.into(), k)
        }
        Command::RagEval { common, modality, k } => {
            commands::rag_eval(&common.into(), modality.into(), k)
        }
        Command::GradCheck { common } => commands::grad_check(&common.into()),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        process::exit(err.exit_code());
    }
}
