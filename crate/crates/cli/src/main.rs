use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sgt_cli::{bundle_from_model, evaluate_checkpoint, load_train_config, report_csv};
use sgt_core::corpus::{make_synthetic_corpus, Dataset};
use sgt_core::speech::SpeechPipeline;
use sgt_nn::train::history_csv;
use sgt_nn::{train, Checkpoint};
use sgt_server::{serve, AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "sgt", version, about = "Controllable speech-driven gesture generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic speech/motion corpus.
    Corpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        clips: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a generator and write a checkpoint plus its metric history.
    Train {
        /// TOML or JSON training config; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch metrics CSV; defaults to `<out>.history.csv`.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Score a checkpoint on its held-out test split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the REST service.
    Serve {
        /// Without a checkpoint only keyframe generation is available.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "sgt-data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Static web assets served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_max_level(tracing::Level::INFO)
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Corpus { out, clips, seed } => {
            let ds = make_synthetic_corpus(clips, seed)?;
            ds.save_dir(&out)?;
            println!("wrote {} clips to {}", ds.clips.len(), out.display());
        }
        Command::Train {
            config,
            data,
            out,
            history,
        } => {
            let cfg = load_train_config(config.as_deref())?;
            let ds = Dataset::load_dir(&data).with_context(|| format!("loading {}", data.display()))?;
            let outcome = train(&ds, &cfg)?;
            outcome.checkpoint.save(&out)?;
            let history = history.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".history.csv");
                p.into()
            });
            std::fs::write(&history, history_csv(&outcome.history))?;
            println!(
                "trained {} epochs in {:.1}s; best epoch {}; checkpoint {}; history {}",
                outcome.history.len(),
                outcome.seconds,
                outcome.best_epoch,
                out.display(),
                history.display()
            );
        }
        Command::Eval { ckpt, data, report } => {
            let ckpt = Checkpoint::load(&ckpt)?;
            let ds = Dataset::load_dir(&data).with_context(|| format!("loading {}", data.display()))?;
            let csv = report_csv(&evaluate_checkpoint(&ckpt, &ds)?);
            std::fs::write(&report, &csv)?;
            print!("{csv}");
        }
        Command::Serve {
            ckpt,
            port,
            data_dir,
            host,
            static_dir,
        } => {
            let model = match ckpt {
                Some(p) => Some(bundle_from_model(Checkpoint::load(&p)?.model)?),
                None => None,
            };
            let mut cfg = ServiceConfig::new(data_dir);
            cfg.static_dir = static_dir;
            let state = AppState::new(&cfg, SpeechPipeline::from_env(), model)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(Arc::new(state), SocketAddr::new(host, port)))?;
        }
    }
    Ok(())
}
