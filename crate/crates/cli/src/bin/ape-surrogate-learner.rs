//! Serves a text surrogate over `ape/1` on stdin/stdout.
//!
//! `--exit-after-trains N` makes the process die without replying on the
//! training request after the N-th, which simulates a crashed trainer.

use std::io::{self, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ape_core::learner::protocol::serve;
use ape_core::synth::{synthetic_corpora, SynthSpec};
use ape_core::{
    Article, CheckpointToken, Corpus, Error, Example, Hyperparams, Learner, Result, Split, Summary,
    SurrogateParams, TapParams, TextSurrogate,
};

#[derive(Debug, Parser)]
#[command(name = "ape-surrogate-learner")]
struct Args {
    /// Corpus files whose references the surrogate corrupts.
    #[arg(long = "corpus")]
    corpora: Vec<PathBuf>,
    /// Synthetic corpora as TRAIN,TEST,SEED instead of files.
    #[arg(long, value_delimiter = ',')]
    synthetic: Option<Vec<u64>>,
    #[arg(long, default_value_t = 0.2)]
    skill: f64,
    #[arg(long, default_value_t = 0.5)]
    k: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    exit_after_trains: Option<u32>,
}

struct Crashing {
    inner: TextSurrogate,
    trains_left: Option<u32>,
}

impl Learner for Crashing {
    fn capabilities(&self) -> ape_core::Capabilities {
        self.inner.capabilities()
    }
    fn train(&mut self, batch: &[Example], hp: &Hyperparams) -> Result<()> {
        match &mut self.trains_left {
            Some(0) => std::process::exit(101),
            Some(n) => *n -= 1,
            None => {}
        }
        self.inner.train(batch, hp)
    }
    fn summarize(&mut self, articles: &[Article]) -> Result<Vec<Summary>> {
        self.inner.summarize(articles)
    }
    fn snapshot(&mut self) -> Result<CheckpointToken> {
        self.inner.snapshot()
    }
    fn restore(&mut self, token: &CheckpointToken) -> Result<()> {
        self.inner.restore(token)
    }
}

fn build(args: &Args) -> Result<Crashing> {
    let mut examples: Vec<Example> = Vec::new();
    for path in &args.corpora {
        examples.extend(Corpus::load_jsonl(path, Split::Train)?.examples().iter().cloned());
    }
    if let Some(s) = &args.synthetic {
        if s.len() != 3 {
            return Err(Error::Config("--synthetic takes TRAIN,TEST,SEED".into()));
        }
        let (train, test) = synthetic_corpora(&SynthSpec {
            train: s[0] as usize,
            test: s[1] as usize,
            seed: s[2],
        })?;
        examples.extend(train.examples().iter().chain(test.examples()).cloned());
    }
    let params = SurrogateParams {
        skill: args.skill,
        tap: TapParams::new(args.k, 1.0, 1.0)?,
        noise_sigma: args.noise,
        seed: args.seed,
    };
    Ok(Crashing {
        inner: TextSurrogate::new(params, &examples)?,
        trains_left: args.exit_after_trains,
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut learner = match build(&args) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("ape-surrogate-learner: {e}");
            return ExitCode::from(2);
        }
    };
    match serve(&mut learner, BufReader::new(io::stdin().lock()), io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ape-surrogate-learner: {e}");
            ExitCode::FAILURE
        }
    }
}
