use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use drivetext_cli::commands::{self, Outcome};
use drivetext_cli::config::{LabelSource, RunConfig};

#[derive(Parser)]
#[command(name = "drivetext", version, about = "Driving explanation corpus analytics")]
struct Cli {
    /// Run configuration (TOML). Paths inside it are relative to its directory.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    conllu: Option<PathBuf>,
    #[arg(long, global = true)]
    annotations: Option<PathBuf>,
    #[arg(long, global = true)]
    taxonomy: Option<PathBuf>,
    #[arg(long, global = true)]
    template: Option<PathBuf>,
    #[arg(long, global = true)]
    dev: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Explanations classified concurrently.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Where keyness and syntax take context labels from.
    #[arg(long, global = true, value_enum)]
    label_source: Option<LabelSource>,
    /// Total prior mass for keyness.
    #[arg(long, global = true)]
    alpha0: Option<f64>,
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// Seed for the stratified gold sample.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exit 0 even when items were flagged.
    #[arg(long, global = true)]
    permissive: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and summarize the corpus.
    Ingest,
    /// Label every explanation with the three-model ensemble.
    Classify,
    /// Evaluate the prompt template on the dev set until it is accepted.
    Refine {
        /// Abort instead of prompting when the template is rejected.
        #[arg(long)]
        non_interactive: bool,
        #[arg(long)]
        tau_accept: Option<f64>,
    },
    /// Agreement of model labels with human annotations.
    Evaluate,
    /// Per-context keyness of lemmas.
    Keyness,
    /// Grammar families, slot templates and their reuse across contexts.
    Syntax,
    /// Verify artifacts and finalize the manifest.
    Report,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            *slot = v.clone();
        }
    };
    set(&mut cfg.corpus_path, &cli.corpus);
    set(&mut cfg.conllu_path, &cli.conllu);
    set(&mut cfg.annotations_path, &cli.annotations);
    set(&mut cfg.taxonomy_path, &cli.taxonomy);
    set(&mut cfg.template_path, &cli.template);
    set(&mut cfg.dev_path, &cli.dev);
    set(&mut cfg.cache_dir, &cli.cache_dir);
    if let Some(d) = &cli.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(n) = cli.parallelism {
        cfg.parallelism = n;
    }
    if let Some(l) = cli.label_source {
        cfg.label_source = l;
    }
    if let Some(a) = cli.alpha0 {
        cfg.keyness.alpha0 = a;
    }
    if let Some(k) = cli.top_k {
        cfg.keyness.top_k = k;
    }
    if let Some(s) = cli.seed {
        cfg.sampling.seed = s;
    }
    if let Command::Refine {
        tau_accept: Some(t), ..
    } = cli.command
    {
        cfg.refine.tau_accept = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Classify => commands::classify(&cfg),
        Command::Refine { non_interactive, .. } => {
            commands::refine(&cfg, !non_interactive, &mut std::io::stdin().lock())
        }
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Keyness => commands::keyness(&cfg),
        Command::Syntax => commands::syntax(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) => {
            println!("{}", o.summary);
            if o.flagged > 0 && !cli.permissive {
                eprintln!("{} item(s) flagged; rerun with --permissive to accept", o.flagged);
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
