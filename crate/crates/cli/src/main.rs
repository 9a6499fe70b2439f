use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dtkg_core::answer::flags;
use dtkg_core::chain::ChainOutcome;
use dtkg_core::config::LlmProviderKind;
use dtkg_core::eval::{self, JaccardScorer};
use dtkg_core::kg::MemoryStore;
use dtkg_core::scorer::Candidate;
use dtkg_core::transport::{DenyTransport, HttpTransport};
use dtkg_core::{Answer, Engine, EngineConfig, Error, Question};

const EXIT_INPUT: u8 = 1;
const EXIT_SERVICE: u8 = 2;

/// Dual-track knowledge-graph question answering.
#[derive(Parser, Debug)]
#[command(name = "dtkg", version)]
struct Cli {
    /// Flat TOML configuration file. `DTKG_<KEY>` variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// JSON list of {match_substring, response}; selects the scripted LLM.
    #[arg(long, global = true)]
    stub_script: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct QuestionArgs {
    #[arg(long)]
    question: String,
    #[arg(long, default_value = "q0")]
    id: String,
}

impl QuestionArgs {
    fn question(&self) -> Question {
        Question::new(self.id.clone(), self.question.clone())
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify, route, and answer one question.
    Answer(QuestionArgs),
    /// Print the track the classifier picks.
    Classify(QuestionArgs),
    /// Run the draft-decompose-verify track.
    Verify(QuestionArgs),
    /// Run the path-search track and print the explored tree.
    Chain(QuestionArgs),
    /// Show which triples the denoiser keeps for a question.
    Denoise {
        #[command(flatten)]
        q: QuestionArgs,
        /// Triples in fixture format (`s|s_label|r|r_label|o|o_label`).
        #[arg(long)]
        triples: PathBuf,
    },
    /// Evaluate a JSONL dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Where to write the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let service = error
            .chain()
            .filter_map(|c| c.downcast_ref::<Error>())
            .any(Error::is_service_failure);
        Failure {
            code: if service { EXIT_SERVICE } else { EXIT_INPUT },
            error,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<EngineConfig, Failure> {
    let mut cfg = EngineConfig::load(cli.config.as_deref())
        .with_context(|| match &cli.config {
            Some(p) => format!("loading config {}", p.display()),
            None => "loading default config".to_string(),
        })
        .map_err(|error| Failure { code: EXIT_INPUT, error })?;
    if let Some(script) = &cli.stub_script {
        cfg.llm_provider = LlmProviderKind::Stub;
        cfg.stub_script = Some(script.clone());
    }
    Ok(cfg)
}

fn build_engine(cfg: EngineConfig) -> Result<Engine, Failure> {
    let transport: Arc<dyn HttpTransport> = if cfg.is_offline() {
        Arc::new(DenyTransport::new())
    } else {
        Engine::default_transport(&cfg)?
    };
    Engine::from_config(cfg, transport).map_err(|e| {
        let code = if e.is_service_failure() { EXIT_SERVICE } else { EXIT_INPUT };
        Failure {
            code,
            error: anyhow::Error::new(e).context("building engine"),
        }
    })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Exit code for an answer that may carry failure flags.
fn answer_code(a: &Answer) -> u8 {
    if a.has_flag(flags::SERVICE_FAILURE) {
        EXIT_SERVICE
    } else if a.has_flag(flags::ERROR) {
        EXIT_INPUT
    } else {
        0
    }
}

fn print_tree(outcome: &ChainOutcome) {
    match &outcome.central_entity {
        Some(e) => println!("{} [{}]", e.name(), e.id),
        None => println!("(no central entity)"),
    }
    for node in &outcome.explored {
        let mark = match node.sufficient {
            Some(true) => "  <- sufficient",
            _ => "",
        };
        println!(
            "{}{} (hop {:.3}, path {:.3}){mark}",
            "  ".repeat(node.depth),
            node.hop.describe(),
            node.hop.relation_score,
            node.path_score
        );
    }
    println!("expansions: {}", outcome.expand_calls);
}

fn read_triples(path: &Path) -> Result<Vec<Candidate>, Failure> {
    let store = MemoryStore::load(path)
        .with_context(|| format!("reading triples from {}", path.display()))
        .map_err(|error| Failure { code: EXIT_INPUT, error })?;
    Ok(store.triples().iter().cloned().map(Candidate::Triple).collect())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Answer(q) => {
            let engine = build_engine(cfg)?;
            let a = engine.answer(&q.question());
            print_json(&a)?;
            Ok(answer_code(&a))
        }
        Command::Classify(q) => {
            let engine = build_engine(cfg)?;
            let c = engine.classify(&q.question())?;
            print_json(&c)?;
            Ok(0)
        }
        Command::Verify(q) => {
            let engine = build_engine(cfg)?;
            let a = engine.run_parallel(&q.question())?;
            print_json(&a)?;
            Ok(0)
        }
        Command::Chain(q) => {
            let engine = build_engine(cfg)?;
            let outcome = engine.run_chain(&q.question())?;
            print_tree(&outcome);
            print_json(&outcome.answer)?;
            Ok(0)
        }
        Command::Denoise { q, triples } => {
            let candidates = read_triples(triples)?;
            let engine = build_engine(cfg)?;
            let out = engine.denoise(candidates, &q.question());
            for c in &out.kept {
                println!("keep       {}", c.verbalize());
            }
            for c in &out.dropped_by_rule {
                println!("drop:rule  {}", c.verbalize());
            }
            for c in &out.dropped_by_necessity {
                println!("drop:need  {}", c.verbalize());
            }
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            Ok(0)
        }
        Command::Eval { dataset, out } => {
            let ds = eval::load_dataset(dataset).map_err(|e| Failure {
                code: EXIT_INPUT,
                error: e.into(),
            })?;
            let tau = cfg.tau;
            let parallelism = cfg.parallelism;
            let engine = build_engine(cfg)?;
            let report = eval::evaluate(&ds, |q| engine.answer(q), &JaccardScorer, tau, parallelism);
            print!("{}", report.table());
            if let Some(path) = out {
                let json = serde_json::to_string_pretty(&report)?;
                std::fs::write(path, json)
                    .with_context(|| format!("writing report to {}", path.display()))
                    .map_err(|error| Failure { code: EXIT_INPUT, error })?;
            }
            Ok(0)
        }
    }
}
