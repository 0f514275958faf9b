mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "honeycomb", version, about = "Retrieval-augmented materials-science agent")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

/// Flags override environment variables, which override the config file.
#[derive(Args, Clone)]
pub struct GlobalOpts {
    /// TOML config file; relative paths inside it resolve against its directory.
    #[arg(long, global = true, env = "HONEYCOMB_CONFIG")]
    pub config: Option<PathBuf>,
    /// LLM provider: remote, scripted:<path> or replay:<dir>.
    #[arg(long, global = true, env = "HONEYCOMB_PROVIDER")]
    pub provider: Option<String>,
    /// Knowledge base store directory.
    #[arg(long, global = true, env = "HONEYCOMB_KB")]
    pub kb: Option<PathBuf>,
    /// `none`, or a comma list of `kb` and `tools`.
    #[arg(long, global = true, env = "HONEYCOMB_ABLATION")]
    pub ablation: Option<String>,
    #[arg(long, global = true, env = "HONEYCOMB_SEED")]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Manage the knowledge base.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Answer one question.
    Ask {
        query: String,
        /// Write the JSONL trace of the run to this file.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Run benchmark evaluations.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Inspect and call registered tools.
    #[command(subcommand)]
    Tools(ToolsCommand),
    /// Build domain atomic tools from training questions.
    #[command(subcommand)]
    Itc(ItcCommand),
}

#[derive(Subcommand)]
pub enum KbCommand {
    /// Import a JSONL record file into the store.
    Import {
        file: PathBuf,
        /// Override the source kind of every record.
        #[arg(long)]
        source_kind: Option<String>,
    },
    /// Insert or replace one entry; prints its id.
    Put {
        #[arg(long)]
        key: String,
        #[arg(long)]
        value: String,
        #[arg(long)]
        source_kind: String,
        /// Slash-separated category path.
        #[arg(long, default_value = "")]
        category: String,
        #[arg(long)]
        id: Option<String>,
    },
    /// Print one entry as JSON.
    Get { id: String },
    Delete { id: String },
    /// Entry counts by source and category.
    Stats {
        /// Report the counts declared in a manifest file instead of the store.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
pub enum EvalCommand {
    /// Answer and grade every question of a dataset.
    Run {
        dataset: PathBuf,
        /// Directory for results.jsonl and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare summaries of the same dataset under different ablations.
    Ablation {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
pub enum ToolsCommand {
    List,
    Describe { name: String },
    /// Call a tool with a JSON object of arguments.
    Invoke { name: String, args: String },
}

#[derive(Subcommand)]
pub enum ItcCommand {
    /// Shuffle a question file and split it into train.jsonl and test.jsonl.
    Split {
        questions: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        ratio: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate one function per question, skipping ones already generated.
    Generate {
        questions: PathBuf,
        /// Functions file, created or extended.
        #[arg(long)]
        functions: PathBuf,
        /// Also write a review sheet for the pending functions.
        #[arg(long)]
        review_sheet: Option<PathBuf>,
    },
    /// Apply reviewer verdicts to the functions file.
    Review {
        #[arg(long)]
        functions: PathBuf,
        verdicts: PathBuf,
    },
    /// Decompose approved functions into atomic functions.
    Decompose {
        #[arg(long)]
        functions: PathBuf,
        /// Atomic functions produced by this run.
        #[arg(long)]
        out: PathBuf,
        /// Audit log, appended to.
        #[arg(long)]
        audit: PathBuf,
    },
    /// Merge new atomic functions into an atom directory and export its registry.
    Merge {
        new: PathBuf,
        #[arg(long)]
        atoms_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Kb(cmd) => commands::kb(&cli.global, cmd),
        Command::Ask { query, trace_out } => commands::ask(&cli.global, &query, trace_out.as_deref()),
        Command::Eval(cmd) => commands::eval(&cli.global, cmd),
        Command::Tools(cmd) => commands::tools(&cli.global, cmd),
        Command::Itc(cmd) => commands::itc(&cli.global, cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
