use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "passagegen", version, about = "Generate, score, select and review reading passages")]
pub struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Manage the passage store.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Render prompt templates.
    #[command(subcommand)]
    Prompt(PromptCmd),
    /// Run a generation grid and inspect its results.
    #[command(subcommand)]
    Batch(BatchCmd),
    /// Score a text file.
    Score(ScoreArgs),
    /// Apply the SD band to scored candidates (same as `batch select`).
    Select(SelectArgs),
    /// Exchange passages with human editors.
    #[command(subcommand)]
    Review(ReviewCmd),
    /// Rater survey QC and reporting.
    #[command(subcommand)]
    Survey(SurveyCmd),
    /// Run the whole pipeline from a config file.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenreArg {
    Literary,
    Informational,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProvenanceArg {
    Reference,
    Generated,
    Edited,
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Append a passage read from a text file.
    Add {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        title: String,
        #[arg(long, value_enum)]
        genre: GenreArg,
        #[arg(long, value_enum, default_value = "reference")]
        provenance: ProvenanceArg,
        #[arg(long)]
        parent: Option<String>,
        #[arg(long = "tag")]
        tags: Vec<String>,
        /// UTF-8 file holding the passage text.
        #[arg(long)]
        text_file: PathBuf,
    },
    /// One line per passage: id, provenance, genre, selected, title.
    List {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, value_enum)]
        provenance: Option<ProvenanceArg>,
        #[arg(long)]
        tag: Option<String>,
    },
    /// Print a passage as JSON, with its lineage.
    Show {
        #[arg(long)]
        store: PathBuf,
        id: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum PromptCmd {
    /// Print the prompt for a spec file (JSON or TOML).
    Render {
        #[arg(long)]
        spec: PathBuf,
        /// Store to take the one-shot exemplar from.
        #[arg(long, requires = "exemplar")]
        store: Option<PathBuf>,
        /// Passage id used as the exemplar.
        #[arg(long, requires = "store")]
        exemplar: Option<String>,
        /// Fail if the prompt does not fit this context window.
        #[arg(long)]
        context_tokens: Option<usize>,
        #[arg(long, default_value_t = 0)]
        reserve: usize,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "provider")]
pub struct ProviderSel {
    /// Use the offline mock provider with this seed.
    #[arg(long, group = "provider")]
    pub mock_seed: Option<u64>,
    /// Completions endpoint URL.
    #[arg(long, group = "provider")]
    pub endpoint: Option<String>,
}

#[derive(Debug, Args)]
pub struct ProviderArgs {
    #[command(flatten)]
    pub sel: ProviderSel,
    #[arg(long, default_value = "OPENAI_API_KEY")]
    pub api_key_env: String,
    #[arg(long, default_value_t = 4)]
    pub in_flight: usize,
    #[arg(long, default_value_t = 3)]
    pub max_attempts: u32,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum BatchCmd {
    /// Generate and score every cell of a plan.
    Run {
        /// Batch plan (JSON or TOML).
        #[arg(long)]
        plan: PathBuf,
        /// Store that receives the generated passages.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    Select(SelectArgs),
    /// Per-condition score distribution.
    Summary {
        #[arg(long)]
        candidates: PathBuf,
        /// Write a strip/box chart here.
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long, requires = "halfwidth")]
        reference_score: Option<f64>,
        #[arg(long, requires = "reference_score")]
        halfwidth: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SdSourceArg {
    ReferencePool,
    CandidateBatch,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TieBreakArg {
    ClosestScore,
    EarliestReplicate,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Batch outcome or candidate list written by `batch run`.
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long, required_unless_present = "reference_passage", conflicts_with = "reference_passage")]
    pub reference_score: Option<f64>,
    #[arg(long, requires = "store")]
    pub reference_passage: Option<String>,
    /// Comma-separated reference pool scores.
    #[arg(long, value_delimiter = ',', conflicts_with = "pool_tag")]
    pub pool_scores: Option<Vec<f64>>,
    #[arg(long, requires = "store")]
    pub pool_tag: Option<String>,
    #[arg(long, value_enum, default_value = "reference-pool")]
    pub sd_source: SdSourceArg,
    #[arg(long)]
    pub max_selected: Option<usize>,
    #[arg(long, value_enum, default_value = "closest-score")]
    pub tie_break: TieBreakArg,
    /// Store to record selection marks in (and to read reference passages from).
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum ReviewCmd {
    /// Write selected candidates and a manifest for editors.
    Export {
        #[arg(long)]
        store: PathBuf,
        /// Comma-separated candidate ids.
        #[arg(long, value_delimiter = ',', required_unless_present = "batch", conflicts_with = "batch")]
        ids: Vec<String>,
        /// Export every candidate this batch selected.
        #[arg(long)]
        batch: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Read edited files back as edited passages.
    Import {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        packet: PathBuf,
        #[arg(long)]
        editor: String,
    },
}

#[derive(Debug, Args)]
pub struct SurveyInput {
    /// Response CSV: rater_id, completion_seconds, attention, item_<k>_<passage>...
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub generated: String,
    #[arg(long)]
    pub original: String,
    #[arg(long, default_value = "survey")]
    pub name: String,
    #[arg(long, default_value_t = 2.5)]
    pub threshold: f64,
}

#[derive(Debug, Subcommand)]
pub enum SurveyCmd {
    /// Flag time outliers, failed attention checks and incomplete responses.
    Qc(SurveyInput),
    /// QC, then per-item agreement table.
    Summarize(SurveyInput),
    /// Write CSV, tables and diverging bar charts.
    Report {
        /// Published percentages: survey,item,passage,strongly_disagree,disagree,agree,strongly_agree.
        #[arg(long, conflicts_with = "responses")]
        percentages: Option<PathBuf>,
        /// Sample size to annotate percentage tables with.
        #[arg(long, requires = "percentages")]
        n: Option<u64>,
        #[arg(long, requires_all = ["generated", "original"])]
        responses: Option<PathBuf>,
        #[arg(long)]
        generated: Option<String>,
        #[arg(long)]
        original: Option<String>,
        #[arg(long, default_value = "survey")]
        name: String,
        #[arg(long, default_value_t = 2.5)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Only validate the config.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// UTF-8 text file.
    pub file: PathBuf,
    /// Word frequency list (word,frequency).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Formula weights (TOML).
    #[arg(long)]
    pub formula: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}
