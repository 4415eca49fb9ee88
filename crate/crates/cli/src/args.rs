use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "firmscan", version, about = "Firmware SBOM, CVE and memory-safety impact scanner")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Flat key=value configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Vulnerability index file.
    #[arg(long, global = true, value_name = "FILE")]
    pub index: Option<PathBuf>,
    /// Extraction cache directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Output directory for reports.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Never touch the network (default).
    #[arg(long, global = true, overrides_with = "online")]
    pub offline: bool,
    /// Allow network access for `feed fetch`.
    #[arg(long, global = true, overrides_with = "offline")]
    pub online: bool,
    #[arg(long, global = true, value_enum)]
    pub classifier: Option<ClassifierMode>,
    /// Chat-completions URL used by `--classifier rule-then-llm`.
    #[arg(long, global = true, value_name = "URL")]
    pub llm_endpoint: Option<String>,
    #[arg(long, global = true)]
    pub llm_model: Option<String>,
    /// Worker count.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,
    /// Fixed timestamps and serial numbers.
    #[arg(long, global = true)]
    pub reproducible: bool,
    /// Write the primary machine output to stdout instead of files.
    #[arg(long, global = true)]
    pub stdout: bool,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierMode {
    Rule,
    RuleThenLlm,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Manage the local vulnerability index.
    #[command(subcommand)]
    Feed(FeedCommand),
    /// Extract a firmware image and write its SBOM.
    Scan {
        /// Firmware image, root directory or tarball.
        image: PathBuf,
    },
    /// Match an SBOM (or image) against the index and classify the CVEs.
    Analyze {
        /// CycloneDX SBOM, firmware image, root directory or tarball.
        input: PathBuf,
    },
    /// Scan and analyze every input in a directory.
    Corpus {
        dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_cwes: usize,
        #[arg(long, default_value_t = 5)]
        top_cpes: usize,
    },
    /// Before/after counts when memory-related CVEs are removed.
    Impact {
        /// occurrences.csv from `analyze` or `corpus`.
        occurrences: PathBuf,
        /// Images to average over (defaults to distinct firmware ids).
        #[arg(long)]
        firmware_count: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum FeedCommand {
    /// Build the index from NVD JSON files.
    Ingest { feeds: Vec<PathBuf> },
    /// Download records from the NVD API (requires --online).
    Fetch {
        #[arg(long)]
        cpe_name: Option<String>,
        #[arg(long)]
        keyword: Option<String>,
        /// API base URL.
        #[arg(long)]
        url: Option<String>,
    },
}
