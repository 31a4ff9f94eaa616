use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use equivguard::artifact::{Cache, Chain, CompileOptions};
use equivguard::detect::{DetectConfig, Mode};
use equivguard::report::{analyze, emit_sarif, run_corpus, AnalyzeOptions, Input, EXIT_CLEAN, EXIT_ERROR};
use equivguard::symexec::SolverConfig;
use equivguard::Smell;
use semver::Version;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser, Debug)]
#[command(name = "equivguard", version, about = "Finds EVM-inequivalence code smells in Solidity contracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analyze a source file, a source directory, or a verified on-chain contract.
    Analyze(AnalyzeArgs),
    /// Analyze every entry of a labeled manifest and report precision and recall.
    Corpus(CorpusArgs),
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Solidity file or directory.
    #[arg(required_unless_present = "address", conflicts_with_all = ["chain", "address"])]
    path: Option<PathBuf>,
    /// Explorer to fetch from (ethereum, bsc, polygon, arbitrum, optimism, avalanche, custom:<url>).
    #[arg(long, requires = "address", value_parser = parse_chain)]
    chain: Option<Chain>,
    #[arg(long)]
    address: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    manifest: PathBuf,
    /// Worker threads; 0 uses one per logical core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Text)]
    format: CorpusFormat,
    /// Also write the full JSON corpus report here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Compiler version to use instead of the pragma-selected one.
    #[arg(long)]
    solc: Option<Version>,
    /// Comma-separated smell ids.
    #[arg(long, value_delimiter = ',', value_parser = parse_smell)]
    detectors: Vec<Smell>,
    /// Per-contract budget in seconds.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    /// Per-query solver timeout in seconds.
    #[arg(long, default_value_t = 5)]
    solver_timeout: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    mode: ModeArg,
    /// Loop unrolling bound for path verification.
    #[arg(long, default_value_t = 2)]
    unroll: u32,
    #[arg(long, env = "EQUIVGUARD_EXPLORER_KEY", hide_env_values = true)]
    api_key: Option<String>,
    /// Cache directory for compilers, compilations and explorer payloads.
    #[arg(long, env = "EQUIVGUARD_CACHE")]
    cache_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Json,
    Sarif,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CorpusFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Full,
    StaticOnly,
}

fn parse_chain(s: &str) -> Result<Chain, String> {
    s.parse()
}

fn parse_smell(s: &str) -> Result<Smell, String> {
    s.parse()
}

impl CommonArgs {
    fn options(&self) -> AnalyzeOptions {
        let cache = self.cache_dir.clone().map(Cache::new).unwrap_or_else(Cache::default_location);
        let mode = match self.mode {
            ModeArg::Full => Mode::Full,
            ModeArg::StaticOnly => Mode::StaticOnly,
        };
        let solver = SolverConfig::discover(Duration::from_secs(self.solver_timeout));
        if mode == Mode::Full && solver.is_none() {
            log::warn!("no SMT solver found (set EQUIVGUARD_SOLVER); findings stay unverified");
        }
        let mut detect = DetectConfig {
            mode,
            unroll: self.unroll,
            solver,
            budget: Duration::from_secs(self.timeout),
            ..DetectConfig::default()
        };
        if !self.detectors.is_empty() {
            detect.enabled = self.detectors.iter().copied().collect();
        }
        AnalyzeOptions {
            detect,
            compile: CompileOptions::discover(Some(cache.clone())),
            solc: self.solc.clone(),
            cache,
            api_key: self.api_key.clone(),
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_analyze(a: &AnalyzeArgs) -> Result<i32> {
    let input = match (&a.path, &a.chain, &a.address) {
        (Some(p), _, _) => Input::Path(p.clone()),
        (None, chain, Some(addr)) => Input::Explorer {
            chain: chain.clone().unwrap_or(Chain::Ethereum),
            address: addr.clone(),
        },
        _ => bail!("expected a path or --address"),
    };
    let report = analyze(&input, &a.common.options())?;
    let body = match a.format {
        Format::Text => report.render_text(),
        Format::Json => report.to_json() + "\n",
        Format::Sarif => serde_json::to_string_pretty(&emit_sarif(&report))? + "\n",
    };
    emit(a.out.as_deref(), &body)?;
    for d in &report.diagnostics {
        log::info!("{}: {}", d.kind, d.message);
    }
    Ok(report.exit_code())
}

fn run_corpus_cmd(c: &CorpusArgs) -> Result<i32> {
    let corpus = run_corpus(&c.manifest, &c.common.options(), c.workers)?;
    if let Some(p) = &c.out {
        std::fs::write(p, corpus.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    match c.format {
        CorpusFormat::Text => print!("{}", corpus.stats.render_text()),
        CorpusFormat::Json => println!("{}", corpus.to_json()),
    }
    Ok(EXIT_CLEAN)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => run_analyze(a),
        Command::Corpus(c) => run_corpus_cmd(c),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
