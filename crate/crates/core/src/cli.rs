//! Command-line front end. The binary is a thin wrapper over [`run`].
//!
//! State lives in an NDJSON journal (authoritative) plus a snapshot that
//! readers load to skip most of the replay. Probabilities are always printed
//! with six decimals.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{
    journal_replay, load_snapshot, read_journal, write_event, AttributeKey, BankError,
    BeliefEntry, JournalError, MemoryBank, OpKind, SnapshotError,
};
use crate::belief::{BeliefConfig, ContradictionMode};
use crate::extraction::{
    ExtractError, Extractor, Observation, RemoteExtractor, RemoteExtractorConfig, RuleExtractor,
};
use crate::harness::{
    run_adversarial, run_convergence, scenario_api_timeout, write_curves_csv, AdversarialSpec,
    ApiBehavior, ConvergenceSpec, ExperimentMetrics, HarnessError, MemoryKind, Policy,
};
use crate::retrieval::{read, Embedder, HashEmbedder, Query, RemoteEmbedder, RetrievalError};

pub const ENV_EXTRACTOR_URL: &str = "BELIEFMEM_EXTRACTOR_URL";
pub const ENV_EMBEDDER_URL: &str = "BELIEFMEM_EMBEDDER_URL";
pub const ENV_HTTP_TIMEOUT_MS: &str = "BELIEFMEM_HTTP_TIMEOUT_MS";
pub const ENV_HTTP_RETRIES: &str = "BELIEFMEM_HTTP_RETRIES";

/// Process exit categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ExitCategory {
    Ok = 0,
    Validation = 1,
    Usage = 2,
    Io = 3,
    Journal = 4,
    Extractor = 5,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Journal(String),
    #[error("{0}")]
    Extractor(String),
}

impl CliError {
    pub fn category(&self) -> ExitCategory {
        match self {
            CliError::Validation(_) => ExitCategory::Validation,
            CliError::Usage(_) => ExitCategory::Usage,
            CliError::Io { .. } => ExitCategory::Io,
            CliError::Journal(_) => ExitCategory::Journal,
            CliError::Extractor(_) => ExitCategory::Extractor,
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> Self {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

impl From<BankError> for CliError {
    fn from(e: BankError) -> Self {
        match &e {
            BankError::ExtractionFailed {
                source: ExtractError::Remote(_),
                ..
            } => CliError::Extractor(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<JournalError> for CliError {
    fn from(e: JournalError) -> Self {
        match e {
            JournalError::Io(source) => CliError::Io {
                context: "reading journal".into(),
                source,
            },
            other => CliError::Journal(other.to_string()),
        }
    }
}

impl From<SnapshotError> for CliError {
    fn from(e: SnapshotError) -> Self {
        CliError::Journal(e.to_string())
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Embed(inner) => CliError::Extractor(inner.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io(source) => CliError::Io {
                context: "writing metrics".into(),
                source,
            },
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub journal: PathBuf,
    pub snapshot: PathBuf,
    pub metrics_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            journal: "beliefmem.journal.ndjson".into(),
            snapshot: "beliefmem.snapshot.json".into(),
            metrics_dir: "metrics".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExtractorChoice {
    Rule,
    Remote {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_retries")]
        retries: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbedderChoice {
    /// Uses `belief.embed_dim`.
    Hash,
    Remote {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_retries")]
        retries: u32,
    },
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

/// Everything a command needs. Loaded from TOML, then environment, then flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub belief: BeliefConfig,
    pub paths: Paths,
    pub extractor: ExtractorChoice,
    pub embedder: EmbedderChoice,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            belief: BeliefConfig::default(),
            paths: Paths::default(),
            extractor: ExtractorChoice::Rule,
            embedder: EmbedderChoice::Hash,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Remote endpoints and HTTP settings from the environment. A URL
    /// variable switches the corresponding component to its remote kind.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), CliError> {
        let parse_num = |name: &str, v: String| {
            v.parse::<u64>()
                .map_err(|_| CliError::Validation(format!("{name}: `{v}` is not a non-negative integer")))
        };
        let timeout = var(ENV_HTTP_TIMEOUT_MS)
            .map(|v| parse_num(ENV_HTTP_TIMEOUT_MS, v))
            .transpose()?;
        let retries = var(ENV_HTTP_RETRIES)
            .map(|v| parse_num(ENV_HTTP_RETRIES, v).map(|n| n.min(u64::from(u32::MAX)) as u32))
            .transpose()?;
        if let Some(url) = var(ENV_EXTRACTOR_URL) {
            self.extractor = ExtractorChoice::Remote {
                url,
                timeout_ms: default_timeout_ms(),
                retries: default_retries(),
            };
        }
        if let Some(url) = var(ENV_EMBEDDER_URL) {
            self.embedder = EmbedderChoice::Remote {
                url,
                timeout_ms: default_timeout_ms(),
                retries: default_retries(),
            };
        }
        for choice in [&mut self.extractor as &mut dyn HttpSettings, &mut self.embedder] {
            choice.set_http(timeout, retries);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.belief
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        for url in [self.extractor.url(), self.embedder.url()].into_iter().flatten() {
            if url.trim().is_empty() {
                return Err(CliError::Validation("remote selection requires a url".into()));
            }
        }
        Ok(())
    }

    fn build_extractor(&self) -> Result<Box<dyn Extractor>, CliError> {
        Ok(match &self.extractor {
            ExtractorChoice::Rule => Box::new(RuleExtractor),
            ExtractorChoice::Remote {
                url,
                timeout_ms,
                retries,
            } => Box::new(
                RemoteExtractor::new(RemoteExtractorConfig {
                    url: url.clone(),
                    timeout_ms: *timeout_ms,
                    retries: *retries,
                })
                .map_err(|e| CliError::Extractor(e.to_string()))?,
            ),
        })
    }

    fn build_embedder(&self) -> Result<Box<dyn Embedder>, CliError> {
        let dim = self.belief.embed_dim;
        Ok(match &self.embedder {
            EmbedderChoice::Hash => {
                Box::new(HashEmbedder::new(dim).map_err(|e| CliError::Validation(e.to_string()))?)
            }
            EmbedderChoice::Remote {
                url,
                timeout_ms,
                retries,
            } => Box::new(
                RemoteEmbedder::new(url.clone(), dim, *timeout_ms, *retries)
                    .map_err(|e| CliError::Extractor(e.to_string()))?,
            ),
        })
    }
}

trait HttpSettings {
    fn set_http(&mut self, timeout: Option<u64>, retries: Option<u32>);
    fn url(&self) -> Option<&str>;
}

macro_rules! http_settings {
    ($ty:ident) => {
        impl HttpSettings for $ty {
            fn set_http(&mut self, timeout: Option<u64>, retries: Option<u32>) {
                if let $ty::Remote {
                    timeout_ms,
                    retries: r,
                    ..
                } = self
                {
                    if let Some(t) = timeout {
                        *timeout_ms = t;
                    }
                    if let Some(n) = retries {
                        *r = n;
                    }
                }
            }

            fn url(&self) -> Option<&str> {
                match self {
                    $ty::Remote { url, .. } => Some(url),
                    _ => None,
                }
            }
        }
    };
}

http_settings!(ExtractorChoice);
http_settings!(EmbedderChoice);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtractorKind {
    Rule,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderKind {
    Hash,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Convergence,
    Adversarial,
    Scenario,
}

#[derive(Debug, Parser)]
#[command(name = "beliefmem", version, about = "Probabilistic belief memory for agents")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub journal: Option<PathBuf>,
    #[arg(long, global = true)]
    pub snapshot: Option<PathBuf>,
    #[arg(long, global = true)]
    pub metrics_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub extractor: Option<ExtractorKind>,
    #[arg(long, global = true)]
    pub extractor_url: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub embedder: Option<EmbedderKind>,
    #[arg(long, global = true)]
    pub embedder_url: Option<String>,
    #[arg(long, global = true)]
    pub embed_dim: Option<usize>,
    #[arg(long, global = true)]
    pub http_timeout_ms: Option<u64>,
    #[arg(long, global = true)]
    pub http_retries: Option<u32>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub decay_rate: Option<f64>,
    #[arg(long, global = true)]
    pub max_candidates: Option<usize>,
    #[arg(long, global = true)]
    pub match_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub contradiction_mode: Option<ContradictionMode>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest observations: NDJSON objects, or `@obs <id> [date]` blocks of SVO lines.
    Ingest { file: PathBuf },
    /// Belief-aware top-K read.
    Query {
        text: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        as_of: Option<u64>,
    },
    /// Storage accounting.
    Stats,
    /// Full entries with version histories.
    Dump {
        /// `subject|predicate[|entities[|qualifiers]]`
        #[arg(long)]
        attribute: Option<String>,
    },
    /// Rebuild the snapshot from a journal, checking that replay is deterministic.
    Replay {
        #[arg(value_name = "JOURNAL")]
        source: PathBuf,
    },
    /// Run an experiment and write its metrics.
    Exp {
        #[arg(value_enum)]
        experiment: Experiment,
        /// TOML or JSON spec file, or `default`.
        #[arg(long)]
        spec: Option<String>,
    },
}

impl GlobalArgs {
    fn resolve(&self, env: impl Fn(&str) -> Option<String>) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::default(),
        };
        cfg.apply_env(env)?;
        if let Some(p) = &self.journal {
            cfg.paths.journal = p.clone();
        }
        if let Some(p) = &self.snapshot {
            cfg.paths.snapshot = p.clone();
        }
        if let Some(p) = &self.metrics_dir {
            cfg.paths.metrics_dir = p.clone();
        }
        let (timeout_ms, retries) = (
            self.http_timeout_ms.unwrap_or(default_timeout_ms()),
            self.http_retries.unwrap_or(default_retries()),
        );
        match (self.extractor, &self.extractor_url) {
            (Some(ExtractorKind::Rule), _) => cfg.extractor = ExtractorChoice::Rule,
            (Some(ExtractorKind::Remote), None) if cfg.extractor.url().is_none() => {
                return Err(CliError::Validation("--extractor remote needs --extractor-url".into()))
            }
            (_, Some(url)) => {
                cfg.extractor = ExtractorChoice::Remote {
                    url: url.clone(),
                    timeout_ms,
                    retries,
                }
            }
            _ => {}
        }
        match (self.embedder, &self.embedder_url) {
            (Some(EmbedderKind::Hash), _) => cfg.embedder = EmbedderChoice::Hash,
            (Some(EmbedderKind::Remote), None) if cfg.embedder.url().is_none() => {
                return Err(CliError::Validation("--embedder remote needs --embedder-url".into()))
            }
            (_, Some(url)) => {
                cfg.embedder = EmbedderChoice::Remote {
                    url: url.clone(),
                    timeout_ms,
                    retries,
                }
            }
            _ => {}
        }
        for choice in [&mut cfg.extractor as &mut dyn HttpSettings, &mut cfg.embedder] {
            choice.set_http(self.http_timeout_ms, self.http_retries);
        }
        if let Some(v) = self.embed_dim {
            cfg.belief.embed_dim = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.decay_rate {
            cfg.belief.decay_rate = v;
        }
        if let Some(v) = self.max_candidates {
            cfg.belief.max_candidates_per_attribute = v;
        }
        if let Some(v) = self.match_threshold {
            cfg.belief.match_threshold = v;
        }
        if let Some(v) = self.contradiction_mode {
            cfg.belief.contradiction_mode = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with_env(args, |k| std::env::var(k).ok(), out, err)
}

pub fn run_with_env<I, T>(
    args: I,
    env: impl Fn(&str) -> Option<String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitCategory::Usage } else { ExitCategory::Ok };
            let rendered = e.render().to_string();
            let _ = if code == ExitCategory::Ok {
                write!(out, "{rendered}")
            } else {
                write!(err, "{rendered}")
            };
            return code as i32;
        }
    };
    let result = cli
        .global
        .resolve(env)
        .and_then(|cfg| execute(&cli.command, &cfg, out));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.category() as i32
        }
    }
}

fn execute(command: &Command, cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let w = |r: io::Result<()>| r.map_err(CliError::io("writing output"));
    match command {
        Command::Ingest { file } => cmd_ingest(file, cfg, out),
        Command::Query { text, k, as_of } => {
            let bank = load_bank(cfg)?;
            let embedder = cfg.build_embedder()?;
            let mut query = Query::new(text.clone(), bank.config());
            if let Some(k) = k {
                query = query.with_k(*k);
            }
            if let Some(t) = as_of {
                query = query.as_of(*t);
            }
            let result = read(&bank, &query, embedder.as_ref())?;
            w(writeln!(
                out,
                "query \"{}\" at t={} ({} entries)",
                text,
                result.evaluated_at,
                result.entries.len()
            ))?;
            for (rank, e) in result.entries.iter().enumerate() {
                w(writeln!(
                    out,
                    "{:>3}. {}  score={:.6} sim={:.6} tau={}",
                    rank + 1,
                    e.attribute,
                    e.score,
                    e.similarity,
                    e.tau_at_query
                ))?;
                for c in &e.candidates {
                    w(writeln!(out, "       {:.6}  {}", c.probability.get(), c.hypothesis))?;
                }
            }
            Ok(())
        }
        Command::Stats => {
            let s = load_bank(cfg)?.stats();
            w(writeln!(out, "entries: {}", s.entries))?;
            w(writeln!(out, "active candidates (sum M_c): {}", s.total_active_candidates))?;
            w(writeln!(out, "storage bound (sum M_c*v_c): {}", s.storage_bound))?;
            w(writeln!(out, "stored versions: {}", s.stored_versions))?;
            w(writeln!(out, "journal length: {}", s.journal_len))?;
            w(writeln!(out, "logical clock: {}", s.logical_clock))?;
            for a in &s.per_attribute {
                w(writeln!(
                    out,
                    "  {}  M_c={} v_c={}",
                    a.attribute, a.active_candidates, a.retained_versions
                ))?;
            }
            Ok(())
        }
        Command::Dump { attribute } => {
            let bank = load_bank(cfg)?;
            match attribute {
                Some(text) => {
                    let key: AttributeKey = text
                        .parse()
                        .map_err(|e: BankError| CliError::Validation(e.to_string()))?;
                    let entry = bank
                        .entry(&key)
                        .ok_or_else(|| CliError::Validation(format!("unknown attribute `{key}`")))?;
                    w(dump_entry(out, entry))
                }
                None => {
                    for entry in bank.entries() {
                        w(dump_entry(out, entry))?;
                    }
                    Ok(())
                }
            }
        }
        Command::Replay { source } => {
            if !source.exists() {
                return Err(CliError::io(format!("opening {}", source.display()))(io::ErrorKind::NotFound.into()));
            }
            let events = read_journal_file(source)?;
            let first = journal_replay(&events, cfg.belief.clone())?;
            let second = journal_replay(&events, cfg.belief.clone())?;
            let snapshot = first.snapshot();
            let digest = snapshot.digest();
            if second.snapshot().to_canonical_string() != snapshot.to_canonical_string() {
                return Err(CliError::Journal("replay is not deterministic".into()));
            }
            write_atomic(&cfg.paths.snapshot, snapshot.to_canonical_string().as_bytes())?;
            w(writeln!(out, "events: {}", events.len()))?;
            w(writeln!(out, "logical clock: {}", first.logical_clock()))?;
            w(writeln!(out, "snapshot: {}", cfg.paths.snapshot.display()))?;
            w(writeln!(out, "digest: {digest}"))
        }
        Command::Exp { experiment, spec } => cmd_exp(*experiment, spec.as_deref(), cfg, out),
    }
}

fn dump_entry(out: &mut dyn Write, entry: &BeliefEntry) -> io::Result<()> {
    writeln!(out, "{}  tau={} created={}", entry.attribute, entry.staleness_tau, entry.created_at)?;
    for c in entry.ranked() {
        writeln!(
            out,
            "  {:.6}  {}  (created {}, updated {}, evidence {})",
            c.probability.get(),
            c.hypothesis,
            c.created_at,
            c.last_updated_at,
            c.evidence_refs.join(",")
        )?;
        for v in &c.version_history {
            writeln!(
                out,
                "      {:.6}  [{}, {})  {:?}",
                v.probability.get(),
                v.valid_from,
                v.valid_until,
                v.cause
            )?;
        }
    }
    Ok(())
}

/// Parses an observation file: NDJSON objects if the first non-blank line
/// starts with `{`, otherwise `@obs <id> [timestamp]` headers each followed
/// by SVO lines.
pub fn parse_observations(text: &str) -> Result<Vec<Observation>, CliError> {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty());
    if first.is_some_and(|l| l.starts_with('{')) {
        return text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| CliError::Validation(format!("line {}: {e}", i + 1)))
            })
            .collect();
    }
    let mut observations: Vec<Observation> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(header) = line.strip_prefix("@obs") {
            let mut parts = header.trim().splitn(2, char::is_whitespace);
            let id = parts.next().unwrap_or("");
            if id.is_empty() {
                return Err(CliError::Validation(format!("line {}: `@obs` needs an id", i + 1)));
            }
            let mut obs = Observation::structured(id, "", Vec::<String>::new());
            obs.timestamp_text = parts.next().map(|s| s.trim().to_owned()).filter(|s| !s.is_empty());
            observations.push(obs);
        } else {
            let obs = observations.last_mut().ok_or_else(|| {
                CliError::Validation(format!("line {}: SVO line before any `@obs` header", i + 1))
            })?;
            obs.structured_lines.get_or_insert_with(Vec::new).push(line.to_owned());
        }
    }
    Ok(observations)
}

fn read_journal_file(path: &Path) -> Result<Vec<crate::bank::JournalEvent>, CliError> {
    match File::open(path) {
        Ok(f) => Ok(read_journal(BufReader::new(f))?),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(CliError::io(format!("opening {}", path.display()))(e)),
    }
}

/// Snapshot plus journal suffix when the snapshot fits the journal and the
/// configuration; full replay otherwise.
fn load_bank(cfg: &RunConfig) -> Result<MemoryBank, CliError> {
    let events = read_journal_file(&cfg.paths.journal)?;
    if let Ok(text) = fs::read_to_string(&cfg.paths.snapshot) {
        match load_snapshot(&text) {
            Ok(bank)
                if bank.config() == &cfg.belief
                    && bank.next_seq() <= events.len() as u64 + 1
                    && (bank.next_seq() == 1
                        || events.get(bank.next_seq() as usize - 2).map(|e| e.seq)
                            == Some(bank.next_seq() - 1)) =>
            {
                let mut bank = bank;
                let start = bank.next_seq() as usize - 1;
                bank.replay_events(&events[start..])?;
                return Ok(bank);
            }
            Ok(_) => log::info!("snapshot does not match journal or config; replaying in full"),
            Err(e @ SnapshotError::Version { .. }) => return Err(e.into()),
            Err(e) => log::warn!("ignoring unreadable snapshot: {e}"),
        }
    }
    Ok(journal_replay(&events, cfg.belief.clone())?)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(CliError::io(format!("writing {}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(CliError::io(format!("replacing {}", path.display())))
}

fn cmd_ingest(file: &Path, cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(file).map_err(CliError::io(format!("reading {}", file.display())))?;
    let observations = parse_observations(&text)?;

    let mut journal = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&cfg.paths.journal)
        .map_err(CliError::io(format!("opening {}", cfg.paths.journal.display())))?;
    journal.try_lock().map_err(|e| CliError::Io {
        context: format!("journal {} is locked by another writer", cfg.paths.journal.display()),
        source: io::Error::other(e.to_string()),
    })?;

    let mut bank = load_bank(cfg)?;
    let extractor = cfg.build_extractor()?;
    let mut outcome = Ok(());
    let mut written = bank.journal().len();
    for obs in observations {
        let result = bank.ingest(obs, extractor.as_ref());
        for event in &bank.journal()[written..] {
            write_event(&mut journal, event).map_err(CliError::io("appending to journal"))?;
        }
        written = bank.journal().len();
        match result {
            Ok(report) => {
                writeln!(
                    out,
                    "ingested {} (seq {}, t={}, {} ops, {} dropped)",
                    report.observation_id,
                    report.seq,
                    report.logical_time,
                    report.ops_applied.len(),
                    report.dropped
                )
                .map_err(CliError::io("writing output"))?;
                for op in &report.ops_applied {
                    let verb = match op.op {
                        OpKind::Add => "add",
                        OpKind::Merge => "merge",
                        OpKind::Version => "version",
                    };
                    let before = op
                        .before
                        .map_or_else(|| "-".to_owned(), |p| format!("{:.6}", p.get()));
                    writeln!(
                        out,
                        "  {verb:<7} {}  {}: {before} -> {:.6}",
                        op.attribute,
                        op.hypothesis,
                        op.after.get()
                    )
                    .map_err(CliError::io("writing output"))?;
                }
            }
            Err(e) => {
                outcome = Err(CliError::from(e));
                break;
            }
        }
    }
    journal.sync_data().map_err(CliError::io("syncing journal"))?;
    write_atomic(&cfg.paths.snapshot, bank.snapshot().to_canonical_string().as_bytes())?;
    outcome
}

fn load_spec<T: serde::de::DeserializeOwned + Default>(spec: Option<&str>) -> Result<T, CliError> {
    match spec {
        None | Some("default") => Ok(T::default()),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(CliError::io(format!("reading {path}")))?;
            if path.ends_with(".json") {
                serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("spec: {e}")))
            } else {
                toml::from_str(&text).map_err(|e| CliError::Validation(format!("spec: {e}")))
            }
        }
    }
}

fn cmd_exp(
    experiment: Experiment,
    spec: Option<&str>,
    cfg: &RunConfig,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let dir = &cfg.paths.metrics_dir;
    fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    let put = |name: String, body: String| -> Result<PathBuf, CliError> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(CliError::io(format!("writing {}", path.display())))?;
        Ok(path)
    };
    let w = |r: io::Result<()>| r.map_err(CliError::io("writing output"));
    match experiment {
        Experiment::Convergence => {
            let mut spec: ConvergenceSpec = load_spec(spec)?;
            spec.seed = cfg.seed;
            let mut curves = Vec::new();
            for memory in [MemoryKind::Belief, MemoryKind::Frequency] {
                let outcome = run_convergence(&spec, memory)?;
                let metrics = ExperimentMetrics::convergence(&spec, &outcome);
                let path = put(
                    format!("convergence-{}-seed{}.json", memory.as_str(), spec.seed),
                    metrics.to_canonical_string(),
                )?;
                w(writeln!(
                    out,
                    "convergence {:<10} final Top-1 {:.6}  -> {}",
                    memory.as_str(),
                    outcome.final_rate,
                    path.display()
                ))?;
                curves.push((memory.as_str(), outcome.curve));
            }
            let mut csv = Vec::new();
            let named: Vec<(&str, &[f64])> = curves.iter().map(|(n, c)| (*n, c.as_slice())).collect();
            write_curves_csv(&mut csv, &named)?;
            let path = put(
                format!("convergence-seed{}.csv", spec.seed),
                String::from_utf8(csv).expect("csv is utf-8"),
            )?;
            w(writeln!(out, "curves -> {}", path.display()))
        }
        Experiment::Adversarial => {
            let mut spec: AdversarialSpec = load_spec(spec)?;
            spec.seed = cfg.seed;
            for memory in [MemoryKind::Belief, MemoryKind::Deterministic] {
                let metrics = run_adversarial(&spec, memory)?;
                let doc = ExperimentMetrics::adversarial(&spec, &metrics);
                let path = put(
                    format!("adversarial-{}-seed{}.json", memory.as_str(), spec.seed),
                    doc.to_canonical_string(),
                )?;
                let steps = metrics
                    .mean_correction_steps
                    .map_or_else(|| "n/a".to_owned(), |s| format!("{s:.6}"));
                w(writeln!(
                    out,
                    "adversarial {:<13} correction_rate {:.6} mean_steps {steps}  -> {}",
                    memory.as_str(),
                    metrics.correction_rate,
                    path.display()
                ))?;
            }
            Ok(())
        }
        Experiment::Scenario => {
            if spec.is_some_and(|s| s != "default") {
                return Err(CliError::Validation("the scenario takes no spec".into()));
            }
            for api in [ApiBehavior::RateLimitedThenHealthy, ApiBehavior::AlwaysHealthy] {
                for policy in [Policy::BeliefThreshold, Policy::DeterministicGreedy] {
                    let trace = scenario_api_timeout(policy, api)?;
                    let name = format!(
                        "scenario-{}-{}.json",
                        serde_json::to_value(policy).expect("enum").as_str().expect("string"),
                        serde_json::to_value(api).expect("enum").as_str().expect("string"),
                    );
                    let path = put(name, crate::canonical::to_canonical_string(&trace).expect("trace"))?;
                    w(writeln!(out, "{:?} / {:?}  -> {}", policy, api, path.display()))?;
                    for s in &trace.steps {
                        let beliefs: Vec<String> = s
                            .beliefs
                            .iter()
                            .map(|(h, p)| format!("{h}={p:.6}"))
                            .collect();
                        w(writeln!(
                            out,
                            "  step {}  {:<6} {:<8} top={}  {}",
                            s.step,
                            format!("{:?}", s.action).to_lowercase(),
                            format!("{:?}", s.outcome).to_lowercase(),
                            s.top.as_deref().unwrap_or("-"),
                            beliefs.join(" ")
                        ))?;
                    }
                }
            }
            Ok(())
        }
    }
}
