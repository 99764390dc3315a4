//! Config-driven stage runner over a fixed workdir layout.
//!
//! ```text
//! workdir/
//!   config.json         effective configuration (rewritten only on change)
//!   documents.jsonl     ingested, normalized documents
//!   queries.jsonl       ingested queries
//!   extraction.jsonl    one ExtractionRecord per document
//!   units.jsonl         training units
//!   ids.jsonl           identifier index
//!   model.json          checkpoint
//!   train_trace.jsonl   {epoch, loss} per epoch, epoch 0 = initial loss
//!   rankings.jsonl      ranked hits per test query
//!   metrics.jsonl       {variant, k, hits, n_queries}
//!   metrics.txt         the same as a table
//! ```
//!
//! A stage is skipped when every output is at least as new as every input.

use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use serde::{Deserialize, Serialize};

use crate::corpus::{ingest_corpus, validate_corpus, Corpus, Split};
use crate::extraction::{extract_corpus, Agent, ExrConfig, ExtractionRecord, RemoteAgent, RuleAgent, ScriptedAgent};
use crate::identifiers::{build_eids, build_etids, build_tids, build_trie, EidsConfig, IdentifierIndex, Scheme};
use crate::jsonl;
use crate::representation::{build_query_units, build_units, RepresentationConfig, TrainingUnit};
use crate::retrieval::{evaluate, format_table, Hit, MetricsReport, Retriever, DEFAULT_KS};
use crate::seq2seq::{build_vocab, train, ModelConfig, Seq2SeqModel, TrainConfig};
use crate::synthetic::{self, SyntheticConfig};
use crate::taxonomy::{load_taxonomy, CosineScore, Taxonomy};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("workdir {} is locked by another run (remove {} if no run is active)", .0.display(), .0.join(LOCK_FILE).display())]
    Locked(PathBuf),
}

impl PipelineError {
    fn stage(stage: Stage, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage { stage, message: e.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Extract,
    Represent,
    BuildIds,
    Train,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Ingest, Stage::Extract, Stage::Represent, Stage::BuildIds, Stage::Train, Stage::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Represent => "represent",
            Stage::BuildIds => "build-ids",
            Stage::Train => "train",
            Stage::Eval => "eval",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

pub const LOCK_FILE: &str = ".lock";
pub const CONFIG_SNAPSHOT: &str = "config.json";
pub const DOCUMENTS: &str = "documents.jsonl";
pub const QUERIES: &str = "queries.jsonl";
pub const EXTRACTION: &str = "extraction.jsonl";
pub const UNITS: &str = "units.jsonl";
pub const IDS: &str = "ids.jsonl";
pub const MODEL: &str = "model.json";
pub const TRAIN_TRACE: &str = "train_trace.jsonl";
pub const RANKINGS: &str = "rankings.jsonl";
pub const METRICS: &str = "metrics.jsonl";
pub const METRICS_TABLE: &str = "metrics.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub documents: PathBuf,
    pub queries: PathBuf,
    /// Line-delimited taxonomy; the bundled toy taxonomy when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<PathBuf>,
    pub workdir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AgentConfig {
    Rule {
        id: String,
    },
    Remote {
        id: String,
        url: String,
        /// Name of the environment variable holding the API key.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    Scripted {
        id: String,
        script: PathBuf,
    },
}

fn default_timeout() -> u64 {
    60
}

impl AgentConfig {
    pub fn id(&self) -> &str {
        match self {
            AgentConfig::Rule { id } | AgentConfig::Remote { id, .. } | AgentConfig::Scripted { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionSection {
    pub agents: Vec<AgentConfig>,
    pub exchange_rounds: usize,
    pub max_reflect_iters: usize,
    /// Defaults to the first agent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reflector: Option<String>,
}

impl Default for ExtractionSection {
    fn default() -> Self {
        ExtractionSection {
            agents: vec![AgentConfig::Rule { id: "rule".into() }],
            exchange_rounds: 2,
            max_reflect_iters: 3,
            reflector: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifiersSection {
    pub scheme: Scheme,
    /// TIds: number of leading tokens.
    pub length: usize,
    /// EIds: clusters per level.
    pub branching: usize,
    /// EIds: largest unsplit bucket.
    pub leaf_cap: usize,
    pub seed: u64,
}

impl Default for IdentifiersSection {
    fn default() -> Self {
        IdentifiersSection { scheme: Scheme::ETIds, length: 8, branching: 10, leaf_cap: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub width: usize,
    pub ks: Vec<usize>,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection { width: 20, ks: DEFAULT_KS.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub n_docs: usize,
    pub events_per_doc: usize,
    pub seed: u64,
    pub dropout: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let d = SyntheticConfig::default();
        SyntheticSection { n_docs: d.n_docs, events_per_doc: d.events_per_doc, seed: d.seed, dropout: d.dropout }
    }
}

impl From<&SyntheticSection> for SyntheticConfig {
    fn from(s: &SyntheticSection) -> Self {
        SyntheticConfig { n_docs: s.n_docs, events_per_doc: s.events_per_doc, seed: s.seed, dropout: s.dropout }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    #[serde(default)]
    pub synthetic: SyntheticSection,
    #[serde(default)]
    pub extraction: ExtractionSection,
    #[serde(default)]
    pub representation: RepresentationConfig,
    #[serde(default)]
    pub identifiers: IdentifiersSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub retrieval: RetrievalSection,
}

impl PipelineConfig {
    /// Parses a TOML config; relative paths are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: PipelineConfig =
            toml::from_str(&raw).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.documents);
        fix(&mut self.paths.queries);
        fix(&mut self.paths.workdir);
        if let Some(t) = &mut self.paths.taxonomy {
            fix(t);
        }
        for agent in &mut self.extraction.agents {
            if let AgentConfig::Scripted { script, .. } = agent {
                fix(script);
            }
        }
    }

    /// Value checks that need no filesystem access.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let ex = &self.extraction;
        if ex.agents.is_empty() {
            return bad("extraction.agents must list at least one agent".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for a in &ex.agents {
            if !ids.insert(a.id()) {
                return bad(format!("duplicate agent id `{}`", a.id()));
            }
        }
        if let Some(r) = &ex.reflector {
            if !ids.contains(r.as_str()) {
                return bad(format!("reflector `{r}` is not a configured agent"));
            }
        }
        if ex.exchange_rounds == 0 || ex.max_reflect_iters == 0 {
            return bad("exchange_rounds and max_reflect_iters must be at least 1".into());
        }
        self.representation.validate().map_err(PipelineError::Config)?;
        let id = &self.identifiers;
        if id.length == 0 {
            return bad("identifiers.length must be at least 1".into());
        }
        if id.branching < 2 || id.leaf_cap == 0 {
            return bad("identifiers.branching must be at least 2 and leaf_cap at least 1".into());
        }
        self.model.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.train.learning_rate <= 0.0 {
            return bad("train.learning_rate must be positive".into());
        }
        let r = &self.retrieval;
        if r.ks.is_empty() || r.ks.contains(&0) {
            return bad("retrieval.ks must be non-empty positive integers".into());
        }
        if r.width < *r.ks.iter().max().unwrap() {
            return bad(format!("retrieval.width {} is smaller than the largest k", r.width));
        }
        Ok(())
    }

    /// Overrides every seed in the config.
    pub fn set_seed(&mut self, seed: u64) {
        self.synthetic.seed = seed;
        self.identifiers.seed = seed;
        self.model.init_seed = seed;
        self.train.shuffle_seed = seed;
    }

    pub fn variant(&self) -> String {
        format!("{}+{}", self.representation.mode, self.identifiers.scheme)
    }
}

/// Exclusive claim on a workdir; released on drop.
#[derive(Debug)]
pub struct WorkdirLock {
    path: PathBuf,
}

impl WorkdirLock {
    pub fn acquire(workdir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(workdir)
            .map_err(|e| PipelineError::Config(format!("cannot create workdir {}: {e}", workdir.display())))?;
        let path = workdir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WorkdirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(workdir.into())),
            Err(e) => Err(PipelineError::Config(format!("cannot create {}: {e}", path.display()))),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn mtime(path: &Path) -> Option<SystemTime> {
    fs::metadata(path).and_then(|m| m.modified()).ok()
}

/// True when all outputs exist and none is older than any input.
pub fn is_fresh(inputs: &[PathBuf], outputs: &[PathBuf]) -> bool {
    let newest_input = inputs.iter().filter_map(|p| mtime(p)).max();
    let oldest_output = outputs.iter().map(|p| mtime(p)).collect::<Option<Vec<_>>>().and_then(|v| v.into_iter().min());
    match (newest_input, oldest_output) {
        (_, None) => false,
        (None, Some(_)) => true,
        (Some(i), Some(o)) => o >= i,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceLine {
    epoch: usize,
    loss: f64,
}

/// One configured run over one workdir.
pub struct Pipeline {
    pub config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Pipeline { config }
    }

    pub fn workdir(&self) -> &Path {
        &self.config.paths.workdir
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.workdir().join(file)
    }

    fn snapshot(&self) -> PathBuf {
        self.path(CONFIG_SNAPSHOT)
    }

    /// Writes the effective config into the workdir unless an identical one
    /// is already there, so its mtime marks the last real change.
    pub fn write_snapshot(&self) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(&self.config).expect("config serializes");
        let path = self.snapshot();
        if fs::read_to_string(&path).ok().as_deref() == Some(text.as_str()) {
            return Ok(());
        }
        fs::create_dir_all(self.workdir())
            .and_then(|_| fs::write(&path, text))
            .map_err(|e| PipelineError::Config(format!("cannot write {}: {e}", path.display())))
    }

    /// Files each stage reads; the config snapshot is an input everywhere.
    pub fn inputs(&self, stage: Stage) -> Vec<PathBuf> {
        let mut v = vec![self.snapshot()];
        match stage {
            Stage::Ingest => {
                v.push(self.config.paths.documents.clone());
                v.push(self.config.paths.queries.clone());
            }
            Stage::Extract => {
                v.push(self.path(DOCUMENTS));
                for a in &self.config.extraction.agents {
                    if let AgentConfig::Scripted { script, .. } = a {
                        v.push(script.clone());
                    }
                }
            }
            Stage::Represent => v.extend([self.path(EXTRACTION), self.path(QUERIES)]),
            Stage::BuildIds => {
                v.extend([self.path(DOCUMENTS), self.path(EXTRACTION)]);
                if let Some(t) = &self.config.paths.taxonomy {
                    v.push(t.clone());
                }
            }
            Stage::Train => v.extend([self.path(UNITS), self.path(IDS)]),
            Stage::Eval => v.extend([self.path(MODEL), self.path(IDS), self.path(QUERIES)]),
        }
        v
    }

    pub fn outputs(&self, stage: Stage) -> Vec<PathBuf> {
        let files: &[&str] = match stage {
            Stage::Ingest => &[DOCUMENTS, QUERIES],
            Stage::Extract => &[EXTRACTION],
            Stage::Represent => &[UNITS],
            Stage::BuildIds => &[IDS],
            Stage::Train => &[MODEL, TRAIN_TRACE],
            Stage::Eval => &[RANKINGS, METRICS, METRICS_TABLE],
        };
        files.iter().map(|f| self.path(f)).collect()
    }

    pub fn is_fresh(&self, stage: Stage) -> bool {
        is_fresh(&self.inputs(stage), &self.outputs(stage))
    }

    /// Checks the files a full run needs before anything starts.
    pub fn check_sources(&self) -> Result<(), PipelineError> {
        let p = &self.config.paths;
        let mut required = vec![&p.documents, &p.queries];
        required.extend(p.taxonomy.iter());
        for a in &self.config.extraction.agents {
            if let AgentConfig::Scripted { script, .. } = a {
                required.push(script);
            }
            if let AgentConfig::Remote { id, api_key_env: Some(var), .. } = a {
                if std::env::var_os(var).is_none() {
                    return Err(PipelineError::Config(format!(
                        "agent `{id}` reads its API key from ${var}, which is not set"
                    )));
                }
            }
        }
        for path in required {
            if !path.exists() {
                return Err(PipelineError::Config(format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }

    fn need(&self, stage: Stage, file: &str, producer: Stage) -> Result<PathBuf, PipelineError> {
        let path = self.path(file);
        if path.exists() {
            Ok(path)
        } else {
            Err(PipelineError::Stage {
                stage,
                message: format!("{} is missing; run `evret {}` first", path.display(), producer),
            })
        }
    }

    pub fn run_stage(&self, stage: Stage) -> Result<(), PipelineError> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Extract => self.extract(),
            Stage::Represent => self.represent(),
            Stage::BuildIds => self.build_ids(),
            Stage::Train => self.train().map(|_| ()),
            Stage::Eval => self.eval().map(|_| ()),
        }
    }

    /// Every stage in order, skipping those whose outputs are up to date.
    /// `report` sees each stage's outcome as it completes.
    pub fn run_all(&self, mut report: impl FnMut(Stage, StageOutcome)) -> Result<MetricsReport, PipelineError> {
        self.check_sources()?;
        self.write_snapshot()?;
        for stage in Stage::ALL {
            if self.is_fresh(stage) {
                report(stage, StageOutcome::Skipped);
                continue;
            }
            self.run_stage(stage)?;
            report(stage, StageOutcome::Ran);
        }
        self.read_metrics()
    }

    pub fn ingest(&self) -> Result<(), PipelineError> {
        let s = Stage::Ingest;
        let p = &self.config.paths;
        let corpus = ingest_corpus(&p.documents, &p.queries).map_err(|e| PipelineError::stage(s, e))?;
        for problem in validate_corpus(&corpus) {
            log::warn!("{problem}");
        }
        fs::create_dir_all(self.workdir()).map_err(|e| PipelineError::stage(s, e))?;
        corpus.write(&self.path(DOCUMENTS), &self.path(QUERIES)).map_err(|e| PipelineError::stage(s, e))?;
        log::info!("ingested {} documents, {} queries", corpus.len(), corpus.queries().len());
        Ok(())
    }

    fn corpus(&self, stage: Stage) -> Result<Corpus, PipelineError> {
        let docs = self.need(stage, DOCUMENTS, Stage::Ingest)?;
        let queries = self.need(stage, QUERIES, Stage::Ingest)?;
        ingest_corpus(&docs, &queries).map_err(|e| PipelineError::stage(stage, e))
    }

    pub fn build_agents(&self) -> Result<Vec<Box<dyn Agent>>, PipelineError> {
        self.config
            .extraction
            .agents
            .iter()
            .map(|a| -> Result<Box<dyn Agent>, PipelineError> {
                Ok(match a {
                    AgentConfig::Rule { id } => Box::new(RuleAgent::new(id.clone())),
                    AgentConfig::Remote { id, url, api_key_env, model, timeout_secs } => {
                        let key = match api_key_env {
                            Some(var) => Some(std::env::var(var).map_err(|_| {
                                PipelineError::Config(format!("agent `{id}` reads its API key from ${var}, which is not set"))
                            })?),
                            None => None,
                        };
                        Box::new(RemoteAgent::new(
                            id.clone(),
                            url.clone(),
                            key,
                            model.clone(),
                            Duration::from_secs(*timeout_secs),
                        ))
                    }
                    AgentConfig::Scripted { id, script } => Box::new(
                        ScriptedAgent::from_script_file(id.clone(), script)
                            .map_err(|e| PipelineError::Config(e.to_string()))?,
                    ),
                })
            })
            .collect()
    }

    pub fn exr_config(&self) -> ExrConfig {
        let ex = &self.config.extraction;
        ExrConfig {
            exchange_rounds: ex.exchange_rounds,
            max_reflect_iters: ex.max_reflect_iters,
            reflector_agent_id: ex.reflector.clone().unwrap_or_else(|| ex.agents[0].id().to_string()),
        }
    }

    pub fn extract(&self) -> Result<(), PipelineError> {
        let s = Stage::Extract;
        let corpus = self.corpus(s)?;
        let agents = self.build_agents()?;
        let refs: Vec<&dyn Agent> = agents.iter().map(|a| a.as_ref()).collect();
        let records = extract_corpus(&corpus, &refs, &self.exr_config()).map_err(|e| PipelineError::stage(s, e))?;
        jsonl::write(&self.path(EXTRACTION), &records).map_err(|e| PipelineError::stage(s, e))?;
        let events: usize = records.iter().map(|r| r.events.len()).sum();
        let relations: usize = records.iter().map(|r| r.relations.len()).sum();
        log::info!("extracted {events} events and {relations} relations");
        Ok(())
    }

    fn records(&self, stage: Stage) -> Result<Vec<ExtractionRecord>, PipelineError> {
        let path = self.need(stage, EXTRACTION, Stage::Extract)?;
        jsonl::read_records(&path).map_err(|e| PipelineError::stage(stage, e))
    }

    pub fn represent(&self) -> Result<(), PipelineError> {
        let s = Stage::Represent;
        let records = self.records(s)?;
        let corpus = self.corpus(s)?;
        let mut units: Vec<TrainingUnit> =
            records.iter().flat_map(|r| build_units(r, &self.config.representation)).collect();
        units.extend(build_query_units(&corpus, Split::Train));
        jsonl::write(&self.path(UNITS), &units).map_err(|e| PipelineError::stage(s, e))?;
        log::info!("wrote {} training units", units.len());
        Ok(())
    }

    pub fn taxonomy(&self) -> Result<Taxonomy, PipelineError> {
        match &self.config.paths.taxonomy {
            Some(p) => load_taxonomy(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display()))),
            None => Ok(synthetic::toy_taxonomy()),
        }
    }

    pub fn build_ids(&self) -> Result<(), PipelineError> {
        let s = Stage::BuildIds;
        let corpus = self.corpus(s)?;
        let records = self.records(s)?;
        let id = &self.config.identifiers;
        let index = match id.scheme {
            Scheme::TIds => build_tids(&corpus, id.length),
            Scheme::EIds => {
                build_eids(&corpus, &records, EidsConfig { branching: id.branching, leaf_cap: id.leaf_cap, seed: id.seed })
            }
            Scheme::ETIds => {
                let taxonomy = self.taxonomy()?;
                build_etids(&corpus, &records, &taxonomy, &CosineScore::new(&taxonomy))
            }
        }
        .map_err(|e| PipelineError::stage(s, e))?;
        index.write(&self.path(IDS)).map_err(|e| PipelineError::stage(s, e))?;
        log::info!("built {} {} identifiers", index.len(), id.scheme);
        Ok(())
    }

    fn index(&self, stage: Stage) -> Result<IdentifierIndex, PipelineError> {
        let path = self.need(stage, IDS, Stage::BuildIds)?;
        IdentifierIndex::read(&path).map_err(|e| PipelineError::stage(stage, e))
    }

    pub fn train(&self) -> Result<Seq2SeqModel, PipelineError> {
        let s = Stage::Train;
        let units_path = self.need(s, UNITS, Stage::Represent)?;
        let units: Vec<TrainingUnit> = jsonl::read_records(&units_path).map_err(|e| PipelineError::stage(s, e))?;
        if units.is_empty() {
            return Err(PipelineError::stage(s, "no training units"));
        }
        let index = self.index(s)?;
        let mut model = Seq2SeqModel::new(self.config.model.clone(), build_vocab(&units, &index))
            .map_err(|e| PipelineError::stage(s, e))?;
        log::info!("training {} parameters on {} units", model.params.count(), units.len());
        let report = train(&mut model, &units, &index, &self.config.train, |epoch, loss| {
            log::info!("epoch {epoch}: loss {loss:.5}");
        })
        .map_err(|e| PipelineError::stage(s, e))?;
        let trace = std::iter::once(TraceLine { epoch: 0, loss: report.initial_loss }).chain(
            report.epoch_losses.iter().enumerate().map(|(i, &loss)| TraceLine { epoch: i + 1, loss }),
        );
        jsonl::write(&self.path(TRAIN_TRACE), trace.collect::<Vec<_>>().iter())
            .map_err(|e| PipelineError::stage(s, e))?;
        model.save(&self.path(MODEL)).map_err(|e| PipelineError::stage(s, e))?;
        log::info!("loss {:.5} -> {:.5}", report.initial_loss, report.final_loss);
        Ok(model)
    }

    fn model(&self, stage: Stage) -> Result<Seq2SeqModel, PipelineError> {
        let path = self.need(stage, MODEL, Stage::Train)?;
        Seq2SeqModel::load(&path).map_err(|e| PipelineError::stage(stage, e))
    }

    pub fn eval(&self) -> Result<MetricsReport, PipelineError> {
        let s = Stage::Eval;
        let model = self.model(s)?;
        let index = self.index(s)?;
        let corpus = self.corpus(s)?;
        let trie = build_trie(&index).map_err(|e| PipelineError::stage(s, e))?;
        let queries: Vec<_> = corpus.queries_in(Split::Test).cloned().collect();
        let r = &self.config.retrieval;
        let ev = evaluate(&model, &queries, &trie, r.width, &r.ks, &self.config.variant())
            .map_err(|e| PipelineError::stage(s, e))?;
        jsonl::write(&self.path(RANKINGS), &ev.results).map_err(|e| PipelineError::stage(s, e))?;
        jsonl::write(&self.path(METRICS), &ev.report.records()).map_err(|e| PipelineError::stage(s, e))?;
        fs::write(self.path(METRICS_TABLE), format_table(std::slice::from_ref(&ev.report)))
            .map_err(|e| PipelineError::stage(s, e))?;
        Ok(ev.report)
    }

    /// Reassembles the report from `metrics.jsonl`.
    pub fn read_metrics(&self) -> Result<MetricsReport, PipelineError> {
        let path = self.need(Stage::Eval, METRICS, Stage::Eval)?;
        let records: Vec<crate::retrieval::MetricsRecord> =
            jsonl::read_records(&path).map_err(|e| PipelineError::stage(Stage::Eval, e))?;
        Ok(MetricsReport {
            variant: records.first().map(|r| r.variant.clone()).unwrap_or_else(|| self.config.variant()),
            query_count: records.first().map(|r| r.n_queries).unwrap_or(0),
            rates: records.iter().map(|r| (r.k, r.hits)).collect(),
        })
    }

    /// Top `top_k` documents for free-text `query` from the trained model.
    pub fn retrieve(&self, query: &str, top_k: usize) -> Result<Vec<Hit>, PipelineError> {
        let s = Stage::Eval;
        let model_path = self.path(MODEL);
        if !model_path.exists() {
            return Err(PipelineError::Stage {
                stage: s,
                message: format!("no trained model at {}; run `evret train` (or `evret pipeline`) first", model_path.display()),
            });
        }
        let model = self.model(s)?;
        let index = self.index(s)?;
        let trie = build_trie(&index).map_err(|e| PipelineError::stage(s, e))?;
        let retriever = Retriever::new(&model, &trie).map_err(|e| PipelineError::stage(s, e))?;
        let mut hits = retriever.search(query, top_k.max(self.config.retrieval.width));
        hits.truncate(top_k);
        Ok(hits)
    }
}

/// Writes a synthetic corpus to the configured document and query paths.
pub fn generate_synthetic(config: &SyntheticConfig, documents: &Path, queries: &Path) -> Result<Corpus, PipelineError> {
    for p in [documents, queries] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| PipelineError::Config(format!("{}: {e}", dir.display())))?;
        }
    }
    let corpus = synthetic::generate(config).corpus;
    corpus.write(documents, queries).map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(corpus)
}

/// Sets a file's modification time.
pub fn set_mtime(path: &Path, time: SystemTime) -> std::io::Result<()> {
    File::options().write(true).open(path)?.set_modified(time)
}
