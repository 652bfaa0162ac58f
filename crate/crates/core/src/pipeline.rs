//! The processing flow from raw logs to stored concrete scenarios.
//!
//! ```text
//! raw.csv -> ingest -> clean -> enrich -> cluster -> density -> generate -> store
//! ```
//!
//! Every stage maps artifact text to artifact text, so running the stages
//! one by one from files produces the same bytes as [`run_pipeline`].
//! Track ids follow `<episode>/ego` and `<episode>/lead`.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyze::{gmm_fit, kmeans, AnalyzeError, ClusterKind, ClusterModel, FeatureMatrix};
use crate::cleanse::{clean, CleanError, CleaningReport, CleaningRule};
use crate::density::{kde_fit, Bandwidth, DensityError, Kernel, ParamDensity};
use crate::enrich::{annotate, enriched_header, AnnotateConfig, EnrichError, EventAnnotation};
use crate::generate::{random_generate, GenerateError, SamplingPlan};
use crate::ingest::{
    parse_track_log, parse_track_log_lenient, synchronize, write_track_csv, IngestError, SyncMethod, TrackLog,
};
use crate::ontology::{Domain, ElementCategory, ParameterSpec, Scenario};
use crate::seed::stage_seed;
use crate::store::{Library, StoreError};
use crate::synth::{synthetic_corpus, SynthConfig};

/// Artifact file names, in stage order.
pub const RAW: &str = "raw.csv";
pub const INGESTED: &str = "ingested.csv";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const CLEANED: &str = "cleaned.csv";
pub const CLEAN_REPORT: &str = "clean_report.json";
pub const ENRICHED: &str = "enriched.csv";
pub const EVENTS: &str = "events.json";
pub const FEATURES: &str = "features.csv";
pub const CLUSTERS: &str = "clusters.json";
pub const DENSITIES: &str = "densities.json";
pub const SCENARIOS: &str = "scenarios.json";
pub const LIBRARY_DIR: &str = "library";

/// Per-episode features written by the enrich stage.
pub const FEATURE_NAMES: [&str; 4] = ["ego_speed", "lead_speed", "gap", "thw"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Clean(#[from] CleanError),
    #[error(transparent)]
    Enrich(#[from] EnrichError),
    #[error(transparent)]
    Analyze(#[from] AnalyzeError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("malformed JSON artifact: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Config(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

/// Cleaning rules used when the configuration names none.
pub fn default_rules() -> Vec<CleaningRule> {
    let mut rules = vec![CleaningRule::DropDuplicate { by_timestamp: true }];
    for c in ["x", "y", "speed", "accel", "yaw", "yaw_rate"] {
        rules.push(CleaningRule::RepairInterpolate { channel: c.into() });
    }
    rules.push(CleaningRule::ClampRange {
        channel: "speed".into(),
        lo: 0.0,
        hi: 70.0,
    });
    rules
}

/// Logical scenario used when the configuration names none.
pub fn following_logical() -> Scenario {
    Scenario::logical(
        "following",
        [
            ParameterSpec::continuous("ego_speed", ElementCategory::EgoBasic, "m/s", 0.0, 45.0),
            ParameterSpec::continuous("lead_speed", ElementCategory::EnvParticipants, "m/s", 0.0, 45.0),
            ParameterSpec::continuous("gap", ElementCategory::EnvParticipants, "m", 0.0, 150.0),
        ],
    )
    .with_tags(&["car-following", "highway"])
}

fn d_hz() -> f64 {
    10.0
}
fn d_method() -> SyncMethod {
    SyncMethod::Median
}
fn d_clusters() -> usize {
    3
}
fn d_cluster_method() -> ClusterKind {
    ClusterKind::Kmeans
}
fn d_count() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Raw track CSV. Without it a synthetic corpus is generated.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default = "d_hz")]
    pub sync_hz: f64,
    #[serde(default = "d_method")]
    pub sync_method: SyncMethod,
    #[serde(default = "default_rules")]
    pub rules: Vec<CleaningRule>,
    #[serde(default)]
    pub annotate: AnnotateConfig,
    #[serde(default = "d_clusters")]
    pub clusters: usize,
    #[serde(default = "d_cluster_method")]
    pub cluster_method: ClusterKind,
    #[serde(default)]
    pub kernel: Kernel,
    #[serde(default)]
    pub logical: Option<Scenario>,
    #[serde(default = "d_count")]
    pub count: usize,
    /// Library root; defaults to `<out>/library`.
    #[serde(default)]
    pub library: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl PipelineConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = serde_json::from_str(&read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.input, &mut cfg.library].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn logical(&self) -> Scenario {
        self.logical.clone().unwrap_or_else(following_logical)
    }

    /// Checks what can be checked before any stage runs.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if let Some(p) = &self.input {
            if !p.is_file() {
                return Err(PipelineError::Config(format!("input {} does not exist", p.display())));
            }
        }
        if !(self.sync_hz > 0.0 && self.sync_hz.is_finite()) {
            return Err(PipelineError::Config(format!("sync_hz must be positive, got {}", self.sync_hz)));
        }
        if self.clusters == 0 {
            return Err(PipelineError::Config("clusters must be at least 1".into()));
        }
        let report = crate::ontology::validate_scenario(&self.logical(), None);
        if !report.is_valid() {
            return Err(PipelineError::Config(format!("logical scenario: {report}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub column: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub tracks: usize,
    pub rejected: Vec<RejectedRow>,
}

/// Lenient parse; rows that fail are reported, duplicates are kept.
pub fn stage_ingest(raw_csv: &str) -> Result<(String, String), PipelineError> {
    let parsed = parse_track_log_lenient(raw_csv)?;
    for r in &parsed.rejected {
        log::warn!("line {}: {} ({})", r.line, r.reason, r.column);
    }
    let report = IngestReport {
        rows_read: parsed.rows_read,
        tracks: parsed.tracks.len(),
        rejected: parsed
            .rejected
            .iter()
            .map(|r| RejectedRow {
                line: r.line,
                column: r.column.clone(),
                reason: r.reason.clone(),
            })
            .collect(),
    };
    Ok((write_track_csv(&parsed.tracks), to_json(&report)))
}

/// Applies the cleaning rules to every track.
pub fn stage_clean(ingested_csv: &str, rules: &[CleaningRule]) -> Result<(String, String), PipelineError> {
    let parsed = parse_track_log_lenient(ingested_csv)?;
    let mut cleaned = Vec::with_capacity(parsed.tracks.len());
    let mut reports: BTreeMap<String, CleaningReport> = BTreeMap::new();
    for tr in &parsed.tracks {
        let (out, report) = clean(tr, rules)?;
        reports.insert(tr.track_id.clone(), report);
        cleaned.push(out);
    }
    Ok((write_track_csv(&cleaned), to_json(&reports)))
}

/// Splits `<episode>/<role>` track ids into ego/lead pairs.
pub fn episodes(tracks: Vec<TrackLog>) -> Result<BTreeMap<String, (TrackLog, TrackLog)>, PipelineError> {
    let mut egos = BTreeMap::new();
    let mut leads = BTreeMap::new();
    for tr in tracks {
        match tr.track_id.rsplit_once('/') {
            Some((ep, "ego")) => {
                egos.insert(ep.to_string(), tr);
            }
            Some((ep, "lead")) => {
                leads.insert(ep.to_string(), tr);
            }
            _ => log::warn!("track {} is not <episode>/ego or <episode>/lead; skipped", tr.track_id),
        }
    }
    let mut out = BTreeMap::new();
    for (ep, ego) in egos {
        match leads.remove(&ep) {
            Some(lead) => {
                out.insert(ep, (ego, lead));
            }
            None => log::warn!("episode {ep} has no lead track; skipped"),
        }
    }
    for ep in leads.keys() {
        log::warn!("episode {ep} has no ego track; skipped");
    }
    if out.is_empty() {
        return Err(PipelineError::Config("no complete <episode>/ego + <episode>/lead pairs".into()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEvents {
    pub episode: String,
    pub events: Vec<EventAnnotation>,
}

fn mean_present(v: &[Option<f64>]) -> Option<f64> {
    let xs: Vec<f64> = v.iter().flatten().copied().collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Synchronizes each episode, derives TTC/THW/TTB and events, and
/// summarizes every episode as one feature row.
pub fn stage_enrich(
    cleaned_csv: &str,
    hz: f64,
    method: SyncMethod,
    cfg: &AnnotateConfig,
) -> Result<(String, String, String), PipelineError> {
    let eps = episodes(parse_track_log(cleaned_csv)?)?;
    let mut csv = enriched_header();
    csv.push('\n');
    let mut events = Vec::new();
    let (mut ids, mut rows) = (Vec::new(), Vec::new());
    for (ep, (ego, lead)) in &eps {
        let synced = synchronize(&[ego.clone(), lead.clone()], hz, method)?;
        let a = annotate(&synced[0], &synced[1], cfg)?;
        csv.push_str(&a.csv_rows());
        events.push(EpisodeEvents {
            episode: ep.clone(),
            events: a.events.clone(),
        });
        let speeds = |t: &TrackLog| mean_present(&t.samples.iter().map(|s| Some(s.speed)).collect::<Vec<_>>());
        let feats = [speeds(&synced[0]), speeds(&synced[1]), mean_present(&a.gap), mean_present(&a.thw)];
        match feats {
            [Some(a), Some(b), Some(c), Some(d)] if [a, b, c, d].iter().all(|v| v.is_finite()) => {
                ids.push(ep.clone());
                rows.push(vec![a, b, c, d]);
            }
            _ => log::warn!("episode {ep} lacks data for some features; left out of the feature table"),
        }
    }
    let names = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let features = FeatureMatrix::with_ids(ids, names, rows)?;
    Ok((csv, to_json(&events), features.to_csv()))
}

/// Clusters the standardized feature table.
pub fn stage_cluster(features_csv: &str, k: usize, method: ClusterKind, seed: u64) -> Result<String, PipelineError> {
    let x = FeatureMatrix::from_csv(features_csv)?.standardized();
    let model = match method {
        ClusterKind::Kmeans => kmeans(&x, k, seed, 300, 1e-9)?,
        ClusterKind::Gmm => gmm_fit(&x, k, seed, 300, 1e-9)?,
    };
    Ok(to_json(&model))
}

/// Fits one KDE per continuous logical parameter on the rows of the largest
/// cluster, reading the feature column of the same name.
pub fn stage_density(
    features_csv: &str,
    clusters_json: &str,
    logical: &Scenario,
    kernel: Kernel,
) -> Result<String, PipelineError> {
    let x = FeatureMatrix::from_csv(features_csv)?;
    let model: ClusterModel = serde_json::from_str(clusters_json)?;
    if model.assignment.len() != x.rows() {
        return Err(PipelineError::Config(format!(
            "cluster model covers {} rows but the feature table has {}",
            model.assignment.len(),
            x.rows()
        )));
    }
    let rows = x.select_rows(&model.members(model.largest_cluster()));
    let mut out: BTreeMap<String, ParamDensity> = BTreeMap::new();
    for spec in logical.specs() {
        if let Domain::Continuous { .. } = spec.domain {
            let col = rows
                .column(&spec.name)
                .ok_or_else(|| PipelineError::Config(format!("no feature column for parameter {}", spec.name)))?;
            out.insert(spec.name.clone(), ParamDensity::Kde(kde_fit(&col, kernel, Bandwidth::Silverman)?));
        }
    }
    Ok(to_json(&out))
}

/// Draws `count` concrete scenarios from the fitted densities.
pub fn stage_generate(logical: &Scenario, densities_json: &str, seed: u64, count: usize) -> Result<String, PipelineError> {
    let densities: BTreeMap<String, ParamDensity> = serde_json::from_str(densities_json)?;
    let plan = SamplingPlan::new(logical.clone(), densities, seed, count);
    Ok(to_json(&random_generate(&plan)?))
}

/// Stores the logical scenario (once) and the generated ones.
pub fn stage_store(root: &Path, logical: &Scenario, scenarios_json: &str) -> Result<Vec<String>, PipelineError> {
    let scenarios: Vec<Scenario> = serde_json::from_str(scenarios_json)?;
    let mut lib = Library::open(root)?;
    if !lib.index().entries.contains_key(&logical.id) {
        lib.put(logical)?;
    }
    Ok(lib.put_all(&scenarios)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub seed: u64,
    pub episodes: usize,
    pub generated: usize,
    pub stored: usize,
    pub artifacts: Vec<String>,
}

/// Runs every stage, writing artifacts into `out`.
pub fn run_pipeline(cfg: &PipelineConfig, seed: u64, out: &Path) -> Result<PipelineSummary, PipelineError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let logical = cfg.logical();
    let mut artifacts = Vec::new();
    let mut emit = |name: &str, text: &str| -> Result<(), PipelineError> {
        write_text(&out.join(name), text)?;
        artifacts.push(name.to_string());
        Ok(())
    };

    let raw = match &cfg.input {
        Some(p) => read_text(p)?,
        None => {
            let text = write_track_csv(&synthetic_corpus(&cfg.synth, seed));
            emit(RAW, &text)?;
            text
        }
    };
    let (ingested, ingest_report) = stage_ingest(&raw)?;
    emit(INGESTED, &ingested)?;
    emit(INGEST_REPORT, &ingest_report)?;
    let (cleaned, clean_report) = stage_clean(&ingested, &cfg.rules)?;
    emit(CLEANED, &cleaned)?;
    emit(CLEAN_REPORT, &clean_report)?;
    let (enriched, events, features) = stage_enrich(&cleaned, cfg.sync_hz, cfg.sync_method, &cfg.annotate)?;
    emit(ENRICHED, &enriched)?;
    emit(EVENTS, &events)?;
    emit(FEATURES, &features)?;
    let clusters = stage_cluster(&features, cfg.clusters, cfg.cluster_method, stage_seed(seed, "cluster"))?;
    emit(CLUSTERS, &clusters)?;
    let densities = stage_density(&features, &clusters, &logical, cfg.kernel)?;
    emit(DENSITIES, &densities)?;
    let scenarios = stage_generate(&logical, &densities, stage_seed(seed, "generate"), cfg.count)?;
    emit(SCENARIOS, &scenarios)?;

    let root = cfg.library.clone().unwrap_or_else(|| out.join(LIBRARY_DIR));
    let stored = stage_store(&root, &logical, &scenarios)?;
    Ok(PipelineSummary {
        seed,
        episodes: FeatureMatrix::from_csv(&features)?.rows(),
        generated: cfg.count,
        stored: stored.len(),
        artifacts,
    })
}
