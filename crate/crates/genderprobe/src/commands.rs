//! The four audit commands, independent of argument parsing.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use genderprobe_core::analysis::{evaluate_model, AnalysisError, EvaluationOptions};
use genderprobe_core::lexicon::Lexicon;
use genderprobe_core::metrics::{MetricError, ScoreIndex};
use genderprobe_core::probes::{generate_suite, Suite};
use genderprobe_core::scoring::{
    fingerprint, probe_cache_key, score_batch, BatchError, ScoreRecord, ScoreStore, StoreError,
};
use serde::Serialize;

use crate::backends::BackendError;
use crate::config::{build_scorer, AuditConfig, ConfigError};
use crate::report::{render_report, ModelReport, ReportError, ReportSummary};
use crate::store::{export_scores, find_run, ExportError, FsStore, RunManifest};

/// Failure of a command, classified by exit status.
#[derive(Debug)]
pub enum CommandError {
    /// Exit 2.
    Config(Vec<String>),
    /// Exit 3.
    Backend(String),
    /// Exit 4.
    MissingData(String),
    /// Exit 1.
    Other(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 2,
            CommandError::Backend(_) => 3,
            CommandError::MissingData(_) => 4,
            CommandError::Other(_) => 1,
        }
    }

    pub fn messages(&self) -> Vec<String> {
        match self {
            CommandError::Config(m) => m.clone(),
            CommandError::Backend(m) | CommandError::MissingData(m) | CommandError::Other(m) => vec![m.clone()],
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.messages().join("; "))
    }
}

impl std::error::Error for CommandError {}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(vec![e.to_string()])
    }
}

impl From<BackendError> for CommandError {
    fn from(e: BackendError) -> Self {
        CommandError::Backend(e.to_string())
    }
}

impl From<StoreError> for CommandError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Conflict { .. } => CommandError::Backend(e.to_string()),
            StoreError::Storage(m) => CommandError::Other(format!("storage error: {m}")),
        }
    }
}

impl From<ExportError> for CommandError {
    fn from(e: ExportError) -> Self {
        match e {
            ExportError::UnknownRun(_) => CommandError::MissingData(e.to_string()),
            ExportError::Store(s) => s.into(),
        }
    }
}

impl From<AnalysisError> for CommandError {
    fn from(e: AnalysisError) -> Self {
        match &e {
            AnalysisError::Metric(MetricError::MissingScore(_)) => CommandError::MissingData(e.to_string()),
            _ => CommandError::Other(e.to_string()),
        }
    }
}

impl From<ReportError> for CommandError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Empty(_) => CommandError::MissingData(e.to_string()),
            ReportError::Analysis(a) => a.into(),
            other => CommandError::Other(other.to_string()),
        }
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn load_checked(cfg: &AuditConfig) -> Result<Lexicon, CommandError> {
    let lexicon = cfg.load_lexicon()?;
    let errors = cfg.check(&lexicon);
    if !errors.is_empty() {
        return Err(CommandError::Config(errors.iter().map(|e| e.to_string()).collect()));
    }
    Ok(lexicon)
}

#[derive(Debug, Clone, Serialize)]
pub struct Problem {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelCheck {
    pub id: String,
    pub reachable: bool,
    pub scorer_kind: Option<String>,
    pub parameter_count: Option<u64>,
    pub tokenizer_fingerprint: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub lexicon_version: Option<String>,
    pub suite_sizes: BTreeMap<String, usize>,
    pub models: Vec<ModelCheck>,
    pub errors: Vec<Problem>,
}

impl ValidationReport {
    pub fn exit_code(&self) -> i32 {
        if self.ok {
            0
        } else if self.errors.iter().any(|e| e.code != "backend") {
            2
        } else {
            3
        }
    }
}

/// Checks lexicon invariants, configuration structure, suite sizes and
/// that every backend can be loaded or reached.
pub fn cmd_validate(cfg: &AuditConfig) -> ValidationReport {
    let mut report = ValidationReport {
        ok: false,
        lexicon_version: None,
        suite_sizes: BTreeMap::new(),
        models: Vec::new(),
        errors: Vec::new(),
    };
    let lexicon = match cfg.load_lexicon() {
        Ok(l) => l,
        Err(e) => {
            report.errors.push(Problem { code: e.code().into(), message: e.to_string() });
            return report;
        }
    };
    report.lexicon_version = Some(lexicon.version().into());
    for s in Suite::ALL {
        report.suite_sizes.insert(s.as_str().into(), generate_suite(&lexicon, s).len());
    }
    for e in cfg.check(&lexicon) {
        report.errors.push(Problem { code: e.code().into(), message: e.to_string() });
    }
    for spec in &cfg.models {
        let mut check = ModelCheck {
            id: spec.id.clone(),
            reachable: false,
            scorer_kind: None,
            parameter_count: None,
            tokenizer_fingerprint: None,
        };
        match build_scorer(cfg, spec) {
            Ok(built) => {
                let d = built.scorer.descriptor();
                check.reachable = true;
                check.scorer_kind = Some(built.scorer.kind().as_str().into());
                check.parameter_count = Some(d.parameter_count);
                check.tokenizer_fingerprint = Some(d.tokenizer_fingerprint.clone());
            }
            Err(e) => report.errors.push(Problem {
                code: "backend".into(),
                message: format!("model `{}`: {e}", spec.id),
            }),
        }
        report.models.push(check);
    }
    report.ok = report.errors.is_empty();
    report
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub run_id: String,
    pub model_id: String,
    pub records: usize,
    pub newly_scored: usize,
    pub cached: usize,
}

/// Scores the selected suites for the selected models and seals one run
/// per model. Scores already in the cache are reused.
pub fn cmd_run(
    cfg: &AuditConfig,
    models: &[String],
    suites: &[Suite],
    log: &mut dyn FnMut(&str),
) -> Result<Vec<RunOutcome>, CommandError> {
    let lexicon = load_checked(cfg)?;
    let mut selected = Vec::new();
    if models.is_empty() {
        selected.extend(cfg.models.iter());
    } else {
        let mut unknown = Vec::new();
        for id in models {
            match cfg.model(id) {
                Some(m) => selected.push(m),
                None => unknown.push(format!("config: unknown model `{id}`")),
            }
        }
        if !unknown.is_empty() {
            return Err(CommandError::Config(unknown));
        }
    }
    let suites: Vec<Suite> = if suites.is_empty() { cfg.suites.clone() } else { suites.to_vec() };
    let probes: Vec<_> = suites.iter().flat_map(|&s| generate_suite(&lexicon, s)).collect();
    let cache_dir = cfg.cache_dir();

    let mut outcomes = Vec::new();
    for spec in selected {
        let mut built = build_scorer(cfg, spec)?;
        let mut store = FsStore::open(&cache_dir, &spec.id)?;
        let keys: Vec<String> = probes.iter().map(|p| probe_cache_key(&built.scorer, p)).collect();
        let cached = keys.iter().filter(|k| store.get(k).is_some()).count();
        log(&format!(
            "{}: {} probes over {}, {} cached",
            spec.id,
            probes.len(),
            suites.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
            cached
        ));
        let started_at = now();
        let records = score_batch(&mut built.scorer, &probes, &mut store).map_err(|e| {
            let index = e.index();
            let msg = format!("model `{}`, probe `{}`: {e}", spec.id, probes[index].sentence());
            match e {
                BatchError::Store { source: StoreError::Storage(_), .. } => CommandError::Other(msg),
                _ => CommandError::Backend(msg),
            }
        })?;
        let manifest = RunManifest::new(
            built.scorer.descriptor().clone(),
            &lexicon,
            suites.clone(),
            built.scorer_config.clone(),
            started_at,
            now(),
            records.iter().map(|r| r.cache_key.clone()).collect(),
        );
        let sealed = store.seal(&manifest)?;
        log(&format!("{}: sealed run {}", spec.id, sealed.run_id));
        outcomes.push(RunOutcome {
            run_id: sealed.run_id,
            model_id: spec.id.clone(),
            records: records.len(),
            newly_scored: records.len() - cached,
            cached,
        });
    }
    Ok(outcomes)
}

/// Latest sealed run of every configured model that has one.
pub fn latest_runs(cfg: &AuditConfig) -> Result<Vec<String>, CommandError> {
    let cache_dir = cfg.cache_dir();
    let mut ids = Vec::new();
    for m in &cfg.models {
        if !cache_dir.join(crate::store::model_dir_name(&m.id)).is_dir() {
            continue;
        }
        let store = FsStore::open(&cache_dir, &m.id)?;
        if let Some(last) = store.manifests()?.pop() {
            ids.push(last.run_id);
        }
    }
    Ok(ids)
}

/// Computes every metric the runs support and renders the report into `out`.
pub fn cmd_analyze(
    cfg: &AuditConfig,
    run_ids: &[String],
    out: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<ReportSummary, CommandError> {
    let lexicon = load_checked(cfg)?;
    let lexicon_fp = fingerprint(lexicon.to_json_string().as_bytes());
    if run_ids.is_empty() {
        return Err(CommandError::MissingData("no runs to analyze".into()));
    }
    let cache_dir = cfg.cache_dir();
    let mut order: Vec<String> = Vec::new();
    let mut per_model: BTreeMap<String, (RunManifest, Vec<String>, Vec<ScoreRecord>)> = BTreeMap::new();
    for id in run_ids {
        let (store, manifest) = find_run(&cache_dir, id)?;
        if manifest.lexicon_fingerprint != lexicon_fp {
            return Err(CommandError::Config(vec![format!(
                "config: run {id} was scored with lexicon {} ({}), not the configured one",
                manifest.lexicon_version, manifest.lexicon_fingerprint
            )]));
        }
        let records = store.run_records(&manifest)?;
        let model_id = manifest.model.model_id.clone();
        match per_model.get_mut(&model_id) {
            Some((first, ids, recs)) => {
                if first.model != manifest.model || first.scorer != manifest.scorer {
                    return Err(CommandError::Config(vec![format!(
                        "config: runs {} and {id} of `{model_id}` used different scorer settings",
                        ids[0]
                    )]));
                }
                if !ids.contains(id) {
                    ids.push(id.clone());
                    recs.extend(records);
                }
            }
            None => {
                order.push(model_id.clone());
                per_model.insert(model_id, (manifest, vec![id.clone()], records));
            }
        }
    }

    let options = EvaluationOptions { identifier_subset: cfg.identifier_subset.clone() };
    let mut reports = Vec::new();
    for model_id in order {
        let (manifest, ids, mut records) = per_model.remove(&model_id).expect("inserted above");
        records.sort_by(|a, b| a.cache_key.cmp(&b.cache_key));
        records.dedup_by(|a, b| a.cache_key == b.cache_key);
        let index = ScoreIndex::new(records.iter()).map_err(AnalysisError::from)?;
        for s in Suite::ALL {
            if !index.has_suite(s) {
                log(&format!("{model_id}: no {s} scores, dependent views skipped"));
            }
        }
        let metrics = evaluate_model(&index, &lexicon, &options)?;
        reports.push(ModelReport { descriptor: manifest.model, run_ids: ids, index, metrics });
    }
    let summary = render_report(&reports, &lexicon, out)?;
    for (view, status) in &summary.views {
        if status != "emitted" {
            log(&format!("{view}: {status}"));
        }
    }
    Ok(summary)
}

/// Writes `<out>/exports/<run_id>.csv` and `.jsonl`.
pub fn cmd_export(cfg: &AuditConfig, run_id: &str, out: &Path) -> Result<Vec<PathBuf>, CommandError> {
    let export = export_scores(&cfg.cache_dir(), run_id)?;
    let dir = out.join("exports");
    std::fs::create_dir_all(&dir).map_err(|e| CommandError::Other(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for (ext, body) in [("csv", &export.csv), ("jsonl", &export.jsonl)] {
        let path = dir.join(format!("{run_id}.{ext}"));
        std::fs::write(&path, body).map_err(|e| CommandError::Other(format!("{}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}
