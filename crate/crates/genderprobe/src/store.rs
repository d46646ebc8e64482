//! On-disk score cache and run manifests.
//!
//! Layout under the cache directory:
//!
//! ```text
//! <model>/scores.jsonl          append-only score log, one record per line
//! <model>/runs/<run_id>.json    sealed run manifests
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use genderprobe_core::format::format_export;
use genderprobe_core::lexicon::Lexicon;
use genderprobe_core::probes::{generate_suite, Suite};
use genderprobe_core::scoring::{
    cache_key, check_conflict, fingerprint, ModelDescriptor, ScoreRecord, ScoreStore, ScorerKind,
    StoreError,
};
use serde::{Deserialize, Serialize};

use crate::backends::{MaskedMode, Precision};

const SCORES_FILE: &str = "scores.jsonl";
const RUNS_DIR: &str = "runs";

fn storage<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> StoreError {
    move |e| StoreError::Storage(format!("{context}: {e}"))
}

/// Directory name for a model id; `/` in hub-style ids becomes `--`.
pub fn model_dir_name(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| match c {
            '/' | '\\' => '-',
            c if c.is_control() => '_',
            c => c,
        })
        .collect::<String>()
        .replace("..", "_")
}

/// Score cache for one model.
pub struct FsStore {
    dir: PathBuf,
    index: BTreeMap<String, ScoreRecord>,
    log: File,
}

impl FsStore {
    pub fn open(cache_dir: &Path, model_id: &str) -> Result<Self, StoreError> {
        let dir = cache_dir.join(model_dir_name(model_id));
        fs::create_dir_all(dir.join(RUNS_DIR)).map_err(storage(dir.display()))?;
        let path = dir.join(SCORES_FILE);
        let mut index = BTreeMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(storage(path.display()))?;
            let mut reader = BufReader::new(file);
            let mut line = String::new();
            let mut lineno = 0;
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(storage(path.display()))?;
                if n == 0 {
                    break;
                }
                lineno += 1;
                // a line without its newline is a write cut short; it was never acknowledged
                if !line.ends_with('\n') {
                    break;
                }
                let rec: ScoreRecord = serde_json::from_str(line.trim_end())
                    .map_err(storage(format!("{}:{lineno}", path.display())))?;
                if rec.model_id != model_id {
                    return Err(StoreError::Storage(format!(
                        "{}:{lineno}: record for model `{}` in the store of `{model_id}`",
                        path.display(),
                        rec.model_id
                    )));
                }
                if let Some(prev) = index.get(&rec.cache_key) {
                    check_conflict(prev, &rec)?;
                } else {
                    index.insert(rec.cache_key.clone(), rec);
                }
            }
        }
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(storage(path.display()))?;
        truncate_partial_tail(&path, &mut log)?;
        Ok(Self { dir, index, log })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ScoreRecord> {
        self.index.values()
    }

    fn manifest_path(&self, run_id: &str) -> PathBuf {
        self.dir.join(RUNS_DIR).join(format!("{run_id}.json"))
    }

    /// Writes `manifest` unless a manifest with that id already exists, in
    /// which case the stored one must describe the same run and is returned.
    pub fn seal(&self, manifest: &RunManifest) -> Result<RunManifest, StoreError> {
        let path = self.manifest_path(&manifest.run_id);
        if path.exists() {
            let existing = read_manifest(&path)?;
            if !existing.same_run(manifest) {
                return Err(StoreError::Storage(format!(
                    "run {} is already sealed with different content",
                    manifest.run_id
                )));
            }
            return Ok(existing);
        }
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
        fs::write(&tmp, text).map_err(storage(tmp.display()))?;
        fs::rename(&tmp, &path).map_err(storage(path.display()))?;
        Ok(manifest.clone())
    }

    pub fn manifests(&self) -> Result<Vec<RunManifest>, StoreError> {
        let runs = self.dir.join(RUNS_DIR);
        let mut out = Vec::new();
        for entry in fs::read_dir(&runs).map_err(storage(runs.display()))? {
            let path = entry.map_err(storage(runs.display()))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                out.push(read_manifest(&path)?);
            }
        }
        out.sort_by(|a, b| a.finished_at.cmp(&b.finished_at).then(a.run_id.cmp(&b.run_id)));
        Ok(out)
    }

    /// Records of a sealed run in probe order.
    pub fn run_records(&self, manifest: &RunManifest) -> Result<Vec<ScoreRecord>, StoreError> {
        manifest
            .cache_keys
            .iter()
            .map(|k| {
                self.index.get(k).cloned().ok_or_else(|| {
                    StoreError::Storage(format!("run {} references unknown score {k}", manifest.run_id))
                })
            })
            .collect()
    }
}

fn truncate_partial_tail(path: &Path, log: &mut File) -> Result<(), StoreError> {
    let bytes = fs::read(path).map_err(storage(path.display()))?;
    if let Some(last_newline) = bytes.iter().rposition(|&b| b == b'\n') {
        if last_newline + 1 < bytes.len() {
            log.set_len(last_newline as u64 + 1).map_err(storage(path.display()))?;
        }
    } else if !bytes.is_empty() {
        log.set_len(0).map_err(storage(path.display()))?;
    }
    Ok(())
}

impl ScoreStore for FsStore {
    fn get(&self, cache_key: &str) -> Option<ScoreRecord> {
        self.index.get(cache_key).cloned()
    }

    fn put(&mut self, record: ScoreRecord) -> Result<(), StoreError> {
        if let Some(stored) = self.index.get(&record.cache_key) {
            return check_conflict(stored, &record);
        }
        let mut line = serde_json::to_string(&record).map_err(storage("encoding record"))?;
        line.push('\n');
        self.log
            .write_all(line.as_bytes())
            .and_then(|_| self.log.flush())
            .map_err(storage(self.dir.join(SCORES_FILE).display()))?;
        self.index.insert(record.cache_key.clone(), record);
        Ok(())
    }
}

/// How scores were obtained, recorded so deviations are visible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    pub masked_mode: Option<MaskedMode>,
    pub precision: Option<Precision>,
    pub log_base: String,
    pub leading_space_policy: String,
}

impl ScorerConfig {
    pub fn new(kind: ScorerKind, masked_mode: Option<MaskedMode>, precision: Option<Precision>) -> Self {
        let leading_space_policy = match kind {
            ScorerKind::Autoregressive | ScorerKind::Masked | ScorerKind::MaskedIterative => {
                "completion encoded as \" \" + completion"
            }
            ScorerKind::EncoderDecoder => "completion encoded as is; tokenizer marks the word start",
            ScorerKind::Mock => "synthetic tokenization",
            ScorerKind::Remote => "defined by the remote backend",
        };
        Self {
            kind,
            masked_mode,
            precision,
            log_base: "e".into(),
            leading_space_policy: leading_space_policy.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub model: ModelDescriptor,
    pub lexicon_version: String,
    pub lexicon_fingerprint: String,
    pub suites: Vec<Suite>,
    pub scorer: ScorerConfig,
    pub toolkit_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub record_count: usize,
    /// Cache keys of the run's records in probe order.
    pub cache_keys: Vec<String>,
}

#[derive(Serialize)]
struct RunIdentity<'a> {
    model: &'a ModelDescriptor,
    lexicon_fingerprint: &'a str,
    suites: &'a [Suite],
    scorer: &'a ScorerConfig,
    toolkit_version: &'a str,
}

impl RunManifest {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: ModelDescriptor,
        lexicon: &Lexicon,
        suites: Vec<Suite>,
        scorer: ScorerConfig,
        started_at: String,
        finished_at: String,
        cache_keys: Vec<String>,
    ) -> Self {
        let lexicon_fingerprint = fingerprint(lexicon.to_json_string().as_bytes());
        let toolkit_version = genderprobe_core::TOOLKIT_VERSION.to_string();
        let run_id = run_id(&model, &lexicon_fingerprint, &suites, &scorer, &toolkit_version);
        Self {
            run_id,
            model,
            lexicon_version: lexicon.version().into(),
            lexicon_fingerprint,
            suites,
            scorer,
            toolkit_version,
            started_at,
            finished_at,
            record_count: cache_keys.len(),
            cache_keys,
        }
    }

    /// Equal in everything but timestamps.
    pub fn same_run(&self, other: &RunManifest) -> bool {
        let strip = |m: &RunManifest| RunManifest {
            started_at: String::new(),
            finished_at: String::new(),
            ..m.clone()
        };
        strip(self) == strip(other)
    }

    /// Cache keys the manifest's probe set maps to under `lexicon`.
    pub fn expected_cache_keys(&self, lexicon: &Lexicon) -> Vec<String> {
        let m = &self.model;
        self.suites
            .iter()
            .flat_map(|&s| generate_suite(lexicon, s))
            .map(|p| {
                cache_key(
                    &m.model_id,
                    &m.tokenizer_fingerprint,
                    &p.context_text,
                    &p.completion_text,
                    self.scorer.kind,
                )
            })
            .collect()
    }
}

/// Content address of a run: same model, lexicon, suites and scorer
/// settings give the same id.
pub fn run_id(
    model: &ModelDescriptor,
    lexicon_fingerprint: &str,
    suites: &[Suite],
    scorer: &ScorerConfig,
    toolkit_version: &str,
) -> String {
    let identity = RunIdentity { model, lexicon_fingerprint, suites, scorer, toolkit_version };
    let bytes = serde_json::to_vec(&identity).expect("identity serializes");
    fingerprint(&bytes)[..24].to_string()
}

fn read_manifest(path: &Path) -> Result<RunManifest, StoreError> {
    let text = fs::read_to_string(path).map_err(storage(path.display()))?;
    serde_json::from_str(&text).map_err(storage(path.display()))
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Finds a sealed run anywhere under `cache_dir`.
pub fn find_run(cache_dir: &Path, run_id: &str) -> Result<(FsStore, RunManifest), ExportError> {
    let entries = match fs::read_dir(cache_dir) {
        Ok(e) => e,
        Err(_) => return Err(ExportError::UnknownRun(run_id.into())),
    };
    let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    dirs.sort();
    for dir in dirs {
        let path = dir.join(RUNS_DIR).join(format!("{run_id}.json"));
        if path.is_file() {
            let manifest = read_manifest(&path)?;
            let store = FsStore::open(cache_dir, &manifest.model.model_id)?;
            return Ok((store, manifest));
        }
    }
    Err(ExportError::UnknownRun(run_id.into()))
}

pub const EXPORT_COLUMNS: [&str; 9] = [
    "run_id",
    "model_id",
    "suite",
    "context_key",
    "completion_key",
    "context_text",
    "completion_text",
    "token_count",
    "log_prob",
];

/// A run's scores as CSV and JSON lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Export {
    pub csv: String,
    pub jsonl: String,
}

pub fn export_scores(cache_dir: &Path, run_id: &str) -> Result<Export, ExportError> {
    let (store, manifest) = find_run(cache_dir, run_id)?;
    let records = store.run_records(&manifest)?;
    Ok(export_records(&manifest.run_id, &records))
}

pub fn export_records(run_id: &str, records: &[ScoreRecord]) -> Export {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(EXPORT_COLUMNS).expect("in-memory write");
    let mut jsonl = String::new();
    for r in records {
        let token_count = r.token_count.to_string();
        let log_prob = format_export(r.log_prob);
        w.write_record([
            run_id,
            &r.model_id,
            r.probe.suite.as_str(),
            &r.probe.context_key,
            &r.probe.completion_key,
            &r.probe.context_text,
            &r.probe.completion_text,
            &token_count,
            &log_prob,
        ])
        .expect("in-memory write");
        let fields = [
            ("run_id", json_str(run_id)),
            ("model_id", json_str(&r.model_id)),
            ("suite", json_str(r.probe.suite.as_str())),
            ("context_key", json_str(&r.probe.context_key)),
            ("completion_key", json_str(&r.probe.completion_key)),
            ("context_text", json_str(&r.probe.context_text)),
            ("completion_text", json_str(&r.probe.completion_text)),
            ("token_count", token_count),
            ("log_prob", json_number(&log_prob)),
        ];
        jsonl.push('{');
        for (i, (k, v)) in fields.iter().enumerate() {
            if i > 0 {
                jsonl.push(',');
            }
            jsonl.push_str(&json_str(k));
            jsonl.push(':');
            jsonl.push_str(v);
        }
        jsonl.push_str("}\n");
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields");
    Export { csv, jsonl }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

/// JSON has no literal for non-finite numbers; those become strings.
fn json_number(formatted: &str) -> String {
    match formatted {
        "nan" | "inf" | "-inf" => json_str(formatted),
        n => n.to_string(),
    }
}
