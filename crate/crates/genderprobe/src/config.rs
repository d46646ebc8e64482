//! Audit configuration (TOML) and the scorers it describes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use genderprobe_core::lexicon::{Lexicon, LexiconError};
use genderprobe_core::mock::MockScorer;
use genderprobe_core::probes::Suite;
use genderprobe_core::scoring::{Architecture, ScorerKind};
use genderprobe_core::Scorer;
use serde::Deserialize;

use crate::backends::{
    BackendError, LocalOptions, LocalScorer, MaskedMode, Precision, RemoteOptions, RemoteScorer,
};
use crate::store::ScorerConfig;

/// Configuration used when no file is given: three mock models over every suite.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

fn default_cache_dir() -> PathBuf {
    PathBuf::from("genderprobe-cache")
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("genderprobe-out")
}

fn default_suites() -> Vec<Suite> {
    Suite::ALL.to_vec()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    /// Lexicon document; the bundled lexicon when absent.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    /// Identifiers kept in the folk–subversive metric; all when absent.
    #[serde(default)]
    pub identifier_subset: Option<Vec<String>>,
    #[serde(default)]
    pub masked_mode: MaskedMode,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub remote: RemoteDefaults,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteDefaults {
    /// Environment variable holding the bearer token.
    pub token_env: String,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_s: u64,
    pub batch_size: usize,
}

impl Default for RemoteDefaults {
    fn default() -> Self {
        Self {
            token_env: "GENDERPROBE_REMOTE_TOKEN".into(),
            max_retries: 3,
            backoff_ms: 200,
            timeout_s: 60,
            batch_size: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub parameter_count: Option<u64>,
    #[serde(default)]
    pub architecture: Option<Architecture>,
    #[serde(flatten)]
    pub backend: BackendSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum BackendSpec {
    Mock {
        #[serde(default)]
        seed: u64,
        /// Constant per-token probability instead of hashed pseudo-random ones.
        #[serde(default)]
        default_probability: Option<f64>,
        #[serde(default)]
        tokenization: BTreeMap<String, Vec<String>>,
    },
    Local {
        path: PathBuf,
        #[serde(default)]
        precision: Precision,
    },
    Remote {
        endpoint: String,
        #[serde(default)]
        tokenizer_fingerprint: Option<String>,
        #[serde(default)]
        batch_size: Option<usize>,
    },
}

#[derive(Debug)]
pub enum ConfigError {
    Io(PathBuf, std::io::Error),
    Parse(String),
    LexiconNotFound(PathBuf),
    Lexicon(LexiconError),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(p, e) => write!(f, "config: {}: {e}", p.display()),
            ConfigError::Parse(m) => write!(f, "config: {m}"),
            ConfigError::LexiconNotFound(p) => write!(f, "lexicon: not found ({})", p.display()),
            ConfigError::Lexicon(e) => write!(f, "lexicon: {e}"),
            ConfigError::Invalid(m) => write!(f, "config: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    /// Short machine-readable category.
    pub fn code(&self) -> &'static str {
        match self {
            ConfigError::Io(..) | ConfigError::Parse(_) | ConfigError::Invalid(_) => "config",
            ConfigError::LexiconNotFound(_) | ConfigError::Lexicon(_) => "lexicon",
        }
    }
}

impl AuditConfig {
    /// Parses TOML; relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: AuditConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.into(), e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.resolve(&self.cache_dir)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out_dir)
    }

    pub fn load_lexicon(&self) -> Result<Lexicon, ConfigError> {
        match &self.lexicon {
            None => Ok(Lexicon::default_shipped()),
            Some(p) => {
                let path = self.resolve(p);
                if !path.is_file() {
                    return Err(ConfigError::LexiconNotFound(path));
                }
                let text = std::fs::read_to_string(&path).map_err(|e| ConfigError::Io(path.clone(), e))?;
                Lexicon::from_json_str(&text).map_err(ConfigError::Lexicon)
            }
        }
    }

    /// Structural checks that need no backend.
    pub fn check(&self, lexicon: &Lexicon) -> Vec<ConfigError> {
        let mut errors = Vec::new();
        if self.suites.is_empty() {
            errors.push(ConfigError::Invalid("at least one suite must be selected".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.suites {
            if !seen.insert(*s) {
                errors.push(ConfigError::Invalid(format!("suite `{s}` listed twice")));
            }
        }
        if self.models.is_empty() {
            errors.push(ConfigError::Invalid("no models configured".into()));
        }
        let mut ids = BTreeSet::new();
        for m in &self.models {
            if !ids.insert(m.id.as_str()) {
                errors.push(ConfigError::Invalid(format!("model id `{}` used twice", m.id)));
            }
            if m.parameter_count == Some(0) {
                errors.push(ConfigError::Invalid(format!("model `{}`: parameter_count must be positive", m.id)));
            }
            match &m.backend {
                BackendSpec::Local { path, .. } => {
                    let p = self.resolve(path);
                    if !p.is_dir() {
                        errors.push(ConfigError::Invalid(format!(
                            "model `{}`: directory {} not found",
                            m.id,
                            p.display()
                        )));
                    }
                }
                BackendSpec::Remote { .. } if m.parameter_count.is_none() => {
                    errors.push(ConfigError::Invalid(format!(
                        "model `{}`: remote models need parameter_count",
                        m.id
                    )));
                }
                _ => {}
            }
        }
        if let Some(subset) = &self.identifier_subset {
            if subset.is_empty() {
                errors.push(ConfigError::Invalid("identifier_subset is empty".into()));
            }
            for g in subset {
                if lexicon.gender_identifier(g).is_none() {
                    errors.push(ConfigError::Invalid(format!(
                        "identifier_subset: `{g}` is not a gender identifier of the lexicon"
                    )));
                }
            }
        }
        errors
    }

    pub fn model(&self, id: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.id == id)
    }
}

/// A ready scorer and the settings recorded in its run manifests.
pub struct Built {
    pub scorer: Box<dyn Scorer + Send>,
    pub scorer_config: ScorerConfig,
}

pub fn build_scorer(cfg: &AuditConfig, spec: &ModelSpec) -> Result<Built, BackendError> {
    match &spec.backend {
        BackendSpec::Mock { seed, default_probability, tokenization } => {
            let mut b = MockScorer::builder()
                .model_id(spec.id.clone())
                .family(spec.family.clone().unwrap_or_else(|| "mock".into()))
                .parameter_count(spec.parameter_count.unwrap_or(1))
                .architecture(spec.architecture.unwrap_or(Architecture::Autoregressive));
            b = match default_probability {
                Some(p) => b.default_probability(*p),
                None => b.hashed(*seed),
            };
            for (completion, tokens) in tokenization {
                b = b.tokenization(completion, tokens.iter().cloned());
            }
            let scorer = b.build().map_err(|e| BackendError::Config(format!("model `{}`: {e}", spec.id)))?;
            Ok(Built {
                scorer: Box::new(scorer),
                scorer_config: ScorerConfig::new(ScorerKind::Mock, None, None),
            })
        }
        BackendSpec::Local { path, precision } => {
            let opts = LocalOptions {
                model_id: Some(spec.id.clone()),
                family: spec.family.clone(),
                parameter_count: spec.parameter_count,
                precision: *precision,
                masked_mode: cfg.masked_mode,
            };
            let scorer = LocalScorer::load(&cfg.resolve(path), &opts)?;
            let kind = scorer.kind();
            let masked = matches!(kind, ScorerKind::Masked | ScorerKind::MaskedIterative).then_some(cfg.masked_mode);
            Ok(Built {
                scorer: Box::new(scorer),
                scorer_config: ScorerConfig::new(kind, masked, Some(*precision)),
            })
        }
        BackendSpec::Remote { endpoint, tokenizer_fingerprint, batch_size } => {
            let r = &cfg.remote;
            let mut opts = RemoteOptions::new(endpoint.clone(), spec.id.clone());
            opts.family = spec.family.clone().unwrap_or_else(|| "remote".into());
            opts.parameter_count = spec.parameter_count.unwrap_or(0);
            opts.architecture = spec.architecture.unwrap_or(Architecture::Autoregressive);
            opts.token = std::env::var(&r.token_env).ok().filter(|t| !t.is_empty());
            opts.tokenizer_fingerprint = tokenizer_fingerprint.clone();
            opts.max_retries = r.max_retries;
            opts.backoff = Duration::from_millis(r.backoff_ms);
            opts.timeout = Duration::from_secs(r.timeout_s);
            opts.batch_size = batch_size.unwrap_or(r.batch_size);
            let scorer = RemoteScorer::connect(opts)?;
            Ok(Built {
                scorer: Box::new(scorer),
                scorer_config: ScorerConfig::new(ScorerKind::Remote, None, None),
            })
        }
    }
}
