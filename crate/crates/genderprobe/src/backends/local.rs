//! Scorers over Hugging Face style model directories
//! (`config.json`, `tokenizer.json`, `model.safetensors`).

use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use candle_nn::VarBuilder;
use genderprobe_core::scoring::{
    fingerprint, Architecture, BackendBinding, ModelDescriptor, ScoreError, Scored, Scorer,
    ScorerKind,
};
use serde::{Deserialize, Serialize};
use tokenizers::Tokenizer;

use super::gpt2::{Gpt2, Gpt2Config};
use super::nn::{gather_targets, log_softmax_last};
use super::roberta::{RobertaConfig, RobertaMaskedLm};
use super::t5::{T5Config, T5};
use super::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskedMode {
    /// Every completion slot masked, all scored in one forward pass.
    #[default]
    SinglePass,
    /// Slot `i` scored with slots `< i` filled by the gold tokens.
    Iterative,
}

impl std::str::FromStr for MaskedMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single_pass" | "single-pass" => Ok(Self::SinglePass),
            "iterative" => Ok(Self::Iterative),
            other => Err(format!("unknown masked mode `{other}` (single_pass | iterative)")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LocalOptions {
    pub model_id: Option<String>,
    pub family: Option<String>,
    pub parameter_count: Option<u64>,
    pub precision: Precision,
    pub masked_mode: MaskedMode,
}

enum Model {
    Gpt2(Gpt2),
    Roberta { model: RobertaMaskedLm, bos: u32, eos: u32, mask: u32, iterative: bool },
    T5(T5),
}

pub struct LocalScorer {
    descriptor: ModelDescriptor,
    kind: ScorerKind,
    model: Model,
    tokenizer: Tokenizer,
    device: Device,
}

#[derive(Deserialize)]
struct ModelType {
    model_type: String,
}

fn read(path: &Path) -> Result<Vec<u8>, BackendError> {
    fs::read(path).map_err(|e| BackendError::Unavailable(format!("{}: {e}", path.display())))
}

fn parse<T: serde::de::DeserializeOwned>(bytes: &[u8], path: &Path) -> Result<T, BackendError> {
    serde_json::from_slice(bytes).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))
}

fn weight_files(dir: &Path) -> Result<Vec<PathBuf>, BackendError> {
    let single = dir.join("model.safetensors");
    if single.exists() {
        return Ok(vec![single]);
    }
    let mut shards: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| BackendError::Unavailable(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "safetensors"))
        .collect();
    shards.sort();
    if shards.is_empty() {
        return Err(BackendError::Unavailable(format!(
            "no .safetensors weights in {}",
            dir.display()
        )));
    }
    Ok(shards)
}

fn count_parameters(files: &[PathBuf]) -> Result<u64, BackendError> {
    let mut total = 0u64;
    for f in files {
        let bytes = read(f)?;
        let st = safetensors::SafeTensors::deserialize(&bytes)
            .map_err(|e| BackendError::Config(format!("{}: {e}", f.display())))?;
        for (_, view) in st.tensors() {
            total += view.shape().iter().product::<usize>() as u64;
        }
    }
    Ok(total)
}

fn token_id(tokenizer: &Tokenizer, token: &str) -> Result<u32, BackendError> {
    tokenizer
        .token_to_id(token)
        .ok_or_else(|| BackendError::Config(format!("tokenizer has no `{token}` token")))
}

fn candle_err(e: candle_core::Error) -> ScoreError {
    ScoreError::backend(format!("model forward failed: {e}"), false)
}

impl LocalScorer {
    /// Loads the model in `dir`, dispatching on `config.json`'s `model_type`.
    pub fn load(dir: &Path, opts: &LocalOptions) -> Result<Self, BackendError> {
        if !dir.is_dir() {
            return Err(BackendError::Unavailable(format!(
                "model directory {} not found",
                dir.display()
            )));
        }
        let config_path = dir.join("config.json");
        let config_bytes = read(&config_path)?;
        let model_type: ModelType = parse(&config_bytes, &config_path)?;
        let tokenizer_path = dir.join("tokenizer.json");
        let tokenizer_bytes = read(&tokenizer_path)?;
        let tokenizer = Tokenizer::from_bytes(&tokenizer_bytes)
            .map_err(|e| BackendError::Config(format!("{}: {e}", tokenizer_path.display())))?;

        let files = weight_files(dir)?;
        let device = Device::Cpu;
        // SAFETY: the weight files are not modified while the scorer lives.
        let vb = unsafe { VarBuilder::from_mmaped_safetensors(&files, opts.precision.dtype(), &device) }
            .map_err(|e| BackendError::Config(format!("weights in {}: {e}", dir.display())))?;
        let load_err = |e: candle_core::Error| BackendError::Config(format!("{}: {e}", dir.display()));

        let (model, architecture, kind) = match model_type.model_type.as_str() {
            "gpt2" => {
                let cfg: Gpt2Config = parse(&config_bytes, &config_path)?;
                let m = Gpt2::load(vb, cfg).map_err(load_err)?;
                (Model::Gpt2(m), Architecture::Autoregressive, ScorerKind::Autoregressive)
            }
            "roberta" | "xlm-roberta" => {
                let cfg: RobertaConfig = parse(&config_bytes, &config_path)?;
                let m = RobertaMaskedLm::load(vb, cfg).map_err(load_err)?;
                let iterative = opts.masked_mode == MaskedMode::Iterative;
                let kind = if iterative { ScorerKind::MaskedIterative } else { ScorerKind::Masked };
                let model = Model::Roberta {
                    model: m,
                    bos: token_id(&tokenizer, "<s>")?,
                    eos: token_id(&tokenizer, "</s>")?,
                    mask: token_id(&tokenizer, "<mask>")?,
                    iterative,
                };
                (model, Architecture::Masked, kind)
            }
            "t5" => {
                let cfg: T5Config = parse(&config_bytes, &config_path)?;
                let m = T5::load(vb, cfg).map_err(load_err)?;
                (Model::T5(m), Architecture::EncoderDecoder, ScorerKind::EncoderDecoder)
            }
            other => {
                return Err(BackendError::Config(format!(
                    "unsupported model_type `{other}` (gpt2, roberta, xlm-roberta, t5)"
                )))
            }
        };

        let parameter_count = match opts.parameter_count {
            Some(n) => n,
            None => count_parameters(&files)?,
        };
        let model_id = opts.model_id.clone().unwrap_or_else(|| {
            dir.file_name().map_or_else(|| "local".into(), |n| n.to_string_lossy().into_owned())
        });
        let descriptor = ModelDescriptor {
            model_id,
            family: opts.family.clone().unwrap_or_else(|| model_type.model_type.clone()),
            parameter_count,
            architecture,
            backend: BackendBinding::Local { path: dir.display().to_string() },
            tokenizer_fingerprint: fingerprint(&tokenizer_bytes),
        };
        Ok(Self { descriptor, kind, model, tokenizer, device })
    }

    fn encode(&self, text: &str) -> Result<Vec<u32>, ScoreError> {
        self.tokenizer
            .encode(text, false)
            .map(|e| e.get_ids().to_vec())
            .map_err(|e| ScoreError::InvalidInput(format!("tokenizing `{text}`: {e}")))
    }

    /// Token ids the completion is scored as.
    ///
    /// Byte-level BPE models get a single leading space so the first token
    /// is the word-initial variant; SentencePiece models mark word starts
    /// themselves.
    pub fn completion_ids(&self, completion: &str) -> Result<Vec<u32>, ScoreError> {
        if completion.trim().is_empty() {
            return Err(ScoreError::Tokenization { completion: completion.into() });
        }
        let ids = match self.model {
            Model::T5(_) => self.encode(completion)?,
            _ => self.encode(&format!(" {completion}"))?,
        };
        if ids.is_empty() {
            return Err(ScoreError::Tokenization { completion: completion.into() });
        }
        Ok(ids)
    }

    /// Per-token natural-log probabilities of the completion.
    pub fn token_log_probs(&self, context: &str, completion: &str) -> Result<Vec<f64>, ScoreError> {
        let ctx = self.encode(context)?;
        let comp = self.completion_ids(completion)?;
        if ctx.is_empty() {
            return Err(ScoreError::InvalidInput("context produced no tokens".into()));
        }
        let too_long = |n: usize, max: usize| {
            ScoreError::InvalidInput(format!("sequence of {n} tokens exceeds the model limit of {max}"))
        };
        let dev = &self.device;
        match &self.model {
            Model::Gpt2(m) => {
                let seq: Vec<u32> = ctx.iter().chain(&comp).copied().collect();
                if seq.len() > m.max_positions() {
                    return Err(too_long(seq.len(), m.max_positions()));
                }
                let positions: Vec<usize> = (0..comp.len()).map(|i| ctx.len() + i - 1).collect();
                let logits = m.logits_at(&seq, &positions, dev).map_err(candle_err)?;
                pick(&logits, &comp)
            }
            Model::Roberta { model, bos, eos, mask, iterative } => {
                let k = comp.len();
                let n = ctx.len() + k + 2;
                if n > model.max_sequence() {
                    return Err(too_long(n, model.max_sequence()));
                }
                let build = |filled: usize| -> Vec<u32> {
                    let mut seq = Vec::with_capacity(n);
                    seq.push(*bos);
                    seq.extend_from_slice(&ctx);
                    seq.extend_from_slice(&comp[..filled]);
                    seq.extend(std::iter::repeat_n(*mask, k - filled));
                    seq.push(*eos);
                    seq
                };
                let slot = |i: usize| 1 + ctx.len() + i;
                if *iterative {
                    let mut terms = Vec::with_capacity(k);
                    for i in 0..k {
                        let logits = model.logits_at(&build(i), &[slot(i)], dev).map_err(candle_err)?;
                        terms.extend(pick(&logits, &comp[i..=i])?);
                    }
                    Ok(terms)
                } else {
                    let positions: Vec<usize> = (0..k).map(slot).collect();
                    let logits = model.logits_at(&build(0), &positions, dev).map_err(candle_err)?;
                    pick(&logits, &comp)
                }
            }
            Model::T5(m) => {
                let mut enc = ctx;
                enc.push(m.config().eos_token_id);
                let mut dec = Vec::with_capacity(comp.len());
                dec.push(m.config().decoder_start_token_id);
                dec.extend_from_slice(&comp[..comp.len() - 1]);
                let logits = m.decoder_logits(&enc, &dec, dev).map_err(candle_err)?;
                pick(&logits, &comp)
            }
        }
    }
}

fn pick(logits: &Tensor, targets: &[u32]) -> Result<Vec<f64>, ScoreError> {
    let lp = log_softmax_last(logits).map_err(candle_err)?;
    gather_targets(&lp, targets).map_err(candle_err)
}

impl Scorer for LocalScorer {
    fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    fn kind(&self) -> ScorerKind {
        self.kind
    }

    fn score(&mut self, context: &str, completion: &str) -> Result<Scored, ScoreError> {
        Ok(Scored::from_token_log_probs(self.token_log_probs(context, completion)?))
    }
}
