//! Order-n statistical code language model.
//!
//! Counts every k-gram (k <= order) over tokenized training samples, each
//! padded with `order - 1` sequence-start symbols and one sequence-end
//! symbol. Conditional probabilities use interpolated absolute discounting:
//! a fixed discount is subtracted from every observed count and the freed
//! mass is spread over the next-shorter context, recursing down to the
//! uniform distribution over the model's symbol table (vocabulary plus the
//! reserved unknown and boundary symbols). Every probability is therefore
//! strictly positive, and tokens never seen in training resolve to the
//! unknown symbol's backed-off mass.
//!
//! The trained model is immutable and safe to query from many threads.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::tokenizer::{Tokenizer, TokenizerMode};

/// File magic ("format id") for serialized models.
const MODEL_MAGIC: &[u8; 8] = b"CSWPNGLM";
const MODEL_VERSION: u32 = 1;

pub const START_SYMBOL: &str = "<s>";
pub const END_SYMBOL: &str = "</s>";
pub const UNK_SYMBOL: &str = "<unk>";

const START_ID: u32 = 0;
const END_ID: u32 = 1;
const UNK_ID: u32 = 2;

pub const MAX_ORDER: usize = 8;

/// Per-token cross-entropy of a sequence under the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyScore {
    /// Length-normalized cross-entropy in nats.
    pub value: f64,
    /// Total negative log-likelihood in nats (unnormalized).
    pub total_nats: f64,
    /// Number of scored positions (tokens plus the end symbol).
    pub token_count: usize,
}

/// Which entropy a comparison uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EntropyMode {
    /// Length-normalized (nats per token); the default.
    #[serde(rename = "per-token")]
    PerToken,
    /// Raw total log-loss, for sensitivity experiments.
    #[serde(rename = "total")]
    Total,
}

impl EntropyScore {
    pub fn in_mode(&self, mode: EntropyMode) -> f64 {
        match mode {
            EntropyMode::PerToken => self.value,
            EntropyMode::Total => self.total_nats,
        }
    }
}

impl std::fmt::Display for EntropyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EntropyMode::PerToken => write!(f, "per-token"),
            EntropyMode::Total => write!(f, "total"),
        }
    }
}

impl std::str::FromStr for EntropyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-token" => Ok(EntropyMode::PerToken),
            "total" => Ok(EntropyMode::Total),
            other => Err(Error::UnknownMode {
                name: other.to_string(),
                expected: "per-token, total".to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct ContextStats {
    /// Sum of all next-token counts for this context.
    total: u64,
    counts: HashMap<u32, u64>,
}

/// Smoothed n-gram model over code tokens.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    discount: f64,
    tokenizer_mode: TokenizerMode,
    /// Symbol table; index is the token id. Slots 0..3 are reserved for the
    /// boundary and unknown symbols.
    symbols: Vec<String>,
    index: HashMap<String, u32>,
    /// k-gram counts for every context length 0..order; the empty context
    /// holds the unigram counts.
    contexts: HashMap<Vec<u32>, ContextStats>,
    /// Scored training events (tokens plus one end symbol per sequence).
    total_tokens: u64,
}

impl PartialEq for NGramModel {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self.discount == other.discount
            && self.tokenizer_mode == other.tokenizer_mode
            && self.symbols == other.symbols
            && self.contexts == other.contexts
            && self.total_tokens == other.total_tokens
    }
}

impl NGramModel {
    /// Train on a clean corpus. `order` must be in `1..=8`, `discount`
    /// strictly inside `(0, 1)`.
    pub fn train(
        clean: &Dataset,
        order: usize,
        discount: f64,
        tokenizer_mode: TokenizerMode,
    ) -> Result<NGramModel> {
        if clean.is_empty() {
            return Err(Error::EmptyDataset {
                context: "language model training".to_string(),
            });
        }
        if order < 1 || order > MAX_ORDER {
            return Err(Error::invalid_param(
                "order",
                format!("must be in 1..={MAX_ORDER}, got {order}"),
            ));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::invalid_param(
                "discount",
                format!("must be in (0, 1), got {discount}"),
            ));
        }

        let tokenizer = Tokenizer::new(tokenizer_mode);
        let mut model = NGramModel {
            order,
            discount,
            tokenizer_mode,
            symbols: vec![
                START_SYMBOL.to_string(),
                END_SYMBOL.to_string(),
                UNK_SYMBOL.to_string(),
            ],
            index: [
                (START_SYMBOL.to_string(), START_ID),
                (END_SYMBOL.to_string(), END_ID),
                (UNK_SYMBOL.to_string(), UNK_ID),
            ]
            .into_iter()
            .collect(),
            contexts: HashMap::new(),
            total_tokens: 0,
        };

        for sample in &clean.samples {
            let tokens = tokenizer.tokenize(&sample.code);
            let mut ids = Vec::with_capacity(tokens.len() + order);
            ids.extend(std::iter::repeat(START_ID).take(order - 1));
            for t in &tokens {
                ids.push(model.intern(&t.text));
            }
            ids.push(END_ID);

            // Record every k-gram ending at each scored position.
            for pos in (order - 1)..ids.len() {
                let next = ids[pos];
                for k in 0..order {
                    let ctx = ids[pos - k..pos].to_vec();
                    let stats = model.contexts.entry(ctx).or_default();
                    stats.total += 1;
                    *stats.counts.entry(next).or_insert(0) += 1;
                }
                model.total_tokens += 1;
            }
        }
        Ok(model)
    }

    fn intern(&mut self, text: &str) -> u32 {
        if let Some(&id) = self.index.get(text) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(text.to_string());
        self.index.insert(text.to_string(), id);
        id
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn tokenizer_mode(&self) -> TokenizerMode {
        self.tokenizer_mode
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// All interned symbols, reserved ones included.
    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.symbols.iter().map(String::as_str)
    }

    /// Number of symbols in the table (the support of every conditional
    /// distribution).
    pub fn support_size(&self) -> usize {
        self.symbols.len()
    }

    /// Vocabulary size excluding reserved symbols.
    pub fn vocab_size(&self) -> usize {
        self.symbols.len() - 3
    }

    /// The tokenizer this model was trained with; in fine mode it carries the
    /// model vocabulary so unfamiliar identifier suffixes split out the same
    /// way at scan time.
    pub fn tokenizer(&self) -> Tokenizer {
        match self.tokenizer_mode {
            TokenizerMode::Coarse => Tokenizer::new(TokenizerMode::Coarse),
            TokenizerMode::Fine => {
                let vocab = self
                    .symbols
                    .iter()
                    .skip(3)
                    .filter(|s| s.len() >= 2 && s.chars().all(|c| c.is_ascii_alphabetic()))
                    .cloned()
                    .collect();
                Tokenizer::with_vocab(TokenizerMode::Fine, vocab)
            }
        }
    }

    /// Raw stored count for a context/next pair (0 when absent). Contexts
    /// longer than `order - 1` are truncated to their suffix.
    pub fn pair_count(&self, context: &[&str], next: &str) -> u64 {
        let ctx = self.context_ids(context);
        let next = self.id_of(next);
        self.contexts
            .get(ctx.as_slice())
            .and_then(|st| st.counts.get(&next).copied())
            .unwrap_or(0)
    }

    fn id_of(&self, text: &str) -> u32 {
        self.index.get(text).copied().unwrap_or(UNK_ID)
    }

    fn context_ids(&self, context: &[&str]) -> Vec<u32> {
        let window = context.len().min(self.order - 1);
        context[context.len() - window..]
            .iter()
            .map(|t| self.id_of(t))
            .collect()
    }

    /// Smoothed conditional probability of `next` after `context`. Unknown
    /// tokens (in either position) resolve to the unknown symbol. Strictly
    /// positive for every token.
    pub fn prob(&self, context: &[&str], next: &str) -> f64 {
        let ctx = self.context_ids(context);
        self.prob_ids(&ctx, self.id_of(next))
    }

    pub(crate) fn prob_ids(&self, context: &[u32], next: u32) -> f64 {
        let window = context.len().min(self.order - 1);
        self.interpolated(&context[context.len() - window..], next)
    }

    fn interpolated(&self, ctx: &[u32], next: u32) -> f64 {
        match self.contexts.get(ctx) {
            Some(stats) => {
                let lower = if ctx.is_empty() {
                    1.0 / self.symbols.len() as f64
                } else {
                    self.interpolated(&ctx[1..], next)
                };
                let total = stats.total as f64;
                let count = stats.counts.get(&next).copied().unwrap_or(0) as f64;
                let discounted = (count - self.discount).max(0.0) / total;
                let backoff_mass = self.discount * stats.counts.len() as f64 / total;
                discounted + backoff_mass * lower
            }
            // Unseen context: all mass comes from the shorter context. The
            // empty context always exists after training.
            None => self.interpolated(&ctx[1..], next),
        }
    }

    /// Pad a token sequence with boundary symbols and map it to ids.
    pub(crate) fn pad_ids(&self, tokens: &[&str]) -> Vec<u32> {
        let mut ids = Vec::with_capacity(tokens.len() + self.order);
        ids.extend(std::iter::repeat(START_ID).take(self.order - 1));
        ids.extend(tokens.iter().map(|t| self.id_of(t)));
        ids.push(END_ID);
        ids
    }

    /// Negative log-likelihood of the scored position `pos` (0-based over
    /// tokens plus the end symbol) in a padded id sequence.
    pub(crate) fn position_nll(&self, padded: &[u32], pos: usize) -> f64 {
        let target = padded[self.order - 1 + pos];
        let ctx = &padded[pos..pos + self.order - 1];
        -self.prob_ids_full(ctx, target).ln()
    }

    /// `prob_ids` without the truncation step, for already-windowed contexts.
    fn prob_ids_full(&self, ctx: &[u32], next: u32) -> f64 {
        self.interpolated(ctx, next)
    }

    /// Cross-entropy of a token sequence, counting one prediction per token
    /// plus the end symbol. Errors on an empty sequence.
    pub fn cross_entropy(&self, tokens: &[&str]) -> Result<EntropyScore> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        let padded = self.pad_ids(tokens);
        let scored = tokens.len() + 1;
        let mut total = 0.0;
        for pos in 0..scored {
            total += self.position_nll(&padded, pos);
        }
        Ok(EntropyScore {
            value: total / scored as f64,
            total_nats: total,
            token_count: scored,
        })
    }

    /// Serialize to a versioned binary file. The layout is fixed:
    /// magic, version, order, discount, tokenizer mode, vocab size, total
    /// tokens, the symbol table, then context records sorted by id sequence.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e: std::io::Error| Error::io(path, e);

        w.write_all(MODEL_MAGIC).map_err(io_err)?;
        w.write_u32::<LittleEndian>(MODEL_VERSION).map_err(io_err)?;
        w.write_u32::<LittleEndian>(self.order as u32).map_err(io_err)?;
        w.write_f64::<LittleEndian>(self.discount).map_err(io_err)?;
        w.write_u8(match self.tokenizer_mode {
            TokenizerMode::Fine => 0,
            TokenizerMode::Coarse => 1,
        })
        .map_err(io_err)?;
        w.write_u32::<LittleEndian>(self.symbols.len() as u32)
            .map_err(io_err)?;
        w.write_u64::<LittleEndian>(self.total_tokens).map_err(io_err)?;

        for sym in &self.symbols {
            w.write_u32::<LittleEndian>(sym.len() as u32).map_err(io_err)?;
            w.write_all(sym.as_bytes()).map_err(io_err)?;
        }

        let mut ctx_keys: Vec<&Vec<u32>> = self.contexts.keys().collect();
        ctx_keys.sort();
        w.write_u64::<LittleEndian>(ctx_keys.len() as u64).map_err(io_err)?;
        for key in ctx_keys {
            let stats = &self.contexts[key];
            w.write_u32::<LittleEndian>(key.len() as u32).map_err(io_err)?;
            for &id in key {
                w.write_u32::<LittleEndian>(id).map_err(io_err)?;
            }
            let mut pairs: Vec<(u32, u64)> = stats.counts.iter().map(|(&k, &v)| (k, v)).collect();
            pairs.sort_unstable();
            w.write_u32::<LittleEndian>(pairs.len() as u32).map_err(io_err)?;
            for (id, count) in pairs {
                w.write_u32::<LittleEndian>(id).map_err(io_err)?;
                w.write_u64::<LittleEndian>(count).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)?;
        Ok(())
    }

    /// Load a model saved by [`NGramModel::save`]. A wrong magic, an
    /// unsupported version, or a truncated file is an error; no partial
    /// model is ever returned.
    pub fn load(path: impl AsRef<Path>) -> Result<NGramModel> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let fmt_err = |message: &str| Error::ModelFormat {
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        let read_err = |_: std::io::Error| Error::ModelFormat {
            path: path.to_path_buf(),
            message: "unexpected end of file".to_string(),
        };

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(read_err)?;
        if &magic != MODEL_MAGIC {
            return Err(fmt_err("bad magic, not a model file"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(read_err)?;
        if version != MODEL_VERSION {
            return Err(Error::ModelFormat {
                path: path.to_path_buf(),
                message: format!("unsupported version {version} (expected {MODEL_VERSION})"),
            });
        }
        let order = r.read_u32::<LittleEndian>().map_err(read_err)? as usize;
        if order < 1 || order > MAX_ORDER {
            return Err(fmt_err("order out of range"));
        }
        let discount = r.read_f64::<LittleEndian>().map_err(read_err)?;
        if !(discount > 0.0 && discount < 1.0) {
            return Err(fmt_err("discount out of range"));
        }
        let tokenizer_mode = match r.read_u8().map_err(read_err)? {
            0 => TokenizerMode::Fine,
            1 => TokenizerMode::Coarse,
            _ => return Err(fmt_err("unknown tokenizer mode")),
        };
        let n_symbols = r.read_u32::<LittleEndian>().map_err(read_err)? as usize;
        if n_symbols < 3 {
            return Err(fmt_err("symbol table too small"));
        }
        let total_tokens = r.read_u64::<LittleEndian>().map_err(read_err)?;

        let mut symbols = Vec::with_capacity(n_symbols);
        for _ in 0..n_symbols {
            let len = r.read_u32::<LittleEndian>().map_err(read_err)? as usize;
            if len > 1 << 20 {
                return Err(fmt_err("symbol length implausibly large"));
            }
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(read_err)?;
            let sym = String::from_utf8(buf).map_err(|_| fmt_err("symbol is not utf-8"))?;
            symbols.push(sym);
        }
        if symbols[START_ID as usize] != START_SYMBOL
            || symbols[END_ID as usize] != END_SYMBOL
            || symbols[UNK_ID as usize] != UNK_SYMBOL
        {
            return Err(fmt_err("reserved symbols missing"));
        }

        let n_contexts = r.read_u64::<LittleEndian>().map_err(read_err)?;
        let mut contexts = HashMap::with_capacity(n_contexts as usize);
        for _ in 0..n_contexts {
            let ctx_len = r.read_u32::<LittleEndian>().map_err(read_err)? as usize;
            if ctx_len >= order {
                return Err(fmt_err("context longer than order allows"));
            }
            let mut key = Vec::with_capacity(ctx_len);
            for _ in 0..ctx_len {
                let id = r.read_u32::<LittleEndian>().map_err(read_err)?;
                if id as usize >= n_symbols {
                    return Err(fmt_err("context id out of range"));
                }
                key.push(id);
            }
            let n_pairs = r.read_u32::<LittleEndian>().map_err(read_err)? as usize;
            let mut counts = HashMap::with_capacity(n_pairs);
            let mut total = 0u64;
            for _ in 0..n_pairs {
                let id = r.read_u32::<LittleEndian>().map_err(read_err)?;
                if id as usize >= n_symbols {
                    return Err(fmt_err("count id out of range"));
                }
                let count = r.read_u64::<LittleEndian>().map_err(read_err)?;
                if count == 0 {
                    return Err(fmt_err("zero count stored"));
                }
                counts.insert(id, count);
                total += count;
            }
            contexts.insert(key, ContextStats { total, counts });
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(read_err)? != 0 {
            return Err(fmt_err("trailing bytes after model data"));
        }

        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Ok(NGramModel {
            order,
            discount,
            tokenizer_mode,
            symbols,
            index,
            contexts,
            total_tokens,
        })
    }
}
