//! Lexical code tokenizer with fine (subword) and coarse granularity.
//!
//! The tokenizer is a two-stage splitter and a pure function of its
//! configuration:
//!
//! * stage 1 splits on whitespace, punctuation and operators, keeping
//!   identifier words and number literals whole. String and comment contents
//!   are tokenized like any other code (quote characters become punctuation
//!   tokens), since injected dead code carries literals worth scoring.
//! * stage 2 (fine mode only) splits identifier words at `snake_case`
//!   underscores, `camelCase` boundaries and letter/digit boundaries. When a
//!   vocabulary is attached, it then greedily re-segments out-of-vocabulary
//!   words against that vocabulary so unfamiliar suffixes fall out as
//!   standalone residual tokens (`open_filerb` becomes `open`, `file`, `rb`).
//!
//! Coarse mode is stage 1 only and exists for granularity comparisons.
//! Token identity is case-sensitive throughout.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// Minimum vocabulary-word length that can anchor a greedy subword match.
/// Single-letter matches would shred unfamiliar suffixes into characters.
const MIN_VOCAB_MATCH: usize = 2;

/// One code token with its byte span into the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Half-open byte range `[start, end)` into the source text.
    pub span: (usize, usize),
}

impl Token {
    fn new(text: &str, start: usize) -> Self {
        Token {
            text: text.to_string(),
            span: (start, start + text.len()),
        }
    }
}

/// Ordered tokens of one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub sample_id: String,
}

impl TokenSequence {
    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Tokenizer granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenizerMode {
    /// Stage 1 + stage 2 subword splitting (the default).
    #[serde(rename = "fine")]
    Fine,
    /// Stage 1 only.
    #[serde(rename = "coarse")]
    Coarse,
}

impl fmt::Display for TokenizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenizerMode::Fine => write!(f, "fine"),
            TokenizerMode::Coarse => write!(f, "coarse"),
        }
    }
}

impl FromStr for TokenizerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fine" => Ok(TokenizerMode::Fine),
            "coarse" => Ok(TokenizerMode::Coarse),
            other => Err(Error::UnknownMode {
                name: other.to_string(),
                expected: "fine, coarse".to_string(),
            }),
        }
    }
}

/// Deterministic tokenizer; cheap to clone, safe to share across threads.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    mode: TokenizerMode,
    /// Alphabetic words from a trained model's vocabulary; enables the
    /// greedy out-of-vocabulary re-segmentation in fine mode.
    vocab: Option<HashSet<String>>,
}

impl Tokenizer {
    pub fn new(mode: TokenizerMode) -> Self {
        Tokenizer { mode, vocab: None }
    }

    pub fn with_vocab(mode: TokenizerMode, vocab: HashSet<String>) -> Self {
        let vocab = match mode {
            TokenizerMode::Fine => Some(vocab),
            TokenizerMode::Coarse => None,
        };
        Tokenizer { mode, vocab }
    }

    pub fn mode(&self) -> TokenizerMode {
        self.mode
    }

    /// Tokenize `code` into spanned tokens. Any input tokenizes; the empty
    /// string yields an empty sequence.
    pub fn tokenize(&self, code: &str) -> Vec<Token> {
        let words = stage1(code);
        match self.mode {
            TokenizerMode::Coarse => words,
            TokenizerMode::Fine => {
                let mut out = Vec::with_capacity(words.len() * 2);
                for tok in words {
                    if is_word(&tok.text) {
                        split_word(&tok, self.vocab.as_ref(), &mut out);
                    } else {
                        out.push(tok);
                    }
                }
                out
            }
        }
    }

    pub fn tokenize_sample(&self, code: &str, sample_id: &str) -> TokenSequence {
        TokenSequence {
            tokens: self.tokenize(code),
            sample_id: sample_id.to_string(),
        }
    }
}

fn is_word(text: &str) -> bool {
    text.chars()
        .next()
        .map(|c| c.is_ascii_alphabetic() || c == '_')
        .unwrap_or(false)
}

/// Two-character operators kept whole by stage 1. The empty argument list
/// `()` is lexed as one token the way subword code tokenizers merge it.
const DIGRAPHS: [&[u8; 2]; 13] = [
    b"<=", b">=", b"==", b"!=", b"&&", b"||", b"++", b"--", b"->", b"<<", b">>", b"::", b"()",
];

/// Stage 1: words, number literals, standard operator digraphs, and
/// single-character punctuation.
fn stage1(code: &str) -> Vec<Token> {
    let bytes = code.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b.is_ascii_whitespace() {
            i += 1;
        } else if b.is_ascii_alphabetic() || b == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(Token::new(&code[start..i], start));
        } else if b.is_ascii_digit() {
            let start = i;
            i = scan_number(bytes, i);
            tokens.push(Token::new(&code[start..i], start));
        } else if i + 1 < bytes.len()
            && DIGRAPHS.iter().any(|d| d[0] == b && d[1] == bytes[i + 1])
        {
            tokens.push(Token::new(&code[i..i + 2], i));
            i += 2;
        } else {
            // Any other byte (operators, quotes, non-ASCII) is its own token.
            let ch_len = code[i..].chars().next().map(char::len_utf8).unwrap_or(1);
            tokens.push(Token::new(&code[i..i + ch_len], i));
            i += ch_len;
        }
    }
    tokens
}

/// Number literal: decimal with optional fraction and exponent, or 0x hex.
fn scan_number(bytes: &[u8], start: usize) -> usize {
    let mut i = start;
    if bytes[i] == b'0' && i + 1 < bytes.len() && (bytes[i + 1] == b'x' || bytes[i + 1] == b'X') {
        i += 2;
        while i < bytes.len() && bytes[i].is_ascii_hexdigit() {
            i += 1;
        }
        return i;
    }
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len()
        && (bytes[i] == b'e' || bytes[i] == b'E')
        && {
            let j = if i + 1 < bytes.len() && (bytes[i + 1] == b'+' || bytes[i + 1] == b'-') {
                i + 2
            } else {
                i + 1
            };
            j < bytes.len() && bytes[j].is_ascii_digit()
        }
    {
        i += 1;
        if bytes[i] == b'+' || bytes[i] == b'-' {
            i += 1;
        }
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    i
}

/// Stage 2: split one identifier word into subword tokens.
fn split_word(tok: &Token, vocab: Option<&HashSet<String>>, out: &mut Vec<Token>) {
    let base = tok.span.0;
    for (piece, offset) in case_pieces(&tok.text) {
        let piece_start = base + offset;
        match vocab {
            Some(v) if piece.len() >= MIN_VOCAB_MATCH && piece.chars().all(|c| c.is_ascii_alphabetic()) => {
                vocab_split(piece, piece_start, v, out)
            }
            _ => out.push(Token::new(piece, piece_start)),
        }
    }
}

/// Split at underscores (dropped), lower-to-upper case transitions, the end of
/// uppercase runs followed by lowercase, and letter/digit boundaries.
/// Returns `(piece, byte offset within the word)` pairs.
fn case_pieces(word: &str) -> Vec<(&str, usize)> {
    fn flush<'a>(
        word: &'a str,
        pieces: &mut Vec<(&'a str, usize)>,
        start: &mut Option<usize>,
        end: usize,
    ) {
        if let Some(s) = start.take() {
            if s < end {
                pieces.push((&word[s..end], s));
            }
        }
    }

    let chars: Vec<(usize, char)> = word.char_indices().collect();
    let mut pieces = Vec::new();
    let mut start: Option<usize> = None;

    for idx in 0..chars.len() {
        let (pos, c) = chars[idx];
        if c == '_' {
            flush(word, &mut pieces, &mut start, pos);
            continue;
        }
        let boundary = match start {
            None => false,
            Some(_) => {
                let (_, prev) = chars[idx - 1];
                let lower_to_upper = prev.is_ascii_lowercase() && c.is_ascii_uppercase();
                let digit_edge = prev.is_ascii_digit() != c.is_ascii_digit();
                // Last upper of an uppercase run starts the next piece:
                // "HTTPServer" -> HTTP | Server.
                let run_end = prev.is_ascii_uppercase()
                    && c.is_ascii_uppercase()
                    && chars
                        .get(idx + 1)
                        .map(|(_, nx)| nx.is_ascii_lowercase())
                        .unwrap_or(false);
                lower_to_upper || digit_edge || run_end
            }
        };
        if boundary {
            flush(word, &mut pieces, &mut start, pos);
        }
        if start.is_none() {
            start = Some(pos);
        }
    }
    flush(word, &mut pieces, &mut start, word.len());
    pieces
}

/// Greedy longest-match segmentation of an out-of-vocabulary word. Runs of
/// characters that no vocabulary word (of length >= MIN_VOCAB_MATCH) anchors
/// are emitted as residual tokens, which is what isolates trigger suffixes.
fn vocab_split(piece: &str, piece_start: usize, vocab: &HashSet<String>, out: &mut Vec<Token>) {
    if piece.len() < MIN_VOCAB_MATCH || vocab.contains(piece) {
        out.push(Token::new(piece, piece_start));
        return;
    }
    let mut i = 0;
    let mut residual_start: Option<usize> = None;
    while i < piece.len() {
        let mut matched = 0;
        let upper = piece.len() - i;
        for len in (MIN_VOCAB_MATCH..=upper).rev() {
            if vocab.contains(&piece[i..i + len]) {
                matched = len;
                break;
            }
        }
        if matched > 0 {
            if let Some(rs) = residual_start.take() {
                out.push(Token::new(&piece[rs..i], piece_start + rs));
            }
            out.push(Token::new(&piece[i..i + matched], piece_start + i));
            i += matched;
        } else {
            if residual_start.is_none() {
                residual_start = Some(i);
            }
            i += 1;
        }
    }
    if let Some(rs) = residual_start {
        out.push(Token::new(&piece[rs..], piece_start + rs));
    }
}

/// Per-mode token statistics over a dataset.
#[derive(Debug, Clone, Serialize)]
pub struct GranularityRow {
    pub mode: TokenizerMode,
    pub total_tokens: usize,
    pub distinct_tokens: usize,
    pub avg_tokens_per_sample: f64,
}

/// Compare tokenizer granularities over one corpus: one row per mode.
pub fn granularity_report(dataset: &Dataset, modes: &[TokenizerMode]) -> Result<Vec<GranularityRow>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset {
            context: "granularity report".to_string(),
        });
    }
    let mut rows = Vec::with_capacity(modes.len());
    for &mode in modes {
        let tok = Tokenizer::new(mode);
        let mut total = 0usize;
        let mut distinct = HashSet::new();
        for sample in &dataset.samples {
            for t in tok.tokenize(&sample.code) {
                total += 1;
                distinct.insert(t.text);
            }
        }
        rows.push(GranularityRow {
            mode,
            total_tokens: total,
            distinct_tokens: distinct.len(),
            avg_tokens_per_sample: total as f64 / dataset.len() as f64,
        });
    }
    Ok(rows)
}
