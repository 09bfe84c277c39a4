//! Poisoning attack simulators for building labeled test datasets.
//!
//! Five strategies are implemented:
//!
//! * `badcode-fixed` / `badcode-mixed`: append a trigger token (a fixed one,
//!   or one drawn per sample from a pool) to an existing function or
//!   variable name, consistently at every occurrence.
//! * `bnc-fixed` / `bnc-grammar`: insert a dead-code guard statement at a
//!   random statement boundary; the grammar variant draws a fresh statement
//!   from a probabilistic context-free grammar for every sample.
//! * `codepoisoner-variable`: rename one identifier to a trigger name at
//!   every occurrence.
//!
//! Identifier discovery is lexical (token before `(`, assignment targets,
//! declaration keywords), not syntactic: the simulators only need plausible
//! injection sites across C/Java/Python-style sources. All randomness flows
//! from one seed and mutation is exact: non-selected samples are copied
//! byte-identically.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::tokenizer::{Tokenizer, TokenizerMode};

/// Keywords never treated as renameable identifiers. Control flow and type
/// names would otherwise look like call sites or assignment targets.
const KEYWORDS: &[&str] = &[
    "if", "else", "for", "while", "do", "switch", "case", "default", "break", "continue",
    "return", "goto", "new", "delete", "class", "struct", "enum", "union", "typedef", "static",
    "public", "private", "protected", "final", "void", "int", "long", "short", "float", "double",
    "char", "bool", "boolean", "var", "let", "const", "auto", "unsigned", "signed", "true",
    "false", "null", "nullptr", "None", "this", "self", "def", "throw", "throws", "try", "catch",
    "sizeof", "import", "package", "from", "in", "not", "and", "or", "pass", "String", "string",
    "print", "println", "printf",
];

const DECL_KEYWORDS: &[&str] = &[
    "int", "long", "short", "float", "double", "char", "bool", "boolean", "var", "let", "const",
    "auto", "unsigned", "signed", "String", "string",
];

/// Default trigger material.
pub const DEFAULT_FIXED_TRIGGER: &str = "rb";
pub const DEFAULT_TRIGGER_POOL: [&str; 5] = ["rb", "xt", "il", "ite", "wb"];
pub const DEFAULT_DEAD_CODE: &str = "if (rand() < 0) print(\"fail\");";
pub const DEFAULT_RENAME_BASE: &str = "ret_Val_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackStrategy {
    #[serde(rename = "badcode-fixed")]
    BadcodeFixed,
    #[serde(rename = "badcode-mixed")]
    BadcodeMixed,
    #[serde(rename = "bnc-fixed")]
    BncFixed,
    #[serde(rename = "bnc-grammar")]
    BncGrammar,
    #[serde(rename = "codepoisoner-variable")]
    CodepoisonerVariable,
}

impl fmt::Display for AttackStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AttackStrategy::BadcodeFixed => "badcode-fixed",
            AttackStrategy::BadcodeMixed => "badcode-mixed",
            AttackStrategy::BncFixed => "bnc-fixed",
            AttackStrategy::BncGrammar => "bnc-grammar",
            AttackStrategy::CodepoisonerVariable => "codepoisoner-variable",
        };
        write!(f, "{name}")
    }
}

impl FromStr for AttackStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "badcode-fixed" => Ok(AttackStrategy::BadcodeFixed),
            "badcode-mixed" => Ok(AttackStrategy::BadcodeMixed),
            "bnc-fixed" => Ok(AttackStrategy::BncFixed),
            "bnc-grammar" => Ok(AttackStrategy::BncGrammar),
            "codepoisoner-variable" => Ok(AttackStrategy::CodepoisonerVariable),
            other => Err(Error::UnknownMode {
                name: other.to_string(),
                expected:
                    "badcode-fixed, badcode-mixed, bnc-fixed, bnc-grammar, codepoisoner-variable"
                        .to_string(),
            }),
        }
    }
}

/// Attack parameters. Strategy-specific fields are ignored by the other
/// strategies.
#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub strategy: AttackStrategy,
    /// Fraction of samples to poison, in [0, 1].
    pub rate: f64,
    pub seed: u64,
    /// Token appended by `badcode-fixed`.
    pub fixed_trigger: String,
    /// Pool drawn from by `badcode-mixed`.
    pub trigger_pool: Vec<String>,
    /// Statement inserted by `bnc-fixed`.
    pub dead_code: String,
    /// Grammar sampled by `bnc-grammar`.
    pub grammar: Pcfg,
    /// Prefix of the trigger name used by `codepoisoner-variable`.
    pub rename_base: String,
}

impl AttackConfig {
    pub fn new(strategy: AttackStrategy) -> Self {
        AttackConfig {
            strategy,
            rate: 0.01,
            seed: 0,
            fixed_trigger: DEFAULT_FIXED_TRIGGER.to_string(),
            trigger_pool: DEFAULT_TRIGGER_POOL.iter().map(|s| s.to_string()).collect(),
            dead_code: DEFAULT_DEAD_CODE.to_string(),
            grammar: Pcfg::dead_code_default(),
            rename_base: DEFAULT_RENAME_BASE.to_string(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_rate(mut self, rate: f64) -> Self {
        self.rate = rate;
        self
    }
}

/// Ground truth for one poisoned sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoisonRecord {
    pub sample_id: String,
    pub strategy: AttackStrategy,
    /// Distinct token texts the mutation introduced.
    pub injected_tokens: Vec<String>,
    /// Byte span of the injected material in the mutated code.
    pub injection_site: (usize, usize),
}

/// Write poison records as a JSONL sidecar keyed by sample id.
pub fn save_records(records: &[PoisonRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<PoisonRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Poison `round(rate * N)` samples of a clean dataset, chosen uniformly at
/// random by the seed. Selected samples are mutated and marked
/// `poisoned: true`; everything else is copied byte-identically. Ineligible
/// picks (no identifier to rename, say) are skipped with a warning and
/// another sample is drawn; running out of eligible samples is an error.
pub fn poison(clean: &Dataset, cfg: &AttackConfig) -> Result<(Dataset, Vec<PoisonRecord>)> {
    if !(0.0..=1.0).contains(&cfg.rate) {
        return Err(Error::invalid_param(
            "rate",
            format!("must be in [0, 1], got {}", cfg.rate),
        ));
    }
    if let Some(pre_poisoned) = clean.samples.iter().find(|s| s.is_poisoned()) {
        return Err(Error::invalid_param(
            "clean",
            format!(
                "sample {:?} already carries poisoned=true; poison() expects a clean dataset",
                pre_poisoned.id
            ),
        ));
    }
    let n = clean.len();
    let target = (cfg.rate * n as f64).round() as usize;
    if cfg.rate > 0.0 && target == 0 {
        return Err(Error::invalid_param(
            "rate",
            format!("rate {} of {n} samples rounds to zero poisoned samples", cfg.rate),
        ));
    }
    if cfg.strategy == AttackStrategy::BncGrammar {
        cfg.grammar.validate()?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut samples = clean.samples.clone();
    let mut mutated: Vec<(usize, PoisonRecord)> = Vec::with_capacity(target);
    for idx in order {
        if mutated.len() == target {
            break;
        }
        let sample = &clean.samples[idx];
        match mutate(&sample.code, cfg, &mut rng) {
            Some(m) => {
                samples[idx].code = m.code;
                samples[idx].poisoned = Some(true);
                mutated.push((
                    idx,
                    PoisonRecord {
                        sample_id: sample.id.clone(),
                        strategy: cfg.strategy,
                        injected_tokens: m.injected_tokens,
                        injection_site: m.injection_site,
                    },
                ));
            }
            None => {
                log::warn!(
                    "sample {:?} not eligible for {}, picking another",
                    sample.id,
                    cfg.strategy
                );
            }
        }
    }
    if mutated.len() < target {
        return Err(Error::NotEnoughEligible {
            requested: target,
            eligible: mutated.len(),
        });
    }

    mutated.sort_by_key(|(idx, _)| *idx);
    let records = mutated.into_iter().map(|(_, r)| r).collect();
    let poisoned = Dataset {
        samples,
        provenance: format!(
            "{} ({} rate={} seed={})",
            clean.provenance, cfg.strategy, cfg.rate, cfg.seed
        ),
    };
    Ok((poisoned, records))
}

struct Mutation {
    code: String,
    injected_tokens: Vec<String>,
    injection_site: (usize, usize),
}

fn mutate(code: &str, cfg: &AttackConfig, rng: &mut ChaCha8Rng) -> Option<Mutation> {
    match cfg.strategy {
        AttackStrategy::BadcodeFixed => append_trigger(code, &cfg.fixed_trigger, rng),
        AttackStrategy::BadcodeMixed => {
            let trigger = cfg.trigger_pool[rng.gen_range(0..cfg.trigger_pool.len())].clone();
            append_trigger(code, &trigger, rng)
        }
        AttackStrategy::BncFixed => Some(insert_dead_code(code, &cfg.dead_code, rng)),
        AttackStrategy::BncGrammar => {
            let stmt = cfg.grammar.generate(rng).ok()?;
            Some(insert_dead_code(code, &stmt, rng))
        }
        AttackStrategy::CodepoisonerVariable => {
            let new_name = fresh_trigger_name(code, &cfg.rename_base, rng);
            rename_random_identifier(code, &new_name, rng).map(|(code, site)| Mutation {
                code,
                injected_tokens: fine_tokens(&new_name),
                injection_site: site,
            })
        }
    }
}

/// Identifier texts eligible for mutation, in first-occurrence order:
/// call/definition names (token before `(`), assignment targets, and
/// declared variables. One-character names are excluded since no subword
/// segmentation can split a trigger off a one-letter base.
fn identifier_candidates(code: &str) -> Vec<String> {
    let tokens = Tokenizer::new(TokenizerMode::Coarse).tokenize(code);
    let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, text) in texts.iter().enumerate() {
        let is_word = text
            .chars()
            .next()
            .map(|c| c.is_ascii_alphabetic() || c == '_')
            .unwrap_or(false);
        if !is_word || text.len() < 2 || KEYWORDS.contains(text) {
            continue;
        }
        let next = texts.get(i + 1).copied();
        let after_next = texts.get(i + 2).copied();
        let prev = i.checked_sub(1).and_then(|j| texts.get(j)).copied();
        let call_site = next == Some("(");
        let assignment = next == Some("=") && after_next != Some("=");
        let declaration = prev.map(|p| DECL_KEYWORDS.contains(&p)).unwrap_or(false);
        if (call_site || assignment || declaration) && seen.insert(text.to_string()) {
            out.push(text.to_string());
        }
    }
    out
}

/// Replace every whole-token occurrence of `name`, returning the new code
/// and the new-code span of the first replacement.
fn replace_identifier(code: &str, name: &str, replacement: &str) -> (String, (usize, usize)) {
    let tokens = Tokenizer::new(TokenizerMode::Coarse).tokenize(code);
    let mut out = String::with_capacity(code.len() + 16);
    let mut cursor = 0;
    let mut first_site = None;
    for tok in &tokens {
        if tok.text == name {
            out.push_str(&code[cursor..tok.span.0]);
            let start = out.len();
            out.push_str(replacement);
            if first_site.is_none() {
                first_site = Some((start, out.len()));
            }
            cursor = tok.span.1;
        }
    }
    out.push_str(&code[cursor..]);
    (out, first_site.unwrap_or((0, 0)))
}

/// BadCode-style mutation: extend one identifier with `trigger` at all of
/// its occurrences.
fn append_trigger(code: &str, trigger: &str, rng: &mut ChaCha8Rng) -> Option<Mutation> {
    let candidates = identifier_candidates(code);
    if candidates.is_empty() {
        return None;
    }
    let name = &candidates[rng.gen_range(0..candidates.len())];
    let extended = format!("{name}{trigger}");
    let (code, site) = replace_identifier(code, name, &extended);
    // The injected material is the trigger suffix of the first occurrence.
    let trigger_site = (site.1 - trigger.len(), site.1);
    Some(Mutation {
        code,
        injected_tokens: vec![trigger.to_string()],
        injection_site: trigger_site,
    })
}

fn rename_random_identifier(
    code: &str,
    new_name: &str,
    rng: &mut ChaCha8Rng,
) -> Option<(String, (usize, usize))> {
    let candidates = identifier_candidates(code);
    if candidates.is_empty() {
        return None;
    }
    let name = &candidates[rng.gen_range(0..candidates.len())];
    Some(replace_identifier(code, name, new_name))
}

/// Trigger name for identifier renaming: base prefix plus a short seeded
/// suffix not already present in the code.
fn fresh_trigger_name(code: &str, base: &str, rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    loop {
        let suffix: String = (0..2)
            .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
            .collect();
        let name = format!("{base}{suffix}");
        if !code.contains(&name) {
            return name;
        }
    }
}

/// Insert a statement at a uniformly random statement boundary: the start of
/// a line inside a braced block when one exists, otherwise any line
/// boundary (including the end of the code).
fn insert_dead_code(code: &str, stmt: &str, rng: &mut ChaCha8Rng) -> Mutation {
    let mut points: Vec<(usize, i32)> = Vec::new();
    let mut depth = 0i32;
    for (i, b) in code.bytes().enumerate() {
        match b {
            b'{' => depth += 1,
            b'}' => depth -= 1,
            b'\n' => points.push((i + 1, depth)),
            _ => {}
        }
    }
    points.push((code.len(), depth));
    let nested: Vec<usize> = points
        .iter()
        .filter(|(_, d)| *d >= 1)
        .map(|(p, _)| *p)
        .collect();
    let all: Vec<usize> = points.iter().map(|(p, _)| *p).collect();
    let pool = if nested.is_empty() { &all } else { &nested };
    let pos = pool[rng.gen_range(0..pool.len())];

    let mut out = String::with_capacity(code.len() + stmt.len() + 2);
    out.push_str(&code[..pos]);
    let needs_leading_newline = pos == code.len() && !code.ends_with('\n');
    if needs_leading_newline {
        out.push('\n');
    }
    let start = out.len();
    out.push_str(stmt);
    let end = out.len();
    out.push('\n');
    out.push_str(&code[pos..]);

    Mutation {
        code: out,
        injected_tokens: fine_tokens(stmt),
        injection_site: (start, end),
    }
}

/// Distinct token texts of a snippet under the fine tokenizer (without any
/// vocabulary attached), in order of first occurrence.
fn fine_tokens(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for tok in Tokenizer::new(TokenizerMode::Fine).tokenize(text) {
        if seen.insert(tok.text.clone()) {
            out.push(tok.text);
        }
    }
    out
}

/// Rename one seeded-random identifier to `new_name` at every occurrence.
pub fn rename_identifier(code: &str, new_name: &str, seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rename_random_identifier(code, new_name, &mut rng)
        .map(|(code, _)| code)
        .ok_or(Error::NoEligibleIdentifier)
}

/// Generate one dead-code statement from a grammar with a fresh seeded RNG.
pub fn gen_dead_code(grammar: &Pcfg, seed: u64) -> Result<String> {
    grammar.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    grammar.generate(&mut rng)
}

// ---------------------------------------------------------------------------
// Probabilistic context-free grammar
// ---------------------------------------------------------------------------

/// Grammar symbol: literal text, a rule reference, or a sampled numeric
/// terminal.
#[derive(Debug, Clone, PartialEq)]
pub enum Sym {
    Lit(String),
    Rule(String),
    /// Uniform two-decimal float in [0, 1), printed as `0.xx`.
    Float2,
    /// Uniform integer in an inclusive range.
    Int(i64, i64),
}

impl Sym {
    pub fn lit(s: &str) -> Sym {
        Sym::Lit(s.to_string())
    }

    pub fn rule(s: &str) -> Sym {
        Sym::Rule(s.to_string())
    }
}

/// One weighted production.
#[derive(Debug, Clone, PartialEq)]
pub struct Production {
    pub weight: f64,
    pub symbols: Vec<Sym>,
}

/// A probabilistic context-free grammar with an ordered rule list.
#[derive(Debug, Clone, PartialEq)]
pub struct Pcfg {
    pub start: String,
    pub rules: Vec<(String, Vec<Production>)>,
}

const MAX_EXPANSION_DEPTH: usize = 64;

impl Pcfg {
    /// The default dead-code grammar: unreachable guard statements of the
    /// family `if (<fn>(<float>) <cmp> <int>) <action>("<msg>");`.
    pub fn dead_code_default() -> Pcfg {
        let uniform = |names: &[&str]| -> Vec<Production> {
            let w = 1.0 / names.len() as f64;
            names
                .iter()
                .map(|n| Production {
                    weight: w,
                    symbols: vec![Sym::lit(n)],
                })
                .collect()
        };
        Pcfg {
            start: "stmt".to_string(),
            rules: vec![
                (
                    "stmt".to_string(),
                    vec![Production {
                        weight: 1.0,
                        symbols: vec![
                            Sym::lit("if ("),
                            Sym::rule("fn"),
                            Sym::lit("("),
                            Sym::Float2,
                            Sym::lit(") "),
                            Sym::rule("cmp"),
                            Sym::lit(" "),
                            Sym::Int(-100, 100),
                            Sym::lit(") "),
                            Sym::rule("action"),
                        ],
                    }],
                ),
                ("fn".to_string(), uniform(&["sin", "cos", "exp", "sqrt", "rand"])),
                ("cmp".to_string(), uniform(&["<", ">", "<=", ">=", "=="])),
                (
                    "action".to_string(),
                    vec![
                        Production {
                            weight: 1.0 / 3.0,
                            symbols: vec![
                                Sym::lit("print(\""),
                                Sym::rule("msg"),
                                Sym::lit("\");"),
                            ],
                        },
                        Production {
                            weight: 1.0 / 3.0,
                            symbols: vec![
                                Sym::lit("println(\""),
                                Sym::rule("msg"),
                                Sym::lit("\");"),
                            ],
                        },
                        Production {
                            weight: 1.0 / 3.0,
                            symbols: vec![
                                Sym::lit("throw new Exception(\""),
                                Sym::rule("msg"),
                                Sym::lit("\")"),
                            ],
                        },
                    ],
                ),
                (
                    "msg".to_string(),
                    uniform(&["fail", "exception", "alert", "warning"]),
                ),
            ],
        }
    }

    fn productions(&self, name: &str) -> Option<&[Production]> {
        self.rules
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.as_slice())
    }

    /// Well-formedness: a resolvable start rule, at least one production per
    /// rule, positive weights summing to 1 (within 1e-9) per rule, and no
    /// dangling rule references.
    pub fn validate(&self) -> Result<()> {
        let err = |message: String| Error::MalformedGrammar { message };
        if self.productions(&self.start).is_none() {
            return Err(err(format!("start rule {:?} is not defined", self.start)));
        }
        let mut names = HashSet::new();
        for (name, prods) in &self.rules {
            if !names.insert(name.as_str()) {
                return Err(err(format!("rule {name:?} is defined twice")));
            }
            if prods.is_empty() {
                return Err(err(format!("rule {name:?} has no productions")));
            }
            let sum: f64 = prods.iter().map(|p| p.weight).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(err(format!(
                    "rule {name:?} production weights sum to {sum}, expected 1"
                )));
            }
            if prods.iter().any(|p| p.weight <= 0.0) {
                return Err(err(format!("rule {name:?} has a non-positive weight")));
            }
        }
        for (name, prods) in &self.rules {
            for p in prods {
                for sym in &p.symbols {
                    if let Sym::Rule(r) = sym {
                        if self.productions(r).is_none() {
                            return Err(err(format!(
                                "rule {name:?} references undefined rule {r:?}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Sample one string from the grammar.
    pub fn generate(&self, rng: &mut ChaCha8Rng) -> Result<String> {
        let mut out = String::new();
        self.expand(&self.start, rng, &mut out, 0)?;
        Ok(out)
    }

    fn expand(
        &self,
        rule: &str,
        rng: &mut ChaCha8Rng,
        out: &mut String,
        depth: usize,
    ) -> Result<()> {
        if depth > MAX_EXPANSION_DEPTH {
            return Err(Error::MalformedGrammar {
                message: format!("expansion exceeded depth {MAX_EXPANSION_DEPTH} (recursive grammar?)"),
            });
        }
        let prods = self.productions(rule).ok_or_else(|| Error::MalformedGrammar {
            message: format!("undefined rule {rule:?}"),
        })?;
        let mut u: f64 = rng.gen();
        let mut chosen = &prods[prods.len() - 1];
        for p in prods {
            if u < p.weight {
                chosen = p;
                break;
            }
            u -= p.weight;
        }
        for sym in &chosen.symbols {
            match sym {
                Sym::Lit(text) => out.push_str(text),
                Sym::Rule(r) => self.expand(r, rng, out, depth + 1)?,
                Sym::Float2 => {
                    let hundredths: u32 = rng.gen_range(0..100);
                    out.push_str(&format!("0.{hundredths:02}"));
                }
                Sym::Int(lo, hi) => {
                    let v: i64 = rng.gen_range(*lo..=*hi);
                    out.push_str(&v.to_string());
                }
            }
        }
        Ok(())
    }

    /// Whether `text` is derivable from the grammar (backtracking matcher;
    /// numeric terminals match maximal digit runs, which is exact as long as
    /// no production places two numeric terminals back to back).
    pub fn can_derive(&self, text: &str) -> bool {
        let start = [Sym::Rule(self.start.clone())];
        self.match_syms(&start, text)
    }

    fn match_syms(&self, syms: &[Sym], text: &str) -> bool {
        let Some((first, rest)) = syms.split_first() else {
            return text.is_empty();
        };
        match first {
            Sym::Lit(lit) => text
                .strip_prefix(lit.as_str())
                .map(|t| self.match_syms(rest, t))
                .unwrap_or(false),
            Sym::Rule(r) => match self.productions(r) {
                Some(prods) => prods.iter().any(|p| {
                    let mut expanded: Vec<Sym> = p.symbols.clone();
                    expanded.extend_from_slice(rest);
                    self.match_syms(&expanded, text)
                }),
                None => false,
            },
            Sym::Float2 => {
                let bytes = text.as_bytes();
                if bytes.len() >= 4
                    && bytes[0] == b'0'
                    && bytes[1] == b'.'
                    && bytes[2].is_ascii_digit()
                    && bytes[3].is_ascii_digit()
                {
                    self.match_syms(rest, &text[4..])
                } else {
                    false
                }
            }
            Sym::Int(lo, hi) => {
                let negative = text.starts_with('-');
                let digits_start = usize::from(negative);
                let digits_end = text[digits_start..]
                    .find(|c: char| !c.is_ascii_digit())
                    .map(|i| digits_start + i)
                    .unwrap_or(text.len());
                if digits_end == digits_start {
                    return false;
                }
                match text[..digits_end].parse::<i64>() {
                    Ok(v) if v >= *lo && v <= *hi && v.to_string() == &text[..digits_end] => {
                        self.match_syms(rest, &text[digits_end..])
                    }
                    _ => false,
                }
            }
        }
    }
}
