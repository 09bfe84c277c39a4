//! Seeded synthetic code corpora.
//!
//! Generates C-flavored function snippets from fixed identifier pools. Two
//! corpora drawn with different seeds are disjoint as samples but share the
//! same token distribution, which is what the poisoning scenarios need: a
//! clean training corpus and a clean suspect base that look alike.
//!
//! The statistics matter more than the surface syntax, because an order-n
//! model scores a suspect token purely from a few neighbors. The corpus is
//! shaped so that legitimate tokens never build up corpus-wide deletion
//! scores:
//!
//! * Callee and camel-call nouns are coupled to their verb through a fixed
//!   bijection (the way real APIs pair `read`/`file`, `send`/`packet`), so
//!   deleting either half of a name breaks the other's predictability.
//! * Comparison operators, their constants, and the loop variable are
//!   functions of the snippet theme, never free choices the model would
//!   have to guess.
//! * Free identifier draws follow a skewed rank distribution: frequent pool
//!   words are statistically pinned down, and the rare tail words that can
//!   pick up sparse-statistics noise occur in so few samples that selecting
//!   one barely moves the false-positive rate. This mirrors the long tail
//!   of real identifier frequencies.
//! * Numeric literals come from cycled families (two-decimal floats,
//!   integers in -100..=100), and call-in-condition, guard-throw, and print
//!   statements teach the model the shapes that injected dead code reuses,
//!   so only the genuine trigger words of an injection stand out, not its
//!   punctuation.
//! * A few declarations carry an optional qualifier (`static`, `volatile`,
//!   ...): the one kind of token whose deletion leaves an ordinary trained
//!   statement. Qualifiers therefore occupy the bottom ranks of any trigger
//!   report, and each flags only the handful of samples containing it.
//!
//! The cycled slots guarantee that any corpus prefix of at least
//! [`POOL_CYCLE`] snippets contains every pool word, keeping sub-corpus
//! sweeps in-vocabulary. None of the pool words collides with the trigger
//! material used by the attack simulators, nor extends another pool word by
//! a prefix of a trigger (which would let the greedy subword split swallow
//! a trigger boundary).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CodeSample, Dataset};

const VERB_BASES: [&str; 60] = [
    "get", "set", "read", "write", "open", "close", "parse", "init", "load", "save", "find",
    "count", "sort", "merge", "copy", "check", "send", "recv", "push", "pop", "hash", "scan",
    "seek", "lock", "unlock", "free", "wait", "emit", "fill", "join", "split", "apply", "flush",
    "clear", "trim", "grow", "shrink", "swap", "move", "bind", "fold", "wrap", "peek", "poll",
    "drain", "attach", "detach", "encode", "decode", "pack", "verify", "submit", "cancel",
    "resolve", "dispatch", "collect", "reduce", "expand", "rotate", "align",
];

const NOUN_BASES: [&str; 60] = [
    "file", "buffer", "datum", "value", "item", "node", "list", "stack", "token", "line", "byte",
    "word", "offset", "length", "name", "key", "map", "entry", "table", "result", "flag", "page",
    "block", "cache", "handle", "socket", "packet", "total", "row", "cell", "grid", "body",
    "head", "tail", "edge", "link", "slot", "pool", "chunk", "frame", "field", "group", "label",
    "owner", "score", "shape", "state", "store", "style", "theme", "title", "track", "unit",
    "user", "view", "zone", "query", "batch", "digit", "record",
];

const VERB_FORMS: usize = VERB_BASES.len() * 2;
const NOUN_FORMS: usize = NOUN_BASES.len() * 2;

const CMPS: [&str; 5] = ["<", ">", "<=", ">=", "=="];

/// Integer literal from the cycled -100..=100 family.
fn int_lit(i: usize) -> String {
    (i as i64 % 201 - 100).to_string()
}

/// Snippets needed to guarantee full pool coverage in a corpus prefix.
pub const POOL_CYCLE: usize = 120;

/// Optional declaration qualifiers, used rarely. A qualifier is the one
/// token whose deletion leaves a perfectly ordinary declaration, so the
/// qualifiers take the bottom ranks of any trigger report; each appears in
/// around one percent of samples, so selecting one barely moves the
/// false-positive rate.
const QUALIFIERS: [&str; 10] = [
    "static", "const", "unsigned", "volatile", "register", "extern", "inline", "signed",
    "restrict", "local",
];

fn verb(i: usize) -> String {
    let base = VERB_BASES[i % VERB_BASES.len()];
    if (i / VERB_BASES.len()) % 2 == 0 {
        base.to_string()
    } else {
        format!("re{base}")
    }
}

fn noun(i: usize) -> String {
    let base = NOUN_BASES[i % NOUN_BASES.len()];
    if (i / NOUN_BASES.len()) % 2 == 0 {
        base.to_string()
    } else {
        format!("{base}s")
    }
}

fn cap_noun(i: usize) -> String {
    let form = noun(i);
    let mut chars = form.chars();
    let first = chars.next().unwrap().to_ascii_uppercase();
    format!("{first}{}", chars.as_str())
}

/// Fixed verb-to-noun pairing; 7 is coprime to the pool size, so cycling
/// verbs also cycles every paired noun.
fn paired_noun_index(verb_index: usize) -> usize {
    (verb_index * 7 + 11) % NOUN_FORMS
}

fn callee(verb_index: usize) -> String {
    format!("{}_{}", verb(verb_index), noun(paired_noun_index(verb_index)))
}

fn camel(verb_index: usize) -> String {
    format!("{}{}", verb(verb_index), cap_noun(paired_noun_index(verb_index)))
}

/// Corpus generation parameters.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub snippets: usize,
    pub seed: u64,
    pub id_prefix: String,
}

impl SynthConfig {
    pub fn new(snippets: usize, seed: u64, id_prefix: &str) -> Self {
        SynthConfig {
            snippets,
            seed,
            id_prefix: id_prefix.to_string(),
        }
    }
}

/// Generate a deterministic corpus of function snippets.
pub fn gen_corpus(cfg: &SynthConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples = (0..cfg.snippets)
        .map(|i| {
            CodeSample::new(
                format!("{}{:05}", cfg.id_prefix, i),
                gen_snippet(i, &mut rng),
            )
        })
        .collect();
    Dataset {
        samples,
        provenance: format!(
            "synthetic corpus (snippets={} seed={} prefix={})",
            cfg.snippets, cfg.seed, cfg.id_prefix
        ),
    }
}

/// Rank-skewed index: low indices are drawn often, the tail rarely.
fn zipf_index(rng: &mut ChaCha8Rng, len: usize) -> usize {
    // Inverse-cdf sampling of P(i) proportional to 1/(i + 24).
    let shift = 24.0;
    let norm = ((len as f64 + shift) / shift).ln();
    let u: f64 = rng.gen();
    let idx = (shift * (u * norm).exp() - shift) as usize;
    idx.min(len - 1)
}

/// Two-decimal float literal; cycling the index covers all 100 values.
fn float_lit(i: usize) -> String {
    format!("0.{:02}", (i * 13 + 7) % 100)
}

fn theme_cmp(theme: usize) -> &'static str {
    CMPS[theme % CMPS.len()]
}

fn theme_const(theme: usize, salt: usize) -> String {
    if (theme + salt) % 2 == 0 {
        "0".to_string()
    } else {
        int_lit(theme * 7 + salt * 31)
    }
}

fn gen_snippet(index: usize, rng: &mut ChaCha8Rng) -> String {
    let theme = index % NOUN_FORMS;
    let n1 = noun(theme);
    let v_sig = index % VERB_FORMS;
    let n2 = noun(zipf_index(rng, NOUN_FORMS));

    let mut code = format!("int {}(int {n2}) {{\n", callee(v_sig));
    let qualifier = if rng.gen_bool(0.06) {
        let q = QUALIFIERS[rng.gen_range(0..QUALIFIERS.len())];
        format!("{q} ")
    } else {
        String::new()
    };
    code.push_str(&format!(
        "  {qualifier}int {n1} = {}({});\n",
        callee(zipf_index(rng, VERB_FORMS)),
        float_lit(index)
    ));
    code.push_str(&format!(
        "  {}({n1});\n",
        if index % 2 == 0 { "print" } else { "println" }
    ));
    for _ in 0..rng.gen_range(2..=4) {
        code.push_str("  ");
        code.push_str(&gen_statement(theme, &n1, &n2, rng));
        code.push('\n');
    }
    // The camel call is always the last statement, so the transition into
    // `return` is a trained pattern.
    code.push_str(&format!("  {}({n1});\n", camel(v_sig)));
    code.push_str(&format!("  return {n1};\n}}\n"));
    code
}

fn gen_statement(theme: usize, n1: &str, n2: &str, rng: &mut ChaCha8Rng) -> String {
    let free_verb = zipf_index(rng, VERB_FORMS);
    // Guard-throw shows up occasionally, the way real code raises on bad
    // input.
    if rng.gen_bool(0.1) {
        return format!("if ({n1} < 0) throw new Exception({n1});");
    }
    match rng.gen_range(0..6) {
        0 => format!("{n1} = {}({n1});", callee(free_verb)),
        1 => format!("{n1} = {n1} + {};", theme_const(theme, 2)),
        2 => {
            if rng.gen_bool(0.5) {
                format!(
                    "if ({n1} {} {}) {n1} = {n1} - 1;",
                    theme_cmp(theme),
                    theme_const(theme, 0)
                )
            } else {
                format!(
                    "if ({n1} {} {}) {}({n1});",
                    theme_cmp(theme),
                    theme_const(theme, 4),
                    if theme % 2 == 0 { "print" } else { "println" }
                )
            }
        }
        3 => {
            let lv = noun((theme + 61) % NOUN_FORMS);
            format!("for (int {lv} = 0; {lv} < {n1}; {lv} = {lv} + 1) {n1} = {n1} + {lv};")
        }
        4 => format!("{}({n2});", camel(free_verb)),
        // Call-shaped conditions teach the punctuation patterns that
        // dead-code injections reuse.
        _ => format!(
            "if ({}({}) {} {}) {n1} = {n1} + 1;",
            callee(free_verb),
            float_lit(rng.gen_range(0..100)),
            theme_cmp(theme),
            theme_const(theme, 0)
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{Tokenizer, TokenizerMode};
    use std::collections::HashSet;

    const TRIGGERS: [&str; 5] = ["rb", "xt", "il", "ite", "wb"];

    fn all_pool_forms() -> Vec<String> {
        let mut forms = Vec::new();
        for i in 0..VERB_FORMS {
            forms.push(verb(i));
        }
        for i in 0..NOUN_FORMS {
            forms.push(noun(i));
            forms.push(cap_noun(i));
        }
        forms.push("int".to_string());
        forms.push("return".to_string());
        forms
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig::new(50, 9, "c-");
        assert_eq!(gen_corpus(&cfg), gen_corpus(&cfg));
    }

    #[test]
    fn different_seeds_differ() {
        let a = gen_corpus(&SynthConfig::new(50, 1, "c-"));
        let b = gen_corpus(&SynthConfig::new(50, 2, "c-"));
        assert_ne!(a, b);
    }

    #[test]
    fn pool_cycle_covers_every_cycled_form() {
        let corpus = gen_corpus(&SynthConfig::new(POOL_CYCLE, 3, "c-"));
        let tok = Tokenizer::new(TokenizerMode::Fine);
        let mut seen: HashSet<String> = HashSet::new();
        for s in &corpus.samples {
            for t in tok.tokenize(&s.code) {
                seen.insert(t.text);
            }
        }
        for i in 0..NOUN_FORMS {
            assert!(seen.contains(&noun(i)), "noun {:?} missing", noun(i));
            assert!(seen.contains(&cap_noun(i)), "cap {:?} missing", cap_noun(i));
        }
        for i in 0..VERB_FORMS {
            assert!(seen.contains(&verb(i)), "verb {:?} missing", verb(i));
        }
    }

    #[test]
    fn trigger_material_never_occurs_in_clean_corpus() {
        let corpus = gen_corpus(&SynthConfig::new(300, 4, "c-"));
        let tok = Tokenizer::new(TokenizerMode::Fine);
        let forbidden = ["rb", "xt", "il", "ite", "wb", "rand", "fail", "exception", "alert"];
        for s in &corpus.samples {
            for t in tok.tokenize(&s.code) {
                assert!(
                    !forbidden.contains(&t.text.as_str()),
                    "clean corpus contains trigger token {:?} in {:?}",
                    t.text,
                    s.id
                );
            }
        }
    }

    #[test]
    fn every_trigger_splits_off_every_pool_form() {
        // Exhaustive separability: appending a trigger to any identifier
        // form the corpus can produce must leave the trigger as its own
        // token under the vocabulary-aware fine tokenizer.
        let vocab: HashSet<String> = all_pool_forms().into_iter().collect();
        let tok = Tokenizer::with_vocab(TokenizerMode::Fine, vocab.clone());
        for form in vocab {
            for trig in TRIGGERS {
                let ident = format!("{form}{trig}");
                let tokens = tok.tokenize(&ident);
                assert_eq!(
                    tokens.last().map(|t| t.text.as_str()),
                    Some(trig),
                    "{ident:?} did not end with standalone {trig:?}: {:?}",
                    tokens.iter().map(|t| &t.text).collect::<Vec<_>>()
                );
            }
        }
    }

    #[test]
    fn snippets_have_identifiers_and_braces() {
        let corpus = gen_corpus(&SynthConfig::new(20, 5, "c-"));
        for s in &corpus.samples {
            assert!(s.code.contains('{') && s.code.contains('}'));
            assert!(s.code.contains("return"));
        }
    }
}
