//! Trigger identification and dataset purification.
//!
//! Every token of every suspect sample is scored by how much its deletion
//! lowers the sample's cross-entropy under the clean language model. A
//! deletion that lowers entropy marks a token the model found disruptive;
//! those per-occurrence improvements are accumulated by token text across
//! the whole dataset, the top-k tokens are declared triggers, and
//! purification removes each sample containing any of them outright (tokens
//! are never excised from a kept sample, which would manufacture mislabeled
//! records).
//!
//! Deleting token `i` only disturbs predictions whose n-gram window overlaps
//! position `i`, so each masked entropy is recomputed over a window of
//! `2(order-1)+1` positions instead of rescoring the whole sequence; the
//! windowed value matches full rescoring to within float noise.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::ngram::{EntropyMode, NGramModel};
use crate::tokenizer::{Token, TokenSequence, Tokenizer, TokenizerMode};

/// Deltas at or below this are float noise, not naturalness improvements;
/// they are never recorded. Real trigger deltas sit orders of magnitude
/// higher.
pub const MIN_DELTA: f64 = 1e-12;

/// Quantum for ranking comparisons: cumulative deltas within this of each
/// other are ties and fall back to the lexicographic tie-break. Keeps the
/// ranking independent of float summation order.
pub const RANK_QUANTUM: f64 = 1e-9;

/// Canonical sort key for a cumulative delta.
pub fn rank_key(delta: f64) -> i128 {
    (delta / RANK_QUANTUM).round() as i128
}

/// Detector knobs.
#[derive(Debug, Clone, Copy)]
pub struct DetectorConfig {
    /// Number of top-ranked tokens declared triggers.
    pub k: usize,
    /// Token cap per sample; longer sequences are truncated (and logged).
    pub max_seq_len: usize,
    pub entropy_mode: EntropyMode,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            k: 10,
            max_seq_len: 2048,
            entropy_mode: EntropyMode::PerToken,
        }
    }
}

/// One entropy-lowering deletion: removing `token` from its sample dropped
/// cross-entropy by `delta` (always positive).
#[derive(Debug, Clone)]
pub struct ScoredDeletion {
    pub token: Token,
    pub delta: f64,
    pub sample_id: String,
}

/// Aggregate standing of one token text across the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerEntry {
    pub token: String,
    pub cumulative_delta: f64,
    /// Number of samples contributing at least one deletion.
    pub support: u64,
}

/// Scan configuration echoed into the report file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub n: usize,
    pub k: usize,
    pub entropy_mode: EntropyMode,
    pub tokenizer_mode: TokenizerMode,
}

/// Ranked trigger candidates plus the flagged sample ids.
///
/// `entries` are sorted by cumulative delta descending, ties broken
/// lexicographically by token text; `selected` is the first `k` tokens.
/// Deltas within [`RANK_QUANTUM`] of each other count as tied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerReport {
    pub config: ReportConfig,
    pub entries: Vec<TriggerEntry>,
    pub selected: Vec<String>,
    pub flagged_ids: Vec<String>,
}

impl TriggerReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TriggerReport> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let report = serde_json::from_reader(BufReader::new(file))?;
        Ok(report)
    }
}

/// Entropy of the sequence with position `i` deleted, for every position.
/// `None` marks a deletion that would empty the sequence. Values are in the
/// requested mode (per-token entropies are renormalized to the shortened
/// length exactly).
pub fn masked_entropies(
    model: &NGramModel,
    tokens: &[&str],
    mode: EntropyMode,
) -> Result<Vec<Option<f64>>> {
    if tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    let n = model.order();
    let t = tokens.len();
    let scored = t + 1;
    let padded = model.pad_ids(tokens);
    let nll: Vec<f64> = (0..scored).map(|p| model.position_nll(&padded, p)).collect();
    let full_total: f64 = nll.iter().sum();

    let mut out = Vec::with_capacity(t);
    for d in 0..t {
        if t == 1 {
            out.push(None);
            continue;
        }
        // Old scored positions d..=hi_old are dropped; the shortened
        // sequence re-predicts hi_old - d positions with spliced contexts
        // (none for an order-1 model).
        let hi_old = (d + n - 1).min(t);
        let mut total = full_total;
        for dropped in &nll[d..=hi_old] {
            total -= dropped;
        }
        if hi_old > d {
            let hi_new = hi_old - 1;
            // Shortened padded sequence: padded without index n-1+d.
            let deleted = n - 1 + d;
            let shortened = |idx: usize| -> u32 {
                if idx < deleted {
                    padded[idx]
                } else {
                    padded[idx + 1]
                }
            };
            let mut window = Vec::with_capacity(2 * n - 1);
            let w0 = d;
            for idx in w0..=(hi_new + n - 1) {
                window.push(shortened(idx));
            }
            for s in d..=hi_new {
                let ctx = &window[s - w0..s - w0 + n - 1];
                let target = window[s - w0 + n - 1];
                total += -model.prob_ids(ctx, target).ln();
            }
        }
        out.push(Some(match mode {
            EntropyMode::PerToken => total / (scored - 1) as f64,
            EntropyMode::Total => total,
        }));
    }
    Ok(out)
}

/// Signed per-position deletion effects: `(token, e - e_masked)` for every
/// deletable position. Positive means deleting the token made the sample
/// look more natural.
fn signed_deltas(
    model: &NGramModel,
    seq: &TokenSequence,
    cfg: &DetectorConfig,
) -> Result<Vec<(Token, f64)>> {
    let mut tokens: Vec<&Token> = seq.tokens.iter().collect();
    if tokens.len() > cfg.max_seq_len {
        log::warn!(
            "sample {} truncated from {} to {} tokens",
            seq.sample_id,
            tokens.len(),
            cfg.max_seq_len
        );
        tokens.truncate(cfg.max_seq_len);
    }
    if tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
    let e = model.cross_entropy(&texts)?.in_mode(cfg.entropy_mode);
    let masked = masked_entropies(model, &texts, cfg.entropy_mode)?;
    Ok(tokens
        .into_iter()
        .zip(masked)
        .filter_map(|(tok, em)| em.map(|em| (tok.clone(), e - em)))
        .collect())
}

/// Score one sample: every deletion that strictly lowered entropy, each
/// occurrence of a repeated token scored independently.
pub fn score_sample(
    model: &NGramModel,
    seq: &TokenSequence,
    cfg: &DetectorConfig,
) -> Result<Vec<ScoredDeletion>> {
    Ok(signed_deltas(model, seq, cfg)?
        .into_iter()
        .filter(|(_, delta)| *delta > MIN_DELTA)
        .map(|(token, delta)| ScoredDeletion {
            token,
            delta,
            sample_id: seq.sample_id.clone(),
        })
        .collect())
}

/// Single-sample suspicion scores in the style of threshold-based outlier
/// detection: the signed entropy change per token, with no positivity filter
/// and no cross-sample accumulation. Tokens scoring above zero would be
/// flagged by a threshold-0 rule. Kept as the motivating contrast: on any
/// one sample, benign tokens routinely outscore trigger tokens.
pub fn onion_baseline_score(
    model: &NGramModel,
    seq: &TokenSequence,
    cfg: &DetectorConfig,
) -> Result<Vec<(Token, f64)>> {
    signed_deltas(model, seq, cfg)
}

/// Tokens a threshold-0 rule would flag.
pub fn onion_flagged(scores: &[(Token, f64)]) -> Vec<&Token> {
    scores
        .iter()
        .filter(|(_, s)| *s > 0.0)
        .map(|(t, _)| t)
        .collect()
}

/// Rank every token by its corpus-wide cumulative entropy improvement and
/// select the top `k`. The result is independent of sample order and of the
/// parallel schedule: per-token deltas are sorted before summation.
pub fn identify_triggers(
    model: &NGramModel,
    suspect: &Dataset,
    cfg: &DetectorConfig,
) -> Result<TriggerReport> {
    if suspect.is_empty() {
        return Err(Error::EmptyDataset {
            context: "trigger identification".to_string(),
        });
    }
    if cfg.max_seq_len < model.order() {
        return Err(Error::invalid_param(
            "max_seq_len",
            format!(
                "must be at least the model order {}, got {}",
                model.order(),
                cfg.max_seq_len
            ),
        ));
    }
    let tokenizer = model.tokenizer();

    let per_sample: Vec<(Vec<ScoredDeletion>, HashSet<String>)> = suspect
        .samples
        .par_iter()
        .map(|sample| {
            let seq = tokenizer.tokenize_sample(&sample.code, &sample.id);
            let token_texts: HashSet<String> =
                seq.tokens.iter().map(|t| t.text.clone()).collect();
            let deletions = score_sample(model, &seq, cfg)?;
            Ok((deletions, token_texts))
        })
        .collect::<Result<_>>()?;

    // Accumulate per token text. Deltas are summed in sorted order so the
    // totals do not depend on how samples were ordered or scheduled.
    let mut deltas_by_token: HashMap<String, Vec<f64>> = HashMap::new();
    let mut supports: HashMap<String, HashSet<usize>> = HashMap::new();
    for (sample_idx, (deletions, _)) in per_sample.iter().enumerate() {
        for del in deletions {
            deltas_by_token
                .entry(del.token.text.clone())
                .or_default()
                .push(del.delta);
            supports
                .entry(del.token.text.clone())
                .or_default()
                .insert(sample_idx);
        }
    }

    let mut entries: Vec<TriggerEntry> = deltas_by_token
        .into_iter()
        .map(|(token, mut deltas)| {
            deltas.sort_by(f64::total_cmp);
            let cumulative_delta = deltas.iter().sum();
            let support = supports[&token].len() as u64;
            TriggerEntry {
                token,
                cumulative_delta,
                support,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        rank_key(b.cumulative_delta)
            .cmp(&rank_key(a.cumulative_delta))
            .then_with(|| a.token.cmp(&b.token))
    });

    if cfg.k > entries.len() {
        log::warn!(
            "requested k={} trigger tokens but only {} tokens scored; selecting all of them",
            cfg.k,
            entries.len()
        );
    }
    let selected: Vec<String> = entries
        .iter()
        .take(cfg.k)
        .map(|e| e.token.clone())
        .collect();

    let selected_set: HashSet<&str> = selected.iter().map(String::as_str).collect();
    let flagged_ids: Vec<String> = suspect
        .samples
        .iter()
        .zip(&per_sample)
        .filter(|(_, (_, texts))| texts.iter().any(|t| selected_set.contains(t.as_str())))
        .map(|(sample, _)| sample.id.clone())
        .collect();

    Ok(TriggerReport {
        config: ReportConfig {
            n: model.order(),
            k: cfg.k,
            entropy_mode: cfg.entropy_mode,
            tokenizer_mode: model.tokenizer_mode(),
        },
        entries,
        selected,
        flagged_ids,
    })
}

/// Split a dataset into kept and removed halves: a sample is removed iff its
/// token sequence contains at least one selected trigger token. The two
/// halves partition the input; samples are always removed whole.
pub fn purify(
    suspect: &Dataset,
    report: &TriggerReport,
    tokenizer: &Tokenizer,
) -> (Dataset, Dataset) {
    let selected: HashSet<&str> = report.selected.iter().map(String::as_str).collect();
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for sample in &suspect.samples {
        let contains_trigger = !selected.is_empty()
            && tokenizer
                .tokenize(&sample.code)
                .iter()
                .any(|t| selected.contains(t.text.as_str()));
        if contains_trigger {
            removed.push(sample.clone());
        } else {
            kept.push(sample.clone());
        }
    }
    (
        Dataset {
            samples: kept,
            provenance: format!("{} (purified)", suspect.provenance),
        },
        Dataset {
            samples: removed,
            provenance: format!("{} (removed)", suspect.provenance),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CodeSample;
    use crate::ngram::NGramModel;

    fn dataset_of(codes: &[&str]) -> Dataset {
        let samples = codes
            .iter()
            .enumerate()
            .map(|(i, c)| CodeSample::new(format!("s{i}"), *c))
            .collect();
        Dataset::new(samples, "test").unwrap()
    }

    fn clean_corpus() -> Dataset {
        dataset_of(&[
            "int count = read_file(name);",
            "int total = read_file(name);",
            "count = count + total;",
            "if (count > 0) { write_file(name, count); }",
            "total = total + 1;",
            "write_file(name, total);",
        ])
    }

    #[test]
    fn injected_unseen_token_gets_positive_delta() {
        let model = NGramModel::train(&clean_corpus(), 4, 0.4, TokenizerMode::Fine).unwrap();
        let tok = model.tokenizer();
        let cfg = DetectorConfig::default();

        let poisoned = tok.tokenize_sample("int count = read_file(name); rb", "p0");
        let deletions = score_sample(&model, &poisoned, &cfg).unwrap();
        let rb = deletions.iter().find(|d| d.token.text == "rb");
        assert!(rb.is_some(), "rb deletion should lower entropy: {deletions:?}");
        let rb_delta = rb.unwrap().delta;

        // A fully in-distribution sample produces no deletion anywhere near
        // the trigger's improvement.
        let clean = tok.tokenize_sample("int count = read_file(name);", "c0");
        let clean_dels = score_sample(&model, &clean, &cfg).unwrap();
        for d in &clean_dels {
            assert!(d.delta < rb_delta, "clean delta {d:?} >= trigger delta {rb_delta}");
        }
    }

    #[test]
    fn single_token_sequence_yields_no_deletions() {
        let model = NGramModel::train(&clean_corpus(), 4, 0.4, TokenizerMode::Fine).unwrap();
        let tok = model.tokenizer();
        let seq = tok.tokenize_sample("count", "one");
        let deletions = score_sample(&model, &seq, &DetectorConfig::default()).unwrap();
        assert!(deletions.is_empty());
    }

    #[test]
    fn onion_scores_are_signed_version_of_deletion_deltas() {
        let model = NGramModel::train(&clean_corpus(), 4, 0.4, TokenizerMode::Fine).unwrap();
        let tok = model.tokenizer();
        let cfg = DetectorConfig::default();
        let seq = tok.tokenize_sample("count = count + rb + total;", "p");

        let onion = onion_baseline_score(&model, &seq, &cfg).unwrap();
        let deletions = score_sample(&model, &seq, &cfg).unwrap();

        assert_eq!(onion.len(), seq.tokens.len());
        let mut del_iter = deletions.iter();
        for (tok, suspicion) in &onion {
            if *suspicion > 0.0 {
                let d = del_iter.next().expect("positive onion score missing from deletions");
                assert_eq!(&d.token, tok);
                assert_eq!(d.delta, *suspicion);
            }
        }
        assert!(del_iter.next().is_none());

        let flagged = onion_flagged(&onion);
        assert_eq!(flagged.len(), deletions.len());
    }

    #[test]
    fn onion_thresholding_misfires_on_dead_code() {
        // The single-sample threshold rule flags benign tokens while parts
        // of an injected statement score below zero.
        let clean = crate::synth::gen_corpus(&crate::synth::SynthConfig::new(400, 3, "c-"));
        let model = NGramModel::train(&clean, 4, 0.4, TokenizerMode::Fine).unwrap();
        let tok = model.tokenizer();
        let cfg = DetectorConfig::default();

        let base = &clean.samples[207].code;
        let split = base.find('\n').unwrap() + 1;
        let poisoned_code = format!(
            "{}  if (exp(0.94) >= 11) print(\"exception\");\n{}",
            &base[..split],
            &base[split..]
        );
        let seq = tok.tokenize_sample(&poisoned_code, "p");
        let scores = onion_baseline_score(&model, &seq, &cfg).unwrap();

        let injected = |t: &Token| t.span.0 >= split && t.span.1 <= split + 44;
        let clean_above_zero = scores.iter().any(|(t, s)| !injected(t) && *s > 0.0);
        let trigger_below_zero = scores.iter().any(|(t, s)| injected(t) && *s < 0.0);
        assert!(clean_above_zero, "no benign token scored above the threshold");
        assert!(trigger_below_zero, "no injected token scored below zero");

        // On a fully clean sample the rule still flags whatever clears the
        // threshold.
        let clean_seq = tok.tokenize_sample(&clean.samples[11].code, "c");
        let clean_scores = onion_baseline_score(&model, &clean_seq, &cfg).unwrap();
        let flagged = onion_flagged(&clean_scores);
        assert_eq!(
            flagged.len(),
            clean_scores.iter().filter(|(_, s)| *s > 0.0).count()
        );
    }

    #[test]
    fn k_zero_selects_nothing_and_purify_is_identity() {
        let model = NGramModel::train(&clean_corpus(), 4, 0.4, TokenizerMode::Fine).unwrap();
        let suspect = dataset_of(&["count = count + rb;", "total = total + 1;"]);
        let cfg = DetectorConfig {
            k: 0,
            ..DetectorConfig::default()
        };
        let report = identify_triggers(&model, &suspect, &cfg).unwrap();
        assert!(report.selected.is_empty());
        assert!(report.flagged_ids.is_empty());

        let (kept, removed) = purify(&suspect, &report, &model.tokenizer());
        assert_eq!(kept, suspect);
        assert!(removed.is_empty());
    }

    #[test]
    fn k_larger_than_scored_tokens_selects_all() {
        let model = NGramModel::train(&clean_corpus(), 4, 0.4, TokenizerMode::Fine).unwrap();
        let suspect = dataset_of(&["count = count + 1;"]);
        let cfg = DetectorConfig {
            k: 10_000,
            ..DetectorConfig::default()
        };
        let report = identify_triggers(&model, &suspect, &cfg).unwrap();
        assert_eq!(report.selected.len(), report.entries.len());
        assert!(report.selected.len() < 10_000);
    }

    #[test]
    fn entries_are_sorted_and_positive() {
        let model = NGramModel::train(&clean_corpus(), 4, 0.4, TokenizerMode::Fine).unwrap();
        let suspect = dataset_of(&[
            "count = count + rb;",
            "total = rb + total;",
            "write_file(name, zq);",
        ]);
        let report =
            identify_triggers(&model, &suspect, &DetectorConfig::default()).unwrap();
        for pair in report.entries.windows(2) {
            let (ka, kb) = (rank_key(pair[0].cumulative_delta), rank_key(pair[1].cumulative_delta));
            assert!(ka > kb || (ka == kb && pair[0].token < pair[1].token));
        }
        for e in &report.entries {
            assert!(e.cumulative_delta > 0.0);
            assert!(e.support >= 1);
        }
        // Two samples contribute to rb.
        let rb = report.entries.iter().find(|e| e.token == "rb").unwrap();
        assert_eq!(rb.support, 2);
    }

    #[test]
    fn order_invariance_under_sample_permutation() {
        let model = NGramModel::train(&clean_corpus(), 4, 0.4, TokenizerMode::Fine).unwrap();
        let codes = [
            "count = count + rb;",
            "total = rb + total;",
            "write_file(name, zq);",
            "if (count > 0) { total = total + 1; }",
        ];
        let forward = dataset_of(&codes);
        let mut reversed_codes = codes;
        reversed_codes.reverse();
        let reversed = dataset_of(&reversed_codes);

        let cfg = DetectorConfig::default();
        let a = identify_triggers(&model, &forward, &cfg).unwrap();
        let b = identify_triggers(&model, &reversed, &cfg).unwrap();
        assert_eq!(a.entries, b.entries);
        assert_eq!(a.selected, b.selected);
    }

    #[test]
    fn selected_is_monotone_in_k() {
        let model = NGramModel::train(&clean_corpus(), 4, 0.4, TokenizerMode::Fine).unwrap();
        let suspect = dataset_of(&[
            "count = count + rb;",
            "total = zq + total;",
            "write_file(vv, name);",
        ]);
        let mut previous: Vec<String> = Vec::new();
        for k in 0..8 {
            let cfg = DetectorConfig {
                k,
                ..DetectorConfig::default()
            };
            let report = identify_triggers(&model, &suspect, &cfg).unwrap();
            assert_eq!(&report.selected[..previous.len()], &previous[..]);
            previous = report.selected;
        }
    }

    #[test]
    fn purify_partitions_the_dataset() {
        let model = NGramModel::train(&clean_corpus(), 4, 0.4, TokenizerMode::Fine).unwrap();
        let suspect = dataset_of(&[
            "count = count + rb;",
            "total = total + 1;",
            "rb = rb + rb;",
            "write_file(name, count);",
        ]);
        let cfg = DetectorConfig {
            k: 1,
            ..DetectorConfig::default()
        };
        let report = identify_triggers(&model, &suspect, &cfg).unwrap();
        assert_eq!(report.selected, vec!["rb".to_string()]);

        let (kept, removed) = purify(&suspect, &report, &model.tokenizer());
        assert_eq!(kept.len() + removed.len(), suspect.len());
        let kept_ids: HashSet<&str> = kept.ids().collect();
        let removed_ids: HashSet<&str> = removed.ids().collect();
        assert!(kept_ids.is_disjoint(&removed_ids));
        assert_eq!(removed_ids, HashSet::from(["s0", "s2"]));
        assert_eq!(report.flagged_ids, vec!["s0", "s2"]);
    }

    #[test]
    fn report_round_trips_through_json() {
        let model = NGramModel::train(&clean_corpus(), 4, 0.4, TokenizerMode::Fine).unwrap();
        let suspect = dataset_of(&["count = count + rb;"]);
        let report =
            identify_triggers(&model, &suspect, &DetectorConfig::default()).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        report.save(f.path()).unwrap();
        let loaded = TriggerReport::load(f.path()).unwrap();
        assert_eq!(report, loaded);
    }

    #[test]
    fn max_seq_len_below_order_is_rejected() {
        let model = NGramModel::train(&clean_corpus(), 4, 0.4, TokenizerMode::Fine).unwrap();
        let suspect = dataset_of(&["count = count + 1;"]);
        let cfg = DetectorConfig {
            max_seq_len: 2,
            ..DetectorConfig::default()
        };
        assert!(identify_triggers(&model, &suspect, &cfg).is_err());
    }

    #[test]
    fn masked_entropies_match_full_rescoring() {
        let model = NGramModel::train(&clean_corpus(), 4, 0.4, TokenizerMode::Fine).unwrap();
        let tok = model.tokenizer();
        let seq = tok.tokenize_sample("if (count > 0) { write_file(name, rb); }", "p");
        let texts: Vec<&str> = seq.tokens.iter().map(|t| t.text.as_str()).collect();

        for mode in [EntropyMode::Total, EntropyMode::PerToken] {
            let masked = masked_entropies(&model, &texts, mode).unwrap();
            for (i, em) in masked.iter().enumerate() {
                let mut shortened = texts.clone();
                shortened.remove(i);
                let full = model.cross_entropy(&shortened).unwrap().in_mode(mode);
                let em = em.expect("multi-token sequence");
                assert!(
                    (em - full).abs() < 1e-9,
                    "position {i} mode {mode}: windowed {em} vs full {full}"
                );
            }
        }
    }
}
