//! Naive reference implementations used by the test suites to cross-check
//! the optimized scoring paths.
//!
//! Everything here favors obviousness over speed: masked entropies come from
//! full rescoring of each spliced sequence, and trigger ranking enumerates
//! every (sample, position) deletion outright. Keep this module free of the
//! windowed-rescoring machinery in [`crate::detector`]; it exists to catch
//! bugs there.

use std::collections::{HashMap, HashSet};

use crate::corpus::Dataset;
use crate::detector::{ReportConfig, TriggerEntry, TriggerReport};
use crate::error::Result;
use crate::ngram::{EntropyMode, NGramModel};

// The canonical scoring rules, restated here rather than imported: deltas at
// or below the noise floor are dropped, and ranking quantizes deltas so that
// float-noise differences fall back to the lexicographic tie-break.
const MIN_DELTA: f64 = 1e-12;
const RANK_QUANTUM: f64 = 1e-9;

fn rank_key(delta: f64) -> i128 {
    (delta / RANK_QUANTUM).round() as i128
}

/// Masked entropies by full rescoring: delete position `i`, rescore the
/// whole shortened sequence. `None` where deletion would empty the sequence.
pub fn masked_entropies_full(
    model: &NGramModel,
    tokens: &[&str],
    mode: EntropyMode,
) -> Result<Vec<Option<f64>>> {
    let mut out = Vec::with_capacity(tokens.len());
    for i in 0..tokens.len() {
        if tokens.len() == 1 {
            out.push(None);
            continue;
        }
        let mut shortened = tokens.to_vec();
        shortened.remove(i);
        out.push(Some(model.cross_entropy(&shortened)?.in_mode(mode)));
    }
    Ok(out)
}

/// Trigger identification by exhaustive enumeration of every deletion,
/// with its own accumulation and ranking logic.
pub fn brute_force_triggers(
    model: &NGramModel,
    suspect: &Dataset,
    k: usize,
    mode: EntropyMode,
) -> Result<TriggerReport> {
    let tokenizer = model.tokenizer();

    let mut deltas_by_token: HashMap<String, Vec<f64>> = HashMap::new();
    let mut support_samples: HashMap<String, HashSet<String>> = HashMap::new();
    let mut sample_tokens: Vec<(String, HashSet<String>)> = Vec::new();

    for sample in &suspect.samples {
        let tokens = tokenizer.tokenize(&sample.code);
        let texts: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
        sample_tokens.push((
            sample.id.clone(),
            texts.iter().map(|t| t.to_string()).collect(),
        ));
        if texts.is_empty() {
            continue;
        }
        let base = model.cross_entropy(&texts)?.in_mode(mode);
        for (i, masked) in masked_entropies_full(model, &texts, mode)?.into_iter().enumerate() {
            let Some(masked) = masked else { continue };
            if base - masked > MIN_DELTA {
                let text = texts[i].to_string();
                deltas_by_token
                    .entry(text.clone())
                    .or_default()
                    .push(base - masked);
                support_samples
                    .entry(text)
                    .or_default()
                    .insert(sample.id.clone());
            }
        }
    }

    let mut entries: Vec<TriggerEntry> = deltas_by_token
        .into_iter()
        .map(|(token, mut deltas)| {
            deltas.sort_by(f64::total_cmp);
            TriggerEntry {
                cumulative_delta: deltas.iter().sum(),
                support: support_samples[&token].len() as u64,
                token,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        rank_key(b.cumulative_delta)
            .cmp(&rank_key(a.cumulative_delta))
            .then_with(|| a.token.cmp(&b.token))
    });
    let selected: Vec<String> = entries.iter().take(k).map(|e| e.token.clone()).collect();
    let selected_set: HashSet<&str> = selected.iter().map(String::as_str).collect();
    let flagged_ids = sample_tokens
        .into_iter()
        .filter(|(_, texts)| texts.iter().any(|t| selected_set.contains(t.as_str())))
        .map(|(id, _)| id)
        .collect();

    Ok(TriggerReport {
        config: ReportConfig {
            n: model.order(),
            k,
            entropy_mode: mode,
            tokenizer_mode: model.tokenizer_mode(),
        },
        entries,
        selected,
        flagged_ids,
    })
}
