//! Property tests over the corpus, tokenizer, model, and detector
//! invariants.

use std::collections::HashSet;

use proptest::prelude::*;

use codesweep_core::corpus::{load_dataset, save_dataset, CodeSample, Dataset};
use codesweep_core::detector::{purify, ReportConfig, TriggerEntry, TriggerReport};
use codesweep_core::ngram::{EntropyMode, NGramModel};
use codesweep_core::tokenizer::{Tokenizer, TokenizerMode};

fn arb_sample(idx: usize) -> impl Strategy<Value = CodeSample> {
    (
        "[a-z_()+=;{} 0-9]{1,40}",
        proptest::option::of("[a-z0-9 ]{0,12}"),
        proptest::option::of(any::<bool>()),
        proptest::option::of(("[a-z]{1,8}", "[a-z0-9]{0,10}")),
    )
        .prop_filter_map("code must be non-blank", move |(code, label, poisoned, extra)| {
            if code.trim().is_empty() {
                return None;
            }
            let mut sample = CodeSample::new(format!("id-{idx}"), code);
            sample.label = label;
            sample.poisoned = poisoned;
            if let Some((k, v)) = extra {
                // Dodge collisions with the fixed schema fields.
                sample
                    .extra
                    .insert(format!("x_{k}"), serde_json::Value::String(v));
            }
            Some(sample)
        })
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    proptest::collection::vec(any::<u8>(), 0..12).prop_flat_map(|shape| {
        let samples: Vec<_> = shape
            .iter()
            .enumerate()
            .map(|(i, _)| arb_sample(i))
            .collect();
        samples.prop_map(|samples| Dataset::new(samples, "prop").unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_load_save_is_identity(dataset in arb_dataset()) {
        let file = tempfile::NamedTempFile::new().unwrap();
        save_dataset(&dataset, file.path()).unwrap();
        let reloaded = load_dataset(file.path()).unwrap();
        prop_assert_eq!(&dataset, &reloaded);

        // Saving the reloaded dataset is byte-stable.
        let file2 = tempfile::NamedTempFile::new().unwrap();
        save_dataset(&reloaded, file2.path()).unwrap();
        prop_assert_eq!(
            std::fs::read(file.path()).unwrap(),
            std::fs::read(file2.path()).unwrap()
        );
    }

    #[test]
    fn tokenizer_spans_are_faithful(code in "\\PC{0,120}") {
        for mode in [TokenizerMode::Fine, TokenizerMode::Coarse] {
            let tokenizer = Tokenizer::new(mode);
            let tokens = tokenizer.tokenize(&code);
            let mut prev_end = 0usize;
            for t in &tokens {
                prop_assert!(t.span.0 >= prev_end);
                prop_assert!(t.span.1 > t.span.0);
                prop_assert_eq!(&code[t.span.0..t.span.1], t.text.as_str());
                prev_end = t.span.1;
            }
            // Determinism.
            prop_assert_eq!(tokens, tokenizer.tokenize(&code));
        }
    }

    #[test]
    fn model_distributions_normalize(
        codes in proptest::collection::vec("[a-d ();=]{1,24}", 1..6),
        ctx in proptest::collection::vec("[a-d();=]{1,3}", 0..3),
        order in 1usize..5,
    ) {
        let samples: Vec<CodeSample> = codes
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.trim().is_empty())
            .map(|(i, c)| CodeSample::new(format!("s{i}"), c.clone()))
            .collect();
        prop_assume!(!samples.is_empty());
        let dataset = Dataset::new(samples, "prop").unwrap();
        let model = NGramModel::train(&dataset, order, 0.4, TokenizerMode::Fine).unwrap();

        let ctx_refs: Vec<&str> = ctx.iter().map(String::as_str).collect();
        let sum: f64 = model.symbols().map(|s| model.prob(&ctx_refs, s)).sum();
        prop_assert!((sum - 1.0).abs() < 1e-9, "sum = {sum}");
    }

    #[test]
    fn purify_partitions_any_dataset(
        dataset in arb_dataset(),
        selected in proptest::collection::vec("[a-z]{1,6}", 0..4),
    ) {
        let report = TriggerReport {
            config: ReportConfig {
                n: 4,
                k: selected.len(),
                entropy_mode: EntropyMode::PerToken,
                tokenizer_mode: TokenizerMode::Fine,
            },
            entries: selected
                .iter()
                .map(|t| TriggerEntry {
                    token: t.clone(),
                    cumulative_delta: 1.0,
                    support: 1,
                })
                .collect(),
            selected: selected.clone(),
            flagged_ids: vec![],
        };
        let tokenizer = Tokenizer::new(TokenizerMode::Fine);
        let (kept, removed) = purify(&dataset, &report, &tokenizer);

        prop_assert_eq!(kept.len() + removed.len(), dataset.len());
        let kept_ids: HashSet<&str> = kept.ids().collect();
        let removed_ids: HashSet<&str> = removed.ids().collect();
        prop_assert!(kept_ids.is_disjoint(&removed_ids));

        // Union preserves the original order and content.
        let mut merged: Vec<&CodeSample> = kept.samples.iter().chain(&removed.samples).collect();
        merged.sort_by_key(|s| {
            dataset
                .samples
                .iter()
                .position(|o| o.id == s.id)
                .unwrap()
        });
        for (orig, got) in dataset.samples.iter().zip(merged) {
            prop_assert_eq!(orig, got);
        }

        // Membership criterion holds sample by sample.
        let selected_set: HashSet<&str> = selected.iter().map(String::as_str).collect();
        for s in &removed.samples {
            let hit = tokenizer
                .tokenize(&s.code)
                .iter()
                .any(|t| selected_set.contains(t.text.as_str()));
            prop_assert!(hit);
        }
        for s in &kept.samples {
            let hit = tokenizer
                .tokenize(&s.code)
                .iter()
                .any(|t| selected_set.contains(t.text.as_str()));
            prop_assert!(!hit);
        }
    }
}
