use std::collections::HashMap;

use emodiff_core::classifier::{Provenance, TrainConfig};
use emodiff_core::diffusion::{association_from_counts, pmi_from_counts, PmiCounts, PmiOptions};
use emodiff_core::interpret::{rank_from_pairs, SalienceAccumulator, SurrogateOptions, TargetItem};
use emodiff_core::{Classifier, LabeledDataset, LabeledItem, Lexicon, NaiveBayes, TargetSet};
use proptest::prelude::*;

const WORDS: &[&str] = &["sun", "rain", "coin", "cat", "tea", "hat", "sad", "joy"];
const LABELS: &[&str] = &["😂", "😭", "🎉"];

fn docs() -> impl Strategy<Value = Vec<(usize, Vec<usize>)>> {
    prop::collection::vec((0..LABELS.len(), prop::collection::vec(0..WORDS.len(), 1..8)), 1..40)
}

fn dataset(docs: &[(usize, Vec<usize>)]) -> LabeledDataset {
    LabeledDataset {
        label_space: LABELS.iter().map(|s| s.to_string()).collect(),
        provenance: Provenance::EmojiPrediction,
        items: docs
            .iter()
            .enumerate()
            .map(|(i, (l, ws))| LabeledItem {
                id: format!("d{i}"),
                tokens: ws.iter().map(|&w| WORDS[w].to_string()).collect(),
                label: LABELS[*l].to_string(),
            })
            .collect(),
    }
}

fn with_all_labels(docs: &mut Vec<(usize, Vec<usize>)>) {
    for l in 0..LABELS.len() {
        docs.push((l, vec![l]));
    }
}

proptest! {
    #[test]
    fn salience_means_match_double_loop(mut docs in docs()) {
        with_all_labels(&mut docs);
        let data = dataset(&docs);
        let model = NaiveBayes::train(&data, TrainConfig::default()).unwrap();
        let mut acc = SalienceAccumulator::new(model.label_space().to_vec());
        let mut rows = Vec::new();
        for it in &data.items {
            let label = model.predict(&it.tokens).label;
            let sal = model.salience(&it.tokens).unwrap();
            prop_assert!((sal.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            acc.add(label, &it.tokens, &sal);
            rows.push((label, &it.tokens, sal));
        }
        for k in 0..LABELS.len() {
            for w in WORDS {
                let (mut sum, mut n) = (0.0, 0u64);
                for (label, tokens, sal) in &rows {
                    if *label != k {
                        continue;
                    }
                    for (i, t) in tokens.iter().enumerate() {
                        if t == w {
                            sum += sal[i];
                            n += 1;
                        }
                    }
                }
                match acc.mean(k, w) {
                    Some((mean, occ)) => {
                        prop_assert_eq!(occ, n);
                        prop_assert!((mean - sum / n as f64).abs() <= 1e-12);
                    }
                    None => prop_assert_eq!(n, 0),
                }
            }
        }
    }

    #[test]
    fn salience_merge_is_order_free(docs in docs(), cut in 0usize..40, rot in 0usize..40) {
        let labels: Vec<String> = LABELS.iter().map(|s| s.to_string()).collect();
        let feed = |acc: &mut SalienceAccumulator, part: &[(usize, Vec<usize>)]| {
            for (l, ws) in part {
                let tokens: Vec<String> = ws.iter().map(|&w| WORDS[w].to_string()).collect();
                let sal = vec![1.0 / tokens.len() as f64; tokens.len()];
                acc.add(*l, &tokens, &sal);
            }
        };
        let mut whole = SalienceAccumulator::new(labels.clone());
        feed(&mut whole, &docs);
        let mut rotated = docs.clone();
        rotated.rotate_left(rot % docs.len());
        let cut = cut % (rotated.len() + 1);
        let mut a = SalienceAccumulator::new(labels.clone());
        let mut b = SalienceAccumulator::new(labels);
        feed(&mut a, &rotated[..cut]);
        feed(&mut b, &rotated[cut..]);
        b.merge(a);
        let (x, y) = (whole.finish(1, 100), b.finish(1, 100));
        prop_assert_eq!(x.labels.len(), y.labels.len());
        for (p, q) in x.labels.iter().zip(&y.labels) {
            prop_assert_eq!(&p.label, &q.label);
            prop_assert_eq!(p.docs, q.docs);
            prop_assert_eq!(p.top.len(), q.top.len());
            let other: HashMap<&str, (f64, u64)> = q.top.iter().map(|t| (t.token.as_str(), (t.mean, t.occurrences))).collect();
            for s in &p.top {
                let (mean, occ) = other[s.token.as_str()];
                prop_assert_eq!(s.occurrences, occ);
                prop_assert!((s.mean - mean).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn surrogate_scores_are_prediction_shares(
        pairs in prop::collection::vec((prop::collection::vec(0usize..2, 1..3), 0..LABELS.len()), 1..60),
        rot in 0usize..60,
    ) {
        let labels: Vec<String> = LABELS.iter().map(|s| s.to_string()).collect();
        let new = ["🥲".to_string(), "🪙".to_string()];
        let items: Vec<TargetItem> = pairs
            .iter()
            .enumerate()
            .map(|(i, (ts, _))| {
                let mut targets: Vec<String> = ts.iter().map(|&t| new[t].clone()).collect();
                targets.dedup();
                TargetItem { id: format!("p{i}"), tokens: vec![], targets }
            })
            .collect();
        let targets = TargetSet { new_emojis: new.to_vec(), items };
        let opts = SurrogateOptions { exclude: vec![], ..Default::default() };
        let report = rank_from_pairs(&labels, &targets, targets.items.iter().zip(pairs.iter().map(|p| p.1)), &opts);

        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.rotate_left(rot % pairs.len());
        let shuffled = rank_from_pairs(&labels, &targets, order.iter().map(|&i| (&targets.items[i], pairs[i].1)), &opts);
        prop_assert_eq!(&report, &shuffled);

        for r in &report.rankings {
            let mut counts: HashMap<&str, u64> = HashMap::new();
            let mut total = 0;
            for (item, (_, label)) in targets.items.iter().zip(&pairs) {
                if item.targets.contains(&r.new_emoji) {
                    *counts.entry(LABELS[*label]).or_default() += 1;
                    total += 1;
                }
            }
            prop_assert_eq!(r.denominator, total);
            let mut sum = 0.0;
            for row in &r.rows {
                let want = *counts.get(row.emoji.as_str()).unwrap_or(&0) as f64 / total as f64;
                prop_assert!((row.score - want).abs() <= 1e-12);
                sum += row.score;
            }
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            for pair in r.rows.windows(2) {
                prop_assert!(pair[0].count >= pair[1].count);
            }
            let marked: Vec<_> = r.rows.iter().filter(|row| row.surrogate).collect();
            prop_assert!(marked.len() <= 3 && marked.iter().all(|row| row.count > 0));
        }
    }

    #[test]
    fn pmi_counts_merge_like_one_pass(texts in prop::collection::vec(prop::collection::vec(0..WORDS.len() + 2, 1..6), 1..50), cut in 0usize..50) {
        let lex = Lexicon::bundled();
        let emoji = lex.lookup("😂").unwrap();
        let lines: Vec<String> = texts
            .iter()
            .enumerate()
            .map(|(i, ws)| {
                let text: Vec<&str> = ws.iter().map(|&w| *WORDS.get(w).unwrap_or(if w == WORDS.len() { &"😂" } else { &"#tag" })).collect();
                format!(r#"{{"id":"p{i}","created_at":"2021-01-01T00:00:00Z","text":"{}"}}"#, text.join(" "))
            })
            .collect();
        let corpus = emodiff_core::corpus::ingest_reader(lines.join("\n").as_bytes(), &lex, &Default::default()).unwrap();
        let posts: Vec<_> = corpus.iter().collect();
        let whole = PmiCounts::count(posts.iter().copied(), emoji, &lex, true);
        let cut = cut % (posts.len() + 1);
        let mut merged = PmiCounts::count(posts[..cut].iter().copied(), emoji, &lex, true);
        merged.merge(PmiCounts::count(posts[cut..].iter().copied(), emoji, &lex, true));
        prop_assert_eq!(&whole, &merged);

        let opts = PmiOptions { min_support: 1, top_k: None, include_hashtags: true };
        let table = association_from_counts(&whole, "😂", "all", &opts);
        for row in &table.rows {
            prop_assert!(row.joint_count >= 1 && row.joint_count <= row.word_count);
            prop_assert_eq!(row.pmi, pmi_from_counts(whole.n, whole.n_e, row.word_count, row.joint_count));
            prop_assert!(row.pmi <= (whole.n as f64 / whole.n_e as f64).ln() + 1e-12);
        }
    }
}
