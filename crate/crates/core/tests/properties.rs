mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use protoken::bpe::{train_bpe, truncate_bpe, BpeConfig};
use protoken::corpus::DomainAnnotation;
use protoken::domain_align::boundary_hits;
use protoken::laws::{ols, zipf_from_frequencies, FitSpace, ZipfOptions};
use protoken::metrics::{compare_vocabularies, contextual_exponence, corpus_length_stats, fertility, ExponenceOptions};
use protoken::report::train_ladder;
use protoken::segments::{decode_line, format_segmentation, parse_segment_line};
use protoken::tokenizer::{count_pretokens, Payload};
use protoken::wordpiece::{train_wordpiece, truncate_wordpiece, WordPieceConfig};
use protoken::{Mode, Segmentation, SequenceRecord, Tokenizer, TokenizerKind, Vocabulary};

fn protein_records() -> impl Strategy<Value = Vec<SequenceRecord>> {
    prop::collection::vec("[ACDEK]{1,40}", 1..8).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, s)| SequenceRecord::new(format!("s{i}"), s))
            .collect()
    })
}

fn text_records() -> impl Strategy<Value = Vec<SequenceRecord>> {
    prop::collection::vec("[abc]{1,6}( {1,2}[abc]{1,6}){0,5}", 1..6).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, s)| SequenceRecord::new(i.to_string(), s))
            .collect()
    })
}

fn distinct_chars(records: &[SequenceRecord]) -> usize {
    records
        .iter()
        .flat_map(|r| r.residues.chars())
        .filter(|c| *c != ' ')
        .collect::<BTreeSet<_>>()
        .len()
}

fn boundaries(seg: &Segmentation) -> BTreeSet<u32> {
    seg.offsets.iter().map(|o| o.1).collect()
}

fn plain_vocab(n: usize) -> Vocabulary {
    let mut tokens = vec!["<unk>".to_string()];
    tokens.extend((0..n).map(|i| format!("t{i}")));
    Vocabulary::new(
        Mode::Protein,
        tokens,
        vec!["<unk>".into()],
        Payload::Bpe { merges: vec![] },
    )
    .unwrap()
}

fn segmentation(id: &str, ids: &[u32], lens: &[u32]) -> Segmentation {
    let mut offsets = Vec::new();
    let mut at = 0;
    for &l in lens {
        offsets.push((at, at + l));
        at += l;
    }
    Segmentation {
        sequence_id: id.into(),
        token_ids: ids.to_vec(),
        offsets,
    }
}

fn brute_exponence(streams: &[Vec<u32>], radius: usize) -> BTreeMap<u32, usize> {
    let mut seen: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for s in streams {
        for i in 0..s.len() {
            for j in 0..s.len() {
                if i != j && i.abs_diff(j) <= radius {
                    seen.entry(s[i]).or_default().insert(s[j]);
                }
            }
        }
    }
    seen.into_iter().map(|(k, v)| (k, v.len())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn protein_segmentations_are_lossless(records in protein_records(), extra in 0usize..20) {
        let size = distinct_chars(&records) + extra;
        for kind in TokenizerKind::ALL {
            let vocab = train_ladder(kind, &records, Mode::Protein, &[size], &Default::default()).pop().unwrap().unwrap();
            let tok = Tokenizer::new(vocab);
            for r in &records {
                let seg = tok.encode(r);
                prop_assert_eq!(seg.validate(tok.vocab(), &r.residues), Ok(()));
                prop_assert_eq!(seg.reassemble(&r.residues), r.residues.clone());
                prop_assert!(!seg.token_ids.contains(&tok.vocab().unk_id()));
                let line = parse_segment_line(&format_segmentation(tok.vocab(), &seg)).unwrap();
                prop_assert_eq!(decode_line(&line, tok.vocab().continuation_marker()).unwrap(), r.residues.clone());
            }
        }
    }

    #[test]
    fn text_segmentations_are_lossless(records in text_records(), extra in 0usize..20) {
        let size = 2 * distinct_chars(&records) + 1 + extra;
        for kind in TokenizerKind::ALL {
            let vocab = train_ladder(kind, &records, Mode::Text, &[size], &Default::default()).pop().unwrap().unwrap();
            let tok = Tokenizer::new(vocab);
            for r in &records {
                let seg = tok.encode(r);
                prop_assert_eq!(seg.validate(tok.vocab(), &r.residues), Ok(()));
                let line = parse_segment_line(&format_segmentation(tok.vocab(), &seg)).unwrap();
                prop_assert_eq!(decode_line(&line, tok.vocab().continuation_marker()).unwrap(), r.residues.clone());
            }
        }
    }

    #[test]
    fn truncation_equals_retraining(records in protein_records(), a in 0usize..15, b in 0usize..15) {
        let base = distinct_chars(&records);
        let (small, large) = (base + a.min(b), base + a.max(b));
        let pre = count_pretokens(&records, Mode::Protein);
        let full = train_bpe(&pre, &BpeConfig::new(large, Mode::Protein)).unwrap();
        prop_assert_eq!(truncate_bpe(&full, small).unwrap(), train_bpe(&pre, &BpeConfig::new(small, Mode::Protein)).unwrap());
        let full = train_wordpiece(&pre, &WordPieceConfig::new(large, Mode::Protein)).unwrap();
        prop_assert_eq!(
            truncate_wordpiece(&full, small).unwrap(),
            train_wordpiece(&pre, &WordPieceConfig::new(small, Mode::Protein)).unwrap()
        );
    }

    #[test]
    fn larger_bpe_vocabularies_coarsen(records in protein_records(), probe in "[ACDEK]{1,30}", a in 0usize..15, b in 0usize..15) {
        let base = distinct_chars(&records);
        let pre = count_pretokens(&records, Mode::Protein);
        let fine = Tokenizer::new(train_bpe(&pre, &BpeConfig::new(base + a.min(b), Mode::Protein)).unwrap());
        let coarse = Tokenizer::new(train_bpe(&pre, &BpeConfig::new(base + a.max(b), Mode::Protein)).unwrap());
        let r = SequenceRecord::new("p", probe);
        prop_assert!(boundaries(&coarse.encode(&r)).is_subset(&boundaries(&fine.encode(&r))));
    }

    #[test]
    fn exponence_matches_window_scan(streams in prop::collection::vec(prop::collection::vec(0u32..6, 0..200), 1..4), radius in 1usize..4) {
        let vocab = plain_vocab(6);
        let segs: Vec<Segmentation> = streams
            .iter()
            .enumerate()
            .map(|(i, s)| segmentation(&i.to_string(), &s.iter().map(|t| t + 1).collect::<Vec<_>>(), &vec![1; s.len()]))
            .collect();
        let options = ExponenceOptions { window_radius: radius, top_k: 100, include_self: true };
        let rows = contextual_exponence(&vocab, &segs, &options).unwrap();
        let shifted: Vec<Vec<u32>> = streams.iter().map(|s| s.iter().map(|t| t + 1).collect()).collect();
        let expected = brute_exponence(&shifted, radius);
        prop_assert_eq!(rows.len(), expected.len());
        for row in &rows {
            let id = vocab.id(&row.token).unwrap();
            prop_assert_eq!(row.distinct_neighbors as usize, expected[&id]);
        }
        let mut reversed = segs.clone();
        reversed.reverse();
        prop_assert_eq!(contextual_exponence(&vocab, &reversed, &options).unwrap(), rows);
    }

    #[test]
    fn coarser_segmentations_never_gain_domain_hits(lens in prop::collection::vec(1u32..5, 2..40), keep in prop::collection::vec(any::<bool>(), 40), doms in prop::collection::vec((1usize..100, 0usize..30), 1..20)) {
        let total: u32 = lens.iter().sum();
        let fine = segmentation("s", &vec![1; lens.len()], &lens);
        let mut coarse_lens = Vec::new();
        for (i, &l) in lens.iter().enumerate() {
            if i > 0 && !keep[i] {
                *coarse_lens.last_mut().unwrap() += l;
            } else {
                coarse_lens.push(l);
            }
        }
        let coarse = segmentation("s", &vec![1; coarse_lens.len()], &coarse_lens);
        let annotations: Vec<DomainAnnotation> = doms
            .iter()
            .map(|&(s, w)| {
                let start = 1 + (s - 1) % total as usize;
                DomainAnnotation { sequence_id: "s".into(), name: "d".into(), start, end: (start + w).min(total as usize) }
            })
            .collect();
        let f = boundary_hits(&[fine], &annotations);
        let c = boundary_hits(&[coarse], &annotations);
        for (x, y) in c.rows.iter().zip(&f.rows) {
            prop_assert!(!x.hit || y.hit);
        }
        prop_assert!(c.hit_percentage() <= f.hit_percentage());
    }

    #[test]
    fn fertility_identity(lens in prop::collection::vec(prop::collection::vec(1u32..9, 1..30), 1..10)) {
        // Token id n is a run of n residues.
        let mut tokens = vec!["<unk>".to_string()];
        tokens.extend((1..9).map(|n| "A".repeat(n)));
        let vocab = Vocabulary::new(Mode::Protein, tokens, vec!["<unk>".into()], Payload::Bpe { merges: vec![] }).unwrap();
        let segs: Vec<Segmentation> = lens.iter().enumerate().map(|(i, l)| segmentation(&i.to_string(), l, l)).collect();
        let f = fertility(&vocab, &segs).unwrap();
        let mean = corpus_length_stats(&vocab, &segs).unwrap().mean;
        prop_assert!((f.tokens_per_sequence * mean - f.mean_sequence_length()).abs() <= 1e-9);
    }

    #[test]
    fn ols_residuals_are_orthogonal(points in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..50)) {
        let x: Vec<f64> = points.iter().map(|p| p.0).collect();
        let y: Vec<f64> = points.iter().map(|p| p.1).collect();
        prop_assume!(x.iter().any(|&v| (v - x[0]).abs() > 1e-3));
        let fit = ols(&x, &y, FitSpace::Linear).unwrap();
        let resid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - fit.intercept - fit.slope * a).collect();
        let scale: f64 = y.iter().map(|v| v.abs()).sum::<f64>().max(1.0) * 100.0;
        prop_assert!(resid.iter().sum::<f64>().abs() <= 1e-9 * scale);
        prop_assert!(resid.iter().zip(&x).map(|(r, a)| r * a).sum::<f64>().abs() <= 1e-9 * scale * 100.0);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&fit.r_squared));
    }

    #[test]
    fn zipf_slope_is_scale_invariant(mut freqs in prop::collection::vec(1u32..10_000, 3..200), c in 1u32..50) {
        freqs.sort_unstable_by(|a, b| b.cmp(a));
        prop_assume!(freqs.first() != freqs.last());
        let f: Vec<f64> = freqs.iter().map(|&v| v as f64).collect();
        let g: Vec<f64> = f.iter().map(|v| v * c as f64).collect();
        let a = zipf_from_frequencies(&f, &ZipfOptions::default()).unwrap();
        let b = zipf_from_frequencies(&g, &ZipfOptions::default()).unwrap();
        prop_assert!((a.slope - b.slope).abs() <= 1e-9);
        prop_assert!((b.intercept - a.intercept - (c as f64).ln()).abs() <= 1e-9);
    }

    #[test]
    fn overlap_is_symmetric(a in prop::collection::btree_set("[AB]{1,3}", 1..8), b in prop::collection::btree_set("[AB]{1,3}", 1..8)) {
        prop_assume!(a.len() == b.len());
        let v = |s: &BTreeSet<String>| common::wordpiece_vocab(Mode::Protein, &s.iter().cloned().collect::<Vec<_>>(), None);
        let (x, y) = (v(&a), v(&b));
        let xy = compare_vocabularies(&x, &y).unwrap();
        prop_assert_eq!(xy, compare_vocabularies(&y, &x).unwrap());
        prop_assert_eq!(xy == 1.0, a == b);
    }
}
