mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vcg_core::contrastive::{agreement, random_case, total_loss};
use vcg_core::filtering::{apply_filter, filtering_probability, remove_count, ConcentrationScore};
use vcg_core::graph::EmbeddingMatrix;
use vcg_core::metrics::{
    bleu_n, corpus_from_texts, dist_n, histogram, recall_at_ks, right_branching_fallback, unique_pct, yngve_sentence,
};

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probability_is_clamped_and_falls_with_threshold(freq in 1usize..500, s in -1.0f64..=1.0, t1 in 0.01f64..100.0, t2 in 0.01f64..100.0) {
        let score = ConcentrationScore { description: 0, s_value: s, freq };
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (p_lo, p_hi) = (filtering_probability(&score, lo), filtering_probability(&score, hi));
        prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
        prop_assert!(p_hi <= p_lo);
        prop_assert!(remove_count(p_lo, freq) <= freq);
    }

    #[test]
    fn filtering_only_removes_edges(seed in any::<u64>(), t in 0.5f64..60.0) {
        let raw = random_graph(&mut ChaCha8Rng::seed_from_u64(seed));
        let (g, emb) = raw.build();
        let (a, report) = apply_filter(&g, &emb, t).unwrap();
        let (b, _) = apply_filter(&g, &emb, t).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.num_images(), g.num_images());
        prop_assert!(graph_edge_set(&a).is_subset(&raw.edge_set()));
        prop_assert_eq!(report.edges_after + report.removed_edges.len(), g.num_edges());
        a.check_invariants().unwrap();
    }

    #[test]
    fn repeating_a_corpus_keeps_distinct_ngrams(seed in any::<u64>(), n in 1usize..4) {
        let texts = random_sentences(&mut ChaCha8Rng::seed_from_u64(seed), 20, 12);
        let once = corpus_from_texts(&texts);
        let twice = corpus_from_texts(&[texts.clone(), texts].concat());
        prop_assert_eq!(dist_n(&once, n), dist_n(&twice, n));
        prop_assert_eq!(unique_pct(&twice).unwrap(), 0.0);
    }

    #[test]
    fn bleu_of_references_is_one(seed in any::<u64>()) {
        let texts = random_sentences(&mut ChaCha8Rng::seed_from_u64(seed), 10, 20);
        let toks: Vec<Vec<String>> = texts.iter().map(|t| words(t)).filter(|w| w.len() >= 2).collect();
        prop_assume!(!toks.is_empty());
        let refs: Vec<Vec<Vec<String>>> = toks.iter().map(|t| vec![t.clone()]).collect();
        let hs: Vec<&[String]> = toks.iter().map(Vec::as_slice).collect();
        let rs: Vec<&[Vec<String>]> = refs.iter().map(Vec::as_slice).collect();
        prop_assert!((bleu_n(&hs, &rs, 2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recall_grows_with_k(rows in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 3), 2..12), shift in 0.01f32..0.5) {
        let rows: Vec<Vec<f32>> = rows.into_iter().map(|r| r.into_iter().map(|x| x + 1.5).collect()).collect();
        let n = rows.len();
        let ids: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
        let images = EmbeddingMatrix::from_rows(ids.clone(), &rows).unwrap();
        let texts: Vec<Vec<f32>> = rows.iter().map(|r| vec![r[1] + shift, r[0], r[2]]).collect();
        let texts = EmbeddingMatrix::from_rows(ids, &texts).unwrap();
        let truth: Vec<usize> = (0..n).collect();
        let ks: Vec<usize> = (1..=n).collect();
        let r = recall_at_ks(&texts, &images, &truth, &ks).unwrap();
        prop_assert!(r.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(r[n - 1], 100.0);
    }

    #[test]
    fn histogram_ratios_sum_to_one(values in prop::collection::vec(0.0f64..30.0, 1..60), width in 0.1f64..5.0) {
        let h = histogram(&values, width).unwrap();
        prop_assert!((h.iter().map(|b| b.1).sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(h.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn fallback_depth(n in 1usize..40) {
        let toks: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let y = yngve_sentence(&right_branching_fallback(&toks));
        prop_assert!((y - (n - 1) as f64 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn agreement_ignores_scale(v in prop::collection::vec(-1.0f64..1.0, 4), t in prop::collection::vec(-1.0f64..1.0, 4), c in 0.01f64..100.0) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-3) && t.iter().any(|x| x.abs() > 1e-3));
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        let (a, b) = (agreement(&v, &t).unwrap(), agreement(&scaled, &t).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a >= (-1.0f64).exp() && a <= 1.0f64.exp());
    }

    #[test]
    fn total_loss_is_linear_in_lambda(seed in 0u64..200, lambda in 0.0f64..5.0) {
        let (params, item, _) = random_case(seed);
        let l = total_loss(&item, &params, lambda).unwrap();
        prop_assert_eq!(l.l_total, l.l_org + lambda * l.l_crl);
        prop_assert!(l.l_org >= 0.0 && l.l_crl > 0.0);
    }
}
