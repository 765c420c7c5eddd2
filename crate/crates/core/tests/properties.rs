//! Property tests of the structural invariants.

use ade::codebook::{build_vp, compression_report, CompressionInput, StorageLayout};
use ade::data::{decode, encode, synth_polysemy, tokenize, SynthTaskSpec, Vocab};
use ade::distill::distill_loss;
use ade::evalbench::classification_metrics;
use ade::gpe::{grouped_pe, pos_indices, sinusoidal_pe};
use ade::numcore::{masked_softmax, scatter_add, Tensor};
use proptest::prelude::*;

fn finite(range: f64) -> impl Strategy<Value = f64> {
    -range..range
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn masked_softmax_is_a_distribution(
        pairs in prop::collection::vec((finite(30.0), any::<bool>()), 1..20),
        force in any::<prop::sample::Index>(),
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut mask: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let i = force.index(mask.len());
        mask[i] = true;
        let p = masked_softmax(&scores, &mask).unwrap();
        let total: f64 = p.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| v).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for (v, m) in p.iter().zip(&mask) {
            if !m {
                prop_assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn scatter_add_ignores_pair_order(
        rows in prop::collection::vec((prop::collection::vec(finite(10.0), 3), 0usize..5), 1..30),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let build = |rs: &[(Vec<f64>, usize)]| {
            let vals = Tensor::new(vec![rs.len(), 3], rs.iter().flat_map(|r| r.0.clone()).collect()).unwrap();
            let ids: Vec<usize> = rs.iter().map(|r| r.1).collect();
            scatter_add(&vals, &ids, 5).unwrap()
        };
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut ade::numcore::rng::seeded(seed));
        let a = build(&rows);
        let b = build(&shuffled);
        prop_assert!(a.max_abs_diff(&b) <= 1e-12 * (1.0 + a.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))));
    }

    #[test]
    fn vocabulary_projection_cardinality_bounds_and_monotone(
        n in 1usize..20,
        k in 1usize..12,
        vals in prop::collection::vec(0.0f64..1.0, 240),
        tau_lo in 0.0f64..1.0,
        bump in 0.0f64..0.5,
    ) {
        let t = Tensor::new(vec![n, k], vals[..n * k].to_vec()).unwrap();
        let lo = build_vp(&t, tau_lo).unwrap();
        let hi = build_vp(&t, tau_lo + bump).unwrap();
        for i in 0..n {
            prop_assert!((1..=k).contains(&lo.cardinality(i)));
            prop_assert!(hi.cardinality(i) <= lo.cardinality(i));
        }
    }

    #[test]
    fn compression_ratio_falls_as_cardinality_grows(
        n in 1u64..200_000,
        d in 1u64..1024,
        k in 1u64..1000,
        mean_k in 0.5f64..20.0,
        extra in 0.01f64..5.0,
    ) {
        let layout = StorageLayout::default();
        let a = compression_report(&CompressionInput::with_mean_cardinality(n, d, k, mean_k, layout));
        let b = compression_report(&CompressionInput::with_mean_cardinality(n, d, k, mean_k + extra, layout));
        let ta = (n as f64 * mean_k).round();
        let tb = (n as f64 * (mean_k + extra)).round();
        if tb > ta {
            prop_assert!(b.ratio < a.ratio);
        } else {
            prop_assert_eq!(b.ratio, a.ratio);
        }
    }

    #[test]
    fn grouped_pe_is_the_brute_force_expansion(subs in prop::collection::vec(1usize..=8, 1..=32)) {
        let table = sinusoidal_pe(32, 8).unwrap();
        let pe = grouped_pe(&table, &subs).unwrap();
        let mut t = 0;
        for (word, &k) in subs.iter().enumerate() {
            for _ in 0..k {
                prop_assert_eq!(pe.row(t), table.row(word));
                t += 1;
            }
        }
        prop_assert_eq!(t, pe.rows());
        let idx = pos_indices(&subs).unwrap();
        // rows identical inside a group, different across adjacent groups
        for w in idx.windows(2).enumerate() {
            let (t, pair) = w;
            if pair[0] == pair[1] {
                prop_assert_eq!(pe.row(t), pe.row(t + 1));
            } else {
                prop_assert_ne!(pe.row(t), pe.row(t + 1));
            }
        }
    }

    #[test]
    fn grouped_pe_concatenates(
        a in prop::collection::vec(1usize..=4, 1..=10),
        b in prop::collection::vec(1usize..=4, 1..=10),
    ) {
        let table = sinusoidal_pe(32, 6).unwrap();
        let joined: Vec<usize> = a.iter().chain(&b).copied().collect();
        let whole = grouped_pe(&table, &joined).unwrap();
        let head = grouped_pe(&table, &a).unwrap();
        let tail_idx = pos_indices(&b).unwrap();
        for t in 0..head.rows() {
            prop_assert_eq!(whole.row(t), head.row(t));
        }
        for (i, &p) in tail_idx.iter().enumerate() {
            prop_assert_eq!(whole.row(head.rows() + i), table.row(a.len() + p));
        }
    }

    #[test]
    fn distill_loss_bounded_and_scale_free(
        s in prop::collection::vec(finite(5.0), 12),
        t in prop::collection::vec(finite(5.0), 12),
        scales in prop::collection::vec(0.01f64..100.0, 8),
    ) {
        prop_assume!(s.chunks(3).all(|r| r.iter().any(|v| v.abs() > 1e-3)));
        prop_assume!(t.chunks(3).all(|r| r.iter().any(|v| v.abs() > 1e-3)));
        let st = Tensor::new(vec![4, 3], s.clone()).unwrap();
        let tt = Tensor::new(vec![4, 3], t.clone()).unwrap();
        let l = distill_loss(&st, &tt).unwrap();
        prop_assert!((0.0..=2.0).contains(&l));
        let rescale = |v: &[f64], sc: &[f64]| -> Tensor {
            Tensor::new(vec![4, 3], v.iter().enumerate().map(|(i, x)| x * sc[i / 3]).collect()).unwrap()
        };
        let l2 = distill_loss(&rescale(&s, &scales[..4]), &rescale(&t, &scales[4..])).unwrap();
        prop_assert!((l - l2).abs() <= 1e-12);
    }

    #[test]
    fn encode_then_decode_is_identity_in_vocab(picks in prop::collection::vec(0usize..6, 1..20)) {
        let words = ["alpha", "beta", "gamma", "delta", "eps", "zeta"];
        let tokens: Vec<String> =
            ["<pad>", "<unk>"].iter().chain(words.iter()).map(|s| s.to_string()).collect();
        let vocab = Vocab::from_tokens(tokens).unwrap();
        let text: Vec<&str> = picks.iter().map(|&i| words[i]).collect();
        let enc = encode(&text.join(" "), &vocab, 64);
        prop_assert_eq!(decode(&enc, &vocab), text.iter().map(|s| s.to_string()).collect::<Vec<_>>());
        prop_assert_eq!(tokenize(&text.join("  ").to_uppercase()), text.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    }

    #[test]
    fn macro_f1_ignores_class_relabelling(
        pairs in prop::collection::vec((0usize..5, 0usize..5), 1..100),
        perm in Just((0usize..5).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let preds: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let labels: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let a = classification_metrics(&preds, &labels, 5).unwrap();
        let pp: Vec<usize> = preds.iter().map(|&c| perm[c]).collect();
        let pl: Vec<usize> = labels.iter().map(|&c| perm[c]).collect();
        let b = classification_metrics(&pp, &pl, 5).unwrap();
        prop_assert!((a.macro_f1 - b.macro_f1).abs() <= 1e-12);
        prop_assert!((a.accuracy - b.accuracy).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthetic_splits_are_class_balanced(
        classes in 2usize..6,
        train in 10usize..200,
        test in 10usize..100,
        seed in any::<u64>(),
    ) {
        let spec = SynthTaskSpec { classes, train_size: train, test_size: test, seed, ..Default::default() };
        let task = synth_polysemy(&spec).unwrap();
        for corpus in [&task.train, &task.test] {
            let counts = corpus.class_counts();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }
}
