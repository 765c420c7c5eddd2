//! Independent reference implementations checked against the library.

mod common;

use std::collections::BTreeMap;

use ade::codebook::{build_vp, compose, lookup, AnchorMatrix, TokenBatch};
use ade::data::{synth_polysemy, SynthTaskSpec};
use ade::distill::{dense_reconstruction, sparse_reconstruction};
use ade::evalbench::classification_metrics;
use ade::numcore::rng::{seeded, uniform_vec};
use ade::numcore::Tensor;
use ade::pipeline::{AdeModel, Mode, LAYER_NORM_EPS};
use common::{random_anchors, random_batch, random_codebook, tiny_model};
use rand::Rng;

// ------------------------------------------------------------ forward pass

fn affine_row(x: &[f64], w: &Tensor, b: &[f64]) -> Vec<f64> {
    let (din, dout) = (w.rows(), w.cols());
    (0..dout).map(|o| b[o] + (0..din).map(|i| x[i] * w.get2(i, o)).sum::<f64>()).collect()
}

fn softmax_plain(s: &[f64]) -> Vec<f64> {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Lookup, weighting, grouped positions, attention with residual, per-word
/// sum, layer norm, attention pooling and the affine head, written out
/// directly for one sequence at a time.
fn reference_logits(m: &AdeModel, tokens: &TokenBatch, use_sat: bool) -> Vec<Vec<f64>> {
    let d = m.config.dim;
    let h = m.sat.heads;
    let dk = d / h;
    let mut all = Vec::new();
    for b in 0..tokens.batch {
        let ids = tokens.row_ids(b);
        let mask = tokens.row_mask(b);
        // (word position, weighted anchor)
        let mut items: Vec<(usize, Vec<f64>)> = Vec::new();
        for (pos, (&w, &valid)) in ids.iter().zip(mask).enumerate() {
            if !valid {
                continue;
            }
            for (&j, &beta) in m.codebook.indices(w).iter().zip(m.codebook.weights(w)) {
                items.push((pos, m.anchors.row(j).iter().map(|a| beta * a).collect()));
            }
        }
        let n = items.len();
        let mut ys: Vec<Vec<f64>> = items.iter().map(|(_, x)| x.clone()).collect();
        if use_sat {
            let inp: Vec<Vec<f64>> =
                items.iter().map(|(p, x)| x.iter().zip(m.pe.row(*p)).map(|(a, b)| a + b).collect()).collect();
            let q: Vec<Vec<f64>> = inp.iter().map(|x| affine_row(x, &m.sat.wq, &m.sat.bq)).collect();
            let k: Vec<Vec<f64>> = inp.iter().map(|x| affine_row(x, &m.sat.wk, &m.sat.bk)).collect();
            let v: Vec<Vec<f64>> = inp.iter().map(|x| affine_row(x, &m.sat.wv, &m.sat.bv)).collect();
            for i in 0..n {
                let mut concat = vec![0.0; d];
                for head in 0..h {
                    let r = head * dk..(head + 1) * dk;
                    let scores: Vec<f64> = (0..n)
                        .map(|j| q[i][r.clone()].iter().zip(&k[j][r.clone()]).map(|(a, b)| a * b).sum::<f64>() / (dk as f64).sqrt())
                        .collect();
                    let p = softmax_plain(&scores);
                    for j in 0..n {
                        for c in r.clone() {
                            concat[c] += p[j] * v[j][c];
                        }
                    }
                }
                let out = affine_row(&concat, &m.sat.wo, &m.sat.bo);
                ys[i] = items[i].1.iter().zip(&out).map(|(a, b)| a + b).collect();
            }
        }
        let l = ids.len();
        let mut words = vec![vec![0.0; d]; l];
        for ((pos, _), y) in items.iter().zip(&ys) {
            for c in 0..d {
                words[*pos][c] += y[c];
            }
        }
        let valid_pos: Vec<usize> = (0..l).filter(|&p| mask[p]).collect();
        let normed: Vec<Vec<f64>> = valid_pos
            .iter()
            .map(|&p| {
                let e = &words[p];
                let mean = e.iter().sum::<f64>() / d as f64;
                let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
                let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                (0..d).map(|c| (e[c] - mean) * inv * m.ln.gain[c] + m.ln.bias[c]).collect()
            })
            .collect();
        let scores: Vec<f64> = normed
            .iter()
            .map(|x| x.iter().zip(&m.pooler.score_w).map(|(a, b)| a * b).sum::<f64>() + m.pooler.score_b)
            .collect();
        let p = softmax_plain(&scores);
        let mut pooled = vec![0.0; d];
        for (x, w) in normed.iter().zip(&p) {
            for c in 0..d {
                pooled[c] += w * x[c];
            }
        }
        let logits = (0..m.config.classes)
            .map(|c| m.head.b[c] + m.head.w.row(c).iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        all.push(logits);
    }
    all
}

#[test]
fn forward_matches_reference_over_five_seeds() {
    for seed in 0..5 {
        let m = tiny_model(seed, 3);
        let mut rng = seeded(seed + 77);
        let tokens = random_batch(&mut rng, 10, 3, 4);
        for use_sat in [true, false] {
            let got = if use_sat { m.forward(&tokens, Mode::Eval) } else { m.forward_no_sat(&tokens, Mode::Eval) }.unwrap();
            let want = reference_logits(&m, &tokens, use_sat);
            for (b, row) in want.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    let diff = (got.get2(b, c) - v).abs();
                    assert!(diff <= 1e-10, "seed {seed} sat {use_sat} [{b},{c}]: {} vs {v}", got.get2(b, c));
                }
            }
        }
    }
}

// ------------------------------------------------------------ codebook

/// Σ_j T[i,j]·A[j] over the thresholded support, with the single-largest
/// fallback when nothing clears the threshold.
fn reference_sparse_row(t: &[f64], a: &AnchorMatrix, tau: f64) -> Vec<f64> {
    let mut keep: Vec<usize> = (0..t.len()).filter(|&j| t[j] >= tau).collect();
    if keep.is_empty() {
        let best = (0..t.len()).fold(0, |b, j| if t[j] > t[b] { j } else { b });
        keep.push(best);
    }
    let mut out = vec![0.0; a.dim()];
    for j in keep {
        for c in 0..a.dim() {
            out[c] += t[j] * a.row(j)[c];
        }
    }
    out
}

#[test]
fn sparse_reconstruction_matches_thresholded_dense_sum() {
    for seed in 0..20 {
        let mut rng = seeded(seed);
        let (n, k, d) = (rng.gen_range(1..30), rng.gen_range(1..12), rng.gen_range(1..9));
        let t = Tensor::new(vec![n, k], uniform_vec(&mut rng, n * k, 0.0, 1.0)).unwrap();
        let a = random_anchors(&mut rng, k, d);
        let tau = rng.gen_range(0.0..1.0);
        let cb = build_vp(&t, tau).unwrap();
        let got = sparse_reconstruction(&cb, &a).unwrap();
        for i in 0..n {
            let want = reference_sparse_row(t.row(i), &a, tau);
            for c in 0..d {
                assert!((got.get2(i, c) - want[c]).abs() <= 1e-12);
            }
        }
        // τ = 0 keeps everything: equals the dense product
        let full = sparse_reconstruction(&build_vp(&t, 0.0).unwrap(), &a).unwrap();
        assert!(full.max_abs_diff(&dense_reconstruction(&t, &a).unwrap()) <= 1e-12);
    }
}

#[test]
fn lookup_compose_matches_per_word_dense_sum() {
    for seed in 0..10 {
        let mut rng = seeded(seed);
        let cb = random_codebook(&mut rng, 20, 6, 4);
        let a = random_anchors(&mut rng, 6, 4);
        let tokens = random_batch(&mut rng, 20, 3, 5);
        let out = compose(&lookup(&cb, &a, &tokens).unwrap()).unwrap();
        for b in 0..3 {
            for l in 0..5 {
                let w = tokens.row_ids(b)[l];
                for c in 0..4 {
                    let want = if tokens.row_mask(b)[l] {
                        cb.indices(w).iter().zip(cb.weights(w)).map(|(&j, &beta)| beta * a.row(j)[c]).sum()
                    } else {
                        0.0
                    };
                    let got = out.data()[(b * 5 + l) * 4 + c];
                    assert!((got - want).abs() <= 1e-12);
                }
            }
        }
    }
}

// ------------------------------------------------------------ Bayes rates

/// Exhaustive enumeration of the generator's latent choices on a tiny task.
/// Returns (context-aware, context-free) Bayes accuracy.
fn enumerate_bayes(spec: &SynthTaskSpec) -> (f64, f64) {
    let c = spec.classes;
    let eta = spec.noise;
    // keys: aware sees which cue is adjacent; free sees only the token multiset
    let mut aware: BTreeMap<(usize, usize, usize, usize, usize), Vec<f64>> = BTreeMap::new();
    let mut free: BTreeMap<(usize, Vec<(usize, usize)>), Vec<f64>> = BTreeMap::new();
    for y in 0..c {
        for s in 0..c {
            let p_s = (1.0 - eta) * if s == y { 1.0 } else { 0.0 } + eta / c as f64;
            for other in (0..c).filter(|&o| o != s) {
                let p_o = 1.0 / (c - 1) as f64;
                for trig in 0..spec.triggers {
                    for j in 0..spec.cues_per_sense {
                        for j2 in 0..spec.cues_per_sense {
                            let p = p_s
                                * p_o
                                * (1.0 / c as f64)
                                * (1.0 / spec.triggers as f64)
                                * (1.0 / spec.cues_per_sense.pow(2) as f64);
                            aware.entry((trig, s, j, other, j2)).or_insert_with(|| vec![0.0; c])[y] += p;
                            let mut bag = vec![(s, j), (other, j2)];
                            bag.sort_unstable();
                            free.entry((trig, bag)).or_insert_with(|| vec![0.0; c])[y] += p;
                        }
                    }
                }
            }
        }
    }
    let best = |m: Vec<Vec<f64>>| m.into_iter().map(|v| v.into_iter().fold(0.0, f64::max)).sum::<f64>();
    (best(aware.into_values().collect()), best(free.into_values().collect()))
}

#[test]
fn bayes_rates_match_enumeration() {
    for (classes, noise) in [(2, 0.0), (3, 0.2), (4, 0.1), (5, 0.35)] {
        let spec = SynthTaskSpec {
            classes,
            noise,
            triggers: 2,
            cues_per_sense: 2,
            vocab_size: 2 + 2 * classes + 10,
            min_len: 6,
            max_len: 8,
            train_size: 20,
            test_size: 10,
            seed: 3,
        };
        let task = synth_polysemy(&spec).unwrap();
        let (aware, free) = enumerate_bayes(&spec);
        assert!((task.bayes.context_aware - aware).abs() <= 1e-12, "{classes} {noise}: {} vs {aware}", task.bayes.context_aware);
        assert!((task.bayes.context_free - free).abs() <= 1e-12, "{classes} {noise}: {} vs {free}", task.bayes.context_free);
    }
}

// ------------------------------------------------------------ metrics

#[test]
fn metrics_match_brute_force_confusion() {
    for seed in 0..30 {
        let mut rng = seeded(seed);
        let classes = rng.gen_range(2..7);
        let n = rng.gen_range(1..200);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let r = classification_metrics(&preds, &labels, classes).unwrap();
        let mut f1_sum = 0.0;
        let mut p_sum = 0.0;
        let mut r_sum = 0.0;
        for c in 0..classes {
            for c2 in 0..classes {
                let count = (0..n).filter(|&i| labels[i] == c && preds[i] == c2).count();
                assert_eq!(r.confusion[c][c2], count);
            }
            let tp = (0..n).filter(|&i| labels[i] == c && preds[i] == c).count() as f64;
            let fp = (0..n).filter(|&i| labels[i] != c && preds[i] == c).count() as f64;
            let fn_ = (0..n).filter(|&i| labels[i] == c && preds[i] != c).count() as f64;
            let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rec = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
            assert!((r.per_class[c].precision - prec).abs() <= 1e-12);
            assert!((r.per_class[c].recall - rec).abs() <= 1e-12);
            assert!((r.per_class[c].f1 - f1).abs() <= 1e-12);
            f1_sum += f1;
            p_sum += prec;
            r_sum += rec;
        }
        let acc = (0..n).filter(|&i| labels[i] == preds[i]).count() as f64 / n as f64;
        assert!((r.accuracy - acc).abs() <= 1e-12);
        assert!((r.macro_f1 - f1_sum / classes as f64).abs() <= 1e-12);
        assert!((r.macro_precision - p_sum / classes as f64).abs() <= 1e-12);
        assert!((r.macro_recall - r_sum / classes as f64).abs() <= 1e-12);
    }
}
