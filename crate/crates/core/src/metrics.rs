//! Exact evaluation metrics: rank/linear correlations with midrank ties,
//! AUROC via the Mann-Whitney statistic, and word error rate.

use crate::error::{NapError, Result};

/// Sentence-level word error rate outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WerOutcome {
    /// Substitutions + insertions + deletions.
    pub errors: u64,
    pub ref_len: u64,
    /// `errors / ref_len`; may exceed 1 with many insertions.
    pub wer: f64,
}

/// Midranks of `v`: ties receive the average of the ranks they span.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for k in i..j {
            ranks[idx[k]] = avg;
        }
        i = j;
    }
    ranks
}

/// Definitional Pearson correlation.
pub fn pearson_exact(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(NapError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(NapError::BatchTooSmall);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(NapError::NonFiniteInput);
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..n {
        let da = a[i] - ma;
        let db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(NapError::ZeroVariance);
    }
    Ok(sab / (saa.sqrt() * sbb.sqrt()))
}

/// Spearman rank correlation: Pearson of midrank vectors.
pub fn spearman_exact(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(NapError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(NapError::BatchTooSmall);
    }
    let ra = midranks(a);
    let rb = midranks(b);
    pearson_exact(&ra, &rb).map_err(|e| match e {
        NapError::ZeroVariance => NapError::ZeroRankVariance,
        other => other,
    })
}

/// Mann-Whitney AUROC: probability that a random positive outranks a random
/// negative, half credit for ties. `O((n_pos + n_neg) log n)` via midranks.
pub fn auroc(negative_scores: &[f64], positive_scores: &[f64]) -> Result<f64> {
    if negative_scores.is_empty() {
        return Err(NapError::EmptyInput("negative scores"));
    }
    if positive_scores.is_empty() {
        return Err(NapError::EmptyInput("positive scores"));
    }
    let n_neg = negative_scores.len();
    let n_pos = positive_scores.len();
    let mut all: Vec<f64> = Vec::with_capacity(n_neg + n_pos);
    all.extend_from_slice(negative_scores);
    all.extend_from_slice(positive_scores);
    let ranks = midranks(&all);
    let rank_sum_pos: f64 = ranks[n_neg..].iter().sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Word-level minimum edit distance with unit costs.
pub fn wer<T: PartialEq>(ref_tokens: &[T], hyp_tokens: &[T]) -> Result<WerOutcome> {
    if ref_tokens.is_empty() {
        return Err(NapError::EmptyReference);
    }
    let m = hyp_tokens.len();
    let mut prev: Vec<u64> = (0..=m as u64).collect();
    let mut cur = vec![0u64; m + 1];
    for (i, r) in ref_tokens.iter().enumerate() {
        cur[0] = i as u64 + 1;
        for (j, h) in hyp_tokens.iter().enumerate() {
            let sub = prev[j] + u64::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let errors = prev[m];
    let ref_len = ref_tokens.len() as u64;
    Ok(WerOutcome {
        errors,
        ref_len,
        wer: errors as f64 / ref_len as f64,
    })
}

/// Length-weighted corpus WER: pooled errors over pooled reference lengths.
pub fn corpus_wer(outcomes: &[WerOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(NapError::EmptyInput("wer outcomes"));
    }
    let errors: u64 = outcomes.iter().map(|o| o.errors).sum();
    let words: u64 = outcomes.iter().map(|o| o.ref_len).sum();
    Ok(errors as f64 / words as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spearman_examples() {
        assert!((spearman_exact(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman_exact(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // Midranks [1.5, 1.5, 3] vs [1, 2, 3]: hand Pearson.
        let got = spearman_exact(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        let want = pearson_exact(&[1.5, 1.5, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(got, want);
        assert!(matches!(
            spearman_exact(&[1.0, 1.0], &[1.0, 2.0]),
            Err(NapError::ZeroRankVariance)
        ));
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson_exact(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_exact(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(
            pearson_exact(&[1.0, 1.0], &[1.0, 2.0]),
            Err(NapError::ZeroVariance)
        ));
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[5.0], &[5.0]).unwrap(), 0.5);
        assert!(auroc(&[], &[1.0]).is_err());
    }

    #[test]
    fn auroc_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            // Coarse grid forces heavy ties.
            let neg: Vec<f64> = (0..200).map(|_| rng.gen_range(0..10) as f64).collect();
            let pos: Vec<f64> = (0..200).map(|_| rng.gen_range(0..10) as f64).collect();
            let mut num = 0.0;
            for &p in &pos {
                for &n in &neg {
                    if p > n {
                        num += 1.0;
                    } else if p == n {
                        num += 0.5;
                    }
                }
            }
            let want = num / (neg.len() * pos.len()) as f64;
            assert_eq!(auroc(&neg, &pos).unwrap(), want);
        }
    }

    #[test]
    fn wer_examples() {
        let o = wer(&["a", "b", "c"], &["a", "b", "c"]).unwrap();
        assert_eq!((o.errors, o.wer), (0, 0.0));
        let o = wer::<&str>(&["a", "b", "c"], &[]).unwrap();
        assert_eq!((o.errors, o.wer), (3, 1.0));
        let o = wer(&["a", "b", "c"], &["a", "x", "c", "d"]).unwrap();
        assert_eq!(o.errors, 2);
        assert!((o.wer - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(wer::<&str>(&[], &["a"]), Err(NapError::EmptyReference)));
    }

    #[test]
    fn corpus_wer_examples() {
        let mk = |errors, ref_len| WerOutcome {
            errors,
            ref_len,
            wer: errors as f64 / ref_len as f64,
        };
        assert_eq!(corpus_wer(&[mk(3, 10)]).unwrap(), 0.3);
        assert_eq!(corpus_wer(&[mk(0, 10), mk(5, 10)]).unwrap(), 0.25);
        // Pooled differs from the mean of sentence WERs.
        let pooled = corpus_wer(&[mk(0, 1), mk(2, 10)]).unwrap();
        assert!((pooled - 2.0 / 11.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn auroc_complement(
            neg in proptest::collection::vec(0i32..8, 1..40),
            pos in proptest::collection::vec(0i32..8, 1..40),
        ) {
            let neg: Vec<f64> = neg.into_iter().map(f64::from).collect();
            let pos: Vec<f64> = pos.into_iter().map(f64::from).collect();
            let a = auroc(&neg, &pos).unwrap();
            let b = auroc(&pos, &neg).unwrap();
            prop_assert_eq!(a + b, 1.0);
        }

        #[test]
        fn auroc_monotone_transform_invariant(
            neg in proptest::collection::vec(-5.0f64..5.0, 1..30),
            pos in proptest::collection::vec(-5.0f64..5.0, 1..30),
        ) {
            let a = auroc(&neg, &pos).unwrap();
            let tn: Vec<f64> = neg.iter().map(|v| v.exp()).collect();
            let tp: Vec<f64> = pos.iter().map(|v| v.exp()).collect();
            prop_assert_eq!(a, auroc(&tn, &tp).unwrap());
        }

        #[test]
        fn wer_distance_symmetry(
            a in proptest::collection::vec(0u8..3, 1..8),
            b in proptest::collection::vec(0u8..3, 1..8),
        ) {
            prop_assert_eq!(wer(&a, &b).unwrap().errors, wer(&b, &a).unwrap().errors);
        }

        #[test]
        fn wer_triangle_inequality(
            a in proptest::collection::vec(0u8..3, 1..7),
            b in proptest::collection::vec(0u8..3, 1..7),
            c in proptest::collection::vec(0u8..3, 1..7),
        ) {
            let ab = wer(&a, &b).unwrap().errors;
            let bc = wer(&b, &c).unwrap().errors;
            let ac = wer(&a, &c).unwrap().errors;
            prop_assert!(ac <= ab + bc);
        }

        #[test]
        fn spearman_monotone_transform_invariant(
            pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..20),
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let Ok(s) = spearman_exact(&a, &b) {
                let ta: Vec<f64> = a.iter().map(|v| v.exp() + v).collect();
                prop_assert!((s - spearman_exact(&ta, &b).unwrap()).abs() < 1e-12);
            }
        }
    }
}
