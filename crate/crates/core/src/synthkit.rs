//! Synthetic autoregressive teacher ensembles with exactly computable token
//! posteriors: a desk-scale stand-in for large encoder-decoder models that
//! makes every proxy target verifiable by construction.
//!
//! The teacher is a bigram channel: the next-token logits depend only on a
//! source unigram summary index and the previous token, so teacher-forced
//! posteriors are exact table lookups. The small/large model pair shares
//! weights and differs by decoding temperature; ensemble members perturb the
//! temperature-scaled logits, so flatter (hotter or intrinsically less sharp)
//! rows show more member disagreement.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{NapError, Result};
use crate::metrics::wer;
use crate::naphead::FeatureSequence;
use crate::record::{ScoreRecord, Split, Times};
use crate::uncertainty::{
    aleatoric_score, ensemble_mutual_information, sequence_confidence, sequence_entropy,
    EnsemblePosterior, TokenPosterior,
};

/// Decode start token.
const START_TOKEN: usize = 0;
/// Per-decoded-token time constants; decode cost dominates, proxy cost is
/// small but nonzero.
pub const TIME_SMALL: f64 = 1.0;
pub const TIME_LARGE: f64 = 5.0;
pub const TIME_PROXY: f64 = 0.02;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn derive_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x243f6a8885a308d3u64;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

/// A synthetic bigram-channel teacher: `logits[s][prev][next]` where `s` is
/// the source unigram summary index. Rows get progressively flatter with
/// increasing `s`, so the summary index controls intrinsic uncertainty.
#[derive(Debug, Clone)]
pub struct TeacherSpec {
    pub vocab_size: usize,
    pub logits: Vec<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl TeacherSpec {
    pub fn generate(vocab_size: usize, seed: u64) -> Result<Self> {
        if vocab_size < 2 {
            return Err(NapError::InvalidConfig("vocab_size must be >= 2".into()));
        }
        let v = vocab_size;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0x7ea]));
        // Rows get flatter as the summary index grows: higher s means more
        // intrinsic next-token uncertainty.
        let logits = (0..v)
            .map(|s| {
                let sharp = 4.0 - 3.6 * s as f64 / (v - 1) as f64;
                (0..v)
                    .map(|_| {
                        (0..v)
                            .map(|_| {
                                let z: f64 = rng.sample(StandardNormal);
                                z * sharp
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { vocab_size, logits, seed })
    }
}

/// Specification for one synthetic corpus (one split of one domain).
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub n_examples: usize,
    pub length_range: (usize, usize),
    /// Distribution over source tokens; must sum to 1 within 1e-6.
    pub source_unigram: Vec<f64>,
    pub domain_tag: String,
    pub split: Split,
    pub temperature_small: f64,
    pub temperature_large: f64,
    pub ensemble_size: usize,
    /// Logit perturbation scale for ensemble members.
    pub member_perturbation: f64,
    pub seed: u64,
    pub encoder_depth: usize,
    pub encoder_width: usize,
    /// Shared across corpora so features are comparable.
    pub encoder_seed: u64,
}

impl CorpusSpec {
    fn validate(&self, teacher: &TeacherSpec) -> Result<()> {
        if self.n_examples == 0 {
            return Err(NapError::EmptyCorpusSpec);
        }
        if self.source_unigram.len() != teacher.vocab_size {
            return Err(NapError::InvalidDistribution(format!(
                "unigram length {} vs vocab {}",
                self.source_unigram.len(),
                teacher.vocab_size
            )));
        }
        let sum: f64 = self.source_unigram.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || self.source_unigram.iter().any(|&p| !(p >= 0.0)) {
            return Err(NapError::InvalidDistribution(format!("unigram sums to {sum}")));
        }
        if self.length_range.0 < 2 || self.length_range.1 < self.length_range.0 {
            return Err(NapError::InvalidConfig("length range needs 2 <= min <= max".into()));
        }
        if self.ensemble_size < 2 {
            return Err(NapError::InvalidConfig("ensemble_size must be >= 2".into()));
        }
        if !(self.temperature_small > 0.0) || !(self.temperature_large > 0.0) {
            return Err(NapError::InvalidConfig("temperatures must be > 0".into()));
        }
        if self.encoder_depth == 0 || self.encoder_width == 0 {
            return Err(NapError::InvalidConfig("encoder depth and width must be >= 1".into()));
        }
        Ok(())
    }
}

/// A record together with the posteriors it was derived from, for oracles.
#[derive(Debug, Clone)]
pub struct GeneratedRecord {
    pub record: ScoreRecord,
    pub base: TokenPosterior,
    pub ensemble: EnsemblePosterior,
    pub source: Vec<usize>,
    pub reference: Vec<usize>,
    pub hyp_small: Vec<usize>,
    pub hyp_large: Vec<usize>,
}

/// Normalized geometric distribution over `v` tokens, optionally reversed.
pub fn geometric_unigram(v: usize, ratio: f64, reversed: bool) -> Vec<f64> {
    let mut p: Vec<f64> = (0..v).map(|i| ratio.powi(i as i32)).collect();
    if reversed {
        p.reverse();
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Source unigram summary: the rounded mean token value. A smooth statistic
/// of the unigram mixture, so pooled encoder features carry it and unigram
/// shifts move it monotonically.
fn summary_index(source: &[usize], vocab: usize) -> usize {
    let mean = source.iter().sum::<usize>() as f64 / source.len() as f64;
    (mean.round() as usize).min(vocab - 1)
}

/// Deterministic frozen encoder: hashed token+position embeddings followed by
/// `depth` fixed seeded layers of affine -> tanh -> residual. Intermediate
/// depths nest: the depth-k output is the prefix of the depth-(k+1)
/// computation. Never trained.
pub fn frozen_encoder(tokens: &[usize], depth: usize, width: usize, seed: u64) -> FeatureSequence {
    let d = width;
    // Additive token + position embeddings: average pooling then recovers
    // the source unigram mixture (and length, via the position component)
    // up to a fixed random linear map.
    let mut rows: Vec<Vec<f64>> = tokens
        .iter()
        .enumerate()
        .map(|(pos, &tok)| {
            let mut tok_rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 1, tok as u64]));
            let mut pos_rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 4, pos as u64]));
            (0..d)
                .map(|_| {
                    let t: f64 = tok_rng.gen::<f64>() * 2.0 - 1.0;
                    let p: f64 = pos_rng.gen::<f64>() * 2.0 - 1.0;
                    t + 0.5 * p
                })
                .collect()
        })
        .collect();
    let scale = 1.0 / (d as f64).sqrt();
    for layer in 0..depth {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 2, layer as u64]));
        let w: Vec<Vec<f64>> = (0..d)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        z * scale
                    })
                    .collect()
            })
            .collect();
        let b: Vec<f64> = (0..d)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * 0.1
            })
            .collect();
        for row in &mut rows {
            let mut out = row.clone();
            for (j, (wrow, bj)) in w.iter().zip(&b).enumerate() {
                let z: f64 = wrow.iter().zip(row.iter()).map(|(a, x)| a * x).sum::<f64>() + bj;
                out[j] += z.tanh();
            }
            *row = out;
        }
    }
    FeatureSequence::from_rows(rows).expect("encoder rows are finite and non-empty")
}

/// Member perturbation tensors, one per ensemble member. Seeded from the
/// teacher, not the corpus: members model a fixed ensemble of checkpoints,
/// so the same members must score every split or the feature-to-MI mapping
/// would change between train and test.
fn member_perturbations(spec: &CorpusSpec, teacher: &TeacherSpec) -> Vec<Vec<Vec<Vec<f64>>>> {
    let vocab = teacher.vocab_size;
    (0..spec.ensemble_size)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[teacher.seed, 3, k as u64]));
            (0..vocab)
                .map(|_| {
                    (0..vocab)
                        .map(|_| {
                            (0..vocab)
                                .map(|_| {
                                    let z: f64 = rng.sample(StandardNormal);
                                    z * spec.member_perturbation
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn decode(
    teacher: &TeacherSpec,
    summary: usize,
    length: usize,
    temperature: f64,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let mut prev = START_TOKEN;
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        let scaled: Vec<f64> = teacher.logits[summary][prev].iter().map(|&l| l / temperature).collect();
        let probs = softmax_row(&scaled);
        let y = sample_categorical(&probs, rng);
        out.push(y);
        prev = y;
    }
    out
}

fn greedy_reference(teacher: &TeacherSpec, summary: usize, length: usize) -> Vec<usize> {
    let mut prev = START_TOKEN;
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        let y = argmax(&teacher.logits[summary][prev]);
        out.push(y);
        prev = y;
    }
    out
}

/// Deterministically generate a corpus of fully-scored records.
pub fn gen_corpus(teacher: &TeacherSpec, spec: &CorpusSpec) -> Result<Vec<GeneratedRecord>> {
    spec.validate(teacher)?;
    let v = teacher.vocab_size;
    let perts = member_perturbations(spec, teacher);
    let mut out = Vec::with_capacity(spec.n_examples);
    for idx in 0..spec.n_examples {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[spec.seed, 4, idx as u64]));
        let length = rng.gen_range(spec.length_range.0..=spec.length_range.1);
        let source: Vec<usize> =
            (0..length).map(|_| sample_categorical(&spec.source_unigram, &mut rng)).collect();
        let summary = summary_index(&source, v);
        let reference = greedy_reference(teacher, summary, length);

        // Teacher-forced posteriors at the large-model temperature.
        let mut prevs = Vec::with_capacity(length);
        let mut p = START_TOKEN;
        for &r in &reference {
            prevs.push(p);
            p = r;
        }
        let scaled_rows: Vec<Vec<f64>> = prevs
            .iter()
            .map(|&pv| {
                teacher.logits[summary][pv]
                    .iter()
                    .map(|&l| l / spec.temperature_large)
                    .collect()
            })
            .collect();
        let base_probs: Vec<Vec<f64>> = scaled_rows.iter().map(|r| softmax_row(r)).collect();
        let base = TokenPosterior::new(base_probs, reference.clone())?;
        let members: Vec<TokenPosterior> = perts
            .iter()
            .map(|pert| {
                let probs: Vec<Vec<f64>> = scaled_rows
                    .iter()
                    .zip(&prevs)
                    .map(|(row, &pv)| {
                        let perturbed: Vec<f64> = row
                            .iter()
                            .zip(&pert[summary][pv])
                            .map(|(l, e)| l + e)
                            .collect();
                        softmax_row(&perturbed)
                    })
                    .collect();
                TokenPosterior::new(probs, reference.clone())
            })
            .collect::<Result<_>>()?;
        let ensemble = EnsemblePosterior::new(members)?;

        let mut small_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(&[spec.seed, 5, idx as u64]));
        let hyp_small = decode(teacher, summary, length, spec.temperature_small, &mut small_rng);
        let mut large_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(&[spec.seed, 6, idx as u64]));
        let hyp_large = decode(teacher, summary, length, spec.temperature_large, &mut large_rng);
        let wer_small = wer(&reference, &hyp_small)?;
        let wer_large = wer(&reference, &hyp_large)?;

        let features = frozen_encoder(&source, spec.encoder_depth, spec.encoder_width, spec.encoder_seed);

        let mut targets = std::collections::BTreeMap::new();
        targets.insert("confidence".into(), sequence_confidence(&base));
        targets.insert("entropy".into(), sequence_entropy(&base));
        targets.insert("mi".into(), ensemble_mutual_information(&ensemble));
        targets.insert("aleatoric".into(), aleatoric_score(&ensemble));
        targets.insert("similarity".into(), (-wer_large.wer).exp());
        targets.insert("wer".into(), wer_large.wer);
        targets.insert("errors".into(), wer_large.errors as f64);
        targets.insert("ref_len".into(), wer_large.ref_len as f64);
        targets.insert("similarity_small".into(), (-wer_small.wer).exp());
        targets.insert("similarity_large".into(), (-wer_large.wer).exp());
        targets.insert("wer_small".into(), wer_small.wer);
        targets.insert("wer_large".into(), wer_large.wer);
        targets.insert("errors_small".into(), wer_small.errors as f64);
        targets.insert("errors_large".into(), wer_large.errors as f64);

        let times = Times {
            small: TIME_SMALL * (1.0 + hyp_small.len() as f64),
            large: TIME_LARGE * (1.0 + hyp_large.len() as f64),
            proxy: TIME_PROXY * (1.0 + source.len() as f64),
        };

        let record = ScoreRecord {
            id: format!("{}-{:?}-{idx:06}", spec.domain_tag, spec.split).to_lowercase(),
            split: spec.split,
            domain: spec.domain_tag.clone(),
            features: features.features,
            targets,
            times,
        };
        out.push(GeneratedRecord {
            record,
            base,
            ensemble,
            source,
            reference,
            hyp_small,
            hyp_large,
        });
    }
    Ok(out)
}

/// Independent recomputation of a record's stored scores through a separate,
/// naive code path.
#[derive(Debug, Clone, Copy)]
pub struct OracleScores {
    pub confidence: f64,
    pub entropy: f64,
    pub mi: f64,
    pub aleatoric: f64,
    pub errors_large: u64,
}

/// Memoized recursion on the textbook edit-distance definition.
pub fn recursive_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> u64 {
    fn go<T: PartialEq>(
        a: &[T],
        b: &[T],
        i: usize,
        j: usize,
        memo: &mut std::collections::HashMap<(usize, usize), u64>,
    ) -> u64 {
        if i == 0 {
            return j as u64;
        }
        if j == 0 {
            return i as u64;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let sub = go(a, b, i - 1, j - 1, memo) + u64::from(a[i - 1] != b[j - 1]);
        let del = go(a, b, i - 1, j, memo) + 1;
        let ins = go(a, b, i, j - 1, memo) + 1;
        let v = sub.min(del).min(ins);
        memo.insert((i, j), v);
        v
    }
    go(a, b, a.len(), b.len(), &mut std::collections::HashMap::new())
}

pub fn oracle_scores(gen: &GeneratedRecord) -> OracleScores {
    let l = gen.base.probs.len();
    let v = gen.base.probs[0].len();
    let k = gen.ensemble.members.len();

    // Confidence: plain product of reference probabilities, then L-th root.
    let mut prod = 1.0f64;
    for pos in 0..l {
        prod *= gen.base.probs[pos][gen.base.ref_ids[pos]].max(1e-12);
    }
    let confidence = prod.powf(1.0 / l as f64);

    // Entropy: accumulate -p log p term by term.
    let mut entropy = 0.0;
    for pos in 0..l {
        for &p in &gen.base.probs[pos] {
            if p > 0.0 {
                entropy -= p * p.ln();
            }
        }
    }
    entropy /= l as f64;

    // MI and aleatoric from the decomposition, written out longhand.
    let mut mi_total = 0.0;
    let mut al_total = 0.0;
    for pos in 0..l {
        let mut mean = vec![0.0; v];
        let mut avg_h = 0.0;
        for m in &gen.ensemble.members {
            let mut h = 0.0;
            for (j, &p) in m.probs[pos].iter().enumerate() {
                mean[j] += p / k as f64;
                if p > 0.0 {
                    h -= p * p.ln();
                }
            }
            avg_h += h / k as f64;
        }
        let mut h_mean = 0.0;
        for &p in &mean {
            if p > 0.0 {
                h_mean -= p * p.ln();
            }
        }
        mi_total += h_mean - avg_h;
        al_total += avg_h;
    }

    // Large-model errors by plain recursion, independent of the DP solver.
    let errors_large = recursive_edit_distance(&gen.reference, &gen.hyp_large);

    OracleScores {
        confidence,
        entropy,
        mi: (mi_total / l as f64).max(0.0),
        aleatoric: al_total / l as f64,
        errors_large,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec(seed: u64) -> CorpusSpec {
        CorpusSpec {
            n_examples: 30,
            length_range: (4, 10),
            source_unigram: geometric_unigram(8, 0.7, false),
            domain_tag: "id".into(),
            split: Split::Train,
            temperature_small: 2.5,
            temperature_large: 1.0,
            ensemble_size: 4,
            member_perturbation: 0.5,
            seed,
            encoder_depth: 2,
            encoder_width: 16,
            encoder_seed: 123,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let teacher = TeacherSpec::generate(8, 9).unwrap();
        let spec = base_spec(1);
        let a = gen_corpus(&teacher, &spec).unwrap();
        let b = gen_corpus(&teacher, &spec).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.record.features, y.record.features);
            assert_eq!(x.record.targets, y.record.targets);
            assert_eq!(x.source, y.source);
        }
    }

    #[test]
    fn zero_perturbation_means_zero_mi() {
        let teacher = TeacherSpec::generate(8, 9).unwrap();
        let mut spec = base_spec(2);
        spec.member_perturbation = 0.0;
        for g in gen_corpus(&teacher, &spec).unwrap() {
            assert_eq!(g.record.targets["mi"], 0.0);
            // Identical members: aleatoric equals any member's entropy.
            let h0 = crate::uncertainty::sequence_entropy(&g.ensemble.members[0]);
            assert!((g.record.targets["aleatoric"] - h0).abs() < 1e-12);
        }
    }

    #[test]
    fn near_zero_temperature_decodes_the_reference() {
        let teacher = TeacherSpec::generate(8, 9).unwrap();
        let mut spec = base_spec(3);
        spec.temperature_large = 1e-6;
        for g in gen_corpus(&teacher, &spec).unwrap() {
            assert_eq!(g.record.targets["errors_large"], 0.0);
            assert_eq!(g.record.targets["wer_large"], 0.0);
        }
    }

    #[test]
    fn oracle_matches_stored_scores() {
        let teacher = TeacherSpec::generate(8, 9).unwrap();
        let spec = base_spec(4);
        for g in gen_corpus(&teacher, &spec).unwrap() {
            let o = oracle_scores(&g);
            assert!((o.confidence - g.record.targets["confidence"]).abs() < 1e-10);
            assert!((o.entropy - g.record.targets["entropy"]).abs() < 1e-10);
            assert!((o.mi - g.record.targets["mi"]).abs() < 1e-10);
            assert!((o.aleatoric - g.record.targets["aleatoric"]).abs() < 1e-10);
            assert_eq!(o.errors_large as f64, g.record.targets["errors_large"]);
        }
    }

    #[test]
    fn decomposition_holds_per_record() {
        let teacher = TeacherSpec::generate(8, 9).unwrap();
        let spec = base_spec(5);
        for g in gen_corpus(&teacher, &spec).unwrap() {
            let l = g.base.probs.len();
            let k = g.ensemble.members.len() as f64;
            let v = g.base.probs[0].len();
            let mut h_mean_total = 0.0;
            for pos in 0..l {
                let mut mean = vec![0.0; v];
                for m in &g.ensemble.members {
                    for (j, &p) in m.probs[pos].iter().enumerate() {
                        mean[j] += p / k;
                    }
                }
                h_mean_total +=
                    mean.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum::<f64>();
            }
            let h_mean = h_mean_total / l as f64;
            let mi = g.record.targets["mi"];
            let al = g.record.targets["aleatoric"];
            assert!((h_mean - (mi + al)).abs() < 1e-10);
        }
    }

    #[test]
    fn ood_shift_raises_mean_mi() {
        let teacher = TeacherSpec::generate(8, 9).unwrap();
        let id = base_spec(6);
        let mut ood = base_spec(7);
        ood.source_unigram = geometric_unigram(8, 0.7, true);
        ood.temperature_large = 2.0;
        ood.domain_tag = "ood".into();
        let mean_mi = |gens: &[GeneratedRecord]| {
            gens.iter().map(|g| g.record.targets["mi"]).sum::<f64>() / gens.len() as f64
        };
        let id_mi = mean_mi(&gen_corpus(&teacher, &id).unwrap());
        let ood_mi = mean_mi(&gen_corpus(&teacher, &ood).unwrap());
        assert!(ood_mi > id_mi, "ood {ood_mi} vs id {id_mi}");
    }

    #[test]
    fn encoder_depth_prefix_and_determinism() {
        let tokens = [1usize, 3, 0, 2];
        let a = frozen_encoder(&tokens, 1, 8, 5);
        let b = frozen_encoder(&tokens, 1, 8, 5);
        assert_eq!(a.features, b.features);
        // Depth-3 recomputes the depth-1 output as its first layer.
        let deep = frozen_encoder(&tokens, 3, 8, 5);
        assert_eq!(deep.features.len(), a.features.len());
        assert_ne!(deep.features, a.features);
    }

    #[test]
    fn encoder_collision_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut by_features: std::collections::HashMap<Vec<u64>, Vec<usize>> =
            std::collections::HashMap::new();
        for _ in 0..2000 {
            let l = rng.gen_range(3..8);
            let tokens: Vec<usize> = (0..l).map(|_| rng.gen_range(0..8)).collect();
            let fs = frozen_encoder(&tokens, 2, 16, 77);
            let fingerprint: Vec<u64> =
                fs.features.iter().flatten().map(|f| f.to_bits()).collect();
            if let Some(prev) = by_features.insert(fingerprint, tokens.clone()) {
                assert_eq!(prev, tokens, "feature collision between distinct sequences");
            }
        }
    }

    #[test]
    fn empty_corpus_spec_rejected() {
        let teacher = TeacherSpec::generate(8, 9).unwrap();
        let mut spec = base_spec(8);
        spec.n_examples = 0;
        assert!(matches!(gen_corpus(&teacher, &spec), Err(NapError::EmptyCorpusSpec)));
    }

    #[test]
    fn invalid_unigram_rejected() {
        let teacher = TeacherSpec::generate(8, 9).unwrap();
        let mut spec = base_spec(9);
        spec.source_unigram = vec![0.5; 8];
        assert!(matches!(gen_corpus(&teacher, &spec), Err(NapError::InvalidDistribution(_))));
    }
}
