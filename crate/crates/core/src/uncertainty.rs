//! Sequence-level uncertainty extraction from teacher-forced token posteriors.
//!
//! All scores are length-averaged and in nats: confidence is the geometric
//! mean of reference-token probabilities, entropy the mean per-token entropy,
//! and the ensemble scores decompose as
//! `H(mean posterior) = mutual information + aleatoric` per position.

use crate::error::{NapError, Result};

const LOG_FLOOR: f64 = 1e-12;

/// Per-position categorical distributions along a teacher-forced reference.
#[derive(Debug, Clone)]
pub struct TokenPosterior {
    /// `L x V`, each row a distribution over the vocabulary.
    pub probs: Vec<Vec<f64>>,
    /// Reference token index per position.
    pub ref_ids: Vec<usize>,
}

impl TokenPosterior {
    pub fn new(probs: Vec<Vec<f64>>, ref_ids: Vec<usize>) -> Result<Self> {
        if probs.is_empty() {
            return Err(NapError::EmptyInput("token posterior"));
        }
        let v = probs[0].len();
        if v < 2 {
            return Err(NapError::DimensionMismatch("vocabulary size < 2".into()));
        }
        if ref_ids.len() != probs.len() {
            return Err(NapError::LengthMismatch(ref_ids.len(), probs.len()));
        }
        for (l, row) in probs.iter().enumerate() {
            if row.len() != v {
                return Err(NapError::DimensionMismatch(format!("row {l} width {}", row.len())));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&p| !(p >= 0.0)) {
                return Err(NapError::InvalidDistribution(format!("row {l} sums to {sum}")));
            }
            if ref_ids[l] >= v {
                return Err(NapError::DimensionMismatch(format!("ref id {} at {l}", ref_ids[l])));
            }
        }
        Ok(Self { probs, ref_ids })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn vocab(&self) -> usize {
        self.probs[0].len()
    }
}

/// An ensemble of posteriors sharing length, vocabulary and reference.
#[derive(Debug, Clone)]
pub struct EnsemblePosterior {
    pub members: Vec<TokenPosterior>,
}

impl EnsemblePosterior {
    pub fn new(members: Vec<TokenPosterior>) -> Result<Self> {
        if members.len() < 2 {
            return Err(NapError::EmptyInput("ensemble needs at least 2 members"));
        }
        let (l, v) = (members[0].len(), members[0].vocab());
        for m in &members[1..] {
            if m.len() != l || m.vocab() != v {
                return Err(NapError::DimensionMismatch("ensemble member shapes differ".into()));
            }
            if m.ref_ids != members[0].ref_ids {
                return Err(NapError::DimensionMismatch("ensemble refs differ".into()));
            }
        }
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members[0].len()
    }
}

fn row_entropy(row: &[f64]) -> f64 {
    row.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Length-normalized reference likelihood `exp(mean log p(ref_l))`, in (0, 1].
pub fn sequence_confidence(tp: &TokenPosterior) -> f64 {
    let l = tp.len() as f64;
    let log_sum: f64 = tp
        .probs
        .iter()
        .zip(&tp.ref_ids)
        .map(|(row, &r)| row[r].max(LOG_FLOOR).ln())
        .sum();
    (log_sum / l).exp()
}

/// Length-averaged per-token entropy in nats, the chain-rule conditional
/// approximation of sequence entropy. Range `[0, ln V]`.
pub fn sequence_entropy(tp: &TokenPosterior) -> f64 {
    let l = tp.len() as f64;
    tp.probs.iter().map(|row| row_entropy(row)).sum::<f64>() / l
}

fn mean_row(ep: &EnsemblePosterior, l: usize) -> Vec<f64> {
    let k = ep.members.len() as f64;
    let v = ep.members[0].vocab();
    let mut mean = vec![0.0; v];
    for m in &ep.members {
        for (acc, &p) in mean.iter_mut().zip(&m.probs[l]) {
            *acc += p / k;
        }
    }
    mean
}

/// Token-averaged mutual information: entropy of the ensemble mean posterior
/// minus the average member entropy. Clipped at 0 against roundoff.
pub fn ensemble_mutual_information(ep: &EnsemblePosterior) -> f64 {
    // Identical members carry no disagreement; short-circuiting keeps the
    // zero exact instead of leaving a roundoff-sized residue.
    if ep.members[1..].iter().all(|m| m.probs == ep.members[0].probs) {
        return 0.0;
    }
    let l = ep.len();
    let k = ep.members.len() as f64;
    let mut total = 0.0;
    for pos in 0..l {
        let h_mean = row_entropy(&mean_row(ep, pos));
        let h_avg: f64 = ep.members.iter().map(|m| row_entropy(&m.probs[pos])).sum::<f64>() / k;
        total += h_mean - h_avg;
    }
    (total / l as f64).max(0.0)
}

/// Expected data uncertainty: token-averaged mean member entropy.
pub fn aleatoric_score(ep: &EnsemblePosterior) -> f64 {
    let l = ep.len();
    let k = ep.members.len() as f64;
    let mut total = 0.0;
    for pos in 0..l {
        total += ep.members.iter().map(|m| row_entropy(&m.probs[pos])).sum::<f64>() / k;
    }
    total / l as f64
}
