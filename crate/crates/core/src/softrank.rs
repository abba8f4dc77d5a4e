//! Differentiable soft ranking via Euclidean projection onto the permutahedron.
//!
//! The projection of `scores / epsilon` onto the permutahedron generated by
//! `(1, 2, ..., n)` reduces to an isotonic regression solved with
//! pool-adjacent-violators (PAV): sort the scaled scores descending, fit the
//! non-increasing least-squares regression of `z - w` (with `w = (n, ..., 1)`),
//! and the projection in sorted coordinates is `z - fit`. Ranks are ascending:
//! the smallest score receives the smallest soft rank.

use crate::error::{NapError, Result};

/// Result of a soft-rank projection, retaining everything needed to apply
/// the transpose-Jacobian.
#[derive(Debug, Clone)]
pub struct SoftRankOutput {
    /// Soft ranks in input order, each in `[1, n]`, summing to `n(n+1)/2`.
    pub ranks: Vec<f64>,
    /// PAV pools as contiguous `[start, end)` index ranges over the
    /// descending-sorted order.
    pub blocks: Vec<(usize, usize)>,
    /// `sort_perm[k]` = input index of the k-th largest score.
    pub sort_perm: Vec<usize>,
    /// Smoothing parameter used for the projection.
    pub epsilon: f64,
}

/// Least-squares fit of `y` under a non-increasing constraint.
///
/// Returns the fitted vector together with the pooled blocks; each block
/// carries the mean of `y` over its range.
pub fn pav_isotonic_with_blocks(y: &[f64]) -> Result<(Vec<f64>, Vec<(usize, usize)>)> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(NapError::NonFiniteInput);
    }
    let n = y.len();
    // Stack of (sum, len, start) blocks; merge while the constraint
    // value[prev] >= value[next] is violated.
    let mut sums: Vec<f64> = Vec::with_capacity(n);
    let mut lens: Vec<usize> = Vec::with_capacity(n);
    let mut starts: Vec<usize> = Vec::with_capacity(n);
    for (i, &v) in y.iter().enumerate() {
        sums.push(v);
        lens.push(1);
        starts.push(i);
        while sums.len() > 1 {
            let k = sums.len();
            let top = sums[k - 1] / lens[k - 1] as f64;
            let prev = sums[k - 2] / lens[k - 2] as f64;
            if prev >= top {
                break;
            }
            let (s, l) = (sums.pop().unwrap(), lens.pop().unwrap());
            starts.pop();
            *sums.last_mut().unwrap() += s;
            *lens.last_mut().unwrap() += l;
        }
    }
    let mut fit = Vec::with_capacity(n);
    let mut blocks = Vec::with_capacity(sums.len());
    for b in 0..sums.len() {
        let mean = sums[b] / lens[b] as f64;
        let start = starts[b];
        blocks.push((start, start + lens[b]));
        for _ in 0..lens[b] {
            fit.push(mean);
        }
    }
    Ok((fit, blocks))
}

/// Non-increasing isotonic least-squares fit of `y`.
pub fn pav_isotonic(y: &[f64]) -> Result<Vec<f64>> {
    pav_isotonic_with_blocks(y).map(|(fit, _)| fit)
}

/// Soft ranks of `scores`: the Euclidean projection of `scores / epsilon`
/// onto the permutahedron of `(1, ..., n)`, ascending convention.
pub fn soft_rank(scores: &[f64], epsilon: f64) -> Result<SoftRankOutput> {
    let n = scores.len();
    if n < 2 {
        return Err(NapError::BatchTooSmall);
    }
    if !(epsilon > 0.0) || scores.iter().any(|v| !v.is_finite()) {
        return Err(NapError::NonFiniteInput);
    }
    // Descending stable sort keeps tie handling deterministic.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    // Translation invariance: center before scaling so epsilon = 1e-6 on
    // large-offset inputs does not cost precision in the block means.
    let mean = scores.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = perm.iter().map(|&i| (scores[i] - mean) / epsilon).collect();
    let shifted: Vec<f64> = z
        .iter()
        .enumerate()
        .map(|(k, &zi)| zi - (n - k) as f64)
        .collect();
    let (fit, blocks) = pav_isotonic_with_blocks(&shifted)?;

    let mut ranks = vec![0.0; n];
    for k in 0..n {
        ranks[perm[k]] = z[k] - fit[k];
    }
    Ok(SoftRankOutput {
        ranks,
        blocks,
        sort_perm: perm,
        epsilon,
    })
}

/// Backward pass of [`soft_rank`] applied to `upstream`.
///
/// Block-diagonal in sorted coordinates: within each PAV pool every
/// coordinate receives the pool mean of `upstream`, scaled by `1/epsilon`
/// through the pre-projection scaling; zero across pools.
///
/// This is a deliberate straight-through surrogate rather than the exact
/// derivative of the projection. The exact Jacobian is `(I - B)/epsilon`
/// per pool (`B` = block averaging), which vanishes on singleton pools —
/// at small epsilon every well-separated input is a singleton, so the
/// exact gradient is zero almost everywhere and useless for training.
/// The surrogate `B/epsilon` keeps the pre-projection identity scaling as
/// the descent signal while still pooling tied coordinates.
pub fn soft_rank_vjp(output: &SoftRankOutput, upstream: &[f64]) -> Result<Vec<f64>> {
    let n = output.ranks.len();
    if upstream.len() != n {
        return Err(NapError::LengthMismatch(upstream.len(), n));
    }
    let sorted_up: Vec<f64> = output.sort_perm.iter().map(|&i| upstream[i]).collect();
    let mut out = vec![0.0; n];
    for &(start, end) in &output.blocks {
        let len = (end - start) as f64;
        let block_mean = sorted_up[start..end].iter().sum::<f64>() / len;
        for k in start..end {
            out[output.sort_perm[k]] = block_mean / output.epsilon;
        }
    }
    Ok(out)
}
