//! Downstream evaluations: OOD detection, dataset filtering curves, and
//! deferral operating curves with matched-operating-point queries.

use crate::error::{NapError, Result};
use crate::metrics::{auroc, corpus_wer, WerOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodDirection {
    HigherIsOod,
    LowerIsOod,
}

impl OodDirection {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "higher_is_ood" => Ok(Self::HigherIsOod),
            "lower_is_ood" => Ok(Self::LowerIsOod),
            _ => Err(NapError::UnknownName {
                kind: "direction",
                name: s.into(),
                valid: "higher_is_ood, lower_is_ood".into(),
            }),
        }
    }
}

/// Detection AUROC in percent, OOD as the positive class.
pub fn ood_detect(id_scores: &[f64], ood_scores: &[f64], direction: OodDirection) -> Result<f64> {
    let (neg, pos): (Vec<f64>, Vec<f64>) = match direction {
        OodDirection::HigherIsOod => (id_scores.to_vec(), ood_scores.to_vec()),
        OodDirection::LowerIsOod => (
            id_scores.iter().map(|s| -s).collect(),
            ood_scores.iter().map(|s| -s).collect(),
        ),
    };
    Ok(auroc(&neg, &pos)? * 100.0)
}

/// Per-example quality measurement, aggregated per mode.
#[derive(Debug, Clone, Copy)]
pub enum AggMode {
    MeanMetric,
    CorpusWer,
}

impl AggMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean_metric" => Ok(Self::MeanMetric),
            "corpus_wer" => Ok(Self::CorpusWer),
            _ => Err(NapError::UnknownName {
                kind: "mode",
                name: s.into(),
                valid: "mean_metric, corpus_wer".into(),
            }),
        }
    }
}

/// One example's measurement under a model: a scalar metric plus the error
/// counts needed for pooled-WER aggregation.
#[derive(Debug, Clone, Copy)]
pub struct ModelOutcome {
    pub metric: f64,
    pub errors: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct DeferralInput {
    pub proxy_score: f64,
    pub small: ModelOutcome,
    pub large: ModelOutcome,
    /// Reference length, shared by both models; > 0 in WER mode.
    pub ref_len: u64,
    pub time_small: f64,
    pub time_large: f64,
    pub time_proxy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeferralPolicy {
    /// Every input runs through the proxy; its time is charged per example.
    Proxy,
    /// The small model runs first to produce its own uncertainty; deferred
    /// examples pay for the large model on top.
    SmallModelUncertainty,
}

impl DeferralPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "proxy" => Ok(Self::Proxy),
            "small_model_uncertainty" => Ok(Self::SmallModelUncertainty),
            _ => Err(NapError::UnknownName {
                kind: "policy",
                name: s.into(),
                valid: "proxy, small_model_uncertainty".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeferralDirection {
    /// Score above the threshold routes to the small model.
    AboveThresholdSmall,
    /// Score below the threshold routes to the small model.
    BelowThresholdSmall,
}

impl DeferralDirection {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "above_threshold_small" => Ok(Self::AboveThresholdSmall),
            "below_threshold_small" => Ok(Self::BelowThresholdSmall),
            _ => Err(NapError::UnknownName {
                kind: "direction",
                name: s.into(),
                valid: "above_threshold_small, below_threshold_small".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub fraction_deferred: f64,
    pub metric: f64,
    pub time: f64,
}

/// Ordered quality-cost tradeoff: fraction deferred (to the large model)
/// is non-decreasing along the list, with all-small and all-large endpoints.
#[derive(Debug, Clone)]
pub struct OperatingCurve {
    pub points: Vec<OperatingPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDirection {
    RemoveLowestPredicted,
    RemoveHighestPredicted,
}

impl FilterDirection {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "remove_lowest_predicted" => Ok(Self::RemoveLowestPredicted),
            "remove_highest_predicted" => Ok(Self::RemoveHighestPredicted),
            _ => Err(NapError::UnknownName {
                kind: "direction",
                name: s.into(),
                valid: "remove_lowest_predicted, remove_highest_predicted".into(),
            }),
        }
    }
}

/// Per-example actual measurement for filtering.
#[derive(Debug, Clone, Copy)]
pub enum FilterMetric {
    Scalar(f64),
    Wer { errors: u64, ref_len: u64 },
}

fn aggregate_filter(items: &[FilterMetric]) -> Result<f64> {
    let mut scalars = Vec::new();
    let mut outcomes = Vec::new();
    for it in items {
        match *it {
            FilterMetric::Scalar(v) => scalars.push(v),
            FilterMetric::Wer { errors, ref_len } => outcomes.push(WerOutcome {
                errors,
                ref_len,
                wer: errors as f64 / ref_len as f64,
            }),
        }
    }
    if !outcomes.is_empty() {
        corpus_wer(&outcomes)
    } else {
        Ok(scalars.iter().sum::<f64>() / scalars.len() as f64)
    }
}

/// Aggregate metric of the dataset remainder after dropping `floor(f * n)`
/// examples at the chosen extreme of `predicted` (ties broken by stable
/// input order) for each fraction.
pub fn filtering_curve(
    predicted: &[f64],
    actual: &[FilterMetric],
    fractions: &[f64],
    direction: FilterDirection,
) -> Result<Vec<(f64, f64)>> {
    if predicted.len() != actual.len() {
        return Err(NapError::LengthMismatch(predicted.len(), actual.len()));
    }
    if predicted.is_empty() {
        return Err(NapError::EmptyInput("filtering inputs"));
    }
    let n = predicted.len();
    let mut order: Vec<usize> = (0..n).collect();
    match direction {
        FilterDirection::RemoveLowestPredicted => {
            order.sort_by(|&a, &b| predicted[a].partial_cmp(&predicted[b]).unwrap())
        }
        FilterDirection::RemoveHighestPredicted => {
            order.sort_by(|&a, &b| predicted[b].partial_cmp(&predicted[a]).unwrap())
        }
    }
    let mut curve = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let drop = (f * n as f64).floor() as usize;
        if drop >= n {
            return Err(NapError::EmptyRemainder);
        }
        // Aggregate in original input order so f = 0 reproduces the plain
        // dataset aggregate bit-exactly.
        let mut keep: Vec<usize> = order[drop..].to_vec();
        keep.sort_unstable();
        let remaining: Vec<FilterMetric> = keep.iter().map(|&i| actual[i]).collect();
        curve.push((f, aggregate_filter(&remaining)?));
    }
    Ok(curve)
}

fn routes_small(score: f64, threshold: f64, direction: DeferralDirection) -> bool {
    match direction {
        DeferralDirection::AboveThresholdSmall => score > threshold,
        DeferralDirection::BelowThresholdSmall => score < threshold,
    }
}

fn evaluate_threshold(
    inputs: &[DeferralInput],
    policy: DeferralPolicy,
    direction: DeferralDirection,
    mode: AggMode,
    threshold: f64,
) -> Result<OperatingPoint> {
    let n = inputs.len() as f64;
    let mut deferred = 0usize;
    let mut time = 0.0;
    let mut metric_sum = 0.0;
    let mut errors = 0u64;
    let mut words = 0u64;
    for inp in inputs {
        let small = routes_small(inp.proxy_score, threshold, direction);
        let chosen = if small { inp.small } else { inp.large };
        if !small {
            deferred += 1;
        }
        match policy {
            DeferralPolicy::Proxy => {
                time += inp.time_proxy + if small { inp.time_small } else { inp.time_large };
            }
            DeferralPolicy::SmallModelUncertainty => {
                time += inp.time_small + if small { 0.0 } else { inp.time_large };
            }
        }
        match mode {
            AggMode::MeanMetric => metric_sum += chosen.metric,
            AggMode::CorpusWer => {
                errors += chosen.errors;
                words += inp.ref_len;
            }
        }
    }
    let metric = match mode {
        AggMode::MeanMetric => metric_sum / n,
        AggMode::CorpusWer => errors as f64 / words as f64,
    };
    Ok(OperatingPoint {
        threshold,
        fraction_deferred: deferred as f64 / n,
        metric,
        time,
    })
}

/// Thresholded small/large routing over every threshold in the grid.
/// With `thresholds = None`, the grid is every distinct observed score plus
/// +-infinity sentinels, so the curve is an exact step function.
pub fn deferral_curve(
    inputs: &[DeferralInput],
    policy: DeferralPolicy,
    direction: DeferralDirection,
    mode: AggMode,
    thresholds: Option<&[f64]>,
) -> Result<OperatingCurve> {
    if inputs.is_empty() {
        return Err(NapError::EmptyInput("deferral inputs"));
    }
    if matches!(mode, AggMode::CorpusWer) && inputs.iter().any(|i| i.ref_len == 0) {
        return Err(NapError::InvalidConfig("ref_len must be > 0 in corpus_wer mode".into()));
    }
    let grid: Vec<f64> = match thresholds {
        Some(t) => t.to_vec(),
        None => {
            let mut g: Vec<f64> = inputs.iter().map(|i| i.proxy_score).collect();
            g.sort_by(|a, b| a.partial_cmp(b).unwrap());
            g.dedup();
            g.insert(0, f64::NEG_INFINITY);
            g.push(f64::INFINITY);
            g
        }
    };
    let mut points: Vec<OperatingPoint> = grid
        .iter()
        .map(|&t| evaluate_threshold(inputs, policy, direction, mode, t))
        .collect::<Result<_>>()?;
    // Present the curve from all-small to all-large.
    points.sort_by(|a, b| {
        a.fraction_deferred
            .partial_cmp(&b.fraction_deferred)
            .unwrap()
    });
    Ok(OperatingCurve { points })
}

/// Query target: match a time budget or a metric level.
#[derive(Debug, Clone, Copy)]
pub enum MatchTarget {
    Time(f64),
    Metric(f64),
}

/// Linear interpolation between adjacent curve points on the target axis;
/// an exact curve point is returned verbatim.
pub fn matched_operating_point_full(
    curve: &OperatingCurve,
    target: MatchTarget,
) -> Result<OperatingPoint> {
    let axis = |p: &OperatingPoint| match target {
        MatchTarget::Time(_) => p.time,
        MatchTarget::Metric(_) => p.metric,
    };
    let goal = match target {
        MatchTarget::Time(t) => t,
        MatchTarget::Metric(m) => m,
    };
    for p in &curve.points {
        if axis(p) == goal {
            return Ok(*p);
        }
    }
    for pair in curve.points.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (va, vb) = (axis(a), axis(b));
        if (va <= goal && goal <= vb) || (vb <= goal && goal <= va) {
            let t = (goal - va) / (vb - va);
            return Ok(OperatingPoint {
                threshold: a.threshold + t * (b.threshold - a.threshold),
                fraction_deferred: a.fraction_deferred
                    + t * (b.fraction_deferred - a.fraction_deferred),
                metric: a.metric + t * (b.metric - a.metric),
                time: a.time + t * (b.time - a.time),
            });
        }
    }
    Err(NapError::UnreachableOperatingPoint)
}

/// As [`matched_operating_point_full`], returning (threshold, metric, time).
pub fn matched_operating_point(
    curve: &OperatingCurve,
    target: MatchTarget,
) -> Result<(f64, f64, f64)> {
    matched_operating_point_full(curve, target).map(|p| (p.threshold, p.metric, p.time))
}
