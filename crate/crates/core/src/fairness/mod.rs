//! Group-fairness indicators, what-if re-thresholding, disparity timelines and
//! IN/OUT stability reports.
//!
//! Disparities over more than two groups are the maximum pairwise absolute
//! difference. Groups containing an UNKNOWN attribute bucket are reported but
//! not compared.

mod stability;
mod timeline;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ingest::{Env, PredictionRecord, Task};
use crate::slicing::{detection_metrics, partition, GroupKey, GroupMetrics, Metric, MetricsError, Tally};

pub use stability::{stability_report, EnvSection, RadarSeries, StabilityReport};
pub use timeline::{disparity_timeline, DisparityTimeline, TimelinePoint};

/// Groups smaller than this are flagged in disparity summaries.
pub const LOW_SUPPORT_N: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FairnessError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("need at least two comparable groups, found {0}")]
    InsufficientGroups(usize),
    #[error("prediction log needs at least two distinct epochs")]
    NoEpochData,
    #[error("no prediction records match the request")]
    NoPredictions,
    #[error("threshold map names unknown group {0:?}")]
    UnknownGroup(String),
}

impl FairnessError {
    pub fn code(&self) -> &'static str {
        match self {
            FairnessError::Metrics(e) => e.code(),
            FairnessError::InsufficientGroups(_) => "INSUFFICIENT_GROUPS",
            FairnessError::NoEpochData => "NO_EPOCH_DATA",
            FairnessError::NoPredictions => "NO_PREDICTIONS",
            FairnessError::UnknownGroup(_) => "UNKNOWN_GROUP",
        }
    }
}

/// Largest absolute difference between any two values; `None` for fewer than two.
pub fn max_pairwise_gap(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut count = 0usize;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        count += 1;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (count >= 2).then_some(hi - lo)
}

fn comparable(groups: &[GroupMetrics]) -> impl Iterator<Item = &GroupMetrics> {
    groups
        .iter()
        .filter(|g| g.n > 0 && !g.group.has_unknown() && !g.group.is_all())
}

/// Demographic-parity gap: `|Pr(ŷ=1 | a) - Pr(ŷ=1 | b)|`, maximized over group pairs.
pub fn dp_gap(groups: &[GroupMetrics]) -> Result<f64, FairnessError> {
    let rates: Vec<f64> = comparable(groups).filter_map(|g| g.positive_rate).collect();
    max_pairwise_gap(rates.iter().copied()).ok_or(FairnessError::InsufficientGroups(rates.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EoGaps {
    pub tpr_gap: Option<f64>,
    pub fpr_gap: Option<f64>,
    /// `max(tpr_gap, fpr_gap)`; defined only when both components are.
    pub eo_diff: Option<f64>,
}

/// Equalized-odds gaps over groups where the underlying rate is defined.
pub fn eo_gaps(groups: &[GroupMetrics]) -> Result<EoGaps, FairnessError> {
    let n = comparable(groups).count();
    if n < 2 {
        return Err(FairnessError::InsufficientGroups(n));
    }
    let tpr_gap = max_pairwise_gap(comparable(groups).filter_map(|g| g.tpr));
    let fpr_gap = max_pairwise_gap(comparable(groups).filter_map(|g| g.fpr));
    let eo_diff = match (tpr_gap, fpr_gap) {
        (Some(t), Some(f)) => Some(t.max(f)),
        _ => None,
    };
    Ok(EoGaps {
        tpr_gap,
        fpr_gap,
        eo_diff,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisparitySummary {
    pub dp_gap: Option<f64>,
    pub tpr_gap: Option<f64>,
    pub fpr_gap: Option<f64>,
    pub eo_diff: Option<f64>,
    /// Reference metric for `metric_gap`, `best_group` and `worst_group`.
    pub metric: Metric,
    pub metric_gap: Option<f64>,
    pub best_group: Option<GroupKey>,
    pub worst_group: Option<GroupKey>,
    /// Compared groups with fewer than [`LOW_SUPPORT_N`] records.
    pub low_support: Vec<GroupKey>,
    /// Groups left out of the comparison (UNKNOWN buckets).
    pub excluded: Vec<GroupKey>,
}

pub fn summarize(groups: &[GroupMetrics], metric: Metric) -> Result<DisparitySummary, FairnessError> {
    let eo = eo_gaps(groups)?;
    let scored: Vec<(&GroupKey, f64)> = comparable(groups)
        .filter_map(|g| g.get(metric).map(|v| (&g.group, v)))
        .collect();
    let better = |a: f64, b: f64| if metric.higher_is_better() { a > b } else { a < b };
    let mut best: Option<(&GroupKey, f64)> = None;
    let mut worst: Option<(&GroupKey, f64)> = None;
    for &(k, v) in &scored {
        if best.is_none_or(|(_, b)| better(v, b)) {
            best = Some((k, v));
        }
        if worst.is_none_or(|(_, w)| better(w, v)) {
            worst = Some((k, v));
        }
    }
    Ok(DisparitySummary {
        dp_gap: dp_gap(groups).ok(),
        tpr_gap: eo.tpr_gap,
        fpr_gap: eo.fpr_gap,
        eo_diff: eo.eo_diff,
        metric,
        metric_gap: max_pairwise_gap(scored.iter().map(|s| s.1)),
        best_group: best.map(|(k, _)| k.clone()),
        worst_group: worst.map(|(k, _)| k.clone()),
        low_support: comparable(groups)
            .filter(|g| g.n < LOW_SUPPORT_N)
            .map(|g| g.group.clone())
            .collect(),
        excluded: groups
            .iter()
            .filter(|g| g.group.has_unknown())
            .map(|g| g.group.clone())
            .collect(),
    })
}

/// Which evaluation environments a request covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvFilter {
    /// All in-distribution splits.
    #[default]
    In,
    Out,
    All,
    InTrain,
    InVal,
    InTest,
}

impl EnvFilter {
    pub fn admits(self, env: Env) -> bool {
        match self {
            EnvFilter::In => env.is_in_distribution(),
            EnvFilter::Out => env == Env::Out,
            EnvFilter::All => true,
            EnvFilter::InTrain => env == Env::InTrain,
            EnvFilter::InVal => env == Env::InVal,
            EnvFilter::InTest => env == Env::InTest,
        }
    }
}

impl std::str::FromStr for EnvFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|_| format!("unknown env filter {s:?}"))
    }
}

/// Records admitted by `env` at `epoch`, defaulting to the latest such epoch.
pub fn select_records(
    records: &[PredictionRecord],
    env: EnvFilter,
    epoch: Option<u32>,
) -> (Vec<&PredictionRecord>, Option<u32>) {
    let epoch = epoch.or_else(|| records.iter().filter(|r| env.admits(r.env)).map(|r| r.epoch).max());
    let Some(epoch) = epoch else {
        return (Vec::new(), None);
    };
    let selected = records
        .iter()
        .filter(|r| r.epoch == epoch && env.admits(r.env))
        .collect();
    (selected, Some(epoch))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Reference metric; defaults by task (accuracy / ap).
    pub metric: Option<Metric>,
    pub threshold: f64,
    pub iou_threshold: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            metric: None,
            threshold: 0.5,
            iou_threshold: 0.5,
        }
    }
}

pub fn task_of(records: &[&PredictionRecord]) -> Result<Task, FairnessError> {
    let first = records.first().ok_or(FairnessError::NoPredictions)?.task();
    if let Some(other) = records.iter().find(|r| r.task() != first) {
        return Err(MetricsError::WrongTask {
            expected: task_name(first),
            found: task_name(other.task()),
        }
        .into());
    }
    Ok(first)
}

fn task_name(t: Task) -> &'static str {
    match t {
        Task::Classification => "classification",
        Task::Detection => "detection",
    }
}

pub fn default_metric(task: Task) -> Metric {
    match task {
        Task::Classification => Metric::Accuracy,
        Task::Detection => Metric::Ap,
    }
}

pub fn check_metric(task: Task, metric: Metric) -> Result<(), FairnessError> {
    let ok = match task {
        Task::Classification => metric != Metric::Ap,
        Task::Detection => matches!(metric, Metric::Ap | Metric::Precision | Metric::Recall | Metric::Tpr),
    };
    if ok {
        Ok(())
    } else {
        Err(MetricsError::WrongTask {
            expected: if task == Task::Classification {
                "detection"
            } else {
                "classification"
            },
            found: task_name(task),
        }
        .into())
    }
}

fn check_threshold(t: f64) -> Result<(), FairnessError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(MetricsError::InvalidThreshold(t).into())
    }
}

/// Per-group metrics plus disparity summary for one slice configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessReport {
    pub task: Task,
    pub axes: Vec<String>,
    pub metric: Metric,
    /// Global decision threshold (classification).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Per-group overrides in effect (what-if).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub thresholds: BTreeMap<GroupKey, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iou_threshold: Option<f64>,
    pub overall: GroupMetrics,
    /// Canonical group order.
    pub groups: Vec<GroupMetrics>,
    pub disparity: DisparitySummary,
}

impl FairnessReport {
    pub fn group(&self, key: &GroupKey) -> Option<&GroupMetrics> {
        self.groups.iter().find(|g| &g.group == key)
    }
}

/// Disaggregated report at the global threshold.
pub fn fairness_report<S: AsRef<str>>(
    records: &[&PredictionRecord],
    axes: &[S],
    options: &ReportOptions,
) -> Result<FairnessReport, FairnessError> {
    what_if_reconfigure(records, axes, &BTreeMap::new(), options)
}

/// Recomputes the report with per-group decision thresholds.
///
/// Groups absent from `thresholds` use `options.threshold`. Records are only
/// read; the report is a pure function of its inputs.
pub fn what_if_reconfigure<S: AsRef<str>>(
    records: &[&PredictionRecord],
    axes: &[S],
    thresholds: &BTreeMap<GroupKey, f64>,
    options: &ReportOptions,
) -> Result<FairnessReport, FairnessError> {
    let task = task_of(records)?;
    let metric = options.metric.unwrap_or_else(|| default_metric(task));
    check_metric(task, metric)?;
    check_threshold(options.threshold)?;
    let groups = partition(records.iter().copied(), axes)?;
    for (k, &t) in thresholds {
        if !groups.contains_key(k) {
            return Err(FairnessError::UnknownGroup(k.label()));
        }
        check_threshold(t)?;
    }
    // Overrides equal to the global threshold are no-ops; dropping them keeps
    // a reset what-if report identical to the plain report.
    let thresholds: BTreeMap<GroupKey, f64> = thresholds
        .iter()
        .filter(|(_, &t)| t != options.threshold)
        .map(|(k, &t)| (k.clone(), t))
        .collect();
    if task == Task::Detection && !thresholds.is_empty() {
        return Err(MetricsError::WrongTask {
            expected: "classification",
            found: "detection",
        }
        .into());
    }

    let (overall, group_metrics) = match task {
        Task::Classification => {
            // Every record is in exactly one group, so the overall tally pools the group tallies.
            let mut tallies = groups
                .values()
                .zip(groups.keys())
                .map(|(members, k)| {
                    let t = thresholds.get(k).copied().unwrap_or(options.threshold);
                    Tally::new(members.iter().copied(), |_| t)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let per_group = tallies
                .iter_mut()
                .zip(groups.keys())
                .map(|(t, k)| t.metrics().with_group(k.clone()))
                .collect();
            (Tally::pool(&tallies).metrics(), per_group)
        }
        Task::Detection => {
            let overall = detection_metrics(records.iter().copied(), options.iou_threshold)?;
            let per_group = groups
                .iter()
                .map(|(k, members)| {
                    detection_metrics(members.iter().copied(), options.iou_threshold).map(|m| m.with_group(k.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            (overall, per_group)
        }
    };
    let disparity = summarize(&group_metrics, metric)?;
    Ok(FairnessReport {
        task,
        axes: axes.iter().map(|a| a.as_ref().to_owned()).collect(),
        metric,
        threshold: (task == Task::Classification).then_some(options.threshold),
        thresholds,
        iou_threshold: (task == Task::Detection).then_some(options.iou_threshold),
        overall,
        groups: group_metrics,
        disparity,
    })
}

/// Per-group metrics for records of a known task, in canonical group order.
pub(crate) fn group_metrics<S: AsRef<str>>(
    records: &[&PredictionRecord],
    axes: &[S],
    task: Task,
    options: &ReportOptions,
) -> Result<Vec<GroupMetrics>, FairnessError> {
    let groups = crate::slicing::partition_unchecked(records.iter().copied(), axes);
    groups
        .into_iter()
        .map(|(k, members)| {
            let m = match task {
                Task::Classification => Tally::new(members.iter().copied(), |_| options.threshold)?.metrics(),
                Task::Detection => detection_metrics(members.iter().copied(), options.iou_threshold)?,
            };
            Ok(m.with_group(k))
        })
        .collect()
}

/// All group keys appearing in `records` for `axes`.
pub(crate) fn group_universe<S: AsRef<str>>(records: &[PredictionRecord], axes: &[S]) -> BTreeSet<GroupKey> {
    crate::slicing::partition_unchecked(records.iter(), axes)
        .into_keys()
        .collect()
}
