use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{
    check_metric, default_metric, group_metrics, group_universe, max_pairwise_gap, task_of, EnvFilter, FairnessError,
    ReportOptions,
};
use crate::ingest::PredictionRecord;
use crate::slicing::{validate_axes, vocabulary, GroupKey, Metric};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelinePoint {
    pub epoch: u32,
    /// Max pairwise gap of the metric across known groups. `None` when any
    /// group is empty at this epoch or fewer than two groups define the metric.
    pub gap: Option<f64>,
    /// Per-group metric, covering every group seen at any epoch.
    pub groups: BTreeMap<GroupKey, Option<f64>>,
    /// Per-group record counts at this epoch.
    pub support: BTreeMap<GroupKey, usize>,
    /// Error code explaining an undefined gap, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisparityTimeline {
    pub metric: Metric,
    pub axes: Vec<String>,
    pub env: EnvFilter,
    /// Strictly increasing by epoch.
    pub points: Vec<TimelinePoint>,
}

impl DisparityTimeline {
    /// First epoch whose gap strictly exceeds `level`.
    pub fn first_epoch_exceeding(&self, level: f64) -> Option<u32> {
        self.points
            .iter()
            .find(|p| p.gap.is_some_and(|g| g > level))
            .map(|p| p.epoch)
    }

    pub fn gaps(&self) -> impl Iterator<Item = (u32, Option<f64>)> + '_ {
        self.points.iter().map(|p| (p.epoch, p.gap))
    }
}

/// Per-epoch group metric and gap across training.
pub fn disparity_timeline<S: AsRef<str>>(
    records: &[PredictionRecord],
    axes: &[S],
    metric: Option<Metric>,
    env: EnvFilter,
    options: &ReportOptions,
) -> Result<DisparityTimeline, FairnessError> {
    let selected: Vec<&PredictionRecord> = records.iter().filter(|r| env.admits(r.env)).collect();
    let mut by_epoch: BTreeMap<u32, Vec<&PredictionRecord>> = BTreeMap::new();
    for &r in &selected {
        by_epoch.entry(r.epoch).or_default().push(r);
    }
    if by_epoch.len() < 2 {
        return Err(FairnessError::NoEpochData);
    }
    let task = task_of(&selected)?;
    let metric = metric.unwrap_or_else(|| default_metric(task));
    check_metric(task, metric)?;
    validate_axes(axes, &vocabulary(selected.iter().copied()))?;
    let universe: BTreeSet<GroupKey> = group_universe(records, axes)
        .into_iter()
        .filter(|k| !k.has_unknown())
        .collect();

    let mut points = Vec::with_capacity(by_epoch.len());
    for (epoch, members) in by_epoch {
        let metrics = group_metrics(&members, axes, task, options)?;
        let mut groups: BTreeMap<GroupKey, Option<f64>> = universe.iter().map(|k| (k.clone(), None)).collect();
        let mut support: BTreeMap<GroupKey, usize> = universe.iter().map(|k| (k.clone(), 0)).collect();
        for m in metrics.iter().filter(|m| !m.group.has_unknown()) {
            groups.insert(m.group.clone(), m.get(metric));
            support.insert(m.group.clone(), m.n);
        }
        let (gap, error) = if universe.len() < 2 {
            (None, Some("INSUFFICIENT_GROUPS"))
        } else if support.values().any(|&n| n == 0) {
            (None, Some("EMPTY_GROUP"))
        } else {
            match max_pairwise_gap(groups.values().flatten().copied()) {
                Some(g) => (Some(g), None),
                None => (None, Some("INSUFFICIENT_GROUPS")),
            }
        };
        points.push(TimelinePoint {
            epoch,
            gap,
            groups,
            support,
            error,
        });
    }
    Ok(DisparityTimeline {
        metric,
        axes: axes.iter().map(|a| a.as_ref().to_owned()).collect(),
        env,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Env;

    fn rec(epoch: u32, g: &str, score: f64, label: bool) -> PredictionRecord {
        PredictionRecord::classification(
            format!("{epoch}-{g}-{score}"),
            epoch,
            Env::InVal,
            [("g".to_string(), g.to_string())].into(),
            score,
            label,
        )
    }

    #[test]
    fn gap_per_epoch() {
        let records = vec![
            rec(1, "a", 0.9, true),
            rec(1, "b", 0.9, true),
            rec(2, "a", 0.9, true),
            rec(2, "b", 0.1, true),
        ];
        let t = disparity_timeline(&records, &["g"], None, EnvFilter::In, &Default::default()).unwrap();
        assert_eq!(t.metric, Metric::Accuracy);
        assert_eq!(t.gaps().collect::<Vec<_>>(), vec![(1, Some(0.0)), (2, Some(1.0))]);
        assert_eq!(t.first_epoch_exceeding(0.5), Some(2));
    }

    #[test]
    fn empty_group_gives_undefined_gap() {
        let records = vec![rec(1, "a", 0.9, true), rec(1, "b", 0.9, true), rec(2, "a", 0.9, true)];
        let t = disparity_timeline(&records, &["g"], None, EnvFilter::In, &Default::default()).unwrap();
        assert_eq!(t.points[1].gap, None);
        assert_eq!(t.points[1].error, Some("EMPTY_GROUP"));
    }

    #[test]
    fn single_group_reported_per_epoch() {
        let records = vec![rec(1, "a", 0.9, true), rec(2, "a", 0.9, true)];
        let t = disparity_timeline(&records, &["g"], None, EnvFilter::In, &Default::default()).unwrap();
        assert!(t.points.iter().all(|p| p.error == Some("INSUFFICIENT_GROUPS")));
    }

    #[test]
    fn needs_two_epochs() {
        let records = vec![rec(1, "a", 0.9, true), rec(1, "b", 0.9, true)];
        let err = disparity_timeline(&records, &["g"], None, EnvFilter::In, &Default::default()).unwrap_err();
        assert_eq!(err.code(), "NO_EPOCH_DATA");
    }
}
