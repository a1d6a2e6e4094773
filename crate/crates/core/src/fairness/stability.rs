use std::collections::BTreeMap;

use serde::Serialize;

use super::{
    check_metric, default_metric, group_metrics, group_universe, max_pairwise_gap, task_of, FairnessError,
    ReportOptions,
};
use crate::ingest::{Env, PredictionRecord};
use crate::slicing::{validate_axes, vocabulary, GroupKey, GroupMetrics, Metric};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvSection {
    pub env: Env,
    pub epoch: u32,
    pub n: usize,
    /// One entry per group in the report's canonical order; groups without
    /// records here have `n == 0` and are listed in `missing_groups`.
    pub groups: Vec<GroupMetrics>,
    pub missing_groups: Vec<GroupKey>,
    /// Max pairwise gap of the reference metric over known groups present here.
    pub gap: Option<f64>,
}

/// Reference metric per group for one env, aligned with `StabilityReport::group_order`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadarSeries {
    pub env: Env,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub metric: Metric,
    pub axes: Vec<String>,
    /// Canonical group order shared by every section and radar series.
    pub group_order: Vec<GroupKey>,
    /// Present envs in `Env::ALL` order.
    pub envs: Vec<EnvSection>,
    pub absent_envs: Vec<Env>,
    pub radar: Vec<RadarSeries>,
}

impl StabilityReport {
    pub fn section(&self, env: Env) -> Option<&EnvSection> {
        self.envs.iter().find(|s| s.env == env)
    }
}

/// Disaggregated metrics per evaluation environment.
///
/// Each env is evaluated at `epoch` if given, else at its own latest epoch.
/// An env with no records is listed as absent.
pub fn stability_report<S: AsRef<str>>(
    records: &[PredictionRecord],
    axes: &[S],
    metric: Option<Metric>,
    epoch: Option<u32>,
    options: &ReportOptions,
) -> Result<StabilityReport, FairnessError> {
    let all: Vec<&PredictionRecord> = records.iter().collect();
    let task = task_of(&all)?;
    let metric = metric.unwrap_or_else(|| default_metric(task));
    check_metric(task, metric)?;
    validate_axes(axes, &vocabulary(all.iter().copied()))?;
    let group_order: Vec<GroupKey> = group_universe(records, axes).into_iter().collect();

    let mut envs = Vec::new();
    let mut absent_envs = Vec::new();
    for env in Env::ALL {
        let in_env = records.iter().filter(|r| r.env == env);
        let Some(at) = epoch.or_else(|| in_env.clone().map(|r| r.epoch).max()) else {
            absent_envs.push(env);
            continue;
        };
        let members: Vec<&PredictionRecord> = in_env.filter(|r| r.epoch == at).collect();
        if members.is_empty() {
            absent_envs.push(env);
            continue;
        }
        let mut computed: BTreeMap<GroupKey, GroupMetrics> = group_metrics(&members, axes, task, options)?
            .into_iter()
            .map(|m| (m.group.clone(), m))
            .collect();
        let groups: Vec<GroupMetrics> = group_order
            .iter()
            .map(|k| computed.remove(k).unwrap_or_else(|| GroupMetrics::empty(k.clone(), 0)))
            .collect();
        let missing_groups = groups.iter().filter(|g| g.n == 0).map(|g| g.group.clone()).collect();
        let gap = max_pairwise_gap(
            groups
                .iter()
                .filter(|g| g.n > 0 && !g.group.has_unknown())
                .filter_map(|g| g.get(metric)),
        );
        envs.push(EnvSection {
            env,
            epoch: at,
            n: members.len(),
            groups,
            missing_groups,
            gap,
        });
    }
    let radar = envs
        .iter()
        .map(|s| RadarSeries {
            env: s.env,
            values: s.groups.iter().map(|g| g.get(metric)).collect(),
        })
        .collect();
    Ok(StabilityReport {
        metric,
        axes: axes.iter().map(|a| a.as_ref().to_owned()).collect(),
        group_order,
        envs,
        absent_envs,
        radar,
    })
}
