use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, RawQuery, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};

use super::{ApiError, AppState, DEFAULT_MAX_POINTS};
use crate::aggregation::{reservoir_downsample, window_aggregate, ColumnRef, ScalarPoint, ScalarSeries, WindowStat};
use crate::correlation::correlation_matrix;
use crate::fairness::{
    disparity_timeline, fairness_report, select_records, stability_report, what_if_reconfigure, EnvFilter,
    FairnessError, FairnessReport, ReportOptions,
};
use crate::ingest::{Env, FileWarning, Run, RunCatalog, RunHealth, Task};
use crate::slicing::{vocabulary, GroupKey, Metric};

type ApiResult = Result<Response, ApiError>;

/// Slicing axes as a JSON list or a comma-separated string.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum AxesInput {
    List(Vec<String>),
    Csv(String),
}

impl AxesInput {
    pub fn to_vec(&self) -> Vec<String> {
        match self {
            AxesInput::List(v) => v.clone(),
            AxesInput::Csv(s) => split_csv(s),
        }
    }
}

fn split_csv(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

fn json_body(body: Bytes) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn to_json(value: &impl Serialize) -> Result<String, ApiError> {
    serde_json::to_string(value).map_err(|e| ApiError::internal(e.to_string()))
}

/// Computes (or fetches from cache) a response body off the async workers.
async fn respond<F>(state: Arc<AppState>, key: String, compute: F) -> ApiResult
where
    F: FnOnce(&AppState, &RunCatalog) -> Result<String, ApiError> + Send + 'static,
{
    let permit = state
        .compute
        .acquire()
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let worker = Arc::clone(&state);
    let body = tokio::task::spawn_blocking(move || {
        let state = worker;
        let catalog = state.snapshot();
        state.cached(catalog.version, key, || compute(&state, &catalog))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    drop(permit);
    Ok(json_body(body))
}

fn find_run<'a>(catalog: &'a RunCatalog, run: &str) -> Result<&'a Arc<Run>, ApiError> {
    catalog.get(run).ok_or_else(|| ApiError::unknown_run(run))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub scalar_tags: Vec<String>,
    pub series_lengths: BTreeMap<String, usize>,
    pub config: BTreeMap<String, String>,
    /// Config entries whose value is not shared by every run in the catalog.
    pub config_deltas: BTreeMap<String, String>,
    pub task: Option<Task>,
    pub predictions: usize,
    pub epochs: Vec<u32>,
    pub envs: Vec<Env>,
    pub attributes: BTreeMap<String, BTreeSet<String>>,
    pub health: RunHealth,
}

fn config_deltas(catalog: &RunCatalog) -> BTreeMap<String, BTreeMap<String, String>> {
    let runs: Vec<&Arc<Run>> = catalog.runs().collect();
    let keys: BTreeSet<&String> = runs.iter().flat_map(|r| r.config.keys()).collect();
    let shared: BTreeSet<&String> = keys
        .into_iter()
        .filter(|k| {
            let first = runs.first().and_then(|r| r.config.get(*k));
            runs.iter().all(|r| r.config.get(*k) == first)
        })
        .collect();
    runs.iter()
        .map(|r| {
            let deltas = r
                .config
                .iter()
                .filter(|(k, _)| !shared.contains(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            (r.run_id.clone(), deltas)
        })
        .collect()
}

pub(crate) fn run_summaries(catalog: &RunCatalog) -> Vec<RunSummary> {
    let mut deltas = config_deltas(catalog);
    catalog
        .runs()
        .map(|r| RunSummary {
            run_id: r.run_id.clone(),
            scalar_tags: r.scalar_tags().map(str::to_owned).collect(),
            series_lengths: r.series.iter().map(|(t, s)| (t.clone(), s.len())).collect(),
            config: r.config.clone(),
            config_deltas: deltas.remove(&r.run_id).unwrap_or_default(),
            task: r.predictions.first().map(|p| p.task()),
            predictions: r.predictions.len(),
            epochs: r
                .predictions
                .iter()
                .map(|p| p.epoch)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
            envs: r
                .predictions
                .iter()
                .map(|p| p.env)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
            attributes: vocabulary(r.predictions.iter()),
            health: r.health.clone(),
        })
        .collect()
}

pub async fn runs(State(state): State<Arc<AppState>>) -> ApiResult {
    respond(state, "runs".into(), |_, catalog| to_json(&run_summaries(catalog))).await
}

/// Downsampling applied when a series exceeds `max_points`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarMode {
    /// Seeded reservoir sample keeping first and last points.
    #[default]
    Reservoir,
    /// Fixed-width step windows reduced by the named statistic.
    Mean,
    Min,
    Max,
    Last,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScalarsQuery {
    pub run: String,
    pub tag: String,
    pub max_points: Option<usize>,
    #[serde(default)]
    pub mode: ScalarMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarsResponse {
    pub run: String,
    pub tag: String,
    pub mode: ScalarMode,
    pub max_points: usize,
    pub original_length: usize,
    /// Window width in steps for window modes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
    pub points: Vec<ScalarPoint>,
}

pub(crate) fn downsample(
    run: &str,
    series: &ScalarSeries,
    max_points: usize,
    mode: ScalarMode,
    seed: u64,
) -> Result<ScalarsResponse, ApiError> {
    let stat = match mode {
        ScalarMode::Reservoir => None,
        ScalarMode::Mean => Some(WindowStat::Mean),
        ScalarMode::Min => Some(WindowStat::Min),
        ScalarMode::Max => Some(WindowStat::Max),
        ScalarMode::Last => Some(WindowStat::Last),
    };
    let (points, window) = match stat {
        None => (reservoir_downsample(series, max_points, seed)?.points, None),
        Some(_) if series.len() <= max_points => (series.points.clone(), None),
        Some(stat) => {
            if max_points == 0 {
                return Err(ApiError::bad_request("INVALID_WINDOW", "max_points must be positive"));
            }
            let last = series.points.last().map_or(0, |p| p.step);
            let window = (last / max_points as u64) + 1;
            (window_aggregate(series, window, stat)?.points, Some(window))
        }
    };
    Ok(ScalarsResponse {
        run: run.to_owned(),
        tag: series.tag.clone(),
        mode,
        max_points,
        original_length: series.len(),
        window,
        points,
    })
}

pub async fn scalars(
    State(state): State<Arc<AppState>>,
    RawQuery(raw): RawQuery,
    query: Result<Query<ScalarsQuery>, QueryRejection>,
) -> ApiResult {
    let Query(q) = query?;
    respond(
        state,
        format!("scalars?{}", raw.unwrap_or_default()),
        move |st, catalog| {
            let series = catalog.series(&q.run, &q.tag).ok_or_else(|| {
                ApiError::not_found("UNKNOWN_COLUMN", format!("unknown column {}/{}", q.run, q.tag))
                    .with_detail(serde_json::json!({ "run": q.run, "tag": q.tag }))
            })?;
            let max_points = q.max_points.unwrap_or(DEFAULT_MAX_POINTS);
            to_json(&downsample(&q.run, series, max_points, q.mode, st.seed())?)
        },
    )
    .await
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FairnessRequest {
    pub run: String,
    pub axes: AxesInput,
    pub metric: Option<Metric>,
    pub threshold: Option<f64>,
    pub iou_threshold: Option<f64>,
    pub epoch: Option<u32>,
    #[serde(default)]
    pub env: EnvFilter,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub run: String,
    pub axes: AxesInput,
    /// Group label → decision threshold.
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    pub metric: Option<Metric>,
    pub threshold: Option<f64>,
    pub iou_threshold: Option<f64>,
    pub epoch: Option<u32>,
    #[serde(default)]
    pub env: EnvFilter,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FairnessResponse {
    pub run: String,
    pub epoch: u32,
    pub env: EnvFilter,
    pub records: usize,
    #[serde(flatten)]
    pub report: FairnessReport,
}

fn report_options(metric: Option<Metric>, threshold: Option<f64>, iou: Option<f64>) -> ReportOptions {
    let d = ReportOptions::default();
    ReportOptions {
        metric,
        threshold: threshold.unwrap_or(d.threshold),
        iou_threshold: iou.unwrap_or(d.iou_threshold),
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("BAD_REQUEST", format!("invalid request body: {e}")))
}

#[allow(clippy::too_many_arguments)]
fn compute_report(
    catalog: &RunCatalog,
    run: &str,
    axes: &AxesInput,
    thresholds: &BTreeMap<String, f64>,
    options: &ReportOptions,
    epoch: Option<u32>,
    env: EnvFilter,
) -> Result<FairnessResponse, ApiError> {
    let run_ref = find_run(catalog, run)?;
    let (records, epoch) = select_records(&run_ref.predictions, env, epoch);
    let (Some(epoch), false) = (epoch, records.is_empty()) else {
        return Err(FairnessError::NoPredictions.into());
    };
    let axes = axes.to_vec();
    let report = if thresholds.is_empty() {
        fairness_report(&records, &axes, options)?
    } else {
        let parsed = thresholds
            .iter()
            .map(|(label, &t)| {
                GroupKey::parse(label)
                    .map(|k| (k, t))
                    .ok_or_else(|| ApiError::from(FairnessError::UnknownGroup(label.clone())))
            })
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        what_if_reconfigure(&records, &axes, &parsed, options)?
    };
    Ok(FairnessResponse {
        run: run.to_owned(),
        epoch,
        env,
        records: records.len(),
        report,
    })
}

pub async fn fairness(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: FairnessRequest = parse_body(&body)?;
    let key = format!("fairness|{}", String::from_utf8_lossy(&body));
    respond(state, key, move |_, catalog| {
        let options = report_options(req.metric, req.threshold, req.iou_threshold);
        to_json(&compute_report(
            catalog,
            &req.run,
            &req.axes,
            &BTreeMap::new(),
            &options,
            req.epoch,
            req.env,
        )?)
    })
    .await
}

pub async fn whatif(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: WhatIfRequest = parse_body(&body)?;
    let key = format!("whatif|{}", String::from_utf8_lossy(&body));
    respond(state, key, move |_, catalog| {
        let options = report_options(req.metric, req.threshold, req.iou_threshold);
        to_json(&compute_report(
            catalog,
            &req.run,
            &req.axes,
            &req.thresholds,
            &options,
            req.epoch,
            req.env,
        )?)
    })
    .await
}

#[derive(Debug, Clone, Deserialize)]
pub struct CorrelationQuery {
    /// Comma-separated `run/tag` columns.
    pub columns: String,
}

pub async fn correlation(
    State(state): State<Arc<AppState>>,
    query: Result<Query<CorrelationQuery>, QueryRejection>,
) -> ApiResult {
    let Query(q) = query?;
    let columns = split_csv(&q.columns)
        .iter()
        .map(|c| {
            ColumnRef::parse(c)
                .ok_or_else(|| ApiError::bad_request("BAD_COLUMN", format!("column {c:?} is not of the form run/tag")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let key = format!("correlation|{}", q.columns);
    respond(state, key, move |_, catalog| {
        to_json(&correlation_matrix(&columns, catalog)?)
    })
    .await
}

#[derive(Debug, Clone, Deserialize)]
pub struct TimelineQuery {
    pub run: String,
    pub axes: String,
    pub metric: Option<Metric>,
    #[serde(default)]
    pub env: EnvFilter,
    pub threshold: Option<f64>,
    pub iou_threshold: Option<f64>,
}

pub async fn timeline(
    State(state): State<Arc<AppState>>,
    RawQuery(raw): RawQuery,
    query: Result<Query<TimelineQuery>, QueryRejection>,
) -> ApiResult {
    let Query(q) = query?;
    respond(
        state,
        format!("timeline?{}", raw.unwrap_or_default()),
        move |_, catalog| {
            let run = find_run(catalog, &q.run)?;
            let options = report_options(q.metric, q.threshold, q.iou_threshold);
            let t = disparity_timeline(&run.predictions, &split_csv(&q.axes), q.metric, q.env, &options)?;
            to_json(&t)
        },
    )
    .await
}

#[derive(Debug, Clone, Deserialize)]
pub struct InOutQuery {
    pub run: String,
    pub axes: String,
    pub metric: Option<Metric>,
    pub epoch: Option<u32>,
    pub threshold: Option<f64>,
    pub iou_threshold: Option<f64>,
}

pub async fn inout(
    State(state): State<Arc<AppState>>,
    RawQuery(raw): RawQuery,
    query: Result<Query<InOutQuery>, QueryRejection>,
) -> ApiResult {
    let Query(q) = query?;
    respond(
        state,
        format!("inout?{}", raw.unwrap_or_default()),
        move |_, catalog| {
            let run = find_run(catalog, &q.run)?;
            if run.predictions.is_empty() {
                return Err(FairnessError::NoPredictions.into());
            }
            let options = report_options(q.metric, q.threshold, q.iou_threshold);
            to_json(&stability_report(
                &run.predictions,
                &split_csv(&q.axes),
                q.metric,
                q.epoch,
                &options,
            )?)
        },
    )
    .await
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct BundleQuery {
    /// Comma-separated run ids; all runs when absent.
    pub runs: Option<String>,
    /// Comma-separated tags; every tag of each run when absent.
    pub tags: Option<String>,
    pub max_points: Option<usize>,
}

/// Everything a dashboard refresh needs: the run list plus downsampled series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleResponse {
    pub version: u64,
    pub runs: Vec<RunSummary>,
    /// run → tag → reservoir-downsampled series.
    pub scalars: BTreeMap<String, BTreeMap<String, SeriesColumns>>,
}

/// A series in column form: `steps[i]`, `wall_times[i]` and `values[i]` make one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesColumns {
    pub original_length: usize,
    pub steps: Vec<u64>,
    pub wall_times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SeriesColumns {
    fn new(original_length: usize, points: &[ScalarPoint]) -> Self {
        Self {
            original_length,
            steps: points.iter().map(|p| p.step).collect(),
            wall_times: points.iter().map(|p| p.wall_time).collect(),
            values: points.iter().map(|p| p.value).collect(),
        }
    }
}

pub async fn bundle(
    State(state): State<Arc<AppState>>,
    RawQuery(raw): RawQuery,
    query: Result<Query<BundleQuery>, QueryRejection>,
) -> ApiResult {
    let Query(q) = query?;
    respond(
        state,
        format!("bundle?{}", raw.unwrap_or_default()),
        move |st, catalog| {
            let wanted_runs = q.runs.as_deref().map(split_csv);
            if let Some(ids) = &wanted_runs {
                if let Some(missing) = ids.iter().find(|id| catalog.get(id).is_none()) {
                    return Err(ApiError::unknown_run(missing));
                }
            }
            let tags = q.tags.as_deref().map(split_csv);
            let max_points = q.max_points.unwrap_or(DEFAULT_MAX_POINTS);
            let runs: Vec<RunSummary> = run_summaries(catalog)
                .into_iter()
                .filter(|r| wanted_runs.as_ref().is_none_or(|ids| ids.contains(&r.run_id)))
                .collect();
            let mut scalars = BTreeMap::new();
            for summary in &runs {
                let run = find_run(catalog, &summary.run_id)?;
                let mut per_tag = BTreeMap::new();
                for (tag, series) in &run.series {
                    if tags.as_ref().is_some_and(|t| !t.contains(tag)) {
                        continue;
                    }
                    let sampled = reservoir_downsample(series, max_points, st.seed())?;
                    per_tag.insert(tag.clone(), SeriesColumns::new(series.len(), &sampled.points));
                }
                scalars.insert(run.run_id.clone(), per_tag);
            }
            to_json(&BundleResponse {
                version: catalog.version,
                runs,
                scalars,
            })
        },
    )
    .await
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HealthResponse {
    pub status: &'static str,
    pub version: u64,
    pub runs: usize,
    pub event_files: usize,
    pub events_read: u64,
    pub dropped_non_finite: u64,
    pub skipped_lines: usize,
    pub prediction_records: usize,
    pub scans: u64,
    pub last_scan_ms: f64,
    pub rescan_secs: f64,
    /// Catalog-level warnings followed by per-run file warnings.
    pub warnings: Vec<FileWarning>,
}

pub async fn health(State(state): State<Arc<AppState>>) -> ApiResult {
    use std::sync::atomic::Ordering;
    let catalog = state.snapshot();
    let runs: Vec<&Arc<Run>> = catalog.runs().collect();
    let mut warnings = catalog.warnings.clone();
    warnings.extend(runs.iter().flat_map(|r| {
        r.health.warnings.iter().map(|w| FileWarning {
            file: format!("{}/{}", r.run_id, w.file),
            ..w.clone()
        })
    }));
    let body = HealthResponse {
        status: "ok",
        version: catalog.version,
        runs: runs.len(),
        event_files: runs.iter().map(|r| r.health.event_files).sum(),
        events_read: runs.iter().map(|r| r.health.events_read).sum(),
        dropped_non_finite: runs.iter().map(|r| r.health.dropped_non_finite).sum(),
        skipped_lines: runs.iter().map(|r| r.health.skipped_lines).sum(),
        prediction_records: runs.iter().map(|r| r.predictions.len()).sum(),
        scans: state.scans.load(Ordering::Relaxed),
        last_scan_ms: state.last_scan_micros.load(Ordering::Relaxed) as f64 / 1000.0,
        rescan_secs: state.rescan_interval().as_secs_f64(),
        warnings,
    };
    Ok(json_body(Bytes::from(to_json(&body)?)))
}
