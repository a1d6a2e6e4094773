//! Step-axis alignment and bounded-size downsampling of scalar series.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::RunCatalog;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarPoint {
    pub step: u64,
    pub wall_time: f64,
    pub value: f64,
}

/// A tag's points ordered by strictly increasing step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSeries {
    pub tag: String,
    pub points: Vec<ScalarPoint>,
}

impl ScalarSeries {
    /// Normalizes `points`: stable sort by step, then last-write-wins on duplicate steps.
    pub fn new(tag: impl Into<String>, mut points: Vec<ScalarPoint>) -> Self {
        points.sort_by_key(|p| p.step);
        let mut out: Vec<ScalarPoint> = Vec::with_capacity(points.len());
        for p in points {
            match out.last_mut() {
                Some(last) if last.step == p.step => *last = p,
                _ => out.push(p),
            }
        }
        Self {
            tag: tag.into(),
            points: out,
        }
    }

    /// Builds a series from `(step, value)` pairs with zero wall time.
    pub fn from_values(tag: impl Into<String>, values: impl IntoIterator<Item = (u64, f64)>) -> Self {
        Self::new(
            tag,
            values
                .into_iter()
                .map(|(step, value)| ScalarPoint {
                    step,
                    wall_time: 0.0,
                    value,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn steps(&self) -> impl Iterator<Item = u64> + '_ {
        self.points.iter().map(|p| p.step)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.value)
    }

    /// Value at exactly `step`, if present.
    pub fn value_at(&self, step: u64) -> Option<f64> {
        self.points
            .binary_search_by_key(&step, |p| p.step)
            .ok()
            .map(|i| self.points[i].value)
    }

    /// Last value at or before `step`.
    pub fn value_at_or_before(&self, step: u64) -> Option<f64> {
        let idx = self.points.partition_point(|p| p.step <= step);
        idx.checked_sub(1).map(|i| self.points[i].value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AggregationError {
    #[error("reservoir size must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("window width must be positive")]
    InvalidWindow,
    #[error("unknown column {run}/{tag}")]
    UnknownColumn { run: String, tag: String },
}

impl AggregationError {
    pub fn code(&self) -> &'static str {
        match self {
            AggregationError::InvalidK(_) => "INVALID_K",
            AggregationError::InvalidWindow => "INVALID_WINDOW",
            AggregationError::UnknownColumn { .. } => "UNKNOWN_COLUMN",
        }
    }
}

/// Caps a series at `k` points.
///
/// The first and the most recent point are always kept. The remaining `k - 2`
/// slots are filled by a classic reservoir pass over the interior points, so
/// every interior point is retained with equal probability. The output is in
/// step order and depends only on `(series, k, seed)`.
pub fn reservoir_downsample(series: &ScalarSeries, k: usize, seed: u64) -> Result<ScalarSeries, AggregationError> {
    if k < 2 {
        return Err(AggregationError::InvalidK(k));
    }
    let n = series.points.len();
    if n <= k {
        return Ok(series.clone());
    }
    let slots = k - 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reservoir: Vec<usize> = (1..=slots).collect();
    for (seen, idx) in (slots + 1..n - 1).enumerate() {
        let j = rng.gen_range(0..slots + seen + 1);
        if j < slots {
            reservoir[j] = idx;
        }
    }
    reservoir.sort_unstable();
    let mut points = Vec::with_capacity(k);
    points.push(series.points[0]);
    points.extend(reservoir.into_iter().map(|i| series.points[i]));
    points.push(series.points[n - 1]);
    Ok(ScalarSeries {
        tag: series.tag.clone(),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    /// Only steps present in every column.
    #[default]
    Intersect,
    /// Union of steps, each column carrying its last value forward.
    CarryForward,
}

/// A `(run_id, tag)` pair naming one series in a catalog.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub run: String,
    pub tag: String,
}

impl ColumnRef {
    pub fn new(run: impl Into<String>, tag: impl Into<String>) -> Self {
        Self {
            run: run.into(),
            tag: tag.into(),
        }
    }

    /// Parses `run/tag`, splitting at the first `/` (tags may contain slashes).
    pub fn parse(s: &str) -> Option<Self> {
        let (run, tag) = s.split_once('/')?;
        (!run.is_empty() && !tag.is_empty()).then(|| Self::new(run, tag))
    }
}

impl std::fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.run, self.tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignedColumn {
    pub column: ColumnRef,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignedTable {
    pub steps: Vec<u64>,
    /// In request order; every column has `steps.len()` entries.
    pub columns: Vec<AlignedColumn>,
}

impl AlignedTable {
    pub fn column(&self, c: &ColumnRef) -> Option<&[Option<f64>]> {
        self.columns
            .iter()
            .find(|col| &col.column == c)
            .map(|col| col.values.as_slice())
    }
}

pub fn lookup_columns<'a>(
    columns: &[ColumnRef],
    catalog: &'a RunCatalog,
) -> Result<Vec<&'a ScalarSeries>, AggregationError> {
    columns
        .iter()
        .map(|c| {
            catalog
                .series(&c.run, &c.tag)
                .ok_or_else(|| AggregationError::UnknownColumn {
                    run: c.run.clone(),
                    tag: c.tag.clone(),
                })
        })
        .collect()
}

pub fn align_series(
    columns: &[ColumnRef],
    catalog: &RunCatalog,
    mode: AlignMode,
) -> Result<AlignedTable, AggregationError> {
    let series = lookup_columns(columns, catalog)?;
    Ok(align(columns, &series, mode))
}

/// Aligns already-resolved series.
pub fn align(columns: &[ColumnRef], series: &[&ScalarSeries], mode: AlignMode) -> AlignedTable {
    let steps: Vec<u64> = match mode {
        AlignMode::Intersect => {
            let mut iter = series.iter();
            let mut common: BTreeSet<u64> = iter.next().map(|s| s.steps().collect()).unwrap_or_default();
            for s in iter {
                let other: BTreeSet<u64> = s.steps().collect();
                common.retain(|st| other.contains(st));
            }
            common.into_iter().collect()
        }
        AlignMode::CarryForward => series
            .iter()
            .flat_map(|s| s.steps())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let columns = columns
        .iter()
        .zip(series)
        .map(|(c, s)| AlignedColumn {
            column: c.clone(),
            values: steps
                .iter()
                .map(|&st| match mode {
                    AlignMode::Intersect => s.value_at(st),
                    AlignMode::CarryForward => s.value_at_or_before(st),
                })
                .collect(),
        })
        .collect();
    AlignedTable { steps, columns }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStat {
    Mean,
    Min,
    Max,
    Last,
}

/// One point per non-empty window `[n*w, (n+1)*w)`, placed at the window start.
pub fn window_aggregate(
    series: &ScalarSeries,
    window: u64,
    stat: WindowStat,
) -> Result<ScalarSeries, AggregationError> {
    if window == 0 {
        return Err(AggregationError::InvalidWindow);
    }
    let mut buckets: BTreeMap<u64, Vec<&ScalarPoint>> = BTreeMap::new();
    for p in &series.points {
        buckets.entry(p.step / window).or_default().push(p);
    }
    let points = buckets
        .into_iter()
        .map(|(n, members)| {
            let values = members.iter().map(|p| p.value);
            let value = match stat {
                WindowStat::Mean => values.sum::<f64>() / members.len() as f64,
                WindowStat::Min => values.fold(f64::INFINITY, f64::min),
                WindowStat::Max => values.fold(f64::NEG_INFINITY, f64::max),
                WindowStat::Last => members.last().expect("non-empty").value,
            };
            ScalarPoint {
                step: n * window,
                wall_time: members.last().expect("non-empty").wall_time,
                value,
            }
        })
        .collect();
    Ok(ScalarSeries {
        tag: series.tag.clone(),
        points,
    })
}
