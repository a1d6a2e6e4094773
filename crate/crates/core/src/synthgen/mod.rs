//! Deterministic synthetic runs with planted subgroup behaviour.
//!
//! Every generated run directory holds an event file, a prediction log, a
//! `config.json` and a `truth.json` manifest with the analytic values the
//! generator planted. [`verify`] re-ingests a directory and checks the
//! measurements against that manifest.

mod kumaraswamy;
mod scenarios;
mod verify;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::event::{encode_file_version, encode_scalar_event};
use crate::ingest::frame::write_frame;
use crate::ingest::predictions::write_prediction_log;
use crate::ingest::{Env, PredictionRecord, CONFIG_FILE, PREDICTIONS_FILE};
use crate::slicing::{GroupKey, Metric};

pub use kumaraswamy::Kumaraswamy;
pub use scenarios::{baseline, detection_fixture, lr_compare, mitigated, table2, DetectionFixture, Scenario};
pub use verify::{verify, Mismatch, VerifyReport};

pub const TRUTH_FILE: &str = "truth.json";
/// Shape parameter shared by every generated score distribution.
pub const SCORE_SHAPE: f64 = 2.0;
const BASE_WALL_TIME: f64 = 1_700_000_000.0;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),
    #[error("{} of {} checks failed", .0.mismatches.len(), .0.checks)]
    Mismatch(VerifyReport),
    #[error("malformed truth manifest: {0}")]
    BadTruth(String),
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl SynthError {
    pub fn code(&self) -> &'static str {
        match self {
            SynthError::InvalidSpec(_) => "INVALID_SPEC",
            SynthError::Mismatch(_) => "MISMATCH",
            SynthError::BadTruth(_) => "BAD_TRUTH",
            SynthError::Ingest(e) => e.code(),
            SynthError::Io(_) => "IO_ERROR",
        }
    }
}

/// A value over epochs: a constant or piecewise-linear knots `(epoch, value)`,
/// held flat outside the knot range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Curve {
    Constant(f64),
    Knots(Vec<(f64, f64)>),
}

impl Curve {
    pub fn at(&self, epoch: f64) -> f64 {
        match self {
            Curve::Constant(v) => *v,
            Curve::Knots(knots) => {
                let Some(&(first_e, first_v)) = knots.first() else {
                    return f64::NAN;
                };
                if epoch <= first_e {
                    return first_v;
                }
                for w in knots.windows(2) {
                    let ((e0, v0), (e1, v1)) = (w[0], w[1]);
                    if epoch <= e1 {
                        return v0 + (v1 - v0) * (epoch - e0) / (e1 - e0);
                    }
                }
                knots[knots.len() - 1].1
            }
        }
    }

    /// Samples `f` at every integer epoch in `1..=epochs`.
    pub fn sampled(epochs: u32, f: impl Fn(f64) -> f64) -> Self {
        Curve::Knots((1..=epochs).map(|e| (f64::from(e), f(f64::from(e)))).collect())
    }
}

/// One planted subgroup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    /// Attribute values; axes the group omits fall into the UNKNOWN bucket.
    pub attrs: BTreeMap<String, String>,
    /// Population share; all weights sum to 1.
    pub weight: f64,
    /// Fraction of positive labels.
    pub prevalence: f64,
    /// `P(score >= threshold | y = 1)` per epoch.
    pub tpr: Curve,
    /// `P(score >= threshold | y = 0)` per epoch.
    pub fpr: Curve,
}

/// Rate deltas for an extra environment emitted at the final epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvShift {
    #[serde(default = "default_shift_env")]
    pub env: Env,
    /// Records emitted, as a fraction of `records_per_epoch`.
    pub fraction: f64,
    /// Group label → additive TPR delta.
    #[serde(default)]
    pub tpr_delta: BTreeMap<String, f64>,
    /// Group label → additive FPR delta.
    #[serde(default)]
    pub fpr_delta: BTreeMap<String, f64>,
}

fn default_shift_env() -> Env {
    Env::Out
}

/// Shapes of the training curves written to the event file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurves {
    pub steps_per_epoch: u64,
    /// Loss and gradient norm are logged every this many steps.
    pub log_every: u64,
    pub loss_initial: f64,
    pub loss_final: f64,
    /// Exponential decay constant of the loss, in epochs.
    pub loss_tau: f64,
    pub loss_noise: f64,
    pub grad_norm: f64,
    /// Relative jitter of the gradient norm.
    pub grad_norm_noise: f64,
    pub learning_rate: f64,
}

impl Default for TrainingCurves {
    fn default() -> Self {
        Self {
            steps_per_epoch: 100,
            log_every: 10,
            loss_initial: 2.0,
            loss_final: 0.35,
            loss_tau: 15.0,
            loss_noise: 0.02,
            grad_norm: 1.0,
            grad_norm_noise: 0.1,
            learning_rate: 0.001,
        }
    }
}

/// Everything needed to generate one classification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Run directory name.
    pub name: String,
    pub seed: u64,
    pub epochs: u32,
    pub records_per_epoch: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Slicing axes the truth manifest is keyed by.
    pub axes: Vec<String>,
    pub groups: Vec<GroupSpec>,
    #[serde(default)]
    pub env_shift: Option<EnvShift>,
    #[serde(default)]
    pub training: TrainingCurves,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

fn default_threshold() -> f64 {
    0.5
}

impl Default for ScenarioSpec {
    /// The pilot dataset composition.
    fn default() -> Self {
        table2(0)
    }
}

impl ScenarioSpec {
    pub fn group_key(&self, g: &GroupSpec) -> GroupKey {
        GroupKey::new(self.axes.iter().map(|a| (a.clone(), g.attrs.get(a).cloned())))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return bad(format!("run name {:?} is not a plain directory name", self.name));
        }
        if self.epochs == 0 || self.records_per_epoch == 0 {
            return bad("epochs and records_per_epoch must be positive".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if self.axes.is_empty() || self.groups.is_empty() {
            return bad("need at least one axis and one group".into());
        }
        if self.training.steps_per_epoch == 0 || self.training.log_every == 0 {
            return bad("steps_per_epoch and log_every must be positive".into());
        }
        let total: f64 = self.groups.iter().map(|g| g.weight).sum();
        if self.groups.iter().any(|g| g.weight.is_nan() || g.weight <= 0.0) || (total - 1.0).abs() > 1e-9 {
            return bad(format!("weights must be positive and sum to 1 (sum {total})"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for g in &self.groups {
            let label = self.group_key(g).label();
            if !labels.insert(label.clone()) {
                return bad(format!("two groups share label {label}"));
            }
            if !(0.0..=1.0).contains(&g.prevalence) {
                return bad(format!("{label}: prevalence {} outside [0, 1]", g.prevalence));
            }
            for epoch in 1..=self.epochs {
                let (tpr, fpr) = self.rates(g, epoch, None);
                if !(tpr > 0.0 && tpr < 1.0 && fpr > 0.0 && fpr < 1.0) {
                    return bad(format!("{label}: epoch {epoch} rates ({tpr}, {fpr}) outside (0, 1)"));
                }
            }
            if let Some(shift) = &self.env_shift {
                let (tpr, fpr) = self.rates(g, self.epochs, Some(shift));
                if !(tpr > 0.0 && tpr < 1.0 && fpr > 0.0 && fpr < 1.0) {
                    return bad(format!("{label}: shifted rates ({tpr}, {fpr}) outside (0, 1)"));
                }
            }
        }
        if let Some(shift) = &self.env_shift {
            if shift.fraction.is_nan() || shift.fraction <= 0.0 {
                return bad("env_shift.fraction must be positive".into());
            }
            for label in shift.tpr_delta.keys().chain(shift.fpr_delta.keys()) {
                if !labels.contains(label) {
                    return bad(format!("env_shift names unknown group {label}"));
                }
            }
        }
        Ok(())
    }

    fn rates(&self, g: &GroupSpec, epoch: u32, shift: Option<&EnvShift>) -> (f64, f64) {
        let e = f64::from(epoch);
        let (mut tpr, mut fpr) = (g.tpr.at(e), g.fpr.at(e));
        if let Some(s) = shift {
            let label = self.group_key(g).label();
            tpr += s.tpr_delta.get(&label).copied().unwrap_or(0.0);
            fpr += s.fpr_delta.get(&label).copied().unwrap_or(0.0);
        }
        (tpr, fpr)
    }
}

/// Planted statistics of one group at one epoch and env.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTruth {
    pub n: usize,
    pub positives: usize,
    pub tpr: f64,
    pub fpr: f64,
    /// Expected values given the realized label counts.
    pub positive_rate: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTruth {
    pub epoch: u32,
    pub env: Env,
    pub n: usize,
    /// Expected overall accuracy.
    pub accuracy: f64,
    /// Max pairwise accuracy gap over groups without UNKNOWN terms.
    pub accuracy_gap: f64,
    pub dp_gap: f64,
    pub groups: BTreeMap<String, GroupTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarTruth {
    pub points: usize,
    /// Last logged value, as stored (single precision).
    pub last: f64,
}

/// Hand-computed detection metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTruth {
    pub iou_threshold: f64,
    /// Group label → mAP.
    pub groups: BTreeMap<String, f64>,
    pub overall_map: f64,
    /// Class → AP over every record.
    pub overall_per_class: BTreeMap<u32, f64>,
}

/// Contents of `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub scenario: String,
    pub run: String,
    pub seed: u64,
    pub axes: Vec<String>,
    pub metric: Metric,
    #[serde(default)]
    pub threshold: Option<f64>,
    pub records: usize,
    /// In-distribution entries in epoch order, then shifted-env entries.
    #[serde(default)]
    pub epochs: Vec<EpochTruth>,
    #[serde(default)]
    pub final_epoch: Option<u32>,
    #[serde(default)]
    pub final_accuracy: Option<f64>,
    #[serde(default)]
    pub final_gap: Option<f64>,
    #[serde(default)]
    pub scalars: BTreeMap<String, ScalarTruth>,
    #[serde(default)]
    pub detection: Option<DetectionTruth>,
}

impl Truth {
    pub fn load(run_dir: impl AsRef<Path>) -> Result<Self, SynthError> {
        let bytes = fs::read(run_dir.as_ref().join(TRUTH_FILE))?;
        serde_json::from_slice(&bytes).map_err(|e| SynthError::BadTruth(e.to_string()))
    }

    /// Entry for the given epoch and env.
    pub fn epoch(&self, epoch: u32, env: Env) -> Option<&EpochTruth> {
        self.epochs.iter().find(|e| e.epoch == epoch && e.env == env)
    }
}

/// Splits `total` into integer counts proportional to `weights` (largest remainder).
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let (fi, fj) = (raw[i] - raw[i].floor(), raw[j] - raw[j].floor());
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// `n` scores whose empirical distribution tracks `dist`: one uniform draw per
/// equal-width stratum of `[0, 1)`, mapped through the quantile function and shuffled.
fn stratified_scores(n: usize, dist: &Kumaraswamy, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut scores: Vec<f64> = (0..n)
        .map(|i| dist.quantile((i as f64 + rng.gen::<f64>()) / n as f64))
        .collect();
    scores.shuffle(rng);
    scores
}

/// Labelled scores for one group with the given rates at `threshold`.
fn group_scores(
    n: usize,
    prevalence: f64,
    tpr: f64,
    fpr: f64,
    threshold: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<(f64, bool)>, GroupTruth), SynthError> {
    let positives = ((prevalence * n as f64).round() as usize).min(n);
    let negatives = n - positives;
    let pos = Kumaraswamy::with_survival_at(SCORE_SHAPE, threshold, tpr)
        .ok_or_else(|| SynthError::InvalidSpec(format!("cannot plant tpr {tpr}")))?;
    // Negative scores are `1 - X` with `P(X <= 1 - threshold) = fpr`.
    let neg = Kumaraswamy::with_cdf_at(SCORE_SHAPE, 1.0 - threshold, fpr)
        .ok_or_else(|| SynthError::InvalidSpec(format!("cannot plant fpr {fpr}")))?;
    let mut out: Vec<(f64, bool)> = stratified_scores(positives, &pos, rng)
        .into_iter()
        .map(|s| (s, true))
        .collect();
    out.extend(
        stratified_scores(negatives, &neg, rng)
            .into_iter()
            .map(|x| (1.0 - x, false)),
    );
    let (p, q) = (positives as f64, negatives as f64);
    let truth = GroupTruth {
        n,
        positives,
        tpr,
        fpr,
        positive_rate: if n > 0 { (p * tpr + q * fpr) / n as f64 } else { 0.0 },
        accuracy: if n > 0 {
            (p * tpr + q * (1.0 - fpr)) / n as f64
        } else {
            0.0
        },
    };
    Ok((out, truth))
}

fn max_gap(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

fn epoch_block(
    spec: &ScenarioSpec,
    epoch: u32,
    env: Env,
    total: usize,
    shift: Option<&EnvShift>,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<PredictionRecord>, EpochTruth), SynthError> {
    let weights: Vec<f64> = spec.groups.iter().map(|g| g.weight).collect();
    let counts = apportion(total, &weights);
    let mut records = Vec::with_capacity(total);
    let mut groups = BTreeMap::new();
    for (g, &n) in spec.groups.iter().zip(&counts) {
        let (tpr, fpr) = spec.rates(g, epoch, shift);
        let (scores, truth) = group_scores(n, g.prevalence, tpr, fpr, spec.threshold, rng)?;
        records.extend(scores.into_iter().map(|(score, label)| {
            PredictionRecord::classification(String::new(), epoch, env, g.attrs.clone(), score, label)
        }));
        groups.insert(spec.group_key(g).label(), truth);
    }
    records.shuffle(rng);
    for (i, r) in records.iter_mut().enumerate() {
        r.example_id = format!("{}-{epoch:04}-{i:06}", env.as_str());
    }
    let known = || {
        groups
            .iter()
            .filter(|(label, t)| t.n > 0 && !GroupKey::parse(label).is_some_and(|k| k.has_unknown()))
            .map(|(_, t)| t)
    };
    let n: usize = groups.values().map(|t| t.n).sum();
    let truth = EpochTruth {
        epoch,
        env,
        n,
        accuracy: groups.values().map(|t| t.accuracy * t.n as f64).sum::<f64>() / n as f64,
        accuracy_gap: max_gap(known().map(|t| t.accuracy)),
        dp_gap: max_gap(known().map(|t| t.positive_rate)),
        groups,
    };
    Ok((records, truth))
}

fn event_file_name(seed: u64) -> String {
    format!("events.out.tfevents.{}.fairboard.{seed}", BASE_WALL_TIME as u64)
}

/// Writes the scalar event file; returns per-tag truth.
fn write_events(
    dir: &Path,
    spec: &ScenarioSpec,
    epochs: &[EpochTruth],
    rng: &mut ChaCha8Rng,
) -> Result<BTreeMap<String, ScalarTruth>, SynthError> {
    let t = &spec.training;
    let mut out = BufWriter::new(File::create(dir.join(event_file_name(spec.seed)))?);
    write_frame(&mut out, &encode_file_version(BASE_WALL_TIME))?;
    let mut truth: BTreeMap<String, ScalarTruth> = BTreeMap::new();
    let per_epoch: BTreeMap<u32, &EpochTruth> = epochs
        .iter()
        .filter(|e| e.env == Env::InVal)
        .map(|e| (e.epoch, e))
        .collect();
    let last_step = u64::from(spec.epochs) * t.steps_per_epoch;
    for step in 0..=last_step {
        let at_epoch_end = step > 0 && step % t.steps_per_epoch == 0;
        if step % t.log_every != 0 && !at_epoch_end {
            continue;
        }
        let mut values: Vec<(&str, f32)> = Vec::new();
        if step % t.log_every == 0 {
            let progress = step as f64 / t.steps_per_epoch as f64;
            let loss = t.loss_final
                + (t.loss_initial - t.loss_final) * (-progress / t.loss_tau).exp()
                + t.loss_noise * rng.gen_range(-1.0..1.0);
            let grad = t.grad_norm * (1.0 + t.grad_norm_noise * rng.gen_range(-1.0..1.0));
            values.push(("loss", loss.max(0.0) as f32));
            values.push(("grad_norm", grad.max(0.0) as f32));
        }
        if at_epoch_end {
            let epoch = (step / t.steps_per_epoch) as u32;
            values.push(("learning_rate", t.learning_rate as f32));
            if let Some(e) = per_epoch.get(&epoch) {
                values.push(("accuracy", e.accuracy as f32));
                values.push(("fairness/accuracy_gap", e.accuracy_gap as f32));
                values.push(("fairness/dp_gap", e.dp_gap as f32));
            }
        }
        let wall = BASE_WALL_TIME + step as f64 * 0.5;
        write_frame(&mut out, &encode_scalar_event(wall, step, &values))?;
        for (tag, v) in values {
            let entry = truth
                .entry(tag.to_owned())
                .or_insert(ScalarTruth { points: 0, last: 0.0 });
            entry.points += 1;
            entry.last = f64::from(v);
        }
    }
    out.flush()?;
    Ok(truth)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), SynthError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Generates one classification run under `out_root/<spec.name>/`.
pub fn generate(spec: &ScenarioSpec, scenario: &str, out_root: impl AsRef<Path>) -> Result<PathBuf, SynthError> {
    spec.validate()?;
    let dir = out_root.as_ref().join(&spec.name);
    fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut records = Vec::with_capacity(spec.records_per_epoch * spec.epochs as usize);
    let mut epochs = Vec::new();
    for epoch in 1..=spec.epochs {
        let (block, truth) = epoch_block(spec, epoch, Env::InVal, spec.records_per_epoch, None, &mut rng)?;
        records.extend(block);
        epochs.push(truth);
    }
    if let Some(shift) = &spec.env_shift {
        let n = ((spec.records_per_epoch as f64 * shift.fraction).round() as usize).max(1);
        let (block, truth) = epoch_block(spec, spec.epochs, shift.env, n, Some(shift), &mut rng)?;
        records.extend(block);
        epochs.push(truth);
    }

    let mut log = BufWriter::new(File::create(dir.join(PREDICTIONS_FILE))?);
    write_prediction_log(&mut log, &records)?;
    log.flush()?;
    write_json(&dir.join(CONFIG_FILE), &spec.config)?;
    let scalars = write_events(&dir, spec, &epochs, &mut rng)?;

    let last = epochs.iter().find(|e| e.epoch == spec.epochs && e.env == Env::InVal);
    let truth = Truth {
        scenario: scenario.to_owned(),
        run: spec.name.clone(),
        seed: spec.seed,
        axes: spec.axes.clone(),
        metric: Metric::Accuracy,
        threshold: Some(spec.threshold),
        records: records.len(),
        final_epoch: Some(spec.epochs),
        final_accuracy: last.map(|e| e.accuracy),
        final_gap: last.map(|e| e.accuracy_gap),
        epochs,
        scalars,
        detection: None,
    };
    write_json(&dir.join(TRUTH_FILE), &truth)?;
    Ok(dir)
}

/// Writes the hand-built detection fixture under `out_root/<name>/`.
pub fn generate_detection(fixture: &DetectionFixture, out_root: impl AsRef<Path>) -> Result<PathBuf, SynthError> {
    let dir = out_root.as_ref().join(&fixture.name);
    fs::create_dir_all(&dir)?;
    let mut log = BufWriter::new(File::create(dir.join(PREDICTIONS_FILE))?);
    write_prediction_log(&mut log, &fixture.records)?;
    log.flush()?;
    write_json(&dir.join(CONFIG_FILE), &BTreeMap::from([("task", "detection")]))?;
    let truth = Truth {
        scenario: "detection".into(),
        run: fixture.name.clone(),
        seed: 0,
        axes: fixture.axes.clone(),
        metric: Metric::Ap,
        threshold: None,
        records: fixture.records.len(),
        epochs: Vec::new(),
        final_epoch: None,
        final_accuracy: None,
        final_gap: None,
        scalars: BTreeMap::new(),
        detection: Some(fixture.truth.clone()),
    };
    write_json(&dir.join(TRUTH_FILE), &truth)?;
    Ok(dir)
}

/// Generates every run of a named scenario. `spec_file` is required for `custom`.
pub fn generate_scenario(
    scenario: Scenario,
    out_root: impl AsRef<Path>,
    seed: u64,
    spec_file: Option<&Path>,
) -> Result<Vec<PathBuf>, SynthError> {
    let out_root = out_root.as_ref();
    let name = scenario.as_str();
    match scenario {
        Scenario::Baseline => Ok(vec![generate(&baseline(seed), name, out_root)?]),
        Scenario::Mitigated => Ok(vec![generate(&mitigated(seed), name, out_root)?]),
        Scenario::Table2 => Ok(vec![generate(&table2(seed), name, out_root)?]),
        Scenario::LrCompare => lr_compare(seed).iter().map(|s| generate(s, name, out_root)).collect(),
        Scenario::Detection => Ok(vec![generate_detection(&detection_fixture(), out_root)?]),
        Scenario::Custom => {
            let path = spec_file.ok_or_else(|| SynthError::InvalidSpec("custom scenario needs a spec file".into()))?;
            let text = fs::read_to_string(path)?;
            let mut spec: ScenarioSpec =
                serde_json::from_str(&text).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
            spec.seed = seed;
            Ok(vec![generate(&spec, name, out_root)?])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_sums_and_rounds() {
        assert_eq!(apportion(10, &[0.5, 0.25, 0.25]), vec![5, 3, 2]);
        let w: Vec<f64> = [6614.0, 2883.0, 847.0].iter().map(|c| c / 10344.0).collect();
        assert_eq!(apportion(10344, &w), vec![6614, 2883, 847]);
        assert_eq!(apportion(7, &[1.0 / 3.0; 3]).iter().sum::<usize>(), 7);
    }

    #[test]
    fn curve_interpolates_and_clamps() {
        let c = Curve::Knots(vec![(1.0, 0.0), (3.0, 1.0)]);
        assert_eq!(c.at(0.0), 0.0);
        assert_eq!(c.at(2.0), 0.5);
        assert_eq!(c.at(9.0), 1.0);
        assert_eq!(Curve::Constant(0.3).at(5.0), 0.3);
    }

    #[test]
    fn stratified_rates_within_one_over_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (scores, truth) = group_scores(1000, 0.4, 0.83, 0.12, 0.5, &mut rng).unwrap();
        let tp = scores.iter().filter(|(s, l)| *l && *s >= 0.5).count() as f64;
        let fp = scores.iter().filter(|(s, l)| !*l && *s >= 0.5).count() as f64;
        assert_eq!(truth.positives, 400);
        assert!((tp / 400.0 - 0.83).abs() <= 1.0 / 400.0);
        assert!((fp / 600.0 - 0.12).abs() <= 1.0 / 600.0);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = table2(0);
        s.groups[0].weight += 0.1;
        assert_eq!(s.validate().unwrap_err().code(), "INVALID_SPEC");
        let mut s = table2(0);
        s.groups[0].tpr = Curve::Constant(1.0);
        assert!(s.validate().is_err());
        let mut s = table2(0);
        s.name = "../escape".into();
        assert!(s.validate().is_err());
    }
}
