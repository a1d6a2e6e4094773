use std::path::Path;

use serde::Serialize;

use super::{SynthError, Truth};
use crate::ingest::{load_run, PredictionRecord, Run};
use crate::slicing::{
    average_precision, classification_metrics, detection_metrics, match_detections, partition_unchecked, GroupMetrics,
};

/// One failed comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub what: String,
    pub expected: f64,
    pub measured: Option<f64>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub run: String,
    pub checks: usize,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    /// `Err(MISMATCH)` carrying the diagnostics unless every check passed.
    pub fn into_result(self) -> Result<Self, SynthError> {
        if self.passed() {
            Ok(self)
        } else {
            Err(SynthError::Mismatch(self))
        }
    }

    fn check(&mut self, what: impl Into<String>, expected: f64, measured: Option<f64>, tolerance: f64) {
        self.checks += 1;
        let ok = measured.is_some_and(|m| (m - expected).abs() <= tolerance);
        if !ok {
            self.mismatches.push(Mismatch {
                what: what.into(),
                expected,
                measured,
                tolerance,
            });
        }
    }

    fn check_count(&mut self, what: impl Into<String>, expected: usize, measured: usize) {
        self.check(what, expected as f64, Some(measured as f64), 0.0);
    }
}

/// Four binomial standard errors of a rate `p` estimated from `n` trials, plus
/// `1/n` for the discreteness of the count.
pub fn rate_tolerance(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    4.0 * (p * (1.0 - p) / n).sqrt() + 1.0 / n
}

/// Re-ingests a generated run directory and compares it with its `truth.json`.
pub fn verify(run_dir: impl AsRef<Path>) -> Result<VerifyReport, SynthError> {
    let run_dir = run_dir.as_ref();
    let truth = Truth::load(run_dir)?;
    let run = load_run(run_dir)?;
    let mut report = VerifyReport {
        run: run.run_id.clone(),
        ..Default::default()
    };
    report.check_count("warnings", 0, run.health.warnings.len());
    report.check_count("skipped_lines", 0, run.health.skipped_lines);
    report.check_count("records", truth.records, run.predictions.len());
    check_scalars(&truth, &run, &mut report);
    check_classification(&truth, &run, &mut report);
    check_detection(&truth, &run, &mut report);
    Ok(report)
}

fn check_scalars(truth: &Truth, run: &Run, report: &mut VerifyReport) {
    for (tag, expected) in &truth.scalars {
        let series = run.series.get(tag);
        report.check_count(
            format!("scalars[{tag}].points"),
            expected.points,
            series.map_or(0, |s| s.len()),
        );
        report.check(
            format!("scalars[{tag}].last"),
            expected.last,
            series.and_then(|s| s.points.last()).map(|p| p.value),
            0.0,
        );
    }
}

fn check_classification(truth: &Truth, run: &Run, report: &mut VerifyReport) {
    let Some(threshold) = truth.threshold else {
        return;
    };
    for et in &truth.epochs {
        let members: Vec<&PredictionRecord> = run
            .predictions
            .iter()
            .filter(|r| r.epoch == et.epoch && r.env == et.env)
            .collect();
        let at = format!("epoch {} {}", et.epoch, et.env.as_str());
        report.check_count(format!("{at} n"), et.n, members.len());
        let overall = classification_metrics(members.iter().copied(), threshold).ok();
        report.check(
            format!("{at} accuracy"),
            et.accuracy,
            overall.and_then(|m| m.accuracy),
            rate_tolerance(et.accuracy, et.n),
        );
        let groups = partition_unchecked(members.iter().copied(), &truth.axes);
        for (label, gt) in &et.groups {
            let measured: Option<GroupMetrics> = groups
                .iter()
                .find(|(k, _)| &k.label() == label)
                .and_then(|(_, recs)| classification_metrics(recs.iter().copied(), threshold).ok());
            let n = measured.as_ref().map_or(0, |m| m.n);
            let positives = measured.as_ref().and_then(|m| m.confusion).map_or(0, |c| c.positives());
            report.check_count(format!("{at} [{label}] n"), gt.n, n);
            report.check_count(format!("{at} [{label}] positives"), gt.positives, positives);
            let get = |f: fn(&GroupMetrics) -> Option<f64>| measured.as_ref().and_then(f);
            let negatives = gt.n - gt.positives;
            if gt.positives > 0 {
                report.check(
                    format!("{at} [{label}] tpr"),
                    gt.tpr,
                    get(|m| m.tpr),
                    rate_tolerance(gt.tpr, gt.positives),
                );
            }
            if negatives > 0 {
                report.check(
                    format!("{at} [{label}] fpr"),
                    gt.fpr,
                    get(|m| m.fpr),
                    rate_tolerance(gt.fpr, negatives),
                );
            }
            if gt.n > 0 {
                report.check(
                    format!("{at} [{label}] positive_rate"),
                    gt.positive_rate,
                    get(|m| m.positive_rate),
                    rate_tolerance(gt.positive_rate, gt.n),
                );
                report.check(
                    format!("{at} [{label}] accuracy"),
                    gt.accuracy,
                    get(|m| m.accuracy),
                    rate_tolerance(gt.accuracy, gt.n),
                );
            }
        }
    }
}

const AP_TOLERANCE: f64 = 1e-9;

fn check_detection(truth: &Truth, run: &Run, report: &mut VerifyReport) {
    let Some(dt) = &truth.detection else {
        return;
    };
    let all: Vec<&PredictionRecord> = run.predictions.iter().collect();
    report.check(
        "detection overall mAP",
        dt.overall_map,
        detection_metrics(all.iter().copied(), dt.iou_threshold)
            .ok()
            .and_then(|m| m.ap),
        AP_TOLERANCE,
    );
    if let Ok(matched) = match_detections(all.iter().copied(), dt.iou_threshold) {
        for (class, &expected) in &dt.overall_per_class {
            let ap = matched.per_class.get(class).and_then(|m| average_precision(m).ok());
            report.check(format!("detection class {class} AP"), expected, ap, AP_TOLERANCE);
        }
    }
    let groups = partition_unchecked(all.iter().copied(), &truth.axes);
    for (label, &expected) in &dt.groups {
        let ap = groups
            .iter()
            .find(|(k, _)| &k.label() == label)
            .and_then(|(_, recs)| detection_metrics(recs.iter().copied(), dt.iou_threshold).ok())
            .and_then(|m| m.ap);
        report.check(format!("detection [{label}] mAP"), expected, ap, AP_TOLERANCE);
    }
}
