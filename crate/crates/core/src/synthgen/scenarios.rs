use std::collections::BTreeMap;
use std::fmt;

use super::{Curve, DetectionTruth, EnvShift, GroupSpec, ScenarioSpec, TrainingCurves};
use crate::ingest::{BBox, Env, GtBox, Outcome, PredBox, PredictionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Baseline,
    Mitigated,
    LrCompare,
    Table2,
    Detection,
    Custom,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Baseline,
        Scenario::Mitigated,
        Scenario::LrCompare,
        Scenario::Table2,
        Scenario::Detection,
        Scenario::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Baseline => "baseline",
            Scenario::Mitigated => "mitigated",
            Scenario::LrCompare => "lr_compare",
            Scenario::Table2 => "table2",
            Scenario::Detection => "detection",
            Scenario::Custom => "custom",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

/// `(gender, lighting, weight, final accuracy)` for the baseline run.
const BASELINE_GROUPS: [(&str, &str, f64, f64); 4] = [
    ("male", "daytime", 0.35, 0.948),
    ("male", "nighttime", 0.15, 0.800),
    ("female", "daytime", 0.35, 0.889),
    ("female", "nighttime", 0.15, 0.593),
];

const MITIGATED_ACCURACY: f64 = 0.831;
const MITIGATED_GAP: f64 = 0.18;
const EPOCHS: u32 = 100;
const RECORDS_PER_EPOCH: usize = 2000;

/// Baseline gap between best and worst group across training; passes 0.30 between epochs 19 and 20.
fn baseline_gap() -> Curve {
    Curve::Knots(vec![
        (1.0, 0.05),
        (19.0, 0.29),
        (20.0, 0.31),
        (25.0, 0.33),
        (100.0, 0.355),
    ])
}

/// Rises from `start` at epoch 1 to exactly `end` at `epochs`.
fn ramp(epoch: f64, epochs: u32, start: f64, end: f64, tau: f64) -> f64 {
    let span = f64::from(epochs) - 1.0;
    if span <= 0.0 {
        return end;
    }
    let progress = (1.0 - (-(epoch - 1.0) / tau).exp()) / (1.0 - (-span / tau).exp());
    start + (end - start) * progress
}

struct AccuracyPlan<'a> {
    name: &'a str,
    seed: u64,
    epochs: u32,
    records_per_epoch: usize,
    axes: &'a [&'a str],
    /// `(attrs, weight, prevalence, final accuracy)`.
    groups: Vec<(BTreeMap<String, String>, f64, f64, f64)>,
    start_accuracy: f64,
    tau: f64,
    /// Best-minus-worst accuracy gap per epoch; offsets are scaled to follow it.
    gap: Curve,
    training: TrainingCurves,
    config: BTreeMap<String, String>,
}

/// Groups whose accuracy (tpr = accuracy, fpr = 1 - accuracy) follows a shared
/// ramp plus a per-group offset scaled by the gap curve. Accuracy then does not
/// depend on prevalence.
fn accuracy_spec(plan: AccuracyPlan<'_>) -> ScenarioSpec {
    let mean: f64 = plan.groups.iter().map(|g| g.1 * g.3).sum();
    let finals = plan.groups.iter().map(|g| g.3);
    let final_gap = finals.clone().fold(f64::NEG_INFINITY, f64::max) - finals.fold(f64::INFINITY, f64::min);
    let epochs = plan.epochs;
    let groups = plan
        .groups
        .iter()
        .map(|(attrs, weight, prevalence, fin)| {
            let offset = fin - mean;
            let gap = plan.gap.clone();
            let accuracy = move |e: f64| {
                let scale = if final_gap > 0.0 { gap.at(e) / final_gap } else { 0.0 };
                ramp(e, epochs, plan.start_accuracy, mean, plan.tau) + offset * scale
            };
            GroupSpec {
                attrs: attrs.clone(),
                weight: *weight,
                prevalence: *prevalence,
                tpr: Curve::sampled(epochs, &accuracy),
                fpr: Curve::sampled(epochs, |e| 1.0 - accuracy(e)),
            }
        })
        .collect();
    ScenarioSpec {
        name: plan.name.to_owned(),
        seed: plan.seed,
        epochs,
        records_per_epoch: plan.records_per_epoch,
        threshold: 0.5,
        axes: plan.axes.iter().map(|a| a.to_string()).collect(),
        groups,
        env_shift: None,
        training: plan.training,
        config: plan.config,
    }
}

fn attrs(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn config(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    attrs(pairs)
}

fn gender_lighting_groups(finals: impl Fn(usize, f64) -> f64) -> Vec<(BTreeMap<String, String>, f64, f64, f64)> {
    BASELINE_GROUPS
        .iter()
        .enumerate()
        .map(|(i, &(g, l, w, fin))| {
            let prevalence = if l == "daytime" { 0.5 } else { 0.4 };
            (attrs(&[("gender", g), ("lighting", l)]), w, prevalence, finals(i, fin))
        })
        .collect()
}

/// OUT-environment degradation concentrated on nighttime groups.
fn night_shift() -> EnvShift {
    let worst = "gender=female,lighting=nighttime".to_string();
    let night = "gender=male,lighting=nighttime".to_string();
    EnvShift {
        env: Env::Out,
        fraction: 0.5,
        tpr_delta: BTreeMap::from([(worst.clone(), -0.12), (night.clone(), -0.05)]),
        fpr_delta: BTreeMap::from([(worst, 0.12), (night, 0.05)]),
    }
}

/// Gender × lighting run with a large subgroup accuracy gap that opens early.
pub fn baseline(seed: u64) -> ScenarioSpec {
    let mut spec = accuracy_spec(AccuracyPlan {
        name: "baseline",
        seed,
        epochs: EPOCHS,
        records_per_epoch: RECORDS_PER_EPOCH,
        axes: &["gender", "lighting"],
        groups: gender_lighting_groups(|_, fin| fin),
        start_accuracy: 0.6,
        tau: 12.0,
        gap: baseline_gap(),
        training: TrainingCurves::default(),
        config: config(&[
            ("learning_rate", "0.001"),
            ("optimizer", "sgd"),
            ("batch_size", "64"),
            ("fairness_weight", "0.0"),
            ("augmentation", "none"),
        ]),
    });
    spec.env_shift = Some(night_shift());
    spec
}

/// The baseline with group offsets shrunk so the final gap is 0.18 around a 0.831 aggregate.
pub fn mitigated(seed: u64) -> ScenarioSpec {
    let mean: f64 = BASELINE_GROUPS.iter().map(|g| g.2 * g.3).sum();
    let base_gap = BASELINE_GROUPS[0].3 - BASELINE_GROUPS[3].3;
    let shrink = MITIGATED_GAP / base_gap;
    let gap = match baseline_gap() {
        Curve::Knots(k) => Curve::Knots(k.into_iter().map(|(e, v)| (e, v * shrink)).collect()),
        c => c,
    };
    let mut spec = accuracy_spec(AccuracyPlan {
        name: "mitigated",
        seed,
        epochs: EPOCHS,
        records_per_epoch: RECORDS_PER_EPOCH,
        axes: &["gender", "lighting"],
        groups: gender_lighting_groups(|_, fin| MITIGATED_ACCURACY + (fin - mean) * shrink),
        start_accuracy: 0.6,
        tau: 12.0,
        gap,
        training: TrainingCurves::default(),
        config: config(&[
            ("learning_rate", "0.001"),
            ("optimizer", "sgd"),
            ("batch_size", "64"),
            ("fairness_weight", "0.5"),
            ("augmentation", "female_nighttime"),
        ]),
    });
    spec.env_shift = Some(night_shift());
    spec
}

/// Two runs differing only in learning rate: the larger one converges faster
/// to a lower final accuracy with noisier gradients.
pub fn lr_compare(seed: u64) -> Vec<ScenarioSpec> {
    [("lr_0.01", 0.01, 0.78, 3.0, 0.6), ("lr_0.001", 0.001, 0.85, 8.0, 0.1)]
        .into_iter()
        .map(|(name, lr, fin, tau, noise)| {
            let lr_text = lr.to_string();
            accuracy_spec(AccuracyPlan {
                name,
                seed,
                epochs: 30,
                records_per_epoch: 500,
                axes: &["gender"],
                groups: vec![
                    (attrs(&[("gender", "male")]), 0.5, 0.5, fin),
                    (attrs(&[("gender", "female")]), 0.5, 0.5, fin),
                ],
                start_accuracy: 0.5,
                tau,
                gap: Curve::Constant(0.0),
                training: TrainingCurves {
                    loss_tau: tau,
                    grad_norm_noise: noise,
                    learning_rate: lr,
                    ..TrainingCurves::default()
                },
                config: config(&[("learning_rate", &lr_text), ("optimizer", "sgd"), ("batch_size", "64")]),
            })
        })
        .collect()
}

/// Joint `(skin, age)` counts; `None` age means the attribute is absent.
/// Marginals: skin 6614 / 2883 / 847, age 6293 / 3051 with 1000 unrecorded.
const TABLE2_CELLS: [(&str, Option<&str>, usize); 9] = [
    ("skin_0", Some("age_0"), 4000),
    ("skin_0", Some("age_1"), 2000),
    ("skin_0", None, 614),
    ("skin_1", Some("age_0"), 1800),
    ("skin_1", Some("age_1"), 800),
    ("skin_1", None, 283),
    ("skin_2", Some("age_0"), 493),
    ("skin_2", Some("age_1"), 251),
    ("skin_2", None, 103),
];

/// The pilot dataset composition: a single epoch of 10,344 records.
pub fn table2(seed: u64) -> ScenarioSpec {
    let total: usize = TABLE2_CELLS.iter().map(|c| c.2).sum();
    let groups = TABLE2_CELLS
        .iter()
        .map(|&(skin, age, count)| {
            let mut a = attrs(&[("skin", skin)]);
            if let Some(age) = age {
                a.insert("age".into(), age.into());
            }
            GroupSpec {
                attrs: a,
                weight: count as f64 / total as f64,
                prevalence: 0.5,
                tpr: Curve::Constant(0.8),
                fpr: Curve::Constant(0.2),
            }
        })
        .collect();
    ScenarioSpec {
        name: "table2".into(),
        seed,
        epochs: 1,
        records_per_epoch: total,
        threshold: 0.5,
        axes: vec!["skin".into(), "age".into()],
        groups,
        env_shift: None,
        training: TrainingCurves::default(),
        config: config(&[("dataset", "pilot")]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFixture {
    pub name: String,
    pub axes: Vec<String>,
    pub records: Vec<PredictionRecord>,
    pub truth: DetectionTruth,
}

fn image(id: &str, gender: &str, gt: &[([f64; 4], u32)], pred: &[([f64; 4], f64, u32)]) -> PredictionRecord {
    let b = |c: &[f64; 4]| BBox::new(c[0], c[1], c[2], c[3]);
    PredictionRecord {
        example_id: id.into(),
        epoch: 1,
        env: Env::InVal,
        attributes: attrs(&[("gender", gender)]),
        outcome: Outcome::Detection {
            pred: pred
                .iter()
                .map(|(c, score, class)| PredBox {
                    bbox: b(c),
                    score: *score,
                    class: *class,
                })
                .collect(),
            gt: gt
                .iter()
                .map(|(c, class)| GtBox {
                    bbox: b(c),
                    class: *class,
                })
                .collect(),
        },
    }
}

/// Four images, ten predicted and seven ground-truth boxes, with hand-computed AP.
///
/// male, class 0: TP .9, TP .8, FP .7 over 2 GT, so AP = 1. Class 1: TP .4, AP = 1.
///
/// female, class 0 over 3 GT: FP .95, TP .6, FP .55 (IoU 1/3), TP .5. Recall
/// reaches 2/3 with envelope precision 1/2 throughout, so 67 of the 101 recall
/// levels score 1/2: AP = 67/202. Class 1 has no ground truth and is excluded.
///
/// Pooled class 0 over 5 GT, recall/precision after each rank:
/// (0,0) (.2,1/2) (.4,2/3) (.4,1/2) (.6,3/5) (.6,1/2) (.8,4/7). The envelope
/// gives 2/3 on levels 0..=40, 3/5 on 41..=60, 4/7 on 61..=80, 0 above, so
/// AP = (41*2/3 + 20*3/5 + 20*4/7)/101 = 1066/2121. Pooled class 1 has TP .4
/// then FP .3 over 1 GT: AP = 1.
pub fn detection_fixture() -> DetectionFixture {
    let records = vec![
        image(
            "img-a",
            "male",
            &[([0.0, 0.0, 10.0, 10.0], 0), ([0.0, 20.0, 10.0, 30.0], 1)],
            &[([0.0, 0.0, 10.0, 10.0], 0.9, 0), ([0.0, 20.0, 10.0, 30.0], 0.4, 1)],
        ),
        image(
            "img-b",
            "male",
            &[([20.0, 20.0, 30.0, 30.0], 0)],
            &[([20.0, 20.0, 30.0, 30.0], 0.8, 0), ([50.0, 50.0, 60.0, 60.0], 0.7, 0)],
        ),
        image(
            "img-c",
            "female",
            &[([0.0, 0.0, 10.0, 10.0], 0), ([20.0, 0.0, 30.0, 10.0], 0)],
            &[
                ([0.0, 0.0, 10.0, 10.0], 0.6, 0),
                ([40.0, 40.0, 50.0, 50.0], 0.95, 0),
                ([60.0, 0.0, 70.0, 10.0], 0.3, 1),
            ],
        ),
        image(
            "img-d",
            "female",
            &[([0.0, 0.0, 10.0, 10.0], 0)],
            &[([5.0, 0.0, 15.0, 10.0], 0.55, 0), ([0.0, 0.0, 10.0, 10.0], 0.5, 0)],
        ),
    ];
    let pooled_class0 = 1066.0 / 2121.0;
    DetectionFixture {
        name: "detection".into(),
        axes: vec!["gender".into()],
        records,
        truth: DetectionTruth {
            iou_threshold: 0.5,
            groups: BTreeMap::from([
                ("gender=female".to_string(), 67.0 / 202.0),
                ("gender=male".to_string(), 1.0),
            ]),
            overall_map: (pooled_class0 + 1.0) / 2.0,
            overall_per_class: BTreeMap::from([(0, pooled_class0), (1, 1.0)]),
        },
    }
}
