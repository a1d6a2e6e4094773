//! Per-example prediction logs (`predictions.jsonl`).

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Env {
    InTrain,
    InVal,
    InTest,
    Out,
}

impl Env {
    pub const ALL: [Env; 4] = [Env::InTrain, Env::InVal, Env::InTest, Env::Out];

    pub fn as_str(self) -> &'static str {
        match self {
            Env::InTrain => "in_train",
            Env::InVal => "in_val",
            Env::InTest => "in_test",
            Env::Out => "out",
        }
    }

    pub fn is_in_distribution(self) -> bool {
        self != Env::Out
    }
}

impl std::str::FromStr for Env {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Env::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown env {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Detection,
}

/// Axis-aligned box `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn is_valid(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredBox {
    pub bbox: BBox,
    pub score: f64,
    pub class: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtBox {
    pub bbox: BBox,
    pub class: u32,
}

/// The task-specific part of a record.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Classification { score: f64, label: bool },
    Detection { pred: Vec<PredBox>, gt: Vec<GtBox> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub example_id: String,
    pub epoch: u32,
    pub env: Env,
    pub attributes: BTreeMap<String, String>,
    pub outcome: Outcome,
}

impl PredictionRecord {
    pub fn task(&self) -> Task {
        match self.outcome {
            Outcome::Classification { .. } => Task::Classification,
            Outcome::Detection { .. } => Task::Detection,
        }
    }

    pub fn classification(
        id: impl Into<String>,
        epoch: u32,
        env: Env,
        attributes: BTreeMap<String, String>,
        score: f64,
        label: bool,
    ) -> Self {
        Self {
            example_id: id.into(),
            epoch,
            env,
            attributes,
            outcome: Outcome::Classification { score, label },
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.attributes.keys().any(|k| k.is_empty()) {
            return Err("empty attribute key".into());
        }
        match &self.outcome {
            Outcome::Classification { score, .. } => {
                if !(0.0..=1.0).contains(score) {
                    return Err(format!("score {score} outside [0, 1]"));
                }
            }
            Outcome::Detection { pred, gt } => {
                for p in pred {
                    if !p.bbox.is_valid() {
                        return Err(format!("degenerate predicted box {:?}", p.bbox));
                    }
                    if !(0.0..=1.0).contains(&p.score) {
                        return Err(format!("box score {} outside [0, 1]", p.score));
                    }
                }
                if let Some(g) = gt.iter().find(|g| !g.bbox.is_valid()) {
                    return Err(format!("degenerate ground-truth box {:?}", g.bbox));
                }
            }
        }
        Ok(())
    }
}

/// JSON shape of one line.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    id: String,
    epoch: u32,
    env: Env,
    #[serde(default)]
    attrs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pred_boxes: Option<Vec<[f64; 6]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_boxes: Option<Vec<[f64; 5]>>,
}

fn class_id(v: f64) -> Result<u32, String> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u32)
    } else {
        Err(format!("invalid class id {v}"))
    }
}

impl TryFrom<Line> for PredictionRecord {
    type Error = String;

    fn try_from(line: Line) -> Result<Self, String> {
        let outcome = match (line.score, line.label, line.pred_boxes, line.gt_boxes) {
            (Some(score), Some(label), None, None) => {
                let label = match label {
                    0 => false,
                    1 => true,
                    other => return Err(format!("label {other} is not 0/1")),
                };
                Outcome::Classification { score, label }
            }
            (None, None, Some(pred), Some(gt)) => Outcome::Detection {
                pred: pred
                    .into_iter()
                    .map(|[x1, y1, x2, y2, score, class]| {
                        Ok(PredBox {
                            bbox: BBox::new(x1, y1, x2, y2),
                            score,
                            class: class_id(class)?,
                        })
                    })
                    .collect::<Result<_, String>>()?,
                gt: gt
                    .into_iter()
                    .map(|[x1, y1, x2, y2, class]| {
                        Ok(GtBox {
                            bbox: BBox::new(x1, y1, x2, y2),
                            class: class_id(class)?,
                        })
                    })
                    .collect::<Result<_, String>>()?,
            },
            _ => return Err("expected exactly one of score+label or pred_boxes+gt_boxes".into()),
        };
        let record = PredictionRecord {
            example_id: line.id,
            epoch: line.epoch,
            env: line.env,
            attributes: line.attrs,
            outcome,
        };
        record.validate()?;
        Ok(record)
    }
}

impl From<&PredictionRecord> for Line {
    fn from(r: &PredictionRecord) -> Self {
        let mut line = Line {
            id: r.example_id.clone(),
            epoch: r.epoch,
            env: r.env,
            attrs: r.attributes.clone(),
            score: None,
            label: None,
            pred_boxes: None,
            gt_boxes: None,
        };
        match &r.outcome {
            Outcome::Classification { score, label } => {
                line.score = Some(*score);
                line.label = Some(u8::from(*label));
            }
            Outcome::Detection { pred, gt } => {
                line.pred_boxes = Some(
                    pred.iter()
                        .map(|p| {
                            let b = p.bbox;
                            [b.x1, b.y1, b.x2, b.y2, p.score, f64::from(p.class)]
                        })
                        .collect(),
                );
                line.gt_boxes = Some(
                    gt.iter()
                        .map(|g| {
                            let b = g.bbox;
                            [b.x1, b.y1, b.x2, b.y2, f64::from(g.class)]
                        })
                        .collect(),
                );
            }
        }
        line
    }
}

/// A rejected line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    /// 1-based line number.
    pub line_no: usize,
    pub reason: String,
}

impl LineError {
    pub const CODE: &'static str = "UNPARSEABLE_LINE";
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ParsedLog {
    pub records: Vec<PredictionRecord>,
    pub errors: Vec<LineError>,
}

/// Parses one line. Blank lines yield `Ok(None)`.
pub fn parse_line(text: &str) -> Result<Option<PredictionRecord>, String> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    let line: Line = serde_json::from_str(trimmed).map_err(|e| e.to_string())?;
    PredictionRecord::try_from(line).map(Some)
}

/// Parses a whole prediction log. Bad lines are collected, not fatal.
pub fn parse_prediction_log<R: BufRead>(source: R) -> io::Result<ParsedLog> {
    parse_prediction_lines(source, 1)
}

/// Like [`parse_prediction_log`] with line numbers starting at `first_line_no`.
pub fn parse_prediction_lines<R: BufRead>(source: R, first_line_no: usize) -> io::Result<ParsedLog> {
    let mut out = ParsedLog::default();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        match parse_line(&line) {
            Ok(Some(r)) => out.records.push(r),
            Ok(None) => {}
            Err(reason) => out.errors.push(LineError {
                line_no: first_line_no + i,
                reason,
            }),
        }
    }
    Ok(out)
}

pub fn to_json_line(record: &PredictionRecord) -> String {
    serde_json::to_string(&Line::from(record)).expect("record serializes")
}

pub fn write_prediction_log<W: Write>(mut w: W, records: &[PredictionRecord]) -> io::Result<()> {
    for r in records {
        w.write_all(to_json_line(r).as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
