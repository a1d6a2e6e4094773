//! Independent reference implementations and fixtures shared by the integration tests.
//!
//! Nothing here calls into the code under test except for record constructors.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::time::Duration;

use fairboard::ingest::{BBox, Env, GtBox, Outcome, PredBox, PredictionRecord};

/// Bit-at-a-time reflected CRC-32C (polynomial 0x82F63B78).
pub fn crc32c_bitwise(bytes: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &b in bytes {
        crc ^= u32::from(b);
        for _ in 0..8 {
            crc = if crc & 1 == 1 {
                (crc >> 1) ^ 0x82F6_3B78
            } else {
                crc >> 1
            };
        }
    }
    !crc
}

pub fn masked_crc_oracle(bytes: &[u8]) -> u32 {
    crc32c_bitwise(bytes).rotate_right(15).wrapping_add(0xa282_ead8)
}

/// Frame layout assembled by hand from the oracle checksum.
pub fn frame_oracle(payload: &[u8]) -> Vec<u8> {
    let len = (payload.len() as u64).to_le_bytes();
    let mut out = Vec::new();
    out.extend_from_slice(&len);
    out.extend_from_slice(&masked_crc_oracle(&len).to_le_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&masked_crc_oracle(payload).to_le_bytes());
    out
}

/// Reference protobuf messages, encoded by `prost` rather than the crate's own writer.
pub mod proto {
    #[derive(Clone, PartialEq, prost::Message)]
    pub struct Event {
        #[prost(double, tag = "1")]
        pub wall_time: f64,
        #[prost(int64, tag = "2")]
        pub step: i64,
        #[prost(string, optional, tag = "3")]
        pub file_version: Option<String>,
        #[prost(message, optional, tag = "5")]
        pub summary: Option<Summary>,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct Summary {
        #[prost(message, repeated, tag = "1")]
        pub value: Vec<SummaryValue>,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct SummaryValue {
        #[prost(string, tag = "1")]
        pub tag: String,
        #[prost(float, optional, tag = "2")]
        pub simple_value: Option<f32>,
        #[prost(string, tag = "7")]
        pub node_name: String,
        #[prost(message, optional, tag = "9")]
        pub metadata: Option<SummaryMetadata>,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct SummaryMetadata {
        #[prost(message, optional, tag = "1")]
        pub plugin_data: Option<PluginData>,
        #[prost(string, tag = "2")]
        pub display_name: String,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct PluginData {
        #[prost(string, tag = "1")]
        pub plugin_name: String,
        #[prost(bytes = "vec", tag = "2")]
        pub content: Vec<u8>,
    }

    pub fn scalar_event(wall_time: f64, step: i64, values: &[(&str, f32)]) -> Vec<u8> {
        use prost::Message;
        Event {
            wall_time,
            step,
            file_version: None,
            summary: Some(Summary {
                value: values
                    .iter()
                    .map(|(tag, v)| SummaryValue {
                        tag: (*tag).to_owned(),
                        simple_value: Some(*v),
                        node_name: String::new(),
                        metadata: Some(SummaryMetadata {
                            plugin_data: Some(PluginData {
                                plugin_name: "scalars".into(),
                                content: vec![0x08, 0x01],
                            }),
                            display_name: String::new(),
                        }),
                    })
                    .collect(),
            }),
        }
        .encode_to_vec()
    }
}

pub fn attrs(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Classification record in group `g{group}` (or with no attribute when `group` is `None`).
pub fn record(i: usize, group: Option<usize>, score: f64, label: bool) -> PredictionRecord {
    let a = match group {
        Some(g) => attrs(&[("g", &format!("g{g}"))]),
        None => BTreeMap::new(),
    };
    PredictionRecord::classification(format!("r{i}"), 1, Env::InVal, a, score, label)
}

/// Rates computed by counting, one definition per line.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteRates {
    pub n: usize,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub positive_rate: Option<f64>,
    pub auc: Option<f64>,
}

fn frac(num: usize, den: usize) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

pub fn brute_rates(items: &[(f64, bool)], threshold: f64) -> BruteRates {
    let predicted = |s: f64| s >= threshold;
    let n = items.len();
    let correct = items.iter().filter(|(s, l)| predicted(*s) == *l).count();
    let pred_pos = items.iter().filter(|(s, _)| predicted(*s)).count();
    let tp = items.iter().filter(|(s, l)| predicted(*s) && *l).count();
    let pos = items.iter().filter(|(_, l)| *l).count();
    let fp = items.iter().filter(|(s, l)| predicted(*s) && !*l).count();
    let neg = n - pos;
    // Every (positive, negative) pair, compared directly.
    let mut wins = 0.0;
    for (sp, _) in items.iter().filter(|(_, l)| *l) {
        for (sn, _) in items.iter().filter(|(_, l)| !*l) {
            wins += if sp > sn {
                1.0
            } else if sp == sn {
                0.5
            } else {
                0.0
            };
        }
    }
    BruteRates {
        n,
        accuracy: frac(correct, n),
        precision: frac(tp, pred_pos),
        recall: frac(tp, pos),
        tpr: frac(tp, pos),
        fpr: frac(fp, neg),
        positive_rate: frac(pred_pos, n),
        auc: if pos > 0 && neg > 0 {
            Some(wins / (pos * neg) as f64)
        } else {
            None
        },
    }
}

/// Largest `|a - b|` over all ordered pairs of defined values.
pub fn brute_pairwise_gap(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let mut best: Option<f64> = None;
    for i in 0..defined.len() {
        for j in 0..defined.len() {
            if i != j {
                let d = (defined[i] - defined[j]).abs();
                best = Some(best.map_or(d, |b: f64| b.max(d)));
            }
        }
    }
    best
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}

/// Nearest-rank percentile of `samples` (sorted in place).
pub fn percentile(samples: &mut [Duration], p: f64) -> Duration {
    samples.sort_unstable();
    let rank = ((p / 100.0) * samples.len() as f64).ceil() as usize;
    samples[rank.clamp(1, samples.len()) - 1]
}

pub fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Detection record from `(class, box)` ground truths and `(class, score, box)` predictions.
pub fn det(id: &str, gt: &[(u32, [f64; 4])], pred: &[(u32, f64, [f64; 4])]) -> PredictionRecord {
    let b = |c: [f64; 4]| BBox::new(c[0], c[1], c[2], c[3]);
    PredictionRecord {
        example_id: id.into(),
        epoch: 1,
        env: Env::InVal,
        attributes: Default::default(),
        outcome: Outcome::Detection {
            gt: gt.iter().map(|&(class, c)| GtBox { bbox: b(c), class }).collect(),
            pred: pred
                .iter()
                .map(|&(class, score, c)| PredBox {
                    bbox: b(c),
                    score,
                    class,
                })
                .collect(),
        },
    }
}

pub struct ApFixture {
    pub name: &'static str,
    pub records: Vec<PredictionRecord>,
    pub iou_threshold: f64,
    /// mAP worked out by hand from the 101-level interpolation.
    pub expected: f64,
}

const A: [f64; 4] = [0.0, 0.0, 10.0, 10.0];
const B: [f64; 4] = [20.0, 20.0, 30.0, 30.0];
const FAR: [f64; 4] = [50.0, 50.0, 60.0, 60.0];
const SMALL: [f64; 4] = [0.0, 0.0, 5.0, 5.0];
const SMALL2: [f64; 4] = [5.0, 5.0, 9.0, 9.0];

/// Hand-built detection cases of at most ten boxes each.
pub fn ap_fixtures() -> Vec<ApFixture> {
    let fx = |name, records, iou_threshold, expected| ApFixture {
        name,
        records,
        iou_threshold,
        expected,
    };
    vec![
        // Ranks TP, FP, TP over two ground truths: envelope 1 for recall <= .5 (51 levels), 2/3 above (50 levels).
        fx(
            "tp_fp_tp",
            vec![det("a", &[(0, A), (0, B)], &[(0, 0.9, A), (0, 0.8, FAR), (0, 0.7, B)])],
            0.5,
            253.0 / 303.0,
        ),
        fx(
            "perfect",
            vec![det("p", &[(0, A), (0, B)], &[(0, 0.6, A), (0, 0.5, B)])],
            0.5,
            1.0,
        ),
        // Recall tops out at .5: levels 0..=.5 score 1, the other 50 score 0.
        fx(
            "half_recall",
            vec![det("h", &[(0, A), (0, B)], &[(0, 0.9, A), (0, 0.5, FAR)])],
            0.5,
            51.0 / 101.0,
        ),
        // A second hit on a matched box is a false positive after the only TP.
        fx(
            "duplicate",
            vec![det("d", &[(0, A)], &[(0, 0.9, A), (0, 0.8, A)])],
            0.5,
            1.0,
        ),
        // FP ranked first: the envelope is .5 at every level.
        fx(
            "fp_first",
            vec![det("f", &[(0, A)], &[(0, 0.9, FAR), (0, 0.8, A)])],
            0.5,
            0.5,
        ),
        // Class 0 as in tp_fp_tp, class 1 as in half_recall: (253/303 + 153/303) / 2.
        fx(
            "two_classes",
            vec![det(
                "t",
                &[(0, A), (0, B), (1, SMALL), (1, SMALL2)],
                &[(0, 0.9, A), (0, 0.8, FAR), (0, 0.7, B), (1, 0.95, SMALL), (1, 0.3, FAR)],
            )],
            0.5,
            203.0 / 303.0,
        ),
        // Class 2 has predictions but no ground truth and stays out of the mean.
        fx(
            "class_without_gt",
            vec![det("x", &[(0, A)], &[(0, 0.9, A), (2, 0.99, B)])],
            0.5,
            1.0,
        ),
        // Merged by score across images: .9 TP, .6 TP, .4 FP over 3 ground truths.
        // Precision is 1 up to recall 2/3, covering levels 0..=.66 (67 levels).
        fx(
            "two_images",
            vec![
                det("i1", &[(0, A)], &[(0, 0.6, A)]),
                det("i2", &[(0, A), (0, B)], &[(0, 0.9, A), (0, 0.4, FAR)]),
            ],
            0.5,
            67.0 / 101.0,
        ),
        // IoU exactly .5 matches at threshold .5 and misses at .6.
        fx(
            "iou_inclusive",
            vec![det(
                "b",
                &[(0, [0.0, 0.0, 2.0, 1.0])],
                &[(0, 0.9, [0.0, 0.0, 1.0, 1.0])],
            )],
            0.5,
            1.0,
        ),
        fx(
            "iou_above",
            vec![det(
                "b",
                &[(0, [0.0, 0.0, 2.0, 1.0])],
                &[(0, 0.9, [0.0, 0.0, 1.0, 1.0])],
            )],
            0.6,
            0.0,
        ),
        // The top prediction overlaps g2 (IoU .818) more than g1 (IoU .429); taking g2
        // leaves g1 for the second prediction. Taking g1 would have produced an FP.
        fx(
            "greedy_highest_iou",
            vec![det(
                "g",
                &[(0, [0.0, 0.0, 10.0, 10.0]), (0, [5.0, 0.0, 15.0, 10.0])],
                &[(0, 0.9, [4.0, 0.0, 14.0, 10.0]), (0, 0.8, [0.0, 0.0, 10.0, 10.0])],
            )],
            0.4,
            1.0,
        ),
    ]
}
