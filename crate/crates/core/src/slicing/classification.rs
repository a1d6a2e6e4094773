use serde::Serialize;

use super::{GroupKey, GroupMetrics, MetricsError};
use crate::ingest::{Outcome, PredictionRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.fp + self.tn
    }

    fn ratio(num: usize, den: usize) -> Option<f64> {
        (den > 0).then(|| num as f64 / den as f64)
    }

    pub fn positive_rate(&self) -> Option<f64> {
        Self::ratio(self.tp + self.fp, self.n())
    }

    pub fn tpr(&self) -> Option<f64> {
        Self::ratio(self.tp, self.positives())
    }

    pub fn fpr(&self) -> Option<f64> {
        Self::ratio(self.fp, self.negatives())
    }

    pub fn precision(&self) -> Option<f64> {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn accuracy(&self) -> Option<f64> {
        Self::ratio(self.tp + self.tn, self.n())
    }
}

/// Metrics at a single decision threshold: `ŷ = score >= threshold`.
pub fn classification_metrics<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    threshold: f64,
) -> Result<GroupMetrics, MetricsError> {
    classification_metrics_with(records, |_| threshold)
}

/// Metrics with a per-record decision threshold.
pub fn classification_metrics_with<'a>(
    records: impl IntoIterator<Item = &'a PredictionRecord>,
    threshold_of: impl Fn(&PredictionRecord) -> f64,
) -> Result<GroupMetrics, MetricsError> {
    Ok(Tally::new(records, threshold_of)?.metrics())
}

/// Confusion counts and `(score, label)` pairs of a record set, before summarizing.
///
/// Tallies of disjoint record sets pool exactly: counts add and AUC is
/// recomputed over the union of pairs.
#[derive(Debug, Clone, Default)]
pub struct Tally {
    pub confusion: Confusion,
    scored: Vec<(f64, bool)>,
}

impl Tally {
    pub fn new<'a>(
        records: impl IntoIterator<Item = &'a PredictionRecord>,
        threshold_of: impl Fn(&PredictionRecord) -> f64,
    ) -> Result<Self, MetricsError> {
        let mut t = Tally::default();
        for r in records {
            let Outcome::Classification { score, label } = r.outcome else {
                return Err(MetricsError::WrongTask {
                    expected: "classification",
                    found: "detection",
                });
            };
            let predicted = score >= threshold_of(r);
            match (predicted, label) {
                (true, true) => t.confusion.tp += 1,
                (true, false) => t.confusion.fp += 1,
                (false, false) => t.confusion.tn += 1,
                (false, true) => t.confusion.fn_ += 1,
            }
            t.scored.push((score, label));
        }
        Ok(t)
    }

    pub fn pool<'a>(parts: impl IntoIterator<Item = &'a Tally>) -> Tally {
        let mut t = Tally::default();
        for p in parts {
            t.confusion.tp += p.confusion.tp;
            t.confusion.fp += p.confusion.fp;
            t.confusion.tn += p.confusion.tn;
            t.confusion.fn_ += p.confusion.fn_;
            t.scored.extend_from_slice(&p.scored);
        }
        t
    }

    /// Summarizes; leaves the pairs sorted by score, which makes a later [`Tally::pool`] cheap to sort.
    pub fn metrics(&mut self) -> GroupMetrics {
        let c = self.confusion;
        let tpr = c.tpr();
        GroupMetrics {
            group: GroupKey::all(),
            n: c.n(),
            confusion: Some(c),
            positive_rate: c.positive_rate(),
            tpr,
            fpr: c.fpr(),
            precision: c.precision(),
            recall: tpr,
            accuracy: c.accuracy(),
            auc: auc(&mut self.scored),
            ap: None,
        }
    }
}

/// Probability that a random positive outscores a random negative, ties counting one half.
fn auc(scored: &mut [(f64, bool)]) -> Option<f64> {
    let positives = scored.iter().filter(|s| s.1).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    // Stable sort merges presorted runs from pooled tallies in near-linear time;
    // order within equal scores is irrelevant since ties are counted as a block.
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut wins = 0.0f64;
    let mut negatives_below = 0usize;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        let (mut p, mut q) = (0usize, 0usize);
        while j < scored.len() && scored[j].0 == scored[i].0 {
            if scored[j].1 {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        wins += (p * negatives_below) as f64 + 0.5 * (p * q) as f64;
        negatives_below += q;
        i = j;
    }
    Some(wins / (positives as f64 * negatives as f64))
}
