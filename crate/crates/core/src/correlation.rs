//! Pearson correlation across aligned scalar series.

use serde::Serialize;

use crate::aggregation::{lookup_columns, AggregationError, ColumnRef, ScalarSeries};
use crate::ingest::RunCatalog;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorrelationError {
    #[error("sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two columns, got {0}")]
    TooFewColumns(usize),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
}

impl CorrelationError {
    pub fn code(&self) -> &'static str {
        match self {
            CorrelationError::LengthMismatch(..) => "LENGTH_MISMATCH",
            CorrelationError::TooFewColumns(_) => "TOO_FEW_COLUMNS",
            CorrelationError::Aggregation(e) => e.code(),
        }
    }
}

/// Running co-moments, updated with mean-centered increments.
#[derive(Debug, Clone, Copy, Default)]
struct CoMoments {
    n: usize,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    c_xy: f64,
}

impl CoMoments {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        let dx_after = x - self.mean_x;
        let dy_after = y - self.mean_y;
        self.m2_x += dx * dx_after;
        self.m2_y += dy * dy_after;
        self.c_xy += dx * dy_after;
    }

    fn pearson(&self) -> Option<f64> {
        if self.n < 2 || self.m2_x <= 0.0 || self.m2_y <= 0.0 {
            return None;
        }
        let r = self.c_xy / (self.m2_x * self.m2_y).sqrt();
        Some(r.clamp(-1.0, 1.0))
    }
}

/// Pearson product-moment coefficient; `None` if `n < 2` or either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>, CorrelationError> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch(x.len(), y.len()));
    }
    let mut m = CoMoments::default();
    for (&a, &b) in x.iter().zip(y) {
        m.push(a, b);
    }
    Ok(m.pearson())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<ColumnRef>,
    /// Symmetric; `None` where support < 2 or a column is constant on the shared steps.
    pub values: Vec<Vec<Option<f64>>>,
    /// Number of shared steps per pair.
    pub support: Vec<Vec<usize>>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }
}

/// Pearson and support over the steps two series share.
fn pair(a: &ScalarSeries, b: &ScalarSeries) -> (Option<f64>, usize) {
    let mut m = CoMoments::default();
    let (mut i, mut j) = (0, 0);
    while i < a.points.len() && j < b.points.len() {
        let (pa, pb) = (&a.points[i], &b.points[j]);
        match pa.step.cmp(&pb.step) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                m.push(pa.value, pb.value);
                i += 1;
                j += 1;
            }
        }
    }
    (m.pearson(), m.n)
}

/// Pairwise correlations, each pair aligned on its own step intersection.
pub fn correlation_matrix(columns: &[ColumnRef], catalog: &RunCatalog) -> Result<CorrelationMatrix, CorrelationError> {
    if columns.len() < 2 {
        return Err(CorrelationError::TooFewColumns(columns.len()));
    }
    let series = lookup_columns(columns, catalog)?;
    Ok(correlate(columns, &series))
}

/// [`correlation_matrix`] over already-resolved series.
pub fn correlate(columns: &[ColumnRef], series: &[&ScalarSeries]) -> CorrelationMatrix {
    let k = series.len();
    let mut values = vec![vec![None; k]; k];
    let mut support = vec![vec![0; k]; k];
    for i in 0..k {
        for j in i..k {
            let (r, n) = pair(series[i], series[j]);
            values[i][j] = r;
            values[j][i] = r;
            support[i][j] = n;
            support[j][i] = n;
        }
    }
    CorrelationMatrix {
        labels: columns.to_vec(),
        values,
        support,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_pass(x: &[f64], y: &[f64]) -> Option<f64> {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        (x.len() >= 2 && sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
    }

    #[test]
    fn examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(pearson(&x, &x).unwrap(), Some(1.0));
        let neg: Vec<f64> = x.iter().map(|v| -2.0 * v + 3.0).collect();
        assert!((pearson(&x, &neg).unwrap().unwrap() + 1.0).abs() < 1e-15);
        // Centered x = (-1.5,-.5,.5,1.5), y = (-.5,-1.5,1.5,.5); sxy = 3, sxx = syy = 5.
        assert!((pearson(&x, &[2.0, 1.0, 4.0, 3.0]).unwrap().unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(pearson(&x, &[1.0; 4]).unwrap(), None);
        assert_eq!(pearson(&[1.0], &[2.0]).unwrap(), None);
        assert_eq!(pearson(&x, &[1.0]).unwrap_err().code(), "LENGTH_MISMATCH");
    }

    #[test]
    fn matrix_pairs_align_on_intersection() {
        let a = ScalarSeries::from_values("a", [(0, 1.0), (10, 2.0), (20, 3.0)]);
        let b = ScalarSeries::from_values("b", [(0, 5.0), (20, 1.0)]);
        let c = ScalarSeries::from_values("c", [(0, 0.1), (10, 0.1), (20, 0.1)]);
        let cols = [
            ColumnRef::new("r", "a"),
            ColumnRef::new("r", "b"),
            ColumnRef::new("r", "c"),
        ];
        let m = correlate(&cols, &[&a, &b, &c]);
        assert_eq!(m.support[0][1], 2);
        assert!((m.get(0, 1).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(m.get(0, 0), Some(1.0));
        assert_eq!(m.get(2, 2), None);
        assert_eq!(m.get(0, 2), None);
        assert_eq!(m.support[2][2], 3);
    }

    proptest! {
        #[test]
        fn agrees_with_two_pass(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..400)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            match (pearson(&x, &y).unwrap(), two_pass(&x, &y)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn affine_invariance(
            pairs in prop::collection::vec((0f64..100.0, 0f64..100.0), 3..100),
            scale in 0.1f64..10.0,
            shift in -50f64..50.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let Some(r) = pearson(&x, &y).unwrap() else { return Ok(()) };
            let xs: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
            let xn: Vec<f64> = x.iter().map(|v| -v * scale).collect();
            prop_assert!((pearson(&xs, &y).unwrap().unwrap() - r).abs() < 1e-9);
            prop_assert!((pearson(&xn, &y).unwrap().unwrap() + r).abs() < 1e-9);
        }
    }
}
