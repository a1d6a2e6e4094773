/// Kumaraswamy distribution on `[0, 1]`: `F(x) = 1 - (1 - x^a)^b`.
///
/// Both the CDF and the quantile function are closed-form, so the exceedance
/// probability at any threshold is known exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kumaraswamy {
    pub a: f64,
    pub b: f64,
}

impl Kumaraswamy {
    pub fn new(a: f64, b: f64) -> Option<Self> {
        (a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0).then_some(Self { a, b })
    }

    /// Shape `a` fixed, `b` solved so that `P(X >= t) = survival`.
    pub fn with_survival_at(a: f64, t: f64, survival: f64) -> Option<Self> {
        if !(0.0 < t && t < 1.0 && 0.0 < survival && survival < 1.0) {
            return None;
        }
        Self::new(a, survival.ln() / (1.0 - t.powf(a)).ln())
    }

    /// Shape `a` fixed, `b` solved so that `P(X <= x) = p`.
    pub fn with_cdf_at(a: f64, x: f64, p: f64) -> Option<Self> {
        if !(0.0 < x && x < 1.0 && 0.0 < p && p < 1.0) {
            return None;
        }
        Self::new(a, (1.0 - p).ln() / (1.0 - x.powf(a)).ln())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        1.0 - (1.0 - x.powf(self.a)).powf(self.b)
    }

    pub fn survival(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        (1.0 - (1.0 - u).powf(1.0 / self.b)).powf(1.0 / self.a).clamp(0.0, 1.0)
    }
}
