//! Descriptive and inferential statistics used to summarize datasets.

pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("all x values are equal")]
    DegenerateX,
    #[error("correlation {0} has no Fisher z transform")]
    DegenerateR(f64),
    #[error("differences have zero variance")]
    ZeroVariance,
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn sem(xs: &[f64]) -> f64 {
    sample_sd(xs) / (xs.len() as f64).sqrt()
}

/// Quantile with linear interpolation between order statistics
/// (`h = (n - 1) q`).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty sample");
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Mean, spread and quartiles of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub sem: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let n = xs.len();
        let (sd, sem) = if n > 1 { (sample_sd(xs), sem(xs)) } else { (0.0, 0.0) };
        Summary { n, mean: mean(xs), sd, sem, median: median(xs), q25: quantile(xs, 0.25), q75: quantile(xs, 0.75) }
    }
}

pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::Invalid("length mismatch".into()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: xs.len() });
    }
    let mx = mean(xs);
    let my = mean(ys);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Average of correlations through Fisher's z.
pub fn fisher_mean_r(rs: &[f64]) -> Result<f64, StatsError> {
    if rs.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let mut z = 0.0;
    for &r in rs {
        if !(r > -1.0 && r < 1.0) {
            return Err(StatsError::DegenerateR(r));
        }
        z += r.atanh();
    }
    Ok((z / rs.len() as f64).tanh())
}

pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let mse = pairs.iter().map(|(p, o)| (p - o).powi(2)).sum::<f64>() / pairs.len() as f64;
    Ok(mse.sqrt())
}

/// Ordinary least squares line of reported on ideal confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    /// Fitted reported confidence at ideal = 0.5.
    pub value_at_half: f64,
    /// Fitted reported confidence at ideal = 0.
    pub intercept: f64,
    pub slope: f64,
    pub n: usize,
}

impl RegressionFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub fn calibration_regression(points: &[(f64, f64)]) -> Result<RegressionFit, StatsError> {
    if points.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: points.len() });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(StatsError::DegenerateX);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    Ok(RegressionFit { value_at_half: my + slope * (0.5 - mx), intercept, slope, n: points.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sides {
    One,
    Two,
}

/// Binomial coefficient; exact while it fits in the f64 mantissa.
fn choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0f64;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

fn binom_pmf(k: u64, n: u64, p: f64) -> f64 {
    if n <= 1000 {
        return choose(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    let ln_choose =
        special::ln_gamma(n as f64 + 1.0) - special::ln_gamma(k as f64 + 1.0) - special::ln_gamma((n - k) as f64 + 1.0);
    let ln_p = if k == 0 { 0.0 } else { k as f64 * p.ln() };
    let ln_q = if k == n { 0.0 } else { (n - k) as f64 * (1.0 - p).ln() };
    (ln_choose + ln_p + ln_q).exp()
}

/// Exact binomial test of `k` successes in `n` trials against `p0`.
///
/// One-sided tests the upper tail `P(X >= k)`. Two-sided sums every outcome
/// no more probable than `k` (relative slack `1e-7`).
pub fn exact_binomial_test(k: u64, n: u64, p0: f64, sides: Sides) -> Result<f64, StatsError> {
    if k > n {
        return Err(StatsError::Invalid(format!("k = {k} exceeds n = {n}")));
    }
    if !(0.0..=1.0).contains(&p0) {
        return Err(StatsError::Invalid(format!("p0 = {p0} outside [0, 1]")));
    }
    if p0 == 0.0 || p0 == 1.0 {
        let expected = if p0 == 0.0 { 0 } else { n };
        return Ok(if k == expected { 1.0 } else { 0.0 });
    }
    let p = match sides {
        Sides::One => (k..=n).map(|i| binom_pmf(i, n, p0)).sum::<f64>(),
        Sides::Two => {
            let observed = binom_pmf(k, n, p0);
            let cutoff = observed * (1.0 + 1e-7);
            (0..=n).map(|i| binom_pmf(i, n, p0)).filter(|&d| d <= cutoff).sum::<f64>()
        }
    };
    Ok(p.min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

/// One-sample t-test of paired differences against zero (two-sided).
pub fn paired_t_test(diffs: &[f64]) -> Result<TTest, StatsError> {
    if diffs.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: diffs.len() });
    }
    let sd = sample_sd(diffs);
    if sd == 0.0 || diffs.iter().all(|&d| d == diffs[0]) {
        return Err(StatsError::ZeroVariance);
    }
    let n = diffs.len() as f64;
    let t = mean(diffs) / (sd / n.sqrt());
    let df = diffs.len() - 1;
    Ok(TTest { t, df, p: t_p_value(t, df as f64) })
}

/// Two-sided p-value of a t statistic.
pub fn t_p_value(t: f64, df: f64) -> f64 {
    special::t_two_sided(t, df)
}
