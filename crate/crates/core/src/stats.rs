//! Small statistical helpers shared by the Monte Carlo checks.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Wilson score interval for `successes / trials` at normal quantile `z`.
pub fn wilson(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

pub const Z95: f64 = 1.959_963_984_540_054;

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson goodness of fit. Adjacent cells are pooled left to right until
/// each pooled cell expects at least 5 observations.
pub fn chi_square_gof(observed: &[f64], expected: &[f64]) -> ChiSquare {
    assert_eq!(observed.len(), expected.len());
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &ex) in observed.iter().zip(expected) {
        o += ob;
        e += ex;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return ChiSquare { statistic: 0.0, dof: 0, p_value: 1.0 };
    }
    let statistic: f64 = cells.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let p_value = ChiSquared::new(dof as f64).expect("dof > 0").sf(statistic);
    ChiSquare { statistic, dof, p_value }
}

/// Binomial(n, p) probabilities for `k = 0..=k_max`, by the ratio recurrence.
pub fn binomial_pmf_prefix(n: u64, p: f64, k_max: u64) -> Vec<f64> {
    let k_max = k_max.min(n);
    let mut out = Vec::with_capacity(k_max as usize + 1);
    if p <= 0.0 {
        out.push(1.0);
        out.resize(k_max as usize + 1, 0.0);
        return out;
    }
    if p >= 1.0 {
        out.resize(k_max as usize + 1, 0.0);
        if k_max == n {
            out[n as usize] = 1.0;
        }
        return out;
    }
    let ratio = p / (1.0 - p);
    let mut pk = (n as f64 * (-p).ln_1p()).exp();
    out.push(pk);
    for k in 0..k_max {
        pk *= (n - k) as f64 / (k + 1) as f64 * ratio;
        out.push(pk);
    }
    out
}

/// Smallest `k` with `P(Bin(n, p) <= k) > u`, for `u` in `[0, 1)`.
pub fn binomial_quantile(n: u64, p: f64, u: f64) -> u64 {
    if p <= 0.0 || n == 0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let ratio = p / (1.0 - p);
    let mut pk = (n as f64 * (-p).ln_1p()).exp();
    let mut cdf = pk;
    let mut k = 0u64;
    while cdf <= u && k < n {
        pk *= (n - k) as f64 / (k + 1) as f64 * ratio;
        k += 1;
        cdf += pk;
    }
    k
}

/// Maximum-likelihood logistic curve `P(x) = 1 / (1 + exp(-(a + b x)))`
/// fitted to binomial counts.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LogisticFit {
    pub intercept: f64,
    pub slope: f64,
    /// The `x` where the fitted curve equals one half.
    pub midpoint: f64,
}

pub fn fit_logistic(points: &[(f64, u64, u64)]) -> Option<LogisticFit> {
    if points.len() < 2 {
        return None;
    }
    let total: f64 = points.iter().map(|p| p.2 as f64).sum();
    let centre = points.iter().map(|p| p.0 * p.2 as f64).sum::<f64>() / total;
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, s, n) in points {
            let z = x - centre;
            let p = 1.0 / (1.0 + (-(a + b * z)).exp());
            let n = n as f64;
            let r = s as f64 - n * p;
            let w = n * p * (1.0 - p);
            g0 += r;
            g1 += r * z;
            h00 += w;
            h01 += w * z;
            h11 += w * z * z;
        }
        // tiny ridge keeps the step finite on separable data
        h00 += 1e-9;
        h11 += 1e-9;
        let det = h00 * h11 - h01 * h01;
        if !det.is_finite() || det <= 0.0 {
            break;
        }
        let da = (h11 * g0 - h01 * g1) / det;
        let db = (h00 * g1 - h01 * g0) / det;
        a += da;
        b += db;
        if da.abs() < 1e-12 && db.abs() < 1e-12 * b.abs().max(1.0) {
            break;
        }
    }
    if b == 0.0 || !b.is_finite() || !a.is_finite() {
        return None;
    }
    let midpoint = centre - a / b;
    Some(LogisticFit { intercept: a - b * centre, slope: b, midpoint })
}
