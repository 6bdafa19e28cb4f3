//! Statistical kernel: medians, Kruskal-Wallis with tie correction, the
//! chi-square survival function, the normal distribution function and the
//! Shapiro-Wilk W test (Royston's AS R94 approximation).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("at least two groups are required, got {0}")]
    TooFewGroups(usize),
    #[error("pooled sample needs at least 3 values, got {0}")]
    TooFewObservations(usize),
    #[error("all pooled values are identical")]
    DegenerateSample,
    #[error("statistic must be non-negative, got {0}")]
    NegativeStatistic(f64),
    #[error("degrees of freedom must be positive")]
    InvalidDegreesOfFreedom,
    #[error("sample size {0} outside the supported range 3..=5000")]
    SampleSizeOutOfRange(usize),
}

/// Kruskal-Wallis test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KwResult {
    /// Tie-corrected H statistic.
    pub h: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Shapiro-Wilk test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwResult {
    pub w: f64,
    pub p_value: f64,
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v
}

/// Median; the mean of the two middle order statistics for even sizes.
pub fn median(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(values)?;
    let v = sorted(values);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        Ok(v[mid])
    } else {
        Ok((v[mid - 1] + v[mid]) / 2.0)
    }
}

/// Midranks (1-based, ties share the average rank) of `values`, returned in
/// input order, plus the tie-group sizes.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

/// Kruskal-Wallis H test over `groups`, always tie-corrected, referred to a
/// chi-square distribution with `k - 1` degrees of freedom.
pub fn kruskal_wallis<G: AsRef<[f64]>>(groups: &[G]) -> Result<KwResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    let mut pooled = Vec::new();
    for group in groups {
        let g = group.as_ref();
        if g.is_empty() {
            return Err(StatsError::EmptySample);
        }
        check_finite(g)?;
        pooled.extend_from_slice(g);
    }
    let n = pooled.len();
    if n < 3 {
        return Err(StatsError::TooFewObservations(n));
    }

    let (ranks, ties) = midranks(&pooled);
    let nf = n as f64;
    let tie_sum: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let correction = 1.0 - tie_sum / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return Err(StatsError::DegenerateSample);
    }

    let mut offset = 0;
    let mut terms = Vec::with_capacity(groups.len());
    for group in groups {
        let len = group.as_ref().len();
        let rank_sum: f64 = ranks[offset..offset + len].iter().sum();
        terms.push(rank_sum * rank_sum / len as f64);
        offset += len;
    }
    terms.sort_by(f64::total_cmp);
    let sum_sq: f64 = terms.iter().sum();
    let h = 12.0 / (nf * (nf + 1.0)) * sum_sq - 3.0 * (nf + 1.0);
    let h = (h / correction).max(0.0);
    let df = (groups.len() - 1) as u32;
    let p_value = chi_square_sf(h, df)?;
    Ok(KwResult { h, df, p_value })
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + 7.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 10_000;

/// Regularized upper incomplete gamma Q(a, x) for `a > 0`, `x >= 0`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // Series for P, then complement.
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        (1.0 - sum * log_prefix.exp()).clamp(0.0, 1.0)
    } else {
        // Continued fraction for Q, modified Lentz.
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        (log_prefix.exp() * h).clamp(0.0, 1.0)
    }
}

/// Chi-square survival function P(X > x) with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: u32) -> Result<f64, StatsError> {
    if x.is_nan() {
        return Err(StatsError::NonFinite);
    }
    if x < 0.0 {
        return Err(StatsError::NegativeStatistic(x));
    }
    if df == 0 {
        return Err(StatsError::InvalidDegreesOfFreedom);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma_q(f64::from(df) / 2.0, x / 2.0))
}

/// Standard normal distribution function.
///
/// Hart's double-precision rational approximation, with a continued
/// fraction for the far tail.
pub fn normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let x = z.abs();
    let tail = if x > 37.0 {
        0.0
    } else {
        let e = (-x * x / 2.0).exp();
        if x < 7.071_067_811_865_47 {
            let mut num = 3.526_249_659_989_11e-2 * x + 0.700_383_064_443_688;
            num = num * x + 6.373_962_203_531_65;
            num = num * x + 33.912_866_078_383;
            num = num * x + 112.079_291_497_871;
            num = num * x + 221.213_596_169_931;
            num = num * x + 220.206_867_912_376;
            let mut den = 8.838_834_764_831_84e-2 * x + 1.755_667_163_182_64;
            den = den * x + 16.064_177_579_207;
            den = den * x + 86.780_732_202_946_1;
            den = den * x + 296.564_248_779_674;
            den = den * x + 637.333_633_378_831;
            den = den * x + 793.826_512_519_948;
            den = den * x + 440.413_735_824_752;
            e * num / den
        } else {
            let mut b = x + 0.65;
            b = x + 4.0 / b;
            b = x + 3.0 / b;
            b = x + 2.0 / b;
            b = x + 1.0 / b;
            e / b / 2.506_628_274_631
        }
    };
    if z > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Normal quantile, AS 111 accuracy (about 1e-7), which is what the W
/// coefficient approximation was fitted against.
fn normal_quantile_as111(p: f64) -> f64 {
    const A: [f64; 4] = [2.506_628_238_84, -18.615_000_625_29, 41.391_197_735_34, -25.441_060_496_37];
    const B: [f64; 4] = [-8.473_510_930_90, 23.083_367_437_43, -21.062_241_018_26, 3.130_829_098_33];
    const C: [f64; 4] = [-2.787_189_311_38, -2.297_964_791_34, 4.850_141_271_35, 2.321_212_768_58];
    const D: [f64; 2] = [3.543_889_247_62, 1.637_067_818_97];

    let q = p - 0.5;
    if q.abs() <= 0.42 {
        let r = q * q;
        return q * (((A[3] * r + A[2]) * r + A[1]) * r + A[0])
            / ((((B[3] * r + B[2]) * r + B[1]) * r + B[0]) * r + 1.0);
    }
    let r = if q > 0.0 { 1.0 - p } else { p };
    if r <= 0.0 {
        return 0.0;
    }
    let r = (-r.ln()).sqrt();
    let value = (((C[3] * r + C[2]) * r + C[1]) * r + C[0]) / ((D[1] * r + D[0]) * r + 1.0);
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Evaluates `c[0] + c[1] x + c[2] x^2 + ...`.
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &coef| acc * x + coef)
}

const SW_C1: [f64; 6] = [0.0, 0.221_157, -0.147_981, -2.071_19, 4.434_685, -2.706_056];
const SW_C2: [f64; 6] = [0.0, 0.042_981, -0.293_762, -1.752_461, 5.682_633, -3.582_633];
const SW_C3: [f64; 4] = [0.544, -0.399_78, 0.025_054, -6.714e-4];
const SW_C4: [f64; 4] = [1.3822, -0.778_57, 0.062_767, -0.002_032_2];
const SW_C5: [f64; 4] = [-1.5861, -0.310_82, -0.083_751, 0.003_891_5];
const SW_C6: [f64; 3] = [-0.4803, -0.082_676, 0.003_030_2];
const SW_G: [f64; 2] = [-2.273, 0.459];

/// Half-vector of Shapiro-Wilk coefficients (the largest-magnitude first,
/// sign convention of AS R94: `a[i]` weights `x[n-1-i] - x[i]`).
fn sw_coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let an = n as f64;
    let an25 = an + 0.25;
    let mut m: Vec<f64> = (0..half)
        .map(|i| normal_quantile_as111((i as f64 + 1.0 - 0.375) / an25))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    let a1 = poly(&SW_C1, rsn) - m[0] / ssumm2;

    let (first_free, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&SW_C2, rsn);
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        m[1] = a2;
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    m[0] = a1;
    for v in m.iter_mut().skip(first_free) {
        *v = -*v / fac;
    }
    m
}

/// Shapiro-Wilk normality test for `3 <= n <= 5000`.
pub fn shapiro_wilk(values: &[f64]) -> Result<SwResult, StatsError> {
    let n = values.len();
    if !(3..=5000).contains(&n) {
        return Err(StatsError::SampleSizeOutOfRange(n));
    }
    check_finite(values)?;
    let x = sorted(values);
    let range = x[n - 1] - x[0];
    if range <= 0.0 {
        return Err(StatsError::DegenerateSample);
    }

    let a = sw_coefficients(n);
    let half = n / 2;
    // Full antisymmetric coefficient vector over the sorted sample.
    let mut weights = vec![0.0; n];
    for i in 0..half {
        weights[i] = -a[i];
        weights[n - 1 - i] = a[i];
    }

    let scaled: Vec<f64> = x.iter().map(|v| v / range).collect();
    let mean_x = scaled.iter().sum::<f64>() / n as f64;
    let mean_a = weights.iter().sum::<f64>() / n as f64;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (w, xv) in weights.iter().zip(&scaled) {
        let da = w - mean_a;
        let dx = xv - mean_x;
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    if n == 3 {
        // Exact distribution for n = 3.
        let w = w.max(0.75);
        let p = (1.0 - 6.0 / std::f64::consts::PI * w.sqrt().acos()).max(0.0);
        return Ok(SwResult { w, p_value: p });
    }

    let y = w1.ln();
    let an = n as f64;
    let p_value = if n <= 11 {
        let gamma = poly(&SW_G, an);
        if y >= gamma {
            1e-19
        } else {
            let y = -(gamma - y).ln();
            let m = poly(&SW_C3, an);
            let s = poly(&SW_C4, an).exp();
            1.0 - normal_cdf((y - m) / s)
        }
    } else {
        let xx = an.ln();
        let m = poly(&SW_C5, xx);
        let s = poly(&SW_C6, xx).exp();
        1.0 - normal_cdf((y - m) / s)
    };
    Ok(SwResult { w, p_value })
}
