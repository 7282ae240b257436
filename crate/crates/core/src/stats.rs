//! Paired t-test, Bonferroni correction and Cohen's d for multi-seed
//! comparisons.

use alloc::vec::Vec;

use crate::error::MetricsError;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with `n - 1` in the denominator.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * libm::log(x)
        + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatTestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Cohen's d of the two samples; `None` when the pooled deviation is zero.
    pub effect_size: Option<f64>,
    /// Equal to `p_value` until [`bonferroni`] is applied.
    pub adjusted_p: f64,
    pub degrees_of_freedom: usize,
    /// All differences were identical, so the statistic is 0 or infinite.
    pub degenerate: bool,
}

/// Paired two-sided t-test on `d = a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<StatTestResult, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(alloc::format!("{} vs {} observations", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(MetricsError::TooFewSamples { needed: 2, got: a.len() });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let md = mean(&diffs);
    let sd = libm::sqrt(sample_variance(&diffs));
    let df = diffs.len() - 1;
    let effect_size = cohens_d(a, b).ok();
    let (statistic, p_value, degenerate) = if sd == 0.0 {
        if md == 0.0 {
            (0.0, 1.0, true)
        } else {
            (f64::INFINITY.copysign(md), 0.0, true)
        }
    } else {
        let t = md / (sd / libm::sqrt(n));
        (t, student_t_two_sided_p(t, df as f64), false)
    };
    Ok(StatTestResult {
        statistic,
        p_value,
        effect_size,
        adjusted_p: p_value,
        degrees_of_freedom: df,
        degenerate,
    })
}

/// `min(1, m * p)` for each p-value.
pub fn bonferroni(p_values: &[f64], comparisons: usize) -> Result<Vec<f64>, MetricsError> {
    if comparisons < p_values.len() {
        return Err(MetricsError::TooFewComparisons {
            m: comparisons,
            n: p_values.len(),
        });
    }
    Ok(p_values.iter().map(|p| (p * comparisons as f64).min(1.0)).collect())
}

/// `(mean(a) - mean(b)) / pooled_sd`.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    for xs in [a, b] {
        if xs.len() < 2 {
            return Err(MetricsError::TooFewSamples { needed: 2, got: xs.len() });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = libm::sqrt(((na - 1.0) * sample_variance(a) + (nb - 1.0) * sample_variance(b)) / (na + nb - 2.0));
    if pooled == 0.0 {
        return Err(MetricsError::ZeroPooledDeviation);
    }
    Ok((mean(a) - mean(b)) / pooled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [0.9, 0.8, 0.95];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert!(r.degenerate);
        assert_eq!(cohens_d(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn constant_shift_is_degenerate() {
        let r = paired_t_test(&[2.0, 3.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.statistic, f64::INFINITY);
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn bonferroni_cases() {
        let adj = bonferroni(&[0.01, 0.5], 5).unwrap();
        assert!((adj[0] - 0.05).abs() < 1e-15);
        assert_eq!(adj[1], 1.0);
        assert!(bonferroni(&[0.1, 0.2], 1).is_err());
    }

    #[test]
    fn errors() {
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[2.0]).is_err());
        assert_eq!(cohens_d(&[1.0, 1.0], &[2.0, 2.0]), Err(MetricsError::ZeroPooledDeviation));
    }

    #[test]
    fn t_cdf_known_values() {
        // df = 1 is Cauchy: P(|T| > 1) = 0.5
        assert!((student_t_two_sided_p(1.0, 1.0) - 0.5).abs() < 1e-12);
        // df = 2: P(|T| > t) = 1 - t / sqrt(2 + t^2)
        let t = 1.7;
        let expected = 1.0 - t / libm::sqrt(2.0 + t * t);
        assert!((student_t_two_sided_p(t, 2.0) - expected).abs() < 1e-12);
    }
}
