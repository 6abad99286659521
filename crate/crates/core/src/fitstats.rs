//! Power-law amplitude fitting and Kolmogorov-Smirnov comparisons.
//!
//! The model is a fixed inverse power law `xi(r) = A / r` with the exponent
//! pinned at -1; only the amplitude is free, so the least-squares solution
//! is closed-form. Goodness of fit compares the empirical distribution of
//! the observed values with the model values at the same bins through a
//! two-sample Kolmogorov-Smirnov test.

use serde::Serialize;

use crate::error::{Error, Result};

/// Closed-form least-squares amplitude for `xi(r) = A / r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub amplitude: f64,
    pub n_points_used: usize,
    pub residual_sum_squares: f64,
    pub weighted: bool,
}

impl PowerLawFit {
    pub fn model(&self, r: f64) -> f64 {
        self.amplitude / r
    }
}

fn check_r(r: &[f64], n: usize) -> Result<()> {
    if r.len() != n {
        return Err(Error::LengthMismatch {
            left: r.len(),
            right: n,
        });
    }
    for &v in r {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::NonPositiveRadius(v));
        }
    }
    Ok(())
}

/// Fits the amplitude over the defined bins: `A = sum(xi/r) / sum(1/r^2)`.
pub fn fit_inverse_power_law(r: &[f64], xi: &[Option<f64>]) -> Result<PowerLawFit> {
    check_r(r, xi.len())?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut used = 0usize;
    for (&rk, v) in r.iter().zip(xi) {
        if let Some(x) = v {
            num += x / rk;
            den += 1.0 / (rk * rk);
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::NoDefinedPoints);
    }
    let amplitude = num / den;
    let rss: f64 = r
        .iter()
        .zip(xi)
        .filter_map(|(&rk, v)| v.map(|x| (x - amplitude / rk) * (x - amplitude / rk)))
        .sum();
    Ok(PowerLawFit {
        amplitude,
        n_points_used: used,
        residual_sum_squares: rss,
        weighted: false,
    })
}

/// Inverse-variance weighted variant. Bins contribute only when both the
/// value and a strictly positive sigma are present.
pub fn fit_inverse_power_law_weighted(
    r: &[f64],
    xi: &[Option<f64>],
    sigma: &[Option<f64>],
) -> Result<PowerLawFit> {
    check_r(r, xi.len())?;
    if sigma.len() != xi.len() {
        return Err(Error::LengthMismatch {
            left: sigma.len(),
            right: xi.len(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut used = 0usize;
    for ((&rk, v), s) in r.iter().zip(xi).zip(sigma) {
        let (x, sig) = match (v, s) {
            (Some(x), Some(sig)) => (*x, *sig),
            _ => continue,
        };
        if sig.is_nan() || sig <= 0.0 {
            return Err(Error::NonPositiveSigma(sig));
        }
        let w = 1.0 / (sig * sig);
        num += w * x / rk;
        den += w / (rk * rk);
        used += 1;
    }
    if used == 0 {
        return Err(Error::NoDefinedPoints);
    }
    let amplitude = num / den;
    let rss: f64 = r
        .iter()
        .zip(xi.iter().zip(sigma))
        .filter_map(|(&rk, (v, s))| match (v, s) {
            (Some(x), Some(sig)) => {
                let res = (x - amplitude / rk) / sig;
                Some(res * res)
            }
            _ => None,
        })
        .sum();
    Ok(PowerLawFit {
        amplitude,
        n_points_used: used,
        residual_sum_squares: rss,
        weighted: true,
    })
}

/// Upper tail of the Kolmogorov distribution,
/// `Q(lambda) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lambda^2)`,
/// truncated when a term drops below 1e-10 and clamped to [0, 1].
pub fn kolmogorov_upper_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100u32 {
        let e = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * e;
        if e < 1e-10 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsReport {
    pub d_statistic: f64,
    pub p_value: f64,
    /// Sample sizes; `n2 = 0` marks a one-sample test.
    pub n1: usize,
    pub n2: usize,
}

fn sorted_finite(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObservation);
    }
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
    Ok(v)
}

/// Right-continuous ECDF evaluated through a sorted sample.
fn ecdf(sorted: &[f64], v: f64) -> f64 {
    sorted.partition_point(|&e| e <= v) as f64 / sorted.len() as f64
}

/// Two-sample Kolmogorov-Smirnov test. The supremum of the ECDF difference
/// is attained at pooled sample points, and the p-value uses the asymptotic
/// tail at effective size `n1*n2/(n1+n2)`.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsReport> {
    let xs = sorted_finite(x)?;
    let ys = sorted_finite(y)?;
    let mut d: f64 = 0.0;
    for v in xs.iter().chain(ys.iter()) {
        d = d.max((ecdf(&xs, *v) - ecdf(&ys, *v)).abs());
    }
    let n1 = xs.len() as f64;
    let n2 = ys.len() as f64;
    let n_eff = n1 * n2 / (n1 + n2);
    Ok(KsReport {
        d_statistic: d,
        p_value: kolmogorov_upper_tail(n_eff.sqrt() * d),
        n1: xs.len(),
        n2: ys.len(),
    })
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(x: &[f64], cdf: F) -> Result<KsReport> {
    let xs = sorted_finite(x)?;
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in xs.iter().enumerate() {
        let f = cdf(v);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsReport {
        d_statistic: d,
        p_value: kolmogorov_upper_tail(n.sqrt() * d),
        n1: xs.len(),
        n2: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodnessOfFit {
    pub ks: KsReport,
    pub alpha: f64,
    pub accepted: bool,
}

/// Compares observed values against the fitted model values at the same
/// defined bins. The fit is accepted unless `p < alpha`.
pub fn goodness_of_fit(
    r: &[f64],
    xi: &[Option<f64>],
    fit: &PowerLawFit,
    alpha: f64,
) -> Result<GoodnessOfFit> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    check_r(r, xi.len())?;
    let mut observed = Vec::new();
    let mut modeled = Vec::new();
    for (&rk, v) in r.iter().zip(xi) {
        if let Some(x) = v {
            observed.push(*x);
            modeled.push(fit.model(rk));
        }
    }
    if observed.is_empty() {
        return Err(Error::NoDefinedPoints);
    }
    let ks = ks_two_sample(&observed, &modeled)?;
    Ok(GoodnessOfFit {
        ks,
        alpha,
        accepted: ks.p_value >= alpha,
    })
}
