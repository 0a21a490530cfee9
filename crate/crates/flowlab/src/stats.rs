//! Reference distributions and hypothesis tests backing the experiments.
//!
//! The Kolmogorov asymptotic p-value series and the noncentral-chi-square
//! mixture behind the squared-Bessel marginal are implemented here; gamma /
//! beta special functions come from statrs.

use crate::error::{FlowError, Result};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf;
use statrs::function::gamma::gamma_lr;

/// Outcome of a single hypothesis test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: String,
}

/// Kolmogorov's asymptotic tail sum Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// p-value for a KS statistic at effective sample size `n_eff`, with the
/// standard small-sample correction sqrt(n) + 0.12 + 0.11/sqrt(n).
fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let root = n_eff.sqrt();
    kolmogorov_q(d * (root + 0.12 + 0.11 / root))
}

/// One-sample Kolmogorov–Smirnov test against a reference CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<TestResult> {
    if samples.is_empty() {
        return Err(FlowError::Parameter("ks_one_sample: empty sample".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS sample"));
    let n = xs.len();
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x).clamp(0.0, 1.0);
        let lo = i as f64 / n as f64;
        let hi = (i + 1) as f64 / n as f64;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    Ok(TestResult {
        statistic: d,
        p_value: ks_p_value(d, n as f64),
        n,
        method: "ks1".into(),
    })
}

/// Two-sample Kolmogorov–Smirnov test with effective n = nm/(n+m).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(FlowError::Parameter("ks_two_sample: empty sample".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).expect("NaN in KS sample"));
    ys.sort_by(|u, v| u.partial_cmp(v).expect("NaN in KS sample"));
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xs[i];
        let y = ys[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n as f64) * (m as f64) / (n as f64 + m as f64);
    Ok(TestResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
        n: n + m,
        method: "ks2".into(),
    })
}

/// Equal-count bin edges for `bins` quantile bins; returns the inner edges.
fn quantile_edges(samples: &[f64], bins: usize) -> Result<Vec<f64>> {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("NaN in chi2 sample"));
    let n = xs.len();
    let mut edges = Vec::with_capacity(bins - 1);
    for k in 1..bins {
        edges.push(xs[k * n / bins]);
    }
    edges.dedup();
    if edges.len() != bins - 1 {
        return Err(FlowError::Parameter(
            "independence_chi2: degenerate binning (ties or constant data); use fewer bins".into(),
        ));
    }
    Ok(edges)
}

fn bin_index(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e <= x)
}

/// Pearson chi-square test of independence on a quantile-binned contingency table.
pub fn independence_chi2(
    x_samples: &[f64],
    y_samples: &[f64],
    bins_x: usize,
    bins_y: usize,
) -> Result<TestResult> {
    if x_samples.len() != y_samples.len() {
        return Err(FlowError::Parameter("independence_chi2: length mismatch".into()));
    }
    if bins_x < 2 || bins_y < 2 {
        return Err(FlowError::Parameter("independence_chi2: need at least 2 bins".into()));
    }
    let n = x_samples.len();
    let ex = quantile_edges(x_samples, bins_x)?;
    let ey = quantile_edges(y_samples, bins_y)?;
    let mut counts = vec![0.0f64; bins_x * bins_y];
    for (&x, &y) in x_samples.iter().zip(y_samples) {
        counts[bin_index(&ex, x) * bins_y + bin_index(&ey, y)] += 1.0;
    }
    let row: Vec<f64> = (0..bins_x)
        .map(|i| (0..bins_y).map(|j| counts[i * bins_y + j]).sum())
        .collect();
    let col: Vec<f64> = (0..bins_y)
        .map(|j| (0..bins_x).map(|i| counts[i * bins_y + j]).sum())
        .collect();
    let mut chi2 = 0.0;
    for i in 0..bins_x {
        for j in 0..bins_y {
            let expected = row[i] * col[j] / n as f64;
            if expected < 5.0 {
                return Err(FlowError::Parameter(format!(
                    "independence_chi2: expected count {expected:.2} < 5 in cell ({i},{j}); use fewer bins"
                )));
            }
            let diff = counts[i * bins_y + j] - expected;
            chi2 += diff * diff / expected;
        }
    }
    let dof = ((bins_x - 1) * (bins_y - 1)) as f64;
    // survival function of chi-square(dof) via the regularized upper gamma
    let p = 1.0 - gamma_lr(dof / 2.0, chi2 / 2.0);
    Ok(TestResult {
        statistic: chi2,
        p_value: p.clamp(0.0, 1.0),
        n,
        method: "chi2-indep".into(),
    })
}

/// Exact marginal CDF of a squared Bessel process of dimension `delta`
/// started at `x0`, at time `t`: the law of t * (noncentral chi-square with
/// dof = delta and noncentrality x0/t), evaluated by its Poisson mixture.
pub fn besq_marginal_cdf(delta: f64, x0: f64, t: f64, y: f64) -> Result<f64> {
    if delta <= 0.0 || x0 < 0.0 || t <= 0.0 {
        return Err(FlowError::Parameter(format!(
            "besq_marginal_cdf: need delta > 0, x0 >= 0, t > 0 (got {delta}, {x0}, {t})"
        )));
    }
    if y <= 0.0 {
        return Ok(0.0);
    }
    let half_lambda = x0 / (2.0 * t);
    let z = y / (2.0 * t);
    // poisson(j; half_lambda) * P(delta/2 + j, z), summed until the remaining
    // Poisson mass is negligible
    let mut weight = (-half_lambda).exp();
    let mut cum_weight = 0.0;
    let mut sum = 0.0;
    for j in 0..100_000u64 {
        sum += weight * gamma_lr(delta / 2.0 + j as f64, z);
        cum_weight += weight;
        if 1.0 - cum_weight < 1e-12 {
            return Ok(sum.clamp(0.0, 1.0));
        }
        weight *= half_lambda / (j as f64 + 1.0);
    }
    Err(FlowError::Numeric(
        "besq_marginal_cdf: Poisson mixture did not converge".into(),
    ))
}

/// Self-normalized importance-sampling mean with a delta-method 99% CI.
/// Returns (mean, half_width).
pub fn weighted_mean_ci(samples: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    if samples.len() != weights.len() {
        return Err(FlowError::Parameter("weighted_mean_ci: length mismatch".into()));
    }
    if samples.is_empty() {
        return Err(FlowError::Parameter("weighted_mean_ci: empty input".into()));
    }
    if weights.iter().any(|&w| w <= 0.0 || !w.is_finite()) {
        return Err(FlowError::Parameter("weighted_mean_ci: weights must be positive and finite".into()));
    }
    let wsum: f64 = weights.iter().sum();
    let mean = samples.iter().zip(weights).map(|(&x, &w)| w * x).sum::<f64>() / wsum;
    let var = samples
        .iter()
        .zip(weights)
        .map(|(&x, &w)| (w * (x - mean)).powi(2))
        .sum::<f64>()
        / (wsum * wsum);
    // 99% two-sided normal quantile
    Ok((mean, 2.575_829_303_548_901 * var.sqrt()))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf::erf(x / std::f64::consts::SQRT_2))
}

/// CDF of |N(0,1)|.
pub fn half_normal_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        2.0 * normal_cdf(x) - 1.0
    }
}

/// Exponential CDF with rate `rate`.
pub fn exp_cdf(rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (-rate * x).exp()
    }
}

/// Beta(alpha, beta) CDF.
pub fn beta_cdf(alpha: f64, beta: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta_reg(alpha, beta, x)
    }
}
