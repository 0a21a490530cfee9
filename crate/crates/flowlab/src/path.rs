//! Uniformly discretized sample paths and direct simulation of the scalar
//! processes: Brownian motion, the perturbed reflecting Brownian motion (the
//! mu-process), squared Bessel and Jacobi diffusions, reflecting Brownian
//! motion with drift, and Bass–Burdzy flow lines.

use crate::error::{FlowError, Result};
use crate::rng::RngStream;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// A real-valued process sampled on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    /// Model time of the first sample.
    pub t0: f64,
    /// Time step between consecutive samples (> 0).
    pub dt: f64,
    /// Ordered samples; never empty.
    pub values: Vec<f64>,
    /// Index at which the process was absorbed, if any; all later samples are
    /// equal to the absorbed value.
    pub absorbed_at: Option<usize>,
    /// Free-form provenance tag.
    pub label: String,
}

impl SamplePath {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if dt <= 0.0 {
            return Err(FlowError::Parameter(format!("SamplePath: dt must be > 0, got {dt}")));
        }
        if values.is_empty() {
            return Err(FlowError::Parameter("SamplePath: empty values".into()));
        }
        Ok(Self { t0, dt, values, absorbed_at: None, label: label.into() })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Model time of sample `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Model time of the last sample.
    pub fn t_end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Linear interpolation at model time `t`.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        let s = (t - self.t0) / self.dt;
        if s < -1e-9 || s > (self.len() - 1) as f64 + 1e-9 {
            return Err(FlowError::Range(format!(
                "time {t} outside path horizon [{}, {}]",
                self.t0,
                self.t_end()
            )));
        }
        let s = s.clamp(0.0, (self.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.len() - 2).min(self.len() - 1);
        if self.len() == 1 {
            return Ok(self.values[0]);
        }
        let frac = s - i as f64;
        Ok(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac)
    }

    /// The path reversed in time: sample i of the output is sample n-1-i of
    /// the input, re-anchored at time 0.
    pub fn reversed(&self) -> SamplePath {
        let mut values: Vec<f64> = self.values.clone();
        values.reverse();
        SamplePath {
            t0: 0.0,
            dt: self.dt,
            values,
            absorbed_at: None,
            label: format!("{}:reversed", self.label),
        }
    }

    /// Contiguous sub-path between sample indices [i0, i1], re-anchored so the
    /// slice keeps its original times.
    pub fn slice(&self, i0: usize, i1: usize) -> Result<SamplePath> {
        if i0 > i1 || i1 >= self.len() {
            return Err(FlowError::Range(format!(
                "slice [{i0}, {i1}] outside 0..{}",
                self.len()
            )));
        }
        Ok(SamplePath {
            t0: self.time(i0),
            dt: self.dt,
            values: self.values[i0..=i1].to_vec(),
            absorbed_at: None,
            label: self.label.clone(),
        })
    }
}

/// Parameters of the perturbed reflecting Brownian motion.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PrbmParams {
    /// Perturbation parameter mu > 0.
    pub mu: f64,
    /// Derived dimension delta = 2/mu.
    pub delta: f64,
}

impl PrbmParams {
    pub fn new(mu: f64) -> Result<Self> {
        if mu <= 0.0 || !mu.is_finite() {
            return Err(FlowError::Parameter(format!("PrbmParams: mu must be > 0, got {mu}")));
        }
        Ok(Self { mu, delta: 2.0 / mu })
    }

    pub fn from_delta(delta: f64) -> Result<Self> {
        if delta <= 0.0 || !delta.is_finite() {
            return Err(FlowError::Parameter(format!(
                "PrbmParams: delta must be > 0, got {delta}"
            )));
        }
        Ok(Self { mu: 2.0 / delta, delta })
    }
}

/// Boundary behavior of a squared Bessel path at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BesqBoundary {
    /// Absorbed at the first nonpositive crossing.
    Killed,
    /// Clamped to >= 0 after every step.
    Reflected,
}

/// Standard Brownian motion started at 0; `n_samples` grid points including
/// the start.
pub fn simulate_bm(n_samples: usize, dt: f64, rng: RngStream) -> Result<SamplePath> {
    if n_samples == 0 {
        return Err(FlowError::Parameter("simulate_bm: need at least one sample".into()));
    }
    if dt <= 0.0 {
        return Err(FlowError::Parameter(format!("simulate_bm: dt must be > 0, got {dt}")));
    }
    let mut gen = rng.rng();
    let sqrt_dt = dt.sqrt();
    let mut values = Vec::with_capacity(n_samples);
    let mut w = 0.0;
    values.push(w);
    for _ in 1..n_samples {
        let z: f64 = StandardNormal.sample(&mut gen);
        w += sqrt_dt * z;
        values.push(w);
    }
    SamplePath::new(0.0, dt, values, "bm")
}

/// One half of the mu-process, built from a Brownian path W by the running-max
/// construction: |B| = M - W and the local time at 0 is M, so the half-path is
/// (M - W) + sign * mu * M with sign = -1 on the forward half and +1 on the
/// reversed (negative-time) half. Returns values for indices 1.. (the start 0
/// is shared by both halves).
fn prbm_half(mu: f64, sign: f64, n_steps: usize, dt: f64, rng: RngStream) -> Vec<f64> {
    let mut gen = rng.rng();
    let sqrt_dt = dt.sqrt();
    let mut w = 0.0;
    let mut m = 0.0f64;
    let mut out = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let z: f64 = StandardNormal.sample(&mut gen);
        w += sqrt_dt * z;
        m = m.max(w);
        out.push((m - w) + sign * mu * m);
    }
    out
}

/// Two-sided perturbed reflecting Brownian motion on [t_neg, t_pos] with
/// X_0 = 0. The two halves are driven by independent substreams (0 for the
/// positive half, 1 for the negative half).
pub fn simulate_prbm(
    params: PrbmParams,
    t_neg: f64,
    t_pos: f64,
    dt: f64,
    rng: RngStream,
) -> Result<SamplePath> {
    if t_neg > 0.0 || t_pos < 0.0 {
        return Err(FlowError::Parameter(format!(
            "simulate_prbm: need t_neg <= 0 <= t_pos, got [{t_neg}, {t_pos}]"
        )));
    }
    if dt <= 0.0 {
        return Err(FlowError::Parameter(format!("simulate_prbm: dt must be > 0, got {dt}")));
    }
    let n_neg = (-t_neg / dt).round() as usize;
    let n_pos = (t_pos / dt).round() as usize;
    let pos = prbm_half(params.mu, -1.0, n_pos, dt, rng.substream(0));
    let neg = prbm_half(params.mu, 1.0, n_neg, dt, rng.substream(1));
    let mut values = Vec::with_capacity(n_neg + n_pos + 1);
    values.extend(neg.iter().rev());
    values.push(0.0);
    values.extend(pos.iter());
    SamplePath::new(-(n_neg as f64) * dt, dt, values, format!("prbm(mu={})", params.mu))
}

/// Squared Bessel path of dimension `delta` from `x0`, Euler–Maruyama with
/// full truncation inside the square root.
pub fn simulate_besq(
    delta: f64,
    x0: f64,
    n_samples: usize,
    dt: f64,
    boundary: BesqBoundary,
    rng: RngStream,
) -> Result<SamplePath> {
    if x0 < 0.0 {
        return Err(FlowError::Parameter(format!("simulate_besq: x0 must be >= 0, got {x0}")));
    }
    if boundary == BesqBoundary::Reflected && delta <= 0.0 {
        return Err(FlowError::Parameter(format!(
            "simulate_besq: reflection requires delta > 0, got {delta}"
        )));
    }
    if n_samples == 0 || dt <= 0.0 {
        return Err(FlowError::Parameter("simulate_besq: need n_samples >= 1 and dt > 0".into()));
    }
    let mut gen = rng.rng();
    let sqrt_dt = dt.sqrt();
    let mut values = Vec::with_capacity(n_samples);
    let mut s = x0;
    let mut absorbed_at = None;
    values.push(s);
    for i in 1..n_samples {
        // increments are drawn regardless of absorption so that two paths on
        // the same stream share their driving noise step for step
        let z: f64 = StandardNormal.sample(&mut gen);
        if absorbed_at.is_none() {
            s += 2.0 * s.max(0.0).sqrt() * sqrt_dt * z + delta * dt;
            match boundary {
                BesqBoundary::Killed => {
                    if s <= 0.0 {
                        s = 0.0;
                        absorbed_at = Some(i);
                    }
                }
                BesqBoundary::Reflected => s = s.max(0.0),
            }
        }
        values.push(s);
    }
    let mut path = SamplePath::new(0.0, dt, values, format!("besq(delta={delta})"))?;
    path.absorbed_at = absorbed_at;
    Ok(path)
}

/// Jacobi(delta, delta') path from v0: Euler step, clamp to [0,1], then test
/// absorption. Absorbed at 1 always; absorbed at 0 only when `killed`.
pub fn simulate_jacobi(
    delta: f64,
    delta_prime: f64,
    v0: f64,
    n_samples: usize,
    dt: f64,
    killed: bool,
    rng: RngStream,
) -> Result<SamplePath> {
    if !(0.0..=1.0).contains(&v0) {
        return Err(FlowError::Parameter(format!(
            "simulate_jacobi: v0 must lie in [0,1], got {v0}"
        )));
    }
    if n_samples == 0 || dt <= 0.0 {
        return Err(FlowError::Parameter("simulate_jacobi: need n_samples >= 1 and dt > 0".into()));
    }
    let mut gen = rng.rng();
    let sqrt_dt = dt.sqrt();
    let mut values = Vec::with_capacity(n_samples);
    let mut y = v0;
    let mut absorbed_at = if v0 == 1.0 || (killed && v0 == 0.0) { Some(0) } else { None };
    values.push(y);
    for i in 1..n_samples {
        let z: f64 = StandardNormal.sample(&mut gen);
        if absorbed_at.is_none() {
            y += 2.0 * (y * (1.0 - y)).max(0.0).sqrt() * sqrt_dt * z
                + (delta * (1.0 - y) - delta_prime * y) * dt;
            y = y.clamp(0.0, 1.0);
            if y == 1.0 || (killed && y == 0.0) {
                absorbed_at = Some(i);
            }
        }
        values.push(y);
    }
    let mut path = SamplePath::new(0.0, dt, values, format!("jacobi({delta},{delta_prime})"))?;
    path.absorbed_at = absorbed_at;
    Ok(path)
}

/// Reflecting Brownian motion with drift 1 - delta/2, via the running-max
/// representation sup_{s<=t}(B_s + (delta/2 - 1)s) - (B_t + (delta/2 - 1)t).
pub fn simulate_reflected_drift_bm(
    delta: f64,
    n_samples: usize,
    dt: f64,
    rng: RngStream,
) -> Result<SamplePath> {
    if n_samples == 0 || dt <= 0.0 {
        return Err(FlowError::Parameter(
            "simulate_reflected_drift_bm: need n_samples >= 1 and dt > 0".into(),
        ));
    }
    let mut gen = rng.rng();
    let sqrt_dt = dt.sqrt();
    let drift = delta / 2.0 - 1.0;
    let mut d = 0.0f64;
    let mut m = 0.0f64;
    let mut values = Vec::with_capacity(n_samples);
    values.push(0.0);
    for i in 1..n_samples {
        let z: f64 = StandardNormal.sample(&mut gen);
        d += sqrt_dt * z + drift * dt;
        let _ = i;
        m = m.max(d);
        values.push(m - d);
    }
    SamplePath::new(0.0, dt, values, format!("gamma+(delta={delta})"))
}

/// One Bass–Burdzy flow line started at `x`, driven by the increments of a
/// given Brownian path: dR = sigma dW + beta1 1{R<0} dt + beta2 1{R>=0} dt
/// (at R = 0 exactly the drift is beta2).
pub fn simulate_bass_burdzy_line(
    x: f64,
    beta1: f64,
    beta2: f64,
    sigma: f64,
    driver: &SamplePath,
) -> Result<SamplePath> {
    if sigma <= 0.0 {
        return Err(FlowError::Parameter(format!(
            "simulate_bass_burdzy_line: sigma must be > 0, got {sigma}"
        )));
    }
    let dt = driver.dt;
    let mut values = Vec::with_capacity(driver.len());
    let mut r = x;
    values.push(r);
    for i in 1..driver.len() {
        let dw = driver.values[i] - driver.values[i - 1];
        let drift = if r < 0.0 { beta1 } else { beta2 };
        r += sigma * dw + drift * dt;
        values.push(r);
    }
    SamplePath::new(driver.t0, dt, values, format!("bass-burdzy({beta1},{beta2})"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_one_sample, normal_cdf};

    fn stream(i: u64) -> RngStream {
        RngStream::new(2024, i)
    }

    #[test]
    fn bm_single_sample_is_zero() {
        let p = simulate_bm(1, 0.1, stream(0)).unwrap();
        assert_eq!(p.values, vec![0.0]);
    }

    #[test]
    fn bm_rejects_bad_parameters() {
        assert!(simulate_bm(0, 0.1, stream(0)).is_err());
        assert!(simulate_bm(10, 0.0, stream(0)).is_err());
    }

    #[test]
    fn bm_is_deterministic() {
        let a = simulate_bm(500, 1e-3, stream(1)).unwrap();
        let b = simulate_bm(500, 1e-3, stream(1)).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn bm_unit_time_variance() {
        // var of W_1 over replicas within 3 * sqrt(2/n) of 1
        let n = 20_000;
        let mut sum2 = 0.0;
        for rep in 0..n {
            let p = simulate_bm(101, 0.01, stream(rep)).unwrap();
            sum2 += p.values[100] * p.values[100];
        }
        let var = sum2 / n as f64;
        let tol = 3.0 * (2.0 / n as f64).sqrt();
        assert!((var - 1.0).abs() < tol, "var {var}");
    }

    #[test]
    fn prbm_starts_at_zero_and_halves_are_independent() {
        let params = PrbmParams::new(0.7).unwrap();
        let p = simulate_prbm(params, -1.0, 1.0, 0.01, stream(3)).unwrap();
        let zero_idx = ((0.0 - p.t0) / p.dt).round() as usize;
        assert_eq!(p.values[zero_idx], 0.0);
        assert_eq!(p.t0, -1.0);
        assert!((p.t_end() - 1.0).abs() < 1e-12);
        // a different stream changes both halves; swapping the substream
        // labels is covered by construction (substream 0 = positive half)
        let q = simulate_prbm(params, -1.0, 1.0, 0.01, stream(4)).unwrap();
        assert_ne!(p.values, q.values);
    }

    #[test]
    fn prbm_negative_half_is_nonnegative() {
        let params = PrbmParams::new(1.3).unwrap();
        let p = simulate_prbm(params, -2.0, 0.0, 1e-3, stream(5)).unwrap();
        assert!(p.values.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn prbm_mu_one_unit_marginal_is_standard_normal() {
        // for mu = 1 the positive half is exactly a Brownian motion at grid points
        let params = PrbmParams::new(1.0).unwrap();
        let samples: Vec<f64> = (0..10_000)
            .map(|rep| {
                let p = simulate_prbm(params, 0.0, 1.0, 0.01, stream(rep)).unwrap();
                *p.values.last().unwrap()
            })
            .collect();
        let r = ks_one_sample(&samples, normal_cdf).unwrap();
        assert!(r.p_value > 0.01, "p = {}", r.p_value);
    }

    #[test]
    fn prbm_unit_time_mean_matches_running_max_oracle() {
        // E[X_1] = (1 - mu) E[M_1]; estimate E[M_1] from independent BM paths
        // at the same resolution
        let mu = 0.5;
        let params = PrbmParams::new(mu).unwrap();
        let n = 20_000;
        let dt = 1e-3;
        let mut x_mean = 0.0;
        let mut m_mean = 0.0;
        let mut m_var = 0.0;
        for rep in 0..n {
            let p = simulate_prbm(params, 0.0, 1.0, dt, stream(rep)).unwrap();
            x_mean += p.values.last().unwrap() / n as f64;
            let w = simulate_bm(1001, dt, RngStream::new(777, rep)).unwrap();
            let m = w.values.iter().cloned().fold(0.0f64, f64::max);
            m_mean += m / n as f64;
            m_var += m * m / n as f64;
        }
        m_var -= m_mean * m_mean;
        let expect = (1.0 - mu) * m_mean;
        // X_1 variance is O(1); combine both standard errors loosely
        let se = 3.0 * ((1.0 + m_var) / n as f64).sqrt();
        assert!((x_mean - expect).abs() < se, "{x_mean} vs {expect} +- {se}");
    }

    #[test]
    fn besq_zero_start_zero_dim_stays_zero() {
        let p = simulate_besq(0.0, 0.0, 100, 1e-3, BesqBoundary::Killed, stream(0)).unwrap();
        assert!(p.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn besq_rejects_bad_parameters() {
        assert!(simulate_besq(2.0, -1.0, 10, 0.1, BesqBoundary::Killed, stream(0)).is_err());
        assert!(simulate_besq(-1.0, 1.0, 10, 0.1, BesqBoundary::Reflected, stream(0)).is_err());
    }

    #[test]
    fn besq_mean_is_x0_plus_delta_t() {
        let n = 50_000;
        let mut mean = 0.0;
        for rep in 0..n {
            let p = simulate_besq(2.0, 1.0, 101, 0.01, BesqBoundary::Reflected, stream(rep)).unwrap();
            mean += p.values.last().unwrap() / n as f64;
        }
        // E = 3, var = 4 x0 t + 2 delta t^2 = 8
        let se = 3.0 * (8.0f64 / n as f64).sqrt();
        assert!((mean - 3.0).abs() < se, "mean {mean}");
    }

    #[test]
    fn besq_two_dims_from_zero_is_exponential() {
        let samples: Vec<f64> = (0..10_000)
            .map(|rep| {
                let p =
                    simulate_besq(2.0, 0.0, 1001, 1e-3, BesqBoundary::Reflected, stream(rep)).unwrap();
                *p.values.last().unwrap()
            })
            .collect();
        let r = ks_one_sample(&samples, |y| crate::stats::exp_cdf(0.5, y)).unwrap();
        assert!(r.p_value > 0.01, "p = {}", r.p_value);
    }

    #[test]
    fn besq_shared_driver_preserves_order() {
        for rep in 0..50 {
            let lo = simulate_besq(2.0, 1.0, 1000, 1e-3, BesqBoundary::Reflected, stream(rep)).unwrap();
            let hi = simulate_besq(2.0, 2.0, 1000, 1e-3, BesqBoundary::Reflected, stream(rep)).unwrap();
            for (a, b) in lo.values.iter().zip(&hi.values) {
                assert!(a <= b);
            }
        }
    }

    #[test]
    fn besq_killed_path_stays_absorbed() {
        // delta = -1 forces absorption quickly
        let p = simulate_besq(-1.0, 0.05, 2000, 1e-3, BesqBoundary::Killed, stream(9)).unwrap();
        let k = p.absorbed_at.expect("should absorb");
        assert!(p.values[k..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn jacobi_boundary_starts_are_constant() {
        let one = simulate_jacobi(2.0, 2.0, 1.0, 50, 1e-3, false, stream(0)).unwrap();
        assert!(one.values.iter().all(|&y| y == 1.0));
        assert_eq!(one.absorbed_at, Some(0));
        let zero = simulate_jacobi(2.0, 2.0, 0.0, 50, 1e-3, true, stream(0)).unwrap();
        assert!(zero.values.iter().all(|&y| y == 0.0));
    }

    #[test]
    fn jacobi_stays_in_unit_interval_and_freezes_at_one() {
        for rep in 0..20 {
            let p = simulate_jacobi(4.0, 0.5, 0.3, 2000, 1e-3, false, stream(rep)).unwrap();
            assert!(p.values.iter().all(|&y| (0.0..=1.0).contains(&y)));
            if let Some(k) = p.absorbed_at {
                assert!(p.values[k..].iter().all(|&y| y == p.values[k]));
            }
        }
    }

    #[test]
    fn jacobi_mean_solves_linear_ode() {
        // With delta' = 0 the drift vanishes at the absorbing boundary 1, so
        // absorption does not perturb the first-moment equation:
        // m' = delta (1 - m), m(0) = 0.2, at t = 0.25.
        let n = 20_000;
        let dt = 2e-4;
        let mut mean = 0.0;
        let mut sq = 0.0;
        for rep in 0..n {
            let p = simulate_jacobi(2.0, 0.0, 0.2, 1251, dt, false, stream(rep)).unwrap();
            let y = *p.values.last().unwrap();
            mean += y / n as f64;
            sq += y * y / n as f64;
        }
        let expect = 1.0 + (0.2 - 1.0) * (-0.5f64).exp();
        let var = sq - mean * mean;
        let se = 3.0 * (var / n as f64).sqrt();
        assert!((mean - expect).abs() < se + 0.002, "mean {mean} vs {expect}");
    }

    #[test]
    fn reflected_drift_bm_is_nonnegative_from_zero() {
        let p = simulate_reflected_drift_bm(1.0, 1000, 1e-3, stream(11)).unwrap();
        assert_eq!(p.values[0], 0.0);
        assert!(p.values.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn reflected_drift_bm_delta_two_is_half_normal() {
        // Fine steps keep the discrete-supremum bias (~0.58 sqrt(dt)) well
        // below the KS detection threshold at this sample size.
        let samples: Vec<f64> = (0..4_000)
            .map(|rep| {
                let p = simulate_reflected_drift_bm(2.0, 10_001, 1e-4, stream(rep)).unwrap();
                *p.values.last().unwrap()
            })
            .collect();
        let r = ks_one_sample(&samples, crate::stats::half_normal_cdf).unwrap();
        assert!(r.p_value > 0.01, "p = {}", r.p_value);
    }

    #[test]
    fn bass_burdzy_zero_drift_reproduces_driver() {
        let driver = simulate_bm(500, 1e-3, stream(13)).unwrap();
        let r = simulate_bass_burdzy_line(0.0, 0.0, 0.0, 1.0, &driver).unwrap();
        assert_eq!(r.values, driver.values);
    }

    #[test]
    fn bass_burdzy_lines_are_monotone_in_start() {
        let driver = simulate_bm(2000, 1e-3, stream(14)).unwrap();
        let lo = simulate_bass_burdzy_line(-0.5, 0.0, 1.0, 1.0, &driver).unwrap();
        let hi = simulate_bass_burdzy_line(0.5, 0.0, 1.0, 1.0, &driver).unwrap();
        for (a, b) in lo.values.iter().zip(&hi.values) {
            assert!(a <= b);
        }
    }

    #[test]
    fn bass_burdzy_refinement_self_consistency() {
        // mean at t = 1 at dt vs dt/4 within 3 combined standard errors
        let n = 20_000;
        let (mut m_coarse, mut m_fine) = (0.0, 0.0);
        for rep in 0..n {
            let d1 = simulate_bm(251, 4e-3, stream(rep)).unwrap();
            let r1 = simulate_bass_burdzy_line(1.0, 0.0, 1.0, 1.0, &d1).unwrap();
            m_coarse += r1.values.last().unwrap() / n as f64;
            let d2 = simulate_bm(1001, 1e-3, RngStream::new(555, rep)).unwrap();
            let r2 = simulate_bass_burdzy_line(1.0, 0.0, 1.0, 1.0, &d2).unwrap();
            m_fine += r2.values.last().unwrap() / n as f64;
        }
        let se = 3.0 * (2.0 * 2.0f64 / n as f64).sqrt();
        assert!((m_coarse - m_fine).abs() < se, "{m_coarse} vs {m_fine}");
    }

    #[test]
    fn path_value_interpolation_and_reversal() {
        let p = SamplePath::new(1.0, 0.5, vec![0.0, 1.0, 4.0], "test").unwrap();
        assert_eq!(p.value_at(1.25).unwrap(), 0.5);
        assert_eq!(p.value_at(2.0).unwrap(), 4.0);
        assert!(p.value_at(2.5).is_err());
        let r = p.reversed();
        assert_eq!(r.values, vec![4.0, 1.0, 0.0]);
        assert_eq!(r.t0, 0.0);
    }
}
