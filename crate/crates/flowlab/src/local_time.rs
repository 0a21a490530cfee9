//! Occupation-density local times.
//!
//! Local time at level r is estimated through the one-sided window
//! [r, r + eps): L(t, r) = (time the path spends in the window up to t) / eps,
//! with the time measured exactly for the piecewise-linear interpolant of the
//! samples. The window is one-sided on purpose; a symmetric window would bias
//! identities at reflecting levels.

use crate::error::{FlowError, Result};
use crate::path::SamplePath;
use serde::{Deserialize, Serialize};

/// Uniform grid of space cells [r_min + i dr, r_min + (i+1) dr).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub r_min: f64,
    pub dr: f64,
    pub n_cells: usize,
}

impl SpaceGrid {
    pub fn new(r_min: f64, dr: f64, n_cells: usize) -> Result<Self> {
        if dr <= 0.0 || n_cells == 0 {
            return Err(FlowError::Parameter(format!(
                "SpaceGrid: need dr > 0 and n_cells > 0, got {dr}, {n_cells}"
            )));
        }
        Ok(Self { r_min, dr, n_cells })
    }

    /// Grid covering [lo, hi] plus `pad` on both sides.
    pub fn covering(lo: f64, hi: f64, dr: f64, pad: f64) -> Result<Self> {
        if hi < lo {
            return Err(FlowError::Parameter(format!("SpaceGrid::covering: hi {hi} < lo {lo}")));
        }
        let r_min = lo - pad;
        let n_cells = (((hi + pad) - r_min) / dr).ceil() as usize + 1;
        Self::new(r_min, dr, n_cells)
    }

    pub fn r_max(&self) -> f64 {
        self.r_min + self.dr * self.n_cells as f64
    }

    /// Left edge of cell i; also the i-th profile node.
    pub fn level(&self, i: usize) -> f64 {
        self.r_min + i as f64 * self.dr
    }

    /// Cell containing x, if inside the grid.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        let u = (x - self.r_min) / self.dr;
        if u < 0.0 || u >= self.n_cells as f64 {
            None
        } else {
            Some(u as usize)
        }
    }

    /// Number of whole cells in a window of width `bandwidth` (at least 1).
    pub fn window_cells(&self, bandwidth: f64) -> usize {
        ((bandwidth / self.dr).round() as usize).max(1)
    }
}

/// Accumulate the exact sojourn time of the linear segment (x0 -> x1, duration
/// dt) into per-cell occupation times. Mass outside the grid is dropped.
pub fn accumulate_segment(occ: &mut [f64], grid: &SpaceGrid, x0: f64, x1: f64, dt: f64) {
    if dt <= 0.0 {
        return;
    }
    if x0 == x1 {
        if let Some(c) = grid.cell_of(x0) {
            occ[c] += dt;
        }
        return;
    }
    let (lo, hi) = if x0 < x1 { (x0, x1) } else { (x1, x0) };
    let span = hi - lo;
    // cells intersecting [lo, hi]
    let c_lo = ((lo - grid.r_min) / grid.dr).floor();
    let c_hi = ((hi - grid.r_min) / grid.dr).floor();
    let first = c_lo.max(0.0) as usize;
    let last = (c_hi.min(grid.n_cells as f64 - 1.0)).max(0.0) as usize;
    if c_hi < 0.0 || c_lo >= grid.n_cells as f64 {
        return;
    }
    for c in first..=last {
        let cell_lo = grid.level(c);
        let cell_hi = cell_lo + grid.dr;
        let overlap = (hi.min(cell_hi) - lo.max(cell_lo)).max(0.0);
        occ[c] += dt * overlap / span;
    }
}

/// Sojourn time of the segment inside an arbitrary window [w_lo, w_hi).
pub(crate) fn segment_window_time(x0: f64, x1: f64, dt: f64, w_lo: f64, w_hi: f64) -> f64 {
    if x0 == x1 {
        return if x0 >= w_lo && x0 < w_hi { dt } else { 0.0 };
    }
    let (lo, hi) = if x0 < x1 { (x0, x1) } else { (x1, x0) };
    let overlap = (hi.min(w_hi) - lo.max(w_lo)).max(0.0);
    dt * overlap / (hi - lo)
}

/// Windowed local-time profile from raw cell occupation: node i averages the
/// occupation of cells [i, i + m) where m = window_cells(bandwidth).
pub fn profile_from_occupation(occ: &[f64], grid: &SpaceGrid, bandwidth: f64) -> Vec<f64> {
    let m = grid.window_cells(bandwidth);
    let eps = m as f64 * grid.dr;
    let n = occ.len();
    let mut out = vec![0.0; n];
    // moving window sum
    let mut acc: f64 = occ.iter().take(m.min(n)).sum();
    for i in 0..n {
        out[i] = acc / eps;
        acc -= occ[i];
        if i + m < n {
            acc += occ[i + m];
        }
    }
    out
}

/// Local-time values L(t, r) of one path at a list of checkpoint times.
#[derive(Debug, Clone)]
pub struct OccupationField {
    pub grid: SpaceGrid,
    pub checkpoints: Vec<f64>,
    /// Windowed profiles, one row per checkpoint, one column per grid node.
    pub profiles: Vec<Vec<f64>>,
    /// Raw per-cell occupation times at each checkpoint.
    pub occupation: Vec<Vec<f64>>,
    pub bandwidth: f64,
}

impl OccupationField {
    /// Stream once through the path, snapshotting at each checkpoint.
    /// Checkpoints must be sorted and inside the horizon.
    pub fn build(
        path: &SamplePath,
        checkpoints: &[f64],
        grid: SpaceGrid,
        bandwidth: f64,
    ) -> Result<Self> {
        if checkpoints.is_empty() {
            return Err(FlowError::Parameter("OccupationField: no checkpoints".into()));
        }
        if checkpoints.windows(2).any(|w| w[1] < w[0]) {
            return Err(FlowError::Parameter("OccupationField: checkpoints must be sorted".into()));
        }
        let t_end = path.t_end();
        for &t in checkpoints {
            if t < path.t0 - 1e-9 || t > t_end + 1e-9 {
                return Err(FlowError::Range(format!(
                    "checkpoint {t} outside horizon [{}, {t_end}]",
                    path.t0
                )));
            }
        }
        let mut occ = vec![0.0f64; grid.n_cells];
        let mut profiles = Vec::with_capacity(checkpoints.len());
        let mut occupations = Vec::with_capacity(checkpoints.len());
        let mut k = 0usize;
        // emit checkpoints at or before the path start
        while k < checkpoints.len() && checkpoints[k] <= path.t0 {
            profiles.push(profile_from_occupation(&occ, &grid, bandwidth));
            occupations.push(occ.clone());
            k += 1;
        }
        for i in 1..path.len() {
            let (t_prev, t_cur) = (path.time(i - 1), path.time(i));
            let (x0, x1) = (path.values[i - 1], path.values[i]);
            // checkpoints falling inside this segment: accumulate the partial
            // segment, snapshot, then continue with the remainder
            let mut seg_start_t = t_prev;
            let mut seg_start_x = x0;
            while k < checkpoints.len() && checkpoints[k] <= t_cur + 1e-12 {
                let tc = checkpoints[k].min(t_cur);
                let frac = if path.dt > 0.0 { (tc - t_prev) / path.dt } else { 0.0 };
                let xc = x0 + (x1 - x0) * frac.clamp(0.0, 1.0);
                accumulate_segment(&mut occ, &grid, seg_start_x, xc, tc - seg_start_t);
                profiles.push(profile_from_occupation(&occ, &grid, bandwidth));
                occupations.push(occ.clone());
                seg_start_t = tc;
                seg_start_x = xc;
                k += 1;
            }
            accumulate_segment(&mut occ, &grid, seg_start_x, x1, t_cur - seg_start_t);
        }
        while k < checkpoints.len() {
            // checkpoints at the exact horizon end (within tolerance)
            profiles.push(profile_from_occupation(&occ, &grid, bandwidth));
            occupations.push(occ.clone());
            k += 1;
        }
        Ok(Self { grid, checkpoints: checkpoints.to_vec(), profiles, occupation: occupations, bandwidth })
    }
}

/// Windowed local-time profile of `path` at time `t` on `grid`.
pub fn local_time_profile(
    path: &SamplePath,
    t: f64,
    grid: SpaceGrid,
    bandwidth: f64,
) -> Result<Vec<f64>> {
    if bandwidth < grid.dr {
        return Err(FlowError::Parameter(format!(
            "local_time_profile: bandwidth {bandwidth} below grid pitch {}",
            grid.dr
        )));
    }
    let field = OccupationField::build(path, &[t], grid, bandwidth)?;
    Ok(field.profiles.into_iter().next().unwrap())
}

/// First grid time at which the windowed local time at level r strictly
/// exceeds a; +infinity if the horizon's total local time stays <= a.
pub fn inverse_local_time(path: &SamplePath, r: f64, a: f64, bandwidth: f64) -> Result<f64> {
    if a < 0.0 {
        return Err(FlowError::Parameter(format!("inverse_local_time: a must be >= 0, got {a}")));
    }
    let w_hi = r + bandwidth;
    let mut occ = 0.0f64;
    for i in 1..path.len() {
        occ += segment_window_time(path.values[i - 1], path.values[i], path.dt, r, w_hi);
        if occ / bandwidth > a {
            return Ok(path.time(i));
        }
    }
    Ok(f64::INFINITY)
}

/// The empirical local-time flow of one path: S_{r,x}(a) = L(tau_a^r, x) for
/// a list of start values a and all grid nodes x.
#[derive(Debug, Clone)]
pub struct EmpiricalFlow {
    /// Base level r.
    pub r: f64,
    /// Start values, ascending.
    pub a_values: Vec<f64>,
    pub x_grid: SpaceGrid,
    /// values[k][i] = L(tau_{a_k}^r, node i).
    pub values: Vec<Vec<f64>>,
    /// Model times tau_{a_k}^r (infinite when unfinished).
    pub tau: Vec<f64>,
    /// Lines whose inverse local time exceeded the horizon.
    pub unfinished: Vec<bool>,
    pub bandwidth: f64,
}

impl EmpiricalFlow {
    /// Value at (a index, level x) by nearest grid node.
    pub fn value(&self, k: usize, x: f64) -> Result<f64> {
        let i = ((x - self.x_grid.r_min) / self.x_grid.dr).round();
        if i < 0.0 || i >= self.x_grid.n_cells as f64 {
            return Err(FlowError::Range(format!("level {x} outside flow grid")));
        }
        Ok(self.values[k][i as usize])
    }
}

/// Single streaming pass extracting the empirical local-time flow.
pub fn empirical_local_time_flow(
    path: &SamplePath,
    r: f64,
    a_list: &[f64],
    x_grid: SpaceGrid,
    bandwidth: f64,
) -> Result<EmpiricalFlow> {
    if a_list.is_empty() {
        return Err(FlowError::Parameter("empirical_local_time_flow: empty a_list".into()));
    }
    if a_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(FlowError::Parameter("empirical_local_time_flow: a_list must ascend".into()));
    }
    let w_hi = r + bandwidth;
    let mut occ = vec![0.0f64; x_grid.n_cells];
    let mut occ_r = 0.0f64;
    let mut values = Vec::with_capacity(a_list.len());
    let mut tau = Vec::with_capacity(a_list.len());
    let mut k = 0usize;
    while k < a_list.len() && occ_r / bandwidth > a_list[k] {
        // cannot happen with occ_r = 0 and a >= 0, kept for shape safety
        k += 1;
    }
    for i in 1..path.len() {
        let (x0, x1) = (path.values[i - 1], path.values[i]);
        accumulate_segment(&mut occ, &x_grid, x0, x1, path.dt);
        occ_r += segment_window_time(x0, x1, path.dt, r, w_hi);
        while k < a_list.len() && occ_r / bandwidth > a_list[k] {
            values.push(profile_from_occupation(&occ, &x_grid, bandwidth));
            tau.push(path.time(i));
            k += 1;
        }
        if k == a_list.len() {
            break;
        }
    }
    let finished = values.len();
    let mut unfinished = vec![false; a_list.len()];
    if finished < a_list.len() {
        let final_profile = profile_from_occupation(&occ, &x_grid, bandwidth);
        for j in finished..a_list.len() {
            values.push(final_profile.clone());
            tau.push(f64::INFINITY);
            unfinished[j] = true;
        }
    }
    Ok(EmpiricalFlow {
        r,
        a_values: a_list.to_vec(),
        x_grid,
        values,
        tau,
        unfinished,
        bandwidth,
    })
}

/// Grid infimum inf { b in the flow's start grid : S(b, x) > a }, used to
/// cross-check the duality identity. Returns None when no start value
/// qualifies (horizon marker).
/// Outcome of one streaming flow draw: the window local times at the
/// requested levels read at the inverse local time tau, plus tau itself.
#[derive(Debug, Clone)]
pub struct StreamedFlowSample {
    pub values: Vec<f64>,
    pub tau: f64,
}

/// Memory-light sampler of S_{0,x}(a) = L(tau_a^0, x) over the positive-time
/// half of a perturbed reflecting path. The half-path X_t = |B_t| - mu L_t is
/// generated increment by increment through the running-max representation
/// (|B|, L) = (M - W, M), so horizons far beyond what fits in memory remain
/// reachable at O(1) memory. Occupation is accrued exactly for the linear
/// interpolant in one-sided windows [x, x + bandwidth); tau is the first grid
/// time whose window local time at 0 exceeds `a` (strictly). Returns
/// Ok(None) when tau is not reached by `t_max`.
///
/// The negative-time half of the two-sided path contributes no local time at
/// level 0 (so tau only depends on the positive half), and occupies levels
/// x >= 0 with an independent squared-Bessel profile of dimension 2/mu
/// started from 0; callers that need the two-sided local time add that
/// contribution on top of the values returned here.
pub fn positive_half_flow_sample(
    params: crate::path::PrbmParams,
    a: f64,
    levels: &[f64],
    dt: f64,
    bandwidth: f64,
    t_max: f64,
    rng: crate::rng::RngStream,
) -> Result<Option<StreamedFlowSample>> {
    use rand_distr::{Distribution, StandardNormal};
    if a < 0.0 || dt <= 0.0 || bandwidth <= 0.0 || t_max <= 0.0 {
        return Err(FlowError::Parameter(format!(
            "positive_half_flow_sample: need a >= 0, dt > 0, bandwidth > 0, t_max > 0, \
             got a={a}, dt={dt}, bandwidth={bandwidth}, t_max={t_max}"
        )));
    }
    let mut gen = rng.rng();
    let sqrt_dt = dt.sqrt();
    let mu = params.mu;
    let mut w = 0.0f64;
    let mut m = 0.0f64;
    let mut x_prev = 0.0f64;
    let mut occ0 = 0.0f64;
    let mut occ = vec![0.0f64; levels.len()];
    let steps = (t_max / dt).ceil() as u64;
    for k in 1..=steps {
        let z: f64 = StandardNormal.sample(&mut gen);
        w += sqrt_dt * z;
        if w > m {
            m = w;
        }
        let x = (m - w) - mu * m;
        occ0 += segment_window_time(x_prev, x, dt, 0.0, bandwidth);
        for (i, &lv) in levels.iter().enumerate() {
            occ[i] += segment_window_time(x_prev, x, dt, lv, lv + bandwidth);
        }
        x_prev = x;
        if occ0 / bandwidth > a {
            return Ok(Some(StreamedFlowSample {
                values: occ.iter().map(|o| o / bandwidth).collect(),
                tau: k as f64 * dt,
            }));
        }
    }
    Ok(None)
}

pub fn dual_flow_value(flow: &EmpiricalFlow, x: f64, a: f64) -> Result<Option<f64>> {
    for (k, &b) in flow.a_values.iter().enumerate() {
        if flow.value(k, x)? > a {
            return Ok(Some(b));
        }
    }
    Ok(None)
}

/// Report from comparing direct time integrals of the path against
/// occupation-moment reconstructions between consecutive checkpoints.
#[derive(Debug, Clone)]
pub struct RoundtripReport {
    pub checkpoints: Vec<f64>,
    pub direct: Vec<f64>,
    pub reconstructed: Vec<f64>,
    pub max_relative_error: f64,
}

/// Compare int_s^t X_u du (trapezoid on samples) with sum_x x (L(t,x) - L(s,x)) dx
/// on a uniform checkpoint mesh.
pub fn path_from_flow_roundtrip(
    path: &SamplePath,
    grid: SpaceGrid,
    bandwidth: f64,
    n_checkpoints: usize,
) -> Result<RoundtripReport> {
    if n_checkpoints < 2 {
        return Err(FlowError::Parameter("path_from_flow_roundtrip: need >= 2 checkpoints".into()));
    }
    let t_span = path.t_end() - path.t0;
    let checkpoints: Vec<f64> = (0..n_checkpoints)
        .map(|k| path.t0 + t_span * k as f64 / (n_checkpoints - 1) as f64)
        .collect();
    let field = OccupationField::build(path, &checkpoints, grid, bandwidth)?;
    let mut direct = Vec::new();
    let mut recon = Vec::new();
    let mut max_rel: f64 = 0.0;
    // typical magnitude of the direct integrals, as the error denominator
    let scale_guard = t_span / (n_checkpoints - 1) as f64
        * path.values.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-12);
    for w in 0..n_checkpoints - 1 {
        let (s, t) = (checkpoints[w], checkpoints[w + 1]);
        // direct trapezoid of X over [s, t]
        let mut d = 0.0;
        let i0 = ((s - path.t0) / path.dt).ceil() as usize;
        let i1 = ((t - path.t0) / path.dt).floor() as usize;
        if i1 > i0 {
            for i in i0..i1 {
                d += 0.5 * (path.values[i] + path.values[i + 1]) * path.dt;
            }
        }
        // partial end segments
        let t_i0 = path.time(i0);
        if t_i0 > s {
            d += 0.5 * (path.value_at(s)? + path.values[i0]) * (t_i0 - s);
        }
        let t_i1 = path.time(i1);
        if t < t_i1 {
            // checkpoint fell before the floor index (only when i1 < i0)
        } else if t > t_i1 {
            d += 0.5 * (path.values[i1] + path.value_at(t)?) * (t - t_i1);
        }
        // occupation-moment reconstruction: cell centers weighted by the
        // occupation gained over [s, t]
        let mut m = 0.0;
        for c in 0..grid.n_cells {
            let center = grid.level(c) + 0.5 * grid.dr;
            m += center * (field.occupation[w + 1][c] - field.occupation[w][c]);
        }
        let denom = d.abs().max(scale_guard);
        max_rel = max_rel.max((d - m).abs() / denom);
        direct.push(d);
        recon.push(m);
    }
    Ok(RoundtripReport { checkpoints, direct, reconstructed: recon, max_relative_error: max_rel })
}

/// Total occupation error |sum_cells occ * 1 - (t_end - t0)| / (t_end - t0),
/// computed on a grid covering the whole path.
pub fn occupation_identity_error(path: &SamplePath, grid: SpaceGrid, bandwidth: f64) -> Result<f64> {
    let t = path.t_end();
    let profile = local_time_profile(path, t, grid, bandwidth)?;
    let mass: f64 = profile.iter().sum::<f64>() * grid.dr;
    let span = t - path.t0;
    if span <= 0.0 {
        return Ok(0.0);
    }
    Ok((mass - span).abs() / span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{simulate_bm, simulate_prbm, PrbmParams, SamplePath};
    use crate::rng::RngStream;
    use crate::stats::{besq_marginal_cdf, ks_one_sample, ks_two_sample, normal_cdf};

    fn linear_path(n: usize, dt: f64) -> SamplePath {
        let values: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        SamplePath::new(0.0, dt, values, "line").unwrap()
    }

    #[test]
    fn unit_slope_line_has_unit_local_time() {
        let path = linear_path(1001, 1e-3);
        let grid = SpaceGrid::covering(0.0, 1.0, 1e-2, 0.1).unwrap();
        let eps = 2e-2;
        let prof = local_time_profile(&path, 1.0, grid, eps).unwrap();
        for i in 0..grid.n_cells {
            let r = grid.level(i);
            if r > 0.0 && r < 1.0 - eps {
                assert!((prof[i] - 1.0).abs() < 1e-9, "r={r}: {}", prof[i]);
            }
            if r > 1.0 {
                assert_eq!(prof[i], 0.0);
            }
        }
    }

    #[test]
    fn constant_path_concentrates_mass() {
        let path = SamplePath::new(0.0, 1e-2, vec![0.0; 101], "const").unwrap();
        let grid = SpaceGrid::covering(-0.5, 0.5, 1e-2, 0.1).unwrap();
        let eps = 1e-2;
        let prof = local_time_profile(&path, 1.0, grid, eps).unwrap();
        let c = grid.cell_of(0.0).unwrap();
        assert!((prof[c] - 1.0 / eps).abs() < 1e-9);
        let total: f64 = prof.iter().sum::<f64>() * grid.dr;
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bm_local_time_at_zero_matches_windowed_oracle() {
        // E[(1/eps) int_0^eps L(1,r) dr] with E L(1,r) = E|B_1 - r| - r
        let dt = 1e-4_f64;
        let eps = 2.0 * dt.sqrt();
        let n = 4_000;
        let grid = SpaceGrid::covering(-3.0, 3.0, 1e-2, 0.1).unwrap();
        let mut mean = 0.0;
        let mut var = 0.0;
        for rep in 0..n {
            let p = simulate_bm(10_001, dt, RngStream::new(31, rep)).unwrap();
            let prof = local_time_profile(&p, 1.0, grid, eps).unwrap();
            let c = ((0.0 - grid.r_min) / grid.dr).round() as usize;
            let l = prof[c];
            mean += l / n as f64;
            var += l * l / n as f64;
        }
        var -= mean * mean;
        // quadrature of the windowed expectation
        let phi = |r: f64| (-0.5 * r * r).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let e_abs = |r: f64| 2.0 * phi(r) + r * (2.0 * normal_cdf(r) - 1.0);
        let m = 400;
        let oracle: f64 = (0..m)
            .map(|k| {
                let r = eps * (k as f64 + 0.5) / m as f64;
                e_abs(r) - r
            })
            .sum::<f64>()
            / m as f64;
        let se = 3.0 * (var / n as f64).sqrt();
        assert!((mean - oracle).abs() < se + 0.01, "mean {mean} vs {oracle} (se {se})");
    }

    #[test]
    fn inverse_local_time_linear_path() {
        let path = linear_path(10_001, 1e-4);
        let eps = 2e-2;
        let tau = inverse_local_time(&path, 0.5, 0.5, eps).unwrap();
        assert!((tau - 0.5).abs() < eps + 1e-3, "tau = {tau}");
    }

    #[test]
    fn inverse_local_time_zero_level_immediate() {
        let path = linear_path(101, 1e-3);
        let tau = inverse_local_time(&path, 0.0, 0.0, 1e-2).unwrap();
        assert!(tau <= path.t0 + path.dt + 1e-12, "tau = {tau}");
    }

    #[test]
    fn inverse_local_time_horizon_marker() {
        let path = linear_path(101, 1e-3);
        assert!(inverse_local_time(&path, 5.0, 0.1, 1e-2).unwrap().is_infinite());
    }

    #[test]
    fn inverse_forward_consistency() {
        let dt = 1e-4_f64;
        let eps = 2.0 * dt.sqrt();
        let grid = SpaceGrid::covering(-3.0, 3.0, 1e-2, 0.1).unwrap();
        for rep in 0..10 {
            let p = simulate_bm(20_001, dt, RngStream::new(77, rep)).unwrap();
            let a = 0.3;
            let tau = inverse_local_time(&p, 0.0, a, eps).unwrap();
            if tau.is_finite() {
                let prof = local_time_profile(&p, tau, grid, eps).unwrap();
                let c = ((0.0 - grid.r_min) / grid.dr).round() as usize;
                let l = prof[c];
                assert!(l >= a - 1e-9, "L = {l}");
                assert!(l <= a + 2.0 * dt / eps + 1e-9, "L = {l}");
            }
        }
    }

    #[test]
    fn brownian_inverse_local_time_scaling() {
        // tau_{2a} at window eps equals 4 * (tau_a at window eps/2 and dt/4)
        // in law; censoring at matched horizons keeps the laws equal
        let n = 4_000;
        let (a, eps, dt, horizon) = (0.5, 0.02, 4e-4, 40.0);
        let mut big = Vec::with_capacity(n as usize);
        let mut small = Vec::with_capacity(n as usize);
        for rep in 0..n {
            let steps = (horizon / dt) as usize + 1;
            let p = simulate_bm(steps, dt, RngStream::new(41, rep)).unwrap();
            let tau = inverse_local_time(&p, 0.0, 2.0 * a, eps).unwrap();
            big.push(tau.min(horizon));
            let q = simulate_bm(steps, dt / 4.0, RngStream::new(42, rep)).unwrap();
            let tau2 = inverse_local_time(&q, 0.0, a, eps / 2.0).unwrap();
            small.push(4.0 * tau2.min(horizon / 4.0));
        }
        let r = ks_two_sample(&big, &small).unwrap();
        assert!(r.p_value > 0.01, "p = {}", r.p_value);
    }

    #[test]
    fn flow_identity_at_base_level() {
        let dt = 1e-4_f64;
        let eps = 2.0 * dt.sqrt();
        let grid = SpaceGrid::covering(-4.0, 4.0, 1e-2, 0.2).unwrap();
        let p = simulate_bm(100_001, dt, RngStream::new(90, 0)).unwrap();
        let a_list = [0.2, 0.5, 1.0];
        let flow = empirical_local_time_flow(&p, 0.0, &a_list, grid, eps).unwrap();
        for (k, &a) in a_list.iter().enumerate() {
            if !flow.unfinished[k] {
                let s_rr = flow.value(k, 0.0).unwrap();
                assert!((s_rr - a).abs() <= 2.0 * eps, "S_rr = {s_rr} vs a = {a}");
            }
        }
        // monotone in a at every node
        for k in 1..a_list.len() {
            for i in 0..grid.n_cells {
                assert!(flow.values[k][i] >= flow.values[k - 1][i] - 1e-12);
            }
        }
    }

    #[test]
    fn prbm_flow_matches_exact_besq_marginal() {
        // mu = 1, b = 1: S_{0,1}(1) against the exact dimension-2 marginal.
        // The two-sided local time at level 1 splits into the positive-half
        // contribution (sampled by streaming) plus the independent
        // negative-half occupation, whose law at a single level x is exactly
        // Gamma(shape 1/mu, scale 2x) — the dimension-2/mu squared Bessel
        // from 0 read at x.
        use rand_distr::{Distribution, Gamma};
        let n = 2_000u64;
        let dt = 1e-3_f64;
        let eps = 2.0 * dt.sqrt();
        let t_max = 25_600.0;
        let params = PrbmParams::new(1.0).unwrap();
        let gamma = Gamma::new(1.0 / params.mu, 2.0 * 1.0).unwrap();
        let mut samples = Vec::new();
        let mut unfinished = 0u64;
        for rep in 0..n {
            let s = RngStream::new(91, rep);
            match positive_half_flow_sample(params, 1.0, &[1.0], dt, eps, t_max, s.substream(0))
                .unwrap()
            {
                Some(draw) => {
                    let neg = gamma.sample(&mut s.substream(1).rng());
                    samples.push(draw.values[0] + neg);
                }
                None => unfinished += 1,
            }
        }
        assert!(unfinished <= n / 50, "too many unfinished: {unfinished}");
        let r = ks_one_sample(&samples, |y| besq_marginal_cdf(2.0, 1.0, 1.0, y).unwrap()).unwrap();
        assert!(r.p_value > 0.001, "p = {}, D = {}", r.p_value, r.statistic);
    }

    #[test]
    fn dual_value_boundary_and_monotone() {
        let dt = 1e-4_f64;
        let eps = 2.0 * dt.sqrt();
        let grid = SpaceGrid::covering(-4.0, 4.0, 1e-2, 0.2).unwrap();
        let p = simulate_bm(50_001, dt, RngStream::new(95, 5)).unwrap();
        let b_grid: Vec<f64> = (1..=40).map(|k| 0.05 * k as f64).collect();
        let flow = empirical_local_time_flow(&p, 0.0, &b_grid, grid, eps).unwrap();
        // a below every flow value at the base level -> smallest b
        let v = dual_flow_value(&flow, 0.0, -1.0).unwrap();
        assert_eq!(v, Some(b_grid[0]));
        // nondecreasing in a
        let mut prev = 0.0;
        for k in 0..20 {
            let a = 0.05 * k as f64;
            if let Some(b) = dual_flow_value(&flow, 0.5, a).unwrap() {
                assert!(b >= prev);
                prev = b;
            }
        }
    }

    #[test]
    fn occupation_identity_and_roundtrip_on_prbm() {
        let dt = 1e-4_f64;
        let params = PrbmParams::new(0.5).unwrap();
        let p = simulate_prbm(params, -1.0, 1.0, dt, RngStream::new(97, 1)).unwrap();
        let lo = p.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = p.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let grid = SpaceGrid::covering(lo, hi, 1e-2, 0.1).unwrap();
        let err = occupation_identity_error(&p, grid, 1e-2).unwrap();
        assert!(err < 0.01, "occupation identity error {err}");
        let rt = path_from_flow_roundtrip(&p, grid, 1e-2, 11).unwrap();
        assert!(rt.max_relative_error < 0.02, "roundtrip error {}", rt.max_relative_error);
    }

    #[test]
    fn roundtrip_linear_path_and_empty_interval() {
        let path = linear_path(1001, 1e-3);
        let grid = SpaceGrid::covering(0.0, 1.0, 1e-3, 0.05).unwrap();
        let rt = path_from_flow_roundtrip(&path, grid, 2e-3, 5).unwrap();
        assert!(rt.max_relative_error < 0.01, "err {}", rt.max_relative_error);
    }

    #[test]
    fn refinement_improves_reconstruction() {
        // halving (dt, dr, eps) together shrinks the roundtrip error,
        // monotonically over three levels on a fixed seed
        let mut errs = Vec::new();
        for level in 0..3 {
            let dt = 4e-4 / (1 << level) as f64;
            let dr = 4e-2 / (1 << level) as f64;
            let steps = (1.0 / dt) as usize + 1;
            let p = simulate_bm(steps, dt, RngStream::new(98, 7)).unwrap();
            let lo = p.values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = p.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let grid = SpaceGrid::covering(lo, hi, dr, 0.1).unwrap();
            let rt = path_from_flow_roundtrip(&p, grid, dr, 6).unwrap();
            errs.push(rt.max_relative_error);
        }
        assert!(errs[1] <= errs[0] && errs[2] <= errs[1], "errors not decreasing: {errs:?}");
    }

    #[test]
    fn monotone_in_time_profiles() {
        let p = simulate_bm(5_001, 1e-3, RngStream::new(99, 0)).unwrap();
        let grid = SpaceGrid::covering(-3.0, 3.0, 1e-2, 0.1).unwrap();
        let checkpoints = [1.0, 2.0, 3.0, 4.0, 5.0];
        let field = OccupationField::build(&p, &checkpoints, grid, 2e-2).unwrap();
        for w in 1..checkpoints.len() {
            for c in 0..grid.n_cells {
                assert!(field.profiles[w][c] + 1e-12 >= field.profiles[w - 1][c]);
            }
        }
    }
}
