//! Deterministic space-time machinery: the eta integral, the quadratic clock
//! change C_f, the path transform Upsilon and the flow transform Psi, plus the
//! composition identity relating a transform taken at a later start time to
//! the transform of the shifted path.

use crate::error::{FlowError, Result};
use crate::local_time::{profile_from_occupation, EmpiricalFlow, OccupationField, SpaceGrid};
use crate::path::SamplePath;
use serde::{Deserialize, Serialize};

/// Floor below which a profile is treated as vanishing; transforms truncate
/// rather than integrate through a near-zero denominator.
pub const PROFILE_FLOOR: f64 = 1e-6;

/// A positive function sampled at the nodes of a space grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileFn {
    pub grid: SpaceGrid,
    /// values[i] = f(grid.level(i)).
    pub values: Vec<f64>,
}

impl ProfileFn {
    pub fn new(grid: SpaceGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells {
            return Err(FlowError::Parameter(format!(
                "ProfileFn: {} values for {} grid nodes",
                values.len(),
                grid.n_cells
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: SpaceGrid, value: f64) -> Self {
        let n = grid.n_cells;
        Self { grid, values: vec![value; n] }
    }

    /// Build from a closure evaluated at the grid nodes.
    pub fn from_fn(grid: SpaceGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n_cells).map(|i| f(grid.level(i))).collect();
        Self { grid, values }
    }

    /// Linear interpolation at x; errors outside the grid.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let u = (x - self.grid.r_min) / self.grid.dr;
        if u < -1e-9 || u > (self.grid.n_cells - 1) as f64 + 1e-9 {
            return Err(FlowError::Range(format!(
                "ProfileFn: {x} outside [{}, {}]",
                self.grid.r_min,
                self.grid.level(self.grid.n_cells - 1)
            )));
        }
        let u = u.clamp(0.0, (self.grid.n_cells - 1) as f64);
        let i = (u as usize).min(self.grid.n_cells.saturating_sub(2));
        if self.grid.n_cells == 1 {
            return Ok(self.values[0]);
        }
        let frac = u - i as f64;
        Ok(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac)
    }

    /// Pointwise difference self - other (other interpolated onto this grid).
    pub fn minus(&self, other: &ProfileFn) -> Result<ProfileFn> {
        let values = (0..self.grid.n_cells)
            .map(|i| Ok(self.values[i] - other.eval(self.grid.level(i))?))
            .collect::<Result<Vec<f64>>>()?;
        ProfileFn::new(self.grid, values)
    }
}

/// Precomputed eta_{f,c}: cumulative trapezoid of 1/f along the grid, shifted
/// so eta(c) = 0. Only valid across nodes where f stays above the floor.
#[derive(Debug, Clone)]
pub struct EtaMap {
    grid: SpaceGrid,
    /// eta at each node (NaN where f dipped below the floor on the way).
    node_eta: Vec<f64>,
    inv_f: Vec<f64>,
    c: f64,
}

impl EtaMap {
    pub fn new(f: &ProfileFn, c: f64) -> Result<Self> {
        let grid = f.grid;
        let n = grid.n_cells;
        let inv_f: Vec<f64> = f
            .values
            .iter()
            .map(|&v| if v > PROFILE_FLOOR { 1.0 / v } else { f64::NAN })
            .collect();
        let uc = (c - grid.r_min) / grid.dr;
        if uc < -1e-9 || uc > (n - 1) as f64 + 1e-9 {
            return Err(FlowError::Range(format!("EtaMap: base point {c} outside grid")));
        }
        let uc = uc.clamp(0.0, (n - 1) as f64);
        let ic = (uc as usize).min(n.saturating_sub(2));
        let frac = uc - ic as f64;
        // cumulative trapezoid anchored at the base cell and integrated
        // outward, so a below-floor stretch on one side leaves the other
        // side usable (NaN marks everything beyond a vanishing node)
        let mut cum = vec![0.0f64; n];
        for i in (ic + 1)..n {
            cum[i] = cum[i - 1] + 0.5 * (inv_f[i - 1] + inv_f[i]) * grid.dr;
        }
        for i in (0..ic).rev() {
            cum[i] = cum[i + 1] - 0.5 * (inv_f[i] + inv_f[i + 1]) * grid.dr;
        }
        let eta_c = if n == 1 || frac == 0.0 {
            0.0
        } else {
            // same partial-cell rule as eval, so eval(c) returns exactly 0
            let inv_mid = inv_f[ic] * (1.0 - 0.5 * frac) + inv_f[ic + 1] * (0.5 * frac);
            frac * grid.dr * inv_mid
        };
        if !eta_c.is_finite() {
            return Err(FlowError::Domain(format!("EtaMap: f vanishes at the base point {c}")));
        }
        let node_eta = cum.iter().map(|&v| v - eta_c).collect();
        Ok(Self { grid, node_eta, inv_f, c })
    }

    pub fn base(&self) -> f64 {
        self.c
    }

    /// eta_{f,c}(x) by trapezoid with an exact partial end segment.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let u = (x - self.grid.r_min) / self.grid.dr;
        let top = (self.grid.n_cells - 1) as f64;
        if u < -1e-9 || u > top + 1e-9 {
            return Err(FlowError::Range(format!("eta: {x} outside grid")));
        }
        let u = u.clamp(0.0, top);
        let i = (u as usize).min(self.grid.n_cells.saturating_sub(2));
        let frac = u - i as f64;
        if self.grid.n_cells == 1 {
            return Ok(0.0);
        }
        if frac < 1e-9 {
            // exactly on a node: do not touch the neighbor, which may sit
            // beyond the stretch where f stays positive
            let v = self.node_eta[i];
            if !v.is_finite() {
                return Err(FlowError::Domain(format!(
                    "eta: f at or below floor on the way to {x}"
                )));
            }
            return Ok(v);
        }
        // integrate the linear interpolant of 1/f across the partial cell
        let inv_mid = self.inv_f[i] * (1.0 - 0.5 * frac) + self.inv_f[i + 1] * (0.5 * frac);
        let v = self.node_eta[i] + frac * self.grid.dr * inv_mid;
        if !v.is_finite() {
            return Err(FlowError::Domain(format!("eta: f at or below floor on the way to {x}")));
        }
        Ok(v)
    }

    /// Inverse map: the x with eta(x) = t, by monotone search along the nodes.
    pub fn invert(&self, t: f64) -> Result<f64> {
        let n = self.grid.n_cells;
        // restrict to the contiguous finite stretch containing the base point
        let ic = ((self.c - self.grid.r_min) / self.grid.dr).round() as usize;
        let ic = ic.min(n - 1);
        let mut lo = ic;
        while lo > 0 && self.node_eta[lo - 1].is_finite() {
            lo -= 1;
        }
        let mut hi = ic;
        while hi + 1 < n && self.node_eta[hi + 1].is_finite() {
            hi += 1;
        }
        if t < self.node_eta[lo] || t > self.node_eta[hi] {
            return Err(FlowError::Range(format!(
                "eta inverse: {t} outside [{}, {}]",
                self.node_eta[lo], self.node_eta[hi]
            )));
        }
        // binary search over the increasing node values
        let (mut a, mut b) = (lo, hi);
        while b - a > 1 {
            let mid = (a + b) / 2;
            if self.node_eta[mid] <= t {
                a = mid;
            } else {
                b = mid;
            }
        }
        let span = self.node_eta[b] - self.node_eta[a];
        let frac = if span > 0.0 { (t - self.node_eta[a]) / span } else { 0.0 };
        Ok(self.grid.level(a) + frac * self.grid.dr)
    }
}

/// eta_{f,c}(x): the signed integral of 1/f from c to x.
pub fn eta(f: &ProfileFn, c: f64, x: f64) -> Result<f64> {
    EtaMap::new(f, c)?.eval(x)
}

/// Output of the Upsilon transform.
#[derive(Debug, Clone)]
pub struct TransformedPath {
    /// The transformed process on a uniform grid in the new clock.
    pub path: SamplePath,
    /// C_f at the input sample times (same indexing as the input path used).
    pub clock: Vec<f64>,
    /// Input model times corresponding to `clock` entries.
    pub input_times: Vec<f64>,
    /// Transformed values at the input samples (same indexing as `clock`);
    /// exact, unlike the uniformly re-sampled `path`.
    pub raw_values: Vec<f64>,
    /// True when the input was cut short because f fell below the floor.
    pub truncated: bool,
}

impl TransformedPath {
    /// Input model time corresponding to transformed time `t` (inverse clock).
    pub fn inverse_clock(&self, t: f64) -> Result<f64> {
        let cl = &self.clock;
        if t < cl[0] - 1e-12 || t > *cl.last().unwrap() + 1e-12 {
            return Err(FlowError::Range(format!("inverse clock: {t} outside transformed horizon")));
        }
        let idx = cl.partition_point(|&c| c <= t);
        if idx == 0 {
            return Ok(self.input_times[0]);
        }
        if idx >= cl.len() {
            return Ok(*self.input_times.last().unwrap());
        }
        let (c0, c1) = (cl[idx - 1], cl[idx]);
        let frac = if c1 > c0 { (t - c0) / (c1 - c0) } else { 0.0 };
        Ok(self.input_times[idx - 1] + frac * (self.input_times[idx] - self.input_times[idx - 1]))
    }
}

/// The Upsilon transform: run the path on the clock C_f(t) = int_0^t ds/f(X_s)^2
/// and map space through eta_{f,c}. The clock origin sits at model time 0,
/// which must lie inside the path horizon. The output is re-sampled on a
/// uniform grid in the new clock with at least as many samples as the input.
pub fn upsilon(path: &SamplePath, f: &ProfileFn, c: f64) -> Result<TransformedPath> {
    let eta_map = EtaMap::new(f, c)?;
    if path.t0 > 1e-12 || path.t_end() < -1e-12 {
        return Err(FlowError::Parameter(
            "upsilon: the clock origin (model time 0) must lie inside the path horizon".into(),
        ));
    }
    let n = path.len();
    // pointwise 1/f^2 at the samples; stop where f dips below the floor.
    // forward from time 0 and backward from time 0 are truncated separately.
    let i_zero = ((0.0 - path.t0) / path.dt).round() as usize;
    let mut fx = Vec::with_capacity(n);
    for &x in &path.values {
        let v = f.eval(x).unwrap_or(0.0);
        fx.push(v);
    }
    if fx[i_zero] <= PROFILE_FLOOR {
        return Err(FlowError::Domain("upsilon: f vanishes at the clock origin".into()));
    }
    // a sample survives only if f is above the floor there AND eta reaches
    // it (a sample can sit in the partial cell just past the last node where
    // f stays positive, where the interpolated f is still above the floor)
    let etav: Vec<Option<f64>> = path
        .values
        .iter()
        .map(|&x| eta_map.eval(x).ok())
        .collect();
    if etav[i_zero].is_none() {
        return Err(FlowError::Domain("upsilon: eta undefined at the clock origin".into()));
    }
    let mut i_hi = i_zero;
    while i_hi + 1 < n && fx[i_hi + 1] > PROFILE_FLOOR && etav[i_hi + 1].is_some() {
        i_hi += 1;
    }
    let mut i_lo = i_zero;
    while i_lo > 0 && fx[i_lo - 1] > PROFILE_FLOOR && etav[i_lo - 1].is_some() {
        i_lo -= 1;
    }
    let truncated = i_hi + 1 < n || i_lo > 0;
    // cumulative clock over the retained stretch
    let m = i_hi - i_lo + 1;
    let mut clock = vec![0.0f64; m];
    for j in 1..m {
        let i = i_lo + j;
        let g0 = 1.0 / (fx[i - 1] * fx[i - 1]);
        let g1 = 1.0 / (fx[i] * fx[i]);
        clock[j] = clock[j - 1] + 0.5 * (g0 + g1) * path.dt;
    }
    let shift = clock[i_zero - i_lo];
    for v in clock.iter_mut() {
        *v -= shift;
    }
    // transformed space values at the input samples
    let z: Vec<f64> = (i_lo..=i_hi).map(|i| etav[i].unwrap()).collect();
    let input_times: Vec<f64> = (i_lo..=i_hi).map(|i| path.time(i)).collect();
    // uniform re-sampling in the new clock, keeping 0 on the output grid
    let c_lo = clock[0];
    let c_hi = clock[m - 1];
    let span = c_hi - c_lo;
    if span <= 0.0 {
        return Err(FlowError::Domain("upsilon: degenerate transformed horizon".into()));
    }
    let n_out = m.max(2);
    let dt_out = span / (n_out - 1) as f64;
    let k_min = (c_lo / dt_out).round() as i64;
    let k_max = (c_hi / dt_out).floor() as i64;
    let mut out_values = Vec::with_capacity((k_max - k_min + 1) as usize);
    let mut ptr = 0usize;
    for k in k_min..=k_max {
        let t = k as f64 * dt_out;
        let t = t.clamp(c_lo, c_hi);
        while ptr + 1 < m && clock[ptr + 1] <= t {
            ptr += 1;
        }
        let v = if ptr + 1 >= m {
            z[m - 1]
        } else {
            let (c0, c1) = (clock[ptr], clock[ptr + 1]);
            let frac = if c1 > c0 { (t - c0) / (c1 - c0) } else { 0.0 };
            z[ptr] + frac * (z[ptr + 1] - z[ptr])
        };
        out_values.push(v);
    }
    let out = SamplePath::new(k_min as f64 * dt_out, dt_out, out_values, "upsilon")?;
    Ok(TransformedPath { path: out, clock, input_times, raw_values: z, truncated })
}

/// A flow carried through Psi: positions mapped by eta, values divided by f,
/// start values divided by f at the base level.
#[derive(Debug, Clone)]
pub struct TransformedFlow {
    /// Transformed base level eta(r).
    pub r_hat: f64,
    /// Transformed start values a / f(r), in [0,1].
    pub v_values: Vec<f64>,
    /// Transformed positions eta(x) at the retained grid nodes (increasing).
    pub x_hat: Vec<f64>,
    /// values[k][j] = S_{r, x_j}(a_k) / f(x_j), in [0,1].
    pub values: Vec<Vec<f64>>,
}

impl TransformedFlow {
    /// Value of line k at transformed position t, by interpolation.
    pub fn value_at(&self, k: usize, t: f64) -> Result<f64> {
        let xs = &self.x_hat;
        if t < xs[0] - 1e-9 || t > *xs.last().unwrap() + 1e-9 {
            return Err(FlowError::Range(format!("TransformedFlow: {t} outside range")));
        }
        let idx = xs.partition_point(|&v| v <= t).clamp(1, xs.len() - 1);
        let (x0, x1) = (xs[idx - 1], xs[idx]);
        let frac = if x1 > x0 { ((t - x0) / (x1 - x0)).clamp(0.0, 1.0) } else { 0.0 };
        Ok(self.values[k][idx - 1] * (1.0 - frac) + self.values[k][idx] * frac)
    }
}

/// The Psi transform of an empirical local-time flow: rescale each line by f
/// and move the space axis through eta_{f,c}. `tol` bounds how far a flow
/// value may exceed f (relative) before it is a domain error; small excesses
/// from bandwidth noise are clamped.
pub fn psi_flow(
    flow: &EmpiricalFlow,
    f: &ProfileFn,
    c: f64,
    tol: f64,
) -> Result<TransformedFlow> {
    let eta_map = EtaMap::new(f, c)?;
    let f_r = f.eval(flow.r)?;
    if f_r <= PROFILE_FLOOR {
        return Err(FlowError::Domain("psi_flow: f vanishes at the base level".into()));
    }
    let mut v_values = Vec::with_capacity(flow.a_values.len());
    for &a in &flow.a_values {
        let v = a / f_r;
        if v > 1.0 + tol {
            return Err(FlowError::Domain(format!(
                "psi_flow: start value {a} exceeds f({}) = {f_r}",
                flow.r
            )));
        }
        v_values.push(v.clamp(0.0, 1.0));
    }
    // retained nodes: contiguous stretch around the base where f > floor and
    // the node lies inside both grids
    let mut x_hat = Vec::new();
    let mut cols: Vec<usize> = Vec::new();
    for i in 0..flow.x_grid.n_cells {
        let x = flow.x_grid.level(i);
        match f.eval(x) {
            Ok(v) if v > PROFILE_FLOOR => {
                if let Ok(h) = eta_map.eval(x) {
                    x_hat.push(h);
                    cols.push(i);
                }
            }
            _ => {}
        }
    }
    if cols.len() < 2 {
        return Err(FlowError::Domain("psi_flow: no usable grid stretch".into()));
    }
    let mut values = Vec::with_capacity(flow.a_values.len());
    for k in 0..flow.a_values.len() {
        let mut row = Vec::with_capacity(cols.len());
        for (&i, _) in cols.iter().zip(&x_hat) {
            let x = flow.x_grid.level(i);
            let fx = f.eval(x)?;
            let v = flow.values[k][i] / fx;
            if v > 1.0 + tol {
                return Err(FlowError::Domain(format!(
                    "psi_flow: flow value {} exceeds f({x}) = {fx}",
                    flow.values[k][i]
                )));
            }
            row.push(v.clamp(0.0, 1.0));
        }
        values.push(row);
    }
    Ok(TransformedFlow { r_hat: eta_map.eval(flow.r)?, v_values, x_hat, values })
}

/// Discrepancies between the two sides of the composition identity.
#[derive(Debug, Clone)]
pub struct CompositionReport {
    /// |left - right| of the time-0 space identity.
    pub time0_discrepancy: f64,
    /// sup over the checkpoint mesh of |left path - right path|.
    pub sup_process_discrepancy: f64,
    /// Transformed horizon over which the processes were compared.
    pub compared_horizon: f64,
}

/// Check that transforming the shifted path agrees with shifting the
/// transformed path: Upsilon(Z_{C_f(s)+.}, 1 - L_Z(C_f(s),.), eta(c')) versus
/// Upsilon(X_{s+.}, f - L_X(s,.), c'). The path must start at model time 0 and
/// the transform base is c = X_0.
pub fn composition_check(
    path: &SamplePath,
    f: &ProfileFn,
    s: f64,
    c_prime: f64,
    bandwidth: f64,
    n_mesh: usize,
) -> Result<CompositionReport> {
    if path.t0.abs() > 1e-12 {
        return Err(FlowError::Parameter("composition_check: path must start at time 0".into()));
    }
    if s < 0.0 || s > path.t_end() {
        return Err(FlowError::Range(format!("composition_check: s = {s} outside horizon")));
    }
    let c = path.values[0];
    let z = upsilon(path, f, c)?;
    let eta_map = EtaMap::new(f, c)?;

    // right side: the shifted original path under the depleted profile
    let i_s = ((s - path.t0) / path.dt).round() as usize;
    let lx =
        OccupationField::build(path, &[path.time(i_s)], f.grid, bandwidth)?.profiles.remove(0);
    let lx_profile = ProfileFn::new(f.grid, lx)?;
    let f2 = f.minus(&lx_profile)?;
    if f2.eval(c_prime)? <= 0.0 {
        return Err(FlowError::Domain(
            "composition_check: depleted profile not positive at c'".into(),
        ));
    }
    let tail = path.slice(i_s, path.len() - 1)?;
    let tail = SamplePath { t0: 0.0, ..tail };
    let right = upsilon(&tail, &f2, c_prime)?;

    // left side: the transformed path shifted to clock time C_f(s), under
    // 1 - (local time of Z), based at eta(c')
    let c_s = z.clock[i_s.min(z.clock.len() - 1)];
    let zp = &z.path;
    let j_s = ((c_s - zp.t0) / zp.dt).round() as usize;
    let j_s = j_s.min(zp.len() - 1);
    let z_lo = zp.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let z_hi = zp.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z_grid = SpaceGrid::covering(z_lo, z_hi, f.grid.dr.min(0.01), 0.05)?;
    let z_bandwidth = bandwidth.max(z_grid.dr);
    let lz = OccupationField::build(zp, &[zp.time(j_s)], z_grid, z_bandwidth)?.profiles.remove(0);
    let g = ProfileFn::new(z_grid, lz.iter().map(|&v| 1.0 - v).collect())?;
    let z_tail = zp.slice(j_s, zp.len() - 1)?;
    let z_tail = SamplePath { t0: 0.0, ..z_tail };
    let left = upsilon(&z_tail, &g, eta_map.eval(c_prime)?)?;

    // time-0 identity
    let time0 = (left.path.values[0] - right.path.values[0]).abs();

    // process comparison over the common transformed horizon
    let horizon = left.path.t_end().min(right.path.t_end());
    let mut sup: f64 = 0.0;
    for k in 0..n_mesh {
        let t = horizon * k as f64 / (n_mesh.max(2) - 1) as f64;
        let a = left.path.value_at(t)?;
        let b = right.path.value_at(t)?;
        sup = sup.max((a - b).abs());
    }
    Ok(CompositionReport {
        time0_discrepancy: time0,
        sup_process_discrepancy: sup,
        compared_horizon: horizon,
    })
}

/// Total local time of a transformed path at each level of `grid`, up to its
/// full horizon. Convenience used by the split-mass checks.
pub fn total_local_time(path: &SamplePath, grid: SpaceGrid, bandwidth: f64) -> Result<Vec<f64>> {
    let mut occ = vec![0.0f64; grid.n_cells];
    for i in 1..path.len() {
        crate::local_time::accumulate_segment(&mut occ, &grid, path.values[i - 1], path.values[i], path.dt);
    }
    Ok(profile_from_occupation(&occ, &grid, bandwidth))
}

/// Total local time of a transformed path over its whole horizon, computed
/// from the exact (clock, value) samples rather than the uniform re-sampling,
/// whose step is dominated by stretches where the clock runs fast.
pub fn transformed_local_time(
    tp: &TransformedPath,
    grid: SpaceGrid,
    bandwidth: f64,
) -> Result<Vec<f64>> {
    let mut occ = vec![0.0f64; grid.n_cells];
    for i in 1..tp.raw_values.len() {
        let dt = tp.clock[i] - tp.clock[i - 1];
        crate::local_time::accumulate_segment(
            &mut occ,
            &grid,
            tp.raw_values[i - 1],
            tp.raw_values[i],
            dt,
        );
    }
    Ok(profile_from_occupation(&occ, &grid, bandwidth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local_time::empirical_local_time_flow;
    use crate::path::{simulate_bm, simulate_prbm, PrbmParams};
    use crate::rng::RngStream;

    #[test]
    fn eta_trivial_and_log_oracle() {
        let grid = SpaceGrid::new(-0.5, 1e-4, 20_001).unwrap();
        let f = ProfileFn::from_fn(grid, |r| 1.0 + r);
        assert_eq!(eta(&f, 0.3, 0.3).unwrap(), 0.0);
        let v = eta(&f, 0.0, 1.0).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-6, "{v}");
        // orientation: integrating backwards flips the sign
        let w = eta(&f, 1.0, 0.0).unwrap();
        assert!((v + w).abs() < 1e-12);
    }

    #[test]
    fn eta_identity_for_unit_profile() {
        let grid = SpaceGrid::new(-2.0, 1e-3, 4_001).unwrap();
        let f = ProfileFn::constant(grid, 1.0);
        for &x in &[-1.5, -0.3, 0.7, 1.9] {
            assert!((eta(&f, 0.0, x).unwrap() - x).abs() < 1e-10);
        }
    }

    #[test]
    fn eta_inverse_roundtrip() {
        let grid = SpaceGrid::new(-1.0, 1e-3, 3_001).unwrap();
        let f = ProfileFn::from_fn(grid, |r| 1.0 + r * r);
        let m = EtaMap::new(&f, 0.0).unwrap();
        for &x in &[-0.9, -0.2, 0.4, 1.5] {
            let t = m.eval(x).unwrap();
            let back = m.invert(t).unwrap();
            assert!((back - x).abs() < 2e-3, "{x} -> {t} -> {back}");
        }
    }

    #[test]
    fn upsilon_unit_profile_is_identity() {
        let p = simulate_bm(2_001, 1e-3, RngStream::new(11, 0)).unwrap();
        let grid = SpaceGrid::covering(-4.0, 4.0, 1e-3, 0.1).unwrap();
        let f = ProfileFn::constant(grid, 1.0);
        let z = upsilon(&p, &f, p.values[0]).unwrap();
        assert!(!z.truncated);
        assert_eq!(z.path.len(), p.len());
        for (a, b) in z.path.values.iter().zip(&p.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn upsilon_constant_two_rescales_time_and_space() {
        // f = 2: output_t = (X_{4t} - X_0) / 2
        let p = simulate_bm(4_001, 1e-3, RngStream::new(12, 0)).unwrap();
        let grid = SpaceGrid::covering(-5.0, 5.0, 1e-3, 0.1).unwrap();
        let f = ProfileFn::constant(grid, 2.0);
        let z = upsilon(&p, &f, p.values[0]).unwrap();
        for k in (0..z.path.len()).step_by(97) {
            let t = z.path.time(k);
            let expect = (p.value_at(4.0 * t).unwrap() - p.values[0]) / 2.0;
            assert!((z.path.values[k] - expect).abs() < 1e-9, "t = {t}");
        }
        assert!((z.path.t_end() - p.t_end() / 4.0).abs() < 1e-9);
    }

    #[test]
    fn upsilon_shift_equivariance() {
        // replacing X by X + a and f by f(. - a) leaves the output unchanged
        let p = simulate_bm(1_001, 1e-3, RngStream::new(13, 0)).unwrap();
        let a = 0.8;
        let shifted = SamplePath {
            values: p.values.iter().map(|&x| x + a).collect(),
            ..p.clone()
        };
        let grid = SpaceGrid::covering(-4.0, 4.0, 1e-3, 0.1).unwrap();
        let f = ProfileFn::from_fn(grid, |r| 1.0 + 0.1 * r.sin());
        let grid2 = SpaceGrid::covering(-4.0 + a, 4.0 + a, 1e-3, 0.1).unwrap();
        let f_shift = ProfileFn::from_fn(grid2, |r| 1.0 + 0.1 * (r - a).sin());
        let z1 = upsilon(&p, &f, p.values[0]).unwrap();
        let z2 = upsilon(&shifted, &f_shift, shifted.values[0]).unwrap();
        assert_eq!(z1.path.len(), z2.path.len());
        for (u, v) in z1.path.values.iter().zip(&z2.path.values) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn upsilon_local_time_transport() {
        // local time of the output at (t, x) matches L_X(C^-1(t), eta^-1(x)) / f
        let p = simulate_prbm(PrbmParams::new(1.0).unwrap(), 0.0, 1.0, 1e-4, RngStream::new(14, 3))
            .unwrap();
        let grid = SpaceGrid::covering(-3.0, 3.0, 5e-3, 0.1).unwrap();
        let f = ProfileFn::from_fn(grid, |r| 2.0 + 0.5 * (r * 1.3).cos());
        let z = upsilon(&p, &f, 0.0).unwrap();
        let eta_map = EtaMap::new(&f, 0.0).unwrap();
        let t_out = z.path.t_end() * 0.8;
        let z_grid = SpaceGrid::covering(-3.0, 3.0, 5e-3, 0.1).unwrap();
        let eps = 0.02;
        let lz = OccupationField::build(&z.path, &[t_out], z_grid, eps).unwrap().profiles.remove(0);
        let t_in = z.inverse_clock(t_out).unwrap();
        let lx = OccupationField::build(&p, &[t_in], grid, eps).unwrap().profiles.remove(0);
        // compare at a handful of well-occupied transformed levels
        for &x_hat in &[-0.05, 0.0, 0.05, 0.1] {
            let x = eta_map.invert(x_hat).unwrap();
            let fx = f.eval(x).unwrap();
            let ix = ((x - grid.r_min) / grid.dr).round() as usize;
            let iz = ((x_hat - z_grid.r_min) / z_grid.dr).round() as usize;
            let expect = lx[ix] / fx;
            let got = lz[iz];
            if expect > 0.05 {
                let rel = (got - expect).abs() / expect;
                assert!(rel < 0.25, "x_hat = {x_hat}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn psi_unit_profile_is_identity_and_top_line_maps_to_one() {
        let p = simulate_bm(20_001, 1e-4, RngStream::new(15, 2)).unwrap();
        let grid = SpaceGrid::covering(-4.0, 4.0, 1e-2, 0.2).unwrap();
        let eps = 0.02;
        let flow = empirical_local_time_flow(&p, 0.0, &[0.1, 0.3], grid, eps).unwrap();
        let f = ProfileFn::constant(grid, 1.0);
        let t = psi_flow(&flow, &f, 0.0, 10.0).unwrap();
        for (k, row) in t.values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let i = ((t.x_hat[j] - grid.r_min) / grid.dr).round() as usize;
                let orig = flow.values[k][i].min(1.0);
                assert!((v - orig).abs() < 1e-9);
            }
        }
        // a constant profile equal to the line value maps that line to 1
        let f_top = ProfileFn::constant(grid, 0.3);
        let t2 = psi_flow(&flow, &f_top, 0.0, 10.0).unwrap();
        assert!((t2.v_values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psi_commutes_with_upsilon_for_constant_profile() {
        // the local-time flow of Upsilon(X, f) equals Psi of the local-time
        // flow of X; constant f = 2 keeps both sides exactly computable
        let p = simulate_bm(100_001, 1e-4, RngStream::new(16, 4)).unwrap();
        let grid = SpaceGrid::covering(-6.0, 6.0, 1e-2, 0.2).unwrap();
        let eps = 0.02;
        let f = ProfileFn::constant(grid, 2.0);
        let a_list = [0.4, 0.8];
        let flow_x = empirical_local_time_flow(&p, 0.0, &a_list, grid, eps).unwrap();
        let psi = psi_flow(&flow_x, &f, 0.0, 10.0).unwrap();
        let z = upsilon(&p, &f, 0.0).unwrap();
        let z_grid = SpaceGrid::covering(-3.0, 3.0, 1e-2, 0.2).unwrap();
        let v_list: Vec<f64> = a_list.iter().map(|a| a / 2.0).collect();
        let flow_z = empirical_local_time_flow(&z.path, 0.0, &v_list, z_grid, eps).unwrap();
        for (k, _) in v_list.iter().enumerate() {
            if flow_z.unfinished[k] || flow_x.unfinished[k] {
                continue;
            }
            for &x_hat in &[-0.4, -0.2, 0.2, 0.4] {
                let lhs = flow_z.value(k, x_hat).unwrap();
                let rhs = psi.value_at(k, x_hat).unwrap();
                if rhs > 0.05 {
                    let rel = (lhs - rhs).abs() / rhs;
                    assert!(rel < 0.2, "x_hat {x_hat}: {lhs} vs {rhs}");
                }
            }
        }
    }

    #[test]
    fn composition_at_start_time_is_exact_up_to_resampling() {
        let p = simulate_bm(2_001, 1e-3, RngStream::new(17, 1)).unwrap();
        let grid = SpaceGrid::covering(-4.0, 4.0, 2e-3, 0.1).unwrap();
        let f = ProfileFn::from_fn(grid, |r| 2.0 + 0.3 * r.tanh());
        let rep = composition_check(&p, &f, 0.0, 0.1, 0.02, 101).unwrap();
        assert!(rep.time0_discrepancy < 1e-3, "t0 {}", rep.time0_discrepancy);
        assert!(rep.sup_process_discrepancy < 0.02, "sup {}", rep.sup_process_discrepancy);
    }

    #[test]
    fn composition_smooth_synthetic_path() {
        // a deterministic zig-zag path with an affine profile
        let n = 4_001;
        let dt = 5e-4;
        let values: Vec<f64> =
            (0..n).map(|i| (i as f64 * dt * std::f64::consts::PI).sin() * 0.8).collect();
        let p = SamplePath::new(0.0, dt, values, "zigzag").unwrap();
        let grid = SpaceGrid::covering(-1.5, 1.5, 1e-3, 0.1).unwrap();
        let f = ProfileFn::from_fn(grid, |r| 3.0 + r);
        // restart away from the sweep's turning points, where the occupation
        // density (and hence the remaining profile f - L) stays well behaved
        let rep = composition_check(&p, &f, 0.3, 0.05, 0.01, 101).unwrap();
        assert!(rep.time0_discrepancy <= 1.5e-3, "t0 {}", rep.time0_discrepancy);
        assert!(rep.sup_process_discrepancy < 0.05, "sup {}", rep.sup_process_discrepancy);
    }

    #[test]
    fn composition_on_prbm_interior_time() {
        let p = simulate_prbm(PrbmParams::new(1.0).unwrap(), 0.0, 1.0, 1e-4, RngStream::new(18, 6))
            .unwrap();
        let grid = SpaceGrid::covering(-3.0, 3.0, 5e-3, 0.1).unwrap();
        let f = ProfileFn::from_fn(grid, |r| 2.5 + 0.4 * (r * 0.9).sin());
        let rep = composition_check(&p, &f, 0.3, 0.02, 0.02, 101).unwrap();
        assert!(rep.time0_discrepancy < 0.05, "t0 {}", rep.time0_discrepancy);
        // window local-time noise at bandwidth 0.02 feeds both clocks; the
        // bound guards against gross errors (a wrong clock or axis is O(1))
        assert!(rep.sup_process_discrepancy < 0.2, "sup {}", rep.sup_process_discrepancy);
    }
}
