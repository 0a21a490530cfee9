//! The shared white-noise field driving flow integrations.
//!
//! The field is organised as columns of pitch `dx` along the integration axis;
//! within a column the cumulative mass B_j(u) = W([0,u] x column j) is a
//! Brownian motion in u with rate dx. Cells of pitch `da` partition the level
//! axis; their increments are i.i.d. N(0, da*dx) and a query below level u
//! returns the whole cells under u plus the partial top cell scaled by
//! sqrt(fraction), which keeps the variance exactly u*dx.
//!
//! Columns are materialised lazily: B_j is sampled at da-nodes on demand, by
//! extension above the highest sampled node and by Brownian bridging between
//! sampled nodes. Draws are counter-based per column, so regenerating a grid
//! from the same stream and replaying the same queries reproduces every value
//! bit for bit, and a line restarted mid-flow on the same grid re-reads its
//! increments from the cache exactly.

use crate::error::{FlowError, Result};
use crate::rng::{counter_gaussian, splitmix64, RngStream};
use std::collections::BTreeMap;

/// One lazily sampled column of the noise field.
#[derive(Debug, Clone, Default)]
struct Column {
    /// Sampled values of B_j at da-node indices; node 0 is pinned to 0.
    nodes: BTreeMap<i64, f64>,
    draws: u64,
}

/// White noise on a (level x space) lattice.
#[derive(Debug, Clone)]
pub struct WhiteNoiseGrid {
    pub da: f64,
    pub dx: f64,
    /// Soft ceiling on queried levels; callers extend it explicitly, and the
    /// already-sampled field is unaffected by extension.
    pub a_max: f64,
    pub n_cols: usize,
    key: u64,
    columns: Vec<Column>,
}

impl WhiteNoiseGrid {
    pub fn new(da: f64, dx: f64, a_max: f64, n_cols: usize, stream: RngStream) -> Result<Self> {
        if da <= 0.0 || dx <= 0.0 || a_max <= 0.0 || n_cols == 0 {
            return Err(FlowError::Parameter(format!(
                "WhiteNoiseGrid: need da, dx, a_max > 0 and n_cols > 0, got {da}, {dx}, {a_max}, {n_cols}"
            )));
        }
        let key = splitmix64(stream.seed ^ splitmix64(stream.stream_id ^ 0x57AB_1E5F_00D5_EEDA));
        Ok(Self { da, dx, a_max, n_cols, key, columns: vec![Column::default(); n_cols] })
    }

    /// Raise the level ceiling. Previously sampled values are never redrawn.
    pub fn extend_a_max(&mut self, new_a_max: f64) {
        if new_a_max > self.a_max {
            self.a_max = new_a_max;
        }
    }

    fn column_key(&self, j: usize) -> u64 {
        splitmix64(self.key ^ (j as u64).wrapping_mul(0xA24B_AED4_963E_E407))
    }

    /// B_j at da-node `n`, sampling conditionally on everything known so far.
    fn node_value(&mut self, j: usize, n: i64) -> f64 {
        debug_assert!(n >= 0);
        if n == 0 {
            return 0.0;
        }
        if let Some(&v) = self.columns[j].nodes.get(&n) {
            return v;
        }
        let key = self.column_key(j);
        let rate = self.da * self.dx;
        let col = &mut self.columns[j];
        let below = col.nodes.range(..n).next_back().map(|(&k, &v)| (k, v));
        let above = col.nodes.range(n + 1..).next().map(|(&k, &v)| (k, v));
        let (lo_n, lo_v) = below.unwrap_or((0, 0.0));
        let g = counter_gaussian(key, col.draws);
        col.draws += 1;
        let v = match above {
            None => lo_v + ((n - lo_n) as f64 * rate).sqrt() * g,
            Some((hi_n, hi_v)) => {
                let span = (hi_n - lo_n) as f64;
                let frac = (n - lo_n) as f64 / span;
                let mean = lo_v + frac * (hi_v - lo_v);
                let var = (n - lo_n) as f64 * (hi_n - n) as f64 / span * rate;
                mean + var.sqrt() * g
            }
        };
        col.nodes.insert(n, v);
        v
    }

    /// W([0, upper] x column j): whole cells below `upper` plus the partial
    /// top cell scaled by sqrt(fraction).
    pub fn integral(&mut self, upper: f64, j: usize) -> Result<f64> {
        if j >= self.n_cols {
            return Err(FlowError::Range(format!(
                "white noise: column {j} beyond grid width {}",
                self.n_cols
            )));
        }
        if upper < 0.0 {
            return Err(FlowError::Parameter(format!("white noise: negative level {upper}")));
        }
        if upper > self.a_max * (1.0 + 1e-12) {
            return Err(FlowError::Range(format!(
                "white noise: level {upper} above grid ceiling {}; extend the grid",
                self.a_max
            )));
        }
        if upper == 0.0 {
            return Ok(0.0);
        }
        let u = upper / self.da;
        let i_full = u.floor() as i64;
        let frac = u - i_full as f64;
        let base = self.node_value(j, i_full);
        if frac <= 0.0 {
            return Ok(base);
        }
        let top = self.node_value(j, i_full + 1);
        Ok(base + frac.sqrt() * (top - base))
    }

    /// Increment of one lattice cell: B_j((i+1) da) - B_j(i da).
    pub fn cell_increment(&mut self, i: i64, j: usize) -> Result<f64> {
        if j >= self.n_cols {
            return Err(FlowError::Range(format!("white noise: column {j} out of range")));
        }
        if i < 0 {
            return Err(FlowError::Parameter("white noise: negative cell index".into()));
        }
        let lo = self.node_value(j, i);
        let hi = self.node_value(j, i + 1);
        Ok(hi - lo)
    }
}

/// W([0, upper] x column `j`) of `grid`; see [`WhiteNoiseGrid::integral`].
pub fn white_noise_integral(grid: &mut WhiteNoiseGrid, upper: f64, j: usize) -> Result<f64> {
    grid.integral(upper, j)
}

/// The centred measure M([0,u] x column j) = W([0,u] x j) - u W([0,1] x j),
/// whose increments have variance u(1-u) dx. Vanishes identically at u = 0
/// and u = 1.
pub fn martingale_measure_increment(grid: &mut WhiteNoiseGrid, j: usize, u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(FlowError::Parameter(format!(
            "martingale measure: level {u} outside [0,1]"
        )));
    }
    let full = grid.integral(1.0, j)?;
    let part = grid.integral(u, j)?;
    Ok(part - u * full)
}

/// Exponential change-of-measure weight at a fixed level.
#[derive(Debug, Clone, Copy)]
pub struct GirsanovWeight {
    pub v: f64,
    pub horizon: f64,
    pub value: f64,
}

/// Weight exp(-d'/(2(1-v)) * m - (T/8) d'^2 v/(1-v)) where `m_at_v` is the
/// accumulated centred-measure mass M_T([0,v]) over the horizon T.
pub fn girsanov_weight(m_at_v: f64, v: f64, delta_prime: f64, horizon: f64) -> Result<GirsanovWeight> {
    if !(0.0..1.0).contains(&v) {
        return Err(FlowError::Parameter(format!("girsanov weight: level {v} outside [0,1)")));
    }
    if horizon <= 0.0 {
        return Err(FlowError::Parameter(format!("girsanov weight: horizon {horizon} <= 0")));
    }
    let value = (-delta_prime / (2.0 * (1.0 - v)) * m_at_v
        - horizon / 8.0 * delta_prime * delta_prime * v / (1.0 - v))
        .exp();
    Ok(GirsanovWeight { v, horizon, value })
}
