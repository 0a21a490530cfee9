//! Coupled flow lines driven by one shared white-noise field.
//!
//! All lines of a flow read the same [`WhiteNoiseGrid`], which is what makes
//! them a flow rather than a bundle of independent diffusions: two lines at
//! the same level receive the same increment, so equal values stay equal
//! forever. Euler stepping on a shared non-monotone noise can still let two
//! ordered lines cross within one step; a detected crossing merges the lines
//! at the mean of their tentative values, because the continuum objects
//! coalesce rather than cross.

use crate::error::{FlowError, Result};
use crate::local_time::SpaceGrid;
use crate::noise::WhiteNoiseGrid;
use crate::transforms::ProfileFn;

/// Which stochastic flow a [`FlowField`] holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowKind {
    /// Squared-Bessel flow of dimension `delta`; `killed` lines freeze at 0.
    Besq { delta: f64, killed: bool },
    /// Squared-Bessel flow with a distinguished top line of dimension
    /// `delta + delta_prime` started at `b`; interior lines have dimension
    /// `delta` and glue to the top line on meeting it.
    BesqDd { delta: f64, delta_prime: f64, b: f64 },
    /// Jacobi flow on [0,1] driven by the centred measure; absorbs at 1
    /// always and at 0 iff `killed`.
    Jacobi { delta: f64, delta_prime: f64, killed: bool },
}

/// A family of flow lines on a common grid along the integration axis.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub kind: FlowKind,
    /// Leftmost grid point (the earliest start level).
    pub x0: f64,
    pub dx: f64,
    pub n_points: usize,
    /// (start level, start value) per line, in input order.
    pub starts: Vec<(f64, f64)>,
    /// Grid index at which each line activates.
    pub start_index: Vec<usize>,
    /// values[line][point]; NaN before the line's start.
    pub values: Vec<Vec<f64>>,
    /// Coalescence class per line per point (u32::MAX before the start).
    /// Classes only ever merge; equal class means equal value forever.
    pub class: Vec<Vec<u32>>,
    /// Grid index where a line froze at a boundary, if it did.
    pub absorbed: Vec<Option<usize>>,
}

impl FlowField {
    pub fn point(&self, k: usize) -> f64 {
        self.x0 + k as f64 * self.dx
    }

    pub fn index_of(&self, x: f64) -> Result<usize> {
        let u = ((x - self.x0) / self.dx).round();
        if u < 0.0 || u >= self.n_points as f64 {
            return Err(FlowError::Range(format!("flow: {x} outside grid")));
        }
        Ok(u as usize)
    }

    /// Line value at the grid point nearest x; errors before the line starts.
    pub fn line_value(&self, line: usize, x: f64) -> Result<f64> {
        let k = self.index_of(x)?;
        let v = self.values[line][k];
        if v.is_nan() {
            return Err(FlowError::Range(format!("flow: line {line} not yet started at {x}")));
        }
        Ok(v)
    }

    /// Terminal value of a line.
    pub fn terminal(&self, line: usize) -> f64 {
        self.values[line][self.n_points - 1]
    }
}

struct LineState {
    value: f64,
    class: u32,
    /// Frozen lines copy their value forward unchanged.
    frozen: bool,
    /// Only for the top-line construction: index of the line this one glued to.
    glued: bool,
}

/// Shared integration engine. `drift(value) * dx` is the deterministic part;
/// `noise` maps (grid, column, value) to the stochastic increment; boundary
/// handling is per kind.
fn integrate(
    kind: FlowKind,
    grid: &mut WhiteNoiseGrid,
    starts: &[(f64, f64)],
    x_end: f64,
    top_line: Option<usize>,
) -> Result<FlowField> {
    if starts.is_empty() {
        return Err(FlowError::Parameter("flow: empty start list".into()));
    }
    let dx = grid.dx;
    let x0 = starts.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    if x_end <= x0 {
        return Err(FlowError::Parameter(format!("flow: x_end {x_end} not beyond start {x0}")));
    }
    let n_steps = ((x_end - x0) / dx).round() as usize;
    if n_steps == 0 {
        return Err(FlowError::Parameter("flow: horizon shorter than one step".into()));
    }
    if n_steps > grid.n_cols {
        return Err(FlowError::Parameter(format!(
            "flow: {n_steps} steps but the noise grid has {} columns",
            grid.n_cols
        )));
    }
    let n_points = n_steps + 1;
    let n_lines = starts.len();
    let mut start_index = Vec::with_capacity(n_lines);
    for &(r, a) in starts {
        let k = ((r - x0) / dx).round();
        if ((r - x0) - k * dx).abs() > 1e-9 * (1.0 + r.abs()) {
            return Err(FlowError::Parameter(format!("flow: start level {r} off the grid")));
        }
        let k = k as usize;
        if k >= n_points {
            return Err(FlowError::Parameter(format!("flow: start level {r} beyond horizon")));
        }
        match kind {
            FlowKind::Jacobi { .. } => {
                if !(0.0..=1.0).contains(&a) {
                    return Err(FlowError::Parameter(format!(
                        "jacobi flow: start value {a} outside [0,1]"
                    )));
                }
            }
            _ => {
                if a < 0.0 {
                    return Err(FlowError::Parameter(format!(
                        "flow: negative start value {a}"
                    )));
                }
            }
        }
        start_index.push(k);
    }
    let mut values = vec![vec![f64::NAN; n_points]; n_lines];
    let mut class = vec![vec![u32::MAX; n_points]; n_lines];
    let mut absorbed: Vec<Option<usize>> = vec![None; n_lines];
    let mut cur: Vec<Option<LineState>> = (0..n_lines).map(|_| None).collect();

    for k in 0..n_points {
        // activate lines starting here
        for i in 0..n_lines {
            if start_index[i] == k {
                cur[i] = Some(LineState {
                    value: starts[i].1,
                    class: i as u32,
                    frozen: false,
                    glued: false,
                });
            }
        }
        // a newly activated line equal to an existing one coalesces on the spot
        coalesce_equal_values(&mut cur);
        // immediate boundary freezes at activation; the top line may lawfully
        // start at 0 (its dimension is then >= 2) and escapes by drift
        for i in 0..n_lines {
            if start_index[i] == k {
                let st = cur[i].as_mut().unwrap();
                let at_boundary = match kind {
                    FlowKind::Besq { killed, .. } => killed && st.value <= 0.0,
                    FlowKind::BesqDd { delta, .. } => {
                        st.value <= 0.0 && Some(i) != top_line && delta < 2.0
                    }
                    FlowKind::Jacobi { killed, .. } => {
                        st.value >= 1.0 || (killed && st.value <= 0.0)
                    }
                };
                if at_boundary {
                    st.frozen = true;
                    absorbed[i] = Some(k);
                }
            }
        }
        // gluing of interior lines that activate at or above the top line
        if let Some(top) = top_line {
            glue_to_top(&mut cur, top, &mut absorbed, k);
        }
        for i in 0..n_lines {
            if let Some(st) = &cur[i] {
                values[i][k] = st.value;
                class[i][k] = st.class;
            }
        }
        if k == n_steps {
            break;
        }

        // one Euler step over column k, per coalescence class
        let mut reps: Vec<(u32, f64, bool)> = Vec::new(); // (class, value, frozen)
        for st in cur.iter().flatten() {
            if !reps.iter().any(|r| r.0 == st.class) {
                reps.push((st.class, st.value, st.frozen));
            }
        }
        reps.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        let mut tentative: Vec<f64> = Vec::with_capacity(reps.len());
        for &(cl, v, frozen) in &reps {
            if frozen {
                tentative.push(v);
                continue;
            }
            let t = match kind {
                FlowKind::Besq { delta, .. } => {
                    let upper = v.max(0.0);
                    ensure_ceiling(grid, upper);
                    v + 2.0 * grid.integral(upper, k)? + delta * dx
                }
                FlowKind::BesqDd { delta, delta_prime, .. } => {
                    let is_top = top_line
                        .map(|t| cur[t].as_ref().map(|s| s.class) == Some(cl))
                        .unwrap_or(false);
                    let drift = if is_top { delta + delta_prime } else { delta };
                    let upper = v.max(0.0);
                    ensure_ceiling(grid, upper);
                    v + 2.0 * grid.integral(upper, k)? + drift * dx
                }
                FlowKind::Jacobi { delta, delta_prime, .. } => {
                    let u = v.clamp(0.0, 1.0);
                    ensure_ceiling(grid, 1.0);
                    let m = grid.integral(u, k)? - u * grid.integral(1.0, k)?;
                    v + 2.0 * m + (delta * (1.0 - v) - delta_prime * v) * dx
                }
            };
            tentative.push(t);
        }
        // pool adjacent crossings at the mean of their tentative values
        let class_new = pool_crossings(&reps, &tentative);
        for i in 0..n_lines {
            let Some(st) = cur[i].as_mut() else { continue };
            let &(new_class, new_value) = class_new.get(&st.class).unwrap();
            st.class = new_class;
            if !st.frozen {
                st.value = new_value;
                match kind {
                    FlowKind::Besq { killed, .. } => {
                        if st.value <= 0.0 {
                            st.value = 0.0;
                            if killed {
                                st.frozen = true;
                                absorbed[i] = Some(k + 1);
                            }
                        }
                    }
                    FlowKind::BesqDd { delta, .. } => {
                        if st.value <= 0.0 {
                            st.value = 0.0;
                            if Some(i) == top_line || delta < 2.0 {
                                st.frozen = true;
                                absorbed[i] = Some(k + 1);
                            }
                        }
                    }
                    FlowKind::Jacobi { killed, .. } => {
                        if st.value >= 1.0 {
                            st.value = 1.0;
                            st.frozen = true;
                            absorbed[i] = Some(k + 1);
                        } else if st.value <= 0.0 {
                            st.value = 0.0;
                            if killed {
                                st.frozen = true;
                                absorbed[i] = Some(k + 1);
                            }
                        }
                    }
                }
            }
            // frozen lines keep their value; a frozen top line is constant,
            // so glued-and-frozen lines stay equal to it automatically
        }
        if let Some(top) = top_line {
            glue_to_top(&mut cur, top, &mut absorbed, k + 1);
        }
    }
    Ok(FlowField {
        kind,
        x0,
        dx,
        n_points,
        starts: starts.to_vec(),
        start_index,
        values,
        class,
        absorbed,
    })
}

fn ensure_ceiling(grid: &mut WhiteNoiseGrid, upper: f64) {
    while upper > grid.a_max {
        grid.extend_a_max(grid.a_max * 2.0);
    }
}

/// Merge classes of active lines holding exactly equal values.
fn coalesce_equal_values(cur: &mut [Option<LineState>]) {
    let n = cur.len();
    for i in 0..n {
        for j in i + 1..n {
            let pair = match (&cur[i], &cur[j]) {
                (Some(a), Some(b)) if a.value == b.value && a.class != b.class => {
                    Some((a.class.min(b.class), a.class.max(b.class)))
                }
                _ => None,
            };
            if let Some((keep, drop)) = pair {
                for st in cur.iter_mut().flatten() {
                    if st.class == drop {
                        st.class = keep;
                    }
                }
            }
        }
    }
}

/// Interior lines at or above the top line are set equal to it and join its
/// coalescence class permanently.
fn glue_to_top(
    cur: &mut [Option<LineState>],
    top: usize,
    absorbed: &mut [Option<usize>],
    k: usize,
) {
    let Some((top_value, top_class, top_frozen)) =
        cur[top].as_ref().map(|s| (s.value, s.class, s.frozen))
    else {
        return;
    };
    for i in 0..cur.len() {
        if i == top {
            continue;
        }
        let Some(st) = cur[i].as_mut() else { continue };
        if !st.glued && !st.frozen && st.value >= top_value {
            st.value = top_value;
            st.glued = true;
            if top_frozen {
                st.frozen = true;
                absorbed[i] = absorbed[i].or(Some(k));
            }
        }
        if st.glued {
            st.class = top_class;
            st.value = top_value;
            if top_frozen && !st.frozen {
                st.frozen = true;
                absorbed[i] = absorbed[i].or(Some(k));
            }
        }
    }
}

/// Enforce post-step monotonicity of representatives sorted by pre-step value:
/// adjacent violators are pooled at the mean of their tentative values and
/// their classes merged. Returns old class -> (new class, new value).
fn pool_crossings(
    reps: &[(u32, f64, bool)],
    tentative: &[f64],
) -> std::collections::HashMap<u32, (u32, f64)> {
    // stack of pools: (sum, count, min class, member classes)
    let mut pools: Vec<(f64, usize, u32, Vec<u32>)> = Vec::new();
    for (idx, &(cl, _, _)) in reps.iter().enumerate() {
        let mut sum = tentative[idx];
        let mut count = 1usize;
        let mut min_class = cl;
        let mut members = vec![cl];
        while let Some(last) = pools.last() {
            let last_mean = last.0 / last.1 as f64;
            if last_mean > sum / count as f64 {
                let (s, c, mc, mut mem) = pools.pop().unwrap();
                sum += s;
                count += c;
                min_class = min_class.min(mc);
                mem.extend(members);
                members = mem;
            } else {
                break;
            }
        }
        pools.push((sum, count, min_class, members));
    }
    let mut map = std::collections::HashMap::new();
    for (sum, count, min_class, members) in pools {
        let value = sum / count as f64;
        // a pool of one keeps its own tentative value untouched
        for cl in members {
            map.insert(cl, (min_class, value));
        }
    }
    map
}

/// Squared-Bessel flow of dimension `delta` over the shared noise `grid`.
/// Killing is required for `delta <= 0` and forbidden for `delta >= 2`.
pub fn integrate_besq_flow(
    grid: &mut WhiteNoiseGrid,
    delta: f64,
    starts: &[(f64, f64)],
    x_end: f64,
    killed: bool,
) -> Result<FlowField> {
    if delta <= 0.0 && !killed {
        return Err(FlowError::Parameter(format!(
            "besq flow: dimension {delta} requires the killed variant"
        )));
    }
    if delta >= 2.0 && killed {
        return Err(FlowError::Parameter(format!(
            "besq flow: killing is forbidden for dimension {delta} >= 2"
        )));
    }
    integrate(FlowKind::Besq { delta, killed }, grid, starts, x_end, None)
}

/// Flow with a distinguished top line: the top line starts at `b` with drift
/// `delta + delta_prime` and freezes at its first zero; interior lines have
/// drift `delta` and are glued to the top line from their first meeting on.
/// Returns the top line as a profile over the integration axis plus the full
/// field (line 0 is the top line, then the interior starts in input order).
pub fn integrate_besq_dd_flow(
    grid: &mut WhiteNoiseGrid,
    delta: f64,
    delta_prime: f64,
    b: f64,
    x_end: f64,
    starts: &[(f64, f64)],
) -> Result<(ProfileFn, FlowField)> {
    if b < 0.0 || (b == 0.0 && delta + delta_prime < 2.0) {
        return Err(FlowError::Parameter(format!(
            "top line: start {b} needs either b > 0 or top dimension >= 2"
        )));
    }
    let x0 = starts.iter().map(|s| s.0).fold(0.0f64, f64::min);
    let mut all = Vec::with_capacity(starts.len() + 1);
    all.push((x0, b));
    all.extend_from_slice(starts);
    let field = integrate(
        FlowKind::BesqDd { delta, delta_prime, b },
        grid,
        &all,
        x_end,
        Some(0),
    )?;
    let f_grid = SpaceGrid::new(field.x0, field.dx, field.n_points)?;
    let f = ProfileFn::new(f_grid, field.values[0].clone())?;
    Ok((f, field))
}

/// Jacobi flow on [0,1]; `grid.dx` is the time step. Killing is permitted
/// only below dimension 2.
pub fn integrate_jacobi_flow(
    grid: &mut WhiteNoiseGrid,
    delta: f64,
    delta_prime: f64,
    starts: &[(f64, f64)],
    t_end: f64,
    killed: bool,
) -> Result<FlowField> {
    if killed && delta >= 2.0 {
        return Err(FlowError::Parameter(format!(
            "jacobi flow: killing is only defined below dimension 2, got {delta}"
        )));
    }
    ensure_ceiling(grid, 1.0);
    integrate(FlowKind::Jacobi { delta, delta_prime, killed }, grid, starts, t_end, None)
}

/// The killing operator: each line follows the original until its first zero
/// and is constant 0 afterwards. Only meaningful for non-killed flows of
/// dimension strictly between 0 and 2.
pub fn kill_flow(flow: &FlowField) -> Result<FlowField> {
    let FlowKind::Besq { delta, killed } = flow.kind else {
        return Err(FlowError::Parameter("kill operator: not a squared-Bessel flow".into()));
    };
    if killed {
        return Err(FlowError::Parameter("kill operator: flow is already killed".into()));
    }
    if delta <= 0.0 || delta >= 2.0 {
        return Err(FlowError::Parameter(format!(
            "kill operator: dimension {delta} outside (0,2)"
        )));
    }
    let mut out = flow.clone();
    out.kind = FlowKind::Besq { delta, killed: true };
    for (line, vals) in out.values.iter_mut().enumerate() {
        let s0 = out.start_index[line];
        if let Some(hit) = (s0..vals.len()).find(|&k| vals[k] <= 0.0) {
            for v in vals[hit..].iter_mut() {
                *v = 0.0;
            }
            // a dead line leaves its coalescence class: merges the source
            // flow performed after this line's first zero do not exist in
            // the killed flow
            for c in out.class[line][hit + 1..].iter_mut() {
                *c = u32::MAX;
            }
            out.absorbed[line] = Some(hit);
        }
    }
    Ok(out)
}

/// The dual flow, by column-wise inversion over the start values: at each
/// grid point the dual line for level `a` is the smallest start value whose
/// line exceeds `a` there, read on the space-reversed axis. Entries where no
/// line exceeds `a` carry the boundary marker `infinity`. All lines of the
/// input must share one start level.
pub fn dual_of_flow(flow: &FlowField, a_values: &[f64]) -> Result<FlowField> {
    let FlowKind::Besq { delta, killed } = flow.kind else {
        return Err(FlowError::Parameter("dual: not a squared-Bessel flow".into()));
    };
    if flow.start_index.iter().any(|&k| k != 0) {
        return Err(FlowError::Parameter("dual: all lines must start at the base level".into()));
    }
    if a_values.windows(2).any(|w| w[1] < w[0]) {
        return Err(FlowError::Parameter("dual: levels must be ascending".into()));
    }
    let n = flow.n_points;
    let x_end = flow.point(n - 1);
    // order of input lines by start value (they stay ordered afterwards)
    let mut order: Vec<usize> = (0..flow.starts.len()).collect();
    order.sort_by(|&i, &j| flow.starts[i].1.partial_cmp(&flow.starts[j].1).unwrap());
    let mut values = vec![vec![f64::NAN; n]; a_values.len()];
    let mut class = vec![vec![u32::MAX; n]; a_values.len()];
    for m in 0..n {
        let j = n - 1 - m; // dual point m reads the original column n-1-m
        for (ka, &a) in a_values.iter().enumerate() {
            let hit = order.iter().find(|&&line| flow.values[line][j] > a);
            values[ka][m] = match hit {
                Some(&line) => flow.starts[line].1,
                None => f64::INFINITY,
            };
        }
        // classes: equal dual values share a class (first level index wins)
        let mut seen: Vec<(f64, u32)> = Vec::new();
        for ka in 0..a_values.len() {
            let v = values[ka][m];
            let cl = match seen.iter().find(|(w, _)| *w == v) {
                Some(&(_, c)) => c,
                None => {
                    seen.push((v, ka as u32));
                    ka as u32
                }
            };
            class[ka][m] = cl;
        }
    }
    Ok(FlowField {
        kind: FlowKind::Besq { delta: 2.0 - delta, killed: !killed && (0.0..2.0).contains(&delta) },
        x0: -x_end,
        dx: flow.dx,
        n_points: n,
        starts: a_values.iter().map(|&a| (-x_end, a)).collect(),
        start_index: vec![0; a_values.len()],
        values,
        class,
        absorbed: vec![None; a_values.len()],
    })
}

/// Re-integrate one line from an interior grid point on the same noise and
/// return its values from there to the end. On the unmodified grid this must
/// reproduce the stored tail exactly, because every noise increment it needs
/// was already sampled.
pub fn restart_line(
    grid: &mut WhiteNoiseGrid,
    flow: &FlowField,
    line: usize,
    from_index: usize,
) -> Result<Vec<f64>> {
    if from_index >= flow.n_points || from_index < flow.start_index[line] {
        return Err(FlowError::Range(format!("restart: index {from_index} outside line")));
    }
    let (delta, killed) = match flow.kind {
        FlowKind::Besq { delta, killed } => (delta, killed),
        FlowKind::BesqDd { delta, delta_prime, .. } => {
            if line == 0 {
                (delta + delta_prime, true)
            } else {
                (delta, delta < 2.0)
            }
        }
        FlowKind::Jacobi { .. } => {
            return Err(FlowError::Parameter("restart check: use the level-axis flows".into()))
        }
    };
    let mut v = flow.values[line][from_index];
    let mut out = Vec::with_capacity(flow.n_points - from_index);
    out.push(v);
    let mut frozen = killed && v <= 0.0;
    for k in from_index..flow.n_points - 1 {
        if !frozen {
            // exact reproduction holds as long as the original line was never
            // pooled with a neighbour after `from_index`; pooling replaces the
            // Euler update by a mean that a lone restart cannot see
            ensure_ceiling(grid, v.max(0.0));
            let inc = grid.integral(v.max(0.0), k)?;
            v = v + 2.0 * inc + delta * grid.dx;
            if v <= 0.0 {
                v = 0.0;
                if killed {
                    frozen = true;
                }
            }
        }
        out.push(v);
    }
    Ok(out)
}

/// Count violations of the structural flow invariants: ordering among lines
/// sharing a start level, permanence of coalescence classes, constancy after
/// absorption, and range bounds. Zero on every correctly integrated field.
pub fn flow_invariant_violations(flow: &FlowField) -> usize {
    let mut bad = 0usize;
    let n_lines = flow.starts.len();
    // ordering among lines started at the same level
    for i in 0..n_lines {
        for j in 0..n_lines {
            if i == j || flow.start_index[i] != flow.start_index[j] {
                continue;
            }
            if flow.starts[i].1 < flow.starts[j].1 {
                for k in flow.start_index[i]..flow.n_points {
                    let (a, b) = (flow.values[i][k], flow.values[j][k]);
                    if a.is_finite() && b.is_finite() && a > b {
                        bad += 1;
                    }
                }
            }
        }
    }
    // coalescence permanence: same class at k implies same value at all k' >= k
    for i in 0..n_lines {
        for j in i + 1..n_lines {
            let mut merged = false;
            for k in 0..flow.n_points {
                if flow.class[i][k] != u32::MAX && flow.class[i][k] == flow.class[j][k] {
                    merged = true;
                }
                if merged {
                    let (a, b) = (flow.values[i][k], flow.values[j][k]);
                    if !(a == b || (a.is_nan() && b.is_nan())) {
                        bad += 1;
                    }
                }
            }
        }
    }
    // constancy after absorption, and range bounds
    for i in 0..n_lines {
        if let Some(k0) = flow.absorbed[i] {
            let frozen = flow.values[i][k0];
            for k in k0..flow.n_points {
                if flow.values[i][k] != frozen {
                    bad += 1;
                }
            }
        }
        for k in flow.start_index[i]..flow.n_points {
            let v = flow.values[i][k];
            let in_range = match flow.kind {
                FlowKind::Jacobi { .. } => (0.0..=1.0).contains(&v),
                FlowKind::Besq { killed, .. } => v >= 0.0 || !killed,
                FlowKind::BesqDd { .. } => v >= 0.0 || i != 0,
            };
            if v.is_finite() && !in_range {
                bad += 1;
            }
        }
    }
    // interior lines never exceed the top line
    if matches!(flow.kind, FlowKind::BesqDd { .. }) {
        for i in 1..n_lines {
            for k in flow.start_index[i]..flow.n_points {
                if flow.values[i][k] > flow.values[0][k] + 1e-12 {
                    bad += 1;
                }
            }
        }
    }
    bad
}
