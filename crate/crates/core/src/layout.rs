//! Mark layout for the focused view and hexagonal density bins.
//!
//! The child scatter keeps every mark's x fixed and moves marks vertically
//! to trade overlap against displacement:
//!
//! ```text
//! cost(y') = alpha * sum_i sum_j overlap(i, j) + (1 - alpha) * sum_i |y'_i - y_i|
//! ```
//!
//! The double sum runs over ordered pairs including `i = j`, so self pairs
//! add the constant `alpha * n * d`. Positions stay inside `[y_min, y_max]`
//! and keep the initial vertical order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cut::scent;
use crate::model::{NodeId, TypeHierarchy};
use crate::stats::{EventTypeStats, StatsTable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    InvalidAlpha(f64),
    #[error("mark diameter must be positive, got {0}")]
    InvalidDiameter(f64),
    #[error("y bounds [{0}, {1}] are empty")]
    InvalidBounds(f64, f64),
    #[error("initial position of `{code}` ({y}) lies outside the y bounds")]
    OutOfBoundsInitial { code: String, y: f64 },
    #[error("hex radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("unknown event type code `{0}`")]
    UnknownCode(String),
}

/// `max(0, d - |p1 - p2|)`.
pub fn overlap(x1: f64, y1: f64, x2: f64, y2: f64, d: f64) -> f64 {
    (d - (x1 - x2).hypot(y1 - y2)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub code: String,
    pub x: f64,
    pub y0: f64,
}

impl Mark {
    pub fn new(code: impl Into<String>, x: f64, y0: f64) -> Self {
        Mark { code: code.into(), x, y0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeParams {
    pub diameter: f64,
    pub alpha: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl OptimizeParams {
    pub fn new(diameter: f64, y_min: f64, y_max: f64) -> Self {
        OptimizeParams { diameter, alpha: 0.8, y_min, y_max, tolerance: 1e-6, max_iterations: 10_000 }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimized {
    /// Optimized y per input mark, in input order.
    pub y: Vec<f64>,
    pub initial_cost: f64,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// The full objective, evaluated term by term over all ordered pairs.
pub fn layout_cost(marks: &[Mark], y: &[f64], d: f64, alpha: f64) -> f64 {
    let mut over = 0.0;
    for (i, a) in marks.iter().enumerate() {
        for (j, b) in marks.iter().enumerate() {
            over += overlap(a.x, y[i], b.x, y[j], d);
        }
    }
    let distortion: f64 = marks.iter().zip(y).map(|(m, &yy)| (yy - m.y0).abs()).sum();
    alpha * over + (1.0 - alpha) * distortion
}

/// Total order used for the ordering constraint: by initial y, ties broken
/// by code and then input position.
pub fn mark_order(marks: &[Mark]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..marks.len()).collect();
    order.sort_by(|&a, &b| {
        marks[a]
            .y0
            .total_cmp(&marks[b].y0)
            .then_with(|| marks[a].code.cmp(&marks[b].code))
            .then(a.cmp(&b))
    });
    order
}

/// Whether `y` satisfies the bounds and keeps the order of `marks`
/// (strictly where initial positions differ, weakly within ties).
pub fn is_feasible(marks: &[Mark], y: &[f64], y_min: f64, y_max: f64) -> bool {
    if y.iter().any(|&v| !(y_min..=y_max).contains(&v)) {
        return false;
    }
    let order = mark_order(marks);
    order.windows(2).all(|w| {
        let (a, b) = (w[0], w[1]);
        if marks[a].y0 < marks[b].y0 {
            y[a] < y[b]
        } else {
            y[a] <= y[b]
        }
    })
}

struct Solver {
    y0: Vec<f64>,
    y: Vec<f64>,
    /// Minimum gap between ordered positions `p - 1` and `p`.
    sep: Vec<f64>,
    /// Marks within one diameter horizontally, with the vertical distance
    /// below which they overlap.
    nbrs: Vec<Vec<(usize, f64)>>,
    d: f64,
    w_overlap: f64,
    w_shift: f64,
    y_min: f64,
    y_max: f64,
}

impl Solver {
    fn lower_shift(&self, a: usize) -> f64 {
        let mut lo = self.y_min - self.y[a];
        if a > 0 {
            lo = lo.max(self.y[a - 1] + self.sep[a] - self.y[a]);
        }
        lo.min(0.0)
    }

    fn upper_shift(&self, b: usize) -> f64 {
        let n = self.y.len();
        let mut hi = self.y_max - self.y[b];
        if b + 1 < n {
            hi = hi.min(self.y[b + 1] - self.sep[b + 1] - self.y[b]);
        }
        hi.max(0.0)
    }

    /// Exact line search for shifting ordered block `[a, b]` rigidly.
    /// Between breakpoints the objective is concave in the shift, so only
    /// breakpoints need to be compared. Returns the gain of the applied move.
    fn move_block(&mut self, a: usize, b: usize) -> f64 {
        let tlo = self.lower_shift(a);
        let thi = self.upper_shift(b);
        if thi - tlo <= 0.0 {
            return 0.0;
        }
        // crossing pairs that can overlap somewhere in [tlo, thi]
        let mut pairs: Vec<(f64, f64, f64)> = Vec::new(); // (delta at t=0, dx^2, h)
        for i in a..=b {
            for &(q, h) in &self.nbrs[i] {
                if (a..=b).contains(&q) {
                    continue;
                }
                let delta = self.y[i] - self.y[q];
                let (lo, hi) = (delta + tlo, delta + thi);
                let closest = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
                if closest < h {
                    let dx2 = self.d * self.d - h * h;
                    pairs.push((delta, dx2.max(0.0), h));
                }
            }
        }
        let mut shifts: Vec<f64> = (a..=b).map(|i| self.y0[i] - self.y[i]).collect();
        shifts.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(shifts.len() + 1);
        prefix.push(0.0);
        for &s in &shifts {
            prefix.push(prefix.last().unwrap() + s);
        }
        let total = *prefix.last().unwrap();
        let m = shifts.len() as f64;
        let d = self.d;
        let cost = |t: f64| -> f64 {
            let over: f64 = pairs
                .iter()
                .map(|&(delta, dx2, _)| {
                    let dy = delta + t;
                    (d - (dx2 + dy * dy).sqrt()).max(0.0)
                })
                .sum();
            let k = shifts.partition_point(|&s| s < t);
            let below = t * k as f64 - prefix[k];
            let above = (total - prefix[k]) - t * (m - k as f64);
            self.w_overlap * over + self.w_shift * (below + above)
        };

        let mut candidates = vec![tlo, thi];
        candidates.extend(shifts.iter().copied());
        for &(delta, _, h) in &pairs {
            candidates.push(h - delta);
            candidates.push(-h - delta);
        }
        let current = cost(0.0);
        let mut best: (f64, f64) = (current, 0.0);
        for t in candidates {
            if !(tlo..=thi).contains(&t) || t == 0.0 {
                continue;
            }
            let c = cost(t);
            if c < best.0 || (c == best.0 && t.abs() < best.1.abs()) {
                best = (c, t);
            }
        }
        let gain = current - best.0;
        if best.1 == 0.0 || gain <= 1e-12 * current.abs().max(1.0) {
            return 0.0;
        }
        for i in a..=b {
            self.y[i] += best.1;
        }
        // keep exact bound and order feasibility under rounding
        self.y[a] = self.y[a].max(self.y_min);
        if a > 0 {
            self.y[a] = self.y[a].max(self.y[a - 1] + self.sep[a]);
        }
        self.y[b] = self.y[b].min(self.y_max);
        if b + 1 < self.y.len() {
            self.y[b] = self.y[b].min(self.y[b + 1] - self.sep[b + 1]);
        }
        gain
    }

    /// Maximal runs of ordered marks whose consecutive gaps satisfy `joined`.
    fn runs(&self, joined: impl Fn(usize) -> bool) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for p in 1..=self.y.len() {
            if p == self.y.len() || !joined(p) {
                if p - 1 > start {
                    out.push((start, p - 1));
                }
                start = p;
            }
        }
        out
    }

    /// Runs of marks whose consecutive gaps are below one diameter.
    fn clusters(&self) -> Vec<(usize, usize)> {
        self.runs(|p| self.y[p] - self.y[p - 1] <= self.d)
    }

    /// Runs of marks held together by the ordering constraint.
    fn tight_runs(&self) -> Vec<(usize, usize)> {
        self.runs(|p| self.y[p] - self.y[p - 1] <= 2.0 * self.sep[p] + 1e-12 * self.d)
    }

    fn sweep(&mut self) -> f64 {
        let n = self.y.len();
        let mut gain = 0.0;
        for p in 0..n {
            gain += self.move_block(p, p);
        }
        let mut blocks = self.clusters();
        blocks.extend(self.tight_runs());
        for (s, e) in blocks {
            for k in s..e {
                gain += self.move_block(k, e);
            }
            for k in (s + 1..e).rev() {
                gain += self.move_block(s, k);
            }
        }
        gain
    }
}

/// Minimizes the layout cost by cyclic coordinate descent with exact line
/// searches over single marks and over contiguous runs of touching marks.
/// Every iterate is feasible and no accepted move raises the cost.
pub fn optimize_y(marks: &[Mark], params: &OptimizeParams) -> Result<Optimized, LayoutError> {
    let OptimizeParams { diameter: d, alpha, y_min, y_max, .. } = *params;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LayoutError::InvalidAlpha(alpha));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(LayoutError::InvalidDiameter(d));
    }
    if !(y_min <= y_max) {
        return Err(LayoutError::InvalidBounds(y_min, y_max));
    }
    if let Some(m) = marks.iter().find(|m| !(y_min..=y_max).contains(&m.y0)) {
        return Err(LayoutError::OutOfBoundsInitial { code: m.code.clone(), y: m.y0 });
    }
    let initial: Vec<f64> = marks.iter().map(|m| m.y0).collect();
    let initial_cost = layout_cost(marks, &initial, d, alpha);
    if marks.len() < 2 {
        return Ok(Optimized { y: initial, initial_cost, cost: initial_cost, iterations: 0, converged: true });
    }

    let order = mark_order(marks);
    let x: Vec<f64> = order.iter().map(|&i| marks[i].x).collect();
    let y0: Vec<f64> = order.iter().map(|&i| marks[i].y0).collect();
    let min_sep = 1e-9 * d;
    let sep: Vec<f64> = (0..order.len())
        .map(|p| if p == 0 { 0.0 } else { (y0[p] - y0[p - 1]).min(min_sep) })
        .collect();
    let mut nbrs = vec![Vec::new(); order.len()];
    let mut by_x: Vec<usize> = (0..order.len()).collect();
    by_x.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    for (k, &p) in by_x.iter().enumerate() {
        for &q in &by_x[k + 1..] {
            let dx = x[q] - x[p];
            if dx >= d {
                break;
            }
            let h = (d * d - dx * dx).sqrt();
            nbrs[p].push((q, h));
            nbrs[q].push((p, h));
        }
    }

    let mut solver = Solver {
        y: y0.clone(),
        y0,
        sep,
        nbrs,
        d,
        w_overlap: 2.0 * alpha,
        w_shift: 1.0 - alpha,
        y_min,
        y_max,
    };
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        iterations += 1;
        if solver.sweep() < params.tolerance {
            converged = true;
            break;
        }
    }

    let mut y = vec![0.0; marks.len()];
    for (p, &i) in order.iter().enumerate() {
        y[i] = solver.y[p];
    }
    let cost = layout_cost(marks, &y, d, alpha);
    if cost > initial_cost {
        // rounding guard: never return something worse than the input
        return Ok(Optimized { y: initial, initial_cost, cost: initial_cost, iterations, converged });
    }
    Ok(Optimized { y, initial_cost, cost, iterations, converged })
}

/// Screen geometry for the focused view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocusParams {
    pub width: f64,
    pub height: f64,
    pub mark_diameter: f64,
    pub alpha: f64,
}

impl Default for FocusParams {
    fn default() -> Self {
        FocusParams { width: 640.0, height: 360.0, mark_diameter: 14.0, alpha: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisDomain {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusMark {
    pub code: String,
    pub label: String,
    pub depth: u32,
    pub correlation: f64,
    pub prevalence: f64,
    pub seq_count: u64,
    pub occ_count: u64,
    pub chi2: f64,
    pub scent: f64,
    pub leaf: bool,
    /// Screen x.
    pub x: f64,
    /// Screen y before optimization (children) or depth rank (path).
    pub y0: f64,
    /// Screen y after optimization.
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Guides {
    /// Screen x of zero correlation.
    pub zero: f64,
    /// Screen x of the focused type's correlation.
    pub focus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusLayout {
    pub focus: String,
    pub params: FocusParams,
    /// Correlation domain of the shared x axis, centered on the focus.
    pub x_domain: AxisDomain,
    /// Prevalence domain of the child scatter.
    pub y_domain: AxisDomain,
    pub guides: Guides,
    /// Root first, focus excluded.
    pub ancestors: Vec<FocusMark>,
    pub focus_mark: FocusMark,
    pub children: Vec<FocusMark>,
    pub initial_cost: f64,
    pub cost: f64,
    pub iterations: usize,
}

/// Path from the root to `focus_code` laid out by depth, plus the focus's
/// children placed by correlation and prevalence and then de-overlapped.
pub fn focus_layout(
    h: &TypeHierarchy,
    stats: &StatsTable,
    focus_code: &str,
    params: &FocusParams,
) -> Result<FocusLayout, LayoutError> {
    let focus = h.id(focus_code).ok_or_else(|| LayoutError::UnknownCode(focus_code.to_owned()))?;
    let scents = scent(h, &stats.correlations());
    let focus_stats = stats.get(focus);
    let rho_f = focus_stats.correlation;
    let path = h.ancestor_ids(focus);
    let children = h.children(focus);

    let half = path
        .iter()
        .chain(children)
        .map(|&id| (stats.get(id).correlation - rho_f).abs())
        .fold(rho_f.abs(), f64::max);
    let half = (half * 1.1).max(0.01);
    let x_domain = AxisDomain { min: rho_f - half, max: rho_f + half };
    let to_x = |rho: f64| (rho - x_domain.min) / (2.0 * half) * params.width;
    let focus_prev = focus_stats.prevalence;
    let to_y = |prev: f64| {
        if focus_prev > 0.0 {
            (prev / focus_prev * params.height).clamp(0.0, params.height)
        } else {
            0.0
        }
    };

    let mark = |id: NodeId, y0: f64| {
        let s: &EventTypeStats = stats.get(id);
        FocusMark {
            code: s.code.clone(),
            label: s.label.clone(),
            depth: s.depth,
            correlation: s.correlation,
            prevalence: s.prevalence,
            seq_count: s.seq_count,
            occ_count: s.occ_count,
            chi2: s.chi2,
            scent: scents[id.index()],
            leaf: h.is_leaf(id),
            x: to_x(s.correlation),
            y0,
            y: y0,
        }
    };

    let ancestors: Vec<FocusMark> = path.iter().map(|&id| mark(id, h.depth(id) as f64)).collect();
    let focus_mark = mark(focus, h.depth(focus) as f64);
    let mut child_marks: Vec<FocusMark> =
        children.iter().map(|&id| mark(id, to_y(stats.get(id).prevalence))).collect();

    let marks: Vec<Mark> = child_marks.iter().map(|m| Mark::new(m.code.clone(), m.x, m.y0)).collect();
    let opt_params =
        OptimizeParams::new(params.mark_diameter, 0.0, params.height).with_alpha(params.alpha);
    let opt = optimize_y(&marks, &opt_params)?;
    for (m, &y) in child_marks.iter_mut().zip(&opt.y) {
        m.y = y;
    }

    Ok(FocusLayout {
        focus: focus_code.to_owned(),
        params: *params,
        x_domain,
        y_domain: AxisDomain { min: 0.0, max: focus_prev },
        guides: Guides { zero: to_x(0.0), focus: to_x(rho_f) },
        ancestors,
        focus_mark,
        children: child_marks,
        initial_cost: opt.initial_cost,
        cost: opt.cost,
        iterations: opt.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Axial {
    pub q: i64,
    pub r: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexBin {
    pub q: i64,
    pub r: i64,
    pub x: f64,
    pub y: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexBinGrid {
    pub radius: f64,
    /// Non-empty bins ordered by axial coordinate.
    pub bins: Vec<HexBin>,
}

impl HexBinGrid {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Center of a pointy-top hexagon in axial coordinates.
pub fn hex_center(c: Axial, radius: f64) -> (f64, f64) {
    (radius * SQRT3 * (c.q as f64 + c.r as f64 / 2.0), radius * 1.5 * c.r as f64)
}

/// The hexagon whose center is nearest to `(x, y)`; equidistant centers
/// resolve to the smallest `(q, r)`.
pub fn hex_of(x: f64, y: f64, radius: f64) -> Axial {
    let qf = (SQRT3 / 3.0 * x - y / 3.0) / radius;
    let rf = (2.0 / 3.0 * y) / radius;
    let sf = -qf - rf;
    let (mut q, mut r, s) = (qf.round(), rf.round(), sf.round());
    let (dq, dr, ds) = ((q - qf).abs(), (r - rf).abs(), (s - sf).abs());
    if dq > dr && dq > ds {
        q = -r - s;
    } else if dr > ds {
        r = -q - s;
    }
    let guess = Axial { q: q as i64, r: r as i64 };
    const NEIGHBORS: [(i64, i64); 7] = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)];
    NEIGHBORS
        .iter()
        .map(|&(a, b)| Axial { q: guess.q + a, r: guess.r + b })
        .map(|c| {
            let (cx, cy) = hex_center(c, radius);
            ((cx - x).powi(2) + (cy - y).powi(2), c)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, c)| c)
        .expect("seven candidates")
}

pub fn hexbin(points: &[(f64, f64)], radius: f64) -> Result<HexBinGrid, LayoutError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(LayoutError::InvalidRadius(radius));
    }
    let mut counts: BTreeMap<Axial, usize> = BTreeMap::new();
    for &(x, y) in points {
        *counts.entry(hex_of(x, y, radius)).or_default() += 1;
    }
    let bins = counts
        .into_iter()
        .map(|(c, count)| {
            let (x, y) = hex_center(c, radius);
            HexBin { q: c.q, r: c.r, x, y, count }
        })
        .collect();
    Ok(HexBinGrid { radius, bins })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_examples() {
        assert_eq!(overlap(0.0, 0.0, 0.0, 0.0, 10.0), 10.0);
        assert_eq!(overlap(0.0, 0.0, 6.0, 8.0, 10.0), 0.0);
        assert!((overlap(0.0, 0.0, 0.0, 6.0, 10.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn separated_marks_unchanged() {
        let marks = vec![Mark::new("a", 0.0, 0.0), Mark::new("b", 0.0, 20.0), Mark::new("c", 50.0, 5.0)];
        let out = optimize_y(&marks, &OptimizeParams::new(10.0, 0.0, 100.0)).unwrap();
        assert_eq!(out.y, vec![0.0, 20.0, 5.0]);
        assert_eq!(out.cost, out.initial_cost);
        assert!((out.cost - 0.8 * 3.0 * 10.0).abs() < 1e-12);
    }

    #[test]
    fn two_coincident_marks() {
        let marks = vec![Mark::new("b", 5.0, 50.0), Mark::new("a", 5.0, 50.0)];
        let out = optimize_y(&marks, &OptimizeParams::new(10.0, 0.0, 100.0)).unwrap();
        assert!(((out.y[0] - out.y[1]).abs() - 10.0).abs() < 1e-9);
        // tie order by code: "a" sits below "b"
        assert!(out.y[1] < out.y[0]);
        assert!(is_feasible(&marks, &out.y, 0.0, 100.0));
    }

    #[test]
    fn three_coincident_marks() {
        let marks: Vec<Mark> = ["a", "b", "c"].iter().map(|c| Mark::new(*c, 0.0, 50.0)).collect();
        let out = optimize_y(&marks, &OptimizeParams::new(10.0, 0.0, 100.0)).unwrap();
        let mut y = out.y.clone();
        y.sort_by(f64::total_cmp);
        assert!((y[1] - y[0] - 10.0).abs() < 1e-9);
        assert!((y[2] - y[1] - 10.0).abs() < 1e-9);
        assert!((out.y[1] - 50.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let marks = vec![Mark::new("a", 0.0, 5.0)];
        let p = OptimizeParams::new(10.0, 0.0, 1.0);
        assert!(matches!(optimize_y(&marks, &p), Err(LayoutError::OutOfBoundsInitial { .. })));
        let p = OptimizeParams::new(10.0, 0.0, 10.0).with_alpha(1.0);
        assert!(matches!(optimize_y(&marks, &p), Err(LayoutError::InvalidAlpha(_))));
        let p = OptimizeParams::new(0.0, 0.0, 10.0);
        assert!(matches!(optimize_y(&marks, &p), Err(LayoutError::InvalidDiameter(_))));
    }

    #[test]
    fn hexbin_examples() {
        let g = hexbin(&[(0.3, 0.2)], 0.1).unwrap();
        assert_eq!(g.bins.len(), 1);
        assert_eq!(g.total(), 1);
        let g = hexbin(&[(0.3, 0.2), (0.3, 0.2)], 0.1).unwrap();
        assert_eq!(g.bins.len(), 1);
        assert_eq!(g.bins[0].count, 2);
        assert!(hexbin(&[], 0.0).is_err());
    }

    #[test]
    fn hex_of_is_nearest_center() {
        let radius = 0.7;
        for i in -40..40 {
            for j in -40..40 {
                let (x, y) = (i as f64 * 0.113, j as f64 * 0.097);
                let c = hex_of(x, y, radius);
                let (cx, cy) = hex_center(c, radius);
                let best = (cx - x).hypot(cy - y);
                for q in c.q - 3..=c.q + 3 {
                    for r in c.r - 3..=c.r + 3 {
                        let (ox, oy) = hex_center(Axial { q, r }, radius);
                        assert!(best <= (ox - x).hypot(oy - y) + 1e-12);
                    }
                }
            }
        }
    }
}
