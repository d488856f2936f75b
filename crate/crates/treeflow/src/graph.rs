//! The metric space of monotone graphs.
//!
//! A monotone graph is the continuous version of the graph of a nonnegative
//! nondecreasing map on `[0, z0]`: a planar curve nondecreasing in both
//! coordinates, with vertical segments standing in for jumps and horizontal
//! segments for intervals of constancy. Everything this crate produces (tree
//! embeddings at rational times, grid solutions of the sheet flow) is exactly
//! a polyline, so graphs are stored as normalized vertex lists and the
//! Hausdorff metric is computed exactly from the segment structure rather
//! than by sampling.
//!
//! Two metrics are provided: the planar Hausdorff distance `rho` between the
//! curves, and the rotated distance `rho'` that views each curve as a
//! 1-Lipschitz function of the diagonal parameter `s = x + y` and compares
//! profiles in sup norm plus the difference of total diagonal lengths.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

pub fn pt(x: f64, y: f64) -> Point {
    Point { x, y }
}

impl Point {
    fn sub(self, o: Point) -> Point {
        pt(self.x - o.x, self.y - o.y)
    }
    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }
    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }
    fn dist2(self, o: Point) -> f64 {
        let d = self.sub(o);
        d.dot(d)
    }
}

/// A normalized monotone polyline: both coordinates nondecreasing, first
/// vertex at `(0, 0)`, no repeated or collinear interior vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneGraph {
    verts: Vec<Point>,
}

impl MonotoneGraph {
    /// Build from a vertex list. The list must be nondecreasing in both
    /// coordinates and start at `x = 0`; a leading vertical segment from
    /// `(0, 0)` is inserted when the curve starts above zero, matching the
    /// convention that the underlying map vanishes left of the origin.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGraph("empty vertex list".into()));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidGraph("non-finite coordinate".into()));
        }
        if points[0].x != 0.0 {
            return Err(Error::InvalidGraph(format!(
                "curve must start at x = 0, got x = {}",
                points[0].x
            )));
        }
        if points[0].y < 0.0 {
            return Err(Error::InvalidGraph("curve must start at y >= 0".into()));
        }
        for w in points.windows(2) {
            if w[1].x < w[0].x || w[1].y < w[0].y {
                return Err(Error::InvalidGraph(format!(
                    "coordinates must be nondecreasing: ({}, {}) -> ({}, {})",
                    w[0].x, w[0].y, w[1].x, w[1].y
                )));
            }
        }
        let mut verts = Vec::with_capacity(points.len() + 1);
        if points[0].y > 0.0 {
            verts.push(pt(0.0, 0.0));
        }
        for p in points {
            push_normalized(&mut verts, p);
        }
        Ok(Self { verts })
    }

    /// The identity map on `[0, z]` (a single point when `z = 0`).
    pub fn identity(z: f64) -> Self {
        if z == 0.0 {
            Self { verts: vec![pt(0.0, 0.0)] }
        } else {
            Self { verts: vec![pt(0.0, 0.0), pt(z, z)] }
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.verts
    }

    /// Domain endpoint.
    pub fn z0(&self) -> f64 {
        self.verts.last().unwrap().x
    }

    /// Range endpoint (top value).
    pub fn z1(&self) -> f64 {
        self.verts.last().unwrap().y
    }

    /// Multiply both coordinates by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            verts: self.verts.iter().map(|p| pt(p.x * c, p.y * c)).collect(),
        }
    }

    /// Right-continuous evaluation: the supremum of the curve's values above
    /// `x`. `None` outside `[0, z0]`.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        if x < 0.0 || x > self.z0() {
            return None;
        }
        // Last vertex with this x bounds the jump from above; between
        // vertices the curve is a straight segment.
        let mut idx = match self
            .verts
            .binary_search_by(|p| p.x.partial_cmp(&x).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        while idx + 1 < self.verts.len() && self.verts[idx + 1].x <= x {
            idx += 1;
        }
        let p = self.verts[idx];
        if p.x == x || idx + 1 == self.verts.len() {
            return Some(p.y);
        }
        let q = self.verts[idx + 1];
        Some(p.y + (x - p.x) * (q.y - p.y) / (q.x - p.x))
    }

    /// Sum of squared jump heights: the quadratic variation of the underlying
    /// monotone map. Zero iff the curve has no vertical segment.
    pub fn quadratic_variation(&self) -> f64 {
        let mut q = 0.0;
        let mut i = 0;
        while i + 1 < self.verts.len() {
            if self.verts[i + 1].x == self.verts[i].x {
                let lo = self.verts[i].y;
                let mut j = i + 1;
                while j + 1 < self.verts.len() && self.verts[j + 1].x == self.verts[i].x {
                    j += 1;
                }
                let jump = self.verts[j].y - lo;
                q += jump * jump;
                i = j;
            } else {
                i += 1;
            }
        }
        q
    }

    /// Jump locations and sizes (vertical segments of positive length).
    pub fn jumps(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for w in self.verts.windows(2) {
            if w[1].x == w[0].x && w[1].y > w[0].y {
                out.push((w[0].x, w[1].y - w[0].y));
            }
        }
        out
    }

    /// Exact planar Hausdorff distance between the two curves. Normalized
    /// vertex lists are canonical, so equal curve sets compare equal and the
    /// distance is exactly zero for them.
    pub fn rho(&self, other: &Self) -> f64 {
        if self.verts == other.verts {
            return 0.0;
        }
        directed_hausdorff(self, other).max(directed_hausdorff(other, self))
    }

    /// Rotated distance: both curves are 1-Lipschitz graphs of `g = y - x`
    /// over the diagonal parameter `s = x + y`; the distance is the sup
    /// difference of the profiles on the common parameter range plus the
    /// difference of total ranges.
    pub fn rho_prime(&self, other: &Self) -> f64 {
        let (sa, ga) = self.rotated_profile();
        let (sb, gb) = other.rotated_profile();
        let s_star = sa.last().unwrap().min(*sb.last().unwrap());
        let mut sup = 0.0f64;
        let eval = |s: f64, ss: &[f64], gs: &[f64]| -> f64 {
            let i = match ss.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
                Ok(i) => return gs[i],
                Err(i) => i,
            };
            if i == 0 {
                return gs[0];
            }
            if i >= ss.len() {
                return *gs.last().unwrap();
            }
            let t = (s - ss[i - 1]) / (ss[i] - ss[i - 1]);
            gs[i - 1] + t * (gs[i] - gs[i - 1])
        };
        for &s in sa.iter().chain(sb.iter()) {
            if s <= s_star {
                sup = sup.max((eval(s, &sa, &ga) - eval(s, &sb, &gb)).abs());
            }
        }
        sup = sup.max((eval(s_star, &sa, &ga) - eval(s_star, &sb, &gb)).abs());
        (sa.last().unwrap() - sb.last().unwrap()).abs() + sup
    }

    fn rotated_profile(&self) -> (Vec<f64>, Vec<f64>) {
        let s: Vec<f64> = self.verts.iter().map(|p| p.x + p.y).collect();
        let g: Vec<f64> = self.verts.iter().map(|p| p.y - p.x).collect();
        (s, g)
    }

    fn seg_count(&self) -> usize {
        (self.verts.len() - 1).max(1)
    }

    fn seg(&self, i: usize) -> (Point, Point) {
        if self.verts.len() == 1 {
            (self.verts[0], self.verts[0])
        } else {
            (self.verts[i], self.verts[i + 1])
        }
    }
}

fn push_normalized(verts: &mut Vec<Point>, p: Point) {
    if let Some(&last) = verts.last() {
        if last == p {
            return;
        }
        if verts.len() >= 2 {
            let a = verts[verts.len() - 2];
            if (last.sub(a)).cross(p.sub(last)) == 0.0 {
                verts.pop();
            }
        }
    }
    verts.push(p);
}

// ---------------------------------------------------------------------------
// Exact Hausdorff machinery.
//
// The directed distance sup_{a in A} dist(a, B) is attained either at a vertex
// of A or at an interior point of a segment where the lower envelope of the
// per-segment distance functions switches branch. Along a straight segment the
// squared distance to any fixed segment of B is piecewise quadratic (nearest
// feature: one endpoint, the other endpoint, or the perpendicular band), so
// branch switches solve quadratic equations in closed form. The candidate
// segments of B for a segment of A are bracketed by the nearest features of
// its two endpoints: for monotone curves the nearest-point correspondence is
// monotone, so the active window moves forward only.
// ---------------------------------------------------------------------------

fn point_seg_dist2(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let l2 = ab.dot(ab);
    if l2 == 0.0 {
        return p.dist2(a);
    }
    let t = (p.sub(a)).dot(ab) / l2;
    if t <= 0.0 {
        p.dist2(a)
    } else if t >= 1.0 {
        p.dist2(b)
    } else {
        let proj = pt(a.x + t * ab.x, a.y + t * ab.y);
        p.dist2(proj)
    }
}

/// Distance from `p` to the whole curve `b`, with the index range of segments
/// attaining the minimum (up to a relative tie tolerance). `bu` caches the
/// diagonal parameter of `b`'s vertices for pruning.
fn dist_to_graph(p: Point, b: &MonotoneGraph, bu: &[f64]) -> (f64, usize, usize) {
    let ns = b.seg_count();
    let up = p.x + p.y;
    let start = match bu.binary_search_by(|v| v.partial_cmp(&up).unwrap()) {
        Ok(i) => i,
        Err(i) => i,
    }
    .saturating_sub(1)
    .min(ns - 1);

    let mut best = f64::INFINITY;
    let mut lo = start;
    let mut hi = start;
    let consider = |j: usize, best: &mut f64, lo: &mut usize, hi: &mut usize| {
        let (s0, s1) = b.seg(j);
        let d2 = point_seg_dist2(p, s0, s1);
        let tie = 1e-12 * (1.0 + *best);
        if d2 < *best - tie {
            *best = d2;
            *lo = j;
            *hi = j;
        } else if d2 <= *best + tie {
            *lo = (*lo).min(j);
            *hi = (*hi).max(j);
            if d2 < *best {
                *best = d2;
            }
        }
    };
    consider(start, &mut best, &mut lo, &mut hi);
    // Rightward: a segment whose diagonal range starts above `up + sqrt(2 best)`
    // cannot improve, and the bound only grows.
    let mut j = start + 1;
    while j < ns {
        let gap = (bu[j] - up).max(0.0);
        if gap * gap / 2.0 > best {
            break;
        }
        consider(j, &mut best, &mut lo, &mut hi);
        j += 1;
    }
    let mut j = start;
    while j > 0 {
        j -= 1;
        let gap = (up - bu[j + 1]).max(0.0);
        if gap * gap / 2.0 > best {
            break;
        }
        consider(j, &mut best, &mut lo, &mut hi);
    }
    (best.sqrt(), lo, hi)
}

#[derive(Clone, Copy)]
struct Quad {
    a: f64,
    b: f64,
    c: f64,
}

/// Pieces of t -> dist^2(S(t), T) for S(t) = p + t (q - p), t in [0, 1],
/// as (interval, quadratic) triples covering [0, 1].
fn seg_dist2_pieces(p: Point, q: Point, t_seg: (Point, Point)) -> Vec<(f64, f64, Quad)> {
    let d = q.sub(p);
    let (t0, t1) = t_seg;
    let e = t1.sub(t0);
    let l2 = e.dot(e);
    let quad_to_point = |v: Point| -> Quad {
        let w = p.sub(v);
        Quad {
            a: d.dot(d),
            b: 2.0 * w.dot(d),
            c: w.dot(w),
        }
    };
    if l2 == 0.0 {
        return vec![(0.0, 1.0, quad_to_point(t0))];
    }
    // tau(t) = projection parameter of S(t) on T: c0 + c1 t.
    let w0 = p.sub(t0);
    let c0 = w0.dot(e) / l2;
    let c1 = d.dot(e) / l2;
    let perp = {
        let a = d.dot(d) - (d.dot(e)) * (d.dot(e)) / l2;
        let b = 2.0 * (w0.dot(d) - (w0.dot(e)) * (d.dot(e)) / l2);
        let c = w0.dot(w0) - (w0.dot(e)) * (w0.dot(e)) / l2;
        Quad { a, b, c }
    };
    let mut pieces = Vec::with_capacity(3);
    let mut add = |lo: f64, hi: f64, quad: Quad| {
        let lo = lo.max(0.0);
        let hi = hi.min(1.0);
        if lo < hi {
            pieces.push((lo, hi, quad));
        }
    };
    if c1 == 0.0 {
        let quad = if c0 <= 0.0 {
            quad_to_point(t0)
        } else if c0 >= 1.0 {
            quad_to_point(t1)
        } else {
            perp
        };
        add(0.0, 1.0, quad);
    } else {
        let ta = (0.0 - c0) / c1; // tau = 0
        let tb = (1.0 - c0) / c1; // tau = 1
        if c1 > 0.0 {
            add(f64::NEG_INFINITY, ta, quad_to_point(t0));
            add(ta, tb, perp);
            add(tb, f64::INFINITY, quad_to_point(t1));
        } else {
            add(f64::NEG_INFINITY, tb, quad_to_point(t1));
            add(tb, ta, perp);
            add(ta, f64::INFINITY, quad_to_point(t0));
        }
    }
    pieces
}

fn quad_roots_into(q: Quad, lo: f64, hi: f64, out: &mut Vec<f64>) {
    if q.a == 0.0 {
        if q.b != 0.0 {
            let r = -q.c / q.b;
            if r > lo && r < hi {
                out.push(r);
            }
        }
        return;
    }
    let disc = q.b * q.b - 4.0 * q.a * q.c;
    if disc < 0.0 {
        return;
    }
    let sq = disc.sqrt();
    for r in [(-q.b - sq) / (2.0 * q.a), (-q.b + sq) / (2.0 * q.a)] {
        if r > lo && r < hi {
            out.push(r);
        }
    }
}

fn directed_hausdorff(a: &MonotoneGraph, b: &MonotoneGraph) -> f64 {
    let bu: Vec<f64> = b.verts.iter().map(|v| v.x + v.y).collect();
    let nb = b.seg_count();
    let mut best = 0.0f64;
    let mut windows = Vec::with_capacity(a.verts.len());
    for &v in &a.verts {
        let (d, lo, hi) = dist_to_graph(v, b, &bu);
        best = best.max(d);
        windows.push((lo, hi));
    }
    if a.verts.len() < 2 {
        return best;
    }
    let mut cands: Vec<f64> = Vec::new();
    for si in 0..a.verts.len() - 1 {
        let (p, q) = (a.verts[si], a.verts[si + 1]);
        let w_lo = windows[si].0.min(windows[si + 1].0).saturating_sub(1);
        let w_hi = (windows[si].1.max(windows[si + 1].1) + 1).min(nb - 1);
        if w_hi <= w_lo {
            // One active segment: the distance is convex along S, so the
            // supremum sits at the endpoints, already covered.
            continue;
        }
        cands.clear();
        let pieces: Vec<Vec<(f64, f64, Quad)>> = (w_lo..=w_hi)
            .map(|j| seg_dist2_pieces(p, q, b.seg(j)))
            .collect();
        for pc in &pieces {
            for &(lo, hi, _) in pc {
                if lo > 0.0 && lo < 1.0 {
                    cands.push(lo);
                }
                if hi > 0.0 && hi < 1.0 {
                    cands.push(hi);
                }
            }
        }
        for i1 in 0..pieces.len() {
            for i2 in i1 + 1..pieces.len() {
                for &(lo1, hi1, q1) in &pieces[i1] {
                    for &(lo2, hi2, q2) in &pieces[i2] {
                        let lo = lo1.max(lo2);
                        let hi = hi1.min(hi2);
                        if lo >= hi {
                            continue;
                        }
                        let diff = Quad {
                            a: q1.a - q2.a,
                            b: q1.b - q2.b,
                            c: q1.c - q2.c,
                        };
                        quad_roots_into(diff, lo, hi, &mut cands);
                    }
                }
            }
        }
        for &t in cands.iter() {
            let s = pt(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y));
            let (d, _, _) = dist_to_graph(s, b, &bu);
            best = best.max(d);
        }
    }
    best
}

/// Composition `outer ∘ inner` of monotone graphs: all pairs `(x, y)` linked
/// through a middle value, `z1(inner) = z0(outer)`.
///
/// Where a constancy interval of `inner` meets a jump of `outer` at the same
/// middle value, the jump is attached at the left end of the interval: this is
/// the resolution selected by the right-continuous (supremum) trajectory
/// representation, and it makes composition associative.
pub fn compose(outer: &MonotoneGraph, inner: &MonotoneGraph) -> Result<MonotoneGraph> {
    let scale = 1.0 + inner.z1().abs().max(outer.z0().abs());
    if (inner.z1() - outer.z0()).abs() > 1e-9 * scale {
        return Err(Error::DomainMismatch {
            left: inner.z1(),
            right: outer.z0(),
        });
    }
    let g1 = &inner.verts; // (x, middle)
    let g2 = &outer.verts; // (middle, y)
    let mut out: Vec<Point> = Vec::with_capacity(g1.len() + g2.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut cur = pt(g1[0].x, g2[0].y);
    push_normalized(&mut out, cur);
    while i + 1 < g1.len() || j + 1 < g2.len() {
        // Jumps of the outer graph fire first, anchored at the current x.
        if j + 1 < g2.len() && g2[j + 1].x == g2[j].x {
            j += 1;
            cur = pt(cur.x, g2[j].y);
            push_normalized(&mut out, cur);
            continue;
        }
        // Exhausted outer middle axis: remaining inner motion is horizontal.
        if j + 1 == g2.len() {
            i += 1;
            cur = pt(g1[i].x, cur.y);
            push_normalized(&mut out, cur);
            continue;
        }
        if i + 1 < g1.len() && g1[i + 1].y == g1[i].y {
            // Constancy interval of the inner graph: x advances at fixed y.
            i += 1;
            cur = pt(g1[i].x, cur.y);
            push_normalized(&mut out, cur);
            continue;
        }
        if i + 1 == g1.len() {
            // Exhausted inner middle axis: remaining outer motion is a jump.
            j += 1;
            cur = pt(cur.x, g2[j].y);
            push_normalized(&mut out, cur);
            continue;
        }
        // Both strictly advance in the middle: step to the nearer breakpoint.
        let m_next1 = g1[i + 1].y;
        let m_next2 = g2[j + 1].x;
        let m_star = m_next1.min(m_next2);
        let x = if m_star == m_next1 {
            g1[i + 1].x
        } else {
            let (a, b) = (g1[i], g1[i + 1]);
            a.x + (m_star - a.y) * ((b.x - a.x) / (b.y - a.y))
        };
        let y = if m_star == m_next2 {
            g2[j + 1].y
        } else {
            let (a, b) = (g2[j], g2[j + 1]);
            a.y + (m_star - a.x) * ((b.y - a.y) / (b.x - a.x))
        };
        if m_star == m_next1 {
            i += 1;
        }
        if m_star == m_next2 {
            j += 1;
        }
        cur = pt(x, y);
        push_normalized(&mut out, cur);
    }
    MonotoneGraph::new(out)
}

/// Convergence diagnostics for a sequence of graphs against a candidate limit.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    /// |z0_n - z0| per element.
    pub domain_errors: Vec<f64>,
    /// |top_n - top| per element.
    pub top_errors: Vec<f64>,
    /// sup over the supplied mesh of |f_n(x) - f(x)| per element.
    pub mesh_errors: Vec<f64>,
    /// Hausdorff distance per element, reported alongside.
    pub rho: Vec<f64>,
}

/// Check the sequential convergence criterion: domains converge, top values
/// converge, and values converge at the supplied continuity points of the
/// limit. The verdict applies the tolerance to the final element; the error
/// series are reported for decay inspection.
pub fn check_convergence(
    sequence: &[MonotoneGraph],
    limit: &MonotoneGraph,
    mesh: &[f64],
    tol: f64,
) -> ConvergenceReport {
    let mut domain_errors = Vec::with_capacity(sequence.len());
    let mut top_errors = Vec::with_capacity(sequence.len());
    let mut mesh_errors = Vec::with_capacity(sequence.len());
    let mut rho = Vec::with_capacity(sequence.len());
    for g in sequence {
        domain_errors.push((g.z0() - limit.z0()).abs());
        top_errors.push((g.z1() - limit.z1()).abs());
        let mut sup = 0.0f64;
        for &x in mesh {
            let target = limit.value_at(x);
            let got = g.value_at(x);
            sup = match (target, got) {
                (Some(t), Some(v)) => sup.max((t - v).abs()),
                _ => f64::INFINITY,
            };
        }
        mesh_errors.push(sup);
        rho.push(g.rho(limit));
    }
    let converged = match sequence.len() {
        0 => false,
        n => {
            domain_errors[n - 1] <= tol && top_errors[n - 1] <= tol && mesh_errors[n - 1] <= tol
        }
    };
    ConvergenceReport {
        converged,
        domain_errors,
        top_errors,
        mesh_errors,
        rho,
    }
}

/// Random monotone polyline for fuzzing the metric machinery: mixes strict
/// increments with exact vertical and horizontal runs.
pub fn sample_random_graph(rng: &mut impl Rng, max_segments: usize, scale: f64) -> MonotoneGraph {
    let n = rng.gen_range(1..=max_segments);
    let mut pts = vec![pt(0.0, 0.0)];
    let (mut x, mut y) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let kind: f64 = rng.gen();
        let (dx, dy) = if kind < 0.25 {
            (0.0, rng.gen::<f64>() * scale)
        } else if kind < 0.5 {
            (rng.gen::<f64>() * scale, 0.0)
        } else {
            (rng.gen::<f64>() * scale, rng.gen::<f64>() * scale)
        };
        x += dx;
        y += dy;
        pts.push(pt(x, y));
    }
    MonotoneGraph::new(pts).unwrap()
}
