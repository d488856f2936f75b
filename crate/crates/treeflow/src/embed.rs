//! Planar embedding of a generation chain as a flow of monotone graphs.
//!
//! Vertex `i` of generation `m` sits at `(m, i-1)`. Parent-child edges cross
//! each strip between consecutive columns; childless vertices emit auxiliary
//! segments (to the last child of their predecessors, or along the bottom
//! line for a childless first vertex) so that the strip decomposes into
//! trapezoid cells whose vertical sides have length at most 1. Inside a cell
//! the flow interpolates bilinearly between the two vertical sides; at integer
//! times the one-sided limits produce the exact vertical (branching funnels)
//! and horizontal (merging funnels) segments. Graphs over longer spans are
//! compositions of per-strip graphs, and the whole family is rescaled
//! diffusively by `1/(mu n)` in both coordinates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{compose, pt, MonotoneGraph, Point};
use crate::tree::GenerationChain;

/// Classification of a strip-crossing segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SegmentKind {
    /// Parent-child edge of the tree.
    Regular,
    /// Childless non-first vertex to the last child of its predecessors.
    TypeI,
    /// Childless first vertex along the bottom line.
    TypeII,
}

/// A segment crossing the strip between columns `m` and `m+1`, stored by its
/// heights on the two columns.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CrossSegment {
    pub left: f64,
    pub right: f64,
    pub kind: SegmentKind,
}

#[derive(Debug, Clone)]
struct Strip {
    segs: Vec<CrossSegment>,
}

impl Strip {
    fn height(&self, k: usize, s: f64) -> f64 {
        (1.0 - s) * self.segs[k].left + s * self.segs[k].right
    }
}

/// The embedded tree: columns of vertices and the strip segments between them.
#[derive(Debug, Clone)]
pub struct PlanarEmbedding {
    sizes: Vec<usize>,
    strips: Vec<Strip>,
}

/// Corner heights of one trapezoid cell between columns `m` and `m+1`:
/// `(left_low, left_high, right_low, right_high)`.
pub type CellCorners = (f64, f64, f64, f64);

/// Embed a sampled chain in the plane.
pub fn embed(chain: &GenerationChain) -> PlanarEmbedding {
    let sizes = chain.sizes();
    let mut strips = Vec::with_capacity(chain.len().saturating_sub(1));
    for m in 0..chain.len().saturating_sub(1) {
        let prev_size = sizes[m];
        let counts = chain.generations()[m + 1].child_counts(prev_size);
        let mut segs = Vec::new();
        let mut placed = 0usize; // children of vertices 1..=v placed so far
        for (v, &c) in counts.iter().enumerate() {
            let left = v as f64;
            if c == 0 {
                let (target, kind) = if v == 0 {
                    (0usize, SegmentKind::TypeII)
                } else {
                    (placed.saturating_sub(1), SegmentKind::TypeI)
                };
                segs.push(CrossSegment {
                    left,
                    right: target as f64,
                    kind,
                });
            } else {
                for child in placed..placed + c {
                    segs.push(CrossSegment {
                        left,
                        right: child as f64,
                        kind: SegmentKind::Regular,
                    });
                }
                placed += c;
            }
        }
        debug_assert_eq!(placed, sizes[m + 1]);
        strips.push(Strip { segs });
    }
    PlanarEmbedding { sizes, strips }
}

impl PlanarEmbedding {
    /// Number of whole-generation steps covered.
    pub fn n_steps(&self) -> usize {
        self.strips.len()
    }

    /// Column sizes `X_m`.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Strip-crossing segments between columns `m` and `m+1`.
    pub fn segments(&self, m: usize) -> &[CrossSegment] {
        &self.strips[m].segs
    }

    /// Trapezoid cells of strip `m` as corner heights.
    pub fn cells(&self, m: usize) -> Vec<CellCorners> {
        self.strips[m]
            .segs
            .windows(2)
            .map(|w| (w[0].left, w[1].left, w[0].right, w[1].right))
            .collect()
    }

    /// Height of the population cross-section at continuous time `t`
    /// (`X_m - 1` at integer columns, linear in between).
    pub fn cross_section(&self, t: f64) -> Result<f64> {
        let t_max = self.n_steps() as f64;
        if !(0.0..=t_max).contains(&t) {
            return Err(Error::OutOfRange(format!("t = {t} outside [0, {t_max}]")));
        }
        if self.strips.is_empty() || t == t_max {
            return Ok(*self.sizes.last().unwrap() as f64 - 1.0);
        }
        let m = t.floor() as usize;
        let s = t - m as f64;
        Ok((1.0 - s) * (self.sizes[m] as f64 - 1.0) + s * (self.sizes[m + 1] as f64 - 1.0))
    }

    fn strip_graph(&self, m: usize, s0: f64, s1: f64) -> MonotoneGraph {
        let strip = &self.strips[m];
        let verts: Vec<Point> = (0..strip.segs.len())
            .map(|k| pt(strip.height(k, s0), strip.height(k, s1)))
            .collect();
        MonotoneGraph::new(verts).expect("strip heights are monotone by construction")
    }

    /// The monotone graph of the flow between times `t0 <= t1`, exact as a
    /// polyline: per-strip interpolation composed across integer columns.
    pub fn flow_graph(&self, t0: f64, t1: f64) -> Result<MonotoneGraph> {
        let t_max = self.n_steps() as f64;
        if !(0.0 <= t0 && t0 <= t1 && t1 <= t_max) {
            return Err(Error::OutOfRange(format!(
                "need 0 <= t0 <= t1 <= {t_max}, got ({t0}, {t1})"
            )));
        }
        if t0 == t1 {
            return Ok(MonotoneGraph::identity(self.cross_section(t0)?));
        }
        let mut m = t0.floor() as usize;
        let mut acc: Option<MonotoneGraph> = None;
        loop {
            let s0 = t0.max(m as f64) - m as f64;
            let s1 = t1.min((m + 1) as f64) - m as f64;
            let piece = self.strip_graph(m, s0, s1);
            acc = Some(match acc {
                None => piece,
                Some(prev) => compose(&piece, &prev)?,
            });
            if t1 <= (m + 1) as f64 {
                break;
            }
            m += 1;
        }
        Ok(acc.unwrap())
    }

    /// Advance a position through strip `m` from in-strip time `s0` to `s1`,
    /// taking the supremum branch through degenerate corners (the
    /// right-continuous selection).
    fn strip_step(&self, m: usize, s0: f64, s1: f64, pos: f64) -> f64 {
        let strip = &self.strips[m];
        let n = strip.segs.len();
        let (mut lo, mut hi) = (0usize, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if strip.height(mid, s0) <= pos {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let k = lo.saturating_sub(1);
        if k + 1 >= n {
            return strip.height(n - 1, s1);
        }
        let bottom = strip.height(k, s0);
        let top = strip.height(k + 1, s0);
        if top <= bottom {
            return strip.height(k + 1, s1);
        }
        let alpha = (pos - bottom) / (top - bottom);
        strip.height(k, s1) + alpha * (strip.height(k + 1, s1) - strip.height(k, s1))
    }

    /// Trajectory of the point starting at height `x` at time `t0`, sampled
    /// at the given nondecreasing times. `x` may overshoot the domain by a
    /// few ulps (rescaling round-trips); genuine violations are errors.
    pub fn trajectory(&self, x: f64, t0: f64, times: &[f64]) -> Result<Vec<f64>> {
        let z = self.cross_section(t0)?;
        let slack = 1e-9 * (1.0 + z);
        if !(-slack..=z + slack).contains(&x) {
            return Err(Error::OutOfDomain(format!("x = {x} outside [0, {z}] at t0 = {t0}")));
        }
        let x = x.clamp(0.0, z);
        let t_max = self.n_steps() as f64;
        let mut out = Vec::with_capacity(times.len());
        let mut pos = x;
        let mut tau = t0;
        for &t in times {
            if t < tau || t > t_max {
                return Err(Error::OutOfRange(format!(
                    "trajectory times must be nondecreasing within [{t0}, {t_max}]"
                )));
            }
            while tau < t {
                let m = (tau.floor() as usize).min(self.n_steps() - 1);
                let s0 = tau - m as f64;
                let t_next = t.min((m + 1) as f64);
                pos = self.strip_step(m, s0, t_next - m as f64, pos);
                tau = t_next;
            }
            out.push(pos);
        }
        Ok(out)
    }
}

/// A two-parameter family of monotone graphs with a profile and a canonical
/// trajectory selection. Implemented by the rescaled tree embedding and by
/// the sheet-flow solution, so metric diagnostics apply to both.
pub trait MonotoneFlowField {
    /// Largest admissible time.
    fn horizon(&self) -> f64;
    /// Domain height `Z(t)`.
    fn profile(&self, t: f64) -> Result<f64>;
    /// The monotone graph between two times.
    fn graph(&self, t0: f64, t1: f64) -> Result<MonotoneGraph>;
    /// Right-continuous trajectory from `(x, t0)` sampled at `times`.
    fn trajectory(&self, x: f64, t0: f64, times: &[f64]) -> Result<Vec<f64>>;
}

/// The tree flow rescaled by `1/(mu n)` in both coordinates, with time sped
/// up by `n`.
pub struct RescaledFlow {
    emb: PlanarEmbedding,
    n: usize,
    mu: f64,
}

impl RescaledFlow {
    pub fn new(emb: PlanarEmbedding, n: usize, mu: f64) -> Result<Self> {
        if n == 0 || !(mu > 0.0) {
            return Err(Error::Config(format!("need n >= 1 and mu > 0, got n={n}, mu={mu}")));
        }
        Ok(Self { emb, n, mu })
    }

    pub fn embedding(&self) -> &PlanarEmbedding {
        &self.emb
    }

    /// Coordinate scale `1 / (mu n)`.
    pub fn scale(&self) -> f64 {
        1.0 / (self.mu * self.n as f64)
    }

    fn unscale_time(&self, t: f64) -> f64 {
        t * self.n as f64
    }
}

impl MonotoneFlowField for RescaledFlow {
    fn horizon(&self) -> f64 {
        self.emb.n_steps() as f64 / self.n as f64
    }

    fn profile(&self, t: f64) -> Result<f64> {
        Ok(self.emb.cross_section(self.unscale_time(t))? * self.scale())
    }

    fn graph(&self, t0: f64, t1: f64) -> Result<MonotoneGraph> {
        Ok(self
            .emb
            .flow_graph(self.unscale_time(t0), self.unscale_time(t1))?
            .scaled(self.scale()))
    }

    fn trajectory(&self, x: f64, t0: f64, times: &[f64]) -> Result<Vec<f64>> {
        let raw_times: Vec<f64> = times.iter().map(|&t| self.unscale_time(t)).collect();
        let raw = self
            .emb
            .trajectory(x / self.scale(), self.unscale_time(t0), &raw_times)?;
        Ok(raw.into_iter().map(|v| v * self.scale()).collect())
    }
}

/// Locally uniform distance between two flows, evaluated on a finite time
/// mesh: for each integer horizon `m <= t_max` the supremum of the graph
/// distance over mesh pairs within `[0, m]`, folded with weights `2^-m`.
/// A mesh evaluation is a lower bound for the true supremum, and refining
/// the mesh never decreases it.
pub fn lu_distance<A: MonotoneFlowField, B: MonotoneFlowField>(
    a: &A,
    b: &B,
    t_max: f64,
    mesh: &[f64],
) -> Result<f64> {
    if t_max < 1.0 {
        return Err(Error::OutOfRange("lu distance needs a horizon of at least 1".into()));
    }
    let mut d = 0.0;
    for m in 1..=t_max.floor() as usize {
        let horizon = m as f64;
        let mut sup = 0.0f64;
        for (i, &t0) in mesh.iter().enumerate() {
            if t0 > horizon {
                continue;
            }
            for &t1 in &mesh[i..] {
                if t1 > horizon || t1 < t0 {
                    continue;
                }
                let ga = a.graph(t0, t1)?;
                let gb = b.graph(t0, t1)?;
                sup = sup.max(ga.rho(&gb));
            }
        }
        d += 2.0f64.powi(-(m as i32)) * sup.min(1.0);
    }
    Ok(d)
}

/// One row of the foliation export: a tracked subpopulation boundary.
#[derive(Debug, Clone, Serialize)]
pub struct FoliationRow {
    pub replica: u64,
    pub t: f64,
    pub trajectory_id: String,
    pub x0: f64,
    pub value: f64,
}

/// Cut the population every `every_k` generations into about `parts` equal
/// parts and emit the rescaled progeny-boundary trajectories at integer
/// times, reproducing the stochastic-foliation picture of a large tree.
pub fn foliation_rows(
    flow: &RescaledFlow,
    every_k: usize,
    parts: usize,
    replica: u64,
) -> Result<Vec<FoliationRow>> {
    if every_k == 0 || parts == 0 {
        return Err(Error::Config("foliation cadence and parts must be positive".into()));
    }
    let steps = flow.emb.n_steps();
    let scale = flow.scale();
    let n = flow.n as f64;
    let mut rows = Vec::new();
    for origin in (0..steps).step_by(every_k) {
        let x_m = flow.emb.sizes()[origin];
        let mut cuts: Vec<usize> = (1..=parts)
            .map(|i| ((i * x_m) as f64 / parts as f64).ceil() as usize)
            .filter(|&c| (1..=x_m).contains(&c))
            .collect();
        cuts.dedup();
        let t0 = origin as f64 / n;
        let times: Vec<f64> = (origin..=steps).map(|j| j as f64 / n).collect();
        for &cut in &cuts {
            let x0 = (cut as f64 - 1.0) * scale;
            let path = flow.trajectory(x0, t0, &times)?;
            let id = format!("g{origin}c{cut}");
            for (t, v) in times.iter().zip(path) {
                rows.push(FoliationRow {
                    replica,
                    t: *t,
                    trajectory_id: id.clone(),
                    x0,
                    value: v,
                });
            }
        }
    }
    Ok(rows)
}
