//! The verification battery connecting the discrete and continuum halves:
//! exact enumeration identities of the generation kernel, martingale checks,
//! Hölder/tightness estimators, and the two-sample comparisons between
//! rescaled trees, limit diffusions, and the sheet flow.

use rayon::prelude::*;
use serde::Serialize;

use crate::embed::MonotoneFlowField;
use crate::enumerate::for_each_tuple;
use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;
use crate::sde::{simulate_u_at, DiffusionConfig};
use crate::spde::{solve_flow, BrownianSheet, SheetConfig};
use crate::stats::{ks_two_sample, KsReport};
use crate::stream::derive_stream;
use crate::tree::{sample_next, step_group_counts, Generation};

/// Exact conditional expectations of one kernel step, by exhaustive
/// enumeration, next to their closed forms.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityRow {
    pub k: usize,
    pub l: usize,
    /// E[X' | X = k], enumerated.
    pub mean_next_size: f64,
    /// E[V' | V = l, X = k], enumerated.
    pub mean_next_progeny: f64,
    /// E[V'/X' | V = l, X = k], enumerated.
    pub mean_progeny_share: f64,
    /// E[(V' - l)^2 | V = l, X = k], enumerated.
    pub second_moment_increment: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
    /// max over rows of |E[X'|k] - (k + mu)|.
    pub max_residual_size_mean: f64,
    /// max over rows of |E[V'|l,k] - l (1 + mu/k)|.
    pub max_residual_progeny_mean: f64,
    /// max over rows of |E[V'/X'|l,k] - l/k|.
    pub max_residual_share_martingale: f64,
    /// max over rows of |E[V'/X'|l,k] - (l/k - p_0^k / k)|.
    pub max_residual_share_with_extinction_term: f64,
    /// max over rows of |E[(V'-l)^2|l,k] - (l mu + (l/k) c3)| with
    /// c3 = sum (i-1)^3 p_i.
    pub max_residual_second_moment: f64,
}

/// Enumerate every child-count tuple for populations up to `k_max` and check
/// the one-step conditional expectations against their closed forms. The
/// tuple count is `(D+1)^k`; `max_tuples` guards the budget.
pub fn check_enumeration_identities(
    dist: &OffspringDistribution,
    k_max: usize,
    max_tuples: u64,
) -> Result<IdentityReport> {
    let d = dist.max_children();
    let mut rows = Vec::new();
    for k in 1..=k_max {
        let tuples = ((d + 1) as u64).checked_pow(k as u32).unwrap_or(u64::MAX);
        if tuples > max_tuples {
            return Err(Error::BudgetExceeded(format!(
                "(D+1)^k = {tuples} tuples at k = {k}, budget {max_tuples}"
            )));
        }
        // Accumulate for every prefix length l at once.
        let mut e_size = 0.0;
        let mut e_progeny = vec![0.0; k + 1];
        let mut e_share = vec![0.0; k + 1];
        let mut e_sq = vec![0.0; k + 1];
        for_each_tuple(k, d, |tuple| {
            let total: usize = tuple.iter().sum();
            if total == 0 {
                return;
            }
            let mut weight = total as f64 / k as f64;
            for &c in tuple {
                weight *= dist.p[c];
            }
            e_size += weight * total as f64;
            let mut prefix = 0usize;
            for l in 1..=k {
                prefix += tuple[l - 1];
                e_progeny[l] += weight * prefix as f64;
                e_share[l] += weight * prefix as f64 / total as f64;
                let delta = prefix as f64 - l as f64;
                e_sq[l] += weight * delta * delta;
            }
        });
        for l in 1..=k {
            rows.push(IdentityRow {
                k,
                l,
                mean_next_size: e_size,
                mean_next_progeny: e_progeny[l],
                mean_progeny_share: e_share[l],
                second_moment_increment: e_sq[l],
            });
        }
    }
    let mu = dist.mu;
    let p0 = dist.p[0];
    let c3 = dist.centered_moment(3);
    let mut report = IdentityReport {
        rows,
        max_residual_size_mean: 0.0,
        max_residual_progeny_mean: 0.0,
        max_residual_share_martingale: 0.0,
        max_residual_share_with_extinction_term: 0.0,
        max_residual_second_moment: 0.0,
    };
    for row in &report.rows.clone() {
        let (k, l) = (row.k as f64, row.l as f64);
        report.max_residual_size_mean = report
            .max_residual_size_mean
            .max((row.mean_next_size - (k + mu)).abs());
        report.max_residual_progeny_mean = report
            .max_residual_progeny_mean
            .max((row.mean_next_progeny - l * (1.0 + mu / k)).abs());
        report.max_residual_share_martingale = report
            .max_residual_share_martingale
            .max((row.mean_progeny_share - l / k).abs());
        report.max_residual_share_with_extinction_term = report
            .max_residual_share_with_extinction_term
            .max((row.mean_progeny_share - (l / k - p0.powi(row.k as i32) / k)).abs());
        report.max_residual_second_moment = report
            .max_residual_second_moment
            .max((row.second_moment_increment - (l * mu + l / k * c3)).abs());
    }
    Ok(report)
}

/// Largest ratio `E[(V'-l)^r | l,k] / l^{r/2}` over `1 <= l <= k <= k_max`;
/// a finite, k-stable value witnesses the one-step moment bound.
pub fn fitted_moment_constant(
    dist: &OffspringDistribution,
    r: u32,
    k_max: usize,
    max_tuples: u64,
) -> Result<f64> {
    let d = dist.max_children();
    let mut worst = 0.0f64;
    for k in 1..=k_max {
        let tuples = ((d + 1) as u64).checked_pow(k as u32).unwrap_or(u64::MAX);
        if tuples > max_tuples {
            return Err(Error::BudgetExceeded(format!(
                "(D+1)^k = {tuples} tuples at k = {k}, budget {max_tuples}"
            )));
        }
        let mut e_r = vec![0.0f64; k + 1];
        for_each_tuple(k, d, |tuple| {
            let total: usize = tuple.iter().sum();
            if total == 0 {
                return;
            }
            let mut weight = total as f64 / k as f64;
            for &c in tuple {
                weight *= dist.p[c];
            }
            let mut prefix = 0usize;
            for l in 1..=k {
                prefix += tuple[l - 1];
                let delta = prefix as f64 - l as f64;
                e_r[l] += weight * delta.powi(r as i32);
            }
        });
        for (l, er) in e_r.iter().enumerate().skip(1) {
            worst = worst.max(er / (l as f64).powf(r as f64 / 2.0));
        }
    }
    Ok(worst)
}

/// Empirical one-step drift of the generation-size chain at each step.
#[derive(Debug, Clone, Serialize)]
pub struct SubmartingaleReport {
    /// Per step: (mean increment, standard error).
    pub increments: Vec<(f64, f64)>,
    pub mu: f64,
}

pub fn submartingale_check(
    dist: &OffspringDistribution,
    initial_size: usize,
    n_steps: usize,
    replicas: usize,
    seed: u64,
) -> Result<SubmartingaleReport> {
    let per_replica: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_stream(seed, "submartingale", r);
            let mut g = Generation::initial(initial_size).unwrap();
            let mut incs = Vec::with_capacity(n_steps);
            for _ in 0..n_steps {
                let next = sample_next(&g, dist, &mut rng);
                incs.push(next.len() as f64 - g.len() as f64);
                g = next;
            }
            incs
        })
        .collect();
    let mut increments = Vec::with_capacity(n_steps);
    for m in 0..n_steps {
        let xs: Vec<f64> = per_replica.iter().map(|v| v[m]).collect();
        increments.push((crate::stats::mean(&xs), crate::stats::standard_error(&xs)));
    }
    Ok(SubmartingaleReport {
        increments,
        mu: dist.mu,
    })
}

// ---------------------------------------------------------------------------
// Hölder / tightness battery.
// ---------------------------------------------------------------------------

/// Empirical Hölder data of a flow on the dyadic grid
/// `R_m = {(k 2^-m, j 2^-m): 0 <= k <= 2^m, 0 <= j <= 2^{m(1+alpha)}}`
/// intersected with the flow's domain.
#[derive(Debug, Clone, Serialize)]
pub struct HolderReport {
    pub m: u32,
    pub beta: f64,
    pub alpha: f64,
    /// Grid points that fell inside the domain.
    pub points: usize,
    /// Supremum over the grid of the per-trajectory Hölder constants.
    pub sup_trajectory: f64,
    /// Hölder constant of the profile path.
    pub profile_holder: f64,
    /// Supremum of the profile.
    pub profile_sup: f64,
}

fn holder_constant(values: &[f64], dt: f64, beta: f64) -> f64 {
    let mut h = 0.0f64;
    let mut gap = 1usize;
    while gap < values.len() {
        let denom = (gap as f64 * dt).powf(beta);
        for i in 0..values.len() - gap {
            h = h.max((values[i + gap] - values[i]).abs() / denom);
        }
        gap *= 2;
    }
    h
}

/// Estimate Hölder constants of trajectories emitted from the dyadic grid.
/// Trajectories are sampled on `samples` equispaced times between their start
/// and the flow horizon; Hölder ratios are taken over dyadic spans of that
/// mesh.
pub fn estimate_holder<F: MonotoneFlowField>(
    flow: &F,
    m: u32,
    beta: f64,
    alpha: f64,
    samples: usize,
) -> Result<HolderReport> {
    let horizon = flow.horizon();
    let mut sup_trajectory = 0.0f64;
    let mut points = 0usize;
    let t_count = 1usize << m;
    let x_count = 2.0f64.powf(m as f64 * (1.0 + alpha)).floor() as usize;
    for k in 0..=t_count {
        let t0 = horizon.min(k as f64 * 2.0f64.powi(-(m as i32)));
        let z = flow.profile(t0)?;
        if horizon - t0 < 16.0 * f64::EPSILON {
            continue;
        }
        let times: Vec<f64> = (0..samples)
            .map(|i| t0 + (horizon - t0) * i as f64 / (samples - 1) as f64)
            .collect();
        let dt = (horizon - t0) / (samples - 1) as f64;
        for j in 0..=x_count {
            let x = j as f64 * 2.0f64.powi(-(m as i32));
            if x >= z {
                break;
            }
            let path = flow.trajectory(x, t0, &times)?;
            sup_trajectory = sup_trajectory.max(holder_constant(&path, dt, beta));
            points += 1;
        }
    }
    let z_times: Vec<f64> = (0..samples)
        .map(|i| horizon * i as f64 / (samples - 1) as f64)
        .collect();
    let z_path: Vec<f64> = z_times
        .iter()
        .map(|&t| flow.profile(t))
        .collect::<Result<_>>()?;
    Ok(HolderReport {
        m,
        beta,
        alpha,
        points,
        sup_trajectory,
        profile_holder: holder_constant(&z_path, horizon / (samples - 1) as f64, beta),
        profile_sup: z_path.iter().cloned().fold(0.0, f64::max),
    })
}

/// Least-squares fit of `log2 sup_m = log2 b + gamma m`; returns `(b, gamma)`.
pub fn fit_envelope(reports: &[HolderReport]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = reports
        .iter()
        .filter(|r| r.sup_trajectory > 0.0)
        .map(|r| (r.m as f64, r.sup_trajectory.log2()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let gamma = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - gamma * sx) / n;
    (intercept.exp2(), gamma)
}

// ---------------------------------------------------------------------------
// Q-growth along the realized profile.
// ---------------------------------------------------------------------------

/// Residual series of the jump-mass growth relation along one solved flow.
#[derive(Debug, Clone, Serialize)]
pub struct QGrowthReport {
    /// (t, residual, martingale-corrected residual), both relative to the
    /// running integral of the profile.
    pub rows: Vec<(f64, f64, f64)>,
}

/// Check `Q(t) = 2 int Q/Z ds + int Z ds` along a solved flow.
///
/// The plain residual uses the resolved jump mass (neighbor gaps above the
/// grid threshold) and measures how well the growth relation holds without
/// the martingale fluctuation of `Q`. The corrected residual works with the
/// full partition sum and adds back the realized martingale term and the
/// realized quadratic variation of the band increments accumulated during
/// integration, so it isolates pure scheme error.
pub fn q_growth_check(
    solution: &crate::spde::SheetFlowSolution,
    t_grid: &[f64],
) -> Result<QGrowthReport> {
    let steps = solution.n_steps();
    let dt = solution.dt;
    let q0 = solution.partition_q(0);
    // Prefix integrals on the step grid.
    let mut int_q_over_z = vec![0.0];
    let mut int_qfull_over_z = vec![0.0];
    let mut int_z = vec![0.0];
    for step in 0..steps {
        let row = solution.levels_at_step(step);
        let z = *row.last().unwrap();
        let q = solution.shock_q(step);
        let qf = solution.partition_q(step);
        let inv_z = if z > 0.0 { 1.0 / z } else { 0.0 };
        int_q_over_z.push(int_q_over_z.last().unwrap() + q * inv_z * dt);
        int_qfull_over_z.push(int_qfull_over_z.last().unwrap() + qf * inv_z * dt);
        int_z.push(int_z.last().unwrap() + z * dt);
    }
    let (mart, band_qv) = solution.ito_terms();
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let idx = ((t - solution.t0) / dt).round() as usize;
        if t < solution.t0 || idx > steps {
            return Err(Error::OutOfRange(format!("t = {t} outside the solved span")));
        }
        let denom = int_z[idx].max(f64::MIN_POSITIVE);
        let residual = if idx == 0 {
            0.0
        } else {
            (solution.shock_q(idx) - 2.0 * int_q_over_z[idx] - int_z[idx]).abs() / denom
        };
        let corrected = if idx == 0 {
            0.0
        } else {
            (solution.partition_q(idx) - q0 - 2.0 * int_qfull_over_z[idx] - mart[idx]
                - band_qv[idx])
                .abs()
                / denom
        };
        rows.push((t, residual, corrected));
    }
    Ok(QGrowthReport { rows })
}

// ---------------------------------------------------------------------------
// Distributional comparisons.
// ---------------------------------------------------------------------------

fn dyadic_depth_for(cuts: &[f64], z: f64) -> Result<u32> {
    'depth: for depth in 0..=12u32 {
        let n = (1usize << depth) as f64;
        for &c in cuts {
            let j = c / z * n;
            if (j - j.round()).abs() > 1e-9 {
                continue 'depth;
            }
        }
        return Ok(depth);
    }
    Err(Error::Config(
        "partition cuts must be dyadic fractions of z (depth <= 12)".into(),
    ))
}

fn validate_cuts(cuts: &[f64], z: f64) -> Result<()> {
    if cuts.is_empty()
        || cuts.windows(2).any(|w| w[1] <= w[0])
        || cuts[0] <= 0.0
        || (cuts.last().unwrap() - z).abs() > 1e-12
    {
        return Err(Error::InvalidCuts(format!(
            "cuts must be strictly increasing in (0, z] and end at z = {z}"
        )));
    }
    Ok(())
}

/// Monte Carlo marginals `U(x_k, 0, t)` of the sheet flow from `z`, per cut
/// and per query time: `samples[k][ti][replica]`.
pub fn spde_marginals(
    cuts: &[f64],
    z: f64,
    t_list: &[f64],
    replicas: usize,
    dt: f64,
    dy: f64,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    validate_cuts(cuts, z)?;
    let depth = dyadic_depth_for(cuts, z)?;
    let t_max = t_list.iter().cloned().fold(0.0, f64::max);
    let n_grid = 1usize << depth;
    let cut_idx: Vec<usize> = cuts.iter().map(|&c| (c / z * n_grid as f64).round() as usize).collect();
    let sheet_cfg = SheetConfig::new(dt, dy)?;
    let per_replica: Vec<Vec<Vec<f64>>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let sheet_seed = crate::stream::derive_seed(seed, "sheet-replica", r);
            let mut sheet = BrownianSheet::new(sheet_cfg, sheet_seed);
            let sol = solve_flow(&mut sheet, z, 0.0, t_max, depth)?;
            Ok(t_list
                .iter()
                .map(|&t| {
                    let step = ((t / dt).round() as usize).min(sol.n_steps());
                    let row = sol.levels_at_step(step);
                    cut_idx.iter().map(|&j| row[j]).collect::<Vec<f64>>()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    // Reshape to samples[k][ti][replica].
    let mut out = vec![vec![vec![0.0; replicas]; t_list.len()]; cuts.len()];
    for (r, rep) in per_replica.iter().enumerate() {
        for (ti, row) in rep.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                out[k][ti][r] = v;
            }
        }
    }
    Ok(out)
}

/// Monte Carlo marginals of the cumulative limit system from the same cuts:
/// `samples[k][ti][replica]`. Replicas whose discretization collapses to
/// total extinction (a flagged artifact of the explicit scheme, rate well
/// below a percent at the default step) are dropped.
pub fn sde_marginals(
    cuts: &[f64],
    z: f64,
    t_list: &[f64],
    replicas: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    validate_cuts(cuts, z)?;
    let t_max = t_list.iter().cloned().fold(0.0, f64::max);
    let config = DiffusionConfig::new(dt, t_max)?;
    let steps: Vec<usize> = t_list.iter().map(|&t| config.step_of(t)).collect();
    let per_replica: Vec<Option<Vec<Vec<f64>>>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_stream(seed, "sde-marginal", r);
            match simulate_u_at(cuts, &config, &steps, &mut rng) {
                Ok(rows) => Ok(Some(rows)),
                Err(Error::DegenerateRun { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let kept: Vec<&Vec<Vec<f64>>> = per_replica.iter().flatten().collect();
    if kept.len() < replicas - replicas / 50 {
        return Err(Error::Config(format!(
            "degenerate-run rate too high: kept {}/{replicas}; decrease dt",
            kept.len()
        )));
    }
    let mut out = vec![vec![Vec::with_capacity(kept.len()); t_list.len()]; cuts.len()];
    for rep in kept {
        for (ti, row) in rep.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                out[k][ti].push(v);
            }
        }
    }
    Ok(out)
}

/// Monte Carlo marginals of the rescaled tree from initial population
/// `round(mu n z)` split at the cuts: `samples[k][ti][replica]`. Progeny
/// counts are tracked through the group-multinomial fast path.
pub fn tree_marginals(
    dist: &OffspringDistribution,
    n: usize,
    cuts: &[f64],
    z: f64,
    t_list: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    validate_cuts(cuts, z)?;
    let mu = dist.mu;
    let scale = mu * n as f64;
    let boundaries: Vec<u64> = cuts.iter().map(|&c| (scale * c).round() as u64).collect();
    if boundaries[0] == 0 {
        return Err(Error::Config(format!(
            "n = {n} too small to resolve the first cut {}",
            cuts[0]
        )));
    }
    let mut groups0 = Vec::with_capacity(cuts.len());
    let mut prev = 0;
    for &b in &boundaries {
        groups0.push(b - prev);
        prev = b;
    }
    let gen_steps: Vec<usize> = t_list.iter().map(|&t| (t * n as f64).floor() as usize).collect();
    let max_steps = gen_steps.iter().cloned().max().unwrap_or(0);
    let per_replica: Vec<Vec<Vec<f64>>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_stream(seed, "tree-marginal", r);
            let mut groups = groups0.clone();
            let mut snapshots: Vec<Vec<f64>> = vec![Vec::new(); t_list.len()];
            let record = |groups: &[u64], out: &mut Vec<f64>| {
                let mut acc = 0u64;
                for &g in groups {
                    acc += g;
                    out.push(acc as f64 / scale);
                }
            };
            for (ti, &gs) in gen_steps.iter().enumerate() {
                if gs == 0 {
                    record(&groups, &mut snapshots[ti]);
                }
            }
            for step in 1..=max_steps {
                groups = step_group_counts(&groups, dist, &mut rng);
                for (ti, &gs) in gen_steps.iter().enumerate() {
                    if gs == step {
                        record(&groups, &mut snapshots[ti]);
                    }
                }
            }
            snapshots
        })
        .collect();
    let mut out = vec![vec![vec![0.0; replicas]; t_list.len()]; cuts.len()];
    for (r, rep) in per_replica.iter().enumerate() {
        for (ti, row) in rep.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                out[k][ti][r] = v;
            }
        }
    }
    Ok(out)
}

/// One cell of the convergence table: a tree size `n`, a cut, a time, and the
/// KS comparison against the sheet-flow marginal.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceCell {
    pub n: usize,
    pub cut: f64,
    pub t: f64,
    pub ks: KsReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub cells: Vec<ConvergenceCell>,
}

impl ConvergenceTable {
    pub fn cell(&self, n: usize, cut: f64, t: f64) -> Option<&ConvergenceCell> {
        self.cells
            .iter()
            .find(|c| c.n == n && (c.cut - cut).abs() < 1e-12 && (c.t - t).abs() < 1e-12)
    }
}

/// Compare rescaled-tree marginals against sheet-flow marginals for every
/// `n` in `n_list`, cut, and query time.
#[allow(clippy::too_many_arguments)]
pub fn convergence_report(
    dist: &OffspringDistribution,
    n_list: &[usize],
    cuts: &[f64],
    z: f64,
    t_list: &[f64],
    replicas: usize,
    dt: f64,
    dy: f64,
    level: f64,
    seed: u64,
) -> Result<ConvergenceTable> {
    let spde = spde_marginals(cuts, z, t_list, replicas, dt, dy, seed ^ 0x5eed_0001)?;
    let mut cells = Vec::new();
    for &n in n_list {
        let tree = tree_marginals(dist, n, cuts, z, t_list, replicas, seed ^ n as u64)?;
        for (k, &cut) in cuts.iter().enumerate() {
            for (ti, &t) in t_list.iter().enumerate() {
                let name = format!("tree(n={n}) vs flow at x={cut}, t={t}");
                let ks = ks_two_sample(&name, &tree[k][ti], &spde[k][ti], level)?;
                cells.push(ConvergenceCell { n, cut, t, ks });
            }
        }
    }
    Ok(ConvergenceTable { cells })
}
