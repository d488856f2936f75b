//! Exhaustive enumeration oracles: full kernel support at small sizes, and
//! exact finite-volume tree measures for thermodynamic-limit checks.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::offspring::{solve_gibbs, EnergySpec, OffspringDistribution};
use crate::tree::{transition_probability, Generation};

/// Visit every child-count tuple in `{0..=d}^k` (including the all-zero tuple).
pub fn for_each_tuple(k: usize, d: usize, mut f: impl FnMut(&[usize])) {
    let mut tuple = vec![0usize; k];
    loop {
        f(&tuple);
        let mut pos = 0;
        loop {
            if pos == k {
                return;
            }
            if tuple[pos] < d {
                tuple[pos] += 1;
                break;
            }
            tuple[pos] = 0;
            pos += 1;
        }
    }
}

/// All continuations of `g` with their kernel probabilities.
///
/// The support is every child-count tuple with a positive total; probabilities
/// sum to 1 because the kernel tilts i.i.d. critical reproduction by total
/// offspring over `|g|`. Errors with `BudgetExceeded` when the largest
/// continuation would exceed `max_size`.
pub fn enumerate_continuations(
    g: &Generation,
    dist: &OffspringDistribution,
    max_size: usize,
) -> Result<Vec<(Generation, f64)>> {
    let k = g.len();
    let d = dist.max_children();
    if k * d > max_size {
        return Err(Error::BudgetExceeded(format!(
            "largest continuation has {} vertices, budget is {max_size}",
            k * d
        )));
    }
    let mut out = Vec::new();
    for_each_tuple(k, d, |tuple| {
        if tuple.iter().sum::<usize>() == 0 {
            return;
        }
        let p = transition_probability(k, tuple, dist);
        out.push((Generation::from_child_counts(tuple).unwrap(), p));
    });
    Ok(out)
}

/// Exact depth-truncated marginals of the finite Gibbs tree measure and of the
/// infinite chain, with their total-variation distance.
#[derive(Debug, Clone, Serialize)]
pub struct GibbsMarginalReport {
    pub n_vertices: usize,
    pub depth: usize,
    pub trees_enumerated: u64,
    /// Truncated shapes (preorder child-count sequences) with finite-volume
    /// Gibbs probabilities.
    pub finite_marginal: Vec<(Vec<usize>, f64)>,
    /// The same shapes under the infinite chain's law.
    pub limit_marginal: Vec<(Vec<usize>, f64)>,
    pub total_variation: f64,
}

/// Enumerate all plane trees on `n` vertices with branching bounded by the
/// spec's `D`, weight them by `exp(-beta * energy)`, and push both the finite
/// measure and the limit chain law through depth truncation.
pub fn enumerate_gibbs_marginal(
    spec: &EnergySpec,
    n: usize,
    depth: usize,
    max_trees: u64,
) -> Result<GibbsMarginalReport> {
    if n == 0 {
        return Err(Error::Config("tree must have at least one vertex".into()));
    }
    let d = spec.max_children();
    let dist = solve_gibbs(spec, 1e-12)?;

    let mut finite: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut z_n = 0.0f64;
    let mut trees = 0u64;

    let mut counts = vec![0usize; n];
    // Depth-first over preorder child-count sequences, tracking pending slots.
    // Visiting a vertex consumes one slot and opens `c` new ones.
    #[allow(clippy::too_many_arguments)]
    fn rec(
        pos: usize,
        slots: usize,
        n: usize,
        d: usize,
        spec: &EnergySpec,
        counts: &mut Vec<usize>,
        energy: f64,
        finite: &mut BTreeMap<Vec<usize>, f64>,
        z_n: &mut f64,
        trees: &mut u64,
        max_trees: u64,
        depth: usize,
    ) -> Result<()> {
        if pos == n {
            debug_assert_eq!(slots, 0);
            *trees += 1;
            if *trees > max_trees {
                return Err(Error::BudgetExceeded(format!(
                    "more than {max_trees} trees at n={n}, D={d}"
                )));
            }
            let weight = (-spec.beta * energy).exp();
            *z_n += weight;
            let shape = truncate_shape(counts, depth);
            *finite.entry(shape).or_insert(0.0) += weight;
            return Ok(());
        }
        let remaining_after = n - pos - 1;
        for c in 0..=d {
            let new_slots = slots - 1 + c;
            // Feasibility: enough vertices left to fill every open slot, and
            // the tree may only close when all vertices are used.
            if new_slots > remaining_after {
                continue;
            }
            if new_slots == 0 && remaining_after > 0 {
                continue;
            }
            counts[pos] = c;
            rec(
                pos + 1,
                new_slots,
                n,
                d,
                spec,
                counts,
                energy + spec.energies[c],
                finite,
                z_n,
                trees,
                max_trees,
                depth,
            )?;
        }
        Ok(())
    }
    rec(
        0, 1, n, d, spec, &mut counts, 0.0, &mut finite, &mut z_n, &mut trees, max_trees, depth,
    )?;

    let finite_marginal: Vec<(Vec<usize>, f64)> =
        finite.iter().map(|(s, w)| (s.clone(), w / z_n)).collect();

    let limit_marginal: Vec<(Vec<usize>, f64)> = finite_marginal
        .iter()
        .map(|(shape, _)| (shape.clone(), limit_shape_probability(shape, depth, &dist)))
        .collect();

    let total_variation = 0.5
        * finite_marginal
            .iter()
            .zip(&limit_marginal)
            .map(|((_, a), (_, b))| (a - b).abs())
            .sum::<f64>()
        // Limit mass on shapes the finite measure cannot produce.
        + 0.5 * (1.0 - limit_marginal.iter().map(|(_, b)| b).sum::<f64>());

    Ok(GibbsMarginalReport {
        n_vertices: n,
        depth,
        trees_enumerated: trees,
        finite_marginal,
        limit_marginal,
        total_variation,
    })
}

/// Preorder child counts of the radius-`cut` root neighborhood: vertices above
/// the cut keep their counts, vertices at the cut become leaves, deeper
/// vertices are dropped.
fn truncate_shape(counts: &[usize], cut: usize) -> Vec<usize> {
    let mut shape = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    for (i, &c) in counts.iter().enumerate() {
        if i > 0 {
            *stack.last_mut().unwrap() -= 1;
        }
        let depth = stack.len();
        if depth < cut {
            shape.push(c);
        } else if depth == cut {
            shape.push(0);
        }
        if c > 0 {
            stack.push(c);
        } else {
            while stack.last() == Some(&0) {
                stack.pop();
            }
        }
    }
    shape
}

/// Probability that the infinite chain's first `depth` generations equal the
/// given truncated shape: the product of one-step kernel probabilities. Shapes
/// that die before the cut have probability zero.
fn limit_shape_probability(shape: &[usize], depth: usize, dist: &OffspringDistribution) -> f64 {
    if depth == 0 {
        return 1.0;
    }
    // Recover per-generation child counts from the preorder sequence.
    let mut per_generation: Vec<Vec<usize>> = vec![Vec::new(); depth];
    let mut stack: Vec<usize> = Vec::new();
    for (i, &c) in shape.iter().enumerate() {
        if i > 0 {
            *stack.last_mut().unwrap() -= 1;
        }
        let dep = stack.len();
        if dep < depth {
            per_generation[dep].push(c);
        }
        if c > 0 {
            stack.push(c);
        } else {
            while stack.last() == Some(&0) {
                stack.pop();
            }
        }
    }
    let mut prob = 1.0;
    for counts in per_generation.iter().take(depth) {
        if counts.is_empty() {
            return 0.0; // the shape died before the cut
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        prob *= total as f64 / counts.len() as f64;
        for &c in counts {
            prob *= dist.p[c];
        }
    }
    prob
}
