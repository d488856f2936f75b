//! The Markov chain on generations of the conditioned critical tree.
//!
//! A generation is a nondecreasing parent map `G: {1..|G|} -> {1..|G_prev|}`;
//! a chain of generations encodes a rooted plane tree that never dies. The
//! one-step kernel from a generation of size `k` to a continuation with child
//! counts `(i_1, .., i_k)` has probability `(j/k) p_{i_1} .. p_{i_k}` with
//! `j = i_1 + .. + i_k`, the size-biased tilt of independent critical
//! reproduction. Sampling realizes the tilt with a uniformly chosen spine
//! vertex whose offspring count is drawn size-biased; averaging over the spine
//! reproduces the kernel exactly, and extinction has probability zero.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;

/// One generation: entry `i` (0-based) is the 1-based parent index in the
/// previous generation; the sequence is nondecreasing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Generation {
    parents: Vec<u32>,
}

impl Generation {
    pub fn new(parents: Vec<u32>) -> Result<Self> {
        if parents.is_empty() {
            return Err(Error::InvalidCuts("a generation must contain at least one vertex".into()));
        }
        if parents.contains(&0) || parents.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidCuts("parent indices must be positive and nondecreasing".into()));
        }
        Ok(Self { parents })
    }

    /// The singleton root generation.
    pub fn root() -> Self {
        Self { parents: vec![1] }
    }

    /// An initial generation of `size` vertices, used to start chains from a
    /// macroscopic population.
    pub fn initial(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidCuts("initial generation must be nonempty".into()));
        }
        Ok(Self { parents: vec![1; size] })
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn parents(&self) -> &[u32] {
        &self.parents
    }

    /// 1-based parent of the 1-based vertex `i`.
    pub fn parent(&self, i: usize) -> u32 {
        self.parents[i - 1]
    }

    /// `self` can follow a generation of size `prev_size` iff the largest
    /// parent index fits.
    pub fn continues(&self, prev_size: usize) -> bool {
        *self.parents.last().unwrap() as usize <= prev_size
    }

    /// Per-parent child counts relative to a previous generation of `prev_size`.
    pub fn child_counts(&self, prev_size: usize) -> Vec<usize> {
        let mut counts = vec![0usize; prev_size];
        for &p in &self.parents {
            counts[(p - 1) as usize] += 1;
        }
        counts
    }

    /// Build the continuation with the given per-parent child counts.
    pub fn from_child_counts(counts: &[usize]) -> Result<Self> {
        let mut parents = Vec::with_capacity(counts.iter().sum());
        for (v, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                parents.push((v + 1) as u32);
            }
        }
        Self::new(parents)
    }
}

/// Kernel probability of stepping from a generation of size `prev_size` to the
/// continuation with the given child counts. Zero off the kernel support
/// (empty continuation or a count above the law's maximum).
pub fn transition_probability(
    prev_size: usize,
    child_counts: &[usize],
    dist: &OffspringDistribution,
) -> f64 {
    debug_assert_eq!(child_counts.len(), prev_size);
    let total: usize = child_counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mut prob = total as f64 / prev_size as f64;
    for &c in child_counts {
        if c > dist.max_children() {
            return 0.0;
        }
        prob *= dist.p[c];
    }
    prob
}

/// Kernel probability between explicit generation objects; zero when `next`
/// is not a continuation of `g`.
pub fn transition_probability_between(
    g: &Generation,
    next: &Generation,
    dist: &OffspringDistribution,
) -> f64 {
    if !next.continues(g.len()) {
        return 0.0;
    }
    transition_probability(g.len(), &next.child_counts(g.len()), dist)
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|&x| {
            acc += x;
            acc
        })
        .collect()
}

fn sample_index(cum: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
}

/// Sample the next generation by spine decomposition: a uniform spine vertex
/// reproduces with the size-biased law, all others i.i.d. with the critical
/// law. The spine index is discarded; children are placed in parent order.
pub fn sample_next(g: &Generation, dist: &OffspringDistribution, rng: &mut impl Rng) -> Generation {
    let k = g.len();
    let cum_p = cumulative(&dist.p);
    let cum_sb = cumulative(&dist.size_biased());
    let spine = rng.gen_range(0..k);
    let mut counts = vec![0usize; k];
    for (v, slot) in counts.iter_mut().enumerate() {
        *slot = if v == spine {
            sample_index(&cum_sb, rng)
        } else {
            sample_index(&cum_p, rng)
        };
    }
    Generation::from_child_counts(&counts).expect("spine sampling always yields a continuation")
}

/// A sampled chain of generations starting from a given initial generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationChain {
    generations: Vec<Generation>,
}

impl GenerationChain {
    /// Build a chain from explicit generations, validating the continuation
    /// relation at every step.
    pub fn from_generations(generations: Vec<Generation>) -> Result<Self> {
        if generations.is_empty() {
            return Err(Error::InvalidCuts("a chain needs at least one generation".into()));
        }
        for w in generations.windows(2) {
            if !w[1].continues(w[0].len()) {
                return Err(Error::InvalidCuts(
                    "consecutive generations must satisfy the continuation relation".into(),
                ));
            }
        }
        Ok(Self { generations })
    }

    pub fn generations(&self) -> &[Generation] {
        &self.generations
    }

    /// Generation sizes `X_0, X_1, ..`.
    pub fn sizes(&self) -> Vec<usize> {
        self.generations.iter().map(Generation::len).collect()
    }

    pub fn len(&self) -> usize {
        self.generations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generations.is_empty()
    }

    pub fn size(&self, m: usize) -> usize {
        self.generations[m].len()
    }
}

/// Sample a chain of `n_generations` steps from the root singleton.
pub fn sample_chain(
    dist: &OffspringDistribution,
    n_generations: usize,
    rng: &mut impl Rng,
) -> GenerationChain {
    sample_chain_from(Generation::root(), dist, n_generations, rng)
}

/// Sample a chain of `n_generations` steps from an arbitrary initial generation.
pub fn sample_chain_from(
    initial: Generation,
    dist: &OffspringDistribution,
    n_generations: usize,
    rng: &mut impl Rng,
) -> GenerationChain {
    let mut generations = Vec::with_capacity(n_generations + 1);
    generations.push(initial);
    for _ in 0..n_generations {
        let next = sample_next(generations.last().unwrap(), dist, rng);
        generations.push(next);
    }
    GenerationChain { generations }
}

/// One kernel step on subpopulation counts only.
///
/// `groups` are the sizes of an ordered partition of the current generation
/// (summing to the generation size, which must be positive). Returns the
/// progeny size of each group after one step. The spine vertex lands in group
/// `g` with probability `groups[g] / total`; each group's remaining vertices
/// reproduce through a multinomial composition of child counts, so the cost
/// is `O(groups * D)` instead of `O(population)`. The law of the returned
/// vector matches stepping `sample_next` and counting per-group progeny.
pub fn step_group_counts(
    groups: &[u64],
    dist: &OffspringDistribution,
    rng: &mut impl Rng,
) -> Vec<u64> {
    let total: u64 = groups.iter().sum();
    assert!(total > 0, "population must be positive");
    let u: f64 = rng.gen::<f64>() * total as f64;
    let mut acc = 0.0;
    let mut spine_group = groups.len() - 1;
    for (g, &sz) in groups.iter().enumerate() {
        acc += sz as f64;
        if u < acc {
            spine_group = g;
            break;
        }
    }
    let cum_sb = cumulative(&dist.size_biased());
    let spine_children = sample_index(&cum_sb, rng) as u64;
    groups
        .iter()
        .enumerate()
        .map(|(g, &sz)| {
            let iid = if g == spine_group { sz - 1 } else { sz };
            let mut progeny = multinomial_children(iid, dist, rng);
            if g == spine_group {
                progeny += spine_children;
            }
            progeny
        })
        .collect()
}

/// Total children of `m` i.i.d. critical reproducers, via the multinomial
/// composition over child counts (sequence of binomial draws).
fn multinomial_children(m: u64, dist: &OffspringDistribution, rng: &mut impl Rng) -> u64 {
    let mut remaining = m;
    let mut rem_prob = 1.0f64;
    let mut children = 0u64;
    let d = dist.p.len();
    for i in 0..d {
        if remaining == 0 {
            break;
        }
        if i == d - 1 {
            children += i as u64 * remaining;
            break;
        }
        let q = (dist.p[i] / rem_prob).clamp(0.0, 1.0);
        let ni = if q >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, q).unwrap().sample(rng)
        };
        children += i as u64 * ni;
        remaining -= ni;
        rem_prob = (rem_prob - dist.p[i]).max(f64::MIN_POSITIVE);
    }
    children
}

/// Progeny table of cut subpopulations of one generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProgenyTable {
    /// Index of the origin generation within the chain.
    pub origin: usize,
    /// Strictly increasing 1-based cut indices; the last equals the origin
    /// generation size.
    pub cuts: Vec<usize>,
    /// `u[j][c]` = progeny size in generation `origin + j` of the first
    /// `cuts[c]` vertices of the origin generation.
    pub u: Vec<Vec<u64>>,
}

impl ProgenyTable {
    /// Differences between consecutive cuts at generation offset `j`.
    pub fn v(&self, j: usize) -> Vec<u64> {
        let row = &self.u[j];
        let mut out = Vec::with_capacity(row.len());
        let mut prev = 0;
        for &x in row {
            out.push(x - prev);
            prev = x;
        }
        out
    }
}

/// Track the progeny of the first `cuts[c]` vertices of generation `origin`
/// through the rest of the chain. Descendants of a prefix form a prefix, so a
/// single boundary index per cut suffices.
pub fn track_progeny(chain: &GenerationChain, origin: usize, cuts: &[usize]) -> Result<ProgenyTable> {
    if origin >= chain.len() {
        return Err(Error::InvalidCuts(format!(
            "origin generation {origin} outside chain of length {}",
            chain.len()
        )));
    }
    let x0 = chain.size(origin);
    if cuts.is_empty()
        || cuts.windows(2).any(|w| w[0] >= w[1])
        || cuts[0] == 0
        || *cuts.last().unwrap() != x0
    {
        return Err(Error::InvalidCuts(format!(
            "cuts must be strictly increasing in 1..={x0} and end at {x0}"
        )));
    }
    let mut boundaries: Vec<u64> = cuts.iter().map(|&c| c as u64).collect();
    let mut u = vec![boundaries.clone()];
    for m in origin + 1..chain.len() {
        let gen = &chain.generations()[m];
        for b in boundaries.iter_mut() {
            // Children with parent index <= b stay inside the tracked prefix.
            *b = gen.parents().partition_point(|&p| u64::from(p) <= *b) as u64;
        }
        u.push(boundaries.clone());
    }
    Ok(ProgenyTable {
        origin,
        cuts: cuts.to_vec(),
        u,
    })
}
