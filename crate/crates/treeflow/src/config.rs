//! Run configuration: one TOML file, one master seed, validated before any
//! computation or file output.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::offspring::{solve_gibbs, EnergySpec, OffspringDistribution};

/// Offspring model: either an energy family (solved through the fixed point)
/// or an explicit probability vector. Exactly one of the two must be present.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

impl ModelSection {
    pub fn distribution(&self, tol: f64) -> Result<OffspringDistribution> {
        match (&self.energies, self.beta, &self.probabilities) {
            (Some(energies), Some(beta), None) => {
                solve_gibbs(&EnergySpec::new(energies.clone(), beta), tol)
            }
            (None, None, Some(p)) => OffspringDistribution::from_probabilities(p.clone(), 1e-9),
            _ => Err(Error::Config(
                "model must provide exactly one of (energies + beta) or probabilities".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeSection {
    /// Rescaling index: time is sped up by `n`, coordinates shrink by `mu n`.
    pub n: usize,
    /// Number of generations to sample.
    pub generations: usize,
    /// Partition cuts in `(0, z]` for progeny tracking and comparisons.
    pub cuts: Vec<f64>,
    /// Foliation cadence: split every `foliation_every` generations.
    pub foliation_every: usize,
    /// Foliation parts per split.
    pub foliation_parts: usize,
    /// Initial population for macroscopic starts (0 = single root).
    pub initial_size: usize,
}

impl Default for TreeSection {
    fn default() -> Self {
        Self {
            n: 100,
            generations: 100,
            cuts: vec![0.25, 0.5, 0.75, 1.0],
            foliation_every: 10,
            foliation_parts: 10,
            initial_size: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpdeSection {
    pub dt: f64,
    pub dy: f64,
    pub depth: u32,
    pub t_max: f64,
    pub z0: f64,
}

impl Default for SpdeSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            dy: 1.0 / 128.0,
            depth: 10,
            t_max: 1.0,
            z0: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub replicas: usize,
    pub ks_level: f64,
    /// Largest population for exhaustive kernel enumeration.
    pub k_max: usize,
    /// Tuple budget for exhaustive enumeration.
    pub max_tuples: u64,
    /// Times at which marginals are compared.
    pub t_list: Vec<f64>,
    /// Tree sizes for the convergence table.
    pub n_list: Vec<usize>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            replicas: 10_000,
            ks_level: 0.001,
            k_max: 4,
            max_tuples: 10_000_000,
            t_list: vec![0.25, 0.5],
            n_list: vec![20, 2000],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSection,
    pub tree: TreeSection,
    pub spde: SpdeSection,
    pub diagnostics: DiagnosticsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            model: ModelSection {
                energies: Some(vec![0.0, 0.0, 0.0]),
                beta: Some(1.0),
                probabilities: None,
            },
            tree: TreeSection::default(),
            spde: SpdeSection::default(),
            diagnostics: DiagnosticsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("TOML parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Reject out-of-range values before any computation starts.
    pub fn validate(&self) -> Result<()> {
        self.model.distribution(1e-9)?;
        let t = &self.tree;
        if t.n == 0 {
            return Err(Error::Config("tree.n must be >= 1".into()));
        }
        if !t.cuts.is_empty()
            && (t.cuts.windows(2).any(|w| w[1] <= w[0]) || t.cuts[0] <= 0.0)
        {
            return Err(Error::Config("tree.cuts must be strictly increasing and positive".into()));
        }
        if t.foliation_every == 0 || t.foliation_parts == 0 {
            return Err(Error::Config("foliation cadence and parts must be >= 1".into()));
        }
        let s = &self.spde;
        if !(s.dt > 0.0 && s.dt <= 1.0) || !(s.dy > 0.0 && s.dy <= 1.0) {
            return Err(Error::Config("spde.dt and spde.dy must lie in (0, 1]".into()));
        }
        if s.depth > 16 {
            return Err(Error::Config("spde.depth must be <= 16".into()));
        }
        if !(s.t_max >= 0.0) || !(s.z0 >= 0.0) {
            return Err(Error::Config("spde.t_max and spde.z0 must be nonnegative".into()));
        }
        let d = &self.diagnostics;
        if d.replicas == 0 {
            return Err(Error::Config("diagnostics.replicas must be >= 1".into()));
        }
        if !(d.ks_level > 0.0 && d.ks_level < 1.0) {
            return Err(Error::Config("diagnostics.ks_level must lie in (0, 1)".into()));
        }
        if d.k_max == 0 || d.k_max > 8 {
            return Err(Error::Config("diagnostics.k_max must lie in 1..=8".into()));
        }
        if d.t_list.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::Config("diagnostics.t_list must be nonnegative".into()));
        }
        if d.n_list.contains(&0) {
            return Err(Error::Config("diagnostics.n_list entries must be >= 1".into()));
        }
        Ok(())
    }

    /// Stable hash of the canonical JSON form, recorded in run manifests.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
