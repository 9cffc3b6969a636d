//! Run configuration: one TOML file drives every stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strata_core::error::{Error, Result};

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    /// Fixed cluster count; when absent the stability stage's k* is used.
    pub k: Option<usize>,
    #[serde(default = "default_true")]
    pub include_outcome: bool,
    #[serde(default = "defaults::restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub dump_gower: bool,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            k: None,
            include_outcome: true,
            restarts: defaults::restarts(),
            dump_gower: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    #[serde(default = "defaults::k_min")]
    pub k_min: usize,
    #[serde(default = "defaults::k_max")]
    pub k_max: usize,
    #[serde(default = "defaults::stability_replicates")]
    pub replicates: usize,
    #[serde(default = "defaults::restarts")]
    pub restarts_original: usize,
    #[serde(default = "defaults::restarts_bootstrap")]
    pub restarts_bootstrap: usize,
}

impl Default for StabilitySection {
    fn default() -> Self {
        StabilitySection {
            k_min: defaults::k_min(),
            k_max: defaults::k_max(),
            replicates: defaults::stability_replicates(),
            restarts_original: defaults::restarts(),
            restarts_bootstrap: defaults::restarts_bootstrap(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "defaults::grid_size")]
    pub grid_size: usize,
    #[serde(default = "defaults::lambda_min_ratio")]
    pub lambda_min_ratio: f64,
    #[serde(default = "defaults::folds")]
    pub folds: usize,
    #[serde(default = "defaults::repeats")]
    pub repeats: usize,
    #[serde(default = "defaults::heuristic")]
    pub heuristic_max_interactions: Option<usize>,
    /// "deviance" or "misclassification".
    #[serde(default = "defaults::loss")]
    pub loss: String,
    #[serde(default = "defaults::tol")]
    pub tol: f64,
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            grid_size: defaults::grid_size(),
            lambda_min_ratio: defaults::lambda_min_ratio(),
            folds: defaults::folds(),
            repeats: defaults::repeats(),
            heuristic_max_interactions: defaults::heuristic(),
            loss: defaults::loss(),
            tol: defaults::tol(),
            max_iter: defaults::max_iter(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "defaults::bootstrap_replicates")]
    pub replicates: usize,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::cv_repeats")]
    pub cv_repeats: usize,
    #[serde(default = "defaults::inclusion_threshold")]
    pub inclusion_threshold: f64,
    #[serde(default)]
    pub recluster_per_replicate: bool,
    #[serde(default)]
    pub write_replicates: bool,
    /// Grid size inside each replicate's cross-validation; defaults to the
    /// fit section's grid.
    pub grid_size: Option<usize>,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        BootstrapSection {
            replicates: defaults::bootstrap_replicates(),
            alpha: defaults::alpha(),
            cv_repeats: defaults::cv_repeats(),
            inclusion_threshold: defaults::inclusion_threshold(),
            recluster_per_replicate: false,
            write_replicates: false,
            grid_size: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectsSection {
    /// Report continuous odds ratios per standardized unit instead of per
    /// original unit.
    #[serde(default)]
    pub standardized_units: bool,
}

impl Default for EffectsSection {
    fn default() -> Self {
        EffectsSection {
            standardized_units: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub schema: PathBuf,
    #[serde(default = "defaults::out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub stability: StabilitySection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub effects: EffectsSection,
}

mod defaults {
    use std::path::PathBuf;

    pub fn out() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn restarts() -> usize {
        50
    }
    pub fn restarts_bootstrap() -> usize {
        5
    }
    pub fn k_min() -> usize {
        2
    }
    pub fn k_max() -> usize {
        8
    }
    pub fn stability_replicates() -> usize {
        100
    }
    pub fn grid_size() -> usize {
        100
    }
    pub fn lambda_min_ratio() -> f64 {
        1e-3
    }
    pub fn folds() -> usize {
        10
    }
    pub fn repeats() -> usize {
        50
    }
    pub fn heuristic() -> Option<usize> {
        Some(3)
    }
    pub fn loss() -> String {
        "deviance".into()
    }
    pub fn tol() -> f64 {
        1e-9
    }
    pub fn max_iter() -> usize {
        10_000
    }
    pub fn bootstrap_replicates() -> usize {
        300
    }
    pub fn alpha() -> f64 {
        0.05
    }
    pub fn cv_repeats() -> usize {
        1
    }
    pub fn inclusion_threshold() -> f64 {
        0.10
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::invalid(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cluster.restarts", self.cluster.restarts),
            ("stability.replicates", self.stability.replicates),
            ("stability.restarts_original", self.stability.restarts_original),
            ("stability.restarts_bootstrap", self.stability.restarts_bootstrap),
            ("fit.grid_size", self.fit.grid_size),
            ("fit.folds", self.fit.folds),
            ("fit.repeats", self.fit.repeats),
            ("fit.max_iter", self.fit.max_iter),
            ("bootstrap.replicates", self.bootstrap.replicates),
            ("bootstrap.cv_repeats", self.bootstrap.cv_repeats),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be >= 1")));
            }
        }
        if !(self.bootstrap.alpha > 0.0 && self.bootstrap.alpha < 0.5) {
            return Err(Error::invalid("bootstrap.alpha must be in (0, 0.5)"));
        }
        if !(self.fit.lambda_min_ratio > 0.0 && self.fit.lambda_min_ratio < 1.0) {
            return Err(Error::invalid("fit.lambda_min_ratio must be in (0, 1)"));
        }
        if !(self.bootstrap.inclusion_threshold > 0.0 && self.bootstrap.inclusion_threshold < 1.0)
        {
            return Err(Error::invalid("bootstrap.inclusion_threshold must be in (0, 1)"));
        }
        if self.fit.loss != "deviance" && self.fit.loss != "misclassification" {
            return Err(Error::invalid(
                "fit.loss must be 'deviance' or 'misclassification'",
            ));
        }
        if let Some(k) = self.cluster.k {
            if k < 2 {
                return Err(Error::invalid("cluster.k must be >= 2"));
            }
        }
        Ok(())
    }

    /// Stable hash of the resolved configuration, recorded in artifacts.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        hex::encode(&h.finalize()[..8])
    }
}
