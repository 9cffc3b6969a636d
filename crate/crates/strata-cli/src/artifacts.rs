//! Stage artifacts on disk. Every JSON artifact carries a version, the
//! seed, and the config hash; every CSV gets a metadata sidecar with the
//! same fields, so any output can be traced back to the run that made it.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use strata_core::bootstrap::{BootstrapSummary, InclusionScreen};
use strata_core::dataset::{StandardizationReport, VariableSchema};
use strata_core::effects::EffectTable;
use strata_core::error::{Error, Result};
use strata_core::glasso::{CvResult, ModelParams};
use strata_core::pam::Partition;
use strata_core::stability::StabilityReport;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub artifact_version: u32,
    pub seed: u64,
    pub config_hash: String,
}

impl Meta {
    pub fn new(seed: u64, config_hash: &str) -> Self {
        Meta {
            artifact_version: ARTIFACT_VERSION,
            seed,
            config_hash: config_hash.to_string(),
        }
    }
}

/// Clustering output plus everything needed to assign new rows: medoid
/// feature values and the Gower ranges fixed by the training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionArtifact {
    pub meta: Meta,
    pub include_outcome: bool,
    pub partition: Partition<f64>,
    /// Continuous feature values of each medoid row.
    pub medoid_cont: Vec<Vec<f64>>,
    /// Categorical level indices of each medoid row.
    pub medoid_cat: Vec<Vec<u32>>,
    pub gower_ranges: Vec<f64>,
    pub schema_fingerprint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityArtifact {
    pub meta: Meta,
    pub report: StabilityReport<f64>,
}

/// Summary of one path point kept in the fit artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathPointSummary {
    pub lambda: f64,
    pub deviance: f64,
    pub converged: bool,
    pub iterations: usize,
    pub active_mains: usize,
    pub active_interactions: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub meta: Meta,
    pub k: usize,
    pub cv: CvResult<f64>,
    pub path_summary: Vec<PathPointSummary>,
    /// Parameters at the cross-validated lambda.
    pub params: ModelParams<f64>,
    /// Parameters at the sub-optimal heuristic lambda, when configured.
    pub params_heuristic: Option<ModelParams<f64>>,
    pub standardization: StandardizationReport<f64>,
    pub schema_fingerprint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectsArtifact {
    pub meta: Meta,
    pub table: EffectTable<f64>,
    pub interpretations: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapArtifact {
    pub meta: Meta,
    pub summary: BootstrapSummary<f64>,
    pub screen: InclusionScreen<f64>,
}

pub fn schema_fingerprint(schema: &[VariableSchema]) -> String {
    use sha2::{Digest, Sha256};
    let canonical = serde_json::to_string(schema).expect("schema serializes");
    let mut h = Sha256::new();
    h.update(canonical.as_bytes());
    hex::encode(&h.finalize()[..8])
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|_| {
        Error::data(format!(
            "missing artifact {}: run the '{stage}' stage first",
            path.display()
        ))
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Write a CSV through `f` and drop a `<name>.meta.json` sidecar next to it.
pub fn write_csv_with_sidecar<F>(path: &Path, meta: &Meta, f: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, &buf)?;
    let sidecar = PathBuf::from(format!("{}.meta.json", path.display()));
    write_json(&sidecar, meta)?;
    Ok(())
}
