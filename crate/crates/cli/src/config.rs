use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tna::graph::SpinGlassParams;
use tna::inference::RetentionRule;
use tna::sequence::{Schema, SessionizationPolicy};
use tna::Scaling;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub seed: u64,
    pub scaling: Scaling,
    /// Not part of the echoed config: where results go does not change them.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    pub input: InputConfig,
    pub sessionization: SessionizationPolicy,
    pub patterns: PatternConfig,
    pub communities: SpinGlassParams,
    pub mixture: MixtureConfig,
    pub validation: ValidationConfig,
    pub compare: CompareConfig,
    pub simulate: SimulateConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            seed: 0,
            scaling: Scaling::Stochastic,
            out_dir: PathBuf::from("tna-out"),
            input: InputConfig::default(),
            sessionization: SessionizationPolicy::FixedGap { gap_seconds: 1200.0 },
            patterns: PatternConfig::default(),
            communities: SpinGlassParams::default(),
            mixture: MixtureConfig::default(),
            validation: ValidationConfig::default(),
            compare: CompareConfig::default(),
            simulate: SimulateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Relative paths are resolved against the config file's directory.
    pub events: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    /// Unit column of the covariate file; defaults to the schema's unit column.
    pub covariate_unit_column: Option<String>,
    pub schema: Schema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternConfig {
    pub dyad_threshold: f64,
    pub clique_threshold: f64,
    pub clique_size: usize,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            dyad_threshold: 0.1,
            clique_threshold: 0.05,
            clique_size: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    /// Inclusive `[min, max]` number of clusters.
    pub k_range: [usize; 2],
    pub restarts: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub min_cluster_mass: f64,
    /// Use the covariate file (when given) in the cluster priors.
    pub use_covariates: bool,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig {
            k_range: [2, 8],
            restarts: 500,
            tolerance: 1e-8,
            max_iterations: 1000,
            min_cluster_mass: 1.0,
            use_covariates: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub replicates: usize,
    pub threshold: f64,
    pub alpha: f64,
    pub rule: RetentionRule,
    pub disparity_significance: f64,
    pub drop_proportions: Vec<f64>,
    pub stability_replicates: usize,
    pub correlation_cutoff: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            replicates: 1000,
            threshold: 0.05,
            alpha: 0.05,
            rule: RetentionRule::ThresholdP,
            disparity_significance: 0.05,
            drop_proportions: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            stability_replicates: 250,
            correlation_cutoff: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// Column holding the group label; defaults to `input.schema.group`.
    pub group_column: Option<String>,
    /// The two groups to compare, first minus second. When absent the data
    /// must contain exactly two groups, taken in order of appearance.
    pub groups: Option<[String; 2]>,
    pub permutations: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            group_column: None,
            groups: None,
            permutations: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub states: Vec<String>,
    pub n_sequences: usize,
    pub length: usize,
    /// Timestamp of every unit's first event.
    pub start: String,
    pub step_seconds: u64,
    pub components: Vec<ComponentConfig>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            states: Vec::new(),
            n_sequences: 100,
            length: 20,
            start: "2024-01-01T00:00:00".into(),
            step_seconds: 60,
            components: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    #[serde(default = "one")]
    pub weight: f64,
    pub initial: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

impl AnalysisConfig {
    /// Reads a TOML config and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: AnalysisConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.input.events.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.input.covariates.as_mut() {
            resolve(p);
        }
        resolve(&mut cfg.out_dir);
        Ok(cfg)
    }

    /// Input files that must exist before a data-driven command starts.
    pub fn check_inputs(&self, with_covariates: bool) -> Result<(), CliError> {
        let events = self
            .input
            .events
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no `input.events` path".into()))?;
        let mut paths = vec![events];
        if with_covariates {
            paths.extend(self.input.covariates.as_ref());
        }
        for p in paths {
            if !p.is_file() {
                return Err(CliError::Config(format!("input file not found: {}", p.display())));
            }
        }
        Ok(())
    }

    /// Config as echoed into bundles: input paths reduced to file names so
    /// the echo does not depend on where the project is checked out.
    pub fn echo(&self) -> serde_json::Value {
        let mut c = self.clone();
        let name = |p: &mut PathBuf| {
            if let Some(f) = p.file_name() {
                *p = PathBuf::from(f);
            }
        };
        if let Some(p) = c.input.events.as_mut() {
            name(p);
        }
        if let Some(p) = c.input.covariates.as_mut() {
            name(p);
        }
        serde_json::to_value(&c).expect("config serializes")
    }

    /// SHA-256 of the compact JSON echo.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = serde_json::to_string(&self.echo()).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg: AnalysisConfig = toml::from_str("seed = 3\n[input]\nevents = \"e.csv\"\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.patterns.dyad_threshold, 0.1);
        assert_eq!(cfg.sessionization, SessionizationPolicy::FixedGap { gap_seconds: 1200.0 });
        assert_eq!(cfg.mixture.k_range, [2, 8]);
    }

    #[test]
    fn policy_section_is_tagged() {
        let cfg: AnalysisConfig = toml::from_str("[sessionization]\nmode = \"quantile_gap\"\nquantile = 0.9\n").unwrap();
        assert_eq!(cfg.sessionization, SessionizationPolicy::QuantileGap { quantile: 0.9 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<AnalysisConfig>("sed = 3\n").is_err());
    }

    #[test]
    fn hash_ignores_out_dir_and_parent_dirs() {
        let mut a = AnalysisConfig::default();
        a.input.events = Some("/x/y/events.csv".into());
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        b.input.events = Some("/z/events.csv".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
