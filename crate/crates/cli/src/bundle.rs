use serde::{Deserialize, Serialize};
use tna::graph::SpinGlassParams;
use tna::inference::RetentionRule;
use tna::{CountMatrix, Scaling, TransitionModel};

pub const SCHEMA_VERSION: u32 = 1;
pub const BUNDLE_FILE: &str = "bundle.json";

/// Versioned JSON result of one command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisBundle {
    pub schema_version: u32,
    pub command: String,
    pub provenance: Provenance,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centralities: Option<CentralityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patterns: Option<PatternReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub communities: Option<CommunityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationReport>,
    /// Other artifacts written next to the bundle.
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl AnalysisBundle {
    pub fn new(command: &str, provenance: Provenance, config: serde_json::Value) -> Self {
        AnalysisBundle {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            provenance,
            config,
            data: None,
            model: None,
            centralities: None,
            patterns: None,
            communities: None,
            mixture: None,
            validation: None,
            comparison: None,
            simulation: None,
            files: Vec::new(),
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub created_at: String,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_units: usize,
    pub n_events: usize,
    pub n_sequences: usize,
    /// Gap threshold used to split sessions; absent for whole-unit sequences.
    pub session_threshold_seconds: Option<f64>,
    pub states: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountsReport {
    pub initial: Vec<u64>,
    pub transitions: Vec<Vec<u64>>,
    pub n_sequences: u64,
    pub n_transitions: u64,
}

impl From<&CountMatrix> for CountsReport {
    fn from(c: &CountMatrix) -> Self {
        let n = c.n_states();
        CountsReport {
            initial: c.initial_counts().to_vec(),
            transitions: (0..n).map(|i| (0..n).map(|j| c.get(i, j)).collect()).collect(),
            n_sequences: c.n_sequences(),
            n_transitions: c.n_transitions(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelReport {
    pub states: Vec<String>,
    pub scaling: Scaling,
    pub initial: Vec<f64>,
    /// Row-major, `matrix[from][to]`.
    pub matrix: Vec<Vec<f64>>,
    pub unobserved_states: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<CountsReport>,
}

impl ModelReport {
    pub fn new(model: &TransitionModel, counts: Option<&CountMatrix>) -> Self {
        let n = model.n_states();
        ModelReport {
            states: model.alphabet().labels().to_vec(),
            scaling: model.scaling(),
            initial: model.initial().to_vec(),
            matrix: (0..n).map(|i| (0..n).map(|j| model.weight(i, j)).collect()).collect(),
            unobserved_states: model
                .unobserved_states()
                .iter()
                .map(|&i| model.alphabet().label(i).to_string())
                .collect(),
            counts: counts.map(CountsReport::from),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentralityReport {
    pub states: Vec<String>,
    /// Column sums without the diagonal.
    pub in_strength: Vec<f64>,
    /// Row sums without the diagonal.
    pub out_strength: Vec<f64>,
    /// Computed on the row-normalised matrix whatever the scaling.
    pub betweenness: Vec<f64>,
    pub betweenness_normalized: Vec<f64>,
    pub contributing_pairs: usize,
    pub self_loops_in_strength: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DyadRow {
    pub a: String,
    pub b: String,
    pub weight_ab: f64,
    pub weight_ba: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CliqueRow {
    pub states: Vec<String>,
    /// Smallest directed weight inside the clique.
    pub min_weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternReport {
    pub dyad_threshold: f64,
    pub clique_threshold: f64,
    pub clique_size: usize,
    pub dyads: Vec<DyadRow>,
    pub cliques: Vec<CliqueRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommunityReport {
    /// Community per state, numbered from 1.
    pub membership: Vec<usize>,
    pub n_communities: usize,
    pub hamiltonian: f64,
    pub params: SpinGlassParams,
    pub n_iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BicEntry {
    pub k: usize,
    pub log_likelihood: Option<f64>,
    pub bic: Option<f64>,
    pub n_parameters: Option<usize>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assignment {
    pub unit: String,
    pub session: usize,
    /// Numbered from 1.
    pub cluster: usize,
    pub posterior: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateEntry {
    /// Numbered from 1; cluster 1 is the reference.
    pub cluster: usize,
    pub variable: String,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureReport {
    pub selected_k: usize,
    pub bic_table: Vec<BicEntry>,
    pub log_likelihood: f64,
    pub bic: f64,
    pub n_parameters: usize,
    pub n_sequences: usize,
    pub restarts: usize,
    pub restarts_converged_to_best: usize,
    pub restarts_degenerate: usize,
    pub iterations: usize,
    pub converged: bool,
    pub components: Vec<ModelReport>,
    pub covariate_names: Vec<String>,
    /// Rows for clusters 2..K, intercept first.
    pub beta: Vec<Vec<f64>>,
    pub assignments: Vec<Assignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<CovariateEntry>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapEdge {
    pub from: String,
    pub to: String,
    pub observed: f64,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub retained: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub replicates: usize,
    pub threshold: f64,
    pub alpha: f64,
    pub rule: RetentionRule,
    pub edges: Vec<BootstrapEdge>,
    pub n_retained: usize,
    pub n_dropped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisparityEntry {
    pub from: String,
    pub to: String,
    pub weight: f64,
    pub alpha_out: f64,
    pub alpha_in: f64,
    pub alpha: f64,
    pub retained: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisparityReport {
    pub significance: f64,
    pub edges: Vec<DisparityEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityEntry {
    pub measure: String,
    pub cs_coefficient: f64,
    /// `(drop proportion, mean correlation)`.
    pub mean_correlations: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub replicates: usize,
    pub correlation_cutoff: f64,
    pub measures: Vec<StabilityEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub bootstrap: BootstrapReport,
    pub disparity: DisparityReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonEdge {
    pub from: String,
    pub to: String,
    pub weight_a: f64,
    pub weight_b: f64,
    pub difference: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub group_column: String,
    pub groups: [String; 2],
    pub n_sequences: [usize; 2],
    pub permutations: usize,
    /// Subtraction under the configured scaling, `a - b`.
    pub subtraction: Vec<Vec<f64>>,
    /// Per-edge test on the row-normalised matrices.
    pub edges: Vec<ComparisonEdge>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n_sequences: usize,
    pub length: usize,
    pub n_events: usize,
    pub weights: Vec<f64>,
}

/// Ground truth written by `simulate` for oracle checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub states: Vec<String>,
    pub weights: Vec<f64>,
    pub components: Vec<ModelReport>,
    /// Generating component per unit, numbered from 1.
    pub membership: Vec<usize>,
}
