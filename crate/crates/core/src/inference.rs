//! Resampling-based validation of transition networks.
//!
//! The resampling unit is always a whole sequence, so dependence within a
//! sequence is preserved. Every replicate draws from its own generator
//! derived from the master seed and the replicate index, which makes results
//! independent of thread scheduling.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TnaError};
use crate::graph::{betweenness_rw, in_strength, out_strength, TransitionNetwork};
use crate::markov::{estimate, tally_states, Scaling, TransitionModel};
use crate::par;
use crate::sequence::{Alphabet, StateSequence};
use crate::stats;

fn stochastic_matrix<'a>(seqs: impl IntoIterator<Item = &'a [usize]>, alphabet: &Alphabet) -> Result<DMatrix<f64>> {
    let counts = tally_states(seqs, alphabet.len())?;
    Ok(estimate(&counts, alphabet, Scaling::Stochastic)?.matrix().clone())
}

/// How the bootstrap decides whether an edge is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionRule {
    /// Keep when the share of replicates below the threshold is `<= alpha`.
    #[default]
    ThresholdP,
    /// Keep when the lower percentile bound is at least the threshold.
    CiLower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub threshold: f64,
    pub alpha: f64,
    pub seed: u64,
    pub rule: RetentionRule,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replicates: 1000,
            threshold: 0.05,
            alpha: 0.05,
            seed: 0,
            rule: RetentionRule::ThresholdP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeStat {
    pub from: usize,
    pub to: usize,
    pub observed: f64,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Share of replicates whose weight falls below the threshold.
    pub p_value: f64,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBootstrapResult {
    /// Every observed edge (weight > 0), row-major.
    pub edges: Vec<EdgeStat>,
    pub options: BootstrapOptions,
    /// Observed model with dropped edges zeroed (rows are not renormalised).
    pub pruned: TransitionModel,
    /// Dropped edges `(from, to, observed weight)`.
    pub dropped: Vec<(usize, usize, f64)>,
}

/// Non-parametric bootstrap of the stochastic transition matrix.
pub fn bootstrap_edges(
    sequences: &[StateSequence],
    alphabet: &Alphabet,
    options: &BootstrapOptions,
) -> Result<EdgeBootstrapResult> {
    let b = options.replicates;
    if sequences.len() < 2 {
        return Err(TnaError::invalid("bootstrap needs at least two sequences"));
    }
    if b < 100 {
        return Err(TnaError::invalid(format!("bootstrap needs at least 100 replicates, got {b}")));
    }
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(TnaError::invalid(format!("alpha must be in (0,1), got {}", options.alpha)));
    }
    if options.alpha < 1.0 / b as f64 {
        return Err(TnaError::invalid(format!(
            "alpha {} is finer than the resolution 1/{b} of {b} replicates",
            options.alpha
        )));
    }
    if !options.threshold.is_finite() {
        return Err(TnaError::invalid("bootstrap threshold must be finite"));
    }
    let counts = tally_states(sequences.iter().map(|s| s.states.as_slice()), alphabet.len())?;
    let observed = estimate(&counts, alphabet, Scaling::Stochastic)?;
    let n = sequences.len();
    let base = par::task_seed(options.seed, "bootstrap");
    let replicates: Vec<DMatrix<f64>> = par::map_range(b, |r| {
        let mut rng = par::rng(par::sub_seed(base, r as u64));
        let picks: Vec<&[usize]> = (0..n).map(|_| sequences[rng.random_range(0..n)].states.as_slice()).collect();
        stochastic_matrix(picks, alphabet).expect("resample of valid sequences")
    })
    .into_iter()
    .collect();

    let s = alphabet.len();
    let mut edges = Vec::new();
    let mut pruned = observed.matrix().clone();
    let mut dropped = Vec::new();
    for i in 0..s {
        for j in 0..s {
            let w = observed.weight(i, j);
            if w <= 0.0 {
                continue;
            }
            let mut values: Vec<f64> = replicates.iter().map(|m| m[(i, j)]).collect();
            let mean = stats::mean(&values);
            let sd = stats::std_dev(&values);
            let p_value = values.iter().filter(|&&v| v < options.threshold).count() as f64 / b as f64;
            values.sort_by(|a, b| a.total_cmp(b));
            let ci_low = stats::quantile_sorted(&values, 0.025);
            let ci_high = stats::quantile_sorted(&values, 0.975);
            let retained = match options.rule {
                RetentionRule::ThresholdP => p_value <= options.alpha,
                RetentionRule::CiLower => ci_low >= options.threshold,
            };
            if !retained {
                pruned[(i, j)] = 0.0;
                dropped.push((i, j, w));
            }
            edges.push(EdgeStat {
                from: i,
                to: j,
                observed: w,
                mean,
                sd,
                ci_low,
                ci_high,
                p_value,
                retained,
            });
        }
    }
    Ok(EdgeBootstrapResult {
        edges,
        options: options.clone(),
        pruned: observed.with_matrix(pruned),
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PermutationOptions {
    pub permutations: usize,
    pub seed: u64,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        PermutationOptions {
            permutations: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeDifference {
    pub from: usize,
    pub to: usize,
    /// Weight in the first group minus weight in the second.
    pub difference: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationResult {
    /// All ordered state pairs, row-major.
    pub edges: Vec<EdgeDifference>,
    pub options: PermutationOptions,
}

/// Two-sided permutation test of per-edge differences between two groups of
/// sequences, shuffling group labels with group sizes fixed.
pub fn permutation_compare(
    group_a: &[StateSequence],
    group_b: &[StateSequence],
    alphabet: &Alphabet,
    options: &PermutationOptions,
) -> Result<PermutationResult> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(TnaError::Empty("both comparison groups need at least one sequence".into()));
    }
    if options.permutations == 0 {
        return Err(TnaError::invalid("permutations must be >= 1"));
    }
    let pooled: Vec<&[usize]> = group_a.iter().chain(group_b).map(|s| s.states.as_slice()).collect();
    let na = group_a.len();
    let diff = |idx: &[usize]| -> Result<DMatrix<f64>> {
        let a = stochastic_matrix(idx[..na].iter().map(|&i| pooled[i]), alphabet)?;
        let b = stochastic_matrix(idx[na..].iter().map(|&i| pooled[i]), alphabet)?;
        Ok(a - b)
    };
    let identity: Vec<usize> = (0..pooled.len()).collect();
    let observed = diff(&identity)?;
    let base = par::task_seed(options.seed, "permutation");
    let exceed: Vec<Vec<bool>> = par::map_range(options.permutations, |r| {
        let mut rng = par::rng(par::sub_seed(base, r as u64));
        let mut idx = identity.clone();
        idx.shuffle(&mut rng);
        let d = diff(&idx).expect("permuted groups are non-empty");
        d.iter()
            .zip(observed.iter())
            .map(|(p, o)| p.abs() >= o.abs() - 1e-12)
            .collect()
    });
    let s = alphabet.len();
    // nalgebra storage is column-major; report row-major.
    let mut edges = Vec::with_capacity(s * s);
    for i in 0..s {
        for j in 0..s {
            let flat = j * s + i;
            let hits = exceed.iter().filter(|e| e[flat]).count();
            edges.push(EdgeDifference {
                from: i,
                to: j,
                difference: observed[(i, j)],
                p_value: (1 + hits) as f64 / (options.permutations + 1) as f64,
            });
        }
    }
    Ok(PermutationResult {
        edges,
        options: options.clone(),
    })
}

/// Disparity-filter significance `(1 - p)^(k - 1)`; zero when `k <= 1`.
pub fn disparity_alpha(p: f64, k: usize) -> f64 {
    if k <= 1 {
        0.0
    } else {
        (1.0 - p).clamp(0.0, 1.0).powi(k as i32 - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisparityEdge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
    /// Against the source's outgoing weights.
    pub alpha_out: f64,
    /// Against the target's incoming weights.
    pub alpha_in: f64,
    pub alpha: f64,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisparityResult {
    /// Non-loop edges in row-major order. Self-loops are not evaluated.
    pub edges: Vec<DisparityEdge>,
    pub significance: f64,
}

/// Backbone extraction against a uniform-split null at each node.
pub fn disparity_filter(net: &TransitionNetwork, significance: f64) -> Result<DisparityResult> {
    if !(significance > 0.0 && significance <= 1.0) {
        return Err(TnaError::invalid(format!("significance must be in (0,1], got {significance}")));
    }
    let n = net.n_nodes();
    let kout: Vec<usize> = (0..n).map(|i| (0..n).filter(|&j| j != i && net.has_edge(i, j)).count()).collect();
    let kin: Vec<usize> = (0..n).map(|j| (0..n).filter(|&i| i != j && net.has_edge(i, j)).count()).collect();
    let sout = out_strength(net);
    let sin = in_strength(net);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let w = net.weight(i, j);
            if i == j || w <= 0.0 {
                continue;
            }
            let alpha_out = disparity_alpha(w / sout[i], kout[i]);
            let alpha_in = disparity_alpha(w / sin[j], kin[j]);
            let alpha = alpha_out.min(alpha_in);
            edges.push(DisparityEdge {
                from: i,
                to: j,
                weight: w,
                alpha_out,
                alpha_in,
                alpha,
                retained: alpha < significance,
            });
        }
    }
    Ok(DisparityResult { edges, significance })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentralityMeasure {
    InStrength,
    OutStrength,
    Betweenness,
}

impl CentralityMeasure {
    pub const ALL: [CentralityMeasure; 3] = [
        CentralityMeasure::InStrength,
        CentralityMeasure::OutStrength,
        CentralityMeasure::Betweenness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CentralityMeasure::InStrength => "in_strength",
            CentralityMeasure::OutStrength => "out_strength",
            CentralityMeasure::Betweenness => "betweenness",
        }
    }

    pub fn compute(self, net: &TransitionNetwork) -> Result<Vec<f64>> {
        match self {
            CentralityMeasure::InStrength => Ok(in_strength(net)),
            CentralityMeasure::OutStrength => Ok(out_strength(net)),
            CentralityMeasure::Betweenness => Ok(betweenness_rw(net)?.raw),
        }
    }
}

impl fmt::Display for CentralityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CentralityMeasure {
    type Err = TnaError;

    fn from_str(s: &str) -> Result<Self> {
        CentralityMeasure::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| TnaError::UnknownMeasure {
                name: s.to_string(),
                valid: CentralityMeasure::ALL.iter().map(|m| m.name().to_string()).collect(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityOptions {
    pub drop_proportions: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    /// Minimum mean rank correlation for a drop proportion to count as stable.
    pub correlation_cutoff: f64,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions {
            drop_proportions: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            replicates: 250,
            seed: 0,
            correlation_cutoff: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureStability {
    pub measure: CentralityMeasure,
    /// Largest drop proportion whose mean correlation reaches the cutoff.
    pub cs_coefficient: f64,
    /// `(drop proportion, mean Spearman correlation)` pairs.
    pub mean_correlations: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityResult {
    pub measures: Vec<MeasureStability>,
    pub options: StabilityOptions,
}

/// Case-dropping stability of node centralities.
pub fn centrality_stability(
    sequences: &[StateSequence],
    alphabet: &Alphabet,
    measures: &[CentralityMeasure],
    options: &StabilityOptions,
) -> Result<StabilityResult> {
    if measures.is_empty() {
        return Err(TnaError::invalid("no centrality measures requested"));
    }
    if options.replicates == 0 || options.drop_proportions.is_empty() {
        return Err(TnaError::invalid("stability needs replicates and drop proportions"));
    }
    if options.drop_proportions.iter().any(|p| !(0.0..1.0).contains(p)) {
        return Err(TnaError::invalid("drop proportions must be in [0,1)"));
    }
    let n = sequences.len();
    let kept = |p: f64| ((1.0 - p) * n as f64).round() as usize;
    let max_drop = options.drop_proportions.iter().cloned().fold(0.0, f64::max);
    if kept(max_drop) < 2 {
        return Err(TnaError::invalid(format!(
            "dropping {max_drop} of {n} sequences leaves fewer than two"
        )));
    }
    let counts = tally_states(sequences.iter().map(|s| s.states.as_slice()), alphabet.len())?;
    let full_net = TransitionNetwork::new(estimate(&counts, alphabet, Scaling::Stochastic)?);
    let full: Vec<Vec<f64>> = measures.iter().map(|m| m.compute(&full_net)).collect::<Result<_>>()?;
    let base = par::task_seed(options.seed, "stability");
    let mut per_measure: Vec<Vec<(f64, f64)>> = vec![Vec::new(); measures.len()];
    for (pi, &p) in options.drop_proportions.iter().enumerate() {
        let m = kept(p);
        let corrs: Vec<Result<Vec<f64>>> = par::map_range(options.replicates, |r| {
            let mut rng = par::rng(par::sub_seed(base, (pi as u64) << 32 | r as u64));
            let subset = rand::seq::index::sample(&mut rng, n, m);
            let mut idx = subset.into_vec();
            idx.sort_unstable();
            let counts = tally_states(idx.iter().map(|&i| sequences[i].states.as_slice()), alphabet.len())?;
            let net = TransitionNetwork::new(estimate(&counts, alphabet, Scaling::Stochastic)?);
            measures
                .iter()
                .zip(&full)
                .map(|(meas, f)| Ok(stats::spearman(f, &meas.compute(&net)?)))
                .collect()
        });
        let corrs: Vec<Vec<f64>> = corrs.into_iter().collect::<Result<_>>()?;
        for (mi, slot) in per_measure.iter_mut().enumerate() {
            let values: Vec<f64> = corrs.iter().map(|c| c[mi]).collect();
            slot.push((p, stats::mean(&values)));
        }
    }
    let measures = measures
        .iter()
        .zip(per_measure)
        .map(|(&measure, mean_correlations)| MeasureStability {
            measure,
            cs_coefficient: mean_correlations
                .iter()
                .filter(|(_, c)| *c >= options.correlation_cutoff)
                .map(|(p, _)| *p)
                .fold(0.0, f64::max),
            mean_correlations,
        })
        .collect();
    Ok(StabilityResult {
        measures,
        options: options.clone(),
    })
}
