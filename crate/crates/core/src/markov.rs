//! First-order Markov estimation, likelihood and simulation.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TnaError};
use crate::par;
use crate::sequence::{Alphabet, StateSequence};

/// Row sums of a stochastic model must be within this of 1.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Row-normalised transition probabilities.
    #[default]
    Stochastic,
    /// Counts divided by the total number of transitions.
    Frequency,
    /// Raw transition counts.
    Count,
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scaling::Stochastic => "stochastic",
            Scaling::Frequency => "frequency",
            Scaling::Count => "count",
        })
    }
}

impl FromStr for Scaling {
    type Err = TnaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stochastic" => Ok(Scaling::Stochastic),
            "frequency" => Ok(Scaling::Frequency),
            "count" => Ok(Scaling::Count),
            _ => Err(TnaError::invalid(format!(
                "unknown scaling `{s}` (expected stochastic, frequency or count)"
            ))),
        }
    }
}

/// Transition and initial-state tallies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    n_states: usize,
    counts: Vec<u64>,
    initial_counts: Vec<u64>,
    n_sequences: u64,
    n_transitions: u64,
}

impl CountMatrix {
    pub fn zeros(n_states: usize) -> Self {
        CountMatrix {
            n_states,
            counts: vec![0; n_states * n_states],
            initial_counts: vec![0; n_states],
            n_sequences: 0,
            n_transitions: 0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn get(&self, from: usize, to: usize) -> u64 {
        self.counts[from * self.n_states + to]
    }

    pub fn initial(&self, state: usize) -> u64 {
        self.initial_counts[state]
    }

    pub fn initial_counts(&self) -> &[u64] {
        &self.initial_counts
    }

    pub fn n_sequences(&self) -> u64 {
        self.n_sequences
    }

    pub fn n_transitions(&self) -> u64 {
        self.n_transitions
    }

    pub fn row_sum(&self, from: usize) -> u64 {
        self.counts[from * self.n_states..(from + 1) * self.n_states].iter().sum()
    }

    fn record(&mut self, states: &[usize]) {
        if let Some(&first) = states.first() {
            self.initial_counts[first] += 1;
            self.n_sequences += 1;
        }
        for w in states.windows(2) {
            self.counts[w[0] * self.n_states + w[1]] += 1;
            self.n_transitions += 1;
        }
    }

    /// Elementwise sum; tallies are additive over disjoint sequence sets.
    pub fn merge(mut self, other: &CountMatrix) -> Self {
        assert_eq!(self.n_states, other.n_states);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.initial_counts.iter_mut().zip(&other.initial_counts) {
            *a += b;
        }
        self.n_sequences += other.n_sequences;
        self.n_transitions += other.n_transitions;
        self
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_states, self.n_states, |i, j| self.get(i, j) as f64)
    }
}

/// Counts adjacent state pairs; transitions never cross sequence boundaries.
pub fn tally(sequences: &[StateSequence], n_states: usize) -> Result<CountMatrix> {
    tally_states(sequences.iter().map(|s| s.states.as_slice()), n_states)
}

/// [`tally`] over bare state slices.
pub fn tally_states<'a, I>(sequences: I, n_states: usize) -> Result<CountMatrix>
where
    I: IntoIterator<Item = &'a [usize]>,
{
    let seqs: Vec<&[usize]> = sequences.into_iter().collect();
    if seqs.is_empty() {
        return Err(TnaError::Empty("no sequences to tally".into()));
    }
    if n_states == 0 {
        return Err(TnaError::invalid("alphabet is empty"));
    }
    for (i, s) in seqs.iter().enumerate() {
        if s.is_empty() {
            return Err(TnaError::invalid(format!("sequence {i} is empty")));
        }
        if let Some(&bad) = s.iter().find(|&&x| x >= n_states) {
            return Err(TnaError::invalid(format!(
                "sequence {i} has state index {bad} outside an alphabet of {n_states}"
            )));
        }
    }
    Ok(par::chunked_reduce(
        &seqs,
        256,
        CountMatrix::zeros(n_states),
        |chunk| {
            let mut c = CountMatrix::zeros(n_states);
            for s in chunk {
                c.record(s);
            }
            c
        },
        |a, b| a.merge(&b),
    ))
}

/// Initial probabilities plus a transition matrix over a fixed alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    alphabet: Alphabet,
    initial: Vec<f64>,
    matrix: DMatrix<f64>,
    scaling: Scaling,
    unobserved: Vec<usize>,
}

fn zero_rows(matrix: &DMatrix<f64>) -> Vec<usize> {
    (0..matrix.nrows())
        .filter(|&i| matrix.row(i).iter().all(|&v| v == 0.0))
        .collect()
}

impl TransitionModel {
    /// Validates and wraps explicit parameters.
    pub fn new(alphabet: Alphabet, initial: Vec<f64>, matrix: DMatrix<f64>, scaling: Scaling) -> Result<Self> {
        let n = alphabet.len();
        if matrix.nrows() != n || matrix.ncols() != n || initial.len() != n {
            return Err(TnaError::invalid(format!(
                "model dimensions {}x{} / {} do not match alphabet of {n}",
                matrix.nrows(),
                matrix.ncols(),
                initial.len()
            )));
        }
        if matrix.iter().chain(&initial).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(TnaError::invalid("model entries must be finite and non-negative"));
        }
        if scaling == Scaling::Stochastic {
            for i in 0..n {
                let s: f64 = matrix.row(i).sum();
                if s != 0.0 && (s - 1.0).abs() > 1e-9 {
                    return Err(TnaError::invalid(format!(
                        "row `{}` sums to {s}, expected 1",
                        alphabet.label(i)
                    )));
                }
            }
            let s: f64 = initial.iter().sum();
            if s != 0.0 && (s - 1.0).abs() > 1e-9 {
                return Err(TnaError::invalid(format!("initial probabilities sum to {s}")));
            }
        }
        let unobserved = zero_rows(&matrix);
        Ok(TransitionModel {
            alphabet,
            initial,
            matrix,
            scaling,
            unobserved,
        })
    }

    /// Internal constructor for parameters already known to be valid.
    pub(crate) fn from_parts(alphabet: Alphabet, initial: Vec<f64>, matrix: DMatrix<f64>, scaling: Scaling) -> Self {
        let unobserved = zero_rows(&matrix);
        TransitionModel {
            alphabet,
            initial,
            matrix,
            scaling,
            unobserved,
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn n_states(&self) -> usize {
        self.alphabet.len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.matrix[(from, to)]
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    /// States with no outgoing mass (never observed as a source).
    pub fn unobserved_states(&self) -> &[usize] {
        &self.unobserved
    }

    pub fn require_scaling(&self, expected: Scaling) -> Result<()> {
        if self.scaling != expected {
            return Err(TnaError::Scaling {
                expected: expected.to_string(),
                found: self.scaling.to_string(),
            });
        }
        Ok(())
    }

    /// Same model with a replaced matrix (e.g. bootstrap-pruned weights).
    pub fn with_matrix(&self, matrix: DMatrix<f64>) -> Self {
        TransitionModel::from_parts(self.alphabet.clone(), self.initial.clone(), matrix, self.scaling)
    }
}

/// Relative-frequency estimate. Rows with no outgoing counts stay zero and
/// are reported by [`TransitionModel::unobserved_states`].
pub fn estimate(counts: &CountMatrix, alphabet: &Alphabet, scaling: Scaling) -> Result<TransitionModel> {
    estimate_smoothed(counts, alphabet, scaling, 0.0)
}

/// As [`estimate`], adding `pseudocount` to every transition and initial
/// count before normalising (stochastic scaling only).
pub fn estimate_smoothed(
    counts: &CountMatrix,
    alphabet: &Alphabet,
    scaling: Scaling,
    pseudocount: f64,
) -> Result<TransitionModel> {
    let n = counts.n_states();
    if alphabet.len() != n {
        return Err(TnaError::invalid(format!(
            "count matrix has {n} states but alphabet has {}",
            alphabet.len()
        )));
    }
    if !(pseudocount >= 0.0 && pseudocount.is_finite()) {
        return Err(TnaError::invalid(format!("pseudocount must be >= 0, got {pseudocount}")));
    }
    if pseudocount > 0.0 && scaling != Scaling::Stochastic {
        return Err(TnaError::invalid("pseudocounts apply to stochastic scaling only"));
    }
    let raw = counts.to_matrix();
    let initial_raw: Vec<f64> = counts.initial_counts().iter().map(|&c| c as f64).collect();
    let (initial, matrix) = match scaling {
        Scaling::Count => (initial_raw, raw),
        Scaling::Frequency => {
            let total = counts.n_transitions() as f64;
            let m = if total > 0.0 { raw / total } else { raw };
            (normalize(&initial_raw, 0.0), m)
        }
        Scaling::Stochastic => {
            let smoothed = raw.map(|v| v + pseudocount);
            (normalize(&initial_raw, pseudocount), row_normalize(&smoothed))
        }
    };
    Ok(TransitionModel::from_parts(alphabet.clone(), initial, matrix, scaling))
}

pub(crate) fn normalize(values: &[f64], pseudocount: f64) -> Vec<f64> {
    let total: f64 = values.iter().map(|v| v + pseudocount).sum();
    if total > 0.0 {
        values.iter().map(|v| (v + pseudocount) / total).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Divides each row by its sum; all-zero rows stay zero.
pub(crate) fn row_normalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 0..m.nrows() {
        let s: f64 = m.row(i).sum();
        if s > 0.0 {
            for j in 0..m.ncols() {
                out[(i, j)] = m[(i, j)] / s;
            }
        }
    }
    out
}

/// Log-likelihood of the sequences; a zero-probability step gives `-inf`.
pub fn log_likelihood(model: &TransitionModel, sequences: &[StateSequence]) -> Result<f64> {
    model.require_scaling(Scaling::Stochastic)?;
    let n = model.n_states();
    let mut total = 0.0;
    for s in sequences {
        if let Some(&bad) = s.states.iter().find(|&&x| x >= n) {
            return Err(TnaError::invalid(format!("state index {bad} outside model alphabet")));
        }
        let Some(&first) = s.states.first() else {
            continue;
        };
        total += model.initial[first].ln();
        for w in s.states.windows(2) {
            total += model.matrix[(w[0], w[1])].ln();
        }
    }
    Ok(total)
}

fn sample_index<R: rand::Rng>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> Option<usize> {
    let total: f64 = weights.clone().sum();
    if !(total > 0.0) {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last = Some(i);
            if u < acc {
                return Some(i);
            }
        }
    }
    last
}

/// Draws one chain of at most `length` states from `start`, stopping early
/// at a state with no outgoing mass.
pub(crate) fn walk<R: rand::Rng>(model: &TransitionModel, start: usize, length: usize, rng: &mut R) -> Vec<usize> {
    let mut states = Vec::with_capacity(length.min(4096));
    let mut cur = start;
    states.push(cur);
    while states.len() < length {
        match sample_index(rng, model.matrix.row(cur).iter().copied()) {
            Some(next) => {
                cur = next;
                states.push(cur);
            }
            None => break,
        }
    }
    states
}

/// Simulates sequences of up to `length` states. Each sequence uses its own
/// generator derived from `seed`, so output is identical with or without
/// parallel execution.
pub fn simulate(model: &TransitionModel, n_sequences: usize, length: usize, seed: u64) -> Result<Vec<StateSequence>> {
    model.require_scaling(Scaling::Stochastic)?;
    if length == 0 {
        return Err(TnaError::invalid("sequence length must be >= 1"));
    }
    if !(model.initial.iter().sum::<f64>() > 0.0) {
        return Err(TnaError::invalid("initial probabilities are all zero"));
    }
    Ok(par::map_range(n_sequences, |i| {
        let mut rng = par::rng(par::sub_seed(seed, i as u64));
        let start = sample_index(&mut rng, model.initial.iter().copied())
            .expect("initial distribution has positive mass");
        StateSequence::from_states(format!("sim{i}"), walk(model, start, length, &mut rng))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> Alphabet {
        Alphabet::new(["A", "B"]).unwrap()
    }

    fn seq(states: &[usize]) -> StateSequence {
        StateSequence::from_states("u", states.to_vec())
    }

    #[test]
    fn tally_alternating() {
        let c = tally(&[seq(&[0, 1, 0, 1, 0])], 2).unwrap();
        assert_eq!((c.get(0, 1), c.get(1, 0), c.get(0, 0), c.get(1, 1)), (2, 2, 0, 0));
        assert_eq!(c.initial_counts(), [1, 0]);
        assert_eq!(c.n_transitions(), 4);
    }

    #[test]
    fn tally_respects_boundaries() {
        let c = tally(&[seq(&[0, 1]), seq(&[1, 0])], 2).unwrap();
        assert_eq!((c.get(0, 1), c.get(1, 0), c.get(1, 1)), (1, 1, 0));
        assert_eq!(c.initial_counts(), [1, 1]);
    }

    #[test]
    fn tally_errors() {
        assert!(tally(&[], 2).is_err());
        assert!(tally(&[seq(&[0, 3])], 2).is_err());
        assert!(tally(&[seq(&[])], 2).is_err());
    }

    #[test]
    fn estimate_rows() {
        let c = tally(&[seq(&[0, 0, 0, 1, 0, 1])], 2).unwrap();
        let m = estimate(&c, &ab(), Scaling::Stochastic).unwrap();
        assert_eq!(m.weight(0, 0), 0.5);
        assert_eq!(m.weight(0, 1), 0.5);
        assert_eq!(m.weight(1, 0), 1.0);
        assert!(m.unobserved_states().is_empty());
    }

    #[test]
    fn unobserved_row_is_flagged_not_filled() {
        let c = tally(&[seq(&[0, 1])], 2).unwrap();
        let m = estimate(&c, &ab(), Scaling::Stochastic).unwrap();
        assert_eq!(m.unobserved_states(), [1]);
        assert_eq!(m.matrix().row(1).sum(), 0.0);
    }

    #[test]
    fn alternating_is_deterministic() {
        let c = tally(&[seq(&[0, 1, 0, 1, 0])], 2).unwrap();
        let m = estimate(&c, &ab(), Scaling::Stochastic).unwrap();
        assert_eq!((m.weight(0, 1), m.weight(1, 0)), (1.0, 1.0));
        assert_eq!(m.initial(), [1.0, 0.0]);
    }

    #[test]
    fn frequency_and_count_scalings() {
        let c = tally(&[seq(&[0, 0, 1, 0])], 2).unwrap();
        let f = estimate(&c, &ab(), Scaling::Frequency).unwrap();
        assert!((f.matrix().sum() - 1.0).abs() < 1e-15);
        let k = estimate(&c, &ab(), Scaling::Count).unwrap();
        assert_eq!(k.matrix(), &c.to_matrix());
    }

    #[test]
    fn pseudocount_fills_rows() {
        let c = tally(&[seq(&[0, 1])], 2).unwrap();
        let m = estimate_smoothed(&c, &ab(), Scaling::Stochastic, 1.0).unwrap();
        assert_eq!(m.weight(1, 0), 0.5);
        assert_eq!(m.weight(0, 1), 2.0 / 3.0);
        assert!(estimate_smoothed(&c, &ab(), Scaling::Count, 1.0).is_err());
    }

    #[test]
    fn likelihood_cases() {
        let model = TransitionModel::new(
            ab(),
            vec![1.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            Scaling::Stochastic,
        )
        .unwrap();
        assert_eq!(log_likelihood(&model, &[seq(&[0, 1])]).unwrap(), 0.0);
        assert_eq!(log_likelihood(&model, &[seq(&[0, 0])]).unwrap(), f64::NEG_INFINITY);

        let uniform = TransitionModel::new(ab(), vec![0.5, 0.5], DMatrix::from_element(2, 2, 0.5), Scaling::Stochastic)
            .unwrap();
        let ll = log_likelihood(&uniform, &[seq(&[0, 1, 1])]).unwrap();
        assert!((ll - 3.0 * 0.5f64.ln()).abs() < 1e-15);

        let counts = TransitionModel::from_parts(ab(), vec![1.0, 1.0], DMatrix::from_element(2, 2, 3.0), Scaling::Count);
        assert!(matches!(log_likelihood(&counts, &[seq(&[0])]), Err(TnaError::Scaling { .. })));
    }

    #[test]
    fn simulate_is_deterministic() {
        let model = TransitionModel::new(ab(), vec![0.5, 0.5], DMatrix::from_element(2, 2, 0.5), Scaling::Stochastic)
            .unwrap();
        let a = simulate(&model, 50, 20, 7).unwrap();
        let b = simulate(&model, 50, 20, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate(&model, 50, 20, 8).unwrap());
    }

    #[test]
    fn simulate_identity_and_truncation() {
        let stay = TransitionModel::new(ab(), vec![1.0, 0.0], DMatrix::identity(2, 2), Scaling::Stochastic).unwrap();
        for s in simulate(&stay, 10, 15, 1).unwrap() {
            assert_eq!(s.states, vec![0; 15]);
        }
        let absorbing = TransitionModel::new(
            ab(),
            vec![1.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            Scaling::Stochastic,
        )
        .unwrap();
        for s in simulate(&absorbing, 5, 10, 1).unwrap() {
            assert_eq!(s.states, vec![0, 1]);
        }
    }

    #[test]
    fn model_validation() {
        assert!(TransitionModel::new(ab(), vec![1.0, 0.0], DMatrix::from_element(2, 2, 0.7), Scaling::Stochastic).is_err());
        assert!(TransitionModel::new(ab(), vec![1.0], DMatrix::identity(2, 2), Scaling::Stochastic).is_err());
        assert!(TransitionModel::new(ab(), vec![1.0, 0.0], DMatrix::from_element(2, 2, -0.5), Scaling::Count).is_err());
    }
}
