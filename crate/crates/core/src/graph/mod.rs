//! Transition models viewed as weighted directed networks.

mod centrality;
mod patterns;
mod spinglass;

pub use centrality::{betweenness_rw, in_strength, out_strength, RandomWalkBetweenness};
pub use patterns::{find_cliques, find_dyads, CliquePattern, DyadPattern};
pub use spinglass::{communities_spinglass, hamiltonian, CommunityAssignment, SpinGlassParams};

use nalgebra::DMatrix;

use crate::error::{Result, TnaError};
use crate::markov::TransitionModel;
use crate::sequence::Alphabet;

/// A [`TransitionModel`] read as a graph: edge `(i, j)` exists iff
/// `matrix[i][j] > 0`, self-loops included.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionNetwork {
    model: TransitionModel,
}

impl TransitionNetwork {
    pub fn new(model: TransitionModel) -> Self {
        TransitionNetwork { model }
    }

    pub fn model(&self) -> &TransitionModel {
        &self.model
    }

    pub fn into_model(self) -> TransitionModel {
        self.model
    }

    pub fn n_nodes(&self) -> usize {
        self.model.n_states()
    }

    pub fn labels(&self) -> &[String] {
        self.model.alphabet().labels()
    }

    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.model.weight(from, to)
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.weight(from, to) > 0.0
    }

    /// Edges `(from, to, weight)` in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n_nodes();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter_map(|(i, j)| {
                let w = self.weight(i, j);
                (w > 0.0).then_some((i, j, w))
            })
            .collect()
    }
}

impl From<TransitionModel> for TransitionNetwork {
    fn from(model: TransitionModel) -> Self {
        TransitionNetwork::new(model)
    }
}

/// Elementwise `A - B`; positive entries favour the first group.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtractionNetwork {
    pub alphabet: Alphabet,
    pub delta: DMatrix<f64>,
    pub groups: (String, String),
}

pub fn subtract(
    a: &TransitionNetwork,
    b: &TransitionNetwork,
    labels: (&str, &str),
) -> Result<SubtractionNetwork> {
    a.model().alphabet().ensure_same(b.model().alphabet())?;
    if a.model().scaling() != b.model().scaling() {
        return Err(TnaError::Scaling {
            expected: a.model().scaling().to_string(),
            found: b.model().scaling().to_string(),
        });
    }
    Ok(SubtractionNetwork {
        alphabet: a.model().alphabet().clone(),
        delta: a.model().matrix() - b.model().matrix(),
        groups: (labels.0.to_string(), labels.1.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::Scaling;

    pub(crate) fn net(labels: &[&str], rows: &[f64]) -> TransitionNetwork {
        let n = labels.len();
        let alphabet = Alphabet::new(labels.iter().copied()).unwrap();
        let initial = vec![1.0 / n as f64; n];
        TransitionNetwork::new(TransitionModel::from_parts(
            alphabet,
            initial,
            DMatrix::from_row_slice(n, n, rows),
            Scaling::Stochastic,
        ))
    }

    #[test]
    fn subtraction_is_antisymmetric() {
        let a = net(&["x", "y"], &[0.2, 0.8, 0.5, 0.5]);
        let b = net(&["x", "y"], &[0.6, 0.4, 0.1, 0.9]);
        let ab = subtract(&a, &b, ("a", "b")).unwrap();
        let ba = subtract(&b, &a, ("b", "a")).unwrap();
        assert_eq!(ab.delta, -ba.delta);
        assert!((ab.delta[(0, 1)] - 0.4).abs() < 1e-15);
        assert!(subtract(&a, &a, ("a", "a")).unwrap().delta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn subtraction_alphabet_mismatch() {
        let a = net(&["x", "y"], &[0.2, 0.8, 0.5, 0.5]);
        let b = net(&["x", "z"], &[0.2, 0.8, 0.5, 0.5]);
        let err = subtract(&a, &b, ("a", "b")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('y') && msg.contains('z'), "{msg}");
    }

    #[test]
    fn edges_skip_zero_weights() {
        let a = net(&["x", "y"], &[0.0, 1.0, 0.5, 0.5]);
        assert_eq!(a.edges(), vec![(0, 1, 1.0), (1, 0, 0.5), (1, 1, 0.5)]);
    }
}
