use serde::Serialize;

use super::TransitionNetwork;
use crate::error::{Result, TnaError};

/// Mutual transitions between two distinct states, both at or above the
/// threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DyadPattern {
    pub a: usize,
    pub b: usize,
    pub weight_ab: f64,
    pub weight_ba: f64,
    pub threshold: f64,
}

impl DyadPattern {
    pub fn strength(&self) -> f64 {
        self.weight_ab.min(self.weight_ba)
    }
}

/// Set of states whose every ordered pair has weight at or above the
/// threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliquePattern {
    /// Ascending node indices.
    pub nodes: Vec<usize>,
    /// All ordered pairs `(from, to, weight)` within the clique.
    pub weights: Vec<(usize, usize, f64)>,
    pub threshold: f64,
}

fn mutual(net: &TransitionNetwork, a: usize, b: usize, threshold: f64) -> bool {
    a != b && net.weight(a, b) >= threshold && net.weight(b, a) >= threshold
}

/// All unordered pairs with both directions `>= threshold`, strongest first
/// (by the weaker direction), ties in index order.
pub fn find_dyads(net: &TransitionNetwork, threshold: f64) -> Vec<DyadPattern> {
    let n = net.n_nodes();
    let mut out: Vec<DyadPattern> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|&(a, b)| mutual(net, a, b, threshold))
        .map(|(a, b)| DyadPattern {
            a,
            b,
            weight_ab: net.weight(a, b),
            weight_ba: net.weight(b, a),
            threshold,
        })
        .collect();
    out.sort_by(|x, y| {
        y.strength()
            .total_cmp(&x.strength())
            .then((x.a, x.b).cmp(&(y.a, y.b)))
    });
    out
}

/// Cliques of exactly `size` nodes in the thresholded mutual graph, built by
/// extending smaller cliques with higher-indexed neighbours. Output is in
/// lexicographic node order.
pub fn find_cliques(net: &TransitionNetwork, size: usize, threshold: f64) -> Result<Vec<CliquePattern>> {
    if size < 2 {
        return Err(TnaError::invalid(format!("clique size must be >= 2, got {size}")));
    }
    if threshold.is_nan() {
        return Err(TnaError::invalid("clique threshold is NaN"));
    }
    let n = net.n_nodes();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|a| (0..n).map(|b| mutual(net, a, b, threshold)).collect())
        .collect();
    let mut found = Vec::new();
    let mut current = Vec::with_capacity(size);
    extend(&adj, size, 0, &mut current, &mut found);
    Ok(found
        .into_iter()
        .map(|nodes| {
            let weights = nodes
                .iter()
                .flat_map(|&a| nodes.iter().map(move |&b| (a, b)))
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (a, b, net.weight(a, b)))
                .collect();
            CliquePattern {
                nodes,
                weights,
                threshold,
            }
        })
        .collect())
}

fn extend(adj: &[Vec<bool>], size: usize, from: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if current.len() == size {
        out.push(current.clone());
        return;
    }
    let needed = size - current.len();
    for v in from..adj.len() {
        if adj.len() - v < needed {
            break;
        }
        if current.iter().all(|&u| adj[u][v]) {
            current.push(v);
            extend(adj, size, v + 1, current, out);
            current.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::net;
    use super::*;

    #[test]
    fn dyad_reports_both_weights() {
        let m = net(&["cohesion", "emotion"], &[0.55, 0.33, 0.12, 0.88]);
        let d = find_dyads(&m, 0.1);
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].weight_ab, d[0].weight_ba), (0.33, 0.12));
    }

    #[test]
    fn one_weak_direction_means_no_dyad() {
        let m = net(&["a", "b"], &[0.7, 0.3, 0.05, 0.95]);
        assert!(find_dyads(&m, 0.1).is_empty());
    }

    #[test]
    fn threshold_is_inclusive() {
        let m = net(&["exploring", "emotion"], &[0.9, 0.1, 0.1, 0.9]);
        assert_eq!(find_dyads(&m, 0.1).len(), 1);
    }

    #[test]
    fn dyads_sorted_by_weaker_direction() {
        let m = net(
            &["a", "b", "c"],
            &[0.0, 0.5, 0.5, 0.2, 0.0, 0.8, 0.6, 0.4, 0.0],
        );
        let d = find_dyads(&m, 0.1);
        let pairs: Vec<(usize, usize)> = d.iter().map(|p| (p.a, p.b)).collect();
        assert_eq!(pairs, vec![(0, 2), (1, 2), (0, 1)]);
    }

    #[test]
    fn triangle_cliques() {
        let full = net(&["a", "b", "c"], &[0.88, 0.06, 0.06, 0.06, 0.88, 0.06, 0.06, 0.06, 0.88]);
        let c = find_cliques(&full, 3, 0.05).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].nodes, vec![0, 1, 2]);
        assert_eq!(c[0].weights.len(), 6);
        let broken = net(&["a", "b", "c"], &[0.88, 0.06, 0.06, 0.04, 0.90, 0.06, 0.06, 0.06, 0.88]);
        assert!(find_cliques(&broken, 3, 0.05).unwrap().is_empty());
    }

    #[test]
    fn size_two_cliques_are_dyads() {
        let m = net(&["a", "b", "c"], &[0.0, 0.5, 0.5, 0.2, 0.0, 0.8, 0.6, 0.4, 0.0]);
        assert_eq!(find_cliques(&m, 2, 0.1).unwrap().len(), find_dyads(&m, 0.1).len());
        assert!(find_cliques(&m, 1, 0.1).is_err());
    }
}
