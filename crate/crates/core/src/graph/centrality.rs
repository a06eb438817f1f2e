use nalgebra::DMatrix;
use serde::Serialize;

use super::TransitionNetwork;
use crate::error::{Result, TnaError};
use crate::markov::Scaling;
use crate::par;

/// Column sums excluding the diagonal.
pub fn in_strength(net: &TransitionNetwork) -> Vec<f64> {
    let n = net.n_nodes();
    (0..n)
        .map(|v| (0..n).filter(|&u| u != v).map(|u| net.weight(u, v)).sum())
        .collect()
}

/// Row sums excluding the diagonal. For stochastic rows this is `1 - p_ii`,
/// i.e. constant 1 without self-loops, so it is mainly useful as a
/// diagnostic or under count/frequency scaling.
pub fn out_strength(net: &TransitionNetwork) -> Vec<f64> {
    let n = net.n_nodes();
    (0..n)
        .map(|u| (0..n).filter(|&v| v != u).map(|v| net.weight(u, v)).sum())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomWalkBetweenness {
    /// Sum over ordered pairs of expected intermediate visits.
    pub raw: Vec<f64>,
    /// `raw` divided by `contributing_pairs` (zero when there are none).
    pub normalized: Vec<f64>,
    /// Ordered `(source, target)` pairs with the target reachable.
    pub contributing_pairs: usize,
}

/// States other than `target` with a directed path of positive weights to it.
fn can_reach(net: &TransitionNetwork, target: usize) -> Vec<bool> {
    let n = net.n_nodes();
    let mut reach = vec![false; n];
    let mut stack = vec![target];
    let mut seen = vec![false; n];
    seen[target] = true;
    while let Some(v) = stack.pop() {
        for u in 0..n {
            if !seen[u] && net.has_edge(u, v) {
                seen[u] = true;
                reach[u] = true;
                stack.push(u);
            }
        }
    }
    reach
}

/// Random-walk betweenness on the absorbing chain.
///
/// For every target `t` the chain is restricted to the states that can reach
/// `t`, and `N = (I - Q_t)^-1` gives the expected number of visits to each
/// state before absorption. `N[s][v]` is credited to `v` for every source
/// `s != v`. Self-loops are kept and add to visit counts. A walk that steps
/// into a state unable to reach `t` stops contributing at that point.
pub fn betweenness_rw(net: &TransitionNetwork) -> Result<RandomWalkBetweenness> {
    net.model().require_scaling(Scaling::Stochastic)?;
    let n = net.n_nodes();
    let per_target = par::map_range(n, |t| -> Result<(Vec<f64>, usize)> {
        let reach = can_reach(net, t);
        let transient: Vec<usize> = (0..n).filter(|&s| reach[s]).collect();
        let m = transient.len();
        let mut acc = vec![0.0; n];
        if m == 0 {
            return Ok((acc, 0));
        }
        let i_minus_q = DMatrix::from_fn(m, m, |a, b| {
            let delta = if a == b { 1.0 } else { 0.0 };
            delta - net.weight(transient[a], transient[b])
        });
        let fundamental = i_minus_q.lu().try_inverse().ok_or_else(|| {
            TnaError::Singular(format!(
                "I - Q is singular for target `{}`",
                net.labels()[t]
            ))
        })?;
        if fundamental.iter().any(|v| !v.is_finite() || *v < -1e-9) {
            return Err(TnaError::Singular(format!(
                "fundamental matrix is ill-conditioned for target `{}`",
                net.labels()[t]
            )));
        }
        for a in 0..m {
            for b in 0..m {
                if a != b {
                    acc[transient[b]] += fundamental[(a, b)].max(0.0);
                }
            }
        }
        Ok((acc, m))
    });
    let mut raw = vec![0.0; n];
    let mut pairs = 0;
    for r in per_target {
        let (acc, m) = r?;
        for (x, a) in raw.iter_mut().zip(acc) {
            *x += a;
        }
        pairs += m;
    }
    let normalized = raw
        .iter()
        .map(|&b| if pairs > 0 { b / pairs as f64 } else { 0.0 })
        .collect();
    Ok(RandomWalkBetweenness {
        raw,
        normalized,
        contributing_pairs: pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::net;
    use super::*;

    #[test]
    fn strengths() {
        let swap = net(&["A", "B"], &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(in_strength(&swap), vec![1.0, 1.0]);
        let star = net(
            &["H", "a", "b", "c"],
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        );
        assert_eq!(in_strength(&star)[0], 3.0);
        let loops = net(&["A", "B"], &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(in_strength(&loops), vec![0.0, 0.0]);
    }

    #[test]
    fn out_strength_cases() {
        let m = net(&["A", "B", "C"], &[0.0, 0.5, 0.5, 0.2, 0.3, 0.5, 0.0, 0.0, 0.0]);
        let o = out_strength(&m);
        assert_eq!(o[0], 1.0);
        assert!((o[1] - 0.7).abs() < 1e-15);
        assert_eq!(o[2], 0.0);
    }

    #[test]
    fn chain_betweenness() {
        let chain = net(&["A", "B", "C"], &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let b = betweenness_rw(&chain).unwrap();
        assert_eq!(b.raw, vec![0.0, 1.0, 0.0]);
        assert_eq!(b.contributing_pairs, 3);
    }

    #[test]
    fn two_states_have_no_intermediates() {
        let m = net(&["A", "B"], &[0.3, 0.7, 0.6, 0.4]);
        assert_eq!(betweenness_rw(&m).unwrap().raw, vec![0.0, 0.0]);
    }

    #[test]
    fn self_loop_adds_visits() {
        // A -> B, B stays with 0.5 and moves to C with 0.5: two expected
        // visits to B on the way from A to C; the cycle gives A and C one each.
        let m = net(&["A", "B", "C"], &[0.0, 1.0, 0.0, 0.0, 0.5, 0.5, 1.0, 0.0, 0.0]);
        let b = betweenness_rw(&m).unwrap();
        for (got, want) in b.raw.iter().zip([1.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{:?}", b.raw);
        }
    }

    #[test]
    fn requires_stochastic() {
        let m = net(&["A", "B"], &[0.3, 0.7, 0.6, 0.4]);
        let counts = TransitionNetwork::new(crate::markov::TransitionModel::from_parts(
            m.model().alphabet().clone(),
            vec![1.0, 0.0],
            m.model().matrix().clone(),
            Scaling::Count,
        ));
        assert!(betweenness_rw(&counts).is_err());
    }
}
