//! Potts-model community detection by simulated annealing.
//!
//! Minimises the directed weighted Hamiltonian
//! `H = -sum_{i != j} (w_ij - gamma * kout_i * kin_j / W) * [c_i == c_j]`
//! where strengths and `W` exclude self-loops.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::TransitionNetwork;
use crate::error::{Result, TnaError};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpinGlassParams {
    pub gamma: f64,
    pub seed: u64,
    pub start_temperature: f64,
    pub cooling_factor: f64,
    pub sweeps_per_temperature: usize,
    pub stop_temperature: f64,
    /// Upper bound on the number of communities; defaults to the node count.
    pub spins: Option<usize>,
    /// Independent annealing runs; the lowest energy wins.
    pub starts: usize,
}

impl Default for SpinGlassParams {
    fn default() -> Self {
        SpinGlassParams {
            gamma: 1.0,
            seed: 0,
            start_temperature: 1.0,
            cooling_factor: 0.99,
            sweeps_per_temperature: 50,
            stop_temperature: 1e-3,
            spins: None,
            starts: 1,
        }
    }
}

impl SpinGlassParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TnaError::invalid(m));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be finite and >= 0");
        }
        if !(self.start_temperature > self.stop_temperature && self.stop_temperature > 0.0) {
            return bad("annealing needs start_temperature > stop_temperature > 0");
        }
        if !(self.cooling_factor > 0.0 && self.cooling_factor < 1.0) {
            return bad("cooling_factor must be in (0,1)");
        }
        if self.sweeps_per_temperature == 0 || self.starts == 0 || self.spins == Some(0) {
            return bad("sweeps_per_temperature, starts and spins must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityAssignment {
    /// Community id per node, contiguous from 0 in order of first node.
    pub membership: Vec<usize>,
    pub n_communities: usize,
    pub hamiltonian: f64,
    pub params: SpinGlassParams,
    /// Total sweeps performed per start.
    pub n_iterations: usize,
}

/// Pairwise couplings `a_ij + a_ji` with `a_ij = w_ij - gamma * p_ij`.
fn couplings(net: &TransitionNetwork, gamma: f64) -> Vec<Vec<f64>> {
    let n = net.n_nodes();
    let kout = super::out_strength(net);
    let kin = super::in_strength(net);
    let total: f64 = kout.iter().sum();
    let a = |i: usize, j: usize| {
        let expected = if total > 0.0 { kout[i] * kin[j] / total } else { 0.0 };
        net.weight(i, j) - gamma * expected
    };
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { a(i, j) + a(j, i) })
                .collect()
        })
        .collect()
}

/// Hamiltonian of a given partition (lower is better).
pub fn hamiltonian(net: &TransitionNetwork, membership: &[usize], gamma: f64) -> f64 {
    let j = couplings(net, gamma);
    energy(&j, membership)
}

fn energy(j: &[Vec<f64>], spins: &[usize]) -> f64 {
    let n = spins.len();
    let mut h = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            if spins[a] == spins[b] {
                h -= j[a][b];
            }
        }
    }
    h
}

fn relabel(spins: &[usize]) -> (Vec<usize>, usize) {
    let mut map: Vec<Option<usize>> = vec![None; spins.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    let out = spins
        .iter()
        .map(|&s| {
            *map[s].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    (out, next)
}

/// Field on node `i`: summed coupling to each spin state.
fn local_field(j: &[Vec<f64>], spins: &[usize], i: usize, q: usize, field: &mut [f64]) {
    field[..q].iter_mut().for_each(|f| *f = 0.0);
    for (k, &s) in spins.iter().enumerate() {
        if k != i {
            field[s] += j[i][k];
        }
    }
}

fn anneal(j: &[Vec<f64>], q: usize, p: &SpinGlassParams, seed: u64) -> (Vec<usize>, f64, usize) {
    let n = j.len();
    let mut rng = par::rng(seed);
    let mut spins: Vec<usize> = (0..n).map(|_| rng.random_range(0..q)).collect();
    let mut h = energy(j, &spins);
    let mut best = (spins.clone(), h);
    let mut order: Vec<usize> = (0..n).collect();
    let mut field = vec![0.0; q];
    let mut probs = vec![0.0; q];
    let mut sweeps = 0;
    let mut t = p.start_temperature;
    while t > p.stop_temperature {
        for _ in 0..p.sweeps_per_temperature {
            order.shuffle(&mut rng);
            for &i in &order {
                local_field(j, &spins, i, q, &mut field);
                let fmax = field.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (pr, &f) in probs.iter_mut().zip(&field) {
                    *pr = ((f - fmax) / t).exp();
                    z += *pr;
                }
                let mut u = rng.random::<f64>() * z;
                let mut new = q - 1;
                for (s, &pr) in probs.iter().enumerate() {
                    if u < pr {
                        new = s;
                        break;
                    }
                    u -= pr;
                }
                let old = spins[i];
                if new != old {
                    h -= field[new] - field[old];
                    spins[i] = new;
                    if h < best.1 - 1e-12 {
                        best = (spins.clone(), h);
                    }
                }
            }
            sweeps += 1;
        }
        t *= p.cooling_factor;
    }
    // Zero-temperature quench from the best state visited.
    let mut spins = best.0;
    loop {
        let mut moved = false;
        for i in 0..n {
            local_field(j, &spins, i, q, &mut field);
            let old = spins[i];
            let (arg, &fbest) = field
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("at least one spin");
            if fbest > field[old] + 1e-12 {
                spins[i] = arg;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    let h = energy(j, &spins);
    (spins, h, sweeps)
}

pub fn communities_spinglass(net: &TransitionNetwork, params: &SpinGlassParams) -> Result<CommunityAssignment> {
    params.validate()?;
    let n = net.n_nodes();
    if n == 0 {
        return Err(TnaError::Empty("network has no nodes".into()));
    }
    if net.model().matrix().iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(TnaError::invalid("spin-glass needs finite non-negative weights"));
    }
    let j = couplings(net, params.gamma);
    let q = params.spins.unwrap_or(n).max(1);
    let runs = par::map_range(params.starts, |r| anneal(&j, q, params, par::sub_seed(params.seed, r as u64)));
    let (spins, h, sweeps) = runs
        .into_iter()
        .reduce(|best, cur| if cur.1 < best.1 - 1e-12 { cur } else { best })
        .expect("starts >= 1");
    let (membership, n_communities) = relabel(&spins);
    Ok(CommunityAssignment {
        membership,
        n_communities,
        hamiltonian: h,
        params: params.clone(),
        n_iterations: sweeps,
    })
}
