//! Mixture Markov models with covariate-dependent cluster priors.
//!
//! Each cluster `k` has its own initial distribution and transition matrix.
//! Prior membership follows a multinomial logit in the covariates `z` with
//! the first cluster as reference: `pi_k(z) = softmax(beta_k . [1, z])`,
//! `beta_0 = 0`. Parameters are fitted by EM from many random starts; the
//! covariate coefficients are updated inside each M-step by Newton-Raphson
//! with step halving, so the observed log-likelihood never decreases.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, TnaError};
use crate::graph::TransitionNetwork;
use crate::markov::{Scaling, TransitionModel};
use crate::par;
use crate::sequence::{Alphabet, StateSequence};
use crate::stats::log_sum_exp;

/// Covariate design: one row per sequence, without the intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Covariates {
    /// Collects the covariates carried by the sequences. Returns `None` when
    /// no sequence has any; fails when names differ between sequences.
    pub fn from_sequences(sequences: &[StateSequence]) -> Result<Option<Self>> {
        let Some(first) = sequences.first() else {
            return Ok(None);
        };
        let names: Vec<String> = first.covariates.iter().map(|(n, _)| n.clone()).collect();
        for s in sequences {
            if s.covariates.len() != names.len() || s.covariates.iter().zip(&names).any(|((a, _), b)| a != b) {
                return Err(TnaError::invalid(format!(
                    "sequence {}/{} has covariates inconsistent with the first sequence",
                    s.unit_id, s.session_id
                )));
            }
        }
        if names.is_empty() {
            return Ok(None);
        }
        let rows = sequences
            .iter()
            .map(|s| s.covariates.iter().map(|(_, v)| *v).collect())
            .collect();
        Ok(Some(Covariates { names, rows }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Stop when the relative log-likelihood improvement drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Newton-Raphson iterations for the prior coefficients per M-step.
    pub newton_steps: usize,
    /// A cluster whose posterior mass falls below this many sequences makes
    /// the run degenerate.
    pub min_cluster_mass: f64,
    /// Restarts within this log-likelihood distance of the best count as
    /// having reached it.
    pub best_tolerance: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            restarts: 500,
            seed: 0,
            tolerance: 1e-8,
            max_iterations: 1000,
            newton_steps: 25,
            min_cluster_mass: 1.0,
            best_tolerance: 1e-4,
        }
    }
}

impl EmOptions {
    fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iterations == 0 {
            return Err(TnaError::invalid("restarts and max_iterations must be >= 1"));
        }
        if !(self.tolerance >= 0.0) || !(self.min_cluster_mass >= 0.0) || !(self.best_tolerance >= 0.0) {
            return Err(TnaError::invalid("EM tolerances must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub alphabet: Alphabet,
    pub components: Vec<TransitionModel>,
    /// `(K-1) x (d+1)` coefficients for clusters `1..K`, intercept first.
    pub beta: DMatrix<f64>,
    pub covariate_names: Vec<String>,
}

impl MixtureModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Prior cluster probabilities for one covariate vector (no intercept).
    pub fn priors(&self, z: &[f64]) -> Vec<f64> {
        let x = design_row(z);
        log_priors(&self.beta, self.k(), &x).iter().map(|v| v.exp()).collect()
    }

    /// Observed-data log-likelihood.
    pub fn log_likelihood(&self, sequences: &[StateSequence], covariates: Option<&Covariates>) -> Result<f64> {
        let data = Data::new(sequences, self.alphabet.len(), covariates)?;
        if data.design[0].len() != self.beta.ncols() && self.k() > 1 {
            return Err(TnaError::invalid("covariate count does not match the model"));
        }
        let comp = component_loglik(&data, &Params::from_model(self));
        Ok(data
            .design
            .iter()
            .zip(&comp)
            .map(|(x, c)| {
                let lp = log_priors(&self.beta, self.k(), x);
                let terms: Vec<f64> = lp.iter().zip(c).map(|(a, b)| a + b).collect();
                log_sum_exp(&terms)
            })
            .sum())
    }

    /// Free parameters: coefficients plus every non-structural-zero initial
    /// and transition probability, less one per non-empty distribution.
    pub fn n_parameters(&self) -> usize {
        let free = |v: &mut dyn Iterator<Item = f64>| v.filter(|&p| p > 0.0).count().saturating_sub(1);
        let mut p = self.beta.len();
        for c in &self.components {
            p += free(&mut c.initial().iter().copied());
            for i in 0..c.n_states() {
                p += free(&mut c.matrix().row(i).iter().copied());
            }
        }
        p
    }

    /// Reorders clusters so that new cluster `k` is old cluster `perm[k]`,
    /// re-expressing the coefficients against the new reference cluster.
    pub fn permuted(&self, perm: &[usize]) -> Result<MixtureModel> {
        let k = self.k();
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..k).collect::<Vec<_>>() {
            return Err(TnaError::invalid("not a permutation of the clusters"));
        }
        let d1 = self.beta.ncols();
        let full = |c: usize, a: usize| if c == 0 { 0.0 } else { self.beta[(c - 1, a)] };
        let beta = DMatrix::from_fn(k - 1, d1, |r, a| full(perm[r + 1], a) - full(perm[0], a));
        Ok(MixtureModel {
            alphabet: self.alphabet.clone(),
            components: perm.iter().map(|&p| self.components[p].clone()).collect(),
            beta,
            covariate_names: self.covariate_names.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: MixtureModel,
    pub log_likelihood: f64,
    pub bic: f64,
    pub n_parameters: usize,
    pub n_sequences: usize,
    /// Per-sequence posterior cluster probabilities.
    pub posteriors: Vec<Vec<f64>>,
    /// Most probable cluster per sequence.
    pub assignments: Vec<usize>,
    pub restarts: usize,
    pub restarts_converged_to_best: usize,
    pub restarts_degenerate: usize,
    /// Sub-seed index of the winning restart.
    pub best_restart: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after every E-step of the winning restart.
    pub trace: Vec<f64>,
    component_loglik: Vec<Vec<f64>>,
    design: Vec<Vec<f64>>,
}

fn design_row(z: &[f64]) -> Vec<f64> {
    std::iter::once(1.0).chain(z.iter().copied()).collect()
}

struct Data {
    n_states: usize,
    first: Vec<usize>,
    /// Aggregated transitions `(from, to, count)` per sequence.
    trans: Vec<Vec<(usize, usize, f64)>>,
    design: Vec<Vec<f64>>,
}

impl Data {
    fn new(sequences: &[StateSequence], n_states: usize, covariates: Option<&Covariates>) -> Result<Self> {
        if sequences.is_empty() {
            return Err(TnaError::Empty("no sequences to cluster".into()));
        }
        let mut first = Vec::with_capacity(sequences.len());
        let mut trans = Vec::with_capacity(sequences.len());
        for (i, s) in sequences.iter().enumerate() {
            if s.states.is_empty() || s.states.iter().any(|&x| x >= n_states) {
                return Err(TnaError::invalid(format!("sequence {i} is empty or outside the alphabet")));
            }
            first.push(s.states[0]);
            let mut pairs: Vec<(usize, usize)> = s.states.windows(2).map(|w| (w[0], w[1])).collect();
            pairs.sort_unstable();
            let mut agg: Vec<(usize, usize, f64)> = Vec::new();
            for (a, b) in pairs {
                match agg.last_mut() {
                    Some(last) if last.0 == a && last.1 == b => last.2 += 1.0,
                    _ => agg.push((a, b, 1.0)),
                }
            }
            trans.push(agg);
        }
        let design = match covariates {
            Some(c) => {
                if c.rows.len() != sequences.len() {
                    return Err(TnaError::invalid(format!(
                        "{} covariate rows for {} sequences",
                        c.rows.len(),
                        sequences.len()
                    )));
                }
                if c.rows.iter().any(|r| r.len() != c.names.len() || r.iter().any(|v| !v.is_finite())) {
                    return Err(TnaError::invalid("covariate rows must be finite and match the names"));
                }
                c.rows.iter().map(|r| design_row(r)).collect()
            }
            None => vec![vec![1.0]; sequences.len()],
        };
        Ok(Data {
            n_states,
            first,
            trans,
            design,
        })
    }

    fn n(&self) -> usize {
        self.first.len()
    }

    fn d1(&self) -> usize {
        self.design[0].len()
    }
}

#[derive(Debug, Clone)]
struct Params {
    initial: Vec<Vec<f64>>,
    trans: Vec<DMatrix<f64>>,
    beta: DMatrix<f64>,
}

impl Params {
    fn from_model(m: &MixtureModel) -> Self {
        Params {
            initial: m.components.iter().map(|c| c.initial().to_vec()).collect(),
            trans: m.components.iter().map(|c| c.matrix().clone()).collect(),
            beta: m.beta.clone(),
        }
    }

    fn k(&self) -> usize {
        self.initial.len()
    }
}

/// Log prior probabilities for one design row.
fn log_priors(beta: &DMatrix<f64>, k: usize, x: &[f64]) -> Vec<f64> {
    let mut eta = vec![0.0; k];
    for c in 1..k {
        eta[c] = (0..x.len()).map(|a| beta[(c - 1, a)] * x[a]).sum();
    }
    let lse = log_sum_exp(&eta);
    eta.iter().map(|e| e - lse).collect()
}

fn component_loglik(data: &Data, p: &Params) -> Vec<Vec<f64>> {
    let log_init: Vec<Vec<f64>> = p.initial.iter().map(|v| v.iter().map(|x| x.ln()).collect()).collect();
    let log_trans: Vec<DMatrix<f64>> = p.trans.iter().map(|m| m.map(f64::ln)).collect();
    (0..data.n())
        .map(|i| {
            (0..p.k())
                .map(|k| {
                    let mut ll = log_init[k][data.first[i]];
                    for &(a, b, c) in &data.trans[i] {
                        ll += c * log_trans[k][(a, b)];
                    }
                    ll
                })
                .collect()
        })
        .collect()
}

struct EStep {
    log_likelihood: f64,
    resp: Vec<Vec<f64>>,
    comp: Vec<Vec<f64>>,
}

fn e_step(data: &Data, p: &Params) -> EStep {
    let comp = component_loglik(data, p);
    let k = p.k();
    let mut ll = 0.0;
    let resp = data
        .design
        .iter()
        .zip(&comp)
        .map(|(x, c)| {
            let lp = log_priors(&p.beta, k, x);
            let joint: Vec<f64> = lp.iter().zip(c).map(|(a, b)| a + b).collect();
            let norm = log_sum_exp(&joint);
            ll += norm;
            if norm == f64::NEG_INFINITY {
                vec![1.0 / k as f64; k]
            } else {
                joint.iter().map(|j| (j - norm).exp()).collect()
            }
        })
        .collect();
    EStep {
        log_likelihood: ll,
        resp,
        comp,
    }
}

/// Weighted multinomial-logit objective `sum_i sum_k w_ik log pi_ik`.
fn prior_objective(beta: &DMatrix<f64>, k: usize, design: &[Vec<f64>], resp: &[Vec<f64>]) -> f64 {
    design
        .iter()
        .zip(resp)
        .map(|(x, w)| {
            log_priors(beta, k, x)
                .iter()
                .zip(w)
                .map(|(lp, wk)| if *wk > 0.0 { wk * lp } else { 0.0 })
                .sum::<f64>()
        })
        .sum()
}

fn unflatten(theta: &DVector<f64>, k: usize, d1: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k - 1, d1, |r, a| theta[r * d1 + a])
}

/// Newton-Raphson with step halving on the prior coefficients.
fn update_beta(beta0: &DMatrix<f64>, k: usize, design: &[Vec<f64>], resp: &[Vec<f64>], steps: usize) -> DMatrix<f64> {
    if k < 2 {
        return beta0.clone();
    }
    let d1 = design[0].len();
    let np = (k - 1) * d1;
    let mut beta = beta0.clone();
    let mut f = prior_objective(&beta, k, design, resp);
    for _ in 0..steps {
        let mut grad = DVector::zeros(np);
        let mut info = DMatrix::zeros(np, np);
        for (x, w) in design.iter().zip(resp) {
            let pi: Vec<f64> = log_priors(&beta, k, x).iter().map(|v| v.exp()).collect();
            for c in 1..k {
                let r = w[c] - pi[c];
                for a in 0..d1 {
                    grad[(c - 1) * d1 + a] += r * x[a];
                }
                for l in 1..k {
                    let h = pi[c] * (if c == l { 1.0 } else { 0.0 } - pi[l]);
                    if h == 0.0 {
                        continue;
                    }
                    for a in 0..d1 {
                        for b in 0..d1 {
                            info[((c - 1) * d1 + a, (l - 1) * d1 + b)] += h * x[a] * x[b];
                        }
                    }
                }
            }
        }
        if grad.amax() < 1e-12 * (1.0 + design.len() as f64) {
            break;
        }
        let direction = newton_direction(&info, &grad);
        let theta = DVector::from_fn(np, |i, _| beta[(i / d1, i % d1)]);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = unflatten(&(&theta + &direction * step), k, d1);
            let fc = prior_objective(&cand, k, design, resp);
            if fc.is_finite() && fc >= f {
                let gain = fc - f;
                beta = cand;
                f = fc;
                accepted = gain > 0.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    beta
}

fn newton_direction(info: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let scale = (info.trace() / info.nrows() as f64).abs().max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut m = info.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(grad);
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 100.0 };
    }
    grad / scale
}

fn m_step(data: &Data, resp: &[Vec<f64>], beta_prev: &DMatrix<f64>, newton_steps: usize) -> Option<Params> {
    let k = resp[0].len();
    let s = data.n_states;
    let mut initial = vec![vec![0.0; s]; k];
    let mut trans = vec![DMatrix::zeros(s, s); k];
    for (i, w) in resp.iter().enumerate() {
        for c in 0..k {
            if w[c] == 0.0 {
                continue;
            }
            initial[c][data.first[i]] += w[c];
            for &(a, b, n) in &data.trans[i] {
                trans[c][(a, b)] += w[c] * n;
            }
        }
    }
    for c in 0..k {
        let mass: f64 = initial[c].iter().sum();
        if !(mass > 0.0) {
            return None;
        }
        initial[c].iter_mut().for_each(|v| *v /= mass);
        trans[c] = crate::markov::row_normalize(&trans[c]);
    }
    let beta = update_beta(beta_prev, k, &data.design, resp, newton_steps);
    Some(Params { initial, trans, beta })
}

struct RunOutcome {
    params: Params,
    estep: EStep,
    trace: Vec<f64>,
    converged: bool,
    degenerate: Option<String>,
}

fn dirichlet_responsibilities(n: usize, k: usize, rng: &mut par::Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
        .collect()
}

fn cluster_masses(resp: &[Vec<f64>], k: usize) -> Vec<f64> {
    (0..k).map(|c| resp.iter().map(|w| w[c]).sum()).collect()
}

fn run_em(data: &Data, k: usize, opts: &EmOptions, seed: u64) -> RunOutcome {
    let mut rng = par::rng(seed);
    let resp = if k == 1 {
        vec![vec![1.0]; data.n()]
    } else {
        dirichlet_responsibilities(data.n(), k, &mut rng)
    };
    let beta0 = DMatrix::zeros(k.saturating_sub(1), data.d1());
    let degenerate = |params: Params, estep: EStep, trace: Vec<f64>, why: String| RunOutcome {
        params,
        estep,
        trace,
        converged: false,
        degenerate: Some(why),
    };
    let Some(mut params) = m_step(data, &resp, &beta0, opts.newton_steps) else {
        let p = Params {
            initial: vec![vec![0.0; data.n_states]; k],
            trans: vec![DMatrix::zeros(data.n_states, data.n_states); k],
            beta: beta0,
        };
        let e = EStep {
            log_likelihood: f64::NEG_INFINITY,
            resp,
            comp: Vec::new(),
        };
        return degenerate(p, e, Vec::new(), "empty cluster at initialisation".into());
    };
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut estep = e_step(data, &params);
    for _ in 0..opts.max_iterations {
        let ll = estep.log_likelihood;
        if !ll.is_finite() {
            return degenerate(params, estep, trace, "non-finite log-likelihood".into());
        }
        if let Some(&prev) = trace.last() {
            trace.push(ll);
            if (ll - prev) / prev.abs().max(f64::MIN_POSITIVE) < opts.tolerance {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        match m_step(data, &estep.resp, &params.beta, opts.newton_steps) {
            Some(p) => params = p,
            None => return degenerate(params, estep, trace, "cluster lost all posterior mass".into()),
        }
        estep = e_step(data, &params);
    }
    let masses = cluster_masses(&estep.resp, k);
    let degenerate_why = masses
        .iter()
        .position(|&m| m < opts.min_cluster_mass)
        .map(|c| format!("cluster {c} has posterior mass {:.3} < {}", masses[c], opts.min_cluster_mass));
    RunOutcome {
        params,
        estep,
        trace,
        converged,
        degenerate: degenerate_why,
    }
}

/// Fits a `k`-cluster mixture from `options.restarts` random starts and
/// returns the best non-degenerate run by log-likelihood.
pub fn fit_em(
    sequences: &[StateSequence],
    alphabet: &Alphabet,
    covariates: Option<&Covariates>,
    k: usize,
    options: &EmOptions,
) -> Result<FitResult> {
    options.validate()?;
    if k == 0 {
        return Err(TnaError::invalid("number of clusters must be >= 1"));
    }
    let data = Data::new(sequences, alphabet.len(), covariates)?;
    let runs = par::map_range(options.restarts, |r| run_em(&data, k, options, par::sub_seed(options.seed, r as u64)));
    let degenerate = runs.iter().filter(|r| r.degenerate.is_some()).count();
    let best_idx = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.degenerate.is_none())
        .fold(None::<usize>, |best, (i, r)| match best {
            Some(b) if runs[b].estep.log_likelihood >= r.estep.log_likelihood => Some(b),
            _ => Some(i),
        })
        .ok_or_else(|| {
            let why = runs.iter().find_map(|r| r.degenerate.clone()).unwrap_or_default();
            TnaError::Failed(format!("all {} restarts for K={k} were degenerate ({why})", options.restarts))
        })?;
    let best_ll = runs[best_idx].estep.log_likelihood;
    let reached = runs
        .iter()
        .filter(|r| r.degenerate.is_none() && r.estep.log_likelihood >= best_ll - options.best_tolerance)
        .count();
    let best = runs.into_iter().nth(best_idx).expect("index from enumerate");
    let model = MixtureModel {
        alphabet: alphabet.clone(),
        components: best
            .params
            .initial
            .iter()
            .zip(&best.params.trans)
            .map(|(init, m)| TransitionModel::from_parts(alphabet.clone(), init.clone(), m.clone(), Scaling::Stochastic))
            .collect(),
        beta: best.params.beta.clone(),
        covariate_names: covariates.map(|c| c.names.clone()).unwrap_or_default(),
    };
    let n_parameters = model.n_parameters();
    let n = data.n();
    let assignments = best
        .estep
        .resp
        .iter()
        .map(|w| {
            w.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap_or(0)
        })
        .collect();
    Ok(FitResult {
        log_likelihood: best_ll,
        bic: -2.0 * best_ll + n_parameters as f64 * (n as f64).ln(),
        n_parameters,
        n_sequences: n,
        posteriors: best.estep.resp,
        assignments,
        restarts: options.restarts,
        restarts_converged_to_best: reached,
        restarts_degenerate: degenerate,
        best_restart: best_idx,
        iterations: best.trace.len(),
        converged: best.converged,
        trace: best.trace,
        component_loglik: best.estep.comp,
        design: data.design,
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BicRow {
    pub k: usize,
    pub log_likelihood: Option<f64>,
    pub bic: Option<f64>,
    pub n_parameters: Option<usize>,
    /// Failure reason when the fit for this `k` failed.
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct KSelection {
    pub best: FitResult,
    /// One row per requested `k`, in request order.
    pub table: Vec<BicRow>,
}

/// Fits every `k` and keeps the lowest-BIC fit; failed `k` are recorded and
/// skipped. Each `k` draws from its own sub-seed of `options.seed`.
pub fn select_k(
    sequences: &[StateSequence],
    alphabet: &Alphabet,
    covariates: Option<&Covariates>,
    ks: &[usize],
    options: &EmOptions,
) -> Result<KSelection> {
    if ks.is_empty() {
        return Err(TnaError::invalid("empty range of cluster counts"));
    }
    let mut table = Vec::with_capacity(ks.len());
    let mut best: Option<FitResult> = None;
    for &k in ks {
        let opts = EmOptions {
            seed: par::sub_seed(options.seed, k as u64),
            ..options.clone()
        };
        match fit_em(sequences, alphabet, covariates, k, &opts) {
            Ok(fit) => {
                table.push(BicRow {
                    k,
                    log_likelihood: Some(fit.log_likelihood),
                    bic: Some(fit.bic),
                    n_parameters: Some(fit.n_parameters),
                    failure: None,
                });
                if best.as_ref().is_none_or(|b| fit.bic < b.bic) {
                    best = Some(fit);
                }
            }
            Err(e @ TnaError::Failed(_)) => table.push(BicRow {
                k,
                log_likelihood: None,
                bic: None,
                n_parameters: None,
                failure: Some(e.to_string()),
            }),
            Err(e) => return Err(e),
        }
    }
    let best = best.ok_or_else(|| TnaError::Failed("every cluster count failed".into()))?;
    Ok(KSelection { best, table })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateRow {
    /// Cluster index (never the reference cluster 0).
    pub cluster: usize,
    pub variable: String,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateInference {
    pub rows: Vec<CovariateRow>,
}

pub const INTERCEPT: &str = "(Intercept)";

/// Normal-approximation inference on the prior coefficients, using the
/// observed information from a central-difference Hessian of the mixture
/// log-likelihood with the component parameters held at their estimates.
pub fn covariate_inference(fit: &FitResult) -> Result<CovariateInference> {
    let k = fit.model.k();
    let d1 = fit.model.beta.ncols();
    if k < 2 || fit.model.covariate_names.is_empty() {
        return Err(TnaError::invalid("covariate inference needs covariates and at least two clusters"));
    }
    let np = (k - 1) * d1;
    let theta0: Vec<f64> = (0..np).map(|i| fit.model.beta[(i / d1, i % d1)]).collect();
    let objective = |theta: &[f64]| -> f64 {
        let beta = DMatrix::from_fn(k - 1, d1, |r, a| theta[r * d1 + a]);
        fit.design
            .iter()
            .zip(&fit.component_loglik)
            .map(|(x, c)| {
                let lp = log_priors(&beta, k, x);
                let terms: Vec<f64> = lp.iter().zip(c).map(|(a, b)| a + b).collect();
                log_sum_exp(&terms)
            })
            .sum()
    };
    let steps: Vec<f64> = theta0.iter().map(|t| 1e-5 * t.abs().max(1.0)).collect();
    let f0 = objective(&theta0);
    let eval = |shifts: &[(usize, f64)]| {
        let mut t = theta0.clone();
        for &(i, s) in shifts {
            t[i] += s;
        }
        objective(&t)
    };
    let mut hessian = DMatrix::zeros(np, np);
    for a in 0..np {
        let ha = steps[a];
        hessian[(a, a)] = (eval(&[(a, ha)]) - 2.0 * f0 + eval(&[(a, -ha)])) / (ha * ha);
        for b in 0..a {
            let hb = steps[b];
            let v = (eval(&[(a, ha), (b, hb)]) - eval(&[(a, ha), (b, -hb)]) - eval(&[(a, -ha), (b, hb)])
                + eval(&[(a, -ha), (b, -hb)]))
                / (4.0 * ha * hb);
            hessian[(a, b)] = v;
            hessian[(b, a)] = v;
        }
    }
    let info = -hessian;
    // Curvature below the rounding noise of the finite differences is
    // indistinguishable from zero.
    let min_step = steps.iter().cloned().fold(f64::INFINITY, f64::min);
    let noise = 16.0 * f64::EPSILON * f0.abs().max(1.0) / (min_step * min_step);
    let singular = || {
        TnaError::Singular(
            "observed information for the covariate coefficients is singular; \
             use fewer covariates or more data"
                .into(),
        )
    };
    let eig = info.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.amax();
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_eig > noise) || !(min_eig > 1e-10 * max_eig) {
        return Err(singular());
    }
    let cov = info.cholesky().ok_or_else(singular)?.inverse();
    let normal = Normal::standard();
    let mut rows = Vec::with_capacity(np);
    for c in 1..k {
        for a in 0..d1 {
            let i = (c - 1) * d1 + a;
            let estimate = theta0[i];
            let se = cov[(i, i)].sqrt();
            if !se.is_finite() {
                return Err(singular());
            }
            let t = estimate / se;
            rows.push(CovariateRow {
                cluster: c,
                variable: if a == 0 {
                    INTERCEPT.to_string()
                } else {
                    fit.model.covariate_names[a - 1].clone()
                },
                estimate,
                std_error: se,
                ci_low: estimate - 1.96 * se,
                ci_high: estimate + 1.96 * se,
                t,
                p: 2.0 * (1.0 - normal.cdf(t.abs())),
            });
        }
    }
    Ok(CovariateInference { rows })
}

/// One transition network per fitted cluster.
pub fn cluster_networks(fit: &FitResult) -> Vec<TransitionNetwork> {
    fit.model.components.iter().cloned().map(TransitionNetwork::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{estimate, log_likelihood, simulate, tally};

    fn model(labels: &[&str], initial: &[f64], rows: &[f64]) -> TransitionModel {
        let n = labels.len();
        TransitionModel::new(
            Alphabet::new(labels.iter().copied()).unwrap(),
            initial.to_vec(),
            DMatrix::from_row_slice(n, n, rows),
            Scaling::Stochastic,
        )
        .unwrap()
    }

    fn planted() -> (Vec<StateSequence>, Vec<usize>, [TransitionModel; 2]) {
        let a = model(&["x", "y", "z"], &[0.8, 0.1, 0.1], &[0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.1, 0.1, 0.8]);
        let b = model(&["x", "y", "z"], &[0.1, 0.1, 0.8], &[0.1, 0.8, 0.1, 0.1, 0.1, 0.8, 0.8, 0.1, 0.1]);
        let mut seqs = simulate(&a, 60, 30, 1).unwrap();
        seqs.extend(simulate(&b, 40, 30, 2).unwrap());
        let truth = [vec![0; 60], vec![1; 40]].concat();
        (seqs, truth, [a, b])
    }

    fn quick(restarts: usize) -> EmOptions {
        EmOptions {
            restarts,
            seed: 5,
            ..EmOptions::default()
        }
    }

    #[test]
    fn single_cluster_equals_pooled_estimate() {
        let (seqs, _, [a, _]) = planted();
        let fit = fit_em(&seqs, a.alphabet(), None, 1, &quick(2)).unwrap();
        let pooled = estimate(&tally(&seqs, 3).unwrap(), a.alphabet(), Scaling::Stochastic).unwrap();
        let ll = log_likelihood(&pooled, &seqs).unwrap();
        assert!((fit.log_likelihood - ll).abs() < 1e-9);
        assert!((fit.model.components[0].matrix() - pooled.matrix()).amax() < 1e-12);
        assert_eq!(fit.restarts_converged_to_best, 2);
    }

    #[test]
    fn two_planted_clusters_are_recovered() {
        let (seqs, truth, _) = planted();
        let fit = fit_em(&seqs, &Alphabet::new(["x", "y", "z"]).unwrap(), None, 2, &quick(8)).unwrap();
        let agree = fit.assignments.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let correct = agree.max(truth.len() - agree);
        assert!(correct as f64 >= 0.95 * truth.len() as f64, "{correct}");
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{:?}", w);
        }
        for p in &fit.posteriors {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn too_many_clusters_fail() {
        let seqs = vec![
            StateSequence::from_states("a", vec![0, 1, 0]),
            StateSequence::from_states("b", vec![1, 1, 0]),
        ];
        let err = fit_em(&seqs, &Alphabet::new(["x", "y"]).unwrap(), None, 4, &quick(5)).unwrap_err();
        assert!(matches!(err, TnaError::Failed(_)), "{err}");
    }

    #[test]
    fn permutation_leaves_likelihood_unchanged() {
        let (seqs, _, [a, _]) = planted();
        let covs = Covariates {
            names: vec!["z".into()],
            rows: (0..seqs.len()).map(|i| vec![(i % 7) as f64 / 7.0]).collect(),
        };
        let fit = fit_em(&seqs, a.alphabet(), Some(&covs), 2, &quick(4)).unwrap();
        let ll = fit.model.log_likelihood(&seqs, Some(&covs)).unwrap();
        assert!((ll - fit.log_likelihood).abs() < 1e-8);
        let swapped = fit.model.permuted(&[1, 0]).unwrap();
        let ll2 = swapped.log_likelihood(&seqs, Some(&covs)).unwrap();
        assert!((ll - ll2).abs() < 1e-8);
        assert_eq!(swapped.n_parameters(), fit.model.n_parameters());
    }

    #[test]
    fn priors_sum_to_one() {
        let (seqs, _, [a, _]) = planted();
        let covs = Covariates {
            names: vec!["z".into()],
            rows: (0..seqs.len()).map(|i| vec![i as f64]).collect(),
        };
        let fit = fit_em(&seqs, a.alphabet(), Some(&covs), 2, &quick(2)).unwrap();
        for z in [-50.0, 0.0, 3.0, 1e3] {
            let p = fit.model.priors(&[z]);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_count_matches_formula() {
        let (seqs, _, [a, _]) = planted();
        let fit = fit_em(&seqs, a.alphabet(), None, 2, &quick(2)).unwrap();
        // Dense components: (K-1)(d+1) + K(S-1) + K*S*(S-1).
        assert_eq!(fit.n_parameters, 1 + 2 * 2 + 2 * 3 * 2);
        let expected_bic = -2.0 * fit.log_likelihood + fit.n_parameters as f64 * (100f64).ln();
        assert!((fit.bic - expected_bic).abs() < 1e-9);
    }

    #[test]
    fn inference_table_is_consistent() {
        let (seqs, truth, [a, _]) = planted();
        let covs = Covariates {
            names: vec!["g".into()],
            rows: truth
                .iter()
                .enumerate()
                .map(|(i, &t)| vec![t as f64 * 0.5 + ((i * 37) % 11) as f64 / 11.0])
                .collect(),
        };
        let fit = fit_em(&seqs, a.alphabet(), Some(&covs), 2, &quick(4)).unwrap();
        let inf = covariate_inference(&fit).unwrap();
        assert_eq!(inf.rows.len(), 2);
        for r in &inf.rows {
            assert!((r.ci_low - (r.estimate - 1.96 * r.std_error)).abs() < 1e-12);
            assert!((r.ci_high - (r.estimate + 1.96 * r.std_error)).abs() < 1e-12);
            assert!((r.t - r.estimate / r.std_error).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&r.p));
        }
    }

    #[test]
    fn inference_needs_covariates() {
        let (seqs, _, [a, _]) = planted();
        let fit = fit_em(&seqs, a.alphabet(), None, 2, &quick(2)).unwrap();
        assert!(covariate_inference(&fit).is_err());
    }

    #[test]
    fn k_selection_records_failures() {
        let seqs = vec![
            StateSequence::from_states("a", vec![0, 1, 0, 0]),
            StateSequence::from_states("b", vec![1, 1, 0, 1]),
            StateSequence::from_states("c", vec![0, 0, 0, 1]),
        ];
        let sel = select_k(&seqs, &Alphabet::new(["x", "y"]).unwrap(), None, &[1, 5], &quick(3)).unwrap();
        assert_eq!(sel.best.model.k(), 1);
        assert!(sel.table[1].failure.is_some());
        assert!(select_k(&seqs, &Alphabet::new(["x", "y"]).unwrap(), None, &[], &quick(3)).is_err());
    }

    #[test]
    fn deterministic_fit() {
        let (seqs, _, [a, _]) = planted();
        let f1 = fit_em(&seqs, a.alphabet(), None, 2, &quick(3)).unwrap();
        let f2 = fit_em(&seqs, a.alphabet(), None, 2, &quick(3)).unwrap();
        assert_eq!(f1, f2);
    }
}
