//! Self-consistency checks on a written bundle directory.

use std::path::Path;

use tna::markov::STOCHASTIC_TOLERANCE;
use tna::Scaling;

use crate::bundle::*;
use crate::commands::retained_by_rule;
use crate::config::AnalysisConfig;
use crate::error::CliError;

struct Checker {
    passed: usize,
    failures: Vec<String>,
}

impl Checker {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if ok {
            self.passed += 1;
        } else {
            self.failures.push(what());
        }
    }

    fn close(&mut self, a: f64, b: f64, rel: f64, what: impl FnOnce() -> String) {
        let ok = (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0) || (a.is_nan() && b.is_nan()) || a == b;
        self.check(ok, || format!("{}: {a} vs {b}", what()));
    }
}

fn check_model(c: &mut Checker, m: &ModelReport, name: &str) {
    let n = m.states.len();
    c.check(m.matrix.len() == n && m.matrix.iter().all(|r| r.len() == n), || {
        format!("{name}: matrix is not {n}x{n}")
    });
    c.check(m.initial.len() == n, || format!("{name}: initial has wrong length"));
    if m.matrix.len() != n || m.initial.len() != n {
        return;
    }
    let zero_rows: Vec<String> = (0..n)
        .filter(|&i| m.matrix[i].iter().all(|&v| v == 0.0))
        .map(|i| m.states[i].clone())
        .collect();
    c.check(zero_rows == m.unobserved_states, || format!("{name}: unobserved states do not match zero rows"));
    c.check(m.matrix.iter().flatten().all(|v| v.is_finite() && *v >= 0.0), || {
        format!("{name}: negative or non-finite weight")
    });
    if m.scaling == Scaling::Stochastic {
        for (i, row) in m.matrix.iter().enumerate() {
            let s: f64 = row.iter().sum();
            c.check(s == 0.0 || (s - 1.0).abs() <= STOCHASTIC_TOLERANCE, || {
                format!("{name}: row `{}` sums to {s}", m.states[i])
            });
        }
    }
    let Some(counts) = &m.counts else { return };
    let total: u64 = counts.transitions.iter().flatten().sum();
    c.check(total == counts.n_transitions, || format!("{name}: transition counts do not add up"));
    let starts: u64 = counts.initial.iter().sum();
    c.check(starts == counts.n_sequences, || format!("{name}: initial counts do not add up"));
    for i in 0..n {
        let row: u64 = counts.transitions[i].iter().sum();
        for j in 0..n {
            let expected = match m.scaling {
                Scaling::Stochastic if row > 0 => counts.transitions[i][j] as f64 / row as f64,
                Scaling::Stochastic => 0.0,
                Scaling::Frequency => counts.transitions[i][j] as f64 / counts.n_transitions.max(1) as f64,
                Scaling::Count => counts.transitions[i][j] as f64,
            };
            c.close(m.matrix[i][j], expected, 1e-12, || format!("{name}: weight {i}->{j} disagrees with counts"));
        }
    }
}

fn off_diagonal_column_sums(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    (0..n).map(|v| (0..n).filter(|&u| u != v).map(|u| m[u][v]).sum()).collect()
}

fn check_stamp(c: &mut Checker, dir: &Path, file: &str, p: &Provenance) {
    let path = dir.join(file);
    let Ok(text) = std::fs::read_to_string(&path) else {
        c.check(false, || format!("{file}: missing"));
        return;
    };
    if file.ends_with(".json") {
        let ok = serde_json::from_str::<serde_json::Value>(&text).is_ok();
        c.check(ok, || format!("{file}: not valid JSON"));
        return;
    }
    let head: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
    c.check(head.contains(&format!("config_hash={}", p.config_hash)), || {
        format!("{file}: config hash stamp missing or different")
    });
    c.check(head.contains(&format!("seed={}", p.seed)), || format!("{file}: seed stamp missing or different"));
}

/// Checks a bundle (directory or `bundle.json`) and returns the number of
/// passed checks.
pub fn verify(path: &Path) -> Result<usize, CliError> {
    let (dir, file) = if path.is_dir() {
        (path.to_path_buf(), path.join(BUNDLE_FILE))
    } else {
        (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
    };
    let text = std::fs::read_to_string(&file).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
    let b: AnalysisBundle =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", file.display())))?;
    let mut c = Checker {
        passed: 0,
        failures: Vec::new(),
    };
    c.check(b.schema_version == SCHEMA_VERSION, || format!("schema version {}", b.schema_version));
    match serde_json::from_value::<AnalysisConfig>(b.config.clone()) {
        Ok(cfg) => {
            c.check(cfg.hash() == b.provenance.config_hash, || "config hash does not match the config echo".into());
            c.check(cfg.seed == b.provenance.seed, || "seed does not match the config echo".into());
        }
        Err(e) => c.check(false, || format!("config echo does not parse: {e}")),
    }
    for f in &b.files {
        check_stamp(&mut c, &dir, f, &b.provenance);
    }

    if let Some(m) = &b.model {
        check_model(&mut c, m, "model");
    }
    if let (Some(cent), Some(m)) = (&b.centralities, &b.model) {
        let expected = off_diagonal_column_sums(&m.matrix);
        for (i, (a, e)) in cent.in_strength.iter().zip(&expected).enumerate() {
            c.close(*a, *e, 1e-12, || format!("in_strength of `{}`", cent.states[i]));
        }
        for (i, (raw, norm)) in cent.betweenness.iter().zip(&cent.betweenness_normalized).enumerate() {
            let expected = if cent.contributing_pairs > 0 {
                raw / cent.contributing_pairs as f64
            } else {
                0.0
            };
            c.close(*norm, expected, 1e-12, || format!("normalised betweenness of `{}`", cent.states[i]));
        }
    }
    if let (Some(p), Some(m)) = (&b.patterns, &b.model) {
        let idx = |s: &str| m.states.iter().position(|x| x == s);
        for d in &p.dyads {
            let ok = match (idx(&d.a), idx(&d.b)) {
                (Some(i), Some(j)) => {
                    m.matrix[i][j] == d.weight_ab
                        && m.matrix[j][i] == d.weight_ba
                        && d.weight_ab >= p.dyad_threshold
                        && d.weight_ba >= p.dyad_threshold
                }
                _ => false,
            };
            c.check(ok, || format!("dyad {}-{} inconsistent with the model", d.a, d.b));
        }
        for q in &p.cliques {
            c.check(q.min_weight >= p.clique_threshold && q.states.len() == p.clique_size, || {
                format!("clique {:?} below threshold", q.states)
            });
        }
    }
    if let (Some(cm), Some(m)) = (&b.communities, &b.model) {
        let mut ids = cm.membership.clone();
        ids.sort_unstable();
        ids.dedup();
        c.check(cm.membership.len() == m.states.len(), || "community membership length".into());
        c.check(ids == (1..=cm.n_communities).collect::<Vec<_>>(), || "community ids not contiguous".into());
    }
    if let Some(mx) = &b.mixture {
        let n = mx.n_sequences as f64;
        c.close(mx.bic, -2.0 * mx.log_likelihood + mx.n_parameters as f64 * n.ln(), 1e-9, || "BIC arithmetic".into());
        for r in &mx.bic_table {
            if let (Some(ll), Some(bic), Some(p)) = (r.log_likelihood, r.bic, r.n_parameters) {
                c.close(bic, -2.0 * ll + p as f64 * n.ln(), 1e-9, || format!("BIC arithmetic for K={}", r.k));
            }
        }
        let best = mx.bic_table.iter().filter_map(|r| r.bic.map(|b| (r.k, b))).min_by(|a, b| a.1.total_cmp(&b.1));
        c.check(best.map(|b| b.0) == Some(mx.selected_k), || "selected K is not the BIC minimum".into());
        c.check(mx.components.len() == mx.selected_k, || "component count differs from K".into());
        for (k, comp) in mx.components.iter().enumerate() {
            check_model(&mut c, comp, &format!("cluster {}", k + 1));
        }
        c.check(mx.assignments.len() == mx.n_sequences, || "assignment count".into());
        for a in &mx.assignments {
            let s: f64 = a.posterior.iter().sum();
            c.close(s, 1.0, 1e-9, || format!("posterior of {}/{} sums", a.unit, a.session));
            let argmax = a
                .posterior
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(&x.0)))
                .map(|(i, _)| i + 1);
            c.check(argmax == Some(a.cluster), || format!("assignment of {}/{} is not the posterior mode", a.unit, a.session));
        }
        for r in mx.covariates.iter().flatten() {
            let what = || format!("covariate row {}/{}", r.cluster, r.variable);
            c.close(r.ci_low, r.estimate - 1.96 * r.std_error, 1e-9, what);
            c.close(r.ci_high, r.estimate + 1.96 * r.std_error, 1e-9, what);
            c.close(r.t, r.estimate / r.std_error, 1e-9, what);
            c.check((0.0..=1.0).contains(&r.p), what);
        }
    }
    if let Some(v) = &b.validation {
        let bs = &v.bootstrap;
        for e in &bs.edges {
            let what = || format!("bootstrap edge {}->{}", e.from, e.to);
            c.check((0.0..=1.0).contains(&e.p_value) && e.ci_low <= e.ci_high, what);
            c.check(retained_by_rule(bs.rule, e, bs.threshold, bs.alpha) == e.retained, what);
        }
        let kept = bs.edges.iter().filter(|e| e.retained).count();
        c.check(kept == bs.n_retained && bs.edges.len() - kept == bs.n_dropped, || "bootstrap tallies".into());
        for e in &v.disparity.edges {
            let what = || format!("disparity edge {}->{}", e.from, e.to);
            c.check(e.alpha == e.alpha_out.min(e.alpha_in), what);
            c.check(e.retained == (e.alpha < v.disparity.significance), what);
        }
        for s in v.stability.iter().flat_map(|s| s.measures.iter().map(move |m| (s, m))) {
            let (rep, m) = s;
            let cs = m
                .mean_correlations
                .iter()
                .filter(|(_, r)| *r >= rep.correlation_cutoff)
                .map(|(p, _)| *p)
                .fold(0.0, f64::max);
            c.check(cs == m.cs_coefficient, || format!("CS coefficient of {}", m.measure));
        }
    }
    if let Some(cmp) = &b.comparison {
        let floor = 1.0 / (cmp.permutations + 1) as f64;
        for e in &cmp.edges {
            let what = || format!("comparison edge {}->{}", e.from, e.to);
            c.close(e.difference, e.weight_a - e.weight_b, 1e-12, what);
            c.check(e.p_value >= floor - 1e-15 && e.p_value <= 1.0, what);
        }
    }
    if c.failures.is_empty() {
        Ok(c.passed)
    } else {
        Err(CliError::Verify(c.failures))
    }
}
