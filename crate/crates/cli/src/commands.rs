use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use nalgebra::DMatrix;
use rand::Rng as _;
use tna::export::DotOptions;
use tna::graph::{betweenness_rw, communities_spinglass, find_cliques, find_dyads, in_strength, out_strength, subtract};
use tna::inference::{
    bootstrap_edges, centrality_stability, disparity_filter, permutation_compare, BootstrapOptions, CentralityMeasure,
    PermutationOptions, RetentionRule, StabilityOptions,
};
use tna::markov::{estimate, simulate, tally};
use tna::mixture::{covariate_inference, select_k, Covariates, EmOptions};
use tna::par;
use tna::sequence::{attach_covariates, ingest, read_covariates, session_threshold, sessionize};
use tna::{Alphabet, EventLog, Scaling, StateSequence, TransitionModel, TransitionNetwork};

use crate::bundle::*;
use crate::config::AnalysisConfig;
use crate::error::CliError;
use crate::output::{num, Outputs, Stamp};

/// A command's run context: effective config plus its output directory.
pub struct Run {
    pub cfg: AnalysisConfig,
    pub outputs: Outputs,
    pub bundle: AnalysisBundle,
}

impl Run {
    pub fn new(command: &str, cfg: AnalysisConfig) -> Self {
        let stamp = Stamp {
            config_hash: cfg.hash(),
            seed: cfg.seed,
        };
        let provenance = Provenance {
            tool: "tna".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            created_at: chrono::Utc::now().to_rfc3339(),
            seed: cfg.seed,
            config_hash: stamp.config_hash.clone(),
        };
        let bundle = AnalysisBundle::new(command, provenance, cfg.echo());
        let outputs = Outputs::new(cfg.out_dir.join(command), stamp);
        Run { cfg, outputs, bundle }
    }

    /// Writes the bundle last so that it lists every other artifact.
    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.bundle.files = self.outputs.written.clone();
        self.outputs.json(BUNDLE_FILE, &self.bundle)?;
        Ok(self.outputs.dir)
    }
}

struct Prepared {
    log: EventLog,
    sequences: Vec<StateSequence>,
    summary: DataSummary,
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Config(format!("cannot open input file {}: {e}", path.display())))
}

fn prepare(cfg: &AnalysisConfig, with_covariates: bool) -> Result<Prepared, CliError> {
    cfg.check_inputs(with_covariates)?;
    let events = cfg.input.events.as_ref().expect("checked");
    let log = ingest(open(events)?, &cfg.input.schema)?;
    let threshold = session_threshold(&log, &cfg.sessionization)?;
    let mut sequences = sessionize(&log, &cfg.sessionization)?;
    if with_covariates {
        if let Some(path) = &cfg.input.covariates {
            let unit = cfg.input.covariate_unit_column.as_deref().unwrap_or(&cfg.input.schema.unit);
            let table = read_covariates(open(path)?, unit, cfg.input.schema.delimiter)?;
            attach_covariates(&mut sequences, &table)?;
        }
    }
    let summary = DataSummary {
        n_units: log.units.len(),
        n_events: log.n_events(),
        n_sequences: sequences.len(),
        session_threshold_seconds: threshold,
        states: log.alphabet.labels().to_vec(),
    };
    Ok(Prepared { log, sequences, summary })
}

fn labels(alphabet: &Alphabet) -> Vec<String> {
    alphabet.labels().to_vec()
}

fn network_dot(out: &mut Outputs, name: &str, model: &TransitionModel) -> Result<(), CliError> {
    let net = TransitionNetwork::new(model.clone());
    let opts = DotOptions {
        name: name.trim_end_matches(".dot").into(),
        initial: Some(model.initial().to_vec()),
        ..Default::default()
    };
    out.dot(name, &labels(model.alphabet()), &net.edges(), opts)
}

pub fn cmd_estimate(mut run: Run) -> Result<PathBuf, CliError> {
    let data = prepare(&run.cfg, false)?;
    let alphabet = &data.log.alphabet;
    let counts = tally(&data.sequences, alphabet.len())?;
    let model = estimate(&counts, alphabet, run.cfg.scaling)?;
    let l = labels(alphabet);
    let out = &mut run.outputs;
    out.matrix("matrix.csv", &l, model.matrix())?;
    out.matrix("counts.csv", &l, &counts.to_matrix())?;
    out.table(
        "initial.csv",
        &["state", "count", "probability"],
        l.iter()
            .enumerate()
            .map(|(i, s)| vec![s.clone(), counts.initial(i).to_string(), num(model.initial()[i])])
            .collect(),
    )?;
    network_dot(out, "network.dot", &model)?;
    let net = TransitionNetwork::new(model.clone());
    out.graphml("network.graphml", &l, Some(model.initial()), &net.edges())?;
    for &i in model.unobserved_states() {
        run.bundle
            .notes
            .push(format!("state `{}` has no outgoing transitions; its row is zero", alphabet.label(i)));
    }
    run.bundle.data = Some(data.summary);
    run.bundle.model = Some(ModelReport::new(&model, Some(&counts)));
    run.finish()
}

fn model_from_report(r: &ModelReport) -> Result<TransitionModel, CliError> {
    let n = r.states.len();
    if r.matrix.len() != n || r.matrix.iter().any(|row| row.len() != n) {
        return Err(CliError::Data("bundle model matrix is not square over its states".into()));
    }
    let m = DMatrix::from_fn(n, n, |i, j| r.matrix[i][j]);
    Ok(TransitionModel::new(Alphabet::new(r.states.iter().cloned())?, r.initial.clone(), m, r.scaling)?)
}

fn load_bundle(path: &Path) -> Result<AnalysisBundle, CliError> {
    let path = if path.is_dir() { path.join(BUNDLE_FILE) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let bundle: AnalysisBundle =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if bundle.schema_version != SCHEMA_VERSION {
        return Err(CliError::Data(format!(
            "{}: bundle schema version {} is not supported (expected {SCHEMA_VERSION})",
            path.display(),
            bundle.schema_version
        )));
    }
    Ok(bundle)
}

fn row_stochastic(model: &TransitionModel) -> TransitionModel {
    if model.scaling() == Scaling::Stochastic {
        return model.clone();
    }
    let n = model.n_states();
    let mut m = model.matrix().clone();
    for i in 0..n {
        let s: f64 = m.row(i).sum();
        if s > 0.0 {
            for j in 0..n {
                m[(i, j)] /= s;
            }
        }
    }
    let total: f64 = model.initial().iter().sum();
    let initial = model.initial().iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect();
    TransitionModel::new(model.alphabet().clone(), initial, m, Scaling::Stochastic).expect("normalised rows")
}

pub fn cmd_analyze(mut run: Run, from_bundle: Option<&Path>) -> Result<PathBuf, CliError> {
    let model = match from_bundle {
        Some(path) => {
            let b = load_bundle(path)?;
            let report = b
                .model
                .ok_or_else(|| CliError::Data(format!("{} holds no estimated model", path.display())))?;
            model_from_report(&report)?
        }
        None => {
            let data = prepare(&run.cfg, false)?;
            let counts = tally(&data.sequences, data.log.alphabet.len())?;
            run.bundle.data = Some(data.summary);
            estimate(&counts, &data.log.alphabet, run.cfg.scaling)?
        }
    };
    let net = TransitionNetwork::new(model.clone());
    let l = labels(model.alphabet());
    let ins = in_strength(&net);
    let outs = out_strength(&net);
    let btw = betweenness_rw(&TransitionNetwork::new(row_stochastic(&model)))?;

    let pc = run.cfg.patterns.clone();
    let dyads = find_dyads(&net, pc.dyad_threshold);
    let cliques = find_cliques(&net, pc.clique_size, pc.clique_threshold)?;
    let comm = communities_spinglass(&net, &run.cfg.communities)?;

    let out = &mut run.outputs;
    let mut rows = Vec::new();
    for (measure, values) in [
        ("in_strength", &ins),
        ("out_strength", &outs),
        ("betweenness", &btw.raw),
        ("betweenness_normalized", &btw.normalized),
    ] {
        rows.extend(l.iter().zip(values.iter()).map(|(s, v)| vec![measure.to_string(), s.clone(), num(*v)]));
    }
    out.table("centralities.csv", &["measure", "state", "value"], rows)?;
    out.table(
        "dyads.csv",
        &["a", "b", "weight_ab", "weight_ba", "threshold"],
        dyads
            .iter()
            .map(|d| {
                vec![
                    l[d.a].clone(),
                    l[d.b].clone(),
                    num(d.weight_ab),
                    num(d.weight_ba),
                    num(pc.dyad_threshold),
                ]
            })
            .collect(),
    )?;
    let clique_rows: Vec<CliqueRow> = cliques
        .iter()
        .map(|c| CliqueRow {
            states: c.nodes.iter().map(|&i| l[i].clone()).collect(),
            min_weight: c.weights.iter().map(|w| w.2).fold(f64::INFINITY, f64::min),
        })
        .collect();
    out.table(
        "cliques.csv",
        &["clique", "states", "min_weight", "threshold"],
        clique_rows
            .iter()
            .enumerate()
            .map(|(i, c)| vec![(i + 1).to_string(), c.states.join(";"), num(c.min_weight), num(pc.clique_threshold)])
            .collect(),
    )?;
    out.table(
        "communities.csv",
        &["state", "community"],
        l.iter()
            .zip(&comm.membership)
            .map(|(s, c)| vec![s.clone(), (c + 1).to_string()])
            .collect(),
    )?;
    network_dot(out, "network.dot", &model)?;

    run.bundle.model = Some(ModelReport::new(&model, None));
    run.bundle.centralities = Some(CentralityReport {
        states: l.clone(),
        in_strength: ins,
        out_strength: outs,
        betweenness: btw.raw,
        betweenness_normalized: btw.normalized,
        contributing_pairs: btw.contributing_pairs,
        self_loops_in_strength: false,
    });
    run.bundle.patterns = Some(PatternReport {
        dyad_threshold: pc.dyad_threshold,
        clique_threshold: pc.clique_threshold,
        clique_size: pc.clique_size,
        dyads: dyads
            .iter()
            .map(|d| DyadRow {
                a: l[d.a].clone(),
                b: l[d.b].clone(),
                weight_ab: d.weight_ab,
                weight_ba: d.weight_ba,
            })
            .collect(),
        cliques: clique_rows,
    });
    run.bundle.communities = Some(CommunityReport {
        membership: comm.membership.iter().map(|c| c + 1).collect(),
        n_communities: comm.n_communities,
        hamiltonian: comm.hamiltonian,
        params: comm.params,
        n_iterations: comm.n_iterations,
    });
    run.finish()
}

pub fn cmd_cluster(mut run: Run) -> Result<PathBuf, CliError> {
    let mc = run.cfg.mixture.clone();
    let [k_min, k_max] = mc.k_range;
    if k_min == 0 || k_min > k_max {
        return Err(CliError::Config(format!("mixture.k_range [{k_min}, {k_max}] is empty or starts at 0")));
    }
    let data = prepare(&run.cfg, mc.use_covariates)?;
    let alphabet = &data.log.alphabet;
    let covariates = if mc.use_covariates {
        Covariates::from_sequences(&data.sequences)?
    } else {
        None
    };
    let opts = EmOptions {
        restarts: mc.restarts,
        seed: par::task_seed(run.cfg.seed, "mixture"),
        tolerance: mc.tolerance,
        max_iterations: mc.max_iterations,
        min_cluster_mass: mc.min_cluster_mass,
        ..Default::default()
    };
    let ks: Vec<usize> = (k_min..=k_max).collect();
    let sel = select_k(&data.sequences, alphabet, covariates.as_ref(), &ks, &opts)?;
    let fit = &sel.best;
    let k = fit.model.k();
    let l = labels(alphabet);

    let bic_table: Vec<BicEntry> = sel
        .table
        .iter()
        .map(|r| BicEntry {
            k: r.k,
            log_likelihood: r.log_likelihood,
            bic: r.bic,
            n_parameters: r.n_parameters,
            failure: r.failure.clone(),
        })
        .collect();
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    run.outputs.table(
        "bic.csv",
        &["k", "log_likelihood", "bic", "n_parameters", "status"],
        bic_table
            .iter()
            .map(|r| {
                vec![
                    r.k.to_string(),
                    opt(r.log_likelihood),
                    opt(r.bic),
                    r.n_parameters.map(|p| p.to_string()).unwrap_or_default(),
                    r.failure.as_ref().map_or("ok".to_string(), |_| "failed".to_string()),
                ]
            })
            .collect(),
    )?;

    let assignments: Vec<Assignment> = data
        .sequences
        .iter()
        .zip(fit.assignments.iter().zip(&fit.posteriors))
        .map(|(s, (&c, post))| Assignment {
            unit: s.unit_id.clone(),
            session: s.session_id,
            cluster: c + 1,
            posterior: post.clone(),
        })
        .collect();
    let mut header = vec!["unit".to_string(), "session".into(), "cluster".into()];
    header.extend((1..=k).map(|c| format!("posterior_{c}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    run.outputs.table(
        "assignments.csv",
        &header_refs,
        assignments
            .iter()
            .map(|a| {
                let mut r = vec![a.unit.clone(), a.session.to_string(), a.cluster.to_string()];
                r.extend(a.posterior.iter().map(|&p| num(p)));
                r
            })
            .collect(),
    )?;
    for (c, comp) in fit.model.components.iter().enumerate() {
        network_dot(&mut run.outputs, &format!("cluster_{}.dot", c + 1), comp)?;
        run.outputs.matrix(&format!("cluster_{}.csv", c + 1), &l, comp.matrix())?;
    }

    let mut cov_entries = None;
    if covariates.is_some() && k >= 2 {
        match covariate_inference(fit) {
            Ok(inf) => {
                let rows: Vec<CovariateEntry> = inf
                    .rows
                    .iter()
                    .map(|r| CovariateEntry {
                        cluster: r.cluster + 1,
                        variable: r.variable.clone(),
                        estimate: r.estimate,
                        std_error: r.std_error,
                        ci_low: r.ci_low,
                        ci_high: r.ci_high,
                        t: r.t,
                        p: r.p,
                    })
                    .collect();
                run.outputs.table(
                    "covariates.csv",
                    &["cluster", "variable", "estimate", "std_error", "ci_low", "ci_high", "t", "p"],
                    rows.iter()
                        .map(|r| {
                            vec![
                                r.cluster.to_string(),
                                r.variable.clone(),
                                num(r.estimate),
                                num(r.std_error),
                                num(r.ci_low),
                                num(r.ci_high),
                                num(r.t),
                                num(r.p),
                            ]
                        })
                        .collect(),
                )?;
                cov_entries = Some(rows);
            }
            Err(e) => run.bundle.notes.push(format!("covariate table not produced: {e}")),
        }
    }
    for r in sel.table.iter().filter(|r| r.failure.is_some()) {
        run.bundle.notes.push(format!("K={}: {}", r.k, r.failure.as_deref().unwrap_or_default()));
    }

    run.bundle.data = Some(data.summary);
    run.bundle.mixture = Some(MixtureReport {
        selected_k: k,
        bic_table,
        log_likelihood: fit.log_likelihood,
        bic: fit.bic,
        n_parameters: fit.n_parameters,
        n_sequences: fit.n_sequences,
        restarts: fit.restarts,
        restarts_converged_to_best: fit.restarts_converged_to_best,
        restarts_degenerate: fit.restarts_degenerate,
        iterations: fit.iterations,
        converged: fit.converged,
        components: fit.model.components.iter().map(|c| ModelReport::new(c, None)).collect(),
        covariate_names: fit.model.covariate_names.clone(),
        beta: fit.model.beta.row_iter().map(|r| r.iter().copied().collect()).collect(),
        assignments,
        covariates: cov_entries,
    });
    run.finish()
}

pub fn cmd_validate(mut run: Run) -> Result<PathBuf, CliError> {
    let vc = run.cfg.validation.clone();
    let seed = run.cfg.seed;
    let data = prepare(&run.cfg, false)?;
    let alphabet = &data.log.alphabet;
    let l = labels(alphabet);
    let boot = bootstrap_edges(
        &data.sequences,
        alphabet,
        &BootstrapOptions {
            replicates: vc.replicates,
            threshold: vc.threshold,
            alpha: vc.alpha,
            seed,
            rule: vc.rule,
        },
    )?;
    let counts = tally(&data.sequences, alphabet.len())?;
    let stochastic = estimate(&counts, alphabet, Scaling::Stochastic)?;
    let disp = disparity_filter(&TransitionNetwork::new(stochastic.clone()), vc.disparity_significance)?;
    let measures = [CentralityMeasure::InStrength, CentralityMeasure::Betweenness];
    let n_seq = data.sequences.len();
    let max_drop = vc.drop_proportions.iter().cloned().fold(0.0, f64::max);
    let stability = if ((1.0 - max_drop) * n_seq as f64).round() < 2.0 {
        run.bundle.notes.push(format!(
            "stability skipped: dropping {max_drop} of {n_seq} sequences leaves fewer than two"
        ));
        None
    } else {
        Some(centrality_stability(
            &data.sequences,
            alphabet,
            &measures,
            &StabilityOptions {
                drop_proportions: vc.drop_proportions.clone(),
                replicates: vc.stability_replicates,
                seed,
                correlation_cutoff: vc.correlation_cutoff,
            },
        )?)
    };

    let bedges: Vec<BootstrapEdge> = boot
        .edges
        .iter()
        .map(|e| BootstrapEdge {
            from: l[e.from].clone(),
            to: l[e.to].clone(),
            observed: e.observed,
            mean: e.mean,
            sd: e.sd,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            p_value: e.p_value,
            retained: e.retained,
        })
        .collect();
    let out = &mut run.outputs;
    out.table(
        "bootstrap_edges.csv",
        &["from", "to", "observed", "mean", "sd", "ci_low", "ci_high", "p_value", "retained"],
        bedges
            .iter()
            .map(|e| {
                vec![
                    e.from.clone(),
                    e.to.clone(),
                    num(e.observed),
                    num(e.mean),
                    num(e.sd),
                    num(e.ci_low),
                    num(e.ci_high),
                    num(e.p_value),
                    e.retained.to_string(),
                ]
            })
            .collect(),
    )?;
    network_dot(out, "retained.dot", &boot.pruned)?;
    out.dot(
        "dropped.dot",
        &l,
        &boot.dropped,
        DotOptions {
            name: "dropped".into(),
            ..Default::default()
        },
    )?;
    out.table(
        "disparity.csv",
        &["from", "to", "weight", "alpha_out", "alpha_in", "alpha", "retained"],
        disp.edges
            .iter()
            .map(|e| {
                vec![
                    l[e.from].clone(),
                    l[e.to].clone(),
                    num(e.weight),
                    num(e.alpha_out),
                    num(e.alpha_in),
                    num(e.alpha),
                    e.retained.to_string(),
                ]
            })
            .collect(),
    )?;
    let stability_report = stability.map(|s| StabilityReport {
        replicates: s.options.replicates,
        correlation_cutoff: s.options.correlation_cutoff,
        measures: s
            .measures
            .iter()
            .map(|m| StabilityEntry {
                measure: m.measure.name().to_string(),
                cs_coefficient: m.cs_coefficient,
                mean_correlations: m.mean_correlations.clone(),
            })
            .collect(),
    });
    if let Some(s) = &stability_report {
        out.table(
            "stability.csv",
            &["measure", "drop_proportion", "mean_correlation", "cs_coefficient"],
            s.measures
                .iter()
                .flat_map(|m| {
                    m.mean_correlations
                        .iter()
                        .map(|(p, c)| vec![m.measure.clone(), num(*p), num(*c), num(m.cs_coefficient)])
                })
                .collect(),
        )?;
    }

    let n_retained = bedges.iter().filter(|e| e.retained).count();
    run.bundle.data = Some(data.summary);
    run.bundle.model = Some(ModelReport::new(&stochastic, Some(&counts)));
    run.bundle.validation = Some(ValidationReport {
        bootstrap: BootstrapReport {
            replicates: vc.replicates,
            threshold: vc.threshold,
            alpha: vc.alpha,
            rule: vc.rule,
            n_dropped: bedges.len() - n_retained,
            n_retained,
            edges: bedges,
        },
        disparity: DisparityReport {
            significance: disp.significance,
            edges: disp
                .edges
                .iter()
                .map(|e| DisparityEntry {
                    from: l[e.from].clone(),
                    to: l[e.to].clone(),
                    weight: e.weight,
                    alpha_out: e.alpha_out,
                    alpha_in: e.alpha_in,
                    alpha: e.alpha,
                    retained: e.retained,
                })
                .collect(),
        },
        stability: stability_report,
    });
    run.finish()
}

pub fn cmd_compare(mut run: Run) -> Result<PathBuf, CliError> {
    let column = run
        .cfg
        .compare
        .group_column
        .clone()
        .or_else(|| run.cfg.input.schema.group.clone())
        .ok_or_else(|| CliError::Config("compare needs `compare.group_column` or `input.schema.group`".into()))?;
    let mut cfg = run.cfg.clone();
    cfg.input.schema.group = Some(column.clone());
    let data = prepare(&cfg, false)?;
    let alphabet = &data.log.alphabet;
    let groups: [String; 2] = match &run.cfg.compare.groups {
        Some(g) => g.clone(),
        None => {
            let mut seen: Vec<String> = Vec::new();
            for s in &data.sequences {
                if let Some(g) = &s.group {
                    if !seen.contains(g) {
                        seen.push(g.clone());
                    }
                }
            }
            match <[String; 2]>::try_from(seen) {
                Ok(g) => g,
                Err(seen) => {
                    return Err(CliError::Data(format!(
                        "column `{column}` has {} groups ({}); set `compare.groups`",
                        seen.len(),
                        seen.join(", ")
                    )))
                }
            }
        }
    };
    let pick = |g: &str| -> Vec<StateSequence> {
        data.sequences.iter().filter(|s| s.group.as_deref() == Some(g)).cloned().collect()
    };
    let (a, b) = (pick(&groups[0]), pick(&groups[1]));
    for (g, s) in groups.iter().zip([&a, &b]) {
        if s.is_empty() {
            return Err(CliError::Data(format!("group `{g}` has no sequences in column `{column}`")));
        }
    }
    let n = alphabet.len();
    let net_a = TransitionNetwork::new(estimate(&tally(&a, n)?, alphabet, run.cfg.scaling)?);
    let net_b = TransitionNetwork::new(estimate(&tally(&b, n)?, alphabet, run.cfg.scaling)?);
    let sub = subtract(&net_a, &net_b, (&groups[0], &groups[1]))?;
    let sa = estimate(&tally(&a, n)?, alphabet, Scaling::Stochastic)?;
    let sb = estimate(&tally(&b, n)?, alphabet, Scaling::Stochastic)?;
    let perm = permutation_compare(
        &a,
        &b,
        alphabet,
        &PermutationOptions {
            permutations: run.cfg.compare.permutations,
            seed: run.cfg.seed,
        },
    )?;
    let l = labels(alphabet);
    let edges: Vec<ComparisonEdge> = perm
        .edges
        .iter()
        .map(|e| ComparisonEdge {
            from: l[e.from].clone(),
            to: l[e.to].clone(),
            weight_a: sa.weight(e.from, e.to),
            weight_b: sb.weight(e.from, e.to),
            difference: e.difference,
            p_value: e.p_value,
        })
        .collect();
    let signed: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, sub.delta[(i, j)]))
        .filter(|e| e.2 != 0.0)
        .collect();
    let out = &mut run.outputs;
    out.dot(
        "subtraction.dot",
        &l,
        &signed,
        DotOptions {
            name: format!("{} - {}", groups[0], groups[1]),
            signed: true,
            ..Default::default()
        },
    )?;
    out.matrix("subtraction.csv", &l, &sub.delta)?;
    out.table(
        "permutation.csv",
        &["from", "to", "weight_a", "weight_b", "difference", "p_value"],
        edges
            .iter()
            .map(|e| {
                vec![
                    e.from.clone(),
                    e.to.clone(),
                    num(e.weight_a),
                    num(e.weight_b),
                    num(e.difference),
                    num(e.p_value),
                ]
            })
            .collect(),
    )?;
    run.bundle.data = Some(data.summary);
    run.bundle.comparison = Some(ComparisonReport {
        group_column: column,
        n_sequences: [a.len(), b.len()],
        groups,
        permutations: run.cfg.compare.permutations,
        subtraction: sub.delta.row_iter().map(|r| r.iter().copied().collect()).collect(),
        edges,
    });
    run.finish()
}

pub fn cmd_simulate(mut run: Run) -> Result<PathBuf, CliError> {
    let sc = run.cfg.simulate.clone();
    if sc.components.is_empty() || sc.states.is_empty() {
        return Err(CliError::Config("simulate needs `simulate.states` and at least one `[[simulate.components]]`".into()));
    }
    if sc.n_sequences == 0 || sc.length == 0 {
        return Err(CliError::Config("simulate.n_sequences and simulate.length must be >= 1".into()));
    }
    let start = NaiveDateTime::parse_from_str(&sc.start, "%Y-%m-%dT%H:%M:%S")
        .map_err(|e| CliError::Config(format!("simulate.start `{}`: {e}", sc.start)))?;
    let alphabet = Alphabet::new(sc.states.iter().cloned())?;
    let n = alphabet.len();
    let models = sc
        .components
        .iter()
        .enumerate()
        .map(|(c, comp)| {
            if comp.matrix.len() != n || comp.matrix.iter().any(|r| r.len() != n) {
                return Err(CliError::Config(format!("component {} matrix must be {n}x{n}", c + 1)));
            }
            let m = DMatrix::from_fn(n, n, |i, j| comp.matrix[i][j]);
            TransitionModel::new(alphabet.clone(), comp.initial.clone(), m, Scaling::Stochastic)
                .map_err(|e| CliError::Config(format!("component {}: {e}", c + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let weights: Vec<f64> = sc.components.iter().map(|c| c.weight).collect();
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
        return Err(CliError::Config("component weights must be non-negative with a positive sum".into()));
    }
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let base = par::task_seed(run.cfg.seed, "simulate");
    let mut membership = Vec::with_capacity(sc.n_sequences);
    let mut rows = Vec::new();
    let step = chrono::Duration::seconds(sc.step_seconds as i64);
    for i in 0..sc.n_sequences {
        let seed = par::sub_seed(base, i as u64);
        let u: f64 = par::rng(seed).random();
        let mut acc = 0.0;
        let c = weights
            .iter()
            .position(|w| {
                acc += w;
                u < acc
            })
            .unwrap_or(weights.len() - 1);
        membership.push(c + 1);
        let seq = simulate(&models[c], 1, sc.length, par::sub_seed(seed, 1))?.remove(0);
        let unit = format!("u{:0width$}", i + 1, width = sc.n_sequences.to_string().len());
        for (k, &s) in seq.states.iter().enumerate() {
            let t = start + step * k as i32;
            rows.push(vec![
                unit.clone(),
                t.format("%Y-%m-%dT%H:%M:%S").to_string(),
                alphabet.label(s).to_string(),
                format!("c{}", c + 1),
            ]);
        }
    }
    let n_events = rows.len();
    run.outputs.table("events.csv", &["unit", "timestamp", "code", "group"], rows)?;
    let truth = GroundTruth {
        states: labels(&alphabet),
        weights: weights.clone(),
        components: models.iter().map(|m| ModelReport::new(m, None)).collect(),
        membership,
    };
    run.outputs.json("truth.json", &truth)?;
    run.bundle.simulation = Some(SimulationReport {
        n_sequences: sc.n_sequences,
        length: sc.length,
        n_events,
        weights,
    });
    run.finish()
}

/// Applies the retention rule to one bootstrap row.
pub fn retained_by_rule(rule: RetentionRule, e: &BootstrapEdge, threshold: f64, alpha: f64) -> bool {
    match rule {
        RetentionRule::ThresholdP => e.p_value <= alpha,
        RetentionRule::CiLower => e.ci_low >= threshold,
    }
}
