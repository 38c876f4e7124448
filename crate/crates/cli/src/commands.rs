//! The five subcommands. Each loads what it needs from the config,
//! delegates to the engine, and writes deterministic artifacts: JSON for
//! structured models, CSV (17 significant digits) for anything a plotting
//! tool consumes.

use std::path::{Path, PathBuf};

use gammasort_core::compiler::{self, CompiledModel};
use gammasort_core::decision::tail_prob;
use gammasort_core::inference::{CliqueTree, Marginal};
use gammasort_core::mixture::{ellipse_params, exact_mixture, JointComponent, JointGaussianMixture};
use gammasort_core::model::{
    evidence_from_json, evidence_to_json, network_from_json, validate as validate_network,
    Evidence, Network, NodeId,
};
use gammasort_core::simulator::{
    compare_controllers, run_batch_with_trace, stage_batch_with, trace_csv, Controller, LineLayout,
};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::CliError;

// ── Shared loading ───────────────────────────────────────────────────────

fn load_network(cfg: &RunConfig) -> Result<Network, CliError> {
    let text = std::fs::read_to_string(&cfg.network).map_err(|e| {
        CliError::io(format!(
            "cannot read network {}: {e}",
            cfg.network.display()
        ))
    })?;
    network_from_json(&text).map_err(|e| {
        CliError::io(format!(
            "cannot parse network {}: {e}",
            cfg.network.display()
        ))
    })
}

fn load_evidence(cfg: &RunConfig, net: &Network) -> Result<Evidence, CliError> {
    match &cfg.evidence {
        None => Ok(Evidence::none()),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::io(format!("cannot read evidence {}: {e}", path.display()))
            })?;
            evidence_from_json(net, &text).map_err(|e| {
                CliError::io(format!("cannot parse evidence {}: {e}", path.display()))
            })
        }
    }
}

fn find_role(net: &Network, role: &str, label: &str) -> Result<NodeId, CliError> {
    net.find(label).ok_or_else(|| {
        CliError::usage(format!(
            "{role} node \"{label}\" does not exist in network '{}'",
            net.name
        ))
    })
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

// ── validate ─────────────────────────────────────────────────────────────

pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let net = load_network(cfg)?;
    let violations = validate_network(&net);
    if violations.is_empty() {
        println!("ok: network '{}' passes validation", net.name);
        Ok(())
    } else {
        for v in &violations {
            println!("{v}");
        }
        Err(CliError::domain(format!(
            "network '{}' has {} violation(s)",
            net.name,
            violations.len()
        )))
    }
}

// ── infer ────────────────────────────────────────────────────────────────

pub fn infer(cfg: &RunConfig) -> Result<(), CliError> {
    let net = load_network(cfg)?;
    let evidence = load_evidence(cfg, &net)?;
    let tree = CliqueTree::build(&net)?;
    let cal = tree.propagate(&evidence)?;

    let mut discrete = Map::new();
    let mut continuous = Map::new();
    let observed = evidence.nodes();
    for id in net.ids() {
        if observed.contains(&id) {
            continue;
        }
        match cal.node_marginal(id)? {
            Marginal::Discrete(probs) => {
                let d = net.discrete(id).expect("discrete marginal");
                let rows: Vec<Value> = d
                    .states
                    .iter()
                    .zip(&probs)
                    .map(|(state, &p)| json!({ "state": state, "p": p }))
                    .collect();
                discrete.insert(net.label(id).to_string(), Value::Array(rows));
            }
            Marginal::Continuous(_) => {
                let m = exact_mixture(&net, id, &evidence)?;
                let (mean, variance) = m.moment_match();
                let comps: Vec<Value> = m
                    .components()
                    .iter()
                    .map(|c| {
                        let source: Map<String, Value> = c
                            .source
                            .iter()
                            .map(|&(v, s)| {
                                let state = net
                                    .discrete(v)
                                    .map(|d| d.states[s].clone())
                                    .unwrap_or_else(|| s.to_string());
                                (net.label(v).to_string(), Value::String(state))
                            })
                            .collect();
                        json!({
                            "weight": c.weight,
                            "mean": c.mean,
                            "variance": c.variance,
                            "source": source,
                        })
                    })
                    .collect();
                continuous.insert(
                    net.label(id).to_string(),
                    json!({ "mean": mean, "variance": variance, "components": comps }),
                );
            }
        }
    }
    let evidence_echo: Value = serde_json::from_str(&evidence_to_json(&net, &evidence))
        .expect("evidence serializes to valid JSON");
    let report = json!({
        "network": net.name,
        "evidence": evidence_echo,
        "log_likelihood": cal.log_likelihood(),
        "discrete": Value::Object(discrete),
        "continuous": Value::Object(continuous),
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{text}");
    let path = write_artifact(&cfg.out_dir, "posteriors.json", &text)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

// ── compile ──────────────────────────────────────────────────────────────

pub fn compile(cfg: &RunConfig) -> Result<(), CliError> {
    let net = load_network(cfg)?;
    let evidence = load_evidence(cfg, &net)?;
    let policy = cfg.policy()?;
    let sensor = find_role(&net, "sensor", cfg.role("sensor")?)?;
    let target = find_role(&net, "target", cfg.role("target")?)?;

    let model = compiler::compile(&net, &evidence, sensor, target)?;
    let rule = compiler::compile_rule(&model, &policy)?;

    let model_path = write_artifact(&cfg.out_dir, "model.json", &model.to_json())?;
    let rule_path = write_artifact(&cfg.out_dir, "rule.json", &rule.to_json())?;
    let csv_path = write_artifact(&cfg.out_dir, "rule.csv", &rule.to_plc_csv())?;

    println!("components: {}", model.components.len());
    println!("intervals: {}", rule.intervals.len());
    for iv in &rule.intervals {
        println!("  divert [{}, {}]", iv[0], iv[1]);
    }
    eprintln!(
        "wrote {} {} {}",
        model_path.display(),
        rule_path.display(),
        csv_path.display()
    );
    Ok(())
}

// ── simulate ─────────────────────────────────────────────────────────────

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let net = load_network(cfg)?;
    let policy = cfg.policy()?;
    let layout = LineLayout {
        assay: find_role(&net, "assay", cfg.role("assay")?)?,
        target: find_role(&net, "target", cfg.role("target")?)?,
        sensor: find_role(&net, "sensor", cfg.role("sensor")?)?,
    };
    if cfg.batches == 0 {
        return Err(CliError::usage("config needs batches >= 1"));
    }
    let seeds: Vec<u64> = (0..cfg.batches as u64).map(|i| cfg.seed + i).collect();
    let report = compare_controllers(&net, &layout, &policy, &seeds, cfg.samples_per_batch)?;

    let sim_path = write_artifact(&cfg.out_dir, "simulation.csv", &report.to_csv())?;
    let summary_path = write_artifact(&cfg.out_dir, "summary.csv", &report.summary_csv())?;

    // Per-sample trace of the compiled controller on the first batch.
    let (gt, evidence) = stage_batch_with(&net, &layout, seeds[0], cfg.samples_per_batch)?;
    let model = compiler::compile(&net, &evidence, layout.sensor, layout.target)?;
    let rule = compiler::compile_rule(&model, &policy)?;
    let (_, trace) = run_batch_with_trace(&gt, &Controller::Bayesian { model, rule }, &policy)?;
    let trace_path = write_artifact(&cfg.out_dir, "trace.csv", &trace_csv(&trace))?;

    println!("batches: {}", cfg.batches);
    println!("samples per batch: {}", cfg.samples_per_batch);
    println!("naive threshold (swept): {}", report.naive_threshold);
    for s in &report.summaries {
        println!(
            "{}: mean loss {}, mean regret {}, mean slag {}, mean violation rate {}",
            s.controller,
            s.mean_realized_loss,
            s.mean_regret,
            s.mean_slag_fraction,
            s.mean_violation_rate
        );
    }
    eprintln!(
        "wrote {} {} {}",
        sim_path.display(),
        summary_path.display(),
        trace_path.display()
    );
    Ok(())
}

// ── report ───────────────────────────────────────────────────────────────

pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let model_path = cfg.model_path();
    let text = std::fs::read_to_string(&model_path).map_err(|e| {
        CliError::io(format!(
            "cannot read compiled model {}: {e} (run `gammasort compile` first)",
            model_path.display()
        ))
    })?;
    let model = CompiledModel::from_json(&text)?;
    let policy = cfg.policy()?;
    let rule = compiler::compile_rule(&model, &policy)?;

    // Ellipse CSV: one row per mixture component plus the moment-matched
    // single Gaussian, all at 95% coverage.
    let joint = JointGaussianMixture::new(
        model
            .components
            .iter()
            .map(|c| JointComponent {
                weight: c.weight,
                mean: DVector::from_column_slice(&c.mean),
                covariance: DMatrix::from_row_slice(2, 2, &[
                    c.covariance[0][0],
                    c.covariance[0][1],
                    c.covariance[1][0],
                    c.covariance[1][1],
                ]),
                source: c.source.iter().map(|&(v, s)| (NodeId(v), s)).collect(),
            })
            .collect(),
    )?;
    let mut ellipse_csv = String::from("center_x,center_y,axis1,axis2,angle_rad,weight,kind\n");
    let mut row = |e: &gammasort_core::mixture::Ellipse, weight: f64, kind: &str| {
        ellipse_csv.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{kind}\n",
            e.center[0], e.center[1], e.semi_major, e.semi_minor, e.angle, weight
        ));
    };
    let mut component_angles = Vec::new();
    for c in joint.components() {
        let e = ellipse_params(c, 0.95)?;
        component_angles.push(e.angle);
        row(&e, c.weight, "component");
    }
    let (mean, covariance) = joint.moment_match();
    let matched = JointComponent {
        weight: 1.0,
        mean,
        covariance,
        source: Vec::new(),
    };
    let approx = ellipse_params(&matched, 0.95)?;
    row(&approx, 1.0, "approximation");

    // Decision curve: posterior tail mass against the policy ratio.
    let mut curve_csv = String::from("s,tail_prob,threshold,action\n");
    let points = cfg.curve_points.max(2);
    for i in 0..points {
        let s = rule.scan[0] + (rule.scan[1] - rule.scan[0]) * i as f64 / (points - 1) as f64;
        let tail = tail_prob(&compiler::sensor_posterior(&model, s)?, policy.c_hat);
        let action = compiler::rule_decide(&rule, s);
        curve_csv.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{action}\n",
            s,
            tail,
            policy.ratio()
        ));
    }

    let ellipse_path = write_artifact(&cfg.out_dir, "ellipses.csv", &ellipse_csv)?;
    let curve_path = write_artifact(&cfg.out_dir, "decision_curve.csv", &curve_csv)?;

    println!("components: {}", model.components.len());
    println!(
        "component angles positive: {}/{}",
        component_angles.iter().filter(|&&a| a > 0.0).count(),
        component_angles.len()
    );
    println!("approximation angle: {}", approx.angle);
    println!("intervals: {}", rule.intervals.len());
    eprintln!("wrote {} {}", ellipse_path.display(), curve_path.display());
    Ok(())
}
