//! Generative simulation of the sorting line, end to end.
//!
//! A batch is a 100 cu ft box of excavated soil: one pit-section waste
//! configuration, one true batch contamination, one noisy assay. As the
//! box crosses the conveyor it is measured as ~1000 samples of 0.1 cu ft,
//! each with its own true contamination and gamma-sensor reading. This
//! module samples that story from a network's own equations
//! ([`stage_batch`]), runs controllers over the staged batch
//! ([`run_batch`]), and scores them against each other on identical ground
//! truth ([`compare_controllers`]).
//!
//! Controllers see only the per-sample sensor reading; the [`Oracle`]
//! variant sees the true contamination and provides the unbeatable
//! reference the regret column is measured against.
//!
//! Replayability is the contract: every generated number is determined by
//! (network, seed). The generator is ChaCha12, seeded per batch, so
//! batches are independent and may be staged in any order. Within a batch,
//! samples are processed sequentially to mirror the conveyor. Comparison
//! CSVs carry no wall-clock columns, so identical seeds give
//! byte-identical reports; latency lives only in [`RunMetrics`].
//!
//! Scoring uses the two-action loss model: diverting costs Λ₀ regardless
//! of the truth; accepting costs Λ₁ when the sample's true contamination
//! exceeds ĉ, else nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::compiler::{rule_decide, CompiledModel, DivertRule, Policy};
use crate::decision::Action;
use crate::error::{EngineError, Result};
use crate::indexing;
use crate::model::fixture::SortingLine;
use crate::model::{
    discrete_boundary, evidence_digest, network_digest, topo_sort, validate, Evidence, Network,
    NodeId,
};

/// Samples per staged batch: 0.1 cu ft samples out of a 100 cu ft box.
pub const DEFAULT_SAMPLES: usize = 1000;

// ── Line layout ──────────────────────────────────────────────────────────

/// Which nodes play the line roles in a network: the slow assay
/// observation, the true per-sample contamination, and the fast sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineLayout {
    /// Continuous node observed once per batch at the assay station.
    pub assay: NodeId,
    /// True per-sample contamination (the decision target).
    pub target: NodeId,
    /// Per-sample gamma sensor reading.
    pub sensor: NodeId,
}

impl LineLayout {
    /// The roles of the reference fixture.
    pub fn for_line(line: &SortingLine) -> LineLayout {
        LineLayout {
            assay: line.assay,
            target: line.sample_density,
            sensor: line.sensor,
        }
    }

    /// Check the roles make sense in `net`: all three continuous and
    /// distinct, the sensor downstream of the target (it reads the
    /// sample), and the assay batch-level (not downstream of the target).
    pub fn check(&self, net: &Network) -> Result<()> {
        for (role, id) in [
            ("assay", self.assay),
            ("target", self.target),
            ("sensor", self.sensor),
        ] {
            if net.continuous(id).is_none() {
                return Err(EngineError::Argument(format!(
                    "{role} node {id} must be a continuous node of '{}'",
                    net.name
                )));
            }
        }
        if self.assay == self.target || self.assay == self.sensor || self.target == self.sensor {
            return Err(EngineError::Argument(
                "assay, target, and sensor must be distinct nodes".into(),
            ));
        }
        let per_sample = descendants_inclusive(net, self.target);
        if !per_sample.contains(&self.sensor) {
            return Err(EngineError::Argument(format!(
                "sensor {} must be downstream of the target {}",
                net.label(self.sensor),
                net.label(self.target)
            )));
        }
        if per_sample.contains(&self.assay) {
            return Err(EngineError::Argument(format!(
                "assay {} must be batch-level, not downstream of the target {}",
                net.label(self.assay),
                net.label(self.target)
            )));
        }
        Ok(())
    }
}

/// The target and everything reachable from it. In a conditional-Gaussian
/// network these are all continuous (discrete nodes cannot descend from a
/// continuous one), so this is exactly the per-sample redraw set.
fn descendants_inclusive(net: &Network, root: NodeId) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([root]);
    let mut frontier = vec![root];
    while let Some(v) = frontier.pop() {
        for child in net.children(v) {
            if seen.insert(child) {
                frontier.push(child);
            }
        }
    }
    seen
}

// ── Ground truth ─────────────────────────────────────────────────────────

/// Everything the generator drew for one batch. Replayable: the recorded
/// seed reproduces the batch exactly on the same network.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGroundTruth {
    pub seed: u64,
    /// Digests of the network and the assay evidence this batch was staged
    /// from, for detecting stale compiled models at run time.
    pub network_digest: String,
    pub evidence_digest: String,
    /// Sampled mixture-source states: the pit-section configuration
    /// (the target's discrete boundary), sorted by node.
    pub sources: Vec<(NodeId, usize)>,
    /// True batch assay value — the number asserted as slow evidence.
    pub assay: f64,
    /// True per-sample contamination (log units).
    pub contamination: Vec<f64>,
    /// Per-sample sensor readings.
    pub sensor: Vec<f64>,
}

impl BatchGroundTruth {
    pub fn sample_count(&self) -> usize {
        self.contamination.len()
    }
}

/// Stage one batch with the default sample count: draw the pit-section
/// configuration and batch-level quantities once, then the per-sample
/// truths and sensor readings, and return the ground truth together with
/// the assay evidence a controller would be compiled against.
pub fn stage_batch(
    net: &Network,
    layout: &LineLayout,
    seed: u64,
) -> Result<(BatchGroundTruth, Evidence)> {
    stage_batch_with(net, layout, seed, DEFAULT_SAMPLES)
}

/// [`stage_batch`] with an explicit sample count. Expects a network that
/// passes [`validate`]; sampling reads CPT rows and CLG rows directly.
pub fn stage_batch_with(
    net: &Network,
    layout: &LineLayout,
    seed: u64,
    samples: usize,
) -> Result<(BatchGroundTruth, Evidence)> {
    layout.check(net)?;
    if samples == 0 {
        return Err(EngineError::Argument("batch needs at least one sample".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let order = topo_sort(net)?;
    let per_sample = descendants_inclusive(net, layout.target);

    // Batch-level pass: every node outside the per-sample set.
    let mut states: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut values: BTreeMap<NodeId, f64> = BTreeMap::new();
    for &v in &order {
        if per_sample.contains(&v) {
            continue;
        }
        draw_node(net, v, &mut states, &mut values, &mut rng);
    }
    let assay = values[&layout.assay];
    let evidence = Evidence::none().with_value(layout.assay, assay);

    // Per-sample passes: redraw the target's descendant closure, keeping
    // the batch-level draws fixed.
    let sample_order: Vec<NodeId> = order
        .iter()
        .copied()
        .filter(|v| per_sample.contains(v))
        .collect();
    let mut contamination = Vec::with_capacity(samples);
    let mut sensor = Vec::with_capacity(samples);
    for _ in 0..samples {
        for &v in &sample_order {
            draw_node(net, v, &mut states, &mut values, &mut rng);
        }
        contamination.push(values[&layout.target]);
        sensor.push(values[&layout.sensor]);
    }

    let boundary = discrete_boundary(net, layout.target)?;
    let sources: Vec<(NodeId, usize)> = boundary.iter().map(|&d| (d, states[&d])).collect();
    Ok((
        BatchGroundTruth {
            seed,
            network_digest: network_digest(net),
            evidence_digest: evidence_digest(net, &evidence),
            sources,
            assay,
            contamination,
            sensor,
        },
        evidence,
    ))
}

/// Draw one node from its local model given already-drawn parents.
fn draw_node(
    net: &Network,
    v: NodeId,
    states: &mut BTreeMap<NodeId, usize>,
    values: &mut BTreeMap<NodeId, f64>,
    rng: &mut ChaCha12Rng,
) {
    if let Some(d) = net.discrete(v) {
        let cards: Vec<usize> = d.parents.iter().map(|&p| net.cardinality(p)).collect();
        let cfg: Vec<usize> = d.parents.iter().map(|&p| states[&p]).collect();
        let row = &d.cpt[indexing::index_of(&cards, &cfg)];
        let mut u: f64 = rng.sample(rand::distr::StandardUniform);
        let mut state = row.len() - 1;
        for (s, &p) in row.iter().enumerate() {
            if u < p {
                state = s;
                break;
            }
            u -= p;
        }
        states.insert(v, state);
    } else {
        let c = net.continuous(v).expect("node is discrete or continuous");
        let disc: Vec<NodeId> = net.discrete_parents(v);
        let cards: Vec<usize> = disc.iter().map(|&p| net.cardinality(p)).collect();
        let cfg: Vec<usize> = disc.iter().map(|&p| states[&p]).collect();
        let row = &c.params[indexing::index_of(&cards, &cfg)];
        let mut mean = row.intercept;
        for (coef, p) in row.coefficients.iter().zip(net.continuous_parents(v)) {
            mean += coef * values[&p];
        }
        let z: f64 = StandardNormal.sample(rng);
        values.insert(v, mean + row.variance.sqrt() * z);
    }
}

// ── Controllers ──────────────────────────────────────────────────────────

/// A per-sample divert policy. Only [`Controller::Oracle`] sees the true
/// contamination; the others consume the sensor reading alone.
#[derive(Debug, Clone)]
pub enum Controller {
    /// The compiled pipeline: precompiled interval rule over the sensor.
    Bayesian {
        model: CompiledModel,
        rule: DivertRule,
    },
    /// Divert iff the raw sensor reading exceeds `threshold` (strict).
    NaiveThreshold { threshold: f64 },
    /// Divert iff the true contamination exceeds ĉ (strict): the
    /// perfect-information upper bound.
    Oracle,
}

impl Controller {
    /// Stable name for reports.
    pub fn name(&self) -> &'static str {
        match self {
            Controller::Bayesian { .. } => "bayesian",
            Controller::NaiveThreshold { .. } => "naive",
            Controller::Oracle => "oracle",
        }
    }
}

/// One decided sample in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub contamination: f64,
    pub sensor: f64,
    pub action: Action,
    /// Realized loss of this decision: Λ₀ if diverted, Λ₁ if a
    /// contaminated sample was accepted, 0 otherwise.
    pub loss: f64,
}

/// Per-sample decision trace as CSV (17 significant digits).
pub fn trace_csv(records: &[SampleRecord]) -> String {
    let mut out = String::from("index,contamination,sensor,action,loss\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{},{:.16e}\n",
            r.index, r.contamination, r.sensor, r.action, r.loss
        ));
    }
    out
}

/// Scores and timing for one controller over one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub controller: String,
    pub samples: usize,
    pub diverted: usize,
    /// Accepted samples whose true contamination exceeds ĉ.
    pub violations: usize,
    /// Diverted fraction of the batch (slag volume fraction).
    pub slag_fraction: f64,
    /// Violations per accepted sample (0 when nothing was accepted).
    pub violation_rate: f64,
    /// Total realized loss over the batch.
    pub realized_loss: f64,
    /// Realized loss of the perfect-information controller on this batch.
    pub oracle_loss: f64,
    /// `realized_loss − oracle_loss` (≥ 0 in expectation, and pointwise
    /// whenever Λ₀ ≤ Λ₁).
    pub regret: f64,
    /// Wall-clock seconds around the decision call only.
    pub latency_mean_s: f64,
    pub latency_max_s: f64,
    pub latency_p50_s: f64,
    pub latency_p99_s: f64,
}

/// Run one controller over a staged batch, sample by sample.
///
/// For the Bayesian controller the compiled model's digests must match the
/// batch's; a mismatch means the model was compiled from a different
/// network or different assay evidence and is rejected as stale.
pub fn run_batch(gt: &BatchGroundTruth, controller: &Controller, p: &Policy) -> Result<RunMetrics> {
    run_batch_with_trace(gt, controller, p).map(|(m, _)| m)
}

/// [`run_batch`], also returning the per-sample decision trace.
pub fn run_batch_with_trace(
    gt: &BatchGroundTruth,
    controller: &Controller,
    p: &Policy,
) -> Result<(RunMetrics, Vec<SampleRecord>)> {
    p.check()?;
    if let Controller::Bayesian { model, rule } = controller {
        if model.network_digest != gt.network_digest {
            return Err(EngineError::Configuration(
                "compiled model is stale: built from a different network than this batch".into(),
            ));
        }
        if model.evidence_digest != gt.evidence_digest {
            return Err(EngineError::Configuration(
                "compiled model is stale: built against different assay evidence than this batch"
                    .into(),
            ));
        }
        if rule.policy != *p {
            return Err(EngineError::Configuration(
                "divert rule was compiled for a different policy".into(),
            ));
        }
    }
    let n = gt.sample_count();
    if n == 0 {
        return Err(EngineError::Argument("batch has no samples".into()));
    }
    let mut records = Vec::with_capacity(n);
    let mut latencies = Vec::with_capacity(n);
    let mut diverted = 0usize;
    let mut violations = 0usize;
    let mut realized_loss = 0.0;
    for i in 0..n {
        let s = gt.sensor[i];
        let c = gt.contamination[i];
        let start = Instant::now();
        let action = match controller {
            Controller::Bayesian { rule, .. } => rule_decide(rule, s),
            Controller::NaiveThreshold { threshold } => {
                if s > *threshold {
                    Action::Divert
                } else {
                    Action::Accept
                }
            }
            Controller::Oracle => {
                if c > p.c_hat {
                    Action::Divert
                } else {
                    Action::Accept
                }
            }
        };
        latencies.push(start.elapsed().as_secs_f64());
        let loss = match action {
            Action::Divert => {
                diverted += 1;
                p.divert_cost
            }
            Action::Accept => {
                if c > p.c_hat {
                    violations += 1;
                    p.error_cost
                } else {
                    0.0
                }
            }
        };
        realized_loss += loss;
        records.push(SampleRecord {
            index: i,
            contamination: c,
            sensor: s,
            action,
            loss,
        });
    }
    let accepted = n - diverted;
    let oracle_loss = oracle_loss(gt, p);
    latencies.sort_by(f64::total_cmp);
    let metrics = RunMetrics {
        controller: controller.name().to_string(),
        samples: n,
        diverted,
        violations,
        slag_fraction: diverted as f64 / n as f64,
        violation_rate: if accepted > 0 {
            violations as f64 / accepted as f64
        } else {
            0.0
        },
        realized_loss,
        oracle_loss,
        regret: realized_loss - oracle_loss,
        latency_mean_s: latencies.iter().sum::<f64>() / n as f64,
        latency_max_s: *latencies.last().expect("non-empty batch"),
        latency_p50_s: percentile(&latencies, 0.50),
        latency_p99_s: percentile(&latencies, 0.99),
    };
    Ok((metrics, records))
}

/// Realized loss of the perfect-information rule on this batch.
fn oracle_loss(gt: &BatchGroundTruth, p: &Policy) -> f64 {
    gt.contamination
        .iter()
        .map(|&c| if c > p.c_hat { p.divert_cost } else { 0.0 })
        .sum()
}

/// Nearest-rank percentile of an ascending-sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// The exact loss-minimizing fixed sensor threshold over the given
/// batches, by prefix scan over samples sorted by sensor reading. This is
/// tuned on ground truth, making it an upper-bound baseline no deployable
/// fixed threshold can beat.
pub fn best_naive_threshold(batches: &[BatchGroundTruth], p: &Policy) -> Result<f64> {
    p.check()?;
    let mut pairs: Vec<(f64, f64)> = batches
        .iter()
        .flat_map(|gt| gt.sensor.iter().copied().zip(gt.contamination.iter().copied()))
        .collect();
    if pairs.is_empty() {
        return Err(EngineError::Argument(
            "threshold sweep needs at least one sample".into(),
        ));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Threshold t accepts exactly the sorted prefix {s ≤ t}; candidate
    // thresholds are each sample's reading (prefix of length k accepts the
    // first k) plus "divert everything" (k = 0).
    let n = pairs.len();
    let mut best_k = 0usize;
    let mut best_loss = p.divert_cost * n as f64;
    let mut accept_loss = 0.0;
    for (k, &(_, c)) in pairs.iter().enumerate() {
        accept_loss += if c > p.c_hat { p.error_cost } else { 0.0 };
        let loss = accept_loss + p.divert_cost * (n - 1 - k) as f64;
        if loss < best_loss {
            best_loss = loss;
            best_k = k + 1;
        }
    }
    Ok(if best_k == 0 {
        pairs[0].0 - 1.0
    } else {
        pairs[best_k - 1].0
    })
}

// ── Controller comparison ────────────────────────────────────────────────

/// One controller's scores on one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub batch: usize,
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// Mean scores for one controller across every batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSummary {
    pub controller: String,
    pub batches: usize,
    pub mean_slag_fraction: f64,
    pub mean_violation_rate: f64,
    pub mean_realized_loss: f64,
    pub mean_regret: f64,
}

/// All controllers scored on identical ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// The swept fixed threshold the naive controller used.
    pub naive_threshold: f64,
    pub rows: Vec<ComparisonRow>,
    pub summaries: Vec<ControllerSummary>,
}

impl ComparisonReport {
    /// Per-batch scores as CSV. Deliberately free of wall-clock columns so
    /// reruns with the same seeds are byte-identical.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "batch,seed,controller,samples,diverted,violations,\
             slag_fraction,violation_rate,realized_loss,oracle_loss,regret\n",
        );
        for row in &self.rows {
            let m = &row.metrics;
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                row.batch,
                row.seed,
                m.controller,
                m.samples,
                m.diverted,
                m.violations,
                m.slag_fraction,
                m.violation_rate,
                m.realized_loss,
                m.oracle_loss,
                m.regret
            ));
        }
        out
    }

    /// Per-controller means as CSV (same determinism guarantee).
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "controller,batches,mean_slag_fraction,mean_violation_rate,\
             mean_realized_loss,mean_regret\n",
        );
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                s.controller,
                s.batches,
                s.mean_slag_fraction,
                s.mean_violation_rate,
                s.mean_realized_loss,
                s.mean_regret
            ));
        }
        out
    }
}

/// Stage one batch per seed, compile the runtime model against each
/// batch's assay evidence, sweep the naive baseline's threshold, and score
/// Bayesian, naive, and oracle controllers on identical ground truth.
pub fn compare_controllers(
    net: &Network,
    layout: &LineLayout,
    p: &Policy,
    seeds: &[u64],
    samples_per_batch: usize,
) -> Result<ComparisonReport> {
    let violations = validate(net);
    if let Some(v) = violations.first() {
        return Err(EngineError::Structural(format!(
            "network '{}' fails validation: {v}",
            net.name
        )));
    }
    if seeds.is_empty() {
        return Err(EngineError::Argument("comparison needs at least one seed".into()));
    }
    let mut staged = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (gt, evidence) = stage_batch_with(net, layout, seed, samples_per_batch)?;
        let model = crate::compiler::compile(net, &evidence, layout.sensor, layout.target)?;
        let rule = crate::compiler::compile_rule(&model, p)?;
        staged.push((gt, model, rule));
    }
    let threshold =
        best_naive_threshold(&staged.iter().map(|(gt, ..)| gt.clone()).collect::<Vec<_>>(), p)?;

    let mut rows = Vec::new();
    for (batch, (gt, model, rule)) in staged.iter().enumerate() {
        let controllers = [
            Controller::Oracle,
            Controller::Bayesian {
                model: model.clone(),
                rule: rule.clone(),
            },
            Controller::NaiveThreshold { threshold },
        ];
        for controller in &controllers {
            rows.push(ComparisonRow {
                batch,
                seed: gt.seed,
                metrics: run_batch(gt, controller, p)?,
            });
        }
    }

    let mut summaries = Vec::new();
    for name in ["oracle", "bayesian", "naive"] {
        let picked: Vec<&RunMetrics> = rows
            .iter()
            .map(|r| &r.metrics)
            .filter(|m| m.controller == name)
            .collect();
        let n = picked.len() as f64;
        summaries.push(ControllerSummary {
            controller: name.to_string(),
            batches: picked.len(),
            mean_slag_fraction: picked.iter().map(|m| m.slag_fraction).sum::<f64>() / n,
            mean_violation_rate: picked.iter().map(|m| m.violation_rate).sum::<f64>() / n,
            mean_realized_loss: picked.iter().map(|m| m.realized_loss).sum::<f64>() / n,
            mean_regret: picked.iter().map(|m| m.regret).sum::<f64>() / n,
        });
    }
    Ok(ComparisonReport {
        naive_threshold: threshold,
        rows,
        summaries,
    })
}

// ── Tests ────────────────────────────────────────────────────────────────
