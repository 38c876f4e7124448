//! Batch-staging compilation: full network → millisecond runtime model.
//!
//! Between batches the controller has seconds; between samples it has
//! under a millisecond. This module does the expensive part while the
//! batch is staged: it collapses the whole network plus the slow
//! observations into a [`CompiledModel`] — a small mixture of bivariate
//! Gaussians over (sensor, target) with every nuisance variable integrated
//! out — and further precompiles the divert policy into a [`DivertRule`],
//! a sorted list of sensor intervals a PLC can apply with a binary search.
//!
//! At run time [`sensor_posterior`] conditions each component on the
//! sensor reading in closed form (no tree propagation), and
//! [`rule_decide`] is a pure interval lookup.
//!
//! Compiled artifacts carry content digests of the network and the baked
//! evidence so downstream users can detect stale compilations.

use serde::{Deserialize, Serialize};

use crate::decision::{decide, Action};
use crate::error::{EngineError, Result};
use crate::mixture::{exact_joint_mixture, GaussianMixture, MixtureComponent};
use crate::model::{evidence_digest, network_digest, Evidence, Network, NodeId, VARIANCE_FLOOR};
use crate::potential::log_sum_exp;

/// Schema tag for serialized compiled artifacts.
pub const COMPILED_SCHEMA_VERSION: u32 = 1;

/// Number of scan points used by [`compile_rule`]. This is the resolution
/// limit: a divert island narrower than the grid step can be missed.
pub const RULE_GRID: usize = 4096;

/// Absolute accuracy in sensor units to which interval endpoints are
/// bisected, and the half-width of the tolerance band around endpoints
/// inside which [`rule_decide`] may legitimately differ from a direct
/// posterior decision.
pub const RULE_TOL: f64 = 1e-9;

// ── Policy ───────────────────────────────────────────────────────────────

/// The divert loss policy: reject threshold (log-contamination units),
/// cost of diverting a sample to slag, and cost of accepting a sample
/// that is actually over the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    /// Rejection threshold ĉ on log contamination.
    pub c_hat: f64,
    /// Cost of conversion to slag and long-term storage (≥ 0).
    pub divert_cost: f64,
    /// Cost of wrongly accepting a contaminated sample (> 0).
    pub error_cost: f64,
}

impl Policy {
    pub fn new(c_hat: f64, divert_cost: f64, error_cost: f64) -> Result<Policy> {
        let p = Policy {
            c_hat,
            divert_cost,
            error_cost,
        };
        p.check()?;
        Ok(p)
    }

    /// Re-validate (useful after deserialization).
    pub fn check(&self) -> Result<()> {
        if !self.c_hat.is_finite() {
            return Err(EngineError::Argument(format!(
                "reject threshold {} must be finite",
                self.c_hat
            )));
        }
        if !(self.divert_cost.is_finite() && self.divert_cost >= 0.0) {
            return Err(EngineError::Argument(format!(
                "divert cost {} must be finite and non-negative",
                self.divert_cost
            )));
        }
        if !(self.error_cost.is_finite() && self.error_cost > 0.0) {
            return Err(EngineError::Argument(format!(
                "error cost {} must be finite and positive",
                self.error_cost
            )));
        }
        Ok(())
    }

    /// The decision ratio Λ₀/Λ₁ the tail probability is compared against.
    pub fn ratio(&self) -> f64 {
        self.divert_cost / self.error_cost
    }
}

// ── Compiled model ───────────────────────────────────────────────────────

/// One runtime component: weight, (sensor, target) mean, and 2×2
/// covariance, plus the source configuration it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledComponent {
    pub weight: f64,
    /// `[sensor, target]` means.
    pub mean: [f64; 2],
    /// Row-major `[[ss, st], [ts, tt]]`.
    pub covariance: [[f64; 2]; 2],
    /// Source configuration as (node index, state index), sorted by node.
    pub source: Vec<(usize, usize)>,
    /// Human-readable rendering, e.g. `"WC=wt0 L=intact M=dry F=coarse"`.
    pub label: String,
}

/// The staged runtime model: a bivariate mixture over (sensor, target)
/// with the slow evidence baked in, tagged with content digests so a
/// stale compilation is detectable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledModel {
    pub schema_version: u32,
    pub network_name: String,
    pub network_digest: String,
    pub evidence_digest: String,
    pub sensor: usize,
    pub sensor_label: String,
    pub target: usize,
    pub target_label: String,
    /// Baked discrete observations as (node label, state name).
    pub baked_states: Vec<(String, String)>,
    /// Baked continuous observations as (node label, value).
    pub baked_values: Vec<(String, f64)>,
    pub components: Vec<CompiledComponent>,
}

impl CompiledModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("compiled model serializes")
    }

    pub fn from_json(text: &str) -> Result<CompiledModel> {
        let cm: CompiledModel = serde_json::from_str(text)?;
        if cm.schema_version != COMPILED_SCHEMA_VERSION {
            return Err(EngineError::Configuration(format!(
                "compiled model schema {} unsupported (expected {COMPILED_SCHEMA_VERSION})",
                cm.schema_version
            )));
        }
        Ok(cm)
    }

    /// Confirm this model was compiled from exactly `net` and `evidence`.
    pub fn verify_against(&self, net: &Network, evidence: &Evidence) -> Result<()> {
        if self.network_digest != network_digest(net) {
            return Err(EngineError::Configuration(format!(
                "compiled model was built from a different network than '{}'",
                net.name
            )));
        }
        if self.evidence_digest != evidence_digest(net, evidence) {
            return Err(EngineError::Configuration(
                "compiled model was built against different evidence".into(),
            ));
        }
        Ok(())
    }
}

/// Collapse `net` plus the slow evidence into the runtime model over
/// `(sensor, target)`. All other variables — discrete sources excepted —
/// are integrated out exactly.
pub fn compile(
    net: &Network,
    slow_evidence: &Evidence,
    sensor: NodeId,
    target: NodeId,
) -> Result<CompiledModel> {
    if sensor == target {
        return Err(EngineError::Argument(
            "sensor and target must be distinct nodes".into(),
        ));
    }
    let m = exact_joint_mixture(net, &[sensor, target], slow_evidence)?;
    let mut components = Vec::with_capacity(m.components().len());
    for c in m.components() {
        let ss = c.covariance[(0, 0)];
        if !(ss > 0.0) {
            return Err(EngineError::Numerical(format!(
                "component '{}' has non-positive sensor variance {ss}",
                render_source(net, &c.source)
            )));
        }
        components.push(CompiledComponent {
            weight: c.weight,
            mean: [c.mean[0], c.mean[1]],
            covariance: [
                [c.covariance[(0, 0)], c.covariance[(0, 1)]],
                [c.covariance[(1, 0)], c.covariance[(1, 1)]],
            ],
            source: c.source.iter().map(|&(v, s)| (v.0, s)).collect(),
            label: render_source(net, &c.source),
        });
    }
    let mut baked_states: Vec<(String, String)> = slow_evidence
        .states
        .iter()
        .map(|(&v, &s)| {
            let name = net
                .discrete(v)
                .map(|d| d.states[s].clone())
                .unwrap_or_else(|| s.to_string());
            (net.label(v).to_string(), name)
        })
        .collect();
    baked_states.sort();
    let mut baked_values: Vec<(String, f64)> = slow_evidence
        .values
        .iter()
        .map(|(&v, &x)| (net.label(v).to_string(), x))
        .collect();
    baked_values.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(CompiledModel {
        schema_version: COMPILED_SCHEMA_VERSION,
        network_name: net.name.clone(),
        network_digest: network_digest(net),
        evidence_digest: evidence_digest(net, slow_evidence),
        sensor: sensor.0,
        sensor_label: net.label(sensor).to_string(),
        target: target.0,
        target_label: net.label(target).to_string(),
        baked_states,
        baked_values,
        components,
    })
}

fn render_source(net: &Network, source: &[(NodeId, usize)]) -> String {
    source
        .iter()
        .map(|&(v, s)| {
            let state = net
                .discrete(v)
                .map(|d| d.states[s].clone())
                .unwrap_or_else(|| s.to_string());
            format!("{}={state}", net.label(v))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

// ── Runtime conditioning ─────────────────────────────────────────────────

/// Condition the compiled model on a sensor reading: reweight each
/// component by its sensor density at `s` and condition its bivariate
/// Gaussian on the reading, all in closed form.
///
/// If every component's density underflows, the answer degenerates to the
/// component with the greatest log-weight (weight 1) and a warning is
/// logged — at such readings the model is extrapolating wildly anyway.
pub fn sensor_posterior(cm: &CompiledModel, s: f64) -> Result<GaussianMixture> {
    if !s.is_finite() {
        return Err(EngineError::Argument(format!(
            "sensor reading {s} must be finite"
        )));
    }
    if cm.components.is_empty() {
        return Err(EngineError::Configuration(
            "compiled model has no components".into(),
        ));
    }
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut log_w = Vec::with_capacity(cm.components.len());
    let mut conditioned = Vec::with_capacity(cm.components.len());
    for c in &cm.components {
        let [mu_s, mu_t] = c.mean;
        let ss = c.covariance[0][0];
        let st = 0.5 * (c.covariance[0][1] + c.covariance[1][0]);
        let tt = c.covariance[1][1];
        let lw = c.weight.ln() - half_ln_2pi - 0.5 * ss.ln() - 0.5 * (s - mu_s).powi(2) / ss;
        log_w.push(lw);
        let mean = mu_t + st / ss * (s - mu_s);
        let variance = (tt - st * st / ss).max(VARIANCE_FLOOR);
        conditioned.push((mean, variance));
    }
    let total = log_sum_exp(&log_w);
    let weights: Option<Vec<f64>> = match total {
        Some(t) if t.is_finite() => Some(log_w.iter().map(|&l| (l - t).exp()).collect()),
        _ => None,
    };
    let components = match weights {
        Some(ws) => cm
            .components
            .iter()
            .zip(conditioned.iter().zip(ws))
            .filter(|&(_, (_, w))| w > 0.0)
            .map(|(c, (&(mean, variance), weight))| MixtureComponent {
                weight,
                mean,
                variance,
                source: c.source.iter().map(|&(v, s)| (NodeId(v), s)).collect(),
            })
            .collect(),
        None => {
            let best = log_w
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .expect("at least one component");
            log::warn!(
                "sensor reading {s} underflows every component of '{}'; \
                 pinning to the dominant component",
                cm.network_name
            );
            let (mean, variance) = conditioned[best];
            vec![MixtureComponent {
                weight: 1.0,
                mean,
                variance,
                source: cm.components[best]
                    .source
                    .iter()
                    .map(|&(v, s)| (NodeId(v), s))
                    .collect(),
            }]
        }
    };
    GaussianMixture::from_unnormalized(components)
}

// ── Precompiled divert rule ──────────────────────────────────────────────

/// The policy precompiled against a model: sorted disjoint closed sensor
/// intervals in which diverting is optimal, plus enough metadata to apply
/// and audit the rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivertRule {
    pub schema_version: u32,
    /// Closed `[start, end]` intervals, sorted and disjoint.
    pub intervals: Vec<[f64; 2]>,
    pub policy: Policy,
    /// The sensor range that was scanned.
    pub scan: [f64; 2],
    /// Whether readings below/above the scanned range divert (the nearest
    /// boundary's decision, extrapolated).
    pub below_range_diverts: bool,
    pub above_range_diverts: bool,
    /// Endpoint bisection accuracy in sensor units.
    pub tolerance: f64,
    pub grid_points: usize,
}

impl DivertRule {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("divert rule serializes")
    }

    pub fn from_json(text: &str) -> Result<DivertRule> {
        let r: DivertRule = serde_json::from_str(text)?;
        if r.schema_version != COMPILED_SCHEMA_VERSION {
            return Err(EngineError::Configuration(format!(
                "divert rule schema {} unsupported (expected {COMPILED_SCHEMA_VERSION})",
                r.schema_version
            )));
        }
        Ok(r)
    }

    /// Flat interval table for the line controller: one row per interval,
    /// 17 significant digits.
    pub fn to_plc_csv(&self) -> String {
        let mut out = String::from("interval,divert_from,divert_to\n");
        for (i, iv) in self.intervals.iter().enumerate() {
            out.push_str(&format!("{i},{:.16e},{:.16e}\n", iv[0], iv[1]));
        }
        out
    }
}

/// Precompute the divert set `{s : P(target > ĉ | s) · Λ₁ > Λ₀}` as
/// sensor intervals: scan a uniform grid over every component's ±6σ
/// sensor range, then bisect each decision flip to [`RULE_TOL`].
pub fn compile_rule(cm: &CompiledModel, p: &Policy) -> Result<DivertRule> {
    compile_rule_with_grid(cm, p, RULE_GRID)
}

/// [`compile_rule`] with an explicit grid density (the resolution limit:
/// divert islands narrower than the grid step can be missed).
pub fn compile_rule_with_grid(
    cm: &CompiledModel,
    p: &Policy,
    grid_points: usize,
) -> Result<DivertRule> {
    p.check()?;
    if grid_points < 2 {
        return Err(EngineError::Argument(
            "rule grid needs at least 2 points".into(),
        ));
    }
    if cm.components.is_empty() {
        return Err(EngineError::Configuration(
            "compiled model has no components".into(),
        ));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut sd_max: f64 = 0.0;
    for c in &cm.components {
        lo = lo.min(c.mean[0]);
        hi = hi.max(c.mean[0]);
        sd_max = sd_max.max(c.covariance[0][0].sqrt());
    }
    let lo = lo - 6.0 * sd_max;
    let hi = hi + 6.0 * sd_max;

    if p.ratio() >= 1.0 {
        // The tail probability cannot exceed 1: diverting never pays.
        return Ok(DivertRule {
            schema_version: COMPILED_SCHEMA_VERSION,
            intervals: Vec::new(),
            policy: *p,
            scan: [lo, hi],
            below_range_diverts: false,
            above_range_diverts: false,
            tolerance: RULE_TOL,
            grid_points,
        });
    }

    let diverts = |s: f64| -> Result<bool> {
        Ok(matches!(
            decide(&sensor_posterior(cm, s)?, p),
            Action::Divert
        ))
    };

    let step = (hi - lo) / (grid_points - 1) as f64;
    let mut grid_in = Vec::with_capacity(grid_points);
    for i in 0..grid_points {
        grid_in.push(diverts(lo + step * i as f64)?);
    }

    // Bisect a decision flip inside (a, b] down to the tolerance; returns
    // the boundary estimate.
    let refine = |mut a: f64, mut b: f64, in_at_a: bool| -> Result<f64> {
        while b - a > RULE_TOL {
            let mid = 0.5 * (a + b);
            if diverts(mid)? == in_at_a {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(0.5 * (a + b))
    };

    let mut intervals: Vec<[f64; 2]> = Vec::new();
    let mut open: Option<f64> = if grid_in[0] { Some(lo) } else { None };
    for i in 1..grid_points {
        if grid_in[i] == grid_in[i - 1] {
            continue;
        }
        let a = lo + step * (i - 1) as f64;
        let b = lo + step * i as f64;
        let boundary = refine(a, b, grid_in[i - 1])?;
        match open.take() {
            Some(start) => intervals.push([start, boundary]),
            None => open = Some(boundary),
        }
    }
    if let Some(start) = open {
        intervals.push([start, hi]);
    }
    Ok(DivertRule {
        schema_version: COMPILED_SCHEMA_VERSION,
        intervals,
        policy: *p,
        scan: [lo, hi],
        below_range_diverts: grid_in[0],
        above_range_diverts: *grid_in.last().expect("non-empty grid"),
        tolerance: RULE_TOL,
        grid_points,
    })
}

/// Apply a precompiled rule: closed-interval membership via binary
/// search. Readings outside the scanned range inherit the nearest
/// boundary's decision (and are logged — the rule is extrapolating).
pub fn rule_decide(rule: &DivertRule, s: f64) -> Action {
    if s.is_nan() {
        log::warn!("sensor reading is NaN; accepting by default");
        return Action::Accept;
    }
    if s < rule.scan[0] {
        log::debug!(
            "sensor reading {s} below scanned range [{}, {}]; extrapolating",
            rule.scan[0],
            rule.scan[1]
        );
        return divert_action(rule.below_range_diverts);
    }
    if s > rule.scan[1] {
        log::debug!(
            "sensor reading {s} above scanned range [{}, {}]; extrapolating",
            rule.scan[0],
            rule.scan[1]
        );
        return divert_action(rule.above_range_diverts);
    }
    let idx = rule.intervals.partition_point(|iv| iv[0] <= s);
    if idx > 0 && s <= rule.intervals[idx - 1][1] {
        Action::Divert
    } else {
        Action::Accept
    }
}

fn divert_action(divert: bool) -> Action {
    if divert {
        Action::Divert
    } else {
        Action::Accept
    }
}

// ── Tests ────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::tail_prob;
    use crate::model::fixture::reference_fixture;
    use crate::model::{ClgRow, NetworkBuilder};
    use approx::assert_abs_diff_eq;

    fn fixture_model() -> (CompiledModel, crate::model::fixture::SortingLine, Evidence) {
        let line = reference_fixture();
        let z = Evidence::none().with_value(line.assay, -2.4);
        let cm = compile(&line.net, &z, line.sensor, line.sample_density).unwrap();
        (cm, line, z)
    }

    #[test]
    fn sourceless_net_compiles_to_direct_conditioning() {
        let mut b = NetworkBuilder::new("plain");
        let t = b.continuous("T", &[], vec![ClgRow::new(1.0, vec![], 2.0)]);
        let s = b.continuous("S", &[t], vec![ClgRow::new(0.0, vec![0.9], 0.5)]);
        let net = b.build();
        let cm = compile(&net, &Evidence::none(), s, t).unwrap();
        assert_eq!(cm.components.len(), 1);
        let c = &cm.components[0];
        assert_abs_diff_eq!(c.weight, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.mean[0], 0.9, epsilon = 1e-10);
        assert_abs_diff_eq!(c.mean[1], 1.0, epsilon = 1e-10);
        // cov(S,T) = 0.9·2, var(S) = 0.5 + 0.81·2.
        assert_abs_diff_eq!(c.covariance[0][1], 1.8, epsilon = 1e-10);
        assert_abs_diff_eq!(c.covariance[0][0], 2.12, epsilon = 1e-10);

        // Conditioning on a reading shifts the target by (cov/var)(s−μ).
        let post = sensor_posterior(&cm, 1.5).unwrap();
        assert_eq!(post.components().len(), 1);
        let expect_mean = 1.0 + 1.8 / 2.12 * (1.5 - 0.9);
        let expect_var = 2.0 - 1.8 * 1.8 / 2.12;
        assert_abs_diff_eq!(post.components()[0].mean, expect_mean, epsilon = 1e-10);
        assert_abs_diff_eq!(post.components()[0].variance, expect_var, epsilon = 1e-10);
    }

    #[test]
    fn fixture_compiles_one_component_per_source_configuration() {
        let (cm, line, z) = fixture_model();
        assert_eq!(cm.components.len(), 3 * 2 * 2 * 2);
        assert_eq!(cm.sensor_label, "SS");
        assert_eq!(cm.target_label, "SCD");
        assert_eq!(cm.baked_values, vec![("ACD".to_string(), -2.4)]);
        assert!(cm.components[0].label.starts_with("WC="));
        let total: f64 = cm.components.iter().map(|c| c.weight).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        cm.verify_against(&line.net, &z).unwrap();
        let other = Evidence::none().with_value(line.assay, -2.5);
        assert!(matches!(
            cm.verify_against(&line.net, &other),
            Err(EngineError::Configuration(_))
        ));
    }

    #[test]
    fn compilation_is_deterministic() {
        let (a, line, z) = fixture_model();
        let b = compile(&line.net, &z, line.sensor, line.sample_density).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let rt = CompiledModel::from_json(&a.to_json()).unwrap();
        assert_eq!(rt, a);
    }

    #[test]
    fn symmetric_reading_leaves_balanced_weights_alone() {
        let cm = CompiledModel {
            schema_version: COMPILED_SCHEMA_VERSION,
            network_name: "toy".into(),
            network_digest: String::new(),
            evidence_digest: String::new(),
            sensor: 0,
            sensor_label: "S".into(),
            target: 1,
            target_label: "T".into(),
            baked_states: vec![],
            baked_values: vec![],
            components: vec![
                CompiledComponent {
                    weight: 0.5,
                    mean: [-1.0, 0.0],
                    covariance: [[1.0, 0.3], [0.3, 1.0]],
                    source: vec![(2, 0)],
                    label: "D=a".into(),
                },
                CompiledComponent {
                    weight: 0.5,
                    mean: [1.0, 2.0],
                    covariance: [[1.0, 0.3], [0.3, 1.0]],
                    source: vec![(2, 1)],
                    label: "D=b".into(),
                },
            ],
        };
        let post = sensor_posterior(&cm, 0.0).unwrap();
        assert_abs_diff_eq!(post.components()[0].weight, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(post.components()[1].weight, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn underflowing_reading_pins_the_dominant_component() {
        let mut cm = fixture_model().0;
        for c in &mut cm.components {
            c.covariance = [[1e-12, 0.0], [0.0, 1.0]];
        }
        let post = sensor_posterior(&cm, 1e160).unwrap();
        assert_eq!(post.components().len(), 1);
        assert_abs_diff_eq!(post.components()[0].weight, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn free_diversion_covers_the_whole_scan() {
        let (cm, ..) = fixture_model();
        let p = Policy::new(0.0, 0.0, 1.0).unwrap();
        let rule = compile_rule(&cm, &p).unwrap();
        assert_eq!(rule.intervals.len(), 1);
        assert_eq!(rule.intervals[0], rule.scan);
        assert!(rule.below_range_diverts && rule.above_range_diverts);
    }

    #[test]
    fn unprofitable_diversion_compiles_to_an_empty_rule() {
        let (cm, ..) = fixture_model();
        let p = Policy::new(0.0, 1.0, 1.0).unwrap();
        let rule = compile_rule(&cm, &p).unwrap();
        assert!(rule.intervals.is_empty());
        assert!(matches!(rule_decide(&rule, 0.0), Action::Accept));
        let p2 = Policy::new(0.0, 2.0, 1.0).unwrap();
        assert!(compile_rule(&cm, &p2).unwrap().intervals.is_empty());
    }

    #[test]
    fn single_component_threshold_matches_direct_root_find() {
        // One component with positive sensor–target correlation: the rule
        // is a single right-unbounded interval whose start solves
        // P(T > ĉ | s) = Λ₀/Λ₁.
        let mut b = NetworkBuilder::new("mono");
        let t = b.continuous("T", &[], vec![ClgRow::new(0.0, vec![], 1.0)]);
        let s = b.continuous("S", &[t], vec![ClgRow::new(0.0, vec![1.0], 0.4)]);
        let net = b.build();
        let cm = compile(&net, &Evidence::none(), s, t).unwrap();
        let p = Policy::new(0.5, 0.2, 1.0).unwrap();
        let rule = compile_rule(&cm, &p).unwrap();
        assert_eq!(rule.intervals.len(), 1, "{:?}", rule.intervals);
        assert_eq!(rule.intervals[0][1], rule.scan[1]);
        assert!(rule.above_range_diverts);
        assert!(!rule.below_range_diverts);

        // Independent bisection on the closed-form posterior.
        let f = |s_val: f64| {
            tail_prob(&sensor_posterior(&cm, s_val).unwrap(), p.c_hat) - p.ratio()
        };
        let (mut a, mut b2) = (rule.scan[0], rule.scan[1]);
        assert!(f(a) < 0.0 && f(b2) > 0.0);
        for _ in 0..80 {
            let mid = 0.5 * (a + b2);
            if f(mid) > 0.0 {
                b2 = mid;
            } else {
                a = mid;
            }
        }
        assert_abs_diff_eq!(rule.intervals[0][0], 0.5 * (a + b2), epsilon = 1e-7);
    }

    #[test]
    fn rule_membership_and_extrapolation() {
        let (cm, ..) = fixture_model();
        let p = Policy::new(-1.0, 0.05, 1.0).unwrap();
        let rule = compile_rule(&cm, &p).unwrap();
        assert!(!rule.intervals.is_empty());
        for iv in &rule.intervals {
            let mid = 0.5 * (iv[0] + iv[1]);
            assert!(matches!(rule_decide(&rule, mid), Action::Divert));
            assert!(matches!(rule_decide(&rule, iv[0]), Action::Divert));
            assert!(matches!(rule_decide(&rule, iv[1]), Action::Divert));
        }
        // Outside the scan, the nearest boundary's decision extends.
        let below = rule_decide(&rule, rule.scan[0] - 10.0);
        assert_eq!(
            matches!(below, Action::Divert),
            rule.below_range_diverts
        );
        let above = rule_decide(&rule, rule.scan[1] + 10.0);
        assert_eq!(
            matches!(above, Action::Divert),
            rule.above_range_diverts
        );
    }

    #[test]
    fn rule_agrees_with_direct_decision_off_boundary() {
        let (cm, ..) = fixture_model();
        let p = Policy::new(-1.5, 0.1, 1.0).unwrap();
        let rule = compile_rule(&cm, &p).unwrap();
        let mut checked = 0;
        for i in 0..2000 {
            let s = rule.scan[0] + (rule.scan[1] - rule.scan[0]) * (i as f64 + 0.5) / 2000.0;
            let near_boundary = rule
                .intervals
                .iter()
                .flat_map(|iv| iv.iter())
                .any(|&b| (s - b).abs() <= 2.0 * RULE_TOL);
            if near_boundary {
                continue;
            }
            let direct = decide(&sensor_posterior(&cm, s).unwrap(), &p);
            assert_eq!(rule_decide(&rule, s), direct, "s = {s}");
            checked += 1;
        }
        assert!(checked > 1900);
    }

    #[test]
    fn raising_the_divert_cost_shrinks_the_divert_set() {
        let (cm, ..) = fixture_model();
        let mut previous: Option<Vec<bool>> = None;
        for divert_cost in [0.02, 0.1, 0.3, 0.6, 0.9] {
            let p = Policy::new(-1.0, divert_cost, 1.0).unwrap();
            let rule = compile_rule_with_grid(&cm, &p, 512).unwrap();
            let in_set: Vec<bool> = (0..512)
                .map(|i| {
                    let s = rule.scan[0]
                        + (rule.scan[1] - rule.scan[0]) * i as f64 / 511.0;
                    matches!(rule_decide(&rule, s), Action::Divert)
                })
                .collect();
            if let Some(prev) = &previous {
                for (now, before) in in_set.iter().zip(prev) {
                    assert!(*before || !*now, "divert set grew with the divert cost");
                }
            }
            previous = Some(in_set);
        }
    }

    #[test]
    fn rule_serialization_round_trips_and_exports_csv() {
        let (cm, ..) = fixture_model();
        let p = Policy::new(-1.0, 0.05, 1.0).unwrap();
        let rule = compile_rule(&cm, &p).unwrap();
        let rt = DivertRule::from_json(&rule.to_json()).unwrap();
        assert_eq!(rt, rule);
        let csv = rule.to_plc_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("interval,divert_from,divert_to"));
        for (i, (line, iv)) in lines.zip(&rule.intervals).enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[0], i.to_string());
            assert_eq!(cells[1].parse::<f64>().unwrap(), iv[0]);
            assert_eq!(cells[2].parse::<f64>().unwrap(), iv[1]);
        }
    }

    #[test]
    fn policy_validation_rejects_bad_costs() {
        assert!(Policy::new(0.0, -0.1, 1.0).is_err());
        assert!(Policy::new(0.0, 0.1, 0.0).is_err());
        assert!(Policy::new(f64::NAN, 0.1, 1.0).is_err());
        assert!(Policy::new(0.0, 0.1, 1.0).is_ok());
    }
}
