//! Exact Gaussian-mixture posteriors for continuous targets.
//!
//! A calibrated tree answers moment queries, but the true posterior of a
//! continuous node is a *mixture* of Gaussians — one component per joint
//! configuration of the node's discrete mixture sources (its nearest
//! ancestral discrete layer). This module recovers that mixture exactly:
//! it instantiates the sources one at a time, accumulating each
//! configuration's probability by the chain rule and reading the target's
//! conditional moments from the tree once the configuration is complete.
//! Re-instantiation happens through [`CalibratedTree::branch_repropagate`]
//! on the smallest connected clique group covering the sources and the
//! target, so each step touches a few cliques rather than the whole tree.
//! A full-propagation fallback (one fresh calibration per configuration)
//! is kept behind [`MixtureOptions::full_propagation`] for cross-checking.
//!
//! The rest of the module quantifies how much structure the single-Gaussian
//! summary throws away: moment matching (the best single Gaussian),
//! Kullback–Leibler divergence from the mixture to any Gaussian via
//! adaptive quadrature, and covariance ellipses for plotting joint
//! components.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{EngineError, Result};
use crate::inference::{marginal_onto, CalibratedTree, CliqueTree, Marginal};
use crate::model::{discrete_boundary, Evidence, Network, NodeId, VARIANCE_FLOOR};
use crate::potential::log_sum_exp;

// ── Mixture types ────────────────────────────────────────────────────────

/// One component of a univariate mixture: `weight` is the posterior
/// probability of the source configuration in `source`, `mean`/`variance`
/// the target's conditional moments under it.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
    /// The discrete source configuration that produced this component,
    /// sorted by node id. Empty for hand-built mixtures.
    pub source: Vec<(NodeId, usize)>,
}

/// A univariate Gaussian mixture with strictly positive weights summing
/// to one and variances at or above the global floor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<MixtureComponent>,
}

impl GaussianMixture {
    /// Build from components whose weights already sum to one (within
    /// 1e-9); the stored weights are renormalized to machine precision.
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        Self::build(components, true)
    }

    /// Build from positively weighted components with any total mass.
    pub fn from_unnormalized(components: Vec<MixtureComponent>) -> Result<Self> {
        Self::build(components, false)
    }

    fn build(mut components: Vec<MixtureComponent>, check_sum: bool) -> Result<Self> {
        if components.is_empty() {
            return Err(EngineError::Argument(
                "a mixture needs at least one component".into(),
            ));
        }
        for c in &mut components {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(EngineError::Argument(format!(
                    "component weight {} is not positive and finite",
                    c.weight
                )));
            }
            if !c.mean.is_finite() || !c.variance.is_finite() {
                return Err(EngineError::Argument(
                    "component moments must be finite".into(),
                ));
            }
            c.variance = c.variance.max(VARIANCE_FLOOR);
        }
        let sum: f64 = components.iter().map(|c| c.weight).sum();
        if check_sum && (sum - 1.0).abs() > 1e-9 {
            return Err(EngineError::Argument(format!(
                "component weights sum to {sum}, expected 1"
            )));
        }
        for c in &mut components {
            c.weight /= sum;
        }
        Ok(GaussianMixture { components })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// Mean and variance of the single Gaussian with the mixture's first
    /// two moments (law of total variance). Among all Gaussians this one
    /// minimizes the divergence from the mixture.
    pub fn moment_match(&self) -> (f64, f64) {
        let mean: f64 = self.components.iter().map(|c| c.weight * c.mean).sum();
        let var: f64 = self
            .components
            .iter()
            .map(|c| c.weight * (c.variance + (c.mean - mean).powi(2)))
            .sum();
        (mean, var)
    }
}

/// One component of a joint mixture over several continuous targets.
/// `mean[i]` and row/column `i` of `covariance` refer to the `i`-th
/// requested target.
#[derive(Debug, Clone, PartialEq)]
pub struct JointComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub source: Vec<(NodeId, usize)>,
}

/// A joint Gaussian mixture (typically bivariate: a sensor paired with
/// the contamination it measures). Weights are strictly positive and sum
/// to one; covariances are symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussianMixture {
    targets: Vec<NodeId>,
    components: Vec<JointComponent>,
}

/// The common bivariate case.
pub type GaussianMixture2D = JointGaussianMixture;

impl JointGaussianMixture {
    /// Build from components whose weights already sum to one (1e-9).
    pub fn new(components: Vec<JointComponent>) -> Result<Self> {
        Self::build(Vec::new(), components, true)
    }

    /// Build from positively weighted components with any total mass.
    pub fn from_unnormalized(components: Vec<JointComponent>) -> Result<Self> {
        Self::build(Vec::new(), components, false)
    }

    fn build(
        targets: Vec<NodeId>,
        mut components: Vec<JointComponent>,
        check_sum: bool,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(EngineError::Argument(
                "a mixture needs at least one component".into(),
            ));
        }
        let dim = components[0].mean.len();
        for c in &mut components {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(EngineError::Argument(format!(
                    "component weight {} is not positive and finite",
                    c.weight
                )));
            }
            if c.mean.len() != dim || c.covariance.nrows() != dim || c.covariance.ncols() != dim {
                return Err(EngineError::Argument(format!(
                    "component dimensions disagree (expected {dim})"
                )));
            }
            if c.mean.iter().any(|x| !x.is_finite())
                || c.covariance.iter().any(|x| !x.is_finite())
            {
                return Err(EngineError::Argument(
                    "component moments must be finite".into(),
                ));
            }
            c.covariance = (&c.covariance + c.covariance.transpose()) * 0.5;
            let repaired = &c.covariance + DMatrix::identity(dim, dim) * VARIANCE_FLOOR;
            if nalgebra::Cholesky::new(repaired).is_none() {
                return Err(EngineError::Argument(
                    "component covariance is not positive semidefinite".into(),
                ));
            }
        }
        let sum: f64 = components.iter().map(|c| c.weight).sum();
        if check_sum && (sum - 1.0).abs() > 1e-9 {
            return Err(EngineError::Argument(format!(
                "component weights sum to {sum}, expected 1"
            )));
        }
        for c in &mut components {
            c.weight /= sum;
        }
        Ok(JointGaussianMixture {
            targets,
            components,
        })
    }

    pub fn components(&self) -> &[JointComponent] {
        &self.components
    }

    /// The requested target nodes, in the order `mean` entries refer to.
    /// Empty for hand-built mixtures.
    pub fn targets(&self) -> &[NodeId] {
        &self.targets
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    /// Joint moment matching: the mean and covariance of the single
    /// Gaussian sharing the mixture's first two moments (law of total
    /// covariance).
    pub fn moment_match(&self) -> (DVector<f64>, DMatrix<f64>) {
        let dim = self.dim();
        let mut mean = DVector::zeros(dim);
        for c in &self.components {
            mean += &c.mean * c.weight;
        }
        let mut cov = DMatrix::zeros(dim, dim);
        for c in &self.components {
            let d = &c.mean - &mean;
            cov += (&c.covariance + &d * d.transpose()) * c.weight;
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        (mean, cov)
    }
}

// ── Mixture extraction ───────────────────────────────────────────────────

/// Knobs for the mixture recursion.
#[derive(Debug, Clone)]
pub struct MixtureOptions {
    /// Refuse source enumerations with more configurations than this.
    pub cap: u64,
    /// Recalibrate the whole tree from scratch for every configuration
    /// instead of walking a clique branch. Slower; kept for cross-checks.
    pub full_propagation: bool,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        MixtureOptions {
            cap: 1_000_000,
            full_propagation: false,
        }
    }
}

/// Exact posterior mixture of continuous `x` given `z`: one component per
/// source configuration with positive posterior probability, in
/// lexicographic configuration order.
pub fn exact_mixture(net: &Network, x: NodeId, z: &Evidence) -> Result<GaussianMixture> {
    exact_mixture_with(net, x, z, &MixtureOptions::default())
}

/// [`exact_mixture`] with explicit options.
pub fn exact_mixture_with(
    net: &Network,
    x: NodeId,
    z: &Evidence,
    opts: &MixtureOptions,
) -> Result<GaussianMixture> {
    let joint = joint_components(net, &[x], z, opts)?;
    GaussianMixture::new(
        joint
            .into_iter()
            .map(|c| MixtureComponent {
                weight: c.weight,
                mean: c.mean[0],
                variance: c.covariance[(0, 0)],
                source: c.source,
            })
            .collect(),
    )
}

/// Exact joint posterior mixture over several continuous targets, driven
/// by the union of their source sets. Component means/covariances are
/// indexed in the order of `xs`.
pub fn exact_joint_mixture(
    net: &Network,
    xs: &[NodeId],
    z: &Evidence,
) -> Result<JointGaussianMixture> {
    exact_joint_mixture_with(net, xs, z, &MixtureOptions::default())
}

/// [`exact_joint_mixture`] with explicit options.
pub fn exact_joint_mixture_with(
    net: &Network,
    xs: &[NodeId],
    z: &Evidence,
    opts: &MixtureOptions,
) -> Result<JointGaussianMixture> {
    let components = joint_components(net, xs, z, opts)?;
    JointGaussianMixture::build(xs.to_vec(), components, true)
}

fn joint_components(
    net: &Network,
    targets: &[NodeId],
    z: &Evidence,
    opts: &MixtureOptions,
) -> Result<Vec<JointComponent>> {
    if targets.is_empty() {
        return Err(EngineError::Argument("no mixture targets given".into()));
    }
    let distinct: BTreeSet<NodeId> = targets.iter().copied().collect();
    if distinct.len() != targets.len() {
        return Err(EngineError::Argument("mixture targets repeat".into()));
    }
    for &t in targets {
        if t.0 >= net.node_count() {
            return Err(EngineError::Argument(format!("unknown node {t}")));
        }
        if net.is_discrete(t) {
            return Err(EngineError::Argument(format!(
                "mixture target {} is discrete",
                net.label(t)
            )));
        }
        if z.values.contains_key(&t) {
            return Err(EngineError::Argument(format!(
                "mixture target {} is observed; its posterior is a point",
                net.label(t)
            )));
        }
    }

    let mut boundary: BTreeSet<NodeId> = BTreeSet::new();
    for &t in targets {
        boundary.extend(discrete_boundary(net, t)?);
    }
    let free: Vec<NodeId> = boundary
        .iter()
        .copied()
        .filter(|v| !z.states.contains_key(v))
        .collect();
    let fixed: Vec<(NodeId, usize)> = boundary
        .iter()
        .filter_map(|v| z.states.get(v).map(|&s| (*v, s)))
        .collect();

    let mut needed: u128 = 1;
    for &v in &free {
        needed = needed.saturating_mul(net.cardinality(v) as u128);
    }
    if needed > opts.cap as u128 {
        return Err(EngineError::Capacity(
            needed.min(u64::MAX as u128) as u64,
            opts.cap,
        ));
    }

    let tree = CliqueTree::build_with_groups(net, &[targets.to_vec()])?;
    let target_clique = tree
        .cliques()
        .iter()
        .position(|c| targets.iter().all(|t| c.vars.contains(t)))
        .expect("the grouped build co-locates the targets");

    let mut raw = if opts.full_propagation {
        enumerate_full(net, &tree, targets, target_clique, z, &free)?
    } else {
        enumerate_by_branch(&tree, targets, target_clique, z, &free)?
    };

    for c in &mut raw {
        c.source.extend(fixed.iter().copied());
        c.source.sort_by_key(|&(v, _)| v);
    }
    Ok(raw)
}

/// Chain-rule recursion: instantiate the free sources one at a time,
/// multiplying in each conditional probability as it is read off the
/// partially instantiated tree, and recalibrating only the clique branch
/// that covers the sources and targets.
fn enumerate_by_branch(
    tree: &CliqueTree,
    targets: &[NodeId],
    target_clique: usize,
    z: &Evidence,
    free: &[NodeId],
) -> Result<Vec<JointComponent>> {
    let base = tree.propagate(z)?;
    let mut seeds = BTreeSet::from([target_clique]);
    for &v in free {
        seeds.insert(
            tree.clique_containing(v)
                .expect("every network variable has a home clique"),
        );
    }
    let branch = steiner_branch(tree, &seeds);

    let mut out = Vec::new();
    let mut assign: Vec<(NodeId, usize)> = Vec::new();
    descend(
        &base,
        targets,
        target_clique,
        free,
        &branch,
        1.0,
        &mut assign,
        &mut out,
    )?;
    if out.is_empty() {
        return Err(EngineError::InconsistentEvidence(
            "no source configuration has positive probability".into(),
        ));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn descend(
    cal: &CalibratedTree,
    targets: &[NodeId],
    target_clique: usize,
    free: &[NodeId],
    branch: &[usize],
    weight: f64,
    assign: &mut Vec<(NodeId, usize)>,
    out: &mut Vec<JointComponent>,
) -> Result<()> {
    let Some((&v, rest)) = free.split_first() else {
        let (mean, covariance) = component_moments(cal, target_clique, targets)?;
        if weight > 0.0 {
            out.push(JointComponent {
                weight,
                mean,
                covariance,
                source: assign.clone(),
            });
        }
        return Ok(());
    };
    let probs = match cal.node_marginal(v)? {
        Marginal::Discrete(p) => p,
        Marginal::Continuous(_) => unreachable!("sources are discrete"),
    };
    for (state, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue; // dead source state: never instantiated
        }
        let next = cal.branch_repropagate(branch, &Evidence::none().with_state(v, state))?;
        assign.push((v, state));
        descend(
            &next,
            targets,
            target_clique,
            rest,
            branch,
            weight * p,
            assign,
            out,
        )?;
        assign.pop();
    }
    Ok(())
}

/// Cross-check path: one full calibration per free-source configuration,
/// weights normalized from the evidence likelihoods.
fn enumerate_full(
    net: &Network,
    tree: &CliqueTree,
    targets: &[NodeId],
    target_clique: usize,
    z: &Evidence,
    free: &[NodeId],
) -> Result<Vec<JointComponent>> {
    let cards: Vec<usize> = free.iter().map(|&v| net.cardinality(v)).collect();
    let mut kept: Vec<(Vec<(NodeId, usize)>, f64, DVector<f64>, DMatrix<f64>)> = Vec::new();
    for cfg in crate::indexing::configs(&cards) {
        let mut e = z.clone();
        for (i, &v) in free.iter().enumerate() {
            e = e.with_state(v, cfg[i]);
        }
        match tree.propagate(&e) {
            Ok(cal) => {
                let (mean, cov) = component_moments(&cal, target_clique, targets)?;
                let source: Vec<(NodeId, usize)> =
                    free.iter().copied().zip(cfg.iter().copied()).collect();
                kept.push((source, cal.log_likelihood(), mean, cov));
            }
            Err(EngineError::InconsistentEvidence(_)) => continue,
            Err(err) => return Err(err),
        }
    }
    if kept.is_empty() {
        return Err(EngineError::InconsistentEvidence(
            "no source configuration has positive probability".into(),
        ));
    }
    let logs: Vec<f64> = kept.iter().map(|(_, l, _, _)| *l).collect();
    let total = log_sum_exp(&logs).expect("kept configurations have finite likelihood");
    Ok(kept
        .into_iter()
        .filter_map(|(source, log_w, mean, covariance)| {
            let weight = (log_w - total).exp();
            (weight > 0.0).then_some(JointComponent {
                weight,
                mean,
                covariance,
                source,
            })
        })
        .collect())
}

/// Read the targets' joint conditional moments out of their shared clique.
fn component_moments(
    cal: &CalibratedTree,
    target_clique: usize,
    targets: &[NodeId],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let pot = cal.clique_potential(target_clique);
    let m = marginal_onto(pot, targets)?;
    let ms = m.moment(0)?.ok_or_else(|| {
        EngineError::InconsistentEvidence("no mass left on the mixture targets".into())
    })?;
    let order = m.continuous_vars();
    let n = targets.len();
    let perm: Vec<usize> = targets
        .iter()
        .map(|t| {
            order
                .iter()
                .position(|o| o == t)
                .expect("targets survive the marginal")
        })
        .collect();
    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        mean[i] = ms.mean[perm[i]];
        for j in 0..n {
            cov[(i, j)] = ms.covariance[(perm[i], perm[j])];
        }
    }
    Ok((mean, cov))
}

/// Smallest connected clique group containing all seeds: the union of
/// root-ward paths, pruned back to non-seed leaves.
fn steiner_branch(tree: &CliqueTree, seeds: &BTreeSet<usize>) -> Vec<usize> {
    let cliques = tree.cliques();
    let mut keep = seeds.clone();
    for &s in seeds {
        let mut c = s;
        while let Some(p) = cliques[c].parent {
            if !keep.insert(p) {
                break; // the rest of this path is already kept
            }
            c = p;
        }
    }
    loop {
        let removable: Vec<usize> = keep
            .iter()
            .copied()
            .filter(|c| {
                !seeds.contains(c) && !cliques[*c].children.iter().any(|ch| keep.contains(ch))
            })
            .collect();
        if removable.is_empty() {
            break;
        }
        for c in removable {
            keep.remove(&c);
        }
    }
    keep.into_iter().collect()
}

// ── Divergence from a Gaussian summary ───────────────────────────────────

const QUAD_TOL: f64 = 2e-5;
const QUAD_DEPTH: u32 = 24;
/// Integration range per component, in standard deviations. Mass beyond
/// this is ~1e-18 and cannot move the 1e-4 quadrature budget.
const QUAD_RANGE_SD: f64 = 9.0;

/// Divergence KL(mixture ‖ N(mean, variance)) in nats, accurate to about
/// 1e-4 absolute. The cross term is closed-form; the mixture's own
/// entropy term is integrated by adaptive Simpson quadrature
/// component-by-component.
pub fn kl_mixture_to_gaussian(m: &GaussianMixture, mean: f64, variance: f64) -> Result<f64> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(EngineError::Argument(format!(
            "comparison variance {variance} must be positive"
        )));
    }
    let comps = m.components();
    let log_m = |x: f64| -> f64 {
        let logs: Vec<f64> = comps
            .iter()
            .map(|c| {
                c.weight.ln() - 0.5 * (2.0 * std::f64::consts::PI * c.variance).ln()
                    - 0.5 * (x - c.mean).powi(2) / c.variance
            })
            .collect();
        log_sum_exp(&logs).expect("a mixture density is positive everywhere")
    };
    let mut self_term = 0.0;
    for c in comps {
        let sd = c.variance.sqrt();
        let (mu, w) = (c.mean, c.weight);
        let norm = 1.0 / (2.0 * std::f64::consts::PI * c.variance).sqrt();
        let f = |x: f64| norm * (-0.5 * (x - mu).powi(2) / c.variance).exp() * log_m(x);
        self_term += w
            * adaptive_simpson(
                &f,
                mu - QUAD_RANGE_SD * sd,
                mu + QUAD_RANGE_SD * sd,
                QUAD_TOL,
            );
    }
    let mut cross_term = 0.0;
    for c in comps {
        cross_term += c.weight
            * (-0.5
                * ((2.0 * std::f64::consts::PI * variance).ln()
                    + (c.variance + (c.mean - mean).powi(2)) / variance));
    }
    Ok((self_term - cross_term).max(0.0))
}

/// Divergence KL(mixture ‖ N(mean, cov)) for a bivariate mixture, in nats,
/// accurate to about 1e-4 absolute (nested adaptive quadrature for the
/// entropy term, closed form for the cross term).
pub fn kl_mixture_to_gaussian_joint(
    m: &JointGaussianMixture,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<f64> {
    if m.dim() != 2 {
        return Err(EngineError::Argument(format!(
            "divergence quadrature handles two dimensions, mixture has {}",
            m.dim()
        )));
    }
    if mean.len() != 2 || cov.nrows() != 2 || cov.ncols() != 2 {
        return Err(EngineError::Argument(
            "comparison Gaussian must be two-dimensional".into(),
        ));
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let chol = nalgebra::Cholesky::new(sym.clone()).ok_or_else(|| {
        EngineError::Argument("comparison covariance is not positive definite".into())
    })?;
    let inv = chol.inverse();
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let two_ln_2pi = 2.0 * (2.0 * std::f64::consts::PI).ln();

    struct Comp2 {
        lw: f64,
        mx: f64,
        my: f64,
        ixx: f64,
        ixy: f64,
        iyy: f64,
    }
    let mut pre = Vec::with_capacity(m.components().len());
    for c in m.components() {
        let (a, b, d) = (
            c.covariance[(0, 0)],
            c.covariance[(0, 1)],
            c.covariance[(1, 1)],
        );
        let det = a * d - b * b;
        if det <= 0.0 {
            return Err(EngineError::Argument(
                "mixture component covariance is singular".into(),
            ));
        }
        pre.push(Comp2 {
            lw: c.weight.ln() - 0.5 * (two_ln_2pi + det.ln()),
            mx: c.mean[0],
            my: c.mean[1],
            ixx: d / det,
            ixy: -b / det,
            iyy: a / det,
        });
    }
    let log_m = |x: f64, y: f64| -> f64 {
        let logs: Vec<f64> = pre
            .iter()
            .map(|c| {
                let (dx, dy) = (x - c.mx, y - c.my);
                c.lw - 0.5 * (c.ixx * dx * dx + 2.0 * c.ixy * dx * dy + c.iyy * dy * dy)
            })
            .collect();
        log_sum_exp(&logs).expect("a mixture density is positive everywhere")
    };

    let mut self_term = 0.0;
    for (c, p) in m.components().iter().zip(&pre) {
        let (sx, sy) = (c.covariance[(0, 0)].sqrt(), c.covariance[(1, 1)].sqrt());
        let dens_norm = (p.lw - c.weight.ln()).exp();
        let dens = |x: f64, y: f64| {
            let (dx, dy) = (x - p.mx, y - p.my);
            dens_norm
                * (-0.5 * (p.ixx * dx * dx + 2.0 * p.ixy * dx * dy + p.iyy * dy * dy)).exp()
        };
        let outer = |x: f64| {
            let g = |y: f64| dens(x, y) * log_m(x, y);
            adaptive_simpson(
                &g,
                p.my - QUAD_RANGE_SD * sy,
                p.my + QUAD_RANGE_SD * sy,
                1e-7,
            )
        };
        self_term += c.weight
            * adaptive_simpson(
                &outer,
                p.mx - QUAD_RANGE_SD * sx,
                p.mx + QUAD_RANGE_SD * sx,
                QUAD_TOL,
            );
    }

    let mut cross_term = 0.0;
    for c in m.components() {
        let d = &c.mean - mean;
        let quad = (&inv * &d).dot(&d);
        let trace = (&inv * &c.covariance).trace();
        cross_term += c.weight * (-0.5 * (two_ln_2pi + log_det + trace + quad));
    }
    Ok((self_term - cross_term).max(0.0))
}

/// Recursive adaptive Simpson quadrature with Richardson correction.
fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        mid: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let lm = 0.5 * (a + mid);
        let rm = 0.5 * (mid + b);
        let (flm, frm) = (f(lm), f(rm));
        let h = b - a;
        let left = h / 12.0 * (fa + 4.0 * flm + fm);
        let right = h / 12.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, lm, mid, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, mid, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let mid = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(mid), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, mid, b, fa, fm, fb, whole, tol, QUAD_DEPTH)
}

// ── Coverage ellipses ────────────────────────────────────────────────────

/// A coverage ellipse for one bivariate component: center, semi-axis
/// lengths, and the major axis angle in (−π/2, π/2].
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle: f64,
}

/// The ellipse containing `coverage` of a bivariate component's mass:
/// eigen-decomposition of the covariance scaled by the matching
/// chi-square(2) quantile, −2·ln(1 − coverage).
pub fn ellipse_params(component: &JointComponent, coverage: f64) -> Result<Ellipse> {
    if component.mean.len() != 2 {
        return Err(EngineError::Argument(format!(
            "coverage ellipses are two-dimensional, component has {} dims",
            component.mean.len()
        )));
    }
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(EngineError::Argument(format!(
            "coverage {coverage} must lie strictly between 0 and 1"
        )));
    }
    let a = component.covariance[(0, 0)];
    let b = 0.5 * (component.covariance[(0, 1)] + component.covariance[(1, 0)]);
    let c = component.covariance[(1, 1)];
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(EngineError::Argument(
            "component covariance must be finite".into(),
        ));
    }
    let half_trace = 0.5 * (a + c);
    let radius = (0.25 * (a - c).powi(2) + b * b).sqrt();
    let (l1, l2) = (half_trace + radius, half_trace - radius);
    let scale = a.abs().max(c.abs()).max(1.0);
    if l2 < -1e-9 * scale {
        return Err(EngineError::Argument(
            "component covariance is not positive semidefinite".into(),
        ));
    }
    let l2 = l2.max(0.0);
    let quantile = -2.0 * (1.0 - coverage).ln();
    // Normalize −0.0 so a circle or axis-aligned ellipse lands on angle 0
    // or +π/2, keeping the angle in (−π/2, π/2].
    let b_clean = if b == 0.0 { 0.0 } else { b };
    let angle = 0.5 * (2.0 * b_clean).atan2(a - c);
    Ok(Ellipse {
        center: [component.mean[0], component.mean[1]],
        semi_major: (quantile * l1).sqrt(),
        semi_minor: (quantile * l2).sqrt(),
        angle,
    })
}

// ── Tests ────────────────────────────────────────────────────────────────
