//! Brute-force oracles shared by the integration suites.
//!
//! Everything here deliberately avoids the engine's own algebra: posteriors
//! are computed by enumerating every discrete configuration and applying
//! closed-form multivariate Gaussian identities, so agreement with the
//! engine is evidence, not circularity.

#![allow(dead_code)]

use std::collections::BTreeMap;

use gammasort_core::model::{ClgRow, Evidence, Network, NetworkBuilder, NodeId, topo_sort};
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

/// One discrete configuration of the posterior: its unnormalized log
/// weight (prior × observed-density) and the conditional Gaussian over the
/// unobserved continuous nodes, listed ascending in `free`.
#[derive(Debug, Clone)]
pub struct OracleComponent {
    pub log_w: f64,
    pub cfg: BTreeMap<NodeId, usize>,
    pub free: Vec<NodeId>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Full enumeration oracle: every discrete configuration consistent with
/// the evidence, each conditioned on the continuous observations in closed
/// form. Zero-prior configurations are dropped.
pub fn enumerate_posterior(net: &Network, e: &Evidence) -> Vec<OracleComponent> {
    let order = topo_sort(net).expect("oracle nets are acyclic");
    let disc: Vec<NodeId> = order.iter().copied().filter(|&v| net.is_discrete(v)).collect();
    let cont: Vec<NodeId> = {
        let mut c: Vec<NodeId> = net.ids().filter(|&v| net.is_continuous(v)).collect();
        c.sort();
        c
    };
    let cards: Vec<usize> = disc.iter().map(|&d| net.cardinality(d)).collect();

    let mut out = Vec::new();
    let total: usize = cards.iter().product::<usize>().max(1);
    for flat in 0..total {
        // Decode states for this configuration (row-major over `disc`).
        let mut cfg: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut rem = flat;
        for i in (0..disc.len()).rev() {
            cfg.insert(disc[i], rem % cards[i]);
            rem /= cards[i];
        }
        if e.states.iter().any(|(v, &s)| cfg[v] != s) {
            continue;
        }

        let mut log_prior = 0.0;
        for &d in &disc {
            let node = net.discrete(d).unwrap();
            let mut row = 0usize;
            for &p in &node.parents {
                row = row * net.cardinality(p) + cfg[&p];
            }
            let p = node.cpt[row][cfg[&d]];
            if p <= 0.0 {
                log_prior = f64::NEG_INFINITY;
                break;
            }
            log_prior += p.ln();
        }
        if log_prior == f64::NEG_INFINITY {
            continue;
        }

        // Joint Gaussian over all continuous nodes by forward recursion.
        let pos: BTreeMap<NodeId, usize> = cont.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let nc = cont.len();
        let mut mean = DVector::zeros(nc);
        let mut cov = DMatrix::zeros(nc, nc);
        for &v in &order {
            if net.is_discrete(v) {
                continue;
            }
            let node = net.continuous(v).unwrap();
            let dparents: Vec<NodeId> = node
                .parents
                .iter()
                .copied()
                .filter(|&p| net.is_discrete(p))
                .collect();
            let cparents: Vec<NodeId> = node
                .parents
                .iter()
                .copied()
                .filter(|&p| net.is_continuous(p))
                .collect();
            let mut row = 0usize;
            for &p in &dparents {
                row = row * net.cardinality(p) + cfg[&p];
            }
            let params = &node.params[row];
            let i = pos[&v];
            mean[i] = params.intercept;
            for (t, &y) in cparents.iter().enumerate() {
                mean[i] += params.coefficients[t] * mean[pos[&y]];
            }
            // cov(v, u) = Σ_t b_t cov(y_t, u) for every earlier node u;
            // var(v) = σ² + bᵀ Σ_yy b.
            for j in 0..nc {
                if j == i {
                    continue;
                }
                let mut c = 0.0;
                for (t, &y) in cparents.iter().enumerate() {
                    c += params.coefficients[t] * cov[(pos[&y], j)];
                }
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
            let mut var = params.variance;
            for (t, &y) in cparents.iter().enumerate() {
                for (u, &z) in cparents.iter().enumerate() {
                    var += params.coefficients[t] * params.coefficients[u] * cov[(pos[&y], pos[&z])];
                }
            }
            cov[(i, i)] = var;
        }

        // Condition on the observed continuous values.
        let obs: Vec<usize> = cont
            .iter()
            .enumerate()
            .filter(|(_, v)| e.values.contains_key(v))
            .map(|(i, _)| i)
            .collect();
        let free_idx: Vec<usize> = (0..nc).filter(|i| !obs.contains(i)).collect();
        let free: Vec<NodeId> = free_idx.iter().map(|&i| cont[i]).collect();
        let (log_density, post_mean, post_cov) = if obs.is_empty() {
            (
                0.0,
                mean.select_rows(free_idx.iter()),
                cov.select_rows(free_idx.iter()).select_columns(free_idx.iter()),
            )
        } else {
            let x = DVector::from_iterator(obs.len(), obs.iter().map(|&i| e.values[&cont[i]]));
            let mu_o = mean.select_rows(obs.iter());
            let s_oo = cov.select_rows(obs.iter()).select_columns(obs.iter());
            let chol = nalgebra::Cholesky::new(s_oo.clone()).expect("observed block is PD");
            let diff = &x - &mu_o;
            let solve = chol.solve(&diff);
            let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let ld = -0.5
                * (diff.dot(&solve)
                    + log_det
                    + obs.len() as f64 * (2.0 * std::f64::consts::PI).ln());
            let s_fo = cov.select_rows(free_idx.iter()).select_columns(obs.iter());
            let m = mean.select_rows(free_idx.iter()) + &s_fo * chol.solve(&diff);
            let s = cov.select_rows(free_idx.iter()).select_columns(free_idx.iter())
                - &s_fo * chol.solve(&s_fo.transpose());
            (ld, m, s)
        };

        out.push(OracleComponent {
            log_w: log_prior + log_density,
            cfg,
            free,
            mean: post_mean,
            cov: post_cov,
        });
    }
    out
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn oracle_log_likelihood(comps: &[OracleComponent]) -> f64 {
    log_sum_exp(&comps.iter().map(|c| c.log_w).collect::<Vec<_>>())
}

/// Exact posterior over one discrete node.
pub fn oracle_discrete_marginal(comps: &[OracleComponent], v: NodeId, card: usize) -> Vec<f64> {
    let z = oracle_log_likelihood(comps);
    let mut p = vec![0.0; card];
    for c in comps {
        p[c.cfg[&v]] += (c.log_w - z).exp();
    }
    p
}

/// Moment-matched posterior mean and variance of one continuous node.
pub fn oracle_continuous_moments(comps: &[OracleComponent], v: NodeId) -> (f64, f64) {
    let z = oracle_log_likelihood(comps);
    let mut mean = 0.0;
    for c in comps {
        let i = c.free.iter().position(|&f| f == v).expect("node not observed");
        mean += (c.log_w - z).exp() * c.mean[i];
    }
    let mut var = 0.0;
    for c in comps {
        let i = c.free.iter().position(|&f| f == v).unwrap();
        let d = c.mean[i] - mean;
        var += (c.log_w - z).exp() * (c.cov[(i, i)] + d * d);
    }
    (mean, var)
}

/// Mixture oracle: group configurations by their states on `boundary`,
/// moment-match within each group, normalize across groups, and drop
/// groups more than 70 nats below the best (the engine's void rule).
/// Components are returned in lexicographic boundary order with per-group
/// moments over `targets`.
pub struct OracleMixtureComponent {
    pub states: Vec<usize>,
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

pub fn oracle_mixture(
    comps: &[OracleComponent],
    boundary: &[NodeId],
    targets: &[NodeId],
) -> Vec<OracleMixtureComponent> {
    let mut groups: BTreeMap<Vec<usize>, Vec<&OracleComponent>> = BTreeMap::new();
    for c in comps {
        let key: Vec<usize> = boundary.iter().map(|b| c.cfg[&b]).collect();
        groups.entry(key).or_default().push(c);
    }
    let mut raw: Vec<(Vec<usize>, f64, DVector<f64>, DMatrix<f64>)> = Vec::new();
    for (key, members) in groups {
        let lw = log_sum_exp(&members.iter().map(|c| c.log_w).collect::<Vec<_>>());
        if lw == f64::NEG_INFINITY {
            continue;
        }
        let nt = targets.len();
        let idx_of = |c: &OracleComponent, v: NodeId| {
            c.free.iter().position(|&f| f == v).expect("target observed")
        };
        let mut mean = DVector::zeros(nt);
        for c in &members {
            let w = (c.log_w - lw).exp();
            for (t, &v) in targets.iter().enumerate() {
                mean[t] += w * c.mean[idx_of(c, v)];
            }
        }
        let mut cov = DMatrix::zeros(nt, nt);
        for c in &members {
            let w = (c.log_w - lw).exp();
            for (a, &va) in targets.iter().enumerate() {
                for (b, &vb) in targets.iter().enumerate() {
                    let da = c.mean[idx_of(c, va)] - mean[a];
                    let db = c.mean[idx_of(c, vb)] - mean[b];
                    cov[(a, b)] += w * (c.cov[(idx_of(c, va), idx_of(c, vb))] + da * db);
                }
            }
        }
        raw.push((key, lw, mean, cov));
    }
    let best = raw.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    raw.retain(|r| r.1 >= best - 70.0);
    let z = log_sum_exp(&raw.iter().map(|r| r.1).collect::<Vec<_>>());
    raw.into_iter()
        .map(|(states, lw, mean, cov)| OracleMixtureComponent {
            states,
            weight: (lw - z).exp(),
            mean,
            cov,
        })
        .collect()
}

// ── Random network generation ────────────────────────────────────────────

/// Random CG network: `n_disc` discrete nodes (2–3 states) followed by
/// `n_cont` continuous nodes, parents drawn from earlier nodes. All CPT
/// entries are strictly positive so random evidence stays consistent.
pub fn random_net(seed: u64, n_disc: usize, n_cont: usize) -> Network {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut b = NetworkBuilder::new(&format!("random-{seed}"));
    let mut disc_ids: Vec<(NodeId, usize)> = Vec::new();
    for i in 0..n_disc {
        let card = *[2, 3].choose(&mut rng).unwrap();
        let parents = pick(&mut rng, &disc_ids.iter().map(|&(v, _)| v).collect::<Vec<_>>(), 2);
        let rows: usize = parents
            .iter()
            .map(|p| disc_ids.iter().find(|&&(v, _)| v == *p).unwrap().1)
            .product::<usize>()
            .max(1);
        let cpt: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                let raw: Vec<f64> = (0..card).map(|_| rng.random_range(0.05..1.0)).collect();
                let z: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / z).collect()
            })
            .collect();
        let states: Vec<String> = (0..card).map(|s| format!("s{s}")).collect();
        let state_refs: Vec<&str> = states.iter().map(|s| s.as_str()).collect();
        let id = b.discrete(&format!("d{i}"), &state_refs, &parents, cpt);
        disc_ids.push((id, card));
    }
    let mut cont_ids: Vec<NodeId> = Vec::new();
    for i in 0..n_cont {
        let dparents = pick(&mut rng, &disc_ids.iter().map(|&(v, _)| v).collect::<Vec<_>>(), 2);
        let cparents = pick(&mut rng, &cont_ids, 2);
        let rows: usize = dparents
            .iter()
            .map(|p| disc_ids.iter().find(|&&(v, _)| v == *p).unwrap().1)
            .product::<usize>()
            .max(1);
        let params: Vec<ClgRow> = (0..rows)
            .map(|_| {
                ClgRow::new(
                    rng.random_range(-3.0..3.0),
                    cparents.iter().map(|_| rng.random_range(-1.5..1.5)).collect(),
                    rng.random_range(0.2..2.0),
                )
            })
            .collect();
        let mut parents = dparents;
        parents.extend(&cparents);
        let id = b.continuous(&format!("x{i}"), &parents, params);
        cont_ids.push(id);
    }
    b.build()
}

fn pick<R: Rng>(rng: &mut R, pool: &[NodeId], max: usize) -> Vec<NodeId> {
    if pool.is_empty() {
        return vec![];
    }
    let n = rng.random_range(0..=max.min(pool.len()));
    let mut chosen: Vec<NodeId> = pool.choose_multiple(rng, n).copied().collect();
    chosen.sort();
    chosen
}

/// Random evidence: each discrete node observed with probability `p_disc`,
/// each continuous node with `p_cont` (values near the prior scale).
pub fn random_evidence(net: &Network, seed: u64, p_disc: f64, p_cont: f64) -> Evidence {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut e = Evidence::none();
    for v in net.ids() {
        if net.is_discrete(v) {
            if rng.random_bool(p_disc) {
                e = e.with_state(v, rng.random_range(0..net.cardinality(v)));
            }
        } else if rng.random_bool(p_cont) {
            e = e.with_value(v, rng.random_range(-4.0..4.0));
        }
    }
    e
}

// ── Compiled-path comparison ─────────────────────────────────────────────

/// Compare the compiled runtime posterior against the full network at one
/// sensor reading: both must produce the same posterior (matched by source
/// configuration) within `tol` relative on weight, mean, and variance.
///
/// The compiled model's components are keyed by the union of the sensor's
/// and target's source variables; the full-network target posterior is
/// keyed by the target's alone. Where the union is strictly finer, the
/// compiled components are first grouped down to the full path's key and
/// moment-matched within each group — by the laws of total expectation and
/// variance the grouped mixture is exactly the full posterior. Components
/// present on one side only must carry negligible weight. Returns how many
/// grouped comparisons were made.
pub fn assert_compiled_matches_full(
    net: &Network,
    cm: &gammasort_core::compiler::CompiledModel,
    z: &Evidence,
    sensor: NodeId,
    target: NodeId,
    s: f64,
    tol: f64,
) -> usize {
    let rel = |a: f64, b: f64| (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0);
    let fast = gammasort_core::compiler::sensor_posterior(cm, s).unwrap();
    let full = gammasort_core::mixture::exact_mixture(
        net,
        target,
        &z.clone().with_value(sensor, s),
    )
    .unwrap();

    // The full path's key variables (identical across its components).
    let key_vars: Vec<NodeId> = full
        .components()
        .first()
        .map(|c| c.source.iter().map(|&(v, _)| v).collect())
        .unwrap_or_default();

    // Group the compiled posterior down to those variables and
    // moment-match within each group.
    let mut grouped: BTreeMap<Vec<(NodeId, usize)>, (f64, f64, f64)> = BTreeMap::new();
    for c in fast.components() {
        let key: Vec<(NodeId, usize)> = c
            .source
            .iter()
            .copied()
            .filter(|(v, _)| key_vars.contains(v))
            .collect();
        assert_eq!(
            key.len(),
            key_vars.len(),
            "s {s}: compiled source {:?} misses one of the full path's key variables {key_vars:?}",
            c.source
        );
        let e = grouped.entry(key).or_insert((0.0, 0.0, 0.0));
        e.0 += c.weight;
        e.1 += c.weight * c.mean;
        e.2 += c.weight * (c.variance + c.mean * c.mean);
    }
    let fast_by_src: BTreeMap<Vec<(NodeId, usize)>, (f64, f64, f64)> = grouped
        .into_iter()
        .map(|(key, (w, m1, m2))| {
            let mean = m1 / w;
            (key, (w, mean, (m2 / w - mean * mean).max(0.0)))
        })
        .collect();
    let full_by_src: BTreeMap<Vec<(NodeId, usize)>, _> = full
        .components()
        .iter()
        .map(|c| (c.source.clone(), c))
        .collect();

    let mut compared = 0;
    for (key, &(weight, mean, variance)) in &fast_by_src {
        match full_by_src.get(key) {
            Some(o) => {
                assert!(
                    rel(weight, o.weight),
                    "s {s} cfg {key:?}: weight {weight} vs {}",
                    o.weight
                );
                assert!(
                    rel(mean, o.mean),
                    "s {s} cfg {key:?}: mean {mean} vs {}",
                    o.mean
                );
                assert!(
                    rel(variance, o.variance),
                    "s {s} cfg {key:?}: variance {variance} vs {}",
                    o.variance
                );
                compared += 1;
            }
            None => assert!(
                weight <= 1e-9,
                "s {s}: compiled-only component {key:?} has weight {weight}"
            ),
        }
    }
    for (key, o) in &full_by_src {
        if !fast_by_src.contains_key(key) {
            assert!(
                o.weight <= 1e-9,
                "s {s}: full-network-only component {key:?} has weight {}",
                o.weight
            );
        }
    }
    compared
}

/// Pick an unobserved (sensor, target) pair of distinct continuous nodes,
/// preferring a target with a non-trivial source set, and strip any
/// evidence on the pair. Returns None when the net has fewer than two
/// usable continuous nodes.
pub fn pick_sensor_target(net: &Network, z: &mut Evidence) -> Option<(NodeId, NodeId)> {
    let continuous: Vec<NodeId> = net.ids().filter(|&v| net.is_continuous(v)).collect();
    if continuous.len() < 2 {
        return None;
    }
    let target = continuous
        .iter()
        .rev()
        .copied()
        .find(|&v| {
            !gammasort_core::model::discrete_boundary(net, v)
                .unwrap()
                .is_empty()
        })
        .unwrap_or(*continuous.last().unwrap());
    let sensor = continuous
        .iter()
        .rev()
        .copied()
        .find(|&v| v != target)?;
    z.values.remove(&sensor);
    z.values.remove(&target);
    Some((sensor, target))
}

/// Moment-matched sensor mean and standard deviation of a compiled model,
/// for building sensor-reading grids.
pub fn compiled_sensor_moments(cm: &gammasort_core::compiler::CompiledModel) -> (f64, f64) {
    let mean: f64 = cm
        .components
        .iter()
        .map(|c| c.weight * c.mean[0])
        .sum();
    let second: f64 = cm
        .components
        .iter()
        .map(|c| c.weight * (c.covariance[0][0] + c.mean[0] * c.mean[0]))
        .sum();
    (mean, (second - mean * mean).max(0.0).sqrt())
}
