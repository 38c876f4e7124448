//! Strong junction trees and exact propagation for hybrid networks.
//!
//! The tree is built by moralizing the network, then eliminating with a
//! min-fill heuristic under one hard constraint: every continuous variable
//! is eliminated before any discrete one. That ordering is what makes the
//! tree *strong* — oriented toward a suitable root, every inward message
//! either integrates continuous variables exactly (Schur complement) or
//! sums discrete scalars exactly, so the collect pass computes the
//! evidence likelihood without approximation. Moment-matching ("weak"
//! marginals) only enters on the way back out, where posterior summaries
//! are read off.
//!
//! Construction is deterministic: min-fill ties break on the lowest node
//! index, cliques are numbered by birth order, and the strong root is the
//! structurally valid candidate with the most discrete variables (lowest
//! index on ties). Every build re-verifies its own invariants — running
//! intersection, family containment, the elimination constraint, and
//! strongness of the chosen root — and refuses to return a tree that
//! fails them.
//!
//! [`CalibratedTree::branch_repropagate`] recalibrates a connected group
//! of cliques in place after additional evidence confined to that group.
//! Because calibrated separators already carry the entire influence of
//! the rest of the tree, slicing them with the new evidence and passing
//! messages only inside the branch reproduces exactly what a full
//! propagation would report for branch variables; everything outside is
//! marked stale rather than silently wrong.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{EngineError, Result};
use crate::indexing;
use crate::model::{self, Evidence, Network, Node, NodeId};
use crate::potential::{CGPotential, MomentSummary, clg_form};

// ── Tree structure ───────────────────────────────────────────────────────

/// One clique: its variables, its place in the rooted tree, and the
/// separator on the edge toward its parent (empty for the root).
#[derive(Debug, Clone)]
pub struct CliqueInfo {
    pub vars: Vec<NodeId>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub separator: Vec<NodeId>,
}

#[derive(Debug)]
struct TreeCore {
    cliques: Vec<CliqueInfo>,
    root: usize,
    depth: Vec<usize>,
    /// Children-before-parents traversal for the collect pass.
    collect_order: Vec<usize>,
    /// Node → a clique containing it (its birth clique).
    home: BTreeMap<NodeId, usize>,
    /// Node → the clique whose initial potential absorbed its conditional.
    assignment: BTreeMap<NodeId, usize>,
    elimination: Vec<NodeId>,
    discrete_card: BTreeMap<NodeId, usize>,
    continuous: BTreeSet<NodeId>,
    labels: BTreeMap<NodeId, String>,
    initial: Vec<CGPotential>,
}

/// A strong junction tree with its initial (prior) potentials. Cheap to
/// clone; immutable once built.
#[derive(Debug, Clone)]
pub struct CliqueTree {
    core: Arc<TreeCore>,
}

/// Posterior over one node: an exact distribution for discrete nodes, a
/// moment-matched weight-1 summary for continuous ones.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    Discrete(Vec<f64>),
    Continuous(MomentSummary),
}

impl Marginal {
    pub fn as_discrete(&self) -> Option<&Vec<f64>> {
        match self {
            Marginal::Discrete(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&MomentSummary> {
        match self {
            Marginal::Continuous(m) => Some(m),
            _ => None,
        }
    }
}

impl CliqueTree {
    /// Build the strong junction tree for a validated network.
    pub fn build(net: &Network) -> Result<CliqueTree> {
        CliqueTree::build_with_groups(net, &[])
    }

    /// Like [`CliqueTree::build`], with extra edges forcing each listed
    /// group of variables to share at least one clique (used when a joint
    /// posterior over the group is needed downstream).
    pub fn build_with_groups(net: &Network, ensure_together: &[Vec<NodeId>]) -> Result<CliqueTree> {
        let violations = model::validate(net);
        if !violations.is_empty() {
            return Err(EngineError::Structural(format!(
                "network does not validate: {}",
                violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; ")
            )));
        }
        let n = net.node_count();
        for group in ensure_together {
            for &v in group {
                if v.0 >= n {
                    return Err(EngineError::Argument(format!("unknown variable {v} in group")));
                }
            }
        }

        // Moral graph plus any grouping edges.
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        let link = |adj: &mut Vec<BTreeSet<usize>>, a: usize, b: usize| {
            if a != b {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        };
        for id in net.ids() {
            let parents = net.parents(id);
            for &p in parents {
                link(&mut adj, id.0, p.0);
            }
            for i in 0..parents.len() {
                for j in i + 1..parents.len() {
                    link(&mut adj, parents[i].0, parents[j].0);
                }
            }
        }
        for group in ensure_together {
            for i in 0..group.len() {
                for j in i + 1..group.len() {
                    link(&mut adj, group[i].0, group[j].0);
                }
            }
        }

        // Constrained min-fill elimination: continuous phase, then discrete.
        let continuous: BTreeSet<NodeId> = net
            .ids()
            .filter(|&id| net.is_continuous(id))
            .collect();
        let mut alive: BTreeSet<usize> = (0..n).collect();
        let mut elimination: Vec<NodeId> = Vec::with_capacity(n);
        let mut candidates: Vec<(NodeId, BTreeSet<usize>)> = Vec::with_capacity(n);
        for phase_continuous in [true, false] {
            loop {
                let eligible: Vec<usize> = alive
                    .iter()
                    .copied()
                    .filter(|&v| continuous.contains(&NodeId(v)) == phase_continuous)
                    .collect();
                if eligible.is_empty() {
                    break;
                }
                let fill_count = |v: usize| {
                    let nbrs: Vec<usize> = adj[v].iter().copied().filter(|u| alive.contains(u)).collect();
                    let mut fills = 0usize;
                    for i in 0..nbrs.len() {
                        for j in i + 1..nbrs.len() {
                            if !adj[nbrs[i]].contains(&nbrs[j]) {
                                fills += 1;
                            }
                        }
                    }
                    fills
                };
                let &v = eligible
                    .iter()
                    .min_by_key(|&&v| (fill_count(v), v))
                    .unwrap();
                let nbrs: Vec<usize> = adj[v].iter().copied().filter(|u| alive.contains(u)).collect();
                for i in 0..nbrs.len() {
                    for j in i + 1..nbrs.len() {
                        link(&mut adj, nbrs[i], nbrs[j]);
                    }
                }
                let mut cand: BTreeSet<usize> = nbrs.into_iter().collect();
                cand.insert(v);
                elimination.push(NodeId(v));
                candidates.push((NodeId(v), cand));
                alive.remove(&v);
            }
        }

        // Bucket tree over all elimination candidates: each candidate
        // points to the candidate of the first-eliminated member of its
        // neighbor set. Separators are exactly those neighbor sets, so the
        // running-intersection property holds by construction, and every
        // edge is strong (a continuous generator leaves an all-continuous
        // residual; a discrete generator can only have discrete neighbors
        // left).
        let n_cand = candidates.len();
        let elim_pos: BTreeMap<usize, usize> = elimination
            .iter()
            .enumerate()
            .map(|(pos, v)| (v.0, pos))
            .collect();
        let cand_of_node: BTreeMap<usize, usize> = candidates
            .iter()
            .enumerate()
            .map(|(i, (g, _))| (g.0, i))
            .collect();
        let mut parent_cand: Vec<Option<usize>> = candidates
            .iter()
            .map(|(gen, set)| {
                set.iter()
                    .filter(|&&v| v != gen.0)
                    .min_by_key(|&&v| elim_pos[&v])
                    .map(|&u| cand_of_node[&u])
            })
            .collect();

        // Absorb each non-maximal candidate into an adjacent candidate
        // that contains it (always a tree child). This keeps both the
        // running-intersection and strong properties intact and leaves
        // exactly the maximal cliques.
        let mut alive_c = vec![true; n_cand];
        let mut merged_into: Vec<usize> = (0..n_cand).collect();
        loop {
            let mut changed = false;
            for i in 0..n_cand {
                if !alive_c[i] {
                    continue;
                }
                let children: Vec<usize> = (0..n_cand)
                    .filter(|&c| alive_c[c] && parent_cand[c] == Some(i))
                    .collect();
                let Some(&b) = children
                    .iter()
                    .find(|&&c| candidates[i].1.is_subset(&candidates[c].1))
                else {
                    continue;
                };
                for &c in &children {
                    if c != b {
                        parent_cand[c] = Some(b);
                    }
                }
                parent_cand[b] = parent_cand[i];
                alive_c[i] = false;
                merged_into[i] = b;
                changed = true;
            }
            if !changed {
                break;
            }
        }
        let resolve = |mut i: usize| {
            while !alive_c[i] {
                i = merged_into[i];
            }
            i
        };

        // Renumber survivors by birth; secondary component roots hang
        // under the latest-born root with an empty separator.
        let kept_idx: Vec<usize> = (0..n_cand).filter(|&i| alive_c[i]).collect();
        let kept_sets: Vec<BTreeSet<usize>> = kept_idx.iter().map(|&i| candidates[i].1.clone()).collect();
        let k = kept_sets.len();
        let renum: BTreeMap<usize, usize> = kept_idx.iter().enumerate().map(|(j, &i)| (i, j)).collect();
        let mut parent: Vec<Option<usize>> = kept_idx
            .iter()
            .map(|&i| parent_cand[i].map(|p| renum[&resolve(p)]))
            .collect();
        let roots: Vec<usize> = (0..k).filter(|&j| parent[j].is_none()).collect();
        let primary = *roots.last().unwrap();
        for &r in &roots {
            if r != primary {
                parent[r] = Some(primary);
            }
        }

        // Birth clique of each node: wherever its candidate ended up.
        let mut home: BTreeMap<NodeId, usize> = BTreeMap::new();
        for (i, (gen, _)) in candidates.iter().enumerate() {
            home.insert(*gen, renum[&resolve(i)]);
        }

        // Choose the strong root among structurally valid candidates:
        // most discrete variables, lowest index on ties.
        let undirected: Vec<BTreeSet<usize>> = {
            let mut e = vec![BTreeSet::new(); k];
            for (j, p) in parent.iter().enumerate() {
                if let Some(p) = p {
                    e[j].insert(*p);
                    e[*p].insert(j);
                }
            }
            e
        };
        let is_discrete = |v: &usize| !continuous.contains(&NodeId(*v));
        let strong_ok = |root: usize| -> bool {
            // Orient toward `root`; every inward edge must integrate only
            // continuous variables or sum over an all-discrete separator.
            let mut seen = vec![false; k];
            let mut stack = vec![root];
            seen[root] = true;
            while let Some(c) = stack.pop() {
                for &nb in &undirected[c] {
                    if seen[nb] {
                        continue;
                    }
                    seen[nb] = true;
                    stack.push(nb);
                    let sep: BTreeSet<usize> = kept_sets[nb].intersection(&kept_sets[c]).copied().collect();
                    let residual_cont = kept_sets[nb].difference(&sep).all(|v| !is_discrete(v));
                    let sep_disc = sep.iter().all(is_discrete);
                    if !(residual_cont || sep_disc) {
                        return false;
                    }
                }
            }
            true
        };
        let root = (0..k)
            .filter(|&r| strong_ok(r))
            .max_by_key(|&r| {
                (
                    kept_sets[r].iter().filter(|v| is_discrete(v)).count(),
                    std::cmp::Reverse(r),
                )
            })
            .ok_or_else(|| EngineError::Structural("no strong root exists for this tree".into()))?;

        // Re-root at the chosen clique.
        let mut cliques: Vec<CliqueInfo> = kept_sets
            .iter()
            .map(|set| CliqueInfo {
                vars: set.iter().map(|&v| NodeId(v)).collect(),
                parent: None,
                children: vec![],
                separator: vec![],
            })
            .collect();
        let mut depth = vec![0usize; k];
        let mut order = vec![root];
        let mut seen = vec![false; k];
        seen[root] = true;
        let mut qi = 0;
        while qi < order.len() {
            let c = order[qi];
            qi += 1;
            for &nb in &undirected[c] {
                if !seen[nb] {
                    seen[nb] = true;
                    depth[nb] = depth[c] + 1;
                    cliques[nb].parent = Some(c);
                    cliques[nb].separator = kept_sets[nb]
                        .intersection(&kept_sets[c])
                        .map(|&v| NodeId(v))
                        .collect();
                    cliques[c].children.push(nb);
                    order.push(nb);
                }
            }
        }
        let mut collect_order: Vec<usize> = (0..k).collect();
        collect_order.sort_by_key(|&c| (std::cmp::Reverse(depth[c]), c));

        // Assign each conditional to the lowest-numbered clique containing
        // its family, and multiply the assigned conditionals into each
        // clique's full-domain unit potential.
        let discrete_card: BTreeMap<NodeId, usize> = net
            .ids()
            .filter(|&id| net.is_discrete(id))
            .map(|id| (id, net.cardinality(id)))
            .collect();
        let labels: BTreeMap<NodeId, String> = net.ids().map(|id| (id, net.label(id).to_string())).collect();
        let mut assignment: BTreeMap<NodeId, usize> = BTreeMap::new();
        for id in net.ids() {
            let mut family: BTreeSet<usize> = net.parents(id).iter().map(|p| p.0).collect();
            family.insert(id.0);
            let c = (0..k)
                .find(|&j| family.is_subset(&kept_sets[j]))
                .ok_or_else(|| EngineError::Structural(format!("no clique contains the family of {id}")))?;
            assignment.insert(id, c);
        }
        let mut initial: Vec<CGPotential> = cliques
            .iter()
            .map(|c| {
                let d: Vec<(NodeId, usize)> = c
                    .vars
                    .iter()
                    .filter_map(|v| discrete_card.get(v).map(|&card| (*v, card)))
                    .collect();
                let cont: Vec<NodeId> = c
                    .vars
                    .iter()
                    .copied()
                    .filter(|v| !discrete_card.contains_key(v))
                    .collect();
                CGPotential::unit().extend(&d, &cont)
            })
            .collect::<Result<_>>()?;
        for id in net.ids() {
            let c = assignment[&id];
            let pot = cpd_potential(net, id)?;
            initial[c] = CGPotential::multiply(&initial[c], &pot)?;
        }

        let core = TreeCore {
            cliques,
            root,
            depth,
            collect_order,
            home,
            assignment,
            elimination,
            discrete_card,
            continuous,
            labels,
            initial,
        };
        let tree = CliqueTree { core: Arc::new(core) };
        tree.verify_structure()?;
        Ok(tree)
    }

    pub fn cliques(&self) -> &[CliqueInfo] {
        &self.core.cliques
    }

    pub fn root(&self) -> usize {
        self.core.root
    }

    pub fn depth(&self, clique: usize) -> usize {
        self.core.depth[clique]
    }

    pub fn elimination_order(&self) -> &[NodeId] {
        &self.core.elimination
    }

    /// A clique containing the node (its birth clique), if the node exists.
    pub fn clique_containing(&self, v: NodeId) -> Option<usize> {
        self.core.home.get(&v).copied()
    }

    /// All cliques whose variable set includes `v`, ascending.
    pub fn cliques_containing(&self, v: NodeId) -> Vec<usize> {
        (0..self.core.cliques.len())
            .filter(|&c| self.core.cliques[c].vars.contains(&v))
            .collect()
    }

    pub fn is_discrete_var(&self, v: NodeId) -> bool {
        self.core.discrete_card.contains_key(&v)
    }

    pub fn cardinality(&self, v: NodeId) -> Option<usize> {
        self.core.discrete_card.get(&v).copied()
    }

    /// Re-check every structural invariant; used by the builder and by
    /// tests that want the guarantees spelled out.
    pub fn verify_structure(&self) -> Result<()> {
        let core = &*self.core;
        let k = core.cliques.len();
        let fail = |msg: String| Err(EngineError::Structural(msg));

        // The elimination order must finish all continuous variables first.
        let first_discrete = core
            .elimination
            .iter()
            .position(|v| !core.continuous.contains(v));
        if let Some(fd) = first_discrete {
            if core.elimination[fd..].iter().any(|v| core.continuous.contains(v)) {
                return fail("a continuous variable was eliminated after a discrete one".into());
            }
        }

        // Parent pointers must form one tree rooted at `root`.
        for (j, c) in core.cliques.iter().enumerate() {
            match c.parent {
                None if j != core.root => return fail(format!("clique {j} is detached")),
                Some(p) if p >= k => return fail(format!("clique {j} has bad parent")),
                _ => {}
            }
        }

        // Running intersection: cliques containing any given variable form
        // a connected subtree.
        let mut vars: BTreeSet<NodeId> = BTreeSet::new();
        for c in &core.cliques {
            vars.extend(c.vars.iter().copied());
        }
        for v in vars {
            let members: Vec<usize> = self.cliques_containing(v);
            let inside: BTreeSet<usize> = members.iter().copied().collect();
            let mut seen = BTreeSet::new();
            let mut stack = vec![members[0]];
            seen.insert(members[0]);
            while let Some(c) = stack.pop() {
                let mut nbrs = core.cliques[c].children.clone();
                nbrs.extend(core.cliques[c].parent);
                for nb in nbrs {
                    if inside.contains(&nb) && seen.insert(nb) {
                        stack.push(nb);
                    }
                }
            }
            if seen.len() != members.len() {
                return fail(format!("cliques containing {v} are not connected"));
            }
        }

        // Separators must equal the intersection with the parent, and each
        // edge must satisfy the strong condition.
        for (j, c) in core.cliques.iter().enumerate() {
            let Some(p) = c.parent else { continue };
            let inter: Vec<NodeId> = c
                .vars
                .iter()
                .copied()
                .filter(|v| core.cliques[p].vars.contains(v))
                .collect();
            if inter != c.separator {
                return fail(format!("separator of clique {j} is not the parent intersection"));
            }
            let residual_cont = c
                .vars
                .iter()
                .filter(|v| !c.separator.contains(v))
                .all(|v| core.continuous.contains(v));
            let sep_disc = c.separator.iter().all(|v| !core.continuous.contains(v));
            if !(residual_cont || sep_disc) {
                return fail(format!("edge above clique {j} violates the strong condition"));
            }
        }

        // Every conditional sits in a clique containing its family, and
        // every initial potential matches its clique's domain.
        for (&v, &c) in &core.assignment {
            if !core.cliques[c].vars.contains(&v) {
                return fail(format!("conditional of {v} assigned outside its cliques"));
            }
        }
        for (j, pot) in core.initial.iter().enumerate() {
            let mut domain: Vec<NodeId> = pot.discrete_vars().to_vec();
            domain.extend(pot.continuous_vars());
            domain.sort();
            if domain != core.cliques[j].vars {
                return fail(format!("initial potential of clique {j} has the wrong domain"));
            }
        }
        Ok(())
    }

    /// Structure dump (cliques, separators, sizes) for debugging and docs.
    pub fn structure_json(&self) -> serde_json::Value {
        let core = &*self.core;
        let name = |v: &NodeId| core.labels.get(v).cloned().unwrap_or_else(|| v.to_string());
        serde_json::json!({
            "root": core.root,
            "cliques": core.cliques.iter().enumerate().map(|(j, c)| {
                serde_json::json!({
                    "id": j,
                    "vars": c.vars.iter().map(name).collect::<Vec<_>>(),
                    "parent": c.parent,
                    "separator": c.separator.iter().map(name).collect::<Vec<_>>(),
                    "discrete": c.vars.iter().filter(|v| !core.continuous.contains(v)).count(),
                    "continuous": c.vars.iter().filter(|v| core.continuous.contains(v)).count(),
                })
            }).collect::<Vec<_>>(),
            "elimination": core.elimination.iter().map(|v| name(v)).collect::<Vec<_>>(),
        })
    }

    // ── Propagation ──────────────────────────────────────────────────────

    /// Full two-pass propagation: enter evidence everywhere, collect to
    /// the strong root (exact), distribute back out (weak where discrete
    /// sums happen over continuous dimensions).
    pub fn propagate(&self, e: &Evidence) -> Result<CalibratedTree> {
        self.check_evidence(e)?;
        let core = &*self.core;
        let mut pots: Vec<CGPotential> = Vec::with_capacity(core.cliques.len());
        for (j, init) in core.initial.iter().enumerate() {
            pots.push(reduce_present(init, e).map_err(|err| match err {
                EngineError::Argument(m) => EngineError::Argument(format!("clique {j}: {m}")),
                other => other,
            })?);
        }
        let mut seps: Vec<Option<CGPotential>> = vec![None; core.cliques.len()];

        // Collect.
        for &c in &core.collect_order {
            if c == core.root {
                continue;
            }
            let p = core.cliques[c].parent.unwrap();
            let msg = marginal_onto(&pots[c], &core.cliques[c].separator)?;
            pots[p] = CGPotential::multiply(&pots[p], &msg)?;
            seps[c] = Some(msg);
        }
        let log_likelihood = pots[core.root]
            .total_log_mass()?
            .ok_or_else(|| EngineError::InconsistentEvidence("evidence has zero likelihood".into()))?;

        // Distribute.
        for &c in core.collect_order.iter().rev() {
            if c == core.root {
                continue;
            }
            let p = core.cliques[c].parent.unwrap();
            let star = marginal_onto(&pots[p], &core.cliques[c].separator)?;
            let update = CGPotential::divide(&star, seps[c].as_ref().unwrap())?;
            pots[c] = CGPotential::multiply(&pots[c], &update)?;
            seps[c] = Some(star);
        }

        Ok(CalibratedTree {
            tree: self.clone(),
            pots,
            seps,
            evidence: e.clone(),
            log_likelihood,
            stale: BTreeSet::new(),
        })
    }

    fn check_evidence(&self, e: &Evidence) -> Result<()> {
        for (&v, &s) in &e.states {
            match self.core.discrete_card.get(&v) {
                None => {
                    return Err(EngineError::Argument(format!(
                        "{v} is not a discrete variable of this network"
                    )))
                }
                Some(&card) if s >= card => {
                    return Err(EngineError::Argument(format!(
                        "state {s} out of range for {v} (cardinality {card})"
                    )))
                }
                _ => {}
            }
        }
        for &v in e.values.keys() {
            if !self.core.continuous.contains(&v) {
                return Err(EngineError::Argument(format!(
                    "{v} is not a continuous variable of this network"
                )));
            }
        }
        Ok(())
    }
}

/// Initial potential for one node's conditional distribution.
fn cpd_potential(net: &Network, id: NodeId) -> Result<CGPotential> {
    match net.node(id) {
        Node::Discrete(d) => {
            let mut domain: Vec<(NodeId, usize)> = d
                .parents
                .iter()
                .map(|&p| (p, net.cardinality(p)))
                .collect();
            domain.push((id, d.states.len()));
            domain.sort_by_key(|&(v, _)| v);
            let cards: Vec<usize> = domain.iter().map(|&(_, c)| c).collect();
            let parent_cards: Vec<usize> = d.parents.iter().map(|&p| net.cardinality(p)).collect();
            let table = indexing::configs(&cards)
                .map(|cfg| {
                    let state_of = |v: NodeId| cfg[domain.iter().position(|&(w, _)| w == v).unwrap()];
                    let parent_cfg: Vec<usize> = d.parents.iter().map(|&p| state_of(p)).collect();
                    let row = indexing::index_of(&parent_cards, &parent_cfg);
                    crate::potential::CanonicalForm::scalar(d.cpt[row][state_of(id)], 0)
                })
                .collect();
            CGPotential::new(domain, vec![], table)
        }
        Node::Continuous(x) => {
            let disc: Vec<NodeId> = x
                .parents
                .iter()
                .copied()
                .filter(|&p| net.is_discrete(p))
                .collect();
            let cont_parents: Vec<NodeId> = x
                .parents
                .iter()
                .copied()
                .filter(|&p| net.is_continuous(p))
                .collect();
            let mut domain_d: Vec<(NodeId, usize)> =
                disc.iter().map(|&p| (p, net.cardinality(p))).collect();
            domain_d.sort_by_key(|&(v, _)| v);
            let mut domain_c: Vec<NodeId> = cont_parents.clone();
            domain_c.push(id);
            domain_c.sort();
            let cards: Vec<usize> = domain_d.iter().map(|&(_, c)| c).collect();
            let disc_cards: Vec<usize> = disc.iter().map(|&p| net.cardinality(p)).collect();
            let x_pos = domain_c.iter().position(|&v| v == id).unwrap();
            let y_pos: Vec<usize> = cont_parents
                .iter()
                .map(|&p| domain_c.iter().position(|&v| v == p).unwrap())
                .collect();
            let table = indexing::configs(&cards)
                .map(|cfg| {
                    let parent_cfg: Vec<usize> = disc
                        .iter()
                        .map(|&p| cfg[domain_d.iter().position(|&(w, _)| w == p).unwrap()])
                        .collect();
                    let row = &x.params[indexing::index_of(&disc_cards, &parent_cfg)];
                    clg_form(
                        domain_c.len(),
                        x_pos,
                        &y_pos,
                        row.intercept,
                        &row.coefficients,
                        row.variance,
                    )
                })
                .collect();
            CGPotential::new(domain_d, domain_c, table)
        }
    }
}

/// Reduce by the slice of `e` whose variables are present in `pot`.
fn reduce_present(pot: &CGPotential, e: &Evidence) -> Result<CGPotential> {
    let mut local = Evidence::none();
    for (&v, &s) in &e.states {
        if pot.discrete_vars().contains(&v) {
            local = local.with_state(v, s);
        }
    }
    for (&v, &x) in &e.values {
        if pot.continuous_vars().contains(&v) {
            local = local.with_value(v, x);
        }
    }
    if local.is_empty() {
        Ok(pot.clone())
    } else {
        pot.reduce_evidence(&local)
    }
}

/// Marginalize a potential onto the given separator variables (whatever
/// part of them survives evidence reduction): continuous integration
/// first, then discrete summation.
pub(crate) fn marginal_onto(pot: &CGPotential, keep: &[NodeId]) -> Result<CGPotential> {
    let drop_c: Vec<NodeId> = pot
        .continuous_vars()
        .iter()
        .copied()
        .filter(|v| !keep.contains(v))
        .collect();
    let p = pot.marginalize_continuous(&drop_c)?;
    let drop_d: Vec<NodeId> = p
        .discrete_vars()
        .iter()
        .copied()
        .filter(|v| !keep.contains(v))
        .collect();
    p.marginalize_discrete_weak(&drop_d)
}

// ── Calibrated state ─────────────────────────────────────────────────────

/// A calibrated posterior state: one potential per clique, one per
/// separator, all agreeing on the evidence likelihood. Immutable; both
/// [`CliqueTree::propagate`] and
/// [`CalibratedTree::branch_repropagate`] return fresh states.
#[derive(Debug, Clone)]
pub struct CalibratedTree {
    tree: CliqueTree,
    pots: Vec<CGPotential>,
    seps: Vec<Option<CGPotential>>,
    evidence: Evidence,
    log_likelihood: f64,
    stale: BTreeSet<usize>,
}

impl CalibratedTree {
    pub fn tree(&self) -> &CliqueTree {
        &self.tree
    }

    pub fn evidence(&self) -> &Evidence {
        &self.evidence
    }

    /// Log-likelihood of all evidence entered so far.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Cliques whose potentials were bypassed by a branch update and no
    /// longer reflect the full evidence.
    pub fn stale_cliques(&self) -> &BTreeSet<usize> {
        &self.stale
    }

    pub fn clique_potential(&self, clique: usize) -> &CGPotential {
        &self.pots[clique]
    }

    /// Total mass seen from one clique; calibration makes this the
    /// evidence likelihood everywhere.
    pub fn clique_log_mass(&self, clique: usize) -> Result<Option<f64>> {
        self.pots[clique].total_log_mass()
    }

    /// Posterior over a single node. Observed nodes report their observed
    /// value (a point distribution / zero-variance summary).
    pub fn node_marginal(&self, v: NodeId) -> Result<Marginal> {
        if let Some(&s) = self.evidence.states.get(&v) {
            let card = self.tree.cardinality(v).unwrap();
            let mut p = vec![0.0; card];
            p[s] = 1.0;
            return Ok(Marginal::Discrete(p));
        }
        if let Some(&x) = self.evidence.values.get(&v) {
            return Ok(Marginal::Continuous(MomentSummary {
                weight: 1.0,
                mean: DVector::from_element(1, x),
                covariance: DMatrix::zeros(1, 1),
            }));
        }
        let candidates = self.tree.cliques_containing(v);
        if candidates.is_empty() {
            return Err(EngineError::Argument(format!("unknown node {v}")));
        }
        let Some(&c) = candidates.iter().find(|c| !self.stale.contains(c)) else {
            return Err(EngineError::Argument(format!(
                "marginal of {v} unavailable: every clique containing it is stale"
            )));
        };
        let m = marginal_onto(&self.pots[c], &[v])?;
        if self.tree.is_discrete_var(v) {
            let card = self.tree.cardinality(v).unwrap();
            let mut logs: Vec<Option<f64>> = Vec::with_capacity(card);
            for i in 0..card {
                logs.push(m.log_mass(i)?);
            }
            let max = logs
                .iter()
                .flatten()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(EngineError::InconsistentEvidence(format!(
                    "no mass left on {v}"
                )));
            }
            let unnorm: Vec<f64> = logs
                .iter()
                .map(|l| l.map_or(0.0, |x| (x - max).exp()))
                .collect();
            let z: f64 = unnorm.iter().sum();
            Ok(Marginal::Discrete(unnorm.into_iter().map(|p| p / z).collect()))
        } else {
            let single = m.marginalize_discrete_weak(m.discrete_vars().to_vec().as_slice())?;
            let mom = single
                .moment(0)?
                .ok_or_else(|| EngineError::InconsistentEvidence(format!("no mass left on {v}")))?;
            Ok(Marginal::Continuous(MomentSummary {
                weight: 1.0,
                mean: mom.mean,
                covariance: mom.covariance,
            }))
        }
    }

    /// Recalibrate a connected group of cliques under additional evidence
    /// confined to that group. Marginals on branch variables equal a full
    /// propagation with the combined evidence; cliques outside the branch
    /// are marked stale.
    pub fn branch_repropagate(&self, branch: &[usize], e_delta: &Evidence) -> Result<CalibratedTree> {
        let core = &*self.tree.core;
        if branch.is_empty() {
            return Err(EngineError::Argument("branch is empty".into()));
        }
        let members: BTreeSet<usize> = branch.iter().copied().collect();
        if let Some(&bad) = members.iter().find(|&&c| c >= core.cliques.len()) {
            return Err(EngineError::Argument(format!("no clique {bad}")));
        }
        if let Some(&c) = members.iter().find(|c| self.stale.contains(c)) {
            return Err(EngineError::Argument(format!(
                "branch includes stale clique {c}; repropagate fully first"
            )));
        }
        // Connected in the tree?
        {
            let mut seen = BTreeSet::new();
            let first = *members.iter().next().unwrap();
            let mut stack = vec![first];
            seen.insert(first);
            while let Some(c) = stack.pop() {
                let mut nbrs = core.cliques[c].children.clone();
                nbrs.extend(core.cliques[c].parent);
                for nb in nbrs {
                    if members.contains(&nb) && seen.insert(nb) {
                        stack.push(nb);
                    }
                }
            }
            if seen.len() != members.len() {
                return Err(EngineError::Argument("branch is not connected".into()));
            }
        }
        // Every new finding must land inside the branch.
        for v in e_delta.nodes() {
            let present = members.iter().any(|&c| {
                let pot = &self.pots[c];
                pot.discrete_vars().contains(&v) || pot.continuous_vars().contains(&v)
            });
            if !present {
                return Err(EngineError::Argument(format!(
                    "evidence on {v} is not covered by the branch"
                )));
            }
        }
        self.tree.check_evidence(e_delta)?;

        let mut pots = self.pots.clone();
        let mut seps = self.seps.clone();

        // Slice the new findings into every branch potential and every
        // separator touching the branch (boundary separators included:
        // they carry the outside world's contribution forward).
        for &c in &members {
            pots[c] = reduce_present(&pots[c], e_delta)?;
        }
        for c in 0..core.cliques.len() {
            let Some(p) = core.cliques[c].parent else { continue };
            if members.contains(&c) || members.contains(&p) {
                if let Some(s) = &seps[c] {
                    seps[c] = Some(reduce_present(s, e_delta)?);
                }
            }
        }

        // Local two-pass propagation toward the branch member nearest the
        // global root, with ratio messages against the current separators.
        let branch_root = *members.iter().min_by_key(|&&c| (core.depth[c], c)).unwrap();
        let mut local: Vec<usize> = members.iter().copied().collect();
        local.sort_by_key(|&c| (std::cmp::Reverse(core.depth[c]), c));
        for &c in &local {
            if c == branch_root {
                continue;
            }
            let p = core.cliques[c].parent.unwrap();
            let msg = marginal_onto(&pots[c], &core.cliques[c].separator)?;
            let ratio = CGPotential::divide(&msg, seps[c].as_ref().unwrap())?;
            pots[p] = CGPotential::multiply(&pots[p], &ratio)?;
            seps[c] = Some(msg);
        }
        let log_likelihood = pots[branch_root]
            .total_log_mass()?
            .ok_or_else(|| EngineError::InconsistentEvidence("evidence has zero likelihood".into()))?;
        for &c in local.iter().rev() {
            if c == branch_root {
                continue;
            }
            let p = core.cliques[c].parent.unwrap();
            let star = marginal_onto(&pots[p], &core.cliques[c].separator)?;
            let update = CGPotential::divide(&star, seps[c].as_ref().unwrap())?;
            pots[c] = CGPotential::multiply(&pots[c], &update)?;
            seps[c] = Some(star);
        }

        let mut stale = self.stale.clone();
        if !e_delta.is_empty() {
            for c in 0..core.cliques.len() {
                if !members.contains(&c) {
                    stale.insert(c);
                }
            }
        }
        Ok(CalibratedTree {
            tree: self.tree.clone(),
            pots,
            seps,
            evidence: self.evidence.merged(e_delta),
            log_likelihood,
            stale,
        })
    }
}

// ── Tests ────────────────────────────────────────────────────────────────
