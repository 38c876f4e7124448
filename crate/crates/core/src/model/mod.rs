//! Network description: discrete nodes with conditional probability tables,
//! continuous nodes with conditional linear Gaussian (CLG) distributions,
//! evidence, and the structural queries the rest of the engine is built on.
//!
//! Conventions that everything downstream relies on:
//!
//! * Contamination-like quantities are in natural-log units. A "density" of
//!   −34.5 is a perfectly sensible (astronomically clean) value on that
//!   scale, and thresholds are supplied in the same units.
//! * Discrete nodes never have continuous parents (the CLG restriction).
//! * All tables are row-major over the parents in their listed order, first
//!   parent most significant — see [`crate::indexing`].
//! * Node indices are dense and deterministic; every ordering choice in the
//!   engine ties back to them so artifacts are reproducible byte-for-byte.

pub mod fixture;
mod json;

pub use fixture::{reference_fixture, reference_fixture_with, SortingLine};
pub use json::{
    evidence_digest, evidence_from_json, evidence_to_json, network_digest, network_from_json,
    network_to_json, SCHEMA_VERSION,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{EngineError, Result};
use crate::indexing;

/// Every variance in the system is clamped to at least this. Keeps canonical
/// forms invertible when a model is specified with a deterministic-looking
/// (near-zero variance) relationship.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// CPT rows must sum to 1 within this tolerance.
pub const CPT_ROW_TOL: f64 = 1e-9;

/// Dense index of a node within its network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Discrete node: a table of `P(state | parent configuration)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteNode {
    pub label: String,
    pub states: Vec<String>,
    /// Parents in declaration order; must all be discrete.
    pub parents: Vec<NodeId>,
    /// One row per parent configuration (row-major over `parents`), each row
    /// one probability per state.
    pub cpt: Vec<Vec<f64>>,
}

/// CLG parameters for one discrete-parent configuration:
/// `x | config, y ~ N(intercept + coefficients · y, variance)` where `y`
/// stacks the continuous parents in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClgRow {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub variance: f64,
}

impl ClgRow {
    pub fn new(intercept: f64, coefficients: Vec<f64>, variance: f64) -> Self {
        ClgRow {
            intercept,
            coefficients,
            variance,
        }
    }
}

/// Continuous node with one [`ClgRow`] per discrete-parent configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousNode {
    pub label: String,
    /// Parents in declaration order; discrete and continuous may be mixed.
    pub parents: Vec<NodeId>,
    /// Row-major over the discrete parents (in declaration order).
    pub params: Vec<ClgRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Discrete(DiscreteNode),
    Continuous(ContinuousNode),
}

impl Node {
    pub fn label(&self) -> &str {
        match self {
            Node::Discrete(d) => &d.label,
            Node::Continuous(c) => &c.label,
        }
    }

    pub fn parents(&self) -> &[NodeId] {
        match self {
            Node::Discrete(d) => &d.parents,
            Node::Continuous(c) => &c.parents,
        }
    }
}

/// A hybrid directed network. Immutable once built; construct via
/// [`NetworkBuilder`] or the JSON loader.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    nodes: Vec<Node>,
}

impl Network {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn ids(&self) -> impl DoubleEndedIterator<Item = NodeId> + ExactSizeIterator {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn label(&self, id: NodeId) -> &str {
        self.nodes[id.0].label()
    }

    /// Look a node up by label.
    pub fn find(&self, label: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.label() == label).map(NodeId)
    }

    pub fn is_discrete(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0], Node::Discrete(_))
    }

    pub fn is_continuous(&self, id: NodeId) -> bool {
        !self.is_discrete(id)
    }

    /// Number of states of a discrete node. Panics on continuous nodes:
    /// callers are expected to have checked the kind.
    pub fn cardinality(&self, id: NodeId) -> usize {
        match &self.nodes[id.0] {
            Node::Discrete(d) => d.states.len(),
            Node::Continuous(c) => panic!("cardinality of continuous node {}", c.label),
        }
    }

    pub fn discrete(&self, id: NodeId) -> Option<&DiscreteNode> {
        match &self.nodes[id.0] {
            Node::Discrete(d) => Some(d),
            Node::Continuous(_) => None,
        }
    }

    pub fn continuous(&self, id: NodeId) -> Option<&ContinuousNode> {
        match &self.nodes[id.0] {
            Node::Discrete(_) => None,
            Node::Continuous(c) => Some(c),
        }
    }

    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        self.nodes[id.0].parents()
    }

    /// Discrete parents in declaration order (the CPT/CLG row axis).
    pub fn discrete_parents(&self, id: NodeId) -> Vec<NodeId> {
        self.parents(id)
            .iter()
            .copied()
            .filter(|&p| self.is_discrete(p))
            .collect()
    }

    /// Continuous parents in declaration order (the coefficient axis).
    pub fn continuous_parents(&self, id: NodeId) -> Vec<NodeId> {
        self.parents(id)
            .iter()
            .copied()
            .filter(|&p| self.is_continuous(p))
            .collect()
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.ids()
            .filter(|&c| self.parents(c).contains(&id))
            .collect()
    }
}

/// Incremental construction; `build` does not validate — run
/// [`validate`] to get the violation list (tests deliberately build broken
/// networks).
#[derive(Debug, Default)]
pub struct NetworkBuilder {
    name: String,
    nodes: Vec<Node>,
}

impl NetworkBuilder {
    pub fn new(name: &str) -> Self {
        NetworkBuilder {
            name: name.to_string(),
            nodes: Vec::new(),
        }
    }

    /// Add a discrete node; `cpt` holds one row per parent configuration.
    pub fn discrete(
        &mut self,
        label: &str,
        states: &[&str],
        parents: &[NodeId],
        cpt: Vec<Vec<f64>>,
    ) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node::Discrete(DiscreteNode {
            label: label.to_string(),
            states: states.iter().map(|s| s.to_string()).collect(),
            parents: parents.to_vec(),
            cpt,
        }));
        id
    }

    /// Add a continuous node; `params` holds one row per discrete-parent
    /// configuration.
    pub fn continuous(&mut self, label: &str, parents: &[NodeId], params: Vec<ClgRow>) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node::Continuous(ContinuousNode {
            label: label.to_string(),
            parents: parents.to_vec(),
            params,
        }));
        id
    }

    pub fn build(self) -> Network {
        Network {
            name: self.name,
            nodes: self.nodes,
        }
    }
}

/// Observed nodes: discrete state indices and continuous values. A node may
/// appear in at most one of the two maps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evidence {
    pub states: BTreeMap<NodeId, usize>,
    pub values: BTreeMap<NodeId, f64>,
}

impl Evidence {
    pub fn none() -> Self {
        Evidence::default()
    }

    pub fn with_state(mut self, node: NodeId, state: usize) -> Self {
        self.states.insert(node, state);
        self
    }

    pub fn with_value(mut self, node: NodeId, value: f64) -> Self {
        self.values.insert(node, value);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty() && self.values.is_empty()
    }

    /// All observed nodes, ascending.
    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.states
            .keys()
            .chain(self.values.keys())
            .copied()
            .collect()
    }

    /// Union of two evidence sets; later entries win on overlap.
    pub fn merged(&self, other: &Evidence) -> Evidence {
        let mut out = self.clone();
        out.states.extend(other.states.iter());
        out.values.extend(other.values.iter());
        out
    }
}

/// One broken invariant found by [`validate`]. Violations are data, not
/// errors: a validator that panics on the input it exists to judge would be
/// useless.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub node: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.node, self.rule)
    }
}

/// Check every structural and numeric invariant of a network. Empty result
/// means the network is usable by every other module.
pub fn validate(net: &Network) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = net.node_count();

    // Label uniqueness.
    let mut seen: BTreeMap<&str, NodeId> = BTreeMap::new();
    for id in net.ids() {
        let label = net.label(id);
        if label.is_empty() {
            out.push(Violation {
                node: format!("{id}"),
                rule: "label must be non-empty".into(),
            });
        }
        if let Some(first) = seen.insert(label, id) {
            out.push(Violation {
                node: label.to_string(),
                rule: format!("label also used by node {first}"),
            });
        }
    }

    // Parent references and per-node tables.
    for id in net.ids() {
        let label = net.label(id).to_string();
        let mut refs_ok = true;
        for &p in net.parents(id) {
            if p.0 >= n {
                out.push(Violation {
                    node: label.clone(),
                    rule: format!("parent {p} does not exist"),
                });
                refs_ok = false;
            } else if p == id {
                out.push(Violation {
                    node: label.clone(),
                    rule: "node is its own parent".into(),
                });
                refs_ok = false;
            }
        }
        if !refs_ok {
            continue; // table shapes are meaningless with dangling parents
        }

        match net.node(id) {
            Node::Discrete(d) => {
                if d.states.len() < 2 {
                    out.push(Violation {
                        node: label.clone(),
                        rule: format!("needs at least 2 states, has {}", d.states.len()),
                    });
                }
                for &p in &d.parents {
                    if net.is_continuous(p) {
                        out.push(Violation {
                            node: label.clone(),
                            rule: format!(
                                "discrete node has continuous parent {} (CLG restriction)",
                                net.label(p)
                            ),
                        });
                    }
                }
                let cards: Vec<usize> = d
                    .parents
                    .iter()
                    .filter(|&&p| net.is_discrete(p))
                    .map(|&p| net.cardinality(p))
                    .collect();
                let rows = indexing::config_count(&cards);
                if d.cpt.len() != rows {
                    out.push(Violation {
                        node: label.clone(),
                        rule: format!("CPT has {} rows, expected {rows}", d.cpt.len()),
                    });
                } else {
                    for (r, row) in d.cpt.iter().enumerate() {
                        if row.len() != d.states.len() {
                            out.push(Violation {
                                node: label.clone(),
                                rule: format!(
                                    "CPT row {r} has {} entries, expected {}",
                                    row.len(),
                                    d.states.len()
                                ),
                            });
                            continue;
                        }
                        if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                            out.push(Violation {
                                node: label.clone(),
                                rule: format!("CPT row {r} has a negative or non-finite entry"),
                            });
                            continue;
                        }
                        let sum: f64 = row.iter().sum();
                        if (sum - 1.0).abs() > CPT_ROW_TOL {
                            out.push(Violation {
                                node: label.clone(),
                                rule: format!("CPT row {r} sums to {sum:.12}, expected 1"),
                            });
                        }
                    }
                }
            }
            Node::Continuous(c) => {
                let cards: Vec<usize> = c
                    .parents
                    .iter()
                    .filter(|&&p| net.is_discrete(p))
                    .map(|&p| net.cardinality(p))
                    .collect();
                let rows = indexing::config_count(&cards);
                let k = c.parents.iter().filter(|&&p| net.is_continuous(p)).count();
                if c.params.len() != rows {
                    out.push(Violation {
                        node: label.clone(),
                        rule: format!("has {} parameter rows, expected {rows}", c.params.len()),
                    });
                    continue;
                }
                for (r, row) in c.params.iter().enumerate() {
                    if row.coefficients.len() != k {
                        out.push(Violation {
                            node: label.clone(),
                            rule: format!(
                                "row {r} has {} coefficients, expected {k}",
                                row.coefficients.len()
                            ),
                        });
                    }
                    if !row.variance.is_finite() || row.variance < VARIANCE_FLOOR {
                        out.push(Violation {
                            node: label.clone(),
                            rule: format!(
                                "row {r} variance {} below floor {VARIANCE_FLOOR}",
                                row.variance
                            ),
                        });
                    }
                    if !row.intercept.is_finite()
                        || row.coefficients.iter().any(|b| !b.is_finite())
                    {
                        out.push(Violation {
                            node: label.clone(),
                            rule: format!("row {r} has a non-finite parameter"),
                        });
                    }
                }
            }
        }
    }

    // Acyclicity last — only meaningful if references resolve.
    if out.iter().all(|v| !v.rule.contains("does not exist")) && topo_sort(net).is_err() {
        out.push(Violation {
            node: net.name.clone(),
            rule: "network contains a directed cycle".into(),
        });
    }

    out
}

/// Topological order, deterministic: among ready nodes, lowest index first.
pub fn topo_sort(net: &Network) -> Result<Vec<NodeId>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let n = net.node_count();
    let mut indegree = vec![0usize; n];
    for id in net.ids() {
        indegree[id.0] = net.parents(id).len();
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n)
        .filter(|&i| indegree[i] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(NodeId(i));
        for c in net.children(NodeId(i)) {
            indegree[c.0] -= 1;
            if indegree[c.0] == 0 {
                ready.push(Reverse(c.0));
            }
        }
    }
    if order.len() != n {
        return Err(EngineError::Structural(format!(
            "cycle detected in network '{}'",
            net.name
        )));
    }
    Ok(order)
}

/// The nearest ancestral discrete nodes of a continuous target: every
/// discrete δ with a directed path δ → … → x whose interior is entirely
/// continuous. These are the variables whose joint configuration indexes
/// the mixture components of x's posterior; discrete ancestors further up
/// are screened off by the boundary itself.
pub fn discrete_boundary(net: &Network, x: NodeId) -> Result<BTreeSet<NodeId>> {
    if x.0 >= net.node_count() {
        return Err(EngineError::Argument(format!("unknown node {x}")));
    }
    if net.is_discrete(x) {
        return Err(EngineError::Argument(format!(
            "discrete node {} has no boundary (it is its own mixture source)",
            net.label(x)
        )));
    }
    let mut boundary = BTreeSet::new();
    let mut visited = BTreeSet::new();
    let mut stack = vec![x];
    while let Some(v) = stack.pop() {
        if !visited.insert(v) {
            continue;
        }
        for &p in net.parents(v) {
            if net.is_discrete(p) {
                boundary.insert(p);
            } else {
                stack.push(p);
            }
        }
    }
    Ok(boundary)
}

/// Continuous ancestors of `x` on all-continuous directed paths into it —
/// the chain the incremental updates of the mixture recursion must cover.
/// `boundary` must be exactly `discrete_boundary(net, x)`.
pub fn continuous_bridge(
    net: &Network,
    x: NodeId,
    boundary: &BTreeSet<NodeId>,
) -> Result<BTreeSet<NodeId>> {
    let expect = discrete_boundary(net, x)?;
    if *boundary != expect {
        return Err(EngineError::Argument(format!(
            "boundary does not match discrete_boundary({})",
            net.label(x)
        )));
    }
    let mut bridge = BTreeSet::new();
    let mut visited = BTreeSet::new();
    let mut stack = vec![x];
    while let Some(v) = stack.pop() {
        if !visited.insert(v) {
            continue;
        }
        for &p in net.parents(v) {
            if net.is_continuous(p) {
                bridge.insert(p);
                stack.push(p);
            }
        }
    }
    Ok(bridge)
}
