//! Versioned JSON schema for networks and evidence.
//!
//! The network document is self-describing: every CPT/CLG row carries the
//! parent-state tuple (`"on"`) it applies to, and the loader insists the
//! rows arrive in row-major order over the declared parents so a file
//! round-trips byte-for-byte. Evidence is a flat object mapping node labels
//! to either a state label (discrete) or a number (continuous).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EngineError, Result};
use crate::indexing;
use crate::model::{ClgRow, Evidence, Network, NetworkBuilder, Node};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct NetworkDoc {
    schema_version: u32,
    name: String,
    nodes: Vec<NodeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    label: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    states: Vec<String>,
    #[serde(default)]
    parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    cpt: Vec<CptRowDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    clg: Vec<ClgRowDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CptRowDoc {
    /// Discrete-parent state labels this row applies to, in parent order.
    on: Vec<String>,
    probs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClgRowDoc {
    on: Vec<String>,
    intercept: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    coefficients: Vec<f64>,
    variance: f64,
}

fn bad(msg: impl Into<String>) -> EngineError {
    EngineError::Configuration(msg.into())
}

fn to_doc(net: &Network) -> NetworkDoc {
    let nodes = net
        .ids()
        .map(|id| {
            let parents = net.parents(id).iter().map(|&p| net.label(p).to_string()).collect();
            // State-label tuples for each discrete-parent configuration.
            let dp = net.discrete_parents(id);
            let cards: Vec<usize> = dp.iter().map(|&p| net.cardinality(p)).collect();
            let tuples: Vec<Vec<String>> = indexing::configs(&cards)
                .map(|cfg| {
                    dp.iter()
                        .zip(&cfg)
                        .map(|(&p, &s)| net.discrete(p).unwrap().states[s].clone())
                        .collect()
                })
                .collect();
            match net.node(id) {
                Node::Discrete(d) => NodeDoc {
                    label: d.label.clone(),
                    kind: "discrete".into(),
                    states: d.states.clone(),
                    parents,
                    cpt: tuples
                        .into_iter()
                        .zip(&d.cpt)
                        .map(|(on, row)| CptRowDoc {
                            on,
                            probs: row.clone(),
                        })
                        .collect(),
                    clg: Vec::new(),
                },
                Node::Continuous(c) => NodeDoc {
                    label: c.label.clone(),
                    kind: "continuous".into(),
                    states: Vec::new(),
                    parents,
                    cpt: Vec::new(),
                    clg: tuples
                        .into_iter()
                        .zip(&c.params)
                        .map(|(on, row)| ClgRowDoc {
                            on,
                            intercept: row.intercept,
                            coefficients: row.coefficients.clone(),
                            variance: row.variance,
                        })
                        .collect(),
                },
            }
        })
        .collect();
    NetworkDoc {
        schema_version: SCHEMA_VERSION,
        name: net.name.clone(),
        nodes,
    }
}

/// Serialize a network to the schema (pretty-printed, deterministic).
pub fn network_to_json(net: &Network) -> String {
    serde_json::to_string_pretty(&to_doc(net)).expect("network serialization cannot fail")
}

/// Parse a network document. Shape problems (unknown labels, wrong row
/// order, bad version) are configuration errors; numeric invariants are left
/// to `validate`.
pub fn network_from_json(text: &str) -> Result<Network> {
    let doc: NetworkDoc = serde_json::from_str(text)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(bad(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    // First pass: labels and kinds, so parents may reference any node.
    let labels: Vec<&str> = doc.nodes.iter().map(|n| n.label.as_str()).collect();
    let find = |label: &str| -> Result<usize> {
        labels
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| bad(format!("unknown parent label '{label}'")))
    };

    let mut b = NetworkBuilder::new(&doc.name);
    for node in &doc.nodes {
        let parents: Vec<crate::model::NodeId> = node
            .parents
            .iter()
            .map(|p| find(p).map(crate::model::NodeId))
            .collect::<Result<_>>()?;
        // Expected row-major "on" tuples over the discrete parents.
        let dp_states: Vec<&Vec<String>> = node
            .parents
            .iter()
            .filter_map(|p| {
                let i = labels.iter().position(|&l| l == p.as_str())?;
                let d = &doc.nodes[i];
                (d.kind == "discrete").then_some(&d.states)
            })
            .collect();
        let cards: Vec<usize> = dp_states.iter().map(|s| s.len()).collect();
        let expect_on: Vec<Vec<String>> = indexing::configs(&cards)
            .map(|cfg| {
                dp_states
                    .iter()
                    .zip(&cfg)
                    .map(|(states, &s)| states[s].clone())
                    .collect()
            })
            .collect();
        let check_on = |given: Vec<&Vec<String>>| -> Result<()> {
            if given.len() != expect_on.len() {
                return Err(bad(format!(
                    "node '{}': {} rows, expected {}",
                    node.label,
                    given.len(),
                    expect_on.len()
                )));
            }
            for (i, (g, e)) in given.iter().zip(&expect_on).enumerate() {
                if **g != *e {
                    return Err(bad(format!(
                        "node '{}': row {i} is keyed {:?}, expected {:?} (rows must be row-major over parents)",
                        node.label, g, e
                    )));
                }
            }
            Ok(())
        };
        match node.kind.as_str() {
            "discrete" => {
                check_on(node.cpt.iter().map(|r| &r.on).collect())?;
                let states: Vec<&str> = node.states.iter().map(|s| s.as_str()).collect();
                b.discrete(
                    &node.label,
                    &states,
                    &parents,
                    node.cpt.iter().map(|r| r.probs.clone()).collect(),
                );
            }
            "continuous" => {
                check_on(node.clg.iter().map(|r| &r.on).collect())?;
                b.continuous(
                    &node.label,
                    &parents,
                    node.clg
                        .iter()
                        .map(|r| ClgRow {
                            intercept: r.intercept,
                            coefficients: r.coefficients.clone(),
                            variance: r.variance,
                        })
                        .collect(),
                );
            }
            other => return Err(bad(format!("node '{}': unknown kind '{other}'", node.label))),
        }
    }
    Ok(b.build())
}

/// Serialize evidence against a network (labels resolved, deterministic
/// order by node index).
pub fn evidence_to_json(net: &Network, e: &Evidence) -> String {
    let mut map = serde_json::Map::new();
    for id in net.ids() {
        if let Some(&s) = e.states.get(&id) {
            let label = net.discrete(id).map(|d| d.states[s].clone()).unwrap_or_default();
            map.insert(net.label(id).to_string(), serde_json::Value::String(label));
        } else if let Some(&v) = e.values.get(&id) {
            map.insert(
                net.label(id).to_string(),
                serde_json::Number::from_f64(v).map(serde_json::Value::Number).unwrap(),
            );
        }
    }
    serde_json::to_string_pretty(&serde_json::Value::Object(map)).unwrap()
}

/// Parse a flat evidence object against a network.
pub fn evidence_from_json(net: &Network, text: &str) -> Result<Evidence> {
    let doc: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
    let mut e = Evidence::none();
    for (label, value) in doc {
        let id = net
            .find(&label)
            .ok_or_else(|| bad(format!("evidence for unknown node '{label}'")))?;
        match value {
            serde_json::Value::String(state) => {
                let d = net.discrete(id).ok_or_else(|| {
                    bad(format!("state evidence '{state}' on continuous node '{label}'"))
                })?;
                let s = d
                    .states
                    .iter()
                    .position(|x| *x == state)
                    .ok_or_else(|| bad(format!("node '{label}' has no state '{state}'")))?;
                e.states.insert(id, s);
            }
            serde_json::Value::Number(n) => {
                if net.is_discrete(id) {
                    return Err(bad(format!(
                        "numeric evidence on discrete node '{label}' (use a state label)"
                    )));
                }
                e.values.insert(id, n.as_f64().unwrap());
            }
            _ => return Err(bad(format!("evidence for '{label}' must be a string or number"))),
        }
    }
    Ok(e)
}

fn sha_hex(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    hex::encode(h.finalize())
}

/// Content hash of a network (over its canonical serialization). Compiled
/// artifacts carry this so stale models are detected instead of trusted.
pub fn network_digest(net: &Network) -> String {
    sha_hex(&network_to_json(net))
}

/// Content hash of an evidence set against a network.
pub fn evidence_digest(net: &Network, e: &Evidence) -> String {
    sha_hex(&evidence_to_json(net, e))
}
