//! The validated execution plan: nodes with frozen configurations, edges
//! labeled by the columns that induce them, a deterministic topological
//! order, the inferred column-kind table and the plan digest.

use crate::digest::sha256_hex;
use crate::operator::KeyBinding;
use crate::value::{canonical_json, ValueKind};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub index: usize,
    pub operator: String,
    pub config: Value,
    pub binding: KeyBinding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEdge {
    pub from: usize,
    pub to: usize,
    pub column: String,
}

/// Where a column's final version comes from: an initial column or the node
/// that last produces it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum ColumnProducer {
    Initial,
    Node(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub kind: ValueKind,
    pub producer: ColumnProducer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledPlan {
    pub nodes: Vec<PlanNode>,
    pub edges: Vec<PlanEdge>,
    /// Node indices in execution order: consistent with every edge, with
    /// declaration order breaking ties.
    pub order: Vec<usize>,
    /// Final kind per column after the whole plan runs.
    pub kind_table: BTreeMap<String, ColumnInfo>,
    pub digest: String,
}

impl CompiledPlan {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The topological order (already computed at compile time).
    pub fn topo_order(&self) -> &[usize] {
        &self.order
    }

    pub fn summary(&self) -> Value {
        serde_json::json!({
            "nodes": self.nodes.len(),
            "edges": self.edges.len(),
            "order": self.order,
            "digest": self.digest,
        })
    }
}

/// Digest over the canonical JSON of operators, bindings and frozen
/// configurations (template identifiers travel inside the configurations).
pub fn plan_digest(nodes: &[PlanNode]) -> String {
    let value = serde_json::to_value(
        nodes
            .iter()
            .map(|n| {
                serde_json::json!({
                    "operator": n.operator,
                    "config": n.config,
                    "binding": serde_json::to_value(&n.binding).expect("serializable binding"),
                })
            })
            .collect::<Vec<_>>(),
    )
    .expect("serializable nodes");
    sha256_hex(canonical_json(&value).as_bytes())
}

/// Kahn's algorithm with a deterministic tie-break: among ready nodes, the
/// smallest declaration index runs first. Returns `Err` with the indices
/// left unordered when the graph is cyclic.
pub fn topological_order(node_count: usize, edges: &[PlanEdge]) -> Result<Vec<usize>, Vec<usize>> {
    let mut in_degree = vec![0usize; node_count];
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); node_count];
    let mut seen: std::collections::BTreeSet<(usize, usize)> = std::collections::BTreeSet::new();
    for edge in edges {
        // Parallel edges (two columns between one node pair) count once.
        if seen.insert((edge.from, edge.to)) {
            successors[edge.from].push(edge.to);
            in_degree[edge.to] += 1;
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..node_count).filter(|&i| in_degree[i] == 0).collect();
    let mut order = Vec::with_capacity(node_count);
    while let Some(&next) = ready.iter().next() {
        ready.remove(&next);
        order.push(next);
        for &succ in &successors[next] {
            in_degree[succ] -= 1;
            if in_degree[succ] == 0 {
                ready.insert(succ);
            }
        }
    }
    if order.len() == node_count {
        Ok(order)
    } else {
        let remaining: Vec<usize> = (0..node_count).filter(|i| !order.contains(i)).collect();
        Err(remaining)
    }
}
