//! Who paid whom, read back from the charge records of a run.

use std::collections::BTreeSet;
use std::fmt;

use crate::ids::Role;
use crate::topology::Topology;

use super::ScenarioError;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowEdge {
    pub payer: String,
    pub payee: String,
    pub amount: f64,
    pub cause: String,
    /// Id of the charge record in the run log.
    pub event: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValueFlowGraph {
    pub edges: Vec<FlowEdge>,
}

impl ValueFlowGraph {
    /// Distinct (payer, payee) actor pairs.
    pub fn party_pairs(&self) -> BTreeSet<(String, String)> {
        self.edges.iter().map(|e| (e.payer.clone(), e.payee.clone())).collect()
    }

    /// Distinct (payer role, payee role) pairs. Actors the topology does not
    /// know are skipped.
    pub fn role_pairs(&self, topo: &Topology) -> BTreeSet<(Role, Role)> {
        self.edges
            .iter()
            .filter_map(|e| Some((topo.role_of(&e.payer)?, topo.role_of(&e.payee)?)))
            .collect()
    }

    pub fn total_paid_by(&self, payer: &str) -> f64 {
        self.edges.iter().filter(|e| e.payer == payer).map(|e| e.amount).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("payer,payee,amount,cause,event\n");
        for e in &self.edges {
            out.push_str(&format!("{},{},{},{},{}\n", e.payer, e.payee, e.amount, e.cause, e.event));
        }
        out
    }
}

impl fmt::Display for ValueFlowGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.edges {
            writeln!(f, "{} -> {}  {}  {} (event {})", e.payer, e.payee, e.amount, e.cause, e.event)?;
        }
        Ok(())
    }
}

/// Builds the graph from a settled run.
pub fn value_flow(topo: &Topology) -> Result<ValueFlowGraph, ScenarioError> {
    if !topo.is_settled() {
        return Err(ScenarioError::RunIncomplete("the network has not been settled".into()));
    }
    let edges = topo
        .log
        .of_kind("charge")
        .map(|r| FlowEdge {
            payer: r.get("payer").unwrap_or_default().to_string(),
            payee: r.get("payee").unwrap_or_default().to_string(),
            amount: r.get("amount").and_then(|a| a.parse().ok()).unwrap_or(0.0),
            cause: r.get("cause").unwrap_or_default().to_string(),
            event: r.id,
        })
        .collect();
    Ok(ValueFlowGraph { edges })
}
