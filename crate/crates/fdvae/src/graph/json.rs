//! JSON interchange format for DAGs and discrete SCMs.
//!
//! ```json
//! {
//!   "nodes": [{"name": "T", "role": "treatment", "domain": [0.0, 1.0]}, ...],
//!   "edges": [["T", "Z"], ...],
//!   "cpts": {"T": [0.7, 0.3], ...}
//! }
//! ```
//!
//! `cpts` holds row-major arrays: rows iterate parent configurations (last
//! parent fastest), columns iterate the node's own domain. `role`, `domain`
//! and `cpts` are optional; a document without them describes a bare DAG.

use super::{Dag, Role};
use crate::error::{Error, Result};
use crate::graph::discrete::DiscreteScm;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Serialize, Deserialize)]
pub struct GraphDoc {
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub cpts: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NodeDoc {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<f64>>,
}

impl GraphDoc {
    pub fn from_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Data(format!("graph json: {e}")))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_str(&s)
    }

    pub fn to_dag(&self) -> Result<Dag> {
        let mut b = Dag::builder();
        for n in &self.nodes {
            b = match n.role {
                Some(r) => b.node_with_role(&n.name, r),
                None => b.node(&n.name),
            };
        }
        for (p, c) in &self.edges {
            b = b.edge(p, c);
        }
        b.build()
    }

    /// Build a discrete SCM; requires a domain and a CPT for every node.
    pub fn to_scm(&self) -> Result<DiscreteScm> {
        let dag = self.to_dag()?;
        let mut domains = Vec::with_capacity(dag.len());
        for n in &self.nodes {
            domains.push(n.domain.clone().ok_or_else(|| {
                Error::Data(format!("node '{}' has no domain", n.name))
            })?);
        }
        let mut cpts = Vec::with_capacity(dag.len());
        for i in 0..dag.len() {
            let name = dag.name(i);
            let flat = self
                .cpts
                .get(name)
                .ok_or_else(|| Error::Data(format!("node '{name}' has no cpt")))?;
            let arity = domains[i].len();
            if arity == 0 || flat.len() % arity != 0 {
                return Err(Error::Data(format!(
                    "cpt of '{name}' has length {} not divisible by arity {arity}",
                    flat.len()
                )));
            }
            cpts.push(flat.chunks(arity).map(|c| c.to_vec()).collect());
        }
        DiscreteScm::new(dag, domains, cpts)
    }
}
