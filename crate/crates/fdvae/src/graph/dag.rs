use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

/// Advisory role tag for a node. Criterion checks never read roles, only
/// structure; roles exist for bookkeeping and data generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Treatment,
    Outcome,
    UnobservedConfounder,
    FrontDoor,
    ConfounderT,
    ConfounderTy,
    ConfounderY,
    External,
    Proxy,
}

/// A directed acyclic graph over named nodes.
///
/// Immutable after construction; construction validates acyclicity, rejects
/// self-loops and duplicate edges, and allows at most one `Treatment` and
/// one `Outcome` role.
#[derive(Debug, Clone)]
pub struct Dag {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    roles: HashMap<usize, Role>,
    topo_order: Vec<usize>,
}

#[derive(Debug, Default)]
pub struct DagBuilder {
    nodes: Vec<(String, Option<Role>)>,
    edges: Vec<(String, String)>,
}

impl DagBuilder {
    pub fn node(mut self, name: &str) -> Self {
        self.nodes.push((name.to_string(), None));
        self
    }

    pub fn node_with_role(mut self, name: &str, role: Role) -> Self {
        self.nodes.push((name.to_string(), Some(role)));
        self
    }

    pub fn edge(mut self, parent: &str, child: &str) -> Self {
        self.edges.push((parent.to_string(), child.to_string()));
        self
    }

    pub fn build(self) -> Result<Dag> {
        let n = self.nodes.len();
        let mut index = HashMap::new();
        let mut names = Vec::with_capacity(n);
        let mut roles = HashMap::new();
        for (i, (name, role)) in self.nodes.into_iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate node '{name}'")));
            }
            if let Some(r) = role {
                roles.insert(i, r);
            }
            names.push(name);
        }
        for unique in [Role::Treatment, Role::Outcome] {
            if roles.values().filter(|&&r| r == unique).count() > 1 {
                return Err(Error::InvalidArgument(format!(
                    "at most one node may carry role {unique:?}"
                )));
            }
        }

        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for (p, c) in &self.edges {
            let pi = *index
                .get(p)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown node '{p}' in edge")))?;
            let ci = *index
                .get(c)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown node '{c}' in edge")))?;
            if pi == ci {
                return Err(Error::InvalidArgument(format!("self-loop on '{p}'")));
            }
            if !seen.insert((pi, ci)) {
                return Err(Error::InvalidArgument(format!("duplicate edge {p} -> {c}")));
            }
            parents[ci].push(pi);
            children[pi].push(ci);
        }

        let topo_order = toposort(&parents, &children)?;
        let neighbors = (0..n)
            .map(|i| {
                let mut v: Vec<usize> = parents[i].iter().chain(children[i].iter()).copied().collect();
                v.sort_unstable();
                v
            })
            .collect();
        Ok(Dag { names, index, parents, children, neighbors, roles, topo_order })
    }
}

fn toposort(parents: &[Vec<usize>], children: &[Vec<usize>]) -> Result<Vec<usize>> {
    let n = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(|p| p.len()).collect();
    let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(node) = queue.pop() {
        order.push(node);
        for &c in &children[node] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                queue.push(c);
            }
        }
    }
    if order.len() != n {
        return Err(Error::InvalidArgument("graph contains a cycle".into()));
    }
    Ok(order)
}

impl Dag {
    pub fn builder() -> DagBuilder {
        DagBuilder::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn node_names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown node '{name}'")))
    }

    pub fn role(&self, i: usize) -> Option<Role> {
        self.roles.get(&i).copied()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.children[parent].contains(&child)
    }

    /// Nodes in a valid topological order (parents before children).
    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    /// Strict descendants of `i` (excluding `i` itself).
    pub fn descendants(&self, i: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack = vec![i];
        while let Some(cur) = stack.pop() {
            for &c in &self.children[cur] {
                if out.insert(c) {
                    stack.push(c);
                }
            }
        }
        out
    }

    pub(crate) fn resolve_set(&self, names: &[&str]) -> Result<BTreeSet<usize>> {
        let mut out = BTreeSet::new();
        for name in names {
            out.insert(self.index_of(name)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_cycle() {
        let err = Dag::builder()
            .node("A")
            .node("B")
            .edge("A", "B")
            .edge("B", "A")
            .build();
        assert!(err.is_err());
    }

    #[test]
    fn rejects_self_loop_and_duplicates() {
        assert!(Dag::builder().node("A").edge("A", "A").build().is_err());
        assert!(Dag::builder()
            .node("A")
            .node("B")
            .edge("A", "B")
            .edge("A", "B")
            .build()
            .is_err());
        assert!(Dag::builder().node("A").node("A").build().is_err());
    }

    #[test]
    fn rejects_two_treatments() {
        assert!(Dag::builder()
            .node_with_role("T1", Role::Treatment)
            .node_with_role("T2", Role::Treatment)
            .build()
            .is_err());
    }

    #[test]
    fn descendants_and_topo() {
        let g = Dag::builder()
            .node("A")
            .node("B")
            .node("C")
            .edge("A", "B")
            .edge("B", "C")
            .build()
            .unwrap();
        let a = g.index_of("A").unwrap();
        assert_eq!(g.descendants(a).len(), 2);
        let order = g.topo_order();
        let pos = |n: &str| order.iter().position(|&i| g.name(i) == n).unwrap();
        assert!(pos("A") < pos("B") && pos("B") < pos("C"));
    }
}
