//! Exact graph-side identification machinery.
//!
//! Directed acyclic graphs with node roles, d-separation, back-door and
//! front-door criterion checks, and (in [`discrete`]) exact interventional
//! distributions over discrete structural causal models. This layer is the
//! brute-force oracle against which the statistical components are tested.

mod dag;
pub mod discrete;
pub mod json;

pub use dag::{Dag, DagBuilder, Role};

use crate::error::{Error, Result};
use std::collections::BTreeSet;

/// Returns true iff every path between a node of `a` and a node of `b` is
/// blocked by `z` under the chain/fork/collider rules (a collider is open
/// iff it or one of its descendants is in `z`).
///
/// Path enumeration over the skeleton; fine for the graph sizes this crate
/// works with (tens of nodes).
pub fn d_separated(dag: &Dag, a: &[&str], b: &[&str], z: &[&str]) -> Result<bool> {
    let a = dag.resolve_set(a)?;
    let b = dag.resolve_set(b)?;
    let z = dag.resolve_set(z)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("a and b must be nonempty".into()));
    }
    for (name, x, y) in [("a", &a, &b), ("a", &a, &z), ("b", &b, &z)] {
        if !x.is_disjoint(y) {
            return Err(Error::InvalidArgument(format!(
                "node sets must be pairwise disjoint (overlap involving set {name})"
            )));
        }
    }
    Ok(d_separated_idx(dag, &a, &b, &z))
}

pub(crate) fn d_separated_idx(
    dag: &Dag,
    a: &BTreeSet<usize>,
    b: &BTreeSet<usize>,
    z: &BTreeSet<usize>,
) -> bool {
    for &s in a {
        for path in enumerate_paths(dag, s, b) {
            if !path_blocked(dag, &path, z) {
                return false;
            }
        }
    }
    true
}

/// All simple paths in the skeleton from `start` to any node of `targets`.
fn enumerate_paths(dag: &Dag, start: usize, targets: &BTreeSet<usize>) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut path = vec![start];
    let mut on_path = vec![false; dag.len()];
    on_path[start] = true;
    dfs_paths(dag, targets, &mut path, &mut on_path, &mut out);
    out
}

fn dfs_paths(
    dag: &Dag,
    targets: &BTreeSet<usize>,
    path: &mut Vec<usize>,
    on_path: &mut Vec<bool>,
    out: &mut Vec<Vec<usize>>,
) {
    let cur = *path.last().unwrap();
    for &next in dag.neighbors(cur) {
        if on_path[next] {
            continue;
        }
        path.push(next);
        on_path[next] = true;
        if targets.contains(&next) {
            out.push(path.clone());
        } else {
            dfs_paths(dag, targets, path, on_path, out);
        }
        on_path[next] = false;
        path.pop();
    }
}

/// Chain/fork/collider blocking test for one skeleton path.
fn path_blocked(dag: &Dag, path: &[usize], z: &BTreeSet<usize>) -> bool {
    for w in path.windows(3) {
        let (u, v, x) = (w[0], w[1], w[2]);
        let collider = dag.has_edge(u, v) && dag.has_edge(x, v);
        if collider {
            let open = z.contains(&v) || dag.descendants(v).iter().any(|d| z.contains(d));
            if !open {
                return true;
            }
        } else if z.contains(&v) {
            return true;
        }
    }
    false
}

/// Back-door criterion: no member of `z` is a descendant of `t`, and `z`
/// blocks every path from `t` to `y` that starts with an arrow into `t`.
pub fn is_valid_backdoor_set(dag: &Dag, z: &[&str], t: &str, y: &str) -> Result<bool> {
    let t = dag.index_of(t)?;
    let y = dag.index_of(y)?;
    if t == y {
        return Err(Error::InvalidArgument("treatment and outcome must differ".into()));
    }
    let z = dag.resolve_set(z)?;
    if z.contains(&t) || z.contains(&y) {
        return Err(Error::InvalidArgument("z must not contain t or y".into()));
    }
    let t_desc = dag.descendants(t);
    if z.iter().any(|n| t_desc.contains(n)) {
        return Ok(false);
    }
    let targets = BTreeSet::from([y]);
    for path in enumerate_paths(dag, t, &targets) {
        // Back-door paths only: first edge points into t.
        if dag.has_edge(path[1], path[0]) && !path_blocked(dag, &path, &z) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Front-door criterion: (1) `z` intercepts every directed path from `t` to
/// `y`; (2) there is no unblocked back-door path from `t` to `z`; (3) every
/// back-door path from a member of `z` to `y` is blocked by `t`.
pub fn is_valid_frontdoor_set(dag: &Dag, z: &[&str], t: &str, y: &str) -> Result<bool> {
    let t = dag.index_of(t)?;
    let y = dag.index_of(y)?;
    if t == y {
        return Err(Error::InvalidArgument("treatment and outcome must differ".into()));
    }
    let z = dag.resolve_set(z)?;
    if z.contains(&t) || z.contains(&y) {
        return Err(Error::InvalidArgument("z must not contain t or y".into()));
    }

    // (1) every directed t -> y path passes through z.
    if !directed_paths_intercepted(dag, t, y, &z) {
        return Ok(false);
    }

    // (2) back-door paths from t to z, blocked by the empty set.
    let empty = BTreeSet::new();
    for path in enumerate_paths(dag, t, &z) {
        if dag.has_edge(path[1], path[0]) && !path_blocked(dag, &path, &empty) {
            return Ok(false);
        }
    }

    // (3) back-door paths from z to y, blocked by {t}.
    let t_set = BTreeSet::from([t]);
    let y_set = BTreeSet::from([y]);
    for &zi in &z {
        if zi == t {
            continue;
        }
        for path in enumerate_paths(dag, zi, &y_set) {
            if dag.has_edge(path[1], path[0]) && !path_blocked(dag, &path, &t_set) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn directed_paths_intercepted(dag: &Dag, t: usize, y: usize, z: &BTreeSet<usize>) -> bool {
    // DFS over directed edges only, avoiding z; if y is reachable, some
    // directed path escapes interception.
    let mut stack = vec![t];
    let mut seen = vec![false; dag.len()];
    seen[t] = true;
    while let Some(cur) = stack.pop() {
        for &c in dag.children(cur) {
            if c == y {
                return false;
            }
            if !seen[c] && !z.contains(&c) {
                seen[c] = true;
                stack.push(c);
            }
        }
    }
    true
}
