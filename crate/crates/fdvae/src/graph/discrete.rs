//! Discrete structural causal models and exact adjustment formulas.
//!
//! Everything here works on fully enumerated probability tables, so it is
//! only usable for small state spaces, which is exactly what makes it a
//! trustworthy oracle for the statistical estimators.

use super::Dag;
use crate::error::{Error, Result};

/// Default cap on the joint state space (number of configurations).
pub const DEFAULT_STATE_CAP: usize = 1 << 20;

/// A discrete SCM: a DAG plus finite per-node domains and conditional
/// probability tables indexed by parent configurations.
#[derive(Debug, Clone)]
pub struct DiscreteScm {
    dag: Dag,
    domains: Vec<Vec<f64>>,
    /// cpts[node][parent_row][value_index]; parent rows are row-major over
    /// the node's parents in `dag.parents(node)` order, last parent fastest.
    cpts: Vec<Vec<Vec<f64>>>,
}

impl DiscreteScm {
    pub fn new(dag: Dag, domains: Vec<Vec<f64>>, cpts: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = dag.len();
        if domains.len() != n || cpts.len() != n {
            return Err(Error::InvalidArgument(
                "domains and cpts must cover every node".into(),
            ));
        }
        for i in 0..n {
            if domains[i].len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "domain of '{}' must have at least 2 values",
                    dag.name(i)
                )));
            }
            let rows: usize = dag.parents(i).iter().map(|&p| domains[p].len()).product();
            if cpts[i].len() != rows {
                return Err(Error::InvalidArgument(format!(
                    "cpt of '{}' has {} rows, parent configuration space has {}",
                    dag.name(i),
                    cpts[i].len(),
                    rows
                )));
            }
            for (r, row) in cpts[i].iter().enumerate() {
                if row.len() != domains[i].len() {
                    return Err(Error::InvalidArgument(format!(
                        "cpt row {r} of '{}' has wrong arity",
                        dag.name(i)
                    )));
                }
                if row.iter().any(|&p| p < 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "negative probability in cpt of '{}' row {r}",
                        dag.name(i)
                    )));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "cpt row {r} of '{}' sums to {s}, expected 1",
                        dag.name(i)
                    )));
                }
            }
        }
        Ok(DiscreteScm { dag, domains, cpts })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn domain(&self, node: usize) -> &[f64] {
        &self.domains[node]
    }

    fn parent_row(&self, node: usize, config: &[usize]) -> usize {
        let mut row = 0;
        for &p in self.dag.parents(node) {
            row = row * self.domains[p].len() + config[p];
        }
        row
    }

    fn state_count(&self) -> usize {
        self.domains.iter().map(|d| d.len()).product()
    }
}

/// A normalized probability table over a set of named discrete variables.
/// Entries are row-major with the last variable fastest.
#[derive(Debug, Clone)]
pub struct ProbTable {
    names: Vec<String>,
    domains: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl ProbTable {
    /// Build a table from raw parts, e.g. an empirical joint. `probs` is
    /// row-major with the last variable fastest.
    pub fn from_parts(names: Vec<String>, domains: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if names.len() != domains.len() {
            return Err(Error::InvalidArgument(
                "names and domains must have equal length".into(),
            ));
        }
        let size: usize = domains.iter().map(|d| d.len()).product();
        if probs.len() != size {
            return Err(Error::InvalidArgument(format!(
                "expected {size} probabilities, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {mass}, expected 1"
            )));
        }
        Ok(ProbTable { names, domains, probs })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn domains(&self) -> &[Vec<f64>] {
        &self.domains
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    fn pos_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variable '{name}'")))
    }

    fn value_index(&self, var: usize, value: f64) -> Result<usize> {
        self.domains[var]
            .iter()
            .position(|&v| v == value)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "value {value} not in domain of '{}'",
                    self.names[var]
                ))
            })
    }

    /// Iterate configurations as (indices, prob).
    pub fn iter_configs(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let cards: Vec<usize> = self.domains.iter().map(|d| d.len()).collect();
        self.probs.iter().enumerate().map(move |(flat, &p)| {
            let mut idx = vec![0; cards.len()];
            let mut rem = flat;
            for k in (0..cards.len()).rev() {
                idx[k] = rem % cards[k];
                rem /= cards[k];
            }
            (idx, p)
        })
    }

    /// Marginal table over `keep` (in the order given).
    pub fn marginal(&self, keep: &[&str]) -> Result<ProbTable> {
        let pos: Vec<usize> = keep.iter().map(|n| self.pos_of(n)).collect::<Result<_>>()?;
        let domains: Vec<Vec<f64>> = pos.iter().map(|&p| self.domains[p].clone()).collect();
        let cards: Vec<usize> = domains.iter().map(|d| d.len()).collect();
        let size: usize = cards.iter().product();
        let mut probs = vec![0.0; size];
        for (idx, p) in self.iter_configs() {
            let mut flat = 0;
            for (k, &src) in pos.iter().enumerate() {
                flat = flat * cards[k] + idx[src];
            }
            probs[flat] += p;
        }
        Ok(ProbTable {
            names: keep.iter().map(|s| s.to_string()).collect(),
            domains,
            probs,
        })
    }

    /// Probability of a full or partial assignment given as (name, value).
    pub fn prob(&self, assignment: &[(&str, f64)]) -> Result<f64> {
        let mut fixed: Vec<Option<usize>> = vec![None; self.names.len()];
        for &(name, value) in assignment {
            let p = self.pos_of(name)?;
            fixed[p] = Some(self.value_index(p, value)?);
        }
        let mut total = 0.0;
        for (idx, p) in self.iter_configs() {
            if fixed
                .iter()
                .enumerate()
                .all(|(k, f)| f.map_or(true, |v| idx[k] == v))
            {
                total += p;
            }
        }
        Ok(total)
    }

    /// Expectation of a single variable under its marginal.
    pub fn expectation(&self, name: &str) -> Result<f64> {
        let p = self.pos_of(name)?;
        let mut e = 0.0;
        for (idx, prob) in self.iter_configs() {
            e += self.domains[p][idx[p]] * prob;
        }
        Ok(e)
    }
}

/// Full joint table from the Markov factorization, with the default
/// state-space cap.
pub fn joint_distribution(scm: &DiscreteScm) -> Result<ProbTable> {
    joint_distribution_capped(scm, DEFAULT_STATE_CAP)
}

pub fn joint_distribution_capped(scm: &DiscreteScm, cap: usize) -> Result<ProbTable> {
    enumerate(scm, None, cap)
}

/// Interventional joint over the remaining nodes: the factor for `t` is
/// removed from the factorization and `t` is clamped to `value`.
pub fn do_distribution(scm: &DiscreteScm, t: &str, value: f64) -> Result<ProbTable> {
    do_distribution_capped(scm, t, value, DEFAULT_STATE_CAP)
}

pub fn do_distribution_capped(
    scm: &DiscreteScm,
    t: &str,
    value: f64,
    cap: usize,
) -> Result<ProbTable> {
    let ti = scm.dag.index_of(t)?;
    let vi = scm.domains[ti]
        .iter()
        .position(|&v| v == value)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("value {value} not in domain of '{t}'"))
        })?;
    let full = enumerate(scm, Some((ti, vi)), cap)?;
    let keep: Vec<&str> = full
        .names
        .iter()
        .filter(|n| n.as_str() != t)
        .map(|n| n.as_str())
        .collect();
    full.marginal(&keep)
}

fn enumerate(scm: &DiscreteScm, clamp: Option<(usize, usize)>, cap: usize) -> Result<ProbTable> {
    let states = scm.state_count();
    if states > cap {
        return Err(Error::ResourceLimit(format!(
            "joint state space {states} exceeds cap {cap}"
        )));
    }
    let n = scm.dag.len();
    let cards: Vec<usize> = scm.domains.iter().map(|d| d.len()).collect();
    let mut probs = vec![0.0; states];
    let mut config = vec![0usize; n];
    for flat in 0..states {
        let mut rem = flat;
        for k in (0..n).rev() {
            config[k] = rem % cards[k];
            rem /= cards[k];
        }
        let mut p = 1.0;
        for node in 0..n {
            match clamp {
                Some((t, v)) if t == node => {
                    if config[node] != v {
                        p = 0.0;
                        break;
                    }
                }
                _ => {
                    let row = scm.parent_row(node, &config);
                    p *= scm.cpts[node][row][config[node]];
                    if p == 0.0 {
                        break;
                    }
                }
            }
        }
        probs[flat] = p;
    }
    Ok(ProbTable {
        names: scm.dag.node_names().to_vec(),
        domains: scm.domains.clone(),
        probs,
    })
}

/// Back-door adjustment: sum over z of P(y|t,z) P(z). The caller is
/// responsible for z being a valid back-door set for the generating graph.
pub fn backdoor_adjust(
    joint: &ProbTable,
    z: &[&str],
    t: &str,
    y: &str,
    t_val: f64,
    y_val: f64,
) -> Result<f64> {
    let mut keep: Vec<&str> = z.to_vec();
    keep.push(t);
    keep.push(y);
    let table = joint.marginal(&keep)?;
    let z_table = if z.is_empty() { None } else { Some(table.marginal(z)?) };

    let mut total = 0.0;
    match z_table {
        None => {
            let p_t = table.prob(&[(t, t_val)])?;
            if p_t == 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "conditioning cell P({t}={t_val}) has probability 0"
                )));
            }
            total = table.prob(&[(t, t_val), (y, y_val)])? / p_t;
        }
        Some(zt) => {
            for (idx, p_z) in zt.iter_configs() {
                if p_z == 0.0 {
                    continue;
                }
                let mut assign: Vec<(&str, f64)> = z
                    .iter()
                    .enumerate()
                    .map(|(k, name)| (*name, zt.domains[k][idx[k]]))
                    .collect();
                assign.push((t, t_val));
                let p_tz = table.prob(&assign)?;
                if p_tz == 0.0 {
                    return Err(Error::DegenerateInput(format!(
                        "conditioning cell P({t}={t_val}, z={idx:?}) has probability 0"
                    )));
                }
                assign.push((y, y_val));
                let p_ytz = table.prob(&assign)?;
                total += p_ytz / p_tz * p_z;
            }
        }
    }
    Ok(total)
}

/// Front-door adjustment: sum over z of P(z|t) times the t'-mixture of
/// P(y|t',z) P(t'). The caller is responsible for z being a valid
/// front-door set for the generating graph.
pub fn frontdoor_adjust(
    joint: &ProbTable,
    z: &[&str],
    t: &str,
    y: &str,
    t_val: f64,
    y_val: f64,
) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::InvalidArgument("front-door set must be nonempty".into()));
    }
    let mut keep: Vec<&str> = z.to_vec();
    keep.push(t);
    keep.push(y);
    let table = joint.marginal(&keep)?;
    let t_table = table.marginal(&[t])?;
    let p_t_val = t_table.prob(&[(t, t_val)])?;
    if p_t_val == 0.0 {
        return Err(Error::DegenerateInput(format!(
            "conditioning cell P({t}={t_val}) has probability 0"
        )));
    }
    let z_joint_t = {
        let mut k: Vec<&str> = z.to_vec();
        k.push(t);
        table.marginal(&k)?
    };
    let t_domain = t_table.domains[0].clone();

    let zt = table.marginal(z)?;
    let mut total = 0.0;
    for (idx, _) in zt.iter_configs() {
        let z_assign: Vec<(&str, f64)> = z
            .iter()
            .enumerate()
            .map(|(k, name)| (*name, zt.domains[k][idx[k]]))
            .collect();
        let mut zt_assign = z_assign.clone();
        zt_assign.push((t, t_val));
        let p_z_given_t = z_joint_t.prob(&zt_assign)? / p_t_val;
        if p_z_given_t == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for &tp in &t_domain {
            let p_tp = t_table.prob(&[(t, tp)])?;
            if p_tp == 0.0 {
                continue;
            }
            let mut cond = z_assign.clone();
            cond.push((t, tp));
            let p_tz = table.prob(&cond)?;
            if p_tz == 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "conditioning cell P({t}={tp}, z={idx:?}) has probability 0"
                )));
            }
            cond.push((y, y_val));
            inner += table.prob(&cond)? / p_tz * p_tp;
        }
        total += p_z_given_t * inner;
    }
    Ok(total)
}

/// Exact ATE by truncated factorization: E[Y|do(T=1)] - E[Y|do(T=0)].
/// Requires a binary treatment with domain {0, 1}.
pub fn discrete_ate(scm: &DiscreteScm, t: &str, y: &str) -> Result<f64> {
    let ti = scm.dag.index_of(t)?;
    scm.dag.index_of(y)?;
    if scm.domains[ti] != [0.0, 1.0] {
        return Err(Error::UnsupportedInput(format!(
            "treatment '{t}' must have domain {{0, 1}}"
        )));
    }
    let e1 = do_distribution(scm, t, 1.0)?.expectation(y)?;
    let e0 = do_distribution(scm, t, 0.0)?.expectation(y)?;
    Ok(e1 - e0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Dag;

    fn single_binary(p1: f64) -> DiscreteScm {
        let dag = Dag::builder().node("A").build().unwrap();
        DiscreteScm::new(dag, vec![vec![0.0, 1.0]], vec![vec![vec![1.0 - p1, p1]]]).unwrap()
    }

    #[test]
    fn single_node_joint() {
        let scm = single_binary(0.3);
        let j = joint_distribution(&scm).unwrap();
        assert!((j.prob(&[("A", 0.0)]).unwrap() - 0.7).abs() < 1e-15);
        assert!((j.prob(&[("A", 1.0)]).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn two_fair_coins() {
        let dag = Dag::builder().node("A").node("B").build().unwrap();
        let scm = DiscreteScm::new(
            dag,
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]],
        )
        .unwrap();
        let j = joint_distribution(&scm).unwrap();
        assert!(j.probs().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert!((j.total_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cpt_validation() {
        let dag = Dag::builder().node("A").build().unwrap();
        assert!(DiscreteScm::new(
            dag.clone(),
            vec![vec![0.0, 1.0]],
            vec![vec![vec![0.6, 0.6]]]
        )
        .is_err());
        assert!(DiscreteScm::new(dag, vec![vec![0.0]], vec![vec![vec![1.0]]]).is_err());
    }

    #[test]
    fn state_cap() {
        let scm = single_binary(0.5);
        assert!(matches!(
            joint_distribution_capped(&scm, 1),
            Err(crate::error::Error::ResourceLimit(_))
        ));
    }

    fn confounded_scm() -> DiscreteScm {
        // W -> T, W -> Y, T -> Y, all binary.
        let dag = Dag::builder()
            .node("W")
            .node("T")
            .node("Y")
            .edge("W", "T")
            .edge("W", "Y")
            .edge("T", "Y")
            .build()
            .unwrap();
        DiscreteScm::new(
            dag,
            vec![vec![0.0, 1.0]; 3],
            vec![
                vec![vec![0.4, 0.6]],
                vec![vec![0.8, 0.2], vec![0.3, 0.7]],
                // rows over (W, T): (0,0) (0,1) (1,0) (1,1)
                vec![
                    vec![0.9, 0.1],
                    vec![0.5, 0.5],
                    vec![0.6, 0.4],
                    vec![0.2, 0.8],
                ],
            ],
        )
        .unwrap()
    }

    #[test]
    fn do_differs_from_conditioning_under_confounding() {
        let scm = confounded_scm();
        let joint = joint_distribution(&scm).unwrap();
        let p_do = do_distribution(&scm, "T", 1.0).unwrap().prob(&[("Y", 1.0)]).unwrap();
        let p_cond = joint.prob(&[("T", 1.0), ("Y", 1.0)]).unwrap()
            / joint.prob(&[("T", 1.0)]).unwrap();
        assert!((p_do - p_cond).abs() > 1e-3);
    }

    #[test]
    fn backdoor_matches_truncated_factorization() {
        let scm = confounded_scm();
        let joint = joint_distribution(&scm).unwrap();
        for t_val in [0.0, 1.0] {
            for y_val in [0.0, 1.0] {
                let adj = backdoor_adjust(&joint, &["W"], "T", "Y", t_val, y_val).unwrap();
                let oracle = do_distribution(&scm, "T", t_val)
                    .unwrap()
                    .prob(&[("Y", y_val)])
                    .unwrap();
                assert!((adj - oracle).abs() < 1e-12, "{adj} vs {oracle}");
            }
        }
    }

    #[test]
    fn empty_backdoor_set_is_conditioning() {
        // T has no parents: P(y|do(t)) = P(y|t).
        let dag = Dag::builder().node("T").node("Y").edge("T", "Y").build().unwrap();
        let scm = DiscreteScm::new(
            dag,
            vec![vec![0.0, 1.0]; 2],
            vec![vec![vec![0.5, 0.5]], vec![vec![0.6, 0.4], vec![0.1, 0.9]]],
        )
        .unwrap();
        let joint = joint_distribution(&scm).unwrap();
        let adj = backdoor_adjust(&joint, &[], "T", "Y", 1.0, 1.0).unwrap();
        assert!((adj - 0.9).abs() < 1e-12);
        let oracle = do_distribution(&scm, "T", 1.0).unwrap().prob(&[("Y", 1.0)]).unwrap();
        assert!((adj - oracle).abs() < 1e-12);
    }

    fn frontdoor_scm(u_strength: bool) -> DiscreteScm {
        // U -> T, U -> Y, T -> Z, Z -> Y; U will be marginalized out of the
        // observational joint before adjustment.
        let dag = Dag::builder()
            .node("U")
            .node("T")
            .node("Z")
            .node("Y")
            .edge("U", "T")
            .edge("U", "Y")
            .edge("T", "Z")
            .edge("Z", "Y")
            .build()
            .unwrap();
        let y_rows = if u_strength {
            // rows over (U, Z)
            vec![
                vec![0.8, 0.2],
                vec![0.4, 0.6],
                vec![0.5, 0.5],
                vec![0.1, 0.9],
            ]
        } else {
            // no U -> Y dependence
            vec![
                vec![0.8, 0.2],
                vec![0.4, 0.6],
                vec![0.8, 0.2],
                vec![0.4, 0.6],
            ]
        };
        DiscreteScm::new(
            dag,
            vec![vec![0.0, 1.0]; 4],
            vec![
                vec![vec![0.45, 0.55]],
                vec![vec![0.7, 0.3], vec![0.25, 0.75]],
                vec![vec![0.85, 0.15], vec![0.2, 0.8]],
                y_rows,
            ],
        )
        .unwrap()
    }

    #[test]
    fn frontdoor_matches_truncated_factorization() {
        let scm = frontdoor_scm(true);
        let observational = joint_distribution(&scm)
            .unwrap()
            .marginal(&["T", "Z", "Y"])
            .unwrap();
        for t_val in [0.0, 1.0] {
            for y_val in [0.0, 1.0] {
                let adj =
                    frontdoor_adjust(&observational, &["Z"], "T", "Y", t_val, y_val).unwrap();
                let oracle = do_distribution(&scm, "T", t_val)
                    .unwrap()
                    .prob(&[("Y", y_val)])
                    .unwrap();
                assert!((adj - oracle).abs() < 1e-12, "{adj} vs {oracle}");
            }
        }
    }

    #[test]
    fn frontdoor_equals_backdoor_when_unconfounded() {
        let scm = frontdoor_scm(false);
        let observational = joint_distribution(&scm)
            .unwrap()
            .marginal(&["T", "Z", "Y"])
            .unwrap();
        let fd = frontdoor_adjust(&observational, &["Z"], "T", "Y", 1.0, 1.0).unwrap();
        let bd = backdoor_adjust(&observational, &[], "T", "Y", 1.0, 1.0).unwrap();
        assert!((fd - bd).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cell_reported() {
        // P(T=1) = 0 makes the front-door conditional undefined.
        let dag = Dag::builder().node("T").node("Z").node("Y")
            .edge("T", "Z").edge("Z", "Y").build().unwrap();
        let scm = DiscreteScm::new(
            dag,
            vec![vec![0.0, 1.0]; 3],
            vec![
                vec![vec![1.0, 0.0]],
                vec![vec![0.5, 0.5], vec![0.2, 0.8]],
                vec![vec![0.5, 0.5], vec![0.2, 0.8]],
            ],
        )
        .unwrap();
        let joint = joint_distribution(&scm).unwrap();
        assert!(matches!(
            frontdoor_adjust(&joint, &["Z"], "T", "Y", 1.0, 1.0),
            Err(crate::error::Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn null_effect_ate_is_zero() {
        // T -> Z but Z has no effect on Y.
        let dag = Dag::builder().node("T").node("Z").node("Y")
            .edge("T", "Z").build().unwrap();
        let scm = DiscreteScm::new(
            dag,
            vec![vec![0.0, 1.0]; 3],
            vec![
                vec![vec![0.5, 0.5]],
                vec![vec![0.3, 0.7], vec![0.6, 0.4]],
                vec![vec![0.25, 0.75]],
            ],
        )
        .unwrap();
        assert!(discrete_ate(&scm, "T", "Y").unwrap().abs() < 1e-15);
    }

    #[test]
    fn chain_ate_direct_arithmetic() {
        let dag = Dag::builder().node("T").node("Y").edge("T", "Y").build().unwrap();
        let scm = DiscreteScm::new(
            dag,
            vec![vec![0.0, 1.0]; 2],
            vec![vec![vec![0.5, 0.5]], vec![vec![0.6, 0.4], vec![0.1, 0.9]]],
        )
        .unwrap();
        assert!((discrete_ate(&scm, "T", "Y").unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nonbinary_treatment_rejected() {
        let dag = Dag::builder().node("T").node("Y").edge("T", "Y").build().unwrap();
        let scm = DiscreteScm::new(
            dag,
            vec![vec![0.0, 1.0, 2.0], vec![0.0, 1.0]],
            vec![
                vec![vec![0.3, 0.3, 0.4]],
                vec![vec![0.6, 0.4], vec![0.1, 0.9], vec![0.5, 0.5]],
            ],
        )
        .unwrap();
        assert!(matches!(
            discrete_ate(&scm, "T", "Y"),
            Err(crate::error::Error::UnsupportedInput(_))
        ));
    }

    #[test]
    fn frontdoor_ate_matches_truncated_factorization() {
        let scm = frontdoor_scm(true);
        let observational = joint_distribution(&scm)
            .unwrap()
            .marginal(&["T", "Z", "Y"])
            .unwrap();
        let mut fd_ate = 0.0;
        for (y_val, sign) in [(1.0, 1.0)] {
            let p1 = frontdoor_adjust(&observational, &["Z"], "T", "Y", 1.0, y_val).unwrap();
            let p0 = frontdoor_adjust(&observational, &["Z"], "T", "Y", 0.0, y_val).unwrap();
            fd_ate += sign * y_val * (p1 - p0);
        }
        let oracle = discrete_ate(&scm, "T", "Y").unwrap();
        assert!((fd_ate - oracle).abs() < 1e-12);
    }
}
