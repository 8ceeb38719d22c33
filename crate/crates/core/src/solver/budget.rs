//! Snell envelopes and budget processes.
//!
//! A budget process certifies admissibility of a measure at a level `m`: it
//! starts at or below `m`, decreases in conditional expectation across every
//! step, and dominates the constraint cost at every positive-mass node. The
//! smallest such process above the cost is its Snell envelope, computed
//! backward as `max(current cost, conditional expectation of tomorrow)`.

use super::SolverError;
use crate::ext::{weighted_sum, Ext, Rat};
use crate::lattice::{BranchHistory, Strategy, TreeMeasure};
use num_traits::One;
use std::collections::BTreeMap;

/// Extended-real values attached to the supported nodes of a tree measure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeValues(pub BTreeMap<BranchHistory, Ext>);

impl NodeValues {
    pub fn get(&self, node: &[usize]) -> Option<&Ext> {
        self.0.get(node)
    }
}

/// Smallest supermartingale under `p` dominating the node cost `g` at every
/// grid time: `S(N, n) = g(N, n)` and
/// `S(k, n) = max(g(k, n), sum_j q_j S(k+1, child_j))` with `q` the
/// conditional branch probabilities. Zero-mass nodes are skipped (their
/// values are undefined).
pub fn snell_envelope<G>(p: &TreeMeasure, g: G, root: &[usize]) -> Result<NodeValues, SolverError>
where
    G: Fn(usize, &BranchHistory) -> Ext,
{
    if !p.prefix_mass(root).is_one() {
        return Err(SolverError::MeasureNotConcentrated(root.to_vec()));
    }
    let horizon = p.horizon();
    let mut values: BTreeMap<BranchHistory, Ext> = BTreeMap::new();
    for step in (root.len()..=horizon).rev() {
        for (node, _) in p.support_at_step(step) {
            if !node.starts_with(root) {
                continue;
            }
            let own = g(step, node);
            let value = if step == horizon {
                own
            } else {
                let continuation = weighted_sum(p.child_probs(node).into_iter().map(|(j, q)| {
                    let mut child = node.clone();
                    child.push(j);
                    (q, values[&child].clone())
                }));
                own.max_with(&continuation)
            };
            values.insert(node.clone(), value);
        }
    }
    Ok(NodeValues(values))
}

/// A violated budget-process condition, reported per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BudgetViolation {
    /// The root value exceeds the declared level.
    RootBound { root: Ext, level: Rat },
    /// The conditional expectation of the children exceeds the node value.
    Supermartingale { node: BranchHistory },
    /// The node value fails to dominate the constraint cost.
    Domination { node: BranchHistory },
    /// A positive-mass node carries no budget value.
    Undefined { node: BranchHistory },
}

/// A node-indexed budget process attached to the strategy that produced its
/// measure.
#[derive(Debug, Clone)]
pub struct BudgetProcess {
    root: BranchHistory,
    values: BTreeMap<BranchHistory, Ext>,
    strategy: Strategy,
}

impl BudgetProcess {
    pub fn new(
        root: BranchHistory,
        values: BTreeMap<BranchHistory, Ext>,
        strategy: Strategy,
    ) -> Self {
        Self {
            root,
            values,
            strategy,
        }
    }

    pub fn root(&self) -> &BranchHistory {
        &self.root
    }

    pub fn value(&self, node: &[usize]) -> Option<&Ext> {
        self.values.get(node)
    }

    pub fn root_value(&self) -> Option<&Ext> {
        self.values.get(&self.root)
    }

    pub fn values(&self) -> &BTreeMap<BranchHistory, Ext> {
        &self.values
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    /// Reflection for success-probability problems: node values `1 - M`,
    /// turning a cost-side supermartingale into a success-side
    /// submartingale bounded by the success indicator.
    pub fn reflected(&self) -> BTreeMap<BranchHistory, Ext> {
        self.values
            .iter()
            .map(|(k, v)| (k.clone(), v.sub_from(&Rat::one())))
            .collect()
    }

    /// Checks all three defining conditions under `p`: the root bound at
    /// `level`, the one-step supermartingale inequality at every
    /// positive-mass interior node, and domination of `g` at every
    /// positive-mass node. Returns every violation found.
    pub fn check<G>(&self, p: &TreeMeasure, g: G, level: &Rat) -> Vec<BudgetViolation>
    where
        G: Fn(usize, &BranchHistory) -> Ext,
    {
        let mut violations = Vec::new();
        match self.values.get(&self.root) {
            None => violations.push(BudgetViolation::Undefined {
                node: self.root.clone(),
            }),
            Some(v) if *v > Ext::Finite(level.clone()) => {
                violations.push(BudgetViolation::RootBound {
                    root: v.clone(),
                    level: level.clone(),
                })
            }
            _ => {}
        }
        let horizon = p.horizon();
        for step in self.root.len()..=horizon {
            for (node, _) in p.support_at_step(step) {
                if !node.starts_with(&self.root) {
                    continue;
                }
                let value = match self.values.get(node) {
                    Some(v) => v,
                    None => {
                        violations.push(BudgetViolation::Undefined { node: node.clone() });
                        continue;
                    }
                };
                if *value < g(step, node) {
                    violations.push(BudgetViolation::Domination { node: node.clone() });
                }
                if step < horizon {
                    let kids = p.child_probs(node);
                    let all_defined = kids.iter().all(|(j, _)| {
                        let mut child = node.clone();
                        child.push(*j);
                        self.values.contains_key(&child)
                    });
                    if !all_defined {
                        continue; // undefined children already reported above
                    }
                    let continuation = weighted_sum(kids.into_iter().map(|(j, q)| {
                        let mut child = node.clone();
                        child.push(j);
                        (q, self.values[&child].clone())
                    }));
                    if continuation > *value {
                        violations.push(BudgetViolation::Supermartingale { node: node.clone() });
                    }
                }
            }
        }
        violations
    }
}

/// Builds a budget process for `p` at level `m`: the Snell envelope of the
/// cost, lifted to `m` at the root. Fails — distinctly — when the envelope
/// already exceeds `m` at the root, in which case no process at this level
/// exists even though `p` may still satisfy the per-time expectation
/// constraints (the two conditions genuinely differ; see `dpp_verify`
/// reports).
pub fn build_budget_process<G>(
    p: &TreeMeasure,
    g: G,
    root: &[usize],
    m: &Rat,
    strategy: Strategy,
) -> Result<BudgetProcess, SolverError>
where
    G: Fn(usize, &BranchHistory) -> Ext,
{
    let snell = snell_envelope(p, &g, root)?;
    let at_root = snell.get(root).cloned().unwrap_or(Ext::NegInf);
    if at_root > Ext::Finite(m.clone()) {
        return Err(SolverError::ConstructionFailed {
            snell: at_root.to_string(),
            m: crate::ext::fmt_rat(m),
        });
    }
    let mut values = snell.0;
    values.insert(root.to_vec(), Ext::Finite(m.clone()));
    Ok(BudgetProcess::new(root.to_vec(), values, strategy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::rat;
    use crate::lattice::Control;

    fn uniform(horizon: usize) -> TreeMeasure {
        let leaves: Vec<(BranchHistory, Rat)> = (0..(1usize << horizon))
            .map(|bits| {
                let key: BranchHistory = (0..horizon).map(|k| (bits >> k) & 1).collect();
                (key, rat(1, 1 << horizon))
            })
            .collect();
        TreeMeasure::from_leaf_masses(horizon, 2, leaves).unwrap()
    }

    fn g_up_bad(step: usize, node: &BranchHistory) -> Ext {
        // cost 1 exactly when the first move was branch 0 at step >= 1
        if step >= 1 && node[0] == 0 {
            Ext::one()
        } else {
            Ext::zero()
        }
    }

    #[test]
    fn one_step_snell_by_hand() {
        // g(0) = 0, g(1, up) = 1, g(1, down) = 0 -> S(0) = max(0, 1/2) = 1/2
        let p = uniform(1);
        let s = snell_envelope(&p, g_up_bad, &[]).unwrap();
        assert_eq!(s.get(&[]).unwrap(), &Ext::Finite(rat(1, 2)));
        assert_eq!(s.get(&[0]).unwrap(), &Ext::one());
        assert_eq!(s.get(&[1]).unwrap(), &Ext::zero());
    }

    #[test]
    fn constant_cost_has_constant_envelope() {
        let p = uniform(2);
        let s = snell_envelope(&p, |_, _| Ext::Finite(rat(3, 7)), &[]).unwrap();
        for v in s.0.values() {
            assert_eq!(v, &Ext::Finite(rat(3, 7)));
        }
    }

    #[test]
    fn stopping_beats_deterministic_times() {
        // Violations anti-correlated across time: the up branch costs 1 at
        // step 1 only, down-paths cost 1 at step 2 only. Every deterministic
        // time has expected cost 1/2, but stopping the up branch early and
        // the down branch late collects more.
        let p = uniform(2);
        let g = |step: usize, node: &BranchHistory| -> Ext {
            match step {
                1 if node[0] == 0 => Ext::one(),
                2 if node[0] == 1 => Ext::one(),
                _ => Ext::zero(),
            }
        };
        let e_g1 = p.expectation(|leaf| g(1, &leaf[..1].to_vec()));
        let e_g2 = p.expectation(|leaf| g(2, leaf));
        assert_eq!(e_g1, Ext::Finite(rat(1, 2)));
        assert_eq!(e_g2, Ext::Finite(rat(1, 2)));
        let s = snell_envelope(&p, g, &[]).unwrap();
        // S(0) = 1 > 1/2 = max deterministic-time expectation
        assert_eq!(s.get(&[]).unwrap(), &Ext::one());
        // ... so no budget process exists at m = 1/2 even though the measure
        // satisfies the per-time constraints at 1/2.
        let err = build_budget_process(&p, g, &[], &rat(1, 2), Strategy::constant(Control(0)));
        assert!(matches!(err, Err(SolverError::ConstructionFailed { .. })));
    }

    #[test]
    fn built_process_passes_all_checks() {
        let p = uniform(1);
        let m = rat(1, 2);
        let proc =
            build_budget_process(&p, g_up_bad, &[], &m, Strategy::constant(Control(0))).unwrap();
        // M(0) = 1/2, M(up) = 1, M(down) = 0: the Snell envelope itself.
        assert_eq!(proc.root_value().unwrap(), &Ext::Finite(rat(1, 2)));
        assert_eq!(proc.value(&[0]).unwrap(), &Ext::one());
        assert_eq!(proc.value(&[1]).unwrap(), &Ext::zero());
        assert!(proc.check(&p, g_up_bad, &m).is_empty());
    }

    #[test]
    fn zero_cost_zero_budget() {
        let p = uniform(2);
        let zero = |_: usize, _: &BranchHistory| Ext::zero();
        let m = rat(0, 1);
        let proc = build_budget_process(&p, zero, &[], &m, Strategy::constant(Control(0))).unwrap();
        for v in proc.values().values() {
            assert_eq!(v, &Ext::zero());
        }
        assert!(proc.check(&p, zero, &m).is_empty());
    }

    #[test]
    fn violations_are_localized() {
        let p = uniform(1);
        // Hand-build a process violating the supermartingale inequality at
        // the root only.
        let mut values = BTreeMap::new();
        values.insert(vec![], Ext::zero());
        values.insert(vec![0], Ext::one());
        values.insert(vec![1], Ext::one());
        let proc = BudgetProcess::new(vec![], values, Strategy::constant(Control(0)));
        let violations = proc.check(&p, |_, _| Ext::zero(), &rat(1, 1));
        assert_eq!(
            violations,
            vec![BudgetViolation::Supermartingale { node: vec![] }]
        );
    }

    #[test]
    fn reflection_flips_to_success_side() {
        let p = uniform(1);
        let m = rat(1, 2);
        let proc =
            build_budget_process(&p, g_up_bad, &[], &m, Strategy::constant(Control(0))).unwrap();
        let reflected = proc.reflected();
        assert_eq!(reflected[&vec![]], Ext::Finite(rat(1, 2)));
        assert_eq!(reflected[&vec![0usize]], Ext::zero());
        assert_eq!(reflected[&vec![1usize]], Ext::one());
    }
}
