//! Probability measures on the lattice path space.
//!
//! A [`TreeMeasure`] stores exact leaf masses keyed by full branch
//! histories; prefix masses are the implied sums. Conditioning on a node
//! restricts and renormalizes to its sub-tree (the discrete regular
//! conditional distribution), and [`paste_measures`] glues a measure to a
//! family of continuation kernels at a stopping rule.

use super::{BranchHistory, LatticeError};
use crate::ext::{weighted_sum, Ext, Rat};
use num_traits::{One, Zero};
use std::collections::{BTreeMap, BTreeSet};

/// An exact probability measure on the leaves of a `J`-ary tree of depth
/// `horizon`, with implied masses on every prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeMeasure {
    horizon: usize,
    branches: usize,
    /// Positive leaf masses only.
    leaves: BTreeMap<BranchHistory, Rat>,
    /// Positive prefix masses (including the root `[]`), derived from leaves.
    prefixes: BTreeMap<BranchHistory, Rat>,
}

impl TreeMeasure {
    /// Builds a measure from leaf masses. Masses must be nonnegative and sum
    /// to exactly 1; zero masses are dropped.
    pub fn from_leaf_masses<I>(
        horizon: usize,
        branches: usize,
        masses: I,
    ) -> Result<Self, LatticeError>
    where
        I: IntoIterator<Item = (BranchHistory, Rat)>,
    {
        let mut leaves = BTreeMap::new();
        let mut total = Rat::zero();
        for (key, mass) in masses {
            if key.len() != horizon || key.iter().any(|&j| j >= branches) {
                return Err(LatticeError::BadLeafKey(key));
            }
            if mass < Rat::zero() {
                return Err(LatticeError::BadLeafMasses);
            }
            if mass.is_zero() {
                continue;
            }
            total += &mass;
            *leaves.entry(key).or_insert_with(Rat::zero) += mass;
        }
        if !total.is_one() {
            return Err(LatticeError::BadLeafMasses);
        }
        let mut prefixes: BTreeMap<BranchHistory, Rat> = BTreeMap::new();
        for (key, mass) in &leaves {
            for k in 0..=key.len() {
                *prefixes.entry(key[..k].to_vec()).or_insert_with(Rat::zero) += mass;
            }
        }
        Ok(Self {
            horizon,
            branches,
            leaves,
            prefixes,
        })
    }

    /// A point mass on a single leaf.
    pub fn point_mass(
        horizon: usize,
        branches: usize,
        leaf: BranchHistory,
    ) -> Result<Self, LatticeError> {
        Self::from_leaf_masses(horizon, branches, [(leaf, Rat::one())])
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn branch_count(&self) -> usize {
        self.branches
    }

    /// Mass of a single leaf (zero if unsupported).
    pub fn leaf_mass(&self, leaf: &[usize]) -> Rat {
        self.leaves.get(leaf).cloned().unwrap_or_else(Rat::zero)
    }

    /// Mass of the sub-tree below a prefix (zero if unsupported).
    pub fn prefix_mass(&self, prefix: &[usize]) -> Rat {
        self.prefixes.get(prefix).cloned().unwrap_or_else(Rat::zero)
    }

    /// Iterates over supported leaves in key order.
    pub fn support_leaves(&self) -> impl Iterator<Item = (&BranchHistory, &Rat)> {
        self.leaves.iter()
    }

    /// Supported prefixes at a given step, in key order.
    pub fn support_at_step(&self, step: usize) -> impl Iterator<Item = (&BranchHistory, &Rat)> {
        self.prefixes.iter().filter(move |(k, _)| k.len() == step)
    }

    /// Conditional branch probabilities at a supported node.
    pub fn child_probs(&self, node: &[usize]) -> Vec<(usize, Rat)> {
        let node_mass = self.prefix_mass(node);
        if node_mass.is_zero() {
            return Vec::new();
        }
        let mut out = Vec::new();
        for j in 0..self.branches {
            let mut child = node.to_vec();
            child.push(j);
            let m = self.prefix_mass(&child);
            if !m.is_zero() {
                out.push((j, m / &node_mass));
            }
        }
        out
    }

    /// The regular conditional distribution given a node: restricts to the
    /// node's sub-tree and renormalizes by the node's mass. Errors on a
    /// zero-mass node, where the conditional is undefined and the caller
    /// decides what to do.
    pub fn conditional(&self, node: &[usize]) -> Result<TreeMeasure, LatticeError> {
        let node_mass = self.prefix_mass(node);
        if node_mass.is_zero() {
            return Err(LatticeError::ZeroMassNode(node.to_vec()));
        }
        let masses = self
            .leaves
            .iter()
            .filter(|(k, _)| k.starts_with(node))
            .map(|(k, m)| (k.clone(), m / &node_mass));
        TreeMeasure::from_leaf_masses(self.horizon, self.branches, masses)
    }

    /// Mass-weighted sum of an extended-real payoff over supported leaves,
    /// under the convention that a doubly-divergent expectation is `-inf`.
    pub fn expectation<F>(&self, payoff: F) -> Ext
    where
        F: Fn(&BranchHistory) -> Ext,
    {
        weighted_sum(self.leaves.iter().map(|(k, m)| (m.clone(), payoff(k))))
    }
}

/// Concatenates `p` with a family of kernels at a stopped set: the result
/// follows `p` up to each stopped node and the node's kernel below it.
/// Each kernel must be concentrated on its node's sub-tree.
///
/// Validation: the stopped nodes must form an antichain (no stopped node is
/// an ancestor of another), and every supported leaf of `p` must pass
/// through exactly one stopped node.
pub fn paste_measures(
    p: &TreeMeasure,
    stopped: &BTreeSet<BranchHistory>,
    kernels: &BTreeMap<BranchHistory, TreeMeasure>,
) -> Result<TreeMeasure, LatticeError> {
    // Antichain check.
    for node in stopped {
        for other in stopped {
            if node != other && other.starts_with(node.as_slice()) {
                return Err(LatticeError::NotAStoppingRule(format!(
                    "{node:?} is an ancestor of {other:?}"
                )));
            }
        }
    }
    // Coverage check over p's support.
    for (leaf, _) in p.support_leaves() {
        let covered = stopped.iter().any(|n| leaf.starts_with(n.as_slice()));
        if !covered {
            return Err(LatticeError::NotAStoppingRule(format!(
                "supported leaf {leaf:?} hits no stopped node"
            )));
        }
    }
    let mut masses: BTreeMap<BranchHistory, Rat> = BTreeMap::new();
    for node in stopped {
        let node_mass = p.prefix_mass(node);
        if node_mass.is_zero() {
            continue;
        }
        let kernel = kernels
            .get(node)
            .ok_or_else(|| LatticeError::MissingKernel(node.clone()))?;
        let mut below = Rat::zero();
        for (leaf, mass) in kernel.support_leaves() {
            if !leaf.starts_with(node.as_slice()) {
                return Err(LatticeError::SupportViolation(node.clone()));
            }
            below += mass;
            *masses.entry(leaf.clone()).or_insert_with(Rat::zero) += mass * &node_mass;
        }
        if !below.is_one() {
            return Err(LatticeError::SupportViolation(node.clone()));
        }
    }
    TreeMeasure::from_leaf_masses(p.horizon(), p.branch_count(), masses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::rat;

    fn uniform4() -> TreeMeasure {
        TreeMeasure::from_leaf_masses(
            2,
            2,
            vec![
                (vec![0, 0], rat(1, 4)),
                (vec![0, 1], rat(1, 4)),
                (vec![1, 0], rat(1, 4)),
                (vec![1, 1], rat(1, 4)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn prefix_masses_are_consistent() {
        let p = uniform4();
        assert_eq!(p.prefix_mass(&[]), rat(1, 1));
        assert_eq!(p.prefix_mass(&[0]), rat(1, 2));
        assert_eq!(p.leaf_mass(&[1, 0]), rat(1, 4));
    }

    #[test]
    fn conditional_renormalizes() {
        let p = uniform4();
        let q = p.conditional(&[0]).unwrap();
        assert_eq!(q.leaf_mass(&[0, 0]), rat(1, 2));
        assert_eq!(q.leaf_mass(&[1, 0]), rat(0, 1));
        assert_eq!(q.prefix_mass(&[]), rat(1, 1));
    }

    #[test]
    fn conditional_with_uneven_masses() {
        // leaf masses (0.1, 0.3, 0.2, 0.4), condition on first branch -> (0.25, 0.75)
        let p = TreeMeasure::from_leaf_masses(
            2,
            2,
            vec![
                (vec![0, 0], rat(1, 10)),
                (vec![0, 1], rat(3, 10)),
                (vec![1, 0], rat(2, 10)),
                (vec![1, 1], rat(4, 10)),
            ],
        )
        .unwrap();
        let q = p.conditional(&[0]).unwrap();
        assert_eq!(q.leaf_mass(&[0, 0]), rat(1, 4));
        assert_eq!(q.leaf_mass(&[0, 1]), rat(3, 4));
    }

    #[test]
    fn conditional_of_point_mass() {
        let p = TreeMeasure::point_mass(2, 2, vec![1, 1]).unwrap();
        let q = p.conditional(&[1]).unwrap();
        assert_eq!(q.leaf_mass(&[1, 1]), rat(1, 1));
        assert!(matches!(
            p.conditional(&[0]),
            Err(LatticeError::ZeroMassNode(_))
        ));
    }

    #[test]
    fn expectation_conventions() {
        let p = uniform4();
        assert_eq!(p.expectation(|_| Ext::one()), Ext::one());
        let mixed = p.expectation(|leaf| {
            if leaf == &vec![0, 0] {
                Ext::NegInf
            } else {
                Ext::from_int(5)
            }
        });
        assert_eq!(mixed, Ext::NegInf);
    }

    #[test]
    fn paste_at_root_is_kernel() {
        let p = uniform4();
        let r = TreeMeasure::point_mass(2, 2, vec![1, 0]).unwrap();
        let stopped: BTreeSet<BranchHistory> = [vec![]].into_iter().collect();
        let kernels: BTreeMap<BranchHistory, TreeMeasure> =
            [(vec![], r.clone())].into_iter().collect();
        let pasted = paste_measures(&p, &stopped, &kernels).unwrap();
        assert_eq!(pasted, r);
    }

    #[test]
    fn paste_at_horizon_is_identity() {
        let p = uniform4();
        let stopped: BTreeSet<BranchHistory> = p.support_leaves().map(|(k, _)| k.clone()).collect();
        let kernels: BTreeMap<BranchHistory, TreeMeasure> = p
            .support_leaves()
            .map(|(k, _)| (k.clone(), TreeMeasure::point_mass(2, 2, k.clone()).unwrap()))
            .collect();
        let pasted = paste_measures(&p, &stopped, &kernels).unwrap();
        assert_eq!(pasted, p);
    }

    #[test]
    fn paste_mid_tree() {
        // tau = 1; Q[up] = point mass on up-up, Q[down] = uniform on its leaves
        // -> leaf masses (1/2, 0, 1/4, 1/4)
        let p = uniform4();
        let stopped: BTreeSet<BranchHistory> = [vec![0], vec![1]].into_iter().collect();
        let q_up = TreeMeasure::point_mass(2, 2, vec![0, 0]).unwrap();
        let q_down = TreeMeasure::from_leaf_masses(
            2,
            2,
            vec![(vec![1, 0], rat(1, 2)), (vec![1, 1], rat(1, 2))],
        )
        .unwrap();
        let kernels: BTreeMap<BranchHistory, TreeMeasure> =
            [(vec![0], q_up), (vec![1], q_down)].into_iter().collect();
        let pasted = paste_measures(&p, &stopped, &kernels).unwrap();
        assert_eq!(pasted.leaf_mass(&[0, 0]), rat(1, 2));
        assert_eq!(pasted.leaf_mass(&[0, 1]), rat(0, 1));
        assert_eq!(pasted.leaf_mass(&[1, 0]), rat(1, 4));
        assert_eq!(pasted.leaf_mass(&[1, 1]), rat(1, 4));
    }

    #[test]
    fn paste_rejects_nested_stops() {
        let p = uniform4();
        let stopped: BTreeSet<BranchHistory> = [vec![], vec![0]].into_iter().collect();
        let kernels = BTreeMap::new();
        assert!(matches!(
            paste_measures(&p, &stopped, &kernels),
            Err(LatticeError::NotAStoppingRule(_))
        ));
    }

    #[test]
    fn paste_rejects_support_violation() {
        let p = uniform4();
        let stopped: BTreeSet<BranchHistory> = [vec![0], vec![1]].into_iter().collect();
        // kernel at [0] charging a leaf outside [0]'s sub-tree
        let bad = TreeMeasure::point_mass(2, 2, vec![1, 1]).unwrap();
        let ok = TreeMeasure::point_mass(2, 2, vec![1, 1]).unwrap();
        let kernels: BTreeMap<BranchHistory, TreeMeasure> =
            [(vec![0], bad), (vec![1], ok)].into_iter().collect();
        assert!(matches!(
            paste_measures(&p, &stopped, &kernels),
            Err(LatticeError::SupportViolation(_))
        ));
    }
}
