//! Strategies, induced measures, and stopping rules.
//!
//! A [`Strategy`] assigns a control to every reachable history; adaptedness
//! is structural because the decision closure only ever sees the prefix up
//! to the current step. Running a strategy from a root realizes the support
//! tree (states attached to branch histories) and the induced measure on
//! leaves.

use super::measure::TreeMeasure;
use super::{BranchHistory, Control, LatticeError, LatticeModel, PathPrefix};
use crate::ext::Rat;
use num_traits::One;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

type DecisionFn = dyn Fn(usize, &PathPrefix) -> Option<Control> + Send + Sync;

/// A path-dependent control rule.
#[derive(Clone)]
pub struct Strategy {
    rule: Rule,
}

#[derive(Clone)]
enum Rule {
    /// Decisions tabulated per (step, branch history).
    ByPrefix(Arc<BTreeMap<(usize, BranchHistory), Control>>),
    /// Decisions computed from the observed prefix.
    ByFn(Arc<DecisionFn>),
}

impl Strategy {
    pub fn by_prefix(map: BTreeMap<(usize, BranchHistory), Control>) -> Self {
        Self {
            rule: Rule::ByPrefix(Arc::new(map)),
        }
    }

    /// Always plays the same control.
    pub fn constant(control: Control) -> Self {
        Self {
            rule: Rule::ByFn(Arc::new(move |_, _| Some(control))),
        }
    }

    /// Decides from the observed prefix. The closure must return `None`
    /// only where it is genuinely undefined.
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(usize, &PathPrefix) -> Option<Control> + Send + Sync + 'static,
    {
        Self {
            rule: Rule::ByFn(Arc::new(f)),
        }
    }

    /// The decision at a step, reading only the prefix up to that step.
    pub fn decide(&self, step: usize, prefix: &PathPrefix) -> Option<Control> {
        debug_assert_eq!(step, prefix.step());
        match &self.rule {
            Rule::ByPrefix(map) => map.get(&(step, prefix.branches().clone())).copied(),
            Rule::ByFn(f) => f(step, prefix),
        }
    }
}

impl std::fmt::Debug for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.rule {
            Rule::ByPrefix(map) => f.debug_struct("Strategy").field("decisions", map).finish(),
            Rule::ByFn(_) => f.write_str("Strategy(fn)"),
        }
    }
}

/// The support tree of a strategy run from a root: every node at or below
/// the root with its realized path, plus the induced measure.
#[derive(Debug, Clone)]
pub struct RealizedTree {
    root: BranchHistory,
    horizon: usize,
    /// Realized prefixes keyed by full branch history (root included).
    nodes: BTreeMap<BranchHistory, PathPrefix>,
    measure: TreeMeasure,
}

impl RealizedTree {
    /// Runs `strategy` on `model` from `root` to the horizon. The induced
    /// measure is concentrated on the sub-tree of `root` and every leaf mass
    /// is the product of branch probabilities below the root.
    pub fn new(
        model: &LatticeModel,
        strategy: &Strategy,
        root: &PathPrefix,
    ) -> Result<Self, LatticeError> {
        let horizon = model.horizon();
        let mut nodes: BTreeMap<BranchHistory, PathPrefix> = BTreeMap::new();
        let mut leaf_masses: Vec<(BranchHistory, Rat)> = Vec::new();
        let mut frontier: Vec<(PathPrefix, Rat)> = vec![(root.clone(), Rat::one())];
        nodes.insert(root.branches().clone(), root.clone());
        for step in root.step()..horizon {
            let mut next = Vec::with_capacity(frontier.len() * model.branch_count());
            for (prefix, mass) in frontier {
                let control = strategy.decide(step, &prefix).ok_or_else(|| {
                    LatticeError::MissingDecision {
                        step,
                        node: prefix.branches().clone(),
                    }
                })?;
                if control.0 >= model.control_count() {
                    return Err(LatticeError::UnknownControl(control.0));
                }
                for (j, p) in model.branch_probs().iter().enumerate() {
                    let state = model.step(step, prefix.last_state(), control, j);
                    let child = prefix.extend(j, state);
                    nodes.insert(child.branches().clone(), child.clone());
                    next.push((child, &mass * p));
                }
            }
            frontier = next;
        }
        for (prefix, mass) in frontier {
            leaf_masses.push((prefix.branches().clone(), mass));
        }
        let measure = TreeMeasure::from_leaf_masses(horizon, model.branch_count(), leaf_masses)?;
        Ok(Self {
            root: root.branches().clone(),
            horizon,
            nodes,
            measure,
        })
    }

    pub fn root(&self) -> &BranchHistory {
        &self.root
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn measure(&self) -> &TreeMeasure {
        &self.measure
    }

    pub fn prefix(&self, node: &[usize]) -> Option<&PathPrefix> {
        self.nodes.get(node)
    }

    /// Realized nodes at a step, in key order.
    pub fn nodes_at_step(
        &self,
        step: usize,
    ) -> impl Iterator<Item = (&BranchHistory, &PathPrefix)> {
        self.nodes.iter().filter(move |(k, _)| k.len() == step)
    }

    /// All realized nodes, shallowest first.
    pub fn nodes(&self) -> impl Iterator<Item = (&BranchHistory, &PathPrefix)> {
        self.nodes.iter()
    }
}

/// The measure induced by running `strategy` from `root`.
pub fn induced_measure(
    model: &LatticeModel,
    strategy: &Strategy,
    root: &PathPrefix,
) -> Result<TreeMeasure, LatticeError> {
    Ok(RealizedTree::new(model, strategy, root)?.measure.clone())
}

type HitPredicate = dyn Fn(usize, &PathPrefix) -> bool + Send + Sync;

/// A stopping rule on the lattice. Membership of a node in the stopped set
/// depends only on the observed prefix.
#[derive(Clone)]
pub enum StoppingRule {
    /// Stop at a fixed step (clamped to the horizon).
    AtStep(usize),
    /// Stop the first time the predicate fires; at the horizon otherwise.
    FirstHit(Arc<HitPredicate>),
}

impl StoppingRule {
    pub fn horizon() -> Self {
        StoppingRule::AtStep(usize::MAX)
    }

    pub fn first_hit<F>(f: F) -> Self
    where
        F: Fn(usize, &PathPrefix) -> bool + Send + Sync + 'static,
    {
        StoppingRule::FirstHit(Arc::new(f))
    }

    /// Resolves the rule to the antichain of stopped nodes on a realized
    /// support tree.
    pub fn resolve(&self, tree: &RealizedTree) -> StoppedSet {
        let mut stopped = BTreeSet::new();
        let horizon = tree.horizon();
        // Walk down from the root; stop descending once a node is stopped.
        let mut frontier: Vec<BranchHistory> = vec![tree.root().clone()];
        while let Some(node) = frontier.pop() {
            let step = node.len();
            let prefix = tree.prefix(&node).expect("realized node");
            let stop_here = match self {
                StoppingRule::AtStep(k) => step >= (*k).min(horizon),
                StoppingRule::FirstHit(pred) => step == horizon || pred(step, prefix),
            };
            if stop_here {
                stopped.insert(node);
            } else {
                for (child, _) in tree.nodes_at_step(step + 1) {
                    if child.starts_with(node.as_slice()) {
                        frontier.push(child.clone());
                    }
                }
            }
        }
        StoppedSet { nodes: stopped }
    }
}

impl std::fmt::Debug for StoppingRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoppingRule::AtStep(k) => write!(f, "StoppingRule::AtStep({k})"),
            StoppingRule::FirstHit(_) => f.write_str("StoppingRule::FirstHit(..)"),
        }
    }
}

/// An antichain of stopped nodes covering the support of a tree.
#[derive(Debug, Clone)]
pub struct StoppedSet {
    nodes: BTreeSet<BranchHistory>,
}

impl StoppedSet {
    pub fn from_nodes(nodes: BTreeSet<BranchHistory>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &BTreeSet<BranchHistory> {
        &self.nodes
    }

    pub fn contains(&self, node: &[usize]) -> bool {
        self.nodes.contains(node)
    }

    /// The stopped ancestor of a leaf, if any.
    pub fn stopped_ancestor<'a>(&'a self, leaf: &[usize]) -> Option<&'a BranchHistory> {
        self.nodes.iter().find(|n| leaf.starts_with(n.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::{rat, rat_int};

    fn walk_model(horizon: usize) -> LatticeModel {
        // uncontrolled +/-1 random walk from 0
        LatticeModel::additive(
            horizon,
            vec![rat(1, 2), rat(1, 2)],
            vec!["only".into()],
            vec![vec![rat_int(0)]],
            vec![vec![rat_int(1)], vec![rat_int(-1)]],
            vec![rat_int(0)],
        )
        .unwrap()
    }

    #[test]
    fn induced_measure_is_product_of_probs() {
        let model = walk_model(2);
        let sigma = Strategy::constant(Control(0));
        let p = induced_measure(&model, &sigma, &model.root()).unwrap();
        for (_, mass) in p.support_leaves() {
            assert_eq!(mass, &rat(1, 4));
        }
        assert_eq!(p.support_leaves().count(), 4);
    }

    #[test]
    fn induced_measure_three_branches() {
        let model = LatticeModel::additive(
            1,
            vec![rat(1, 5), rat(3, 10), rat(1, 2)],
            vec!["only".into()],
            vec![vec![rat_int(0)]],
            vec![vec![rat_int(-1)], vec![rat_int(0)], vec![rat_int(1)]],
            vec![rat_int(0)],
        )
        .unwrap();
        let p = induced_measure(&model, &Strategy::constant(Control(0)), &model.root()).unwrap();
        assert_eq!(p.leaf_mass(&[0]), rat(1, 5));
        assert_eq!(p.leaf_mass(&[1]), rat(3, 10));
        assert_eq!(p.leaf_mass(&[2]), rat(1, 2));
    }

    #[test]
    fn induced_measure_from_mid_tree_root() {
        let model = walk_model(2);
        let sigma = Strategy::constant(Control(0));
        // root at step 1 after branch j=0
        let root = model
            .root()
            .extend(0, model.step(0, model.initial_state(), Control(0), 0));
        let p = induced_measure(&model, &sigma, &root).unwrap();
        assert_eq!(p.leaf_mass(&[0, 0]), rat(1, 2));
        assert_eq!(p.leaf_mass(&[0, 1]), rat(1, 2));
        assert_eq!(p.leaf_mass(&[1, 0]), rat(0, 1));
        assert_eq!(p.prefix_mass(&[0]), rat(1, 1));
    }

    #[test]
    fn missing_decision_is_reported() {
        let model = walk_model(1);
        let sigma = Strategy::by_prefix(BTreeMap::new());
        let err = induced_measure(&model, &sigma, &model.root());
        assert!(matches!(err, Err(LatticeError::MissingDecision { .. })));
    }

    #[test]
    fn stopping_rules_resolve_to_antichains() {
        let model = walk_model(2);
        let tree =
            RealizedTree::new(&model, &Strategy::constant(Control(0)), &model.root()).unwrap();
        let at0 = StoppingRule::AtStep(0).resolve(&tree);
        assert_eq!(at0.nodes().len(), 1);
        assert!(at0.contains(&[]));
        let at_horizon = StoppingRule::horizon().resolve(&tree);
        assert_eq!(at_horizon.nodes().len(), 4);
        // first hit of a negative state
        let hit =
            StoppingRule::first_hit(|_, prefix: &PathPrefix| prefix.last_state()[0] < rat_int(0))
                .resolve(&tree);
        // down at step 1 stops; up continues to both leaves
        assert!(hit.contains(&[1]));
        assert!(hit.contains(&[0, 0]));
        assert!(hit.contains(&[0, 1]));
        assert_eq!(hit.nodes().len(), 3);
    }
}
