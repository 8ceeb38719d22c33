//! Budget-augmented backward induction.
//!
//! The solver computes `V(k, node, m)`: the best expected reward attainable
//! from a node when the running expectation of the constraint cost is
//! budgeted by `m` at every remaining step. The budget is an auxiliary
//! state: a step spends `m` by splitting it across the noise branches
//! (probability-weighted sums may not exceed the parent budget, the
//! supermartingale inequality), and a node is admissible only while its own
//! cost does not exceed its budget (domination). Infeasibility is the value
//! `-inf`.
//!
//! Node space: when the reward is a function of the terminal state, nodes
//! recombine on `(state, constraint summary)`; otherwise every branch
//! history is its own node. Budgets live on a finite grid; for indicator
//! costs with rational branch probabilities the auto grid holds every
//! reachable expectation value exactly, which is what makes the solver
//! agree with brute-force enumeration at tolerance zero.

mod backward;
mod budget;
mod extract;
mod verify;

pub use backward::{
    allocate_budget, allocate_budget_interpolated, minimal_budget, solve, AllocMode, SolveOptions,
};
pub use budget::{
    build_budget_process, snell_envelope, BudgetProcess, BudgetViolation, NodeValues,
};
pub use extract::extract_policy;
pub use verify::{dpp_verify, DppReport};

use crate::constraint::{ConstraintFunctional, Summary};
use crate::ext::{Ext, Rat};
use crate::lattice::{BranchHistory, Control, LatticeError, LatticeModel, PathPrefix, State};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolverError {
    #[error("budget grid needs at least 2 strictly increasing levels")]
    BadGrid,
    #[error("start budget {m0} is below the minimal feasible budget {min}")]
    InfeasibleStart { m0: String, min: String },
    #[error("budget-process construction failed: Snell envelope {snell} exceeds the budget {m} at the root (membership under the per-time constraints may still hold; see the report)")]
    ConstructionFailed { snell: String, m: String },
    #[error("measure is not concentrated on the sub-tree of {0:?}")]
    MeasureNotConcentrated(BranchHistory),
    #[error("enumeration budget exceeded: needs {required}, cap is {cap}")]
    CapExceeded { required: String, cap: u128 },
    #[error("budget process undefined at visited node {0:?}")]
    UndefinedBudgetNode(BranchHistory),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// How solver nodes are identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeMode {
    /// Merge histories with equal `(state, summary)`.
    Merged,
    /// One node per branch history (needed for path-dependent rewards).
    PathExpanded,
}

/// A node of the layered solve graph.
#[derive(Debug, Clone)]
pub struct DagNode {
    /// A representative observed history reaching this node.
    pub prefix: PathPrefix,
    /// Constraint summary at this node.
    pub summary: Summary,
    /// Constraint cost `g` at this node.
    pub g: Ext,
    /// `children[control][branch]` indexes into the next layer. Empty at the
    /// horizon.
    pub children: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum NodeKey {
    Merged(State, Summary),
    /// Full observed history (branches and states). Decision paths with
    /// identical observations are indistinguishable from here on, so they
    /// may share a node; distinct state histories never collide.
    Path(BranchHistory, Vec<State>),
}

/// The layered node graph a solve runs over.
pub struct LatticeDag {
    mode: NodeMode,
    horizon: usize,
    branch_probs: Vec<Rat>,
    n_controls: usize,
    layers: Vec<Vec<DagNode>>,
    index: Vec<BTreeMap<NodeKey, usize>>,
    constraint: ConstraintFunctional,
}

impl LatticeDag {
    /// Expands the model forward, evaluating the constraint summary at every
    /// node and (in merged mode) recombining on `(state, summary)`.
    pub fn build(model: &LatticeModel, g: &ConstraintFunctional, mode: NodeMode) -> Self {
        let horizon = model.horizon();
        let mut layers: Vec<Vec<DagNode>> = Vec::with_capacity(horizon + 1);
        let mut index: Vec<BTreeMap<NodeKey, usize>> = Vec::with_capacity(horizon + 1);
        let root_prefix = model.root();
        let root_summary = g.summary_init(model.initial_state());
        let root_g = g.summary_eval(0, &root_summary, model.initial_state());
        layers.push(vec![DagNode {
            prefix: root_prefix.clone(),
            summary: root_summary.clone(),
            g: root_g,
            children: Vec::new(),
        }]);
        let root_key = match mode {
            NodeMode::Merged => NodeKey::Merged(model.initial_state().clone(), root_summary),
            NodeMode::PathExpanded => {
                NodeKey::Path(Vec::new(), vec![model.initial_state().clone()])
            }
        };
        index.push([(root_key, 0)].into_iter().collect());

        for k in 0..horizon {
            let mut next_nodes: Vec<DagNode> = Vec::new();
            let mut next_index: BTreeMap<NodeKey, usize> = BTreeMap::new();
            let parent_count = layers[k].len();
            #[allow(clippy::needless_range_loop)]
            for parent_idx in 0..parent_count {
                let mut children: Vec<Vec<usize>> =
                    vec![vec![0; model.branch_count()]; model.control_count()];
                for a in model.controls() {
                    for j in 0..model.branch_count() {
                        let parent = &layers[k][parent_idx];
                        let state = model.step(k, parent.prefix.last_state(), a, j);
                        let summary = g.summary_update(k + 1, &parent.summary, &state);
                        let prefix = parent.prefix.extend(j, state.clone());
                        let key = match mode {
                            NodeMode::Merged => NodeKey::Merged(state, summary.clone()),
                            NodeMode::PathExpanded => {
                                NodeKey::Path(prefix.branches().clone(), prefix.states().to_vec())
                            }
                        };
                        let idx = match next_index.get(&key) {
                            Some(&i) => i,
                            None => {
                                let gval = g.summary_eval(k + 1, &summary, prefix.last_state());
                                let i = next_nodes.len();
                                next_nodes.push(DagNode {
                                    prefix,
                                    summary,
                                    g: gval,
                                    children: Vec::new(),
                                });
                                next_index.insert(key, i);
                                i
                            }
                        };
                        children[a.0][j] = idx;
                    }
                }
                layers[k][parent_idx].children = children;
            }
            layers.push(next_nodes);
            index.push(next_index);
        }
        Self {
            mode,
            horizon,
            branch_probs: model.branch_probs().to_vec(),
            n_controls: model.control_count(),
            layers,
            index,
            constraint: g.clone(),
        }
    }

    pub fn mode(&self) -> NodeMode {
        self.mode
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn branch_probs(&self) -> &[Rat] {
        &self.branch_probs
    }

    pub fn control_count(&self) -> usize {
        self.n_controls
    }

    pub fn layer(&self, step: usize) -> &[DagNode] {
        &self.layers[step]
    }

    pub fn node(&self, step: usize, idx: usize) -> &DagNode {
        &self.layers[step][idx]
    }

    pub fn root_node(&self) -> &DagNode {
        &self.layers[0][0]
    }

    /// Locates the solver node an observed history lands on.
    pub fn node_for_prefix(&self, prefix: &PathPrefix) -> Option<usize> {
        let key = match self.mode {
            NodeMode::Merged => NodeKey::Merged(
                prefix.last_state().clone(),
                self.constraint.summary_of_prefix(prefix),
            ),
            NodeMode::PathExpanded => {
                NodeKey::Path(prefix.branches().clone(), prefix.states().to_vec())
            }
        };
        self.index[prefix.step()].get(&key).copied()
    }

    pub fn constraint(&self) -> &ConstraintFunctional {
        &self.constraint
    }

    /// A stable identifier for CSV/JSON exports.
    pub fn node_id(&self, step: usize, idx: usize) -> String {
        format!("s{step}n{idx}")
    }

    /// Human-readable summary of a node for exports.
    pub fn node_repr(&self, step: usize, idx: usize) -> String {
        let node = &self.layers[step][idx];
        let state = node
            .prefix
            .last_state()
            .iter()
            .map(crate::ext::fmt_rat)
            .collect::<Vec<_>>()
            .join("|");
        let summary = node
            .summary
            .0
            .iter()
            .map(crate::ext::fmt_rat)
            .collect::<Vec<_>>()
            .join("|");
        format!("x=[{state}];sum=[{summary}]")
    }
}

impl std::fmt::Debug for LatticeDag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LatticeDag")
            .field("mode", &self.mode)
            .field("horizon", &self.horizon)
            .field(
                "layer_sizes",
                &self.layers.iter().map(Vec::len).collect::<Vec<_>>(),
            )
            .finish()
    }
}

/// How budgets between grid levels are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    /// Budgets snap down to grid levels; values off-grid are the value at
    /// the snapped level.
    Restricted,
    /// Piecewise-linear interpolation between grid levels. Interpolated
    /// values are approximations: the solver makes no claim about the shape
    /// of `V` in `m` between levels.
    Interpolated,
}

/// A finite, strictly increasing set of budget levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetGrid {
    levels: Vec<Rat>,
    mode: GridMode,
    /// Whether the grid provably contains every reachable conditional
    /// expectation of the constraint cost (indicator costs only).
    exact: bool,
}

impl BudgetGrid {
    pub fn from_levels(mut levels: Vec<Rat>, mode: GridMode) -> Result<Self, SolverError> {
        levels.sort();
        levels.dedup();
        if levels.len() < 2 {
            return Err(SolverError::BadGrid);
        }
        Ok(Self {
            levels,
            mode,
            exact: false,
        })
    }

    /// Builds the automatic grid for a dag. For indicator-valued costs the
    /// grid is every multiple of `1/D^N` in `[0, 1]`, where `D` is the least
    /// common denominator of the branch probabilities — i.e. every reachable
    /// conditional expectation — provided that stays below `max_levels`.
    /// Otherwise: a uniform grid over the cost range, refined with every
    /// minimal-budget value so the feasibility frontier stays representable.
    pub fn auto(dag: &LatticeDag, min_budget: &[Vec<Ext>], max_levels: usize) -> Self {
        let g_values: Vec<&Ext> = dag
            .layers
            .iter()
            .flat_map(|layer| layer.iter().map(|n| &n.g))
            .collect();
        let indicator = g_values
            .iter()
            .all(|v| **v == Ext::zero() || **v == Ext::one());
        if indicator {
            let mut denom = BigInt::one();
            for p in &dag.branch_probs {
                let d = p.denom();
                let g = num_integer_gcd(&denom, d);
                denom = &denom / &g * d;
            }
            let total = pow_checked(&denom, dag.horizon as u32, max_levels);
            if let Some(total) = total {
                let levels: Vec<Rat> = (0..=total)
                    .map(|j| Rat::new(BigInt::from(j), denom.pow(dag.horizon as u32)))
                    .collect();
                return Self {
                    levels,
                    mode: GridMode::Restricted,
                    exact: true,
                };
            }
        }
        // Fallback: uniform over the finite cost range, plus all minimal
        // budgets and all cost values.
        let mut lo = Rat::zero();
        let mut hi = Rat::one();
        let mut levels: Vec<Rat> = Vec::new();
        for v in &g_values {
            if let Ext::Finite(r) = v {
                if *r < lo {
                    lo = r.clone();
                }
                if *r > hi {
                    hi = r.clone();
                }
                levels.push(r.clone());
            }
        }
        let span = &hi - &lo;
        let n_uniform = 32usize;
        for i in 0..=n_uniform {
            levels.push(&lo + &span * Rat::new(BigInt::from(i), BigInt::from(n_uniform)));
        }
        for row in min_budget {
            for w in row {
                if let Ext::Finite(r) = w {
                    levels.push(r.clone());
                }
            }
        }
        levels.sort();
        levels.dedup();
        Self {
            levels,
            mode: GridMode::Restricted,
            exact: false,
        }
    }

    pub fn levels(&self) -> &[Rat] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    /// Whether the grid provably represents every reachable budget exactly.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn level(&self, idx: usize) -> &Rat {
        &self.levels[idx]
    }

    /// Largest level `<= m`, if any.
    pub fn floor_idx(&self, m: &Rat) -> Option<usize> {
        match self.levels.binary_search_by(|l| l.cmp(m)) {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }

    /// Smallest level `>= m`, if any.
    pub fn ceil_idx(&self, m: &Rat) -> Option<usize> {
        match self.levels.binary_search_by(|l| l.cmp(m)) {
            Ok(i) => Some(i),
            Err(i) if i < self.levels.len() => Some(i),
            Err(_) => None,
        }
    }

    /// Smallest level index whose value dominates an extended-real floor.
    /// `None` when the floor is above every level (or `+inf`).
    pub fn ceil_idx_ext(&self, v: &Ext) -> Option<usize> {
        match v {
            Ext::NegInf => Some(0),
            Ext::PosInf => None,
            Ext::Finite(r) => self.ceil_idx(r),
        }
    }
}

fn num_integer_gcd(a: &BigInt, b: &BigInt) -> BigInt {
    let mut a = a.clone();
    let mut b = b.clone();
    if a.is_negative() {
        a = -a;
    }
    if b.is_negative() {
        b = -b;
    }
    while !b.is_zero() {
        let r = &a % &b;
        a = b;
        b = r;
    }
    a
}

/// `denom^exp` as usize if it stays within `cap`.
fn pow_checked(denom: &BigInt, exp: u32, cap: usize) -> Option<usize> {
    let total = denom.pow(exp);
    if total <= BigInt::from(cap) {
        use num_traits::ToPrimitive;
        total.to_usize()
    } else {
        None
    }
}

/// Non-fatal findings produced by a solve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveWarning {
    /// A minimal feasible budget falls strictly between two grid levels, so
    /// the feasibility frontier is not representable on this grid.
    GridTooCoarse { step: usize, node: usize },
}

/// The solved value surface `V(step, node, level)` plus the feasibility
/// table `w(step, node)`.
pub struct ValueSurface {
    dag: Arc<LatticeDag>,
    grid: Arc<BudgetGrid>,
    /// `values[step][node][level]`, nondecreasing in the level.
    values: Vec<Vec<Vec<Ext>>>,
    /// Minimal feasible budget per (step, node).
    min_budget: Vec<Vec<Ext>>,
    warnings: Vec<SolveWarning>,
}

impl ValueSurface {
    pub(crate) fn new(
        dag: Arc<LatticeDag>,
        grid: Arc<BudgetGrid>,
        values: Vec<Vec<Vec<Ext>>>,
        min_budget: Vec<Vec<Ext>>,
        warnings: Vec<SolveWarning>,
    ) -> Self {
        Self {
            dag,
            grid,
            values,
            min_budget,
            warnings,
        }
    }

    pub fn dag(&self) -> &Arc<LatticeDag> {
        &self.dag
    }

    pub fn grid(&self) -> &Arc<BudgetGrid> {
        &self.grid
    }

    pub fn warnings(&self) -> &[SolveWarning] {
        &self.warnings
    }

    pub fn value_idx(&self, step: usize, node: usize, level_idx: usize) -> &Ext {
        &self.values[step][node][level_idx]
    }

    /// Value at an arbitrary budget. Restricted grids snap the budget down
    /// to a level; interpolated grids blend linearly between the two
    /// enclosing levels (exactly, in rational arithmetic).
    pub fn value_at(&self, step: usize, node: usize, m: &Rat) -> Ext {
        let lo = match self.grid.floor_idx(m) {
            Some(i) => i,
            None => return Ext::NegInf,
        };
        match self.grid.mode() {
            GridMode::Restricted => self.values[step][node][lo].clone(),
            GridMode::Interpolated => {
                if self.grid.level(lo) == m || lo + 1 == self.grid.len() {
                    return self.values[step][node][lo].clone();
                }
                let hi = lo + 1;
                match (&self.values[step][node][lo], &self.values[step][node][hi]) {
                    (Ext::Finite(v0), Ext::Finite(v1)) => {
                        let l0 = self.grid.level(lo);
                        let l1 = self.grid.level(hi);
                        let t = (m - l0) / (l1 - l0);
                        Ext::Finite(v0 + (v1 - v0) * t)
                    }
                    (lo_v, _) => lo_v.clone(),
                }
            }
        }
    }

    /// Value at the root for a given budget.
    pub fn root_value(&self, m: &Rat) -> Ext {
        self.value_at(0, 0, m)
    }

    /// Minimal feasible budget at a node.
    pub fn min_budget(&self, step: usize, node: usize) -> &Ext {
        &self.min_budget[step][node]
    }

    pub fn root_min_budget(&self) -> &Ext {
        &self.min_budget[0][0]
    }
}

impl std::fmt::Debug for ValueSurface {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ValueSurface")
            .field("dag", &self.dag)
            .field("levels", &self.grid.len())
            .finish()
    }
}

/// One optimal choice: the control to play and the budget level handed to
/// each child branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyEntry {
    pub control: Control,
    pub child_levels: Vec<usize>,
}

/// The argmax table accompanying a [`ValueSurface`]: per (step, node,
/// level), the control and child-budget allocation attaining the value.
/// `None` entries are infeasible (value `-inf`).
pub struct Policy {
    dag: Arc<LatticeDag>,
    grid: Arc<BudgetGrid>,
    entries: Vec<Vec<Vec<Option<PolicyEntry>>>>,
}

impl Policy {
    pub(crate) fn new(
        dag: Arc<LatticeDag>,
        grid: Arc<BudgetGrid>,
        entries: Vec<Vec<Vec<Option<PolicyEntry>>>>,
    ) -> Self {
        Self { dag, grid, entries }
    }

    pub fn dag(&self) -> &Arc<LatticeDag> {
        &self.dag
    }

    pub fn grid(&self) -> &Arc<BudgetGrid> {
        &self.grid
    }

    pub fn entry(&self, step: usize, node: usize, level_idx: usize) -> Option<&PolicyEntry> {
        self.entries[step][node][level_idx].as_ref()
    }
}

impl std::fmt::Debug for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Policy").field("dag", &self.dag).finish()
    }
}

/// A solved instance: the surface and its argmax policy.
pub struct SolveOutput {
    pub surface: ValueSurface,
    pub policy: Policy,
}

impl SolveOutput {
    pub fn dag(&self) -> &Arc<LatticeDag> {
        self.surface.dag()
    }

    pub fn grid(&self) -> &Arc<BudgetGrid> {
        self.surface.grid()
    }
}
