//! Finite canonical path space.
//!
//! A [`LatticeModel`] is a finite-horizon controlled scenario lattice: at
//! each step one of `J` noise branches fires with a fixed probability, and
//! the chosen control maps the current state to the next. Paths are
//! [`PathPrefix`]es — observed histories keyed by their branch history, not
//! by state values (states may collide under degenerate dynamics).
//! Probability measures on paths, conditioning, and pasting live in
//! [`measure`]; strategies and induced measures in [`strategy`].

pub mod measure;
pub mod strategy;

pub use measure::{paste_measures, TreeMeasure};
pub use strategy::{induced_measure, RealizedTree, StoppedSet, StoppingRule, Strategy};

use crate::ext::Rat;
use num_traits::{One, Signed};
use std::sync::Arc;
use thiserror::Error;

/// A state vector in `R^d`, held exactly.
pub type State = Vec<Rat>;

/// A branch history `(j_1, ..., j_k)`; the canonical key for lattice nodes.
pub type BranchHistory = Vec<usize>;

/// A control identifier (index into the model's declared control set).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Control(pub usize);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("need at least 2 noise branches, got {0}")]
    TooFewBranches(usize),
    #[error("control set must be non-empty")]
    NoControls,
    #[error("dynamics parameters do not match the declared controls/branches: {0}")]
    BadDynamics(String),
    #[error("branch probabilities must be positive and sum to 1")]
    BadBranchProbs,
    #[error("concatenation step {t} exceeds head length {len}")]
    ConcatIndexOutOfRange { t: usize, len: usize },
    #[error("tail path is not defined at step {t}")]
    ConcatTailTooShort { t: usize },
    #[error("strategy has no decision at step {step}, node {node:?}")]
    MissingDecision { step: usize, node: BranchHistory },
    #[error("control index {0} is outside the declared control set")]
    UnknownControl(usize),
    #[error("node {0:?} has zero mass; conditional measure undefined")]
    ZeroMassNode(BranchHistory),
    #[error("leaf masses must be nonnegative and sum to 1")]
    BadLeafMasses,
    #[error("leaf key {0:?} does not match horizon/branch count")]
    BadLeafKey(BranchHistory),
    #[error("stopped set is not a stopping rule: {0}")]
    NotAStoppingRule(String),
    #[error("kernel at {0:?} charges paths outside its sub-tree")]
    SupportViolation(BranchHistory),
    #[error("no kernel supplied for stopped node {0:?} with positive mass")]
    MissingKernel(BranchHistory),
    #[error("transition table is not total: missing (step {step}, state {state:?}, control {control}, branch {branch})")]
    PartialTable {
        step: usize,
        state: String,
        control: usize,
        branch: usize,
    },
}

type TransitionFn = dyn Fn(usize, &State, Control, usize) -> State + Send + Sync;

/// Finite-horizon controlled scenario lattice.
#[derive(Clone)]
pub struct LatticeModel {
    horizon: usize,
    branch_probs: Vec<Rat>,
    controls: Vec<String>,
    initial_state: State,
    transition: Arc<TransitionFn>,
}

impl LatticeModel {
    /// Builds a model from parts. The transition closure must be total on
    /// every reachable `(step, state, control, branch)`.
    pub fn new(
        horizon: usize,
        branch_probs: Vec<Rat>,
        controls: Vec<String>,
        initial_state: State,
        transition: Arc<TransitionFn>,
    ) -> Result<Self, LatticeError> {
        if horizon == 0 {
            return Err(LatticeError::EmptyHorizon);
        }
        if branch_probs.len() < 2 {
            return Err(LatticeError::TooFewBranches(branch_probs.len()));
        }
        if controls.is_empty() {
            return Err(LatticeError::NoControls);
        }
        let sum: Rat = branch_probs.iter().cloned().sum();
        if !sum.is_one() || branch_probs.iter().any(|p| !p.is_positive()) {
            return Err(LatticeError::BadBranchProbs);
        }
        Ok(Self {
            horizon,
            branch_probs,
            controls,
            initial_state,
            transition,
        })
    }

    /// Additive dynamics: `x' = x + drift[control] + shock[branch]`.
    pub fn additive(
        horizon: usize,
        branch_probs: Vec<Rat>,
        control_labels: Vec<String>,
        drifts: Vec<State>,
        shocks: Vec<State>,
        initial_state: State,
    ) -> Result<Self, LatticeError> {
        if drifts.len() != control_labels.len() {
            return Err(LatticeError::BadDynamics(
                "one drift vector per control".into(),
            ));
        }
        if shocks.len() != branch_probs.len() {
            return Err(LatticeError::BadDynamics(
                "one shock vector per branch".into(),
            ));
        }
        let dim = initial_state.len();
        let transition = Arc::new(move |_k: usize, x: &State, a: Control, j: usize| {
            let drift = &drifts[a.0];
            let shock = &shocks[j];
            (0..dim)
                .map(|i| &x[i] + &drift[i] + &shock[i])
                .collect::<State>()
        });
        Self::new(
            horizon,
            branch_probs,
            control_labels,
            initial_state,
            transition,
        )
    }

    /// Multiplicative one-dimensional dynamics: `x' = x * factor[control][branch]`.
    pub fn multiplicative(
        horizon: usize,
        branch_probs: Vec<Rat>,
        control_labels: Vec<String>,
        factors: Vec<Vec<Rat>>,
        initial_state: Rat,
    ) -> Result<Self, LatticeError> {
        if factors.len() != control_labels.len()
            || factors.iter().any(|f| f.len() != branch_probs.len())
        {
            return Err(LatticeError::BadDynamics(
                "one factor per (control, branch)".into(),
            ));
        }
        let transition = Arc::new(move |_k: usize, x: &State, a: Control, j: usize| {
            vec![&x[0] * &factors[a.0][j]]
        });
        Self::new(
            horizon,
            branch_probs,
            control_labels,
            vec![initial_state],
            transition,
        )
    }

    /// Tabulated dynamics. Entries are keyed by `(step, state, control, branch)`.
    /// Totality over the reachable set is validated eagerly, so the resulting
    /// closure never faults.
    pub fn from_table(
        horizon: usize,
        branch_probs: Vec<Rat>,
        control_labels: Vec<String>,
        table: std::collections::BTreeMap<(usize, State, usize, usize), State>,
        initial_state: State,
    ) -> Result<Self, LatticeError> {
        let n_controls = control_labels.len();
        let n_branches = branch_probs.len();
        // Validate totality by forward reachability.
        let mut layer: Vec<State> = vec![initial_state.clone()];
        for step in 0..horizon {
            let mut next: Vec<State> = Vec::new();
            for x in &layer {
                for a in 0..n_controls {
                    for j in 0..n_branches {
                        match table.get(&(step, x.clone(), a, j)) {
                            Some(x2) => {
                                if !next.contains(x2) {
                                    next.push(x2.clone());
                                }
                            }
                            None => {
                                return Err(LatticeError::PartialTable {
                                    step,
                                    state: format!("{x:?}"),
                                    control: a,
                                    branch: j,
                                })
                            }
                        }
                    }
                }
            }
            layer = next;
        }
        let table = Arc::new(table);
        let transition = Arc::new(move |k: usize, x: &State, a: Control, j: usize| {
            table
                .get(&(k, x.clone(), a.0, j))
                .cloned()
                .expect("table validated total on reachable states")
        });
        Self::new(
            horizon,
            branch_probs,
            control_labels,
            initial_state,
            transition,
        )
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of noise branches per step.
    pub fn branch_count(&self) -> usize {
        self.branch_probs.len()
    }

    pub fn branch_probs(&self) -> &[Rat] {
        &self.branch_probs
    }

    pub fn control_count(&self) -> usize {
        self.controls.len()
    }

    pub fn control_labels(&self) -> &[String] {
        &self.controls
    }

    pub fn controls(&self) -> impl Iterator<Item = Control> {
        (0..self.controls.len()).map(Control)
    }

    pub fn initial_state(&self) -> &State {
        &self.initial_state
    }

    pub fn dim(&self) -> usize {
        self.initial_state.len()
    }

    /// Applies the transition map.
    pub fn step(&self, k: usize, x: &State, a: Control, j: usize) -> State {
        debug_assert!(a.0 < self.controls.len());
        debug_assert!(j < self.branch_probs.len());
        (self.transition)(k, x, a, j)
    }

    /// The root path: just the initial state, no branches taken.
    pub fn root(&self) -> PathPrefix {
        PathPrefix::root(self.initial_state.clone())
    }
}

impl std::fmt::Debug for LatticeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LatticeModel")
            .field("horizon", &self.horizon)
            .field("branches", &self.branch_probs.len())
            .field("controls", &self.controls)
            .field("dim", &self.initial_state.len())
            .finish()
    }
}

/// An observed history `(x_0, ..., x_k)` together with the branches
/// `(j_1, ..., j_k)` that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathPrefix {
    states: Vec<State>,
    branches: BranchHistory,
}

impl PathPrefix {
    pub fn root(initial_state: State) -> Self {
        Self {
            states: vec![initial_state],
            branches: Vec::new(),
        }
    }

    /// Builds a prefix from already-known states and branches.
    /// `states.len()` must equal `branches.len() + 1`.
    pub fn from_parts(states: Vec<State>, branches: BranchHistory) -> Self {
        assert_eq!(
            states.len(),
            branches.len() + 1,
            "a prefix over k branches has k+1 states"
        );
        Self { states, branches }
    }

    /// Convenience for one-dimensional paths.
    pub fn scalar(values: &[Rat], branches: BranchHistory) -> Self {
        Self::from_parts(values.iter().map(|v| vec![v.clone()]).collect(), branches)
    }

    /// The step this prefix has reached (number of branches taken).
    pub fn step(&self) -> usize {
        self.branches.len()
    }

    pub fn state_at(&self, k: usize) -> &State {
        &self.states[k]
    }

    pub fn last_state(&self) -> &State {
        self.states.last().expect("non-empty by construction")
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn branches(&self) -> &BranchHistory {
        &self.branches
    }

    /// Extends the prefix by one observed step.
    pub fn extend(&self, branch: usize, state: State) -> Self {
        let mut states = self.states.clone();
        let mut branches = self.branches.clone();
        states.push(state);
        branches.push(branch);
        Self { states, branches }
    }

    /// Truncates to the first `k` steps.
    pub fn truncate(&self, k: usize) -> Self {
        Self {
            states: self.states[..=k].to_vec(),
            branches: self.branches[..k].to_vec(),
        }
    }
}

/// Concatenates two paths at step `t`: the head is kept up to (excluding)
/// `t`, and from `t` onwards the tail is translated so it continues from the
/// head's value at `t`:
///
/// `result_s = head_s` for `s < t`, and
/// `result_s = head_t + tail_s - tail_t` for `s >= t`.
///
/// Branch histories are stitched the same way: head branches up to `t`,
/// tail branches afterwards.
pub fn concat_paths(
    head: &PathPrefix,
    t: usize,
    tail: &PathPrefix,
) -> Result<PathPrefix, LatticeError> {
    if t > head.step() {
        return Err(LatticeError::ConcatIndexOutOfRange {
            t,
            len: head.step(),
        });
    }
    if tail.step() < t {
        return Err(LatticeError::ConcatTailTooShort { t });
    }
    let dim = head.state_at(0).len();
    let anchor = head.state_at(t);
    let tail_at_t = tail.state_at(t);
    let mut states: Vec<State> = head.states[..t].to_vec();
    for s in t..=tail.step() {
        let xs = tail.state_at(s);
        let translated: State = (0..dim)
            .map(|i| &anchor[i] + &xs[i] - &tail_at_t[i])
            .collect();
        states.push(translated);
    }
    let mut branches: BranchHistory = head.branches[..t].to_vec();
    branches.extend_from_slice(&tail.branches[t..]);
    Ok(PathPrefix { states, branches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::{rat, rat_int};

    fn scalar_path(values: &[i64]) -> PathPrefix {
        let vals: Vec<Rat> = values.iter().map(|&v| rat_int(v)).collect();
        let branches = vec![0; values.len() - 1];
        PathPrefix::scalar(&vals, branches)
    }

    #[test]
    fn concat_formula() {
        // head=(0,1,2), tail=(0,3,4), t=1 -> (0,1,2) since 1+4-3=2
        let head = scalar_path(&[0, 1, 2]);
        let tail = scalar_path(&[0, 3, 4]);
        let out = concat_paths(&head, 1, &tail).unwrap();
        assert_eq!(out, scalar_path(&[0, 1, 2]));
    }

    #[test]
    fn concat_at_zero_is_tail() {
        let head = scalar_path(&[0]);
        let tail = scalar_path(&[0, 7, -2]);
        let out = concat_paths(&head, 0, &tail).unwrap();
        assert_eq!(out, tail);
    }

    #[test]
    fn concat_translates_tail() {
        // head=(0,-1), tail=(0,0,5), t=1 -> (0,-1,4)
        let head = scalar_path(&[0, -1]);
        let tail = scalar_path(&[0, 0, 5]);
        let out = concat_paths(&head, 1, &tail).unwrap();
        assert_eq!(out, scalar_path(&[0, -1, 4]));
    }

    #[test]
    fn concat_rejects_bad_index() {
        let head = scalar_path(&[0, 1]);
        let tail = scalar_path(&[0, 1, 2]);
        assert!(matches!(
            concat_paths(&head, 2, &tail),
            Err(LatticeError::ConcatIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn model_validates_probs() {
        let bad = LatticeModel::additive(
            1,
            vec![rat(1, 2), rat(1, 3)],
            vec!["a".into()],
            vec![vec![rat_int(0)]],
            vec![vec![rat_int(1)], vec![rat_int(-1)]],
            vec![rat_int(0)],
        );
        assert!(matches!(bad, Err(LatticeError::BadBranchProbs)));
    }

    #[test]
    fn table_model_must_be_total() {
        use std::collections::BTreeMap;
        let mut table = BTreeMap::new();
        table.insert((0usize, vec![rat_int(0)], 0usize, 0usize), vec![rat_int(1)]);
        // branch 1 missing
        let err = LatticeModel::from_table(
            1,
            vec![rat(1, 2), rat(1, 2)],
            vec!["a".into()],
            table,
            vec![rat_int(0)],
        );
        assert!(matches!(err, Err(LatticeError::PartialTable { .. })));
    }
}
