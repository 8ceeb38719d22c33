//! Built-in problem builders and the reachability engine.
//!
//! The five application cases reduce to expectation constraints on the
//! lattice:
//!
//! | case      | constraint                  | budget level        |
//! |-----------|-----------------------------|---------------------|
//! | state     | leave-the-region indicator  | 0                   |
//! | floor     | dip-below-floor indicator   | 0                   |
//! | drawdown  | drawdown-breach indicator   | 0                   |
//! | quantile  | miss-the-target indicator   | 1 - success prob    |
//! | target    | miss-the-target indicator   | 0 (quantile at 1)   |
//!
//! For target problems the zero-budget value is characterized geometrically
//! by [`reachability_sets`]: the node sets from which some strategy keeps
//! the state in the target at every remaining step with probability one,
//! computed by the backward fixed point
//! `D(k) = {in target at k, and some control sends every branch into D(k+1)}`.

use crate::constraint::{
    g_drawdown, g_floor, g_quantile, g_state, quantile_level_transform, ConstraintFunctional,
    RewardFunctional, TimeIndexed,
};
use crate::ext::Rat;
use crate::lattice::LatticeModel;
use crate::region::Region;
use crate::solver::{LatticeDag, NodeMode};
use num_traits::Zero;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProblemError {
    #[error("initial state lies outside the step-0 region")]
    InitialStateOutsideRegion,
    #[error("initial state lies below the step-0 floor")]
    InitialBelowFloor,
    #[error("drawdown problems need a nonnegative initial state")]
    NegativeStart,
    #[error("floor and drawdown constraints need one-dimensional states, got dim {0}")]
    DimensionMismatch(usize),
    #[error(transparent)]
    Constraint(#[from] crate::constraint::ConstraintError),
}

/// Which constraint family a problem uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    State,
    Floor,
    Drawdown,
    Quantile,
    Target,
    Custom,
}

impl ConstraintKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintKind::State => "state",
            ConstraintKind::Floor => "floor",
            ConstraintKind::Drawdown => "drawdown",
            ConstraintKind::Quantile => "quantile",
            ConstraintKind::Target => "target",
            ConstraintKind::Custom => "custom",
        }
    }
}

/// A fully assembled instance: model, reward, constraint, and the budget
/// level the user-facing constraint translates to.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub model: LatticeModel,
    pub reward: RewardFunctional,
    pub constraint: ConstraintFunctional,
    pub kind: ConstraintKind,
    /// The user-facing level (success probability for quantile problems,
    /// zero for the pathwise cases).
    pub native_level: Rat,
    /// The expectation-constraint budget the solver runs at.
    pub budget_level: Rat,
}

/// Pathwise state constraint at budget zero: the path must stay in the
/// (open) region schedule almost surely.
pub fn build_state_problem(
    model: LatticeModel,
    regions: TimeIndexed<Region>,
    reward: RewardFunctional,
) -> Result<ProblemSpec, ProblemError> {
    regions.validate_len(model.horizon())?;
    if !regions.at(0).contains(model.initial_state(), true) {
        return Err(ProblemError::InitialStateOutsideRegion);
    }
    Ok(ProblemSpec {
        constraint: g_state(regions),
        kind: ConstraintKind::State,
        native_level: Rat::zero(),
        budget_level: Rat::zero(),
        model,
        reward,
    })
}

/// Pathwise floor constraint at budget zero (one-dimensional states).
pub fn build_floor_problem(
    model: LatticeModel,
    floor: TimeIndexed<Rat>,
    reward: RewardFunctional,
) -> Result<ProblemSpec, ProblemError> {
    if model.dim() != 1 {
        return Err(ProblemError::DimensionMismatch(model.dim()));
    }
    floor.validate_len(model.horizon())?;
    if &model.initial_state()[0] < floor.at(0) {
        return Err(ProblemError::InitialBelowFloor);
    }
    Ok(ProblemSpec {
        constraint: g_floor(floor),
        kind: ConstraintKind::Floor,
        native_level: Rat::zero(),
        budget_level: Rat::zero(),
        model,
        reward,
    })
}

/// Pathwise drawdown constraint at budget zero (one-dimensional states,
/// nonnegative start).
pub fn build_drawdown_problem(
    model: LatticeModel,
    alpha: TimeIndexed<Rat>,
    reward: RewardFunctional,
) -> Result<ProblemSpec, ProblemError> {
    if model.dim() != 1 {
        return Err(ProblemError::DimensionMismatch(model.dim()));
    }
    alpha.validate_len(model.horizon())?;
    let start = model.initial_state()[0].clone();
    if start < Rat::zero() {
        return Err(ProblemError::NegativeStart);
    }
    Ok(ProblemSpec {
        constraint: g_drawdown(alpha, start)?,
        kind: ConstraintKind::Drawdown,
        native_level: Rat::zero(),
        budget_level: Rat::zero(),
        model,
        reward,
    })
}

/// Quantile constraint: the state must lie in the target schedule with
/// probability at least `probability` at every step. Budget level
/// `1 - probability` on the miss indicator.
pub fn build_quantile_problem(
    model: LatticeModel,
    targets: TimeIndexed<Region>,
    reward: RewardFunctional,
    probability: Rat,
) -> Result<ProblemSpec, ProblemError> {
    targets.validate_len(model.horizon())?;
    let budget = quantile_level_transform(&probability)?;
    Ok(ProblemSpec {
        constraint: g_quantile(targets),
        kind: ConstraintKind::Quantile,
        native_level: probability,
        budget_level: budget,
        model,
        reward,
    })
}

/// Target problem: quantile at probability one. The value is finite exactly
/// on the reachability set.
pub fn build_target_problem(
    model: LatticeModel,
    targets: TimeIndexed<Region>,
    reward: RewardFunctional,
) -> Result<ProblemSpec, ProblemError> {
    let mut spec = build_quantile_problem(model, targets, reward, Rat::from_integer(1.into()))?;
    spec.kind = ConstraintKind::Target;
    Ok(spec)
}

/// Membership tables `D(k)` over solver nodes: the states from which some
/// strategy keeps the path in the target schedule, almost surely, through
/// the horizon.
#[derive(Debug)]
pub struct ReachabilitySet {
    dag: Arc<LatticeDag>,
    targets: TimeIndexed<Region>,
    member: Vec<Vec<bool>>,
}

impl ReachabilitySet {
    pub fn dag(&self) -> &Arc<LatticeDag> {
        &self.dag
    }

    pub fn contains(&self, step: usize, node_idx: usize) -> bool {
        self.member[step][node_idx]
    }

    /// Root membership: can the target tube be held from the start?
    pub fn root_reachable(&self) -> bool {
        self.member[0][0]
    }

    pub fn members_at(&self, step: usize) -> &[bool] {
        &self.member[step]
    }

    /// Re-checks the defining identity forward: a node is a member exactly
    /// when it sits in the target now and some control keeps every branch a
    /// member at the next step.
    pub fn verify_fixed_point(&self) -> bool {
        let horizon = self.dag.horizon();
        for step in 0..=horizon {
            for (idx, node) in self.dag.layer(step).iter().enumerate() {
                let in_target = self
                    .targets
                    .at(step)
                    .contains(node.prefix.last_state(), false);
                let expected = if step == horizon {
                    in_target
                } else {
                    in_target
                        && node
                            .children
                            .iter()
                            .any(|kids| kids.iter().all(|&c| self.member[step + 1][c]))
                };
                if self.member[step][idx] != expected {
                    return false;
                }
            }
        }
        true
    }
}

/// Backward computation of the reachability sets for a target schedule.
pub fn reachability_sets(model: &LatticeModel, targets: TimeIndexed<Region>) -> ReachabilitySet {
    let g = g_quantile(targets.clone());
    let dag = Arc::new(LatticeDag::build(model, &g, NodeMode::Merged));
    let horizon = dag.horizon();
    let mut member: Vec<Vec<bool>> = vec![Vec::new(); horizon + 1];
    member[horizon] = dag
        .layer(horizon)
        .iter()
        .map(|node| {
            targets
                .at(horizon)
                .contains(node.prefix.last_state(), false)
        })
        .collect();
    for step in (0..horizon).rev() {
        let next = std::mem::take(&mut member[step + 1]);
        member[step] = dag
            .layer(step)
            .iter()
            .map(|node| {
                targets.at(step).contains(node.prefix.last_state(), false)
                    && node
                        .children
                        .iter()
                        .any(|kids| kids.iter().all(|&c| next[c]))
            })
            .collect();
        member[step + 1] = next;
    }
    ReachabilitySet {
        dag,
        targets,
        member,
    }
}
