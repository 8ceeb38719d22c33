//! Realizes a solved policy as a concrete strategy plus its budget process.

use super::{BudgetProcess, SolveOutput, SolverError};
use crate::ext::{Ext, Rat};
use crate::lattice::{BranchHistory, Strategy};
use std::collections::BTreeMap;

/// Unrolls the argmax policy forward from `(step 0, root, m0)` into a
/// path-dependent strategy and the budget process of its allocations.
/// The induced expected reward equals `V(0, root, m0)` exactly when the
/// grid is exact; the budget process satisfies all three defining
/// conditions by construction of the allocations.
pub fn extract_policy(
    output: &SolveOutput,
    m0: &Rat,
) -> Result<(Strategy, BudgetProcess), SolverError> {
    let dag = output.dag();
    let grid = output.grid();
    let infeasible = || SolverError::InfeasibleStart {
        m0: crate::ext::fmt_rat(m0),
        min: output.surface.root_min_budget().to_string(),
    };
    let level0 = grid.floor_idx(m0).ok_or_else(infeasible)?;
    if Ext::Finite(m0.clone()) < *output.surface.root_min_budget() {
        return Err(infeasible());
    }
    if output.surface.value_idx(0, 0, level0).is_neg_inf() {
        return Err(infeasible());
    }

    let mut decisions: BTreeMap<(usize, BranchHistory), crate::lattice::Control> = BTreeMap::new();
    let mut budgets: BTreeMap<BranchHistory, Ext> = BTreeMap::new();
    // (step, node index, level index, branch history)
    let mut frontier: Vec<(usize, usize, usize, BranchHistory)> = vec![(0, 0, level0, Vec::new())];
    budgets.insert(Vec::new(), Ext::Finite(grid.level(level0).clone()));
    while let Some((step, node_idx, level_idx, history)) = frontier.pop() {
        if step == dag.horizon() {
            continue;
        }
        let entry = output
            .policy
            .entry(step, node_idx, level_idx)
            .ok_or_else(infeasible)?;
        decisions.insert((step, history.clone()), entry.control);
        let node = dag.node(step, node_idx);
        let kids = &node.children[entry.control.0];
        for (j, (&child_idx, &child_level)) in kids.iter().zip(&entry.child_levels).enumerate() {
            let mut child_history = history.clone();
            child_history.push(j);
            budgets.insert(
                child_history.clone(),
                Ext::Finite(grid.level(child_level).clone()),
            );
            frontier.push((step + 1, child_idx, child_level, child_history));
        }
    }
    let strategy = Strategy::by_prefix(decisions);
    let process = BudgetProcess::new(Vec::new(), budgets, strategy.clone());
    Ok((strategy, process))
}
