//! Minimal-budget recursion, one-step budget allocation, and the solve loop.

use super::{
    BudgetGrid, LatticeDag, NodeMode, Policy, PolicyEntry, SolveOutput, SolveWarning, SolverError,
    ValueSurface,
};
use crate::constraint::{ConstraintFunctional, RewardFunctional};
use crate::ext::{weighted_sum, Ext, Rat};
use crate::lattice::LatticeModel;
use rayon::prelude::*;
use std::sync::Arc;

/// How one-step allocations are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AllocMode {
    /// Enumerate grid levels for all children but the last, which receives
    /// the largest level still affordable. Because child values are
    /// nondecreasing in the budget this attains the full `<=`-constrained
    /// optimum.
    #[default]
    GreedyTail,
    /// Enumerate every grid combination with probability-weighted sum not
    /// exceeding the budget. Reference implementation for tests.
    ExhaustiveLeq,
    /// Enumerate only combinations whose weighted sum equals the budget
    /// exactly. Used to check that saturating the budget loses nothing.
    ExhaustiveEq,
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub alloc: AllocMode,
    /// Node identification override; defaults to merged when the reward has
    /// a terminal form.
    pub node_mode: Option<NodeMode>,
}

/// Feasibility table: `w(step, node)` is the smallest budget at which any
/// admissible continuation exists, computed by
/// `w(N,n) = g(N,n)` and `w(k,n) = max(g(k,n), min_a sum_j p_j w(k+1, child))`.
pub fn minimal_budget(dag: &LatticeDag) -> Vec<Vec<Ext>> {
    let horizon = dag.horizon();
    let probs = dag.branch_probs().to_vec();
    let mut w: Vec<Vec<Ext>> = vec![Vec::new(); horizon + 1];
    w[horizon] = dag.layer(horizon).iter().map(|n| n.g.clone()).collect();
    for k in (0..horizon).rev() {
        let next = std::mem::take(&mut w[k + 1]);
        w[k] = dag
            .layer(k)
            .iter()
            .map(|node| {
                let best_continuation = node
                    .children
                    .iter()
                    .map(|kids| {
                        weighted_sum(
                            kids.iter()
                                .zip(&probs)
                                .map(|(&c, p)| (p.clone(), next[c].clone())),
                        )
                    })
                    .min()
                    .unwrap_or(Ext::PosInf);
                node.g.max_with(&best_continuation)
            })
            .collect();
        w[k + 1] = next;
    }
    w
}

/// One-step allocation: maximizes `sum_j p_j child_value_j(m_j)` over grid
/// budgets with `sum_j p_j m_j <= m` and `m_j` at least the child's floor.
/// Returns the optimal value and the allocation attaining it (`None` when
/// nothing is feasible; the value is then `-inf`).
///
/// Ties resolve to the lexicographically smallest allocation.
pub fn allocate_budget(
    grid: &BudgetGrid,
    probs: &[Rat],
    child_values: &[&[Ext]],
    child_floors: &[Option<usize>],
    budget_idx: usize,
    mode: AllocMode,
) -> (Ext, Option<Vec<usize>>) {
    let n = probs.len();
    debug_assert_eq!(child_values.len(), n);
    debug_assert_eq!(child_floors.len(), n);
    if child_floors.iter().any(Option::is_none) {
        return (Ext::NegInf, None);
    }
    let budget = grid.level(budget_idx).clone();
    let mut best_value = Ext::NegInf;
    let mut best_alloc: Option<Vec<usize>> = None;
    let mut alloc = vec![0usize; n];

    match mode {
        AllocMode::GreedyTail => {
            // Enumerate children 0..n-1 over the grid; the last child takes
            // the largest affordable level.
            search_greedy(
                grid,
                probs,
                child_values,
                child_floors,
                &budget,
                0,
                num_traits::Zero::zero(),
                &mut alloc,
                &mut best_value,
                &mut best_alloc,
            );
            // Canonical form: shrink the tail level as far as the same value
            // allows, so reported allocations are minimal.
            if let Some(a) = &mut best_alloc {
                let last = n - 1;
                let v = &child_values[last][a[last]];
                let floor = child_floors[last].expect("checked above");
                while a[last] > floor && &child_values[last][a[last] - 1] == v {
                    a[last] -= 1;
                }
            }
        }
        AllocMode::ExhaustiveLeq | AllocMode::ExhaustiveEq => {
            let exact = mode == AllocMode::ExhaustiveEq;
            search_exhaustive(
                grid,
                probs,
                child_values,
                child_floors,
                &budget,
                exact,
                0,
                num_traits::Zero::zero(),
                &mut alloc,
                &mut best_value,
                &mut best_alloc,
            );
        }
    }
    (best_value, best_alloc)
}

#[allow(clippy::too_many_arguments)]
fn search_greedy(
    grid: &BudgetGrid,
    probs: &[Rat],
    child_values: &[&[Ext]],
    child_floors: &[Option<usize>],
    budget: &Rat,
    child: usize,
    spent: Rat,
    alloc: &mut Vec<usize>,
    best_value: &mut Ext,
    best_alloc: &mut Option<Vec<usize>>,
) {
    let n = probs.len();
    if child == n - 1 {
        // Largest affordable level for the tail child.
        let remaining = budget - &spent;
        let cap = remaining / &probs[child];
        let idx = match grid.floor_idx(&cap) {
            Some(i) => i,
            None => return,
        };
        let floor = child_floors[child].expect("floors checked");
        if idx < floor {
            return;
        }
        alloc[child] = idx;
        let value =
            weighted_sum((0..n).map(|i| (probs[i].clone(), child_values[i][alloc[i]].clone())));
        if value > *best_value {
            *best_value = value;
            *best_alloc = Some(alloc.clone());
        }
        return;
    }
    let floor = child_floors[child].expect("floors checked");
    for idx in floor..grid.len() {
        let cost = grid.level(idx) * &probs[child];
        let next_spent = &spent + &cost;
        if &next_spent > budget {
            break;
        }
        alloc[child] = idx;
        search_greedy(
            grid,
            probs,
            child_values,
            child_floors,
            budget,
            child + 1,
            next_spent,
            alloc,
            best_value,
            best_alloc,
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn search_exhaustive(
    grid: &BudgetGrid,
    probs: &[Rat],
    child_values: &[&[Ext]],
    child_floors: &[Option<usize>],
    budget: &Rat,
    exact: bool,
    child: usize,
    spent: Rat,
    alloc: &mut Vec<usize>,
    best_value: &mut Ext,
    best_alloc: &mut Option<Vec<usize>>,
) {
    let n = probs.len();
    if child == n {
        if exact && &spent != budget {
            return;
        }
        let value =
            weighted_sum((0..n).map(|i| (probs[i].clone(), child_values[i][alloc[i]].clone())));
        if value > *best_value {
            *best_value = value;
            *best_alloc = Some(alloc.clone());
        }
        return;
    }
    let floor = child_floors[child].expect("floors checked");
    for idx in floor..grid.len() {
        let cost = grid.level(idx) * &probs[child];
        let next_spent = &spent + &cost;
        if &next_spent > budget {
            break;
        }
        alloc[child] = idx;
        search_exhaustive(
            grid,
            probs,
            child_values,
            child_floors,
            budget,
            exact,
            child + 1,
            next_spent,
            alloc,
            best_value,
            best_alloc,
        );
    }
}

/// Continuum allocation against piecewise-linear child value curves
/// (the grid levels are the breakpoints; values interpolate linearly in
/// between and freeze above the top level). Maximizes
/// `sum_j p_j child_j(m_j)` over real allocations with
/// `sum_j p_j m_j <= budget`, solved over breakpoints: each child in turn
/// plays the continuum remainder while the others sit on breakpoints.
/// Exact for two children; a lower bound for more (interpolated results
/// are approximate by contract).
pub fn allocate_budget_interpolated(
    grid: &BudgetGrid,
    probs: &[Rat],
    child_values: &[&[Ext]],
    budget: &Rat,
) -> (Ext, Option<Vec<Rat>>) {
    let n = probs.len();
    let interp = |child: usize, m: &Rat| -> Ext {
        let lo = match grid.floor_idx(m) {
            Some(i) => i,
            None => return Ext::NegInf,
        };
        if grid.level(lo) == m || lo + 1 == grid.len() {
            return child_values[child][lo].clone();
        }
        match (&child_values[child][lo], &child_values[child][lo + 1]) {
            (Ext::Finite(v0), Ext::Finite(v1)) => {
                let l0 = grid.level(lo);
                let l1 = grid.level(lo + 1);
                let t = (m - l0) / (l1 - l0);
                Ext::Finite(v0 + (v1 - v0) * t)
            }
            (lo_v, _) => lo_v.clone(),
        }
    };
    let mut best = Ext::NegInf;
    let mut best_alloc: Option<Vec<Rat>> = None;
    for remainder_child in 0..n {
        let others: Vec<usize> = (0..n).filter(|&c| c != remainder_child).collect();
        let mut assignment = vec![0usize; others.len()];
        loop {
            let spent: Rat = others
                .iter()
                .zip(&assignment)
                .map(|(&c, &li)| grid.level(li) * &probs[c])
                .sum();
            if &spent <= budget {
                let rest = (budget - &spent) / &probs[remainder_child];
                let mut alloc: Vec<Rat> = vec![Rat::from_integer(0.into()); n];
                for (&c, &li) in others.iter().zip(&assignment) {
                    alloc[c] = grid.level(li).clone();
                }
                alloc[remainder_child] = rest.clone();
                let value = weighted_sum((0..n).map(|c| {
                    (
                        probs[c].clone(),
                        if c == remainder_child {
                            interp(c, &rest)
                        } else {
                            interp(c, &alloc[c])
                        },
                    )
                }));
                if value > best {
                    best = value;
                    best_alloc = Some(alloc);
                }
            }
            // advance the mixed-radix counter over breakpoints
            let mut pos = 0;
            loop {
                if pos == assignment.len() {
                    break;
                }
                if assignment[pos] + 1 < grid.len() {
                    assignment[pos] += 1;
                    break;
                }
                assignment[pos] = 0;
                pos += 1;
            }
            if pos == assignment.len() {
                break;
            }
        }
    }
    (best, best_alloc)
}

/// Backward induction over the budget-augmented state space.
///
/// Terminal layer: `V(N, n, m) = f(n)` when `g(N, n) <= m`, else `-inf`.
/// Interior: `V(k, n, m) = -inf` when `g(k, n) > m`, else the best control's
/// best child allocation. The returned policy attains the surface exactly
/// on grid levels.
pub fn solve(
    model: &LatticeModel,
    f: &RewardFunctional,
    g: &ConstraintFunctional,
    grid: Option<BudgetGrid>,
    options: &SolveOptions,
) -> Result<SolveOutput, SolverError> {
    let node_mode = options.node_mode.unwrap_or(match f.terminal_form() {
        Some(_) => NodeMode::Merged,
        None => NodeMode::PathExpanded,
    });
    let dag = Arc::new(LatticeDag::build(model, g, node_mode));
    let min_budget = minimal_budget(&dag);
    let grid = Arc::new(match grid {
        Some(grid) => grid,
        None => BudgetGrid::auto(&dag, &min_budget, 4096),
    });
    let mut warnings = Vec::new();
    for (step, row) in min_budget.iter().enumerate() {
        for (node, w) in row.iter().enumerate() {
            if let Ext::Finite(w) = w {
                let on_grid = grid.levels().binary_search_by(|l| l.cmp(w)).is_ok();
                let below = grid.floor_idx(w).is_none();
                let above = grid.ceil_idx(w).is_none();
                if !on_grid && !below && !above {
                    warnings.push(SolveWarning::GridTooCoarse { step, node });
                }
            }
        }
    }

    let horizon = dag.horizon();
    let levels = grid.len();
    let probs = dag.branch_probs().to_vec();

    // Terminal layer.
    let terminal_values: Vec<Vec<Ext>> = dag
        .layer(horizon)
        .par_iter()
        .map(|node| {
            let reward = match f.terminal_form() {
                Some(t) => t(node.prefix.last_state()),
                None => f.eval(&node.prefix),
            };
            (0..levels)
                .map(|li| {
                    if node.g <= Ext::Finite(grid.level(li).clone()) {
                        reward.clone()
                    } else {
                        Ext::NegInf
                    }
                })
                .collect()
        })
        .collect();

    let mut values: Vec<Vec<Vec<Ext>>> = vec![Vec::new(); horizon + 1];
    let mut entries: Vec<Vec<Vec<Option<PolicyEntry>>>> = vec![Vec::new(); horizon + 1];
    values[horizon] = terminal_values;
    entries[horizon] = vec![vec![None; levels]; dag.layer(horizon).len()];

    for k in (0..horizon).rev() {
        let next_values = std::mem::take(&mut values[k + 1]);
        let next_floor_idx: Vec<Option<usize>> = min_budget[k + 1]
            .iter()
            .map(|w| grid.ceil_idx_ext(w))
            .collect();
        let computed: Vec<(Vec<Ext>, Vec<Option<PolicyEntry>>)> = dag
            .layer(k)
            .par_iter()
            .map(|node| {
                let mut row_values = Vec::with_capacity(levels);
                let mut row_entries = Vec::with_capacity(levels);
                for li in 0..levels {
                    if node.g > Ext::Finite(grid.level(li).clone()) {
                        row_values.push(Ext::NegInf);
                        row_entries.push(None);
                        continue;
                    }
                    let mut best = Ext::NegInf;
                    let mut best_entry: Option<PolicyEntry> = None;
                    for (a, kids) in node.children.iter().enumerate() {
                        let child_values: Vec<&[Ext]> =
                            kids.iter().map(|&c| next_values[c].as_slice()).collect();
                        let child_floors: Vec<Option<usize>> =
                            kids.iter().map(|&c| next_floor_idx[c]).collect();
                        let (value, alloc) = allocate_budget(
                            &grid,
                            &probs,
                            &child_values,
                            &child_floors,
                            li,
                            options.alloc,
                        );
                        if value > best {
                            best = value;
                            best_entry = alloc.map(|child_levels| PolicyEntry {
                                control: crate::lattice::Control(a),
                                child_levels,
                            });
                        }
                    }
                    row_values.push(best);
                    row_entries.push(best_entry);
                }
                (row_values, row_entries)
            })
            .collect();
        values[k + 1] = next_values;
        let (layer_values, layer_entries): (Vec<_>, Vec<_>) = computed.into_iter().unzip();
        values[k] = layer_values;
        entries[k] = layer_entries;
    }

    let surface = ValueSurface::new(dag.clone(), grid.clone(), values, min_budget, warnings);
    let policy = Policy::new(dag, grid, entries);
    Ok(SolveOutput { surface, policy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{g_quantile, ConstraintFunctional, RewardFunctional, TimeIndexed};
    use crate::ext::{rat, rat_int, Ext};
    use crate::region::Region;
    use crate::solver::{BudgetGrid, GridMode, LatticeDag, NodeMode};

    fn walk(horizon: usize) -> crate::lattice::LatticeModel {
        crate::lattice::LatticeModel::additive(
            horizon,
            vec![rat(1, 2), rat(1, 2)],
            vec!["only".into()],
            vec![vec![rat_int(0)]],
            vec![vec![rat_int(1)], vec![rat_int(-1)]],
            vec![rat_int(0)],
        )
        .unwrap()
    }

    fn negative_state_cost() -> ConstraintFunctional {
        g_quantile(TimeIndexed::Constant(Region::half_space_above(
            0,
            rat_int(-1),
        )))
    }

    #[test]
    fn minimal_budget_one_step_walk() {
        // cost 1 when the current state is negative; N=1 from 0:
        // w(0) = max(0, 1/2)
        let model = walk(1);
        let g = g_quantile(TimeIndexed::Constant(Region::half_space_above(
            0,
            rat_int(0),
        )));
        let dag = LatticeDag::build(&model, &g, NodeMode::Merged);
        let w = minimal_budget(&dag);
        assert_eq!(w[0][0], Ext::Finite(rat(1, 2)));
    }

    #[test]
    fn minimal_budget_zero_cost() {
        let model = walk(3);
        let g = ConstraintFunctional::none();
        let dag = LatticeDag::build(&model, &g, NodeMode::Merged);
        for row in minimal_budget(&dag) {
            for w in row {
                assert_eq!(w, Ext::zero());
            }
        }
    }

    #[test]
    fn allocation_prefers_the_valuable_child() {
        // children: f1(m) = 2*1{m >= 1/2}, f2(m) = 1*1{m >= 1/4};
        // budget 1/4 on grid {0, 1/4, 1/2}: best allocation (1/2, 0), value 1
        let grid =
            BudgetGrid::from_levels(vec![rat(0, 1), rat(1, 4), rat(1, 2)], GridMode::Restricted)
                .unwrap();
        let f1 = vec![Ext::zero(), Ext::zero(), Ext::from_int(2)];
        let f2 = vec![Ext::zero(), Ext::one(), Ext::one()];
        let probs = vec![rat(1, 2), rat(1, 2)];
        let floors = vec![Some(0), Some(0)];
        for mode in [AllocMode::GreedyTail, AllocMode::ExhaustiveLeq] {
            let (value, alloc) = allocate_budget(&grid, &probs, &[&f1, &f2], &floors, 1, mode);
            assert_eq!(value, Ext::one(), "mode {mode:?}");
            assert_eq!(alloc, Some(vec![2, 0]), "mode {mode:?}");
        }
    }

    #[test]
    fn exhausted_budget_forces_zero_allocation() {
        let grid =
            BudgetGrid::from_levels(vec![rat(0, 1), rat(1, 2), rat(1, 1)], GridMode::Restricted)
                .unwrap();
        let vals = vec![Ext::zero(), Ext::one(), Ext::one()];
        let probs = vec![rat(1, 2), rat(1, 2)];
        let (value, alloc) = allocate_budget(
            &grid,
            &probs,
            &[&vals, &vals],
            &[Some(0), Some(0)],
            0,
            AllocMode::GreedyTail,
        );
        assert_eq!(value, Ext::zero());
        assert_eq!(alloc, Some(vec![0, 0]));
    }

    #[test]
    fn identical_concave_children_split_evenly() {
        // concave-ish step values: equal split attains the optimum
        let grid = BudgetGrid::from_levels(
            vec![rat(0, 1), rat(1, 4), rat(1, 2), rat(3, 4), rat(1, 1)],
            GridMode::Restricted,
        )
        .unwrap();
        let vals: Vec<Ext> = vec![
            Ext::zero(),
            Ext::one(),
            Ext::Finite(rat(3, 2)),
            Ext::Finite(rat(7, 4)),
            Ext::Finite(rat(15, 8)),
        ];
        let probs = vec![rat(1, 2), rat(1, 2)];
        let (value, _) = allocate_budget(
            &grid,
            &probs,
            &[&vals, &vals],
            &[Some(0), Some(0)],
            2,
            AllocMode::ExhaustiveLeq,
        );
        assert_eq!(value, Ext::Finite(rat(3, 2)));
    }

    #[test]
    fn greedy_matches_exhaustive_on_a_sweep() {
        let model = walk(2);
        let g = negative_state_cost();
        let f = RewardFunctional::linear(vec![rat_int(1)]);
        let greedy = solve(&model, &f, &g, None, &SolveOptions::default()).unwrap();
        let exhaustive = solve(
            &model,
            &f,
            &g,
            None,
            &SolveOptions {
                alloc: AllocMode::ExhaustiveLeq,
                node_mode: None,
            },
        )
        .unwrap();
        let grid = greedy.grid().clone();
        for li in 0..grid.len() {
            for step in 0..=2 {
                for node in 0..greedy.dag().layer(step).len() {
                    assert_eq!(
                        greedy.surface.value_idx(step, node, li),
                        exhaustive.surface.value_idx(step, node, li),
                    );
                }
            }
        }
    }

    #[test]
    fn budget_saturation_changes_nothing_on_exact_grids() {
        let model = walk(2);
        let g = negative_state_cost();
        let f = RewardFunctional::linear(vec![rat_int(1)]);
        let leq = solve(
            &model,
            &f,
            &g,
            None,
            &SolveOptions {
                alloc: AllocMode::ExhaustiveLeq,
                node_mode: None,
            },
        )
        .unwrap();
        let eq = solve(
            &model,
            &f,
            &g,
            None,
            &SolveOptions {
                alloc: AllocMode::ExhaustiveEq,
                node_mode: None,
            },
        )
        .unwrap();
        assert!(leq.grid().is_exact());
        for li in 0..leq.grid().len() {
            assert_eq!(
                leq.surface.value_idx(0, 0, li),
                eq.surface.value_idx(0, 0, li)
            );
        }
    }

    #[test]
    fn surface_is_monotone_and_frontier_matches() {
        let model = walk(2);
        let g = negative_state_cost();
        let f = RewardFunctional::linear(vec![rat_int(1)]);
        let out = solve(&model, &f, &g, None, &SolveOptions::default()).unwrap();
        let grid = out.grid();
        for step in 0..=2 {
            for node in 0..out.dag().layer(step).len() {
                let w = out.surface.min_budget(step, node);
                for li in 0..grid.len() {
                    let v = out.surface.value_idx(step, node, li);
                    if li > 0 {
                        assert!(v >= out.surface.value_idx(step, node, li - 1));
                    }
                    let level = Ext::Finite(grid.level(li).clone());
                    assert_eq!(
                        v.is_neg_inf(),
                        level < *w,
                        "step {step} node {node} li {li}"
                    );
                }
            }
        }
    }

    #[test]
    fn vacuous_constraint_recovers_classical_dp() {
        let model = walk(2);
        let f = RewardFunctional::linear(vec![rat_int(1)]);
        let g = ConstraintFunctional::none();
        let out = solve(&model, &f, &g, None, &SolveOptions::default()).unwrap();
        assert_eq!(out.surface.root_value(&rat(0, 1)), Ext::zero());
        // saturated budget on an indicator cost is also vacuous
        let g_ind = negative_state_cost();
        let out = solve(&model, &f, &g_ind, None, &SolveOptions::default()).unwrap();
        assert_eq!(out.surface.root_value(&rat_int(1)), Ext::zero());
    }
}
