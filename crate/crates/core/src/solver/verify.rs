//! Verification of the dynamic programming identity at stopping rules.
//!
//! For a solved surface, checks that
//!
//! `V(0, root, m) = sup_P sup_M E[V(tau, X, M_tau)] = sup_P inf_M E[V(tau, X, M_tau)]`
//!
//! where `P` ranges over enumerated feasible strategies and `M` over
//! grid-valued budget processes. Only the values of `M` at the stopped
//! nodes affect the expectation, and a stopped-value assignment extends to
//! a full process exactly when (a) each stopped value dominates the
//! grid-rounded Snell envelope below it, and (b) the minimal grid-valued
//! supermartingale through those values stays at or below `m` at the root.
//! The enumeration therefore ranges over stopped-value assignments — one
//! representative per distinct value profile — which is exhaustive on exact
//! grids and documented as heuristic on coarse ones.
//!
//! A feasible measure can fail to carry any budget process at level `m`:
//! the Snell envelope optimizes over stopping rules, which can beat every
//! deterministic time. Such measures are reported separately; they
//! contribute `-inf` to both lines.

use super::{SolveOutput, SolverError};
use crate::ext::{weighted_sum, Ext, Rat};
use crate::lattice::{BranchHistory, LatticeModel, RealizedTree, StoppingRule};
use crate::oracle::{enumerate_strategies, OracleBudget};
use std::collections::BTreeMap;

/// Outcome of a DPP verification run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DppReport {
    pub v_root: Ext,
    pub sup_sup: Ext,
    pub sup_inf: Ext,
    /// Both lines equal the root value exactly.
    pub pass: bool,
    pub strategies_total: usize,
    pub strategies_feasible: usize,
    /// Feasible measures whose Snell envelope exceeds `m` at the root, so
    /// no budget process exists for them at this level.
    pub feasible_without_budget_process: usize,
    pub assignments_enumerated: u128,
}

/// Checks both DPP lines at the stopping rule `tau` for budget `m0`.
/// The constraint is the one the surface was solved with.
pub fn dpp_verify(
    output: &SolveOutput,
    model: &LatticeModel,
    tau: &StoppingRule,
    m0: &Rat,
    caps: &OracleBudget,
) -> Result<DppReport, SolverError> {
    let dag = output.dag();
    let grid = output.grid();
    let g = dag.constraint().clone();
    let horizon = model.horizon();
    let v_root = output.surface.root_value(m0);
    let m0_ext = Ext::Finite(m0.clone());

    let strategies =
        enumerate_strategies(model, &model.root(), caps).map_err(|e| e.into_solver_error())?;
    let mut report = DppReport {
        v_root: v_root.clone(),
        sup_sup: Ext::NegInf,
        sup_inf: Ext::NegInf,
        pass: false,
        strategies_total: 0,
        strategies_feasible: 0,
        feasible_without_budget_process: 0,
        assignments_enumerated: 0,
    };

    for sigma in strategies {
        report.strategies_total += 1;
        let tree = RealizedTree::new(model, &sigma, &model.root())?;
        let p = tree.measure();

        // Per-time feasibility: E[g(s)] <= m0 for every grid time.
        let mut feasible = true;
        for s in 0..=horizon {
            let eg = weighted_sum(p.support_at_step(s).map(|(node, mass)| {
                let prefix = tree.prefix(node).expect("supported node realized");
                (mass.clone(), g.eval(s, prefix))
            }));
            if eg > m0_ext {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        report.strategies_feasible += 1;

        // Grid-rounded Snell envelope of the realized cost.
        let mut snell: BTreeMap<BranchHistory, Ext> = BTreeMap::new();
        for step in (0..=horizon).rev() {
            for (node, _) in p.support_at_step(step) {
                let prefix = tree.prefix(node).expect("realized");
                let own = g.eval(step, prefix);
                let raw = if step == horizon {
                    own
                } else {
                    let continuation =
                        weighted_sum(p.child_probs(node).into_iter().map(|(j, q)| {
                            let mut child = node.clone();
                            child.push(j);
                            (q, snell[&child].clone())
                        }));
                    own.max_with(&continuation)
                };
                let rounded = match grid.ceil_idx_ext(&raw) {
                    Some(idx) => Ext::Finite(grid.level(idx).clone()),
                    None => Ext::PosInf,
                };
                snell.insert(node.clone(), rounded);
            }
        }
        if snell[&Vec::new()] > m0_ext {
            report.feasible_without_budget_process += 1;
            continue;
        }

        let stopped = tau.resolve(&tree);
        // Per stopped node: its mass, surface coordinates, and candidate
        // budget levels (the Snell floor plus every level where the value
        // strictly jumps).
        struct Stop {
            mass: Rat,
            step: usize,
            node_idx: usize,
            candidates: Vec<usize>,
            floor_level: usize,
        }
        let mut stops: Vec<(BranchHistory, Stop)> = Vec::new();
        for node in stopped.nodes() {
            let mass = p.prefix_mass(node);
            if num_traits::Zero::is_zero(&mass) {
                continue;
            }
            let prefix = tree.prefix(node).expect("realized");
            let step = node.len();
            let node_idx = dag
                .node_for_prefix(prefix)
                .expect("every realized prefix has a solver node");
            let floor_rat = match &snell[node] {
                Ext::Finite(r) => r.clone(),
                _ => unreachable!("root Snell finite implies finite below"),
            };
            let floor_level = grid
                .ceil_idx(&floor_rat)
                .expect("snell values are grid levels");
            let mut candidates = vec![floor_level];
            for li in (floor_level + 1)..grid.len() {
                if output.surface.value_idx(step, node_idx, li)
                    > output.surface.value_idx(step, node_idx, li - 1)
                {
                    candidates.push(li);
                }
            }
            stops.push((
                node.clone(),
                Stop {
                    mass,
                    step,
                    node_idx,
                    candidates,
                    floor_level,
                },
            ));
        }

        // inf over M: the pointwise-minimal assignment (each stopped node at
        // its Snell floor) is feasible and minimizes every term.
        let inf_value = weighted_sum(stops.iter().map(|(_, s)| {
            (
                s.mass.clone(),
                output
                    .surface
                    .value_idx(s.step, s.node_idx, s.floor_level)
                    .clone(),
            )
        }));
        report.sup_inf = report.sup_inf.max_with(&inf_value);

        // sup over M: enumerate candidate assignments, keeping those whose
        // minimal grid supermartingale fits under m0 at the root.
        let mut assignment: Vec<usize> = stops.iter().map(|(_, s)| s.candidates[0]).collect();
        loop {
            report.assignments_enumerated += 1;
            if report.assignments_enumerated > caps.max_budget_processes as u128 {
                return Err(SolverError::CapExceeded {
                    required: "more stopped-value assignments than the cap".into(),
                    cap: caps.max_budget_processes as u128,
                });
            }
            let stopped_levels: BTreeMap<&BranchHistory, usize> = stops
                .iter()
                .zip(&assignment)
                .map(|((node, _), &li)| (node, li))
                .collect();
            let rho = minimal_root_requirement(&tree, grid, &g, &stopped_levels);
            if rho <= m0_ext {
                let value = weighted_sum(stops.iter().zip(&assignment).map(|((_, s), &li)| {
                    (
                        s.mass.clone(),
                        output.surface.value_idx(s.step, s.node_idx, li).clone(),
                    )
                }));
                report.sup_sup = report.sup_sup.max_with(&value);
            }
            // advance the mixed-radix counter over candidate lists
            let mut pos = 0;
            loop {
                if pos == stops.len() {
                    break;
                }
                let cands = &stops[pos].1.candidates;
                let cur = cands.iter().position(|&c| c == assignment[pos]).unwrap();
                if cur + 1 < cands.len() {
                    assignment[pos] = cands[cur + 1];
                    break;
                }
                assignment[pos] = cands[0];
                pos += 1;
            }
            if pos == stops.len() {
                break;
            }
        }
    }

    report.pass = report.sup_sup == v_root && report.sup_inf == v_root;
    Ok(report)
}

/// The root value of the minimal grid-valued supermartingale that dominates
/// the cost above the stopped set and passes through the assigned levels at
/// the stopped nodes.
fn minimal_root_requirement(
    tree: &RealizedTree,
    grid: &crate::solver::BudgetGrid,
    g: &crate::constraint::ConstraintFunctional,
    stopped_levels: &BTreeMap<&BranchHistory, usize>,
) -> Ext {
    fn eval(
        node: &BranchHistory,
        tree: &RealizedTree,
        grid: &crate::solver::BudgetGrid,
        g: &crate::constraint::ConstraintFunctional,
        stopped_levels: &BTreeMap<&BranchHistory, usize>,
    ) -> Ext {
        if let Some(&li) = stopped_levels.get(node) {
            return Ext::Finite(grid.level(li).clone());
        }
        let prefix = tree.prefix(node).expect("realized");
        let own = g.eval(node.len(), prefix);
        let raw = if node.len() == tree.horizon() {
            own
        } else {
            let p = tree.measure();
            let continuation = weighted_sum(p.child_probs(node).into_iter().map(|(j, q)| {
                let mut child = node.clone();
                child.push(j);
                (q, eval(&child, tree, grid, g, stopped_levels))
            }));
            own.max_with(&continuation)
        };
        match grid.ceil_idx_ext(&raw) {
            Some(idx) => Ext::Finite(grid.level(idx).clone()),
            None => Ext::PosInf,
        }
    }
    eval(&Vec::new(), tree, grid, g, stopped_levels)
}
