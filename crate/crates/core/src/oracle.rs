//! Ground truth by brute force.
//!
//! Enumerates every path-dependent strategy on the tree (full prefixes, not
//! summaries — the oracle must not inherit the reduction it is meant to
//! check), evaluates induced measures directly, and maximizes expected
//! reward subject to the per-time expectation constraints. Also hosts the
//! hard-pathwise reference DP and the sup-sup/sup-inf report wrapper.

use crate::constraint::{ConstraintFunctional, RewardFunctional};
use crate::ext::{weighted_sum, Ext, Rat};
use crate::lattice::{
    BranchHistory, Control, LatticeError, LatticeModel, PathPrefix, RealizedTree, StoppingRule,
    Strategy,
};
use crate::solver::{dpp_verify, LatticeDag, NodeMode, SolveOutput, SolverError};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("enumeration budget exceeded: would need {required} candidates, cap is {cap}")]
    CapExceeded { required: String, cap: u128 },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl OracleError {
    pub fn into_solver_error(self) -> SolverError {
        match self {
            OracleError::CapExceeded { required, cap } => {
                SolverError::CapExceeded { required, cap }
            }
            OracleError::Lattice(e) => SolverError::Lattice(e),
            OracleError::Solver(e) => e,
        }
    }
}

/// Enumeration caps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_strategies: u128,
    pub max_budget_processes: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_strategies: 1_000_000,
            max_budget_processes: 2_000_000,
        }
    }
}

/// Lazily yields every path-dependent strategy on the sub-tree of a root,
/// exactly once, in a fixed order (decision nodes by step then history;
/// controls in declared order).
#[derive(Debug)]
pub struct StrategyEnumeration {
    nodes: Vec<(usize, BranchHistory)>,
    n_controls: usize,
    assignment: Vec<usize>,
    done: bool,
}

impl Iterator for StrategyEnumeration {
    type Item = Strategy;

    fn next(&mut self) -> Option<Strategy> {
        if self.done {
            return None;
        }
        let map: BTreeMap<(usize, BranchHistory), Control> = self
            .nodes
            .iter()
            .zip(&self.assignment)
            .map(|((step, hist), &a)| ((*step, hist.clone()), Control(a)))
            .collect();
        // advance the mixed-radix counter
        let mut pos = 0;
        loop {
            if pos == self.assignment.len() {
                self.done = true;
                break;
            }
            if self.assignment[pos] + 1 < self.n_controls {
                self.assignment[pos] += 1;
                break;
            }
            self.assignment[pos] = 0;
            pos += 1;
        }
        Some(Strategy::by_prefix(map))
    }
}

/// Prepares the exhaustive strategy enumeration below `root`, failing with
/// the exact required count when it exceeds the cap.
pub fn enumerate_strategies(
    model: &LatticeModel,
    root: &PathPrefix,
    budget: &OracleBudget,
) -> Result<StrategyEnumeration, OracleError> {
    let n_controls = model.control_count();
    let mut nodes: Vec<(usize, BranchHistory)> = Vec::new();
    let mut frontier = vec![root.branches().clone()];
    for step in root.step()..model.horizon() {
        let mut next = Vec::with_capacity(frontier.len() * model.branch_count());
        for hist in frontier {
            nodes.push((step, hist.clone()));
            for j in 0..model.branch_count() {
                let mut child = hist.clone();
                child.push(j);
                next.push(child);
            }
        }
        frontier = next;
    }
    let mut required: u128 = 1;
    for _ in 0..nodes.len() {
        required = match required.checked_mul(n_controls as u128) {
            Some(r) if r <= budget.max_strategies => r,
            _ => {
                return Err(OracleError::CapExceeded {
                    required: format!("{}^{}", n_controls, nodes.len()),
                    cap: budget.max_strategies,
                })
            }
        };
    }
    Ok(StrategyEnumeration {
        assignment: vec![0; nodes.len()],
        nodes,
        n_controls,
        done: false,
    })
}

/// Everything the constraint and reward see of one strategy: the realized
/// per-time expected costs and the expected reward.
#[derive(Debug, Clone)]
pub struct StrategyProfile {
    pub strategy: Strategy,
    /// `E[g(s)]` for `s` from the root step to the horizon.
    pub constraint_curve: Vec<Ext>,
    /// Largest entry of the curve.
    pub worst_constraint: Ext,
    pub reward: Ext,
}

/// Evaluates every strategy once. Sweeping constraint levels against these
/// profiles avoids re-enumerating per level.
pub fn strategy_profiles(
    model: &LatticeModel,
    f: &RewardFunctional,
    g: &ConstraintFunctional,
    root: &PathPrefix,
    budget: &OracleBudget,
) -> Result<Vec<StrategyProfile>, OracleError> {
    let mut profiles = Vec::new();
    for strategy in enumerate_strategies(model, root, budget)? {
        let tree = RealizedTree::new(model, &strategy, root)?;
        let p = tree.measure();
        let mut curve = Vec::with_capacity(model.horizon() + 1 - root.step());
        for s in root.step()..=model.horizon() {
            let eg = weighted_sum(p.support_at_step(s).map(|(node, mass)| {
                let prefix = tree.prefix(node).expect("supported node realized");
                (mass.clone(), g.eval(s, prefix))
            }));
            curve.push(eg);
        }
        let reward = weighted_sum(p.support_leaves().map(|(leaf, mass)| {
            let prefix = tree.prefix(leaf).expect("leaf realized");
            (mass.clone(), f.eval(prefix))
        }));
        let worst = curve.iter().cloned().max().unwrap_or(Ext::NegInf);
        profiles.push(StrategyProfile {
            strategy,
            constraint_curve: curve,
            worst_constraint: worst,
            reward,
        });
    }
    Ok(profiles)
}

/// Brute-force value of one instance.
#[derive(Debug, Clone)]
pub struct OracleReport {
    /// `sup E[f]` over strategies meeting every per-time constraint
    /// (`-inf` when none do).
    pub value: Ext,
    /// First enumerated maximizer, if feasible at all.
    pub best: Option<Strategy>,
    pub feasible: bool,
    pub strategies_total: usize,
    pub strategies_feasible: usize,
}

/// Maximizes expected reward over every strategy whose induced measure
/// satisfies `E[g(s)] <= m` at every grid time from the root step to the
/// horizon. Deterministic: identical inputs yield the identical argmax.
pub fn oracle_value(
    model: &LatticeModel,
    f: &RewardFunctional,
    g: &ConstraintFunctional,
    m: &Rat,
    root: &PathPrefix,
    budget: &OracleBudget,
) -> Result<OracleReport, OracleError> {
    let profiles = strategy_profiles(model, f, g, root, budget)?;
    Ok(oracle_value_from_profiles(&profiles, m))
}

/// Filters and maximizes pre-computed profiles at a level `m`.
pub fn oracle_value_from_profiles(profiles: &[StrategyProfile], m: &Rat) -> OracleReport {
    let level = Ext::Finite(m.clone());
    let mut report = OracleReport {
        value: Ext::NegInf,
        best: None,
        feasible: false,
        strategies_total: profiles.len(),
        strategies_feasible: 0,
    };
    for profile in profiles {
        if profile.worst_constraint > level {
            continue;
        }
        report.strategies_feasible += 1;
        if !report.feasible || profile.reward > report.value {
            report.value = profile.reward.clone();
            report.best = Some(profile.strategy.clone());
        }
        report.feasible = true;
    }
    report
}

/// The smallest level at which any strategy is feasible:
/// `min over strategies of max over grid times of E[g(s)]`.
pub fn oracle_min_max(profiles: &[StrategyProfile]) -> Ext {
    profiles
        .iter()
        .map(|p| p.worst_constraint.clone())
        .min()
        .unwrap_or(Ext::NegInf)
}

/// Reference DP for hard pathwise constraints: a node is admissible only
/// while its cost is nonpositive, and inadmissible nodes are worth `-inf`.
/// Independent of the budget machinery; used to cross-check the
/// level-zero collapse of expectation constraints.
pub fn hard_pathwise_dp(
    model: &LatticeModel,
    f: &RewardFunctional,
    g: &ConstraintFunctional,
) -> Ext {
    let mode = match f.terminal_form() {
        Some(_) => NodeMode::Merged,
        None => NodeMode::PathExpanded,
    };
    let dag = LatticeDag::build(model, g, mode);
    let horizon = dag.horizon();
    let probs = dag.branch_probs().to_vec();
    let mut values: Vec<Ext> = dag
        .layer(horizon)
        .iter()
        .map(|node| {
            if node.g > Ext::zero() {
                Ext::NegInf
            } else {
                match f.terminal_form() {
                    Some(t) => t(node.prefix.last_state()),
                    None => f.eval(&node.prefix),
                }
            }
        })
        .collect();
    for k in (0..horizon).rev() {
        values = dag
            .layer(k)
            .iter()
            .map(|node| {
                if node.g > Ext::zero() {
                    return Ext::NegInf;
                }
                node.children
                    .iter()
                    .map(|kids| {
                        weighted_sum(
                            kids.iter()
                                .zip(&probs)
                                .map(|(&c, p)| (p.clone(), values[c].clone())),
                        )
                    })
                    .max()
                    .unwrap_or(Ext::NegInf)
            })
            .collect();
    }
    values[0].clone()
}

/// Joint verification record for one instance at one level: the solver
/// value, the brute-force value, and both DPP lines at a stopping rule.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub dp_value: Ext,
    pub oracle_value: Ext,
    pub sup_sup: Ext,
    pub sup_inf: Ext,
    /// Both DPP lines equal the solver value exactly.
    pub pass: bool,
    /// Brute force agrees with the solver value exactly.
    pub oracle_matches: bool,
    pub feasible_without_budget_process: usize,
}

/// Runs the solver-versus-enumeration battery: brute-force value, and
/// sup-sup / sup-inf over enumerated strategies and grid budget processes
/// at the stopping rule.
pub fn supinf_supsup_check(
    model: &LatticeModel,
    f: &RewardFunctional,
    g: &ConstraintFunctional,
    m: &Rat,
    tau: &StoppingRule,
    output: &SolveOutput,
    budget: &OracleBudget,
) -> Result<CheckReport, OracleError> {
    let report = dpp_verify(output, model, tau, m, budget)?;
    let oracle = oracle_value(model, f, g, m, &model.root(), budget)?;
    Ok(CheckReport {
        dp_value: report.v_root.clone(),
        oracle_value: oracle.value.clone(),
        sup_sup: report.sup_sup.clone(),
        sup_inf: report.sup_inf.clone(),
        pass: report.pass,
        oracle_matches: oracle.value == report.v_root,
        feasible_without_budget_process: report.feasible_without_budget_process,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::{rat, rat_int};

    fn two_control_model(horizon: usize) -> LatticeModel {
        LatticeModel::additive(
            horizon,
            vec![rat(1, 2), rat(1, 2)],
            vec!["hold".into(), "push".into()],
            vec![vec![rat_int(0)], vec![rat_int(1)]],
            vec![vec![rat_int(1)], vec![rat_int(-1)]],
            vec![rat_int(0)],
        )
        .unwrap()
    }

    #[test]
    fn strategy_counts() {
        let budget = OracleBudget::default();
        let m1 = two_control_model(1);
        assert_eq!(
            enumerate_strategies(&m1, &m1.root(), &budget)
                .unwrap()
                .count(),
            2
        );
        let m2 = two_control_model(2);
        assert_eq!(
            enumerate_strategies(&m2, &m2.root(), &budget)
                .unwrap()
                .count(),
            8
        );
        let single = LatticeModel::additive(
            2,
            vec![rat(1, 2), rat(1, 2)],
            vec!["only".into()],
            vec![vec![rat_int(0)]],
            vec![vec![rat_int(1)], vec![rat_int(-1)]],
            vec![rat_int(0)],
        )
        .unwrap();
        assert_eq!(
            enumerate_strategies(&single, &single.root(), &budget)
                .unwrap()
                .count(),
            1
        );
    }

    #[test]
    fn cap_is_exact() {
        let m = two_control_model(3); // 2^7 strategies
        let tight = OracleBudget {
            max_strategies: 127,
            max_budget_processes: 1,
        };
        match enumerate_strategies(&m, &m.root(), &tight) {
            Err(OracleError::CapExceeded { required, .. }) => {
                assert_eq!(required, "2^7");
            }
            other => panic!("expected cap error, got {other:?}"),
        }
        let exact = OracleBudget {
            max_strategies: 128,
            max_budget_processes: 1,
        };
        assert!(enumerate_strategies(&m, &m.root(), &exact).is_ok());
    }

    #[test]
    fn unconstrained_oracle_is_plain_max() {
        let model = two_control_model(2);
        let f = RewardFunctional::linear(vec![rat_int(1)]);
        let g = ConstraintFunctional::none();
        let report = oracle_value(
            &model,
            &f,
            &g,
            &rat(0, 1),
            &model.root(),
            &OracleBudget::default(),
        )
        .unwrap();
        // always pushing adds drift 1 per step: E[x_2] = 2
        assert_eq!(report.value, Ext::from_int(2));
        assert!(report.feasible);
    }

    #[test]
    fn infeasible_level_is_neg_inf() {
        let model = two_control_model(1);
        let f = RewardFunctional::linear(vec![rat_int(1)]);
        // cost 1 whenever the current state is below 10: nothing reaches 10
        let g = crate::constraint::g_quantile(crate::constraint::TimeIndexed::Constant(
            crate::region::Region::half_space_above(0, rat_int(10)),
        ));
        let report = oracle_value(
            &model,
            &f,
            &g,
            &rat(1, 4),
            &model.root(),
            &OracleBudget::default(),
        )
        .unwrap();
        assert_eq!(report.value, Ext::NegInf);
        assert!(!report.feasible);
        assert!(report.best.is_none());
    }

    #[test]
    fn determinism_of_argmax() {
        let model = two_control_model(2);
        let f = RewardFunctional::linear(vec![rat_int(1)]);
        let g = ConstraintFunctional::none();
        let budget = OracleBudget::default();
        let a = oracle_value(&model, &f, &g, &rat(1, 1), &model.root(), &budget).unwrap();
        let b = oracle_value(&model, &f, &g, &rat(1, 1), &model.root(), &budget).unwrap();
        let ta = RealizedTree::new(&model, &a.best.unwrap(), &model.root()).unwrap();
        let tb = RealizedTree::new(&model, &b.best.unwrap(), &model.root()).unwrap();
        assert_eq!(ta.measure(), tb.measure());
    }
}
