//! Shared desk-scale instance catalog for the acceptance suite.
//!
//! The verification family: binary lattices (`J = 2`, fair branches) for
//! horizons 1..=3, one- and two-control variants of an additive walk and a
//! multiplicative lattice, all four indicator constraint families, and a
//! five-member reward family (linear, power, log, region indicator, table).
//! Rewards stay finite on their lattices (log and power run on the positive
//! multiplicative lattice only) so the feasibility frontier is driven by
//! the constraints alone.

use budget_dpp::constraint::{
    g_drawdown, g_floor, g_quantile, g_state, ConstraintFunctional, RewardFunctional, TimeIndexed,
};
use budget_dpp::ext::{rat, rat_int, Rat};
use budget_dpp::lattice::LatticeModel;
use budget_dpp::problems::ConstraintKind;
use budget_dpp::region::Region;
use rand::Rng;
use std::collections::BTreeMap;

pub struct Instance {
    pub name: String,
    pub horizon: usize,
    pub model: LatticeModel,
    pub constraint: ConstraintFunctional,
    pub kind: ConstraintKind,
    pub reward: RewardFunctional,
    /// Target schedule for quantile instances (reachability cross-checks).
    pub targets: Option<TimeIndexed<Region>>,
}

pub fn additive_model(horizon: usize, controls: usize) -> LatticeModel {
    let labels: Vec<String> = ["hold", "push"][..controls]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let drifts: Vec<Vec<Rat>> = [vec![rat_int(0)], vec![rat_int(1)]][..controls].to_vec();
    LatticeModel::additive(
        horizon,
        vec![rat(1, 2), rat(1, 2)],
        labels,
        drifts,
        vec![vec![rat_int(1)], vec![rat_int(-1)]],
        vec![rat_int(2)],
    )
    .unwrap()
}

pub fn multiplicative_model(horizon: usize, controls: usize) -> LatticeModel {
    let labels: Vec<String> = ["risky", "safe"][..controls]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let factors: Vec<Vec<Rat>> =
        [vec![rat_int(2), rat(1, 2)], vec![rat_int(1), rat_int(1)]][..controls].to_vec();
    LatticeModel::multiplicative(
        horizon,
        vec![rat(1, 2), rat(1, 2)],
        labels,
        factors,
        rat_int(1),
    )
    .unwrap()
}

fn additive_constraints() -> Vec<(
    ConstraintKind,
    ConstraintFunctional,
    Option<TimeIndexed<Region>>,
)> {
    let targets = TimeIndexed::Constant(Region::half_space_above(0, rat_int(1)));
    vec![
        (
            ConstraintKind::State,
            g_state(TimeIndexed::Constant(Region::half_space_above(
                0,
                rat_int(0),
            ))),
            None,
        ),
        (
            ConstraintKind::Floor,
            g_floor(TimeIndexed::Constant(rat_int(1))),
            None,
        ),
        (
            ConstraintKind::Drawdown,
            g_drawdown(TimeIndexed::Constant(rat(1, 2)), rat_int(2)).unwrap(),
            None,
        ),
        (
            ConstraintKind::Quantile,
            g_quantile(targets.clone()),
            Some(targets),
        ),
    ]
}

fn multiplicative_constraints() -> Vec<(
    ConstraintKind,
    ConstraintFunctional,
    Option<TimeIndexed<Region>>,
)> {
    let targets = TimeIndexed::Constant(Region::half_space_above(0, rat(1, 2)));
    vec![
        (
            ConstraintKind::State,
            g_state(TimeIndexed::Constant(Region::half_space_above(
                0,
                rat(1, 4),
            ))),
            None,
        ),
        (
            ConstraintKind::Floor,
            g_floor(TimeIndexed::Constant(rat(1, 2))),
            None,
        ),
        (
            ConstraintKind::Drawdown,
            g_drawdown(TimeIndexed::Constant(rat(1, 2)), rat_int(1)).unwrap(),
            None,
        ),
        (
            ConstraintKind::Quantile,
            g_quantile(targets.clone()),
            Some(targets),
        ),
    ]
}

fn additive_rewards() -> Vec<RewardFunctional> {
    let mut table = BTreeMap::new();
    table.insert(vec![rat_int(2)], rat(3, 1));
    table.insert(vec![rat_int(4)], rat(1, 1));
    table.insert(vec![rat_int(0)], rat(2, 1));
    vec![
        RewardFunctional::linear(vec![rat_int(1)]),
        RewardFunctional::indicator(Region::half_space_above(0, rat_int(2))),
        RewardFunctional::table(table, budget_dpp::ext::Ext::zero()),
    ]
}

fn multiplicative_rewards() -> Vec<RewardFunctional> {
    let mut table = BTreeMap::new();
    table.insert(vec![rat_int(1)], rat(1, 1));
    table.insert(vec![rat_int(2)], rat(1, 2));
    table.insert(vec![rat_int(4)], rat(1, 4));
    vec![
        RewardFunctional::linear(vec![rat_int(1)]),
        RewardFunctional::power(rat(1, 2)),
        RewardFunctional::log(),
        RewardFunctional::indicator(Region::half_space_above(0, rat_int(1))),
        RewardFunctional::table(table, budget_dpp::ext::Ext::zero()),
    ]
}

/// Every instance at one horizon.
pub fn suite_for_horizon(horizon: usize) -> Vec<Instance> {
    let mut out = Vec::new();
    for controls in [1usize, 2] {
        for (kind, constraint, targets) in additive_constraints() {
            for reward in additive_rewards() {
                out.push(Instance {
                    name: format!(
                        "add-n{horizon}-a{controls}-{}-{}",
                        kind.as_str(),
                        reward.name()
                    ),
                    horizon,
                    model: additive_model(horizon, controls),
                    constraint: constraint.clone(),
                    kind,
                    reward,
                    targets: targets.clone(),
                });
            }
        }
        for (kind, constraint, targets) in multiplicative_constraints() {
            for reward in multiplicative_rewards() {
                out.push(Instance {
                    name: format!(
                        "mul-n{horizon}-a{controls}-{}-{}",
                        kind.as_str(),
                        reward.name()
                    ),
                    horizon,
                    model: multiplicative_model(horizon, controls),
                    constraint: constraint.clone(),
                    kind,
                    reward,
                    targets: targets.clone(),
                });
            }
        }
    }
    out
}

/// The full criterion suite: horizons 1 through 3.
pub fn criterion_suite() -> Vec<Instance> {
    (1..=3).flat_map(suite_for_horizon).collect()
}

/// The dyadic budget sweep `{j / 2^n : j = 0..=2^n}`.
pub fn dyadic_levels(horizon: usize) -> Vec<Rat> {
    let denom = 1i64 << horizon;
    (0..=denom).map(|j| rat(j, denom)).collect()
}

/// A randomized small instance for the invariant battery: random shape
/// (J in {2, 3}, rational branch probabilities, one or two controls),
/// random dynamics family, random constraint, and a finite reward.
pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let horizon = rng.random_range(1..=3usize);
    let controls = rng.random_range(1..=2usize);
    let probs: Vec<Rat> = match rng.random_range(0..4u8) {
        0 => vec![rat(1, 2), rat(1, 2)],
        1 => vec![rat(1, 4), rat(3, 4)],
        2 => vec![rat(1, 4), rat(1, 4), rat(1, 2)],
        _ => vec![rat(1, 3), rat(1, 3), rat(1, 3)],
    };
    let branches = probs.len();
    let multiplicative = rng.random_bool(0.5);
    let model = if multiplicative {
        let mut factors = Vec::new();
        for c in 0..controls {
            if c == 1 {
                factors.push(vec![rat_int(1); branches]);
            } else {
                let mut row = vec![rat_int(2), rat(1, 2)];
                if branches == 3 {
                    row.push(rat_int(1));
                }
                factors.push(row);
            }
        }
        LatticeModel::multiplicative(
            horizon,
            probs,
            (0..controls).map(|i| format!("c{i}")).collect(),
            factors,
            rat_int(1),
        )
        .unwrap()
    } else {
        let drifts: Vec<Vec<Rat>> = (0..controls).map(|c| vec![rat_int(c as i64)]).collect();
        let mut shocks = vec![vec![rat_int(1)], vec![rat_int(-1)]];
        if branches == 3 {
            shocks.push(vec![rat_int(0)]);
        }
        LatticeModel::additive(
            horizon,
            probs,
            (0..controls).map(|i| format!("c{i}")).collect(),
            drifts,
            shocks,
            vec![rat_int(2)],
        )
        .unwrap()
    };
    let low = if multiplicative {
        rat(1, 4)
    } else {
        rat_int(0)
    };
    let (kind, constraint, targets) = match rng.random_range(0..4u8) {
        0 => (
            ConstraintKind::State,
            g_state(TimeIndexed::Constant(Region::half_space_above(0, low))),
            None,
        ),
        1 => (
            ConstraintKind::Floor,
            g_floor(TimeIndexed::Constant(if multiplicative {
                rat(1, 2)
            } else {
                rat_int(1)
            })),
            None,
        ),
        2 => (
            ConstraintKind::Drawdown,
            g_drawdown(
                TimeIndexed::Constant(rat(rng.random_range(0..=2i64), 2)),
                model.initial_state()[0].clone(),
            )
            .unwrap(),
            None,
        ),
        _ => {
            let t = TimeIndexed::Constant(Region::half_space_above(
                0,
                if multiplicative {
                    rat(1, 2)
                } else {
                    rat_int(1)
                },
            ));
            (ConstraintKind::Quantile, g_quantile(t.clone()), Some(t))
        }
    };
    let reward = match rng.random_range(0..2u8) {
        0 => RewardFunctional::linear(vec![rat_int(1)]),
        _ => RewardFunctional::indicator(Region::half_space_above(0, rat_int(1))),
    };
    Instance {
        name: format!("random-n{horizon}-a{controls}-{}", kind.as_str()),
        horizon,
        model,
        constraint,
        kind,
        reward,
        targets,
    }
}
