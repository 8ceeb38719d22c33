//! Problem-config file format: a JSON schema describing the lattice, the
//! constraint, the reward, the level, and the budget grid.
//!
//! Numbers are written as strings where exactness matters: `"1/2"`,
//! `"0.25"`, and `"3"` all parse to exact rationals (plain JSON numbers are
//! also accepted; finite floats convert exactly). Canonical serialization
//! renders every rational through the same formatter, so
//! parse -> serialize -> parse is the identity on canonical files.

use budget_dpp::constraint::{
    g_drawdown, g_floor, g_quantile, g_state, ConstraintFunctional, RewardFunctional, TimeIndexed,
};
use budget_dpp::ext::{fmt_rat, rat_from_f64, Ext, Rat};
use budget_dpp::lattice::LatticeModel;
use budget_dpp::problems::ConstraintKind;
use budget_dpp::region::Region;
use budget_dpp::solver::{BudgetGrid, GridMode};
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// An exact rational that serializes as a canonical string and deserializes
/// from strings (`"1/2"`, `"0.25"`, `"-3"`) or JSON numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scalar(pub Rat);

impl Serialize for Scalar {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_rat(&self.0))
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::String(s) => {
                parse_rat(s).map(Scalar).map_err(|e| D::Error::custom(e.0))
            }
            serde_json::Value::Number(n) => {
                let f = n
                    .as_f64()
                    .ok_or_else(|| D::Error::custom("non-finite number"))?;
                rat_from_f64(f)
                    .map(Scalar)
                    .ok_or_else(|| D::Error::custom("non-finite number"))
            }
            other => Err(D::Error::custom(format!(
                "expected a rational string or number, got {other}"
            ))),
        }
    }
}

/// Parses `"p/q"`, decimal strings, and integers into exact rationals.
pub fn parse_rat(s: &str) -> Result<Rat, ConfigError> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let num =
            i128::from_str(p.trim()).map_err(|_| ConfigError(format!("bad numerator in {s:?}")))?;
        let den = i128::from_str(q.trim())
            .map_err(|_| ConfigError(format!("bad denominator in {s:?}")))?;
        if den == 0 {
            return err(format!("zero denominator in {s:?}"));
        }
        return Ok(Rat::new(num.into(), den.into()));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let sign = if int_part.trim_start().starts_with('-') {
            -1i128
        } else {
            1
        };
        let int: i128 = if int_part.is_empty() || int_part == "-" {
            0
        } else {
            i128::from_str(int_part).map_err(|_| ConfigError(format!("bad decimal {s:?}")))?
        };
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return err(format!("bad decimal {s:?}"));
        }
        let frac: i128 =
            i128::from_str(frac_part).map_err(|_| ConfigError(format!("bad decimal {s:?}")))?;
        let scale = 10i128.pow(frac_part.len() as u32);
        return Ok(Rat::new((int * scale + sign * frac).into(), scale.into()));
    }
    i128::from_str(s)
        .map(|n| Rat::from_integer(n.into()))
        .map_err(|_| ConfigError(format!("cannot parse {s:?} as a rational")))
}

/// A value for all steps, or one value per step `0..=horizon`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Schedule<T> {
    Constant(T),
    PerStep(Vec<T>),
}

impl<T: Clone> Schedule<T> {
    fn to_time_indexed<U, F: Fn(&T) -> Result<U, ConfigError>>(
        &self,
        horizon: usize,
        convert: F,
    ) -> Result<TimeIndexed<U>, ConfigError> {
        match self {
            Schedule::Constant(v) => Ok(TimeIndexed::Constant(convert(v)?)),
            Schedule::PerStep(vs) => {
                if vs.len() <= horizon {
                    return err(format!(
                        "schedule of length {} does not cover steps 0..={horizon}",
                        vs.len()
                    ));
                }
                Ok(TimeIndexed::PerStep(
                    vs.iter().map(&convert).collect::<Result<_, _>>()?,
                ))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    All,
    Empty,
    HalfSpace {
        axis: usize,
        bound: Scalar,
        side: String,
    },
    Box {
        lower: Vec<Scalar>,
        upper: Vec<Scalar>,
    },
    Ball {
        center: Vec<Scalar>,
        radius: Scalar,
    },
    Union {
        parts: Vec<RegionSpec>,
    },
}

impl RegionSpec {
    pub fn to_region(&self) -> Result<Region, ConfigError> {
        Ok(match self {
            RegionSpec::All => Region::All,
            RegionSpec::Empty => Region::Empty,
            RegionSpec::HalfSpace { axis, bound, side } => match side.as_str() {
                "above" => Region::half_space_above(*axis, bound.0.clone()),
                "below" => Region::half_space_below(*axis, bound.0.clone()),
                other => {
                    return err(format!(
                        "half-space side must be above/below, got {other:?}"
                    ))
                }
            },
            RegionSpec::Box { lower, upper } => Region::Box {
                lower: lower.iter().map(|s| s.0.clone()).collect(),
                upper: upper.iter().map(|s| s.0.clone()).collect(),
            },
            RegionSpec::Ball { center, radius } => Region::Ball {
                center: center.iter().map(|s| s.0.clone()).collect(),
                radius: radius.0.clone(),
            },
            RegionSpec::Union { parts } => Region::Union(
                parts
                    .iter()
                    .map(|p| p.to_region())
                    .collect::<Result<_, _>>()?,
            ),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsSpec {
    Additive {
        drifts: Vec<Vec<Scalar>>,
        shocks: Vec<Vec<Scalar>>,
    },
    Multiplicative {
        factors: Vec<Vec<Scalar>>,
    },
    Table {
        entries: Vec<TableEntry>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub step: usize,
    pub state: Vec<Scalar>,
    pub control: usize,
    pub branch: usize,
    pub next: Vec<Scalar>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub horizon: usize,
    pub branch_probs: Vec<Scalar>,
    pub controls: Vec<String>,
    pub dynamics: DynamicsSpec,
    pub initial_state: Vec<Scalar>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    State { regions: Schedule<RegionSpec> },
    Floor { floor: Schedule<Scalar> },
    Drawdown { alpha: Schedule<Scalar> },
    Quantile { targets: Schedule<RegionSpec> },
    Target { targets: Schedule<RegionSpec> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardSpec {
    Linear {
        weights: Vec<Scalar>,
    },
    Power {
        exponent: Scalar,
    },
    Log,
    Indicator {
        region: RegionSpec,
    },
    Table {
        entries: Vec<RewardTableEntry>,
        default: Scalar,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RewardTableEntry {
    pub state: Vec<Scalar>,
    pub value: Scalar,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LevelSpec {
    /// Budget level on the constraint cost.
    M(Scalar),
    /// Required success probability (quantile problems).
    Probability(Scalar),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum GridSpec {
    Named(String),
    Levels { levels: Vec<Scalar> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema_version: u32,
    pub lattice: LatticeSpec,
    pub constraint: ConstraintSpec,
    pub reward: RewardSpec,
    pub level: LevelSpec,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
}

fn default_grid() -> GridSpec {
    GridSpec::Named("auto".into())
}

/// A fully resolved instance.
pub struct LoadedProblem {
    pub config: ProblemConfig,
    pub model: LatticeModel,
    pub constraint: ConstraintFunctional,
    pub reward: RewardFunctional,
    pub kind: ConstraintKind,
    /// Budget level on the constraint cost (after the quantile transform).
    pub budget: Rat,
    /// The user-facing level as written in the config.
    pub native_level: Rat,
    /// Explicit grid, when the config pins one.
    pub grid: Option<BudgetGrid>,
    /// Target schedule for reachability runs.
    pub targets: Option<TimeIndexed<Region>>,
}

pub fn load_str(text: &str) -> Result<LoadedProblem, ConfigError> {
    let config: ProblemConfig =
        serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
    resolve(config)
}

pub fn load_path(path: &std::path::Path) -> Result<LoadedProblem, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    load_str(&text)
}

pub fn resolve(config: ProblemConfig) -> Result<LoadedProblem, ConfigError> {
    if config.schema_version != 1 {
        return err(format!(
            "unsupported schema_version {}",
            config.schema_version
        ));
    }
    let lat = &config.lattice;
    if lat.horizon == 0 {
        return err("horizon must be at least 1");
    }
    let probs: Vec<Rat> = lat.branch_probs.iter().map(|s| s.0.clone()).collect();
    let x0: Vec<Rat> = lat.initial_state.iter().map(|s| s.0.clone()).collect();
    let model = match &lat.dynamics {
        DynamicsSpec::Additive { drifts, shocks } => LatticeModel::additive(
            lat.horizon,
            probs,
            lat.controls.clone(),
            drifts
                .iter()
                .map(|d| d.iter().map(|s| s.0.clone()).collect())
                .collect(),
            shocks
                .iter()
                .map(|d| d.iter().map(|s| s.0.clone()).collect())
                .collect(),
            x0,
        ),
        DynamicsSpec::Multiplicative { factors } => {
            if x0.len() != 1 {
                return err("multiplicative dynamics need one-dimensional states");
            }
            LatticeModel::multiplicative(
                lat.horizon,
                probs,
                lat.controls.clone(),
                factors
                    .iter()
                    .map(|row| row.iter().map(|s| s.0.clone()).collect())
                    .collect(),
                x0[0].clone(),
            )
        }
        DynamicsSpec::Table { entries } => {
            let mut table = BTreeMap::new();
            for e in entries {
                table.insert(
                    (
                        e.step,
                        e.state.iter().map(|s| s.0.clone()).collect::<Vec<_>>(),
                        e.control,
                        e.branch,
                    ),
                    e.next.iter().map(|s| s.0.clone()).collect::<Vec<_>>(),
                );
            }
            LatticeModel::from_table(lat.horizon, probs, lat.controls.clone(), table, x0)
        }
    }
    .map_err(|e| ConfigError(e.to_string()))?;

    let (kind, constraint, targets) = match &config.constraint {
        ConstraintSpec::State { regions } => {
            let schedule = regions.to_time_indexed(lat.horizon, RegionSpec::to_region)?;
            if !schedule.at(0).contains(model.initial_state(), true) {
                return err("initial state lies outside the step-0 region");
            }
            (ConstraintKind::State, g_state(schedule), None)
        }
        ConstraintSpec::Floor { floor } => {
            if model.dim() != 1 {
                return err("floor constraints need one-dimensional states");
            }
            let schedule = floor.to_time_indexed(lat.horizon, |s| Ok(s.0.clone()))?;
            if &model.initial_state()[0] < schedule.at(0) {
                return err("initial state lies below the step-0 floor");
            }
            (ConstraintKind::Floor, g_floor(schedule), None)
        }
        ConstraintSpec::Drawdown { alpha } => {
            if model.dim() != 1 {
                return err("drawdown constraints need one-dimensional states");
            }
            let schedule = alpha.to_time_indexed(lat.horizon, |s| Ok(s.0.clone()))?;
            let g = g_drawdown(schedule, model.initial_state()[0].clone())
                .map_err(|e| ConfigError(e.to_string()))?;
            (ConstraintKind::Drawdown, g, None)
        }
        ConstraintSpec::Quantile { targets } | ConstraintSpec::Target { targets } => {
            let schedule = targets.to_time_indexed(lat.horizon, RegionSpec::to_region)?;
            let kind = if matches!(config.constraint, ConstraintSpec::Target { .. }) {
                ConstraintKind::Target
            } else {
                ConstraintKind::Quantile
            };
            (kind, g_quantile(schedule.clone()), Some(schedule))
        }
    };

    let reward = match &config.reward {
        RewardSpec::Linear { weights } => {
            if weights.len() != model.dim() {
                return err("linear reward weights must match the state dimension");
            }
            RewardFunctional::linear(weights.iter().map(|s| s.0.clone()).collect())
        }
        RewardSpec::Power { exponent } => RewardFunctional::power(exponent.0.clone()),
        RewardSpec::Log => RewardFunctional::log(),
        RewardSpec::Indicator { region } => RewardFunctional::indicator(region.to_region()?),
        RewardSpec::Table { entries, default } => {
            let mut map = BTreeMap::new();
            for e in entries {
                map.insert(
                    e.state.iter().map(|s| s.0.clone()).collect::<Vec<_>>(),
                    e.value.0.clone(),
                );
            }
            RewardFunctional::table(map, Ext::Finite(default.0.clone()))
        }
    };

    let (budget, native_level) = match &config.level {
        LevelSpec::M(m) => {
            if matches!(kind, ConstraintKind::Target) && !m.0.is_zero() {
                return err("target problems run at budget level 0");
            }
            (m.0.clone(), m.0.clone())
        }
        LevelSpec::Probability(p) => {
            if !matches!(kind, ConstraintKind::Quantile | ConstraintKind::Target) {
                return err("probability levels apply to quantile and target constraints only");
            }
            let budget = budget_dpp::constraint::quantile_level_transform(&p.0)
                .map_err(|e| ConfigError(e.to_string()))?;
            (budget, p.0.clone())
        }
    };

    let grid = match &config.grid {
        GridSpec::Named(name) if name == "auto" => None,
        GridSpec::Named(other) => return err(format!("unknown grid {other:?} (want \"auto\")")),
        GridSpec::Levels { levels } => Some(
            BudgetGrid::from_levels(
                levels.iter().map(|s| s.0.clone()).collect(),
                GridMode::Restricted,
            )
            .map_err(|e| ConfigError(e.to_string()))?,
        ),
    };

    Ok(LoadedProblem {
        config,
        model,
        constraint,
        reward,
        kind,
        budget,
        native_level,
        grid,
        targets,
    })
}

/// Canonical JSON rendering (pretty, stable field order, canonical
/// rationals).
pub fn canonical_json(config: &ProblemConfig) -> String {
    let mut out = serde_json::to_string_pretty(config).expect("config serializes");
    out.push('\n');
    out
}

/// Stable 64-bit FNV-1a hash of the canonical form, for report headers.
pub fn instance_hash(config: &ProblemConfig) -> String {
    let canon = canonical_json(config);
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in canon.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use budget_dpp::ext::rat;

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rat("1/2").unwrap(), rat(1, 2));
        assert_eq!(parse_rat("0.25").unwrap(), rat(1, 4));
        assert_eq!(parse_rat("-0.5").unwrap(), rat(-1, 2));
        assert_eq!(parse_rat("3").unwrap(), rat(3, 1));
        assert_eq!(parse_rat("-7/4").unwrap(), rat(-7, 4));
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("abc").is_err());
    }

    #[test]
    fn minimal_config_round_trips() {
        let text = r#"{
            "schema_version": 1,
            "lattice": {
                "horizon": 2,
                "branch_probs": ["1/2", "1/2"],
                "controls": ["risky", "safe"],
                "dynamics": {"family": "multiplicative", "factors": [["2", "1/2"], ["1", "1"]]},
                "initial_state": ["1"]
            },
            "constraint": {"kind": "quantile", "targets": {"shape": "half_space", "axis": 0, "bound": "1/2", "side": "above"}},
            "reward": {"family": "linear", "weights": ["1"]},
            "level": {"probability": "3/4"},
            "grid": "auto"
        }"#;
        let loaded = load_str(text).unwrap();
        assert_eq!(loaded.budget, rat(1, 4));
        let canon = canonical_json(&loaded.config);
        let reloaded = load_str(&canon).unwrap();
        assert_eq!(canonical_json(&reloaded.config), canon);
        assert_eq!(
            instance_hash(&loaded.config),
            instance_hash(&reloaded.config)
        );
    }

    #[test]
    fn rejects_malformed_configs() {
        assert!(load_str("{").is_err());
        assert!(load_str("{\"schema_version\": 2}").is_err());
    }
}
