//! Constraint functionals and reward functionals.
//!
//! A [`ConstraintFunctional`] is the per-step cost `g(s, prefix)` whose
//! running expectation the solver budgets, together with a finite summary
//! reduction: an initial summary, a fold over new states, and an evaluation
//! that must agree with the direct prefix evaluation everywhere. The four
//! built-in families:
//!
//! - `g_state`: 1 once the path has ever left the (open) region schedule;
//! - `g_floor`: 1 once the path has ever dipped below the floor schedule;
//! - `g_drawdown`: 1 once the path has dropped below `alpha(t)` times its
//!   running maximum;
//! - `g_quantile`: 1 whenever the *current* state is outside the target
//!   (not absorbing).
//!
//! The first three are absorbing: `s -> g(s, w)` is nondecreasing along any
//! fixed path. Violation histories are therefore summarized by a flag (plus
//! the running maximum for drawdowns), and quantile constraints need no
//! history at all.

use crate::ext::{Ext, Rat};
use crate::lattice::{PathPrefix, State};
use crate::region::{Region, RegionError};
use num_traits::{One, Signed, Zero};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("alpha must take values in [0, 1]")]
    AlphaOutOfRange,
    #[error("drawdown start must be nonnegative")]
    NegativeStart,
    #[error("probability level must lie in [0, 1]")]
    ProbabilityOutOfRange,
    #[error("schedule of length {len} does not cover steps 0..={horizon}")]
    ScheduleTooShort { len: usize, horizon: usize },
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error("summary reduction disagrees with direct evaluation at step {step}, node {node:?}")]
    SummaryMismatch { step: usize, node: Vec<usize> },
}

/// A per-step schedule: one value for all steps, or one value per step.
#[derive(Debug, Clone)]
pub enum TimeIndexed<T> {
    Constant(T),
    PerStep(Vec<T>),
}

impl<T> TimeIndexed<T> {
    pub fn at(&self, step: usize) -> &T {
        match self {
            TimeIndexed::Constant(v) => v,
            TimeIndexed::PerStep(vs) => &vs[step],
        }
    }

    /// Checks the schedule covers steps `0..=horizon`.
    pub fn validate_len(&self, horizon: usize) -> Result<(), ConstraintError> {
        match self {
            TimeIndexed::Constant(_) => Ok(()),
            TimeIndexed::PerStep(vs) if vs.len() > horizon => Ok(()),
            TimeIndexed::PerStep(vs) => Err(ConstraintError::ScheduleTooShort {
                len: vs.len(),
                horizon,
            }),
        }
    }
}

/// A finite summary of the constraint-relevant history, as an ordered
/// rational vector (flags encoded 0/1). Summaries key solver nodes, so
/// equality must be exact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Summary(pub Vec<Rat>);

impl Summary {
    pub fn empty() -> Self {
        Summary(Vec::new())
    }

    fn flag(violated: bool) -> Self {
        Summary(vec![if violated { Rat::one() } else { Rat::zero() }])
    }

    fn flag_is_set(&self) -> bool {
        self.0.first().map(|v| v.is_one()).unwrap_or(false)
    }
}

type PrefixEvalFn = dyn Fn(usize, &PathPrefix) -> Ext + Send + Sync;
type SummaryInitFn = dyn Fn(&State) -> Summary + Send + Sync;
type SummaryUpdateFn = dyn Fn(usize, &Summary, &State) -> Summary + Send + Sync;
type SummaryEvalFn = dyn Fn(usize, &Summary, &State) -> Ext + Send + Sync;

/// The constraint cost `g(s, .)` with its summary reduction.
#[derive(Clone)]
pub struct ConstraintFunctional {
    name: String,
    prefix_eval: Arc<PrefixEvalFn>,
    summary_init: Arc<SummaryInitFn>,
    summary_update: Arc<SummaryUpdateFn>,
    summary_eval: Arc<SummaryEvalFn>,
}

impl ConstraintFunctional {
    /// Assembles a custom constraint. The summary reduction must agree with
    /// the direct evaluation; see [`ConstraintFunctional::validate_summary`].
    pub fn custom<E, I, U, V>(name: &str, prefix_eval: E, init: I, update: U, eval: V) -> Self
    where
        E: Fn(usize, &PathPrefix) -> Ext + Send + Sync + 'static,
        I: Fn(&State) -> Summary + Send + Sync + 'static,
        U: Fn(usize, &Summary, &State) -> Summary + Send + Sync + 'static,
        V: Fn(usize, &Summary, &State) -> Ext + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            prefix_eval: Arc::new(prefix_eval),
            summary_init: Arc::new(init),
            summary_update: Arc::new(update),
            summary_eval: Arc::new(eval),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Direct evaluation of `g(step, prefix)` on the observed history.
    /// The prefix must reach exactly `step`, which makes measurability in
    /// the history structural.
    pub fn eval(&self, step: usize, prefix: &PathPrefix) -> Ext {
        debug_assert_eq!(step, prefix.step());
        (self.prefix_eval)(step, prefix)
    }

    pub fn summary_init(&self, x0: &State) -> Summary {
        (self.summary_init)(x0)
    }

    /// Folds the summary forward when the state at `step` is observed.
    pub fn summary_update(&self, step: usize, summary: &Summary, state: &State) -> Summary {
        (self.summary_update)(step, summary, state)
    }

    /// Evaluates `g` from the summary and current state alone.
    pub fn summary_eval(&self, step: usize, summary: &Summary, state: &State) -> Ext {
        (self.summary_eval)(step, summary, state)
    }

    /// The summary obtained by folding over a whole prefix.
    pub fn summary_of_prefix(&self, prefix: &PathPrefix) -> Summary {
        let mut s = self.summary_init(prefix.state_at(0));
        for k in 1..=prefix.step() {
            s = self.summary_update(k, &s, prefix.state_at(k));
        }
        s
    }

    /// Default enumeration depth for summary validation.
    pub const DEFAULT_VALIDATION_DEPTH: usize = 4;

    /// [`ConstraintFunctional::validate_summary`] at the default depth.
    pub fn validate_summary_default(
        &self,
        model: &crate::lattice::LatticeModel,
    ) -> Result<(), ConstraintError> {
        self.validate_summary(model, Self::DEFAULT_VALIDATION_DEPTH)
    }

    /// Checks by exhaustive enumeration (over every control and branch
    /// choice, so over a superset of every strategy's reachable prefixes)
    /// that the summary reduction reproduces the direct evaluation, up to
    /// `depth` steps.
    pub fn validate_summary(
        &self,
        model: &crate::lattice::LatticeModel,
        depth: usize,
    ) -> Result<(), ConstraintError> {
        let depth = depth.min(model.horizon());
        let mut frontier = vec![model.root()];
        for step in 0..=depth {
            for prefix in &frontier {
                let direct = self.eval(step, prefix);
                let folded = self.summary_of_prefix(prefix);
                let via_summary = self.summary_eval(step, &folded, prefix.last_state());
                if direct != via_summary {
                    return Err(ConstraintError::SummaryMismatch {
                        step,
                        node: prefix.branches().clone(),
                    });
                }
            }
            if step == depth {
                break;
            }
            let mut next = Vec::new();
            for prefix in &frontier {
                for a in model.controls() {
                    for j in 0..model.branch_count() {
                        let state = model.step(step, prefix.last_state(), a, j);
                        next.push(prefix.extend(j, state));
                    }
                }
            }
            frontier = next;
        }
        Ok(())
    }

    /// The identically-zero constraint (everything is admissible).
    pub fn none() -> Self {
        Self::custom(
            "none",
            |_, _| Ext::zero(),
            |_| Summary::empty(),
            |_, s, _| s.clone(),
            |_, _, _| Ext::zero(),
        )
    }
}

impl std::fmt::Debug for ConstraintFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ConstraintFunctional({})", self.name)
    }
}

/// Indicator of having left the open region schedule at any grid time up to
/// `s`. Violations are absorbing.
pub fn g_state(regions: TimeIndexed<Region>) -> ConstraintFunctional {
    let regions = Arc::new(regions);
    let r_eval = regions.clone();
    let r_init = regions.clone();
    let r_update = regions.clone();
    ConstraintFunctional::custom(
        "state",
        move |step, prefix| {
            let violated = (0..=step).any(|t| !r_eval.at(t).contains(prefix.state_at(t), true));
            indicator(violated)
        },
        move |x0| Summary::flag(!r_init.at(0).contains(x0, true)),
        move |step, summary, state| {
            Summary::flag(summary.flag_is_set() || !r_update.at(step).contains(state, true))
        },
        |_, summary, _| indicator(summary.flag_is_set()),
    )
}

/// Greatest margin certificate for the state constraint: the smallest
/// distance, over grid times `t <= s`, from the path to the complement of
/// the region. Positive exactly when `g_state` evaluates to 0.
pub fn state_margin(
    regions: &TimeIndexed<Region>,
    s: usize,
    prefix: &PathPrefix,
) -> Result<f64, ConstraintError> {
    let mut margin = f64::INFINITY;
    for t in 0..=s {
        let d = regions.at(t).distance_to_complement(prefix.state_at(t))?;
        margin = margin.min(d);
    }
    Ok(margin)
}

/// Indicator of having dipped below the floor schedule (closed inequality:
/// touching the floor is allowed). One-dimensional paths; absorbing.
pub fn g_floor(floor: TimeIndexed<Rat>) -> ConstraintFunctional {
    let floor = Arc::new(floor);
    let f_eval = floor.clone();
    let f_init = floor.clone();
    let f_update = floor.clone();
    ConstraintFunctional::custom(
        "floor",
        move |step, prefix| {
            let violated = (0..=step).any(|t| prefix.state_at(t)[0] < *f_eval.at(t));
            indicator(violated)
        },
        move |x0| Summary::flag(x0[0] < *f_init.at(0)),
        move |step, summary, state| {
            Summary::flag(summary.flag_is_set() || state[0] < *f_update.at(step))
        },
        |_, summary, _| indicator(summary.flag_is_set()),
    )
}

/// Indicator of a drawdown breach: the path must stay at or above
/// `alpha(t)` times its running maximum at every grid time. The summary is
/// the running maximum plus the absorbing flag. Start values must be
/// nonnegative and `alpha` must take values in `[0, 1]`.
pub fn g_drawdown(
    alpha: TimeIndexed<Rat>,
    start_x: Rat,
) -> Result<ConstraintFunctional, ConstraintError> {
    if start_x.is_negative() {
        return Err(ConstraintError::NegativeStart);
    }
    let check = |a: &Rat| !(a.is_negative() || a > &Rat::one());
    match &alpha {
        TimeIndexed::Constant(a) if !check(a) => return Err(ConstraintError::AlphaOutOfRange),
        TimeIndexed::PerStep(vs) if !vs.iter().all(check) => {
            return Err(ConstraintError::AlphaOutOfRange)
        }
        _ => {}
    }
    let alpha = Arc::new(alpha);
    let a_eval = alpha.clone();
    let a_init = alpha.clone();
    let a_update = alpha.clone();
    Ok(ConstraintFunctional::custom(
        "drawdown",
        move |step, prefix| {
            let mut running_max = prefix.state_at(0)[0].clone();
            let mut violated = prefix.state_at(0)[0] < a_eval.at(0) * &running_max;
            for t in 1..=step {
                let x = &prefix.state_at(t)[0];
                if x > &running_max {
                    running_max = x.clone();
                }
                if x < &(a_eval.at(t) * &running_max) {
                    violated = true;
                }
            }
            indicator(violated)
        },
        move |x0| {
            let x = x0[0].clone();
            let violated = x < a_init.at(0) * &x;
            Summary(vec![x, bool_rat(violated)])
        },
        move |step, summary, state| {
            let x = &state[0];
            let running_max = if x > &summary.0[0] {
                x.clone()
            } else {
                summary.0[0].clone()
            };
            let violated = summary.0[1].is_one() || x < &(a_update.at(step) * &running_max);
            Summary(vec![running_max, bool_rat(violated)])
        },
        |_, summary, _| indicator(summary.0[1].is_one()),
    ))
}

/// Indicator of the *current* state lying outside the target schedule
/// (closed membership). Not absorbing: a path may leave and re-enter.
pub fn g_quantile(targets: TimeIndexed<Region>) -> ConstraintFunctional {
    let targets = Arc::new(targets);
    let t_eval = targets.clone();
    let t_summary = targets.clone();
    ConstraintFunctional::custom(
        "quantile",
        move |step, prefix| indicator(!t_eval.at(step).contains(prefix.state_at(step), false)),
        |_| Summary::empty(),
        |_, s, _| s.clone(),
        move |step, _, state| indicator(!t_summary.at(step).contains(state, false)),
    )
}

/// Maps a required success probability `m` to the budget level `1 - m` on
/// the failure indicator.
pub fn quantile_level_transform(m: &Rat) -> Result<Rat, ConstraintError> {
    if m.is_negative() || m > &Rat::one() {
        return Err(ConstraintError::ProbabilityOutOfRange);
    }
    Ok(Rat::one() - m)
}

fn indicator(violated: bool) -> Ext {
    if violated {
        Ext::one()
    } else {
        Ext::zero()
    }
}

fn bool_rat(b: bool) -> Rat {
    if b {
        Rat::one()
    } else {
        Rat::zero()
    }
}

type PathEvalFn = dyn Fn(&PathPrefix) -> Ext + Send + Sync;
type TerminalFn = dyn Fn(&State) -> Ext + Send + Sync;

/// The reward collected on full paths.
#[derive(Clone)]
pub struct RewardFunctional {
    name: String,
    path_eval: Arc<PathEvalFn>,
    terminal: Option<Arc<TerminalFn>>,
}

impl RewardFunctional {
    /// A reward of the terminal state alone. These rewards admit the merged
    /// (recombining) solver node space.
    pub fn terminal<F>(name: &str, f: F) -> Self
    where
        F: Fn(&State) -> Ext + Send + Sync + 'static,
    {
        let g = Arc::new(f);
        let g2 = g.clone();
        Self {
            name: name.to_string(),
            path_eval: Arc::new(move |prefix: &PathPrefix| g(prefix.last_state())),
            terminal: Some(g2),
        }
    }

    /// A genuinely path-dependent reward. Solving falls back to the
    /// path-expanded node space.
    pub fn path_dependent<F>(name: &str, f: F) -> Self
    where
        F: Fn(&PathPrefix) -> Ext + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            path_eval: Arc::new(f),
            terminal: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, path: &PathPrefix) -> Ext {
        (self.path_eval)(path)
    }

    pub fn terminal_form(&self) -> Option<&Arc<TerminalFn>> {
        self.terminal.as_ref()
    }

    /// `weights . x_N`.
    pub fn linear(weights: Vec<Rat>) -> Self {
        Self::terminal("linear", move |x: &State| {
            Ext::Finite(x.iter().zip(&weights).map(|(a, b)| a * b).sum())
        })
    }

    /// Power utility `x^gamma` on the first coordinate, `-inf` off the
    /// domain. The power is evaluated in floating point and frozen back
    /// into an exact rational, so repeated evaluations agree bit for bit.
    pub fn power(gamma: Rat) -> Self {
        let g = crate::ext::rat_to_f64(&gamma);
        Self::terminal("power", move |x: &State| {
            let v = crate::ext::rat_to_f64(&x[0]);
            if v < 0.0 {
                return Ext::NegInf;
            }
            match crate::ext::rat_from_f64(v.powf(g)) {
                Some(r) => Ext::Finite(r),
                None => Ext::NegInf,
            }
        })
    }

    /// Log utility on the first coordinate, `-inf` at or below zero.
    pub fn log() -> Self {
        Self::terminal("log", |x: &State| {
            let v = crate::ext::rat_to_f64(&x[0]);
            if v <= 0.0 {
                return Ext::NegInf;
            }
            match crate::ext::rat_from_f64(v.ln()) {
                Some(r) => Ext::Finite(r),
                None => Ext::NegInf,
            }
        })
    }

    /// Indicator of the terminal state lying in a region (closed membership).
    pub fn indicator(region: Region) -> Self {
        Self::terminal("indicator", move |x: &State| {
            indicator(!region.contains(x, false)).sub_from(&Rat::one())
        })
    }

    /// Tabulated terminal reward with a default for unlisted states.
    pub fn table(entries: std::collections::BTreeMap<State, Rat>, default: Ext) -> Self {
        Self::terminal("table", move |x: &State| match entries.get(x) {
            Some(v) => Ext::Finite(v.clone()),
            None => default.clone(),
        })
    }
}

impl std::fmt::Debug for RewardFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RewardFunctional({})", self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ext::{rat, rat_int};

    fn scalar_prefix(values: &[i64]) -> PathPrefix {
        let vals: Vec<Rat> = values.iter().map(|&v| rat_int(v)).collect();
        PathPrefix::scalar(&vals, vec![0; values.len() - 1])
    }

    fn rational_prefix(values: &[Rat]) -> PathPrefix {
        PathPrefix::scalar(values, vec![0; values.len() - 1])
    }

    #[test]
    fn state_constraint_is_absorbing() {
        let g = g_state(TimeIndexed::Constant(Region::half_space_above(
            0,
            rat(-1, 1),
        )));
        // prefix (0, 0.5, -2): fine at step 1, violated at step 2
        let p = rational_prefix(&[rat(0, 1), rat(1, 2), rat(-2, 1)]);
        assert_eq!(g.eval(1, &p.truncate(1)), Ext::zero());
        assert_eq!(g.eval(2, &p), Ext::one());
        // violation at step 1 then back inside at step 2 stays violated
        let back = rational_prefix(&[rat(0, 1), rat(-2, 1), rat(1, 1)]);
        assert_eq!(g.eval(2, &back), Ext::one());
        // entirely inside
        let ok = scalar_prefix(&[0, 1, 2]);
        for s in 0..=2 {
            assert_eq!(g.eval(s, &ok.truncate(s)), Ext::zero());
        }
    }

    #[test]
    fn state_margin_matches_indicator() {
        let regions = TimeIndexed::Constant(Region::half_space_above(0, rat(-1, 1)));
        let g = g_state(regions.clone());
        // prefix (0, 0.5, 3): margin 1.0 at the closest approach (step 0)
        let p = rational_prefix(&[rat(0, 1), rat(1, 2), rat(3, 1)]);
        let m = state_margin(&regions, 2, &p).unwrap();
        assert_eq!(m, 1.0);
        assert_eq!(g.eval(2, &p), Ext::zero());
        // touching the boundary: margin 0 and violated (open region)
        let touch = rational_prefix(&[rat(0, 1), rat(-1, 1)]);
        assert_eq!(state_margin(&regions, 1, &touch).unwrap(), 0.0);
        assert_eq!(g.eval(1, &touch), Ext::one());
    }

    #[test]
    fn state_margin_ball() {
        let regions = TimeIndexed::Constant(Region::Ball {
            center: vec![rat(0, 1), rat(0, 1)],
            radius: rat(2, 1),
        });
        let p = PathPrefix::from_parts(
            vec![vec![rat(0, 1), rat(0, 1)], vec![rat(1, 1), rat(1, 1)]],
            vec![0],
        );
        let m = state_margin(&regions, 1, &p).unwrap();
        assert!((m - (2.0 - 2.0_f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn floor_touching_is_allowed() {
        let g = g_floor(TimeIndexed::Constant(rat(-1, 1)));
        let p = rational_prefix(&[rat(0, 1), rat(-1, 2), rat(-1, 1)]);
        for s in 0..=2 {
            assert_eq!(g.eval(s, &p.truncate(s)), Ext::zero());
        }
        // dipping below once is absorbing
        let dip = rational_prefix(&[rat(0, 1), rat(-2, 1), rat(5, 1)]);
        assert_eq!(g.eval(1, &dip.truncate(1)), Ext::one());
        assert_eq!(g.eval(2, &dip), Ext::one());
        // floor 0, path identically 0
        let g0 = g_floor(TimeIndexed::Constant(rat(0, 1)));
        let z = scalar_prefix(&[0, 0, 0]);
        assert_eq!(g0.eval(2, &z), Ext::zero());
    }

    #[test]
    fn drawdown_remark_paths() {
        // alpha = 1/2; path 2-t on the grid {0, 1/2, 1} satisfies the
        // constraint, its translate 1-t does not.
        let g = g_drawdown(TimeIndexed::Constant(rat(1, 2)), rat(2, 1)).unwrap();
        let good = rational_prefix(&[rat(2, 1), rat(3, 2), rat(1, 1)]);
        for s in 0..=2 {
            assert_eq!(g.eval(s, &good.truncate(s)), Ext::zero());
        }
        let g2 = g_drawdown(TimeIndexed::Constant(rat(1, 2)), rat(1, 1)).unwrap();
        let shifted = rational_prefix(&[rat(1, 1), rat(1, 2), rat(0, 1)]);
        assert_eq!(g2.eval(0, &shifted.truncate(0)), Ext::zero());
        assert_eq!(g2.eval(1, &shifted.truncate(1)), Ext::zero());
        assert_eq!(g2.eval(2, &shifted), Ext::one());
    }

    #[test]
    fn drawdown_alpha_zero_is_vacuous() {
        let g = g_drawdown(TimeIndexed::Constant(rat(0, 1)), rat(1, 1)).unwrap();
        let p = rational_prefix(&[rat(1, 1), rat(0, 1), rat(2, 1)]);
        assert_eq!(g.eval(2, &p), Ext::zero());
    }

    #[test]
    fn drawdown_domain_errors() {
        assert!(matches!(
            g_drawdown(TimeIndexed::Constant(rat(3, 2)), rat(1, 1)),
            Err(ConstraintError::AlphaOutOfRange)
        ));
        assert!(matches!(
            g_drawdown(TimeIndexed::Constant(rat(1, 2)), rat(-1, 1)),
            Err(ConstraintError::NegativeStart)
        ));
    }

    #[test]
    fn quantile_is_not_absorbing() {
        let g = g_quantile(TimeIndexed::Constant(Region::half_space_above(
            0,
            rat(0, 1),
        )));
        // G = [0, inf) closed; prefix (0, -1, 2)
        let p = scalar_prefix(&[0, -1, 2]);
        assert_eq!(g.eval(0, &p.truncate(0)), Ext::zero());
        assert_eq!(g.eval(1, &p.truncate(1)), Ext::one());
        assert_eq!(g.eval(2, &p), Ext::zero());
        // boundary with closed membership
        let b = scalar_prefix(&[0]);
        assert_eq!(g.eval(0, &b), Ext::zero());
        // empty target
        let ge = g_quantile(TimeIndexed::Constant(Region::Empty));
        assert_eq!(ge.eval(0, &b), Ext::one());
    }

    #[test]
    fn quantile_transform() {
        assert_eq!(quantile_level_transform(&rat(1, 1)).unwrap(), rat(0, 1));
        assert_eq!(quantile_level_transform(&rat(0, 1)).unwrap(), rat(1, 1));
        assert_eq!(quantile_level_transform(&rat(3, 4)).unwrap(), rat(1, 4));
        assert!(quantile_level_transform(&rat(5, 4)).is_err());
        assert!(quantile_level_transform(&rat(-1, 4)).is_err());
    }

    #[test]
    fn summary_consistency_exhaustive() {
        let model = crate::lattice::LatticeModel::additive(
            3,
            vec![rat(1, 2), rat(1, 2)],
            vec!["a".into(), "b".into()],
            vec![vec![rat_int(0)], vec![rat_int(1)]],
            vec![vec![rat_int(1)], vec![rat_int(-1)]],
            vec![rat_int(2)],
        )
        .unwrap();
        let cases = vec![
            g_state(TimeIndexed::Constant(Region::half_space_above(
                0,
                rat(-1, 1),
            ))),
            g_floor(TimeIndexed::Constant(rat(0, 1))),
            g_drawdown(TimeIndexed::Constant(rat(1, 2)), rat(2, 1)).unwrap(),
            g_quantile(TimeIndexed::Constant(Region::half_space_above(
                0,
                rat(1, 1),
            ))),
        ];
        for g in cases {
            g.validate_summary(&model, 4)
                .unwrap_or_else(|e| panic!("{} summary mismatch: {e}", g.name()));
        }
    }

    #[test]
    fn inconsistent_custom_summary_is_caught() {
        let g = ConstraintFunctional::custom(
            "broken",
            |_, prefix| {
                // genuinely depends on the whole path
                indicator(prefix.states().iter().any(|x| x[0].is_negative()))
            },
            |_| Summary::empty(),
            |_, s, _| s.clone(),
            // ... but the summary claims it only needs the current state
            |_, _, state| indicator(state[0].is_negative()),
        );
        let model = crate::lattice::LatticeModel::additive(
            2,
            vec![rat(1, 2), rat(1, 2)],
            vec!["a".into()],
            vec![vec![rat_int(0)]],
            vec![vec![rat_int(1)], vec![rat_int(-1)]],
            vec![rat_int(0)],
        )
        .unwrap();
        assert!(matches!(
            g.validate_summary(&model, 4),
            Err(ConstraintError::SummaryMismatch { .. })
        ));
    }

    #[test]
    fn reward_families() {
        let lin = RewardFunctional::linear(vec![rat(2, 1)]);
        assert_eq!(lin.eval(&scalar_prefix(&[0, 3])), Ext::from_int(6));
        let ind = RewardFunctional::indicator(Region::half_space_above(0, rat(0, 1)));
        assert_eq!(ind.eval(&scalar_prefix(&[0, 3])), Ext::one());
        assert_eq!(ind.eval(&scalar_prefix(&[0, -3])), Ext::zero());
        let lg = RewardFunctional::log();
        assert_eq!(lg.eval(&scalar_prefix(&[1, 0])), Ext::NegInf);
        let pw = RewardFunctional::power(rat(1, 2));
        assert_eq!(pw.eval(&scalar_prefix(&[0, 4])), Ext::from_int(2));
        assert_eq!(pw.eval(&scalar_prefix(&[0, -1])), Ext::NegInf);
        let mut entries = std::collections::BTreeMap::new();
        entries.insert(vec![rat_int(1)], rat(7, 2));
        let tb = RewardFunctional::table(entries, Ext::zero());
        assert_eq!(tb.eval(&scalar_prefix(&[0, 1])), Ext::Finite(rat(7, 2)));
        assert_eq!(tb.eval(&scalar_prefix(&[0, 2])), Ext::zero());
    }
}
