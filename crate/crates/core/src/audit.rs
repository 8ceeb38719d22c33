//! Forward verification of strategies and budget processes.
//!
//! The exact audit sums the tree: realized `E[g(s)]` at every grid time and
//! `E[f]` at the horizon, all in rational arithmetic, flagging any step
//! whose realized cost exceeds the declared level. The Monte Carlo audit
//! samples branch histories with a named, seeded generator (ChaCha8,
//! inverse-CDF over the branch probabilities in declared order, one stream
//! per batch) so reports are bit-reproducible. Batches may be evaluated in
//! parallel; merging is by batch index, so parallelism never changes the
//! output.

use crate::constraint::{ConstraintFunctional, RewardFunctional};
use crate::ext::{rat_to_f64, weighted_sum, Ext, Rat};
use crate::lattice::{
    BranchHistory, LatticeError, LatticeModel, PathPrefix, RealizedTree, Strategy,
};
use crate::solver::BudgetProcess;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("budget process undefined at visited node {0:?}")]
    UndefinedBudgetNode(BranchHistory),
    #[error("sample count must be at least 1")]
    NoSamples,
}

/// A sampled statistic: the mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledStat {
    pub mean: f64,
    pub std_error: f64,
}

/// Realized constraint cost at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct StepAudit {
    pub step: usize,
    pub exact: Option<Ext>,
    pub sampled: Option<SampledStat>,
}

/// The audit record for one strategy at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub level: Rat,
    pub per_step: Vec<StepAudit>,
    pub reward_exact: Option<Ext>,
    pub reward_sampled: Option<SampledStat>,
    /// Steps whose exact realized cost exceeds the level.
    pub flags: Vec<usize>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
}

/// Exact tree-summation audit: `E[g(s)]` for every grid time and `E[f]`,
/// with a flag for every step violating the level. Rational arithmetic,
/// reproducible bit for bit.
pub fn exact_audit(
    model: &LatticeModel,
    strategy: &Strategy,
    g: &ConstraintFunctional,
    f: &RewardFunctional,
    level: &Rat,
) -> Result<AuditReport, AuditError> {
    let tree = RealizedTree::new(model, strategy, &model.root())?;
    let p = tree.measure();
    let bound = Ext::Finite(level.clone());
    let mut per_step = Vec::with_capacity(model.horizon() + 1);
    let mut flags = Vec::new();
    for s in 0..=model.horizon() {
        let eg = weighted_sum(p.support_at_step(s).map(|(node, mass)| {
            let prefix = tree.prefix(node).expect("supported node realized");
            (mass.clone(), g.eval(s, prefix))
        }));
        if eg > bound {
            flags.push(s);
        }
        per_step.push(StepAudit {
            step: s,
            exact: Some(eg),
            sampled: None,
        });
    }
    let reward = weighted_sum(p.support_leaves().map(|(leaf, mass)| {
        let prefix = tree.prefix(leaf).expect("leaf realized");
        (mass.clone(), f.eval(prefix))
    }));
    Ok(AuditReport {
        level: level.clone(),
        per_step,
        reward_exact: Some(reward),
        reward_sampled: None,
        flags,
        samples: None,
        seed: None,
    })
}

const BATCH_SIZE: u64 = 1024;

/// Per-batch accumulator: exact rational sums of sampled values and their
/// squares, plus counts of infinite draws.
#[derive(Clone)]
struct Accum {
    sum: Rat,
    sum_sq: Rat,
    pos_inf: u64,
    neg_inf: u64,
}

impl Accum {
    fn new() -> Self {
        Self {
            sum: Rat::zero(),
            sum_sq: Rat::zero(),
            pos_inf: 0,
            neg_inf: 0,
        }
    }

    fn push(&mut self, v: &Ext) {
        match v {
            Ext::Finite(r) => {
                self.sum += r;
                self.sum_sq += r * r;
            }
            Ext::PosInf => self.pos_inf += 1,
            Ext::NegInf => self.neg_inf += 1,
        }
    }

    fn merge(&mut self, other: &Accum) {
        self.sum += &other.sum;
        self.sum_sq += &other.sum_sq;
        self.pos_inf += other.pos_inf;
        self.neg_inf += other.neg_inf;
    }

    fn stat(&self, n: u64) -> SampledStat {
        if self.neg_inf > 0 {
            return SampledStat {
                mean: f64::NEG_INFINITY,
                std_error: f64::NAN,
            };
        }
        if self.pos_inf > 0 {
            return SampledStat {
                mean: f64::INFINITY,
                std_error: f64::NAN,
            };
        }
        let n_rat = Rat::from_integer(n.into());
        let mean = &self.sum / &n_rat;
        let var = (&self.sum_sq / &n_rat) - &mean * &mean;
        let se = (rat_to_f64(&var).max(0.0) / n.to_f64().unwrap()).sqrt();
        SampledStat {
            mean: rat_to_f64(&mean),
            std_error: se,
        }
    }
}

/// Monte Carlo audit: samples `n_samples` branch histories under the model
/// noise and reports per-step cost estimates and the reward estimate with
/// standard errors. Deterministic in `(seed, n_samples)`; batches run in
/// parallel on independent generator streams and merge in index order.
pub fn monte_carlo_audit(
    model: &LatticeModel,
    strategy: &Strategy,
    g: &ConstraintFunctional,
    f: &RewardFunctional,
    level: &Rat,
    n_samples: u64,
    seed: u64,
) -> Result<AuditReport, AuditError> {
    if n_samples == 0 {
        return Err(AuditError::NoSamples);
    }
    // Cumulative branch probabilities in declared order, rendered once.
    let mut cum = Vec::with_capacity(model.branch_count());
    let mut acc = Rat::zero();
    for p in model.branch_probs() {
        acc += p;
        cum.push(rat_to_f64(&acc));
    }
    let horizon = model.horizon();
    let n_batches = n_samples.div_ceil(BATCH_SIZE);
    let batches: Result<Vec<(Vec<Accum>, Accum)>, AuditError> = (0..n_batches)
        .into_par_iter()
        .map(|batch| {
            let lo = batch * BATCH_SIZE;
            let hi = (lo + BATCH_SIZE).min(n_samples);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(batch + 1);
            let mut g_acc = vec![Accum::new(); horizon + 1];
            let mut f_acc = Accum::new();
            for _ in lo..hi {
                let mut prefix = model.root();
                #[allow(clippy::needless_range_loop)]
                for s in 0..=horizon {
                    if s > 0 {
                        let control = strategy.decide(s - 1, &prefix).ok_or_else(|| {
                            LatticeError::MissingDecision {
                                step: s - 1,
                                node: prefix.branches().clone(),
                            }
                        })?;
                        let u: f64 = rng.random();
                        let j = cum
                            .iter()
                            .position(|c| u < *c)
                            .unwrap_or(model.branch_count() - 1);
                        let state = model.step(s - 1, prefix.last_state(), control, j);
                        prefix = prefix.extend(j, state);
                    }
                    g_acc[s].push(&g.eval(s, &prefix));
                }
                f_acc.push(&f.eval(&prefix));
            }
            Ok((g_acc, f_acc))
        })
        .collect();
    let batches = batches?;
    let mut g_total = vec![Accum::new(); horizon + 1];
    let mut f_total = Accum::new();
    for (g_acc, f_acc) in &batches {
        for (t, a) in g_total.iter_mut().zip(g_acc) {
            t.merge(a);
        }
        f_total.merge(f_acc);
    }
    let per_step = g_total
        .iter()
        .enumerate()
        .map(|(step, a)| StepAudit {
            step,
            exact: None,
            sampled: Some(a.stat(n_samples)),
        })
        .collect();
    Ok(AuditReport {
        level: level.clone(),
        per_step,
        reward_exact: None,
        reward_sampled: Some(f_total.stat(n_samples)),
        flags: Vec::new(),
        samples: Some(n_samples),
        seed: Some(seed),
    })
}

/// One row of the along-path budget ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub budget: Ext,
    pub cost: Ext,
    pub dominated: bool,
}

/// Ledger of a budget process along one path, plus tree-wide checks of the
/// one-step supermartingale inequality and domination under the exact tree
/// weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger {
    pub rows: Vec<LedgerRow>,
    pub supermartingale_violations: Vec<BranchHistory>,
    pub domination_violations: Vec<BranchHistory>,
}

impl BudgetLedger {
    pub fn clean(&self) -> bool {
        self.rows.iter().all(|r| r.dominated)
            && self.supermartingale_violations.is_empty()
            && self.domination_violations.is_empty()
    }
}

/// Tracks a budget process along a sampled path (per-step budget, cost, and
/// domination flag) and verifies the supermartingale inequality at every
/// positive-mass node of the attached strategy's tree.
pub fn track_budget(
    model: &LatticeModel,
    strategy: &Strategy,
    process: &BudgetProcess,
    g: &ConstraintFunctional,
    path: &PathPrefix,
) -> Result<BudgetLedger, AuditError> {
    let mut rows = Vec::with_capacity(path.step() + 1);
    for k in 0..=path.step() {
        let node = path.truncate(k);
        let budget = process
            .value(node.branches())
            .cloned()
            .ok_or_else(|| AuditError::UndefinedBudgetNode(node.branches().clone()))?;
        let cost = g.eval(k, &node);
        let dominated = budget >= cost;
        rows.push(LedgerRow {
            step: k,
            budget,
            cost,
            dominated,
        });
    }
    let tree = RealizedTree::new(model, strategy, &model.root())?;
    let p = tree.measure();
    let mut supermartingale_violations = Vec::new();
    let mut domination_violations = Vec::new();
    for (node, prefix) in tree.nodes() {
        if p.prefix_mass(node).is_zero() {
            continue;
        }
        let value = match process.value(node) {
            Some(v) => v,
            None => return Err(AuditError::UndefinedBudgetNode(node.clone())),
        };
        if *value < g.eval(node.len(), prefix) {
            domination_violations.push(node.clone());
        }
        if node.len() < tree.horizon() {
            let continuation = weighted_sum(p.child_probs(node).into_iter().map(|(j, q)| {
                let mut child = node.clone();
                child.push(j);
                (q, process.value(&child).cloned().unwrap_or(Ext::PosInf))
            }));
            if continuation > *value {
                supermartingale_violations.push(node.clone());
            }
        }
    }
    Ok(BudgetLedger {
        rows,
        supermartingale_violations,
        domination_violations,
    })
}

/// Sampling helper shared by callers that need one concrete path drawn from
/// the model noise under a strategy.
pub fn sample_path(
    model: &LatticeModel,
    strategy: &Strategy,
    seed: u64,
) -> Result<PathPrefix, AuditError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cum = Vec::with_capacity(model.branch_count());
    let mut acc = Rat::zero();
    for p in model.branch_probs() {
        acc += p;
        cum.push(rat_to_f64(&acc));
    }
    let mut prefix = model.root();
    for step in 0..model.horizon() {
        let control =
            strategy
                .decide(step, &prefix)
                .ok_or_else(|| LatticeError::MissingDecision {
                    step,
                    node: prefix.branches().clone(),
                })?;
        let u: f64 = rng.random();
        let j = cum
            .iter()
            .position(|c| u < *c)
            .unwrap_or(model.branch_count() - 1);
        let state = model.step(step, prefix.last_state(), control, j);
        prefix = prefix.extend(j, state);
    }
    Ok(prefix)
}

/// Exact probability of one branch history under the model noise; used by
/// the unbiasedness check that weights every single-path estimate by its
/// probability.
pub fn path_weight(model: &LatticeModel, branches: &[usize]) -> Rat {
    branches
        .iter()
        .map(|&j| model.branch_probs()[j].clone())
        .product()
}
