//! Expectation-constrained stochastic control on finite scenario lattices.
//!
//! The problem: maximize an expected reward over path-dependent strategies
//! while the expected value of a per-step cost stays below a level `m` at
//! *every* intermediate time. Constraints of this shape are not
//! time-consistent at a fixed level, so the solver augments the state with
//! the level itself and lets it evolve as a budget: each step splits the
//! parent budget across the noise branches (probability-weighted sums may
//! not grow — the supermartingale property), and every node must afford its
//! own cost. Pathwise state, floor, and drawdown constraints, quantile
//! hedging, and target problems all reduce to this form.
//!
//! Crate layout:
//!
//! - [`lattice`] — scenario lattices, paths, tree measures, conditioning,
//!   pasting, strategies, stopping rules;
//! - [`constraint`] — cost functionals (with exact finite summaries) and
//!   reward functionals;
//! - [`solver`] — budget grids, backward induction, Snell envelopes, budget
//!   processes, policy extraction, DPP verification;
//! - [`oracle`] — brute-force strategy enumeration and reference values;
//! - [`audit`] — exact and Monte Carlo forward verification;
//! - [`problems`] — builders for the five constraint families and
//!   reachability sets;
//! - [`ext`] — exact extended-real arithmetic everything above runs on.
//!
//! Everything is immutable after construction and safe to share across
//! threads; the solver and the Monte Carlo audit parallelize internally
//! (bound the pool with the `BUDGET_DPP_THREADS` environment variable via
//! [`configure_threads_from_env`]).

pub mod audit;
pub mod constraint;
pub mod ext;
pub mod lattice;
pub mod oracle;
pub mod problems;
pub mod region;
pub mod solver;

pub use ext::{Ext, Rat};

/// Builds the global thread pool from `BUDGET_DPP_THREADS` when set.
/// Call once at startup; later calls (or an unset variable) leave the
/// default pool in place.
pub fn configure_threads_from_env() {
    if let Ok(v) = std::env::var("BUDGET_DPP_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}
