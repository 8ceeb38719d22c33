//! Artifact writers: value-surface CSV, policy JSON, summary/report JSON,
//! reachability CSV, audit JSON. All output is deterministic: rationals
//! render canonically ('.' decimal separator), rows follow the solver's
//! node order, and maps are key-sorted.

use budget_dpp::audit::AuditReport;
use budget_dpp::ext::fmt_rat;
use budget_dpp::problems::ReachabilitySet;
use budget_dpp::solver::SolveOutput;
use serde_json::{json, Map, Value};

/// CSV of the whole value surface: one row per (step, node, budget level).
pub fn surface_csv(output: &SolveOutput) -> String {
    let dag = output.dag();
    let grid = output.grid();
    let mut out =
        String::from("step,node_id,summary_repr,budget_level,value,feasible_min_budget\n");
    for step in 0..=dag.horizon() {
        for node in 0..dag.layer(step).len() {
            let id = dag.node_id(step, node);
            let repr = dag.node_repr(step, node);
            let w = output.surface.min_budget(step, node).to_string();
            for li in 0..grid.len() {
                let row = format!(
                    "{step},{id},{repr},{level},{value},{w}\n",
                    level = fmt_rat(grid.level(li)),
                    value = output.surface.value_idx(step, node, li),
                );
                out.push_str(&row);
            }
        }
    }
    out
}

/// Policy JSON: per node id, per budget level, the chosen control and the
/// budget levels handed to each child (with child node ids).
pub fn policy_json(output: &SolveOutput, control_labels: &[String]) -> String {
    let dag = output.dag();
    let grid = output.grid();
    let mut nodes = Map::new();
    for step in 0..dag.horizon() {
        for node in 0..dag.layer(step).len() {
            let mut levels = Map::new();
            for li in 0..grid.len() {
                let Some(entry) = output.policy.entry(step, node, li) else {
                    continue;
                };
                let kids = &dag.node(step, node).children[entry.control.0];
                levels.insert(
                    fmt_rat(grid.level(li)),
                    json!({
                        "control": control_labels[entry.control.0],
                        "child_levels": entry
                            .child_levels
                            .iter()
                            .map(|&cl| fmt_rat(grid.level(cl)))
                            .collect::<Vec<_>>(),
                        "children": kids
                            .iter()
                            .map(|&c| dag.node_id(step + 1, c))
                            .collect::<Vec<_>>(),
                    }),
                );
            }
            nodes.insert(dag.node_id(step, node), Value::Object(levels));
        }
    }
    pretty(Value::Object(nodes))
}

/// Reachability CSV: one row per (step, node).
pub fn reach_csv(reach: &ReachabilitySet) -> String {
    let dag = reach.dag();
    let mut out = String::from("step,node_id,summary_repr,in_d\n");
    for step in 0..=dag.horizon() {
        for node in 0..dag.layer(step).len() {
            out.push_str(&format!(
                "{step},{id},{repr},{member}\n",
                id = dag.node_id(step, node),
                repr = dag.node_repr(step, node),
                member = reach.contains(step, node),
            ));
        }
    }
    out
}

/// Audit JSON mirroring the in-memory report.
pub fn audit_json(report: &AuditReport) -> String {
    let per_step: Vec<Value> = report
        .per_step
        .iter()
        .map(|s| {
            json!({
                "step": s.step,
                "exact": s.exact.as_ref().map(|e| e.to_string()),
                "sampled_mean": s.sampled.map(|v| v.mean),
                "sampled_std_error": s.sampled.map(|v| v.std_error),
            })
        })
        .collect();
    pretty(json!({
        "level": fmt_rat(&report.level),
        "per_step": per_step,
        "reward_exact": report.reward_exact.as_ref().map(|e| e.to_string()),
        "reward_sampled_mean": report.reward_sampled.map(|v| v.mean),
        "reward_sampled_std_error": report.reward_sampled.map(|v| v.std_error),
        "flagged_steps": report.flags,
        "samples": report.samples,
        "seed": report.seed,
    }))
}

pub fn pretty(value: Value) -> String {
    let mut out = serde_json::to_string_pretty(&value).expect("json serializes");
    out.push('\n');
    out
}
