//! Report JSON assembly.

use adalloc::rational::{render_decimal, render_money, to_f64};
use adalloc::Report;
use serde_json::{json, Value};

/// Run report: primal as an exact string, dual quantities as numbers,
/// feasibility block, and warnings.
pub fn run_report_json(report: &Report, reproducible: bool) -> Value {
    let (worst, pass) = match &report.feasibility {
        Some(f) => (f.worst_residual, f.pass),
        // Strategies without a D' dual: vacuous feasibility.
        None => (0.0, report.dualfit_feasible.unwrap_or(true)),
    };
    let dual_objective = report
        .dual_objective
        .or_else(|| report.dualfit_objective.as_ref().map(to_f64));
    let primal = to_f64(&report.primal_total);
    let ratio = dual_objective.map(|d| if primal > 0.0 { d / primal } else { 0.0 });
    let mut out = json!({
        "strategy": report.strategy,
        "primal": render_money(&report.primal_total),
        "primal_decimal": render_decimal(&report.primal_total),
        "dual_objective": dual_objective,
        "ratio": ratio,
        "feasibility": {
            "worst_residual": worst,
            "pass": pass,
        },
        "warnings": report.warnings,
        "assignments": report.decisions.iter().filter(|d| d.bidder.is_some()).count(),
        "rejections": report.decisions.iter().filter(|d| d.bidder.is_none()).count(),
    });
    if let Some(a) = &report.ratio_audit {
        out["ratio_audit"] = json!({
            "pass": a.pass,
            "residual": a.residual,
            "bound": a.bound,
        });
    }
    if let Some(ok) = report.dualfit_ratio_ok {
        out["dualfit"] = json!({
            "feasible": report.dualfit_feasible,
            "ratio_ok": ok,
            "objective": report.dualfit_objective.as_ref().map(render_money),
        });
    }
    stamp(&mut out, reproducible);
    out
}

pub fn stamp(value: &mut Value, reproducible: bool) {
    if !reproducible {
        if let Ok(now) = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH) {
            value["generated_at"] = json!(now.as_secs());
        }
    }
}

/// Ratio as a JSON-safe pair: a number when finite, with a display string
/// that carries "inf" otherwise.
pub fn ratio_fields(opt: f64, alg: f64) -> (Option<f64>, String) {
    if alg == 0.0 && opt == 0.0 {
        (Some(1.0), "1".into())
    } else if alg == 0.0 {
        (None, "inf".into())
    } else {
        let r = opt / alg;
        (Some(r), format!("{r}"))
    }
}
