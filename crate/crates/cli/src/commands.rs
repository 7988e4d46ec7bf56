//! Subcommand implementations.

use crate::report::{ratio_fields, run_report_json, stamp};
use adalloc::adversary::{
    admission_setup, aon_setup, default_admission_delta, intro_scenarios, run_admission_lb,
    run_aon_lb, AdmissionLbParams, AonLbParams,
};
use adalloc::duals;
use adalloc::gen::{random_general, random_laminar, trial_seed, RandomGeneralSpec, RandomLaminarSpec};
use adalloc::instance::{from_json, to_json, Instance};
use adalloc::opt::{opt_brute, opt_lp, BruteSemantics, OptError};
use adalloc::rational::{
    parse_money, rat, render_decimal, render_money, to_f64, Rational,
};
use adalloc::session::{finish_report, SessionConfig};
use adalloc::{AuditMode, AuditOptions, Report, Session, Strategy};
use num_traits::ToPrimitive;
use serde_json::json;
use std::fs;
use std::io::Write;

pub struct Context {
    pub seed: u64,
    pub reproducible: bool,
    pub audit_mode: AuditMode,
    pub out: Option<String>,
}

pub struct CmdError {
    pub code: u8,
    pub message: String,
}

impl CmdError {
    fn validation(msg: impl Into<String>) -> Self {
        CmdError {
            code: 2,
            message: msg.into(),
        }
    }
    fn audit(msg: impl Into<String>) -> Self {
        CmdError {
            code: 3,
            message: msg.into(),
        }
    }
    fn oracle(msg: impl Into<String>) -> Self {
        CmdError {
            code: 4,
            message: msg.into(),
        }
    }
}

type CmdResult = Result<(), CmdError>;

fn load_instance(path: &str) -> Result<Instance, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::validation(format!("cannot read {path}: {e}")))?;
    from_json(&text).map_err(|e| CmdError::validation(e.to_string()))
}

fn parse_rational(s: &str, what: &str) -> Result<Rational, CmdError> {
    parse_money(s).map_err(|e| CmdError::validation(format!("{what}: {e}")))
}

fn strategy_of(name: &str) -> Result<Strategy, CmdError> {
    Strategy::from_name(name)
        .ok_or_else(|| CmdError::validation(format!("unknown strategy: {name}")))
}

fn write_out(path: Option<&str>, content: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, content)
            .map_err(|e| CmdError::validation(format!("cannot write {p}: {e}"))),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

pub struct GenArgs {
    pub kind: String,
    pub bidders: usize,
    pub dims: usize,
    pub depth: usize,
    pub branching: usize,
    pub impressions: usize,
    pub bid_scale: String,
    pub p: u64,
    pub n: u64,
    pub delta: Option<String>,
    pub eps: String,
}

pub fn cmd_gen(ctx: &Context, args: GenArgs) -> CmdResult {
    let bid_scale = parse_rational(&args.bid_scale, "--bid-scale")?;
    match args.kind.as_str() {
        "random-laminar" => {
            // Scale is relative to the small-bids threshold at the tree's p
            // (its depth); dividing by the bids-per-impression budget keeps
            // per-constraint sums under the threshold at scale 1.
            let thresh = adalloc::rational::inv_log2_lower_bound(2 * args.depth as u64 + 2);
            let inst = random_laminar(&RandomLaminarSpec {
                bidders: args.bidders,
                dimensions: args.dims,
                depth: args.depth,
                branching: args.branching,
                impressions: args.impressions,
                bid_fraction: bid_scale * thresh / rat(3, 1),
                bids_per_impression: 3,
                exclusive_bids: false,
            seed: ctx.seed,
            });
            write_out(ctx.out.as_deref(), &to_json(&inst))
        }
        "random-general" => {
            let inst = random_general(&RandomGeneralSpec {
                bidders: args.bidders,
                dimensions: args.dims,
                p_max: args.p as usize,
                constraints_per_bidder: (args.dims * args.p as usize) / 2,
                impressions: args.impressions,
                small_bids: true,
                bid_scale,
                bids_per_impression: 2,
                seed: ctx.seed,
            });
            write_out(ctx.out.as_deref(), &to_json(&inst))
        }
        "lb-admission" => {
            // Static skeleton: the full request sequence, no adaptivity.
            let delta = match &args.delta {
                Some(d) => parse_rational(d, "--delta")?,
                None => default_admission_delta(args.n),
            };
            let mut inst =
                admission_setup(args.n).map_err(|e| CmdError::validation(e.to_string()))?;
            let m = args.n.trailing_zeros();
            let batch = (Rational::from_integer(1.into()) / &delta)
                .to_integer()
                .to_u64()
                .ok_or_else(|| CmdError::validation("delta too small"))?;
            let mut imps = Vec::new();
            for phase in 0..=m {
                for group in 0..(1u64 << phase) {
                    for r in 0..batch {
                        imps.push(adalloc::Impression {
                            id: format!("ph{phase}-g{group}-r{r}"),
                            bids: vec![vec![(
                                ((1u64 << phase) - 1 + group) as usize,
                                delta.clone(),
                            )]],
                        });
                    }
                }
            }
            inst.impressions = imps;
            write_out(ctx.out.as_deref(), &to_json(&inst))
        }
        "lb-aon" => {
            let eps = parse_rational(&args.eps, "--eps")?;
            let delta = match &args.delta {
                Some(d) => parse_rational(d, "--delta")?,
                None => rat(1, 1000),
            };
            let params = AonLbParams {
                p: args.p,
                eps,
                delta: delta.clone(),
            };
            let (mut inst, geo) =
                aon_setup(&params).map_err(|e| CmdError::validation(e.to_string()))?;
            // Static prefix: the initial round plus the single level-0 block;
            // deeper blocks only exist once a session reacts.
            let mut imps = vec![adalloc::Impression {
                id: "init".into(),
                bids: vec![vec![(0, delta)]],
            }];
            for slot in 0..geo.batch {
                imps.push(adalloc::Impression {
                    id: format!("L0-s0-i{slot}"),
                    bids: vec![vec![(geo.block_dim(0, 0, slot), params.eps.clone())]],
                });
            }
            inst.impressions = imps;
            write_out(ctx.out.as_deref(), &to_json(&inst))
        }
        "intro-example" => {
            let delta = match &args.delta {
                Some(d) => parse_rational(d, "--delta")?,
                None => rat(1, 4),
            };
            let sc = intro_scenarios(&delta).map_err(|e| CmdError::validation(e.to_string()))?;
            let prefix = ctx.out.clone().unwrap_or_else(|| "intro".into());
            for (suffix, inst) in [
                ("A", &sc.branch_a),
                ("B", &sc.branch_b),
                ("A-small", &sc.branch_a_small),
                ("B-small", &sc.branch_b_small),
            ] {
                let path = format!("{prefix}-{suffix}.json");
                fs::write(&path, to_json(inst))
                    .map_err(|e| CmdError::validation(format!("cannot write {path}: {e}")))?;
                println!("wrote {path}");
            }
            Ok(())
        }
        other => Err(CmdError::validation(format!("unknown gen kind: {other}"))),
    }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

pub fn cmd_run(
    ctx: &Context,
    instance_path: &str,
    algo: &str,
    trace_path: Option<&str>,
    ratio_tol: f64,
    feas_tol: f64,
) -> CmdResult {
    let instance = load_instance(instance_path)?;
    let strategy = strategy_of(algo)?;
    let audit = AuditOptions {
        mode: ctx.audit_mode,
        ratio_tol,
        feas_tol,
    };
    let config = SessionConfig {
        audit,
        eps_override: None,
    };
    let mut session = Session::new(&instance, strategy, config)
        .map_err(|e| CmdError::validation(e.to_string()))?;
    let mut trace: Vec<String> = Vec::new();
    trace.push("impression,bidder,earned,earned_exact,sigma,dual_objective".into());
    for imp in &instance.impressions {
        let decision = session
            .offer(imp)
            .map_err(|e| CmdError::audit(e.to_string()))?;
        let dual_col = session
            .dual_prime()
            .map(|d| {
                format!(
                    "{:.9}",
                    duals::dual_prime_objective(&instance, session.forests(), &d)
                )
            })
            .unwrap_or_default();
        trace.push(format!(
            "{},{},{},{},{:.9},{}",
            decision.impression_id,
            decision
                .bidder
                .map(|u| instance.bidders[u].id.clone())
                .unwrap_or_default(),
            render_decimal(&decision.earned_total),
            render_money(&decision.earned_total),
            decision.sigma,
            dual_col,
        ));
    }
    let report = finish_report(session, audit).map_err(|e| CmdError::audit(e.to_string()))?;
    if let Some(path) = trace_path {
        fs::write(path, trace.join("\n") + "\n")
            .map_err(|e| CmdError::validation(format!("cannot write {path}: {e}")))?;
    }
    let json = run_report_json(&report, ctx.reproducible);
    write_out(ctx.out.as_deref(), &serde_json::to_string_pretty(&json).unwrap())?;
    if ctx.audit_mode != AuditMode::Off && !report.audits_pass() {
        return Err(CmdError::audit("end-of-run audit failed (report written)"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ratio
// ---------------------------------------------------------------------------

pub struct RatioArgs {
    pub instance: Option<String>,
    pub algo: String,
    pub opt_method: String,
    pub semantics: String,
    pub trials: Option<usize>,
    pub gen_kind: String,
    pub bidders: usize,
    pub dims: usize,
    pub impressions: usize,
    pub bid_scale: String,
}

fn theorem_bound(strategy: Strategy, instance: &Instance) -> (f64, &'static str) {
    let stats = instance.stats();
    let p = stats.p.max(1) as f64;
    match strategy {
        Strategy::AdLaminar => (duals::rho(), "e/(e-1) under small bids"),
        Strategy::AdGeneral => (
            1.0 + 4.0 * (2.0 * p + 2.0).log2(),
            "1 + 4 lg(2p+2) under small bids",
        ),
        Strategy::AdGenP => {
            let eps = 1.0 / (2.0 * p + 2.0).log2();
            (
                1.0 + 4.0 * (p + 1.0).powf(eps / (1.0 - eps)) / eps,
                "O(lg p) via the scaled potential",
            )
        }
        Strategy::AdGenAon => {
            let eps = to_f64(&stats.eps).min(0.999_999);
            (
                1.0 + 4.0 * (p + 1.0).powf(eps / (1.0 - eps)) / eps,
                "Theta(p^(eps/(1-eps))/eps)",
            )
        }
        Strategy::GreedyLaminar => (2.0, "greedy is 2-competitive with arbitrary bids"),
    }
}

fn opt_of(
    method: &str,
    semantics: &str,
    instance: &Instance,
    instance_path: Option<&str>,
) -> Result<f64, CmdError> {
    match method {
        "lp" => Ok(opt_lp(instance)
            .map_err(|e| CmdError::oracle(e.to_string()))?
            .to_f64()),
        "brute" => {
            let sem = match semantics {
                "partial" => BruteSemantics::Partial,
                "aon" => BruteSemantics::AllOrNothing,
                other => {
                    return Err(CmdError::validation(format!("unknown semantics: {other}")))
                }
            };
            match opt_brute(instance, sem) {
                Ok(v) => Ok(to_f64(&v)),
                Err(OptError::TooLarge(s)) => Err(CmdError::oracle(s)),
                Err(e) => Err(CmdError::oracle(e.to_string())),
            }
        }
        "analytic" => {
            let path = instance_path.ok_or_else(|| {
                CmdError::validation("analytic OPT needs an instance file path")
            })?;
            analytic_from_sidecar(path)
        }
        other => Err(CmdError::validation(format!("unknown opt method: {other}"))),
    }
}

/// Adversary transcripts carry their analytic optimum in a sibling report
/// (`X.instance.json` -> `X.report.json`).
fn analytic_from_sidecar(instance_path: &str) -> Result<f64, CmdError> {
    let report_path = if let Some(stem) = instance_path.strip_suffix(".instance.json") {
        format!("{stem}.report.json")
    } else {
        return Err(CmdError::validation(
            "not a generated transcript: expected an *.instance.json produced by `adversary`",
        ));
    };
    let text = fs::read_to_string(&report_path).map_err(|_| {
        CmdError::validation(format!(
            "not a generated transcript: missing sidecar {report_path}"
        ))
    })?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CmdError::validation(format!("bad sidecar: {e}")))?;
    v.get("opt_analytic")
        .and_then(|x| x.as_str())
        .and_then(|s| parse_money(s).ok())
        .map(|r| to_f64(&r))
        .ok_or_else(|| CmdError::validation("sidecar lacks opt_analytic"))
}

fn run_strategy(instance: &Instance, strategy: Strategy, audit: AuditOptions) -> Result<Report, CmdError> {
    adalloc::run_online(instance, strategy, audit).map_err(|e| CmdError::audit(e.to_string()))
}

pub fn cmd_ratio(ctx: &Context, args: RatioArgs) -> CmdResult {
    let strategy = strategy_of(&args.algo)?;
    let audit = AuditOptions {
        mode: ctx.audit_mode,
        ..AuditOptions::default()
    };
    let bid_scale = parse_rational(&args.bid_scale, "--bid-scale")?;
    // Each trial owns its instance, run, and oracle; trials execute in
    // parallel and aggregation is a final single-threaded reduce.
    let trial_results: Vec<Result<(Report, f64, f64, &'static str), CmdError>> =
        match (&args.instance, args.trials) {
            (Some(path), None) => {
                let inst = load_instance(path)?;
                let report = run_strategy(&inst, strategy, audit)?;
                let opt = opt_of(&args.opt_method, &args.semantics, &inst, Some(path))?;
                let (bound, note) = theorem_bound(strategy, &inst);
                vec![Ok((report, opt, bound, note))]
            }
            (None, Some(n)) => {
                let seeds: Vec<u64> = (0..n as u64).map(|t| trial_seed(ctx.seed, t)).collect();
                let args_ref = &args;
                let bid_scale_ref = &bid_scale;
                std::thread::scope(|scope| {
                    let handles: Vec<_> = seeds
                        .iter()
                        .map(|&seed| {
                            scope.spawn(move || {
                                let inst = generate_for_trial(
                                    &args_ref.gen_kind,
                                    seed,
                                    args_ref,
                                    bid_scale_ref.clone(),
                                );
                                let report = run_strategy(&inst, strategy, audit)?;
                                let opt =
                                    opt_of(&args_ref.opt_method, &args_ref.semantics, &inst, None)?;
                                let (bound, note) = theorem_bound(strategy, &inst);
                                Ok((report, opt, bound, note))
                            })
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().unwrap()).collect()
                })
            }
            _ => {
                return Err(CmdError::validation(
                    "pass exactly one of --instance or --trials",
                ))
            }
        };
    let mut trials_json = Vec::new();
    let mut worst: Option<f64> = None;
    let mut sum = 0.0;
    let mut finite = 0usize;
    for result in trial_results {
        let (report, opt, bound, bound_note) = result?;
        let alg = to_f64(&report.primal_total);
        let (ratio, ratio_text) = ratio_fields(opt, alg);
        if let Some(r) = ratio {
            sum += r;
            finite += 1;
            worst = Some(worst.map_or(r, |w: f64| w.max(r)));
        }
        trials_json.push(json!({
            "alg": render_money(&report.primal_total),
            "alg_decimal": alg,
            "opt": opt,
            "ratio": ratio,
            "ratio_text": ratio_text,
            "theorem_bound": bound,
            "theorem_note": bound_note,
            "audits_pass": report.audits_pass(),
            "warnings": report.warnings,
        }));
    }
    let mut out = json!({
        "algo": strategy.name(),
        "opt_method": args.opt_method,
        "trials": trials_json,
        "max_ratio": worst,
        "mean_ratio": if finite > 0 { Some(sum / finite as f64) } else { None },
    });
    stamp(&mut out, ctx.reproducible);
    write_out(ctx.out.as_deref(), &serde_json::to_string_pretty(&out).unwrap())
}

fn generate_for_trial(kind: &str, seed: u64, args: &RatioArgs, bid_scale: Rational) -> Instance {
    match kind {
        "random-general" => random_general(&RandomGeneralSpec {
            bidders: args.bidders,
            dimensions: args.dims,
            p_max: 4,
            constraints_per_bidder: args.dims * 2,
            impressions: args.impressions,
            small_bids: true,
            bid_scale,
            bids_per_impression: 2,
            seed,
        }),
        _ => random_laminar(&RandomLaminarSpec {
            bidders: args.bidders,
            dimensions: args.dims,
            depth: 3,
            branching: 2,
            impressions: args.impressions,
            bid_fraction: bid_scale * rat(1, 100),
            bids_per_impression: 3,
            exclusive_bids: false,
            seed,
        }),
    }
}

// ---------------------------------------------------------------------------
// opt
// ---------------------------------------------------------------------------

pub fn cmd_opt(ctx: &Context, method: &str, instance_path: &str, semantics: &str) -> CmdResult {
    let instance = load_instance(instance_path)?;
    let (value_text, value_exact) = match method {
        "lp" => {
            let v = opt_lp(&instance).map_err(|e| CmdError::oracle(e.to_string()))?;
            (
                format!("{}", v.to_f64()),
                v.exact().map(render_money),
            )
        }
        "brute" => {
            let sem = match semantics {
                "partial" => BruteSemantics::Partial,
                "aon" => BruteSemantics::AllOrNothing,
                other => {
                    return Err(CmdError::validation(format!("unknown semantics: {other}")))
                }
            };
            match opt_brute(&instance, sem) {
                Ok(v) => (format!("{}", to_f64(&v)), Some(render_money(&v))),
                Err(OptError::TooLarge(s)) => return Err(CmdError::oracle(s)),
                Err(e) => return Err(CmdError::oracle(e.to_string())),
            }
        }
        "analytic" => {
            let v = analytic_from_sidecar(instance_path)?;
            (format!("{v}"), None)
        }
        other => return Err(CmdError::validation(format!("unknown opt method: {other}"))),
    };
    println!("{value_text}");
    let mut out = json!({
        "method": method,
        "instance": instance_path,
        "value": value_text.parse::<f64>().ok(),
        "value_exact": value_exact,
    });
    stamp(&mut out, ctx.reproducible);
    if let Some(path) = ctx.out.as_deref() {
        fs::write(path, serde_json::to_string_pretty(&out).unwrap())
            .map_err(|e| CmdError::validation(format!("cannot write {path}: {e}")))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// adversary
// ---------------------------------------------------------------------------

pub fn cmd_adversary(
    ctx: &Context,
    kind: &str,
    n: u64,
    p: u64,
    eps: &str,
    delta: Option<&str>,
    algo: &str,
) -> CmdResult {
    let strategy = strategy_of(algo)?;
    let prefix = ctx
        .out
        .clone()
        .unwrap_or_else(|| format!("adversary-{kind}"));
    let (transcript, report_json, summary) = match kind {
        "admission" => {
            let delta = delta.map(|d| parse_rational(d, "--delta")).transpose()?;
            let outcome = run_admission_lb(
                &AdmissionLbParams {
                    n,
                    delta,
                    unit_demand: strategy == Strategy::AdGenP,
                },
                strategy,
            )
            .map_err(|e| CmdError::validation(e.to_string()))?;
            let alg = to_f64(&outcome.alg_revenue);
            let opt = to_f64(&outcome.opt_analytic);
            let (ratio, ratio_text) = ratio_fields(opt, alg);
            let json = json!({
                "kind": "admission",
                "n": n,
                "algo": strategy.name(),
                "k_prime": outcome.k_prime,
                "alg": render_money(&outcome.alg_revenue),
                "alg_decimal": alg,
                "opt_analytic": render_money(&outcome.opt_analytic),
                "ratio": ratio,
                "ratio_text": ratio_text.clone(),
                "x_per_phase": outcome.x.iter().map(render_money).collect::<Vec<_>>(),
                "capacity_invariant_ok": outcome.capacity_invariant_ok,
                "warnings": outcome.warnings,
            });
            let summary = format!(
                "admission n={n} vs {}: ALG={} OPT={} ratio={}",
                strategy.name(),
                render_decimal(&outcome.alg_revenue),
                render_money(&outcome.opt_analytic),
                ratio_text
            );
            (outcome.transcript, json, summary)
        }
        "aon" => {
            let eps = parse_rational(eps, "--eps")?;
            let delta = match delta {
                Some(d) => parse_rational(d, "--delta")?,
                None => rat(1, 1000),
            };
            let outcome = run_aon_lb(&AonLbParams { p, eps, delta }, strategy)
                .map_err(|e| CmdError::validation(e.to_string()))?;
            let alg = to_f64(&outcome.alg_revenue);
            let opt = to_f64(&outcome.opt_analytic);
            let (ratio, ratio_text) = ratio_fields(opt, alg);
            let json = json!({
                "kind": "aon",
                "p": p,
                "algo": strategy.name(),
                "alg": render_money(&outcome.alg_revenue),
                "alg_decimal": alg,
                "opt_analytic": render_money(&outcome.opt_analytic),
                "ratio": ratio,
                "ratio_text": ratio_text.clone(),
                "utilization_invariant_ok": outcome.utilization_invariant_ok,
                "segment_bound_ok": outcome.segment_bound_ok,
                "delta_share_per_constraint": render_money(&outcome.delta_share_per_constraint),
                "accepted_per_block": outcome.accepted_per_block,
                "warnings": outcome.warnings,
            });
            let summary = format!(
                "aon p={p} vs {}: ALG={} OPT={} ratio={}",
                strategy.name(),
                render_decimal(&outcome.alg_revenue),
                render_money(&outcome.opt_analytic),
                ratio_text
            );
            (outcome.transcript, json, summary)
        }
        other => return Err(CmdError::validation(format!("unknown adversary kind: {other}"))),
    };
    let instance_path = format!("{prefix}.instance.json");
    let report_path = format!("{prefix}.report.json");
    fs::write(&instance_path, to_json(&transcript))
        .map_err(|e| CmdError::validation(format!("cannot write {instance_path}: {e}")))?;
    let mut report_json = report_json;
    stamp(&mut report_json, ctx.reproducible);
    fs::write(&report_path, serde_json::to_string_pretty(&report_json).unwrap())
        .map_err(|e| CmdError::validation(format!("cannot write {report_path}: {e}")))?;
    println!("{summary}");
    println!("wrote {instance_path} and {report_path}");
    Ok(())
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

pub fn cmd_verify(_ctx: &Context, instance_path: &str) -> CmdResult {
    let text = fs::read_to_string(instance_path)
        .map_err(|e| CmdError::validation(format!("cannot read {instance_path}: {e}")))?;
    let instance = from_json(&text).map_err(|e| CmdError::validation(e.to_string()))?;
    let violations = instance.validate();
    if !violations.is_empty() {
        let mut msg = String::from("instance invalid:");
        for v in &violations {
            msg.push_str(&format!("\n  - {v}"));
        }
        return Err(CmdError::validation(msg));
    }
    let stats = instance.stats();
    let mut stdout = std::io::stdout();
    writeln!(
        stdout,
        "ok: mode={} bidders={} dims={} impressions={} p={} eps={} small_bids_ok={}",
        instance.mode,
        instance.bidders.len(),
        instance.num_dimensions,
        instance.impressions.len(),
        stats.p,
        render_money(&stats.eps),
        stats.small_bids_ok
    )
    .ok();
    Ok(())
}
