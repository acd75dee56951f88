use std::path::Path;

use serde_json::{json, Value};

use super::config::{
    CheckGradConfig, ConfigFile, KlExampleConfig, OptimizeConfig, SweepConfig, VarianceConfig,
};
use super::output::{fmt_f64, header, RunOutput};
use super::Failure;
use crate::error::Error;
use crate::estimators::EstimatorKind;
use crate::experiments::gradcheck::{check_configured, check_random, GradCheckReport};
use crate::experiments::{
    kl_example, kl_reverse, mixture_sweep, optimize, replica_estimates, unit_gaussian,
    DescentConfig, EstimatorStats, OptimTrace, StudyConfig,
};
use crate::targets::TargetQ;

/// Final |phi| below which the bimodal example counts as converged.
pub const KL_EXAMPLE_TOL: f64 = 0.02;
/// Standard-error multiple for the estimator-agreement check.
pub const AGREEMENT_SIGMAS: f64 = 4.0;
/// Allowed relative deviation of n * var(n) / var(1) from 1.
pub const SCALING_TOL: f64 = 0.10;

type CmdResult = std::result::Result<i32, Failure>;

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn print_report(report: &GradCheckReport) {
    println!(
        "{:<44} {:>14} {:>10} {:>6}",
        "operation", "worst_rel_err", "tolerance", "cases"
    );
    for op in &report.operations {
        println!(
            "{:<44} {:>14.3e} {:>10.0e} {:>6} {}",
            op.operation,
            op.worst_relative_error,
            op.tolerance,
            op.cases,
            pass(op.passed())
        );
    }
}

pub fn check_grad(file: &ConfigFile, seed: Option<u64>, out: &Path) -> CmdResult {
    let cfg = CheckGradConfig::resolve(file, seed).map_err(usage)?;
    let output = RunOutput::new(out, "check-grad", cfg.seed, &cfg).map_err(usage)?;
    let mut report = check_random(cfg.seed, cfg.cases, 1).map_err(runtime)?;
    let multi = check_random(cfg.seed ^ 0x2d, cfg.cases.div_ceil(5), 2).map_err(runtime)?;
    for op in multi.operations {
        report
            .operations
            .push(crate::experiments::gradcheck::OperationReport {
                operation: format!("{}[2d]", op.operation),
                ..op
            });
    }
    let problem = &cfg.problem;
    let configured = check_configured(
        &problem.policy,
        &problem.target,
        &problem.buffer(),
        cfg.draws,
        cfg.seed,
    )
    .map_err(runtime)?;
    report.operations.extend(configured.operations);
    print_report(&report);
    output
        .write_json(
            "check_grad.json",
            json!({"passed": report.passed(), "operations": report.operations}),
        )
        .map_err(runtime)?;
    println!("check-grad: {}", pass(report.passed()));
    Ok(if report.passed() { 0 } else { 1 })
}

fn write_kl_trace(
    output: &RunOutput,
    trace: &OptimTrace,
    h: &TargetQ,
) -> std::result::Result<(), Failure> {
    let TargetQ::LogMixture(h) = h else {
        unreachable!("kl-example always uses the bimodal target")
    };
    let mut rows = Vec::with_capacity(trace.iterates.len());
    for it in &trace.iterates {
        let phi = it.params[0];
        let reverse = kl_reverse(h, &unit_gaussian(phi), &[]).map_or(f64::NAN, |v| v);
        rows.push(vec![
            it.step.to_string(),
            fmt_f64(phi),
            fmt_f64(it.objective),
            fmt_f64(reverse),
        ]);
    }
    output
        .write_csv(
            "kl_example.csv",
            &header(&["step", "phi", "forward_kl", "reverse_kl"], "", 0),
            rows,
        )
        .map_err(runtime)?;
    Ok(())
}

pub fn kl_example_cmd(file: &ConfigFile, seed: Option<u64>, out: &Path) -> CmdResult {
    let cfg = KlExampleConfig::resolve(file, seed).map_err(usage)?;
    let output = RunOutput::new(out, "kl-example", cfg.seed, &cfg).map_err(usage)?;
    match kl_example(cfg.lr, cfg.iters, cfg.phi0) {
        Ok(trace) => {
            write_kl_trace(&output, &trace, &cfg.target)?;
            let phi = trace.final_params()[0];
            let converged = phi.abs() < KL_EXAMPLE_TOL;
            output
                .write_json(
                    "kl_example.json",
                    json!({
                        "final_phi": phi,
                        "final_forward_kl": trace.iterates.last().map(|i| i.objective),
                        "converged": converged,
                        "tolerance": KL_EXAMPLE_TOL,
                        "diverged": false,
                    }),
                )
                .map_err(runtime)?;
            println!("kl-example: final phi = {phi:.6e} ({})", pass(converged));
            Ok(if converged { 0 } else { 1 })
        }
        Err(Error::Divergence { step, trace }) => {
            write_kl_trace(&output, &trace, &cfg.target)?;
            output
                .write_json(
                    "kl_example.json",
                    json!({"diverged": true, "diverged_at_step": step, "converged": false}),
                )
                .map_err(runtime)?;
            Err(Failure::Runtime(format!(
                "kl-example diverged at step {step}"
            )))
        }
        Err(e) => Err(runtime(e)),
    }
}

fn stats_json(st: &EstimatorStats) -> Value {
    serde_json::to_value(st).expect("stats serialize")
}

pub fn variance(file: &ConfigFile, seed: Option<u64>, out: &Path) -> CmdResult {
    let cfg = VarianceConfig::resolve(file, seed).map_err(usage)?;
    let problem = &cfg.problem;
    if cfg.estimators.contains(&EstimatorKind::Reparam) {
        problem.policy.as_gaussian().map_err(runtime)?;
    }
    let output = RunOutput::new(out, "variance", cfg.seed, &cfg).map_err(usage)?;
    let buffer = problem.buffer();
    let dim = problem.policy.param_count();

    let mut rows = Vec::new();
    let mut per_n = Vec::new();
    let mut stats_by_kind: Vec<(EstimatorKind, Vec<(usize, EstimatorStats)>)> =
        cfg.estimators.iter().map(|k| (*k, Vec::new())).collect();
    let mut all_agree = true;

    for &n in &cfg.n_list {
        let study = StudyConfig {
            n,
            replicas: cfg.replicas,
            seed: cfg.seed,
            common_random_numbers: cfg.common_random_numbers,
        };
        let mut entry = serde_json::Map::new();
        let mut this_n = Vec::new();
        for (kind, history) in &mut stats_by_kind {
            let reps = replica_estimates(*kind, &problem.policy, &problem.target, &buffer, &study)
                .map_err(runtime)?;
            for r in &reps {
                let mut row = vec![
                    r.seed.unwrap_or_default().to_string(),
                    kind.name().to_string(),
                    n.to_string(),
                ];
                row.extend(r.g.iter().map(|v| fmt_f64(*v)));
                rows.push(row);
            }
            let st = EstimatorStats::from_samples(dim, reps.iter().map(|r| r.g.as_slice()))
                .map_err(runtime)?;
            entry.insert(kind.name().to_string(), stats_json(&st));
            history.push((n, st.clone()));
            this_n.push((*kind, st));
        }
        let mut summary = json!({"n": n, "estimators": Value::Object(entry)});
        if let (Some((_, r)), Some((_, s))) = (
            this_n.iter().find(|(k, _)| *k == EstimatorKind::Reparam),
            this_n.iter().find(|(k, _)| *k == EstimatorKind::ScoreFn),
        ) {
            let ratio: Vec<f64> = s
                .variance
                .iter()
                .zip(&r.variance)
                .map(|(a, b)| a / b)
                .collect();
            let agree = r.agrees_with(s, AGREEMENT_SIGMAS);
            let ok = agree.iter().all(|a| *a);
            all_agree &= ok;
            summary["variance_ratio_score_fn_over_reparam"] = json!(ratio);
            summary["cov_trace_ratio_score_fn_over_reparam"] = json!(s.cov_trace / r.cov_trace);
            summary["means_agree_4se"] = json!(agree);
            summary["agreement"] = json!(pass(ok));
            println!(
                "n={n}: cov_trace reparam={:.4e} score_fn={:.4e} agreement {}",
                r.cov_trace,
                s.cov_trace,
                pass(ok)
            );
        }
        per_n.push(summary);
    }

    let mut scaling = serde_json::Map::new();
    let mut scaling_ok = true;
    for (kind, history) in &stats_by_kind {
        let Some((_, base)) = history.iter().find(|(n, _)| *n == 1) else {
            continue;
        };
        let entries: Vec<Value> = history
            .iter()
            .filter(|(n, _)| *n != 1)
            .map(|(n, st)| {
                let ratio: Vec<f64> = st
                    .variance
                    .iter()
                    .zip(&base.variance)
                    .map(|(v, b)| v * *n as f64 / b)
                    .collect();
                let ok = ratio.iter().all(|r| (r - 1.0).abs() <= SCALING_TOL);
                scaling_ok &= ok;
                json!({"n": n, "n_times_variance_over_single": ratio, "within_tolerance": pass(ok)})
            })
            .collect();
        scaling.insert(kind.name().to_string(), Value::Array(entries));
    }

    output
        .write_csv(
            "variance.csv",
            &header(&["seed", "estimator", "n"], "g", dim),
            rows,
        )
        .map_err(runtime)?;
    output
        .write_json(
            "variance.json",
            json!({
                "per_n": per_n,
                "agreement": pass(all_agree),
                "scaling": Value::Object(scaling),
                "scaling_check": pass(scaling_ok),
                "scaling_tolerance": SCALING_TOL,
            }),
        )
        .map_err(runtime)?;
    println!(
        "variance: agreement {} scaling {}",
        pass(all_agree),
        pass(scaling_ok)
    );
    Ok(if all_agree && scaling_ok { 0 } else { 1 })
}

pub fn mixture_sweep_cmd(file: &ConfigFile, seed: Option<u64>, out: &Path) -> CmdResult {
    let cfg = SweepConfig::resolve(file, seed).map_err(usage)?;
    let TargetQ::LogMixture(h) = &cfg.target else {
        unreachable!("validated in resolve")
    };
    let output = RunOutput::new(out, "mixture-sweep", cfg.seed, &cfg).map_err(usage)?;
    let rows = mixture_sweep(&cfg.k_list, h, &cfg.budget, cfg.seed).map_err(usage)?;
    let table = rows.iter().map(|r| {
        vec![
            r.k.to_string(),
            if r.reverse_kl.is_some() {
                "ok"
            } else {
                "failed"
            }
            .to_string(),
            r.reverse_kl.map_or_else(String::new, fmt_f64),
        ]
    });
    output
        .write_csv(
            "mixture_sweep.csv",
            &header(&["k", "status", "reverse_kl"], "", 0),
            table,
        )
        .map_err(runtime)?;
    let trace_rows = rows.iter().flat_map(|r| {
        r.trace
            .iterates
            .iter()
            .map(move |it| vec![r.k.to_string(), it.step.to_string(), fmt_f64(it.objective)])
    });
    output
        .write_csv(
            "mixture_sweep_trace.csv",
            &header(&["k", "step", "loss"], "", 0),
            trace_rows,
        )
        .map_err(runtime)?;
    let results: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "k": r.k,
                "reverse_kl": r.reverse_kl,
                "error": r.error,
                "policy": r.policy,
            })
        })
        .collect();
    output
        .write_json("mixture_sweep.json", json!({"rows": results}))
        .map_err(runtime)?;
    for r in &rows {
        match (&r.reverse_kl, &r.error) {
            (Some(kl), _) => println!("K={}: reverse KL = {kl:.6}", r.k),
            (None, Some(e)) => println!("K={}: failed ({e})", r.k),
            _ => {}
        }
    }
    if rows.iter().all(|r| r.reverse_kl.is_none()) {
        return Err(Failure::Runtime("every mixture size failed".into()));
    }
    Ok(0)
}

fn write_descent_trace(
    output: &RunOutput,
    trace: &OptimTrace,
    dim: usize,
) -> std::result::Result<(), Failure> {
    let rows = trace.iterates.iter().map(|it| {
        let mut row = vec![it.step.to_string(), fmt_f64(it.objective)];
        row.extend(it.params.iter().map(|v| fmt_f64(*v)));
        row
    });
    output
        .write_csv(
            "optimize.csv",
            &header(&["step", "objective"], "p", dim),
            rows,
        )
        .map_err(runtime)?;
    Ok(())
}

pub fn optimize_cmd(file: &ConfigFile, seed: Option<u64>, out: &Path) -> CmdResult {
    let cfg = OptimizeConfig::resolve(file, seed).map_err(usage)?;
    let problem = &cfg.problem;
    let output = RunOutput::new(out, "optimize", cfg.seed, &cfg).map_err(usage)?;
    let dim = problem.policy.param_count();
    let descent = DescentConfig {
        lr: cfg.lr,
        iters: cfg.iters,
        batch: cfg.batch,
        seed: cfg.seed,
        record_every: cfg.record_every,
    };
    match optimize(
        cfg.estimator,
        &problem.policy,
        &problem.target,
        &problem.buffer(),
        &descent,
    ) {
        Ok((policy, trace)) => {
            write_descent_trace(&output, &trace, dim)?;
            let first = trace.iterates.first().map(|i| i.objective);
            let last = trace.iterates.last().map(|i| i.objective);
            output
                .write_json(
                    "optimize.json",
                    json!({
                        "estimator": cfg.estimator,
                        "initial_objective": first,
                        "final_objective": last,
                        "final_policy": policy,
                        "diverged": false,
                    }),
                )
                .map_err(runtime)?;
            println!(
                "optimize ({}): objective {:.6} -> {:.6}",
                cfg.estimator,
                first.unwrap_or(f64::NAN),
                last.unwrap_or(f64::NAN)
            );
            Ok(0)
        }
        Err(Error::Divergence { step, trace }) => {
            write_descent_trace(&output, &trace, dim)?;
            output
                .write_json(
                    "optimize.json",
                    json!({"diverged": true, "diverged_at_step": step}),
                )
                .map_err(runtime)?;
            Err(Failure::Runtime(format!(
                "optimize diverged at step {step}"
            )))
        }
        Err(e) => Err(runtime(e)),
    }
}
