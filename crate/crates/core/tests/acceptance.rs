//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the report is always printed.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use actorlab::estimators::{reparam_grad_single, reparam_integrand};
use actorlab::experiments::gradcheck::random_instance;
use actorlab::experiments::{
    fd_loss_gradient, kl_example, mixture_sweep, variance_study, StudyConfig, SweepBudget,
};
use actorlab::quadrature::{simpson, Grid};
use actorlab::rng::rng_from_seed;
use actorlab::{
    EstimatorKind, GaussianPolicy, MixtureLogQ, MixturePolicy, Policy, QuadraticQ, StateBuffer,
    TargetQ,
};
use rand::Rng;

const STEP: f64 = 1e-5;

// Oracle kept separate from the library's own finite-difference helpers.
fn central(x: &[f64], f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = p[i];
            p[i] = x0 + STEP;
            let up = f(&p);
            p[i] = x0 - STEP;
            let down = f(&p);
            p[i] = x0;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / 1f64.max(x.abs()).max(y.abs()))
        .fold(0.0, f64::max)
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn criterion(n: usize, name: &str, limit: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = run();
    let elapsed = start.elapsed();
    let in_time = elapsed < limit;
    let ok = out.passed && in_time;
    println!(
        "[{}] criterion {n}: {name}: {} ({:.2}s, limit {}s{})",
        if ok { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", over time" }
    );
    ok
}

fn gradient_correctness() -> Outcome {
    let mut worst = [0.0f64; 4];
    for seed in 0..100u64 {
        let inst = random_instance(1000 + seed, 1);
        let g = &inst.gaussian;
        let (s, a, eps) = (&inst.state, &inst.action, &inst.noise);
        let params = g.params();
        let ad = g.action_dim();
        let sd = g.state_dim();
        let at = |p: &[f64]| GaussianPolicy::from_params(ad, sd, p).unwrap();

        let numeric = central(&params, &|p| at(p).log_prob(s, a).unwrap());
        worst[0] = worst[0].max(rel(&g.grad_logprob_params(s, a).unwrap(), &numeric));

        let numeric = central(a, &|x| g.log_prob(s, x).unwrap());
        worst[1] = worst[1].max(rel(&g.grad_logprob_action(s, a).unwrap(), &numeric));

        let jac = g.grad_f_params(s, eps).unwrap();
        for i in 0..ad {
            let numeric = central(&params, &|p| at(p).reparameterize(s, eps).unwrap()[i]);
            worst[2] = worst[2].max(rel(jac.row(i), &numeric));
        }

        for q in [&inst.quadratic, &inst.log_mixture] {
            let numeric = central(a, &|x| q.q_eval(s, x).unwrap());
            worst[3] = worst[3].max(rel(&q.grad_q_action(s, a).unwrap(), &numeric));
        }
    }
    Outcome {
        passed: worst.iter().all(|w| *w < 1e-6),
        detail: format!(
            "worst rel err logprob/params {:.1e}, logprob/action {:.1e}, f/params {:.1e}, Q/action {:.1e} (tol 1e-6)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    }
}

fn total_derivative() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let inst = random_instance(2000 + seed, 1);
        let policy = Policy::from(inst.gaussian.clone());
        let q = if seed % 2 == 0 {
            &inst.quadratic
        } else {
            &inst.log_mixture
        };
        let (s, eps) = (&inst.state, &inst.noise);
        let numeric = central(&policy.params(), &|p| {
            reparam_integrand(&policy.with_params(p).unwrap(), q, s, eps).unwrap()
        });
        let analytic = reparam_grad_single(&policy, q, s, eps).unwrap().g;
        worst = worst.max(rel(&analytic, &numeric));
    }
    Outcome {
        passed: worst < 1e-5,
        detail: format!("worst rel err {worst:.1e} over 100 configs (tol 1e-5)"),
    }
}

fn unbiasedness() -> Outcome {
    let mut worst_z = 0.0f64;
    let mut failures = 0;
    for seed in 0..10u64 {
        let inst = random_instance(3000 + seed, 1);
        let policy = Policy::from(inst.gaussian.clone());
        let q = if seed % 2 == 0 {
            &inst.quadratic
        } else {
            &inst.log_mixture
        };
        let mut rng = rng_from_seed(seed);
        let sd = inst.state.len();
        let mut states = vec![inst.state.clone()];
        states.push((0..sd).map(|_| rng.random_range(-1.0..1.0)).collect());
        let buffer = StateBuffer::new(states).unwrap();
        let oracle = fd_loss_gradient(&policy, q, &buffer, STEP).unwrap();
        for (kind, m) in [
            (EstimatorKind::Reparam, 100_000),
            (EstimatorKind::ScoreFn, 1_000_000),
        ] {
            let cfg = StudyConfig {
                n: 1,
                replicas: m,
                seed: 77 + seed,
                common_random_numbers: false,
            };
            let st = variance_study(kind, &policy, q, &buffer, &cfg).unwrap();
            for ((mean, se), truth) in st.mean.iter().zip(&st.stderr).zip(&oracle) {
                let z = (mean - truth).abs() / se.max(f64::MIN_POSITIVE);
                worst_z = worst_z.max(z);
                if z > 4.0 {
                    failures += 1;
                }
            }
        }
    }
    Outcome {
        passed: failures == 0,
        detail: format!("worst |mean - fd| = {worst_z:.2} SE, {failures} coordinates beyond 4 SE"),
    }
}

fn kl_descent() -> Outcome {
    let mut finals = Vec::new();
    for phi0 in [-3.0, 3.0] {
        match kl_example(0.5, 50, phi0) {
            Ok(trace) => finals.push(trace.final_params()[0]),
            Err(_) => finals.push(f64::NAN),
        }
    }
    Outcome {
        passed: finals.iter().all(|p| p.abs() < 0.02),
        detail: format!(
            "final phi from -3: {:.2e}, from 3: {:.2e} (tol 0.02)",
            finals[0], finals[1]
        ),
    }
}

fn mixture_reduction() -> Outcome {
    let mut worst = 0.0f64;
    let mut rng = rng_from_seed(5);
    for seed in 0..100u64 {
        let ad = 1 + (seed % 2) as usize;
        let inst = random_instance(5000 + seed, ad);
        let g = inst.gaussian.clone();
        let m = MixturePolicy::single(g.clone());
        let (s, _) = (&inst.state, ());
        let a: Vec<f64> = (0..ad).map(|_| rng.random_range(-3.0..3.0)).collect();
        worst = worst.max((g.log_prob(s, &a).unwrap() - m.log_prob(s, &a).unwrap()).abs());
        let (_, gg) = g.log_prob_and_grad_params(s, &a).unwrap();
        let (_, mg) = m.log_prob_and_grad_params(s, &a).unwrap();
        assert_eq!(mg.len(), gg.len() + 1);
        for (x, y) in gg.iter().zip(&mg) {
            worst = worst.max((x - y).abs());
        }
        worst = worst.max(mg[gg.len()].abs());
        let ga = g.grad_logprob_action(s, &a).unwrap();
        let ma = m.grad_logprob_action(s, &a).unwrap();
        for (x, y) in ga.iter().zip(&ma) {
            worst = worst.max((x - y).abs());
        }
    }
    Outcome {
        passed: worst <= 1e-12,
        detail: format!("worst abs diff {worst:.1e} over 100 points (tol 1e-12)"),
    }
}

fn normalization() -> Outcome {
    let mut worst_density = 0.0f64;
    let mut worst_partition = 0.0f64;
    for seed in 0..20u64 {
        let inst = random_instance(6000 + seed, 1);
        let s = &inst.state;
        for policy in [
            Policy::from(inst.gaussian.clone()),
            Policy::from(inst.mixture.clone()),
        ] {
            let (lo, hi) = policy.support(s, 12.0).unwrap();
            let grid = Grid::new(lo, hi, 4000).unwrap();
            let mass = simpson(&grid, |x| policy.log_prob(s, &[x]).unwrap().exp()).unwrap();
            worst_density = worst_density.max((mass - 1.0).abs());
        }
        let TargetQ::LogMixture(h) = &inst.log_mixture else {
            unreachable!()
        };
        for h in [h.clone(), MixtureLogQ::canonical()] {
            let (lo, hi) = h.support();
            let grid = Grid::new(lo, hi, 4000).unwrap();
            let mass = simpson(&grid, |x| h.log_density(&[x]).unwrap().exp()).unwrap();
            worst_density = worst_density.max((mass - 1.0).abs());
        }
        let q = &inst.quadratic;
        let grid = q.default_grid(s).unwrap();
        let numeric = q.log_partition(s, &grid).unwrap();
        let exact = q.log_partition_closed_form(s).unwrap();
        worst_partition = worst_partition.max((numeric - exact).abs());
    }
    let q: TargetQ = QuadraticQ::constant(&[0.7], 3.5, 0).unwrap().into();
    let numeric = q.log_partition(&[], &q.default_grid(&[]).unwrap()).unwrap();
    worst_partition =
        worst_partition.max((numeric - q.log_partition_closed_form(&[]).unwrap()).abs());
    Outcome {
        passed: worst_density <= 1e-8 && worst_partition <= 1e-10,
        detail: format!(
            "worst |mass - 1| {worst_density:.1e} (tol 1e-8), worst log-partition error {worst_partition:.1e} (tol 1e-10)"
        ),
    }
}

fn run_variance(out: &Path) -> Result<(i32, Vec<u8>, serde_json::Value), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_actorlab"))
        .args(["variance", "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    let csv = std::fs::read(out.join("variance.csv")).map_err(|e| e.to_string())?;
    let summary: serde_json::Value = serde_json::from_slice(
        &std::fs::read(out.join("variance.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    Ok((status.status.code().unwrap_or(-1), csv, summary))
}

fn variance_harness() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let runs: Result<Vec<_>, String> = ["a", "b"]
        .iter()
        .map(|d| run_variance(&dir.path().join(d)))
        .collect();
    let runs = match runs {
        Ok(r) => r,
        Err(e) => {
            return Outcome {
                passed: false,
                detail: format!("variance command failed: {e}"),
            }
        }
    };
    let identical = runs[0].1 == runs[1].1;
    let summary = &runs[0].2["results"];
    let scaling = summary["scaling_check"] == "PASS";
    let agreement = summary["agreement"] == "PASS";
    let mut worst = 0.0f64;
    if let Some(kinds) = summary["scaling"].as_object() {
        for entries in kinds.values() {
            for e in entries.as_array().into_iter().flatten() {
                for r in e["n_times_variance_over_single"]
                    .as_array()
                    .into_iter()
                    .flatten()
                {
                    worst = worst.max((r.as_f64().unwrap_or(f64::NAN) - 1.0).abs());
                }
            }
        }
    }
    Outcome {
        passed: runs[0].0 == 0 && identical && scaling && agreement,
        detail: format!(
            "worst |n var(n)/var(1) - 1| {worst:.3} (tol 0.10), means agree: {agreement}, csv byte-identical: {identical}, exit {}",
            runs[0].0
        ),
    }
}

fn sweep() -> Outcome {
    let rows = mixture_sweep(
        &[1, 2],
        &MixtureLogQ::canonical(),
        &SweepBudget::default(),
        42,
    )
    .unwrap();
    let kl = |k: usize| {
        rows.iter()
            .find(|r| r.k == k)
            .and_then(|r| r.reverse_kl)
            .unwrap_or(f64::NAN)
    };
    let (k1, k2) = (kl(1), kl(2));
    Outcome {
        passed: k2 <= k1 - 0.1,
        detail: format!("reverse KL K=1 {k1:.4}, K=2 {k2:.2e} (need K=2 <= K=1 - 0.1)"),
    }
}

fn main() {
    let s = Duration::from_secs;
    let results = [
        criterion(
            1,
            "analytic gradients vs finite differences",
            s(10),
            gradient_correctness,
        ),
        criterion(
            2,
            "reparameterized estimate is the total derivative",
            s(10),
            total_derivative,
        ),
        criterion(3, "estimators are unbiased", s(120), unbiasedness),
        criterion(
            4,
            "bimodal forward-KL descent reaches phi = 0",
            s(1),
            kl_descent,
        ),
        criterion(
            5,
            "single-component mixture reduces to Gaussian",
            s(1),
            mixture_reduction,
        ),
        criterion(
            6,
            "densities normalize, partition matches closed form",
            s(5),
            normalization,
        ),
        criterion(7, "variance harness", s(120), variance_harness),
        criterion(
            8,
            "mixture sweep improves on a single Gaussian",
            s(300),
            sweep,
        ),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
