//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any gated criterion fails.

use std::f64::consts::TAU;
use std::process::{Command, ExitCode};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use wsn_consensus::consensus::{decentralized_mle, run_average_consensus, AdmmConfig};
use wsn_consensus::experiment::{
    build_scenario, compress, optimize_with_reselection, run_convergence, trial_seeds,
    variance_under, ExperimentConfig, NoiseSpec,
};
use wsn_consensus::fusion::{
    decompose_information, ml_estimate, ml_variance, received_vector, GlobalModel,
};
use wsn_consensus::network::{
    complex_gaussian, sample_observations, GainDomain, GainVector, NetworkModel,
};
use wsn_consensus::optimizer::{
    build_q, build_r, eta, eta0_bound, g_value, optimize, update_y, OptimizerConfig, YMethod,
};
use wsn_consensus::topology::{random_connected_graph, GraphModel};

const MASTER: u64 = 20_240_917;

struct Outcome {
    passed: bool,
    detail: String,
}

type Criterion = (&'static str, &'static str, bool, fn() -> Outcome);

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn domain_of(k: usize) -> GainDomain {
    if k.is_multiple_of(2) {
        GainDomain::FixedEnergy
    } else {
        GainDomain::Unimodular
    }
}

fn scenario(n: usize, trial: usize, cfg: &ExperimentConfig) -> NetworkModel {
    build_scenario(cfg, n, &trial_seeds(MASTER, n, trial)).expect("scenario")
}

fn random_compressed(n: usize, trial: usize) -> (NetworkModel, GainVector, GlobalModel) {
    let cfg = ExperimentConfig::default();
    let model = scenario(n, trial, &cfg);
    let mut rng = ChaCha20Rng::seed_from_u64(trial_seeds(MASTER, n, trial).gains);
    let a = GainVector::random(n, domain_of(trial), &mut rng);
    let (_, gm) = compress(&model, &a).expect("compress");
    (model, a, gm)
}

fn ac1() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(MASTER);
    let mut worst: f64 = 0.0;
    let mut max_iters = 0;
    for case in 0..100usize {
        let n = rng.random_range(2..=20);
        let model = if case.is_multiple_of(2) {
            GraphModel::Geometric { radius: 0.5 }
        } else {
            GraphModel::Gnp { p: 0.3 }
        };
        let g = random_connected_graph(n, model, rng.next_u64()).expect("graph");
        let x: Vec<Complex64> = (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let direct = x.iter().sum::<Complex64>() / n as f64;
        for rho in [0.1, 0.5, 2.0] {
            let cfg = AdmmConfig {
                rho,
                max_iter: 10_000,
                tol: 1e-8,
            };
            match run_average_consensus(&g, &cfg, &x) {
                Ok(t) => {
                    let d = t.last().iter().map(|y| (y - direct).norm()).fold(0.0, f64::max);
                    worst = worst.max(d);
                    max_iters = max_iters.max(t.iterations());
                }
                Err(e) => return outcome(false, format!("case {case} n={n} rho={rho}: {e}")),
            }
        }
    }
    outcome(
        worst <= 1e-8,
        format!("300 runs, max error {worst:.2e}, max iterations {max_iters}"),
    )
}

fn ac2() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(MASTER ^ 2);
    let admm = AdmmConfig::default();
    let mut worst: f64 = 0.0;
    for t in 0..50 {
        let n = rng.random_range(2..=16);
        let (model, a, gm) = random_compressed(n, t);
        let obs = sample_observations(&model, rng.next_u64());
        let y = received_vector(&model, &gm, &a, &obs);
        let central = ml_estimate(&y, &gm, &a).expect("estimate");
        let d = decompose_information(&gm, &a, Some(&y)).expect("decomposition");
        let trace = match decentralized_mle(&model.graph, &admm, &d.information, &d.state.unwrap())
        {
            Ok(tr) => tr,
            Err(e) => return outcome(false, format!("scenario {t}: {e}")),
        };
        for e in trace.final_estimates() {
            let err = e.map_or(f64::INFINITY, |e| (e - central).norm() / central.norm());
            worst = worst.max(err);
        }
    }
    let cfg = ExperimentConfig {
        n: 16,
        theta: [10.0, 0.0],
        master_seed: MASTER,
        ..Default::default()
    };
    let run = run_convergence(&cfg).expect("n=16 run");
    let fig = run.trace.final_disagreement(run.reference);
    outcome(
        worst <= 1e-6 && fig <= 1e-6,
        format!(
            "50 scenarios max rel error {worst:.2e}; n=16 theta=10 final disagreement {fig:.2e} after {} iterations",
            run.trace.iterations()
        ),
    )
}

fn ac3() -> Outcome {
    const DRAWS: usize = 100_000;
    let mut details = Vec::new();
    let mut passed = true;
    for (k, n) in [2usize, 3, 4, 5, 6].into_iter().enumerate() {
        let cfg = ExperimentConfig {
            sigma_v_sq: NoiseSpec::Scalar(0.5 + 0.25 * k as f64),
            theta: [3.0, -1.0],
            ..Default::default()
        };
        let model = scenario(n, 1000 + k, &cfg);
        let mut rng = ChaCha20Rng::seed_from_u64(MASTER + k as u64);
        let a = GainVector::random(n, domain_of(k), &mut rng);
        let (_, gm) = compress(&model, &a).expect("compress");
        let predicted = ml_variance(&gm, &a).expect("variance");
        let theta = model.theta;
        let sum: f64 = (0..DRAWS)
            .into_par_iter()
            .map(|d| {
                let obs = sample_observations(&model, (k as u64) << 40 | d as u64);
                let y = received_vector(&model, &gm, &a, &obs);
                (ml_estimate(&y, &gm, &a).expect("estimate") - theta).norm_sqr()
            })
            .sum();
        let empirical = sum / DRAWS as f64;
        let r = rel(empirical, predicted);
        passed &= r <= 0.05;
        details.push(format!("n={n} {:.2}%", 100.0 * r));
    }
    outcome(passed, format!("relative gaps: {}", details.join(", ")))
}

fn ac4() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(MASTER ^ 4);
    let cfg = OptimizerConfig::default();
    let mut cycles = 0;
    for t in 0..200 {
        let n = rng.random_range(1..=12);
        let (_, _, gm) = random_compressed(n, 5000 + t);
        let domain = domain_of(t);
        let a0 = GainVector::random(n, domain, &mut rng);
        let trace = match optimize(&gm, &cfg, &a0) {
            Ok(tr) => tr,
            Err(e) => return outcome(false, format!("instance {t}: {e}")),
        };
        cycles += trace.outer_cycles();
        for w in trace.eta.windows(2) {
            if w[1] > w[0] + 1e-10 {
                return outcome(false, format!("instance {t}: eta rose {} -> {}", w[0], w[1]));
            }
        }
        let a = trace.gains.as_slice();
        let ok = match domain {
            GainDomain::FixedEnergy => {
                rel(a.iter().map(|x| x.norm_sqr()).sum(), n as f64) <= 1e-9
            }
            GainDomain::Unimodular => a.iter().all(|x| (x.norm() - 1.0).abs() <= 1e-12),
        };
        if !ok {
            return outcome(false, format!("instance {t}: final gains infeasible"));
        }
    }
    outcome(true, format!("200 instances, {cycles} outer cycles in total"))
}

fn ac5() -> Outcome {
    let mut worst_chain: f64 = 0.0;
    let mut worst_paths: f64 = 0.0;
    for t in 0..200 {
        let n = 1 + t % 12;
        let (_, a, gm) = random_compressed(n, 7000 + t);
        let eta0 = eta0_bound(&gm, 1.01).expect("eta0");
        let r = build_r(&gm, &a, eta0).expect("R");
        let schur = eta(&gm, &a, eta0).expect("eta");
        let mut e1 = DVector::zeros(r.nrows());
        e1[0] = Complex64::new(1.0, 0.0);
        let inv = r.clone().lu().solve(&e1).expect("R invertible");
        let via_inverse = 1.0 / inv[0].re;
        let ys = update_y(&r, YMethod::Solve).expect("solve");
        let yg = update_y(&r, YMethod::GramSchmidt).expect("gram-schmidt");
        let g = g_value(&ys, &r);
        worst_chain = worst_chain.max(rel(schur, via_inverse)).max(rel(schur, g));
        let gap = (ys.as_vector() - yg.as_vector()).norm() / ys.as_vector().norm();
        worst_paths = worst_paths.max(gap);
    }
    outcome(
        worst_chain <= 1e-8 && worst_paths <= 1e-8,
        format!("chain max rel {worst_chain:.2e}, y paths max rel {worst_paths:.2e}"),
    )
}

fn ac6() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(MASTER ^ 6);
    let mut worst: f64 = 0.0;
    for t in 0..500 {
        let n = rng.random_range(1..=12);
        let (_, a, gm) = random_compressed(n, 9000 + t);
        let yt: Vec<Complex64> = (0..gm.row_count())
            .map(|_| complex_gaussian(&mut rng, 1.0))
            .collect();
        let h = gm.h_dense();
        let av = DVector::from_column_slice(a.as_slice());
        let dv = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                av[i] * gm.v()[i]
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let da = nalgebra::DMatrix::from_diagonal(&av);
        let ytv = DVector::from_column_slice(&yt);
        // y~^H H D V D^H H^H y~ with dense matrices.
        let lhs = (ytv.adjoint() * &h * &dv * da.adjoint() * h.adjoint() * &ytv)[(0, 0)];
        let q = build_q(&gm, &yt, 1.0).expect("Q");
        let block = q.q.view((0, 0), (n, n)).into_owned();
        let rhs = av.dotc(&(&block * &av));
        let err = (lhs - rhs).norm() / lhs.norm().max(1e-300);
        worst = worst.max(err);
    }
    outcome(worst <= 1e-9, format!("500 cases, max rel error {worst:.2e}"))
}

fn ac7() -> Outcome {
    let cfg = ExperimentConfig::default();
    let mut details = Vec::new();
    let mut passed = true;
    for domain in [GainDomain::FixedEnergy, GainDomain::Unimodular] {
        let results: Vec<Result<(f64, f64), String>> = (0..300)
            .into_par_iter()
            .map(|t| {
                let model = scenario(cfg.n, t, &cfg);
                let out = optimize_with_reselection(&model, &cfg.opt, domain, cfg.reselect_rounds)
                    .map_err(|e| format!("trial {t}: {e}"))?;
                Ok((out.initial_variance(), out.final_variance()))
            })
            .collect();
        let mut improved = 0;
        let mut gain = 0.0;
        for r in &results {
            match r {
                Ok((init, fin)) => {
                    if fin <= init {
                        improved += 1;
                    }
                    gain += fin / init;
                }
                Err(e) => details.push(e.clone()),
            }
        }
        passed &= improved == 300;
        details.push(format!(
            "{domain:?}: {improved}/300 improved, mean final/initial {:.4}",
            gain / 300.0
        ));
    }
    outcome(passed, details.join("; "))
}

/// Soft criterion: returned as (met, detail) and never gates the exit code.
fn ac8() -> Outcome {
    const GRID: usize = 720;
    let cfg = ExperimentConfig::default();
    let gaps: Vec<(usize, f64)> = (0..50)
        .map(|seed| {
            let model = scenario(2, 20_000 + seed, &cfg);
            let out =
                optimize_with_reselection(&model, &cfg.opt, GainDomain::Unimodular, 5).expect("opt");
            let best = (0..GRID)
                .into_par_iter()
                .map(|i| {
                    (0..GRID)
                        .map(|j| {
                            let a = GainVector::new(
                                vec![
                                    Complex64::from_polar(1.0, TAU * i as f64 / GRID as f64),
                                    Complex64::from_polar(1.0, TAU * j as f64 / GRID as f64),
                                ],
                                GainDomain::Unimodular,
                            )
                            .expect("grid point");
                            variance_under(&model, &a).expect("variance")
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .reduce(|| f64::INFINITY, f64::min);
            (seed, (out.final_variance() - best) / best)
        })
        .collect();
    let within = gaps.iter().filter(|(_, g)| *g <= 0.02).count();
    let mut detail = format!("{within}/50 within 2% of grid optimum");
    for (seed, g) in gaps.iter().filter(|(_, g)| *g > 0.02) {
        detail.push_str(&format!("; seed {seed} gap {:.2}%", 100.0 * g));
    }
    let worst = gaps.iter().map(|(_, g)| *g).fold(f64::NEG_INFINITY, f64::max);
    detail.push_str(&format!("; largest gap {:.2e}", worst));
    outcome(within * 10 >= 50 * 9, detail)
}

fn ac9() -> Outcome {
    let mut worst: f64 = 0.0;
    for t in 0..100 {
        let (_, a, gm) = random_compressed(2 + t % 15, 30_000 + t);
        let d = decompose_information(&gm, &a, None).expect("decomposition");
        let total: f64 = d.information.iter().sum();
        let h = gm.h_dense();
        let av = DVector::from_column_slice(a.as_slice());
        let ha = &h * &av;
        let c = gm.noise_covariance(&a).expect("covariance");
        // a^H H^H C^{-1} H a with dense H.
        let global: f64 = ha.iter().zip(&c).map(|(x, c)| x.norm_sqr() / c).sum();
        worst = worst.max(rel(total, global));
    }
    outcome(worst <= 1e-12, format!("100 models, max rel error {worst:.2e}"))
}

fn ac10() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let run = |name: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_wsn-consensus"))
            .args(["sweep", "--seed", "11", "--trials", "12", "--n-list", "4,8"])
            .arg("--out-dir")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
        Ok((read("sweep_summary.csv")?, read("sweep_trials.csv")?))
    };
    match (run("a"), run("b")) {
        (Ok(a), Ok(b)) => outcome(
            a == b,
            format!("summary {} bytes, trials {} bytes, identical: {}", a.0.len(), a.1.len(), a == b),
        ),
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    // `cargo test -- --list` style invocations expect no work to be done.
    if args.iter().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [Criterion; 10] = [
        ("AC1", "consensus reaches the mean", true, ac1),
        ("AC2", "decentralized equals centralized MLE", true, ac2),
        ("AC3", "variance formula matches Monte Carlo", true, ac3),
        ("AC4", "optimizer monotone and feasible", true, ac4),
        ("AC5", "Schur complement chain and y paths", true, ac5),
        ("AC6", "Hadamard identity", true, ac6),
        ("AC7", "improvement over all-ones baseline", true, ac7),
        ("AC8", "small-instance near-optimality (soft)", false, ac8),
        ("AC9", "information decomposition", true, ac9),
        ("AC10", "sweep output is deterministic", true, ac10),
    ];
    let mut failed = false;
    for (id, name, gated, f) in criteria {
        let o = f();
        let tag = match (o.passed, gated) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "MISS",
        };
        println!("{id} {tag} {name}: {}", o.detail);
        failed |= gated && !o.passed;
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
