use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{build_scenario, compress, ExperimentConfig, TrialSeeds};
use crate::consensus::{
    decentralized_mle, disagreement, mean, run_with_sign, step_with_multiplier_sign, AdmmConfig, ConsensusState,
};
use crate::fusion::{decompose_information, ml_estimate, received_vector, GlobalModel};
use crate::network::{complex_gaussian, sample_observations, GainDomain, GainVector, NetworkModel};
use crate::optimizer::{
    build_q_with, build_r, eta, eta0_bound, g_value, hadamard_block, optimize, power_iterate,
    update_y, HadamardForm, OptimizerConfig, YMethod,
};
use crate::topology::{random_connected_graph, Graph, GraphModel};

pub const CASES: usize = 100;
pub const MAX_NODES: usize = 8;

/// Deliberate defects used to show that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Multiplier update applied with the wrong sign.
    LambdaSignFlip,
    /// `(b b^H) V` in place of `(b b^H) (.) V`.
    HadamardMatrixProduct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    /// Cases run before stopping; equals `CASES` on success.
    pub cases: usize,
    /// Description of the first failing case.
    pub failure: Option<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheckReport {
    pub seed: u64,
    pub results: Vec<CheckResult>,
}

impl SelfCheckReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(CheckResult::passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.results.iter().find(|r| !r.passed())
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            match &r.failure {
                None => out.push_str(&format!("PASS {} ({} cases)\n", r.name, r.cases)),
                Some(f) => out.push_str(&format!("FAIL {} (case {}): {}\n", r.name, r.cases, f)),
            }
        }
        out
    }
}

type Check = fn(&mut ChaCha20Rng, Fault) -> Result<(), String>;

const CHECKS: &[(&str, Check)] = &[
    ("topology_connected_round_trip", check_topology),
    ("gain_projection_feasible", check_projection),
    ("consensus_reaches_mean", check_consensus_mean),
    ("consensus_multiplier_sum_zero", check_multiplier_sum),
    ("selection_retains_each_sender_once", check_selection),
    ("information_decomposition_sums", check_decomposition),
    ("decentralized_equals_centralized", check_decentralized),
    ("schur_complement_chain", check_schur),
    ("hadamard_identity", check_hadamard),
    ("quadratic_form_matches_g", check_quad_form),
    ("power_iteration_monotone_feasible", check_power),
    ("optimizer_monotone_feasible", check_optimizer),
];

/// Runs every property on `CASES` random instances with at most
/// `MAX_NODES` nodes. Each property stops at its first failing case.
pub fn run_selfcheck(seed: u64, fault: Fault) -> SelfCheckReport {
    let results = CHECKS
        .iter()
        .enumerate()
        .map(|(idx, &(name, check))| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            for case in 0..CASES {
                if let Err(msg) = check(&mut rng, fault) {
                    return CheckResult {
                        name,
                        cases: case + 1,
                        failure: Some(msg),
                    };
                }
            }
            CheckResult {
                name,
                cases: CASES,
                failure: None,
            }
        })
        .collect();
    SelfCheckReport { seed, results }
}

fn sign(fault: Fault) -> f64 {
    if fault == Fault::LambdaSignFlip {
        -1.0
    } else {
        1.0
    }
}

fn form(fault: Fault) -> HadamardForm {
    if fault == Fault::HadamardMatrixProduct {
        HadamardForm::MatrixProduct
    } else {
        HadamardForm::Elementwise
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn random_domain(rng: &mut ChaCha20Rng) -> GainDomain {
    if rng.random_bool(0.5) {
        GainDomain::Unimodular
    } else {
        GainDomain::FixedEnergy
    }
}

fn random_graph(rng: &mut ChaCha20Rng) -> Result<Graph, String> {
    let n = rng.random_range(1..=MAX_NODES);
    let model = if rng.random_bool(0.5) {
        GraphModel::Geometric {
            radius: rng.random_range(0.3..0.9),
        }
    } else {
        GraphModel::Gnp {
            p: rng.random_range(0.3..0.9),
        }
    };
    random_connected_graph(n, model, rng.next_u64()).map_err(|e| e.to_string())
}

fn random_scenario(rng: &mut ChaCha20Rng) -> Result<NetworkModel, String> {
    let n = rng.random_range(1..=MAX_NODES);
    let cfg = ExperimentConfig {
        sigma_v_sq: super::NoiseSpec::PerNode((0..n).map(|_| rng.random_range(0.2..2.0)).collect()),
        sigma_n_sq: rng.random_range(0.05..1.0),
        theta: [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)],
        ..Default::default()
    };
    let seeds = TrialSeeds {
        graph: rng.next_u64(),
        channels: rng.next_u64(),
        noise: rng.next_u64(),
        gains: rng.next_u64(),
    };
    build_scenario(&cfg, n, &seeds).map_err(|e| e.to_string())
}

/// Scenario, random gains and the model compressed for them.
fn random_compressed(
    rng: &mut ChaCha20Rng,
) -> Result<(NetworkModel, GainVector, GlobalModel), String> {
    let model = random_scenario(rng)?;
    let a = GainVector::random(model.node_count(), random_domain(rng), rng);
    let (_, gm) = compress(&model, &a).map_err(|e| e.to_string())?;
    Ok((model, a, gm))
}

fn random_complex(rng: &mut ChaCha20Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| complex_gaussian(rng, 1.0)).collect()
}

fn check_topology(rng: &mut ChaCha20Rng, _: Fault) -> Result<(), String> {
    let g = random_graph(rng)?;
    if g.bfs_from_zero().len() != g.node_count() {
        return Err("graph is disconnected".into());
    }
    if g.edges().iter().any(|&(i, j)| i >= j) {
        return Err("edge not stored as i < j".into());
    }
    let back = Graph::from_json(&g.to_json()).map_err(|e| e.to_string())?;
    if back != g || back.to_json() != g.to_json() {
        return Err("JSON round trip changed the graph".into());
    }
    Ok(())
}

fn check_projection(rng: &mut ChaCha20Rng, _: Fault) -> Result<(), String> {
    let n = rng.random_range(1..=MAX_NODES);
    let v = random_complex(rng, n);
    for domain in [GainDomain::FixedEnergy, GainDomain::Unimodular] {
        let p = domain.project(&v).ok_or("projection of a nonzero vector failed")?;
        if !domain.contains(&p) {
            return Err(format!("{domain:?} projection is infeasible"));
        }
    }
    Ok(())
}

fn random_admm(rng: &mut ChaCha20Rng) -> AdmmConfig {
    AdmmConfig {
        rho: [0.1, 0.5, 2.0][rng.random_range(0..3)],
        ..Default::default()
    }
}

fn check_consensus_mean(rng: &mut ChaCha20Rng, fault: Fault) -> Result<(), String> {
    let g = random_graph(rng)?;
    let cfg = random_admm(rng);
    let x = random_complex(rng, g.node_count());
    let traj = run_with_sign(&g, &cfg, &x, sign(fault)).map_err(|e| e.to_string())?;
    let worst = disagreement(traj.last(), mean(&x));
    if !(worst <= 1e-8) {
        return Err(format!("final disagreement {worst:e}"));
    }
    Ok(())
}

fn check_multiplier_sum(rng: &mut ChaCha20Rng, fault: Fault) -> Result<(), String> {
    let g = random_graph(rng)?;
    let cfg = random_admm(rng);
    let x: Vec<f64> = (0..g.node_count()).map(|_| rng.random_range(-5.0..5.0)).collect();
    let mut state = ConsensusState::zeros(g.node_count());
    for _ in 0..20 {
        state = step_with_multiplier_sign(&g, &cfg, &state, &x, sign(fault));
        let s: f64 = state.lambda.iter().sum();
        let scale: f64 = state.lambda.iter().map(|l| l.abs()).sum::<f64>().max(1.0);
        if s.abs() > 1e-12 * scale {
            return Err(format!("sum of multipliers {s:e} at round {}", state.k));
        }
    }
    Ok(())
}

fn check_selection(rng: &mut ChaCha20Rng, _: Fault) -> Result<(), String> {
    let model = random_scenario(rng)?;
    let a = GainVector::random(model.node_count(), random_domain(rng), rng);
    let (plan, gm) = compress(&model, &a).map_err(|e| e.to_string())?;
    let g = &model.graph;
    let mut count = vec![0usize; g.node_count()];
    let mut external = 0;
    for &(k, s) in gm.row_map() {
        count[s] += 1;
        if k != s {
            external += 1;
            if !g.has_edge(k, s) {
                return Err(format!("row ({k}, {s}) is not a link"));
            }
        }
    }
    if count.iter().any(|&c| c != 1) {
        return Err(format!("sender multiplicities {count:?}"));
    }
    if plan.discarded() != 2 * g.edge_count() - external {
        return Err(format!("discarded {} with {external} external rows", plan.discarded()));
    }
    Ok(())
}

fn check_decomposition(rng: &mut ChaCha20Rng, _: Fault) -> Result<(), String> {
    let (_, a, gm) = random_compressed(rng)?;
    let d = decompose_information(&gm, &a, None).map_err(|e| e.to_string())?;
    let total: f64 = d.information.iter().sum();
    let global = gm.information(&a).map_err(|e| e.to_string())?;
    if !rel_close(total, global, 1e-12) {
        return Err(format!("sum {total} vs global {global}"));
    }
    Ok(())
}

fn check_decentralized(rng: &mut ChaCha20Rng, _: Fault) -> Result<(), String> {
    let (model, a, gm) = random_compressed(rng)?;
    let obs = sample_observations(&model, rng.next_u64());
    let y = received_vector(&model, &gm, &a, &obs);
    let central = ml_estimate(&y, &gm, &a).map_err(|e| e.to_string())?;
    let d = decompose_information(&gm, &a, Some(&y)).map_err(|e| e.to_string())?;
    let state = d.state.expect("received vector supplied");
    let mut cfg = random_admm(rng);
    cfg.max_iter = 20_000;
    let trace =
        decentralized_mle(&model.graph, &cfg, &d.information, &state).map_err(|e| e.to_string())?;
    let worst = trace.final_disagreement(central);
    if !(worst <= 1e-6 * central.norm().max(1.0)) {
        return Err(format!("local estimates off by {worst:e}"));
    }
    Ok(())
}

fn check_schur(rng: &mut ChaCha20Rng, _: Fault) -> Result<(), String> {
    let (_, a, gm) = random_compressed(rng)?;
    let eta0 = eta0_bound(&gm, 1.01).map_err(|e| e.to_string())?;
    let r = build_r(&gm, &a, eta0).map_err(|e| e.to_string())?;
    let schur = eta(&gm, &a, eta0).map_err(|e| e.to_string())?;
    let mut e1 = DVector::zeros(r.nrows());
    e1[0] = Complex64::new(1.0, 0.0);
    let inv = r.clone().lu().solve(&e1).ok_or("R is singular")?;
    let via_inverse = 1.0 / inv[0].re;
    let ys = update_y(&r, YMethod::Solve).map_err(|e| e.to_string())?;
    let yg = update_y(&r, YMethod::GramSchmidt).map_err(|e| e.to_string())?;
    let g = g_value(&ys, &r);
    if !rel_close(schur, via_inverse, 1e-8) || !rel_close(schur, g, 1e-8) {
        return Err(format!("schur {schur}, inverse {via_inverse}, g {g}"));
    }
    let gap = (ys.as_vector() - yg.as_vector()).norm();
    if gap > 1e-8 * ys.as_vector().norm() {
        return Err(format!("y paths differ by {gap:e}"));
    }
    Ok(())
}

fn check_hadamard(rng: &mut ChaCha20Rng, fault: Fault) -> Result<(), String> {
    let (_, a, gm) = random_compressed(rng)?;
    let yt = random_complex(rng, gm.row_count());
    let h = gm.h_dense();
    let av = DVector::from_column_slice(a.as_slice());
    let ytv = DVector::from_column_slice(&yt);
    // y~^H H D V D^H H^H y~ with D = diag(a).
    let w = h.adjoint() * &ytv;
    let direct: f64 = (0..gm.node_count())
        .map(|i| (w[i].conj() * av[i]).norm_sqr() * gm.v()[i])
        .sum();
    let b: Vec<Complex64> = w.iter().copied().collect();
    let block = hadamard_block(&b, gm.v(), form(fault));
    let quad = av.dotc(&(&block * &av));
    if !rel_close(direct, quad.re, 1e-9) || quad.im.abs() > 1e-9 * direct.abs().max(1e-12) {
        return Err(format!("direct {direct} vs quadratic form {quad}"));
    }
    Ok(())
}

fn check_quad_form(rng: &mut ChaCha20Rng, fault: Fault) -> Result<(), String> {
    let (_, a, gm) = random_compressed(rng)?;
    let eta0 = eta0_bound(&gm, 1.01).map_err(|e| e.to_string())?;
    let r = build_r(&gm, &a, eta0).map_err(|e| e.to_string())?;
    let y = update_y(&r, YMethod::Solve).map_err(|e| e.to_string())?;
    let q = build_q_with(&gm, &y.tail(), eta0, form(fault)).map_err(|e| e.to_string())?;
    let g = g_value(&y, &r);
    let e = q.evaluate(a.as_slice());
    if !rel_close(g, e, 1e-9) {
        return Err(format!("g {g} vs expansion {e}"));
    }
    Ok(())
}

fn check_power(rng: &mut ChaCha20Rng, _: Fault) -> Result<(), String> {
    let (_, a, gm) = random_compressed(rng)?;
    let cfg = OptimizerConfig::default();
    let eta0 = eta0_bound(&gm, cfg.eta0_factor).map_err(|e| e.to_string())?;
    let y = update_y(&build_r(&gm, &a, eta0).map_err(|e| e.to_string())?, YMethod::Solve)
        .map_err(|e| e.to_string())?;
    let q = build_q_with(&gm, &y.tail(), eta0, HadamardForm::Elementwise)
        .map_err(|e| e.to_string())?;
    let out = power_iterate(&a, &q, &cfg).map_err(|e| e.to_string())?;
    for w in out.objective.windows(2) {
        if w[1] < w[0] - 1e-10 * w[0].abs().max(1.0) {
            return Err(format!("objective fell from {} to {}", w[0], w[1]));
        }
    }
    if !a.domain().contains(out.gains.as_slice()) {
        return Err("iterate left the constraint set".into());
    }
    Ok(())
}

fn check_optimizer(rng: &mut ChaCha20Rng, _: Fault) -> Result<(), String> {
    let model = random_scenario(rng)?;
    let domain = random_domain(rng);
    let ones = GainVector::ones(model.node_count(), domain);
    let (_, gm) = compress(&model, &ones).map_err(|e| e.to_string())?;
    let trace = optimize(&gm, &OptimizerConfig::default(), &ones).map_err(|e| e.to_string())?;
    for w in trace.eta.windows(2) {
        if w[1] > w[0] + 1e-10 {
            return Err(format!("eta rose from {} to {}", w[0], w[1]));
        }
    }
    if !domain.contains(trace.gains.as_slice()) {
        return Err("final gains infeasible".into());
    }
    Ok(())
}
