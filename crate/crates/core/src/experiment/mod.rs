//! Seeded scenario generation and experiment drivers.
//!
//! Every trial draws its randomness from a ChaCha20 generator keyed by the
//! master seed, on stream `n * 2^32 + trial`. Four `u64` component seeds
//! are taken from that stream in a fixed order: graph, channels, noise,
//! random gains. Results therefore do not depend on how trials are
//! scheduled across threads.

mod runs;
mod selfcheck;

pub use runs::{
    run_convergence, run_optimize, run_variance_sweep, ConvergenceOutput, OptimizeOutput,
    SweepOutput, SweepRow, TrialOutcome,
};
pub use selfcheck::{run_selfcheck, CheckResult, Fault, SelfCheckReport};

use std::path::Path;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::AdmmConfig;
use crate::error::{Error, Result};
use crate::fusion::{build_global_model, ml_variance, select_retainers, GlobalModel, SelectionPlan};
use crate::network::{sample_channels, ChannelDist, GainDomain, GainVector, NetworkModel};
use crate::optimizer::{optimize, OptTrace, OptimizerConfig};
use crate::topology::{random_connected_graph, GraphModel};

/// Observation-noise variance: one value for every node, or one per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Scalar(f64),
    PerNode(Vec<f64>),
}

impl NoiseSpec {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            NoiseSpec::Scalar(v) => Ok(vec![*v; n]),
            NoiseSpec::PerNode(v) if v.len() == n => Ok(v.clone()),
            NoiseSpec::PerNode(v) => Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub topology: GraphModel,
    pub channel: ChannelDist,
    pub reciprocal: bool,
    pub sigma_v_sq: NoiseSpec,
    pub sigma_n_sq: f64,
    /// `[re, im]`.
    pub theta: [f64; 2],
    pub noisy_self_link: bool,
    pub constraint: GainDomain,
    /// Optimize the gains before estimating; all-ones gains otherwise.
    pub optimize_gains: bool,
    /// Upper bound on optimize/reselect rounds.
    pub reselect_rounds: usize,
    pub admm: AdmmConfig,
    pub opt: OptimizerConfig,
    pub trials: usize,
    pub master_seed: u64,
    /// Network sizes visited by the sweep.
    pub n_list: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 16,
            topology: GraphModel::Geometric { radius: 0.5 },
            channel: ChannelDist::ComplexGaussian { sigma_h: 1.0 },
            reciprocal: false,
            sigma_v_sq: NoiseSpec::Scalar(1.0),
            sigma_n_sq: 0.1,
            theta: [10.0, 0.0],
            noisy_self_link: true,
            constraint: GainDomain::FixedEnergy,
            optimize_gains: true,
            reselect_rounds: 5,
            admm: AdmmConfig::default(),
            opt: OptimizerConfig::default(),
            trials: 300,
            master_seed: 1,
            n_list: vec![4, 8, 12, 16],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.n == 0 || self.n_list.contains(&0) {
            return Err(Error::InvalidParameter("network size must be positive".into()));
        }
        if self.reselect_rounds == 0 {
            return Err(Error::InvalidParameter("reselect_rounds must be positive".into()));
        }
        self.admm.validate()?;
        self.opt.validate()
    }

    pub fn theta(&self) -> Complex64 {
        Complex64::new(self.theta[0], self.theta[1])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Component seeds of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub graph: u64,
    pub channels: u64,
    pub noise: u64,
    pub gains: u64,
}

pub fn trial_seeds(master_seed: u64, n: usize, trial: usize) -> TrialSeeds {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(((n as u64) << 32) | trial as u64);
    TrialSeeds {
        graph: rng.next_u64(),
        channels: rng.next_u64(),
        noise: rng.next_u64(),
        gains: rng.next_u64(),
    }
}

/// Samples the network of size `n` for one trial.
pub fn build_scenario(cfg: &ExperimentConfig, n: usize, seeds: &TrialSeeds) -> Result<NetworkModel> {
    let graph = random_connected_graph(n, cfg.topology, seeds.graph)?;
    let channels = sample_channels(&graph, cfg.channel, cfg.reciprocal, seeds.channels)?;
    NetworkModel::new(
        graph,
        channels,
        cfg.sigma_v_sq.expand(n)?,
        cfg.sigma_n_sq,
        cfg.theta(),
        cfg.noisy_self_link,
    )
}

/// Selection plan and compressed model induced by `gains`.
pub fn compress(model: &NetworkModel, gains: &GainVector) -> Result<(SelectionPlan, GlobalModel)> {
    let info = model.local_information(gains)?;
    let plan = select_retainers(&model.graph, &info)?;
    let gm = build_global_model(model, &plan, gains)?;
    Ok((plan, gm))
}

/// ML variance with the plan chosen for `gains` itself.
pub fn variance_under(model: &NetworkModel, gains: &GainVector) -> Result<f64> {
    let (_, gm) = compress(model, gains)?;
    ml_variance(&gm, gains)
}

/// Result of the optimize/reselect driver.
#[derive(Debug, Clone)]
pub struct DriverOutcome {
    pub plan: SelectionPlan,
    pub global: GlobalModel,
    /// One trace per accepted round; the first starts from all-ones gains.
    pub rounds: Vec<OptTrace>,
}

impl DriverOutcome {
    pub fn gains(&self) -> &GainVector {
        &self.rounds.last().expect("at least one round").gains
    }

    pub fn initial_variance(&self) -> f64 {
        self.rounds[0].initial_variance()
    }

    pub fn final_variance(&self) -> f64 {
        self.rounds.last().expect("at least one round").final_variance()
    }
}

/// Optimizes from all-ones gains with the plan frozen, then re-selects rows
/// for the new gains and optimizes again, for at most `rounds` rounds.
/// A round is kept only if it lowers the variance; the loop also ends when
/// the plan stops changing.
pub fn optimize_with_reselection(
    model: &NetworkModel,
    opt: &OptimizerConfig,
    domain: GainDomain,
    rounds: usize,
) -> Result<DriverOutcome> {
    let ones = GainVector::ones(model.node_count(), domain);
    let (plan, gm) = compress(model, &ones)?;
    let first = optimize(&gm, opt, &ones)?;
    let mut out = DriverOutcome {
        plan,
        global: gm,
        rounds: vec![first],
    };
    for _ in 1..rounds {
        let gains = out.gains().clone();
        let (plan, gm) = compress(model, &gains)?;
        if plan == out.plan {
            break;
        }
        let trace = optimize(&gm, opt, &gains)?;
        if trace.final_variance() >= out.final_variance() {
            break;
        }
        out.plan = plan;
        out.global = gm;
        out.rounds.push(trace);
    }
    Ok(out)
}
