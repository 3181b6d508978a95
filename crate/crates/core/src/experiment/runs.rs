use std::fmt::Write as _;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::{
    build_scenario, compress, optimize_with_reselection, trial_seeds, variance_under,
    DriverOutcome, ExperimentConfig,
};
use crate::consensus::{decentralized_mle, MleTrace};
use crate::error::{Error, Result};
use crate::fusion::{decompose_information, ml_estimate, ml_variance, received_vector};
use crate::network::{sample_observations, GainVector, NetworkModel};

/// Scenario, gains and driver rounds of one optimize run.
#[derive(Debug, Clone)]
pub struct OptimizeOutput {
    pub model: NetworkModel,
    pub outcome: DriverOutcome,
}

impl OptimizeOutput {
    /// One `(file name, contents)` pair per accepted round, then the gains.
    pub fn files(&self) -> Vec<(String, String)> {
        let mut files: Vec<_> = self
            .outcome
            .rounds
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let name = if k == 0 {
                    "opt_trace.csv".to_string()
                } else {
                    format!("opt_trace_round{k}.csv")
                };
                (name, t.to_csv())
            })
            .collect();
        files.push(("gains.csv".into(), crate::optimizer::gains_csv(self.outcome.gains())));
        files
    }
}

pub fn run_optimize(cfg: &ExperimentConfig) -> Result<OptimizeOutput> {
    cfg.validate()?;
    let model = build_scenario(cfg, cfg.n, &trial_seeds(cfg.master_seed, cfg.n, 0))?;
    let outcome =
        optimize_with_reselection(&model, &cfg.opt, cfg.constraint, cfg.reselect_rounds)?;
    Ok(OptimizeOutput { model, outcome })
}

/// Decentralized estimation run on one scenario.
#[derive(Debug, Clone)]
pub struct ConvergenceOutput {
    pub model: NetworkModel,
    pub gains: GainVector,
    pub trace: MleTrace,
    /// Centralized ML estimate.
    pub reference: Complex64,
    pub variance: f64,
}

impl ConvergenceOutput {
    pub fn trace_csv(&self) -> String {
        self.trace.to_csv(self.reference)
    }

    /// CSV with columns `theta_ml_re,theta_ml_im,variance,iterations`.
    pub fn reference_csv(&self) -> String {
        format!(
            "theta_ml_re,theta_ml_im,variance,iterations\n{},{},{},{}\n",
            self.reference.re,
            self.reference.im,
            self.variance,
            self.trace.iterations()
        )
    }
}

/// Builds one scenario, optimizes the gains (unless disabled), draws one
/// observation set and runs the decentralized estimator on it.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceOutput> {
    cfg.validate()?;
    let seeds = trial_seeds(cfg.master_seed, cfg.n, 0);
    let model = build_scenario(cfg, cfg.n, &seeds)?;
    let (gains, gm) = if cfg.optimize_gains {
        let out =
            optimize_with_reselection(&model, &cfg.opt, cfg.constraint, cfg.reselect_rounds)?;
        (out.gains().clone(), out.global)
    } else {
        let ones = GainVector::ones(cfg.n, cfg.constraint);
        let (_, gm) = compress(&model, &ones)?;
        (ones, gm)
    };
    let obs = sample_observations(&model, seeds.noise);
    let y = received_vector(&model, &gm, &gains, &obs);
    let reference = ml_estimate(&y, &gm, &gains)?;
    let variance = ml_variance(&gm, &gains)?;
    let d = decompose_information(&gm, &gains, Some(&y))?;
    let state = d.state.expect("received vector supplied");
    let trace = decentralized_mle(&model.graph, &cfg.admm, &d.information, &state)?;
    Ok(ConvergenceOutput {
        model,
        gains,
        trace,
        reference,
        variance,
    })
}

/// Variances of one sweep trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub optimized: f64,
    pub all_ones: f64,
    pub random: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub trials: usize,
    pub failures: usize,
    pub mean_optimized: f64,
    pub mean_all_ones: f64,
    pub mean_random: f64,
    /// Fraction of successful trials with optimized <= all-ones.
    pub improvement_fraction: f64,
    /// Per-trial results in trial order; `Err` holds the failure message.
    pub outcomes: Vec<std::result::Result<TrialOutcome, String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
}

impl SweepOutput {
    /// Summary CSV, one line per network size.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "n,trials,failures,mean_var_optimized,mean_var_all_ones,mean_var_random,improvement_fraction\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.n,
                r.trials,
                r.failures,
                r.mean_optimized,
                r.mean_all_ones,
                r.mean_random,
                r.improvement_fraction
            );
        }
        out
    }

    /// Per-trial CSV; failed trials carry empty variance fields.
    pub fn trials_csv(&self) -> String {
        let mut out = String::from("n,trial,status,var_optimized,var_all_ones,var_random\n");
        for r in &self.rows {
            for (t, o) in r.outcomes.iter().enumerate() {
                match o {
                    Ok(o) => {
                        let _ = writeln!(
                            out,
                            "{},{},ok,{},{},{}",
                            r.n, t, o.optimized, o.all_ones, o.random
                        );
                    }
                    Err(e) => {
                        let _ = writeln!(out, "{},{},\"{}\",,,", r.n, t, e.replace('"', "'"));
                    }
                }
            }
        }
        out
    }
}

fn sweep_trial(cfg: &ExperimentConfig, n: usize, trial: usize) -> Result<TrialOutcome> {
    let seeds = trial_seeds(cfg.master_seed, n, trial);
    let model = build_scenario(cfg, n, &seeds)?;
    let out = optimize_with_reselection(&model, &cfg.opt, cfg.constraint, cfg.reselect_rounds)?;
    let all_ones = variance_under(&model, &GainVector::ones(n, cfg.constraint))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seeds.gains);
    let random = variance_under(&model, &GainVector::random(n, cfg.constraint, &mut rng))?;
    Ok(TrialOutcome {
        optimized: out.final_variance(),
        all_ones,
        random,
    })
}

/// For each size in `n_list`, runs `cfg.trials` independent scenarios and
/// compares the ML variance under optimized, all-ones and random gains.
/// Failed trials are counted and excluded from the means.
pub fn run_variance_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    if cfg.n_list.is_empty() {
        return Err(Error::InvalidParameter("n_list is empty".into()));
    }
    let rows = cfg
        .n_list
        .iter()
        .map(|&n| {
            let outcomes: Vec<_> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| sweep_trial(cfg, n, t).map_err(|e| e.to_string()))
                .collect();
            let ok: Vec<&TrialOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
            let count = ok.len() as f64;
            let mean = |f: fn(&TrialOutcome) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|o| f(o)).sum::<f64>() / count
                }
            };
            SweepRow {
                n,
                trials: cfg.trials,
                failures: outcomes.len() - ok.len(),
                mean_optimized: mean(|o| o.optimized),
                mean_all_ones: mean(|o| o.all_ones),
                mean_random: mean(|o| o.random),
                improvement_fraction: if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().filter(|o| o.optimized <= o.all_ones).count() as f64 / count
                },
                outcomes,
            }
        })
        .collect();
    Ok(SweepOutput { rows })
}
