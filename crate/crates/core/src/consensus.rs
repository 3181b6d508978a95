//! ADMM average consensus and the decentralized ML estimator built on it.
//!
//! One synchronous round per step:
//!
//! ```text
//! y_i+ = (rho d_i y_i + rho sum_j y_j - lambda_i + x_i) / (1 + 2 rho d_i)
//! lambda_i+ = lambda_i + rho (d_i y_i+ - sum_j y_j+)
//! ```
//!
//! where `d_i` is the external degree and the sums run over the neighbors of
//! `i`. The y-update reads the previous iterates, the multiplier update the
//! new ones.

use std::fmt::Debug;
use std::fmt::Write as _;
use std::ops::{Add, Div, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Graph;

/// Local estimates are withheld while `|I_i(k)|` is below this.
pub const ESTIMATE_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    pub rho: f64,
    pub max_iter: usize,
    /// Stop once `max_i |y_i - mean(x)|` is at most this.
    pub tol: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 0.5,
            max_iter: 10_000,
            tol: 1e-10,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho = {}", self.rho)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol = {}", self.tol)));
        }
        Ok(())
    }
}

/// Scalar type a consensus stream runs on. The updates only use real
/// coefficients, so complex streams are two independent real problems.
pub trait ConsensusValue:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn zero() -> Self;
    fn modulus(self) -> f64;
}

impl ConsensusValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl ConsensusValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState<T> {
    pub y: Vec<T>,
    pub lambda: Vec<T>,
    pub k: usize,
}

impl<T: ConsensusValue> ConsensusState<T> {
    pub fn zeros(n: usize) -> Self {
        ConsensusState {
            y: vec![T::zero(); n],
            lambda: vec![T::zero(); n],
            k: 0,
        }
    }
}

pub fn admm_step<T: ConsensusValue>(
    g: &Graph,
    cfg: &AdmmConfig,
    state: &ConsensusState<T>,
    x: &[T],
) -> ConsensusState<T> {
    step_with_multiplier_sign(g, cfg, state, x, 1.0)
}

/// The round itself. `sign` scales the multiplier correction and is only
/// ever `-1` when the self-check injects a fault.
pub(crate) fn step_with_multiplier_sign<T: ConsensusValue>(
    g: &Graph,
    cfg: &AdmmConfig,
    state: &ConsensusState<T>,
    x: &[T],
    sign: f64,
) -> ConsensusState<T> {
    let n = g.node_count();
    assert_eq!(state.y.len(), n, "state size does not match graph");
    assert_eq!(x.len(), n, "initial values do not match graph");
    let rho = cfg.rho;
    let neighbor_sum = |v: &[T], i: usize| {
        g.neighbors(i)
            .iter()
            .fold(T::zero(), |acc, &j| acc + v[j])
    };

    let y: Vec<T> = (0..n)
        .map(|i| {
            let d = g.neighbors(i).len() as f64;
            (state.y[i] * (rho * d) + neighbor_sum(&state.y, i) * rho - state.lambda[i] + x[i])
                / (1.0 + 2.0 * rho * d)
        })
        .collect();
    let lambda = (0..n)
        .map(|i| {
            let d = g.neighbors(i).len() as f64;
            state.lambda[i] + (y[i] * d - neighbor_sum(&y, i)) * (rho * sign)
        })
        .collect();
    ConsensusState {
        y,
        lambda,
        k: state.k + 1,
    }
}

pub fn mean<T: ConsensusValue>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, &v| acc + v) / x.len() as f64
}

/// `max_i |y_i - target|`; NaN if any entry is NaN.
pub fn disagreement<T: ConsensusValue>(y: &[T], target: T) -> f64 {
    y.iter()
        .map(|&v| (v - target).modulus())
        .fold(0.0, nan_max)
}

// f64::max drops NaN, which would let a diverged run look converged.
pub(crate) fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Every iterate `y^1, y^2, ...` of one consensus run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub iterates: Vec<Vec<T>>,
    pub mean: T,
}

impl<T: ConsensusValue> Trajectory<T> {
    pub fn iterations(&self) -> usize {
        self.iterates.len()
    }

    pub fn last(&self) -> &[T] {
        self.iterates.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn run_average_consensus<T: ConsensusValue>(
    g: &Graph,
    cfg: &AdmmConfig,
    x: &[T],
) -> Result<Trajectory<T>> {
    run_with_sign(g, cfg, x, 1.0)
}

pub(crate) fn run_with_sign<T: ConsensusValue>(
    g: &Graph,
    cfg: &AdmmConfig,
    x: &[T],
    sign: f64,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    if x.len() != g.node_count() {
        return Err(Error::DimensionMismatch {
            expected: g.node_count(),
            got: x.len(),
        });
    }
    let target = mean(x);
    let mut state = ConsensusState::zeros(x.len());
    let mut iterates = Vec::new();
    let mut residual = f64::INFINITY;
    while state.k < cfg.max_iter {
        state = step_with_multiplier_sign(g, cfg, &state, x, sign);
        residual = disagreement(&state.y, target);
        iterates.push(state.y.clone());
        if residual.is_nan() {
            break;
        }
        if residual <= cfg.tol {
            return Ok(Trajectory {
                iterates,
                mean: target,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: state.k,
        residual,
    })
}

/// Trajectories of the information and state streams and the resulting
/// local estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct MleTrace {
    pub information: Vec<Vec<f64>>,
    pub state: Vec<Vec<Complex64>>,
    /// `theta_i(k) = P_i(k) / I_i(k)`; `None` while `I_i(k)` is near zero.
    pub estimates: Vec<Vec<Option<Complex64>>>,
    /// `sum P_i(0) / sum I_i(0)`, the centralized estimate.
    pub limit: Complex64,
}

impl MleTrace {
    pub fn iterations(&self) -> usize {
        self.estimates.len()
    }

    pub fn final_estimates(&self) -> &[Option<Complex64>] {
        self.estimates.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Largest distance of a final local estimate from `reference`.
    pub fn final_disagreement(&self, reference: Complex64) -> f64 {
        self.final_estimates()
            .iter()
            .map(|e| e.map_or(f64::INFINITY, |e| (e - reference).norm()))
            .fold(0.0, nan_max)
    }

    /// CSV with columns
    /// `iter,node,I_re,P_re,P_im,theta_hat_re,theta_hat_im,disagreement`.
    /// Estimate and disagreement fields are empty when the estimate is withheld.
    pub fn to_csv(&self, reference: Complex64) -> String {
        let mut out =
            String::from("iter,node,I_re,P_re,P_im,theta_hat_re,theta_hat_im,disagreement\n");
        for (k, est) in self.estimates.iter().enumerate() {
            for (i, e) in est.iter().enumerate() {
                let info = self.information[k][i];
                let p = self.state[k][i];
                let _ = write!(out, "{},{},{},{},{},", k + 1, i, info, p.re, p.im);
                match e {
                    Some(t) => {
                        let _ = writeln!(out, "{},{},{}", t.re, t.im, (t - reference).norm());
                    }
                    None => out.push_str(",,\n"),
                }
            }
        }
        out
    }
}

/// Runs consensus on `I_i(0)` and `P_i(0)` in lockstep until both streams
/// are within `cfg.tol` of their averages.
pub fn decentralized_mle(
    g: &Graph,
    cfg: &AdmmConfig,
    info0: &[f64],
    state0: &[Complex64],
) -> Result<MleTrace> {
    cfg.validate()?;
    let n = g.node_count();
    for len in [info0.len(), state0.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: len,
            });
        }
    }
    let total: f64 = info0.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroInformation);
    }
    let limit = state0.iter().sum::<Complex64>() / total;
    let (i_mean, p_mean) = (mean(info0), mean(state0));

    let mut i_state = ConsensusState::<f64>::zeros(n);
    let mut p_state = ConsensusState::<Complex64>::zeros(n);
    let mut trace = MleTrace {
        information: Vec::new(),
        state: Vec::new(),
        estimates: Vec::new(),
        limit,
    };
    let mut residual = f64::INFINITY;
    while i_state.k < cfg.max_iter {
        i_state = admm_step(g, cfg, &i_state, info0);
        p_state = admm_step(g, cfg, &p_state, state0);
        let est = i_state
            .y
            .iter()
            .zip(&p_state.y)
            .map(|(&i, &p)| (i.abs() >= ESTIMATE_GUARD).then(|| p / i))
            .collect();
        trace.information.push(i_state.y.clone());
        trace.state.push(p_state.y.clone());
        trace.estimates.push(est);
        residual = nan_max(
            disagreement(&i_state.y, i_mean),
            disagreement(&p_state.y, p_mean),
        );
        if residual.is_nan() {
            break;
        }
        if residual <= cfg.tol {
            return Ok(trace);
        }
    }
    Err(Error::NotConverged {
        iterations: i_state.k,
        residual,
    })
}
