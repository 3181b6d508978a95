//! Information-driven compression and the centralized ML estimator.
//!
//! Every broadcast is kept by exactly one node of the sender's closed
//! neighborhood (the sender itself included): the one with the largest
//! local information value. Each sender therefore contributes exactly one
//! row to the stacked model, so the global noise covariance is diagonal and
//! the rows are partitioned by receiver.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{GainVector, NetworkModel, Observations};
use crate::topology::Graph;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPlan {
    /// `retainer[i]` is the node that keeps sender `i`'s broadcast.
    retainer: Vec<usize>,
    /// Senders kept at each receiver, ascending.
    retained: Vec<Vec<usize>>,
    /// Discarded external receptions.
    discarded: usize,
}

impl SelectionPlan {
    pub fn node_count(&self) -> usize {
        self.retainer.len()
    }

    pub fn retainer(&self, sender: usize) -> usize {
        self.retainer[sender]
    }

    /// Senders whose broadcast node `k` keeps.
    pub fn retained_at(&self, k: usize) -> &[usize] {
        &self.retained[k]
    }

    /// Total number of discarded external receptions, `r`.
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    /// Retained directed links `(receiver, sender)` in row order.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.retained
            .iter()
            .enumerate()
            .flat_map(|(k, senders)| senders.iter().map(move |&s| (k, s)))
    }

    pub fn to_file(&self) -> PlanFile {
        PlanFile {
            retainer: self.retainer.clone(),
            discarded: self.discarded,
            retained: self.links().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub retainer: Vec<usize>,
    pub discarded: usize,
    pub retained: Vec<(usize, usize)>,
}

/// Assigns each broadcast to the node of largest information in the
/// sender's closed neighborhood; ties go to the smallest id.
pub fn select_retainers(g: &Graph, info: &[f64]) -> Result<SelectionPlan> {
    let n = g.node_count();
    if info.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: info.len(),
        });
    }
    if let Some(bad) = info.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::InvalidParameter(format!("information value {bad}")));
    }
    let mut retainer = Vec::with_capacity(n);
    let mut retained = vec![Vec::new(); n];
    let mut external = 0;
    for i in 0..n {
        let mut best = i;
        for &j in g.neighbors(i) {
            if info[j] > info[best] || (info[j] == info[best] && j < best) {
                best = j;
            }
        }
        if best != i {
            external += 1;
        }
        retainer.push(best);
        retained[best].push(i);
    }
    Ok(SelectionPlan {
        retainer,
        retained,
        discarded: 2 * g.edge_count() - external,
    })
}

/// Compressed stacked model `y = H a theta + H D v + G n`. Row `r` carries
/// the single nonzero `h[r]` of `H`, located at column `sender(r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    n: usize,
    row_map: Vec<(usize, usize)>,
    h: Vec<Complex64>,
    sigma: Vec<f64>,
    v: Vec<f64>,
}

impl GlobalModel {
    /// Builds a model from explicit rows. Senders must be distinct so that
    /// the combined noise covariance stays diagonal.
    pub fn new(
        n: usize,
        row_map: Vec<(usize, usize)>,
        h: Vec<Complex64>,
        sigma: Vec<f64>,
        v: Vec<f64>,
    ) -> Result<Self> {
        let m = row_map.len();
        for len in [h.len(), sigma.len()] {
            if len != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: len,
                });
            }
        }
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
        let mut used = vec![false; n];
        for &(k, s) in &row_map {
            for id in [k, s] {
                if id >= n {
                    return Err(Error::OutOfRange { id, n });
                }
            }
            if std::mem::replace(&mut used[s], true) {
                return Err(Error::InvalidParameter(format!(
                    "sender {s} appears on more than one row"
                )));
            }
        }
        if sigma.iter().chain(&v).any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter("negative variance".into()));
        }
        Ok(GlobalModel {
            n,
            row_map,
            h,
            sigma,
            v,
        })
    }

    /// Number of sensors `N` (columns of `H`).
    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Number of retained rows `M`.
    pub fn row_count(&self) -> usize {
        self.row_map.len()
    }

    /// `(receiver, sender)` of every row.
    pub fn row_map(&self) -> &[(usize, usize)] {
        &self.row_map
    }

    /// Nonzero entry of each row of `H`.
    pub fn row_gains(&self) -> &[Complex64] {
        &self.h
    }

    /// Diagonal of the transmission-noise covariance `Sigma` (M entries).
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Diagonal of the observation-noise covariance `V` (N entries).
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn h_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let mut h = nalgebra::DMatrix::zeros(self.row_count(), self.n);
        for (r, &(_, s)) in self.row_map.iter().enumerate() {
            h[(r, s)] = self.h[r];
        }
        h
    }

    /// `(H a)_r` for every row.
    pub fn signal(&self, a: &GainVector) -> Result<Vec<Complex64>> {
        self.check_gains(a)?;
        let a = a.as_slice();
        Ok(self
            .row_map
            .iter()
            .zip(&self.h)
            .map(|(&(_, s), h)| h * a[s])
            .collect())
    }

    /// Diagonal of `C = H D V D^H H^H + Sigma`.
    pub fn noise_covariance(&self, a: &GainVector) -> Result<Vec<f64>> {
        let ha = self.signal(a)?;
        ha.iter()
            .zip(&self.row_map)
            .zip(&self.sigma)
            .enumerate()
            .map(|(r, ((x, &(_, s)), sig))| {
                let c = x.norm_sqr() * self.v[s] + sig;
                if c > 0.0 {
                    Ok(c)
                } else {
                    Err(Error::SingularCovariance { row: r })
                }
            })
            .collect()
    }

    /// Fisher information `a^H H^H C^{-1} H a`.
    pub fn information(&self, a: &GainVector) -> Result<f64> {
        let ha = self.signal(a)?;
        let c = self.noise_covariance(a)?;
        Ok(ha.iter().zip(&c).map(|(x, c)| x.norm_sqr() / c).sum())
    }

    fn check_gains(&self, a: &GainVector) -> Result<()> {
        if a.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: a.len(),
            });
        }
        Ok(())
    }

    pub fn to_file(&self) -> GlobalModelFile {
        GlobalModelFile {
            n: self.n,
            m: self.row_count(),
            row_map: self
                .row_map
                .iter()
                .enumerate()
                .map(|(r, &(k, s))| (r, k, s))
                .collect(),
            h: self.h.iter().map(|x| (x.re, x.im)).collect(),
            sigma: self.sigma.clone(),
            v: self.v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalModelFile {
    pub n: usize,
    pub m: usize,
    /// `(row, receiver, sender)` triples.
    pub row_map: Vec<(usize, usize, usize)>,
    pub h: Vec<(f64, f64)>,
    pub sigma: Vec<f64>,
    pub v: Vec<f64>,
}

/// Stacks the retained rows in `(receiver, sender)` order.
pub fn build_global_model(
    model: &NetworkModel,
    plan: &SelectionPlan,
    gains: &GainVector,
) -> Result<GlobalModel> {
    let n = model.node_count();
    for got in [plan.node_count(), gains.len()] {
        if got != n {
            return Err(Error::DimensionMismatch { expected: n, got });
        }
    }
    let row_map: Vec<_> = plan.links().collect();
    let h = row_map
        .iter()
        .map(|&(k, s)| model.channels.get(k, s))
        .collect();
    let sigma = row_map
        .iter()
        .map(|&(k, s)| model.link_noise_var(k, s))
        .collect();
    GlobalModel::new(n, row_map, h, sigma, model.sigma_v_sq.clone())
}

/// Compressed received vector `y`, one entry per row of `gm`.
pub fn received_vector(
    model: &NetworkModel,
    gm: &GlobalModel,
    gains: &GainVector,
    obs: &Observations,
) -> Vec<Complex64> {
    gm.row_map()
        .iter()
        .map(|&(k, s)| obs.received(model, gains, k, s))
        .collect()
}

/// `theta_hat = (a^H H^H C^{-1} H a)^{-1} a^H H^H C^{-1} y`.
pub fn ml_estimate(y: &[Complex64], gm: &GlobalModel, a: &GainVector) -> Result<Complex64> {
    if y.len() != gm.row_count() {
        return Err(Error::DimensionMismatch {
            expected: gm.row_count(),
            got: y.len(),
        });
    }
    let ha = gm.signal(a)?;
    let c = gm.noise_covariance(a)?;
    let mut info = 0.0;
    let mut state = Complex64::new(0.0, 0.0);
    for ((x, c), y) in ha.iter().zip(&c).zip(y) {
        info += x.norm_sqr() / c;
        state += x.conj() * y / c;
    }
    if info <= 0.0 {
        return Err(Error::ZeroInformation);
    }
    Ok(state / info)
}

/// `Var(theta_hat) = (a^H H^H C^{-1} H a)^{-1}`.
pub fn ml_variance(gm: &GlobalModel, a: &GainVector) -> Result<f64> {
    let info = gm.information(a)?;
    if info <= 0.0 {
        return Err(Error::ZeroInformation);
    }
    Ok(1.0 / info)
}

/// Per-node starting values for the consensus streams.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// `I_i(0)` over node `i`'s retained rows.
    pub information: Vec<f64>,
    /// `P_i(0)`, present when a received vector was supplied.
    pub state: Option<Vec<Complex64>>,
}

pub fn decompose_information(
    gm: &GlobalModel,
    a: &GainVector,
    y: Option<&[Complex64]>,
) -> Result<Decomposition> {
    let ha = gm.signal(a)?;
    let c = gm.noise_covariance(a)?;
    if let Some(y) = y {
        if y.len() != gm.row_count() {
            return Err(Error::DimensionMismatch {
                expected: gm.row_count(),
                got: y.len(),
            });
        }
    }
    let n = gm.node_count();
    let mut information = vec![0.0; n];
    let mut state = y.map(|_| vec![Complex64::new(0.0, 0.0); n]);
    for (r, &(k, _)) in gm.row_map().iter().enumerate() {
        information[k] += ha[r].norm_sqr() / c[r];
        if let (Some(p), Some(y)) = (state.as_mut(), y) {
            p[k] += ha[r].conj() * y[r] / c[r];
        }
    }
    Ok(Decomposition { information, state })
}
