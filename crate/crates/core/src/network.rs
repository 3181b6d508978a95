//! Channels, noise statistics, sensor gains and the per-node local
//! linear observation model.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Graph;

/// Draws from CN(0, var): real and imaginary parts i.i.d. N(0, var/2).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelDist {
    /// Circularly-symmetric complex Gaussian with standard deviation `sigma_h`.
    ComplexGaussian { sigma_h: f64 },
    /// Every coefficient equal to one.
    Unit,
}

/// Channel coefficients `h[(receiver, sender)]`, including the unit
/// self-channels `(i, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channels(BTreeMap<(usize, usize), Complex64>);

impl Channels {
    /// Builds a channel table from directed-pair coefficients. Self-channels
    /// are forced to one.
    pub fn from_pairs(
        graph: &Graph,
        pairs: impl IntoIterator<Item = ((usize, usize), Complex64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for i in 0..graph.node_count() {
            map.insert((i, i), Complex64::new(1.0, 0.0));
        }
        for ((k, i), h) in pairs {
            if k == i {
                continue;
            }
            if !graph.has_edge(k, i) {
                return Err(Error::InvalidParameter(format!(
                    "channel ({k}, {i}) is not on an edge"
                )));
            }
            map.insert((k, i), h);
        }
        let expected = graph.node_count() + 2 * graph.edge_count();
        if map.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: map.len(),
            });
        }
        Ok(Channels(map))
    }

    /// Coefficient from sender `i` to receiver `k`.
    pub fn get(&self, k: usize, i: usize) -> Complex64 {
        self.0[&(k, i)]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Complex64)> {
        self.0.iter()
    }
}

pub fn sample_channels(
    graph: &Graph,
    dist: ChannelDist,
    reciprocal: bool,
    seed: u64,
) -> Result<Channels> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha20Rng| match dist {
        ChannelDist::ComplexGaussian { sigma_h } => complex_gaussian(rng, sigma_h * sigma_h),
        ChannelDist::Unit => Complex64::new(1.0, 0.0),
    };
    if let ChannelDist::ComplexGaussian { sigma_h } = dist {
        if !(sigma_h > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma_h = {sigma_h}")));
        }
    }
    let mut pairs = Vec::with_capacity(2 * graph.edge_count());
    for &(i, j) in graph.edges() {
        let hij = draw(&mut rng);
        let hji = if reciprocal { hij } else { draw(&mut rng) };
        pairs.push(((i, j), hij));
        pairs.push(((j, i), hji));
    }
    Channels::from_pairs(graph, pairs)
}

/// Feasible set for the gain vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainDomain {
    /// `||a||^2 = N`.
    FixedEnergy,
    /// `|a_i| = 1` for every node.
    Unimodular,
}

impl GainDomain {
    /// Nearest feasible point to `v`. Returns `None` when `v = 0` under
    /// fixed energy (no unique projection). A zero entry under the
    /// unimodular constraint maps to phase zero.
    pub fn project(self, v: &[Complex64]) -> Option<Vec<Complex64>> {
        match self {
            GainDomain::FixedEnergy => {
                let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                if norm == 0.0 || !norm.is_finite() {
                    return None;
                }
                let scale = (v.len() as f64).sqrt() / norm;
                Some(v.iter().map(|x| x * scale).collect())
            }
            GainDomain::Unimodular => Some(
                v.iter()
                    .map(|x| {
                        if x.norm_sqr() == 0.0 {
                            Complex64::new(1.0, 0.0)
                        } else {
                            Complex64::from_polar(1.0, x.arg())
                        }
                    })
                    .collect(),
            ),
        }
    }

    pub fn contains(self, a: &[Complex64]) -> bool {
        match self {
            GainDomain::FixedEnergy => {
                let e: f64 = a.iter().map(|x| x.norm_sqr()).sum();
                let n = a.len() as f64;
                (e - n).abs() <= 1e-9 * n.max(1.0)
            }
            GainDomain::Unimodular => a.iter().all(|x| (x.norm() - 1.0).abs() <= 1e-12),
        }
    }
}

/// Complex sensor gains constrained to a [`GainDomain`].
#[derive(Debug, Clone, PartialEq)]
pub struct GainVector {
    a: Vec<Complex64>,
    domain: GainDomain,
}

impl GainVector {
    pub fn new(a: Vec<Complex64>, domain: GainDomain) -> Result<Self> {
        if !domain.contains(&a) {
            return Err(Error::InvalidParameter(format!(
                "gain vector violates {domain:?} constraint"
            )));
        }
        Ok(GainVector { a, domain })
    }

    /// All-ones vector, feasible in both domains.
    pub fn ones(n: usize, domain: GainDomain) -> Self {
        GainVector {
            a: vec![Complex64::new(1.0, 0.0); n],
            domain,
        }
    }

    /// Random feasible vector: a complex Gaussian draw projected onto the domain.
    pub fn random<R: Rng + ?Sized>(n: usize, domain: GainDomain, rng: &mut R) -> Self {
        loop {
            let v: Vec<_> = (0..n).map(|_| complex_gaussian(rng, 1.0)).collect();
            if let Some(a) = domain.project(&v) {
                return GainVector { a, domain };
            }
        }
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.a
    }

    pub fn domain(&self) -> GainDomain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn rotated(&self, phi: f64) -> Self {
        let w = Complex64::from_polar(1.0, phi);
        GainVector {
            a: self.a.iter().map(|x| x * w).collect(),
            domain: self.domain,
        }
    }

    pub(crate) fn from_raw(a: Vec<Complex64>, domain: GainDomain) -> Self {
        GainVector { a, domain }
    }
}

/// Channels, noise statistics and the true parameter of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub graph: Graph,
    pub channels: Channels,
    pub sigma_v_sq: Vec<f64>,
    pub sigma_n_sq: f64,
    pub theta: Complex64,
    /// Whether the self-reception `(i, i)` carries transmission noise.
    pub noisy_self_link: bool,
}

impl NetworkModel {
    pub fn new(
        graph: Graph,
        channels: Channels,
        sigma_v_sq: Vec<f64>,
        sigma_n_sq: f64,
        theta: Complex64,
        noisy_self_link: bool,
    ) -> Result<Self> {
        let n = graph.node_count();
        if sigma_v_sq.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: sigma_v_sq.len(),
            });
        }
        if let Some(bad) = sigma_v_sq.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!("sigma_v^2 = {bad}")));
        }
        if !(sigma_n_sq >= 0.0 && sigma_n_sq.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma_n^2 = {sigma_n_sq}")));
        }
        if channels.len() != n + 2 * graph.edge_count() {
            return Err(Error::DimensionMismatch {
                expected: n + 2 * graph.edge_count(),
                got: channels.len(),
            });
        }
        Ok(NetworkModel {
            graph,
            channels,
            sigma_v_sq,
            sigma_n_sq,
            theta,
            noisy_self_link,
        })
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    /// Transmission-noise variance on the link from `sender` to `receiver`.
    pub fn link_noise_var(&self, receiver: usize, sender: usize) -> f64 {
        if receiver == sender && !self.noisy_self_link {
            0.0
        } else {
            self.sigma_n_sq
        }
    }

    /// Senders heard by node `i`: its neighbors plus itself, ascending.
    pub fn reception_set(&self, i: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self.graph.neighbors(i).to_vec();
        let pos = s.partition_point(|&j| j < i);
        s.insert(pos, i);
        s
    }

    /// Local model of node `i` over `senders` (all receptions when `None`).
    pub fn local_model(
        &self,
        i: usize,
        gains: &GainVector,
        senders: Option<&[usize]>,
    ) -> LocalModel {
        let rows = match senders {
            Some(s) => s.to_vec(),
            None => self.reception_set(i),
        };
        let a = gains.as_slice();
        LocalModel {
            owner: i,
            h: rows.iter().map(|&s| self.channels.get(i, s)).collect(),
            v: rows.iter().map(|&s| self.sigma_v_sq[s]).collect(),
            a: rows.iter().map(|&s| a[s]).collect(),
            noisy: rows
                .iter()
                .map(|&s| s != i || self.noisy_self_link)
                .collect(),
            rows,
        }
    }

    /// Information value of every node over all of its receptions.
    pub fn local_information(&self, gains: &GainVector) -> Result<Vec<f64>> {
        (0..self.node_count())
            .map(|i| {
                let m = self.local_model(i, gains, None);
                let c = local_noise_covariance(&m, self.sigma_n_sq)?;
                information_value(&m, &c)
            })
            .collect()
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            sigma_v_sq: self.sigma_v_sq.clone(),
            sigma_n_sq: self.sigma_n_sq,
            theta: [self.theta.re, self.theta.im],
            noisy_self_link: self.noisy_self_link,
            channels: self
                .channels
                .iter()
                .map(|(&(k, i), h)| (k, i, h.re, h.im))
                .collect(),
        }
    }

    pub fn from_file(graph: Graph, file: &ModelFile) -> Result<Self> {
        let channels = Channels::from_pairs(
            &graph,
            file.channels
                .iter()
                .map(|&(k, i, re, im)| ((k, i), Complex64::new(re, im))),
        )?;
        NetworkModel::new(
            graph,
            channels,
            file.sigma_v_sq.clone(),
            file.sigma_n_sq,
            Complex64::new(file.theta[0], file.theta[1]),
            file.noisy_self_link,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_file())? + "\n")?;
        Ok(())
    }

    pub fn load(graph: Graph, path: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        NetworkModel::from_file(graph, &file)
    }
}

/// On-disk form of the non-graph part of a [`NetworkModel`]. Channel rows
/// are `(receiver, sender, re, im)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub sigma_v_sq: Vec<f64>,
    pub sigma_n_sq: f64,
    pub theta: [f64; 2],
    pub noisy_self_link: bool,
    pub channels: Vec<(usize, usize, f64, f64)>,
}

/// Node-local observation model `y_i = H_i a_i theta + H_i D_i v_i + n_i`.
/// All matrices are diagonal and stored as vectors over `rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalModel {
    pub owner: usize,
    /// Senders, one per row.
    pub rows: Vec<usize>,
    pub h: Vec<Complex64>,
    pub v: Vec<f64>,
    pub a: Vec<Complex64>,
    /// Whether each row carries transmission noise.
    pub noisy: Vec<bool>,
}

impl LocalModel {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Diagonal of `C_i = H_i D_i V_i D_i^H H_i^H + R_n`.
pub fn local_noise_covariance(m: &LocalModel, sigma_n_sq: f64) -> Result<Vec<f64>> {
    (0..m.len())
        .map(|r| {
            let noise = if m.noisy[r] { sigma_n_sq } else { 0.0 };
            let c = (m.h[r] * m.a[r]).norm_sqr() * m.v[r] + noise;
            if c > 0.0 {
                Ok(c)
            } else {
                Err(Error::SingularCovariance { row: r })
            }
        })
        .collect()
}

/// `I_i = a_i^H H_i^H C_i^{-1} H_i a_i` for diagonal `C_i`.
pub fn information_value(m: &LocalModel, c: &[f64]) -> Result<f64> {
    if c.len() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: m.len(),
            got: c.len(),
        });
    }
    let mut total = 0.0;
    for (r, &cr) in c.iter().enumerate() {
        if !(cr > 0.0) {
            return Err(Error::SingularCovariance { row: r });
        }
        total += (m.h[r] * m.a[r]).norm_sqr() / cr;
    }
    Ok(total)
}

/// One draw of sensor observations and link noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    /// `z_i = theta + v_i`.
    pub z: Vec<Complex64>,
    /// `n_{k,i}` for every directed link, self-links included.
    pub link_noise: BTreeMap<(usize, usize), Complex64>,
}

impl Observations {
    /// Received sample `y_{k,i} = h_{k,i} a_i z_i + n_{k,i}`; the noise term
    /// is dropped on noiseless self-links.
    pub fn received(
        &self,
        model: &NetworkModel,
        gains: &GainVector,
        receiver: usize,
        sender: usize,
    ) -> Complex64 {
        let signal =
            model.channels.get(receiver, sender) * gains.as_slice()[sender] * self.z[sender];
        if model.link_noise_var(receiver, sender) > 0.0 {
            signal + self.link_noise[&(receiver, sender)]
        } else {
            signal
        }
    }
}

/// Samples `z_i` for every node, then `n_{k,i}` for every directed link in
/// `(receiver, sender)` order.
pub fn sample_observations(model: &NetworkModel, seed: u64) -> Observations {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let z = model
        .sigma_v_sq
        .iter()
        .map(|&s| model.theta + complex_gaussian(&mut rng, s))
        .collect();
    let link_noise = model
        .channels
        .iter()
        .map(|(&key, _)| (key, complex_gaussian(&mut rng, model.sigma_n_sq)))
        .collect();
    Observations { z, link_noise }
}
