//! Cyclic sensor-gain optimization.
//!
//! Minimizing the ML variance is recast as minimizing
//! `eta = eta0 - a^H H^H C^{-1} H a` over the feasible gains. With the
//! block matrix
//!
//! ```text
//!     R = [ eta0   a^H H^H          ]
//!         [ H a    H D V D^H H^H + S ]
//! ```
//!
//! `eta = min { y^H R y : y_1 = 1 }`, so the optimizer alternates between
//! the minimizing auxiliary vector `y` (a scaled first column of `R^{-1}`)
//! and a quadratic program in `a` for fixed `y`, which is handled by
//! power-method-like iterations on a diagonally loaded matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fusion::GlobalModel;
use crate::network::GainVector;

/// Added to the scaled largest eigenvalue when loading the diagonal.
pub const LOADING_EPS: f64 = 1e-9;
/// Power iterations used to estimate the largest eigenvalue of `Q`.
pub const EIGEN_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YMethod {
    /// Dense solve of `R x = e1`.
    Solve,
    /// Orthogonalize rows 2.. of `R` and project `e1` off their span.
    GramSchmidt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub eta0_factor: f64,
    pub lambda_margin: f64,
    /// Outer loop stops when `eta` moves by at most this.
    pub xi: f64,
    pub inner_iters: usize,
    pub inner_tol: f64,
    pub max_outer: usize,
    pub y_method: YMethod,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            eta0_factor: 1.01,
            lambda_margin: 1.05,
            xi: 1e-8,
            inner_iters: 500,
            inner_tol: 1e-10,
            max_outer: 200,
            y_method: YMethod::GramSchmidt,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidParameter(format!("{what} = {v}")));
        if !(self.eta0_factor > 1.0) {
            return bad("eta0_factor", self.eta0_factor);
        }
        if !(self.lambda_margin >= 1.0) {
            return bad("lambda_margin", self.lambda_margin);
        }
        if !(self.xi > 0.0) {
            return bad("xi", self.xi);
        }
        if !(self.inner_tol > 0.0) {
            return bad("inner_tol", self.inner_tol);
        }
        if self.inner_iters == 0 || self.max_outer == 0 {
            return Err(Error::InvalidParameter("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// `eta0_factor * N ||H||_F^2 / lambda_min(Sigma)`: large enough that
/// `eta` stays positive for every gain vector with `||a||^2 <= N`.
pub fn eta0_bound(gm: &GlobalModel, factor: f64) -> Result<f64> {
    let lambda_min = gm.sigma().iter().copied().fold(f64::INFINITY, f64::min);
    if !(lambda_min > 0.0) {
        return Err(Error::ZeroTransmissionNoise);
    }
    let fro: f64 = gm.row_gains().iter().map(|h| h.norm_sqr()).sum();
    Ok(factor * gm.node_count() as f64 * fro / lambda_min)
}

/// `eta(a) = eta0 - a^H H^H C^{-1} H a`.
pub fn eta(gm: &GlobalModel, a: &GainVector, eta0: f64) -> Result<f64> {
    Ok(eta0 - gm.information(a)?)
}

/// Dense Hermitian `(M+1) x (M+1)` matrix `R`.
pub fn build_r(gm: &GlobalModel, a: &GainVector, eta0: f64) -> Result<DMatrix<Complex64>> {
    let ha = gm.signal(a)?;
    let c = gm.noise_covariance(a)?;
    let m = gm.row_count();
    let mut r = DMatrix::zeros(m + 1, m + 1);
    r[(0, 0)] = Complex64::new(eta0, 0.0);
    for i in 0..m {
        r[(i + 1, 0)] = ha[i];
        r[(0, i + 1)] = ha[i].conj();
        r[(i + 1, i + 1)] = Complex64::new(c[i], 0.0);
    }
    Ok(r)
}

/// Auxiliary vector `y = (1, y~)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxVector(DVector<Complex64>);

impl AuxVector {
    /// Rescales `v` so that its first component is one.
    pub fn from_unnormalized(v: DVector<Complex64>) -> Result<Self> {
        let lead = v[0];
        if !(lead.norm() > 0.0) || !v.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
            return Err(Error::SingularR);
        }
        let mut y = v / lead;
        y[0] = Complex64::new(1.0, 0.0);
        Ok(AuxVector(y))
    }

    pub fn first_basis(len: usize) -> Self {
        let mut v = DVector::zeros(len);
        v[0] = Complex64::new(1.0, 0.0);
        AuxVector(v)
    }

    pub fn as_vector(&self) -> &DVector<Complex64> {
        &self.0
    }

    /// Components `2..=M+1`.
    pub fn tail(&self) -> Vec<Complex64> {
        self.0.iter().skip(1).copied().collect()
    }
}

/// Minimizer of `y^H R y` subject to `y_1 = 1`.
pub fn update_y(r: &DMatrix<Complex64>, method: YMethod) -> Result<AuxVector> {
    if !r.is_square() || r.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            expected: r.nrows(),
            got: r.ncols(),
        });
    }
    match method {
        YMethod::Solve => {
            let mut e1 = DVector::zeros(r.nrows());
            e1[0] = Complex64::new(1.0, 0.0);
            let x = r.clone().lu().solve(&e1).ok_or(Error::SingularR)?;
            AuxVector::from_unnormalized(x)
        }
        YMethod::GramSchmidt => AuxVector::from_unnormalized(orthogonal_to_trailing_rows(r)?),
    }
}

/// Vector annihilated by rows `2..` of Hermitian `r`, with unit first
/// component before rescaling. Row `k` annihilates `u` exactly when `u` is
/// orthogonal (Hermitian inner product) to column `k`, so the columns are
/// orthonormalized and `e1` is projected off their span. Each projection is
/// applied twice to hold orthogonality at working precision.
fn orthogonal_to_trailing_rows(r: &DMatrix<Complex64>) -> Result<DVector<Complex64>> {
    let n = r.nrows();
    let mut basis: Vec<DVector<Complex64>> = Vec::with_capacity(n - 1);
    for k in 1..n {
        let mut v = r.column(k).clone_owned();
        let scale = v.norm();
        for _ in 0..2 {
            for q in &basis {
                let coef = q.dotc(&v);
                v.axpy(-coef, q, Complex64::new(1.0, 0.0));
            }
        }
        let norm = v.norm();
        if !(norm > 1e-13 * scale) {
            return Err(Error::SingularR);
        }
        basis.push(v / Complex64::new(norm, 0.0));
    }
    let mut u = DVector::zeros(n);
    u[0] = Complex64::new(1.0, 0.0);
    for _ in 0..2 {
        for q in &basis {
            let coef = q.dotc(&u);
            u.axpy(-coef, q, Complex64::new(1.0, 0.0));
        }
    }
    Ok(u)
}

/// `g(y, a) = y^H R y` (real because `R` is Hermitian).
pub fn g_value(y: &AuxVector, r: &DMatrix<Complex64>) -> f64 {
    y.0.dotc(&(r * &y.0)).re
}

/// Which product combines `H^H y~ y~^H H` with `V`. Only `Elementwise` is
/// correct; the other variant exists so the self-check can prove it notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum HadamardForm {
    Elementwise,
    MatrixProduct,
}

/// `(H^H y~ y~^H H) (.) V` built from `b = H^H y~`.
pub(crate) fn hadamard_block(b: &[Complex64], v: &[f64], form: HadamardForm) -> DMatrix<Complex64> {
    let n = b.len();
    let outer = DMatrix::from_fn(n, n, |i, j| b[i] * b[j].conj());
    let vm = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(v[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    match form {
        HadamardForm::Elementwise => outer.component_mul(&vm),
        HadamardForm::MatrixProduct => outer * vm,
    }
}

/// `H^H y~`.
pub fn back_project(gm: &GlobalModel, ytilde: &[Complex64]) -> Result<Vec<Complex64>> {
    if ytilde.len() != gm.row_count() {
        return Err(Error::DimensionMismatch {
            expected: gm.row_count(),
            got: ytilde.len(),
        });
    }
    let mut b = vec![Complex64::new(0.0, 0.0); gm.node_count()];
    for (r, &(_, s)) in gm.row_map().iter().enumerate() {
        b[s] += gm.row_gains()[r].conj() * ytilde[r];
    }
    Ok(b)
}

/// Quadratic form in `(a, 1)` equal to `y^H R y` for fixed `y = (1, y~)`:
/// `y^H R y = c1 + (a, 1)^H q (a, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    pub q: DMatrix<Complex64>,
    pub c1: f64,
}

impl QuadForm {
    /// `c1 + (a, 1)^H q (a, 1)`.
    pub fn evaluate(&self, a: &[Complex64]) -> f64 {
        let x = augment(a);
        self.c1 + x.dotc(&(&self.q * &x)).re
    }
}

pub fn build_q(gm: &GlobalModel, ytilde: &[Complex64], eta0: f64) -> Result<QuadForm> {
    build_q_with(gm, ytilde, eta0, HadamardForm::Elementwise)
}

pub(crate) fn build_q_with(
    gm: &GlobalModel,
    ytilde: &[Complex64],
    eta0: f64,
    form: HadamardForm,
) -> Result<QuadForm> {
    let b = back_project(gm, ytilde)?;
    let n = gm.node_count();
    let block = hadamard_block(&b, gm.v(), form);
    let mut q = DMatrix::zeros(n + 1, n + 1);
    q.view_mut((0, 0), (n, n)).copy_from(&block);
    for i in 0..n {
        q[(i, n)] = b[i];
        q[(n, i)] = b[i].conj();
    }
    let c1 = eta0
        + ytilde
            .iter()
            .zip(gm.sigma())
            .map(|(y, s)| y.norm_sqr() * s)
            .sum::<f64>();
    Ok(QuadForm { q, c1 })
}

fn augment(a: &[Complex64]) -> DVector<Complex64> {
    DVector::from_iterator(
        a.len() + 1,
        a.iter().copied().chain(std::iter::once(Complex64::new(1.0, 0.0))),
    )
}

/// Largest eigenvalue of Hermitian `q` by power iteration on `q + ||q||_F I`,
/// which is positive semidefinite, so its dominant eigenvalue is the
/// shifted largest one.
pub fn lambda_max(q: &DMatrix<Complex64>) -> f64 {
    let n = q.nrows();
    let shift = q.norm();
    if shift == 0.0 || n == 0 {
        return 0.0;
    }
    let mut shifted = q.clone();
    for i in 0..n {
        shifted[(i, i)] += Complex64::new(shift, 0.0);
    }
    // Fixed, non-symmetric start so no eigenvector is missed by symmetry.
    let mut v = DVector::from_fn(n, |i, _| {
        Complex64::new(1.0 + 0.37 * (i as f64 + 1.0).sin(), 0.21 * (i as f64 * 1.7).cos())
    });
    v /= Complex64::new(v.norm(), 0.0);
    for _ in 0..EIGEN_ITERS {
        let w = &shifted * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return -shift;
        }
        v = w / Complex64::new(norm, 0.0);
    }
    v.dotc(&(&shifted * &v)).re - shift
}

/// Result of one run of the power-method-like a-update.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerOutcome {
    pub gains: GainVector,
    pub iterations: usize,
    /// `(a, 1)^H Qt (a, 1)` at the start and after each iteration.
    pub objective: Vec<f64>,
    /// Loading constant `lambda` used in `Qt = lambda I - Q`.
    pub lambda: f64,
    /// `a_hat` vanished under fixed energy and the previous gains were kept.
    pub stalled: bool,
}

/// Diagonally loaded matrix `lambda I_{N+1} - Q` with
/// `lambda = margin * lambda_max(Q) + eps`.
pub fn loaded_matrix(q: &DMatrix<Complex64>, margin: f64) -> (DMatrix<Complex64>, f64) {
    let lambda = margin * lambda_max(q).max(0.0) + LOADING_EPS;
    let n = q.nrows();
    let qt = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            Complex64::new(lambda, 0.0) - q[(i, j)]
        } else {
            -q[(i, j)]
        }
    });
    (qt, lambda)
}

/// Increases `(a, 1)^H Qt (a, 1)` over the feasible set by repeatedly
/// projecting the leading `N` entries of `Qt (a, 1)` onto it.
pub fn power_iterate(a: &GainVector, q: &QuadForm, cfg: &OptimizerConfig) -> Result<PowerOutcome> {
    let n = a.len();
    if q.q.nrows() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: q.q.nrows(),
        });
    }
    let domain = a.domain();
    let (qt, lambda) = loaded_matrix(&q.q, cfg.lambda_margin);
    let objective_of = |x: &DVector<Complex64>| x.dotc(&(&qt * x)).re;

    let mut x = augment(a.as_slice());
    let mut objective = vec![objective_of(&x)];
    let mut stalled = false;
    let mut iterations = 0;
    while iterations < cfg.inner_iters {
        let w = &qt * &x;
        let a_hat: Vec<Complex64> = w.iter().take(n).copied().collect();
        let Some(next) = domain.project(&a_hat) else {
            stalled = true;
            break;
        };
        iterations += 1;
        let step = next
            .iter()
            .zip(x.iter())
            .map(|(p, c)| (p - c).norm())
            .fold(0.0, f64::max);
        x = augment(&next);
        objective.push(objective_of(&x));
        if step <= cfg.inner_tol {
            break;
        }
    }
    let gains = GainVector::from_raw(x.iter().take(n).copied().collect(), domain);
    Ok(PowerOutcome {
        gains,
        iterations,
        objective,
        lambda,
        stalled,
    })
}

/// Per-cycle record of one optimization run. Entry 0 is the starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct OptTrace {
    pub eta0: f64,
    pub eta: Vec<f64>,
    pub variance: Vec<f64>,
    pub inner_iters: Vec<usize>,
    pub gains: GainVector,
}

impl OptTrace {
    pub fn initial_variance(&self) -> f64 {
        self.variance[0]
    }

    pub fn final_variance(&self) -> f64 {
        *self.variance.last().expect("trace is never empty")
    }

    /// Final `a^H H^H C^{-1} H a`.
    pub fn final_information(&self) -> f64 {
        1.0 / self.final_variance()
    }

    pub fn outer_cycles(&self) -> usize {
        self.eta.len() - 1
    }

    /// CSV with columns `outer_iter,eta,variance,inner_iters_used`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("outer_iter,eta,variance,inner_iters_used\n");
        for k in 0..self.eta.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                k, self.eta[k], self.variance[k], self.inner_iters[k]
            );
        }
        out
    }

    /// CSV with columns `i,re,im`.
    pub fn gains_csv(&self) -> String {
        gains_csv(&self.gains)
    }
}

pub fn gains_csv(gains: &GainVector) -> String {
    let mut out = String::from("i,re,im\n");
    for (i, a) in gains.as_slice().iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", i, a.re, a.im);
    }
    out
}

/// Cyclic minimization of `eta` over `y` and `a` with the selection plan
/// (and hence `gm`) held fixed. Each cycle first computes the optimal `y`
/// for the current gains, then runs the power-method-like a-update, and
/// stops once `eta` changes by at most `xi`. A step that would raise `eta`
/// is rejected and ends the run, so the final variance never exceeds the
/// initial one.
pub fn optimize(gm: &GlobalModel, cfg: &OptimizerConfig, a_init: &GainVector) -> Result<OptTrace> {
    cfg.validate()?;
    if a_init.len() != gm.node_count() {
        return Err(Error::DimensionMismatch {
            expected: gm.node_count(),
            got: a_init.len(),
        });
    }
    if !a_init.domain().contains(a_init.as_slice()) {
        return Err(Error::InvalidParameter("initial gains are infeasible".into()));
    }
    let eta0 = eta0_bound(gm, cfg.eta0_factor)?;
    let mut a = a_init.clone();
    let info = gm.information(&a)?;
    let mut trace = OptTrace {
        eta0,
        eta: vec![eta0 - info],
        variance: vec![1.0 / info],
        inner_iters: vec![0],
        gains: a.clone(),
    };
    for _ in 0..cfg.max_outer {
        let r = build_r(gm, &a, eta0)?;
        let y = update_y(&r, cfg.y_method)?;
        let q = build_q(gm, &y.tail(), eta0)?;
        let step = power_iterate(&a, &q, cfg)?;
        let info = gm.information(&step.gains)?;
        let prev = *trace.eta.last().expect("non-empty");
        let prev_variance = *trace.variance.last().expect("non-empty");
        let current = eta0 - info;
        if current > prev || 1.0 / info > prev_variance {
            // Only rounding can do this; keep the previous gains.
            return Ok(trace);
        }
        a = step.gains;
        trace.eta.push(current);
        trace.variance.push(1.0 / info);
        trace.inner_iters.push(step.iterations);
        trace.gains = a.clone();
        if (prev - current).abs() <= cfg.xi {
            return Ok(trace);
        }
    }
    let n = trace.eta.len();
    Err(Error::NotConverged {
        iterations: cfg.max_outer,
        residual: (trace.eta[n - 2] - trace.eta[n - 1]).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{build_global_model, select_retainers};
    use crate::network::{sample_channels, ChannelDist, GainDomain, NetworkModel};
    use crate::topology::{random_connected_graph, GraphModel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn one_row(h: Complex64, v: f64, s: f64) -> GlobalModel {
        GlobalModel::new(1, vec![(0, 0)], vec![h], vec![s], vec![v]).unwrap()
    }

    pub(crate) fn random_instance(n: usize, seed: u64) -> GlobalModel {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let g = random_connected_graph(n, GraphModel::Geometric { radius: 0.6 }, seed).unwrap();
        let ch = sample_channels(&g, ChannelDist::ComplexGaussian { sigma_h: 1.0 }, false, seed)
            .unwrap();
        let sv: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
        let m = NetworkModel::new(g, ch, sv, rng.random_range(0.05..1.0), c(1.0, 0.0), true)
            .unwrap();
        let a = GainVector::ones(n, GainDomain::FixedEnergy);
        let plan = select_retainers(&m.graph, &m.local_information(&a).unwrap()).unwrap();
        build_global_model(&m, &plan, &a).unwrap()
    }

    #[test]
    fn eta0_closed_form() {
        let gm = one_row(c(1.0, 0.0), 1.0, 1.0);
        assert!((eta0_bound(&gm, 1.01).unwrap() - 1.01).abs() < 1e-15);
        let gm2 = one_row(c(2.0, 0.0), 1.0, 1.0);
        assert!((eta0_bound(&gm2, 1.01).unwrap() - 4.04).abs() < 1e-14);
        let quiet = one_row(c(1.0, 0.0), 1.0, 0.0);
        assert_eq!(eta0_bound(&quiet, 1.01), Err(Error::ZeroTransmissionNoise));
    }

    #[test]
    fn r_two_by_two() {
        let h = c(0.6, -0.3);
        let gm = one_row(h, 0.8, 0.2);
        let a = GainVector::new(vec![c(0.0, 1.0)], GainDomain::Unimodular).unwrap();
        let r = build_r(&gm, &a, 3.0).unwrap();
        let ha = h * c(0.0, 1.0);
        assert_eq!(r[(0, 0)], c(3.0, 0.0));
        assert_eq!(r[(1, 0)], ha);
        assert_eq!(r[(0, 1)], ha.conj());
        assert!((r[(1, 1)].re - (ha.norm_sqr() * 0.8 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn zero_gains_block_diagonal_r() {
        let gm = random_instance(5, 3);
        let a = GainVector::from_raw(vec![c(0.0, 0.0); 5], GainDomain::FixedEnergy);
        let r = build_r(&gm, &a, 7.0).unwrap();
        for i in 1..6 {
            assert_eq!(r[(0, i)], c(0.0, 0.0));
        }
        for method in [YMethod::Solve, YMethod::GramSchmidt] {
            let y = update_y(&r, method).unwrap();
            assert_eq!(y.as_vector()[0], c(1.0, 0.0));
            assert!(y.tail().iter().all(|v| v.norm() < 1e-15));
            assert!((g_value(&y, &r) - 7.0).abs() < 1e-14);
        }
        assert_eq!(eta(&gm, &a, 7.0).unwrap(), 7.0);
    }

    #[test]
    fn y_update_closed_form() {
        // R = [[2, 1], [1, 2]]: R^{-1} e1 = (2, -1) / 3, so y = (1, -1/2)
        // and g = 2 - 1/2.
        let r = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        for method in [YMethod::Solve, YMethod::GramSchmidt] {
            let y = update_y(&r, method).unwrap();
            assert!((y.as_vector()[1] - c(-0.5, 0.0)).norm() < 1e-15);
            assert!((g_value(&y, &r) - 1.5).abs() < 1e-15);
        }
        let e1 = AuxVector::first_basis(2);
        assert_eq!(g_value(&e1, &r), 2.0);
    }

    #[test]
    fn singular_r_detected() {
        let r = DMatrix::from_element(3, 3, c(1.0, 0.0));
        assert_eq!(update_y(&r, YMethod::Solve), Err(Error::SingularR));
        assert_eq!(update_y(&r, YMethod::GramSchmidt), Err(Error::SingularR));
    }

    #[test]
    fn q_scalar_expansion() {
        let gm = one_row(c(1.0, 0.0), 1.0, 0.5);
        let t = c(0.3, -0.7);
        let q = build_q(&gm, &[t], 2.0).unwrap();
        assert!((q.q[(0, 0)] - c(t.norm_sqr(), 0.0)).norm() < 1e-15);
        assert_eq!(q.q[(0, 1)], t);
        assert_eq!(q.q[(1, 0)], t.conj());
        assert_eq!(q.q[(1, 1)], c(0.0, 0.0));
        assert!((q.c1 - (2.0 + 0.5 * t.norm_sqr())).abs() < 1e-15);

        let zero = build_q(&random_instance(4, 1), &[c(0.0, 0.0); 4], 5.0).unwrap();
        assert!(zero.q.iter().all(|x| *x == c(0.0, 0.0)));
        assert_eq!(zero.c1, 5.0);
    }

    #[test]
    fn single_sensor_unimodular_is_flat() {
        let gm = one_row(c(0.4, 0.9), 1.3, 0.2);
        let a = GainVector::new(vec![Complex64::from_polar(1.0, 0.7)], GainDomain::Unimodular)
            .unwrap();
        let trace = optimize(&gm, &OptimizerConfig::default(), &a).unwrap();
        assert!(trace.outer_cycles() <= 1);
        assert!(trace.final_variance() <= trace.initial_variance());
        assert!((trace.final_variance() - trace.initial_variance()).abs() < 1e-12);
    }

    #[test]
    fn optimizer_requires_link_noise() {
        let gm = one_row(c(1.0, 0.0), 1.0, 0.0);
        let a = GainVector::ones(1, GainDomain::Unimodular);
        assert_eq!(
            optimize(&gm, &OptimizerConfig::default(), &a),
            Err(Error::ZeroTransmissionNoise)
        );
    }

    #[test]
    fn lambda_max_matches_eigensolver() {
        for seed in 0..20 {
            let gm = random_instance(6, seed);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let yt: Vec<Complex64> = (0..6)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let q = build_q(&gm, &yt, 1.0).unwrap();
            let exact = q.q.clone().symmetric_eigen().eigenvalues.max();
            let est = lambda_max(&q.q);
            assert!(est <= exact + 1e-9);
            let (qt, _) = loaded_matrix(&q.q, 1.05);
            let min_eig = qt.symmetric_eigen().eigenvalues.min();
            assert!(min_eig >= -1e-9, "seed {seed}: {min_eig}");
        }
    }

    #[test]
    fn gains_csv_layout() {
        let g = GainVector::ones(2, GainDomain::Unimodular);
        assert_eq!(gains_csv(&g), "i,re,im\n0,1,0\n1,1,0\n");
    }

    proptest! {
        #[test]
        fn eta_stays_positive(seed in any::<u64>(), n in 1usize..10, unimodular in any::<bool>()) {
            let gm = random_instance(n, seed);
            let eta0 = eta0_bound(&gm, 1.01).unwrap();
            let domain = if unimodular { GainDomain::Unimodular } else { GainDomain::FixedEnergy };
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            for _ in 0..10 {
                let a = GainVector::random(n, domain, &mut rng);
                prop_assert!(eta(&gm, &a, eta0).unwrap() > 0.0);
            }
        }

        #[test]
        fn final_variance_never_exceeds_initial(seed in any::<u64>(), n in 1usize..9, unimodular in any::<bool>()) {
            let gm = random_instance(n, seed);
            let domain = if unimodular { GainDomain::Unimodular } else { GainDomain::FixedEnergy };
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 1);
            let a = GainVector::random(n, domain, &mut rng);
            // Loose stop: convergence speed is not what is checked here.
            let cfg = OptimizerConfig { xi: 1e-6, max_outer: 2000, ..Default::default() };
            let trace = optimize(&gm, &cfg, &a).unwrap();
            prop_assert!(trace.final_variance() <= trace.initial_variance());
            for w in trace.eta.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }

        #[test]
        fn power_iteration_is_monotone_and_feasible(seed in any::<u64>(), n in 1usize..9, unimodular in any::<bool>()) {
            let gm = random_instance(n, seed);
            let domain = if unimodular { GainDomain::Unimodular } else { GainDomain::FixedEnergy };
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let a = GainVector::random(n, domain, &mut rng);
            let eta0 = eta0_bound(&gm, 1.01).unwrap();
            let y = update_y(&build_r(&gm, &a, eta0).unwrap(), YMethod::Solve).unwrap();
            let q = build_q(&gm, &y.tail(), eta0).unwrap();
            let out = power_iterate(&a, &q, &OptimizerConfig::default()).unwrap();
            for w in out.objective.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-10 * w[0].abs().max(1.0));
            }
            prop_assert!(domain.contains(out.gains.as_slice()));
            // Lower y^H R y for the fixed y.
            prop_assert!(q.evaluate(out.gains.as_slice()) <= q.evaluate(a.as_slice()) + 1e-9);
        }
    }
}
