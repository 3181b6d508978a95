//! Python bindings: graphs, seeded scenarios, gain optimization,
//! decentralized estimation and the variance sweep.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wsn_consensus::consensus::{decentralized_mle, run_average_consensus, AdmmConfig};
use wsn_consensus::experiment::{
    build_scenario, compress, optimize_with_reselection, run_selfcheck, run_variance_sweep,
    trial_seeds, ExperimentConfig, Fault,
};
use wsn_consensus::fusion::{decompose_information, ml_estimate, ml_variance, received_vector};
use wsn_consensus::network::{sample_observations, GainDomain, GainVector, NetworkModel};
use wsn_consensus::topology::{random_connected_graph, GraphModel};
use wsn_consensus::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NotConverged { .. } | Error::RetriesExhausted(_) | Error::SingularR => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn domain(name: &str) -> PyResult<GainDomain> {
    match name {
        "fixed-energy" | "fixed_energy" => Ok(GainDomain::FixedEnergy),
        "unimodular" => Ok(GainDomain::Unimodular),
        other => Err(PyValueError::new_err(format!("unknown constraint {other:?}"))),
    }
}

fn config_from(json: Option<&str>) -> PyResult<ExperimentConfig> {
    let cfg = match json {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Undirected sensor graph.
#[pyclass(name = "Graph", from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: wsn_consensus::topology::Graph,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        let inner = wsn_consensus::topology::Graph::new(n, &edges).map_err(py_err)?;
        Ok(PyGraph { inner })
    }

    /// Connected random graph; `model` is "geometric" (param = radius) or
    /// "gnp" (param = edge probability).
    #[staticmethod]
    fn random(n: usize, model: &str, param: f64, seed: u64) -> PyResult<Self> {
        let model = match model {
            "geometric" => GraphModel::Geometric { radius: param },
            "gnp" => GraphModel::Gnp { p: param },
            other => return Err(PyValueError::new_err(format!("unknown model {other:?}"))),
        };
        let inner = random_connected_graph(n, model, seed).map_err(py_err)?;
        Ok(PyGraph { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = wsn_consensus::topology::Graph::from_json(text).map_err(py_err)?;
        Ok(PyGraph { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        if i >= self.inner.node_count() {
            return Err(PyValueError::new_err(format!("node {i} out of range")));
        }
        Ok(self.inner.neighbors(i).to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(n={}, edges={})",
            self.inner.node_count(),
            self.inner.edge_count()
        )
    }
}

/// One seeded network scenario drawn from an experiment configuration.
#[pyclass(name = "Scenario")]
struct PyScenario {
    cfg: ExperimentConfig,
    model: NetworkModel,
    noise_seed: u64,
}

#[pymethods]
impl PyScenario {
    /// `config` is an optional JSON string with the CLI config schema;
    /// `n` and `seed` override its `n` and `master_seed`.
    #[new]
    #[pyo3(signature = (n=None, seed=None, trial=0, config=None))]
    fn new(n: Option<usize>, seed: Option<u64>, trial: usize, config: Option<&str>) -> PyResult<Self> {
        let mut cfg = config_from(config)?;
        if let Some(n) = n {
            cfg.n = n;
        }
        if let Some(s) = seed {
            cfg.master_seed = s;
        }
        cfg.validate().map_err(py_err)?;
        let seeds = trial_seeds(cfg.master_seed, cfg.n, trial);
        let model = build_scenario(&cfg, cfg.n, &seeds).map_err(py_err)?;
        Ok(PyScenario {
            cfg,
            model,
            noise_seed: seeds.noise,
        })
    }

    #[getter]
    fn graph(&self) -> PyGraph {
        PyGraph {
            inner: self.model.graph.clone(),
        }
    }

    #[getter]
    fn n(&self) -> usize {
        self.model.node_count()
    }

    /// ML variance of the compressed model chosen for `gains`.
    #[pyo3(signature = (gains, constraint="fixed-energy"))]
    fn ml_variance(&self, gains: Vec<Complex64>, constraint: &str) -> PyResult<f64> {
        let a = GainVector::new(gains, domain(constraint)?).map_err(py_err)?;
        let (_, gm) = compress(&self.model, &a).map_err(py_err)?;
        ml_variance(&gm, &a).map_err(py_err)
    }

    /// Optimizes the gains from all-ones; returns a dict with `gains`,
    /// `initial_variance`, `final_variance` and `rounds`.
    #[pyo3(signature = (constraint="fixed-energy"))]
    fn optimize<'py>(&self, py: Python<'py>, constraint: &str) -> PyResult<Bound<'py, PyDict>> {
        let out = optimize_with_reselection(
            &self.model,
            &self.cfg.opt,
            domain(constraint)?,
            self.cfg.reselect_rounds,
        )
        .map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("gains", out.gains().as_slice().to_vec())?;
        d.set_item("initial_variance", out.initial_variance())?;
        d.set_item("final_variance", out.final_variance())?;
        d.set_item("rounds", out.rounds.len())?;
        Ok(d)
    }

    /// Draws one observation set and runs decentralized estimation with the
    /// given gains (all-ones when omitted).
    #[pyo3(signature = (gains=None, constraint="fixed-energy", rho=None))]
    fn estimate<'py>(
        &self,
        py: Python<'py>,
        gains: Option<Vec<Complex64>>,
        constraint: &str,
        rho: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let dom = domain(constraint)?;
        let a = match gains {
            Some(g) => GainVector::new(g, dom).map_err(py_err)?,
            None => GainVector::ones(self.model.node_count(), dom),
        };
        let mut admm = self.cfg.admm;
        if let Some(r) = rho {
            admm.rho = r;
        }
        let (_, gm) = compress(&self.model, &a).map_err(py_err)?;
        let obs = sample_observations(&self.model, self.noise_seed);
        let y = received_vector(&self.model, &gm, &a, &obs);
        let central = ml_estimate(&y, &gm, &a).map_err(py_err)?;
        let dec = decompose_information(&gm, &a, Some(&y)).map_err(py_err)?;
        let state = dec.state.expect("received vector supplied");
        let trace =
            decentralized_mle(&self.model.graph, &admm, &dec.information, &state).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("centralized", central)?;
        d.set_item("estimates", trace.final_estimates().to_vec())?;
        d.set_item("iterations", trace.iterations())?;
        d.set_item("disagreement", trace.final_disagreement(central))?;
        Ok(d)
    }

    fn model_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.model.to_file())
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Iterates of ADMM average consensus until every node is within `tol` of
/// the mean; returns the final values.
#[pyfunction]
#[pyo3(signature = (graph, x, rho=0.5, max_iter=10000, tol=1e-10))]
fn average_consensus(
    graph: &PyGraph,
    x: Vec<Complex64>,
    rho: f64,
    max_iter: usize,
    tol: f64,
) -> PyResult<Vec<Complex64>> {
    let cfg = AdmmConfig { rho, max_iter, tol };
    let t = run_average_consensus(&graph.inner, &cfg, &x).map_err(py_err)?;
    Ok(t.last().to_vec())
}

/// Runs the variance sweep for a JSON config and returns the summary CSV.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn variance_sweep(py: Python<'_>, config: Option<&str>) -> PyResult<String> {
    let cfg = config_from(config)?;
    let out = py.detach(|| run_variance_sweep(&cfg)).map_err(py_err)?;
    Ok(out.summary_csv())
}

/// Runs the invariant suite; returns `(all_passed, report_text)`.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn selfcheck(py: Python<'_>, seed: u64) -> (bool, String) {
    let report = py.detach(|| run_selfcheck(seed, Fault::None));
    (report.all_passed(), report.summary())
}

#[pymodule]
fn wsn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(average_consensus, m)?)?;
    m.add_function(wrap_pyfunction!(variance_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(selfcheck, m)?)?;
    Ok(())
}
