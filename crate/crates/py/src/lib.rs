//! Python bindings: grid worlds, benchmark solves, corridor searches,
//! rollouts and the guarantee suites.
//!
//! Structured results cross the boundary as the same canonical JSON the
//! command line writes, decoded into Python objects with the `json` module.

use dna::export::{search_document, to_canonical_json, DiffLayer, OptionRecord, SearchDocument};
use dna::search::SearchConfig;
use dna::sim::{simulate_plan, SimConfig};
use dna::solver::Benchmark;
use dna::suites::{lemma_suite, theorem1_suite};
use dna::{GridConfig, GridMdp, GridState};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: dna::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = to_canonical_json(value).map_err(py_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A grid MDP parsed from map text.
#[pyclass(module = "dna_py", frozen)]
struct GridWorld {
    mdp: GridMdp,
    bench: Benchmark,
}

#[pymethods]
impl GridWorld {
    /// `config` is the JSON text of a map configuration; defaults apply when absent.
    #[new]
    #[pyo3(signature = (text, config = None))]
    fn new(text: &str, config: Option<&str>) -> PyResult<Self> {
        let config = match config {
            Some(json) => GridConfig::from_json(json).map_err(py_err)?,
            None => GridConfig::default(),
        };
        Self::build(GridMdp::from_text(text, config).map_err(py_err)?)
    }

    /// The bundled 10x10 lake.
    #[staticmethod]
    fn lake10() -> PyResult<Self> {
        Self::build(dna::maps::lake10().map_err(py_err)?)
    }

    /// The bundled deterministic 4x4 map.
    #[staticmethod]
    fn open4() -> PyResult<Self> {
        Self::build(dna::maps::open4().map_err(py_err)?)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.mdp.shape().extents().to_vec()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }

    #[getter]
    fn start(&self) -> Vec<i64> {
        self.mdp.start_state().coords().to_vec()
    }

    fn to_text(&self) -> String {
        self.mdp.to_text()
    }

    /// `V*` in state-id order (row-major).
    fn values(&self) -> Vec<f64> {
        self.bench.values.0.clone()
    }

    /// Greedy benchmark action names in state-id order.
    fn policy(&self) -> Vec<String> {
        self.bench.policy.0.iter().map(|a| a.name()).collect()
    }

    /// Runs a corridor search; `d` and `spacing` default to the map configuration.
    #[pyo3(signature = (start, epsilon, cells, d = None, spacing = None))]
    fn search(
        &self,
        start: Vec<i64>,
        epsilon: f64,
        cells: usize,
        d: Option<usize>,
        spacing: Option<usize>,
    ) -> PyResult<SearchResult> {
        let cfg = self.mdp.config();
        let query = SearchConfig::new(
            GridState::new(start),
            epsilon,
            cells,
            d.unwrap_or(cfg.cell_d),
            spacing.unwrap_or(cfg.cell_spacing),
        );
        let doc = search_document(&self.mdp, &query).map_err(py_err)?;
        Ok(SearchResult {
            mdp: self.mdp.clone(),
            pi_star: self.bench.policy.clone(),
            doc,
        })
    }

    fn __repr__(&self) -> String {
        let shape = self.shape();
        format!("GridWorld({}x{}, gamma={})", shape[0], shape.get(1).unwrap_or(&1), self.gamma())
    }
}

impl GridWorld {
    fn build(mdp: GridMdp) -> PyResult<Self> {
        let bench = Benchmark::solve(&mdp).map_err(py_err)?;
        Ok(Self { mdp, bench })
    }
}

/// The options of one search, ordered by descending ratio.
#[pyclass(module = "dna_py", frozen)]
struct SearchResult {
    mdp: GridMdp,
    pi_star: dna::solver::Policy,
    doc: SearchDocument,
}

impl SearchResult {
    fn option(&self, key: &Bound<'_, PyAny>) -> PyResult<&OptionRecord> {
        let found = if let Ok(rank) = key.extract::<usize>() {
            self.doc.options.get(rank)
        } else {
            let id: String = key.extract()?;
            self.doc.options.iter().find(|o| o.id == id)
        };
        found.ok_or_else(|| PyKeyError::new_err(key.to_string()))
    }
}

#[pymethods]
impl SearchResult {
    fn __len__(&self) -> usize {
        self.doc.options.len()
    }

    #[getter]
    fn benchmark_value(&self) -> f64 {
        self.doc.benchmark_value
    }

    fn ids(&self) -> Vec<String> {
        self.doc.options.iter().map(|o| o.id.clone()).collect()
    }

    fn ratios(&self) -> Vec<f64> {
        self.doc.options.iter().map(|o| o.ratio).collect()
    }

    /// Raw traversal bounds, `None` where undefined.
    fn bounds(&self) -> Vec<Option<f64>> {
        self.doc.options.iter().map(|o| o.bound.map(|b| b.raw)).collect()
    }

    /// The canonical search document, byte-identical to `dna search`.
    fn json(&self) -> PyResult<String> {
        to_canonical_json(&self.doc).map_err(py_err)
    }

    /// One option record as a dict; `key` is a rank or an option id.
    fn get<'py>(&self, py: Python<'py>, key: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, self.option(key)?)
    }

    /// Monte Carlo traversal statistics of one option.
    #[pyo3(signature = (key, n = 500, seed = 0))]
    fn simulate<'py>(&self, py: Python<'py>, key: &Bound<'py, PyAny>, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let plan = self.option(key)?.to_plan(&self.mdp).map_err(py_err)?;
        let report = py
            .detach(|| simulate_plan(&self.mdp, &plan, &self.pi_star, &SimConfig::new(n, seed)))
            .map_err(py_err)?;
        json_to_py(py, &report)
    }

    /// States inside both corridors where the two local policies disagree.
    fn diff<'py>(&self, py: Python<'py>, a: &Bound<'py, PyAny>, b: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &DiffLayer::new(self.option(a)?, self.option(b)?))
    }
}

/// Runs the `lemmas` or `theorem1` suite on `seeds` consecutive random
/// instances starting at `first`.
#[pyfunction]
#[pyo3(signature = (suite, seeds, first = 0))]
fn verify<'py>(py: Python<'py>, suite: &str, seeds: u64, first: u64) -> PyResult<Bound<'py, PyAny>> {
    let ids: Vec<u64> = (first..first + seeds).collect();
    let report = py
        .detach(|| match suite {
            "lemmas" => Some(lemma_suite(&ids)),
            "theorem1" => Some(theorem1_suite(&ids)),
            _ => None,
        })
        .ok_or_else(|| PyValueError::new_err(format!("unknown suite {suite:?}")))?
        .map_err(py_err)?;
    json_to_py(py, &report)
}

#[pymodule]
fn dna_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<GridWorld>()?;
    m.add_class::<SearchResult>()?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
