//! Python bindings for the transport-projection moment-closure schemes:
//! the entropy/weight family, polynomial bases, velocity quadrature, the
//! nondegeneracy check, the moment map and its inversion, and scenario-text
//! entry points for full runs and refinement studies.

use kinproj::basis::{check_property_p, PolyBasis, PropertyPParams};
use kinproj::diagnostics::{convergence_study, OracleComparison, StudyInputs};
use kinproj::entropy::EntropyParams;
use kinproj::oracle;
use kinproj::quad::VQuadrature;
use kinproj::scenario::parse_scenario;
use kinproj::scheme;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::sync::Arc;

fn err(e: kinproj::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_v3(v: Vec<f64>) -> PyResult<[f64; 3]> {
    if v.is_empty() || v.len() > 3 {
        return Err(PyValueError::new_err(format!(
            "velocity must have 1..=3 components, got {}",
            v.len()
        )));
    }
    let mut out = [0.0; 3];
    out[..v.len()].copy_from_slice(&v);
    Ok(out)
}

/// Power entropy family and its derived weight functions.
#[pyclass(name = "Entropy")]
struct Entropy {
    inner: EntropyParams,
}

#[pymethods]
impl Entropy {
    #[new]
    #[pyo3(signature = (p = 1.125, c_bar = None))]
    fn new(p: f64, c_bar: Option<f64>) -> PyResult<Self> {
        let inner = match c_bar {
            Some(c) => EntropyParams::new(p, c).map_err(err)?,
            None => EntropyParams::with_unit_density(p).map_err(err)?,
        };
        Ok(Self { inner })
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p()
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q()
    }

    #[getter]
    fn c_bar(&self) -> f64 {
        self.inner.c_bar()
    }

    fn s_primal(&self, f: f64) -> PyResult<f64> {
        self.inner.s_primal(f).map_err(err)
    }

    fn s_star(&self, l: f64) -> f64 {
        self.inner.s_star(l)
    }

    fn weight(&self, l: f64) -> f64 {
        self.inner.weight(l)
    }

    fn w_antideriv(&self, l: f64) -> f64 {
        self.inner.w_antideriv(l)
    }

    fn density_from_dual(&self, l: f64) -> f64 {
        self.inner.density_from_dual(l)
    }
}

/// Ordered polynomial basis of the closure span.
#[pyclass(name = "Basis")]
struct Basis {
    inner: Arc<PolyBasis>,
}

#[pymethods]
impl Basis {
    /// Named preset: 1d-k3 | 1d-k5 | 3d-euler.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(PolyBasis::from_preset(name).map_err(err)?),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn m0(&self) -> u32 {
        self.inner.m0()
    }

    #[getter]
    fn e0_indices(&self) -> Option<Vec<usize>> {
        self.inner.e0_indices().map(|s| s.to_vec())
    }

    fn eval(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.eval(&to_v3(v)?))
    }

    fn eval_dual(&self, gamma: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        self.inner.eval_dual(&gamma, &to_v3(v)?).map_err(err)
    }
}

/// Composite Gauss-Legendre rule on the velocity box.
#[pyclass(name = "Quadrature")]
struct Quadrature {
    inner: VQuadrature,
}

#[pymethods]
impl Quadrature {
    #[new]
    fn new(d: usize, r_quad: f64, panels: usize, nodes_per_panel: usize) -> PyResult<Self> {
        Ok(Self {
            inner: VQuadrature::new(d, r_quad, panels, nodes_per_panel).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn nodes(&self) -> Vec<Vec<f64>> {
        let d = self.inner.dim();
        self.inner.nodes().iter().map(|v| v[..d].to_vec()).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    fn integrate(&self, samples: Vec<f64>) -> PyResult<f64> {
        self.inner.integrate(&samples).map_err(err)
    }
}

/// Outcome of the nondegeneracy check.
#[pyclass(name = "PropertyReport")]
struct PropertyReport {
    #[pyo3(get)]
    holds: bool,
    #[pyo3(get)]
    margins: [f64; 3],
    #[pyo3(get)]
    tail_margin: f64,
}

/// Sampled nondegeneracy check of a dual state given by coefficients.
#[pyfunction(name = "check_property_p")]
#[pyo3(signature = (basis, gamma, r_outer, delta1, r_core, delta2, sample_density = 200.0))]
fn check_property_p_py(
    basis: &Basis,
    gamma: Vec<f64>,
    r_outer: f64,
    delta1: f64,
    r_core: f64,
    delta2: f64,
    sample_density: f64,
) -> PyResult<PropertyReport> {
    let params =
        PropertyPParams::new(basis.inner.dim(), r_outer, delta1, r_core, delta2).map_err(err)?;
    let report = check_property_p(&basis.inner, &gamma, &params, sample_density).map_err(err)?;
    Ok(PropertyReport {
        holds: report.holds,
        margins: report.margins,
        tail_margin: report.tail_margin,
    })
}

/// Moments of the weight antiderivative: U_i = int l_i W(l) dv.
#[pyfunction]
fn moments(basis: &Basis, entropy: &Entropy, quad: &Quadrature, gamma: Vec<f64>) -> PyResult<Vec<f64>> {
    oracle::moments_from_coeffs(&gamma, &basis.inner, &quad.inner, &entropy.inner).map_err(err)
}

/// Advective flux of the moment system: F_i = int v_1 l_i W(l) dv.
#[pyfunction]
fn flux(basis: &Basis, entropy: &Entropy, quad: &Quadrature, gamma: Vec<f64>) -> PyResult<Vec<f64>> {
    oracle::flux_from_coeffs(&gamma, &basis.inner, &quad.inner, &entropy.inner).map_err(err)
}

/// Newton inversion of the moment map from a nondegenerate guess.
#[pyfunction]
fn invert_moments(
    basis: &Basis,
    entropy: &Entropy,
    quad: &Quadrature,
    u: Vec<f64>,
    guess: Vec<f64>,
) -> PyResult<Vec<f64>> {
    oracle::coeffs_from_moments(&u, &guess, &basis.inner, &quad.inner, &entropy.inner).map_err(err)
}

/// Summary of a scheme run started from scenario text.
#[pyclass(name = "RunSummary")]
struct RunSummary {
    #[pyo3(get)]
    complete: bool,
    #[pyo3(get)]
    steps: usize,
    #[pyo3(get)]
    abort: Option<String>,
    /// Final coefficients, one row of k values per grid point.
    #[pyo3(get)]
    final_coeffs: Vec<Vec<f64>>,
    /// Ledger (steps, constants) serialized as JSON.
    #[pyo3(get)]
    ledger_json: String,
}

/// Parse scenario text, execute the configured scheme, and summarize.
#[pyfunction]
fn run_scenario(text: &str) -> PyResult<RunSummary> {
    let s = parse_scenario(text).map_err(err)?;
    let traj = scheme::run(&s.config, s.l0.clone(), &s.entropy, &s.quad).map_err(err)?;
    let final_state = traj.final_state();
    let final_coeffs = (0..final_state.grid().n())
        .map(|j| final_state.gamma_at(j))
        .collect();
    Ok(RunSummary {
        complete: traj.is_complete(),
        steps: traj.completed_steps(),
        abort: traj.abort.as_ref().map(|a| a.cause.to_string()),
        final_coeffs,
        ledger_json: traj.ledger.to_json(s.config.h).to_string(),
    })
}

/// Parse scenario text and run the step-refinement study; returns the
/// convergence report as JSON.
#[pyfunction]
#[pyo3(signature = (text, h_list = None, with_oracle = true))]
fn study_scenario(text: &str, h_list: Option<Vec<f64>>, with_oracle: bool) -> PyResult<String> {
    let s = parse_scenario(text).map_err(err)?;
    let h_list = h_list.unwrap_or_else(|| s.study_h_list.clone());
    let inputs = StudyInputs {
        config: &s.config,
        l0: &s.l0,
        entropy: &s.entropy,
        quad: &s.quad,
        h_list: &h_list,
        cloud_size: s.study_cloud_size,
        seed: s.seed,
        oracle: with_oracle.then_some(OracleComparison {
            n_cells: s.oracle_n_cells,
            cfl: s.oracle_cfl,
        }),
    };
    let report = convergence_study(&inputs).map_err(err)?;
    serde_json_string(&report)
}

fn serde_json_string<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn kinproj_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Entropy>()?;
    m.add_class::<Basis>()?;
    m.add_class::<Quadrature>()?;
    m.add_class::<PropertyReport>()?;
    m.add_class::<RunSummary>()?;
    m.add_function(wrap_pyfunction!(check_property_p_py, m)?)?;
    m.add_function(wrap_pyfunction!(moments, m)?)?;
    m.add_function(wrap_pyfunction!(flux, m)?)?;
    m.add_function(wrap_pyfunction!(invert_moments, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(study_scenario, m)?)?;
    Ok(())
}
