//! Python bindings: catalog domains, the bounded exhaustion, the
//! plurisubharmonic approximant, and the special functions. Rich reports
//! cross the boundary as JSON strings to keep the surface small.

use std::collections::BTreeMap;
use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pshlab::cover::build_cover;
use pshlab::domain::BoundedDomain;
use pshlab::exhaustion::{build_exhaustion, ExhaustionConfig};
use pshlab::geometry::Point;
use pshlab::harness::test_field;
use pshlab::mergelyan::{build_approximant, build_cutoffs, sup_deviation};
use pshlab::psh::modulus_of_continuity;
use pshlab::special;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn as_point(coords: Vec<f64>, dim: usize) -> PyResult<Point> {
    if coords.len() != dim {
        return Err(PyValueError::new_err(format!(
            "expected {dim} coordinates, got {}",
            coords.len()
        )));
    }
    Ok(Point::from_vec(coords))
}

/// A catalog domain with its boundary atlas.
#[pyclass]
struct Domain {
    inner: Arc<BoundedDomain>,
}

#[pymethods]
impl Domain {
    #[new]
    #[pyo3(signature = (name, params=None))]
    fn new(name: &str, params: Option<BTreeMap<String, f64>>) -> PyResult<Self> {
        let inner =
            pshlab::catalog::build_domain(name, &params.unwrap_or_default()).map_err(err)?;
        Ok(Domain { inner })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn real_dim(&self) -> usize {
        self.inner.real_dim()
    }

    fn eps_w(&self) -> f64 {
        self.inner.eps_w()
    }

    fn is_inside(&self, coords: Vec<f64>) -> PyResult<bool> {
        Ok(self
            .inner
            .is_inside(&as_point(coords, self.inner.real_dim())?))
    }

    fn in_closure(&self, coords: Vec<f64>) -> PyResult<bool> {
        Ok(self
            .inner
            .in_closure(&as_point(coords, self.inner.real_dim())?))
    }

    fn distance_to_boundary(&self, coords: Vec<f64>) -> PyResult<f64> {
        self.inner
            .distance_to_boundary(&as_point(coords, self.inner.real_dim())?)
            .map_err(err)
    }

    fn sample_interior(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.inner
            .sample_interior(&mut rng, count)
            .into_iter()
            .map(|p| p.as_slice().to_vec())
            .collect()
    }

    fn check_segment_property(&self, boundary_samples: usize, seed: u64) -> PyResult<bool> {
        let report = self
            .inner
            .check_segment_property(boundary_samples, &[0.05, 0.15, 0.3, 0.5, 0.8], seed)
            .map_err(err)?;
        Ok(report.passes)
    }
}

/// The bounded plurisubharmonic exhaustion on a domain.
#[pyclass]
struct Exhaustion {
    inner: Arc<pshlab::exhaustion::Exhaustion>,
}

#[pymethods]
impl Exhaustion {
    #[new]
    #[pyo3(signature = (domain, rho=0.9, eps0=0.0, grid_floor=1e-10, seed=7))]
    fn new(domain: &Domain, rho: f64, eps0: f64, grid_floor: f64, seed: u64) -> PyResult<Self> {
        let inner = build_exhaustion(
            domain.inner.clone(),
            ExhaustionConfig {
                eps0,
                rho,
                grid_floor,
                seed,
                ..ExhaustionConfig::default()
            },
        )
        .map_err(err)?;
        Ok(Exhaustion { inner })
    }

    fn w(&self, coords: Vec<f64>) -> PyResult<f64> {
        self.inner
            .w_value(&as_point(coords, self.inner.domain.real_dim())?)
            .map_err(err)
    }

    fn delta(&self, coords: Vec<f64>) -> PyResult<f64> {
        self.inner
            .delta(&as_point(coords, self.inner.domain.real_dim())?)
            .map_err(err)
    }

    /// Per-eps values (eps, w_eps) at one point.
    fn trace(&self, coords: Vec<f64>) -> PyResult<Vec<(f64, f64)>> {
        let rep = self
            .inner
            .trace(&as_point(coords, self.inner.domain.real_dim())?)
            .map_err(err)?;
        Ok(rep.trace)
    }

    fn eps_grid(&self) -> Vec<f64> {
        self.inner.eps_grid()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn lambda_constant(&self) -> f64 {
        self.inner.lambda_constant
    }

    /// Full bounds report (negativity, envelopes, sandwich fits) as JSON.
    fn check_bounds(&self, samples: usize, seed: u64) -> PyResult<String> {
        let rep = self.inner.check_bounds(samples, seed).map_err(err)?;
        serde_json::to_string(&rep).map_err(err)
    }
}

/// A max-of-pieces plurisubharmonic approximant of a named test field.
#[pyclass]
struct Approximant {
    inner: Arc<pshlab::mergelyan::Approximant>,
}

#[pymethods]
impl Approximant {
    #[new]
    #[pyo3(signature = (domain, field, nu, seed=7))]
    fn new(domain: &Domain, field: &str, nu: f64, seed: u64) -> PyResult<Self> {
        let phi = test_field(field)
            .ok_or_else(|| PyValueError::new_err(format!("unknown field `{field}`")))?;
        let cover = build_cover(domain.inner.clone(), seed).map_err(err)?;
        let cutoffs = Arc::new(build_cutoffs(cover));
        let table = modulus_of_continuity(&phi, &domain.inner, 3000, seed);
        let inner = build_approximant(cutoffs, phi, nu, table.value(nu), seed).map_err(err)?;
        Ok(Approximant { inner })
    }

    fn value(&self, coords: Vec<f64>) -> PyResult<f64> {
        let z = as_point(coords, self.inner.cover().domain.real_dim())?;
        Ok(self.inner.value(&z))
    }

    fn sup_deviation(&self, samples: usize, seed: u64) -> (f64, usize) {
        sup_deviation(&self.inner, samples, seed)
    }
}

#[pyfunction]
fn lambert_w0(x: f64) -> PyResult<f64> {
    special::lambert_w0(x).map_err(err)
}

#[pyfunction]
fn lambert_wm1(x: f64) -> PyResult<f64> {
    special::lambert_wm1(x).map_err(err)
}

#[pyfunction]
fn cusp_profile(x: f64) -> f64 {
    special::cusp_profile(x)
}

/// omega(eps) = log(eps/f(eps))/log(1/eps) for the Log-Lipschitz gain.
#[pyfunction]
#[pyo3(signature = (eps, c=1.0, c_tilde=1.0))]
fn omega_ratio(eps: f64, c: f64, c_tilde: f64) -> PyResult<f64> {
    let gain = special::GainFunction::new(
        special::GainForm::LogLipschitz { c, c_tilde },
        0.999 / std::f64::consts::E,
    );
    gain.omega_ratio(eps).map_err(err)
}

#[pyfunction]
fn catalog_names() -> Vec<&'static str> {
    pshlab::catalog::catalog().iter().map(|e| e.name).collect()
}

#[pymodule]
fn pshlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Domain>()?;
    m.add_class::<Exhaustion>()?;
    m.add_class::<Approximant>()?;
    m.add_function(wrap_pyfunction!(lambert_w0, m)?)?;
    m.add_function(wrap_pyfunction!(lambert_wm1, m)?)?;
    m.add_function(wrap_pyfunction!(cusp_profile, m)?)?;
    m.add_function(wrap_pyfunction!(omega_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(catalog_names, m)?)?;
    Ok(())
}
