use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIndexError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vesselfield::energy::{total_energy, EnergyConfig, Term};
use vesselfield::io::{self, MeshFormat, VolumeHeader, VolumeKind};
use vesselfield::mesher::{self, TriangleMesh};
use vesselfield::metrics;
use vesselfield::phantom::{PhantomSpec, PRESETS};
use vesselfield::refine::{self, RefineConfig};
use vesselfield::{BinaryMask, Dims, Error, GridSpacing, OccupancyVolume, SdfVolume, VoxelVolume};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::EmptyMask | Error::DegenerateMask(_) => PyValueError::new_err(e.to_string()),
        Error::NonFinite { .. } => PyArithmeticError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        Error::Format(_) | Error::Unsupported(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

fn grid(spacing: (f64, f64, f64)) -> PyResult<GridSpacing> {
    GridSpacing::new(spacing.0, spacing.1, spacing.2).map_err(to_py)
}

fn parse_kind(kind: &str) -> PyResult<VolumeKind> {
    match kind {
        "sdf" => Ok(VolumeKind::Sdf),
        "occupancy" => Ok(VolumeKind::Occupancy),
        "mask" => Ok(VolumeKind::Mask),
        "raw" => Ok(VolumeKind::Raw),
        other => Err(PyValueError::new_err(format!("unknown volume kind '{other}'"))),
    }
}

fn kind_name(kind: VolumeKind) -> &'static str {
    match kind {
        VolumeKind::Sdf => "sdf",
        VolumeKind::Occupancy => "occupancy",
        VolumeKind::Mask => "mask",
        VolumeKind::Raw => "raw",
    }
}

/// Dense 3-D scalar volume, x-fastest, spacing in mm.
#[pyclass(name = "Volume", module = "vesselfield_py", from_py_object)]
#[derive(Clone)]
struct PyVolume {
    inner: VoxelVolume,
}

impl PyVolume {
    fn sdf(&self) -> PyResult<SdfVolume> {
        SdfVolume::new(self.inner.clone()).map_err(to_py)
    }

    fn occupancy(&self) -> PyResult<OccupancyVolume> {
        OccupancyVolume::new(self.inner.clone()).map_err(to_py)
    }

    fn mask(&self) -> PyResult<BinaryMask> {
        BinaryMask::new(self.inner.clone()).map_err(to_py)
    }
}

#[pymethods]
impl PyVolume {
    #[new]
    #[pyo3(signature = (dims, spacing = (1.0, 1.0, 1.0), data = None, fill = 0.0))]
    fn new(dims: (usize, usize, usize), spacing: (f64, f64, f64), data: Option<Vec<f64>>, fill: f64) -> PyResult<Self> {
        let d = Dims::new(dims.0, dims.1, dims.2).map_err(to_py)?;
        let s = grid(spacing)?;
        let inner = match data {
            Some(v) => VoxelVolume::from_data(d, s, v).map_err(to_py)?,
            None => VoxelVolume::from_data(d, s, vec![fill; d.len()]).map_err(to_py)?,
        };
        Ok(Self { inner })
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        let [x, y, z] = self.inner.dims().as_array();
        (x, y, z)
    }

    #[getter]
    fn spacing(&self) -> (f64, f64, f64) {
        let [x, y, z] = self.inner.spacing().as_array();
        (x, y, z)
    }

    /// Copy of the samples as a flat list.
    #[getter]
    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn get(&self, i: usize, j: usize, k: usize) -> PyResult<f64> {
        if !self.inner.dims().contains([i, j, k]) {
            return Err(PyIndexError::new_err(format!("({i}, {j}, {k}) outside {:?}", self.dims())));
        }
        Ok(self.inner.get(i, j, k))
    }

    fn count_below(&self, level: f64) -> usize {
        self.inner.data().iter().filter(|&&v| v < level).count()
    }

    /// Reads a raw (.json/.raw) or NIfTI volume; returns `(volume, kind)`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<(Self, String)> {
        let (inner, header) = io::read_volume(&path).map_err(to_py)?;
        Ok((Self { inner }, kind_name(header.kind).to_string()))
    }

    #[pyo3(signature = (path, kind = "raw"))]
    fn save(&self, path: PathBuf, kind: &str) -> PyResult<()> {
        let header = VolumeHeader::for_volume(&self.inner, parse_kind(kind)?);
        io::write_volume(&self.inner, &header, &path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Volume(dims={:?}, spacing={:?})", self.dims(), self.spacing())
    }
}

#[pyclass(name = "Mesh", module = "vesselfield_py")]
struct PyMesh {
    inner: TriangleMesh,
}

#[pymethods]
impl PyMesh {
    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.inner.vertices.clone()
    }

    #[getter]
    fn triangles(&self) -> Vec<[u32; 3]> {
        self.inner.triangles.clone()
    }

    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn signed_volume(&self) -> f64 {
        self.inner.signed_volume()
    }

    fn is_watertight(&self) -> bool {
        self.inner.is_watertight()
    }

    fn component_count(&self) -> usize {
        mesher::connected_components(&self.inner).count
    }

    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<[f64; 3]>> {
        mesher::surface_samples(&self.inner, n, seed).map_err(to_py)
    }

    #[pyo3(signature = (path, format = "obj"))]
    fn save(&self, path: PathBuf, format: &str) -> PyResult<()> {
        let f: MeshFormat = format.parse().map_err(to_py)?;
        io::write_mesh(&self.inner, &path, f).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.triangles.len()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(vertices={}, triangles={})", self.inner.vertices.len(), self.inner.triangles.len())
    }
}

/// Energy weights and optimizer settings. `beta` and `tau` default to
/// values scaled by the x spacing passed to the constructor.
#[pyclass(name = "RefineConfig", module = "vesselfield_py", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PyRefineConfig {
    lambda_s: f64,
    lambda_o: f64,
    lambda_e: f64,
    lambda_g: f64,
    lambda_r: f64,
    sigma: f64,
    beta: f64,
    tau: f64,
    step_size: f64,
    max_iters: usize,
    grad_tol: f64,
    trace_every: usize,
}

impl PyRefineConfig {
    fn to_rust(&self) -> PyResult<RefineConfig> {
        let energy = EnergyConfig {
            lambda_s: self.lambda_s,
            lambda_o: self.lambda_o,
            lambda_e: self.lambda_e,
            lambda_g: self.lambda_g,
            lambda_r: self.lambda_r,
            sigma: self.sigma,
            beta: self.beta,
            tau: self.tau,
        };
        let cfg = RefineConfig {
            energy,
            step_size: self.step_size,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            trace_every: self.trace_every,
            ..RefineConfig::default()
        };
        cfg.validate().map_err(to_py)?;
        Ok(cfg)
    }
}

#[pymethods]
impl PyRefineConfig {
    #[new]
    #[pyo3(signature = (spacing = (1.0, 1.0, 1.0)))]
    fn new(spacing: (f64, f64, f64)) -> PyResult<Self> {
        let c = RefineConfig::with_energy(EnergyConfig::for_spacing(grid(spacing)?));
        let e = c.energy;
        Ok(Self {
            lambda_s: e.lambda_s,
            lambda_o: e.lambda_o,
            lambda_e: e.lambda_e,
            lambda_g: e.lambda_g,
            lambda_r: e.lambda_r,
            sigma: e.sigma,
            beta: e.beta,
            tau: e.tau,
            step_size: c.step_size,
            max_iters: c.max_iters,
            grad_tol: c.grad_tol,
            trace_every: c.trace_every,
        })
    }

    /// Sets the weight of `term` (sdf, occ, eik, gauss, sur) to zero.
    fn disable(&mut self, term: &str) -> PyResult<()> {
        let t: Term = term.parse().map_err(to_py)?;
        let slot = match t {
            Term::Sdf => &mut self.lambda_s,
            Term::Occ => &mut self.lambda_o,
            Term::Eik => &mut self.lambda_e,
            Term::Gauss => &mut self.lambda_g,
            Term::Sur => &mut self.lambda_r,
        };
        *slot = 0.0;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!(
            "RefineConfig(lambda_s={}, lambda_o={}, lambda_e={}, lambda_g={}, lambda_r={}, sigma={}, beta={}, tau={}, step_size={}, max_iters={})",
            self.lambda_s,
            self.lambda_o,
            self.lambda_e,
            self.lambda_g,
            self.lambda_r,
            self.sigma,
            self.beta,
            self.tau,
            self.step_size,
            self.max_iters
        )
    }
}

#[pyclass(name = "RefineResult", module = "vesselfield_py", get_all)]
struct PyRefineResult {
    sdf: PyVolume,
    initial_energy: f64,
    final_energy: f64,
    iterations: usize,
    improved: bool,
    /// `(iteration, total, grad_sup)` per recorded step.
    trace: Vec<(usize, f64, f64)>,
}

fn config_for(config: Option<PyRefineConfig>, spacing: GridSpacing) -> PyResult<RefineConfig> {
    match config {
        Some(c) => c.to_rust(),
        None => Ok(RefineConfig::with_energy(EnergyConfig::for_spacing(spacing))),
    }
}

#[pyfunction]
fn signed_distance_from_mask(mask: &PyVolume) -> PyResult<PyVolume> {
    let sdf = vesselfield::edt::signed_distance_from_mask(&mask.mask()?).map_err(to_py)?;
    Ok(PyVolume { inner: sdf.into_volume() })
}

/// Returns `(sdf, degenerate)`.
#[pyfunction]
#[pyo3(signature = (occupancy, threshold = 0.5))]
fn init_from_occupancy(occupancy: &PyVolume, threshold: f64) -> PyResult<(PyVolume, bool)> {
    let out = refine::init_from_occupancy(&occupancy.occupancy()?, threshold).map_err(to_py)?;
    Ok((PyVolume { inner: out.sdf.into_volume() }, out.degenerate))
}

/// Per-term energies and the weighted total, as a dict.
#[pyfunction]
#[pyo3(signature = (sdf, occupancy, reference = None, config = None))]
fn energy<'py>(
    py: Python<'py>,
    sdf: &PyVolume,
    occupancy: &PyVolume,
    reference: Option<PyVolume>,
    config: Option<PyRefineConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let f = sdf.sdf()?;
    let y = occupancy.occupancy()?;
    let r = reference.map(|v| v.sdf()).transpose()?;
    let cfg = config_for(config, f.spacing())?;
    let report = total_energy(&f, &y, r.as_ref(), &cfg.energy).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("total", report.total.value)?;
    for (t, v) in report.terms.active() {
        out.set_item(t.name(), v)?;
    }
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (sdf, occupancy, reference = None, config = None))]
fn refine_sdf(
    py: Python<'_>,
    sdf: &PyVolume,
    occupancy: &PyVolume,
    reference: Option<PyVolume>,
    config: Option<PyRefineConfig>,
) -> PyResult<PyRefineResult> {
    let f = sdf.sdf()?;
    let y = occupancy.occupancy()?;
    let r = reference.map(|v| v.sdf()).transpose()?;
    let cfg = config_for(config, f.spacing())?;
    let out = py.detach(|| refine::refine_sdf(&f, &y, r.as_ref(), &cfg)).map_err(to_py)?;
    Ok(PyRefineResult {
        trace: out.trace.entries.iter().map(|e| (e.iteration, e.total, e.grad_sup)).collect(),
        sdf: PyVolume { inner: out.sdf.into_volume() },
        initial_energy: out.initial_energy,
        final_energy: out.final_energy,
        iterations: out.iterations,
        improved: out.improved,
    })
}

#[pyfunction]
#[pyo3(signature = (field, iso = 0.0))]
fn marching_cubes(field: &PyVolume, iso: f64) -> PyResult<PyMesh> {
    Ok(PyMesh { inner: mesher::marching_cubes(&field.inner, iso).map_err(to_py)? })
}

/// `(dice, iou, jd)` of two binary masks.
#[pyfunction]
#[pyo3(signature = (pred, truth, shell_radius = metrics::DEFAULT_SHELL_RADIUS))]
fn volume_scores(pred: &PyVolume, truth: &PyVolume, shell_radius: f64) -> PyResult<(f64, f64, f64)> {
    let s = metrics::volume_scores(&pred.mask()?, &truth.mask()?, shell_radius).map_err(to_py)?;
    Ok((s.dice, s.iou, s.jd))
}

/// `(chamfer * 100, hausdorff)` between two point sets in mm.
#[pyfunction]
fn surface_scores(a: Vec<[f64; 3]>, b: Vec<[f64; 3]>) -> PyResult<(f64, f64)> {
    let s = metrics::surface_scores(&a, &b).map_err(to_py)?;
    Ok((s.chamfer_x100, s.hausdorff))
}

/// Mask of `sdf < 0` as a 0/1 volume.
#[pyfunction]
fn occupancy_from_sdf(sdf: &PyVolume) -> PyResult<PyVolume> {
    Ok(PyVolume { inner: metrics::occupancy_from_sdf(&sdf.sdf()?).into_volume() })
}

/// Builtin phantom; returns `(clean_sdf, clean_mask, degraded_occupancy)`.
#[pyfunction]
#[pyo3(signature = (preset, seed = None))]
fn phantom(py: Python<'_>, preset: &str, seed: Option<u64>) -> PyResult<(PyVolume, PyVolume, PyVolume)> {
    let mut spec = PhantomSpec::preset(preset).map_err(to_py)?;
    if let Some(s) = seed {
        spec.degrade.seed = s;
    }
    let ph = py.detach(|| spec.generate()).map_err(to_py)?;
    Ok((
        PyVolume { inner: ph.sdf.into_volume() },
        PyVolume { inner: ph.mask.into_volume() },
        PyVolume { inner: ph.degraded.into_volume() },
    ))
}

#[pymodule]
fn vesselfield_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("PRESETS", PRESETS.to_vec())?;
    m.add_class::<PyVolume>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyRefineConfig>()?;
    m.add_class::<PyRefineResult>()?;
    m.add_function(wrap_pyfunction!(signed_distance_from_mask, m)?)?;
    m.add_function(wrap_pyfunction!(init_from_occupancy, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(refine_sdf, m)?)?;
    m.add_function(wrap_pyfunction!(marching_cubes, m)?)?;
    m.add_function(wrap_pyfunction!(volume_scores, m)?)?;
    m.add_function(wrap_pyfunction!(surface_scores, m)?)?;
    m.add_function(wrap_pyfunction!(occupancy_from_sdf, m)?)?;
    m.add_function(wrap_pyfunction!(phantom, m)?)?;
    Ok(())
}
