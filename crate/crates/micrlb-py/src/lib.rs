//! Python bindings for the localization-bound toolkit.
//!
//! The module mirrors the Rust workflow: build a scenario, generate a
//! deployment, assemble the measurement graph, then ask for information
//! matrices, bound reports, sampled measurements, or estimator runs.
//! Positions cross the boundary as sequences of three floats; matrices
//! come back as nested lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use micrlb as mi;
use micrlb::crlb::{crlb_paper, crlb_standard};
use micrlb::deployment::{build_measurement_graph, generate_deployment};
use micrlb::fim::{fim_oracle_fd, fim_oracle_mc, fim_paper, fim_standard};
use micrlb::rng::stream_rng;

fn pyerr(e: mi::MiError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// One coil: turns and radius in meters.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct CoilSpec {
    inner: mi::CoilSpec,
}

#[pymethods]
impl CoilSpec {
    #[new]
    #[pyo3(signature = (turns = 20, radius = 0.02))]
    fn new(turns: u32, radius: f64) -> PyResult<Self> {
        Ok(CoilSpec { inner: mi::CoilSpec::new(turns, radius).map_err(pyerr)? })
    }

    #[getter]
    fn turns(&self) -> u32 {
        self.inner.turns
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius
    }

    fn __repr__(&self) -> String {
        format!("CoilSpec(turns={}, radius={})", self.inner.turns, self.inner.radius)
    }
}

/// Channel constants shared by every link.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct ChannelParams {
    inner: mi::ChannelParams,
}

#[pymethods]
impl ChannelParams {
    #[new]
    #[pyo3(signature = (
        frequency = 7.0e6,
        permeability = 1.2566370614359173e-6,
        transmit_power = 0.1,
        unit_length_resistance = 0.01,
        misalignment_angle = std::f64::consts::FRAC_PI_2,
        path_loss_exponent = 6,
    ))]
    fn new(
        frequency: f64,
        permeability: f64,
        transmit_power: f64,
        unit_length_resistance: f64,
        misalignment_angle: f64,
        path_loss_exponent: u32,
    ) -> PyResult<Self> {
        let params = mi::ChannelParams {
            frequency,
            permeability,
            transmit_power,
            unit_length_resistance,
            misalignment_angle,
            exponent: mi::PathLossExponent::from_u32(path_loss_exponent).map_err(pyerr)?,
        };
        params.validate().map_err(pyerr)?;
        Ok(ChannelParams { inner: params })
    }

    #[getter]
    fn frequency(&self) -> f64 {
        self.inner.frequency
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega()
    }

    #[getter]
    fn path_loss_exponent(&self) -> u32 {
        self.inner.exponent.as_u32()
    }
}

/// Measurement noise: `NoiseSpec.ranging(sigma)` for a distance-domain
/// level in meters, `NoiseSpec.power(sigma)` for watts applied directly.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct NoiseSpec {
    inner: mi::NoiseSpec,
}

#[pymethods]
impl NoiseSpec {
    #[staticmethod]
    fn ranging(sigma: f64) -> PyResult<Self> {
        let spec = mi::NoiseSpec::Ranging { sigma };
        spec.validate().map_err(pyerr)?;
        Ok(NoiseSpec { inner: spec })
    }

    #[staticmethod]
    fn power(sigma: f64) -> PyResult<Self> {
        let spec = mi::NoiseSpec::Power { sigma };
        spec.validate().map_err(pyerr)?;
        Ok(NoiseSpec { inner: spec })
    }

    fn __repr__(&self) -> String {
        match self.inner {
            mi::NoiseSpec::Ranging { sigma } => format!("NoiseSpec.ranging({sigma})"),
            mi::NoiseSpec::Power { sigma } => format!("NoiseSpec.power({sigma})"),
        }
    }
}

/// Scenario geometry and topology. `anchors`, when given, places anchors
/// verbatim and overrides `placement`; otherwise `placement` is
/// "well_line" or "helix" built from the standoff/spacing ladder.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct ScenarioConfig {
    inner: mi::ScenarioConfig,
}

#[pymethods]
impl ScenarioConfig {
    #[new]
    #[pyo3(signature = (
        thing_count = 60,
        anchor_count = 3,
        placement = "well_line",
        anchors = None,
        standoff = 1.0,
        spacing = 1.0,
        helix_radius = 0.15,
        fracture_width = 8.0,
        fracture_length = 8.0,
        fracture_thickness = 2.0,
        depth = 1800.0,
        comm_range_anchor = f64::INFINITY,
        comm_range_peer = f64::INFINITY,
        link_mode = "anchor_only",
        min_separation = 1e-3,
        temperature = 418.0,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        thing_count: usize,
        anchor_count: usize,
        placement: &str,
        anchors: Option<Vec<[f64; 3]>>,
        standoff: f64,
        spacing: f64,
        helix_radius: f64,
        fracture_width: f64,
        fracture_length: f64,
        fracture_thickness: f64,
        depth: f64,
        comm_range_anchor: f64,
        comm_range_peer: f64,
        link_mode: &str,
        min_separation: f64,
        temperature: f64,
    ) -> PyResult<Self> {
        let (anchor_count, anchor_placement) = match anchors {
            Some(list) => (list.len(), mi::AnchorPlacement::Explicit(list)),
            None => (
                anchor_count,
                match placement {
                    "well_line" => mi::AnchorPlacement::WellLine { standoff, spacing },
                    "helix" => {
                        mi::AnchorPlacement::Helix { standoff, spacing, radius: helix_radius }
                    }
                    other => {
                        return Err(PyValueError::new_err(format!(
                            "placement must be well_line or helix, got '{other}'"
                        )))
                    }
                },
            ),
        };
        let link_mode = match link_mode {
            "anchor_only" => mi::LinkMode::AnchorOnly,
            "cooperative" => mi::LinkMode::Cooperative,
            other => {
                return Err(PyValueError::new_err(format!(
                    "link_mode must be anchor_only or cooperative, got '{other}'"
                )))
            }
        };
        let config = mi::ScenarioConfig {
            fracture_width,
            fracture_length,
            fracture_thickness,
            depth,
            anchor_count,
            anchor_placement,
            thing_count,
            comm_range_anchor,
            comm_range_peer,
            link_mode,
            min_separation,
            temperature,
        };
        config.validate().map_err(pyerr)?;
        Ok(ScenarioConfig { inner: config })
    }

    #[getter]
    fn thing_count(&self) -> usize {
        self.inner.thing_count
    }

    #[getter]
    fn anchor_count(&self) -> usize {
        self.inner.anchor_count
    }

    /// `(low_corner, high_corner)` of the fracture box.
    fn box_bounds(&self) -> ([f64; 3], [f64; 3]) {
        self.inner.box_bounds()
    }
}

/// Transmitter, receiver, channel constants, and noise for every link.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct LinkBudget {
    inner: mi::LinkBudget,
}

#[pymethods]
impl LinkBudget {
    #[new]
    #[pyo3(signature = (tx = None, rx = None, params = None, noise = None))]
    fn new(
        tx: Option<CoilSpec>,
        rx: Option<CoilSpec>,
        params: Option<ChannelParams>,
        noise: Option<NoiseSpec>,
    ) -> Self {
        let default = mi::LinkBudget::default();
        LinkBudget {
            inner: mi::LinkBudget {
                tx: tx.map_or(default.tx, |c| c.inner),
                rx: rx.map_or(default.rx, |c| c.inner),
                params: params.map_or(default.params, |p| p.inner),
                noise: noise.map_or(default.noise, |n| n.inner),
                alpha_overrides: Vec::new(),
            },
        }
    }
}

/// Anchor positions (known) and thing positions (ground truth).
#[pyclass(from_py_object)]
#[derive(Clone)]
struct Deployment {
    inner: mi::Deployment,
}

#[pymethods]
impl Deployment {
    #[getter]
    fn anchors(&self) -> Vec<[f64; 3]> {
        self.inner.anchors.clone()
    }

    #[getter]
    fn things(&self) -> Vec<[f64; 3]> {
        self.inner.things.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// All node positions, anchors first.
    fn positions(&self) -> Vec<[f64; 3]> {
        self.inner.positions()
    }
}

/// The measurement links with their frozen per-link constants.
#[pyclass(from_py_object)]
#[derive(Clone)]
struct MeasurementGraph {
    inner: mi::MeasurementGraph,
}

#[pymethods]
impl MeasurementGraph {
    #[getter]
    fn anchor_count(&self) -> usize {
        self.inner.anchor_count
    }

    #[getter]
    fn thing_count(&self) -> usize {
        self.inner.thing_count
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edges.len()
    }

    /// Edges as `(a, b, kind, k, sigma)` tuples.
    fn edges(&self) -> Vec<(usize, usize, String, f64, f64)> {
        self.inner
            .edges
            .iter()
            .map(|e| (e.a, e.b, e.kind.as_str().to_string(), e.k, e.sigma))
            .collect()
    }
}

/// Per-node and aggregate bound values for one information matrix.
#[pyclass]
struct CrlbReport {
    #[pyo3(get)]
    per_node: Vec<f64>,
    #[pyo3(get)]
    aggregate: f64,
    #[pyo3(get)]
    paper_formula: Option<f64>,
    #[pyo3(get)]
    condition_number: f64,
    #[pyo3(get)]
    singular: bool,
    #[pyo3(get)]
    mode: String,
}

/// Solver outcome: estimated thing positions and diagnostics.
#[pyclass]
struct EstimateResult {
    #[pyo3(get)]
    things: Vec<[f64; 3]>,
    #[pyo3(get)]
    objective: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
}

impl From<mi::EstimateResult> for EstimateResult {
    fn from(r: mi::EstimateResult) -> Self {
        EstimateResult {
            things: r.things,
            objective: r.objective,
            iterations: r.iterations,
            converged: r.converged,
        }
    }
}

#[pyfunction]
fn coupling_constant(tx: CoilSpec, rx: CoilSpec, params: ChannelParams) -> PyResult<f64> {
    micrlb::channel::coupling_constant(&tx.inner, &rx.inner, &params.inner).map_err(pyerr)
}

#[pyfunction]
#[pyo3(signature = (k, distance, exponent = 6))]
fn received_power(k: f64, distance: f64, exponent: u32) -> PyResult<f64> {
    let exponent = mi::PathLossExponent::from_u32(exponent).map_err(pyerr)?;
    micrlb::channel::received_power(k, distance, exponent).map_err(pyerr)
}

#[pyfunction]
#[pyo3(signature = (config, seed = 0))]
fn generate(config: ScenarioConfig, seed: u64) -> PyResult<Deployment> {
    Ok(Deployment { inner: generate_deployment(&config.inner, seed).map_err(pyerr)? })
}

#[pyfunction]
#[pyo3(signature = (deployment, config, budget = None))]
fn build_graph(
    deployment: Deployment,
    config: ScenarioConfig,
    budget: Option<LinkBudget>,
) -> PyResult<MeasurementGraph> {
    let budget = budget.map_or_else(mi::LinkBudget::default, |b| b.inner);
    Ok(MeasurementGraph {
        inner: build_measurement_graph(&deployment.inner, &config.inner, &budget)
            .map_err(pyerr)?,
    })
}

fn parse_mode(mode: &str) -> PyResult<mi::FimMode> {
    mode.replace('-', "_").parse().map_err(pyerr)
}

fn scene_diameter(positions: &[[f64; 3]]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in positions {
        for axis in 0..3 {
            lo[axis] = lo[axis].min(p[axis]);
            hi[axis] = hi[axis].max(p[axis]);
        }
    }
    ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt()
}

fn build_fim(
    graph: &mi::MeasurementGraph,
    positions: &[[f64; 3]],
    mode: mi::FimMode,
    samples: usize,
    step: Option<f64>,
    seed: u64,
) -> PyResult<mi::FimMatrix> {
    match mode {
        mi::FimMode::Standard => fim_standard(graph, positions),
        mi::FimMode::Paper => fim_paper(graph, positions),
        mi::FimMode::OracleMc => fim_oracle_mc(graph, positions, samples, seed),
        mi::FimMode::OracleFd => {
            let step = step.unwrap_or(1e-4 * scene_diameter(positions));
            fim_oracle_fd(graph, positions, samples, step, seed)
        }
    }
    .map_err(pyerr)
}

/// Dense information matrix as a nested list, axis-major ordering.
#[pyfunction]
#[pyo3(signature = (graph, positions, mode = "standard", samples = 100_000, step = None, seed = 0))]
fn fim(
    graph: MeasurementGraph,
    positions: Vec<[f64; 3]>,
    mode: &str,
    samples: usize,
    step: Option<f64>,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let matrix = build_fim(&graph.inner, &positions, parse_mode(mode)?, samples, step, seed)?;
    let m = matrix.matrix();
    Ok((0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect())
}

/// Bound report for one geometry under the chosen construction.
#[pyfunction]
#[pyo3(signature = (
    graph,
    positions,
    mode = "standard",
    samples = 100_000,
    step = None,
    seed = 0,
    cond_threshold = 1e12,
    pseudo_inverse = false,
))]
#[allow(clippy::too_many_arguments)]
fn crlb(
    graph: MeasurementGraph,
    positions: Vec<[f64; 3]>,
    mode: &str,
    samples: usize,
    step: Option<f64>,
    seed: u64,
    cond_threshold: f64,
    pseudo_inverse: bool,
) -> PyResult<CrlbReport> {
    let mode = parse_mode(mode)?;
    let matrix = build_fim(&graph.inner, &positions, mode, samples, step, seed)?;
    let opts = mi::CrlbOptions { cond_threshold, pseudo_inverse };
    let report = crlb_standard(&matrix, &opts).map_err(pyerr)?;
    let paper_formula = if mode == mi::FimMode::Paper {
        crlb_paper(&matrix, &opts).ok()
    } else {
        None
    };
    Ok(CrlbReport {
        per_node: report.per_node,
        aggregate: report.aggregate,
        paper_formula,
        condition_number: report.condition_number,
        singular: report.singular,
        mode: mode.as_str().to_string(),
    })
}

/// One vector of noisy measurements in graph edge order.
#[pyfunction]
#[pyo3(signature = (graph, positions, seed = 0))]
fn sample_measurements(
    graph: MeasurementGraph,
    positions: Vec<[f64; 3]>,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    micrlb::estimator::sample_measurements(&graph.inner, &positions, &mut rng).map_err(pyerr)
}

/// Single damped least-squares run from an explicit initial guess.
#[pyfunction]
#[pyo3(signature = (graph, anchors, measurements, initial, max_iterations = 500))]
fn mle_localize(
    graph: MeasurementGraph,
    anchors: Vec<[f64; 3]>,
    measurements: Vec<f64>,
    initial: Vec<[f64; 3]>,
    max_iterations: usize,
) -> PyResult<EstimateResult> {
    let opts = mi::SolveOptions { max_iterations, ..mi::SolveOptions::default() };
    micrlb::estimator::mle_localize(&graph.inner, &anchors, &measurements, &initial, &opts)
        .map(EstimateResult::from)
        .map_err(pyerr)
}

/// Best of `starts` seeded solver runs started uniformly inside the box.
#[pyfunction]
#[pyo3(signature = (graph, anchors, measurements, lo, hi, starts = 8, seed = 0, max_iterations = 500))]
#[allow(clippy::too_many_arguments)]
fn multi_start(
    graph: MeasurementGraph,
    anchors: Vec<[f64; 3]>,
    measurements: Vec<f64>,
    lo: [f64; 3],
    hi: [f64; 3],
    starts: usize,
    seed: u64,
    max_iterations: usize,
) -> PyResult<EstimateResult> {
    let opts = mi::SolveOptions { max_iterations, ..mi::SolveOptions::default() };
    micrlb::estimator::multi_start(
        &graph.inner,
        &anchors,
        &measurements,
        (lo, hi),
        starts,
        seed,
        &opts,
    )
    .map(EstimateResult::from)
    .map_err(pyerr)
}

/// Scene interchange text for a deployment and its graph.
#[pyfunction]
fn write_scene(deployment: Deployment, graph: MeasurementGraph) -> String {
    micrlb::deployment::write_scene(&deployment.inner, &graph.inner)
}

/// Inverse of `write_scene`.
#[pyfunction]
fn parse_scene(text: &str) -> PyResult<(Deployment, MeasurementGraph)> {
    let (deployment, graph) = micrlb::deployment::parse_scene(text).map_err(pyerr)?;
    Ok((Deployment { inner: deployment }, MeasurementGraph { inner: graph }))
}

#[pymodule]
fn micrlb_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<CoilSpec>()?;
    m.add_class::<ChannelParams>()?;
    m.add_class::<NoiseSpec>()?;
    m.add_class::<ScenarioConfig>()?;
    m.add_class::<LinkBudget>()?;
    m.add_class::<Deployment>()?;
    m.add_class::<MeasurementGraph>()?;
    m.add_class::<CrlbReport>()?;
    m.add_class::<EstimateResult>()?;
    m.add_function(wrap_pyfunction!(coupling_constant, m)?)?;
    m.add_function(wrap_pyfunction!(received_power, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(build_graph, m)?)?;
    m.add_function(wrap_pyfunction!(fim, m)?)?;
    m.add_function(wrap_pyfunction!(crlb, m)?)?;
    m.add_function(wrap_pyfunction!(sample_measurements, m)?)?;
    m.add_function(wrap_pyfunction!(mle_localize, m)?)?;
    m.add_function(wrap_pyfunction!(multi_start, m)?)?;
    m.add_function(wrap_pyfunction!(write_scene, m)?)?;
    m.add_function(wrap_pyfunction!(parse_scene, m)?)?;
    Ok(())
}
