//! Fisher information matrices for the unknown thing coordinates.
//!
//! With `N` things the matrix is `3N × 3N` in *axis-major* order: rows and
//! columns `0..N` are the x coordinates of things `0..N`, rows `N..2N` the
//! y coordinates, rows `2N..3N` the z coordinates. [`FimMatrix::node_major`]
//! gives the permuted node-major view (x,y,z of thing 0, then thing 1, and
//! so on) whose consecutive 3×3 diagonal blocks belong to single nodes.
//!
//! Four constructions of the same object:
//!
//! * [`fim_standard`]: for independent Gaussian measurements whose means
//!   depend on the parameters, the information matrix is exactly
//!   `Σ_links σ⁻² ∇μ ∇μᵀ`, with `∇μ` the mean-power gradient stacked over
//!   the coordinates of the link's unknown endpoints. Anchor-only graphs
//!   therefore have exactly zero cross-node blocks.
//! * [`fim_paper`]: the alternative closed-form element set behind `paper`
//!   mode, kept verbatim for comparison. Per link, writing
//!   `Δ = s_i − s_j`, `d = ‖Δ‖`:
//!
//!   ```text
//!   same node, same axis a:   (3k/σ²)·(2k/d⁷ − 28k Δa²/d⁸ + k/d⁷ − 8 Δa²/d⁵)
//!   same node, axes a ≠ b:    60 k² Δa Δb / (σ² d⁸)
//!   across nodes (peer link): the exact negatives of the above
//!   ```
//!
//!   These mix `k` and `k²` terms, can produce negative diagonals, and do
//!   not agree with the canonical matrix; [`crate::crlb::compare_modes`]
//!   quantifies the gap.
//! * [`fim_oracle_mc`]: draws measurements at the true positions and
//!   averages score outer products `∇ℓ ∇ℓᵀ`; converges to the standard
//!   matrix at the usual `1/√samples` rate. Per-entry standard errors ride
//!   along in [`FimMatrix::stderr`].
//! * [`fim_oracle_fd`]: averages the negative Hessian of the
//!   log-likelihood over sampled measurements, with the Hessian taken by
//!   central finite differences; an estimator of the same limit through an
//!   entirely different route.
//!
//! Oracles split their sample budget into fixed-size batches, give every
//! batch its own ChaCha stream, and reduce batch results in index order, so
//! the outcome is bit-identical for any thread count.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channel::{link_log_likelihood, received_power, MIN_LINK_DISTANCE};
use crate::deployment::{pairwise_distance, MeasurementGraph};
use crate::error::{MiError, Result};
use crate::rng::stream_rng;

/// Which construction produced a [`FimMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FimMode {
    Standard,
    Paper,
    OracleMc,
    OracleFd,
}

impl FimMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FimMode::Standard => "standard",
            FimMode::Paper => "paper",
            FimMode::OracleMc => "oracle_mc",
            FimMode::OracleFd => "oracle_fd",
        }
    }
}

impl std::str::FromStr for FimMode {
    type Err = MiError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(FimMode::Standard),
            "paper" => Ok(FimMode::Paper),
            "oracle_mc" => Ok(FimMode::OracleMc),
            "oracle_fd" => Ok(FimMode::OracleFd),
            other => Err(MiError::InvalidParameter(format!(
                "unknown information matrix mode '{other}' (expected standard, paper, oracle_mc or oracle_fd)"
            ))),
        }
    }
}

/// A symmetric `3N × 3N` information matrix in axis-major order, tagged
/// with the construction that produced it. Oracle constructions attach
/// per-entry standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct FimMatrix {
    matrix: DMatrix<f64>,
    thing_count: usize,
    pub mode: FimMode,
    stderr: Option<DMatrix<f64>>,
}

impl FimMatrix {
    /// Wrap an externally produced matrix. The matrix must be square with
    /// side a multiple of 3 and symmetric to 1e-10 relative; it is
    /// symmetrized exactly on the way in.
    pub fn from_parts(mut matrix: DMatrix<f64>, mode: FimMode) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() % 3 != 0 {
            return Err(MiError::InvalidParameter(format!(
                "information matrix must be square with side a multiple of 3, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = matrix.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let defect = symmetry_defect(&matrix);
        if defect > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(MiError::InvalidParameter(format!(
                "matrix is not symmetric: worst asymmetry {defect:.3e} against scale {scale:.3e}"
            )));
        }
        symmetrize(&mut matrix);
        let thing_count = matrix.nrows() / 3;
        Ok(FimMatrix { matrix, thing_count, mode, stderr: None })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Per-entry Monte-Carlo standard errors (oracle modes only).
    pub fn stderr(&self) -> Option<&DMatrix<f64>> {
        self.stderr.as_ref()
    }

    pub fn thing_count(&self) -> usize {
        self.thing_count
    }

    pub fn dim(&self) -> usize {
        3 * self.thing_count
    }

    /// Row/column of (axis, thing) in the axis-major layout.
    pub fn index(&self, axis: usize, thing: usize) -> usize {
        debug_assert!(axis < 3 && thing < self.thing_count);
        axis * self.thing_count + thing
    }

    /// The node-major permutation of the matrix: coordinates grouped as
    /// (x₀,y₀,z₀,x₁,...), so each node's 3×3 block is contiguous.
    pub fn node_major(&self) -> DMatrix<f64> {
        let n = self.thing_count;
        let dim = self.dim();
        let mut out = DMatrix::zeros(dim, dim);
        for i in 0..n {
            for p in 0..3 {
                for j in 0..n {
                    for q in 0..3 {
                        out[(3 * i + p, 3 * j + q)] = self.matrix[(self.index(p, i), self.index(q, j))];
                    }
                }
            }
        }
        out
    }

    /// One node's 3×3 block.
    pub fn node_block(&self, thing: usize) -> nalgebra::Matrix3<f64> {
        let mut out = nalgebra::Matrix3::zeros();
        for p in 0..3 {
            for q in 0..3 {
                out[(p, q)] = self.matrix[(self.index(p, thing), self.index(q, thing))];
            }
        }
        out
    }

    /// Largest absolute difference between the matrix and its transpose
    /// divided by... zero after construction; exposed for tests.
    pub fn symmetry_defect(&self) -> f64 {
        symmetry_defect(&self.matrix)
    }

    /// True when every cross-node block is exactly zero (anchor-only
    /// graphs). Bound computation exploits this structurally.
    pub fn is_node_block_diagonal(&self) -> bool {
        let n = self.thing_count;
        for p in 0..3 {
            for q in 0..3 {
                for i in 0..n {
                    for j in 0..n {
                        if i != j && self.matrix[(self.index(p, i), self.index(q, j))] != 0.0 {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for r in 0..m.nrows() {
        for c in (r + 1)..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    worst
}

fn symmetrize(m: &mut DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in (r + 1)..m.ncols() {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

fn validate_inputs(graph: &MeasurementGraph, positions: &[[f64; 3]]) -> Result<()> {
    if positions.len() != graph.node_count() {
        return Err(MiError::InvalidParameter(format!(
            "positions cover {} nodes but the graph has {}",
            positions.len(),
            graph.node_count()
        )));
    }
    for e in &graph.edges {
        if e.a >= graph.node_count() || e.b >= graph.node_count() {
            return Err(MiError::InvalidParameter(format!(
                "edge ({}, {}) references a missing node",
                e.a, e.b
            )));
        }
        if !(e.sigma.is_finite() && e.sigma > 0.0) {
            return Err(MiError::InvalidParameter(format!(
                "edge ({}, {}) has non-positive sigma {}",
                e.a, e.b, e.sigma
            )));
        }
        if !(e.k.is_finite() && e.k >= 0.0) {
            return Err(MiError::InvalidParameter(format!(
                "edge ({}, {}) has invalid coupling constant {}",
                e.a, e.b, e.k
            )));
        }
    }
    Ok(())
}

fn edge_geometry(
    positions: &[[f64; 3]],
    a: usize,
    b: usize,
) -> Result<([f64; 3], f64)> {
    let delta = [
        positions[a][0] - positions[b][0],
        positions[a][1] - positions[b][1],
        positions[a][2] - positions[b][2],
    ];
    let d = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
    if !d.is_finite() || d < MIN_LINK_DISTANCE {
        return Err(MiError::CoincidentNodes { a, b, distance: d });
    }
    Ok((delta, d))
}

/// The canonical Gaussian-mean information matrix,
/// `Σ_links σ⁻² ∇μ ∇μᵀ`, evaluated at the given positions.
pub fn fim_standard(graph: &MeasurementGraph, positions: &[[f64; 3]]) -> Result<FimMatrix> {
    validate_inputs(graph, positions)?;
    let n = graph.thing_count;
    let mut m = DMatrix::zeros(3 * n, 3 * n);
    let nexp = graph.exponent.value();

    for e in &graph.edges {
        let (delta, d) = edge_geometry(positions, e.a, e.b)?;
        // ∂μ/∂s_a = −n k Δ / d^{n+2}; the other endpoint gets the negation
        let c = -nexp * e.k / d.powf(nexp + 2.0);
        let g = [c * delta[0], c * delta[1], c * delta[2]];
        let w = 1.0 / (e.sigma * e.sigma);

        let mut unknowns: [(usize, f64); 2] = [(usize::MAX, 0.0); 2];
        let mut count = 0;
        if let Some(t) = graph.thing_index(e.a) {
            unknowns[count] = (t, 1.0);
            count += 1;
        }
        if let Some(t) = graph.thing_index(e.b) {
            unknowns[count] = (t, -1.0);
            count += 1;
        }
        for &(ti, si) in &unknowns[..count] {
            for &(tj, sj) in &unknowns[..count] {
                let s = si * sj * w;
                for p in 0..3 {
                    for q in 0..3 {
                        m[(p * n + ti, q * n + tj)] += s * g[p] * g[q];
                    }
                }
            }
        }
    }

    symmetrize(&mut m);
    Ok(FimMatrix { matrix: m, thing_count: n, mode: FimMode::Standard, stderr: None })
}

// Transcribed element formulas. `delta` is the difference vector of the
// link, `d` its length; axis-diagonal elements are even in delta, so the
// orientation never matters.
fn paper_diag(k: f64, sigma: f64, delta: [f64; 3], d: f64, axis: usize) -> f64 {
    let da2 = delta[axis] * delta[axis];
    (3.0 * k / (sigma * sigma))
        * (2.0 * k / d.powi(7) - 28.0 * k * da2 / d.powi(8) + k / d.powi(7) - 8.0 * da2 / d.powi(5))
}

fn paper_cross(k: f64, sigma: f64, delta: [f64; 3], d: f64, a: usize, b: usize) -> f64 {
    60.0 * k * k * delta[a] * delta[b] / (sigma * sigma * d.powi(8))
}

/// The transcribed closed-form information matrix (see module docs).
///
/// The within-node elements are applied per link to each unknown endpoint;
/// the across-node elements (their exact negatives) only exist for peer
/// links, so anchor-only graphs keep zero cross-node blocks here too.
pub fn fim_paper(graph: &MeasurementGraph, positions: &[[f64; 3]]) -> Result<FimMatrix> {
    validate_inputs(graph, positions)?;
    let n = graph.thing_count;
    let mut m = DMatrix::zeros(3 * n, 3 * n);

    let add_sym = |m: &mut DMatrix<f64>, r: usize, c: usize, v: f64| {
        m[(r, c)] += v;
        if r != c {
            m[(c, r)] += v;
        }
    };

    for e in &graph.edges {
        let (delta, d) = edge_geometry(positions, e.a, e.b)?;
        let ta = graph.thing_index(e.a);
        let tb = graph.thing_index(e.b);

        for t in [ta, tb].into_iter().flatten() {
            for axis in 0..3 {
                let v = paper_diag(e.k, e.sigma, delta, d, axis);
                add_sym(&mut m, axis * n + t, axis * n + t, v);
            }
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                let v = paper_cross(e.k, e.sigma, delta, d, p, q);
                add_sym(&mut m, p * n + t, q * n + t, v);
            }
        }
        if let (Some(ti), Some(tj)) = (ta, tb) {
            for axis in 0..3 {
                let v = -paper_diag(e.k, e.sigma, delta, d, axis);
                add_sym(&mut m, axis * n + ti, axis * n + tj, v);
            }
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                let v = -paper_cross(e.k, e.sigma, delta, d, p, q);
                add_sym(&mut m, p * n + ti, q * n + tj, v);
                add_sym(&mut m, q * n + ti, p * n + tj, v);
            }
        }
    }

    symmetrize(&mut m);
    Ok(FimMatrix { matrix: m, thing_count: n, mode: FimMode::Paper, stderr: None })
}

const ORACLE_BATCH: usize = 4096;

fn finish_oracle(
    parts: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    dim: usize,
    samples: usize,
    thing_count: usize,
    mode: FimMode,
) -> FimMatrix {
    let mut sum = DMatrix::zeros(dim, dim);
    let mut sumsq = DMatrix::zeros(dim, dim);
    for (s, q) in parts {
        sum += s;
        sumsq += q;
    }
    let nf = samples as f64;
    let mean = sum / nf;
    let mut se = DMatrix::zeros(dim, dim);
    if samples > 1 {
        for r in 0..dim {
            for c in 0..dim {
                let var = (sumsq[(r, c)] - nf * mean[(r, c)] * mean[(r, c)]) / (nf - 1.0);
                se[(r, c)] = (var.max(0.0) / nf).sqrt();
            }
        }
    }
    let mut matrix = mean;
    symmetrize(&mut matrix);
    symmetrize(&mut se);
    FimMatrix { matrix, thing_count, mode, stderr: Some(se) }
}

/// Monte-Carlo oracle: the empirical covariance of the score at the true
/// positions, `samples⁻¹ Σ ∇ℓ ∇ℓᵀ`, with per-entry standard errors.
///
/// Work is batched and each batch owns ChaCha stream `batch_index` of
/// `seed`; results do not depend on the number of worker threads.
pub fn fim_oracle_mc(
    graph: &MeasurementGraph,
    positions: &[[f64; 3]],
    samples: usize,
    seed: u64,
) -> Result<FimMatrix> {
    validate_inputs(graph, positions)?;
    if samples < 2 {
        return Err(MiError::InvalidParameter("oracle needs at least 2 samples".into()));
    }
    let n = graph.thing_count;
    let dim = 3 * n;
    let nexp = graph.exponent.value();

    // per-edge scatter of the score: ∂ℓ/∂θ = (z/σ)·∂μ/∂θ
    let mut scatter: Vec<Vec<(usize, f64)>> = Vec::with_capacity(graph.edges.len());
    for e in &graph.edges {
        let (delta, d) = edge_geometry(positions, e.a, e.b)?;
        let c = -nexp * e.k / d.powf(nexp + 2.0);
        let g = [c * delta[0], c * delta[1], c * delta[2]];
        let mut coeffs = Vec::with_capacity(6);
        if let Some(t) = graph.thing_index(e.a) {
            for p in 0..3 {
                coeffs.push((p * n + t, g[p] / e.sigma));
            }
        }
        if let Some(t) = graph.thing_index(e.b) {
            for p in 0..3 {
                coeffs.push((p * n + t, -g[p] / e.sigma));
            }
        }
        scatter.push(coeffs);
    }

    let batches = samples.div_ceil(ORACLE_BATCH);
    let parts: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let mut sum = DMatrix::zeros(dim, dim);
            let mut sumsq = DMatrix::zeros(dim, dim);
            let count = ORACLE_BATCH.min(samples - b * ORACLE_BATCH);
            let mut score = vec![0.0_f64; dim];
            for _ in 0..count {
                score.iter_mut().for_each(|v| *v = 0.0);
                for coeffs in &scatter {
                    let z: f64 = rng.sample(StandardNormal);
                    for &(idx, c) in coeffs {
                        score[idx] += z * c;
                    }
                }
                for r in 0..dim {
                    let sr = score[r];
                    for c in 0..dim {
                        let v = sr * score[c];
                        sum[(r, c)] += v;
                        sumsq[(r, c)] += v * v;
                    }
                }
            }
            (sum, sumsq)
        })
        .collect();

    Ok(finish_oracle(parts, dim, samples, n, FimMode::OracleMc))
}

/// Finite-difference oracle: the sample mean of `−∇²ℓ` over measurement
/// draws, Hessians taken by central differences with the given step
/// (meters). The step must lie in `[1e-6, 1e-2] ×` the scene's bounding
/// diameter.
pub fn fim_oracle_fd(
    graph: &MeasurementGraph,
    positions: &[[f64; 3]],
    samples: usize,
    step: f64,
    seed: u64,
) -> Result<FimMatrix> {
    validate_inputs(graph, positions)?;
    if samples < 2 {
        return Err(MiError::InvalidParameter("oracle needs at least 2 samples".into()));
    }
    let diameter = {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in positions {
            for axis in 0..3 {
                lo[axis] = lo[axis].min(p[axis]);
                hi[axis] = hi[axis].max(p[axis]);
            }
        }
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2)).sqrt()
    };
    if !(diameter > 0.0) {
        return Err(MiError::InvalidParameter("scene has zero diameter; step window undefined".into()));
    }
    if !(step >= 1e-6 * diameter && step <= 1e-2 * diameter) {
        return Err(MiError::InvalidParameter(format!(
            "finite-difference step {step:.3e} outside [{:.3e}, {:.3e}] (1e-6..1e-2 of scene diameter)",
            1e-6 * diameter,
            1e-2 * diameter
        )));
    }

    let n = graph.thing_count;
    let dim = 3 * n;
    let m_anchors = graph.anchor_count;

    // means and sigmas at the true geometry, for sampling
    let mut means = Vec::with_capacity(graph.edges.len());
    for e in &graph.edges {
        let (_, d) = edge_geometry(positions, e.a, e.b)?;
        means.push(received_power(e.k, d, graph.exponent)?);
    }

    let batch_size = (ORACLE_BATCH / 16).max(8);
    let batches = samples.div_ceil(batch_size);
    let parts: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let mut sum = DMatrix::zeros(dim, dim);
            let mut sumsq = DMatrix::zeros(dim, dim);
            let count = batch_size.min(samples - b * batch_size);
            let mut work = positions.to_vec();
            let mut meas = vec![0.0_f64; graph.edges.len()];
            for _ in 0..count {
                for (slot, (e, mu)) in meas.iter_mut().zip(graph.edges.iter().zip(&means)) {
                    let z: f64 = rng.sample(StandardNormal);
                    *slot = mu + e.sigma * z;
                }
                let ll = |work: &[[f64; 3]]| -> f64 {
                    let mut total = 0.0;
                    for (e, obs) in graph.edges.iter().zip(&meas) {
                        let d = pairwise_distance(work[e.a], work[e.b]);
                        let mean = e.k / d.powf(graph.exponent.value());
                        total += link_log_likelihood(*obs, mean, e.sigma);
                    }
                    total
                };
                let f0 = ll(&work);
                let bump = |work: &mut Vec<[f64; 3]>, coord: usize, by: f64| {
                    let (axis, thing) = (coord / n, coord % n);
                    work[m_anchors + thing][axis] += by;
                };
                // −Hessian, upper triangle
                for r in 0..dim {
                    bump(&mut work, r, step);
                    let fp = ll(&work);
                    bump(&mut work, r, -2.0 * step);
                    let fm = ll(&work);
                    bump(&mut work, r, step);
                    let h = (fp - 2.0 * f0 + fm) / (step * step);
                    let v = -h;
                    sum[(r, r)] += v;
                    sumsq[(r, r)] += v * v;
                    for c in (r + 1)..dim {
                        bump(&mut work, r, step);
                        bump(&mut work, c, step);
                        let fpp = ll(&work);
                        bump(&mut work, c, -2.0 * step);
                        let fpm = ll(&work);
                        bump(&mut work, r, -2.0 * step);
                        let fmm = ll(&work);
                        bump(&mut work, c, 2.0 * step);
                        let fmp = ll(&work);
                        bump(&mut work, r, step);
                        bump(&mut work, c, -step);
                        let h = (fpp - fpm - fmp + fmm) / (4.0 * step * step);
                        let v = -h;
                        sum[(r, c)] += v;
                        sumsq[(r, c)] += v * v;
                        sum[(c, r)] += v;
                        sumsq[(c, r)] += v * v;
                    }
                }
            }
            (sum, sumsq)
        })
        .collect();

    Ok(finish_oracle(parts, dim, samples, n, FimMode::OracleFd))
}
