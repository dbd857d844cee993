//! Maximum-likelihood localization by damped Gauss-Newton.
//!
//! With Gaussian link noise, maximizing the likelihood is weighted least
//! squares on the residuals `(P̃_e − μ_e(θ)) / σ_e`, so the solver is
//! Levenberg-Marquardt: solve `(JᵀJ + λI) Δ = −Jᵀr`, grow `λ` tenfold on a
//! rejected step and shrink it tenfold on an accepted one. Iteration runs
//! in box-normalized coordinates (each axis mapped to `[0, 1]` over the
//! deployment box) so the normal matrix is not skewed by the box aspect
//! ratio; termination is on the gradient norm falling below `1e-10` of its
//! initial value, an accepted step shorter than `1e-12` m, or the
//! iteration cap.
//!
//! The likelihood surface is not convex. Anchor-poor geometries have
//! mirror or rotational near-ambiguities, and the `d⁻⁶` mean makes the
//! surface extremely flat far from the anchors, so [`multi_start`] runs
//! the solver from several seeded uniform draws over the box and keeps the
//! lowest final objective (ties broken toward the lowest start index, so
//! results never depend on scheduling).

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::channel::{received_power, MIN_LINK_DISTANCE};
use crate::deployment::{pairwise_distance, MeasurementGraph};
use crate::error::{MiError, Result};
use crate::rng::stream_rng;

/// Gauss-Newton controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Stop when the gradient norm falls below this fraction of its value
    /// at the starting point.
    pub gradient_tolerance: f64,
    /// Stop after an accepted step shorter than this, in meters.
    pub step_tolerance: f64,
    pub initial_damping: f64,
    /// Axis-aligned box used to normalize coordinates (and to draw
    /// [`multi_start`] initial guesses). Without it the solver iterates in
    /// raw meters.
    pub bounds: Option<([f64; 3], [f64; 3])>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 500,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            initial_damping: 1e-3,
            bounds: None,
        }
    }
}

/// Outcome of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    /// Estimated thing positions, meters.
    pub things: Vec<[f64; 3]>,
    /// Final weighted least-squares objective `½ Σ r²`.
    pub objective: f64,
    /// Accepted steps taken.
    pub iterations: usize,
    pub converged: bool,
    /// Gradient norm at the final point (normalized coordinates).
    pub gradient_norm: f64,
}

/// One noisy power reading per graph edge, in edge order, using each
/// edge's frozen `k` and `σ`.
pub fn sample_measurements<R: Rng + ?Sized>(
    graph: &MeasurementGraph,
    positions: &[[f64; 3]],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if positions.len() != graph.node_count() {
        return Err(MiError::InvalidParameter(format!(
            "positions cover {} nodes but the graph has {}",
            positions.len(),
            graph.node_count()
        )));
    }
    let mut out = Vec::with_capacity(graph.edges.len());
    for e in &graph.edges {
        let d = pairwise_distance(positions[e.a], positions[e.b]);
        if !d.is_finite() || d < MIN_LINK_DISTANCE {
            return Err(MiError::CoincidentNodes { a: e.a, b: e.b, distance: d });
        }
        let mean = received_power(e.k, d, graph.exponent)?;
        let z: f64 = rng.sample(StandardNormal);
        out.push(mean + e.sigma * z);
    }
    Ok(out)
}

/// Root-mean-square position error between two equally long position sets.
pub fn rmse(estimated: &[[f64; 3]], truth: &[[f64; 3]]) -> f64 {
    assert_eq!(estimated.len(), truth.len(), "position sets differ in length");
    if estimated.is_empty() {
        return 0.0;
    }
    let total: f64 = estimated
        .iter()
        .zip(truth)
        .map(|(a, b)| {
            (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
        })
        .sum();
    (total / estimated.len() as f64).sqrt()
}

struct Workspace<'a> {
    graph: &'a MeasurementGraph,
    measurements: &'a [f64],
    scale: [f64; 3],
    offset: [f64; 3],
    // anchors first, things refreshed from the iterate
    positions: Vec<[f64; 3]>,
}

impl<'a> Workspace<'a> {
    fn set_things(&mut self, u: &DVector<f64>) {
        let m = self.graph.anchor_count;
        for t in 0..self.graph.thing_count {
            for axis in 0..3 {
                self.positions[m + t][axis] = self.offset[axis] + self.scale[axis] * u[3 * t + axis];
            }
        }
    }

    /// `½ Σ r²`, or `inf` when the candidate collapses a link.
    fn objective(&self) -> f64 {
        let nexp = self.graph.exponent.value();
        let mut acc = 0.0;
        for (e, obs) in self.graph.edges.iter().zip(self.measurements) {
            let d = pairwise_distance(self.positions[e.a], self.positions[e.b]);
            if !d.is_finite() || d < MIN_LINK_DISTANCE {
                return f64::INFINITY;
            }
            let r = (obs - e.k / d.powf(nexp)) / e.sigma;
            acc += r * r;
        }
        0.5 * acc
    }

    /// Residuals and Jacobian in normalized coordinates.
    fn residuals_jacobian(&self) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.graph.thing_count;
        let nexp = self.graph.exponent.value();
        let mut r = DVector::zeros(self.graph.edges.len());
        let mut j = DMatrix::zeros(self.graph.edges.len(), 3 * n);
        for (row, (e, obs)) in self.graph.edges.iter().zip(self.measurements).enumerate() {
            let pa = self.positions[e.a];
            let pb = self.positions[e.b];
            let d = pairwise_distance(pa, pb);
            if !d.is_finite() || d < MIN_LINK_DISTANCE {
                return None;
            }
            r[row] = (obs - e.k / d.powf(nexp)) / e.sigma;
            // ∂r/∂s_a = −(1/σ) ∂μ/∂s_a with ∂μ/∂s_a = −n k Δ / d^{n+2}
            let c = nexp * e.k / (d.powf(nexp + 2.0) * e.sigma);
            let grad_a = [
                c * (pa[0] - pb[0]),
                c * (pa[1] - pb[1]),
                c * (pa[2] - pb[2]),
            ];
            if let Some(t) = self.graph.thing_index(e.a) {
                for axis in 0..3 {
                    j[(row, 3 * t + axis)] += grad_a[axis] * self.scale[axis];
                }
            }
            if let Some(t) = self.graph.thing_index(e.b) {
                for axis in 0..3 {
                    j[(row, 3 * t + axis)] -= grad_a[axis] * self.scale[axis];
                }
            }
        }
        Some((r, j))
    }
}

/// Maximum-likelihood thing positions from one measurement vector, starting
/// at `initial` (meters).
///
/// `measurements` must align with `graph.edges`. Anchors are fixed at their
/// known positions; only thing coordinates are optimized.
pub fn mle_localize(
    graph: &MeasurementGraph,
    anchors: &[[f64; 3]],
    measurements: &[f64],
    initial: &[[f64; 3]],
    opts: &SolveOptions,
) -> Result<EstimateResult> {
    if anchors.len() != graph.anchor_count {
        return Err(MiError::InvalidParameter(format!(
            "{} anchor positions for a graph with {} anchors",
            anchors.len(),
            graph.anchor_count
        )));
    }
    if initial.len() != graph.thing_count {
        return Err(MiError::InvalidParameter(format!(
            "{} initial positions for {} things",
            initial.len(),
            graph.thing_count
        )));
    }
    if measurements.len() != graph.edges.len() {
        return Err(MiError::InvalidParameter(format!(
            "{} measurements for {} edges",
            measurements.len(),
            graph.edges.len()
        )));
    }
    if graph.thing_count == 0 {
        return Err(MiError::InvalidParameter("nothing to localize".into()));
    }
    let (scale, offset) = match opts.bounds {
        Some((lo, hi)) => {
            for axis in 0..3 {
                if !(hi[axis] > lo[axis]) {
                    return Err(MiError::InvalidParameter(format!(
                        "degenerate bounds on axis {axis}: [{}, {}]",
                        lo[axis], hi[axis]
                    )));
                }
            }
            ([hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]], lo)
        }
        None => ([1.0, 1.0, 1.0], [0.0, 0.0, 0.0]),
    };

    let n = graph.thing_count;
    let mut u = DVector::zeros(3 * n);
    for (t, p) in initial.iter().enumerate() {
        for axis in 0..3 {
            u[3 * t + axis] = (p[axis] - offset[axis]) / scale[axis];
        }
    }
    let mut ws = Workspace {
        graph,
        measurements,
        scale,
        offset,
        positions: anchors
            .iter()
            .copied()
            .chain(initial.iter().copied())
            .collect(),
    };

    let mut f = ws.objective();
    if !f.is_finite() {
        return Err(MiError::InvalidParameter(
            "initial guess collapses a link below the minimum distance".into(),
        ));
    }

    let mut lambda = opts.initial_damping;
    let mut iterations = 0;
    let mut converged = false;
    let mut gradient_norm = f64::NAN;
    let mut g0_norm = None;

    for _ in 0..opts.max_iterations {
        let Some((r, j)) = ws.residuals_jacobian() else {
            break;
        };
        let g = j.transpose() * &r;
        gradient_norm = g.norm();
        let g0 = *g0_norm.get_or_insert(gradient_norm);
        if gradient_norm <= opts.gradient_tolerance * g0 {
            converged = true;
            break;
        }
        let m = j.transpose() * &j;

        let mut accepted = false;
        while lambda <= 1e15 {
            let mut damped = m.clone();
            for i in 0..3 * n {
                damped[(i, i)] += lambda;
            }
            let Some(chol) = Cholesky::new(damped) else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let candidate = &u + &step;
            ws.set_things(&candidate);
            let f_new = ws.objective();
            if f_new.is_finite() && f_new < f {
                u = candidate;
                f = f_new;
                lambda = (lambda / 10.0).max(1e-15);
                iterations += 1;
                accepted = true;
                let step_m: f64 = (0..n)
                    .map(|t| {
                        (0..3)
                            .map(|axis| (step[3 * t + axis] * scale[axis]).powi(2))
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    .sqrt();
                if step_m < opts.step_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // not even an infinitesimal damped step improves the objective
            ws.set_things(&u);
            break;
        }
        if converged {
            break;
        }
    }

    ws.set_things(&u);
    let things = ws.positions[graph.anchor_count..].to_vec();
    // a zero initial gradient is already a stationary point
    if g0_norm == Some(0.0) {
        converged = true;
    }
    Ok(EstimateResult { things, objective: f, iterations, converged, gradient_norm })
}

/// Run [`mle_localize`] from `starts` seeded uniform draws over the box
/// and keep the lowest final objective; ties go to the lowest start index.
///
/// Start `s` draws from ChaCha stream `s` of `seed`, so the set of starting
/// points, and therefore the winner, is independent of thread count.
pub fn multi_start(
    graph: &MeasurementGraph,
    anchors: &[[f64; 3]],
    measurements: &[f64],
    bounds: ([f64; 3], [f64; 3]),
    starts: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<EstimateResult> {
    if starts == 0 {
        return Err(MiError::InvalidParameter("need at least one start".into()));
    }
    let (lo, hi) = bounds;
    for axis in 0..3 {
        if !(hi[axis] > lo[axis] && hi[axis].is_finite() && lo[axis].is_finite()) {
            return Err(MiError::InvalidParameter(format!(
                "degenerate start box on axis {axis}: [{}, {}]",
                lo[axis], hi[axis]
            )));
        }
    }
    let mut run_opts = *opts;
    if run_opts.bounds.is_none() {
        run_opts.bounds = Some(bounds);
    }

    let runs: Vec<Result<EstimateResult>> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(seed, s as u64);
            let initial: Vec<[f64; 3]> = (0..graph.thing_count)
                .map(|_| {
                    let mut p = [0.0; 3];
                    for axis in 0..3 {
                        p[axis] = lo[axis] + rng.random::<f64>() * (hi[axis] - lo[axis]);
                    }
                    p
                })
                .collect();
            mle_localize(graph, anchors, measurements, &initial, &run_opts)
        })
        .collect();

    let mut best: Option<EstimateResult> = None;
    for run in runs.into_iter().flatten() {
        let better = match &best {
            None => run.objective.is_finite(),
            Some(b) => run.objective.is_finite() && run.objective < b.objective,
        };
        if better {
            best = Some(run);
        }
    }
    best.ok_or_else(|| {
        MiError::Divergence(format!("all {starts} solver starts failed to produce a finite objective"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::NoiseSpec;
    use crate::deployment::{
        build_measurement_graph, generate_deployment, AnchorPlacement, Deployment, LinkBudget,
        ScenarioConfig,
    };
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;

    fn test_scenario(seed: u64) -> (ScenarioConfig, Deployment, MeasurementGraph) {
        let cfg = ScenarioConfig {
            anchor_count: 6,
            anchor_placement: AnchorPlacement::Explicit(vec![
                [0.0, 0.0, 1796.0],
                [8.0, 0.0, 1796.5],
                [0.0, 8.0, 1797.0],
                [8.0, 8.0, 1797.5],
                [4.0, 0.0, 1798.0],
                [0.0, 4.0, 1798.5],
            ]),
            thing_count: 2,
            ..ScenarioConfig::default()
        };
        let dep = generate_deployment(&cfg, seed).unwrap();
        let g = build_measurement_graph(&dep, &cfg, &LinkBudget::default()).unwrap();
        (cfg, dep, g)
    }

    fn exact_means(g: &MeasurementGraph, positions: &[[f64; 3]]) -> Vec<f64> {
        g.edges
            .iter()
            .map(|e| {
                let d = pairwise_distance(positions[e.a], positions[e.b]);
                received_power(e.k, d, g.exponent).unwrap()
            })
            .collect()
    }

    fn box_opts(cfg: &ScenarioConfig) -> SolveOptions {
        SolveOptions { bounds: Some(cfg.box_bounds()), ..SolveOptions::default() }
    }

    #[test]
    fn starting_at_the_truth_with_exact_data_takes_no_steps() {
        let (cfg, dep, g) = test_scenario(1);
        let meas = exact_means(&g, &dep.positions());
        let r = mle_localize(&g, &dep.anchors, &meas, &dep.things, &box_opts(&cfg)).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.gradient_norm, 0.0);
        assert_eq!(r.things, dep.things);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn exact_data_from_a_perturbed_start_recovers_the_truth() {
        let (cfg, dep, g) = test_scenario(2);
        let meas = exact_means(&g, &dep.positions());
        let mut rng = stream_rng(77, 0);
        let initial: Vec<[f64; 3]> = dep
            .things
            .iter()
            .map(|p| {
                let mut q = *p;
                // a random direction, 0.5 m long
                let mut v = [0.0; 3];
                let mut norm = 0.0;
                for slot in &mut v {
                    let z: f64 = rng.sample(StandardNormal);
                    *slot = z;
                    norm += z * z;
                }
                let norm = norm.sqrt();
                for axis in 0..3 {
                    q[axis] += 0.5 * v[axis] / norm;
                }
                q
            })
            .collect();
        let r = mle_localize(&g, &dep.anchors, &meas, &initial, &box_opts(&cfg)).unwrap();
        assert!(r.converged, "objective {} after {} iterations", r.objective, r.iterations);
        for (est, truth) in r.things.iter().zip(&dep.things) {
            let err = pairwise_distance(*est, *truth);
            assert!(err < 1e-6, "residual position error {err}");
        }
    }

    #[test]
    fn objective_is_monotone_in_the_iteration_budget() {
        let (cfg, dep, g) = test_scenario(3);
        let mut rng = stream_rng(5, 0);
        let meas = sample_measurements(&g, &dep.positions(), &mut rng).unwrap();
        let initial = vec![[4.0, 4.0, 1800.0], [2.0, 6.0, 1801.0]];
        let mut last = f64::INFINITY;
        for cap in [1, 2, 4, 8, 16, 500] {
            let opts = SolveOptions { max_iterations: cap, ..box_opts(&cfg) };
            let r = mle_localize(&g, &dep.anchors, &meas, &initial, &opts).unwrap();
            assert!(r.objective <= last * (1.0 + 1e-12), "{} after cap {cap}", r.objective);
            last = r.objective;
        }
    }

    #[test]
    fn multi_start_beats_a_bad_single_start_and_is_deterministic() {
        let (cfg, dep, g) = test_scenario(4);
        let mut rng = stream_rng(9, 0);
        let meas = sample_measurements(&g, &dep.positions(), &mut rng).unwrap();
        let corner = vec![[0.05, 0.05, 1799.05]; 2];
        let single = mle_localize(&g, &dep.anchors, &meas, &corner, &box_opts(&cfg)).unwrap();
        let multi = multi_start(
            &g,
            &dep.anchors,
            &meas,
            cfg.box_bounds(),
            8,
            123,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(multi.objective <= single.objective * (1.0 + 1e-12));
        let again = multi_start(
            &g,
            &dep.anchors,
            &meas,
            cfg.box_bounds(),
            8,
            123,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(multi.things, again.things);
        assert_eq!(multi.objective, again.objective);
    }

    #[test]
    fn shrinking_noise_pulls_the_estimate_to_the_truth() {
        let (cfg, dep, mut g) = test_scenario(6);
        let mut errors = Vec::new();
        for scale in [1.0, 1e-2] {
            let budget = LinkBudget {
                noise: NoiseSpec::Ranging { sigma: 0.05 * scale },
                ..LinkBudget::default()
            };
            g = build_measurement_graph(&dep, &cfg, &budget).unwrap();
            let mut rng = stream_rng(11, 0);
            let meas = sample_measurements(&g, &dep.positions(), &mut rng).unwrap();
            let r = multi_start(&g, &dep.anchors, &meas, cfg.box_bounds(), 6, 42, &SolveOptions::default())
                .unwrap();
            errors.push(rmse(&r.things, &dep.things));
        }
        assert!(errors[1] < errors[0] / 10.0, "errors {errors:?}");
        assert!(errors[1] < 5e-3, "residual error {}", errors[1]);
    }

    #[test]
    fn sampling_is_seeded_and_centered_on_the_mean() {
        let (_, dep, g) = test_scenario(7);
        let mut r1 = stream_rng(3, 0);
        let mut r2 = stream_rng(3, 0);
        let a = sample_measurements(&g, &dep.positions(), &mut r1).unwrap();
        let b = sample_measurements(&g, &dep.positions(), &mut r2).unwrap();
        assert_eq!(a, b);

        let means = exact_means(&g, &dep.positions());
        let mut rng = stream_rng(8, 0);
        let reps = 20_000;
        let mut acc = vec![0.0; g.edges.len()];
        for _ in 0..reps {
            for (slot, v) in acc.iter_mut().zip(sample_measurements(&g, &dep.positions(), &mut rng).unwrap()) {
                *slot += v;
            }
        }
        for ((avg, mean), e) in acc.iter().map(|s| s / reps as f64).zip(&means).zip(&g.edges) {
            let se = e.sigma / (reps as f64).sqrt();
            assert!((avg - mean).abs() < 5.0 * se, "avg {avg} vs mean {mean}");
        }
    }

    #[test]
    fn rmse_matches_a_hand_computation() {
        let a = [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]];
        let b = [[1.0, 0.0, 0.0], [1.0, 1.0, 2.0]];
        assert_relative_eq!(rmse(&a, &b), 1.0, max_relative = 1e-15);
        assert_eq!(rmse(&[], &[]), 0.0);
    }

    #[test]
    fn input_length_mismatches_are_rejected() {
        let (cfg, dep, g) = test_scenario(8);
        let meas = exact_means(&g, &dep.positions());
        assert!(mle_localize(&g, &dep.anchors[..2], &meas, &dep.things, &box_opts(&cfg)).is_err());
        assert!(mle_localize(&g, &dep.anchors, &meas[..1], &dep.things, &box_opts(&cfg)).is_err());
        assert!(mle_localize(&g, &dep.anchors, &meas, &dep.things[..1], &box_opts(&cfg)).is_err());
    }
}
