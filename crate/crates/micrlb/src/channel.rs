//! Magnetic-induction channel model.
//!
//! A transmitting coil of radius `r_t` driven with power `P_t` at angular
//! frequency `ω = 2πf` couples into a receiving coil (radius `r_r`, `N_r`
//! turns) through soil of permeability `μ`. With coil axes misaligned by
//! `α` and unit-length coil resistance `R₀`, the mean received power at
//! distance `d` is
//!
//! ```text
//! P(d) = ω μ P_t N_r r_t³ r_r³ sin²α / (16 R₀ d⁶) = k · d⁻⁶
//! ```
//!
//! in the near zone; a far-zone variant decays as `d⁻³`. Everything but the
//! distance is folded into the coupling constant `k`, which is what the
//! measurement graph stores per link.
//!
//! Measurements are the mean power plus additive zero-mean Gaussian noise.
//! Noisy samples may come out negative; they are never clipped, and the
//! per-link log-likelihood is the plain Gaussian density
//!
//! ```text
//! ℓ = −ln(σ√(2π)) − (P̃ − P(d))² / (2σ²).
//! ```
//!
//! Noise is parameterized either directly in the power domain or as an
//! equivalent ranging error: a distance-domain σ_d mapped through the local
//! slope of the power curve, `σ_P = |∂P/∂d| · σ_d`, evaluated at the true
//! link distance. The second form keeps the information matrix independent
//! of `k` (the coupling constant cancels from every score), which matters
//! when interpreting parameter sweeps; see the crate README.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::deployment::MeasurementGraph;
use crate::error::{MiError, Result};

/// Links shorter than this are rejected everywhere: the d⁻ⁿ model diverges
/// at contact range and a measurement there carries no usable information.
pub const MIN_LINK_DISTANCE: f64 = 1e-6;

/// Near-zone (`d⁻⁶`) or far-zone (`d⁻³`) power decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathLossExponent {
    Six,
    Three,
}

impl PathLossExponent {
    pub fn value(self) -> f64 {
        match self {
            PathLossExponent::Six => 6.0,
            PathLossExponent::Three => 3.0,
        }
    }

    pub fn from_u32(n: u32) -> Result<Self> {
        match n {
            6 => Ok(PathLossExponent::Six),
            3 => Ok(PathLossExponent::Three),
            other => Err(MiError::InvalidParameter(format!(
                "path loss exponent must be 6 or 3, got {other}"
            ))),
        }
    }

    pub fn as_u32(self) -> u32 {
        match self {
            PathLossExponent::Six => 6,
            PathLossExponent::Three => 3,
        }
    }
}

impl Default for PathLossExponent {
    fn default() -> Self {
        PathLossExponent::Six
    }
}

/// One coil: turn count and radius in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoilSpec {
    pub turns: u32,
    pub radius: f64,
}

impl CoilSpec {
    pub fn new(turns: u32, radius: f64) -> Result<Self> {
        let spec = CoilSpec { turns, radius };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.turns == 0 {
            return Err(MiError::InvalidParameter("coil needs at least one turn".into()));
        }
        if !(self.radius.is_finite() && (1e-4..=1.0).contains(&self.radius)) {
            return Err(MiError::InvalidParameter(format!(
                "coil radius must lie in [1e-4, 1] m, got {}",
                self.radius
            )));
        }
        Ok(())
    }
}

impl Default for CoilSpec {
    fn default() -> Self {
        CoilSpec { turns: 20, radius: 0.02 }
    }
}

/// Channel constants shared by every link.
///
/// The angular frequency is always derived (`ω = 2πf`), never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Carrier frequency in Hz.
    pub frequency: f64,
    /// Medium permeability in H/m.
    pub permeability: f64,
    /// Transmit power in W.
    pub transmit_power: f64,
    /// Coil wire resistance per unit length, Ω/m.
    pub unit_length_resistance: f64,
    /// Coil axis misalignment α in radians.
    pub misalignment_angle: f64,
    pub exponent: PathLossExponent,
}

impl ChannelParams {
    /// `ω = 2πf`.
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("frequency", self.frequency),
            ("permeability", self.permeability),
            ("transmit_power", self.transmit_power),
            ("unit_length_resistance", self.unit_length_resistance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MiError::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !self.misalignment_angle.is_finite() {
            return Err(MiError::InvalidParameter("misalignment angle must be finite".into()));
        }
        Ok(())
    }
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            frequency: 7.0e6,
            permeability: 4.0e-7 * PI,
            transmit_power: 0.1,
            unit_length_resistance: 0.01,
            misalignment_angle: FRAC_PI_2,
            exponent: PathLossExponent::Six,
        }
    }
}

/// Measurement noise, in one of two entry modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    /// Standard deviation applied directly to the received power.
    Power { sigma: f64 },
    /// Equivalent ranging error: distance-domain σ_d (meters), mapped per
    /// link through `σ_P = |∂P/∂d| σ_d = n k d⁻⁽ⁿ⁺¹⁾ σ_d` at the true link
    /// distance.
    Ranging { sigma: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let s = match self {
            NoiseSpec::Power { sigma } | NoiseSpec::Ranging { sigma } => *sigma,
        };
        if !(s.is_finite() && s > 0.0) {
            return Err(MiError::InvalidParameter(format!(
                "noise sigma must be positive and finite, got {s}"
            )));
        }
        Ok(())
    }

    /// Resolve the power-domain standard deviation for one link.
    pub fn power_sigma(&self, k: f64, distance: f64, exponent: PathLossExponent) -> Result<f64> {
        self.validate()?;
        match *self {
            NoiseSpec::Power { sigma } => Ok(sigma),
            NoiseSpec::Ranging { sigma } => {
                check_distance(distance)?;
                let n = exponent.value();
                Ok(n * k / distance.powf(n + 1.0) * sigma)
            }
        }
    }
}

fn check_distance(distance: f64) -> Result<()> {
    if !distance.is_finite() || distance < MIN_LINK_DISTANCE {
        return Err(MiError::DegenerateLink { distance });
    }
    Ok(())
}

/// Coupling constant `k = ω μ P_t N_r r_t³ r_r³ sin²α / (16 R₀)`.
///
/// Only the *receiver's* turn count enters; the transmitter contributes its
/// radius (its turn count is already absorbed into the driving assumption
/// behind the near-zone formula).
pub fn coupling_constant(tx: &CoilSpec, rx: &CoilSpec, params: &ChannelParams) -> Result<f64> {
    tx.validate()?;
    rx.validate()?;
    params.validate()?;
    let s = params.misalignment_angle.sin();
    Ok(params.omega() * params.permeability * params.transmit_power * f64::from(rx.turns)
        * tx.radius.powi(3)
        * rx.radius.powi(3)
        * s
        * s
        / (16.0 * params.unit_length_resistance))
}

/// Mean received power `k · d⁻ⁿ`.
pub fn received_power(k: f64, distance: f64, exponent: PathLossExponent) -> Result<f64> {
    if !(k.is_finite() && k >= 0.0) {
        return Err(MiError::InvalidParameter(format!(
            "coupling constant must be nonnegative and finite, got {k}"
        )));
    }
    check_distance(distance)?;
    Ok(k / distance.powf(exponent.value()))
}

/// Gradient of the mean power with respect to the first endpoint:
/// `∂P/∂s_i = −n k (s_i − s_j) / ‖s_i − s_j‖ⁿ⁺²`.
///
/// The gradient with respect to the other endpoint is the exact negation.
pub fn mean_power_gradient(
    si: [f64; 3],
    sj: [f64; 3],
    k: f64,
    exponent: PathLossExponent,
) -> Result<[f64; 3]> {
    let dx = si[0] - sj[0];
    let dy = si[1] - sj[1];
    let dz = si[2] - sj[2];
    let d = (dx * dx + dy * dy + dz * dz).sqrt();
    check_distance(d)?;
    let n = exponent.value();
    let c = -n * k / d.powf(n + 2.0);
    Ok([c * dx, c * dy, c * dz])
}

/// One noisy power measurement: `P(d) + σ_P · z`, `z ~ N(0,1)`.
///
/// The sample is *not* clipped; negative powers are legal observations
/// under the additive-noise model.
pub fn sample_measurement<R: Rng + ?Sized>(
    k: f64,
    distance: f64,
    exponent: PathLossExponent,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<f64> {
    let mean = received_power(k, distance, exponent)?;
    let sigma = noise.power_sigma(k, distance, exponent)?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(mean + sigma * z)
}

/// Log-density of one observed power under the link's Gaussian model.
pub fn link_log_likelihood(observed: f64, mean: f64, sigma: f64) -> f64 {
    let r = observed - mean;
    -(sigma * (2.0 * PI).sqrt()).ln() - r * r / (2.0 * sigma * sigma)
}

/// Joint log-likelihood of a set of `(edge index, observed power)` pairs
/// under candidate node positions.
///
/// `positions` must cover every graph node, anchors first (indexed by node
/// id). Links are independent, so the joint is a sum over the given pairs.
pub fn log_likelihood(
    measurements: &[(usize, f64)],
    positions: &[[f64; 3]],
    graph: &MeasurementGraph,
) -> Result<f64> {
    if positions.len() != graph.node_count() {
        return Err(MiError::InvalidParameter(format!(
            "positions cover {} nodes but the graph has {}",
            positions.len(),
            graph.node_count()
        )));
    }
    let mut total = 0.0;
    for &(idx, observed) in measurements {
        let edge = graph.edges.get(idx).ok_or_else(|| {
            MiError::InvalidParameter(format!("measurement references edge {idx} of {}", graph.edges.len()))
        })?;
        let d = crate::deployment::pairwise_distance(positions[edge.a], positions[edge.b]);
        if !d.is_finite() || d < MIN_LINK_DISTANCE {
            return Err(MiError::CoincidentNodes { a: edge.a, b: edge.b, distance: d });
        }
        let mean = received_power(edge.k, d, graph.exponent)?;
        total += link_log_likelihood(observed, mean, edge.sigma);
    }
    Ok(total)
}
