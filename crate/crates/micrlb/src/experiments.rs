//! Seeded Monte-Carlo parameter sweeps, the estimator efficiency study,
//! and CSV/SVG emission.
//!
//! A sweep holds every parameter of a base [`Scenario`] fixed, steps one
//! of them through a value list, and for each value averages the aggregate
//! bound over freshly generated deployments. Trial `t` of sweep point `p`
//! draws its deployment from seed `mix_seed(master_seed, t, p)`, trials
//! run in parallel, and the reduction walks trial results in index order,
//! so a sweep's output is byte-identical across runs and thread counts.
//!
//! Singular trials (for example any two-anchor layout, or anchors placed
//! collinearly on the well line) are counted and excluded from the mean;
//! averaging their infinite bounds would destroy every trend. A point
//! where every trial is singular is reported in the row status instead of
//! aborting the sweep.
//!
//! Value lists are checked against the physical ranges the scenario tables
//! are built from (turns 10..30, coil radius 0.01..0.04 m, transmit power
//! 0.1..0.2 W, carrier 7..13 MHz, ranging noise 0.05..0.7 m) unless
//! explicitly overridden; sweeping far outside them silently produces
//! numbers the near-field model cannot support.

use rayon::prelude::*;
use std::fmt::Write as _;

use crate::channel::NoiseSpec;
use crate::crlb::{crlb_paper, crlb_standard, CrlbOptions};
use crate::deployment::{
    build_measurement_graph, generate_deployment, AnchorPlacement, Deployment, LinkBudget,
    MeasurementGraph, ScenarioConfig,
};
use crate::error::{MiError, Result};
use crate::estimator::{multi_start, sample_measurements, SolveOptions};
use crate::fim::{fim_paper, fim_standard, FimMode};
use crate::rng::{mix_seed, stream_rng};

/// A complete experiment description: geometry plus channel and noise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub budget: LinkBudget,
}

impl Scenario {
    /// Generate the deployment for `seed` and build its measurement graph.
    pub fn realize(&self, seed: u64) -> Result<(Deployment, MeasurementGraph)> {
        let deployment = generate_deployment(&self.config, seed)?;
        let graph = build_measurement_graph(&deployment, &self.config, &self.budget)?;
        Ok((deployment, graph))
    }
}

/// The small fixed scenario used for oracle cross-validation: two things,
/// three well-line anchors, default channel, ranging noise of 0.05 m.
///
/// Its standard information matrix is singular (well-line anchors), which
/// is harmless for matrix-level comparisons but means bounds require the
/// pseudo-inverse option.
pub fn reference_scenario() -> Scenario {
    Scenario {
        config: ScenarioConfig { thing_count: 2, ..ScenarioConfig::default() },
        budget: LinkBudget::default(),
    }
}

/// A well-conditioned validation scenario: six anchors spread around the
/// box faces so no rigid motion of the things is unobservable.
pub fn six_anchor_scenario() -> Scenario {
    Scenario {
        config: ScenarioConfig {
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
        },
        budget: LinkBudget::default(),
    }
}

/// Which scenario knob a sweep steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    /// Noise level in the scenario's own entry mode: meters for ranging
    /// noise, watts for direct power noise.
    NoiseSigma,
    /// Carrier frequency, Hz.
    Frequency,
    /// Anchor count (integer-valued).
    AnchorCount,
    /// Receiver coil turns (integer-valued; the transmitter's turns never
    /// enter the coupling constant).
    CoilTurns,
    /// Radius of both coils, meters.
    CoilRadius,
    /// Transmit power, watts.
    TransmitPower,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 6] = [
        SweepParameter::NoiseSigma,
        SweepParameter::Frequency,
        SweepParameter::AnchorCount,
        SweepParameter::CoilTurns,
        SweepParameter::CoilRadius,
        SweepParameter::TransmitPower,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::NoiseSigma => "noise_sigma",
            SweepParameter::Frequency => "frequency",
            SweepParameter::AnchorCount => "anchor_count",
            SweepParameter::CoilTurns => "coil_turns",
            SweepParameter::CoilRadius => "coil_radius",
            SweepParameter::TransmitPower => "transmit_power",
        }
    }

    /// The physical range sweeps stay inside by default. Ranging noise has
    /// a meters-valued range; direct power noise has none. `None` means
    /// unchecked.
    pub fn table_range(self, noise: &NoiseSpec) -> Option<(f64, f64)> {
        match self {
            SweepParameter::NoiseSigma => match noise {
                NoiseSpec::Ranging { .. } => Some((0.05, 0.7)),
                NoiseSpec::Power { .. } => None,
            },
            SweepParameter::Frequency => Some((7e6, 13e6)),
            SweepParameter::AnchorCount => None,
            SweepParameter::CoilTurns => Some((10.0, 30.0)),
            SweepParameter::CoilRadius => Some((0.01, 0.04)),
            SweepParameter::TransmitPower => Some((0.1, 0.2)),
        }
    }

    /// The base scenario with this parameter set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario> {
        if !value.is_finite() {
            return Err(MiError::InvalidParameter(format!(
                "swept value for {} must be finite, got {value}",
                self.as_str()
            )));
        }
        let mut s = base.clone();
        match self {
            SweepParameter::NoiseSigma => {
                if value <= 0.0 {
                    return Err(MiError::InvalidParameter(format!(
                        "noise level must be positive, got {value}"
                    )));
                }
                s.budget.noise = match s.budget.noise {
                    NoiseSpec::Power { .. } => NoiseSpec::Power { sigma: value },
                    NoiseSpec::Ranging { .. } => NoiseSpec::Ranging { sigma: value },
                };
            }
            SweepParameter::Frequency => {
                s.budget.params.frequency = value;
                s.budget.params.validate()?;
            }
            SweepParameter::AnchorCount => {
                let count = integer_value(self, value)?;
                if matches!(s.config.anchor_placement, AnchorPlacement::Explicit(_)) {
                    return Err(MiError::InvalidParameter(
                        "anchor_count sweeps need a generative placement (well_line or helix), \
                         not an explicit anchor list"
                            .into(),
                    ));
                }
                s.config.anchor_count = count as usize;
            }
            SweepParameter::CoilTurns => {
                let turns = integer_value(self, value)?;
                s.budget.rx.turns = turns as u32;
                s.budget.rx.validate()?;
            }
            SweepParameter::CoilRadius => {
                s.budget.tx.radius = value;
                s.budget.rx.radius = value;
                s.budget.tx.validate()?;
                s.budget.rx.validate()?;
            }
            SweepParameter::TransmitPower => {
                s.budget.params.transmit_power = value;
                s.budget.params.validate()?;
            }
        }
        Ok(s)
    }
}

fn integer_value(p: SweepParameter, value: f64) -> Result<u64> {
    if value < 1.0 || value.fract() != 0.0 || value > u32::MAX as f64 {
        return Err(MiError::InvalidParameter(format!(
            "{} must be a positive integer, got {value}",
            p.as_str()
        )));
    }
    Ok(value as u64)
}

impl std::str::FromStr for SweepParameter {
    type Err = MiError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                MiError::InvalidParameter(format!(
                    "unknown sweep parameter '{s}' (expected one of noise_sigma, frequency, \
                     anchor_count, coil_turns, coil_radius, transmit_power)"
                ))
            })
    }
}

/// Full sweep description.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: Scenario,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub fim_mode: FimMode,
    /// Skip the table-range check on swept values.
    pub allow_out_of_range: bool,
    pub crlb: CrlbOptions,
}

impl SweepConfig {
    pub fn new(base: Scenario, parameter: SweepParameter, values: Vec<f64>) -> Self {
        SweepConfig {
            base,
            parameter,
            values,
            trials: 500,
            master_seed: 0,
            fim_mode: FimMode::Standard,
            allow_out_of_range: false,
            crlb: CrlbOptions::default(),
        }
    }
}

/// Mean and spread of the aggregate bound over one point's trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSummary {
    pub mean: f64,
    /// Sample standard deviation over non-singular trials (0 for a single
    /// usable trial).
    pub std: f64,
    pub trials: usize,
    pub singular: usize,
}

/// How a sweep point ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Ok,
    AllSingular,
    Error,
}

impl PointStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::AllSingular => "all_singular",
            PointStatus::Error => "error",
        }
    }
}

impl std::str::FromStr for PointStatus {
    type Err = MiError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(PointStatus::Ok),
            "all_singular" => Ok(PointStatus::AllSingular),
            "error" => Ok(PointStatus::Error),
            other => Err(MiError::InvalidParameter(format!("unknown point status '{other}'"))),
        }
    }
}

/// One sweep point as emitted to CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub mean_crlb: f64,
    pub std_crlb: f64,
    pub trials: usize,
    pub singular: usize,
    pub status: PointStatus,
}

/// All rows of a sweep, ordered by swept value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub fim_mode: FimMode,
    pub rows: Vec<SweepRow>,
}

/// Average the aggregate bound over `trials` fresh deployments of one
/// scenario.
///
/// Trial `t` realizes the scenario with seed
/// `mix_seed(master_seed, t, point_index)`. A trial whose bound comes out
/// non-finite counts as singular and is excluded from mean and std; if
/// every trial is singular the whole point fails with
/// [`MiError::AllTrialsSingular`]. Modes: `standard` inverts the canonical
/// matrix, `paper` runs the transcribed matrix through the per-axis
/// block-inverse formula; the oracle modes are rejected here (they are
/// single-scenario validation tools, far too slow to average over
/// hundreds of deployments).
pub fn monte_carlo_crlb(
    scenario: &Scenario,
    trials: usize,
    master_seed: u64,
    point_index: u64,
    mode: FimMode,
    opts: &CrlbOptions,
) -> Result<PointSummary> {
    if trials == 0 {
        return Err(MiError::InvalidParameter("need at least one trial".into()));
    }
    if matches!(mode, FimMode::OracleMc | FimMode::OracleFd) {
        return Err(MiError::InvalidParameter(
            "oracle modes validate single scenarios; sweeps take standard or paper".into(),
        ));
    }

    let outcomes: Vec<Result<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (deployment, graph) = scenario.realize(mix_seed(master_seed, t as u64, point_index))?;
            let positions = deployment.positions();
            match mode {
                FimMode::Standard => {
                    let fim = fim_standard(&graph, &positions)?;
                    Ok(crlb_standard(&fim, opts)?.aggregate)
                }
                FimMode::Paper => {
                    let fim = fim_paper(&graph, &positions)?;
                    match crlb_paper(&fim, opts) {
                        Ok(v) => Ok(v),
                        Err(MiError::SingularBlock { .. }) => Ok(f64::INFINITY),
                        Err(e) => Err(e),
                    }
                }
                FimMode::OracleMc | FimMode::OracleFd => unreachable!(),
            }
        })
        .collect();

    let mut values = Vec::with_capacity(trials);
    let mut singular = 0usize;
    for outcome in outcomes {
        let v = outcome?;
        if v.is_finite() {
            values.push(v);
        } else {
            singular += 1;
        }
    }
    if values.is_empty() {
        return Err(MiError::AllTrialsSingular { trials });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(PointSummary { mean, std, trials, singular })
}

/// Run one [`monte_carlo_crlb`] per swept value, ordered ascending.
///
/// Per-point failures land in the row's status instead of aborting the
/// sweep; only invalid configuration (empty or out-of-range value lists)
/// errors up front.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.values.is_empty() {
        return Err(MiError::InvalidParameter("sweep has no values".into()));
    }
    if cfg.values.iter().any(|v| !v.is_finite()) {
        return Err(MiError::InvalidParameter("swept values must be finite".into()));
    }
    if !cfg.allow_out_of_range {
        if let Some((lo, hi)) = cfg.parameter.table_range(&cfg.base.budget.noise) {
            for &v in &cfg.values {
                if !(lo..=hi).contains(&v) {
                    return Err(MiError::InvalidParameter(format!(
                        "{} = {v} is outside the tabulated range [{lo}, {hi}]; pass \
                         allow_out_of_range to sweep it anyway",
                        cfg.parameter.as_str()
                    )));
                }
            }
        }
    }
    let mut values = cfg.values.clone();
    values.sort_by(f64::total_cmp);

    let mut rows = Vec::with_capacity(values.len());
    for (point_index, &value) in values.iter().enumerate() {
        let row = match cfg.parameter.apply(&cfg.base, value) {
            Err(_) => SweepRow {
                value,
                mean_crlb: f64::NAN,
                std_crlb: f64::NAN,
                trials: cfg.trials,
                singular: 0,
                status: PointStatus::Error,
            },
            Ok(scenario) => match monte_carlo_crlb(
                &scenario,
                cfg.trials,
                cfg.master_seed,
                point_index as u64,
                cfg.fim_mode,
                &cfg.crlb,
            ) {
                Ok(s) => SweepRow {
                    value,
                    mean_crlb: s.mean,
                    std_crlb: s.std,
                    trials: s.trials,
                    singular: s.singular,
                    status: PointStatus::Ok,
                },
                Err(MiError::AllTrialsSingular { trials }) => SweepRow {
                    value,
                    mean_crlb: f64::NAN,
                    std_crlb: f64::NAN,
                    trials,
                    singular: trials,
                    status: PointStatus::AllSingular,
                },
                Err(_) => SweepRow {
                    value,
                    mean_crlb: f64::NAN,
                    std_crlb: f64::NAN,
                    trials: cfg.trials,
                    singular: 0,
                    status: PointStatus::Error,
                },
            },
        };
        rows.push(row);
    }
    Ok(SweepResult { parameter: cfg.parameter, fim_mode: cfg.fim_mode, rows })
}

pub const CSV_HEADER: &str = "param,mean_crlb,std_crlb,trials,singular,status";

/// Nine significant digits, the serialization contract for all CSV floats.
fn fmt9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Render sweep rows as CSV (see [`CSV_HEADER`]).
pub fn emit_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt9(r.value),
            fmt9(r.mean_crlb),
            fmt9(r.std_crlb),
            r.trials,
            r.singular,
            r.status.as_str()
        );
    }
    out
}

/// Parse rows back out of [`emit_csv`] output. The swept parameter's name
/// is not part of the format, so only rows round-trip.
pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == CSV_HEADER => {}
        Some((_, header)) => {
            return Err(MiError::Parse {
                line: 1,
                message: format!("expected header '{CSV_HEADER}', got '{header}'"),
            });
        }
        None => {
            return Err(MiError::Parse { line: 1, message: "empty CSV".into() });
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(MiError::Parse {
                line: line_no,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let float = |i: usize| -> Result<f64> {
            fields[i].trim().parse().map_err(|_| MiError::Parse {
                line: line_no,
                message: format!("bad float '{}'", fields[i]),
            })
        };
        let int = |i: usize| -> Result<usize> {
            fields[i].trim().parse().map_err(|_| MiError::Parse {
                line: line_no,
                message: format!("bad integer '{}'", fields[i]),
            })
        };
        rows.push(SweepRow {
            value: float(0)?,
            mean_crlb: float(1)?,
            std_crlb: float(2)?,
            trials: int(3)?,
            singular: int(4)?,
            status: fields[5].trim().parse().map_err(|_| MiError::Parse {
                line: line_no,
                message: format!("bad status '{}'", fields[5]),
            })?,
        });
    }
    Ok(rows)
}

/// A self-contained SVG line chart of mean bound versus swept value, with
/// one-sigma whiskers. The y axis switches to log scale when every
/// plottable mean is positive.
pub fn emit_plot_svg(result: &SweepResult) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const ML: f64 = 70.0;
    const MR: f64 = 20.0;
    const MT: f64 = 36.0;
    const MB: f64 = 52.0;

    let pts: Vec<&SweepRow> = result
        .rows
        .iter()
        .filter(|r| r.status == PointStatus::Ok && r.mean_crlb.is_finite())
        .collect();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let title = format!(
        "mean bound vs {} ({} mode)",
        result.parameter.as_str(),
        result.fim_mode.as_str()
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>",
        W / 2.0
    );

    if pts.is_empty() {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">no plottable points</text>",
            W / 2.0,
            H / 2.0
        );
        svg.push_str("</svg>\n");
        return svg;
    }

    let logy = pts.iter().all(|r| r.mean_crlb > 0.0);
    let ys = |r: &SweepRow| if logy { r.mean_crlb.log10() } else { r.mean_crlb };
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in &pts {
        x0 = x0.min(r.value);
        x1 = x1.max(r.value);
        y0 = y0.min(ys(r));
        y1 = y1.max(ys(r));
    }
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    let px = |v: f64| ML + (v - x0) / (x1 - x0) * (W - ML - MR);
    let py = |v: f64| H - MB - (v - y0) / (y1 - y0) * (H - MT - MB);

    // frame and ticks
    let _ = writeln!(
        svg,
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        W - ML - MR,
        H - MT - MB
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let x = px(fx);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"black\"/>",
            H - MB,
            H - MB + 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            H - MB + 18.0,
            format_args!("{fx:.3e}")
        );
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let y = py(fy);
        let label = if logy { format!("1e{fy:.2}") } else { format!("{fy:.3e}") };
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{ML}\" y2=\"{y:.2}\" stroke=\"black\"/>",
            ML - 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{y:.2}\" text-anchor=\"end\" dominant-baseline=\"middle\">{label}</text>",
            ML - 8.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        H - 12.0,
        result.parameter.as_str()
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        H / 2.0,
        H / 2.0,
        if logy { "mean bound, m^2 (log)" } else { "mean bound, m^2" }
    );

    // one-sigma whiskers behind the line
    for r in &pts {
        if r.std_crlb > 0.0 {
            let (lo, hi) = (r.mean_crlb - r.std_crlb, r.mean_crlb + r.std_crlb);
            if !logy || lo > 0.0 {
                let yl = py(if logy { lo.log10() } else { lo });
                let yh = py(if logy { hi.log10() } else { hi });
                let x = px(r.value);
                let _ = writeln!(
                    svg,
                    "<line x1=\"{x:.2}\" y1=\"{yl:.2}\" x2=\"{x:.2}\" y2=\"{yh:.2}\" \
                     stroke=\"steelblue\" stroke-width=\"1\"/>"
                );
            }
        }
    }
    let path: Vec<String> = pts
        .iter()
        .map(|r| format!("{:.2},{:.2}", px(r.value), py(ys(r))))
        .collect();
    let _ = writeln!(
        svg,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>",
        path.join(" ")
    );
    for r in &pts {
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"steelblue\"/>",
            px(r.value),
            py(ys(r))
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// One noise level of the efficiency study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyRow {
    /// Noise level in the scenario's entry mode units.
    pub sigma: f64,
    /// Empirical root-mean-square position error of the estimator, meters.
    pub rmse: f64,
    /// Square root of the aggregate bound for the fixed geometry, meters.
    pub sqrt_bound: f64,
    /// Monte-Carlo standard error of `rmse`.
    pub rmse_se: f64,
    pub trials: usize,
}

/// How closely the maximum-likelihood estimator approaches the bound.
///
/// The study fixes a single deployment (drawn from `seed`) so the bound is
/// one number per noise level, then per level and trial draws fresh
/// measurement noise, runs the multi-start solver, and accumulates the
/// squared position error. A `sigma` of exactly zero means noiseless
/// measurements: the bound is zero and the solver sees exact means under
/// the scenario's configured weighting (with exact data any positive
/// weighting has its global optimum at the truth), so the row checks exact
/// recovery.
///
/// Trial `t` at level index `i` derives key `mix_seed(seed, t, i)`; noise
/// comes from that key's stream 0, solver starts from a re-mixed key, so
/// no stream is used twice.
pub fn efficiency_study(
    scenario: &Scenario,
    sigmas: &[f64],
    trials: usize,
    starts: usize,
    seed: u64,
    solve: &SolveOptions,
) -> Result<Vec<EfficiencyRow>> {
    if sigmas.is_empty() {
        return Err(MiError::InvalidParameter("efficiency study has no noise levels".into()));
    }
    if trials == 0 || starts == 0 {
        return Err(MiError::InvalidParameter("trials and starts must be positive".into()));
    }
    for &s in sigmas {
        if !(s.is_finite() && s >= 0.0) {
            return Err(MiError::InvalidParameter(format!(
                "noise levels must be nonnegative, got {s}"
            )));
        }
    }
    let deployment = generate_deployment(&scenario.config, seed)?;
    let truth = deployment.positions();
    let bounds = scenario.config.box_bounds();
    let thing_truth = &deployment.things;

    let mut rows = Vec::with_capacity(sigmas.len());
    for (level, &sigma) in sigmas.iter().enumerate() {
        let noiseless = sigma == 0.0;
        let budget = LinkBudget {
            noise: if noiseless {
                scenario.budget.noise
            } else {
                match scenario.budget.noise {
                    NoiseSpec::Power { .. } => NoiseSpec::Power { sigma },
                    NoiseSpec::Ranging { .. } => NoiseSpec::Ranging { sigma },
                }
            },
            ..scenario.budget.clone()
        };
        let graph = build_measurement_graph(&deployment, &scenario.config, &budget)?;

        let sqrt_bound = if noiseless {
            0.0
        } else {
            let fim = fim_standard(&graph, &truth)?;
            let report = crlb_standard(&fim, &CrlbOptions::default())?;
            if report.singular {
                return Err(MiError::InvalidParameter(format!(
                    "scenario is singular (condition {:.3e}); the efficiency comparison needs \
                     a finite bound",
                    report.condition_number
                )));
            }
            report.aggregate.sqrt()
        };

        let errors: Vec<Result<f64>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let key = mix_seed(seed, t as u64, level as u64);
                let measurements = if noiseless {
                    graph
                        .edges
                        .iter()
                        .map(|e| {
                            let d = crate::deployment::pairwise_distance(
                                truth[e.a], truth[e.b],
                            );
                            crate::channel::received_power(e.k, d, graph.exponent)
                        })
                        .collect::<Result<Vec<f64>>>()?
                } else {
                    let mut rng = stream_rng(key, 0);
                    sample_measurements(&graph, &truth, &mut rng)?
                };
                let est = multi_start(
                    &graph,
                    &deployment.anchors,
                    &measurements,
                    bounds,
                    starts,
                    mix_seed(key, 1, 0),
                    solve,
                )?;
                let mse: f64 = est
                    .things
                    .iter()
                    .zip(thing_truth)
                    .map(|(a, b)| {
                        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
                    })
                    .sum::<f64>()
                    / thing_truth.len() as f64;
                Ok(mse)
            })
            .collect();

        let mut mses = Vec::with_capacity(trials);
        for e in errors {
            mses.push(e?);
        }
        let n = mses.len() as f64;
        let mean_mse = mses.iter().sum::<f64>() / n;
        let rmse = mean_mse.sqrt();
        let rmse_se = if mses.len() > 1 && rmse > 0.0 {
            let var =
                mses.iter().map(|v| (v - mean_mse) * (v - mean_mse)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt() / (2.0 * rmse)
        } else {
            0.0
        };
        rows.push(EfficiencyRow { sigma, rmse, sqrt_bound, rmse_se, trials });
    }
    Ok(rows)
}

pub const EFFICIENCY_HEADER: &str = "sigma,rmse,sqrt_crlb,rmse_se,trials";

/// Render efficiency rows as CSV (see [`EFFICIENCY_HEADER`]).
pub fn emit_efficiency_csv(rows: &[EfficiencyRow]) -> String {
    let mut out = String::new();
    out.push_str(EFFICIENCY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt9(r.sigma),
            fmt9(r.rmse),
            fmt9(r.sqrt_bound),
            fmt9(r.rmse_se),
            r.trials
        );
    }
    out
}
