//! Line-oriented run configuration files.
//!
//! The format is one `section.key = value` assignment per line. Blank
//! lines and `#` comments are skipped. Every key has a built-in default,
//! so an empty file is a valid configuration; unknown sections, unknown
//! keys, duplicate keys, and malformed values are hard errors that name
//! the offending line.
//!
//! Sections: `scenario` (geometry and topology), `channel` (shared link
//! constants), `coils` (transmitter and receiver coils), `noise`
//! (measurement noise entry mode and level), `sweep` (parameter sweep
//! driver), `estimator` (solver settings and the efficiency study),
//! `crlb` (inversion options), `output` (file destinations).

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use micrlb::{
    AnchorPlacement, CrlbOptions, FimMode, LinkMode, NoiseSpec, PathLossExponent, Scenario,
    SolveOptions, SweepParameter,
};

/// A rejected configuration file: the 1-based line and what went wrong.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

/// Everything a run needs, assembled from a configuration file on top of
/// the built-in defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub sweep_parameter: SweepParameter,
    pub sweep_values: Vec<f64>,
    pub sweep_trials: usize,
    pub sweep_seed: u64,
    pub fim_mode: FimMode,
    pub allow_out_of_range: bool,
    pub crlb: CrlbOptions,
    pub solve: SolveOptions,
    /// Noise levels for the efficiency study, in the entry mode's units.
    pub efficiency_sigmas: Vec<f64>,
    pub efficiency_trials: usize,
    pub efficiency_starts: usize,
    pub efficiency_seed: u64,
    pub out_csv: Option<PathBuf>,
    pub out_plot: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::default(),
            sweep_parameter: SweepParameter::NoiseSigma,
            sweep_values: vec![0.05, 0.2125, 0.375, 0.5375, 0.7],
            sweep_trials: 500,
            sweep_seed: 0,
            fim_mode: FimMode::Standard,
            allow_out_of_range: false,
            crlb: CrlbOptions::default(),
            solve: SolveOptions::default(),
            efficiency_sigmas: vec![0.05, 0.1, 0.2],
            efficiency_trials: 1000,
            efficiency_starts: 8,
            efficiency_seed: 0,
            out_csv: None,
            out_plot: None,
        }
    }
}

/// The defaults, spelled out with every recognized key. `config
/// --defaults` prints exactly this text, and parsing it reproduces
/// [`RunConfig::default`].
pub fn default_text() -> &'static str {
    "\
# Run configuration. One `section.key = value` per line; `#` comments.
# Every key below shows its built-in default.

# Fracture box geometry (meters; z is depth, positive downward) and
# network topology.
scenario.fracture_width = 8.0
scenario.fracture_length = 8.0
scenario.fracture_thickness = 2.0
scenario.depth = 1800.0
scenario.anchor_count = 3
# well_line: anchors on the vertical borehole line above the box.
# helix: the same depth ladder pushed helix_radius off the line, which
# breaks the collinearity that makes well_line geometries singular.
# Explicit positions instead: scenario.anchors = x y z; x y z; ...
scenario.anchor_placement = well_line
scenario.anchor_standoff = 1.0
scenario.anchor_spacing = 1.0
scenario.helix_radius = 0.15
scenario.thing_count = 60
scenario.comm_range_anchor = inf
scenario.comm_range_peer = inf
# anchor_only or cooperative (adds thing-to-thing links).
scenario.link_mode = anchor_only
scenario.min_separation = 0.001
# Inert metadata, kelvin.
scenario.temperature = 418.0

channel.frequency = 7e6
channel.permeability = 1.2566370614359173e-6
channel.transmit_power = 0.1
channel.unit_length_resistance = 0.01
channel.misalignment_angle = 1.5707963267948966
# 6 for the near-field dipole channel, 3 for the relayed variant.
channel.path_loss_exponent = 6

coils.tx_turns = 20
coils.tx_radius = 0.02
coils.rx_turns = 20
coils.rx_radius = 0.02

# ranging: sigma is a distance error in meters, mapped per link into the
# power domain at the true distance. power: sigma is watts, applied as-is.
noise.mode = ranging
noise.sigma = 0.05

# Swept knob: noise_sigma, frequency, anchor_count, coil_turns,
# coil_radius or transmit_power.
sweep.parameter = noise_sigma
sweep.values = 0.05 0.2125 0.375 0.5375 0.7
sweep.trials = 500
sweep.seed = 0
# standard or paper.
sweep.fim_mode = standard
sweep.allow_out_of_range = false

estimator.max_iterations = 500
estimator.gradient_tolerance = 1e-10
estimator.step_tolerance = 1e-12
estimator.initial_damping = 0.001
estimator.starts = 8
estimator.trials = 1000
estimator.seed = 0
# Noise levels the efficiency study visits.
estimator.sigmas = 0.05 0.1 0.2

crlb.cond_threshold = 1e12
crlb.pseudo_inverse = false

# File destinations; unset by default (sweep CSV then goes to stdout).
# output.csv = sweep.csv
# output.plot = sweep.svg
"
}

/// Placement pieces collected during parsing and assembled at the end, so
/// key order in the file does not matter.
struct PlacementDraft {
    kind: Option<String>,
    kind_line: usize,
    standoff: f64,
    spacing: f64,
    radius: f64,
    explicit: Option<Vec<[f64; 3]>>,
    explicit_line: usize,
}

impl Default for PlacementDraft {
    fn default() -> Self {
        PlacementDraft {
            kind: None,
            kind_line: 0,
            standoff: 1.0,
            spacing: 1.0,
            radius: 0.15,
            explicit: None,
            explicit_line: 0,
        }
    }
}

/// Noise pieces, same treatment.
#[derive(Default)]
struct NoiseDraft {
    mode: Option<String>,
    sigma: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut placement = PlacementDraft::default();
        let mut noise = NoiseDraft::default();
        let mut anchor_count_set = false;
        let mut seen: HashSet<String> = HashSet::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }

            let err = |message: String| ConfigError { line: line_no, message };

            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `section.key = value`, got '{line}'")))?;
            if value.is_empty() {
                return Err(err(format!("key '{key}' has no value")));
            }
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key '{key}'")));
            }

            let (section, name) = key
                .split_once('.')
                .ok_or_else(|| err(format!("key '{key}' is missing its section prefix")))?;

            let sc = &mut cfg.scenario.config;
            let budget = &mut cfg.scenario.budget;
            match (section, name) {
                ("scenario", "fracture_width") => sc.fracture_width = f64_value(key, value, line_no)?,
                ("scenario", "fracture_length") => sc.fracture_length = f64_value(key, value, line_no)?,
                ("scenario", "fracture_thickness") => {
                    sc.fracture_thickness = f64_value(key, value, line_no)?
                }
                ("scenario", "depth") => sc.depth = f64_value(key, value, line_no)?,
                ("scenario", "anchor_count") => {
                    sc.anchor_count = usize_value(key, value, line_no)?;
                    anchor_count_set = true;
                }
                ("scenario", "anchor_placement") => {
                    placement.kind = Some(value.to_string());
                    placement.kind_line = line_no;
                }
                ("scenario", "anchor_standoff") => placement.standoff = f64_value(key, value, line_no)?,
                ("scenario", "anchor_spacing") => placement.spacing = f64_value(key, value, line_no)?,
                ("scenario", "helix_radius") => placement.radius = f64_value(key, value, line_no)?,
                ("scenario", "anchors") => {
                    placement.explicit = Some(anchors_value(value, line_no)?);
                    placement.explicit_line = line_no;
                }
                ("scenario", "thing_count") => sc.thing_count = usize_value(key, value, line_no)?,
                ("scenario", "comm_range_anchor") => {
                    sc.comm_range_anchor = f64_value(key, value, line_no)?
                }
                ("scenario", "comm_range_peer") => sc.comm_range_peer = f64_value(key, value, line_no)?,
                ("scenario", "link_mode") => {
                    sc.link_mode = match value {
                        "anchor_only" => LinkMode::AnchorOnly,
                        "cooperative" => LinkMode::Cooperative,
                        other => {
                            return Err(err(format!(
                                "link_mode must be anchor_only or cooperative, got '{other}'"
                            )))
                        }
                    }
                }
                ("scenario", "min_separation") => sc.min_separation = f64_value(key, value, line_no)?,
                ("scenario", "temperature") => sc.temperature = f64_value(key, value, line_no)?,

                ("channel", "frequency") => budget.params.frequency = f64_value(key, value, line_no)?,
                ("channel", "permeability") => {
                    budget.params.permeability = f64_value(key, value, line_no)?
                }
                ("channel", "transmit_power") => {
                    budget.params.transmit_power = f64_value(key, value, line_no)?
                }
                ("channel", "unit_length_resistance") => {
                    budget.params.unit_length_resistance = f64_value(key, value, line_no)?
                }
                ("channel", "misalignment_angle") => {
                    budget.params.misalignment_angle = f64_value(key, value, line_no)?
                }
                ("channel", "path_loss_exponent") => {
                    budget.params.exponent = match value {
                        "6" => PathLossExponent::Six,
                        "3" => PathLossExponent::Three,
                        other => {
                            return Err(err(format!(
                                "path_loss_exponent must be 6 or 3, got '{other}'"
                            )))
                        }
                    }
                }

                ("coils", "tx_turns") => budget.tx.turns = u32_value(key, value, line_no)?,
                ("coils", "tx_radius") => budget.tx.radius = f64_value(key, value, line_no)?,
                ("coils", "rx_turns") => budget.rx.turns = u32_value(key, value, line_no)?,
                ("coils", "rx_radius") => budget.rx.radius = f64_value(key, value, line_no)?,

                ("noise", "mode") => {
                    if value != "ranging" && value != "power" {
                        return Err(err(format!(
                            "noise.mode must be ranging or power, got '{value}'"
                        )));
                    }
                    noise.mode = Some(value.to_string());
                }
                ("noise", "sigma") => noise.sigma = Some(f64_value(key, value, line_no)?),

                ("sweep", "parameter") => {
                    cfg.sweep_parameter = SweepParameter::from_str(value)
                        .map_err(|e| err(e.to_string()))?
                }
                ("sweep", "values") => cfg.sweep_values = list_value(key, value, line_no)?,
                ("sweep", "trials") => cfg.sweep_trials = usize_value(key, value, line_no)?,
                ("sweep", "seed") => cfg.sweep_seed = u64_value(key, value, line_no)?,
                ("sweep", "fim_mode") => {
                    cfg.fim_mode = FimMode::from_str(&value.replace('-', "_"))
                        .map_err(|e| err(e.to_string()))?
                }
                ("sweep", "allow_out_of_range") => {
                    cfg.allow_out_of_range = bool_value(key, value, line_no)?
                }

                ("estimator", "max_iterations") => {
                    cfg.solve.max_iterations = usize_value(key, value, line_no)?
                }
                ("estimator", "gradient_tolerance") => {
                    cfg.solve.gradient_tolerance = f64_value(key, value, line_no)?
                }
                ("estimator", "step_tolerance") => {
                    cfg.solve.step_tolerance = f64_value(key, value, line_no)?
                }
                ("estimator", "initial_damping") => {
                    cfg.solve.initial_damping = f64_value(key, value, line_no)?
                }
                ("estimator", "starts") => cfg.efficiency_starts = usize_value(key, value, line_no)?,
                ("estimator", "trials") => cfg.efficiency_trials = usize_value(key, value, line_no)?,
                ("estimator", "seed") => cfg.efficiency_seed = u64_value(key, value, line_no)?,
                ("estimator", "sigmas") => cfg.efficiency_sigmas = list_value(key, value, line_no)?,

                ("crlb", "cond_threshold") => {
                    cfg.crlb.cond_threshold = f64_value(key, value, line_no)?
                }
                ("crlb", "pseudo_inverse") => {
                    cfg.crlb.pseudo_inverse = bool_value(key, value, line_no)?
                }

                ("output", "csv") => cfg.out_csv = Some(PathBuf::from(value)),
                ("output", "plot") => cfg.out_plot = Some(PathBuf::from(value)),

                ("scenario" | "channel" | "coils" | "noise" | "sweep" | "estimator" | "crlb"
                | "output", _) => {
                    return Err(err(format!("unknown key '{name}' in section '{section}'")));
                }
                _ => {
                    return Err(err(format!("unknown section '{section}' (key '{key}')")));
                }
            }
        }

        // Assemble the placement from its pieces now that order no longer
        // matters.
        if let Some(list) = placement.explicit {
            if placement.kind.is_some() {
                return Err(ConfigError {
                    line: placement.explicit_line,
                    message: "scenario.anchors and scenario.anchor_placement are mutually \
                              exclusive"
                        .into(),
                });
            }
            if anchor_count_set && cfg.scenario.config.anchor_count != list.len() {
                return Err(ConfigError {
                    line: placement.explicit_line,
                    message: format!(
                        "scenario.anchors lists {} positions but anchor_count = {}",
                        list.len(),
                        cfg.scenario.config.anchor_count
                    ),
                });
            }
            cfg.scenario.config.anchor_count = list.len();
            cfg.scenario.config.anchor_placement = AnchorPlacement::Explicit(list);
        } else {
            let standoff = placement.standoff;
            let spacing = placement.spacing;
            cfg.scenario.config.anchor_placement = match placement.kind.as_deref() {
                None | Some("well_line") => AnchorPlacement::WellLine { standoff, spacing },
                Some("helix") => {
                    AnchorPlacement::Helix { standoff, spacing, radius: placement.radius }
                }
                Some(other) => {
                    return Err(ConfigError {
                        line: placement.kind_line,
                        message: format!(
                            "anchor_placement must be well_line or helix, got '{other}'"
                        ),
                    });
                }
            };
        }

        if noise.mode.is_some() || noise.sigma.is_some() {
            let sigma = noise.sigma.unwrap_or(0.05);
            cfg.scenario.budget.noise = match noise.mode.as_deref() {
                Some("power") => NoiseSpec::Power { sigma },
                _ => NoiseSpec::Ranging { sigma },
            };
        }

        cfg.scenario.config.validate().map_err(|e| ConfigError {
            line: 0,
            message: format!("scenario rejected: {e}"),
        })?;
        Ok(cfg)
    }
}

fn f64_value(key: &str, value: &str, line: usize) -> Result<f64, ConfigError> {
    let v: f64 = value
        .parse()
        .map_err(|_| bad_value(key, value, "a number", line))?;
    if v.is_nan() {
        return Err(bad_value(key, value, "a number", line));
    }
    Ok(v)
}

fn usize_value(key: &str, value: &str, line: usize) -> Result<usize, ConfigError> {
    value.parse().map_err(|_| bad_value(key, value, "a nonnegative integer", line))
}

fn u64_value(key: &str, value: &str, line: usize) -> Result<u64, ConfigError> {
    value.parse().map_err(|_| bad_value(key, value, "a nonnegative integer", line))
}

fn u32_value(key: &str, value: &str, line: usize) -> Result<u32, ConfigError> {
    value.parse().map_err(|_| bad_value(key, value, "a nonnegative integer", line))
}

fn bool_value(key: &str, value: &str, line: usize) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad_value(key, value, "true or false", line)),
    }
}

/// Numbers separated by whitespace, commas, or both.
fn list_value(key: &str, value: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    let items: Vec<f64> = value
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| f64_value(key, s, line))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(bad_value(key, value, "at least one number", line));
    }
    Ok(items)
}

/// Semicolon-separated `x y z` triples.
fn anchors_value(value: &str, line: usize) -> Result<Vec<[f64; 3]>, ConfigError> {
    let mut out = Vec::new();
    for part in value.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let coords: Vec<f64> = part
            .split_whitespace()
            .map(|s| f64_value("scenario.anchors", s, line))
            .collect::<Result<_, _>>()?;
        if coords.len() != 3 {
            return Err(ConfigError {
                line,
                message: format!(
                    "anchor position '{part}' has {} coordinates, expected 3",
                    coords.len()
                ),
            });
        }
        out.push([coords[0], coords[1], coords[2]]);
    }
    if out.is_empty() {
        return Err(ConfigError { line, message: "scenario.anchors lists no positions".into() });
    }
    Ok(out)
}

fn bad_value(key: &str, value: &str, expected: &str, line: usize) -> ConfigError {
    ConfigError { line, message: format!("key '{key}' expects {expected}, got '{value}'") }
}
