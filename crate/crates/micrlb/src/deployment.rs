//! Deployment geometry and the measurement graph.
//!
//! A scenario is a rectangular fracture volume (width × length × thickness,
//! centered at a configured depth; the z axis points down, so larger z is
//! deeper) holding uniformly scattered things, plus anchors on or near the
//! vertical well line through the box center. The measurement graph connects
//! things to anchors within `comm_range_anchor` and, in cooperative mode,
//! things to each other within `comm_range_peer`; each edge carries its
//! resolved coupling constant and power-domain noise σ.
//!
//! Note on well-line anchors: they are exactly collinear, and a rigid
//! rotation of all things about that line preserves every link distance.
//! The standard information matrix of such a scenario is therefore
//! structurally singular (anchor-only graphs lose one direction per node).
//! Use explicit, slightly off-axis anchors when a finite bound is the point
//! of the exercise; `crlb_standard` will report the singularity either way.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    coupling_constant, ChannelParams, CoilSpec, NoiseSpec, PathLossExponent, MIN_LINK_DISTANCE,
};
use crate::error::{MiError, Result};

/// Hard lower limit on pairwise node separation, meters.
pub const SEPARATION_FLOOR: f64 = 1e-3;

/// Rejection attempts per thing before generation gives up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// How anchors are placed.
///
/// `WellLine` puts every anchor on one vertical line. That is the obvious
/// reading of anchors mounted along the casing, but it leaves each thing a
/// free rotation about that line (every link distance is preserved), so
/// the standard information matrix of any well-line scenario is exactly
/// singular. `Helix` models anchors clamped *around* the casing instead:
/// the same depth ladder, pushed out to `radius` meters and rotated by the
/// golden angle per anchor, which breaks the collinearity for three or
/// more anchors.
#[derive(Debug, Clone, PartialEq)]
pub enum AnchorPlacement {
    /// Evenly spaced on the vertical well line through the box center:
    /// the deepest anchor sits `standoff` meters above the surface-side
    /// face of the box, earlier anchors `spacing` meters apart above it.
    WellLine { standoff: f64, spacing: f64 },
    /// The well-line depth ladder displaced `radius` meters from the line,
    /// successive anchors rotated by the golden angle.
    Helix { standoff: f64, spacing: f64, radius: f64 },
    /// Verbatim positions.
    Explicit(Vec<[f64; 3]>),
}

impl Default for AnchorPlacement {
    fn default() -> Self {
        AnchorPlacement::WellLine { standoff: 1.0, spacing: 1.0 }
    }
}

/// Anchor-only or cooperative (peer links included) measurement topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkMode {
    AnchorOnly,
    Cooperative,
}

impl Default for LinkMode {
    fn default() -> Self {
        LinkMode::AnchorOnly
    }
}

/// Scenario geometry and topology parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Box extent along x, meters.
    pub fracture_width: f64,
    /// Box extent along y, meters.
    pub fracture_length: f64,
    /// Box extent along z, meters.
    pub fracture_thickness: f64,
    /// Depth of the box center, meters (z positive downward).
    pub depth: f64,
    pub anchor_count: usize,
    pub anchor_placement: AnchorPlacement,
    pub thing_count: usize,
    /// Maximum thing-anchor link distance, meters.
    pub comm_range_anchor: f64,
    /// Maximum thing-thing link distance, meters.
    pub comm_range_peer: f64,
    pub link_mode: LinkMode,
    /// Minimum pairwise separation enforced by generation; at least
    /// [`SEPARATION_FLOOR`].
    pub min_separation: f64,
    /// Inert metadata: reservoir temperature, K. Carried, never used.
    pub temperature: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            fracture_width: 8.0,
            fracture_length: 8.0,
            fracture_thickness: 2.0,
            depth: 1800.0,
            anchor_count: 3,
            anchor_placement: AnchorPlacement::default(),
            thing_count: 60,
            comm_range_anchor: f64::INFINITY,
            comm_range_peer: f64::INFINITY,
            link_mode: LinkMode::default(),
            min_separation: SEPARATION_FLOOR,
            temperature: 418.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("fracture_width", self.fracture_width),
            ("fracture_length", self.fracture_length),
            ("fracture_thickness", self.fracture_thickness),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MiError::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !self.depth.is_finite() {
            return Err(MiError::InvalidParameter("depth must be finite".into()));
        }
        for (name, v) in [
            ("comm_range_anchor", self.comm_range_anchor),
            ("comm_range_peer", self.comm_range_peer),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(MiError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.min_separation < SEPARATION_FLOOR || !self.min_separation.is_finite() {
            return Err(MiError::InvalidParameter(format!(
                "min_separation must be finite and at least {SEPARATION_FLOOR}, got {}",
                self.min_separation
            )));
        }
        match self.anchor_placement {
            AnchorPlacement::WellLine { standoff, spacing } => {
                validate_ladder(standoff, spacing)?;
            }
            AnchorPlacement::Helix { standoff, spacing, radius } => {
                validate_ladder(standoff, spacing)?;
                if !(radius.is_finite() && radius > 0.0) {
                    return Err(MiError::InvalidParameter(format!(
                        "helix radius must be positive, got {radius}"
                    )));
                }
            }
            AnchorPlacement::Explicit(_) => {}
        }
        if let AnchorPlacement::Explicit(ref pts) = self.anchor_placement {
            if pts.len() != self.anchor_count {
                return Err(MiError::InvalidParameter(format!(
                    "{} explicit anchors given for anchor_count {}",
                    pts.len(),
                    self.anchor_count
                )));
            }
            if pts.iter().flatten().any(|c| !c.is_finite()) {
                return Err(MiError::InvalidParameter("anchor coordinates must be finite".into()));
            }
        }
        Ok(())
    }

    /// Axis-aligned bounds of the fracture box: `(low corner, high corner)`.
    pub fn box_bounds(&self) -> ([f64; 3], [f64; 3]) {
        let lo = [
            -self.fracture_width / 2.0,
            -self.fracture_length / 2.0,
            self.depth - self.fracture_thickness / 2.0,
        ];
        let hi = [
            self.fracture_width / 2.0,
            self.fracture_length / 2.0,
            self.depth + self.fracture_thickness / 2.0,
        ];
        (lo, hi)
    }

    /// Resolve anchor positions for this configuration.
    pub fn anchor_positions(&self) -> Result<Vec<[f64; 3]>> {
        match &self.anchor_placement {
            AnchorPlacement::Explicit(pts) => Ok(pts.clone()),
            AnchorPlacement::WellLine { standoff, spacing } => {
                Ok(self.ladder_depths(*standoff, *spacing).map(|z| [0.0, 0.0, z]).collect())
            }
            AnchorPlacement::Helix { standoff, spacing, radius } => {
                // golden-angle rotation: no two anchors share a bearing and
                // no three are collinear
                const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;
                let r = *radius;
                Ok(self
                    .ladder_depths(*standoff, *spacing)
                    .enumerate()
                    .map(|(m, z)| {
                        let theta = m as f64 * GOLDEN_ANGLE;
                        [r * theta.cos(), r * theta.sin(), z]
                    })
                    .collect())
            }
        }
    }

    /// Anchor depths, shallowest first: the deepest anchor sits `standoff`
    /// meters above the surface-side box face, the rest `spacing` apart.
    fn ladder_depths(&self, standoff: f64, spacing: f64) -> impl Iterator<Item = f64> + '_ {
        let (lo, _) = self.box_bounds();
        let surface_side_z = lo[2];
        let count = self.anchor_count;
        (0..count).map(move |m| {
            let above = (count - 1 - m) as f64;
            surface_side_z - standoff - above * spacing
        })
    }
}

fn validate_ladder(standoff: f64, spacing: f64) -> Result<()> {
    if !standoff.is_finite() || standoff < 0.0 {
        return Err(MiError::InvalidParameter("anchor standoff must be nonnegative".into()));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(MiError::InvalidParameter("anchor spacing must be positive".into()));
    }
    Ok(())
}

/// Euclidean distance between two points.
pub fn pairwise_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// A realized geometry: anchor and thing positions plus the seed that
/// produced the things.
///
/// Node ids are global: anchors are `0..anchor_count`, things follow.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub anchors: Vec<[f64; 3]>,
    pub things: Vec<[f64; 3]>,
    pub seed: u64,
}

impl Deployment {
    pub fn node_count(&self) -> usize {
        self.anchors.len() + self.things.len()
    }

    /// All node positions indexed by node id, anchors first.
    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.anchors.iter().chain(self.things.iter()).copied().collect()
    }
}

/// Generate a deployment: anchors per the placement rule, things uniform
/// i.i.d. in the box, rejection-resampled until every pairwise distance
/// (including anchor-thing and anchor-anchor) respects the separation
/// floor. Fails with [`MiError::CrowdedBox`] when a thing cannot be placed
/// within [`MAX_PLACEMENT_ATTEMPTS`] tries.
pub fn generate_deployment(config: &ScenarioConfig, seed: u64) -> Result<Deployment> {
    config.validate()?;
    let anchors = config.anchor_positions()?;
    for i in 0..anchors.len() {
        for j in (i + 1)..anchors.len() {
            let d = pairwise_distance(anchors[i], anchors[j]);
            if d < config.min_separation {
                return Err(MiError::InvalidParameter(format!(
                    "anchors {i} and {j} are {d:.3e} m apart, below the separation floor"
                )));
            }
        }
    }

    let (lo, hi) = config.box_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |lo: f64, hi: f64| lo + rng.random::<f64>() * (hi - lo);

    let mut placed: Vec<[f64; 3]> = anchors.clone();
    let mut things = Vec::with_capacity(config.thing_count);
    for n in 0..config.thing_count {
        let mut attempts = 0;
        loop {
            let cand = [
                uniform(lo[0], hi[0]),
                uniform(lo[1], hi[1]),
                uniform(lo[2], hi[2]),
            ];
            if placed.iter().all(|p| pairwise_distance(*p, cand) >= config.min_separation) {
                placed.push(cand);
                things.push(cand);
                break;
            }
            attempts += 1;
            if attempts >= MAX_PLACEMENT_ATTEMPTS {
                return Err(MiError::CrowdedBox { node: n, attempts });
            }
        }
    }

    Ok(Deployment { anchors, things, seed })
}

/// Thing-anchor or thing-thing link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    AnchorLink,
    PeerLink,
}

impl LinkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::AnchorLink => "anchor_link",
            LinkKind::PeerLink => "peer_link",
        }
    }
}

/// One measured link. Node ids are global (`a < b`); the coupling constant
/// and power-domain σ are resolved at build time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub kind: LinkKind,
    pub k: f64,
    pub sigma: f64,
}

/// The measurement topology plus per-link channel constants.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementGraph {
    pub anchor_count: usize,
    pub thing_count: usize,
    pub exponent: PathLossExponent,
    pub edges: Vec<Edge>,
}

impl MeasurementGraph {
    pub fn node_count(&self) -> usize {
        self.anchor_count + self.thing_count
    }

    pub fn is_anchor(&self, node: usize) -> bool {
        node < self.anchor_count
    }

    /// Index of a thing node among the unknowns (0-based), if it is one.
    pub fn thing_index(&self, node: usize) -> Option<usize> {
        (node >= self.anchor_count && node < self.node_count()).then(|| node - self.anchor_count)
    }

    /// Things that appear in no edge. Such nodes cannot be localized and
    /// make the information matrix singular.
    pub fn isolated_things(&self) -> Vec<usize> {
        let mut seen = vec![false; self.thing_count];
        for e in &self.edges {
            for node in [e.a, e.b] {
                if let Some(t) = self.thing_index(node) {
                    seen[t] = true;
                }
            }
        }
        seen.iter()
            .enumerate()
            .filter_map(|(t, s)| (!s).then_some(t + self.anchor_count))
            .collect()
    }
}

/// Coil and channel inputs used to resolve per-edge constants.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub tx: CoilSpec,
    pub rx: CoilSpec,
    pub params: ChannelParams,
    pub noise: NoiseSpec,
    /// Per-link misalignment angle overrides, keyed by unordered node pair.
    pub alpha_overrides: Vec<(usize, usize, f64)>,
}

impl Default for LinkBudget {
    fn default() -> Self {
        LinkBudget {
            tx: CoilSpec::default(),
            rx: CoilSpec::default(),
            params: ChannelParams::default(),
            noise: NoiseSpec::Ranging { sigma: 0.05 },
            alpha_overrides: Vec::new(),
        }
    }
}

impl LinkBudget {
    fn k_for(&self, a: usize, b: usize) -> Result<f64> {
        let alpha = self
            .alpha_overrides
            .iter()
            .find(|(x, y, _)| (*x == a && *y == b) || (*x == b && *y == a))
            .map(|(_, _, alpha)| *alpha);
        match alpha {
            None => coupling_constant(&self.tx, &self.rx, &self.params),
            Some(alpha) => {
                let mut p = self.params;
                p.misalignment_angle = alpha;
                coupling_constant(&self.tx, &self.rx, &p)
            }
        }
    }
}

/// Build the measurement graph for a deployment: every thing-anchor pair
/// within `comm_range_anchor`, plus (cooperative mode) every thing-thing
/// pair within `comm_range_peer`. Edge order is deterministic: anchor links
/// first (thing-major, then anchor id), then peer links in lexicographic
/// id order.
pub fn build_measurement_graph(
    deployment: &Deployment,
    config: &ScenarioConfig,
    budget: &LinkBudget,
) -> Result<MeasurementGraph> {
    config.validate()?;
    budget.noise.validate()?;
    let m = deployment.anchors.len();
    let n = deployment.things.len();
    let exponent = budget.params.exponent;
    let positions = deployment.positions();
    let mut edges = Vec::new();

    let push = |a: usize, b: usize, kind: LinkKind, edges: &mut Vec<Edge>| -> Result<()> {
        let d = pairwise_distance(positions[a], positions[b]);
        if d < MIN_LINK_DISTANCE {
            return Err(MiError::CoincidentNodes { a, b, distance: d });
        }
        let k = budget.k_for(a, b)?;
        let sigma = budget.noise.power_sigma(k, d, exponent)?;
        edges.push(Edge { a, b, kind, k, sigma });
        Ok(())
    };

    for t in 0..n {
        let thing = m + t;
        for anchor in 0..m {
            let d = pairwise_distance(positions[thing], positions[anchor]);
            if d <= config.comm_range_anchor {
                push(anchor, thing, LinkKind::AnchorLink, &mut edges)?;
            }
        }
    }
    if config.link_mode == LinkMode::Cooperative {
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (m + i, m + j);
                let d = pairwise_distance(positions[a], positions[b]);
                if d <= config.comm_range_peer {
                    push(a, b, LinkKind::PeerLink, &mut edges)?;
                }
            }
        }
    }

    Ok(MeasurementGraph { anchor_count: m, thing_count: n, exponent, edges })
}

/// Format a number with 9 significant digits, scientific notation.
pub(crate) fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Serialize a deployment and its graph to the line-oriented interchange
/// format:
///
/// ```text
/// # anchors M
/// # things N
/// # seed S
/// # exponent E
/// <id> <x> <y> <z>        (one row per node, ids 0..M+N, anchors first)
/// edge <a> <b> <kind> <k> <sigma>
/// ```
///
/// Coordinates and edge constants carry 9 significant digits; parsing the
/// output and re-serializing reproduces it byte for byte.
pub fn write_scene(deployment: &Deployment, graph: &MeasurementGraph) -> String {
    let mut out = String::new();
    writeln!(out, "# anchors {}", deployment.anchors.len()).unwrap();
    writeln!(out, "# things {}", deployment.things.len()).unwrap();
    writeln!(out, "# seed {}", deployment.seed).unwrap();
    writeln!(out, "# exponent {}", graph.exponent.as_u32()).unwrap();
    for (id, p) in deployment.positions().iter().enumerate() {
        writeln!(out, "{id} {} {} {}", fmt9(p[0]), fmt9(p[1]), fmt9(p[2])).unwrap();
    }
    for e in &graph.edges {
        writeln!(
            out,
            "edge {} {} {} {} {}",
            e.a,
            e.b,
            e.kind.as_str(),
            fmt9(e.k),
            fmt9(e.sigma)
        )
        .unwrap();
    }
    out
}

/// Parse the interchange format produced by [`write_scene`].
///
/// The `# seed` and `# exponent` headers are optional (defaulting to 0 and
/// 6); `# anchors` and `# things` must appear before any node row. Unknown
/// headers, malformed rows, out-of-order node ids and out-of-range edge
/// endpoints are hard errors carrying the line number.
pub fn parse_scene(text: &str) -> Result<(Deployment, MeasurementGraph)> {
    let err = |line: usize, message: String| MiError::Parse { line, message };
    let mut anchors_n: Option<usize> = None;
    let mut things_n: Option<usize> = None;
    let mut seed: u64 = 0;
    let mut exponent = PathLossExponent::Six;
    let mut nodes: Vec<[f64; 3]> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut it = rest.split_whitespace();
            let key = it.next().ok_or_else(|| err(lineno, "empty header".into()))?;
            let val = it.next().ok_or_else(|| err(lineno, format!("header '{key}' needs a value")))?;
            if it.next().is_some() {
                return Err(err(lineno, format!("trailing tokens after header '{key}'")));
            }
            match key {
                "anchors" => {
                    anchors_n = Some(val.parse().map_err(|_| err(lineno, format!("bad anchor count '{val}'")))?)
                }
                "things" => {
                    things_n = Some(val.parse().map_err(|_| err(lineno, format!("bad thing count '{val}'")))?)
                }
                "seed" => seed = val.parse().map_err(|_| err(lineno, format!("bad seed '{val}'")))?,
                "exponent" => {
                    let e: u32 = val.parse().map_err(|_| err(lineno, format!("bad exponent '{val}'")))?;
                    exponent = PathLossExponent::from_u32(e)
                        .map_err(|_| err(lineno, format!("exponent must be 6 or 3, got {e}")))?;
                }
                other => return Err(err(lineno, format!("unknown header '{other}'"))),
            }
            continue;
        }

        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks[0] == "edge" {
            if toks.len() != 6 {
                return Err(err(lineno, format!("edge rows need 5 fields, got {}", toks.len() - 1)));
            }
            let a: usize = toks[1].parse().map_err(|_| err(lineno, format!("bad node id '{}'", toks[1])))?;
            let b: usize = toks[2].parse().map_err(|_| err(lineno, format!("bad node id '{}'", toks[2])))?;
            let kind = match toks[3] {
                "anchor_link" => LinkKind::AnchorLink,
                "peer_link" => LinkKind::PeerLink,
                other => return Err(err(lineno, format!("unknown link kind '{other}'"))),
            };
            let k: f64 = toks[4].parse().map_err(|_| err(lineno, format!("bad coupling constant '{}'", toks[4])))?;
            let sigma: f64 = toks[5].parse().map_err(|_| err(lineno, format!("bad sigma '{}'", toks[5])))?;
            edges.push(Edge { a, b, kind, k, sigma });
        } else {
            if toks.len() != 4 {
                return Err(err(lineno, format!("node rows need 4 fields, got {}", toks.len())));
            }
            let id: usize = toks[0].parse().map_err(|_| err(lineno, format!("bad node id '{}'", toks[0])))?;
            if id != nodes.len() {
                return Err(err(lineno, format!("node id {id} out of order, expected {}", nodes.len())));
            }
            let mut p = [0.0; 3];
            for (slot, tok) in p.iter_mut().zip(&toks[1..]) {
                *slot = tok.parse().map_err(|_| err(lineno, format!("bad coordinate '{tok}'")))?;
            }
            nodes.push(p);
        }
    }

    let m = anchors_n.ok_or_else(|| err(0, "missing '# anchors' header".into()))?;
    let n = things_n.ok_or_else(|| err(0, "missing '# things' header".into()))?;
    if nodes.len() != m + n {
        return Err(err(0, format!("expected {} node rows, found {}", m + n, nodes.len())));
    }
    for e in &edges {
        if e.a >= m + n || e.b >= m + n {
            return Err(err(0, format!("edge ({}, {}) references a missing node", e.a, e.b)));
        }
    }
    let deployment = Deployment {
        anchors: nodes[..m].to_vec(),
        things: nodes[m..].to_vec(),
        seed,
    };
    let graph = MeasurementGraph { anchor_count: m, thing_count: n, exponent, edges };
    Ok((deployment, graph))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            thing_count: 2,
            anchor_count: 3,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic_and_contained() {
        let cfg = ScenarioConfig::default();
        let a = generate_deployment(&cfg, 7).unwrap();
        let b = generate_deployment(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_deployment(&cfg, 8).unwrap();
        assert_ne!(a.things, c.things);

        let (lo, hi) = cfg.box_bounds();
        assert_eq!(a.things.len(), 60);
        for t in &a.things {
            for axis in 0..3 {
                assert!(t[axis] >= lo[axis] && t[axis] <= hi[axis]);
            }
        }
        // every pair respects the separation floor
        let pos = a.positions();
        for i in 0..pos.len() {
            for j in (i + 1)..pos.len() {
                assert!(pairwise_distance(pos[i], pos[j]) >= cfg.min_separation);
            }
        }
    }

    #[test]
    fn well_line_anchors_sit_on_the_well() {
        let cfg = ScenarioConfig::default();
        let dep = generate_deployment(&cfg, 1).unwrap();
        assert_eq!(dep.anchors.len(), 3);
        let surface_side = cfg.depth - cfg.fracture_thickness / 2.0;
        for (i, a) in dep.anchors.iter().enumerate() {
            assert_eq!(a[0], 0.0);
            assert_eq!(a[1], 0.0);
            assert!(a[2] < surface_side, "anchors stay on the cased well above the box");
            if i > 0 {
                assert_relative_eq!(a[2] - dep.anchors[i - 1][2], 1.0);
            }
        }
        // deepest anchor exactly one standoff above the surface-side face
        assert_relative_eq!(dep.anchors[2][2], surface_side - 1.0);
    }

    #[test]
    fn helix_anchors_circle_the_well_at_the_ladder_depths() {
        let base = ScenarioConfig::default();
        let cfg = ScenarioConfig {
            anchor_placement: AnchorPlacement::Helix {
                standoff: 1.0,
                spacing: 1.0,
                radius: 0.15,
            },
            ..base.clone()
        };
        let helix = cfg.anchor_positions().unwrap();
        let line = base.anchor_positions().unwrap();
        assert_eq!(helix.len(), 3);
        for (h, l) in helix.iter().zip(&line) {
            assert_eq!(h[2], l[2], "depth ladder matches the well-line placement");
            assert_relative_eq!((h[0] * h[0] + h[1] * h[1]).sqrt(), 0.15, max_relative = 1e-12);
        }
        // non-collinear: the cross product of the two edge vectors is nonzero
        let u = [helix[1][0] - helix[0][0], helix[1][1] - helix[0][1], helix[1][2] - helix[0][2]];
        let v = [helix[2][0] - helix[0][0], helix[2][1] - helix[0][1], helix[2][2] - helix[0][2]];
        let cross = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let norm = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        assert!(norm > 1e-3, "helix anchors must not be collinear, cross norm {norm}");
        assert!(ScenarioConfig {
            anchor_placement: AnchorPlacement::Helix { standoff: 1.0, spacing: 1.0, radius: 0.0 },
            ..base
        }
        .validate()
        .is_err());
    }

    #[test]
    fn uniform_thing_coordinates_have_the_right_mean() {
        let cfg = ScenarioConfig {
            thing_count: 20_000,
            min_separation: SEPARATION_FLOOR,
            ..ScenarioConfig::default()
        };
        let dep = generate_deployment(&cfg, 3).unwrap();
        let n = dep.things.len() as f64;
        let mean_x: f64 = dep.things.iter().map(|t| t[0]).sum::<f64>() / n;
        let mean_z: f64 = dep.things.iter().map(|t| t[2]).sum::<f64>() / n;
        // se of the mean is width/sqrt(12 n) ≈ 0.016; 0.08 is five sigma
        assert!(mean_x.abs() < 0.08, "mean x {mean_x}");
        assert!((mean_z - cfg.depth).abs() < 0.08 * 2.0 / 8.0 + 0.02, "mean z {mean_z}");
    }

    #[test]
    fn crowded_box_fails_after_bounded_attempts() {
        let cfg = ScenarioConfig {
            fracture_width: 5e-4,
            fracture_length: 5e-4,
            fracture_thickness: 5e-4,
            depth: 0.0,
            anchor_count: 0,
            anchor_placement: AnchorPlacement::Explicit(vec![]),
            thing_count: 2,
            ..ScenarioConfig::default()
        };
        // the box diagonal (~0.87 mm) is below the separation floor, so a
        // second node can never be placed
        match generate_deployment(&cfg, 1) {
            Err(MiError::CrowdedBox { attempts, .. }) => {
                assert_eq!(attempts, MAX_PLACEMENT_ATTEMPTS)
            }
            other => panic!("expected CrowdedBox, got {other:?}"),
        }
    }

    #[test]
    fn explicit_anchors_are_verbatim() {
        let pts = vec![[0.1, 0.2, 1798.0], [-0.1, 0.0, 1797.0]];
        let cfg = ScenarioConfig {
            anchor_count: 2,
            anchor_placement: AnchorPlacement::Explicit(pts.clone()),
            thing_count: 1,
            ..ScenarioConfig::default()
        };
        let dep = generate_deployment(&cfg, 5).unwrap();
        assert_eq!(dep.anchors, pts);
    }

    #[test]
    fn graph_is_complete_bipartite_within_range() {
        let cfg = small_config();
        let dep = generate_deployment(&cfg, 11).unwrap();
        let g = build_measurement_graph(&dep, &cfg, &LinkBudget::default()).unwrap();
        assert_eq!(g.edges.len(), 6, "2 things × 3 anchors");
        assert!(g.edges.iter().all(|e| e.kind == LinkKind::AnchorLink));
        assert!(g.isolated_things().is_empty());

        let coop = ScenarioConfig { link_mode: LinkMode::Cooperative, ..cfg.clone() };
        let g2 = build_measurement_graph(&dep, &coop, &LinkBudget::default()).unwrap();
        assert_eq!(g2.edges.len(), 7, "one peer pair joins");
        assert_eq!(g2.edges.iter().filter(|e| e.kind == LinkKind::PeerLink).count(), 1);
    }

    #[test]
    fn tiny_comm_range_gives_an_empty_graph() {
        let cfg = ScenarioConfig { comm_range_anchor: 1e-3, ..small_config() };
        let dep = generate_deployment(&cfg, 11).unwrap();
        let g = build_measurement_graph(&dep, &cfg, &LinkBudget::default()).unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(g.isolated_things().len(), 2);
    }

    #[test]
    fn edge_constants_match_the_channel() {
        let cfg = small_config();
        let dep = generate_deployment(&cfg, 11).unwrap();
        let budget = LinkBudget::default();
        let g = build_measurement_graph(&dep, &cfg, &budget).unwrap();
        let k = coupling_constant(&budget.tx, &budget.rx, &budget.params).unwrap();
        let pos = dep.positions();
        for e in &g.edges {
            assert_eq!(e.k, k);
            let d = pairwise_distance(pos[e.a], pos[e.b]);
            let expect = budget.noise.power_sigma(k, d, g.exponent).unwrap();
            assert_eq!(e.sigma, expect);
        }
    }

    #[test]
    fn alpha_override_rescales_one_link() {
        let cfg = small_config();
        let dep = generate_deployment(&cfg, 11).unwrap();
        let mut budget = LinkBudget::default();
        budget.alpha_overrides.push((3, 0, std::f64::consts::FRAC_PI_6));
        let g = build_measurement_graph(&dep, &cfg, &budget).unwrap();
        let k_full = coupling_constant(&budget.tx, &budget.rx, &budget.params).unwrap();
        for e in &g.edges {
            if (e.a, e.b) == (0, 3) {
                // sin²(π/6) = 1/4
                assert_relative_eq!(e.k, k_full / 4.0, max_relative = 1e-12);
            } else {
                assert_eq!(e.k, k_full);
            }
        }
    }

    #[test]
    fn pairwise_distance_basics() {
        assert_eq!(pairwise_distance([0.0; 3], [0.0; 3]), 0.0);
        assert_eq!(pairwise_distance([1.0, 2.0, 2.0], [0.0; 3]), 3.0);
        let mut rng = crate::rng::stream_rng(2, 0);
        for _ in 0..10 {
            let a = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            let b = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            let direct = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            assert_eq!(pairwise_distance(a, b), direct);
            assert_eq!(pairwise_distance(a, b), pairwise_distance(b, a));
        }
    }

    #[test]
    fn scene_round_trip_is_byte_stable() {
        let cfg = ScenarioConfig { link_mode: LinkMode::Cooperative, ..small_config() };
        let dep = generate_deployment(&cfg, 99).unwrap();
        let g = build_measurement_graph(&dep, &cfg, &LinkBudget::default()).unwrap();
        let text = write_scene(&dep, &g);
        let (dep2, g2) = parse_scene(&text).unwrap();
        assert_eq!(dep2.seed, 99);
        assert_eq!(g2.edges.len(), g.edges.len());
        assert_eq!(g2.exponent, g.exponent);
        let text2 = write_scene(&dep2, &g2);
        assert_eq!(text, text2);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "# anchors 1\n# things 0\n0 zero 0 0\n";
        match parse_scene(bad) {
            Err(MiError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_scene("# bogus 3\n").is_err());
        assert!(parse_scene("# anchors 1\n").is_err(), "missing things header");
        let dangling = "# anchors 0\n# things 1\n0 0.0 0.0 0.0\nedge 0 5 anchor_link 1.0 0.1\n";
        assert!(parse_scene(dangling).is_err(), "edge references a missing node");
    }
}
