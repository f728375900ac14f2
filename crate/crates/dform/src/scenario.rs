//! Scenario files, command entry points, and result emission.
//!
//! A scenario is a small JSON document naming the agent count, the removed
//! cycle edge, the control family, the initial condition (explicit or seeded),
//! and, for maneuvering runs, the virtual-trajectory input profiles. Commands
//! turn a parsed scenario into analysis summaries, trajectory/residual CSV
//! tables, and JSON summaries; all outputs are deterministic for a fixed
//! scenario and seed.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::analysis::{
    build_v0, chain_transforms, eigendecompose, predict_steady_state, propagate_mirrors, residuals,
    AnalysisError, Spectrum, DEFAULT_ZERO_TOL,
};
use crate::dynamics::{
    integrate, moving_frame, Configuration, Law, ManeuverInputs, PiecewiseConstant, SimError,
    SimulationResult, VirtualTrajectory,
};
use crate::graph::{spanning_tree, EdgeFamily, GraphError, InteractionGraph};
use crate::laplacian::{anchored_laplacian, laplacian, BlockMatrix};
use crate::symmetry::{default_base_angle, dihedral_group, GroupElement, SymmetryError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("family '{family}' requires an anchor_vertex")]
    AnchorRequired { family: Family },
    #[error("anchor_vertex {vertex} out of range for n = {n}")]
    AnchorOutOfRange { vertex: usize, n: usize },
    #[error("explicit p0 lists {actual} agents, scenario has n = {expected}")]
    WrongInitialLength { expected: usize, actual: usize },
    #[error("field '{field}' must be positive")]
    NonPositive { field: &'static str },
    #[error("profile '{which}' breakpoints must start at t = 0 and strictly increase")]
    BadProfile { which: &'static str },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl ScenarioError {
    /// Error class for the single-line CLI diagnostic.
    pub fn code_label(&self) -> &'static str {
        match self {
            ScenarioError::Sim(SimError::Divergence { .. }) => "divergence",
            ScenarioError::Analysis(_) | ScenarioError::Sim(_) => "numeric",
            _ => "parse",
        }
    }

    /// Process exit code: 2 parse/config, 3 numeric diagnostic, 4 divergence.
    pub fn exit_code(&self) -> i32 {
        match self.code_label() {
            "divergence" => 4,
            "numeric" => 3,
            _ => 2,
        }
    }
}

/// Which control law the scenario exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Rotational,
    Reflection,
    AnchoredReflection,
    Maneuver,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Family::Rotational => "rotational",
            Family::Reflection => "reflection",
            Family::AnchoredReflection => "anchored-reflection",
            Family::Maneuver => "maneuver",
        };
        f.write_str(s)
    }
}

/// Initial configuration: explicit positions or a seeded uniform draw from a
/// centered box.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialCondition {
    Explicit {
        explicit: Vec<[f64; 2]>,
    },
    Seeded {
        seed: u64,
        #[serde(rename = "box")]
        box_half_width: f64,
    },
}

/// Breakpoint lists for the maneuvering inputs, plus the initial virtual state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverProfileSpec {
    #[serde(default)]
    pub r0: [f64; 2],
    #[serde(default)]
    pub theta0: f64,
    #[serde(default = "one")]
    pub s0: f64,
    /// `[[t, vx, vy], …]`
    #[serde(default)]
    pub v: Vec<[f64; 3]>,
    /// `[[t, ω], …]`
    #[serde(default)]
    pub omega: Vec<[f64; 2]>,
    /// `[[t, α], …]`
    #[serde(default)]
    pub alpha: Vec<[f64; 2]>,
}

fn one() -> f64 {
    1.0
}

impl Default for ManeuverProfileSpec {
    fn default() -> Self {
        ManeuverProfileSpec {
            r0: [0.0, 0.0],
            theta0: 0.0,
            s0: 1.0,
            v: vec![],
            omega: vec![],
            alpha: vec![],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n: usize,
    pub removed_edge: [usize; 2],
    pub family: Family,
    #[serde(default)]
    pub base_angle: Option<f64>,
    #[serde(default)]
    pub anchor_vertex: Option<usize>,
    pub p0: InitialCondition,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub maneuver_profile: Option<ManeuverProfileSpec>,
}

/// Read and validate a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let scenario: Scenario = serde_json::from_str(&text).map_err(|source| ScenarioError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if matches!(self.family, Family::AnchoredReflection | Family::Maneuver) {
            let vertex = self.anchor_vertex.ok_or(ScenarioError::AnchorRequired {
                family: self.family,
            })?;
            if vertex >= self.n {
                return Err(ScenarioError::AnchorOutOfRange { vertex, n: self.n });
            }
        }
        match &self.p0 {
            InitialCondition::Explicit { explicit } => {
                if explicit.len() != self.n {
                    return Err(ScenarioError::WrongInitialLength {
                        expected: self.n,
                        actual: explicit.len(),
                    });
                }
            }
            InitialCondition::Seeded { box_half_width, .. } => {
                if *box_half_width <= 0.0 {
                    return Err(ScenarioError::NonPositive { field: "box" });
                }
            }
        }
        if self.horizon.is_some_and(|h| h <= 0.0) {
            return Err(ScenarioError::NonPositive { field: "horizon" });
        }
        if self.step.is_some_and(|s| s <= 0.0) {
            return Err(ScenarioError::NonPositive { field: "step" });
        }
        if let Some(profile) = &self.maneuver_profile {
            if profile.s0 <= 0.0 {
                return Err(ScenarioError::NonPositive { field: "s0" });
            }
        }
        Ok(())
    }

    fn edge_family(&self) -> EdgeFamily {
        match self.family {
            Family::Rotational => EdgeFamily::Rotational,
            _ => EdgeFamily::Reflectional,
        }
    }
}

/// A scenario resolved into concrete library objects.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub name: String,
    pub scenario: Scenario,
    pub base_angle: f64,
    pub graph: InteractionGraph,
    pub group: Vec<GroupElement>,
    pub p0: Configuration,
    pub virtual_trajectory: Option<VirtualTrajectory>,
}

/// Instantiate the graph, group, initial condition, and (for maneuvering) the
/// virtual trajectory described by a validated scenario.
pub fn build(name: &str, scenario: &Scenario) -> Result<BuiltScenario, ScenarioError> {
    scenario.validate()?;
    let n = scenario.n;
    let base_angle = scenario.base_angle.unwrap_or_else(|| default_base_angle(n));
    let removed = (scenario.removed_edge[0], scenario.removed_edge[1]);
    let mut graph = spanning_tree(n, removed)?.assign_edges(scenario.edge_family(), base_angle)?;
    if matches!(
        scenario.family,
        Family::AnchoredReflection | Family::Maneuver
    ) {
        graph = graph.with_anchor(scenario.anchor_vertex.expect("validated"))?;
    }
    let group = dihedral_group(n, base_angle)?;
    let p0 = initial_condition(scenario)?;
    let virtual_trajectory = if scenario.family == Family::Maneuver {
        let profile = scenario.maneuver_profile.clone().unwrap_or_default();
        Some(virtual_trajectory(&profile)?)
    } else {
        None
    };
    Ok(BuiltScenario {
        name: name.to_string(),
        scenario: scenario.clone(),
        base_angle,
        graph,
        group,
        p0,
        virtual_trajectory,
    })
}

fn initial_condition(scenario: &Scenario) -> Result<Configuration, ScenarioError> {
    match &scenario.p0 {
        InitialCondition::Explicit { explicit } => {
            let positions: Vec<Vector2<f64>> =
                explicit.iter().map(|&[x, y]| Vector2::new(x, y)).collect();
            Ok(crate::dynamics::stack(&positions))
        }
        InitialCondition::Seeded {
            seed,
            box_half_width,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let b = *box_half_width;
            Ok(Configuration::from_fn(2 * scenario.n, |_, _| {
                rng.random_range(-b..b)
            }))
        }
    }
}

fn virtual_trajectory(profile: &ManeuverProfileSpec) -> Result<VirtualTrajectory, ScenarioError> {
    let velocity = if profile.v.is_empty() {
        PiecewiseConstant::constant(Vector2::zeros())
    } else {
        PiecewiseConstant::new(
            profile
                .v
                .iter()
                .map(|&[t, vx, vy]| (t, Vector2::new(vx, vy)))
                .collect(),
        )
        .map_err(|_| ScenarioError::BadProfile { which: "v" })?
    };
    let scalar = |points: &[[f64; 2]], which: &'static str| {
        if points.is_empty() {
            Ok(PiecewiseConstant::constant(0.0))
        } else {
            PiecewiseConstant::new(points.iter().map(|&[t, x]| (t, x)).collect())
                .map_err(|_| ScenarioError::BadProfile { which })
        }
    };
    let inputs = ManeuverInputs {
        velocity,
        angular_rate: scalar(&profile.omega, "omega")?,
        scale_rate: scalar(&profile.alpha, "alpha")?,
    };
    VirtualTrajectory::new(
        Vector2::new(profile.r0[0], profile.r0[1]),
        profile.theta0,
        profile.s0,
        inputs,
    )
    .map_err(ScenarioError::Sim)
}

impl BuiltScenario {
    /// The Laplacian the family's static analysis runs on.
    pub fn static_laplacian(&self) -> Result<BlockMatrix, ScenarioError> {
        match self.scenario.family {
            Family::Rotational | Family::Reflection => Ok(laplacian(&self.graph)?),
            Family::AnchoredReflection | Family::Maneuver => Ok(anchored_laplacian(&self.graph)?),
        }
    }

    fn spectrum(&self) -> Result<Spectrum, ScenarioError> {
        Ok(eigendecompose(&self.static_laplacian()?, DEFAULT_ZERO_TOL)?)
    }

    fn chain_root(&self) -> usize {
        self.graph.anchor().map_or(0, |a| a.vertex)
    }
}

/// `analyze` output: spectral facts plus the propagated symmetry structure.
#[derive(Debug, Serialize)]
pub struct AnalyzeSummary {
    pub version: String,
    pub scenario: String,
    pub n: usize,
    pub family: Family,
    pub base_angle: f64,
    pub null_dim: usize,
    pub convergence_rate: f64,
    pub eigenvalues: Vec<f64>,
    /// Chained transforms from the anchor (or vertex 0), row-major 2×2 blocks.
    pub chained_transforms: Vec<[f64; 4]>,
    /// Propagated mirror angles in radians (anchored families only).
    pub mirror_angles: Option<Vec<f64>>,
    /// Stacked null direction V₀ (anchored families only).
    pub v0: Option<Vec<f64>>,
    pub v0_norm_squared: Option<f64>,
}

pub fn cmd_analyze(built: &BuiltScenario) -> Result<AnalyzeSummary, ScenarioError> {
    let spectrum = built.spectrum()?;
    let root = built.chain_root();
    let chains = chain_transforms(&built.graph, root)?;
    let chained_transforms = chains
        .transforms()
        .iter()
        .map(|s| [s[(0, 0)], s[(0, 1)], s[(1, 0)], s[(1, 1)]])
        .collect();

    let (mirror_angles, v0, v0_norm_squared) = match built.graph.anchor() {
        Some(anchor) => {
            let lines = propagate_mirrors(&built.graph, anchor.vertex, &anchor.mirror)?;
            let v0 = build_v0(&chains, anchor.mirror.direction())?;
            let norm_sq = v0.dot(&v0);
            (
                Some(lines.iter().map(|l| l.angle()).collect()),
                Some(v0.iter().copied().collect()),
                Some(norm_sq),
            )
        }
        None => (None, None, None),
    };

    Ok(AnalyzeSummary {
        version: VERSION.to_string(),
        scenario: built.name.clone(),
        n: built.scenario.n,
        family: built.scenario.family,
        base_angle: built.base_angle,
        null_dim: spectrum.null_dim(),
        convergence_rate: spectrum.convergence_rate()?,
        eigenvalues: spectrum.eigenvalues().to_vec(),
        chained_transforms,
        mirror_angles,
        v0,
        v0_norm_squared,
    })
}

/// `predict` output: the closed-form steady state, without simulating.
#[derive(Debug, Serialize)]
pub struct PredictSummary {
    pub version: String,
    pub scenario: String,
    pub n: usize,
    pub family: Family,
    /// "world" for the anchored flow; "moving" when the prediction lives in
    /// the maneuvering frame.
    pub frame: String,
    pub v0: Vec<f64>,
    pub steady_state: Vec<[f64; 2]>,
}

pub fn cmd_predict(built: &BuiltScenario) -> Result<PredictSummary, ScenarioError> {
    let anchor = built.graph.anchor().ok_or(GraphError::MissingAnchor)?;
    let chains = chain_transforms(&built.graph, anchor.vertex)?;
    let v0 = build_v0(&chains, anchor.mirror.direction())?;
    let (frame, reference) = match &built.virtual_trajectory {
        Some(virt) => (
            "moving".to_string(),
            moving_frame(&built.p0, &virt.state_at(0.0))?,
        ),
        None => ("world".to_string(), built.p0.clone()),
    };
    let limit = predict_steady_state(&reference, &v0)?;
    let steady_state = (0..built.scenario.n)
        .map(|i| [limit[2 * i], limit[2 * i + 1]])
        .collect();
    Ok(PredictSummary {
        version: VERSION.to_string(),
        scenario: built.name.clone(),
        n: built.scenario.n,
        family: built.scenario.family,
        frame,
        v0: v0.iter().copied().collect(),
        steady_state,
    })
}

/// CLI overrides for a simulation run.
#[derive(Debug, Default, Clone)]
pub struct SimulateOptions {
    pub out_dir: Option<PathBuf>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
}

/// `simulate` summary, also written as `summary.json` next to the tables.
#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub version: String,
    pub scenario: String,
    pub n: usize,
    pub family: Family,
    pub dt: f64,
    pub horizon: f64,
    pub terminal_time: f64,
    pub null_dim: usize,
    pub convergence_rate: f64,
    pub terminal_edge_residual: f64,
    pub terminal_anchor_residual: f64,
    pub terminal_full_group_residual: f64,
    /// `‖p(T) - (1/n) V₀V₀ᵀ p(0)‖` for anchored families.
    pub steady_state_gap: Option<f64>,
    /// Full-group residual of ζ(T) for maneuver runs.
    pub moving_frame_full_group_residual: Option<f64>,
}

/// Resolve the output directory: `--out` wins, then `$DF_OUT_DIR/<name>`,
/// then `out/<name>`.
pub fn resolve_out_dir(explicit: Option<&Path>, name: &str) -> PathBuf {
    match explicit {
        Some(dir) => dir.to_path_buf(),
        None => std::env::var_os("DF_OUT_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"))
            .join(name),
    }
}

/// Run the scenario's closed loop and emit `trajectory.csv`, `residuals.csv`,
/// and `summary.json` into the output directory.
pub fn cmd_simulate(
    built: &BuiltScenario,
    options: &SimulateOptions,
) -> Result<(SimulateSummary, PathBuf), ScenarioError> {
    let q = built.static_laplacian()?;
    let spectrum = built.spectrum()?;
    let rate = spectrum.convergence_rate()?;
    let dt = options
        .dt
        .or(built.scenario.step)
        .unwrap_or(0.5 / spectrum.max_eigenvalue());
    let horizon = options
        .horizon
        .or(built.scenario.horizon)
        .unwrap_or(30.0 / rate);

    let law = match &built.virtual_trajectory {
        Some(virt) => Law::Maneuver(virt),
        None => Law::Static(&q),
    };
    let result = integrate(law, &built.graph, &built.group, &built.p0, horizon, dt)?;

    let steady_state_gap = match built.scenario.family {
        Family::AnchoredReflection => {
            let anchor = built.graph.anchor().expect("anchored family");
            let chains = chain_transforms(&built.graph, anchor.vertex)?;
            let v0 = build_v0(&chains, anchor.mirror.direction())?;
            let predicted = predict_steady_state(&built.p0, &v0)?;
            Some((result.terminal_state() - predicted).norm())
        }
        _ => None,
    };

    let moving_frame_full_group_residual = match (&built.virtual_trajectory, &result.virtual_series)
    {
        (Some(_), Some(samples)) => {
            let zeta = moving_frame(result.terminal_state(), samples.last().expect("samples"))?;
            Some(residuals(&zeta, &built.graph, &built.group)?.full_group_residual)
        }
        _ => None,
    };

    let terminal = result.terminal_residuals();
    let summary = SimulateSummary {
        version: VERSION.to_string(),
        scenario: built.name.clone(),
        n: built.scenario.n,
        family: built.scenario.family,
        dt,
        horizon,
        terminal_time: result.terminal_time(),
        null_dim: spectrum.null_dim(),
        convergence_rate: rate,
        terminal_edge_residual: terminal.edge_residual,
        terminal_anchor_residual: terminal.anchor_residual,
        terminal_full_group_residual: terminal.full_group_residual,
        steady_state_gap,
        moving_frame_full_group_residual,
    };

    let dir = resolve_out_dir(options.out_dir.as_deref(), &built.name);
    fs::create_dir_all(&dir).map_err(|source| ScenarioError::Output {
        path: dir.clone(),
        source,
    })?;
    write_trajectory(&dir.join("trajectory.csv"), &result, built.scenario.n)?;
    write_residuals(&dir.join("residuals.csv"), &result)?;
    let summary_path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("serializable summary");
    fs::write(&summary_path, json + "\n").map_err(|source| ScenarioError::Output {
        path: summary_path,
        source,
    })?;

    Ok((summary, dir))
}

/// 17-significant-digit float formatting, enough to round-trip f64 exactly.
fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_trajectory(path: &Path, result: &SimulationResult, n: usize) -> Result<(), ScenarioError> {
    let mut out = String::new();
    out.push_str(&format!("# dform {VERSION}\n"));
    out.push('t');
    for i in 1..=n {
        out.push_str(&format!(",p{i}x,p{i}y"));
    }
    out.push('\n');
    for (t, state) in result.times.iter().zip(&result.states) {
        out.push_str(&fmt_full(*t));
        for value in state.iter() {
            out.push(',');
            out.push_str(&fmt_full(*value));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

fn write_residuals(path: &Path, result: &SimulationResult) -> Result<(), ScenarioError> {
    let mut out = String::new();
    out.push_str(&format!("# dform {VERSION}\n"));
    out.push_str("t,edge_residual,anchor_residual,full_group_residual\n");
    for (t, report) in result.times.iter().zip(&result.residual_series) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_full(*t),
            fmt_full(report.edge_residual),
            fmt_full(report.anchor_residual),
            fmt_full(report.full_group_residual)
        ));
    }
    write_file(path, &out)
}

fn write_file(path: &Path, contents: &str) -> Result<(), ScenarioError> {
    let mut file = fs::File::create(path).map_err(|source| ScenarioError::Output {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(contents.as_bytes())
        .map_err(|source| ScenarioError::Output {
            path: path.to_path_buf(),
            source,
        })
}
