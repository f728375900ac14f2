//! Formation control on cycle graphs through dihedral point-group constraints.
//!
//! `dform` builds matrix-weighted Laplacians whose null spaces are exactly the
//! rotationally or reflectionally symmetric configurations of `n` planar
//! agents on a spanning tree of the cycle graph, simulates the resulting
//! gradient flows, and verifies the analytic structure numerically: null-space
//! dimensions, mirror-line propagation, closed-form steady states, exponential
//! convergence rates, and invariance of the maneuvering law in its moving
//! frame.
//!
//! The narrative guide lives in `book/`; its code listings compile and run as
//! doc-tests of this crate, so the book cannot drift from the library.
//!
//! A quick taste — anchoring one agent of a hexagon to its mirror line
//! collapses the free-reflection null space from a plane to a ray:
//!
//! ```
//! use dform::{spanning_tree, EdgeFamily, default_base_angle};
//! use dform::{anchored_laplacian, laplacian, eigendecompose, DEFAULT_ZERO_TOL};
//!
//! let base = default_base_angle(6);
//! let free = spanning_tree(6, (5, 0))?
//!     .assign_edges(EdgeFamily::Reflectional, base)?;
//! let anchored = free.clone().with_anchor(0)?;
//!
//! let dim = |q| Ok::<_, dform::AnalysisError>(eigendecompose(&q, DEFAULT_ZERO_TOL)?.null_dim());
//! assert_eq!(dim(laplacian(&free)?)?, 2);
//! assert_eq!(dim(anchored_laplacian(&anchored)?)?, 1);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod analysis;
pub mod dynamics;
pub mod graph;
pub mod laplacian;
pub mod scenario;
pub mod symmetry;

pub use analysis::{
    build_v0, chain_transforms, eigendecompose, fit_log_slope, predict_steady_state,
    propagate_mirrors, residuals, AnalysisError, ChainedTransforms, ResidualReport, Spectrum,
    DEFAULT_ZERO_TOL,
};
pub use dynamics::{
    agent, canonical_configuration, control_maneuver, control_static, integrate, moving_frame,
    potential_value, stack, world_frame, Configuration, Law, ManeuverInputs, PiecewiseConstant,
    SimError, SimulationResult, VirtualSample, VirtualTrajectory,
};
pub use graph::{spanning_tree, Anchor, EdgeFamily, GraphError, InteractionGraph};
pub use laplacian::{
    anchored_laplacian, augment_anchor, incidence, laplacian, rotated_laplacian, BlockMatrix,
};
pub use scenario::{
    build, cmd_analyze, cmd_predict, cmd_simulate, parse_scenario, BuiltScenario, Family, Scenario,
    ScenarioError, SimulateOptions,
};
pub use symmetry::{
    default_base_angle, dihedral_group, householder, rotation_matrix, ElementKind, GroupElement,
    MirrorLine, ReflectionClass, SymmetryError,
};

// The book's code listings double as doc-tests; each chapter is compiled and
// run by `cargo test --doc`.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/symmetry.md")]
    pub mod symmetry {}
    #[doc = include_str!("../../../book/src/laplacians.md")]
    pub mod laplacians {}
    #[doc = include_str!("../../../book/src/steady-states.md")]
    pub mod steady_states {}
    #[doc = include_str!("../../../book/src/maneuvering.md")]
    pub mod maneuvering {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub mod scenarios {}
}
