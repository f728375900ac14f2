//! Closed-loop simulation of the symmetry-forcing control laws: gradient flows
//! for the static variants, and the maneuvering law that tracks a virtual
//! translation/rotation/scale reference while holding the formation.

use nalgebra::{DVector, Matrix2, Vector2};
use thiserror::Error;

use crate::analysis::{jacobi_eigen, residuals, AnalysisError, ResidualReport};
use crate::graph::{GraphError, InteractionGraph};
use crate::laplacian::{rotated_laplacian, BlockMatrix};
use crate::symmetry::{rotation_matrix, GroupElement};

/// Stacked 2n-vector of agent positions.
pub type Configuration = DVector<f64>;

/// Cap on stored samples per simulation, independent of the step size.
pub const MAX_SAMPLES: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("scale must stay positive, got s = {s}")]
    InvalidScale { s: f64 },
    #[error("step dt = {dt} is not positive or exceeds the horizon")]
    InvalidStep { dt: f64 },
    #[error("unstable step: dt = {dt} must stay below 2/λ_max = {limit}")]
    UnstableStep { dt: f64, limit: f64 },
    #[error("state diverged (non-finite) at t = {t}")]
    Divergence { t: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("breakpoint times must start at 0 and strictly increase")]
    BadProfile,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Position of agent `i` inside a stacked configuration.
pub fn agent(p: &Configuration, i: usize) -> Vector2<f64> {
    Vector2::new(p[2 * i], p[2 * i + 1])
}

/// Stack per-agent positions into a configuration vector.
pub fn stack(positions: &[Vector2<f64>]) -> Configuration {
    let mut p = DVector::zeros(2 * positions.len());
    for (i, pos) in positions.iter().enumerate() {
        p[2 * i] = pos.x;
        p[2 * i + 1] = pos.y;
    }
    p
}

/// The canonical regular n-gon embedding on the unit circle.
pub fn canonical_configuration(n: usize, base_angle: f64) -> Configuration {
    DVector::from_fn(2 * n, |r, _| {
        let angle = base_angle + 2.0 * std::f64::consts::PI * (r / 2) as f64 / n as f64;
        if r % 2 == 0 {
            angle.cos()
        } else {
            angle.sin()
        }
    })
}

/// Symmetry-forcing potential: `½ Σ ‖p_i - τ(γ_ji) p_j‖²` over the tree edges,
/// plus `¼ ‖(I - τ(γ_ℓ)) p_ℓ‖²` when the graph is anchored.
///
/// Computed edge by edge, independently of the assembled Laplacian.
pub fn potential_value(p: &Configuration, g: &InteractionGraph) -> Result<f64, SimError> {
    let n = g.n();
    if p.len() != 2 * n {
        return Err(SimError::DimensionMismatch {
            expected: 2 * n,
            actual: p.len(),
        });
    }
    let elems = g.elems()?;
    let mut value = 0.0;
    for (&(i, j), elem) in g.edges().iter().zip(elems) {
        value += 0.5 * (agent(p, i) - elem.rep().transpose() * agent(p, j)).norm_squared();
    }
    if let Some(anchor) = g.anchor() {
        let pl = agent(p, anchor.vertex);
        value += 0.25 * ((Matrix2::identity() - anchor.element.rep()) * pl).norm_squared();
    }
    Ok(value)
}

/// Gradient-flow control `u = -Q p` for any of the static Laplacian variants.
pub fn control_static(p: &Configuration, q: &BlockMatrix) -> Result<DVector<f64>, SimError> {
    if p.len() != q.as_matrix().ncols() {
        return Err(SimError::DimensionMismatch {
            expected: q.as_matrix().ncols(),
            actual: p.len(),
        });
    }
    Ok(-(q.as_matrix() * p))
}

/// A piecewise-constant input profile: `value_at(t)` holds the value of the
/// latest breakpoint at or before `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant<T: Copy> {
    points: Vec<(f64, T)>,
}

impl<T: Copy> PiecewiseConstant<T> {
    /// Breakpoints must start at `t = 0` and strictly increase.
    pub fn new(points: Vec<(f64, T)>) -> Result<Self, SimError> {
        if points.is_empty() || points[0].0 != 0.0 {
            return Err(SimError::BadProfile);
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(SimError::BadProfile);
        }
        Ok(PiecewiseConstant { points })
    }

    pub fn constant(value: T) -> Self {
        PiecewiseConstant {
            points: vec![(0.0, value)],
        }
    }

    pub fn value_at(&self, t: f64) -> T {
        let idx = self.points.partition_point(|&(bt, _)| bt <= t);
        self.points[idx.saturating_sub(1)].1
    }

    /// Breakpoint times falling strictly inside `(t0, t1)`.
    fn interior_breaks(&self, t0: f64, t1: f64) -> impl Iterator<Item = f64> + '_ {
        self.points
            .iter()
            .map(|&(bt, _)| bt)
            .filter(move |&bt| bt > t0 && bt < t1)
    }
}

/// Sorted, deduplicated breakpoint times of all three profiles inside `(t0, t1)`.
fn interior_breakpoints(inputs: &ManeuverInputs, t0: f64, t1: f64) -> Vec<f64> {
    let mut cuts: Vec<f64> = inputs
        .velocity
        .interior_breaks(t0, t1)
        .chain(inputs.angular_rate.interior_breaks(t0, t1))
        .chain(inputs.scale_rate.interior_breaks(t0, t1))
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    cuts
}

/// Input profiles driving the virtual trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverInputs {
    /// Translational velocity `v(t)`.
    pub velocity: PiecewiseConstant<Vector2<f64>>,
    /// Angular velocity `ω(t)`.
    pub angular_rate: PiecewiseConstant<f64>,
    /// Scaling rate `α(t)`; the scale evolves as `ṡ = α s`.
    pub scale_rate: PiecewiseConstant<f64>,
}

impl ManeuverInputs {
    pub fn zero() -> Self {
        ManeuverInputs {
            velocity: PiecewiseConstant::constant(Vector2::zeros()),
            angular_rate: PiecewiseConstant::constant(0.0),
            scale_rate: PiecewiseConstant::constant(0.0),
        }
    }
}

/// Maneuvering reference state `(r, θ, s)` at time `t`, together with the
/// input profiles that drive it.
#[derive(Debug, Clone)]
pub struct VirtualTrajectory {
    pub t: f64,
    pub r: Vector2<f64>,
    pub theta: f64,
    pub s: f64,
    pub inputs: ManeuverInputs,
}

/// A snapshot of the virtual state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualSample {
    pub r: Vector2<f64>,
    pub theta: f64,
    pub s: f64,
}

impl VirtualTrajectory {
    pub fn new(
        r: Vector2<f64>,
        theta: f64,
        s: f64,
        inputs: ManeuverInputs,
    ) -> Result<Self, SimError> {
        if s <= 0.0 {
            return Err(SimError::InvalidScale { s });
        }
        Ok(VirtualTrajectory {
            t: 0.0,
            r,
            theta,
            s,
            inputs,
        })
    }

    /// Advance by `dt`, exactly: `r += v dt`, `θ += ω dt`, `s *= e^{α dt}`
    /// on every constant-input stretch, splitting at interior breakpoints.
    pub fn step(&self, dt: f64) -> VirtualTrajectory {
        let sample = self.state_at(self.t + dt);
        VirtualTrajectory {
            t: self.t + dt,
            r: sample.r,
            theta: sample.theta,
            s: sample.s,
            inputs: self.inputs.clone(),
        }
    }

    /// Exact state at absolute time `t ≥ self.t`.
    pub fn state_at(&self, t: f64) -> VirtualSample {
        let mut cuts = interior_breakpoints(&self.inputs, self.t, t);
        cuts.push(t);

        let mut r = self.r;
        let mut theta = self.theta;
        let mut s = self.s;
        let mut prev = self.t;
        for cut in cuts {
            let dt = cut - prev;
            if dt > 0.0 {
                r += self.inputs.velocity.value_at(prev) * dt;
                theta += self.inputs.angular_rate.value_at(prev) * dt;
                s *= (self.inputs.scale_rate.value_at(prev) * dt).exp();
            }
            prev = cut;
        }
        VirtualSample { r, theta, s }
    }

    pub fn inputs_at(&self, t: f64) -> (Vector2<f64>, f64, f64) {
        (
            self.inputs.velocity.value_at(t),
            self.inputs.angular_rate.value_at(t),
            self.inputs.scale_rate.value_at(t),
        )
    }
}

/// Maneuvering control law: the rotated-Laplacian gradient term on the shifted
/// state `c = p - 𝟙 ⊗ r`, a feed-forward `𝟙 ⊗ v`, and the rotation/scaling
/// correction `(I ⊗ Ω + α I) c`.
pub fn control_maneuver(
    p: &Configuration,
    virt: &VirtualTrajectory,
    g: &InteractionGraph,
    t: f64,
) -> Result<DVector<f64>, SimError> {
    let (v, omega, alpha) = virt.inputs_at(t);
    control_maneuver_at(p, g, &virt.state_at(t), v, omega, alpha)
}

/// [`control_maneuver`] with the virtual state and input values supplied
/// explicitly, so integration can hold the inputs constant across a sub-step
/// whose endpoint touches a breakpoint.
fn control_maneuver_at(
    p: &Configuration,
    g: &InteractionGraph,
    state: &VirtualSample,
    v: Vector2<f64>,
    omega: f64,
    alpha: f64,
) -> Result<DVector<f64>, SimError> {
    let n = g.n();
    if p.len() != 2 * n {
        return Err(SimError::DimensionMismatch {
            expected: 2 * n,
            actual: p.len(),
        });
    }
    if state.s <= 0.0 {
        return Err(SimError::InvalidScale { s: state.s });
    }
    let q_theta = rotated_laplacian(g, state.theta)?;

    let mut c = p.clone();
    for i in 0..n {
        c[2 * i] -= state.r.x;
        c[2 * i + 1] -= state.r.y;
    }
    let mut u = -(q_theta.as_matrix() * &c);
    let omega_mat = Matrix2::new(0.0, -omega, omega, 0.0);
    for i in 0..n {
        let ci = Vector2::new(c[2 * i], c[2 * i + 1]);
        let extra = v + omega_mat * ci + alpha * ci;
        u[2 * i] += extra.x;
        u[2 * i + 1] += extra.y;
    }
    Ok(u)
}

/// Potential whose gradient is the Laplacian term of the maneuvering law at a
/// frozen time: the rotated edge and anchor penalties evaluated on `c = p - 𝟙⊗r`.
pub fn maneuver_potential(
    p: &Configuration,
    virt: &VirtualTrajectory,
    g: &InteractionGraph,
    t: f64,
) -> Result<f64, SimError> {
    let state = virt.state_at(t);
    let rot = rotation_matrix(state.theta);
    let elems = g.elems()?;
    let c = |i: usize| agent(p, i) - state.r;
    let mut value = 0.0;
    for (&(i, j), elem) in g.edges().iter().zip(elems) {
        let tau = rot * elem.rep().transpose() * rot.transpose();
        value += 0.5 * (c(i) - tau * c(j)).norm_squared();
    }
    if let Some(anchor) = g.anchor() {
        let n_hat = rot * anchor.mirror.normal();
        let pinned = n_hat.dot(&c(anchor.vertex));
        value += pinned * pinned;
    }
    Ok(value)
}

/// Express `p` in the frame moving along the virtual trajectory:
/// `ζ_i = (1/s) R(θ)ᵀ (p_i - r)`.
pub fn moving_frame(p: &Configuration, sample: &VirtualSample) -> Result<Configuration, SimError> {
    if sample.s <= 0.0 {
        return Err(SimError::InvalidScale { s: sample.s });
    }
    let rot_t = rotation_matrix(sample.theta).transpose();
    let n = p.len() / 2;
    let mut zeta = DVector::zeros(2 * n);
    for i in 0..n {
        let z = rot_t * (agent(p, i) - sample.r) / sample.s;
        zeta[2 * i] = z.x;
        zeta[2 * i + 1] = z.y;
    }
    Ok(zeta)
}

/// Inverse of [`moving_frame`]: `p_i = s R(θ) ζ_i + r`.
pub fn world_frame(
    zeta: &Configuration,
    sample: &VirtualSample,
) -> Result<Configuration, SimError> {
    if sample.s <= 0.0 {
        return Err(SimError::InvalidScale { s: sample.s });
    }
    let rot = rotation_matrix(sample.theta);
    let n = zeta.len() / 2;
    let mut p = DVector::zeros(2 * n);
    for i in 0..n {
        let w = sample.s * rot * agent(zeta, i) + sample.r;
        p[2 * i] = w.x;
        p[2 * i + 1] = w.y;
    }
    Ok(p)
}

/// Which closed loop to integrate.
#[derive(Debug, Clone)]
pub enum Law<'a> {
    /// `ṗ = -Q p` for a fixed Laplacian variant.
    Static(&'a BlockMatrix),
    /// The maneuvering law along a virtual trajectory starting at `t = 0`.
    Maneuver(&'a VirtualTrajectory),
}

/// Time series produced by [`integrate`]; rows are aligned across fields.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    pub states: Vec<Configuration>,
    pub residual_series: Vec<ResidualReport>,
    /// Virtual reference state per sample (maneuver runs only).
    pub virtual_series: Option<Vec<VirtualSample>>,
}

impl SimulationResult {
    pub fn terminal_time(&self) -> f64 {
        *self.times.last().expect("non-empty simulation")
    }

    pub fn terminal_state(&self) -> &Configuration {
        self.states.last().expect("non-empty simulation")
    }

    pub fn terminal_residuals(&self) -> &ResidualReport {
        self.residual_series.last().expect("non-empty simulation")
    }
}

/// Classical fixed-step 4th-order integration of a control law over `[0, horizon]`.
///
/// Static laws must satisfy the stability margin `dt < 2/λ_max`; the sample
/// storage is decimated to at most [`MAX_SAMPLES`] rows, always keeping the
/// first and final states. Residuals are evaluated at every stored sample
/// against `g` and `full_group`.
pub fn integrate(
    law: Law,
    g: &InteractionGraph,
    full_group: &[GroupElement],
    p0: &Configuration,
    horizon: f64,
    dt: f64,
) -> Result<SimulationResult, SimError> {
    let n = g.n();
    if p0.len() != 2 * n {
        return Err(SimError::DimensionMismatch {
            expected: 2 * n,
            actual: p0.len(),
        });
    }
    if dt.is_nan() || dt <= 0.0 || horizon < dt {
        return Err(SimError::InvalidStep { dt });
    }
    if let Law::Static(q) = &law {
        let (eigenvalues, _) = jacobi_eigen(q.as_matrix().clone())?;
        let lambda_max = eigenvalues.last().copied().unwrap_or(0.0);
        if lambda_max > 0.0 {
            let limit = 2.0 / lambda_max;
            if dt >= limit {
                return Err(SimError::UnstableStep { dt, limit });
            }
        }
    }

    let steps = (horizon / dt).ceil() as usize;
    let stride = steps.div_ceil(MAX_SAMPLES - 1).max(1);

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut residual_series = Vec::new();
    let mut virtual_series = match &law {
        Law::Maneuver(_) => Some(Vec::new()),
        Law::Static(_) => None,
    };

    let mut store = |t: f64, p: &Configuration| -> Result<(), SimError> {
        times.push(t);
        states.push(p.clone());
        residual_series.push(residuals(p, g, full_group)?);
        if let (Some(series), Law::Maneuver(virt)) = (&mut virtual_series, &law) {
            series.push(virt.state_at(t));
        }
        Ok(())
    };

    let mut p = p0.clone();
    store(0.0, &p)?;
    for k in 0..steps {
        let t0 = k as f64 * dt;
        let t1 = (k + 1) as f64 * dt;
        match &law {
            Law::Static(q) => {
                rk4_step(&mut p, t0, t1 - t0, |_, x| control_static(x, q))?;
            }
            Law::Maneuver(virt) => {
                // Split the step at profile breakpoints: inputs are constant
                // on each sub-interval, so every RK4 sub-step sees a smooth
                // right-hand side and keeps its fourth-order accuracy.
                let mut cuts = interior_breakpoints(&virt.inputs, t0, t1);
                cuts.push(t1);
                let mut a = t0;
                for b in cuts {
                    let (v, omega, alpha) = virt.inputs_at(a);
                    rk4_step(&mut p, a, b - a, |ts, x| {
                        control_maneuver_at(x, g, &virt.state_at(ts), v, omega, alpha)
                    })?;
                    a = b;
                }
            }
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(SimError::Divergence { t: t1 });
        }
        if (k + 1) % stride == 0 || k + 1 == steps {
            store(t1, &p)?;
        }
    }

    Ok(SimulationResult {
        times,
        states,
        residual_series,
        virtual_series,
    })
}

fn rk4_step<F>(p: &mut Configuration, t: f64, h: f64, mut f: F) -> Result<(), SimError>
where
    F: FnMut(f64, &Configuration) -> Result<DVector<f64>, SimError>,
{
    if h <= 0.0 {
        return Ok(());
    }
    let k1 = f(t, p)?;
    let k2 = f(t + 0.5 * h, &(&*p + 0.5 * h * &k1))?;
    let k3 = f(t + 0.5 * h, &(&*p + 0.5 * h * &k2))?;
    let k4 = f(t + h, &(&*p + h * &k3))?;
    *p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{build_v0, chain_transforms, eigendecompose, DEFAULT_ZERO_TOL};
    use crate::graph::{spanning_tree, EdgeFamily};
    use crate::laplacian::{anchored_laplacian, laplacian};
    use crate::symmetry::{default_base_angle, dihedral_group};

    fn anchored_hexagon() -> InteractionGraph {
        spanning_tree(6, (5, 0))
            .unwrap()
            .assign_edges(EdgeFamily::Reflectional, default_base_angle(6))
            .unwrap()
            .with_anchor(0)
            .unwrap()
    }

    fn pseudo_random(len: usize, seed: u64) -> Configuration {
        // Deterministic, irrational-stride samples; good enough for oracles.
        DVector::from_fn(len, |r, _| {
            let x = (seed as f64 + 1.0) * 0.7548776662466927 + r as f64 * 0.5698402909980532;
            2.0 * (x - x.floor()) - 1.0
        })
    }

    #[test]
    fn potential_is_zero_on_the_constraint_set() {
        let g = anchored_hexagon();
        assert_eq!(potential_value(&DVector::zeros(12), &g).unwrap(), 0.0);
        let chains = chain_transforms(&g, 0).unwrap();
        let v0 = build_v0(&chains, g.anchor().unwrap().mirror.direction()).unwrap();
        let p = 2.3 * v0;
        assert!(potential_value(&p, &g).unwrap() <= 1e-24);
    }

    #[test]
    fn potential_matches_the_quadratic_form() {
        let g = anchored_hexagon();
        let q = laplacian(&g).unwrap();
        let n_hat = g.anchor().unwrap().mirror.normal();
        for seed in 0..5 {
            let p = pseudo_random(12, seed);
            let direct = potential_value(&p, &g).unwrap();
            let pinned = n_hat.dot(&agent(&p, 0));
            let quad = 0.5 * (p.transpose() * q.as_matrix() * &p)[(0, 0)] + pinned * pinned;
            assert!((direct - quad).abs() <= 1e-12 * (1.0 + quad.abs()));
        }
    }

    #[test]
    fn control_vanishes_on_the_null_space() {
        let g = anchored_hexagon();
        let q = anchored_laplacian(&g).unwrap();
        let chains = chain_transforms(&g, 0).unwrap();
        let v0 = build_v0(&chains, g.anchor().unwrap().mirror.direction()).unwrap();
        let u = control_static(&(1.5 * v0), &q).unwrap();
        assert!(u.amax() <= 1e-12);
    }

    #[test]
    fn control_matches_finite_differences_of_the_potential() {
        let g = anchored_hexagon();
        let q = anchored_laplacian(&g).unwrap();
        for seed in 0..3 {
            let p = pseudo_random(12, seed);
            let u = control_static(&p, &q).unwrap();
            let h = 1e-6 * (1.0 + p.norm());
            for idx in 0..12 {
                let mut plus = p.clone();
                let mut minus = p.clone();
                plus[idx] += h;
                minus[idx] -= h;
                let grad = (potential_value(&plus, &g).unwrap()
                    - potential_value(&minus, &g).unwrap())
                    / (2.0 * h);
                assert!(
                    (u[idx] + grad).abs() <= 1e-6 * (1.0 + grad.abs()),
                    "component {idx}"
                );
            }
        }
    }

    #[test]
    fn per_agent_control_form_matches_the_matrix_route() {
        let g = anchored_hexagon();
        let q = anchored_laplacian(&g).unwrap();
        let elems = g.elems().unwrap();
        let p = pseudo_random(12, 11);
        let u = control_static(&p, &q).unwrap();
        for i in 0..6 {
            let mut ui = Vector2::zeros();
            for (&(a, b), elem) in g.edges().iter().zip(elems) {
                if a == i {
                    ui += elem.rep().transpose() * agent(&p, b) - agent(&p, i);
                } else if b == i {
                    ui += elem.rep() * agent(&p, a) - agent(&p, i);
                }
            }
            if let Some(anchor) = g.anchor() {
                if anchor.vertex == i {
                    ui -= (Matrix2::identity() - anchor.element.rep()) * agent(&p, i);
                }
            }
            assert!((Vector2::new(u[2 * i], u[2 * i + 1]) - ui).amax() <= 1e-12);
        }
    }

    #[test]
    fn virtual_state_advances_exactly() {
        let inputs = ManeuverInputs {
            velocity: PiecewiseConstant::constant(Vector2::new(1.0, 0.0)),
            angular_rate: PiecewiseConstant::constant(0.0),
            scale_rate: PiecewiseConstant::constant(0.0),
        };
        let virt = VirtualTrajectory::new(Vector2::zeros(), 0.0, 1.0, inputs).unwrap();
        let stepped = virt.step(0.5);
        assert_eq!(stepped.r, Vector2::new(0.5, 0.0));
        assert_eq!(stepped.s, 1.0);

        let inputs = ManeuverInputs {
            velocity: PiecewiseConstant::constant(Vector2::zeros()),
            angular_rate: PiecewiseConstant::constant(0.0),
            scale_rate: PiecewiseConstant::constant(0.1),
        };
        let virt = VirtualTrajectory::new(Vector2::zeros(), 0.0, 1.0, inputs).unwrap();
        assert!((virt.step(1.0).s - 0.1_f64.exp()).abs() <= 1e-15);
    }

    #[test]
    fn virtual_state_splits_at_breakpoints() {
        let inputs = ManeuverInputs {
            velocity: PiecewiseConstant::new(vec![
                (0.0, Vector2::new(1.0, 0.0)),
                (1.0, Vector2::new(0.0, 2.0)),
            ])
            .unwrap(),
            angular_rate: PiecewiseConstant::constant(0.0),
            scale_rate: PiecewiseConstant::constant(0.0),
        };
        let virt = VirtualTrajectory::new(Vector2::zeros(), 0.0, 1.0, inputs).unwrap();
        // One step of 1.5 crosses the breakpoint at t = 1.
        let state = virt.state_at(1.5);
        assert!((state.r - Vector2::new(1.0, 1.0)).amax() <= 1e-15);
    }

    #[test]
    fn profiles_reject_bad_breakpoints() {
        assert!(matches!(
            PiecewiseConstant::new(vec![(0.5, 1.0)]),
            Err(SimError::BadProfile)
        ));
        assert!(matches!(
            PiecewiseConstant::new(vec![(0.0, 1.0), (0.0, 2.0)]),
            Err(SimError::BadProfile)
        ));
    }

    #[test]
    fn maneuver_control_reduces_to_static_without_inputs() {
        let g = anchored_hexagon();
        let q = anchored_laplacian(&g).unwrap();
        let virt =
            VirtualTrajectory::new(Vector2::zeros(), 0.0, 1.0, ManeuverInputs::zero()).unwrap();
        let p = pseudo_random(12, 4);
        let u_static = control_static(&p, &q).unwrap();
        let u_maneuver = control_maneuver(&p, &virt, &g, 0.0).unwrap();
        assert!((u_static - u_maneuver).amax() <= 1e-12);
    }

    #[test]
    fn maneuver_control_is_pure_feedforward_at_the_reference() {
        let g = anchored_hexagon();
        let v = Vector2::new(0.4, -0.2);
        let inputs = ManeuverInputs {
            velocity: PiecewiseConstant::constant(v),
            angular_rate: PiecewiseConstant::constant(0.3),
            scale_rate: PiecewiseConstant::constant(0.1),
        };
        let r = Vector2::new(2.0, -1.0);
        let virt = VirtualTrajectory::new(r, 0.5, 2.0, inputs).unwrap();
        // All agents sitting exactly at the reference point: c = 0.
        let p = stack(&[r; 6]);
        let u = control_maneuver(&p, &virt, &g, 0.0).unwrap();
        for i in 0..6 {
            assert!((Vector2::new(u[2 * i], u[2 * i + 1]) - v).amax() <= 1e-12);
        }
    }

    #[test]
    fn maneuver_laplacian_term_vanishes_on_scaled_rotated_targets() {
        let g = anchored_hexagon();
        let base = default_base_angle(6);
        let theta = 0.9;
        let s = 1.7;
        let r = Vector2::new(0.3, 0.8);
        let alpha = 0.05;
        let omega = -0.2;
        let inputs = ManeuverInputs {
            velocity: PiecewiseConstant::constant(Vector2::new(1.0, 2.0)),
            angular_rate: PiecewiseConstant::constant(omega),
            scale_rate: PiecewiseConstant::constant(alpha),
        };
        let virt = VirtualTrajectory::new(r, theta, s, inputs).unwrap();
        // p_i = s R(θ) ζ*_i + r for the canonical (symmetric) configuration ζ*.
        let zeta = canonical_configuration(6, base);
        let p = world_frame(&zeta, &VirtualSample { r, theta, s }).unwrap();
        let u = control_maneuver(&p, &virt, &g, 0.0).unwrap();
        let (v, _, _) = virt.inputs_at(0.0);
        let omega_mat = Matrix2::new(0.0, -omega, omega, 0.0);
        for i in 0..6 {
            let ci = agent(&p, i) - r;
            let expected = v + omega_mat * ci + alpha * ci;
            assert!(
                (Vector2::new(u[2 * i], u[2 * i + 1]) - expected).amax() <= 1e-10,
                "agent {i}"
            );
        }
    }

    #[test]
    fn moving_frame_round_trip() {
        let sample = VirtualSample {
            r: Vector2::new(1.0, -2.0),
            theta: 0.7,
            s: 3.2,
        };
        let p = pseudo_random(12, 9);
        let zeta = moving_frame(&p, &sample).unwrap();
        let back = world_frame(&zeta, &sample).unwrap();
        assert!((p - back).amax() <= 1e-12);

        let identity = VirtualSample {
            r: Vector2::zeros(),
            theta: 0.0,
            s: 1.0,
        };
        let p = pseudo_random(12, 2);
        assert!((moving_frame(&p, &identity).unwrap() - &p).amax() == 0.0);
        let at_ref = stack(&[sample.r; 6]);
        assert!(moving_frame(&at_ref, &sample).unwrap().amax() <= 1e-12);
    }

    #[test]
    fn moving_frame_rejects_bad_scale() {
        let sample = VirtualSample {
            r: Vector2::zeros(),
            theta: 0.0,
            s: 0.0,
        };
        assert!(matches!(
            moving_frame(&DVector::zeros(4), &sample),
            Err(SimError::InvalidScale { .. })
        ));
    }

    #[test]
    fn integrate_keeps_null_space_fixed() {
        let g = anchored_hexagon();
        let q = anchored_laplacian(&g).unwrap();
        let group = dihedral_group(6, default_base_angle(6)).unwrap();
        let chains = chain_transforms(&g, 0).unwrap();
        let v0 = build_v0(&chains, g.anchor().unwrap().mirror.direction()).unwrap();
        let p0 = 1.9 * v0;
        let result = integrate(Law::Static(&q), &g, &group, &p0, 2.0, 0.05).unwrap();
        for state in &result.states {
            assert!((state - &p0).amax() <= 1e-9);
        }
    }

    #[test]
    fn integrate_matches_the_exact_flow() {
        let g = anchored_hexagon();
        let q = anchored_laplacian(&g).unwrap();
        let group = dihedral_group(6, default_base_angle(6)).unwrap();
        let spectrum = eigendecompose(&q, DEFAULT_ZERO_TOL).unwrap();
        let dt = 0.5 / spectrum.max_eigenvalue();
        let horizon = 30.0 / spectrum.convergence_rate().unwrap();
        let p0 = pseudo_random(12, 21);
        let result = integrate(Law::Static(&q), &g, &group, &p0, horizon, dt).unwrap();
        let t_end = result.terminal_time();
        let v = spectrum.eigenvectors();
        let decay = DVector::from_iterator(
            12,
            spectrum.eigenvalues().iter().map(|l| (-l * t_end).exp()),
        );
        let exact = v * DMatrix::from_diagonal(&decay) * v.transpose() * &p0;
        assert!((result.terminal_state() - exact).amax() <= 1e-8 * p0.norm());
    }

    use nalgebra::DMatrix;

    #[test]
    fn integrate_rejects_unstable_steps() {
        let g = anchored_hexagon();
        let q = anchored_laplacian(&g).unwrap();
        let group = dihedral_group(6, default_base_angle(6)).unwrap();
        let p0 = pseudo_random(12, 3);
        let spectrum = eigendecompose(&q, DEFAULT_ZERO_TOL).unwrap();
        let dt = 2.0 / spectrum.max_eigenvalue() + 1e-9;
        assert!(matches!(
            integrate(Law::Static(&q), &g, &group, &p0, 10.0, dt),
            Err(SimError::UnstableStep { .. })
        ));
    }

    #[test]
    fn runaway_scaling_surfaces_as_divergence() {
        // A huge positive scaling rate blows the shifted state up to overflow;
        // the integrator must report the offending time instead of NaN output.
        let g = anchored_hexagon();
        let group = dihedral_group(6, default_base_angle(6)).unwrap();
        let inputs = ManeuverInputs {
            velocity: PiecewiseConstant::constant(Vector2::zeros()),
            angular_rate: PiecewiseConstant::constant(0.0),
            scale_rate: PiecewiseConstant::constant(200.0),
        };
        let virt = VirtualTrajectory::new(Vector2::zeros(), 0.0, 1.0, inputs).unwrap();
        let p0 = pseudo_random(12, 6);
        match integrate(Law::Maneuver(&virt), &g, &group, &p0, 10.0, 0.01) {
            Err(SimError::Divergence { t }) => assert!(t > 0.0 && t < 10.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn potential_decreases_along_static_trajectories() {
        let g = anchored_hexagon();
        let q = anchored_laplacian(&g).unwrap();
        let group = dihedral_group(6, default_base_angle(6)).unwrap();
        let spectrum = eigendecompose(&q, DEFAULT_ZERO_TOL).unwrap();
        let dt = 0.5 / spectrum.max_eigenvalue();
        let p0 = pseudo_random(12, 33);
        let result = integrate(Law::Static(&q), &g, &group, &p0, 8.0, dt).unwrap();
        let mut prev = f64::INFINITY;
        for state in &result.states {
            let value = potential_value(state, &g).unwrap();
            assert!(value <= prev + 1e-12);
            prev = value;
        }
    }

    #[test]
    fn storage_is_decimated() {
        let g = anchored_hexagon();
        let q = anchored_laplacian(&g).unwrap();
        let group = dihedral_group(6, default_base_angle(6)).unwrap();
        let p0 = pseudo_random(12, 5);
        let result = integrate(Law::Static(&q), &g, &group, &p0, 50.0, 1e-3).unwrap();
        assert!(result.states.len() <= MAX_SAMPLES);
        assert_eq!(result.times[0], 0.0);
        assert!((result.terminal_time() - 50.0).abs() <= 1e-9);
    }

    #[test]
    fn simulation_is_deterministic() {
        let g = anchored_hexagon();
        let q = anchored_laplacian(&g).unwrap();
        let group = dihedral_group(6, default_base_angle(6)).unwrap();
        let p0 = pseudo_random(12, 8);
        let a = integrate(Law::Static(&q), &g, &group, &p0, 5.0, 0.01).unwrap();
        let b = integrate(Law::Static(&q), &g, &group, &p0, 5.0, 0.01).unwrap();
        assert_eq!(a.times, b.times);
        for (x, y) in a.states.iter().zip(&b.states) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn equivariance_under_frame_rotation() {
        // Rotating the initial condition and the Laplacian by β rotates the
        // whole trajectory by β.
        let g = anchored_hexagon();
        let beta = 0.8;
        let group = dihedral_group(6, default_base_angle(6)).unwrap();
        let q0 = anchored_laplacian(&g).unwrap();
        let q_beta = crate::laplacian::rotated_laplacian(&g, beta).unwrap();
        let p0 = pseudo_random(12, 13);
        let rot = rotation_matrix(beta);
        let mut p0_rot = DVector::zeros(12);
        for i in 0..6 {
            let v = rot * agent(&p0, i);
            p0_rot[2 * i] = v.x;
            p0_rot[2 * i + 1] = v.y;
        }
        let base_run = integrate(Law::Static(&q0), &g, &group, &p0, 6.0, 0.01).unwrap();
        let rot_run = integrate(Law::Static(&q_beta), &g, &group, &p0_rot, 6.0, 0.01).unwrap();
        for (pa, pb) in base_run.states.iter().zip(&rot_run.states) {
            for i in 0..6 {
                let mapped = rot * agent(pa, i);
                assert!((mapped - agent(pb, i)).amax() <= 1e-9);
            }
        }
    }

    #[test]
    fn maneuvering_reduces_to_the_static_flow_in_the_moving_frame() {
        let g = anchored_hexagon();
        let group = dihedral_group(6, default_base_angle(6)).unwrap();
        let inputs = ManeuverInputs {
            velocity: PiecewiseConstant::new(vec![
                (0.0, Vector2::new(0.5, 0.0)),
                (2.0, Vector2::new(-0.3, 0.4)),
            ])
            .unwrap(),
            angular_rate: PiecewiseConstant::constant(0.25),
            scale_rate: PiecewiseConstant::constant(0.05),
        };
        let virt = VirtualTrajectory::new(Vector2::new(0.6, -0.4), 0.2, 1.3, inputs).unwrap();
        let p0 = pseudo_random(12, 17);
        let dt = 0.01;
        let horizon = 6.0;
        let maneuver = integrate(Law::Maneuver(&virt), &g, &group, &p0, horizon, dt).unwrap();

        let zeta0 = moving_frame(&p0, &virt.state_at(0.0)).unwrap();
        let q = anchored_laplacian(&g).unwrap();
        let static_run = integrate(Law::Static(&q), &g, &group, &zeta0, horizon, dt).unwrap();

        let samples = maneuver.virtual_series.as_ref().unwrap();
        for ((t, p), (sample, zeta_ref)) in maneuver
            .times
            .iter()
            .zip(&maneuver.states)
            .zip(samples.iter().zip(&static_run.states))
        {
            let zeta = moving_frame(p, sample).unwrap();
            assert!((zeta - zeta_ref).amax() <= 1e-4, "t = {t}");
        }
    }
}
