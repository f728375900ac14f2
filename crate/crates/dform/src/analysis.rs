//! Spectral analysis of the constrained Laplacians, chained transforms along
//! the tree, mirror-line propagation, and closed-form steady states.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use thiserror::Error;

use crate::graph::{GraphError, InteractionGraph};
use crate::laplacian::BlockMatrix;
use crate::symmetry::{GroupElement, MirrorLine, SymmetryError, INPUT_TOL};

/// Default threshold below which an eigenvalue counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Required ratio between the smallest kept and largest discarded eigenvalue.
const NULLSPACE_GAP: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("matrix is not symmetric (max asymmetry {max_asymmetry})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("eigensolver did not reach the off-diagonal threshold in {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error(
        "ambiguous null space: largest zero-class eigenvalue {largest_zero} and smallest \
         positive eigenvalue {smallest_positive} are separated by less than {NULLSPACE_GAP}x"
    )]
    AmbiguousNullspace {
        largest_zero: f64,
        smallest_positive: f64,
    },
    #[error("spectrum has no positive eigenvalue")]
    NoPositiveEigenvalue,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    null_dim: usize,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors, column `k` paired with `eigenvalues()[k]`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn null_dim(&self) -> usize {
        self.null_dim
    }

    /// Columns spanning the numerical null space.
    pub fn null_basis(&self) -> DMatrix<f64> {
        self.eigenvectors.columns(0, self.null_dim).into()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// Decay rate of the slowest transient mode: the smallest positive eigenvalue.
    pub fn convergence_rate(&self) -> Result<f64, AnalysisError> {
        self.eigenvalues
            .get(self.null_dim)
            .copied()
            .ok_or(AnalysisError::NoPositiveEigenvalue)
    }
}

/// Eigendecompose a symmetric block matrix, counting eigenvalues below
/// `zero_tol` as the null space.
///
/// The null/positive split must be unambiguous: the smallest kept eigenvalue
/// has to exceed the largest discarded one by a factor of 1000, otherwise an
/// [`AnalysisError::AmbiguousNullspace`] diagnostic is raised instead of
/// silently reporting a dimension.
pub fn eigendecompose(q: &BlockMatrix, zero_tol: f64) -> Result<Spectrum, AnalysisError> {
    let max_asymmetry = q.asymmetry();
    if max_asymmetry > 1e-10 {
        return Err(AnalysisError::NotSymmetric { max_asymmetry });
    }
    let (eigenvalues, eigenvectors) = jacobi_eigen(q.as_matrix().clone())?;
    let null_dim = eigenvalues.iter().take_while(|&&l| l < zero_tol).count();
    if null_dim > 0 && null_dim < eigenvalues.len() {
        let largest_zero = eigenvalues[null_dim - 1];
        let smallest_positive = eigenvalues[null_dim];
        if largest_zero > 0.0 && smallest_positive < NULLSPACE_GAP * largest_zero {
            return Err(AnalysisError::AmbiguousNullspace {
                largest_zero,
                smallest_positive,
            });
        }
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        null_dim,
    })
}

/// Cyclic Jacobi sweeps for a symmetric matrix.
///
/// Plane rotations annihilate one off-diagonal entry at a time; sweeping until
/// the off-diagonal Frobenius mass drops below `1e-12 ‖A‖_F` leaves the
/// eigenvalues on the diagonal and the accumulated rotations as an orthonormal
/// eigenbasis. Deterministic and adequate for the desk-scale matrices here.
pub(crate) fn jacobi_eigen(mut a: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), AnalysisError> {
    const MAX_SWEEPS: usize = 64;
    let n = a.nrows();
    let mut v = DMatrix::<f64>::identity(n, n);
    if n == 0 {
        return Ok((vec![], v));
    }
    let frob = a.norm();
    let threshold = 1e-12 * frob;

    let off = |a: &DMatrix<f64>| -> f64 {
        let mut sum = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                sum += a[(p, q)] * a[(p, q)];
            }
        }
        (2.0 * sum).sqrt()
    };

    let mut sweeps = 0;
    while off(&a) > threshold {
        sweeps += 1;
        if sweeps > MAX_SWEEPS {
            return Err(AnalysisError::NoConvergence { sweeps: MAX_SWEEPS });
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= threshold / (n * n) as f64 {
                    continue;
                }
                let h = a[(q, q)] - a[(p, p)];
                let t = if h.abs() + 100.0 * apq.abs() == h.abs() {
                    // |θ| is huge; tan collapses to 1/(2θ).
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                let app = a[(p, p)];
                let aqq = a[(q, q)];
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = a[(r, p)];
                        let arq = a[(r, q)];
                        a[(r, p)] = arp - s * (arq + tau * arp);
                        a[(p, r)] = a[(r, p)];
                        a[(r, q)] = arq + s * (arp - tau * arq);
                        a[(q, r)] = a[(r, q)];
                    }
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp - s * (vrq + tau * vrp);
                    v[(r, q)] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap().then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut sorted = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        sorted.set_column(dst, &v.column(src));
    }
    Ok((eigenvalues, sorted))
}

/// Ordered products of edge representations along the unique tree paths from
/// an anchor vertex to every other vertex.
#[derive(Debug, Clone)]
pub struct ChainedTransforms {
    anchor: usize,
    transforms: Vec<Matrix2<f64>>,
}

impl ChainedTransforms {
    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn transforms(&self) -> &[Matrix2<f64>] {
        &self.transforms
    }

    pub fn transform(&self, i: usize) -> &Matrix2<f64> {
        &self.transforms[i]
    }
}

/// Walk the tree from `root`, composing edge actions: `S_root = I` and
/// `S_w = τ(γ_{u→w}) S_u` across each edge `(u, w)` leading away from the root.
pub fn chain_transforms(
    g: &InteractionGraph,
    root: usize,
) -> Result<ChainedTransforms, AnalysisError> {
    let n = g.n();
    if root >= n {
        return Err(GraphError::VertexOutOfRange { vertex: root, n }.into());
    }
    let elems = g.elems().map_err(AnalysisError::Graph)?;
    let mut transforms = vec![None::<Matrix2<f64>>; n];
    transforms[root] = Some(Matrix2::identity());
    let mut stack = vec![root];
    while let Some(u) = stack.pop() {
        let s_u = transforms[u].expect("visited");
        for (w, k) in g.neighbors(u) {
            if transforms[w].is_some() {
                continue;
            }
            let elem = &elems[k];
            // Stored elements map the lower-index endpoint to the higher one.
            let forward = if g.edges()[k].0 == u {
                *elem.rep()
            } else {
                elem.rep().transpose()
            };
            transforms[w] = Some(forward * s_u);
            stack.push(w);
        }
    }
    let transforms = transforms
        .into_iter()
        .enumerate()
        .map(|(vertex, s)| s.ok_or(GraphError::NoPath { vertex }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ChainedTransforms {
        anchor: root,
        transforms,
    })
}

/// Push the anchor's mirror line through the chained transforms: `𝓛_i = S_i 𝓛_ℓ`.
pub fn propagate_mirrors(
    g: &InteractionGraph,
    root: usize,
    line: &MirrorLine,
) -> Result<Vec<MirrorLine>, AnalysisError> {
    let chains = chain_transforms(g, root)?;
    Ok(chains
        .transforms()
        .iter()
        .map(|s| line.transformed(s))
        .collect())
}

/// The stacked null-space direction with blocks `S_i L̂_ℓ`.
pub fn build_v0(
    chains: &ChainedTransforms,
    direction: Vector2<f64>,
) -> Result<DVector<f64>, SymmetryError> {
    let norm = direction.norm();
    if (norm - 1.0).abs() > INPUT_TOL {
        return Err(SymmetryError::NotUnit { norm });
    }
    let n = chains.transforms().len();
    let mut v0 = DVector::zeros(2 * n);
    for (i, s) in chains.transforms().iter().enumerate() {
        v0.fixed_rows_mut::<2>(2 * i).copy_from(&(s * direction));
    }
    Ok(v0)
}

/// Closed-form limit of the anchored flow: the orthogonal projection
/// `p∞ = (1/n) V₀ V₀ᵀ p(0)` onto the one-dimensional constraint set.
pub fn predict_steady_state(
    p0: &DVector<f64>,
    v0: &DVector<f64>,
) -> Result<DVector<f64>, AnalysisError> {
    if p0.len() != v0.len() || !v0.len().is_multiple_of(2) {
        return Err(AnalysisError::DimensionMismatch {
            expected: v0.len(),
            actual: p0.len(),
        });
    }
    let n = (v0.len() / 2) as f64;
    Ok(v0 * (v0.dot(p0) / n))
}

/// How far a configuration is from the enforced and the full set of relations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    /// `‖E(Γ)ᵀ p‖`: stacked violation of the tree-edge constraints.
    pub edge_residual: f64,
    /// `|n̂_ℓᵀ p_ℓ|`: the anchor's distance from its mirror line (0 if no anchor).
    pub anchor_residual: f64,
    /// `max_{γ, i} ‖τ(γ) p_i - p_{γ(i)}‖` over every element of the full group.
    pub full_group_residual: f64,
}

/// Evaluate all three residuals of `p` against the graph's constraints and the
/// full point group.
pub fn residuals(
    p: &DVector<f64>,
    g: &InteractionGraph,
    full_group: &[GroupElement],
) -> Result<ResidualReport, AnalysisError> {
    let n = g.n();
    if p.len() != 2 * n {
        return Err(AnalysisError::DimensionMismatch {
            expected: 2 * n,
            actual: p.len(),
        });
    }
    let elems = g.elems().map_err(AnalysisError::Graph)?;
    let agent = |i: usize| Vector2::new(p[2 * i], p[2 * i + 1]);

    let mut edge_sq = 0.0;
    for (&(i, j), elem) in g.edges().iter().zip(elems) {
        edge_sq += (agent(i) - elem.rep().transpose() * agent(j)).norm_squared();
    }

    let anchor_residual = match g.anchor() {
        Some(anchor) => anchor.mirror.normal().dot(&agent(anchor.vertex)).abs(),
        None => 0.0,
    };

    let mut full = 0.0_f64;
    for gamma in full_group {
        for i in 0..n {
            let gap = (gamma.rep() * agent(i) - agent(gamma.apply(i))).norm();
            full = full.max(gap);
        }
    }

    Ok(ResidualReport {
        edge_residual: edge_sq.sqrt(),
        anchor_residual,
        full_group_residual: full,
    })
}

/// Least-squares slope of `ln(values)` against `times`, ignoring non-positive
/// values. Returns `None` with fewer than two usable points.
pub fn fit_log_slope(times: &[f64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mean_t = pts.iter().map(|(t, _)| t).sum::<f64>() / m;
    let mean_y = pts.iter().map(|(_, y)| y).sum::<f64>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in &pts {
        num += (t - mean_t) * (y - mean_y);
        den += (t - mean_t) * (t - mean_t);
    }
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}
