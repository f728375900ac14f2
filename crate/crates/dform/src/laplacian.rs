//! Matrix-weighted incidence matrices and the symmetry-constraining Laplacians
//! built from them.
//!
//! All four variants share the same block template: diagonal blocks `d(i) I₂`,
//! off-diagonal block `(i, j)` equal to minus the representation carrying
//! agent `j`'s position onto agent `i`'s, zero elsewhere. The anchored variant
//! adds `2 n̂ n̂ᵀ` at the anchor's diagonal block, and the rotated variant
//! conjugates every reflection action by `R(θ)`.

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::graph::{GraphError, InteractionGraph};
use crate::symmetry::{rotation_matrix, GroupElement};

/// A dense matrix organized as a grid of 2×2 blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    block_rows: usize,
    block_cols: usize,
    data: DMatrix<f64>,
}

impl BlockMatrix {
    pub fn zeros(block_rows: usize, block_cols: usize) -> BlockMatrix {
        BlockMatrix {
            block_rows,
            block_cols,
            data: DMatrix::zeros(2 * block_rows, 2 * block_cols),
        }
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    pub fn block_cols(&self) -> usize {
        self.block_cols
    }

    pub fn block(&self, i: usize, j: usize) -> Matrix2<f64> {
        self.data.fixed_view::<2, 2>(2 * i, 2 * j).into()
    }

    pub fn set_block(&mut self, i: usize, j: usize, m: &Matrix2<f64>) {
        self.data.fixed_view_mut::<2, 2>(2 * i, 2 * j).copy_from(m);
    }

    pub fn add_to_block(&mut self, i: usize, j: usize, m: &Matrix2<f64>) {
        let mut view = self.data.fixed_view_mut::<2, 2>(2 * i, 2 * j);
        view += m;
    }

    /// The assembled dense matrix.
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Largest absolute asymmetry `max |A - Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        (&self.data - self.data.transpose()).amax()
    }
}

impl From<DMatrix<f64>> for BlockMatrix {
    fn from(data: DMatrix<f64>) -> Self {
        assert!(data.nrows().is_multiple_of(2) && data.ncols().is_multiple_of(2));
        BlockMatrix {
            block_rows: data.nrows() / 2,
            block_cols: data.ncols() / 2,
            data,
        }
    }
}

/// Matrix-weighted incidence matrix `E(Γ)`, 2n × 2(n-1).
///
/// Every edge is oriented out of its lower-index vertex: the tail block is
/// `I₂` and the head block is `-τ(γ)` for the element mapping tail to head,
/// so a column of `Eᵀp` vanishes exactly when the edge constraint holds.
pub fn incidence(g: &InteractionGraph) -> Result<BlockMatrix, GraphError> {
    let elems = g.elems()?;
    let mut e = BlockMatrix::zeros(g.n(), g.edges().len());
    for (k, (&(i, j), elem)) in g.edges().iter().zip(elems).enumerate() {
        e.set_block(i, k, &Matrix2::identity());
        e.set_block(j, k, &(-elem.rep()));
    }
    Ok(e)
}

/// Symmetry-constraining matrix-weighted Laplacian, assembled blockwise.
pub fn laplacian(g: &InteractionGraph) -> Result<BlockMatrix, GraphError> {
    let elems = g.elems()?;
    let mut q = BlockMatrix::zeros(g.n(), g.n());
    for (&(i, j), elem) in g.edges().iter().zip(elems) {
        q.add_to_block(i, i, &Matrix2::identity());
        q.add_to_block(j, j, &Matrix2::identity());
        // Block (i, j) carries the action mapping j's position onto i's,
        // which is the inverse of the stored tail-to-head element.
        q.set_block(i, j, &(-elem.rep().transpose()));
        q.set_block(j, i, &(-elem.rep()));
    }
    Ok(q)
}

/// Add the anchoring penalty `I₂ - τ(γ_ℓ) = 2 n̂_ℓ n̂_ℓᵀ` to block `(ℓ, ℓ)`.
pub fn augment_anchor(
    q: &BlockMatrix,
    vertex: usize,
    elem: &GroupElement,
) -> Result<BlockMatrix, GraphError> {
    if vertex >= q.block_rows() {
        return Err(GraphError::VertexOutOfRange {
            vertex,
            n: q.block_rows(),
        });
    }
    if !elem.is_reflection() || elem.apply(vertex) != vertex {
        return Err(GraphError::InvalidAnchor { vertex });
    }
    let mut out = q.clone();
    out.add_to_block(vertex, vertex, &(Matrix2::identity() - elem.rep()));
    Ok(out)
}

/// The anchored Laplacian of a graph carrying its own anchor.
pub fn anchored_laplacian(g: &InteractionGraph) -> Result<BlockMatrix, GraphError> {
    let anchor = g.anchor().ok_or(GraphError::MissingAnchor)?;
    augment_anchor(&laplacian(g)?, anchor.vertex, &anchor.element)
}

/// Anchored Laplacian with every symmetry action conjugated by `R(θ)`, so the
/// enforced mirror relations rotate with the formation.
pub fn rotated_laplacian(g: &InteractionGraph, theta: f64) -> Result<BlockMatrix, GraphError> {
    let elems = g.elems()?;
    let anchor = g.anchor().ok_or(GraphError::MissingAnchor)?;
    let rot = rotation_matrix(theta);
    let mut q = BlockMatrix::zeros(g.n(), g.n());
    for (&(i, j), elem) in g.edges().iter().zip(elems) {
        q.add_to_block(i, i, &Matrix2::identity());
        q.add_to_block(j, j, &Matrix2::identity());
        q.set_block(i, j, &(-(rot * elem.rep().transpose() * rot.transpose())));
        q.set_block(j, i, &(-(rot * elem.rep() * rot.transpose())));
    }
    let penalty = Matrix2::identity() - anchor.element.rep();
    q.add_to_block(
        anchor.vertex,
        anchor.vertex,
        &(rot * penalty * rot.transpose()),
    );
    Ok(q)
}

/// The rotated anchor normal `R(θ) n̂_ℓ`.
pub fn rotated_anchor_normal(g: &InteractionGraph, theta: f64) -> Result<Vector2<f64>, GraphError> {
    let anchor = g.anchor().ok_or(GraphError::MissingAnchor)?;
    Ok(rotation_matrix(theta) * anchor.mirror.normal())
}
