//! Dihedral point-group elements acting on the vertices of a cycle graph.
//!
//! Every element pairs a vertex permutation of `{0, …, n-1}` with its planar
//! orthogonal representation: rotations map to `R(2πk/n)`, reflections to
//! Householder matrices `I - 2 n̂ n̂ᵀ`. The two are always constructed together
//! from the canonical embedding (vertex `j` on the unit circle at angle
//! `base_angle + 2πj/n`), so they cannot disagree.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use std::f64::consts::PI;

/// Tolerance for matrices we construct ourselves.
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Tolerance granted to user-supplied vectors and angles.
pub const INPUT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymmetryError {
    #[error("cycle graphs need at least 3 vertices, got n = {n}")]
    InvalidOrder { n: usize },
    #[error("expected a unit vector, got norm {norm}")]
    NotUnit { norm: f64 },
    #[error("axis angle {axis_angle} rad is not a dihedral mirror of the n = {n} embedding")]
    InvalidMirror { axis_angle: f64, n: usize },
    #[error("operation requires a reflection, got a rotation")]
    NotAReflection,
    #[error("group elements act on different vertex sets ({left} vs {right})")]
    OrderMismatch { left: usize, right: usize },
}

/// Base angle that puts the mirror of edge (0, 1) on the vertical axis.
pub fn default_base_angle(n: usize) -> f64 {
    PI / 2.0 - PI / (n as f64)
}

/// Planar rotation by `angle` radians.
pub fn rotation_matrix(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Householder reflection `I - 2 n̂ n̂ᵀ` across the line with unit normal `n̂`.
///
/// The input must already be unit length; a non-unit vector is rejected rather
/// than silently normalized.
pub fn householder(normal: Vector2<f64>) -> Result<Matrix2<f64>, SymmetryError> {
    let norm = normal.norm();
    if (norm - 1.0).abs() > INPUT_TOL {
        return Err(SymmetryError::NotUnit { norm });
    }
    Ok(Matrix2::identity() - 2.0 * normal * normal.transpose())
}

/// Whether an element rotates (`det = +1`) or reflects (`det = -1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementKind {
    /// `c_n^k`: rotation by `2πk/n`.
    Rotation { steps: usize },
    /// Reflection whose mirror line passes the origin at `axis_angle ∈ [0, π)`.
    Reflection { axis_angle: f64 },
}

/// A cycle-graph automorphism together with its 2×2 orthogonal representation.
#[derive(Debug, Clone)]
pub struct GroupElement {
    perm: Vec<usize>,
    rep: Matrix2<f64>,
    kind: ElementKind,
}

/// Partition of the dihedral reflections by fixed vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReflectionClass {
    /// No vertex lies on the mirror; the reflection pairs agents across it.
    Free,
    /// At least one vertex sits on the mirror axis and is pinned to it.
    SelfReflection { fixed_vertices: Vec<usize> },
}

impl GroupElement {
    /// The rotation `c_n^k`: vertex `i ↦ (i + k) mod n`, represented by `R(2πk/n)`.
    pub fn rotation(k: usize, n: usize) -> Result<Self, SymmetryError> {
        if n < 3 {
            return Err(SymmetryError::InvalidOrder { n });
        }
        let k = k % n;
        let perm = (0..n).map(|i| (i + k) % n).collect();
        Ok(GroupElement {
            perm,
            rep: rotation_matrix(2.0 * PI * k as f64 / n as f64),
            kind: ElementKind::Rotation { steps: k },
        })
    }

    /// The reflection across the mirror line at `axis_angle`.
    ///
    /// The angle must coincide (mod π, within [`INPUT_TOL`]) with one of the
    /// dihedral mirror angles `base_angle + kπ/n` of the canonical embedding.
    /// The vertex permutation is derived from that embedding: each vertex maps
    /// to the vertex whose canonical position is its mirror image.
    pub fn reflection(axis_angle: f64, n: usize, base_angle: f64) -> Result<Self, SymmetryError> {
        if n < 3 {
            return Err(SymmetryError::InvalidOrder { n });
        }
        let nf = n as f64;
        let t = (axis_angle - base_angle) * nf / PI;
        let k = t.round();
        if (t - k).abs() * PI / nf > INPUT_TOL {
            return Err(SymmetryError::InvalidMirror { axis_angle, n });
        }
        let k = k as i64;
        let m = k.rem_euclid(n as i64) as usize;
        // Snap to the exact mirror angle so group closure stays crisp.
        let angle = canonical_line_angle(base_angle + k as f64 * PI / nf);
        let perm = (0..n).map(|i| (m + n - i) % n).collect();
        let normal = Vector2::new(-angle.sin(), angle.cos());
        Ok(GroupElement {
            perm,
            rep: householder(normal)?,
            kind: ElementKind::Reflection { axis_angle: angle },
        })
    }

    /// The identity automorphism.
    pub fn identity(n: usize) -> Result<Self, SymmetryError> {
        Self::rotation(0, n)
    }

    /// Number of vertices acted on.
    pub fn order(&self) -> usize {
        self.perm.len()
    }

    /// Image of vertex `i`.
    pub fn apply(&self, i: usize) -> usize {
        self.perm[i]
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn rep(&self) -> &Matrix2<f64> {
        &self.rep
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn is_reflection(&self) -> bool {
        matches!(self.kind, ElementKind::Reflection { .. })
    }

    /// Group inverse. Reflections are involutions; `c_n^k` inverts to `c_n^{n-k}`.
    pub fn inverse(&self) -> GroupElement {
        match self.kind {
            ElementKind::Rotation { steps } => {
                let n = self.order();
                GroupElement::rotation((n - steps) % n, n).expect("order preserved")
            }
            ElementKind::Reflection { .. } => self.clone(),
        }
    }

    /// Composition `self ∘ other`: first `other`, then `self`.
    ///
    /// Permutations compose as `i ↦ self(other(i))` and representations as the
    /// matrix product, so the homomorphism property `τ(a)τ(b) = τ(a ∘ b)` holds
    /// by construction.
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement, SymmetryError> {
        let n = self.order();
        if n != other.order() {
            return Err(SymmetryError::OrderMismatch {
                left: n,
                right: other.order(),
            });
        }
        let perm: Vec<usize> = (0..n).map(|i| self.perm[other.perm[i]]).collect();
        let rep = self.rep * other.rep;
        let reflects = self.is_reflection() ^ other.is_reflection();
        let kind = if reflects {
            // rep = [[cos 2φ, sin 2φ], [sin 2φ, -cos 2φ]]
            let axis_angle = canonical_line_angle(0.5 * rep[(1, 0)].atan2(rep[(0, 0)]));
            ElementKind::Reflection { axis_angle }
        } else {
            ElementKind::Rotation { steps: perm[0] }
        };
        Ok(GroupElement { perm, rep, kind })
    }

    /// Free/self classification of a reflection by its fixed vertices.
    pub fn classify(&self) -> Result<ReflectionClass, SymmetryError> {
        if !self.is_reflection() {
            return Err(SymmetryError::NotAReflection);
        }
        let fixed_vertices: Vec<usize> = (0..self.order()).filter(|&i| self.perm[i] == i).collect();
        if fixed_vertices.is_empty() {
            Ok(ReflectionClass::Free)
        } else {
            Ok(ReflectionClass::SelfReflection { fixed_vertices })
        }
    }

    /// Mirror line of a reflection element.
    pub fn mirror_line(&self) -> Result<MirrorLine, SymmetryError> {
        match self.kind {
            ElementKind::Reflection { axis_angle } => Ok(MirrorLine::from_angle(axis_angle)),
            ElementKind::Rotation { .. } => Err(SymmetryError::NotAReflection),
        }
    }

    /// Same automorphism, compared exactly on the permutation.
    pub fn same_perm(&self, other: &GroupElement) -> bool {
        self.perm == other.perm
    }
}

/// The full dihedral group of order `2n` for the canonical embedding:
/// rotations `c_n^0 … c_n^{n-1}` followed by the `n` reflections whose mirror
/// lines are spaced by `π/n` starting at `base_angle`.
pub fn dihedral_group(n: usize, base_angle: f64) -> Result<Vec<GroupElement>, SymmetryError> {
    if n < 3 {
        return Err(SymmetryError::InvalidOrder { n });
    }
    let mut elements = Vec::with_capacity(2 * n);
    for k in 0..n {
        elements.push(GroupElement::rotation(k, n)?);
    }
    for k in 0..n {
        let angle = base_angle + k as f64 * PI / n as f64;
        elements.push(GroupElement::reflection(angle, n, base_angle)?);
    }
    Ok(elements)
}

/// A line through the origin, stored as a unit direction and unit normal.
///
/// The direction is sign-canonicalized to the angle range `[0, π)` so that two
/// values describing the same line compare equal.
#[derive(Debug, Clone, Copy)]
pub struct MirrorLine {
    direction: Vector2<f64>,
    normal: Vector2<f64>,
}

impl MirrorLine {
    /// Line at `angle` radians from the positive x-axis.
    pub fn from_angle(angle: f64) -> MirrorLine {
        let a = canonical_line_angle(angle);
        let direction = Vector2::new(a.cos(), a.sin());
        MirrorLine {
            direction,
            normal: rot90(direction),
        }
    }

    /// Line spanned by `direction`, which must be unit length within [`INPUT_TOL`].
    pub fn from_direction(direction: Vector2<f64>) -> Result<MirrorLine, SymmetryError> {
        let norm = direction.norm();
        if (norm - 1.0).abs() > INPUT_TOL {
            return Err(SymmetryError::NotUnit { norm });
        }
        Ok(Self::canonicalized(direction / norm))
    }

    fn canonicalized(direction: Vector2<f64>) -> MirrorLine {
        let d = if direction.y < 0.0 || (direction.y == 0.0 && direction.x < 0.0) {
            -direction
        } else {
            direction
        };
        MirrorLine {
            direction: d,
            normal: rot90(d),
        }
    }

    pub fn direction(&self) -> Vector2<f64> {
        self.direction
    }

    pub fn normal(&self) -> Vector2<f64> {
        self.normal
    }

    /// Angle of the line in `[0, π)`.
    pub fn angle(&self) -> f64 {
        canonical_line_angle(self.direction.y.atan2(self.direction.x))
    }

    /// Image of the line under an orthogonal map, re-canonicalized.
    pub fn transformed(&self, m: &Matrix2<f64>) -> MirrorLine {
        let d = m * self.direction;
        Self::canonicalized(d / d.norm())
    }

    /// Angle between two lines, in `[0, π/2]`. Zero iff they are the same line.
    pub fn angle_to(&self, other: &MirrorLine) -> f64 {
        let cross = (self.direction.x * other.direction.y - self.direction.y * other.direction.x)
            .clamp(-1.0, 1.0);
        cross.abs().asin()
    }
}

fn rot90(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

/// Reduce an angle to the line range `[0, π)`.
pub fn canonical_line_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(PI);
    // rem_euclid can return exactly PI when the input is a tiny negative number.
    if a >= PI {
        a - PI
    } else {
        a
    }
}
