//! Interaction graphs: spanning trees of the cycle graph with per-edge group
//! elements and an optional anchored vertex.

use thiserror::Error;

use std::f64::consts::PI;

use crate::symmetry::{GroupElement, MirrorLine, ReflectionClass, SymmetryError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("({i}, {j}) is not an edge of the cycle graph on {n} vertices")]
    NotACycleEdge { i: usize, j: usize, n: usize },
    #[error("edge elements have not been assigned yet")]
    UnassignedEdges,
    #[error("edge elements are already assigned")]
    AlreadyAssigned,
    #[error("vertex {vertex} is out of range for n = {n}")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("anchor element must be a self reflection fixing vertex {vertex}")]
    InvalidAnchor { vertex: usize },
    #[error("operation requires an anchored graph")]
    MissingAnchor,
    #[error("no tree path reaches vertex {vertex}")]
    NoPath { vertex: usize },
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
}

/// Which family of group elements decorates the tree edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeFamily {
    /// Each edge carries the single-step rotation mapping its tail to its head.
    Rotational,
    /// Each edge carries the mirror through the midpoint of its endpoints.
    Reflectional,
}

/// The designated agent pinned to its own mirror line.
#[derive(Debug, Clone)]
pub struct Anchor {
    pub vertex: usize,
    pub element: GroupElement,
    pub mirror: MirrorLine,
}

/// A spanning tree of `C_n` whose edges may carry group elements.
///
/// Edges are stored as `(i, j)` with `i < j`; the assigned element for an edge
/// always maps `i` to `j`. Values are immutable once built, so graphs can be
/// shared freely across threads.
#[derive(Debug, Clone)]
pub struct InteractionGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    elems: Option<Vec<GroupElement>>,
    family: Option<EdgeFamily>,
    base_angle: Option<f64>,
    anchor: Option<Anchor>,
}

/// All `n - 1` cycle edges except `removed_edge`, which must be an edge of `C_n`.
pub fn spanning_tree(
    n: usize,
    removed_edge: (usize, usize),
) -> Result<InteractionGraph, GraphError> {
    if n < 3 {
        return Err(SymmetryError::InvalidOrder { n }.into());
    }
    let removed = normalize_edge(removed_edge, n)?;
    let edges = (0..n)
        .map(|i| normalize_edge((i, (i + 1) % n), n).expect("cycle edge"))
        .filter(|&e| e != removed)
        .collect();
    Ok(InteractionGraph {
        n,
        edges,
        elems: None,
        family: None,
        base_angle: None,
        anchor: None,
    })
}

fn normalize_edge((i, j): (usize, usize), n: usize) -> Result<(usize, usize), GraphError> {
    if i >= n || j >= n {
        return Err(GraphError::NotACycleEdge { i, j, n });
    }
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    let adjacent = b == a + 1 || (a == 0 && b == n - 1);
    if a == b || !adjacent {
        return Err(GraphError::NotACycleEdge { i, j, n });
    }
    Ok((a, b))
}

impl InteractionGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn family(&self) -> Option<EdgeFamily> {
        self.family
    }

    pub fn base_angle(&self) -> Option<f64> {
        self.base_angle
    }

    pub fn anchor(&self) -> Option<&Anchor> {
        self.anchor.as_ref()
    }

    /// Per-edge elements, in edge order. Errors until [`assign_edges`] has run.
    ///
    /// [`assign_edges`]: InteractionGraph::assign_edges
    pub fn elems(&self) -> Result<&[GroupElement], GraphError> {
        self.elems.as_deref().ok_or(GraphError::UnassignedEdges)
    }

    /// Degree of vertex `i` in the tree.
    pub fn degree(&self, i: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == i || b == i)
            .count()
    }

    /// Decorate every edge with the family's group element for the canonical
    /// embedding at `base_angle`. The element of edge `(i, j)` maps `i ↦ j`.
    pub fn assign_edges(
        self,
        family: EdgeFamily,
        base_angle: f64,
    ) -> Result<InteractionGraph, GraphError> {
        if self.elems.is_some() {
            return Err(GraphError::AlreadyAssigned);
        }
        let n = self.n;
        let elems = self
            .edges
            .iter()
            .map(|&(i, j)| {
                let elem = match family {
                    EdgeFamily::Rotational => {
                        // c_n^{±1}: the wrap edge (0, n-1) needs the backward step.
                        let k = if j == i + 1 { 1 } else { n - 1 };
                        GroupElement::rotation(k, n)?
                    }
                    EdgeFamily::Reflectional => {
                        // Mirror through the midpoint of the canonical positions.
                        let axis = base_angle + (i + j) as f64 * PI / n as f64;
                        GroupElement::reflection(axis, n, base_angle)?
                    }
                };
                debug_assert_eq!(elem.apply(i), j);
                Ok(elem)
            })
            .collect::<Result<Vec<_>, GraphError>>()?;
        Ok(InteractionGraph {
            elems: Some(elems),
            family: Some(family),
            base_angle: Some(base_angle),
            ..self
        })
    }

    /// Pin `vertex` to the canonical mirror line through its own position.
    ///
    /// Requires assigned edges (the anchor reuses their base angle, so the two
    /// can never disagree).
    pub fn with_anchor(self, vertex: usize) -> Result<InteractionGraph, GraphError> {
        let n = self.n;
        if vertex >= n {
            return Err(GraphError::VertexOutOfRange { vertex, n });
        }
        let base_angle = self.base_angle.ok_or(GraphError::UnassignedEdges)?;
        let axis = base_angle + 2.0 * PI * vertex as f64 / n as f64;
        let element = GroupElement::reflection(axis, n, base_angle)?;
        match element.classify()? {
            ReflectionClass::SelfReflection { ref fixed_vertices }
                if fixed_vertices.contains(&vertex) => {}
            _ => return Err(GraphError::InvalidAnchor { vertex }),
        }
        let mirror = element.mirror_line()?;
        Ok(InteractionGraph {
            anchor: Some(Anchor {
                vertex,
                element,
                mirror,
            }),
            ..self
        })
    }

    /// Neighbors of `i` with the edge index connecting them.
    pub(crate) fn neighbors(&self, i: usize) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .enumerate()
            .filter_map(|(k, &(a, b))| {
                if a == i {
                    Some((b, k))
                } else if b == i {
                    Some((a, k))
                } else {
                    None
                }
            })
            .collect()
    }
}
