//! Closed triangulated surfaces stored as Δ-complexes.
//!
//! A [`Triangulation`] is a list of faces, each made of three corners. A
//! corner records the vertex sitting at it and the edge opposite to it. Edges
//! have their own identity: two faces may share several edges, and an edge may
//! start and end at the same vertex. This is what lets a torus be triangulated
//! with a single vertex and two triangles.
//!
//! Faces are stored coherently oriented. The edge opposite corner `c` is
//! traversed from corner `c + 1` to corner `c + 2`, and the two sides of every
//! edge traverse it in opposite directions. Gluing across loop edges is read
//! off this orientation, so non-orientable surfaces are rejected.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FaceId(pub usize);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for FaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

/// A face corner: the vertex at the corner and the edge across from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Corner {
    pub vertex: VertexId,
    pub opposite_edge: EdgeId,
}

pub type Face = [Corner; 3];

/// One incidence of an edge: the face and the index of the corner facing it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Side {
    pub face: FaceId,
    pub corner: usize,
}

/// Input face for [`Triangulation::build_from_faces`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceSpec {
    pub vertices: [usize; 3],
    /// Edge opposite each listed vertex. Required for complexes with loops or
    /// multi-edges.
    pub edges: Option<[usize; 3]>,
}

impl FaceSpec {
    pub fn implicit(vertices: [usize; 3]) -> Self {
        Self {
            vertices,
            edges: None,
        }
    }

    pub fn explicit(vertices: [usize; 3], edges: [usize; 3]) -> Self {
        Self {
            vertices,
            edges: Some(edges),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MeshError {
    #[error("no faces given")]
    Empty,
    #[error("face {face} references vertex {vertex} but the surface has {n_vertices} vertices")]
    VertexOutOfRange {
        face: usize,
        vertex: usize,
        n_vertices: usize,
    },
    #[error("vertex {0} is not used by any face")]
    UnusedVertex(usize),
    #[error("edge {edge} has {incidences} face incidence(s); a closed surface needs exactly 2")]
    OpenSurface { edge: usize, incidences: usize },
    #[error("edge {edge} has {incidences} face incidences; at most 2 are allowed")]
    NonManifoldEdge { edge: usize, incidences: usize },
    #[error("edges cannot be inferred from vertex pairs: {0}")]
    AmbiguousEdges(String),
    #[error("some faces list explicit edge ids and some do not")]
    MixedEdgeSpecification,
    #[error("edge {edge} joins {first:?} on one side and {second:?} on the other")]
    EdgeEndpointMismatch {
        edge: usize,
        first: (usize, usize),
        second: (usize, usize),
    },
    #[error("the faces cannot be oriented coherently (surface is non-orientable)")]
    NonOrientable,
    #[error("the surface is not connected")]
    Disconnected,
    #[error("edge {0} does not exist")]
    NoSuchEdge(usize),
    #[error("edge {0} has both sides on the same face and cannot be flipped")]
    UnflippableSelfGlued(usize),
}

impl MeshError {
    /// Short machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            MeshError::Empty => "empty",
            MeshError::VertexOutOfRange { .. } => "vertex_out_of_range",
            MeshError::UnusedVertex(_) => "unused_vertex",
            MeshError::OpenSurface { .. } => "open_surface",
            MeshError::NonManifoldEdge { .. } => "non_manifold_edge",
            MeshError::AmbiguousEdges(_) => "ambiguous_edges",
            MeshError::MixedEdgeSpecification => "mixed_edge_specification",
            MeshError::EdgeEndpointMismatch { .. } => "edge_endpoint_mismatch",
            MeshError::NonOrientable => "non_orientable",
            MeshError::Disconnected => "disconnected",
            MeshError::NoSuchEdge(_) => "no_such_edge",
            MeshError::UnflippableSelfGlued(_) => "unflippable_self_glued",
        }
    }
}

/// The two faces around an edge, labelled the way a flip sees them.
///
/// The first face has corners `(k, i, j)` at indices `(c1, c1+1, c1+2)` and the
/// second has `(l, j, i)` at `(c2, c2+1, c2+2)`, where `ij` is the shared edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diamond {
    pub edge: EdgeId,
    pub first: Side,
    pub second: Side,
    pub i: VertexId,
    pub j: VertexId,
    pub k: VertexId,
    pub l: VertexId,
    /// Edge `ki` (first face, opposite `j`).
    pub e_ki: EdgeId,
    /// Edge `jk` (first face, opposite `i`).
    pub e_jk: EdgeId,
    /// Edge `il` (second face, opposite `j`).
    pub e_il: EdgeId,
    /// Edge `lj` (second face, opposite `i`).
    pub e_lj: EdgeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triangulation {
    faces: Vec<Face>,
    edge_sides: Vec<[Side; 2]>,
    n_vertices: usize,
}

#[inline]
fn next(c: usize) -> usize {
    (c + 1) % 3
}

#[inline]
fn prev(c: usize) -> usize {
    (c + 2) % 3
}

fn unordered(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Triangulation {
    /// Builds and validates a closed triangulated surface.
    ///
    /// With implicit edges, edges are matched by unordered vertex pair, which
    /// only works for simplicial complexes. Faces are reoriented as needed so
    /// that the stored orientation is coherent. Explicit edge ids must be
    /// dense (`0..E`).
    pub fn build_from_faces(faces: &[FaceSpec], n_vertices: usize) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }
        for (fi, spec) in faces.iter().enumerate() {
            for &v in &spec.vertices {
                if v >= n_vertices {
                    return Err(MeshError::VertexOutOfRange {
                        face: fi,
                        vertex: v,
                        n_vertices,
                    });
                }
            }
        }
        let explicit = faces[0].edges.is_some();
        if faces.iter().any(|f| f.edges.is_some() != explicit) {
            return Err(MeshError::MixedEdgeSpecification);
        }

        let edge_table: Vec<[usize; 3]> = if explicit {
            faces.iter().map(|f| f.edges.unwrap()).collect()
        } else {
            infer_edges(faces)?
        };

        let mut raw_faces: Vec<[(usize, usize); 3]> = faces
            .iter()
            .zip(&edge_table)
            .map(|(f, e)| {
                [
                    (f.vertices[0], e[0]),
                    (f.vertices[1], e[1]),
                    (f.vertices[2], e[2]),
                ]
            })
            .collect();

        let n_edges = edge_table.iter().flatten().max().map_or(0, |m| m + 1);
        let mut incidences: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_edges];
        for (fi, f) in raw_faces.iter().enumerate() {
            for (c, &(_, e)) in f.iter().enumerate() {
                incidences[e].push((fi, c));
            }
        }
        for (e, inc) in incidences.iter().enumerate() {
            match inc.len() {
                2 => {}
                n if n > 2 => {
                    return Err(MeshError::NonManifoldEdge {
                        edge: e,
                        incidences: n,
                    })
                }
                n => {
                    return Err(MeshError::OpenSurface {
                        edge: e,
                        incidences: n,
                    })
                }
            }
        }

        // Endpoint agreement between the two sides of every edge.
        for (e, inc) in incidences.iter().enumerate() {
            let ends = |(fi, c): (usize, usize)| {
                let f = &raw_faces[fi];
                unordered(f[next(c)].0, f[prev(c)].0)
            };
            let (a, b) = (ends(inc[0]), ends(inc[1]));
            if a != b {
                return Err(MeshError::EdgeEndpointMismatch {
                    edge: e,
                    first: a,
                    second: b,
                });
            }
        }

        orient_coherently(&mut raw_faces, &incidences)?;

        let mut used = vec![false; n_vertices];
        for f in &raw_faces {
            for &(v, _) in f {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(MeshError::UnusedVertex(v));
        }

        let faces: Vec<Face> = raw_faces
            .iter()
            .map(|f| {
                let c = |k: usize| Corner {
                    vertex: VertexId(f[k].0),
                    opposite_edge: EdgeId(f[k].1),
                };
                [c(0), c(1), c(2)]
            })
            .collect();
        let mut edge_sides = vec![
            [Side {
                face: FaceId(0),
                corner: 0
            }; 2];
            n_edges
        ];
        let mut filled = vec![0usize; n_edges];
        for (fi, f) in faces.iter().enumerate() {
            for (c, corner) in f.iter().enumerate() {
                let e = corner.opposite_edge.0;
                edge_sides[e][filled[e]] = Side {
                    face: FaceId(fi),
                    corner: c,
                };
                filled[e] += 1;
            }
        }

        let tri = Triangulation {
            faces,
            edge_sides,
            n_vertices,
        };
        if !tri.is_connected() {
            return Err(MeshError::Disconnected);
        }
        Ok(tri)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edge_sides.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, f: FaceId) -> &Face {
        &self.faces[f.0]
    }

    pub fn sides(&self, e: EdgeId) -> [Side; 2] {
        self.edge_sides[e.0]
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeId> {
        (0..self.n_edges()).map(EdgeId)
    }

    /// V − E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices as i64 - self.n_edges() as i64 + self.n_faces() as i64
    }

    /// Endpoints of an edge, in the direction its first side traverses it.
    pub fn endpoints(&self, e: EdgeId) -> (VertexId, VertexId) {
        let s = self.edge_sides[e.0][0];
        let f = &self.faces[s.face.0];
        (f[next(s.corner)].vertex, f[prev(s.corner)].vertex)
    }

    pub fn is_loop(&self, e: EdgeId) -> bool {
        let (a, b) = self.endpoints(e);
        a == b
    }

    pub fn is_self_glued(&self, e: EdgeId) -> bool {
        let [a, b] = self.edge_sides[e.0];
        a.face == b.face
    }

    /// Every corner at `v`, once per corner occurrence.
    pub fn vertex_star(&self, v: VertexId) -> Vec<(FaceId, usize)> {
        let mut star = Vec::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for (c, corner) in f.iter().enumerate() {
                if corner.vertex == v {
                    star.push((FaceId(fi), c));
                }
            }
        }
        star
    }

    /// Labels the two faces around `e` for a flip.
    pub fn diamond(&self, e: EdgeId) -> Result<Diamond, MeshError> {
        if e.0 >= self.n_edges() {
            return Err(MeshError::NoSuchEdge(e.0));
        }
        if self.is_self_glued(e) {
            return Err(MeshError::UnflippableSelfGlued(e.0));
        }
        let [first, second] = self.edge_sides[e.0];
        let f1 = &self.faces[first.face.0];
        let f2 = &self.faces[second.face.0];
        let c1 = first.corner;
        let c2 = second.corner;
        Ok(Diamond {
            edge: e,
            first,
            second,
            k: f1[c1].vertex,
            i: f1[next(c1)].vertex,
            j: f1[prev(c1)].vertex,
            l: f2[c2].vertex,
            e_ki: f1[prev(c1)].opposite_edge,
            e_jk: f1[next(c1)].opposite_edge,
            e_il: f2[next(c2)].opposite_edge,
            e_lj: f2[prev(c2)].opposite_edge,
        })
    }

    /// Replaces triangles `kij`, `lji` by `kil`, `ljk`; the edge keeps its id.
    ///
    /// Both faces are rewritten in place. All other ids are unchanged.
    pub fn flip(&mut self, e: EdgeId) -> Result<Diamond, MeshError> {
        let d = self.diamond(e)?;
        let fa = d.first.face;
        let fb = d.second.face;
        let corner = |vertex, opposite_edge| Corner {
            vertex,
            opposite_edge,
        };
        // (k, i, l): opposite k is il, opposite i is the new edge, opposite l is ki.
        self.faces[fa.0] = [corner(d.k, d.e_il), corner(d.i, e), corner(d.l, d.e_ki)];
        // (l, j, k): opposite l is jk, opposite j is the new edge, opposite k is lj.
        self.faces[fb.0] = [corner(d.l, d.e_jk), corner(d.j, e), corner(d.k, d.e_lj)];

        let old_new = [
            (Side { face: fa, corner: prev(d.first.corner) }, Side { face: fa, corner: 2 }),
            (Side { face: fa, corner: next(d.first.corner) }, Side { face: fb, corner: 0 }),
            (Side { face: fb, corner: next(d.second.corner) }, Side { face: fa, corner: 0 }),
            (Side { face: fb, corner: prev(d.second.corner) }, Side { face: fb, corner: 2 }),
        ];
        let outer = [d.e_ki, d.e_jk, d.e_il, d.e_lj];
        // Snapshot first: an outer edge can border both faces.
        let snapshot: Vec<[Side; 2]> = outer.iter().map(|x| self.edge_sides[x.0]).collect();
        for (slot, (&oe, sides)) in outer.iter().zip(snapshot).enumerate() {
            let (old, new) = old_new[slot];
            let entry = &mut self.edge_sides[oe.0];
            if sides[0] == old {
                entry[0] = new;
            } else {
                debug_assert_eq!(sides[1], old);
                entry[1] = new;
            }
        }
        self.edge_sides[e.0] = [Side { face: fa, corner: 1 }, Side { face: fb, corner: 1 }];
        Ok(d)
    }

    /// Unordered vertex pair of every edge, indexed by edge id.
    pub fn edge_vertex_pairs(&self) -> Vec<(usize, usize)> {
        self.edges()
            .map(|e| {
                let (a, b) = self.endpoints(e);
                unordered(a.0, b.0)
            })
            .collect()
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_faces()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(f) = queue.pop_front() {
            for corner in &self.faces[f] {
                for s in self.edge_sides[corner.opposite_edge.0] {
                    if !seen[s.face.0] {
                        seen[s.face.0] = true;
                        queue.push_back(s.face.0);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Checks the internal consistency of the corner and side tables.
    pub fn check_consistency(&self) -> Result<(), String> {
        for (e, sides) in self.edge_sides.iter().enumerate() {
            for s in sides {
                let c = self.faces[s.face.0][s.corner];
                if c.opposite_edge.0 != e {
                    return Err(format!("side {s:?} of e{e} points at {}", c.opposite_edge));
                }
            }
            let [a, b] = *sides;
            let fa = &self.faces[a.face.0];
            let fb = &self.faces[b.face.0];
            if fa[next(a.corner)].vertex != fb[prev(b.corner)].vertex
                || fa[prev(a.corner)].vertex != fb[next(b.corner)].vertex
            {
                return Err(format!("sides of e{e} are not glued with opposite orientation"));
            }
        }
        let mut count = vec![0usize; self.n_edges()];
        for f in &self.faces {
            for c in f {
                count[c.opposite_edge.0] += 1;
            }
        }
        if let Some(e) = count.iter().position(|&c| c != 2) {
            return Err(format!("e{e} appears {} times in the corner table", count[e]));
        }
        Ok(())
    }
}

fn infer_edges(faces: &[FaceSpec]) -> Result<Vec<[usize; 3]>, MeshError> {
    let mut ids: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    let mut table = Vec::with_capacity(faces.len());
    for (fi, f) in faces.iter().enumerate() {
        let v = f.vertices;
        if v[0] == v[1] || v[1] == v[2] || v[0] == v[2] {
            return Err(MeshError::AmbiguousEdges(format!(
                "face {fi} repeats a vertex; give explicit edge ids"
            )));
        }
        let mut row = [0usize; 3];
        for c in 0..3 {
            let key = unordered(v[next(c)], v[prev(c)]);
            let next_id = ids.len();
            let entry = ids.entry(key).or_insert((next_id, 0));
            entry.1 += 1;
            if entry.1 > 2 {
                return Err(MeshError::AmbiguousEdges(format!(
                    "vertex pair {key:?} bounds more than two faces; give explicit edge ids"
                )));
            }
            row[c] = entry.0;
        }
        table.push(row);
    }
    Ok(table)
}

/// Reverses faces so that every non-loop edge is traversed in opposite
/// directions by its two sides. Loop edges carry no vertex information and
/// are taken as given.
fn orient_coherently(
    faces: &mut [[(usize, usize); 3]],
    incidences: &[Vec<(usize, usize)>],
) -> Result<(), MeshError> {
    // Direction in which the unreversed face traverses the edge opposite `c`.
    let direction = |f: usize, c: usize, faces: &[[(usize, usize); 3]]| {
        (faces[f][next(c)].0, faces[f][prev(c)].0)
    };

    let n = faces.len();
    let mut reversed: Vec<Option<bool>> = vec![None; n];
    for start in 0..n {
        if reversed[start].is_some() {
            continue;
        }
        reversed[start] = Some(false);
        let mut queue = VecDeque::from([start]);
        while let Some(f) = queue.pop_front() {
            let rev_f = reversed[f].unwrap();
            for c in 0..3 {
                let e = faces[f][c].1;
                let inc = &incidences[e];
                let (g, cg) = if inc[0] == (f, c) { inc[1] } else { inc[0] };
                let (a, b) = direction(f, c, faces);
                let (ga, gb) = direction(g, cg, faces);
                let constrained = a != b;
                // Same traversal direction before reversal means exactly one
                // of the two faces has to be reversed.
                let need_differ = constrained && (a, b) == (ga, gb);
                if g == f {
                    if need_differ {
                        return Err(MeshError::NonOrientable);
                    }
                    continue;
                }
                let want = rev_f ^ need_differ;
                match reversed[g] {
                    None => {
                        reversed[g] = Some(want);
                        queue.push_back(g);
                    }
                    Some(s) if constrained && s != want => return Err(MeshError::NonOrientable),
                    Some(_) => {}
                }
            }
        }
    }
    for (f, r) in faces.iter_mut().zip(reversed) {
        if r == Some(true) {
            f.swap(1, 2);
        }
    }
    Ok(())
}
