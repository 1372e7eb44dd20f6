//! Per-triangle and per-vertex geometry for Euclidean and hyperbolic metrics.
//!
//! Angles use half-angle (tangent) formulas on semiperimeter differences. The
//! differences are formed in Kahan's order on sorted sides, so needle-shaped
//! triangles and angles near `0` or `π` keep full relative precision. Flips
//! happen where two facing angles sum to about `π`, which is exactly where
//! `acos` of the law of cosines is worst conditioned.

use std::f64::consts::PI;

use thiserror::Error;

use crate::mesh::{EdgeId, FaceId, Triangulation};

/// Relative slack for the triangle inequalities.
pub const EPS_TRI: f64 = 1e-12;
/// Slack for Delaunay ties; ties count as Delaunay.
pub const EPS_DEL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeometryKind {
    Euclidean,
    Hyperbolic,
}

impl GeometryKind {
    /// Curvature of the background plane, the `λ` of Gauss-Bonnet.
    pub fn lambda(self) -> f64 {
        match self {
            GeometryKind::Euclidean => 0.0,
            GeometryKind::Hyperbolic => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GeometryKind::Euclidean => "euclidean",
            GeometryKind::Hyperbolic => "hyperbolic",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate triangle with sides ({0}, {1}, {2})")]
    DegenerateTriangle(f64, f64, f64),
    #[error("edge {edge} has length {value}; lengths must be positive and finite")]
    BadLength { edge: usize, value: f64 },
    #[error("metric has {got} lengths but the triangulation has {expected} edges")]
    LengthCountMismatch { expected: usize, got: usize },
    #[error("flipping edge {0} would produce a degenerate triangle")]
    FlipProducesDegenerate(usize),
    #[error("edge {0} is the diagonal of a non-convex quadrilateral")]
    NonConvexQuad(usize),
    #[error("triangle inequality fails on faces {0:?}")]
    Inadmissible(Vec<usize>),
}

impl GeometryError {
    pub fn code(&self) -> &'static str {
        match self {
            GeometryError::DegenerateTriangle(..) => "degenerate_triangle",
            GeometryError::BadLength { .. } => "bad_length",
            GeometryError::LengthCountMismatch { .. } => "length_count_mismatch",
            GeometryError::FlipProducesDegenerate(_) => "flip_produces_degenerate",
            GeometryError::NonConvexQuad(_) => "non_convex_quad",
            GeometryError::Inadmissible(_) => "inadmissible",
        }
    }
}

/// Geodesic edge lengths, indexed by [`EdgeId`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralMetric {
    kind: GeometryKind,
    lengths: Vec<f64>,
}

impl PolyhedralMetric {
    /// Checks that every length is positive and finite. Triangle inequalities
    /// are a property of the pair with a triangulation; see [`admissibility`].
    pub fn new(kind: GeometryKind, lengths: Vec<f64>) -> Result<Self, GeometryError> {
        if let Some((edge, &value)) = lengths
            .iter()
            .enumerate()
            .find(|(_, l)| !(l.is_finite() && **l > 0.0))
        {
            return Err(GeometryError::BadLength { edge, value });
        }
        Ok(Self { kind, lengths })
    }

    /// Like [`PolyhedralMetric::new`], also checking the edge count and the
    /// triangle inequalities on `t`.
    pub fn on(t: &Triangulation, kind: GeometryKind, lengths: Vec<f64>) -> Result<Self, GeometryError> {
        if lengths.len() != t.n_edges() {
            return Err(GeometryError::LengthCountMismatch {
                expected: t.n_edges(),
                got: lengths.len(),
            });
        }
        let m = Self::new(kind, lengths)?;
        let adm = admissibility(&m, t, EPS_TRI);
        if !adm.is_admissible() {
            return Err(GeometryError::Inadmissible(
                adm.violating_faces.iter().map(|f| f.0).collect(),
            ));
        }
        Ok(m)
    }

    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn length(&self, e: EdgeId) -> f64 {
        self.lengths[e.0]
    }

    pub(crate) fn set_length(&mut self, e: EdgeId, l: f64) {
        self.lengths[e.0] = l;
    }
}

/// Lengths of the edges opposite the three corners of `f`.
pub fn face_lengths(t: &Triangulation, m: &PolyhedralMetric, f: FaceId) -> [f64; 3] {
    t.face(f).map(|c| m.length(c.opposite_edge))
}

/// `[2s, 2(s-a), 2(s-b), 2(s-c)]`, each accurate to a few ulps.
fn doubled_semiperimeter_parts(a: f64, b: f64, c: f64) -> [f64; 4] {
    // Sort descending, remembering where each side went.
    let mut idx = [0usize, 1, 2];
    let v = [a, b, c];
    idx.sort_by(|&x, &y| v[y].total_cmp(&v[x]));
    let (x, y, z) = (v[idx[0]], v[idx[1]], v[idx[2]]);
    let total = x + (y + z);
    let mut parts = [0.0; 3];
    parts[idx[0]] = z - (x - y);
    parts[idx[1]] = z + (x - y);
    parts[idx[2]] = x + (y - z);
    [total, parts[0], parts[1], parts[2]]
}

/// Smallest of `b + c - a` and its permutations, relative to the perimeter.
pub fn triangle_margin(a: f64, b: f64, c: f64) -> f64 {
    let [p, pa, pb, pc] = doubled_semiperimeter_parts(a, b, c);
    pa.min(pb).min(pc) / p
}

pub fn is_valid_triangle(a: f64, b: f64, c: f64, eps_tri: f64) -> bool {
    [a, b, c].iter().all(|l| l.is_finite() && *l > 0.0) && triangle_margin(a, b, c) > eps_tri
}

/// Inner angles `(α, β, γ)` with `α` opposite `a`.
pub fn triangle_angles(kind: GeometryKind, a: f64, b: f64, c: f64) -> Result<[f64; 3], GeometryError> {
    if !is_valid_triangle(a, b, c, EPS_TRI) {
        return Err(GeometryError::DegenerateTriangle(a, b, c));
    }
    let [p, pa, pb, pc] = doubled_semiperimeter_parts(a, b, c);
    let angles = match kind {
        GeometryKind::Euclidean => [
            2.0 * (pb * pc).sqrt().atan2((p * pa).sqrt()),
            2.0 * (pa * pc).sqrt().atan2((p * pb).sqrt()),
            2.0 * (pa * pb).sqrt().atan2((p * pc).sqrt()),
        ],
        GeometryKind::Hyperbolic => {
            let [s, sa, sb, sc] = [p, pa, pb, pc].map(|x| (0.5 * x).sinh());
            [
                2.0 * (sb * sc).sqrt().atan2((s * sa).sqrt()),
                2.0 * (sa * sc).sqrt().atan2((s * sb).sqrt()),
                2.0 * (sa * sb).sqrt().atan2((s * sc).sqrt()),
            ]
        }
    };
    Ok(angles)
}

pub fn triangle_area(kind: GeometryKind, a: f64, b: f64, c: f64) -> Result<f64, GeometryError> {
    match kind {
        GeometryKind::Euclidean => {
            if !is_valid_triangle(a, b, c, EPS_TRI) {
                return Err(GeometryError::DegenerateTriangle(a, b, c));
            }
            let [p, pa, pb, pc] = doubled_semiperimeter_parts(a, b, c);
            Ok(0.25 * (p * pa * pb * pc).sqrt())
        }
        GeometryKind::Hyperbolic => {
            let [x, y, z] = triangle_angles(kind, a, b, c)?;
            Ok(PI - x - y - z)
        }
    }
}

/// Angle at every corner of every face, laid out like the corner table.
pub fn corner_angles(t: &Triangulation, m: &PolyhedralMetric) -> Result<Vec<[f64; 3]>, GeometryError> {
    (0..t.n_faces())
        .map(|f| {
            let [a, b, c] = face_lengths(t, m, FaceId(f));
            triangle_angles(m.kind(), a, b, c)
        })
        .collect()
}

/// `K_i = 2π - (sum of corner angles at i)`, counting every corner.
pub fn curvature(t: &Triangulation, m: &PolyhedralMetric) -> Result<Vec<f64>, GeometryError> {
    let angles = corner_angles(t, m)?;
    Ok(curvature_from_angles(t, &angles))
}

pub(crate) fn curvature_from_angles(t: &Triangulation, angles: &[[f64; 3]]) -> Vec<f64> {
    let mut cone = vec![0.0; t.n_vertices()];
    for (face, ang) in t.faces().iter().zip(angles) {
        for (corner, theta) in face.iter().zip(ang) {
            cone[corner.vertex.0] += theta;
        }
    }
    cone.into_iter().map(|a| 2.0 * PI - a).collect()
}

pub fn total_area(t: &Triangulation, m: &PolyhedralMetric) -> Result<f64, GeometryError> {
    (0..t.n_faces())
        .map(|f| {
            let [a, b, c] = face_lengths(t, m, FaceId(f));
            triangle_area(m.kind(), a, b, c)
        })
        .sum()
}

/// `ΣK - 2πχ + λ·Area`; zero up to round-off on any valid metric.
pub fn gauss_bonnet_residual(t: &Triangulation, m: &PolyhedralMetric) -> Result<f64, GeometryError> {
    let k: f64 = curvature(t, m)?.iter().sum();
    let chi = t.euler_characteristic() as f64;
    Ok(k - 2.0 * PI * chi + m.kind().lambda() * total_area(t, m)?)
}

/// Signed distance from the Delaunay boundary for edge `e`; negative means
/// the edge should be flipped.
///
/// Euclidean: `π - (θ_k + θ_l)` for the two angles facing `e`. Hyperbolic:
/// `(β + γ + β' + γ') - (α + α')`, where `α, α'` face `e` and the rest are
/// the other angles of the two triangles. A self-glued edge reports `+∞`.
pub fn delaunay_margin(t: &Triangulation, m: &PolyhedralMetric, e: EdgeId) -> Result<f64, GeometryError> {
    if t.is_self_glued(e) {
        return Ok(f64::INFINITY);
    }
    let [s1, s2] = t.sides(e);
    let [a1, b1, c1] = face_lengths(t, m, s1.face);
    let [a2, b2, c2] = face_lengths(t, m, s2.face);
    let ang1 = triangle_angles(m.kind(), a1, b1, c1)?;
    let ang2 = triangle_angles(m.kind(), a2, b2, c2)?;
    Ok(margin_from_angles(m.kind(), &ang1, s1.corner, &ang2, s2.corner))
}

/// Delaunay margin of an edge seen as corner `c1` of a face with angles `ang1`
/// and corner `c2` of a face with angles `ang2`.
pub fn margin_from_angles(
    kind: GeometryKind,
    ang1: &[f64; 3],
    c1: usize,
    ang2: &[f64; 3],
    c2: usize,
) -> f64 {
    let facing = ang1[c1] + ang2[c2];
    match kind {
        GeometryKind::Euclidean => PI - facing,
        GeometryKind::Hyperbolic => {
            let rest = ang1.iter().sum::<f64>() - ang1[c1] + ang2.iter().sum::<f64>() - ang2[c2];
            rest - facing
        }
    }
}

pub fn is_delaunay_edge(
    t: &Triangulation,
    m: &PolyhedralMetric,
    e: EdgeId,
    eps_del: f64,
) -> Result<bool, GeometryError> {
    Ok(delaunay_margin(t, m, e)? >= -eps_del)
}

/// The four sides and the diagonal `ij` of the quadrilateral around an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub ik: f64,
    pub il: f64,
    pub jk: f64,
    pub jl: f64,
    pub ij: f64,
}

/// Length of the other diagonal `kl`, measured by laying both triangles out
/// around their shared corner `i`.
///
/// Uses `l² = (a-b)² + 4ab sin²(θ/2)` (Euclidean) and
/// `sinh²(l/2) = sinh²((a-b)/2) + sinh a sinh b sin²(θ/2)` (hyperbolic), the
/// cancellation-free forms of the laws of cosines with `θ` the angle at `i`
/// summed over both triangles.
pub fn flip_length(kind: GeometryKind, q: Quad) -> Result<f64, GeometryError> {
    let theta_k = triangle_angles(kind, q.jk, q.ik, q.ij)?[0];
    let theta_l = triangle_angles(kind, q.jl, q.il, q.ij)?[0];
    let half = 0.5 * (theta_k + theta_l);
    let sin2 = half.sin().powi(2);
    let (a, b) = (q.ik, q.il);
    let kl = match kind {
        GeometryKind::Euclidean => ((a - b).powi(2) + 4.0 * a * b * sin2).sqrt(),
        GeometryKind::Hyperbolic => {
            let s = (0.5 * (a - b)).sinh().powi(2) + a.sinh() * b.sinh() * sin2;
            2.0 * s.sqrt().asinh()
        }
    };
    Ok(kl)
}

/// New diagonal length for flipping `e`. The quadrilateral must be strictly
/// convex at both ends of `e`, and both new faces valid.
pub fn flipped_edge_length(t: &Triangulation, m: &PolyhedralMetric, e: EdgeId) -> Result<f64, FlipLengthError> {
    let d = t.diamond(e).map_err(FlipLengthError::Mesh)?;
    let q = Quad {
        ik: m.length(d.e_ki),
        il: m.length(d.e_il),
        jk: m.length(d.e_jk),
        jl: m.length(d.e_lj),
        ij: m.length(e),
    };
    let at = |opp: f64, adj: f64| triangle_angles(m.kind(), opp, adj, q.ij).map(|a| a[0]);
    let convex = (|| -> Result<bool, GeometryError> {
        let at_i = at(q.jk, q.ik)? + at(q.jl, q.il)?;
        let at_j = at(q.ik, q.jk)? + at(q.il, q.jl)?;
        Ok(at_i < PI && at_j < PI)
    })()
    .map_err(FlipLengthError::Geometry)?;
    if !convex {
        return Err(FlipLengthError::Geometry(GeometryError::NonConvexQuad(e.0)));
    }
    let kl = flip_length(m.kind(), q).map_err(FlipLengthError::Geometry)?;
    if !is_valid_triangle(q.ik, q.il, kl, EPS_TRI) || !is_valid_triangle(q.jk, q.jl, kl, EPS_TRI) {
        return Err(FlipLengthError::Geometry(GeometryError::FlipProducesDegenerate(e.0)));
    }
    Ok(kl)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlipLengthError {
    #[error(transparent)]
    Mesh(crate::mesh::MeshError),
    #[error(transparent)]
    Geometry(GeometryError),
}

/// Faces whose side lengths fail the triangle inequalities.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Admissibility {
    pub violating_faces: Vec<FaceId>,
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        self.violating_faces.is_empty()
    }
}

pub fn admissibility(m: &PolyhedralMetric, t: &Triangulation, eps_tri: f64) -> Admissibility {
    let violating_faces = (0..t.n_faces())
        .map(FaceId)
        .filter(|&f| {
            let [a, b, c] = face_lengths(t, m, f);
            !is_valid_triangle(a, b, c, eps_tri)
        })
        .collect();
    Admissibility { violating_faces }
}

/// Vertex scaling by `du`, at fixed triangulation.
///
/// Euclidean: `l' = l·e^{u_i+u_j}`. Hyperbolic: `sinh(l'/2) = e^{u_i+u_j} sinh(l/2)`.
/// The result is returned even when some face becomes degenerate; the
/// admissibility report says which.
pub fn vertex_scale(
    m: &PolyhedralMetric,
    t: &Triangulation,
    du: &[f64],
) -> (PolyhedralMetric, Admissibility) {
    let scaled = scale_lengths(m, t, du);
    let adm = admissibility(&scaled, t, EPS_TRI);
    (scaled, adm)
}

pub(crate) fn scale_lengths(m: &PolyhedralMetric, t: &Triangulation, du: &[f64]) -> PolyhedralMetric {
    let lengths = t
        .edges()
        .map(|e| {
            let (a, b) = t.endpoints(e);
            scale_length(m.kind(), m.length(e), du[a.0] + du[b.0])
        })
        .collect();
    PolyhedralMetric {
        kind: m.kind(),
        lengths,
    }
}

pub fn scale_length(kind: GeometryKind, l: f64, sum_u: f64) -> f64 {
    match kind {
        GeometryKind::Euclidean => l * sum_u.exp(),
        GeometryKind::Hyperbolic => 2.0 * (sum_u.exp() * (0.5 * l).sinh()).asinh(),
    }
}
