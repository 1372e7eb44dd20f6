//! The curvature Jacobian `L = ∂K/∂u` and the discrete Laplacian `Δ = -L`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::geometry::{corner_angles, face_lengths, GeometryError, GeometryKind, PolyhedralMetric};
use crate::mesh::{EdgeId, FaceId, Triangulation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LaplacianError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("vector has {got} entries, operator is {expected}x{expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("expected a {expected} metric")]
    WrongGeometry { expected: &'static str },
}

impl LaplacianError {
    pub fn code(&self) -> &'static str {
        match self {
            LaplacianError::Geometry(e) => e.code(),
            LaplacianError::DimensionMismatch { .. } => "dimension_mismatch",
            LaplacianError::WrongGeometry { .. } => "wrong_geometry",
        }
    }
}

/// Dense symmetric `n×n` Jacobian of the vertex curvatures.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureJacobian {
    kind: GeometryKind,
    matrix: DMatrix<f64>,
}

impl CurvatureJacobian {
    pub fn kind(&self) -> GeometryKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `Δf = -L f`.
    pub fn apply_laplacian(&self, f: &[f64]) -> Result<Vec<f64>, LaplacianError> {
        if f.len() != self.dim() {
            return Err(LaplacianError::DimensionMismatch {
                expected: self.dim(),
                got: f.len(),
            });
        }
        let v = -(&self.matrix * DVector::from_column_slice(f));
        Ok(v.iter().copied().collect())
    }

    /// Eigenvalues in ascending order.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.spectrum().first().copied().unwrap_or(0.0)
    }

    /// Smallest eigenvalue above the constant kernel in the Euclidean case.
    pub fn second_smallest_eigenvalue(&self) -> Option<f64> {
        self.spectrum().get(1).copied()
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }
}

/// `cot θ_k + cot θ_l` over the two angles facing `e`.
pub fn cotan_weight(t: &Triangulation, m: &PolyhedralMetric, e: EdgeId) -> Result<f64, LaplacianError> {
    if m.kind() != GeometryKind::Euclidean {
        return Err(LaplacianError::WrongGeometry {
            expected: "euclidean",
        });
    }
    let mut w = 0.0;
    for side in t.sides(e) {
        let [a, b, c] = face_lengths(t, m, side.face);
        let theta = crate::geometry::triangle_angles(m.kind(), a, b, c)?[side.corner];
        w += 1.0 / theta.tan();
    }
    Ok(w)
}

pub fn jacobian(t: &Triangulation, m: &PolyhedralMetric) -> Result<CurvatureJacobian, LaplacianError> {
    match m.kind() {
        GeometryKind::Euclidean => jacobian_euclidean(t, m),
        GeometryKind::Hyperbolic => jacobian_hyperbolic(t, m),
    }
}

/// Off-diagonal entries are minus the summed cotangent weights of the edges
/// joining two vertices; the diagonal makes every row sum to zero. Loops only
/// touch the diagonal and so drop out.
pub fn jacobian_euclidean(t: &Triangulation, m: &PolyhedralMetric) -> Result<CurvatureJacobian, LaplacianError> {
    if m.kind() != GeometryKind::Euclidean {
        return Err(LaplacianError::WrongGeometry {
            expected: "euclidean",
        });
    }
    let angles = corner_angles(t, m)?;
    let n = t.n_vertices();
    let mut l = DMatrix::zeros(n, n);
    for e in t.edges() {
        let (a, b) = t.endpoints(e);
        if a == b {
            continue;
        }
        let w: f64 = t
            .sides(e)
            .iter()
            .map(|s| 1.0 / angles[s.face.0][s.corner].tan())
            .sum();
        l[(a.0, b.0)] -= w;
        l[(b.0, a.0)] -= w;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| l[(i, j)]).sum();
        l[(i, i)] = -off;
    }
    Ok(CurvatureJacobian {
        kind: GeometryKind::Euclidean,
        matrix: l,
    })
}

/// Chain rule per face: angle derivatives with respect to the three side
/// lengths (hyperbolic law of cosines), times `∂l/∂u = 2 tanh(l/2)` for each
/// endpoint of each side.
pub fn jacobian_hyperbolic(t: &Triangulation, m: &PolyhedralMetric) -> Result<CurvatureJacobian, LaplacianError> {
    if m.kind() != GeometryKind::Hyperbolic {
        return Err(LaplacianError::WrongGeometry {
            expected: "hyperbolic",
        });
    }
    let angles = corner_angles(t, m)?;
    let n = t.n_vertices();
    let mut l = DMatrix::zeros(n, n);
    for (fi, face) in t.faces().iter().enumerate() {
        let len = face_lengths(t, m, FaceId(fi));
        let ang = angles[fi];
        let local = hyperbolic_face_jacobian(len, ang);
        for c in 0..3 {
            for d in 0..3 {
                l[(face[c].vertex.0, face[d].vertex.0)] -= local[c][d];
            }
        }
    }
    Ok(CurvatureJacobian {
        kind: GeometryKind::Hyperbolic,
        matrix: l,
    })
}

/// `out[c][d] = ∂θ_c / ∂u_d`, treating the three corners as distinct.
fn hyperbolic_face_jacobian(len: [f64; 3], ang: [f64; 3]) -> [[f64; 3]; 3] {
    let sh = len.map(f64::sinh);
    // dtheta_dlen[c][e]: derivative of the angle at corner c w.r.t. the side
    // opposite corner e.
    let mut dtheta_dlen = [[0.0; 3]; 3];
    for c in 0..3 {
        let (c1, c2) = ((c + 1) % 3, (c + 2) % 3);
        let own = sh[c] / (sh[c1] * sh[c2] * ang[c].sin());
        dtheta_dlen[c][c] = own;
        dtheta_dlen[c][c1] = -own * ang[c2].cos();
        dtheta_dlen[c][c2] = -own * ang[c1].cos();
    }
    let dlen_du = len.map(|x| 2.0 * (0.5 * x).tanh());
    let mut out = [[0.0; 3]; 3];
    for c in 0..3 {
        for d in 0..3 {
            // Sides touching corner d are the ones not opposite it.
            out[c][d] = (0..3)
                .filter(|&e| e != d)
                .map(|e| dtheta_dlen[c][e] * dlen_du[e])
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{curvature, scale_lengths};
    use crate::mesh::tests::{pillow, tetrahedron, two_triangle_torus};
    use approx::assert_relative_eq;
    use std::f64::consts::SQRT_2;

    const E: GeometryKind = GeometryKind::Euclidean;
    const H: GeometryKind = GeometryKind::Hyperbolic;

    fn fd_jacobian(t: &Triangulation, m: &PolyhedralMetric, h: f64) -> DMatrix<f64> {
        let n = t.n_vertices();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut du = vec![0.0; n];
            du[j] = h;
            let kp = curvature(t, &scale_lengths(m, t, &du)).unwrap();
            du[j] = -h;
            let km = curvature(t, &scale_lengths(m, t, &du)).unwrap();
            for i in 0..n {
                out[(i, j)] = (kp[i] - km[i]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn cotan_weights() {
        let t = tetrahedron();
        let m = PolyhedralMetric::on(&t, E, vec![1.0; 6]).unwrap();
        assert_relative_eq!(cotan_weight(&t, &m, EdgeId(0)).unwrap(), 2.0 / 3f64.sqrt(), epsilon = 1e-15);

        let torus = two_triangle_torus();
        let m = PolyhedralMetric::on(&torus, E, vec![SQRT_2, 1.0, 1.0]).unwrap();
        assert!(cotan_weight(&torus, &m, EdgeId(0)).unwrap().abs() < 1e-15);

        let m = PolyhedralMetric::on(&torus, E, vec![1.6, 1.0, 1.0]).unwrap();
        let theta = (-0.28f64).acos();
        let w = cotan_weight(&torus, &m, EdgeId(0)).unwrap();
        assert_relative_eq!(w, 2.0 / theta.tan(), epsilon = 1e-14);
        assert_relative_eq!(w, -7.0 / 12.0, epsilon = 1e-14);
    }

    #[test]
    fn tetrahedron_jacobian() {
        let t = tetrahedron();
        let m = PolyhedralMetric::on(&t, E, vec![1.0; 6]).unwrap();
        let l = jacobian_euclidean(&t, &m).unwrap();
        let w = 2.0 / 3f64.sqrt();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 3.0 * w } else { -w };
                assert_relative_eq!(l.matrix()[(i, j)], expected, epsilon = 1e-14);
            }
        }
        assert_relative_eq!(l.matrix()[(0, 0)], 2.0 * 3f64.sqrt(), epsilon = 1e-14);
        let col = l.apply_laplacian(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let expected = [-2.0 * 3f64.sqrt(), w, w, w];
        for (a, b) in col.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
        for x in l.apply_laplacian(&[1.0; 4]).unwrap() {
            assert!(x.abs() < 1e-14);
        }
        let ev = l.spectrum();
        assert!(ev[0].abs() < 1e-12);
        for x in &ev[1..] {
            assert_relative_eq!(*x, 4.0 * w, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_vertex_torus_has_zero_jacobian() {
        let t = two_triangle_torus();
        let m = PolyhedralMetric::on(&t, E, vec![SQRT_2, 1.0, 1.0]).unwrap();
        let l = jacobian(&t, &m).unwrap();
        assert_eq!(l.dim(), 1);
        assert_eq!(l.matrix()[(0, 0)], 0.0);
        assert_eq!(l.min_eigenvalue(), 0.0);
        assert_eq!(l.second_smallest_eigenvalue(), None);
    }

    #[test]
    fn dimension_mismatch() {
        let t = tetrahedron();
        let m = PolyhedralMetric::on(&t, E, vec![1.0; 6]).unwrap();
        let l = jacobian(&t, &m).unwrap();
        assert_eq!(
            l.apply_laplacian(&[0.0; 3]).unwrap_err(),
            LaplacianError::DimensionMismatch { expected: 4, got: 3 }
        );
        assert_eq!(l.apply_laplacian(&[0.0; 4]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn hyperbolic_pillow_jacobian() {
        let t = pillow();
        let m = PolyhedralMetric::on(&t, H, vec![1.0; 3]).unwrap();
        let l = jacobian_hyperbolic(&t, &m).unwrap();
        assert!(l.max_asymmetry() < 1e-14);
        assert!(l.min_eigenvalue() > 0.0);
        let ones = DVector::from_element(3, 1.0);
        assert!((ones.transpose() * l.matrix() * &ones)[0] > 0.0);
        let fd = fd_jacobian(&t, &m, 1e-5);
        assert!((l.matrix() - &fd).amax() < 1e-8);
        // Growing u lengthens edges, which shrinks angles: K goes up.
        let k0 = curvature(&t, &m).unwrap();
        let k1 = curvature(&t, &scale_lengths(&m, &t, &[1e-3; 3])).unwrap();
        assert!(k1.iter().zip(&k0).all(|(a, b)| a > b));
    }

    #[test]
    fn endpoint_length_factor() {
        // d/du of l(u) = 2 asinh(e^u sinh 1) at u = 0.
        let h = 1e-6;
        let l = |u: f64| crate::geometry::scale_length(H, 2.0, u);
        let fd = (l(h) - l(-h)) / (2.0 * h);
        assert_relative_eq!(fd, 2.0 * 1f64.tanh(), epsilon = 1e-9);
        assert_relative_eq!(2.0 * 1f64.tanh(), 1.52318, epsilon = 1e-5);
    }

    #[test]
    fn euclidean_matches_finite_differences_on_tetrahedron() {
        let t = tetrahedron();
        let m = PolyhedralMetric::on(&t, E, vec![1.0, 1.1, 0.9, 1.2, 0.95, 1.05]).unwrap();
        let l = jacobian_euclidean(&t, &m).unwrap();
        let fd = fd_jacobian(&t, &m, 1e-5);
        assert!((l.matrix() - fd).amax() < 1e-8);
    }
}
