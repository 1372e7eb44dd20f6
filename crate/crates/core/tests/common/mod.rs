#![allow(dead_code)]

use std::f64::consts::PI;

use astro_float::{BigFloat, Consts, RoundingMode};
use calabi_core::flow::{scale_with_surgery, state_violations, FlowConfig, FlowState, FlowTraceRecord};
use calabi_core::geometry::{GeometryKind, PolyhedralMetric};
use calabi_core::mesh::{FaceSpec, Triangulation};
use nalgebra::Matrix4;
use rand::Rng;

pub const E: GeometryKind = GeometryKind::Euclidean;
pub const H: GeometryKind = GeometryKind::Hyperbolic;

pub fn tetrahedron() -> Triangulation {
    let faces = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]].map(FaceSpec::implicit);
    Triangulation::build_from_faces(&faces, 4).unwrap()
}

/// One vertex, three edges; edge 0 is the diagonal.
pub fn one_vertex_torus() -> Triangulation {
    let faces = [
        FaceSpec::explicit([0, 0, 0], [0, 1, 2]),
        FaceSpec::explicit([0, 0, 0], [0, 1, 2]),
    ];
    Triangulation::build_from_faces(&faces, 1).unwrap()
}

/// Two triangles glued along all three sides: a sphere with three vertices.
pub fn pillow() -> Triangulation {
    let faces = [
        FaceSpec::explicit([0, 1, 2], [0, 1, 2]),
        FaceSpec::explicit([0, 2, 1], [0, 2, 1]),
    ];
    Triangulation::build_from_faces(&faces, 3).unwrap()
}

/// `n×n` periodic grid, each square split along its `(1,1)` diagonal.
pub fn grid_torus(n: usize) -> Triangulation {
    let v = |i: usize, j: usize| (i % n) + n * (j % n);
    let mut faces = Vec::new();
    for j in 0..n {
        for i in 0..n {
            faces.push(FaceSpec::implicit([v(i, j), v(i + 1, j), v(i + 1, j + 1)]));
            faces.push(FaceSpec::implicit([v(i, j), v(i + 1, j + 1), v(i, j + 1)]));
        }
    }
    Triangulation::build_from_faces(&faces, n * n).unwrap()
}

/// Unit squares with diagonals of length √2.
pub fn flat_grid_metric(t: &Triangulation) -> PolyhedralMetric {
    let n = (t.n_vertices() as f64).sqrt().round() as usize;
    let lengths = t
        .edges()
        .map(|e| {
            let (a, b) = t.endpoints(e);
            let (ai, aj) = (a.0 % n, a.0 / n);
            let (bi, bj) = (b.0 % n, b.0 / n);
            let diagonal = ai != bi && aj != bj;
            if diagonal {
                2f64.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    PolyhedralMetric::on(t, E, lengths).unwrap()
}

/// Genus two with one vertex: an octagon `a b a⁻¹ b⁻¹ c d c⁻¹ d⁻¹` fanned
/// from one corner. χ = -2.
pub fn genus_two() -> Triangulation {
    // Sides s0..s7 carry edges 0,1,0,1,2,3,2,3; diagonals to corners 2..6 are 4..8.
    let side = [0, 1, 0, 1, 2, 3, 2, 3];
    let diag = |m: usize| 2 + m;
    let mut faces = vec![FaceSpec::explicit([0, 0, 0], [side[1], diag(2), side[0]])];
    for m in 2..6 {
        faces.push(FaceSpec::explicit([0, 0, 0], [side[m], diag(m + 1), diag(m)]));
    }
    faces.push(FaceSpec::explicit([0, 0, 0], [side[6], side[7], diag(6)]));
    Triangulation::build_from_faces(&faces, 1).unwrap()
}

/// Lengths `base·(1 + jitter·r)` with `r` uniform in `[-1, 1]`; redrawn until
/// admissible.
pub fn jittered_metric(
    t: &Triangulation,
    kind: GeometryKind,
    base: &[f64],
    jitter: f64,
    rng: &mut impl Rng,
) -> PolyhedralMetric {
    loop {
        let lengths: Vec<f64> = base.iter().map(|b| b * (1.0 + jitter * rng.gen_range(-1.0..1.0))).collect();
        if let Ok(m) = PolyhedralMetric::on(t, kind, lengths) {
            return m;
        }
    }
}

pub fn random_zero_sum(n: usize, amplitude: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(-amplitude..amplitude)).collect();
    let mean = u.iter().sum::<f64>() / n as f64;
    u.iter_mut().for_each(|x| *x -= mean);
    let top = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if top > amplitude {
        u.iter_mut().for_each(|x| *x *= amplitude / top);
    }
    u
}

/// Applies `u` to a Delaunay metric, flipping along the way.
pub fn conformal_image(
    t: &Triangulation,
    m: &PolyhedralMetric,
    u: &[f64],
) -> (Triangulation, PolyhedralMetric, usize) {
    let (mut t, mut m) = (t.clone(), m.clone());
    let flips = scale_with_surgery(&mut t, &mut m, u, &FlowConfig::default()).unwrap();
    (t, m, flips)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// High-precision reference for triangle angles from the laws of cosines.
pub struct AngleOracle {
    cc: Consts,
    p: usize,
    rm: RoundingMode,
}

impl AngleOracle {
    pub fn new() -> Self {
        AngleOracle {
            cc: Consts::new().expect("constant cache"),
            p: 192,
            rm: RoundingMode::ToEven,
        }
    }

    fn big(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.p)
    }

    fn to_f64(x: &BigFloat) -> f64 {
        x.to_string().parse().expect("decimal output")
    }

    /// Angle opposite `a`.
    pub fn angle(&mut self, kind: GeometryKind, a: f64, b: f64, c: f64) -> f64 {
        let (p, rm) = (self.p, self.rm);
        let (a, b, c) = (self.big(a), self.big(b), self.big(c));
        let cos = match kind {
            GeometryKind::Euclidean => {
                let num = b.mul(&b, p, rm).add(&c.mul(&c, p, rm), p, rm).sub(&a.mul(&a, p, rm), p, rm);
                let den = self.big(2.0).mul(&b, p, rm).mul(&c, p, rm);
                num.div(&den, p, rm)
            }
            GeometryKind::Hyperbolic => {
                let ch = |x: &BigFloat, cc: &mut Consts| x.cosh(p, rm, cc);
                let sh = |x: &BigFloat, cc: &mut Consts| x.sinh(p, rm, cc);
                let num = ch(&b, &mut self.cc)
                    .mul(&ch(&c, &mut self.cc), p, rm)
                    .sub(&ch(&a, &mut self.cc), p, rm);
                let den = sh(&b, &mut self.cc).mul(&sh(&c, &mut self.cc), p, rm);
                num.div(&den, p, rm)
            }
        };
        Self::to_f64(&cos.acos(p, rm, &mut self.cc))
    }

    pub fn angles(&mut self, kind: GeometryKind, a: f64, b: f64, c: f64) -> [f64; 3] {
        [self.angle(kind, a, b, c), self.angle(kind, b, c, a), self.angle(kind, c, a, b)]
    }
}

/// A triangle with sides drawn log-uniformly from `[lo, hi]`, third side
/// uniform over the admissible range.
pub fn random_triangle(lo: f64, hi: f64, rng: &mut impl Rng) -> (f64, f64, f64) {
    let draw = |rng: &mut dyn rand::RngCore| (lo.ln() + (hi.ln() - lo.ln()) * rng.gen::<f64>()).exp();
    let a = draw(rng);
    let b = draw(rng);
    let c = (a - b).abs() + (2.0 * a.min(b)) * rng.gen::<f64>();
    (a, b, c)
}

fn hyperboloid_point(d_ij: f64, r_i: f64, r_j: f64, upper: bool) -> [f64; 3] {
    let x0 = r_i.cosh();
    let x1 = (x0 * d_ij.cosh() - r_j.cosh()) / d_ij.sinh();
    let x2 = (x0 * x0 - 1.0 - x1 * x1).max(0.0).sqrt();
    [x0, x1, if upper { x2 } else { -x2 }]
}

/// Lays the quadrilateral `i j k l` (diagonal `ij`) out on the hyperboloid
/// and asks whether `l` lies strictly inside the generalized circle through
/// `i, j, k`, i.e. on the same side of their plane as the origin.
pub fn hyperboloid_l_inside(ij: f64, ik: f64, jk: f64, il: f64, jl: f64) -> bool {
    let i = [1.0, 0.0, 0.0];
    let j = [ij.cosh(), ij.sinh(), 0.0];
    let k = hyperboloid_point(ij, ik, jk, true);
    let l = hyperboloid_point(ij, il, jl, false);
    let det = |last: [f64; 3]| {
        let rows = [i, j, k, last];
        Matrix4::from_fn(|r, c| if c < 3 { rows[r][c] } else { 1.0 }).determinant()
    };
    let (d_l, d_o) = (det(l), det([0.0; 3]));
    d_l * d_o > 0.0
}

/// Flow trace checks shared by every run.
#[derive(Debug, Default, Clone)]
pub struct InvariantLog {
    pub records: usize,
    pub energy_increases: usize,
    pub state_violations: Vec<String>,
    pub max_sum_u: f64,
    pub max_gauss_bonnet: f64,
}

impl InvariantLog {
    pub fn observe(&mut self, state: &FlowState, rec: &FlowTraceRecord, prev: Option<&FlowTraceRecord>, cfg: &FlowConfig) {
        self.records += 1;
        if let Some(p) = prev {
            if rec.calabi_energy > p.calabi_energy {
                self.energy_increases += 1;
            }
        }
        for v in state_violations(state, cfg, 1e-10) {
            self.state_violations.push(format!("t={}: {v}", rec.t));
        }
        if state.kind() == GeometryKind::Euclidean {
            self.max_sum_u = self.max_sum_u.max(rec.sum_u.abs());
        }
        let gb = calabi_core::geometry::gauss_bonnet_residual(state.triangulation(), state.metric()).unwrap();
        self.max_gauss_bonnet = self.max_gauss_bonnet.max(gb.abs());
    }

    pub fn clean(&self) -> bool {
        self.energy_increases == 0 && self.state_violations.is_empty() && self.max_sum_u < 1e-10
    }
}

pub fn regular_target(t: &Triangulation) -> Vec<f64> {
    vec![2.0 * PI * t.euler_characteristic() as f64 / t.n_vertices() as f64; t.n_vertices()]
}
