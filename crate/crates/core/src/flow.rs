//! Combinatorial Calabi flow with surgery.
//!
//! Time stepping is explicit Euler on `du/dt = -L (K - K*)` with a
//! backtracking line search that only accepts steps lowering
//! `C̄ = Σ (K_i - K*_i)²`. Within a step the scaling path is followed from
//! `u` to `u + du`; whenever an edge is about to stop being Delaunay the
//! path is halted at that instant (located by bisection), the edge is
//! flipped, and scaling resumes on the new triangulation. The accumulated
//! `u` therefore relates the initial and final metrics exactly.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::{
    admissibility, corner_angles, curvature, curvature_from_angles, flipped_edge_length, gauss_bonnet_residual,
    margin_from_angles, scale_lengths, total_area, FlipLengthError, GeometryError, GeometryKind, PolyhedralMetric,
    EPS_DEL, EPS_TRI,
};
use crate::laplacian::{jacobian, CurvatureJacobian, LaplacianError};
use crate::mesh::{EdgeId, MeshError, Triangulation};

/// Relative tolerance for the Euclidean target sum before projection.
pub const TARGET_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Convergence threshold on `max |K - K*|`.
    pub tol_curv: f64,
    pub t_max: f64,
    pub backtrack_factor: f64,
    pub grow_factor: f64,
    /// `None` means `100·E`.
    pub max_flips_per_sweep: Option<usize>,
    pub max_steps: usize,
    /// Caps `dt` at `fraction / ρ(L)²` (ρ bounded by Gershgorin) so the
    /// discrete trajectory tracks the continuous one instead of bouncing at
    /// the stability limit. `None` leaves only the energy test.
    pub stability_fraction: Option<f64>,
    pub eps_del: f64,
    pub eps_tri: f64,
    /// Record the smallest relevant eigenvalue of `L` with every step.
    pub track_spectrum: bool,
    /// Measure curvature and area before and after every flip.
    pub audit_surgery: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            dt_init: 1e-2,
            dt_min: 1e-8,
            dt_max: 1.0,
            tol_curv: 1e-10,
            t_max: 1e3,
            backtrack_factor: 0.5,
            grow_factor: 1.2,
            max_flips_per_sweep: None,
            max_steps: 1_000_000,
            stability_fraction: Some(0.5),
            eps_del: EPS_DEL,
            eps_tri: EPS_TRI,
            track_spectrum: false,
            audit_surgery: false,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |why: &str| Err(FlowError::InvalidConfig(why.to_string()));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !(pos(self.dt_min) && pos(self.dt_init) && pos(self.dt_max)) {
            return bad("step sizes must be positive and finite");
        }
        if !(self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return bad("need dt_min <= dt_init <= dt_max");
        }
        if !pos(self.tol_curv) {
            return bad("tol_curv must be positive");
        }
        if self.t_max.is_nan() || self.t_max <= 0.0 {
            return bad("t_max must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.grow_factor > 1.0 && self.grow_factor.is_finite()) {
            return bad("grow_factor must exceed 1");
        }
        if let Some(f) = self.stability_fraction {
            if !pos(f) {
                return bad("stability_fraction must be positive");
            }
        }
        if !(self.eps_del >= 0.0 && self.eps_tri >= 0.0) {
            return bad("tolerances must be non-negative");
        }
        Ok(())
    }

    fn flip_budget(&self, t: &Triangulation) -> usize {
        self.max_flips_per_sweep.unwrap_or(100 * t.n_edges())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("inadmissible target: {0}")]
    InadmissibleTarget(String),
    #[error("target has {got} entries for {expected} vertices")]
    TargetLength { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("more than {budget} flips in one sweep")]
    FlipBudgetExceeded { budget: usize },
    #[error("step size fell below dt_min at t = {t}: {reason}")]
    StepCollapse { t: f64, reason: String },
    #[error("not converged by t = {}: max |K - K*| = {}", .0.state.t(), .0.final_error)]
    NotConverged(Box<FlowRun>),
    #[error("need at least 10 trace records with positive energy, found {0}")]
    InsufficientTrace(usize),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Laplacian(#[from] LaplacianError),
}

impl FlowError {
    pub fn code(&self) -> &'static str {
        match self {
            FlowError::InadmissibleTarget(_) => "inadmissible_target",
            FlowError::TargetLength { .. } => "target_length",
            FlowError::InvalidConfig(_) => "invalid_config",
            FlowError::FlipBudgetExceeded { .. } => "flip_budget_exceeded",
            FlowError::StepCollapse { .. } => "step_collapse",
            FlowError::NotConverged(_) => "not_converged",
            FlowError::InsufficientTrace(_) => "insufficient_trace",
            FlowError::Mesh(e) => e.code(),
            FlowError::Geometry(e) => e.code(),
            FlowError::Laplacian(e) => e.code(),
        }
    }
}

impl From<FlipLengthError> for FlowError {
    fn from(e: FlipLengthError) -> Self {
        match e {
            FlipLengthError::Mesh(e) => FlowError::Mesh(e),
            FlipLengthError::Geometry(e) => FlowError::Geometry(e),
        }
    }
}

/// Worst changes seen across individual flips.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SurgeryAudit {
    pub flips: usize,
    pub max_curvature_change: f64,
    pub max_relative_area_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTraceRecord {
    pub t: f64,
    pub dt: f64,
    pub calabi_energy: f64,
    pub max_abs_curv_err: f64,
    pub flips_step: usize,
    pub flips_cum: usize,
    pub sum_u: f64,
    /// Euclidean: second-smallest eigenvalue of `L`; hyperbolic: smallest.
    pub min_eig_l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    t: f64,
    dt: f64,
    tri: Triangulation,
    metric: PolyhedralMetric,
    u: Vec<f64>,
    target: Vec<f64>,
    curvature: Vec<f64>,
    cumulative_flips: usize,
    audit: SurgeryAudit,
}

impl FlowState {
    /// Starts at `t = 0`, `u = 0`. The target is checked and, for Euclidean
    /// metrics, projected onto `ΣK* = 2πχ`. The triangulation is not yet made
    /// Delaunay; see [`make_delaunay`].
    pub fn new(
        tri: Triangulation,
        metric: PolyhedralMetric,
        target: &[f64],
        cfg: &FlowConfig,
    ) -> Result<Self, FlowError> {
        cfg.validate()?;
        if metric.lengths().len() != tri.n_edges() {
            return Err(GeometryError::LengthCountMismatch {
                expected: tri.n_edges(),
                got: metric.lengths().len(),
            }
            .into());
        }
        let adm = admissibility(&metric, &tri, cfg.eps_tri);
        if !adm.is_admissible() {
            return Err(GeometryError::Inadmissible(adm.violating_faces.iter().map(|f| f.0).collect()).into());
        }
        let target = validate_target(metric.kind(), &tri, target)?;
        let curvature = curvature(&tri, &metric)?;
        let n = tri.n_vertices();
        Ok(FlowState {
            t: 0.0,
            dt: cfg.dt_init,
            tri,
            metric,
            u: vec![0.0; n],
            target,
            curvature,
            cumulative_flips: 0,
            audit: SurgeryAudit::default(),
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Step size the next [`flow_step`] will try first.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn triangulation(&self) -> &Triangulation {
        &self.tri
    }

    pub fn metric(&self) -> &PolyhedralMetric {
        &self.metric
    }

    pub fn kind(&self) -> GeometryKind {
        self.metric.kind()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn cumulative_flips(&self) -> usize {
        self.cumulative_flips
    }

    pub fn audit(&self) -> SurgeryAudit {
        self.audit
    }

    pub fn calabi_energy(&self) -> f64 {
        calabi_energy(&self.curvature, &self.target)
    }

    pub fn max_curvature_error(&self) -> f64 {
        max_abs_diff(&self.curvature, &self.target)
    }

    pub fn sum_u(&self) -> f64 {
        self.u.iter().sum()
    }

    pub fn into_parts(self) -> (Triangulation, PolyhedralMetric, Vec<f64>) {
        (self.tri, self.metric, self.u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRun {
    pub state: FlowState,
    pub trace: Vec<FlowTraceRecord>,
    /// Flips made before the flow started.
    pub initial_flips: usize,
    pub steps: usize,
    pub final_error: f64,
}

fn calabi_energy(k: &[f64], target: &[f64]) -> f64 {
    k.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum()
}

fn max_abs_diff(k: &[f64], target: &[f64]) -> f64 {
    k.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Checks `K*_i < 2π` and the sum condition: `ΣK* = 2πχ` for Euclidean
/// metrics (the returned target is projected onto it) and `ΣK* > 2πχ` for
/// hyperbolic ones.
pub fn validate_target(kind: GeometryKind, t: &Triangulation, target: &[f64]) -> Result<Vec<f64>, FlowError> {
    let n = t.n_vertices();
    if target.len() != n {
        return Err(FlowError::TargetLength {
            expected: n,
            got: target.len(),
        });
    }
    if let Some((i, k)) = target.iter().enumerate().find(|(_, k)| !k.is_finite()) {
        return Err(FlowError::InadmissibleTarget(format!("K*[{i}] = {k} is not finite")));
    }
    if let Some((i, k)) = target.iter().enumerate().find(|(_, &k)| k >= 2.0 * PI) {
        return Err(FlowError::InadmissibleTarget(format!("K*[{i}] = {k} is not below 2π")));
    }
    let sum: f64 = target.iter().sum();
    let two_pi_chi = 2.0 * PI * t.euler_characteristic() as f64;
    match kind {
        GeometryKind::Euclidean => {
            let scale = target.iter().map(|k| k.abs()).sum::<f64>().max(1.0);
            let gap = sum - two_pi_chi;
            if gap.abs() > TARGET_SUM_TOL * scale {
                return Err(FlowError::InadmissibleTarget(format!(
                    "sum of K* is {sum}, Euclidean metrics need 2πχ = {two_pi_chi}"
                )));
            }
            let shift = gap / n as f64;
            Ok(target.iter().map(|k| k - shift).collect())
        }
        GeometryKind::Hyperbolic => {
            if sum <= two_pi_chi {
                return Err(FlowError::InadmissibleTarget(format!(
                    "sum of K* is {sum}, hyperbolic metrics need more than 2πχ = {two_pi_chi}"
                )));
            }
            Ok(target.to_vec())
        }
    }
}

/// `K* ≡ 2πχ/n` for Euclidean metrics, `K* ≡ 0` for hyperbolic ones (which
/// needs `χ < 0`).
pub fn constant_target(kind: GeometryKind, t: &Triangulation) -> Result<Vec<f64>, FlowError> {
    let n = t.n_vertices();
    let chi = t.euler_characteristic();
    match kind {
        GeometryKind::Euclidean => Ok(vec![2.0 * PI * chi as f64 / n as f64; n]),
        GeometryKind::Hyperbolic if chi < 0 => Ok(vec![0.0; n]),
        GeometryKind::Hyperbolic => Err(FlowError::InadmissibleTarget(format!(
            "zero hyperbolic curvature needs χ < 0, surface has χ = {chi}"
        ))),
    }
}

/// First edge (ascending id) whose margin is below `-eps_del`, given the
/// corner angles of every face.
fn first_non_delaunay(t: &Triangulation, kind: GeometryKind, angles: &[[f64; 3]], eps_del: f64) -> Option<EdgeId> {
    t.edges().find(|&e| {
        if t.is_self_glued(e) {
            return false;
        }
        let [s1, s2] = t.sides(e);
        margin_from_angles(kind, &angles[s1.face.0], s1.corner, &angles[s2.face.0], s2.corner) < -eps_del
    })
}

/// Non-Delaunay edges in ascending order.
pub fn non_delaunay_edges(t: &Triangulation, m: &PolyhedralMetric, eps_del: f64) -> Result<Vec<EdgeId>, GeometryError> {
    let angles = corner_angles(t, m)?;
    Ok(t.edges()
        .filter(|&e| {
            if t.is_self_glued(e) {
                return false;
            }
            let [s1, s2] = t.sides(e);
            margin_from_angles(m.kind(), &angles[s1.face.0], s1.corner, &angles[s2.face.0], s2.corner) < -eps_del
        })
        .collect())
}

fn flip_edge(
    t: &mut Triangulation,
    m: &mut PolyhedralMetric,
    e: EdgeId,
    audit: Option<&mut SurgeryAudit>,
) -> Result<(), FlowError> {
    let kl = flipped_edge_length(t, m, e)?;
    let before = match audit {
        Some(_) => Some((curvature(t, m)?, total_area(t, m)?)),
        None => None,
    };
    t.flip(e)?;
    m.set_length(e, kl);
    if let (Some(a), Some((k0, area0))) = (audit, before) {
        let k1 = curvature(t, m)?;
        let area1 = total_area(t, m)?;
        a.flips += 1;
        a.max_curvature_change = a.max_curvature_change.max(max_abs_diff(&k0, &k1));
        let rel = if area0 > 0.0 { (area1 - area0).abs() / area0 } else { (area1 - area0).abs() };
        a.max_relative_area_change = a.max_relative_area_change.max(rel);
    }
    Ok(())
}

/// Lawson flips in ascending edge order, restarting after each flip, until
/// every edge is Delaunay. Returns the number of flips.
pub fn make_delaunay_in(
    t: &mut Triangulation,
    m: &mut PolyhedralMetric,
    cfg: &FlowConfig,
    mut audit: Option<&mut SurgeryAudit>,
) -> Result<usize, FlowError> {
    let budget = cfg.flip_budget(t);
    let mut flips = 0;
    loop {
        let angles = corner_angles(t, m)?;
        let Some(e) = first_non_delaunay(t, m.kind(), &angles, cfg.eps_del) else {
            return Ok(flips);
        };
        if flips == budget {
            return Err(FlowError::FlipBudgetExceeded { budget });
        }
        flip_edge(t, m, e, audit.as_deref_mut())?;
        flips += 1;
    }
}

pub fn make_delaunay(state: &mut FlowState, cfg: &FlowConfig) -> Result<usize, FlowError> {
    let audit = cfg.audit_surgery.then_some(&mut state.audit);
    let flips = make_delaunay_in(&mut state.tri, &mut state.metric, cfg, audit)?;
    state.cumulative_flips += flips;
    state.curvature = curvature(&state.tri, &state.metric)?;
    Ok(flips)
}

#[derive(Debug)]
enum ScaleFailure {
    /// The path hits a degenerate triangle that no flip can avoid, or a flip
    /// would create one.
    Degenerate(String),
    Fatal(FlowError),
}

impl From<FlowError> for ScaleFailure {
    fn from(e: FlowError) -> Self {
        ScaleFailure::Fatal(e)
    }
}

/// Whether the metric is admissible and Delaunay; `Err` carries the first
/// failing edge, or `None` if a face is degenerate.
fn delaunay_status(t: &Triangulation, m: &PolyhedralMetric, cfg: &FlowConfig) -> Result<(), Option<EdgeId>> {
    if !admissibility(m, t, cfg.eps_tri).is_admissible() {
        return Err(None);
    }
    let angles = corner_angles(t, m).map_err(|_| None)?;
    match first_non_delaunay(t, m.kind(), &angles, cfg.eps_del) {
        None => Ok(()),
        Some(e) => Err(Some(e)),
    }
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| s * x).collect()
}

/// Scales a Delaunay metric by `du` along the straight path `s·du`,
/// `s ∈ [0, 1]`, flipping edges at the instants they leave the Delaunay cell.
fn scale_with_surgery_inner(
    t: &mut Triangulation,
    m: &mut PolyhedralMetric,
    du: &[f64],
    cfg: &FlowConfig,
    mut audit: Option<&mut SurgeryAudit>,
) -> Result<usize, ScaleFailure> {
    let budget = cfg.flip_budget(t);
    let mut remaining = 1.0_f64;
    let mut flips = 0;
    loop {
        let full = scale_lengths(m, t, &scaled(du, remaining));
        let failing = match delaunay_status(t, &full, cfg) {
            Ok(()) => {
                *m = full;
                return Ok(flips);
            }
            Err(f) => f,
        };
        // The status at `lo` is good, at `hi` bad.
        let (mut lo, mut hi) = (0.0_f64, remaining);
        let mut bad_edge = failing;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match delaunay_status(t, &scale_lengths(m, t, &scaled(du, mid)), cfg) {
                Ok(()) => lo = mid,
                Err(f) => {
                    hi = mid;
                    bad_edge = f;
                }
            }
        }
        let Some(e) = bad_edge else {
            return Err(ScaleFailure::Degenerate("a triangle degenerates along the scaling path".into()));
        };
        if lo > 0.0 {
            *m = scale_lengths(m, t, &scaled(du, lo));
            remaining -= lo;
        }
        if flips == budget {
            return Err(FlowError::FlipBudgetExceeded { budget }.into());
        }
        match flip_edge(t, m, e, audit.as_deref_mut()) {
            Ok(()) => flips += 1,
            Err(FlowError::Geometry(g)) => return Err(ScaleFailure::Degenerate(g.to_string())),
            Err(other) => return Err(other.into()),
        }
    }
}

/// Vertex scaling by `du` that keeps the triangulation Delaunay, flipping
/// edges where the scaling path leaves a Delaunay cell. The input must be
/// admissible and Delaunay. Returns the number of flips.
pub fn scale_with_surgery(
    t: &mut Triangulation,
    m: &mut PolyhedralMetric,
    du: &[f64],
    cfg: &FlowConfig,
) -> Result<usize, FlowError> {
    if du.len() != t.n_vertices() {
        return Err(FlowError::TargetLength {
            expected: t.n_vertices(),
            got: du.len(),
        });
    }
    match scale_with_surgery_inner(t, m, du, cfg, None) {
        Ok(n) => Ok(n),
        Err(ScaleFailure::Fatal(e)) => Err(e),
        Err(ScaleFailure::Degenerate(why)) => Err(FlowError::StepCollapse { t: 0.0, reason: why }),
    }
}

/// `-L (K - K*)`. Euclidean velocities are projected to zero sum, which only
/// removes rounding since `L𝟏 = 0`.
pub fn flow_velocity(state: &FlowState) -> Result<Vec<f64>, FlowError> {
    let l = jacobian(&state.tri, &state.metric)?;
    velocity_from(state, &l)
}

fn velocity_from(state: &FlowState, l: &CurvatureJacobian) -> Result<Vec<f64>, FlowError> {
    let err: Vec<f64> = state.curvature.iter().zip(&state.target).map(|(k, s)| k - s).collect();
    let mut v = l.apply_laplacian(&err)?;
    if state.kind() == GeometryKind::Euclidean {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
    }
    Ok(v)
}

/// Upper bound on the spectral radius: the largest absolute row sum.
fn gershgorin_radius(l: &CurvatureJacobian) -> f64 {
    l.matrix()
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn spectral_floor(t: &Triangulation, m: &PolyhedralMetric) -> Result<f64, FlowError> {
    let l = jacobian(t, m)?;
    Ok(match m.kind() {
        GeometryKind::Euclidean => l.second_smallest_eigenvalue().unwrap_or(0.0),
        GeometryKind::Hyperbolic => l.min_eigenvalue(),
    })
}

fn record_for(state: &FlowState, dt: f64, flips_step: usize, cfg: &FlowConfig) -> Result<FlowTraceRecord, FlowError> {
    let min_eig_l = if cfg.track_spectrum {
        Some(spectral_floor(&state.tri, &state.metric)?)
    } else {
        None
    };
    Ok(FlowTraceRecord {
        t: state.t,
        dt,
        calabi_energy: state.calabi_energy(),
        max_abs_curv_err: state.max_curvature_error(),
        flips_step,
        flips_cum: state.cumulative_flips,
        sum_u: state.sum_u(),
        min_eig_l,
    })
}

/// One accepted explicit Euler step. Returns the trace record of the new
/// state; its `dt` is the step actually taken.
pub fn flow_step(state: &mut FlowState, cfg: &FlowConfig) -> Result<FlowTraceRecord, FlowError> {
    let l = jacobian(&state.tri, &state.metric)?;
    let v = velocity_from(state, &l)?;
    let c_old = state.calabi_energy();
    let n = state.u.len() as f64;
    let floor = cfg.tol_curv * cfg.tol_curv * n;
    let mut dt = state.dt.clamp(cfg.dt_min, cfg.dt_max);
    if let Some(fraction) = cfg.stability_fraction {
        let rho = gershgorin_radius(&l);
        if rho > 0.0 {
            dt = dt.min(fraction / (rho * rho)).max(cfg.dt_min);
        }
    }
    if v.iter().all(|&x| x == 0.0) {
        state.t += dt;
        return record_for(state, dt, 0, cfg);
    }
    loop {
        let du = scaled(&v, dt);
        let mut tri = state.tri.clone();
        let mut metric = state.metric.clone();
        let mut audit = state.audit;
        let audit_ref = cfg.audit_surgery.then_some(&mut audit);
        let reason = match scale_with_surgery_inner(&mut tri, &mut metric, &du, cfg, audit_ref) {
            Ok(flips) => {
                let k = curvature(&tri, &metric)?;
                let c_new = calabi_energy(&k, &state.target);
                if c_new < c_old || (c_new <= c_old.max(floor) && c_old < floor) {
                    state.tri = tri;
                    state.metric = metric;
                    state.audit = audit;
                    state.curvature = k;
                    state.u.iter_mut().zip(&du).for_each(|(u, d)| *u += d);
                    state.t += dt;
                    state.cumulative_flips += flips;
                    state.dt = (dt * cfg.grow_factor).min(cfg.dt_max);
                    return record_for(state, dt, flips, cfg);
                }
                format!("energy did not decrease ({c_new:e} >= {c_old:e})")
            }
            Err(ScaleFailure::Degenerate(why)) => why,
            Err(ScaleFailure::Fatal(e)) => return Err(e),
        };
        dt *= cfg.backtrack_factor;
        if dt < cfg.dt_min {
            return Err(FlowError::StepCollapse { t: state.t, reason });
        }
    }
}

pub fn run_flow(
    tri: Triangulation,
    metric: PolyhedralMetric,
    target: &[f64],
    cfg: &FlowConfig,
) -> Result<FlowRun, FlowError> {
    run_flow_observed(tri, metric, target, cfg, |_, _| {})
}

/// [`run_flow`] that also hands every recorded state to `observe`.
pub fn run_flow_observed(
    tri: Triangulation,
    metric: PolyhedralMetric,
    target: &[f64],
    cfg: &FlowConfig,
    mut observe: impl FnMut(&FlowState, &FlowTraceRecord),
) -> Result<FlowRun, FlowError> {
    let mut state = FlowState::new(tri, metric, target, cfg)?;
    let initial_flips = make_delaunay(&mut state, cfg)?;
    let first = record_for(&state, 0.0, initial_flips, cfg)?;
    observe(&state, &first);
    let mut trace = vec![first];
    let mut steps = 0;
    loop {
        let err = state.max_curvature_error();
        if err < cfg.tol_curv {
            return Ok(FlowRun {
                state,
                trace,
                initial_flips,
                steps,
                final_error: err,
            });
        }
        if state.t >= cfg.t_max || steps >= cfg.max_steps {
            return Err(FlowError::NotConverged(Box::new(FlowRun {
                state,
                trace,
                initial_flips,
                steps,
                final_error: err,
            })));
        }
        let rec = flow_step(&mut state, cfg)?;
        observe(&state, &rec);
        trace.push(rec);
        steps += 1;
    }
}

/// Least-squares line through `(t, ln C̄)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits the last half of the records with positive energy; needs at least
/// ten of them.
pub fn fit_decay(trace: &[FlowTraceRecord]) -> Result<DecayFit, FlowError> {
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .filter(|r| r.calabi_energy > 0.0)
        .map(|r| (r.t, r.calabi_energy.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(FlowError::InsufficientTrace(pts.len()));
    }
    let tail = &pts[pts.len() / 2..];
    let n = tail.len() as f64;
    let mt = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = tail.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = tail.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = tail.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return Err(FlowError::InsufficientTrace(pts.len()));
    }
    let slope = sty / stt;
    let r_squared = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Ok(DecayFit {
        slope,
        intercept: my - slope * mt,
        r_squared,
        points: tail.len(),
    })
}

pub fn estimate_decay_rate(trace: &[FlowTraceRecord]) -> Result<f64, FlowError> {
    fit_decay(trace).map(|f| f.slope)
}

/// Checks a recorded state: admissible, Delaunay, Gauss-Bonnet. Returns the
/// list of problems found.
pub fn state_violations(state: &FlowState, cfg: &FlowConfig, gb_tol: f64) -> Vec<String> {
    let mut out = Vec::new();
    let adm = admissibility(&state.metric, &state.tri, cfg.eps_tri);
    if !adm.is_admissible() {
        out.push(format!("inadmissible faces {:?}", adm.violating_faces));
        return out;
    }
    match corner_angles(&state.tri, &state.metric) {
        Ok(angles) => {
            if let Some(e) = first_non_delaunay(&state.tri, state.kind(), &angles, cfg.eps_del) {
                out.push(format!("edge {e} is not Delaunay"));
            }
            let k = curvature_from_angles(&state.tri, &angles);
            if max_abs_diff(&k, &state.curvature) > 1e-12 {
                out.push("cached curvature is stale".into());
            }
        }
        Err(e) => out.push(e.to_string()),
    }
    match gauss_bonnet_residual(&state.tri, &state.metric) {
        Ok(r) if r.abs() < gb_tol => {}
        Ok(r) => out.push(format!("Gauss-Bonnet residual {r:e}")),
        Err(e) => out.push(e.to_string()),
    }
    out
}
