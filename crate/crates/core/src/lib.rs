//! Discrete conformal metrics with prescribed curvature on closed surfaces.
//!
//! Polyhedral metrics (Euclidean or hyperbolic) live on Δ-complex
//! triangulations. The combinatorial Calabi flow `du/dt = -L (K - K*)` drives
//! the vertex curvatures `K` to a target `K*` by vertex scaling, flipping edges
//! whenever the triangulation stops being Delaunay.

pub mod flow;
pub mod geometry;
pub mod io;
pub mod laplacian;
pub mod mesh;

pub use flow::{run_flow, FlowConfig, FlowError, FlowRun, FlowState, FlowTraceRecord};
pub use geometry::{GeometryKind, PolyhedralMetric};
pub use laplacian::CurvatureJacobian;
pub use mesh::{EdgeId, FaceId, FaceSpec, Triangulation, VertexId};
