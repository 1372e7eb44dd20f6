//! Text formats: metric files, curvature targets, conformal factors, flow
//! traces, and OBJ import.
//!
//! A metric file looks like
//!
//! ```text
//! geometry euclidean
//! nv 4
//! e 0 1.0
//! ...
//! f 0 1 2 3 4 5
//! ```
//!
//! where an `f` line lists three vertices followed by the edges opposite each
//! of them. `#` starts a comment.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::flow::FlowTraceRecord;
use crate::geometry::{GeometryError, GeometryKind, PolyhedralMetric};
use crate::mesh::{FaceSpec, MeshError, Triangulation};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: face has {count} vertices, only triangles are supported")]
    NonTriangleFace { line: usize, count: usize },
    #[error("trace: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl IoError {
    pub fn code(&self) -> &'static str {
        match self {
            IoError::Io { .. } => "io",
            IoError::Parse { .. } => "parse",
            IoError::NonTriangleFace { .. } => "non_triangle_face",
            IoError::Csv(_) => "trace_format",
            IoError::Mesh(e) => e.code(),
            IoError::Geometry(e) => e.code(),
        }
    }
}

fn parse_err(line: usize, reason: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        reason: reason.into(),
    }
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let io = |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Non-comment lines with their 1-based numbers, split into words.
fn tokens(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let body = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = body.split_whitespace().collect();
        (!words.is_empty()).then_some((i + 1, words))
    })
}

fn parse_usize(line: usize, s: &str, what: &str) -> Result<usize, IoError> {
    s.parse()
        .map_err(|_| parse_err(line, format!("bad {what} '{s}'")))
}

fn parse_f64(line: usize, s: &str, what: &str) -> Result<f64, IoError> {
    let x: f64 = s
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what} '{s}'")))?;
    if !x.is_finite() {
        return Err(parse_err(line, format!("{what} '{s}' is not finite")));
    }
    Ok(x)
}

fn expect_arity(line: usize, words: &[&str], n: usize) -> Result<(), IoError> {
    if words.len() != n {
        return Err(parse_err(
            line,
            format!("'{}' takes {} fields, found {}", words[0], n - 1, words.len() - 1),
        ));
    }
    Ok(())
}

pub fn parse_metric(text: &str) -> Result<(Triangulation, PolyhedralMetric), IoError> {
    let mut kind = None;
    let mut nv = None;
    let mut lengths: HashMap<usize, (usize, f64)> = HashMap::new();
    let mut faces = Vec::new();
    let mut last_line = 0;
    for (line, w) in tokens(text) {
        last_line = line;
        match w[0] {
            "geometry" => {
                expect_arity(line, &w, 2)?;
                if kind.is_some() {
                    return Err(parse_err(line, "repeated geometry line"));
                }
                kind = Some(match w[1] {
                    "euclidean" => GeometryKind::Euclidean,
                    "hyperbolic" => GeometryKind::Hyperbolic,
                    other => return Err(parse_err(line, format!("unknown geometry '{other}'"))),
                });
            }
            "nv" => {
                expect_arity(line, &w, 2)?;
                if nv.is_some() {
                    return Err(parse_err(line, "repeated nv line"));
                }
                nv = Some(parse_usize(line, w[1], "vertex count")?);
            }
            "e" => {
                expect_arity(line, &w, 3)?;
                let id = parse_usize(line, w[1], "edge id")?;
                let l = parse_f64(line, w[2], "length")?;
                if l <= 0.0 {
                    return Err(parse_err(line, format!("edge {id} has non-positive length {l}")));
                }
                if let Some((first, _)) = lengths.insert(id, (line, l)) {
                    return Err(parse_err(line, format!("edge {id} already defined on line {first}")));
                }
            }
            "f" => {
                expect_arity(line, &w, 7)?;
                let mut v = [0; 3];
                let mut e = [0; 3];
                for c in 0..3 {
                    v[c] = parse_usize(line, w[1 + c], "vertex id")?;
                    e[c] = parse_usize(line, w[4 + c], "edge id")?;
                    if !lengths.contains_key(&e[c]) {
                        return Err(parse_err(line, format!("edge {} has no length", e[c])));
                    }
                }
                faces.push(FaceSpec::explicit(v, e));
            }
            other => return Err(parse_err(line, format!("unknown record '{other}'"))),
        }
    }
    let kind = kind.ok_or_else(|| parse_err(last_line.max(1), "missing geometry line"))?;
    let nv = nv.ok_or_else(|| parse_err(last_line.max(1), "missing nv line"))?;
    let n_edges = lengths.len();
    let mut ordered = vec![0.0; n_edges];
    for (&id, &(line, l)) in &lengths {
        if id >= n_edges {
            return Err(parse_err(line, format!("edge ids must be 0..{n_edges}, found {id}")));
        }
        ordered[id] = l;
    }
    let t = Triangulation::build_from_faces(&faces, nv)?;
    if t.n_edges() != n_edges {
        return Err(parse_err(
            last_line,
            format!("{n_edges} edges defined but faces use {}", t.n_edges()),
        ));
    }
    let m = PolyhedralMetric::on(&t, kind, ordered)?;
    Ok((t, m))
}

pub fn read_metric(path: &Path) -> Result<(Triangulation, PolyhedralMetric), IoError> {
    parse_metric(&read_text(path)?)
}

pub fn format_metric(t: &Triangulation, m: &PolyhedralMetric) -> String {
    let mut s = format!("geometry {}\nnv {}\n", m.kind().name(), t.n_vertices());
    for e in t.edges() {
        s += &format!("e {} {:.16e}\n", e.0, m.length(e));
    }
    for f in t.faces() {
        s += &format!(
            "f {} {} {} {} {} {}\n",
            f[0].vertex.0, f[1].vertex.0, f[2].vertex.0, f[0].opposite_edge.0, f[1].opposite_edge.0, f[2].opposite_edge.0
        );
    }
    s
}

pub fn write_metric(path: &Path, t: &Triangulation, m: &PolyhedralMetric) -> Result<(), IoError> {
    write_atomic(path, format_metric(t, m).as_bytes())
}

/// Per-vertex values from `<tag> <vertex> <value>` lines. Vertices not listed
/// get `default`.
fn parse_vertex_values(text: &str, tag: &str, n: usize, default: f64) -> Result<Vec<f64>, IoError> {
    let mut out = vec![default; n];
    let mut seen = vec![false; n];
    for (line, w) in tokens(text) {
        if w[0] != tag {
            return Err(parse_err(line, format!("expected '{tag}' record, found '{}'", w[0])));
        }
        expect_arity(line, &w, 3)?;
        let v = parse_usize(line, w[1], "vertex id")?;
        if v >= n {
            return Err(parse_err(line, format!("vertex {v} out of range (surface has {n})")));
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(parse_err(line, format!("vertex {v} listed twice")));
        }
        out[v] = parse_f64(line, w[2], "value")?;
    }
    Ok(out)
}

/// Target curvatures from `k <vertex> <value>` lines; omitted vertices get
/// `default`.
pub fn parse_target(text: &str, n_vertices: usize, default: f64) -> Result<Vec<f64>, IoError> {
    parse_vertex_values(text, "k", n_vertices, default)
}

pub fn read_target(path: &Path, n_vertices: usize, default: f64) -> Result<Vec<f64>, IoError> {
    parse_target(&read_text(path)?, n_vertices, default)
}

pub fn format_target(k: &[f64]) -> String {
    k.iter()
        .enumerate()
        .map(|(i, x)| format!("k {i} {x:.16e}\n"))
        .collect()
}

/// Conformal factors as `u <vertex> <value>` lines.
pub fn format_conformal_factor(u: &[f64]) -> String {
    u.iter()
        .enumerate()
        .map(|(i, x)| format!("u {i} {x:.16e}\n"))
        .collect()
}

pub fn parse_conformal_factor(text: &str, n_vertices: usize) -> Result<Vec<f64>, IoError> {
    parse_vertex_values(text, "u", n_vertices, 0.0)
}

pub fn write_conformal_factor(path: &Path, u: &[f64]) -> Result<(), IoError> {
    write_atomic(path, format_conformal_factor(u).as_bytes())
}

pub fn read_conformal_factor(path: &Path, n_vertices: usize) -> Result<Vec<f64>, IoError> {
    parse_conformal_factor(&read_text(path)?, n_vertices)
}

pub const TRACE_COLUMNS: [&str; 7] = [
    "t",
    "dt",
    "calabi_energy",
    "max_abs_curv_err",
    "flips_step",
    "flips_cum",
    "sum_u",
];

pub fn format_trace(trace: &[FlowTraceRecord]) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_COLUMNS)?;
    for r in trace {
        w.write_record([
            format!("{:.16e}", r.t),
            format!("{:.16e}", r.dt),
            format!("{:.16e}", r.calabi_energy),
            format!("{:.16e}", r.max_abs_curv_err),
            r.flips_step.to_string(),
            r.flips_cum.to_string(),
            format!("{:.16e}", r.sum_u),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

pub fn write_trace(path: &Path, trace: &[FlowTraceRecord]) -> Result<(), IoError> {
    write_atomic(path, format_trace(trace)?.as_bytes())
}

pub fn parse_trace(text: &str) -> Result<Vec<FlowTraceRecord>, IoError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(parse_err(1, format!("expected header {}", TRACE_COLUMNS.join(","))));
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        if row.len() != TRACE_COLUMNS.len() {
            return Err(parse_err(line, format!("expected {} columns", TRACE_COLUMNS.len())));
        }
        let f = |c: usize| parse_f64(line, &row[c], TRACE_COLUMNS[c]);
        let n = |c: usize| parse_usize(line, &row[c], TRACE_COLUMNS[c]);
        out.push(FlowTraceRecord {
            t: f(0)?,
            dt: f(1)?,
            calabi_energy: f(2)?,
            max_abs_curv_err: f(3)?,
            flips_step: n(4)?,
            flips_cum: n(5)?,
            sum_u: f(6)?,
            min_eig_l: None,
        });
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<FlowTraceRecord>, IoError> {
    parse_trace(&read_text(path)?)
}

/// Triangles of an OBJ mesh with edge lengths taken from vertex positions.
/// Only `v` and `f` records matter; texture and normal indices are ignored.
pub fn parse_obj(text: &str) -> Result<(Triangulation, PolyhedralMetric), IoError> {
    let mut pos: Vec<[f64; 3]> = Vec::new();
    let mut faces = Vec::new();
    for (line, w) in tokens(text) {
        match w[0] {
            "v" => {
                if w.len() < 4 {
                    return Err(parse_err(line, "vertex needs three coordinates"));
                }
                let mut p = [0.0; 3];
                for c in 0..3 {
                    p[c] = parse_f64(line, w[1 + c], "coordinate")?;
                }
                pos.push(p);
            }
            "f" => {
                let count = w.len() - 1;
                if count != 3 {
                    return Err(IoError::NonTriangleFace { line, count });
                }
                let mut v = [0; 3];
                for c in 0..3 {
                    let head = w[1 + c].split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| parse_err(line, format!("bad vertex index '{}'", w[1 + c])))?;
                    let resolved = match idx {
                        i if i > 0 => i - 1,
                        i if i < 0 => pos.len() as i64 + i,
                        _ => -1,
                    };
                    if resolved < 0 || resolved as usize >= pos.len() {
                        return Err(parse_err(line, format!("vertex index {idx} out of range")));
                    }
                    v[c] = resolved as usize;
                }
                faces.push(FaceSpec::implicit(v));
            }
            _ => {}
        }
    }
    let t = Triangulation::build_from_faces(&faces, pos.len())?;
    let lengths = t
        .edges()
        .map(|e| {
            let (a, b) = t.endpoints(e);
            let (p, q) = (pos[a.0], pos[b.0]);
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
        })
        .collect();
    let m = PolyhedralMetric::on(&t, GeometryKind::Euclidean, lengths)?;
    Ok((t, m))
}

pub fn import_obj(path: &Path) -> Result<(Triangulation, PolyhedralMetric), IoError> {
    parse_obj(&read_text(path)?)
}
