use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use calabi_core::geometry::curvature;
use calabi_core::io::{read_conformal_factor, read_metric, read_trace};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn calabi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calabi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn value(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().to_string()))
        .unwrap_or_else(|| panic!("no '{key}' in output:\n{out}"))
}

#[test]
fn validate_reports_combinatorics() {
    let o = calabi(&["validate", path_str(&fixture("tetra.txt"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(value(&out, "chi "), "2");
    assert_eq!(value(&out, "vertices "), "4");
    assert_eq!(value(&out, "edges "), "6");
    assert_eq!(value(&out, "faces "), "4");
    let gb: f64 = value(&out, "gauss_bonnet_residual ").parse().unwrap();
    assert!(gb.abs() < 1e-12);
}

#[test]
fn validate_rejects_bad_files() {
    let o = calabi(&["validate", path_str(&fixture("bad_length.txt"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: parse: line 3:"), "{}", stderr(&o));

    let o = calabi(&["validate", path_str(&fixture("thin_torus.txt"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error: inadmissible:") && err.contains("[0, 1]"), "{err}");

    let o = calabi(&["validate", "/nonexistent/metric.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: io:"));
}

#[test]
fn curvature_of_regular_tetrahedron() {
    let o = calabi(&["curvature", path_str(&fixture("tetra.txt"))]);
    assert!(o.status.success());
    let out = stdout(&o);
    for i in 0..4 {
        let k: f64 = value(&out, &format!("v{i} ")).parse().unwrap();
        assert!((k - PI).abs() < 1e-14);
    }
    let sum: f64 = value(&out, "sum ").parse().unwrap();
    assert!((sum - 4.0 * PI).abs() < 1e-13);
}

#[test]
fn delaunay_lists_and_fixes_skewed_torus() {
    let o = calabi(&["delaunay", path_str(&fixture("skewed_torus.txt"))]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("non_delaunay e0 "));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fixed.txt");
    let o = calabi(&["delaunay", path_str(&fixture("skewed_torus.txt")), "--fix", "--out", path_str(&out)]);
    assert!(o.status.success());
    assert_eq!(value(&stdout(&o), "flips "), "1");
    let (_, m) = read_metric(&out).unwrap();
    assert!((m.lengths()[0] - 1.2).abs() < 1e-12);

    let o = calabi(&["delaunay", path_str(&out)]);
    assert!(stdout(&o).contains("delaunay"));
    assert!(!stdout(&o).contains("non_delaunay"));
}

#[test]
fn flow_to_constant_curvature() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let out = dir.path().join("final.txt");
    let o = calabi(&[
        "flow",
        path_str(&fixture("tetra_perturbed.txt")),
        "--constant",
        "--tol",
        "1e-10",
        "--trace",
        path_str(&trace),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let records = read_trace(&trace).unwrap();
    let last = records.last().unwrap();
    assert!(last.max_abs_curv_err < 1e-10);
    assert!(records.windows(2).all(|w| w[1].calabi_energy <= w[0].calabi_energy));

    // The written metric reproduces the final error.
    let (t, m) = read_metric(&out).unwrap();
    let k = curvature(&t, &m).unwrap();
    let err = k.iter().map(|x| (x - PI).abs()).fold(0.0, f64::max);
    assert!((err - last.max_abs_curv_err).abs() < 1e-12);

    // The fixture was made with u = (0.3, -0.1, -0.1, -0.1).
    let mut sidecar = out.into_os_string();
    sidecar.push(".u");
    let u = read_conformal_factor(Path::new(&sidecar), 4).unwrap();
    for (x, expect) in u.iter().zip([-0.3, 0.1, 0.1, 0.1]) {
        assert!((x - expect).abs() < 1e-6);
    }

    let o = calabi(&["decay", path_str(&trace)]);
    assert!(o.status.success());
    let slope: f64 = value(&stdout(&o), "slope ").parse().unwrap();
    assert!(slope < 0.0);
}

#[test]
fn flow_hyperbolic_pillow_to_target() {
    let o = calabi(&[
        "flow",
        path_str(&fixture("pillow_hyp.txt")),
        "--target",
        path_str(&fixture("k_all_4.5.txt")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let err: f64 = value(&stdout(&o), "max_abs_curv_err ").parse().unwrap();
    assert!(err < 1e-10);
}

#[test]
fn flow_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = calabi(&[
        "flow",
        path_str(&fixture("tetra_perturbed.txt")),
        "--constant",
        "--t-max",
        "0.01",
        "--trace",
        path_str(&trace),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not_converged"));
    assert!(read_trace(&trace).unwrap().len() > 1);

    // χ = 2 admits no zero-curvature hyperbolic metric.
    let o = calabi(&["flow", path_str(&fixture("pillow_hyp.txt")), "--constant"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: inadmissible_target:"));

    let o = calabi(&["flow", path_str(&fixture("tetra.txt"))]);
    assert_eq!(o.status.code(), Some(1));

    let o = calabi(&["flow", path_str(&fixture("tetra.txt")), "--constant", "--dt=-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: invalid_config:"));
}

#[test]
fn import_obj_meshes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cube.txt");
    let o = calabi(&["import-obj", path_str(&fixture("cube.obj")), path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (t, m) = read_metric(&out).unwrap();
    assert_eq!(t.euler_characteristic(), 2);
    assert_eq!((t.n_vertices(), t.n_edges(), t.n_faces()), (8, 18, 12));
    let unit = m.lengths().iter().filter(|&&l| (l - 1.0).abs() < 1e-12).count();
    let diag = m.lengths().iter().filter(|&&l| (l - 2f64.sqrt()).abs() < 1e-12).count();
    assert_eq!((unit, diag), (12, 6));

    let out = dir.path().join("tetra.txt");
    let o = calabi(&["import-obj", path_str(&fixture("tetra.obj")), path_str(&out)]);
    assert!(o.status.success());
    let (_, m) = read_metric(&out).unwrap();
    assert!(m.lengths().iter().all(|l| (l - 1.0).abs() < 1e-12));

    let o = calabi(&["import-obj", path_str(&fixture("quad.obj")), path_str(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: non_triangle_face: line 5"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(calabi(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(calabi(&[]).status.code(), Some(1));
    assert_eq!(calabi(&["--help"]).status.code(), Some(0));
}
