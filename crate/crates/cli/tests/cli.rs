use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn meshcs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshcs"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = meshcs(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    meshcs(dir, args).status.code().unwrap()
}

/// Small holed mesh with field `g` in `m.txt` and `g.txt`.
fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["gen-mesh", "--points", "2000", "-o", "m.txt"]);
    ok(
        dir.path(),
        &["gen-field", "--mesh", "m.txt", "--kind", "g", "-o", "g.txt"],
    );
    dir
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn read_field(path: &Path) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    assert_eq!(&header[..2], ["meshcs-field", "v1"]);
    let values: Vec<f64> = lines.map(|l| l.trim().parse().unwrap()).collect();
    assert_eq!(values.len(), header[2].parse::<usize>().unwrap());
    values
}

#[test]
fn compress_is_bitwise_reproducible() {
    let dir = setup();
    ok(
        dir.path(),
        &[
            "compress", "--field", "g.txt", "--ratio", "10", "--seed", "7", "-o", "a.bin",
        ],
    );
    ok(
        dir.path(),
        &[
            "compress", "--field", "g.txt", "--ratio", "10", "--seed", "7", "-o", "b.bin",
        ],
    );
    ok(
        dir.path(),
        &[
            "compress", "--field", "g.txt", "--ratio", "10", "--seed", "8", "-o", "c.bin",
        ],
    );
    let a = fs::read(p(&dir, "a.bin")).unwrap();
    assert_eq!(a, fs::read(p(&dir, "b.bin")).unwrap());
    assert_ne!(a, fs::read(p(&dir, "c.bin")).unwrap());
}

#[test]
fn reconstruct_writes_field_report_and_vtk() {
    let dir = setup();
    ok(
        dir.path(),
        &[
            "compress", "--field", "g.txt", "--ratio", "10", "-o", "b.bin",
        ],
    );
    let stdout = ok(
        dir.path(),
        &[
            "reconstruct",
            "--mesh",
            "m.txt",
            "--bundle",
            "b.bin",
            "--order",
            "3",
            "--reference",
            "g.txt",
            "-o",
            "r.txt",
            "--report",
            "rep.csv",
            "--residuals",
            "res.csv",
            "--vtk",
            "r.vtk",
        ],
    );
    assert!(stdout.contains("converged true"), "{stdout}");
    let g = read_field(&p(&dir, "g.txt"));
    let r = read_field(&p(&dir, "r.txt"));
    assert_eq!(g.len(), r.len());

    let report = fs::read_to_string(p(&dir, "rep.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("level,error,seconds,stages"));
    let err: f64 = lines
        .next()
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(err > 0.0 && err < 0.5, "{err}");

    let residuals = fs::read_to_string(p(&dir, "res.csv")).unwrap();
    let values: Vec<f64> = residuals
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(values.len() >= 2);
    assert!(values.windows(2).all(|w| w[1] <= w[0]));

    let vtk = fs::read_to_string(p(&dir, "r.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 3.0"));
    assert!(vtk.contains("POINTS 2000 double"));
    assert!(vtk.contains("POINT_DATA 2000"));

    let metrics = ok(
        dir.path(),
        &[
            "metrics",
            "--reference",
            "g.txt",
            "--reconstructed",
            "r.txt",
        ],
    );
    let line = metrics
        .lines()
        .find(|l| l.starts_with("relative_l2"))
        .unwrap();
    let m: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert_eq!(m, err);
}

#[test]
fn clod_report_lists_stride_levels() {
    let dir = setup();
    ok(
        dir.path(),
        &[
            "compress", "--field", "g.txt", "--ratio", "5", "-o", "b.bin",
        ],
    );
    let out = meshcs(
        dir.path(),
        &[
            "reconstruct",
            "--mesh",
            "m.txt",
            "--bundle",
            "b.bin",
            "--order",
            "2",
            "--clod",
            "--stride",
            "3",
            "--reference",
            "g.txt",
            "-o",
            "r.txt",
            "--report",
            "rep.csv",
        ],
    );
    assert!(matches!(out.status.code(), Some(0 | 4)));
    let report = fs::read_to_string(p(&dir, "rep.csv")).unwrap();
    let levels: Vec<usize> = report
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(levels[0], 1);
    assert!(levels.windows(2).all(|w| w[1] - w[0] <= 3 && w[1] > w[0]));
}

#[test]
fn partitioned_bundles_reconstruct_per_rank() {
    let dir = setup();
    ok(
        dir.path(),
        &[
            "compress", "--field", "g.txt", "--ratio", "5", "--ranks", "4", "-o", "b.bin",
        ],
    );
    let out = meshcs(
        dir.path(),
        &[
            "reconstruct",
            "--mesh",
            "m.txt",
            "--bundle",
            "b.bin",
            "--order",
            "3",
            "--reference",
            "g.txt",
            "-o",
            "r.txt",
            "--report",
            "rep.csv",
        ],
    );
    assert!(matches!(out.status.code(), Some(0 | 4)));
    let report = fs::read_to_string(p(&dir, "rep.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("rank,level,error,seconds,stages"));
    let ranks: Vec<usize> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(ranks, [0, 1, 2, 3]);
    assert_eq!(read_field(&p(&dir, "r.txt")).len(), 2000);

    assert_eq!(
        code(
            dir.path(),
            &[
                "reconstruct",
                "--mesh",
                "m.txt",
                "--bundle",
                "b.bin",
                "--clod",
                "-o",
                "x.txt"
            ]
        ),
        2
    );
}

#[test]
fn sweep_writes_one_row_per_pair() {
    let dir = setup();
    let csv = ok(
        dir.path(),
        &[
            "sweep", "--mesh", "m.txt", "--field", "g.txt", "--orders", "2", "3", "--ratios",
            "5,10",
        ],
    );
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("order,ratio,samples,error,seconds,stages,converged")
    );
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.len() == 7));
    assert!(rows.iter().any(|r| r[0] == "3" && r[2] == "200"));
}

#[test]
fn expression_fields_evaluate_coordinates() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &[
            "gen-mesh", "--kind", "uniform", "--dim", "3", "--points", "50", "-o", "m.txt",
        ],
    );
    ok(
        dir.path(),
        &[
            "gen-field",
            "--mesh",
            "m.txt",
            "--kind",
            "expr",
            "--expr",
            "x + 2*y - z",
            "-o",
            "e.txt",
        ],
    );
    ok(
        dir.path(),
        &[
            "gen-field",
            "--mesh",
            "m.txt",
            "--kind",
            "polynomial",
            "--degree",
            "1",
            "-o",
            "q.txt",
        ],
    );
    let e = read_field(&p(&dir, "e.txt"));
    let pts = fs::read_to_string(p(&dir, "m.txt")).unwrap();
    for (line, v) in pts.lines().skip(1).zip(&e) {
        let c: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse().unwrap())
            .collect();
        assert!((c[0] + 2.0 * c[1] - c[2] - v).abs() < 1e-12);
    }
    assert_eq!(
        code(
            dir.path(),
            &[
                "gen-field",
                "--mesh",
                "m.txt",
                "--kind",
                "expr",
                "--expr",
                "x +",
                "-o",
                "z.txt"
            ]
        ),
        2
    );
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = setup();
    ok(
        dir.path(),
        &[
            "compress", "--field", "g.txt", "--ratio", "5", "-o", "b.bin",
        ],
    );
    // usage
    assert_eq!(code(dir.path(), &["reconstruct", "--mesh", "m.txt"]), 2);
    assert_eq!(
        code(
            dir.path(),
            &[
                "compress",
                "--field",
                "g.txt",
                "--ratio",
                "5",
                "--samples",
                "9",
                "-o",
                "x.bin"
            ]
        ),
        2
    );
    assert_eq!(
        code(
            dir.path(),
            &[
                "reconstruct",
                "--mesh",
                "m.txt",
                "--bundle",
                "b.bin",
                "--level",
                "99",
                "-o",
                "x.txt"
            ]
        ),
        2
    );
    // data
    assert_eq!(
        code(
            dir.path(),
            &[
                "reconstruct",
                "--mesh",
                "m.txt",
                "--bundle",
                "nope",
                "-o",
                "x.txt"
            ]
        ),
        3
    );
    let mut bytes = fs::read(p(&dir, "b.bin")).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(p(&dir, "cut.bin"), bytes).unwrap();
    assert_eq!(
        code(
            dir.path(),
            &[
                "reconstruct",
                "--mesh",
                "m.txt",
                "--bundle",
                "cut.bin",
                "-o",
                "x.txt"
            ]
        ),
        3
    );
    // not converged
    assert_eq!(
        code(
            dir.path(),
            &[
                "reconstruct",
                "--mesh",
                "m.txt",
                "--bundle",
                "b.bin",
                "--max-stages",
                "1",
                "-o",
                "x.txt"
            ]
        ),
        4
    );
    assert!(p(&dir, "x.txt").exists());
}
