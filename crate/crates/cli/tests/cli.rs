use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn lodforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lodforge"))
        .args(args)
        .env_remove("LODFORGE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates a preset and builds it; returns the VLPC path.
fn built(dir: &TempDir, preset: &str, count: &str, extra: &[&str]) -> PathBuf {
    let ply = dir.path().join(format!("{preset}.ply"));
    let vlpc = dir.path().join(format!("{preset}.vlpc"));
    let out = lodforge(&[
        "gen",
        "--preset",
        preset,
        "--count",
        count,
        "--seed",
        "3",
        "-o",
        s(&ply),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut args = vec!["build", "--input", s(&ply), "--output", s(&vlpc)];
    args.extend_from_slice(extra);
    let out = lodforge(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    vlpc
}

#[test]
fn gen_writes_deterministic_ply() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.ply");
    let b = dir.path().join("b.ply");
    for p in [&a, &b] {
        let out = lodforge(&[
            "gen",
            "--preset",
            "uniform",
            "--count",
            "1000",
            "--seed",
            "42",
            "-o",
            s(p),
        ]);
        assert_eq!(code(&out), 0);
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert!(String::from_utf8_lossy(&bytes[..200]).contains("element vertex 1000\n"));
    let points = lodforge::ingest::read_ply(&a).unwrap();
    assert_eq!(points.len(), 1000);
}

#[test]
fn gen_rejects_bad_input() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.ply");
    assert_eq!(
        code(&lodforge(&[
            "gen",
            "--preset",
            "uniform",
            "--count",
            "0",
            "-o",
            s(&out)
        ])),
        1
    );
    assert_eq!(
        code(&lodforge(&[
            "gen",
            "--preset",
            "teapot",
            "--count",
            "5",
            "-o",
            s(&out)
        ])),
        1
    );
}

#[test]
fn build_reports_summary_and_file() {
    let dir = TempDir::new().unwrap();
    let ply = dir.path().join("p.ply");
    let vlpc = dir.path().join("p.vlpc");
    lodforge(&[
        "gen",
        "--preset",
        "stadium",
        "--count",
        "60000",
        "-o",
        s(&ply),
    ]);
    let out = lodforge(&[
        "build",
        "--input",
        s(&ply),
        "--output",
        s(&vlpc),
        "--strategy",
        "weighted",
        "--threshold",
        "5000",
    ]);
    assert_eq!(code(&out), 0);
    assert!(vlpc.exists());
    let summary = json(&out);
    for key in [
        "points",
        "nodes",
        "leaves",
        "innerNodes",
        "maxDepth",
        "buildSeconds",
        "throughputMPs",
        "splitSeconds",
        "voxelizeSeconds",
    ] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
    assert_eq!(summary["points"], 60000);
    assert!(summary["maxDepth"].as_u64().unwrap() > 8);
}

#[test]
fn build_usage_errors() {
    let dir = TempDir::new().unwrap();
    let ply = dir.path().join("p.ply");
    let vlpc = dir.path().join("p.vlpc");
    lodforge(&[
        "gen",
        "--preset",
        "uniform",
        "--count",
        "100",
        "-o",
        s(&ply),
    ]);
    let base = ["build", "--input", s(&ply), "--output", s(&vlpc)];
    let with = |extra: &[&str]| {
        let mut v = base.to_vec();
        v.extend_from_slice(extra);
        code(&lodforge(&v))
    };
    assert_eq!(with(&["--strategy", "median"]), 1);
    assert_eq!(with(&["--threshold", "0"]), 1);
    assert_eq!(with(&["--max-depth", "17"]), 1);
    assert_eq!(with(&["--max-depth", "0", "--threshold", "10"]), 0);
    let missing = dir.path().join("missing.ply");
    assert_eq!(
        code(&lodforge(&[
            "build",
            "--input",
            s(&missing),
            "--output",
            s(&vlpc)
        ])),
        1
    );
}

#[test]
fn builds_are_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let ply = dir.path().join("p.ply");
    lodforge(&[
        "gen",
        "--preset",
        "two-scans",
        "--count",
        "30000",
        "-o",
        s(&ply),
    ]);
    let mut files = Vec::new();
    for (i, threads) in ["1", "3", "1"].iter().enumerate() {
        let out_path = dir.path().join(format!("{i}.vlpc"));
        let out = lodforge(&[
            "build",
            "--input",
            s(&ply),
            "--output",
            s(&out_path),
            "--strategy",
            "random",
            "--seed",
            "9",
            "--threshold",
            "2000",
            "--threads",
            threads,
        ]);
        assert_eq!(code(&out), 0);
        files.push(std::fs::read(&out_path).unwrap());
    }
    assert!(files.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn validate_accepts_fresh_and_rejects_corrupt() {
    let dir = TempDir::new().unwrap();
    let vlpc = built(&dir, "uniform", "20000", &["--threshold", "1000"]);
    let out = lodforge(&["validate", s(&vlpc)]);
    assert_eq!(code(&out), 0);
    let report = json(&out);
    assert_eq!(report["passed"], true);
    assert!(report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == true));

    // Patch the first voxel's x coordinate to 200.
    let mut bytes = std::fs::read(&vlpc).unwrap();
    let (_, records, payload) = lodforge::codec::read_index(&bytes).unwrap();
    let root = &records[0];
    assert_eq!(root.kind, 1);
    bytes[payload + root.payload_offset as usize] = 200;
    let corrupt = dir.path().join("corrupt.vlpc");
    std::fs::write(&corrupt, &bytes).unwrap();
    let out = lodforge(&["validate", s(&corrupt)]);
    assert_eq!(code(&out), 3);
    let report = json(&out);
    let bounds = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "voxel-bounds")
        .unwrap();
    assert_eq!(bounds["passed"], false);

    let empty = dir.path().join("empty.vlpc");
    std::fs::write(&empty, b"").unwrap();
    assert_eq!(code(&lodforge(&["validate", s(&empty)])), 1);
}

#[test]
fn select_far_camera_and_errors() {
    let dir = TempDir::new().unwrap();
    let vlpc = built(&dir, "plane", "20000", &["--threshold", "500"]);
    let args = [
        "select",
        s(&vlpc),
        "--eye",
        "500,400,300",
        "--look-at",
        "0.5,0.5,0",
        "--fovy",
        "60",
        "--viewport",
        "1920x1080",
    ];
    let first = lodforge(&args);
    assert_eq!(code(&first), 0);
    assert_eq!(json(&first)["nodes"], 1);
    assert_eq!(first.stdout, lodforge(&args).stdout);

    let near = lodforge(&[
        "select",
        s(&vlpc),
        "--eye",
        "0.5,-0.5,0.4",
        "--look-at",
        "0.5,0.5,0",
        "--viewport",
        "1920x1080",
    ]);
    assert!(json(&near)["nodes"].as_u64().unwrap() > 1);

    let mut bad = args.to_vec();
    let last = bad.len() - 1;
    bad[last] = "0x0";
    assert_eq!(code(&lodforge(&bad)), 1);
    let mut bad = args.to_vec();
    bad[3] = "1,2";
    assert_eq!(code(&lodforge(&bad)), 1);
}

#[test]
fn info_histograms() {
    let dir = TempDir::new().unwrap();
    let vlpc = built(&dir, "stadium", "50000", &["--threshold", "4000"]);
    let out = lodforge(&["info", s(&vlpc)]);
    assert_eq!(code(&out), 0);
    let info = json(&out);
    assert_eq!(info["pointCount"], 50000);
    let depths = info["depths"].as_array().unwrap();
    let total: u64 = depths.iter().map(|d| d["points"].as_u64().unwrap()).sum();
    assert_eq!(total, 50000);
    let nodes: u64 = depths.iter().map(|d| d["nodes"].as_u64().unwrap()).sum();
    assert_eq!(nodes, info["nodeCount"].as_u64().unwrap());

    let single_dir = TempDir::new().unwrap();
    let single = built(&single_dir, "uniform", "10", &[]);
    let info = json(&lodforge(&["info", s(&single)]));
    let depths = info["depths"].as_array().unwrap();
    assert_eq!(depths.len(), 1);
    assert_eq!(depths[0]["leaves"], 1);

    let mut bytes = std::fs::read(&vlpc).unwrap();
    bytes[..4].copy_from_slice(b"XXXX");
    let bad = dir.path().join("bad.vlpc");
    std::fs::write(&bad, bytes).unwrap();
    assert_eq!(code(&lodforge(&["info", s(&bad)])), 1);
}

#[test]
fn reads_las_input() {
    // Minimal LAS 1.2, point format 2, two points with color.
    let mut h = vec![0u8; 227];
    h[..4].copy_from_slice(b"LASF");
    h[24] = 1;
    h[25] = 2;
    h[94..96].copy_from_slice(&227u16.to_le_bytes());
    h[96..100].copy_from_slice(&227u32.to_le_bytes());
    h[104] = 2;
    h[105..107].copy_from_slice(&26u16.to_le_bytes());
    h[107..111].copy_from_slice(&2u32.to_le_bytes());
    for axis in 0..3 {
        h[131 + 8 * axis..139 + 8 * axis].copy_from_slice(&0.5f64.to_le_bytes());
    }
    for (xyz, rgb) in [([0i32, 0, 0], [65535u16, 0, 0]), ([2, 4, 6], [0, 0, 65535])] {
        let mut rec = vec![0u8; 26];
        for k in 0..3 {
            rec[4 * k..4 * k + 4].copy_from_slice(&xyz[k].to_le_bytes());
            rec[20 + 2 * k..22 + 2 * k].copy_from_slice(&rgb[k].to_le_bytes());
        }
        h.extend_from_slice(&rec);
    }
    let dir = TempDir::new().unwrap();
    let las = dir.path().join("in.las");
    let vlpc = dir.path().join("out.vlpc");
    std::fs::write(&las, h).unwrap();
    let out = lodforge(&["build", "--input", s(&las), "--output", s(&vlpc)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["points"], 2);
}
