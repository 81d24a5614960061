//! `lodforge` command-line tool.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use lodforge::codec::{self, FileHeader};
use lodforge::ingest::{self, GeneratorPreset, PresetKind};
use lodforge::traversal::{select, Camera, SelectedNode, DEFAULT_THRESHOLD_PX};
use lodforge::{partition, BuildConfig, Error, NodeKind, Octree, Strategy};
use serde::Serialize;

const EXIT_USAGE: u8 = 1;
const EXIT_INTERNAL: u8 = 2;
const EXIT_INVALID: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "lodforge",
    version,
    about = "Build and inspect layered point cloud octrees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an octree from a LAS or PLY file and write it as VLPC.
    Build(BuildArgs),
    /// Check every structural invariant of a VLPC file.
    Validate { path: PathBuf },
    /// Report the nodes a camera would draw.
    Select(SelectArgs),
    /// Write a synthetic point cloud as binary PLY.
    Gen(GenArgs),
    /// Print header fields and per-depth statistics of a VLPC file.
    Info { path: PathBuf },
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// first-come, random, average or weighted.
    #[arg(long, default_value = "weighted")]
    strategy: Strategy,
    /// Maximum points per leaf.
    #[arg(long, default_value_t = 50_000, value_parser = clap::value_parser!(u32).range(1..))]
    threshold: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    max_depth: u8,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "LODFORGE_THREADS")]
    threads: Option<usize>,
    /// Human-readable summary instead of JSON.
    #[arg(long)]
    pretty: bool,
}

#[derive(Args, Debug)]
struct SelectArgs {
    path: PathBuf,
    #[arg(long, value_parser = parse_vec3)]
    eye: [f64; 3],
    #[arg(long, value_parser = parse_vec3)]
    look_at: [f64; 3],
    /// Vertical field of view in degrees.
    #[arg(long, default_value_t = 60.0)]
    fovy: f64,
    /// Width and height in pixels, e.g. 1920x1080.
    #[arg(long, value_parser = parse_viewport)]
    viewport: (u32, u32),
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_PX)]
    threshold_px: f64,
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,1")]
    up: [f64; 3],
    #[arg(long, default_value_t = 1e-3)]
    near: f64,
    #[arg(long, default_value_t = 1e9)]
    far: f64,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// uniform, plane, stadium or two-scans.
    #[arg(long)]
    preset: PresetKind,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [x, y, z] = parts.as_slice() else {
        return Err(format!("expected x,y,z but got {s:?}"));
    };
    let num = |t: &str| {
        t.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("{t:?} is not a finite number"))
    };
    Ok([num(x)?, num(y)?, num(z)?])
}

fn parse_viewport(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH but got {s:?}"))?;
    let w: u32 = w.parse().map_err(|_| format!("bad viewport width {w:?}"))?;
    let h: u32 = h
        .parse()
        .map_err(|_| format!("bad viewport height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("viewport must be at least 1x1".into());
    }
    Ok((w, h))
}

/// Maps a library error to the process exit code.
fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        Error::Internal(_) => ExitCode::from(EXIT_INTERNAL),
        _ => ExitCode::from(EXIT_USAGE),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Validate { path } => cmd_validate(&path),
        Command::Select(args) => cmd_select(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Info { path } => cmd_info(&path),
    };
    result.unwrap_or_else(fail)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Error> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

fn load(path: &Path) -> Result<Octree, Error> {
    codec::decode(BufReader::new(File::open(path)?))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct BuildSummary {
    points: u64,
    nodes: usize,
    leaves: usize,
    inner_nodes: usize,
    max_depth: usize,
    build_seconds: f64,
    throughput_m_ps: f64,
    split_seconds: f64,
    voxelize_seconds: f64,
}

fn cmd_build(args: BuildArgs) -> Result<ExitCode, Error> {
    let config = BuildConfig::default()
        .with_threshold(args.threshold)
        .with_max_depth(args.max_depth)
        .with_strategy(args.strategy)
        .with_seed(args.seed);
    config.validate()?;
    let points = ingest::read_points(&args.input)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "--threads must be at least 1".into(),
            ));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;

    let (tree, split, voxelize) = pool.install(|| -> Result<_, Error> {
        let start = Instant::now();
        let mut tree = partition(&points, &config)?;
        let split = start.elapsed().as_secs_f64();
        let start = Instant::now();
        lodforge::build_lod(&mut tree, args.strategy, args.seed)?;
        Ok((tree, split, start.elapsed().as_secs_f64()))
    })?;
    drop(points);

    let report = lodforge::validate(&tree);
    if !report.passed {
        for check in report.failed() {
            eprintln!("invariant {} violated: {:?}", check.name, check.examples);
        }
        return Ok(ExitCode::from(EXIT_INTERNAL));
    }

    let mut out = BufWriter::new(File::create(&args.output)?);
    codec::encode(&tree, &mut out)?;
    out.flush()?;

    let total = split + voxelize;
    let summary = BuildSummary {
        points: tree.point_count(),
        nodes: tree.node_count(),
        leaves: tree.leaves().count(),
        inner_nodes: tree.inner_nodes().count(),
        max_depth: tree.max_depth(),
        build_seconds: total,
        throughput_m_ps: if total > 0.0 {
            tree.point_count() as f64 / total / 1e6
        } else {
            0.0
        },
        split_seconds: split,
        voxelize_seconds: voxelize,
    };
    if args.pretty {
        println!(
            "{:>10} {:>10} {:>10} {:>8}",
            "split", "voxelize", "total", "MP/s"
        );
        println!(
            "{:>9.3}s {:>9.3}s {:>9.3}s {:>8.2}",
            split, voxelize, total, summary.throughput_m_ps
        );
        println!(
            "{} points, {} nodes ({} leaves, {} inner), depth {}",
            summary.points, summary.nodes, summary.leaves, summary.inner_nodes, summary.max_depth
        );
    } else {
        print_json(&summary)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(path: &Path) -> Result<ExitCode, Error> {
    let tree = load(path)?;
    let report = lodforge::validate(&tree);
    print_json(&report)?;
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVALID)
    })
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SelectOutput {
    nodes: usize,
    points_drawn: u64,
    voxels_drawn: u64,
    culled_nodes: usize,
    threshold_px: f64,
    items: Vec<SelectedNode>,
}

fn cmd_select(args: SelectArgs) -> Result<ExitCode, Error> {
    if !(args.threshold_px.is_finite() && args.threshold_px > 0.0) {
        return Err(Error::InvalidArgument(
            "--threshold-px must be positive".into(),
        ));
    }
    let camera = Camera {
        eye: args.eye,
        look_at: args.look_at,
        up: args.up,
        fov_y: args.fovy,
        viewport_w: args.viewport.0,
        viewport_h: args.viewport.1,
        near: args.near,
        far: args.far,
    };
    camera.validate()?;
    let tree = load(&args.path)?;
    let selection = select(&tree, &camera, args.threshold_px);
    let stats = selection.frame_stats(0);
    print_json(&SelectOutput {
        nodes: stats.nodes,
        points_drawn: stats.points_drawn,
        voxels_drawn: stats.voxels_drawn,
        culled_nodes: selection.culled_nodes,
        threshold_px: selection.threshold_px,
        items: selection.items,
    })?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode, Error> {
    let count = usize::try_from(args.count)
        .map_err(|_| Error::InvalidArgument("--count too large".into()))?;
    let points = ingest::generate(&GeneratorPreset::new(args.preset, count, args.seed))?;
    ingest::write_ply(&args.output, &points)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize, Default)]
#[serde(rename_all = "camelCase")]
struct DepthRow {
    depth: usize,
    nodes: usize,
    leaves: usize,
    inner_nodes: usize,
    points: u64,
    voxels: u64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Info {
    version: u32,
    world_min: [f64; 3],
    world_size: f64,
    threshold: u32,
    point_count: u64,
    node_count: u32,
    strategy: String,
    seed: u64,
    depths: Vec<DepthRow>,
}

fn cmd_info(path: &Path) -> Result<ExitCode, Error> {
    let bytes = std::fs::read(path)?;
    let header = FileHeader::parse(&bytes)?;
    let tree = codec::decode_bytes(&bytes)?;
    let mut depths: Vec<DepthRow> = (0..=tree.max_depth())
        .map(|depth| DepthRow {
            depth,
            ..DepthRow::default()
        })
        .collect();
    for node in tree.nodes() {
        let row = &mut depths[node.depth()];
        row.nodes += 1;
        match node.kind() {
            NodeKind::Leaf => {
                row.leaves += 1;
                row.points += node.sample_count() as u64;
            }
            NodeKind::Inner => {
                row.inner_nodes += 1;
                row.voxels += node.sample_count() as u64;
            }
        }
    }
    print_json(&Info {
        version: header.version,
        world_min: header.world_min,
        world_size: header.world_size,
        threshold: header.threshold,
        point_count: header.point_count,
        node_count: header.node_count,
        strategy: tree.config().strategy.name().to_string(),
        seed: header.seed,
        depths,
    })?;
    Ok(ExitCode::SUCCESS)
}
