//! Command-line front end for the cubevo toolkit.
//!
//! Subcommands: `remap` (fisheye image to cube faces), `init` (two-view
//! relative pose from pixel matches), `vo` (synthetic visual odometry run),
//! `bench-metrics` (pose-metric comparison table) and `ate` (trajectory
//! error). Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::error::Error;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use cubevo::calib::{CubemapCamera, FaceId};
use cubevo::epipolar::{decompose_essential, ransac_essential, Correspondence, RansacConfig};
use cubevo::eval::{ate_rmse, format_tum, parse_tum, Trajectory, DEFAULT_ASSOC_WINDOW};
use cubevo::optim::MetricKind;
use cubevo::remap::{build_remap_table, compose_cross, remap_image};
use cubevo::sim::{bench_metrics, gen_scene, run_vo, SceneConfig, VoConfig};
use cubevo::{load_ocamcalib_file, GrayImage};

#[derive(Parser)]
#[command(
    name = "cubevo",
    version,
    about = "Fisheye cubemap geometry and synthetic visual odometry tools"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Remap a fisheye image onto cube faces (PGM in, per-face PGMs plus an
    /// unfolded cross composite out).
    Remap {
        /// Calibration text file (polynomial camera model).
        #[arg(long)]
        calib: PathBuf,
        /// Source fisheye image, binary 8-bit PGM.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory for `<face>.pgm` and `cross.pgm`.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cube: CubeArgs,
    },
    /// Estimate the relative pose between two frames from face-pixel
    /// matches (CSV in, model and inlier CSVs out).
    Init {
        /// Match list: one `face1,u1,v1,face2,u2,v2` row per correspondence.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory for `model.csv` and `inliers.csv`.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cube: CubeArgs,
        /// Inlier band half-width around the epipolar line, pixels.
        #[arg(long, default_value_t = 1.0)]
        th: f64,
        /// RANSAC sampler seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the synthetic visual odometry pipeline on a scene config and
    /// write estimated/ground-truth trajectories plus a stats CSV.
    Vo {
        /// Scene description, `key = value` text.
        #[arg(long)]
        scene: PathBuf,
        /// Output directory for `est.txt`, `gt.txt` and `stats.csv`.
        #[arg(long)]
        out: PathBuf,
        /// Pose-optimization residual: ru, ra1, ra2, rt or rf.
        #[arg(long, default_value = "ru", value_parser = parse_metric)]
        metric: MetricKind,
        /// Overrides the scene seed (also seeds the estimator).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare pose-optimization metrics on a straight-track scene over
    /// twenty seeds (bundle adjustment disabled) and write a CSV table.
    BenchMetrics {
        /// Scene description, `key = value` text; must be a straight track.
        #[arg(long)]
        scene: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated metric list.
        #[arg(long, default_value = "ru,rt,rf", value_parser = parse_metric_list)]
        metric: MetricList,
        /// Overrides the scene seed (first of the twenty).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the similarity-aligned trajectory RMSE between two
    /// trajectory files.
    Ate {
        /// Estimated trajectory (timestamp tx ty tz qx qy qz qw).
        #[arg(long)]
        est: PathBuf,
        /// Reference trajectory, same format.
        #[arg(long)]
        gt: PathBuf,
    },
}

/// Cube-camera flags shared by the subcommands that build one.
#[derive(Args)]
struct CubeArgs {
    /// Face resolution in pixels (square faces); 450, 550 and 650 are the
    /// commonly used settings.
    #[arg(long, default_value_t = 650, value_parser = parse_face_size)]
    faces: u32,
    /// Comma-separated active faces.
    #[arg(
        long,
        default_value = "front,left,right,up,down",
        value_parser = parse_face_list
    )]
    active_faces: FaceList,
}

impl CubeArgs {
    fn camera(&self) -> Result<CubemapCamera, Box<dyn Error>> {
        Ok(CubemapCamera::new(self.faces, &self.active_faces.0)?)
    }
}

#[derive(Clone)]
struct FaceList(Vec<FaceId>);

#[derive(Clone)]
struct MetricList(Vec<MetricKind>);

fn parse_face_size(s: &str) -> Result<u32, String> {
    let v: u32 = s.parse().map_err(|_| format!("invalid face size `{s}`"))?;
    if (64..=4096).contains(&v) {
        Ok(v)
    } else {
        Err(format!("face size {v} outside 64..=4096"))
    }
}

fn parse_face_list(s: &str) -> Result<FaceList, String> {
    let mut faces = Vec::new();
    for part in s.split(',') {
        let name = part.trim();
        let face = FaceId::parse(name).ok_or_else(|| format!("unknown face `{name}`"))?;
        if faces.contains(&face) {
            return Err(format!("face `{name}` listed twice"));
        }
        faces.push(face);
    }
    Ok(FaceList(faces))
}

fn parse_metric(s: &str) -> Result<MetricKind, String> {
    MetricKind::parse(s).ok_or_else(|| format!("unknown metric `{s}` (ru, ra1, ra2, rt, rf)"))
}

fn parse_metric_list(s: &str) -> Result<MetricList, String> {
    let mut metrics = Vec::new();
    for part in s.split(',') {
        let m = parse_metric(part.trim())?;
        if metrics.contains(&m) {
            return Err(format!("metric `{}` listed twice", m.name()));
        }
        metrics.push(m);
    }
    Ok(MetricList(metrics))
}

/// Decimal cell with six significant digits, stable across platforms.
fn sig6(x: f64) -> String {
    format!("{x:.5e}")
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.cmd) {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}

fn run(cmd: Cmd) -> Result<(), Box<dyn Error>> {
    match cmd {
        Cmd::Remap {
            calib,
            input,
            out,
            cube,
        } => cmd_remap(&calib, &input, &out, &cube),
        Cmd::Init {
            input,
            out,
            cube,
            th,
            seed,
        } => cmd_init(&input, &out, &cube, th, seed),
        Cmd::Vo {
            scene,
            out,
            metric,
            seed,
        } => cmd_vo(&scene, &out, metric, seed),
        Cmd::BenchMetrics {
            scene,
            out,
            metric,
            seed,
        } => cmd_bench(&scene, &out, &metric.0, seed),
        Cmd::Ate { est, gt } => cmd_ate(&est, &gt),
    }
}

fn cmd_remap(
    calib: &Path,
    input: &Path,
    out: &Path,
    cube: &CubeArgs,
) -> Result<(), Box<dyn Error>> {
    let intr = load_ocamcalib_file(calib)?;
    let src = GrayImage::load_pgm(input)?;
    let cam = cube.camera()?;
    let table = build_remap_table(&intr, &cam)?;
    let faces = remap_image(&table, &intr, &src)?;
    std::fs::create_dir_all(out)?;
    for (face, img) in &faces {
        img.save_pgm(&out.join(format!("{}.pgm", face.name())))?;
    }
    let cross = compose_cross(&faces, cam.face_size())?;
    cross.save_pgm(&out.join("cross.pgm"))?;
    println!(
        "wrote {} faces of {px}x{px} px and cross.pgm to {}",
        faces.len(),
        out.display(),
        px = cam.face_size()
    );
    Ok(())
}

/// Parses `face1,u1,v1,face2,u2,v2` match rows; `#` lines are comments.
fn parse_matches(text: &str, cam: &CubemapCamera) -> Result<Vec<Correspondence>, Box<dyn Error>> {
    let mut corrs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(format!(
                "line {}: expected 6 fields `face1,u1,v1,face2,u2,v2`, got {}",
                idx + 1,
                fields.len()
            )
            .into());
        }
        let mut fps = Vec::with_capacity(2);
        for pair in fields.chunks(3) {
            let face = FaceId::parse(pair[0])
                .ok_or_else(|| format!("line {}: unknown face `{}`", idx + 1, pair[0]))?;
            let u: f64 = pair[1]
                .parse()
                .map_err(|_| format!("line {}: bad number `{}`", idx + 1, pair[1]))?;
            let v: f64 = pair[2]
                .parse()
                .map_err(|_| format!("line {}: bad number `{}`", idx + 1, pair[2]))?;
            fps.push(cubevo::calib::FacePoint::new(face, u, v));
        }
        corrs.push(Correspondence {
            r1: cam.unproject(&fps[0]),
            r2: cam.unproject(&fps[1]),
            fp1: fps[0],
            fp2: fps[1],
        });
    }
    Ok(corrs)
}

fn cmd_init(
    input: &Path,
    out: &Path,
    cube: &CubeArgs,
    th: f64,
    seed: u64,
) -> Result<(), Box<dyn Error>> {
    let cam = cube.camera()?;
    let corrs = parse_matches(&std::fs::read_to_string(input)?, &cam)?;
    let cfg = RansacConfig {
        th,
        seed,
        ..RansacConfig::default()
    };
    let res = ransac_essential(&cam, &corrs, &cfg)?;
    let inlier_corrs: Vec<Correspondence> = corrs
        .iter()
        .zip(&res.inliers)
        .filter(|(_, &keep)| keep)
        .map(|(c, _)| *c)
        .collect();
    let (rot, dir) = decompose_essential(&res.model, &inlier_corrs)?;
    std::fs::create_dir_all(out)?;

    let mut model = String::from("name,value\n");
    let e = res.model.0;
    let r = rot.matrix();
    for i in 0..3 {
        for j in 0..3 {
            let _ = writeln!(model, "e{i}{j},{}", sig6(e[(i, j)]));
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            let _ = writeln!(model, "r{i}{j},{}", sig6(r[(i, j)]));
        }
    }
    for (axis, value) in ["tx", "ty", "tz"].iter().zip(dir.iter()) {
        let _ = writeln!(model, "{axis},{}", sig6(*value));
    }
    std::fs::write(out.join("model.csv"), model)?;

    let mut inliers = String::from("index,inlier\n");
    for (i, flag) in res.inliers.iter().enumerate() {
        let _ = writeln!(inliers, "{i},{}", u8::from(*flag));
    }
    std::fs::write(out.join("inliers.csv"), inliers)?;
    println!(
        "inliers {} of {} in {} iterations",
        res.n_inliers,
        corrs.len(),
        res.iterations
    );
    Ok(())
}

fn load_scene(path: &Path, seed: Option<u64>) -> Result<SceneConfig, Box<dyn Error>> {
    let mut cfg = SceneConfig::parse(&std::fs::read_to_string(path)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn cmd_vo(
    scene_path: &Path,
    out: &Path,
    metric: MetricKind,
    seed: Option<u64>,
) -> Result<(), Box<dyn Error>> {
    let cfg = load_scene(scene_path, seed)?;
    let scene = gen_scene(&cfg)?;
    let cam = CubemapCamera::with_default_faces(cfg.face_size)?;
    let vo_cfg = VoConfig {
        metric,
        ransac_seed: cfg.seed,
        ..VoConfig::default()
    };
    let result = run_vo(&scene, &cam, &vo_cfg)?;
    let est = Trajectory::from_poses(&scene.timestamps, &result.poses)?;
    let gt = Trajectory::from_poses(&scene.timestamps, &scene.gt_poses)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("est.txt"), format_tum(&est))?;
    std::fs::write(out.join("gt.txt"), format_tum(&gt))?;
    let report = ate_rmse(&est, &gt, DEFAULT_ASSOC_WINDOW)?;

    let mut stats = String::from("name,value\n");
    let n_points = result.points.iter().filter(|p| p.is_some()).count();
    let _ = writeln!(stats, "frames,{}", scene.frames.len());
    let _ = writeln!(stats, "map_points,{n_points}");
    let _ = writeln!(stats, "init_frame_a,{}", result.init_pair.0);
    let _ = writeln!(stats, "init_frame_b,{}", result.init_pair.1);
    let _ = writeln!(stats, "path_length,{}", sig6(scene.path_length()));
    let _ = writeln!(stats, "ate_rmse,{}", sig6(report.rmse));
    let _ = writeln!(stats, "ate_pairs,{}", report.n_pairs);
    std::fs::write(out.join("stats.csv"), stats)?;
    println!("ate_rmse {:.6}", report.rmse);
    Ok(())
}

fn cmd_bench(
    scene_path: &Path,
    out: &Path,
    metrics: &[MetricKind],
    seed: Option<u64>,
) -> Result<(), Box<dyn Error>> {
    let cfg = load_scene(scene_path, seed)?;
    let records = bench_metrics(&cfg, metrics, 20)?;
    let mut csv = String::from("metric,seed,ate_rmse,failed\n");
    for rec in &records {
        let ate = rec.ate_rmse.map(sig6).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{ate},{}",
            rec.metric.name(),
            rec.seed,
            u8::from(rec.failed)
        );
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(out, csv)?;
    println!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn cmd_ate(est_path: &Path, gt_path: &Path) -> Result<(), Box<dyn Error>> {
    let est = parse_tum(&std::fs::read_to_string(est_path)?)?;
    let gt = parse_tum(&std::fs::read_to_string(gt_path)?)?;
    let report = ate_rmse(&est, &gt, DEFAULT_ASSOC_WINDOW)?;
    println!("ate_rmse {:.6}", report.rmse);
    Ok(())
}
