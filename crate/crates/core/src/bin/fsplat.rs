//! Pipeline driver: synthetic data generation, graph construction, training,
//! rendering, evaluation, and gradient verification.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or configuration error,
//! 3 verification failure.

use std::collections::BTreeMap;
use std::error::Error;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fsplat_core::camera::{CamPoint, CameraPose, FisheyeIntrinsics};
use fsplat_core::checkpoint::load_checkpoint;
use fsplat_core::colmap::load_colmap_text;
use fsplat_core::config::{Config, ConfigError, RunManifest};
use fsplat_core::graph::{
    build_camera_association, build_max_angle_association, read_graph, write_graph, CameraGraph,
};
use fsplat_core::img::save_png;
use fsplat_core::loss::{boundary_mask, psnr, psnr_masked, ssim};
use fsplat_core::render::{render, RenderOptions};
use fsplat_core::scene::{export_ply_file, SceneModel};
use fsplat_core::synth::export_as_dataset;
use fsplat_core::train::{self, Dataset, Strategy, TrainOutputs};

type CmdResult = Result<i32, Box<dyn Error>>;

#[derive(Parser)]
#[command(
    name = "fsplat",
    version,
    about = "Fisheye Gaussian-splat reconstruction pipeline"
)]
struct Cli {
    /// Worker threads (overrides the FSPLAT_WORKERS environment variable;
    /// default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fisheye dataset (images plus sparse geometry).
    Synth(SynthArgs),
    /// Build the view-association graph of a dataset.
    Graph(GraphArgs),
    /// Optimize a scene against a dataset.
    Train(TrainArgs),
    /// Render dataset views from a trained checkpoint.
    Render(RenderArgs),
    /// Evaluate a checkpoint against ground-truth images.
    Eval(EvalArgs),
    /// Verify the analytic projection derivatives against finite differences.
    CheckGrad(CheckGradArgs),
    /// Print the default configuration as TOML.
    InitConfig,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            return code;
        }
    };
    if let Err(msg) = init_workers(cli.workers) {
        eprintln!("error: {msg}");
        return 1;
    }
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Graph(a) => cmd_graph(a),
        Command::Train(a) => cmd_train(a),
        Command::Render(a) => cmd_render(a),
        Command::Eval(a) => cmd_eval(a),
        Command::CheckGrad(a) => cmd_check_grad(a),
        Command::InitConfig => {
            print!("{}", Config::default_toml());
            Ok(0)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Sizes the global worker pool from the flag or `FSPLAT_WORKERS`. Nothing
/// in the pipeline depends on the thread count for its results; this is a
/// resource knob only.
fn init_workers(flag: Option<usize>) -> Result<(), String> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("FSPLAT_WORKERS") {
            Ok(v) => Some(
                v.parse::<usize>()
                    .map_err(|_| format!("FSPLAT_WORKERS must be a positive integer, got {v:?}"))?,
            ),
            Err(_) => None,
        },
    };
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err("worker count must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn load_config(path: Option<&Path>) -> Result<Config, ConfigError> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn create_dir(path: &Path) -> Result<(), Box<dyn Error>> {
    std::fs::create_dir_all(path)
        .map_err(|e| format!("could not create {}: {e}", path.display()).into())
}

#[derive(Args)]
struct SynthArgs {
    /// Configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let config = load_config(a.config.as_deref())?;
    let scene = config.synth.to_scene(&config.camera)?;
    create_dir(&a.out)?;

    let t = Instant::now();
    let model = export_as_dataset(&scene, &a.out, config.synth.points_per_sphere)?;
    let elapsed = t.elapsed().as_secs_f64();

    let mut manifest = RunManifest::new("synth", 0, config);
    manifest.timings_sec.insert("export".into(), elapsed);
    for name in ["cameras.txt", "images.txt", "points3D.txt", "intrinsics.txt"] {
        manifest.outputs.push(name.into());
    }
    for im in model.images.values() {
        manifest.outputs.push(im.name.clone());
    }
    manifest.notes.push(format!(
        "{} views, {} seed points",
        model.images.len(),
        model.points.len()
    ));
    manifest.write(&a.out.join("manifest.toml"))?;

    println!(
        "wrote {} views and {} seed points to {} in {elapsed:.2}s",
        model.images.len(),
        model.points.len(),
        a.out.display()
    );
    Ok(0)
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory holding the sparse reconstruction.
    #[arg(long)]
    dataset: PathBuf,
    /// Output file; defaults to `<dataset>/graph.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Covisible neighbors kept per camera (overrides the configuration).
    #[arg(long)]
    keep_k: Option<usize>,
}

fn cmd_graph(a: GraphArgs) -> CmdResult {
    let config = load_config(a.config.as_deref())?;
    let keep_k = a.keep_k.unwrap_or(config.graph.keep_k);
    let out = a.out.unwrap_or_else(|| a.dataset.join("graph.txt"));

    let t = Instant::now();
    let model = load_colmap_text(&a.dataset)?;
    let graph = association_graph(&model, keep_k)?;
    write_graph(&out, &graph)?;
    let elapsed = t.elapsed().as_secs_f64();

    let edges: usize = graph.neighbors.values().map(Vec::len).sum();
    let mut manifest = RunManifest::new("graph", 0, config);
    manifest.timings_sec.insert("build".into(), elapsed);
    manifest
        .outputs
        .push(out.file_name().unwrap_or_default().to_string_lossy().into_owned());
    manifest.notes.push(format!(
        "keep_k = {keep_k}, {} cameras, {edges} directed edges",
        graph.neighbors.len()
    ));
    let manifest_path = out
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("graph_manifest.toml");
    manifest.write(&manifest_path)?;

    println!(
        "wrote association graph ({} cameras, {edges} edges) to {}",
        graph.neighbors.len(),
        out.display()
    );
    Ok(0)
}

/// Covisibility counting followed by the widest-baseline re-ranking.
fn association_graph(
    model: &fsplat_core::colmap::SfmModel,
    keep_k: usize,
) -> Result<CameraGraph, Box<dyn Error>> {
    let assoc = build_camera_association(model);
    let poses: BTreeMap<u32, CameraPose> = model
        .images
        .iter()
        .map(|(&id, im)| (id, im.pose.clone()))
        .collect();
    Ok(build_max_angle_association(&assoc, &poses, keep_k)?)
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory (sparse reconstruction plus images).
    #[arg(long)]
    dataset: PathBuf,
    /// View-association graph file; built in-process when omitted and the
    /// strategy needs one.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Output directory for checkpoints, metrics, and the final scene.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured iteration count.
    #[arg(long)]
    iterations: Option<u32>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured strategy (single, random_select, graph).
    #[arg(long)]
    strategy: Option<String>,
    /// Override the configured batch size.
    #[arg(long)]
    views_per_step: Option<usize>,
    /// Continue from a checkpoint instead of starting fresh.
    #[arg(long)]
    resume: Option<PathBuf>,
}

fn cmd_train(a: TrainArgs) -> CmdResult {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(v) = a.iterations {
        config.train.iterations = v;
    }
    if let Some(v) = a.seed {
        config.train.seed = v;
    }
    if let Some(v) = &a.strategy {
        config.train.strategy = v.clone();
    }
    if let Some(v) = a.views_per_step {
        config.train.views_per_step = v;
    }
    let params = config.train.to_params()?;
    create_dir(&a.out)?;

    let t_load = Instant::now();
    let model = load_colmap_text(&a.dataset)?;
    let dataset = Dataset::from_sfm(&model, &a.dataset)?;
    let mut notes = Vec::new();
    let graph = match (&a.graph, params.strategy) {
        (Some(path), _) => read_graph(path)?,
        (None, Strategy::Graph) => {
            notes.push(format!(
                "graph built in-process with keep_k = {}",
                config.graph.keep_k
            ));
            association_graph(&model, config.graph.keep_k)?
        }
        _ => CameraGraph::default(),
    };
    let load_secs = t_load.elapsed().as_secs_f64();

    let outputs = TrainOutputs {
        metrics_path: Some(a.out.join("metrics.csv")),
        checkpoint_dir: Some(a.out.clone()),
        checkpoint_every: config.train.checkpoint_every,
    };

    let t_train = Instant::now();
    let (state, report) = match &a.resume {
        Some(ckpt) => {
            notes.push(format!("resumed from {}", ckpt.display()));
            train::resume(load_checkpoint(ckpt)?, &dataset, &graph, &params, &outputs)?
        }
        None => {
            let points: Vec<(Vector3<f64>, [f64; 3])> = model
                .points
                .values()
                .map(|p| (p.position, p.rgb))
                .collect();
            if points.is_empty() {
                return Err("the reconstruction has no points to initialize from".into());
            }
            let scene = SceneModel::init_from_points(&points, config.train.sh_degree);
            train::train(scene, &dataset, &graph, &params, &outputs)?
        }
    };
    let train_secs = t_train.elapsed().as_secs_f64();

    export_ply_file(&state.scene, &a.out.join("scene.ply"))
        .map_err(|e| format!("could not write scene.ply: {e}"))?;

    let (train_idx, holdout_idx) = dataset.train_holdout_split(params.holdout_every);
    notes.push(format!(
        "strategy {}, {} training views, {} held out",
        params.strategy,
        train_idx.len(),
        holdout_idx.len()
    ));

    let mut manifest = RunManifest::new("train", params.seed, config.clone());
    manifest.timings_sec.insert("load".into(), load_secs);
    manifest.timings_sec.insert("train".into(), train_secs);
    manifest.outputs.push("metrics.csv".into());
    manifest.outputs.push("scene.ply".into());
    manifest
        .outputs
        .push(format!("checkpoint_{:06}.ckpt", state.iteration));
    manifest.notes = notes;
    if let Some(row) = report.evals.last() {
        manifest.notes.push(format!(
            "final: loss {:.6}, held-out PSNR {:.3} dB, SSIM {:.5}, {} gaussians",
            row.train_loss, row.heldout_psnr, row.heldout_ssim, row.num_gaussians
        ));
    }
    manifest.write(&a.out.join("manifest.toml"))?;

    println!(
        "trained to iteration {} in {train_secs:.1}s: {} gaussians",
        state.iteration,
        state.scene.len()
    );
    if let Some(row) = report.evals.last() {
        println!(
            "held-out PSNR {:.2} dB, SSIM {:.4}",
            row.heldout_psnr, row.heldout_ssim
        );
    }
    Ok(0)
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory providing the camera poses.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for the rendered images.
    #[arg(long)]
    out: PathBuf,
    /// Image IDs to render (repeatable); all views when omitted.
    #[arg(long = "view")]
    views: Vec<u32>,
}

fn cmd_render(a: RenderArgs) -> CmdResult {
    let config = load_config(a.config.as_deref())?;
    let params = config.train.to_params()?;
    let opts = RenderOptions {
        background: params.background,
        near: params.near,
    };
    let state = load_checkpoint(&a.ckpt)?;
    let model = load_colmap_text(&a.dataset)?;
    create_dir(&a.out)?;

    let ids: Vec<u32> = if a.views.is_empty() {
        model.images.keys().copied().collect()
    } else {
        for id in &a.views {
            if !model.images.contains_key(id) {
                return Err(format!("image {id} is not in the dataset").into());
            }
        }
        a.views.clone()
    };

    let t = Instant::now();
    let mut manifest = RunManifest::new("render", 0, config);
    for &id in &ids {
        let im = &model.images[&id];
        let intr = &model.cameras[&im.camera_id];
        let rendered = render(&state.scene, &im.pose, intr, &opts);
        let name = format!("render_{id:03}.png");
        save_png(&rendered.image, &a.out.join(&name))?;
        manifest.outputs.push(name);
    }
    let elapsed = t.elapsed().as_secs_f64();
    manifest.timings_sec.insert("render".into(), elapsed);
    manifest
        .notes
        .push(format!("{} views from {}", ids.len(), a.ckpt.display()));
    manifest.write(&a.out.join("manifest.toml"))?;

    println!(
        "rendered {} views to {} in {elapsed:.2}s",
        ids.len(),
        a.out.display()
    );
    Ok(0)
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory with ground-truth images.
    #[arg(long)]
    dataset: PathBuf,
    /// Which views to evaluate.
    #[arg(long, default_value = "all", value_parser = ["all", "train", "holdout"])]
    split: String,
    /// Field-of-view angle (degrees) beyond which pixels count as boundary.
    #[arg(long, default_value_t = 60.0)]
    boundary_deg: f64,
    /// Optional CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let config = load_config(a.config.as_deref())?;
    let params = config.train.to_params()?;
    let opts = RenderOptions {
        background: params.background,
        near: params.near,
    };
    let state = load_checkpoint(&a.ckpt)?;
    let model = load_colmap_text(&a.dataset)?;
    let dataset = Dataset::from_sfm(&model, &a.dataset)?;
    let (train_idx, holdout_idx) = dataset.train_holdout_split(params.holdout_every);
    let selected: Vec<usize> = match a.split.as_str() {
        "train" => train_idx,
        "holdout" => holdout_idx,
        _ => (0..dataset.views.len()).collect(),
    };
    if selected.is_empty() {
        return Err(format!("the {} split has no views", a.split).into());
    }

    let theta_lo = a.boundary_deg.to_radians();
    let mut rows = Vec::new();
    println!("view,psnr_db,ssim,boundary_psnr_db");
    for &i in &selected {
        let view = &dataset.views[i];
        let rendered = render(&state.scene, &view.pose, &view.intr, &opts);
        let p = psnr(&rendered.image, &view.gt)?;
        let s = ssim(&rendered.image, &view.gt)?;
        let mask = boundary_mask(&view.intr, theta_lo);
        let b = psnr_masked(&rendered.image, &view.gt, &mask)?;
        println!("{},{p:.4},{s:.6},{b:.4}", view.image_id);
        rows.push((view.image_id, p, s, b));
    }
    let n = rows.len() as f64;
    let mean_p = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let mean_s = rows.iter().map(|r| r.2).sum::<f64>() / n;
    let mean_b = rows.iter().map(|r| r.3).sum::<f64>() / n;
    println!("mean,{mean_p:.4},{mean_s:.6},{mean_b:.4}");

    if let Some(path) = &a.out {
        let mut text = String::from("view,psnr_db,ssim,boundary_psnr_db\n");
        for (id, p, s, b) in &rows {
            text.push_str(&format!("{id},{p},{s},{b}\n"));
        }
        text.push_str(&format!("mean,{mean_p},{mean_s},{mean_b}\n"));
        std::fs::write(path, text).map_err(|e| format!("could not write {}: {e}", path.display()))?;
    }
    Ok(0)
}

#[derive(Args)]
struct CheckGradArgs {
    /// Sample points per coefficient set.
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Negate one Jacobian entry (row,col with row in 0..2, col in 0..3)
    /// before checking, to demonstrate that the verification detects it.
    #[arg(long, hide = true, value_name = "R,C")]
    inject_flip: Option<String>,
}

fn cmd_check_grad(a: CheckGradArgs) -> CmdResult {
    let flip: Option<(usize, usize)> = match &a.inject_flip {
        None => None,
        Some(text) => {
            let parts: Vec<&str> = text.split(',').collect();
            let parsed = (|| {
                if parts.len() != 2 {
                    return None;
                }
                let r = parts[0].trim().parse::<usize>().ok()?;
                let c = parts[1].trim().parse::<usize>().ok()?;
                (r < 2 && c < 3).then_some((r, c))
            })();
            match parsed {
                Some(rc) => Some(rc),
                None => return Err(format!(
                    "--inject-flip expects R,C with R in 0..2 and C in 0..3, got {text:?}"
                )
                .into()),
            }
        }
    };
    if let Some((r, c)) = flip {
        println!("injecting a sign flip at J[{r}][{c}]");
    }

    let coeff_sets: [[f64; 4]; 5] = [
        [0.0, 0.0, 0.0, 0.0],
        [0.05, -0.01, 0.003, -0.0008],
        [-0.04, 0.015, -0.002, 0.0005],
        [0.12, 0.03, -0.008, 0.001],
        [0.02, 0.06, 0.01, -0.003],
    ];
    const TOLERANCE: f64 = 1e-4;

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut all_ok = true;
    for k in &coeff_sets {
        let intr = FisheyeIntrinsics::new(
            300.0,
            310.0,
            512.0,
            512.0,
            *k,
            1024,
            1024,
            FisheyeIntrinsics::DEFAULT_THETA_MAX,
        )?;
        let mut max_rel: f64 = 0.0;
        let mut worst = (0usize, 0usize);
        for _ in 0..a.points.max(1) {
            let theta = rng.gen_range(0.02..intr.theta_max - 0.02);
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let dist = rng.gen_range(0.5..5.0);
            let p = Vector3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ) * dist;

            let mut jac = intr.projection_jacobian(&CamPoint::new(p))?;
            if let Some((r, c)) = flip {
                jac[(r, c)] = -jac[(r, c)];
            }
            for c in 0..3 {
                if jac[(2, c)] != 0.0 {
                    return Err("the third Jacobian row must be exactly zero".into());
                }
            }

            for axis in 0..3 {
                let h = 1e-6 * (1.0 + p[axis].abs());
                let mut lo = p;
                let mut hi = p;
                lo[axis] -= h;
                hi[axis] += h;
                let u_lo = intr.project(&CamPoint::new(lo))?;
                let u_hi = intr.project(&CamPoint::new(hi))?;
                for row in 0..2 {
                    let fd = (u_hi[row] - u_lo[row]) / (2.0 * h);
                    let analytic = jac[(row, axis)];
                    let rel =
                        (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-9);
                    if rel > max_rel {
                        max_rel = rel;
                        worst = (row, axis);
                    }
                }
            }
        }
        let ok = max_rel < TOLERANCE;
        all_ok &= ok;
        println!(
            "k = [{:+.4}, {:+.4}, {:+.4}, {:+.4}]: max rel err {max_rel:.3e} at J[{}][{}] over {} points — {}",
            k[0],
            k[1],
            k[2],
            k[3],
            worst.0,
            worst.1,
            a.points.max(1),
            if ok { "ok" } else { "MISMATCH" }
        );
    }

    if all_ok {
        println!("gradient check passed (tolerance {TOLERANCE:.0e})");
        Ok(0)
    } else {
        println!("gradient check FAILED (tolerance {TOLERANCE:.0e})");
        Ok(3)
    }
}
