use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ens_core::fields::{ModelConfig, SpectralContext};
use ens_core::geometry::{export_obj, icosphere, import_obj, quad_sphere, IcrStats, Mesh, Vec3};
use ens_core::render::{psnr, Camera};
use ens_core::scenes::{
    camera_ring, read_json, render_ground_truth, write_json, Albedo, Light, RingSpec, SceneDataset, TargetShape,
};
use ens_core::train::{
    evaluate, evaluate_mesh, load_model, render_view, train, LoadedModel, Precision, TrainConfig,
};
use ens_core::{EnsError, Result};
use serde::Serialize;

use crate::{Cli, CliError, CliResult, Command, EvalArgs, ExtractArgs, GenSceneArgs, RenderArgs, ShapeKind, TrainArgs};

const LAMBDA_G_SWEEP: [f64; 4] = [0.0, 0.1, 0.3, 1.0];

struct Context {
    config: Option<PathBuf>,
    seed: Option<u64>,
    cache_dir: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let ctx = Context {
        config: cli.config,
        seed: cli.seed,
        cache_dir: cli.cache_dir.unwrap_or_else(|| std::env::temp_dir().join("ens-eigen-cache")),
    };
    match cli.command {
        Command::GenScene(a) => gen_scene(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Extract(a) => extract(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Render(a) => render(&ctx, a),
    }
}

fn print_json<S: Serialize>(value: &S) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("{text}");
    Ok(())
}

impl Context {
    fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => read_json(p)?,
            None => TrainConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        Ok(cfg)
    }

    fn spectral(&self, model: &ModelConfig) -> Result<Option<Arc<SpectralContext>>> {
        if !model.needs_basis() {
            return Ok(None);
        }
        std::fs::create_dir_all(&self.cache_dir).map_err(|e| EnsError::io(&self.cache_dir, e))?;
        Ok(Some(Arc::new(SpectralContext::build(model, Some(&self.cache_dir))?)))
    }

    fn load(&self, checkpoint: &Path) -> Result<LoadedModel> {
        load_model(checkpoint, |cfg| self.spectral(&cfg.model))
    }
}

#[derive(Serialize)]
struct SceneRequest {
    shape: TargetShape,
    ring: RingSpec,
    light: Light,
    albedo: Albedo,
    seed: u64,
}

fn gen_scene(ctx: &Context, a: GenSceneArgs) -> CliResult<()> {
    let shape = match a.shape {
        ShapeKind::Ellipsoid => TargetShape::Ellipsoid { a: a.a, b: a.b, c: a.c },
        ShapeKind::Bumpy => TargetShape::BumpySphere {
            radius: a.radius,
            amplitude: a.amplitude,
            frequency: a.frequency,
        },
        ShapeKind::Box => TargetShape::RoundedBox {
            half_extents: [a.a, a.b, a.c],
            radius: a.rounding,
        },
    };
    let high = a.high_frequency_albedo.unwrap_or(matches!(a.shape, ShapeKind::Bumpy));
    let request = SceneRequest {
        shape,
        ring: RingSpec {
            views: a.views,
            radius: a.camera_radius,
            resolution: a.res,
            ..RingSpec::default()
        },
        light: Light::default(),
        albedo: if high { Albedo::HIGH_FREQUENCY } else { Albedo::default() },
        seed: ctx.seed.unwrap_or(0),
    };
    let start = Instant::now();
    let cams = camera_ring(&request.ring)?;
    let ds = render_ground_truth(&request.shape, &cams, &request.light, &request.albedo, request.seed)?;
    ds.save(&a.out)?;
    write_json(&a.out.join("scene_config.json"), &request)?;
    log::info!(
        "{} views at {}x{} written to {} in {:.1}s",
        ds.len(),
        a.res,
        a.res,
        a.out.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    steps: u64,
    seconds: f64,
    final_total: Option<f64>,
    eval: Option<ens_core::train::EvalReport>,
}

fn train_one(ctx: &Context, ds: Arc<SceneDataset>, cfg: &TrainConfig, out: &Path) -> Result<()> {
    let spectral = ctx.spectral(&cfg.resolved().model)?;
    let (steps, seconds, last, report) = match cfg.precision {
        Precision::F32 => {
            let o = train::<f32>(ds.clone(), cfg, spectral, Some(out))?;
            let t = &o.trainer;
            let r = evaluate(&t.model, &t.shaders, t.domain(), &ds, cfg.schedule.seed)?;
            (t.step, o.seconds, o.records.last().map(|r| r.total), r)
        }
        Precision::F64 => {
            let o = train::<f64>(ds.clone(), cfg, spectral, Some(out))?;
            let t = &o.trainer;
            let r = evaluate(&t.model, &t.shaders, t.domain(), &ds, cfg.schedule.seed)?;
            (t.step, o.seconds, o.records.last().map(|r| r.total), r)
        }
    };
    let summary = TrainSummary {
        steps,
        seconds,
        final_total: last,
        eval: Some(report),
    };
    write_json(&out.join("summary.json"), &summary)?;
    log::info!(
        "{steps} steps in {seconds:.1}s; chamfer {:?}; outputs in {}",
        summary.eval.as_ref().and_then(|e| e.chamfer_l1),
        out.display()
    );
    Ok(())
}

fn train_cmd(ctx: &Context, a: TrainArgs) -> CliResult<()> {
    let mut cfg = ctx.train_config()?;
    if a.ablate.is_some() {
        cfg.ablation = a.ablate;
    }
    if let Some(g) = a.lambda_g {
        cfg.weights.geometry = g;
    }
    let ds = Arc::new(SceneDataset::load(&a.data)?);
    if a.lambda_g_sweep {
        for g in LAMBDA_G_SWEEP {
            let mut c = cfg.clone();
            c.weights.geometry = g;
            train_one(ctx, ds.clone(), &c, &a.out.join(format!("lambda_g_{g}")))?;
        }
        Ok(())
    } else {
        Ok(train_one(ctx, ds, &cfg, &a.out)?)
    }
}

fn extraction_domain(tri_level: Option<u32>, quad: Option<usize>, fallback: u32) -> Result<(Mesh, String)> {
    match (tri_level, quad) {
        (_, Some(n)) => Ok((quad_sphere(n)?, format!("quad {n}"))),
        (level, None) => {
            let level = level.unwrap_or(fallback);
            Ok((icosphere(level)?, format!("tri level {level}")))
        }
    }
}

#[derive(Serialize)]
struct ExtractReport {
    checkpoint: PathBuf,
    connectivity: String,
    vertices: usize,
    faces: usize,
    euler_characteristic: i64,
    watertight: bool,
    icr: IcrStats,
    extraction_seconds: f64,
    output: PathBuf,
}

fn extract(ctx: &Context, a: ExtractArgs) -> CliResult<()> {
    let loaded = ctx.load(&a.checkpoint)?;
    let (domain, connectivity) = extraction_domain(
        a.connectivity.tri_level,
        a.connectivity.quad,
        loaded.config.schedule.fine_level,
    )?;
    let start = Instant::now();
    let mesh = loaded.model.extract_mesh(&domain)?;
    let seconds = start.elapsed().as_secs_f64();
    export_obj(&mesh, &a.out)?;
    let report = ExtractReport {
        checkpoint: a.checkpoint,
        connectivity,
        vertices: mesh.vertex_count(),
        faces: mesh.face_count(),
        euler_characteristic: mesh.euler_characteristic(),
        watertight: mesh.is_closed_and_oriented(),
        icr: IcrStats::of_mesh(&mesh),
        extraction_seconds: seconds,
        output: a.out.clone(),
    };
    write_json(&a.out.with_extension("json"), &report)?;
    eprintln!("{:<10} {:>8} {:>8} {:>8} {:>8}", "", "average", "%<0.10", "%<0.25", "%<0.90");
    eprintln!(
        "{:<10} {:>8.3} {:>8.2} {:>8.2} {:>8.2}",
        "ICR", report.icr.mean, report.icr.pct_below_010, report.icr.pct_below_025, report.icr.pct_below_090
    );
    print_json(&report)
}

fn eval(ctx: &Context, a: EvalArgs) -> CliResult<()> {
    let ds = SceneDataset::load(&a.data)?;
    let seed = ctx.seed.unwrap_or(0);
    let report = match (&a.source.checkpoint, &a.source.obj) {
        (Some(ck), _) => {
            let loaded = ctx.load(ck)?;
            let (domain, _) = extraction_domain(a.tri_level, None, loaded.config.schedule.fine_level)?;
            evaluate(&loaded.model, &loaded.shaders, &domain, &ds, seed)?
        }
        (None, Some(obj)) => evaluate_mesh(&import_obj(obj)?, &ds, seed)?,
        (None, None) => return Err(CliError::Usage("eval needs --checkpoint or --obj".into())),
    };
    match &a.out {
        Some(p) => write_json(p, &report)?,
        None => print_json(&report)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct RenderReport {
    image: PathBuf,
    normals: PathBuf,
    psnr: Option<f64>,
}

fn render(ctx: &Context, a: RenderArgs) -> CliResult<()> {
    let loaded = ctx.load(&a.checkpoint)?;
    let (cam, reference): (Camera, Option<_>) = match (&a.data, a.view, &a.eye) {
        (Some(data), Some(v), _) => {
            let ds = SceneDataset::load(data)?;
            if v >= ds.len() {
                return Err(CliError::Usage(format!("view {v} outside the {} dataset views", ds.len())));
            }
            (ds.cameras[v].clone(), Some(ds.images[v].clone()))
        }
        (None, Some(v), _) => {
            let cams = camera_ring(&RingSpec {
                resolution: a.res,
                focal_scale: a.focal_scale,
                ..RingSpec::default()
            })?;
            let cam = cams
                .get(v)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("view {v} outside the default {}-view ring", cams.len())))?;
            (cam, None)
        }
        (_, None, Some(eye)) => {
            if eye.len() != 3 {
                return Err(CliError::Usage(format!("--eye needs x,y,z, got {} values", eye.len())));
            }
            let eye = Vec3::new(eye[0], eye[1], eye[2]);
            let up = if eye.normalize().z.abs() > 0.999 { Vec3::y() } else { Vec3::z() };
            let focal = a.focal_scale * a.res as f64;
            (Camera::look_at(eye, Vec3::zeros(), up, focal, a.res, a.res)?, None)
        }
        (_, None, None) => return Err(CliError::Usage("render needs --view or --eye".into())),
    };
    let (domain, _) = extraction_domain(a.tri_level, None, loaded.config.schedule.fine_level)?;
    let view = render_view(&loaded.model, &loaded.shaders, &domain, &cam)?;
    let normals = a.out.with_file_name(format!(
        "{}_normals.png",
        a.out.file_stem().and_then(|s| s.to_str()).unwrap_or("render")
    ));
    view.base.save_png(&a.out)?;
    view.normals.save_png(&normals)?;
    let psnr = reference.map(|r| psnr(&view.base, &r, None)).transpose()?;
    print_json(&RenderReport {
        image: a.out,
        normals,
        psnr,
    })
}
