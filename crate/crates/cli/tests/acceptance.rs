//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.
//!
//! The reconstruction criteria train several models at full scale; expect roughly 45 minutes on one core.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use ens_autodiff::gradcheck::{check_gradients, relative_error};
use ens_autodiff::{Activation, AutodiffError, Graph, Mlp, Tensor, Var};
use ens_core::fields::SpectralContext;
use ens_core::geometry::{icosphere, quad_sphere, sample_surface, chamfer_l1, IcrStats, Mesh, Topology, Vec3};
use ens_core::render::{face_cross, rasterize, soft_mask, Camera, MaskParams, ShaderConfig, ShaderPair};
use ens_core::scenes::{camera_ring, render_ground_truth, Albedo, Light, RingSpec, SceneDataset, TargetShape};
use ens_core::spectral::{eigenbasis_dense, LaplacianPair};
use ens_core::train::{
    loss_icr_graph, loss_normal_graph, loss_photometric, mean_abs_error, mesh_chamfer, normal_pairs, train,
    Ablation, TrainConfig, Trainer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, name: &str, outcome: Outcome) {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
}

fn lift<T>(r: ens_core::Result<T>) -> ens_autodiff::Result<T> {
    r.map_err(|e| AutodiffError::InvalidArgument {
        op: "core",
        msg: e.to_string(),
    })
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| {
        let m = rng.random_range(0.2..1.5);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Scalar from any output through fixed random weights, so every entry is checked.
fn contract(g: &mut Graph<f64>, y: Var) -> ens_autodiff::Result<Var> {
    let [r, c] = g.shape(y);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let w = g.constant(random(&mut rng, r, c, -1.0, 1.0));
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

type Check = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> ens_autodiff::Result<Var>>;

fn primitive_checks() -> Vec<(&'static str, Vec<Tensor<f64>>, Check)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = &mut rng;
    let a = random(r, 4, 3, -1.5, 1.5);
    let b = random(r, 4, 3, -1.5, 1.5);
    let row = random(r, 1, 3, -1.0, 1.0);
    let pos = random(r, 4, 3, 0.3, 2.0);
    let kinked = away_from_zero(r, 4, 3);
    let m = random(r, 3, 5, -1.0, 1.0);
    let c = random(r, 2, 3, -1.0, 1.0);
    let mut v: Vec<(&'static str, Vec<Tensor<f64>>, Check)> = Vec::new();
    macro_rules! unary {
        ($name:literal, $input:expr, |$g:ident, $x:ident| $body:expr) => {
            v.push((
                $name,
                vec![$input.clone()],
                Box::new(|$g: &mut Graph<f64>, xs: &[Var]| {
                    let $x = xs[0];
                    let y = $body;
                    contract($g, y)
                }),
            ));
        };
    }
    macro_rules! binary {
        ($name:literal, $x0:expr, $x1:expr, |$g:ident, $x:ident, $y:ident| $body:expr) => {
            v.push((
                $name,
                vec![$x0.clone(), $x1.clone()],
                Box::new(|$g: &mut Graph<f64>, xs: &[Var]| {
                    let ($x, $y) = (xs[0], xs[1]);
                    let out = $body;
                    contract($g, out)
                }),
            ));
        };
    }
    binary!("add", a, b, |g, x, y| g.add(x, y)?);
    binary!("add (broadcast row)", a, row, |g, x, y| g.add(x, y)?);
    binary!("sub", a, b, |g, x, y| g.sub(x, y)?);
    binary!("mul", a, b, |g, x, y| g.mul(x, y)?);
    binary!("div", a, kinked, |g, x, y| g.div(x, y)?);
    binary!("matmul", a, m, |g, x, y| g.matmul(x, y)?);
    binary!("concat", a, b, |g, x, y| g.concat(&[x, y])?);
    binary!("concat_rows", a, c, |g, x, y| g.concat_rows(&[x, y])?);
    binary!("cross", a, b, |g, x, y| g.cross(x, y)?);
    binary!("dot", a, b, |g, x, y| g.dot(x, y)?);
    unary!("neg", a, |g, x| g.neg(x));
    unary!("scale", a, |g, x| g.scale(x, 1.7));
    unary!("add_scalar", a, |g, x| g.add_scalar(x, -0.3));
    unary!("abs", kinked, |g, x| g.abs(x));
    unary!("square", a, |g, x| g.square(x));
    unary!("sqrt", pos, |g, x| g.sqrt(x));
    unary!("sigmoid", a, |g, x| g.sigmoid(x));
    unary!("relu", kinked, |g, x| g.relu(x));
    unary!("softplus", a, |g, x| g.softplus(x));
    unary!("sin", a, |g, x| g.sin(x));
    unary!("cos", a, |g, x| g.cos(x));
    unary!("exp", a, |g, x| g.exp(x));
    unary!("ln", pos, |g, x| g.ln(x));
    unary!("clamp", kinked, |g, x| g.clamp(x, -1.0, 1.0));
    unary!("slice_cols", a, |g, x| g.slice_cols(x, 1, 3)?);
    unary!("sum", a, |g, x| g.sum(x));
    unary!("mean", a, |g, x| g.mean(x));
    unary!("row_sum", a, |g, x| g.row_sum(x));
    unary!("normalize_rows", a, |g, x| g.normalize_rows(x));
    unary!("gather", a, |g, x| g.gather(x, &[3, 0, 0, 2, 1])?);
    unary!("scatter_add", a, |g, x| g.scatter_add(x, &[1, 4, 1, 0], 5)?);
    let mlp = Mlp::<f64>::new(&[3, 16, 16, 2], Activation::Softplus, false, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    v.push((
        "mlp forward",
        vec![a.clone()],
        Box::new(move |g: &mut Graph<f64>, xs: &[Var]| {
            let (y, _) = mlp.forward(g, xs[0])?;
            contract(g, y)
        }),
    ));
    v
}

fn perturbed_sphere(level: u32, scale: f64, noise: f64, seed: u64) -> Mesh {
    let mut m = icosphere(level).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in &mut m.vertices {
        *p = *p * (scale + rng.random_range(-noise..noise));
    }
    m
}

fn vertex_tensor(vs: &[Vec3]) -> Tensor<f64> {
    Tensor::from_fn(vs.len(), 3, |r, c| vs[r][c])
}

fn loss_checks() -> Vec<(&'static str, Vec<Tensor<f64>>, Check)> {
    let mut v: Vec<(&'static str, Vec<Tensor<f64>>, Check)> = Vec::new();
    let mesh = perturbed_sphere(1, 1.0, 0.1, 2);
    let tris = mesh.triangles();
    let topo = Topology::build_closed(&tris).unwrap();
    let pairs = normal_pairs(&topo, &mesh.vertices, &tris);
    {
        let (tris, pairs) = (tris.clone(), pairs.clone());
        v.push((
            "normal consistency L_n",
            vec![vertex_tensor(&mesh.vertices)],
            Box::new(move |g: &mut Graph<f64>, xs: &[Var]| {
                let fc = lift(face_cross(g, xs[0], &tris))?;
                lift(loss_normal_graph(g, fc, &pairs))
            }),
        ));
    }
    {
        let tris = tris.clone();
        v.push((
            "triangle quality L_ICR",
            vec![vertex_tensor(&mesh.vertices)],
            Box::new(move |g: &mut Graph<f64>, xs: &[Var]| lift(loss_icr_graph(g, xs[0], &tris))),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gt = random(&mut rng, 20, 3, 0.2, 0.8);
    let off = away_from_zero(&mut rng, 20, 3).map(|x| x * 0.1);
    let base = Tensor::from_fn(20, 3, |r, c| gt.get(r, c) + off.get(r, c));
    let full = Tensor::from_fn(20, 3, |r, c| gt.get(r, c) - 0.5 * off.get(r, c));
    {
        let gt = gt.clone();
        v.push((
            "photometric L_c",
            vec![base.clone(), full.clone()],
            Box::new(move |g: &mut Graph<f64>, xs: &[Var]| lift(loss_photometric(g, &gt, xs[0], xs[1], 0.1))),
        ));
    }
    let (cam, smesh, stris, stopo, gbuf, target) = mask_fixture();
    {
        let (cam, positions, stris, stopo, gbuf, target) =
            (cam.clone(), smesh.vertices.clone(), stris.clone(), stopo.clone(), gbuf.clone(), target.clone());
        v.push((
            "silhouette L_m",
            vec![vertex_tensor(&smesh.vertices)],
            Box::new(move |g: &mut Graph<f64>, xs: &[Var]| {
                let params = MaskParams { sharpness: 4.0, band: 3.0 };
                let sm = lift(soft_mask(g, &cam, xs[0], &positions, &stris, &stopo, &gbuf, &params))?;
                let img = sm.image(g).map_err(|e| AutodiffError::InvalidArgument { op: "mask", msg: e.to_string() })?;
                lift(mean_abs_error(g, &target, img))
            }),
        ));
    }
    {
        let positions = smesh.vertices.clone();
        v.push((
            "weighted objective",
            vec![vertex_tensor(&smesh.vertices), base, full],
            Box::new(move |g: &mut Graph<f64>, xs: &[Var]| {
                let params = MaskParams { sharpness: 4.0, band: 3.0 };
                let sm = lift(soft_mask(g, &cam, xs[0], &positions, &stris, &stopo, &gbuf, &params))?;
                let img = lift(sm.image(g))?;
                let lm = lift(mean_abs_error(g, &target, img))?;
                let fc = lift(face_cross(g, xs[0], &stris))?;
                let pairs = normal_pairs(&stopo, &positions, &stris);
                let ln = lift(loss_normal_graph(g, fc, &pairs))?;
                let li = lift(loss_icr_graph(g, xs[0], &stris))?;
                let lc = lift(loss_photometric(g, &gt, xs[1], xs[2], 0.1))?;
                let terms = [(lc, 1.0), (lm, 2.0), (ln, 0.01), (li, 5e-3)];
                let mut acc = g.scale(terms[0].0, terms[0].1);
                for &(t, w) in &terms[1..] {
                    let s = g.scale(t, w);
                    acc = g.add(acc, s)?;
                }
                Ok(acc)
            }),
        ));
    }
    v
}

fn mask_fixture() -> (Camera, Mesh, Vec<[usize; 3]>, Topology, ens_core::render::GBuffer, Tensor<f64>) {
    let mesh = perturbed_sphere(2, 0.7, 0.05, 5);
    let tris = mesh.triangles();
    let topo = Topology::build_closed(&tris).unwrap();
    let cam = Camera::look_at(Vec3::new(0.3, -3.0, 0.5), Vec3::zeros(), Vec3::z(), 38.4, 32, 32).unwrap();
    let gbuf = rasterize(&cam, &mesh.vertices, &tris);
    let shape = TargetShape::Ellipsoid { a: 0.8, b: 0.6, c: 0.7 };
    let target = Tensor::from_fn(32 * 32, 1, |p, _| {
        let ray = cam.pixel_ray(p % 32, p / 32);
        f64::from(u8::from(shape.intersect(&cam.center(), &ray).is_some()))
    });
    (cam, mesh, tris, topo, gbuf, target)
}

fn scene(shape: TargetShape, albedo: Albedo, views: usize, res: usize) -> Arc<SceneDataset> {
    let cams = camera_ring(&RingSpec {
        views,
        resolution: res,
        ..RingSpec::default()
    })
    .unwrap();
    Arc::new(render_ground_truth(&shape, &cams, &Light::default(), &albedo, 0).unwrap())
}

/// Central differences of the full per-step objective against backpropagation for selected parameters.
fn pipeline_gradient_error(fine: bool) -> Result<(f64, usize), String> {
    let cfg = TrainConfig::smoke();
    let ds = scene(TargetShape::Ellipsoid { a: 0.9, b: 0.6, c: 0.6 }, Albedo::default(), 6, 16);
    let sp = Some(Arc::new(SpectralContext::build(&cfg.model, None).map_err(|e| e.to_string())?));
    let mut t = Trainer::<f64>::new(ds, &cfg, sp).map_err(|e| e.to_string())?;
    for _ in 0..3 {
        t.step().map_err(|e| e.to_string())?;
    }
    if fine {
        t.enter_fine_stage().map_err(|e| e.to_string())?;
        t.step = cfg.schedule.coarse_iters + 2;
        t.step().map_err(|e| e.to_string())?;
    }
    let step = t.step;
    let views = t.views_for(step);
    let sg = t.loss_graph(&views, step).map_err(|e| e.to_string())?;
    let grads = sg.graph.backward(sg.root).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    // (group, tensor, entry) with group 0 = deformation, 1 = h_z, 2 = h_g
    let mut picks = Vec::new();
    let groups: [(usize, &[Var]); 3] = [
        (if fine { 20 } else { 10 }, &sg.deform.as_ref().unwrap().params),
        (if fine { 0 } else { 5 }, &sg.hz.as_ref().unwrap().params),
        (if fine { 0 } else { 5 }, &sg.hg.as_ref().unwrap().params),
    ];
    for (gi, (count, vars)) in groups.iter().enumerate() {
        for _ in 0..*count {
            let k = rng.random_range(0..vars.len());
            let len = sg.graph.value(vars[k]).len();
            picks.push((gi, k, rng.random_range(0..len), vars[k]));
        }
    }
    let analytic: Vec<f64> = picks
        .iter()
        .map(|&(_, _, i, v)| grads.get(v).map_or(0.0, |g| g.data()[i]))
        .collect();
    drop(sg);
    let h = 1e-6;
    let mut numeric = Vec::with_capacity(picks.len());
    for &(gi, k, i, _) in &picks {
        let mut eval = |delta: f64, t: &mut Trainer<f64>| -> Result<f64, String> {
            let net = match gi {
                0 if fine => &mut t.model.fine,
                0 => t.model.coarse.as_mut().unwrap(),
                1 => &mut t.shaders.hz,
                _ => &mut t.shaders.hg,
            };
            net.params_mut()[k].data_mut()[i] += delta;
            let sg = t.loss_graph(&views, step).map_err(|e| e.to_string())?;
            let v = sg.graph.value(sg.root).item();
            let net = match gi {
                0 if fine => &mut t.model.fine,
                0 => t.model.coarse.as_mut().unwrap(),
                1 => &mut t.shaders.hz,
                _ => &mut t.shaders.hg,
            };
            net.params_mut()[k].data_mut()[i] -= delta;
            Ok(v)
        };
        let fp = eval(h, &mut t)?;
        let fm = eval(-h, &mut t)?;
        numeric.push((fp - fm) / (2.0 * h));
    }
    Ok((relative_error(&analytic, &numeric), picks.len()))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut worst: (f64, &str) = (0.0, "");
    let mut count = 0;
    for (name, inputs, f) in primitive_checks().into_iter().chain(loss_checks()) {
        let report = check_gradients(&inputs, 1e-6, |g, v| f(g, v)).map_err(|e| format!("{name}: {e}"))?;
        let err = report.max_relative_error();
        if !(err <= 1e-5) {
            return Err(format!("{name}: relative error {err:.2e} > 1e-5"));
        }
        if err >= worst.0 {
            worst = (err, name);
        }
        count += 1;
    }
    let (coarse_err, n1) = pipeline_gradient_error(false)?;
    let (fine_err, n2) = pipeline_gradient_error(true)?;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "{count} primitive/loss checks, worst {:.1e} ({}); 16x16 pipeline {:.1e} over {n1} coarse-stage and {:.1e} over {n2} fine-stage parameters; {secs:.0}s",
        worst.0, worst.1, coarse_err, fine_err
    );
    if coarse_err <= 1e-3 && fine_err <= 1e-3 && secs < 300.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn spectral_oracle() -> Outcome {
    let start = Instant::now();
    let m = icosphere(4).map_err(|e| e.to_string())?;
    let lap = LaplacianPair::cotan(&m).map_err(|e| e.to_string())?;
    let b = eigenbasis_dense(&lap, m.id(), 36).map_err(|e| e.to_string())?;
    let mut worst_err: f64 = 0.0;
    let mut worst_spread: f64 = 0.0;
    for l in 1..=5usize {
        let exact = (l * (l + 1)) as f64;
        let vals = &b.eigenvalues[l * l..(l + 1) * (l + 1)];
        for v in vals {
            worst_err = worst_err.max((v - exact).abs() / exact);
        }
        let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(a, c), &v| (a.min(v), c.max(v)));
        worst_spread = worst_spread.max((hi - lo) / exact);
    }
    let separated = b.eigenvalues[35] < 0.9 * 42.0 && b.eigenvalues[0].abs() < 1e-8;
    let mut ortho: f64 = 0.0;
    for i in 0..b.dim() {
        for j in 0..=i {
            let t = if i == j { 1.0 } else { 0.0 };
            ortho = ortho.max((b.mass_inner(&lap, i, j) - t).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "max eigenvalue error {:.2}%, max multiplet spread {:.3}%, A-orthonormality {ortho:.1e}, {secs:.1}s",
        100.0 * worst_err,
        100.0 * worst_spread
    );
    if worst_err <= 0.02 && worst_spread <= 0.005 && separated && ortho <= 1e-8 && secs < 120.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn detach_contract() -> Outcome {
    let shaders = ShaderPair::<f64>::new(ShaderConfig::default(), 16).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (x, n, z, gt) = (
        random(&mut rng, 32, 3, -1.0, 1.0),
        random(&mut rng, 32, 3, -1.0, 1.0),
        random(&mut rng, 32, 16, -1.0, 1.0),
        random(&mut rng, 32, 3, 0.0, 1.0),
    );
    let mut g = Graph::new();
    let (xv, nv, zv) = (g.param(x), g.param(n), g.param(z));
    let sh = shaders
        .forward(&mut g, xv, nv, zv, &Vec3::new(0.0, -3.0, 0.0))
        .map_err(|e| e.to_string())?;
    // geometry-shader term alone: no gradient may reach h_z or the features
    let only_g = mean_abs_error(&mut g, &gt, sh.full).map_err(|e| e.to_string())?;
    let only_g = g.scale(only_g, 0.1);
    let grads = g.backward(only_g).map_err(|e| e.to_string())?;
    let leaked: f64 = sh
        .hz
        .params
        .iter()
        .chain([&zv])
        .filter_map(|&p| grads.get(p))
        .flat_map(|t| t.data().iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    let reaches_hg = sh.hg.params.iter().any(|&p| grads.get(p).is_some_and(|t| t.norm() > 0.0));
    let full = loss_photometric(&mut g, &gt, sh.base, sh.full, 0.1).map_err(|e| e.to_string())?;
    let grads = g.backward(full).map_err(|e| e.to_string())?;
    let feature_term = sh.hz.params.iter().any(|&p| grads.get(p).is_some_and(|t| t.norm() > 0.0));
    let detail = format!("max |dL_g/d theta_hz| = {leaked:e}; h_g trained: {reaches_hg}; h_z trained by its own term: {feature_term}");
    if leaked == 0.0 && reaches_hg && feature_term {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ens_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ens"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = ens_bin().args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`ens {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn determinism(tmp: &Path) -> Outcome {
    let data = tmp.join("det_scene");
    let cache = tmp.join("cache");
    let cfg_path = tmp.join("tiny.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&TrainConfig::smoke()).unwrap()).map_err(|e| e.to_string())?;
    let s = |p: &Path| p.to_str().unwrap().to_string();
    run_cli(&["gen-scene", "--shape", "ellipsoid", "--views", "6", "--res", "24", "--out", &s(&data)])?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.join(format!("det_{run}"));
        run_cli(&[
            "--threads", "1", "--seed", "7", "--config", &s(&cfg_path), "--cache-dir", &s(&cache),
            "train", "--data", &s(&data), "--out", &s(&out),
        ])?;
        let ck = std::fs::read(out.join("final.ckpt")).map_err(|e| e.to_string())?;
        let metrics = std::fs::read(out.join("metrics.jsonl")).map_err(|e| e.to_string())?;
        outputs.push((ck, metrics));
    }
    let same_ck = outputs[0].0 == outputs[1].0;
    let same_metrics = outputs[0].1 == outputs[1].1;
    let detail = format!(
        "checkpoints identical: {same_ck} ({} bytes); metrics identical: {same_metrics} ({} lines)",
        outputs[0].0.len(),
        outputs[0].1.iter().filter(|&&b| b == b'\n').count()
    );
    if same_ck && same_metrics {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Run {
    chamfer: f64,
    icr: IcrStats,
    seconds: f64,
    trainer: Option<Trainer<f32>>,
    diverged: Option<String>,
}

fn full_run(ds: &Arc<SceneDataset>, cfg: &TrainConfig, cache: &Path, out: Option<&Path>, label: &str) -> Run {
    let resolved = cfg.resolved();
    let sp = resolved
        .model
        .needs_basis()
        .then(|| Arc::new(SpectralContext::build(&resolved.model, Some(cache)).unwrap()));
    let start = Instant::now();
    let result = train::<f32>(ds.clone(), cfg, sp, out);
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(o) => {
            let mesh = o.trainer.extract(&icosphere(cfg.schedule.fine_level).unwrap()).unwrap();
            let chamfer = mesh_chamfer(&mesh, &ds.gt_points, 0).unwrap();
            let icr = IcrStats::of_mesh(&mesh);
            eprintln!("  [{label}] {seconds:.0}s, chamfer {chamfer:.4}, mean ICR {:.3}", icr.mean);
            Run {
                chamfer,
                icr,
                seconds,
                trainer: Some(o.trainer),
                diverged: None,
            }
        }
        Err(e) => {
            eprintln!("  [{label}] stopped after {seconds:.0}s: {e}");
            Run {
                chamfer: f64::INFINITY,
                icr: IcrStats::from_values(&[]),
                seconds,
                trainer: None,
                diverged: Some(e.to_string()),
            }
        }
    }
}

fn explicitness(t: &Trainer<f32>, train_secs: f64) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut meshes = Vec::new();
    let mut slowest: f64 = 0.0;
    let domains: Vec<(String, Mesh)> = vec![
        ("tri 4".into(), icosphere(4).unwrap()),
        ("tri 5".into(), icosphere(5).unwrap()),
        ("tri 6".into(), icosphere(6).unwrap()),
        ("quad 41".into(), quad_sphere(41).unwrap()),
    ];
    for (name, domain) in domains {
        let start = Instant::now();
        let mesh = t.extract(&domain).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        let chi = mesh.euler_characteristic();
        let closed = mesh.is_closed_and_oriented();
        ok &= chi == 2 && closed;
        lines.push(format!("{name}: {} verts, chi {chi}, watertight {closed}, {:.0} ms", mesh.vertex_count(), 1e3 * secs));
        meshes.push(mesh);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let samples: Vec<Vec<Vec3>> = meshes[..3]
        .iter()
        .map(|m| sample_surface(m, 100_000, &mut rng).unwrap())
        .collect();
    let d45 = chamfer_l1(&samples[0], &samples[1]).map_err(|e| e.to_string())?;
    let d56 = chamfer_l1(&samples[1], &samples[2]).map_err(|e| e.to_string())?;
    ok &= d56 < d45;
    let frac = slowest / train_secs;
    ok &= frac < 0.01;
    let detail = format!(
        "{}; consecutive-resolution chamfer 4-5 {d45:.5} > 5-6 {d56:.5}; slowest extraction {:.3}% of training",
        lines.join("; "),
        100.0 * frac
    );
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let cache: PathBuf = tmp.path().join("cache");
    std::fs::create_dir_all(&cache).unwrap();
    let mut report = Report { failures: 0 };

    report.record("gradient suite", gradient_suite());
    report.record("spectral oracle", spectral_oracle());
    report.record("detach contract", detach_contract());
    report.record("determinism", determinism(tmp.path()));

    let ellipsoid = scene(TargetShape::Ellipsoid { a: 0.9, b: 0.6, c: 0.6 }, Albedo::default(), 24, 128);
    let desk = TrainConfig::default();
    let baseline = mesh_chamfer(&icosphere(desk.schedule.fine_level).unwrap(), &ellipsoid.gt_points, 0).unwrap();
    let full = full_run(&ellipsoid, &desk, &cache, Some(&tmp.path().join("ellipsoid")), "ellipsoid full");
    report.record("synthetic reconstruction", {
        let detail = format!(
            "chamfer {:.4} vs identity baseline {baseline:.4} ({:.1}%), {:.1} min",
            full.chamfer,
            100.0 * full.chamfer / baseline,
            full.seconds / 60.0
        );
        if full.chamfer < 0.02 && full.chamfer < 0.25 * baseline && full.seconds < 45.0 * 60.0 {
            Ok(detail)
        } else {
            Err(detail)
        }
    });
    report.record(
        "explicitness",
        match &full.trainer {
            Some(t) => explicitness(t, full.seconds),
            None => Err("full run did not finish".into()),
        },
    );

    let no_coarse = TrainConfig {
        ablation: Some(Ablation::NoCoarse),
        ..desk.clone()
    };
    let nc = full_run(&ellipsoid, &no_coarse, &cache, None, "ellipsoid no-coarse");
    report.record("coarse-to-fine necessity", {
        match &nc.diverged {
            Some(reason) => Ok(format!("no-coarse run aborted: {reason}")),
            None => {
                let detail = format!("no-coarse chamfer {:.4} vs full {:.4} ({:.1}x)", nc.chamfer, full.chamfer, nc.chamfer / full.chamfer);
                if nc.chamfer >= 2.0 * full.chamfer {
                    Ok(detail)
                } else {
                    Err(detail)
                }
            }
        }
    });

    let mut unregularized = desk.clone();
    unregularized.weights.icr_enabled = false;
    let nr = full_run(&ellipsoid, &unregularized, &cache, None, "ellipsoid without ICR");
    report.record("ICR regularization", {
        let degradation = full.chamfer / nr.chamfer - 1.0;
        let detail = format!(
            "mean ICR {:.3} (unregularized {:.3}); chamfer {:.4} vs {:.4} ({:+.1}%)",
            full.icr.mean,
            nr.icr.mean,
            full.chamfer,
            nr.chamfer,
            100.0 * degradation
        );
        if full.icr.mean >= 0.90 && degradation <= 0.20 {
            Ok(detail)
        } else {
            Err(detail)
        }
    });

    let bumpy = scene(
        TargetShape::BumpySphere {
            radius: 0.9,
            amplitude: 0.08,
            frequency: 6,
        },
        Albedo::HIGH_FREQUENCY,
        24,
        128,
    );
    let bf = full_run(&bumpy, &desk, &cache, None, "bumpy full");
    let no_intrinsic = TrainConfig {
        ablation: Some(Ablation::NoIntrinsic),
        ..desk.clone()
    };
    let bn = full_run(&bumpy, &no_intrinsic, &cache, None, "bumpy no-intrinsic");
    report.record("intrinsic ablation direction", {
        let detail = format!("chamfer full {:.4} vs no-intrinsic {:.4}", bf.chamfer, bn.chamfer);
        if bf.chamfer < bn.chamfer {
            Ok(detail)
        } else {
            Err(detail)
        }
    });

    println!("{} criteria failed", report.failures);
    if report.failures > 0 {
        std::process::exit(1);
    }
}
