use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ens_autodiff::{Adam, Checkpoint, Graph, MlpVars, Scalar, Tensor, Var};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::losses::{
    loss_icr_graph, loss_normal_graph, loss_photometric, mean_abs_error, normal_pairs, sample_pixels, LossComponents,
};
use super::view::render_view;
use crate::error::{EnsError, Result};
use crate::fields::{delta_schedule, DeformationModel, DomainInputs, SpectralContext};
use crate::geometry::{icosphere, Mesh, Topology, Vec3};
use crate::render::{
    face_cross, interpolate, perspective_barycentrics, rasterize, soft_mask, vertex_normals_graph, view_directions,
    PixelSet, ShaderPair,
};
use crate::scenes::SceneDataset;

pub const CHECKPOINT_FORMAT: u32 = 1;

/// One JSON-lines metrics record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub stage: String,
    #[serde(rename = "L_c")]
    pub l_c: f64,
    #[serde(rename = "L_m")]
    pub l_m: f64,
    #[serde(rename = "L_n")]
    pub l_n: f64,
    #[serde(rename = "L_ICR")]
    pub l_icr: f64,
    pub total: f64,
    #[serde(rename = "δ")]
    pub delta: f64,
    pub lr: f64,
    pub lr_shader: f64,
    pub sampled_pixels: usize,
    pub skipped_views: usize,
    pub empty_views: usize,
    /// Set when the step produced a non-finite component and no update was applied.
    pub aborted: Option<String>,
}

/// Loss graph of one step with handles for the optimizer.
pub struct StepGraph<T: Scalar> {
    pub graph: Graph<T>,
    pub root: Var,
    pub components: LossComponents,
    pub deform: Option<MlpVars>,
    pub hz: Option<MlpVars>,
    pub hg: Option<MlpVars>,
    pub sampled_pixels: usize,
    pub skipped_views: usize,
    pub empty_views: usize,
}

struct Stage<T> {
    domain: Mesh,
    tris: Vec<[usize; 3]>,
    topo: Topology,
    inputs: DomainInputs<T>,
    fine_in: Option<Tensor<T>>,
}

struct ViewTarget<T> {
    image: Tensor<T>,
    mask: Tensor<T>,
    mask_f64: Vec<f64>,
}

pub struct Trainer<T: Scalar> {
    pub config: TrainConfig,
    pub model: DeformationModel<T>,
    pub shaders: ShaderPair<T>,
    pub step: u64,
    opt_deform: Adam<T>,
    opt_hz: Adam<T>,
    opt_hg: Adam<T>,
    stage: Stage<T>,
    dataset: Arc<SceneDataset>,
    targets: Vec<ViewTarget<T>>,
    over_limit: u64,
}

fn targets<T: Scalar>(ds: &SceneDataset) -> Vec<ViewTarget<T>> {
    ds.images
        .iter()
        .zip(&ds.masks)
        .map(|(img, m)| ViewTarget {
            image: Tensor::from_fn(img.pixel_count(), 3, |r, c| T::c(img.data[3 * r + c] as f64)),
            mask: Tensor::from_fn(m.pixel_count(), 1, |r, _| T::c(m.data[r] as f64)),
            mask_f64: m.data.iter().map(|&v| v as f64).collect(),
        })
        .collect()
}

impl<T: Scalar> Trainer<T> {
    /// Fresh trainer; `config` is resolved (ablation applied) and validated here.
    pub fn new(dataset: Arc<SceneDataset>, config: &TrainConfig, spectral: Option<Arc<SpectralContext>>) -> Result<Self> {
        let config = config.resolved();
        config.validate()?;
        if dataset.len() < config.schedule.views_per_step {
            return Err(EnsError::Argument(format!(
                "dataset has {} views but {} are drawn per step",
                dataset.len(),
                config.schedule.views_per_step
            )));
        }
        let spectral = if config.model.needs_basis() { spectral } else { None };
        let model = DeformationModel::<T>::new(config.model.clone(), spectral)?;
        let shaders = ShaderPair::<T>::new(config.shader.clone(), config.model.z_width)?;
        let lr_deform = config.schedule.lr_deform;
        let opt_deform = match (&model.coarse, model.fine_active) {
            (Some(c), false) => Adam::for_params(lr_deform, &c.params()),
            _ => Adam::for_params(lr_deform, &model.fine.params()),
        };
        let opt_hz = Adam::for_params(config.schedule.lr_shader, &shaders.hz.params());
        let opt_hg = Adam::for_params(config.schedule.lr_shader, &shaders.hg.params());
        let level = if model.fine_active {
            config.schedule.fine_level
        } else {
            config.schedule.coarse_level
        };
        let stage = Self::build_stage(&model, level)?;
        let targets = targets(&dataset);
        let mut t = Self {
            config,
            model,
            shaders,
            step: 0,
            opt_deform,
            opt_hz,
            opt_hg,
            stage,
            dataset,
            targets,
            over_limit: 0,
        };
        t.update_delta();
        Ok(t)
    }

    fn build_stage(model: &DeformationModel<T>, level: u32) -> Result<Stage<T>> {
        let domain = icosphere(level)?;
        let tris = domain.triangles();
        let topo = Topology::build_closed(&tris)?;
        let inputs = model.domain_inputs(&domain.vertices)?;
        let fine_in = if model.fine_active {
            let coarse = model.coarse_eval(&inputs)?;
            Some(model.fine_input(&inputs, &coarse)?)
        } else {
            None
        };
        Ok(Stage {
            domain,
            tris,
            topo,
            inputs,
            fine_in,
        })
    }

    fn fine_start(&self) -> u64 {
        if self.config.model.use_coarse {
            self.config.schedule.coarse_iters
        } else {
            0
        }
    }

    fn update_delta(&mut self) {
        if self.model.fine_active {
            let m = &self.config.model;
            self.model.delta = delta_schedule(self.step, self.fine_start(), m.delta_ramp, m.delta_max);
        }
    }

    pub fn in_fine_stage(&self) -> bool {
        self.model.fine_active
    }

    pub fn domain(&self) -> &Mesh {
        &self.stage.domain
    }

    pub fn dataset(&self) -> &SceneDataset {
        &self.dataset
    }

    /// Freeze the coarse field, subdivide to the fine level and switch the optimizer to the fine field.
    pub fn enter_fine_stage(&mut self) -> Result<()> {
        if self.model.fine_active {
            return Ok(());
        }
        self.model.enable_fine();
        self.stage = Self::build_stage(&self.model, self.config.schedule.fine_level)?;
        let s = &self.config.schedule;
        self.opt_deform = Adam::for_params(s.lr_deform * s.lr_decay_at_refine, &self.model.fine.params());
        self.update_delta();
        log::info!(
            "step {}: fine stage on {} vertices",
            self.step,
            self.stage.domain.vertex_count()
        );
        Ok(())
    }

    /// Views drawn for `step`, sorted.
    pub fn views_for(&self, step: u64) -> Vec<usize> {
        let mut rng = self.step_rng(step, 0);
        let mut v = sample(&mut rng, self.dataset.len(), self.config.schedule.views_per_step).into_vec();
        v.sort_unstable();
        v
    }

    fn step_rng(&self, step: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.schedule.seed);
        rng.set_stream(step.wrapping_mul(4).wrapping_add(stream));
        rng
    }

    /// Build the loss graph of `step` on `views` with the current parameters.
    pub fn loss_graph(&self, views: &[usize], step: u64) -> Result<StepGraph<T>> {
        let mut g = Graph::new();
        let st = &self.stage;
        let out = self.model.forward_graph(&mut g, &st.inputs, st.fine_in.as_ref())?;
        let deform = out.coarse.or(out.fine);
        let pv = g.value(out.positions);
        let positions: Vec<Vec3> = (0..pv.rows())
            .map(|r| Vec3::new(pv.get(r, 0).f64(), pv.get(r, 1).f64(), pv.get(r, 2).f64()))
            .collect();
        let fc = face_cross(&mut g, out.positions, &st.tris)?;
        let normals = vertex_normals_graph(&mut g, fc, &st.tris, positions.len())?;

        let mut rng = self.step_rng(step, 1);
        let mut mask_terms = Vec::with_capacity(views.len());
        let (mut xs, mut ns, mut zs, mut ws, mut gts) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let (mut skipped, mut empty, mut sampled) = (0, 0, 0);
        for &v in views {
            let cam = &self.dataset.cameras[v];
            let target = &self.targets[v];
            let gbuf = rasterize(cam, &positions, &st.tris);
            if gbuf.is_empty() {
                log::warn!("step {step}: view {v} projects to an empty image");
                empty += 1;
            }
            let soft = soft_mask(&mut g, cam, out.positions, &positions, &st.tris, &st.topo, &gbuf, &self.config.mask)?;
            let img = soft.image(&mut g)?;
            mask_terms.push(mean_abs_error(&mut g, &target.mask, img)?);
            let pred = soft.to_vec(&g);
            let Some(pixels) = sample_pixels(&target.mask_f64, &pred, self.config.schedule.pixel_fraction, &mut rng)?
            else {
                log::debug!("step {step}: view {v} has empty masks; skipped");
                skipped += 1;
                continue;
            };
            // union fallback may pick ground-truth pixels the mesh does not cover
            let pixels: Vec<usize> = pixels.into_iter().filter(|&p| gbuf.covered(p)).collect();
            if pixels.is_empty() {
                skipped += 1;
                continue;
            }
            sampled += pixels.len();
            let set = PixelSet::new(&gbuf, cam, &pixels)?;
            let bary = perspective_barycentrics(&mut g, cam, out.positions, &st.tris, &set)?;
            let x = interpolate(&mut g, out.positions, bary, &st.tris, &set)?;
            let n = interpolate(&mut g, normals, bary, &st.tris, &set)?;
            let n = g.normalize_rows(n);
            let z = interpolate(&mut g, out.features, bary, &st.tris, &set)?;
            ws.push(view_directions(&mut g, x, &cam.center())?);
            xs.push(x);
            ns.push(n);
            zs.push(z);
            gts.push(target.image.gather_rows(&pixels));
        }

        let l_m = {
            let mut acc = mask_terms[0];
            for &t in &mask_terms[1..] {
                acc = g.add(acc, t)?;
            }
            g.scale(acc, T::c(1.0 / mask_terms.len() as f64))
        };
        let (l_c, hz, hg) = if xs.is_empty() {
            (g.scalar(T::zero()), None, None)
        } else {
            let x = g.concat_rows(&xs)?;
            let n = g.concat_rows(&ns)?;
            let z = g.concat_rows(&zs)?;
            let w = g.concat_rows(&ws)?;
            let refs: Vec<&Tensor<T>> = gts.iter().collect();
            let gt = Tensor::vcat(&refs)?;
            let sh = self.shaders.forward_dirs(&mut g, x, n, w, z)?;
            let l = loss_photometric(&mut g, &gt, sh.base, sh.full, self.config.weights.geometry)?;
            (l, Some(sh.hz), Some(sh.hg))
        };
        let pairs = normal_pairs(&st.topo, &positions, &st.tris);
        let l_n = loss_normal_graph(&mut g, fc, &pairs)?;
        let w = &self.config.weights;
        let l_icr = if w.icr_enabled {
            Some(loss_icr_graph(&mut g, out.positions, &st.tris)?)
        } else {
            None
        };
        let components = LossComponents {
            color: g.value(l_c).item().f64(),
            mask: g.value(l_m).item().f64(),
            normal: g.value(l_n).item().f64(),
            icr: l_icr.map_or(0.0, |v| g.value(v).item().f64()),
        };
        let mut root = g.scale(l_c, T::c(w.color));
        for (v, wt) in [(Some(l_m), w.mask), (Some(l_n), w.normal), (l_icr, w.icr)] {
            if let Some(v) = v {
                let t = g.scale(v, T::c(wt));
                root = g.add(root, t)?;
            }
        }
        Ok(StepGraph {
            graph: g,
            root,
            components,
            deform,
            hz,
            hg,
            sampled_pixels: sampled,
            skipped_views: skipped,
            empty_views: empty,
        })
    }

    /// One optimization step.
    pub fn step(&mut self) -> Result<StepRecord> {
        if self.model.coarse.is_some() && !self.model.fine_active && self.step >= self.config.schedule.coarse_iters {
            self.enter_fine_stage()?;
        }
        self.update_delta();
        let views = self.views_for(self.step);
        let sg = self.loss_graph(&views, self.step)?;
        let c = sg.components;
        let total = c.total(&self.config.weights);
        let mut aborted = c.non_finite().map(|name| format!("non-finite {name}"));
        if aborted.is_none() {
            let grads = sg.graph.backward(sg.root)?;
            let mut ok = true;
            if let Some(vars) = &sg.deform {
                let gr: Vec<Option<&Tensor<T>>> = vars.params.iter().map(|&v| grads.get(v)).collect();
                let net = match (&mut self.model.coarse, self.model.fine_active) {
                    (Some(c), false) => c,
                    _ => &mut self.model.fine,
                };
                ok &= self.opt_deform.update(&mut net.params_mut(), &gr)?;
            }
            if let Some(vars) = &sg.hz {
                let gr: Vec<Option<&Tensor<T>>> = vars.params.iter().map(|&v| grads.get(v)).collect();
                ok &= self.opt_hz.update(&mut self.shaders.hz.params_mut(), &gr)?;
            }
            if let Some(vars) = &sg.hg {
                let gr: Vec<Option<&Tensor<T>>> = vars.params.iter().map(|&v| grads.get(v)).collect();
                ok &= self.opt_hg.update(&mut self.shaders.hg.params_mut(), &gr)?;
            }
            if !ok {
                aborted = Some("non-finite gradient".into());
            }
        }
        if aborted.is_some() || !(total <= self.config.divergence_limit) {
            self.over_limit += 1;
        } else {
            self.over_limit = 0;
        }
        let record = StepRecord {
            step: self.step,
            stage: if self.model.fine_active { "fine" } else { "coarse" }.into(),
            l_c: c.color,
            l_m: c.mask,
            l_n: c.normal,
            l_icr: c.icr,
            total,
            delta: if self.model.fine_active { self.model.delta } else { self.config.model.delta_coarse },
            lr: self.opt_deform.lr,
            lr_shader: self.opt_hz.lr,
            sampled_pixels: sg.sampled_pixels,
            skipped_views: sg.skipped_views,
            empty_views: sg.empty_views,
            aborted,
        };
        if let Some(reason) = &record.aborted {
            log::warn!("step {}: update skipped ({reason})", self.step);
        }
        self.step += 1;
        if self.over_limit >= self.config.divergence_patience {
            return Err(EnsError::Diverged {
                step: record.step,
                reason: format!(
                    "loss non-finite or above {} for {} consecutive steps (last total {total})",
                    self.config.divergence_limit, self.over_limit
                ),
            });
        }
        Ok(record)
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.schedule.total_iters()
    }

    /// Current surface on the given domain connectivity.
    pub fn extract(&self, domain: &Mesh) -> Result<Mesh> {
        self.model.extract_mesh(domain)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let meta = serde_json::json!({
            "format": CHECKPOINT_FORMAT,
            "config": self.config,
        });
        let mut ck = Checkpoint::new(meta.to_string());
        ck.put_counter("step", self.step);
        ck.put_counter("over_limit", self.over_limit);
        self.model.save_into(&mut ck, "model");
        ck.put_mlp("hz", &self.shaders.hz);
        ck.put_mlp("hg", &self.shaders.hg);
        ck.put_adam("opt.deform", &self.opt_deform);
        ck.put_adam("opt.hz", &self.opt_hz);
        ck.put_adam("opt.hg", &self.opt_hg);
        Ok(ck)
    }

    /// Resume from a checkpoint written by [`Trainer::checkpoint`].
    pub fn restore(
        dataset: Arc<SceneDataset>,
        ck: &Checkpoint,
        spectral: Option<Arc<SpectralContext>>,
    ) -> Result<Self> {
        let config = checkpoint_config(ck)?;
        let mut t = Self::new(dataset, &config, spectral.clone())?;
        t.model = DeformationModel::load_from(ck, "model", t.config.model.clone(), t.model.spectral.clone())?;
        t.shaders.hz = ck.mlp("hz")?;
        t.shaders.hg = ck.mlp("hg")?;
        t.opt_deform = ck.adam("opt.deform")?;
        t.opt_hz = ck.adam("opt.hz")?;
        t.opt_hg = ck.adam("opt.hg")?;
        t.step = ck.counter("step")?;
        t.over_limit = ck.counter("over_limit")?;
        let level = if t.model.fine_active {
            t.config.schedule.fine_level
        } else {
            t.config.schedule.coarse_level
        };
        t.stage = Self::build_stage(&t.model, level)?;
        t.update_delta();
        Ok(t)
    }
}

/// Training configuration stored in a checkpoint's metadata.
pub fn checkpoint_config(ck: &Checkpoint) -> Result<TrainConfig> {
    let meta: serde_json::Value =
        serde_json::from_str(&ck.meta).map_err(|e| EnsError::Versioning(format!("checkpoint metadata: {e}")))?;
    let format = meta.get("format").and_then(|v| v.as_u64());
    if format != Some(CHECKPOINT_FORMAT as u64) {
        return Err(EnsError::Versioning(format!(
            "checkpoint format {format:?}, expected {CHECKPOINT_FORMAT}"
        )));
    }
    serde_json::from_value(meta["config"].clone()).map_err(|e| EnsError::Versioning(format!("checkpoint config: {e}")))
}

/// Trained model and shaders read back from a checkpoint at 64-bit.
pub struct LoadedModel {
    pub config: TrainConfig,
    pub model: DeformationModel<f64>,
    pub shaders: ShaderPair<f64>,
    pub step: u64,
}

fn load_typed<T: Scalar>(ck: &Checkpoint, config: &TrainConfig, spectral: Option<Arc<SpectralContext>>) -> Result<LoadedModel> {
    let model = DeformationModel::<T>::load_from(ck, "model", config.model.clone(), spectral)?;
    let hz = ck.mlp::<T>("hz")?;
    let hg = ck.mlp::<T>("hg")?;
    let shaders = ShaderPair {
        config: config.shader.clone(),
        hz,
        hg,
    };
    Ok(LoadedModel {
        config: config.clone(),
        model: model.cast(),
        shaders: shaders.cast(),
        step: ck.counter("step")?,
    })
}

pub fn load_model(path: &Path, spectral: impl FnOnce(&TrainConfig) -> Result<Option<Arc<SpectralContext>>>) -> Result<LoadedModel> {
    let ck = Checkpoint::load(path).map_err(|e| match e {
        ens_autodiff::AutodiffError::Io { .. } => EnsError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        },
        other => EnsError::Versioning(format!("{}: {other}", path.display())),
    })?;
    let config = checkpoint_config(&ck)?;
    let spectral = if config.model.needs_basis() { spectral(&config)? } else { None };
    let expected = config.model.intrinsic_width();
    if let Some(s) = &spectral {
        if s.intrinsic.width() != expected {
            return Err(EnsError::Versioning(format!(
                "checkpoint expects {expected} eigenfunctions, spectral context has {}",
                s.intrinsic.width()
            )));
        }
    }
    match config.precision {
        super::config::Precision::F32 => load_typed::<f32>(&ck, &config, spectral),
        super::config::Precision::F64 => load_typed::<f64>(&ck, &config, spectral),
    }
}

/// Summary of a finished run.
pub struct TrainOutcome<T: Scalar> {
    pub trainer: Trainer<T>,
    pub records: Vec<StepRecord>,
    pub seconds: f64,
}

/// Output locations of a run directory.
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.jsonl")
    }
    pub fn config(&self) -> PathBuf {
        self.dir.join("config.json")
    }
    pub fn final_checkpoint(&self) -> PathBuf {
        self.dir.join("final.ckpt")
    }
    pub fn checkpoint(&self, step: u64) -> PathBuf {
        self.dir.join(format!("step_{step:06}.ckpt"))
    }
    pub fn previews(&self) -> PathBuf {
        self.dir.join("previews")
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EnsError + '_ {
    move |e| EnsError::io(path, e)
}

fn save_ck(ck: &Checkpoint, path: &Path) -> Result<()> {
    ck.save(path).map_err(|e| EnsError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}

/// Run the full two-stage schedule, writing metrics, checkpoints and previews under `out` when given.
pub fn train<T: Scalar>(
    dataset: Arc<SceneDataset>,
    config: &TrainConfig,
    spectral: Option<Arc<SpectralContext>>,
    out: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    let start = Instant::now();
    let mut trainer = Trainer::<T>::new(dataset, config, spectral)?;
    let paths = out.map(|d| RunPaths { dir: d.to_path_buf() });
    let mut metrics = match &paths {
        Some(p) => {
            fs::create_dir_all(&p.dir).map_err(io_err(&p.dir))?;
            crate::scenes::write_json(&p.config(), &trainer.config)?;
            let m = p.metrics();
            Some(BufWriter::new(File::create(&m).map_err(io_err(&m))?))
        }
        None => None,
    };
    let mut records = Vec::new();
    while !trainer.is_done() {
        let result = trainer.step();
        let record = match result {
            Ok(r) => r,
            Err(e @ EnsError::Diverged { .. }) => {
                if let Some(p) = &paths {
                    let dump = p.dir.join("diverged.ckpt");
                    save_ck(&trainer.checkpoint()?, &dump)?;
                    log::error!("{e}; state written to {}", dump.display());
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        if let (Some(w), Some(p)) = (&mut metrics, &paths) {
            let line = serde_json::to_string(&record).map_err(|e| EnsError::format(&p.metrics(), &e.to_string()))?;
            writeln!(w, "{line}").map_err(io_err(&p.metrics()))?;
        }
        if record.step % 50 == 0 {
            log::info!(
                "step {} [{}] total {:.5} L_c {:.5} L_m {:.5} L_n {:.5} L_ICR {:.5}",
                record.step,
                record.stage,
                record.total,
                record.l_c,
                record.l_m,
                record.l_n,
                record.l_icr
            );
        }
        let done = trainer.step;
        if let Some(p) = &paths {
            if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && !trainer.is_done() {
                save_ck(&trainer.checkpoint()?, &p.checkpoint(done))?;
            }
            if config.preview_every > 0 && done % config.preview_every == 0 {
                let dir = p.previews();
                fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                let loaded = trainer.model.cast::<f64>();
                let shaders = trainer.shaders.cast::<f64>();
                let view = render_view(&loaded, &shaders, trainer.domain(), &trainer.dataset().cameras[0])?;
                view.base.save_png(&dir.join(format!("step_{done:06}.png")))?;
            }
        }
        records.push(record);
    }
    if let (Some(w), Some(p)) = (&mut metrics, &paths) {
        w.flush().map_err(io_err(&p.metrics()))?;
        save_ck(&trainer.checkpoint()?, &p.final_checkpoint())?;
    }
    Ok(TrainOutcome {
        trainer,
        records,
        seconds: start.elapsed().as_secs_f64(),
    })
}
