//! The explicit surface: coarse and fine residual deformation networks over the sphere domain.

use std::path::Path;
use std::sync::Arc;

use ens_autodiff::{Activation, Checkpoint, Graph, Mlp, MlpVars, Scalar, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encode::{HybridEncoder, IntrinsicEncoder, IntrinsicScaling, RffMatrix};
use crate::error::{EnsError, Result};
use crate::geometry::{icosphere, Mesh, Vec3};
use crate::spectral::{cached_eigenbasis, select_eigenfunctions, EigenPolicy, PointLocator};

/// Which point feeds the extrinsic block of the fine network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtrinsicInput {
    /// The coarse surface point `c = f_coarse(x)`.
    #[default]
    Coarse,
    /// The domain point `x`.
    Domain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigenConfig {
    /// Icosphere level of the mesh carrying the eigenbasis.
    pub level: u32,
    /// Number of eigenpairs computed.
    pub computed: usize,
    pub policy: EigenPolicy,
    pub scaling: IntrinsicScaling,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            level: 4,
            computed: 600,
            policy: EigenPolicy::DESK,
            scaling: IntrinsicScaling::Raw,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub z_width: usize,
    pub rff_width: usize,
    pub coarse_sigma: f64,
    pub fine_sigma: f64,
    pub coarse_rff_seed: u64,
    pub fine_rff_seed: u64,
    pub init_seed: u64,
    pub delta_coarse: f64,
    pub delta_max: f64,
    pub delta_ramp: u64,
    pub extrinsic_input: ExtrinsicInput,
    pub eigen: EigenConfig,
    /// Train a coarse network before the fine one.
    pub use_coarse: bool,
    pub zero_intrinsic: bool,
    pub zero_extrinsic: bool,
    /// Eigenfunctions fed to the coarse network when the extrinsic block is disabled.
    pub coarse_intrinsic_low: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 400,
            z_width: 128,
            rff_width: 256,
            coarse_sigma: 0.5,
            fine_sigma: 4.0,
            coarse_rff_seed: 11,
            fine_rff_seed: 12,
            init_seed: 13,
            delta_coarse: 1.0,
            delta_max: 0.1,
            delta_ramp: 100,
            extrinsic_input: ExtrinsicInput::Coarse,
            eigen: EigenConfig::default(),
            use_coarse: true,
            zero_intrinsic: false,
            zero_extrinsic: false,
            coarse_intrinsic_low: 16,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.rff_width == 0 || self.rff_width % 2 != 0 {
            return Err(EnsError::Config("hidden width and even RFF width must be positive".into()));
        }
        if !(self.delta_max >= 0.0 && self.delta_coarse >= 0.0) {
            return Err(EnsError::Config("residual scales must be non-negative".into()));
        }
        if self.zero_intrinsic && self.zero_extrinsic {
            return Err(EnsError::Config("cannot disable both encodings".into()));
        }
        if self.eigen.policy.required() > self.eigen.computed {
            return Err(EnsError::Config(format!(
                "eigen policy needs {} eigenpairs but only {} are computed",
                self.eigen.policy.required(),
                self.eigen.computed
            )));
        }
        if self.zero_extrinsic && self.coarse_intrinsic_low > self.eigen.computed {
            return Err(EnsError::Config("coarse intrinsic band exceeds computed eigenpairs".into()));
        }
        self.eigen.policy.indices()?;
        Ok(())
    }

    pub fn intrinsic_width(&self) -> usize {
        self.eigen.policy.width()
    }

    /// The spectral basis is needed unless the intrinsic block is zeroed.
    pub fn needs_basis(&self) -> bool {
        !self.zero_intrinsic || self.zero_extrinsic
    }
}

/// `0` before `start`, linear to `max` over `ramp` iterations, then `max`.
pub fn delta_schedule(iteration: u64, start: u64, ramp: u64, max: f64) -> f64 {
    if iteration <= start {
        0.0
    } else if ramp == 0 || iteration >= start + ramp {
        max
    } else {
        max * (iteration - start) as f64 / ramp as f64
    }
}

/// Eigenbasis of the domain mesh plus point location for lifting it to other meshes.
pub struct SpectralContext {
    pub intrinsic: IntrinsicEncoder,
    /// Low band used by the coarse network when the extrinsic block is disabled.
    pub coarse_low: IntrinsicEncoder,
    pub locator: PointLocator,
}

impl SpectralContext {
    pub fn build(config: &ModelConfig, cache_dir: Option<&Path>) -> Result<Self> {
        let e = &config.eigen;
        let mesh = icosphere(e.level)?;
        let basis = cached_eigenbasis(&mesh, e.computed, cache_dir)?;
        let selected = select_eigenfunctions(&basis, &e.policy)?;
        let low = select_eigenfunctions(&basis, &EigenPolicy::all(config.coarse_intrinsic_low.max(1)))?;
        Ok(Self {
            intrinsic: IntrinsicEncoder::new(selected, e.scaling),
            coarse_low: IntrinsicEncoder::new(low, IntrinsicScaling::Raw),
            locator: PointLocator::new(&mesh)?,
        })
    }
}

/// Encodings of one set of domain points, computed once per mesh.
#[derive(Clone, Debug)]
pub struct DomainInputs<T> {
    pub points: Vec<Vec3>,
    pub positions: Tensor<T>,
    pub coarse_in: Tensor<T>,
    pub intrinsic: Tensor<T>,
}

/// Positions and features of a full forward pass.
#[derive(Clone, Debug)]
pub struct Deformed<T> {
    pub positions: Vec<Vec3>,
    pub features: Tensor<T>,
}

/// Graph handles of one deformation forward.
#[derive(Clone, Debug)]
pub struct DeformVars {
    pub positions: Var,
    pub features: Var,
    pub coarse: Option<MlpVars>,
    pub fine: Option<MlpVars>,
}

#[derive(Clone)]
pub struct DeformationModel<T> {
    pub config: ModelConfig,
    pub coarse: Option<Mlp<T>>,
    pub fine: Mlp<T>,
    pub coarse_rff: RffMatrix,
    pub fine_rff: RffMatrix,
    pub spectral: Option<Arc<SpectralContext>>,
    /// Fine network is part of the forward pass.
    pub fine_active: bool,
    pub coarse_frozen: bool,
    pub delta: f64,
}

fn points_tensor<T: Scalar>(points: &[Vec3]) -> Tensor<T> {
    Tensor::from_fn(points.len(), 3, |r, c| T::c(points[r][c]))
}

fn tensor_points<T: Scalar>(t: &Tensor<T>) -> Vec<Vec3> {
    (0..t.rows())
        .map(|r| Vec3::new(t.get(r, 0).f64(), t.get(r, 1).f64(), t.get(r, 2).f64()))
        .collect()
}

impl<T: Scalar> DeformationModel<T> {
    pub fn new(config: ModelConfig, spectral: Option<Arc<SpectralContext>>) -> Result<Self> {
        config.validate()?;
        if config.needs_basis() && spectral.is_none() {
            return Err(EnsError::Config("model configuration needs a spectral basis".into()));
        }
        if let Some(s) = &spectral {
            if s.intrinsic.width() != config.intrinsic_width() {
                return Err(EnsError::Config(format!(
                    "spectral context provides {} eigenfunctions, configuration expects {}",
                    s.intrinsic.width(),
                    config.intrinsic_width()
                )));
            }
        }
        let coarse_rff = RffMatrix::new(config.rff_width, config.coarse_sigma, config.coarse_rff_seed)?;
        let fine_rff = RffMatrix::new(config.rff_width, config.fine_sigma, config.fine_rff_seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let coarse_in = if config.zero_extrinsic {
            config.coarse_intrinsic_low.max(1)
        } else {
            config.rff_width
        };
        let coarse = if config.use_coarse {
            Some(Mlp::new(&[coarse_in, config.hidden, 3], Activation::Softplus, true, &mut rng)?)
        } else {
            None
        };
        let fine_in = config.intrinsic_width() + config.rff_width;
        let fine = Mlp::new(
            &[fine_in, config.hidden, 3 + config.z_width],
            Activation::Softplus,
            true,
            &mut rng,
        )?;
        let fine_active = !config.use_coarse;
        Ok(Self {
            config,
            coarse,
            fine,
            coarse_rff,
            fine_rff,
            spectral,
            fine_active,
            coarse_frozen: false,
            delta: 0.0,
        })
    }

    pub fn hybrid(&self) -> HybridEncoder {
        HybridEncoder {
            intrinsic_width: self.config.intrinsic_width(),
            rff: self.fine_rff.clone(),
            zero_intrinsic: self.config.zero_intrinsic,
            zero_extrinsic: self.config.zero_extrinsic,
        }
    }

    /// Switch to the composed model: the fine network joins and the coarse one stops training.
    pub fn enable_fine(&mut self) {
        self.fine_active = true;
        self.freeze_coarse();
    }

    pub fn freeze_coarse(&mut self) {
        self.coarse_frozen = true;
    }

    pub fn domain_inputs(&self, points: &[Vec3]) -> Result<DomainInputs<T>> {
        let intrinsic = match (&self.spectral, self.config.zero_intrinsic) {
            (Some(s), false) => {
                let bary = s.locator.locate_all(points)?;
                s.intrinsic.encode_barycentric(&bary)
            }
            _ => Tensor::zeros(points.len(), self.config.intrinsic_width()),
        };
        let coarse_in = if self.config.zero_extrinsic {
            let s = self.spectral.as_ref().expect("validated at construction");
            let bary = s.locator.locate_all(points)?;
            s.coarse_low.encode_barycentric(&bary)
        } else {
            self.coarse_rff.encode(points)
        };
        Ok(DomainInputs {
            points: points.to_vec(),
            positions: points_tensor(points),
            coarse_in,
            intrinsic,
        })
    }

    /// Coarse surface points without a tape.
    pub fn coarse_eval(&self, inp: &DomainInputs<T>) -> Result<Tensor<T>> {
        let Some(net) = &self.coarse else {
            return Ok(inp.positions.clone());
        };
        let out = net.eval(&inp.coarse_in)?;
        let d = T::c(self.config.delta_coarse);
        Ok(Tensor::from_fn(out.rows(), 3, |r, c| inp.positions.get(r, c) + d * out.get(r, c)))
    }

    /// Fine-network input `[gamma_I(x) | gamma_E(c or x)]`.
    pub fn fine_input(&self, inp: &DomainInputs<T>, coarse: &Tensor<T>) -> Result<Tensor<T>> {
        let ext = match self.config.extrinsic_input {
            ExtrinsicInput::Coarse => tensor_points(coarse),
            ExtrinsicInput::Domain => inp.points.clone(),
        };
        self.hybrid().encode(&inp.intrinsic, &ext)
    }

    /// Coarse positions on the tape; parameters are leaves unless frozen.
    pub fn coarse_graph(&self, g: &mut Graph<T>, inp: &DomainInputs<T>) -> Result<(Var, Option<MlpVars>)> {
        let x = g.constant(inp.positions.clone());
        let Some(net) = &self.coarse else {
            return Ok((x, None));
        };
        if self.coarse_frozen {
            return Ok((g.constant(self.coarse_eval(inp)?), None));
        }
        let input = g.constant(inp.coarse_in.clone());
        let (out, vars) = net.forward(g, input)?;
        let scaled = g.scale(out, T::c(self.config.delta_coarse));
        Ok((g.add(x, scaled)?, Some(vars)))
    }

    /// Full forward on the tape.
    ///
    /// `fine_in` and `coarse` are the precomputed fine input and frozen coarse
    /// positions; both are constants of the second stage.
    pub fn fine_graph(&self, g: &mut Graph<T>, fine_in: &Tensor<T>, coarse: &Tensor<T>) -> Result<DeformVars> {
        let c = g.constant(coarse.clone());
        let input = g.constant(fine_in.clone());
        let (out, vars) = self.fine.forward(g, input)?;
        let pos = g.slice_cols(out, 0, 3)?;
        let pos = g.scale(pos, T::c(self.delta));
        let positions = g.add(c, pos)?;
        let features = g.slice_cols(out, 3, 3 + self.config.z_width)?;
        Ok(DeformVars {
            positions,
            features,
            coarse: None,
            fine: Some(vars),
        })
    }

    /// Forward of the current stage on the tape. In the coarse stage the features are zero.
    pub fn forward_graph(&self, g: &mut Graph<T>, inp: &DomainInputs<T>, fine_in: Option<&Tensor<T>>) -> Result<DeformVars> {
        if self.fine_active {
            let coarse = self.coarse_eval(inp)?;
            let owned;
            let fine_in = match fine_in {
                Some(f) => f,
                None => {
                    owned = self.fine_input(inp, &coarse)?;
                    &owned
                }
            };
            return self.fine_graph(g, fine_in, &coarse);
        }
        let (positions, coarse) = self.coarse_graph(g, inp)?;
        let features = g.constant(Tensor::zeros(inp.points.len(), self.config.z_width));
        Ok(DeformVars {
            positions,
            features,
            coarse,
            fine: None,
        })
    }

    /// Tape-free forward of the current stage.
    pub fn deform(&self, inp: &DomainInputs<T>) -> Result<Deformed<T>> {
        let coarse = self.coarse_eval(inp)?;
        if !self.fine_active {
            return Ok(Deformed {
                positions: tensor_points(&coarse),
                features: Tensor::zeros(inp.points.len(), self.config.z_width),
            });
        }
        let fine_in = self.fine_input(inp, &coarse)?;
        let out = self.fine.eval(&fine_in)?;
        let d = T::c(self.delta);
        let pos = Tensor::from_fn(out.rows(), 3, |r, c| coarse.get(r, c) + d * out.get(r, c));
        Ok(Deformed {
            positions: tensor_points(&pos),
            features: out.slice_cols(3, 3 + self.config.z_width),
        })
    }

    /// `deform_coarse` for arbitrary on-sphere points.
    pub fn deform_coarse(&self, points: &[Vec3]) -> Result<Vec<Vec3>> {
        let inp = self.domain_inputs(points)?;
        Ok(tensor_points(&self.coarse_eval(&inp)?))
    }

    /// Surface points and features for arbitrary on-sphere points.
    pub fn deform_full(&self, points: &[Vec3]) -> Result<Deformed<T>> {
        let inp = self.domain_inputs(points)?;
        self.deform(&inp)
    }

    /// Same connectivity as `domain`, vertices moved by one forward pass.
    pub fn extract_mesh(&self, domain: &Mesh) -> Result<Mesh> {
        let out = self.deform_full(&domain.vertices)?;
        Ok(Mesh {
            vertices: out.positions,
            faces: domain.faces.clone(),
        })
    }

    pub fn cast<U: Scalar>(&self) -> DeformationModel<U> {
        DeformationModel {
            config: self.config.clone(),
            coarse: self.coarse.as_ref().map(|m| m.cast()),
            fine: self.fine.cast(),
            coarse_rff: self.coarse_rff.clone(),
            fine_rff: self.fine_rff.clone(),
            spectral: self.spectral.clone(),
            fine_active: self.fine_active,
            coarse_frozen: self.coarse_frozen,
            delta: self.delta,
        }
    }

    /// Store parameters and stage state under `prefix`.
    pub fn save_into(&self, ck: &mut Checkpoint, prefix: &str) {
        if let Some(c) = &self.coarse {
            ck.put_mlp(&format!("{prefix}.coarse"), c);
        }
        ck.put_mlp(&format!("{prefix}.fine"), &self.fine);
        ck.put_counter(&format!("{prefix}.fine_active"), self.fine_active as u64);
        ck.put_counter(&format!("{prefix}.coarse_frozen"), self.coarse_frozen as u64);
        ck.put_counter(&format!("{prefix}.delta_bits"), self.delta.to_bits());
    }

    /// Rebuild from a checkpoint written by [`DeformationModel::save_into`].
    pub fn load_from(
        ck: &Checkpoint,
        prefix: &str,
        config: ModelConfig,
        spectral: Option<Arc<SpectralContext>>,
    ) -> Result<Self> {
        let mut m = Self::new(config, spectral)?;
        if let Some(c) = &mut m.coarse {
            let stored = ck.mlp::<T>(&format!("{prefix}.coarse"))?;
            if stored.widths() != c.widths() {
                return Err(EnsError::Versioning(format!(
                    "checkpoint coarse widths {:?} do not match configuration {:?}",
                    stored.widths(),
                    c.widths()
                )));
            }
            *c = stored;
        }
        let fine = ck.mlp::<T>(&format!("{prefix}.fine"))?;
        if fine.widths() != m.fine.widths() {
            return Err(EnsError::Versioning(format!(
                "checkpoint fine widths {:?} do not match configuration {:?}",
                fine.widths(),
                m.fine.widths()
            )));
        }
        m.fine = fine;
        m.fine_active = ck.counter(&format!("{prefix}.fine_active"))? != 0;
        m.coarse_frozen = ck.counter(&format!("{prefix}.coarse_frozen"))? != 0;
        m.delta = f64::from_bits(ck.counter(&format!("{prefix}.delta_bits"))?);
        Ok(m)
    }
}
