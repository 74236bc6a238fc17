use ens_autodiff::{Activation, Graph, Mlp, MlpVars, Scalar, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encode::octave_encode_graph;
use crate::error::Result;
use crate::geometry::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShaderConfig {
    pub hidden: usize,
    pub layers: usize,
    pub normal_octaves: usize,
    pub view_octaves: usize,
    pub seed: u64,
    pub zero_output: bool,
}

impl Default for ShaderConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            layers: 3,
            normal_octaves: 3,
            view_octaves: 4,
            seed: 21,
            zero_output: false,
        }
    }
}

impl ShaderConfig {
    fn shared_width(&self) -> usize {
        3 + 6 * self.normal_octaves + 6 * self.view_octaves
    }
}

/// Feature shader `h_z(x, n, w, z)` and geometry shader `h_g(x, n, w, detach(h_z))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShaderPair<T> {
    pub config: ShaderConfig,
    pub hz: Mlp<T>,
    pub hg: Mlp<T>,
}

#[derive(Clone, Debug)]
pub struct ShadeVars {
    /// Feature-shader color `n x 3`.
    pub base: Var,
    /// Geometry-shader color `n x 3`.
    pub full: Var,
    pub hz: MlpVars,
    pub hg: MlpVars,
}

impl<T: Scalar> ShaderPair<T> {
    pub fn new(config: ShaderConfig, z_width: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let widths = |input: usize| {
            let mut w = vec![input];
            w.extend(std::iter::repeat_n(config.hidden, config.layers));
            w.push(3);
            w
        };
        let shared = config.shared_width();
        let hz = Mlp::new(&widths(shared + z_width), Activation::Relu, config.zero_output, &mut rng)?;
        let hg = Mlp::new(&widths(shared + 3), Activation::Relu, config.zero_output, &mut rng)?;
        Ok(Self { config, hz, hg })
    }

    pub fn z_width(&self) -> usize {
        self.hz.input_width() - self.config.shared_width()
    }

    /// Shade surface samples `x`, unit normals `n` and features `z` seen from `center`.
    pub fn forward(&self, g: &mut Graph<T>, x: Var, n: Var, z: Var, center: &Vec3) -> Result<ShadeVars> {
        let view = view_directions(g, x, center)?;
        self.forward_dirs(g, x, n, view, z)
    }

    /// Same as [`ShaderPair::forward`] with unit directions toward the viewer given per row.
    pub fn forward_dirs(&self, g: &mut Graph<T>, x: Var, n: Var, view: Var, z: Var) -> Result<ShadeVars> {
        let gn = octave_encode_graph(g, n, self.config.normal_octaves)?;
        let gw = octave_encode_graph(g, view, self.config.view_octaves)?;
        let zin = g.concat(&[x, gn, gw, z])?;
        let (base, hz) = self.hz.forward(g, zin)?;
        let base = g.sigmoid(base);
        let detached = g.detach(base);
        let gin = g.concat(&[x, gn, gw, detached])?;
        let (full, hg) = self.hg.forward(g, gin)?;
        let full = g.sigmoid(full);
        Ok(ShadeVars { base, full, hz, hg })
    }

    pub fn cast<U: Scalar>(&self) -> ShaderPair<U> {
        ShaderPair {
            config: self.config.clone(),
            hz: self.hz.cast(),
            hg: self.hg.cast(),
        }
    }
}

/// Unit vectors from surface points toward the camera center.
pub fn view_directions<T: Scalar>(g: &mut Graph<T>, x: Var, center: &Vec3) -> Result<Var> {
    let c = g.constant(Tensor::from_fn(1, 3, |_, k| T::c(center[k])));
    let to_x = g.sub(x, c)?;
    let to_x = g.normalize_rows(to_x);
    Ok(g.neg(to_x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(g: &mut Graph<f64>, n: usize, z_width: usize) -> (Var, Var, Var) {
        let x = g.param(Tensor::from_fn(n, 3, |r, c| 0.1 * (r as f64 + 1.0) * (c as f64 - 1.0)));
        let nn = g.param(Tensor::from_fn(n, 3, |r, c| if c == (r % 3) { 1.0 } else { 0.0 }));
        let z = g.param(Tensor::from_fn(n, z_width, |r, c| ((r * 7 + c) as f64).sin()));
        (x, nn, z)
    }

    #[test]
    fn zero_output_layers_give_constant_half() {
        let cfg = ShaderConfig {
            zero_output: true,
            hidden: 16,
            ..ShaderConfig::default()
        };
        let s = ShaderPair::<f64>::new(cfg, 5).unwrap();
        assert_eq!(s.z_width(), 5);
        let mut g = Graph::new();
        let (x, n, z) = inputs(&mut g, 4, 5);
        let out = s.forward(&mut g, x, n, z, &Vec3::new(0.0, -3.0, 0.0)).unwrap();
        assert!(g.value(out.base).data().iter().all(|&v| v == 0.5));
        assert!(g.value(out.full).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn geometry_image_sends_no_gradient_to_feature_shader() {
        let cfg = ShaderConfig {
            hidden: 16,
            ..ShaderConfig::default()
        };
        let s = ShaderPair::<f64>::new(cfg, 5).unwrap();
        assert_eq!(s.hz.input_width(), 3 + 18 + 24 + 5);
        assert_eq!(s.hg.input_width(), 48);
        let mut g = Graph::new();
        let (x, n, z) = inputs(&mut g, 4, 5);
        let out = s.forward(&mut g, x, n, z, &Vec3::new(0.0, -3.0, 0.0)).unwrap();
        let root = g.mean(out.full);
        let grads = g.backward(root).unwrap();
        for &p in &out.hz.params {
            assert!(grads.get(p).is_none_or(|t| t.data().iter().all(|&v| v == 0.0)));
        }
        assert!(grads.get(z).is_none_or(|t| t.data().iter().all(|&v| v == 0.0)));
        assert!(grads.get(x).is_some_and(|t| t.data().iter().any(|&v| v != 0.0)));
        let root = g.mean(out.base);
        let grads = g.backward(root).unwrap();
        assert!(out.hz.params.iter().any(|&p| grads.get(p).is_some_and(|t| t.data().iter().any(|&v| v != 0.0))));
    }
}
