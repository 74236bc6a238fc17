use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{AutodiffError, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softplus,
}

/// Affine layer `y = x W + b` with `W: in x out`, `b: 1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    /// Uniform fan-in init, `U(-1/sqrt(in), 1/sqrt(in))` for weights and biases.
    pub fn random(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
        Self {
            weight: Tensor::from_fn(inputs, outputs, |_, _| T::c(dist.sample(rng))),
            bias: Tensor::from_fn(1, outputs, |_, _| T::c(dist.sample(rng))),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(inputs, outputs),
            bias: Tensor::zeros(1, outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }
}

/// Fully connected network; every layer but the last is followed by the activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
    pub activation: Activation,
}

/// Graph handles of the parameters used by one forward pass, in
/// `[w0, b0, w1, b1, ...]` order.
#[derive(Clone, Debug)]
pub struct MlpVars {
    pub params: Vec<Var>,
}

impl<T: Scalar> Mlp<T> {
    /// Random hidden layers, zero-initialized output layer when `zero_output` is set.
    pub fn new(widths: &[usize], activation: Activation, zero_output: bool, rng: &mut impl Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(AutodiffError::Config(format!("invalid MLP widths {widths:?}")));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                if zero_output && i == n - 1 {
                    Linear::zeros(widths[i], widths[i + 1])
                } else {
                    Linear::random(widths[i], widths[i + 1], rng)
                }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    /// Assemble from explicit layers, checking that widths chain.
    pub fn from_layers(layers: Vec<Linear<T>>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(AutodiffError::Config("MLP without layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(AutodiffError::Config(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        for l in &layers {
            if l.bias.shape() != [1, l.outputs()] {
                return Err(AutodiffError::Config("bias must be 1 x out".into()));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs()];
        w.extend(self.layers.iter().map(|l| l.outputs()));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs())
    }

    pub fn output_layer_mut(&mut self) -> &mut Linear<T> {
        self.layers.last_mut().expect("non-empty")
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_width() {
            return Err(AutodiffError::Config(format!(
                "MLP expects {} input columns, got {cols}",
                self.input_width()
            )));
        }
        Ok(())
    }

    /// Record a forward pass on `g`.
    pub fn forward(&self, g: &mut Graph<T>, input: Var) -> Result<(Var, MlpVars)> {
        self.check_input(g.shape(input)[1])?;
        let mut params = Vec::with_capacity(self.layers.len() * 2);
        let mut h = input;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = g.param(layer.weight.clone());
            let b = g.param(layer.bias.clone());
            params.push(w);
            params.push(b);
            let xw = g.matmul(h, w)?;
            h = g.add(xw, b)?;
            if i < last {
                h = match self.activation {
                    Activation::Relu => g.relu(h),
                    Activation::Softplus => g.softplus(h),
                };
            }
        }
        Ok((h, MlpVars { params }))
    }

    /// Inference without a tape.
    pub fn eval(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input.cols())?;
        let mut h = input.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = h.matmul(&layer.weight)?;
            let cols = y.cols();
            let bias = layer.bias.data();
            for (j, v) in y.data_mut().iter_mut().enumerate() {
                *v += bias[j % cols];
            }
            if i < last {
                match self.activation {
                    Activation::Relu => y.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero())),
                    Activation::Softplus => y
                        .data_mut()
                        .iter_mut()
                        .for_each(|v| *v = v.max(T::zero()) + (-v.abs()).exp().ln_1p()),
                }
            }
            h = y;
        }
        Ok(h)
    }

    /// Mutable parameter tensors in `[w0, b0, w1, b1, ...]` order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                })
                .collect(),
            activation: self.activation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mlp = Mlp::<f64>::new(&[5, 7, 2], Activation::Relu, false, &mut rng).unwrap();
        for p in mlp.params_mut() {
            p.fill(0.0);
        }
        let x = Tensor::from_fn(4, 5, |r, c| (r * 5 + c) as f64 - 3.0);
        assert!(mlp.eval(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_linear_layer_reproduces_input() {
        let layer = Linear {
            weight: Tensor::from_fn(3, 3, |r, c| if r == c { 1.0 } else { 0.0 }),
            bias: Tensor::zeros(1, 3),
        };
        let mlp = Mlp::from_layers(vec![layer], Activation::Softplus).unwrap();
        let x = Tensor::from_f64(2, 3, &[1.0, -2.0, 3.5, 0.0, 0.25, -7.0]).unwrap();
        assert_eq!(mlp.eval(&x).unwrap(), x);
    }

    #[test]
    fn deformation_architecture_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = Mlp::<f32>::new(&[456, 400, 3 + 128], Activation::Softplus, true, &mut rng).unwrap();
        assert_eq!(mlp.widths(), vec![456, 400, 131]);
        let x = Tensor::zeros(10, 456);
        let y = mlp.eval(&x).unwrap();
        assert_eq!(y.shape(), [10, 131]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn width_mismatch_is_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::<f64>::new(&[4, 8, 1], Activation::Relu, false, &mut rng).unwrap();
        assert!(matches!(mlp.eval(&Tensor::zeros(1, 5)), Err(AutodiffError::Config(_))));
        let bad = vec![Linear::<f64>::zeros(4, 8), Linear::zeros(7, 1)];
        assert!(Mlp::from_layers(bad, Activation::Relu).is_err());
    }

    #[test]
    fn graph_forward_matches_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mlp = Mlp::<f64>::new(&[3, 16, 16, 2], Activation::Softplus, false, &mut rng).unwrap();
        let x = Tensor::from_fn(6, 3, |r, c| ((r + 2 * c) as f64).sin());
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let (y, vars) = mlp.forward(&mut g, xv).unwrap();
        assert_eq!(vars.params.len(), 6);
        let direct = mlp.eval(&x).unwrap();
        for (a, b) in g.value(y).data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
