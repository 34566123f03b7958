use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Matrix, Vector};

use super::{Classifier, TrainTrace};

/// Fully connected layer `z = W a + b`, `W` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vector,
}

impl Dense {
    pub fn new(weight: Matrix, bias: Vector) -> Result<Self> {
        check_dim(weight.nrows(), bias.len())?;
        Ok(Self { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

/// ReLU on every hidden layer, identity on the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Dense>,
}

/// Pre-activations and activations of one forward pass; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pre: Vec<Vector>,
    pub activations: Vec<Vector>,
}

impl ForwardCache {
    pub fn output(&self) -> &Vector {
        self.activations.last().expect("non-empty network")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub weight: Vec<Matrix>,
    pub bias: Vec<Vector>,
}

impl NetworkGrads {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weight: net
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.outputs(), l.inputs()))
                .collect(),
            bias: net
                .layers
                .iter()
                .map(|l| Vector::zeros(l.outputs()))
                .collect(),
        }
    }
}

fn relu(v: &Vector) -> Vector {
    v.map(|z| z.max(0.0))
}

impl Network {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("layers", "network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            check_dim(pair[0].outputs(), pair[1].inputs())?;
        }
        Ok(Self { layers })
    }

    /// He-normal weights, zero biases. `sizes` lists every layer width including input and output.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let scale = (2.0 / fan_in as f64).sqrt();
                let weight = Matrix::from_fn(fan_out, fan_in, |_, _| {
                    scale * rng.sample::<f64, _>(StandardNormal)
                });
                Dense {
                    weight,
                    bias: Vector::zeros(fan_out),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs()
    }

    pub fn forward(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.input_dim(), x.len())?;
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = &layer.weight * &a + &layer.bias;
            a = if i == last { z } else { relu(&z) };
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &Vector) -> Result<ForwardCache> {
        check_dim(self.input_dim(), x.len())?;
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = &layer.weight * activations.last().unwrap() + &layer.bias;
            let a = if i == last { z.clone() } else { relu(&z) };
            pre.push(z);
            activations.push(a);
        }
        Ok(ForwardCache { pre, activations })
    }

    /// Back-propagates `grad_out = ∂L/∂output`; accumulates parameter gradients
    /// into `grads` when given and returns `∂L/∂input`.
    ///
    /// The ReLU derivative at a pre-activation of exactly zero is taken as 0.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &Vector,
        mut grads: Option<&mut NetworkGrads>,
    ) -> Vector {
        let last = self.layers.len() - 1;
        let mut delta = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            if i != last {
                delta.zip_apply(&cache.pre[i], |d, z| {
                    if z <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            if let Some(g) = grads.as_deref_mut() {
                g.weight[i].ger(1.0, &delta, &cache.activations[i], 1.0);
                g.bias[i] += &delta;
            }
            delta = self.layers[i].weight.tr_mul(&delta);
        }
        delta
    }

    pub fn apply_step(&mut self, grads: &NetworkGrads, step: f64) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.weight -= &grads.weight[i] * step;
            layer.bias -= &grads.bias[i] * step;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

/// Scalar-output ReLU network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub net: Network,
    pub trace: TrainTrace,
}

impl MlpModel {
    pub fn new(net: Network) -> Result<Self> {
        check_dim(1, net.output_dim())?;
        Ok(Self {
            net,
            trace: TrainTrace::default(),
        })
    }

    pub fn depth(&self) -> usize {
        self.net.layers.len() - 1
    }

    pub fn width(&self) -> usize {
        if self.depth() == 0 {
            0
        } else {
            self.net.layers[0].outputs()
        }
    }
}

impl Classifier for MlpModel {
    fn dim(&self) -> usize {
        self.net.input_dim()
    }

    fn score(&self, x: &Vector) -> Result<f64> {
        Ok(self.net.forward(x)?[0])
    }

    fn input_gradient(&self, x: &Vector) -> Result<Vector> {
        let cache = self.net.forward_cached(x)?;
        Ok(self
            .net
            .backward(&cache, &Vector::from_element(1, 1.0), None))
    }
}
