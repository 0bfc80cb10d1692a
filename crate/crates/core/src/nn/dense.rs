use super::{sigmoid, Matrix, ParamSet, Rng};
use crate::{Error, Result};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    None,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
            Activation::None => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::None => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `[out × in]`
    pub w: Matrix,
    pub b: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl DenseLayer {
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        let w = Matrix::init_uniform(output, input, rng);
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let b = (0..output).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self { w, b, activation }
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self { w: Matrix::zeros(output, input), b: vec![0.0; output], activation }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.y)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<DenseCache> {
        if x.len() != self.input_dim() || self.b.len() != self.output_dim() {
            return Err(Error::ModelShape(format!(
                "dense layer {}→{} given input of length {}",
                self.input_dim(),
                self.output_dim(),
                x.len()
            )));
        }
        let mut z = self.b.clone();
        self.w.matvec_acc(x, &mut z);
        let y = z.iter().map(|&v| self.activation.apply(v)).collect();
        Ok(DenseCache { x: x.to_vec(), z, y })
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, cache: &DenseCache, dy: &[f64], grads: &mut DenseLayer) -> Vec<f64> {
        let dz: Vec<f64> = dy
            .iter()
            .zip(cache.z.iter().zip(&cache.y))
            .map(|(d, (&z, &y))| d * self.activation.derivative(z, y))
            .collect();
        grads.w.add_outer(&dz, &cache.x, 1.0);
        for (g, d) in grads.b.iter_mut().zip(&dz) {
            *g += d;
        }
        let mut dx = vec![0.0; self.input_dim()];
        self.w.matvec_t_acc(&dz, &mut dx);
        dx
    }
}

impl ParamSet for DenseLayer {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![&self.w.data, &self.b]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w.data, &mut self.b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutMode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    /// Drop probability in `[0, 1)`.
    pub rate: f64,
    pub mode: DropoutMode,
}

impl DropoutSpec {
    pub fn new(rate: f64, mode: DropoutMode) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self { rate, mode })
    }
}

/// Inverted dropout. Returns the output and the multiplicative mask applied
/// (each entry is 0 or `1/(1-p)`); the mask is what backward passes reuse.
pub fn dropout_apply(spec: DropoutSpec, x: &[f64], rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    if spec.mode == DropoutMode::Infer || spec.rate == 0.0 {
        return (x.to_vec(), vec![1.0; x.len()]);
    }
    let keep = 1.0 / (1.0 - spec.rate);
    let mask: Vec<f64> = x.iter().map(|_| if rng.gen::<f64>() < spec.rate { 0.0 } else { keep }).collect();
    (x.iter().zip(&mask).map(|(a, m)| a * m).collect(), mask)
}
