//! Feed-forward surrogate mapping per-user features to a power allocation.
//!
//! Architecture: an optional 1-D convolution over the user axis (features as
//! input channels, same padding, ReLU), a stack of dense ReLU layers, and a
//! dense softplus output of width `K + G + 1`.

mod io;
mod train;

pub use io::WEIGHTS_VERSION;
pub use train::{train, EpochLoss, TrainConfig, TrainOutput};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{FeatureMode, Normalization};
use crate::error::{Error, Result};
use crate::grouping::GroupingPlan;
use crate::optimizer::{project_feasible, ConstraintSet};
use crate::rates::PowerAllocation;

pub const DEFAULT_HIDDEN_LAYERS: usize = 4;
pub const DEFAULT_HIDDEN_WIDTH: usize = 64;
pub const DEFAULT_CONV_CHANNELS: usize = 8;
pub const DEFAULT_CONV_KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub channels: usize,
    /// Odd kernel width along the user axis.
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub users: usize,
    pub groups: usize,
    /// Feature channels per user (2 for demand and gain, 1 for demand only).
    pub in_channels: usize,
    pub conv: Option<ConvSpec>,
    pub hidden: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(users: usize, groups: usize, mode: FeatureMode) -> Self {
        Self {
            users,
            groups,
            in_channels: mode.channels(),
            conv: Some(ConvSpec {
                channels: DEFAULT_CONV_CHANNELS,
                kernel: DEFAULT_CONV_KERNEL,
            }),
            hidden: vec![DEFAULT_HIDDEN_WIDTH; DEFAULT_HIDDEN_LAYERS],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.in_channels * self.users
    }

    pub fn output_dim(&self) -> usize {
        self.users + self.groups + 1
    }

    pub fn feature_mode(&self) -> FeatureMode {
        if self.in_channels == 1 {
            FeatureMode::DemandOnly
        } else {
            FeatureMode::DemandAndGain
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.groups == 0 || self.groups > self.users {
            return Err(Error::domain(format!(
                "network needs 1 <= groups <= users, got users={} groups={}",
                self.users, self.groups
            )));
        }
        if !(1..=2).contains(&self.in_channels) {
            return Err(Error::domain(format!("in_channels must be 1 or 2, got {}", self.in_channels)));
        }
        if let Some(c) = self.conv {
            if c.channels == 0 || c.kernel == 0 || c.kernel % 2 == 0 {
                return Err(Error::domain(format!(
                    "convolution needs channels >= 1 and an odd kernel, got {}x{}",
                    c.channels, c.kernel
                )));
            }
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::domain("zero-width hidden layer"));
        }
        Ok(())
    }

    /// Width of the vector entering the first dense layer.
    fn dense_input(&self) -> usize {
        match self.conv {
            Some(c) => c.channels * self.users,
            None => self.input_dim(),
        }
    }

    /// `(name, rows, cols)` of every parameter tensor in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        if let Some(c) = self.conv {
            out.push(("conv.weight".into(), c.channels, self.in_channels * c.kernel));
            out.push(("conv.bias".into(), c.channels, 1));
        }
        let mut fan_in = self.dense_input();
        for (i, &w) in self.hidden.iter().enumerate() {
            out.push((format!("dense{i}.weight"), w, fan_in));
            out.push((format!("dense{i}.bias"), w, 1));
            fan_in = w;
        }
        out.push(("output.weight".into(), self.output_dim(), fan_in));
        out.push(("output.bias".into(), self.output_dim(), 1));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensor_shapes().iter().map(|(_, r, c)| r * c).sum()
    }
}

/// Row-major parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(name: String, rows: usize, cols: usize) -> Self {
        Self {
            name,
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }
}

/// Provenance of a trained model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub spec: NetworkSpec,
    pub tensors: Vec<Tensor>,
    /// Feature and label scaling the network was trained under.
    pub normalization: Option<Normalization>,
    pub meta: TrainingMeta,
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
struct Trace {
    input: Vec<f64>,
    /// Pre-activation of the convolution, `channels * K`.
    conv_pre: Vec<f64>,
    /// `acts[0]` feeds the first dense layer; `acts[i + 1]` is the output of
    /// dense layer `i` (the last entry is the network output).
    acts: Vec<Vec<f64>>,
    /// Pre-activation of every dense layer, output layer last.
    pres: Vec<Vec<f64>>,
}

impl NetworkWeights {
    /// Glorot-uniform weights and zero biases, deterministic in `seed`.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::new();
        for (name, rows, cols) in spec.tensor_shapes() {
            let mut t = Tensor::zeros(name.clone(), rows, cols);
            if name.ends_with(".weight") {
                let (fan_in, fan_out) = if name == "conv.weight" {
                    let k = spec.conv.map_or(1, |c| c.kernel);
                    (cols, rows * k)
                } else {
                    (cols, rows)
                };
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in &mut t.data {
                    *v = rng.gen_range(-bound..bound);
                }
            }
            tensors.push(t);
        }
        Ok(Self {
            spec: spec.clone(),
            tensors,
            normalization: None,
            meta: TrainingMeta::default(),
        })
    }

    /// Same shapes, every parameter zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in &mut z.tensors {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    fn check_shapes(&self) -> Result<()> {
        self.spec.validate()?;
        let shapes = self.spec.tensor_shapes();
        if shapes.len() != self.tensors.len() {
            return Err(Error::Dimension(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                self.tensors.len()
            )));
        }
        for ((name, r, c), t) in shapes.iter().zip(&self.tensors) {
            if *name != t.name || *r != t.rows || *c != t.cols || t.data.len() != r * c {
                return Err(Error::Dimension(format!(
                    "tensor {} is {}x{}, expected {name} {r}x{c}",
                    t.name, t.rows, t.cols
                )));
            }
        }
        Ok(())
    }

    fn run(&self, x: &[f64]) -> Result<Trace> {
        let spec = &self.spec;
        if x.len() != spec.input_dim() {
            return Err(Error::Dimension(format!(
                "network takes {} inputs, got {}",
                spec.input_dim(),
                x.len()
            )));
        }
        let k = spec.users;
        let mut t = 0;
        let mut conv_pre = Vec::new();
        let first = if let Some(c) = spec.conv {
            let w = &self.tensors[0].data;
            let b = &self.tensors[1].data;
            t = 2;
            let pad = c.kernel / 2;
            conv_pre = vec![0.0; c.channels * k];
            for o in 0..c.channels {
                for i in 0..k {
                    let mut z = b[o];
                    for ch in 0..spec.in_channels {
                        for tap in 0..c.kernel {
                            let pos = i + tap;
                            if pos < pad || pos - pad >= k {
                                continue;
                            }
                            z += w[o * spec.in_channels * c.kernel + ch * c.kernel + tap] * x[ch * k + pos - pad];
                        }
                    }
                    conv_pre[o * k + i] = z;
                }
            }
            conv_pre.iter().map(|&z| relu(z)).collect()
        } else {
            x.to_vec()
        };
        let layers = spec.hidden.len() + 1;
        let mut acts = vec![first];
        let mut pres = Vec::with_capacity(layers);
        for l in 0..layers {
            let w = &self.tensors[t];
            let b = &self.tensors[t + 1].data;
            t += 2;
            let a = acts.last().expect("non-empty");
            let z: Vec<f64> = (0..w.rows)
                .map(|r| {
                    let row = &w.data[r * w.cols..(r + 1) * w.cols];
                    b[r] + row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>()
                })
                .collect();
            let out = if l + 1 == layers {
                z.iter().map(|&v| softplus(v)).collect()
            } else {
                z.iter().map(|&v| relu(v)).collect()
            };
            pres.push(z);
            acts.push(out);
        }
        Ok(Trace {
            input: x.to_vec(),
            conv_pre,
            acts,
            pres,
        })
    }

    /// Network output for a normalised input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_shapes()?;
        Ok(self.run(x)?.acts.pop().expect("output layer"))
    }

    /// RMSE of the output against a target, and the gradient of that loss
    /// with respect to every parameter (same layout as `tensors`).
    pub fn loss_and_gradient(&self, x: &[f64], target: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
        let trace = self.run(x)?;
        let mut grads: Vec<Vec<f64>> = self.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
        let loss = self.accumulate(&trace, target, 1.0, &mut grads)?;
        Ok((loss, grads))
    }

    /// RMSE between output and target for one input.
    pub fn loss(&self, x: &[f64], target: &[f64]) -> Result<f64> {
        let y = self.run(x)?.acts.pop().expect("output layer");
        rmse(&y, target)
    }

    /// Add `scale` times the loss gradient of one sample into `grads`.
    fn accumulate(&self, trace: &Trace, target: &[f64], scale: f64, grads: &mut [Vec<f64>]) -> Result<f64> {
        let spec = &self.spec;
        let y = trace.acts.last().expect("output layer");
        let loss = rmse(y, target)?;
        let n = y.len() as f64;
        let layers = spec.hidden.len() + 1;
        let conv_tensors = if spec.conv.is_some() { 2 } else { 0 };

        // dL/dz at the output (softplus' = sigmoid); zero at a perfect fit
        let mut delta: Vec<f64> = if loss > 0.0 {
            y.iter()
                .zip(target)
                .zip(&trace.pres[layers - 1])
                .map(|((yi, ti), zi)| scale * (yi - ti) / (n * loss) * sigmoid(*zi))
                .collect()
        } else {
            vec![0.0; y.len()]
        };
        for l in (0..layers).rev() {
            let wi = conv_tensors + 2 * l;
            let w = &self.tensors[wi];
            let a = &trace.acts[l];
            {
                let (gw, rest) = grads[wi..].split_at_mut(1);
                let gw = &mut gw[0];
                let gb = &mut rest[0];
                for r in 0..w.rows {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    gb[r] += d;
                    for (g, ai) in gw[r * w.cols..(r + 1) * w.cols].iter_mut().zip(a) {
                        *g += d * ai;
                    }
                }
            }
            // back through the weights and the previous activation
            let mut prev = vec![0.0; w.cols];
            for r in 0..w.rows {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                for (p, wv) in prev.iter_mut().zip(&w.data[r * w.cols..(r + 1) * w.cols]) {
                    *p += d * wv;
                }
            }
            let pre_prev: Option<&Vec<f64>> = if l > 0 {
                Some(&trace.pres[l - 1])
            } else if spec.conv.is_some() {
                Some(&trace.conv_pre)
            } else {
                None
            };
            if let Some(z) = pre_prev {
                for (p, zi) in prev.iter_mut().zip(z) {
                    if *zi <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }

        if let Some(c) = spec.conv {
            let k = spec.users;
            let pad = c.kernel / 2;
            let x = &trace.input;
            let (gw, gb) = grads.split_at_mut(1);
            for o in 0..c.channels {
                for i in 0..k {
                    let d = delta[o * k + i];
                    if d == 0.0 {
                        continue;
                    }
                    gb[0][o] += d;
                    for ch in 0..spec.in_channels {
                        for tap in 0..c.kernel {
                            let pos = i + tap;
                            if pos < pad || pos - pad >= k {
                                continue;
                            }
                            gw[0][o * spec.in_channels * c.kernel + ch * c.kernel + tap] += d * x[ch * k + pos - pad];
                        }
                    }
                }
            }
        }
        Ok(loss)
    }
}

/// Root mean square difference of two equal-length vectors.
pub fn rmse(y: &[f64], target: &[f64]) -> Result<f64> {
    if y.len() != target.len() || y.is_empty() {
        return Err(Error::Dimension(format!(
            "prediction has {} entries, target {}",
            y.len(),
            target.len()
        )));
    }
    let mse = y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

/// A projected allocation and how far the network's own total-power output
/// was from the projected total.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub allocation: PowerAllocation,
    pub raw_output: Vec<f64>,
    /// `|predicted total - projected total|`, W.
    pub total_discrepancy: f64,
}

/// Predict an allocation from raw features `[demand_1..K, gain_1..K]`.
pub fn predict(
    weights: &NetworkWeights,
    features: &[f64],
    plan: &GroupingPlan,
    cons: &ConstraintSet,
) -> Result<Prediction> {
    let spec = &weights.spec;
    let k = spec.users;
    let g = spec.groups;
    if plan.num_users() != k || plan.num_groups != g {
        return Err(Error::Dimension(format!(
            "model trained for K={k}, G={g}; instance has K={}, G={}",
            plan.num_users(),
            plan.num_groups
        )));
    }
    if features.len() != 2 * k {
        return Err(Error::Dimension(format!("expected {} features, got {}", 2 * k, features.len())));
    }
    let norm = weights
        .normalization
        .as_ref()
        .ok_or_else(|| Error::Config("model carries no normalization".into()))?;
    let z = norm.normalize_features(features);
    let out = weights.forward(&z[..spec.input_dim()])?;
    let y = norm.denormalize_label(&out);
    let mut x = y[k..k + g].to_vec();
    x.extend_from_slice(&y[..k]);
    let allocation = project_feasible(&x, plan, cons)?;
    let total_discrepancy = (y[k + g] - allocation.total()).abs();
    Ok(Prediction {
        allocation,
        raw_output: y,
        total_discrepancy,
    })
}
