//! Executes a [`NetworkSpec`] forward and backward on CPU.

use std::collections::BTreeMap;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{self, Plane, Tensor};

use super::spec::{hex, Activation, LayerKind, NetworkSpec, Padding, Shape};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Whether dropout is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Stored activations of one forward pass.
#[derive(Debug)]
pub struct Trace {
    outputs: Vec<Tensor>,
    dropout_masks: Vec<Option<Vec<f32>>>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.outputs.last().expect("non-empty trace")
    }

    pub fn into_output(mut self) -> Tensor {
        self.outputs.pop().expect("non-empty trace")
    }

    pub fn layer_output(&self, index: usize) -> &Tensor {
        &self.outputs[index]
    }
}

/// Parameter gradients, laid out like the network's parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    layers: Vec<Option<LayerParams>>,
}

impl Gradients {
    pub fn zero(&mut self) {
        for p in self.layers.iter_mut().flatten() {
            p.weight.fill(0.0);
            p.bias.fill(0.0);
        }
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f32]> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|p| [p.weight.as_slice(), p.bias.as_slice()])
    }

    pub fn scale(&mut self, factor: f32) {
        for p in self.layers.iter_mut().flatten() {
            p.weight.iter_mut().chain(p.bias.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<Shape>,
    params: Vec<Option<LayerParams>>,
}

impl Network {
    /// All weights and biases zero.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        let params = (0..spec.layers.len())
            .map(|i| {
                spec.param_layout(i, &shapes).map(|(w, b, _, _)| LayerParams {
                    weight: vec![0.0; w],
                    bias: vec![0.0; b],
                })
            })
            .collect();
        Ok(Self {
            spec,
            shapes,
            params,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for i in 0..net.params.len() {
            if let Some((_, _, fan_in, fan_out)) = net.spec.param_layout(i, &net.shapes) {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
                let p = net.params[i].as_mut().expect("layout implies params");
                for w in &mut p.weight {
                    *w = rng.random_range(-limit..limit);
                }
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn input_shape(&self) -> Shape {
        self.shapes[0]
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().expect("non-empty")
    }

    pub fn layer_params(&self, name: &str) -> Option<&LayerParams> {
        self.spec.layer_index(name).and_then(|i| self.params[i].as_ref())
    }

    pub fn layer_params_mut(&mut self, name: &str) -> Option<&mut LayerParams> {
        let i = self.spec.layer_index(name)?;
        self.params[i].as_mut()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .params
                .iter()
                .map(|p| {
                    p.as_ref().map(|p| LayerParams {
                        weight: vec![0.0; p.weight.len()],
                        bias: vec![0.0; p.bias.len()],
                    })
                })
                .collect(),
        }
    }

    pub fn param_slices(&self) -> impl Iterator<Item = &[f32]> {
        self.params
            .iter()
            .flatten()
            .flat_map(|p| [p.weight.as_slice(), p.bias.as_slice()])
    }

    pub fn param_slices_mut(&mut self) -> impl Iterator<Item = &mut [f32]> {
        self.params
            .iter_mut()
            .flatten()
            .flat_map(|p| [p.weight.as_mut_slice(), p.bias.as_mut_slice()])
    }

    /// SHA-256 over the little-endian bytes of every parameter.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for s in self.param_slices() {
            for v in s {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    /// Named tensors (`<layer>.weight`, `<layer>.bias`).
    pub fn named_tensors(&self) -> BTreeMap<String, Vec<f32>> {
        let mut out = BTreeMap::new();
        for (layer, p) in self.spec.layers.iter().zip(&self.params) {
            if let Some(p) = p {
                out.insert(format!("{}.weight", layer.name), p.weight.clone());
                out.insert(format!("{}.bias", layer.name), p.bias.clone());
            }
        }
        out
    }

    pub fn load_named_tensors(&mut self, tensors: &BTreeMap<String, Vec<f32>>) -> Result<()> {
        let expected: usize = self.params.iter().flatten().count() * 2;
        if tensors.len() != expected {
            return Err(Error::Archive(format!(
                "archive holds {} tensors, network `{}` needs {expected}",
                tensors.len(),
                self.spec.name
            )));
        }
        for (layer, p) in self.spec.layers.iter().zip(self.params.iter_mut()) {
            let Some(p) = p else { continue };
            for (suffix, dst) in [("weight", &mut p.weight), ("bias", &mut p.bias)] {
                let key = format!("{}.{suffix}", layer.name);
                let src = tensors
                    .get(&key)
                    .ok_or_else(|| Error::Archive(format!("missing tensor `{key}`")))?;
                if src.len() != dst.len() {
                    return Err(Error::Archive(format!(
                        "tensor `{key}` has {} values, expected {}",
                        src.len(),
                        dst.len()
                    )));
                }
                dst.copy_from_slice(src);
            }
        }
        Ok(())
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let s = self.input_shape();
        let [_, c, h, w] = input.shape();
        if (c, h, w) != (s.channels, s.height, s.width) {
            return Err(Error::ShapeMismatch {
                expected: s.to_string(),
                found: format!("{h}x{w}x{c}"),
            });
        }
        Ok(())
    }

    /// Runs the graph, keeping every activation for [`Network::backward`].
    pub fn forward<R: Rng + ?Sized>(&self, input: Tensor, mode: Mode, rng: &mut R) -> Result<Trace> {
        self.check_input(&input)?;
        let batch = input.batch();
        let mut outputs: Vec<Tensor> = Vec::with_capacity(self.spec.layers.len());
        let mut dropout_masks = vec![None; self.spec.layers.len()];
        let mut scratch = Vec::new();
        outputs.push(input);
        for i in 1..self.spec.layers.len() {
            let layer = &self.spec.layers[i];
            let s = self.shapes[i];
            let mut out = Tensor::zeros([batch, s.channels, s.height, s.width]);
            let src_idx = layer.inputs[0];
            let src_shape = self.shapes[src_idx];
            let plane = Plane::new(src_shape.channels, src_shape.height, src_shape.width);
            match &layer.kind {
                LayerKind::Input { .. } => unreachable!("validated by shapes()"),
                LayerKind::Conv2d {
                    filters,
                    kernel,
                    activation,
                    ..
                } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let x = &outputs[src_idx];
                    for n in 0..batch {
                        nn::conv_forward(x.sample(n), plane, &p.weight, &p.bias, *filters, *kernel, out.sample_mut(n), &mut scratch);
                    }
                    apply_activation(&mut out, *activation);
                }
                LayerKind::MaxPool {
                    size,
                    stride,
                    padding,
                } => {
                    let x = &outputs[src_idx];
                    for n in 0..batch {
                        nn::maxpool_forward(x.sample(n), plane, *size, *stride, *padding == Padding::Same, out.sample_mut(n));
                    }
                }
                LayerKind::ConvTranspose2d {
                    filters,
                    activation,
                    ..
                } => {
                    let p = self.params[i].as_ref().expect("transpose params");
                    let x = &outputs[src_idx];
                    for n in 0..batch {
                        nn::conv_transpose_forward(x.sample(n), plane, &p.weight, &p.bias, *filters, out.sample_mut(n), &mut scratch);
                    }
                    apply_activation(&mut out, *activation);
                }
                LayerKind::Concat => {
                    for n in 0..batch {
                        let dst = out.sample_mut(n);
                        let mut offset = 0;
                        for &j in &layer.inputs {
                            let part = outputs[j].sample(n);
                            dst[offset..offset + part.len()].copy_from_slice(part);
                            offset += part.len();
                        }
                    }
                }
                LayerKind::Flatten => {
                    out.data_mut().copy_from_slice(outputs[src_idx].data());
                }
                LayerKind::Dense { units, activation } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    nn::dense_forward(outputs[src_idx].data(), batch, src_shape.len(), &p.weight, &p.bias, out.data_mut());
                    debug_assert_eq!(*units, s.channels);
                    apply_activation(&mut out, *activation);
                }
                LayerKind::Dropout { rate } => {
                    out.data_mut().copy_from_slice(outputs[src_idx].data());
                    if mode == Mode::Train && *rate > 0.0 {
                        let keep = 1.0 - *rate;
                        let scale = (1.0 / keep) as f32;
                        let mask: Vec<f32> = (0..out.data().len())
                            .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
                            .collect();
                        for (v, m) in out.data_mut().iter_mut().zip(&mask) {
                            *v *= m;
                        }
                        dropout_masks[i] = Some(mask);
                    }
                }
            }
            outputs.push(out);
        }
        Ok(Trace {
            outputs,
            dropout_masks,
        })
    }

    /// Inference-mode forward pass returning only the output.
    pub fn predict(&self, input: Tensor) -> Result<Tensor> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        Ok(self.forward(input, Mode::Eval, &mut rng)?.into_output())
    }

    /// Back-propagates `grad_output` (gradient of the loss with respect to
    /// the network output). Parameter gradients accumulate into `grads` when
    /// given; the gradient with respect to the input is returned when
    /// `need_input_grad` is set.
    pub fn backward(
        &self,
        trace: &Trace,
        grad_output: Tensor,
        mut grads: Option<&mut Gradients>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        let last = self.spec.layers.len() - 1;
        if grad_output.shape() != trace.outputs[last].shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", trace.outputs[last].shape()),
                found: format!("{:?}", grad_output.shape()),
            });
        }
        let batch = grad_output.batch();
        let mut pending: Vec<Option<Tensor>> = vec![None; self.spec.layers.len()];
        pending[last] = Some(grad_output);
        let mut scratch = Vec::new();

        for i in (1..=last).rev() {
            let Some(mut g) = pending[i].take() else { continue };
            let layer = &self.spec.layers[i];
            let y = &trace.outputs[i];
            let src_idx = layer.inputs[0];
            let src_shape = self.shapes[src_idx];
            let plane = Plane::new(src_shape.channels, src_shape.height, src_shape.width);
            let wants_src = src_idx != 0 || need_input_grad;
            match &layer.kind {
                LayerKind::Input { .. } => unreachable!(),
                LayerKind::Conv2d {
                    filters,
                    kernel,
                    activation,
                    ..
                } => {
                    activation_backward(&mut g, y, *activation);
                    let p = self.params[i].as_ref().expect("conv params");
                    let x = &trace.outputs[src_idx];
                    let mut gx = wants_src.then(|| Tensor::zeros(x.shape()));
                    let mut gp = grads.as_deref_mut().and_then(|gr| gr.layers[i].as_mut());
                    for n in 0..batch {
                        let params = gp.as_mut().map(|gp| (gp.weight.as_mut_slice(), gp.bias.as_mut_slice()));
                        let gi = gx.as_mut().map(|t| t.sample_mut(n));
                        nn::conv_backward(x.sample(n), plane, &p.weight, *filters, *kernel, g.sample(n), params, gi, &mut scratch);
                    }
                    if let Some(gx) = gx {
                        accumulate(&mut pending[src_idx], gx);
                    }
                }
                LayerKind::MaxPool {
                    size,
                    stride,
                    padding,
                } => {
                    if wants_src {
                        let x = &trace.outputs[src_idx];
                        let mut gx = Tensor::zeros(x.shape());
                        for n in 0..batch {
                            nn::maxpool_backward(x.sample(n), plane, *size, *stride, *padding == Padding::Same, g.sample(n), gx.sample_mut(n));
                        }
                        accumulate(&mut pending[src_idx], gx);
                    }
                }
                LayerKind::ConvTranspose2d {
                    filters,
                    activation,
                    ..
                } => {
                    activation_backward(&mut g, y, *activation);
                    let p = self.params[i].as_ref().expect("transpose params");
                    let x = &trace.outputs[src_idx];
                    let mut gx = wants_src.then(|| Tensor::zeros(x.shape()));
                    let mut gp = grads.as_deref_mut().and_then(|gr| gr.layers[i].as_mut());
                    for n in 0..batch {
                        let params = gp.as_mut().map(|gp| (gp.weight.as_mut_slice(), gp.bias.as_mut_slice()));
                        let gi = gx.as_mut().map(|t| t.sample_mut(n));
                        nn::conv_transpose_backward(x.sample(n), plane, &p.weight, *filters, g.sample(n), params, gi, &mut scratch);
                    }
                    if let Some(gx) = gx {
                        accumulate(&mut pending[src_idx], gx);
                    }
                }
                LayerKind::Concat => {
                    let mut offset = 0;
                    for &j in &layer.inputs {
                        let part_shape = trace.outputs[j].shape();
                        let len = part_shape[1] * part_shape[2] * part_shape[3];
                        if j != 0 || need_input_grad {
                            let mut gj = Tensor::zeros(part_shape);
                            for n in 0..batch {
                                gj.sample_mut(n).copy_from_slice(&g.sample(n)[offset..offset + len]);
                            }
                            accumulate(&mut pending[j], gj);
                        }
                        offset += len;
                    }
                }
                LayerKind::Flatten => {
                    if wants_src {
                        let shape = trace.outputs[src_idx].shape();
                        accumulate(&mut pending[src_idx], g.reshape(shape));
                    }
                }
                LayerKind::Dense { activation, .. } => {
                    activation_backward(&mut g, y, *activation);
                    let p = self.params[i].as_ref().expect("dense params");
                    let x = &trace.outputs[src_idx];
                    let mut gx = wants_src.then(|| Tensor::zeros(x.shape()));
                    let params = grads
                        .as_deref_mut()
                        .and_then(|gr| gr.layers[i].as_mut())
                        .map(|gp| (gp.weight.as_mut_slice(), gp.bias.as_mut_slice()));
                    nn::dense_backward(
                        x.data(),
                        batch,
                        src_shape.len(),
                        &p.weight,
                        p.bias.len(),
                        g.data(),
                        params,
                        gx.as_mut().map(|t| t.data_mut()),
                    );
                    if let Some(gx) = gx {
                        accumulate(&mut pending[src_idx], gx);
                    }
                }
                LayerKind::Dropout { .. } => {
                    if let Some(mask) = &trace.dropout_masks[i] {
                        for (v, m) in g.data_mut().iter_mut().zip(mask) {
                            *v *= m;
                        }
                    }
                    if wants_src {
                        accumulate(&mut pending[src_idx], g);
                    }
                }
            }
        }
        Ok(if need_input_grad { pending[0].take() } else { None })
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(t) => t.add_assign(&g),
        None => *slot = Some(g),
    }
}

fn apply_activation(t: &mut Tensor, activation: Activation) {
    match activation {
        Activation::Linear => {}
        Activation::Relu => t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Sigmoid => t
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
        Activation::Softmax => {
            let [n, c, h, w] = t.shape();
            let area = h * w;
            for s in 0..n {
                let sample = t.sample_mut(s);
                for px in 0..area {
                    let max = (0..c).map(|k| sample[k * area + px]).fold(f32::NEG_INFINITY, f32::max);
                    let mut sum = 0.0;
                    for k in 0..c {
                        let e = (sample[k * area + px] - max).exp();
                        sample[k * area + px] = e;
                        sum += e;
                    }
                    for k in 0..c {
                        sample[k * area + px] /= sum;
                    }
                }
            }
        }
    }
}

/// Converts a gradient at the activation output into one at its input.
fn activation_backward(g: &mut Tensor, y: &Tensor, activation: Activation) {
    match activation {
        Activation::Linear => {}
        Activation::Relu => {
            for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                if yv <= 0.0 {
                    *gv = 0.0;
                }
            }
        }
        Activation::Sigmoid => {
            for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                *gv *= yv * (1.0 - yv);
            }
        }
        Activation::Softmax => {
            let [n, c, h, w] = y.shape();
            let area = h * w;
            for s in 0..n {
                let ys = y.sample(s);
                let gs = g.sample_mut(s);
                for px in 0..area {
                    let dot: f32 = (0..c).map(|k| gs[k * area + px] * ys[k * area + px]).sum();
                    for k in 0..c {
                        gs[k * area + px] = ys[k * area + px] * (gs[k * area + px] - dot);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::spec::{classifier_spec, counter_spec, detector_spec_sized, GraphBuilder};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_input(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random::<f32>()).collect())
    }

    /// Finite-difference check of `L = Σ r ⊙ net(x)` in f64 accumulation.
    fn check_gradients(spec: NetworkSpec, batch: usize, seed: u64, probes: &[(String, usize)]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::glorot(spec, &mut rng).unwrap();
        for s in net.param_slices_mut() {
            for v in s.iter_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        let s = net.input_shape();
        let x = random_input([batch, s.channels, s.height, s.width], &mut rng);
        let out = net.output_shape();
        let r = random_input([batch, out.channels, out.height, out.width], &mut rng);
        let loss = |net: &Network, x: &Tensor| -> f64 {
            net.predict(x.clone())
                .unwrap()
                .data()
                .iter()
                .zip(r.data())
                .map(|(a, b)| *a as f64 * *b as f64)
                .sum()
        };
        let trace = net.forward(x.clone(), Mode::Eval, &mut rng).unwrap();
        let mut grads = net.zero_gradients();
        let gx = net.backward(&trace, r.clone(), Some(&mut grads), true).unwrap().unwrap();
        let eps = 1e-3f32;
        for (name, idx) in probes {
            let li = net.spec().layer_index(name).unwrap();
            let analytic = grads.layers[li].as_ref().unwrap().weight[*idx] as f64;
            let mut plus = net.clone();
            plus.layer_params_mut(name).unwrap().weight[*idx] += eps;
            let mut minus = net.clone();
            minus.layer_params_mut(name).unwrap().weight[*idx] -= eps;
            let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * eps as f64);
            assert!(
                (fd - analytic).abs() <= 2e-2 * fd.abs().max(analytic.abs()).max(0.05),
                "{name}[{idx}]: fd {fd} vs analytic {analytic}"
            );
        }
        for idx in [0, x.data().len() / 3, x.data().len() - 1] {
            let mut plus = x.clone();
            plus.data_mut()[idx] += eps;
            let mut minus = x.clone();
            minus.data_mut()[idx] -= eps;
            let fd = (loss(&net, &plus) - loss(&net, &minus)) / (2.0 * eps as f64);
            let analytic = gx.data()[idx] as f64;
            assert!(
                (fd - analytic).abs() <= 2e-2 * fd.abs().max(analytic.abs()).max(0.05),
                "input[{idx}]: fd {fd} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn small_detector_gradients() {
        let spec = detector_spec_sized(8).unwrap();
        let probes = vec![
            ("enc1/1x1".to_string(), 0),
            ("enc1/double_3x3b".to_string(), 7),
            ("bottleneck/3x3".to_string(), 3),
            ("dec1/upsample".to_string(), 5),
            ("dec2/pool_proj".to_string(), 2),
            ("probability".to_string(), 4),
        ];
        check_gradients(spec, 2, 1, &probes);
    }

    #[test]
    fn counter_gradients() {
        let probes = vec![("conv1".to_string(), 3), ("conv4".to_string(), 10), ("dense1".to_string(), 17), ("count".to_string(), 0)];
        check_gradients(counter_spec(16).unwrap(), 2, 2, &probes);
    }

    #[test]
    fn classifier_gradients_with_softmax() {
        let probes = vec![("conv2".to_string(), 4), ("probabilities".to_string(), 9)];
        check_gradients(classifier_spec(), 2, 3, &probes);
    }

    #[test]
    fn zero_input_zero_bias_counter_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Network::glorot(counter_spec(32).unwrap(), &mut rng).unwrap();
        let out = net.predict(Tensor::zeros([1, 1, 32, 32])).unwrap();
        assert_eq!(out.data(), &[0.0]);
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::glorot(classifier_spec(), &mut rng).unwrap();
        let shapes = net.shapes().to_vec();
        for (i, p) in net.params.iter().enumerate() {
            if let Some(p) = p {
                let (_, _, fi, fo) = net.spec.param_layout(i, &shapes).unwrap();
                let limit = (6.0 / (fi + fo) as f64).sqrt() as f32;
                assert!(p.weight.iter().all(|w| w.abs() <= limit));
                assert!(p.bias.iter().all(|&b| b == 0.0));
            }
        }
    }

    #[test]
    fn softmax_outputs_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = Network::glorot(classifier_spec(), &mut rng).unwrap();
        let x = random_input([4, 3, 28, 28], &mut rng);
        let y = net.predict(x).unwrap();
        for s in 0..4 {
            assert!((y.sample(s).iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dropout_only_in_training() {
        let mut g = GraphBuilder::new("d", 4, 1, 1);
        let x = g.add("flat", LayerKind::Flatten, vec![0]);
        g.add("drop", LayerKind::Dropout { rate: 0.5 }, vec![x]);
        let net = Network::zeros(g.finish().unwrap()).unwrap();
        let input = Tensor::from_vec([1, 4, 1, 1], vec![1.0; 4]);
        assert_eq!(net.predict(input.clone()).unwrap().data(), &[1.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = net.forward(input, Mode::Train, &mut rng).unwrap();
        assert!(t.output().data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let net = Network::zeros(classifier_spec()).unwrap();
        assert!(matches!(net.predict(Tensor::zeros([1, 3, 27, 28])), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn named_tensor_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Network::glorot(counter_spec(16).unwrap(), &mut rng).unwrap();
        let mut b = Network::zeros(counter_spec(16).unwrap()).unwrap();
        b.load_named_tensors(&a.named_tensors()).unwrap();
        assert_eq!(a.checksum(), b.checksum());
    }
}
