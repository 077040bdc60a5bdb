//! Declarative layer graphs for the counter, detector and classifier.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Input {
        channels: usize,
        height: usize,
        width: usize,
    },
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        activation: Activation,
    },
    MaxPool {
        size: usize,
        stride: usize,
        padding: Padding,
    },
    ConvTranspose2d {
        filters: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    },
    Concat,
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
}

impl LayerKind {
    pub fn has_params(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv2d { .. } | LayerKind::ConvTranspose2d { .. } | LayerKind::Dense { .. }
        )
    }
}

/// One node of the graph. `inputs` index earlier layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
    pub inputs: Vec<usize>,
}

/// Channel allocation of a four-branch inception block: a 1×1 branch, a
/// 1×1→3×3 branch, a 1×1→3×3→3×3 branch and a 3×3 max-pool→1×1 branch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InceptionModuleSpec {
    pub name: String,
    pub output_channels: usize,
    pub branch_1x1: usize,
    pub branch_3x3_reduce: usize,
    pub branch_3x3: usize,
    pub branch_double_reduce: usize,
    pub branch_double_3x3: usize,
    pub branch_pool_proj: usize,
}

impl InceptionModuleSpec {
    /// Splits `output_channels` 1:2:2:1 across the branches (rounded, with
    /// the remainder absorbed by the 3×3 branch); each 3×3 path starts with
    /// a 1×1 reduction to half its width.
    pub fn with_output(name: impl Into<String>, output_channels: usize) -> Self {
        let unit = output_channels as f64 / 6.0;
        let b1 = unit.round() as usize;
        let b2 = (2.0 * unit).round() as usize;
        let b3 = (2.0 * unit).round() as usize;
        let b4 = unit.round() as usize;
        let b2 = (b2 as isize + output_channels as isize - (b1 + b2 + b3 + b4) as isize) as usize;
        let half = |c: usize| ((c as f64) / 2.0).round().max(1.0) as usize;
        Self {
            name: name.into(),
            output_channels,
            branch_1x1: b1,
            branch_3x3_reduce: half(b2),
            branch_3x3: b2,
            branch_double_reduce: half(b3),
            branch_double_3x3: b3,
            branch_pool_proj: b4,
        }
    }

    pub fn branch_outputs(&self) -> [usize; 4] {
        [
            self.branch_1x1,
            self.branch_3x3,
            self.branch_double_3x3,
            self.branch_pool_proj,
        ]
    }
}

/// Activation shape of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub inception_modules: Vec<InceptionModuleSpec>,
}

impl NetworkSpec {
    pub fn input_shape(&self) -> Result<Shape> {
        match self.layers.first().map(|l| &l.kind) {
            Some(LayerKind::Input {
                channels,
                height,
                width,
            }) => Ok(Shape::new(*channels, *height, *width)),
            _ => Err(Error::InvalidInput(format!(
                "network `{}` must start with an input layer",
                self.name
            ))),
        }
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Infers every layer's output shape, validating the graph on the way.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes: Vec<Shape> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let unsupported = |detail: String| Error::UnsupportedLayer {
                layer: layer.name.clone(),
                detail,
            };
            if layer.inputs.iter().any(|&j| j >= i) {
                return Err(unsupported("inputs must refer to earlier layers".into()));
            }
            let expected_inputs = match layer.kind {
                LayerKind::Input { .. } => 0,
                LayerKind::Concat => layer.inputs.len().max(2),
                _ => 1,
            };
            if layer.inputs.len() != expected_inputs {
                return Err(unsupported(format!(
                    "expected {expected_inputs} inputs, found {}",
                    layer.inputs.len()
                )));
            }
            let first = layer.inputs.first().map(|&j| shapes[j]);
            let shape = match &layer.kind {
                LayerKind::Input {
                    channels,
                    height,
                    width,
                } => {
                    if i != 0 {
                        return Err(unsupported("input layer must come first".into()));
                    }
                    Shape::new(*channels, *height, *width)
                }
                LayerKind::Conv2d {
                    filters,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    if *stride != 1 || *padding != Padding::Same || kernel % 2 == 0 {
                        return Err(unsupported(
                            "only odd-kernel, stride-1, same-padded convolutions are supported".into(),
                        ));
                    }
                    let s = first.unwrap();
                    Shape::new(*filters, s.height, s.width)
                }
                LayerKind::MaxPool {
                    size,
                    stride,
                    padding,
                } => {
                    let s = first.unwrap();
                    let same = *padding == Padding::Same;
                    if same && (*stride != 1 || size % 2 == 0) {
                        return Err(unsupported("same-padded pooling needs stride 1 and an odd window".into()));
                    }
                    let h = crate::nn::pool_output(s.height, *size, *stride, same);
                    let w = crate::nn::pool_output(s.width, *size, *stride, same);
                    if h == 0 || w == 0 {
                        return Err(unsupported(format!("pooling {s} leaves no output")));
                    }
                    Shape::new(s.channels, h, w)
                }
                LayerKind::ConvTranspose2d {
                    filters,
                    kernel,
                    stride,
                    ..
                } => {
                    if *kernel != 2 || *stride != 2 {
                        return Err(unsupported("transposed convolutions must be 2x2 stride 2".into()));
                    }
                    let s = first.unwrap();
                    Shape::new(*filters, s.height * 2, s.width * 2)
                }
                LayerKind::Concat => {
                    let parts: Vec<Shape> = layer.inputs.iter().map(|&j| shapes[j]).collect();
                    let (h, w) = (parts[0].height, parts[0].width);
                    if parts.iter().any(|s| s.height != h || s.width != w) {
                        return Err(unsupported(format!(
                            "concatenated spatial sizes differ: {}",
                            parts.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
                        )));
                    }
                    Shape::new(parts.iter().map(|s| s.channels).sum(), h, w)
                }
                LayerKind::Flatten => Shape::new(first.unwrap().len(), 1, 1),
                LayerKind::Dense { units, .. } => {
                    let s = first.unwrap();
                    if s.height != 1 || s.width != 1 {
                        return Err(unsupported(format!("dense input must be flat, got {s}")));
                    }
                    Shape::new(*units, 1, 1)
                }
                LayerKind::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(unsupported(format!("dropout rate {rate} outside [0, 1)")));
                    }
                    first.unwrap()
                }
            };
            shapes.push(shape);
        }
        if shapes.is_empty() {
            return Err(Error::InvalidInput(format!("network `{}` is empty", self.name)));
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(*self.shapes()?.last().expect("non-empty"))
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("spec serializes");
        hex(&Sha256::digest(&canonical))
    }

    /// `(weight_len, bias_len, fan_in, fan_out)` for a parameterised layer.
    pub fn param_layout(&self, index: usize, shapes: &[Shape]) -> Option<(usize, usize, usize, usize)> {
        let layer = &self.layers[index];
        let input = layer.inputs.first().map(|&j| shapes[j])?;
        match layer.kind {
            LayerKind::Conv2d { filters, kernel, .. } => {
                let rf = kernel * kernel;
                Some((filters * input.channels * rf, filters, input.channels * rf, filters * rf))
            }
            LayerKind::ConvTranspose2d { filters, kernel, .. } => {
                let rf = kernel * kernel;
                Some((input.channels * filters * rf, filters, filters * rf, input.channels * rf))
            }
            LayerKind::Dense { units, .. } => {
                let fan_in = input.len();
                Some((units * fan_in, units, fan_in, units))
            }
            _ => None,
        }
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> Result<usize> {
        let shapes = self.shapes()?;
        Ok((0..self.layers.len())
            .filter_map(|i| self.param_layout(i, &shapes))
            .map(|(w, b, _, _)| w + b)
            .sum())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Incremental graph construction.
#[derive(Debug)]
pub struct GraphBuilder {
    spec: NetworkSpec,
}

impl GraphBuilder {
    pub fn new(name: impl Into<String>, channels: usize, height: usize, width: usize) -> Self {
        Self {
            spec: NetworkSpec {
                name: name.into(),
                layers: vec![Layer {
                    name: "input".into(),
                    kind: LayerKind::Input {
                        channels,
                        height,
                        width,
                    },
                    inputs: vec![],
                }],
                inception_modules: vec![],
            },
        }
    }

    pub fn input(&self) -> usize {
        0
    }

    pub fn add(&mut self, name: impl Into<String>, kind: LayerKind, inputs: Vec<usize>) -> usize {
        self.spec.layers.push(Layer {
            name: name.into(),
            kind,
            inputs,
        });
        self.spec.layers.len() - 1
    }

    pub fn conv(&mut self, name: impl Into<String>, from: usize, filters: usize, kernel: usize, activation: Activation) -> usize {
        self.add(
            name,
            LayerKind::Conv2d {
                filters,
                kernel,
                stride: 1,
                padding: Padding::Same,
                activation,
            },
            vec![from],
        )
    }

    pub fn max_pool(&mut self, name: impl Into<String>, from: usize) -> usize {
        self.add(
            name,
            LayerKind::MaxPool {
                size: 2,
                stride: 2,
                padding: Padding::Valid,
            },
            vec![from],
        )
    }

    pub fn dense(&mut self, name: impl Into<String>, from: usize, units: usize, activation: Activation) -> usize {
        self.add(name, LayerKind::Dense { units, activation }, vec![from])
    }

    pub fn inception(&mut self, from: usize, module: InceptionModuleSpec) -> usize {
        let n = module.name.clone();
        let relu = Activation::Relu;
        let b1 = self.conv(format!("{n}/1x1"), from, module.branch_1x1, 1, relu);
        let r2 = self.conv(format!("{n}/3x3_reduce"), from, module.branch_3x3_reduce, 1, relu);
        let b2 = self.conv(format!("{n}/3x3"), r2, module.branch_3x3, 3, relu);
        let r3 = self.conv(format!("{n}/double_reduce"), from, module.branch_double_reduce, 1, relu);
        let d3 = self.conv(format!("{n}/double_3x3a"), r3, module.branch_double_3x3, 3, relu);
        let b3 = self.conv(format!("{n}/double_3x3b"), d3, module.branch_double_3x3, 3, relu);
        let p4 = self.add(
            format!("{n}/pool"),
            LayerKind::MaxPool {
                size: 3,
                stride: 1,
                padding: Padding::Same,
            },
            vec![from],
        );
        let b4 = self.conv(format!("{n}/pool_proj"), p4, module.branch_pool_proj, 1, relu);
        let out = self.add(format!("{n}/concat"), LayerKind::Concat, vec![b1, b2, b3, b4]);
        self.spec.inception_modules.push(module);
        out
    }

    pub fn finish(self) -> Result<NetworkSpec> {
        self.spec.shapes()?;
        Ok(self.spec)
    }
}

pub const COUNTER_CHANNELS: [usize; 4] = [16, 32, 64, 128];
pub const COUNTER_HIDDEN: usize = 200;
pub const CLASSIFIER_CHANNELS: [usize; 4] = [32, 64, 128, 128];
pub const CLASSIFIER_HIDDEN: usize = 200;
pub const CLASSIFIER_DROPOUT: f64 = 0.3;
pub const CLASSIFIER_CLASSES: usize = 3;

/// Count regressor over an `n×n` single-channel map.
pub fn counter_spec(n: usize) -> Result<NetworkSpec> {
    if n == 0 || n % 16 != 0 {
        return Err(Error::IndivisibleInput { size: n, divisor: 16 });
    }
    let mut g = GraphBuilder::new("cell_counter", 1, n, n);
    let mut x = g.input();
    for (i, &ch) in COUNTER_CHANNELS.iter().enumerate() {
        x = g.conv(format!("conv{}", i + 1), x, ch, 3, Activation::Relu);
        x = g.max_pool(format!("pool{}", i + 1), x);
    }
    let x = g.add("flatten", LayerKind::Flatten, vec![x]);
    let x = g.dense("dense1", x, COUNTER_HIDDEN, Activation::Relu);
    g.dense("count", x, 1, Activation::Linear);
    g.finish()
}

/// Inception encoder-decoder producing a sigmoid probability map for `n×n`
/// RGB patches.
pub fn detector_spec_sized(n: usize) -> Result<NetworkSpec> {
    if n == 0 || n % 4 != 0 {
        return Err(Error::IndivisibleInput { size: n, divisor: 4 });
    }
    let mut g = GraphBuilder::new("concorde_detector", 3, n, n);
    let relu = Activation::Relu;
    let enc1 = g.inception(g.input(), InceptionModuleSpec::with_output("enc1", 32));
    let p1 = g.max_pool("enc1/downsample", enc1);
    let enc2 = g.inception(p1, InceptionModuleSpec::with_output("enc2", 64));
    let p2 = g.max_pool("enc2/downsample", enc2);
    let bottleneck = g.inception(p2, InceptionModuleSpec::with_output("bottleneck", 128));
    let up1 = g.add(
        "dec1/upsample",
        LayerKind::ConvTranspose2d {
            filters: 64,
            kernel: 2,
            stride: 2,
            activation: relu,
        },
        vec![bottleneck],
    );
    let cat1 = g.add("dec1/skip", LayerKind::Concat, vec![up1, enc2]);
    let dec1 = g.inception(cat1, InceptionModuleSpec::with_output("dec1", 64));
    let up2 = g.add(
        "dec2/upsample",
        LayerKind::ConvTranspose2d {
            filters: 32,
            kernel: 2,
            stride: 2,
            activation: relu,
        },
        vec![dec1],
    );
    let cat2 = g.add("dec2/skip", LayerKind::Concat, vec![up2, enc1]);
    let dec2 = g.inception(cat2, InceptionModuleSpec::with_output("dec2", 32));
    g.conv("probability", dec2, 1, 1, Activation::Sigmoid);
    g.finish()
}

/// The detector at its native 224×224 input size.
pub fn detector_spec() -> NetworkSpec {
    detector_spec_sized(crate::data::DETECTION_PATCH_SIZE).expect("224 is divisible by 4")
}

/// VGG-style three-way classifier for 28×28 RGB cell patches.
pub fn classifier_spec() -> NetworkSpec {
    let n = crate::data::CLASSIFIER_PATCH_SIZE;
    let mut g = GraphBuilder::new("cell_classifier", 3, n, n);
    let mut x = g.input();
    for (i, &ch) in CLASSIFIER_CHANNELS.iter().enumerate() {
        x = g.conv(format!("conv{}", i + 1), x, ch, 3, Activation::Relu);
        x = g.max_pool(format!("pool{}", i + 1), x);
    }
    let x = g.add("flatten", LayerKind::Flatten, vec![x]);
    let x = g.dense("dense1", x, CLASSIFIER_HIDDEN, Activation::Relu);
    let x = g.add("dropout", LayerKind::Dropout { rate: CLASSIFIER_DROPOUT }, vec![x]);
    g.dense("probabilities", x, CLASSIFIER_CLASSES, Activation::Softmax);
    g.finish().expect("classifier graph is valid")
}
