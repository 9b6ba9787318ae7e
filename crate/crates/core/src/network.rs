//! Layer and network descriptions, plus the built-in AlexNet / VGG16 /
//! ResNet18 skeletons and their parallelism vectors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subarray::Precision;

/// Max pooling with a square window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub fn output_dim(&self, input: usize) -> usize {
        if input < self.window {
            0
        } else {
            (input - self.window) / self.stride + 1
        }
    }

    pub fn is_non_overlapping(&self) -> bool {
        self.window == self.stride
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    /// Input height `H`.
    pub height: usize,
    /// Input width `W`.
    pub width: usize,
    /// Input channels `I`.
    pub in_channels: usize,
    /// Output filters `O`.
    pub out_channels: usize,
    /// Kernel height `K`.
    pub kernel_h: usize,
    /// Kernel width `L`.
    pub kernel_w: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PoolSpec>,
}

fn one() -> usize {
    1
}

impl ConvSpec {
    /// Output height, with floor division on the stride.
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding).saturating_sub(self.kernel_h) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding).saturating_sub(self.kernel_w) / self.stride + 1
    }

    /// Dimensions after the optional pooling stage: `(channels, height, width)`.
    pub fn pooled_dims(&self) -> (usize, usize, usize) {
        let (h, w) = (self.out_height(), self.out_width());
        match self.pool {
            Some(p) => (self.out_channels, p.output_dim(h), p.output_dim(w)),
            None => (self.out_channels, h, w),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearSpec {
    /// Input neurons (`w1`).
    pub inputs: usize,
    /// Output neurons (`w2`).
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv(ConvSpec),
    Linear(LinearSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn conv(name: &str, spec: ConvSpec) -> Self {
        LayerSpec { name: name.into(), kind: LayerKind::Conv(spec) }
    }

    pub fn linear(name: &str, inputs: usize, outputs: usize) -> Self {
        LayerSpec { name: name.into(), kind: LayerKind::Linear(LinearSpec { inputs, outputs }) }
    }

    /// Output filters (conv) or output neurons (linear).
    pub fn outputs_per_position(&self) -> usize {
        match &self.kind {
            LayerKind::Conv(c) => c.out_channels,
            LayerKind::Linear(l) => l.outputs,
        }
    }

    /// Dot products per output filter: output positions for conv, 1 for linear.
    pub fn macs_per_output(&self) -> usize {
        match &self.kind {
            LayerKind::Conv(c) => c.out_height() * c.out_width(),
            LayerKind::Linear(_) => 1,
        }
    }

    /// Multiplications per dot product.
    pub fn mac_size(&self) -> usize {
        match &self.kind {
            LayerKind::Conv(c) => c.kernel_h * c.kernel_w * c.in_channels,
            LayerKind::Linear(l) => l.inputs,
        }
    }

    pub fn total_macs(&self) -> u64 {
        (self.outputs_per_position() * self.macs_per_output()) as u64
    }

    pub fn total_multiplications(&self) -> u64 {
        self.total_macs() * self.mac_size() as u64
    }

    /// Number of input activations consumed.
    pub fn input_elements(&self) -> usize {
        match &self.kind {
            LayerKind::Conv(c) => c.in_channels * c.height * c.width,
            LayerKind::Linear(l) => l.inputs,
        }
    }

    /// Activations emitted after pooling.
    pub fn output_elements(&self) -> usize {
        match &self.kind {
            LayerKind::Conv(c) => {
                let (ch, h, w) = c.pooled_dims();
                ch * h * w
            }
            LayerKind::Linear(l) => l.outputs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("layer `{}`: {msg}", self.name)));
        match &self.kind {
            LayerKind::Conv(c) => {
                let dims = [
                    ("height", c.height),
                    ("width", c.width),
                    ("in_channels", c.in_channels),
                    ("out_channels", c.out_channels),
                    ("kernel_h", c.kernel_h),
                    ("kernel_w", c.kernel_w),
                    ("stride", c.stride),
                ];
                for (field, v) in dims {
                    if v == 0 {
                        return fail(format!("{field} must be positive"));
                    }
                }
                if c.height + 2 * c.padding < c.kernel_h || c.width + 2 * c.padding < c.kernel_w {
                    return fail("kernel larger than padded input".into());
                }
                if let Some(p) = c.pool {
                    if p.window == 0 || p.stride == 0 {
                        return fail("pool window and stride must be positive".into());
                    }
                    if p.window > c.out_height() || p.window > c.out_width() {
                        return fail("pool window larger than the conv output".into());
                    }
                }
            }
            LayerKind::Linear(l) => {
                if l.inputs == 0 || l.outputs == 0 {
                    return fail("inputs and outputs must be positive".into());
                }
            }
        }
        Ok(())
    }
}

/// Skip connection: the input of `from_layer` is added to the output of
/// `to_layer` before it is handed to the next layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualEdge {
    pub from_layer: usize,
    pub to_layer: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDescription {
    pub name: String,
    pub precision: Precision,
    pub layers: Vec<LayerSpec>,
    /// One parallelism divisor `k` per layer.
    pub parallelism: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub residuals: Vec<ResidualEdge>,
}

impl NetworkDescription {
    pub fn validate(&self) -> Result<()> {
        if self.parallelism.len() != self.layers.len() {
            return Err(Error::Validation(format!(
                "parallelism vector has {} entries for {} layers",
                self.parallelism.len(),
                self.layers.len()
            )));
        }
        for (layer, &k) in self.layers.iter().zip(&self.parallelism) {
            layer.validate()?;
            let outputs = layer.outputs_per_position();
            if k == 0 || outputs % k != 0 {
                return Err(Error::Validation(format!(
                    "layer `{}`: parallelism {k} does not divide {outputs} outputs",
                    layer.name
                )));
            }
        }
        for (i, r) in self.residuals.iter().enumerate() {
            if r.from_layer > r.to_layer || r.to_layer >= self.layers.len() {
                return Err(Error::Validation(format!(
                    "residual edge {i} ({} -> {}) is out of order or out of range",
                    r.from_layer, r.to_layer
                )));
            }
        }
        Ok(())
    }

    /// Checks that each layer consumes exactly what the previous one emits,
    /// which functional execution needs.
    pub fn validate_chaining(&self) -> Result<()> {
        for w in self.layers.windows(2) {
            let (prev, next) = (&w[0], &w[1]);
            if prev.output_elements() != next.input_elements() {
                return Err(Error::Validation(format!(
                    "layer `{}` emits {} activations but `{}` expects {}",
                    prev.name,
                    prev.output_elements(),
                    next.name,
                    next.input_elements()
                )));
            }
        }
        Ok(())
    }

    /// Elements of the tensor carried by a skip connection.
    pub fn residual_elements(&self, edge: &ResidualEdge) -> usize {
        self.layers[edge.to_layer].output_elements()
    }

    pub fn with_parallelism(mut self, parallelism: Vec<usize>) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn with_precision(mut self, n: Precision) -> Self {
        self.precision = n;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: NetworkDescription = serde_json::from_str(text)?;
        net.validate()?;
        Ok(net)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    AlexNet,
    Vgg16,
    ResNet18,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alexnet" => Ok(Preset::AlexNet),
            "vgg16" | "vgg-16" => Ok(Preset::Vgg16),
            "resnet18" | "resnet-18" => Ok(Preset::ResNet18),
            other => Err(Error::Validation(format!(
                "unknown preset `{other}` (expected alexnet, vgg16 or resnet18)"
            ))),
        }
    }
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::AlexNet, Preset::Vgg16, Preset::ResNet18];

    pub fn name(self) -> &'static str {
        match self {
            Preset::AlexNet => "alexnet",
            Preset::Vgg16 => "vgg16",
            Preset::ResNet18 => "resnet18",
        }
    }

    /// Names of the listed parallelism vectors (`P1`, `P2`, ...).
    pub fn parallelism_names(self) -> &'static [&'static str] {
        match self {
            Preset::AlexNet => &["P1", "P2", "P3"],
            Preset::Vgg16 => &["P1", "P2", "P3", "P4", "P5"],
            Preset::ResNet18 => &["P1"],
        }
    }

    pub fn parallelism(self, name: &str) -> Result<Vec<usize>> {
        let v: Vec<usize> = match (self, name.to_ascii_uppercase().as_str()) {
            (Preset::AlexNet, "P1") => vec![1; 8],
            (Preset::AlexNet, "P2") => vec![2; 8],
            (Preset::AlexNet, "P3") => vec![4, 4, 4, 4, 4, 4, 2, 1],
            (Preset::Vgg16, "P1") => vec![1; 16],
            (Preset::Vgg16, "P2") => vec![2; 16],
            (Preset::Vgg16, "P3") => vec![4; 16],
            (Preset::Vgg16, "P4") => [vec![8; 13], vec![4; 3]].concat(),
            (Preset::Vgg16, "P5") => [vec![8; 13], vec![1; 3]].concat(),
            (Preset::ResNet18, "P1") => vec![1; 18],
            (p, other) => {
                return Err(Error::Validation(format!(
                    "{} has no parallelism vector `{other}`",
                    p.name()
                )))
            }
        };
        Ok(v)
    }

    pub fn network(self, n: Precision, parallelism: &str) -> Result<NetworkDescription> {
        let (layers, residuals) = match self {
            Preset::AlexNet => (alexnet_layers(), Vec::new()),
            Preset::Vgg16 => (vgg16_layers(), Vec::new()),
            Preset::ResNet18 => resnet18_layers(),
        };
        let net = NetworkDescription {
            name: self.name().into(),
            precision: n,
            layers,
            parallelism: self.parallelism(parallelism)?,
            residuals,
        };
        net.validate()?;
        Ok(net)
    }
}

#[allow(clippy::too_many_arguments)]
fn conv(
    name: &str,
    hw: usize,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    padding: usize,
    stride: usize,
    pool: Option<(usize, usize)>,
) -> LayerSpec {
    LayerSpec::conv(
        name,
        ConvSpec {
            height: hw,
            width: hw,
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            padding,
            stride,
            pool: pool.map(|(window, stride)| PoolSpec { window, stride }),
        },
    )
}

fn alexnet_layers() -> Vec<LayerSpec> {
    vec![
        conv("conv1", 224, 3, 96, 11, 2, 4, Some((3, 2))),
        conv("conv2", 27, 96, 256, 5, 2, 1, Some((3, 2))),
        conv("conv3", 13, 256, 384, 3, 1, 1, None),
        conv("conv4", 13, 384, 384, 3, 1, 1, None),
        conv("conv5", 13, 384, 256, 3, 1, 1, Some((3, 2))),
        LayerSpec::linear("fc6", 256 * 6 * 6, 4096),
        LayerSpec::linear("fc7", 4096, 4096),
        LayerSpec::linear("fc8", 4096, 1000),
    ]
}

fn vgg16_layers() -> Vec<LayerSpec> {
    let pool = Some((2, 2));
    vec![
        conv("conv1_1", 224, 3, 64, 3, 1, 1, None),
        conv("conv1_2", 224, 64, 64, 3, 1, 1, pool),
        conv("conv2_1", 112, 64, 128, 3, 1, 1, None),
        conv("conv2_2", 112, 128, 128, 3, 1, 1, pool),
        conv("conv3_1", 56, 128, 256, 3, 1, 1, None),
        conv("conv3_2", 56, 256, 256, 3, 1, 1, None),
        conv("conv3_3", 56, 256, 256, 3, 1, 1, pool),
        conv("conv4_1", 28, 256, 512, 3, 1, 1, None),
        conv("conv4_2", 28, 512, 512, 3, 1, 1, None),
        conv("conv4_3", 28, 512, 512, 3, 1, 1, pool),
        conv("conv5_1", 14, 512, 512, 3, 1, 1, None),
        conv("conv5_2", 14, 512, 512, 3, 1, 1, None),
        conv("conv5_3", 14, 512, 512, 3, 1, 1, pool),
        LayerSpec::linear("fc6", 512 * 7 * 7, 4096),
        LayerSpec::linear("fc7", 4096, 4096),
        LayerSpec::linear("fc8", 4096, 1000),
    ]
}

/// 18 weight layers: the stem, sixteen 3x3 convs in eight basic blocks and
/// the classifier. The stem's 3x3/2 max pool and the final global average
/// pool are not bank operations here; the following layer's input size
/// accounts for them. Projection shortcuts are folded into the skip edge.
fn resnet18_layers() -> (Vec<LayerSpec>, Vec<ResidualEdge>) {
    let mut layers = vec![conv("conv1", 224, 3, 64, 7, 3, 2, None)];
    let mut residuals = Vec::new();
    let stages = [(56, 64, 64), (56, 64, 128), (28, 128, 256), (14, 256, 512)];
    for (stage, &(hw_in, c_in, c_out)) in stages.iter().enumerate() {
        let downsample = stage > 0;
        let hw_out = if downsample { hw_in / 2 } else { hw_in };
        for block in 0..2 {
            let first = layers.len();
            let (hw, cin, stride) = if block == 0 && downsample { (hw_in, c_in, 2) } else { (hw_out, c_out, 1) };
            layers.push(conv(&format!("layer{}.{block}.conv1", stage + 1), hw, cin, c_out, 3, 1, stride, None));
            layers.push(conv(&format!("layer{}.{block}.conv2", stage + 1), hw_out, c_out, c_out, 3, 1, 1, None));
            residuals.push(ResidualEdge { from_layer: first, to_layer: first + 1 });
        }
    }
    layers.push(LayerSpec::linear("fc", 512, 1000));
    (layers, residuals)
}
