use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel-major tensor shape `(channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    /// Shape of a flat vector, as used for fully-connected inputs and outputs.
    pub const fn flat(len: usize) -> Self {
        Self::new(len, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of `(c, row, col)` in channel-major order.
    #[inline]
    pub const fn index(&self, c: usize, row: usize, col: usize) -> usize {
        (c * self.height + row) * self.width + col
    }
}

impl std::fmt::Display for Shape3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    FullyConnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

/// One layer of a shallow CNN.
///
/// For fully-connected layers `in_channels`/`out_channels` are the input and
/// output vector lengths and the kernel, stride and padding fields are unused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub padding: usize,
    pub activation: Activation,
    pub has_bias: bool,
}

impl LayerSpec {
    /// Bias-free tanh convolution.
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kind: LayerKind::Conv,
            kernel,
            in_channels,
            out_channels,
            stride,
            padding,
            activation: Activation::Tanh,
            has_bias: false,
        }
    }

    /// Fully-connected layer with identity activation and a bias.
    pub fn fully_connected(inputs: usize, outputs: usize) -> Self {
        Self {
            kind: LayerKind::FullyConnected,
            kernel: 0,
            in_channels: inputs,
            out_channels: outputs,
            stride: 0,
            padding: 0,
            activation: Activation::Identity,
            has_bias: true,
        }
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn is_conv(&self) -> bool {
        self.kind == LayerKind::Conv
    }

    /// Number of weight entries (the 4-axis kernel for conv, the matrix for FC).
    pub fn weight_len(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.out_channels * self.in_channels * self.kernel * self.kernel,
            LayerKind::FullyConnected => self.out_channels * self.in_channels,
        }
    }

    pub fn bias_len(&self) -> usize {
        if self.has_bias {
            self.out_channels
        } else {
            0
        }
    }

    /// Fan-in used for the default uniform initialisation.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.in_channels * self.kernel * self.kernel,
            LayerKind::FullyConnected => self.in_channels,
        }
    }

    /// Output shape for a given input shape, validating the geometry.
    pub fn output_shape(&self, input: Shape3, layer: usize) -> Result<Shape3> {
        match self.kind {
            LayerKind::Conv => {
                if self.kernel == 0 || self.stride == 0 {
                    return Err(Error::dim(layer, "kernel width and stride must be at least 1"));
                }
                if input.channels != self.in_channels {
                    return Err(Error::dim(
                        layer,
                        format!("expects {} input channels, got shape {input}", self.in_channels),
                    ));
                }
                let out_h = conv_out_len(input.height, self.kernel, self.stride, self.padding)
                    .ok_or_else(|| Error::dim(layer, format!("kernel {} is larger than padded input {input}", self.kernel)))?;
                let out_w = conv_out_len(input.width, self.kernel, self.stride, self.padding)
                    .ok_or_else(|| Error::dim(layer, format!("kernel {} is larger than padded input {input}", self.kernel)))?;
                Ok(Shape3::new(self.out_channels, out_h, out_w))
            }
            LayerKind::FullyConnected => {
                if input.len() != self.in_channels {
                    return Err(Error::dim(
                        layer,
                        format!(
                            "expects {} inputs, got shape {input} ({} values)",
                            self.in_channels,
                            input.len()
                        ),
                    ));
                }
                Ok(Shape3::flat(self.out_channels))
            }
        }
    }
}

/// `⌊(size + 2·padding − kernel)/stride⌋ + 1`; trailing input rows or columns
/// that a strided kernel cannot reach are left unused.
fn conv_out_len(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Layer geometry of a conv layer with its input and output shapes resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub input: Shape3,
    pub output: Shape3,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn weight_len(&self) -> usize {
        self.output.channels * self.input.channels * self.kernel * self.kernel
    }

    #[inline]
    pub fn weight_index(&self, o: usize, c: usize, a: usize, b: usize) -> usize {
        ((o * self.input.channels + c) * self.kernel + a) * self.kernel + b
    }

    /// Output positions `r` along one axis (of length `out`) whose tap `a`
    /// lands inside an input axis of length `size`; returned as a half-open range.
    #[inline]
    pub(crate) fn valid_range(&self, a: usize, size: usize, out: usize) -> (usize, usize) {
        // need 0 <= r*s + a - p < size
        let s = self.stride;
        let p = self.padding;
        let lo = if a >= p { 0 } else { (p - a).div_ceil(s) };
        let hi = if size + p > a { (size + p - a - 1) / s + 1 } else { 0 };
        (lo.min(out), hi.min(out))
    }
}

/// An ordered stack of layers plus input shape and class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Shape3,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    #[serde(skip)]
    shapes: Vec<Shape3>,
}

impl NetworkSpec {
    /// Validates the shape chain and the trailing fully-connected layer.
    pub fn new(input_shape: Shape3, layers: Vec<LayerSpec>, num_classes: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("network has no layers".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        shapes.push(input_shape);
        for (i, layer) in layers.iter().enumerate() {
            let next = layer.output_shape(shapes[i], i)?;
            shapes.push(next);
        }
        let last = layers.last().expect("non-empty");
        if last.kind != LayerKind::FullyConnected {
            return Err(Error::InvalidNetwork("final layer must be fully connected".into()));
        }
        if last.out_channels != num_classes {
            return Err(Error::InvalidNetwork(format!(
                "final layer has {} outputs but the network has {num_classes} classes",
                last.out_channels
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.kind == LayerKind::FullyConnected && layer.activation != Activation::Identity {
                return Err(Error::InvalidNetwork(format!(
                    "fully-connected layer {i} must use the identity activation"
                )));
            }
        }
        Ok(Self {
            input_shape,
            layers,
            num_classes,
            shapes,
        })
    }

    pub fn builder(input_shape: Shape3) -> NetworkBuilder {
        NetworkBuilder {
            input_shape,
            current: input_shape,
            layers: Vec::new(),
            error: None,
        }
    }

    /// Re-derives cached shapes; needed after deserialisation.
    pub fn revalidate(self) -> Result<Self> {
        Self::new(self.input_shape, self.layers, self.num_classes)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn conv_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_conv()).count()
    }

    /// Shape of the input to layer `i`; `i == depth()` gives the logits shape.
    pub fn input_shape_of(&self, i: usize) -> Shape3 {
        self.shapes[i]
    }

    pub fn output_shape_of(&self, i: usize) -> Shape3 {
        self.shapes[i + 1]
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.len()
    }

    pub fn conv_geometry(&self, i: usize) -> Option<ConvGeometry> {
        let l = &self.layers[i];
        l.is_conv().then(|| ConvGeometry {
            input: self.shapes[i],
            output: self.shapes[i + 1],
            kernel: l.kernel,
            stride: l.stride,
            padding: l.padding,
        })
    }
}

/// Builds a [`NetworkSpec`] layer by layer, filling in channel counts.
#[derive(Debug)]
pub struct NetworkBuilder {
    input_shape: Shape3,
    current: Shape3,
    layers: Vec<LayerSpec>,
    error: Option<Error>,
}

impl NetworkBuilder {
    /// Appends a tanh convolution given as (kernel width, channels, stride, padding).
    pub fn conv(mut self, kernel: usize, channels: usize, stride: usize, padding: usize) -> Self {
        self.push(LayerSpec::conv(self.current.channels, channels, kernel, stride, padding));
        self
    }

    /// Appends a fully-connected layer over the flattened current shape.
    pub fn fully_connected(mut self, outputs: usize) -> Self {
        self.push(LayerSpec::fully_connected(self.current.len(), outputs));
        self
    }

    /// Appends an arbitrary layer; its input size must match the current shape.
    pub fn layer(mut self, layer: LayerSpec) -> Self {
        self.push(layer);
        self
    }

    /// Toggles the bias of every conv layer added so far.
    pub fn conv_bias(mut self, has_bias: bool) -> Self {
        for l in self.layers.iter_mut().filter(|l| l.is_conv()) {
            l.has_bias = has_bias;
        }
        self
    }

    fn push(&mut self, layer: LayerSpec) {
        if self.error.is_some() {
            return;
        }
        match layer.output_shape(self.current, self.layers.len()) {
            Ok(next) => {
                self.current = next;
                self.layers.push(layer);
            }
            Err(e) => self.error = Some(e),
        }
    }

    pub fn build(self) -> Result<NetworkSpec> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let classes = self.current.len();
        NetworkSpec::new(self.input_shape, self.layers, classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_lengths() {
        assert_eq!(conv_out_len(32, 3, 1, 0), Some(30));
        assert_eq!(conv_out_len(32, 4, 2, 0), Some(15));
        assert_eq!(conv_out_len(12, 5, 1, 2), Some(12));
        assert_eq!(conv_out_len(32, 3, 2, 0), Some(15));
        assert_eq!(conv_out_len(28, 5, 2, 0), Some(12));
        assert_eq!(conv_out_len(2, 3, 1, 0), None);
    }

    #[test]
    fn builder_fills_channels() {
        let net = NetworkSpec::builder(Shape3::new(3, 32, 32))
            .conv(4, 6, 2, 0)
            .conv(3, 3, 2, 0)
            .fully_connected(10)
            .build()
            .unwrap();
        assert_eq!(net.layers[1].in_channels, 6);
        assert_eq!(net.output_shape_of(1), Shape3::new(3, 7, 7));
        assert_eq!(net.layers[2].in_channels, 147);
    }

    #[test]
    fn rejects_oversized_kernel() {
        let err = NetworkSpec::builder(Shape3::new(3, 4, 4))
            .conv(5, 6, 1, 0)
            .fully_connected(10)
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::Dimension { layer: 0, .. }));
    }

    #[test]
    fn rejects_conv_tail_and_tanh_fc() {
        let conv_only = NetworkSpec::new(Shape3::new(1, 4, 4), vec![LayerSpec::conv(1, 1, 3, 1, 0)], 4);
        assert!(matches!(conv_only, Err(Error::InvalidNetwork(_))));
        let tanh_fc = NetworkSpec::new(
            Shape3::flat(4),
            vec![LayerSpec::fully_connected(4, 2).with_activation(Activation::Tanh)],
            2,
        );
        assert!(matches!(tanh_fc, Err(Error::InvalidNetwork(_))));
    }

    #[test]
    fn valid_range_matches_bruteforce() {
        for &(size, k, s, p) in &[(8, 3, 1, 0), (8, 4, 2, 1), (12, 5, 1, 2), (7, 3, 2, 1)] {
            let out = conv_out_len(size, k, s, p).unwrap();
            let g = ConvGeometry {
                input: Shape3::new(1, size, size),
                output: Shape3::new(1, out, out),
                kernel: k,
                stride: s,
                padding: p,
            };
            for a in 0..k {
                let (lo, hi) = g.valid_range(a, size, out);
                for r in 0..out {
                    let pos = (r * s + a) as isize - p as isize;
                    let inside = pos >= 0 && (pos as usize) < size;
                    assert_eq!(inside, r >= lo && r < hi, "size {size} k {k} s {s} p {p} a {a} r {r}");
                }
            }
        }
    }
}
