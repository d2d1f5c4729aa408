//! CNN model descriptors: ordered Conv/FC layer tuples, shape propagation
//! and halo requirements.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("layer {layer}: invalid field `{field}`: {reason}")]
    InvalidLayer {
        layer: usize,
        field: &'static str,
        reason: String,
    },
    #[error("layer {layer}: c_in {c_in} does not match previous c_out {prev_c_out}")]
    ChannelMismatch {
        layer: usize,
        c_in: usize,
        prev_c_out: usize,
    },
    #[error("layer {layer}: convolution after a fully-connected layer")]
    ConvAfterFc { layer: usize },
    #[error("layer {layer}: output shape underflows ({rows}x{cols})")]
    ShapeUnderflow { layer: usize, rows: i64, cols: i64 },
    #[error("model has no layers")]
    Empty,
    #[error("input shape must be positive in every dimension")]
    BadInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    #[serde(alias = "fc")]
    FullyConnected,
}

/// The per-layer configuration tuple `(k, c_in, c_out, s, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub kind: LayerKind,
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub s: usize,
    #[serde(default)]
    pub p: usize,
}

impl LayerConfig {
    pub fn conv(k: usize, c_in: usize, c_out: usize, s: usize, p: usize) -> Self {
        Self {
            kind: LayerKind::Conv,
            k,
            c_in,
            c_out,
            s,
            p,
        }
    }

    pub fn fully_connected(c_in: usize, c_out: usize) -> Self {
        Self {
            kind: LayerKind::FullyConnected,
            k: 1,
            c_in,
            c_out,
            s: 1,
            p: 0,
        }
    }

    pub fn is_conv(&self) -> bool {
        self.kind == LayerKind::Conv
    }

    fn check(&self, layer: usize) -> Result<(), ModelError> {
        let bad = |field, reason: &str| ModelError::InvalidLayer {
            layer,
            field,
            reason: reason.to_string(),
        };
        if self.k == 0 {
            return Err(bad("k", "must be >= 1"));
        }
        if self.s == 0 {
            return Err(bad("s", "must be >= 1"));
        }
        if self.c_in == 0 {
            return Err(bad("c_in", "must be >= 1"));
        }
        if self.c_out == 0 {
            return Err(bad("c_out", "must be >= 1"));
        }
        if self.kind == LayerKind::FullyConnected && (self.k != 1 || self.s != 1 || self.p != 0) {
            return Err(bad("kind", "fully-connected layers require k=1, s=1, p=0"));
        }
        Ok(())
    }
}

/// Feature-map shape: rows (height), cols (width), channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    /// Elements in one row (W x C).
    pub fn row_elems(&self) -> usize {
        self.w * self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub input_shape: Shape,
    pub layers: Vec<LayerConfig>,
}

impl ModelDescriptor {
    /// Builds a descriptor and checks every structural invariant, including
    /// that shape propagation never underflows.
    pub fn new(
        name: impl Into<String>,
        input_shape: Shape,
        layers: Vec<LayerConfig>,
    ) -> Result<Self, ModelError> {
        let model = Self {
            name: name.into(),
            input_shape,
            layers,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::Empty);
        }
        let s = self.input_shape;
        if s.h == 0 || s.w == 0 || s.c == 0 {
            return Err(ModelError::BadInput);
        }
        let mut seen_fc = false;
        for (idx, layer) in self.layers.iter().enumerate() {
            layer.check(idx)?;
            if idx > 0 {
                let prev = self.layers[idx - 1].c_out;
                if layer.c_in != prev {
                    return Err(ModelError::ChannelMismatch {
                        layer: idx,
                        c_in: layer.c_in,
                        prev_c_out: prev,
                    });
                }
            } else if layer.c_in != s.c {
                return Err(ModelError::ChannelMismatch {
                    layer: 0,
                    c_in: layer.c_in,
                    prev_c_out: s.c,
                });
            }
            match layer.kind {
                LayerKind::FullyConnected => seen_fc = true,
                LayerKind::Conv if seen_fc => return Err(ModelError::ConvAfterFc { layer: idx }),
                LayerKind::Conv => {}
            }
        }
        propagate_shape(self).map(|_| ())
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Index of the first fully-connected layer, if any.
    pub fn first_fc(&self) -> Option<usize> {
        self.layers.iter().position(|l| !l.is_conv())
    }
}

/// Output shape of a single layer applied to `input`.
pub fn layer_output(layer: &LayerConfig, input: Shape, index: usize) -> Result<Shape, ModelError> {
    match layer.kind {
        LayerKind::FullyConnected => Ok(Shape::new(1, 1, layer.c_out)),
        LayerKind::Conv => {
            let out = |dim: usize| -> i64 {
                let span = dim as i64 - layer.k as i64 + 2 * layer.p as i64;
                if span < 0 {
                    // floor division for the negative case still yields < 1
                    span.div_euclid(layer.s as i64) + 1
                } else {
                    span / layer.s as i64 + 1
                }
            };
            let (rows, cols) = (out(input.h), out(input.w));
            if rows < 1 || cols < 1 {
                return Err(ModelError::ShapeUnderflow {
                    layer: index,
                    rows,
                    cols,
                });
            }
            Ok(Shape::new(rows as usize, cols as usize, layer.c_out))
        }
    }
}

/// Per-layer input shapes; entry `l` is what layer `l` consumes and entry 0
/// is the model input.
pub fn propagate_shape(model: &ModelDescriptor) -> Result<Vec<Shape>, ModelError> {
    let mut shapes = Vec::with_capacity(model.layers.len());
    let mut current = model.input_shape;
    for (idx, layer) in model.layers.iter().enumerate() {
        shapes.push(Shape::new(current.h, current.w, layer.c_in));
        current = layer_output(layer, current, idx)?;
    }
    Ok(shapes)
}

/// Output shape of the final layer.
pub fn output_shape(model: &ModelDescriptor) -> Result<Shape, ModelError> {
    let mut current = model.input_shape;
    for (idx, layer) in model.layers.iter().enumerate() {
        current = layer_output(layer, current, idx)?;
    }
    Ok(current)
}

/// Neighbour rows a convolution needs across a partition boundary.
pub fn halo_rows(layer: &LayerConfig) -> usize {
    match layer.kind {
        LayerKind::Conv => layer.k / 2,
        LayerKind::FullyConnected => 0,
    }
}

/// Minimum layer-1 rows an active device must hold so that every
/// convolution's halo can be served by its immediate neighbour:
/// `max_l ceil(halo(l) * prod_{l' < l} s_{l'})` over Conv layers.
pub fn layer1_threshold(model: &ModelDescriptor) -> usize {
    let mut stride_product = 1usize;
    let mut threshold = 0usize;
    for layer in &model.layers {
        if !layer.is_conv() {
            break;
        }
        threshold = threshold.max(halo_rows(layer) * stride_product);
        stride_product = stride_product.saturating_mul(layer.s);
    }
    threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_layer(h: usize, k: usize, s: usize, p: usize) -> usize {
        let layer = LayerConfig::conv(k, 1, 1, s, p);
        layer_output(&layer, Shape::new(h, h, 1), 0).unwrap().h
    }

    #[test]
    fn same_conv_keeps_height() {
        assert_eq!(one_layer(12, 3, 1, 1), 12);
    }

    #[test]
    fn strided_conv_floors() {
        assert_eq!(one_layer(12, 3, 2, 0), 5);
    }

    #[test]
    fn toy_model_shapes() {
        let model = ModelDescriptor::new(
            "toy",
            Shape::new(12, 12, 3),
            vec![
                LayerConfig::conv(3, 3, 8, 1, 1),
                LayerConfig::conv(3, 8, 8, 2, 0),
                LayerConfig::fully_connected(8, 10),
            ],
        )
        .unwrap();
        let shapes = propagate_shape(&model).unwrap();
        assert_eq!(
            shapes,
            vec![
                Shape::new(12, 12, 3),
                Shape::new(12, 12, 8),
                Shape::new(5, 5, 8)
            ]
        );
        assert_eq!(output_shape(&model).unwrap(), Shape::new(1, 1, 10));
    }

    #[test]
    fn halo_sizes() {
        assert_eq!(halo_rows(&LayerConfig::conv(3, 1, 1, 1, 1)), 1);
        assert_eq!(halo_rows(&LayerConfig::conv(1, 1, 1, 1, 0)), 0);
        assert_eq!(halo_rows(&LayerConfig::conv(7, 1, 1, 1, 3)), 3);
        assert_eq!(halo_rows(&LayerConfig::fully_connected(4, 4)), 0);
    }

    #[test]
    fn underflow_is_reported() {
        let err = ModelDescriptor::new(
            "tiny",
            Shape::new(2, 2, 1),
            vec![LayerConfig::conv(5, 1, 1, 1, 0)],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::ShapeUnderflow { layer: 0, .. }));
    }

    #[test]
    fn structural_errors() {
        let chan = ModelDescriptor::new(
            "m",
            Shape::new(8, 8, 3),
            vec![
                LayerConfig::conv(3, 3, 4, 1, 1),
                LayerConfig::conv(3, 5, 4, 1, 1),
            ],
        );
        assert!(matches!(chan, Err(ModelError::ChannelMismatch { layer: 1, .. })));

        let order = ModelDescriptor::new(
            "m",
            Shape::new(8, 8, 3),
            vec![
                LayerConfig::fully_connected(3, 4),
                LayerConfig::conv(1, 4, 4, 1, 0),
            ],
        );
        assert!(matches!(order, Err(ModelError::ConvAfterFc { layer: 1 })));

        let mut fc = LayerConfig::fully_connected(3, 4);
        fc.k = 3;
        let bad_fc = ModelDescriptor::new("m", Shape::new(8, 8, 3), vec![fc]);
        assert!(matches!(bad_fc, Err(ModelError::InvalidLayer { field: "kind", .. })));
    }

    #[test]
    fn threshold_scales_through_strides() {
        let model = ModelDescriptor::new(
            "m",
            Shape::new(64, 64, 1),
            vec![
                LayerConfig::conv(3, 1, 1, 2, 1),
                LayerConfig::conv(5, 1, 1, 2, 2),
                LayerConfig::conv(1, 1, 1, 1, 0),
                LayerConfig::fully_connected(1, 2),
            ],
        )
        .unwrap();
        // max(1 * 1, 2 * 2, 0 * 4)
        assert_eq!(layer1_threshold(&model), 4);
    }

    proptest! {
        #[test]
        fn same_padding_preserves_height(h in 1usize..200, k in prop::sample::select(vec![1usize, 3, 5, 7])) {
            prop_assume!(h + 2 * (k / 2) >= k);
            prop_assert_eq!(one_layer(h, k, 1, k / 2), h);
        }

        #[test]
        fn channel_chain_is_reported(c0 in 1usize..8, c1 in 1usize..8, c2 in 1usize..8) {
            let model = ModelDescriptor::new(
                "p",
                Shape::new(16, 16, c0),
                vec![
                    LayerConfig::conv(3, c0, c1, 1, 1),
                    LayerConfig::conv(3, c1, c2, 2, 1),
                    LayerConfig::fully_connected(c2, 3),
                ],
            ).unwrap();
            let shapes = propagate_shape(&model).unwrap();
            for (shape, layer) in shapes.iter().zip(&model.layers) {
                prop_assert_eq!(shape.c, layer.c_in);
            }
        }
    }
}
