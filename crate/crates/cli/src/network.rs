//! Network descriptors: the JSON layer list and its resolved geometry.
//!
//! A descriptor names each layer, gives its kind and shape parameters, and
//! fixes the input tensor geometry. Resolving it propagates shapes front to
//! back, checks that adjacent layers are compatible, and yields flat
//! per-layer feature counts plus the geometry each kernel needs. Weighted
//! layers (conv, fc) appear in a compressed model in descriptor order;
//! activation layers (relu, pool, lrn) carry no weights but are planned and
//! executed like any other stage.

use cramnet_core::kernels::ops::{ConvGeom, LrnParams, PoolGeom};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

// ── Descriptor file ──────────────────────────────────────────────────────────

/// Input tensor geometry: one image is `channels · height · width` floats.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InputGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

/// One layer as written in the descriptor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv {
        name: String,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    Fc {
        name: String,
        out_features: usize,
    },
    Relu {
        name: String,
    },
    Pool {
        name: String,
        window: usize,
        stride: usize,
    },
    Lrn {
        name: String,
        #[serde(default = "default_lrn_size")]
        size: usize,
        #[serde(default = "default_lrn_alpha")]
        alpha: f32,
        #[serde(default = "default_lrn_beta")]
        beta: f32,
        #[serde(default = "default_lrn_k")]
        k: f32,
    },
}

fn default_lrn_size() -> usize {
    LrnParams::default().size
}

fn default_lrn_alpha() -> f32 {
    LrnParams::default().alpha
}

fn default_lrn_beta() -> f32 {
    LrnParams::default().beta
}

fn default_lrn_k() -> f32 {
    LrnParams::default().k
}

impl LayerSpec {
    /// The layer's name as written in the descriptor.
    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Conv { name, .. }
            | LayerSpec::Fc { name, .. }
            | LayerSpec::Relu { name }
            | LayerSpec::Pool { name, .. }
            | LayerSpec::Lrn { name, .. } => name,
        }
    }
}

/// The on-disk network description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDescriptor {
    pub name: String,
    pub input: InputGeom,
    pub layers: Vec<LayerSpec>,
}

// ── Resolved geometry ────────────────────────────────────────────────────────

/// What a resolved layer computes, with all geometry filled in.
#[derive(Debug, Clone)]
pub enum LayerShape {
    /// Convolution lowered to a matrix of `out_channels` filter rows.
    Conv { geom: ConvGeom, out_channels: usize },
    /// Dense matrix-vector product.
    Fc { in_features: usize, out_features: usize },
    /// Elementwise `max(x, 0)`.
    Relu,
    /// Spatial max pooling.
    Pool(PoolGeom),
    /// Local response normalization across channels.
    Lrn { channels: usize, params: LrnParams },
}

/// A layer with shapes propagated from the network input.
#[derive(Debug, Clone)]
pub struct ResolvedLayer {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
    pub shape: LayerShape,
}

impl ResolvedLayer {
    /// Whether this layer owns a weight matrix in the compressed model.
    pub fn is_weighted(&self) -> bool {
        matches!(self.shape, LayerShape::Conv { .. } | LayerShape::Fc { .. })
    }

    /// Expected weight matrix dimensions `(rows, cols)`, if weighted.
    pub fn weight_dims(&self) -> Option<(usize, usize)> {
        match &self.shape {
            LayerShape::Conv { geom, out_channels } => Some((*out_channels, geom.patch_rows())),
            LayerShape::Fc { in_features, out_features } => Some((*out_features, *in_features)),
            _ => None,
        }
    }
}

/// The full network with geometry resolved front to back.
#[derive(Debug, Clone)]
pub struct ResolvedNetwork {
    pub name: String,
    pub input: InputGeom,
    pub layers: Vec<ResolvedLayer>,
}

impl ResolvedNetwork {
    /// Floats per input image.
    pub fn input_features(&self) -> usize {
        self.input.channels * self.input.height * self.input.width
    }

    /// Floats per final output column.
    pub fn output_features(&self) -> usize {
        self.layers.last().map_or(self.input_features(), |l| l.out_features)
    }

    /// Indices of the weighted layers, in model order.
    pub fn weighted_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_weighted())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Tensor geometry flowing between layers.
#[derive(Debug, Clone, Copy)]
struct Flow {
    channels: usize,
    h: usize,
    w: usize,
    /// Spatial structure survives until an fc layer flattens it.
    spatial: bool,
}

impl Flow {
    fn features(&self) -> usize {
        self.channels * self.h * self.w
    }
}

/// Propagates shapes through the descriptor, checking compatibility.
pub fn resolve(desc: &NetworkDescriptor) -> Result<ResolvedNetwork, CliError> {
    if desc.layers.is_empty() {
        return Err(CliError::Data(format!(
            "network {}: descriptor lists no layers",
            desc.name
        )));
    }
    let mut flow = Flow {
        channels: desc.input.channels,
        h: desc.input.height,
        w: desc.input.width,
        spatial: true,
    };
    if flow.features() == 0 {
        return Err(CliError::Data(format!(
            "network {}: input tensor has zero size",
            desc.name
        )));
    }
    let mut layers = Vec::with_capacity(desc.layers.len());
    for spec in &desc.layers {
        let name = spec.name().to_string();
        let bad = |msg: String| CliError::Data(format!("network {}/{}: {msg}", desc.name, name));
        let in_features = flow.features();
        let (shape, next) = match spec {
            LayerSpec::Conv { out_channels, kernel, stride, pad, .. } => {
                if !flow.spatial {
                    return Err(bad("conv after a flattening layer".into()));
                }
                if *kernel == 0 || *stride == 0 || *out_channels == 0 {
                    return Err(bad("kernel, stride, and out_channels must be positive".into()));
                }
                if flow.h + 2 * pad < *kernel || flow.w + 2 * pad < *kernel {
                    return Err(bad(format!(
                        "kernel {kernel} exceeds padded input {}x{}",
                        flow.h, flow.w
                    )));
                }
                let geom = ConvGeom {
                    in_channels: flow.channels,
                    in_h: flow.h,
                    in_w: flow.w,
                    kernel: *kernel,
                    stride: *stride,
                    pad: *pad,
                };
                let next = Flow {
                    channels: *out_channels,
                    h: geom.out_h(),
                    w: geom.out_w(),
                    spatial: true,
                };
                (LayerShape::Conv { geom, out_channels: *out_channels }, next)
            }
            LayerSpec::Fc { out_features, .. } => {
                if *out_features == 0 {
                    return Err(bad("out_features must be positive".into()));
                }
                let next = Flow { channels: *out_features, h: 1, w: 1, spatial: false };
                (LayerShape::Fc { in_features, out_features: *out_features }, next)
            }
            LayerSpec::Relu { .. } => (LayerShape::Relu, flow),
            LayerSpec::Pool { window, stride, .. } => {
                if !flow.spatial {
                    return Err(bad("pool after a flattening layer".into()));
                }
                if *window == 0 || *stride == 0 {
                    return Err(bad("window and stride must be positive".into()));
                }
                if flow.h < *window || flow.w < *window {
                    return Err(bad(format!(
                        "window {window} exceeds input {}x{}",
                        flow.h, flow.w
                    )));
                }
                let geom = PoolGeom {
                    channels: flow.channels,
                    in_h: flow.h,
                    in_w: flow.w,
                    window: *window,
                    stride: *stride,
                };
                let next = Flow {
                    channels: flow.channels,
                    h: geom.out_h(),
                    w: geom.out_w(),
                    spatial: true,
                };
                (LayerShape::Pool(geom), next)
            }
            LayerSpec::Lrn { size, alpha, beta, k, .. } => {
                if *size == 0 {
                    return Err(bad("size must be positive".into()));
                }
                let params = LrnParams { size: *size, alpha: *alpha, beta: *beta, k: *k };
                (LayerShape::Lrn { channels: flow.channels, params }, flow)
            }
        };
        layers.push(ResolvedLayer {
            name,
            in_features,
            out_features: next.features(),
            shape,
        });
        flow = next;
    }
    let mut seen = std::collections::BTreeSet::new();
    for layer in &layers {
        if !seen.insert(layer.name.clone()) {
            return Err(CliError::Data(format!(
                "network {}: duplicate layer name {}",
                desc.name, layer.name
            )));
        }
    }
    Ok(ResolvedNetwork { name: desc.name.clone(), input: desc.input, layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_net_like() -> NetworkDescriptor {
        NetworkDescriptor {
            name: "cnn".into(),
            input: InputGeom { channels: 3, height: 227, width: 227 },
            layers: vec![
                LayerSpec::Conv {
                    name: "conv1".into(),
                    out_channels: 96,
                    kernel: 11,
                    stride: 4,
                    pad: 0,
                },
                LayerSpec::Relu { name: "relu1".into() },
                LayerSpec::Lrn {
                    name: "norm1".into(),
                    size: 5,
                    alpha: 1e-4,
                    beta: 0.75,
                    k: 2.0,
                },
                LayerSpec::Pool { name: "pool1".into(), window: 3, stride: 2 },
                LayerSpec::Fc { name: "fc6".into(), out_features: 128 },
            ],
        }
    }

    #[test]
    fn shapes_propagate_through_conv_and_pool() {
        let net = resolve(&image_net_like()).unwrap();
        assert_eq!(net.layers[0].in_features, 3 * 227 * 227);
        assert_eq!(net.layers[0].out_features, 96 * 55 * 55);
        assert_eq!(net.layers[1].out_features, 96 * 55 * 55);
        assert_eq!(net.layers[2].out_features, 96 * 55 * 55);
        assert_eq!(net.layers[3].out_features, 96 * 27 * 27);
        assert_eq!(net.layers[4].out_features, 128);
        assert_eq!(net.output_features(), 128);
        assert_eq!(net.weighted_indices(), vec![0, 4]);
    }

    #[test]
    fn conv_weight_dims_cover_one_filter_per_row() {
        let net = resolve(&image_net_like()).unwrap();
        assert_eq!(net.layers[0].weight_dims(), Some((96, 3 * 11 * 11)));
        assert_eq!(net.layers[4].weight_dims(), Some((128, 96 * 27 * 27)));
        assert_eq!(net.layers[1].weight_dims(), None);
    }

    #[test]
    fn conv_after_fc_is_rejected() {
        let mut desc = image_net_like();
        desc.layers.push(LayerSpec::Conv {
            name: "late".into(),
            out_channels: 4,
            kernel: 1,
            stride: 1,
            pad: 0,
        });
        assert!(resolve(&desc).is_err());
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let desc = NetworkDescriptor {
            name: "tiny".into(),
            input: InputGeom { channels: 1, height: 4, width: 4 },
            layers: vec![LayerSpec::Conv {
                name: "c".into(),
                out_channels: 2,
                kernel: 7,
                stride: 1,
                pad: 0,
            }],
        };
        assert!(resolve(&desc).is_err());
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut desc = image_net_like();
        desc.layers.push(LayerSpec::Relu { name: "relu1".into() });
        assert!(resolve(&desc).is_err());
    }

    #[test]
    fn descriptor_json_round_trips() {
        let desc = image_net_like();
        let text = serde_json::to_string_pretty(&desc).unwrap();
        let back: NetworkDescriptor = serde_json::from_str(&text).unwrap();
        assert_eq!(back.layers.len(), desc.layers.len());
        assert_eq!(back.layers[2].name(), "norm1");
        let net = resolve(&back).unwrap();
        assert_eq!(net.output_features(), 128);
    }

    #[test]
    fn lrn_defaults_fill_missing_fields() {
        let text = r#"{
            "name": "n",
            "input": {"channels": 4, "height": 2, "width": 2},
            "layers": [{"kind": "lrn", "name": "norm"}]
        }"#;
        let desc: NetworkDescriptor = serde_json::from_str(text).unwrap();
        let net = resolve(&desc).unwrap();
        match &net.layers[0].shape {
            LayerShape::Lrn { params, .. } => {
                assert_eq!(params.size, 5);
                assert!((params.beta - 0.75).abs() < 1e-9);
            }
            other => panic!("expected lrn, got {other:?}"),
        }
    }
}
