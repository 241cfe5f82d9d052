//! JSON architecture descriptions and seeded initialisation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::{Layer, Padding};
use crate::nn::network::Network;
use crate::rng;
use crate::tensor::Tensor;

/// Layer description without parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        units: usize,
    },
    Conv2d {
        filters: usize,
        kernel: [usize; 2],
        #[serde(default = "one")]
        stride: usize,
        #[serde(default = "same")]
        padding: Padding,
    },
    LeakyRelu {
        slope: f64,
    },
    Relu,
    Flatten,
    MaxPool2d {
        size: usize,
        #[serde(default)]
        stride: Option<usize>,
    },
    Softmax,
}

fn one() -> usize {
    1
}

fn same() -> Padding {
    Padding::Same
}

/// A network architecture: input shape plus layer descriptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Dense stack `sizes[0] → sizes[1] → …` with ReLU between layers.
    pub fn mlp(sizes: &[usize]) -> Self {
        let mut layers = Vec::new();
        for (i, &units) in sizes.iter().enumerate().skip(1) {
            layers.push(LayerSpec::Dense { units });
            if i + 1 < sizes.len() {
                layers.push(LayerSpec::Relu);
            }
        }
        Architecture {
            input_shape: vec![sizes[0]],
            layers,
        }
    }

    /// Instantiates the network with Glorot-uniform weights and zero biases.
    pub fn build(&self, seed: u64) -> Result<Network> {
        let mut rng = rng::stream(seed, &[0x1417]);
        let mut shape = self.input_shape.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, spec) in self.layers.iter().enumerate() {
            let layer = match spec {
                LayerSpec::Dense { units } => {
                    if shape.len() != 1 {
                        return Err(Error::Layer {
                            layer: i,
                            kind: "Dense",
                            msg: format!("expects rank-1 input, got {shape:?} (add a flatten layer)"),
                        });
                    }
                    let fan_in = shape[0];
                    Layer::Dense {
                        weights: glorot(&mut rng, vec![fan_in, *units], fan_in, *units),
                        bias: Tensor::zeros(vec![*units]),
                    }
                }
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    stride,
                    padding,
                } => {
                    let cin = *shape.get(2).ok_or_else(|| Error::Layer {
                        layer: i,
                        kind: "Conv2D",
                        msg: format!("expects [h, w, c] input, got {shape:?}"),
                    })?;
                    let (kh, kw) = (kernel[0], kernel[1]);
                    Layer::Conv2D {
                        kernel: glorot(
                            &mut rng,
                            vec![kh, kw, cin, *filters],
                            kh * kw * cin,
                            kh * kw * filters,
                        ),
                        bias: Tensor::zeros(vec![*filters]),
                        stride: *stride,
                        padding: *padding,
                    }
                }
                LayerSpec::LeakyRelu { slope } => Layer::LeakyReLU { slope: *slope },
                LayerSpec::Relu => Layer::ReLU,
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::MaxPool2d { size, stride } => Layer::MaxPool2D {
                    size: *size,
                    stride: stride.unwrap_or(*size),
                },
                LayerSpec::Softmax => Layer::Softmax,
            };
            shape = layer.output_shape(i, &shape)?;
            layers.push(layer);
        }
        Network::new(self.input_shape.clone(), layers)
    }
}

fn glorot(rng: &mut impl Rng, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::new(shape, data).expect("glorot shape")
}

/// Recovers the architecture of an existing network.
pub fn describe(net: &Network) -> Architecture {
    let layers = net
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Dense { weights, .. } => LayerSpec::Dense {
                units: weights.shape()[1],
            },
            Layer::Conv2D {
                kernel,
                stride,
                padding,
                ..
            } => LayerSpec::Conv2d {
                filters: kernel.shape()[3],
                kernel: [kernel.shape()[0], kernel.shape()[1]],
                stride: *stride,
                padding: *padding,
            },
            Layer::LeakyReLU { slope } => LayerSpec::LeakyRelu { slope: *slope },
            Layer::ReLU => LayerSpec::Relu,
            Layer::Flatten => LayerSpec::Flatten,
            Layer::MaxPool2D { size, stride } => LayerSpec::MaxPool2d {
                size: *size,
                stride: Some(*stride),
            },
            Layer::Softmax => LayerSpec::Softmax,
        })
        .collect();
    Architecture {
        input_shape: net.input_shape().to_vec(),
        layers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnist_default_has_expected_param_count() {
        let net = Architecture::mlp(&[784, 128, 10]).build(0).unwrap();
        assert_eq!(net.param_count(), 101_770);
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let text = r#"{"input_shape":[8,8,1],"layers":[
            {"type":"conv2d","filters":4,"kernel":[3,3]},
            {"type":"leaky_relu","slope":0.1},
            {"type":"max_pool2d","size":2},
            {"type":"flatten"},
            {"type":"dense","units":3},
            {"type":"softmax"}]}"#;
        let arch = Architecture::from_json(text).unwrap();
        let net = arch.build(7).unwrap();
        assert_eq!(net.output_len(), 3);
        assert_eq!(describe(&net).layers.len(), 6);
        assert!(Architecture::from_json(r#"{"input_shape":[2],"layers":[],"extra":1}"#).is_err());
    }

    #[test]
    fn glorot_bounds_hold() {
        let net = Architecture::mlp(&[20, 30]).build(3).unwrap();
        let limit = (6.0f64 / 50.0).sqrt();
        assert!(net.params()[0].data().iter().all(|w| w.abs() <= limit));
        assert!(net.params()[1].data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn dense_after_conv_needs_flatten() {
        let arch = Architecture {
            input_shape: vec![4, 4, 1],
            layers: vec![LayerSpec::Dense { units: 2 }],
        };
        assert!(arch.build(0).is_err());
    }
}
