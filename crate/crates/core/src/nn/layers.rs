use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};

/// One layer of a feed-forward network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv3d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
    },
    Relu,
    Linear {
        in_features: usize,
        out_features: usize,
    },
    Flatten,
}

/// Layer kinds accepted in serialized architectures.
pub const LAYER_KINDS: [&str; 4] = ["conv3d", "relu", "linear", "flatten"];

impl LayerSpec {
    pub fn conv3d(in_channels: usize, out_channels: usize, stride: [usize; 3]) -> Self {
        LayerSpec::Conv3d {
            in_channels,
            out_channels,
            kernel: [3, 3, 3],
            stride,
            padding: [1, 1, 1],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv3d { .. } => "conv3d",
            LayerSpec::Relu => "relu",
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// Parameter shapes as `(weight, bias)`, if the layer has any.
    pub fn param_dims(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv3d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((
                vec![out_channels, in_channels, kernel[0], kernel[1], kernel[2]],
                vec![out_channels],
            )),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => Some((vec![out_features, in_features], vec![out_features])),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_dims()
            .map(|(w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .unwrap_or(0)
    }

    /// Validates the layer's own hyperparameters.
    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv3d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if in_channels == 0 || out_channels == 0 {
                    return Err(shape_err("conv3d channel counts must be >= 1"));
                }
                if kernel.contains(&0) {
                    return Err(shape_err(format!(
                        "conv3d kernel {kernel:?} has a zero extent"
                    )));
                }
                if stride.contains(&0) {
                    return Err(shape_err(format!(
                        "conv3d stride {stride:?} has a zero extent"
                    )));
                }
                Ok(())
            }
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                if in_features == 0 || out_features == 0 {
                    return Err(shape_err("linear feature counts must be >= 1"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Output dims for a batched input, or an error if the shapes do not chain.
    pub fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        match *self {
            LayerSpec::Conv3d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 5 {
                    return Err(shape_err(format!(
                        "conv3d expects [N,C,T,H,W], got {input:?}"
                    )));
                }
                if input[1] != in_channels {
                    return Err(shape_err(format!(
                        "conv3d expects {in_channels} input channels, got {}",
                        input[1]
                    )));
                }
                let mut out = vec![input[0], out_channels];
                for a in 0..3 {
                    let padded = input[2 + a] + 2 * padding[a];
                    if padded < kernel[a] {
                        return Err(shape_err(format!(
                            "conv3d output extent on axis {a} is non-positive (input {input:?})"
                        )));
                    }
                    out.push((padded - kernel[a]) / stride[a] + 1);
                }
                Ok(out)
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => {
                if input.len() < 2 {
                    return Err(shape_err(format!(
                        "flatten expects a batch axis, got {input:?}"
                    )));
                }
                Ok(vec![input[0], input[1..].iter().product()])
            }
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                if input.len() != 2 || input[1] != in_features {
                    return Err(shape_err(format!(
                        "linear expects [N,{in_features}], got {input:?}"
                    )));
                }
                Ok(vec![input[0], out_features])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_arithmetic() {
        let spec = LayerSpec::conv3d(3, 4, [2, 2, 2]);
        assert_eq!(
            spec.output_dims(&[2, 3, 6, 8, 8]).unwrap(),
            vec![2, 4, 3, 4, 4]
        );
        let spec = LayerSpec::conv3d(6, 16, [1, 2, 2]);
        assert_eq!(
            spec.output_dims(&[1, 6, 24, 32, 32]).unwrap(),
            vec![1, 16, 24, 16, 16]
        );
    }

    #[test]
    fn rejects_bad_chains() {
        let spec = LayerSpec::conv3d(3, 4, [1, 1, 1]);
        assert!(spec.output_dims(&[1, 2, 4, 4, 4]).is_err());
        let tiny = LayerSpec::Conv3d {
            in_channels: 1,
            out_channels: 1,
            kernel: [3, 3, 3],
            stride: [1, 1, 1],
            padding: [0, 0, 0],
        };
        assert!(tiny.output_dims(&[1, 1, 2, 4, 4]).is_err());
        let zero_stride = LayerSpec::Conv3d {
            in_channels: 1,
            out_channels: 1,
            kernel: [1, 1, 1],
            stride: [0, 1, 1],
            padding: [0, 0, 0],
        };
        assert!(zero_stride.output_dims(&[1, 1, 2, 2, 2]).is_err());
        let lin = LayerSpec::Linear {
            in_features: 5,
            out_features: 1,
        };
        assert!(lin.output_dims(&[1, 4]).is_err());
    }

    #[test]
    fn serde_kind_tags() {
        let json = serde_json::to_string(&LayerSpec::Relu).unwrap();
        assert_eq!(json, r#"{"kind":"relu"}"#);
        let conv: LayerSpec = serde_json::from_str(
            r#"{"kind":"conv3d","in_channels":2,"out_channels":16,"kernel":[3,3,3],"stride":[1,2,2],"padding":[1,1,1]}"#,
        )
        .unwrap();
        assert_eq!(conv, LayerSpec::conv3d(2, 16, [1, 2, 2]));
    }
}
