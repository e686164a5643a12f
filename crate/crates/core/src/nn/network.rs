use crate::error::{shape_err, Error, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

use super::conv3d::{conv3d_backward, conv3d_forward};
use super::LayerSpec;

/// A named layer with its parameters (weight and bias for conv3d/linear).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub name: String,
    pub spec: LayerSpec,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> Layer<T> {
    /// A layer with zero-valued parameters.
    pub fn zeroed(name: impl Into<String>, spec: LayerSpec) -> Result<Self> {
        spec.validate()?;
        let (weight, bias) = match spec.param_dims() {
            Some((w, b)) => (Some(Tensor::zeros(&w)?), Some(Tensor::zeros(&b)?)),
            None => (None, None),
        };
        Ok(Self {
            name: name.into(),
            spec,
            weight,
            bias,
        })
    }
}

/// Sequential network ending in one raw logit per batch item.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
}

/// Result of a forward pass.
#[derive(Clone, Debug)]
pub struct Forward<T> {
    pub logits: Vec<T>,
    /// `activations[0]` is the input; `activations[i + 1]` is layer `i`'s output.
    /// `None` when caching was disabled.
    pub activations: Option<Vec<Tensor<T>>>,
}

/// Parameter gradients (layer order, weight before bias) and gradients of
/// the loss with respect to every layer output.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub params: Vec<Tensor<T>>,
    pub layer_outputs: Vec<Tensor<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        for layer in &layers {
            layer.spec.validate()?;
            let expected = layer.spec.param_dims();
            let actual = match (&layer.weight, &layer.bias) {
                (Some(w), Some(b)) => Some((w.dims().to_vec(), b.dims().to_vec())),
                (None, None) => None,
                _ => {
                    return Err(shape_err(format!(
                        "layer {} has partial parameters",
                        layer.name
                    )))
                }
            };
            if expected != actual {
                return Err(shape_err(format!(
                    "layer {}: parameters {actual:?}, expected {expected:?}",
                    layer.name
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Shape inference through the whole chain; errors on inconsistency.
    pub fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.layers.iter().try_fold(input.to_vec(), |dims, l| {
            l.spec
                .output_dims(&dims)
                .map_err(|e| shape_err(format!("layer {}: {e}", l.name)))
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.spec.param_count()).sum()
    }

    /// Parameters in layer order, weight before bias.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
            .collect()
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    name: l.name.clone(),
                    spec: l.spec.clone(),
                    weight: l.weight.as_ref().map(Tensor::cast),
                    bias: l.bias.as_ref().map(Tensor::cast),
                })
                .collect(),
        }
    }

    pub fn forward(&self, input: &Tensor<T>, cache: bool) -> Result<Forward<T>> {
        let out_dims = self.output_dims(input.dims())?;
        if out_dims.len() != 2 || out_dims[1] != 1 {
            return Err(shape_err(format!(
                "network must emit one logit per item, emits {out_dims:?}"
            )));
        }
        let mut activations = cache.then(|| vec![input.clone()]);
        let mut current: Option<Tensor<T>> = None;
        for layer in &self.layers {
            let x = match (&activations, &current) {
                (Some(acts), _) => acts.last().expect("input cached"),
                (None, Some(c)) => c,
                (None, None) => input,
            };
            let y = apply(layer, x)?;
            match activations.as_mut() {
                Some(acts) => acts.push(y),
                None => current = Some(y),
            }
        }
        let logits = match (&activations, current) {
            (Some(acts), _) => acts.last().expect("output cached").data().to_vec(),
            (None, Some(c)) => c.into_data(),
            (None, None) => return Err(shape_err("network has no layers")),
        };
        Ok(Forward {
            logits,
            activations,
        })
    }

    /// Reverse-mode gradients given `d loss / d logit` per batch item.
    pub fn backward(&self, forward: &Forward<T>, d_logits: &[T]) -> Result<Gradients<T>> {
        let acts = forward.activations.as_ref().ok_or(Error::NoForwardCache)?;
        if acts.len() != self.layers.len() + 1 {
            return Err(shape_err("cached activations do not match the network"));
        }
        let last = acts.last().expect("non-empty");
        if d_logits.len() != last.len() {
            return Err(shape_err(format!(
                "{} logit gradients for {} logits",
                d_logits.len(),
                last.len()
            )));
        }
        let mut grad = Tensor::new(last.dims().to_vec(), d_logits.to_vec())?;
        let mut layer_outputs = Vec::with_capacity(self.layers.len());
        let mut params_rev: Vec<Tensor<T>> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &acts[i];
            let y = &acts[i + 1];
            if grad.dims() != y.dims() {
                return Err(shape_err(format!(
                    "gradient shape drift at layer {}",
                    layer.name
                )));
            }
            let need_input = i > 0;
            let (d_param, d_x) = backprop(layer, x, y, &grad, need_input)?;
            if let Some((dw, db)) = d_param {
                params_rev.push(db);
                params_rev.push(dw);
            }
            layer_outputs.push(grad);
            grad = match d_x {
                Some(g) => g,
                None => break,
            };
        }
        layer_outputs.reverse();
        params_rev.reverse();
        Ok(Gradients {
            params: params_rev,
            layer_outputs,
        })
    }
}

fn apply<T: Scalar>(layer: &Layer<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    match layer.spec {
        LayerSpec::Conv3d { .. } => conv3d_forward(
            x,
            &layer.spec,
            layer.weight.as_ref().expect("validated"),
            layer.bias.as_ref().expect("validated"),
        ),
        LayerSpec::Relu => Ok(x.map(|v| v.max(T::zero()))),
        LayerSpec::Flatten => {
            let dims = layer.spec.output_dims(x.dims())?;
            x.clone().reshape(dims)
        }
        LayerSpec::Linear {
            in_features,
            out_features,
        } => {
            layer.spec.output_dims(x.dims())?;
            let n = x.dims()[0];
            let w = layer.weight.as_ref().expect("validated");
            let b = layer.bias.as_ref().expect("validated");
            let mut out = Tensor::zeros(&[n, out_features])?;
            for row in out.data_mut().chunks_mut(out_features) {
                row.copy_from_slice(b.data());
            }
            gemm(
                MatRef::new(x.data(), n, in_features),
                MatRef::t(w.data(), out_features, in_features),
                T::one(),
                out.data_mut(),
            );
            Ok(out)
        }
    }
}

type ParamGrads<T> = Option<(Tensor<T>, Tensor<T>)>;

fn backprop<T: Scalar>(
    layer: &Layer<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    dy: &Tensor<T>,
    need_input: bool,
) -> Result<(ParamGrads<T>, Option<Tensor<T>>)> {
    match layer.spec {
        LayerSpec::Conv3d { .. } => {
            let w = layer.weight.as_ref().expect("validated");
            let (dw, db, dx) = conv3d_backward(x, &layer.spec, w, dy, need_input)?;
            Ok((Some((dw, db)), dx))
        }
        LayerSpec::Relu => {
            let dx = need_input.then(|| {
                let data = dy
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&g, &out)| if out > T::zero() { g } else { T::zero() })
                    .collect();
                Tensor::new(x.dims().to_vec(), data)
            });
            Ok((None, dx.transpose()?))
        }
        LayerSpec::Flatten => {
            let dx = need_input.then(|| dy.clone().reshape(x.dims().to_vec()));
            Ok((None, dx.transpose()?))
        }
        LayerSpec::Linear {
            in_features,
            out_features,
        } => {
            let n = x.dims()[0];
            let w = layer.weight.as_ref().expect("validated");
            let mut dw = Tensor::zeros(w.dims())?;
            gemm(
                MatRef::t(dy.data(), n, out_features),
                MatRef::new(x.data(), n, in_features),
                T::zero(),
                dw.data_mut(),
            );
            let mut db = Tensor::zeros(&[out_features])?;
            for row in dy.data().chunks(out_features) {
                for (acc, &g) in db.data_mut().iter_mut().zip(row) {
                    *acc = *acc + g;
                }
            }
            let dx = if need_input {
                let mut dx = Tensor::zeros(x.dims())?;
                gemm(
                    MatRef::new(dy.data(), n, out_features),
                    MatRef::new(w.data(), out_features, in_features),
                    T::zero(),
                    dx.data_mut(),
                );
                Some(dx)
            } else {
                None
            };
            Ok((Some((dw, db)), dx))
        }
    }
}
