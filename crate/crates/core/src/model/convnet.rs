use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cvr::{normalize_volume, Modality, ModalityVolume, NormStats};
use crate::ensemble::Label;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, Layer, LayerSpec, Network};
use crate::tensor::TensorND;

/// `[T, H, W]` of the desk-scale volumes.
pub const DEFAULT_EXTENT: [usize; 3] = [24, 32, 32];

const WIDTHS: [usize; 4] = [16, 32, 64, 128];
const STRIDES: [[usize; 3]; 4] = [[1, 2, 2], [1, 2, 2], [2, 2, 2], [2, 2, 2]];
const HIDDEN: usize = 64;

/// A real/fake classifier for one modality.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvNet3D {
    pub modality: Modality,
    pub in_channels: usize,
    /// `[T, H, W]` the flatten size was derived from.
    pub input_extent: [usize; 3],
    pub network: Network<f32>,
    /// Applied to raw volumes before the forward pass.
    pub normalization: NormStats,
    pub seed: u64,
    pub epoch: usize,
    pub corpus_fingerprint: Option<String>,
}

/// Named layer stack: four conv blocks, then a two-layer head.
///
/// Block `k` is `block{k}_conv` followed by the ReLU `block{k}`.
pub fn architecture(in_channels: usize, extent: [usize; 3]) -> Result<Vec<(String, LayerSpec)>> {
    if in_channels == 0 {
        return Err(Error::Invalid("in_channels must be >= 1".into()));
    }
    let mut layers = Vec::new();
    let mut dims = vec![1, in_channels, extent[0], extent[1], extent[2]];
    let mut c = in_channels;
    for (k, (&out, &stride)) in WIDTHS.iter().zip(&STRIDES).enumerate() {
        let conv = LayerSpec::conv3d(c, out, stride);
        dims = conv.output_dims(&dims)?;
        layers.push((format!("block{}_conv", k + 1), conv));
        layers.push((format!("block{}", k + 1), LayerSpec::Relu));
        c = out;
    }
    let features: usize = dims[1..].iter().product();
    layers.push(("flatten".into(), LayerSpec::Flatten));
    layers.push((
        "fc1".into(),
        LayerSpec::Linear {
            in_features: features,
            out_features: HIDDEN,
        },
    ));
    layers.push(("fc1_relu".into(), LayerSpec::Relu));
    layers.push((
        "fc2".into(),
        LayerSpec::Linear {
            in_features: HIDDEN,
            out_features: 1,
        },
    ));
    Ok(layers)
}

/// He-initialized classifier; biases start at zero.
pub fn build_model(
    modality: Modality,
    in_channels: usize,
    extent: [usize; 3],
    seed: u64,
) -> Result<ConvNet3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for (name, spec) in architecture(in_channels, extent)? {
        let mut layer = Layer::<f32>::zeroed(name, spec)?;
        if let Some(w) = layer.weight.as_mut() {
            let fan_in: usize = w.dims()[1..].iter().product();
            let normal = Normal::new(0.0f64, (2.0 / fan_in as f64).sqrt())
                .map_err(|e| Error::Invalid(e.to_string()))?;
            for v in w.data_mut() {
                *v = normal.sample(&mut rng) as f32;
            }
        }
        layers.push(layer);
    }
    Ok(ConvNet3D {
        modality,
        in_channels,
        input_extent: extent,
        network: Network::new(layers)?,
        normalization: NormStats::identity(in_channels),
        seed,
        epoch: 0,
        corpus_fingerprint: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub logit: f64,
    pub probability: f64,
    pub label: Label,
}

impl Prediction {
    pub fn from_logit(logit: f64) -> Self {
        let probability = sigmoid(logit);
        let label = if probability > 0.5 {
            Label::Fake
        } else {
            Label::Real
        };
        Self {
            logit,
            probability,
            label,
        }
    }
}

impl ConvNet3D {
    /// Checks a volume against the modality, channel count and extent.
    pub fn check_volume(&self, v: &ModalityVolume) -> Result<()> {
        if v.modality != self.modality {
            return Err(Error::Shape(format!(
                "{} volume for a {} model",
                v.modality, self.modality
            )));
        }
        if v.channels() != self.in_channels || v.extent() != self.input_extent {
            return Err(Error::Shape(format!(
                "volume {:?}, model expects [{}, {:?}]",
                v.tensor.dims(),
                self.in_channels,
                self.input_extent
            )));
        }
        Ok(())
    }

    /// The model input for a raw (or already model-normalized) volume.
    pub fn prepare(&self, v: &ModalityVolume) -> Result<TensorND> {
        self.check_volume(v)?;
        match &v.normalization {
            None => Ok(normalize_volume(v, &self.normalization)?.tensor),
            Some(s) if *s == self.normalization => Ok(v.tensor.clone()),
            Some(_) => Err(Error::Invalid(
                "volume normalized with foreign statistics".into(),
            )),
        }
    }

    /// Raw logit of one prepared `[C, T, H, W]` input.
    pub fn logit(&self, input: &TensorND) -> Result<f64> {
        let mut dims = vec![1];
        dims.extend_from_slice(input.dims());
        let batch = input.clone().reshape(dims)?;
        let out = self.network.forward(&batch, false)?;
        let l = out.logits[0] as f64;
        if !l.is_finite() {
            return Err(Error::NonFinite(format!("{} logit", self.modality)));
        }
        Ok(l)
    }

    pub fn param_checksum(&self) -> u64 {
        self.network
            .params()
            .iter()
            .flat_map(|t| t.data())
            .fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
                (h ^ v.to_bits() as u64).wrapping_mul(0x100_0000_01b3)
            })
    }
}

/// Logit, probability and label of one clip; ties go to real.
pub fn predict_clip(model: &ConvNet3D, volume: &ModalityVolume) -> Result<Prediction> {
    let input = model.prepare(volume)?;
    Ok(Prediction::from_logit(model.logit(&input)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appearance_model_emits_one_logit() {
        let m = build_model(Modality::Appearance, 6, DEFAULT_EXTENT, 1).unwrap();
        let v = ModalityVolume::new(
            Modality::Appearance,
            TensorND::from_fn(&[6, 24, 32, 32], |i| ((i % 97) as f32) / 97.0).unwrap(),
        )
        .unwrap();
        let p = predict_clip(&m, &v).unwrap();
        assert!(p.logit.is_finite());
        assert_eq!(
            m.network.output_dims(&[1, 6, 24, 32, 32]).unwrap(),
            vec![1, 1]
        );
    }

    #[test]
    fn flow_first_conv_weights() {
        let m = build_model(Modality::Flow, 2, DEFAULT_EXTENT, 1).unwrap();
        let first = &m.network.layers()[0];
        assert_eq!(first.name, "block1_conv");
        assert_eq!(first.weight.as_ref().unwrap().dims(), &[16, 2, 3, 3, 3]);
    }

    #[test]
    fn zero_model_predicts_real_at_half() {
        let mut m = build_model(Modality::Depth, 1, [24, 16, 16], 3).unwrap();
        for p in m.network.params_mut() {
            p.data_mut().fill(0.0);
        }
        let v = ModalityVolume::new(
            Modality::Depth,
            TensorND::full(&[1, 24, 16, 16], 2.0).unwrap(),
        )
        .unwrap();
        let p = predict_clip(&m, &v).unwrap();
        assert_eq!((p.logit, p.probability, p.label), (0.0, 0.5, Label::Real));
    }

    #[test]
    fn prediction_from_logit_two() {
        let p = Prediction::from_logit(2.0);
        assert!((p.probability - 0.880_797_077_977_882_3).abs() < 1e-12);
        assert_eq!(p.label, Label::Fake);
    }

    #[test]
    fn same_seed_same_weights() {
        let a = build_model(Modality::Flow, 2, DEFAULT_EXTENT, 9).unwrap();
        let b = build_model(Modality::Flow, 2, DEFAULT_EXTENT, 9).unwrap();
        let c = build_model(Modality::Flow, 2, DEFAULT_EXTENT, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.param_checksum(), c.param_checksum());
    }

    #[test]
    fn wrong_volume_rejected() {
        let m = build_model(Modality::Flow, 2, DEFAULT_EXTENT, 1).unwrap();
        let v = ModalityVolume::new(Modality::Flow, TensorND::zeros(&[2, 24, 16, 16]).unwrap())
            .unwrap();
        assert!(predict_clip(&m, &v).is_err());
        let d = ModalityVolume::new(Modality::Depth, TensorND::zeros(&[1, 24, 32, 32]).unwrap())
            .unwrap();
        assert!(predict_clip(&m, &d).is_err());
    }
}
