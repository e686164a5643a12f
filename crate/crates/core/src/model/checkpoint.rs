use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cvr::cvrt::write_atomic;
use crate::cvr::{Modality, NormStats};
use crate::error::{Error, Result};
use crate::nn::{Layer, LayerSpec, Network, LAYER_KINDS};
use crate::tensor::TensorND;

use super::ConvNet3D;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CVRM";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct ArchLayer {
    name: String,
    #[serde(flatten)]
    spec: LayerSpec,
}

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: Vec<ArchLayer>,
    modality: Modality,
    in_channels: usize,
    input_extent: [usize; 3],
    normalization: NormStats,
    seed: u64,
    epoch: usize,
    corpus_fingerprint: Option<String>,
}

pub fn encode_checkpoint(model: &ConvNet3D) -> Result<Vec<u8>> {
    let header = Header {
        architecture: model
            .network
            .layers()
            .iter()
            .map(|l| ArchLayer {
                name: l.name.clone(),
                spec: l.spec.clone(),
            })
            .collect(),
        modality: model.modality,
        in_channels: model.in_channels,
        input_extent: model.input_extent,
        normalization: model.normalization.clone(),
        seed: model.seed,
        epoch: model.epoch,
        corpus_fingerprint: model.corpus_fingerprint.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let json_len = u32::try_from(json.len())
        .map_err(|_| Error::Invalid("checkpoint header too large".into()))?;
    let mut out = Vec::with_capacity(10 + json.len() + 4 * model.network.param_count());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&json_len.to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.network.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ConvNet3D> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedHeader);
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: "CVRM".into(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    if bytes.len() < 10 {
        return Err(Error::TruncatedHeader);
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let json_len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let json = bytes.get(10..10 + json_len).ok_or(Error::TruncatedHeader)?;
    let value: serde_json::Value = serde_json::from_slice(json)?;
    let layers = value
        .get("architecture")
        .and_then(|a| a.as_array())
        .ok_or_else(|| Error::Invalid("checkpoint header lacks an architecture array".into()))?;
    for layer in layers {
        let kind = layer.get("kind").and_then(|k| k.as_str()).unwrap_or("");
        if !LAYER_KINDS.contains(&kind) {
            return Err(Error::UnknownLayerKind(kind.to_string()));
        }
    }
    let header: Header = serde_json::from_value(value)?;

    let blob = &bytes[10 + json_len..];
    let expected: usize = header
        .architecture
        .iter()
        .map(|l| l.spec.param_count())
        .sum();
    if blob.len() != 4 * expected {
        return Err(Error::ParameterLength {
            expected,
            found: blob.len() / 4,
        });
    }
    let mut floats = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut layers = Vec::with_capacity(header.architecture.len());
    for ArchLayer { name, spec } in header.architecture {
        let mut layer = Layer::<f32>::zeroed(name, spec)?;
        for t in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
            fill(t, &mut floats);
        }
        layers.push(layer);
    }
    let network = Network::new(layers)?;
    let [t, h, w] = header.input_extent;
    let out = network.output_dims(&[1, header.in_channels, t, h, w])?;
    if out != [1, 1] {
        return Err(Error::Shape(format!("checkpoint network emits {out:?}")));
    }
    if header.normalization.mean.len() != header.in_channels
        || header.normalization.std.len() != header.in_channels
    {
        return Err(Error::Shape(
            "normalization stats do not match in_channels".into(),
        ));
    }
    Ok(ConvNet3D {
        modality: header.modality,
        in_channels: header.in_channels,
        input_extent: header.input_extent,
        network,
        normalization: header.normalization,
        seed: header.seed,
        epoch: header.epoch,
        corpus_fingerprint: header.corpus_fingerprint,
    })
}

fn fill(t: &mut TensorND, src: &mut impl Iterator<Item = f32>) {
    for v in t.data_mut() {
        *v = src.next().expect("blob length checked");
    }
}

pub fn save_checkpoint(model: &ConvNet3D, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(model)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ConvNet3D> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
