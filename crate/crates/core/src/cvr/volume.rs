use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TensorND;

/// The three component representations of a clip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Appearance,
    Flow,
    Depth,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Appearance, Modality::Flow, Modality::Depth];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Appearance => "appearance",
            Modality::Flow => "flow",
            Modality::Depth => "depth",
        }
    }

    /// Position in `(appearance, motion, geometry)` ordered triples.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Single-letter tag used in report rows.
    pub fn letter(self) -> char {
        match self {
            Modality::Appearance => 'A',
            Modality::Flow => 'M',
            Modality::Depth => 'G',
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "appearance" | "a" => Ok(Modality::Appearance),
            "flow" | "motion" | "m" => Ok(Modality::Flow),
            "depth" | "geometry" | "g" => Ok(Modality::Depth),
            other => Err(Error::Invalid(format!("unknown modality `{other}`"))),
        }
    }
}

/// Per-channel normalization statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

/// Lower bound on the standard deviation used to normalize.
pub const STD_FLOOR: f32 = 1e-6;

impl NormStats {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Population mean and std per channel over all given `[C, ...]` tensors.
    pub fn compute<'a>(tensors: impl IntoIterator<Item = &'a TensorND>) -> Result<Self> {
        let mut sums: Vec<(f64, f64, u64)> = Vec::new();
        for t in tensors {
            let c = t.dims()[0];
            if sums.is_empty() {
                sums = vec![(0.0, 0.0, 0); c];
            } else if sums.len() != c {
                return Err(Error::Shape(format!("channel count {c} vs {}", sums.len())));
            }
            let per = t.len() / c;
            for (ch, chunk) in t.data().chunks(per).enumerate() {
                let s = &mut sums[ch];
                for &v in chunk {
                    s.0 += v as f64;
                    s.1 += (v as f64) * (v as f64);
                }
                s.2 += per as u64;
            }
        }
        if sums.is_empty() {
            return Err(Error::Empty("no volumes to compute statistics from".into()));
        }
        let (mean, std) = sums
            .iter()
            .map(|&(s, sq, n)| {
                let m = s / n as f64;
                let var = (sq / n as f64 - m * m).max(0.0);
                (m as f32, var.sqrt() as f32)
            })
            .unzip();
        Ok(Self { mean, std })
    }
}

/// One clip in one modality: `[C, 24, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityVolume {
    pub modality: Modality,
    pub tensor: TensorND,
    /// Statistics this volume was normalized with, if any.
    pub normalization: Option<NormStats>,
}

impl ModalityVolume {
    pub fn new(modality: Modality, tensor: TensorND) -> Result<Self> {
        if tensor.ndim() != 4 {
            return Err(Error::Shape(format!(
                "{modality} volume must be [C,T,H,W], got {:?}",
                tensor.dims()
            )));
        }
        let c = tensor.dims()[0];
        let ok = match modality {
            Modality::Flow => c == 2,
            Modality::Depth => c == 1,
            Modality::Appearance => true,
        };
        if !ok {
            return Err(Error::Shape(format!("{modality} volume with {c} channels")));
        }
        Ok(Self {
            modality,
            tensor,
            normalization: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.tensor.dims()[0]
    }

    /// `[T, H, W]` extents.
    pub fn extent(&self) -> [usize; 3] {
        let d = self.tensor.dims();
        [d[1], d[2], d[3]]
    }
}

/// `(x - mean) / max(std, floor)` per channel.
pub fn normalize_volume(v: &ModalityVolume, stats: &NormStats) -> Result<ModalityVolume> {
    let c = v.channels();
    if stats.mean.len() != c || stats.std.len() != c {
        return Err(Error::Shape(format!(
            "normalization stats for {} channels, volume has {c}",
            stats.mean.len()
        )));
    }
    let mut tensor = v.tensor.clone();
    let per = tensor.len() / c;
    for (ch, chunk) in tensor.data_mut().chunks_mut(per).enumerate() {
        let m = stats.mean[ch];
        let s = stats.std[ch].max(STD_FLOOR);
        for x in chunk {
            *x = (*x - m) / s;
        }
    }
    tensor.check_finite("normalized volume")?;
    Ok(ModalityVolume {
        modality: v.modality,
        tensor,
        normalization: Some(stats.clone()),
    })
}
