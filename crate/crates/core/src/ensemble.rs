//! Logit fusion across modality experts, clip/video decisions and weight
//! calibration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cvr::cvrt::write_atomic;
use crate::cvr::Modality;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }

    /// 1.0 for fake, 0.0 for real.
    pub fn target(self) -> f64 {
        if self.is_fake() {
            1.0
        } else {
            0.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Label::Real),
            "fake" => Ok(Label::Fake),
            _ => Err(Error::Invalid(format!("label `{s}`"))),
        }
    }
}

/// Raw logits of one clip, indexed by [`Modality::index`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModalityLogits(pub [Option<f64>; 3]);

impl ModalityLogits {
    pub fn new(a: Option<f64>, m: Option<f64>, g: Option<f64>) -> Self {
        Self([a, m, g])
    }

    pub fn get(&self, m: Modality) -> Option<f64> {
        self.0[m.index()]
    }

    pub fn set(&mut self, m: Modality, logit: f64) {
        self.0[m.index()] = Some(logit);
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(Option::is_none) {
            return Err(Error::Empty("clip has no modality logits".into()));
        }
        if self.0.iter().flatten().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("modality logit".into()));
        }
        Ok(())
    }
}

/// Fusion coefficients, stored un-normalized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub alpha_a: f64,
    pub alpha_m: f64,
    pub alpha_g: f64,
}

impl EnsembleWeights {
    pub fn new(alpha_a: f64, alpha_m: f64, alpha_g: f64) -> Result<Self> {
        Self::from_array([alpha_a, alpha_m, alpha_g])
    }

    pub fn from_array(a: [f64; 3]) -> Result<Self> {
        if a.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::Invalid(format!(
                "ensemble weights must be finite and >= 0: {a:?}"
            )));
        }
        if a.iter().all(|&x| x == 0.0) {
            return Err(Error::Invalid("ensemble weights are all zero".into()));
        }
        Ok(Self {
            alpha_a: a[0],
            alpha_m: a[1],
            alpha_g: a[2],
        })
    }

    pub fn uniform() -> Self {
        let third = 1.0 / 3.0;
        Self {
            alpha_a: third,
            alpha_m: third,
            alpha_g: third,
        }
    }

    /// All weight on one expert.
    pub fn single(m: Modality) -> Self {
        let mut a = [0.0; 3];
        a[m.index()] = 1.0;
        Self::from_array(a).expect("one-hot is valid")
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha_a, self.alpha_m, self.alpha_g]
    }

    pub fn get(&self, m: Modality) -> f64 {
        self.as_array()[m.index()]
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        let a = self.as_array();
        Self::from_array([a[0] * c, a[1] * c, a[2] * c])
    }

    /// Modalities carrying positive weight.
    pub fn active(&self) -> Vec<Modality> {
        Modality::ALL
            .into_iter()
            .filter(|&m| self.get(m) > 0.0)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub epsilon: f64,
    pub clip_len: usize,
    pub clip_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            clip_len: 25,
            clip_threshold: 0.5,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Invalid(format!(
                "epsilon {} outside [0, 1)",
                self.epsilon
            )));
        }
        if self.clip_len < 2 {
            return Err(Error::Invalid(format!("clip_len {} < 2", self.clip_len)));
        }
        if !(self.clip_threshold > 0.0 && self.clip_threshold < 1.0) {
            return Err(Error::Invalid(format!(
                "clip threshold {}",
                self.clip_threshold
            )));
        }
        Ok(())
    }
}

/// `alpha_a * l_a + alpha_m * l_m + alpha_g * l_g`.
pub fn fuse_logits(logits: &ModalityLogits, w: &EnsembleWeights) -> Result<f64> {
    logits.validate()?;
    let mut total = 0.0;
    for m in Modality::ALL {
        let alpha = w.get(m);
        match logits.get(m) {
            Some(l) => total += alpha * l,
            None if alpha > 0.0 => {
                return Err(Error::Invalid(format!(
                    "weight {alpha} on absent modality {m}"
                )))
            }
            None => {}
        }
    }
    Ok(total)
}

/// Fake iff `sigmoid(logit) > threshold`; ties go to real.
pub fn decide_clip(l_final: f64, config: &DetectorConfig) -> Label {
    let cut = (config.clip_threshold / (1.0 - config.clip_threshold)).ln();
    if l_final > cut {
        Label::Fake
    } else {
        Label::Real
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoVerdict {
    pub label: Label,
    pub fake_fraction: f64,
    pub fake_clips: usize,
    pub clips: usize,
}

/// Fake iff the fraction of fake clips strictly exceeds epsilon.
pub fn decide_video(clip_labels: &[Label], config: &DetectorConfig) -> Result<VideoVerdict> {
    if clip_labels.is_empty() {
        return Err(Error::Empty("video has no clips".into()));
    }
    let fake_clips = clip_labels.iter().filter(|l| l.is_fake()).count();
    let clips = clip_labels.len();
    let fake_fraction = fake_clips as f64 / clips as f64;
    let label = if fake_fraction > config.epsilon {
        Label::Fake
    } else {
        Label::Real
    };
    Ok(VideoVerdict {
        label,
        fake_fraction,
        fake_clips,
        clips,
    })
}

/// Per-clip logits of a validation set with their labels.
#[derive(Clone, Debug, Default)]
pub struct CalibrationSet {
    pub logits: Vec<ModalityLogits>,
    pub labels: Vec<Label>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub weights: EnsembleWeights,
    pub balanced_accuracy: f64,
    /// False when the default was used for lack of data.
    pub calibrated: bool,
}

/// Grid step of the simplex search.
pub const GRID_STEP: f64 = 0.05;

/// Simplex grid search over the `enabled` modalities maximizing balanced clip
/// accuracy. Ties prefer the most uniform weights, then the lexicographically
/// largest `(alpha_a, alpha_m, alpha_g)`.
pub fn calibrate_weights(
    set: &CalibrationSet,
    enabled: &[Modality],
    config: &DetectorConfig,
) -> Result<Calibration> {
    if enabled.is_empty() {
        return Err(Error::Invalid(
            "no modalities enabled for calibration".into(),
        ));
    }
    let uniform = uniform_over(enabled);
    if set.logits.is_empty() {
        log::warn!("no validation clips; using uniform weights");
        return Ok(Calibration {
            weights: uniform,
            balanced_accuracy: f64::NAN,
            calibrated: false,
        });
    }
    if set.logits.len() != set.labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            set.logits.len(),
            set.labels.len()
        )));
    }
    let n_fake = set.labels.iter().filter(|l| l.is_fake()).count();
    if n_fake == 0 || n_fake == set.labels.len() {
        return Err(Error::SingleClass);
    }
    for l in &set.logits {
        l.validate()?;
        if enabled.iter().any(|&m| l.get(m).is_none()) {
            return Err(Error::Invalid(
                "validation clip missing an enabled modality".into(),
            ));
        }
    }

    let mut candidates = simplex_grid(enabled);
    candidates.push(uniform.as_array());
    let mut best: Option<([f64; 3], f64, f64)> = None;
    for w in candidates {
        let weights = EnsembleWeights::from_array(w)?;
        let acc = balanced_accuracy(set, &weights, config)?;
        let h = entropy(w);
        let better = match best {
            None => true,
            Some((bw, bacc, bh)) => {
                if acc != bacc {
                    acc > bacc
                } else if (h - bh).abs() > 1e-12 {
                    h > bh
                } else {
                    w > bw
                }
            }
        };
        if better {
            best = Some((w, acc, h));
        }
    }
    let (w, acc, _) = best.expect("grid is non-empty");
    Ok(Calibration {
        weights: EnsembleWeights::from_array(w)?,
        balanced_accuracy: acc,
        calibrated: true,
    })
}

fn uniform_over(enabled: &[Modality]) -> EnsembleWeights {
    let mut a = [0.0; 3];
    for &m in enabled {
        a[m.index()] = 1.0 / enabled.len() as f64;
    }
    EnsembleWeights::from_array(a).expect("non-empty")
}

/// Grid points `k * step` summing to one, zero outside `enabled`.
fn simplex_grid(enabled: &[Modality]) -> Vec<[f64; 3]> {
    let n = (1.0 / GRID_STEP).round() as usize;
    let mut on = [false; 3];
    for &m in enabled {
        on[m.index()] = true;
    }
    let mut out = Vec::new();
    for i in 0..=n {
        for j in 0..=n - i {
            let k = n - i - j;
            let counts = [i, j, k];
            if (0..3).any(|d| !on[d] && counts[d] > 0) {
                continue;
            }
            out.push(counts.map(|c| c as f64 / n as f64));
        }
    }
    out
}

/// Entropy of the normalized weights; sorted summation so permutations tie
/// exactly.
fn entropy(w: [f64; 3]) -> f64 {
    let total: f64 = w.iter().sum();
    let mut p = w.map(|x| x / total);
    p.sort_by(f64::total_cmp);
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Mean of per-class recall with fused clip decisions.
pub fn balanced_accuracy(
    set: &CalibrationSet,
    weights: &EnsembleWeights,
    config: &DetectorConfig,
) -> Result<f64> {
    let (mut tp, mut p, mut tn, mut n) = (0usize, 0usize, 0usize, 0usize);
    for (l, &y) in set.logits.iter().zip(&set.labels) {
        let pred = decide_clip(fuse_logits(l, weights)?, config);
        if y.is_fake() {
            p += 1;
            tp += usize::from(pred.is_fake());
        } else {
            n += 1;
            tn += usize::from(!pred.is_fake());
        }
    }
    if p == 0 || n == 0 {
        return Err(Error::SingleClass);
    }
    Ok(0.5 * (tp as f64 / p as f64 + tn as f64 / n as f64))
}

/// Serialized form of the fusion weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub alpha_a: f64,
    pub alpha_m: f64,
    pub alpha_g: f64,
    pub epsilon: f64,
    pub calibration_manifest: Option<String>,
}

impl WeightsFile {
    pub fn new(w: &EnsembleWeights, epsilon: f64, manifest: Option<String>) -> Self {
        Self {
            alpha_a: w.alpha_a,
            alpha_m: w.alpha_m,
            alpha_g: w.alpha_g,
            epsilon,
            calibration_manifest: manifest,
        }
    }

    pub fn weights(&self) -> Result<EnsembleWeights> {
        EnsembleWeights::new(self.alpha_a, self.alpha_m, self.alpha_g)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: Self = serde_json::from_slice(&bytes)?;
        file.weights()?;
        if !(0.0..1.0).contains(&file.epsilon) {
            return Err(Error::Invalid(format!(
                "epsilon {} outside [0, 1)",
                file.epsilon
            )));
        }
        Ok(file)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(path.as_ref(), &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> DetectorConfig {
        DetectorConfig::default()
    }

    fn labels(fake: usize, total: usize) -> Vec<Label> {
        (0..total)
            .map(|i| if i < fake { Label::Fake } else { Label::Real })
            .collect()
    }

    #[test]
    fn single_expert_projection() {
        let l = ModalityLogits::new(Some(0.7), Some(-2.0), Some(3.1));
        let w = EnsembleWeights::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(fuse_logits(&l, &w).unwrap(), 0.7);
    }

    #[test]
    fn uniform_fusion_arithmetic() {
        let l = ModalityLogits::new(Some(0.6), Some(-0.3), Some(0.9));
        let f = fuse_logits(&l, &EnsembleWeights::uniform()).unwrap();
        assert!((f - 0.4).abs() < 1e-12, "{f}");
    }

    #[test]
    fn scaled_weights_scale_logit_not_decision() {
        let l = ModalityLogits::new(Some(0.6), Some(-0.3), Some(0.9));
        let w = EnsembleWeights::uniform();
        let a = fuse_logits(&l, &w).unwrap();
        let b = fuse_logits(&l, &w.scaled(10.0).unwrap()).unwrap();
        assert!((b - 10.0 * a).abs() < 1e-12);
        assert_eq!(decide_clip(a, &cfg()), decide_clip(b, &cfg()));
    }

    #[test]
    fn weight_on_absent_modality_rejected() {
        let l = ModalityLogits::new(Some(0.6), None, Some(0.9));
        assert!(fuse_logits(&l, &EnsembleWeights::uniform()).is_err());
        let w = EnsembleWeights::new(0.5, 0.0, 0.5).unwrap();
        assert!((fuse_logits(&l, &w).unwrap() - 0.75).abs() < 1e-12);
        assert!(fuse_logits(&ModalityLogits::default(), &w).is_err());
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(EnsembleWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(EnsembleWeights::new(-0.1, 1.0, 0.0).is_err());
        assert!(EnsembleWeights::new(f64::NAN, 1.0, 0.0).is_err());
    }

    #[test]
    fn clip_rule_is_strict() {
        assert_eq!(decide_clip(0.01, &cfg()), Label::Fake);
        assert_eq!(decide_clip(0.0, &cfg()), Label::Real);
        assert_eq!(decide_clip(-0.0, &cfg()), Label::Real);
        assert_eq!(decide_clip(-5.0, &cfg()), Label::Real);
    }

    #[test]
    fn video_rule_epsilon_boundary() {
        let v = decide_video(&labels(3, 40), &cfg()).unwrap();
        assert_eq!(v.label, Label::Fake);
        assert_eq!(v.fake_fraction, 0.075);
        let v = decide_video(&labels(2, 40), &cfg()).unwrap();
        assert_eq!(v.label, Label::Real);
        assert_eq!(v.fake_fraction, 0.05);
        for n in 1..60 {
            assert_eq!(
                decide_video(&labels(0, n), &cfg()).unwrap().label,
                Label::Real
            );
        }
        assert!(decide_video(&[], &cfg()).is_err());
    }

    #[test]
    fn video_rule_other_epsilons() {
        let c = DetectorConfig {
            epsilon: 0.5,
            ..cfg()
        };
        assert_eq!(decide_video(&labels(4, 10), &c).unwrap().label, Label::Real);
        assert_eq!(decide_video(&labels(5, 10), &c).unwrap().label, Label::Real);
        assert_eq!(decide_video(&labels(6, 10), &c).unwrap().label, Label::Fake);
        let c = DetectorConfig {
            epsilon: 0.0,
            ..cfg()
        };
        assert_eq!(
            decide_video(&labels(1, 100), &c).unwrap().label,
            Label::Fake
        );
        let c = DetectorConfig {
            epsilon: 0.1,
            ..cfg()
        };
        assert_eq!(decide_video(&labels(1, 10), &c).unwrap().label, Label::Real);
        assert_eq!(decide_video(&labels(3, 30), &c).unwrap().label, Label::Real);
    }

    #[test]
    fn calibration_defaults_without_data() {
        let c = calibrate_weights(&CalibrationSet::default(), &Modality::ALL, &cfg()).unwrap();
        assert_eq!(c.weights, EnsembleWeights::uniform());
        assert!(!c.calibrated);
    }

    #[test]
    fn identical_experts_give_uniform_weights() {
        let xs = [-2.0, -1.0, -0.5, 0.3, 1.2, 2.0];
        let set = CalibrationSet {
            logits: xs
                .iter()
                .map(|&x| ModalityLogits::new(Some(x), Some(x), Some(x)))
                .collect(),
            labels: xs
                .iter()
                .map(|&x| if x > 0.0 { Label::Fake } else { Label::Real })
                .collect(),
        };
        let c = calibrate_weights(&set, &Modality::ALL, &cfg()).unwrap();
        assert_eq!(c.weights, EnsembleWeights::uniform());
        assert_eq!(c.balanced_accuracy, 1.0);
    }

    #[test]
    fn single_class_validation_rejected() {
        let set = CalibrationSet {
            logits: vec![ModalityLogits::new(Some(1.0), Some(1.0), Some(1.0)); 3],
            labels: vec![Label::Fake; 3],
        };
        assert!(matches!(
            calibrate_weights(&set, &Modality::ALL, &cfg()),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn grid_covers_simplex() {
        assert_eq!(simplex_grid(&Modality::ALL).len(), 231);
        assert_eq!(
            simplex_grid(&[Modality::Appearance, Modality::Depth]).len(),
            21
        );
        for w in simplex_grid(&Modality::ALL) {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.json");
        let f = WeightsFile::new(&EnsembleWeights::uniform(), 0.05, Some("m.json".into()));
        f.write(&p).unwrap();
        assert_eq!(WeightsFile::read(&p).unwrap(), f);
        let text = std::fs::read_to_string(&p).unwrap();
        for key in [
            "alpha_a",
            "alpha_m",
            "alpha_g",
            "epsilon",
            "calibration_manifest",
        ] {
            assert!(text.contains(key));
        }
    }

    #[test]
    fn labels_parse() {
        assert_eq!("fake".parse::<Label>().unwrap(), Label::Fake);
        assert!("maybe".parse::<Label>().is_err());
        assert_eq!(serde_json::to_string(&Label::Real).unwrap(), "\"real\"");
    }
}
