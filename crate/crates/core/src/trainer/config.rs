use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::ArchConfig;
use crate::objectives::DEFAULT_LOSS_WEIGHT;

/// Sampling ratio `a:b` between two datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MixRatio {
    pub a: u32,
    pub b: u32,
}

impl MixRatio {
    pub fn new(a: u32, b: u32) -> Result<Self> {
        if a == 0 && b == 0 {
            return Err(Error::Config("mix ratio 0:0 draws nothing".into()));
        }
        Ok(MixRatio { a, b })
    }
}

impl FromStr for MixRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("mix ratio must look like a:b with whole numbers, got {s:?}"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        MixRatio::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)
    }
}

impl fmt::Display for MixRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.a, self.b)
    }
}

impl TryFrom<String> for MixRatio {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MixRatio> for String {
    fn from(r: MixRatio) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixConfig {
    pub dataset_b: PathBuf,
    pub ratio: MixRatio,
    /// Windows per epoch; defaults to twice the smaller dataset.
    pub epoch_size: Option<usize>,
}

/// Image-plane rotations applied as exact pixel permutations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RotationAug {
    Off,
    /// Half turns only.
    Half,
    /// Any multiple of 90 degrees (square frames only; others fall back to
    /// half turns).
    Quarter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub rotation: RotationAug,
    pub flip: bool,
    pub color: bool,
    /// Additive brightness range, in `[0, 1]` intensity units.
    pub brightness: f64,
    /// Contrast factor range around 1.
    pub contrast: f64,
    /// Saturation factor range around 1.
    pub saturation: f64,
    /// Hue rotation range, radians.
    pub hue: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotation: RotationAug::Quarter,
            flip: true,
            color: true,
            brightness: 0.1,
            contrast: 0.2,
            saturation: 0.2,
            hue: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn off() -> Self {
        AugmentConfig { rotation: RotationAug::Off, flip: false, color: false, ..Default::default() }
    }

    pub fn is_off(&self) -> bool {
        self.rotation == RotationAug::Off && !self.flip && !self.color
    }
}

/// Stop once the epoch-mean training loss has not improved by the relative
/// `min_delta` for `patience` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub patience: usize,
    pub min_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Optional drop to a second rate from the given epoch on.
    pub lr_drop: Option<(usize, f64)>,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss_weight: f64,
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Evaluation cap for validation depth metrics, meters.
    pub max_depth_cap: f64,
    pub mix: Option<MixConfig>,
    /// Set the untrained parallax output to the median ground-truth parallax.
    pub data_driven_init: bool,
    pub early_stop: Option<EarlyStop>,
    /// Leave sky pixels out of the depth loss.
    pub exclude_sky_from_depth: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchConfig::default(),
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            lr_drop: None,
            batch_size: 3,
            epochs: 60,
            loss_weight: DEFAULT_LOSS_WEIGHT,
            augment: AugmentConfig::default(),
            seed: 0,
            max_depth_cap: 80.0,
            mix: None,
            data_driven_init: true,
            early_stop: None,
            exclude_sky_from_depth: false,
        }
    }
}

impl TrainConfig {
    /// Overfitting run on the toy dataset: default topology with narrow
    /// refiners, no augmentation, stopping once the epoch loss improves by
    /// less than 1% over 3 epochs (at most 500 epochs).
    pub fn toy_overfit(seed: u64) -> Self {
        TrainConfig {
            arch: ArchConfig {
                depth_refiner_widths: vec![16; 6],
                semantic_refiner_widths: vec![16; 4],
                ..ArchConfig::default()
            },
            epochs: 500,
            augment: AugmentConfig::off(),
            seed,
            early_stop: Some(EarlyStop { patience: 3, min_delta: 0.01 }),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || self.lr_drop.is_some_and(|(_, lr)| !(lr > 0.0)) {
            return bad("learning rates must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("Adam betas must lie in [0, 1) and epsilon be positive".into());
        }
        if !(self.loss_weight >= 0.0) || !(self.max_depth_cap > 0.0) {
            return bad("loss_weight must be non-negative and max_depth_cap positive".into());
        }
        if self.arch.sequence_length < 2 && self.arch.task.has_depth() {
            return bad("depth training needs sequences of at least 2 frames".into());
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.lr_drop {
            Some((from, lr)) if epoch >= from => lr,
            _ => self.learning_rate,
        }
    }

    /// Canonical text record of the configuration.
    pub fn canonical(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// SHA-256 over the canonical architecture record.
pub fn fingerprint(arch: &ArchConfig) -> String {
    let text = serde_json::to_string(arch).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_parsing() {
        assert_eq!("1:1".parse::<MixRatio>().unwrap(), MixRatio { a: 1, b: 1 });
        assert_eq!("3:1".parse::<MixRatio>().unwrap().to_string(), "3:1");
        for bad in ["1", "a:b", "1:-1", "0:0", ""] {
            assert!(bad.parse::<MixRatio>().is_err(), "{bad}");
        }
    }

    #[test]
    fn config_round_trips_through_text() {
        let cfg = TrainConfig { mix: Some(MixConfig { dataset_b: "b".into(), ratio: MixRatio { a: 2, b: 1 }, epoch_size: None }), ..Default::default() };
        let back: TrainConfig = serde_json::from_str(&cfg.canonical()).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn fingerprint_tracks_architecture() {
        let a = ArchConfig::default();
        let mut b = a.clone();
        assert_eq!(fingerprint(&a), fingerprint(&b));
        b.sncv_radius = 2;
        assert_ne!(fingerprint(&a), fingerprint(&b));
    }
}
