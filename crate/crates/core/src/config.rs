//! Pipeline configuration as flat `key = value` text.
//!
//! ```text
//! # comments start with '#'
//! k = 5
//! tau_kl = 2.0
//! match.strategy = nn
//! sift.sigma0 = 1.6
//! ```
//!
//! Unknown keys are rejected. [`Config::to_text`] writes every key in a fixed
//! order and its SHA-256 is the configuration fingerprint stored in templates.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matching::{MatchParams, MatchStrategy};
use crate::mixture::MAX_COMPONENTS;
use crate::sift::SiftParams;

/// What a probe's regions are gated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    /// The mixture stored with the reference template.
    Reference,
    /// One model fitted to pooled reference pixels.
    Global,
}

/// Whether keypoints are restricted to gated slice regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentationMode {
    /// The whole crop is one region.
    Prior,
    /// Only kept slice regions contribute keypoints.
    After,
}

macro_rules! text_enum {
    ($ty:ident, $what:literal, $($variant:ident => $name:literal),+) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($ty::$variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::InvalidParameter(format!(concat!("unknown ", $what, " '{}'"), other))),
                }
            }
        }
    };
}

text_enum!(GateMode, "gate mode", Reference => "reference", Global => "global");
text_enum!(SegmentationMode, "segmentation mode", Prior => "prior", After => "after");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    /// Mixture components per image.
    pub k: usize,
    pub tau_kl: f64,
    pub w_min: f64,
    pub seed: u64,
    pub gate_mode: GateMode,
    pub mode: SegmentationMode,
    pub sift: SiftParams,
    #[serde(rename = "match")]
    pub matching: MatchParams,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            k: 5,
            tau_kl: 2.0,
            w_min: 0.05,
            seed: 0,
            gate_mode: GateMode::Reference,
            mode: SegmentationMode::After,
            sift: SiftParams::default(),
            matching: MatchParams::default(),
        }
    }
}

/// All accepted keys, in canonical order.
pub const KEYS: &[&str] = &[
    "k",
    "tau_kl",
    "w_min",
    "seed",
    "gate_mode",
    "mode",
    "match.strategy",
    "match.ratio",
    "match.d_abs",
    "match.psi",
    "sift.octaves",
    "sift.scales",
    "sift.sigma0",
    "sift.upsample",
    "sift.contrast_threshold",
    "sift.edge_ratio",
    "sift.orientation_bins",
    "sift.peak_ratio",
    "sift.descriptor_clamp",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidParameter(format!("{key}: expected a boolean, got '{value}'"))),
    }
}

impl Config {
    /// Parses config text on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies `key = value` lines without validating.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("line {}: expected 'key = value'", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "k" => self.k = parse_value(key, value)?,
            "tau_kl" => self.tau_kl = parse_value(key, value)?,
            "w_min" => self.w_min = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "gate_mode" => self.gate_mode = value.parse()?,
            "mode" => self.mode = value.parse()?,
            "match.strategy" => self.matching.strategy = value.parse()?,
            "match.ratio" => self.matching.ratio = parse_value(key, value)?,
            "match.d_abs" => self.matching.d_abs = parse_value(key, value)?,
            "match.psi" => self.matching.psi = parse_value(key, value)?,
            "sift.octaves" => self.sift.octaves = parse_value(key, value)?,
            "sift.scales" => self.sift.scales_per_octave = parse_value(key, value)?,
            "sift.sigma0" => self.sift.base_sigma = parse_value(key, value)?,
            "sift.upsample" => self.sift.initial_upsample = parse_bool(key, value)?,
            "sift.contrast_threshold" => self.sift.contrast_threshold = parse_value(key, value)?,
            "sift.edge_ratio" => self.sift.edge_ratio = parse_value(key, value)?,
            "sift.orientation_bins" => self.sift.orientation_bins = parse_value(key, value)?,
            "sift.peak_ratio" => self.sift.peak_ratio = parse_value(key, value)?,
            "sift.descriptor_clamp" => self.sift.descriptor_clamp = parse_value(key, value)?,
            other => return Err(Error::InvalidParameter(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Text form of one key.
    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.sift;
        let m = &self.matching;
        Some(match key {
            "k" => self.k.to_string(),
            "tau_kl" => self.tau_kl.to_string(),
            "w_min" => self.w_min.to_string(),
            "seed" => self.seed.to_string(),
            "gate_mode" => self.gate_mode.to_string(),
            "mode" => self.mode.to_string(),
            "match.strategy" => m.strategy.to_string(),
            "match.ratio" => m.ratio.to_string(),
            "match.d_abs" => m.d_abs.to_string(),
            "match.psi" => m.psi.to_string(),
            "sift.octaves" => s.octaves.to_string(),
            "sift.scales" => s.scales_per_octave.to_string(),
            "sift.sigma0" => s.base_sigma.to_string(),
            "sift.upsample" => s.initial_upsample.to_string(),
            "sift.contrast_threshold" => s.contrast_threshold.to_string(),
            "sift.edge_ratio" => s.edge_ratio.to_string(),
            "sift.orientation_bins" => s.orientation_bins.to_string(),
            "sift.peak_ratio" => s.peak_ratio.to_string(),
            "sift.descriptor_clamp" => s.descriptor_clamp.to_string(),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_COMPONENTS).contains(&self.k) {
            return Err(Error::InvalidParameter(format!("k must lie in 1..={MAX_COMPONENTS}")));
        }
        if !(self.tau_kl > 0.0) {
            return Err(Error::InvalidParameter("tau_kl must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.w_min) {
            return Err(Error::InvalidParameter("w_min must lie in [0, 1)".into()));
        }
        self.sift.validate()?;
        self.matching.validate()
    }

    /// Every key in canonical order, one `key = value` per line.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("canonical key")))
            .collect()
    }

    /// Hex SHA-256 of [`Config::to_text`].
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn strategy(&self) -> MatchStrategy {
        self.matching.strategy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults() {
        let c = Config::default();
        assert!(c.validate().is_ok());
        assert_eq!((c.k, c.tau_kl, c.w_min), (5, 2.0, 0.05));
        assert_eq!((c.matching.ratio, c.matching.d_abs), (0.8, 0.35));
        assert_eq!(c.gate_mode, GateMode::Reference);
    }

    #[test]
    fn parses_comments_and_sections() {
        let c = Config::parse("# test\nk = 3\n\nmatch.strategy = ED  # inline\nsift.upsample = false\nsift.sigma0=1.8\n").unwrap();
        assert_eq!(c.k, 3);
        assert_eq!(c.matching.strategy, MatchStrategy::Ed);
        assert!(!c.sift.initial_upsample);
        assert_eq!(c.sift.base_sigma, 1.8);
    }

    #[test]
    fn rejects_unknown_and_out_of_range() {
        assert!(matches!(Config::parse("colour = rgb"), Err(Error::InvalidParameter(_))));
        assert!(Config::parse("k = 0").is_err());
        assert!(Config::parse("k = 33").is_err());
        assert!(Config::parse("w_min = 1.0").is_err());
        assert!(Config::parse("match.ratio = 1.0").is_err());
        assert!(Config::parse("sift.scales = 1").is_err());
        assert!(Config::parse("gate_mode = nearest").is_err());
        assert!(Config::parse("just text").is_err());
    }

    #[test]
    fn text_round_trips() {
        let c = Config {
            tau_kl: 0.1 + 0.2,
            seed: u64::MAX,
            gate_mode: GateMode::Global,
            ..Config::default()
        };
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }

    fn key_value() -> impl Strategy<Value = (usize, String)> {
        // a value that differs from the default for each key
        (0..KEYS.len()).prop_map(|i| {
            let v = match KEYS[i] {
                "k" => "7",
                "tau_kl" => "1.5",
                "w_min" => "0.1",
                "seed" => "42",
                "gate_mode" => "global",
                "mode" => "prior",
                "match.strategy" => "ed",
                "match.ratio" => "0.7",
                "match.d_abs" => "0.4",
                "match.psi" => "0.25",
                "sift.octaves" => "3",
                "sift.scales" => "4",
                "sift.sigma0" => "1.7",
                "sift.upsample" => "false",
                "sift.contrast_threshold" => "0.04",
                "sift.edge_ratio" => "12",
                "sift.orientation_bins" => "32",
                "sift.peak_ratio" => "0.75",
                "sift.descriptor_clamp" => "0.25",
                other => unreachable!("{other}"),
            };
            (i, v.to_string())
        })
    }

    proptest! {
        #[test]
        fn fingerprint_changes_iff_a_field_changes((i, v) in key_value()) {
            let base = Config::default();
            let mut changed = base.clone();
            changed.set(KEYS[i], &v).unwrap();
            prop_assert_ne!(base.fingerprint(), changed.fingerprint());
            let mut same = base.clone();
            same.set(KEYS[i], &base.get(KEYS[i]).unwrap()).unwrap();
            prop_assert_eq!(base.fingerprint(), same.fingerprint());
        }
    }
}
