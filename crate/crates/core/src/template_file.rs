//! Versioned JSON persistence for enrolled templates.

use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::matching::Template;
use crate::mixture::{GaussianComponent, MixtureModel};
use crate::segmentation::RegionSummary;
use crate::sift::{Descriptor, Keypoint};

pub const FORMAT_VERSION: u32 = 1;

/// Writes a float with 17 significant digits so that it reads back exactly.
fn precise<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if !v.is_finite() {
        return Err(serde::ser::Error::custom("non-finite model parameter"));
    }
    RawValue::from_string(format!("{v:.16e}"))
        .map_err(serde::ser::Error::custom)?
        .serialize(s)
}

fn precise_seq<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    struct P(f64);
    impl Serialize for P {
        fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            precise(&self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for &x in v {
        seq.serialize_element(&P(x))?;
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    #[serde(serialize_with = "precise")]
    pub weight: f64,
    #[serde(serialize_with = "precise_seq")]
    pub mean: Vec<f64>,
    /// Row-major 3x3.
    #[serde(serialize_with = "precise_seq")]
    pub covariance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointRecord {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub orientation: f64,
    pub region: usize,
    pub descriptor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateFile {
    pub format_version: u32,
    pub subject_id: String,
    pub config_fingerprint: String,
    pub model: Vec<ComponentRecord>,
    /// Summaries of the regions the template was built from.
    pub regions: Vec<RegionSummary>,
    pub k_count: usize,
    pub keypoints: Vec<KeypointRecord>,
}

impl TemplateFile {
    pub fn from_template(t: &Template, config_fingerprint: &str, regions: Vec<RegionSummary>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            subject_id: t.subject_id.clone(),
            config_fingerprint: config_fingerprint.to_string(),
            model: t
                .source_model
                .components
                .iter()
                .map(|c| ComponentRecord {
                    weight: c.weight,
                    mean: c.mean.to_vec(),
                    covariance: c.covariance.iter().flatten().copied().collect(),
                })
                .collect(),
            regions,
            k_count: t.k_count,
            keypoints: t
                .keypoints
                .iter()
                .zip(&t.region_provenance)
                .map(|(k, &region)| KeypointRecord {
                    x: k.x,
                    y: k.y,
                    scale: k.scale,
                    orientation: k.orientation,
                    region,
                    descriptor: k.descriptor.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_template(&self) -> Result<Template> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported template format version {}", self.format_version)));
        }
        let components = self
            .model
            .iter()
            .map(|c| {
                let mean: [f64; 3] = c
                    .mean
                    .as_slice()
                    .try_into()
                    .map_err(|_| Error::Parse(format!("component mean has {} values, expected 3", c.mean.len())))?;
                if c.covariance.len() != 9 {
                    return Err(Error::Parse(format!(
                        "component covariance has {} values, expected 9",
                        c.covariance.len()
                    )));
                }
                let v = &c.covariance;
                let cov = [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]];
                Ok(GaussianComponent::new(c.weight, mean, cov))
            })
            .collect::<Result<Vec<_>>>()?;
        let source_model = MixtureModel::new(components).map_err(|e| Error::Parse(format!("stored model: {e}")))?;
        let keypoints = self
            .keypoints
            .iter()
            .map(|k| {
                Ok(Keypoint {
                    x: k.x,
                    y: k.y,
                    scale: k.scale,
                    orientation: k.orientation,
                    descriptor: Descriptor::try_from(k.descriptor.clone()).map_err(Error::Parse)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if keypoints.is_empty() {
            return Err(Error::EmptyTemplate);
        }
        Ok(Template {
            subject_id: self.subject_id.clone(),
            keypoints,
            region_provenance: self.keypoints.iter().map(|k| k.region).collect(),
            source_model,
            k_count: self.k_count,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("template file: {e}")))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
