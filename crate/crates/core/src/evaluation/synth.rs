//! Deterministic synthetic ear-like dataset.
//!
//! Each subject is an analytic scene: a background, an elliptical skin-colored
//! ear, 2–4 smooth color blobs from a subject-specific palette and a field of
//! small Gaussian bumps that supplies SIFT texture. A probe renders the same
//! scene through a small rigid motion with brightness jitter and fresh noise.

use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{save_png, ColorImage};

pub const SYNTH_WIDTH: usize = 237;
pub const SYNTH_HEIGHT: usize = 125;
pub const MAX_ROTATION_DEG: f64 = 5.0;
pub const MAX_TRANSLATION_PX: f64 = 3.0;
pub const MAX_BRIGHTNESS_JITTER: f64 = 0.05;
const NOISE_SIGMA: f64 = 0.01;
const TEXTURE_BUMPS: usize = 80;

/// One subject of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubjectSpec {
    pub dataset_seed: u64,
    pub subject: usize,
}

impl SubjectSpec {
    pub fn new(dataset_seed: u64, subject: usize) -> Self {
        Self { dataset_seed, subject }
    }

    /// Independent generator for one purpose: 0 = scene, 1 = reference noise,
    /// `2 + i` = probe `i`.
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mixed = self
            .dataset_seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(self.subject as u64)
            .rotate_left(17);
        let mut rng = ChaCha8Rng::seed_from_u64(mixed);
        rng.set_stream(stream);
        rng
    }
}

/// Rigid motion and photometric change applied to a probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeTransform {
    pub rotation_deg: f64,
    pub translation: (f64, f64),
    pub brightness: f64,
    /// Noise stream index.
    pub probe_index: usize,
}

impl ProbeTransform {
    pub fn sample(spec: &SubjectSpec, probe_index: usize) -> Self {
        let mut rng = spec.rng(2 + probe_index as u64);
        Self {
            rotation_deg: rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG),
            translation: (
                rng.random_range(-MAX_TRANSLATION_PX..=MAX_TRANSLATION_PX),
                rng.random_range(-MAX_TRANSLATION_PX..=MAX_TRANSLATION_PX),
            ),
            brightness: 1.0 + rng.random_range(-MAX_BRIGHTNESS_JITTER..=MAX_BRIGHTNESS_JITTER),
            probe_index,
        }
    }
}

struct Blob {
    center: (f64, f64),
    sigma: (f64, f64),
    color: [f64; 3],
}

struct Bump {
    center: (f64, f64),
    sigma: f64,
    amplitude: f64,
}

struct Scene {
    background: [f64; 3],
    skin: [f64; 3],
    ear_center: (f64, f64),
    ear_axes: (f64, f64),
    blobs: Vec<Blob>,
    bumps: Vec<Bump>,
}

fn clamp01(c: [f64; 3]) -> [f64; 3] {
    c.map(|v| v.clamp(0.0, 1.0))
}

impl Scene {
    fn new(spec: &SubjectSpec) -> Self {
        let mut rng = spec.rng(0);
        let (w, h) = (SYNTH_WIDTH as f64, SYNTH_HEIGHT as f64);
        let r = rng.random_range(0.55..0.9);
        let skin = [r, r * rng.random_range(0.55..0.8), r * rng.random_range(0.35..0.6)];
        let background = clamp01([
            rng.random_range(0.05..0.35),
            rng.random_range(0.05..0.35),
            rng.random_range(0.05..0.35),
        ]);
        let ear_center = (w / 2.0 + rng.random_range(-6.0..6.0), h / 2.0 + rng.random_range(-4.0..4.0));
        let ear_axes = (rng.random_range(0.36..0.44) * w, rng.random_range(0.36..0.44) * h);
        let n_blobs = rng.random_range(2..=4);
        let blobs = (0..n_blobs)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let dist = rng.random_range(0.0..0.7);
                Blob {
                    center: (
                        ear_center.0 + dist * ear_axes.0 * angle.cos(),
                        ear_center.1 + dist * ear_axes.1 * angle.sin(),
                    ),
                    sigma: (rng.random_range(10.0..30.0), rng.random_range(8.0..20.0)),
                    color: clamp01([
                        rng.random_range(0.1..0.95),
                        rng.random_range(0.1..0.9),
                        rng.random_range(0.1..0.9),
                    ]),
                }
            })
            .collect();
        let bumps = (0..TEXTURE_BUMPS)
            .map(|_| Bump {
                center: (rng.random_range(0.0..w), rng.random_range(0.0..h)),
                sigma: rng.random_range(2.0..5.0),
                amplitude: rng.random_range(-0.18..0.18),
            })
            .collect();
        Self {
            background,
            skin,
            ear_center,
            ear_axes,
            blobs,
            bumps,
        }
    }

    fn color_at(&self, x: f64, y: f64) -> [f64; 3] {
        let (ex, ey) = ((x - self.ear_center.0) / self.ear_axes.0, (y - self.ear_center.1) / self.ear_axes.1);
        // signed distance to the ellipse in (approximate) pixels, smoothed over ~2 px
        let edge = (1.0 - (ex * ex + ey * ey).sqrt()) * self.ear_axes.1;
        let inside = 0.5 * (1.0 + (edge / 2.0).tanh());

        let mut c = self.skin;
        for b in &self.blobs {
            let dx = (x - b.center.0) / b.sigma.0;
            let dy = (y - b.center.1) / b.sigma.1;
            let t = (-0.5 * (dx * dx + dy * dy)).exp();
            for ch in 0..3 {
                c[ch] += t * (b.color[ch] - c[ch]);
            }
        }
        let texture: f64 = self
            .bumps
            .iter()
            .map(|b| {
                let r2 = (x - b.center.0).powi(2) + (y - b.center.1).powi(2);
                b.amplitude * (-r2 / (2.0 * b.sigma * b.sigma)).exp()
            })
            .sum();
        let mut out = [0.0; 3];
        for ch in 0..3 {
            out[ch] = inside * (c[ch] + texture) + (1.0 - inside) * (self.background[ch] + 0.5 * texture);
        }
        out
    }
}

/// Renders the reference (`None`) or a transformed probe of one subject.
pub fn render_subject(spec: &SubjectSpec, probe: Option<&ProbeTransform>) -> ColorImage {
    let scene = Scene::new(spec);
    let (cx, cy) = ((SYNTH_WIDTH as f64 - 1.0) / 2.0, (SYNTH_HEIGHT as f64 - 1.0) / 2.0);
    let (rot, (tx, ty), gain, stream) = match probe {
        Some(p) => (p.rotation_deg.to_radians(), p.translation, p.brightness, 2 + p.probe_index as u64),
        None => (0.0, (0.0, 0.0), 1.0, 1),
    };
    let (s, c) = rot.sin_cos();
    let mut noise_rng = spec.rng(stream ^ 0x8000_0000);
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("positive sigma");
    ColorImage::from_fn(SYNTH_WIDTH, SYNTH_HEIGHT, |x, y| {
        // inverse motion: probe pixel -> scene point
        let (dx, dy) = (x as f64 - cx - tx, y as f64 - cy - ty);
        let (sx, sy) = (cx + c * dx + s * dy, cy - s * dx + c * dy);
        let col = scene.color_at(sx, sy);
        let mut out = [0.0; 3];
        for ch in 0..3 {
            out[ch] = gain * col[ch] + noise.sample(&mut noise_rng);
        }
        out
    })
}

/// One subject in a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub subject_id: String,
    pub reference: PathBuf,
    pub probes: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
}

/// Subjects with their image paths. Relative paths are resolved against the
/// manifest's directory when loaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub subjects: Vec<SubjectEntry>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<&str> = self.subjects.iter().map(|s| s.subject_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Parse(format!("duplicate subject id '{}'", w[0])));
        }
        if let Some(s) = self.subjects.iter().find(|s| s.probes.is_empty()) {
            return Err(Error::Parse(format!("subject '{}' has no probe", s.subject_id)));
        }
        Ok(())
    }

    pub fn load(manifest: impl AsRef<Path>) -> Result<Self> {
        let manifest = manifest.as_ref();
        let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
        let mut subjects: Vec<SubjectEntry> =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", manifest.display())))?;
        let base = manifest.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut subjects {
            resolve(&mut s.reference);
            s.probes.iter_mut().for_each(resolve);
            if let Some(m) = &mut s.mask {
                resolve(m);
            }
        }
        let ds = Dataset { subjects };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, manifest: impl AsRef<Path>) -> Result<()> {
        let manifest = manifest.as_ref();
        let mut text = serde_json::to_string_pretty(&self.subjects).expect("manifest serializes");
        text.push('\n');
        std::fs::write(manifest, text).map_err(|e| Error::io(manifest, e))
    }

    /// Total number of probe images.
    pub fn probe_count(&self) -> usize {
        self.subjects.iter().map(|s| s.probes.len()).sum()
    }
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn subject_id(i: usize) -> String {
    format!("s{i:03}")
}

/// Writes `n_subjects` references and `probes_per_subject` probes each as PNG
/// plus `manifest.json` (relative paths) into `out_dir`, and returns the
/// dataset with absolute paths.
pub fn generate_synthetic_dataset(
    n_subjects: usize,
    probes_per_subject: usize,
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<Dataset> {
    generate_synthetic_subjects(0..n_subjects, probes_per_subject, out_dir, seed)
}

/// Like [`generate_synthetic_dataset`] for an arbitrary range of subject
/// indices. Disjoint ranges of one seed give disjoint subject sets, which is
/// how a calibration set is drawn next to an evaluation set.
pub fn generate_synthetic_subjects(
    subjects: Range<usize>,
    probes_per_subject: usize,
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<Dataset> {
    if subjects.len() < 2 {
        return Err(Error::InvalidParameter("a dataset needs at least 2 subjects".into()));
    }
    if probes_per_subject == 0 {
        return Err(Error::InvalidParameter("a subject needs at least 1 probe".into()));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut relative = Vec::with_capacity(subjects.len());
    for i in subjects {
        let spec = SubjectSpec::new(seed, i);
        let id = subject_id(i);
        let reference = PathBuf::from(format!("{id}_ref.png"));
        save_png(&render_subject(&spec, None), out_dir.join(&reference))?;
        let mut probes = Vec::with_capacity(probes_per_subject);
        for p in 0..probes_per_subject {
            let name = PathBuf::from(format!("{id}_probe{p}.png"));
            save_png(&render_subject(&spec, Some(&ProbeTransform::sample(&spec, p))), out_dir.join(&name))?;
            probes.push(name);
        }
        relative.push(SubjectEntry {
            subject_id: id,
            reference,
            probes,
            mask: None,
        });
    }
    let manifest = out_dir.join(MANIFEST_NAME);
    Dataset { subjects: relative }.save(&manifest)?;
    Dataset::load(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::load_image;

    fn mad(a: &ColorImage, b: &ColorImage) -> f64 {
        let n = a.data().len() as f64 * 3.0;
        a.data()
            .iter()
            .zip(b.data())
            .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]).abs()).sum::<f64>())
            .sum::<f64>()
            / n
    }

    #[test]
    fn deterministic_files_and_dimensions() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let da = generate_synthetic_dataset(2, 1, a.path(), 9).unwrap();
        generate_synthetic_dataset(2, 1, b.path(), 9).unwrap();
        for name in ["s000_ref.png", "s000_probe0.png", "s001_ref.png", "s001_probe0.png", MANIFEST_NAME] {
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
        for s in &da.subjects {
            let img = load_image(&s.reference).unwrap();
            assert_eq!((img.width(), img.height()), (237, 125));
            let probe = load_image(&s.probes[0]).unwrap();
            assert_eq!((probe.width(), probe.height()), (237, 125));
        }
    }

    #[test]
    fn probes_resemble_their_own_reference() {
        let n = 10;
        let refs: Vec<_> = (0..n).map(|i| render_subject(&SubjectSpec::new(4, i), None)).collect();
        for i in 0..n {
            let spec = SubjectSpec::new(4, i);
            let probe = render_subject(&spec, Some(&ProbeTransform::sample(&spec, 0)));
            let own = mad(&probe, &refs[i]);
            for (j, other) in refs.iter().enumerate() {
                if j != i {
                    assert!(own < mad(&probe, other), "subject {i} vs {j}");
                }
            }
        }
    }

    #[test]
    fn probe_transforms_stay_in_range() {
        for i in 0..50 {
            let spec = SubjectSpec::new(1, i);
            let t = ProbeTransform::sample(&spec, 0);
            assert!(t.rotation_deg.abs() <= MAX_ROTATION_DEG);
            assert!(t.translation.0.abs() <= MAX_TRANSLATION_PX && t.translation.1.abs() <= MAX_TRANSLATION_PX);
            assert!((t.brightness - 1.0).abs() <= MAX_BRIGHTNESS_JITTER);
        }
    }

    #[test]
    fn rejects_tiny_datasets() {
        let d = tempfile::tempdir().unwrap();
        assert!(generate_synthetic_dataset(1, 1, d.path(), 0).is_err());
    }

    #[test]
    fn manifest_validation() {
        let e = |id: &str, probes: usize| SubjectEntry {
            subject_id: id.into(),
            reference: "r.png".into(),
            probes: vec!["p.png".into(); probes],
            mask: None,
        };
        assert!(Dataset { subjects: vec![e("a", 1), e("a", 1)] }.validate().is_err());
        assert!(Dataset { subjects: vec![e("a", 1), e("b", 0)] }.validate().is_err());
        assert!(Dataset { subjects: vec![e("a", 1), e("b", 2)] }.validate().is_ok());
    }
}
