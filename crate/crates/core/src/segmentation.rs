//! Color slice regions: hard assignment of masked pixels to mixture
//! components, followed by density and KL-consistency gating.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::divergence::nearest_component;
use crate::error::Result;
use crate::imaging::{Mask, PixelSet};
use crate::mixture::{MixtureModel, PreparedMixture, MAX_COMPONENTS};

/// Label-map value for pixels outside the mask.
pub const OUTSIDE_MASK: u8 = 255;

/// Pixels assigned to one mixture component. Regions are label sets, not
/// connected components.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceRegion {
    pub component_index: usize,
    pub pixel_locations: Vec<(usize, usize)>,
    /// Pixels in the region over all masked pixels.
    pub weight_fraction: f64,
    pub kept: bool,
    /// `min_j KL(region || reference_j)`, set by [`gate_regions`].
    pub kl_to_reference: Option<f64>,
    /// Kept only because no region passed the gate.
    pub fallback: bool,
}

impl SliceRegion {
    pub fn pixel_count(&self) -> usize {
        self.pixel_locations.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub model: MixtureModel,
    pub regions: Vec<SliceRegion>,
    pub k_effective: usize,
    width: usize,
    height: usize,
}

/// One row of the region summary written next to a label map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub component_index: usize,
    pub pixel_count: usize,
    pub fraction: f64,
    pub kept: bool,
    pub kl_to_reference: Option<f64>,
}

impl SegmentationResult {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn total_pixels(&self) -> usize {
        self.regions.iter().map(SliceRegion::pixel_count).sum()
    }

    pub fn kept_regions(&self) -> impl Iterator<Item = &SliceRegion> {
        self.regions.iter().filter(|r| r.kept)
    }

    /// Mask of the pixels belonging to kept regions.
    pub fn kept_mask(&self) -> Mask {
        let mut bits = vec![false; self.width * self.height];
        for r in self.kept_regions() {
            for &(x, y) in &r.pixel_locations {
                bits[y * self.width + x] = true;
            }
        }
        Mask::new(self.width, self.height, bits).expect("dimensions come from the pixel set")
    }

    /// Component index per pixel, [`OUTSIDE_MASK`] where no region claims it.
    pub fn label_map(&self) -> Vec<u8> {
        let mut map = vec![OUTSIDE_MASK; self.width * self.height];
        for r in &self.regions {
            for &(x, y) in &r.pixel_locations {
                map[y * self.width + x] = r.component_index as u8;
            }
        }
        map
    }

    pub fn summaries(&self) -> Vec<RegionSummary> {
        self.regions
            .iter()
            .map(|r| RegionSummary {
                component_index: r.component_index,
                pixel_count: r.pixel_count(),
                fraction: r.weight_fraction,
                kept: r.kept,
                kl_to_reference: r.kl_to_reference,
            })
            .collect()
    }
}

/// `argmax_i P_i f(d | i)` per pixel, lowest index on ties.
pub fn classify_pixels(model: &MixtureModel, pixels: &PixelSet) -> Result<Vec<usize>> {
    let prepared = PreparedMixture::new(model)?;
    let mut buf = [0.0; MAX_COMPONENTS];
    let buf = &mut buf[..model.len()];
    Ok(pixels
        .colors()
        .map(|d| {
            prepared.weighted_log_densities(&d, buf);
            let mut best = 0;
            for (i, &v) in buf.iter().enumerate() {
                if v > buf[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}

/// Groups labels into one region per component that owns at least one
/// pixel, ordered by component index. Every region starts out kept.
pub fn extract_regions(labels: &[usize], pixels: &PixelSet, model: &MixtureModel) -> Vec<SliceRegion> {
    let n = pixels.len();
    let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); model.len()];
    for (s, &l) in pixels.samples().iter().zip(labels) {
        groups[l].push((s.x, s.y));
    }
    groups
        .into_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(component_index, pixel_locations)| SliceRegion {
            component_index,
            weight_fraction: pixel_locations.len() as f64 / n as f64,
            pixel_locations,
            kept: true,
            kl_to_reference: None,
            fallback: false,
        })
        .collect()
}

/// Classifies `pixels` under `model` and materializes the slice regions.
pub fn segment(model: &MixtureModel, pixels: &PixelSet) -> Result<SegmentationResult> {
    let labels = classify_pixels(model, pixels)?;
    let regions = extract_regions(&labels, pixels, model);
    let (width, height) = pixels.source_dims();
    Ok(SegmentationResult {
        model: model.clone(),
        k_effective: regions.len(),
        regions,
        width,
        height,
    })
}

/// Keeps regions that are dense enough (`fraction >= w_min`) and whose
/// component is within `tau_kl` of some reference component. If nothing
/// survives, the region with minimal KL is kept and flagged as fallback.
pub fn gate_regions(
    seg: &SegmentationResult,
    reference: &MixtureModel,
    tau_kl: f64,
    w_min: f64,
) -> Result<SegmentationResult> {
    let mut out = seg.clone();
    for r in &mut out.regions {
        let (_, kl) = nearest_component(&seg.model.components[r.component_index], reference)?;
        r.kl_to_reference = Some(kl.value());
        r.kept = r.weight_fraction >= w_min && kl.value() <= tau_kl;
        r.fallback = false;
    }
    if !out.regions.iter().any(|r| r.kept) {
        let best = out
            .regions
            .iter_mut()
            .min_by(|a, b| {
                a.kl_to_reference
                    .unwrap_or(f64::INFINITY)
                    .total_cmp(&b.kl_to_reference.unwrap_or(f64::INFINITY))
            })
            .expect("a segmentation has at least one region");
        debug!(
            "gate kept no region; falling back to component {}",
            best.component_index
        );
        best.kept = true;
        best.fallback = true;
    }
    Ok(out)
}

/// Checks `k1, k2 < n` and that `k_intra` lies strictly between `k1` and `k2`.
pub fn validate_cluster_counts(n: usize, k1: usize, k2: usize, k_intra: usize) -> bool {
    k1 < n && k2 < n && ((k1 < k_intra && k_intra < k2) || (k2 < k_intra && k_intra < k1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{masked_pixels, ColorImage};
    use crate::mixture::tests::random_mixture;
    use crate::mixture::{component_density, fit_gmm, GaussianComponent};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_component() -> MixtureModel {
        let a = GaussianComponent {
            weight: 0.5,
            ..GaussianComponent::isotropic([0.1, 0.5, 0.5], 0.01)
        };
        let b = GaussianComponent {
            weight: 0.5,
            ..GaussianComponent::isotropic([0.9, 0.5, 0.5], 0.01)
        };
        MixtureModel::new(vec![a, b]).unwrap()
    }

    #[test]
    fn classify_nearest_and_tie() {
        let m = two_component();
        let px = PixelSet::from_colors(&[[0.05, 0.1, 0.1], [0.5, 0.5, 0.5], [0.95, 0.5, 0.5]]);
        assert_eq!(classify_pixels(&m, &px).unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn classify_matches_brute_force_posterior() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_mixture(&mut rng, 3, 0.15);
            let colors: Vec<[f64; 3]> = (0..200).map(|_| [0, 1, 2].map(|_| rng.random::<f64>())).collect();
            let labels = classify_pixels(&m, &PixelSet::from_colors(&colors)).unwrap();
            for (d, &l) in colors.iter().zip(&labels) {
                let scores: Vec<f64> = m
                    .components
                    .iter()
                    .map(|c| c.weight * component_density(c, d).unwrap())
                    .collect();
                let oracle = (0..scores.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
                assert_eq!(l, oracle);
            }
        }
    }

    #[test]
    fn region_grouping() {
        let m = MixtureModel::new(vec![
            GaussianComponent { weight: 0.4, ..GaussianComponent::isotropic([0.1; 3], 0.01) },
            GaussianComponent { weight: 0.3, ..GaussianComponent::isotropic([0.5; 3], 0.01) },
            GaussianComponent { weight: 0.3, ..GaussianComponent::isotropic([0.9; 3], 0.01) },
        ])
        .unwrap();
        let px = PixelSet::from_colors(&[[0.1; 3]; 3]);
        let all_zero = extract_regions(&[0, 0, 0], &px, &m);
        assert_eq!(all_zero.len(), 1);
        assert_eq!(all_zero[0].weight_fraction, 1.0);

        let split = extract_regions(&[0, 0, 2], &px, &m);
        assert_eq!(split.len(), 2);
        assert!((split[0].weight_fraction - 2.0 / 3.0).abs() < 1e-15);
        assert!((split[1].weight_fraction - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(split[1].component_index, 2);
    }

    fn two_color_image() -> ColorImage {
        ColorImage::from_fn(40, 30, |x, y| {
            if (x + y) % 7 < 3 {
                [0.8, 0.3, 0.2]
            } else {
                [0.2, 0.5, 0.8]
            }
        })
    }

    #[test]
    fn two_solid_colors_are_recovered_exactly() {
        let img = two_color_image();
        let px = masked_pixels(&img, &Mask::full(40, 30)).unwrap();
        let model = fit_gmm(&px, 2, 0).unwrap();
        let seg = segment(&model, &px).unwrap();
        assert_eq!(seg.regions.len(), 2);
        assert_eq!(seg.total_pixels(), px.len());
        for r in &seg.regions {
            let first = img.get(r.pixel_locations[0].0, r.pixel_locations[0].1);
            assert!(r.pixel_locations.iter().all(|&(x, y)| img.get(x, y) == first));
        }
    }

    fn seeded_segmentation(seed: u64) -> (SegmentationResult, MixtureModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = ColorImage::from_fn(24, 24, |_, _| [0, 1, 2].map(|_| rng.random::<f64>()));
        let px = masked_pixels(&img, &Mask::full(24, 24)).unwrap();
        let model = fit_gmm(&px, 4, seed).unwrap();
        let reference = random_mixture(&mut rng, 3, 0.2);
        (segment(&model, &px).unwrap(), reference)
    }

    #[test]
    fn regions_partition_pixels() {
        for seed in 0..5 {
            let (seg, _) = seeded_segmentation(seed);
            assert_eq!(seg.total_pixels(), 24 * 24);
            let mut seen = std::collections::HashSet::new();
            for r in &seg.regions {
                for p in &r.pixel_locations {
                    assert!(seen.insert(*p));
                }
            }
            assert_eq!(seg.k_effective, seg.regions.len());
        }
    }

    #[test]
    fn gate_against_self_keeps_everything() {
        let (seg, _) = seeded_segmentation(1);
        let gated = gate_regions(&seg, &seg.model, 2.0, 0.0).unwrap();
        assert!(gated.regions.iter().all(|r| r.kept && !r.fallback));
    }

    #[test]
    fn gate_density_floor() {
        let img = ColorImage::from_fn(10, 10, |x, _| if x < 6 { [0.8, 0.3, 0.2] } else { [0.2, 0.5, 0.8] });
        let px = masked_pixels(&img, &Mask::full(10, 10)).unwrap();
        let seg = segment(&fit_gmm(&px, 2, 0).unwrap(), &px).unwrap();
        let gated = gate_regions(&seg, &seg.model, 2.0, 0.5).unwrap();
        let kept: Vec<f64> = gated.kept_regions().map(|r| r.weight_fraction).collect();
        assert_eq!(kept, vec![0.6]);
    }

    #[test]
    fn gate_fallback_keeps_min_kl() {
        let (seg, reference) = seeded_segmentation(2);
        let gated = gate_regions(&seg, &reference, 1e-12, 0.99).unwrap();
        let kept: Vec<&SliceRegion> = gated.kept_regions().collect();
        assert_eq!(kept.len(), 1);
        assert!(kept[0].fallback);
        let min = gated
            .regions
            .iter()
            .map(|r| r.kl_to_reference.unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(kept[0].kl_to_reference.unwrap(), min);
    }

    #[test]
    fn gate_is_monotone() {
        for seed in 0..6 {
            let (seg, reference) = seeded_segmentation(seed);
            let taus = [0.5, 1.0, 2.0, 5.0, 20.0, 100.0];
            for w in taus.windows(2) {
                let lo = gate_regions(&seg, &reference, w[0], 0.05).unwrap();
                let hi = gate_regions(&seg, &reference, w[1], 0.05).unwrap();
                for (a, b) in lo.regions.iter().zip(&hi.regions) {
                    if a.kept && !a.fallback {
                        assert!(b.kept);
                    }
                }
            }
            let floors = [0.0, 0.1, 0.2, 0.3, 0.5];
            for w in floors.windows(2) {
                let lo = gate_regions(&seg, &reference, 50.0, w[0]).unwrap();
                let hi = gate_regions(&seg, &reference, 50.0, w[1]).unwrap();
                for (a, b) in lo.regions.iter().zip(&hi.regions) {
                    if !a.kept && !b.fallback {
                        assert!(!b.kept);
                    }
                }
            }
        }
    }

    #[test]
    fn label_map_and_kept_mask() {
        let (seg, reference) = seeded_segmentation(3);
        let gated = gate_regions(&seg, &reference, 1e-12, 0.99).unwrap();
        let map = gated.label_map();
        assert!(map.iter().all(|&l| (l as usize) < gated.model.len()));
        let mask = gated.kept_mask();
        assert_eq!(mask.count(), gated.kept_regions().map(SliceRegion::pixel_count).sum::<usize>());
    }

    #[test]
    fn cluster_count_relation() {
        assert!(validate_cluster_counts(1000, 3, 7, 5));
        assert!(validate_cluster_counts(1000, 7, 3, 5));
        assert!(!validate_cluster_counts(1000, 4, 4, 4));
        assert!(!validate_cluster_counts(5, 3, 7, 5));
    }
}
