//! Gaussian mixture color model: VQ codebook initialisation and EM fitting.

use nalgebra::{Cholesky, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::PixelSet;

/// Ridge added to every covariance estimate.
pub const COVARIANCE_REGULARIZATION: f64 = 1e-6;
/// Components whose prior falls below this are dropped during EM.
pub const MIN_COMPONENT_WEIGHT: f64 = 1e-4;
pub const MAX_COMPONENTS: usize = 32;
const VQ_MAX_ITERATIONS: usize = 100;
const EM_MAX_ITERATIONS: usize = 200;
const EM_RELATIVE_TOLERANCE: f64 = 1e-6;
const DIM: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: [f64; 3],
    /// Row-major, symmetric positive definite.
    pub covariance: [[f64; 3]; 3],
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: [f64; 3], covariance: [[f64; 3]; 3]) -> Self {
        Self {
            weight,
            mean,
            covariance,
        }
    }

    /// Unit-weight component with isotropic covariance `var * I`.
    pub fn isotropic(mean: [f64; 3], var: f64) -> Self {
        let mut covariance = [[0.0; 3]; 3];
        for (i, row) in covariance.iter_mut().enumerate() {
            row[i] = var;
        }
        Self::new(1.0, mean, covariance)
    }

    pub fn mean_vector(&self) -> Vector3<f64> {
        Vector3::from(self.mean)
    }

    pub fn covariance_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.covariance[r][c])
    }

    /// Cholesky factor of the covariance.
    pub fn cholesky(&self) -> Result<Cholesky<f64, nalgebra::U3>> {
        Cholesky::new(self.covariance_matrix()).ok_or(Error::SingularCovariance)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0 && self.weight <= 1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "component weight {} outside (0, 1]",
                self.weight
            )));
        }
        let c = self.covariance;
        for (r, row) in c.iter().enumerate() {
            for (col, v) in row.iter().enumerate() {
                if !v.is_finite() || (v - c[col][r]).abs() > 1e-12 * v.abs().max(1.0) {
                    return Err(Error::InvalidParameter("covariance is not symmetric".into()));
                }
            }
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("non-finite component mean".into()));
        }
        self.cholesky().map(|_| ())
    }
}

/// A mixture of three-dimensional Gaussians whose priors sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub components: Vec<GaussianComponent>,
}

impl MixtureModel {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let m = Self { components };
        m.validate()?;
        Ok(m)
    }

    pub fn single(component: GaussianComponent) -> Self {
        Self {
            components: vec![GaussianComponent {
                weight: 1.0,
                ..component
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() || self.components.len() > MAX_COMPONENTS {
            return Err(Error::InvalidParameter(format!(
                "mixture must have 1..={MAX_COMPONENTS} components, has {}",
                self.components.len()
            )));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}"
            )));
        }
        self.components.iter().try_for_each(GaussianComponent::validate)
    }

    /// Sum of per-sample log densities.
    pub fn log_likelihood(&self, pixels: &PixelSet) -> Result<f64> {
        let prepared = PreparedMixture::new(self)?;
        Ok(pixels.colors().map(|d| prepared.log_density(&d)).sum())
    }
}

/// A component with its Cholesky factor and log normaliser cached.
#[derive(Debug, Clone)]
pub(crate) struct PreparedComponent {
    mean: Vector3<f64>,
    lower: Matrix3<f64>,
    log_norm: f64,
}

impl PreparedComponent {
    pub(crate) fn new(c: &GaussianComponent) -> Result<Self> {
        let chol = c.cholesky()?;
        let lower = chol.l();
        let log_det_half: f64 = (0..3).map(|i| lower[(i, i)].ln()).sum();
        if !log_det_half.is_finite() {
            return Err(Error::SingularCovariance);
        }
        Ok(Self {
            mean: c.mean_vector(),
            lower,
            log_norm: -0.5 * DIM * (2.0 * std::f64::consts::PI).ln() - log_det_half,
        })
    }

    /// Squared Mahalanobis distance of `d` from the mean.
    pub(crate) fn mahalanobis_sq(&self, d: &[f64; 3]) -> f64 {
        let diff = Vector3::from(*d) - self.mean;
        // forward substitution with the lower factor
        let l = &self.lower;
        let z0 = diff[0] / l[(0, 0)];
        let z1 = (diff[1] - l[(1, 0)] * z0) / l[(1, 1)];
        let z2 = (diff[2] - l[(2, 0)] * z0 - l[(2, 1)] * z1) / l[(2, 2)];
        z0 * z0 + z1 * z1 + z2 * z2
    }

    pub(crate) fn log_density(&self, d: &[f64; 3]) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(d)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PreparedMixture {
    pub(crate) components: Vec<PreparedComponent>,
    pub(crate) log_weights: Vec<f64>,
}

impl PreparedMixture {
    pub(crate) fn new(m: &MixtureModel) -> Result<Self> {
        Ok(Self {
            components: m
                .components
                .iter()
                .map(PreparedComponent::new)
                .collect::<Result<_>>()?,
            log_weights: m.components.iter().map(|c| c.weight.ln()).collect(),
        })
    }

    /// `ln(P_i) + ln f(d | i)` for every component, written into `out`.
    pub(crate) fn weighted_log_densities(&self, d: &[f64; 3], out: &mut [f64]) {
        for ((o, c), lw) in out.iter_mut().zip(&self.components).zip(&self.log_weights) {
            *o = lw + c.log_density(d);
        }
    }

    pub(crate) fn log_density(&self, d: &[f64; 3]) -> f64 {
        let mut buf = [0.0; MAX_COMPONENTS];
        let buf = &mut buf[..self.components.len()];
        self.weighted_log_densities(d, buf);
        log_sum_exp(buf)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Multivariate normal density of a single component (its weight is ignored).
pub fn component_density(c: &GaussianComponent, d: &[f64; 3]) -> Result<f64> {
    Ok(PreparedComponent::new(c)?.log_density(d).exp())
}

/// `sum_i P_i f(d | i)`.
pub fn mixture_density(m: &MixtureModel, d: &[f64; 3]) -> Result<f64> {
    m.components
        .iter()
        .map(|c| component_density(c, d).map(|f| c.weight * f))
        .sum()
}

/// Lloyd codebook over color samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub centroids: Vec<[f64; 3]>,
    /// Centroid index per sample.
    pub assignment: Vec<usize>,
    /// Quantization error (sum of squared distances) after every assignment step.
    pub errors: Vec<f64>,
}

impl Codebook {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

fn dist_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Farthest-point seeding: a seeded first pick, then repeatedly the sample
/// farthest from all chosen centroids.
fn farthest_point_init(colors: &[[f64; 3]], k: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..colors.len());
    let mut centroids = vec![colors[first]];
    let mut nearest: Vec<f64> = colors.iter().map(|c| dist_sq(c, &colors[first])).collect();
    while centroids.len() < k {
        let (far, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| {
                if d > best.1 {
                    (i, d)
                } else {
                    best
                }
            });
        let c = colors[far];
        for (n, col) in nearest.iter_mut().zip(colors) {
            *n = n.min(dist_sq(col, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Assigns every sample to its nearest centroid, keeping the current label on
/// ties. Returns whether any label changed and the quantization error.
fn assign(colors: &[[f64; 3]], centroids: &[[f64; 3]], labels: &mut [usize]) -> (bool, f64) {
    let mut changed = false;
    let mut error = 0.0;
    for (col, label) in colors.iter().zip(labels.iter_mut()) {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in centroids.iter().enumerate() {
            let d = dist_sq(col, c);
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        if *label < centroids.len() && dist_sq(col, &centroids[*label]) <= best_d {
            best = *label;
        }
        if *label != best {
            *label = best;
            changed = true;
        }
        error += best_d;
    }
    (changed, error)
}

fn update_means(colors: &[[f64; 3]], labels: &[usize], k: usize) -> (Vec<[f64; 3]>, Vec<usize>) {
    let mut sums = vec![[0.0; 3]; k];
    let mut counts = vec![0usize; k];
    for (col, &l) in colors.iter().zip(labels) {
        counts[l] += 1;
        for c in 0..3 {
            sums[l][c] += col[c];
        }
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| {
            if n == 0 {
                [f64::NAN; 3]
            } else {
                s.map(|v| v / n as f64)
            }
        })
        .collect();
    (means, counts)
}

/// Vector-quantization codebook by Lloyd iteration from farthest-point seeds.
///
/// Runs until no assignment changes or 100 iterations. A cluster left empty
/// takes over the member of the largest cluster farthest from its centroid.
pub fn vq_codebook(pixels: &PixelSet, k: usize, seed: u64) -> Result<Codebook> {
    if k == 0 {
        return Err(Error::InvalidParameter("codebook size must be >= 1".into()));
    }
    if pixels.len() < k {
        return Err(Error::TooFewSamples {
            needed: k,
            got: pixels.len(),
        });
    }
    let colors: Vec<[f64; 3]> = pixels.colors().collect();
    let mut centroids = farthest_point_init(&colors, k, seed);
    let mut labels = vec![usize::MAX; colors.len()];
    let mut errors = Vec::new();

    for _ in 0..VQ_MAX_ITERATIONS {
        let (changed, error) = assign(&colors, &centroids, &mut labels);
        errors.push(error);
        if !changed {
            break;
        }
        let (means, mut counts) = update_means(&colors, &labels, k);
        centroids = means;
        while let Some(empty) = counts.iter().position(|&n| n == 0) {
            let donor = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .expect("k >= 1");
            let far = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == donor)
                .map(|(i, _)| (i, dist_sq(&colors[i], &centroids[donor])))
                .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                })
                .0;
            labels[far] = empty;
            let (means, c) = update_means(&colors, &labels, k);
            counts = c;
            centroids[empty] = colors[far];
            centroids[donor] = means[donor];
        }
    }

    Ok(Codebook {
        centroids,
        assignment: labels,
        errors,
    })
}

/// Result of an EM fit with its convergence trace.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: MixtureModel,
    /// Log-likelihood evaluated at the start of every EM iteration.
    pub log_likelihoods: Vec<f64>,
    /// Iterations after whose M-step at least one component was removed.
    pub removals: Vec<usize>,
    pub converged: bool,
}

fn regularize(cov: &mut [[f64; 3]; 3]) {
    for (i, row) in cov.iter_mut().enumerate() {
        row[i] += COVARIANCE_REGULARIZATION;
    }
}

/// Drops components below [`MIN_COMPONENT_WEIGHT`] and renormalises. Returns whether any were removed.
fn prune(components: &mut Vec<GaussianComponent>) -> bool {
    let before = components.len();
    components.retain(|c| c.weight >= MIN_COMPONENT_WEIGHT);
    // the largest prior is at least 1/32, so something always survives
    debug_assert!(!components.is_empty());
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in components.iter_mut() {
        c.weight /= total;
    }
    components.len() != before
}

fn initial_components(colors: &[[f64; 3]], codebook: &Codebook) -> Vec<GaussianComponent> {
    let k = codebook.centroids.len();
    let n = colors.len() as f64;
    let mut counts = vec![0usize; k];
    let mut mean = vec![[0.0; 3]; k];
    for (col, &l) in colors.iter().zip(&codebook.assignment) {
        counts[l] += 1;
        for c in 0..3 {
            mean[l][c] += col[c];
        }
    }
    for (m, &cnt) in mean.iter_mut().zip(&counts) {
        if cnt > 0 {
            *m = m.map(|v| v / cnt as f64);
        }
    }
    let mut cov = vec![[[0.0; 3]; 3]; k];
    for (col, &l) in colors.iter().zip(&codebook.assignment) {
        let d = [col[0] - mean[l][0], col[1] - mean[l][1], col[2] - mean[l][2]];
        for r in 0..3 {
            for c in 0..3 {
                cov[l][r][c] += d[r] * d[c];
            }
        }
    }
    (0..k)
        .filter(|&i| counts[i] > 0)
        .map(|i| {
            let mut s = cov[i].map(|row| row.map(|v| v / counts[i] as f64));
            regularize(&mut s);
            GaussianComponent::new(counts[i] as f64 / n, mean[i], s)
        })
        .collect()
}

/// EM fit of a `k`-component mixture, initialised from [`vq_codebook`].
pub fn fit_gmm(pixels: &PixelSet, k: usize, seed: u64) -> Result<MixtureModel> {
    fit_gmm_traced(pixels, k, seed).map(|r| r.model)
}

/// [`fit_gmm`] returning the log-likelihood trace.
pub fn fit_gmm_traced(pixels: &PixelSet, k: usize, seed: u64) -> Result<FitReport> {
    if k == 0 || k > MAX_COMPONENTS {
        return Err(Error::InvalidParameter(format!(
            "mixture size {k} outside 1..={MAX_COMPONENTS}"
        )));
    }
    if pixels.len() < 10 * k {
        return Err(Error::TooFewSamples {
            needed: 10 * k,
            got: pixels.len(),
        });
    }
    let colors: Vec<[f64; 3]> = pixels.colors().collect();
    let n = colors.len();
    let codebook = vq_codebook(pixels, k, seed)?;
    let mut components = initial_components(&colors, &codebook);
    prune(&mut components);

    let mut trace = Vec::new();
    let mut removals = Vec::new();
    let mut converged = false;
    let mut resp = vec![0.0; n * MAX_COMPONENTS];

    for iteration in 0..EM_MAX_ITERATIONS {
        let m = components.len();
        let prepared = PreparedMixture::new(&MixtureModel {
            components: components.clone(),
        })?;

        // E-step
        let mut ll = 0.0;
        for (i, d) in colors.iter().enumerate() {
            let row = &mut resp[i * m..(i + 1) * m];
            prepared.weighted_log_densities(d, row);
            let lse = log_sum_exp(row);
            ll += lse;
            for r in row.iter_mut() {
                *r = (*r - lse).exp();
            }
        }
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            trace.push(ll);
            if (ll - prev) / prev.abs().max(f64::MIN_POSITIVE) < EM_RELATIVE_TOLERANCE {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }

        // M-step
        let mut next = Vec::with_capacity(m);
        for j in 0..m {
            let mut nk = 0.0;
            let mut mean = [0.0; 3];
            for (i, d) in colors.iter().enumerate() {
                let r = resp[i * m + j];
                nk += r;
                for c in 0..3 {
                    mean[c] += r * d[c];
                }
            }
            if nk <= 0.0 {
                // responsibility underflowed everywhere: the component is dead
                next.push(GaussianComponent::new(0.0, components[j].mean, components[j].covariance));
                continue;
            }
            let mean = mean.map(|v| v / nk);
            let mut cov = [[0.0; 3]; 3];
            for (i, d) in colors.iter().enumerate() {
                let r = resp[i * m + j];
                let diff = [d[0] - mean[0], d[1] - mean[1], d[2] - mean[2]];
                for a in 0..3 {
                    for b in a..3 {
                        cov[a][b] += r * diff[a] * diff[b];
                    }
                }
            }
            for a in 0..3 {
                for b in a..3 {
                    cov[a][b] /= nk;
                    cov[b][a] = cov[a][b];
                }
            }
            regularize(&mut cov);
            next.push(GaussianComponent::new(nk / n as f64, mean, cov));
        }
        let total: f64 = next.iter().map(|c| c.weight).sum();
        for c in &mut next {
            c.weight /= total;
        }
        if prune(&mut next) {
            removals.push(iteration);
        }
        components = next;
    }

    Ok(FitReport {
        model: MixtureModel { components },
        log_likelihoods: trace,
        removals,
        converged,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    /// Draws `n` samples from a component via its Cholesky factor.
    pub(crate) fn sample_component(c: &GaussianComponent, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
        let l = c.cholesky().unwrap().l();
        (0..n)
            .map(|_| {
                let z = Vector3::new(
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                );
                let x = c.mean_vector() + l * z;
                [x[0], x[1], x[2]]
            })
            .collect()
    }

    fn univariate(x: f64, m: f64, var: f64) -> f64 {
        (-(x - m).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    fn random_spd(rng: &mut ChaCha8Rng, scale: f64) -> [[f64; 3]; 3] {
        let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0) * scale);
        let s = a * a.transpose() + Matrix3::identity() * scale * scale * 0.1;
        [0, 1, 2].map(|r| [0, 1, 2].map(|c| s[(r, c)]))
    }

    pub(crate) fn random_mixture(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> MixtureModel {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        MixtureModel::new(
            raw.iter()
                .map(|w| {
                    GaussianComponent::new(
                        w / total,
                        [0, 1, 2].map(|_| rng.random_range(0.1..0.9)),
                        random_spd(rng, scale),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn density_at_mean_with_identity() {
        let c = GaussianComponent::isotropic([0.2, 0.4, 0.6], 1.0);
        let at_mean = component_density(&c, &[0.2, 0.4, 0.6]).unwrap();
        assert!((at_mean - (2.0 * std::f64::consts::PI).powf(-1.5)).abs() < 1e-12);
        assert!((at_mean - 0.0634936).abs() < 1e-7);
        let step = component_density(&c, &[1.2, 0.4, 0.6]).unwrap();
        assert!((step - 0.0385108).abs() < 1e-7);
    }

    #[test]
    fn diagonal_density_is_product_of_univariates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = [0, 1, 2].map(|_| rng.random_range(-1.0..1.0));
            let v = [0, 1, 2].map(|_| rng.random_range(0.05..2.0));
            let d = [0, 1, 2].map(|_| rng.random_range(-2.0..2.0));
            let c = GaussianComponent::new(
                1.0,
                m,
                [[v[0], 0.0, 0.0], [0.0, v[1], 0.0], [0.0, 0.0, v[2]]],
            );
            let oracle: f64 = (0..3).map(|i| univariate(d[i], m[i], v[i])).product();
            let got = component_density(&c, &d).unwrap();
            assert!((got - oracle).abs() <= 1e-12 * oracle.max(1.0), "{got} vs {oracle}");
        }
    }

    #[test]
    fn singular_covariance_is_reported() {
        let c = GaussianComponent::isotropic([0.0; 3], 0.0);
        assert!(matches!(component_density(&c, &[0.0; 3]), Err(Error::SingularCovariance)));
    }

    #[test]
    fn mixture_density_collapses() {
        let c = GaussianComponent::new(0.5, [0.3, 0.3, 0.3], random_spd(&mut ChaCha8Rng::seed_from_u64(3), 0.3));
        let m = MixtureModel::new(vec![c.clone(), c.clone()]).unwrap();
        let single = MixtureModel::single(c.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let d = [0, 1, 2].map(|_| rng.random_range(-0.5..1.5));
            let a = mixture_density(&m, &d).unwrap();
            let b = mixture_density(&single, &d).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
            assert!((b - component_density(&c, &d).unwrap()).abs() <= 1e-15 * b.max(1.0));
        }
    }

    #[test]
    fn mixture_density_integrates_to_one() {
        // Riemann sum on a 64^3 grid over [-0.5, 1.5]^3
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_mixture(&mut rng, 3, 0.12);
        let steps = 64;
        let h = 2.0 / steps as f64;
        let mut total = 0.0;
        for i in 0..steps {
            for j in 0..steps {
                for k in 0..steps {
                    let d = [i, j, k].map(|t| -0.5 + (t as f64 + 0.5) * h);
                    total += mixture_density(&m, &d).unwrap();
                }
            }
        }
        total *= h * h * h;
        assert!((total - 1.0).abs() < 0.02, "integral {total}");
    }

    #[test]
    fn mixture_density_dominates_each_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_mixture(&mut rng, 4, 0.2);
        for _ in 0..50 {
            let d = [0, 1, 2].map(|_| rng.random_range(-0.5..1.5));
            let total = mixture_density(&m, &d).unwrap();
            for c in &m.components {
                let term = c.weight * component_density(c, &d).unwrap();
                assert!(term > 0.0);
                assert!(total >= term);
            }
        }
    }

    #[test]
    fn vq_separated_clusters() {
        let mut colors = vec![[0.1; 3]; 3];
        colors.extend(vec![[0.9; 3]; 3]);
        let cb = vq_codebook(&PixelSet::from_colors(&colors), 2, 1).unwrap();
        let mut cents = cb.centroids.clone();
        cents.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for (c, want) in cents.iter().zip([0.1, 0.9]) {
            assert!(c.iter().all(|v| (v - want).abs() < 1e-12), "{cents:?}");
        }
    }

    #[test]
    fn vq_single_centroid_is_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let colors: Vec<[f64; 3]> = (0..40).map(|_| [0, 1, 2].map(|_| rng.random::<f64>())).collect();
        let cb = vq_codebook(&PixelSet::from_colors(&colors), 1, 9).unwrap();
        for c in 0..3 {
            let mean = colors.iter().map(|x| x[c]).sum::<f64>() / 40.0;
            assert!((cb.centroids[0][c] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn vq_partition_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let colors: Vec<[f64; 3]> = (0..50).map(|_| [0, 1, 2].map(|_| rng.random::<f64>())).collect();
        let cb = vq_codebook(&PixelSet::from_colors(&colors), 3, 5).unwrap();
        // brute force: no sample strictly closer to a foreign centroid
        for (col, &a) in colors.iter().zip(&cb.assignment) {
            let own = dist_sq(col, &cb.centroids[a]);
            for c in &cb.centroids {
                assert!(dist_sq(col, c) >= own);
            }
        }
        assert!(cb.errors.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(cb.cluster_sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn vq_repairs_duplicate_data() {
        let colors = vec![[0.5; 3]; 20];
        let cb = vq_codebook(&PixelSet::from_colors(&colors), 3, 0).unwrap();
        assert!(cb.cluster_sizes().iter().all(|&s| s > 0));
        assert!(matches!(
            vq_codebook(&PixelSet::from_colors(&colors[..2]), 3, 0),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn gmm_point_mass() {
        let colors = vec![[0.5; 3]; 100];
        let m = fit_gmm(&PixelSet::from_colors(&colors), 1, 0).unwrap();
        assert_eq!(m.len(), 1);
        let c = &m.components[0];
        assert_eq!(c.weight, 1.0);
        assert_eq!(c.mean, [0.5; 3]);
        for r in 0..3 {
            for col in 0..3 {
                let want = if r == col { COVARIANCE_REGULARIZATION } else { 0.0 };
                assert!((c.covariance[r][col] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gmm_separated_point_masses_weights() {
        let mut colors = vec![[0.1; 3]; 30];
        colors.extend(vec![[0.9; 3]; 70]);
        let m = fit_gmm(&PixelSet::from_colors(&colors), 2, 3).unwrap();
        let mut w: Vec<f64> = m.components.iter().map(|c| c.weight).collect();
        w.sort_by(f64::total_cmp);
        assert!((w[0] - 0.3).abs() < 1e-6 && (w[1] - 0.7).abs() < 1e-6, "{w:?}");
    }

    #[test]
    fn gmm_recovers_generating_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(500);
        let a = GaussianComponent::isotropic([0.25, 0.3, 0.35], 0.003);
        let b = GaussianComponent::isotropic([0.7, 0.6, 0.5], 0.004);
        let mut colors = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..500 {
            let pick = rng.random_bool(0.4);
            let c = if pick { &a } else { &b };
            colors.extend(sample_component(c, 1, &mut rng));
            labels.push(pick);
        }
        // oracle: sample means of the labeled draws
        let truth: Vec<[f64; 3]> = [true, false]
            .iter()
            .map(|&l| {
                let pts: Vec<_> = colors.iter().zip(&labels).filter(|(_, &x)| x == l).map(|(c, _)| c).collect();
                [0, 1, 2].map(|i| pts.iter().map(|p| p[i]).sum::<f64>() / pts.len() as f64)
            })
            .collect();
        let m = fit_gmm(&PixelSet::from_colors(&colors), 2, 1).unwrap();
        assert_eq!(m.len(), 2);
        for t in &truth {
            let best = m
                .components
                .iter()
                .map(|c| dist_sq(&c.mean, t).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 0.05, "mean error {best}");
        }
    }

    #[test]
    fn em_log_likelihood_monotone_and_deterministic() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let truth = random_mixture(&mut rng, 3, 0.08);
            let mut colors = Vec::new();
            for c in &truth.components {
                colors.extend(sample_component(c, (c.weight * 400.0) as usize + 5, &mut rng));
            }
            let px = PixelSet::from_colors(&colors);
            let report = fit_gmm_traced(&px, 4, seed).unwrap();
            for (i, w) in report.log_likelihoods.windows(2).enumerate() {
                if !report.removals.contains(&i) {
                    assert!(w[1] >= w[0] - 1e-9, "seed {seed} iter {i}: {} -> {}", w[0], w[1]);
                }
            }
            let total: f64 = report.model.components.iter().map(|c| c.weight).sum();
            assert!((total - 1.0).abs() < 1e-9);
            report.model.validate().unwrap();
            let again = fit_gmm(&px, 4, seed).unwrap();
            assert_eq!(again, report.model);
        }
    }

    #[test]
    fn fit_rejects_small_sets() {
        let colors = vec![[0.5; 3]; 49];
        assert!(matches!(
            fit_gmm(&PixelSet::from_colors(&colors), 5, 0),
            Err(Error::TooFewSamples { needed: 50, got: 49 })
        ));
    }
}
