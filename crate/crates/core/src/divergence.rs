//! KL divergence between Gaussian components, the matching-based
//! approximation between mixtures, and the per-region color gate.

use nalgebra::Matrix3;

use crate::error::Result;
use crate::mixture::{GaussianComponent, MixtureModel};

/// An unclamped divergence value. The mixture approximation can dip slightly
/// below zero through its log-weight term; [`KlValue::reported`] clamps it.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct KlValue(pub f64);

impl KlValue {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn reported(self) -> f64 {
        self.0.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub p_index: usize,
    pub q_index: usize,
    pub kl: f64,
    /// `ln(P_i / Q_j)` over the mixture weights.
    pub log_weight_ratio: f64,
}

/// The argmin component of `q` chosen for every component of `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMatch {
    pub pairs: Vec<MatchedPair>,
}

/// Solves `L X = B` for lower-triangular `L`, column by column.
fn forward_solve(l: &Matrix3<f64>, b: &Matrix3<f64>) -> Matrix3<f64> {
    let mut x = Matrix3::zeros();
    for col in 0..3 {
        for row in 0..3 {
            let mut acc = b[(row, col)];
            for k in 0..row {
                acc -= l[(row, k)] * x[(k, col)];
            }
            x[(row, col)] = acc / l[(row, row)];
        }
    }
    x
}

/// Closed-form `KL(a || b)` between two trivariate normals; weights are ignored.
pub fn gaussian_kl(a: &GaussianComponent, b: &GaussianComponent) -> Result<KlValue> {
    let la = a.cholesky()?.l();
    let lb = b.cholesky()?.l();

    // tr(Sb^-1 Sa) = ||Lb^-1 La||_F^2
    let trace = forward_solve(&lb, &la).norm_squared();
    let mut delta = Matrix3::zeros();
    delta.set_column(0, &(b.mean_vector() - a.mean_vector()));
    let mahalanobis = forward_solve(&lb, &delta).column(0).norm_squared();
    let log_det_ratio: f64 = (0..3).map(|i| 2.0 * (lb[(i, i)].ln() - la[(i, i)].ln())).sum();

    Ok(KlValue(0.5 * (trace + mahalanobis - 3.0 + log_det_ratio)))
}

/// Index and value of `min_j KL(c || q_j)`, lowest index on ties.
pub fn nearest_component(c: &GaussianComponent, q: &MixtureModel) -> Result<(usize, KlValue)> {
    let mut best = (0, KlValue(f64::INFINITY));
    for (j, qc) in q.components.iter().enumerate() {
        let kl = gaussian_kl(c, qc)?;
        if kl.0 < best.1 .0 {
            best = (j, kl);
        }
    }
    Ok(best)
}

/// Matching-based approximation
/// `KL(P || Q) ~ sum_i P_i [ min_j KL(p_i || q_j) + ln(P_i / Q_j*) ]`.
pub fn mixture_kl(p: &MixtureModel, q: &MixtureModel) -> Result<(KlValue, ComponentMatch)> {
    let mut total = 0.0;
    let mut pairs = Vec::with_capacity(p.len());
    for (i, pc) in p.components.iter().enumerate() {
        let (j, kl) = nearest_component(pc, q)?;
        let log_weight_ratio = (pc.weight / q.components[j].weight).ln();
        total += pc.weight * (kl.0 + log_weight_ratio);
        pairs.push(MatchedPair {
            p_index: i,
            q_index: j,
            kl: kl.0,
            log_weight_ratio,
        });
    }
    Ok((KlValue(total), ComponentMatch { pairs }))
}

/// True iff the region's component lies within `tau_kl` of some component of `q`.
pub fn consistency_gate(region: &GaussianComponent, q: &MixtureModel, tau_kl: f64) -> Result<bool> {
    Ok(nearest_component(region, q)?.1 .0 <= tau_kl)
}
