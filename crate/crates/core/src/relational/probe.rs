//! Monte-Carlo probe for inner-product preservation under random linear
//! maps.
//!
//! For a map Phi with iid N(0, sigma^2) entries, E[<Phi x, Phi y>] =
//! sigma^2 d <x, y>, so <Phi x, Phi y> / (sigma^2 d) estimates <x, y>.
//! Phi is streamed one row at a time: (Phi x)_i = <phi_i, x>, so memory
//! stays O(d) instead of O(d^2).

use crate::engine::Rng;
use crate::error::{LabError, Result};

/// Estimate <x, y> from random projections, averaged over `trials`
/// independent draws of Phi (each R^d -> R^d).
pub fn probe_pair(x: &[f64], y: &[f64], sigma: f64, trials: usize, rng: &mut Rng) -> Result<f64> {
    let d = x.len();
    if d == 0 || y.len() != d {
        return Err(LabError::dim("probe pair", &[x.len()], &[y.len()]));
    }
    if trials == 0 || sigma <= 0.0 {
        return Err(LabError::config("probe needs trials >= 1 and sigma > 0"));
    }
    let mut row = vec![0.0f64; d];
    let mut sum = 0.0;
    for _ in 0..trials {
        let mut acc = 0.0;
        for _ in 0..d {
            rng.fill_normal(&mut row, sigma);
            let px: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            let py: f64 = row.iter().zip(y).map(|(a, b)| a * b).sum();
            acc += px * py;
        }
        sum += acc / (sigma * sigma * d as f64);
    }
    Ok(sum / trials as f64)
}

/// Mean relative error of the probe estimate over `trials` fresh pairs of
/// unit-norm gaussian vectors in R^d, one random map per pair. The error
/// is guarded: |est - true| / max(1, |true|).
pub fn inner_product_probe(d: usize, sigma: f64, trials: usize, rng: &mut Rng) -> Result<f64> {
    if d == 0 {
        return Err(LabError::config("probe dimension must be positive"));
    }
    if trials == 0 || sigma <= 0.0 {
        return Err(LabError::config("probe needs trials >= 1 and sigma > 0"));
    }
    let mut x = vec![0.0f64; d];
    let mut y = vec![0.0f64; d];
    let mut total = 0.0;
    for _ in 0..trials {
        rng.fill_normal(&mut x, 1.0);
        rng.fill_normal(&mut y, 1.0);
        normalize(&mut x);
        normalize(&mut y);
        let truth: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let est = probe_pair(&x, &y, sigma, 1, rng)?;
        total += (est - truth).abs() / truth.abs().max(1.0);
    }
    Ok(total / trials as f64)
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        for a in v.iter_mut() {
            *a /= norm;
        }
    }
}
