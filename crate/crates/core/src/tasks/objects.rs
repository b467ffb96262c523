//! Attribute-product object universe: 48 objects formed as the Cartesian
//! product of 4 A-attribute vectors (R^4) and 12 B-attribute vectors (R^8),
//! with a strict total order using A as primary key and B as secondary key.
//!
//! Object i pairs A-value i/12 with B-value i%12; the feature row is the
//! concatenation of the two attribute vectors. Orders are stored as ranks:
//! `a_order[v]` is the rank of A-value v, so comparisons go through the rank
//! tables rather than raw indices, which is what lets the primary order be
//! reshuffled without touching a single feature bit.

use crate::engine::{tag, Rng};
use crate::error::{LabError, Result};

pub const N_A: usize = 4;
pub const N_B: usize = 12;
pub const N_OBJECTS: usize = N_A * N_B;
pub const D_A: usize = 4;
pub const D_B: usize = 8;
pub const D_OBJECT: usize = D_A + D_B;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectUniverse {
    /// 48 x 12 feature matrix, row-major.
    pub objects: Vec<f64>,
    /// Rank of each A-value: a_order[v] in 0..4.
    pub a_order: [usize; N_A],
    /// Rank of each B-value: b_order[v] in 0..12.
    pub b_order: [usize; N_B],
    pub seed: u64,
}

/// Draws the attribute vectors iid standard normal and assigns the initial
/// orders a_1 < a_2 < a_3 < a_4 and b_1 < ... < b_12 (identity ranks).
pub fn gen_object_universe(seed: u64) -> ObjectUniverse {
    let mut rng = Rng::stream(seed, &[tag("objects")]);
    let mut a = vec![0.0f64; N_A * D_A];
    let mut b = vec![0.0f64; N_B * D_B];
    rng.fill_normal(&mut a, 1.0);
    rng.fill_normal(&mut b, 1.0);

    let mut objects = vec![0.0f64; N_OBJECTS * D_OBJECT];
    for i in 0..N_OBJECTS {
        let (ai, bi) = (i / N_B, i % N_B);
        objects[i * D_OBJECT..i * D_OBJECT + D_A]
            .copy_from_slice(&a[ai * D_A..(ai + 1) * D_A]);
        objects[i * D_OBJECT + D_A..(i + 1) * D_OBJECT]
            .copy_from_slice(&b[bi * D_B..(bi + 1) * D_B]);
    }

    let mut a_order = [0usize; N_A];
    let mut b_order = [0usize; N_B];
    for (v, r) in a_order.iter_mut().enumerate() {
        *r = v;
    }
    for (v, r) in b_order.iter_mut().enumerate() {
        *r = v;
    }
    ObjectUniverse { objects, a_order, b_order, seed }
}

/// Returns the same 48 object vectors with a freshly drawn random permutation
/// of the A-value ranks; B ranks are untouched.
pub fn reshuffle_primary_order(u: &ObjectUniverse, seed: u64) -> ObjectUniverse {
    let mut rng = Rng::stream(seed, &[tag("reshuffle")]);
    let mut ranks: Vec<usize> = (0..N_A).collect();
    rng.shuffle(&mut ranks);
    let mut a_order = [0usize; N_A];
    a_order.copy_from_slice(&ranks);
    ObjectUniverse {
        objects: u.objects.clone(),
        a_order,
        b_order: u.b_order,
        seed,
    }
}

impl ObjectUniverse {
    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.objects[i * D_OBJECT..(i + 1) * D_OBJECT]
    }

    /// Strict total order: A rank is the primary key, B rank the secondary.
    pub fn precedes(&self, i: usize, j: usize) -> bool {
        let (ra_i, ra_j) = (self.a_order[i / N_B], self.a_order[j / N_B]);
        if ra_i != ra_j {
            return ra_i < ra_j;
        }
        self.b_order[i % N_B] < self.b_order[j % N_B]
    }

    /// Argsort of a sequence of object ids: result[k] is the position within
    /// `seq` of the k-th smallest object.
    pub fn argsort(&self, seq: &[usize]) -> Vec<usize> {
        let mut pos: Vec<usize> = (0..seq.len()).collect();
        pos.sort_by(|&p, &q| {
            if self.precedes(seq[p], seq[q]) {
                std::cmp::Ordering::Less
            } else if self.precedes(seq[q], seq[p]) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        pos
    }
}

/// Adds fresh iid N(0, sigma^2) noise to every entry; each object draws its
/// own noise vector. sigma = 0 returns the input bit-identically.
pub fn corrupt_additive(objects: &[f64], sigma: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if sigma < 0.0 {
        return Err(LabError::config("noise level sigma must be nonnegative"));
    }
    if sigma == 0.0 {
        return Ok(objects.to_vec());
    }
    let mut out = objects.to_vec();
    for v in &mut out {
        *v += sigma * rng.normal();
    }
    Ok(out)
}

/// Applies one shared random linear map to every object row: each entry of
/// the d x d matrix is iid N(0, sigma^2).
pub fn corrupt_linear(objects: &[f64], d: usize, sigma: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if sigma < 0.0 {
        return Err(LabError::config("noise level sigma must be nonnegative"));
    }
    if d == 0 || objects.len() % d != 0 {
        return Err(LabError::contract(
            "object buffer length must be a multiple of the object dimension",
        ));
    }
    let mut phi = vec![0.0f64; d * d];
    for v in &mut phi {
        *v = sigma * rng.normal();
    }
    let n = objects.len() / d;
    let mut out = vec![0.0f64; objects.len()];
    for i in 0..n {
        let row = &objects[i * d..(i + 1) * d];
        for r in 0..d {
            let mut acc = 0.0;
            for (c, &x) in row.iter().enumerate() {
                acc += phi[r * d + c] * x;
            }
            out[i * d + r] = acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn universe_has_48_objects_of_dimension_12_with_product_structure() {
        let u = gen_object_universe(7);
        assert_eq!(u.objects.len(), 48 * 12);
        // Objects sharing an A-value agree on the first 4 coordinates.
        for i in 0..N_OBJECTS {
            for j in 0..N_OBJECTS {
                if i / N_B == j / N_B {
                    assert_eq!(u.feature_row(i)[..D_A], u.feature_row(j)[..D_A]);
                }
                if i % N_B == j % N_B {
                    assert_eq!(u.feature_row(i)[D_A..], u.feature_row(j)[D_A..]);
                }
            }
        }
    }

    #[test]
    fn order_is_antisymmetric_transitive_and_total_over_all_pairs() {
        let u = gen_object_universe(11);
        for i in 0..N_OBJECTS {
            assert!(!u.precedes(i, i));
            for j in 0..N_OBJECTS {
                if i != j {
                    assert!(u.precedes(i, j) ^ u.precedes(j, i));
                }
                for k in 0..N_OBJECTS {
                    if u.precedes(i, j) && u.precedes(j, k) {
                        assert!(u.precedes(i, k));
                    }
                }
            }
        }
    }

    #[test]
    fn primary_key_dominates_secondary_key() {
        let u = gen_object_universe(3);
        // Object (a_0, b_11) precedes (a_1, b_0): A decides before B.
        let lo = 0 * N_B + 11;
        let hi = 1 * N_B + 0;
        assert!(u.precedes(lo, hi));
        assert!(!u.precedes(hi, lo));
        // Same A-value: B decides.
        assert!(u.precedes(0, 1));
    }

    #[test]
    fn reshuffle_keeps_features_and_secondary_comparisons() {
        let u = gen_object_universe(5);
        let r = reshuffle_primary_order(&u, 99);
        assert_eq!(u.objects, r.objects);
        assert_eq!(u.b_order, r.b_order);
        // Comparisons between objects sharing an A-value depend only on B.
        for a in 0..N_A {
            for b1 in 0..N_B {
                for b2 in 0..N_B {
                    let (i, j) = (a * N_B + b1, a * N_B + b2);
                    assert_eq!(u.precedes(i, j), r.precedes(i, j));
                }
            }
        }
    }

    #[test]
    fn reshuffle_produces_a_valid_permutation_of_ranks() {
        let u = gen_object_universe(5);
        let r = reshuffle_primary_order(&u, 1234);
        let mut seen = [false; N_A];
        for &rank in &r.a_order {
            assert!(rank < N_A && !seen[rank]);
            seen[rank] = true;
        }
    }

    #[test]
    fn argsort_inverts_a_known_shuffle() {
        let u = gen_object_universe(21);
        // Take 10 objects in ascending order, shuffle them, argsort restores.
        let ascending: Vec<usize> = {
            let mut ids: Vec<usize> = (0..N_OBJECTS).collect();
            ids.sort_by(|&a, &b| {
                if u.precedes(a, b) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater }
            });
            ids[..10].to_vec()
        };
        let perm = [3usize, 1, 4, 0, 9, 2, 8, 5, 7, 6];
        let shuffled: Vec<usize> = perm.iter().map(|&p| ascending[p]).collect();
        let target = u.argsort(&shuffled);
        for k in 0..10 {
            assert_eq!(shuffled[target[k]], ascending[k]);
        }
    }

    #[test]
    fn zero_sigma_additive_corruption_is_bit_identical() {
        let u = gen_object_universe(2);
        let mut rng = Rng::stream(2, &[tag("noise")]);
        let c = corrupt_additive(&u.objects, 0.0, &mut rng).unwrap();
        assert_eq!(c, u.objects);
    }

    #[test]
    fn additive_noise_magnitude_matches_sigma_squared_times_d() {
        let u = gen_object_universe(13);
        let mut rng = Rng::stream(13, &[tag("noise")]);
        let sigma = 0.5;
        let mut total = 0.0;
        let trials = 1000;
        for _ in 0..trials {
            let c = corrupt_additive(&u.objects, sigma, &mut rng).unwrap();
            // Mean squared perturbation per object.
            let mut per_run = 0.0;
            for (x, y) in c.iter().zip(u.objects.iter()) {
                per_run += (x - y) * (x - y);
            }
            total += per_run / N_OBJECTS as f64;
        }
        let mean = total / trials as f64;
        let expect = sigma * sigma * D_OBJECT as f64;
        assert!((mean - expect).abs() < 0.1 * expect, "mean {mean}, expected {expect}");
    }

    #[test]
    fn linear_corruption_shares_one_map_across_objects() {
        // If every object is the same vector, all corrupted rows must agree,
        // which fails if a fresh map were drawn per object.
        let objects = vec![1.0f64; 5 * 3];
        let mut rng = Rng::stream(7, &[tag("noise")]);
        let c = corrupt_linear(&objects, 3, 0.8, &mut rng).unwrap();
        for i in 1..5 {
            assert_eq!(c[..3], c[i * 3..(i + 1) * 3]);
        }
    }

    #[test]
    fn linear_corruption_near_isometry_at_high_dimension() {
        // sigma^2 = 1/d approximately preserves inner products: the deviation
        // of <Px, Py> from <x, y> has standard deviation about |x||y|/sqrt(d).
        let d = 256;
        let mut rng = Rng::stream(31, &[tag("probe")]);
        let mut x = vec![0.0f64; d];
        let mut y = vec![0.0f64; d];
        rng.fill_normal(&mut x, 1.0);
        rng.fill_normal(&mut y, 1.0);
        let mut objects = x.clone();
        objects.extend_from_slice(&y);
        let norm_prod = x.iter().map(|v| v * v).sum::<f64>().sqrt()
            * y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let before: f64 = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let sigma = (1.0 / d as f64).sqrt();
        let trials = 50;
        let mut err_sum = 0.0;
        let mut after_sum = 0.0;
        for _ in 0..trials {
            let c = corrupt_linear(&objects, d, sigma, &mut rng).unwrap();
            let after: f64 = c[..d].iter().zip(c[d..].iter()).map(|(a, b)| a * b).sum();
            err_sum += (after - before).abs() / norm_prod;
            after_sum += after;
        }
        // Single-realization distortion concentrates at this dimension.
        assert!(err_sum / (trials as f64) < 0.2);
        // The trial mean is nearly unbiased for the clean inner product.
        assert!((after_sum / trials as f64 - before).abs() / norm_prod < 0.05);
    }

    #[test]
    fn corruption_rejects_negative_sigma() {
        let mut rng = Rng::stream(1, &[tag("noise")]);
        assert!(corrupt_additive(&[1.0], -0.1, &mut rng).is_err());
        assert!(corrupt_linear(&[1.0], 1, -0.1, &mut rng).is_err());
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        assert_eq!(gen_object_universe(42), gen_object_universe(42));
        let u = gen_object_universe(42);
        assert_eq!(reshuffle_primary_order(&u, 9), reshuffle_primary_order(&u, 9));
        assert_ne!(gen_object_universe(42).objects, gen_object_universe(43).objects);
    }
}
