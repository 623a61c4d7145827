//! Randomly shifted Halton sequences for volume estimation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

pub fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0 / b as f64;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f /= b as f64;
    }
    r
}

#[derive(Clone, Debug)]
pub struct VolumeEstimate {
    pub value: f64,
    pub error_estimate: f64,
}

/// Estimate the volume of {x ∈ box : inside(x)} with `replicates` independent
/// Cranley-Patterson shifts of a Halton point set of `points` points each.
pub fn qmc_volume(
    lo: &[f64],
    hi: &[f64],
    points: u64,
    replicates: u32,
    seed: u64,
    inside: &(dyn Fn(&[f64]) -> bool + Sync),
) -> VolumeEstimate {
    qmc_integrate(lo, hi, points, replicates, seed, &|x: &[f64]| if inside(x) { 1.0 } else { 0.0 })
}

/// Same scheme for a bounded integrand.
pub fn qmc_integrate(
    lo: &[f64],
    hi: &[f64],
    points: u64,
    replicates: u32,
    seed: u64,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> VolumeEstimate {
    use rayon::prelude::*;
    let d = lo.len();
    assert!(d <= BASES.len(), "dimension too large for the Halton table");
    let vol: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifts: Vec<Vec<f64>> = (0..replicates).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
    let means: Vec<f64> = shifts
        .par_iter()
        .map(|shift| {
            let mut x = vec![0.0; d];
            let mut acc = 0.0f64;
            for i in 1..=points {
                for k in 0..d {
                    let u = (radical_inverse(i, BASES[k]) + shift[k]).fract();
                    x[k] = lo[k] + u * (hi[k] - lo[k]);
                }
                acc += f(&x);
            }
            acc / points as f64 * vol
        })
        .collect();
    let r = means.len() as f64;
    let mean = means.iter().sum::<f64>() / r;
    let var = if means.len() > 1 { means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (r - 1.0) } else { 0.0 };
    VolumeEstimate { value: mean, error_estimate: 2.0 * (var / r).sqrt() }
}
