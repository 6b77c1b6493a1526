//! Seedable, portable random numbers.
//!
//! The generator is xoshiro256++ seeded through SplitMix64 (`seed_from_u64`).
//! Conversions are fixed so streams can be reproduced elsewhere:
//!
//! * uniform `[0, 1)`: `(next_u64() >> 11) * 2^-53`
//! * standard normal: Box-Muller on consecutive uniforms `u1, u2`, emitting
//!   `r cos(2 pi u2)` then `r sin(2 pi u2)` with `r = sqrt(-2 ln(1 - u1))`.

use rand_xoshiro::rand_core::RngCore;
pub use rand_xoshiro::rand_core::SeedableRng;
pub use rand_xoshiro::Xoshiro256PlusPlus as Rng64;

use crate::numerics::Matrix;

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

#[inline]
pub fn uniform01(rng: &mut Rng64) -> f64 {
    (rng.next_u64() >> 11) as f64 * TWO_POW_NEG_53
}

#[inline]
pub fn uniform(rng: &mut Rng64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform01(rng)
}

/// Fills `out` with i.i.d. `N(0, std^2)` samples.
pub fn fill_normal(rng: &mut Rng64, out: &mut [f64], std: f64) {
    let mut chunks = out.chunks_mut(2);
    for pair in &mut chunks {
        let u1 = uniform01(rng);
        let u2 = uniform01(rng);
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        pair[0] = std * r * c;
        if pair.len() > 1 {
            pair[1] = std * r * s;
        }
    }
}

pub fn normal_matrix(rng: &mut Rng64, rows: usize, cols: usize, std: f64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    fill_normal(rng, m.data_mut(), std);
    m
}

pub fn uniform_matrix(rng: &mut Rng64, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    m.data_mut().iter_mut().for_each(|x| *x = uniform(rng, lo, hi));
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_in_range_and_reproducible() {
        let mut a = Rng64::seed_from_u64(42);
        let mut b = Rng64::seed_from_u64(42);
        for _ in 0..1000 {
            let x = uniform01(&mut a);
            assert!((0.0..1.0).contains(&x));
            assert_eq!(x.to_bits(), uniform01(&mut b).to_bits());
        }
    }

    #[test]
    fn normal_moments() {
        let mut rng = Rng64::seed_from_u64(1);
        let mut v = vec![0.0; 200_001];
        fill_normal(&mut rng, &mut v, 2.0);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02);
        assert!((var - 4.0).abs() < 0.06);
    }
}
