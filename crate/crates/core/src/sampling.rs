//! Seeded random draws for property tests and experiments.
//!
//! All randomness flows through [`Rng64`], ChaCha8 seeded from a 64-bit
//! integer, so a seed fully determines every draw.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::scalar::Real;
use crate::simplex::{Distribution, StateSpace, TangentVector};

/// The crate's deterministic generator.
pub type Rng64 = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Flat Dirichlet draw: normalized independent `Exp(1)` variates.
pub fn random_distribution<T: Real, R: Rng + ?Sized>(space: &Arc<StateSpace>, rng: &mut R) -> Distribution<T> {
    let raw: Vec<T> = (0..space.size())
        .map(|_| {
            // Exp(1) is positive with probability one; guard the measure-zero case.
            let e: f64 = rng.sample(Exp1);
            T::lit(e.max(1e-300))
        })
        .collect();
    Distribution::normalized(space.clone(), &raw).expect("exponential variates are positive")
}

/// Flat Dirichlet draw mixed with the uniform distribution:
/// `(1 - w) d + w / n`, so every entry is at least `w / n`.
pub fn random_interior_distribution<T: Real, R: Rng + ?Sized>(
    space: &Arc<StateSpace>,
    uniform_weight: f64,
    rng: &mut R,
) -> Distribution<T> {
    let d: Distribution<T> = random_distribution(space, rng);
    let w = T::lit(uniform_weight);
    let u = w / T::lit(space.size() as f64);
    let raw: Vec<T> = d.probs().iter().map(|&x| (T::one() - w) * x + u).collect();
    Distribution::normalized(space.clone(), &raw).expect("mixture with uniform is positive")
}

/// Standard normal vector projected onto the zero-sum hyperplane, based at `p`.
pub fn random_tangent<T: Real, R: Rng + ?Sized>(p: &Distribution<T>, rng: &mut R) -> TangentVector<T> {
    let raw: Vec<f64> = (0..p.len()).map(|_| rng.sample(StandardNormal)).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let coords = raw.iter().map(|&x| T::lit(x - mean)).collect();
    TangentVector::at(p, coords).expect("centered vector is zero-sum")
}

/// Standard normal parameter vector scaled by `scale`.
pub fn random_params<T: Real, R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> Vec<T> {
    (0..dim)
        .map(|_| T::lit(scale * rng.sample::<f64, _>(StandardNormal)))
        .collect()
}
