//! Finite-difference natural-gradient oracle.
//!
//! Central differences are taken on unnormalized coordinates `p(x) ± h`
//! and converted to a Fisher-Rao gradient with
//! [`nat_grad_from_partials`](crate::simplex::nat_grad_from_partials). The
//! objective must therefore accept positive vectors that do not sum to one
//! (every objective in this crate does).

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::simplex::{nat_grad_from_partials, Distribution, TangentVector};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Central-difference partials of `f` at the raw coordinates of `p`.
pub fn fd_partials<T: Real, F: Fn(&[T]) -> T>(f: F, p: &Distribution<T>, h: T) -> Result<Vec<T>> {
    let mut x = p.probs().to_vec();
    let two_h = h + h;
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x[i];
        if !(orig - h > T::zero()) {
            return Err(Error::StepTooLarge(format!(
                "probe p[{i}] - h = {:e} leaves the positive orthant",
                (orig - h).as_f64()
            )));
        }
        x[i] = orig + h;
        let up = f(&x);
        x[i] = orig - h;
        let down = f(&x);
        x[i] = orig;
        out.push((up - down) / two_h);
    }
    Ok(out)
}

/// Finite-difference approximation of the Fisher-Rao gradient of `f` at `p`.
pub fn fd_natural_gradient<T: Real, F: Fn(&[T]) -> T>(
    f: F,
    p: &Distribution<T>,
    h: T,
) -> Result<TangentVector<T>> {
    let partials = fd_partials(f, p, h)?;
    nat_grad_from_partials(p, &partials)
}

/// `max|a - b| / max(max|b|, floor)`.
pub fn relative_error<T: Real>(a: &[T], b: &[T], floor: T) -> T {
    let diff = a
        .iter()
        .zip(b)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()));
    diff / crate::scalar::max_abs(b).max(floor)
}

/// Derivative of `f` along `t -> p + tA` at `t = 0` by central difference.
pub fn fd_directional<T: Real, F: Fn(&[T]) -> T>(
    f: F,
    p: &Distribution<T>,
    a: &TangentVector<T>,
    h: T,
) -> Result<T> {
    let shift = |t: T| -> Result<Vec<T>> {
        let x: Vec<T> = p.probs().iter().zip(a.coords()).map(|(&px, &ax)| px + t * ax).collect();
        if x.iter().any(|&v| !(v > T::zero())) {
            return Err(Error::StepTooLarge("directional probe left the simplex".into()));
        }
        Ok(x)
    };
    let up = f(&shift(h)?);
    let down = f(&shift(-h)?);
    Ok((up - down) / (h + h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_distribution, rng_from_seed};
    use crate::simplex::{kl_raw, nat_grad_kl_second, StateSpace};

    #[test]
    fn recovers_kl_gradient() {
        let mut rng = rng_from_seed(11);
        let space = StateSpace::new(5).unwrap().shared();
        let p = random_distribution::<f64, _>(&space, &mut rng);
        let q = random_distribution::<f64, _>(&space, &mut rng);
        let fd = fd_natural_gradient(|x| kl_raw(q.probs(), x), &p, 1e-5).unwrap();
        let exact = nat_grad_kl_second(&p, &q).unwrap();
        assert!(relative_error(fd.coords(), exact.coords(), 1e-12) < 1e-6);
    }

    #[test]
    fn constant_objective_has_zero_gradient() {
        let space = StateSpace::new(3).unwrap().shared();
        let p = Distribution::<f64>::uniform(space);
        let fd = fd_natural_gradient(|_| 4.2, &p, 1e-5).unwrap();
        assert!(fd.max_abs() <= 1e-9);
    }

    #[test]
    fn second_order_convergence() {
        let mut rng = rng_from_seed(5);
        let space = StateSpace::new(4).unwrap().shared();
        let p = random_distribution::<f64, _>(&space, &mut rng);
        let q = random_distribution::<f64, _>(&space, &mut rng);
        let exact = nat_grad_kl_second(&p, &q).unwrap();
        let err = |h: f64| {
            let fd = fd_natural_gradient(|x| kl_raw(q.probs(), x), &p, h).unwrap();
            relative_error(fd.coords(), exact.coords(), 1e-12)
        };
        // large steps so truncation dominates rounding
        let ratio = err(2e-2) / err(1e-2);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn step_too_large_detected() {
        let space = StateSpace::new(2).unwrap().shared();
        let p = Distribution::<f64>::uniform(space);
        assert!(matches!(
            fd_natural_gradient(|x| x[0], &p, 0.6),
            Err(Error::StepTooLarge(_))
        ));
    }
}
