//! The open probability simplex over a finite state space.
//!
//! Points are strictly positive probability vectors; tangent vectors are
//! zero-sum vectors. The Fisher-Rao metric at `p` is
//! `g_p(A, B) = sum_x A(x) B(x) / p(x)`, and the natural gradients of the
//! KL divergence in either argument have closed forms implemented here.

use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::scalar::{l1_norm, Real};

/// Smallest probability accepted; only rejects exact zeros and underflow.
pub const MIN_PROBABILITY: f64 = 1e-300;

/// A finite set of states, optionally labelled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSpace {
    size: usize,
    labels: Option<Vec<String>>,
}

impl StateSpace {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidStateSpace(format!(
                "need at least 2 states, got {size}"
            )));
        }
        Ok(Self { size, labels: None })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        let mut space = Self::new(labels.len())?;
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidStateSpace(format!("duplicate label {l:?}")));
            }
        }
        space.labels = Some(labels);
        Ok(space)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn shared(self) -> Arc<StateSpace> {
        Arc::new(self)
    }
}

/// A strictly positive probability distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution<T> {
    space: Arc<StateSpace>,
    probs: Vec<T>,
}

impl<T: Real> Distribution<T> {
    /// Normalizes a positive vector into a distribution.
    pub fn normalized(space: Arc<StateSpace>, raw: &[T]) -> Result<Self> {
        check_dim(space.size(), raw.len())?;
        check_positive(raw)?;
        let total: T = raw.iter().copied().sum();
        let probs = raw.iter().map(|&x| x / total).collect();
        Ok(Self { space, probs })
    }

    /// Accepts a vector that already sums to one within the construction
    /// tolerance, then renormalizes it.
    pub fn from_probs(space: Arc<StateSpace>, probs: &[T]) -> Result<Self> {
        check_dim(space.size(), probs.len())?;
        check_positive(probs)?;
        let total: T = probs.iter().copied().sum();
        if (total - T::one()).abs() > T::sum_tol() {
            return Err(Error::BadSum {
                sum: total.as_f64(),
                expected: 1.0,
            });
        }
        Self::normalized(space, probs)
    }

    /// Uniform distribution on `space`.
    pub fn uniform(space: Arc<StateSpace>) -> Self {
        let n = space.size();
        let v = T::one() / T::from_usize(n).unwrap();
        Self {
            space,
            probs: vec![v; n],
        }
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> T {
        -neg_entropy(&self.probs)
    }

    /// Max-norm distance to another distribution on the same space.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.probs
            .iter()
            .zip(&other.probs)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// `self - other` as a tangent vector based at `self`.
    pub fn difference(&self, other: &Self) -> Result<TangentVector<T>> {
        check_dim(self.len(), other.len())?;
        let coords = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(TangentVector::from_parts(
            self.space.clone(),
            Some(self.clone()),
            coords,
        ))
    }

    /// Moves along a tangent direction: `self + t * dir`. Fails when the
    /// result leaves the open simplex.
    pub fn step(&self, dir: &TangentVector<T>, t: T) -> Result<Self> {
        check_dim(self.len(), dir.len())?;
        let raw: Vec<T> = self
            .probs
            .iter()
            .zip(dir.coords())
            .map(|(&p, &a)| p + t * a)
            .collect();
        Self::normalized(self.space.clone(), &raw)
    }
}

/// `sum_x p(x) ln p(x)`, the negative entropy.
pub fn neg_entropy<T: Real>(p: &[T]) -> T {
    p.iter().map(|&x| x * x.ln()).sum()
}

fn check_positive<T: Real>(raw: &[T]) -> Result<()> {
    for (index, &v) in raw.iter().enumerate() {
        if !(v > T::zero()) || !v.is_finite() || v.as_f64() < MIN_PROBABILITY {
            return Err(Error::NonPositiveEntry {
                index,
                value: v.as_f64(),
            });
        }
    }
    Ok(())
}

/// Normalizes a positive raw vector into a distribution on a fresh space.
pub fn make_distribution<T: Real>(space: &Arc<StateSpace>, raw: &[T]) -> Result<Distribution<T>> {
    Distribution::normalized(space.clone(), raw)
}

/// A zero-sum vector, optionally anchored at a base point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector<T> {
    space: Arc<StateSpace>,
    base: Option<Distribution<T>>,
    coords: Vec<T>,
}

impl<T: Real> TangentVector<T> {
    /// Validates the zero-sum constraint. The tolerance is `sum_tol`
    /// scaled by `max(1, |coords|_1)`.
    pub fn new(space: Arc<StateSpace>, coords: Vec<T>) -> Result<Self> {
        check_dim(space.size(), coords.len())?;
        let total: T = coords.iter().copied().sum();
        let scale = T::one().max(l1_norm(&coords));
        if total.abs() > T::sum_tol() * scale {
            return Err(Error::BadSum {
                sum: total.as_f64(),
                expected: 0.0,
            });
        }
        Ok(Self {
            space,
            base: None,
            coords,
        })
    }

    /// Validated tangent vector at `base`.
    pub fn at(base: &Distribution<T>, coords: Vec<T>) -> Result<Self> {
        let mut v = Self::new(base.space().clone(), coords)?;
        v.base = Some(base.clone());
        Ok(v)
    }

    /// For vectors that are zero-sum by construction.
    pub(crate) fn from_parts(
        space: Arc<StateSpace>,
        base: Option<Distribution<T>>,
        coords: Vec<T>,
    ) -> Self {
        debug_assert_eq!(space.size(), coords.len());
        Self {
            space,
            base,
            coords,
        }
    }

    pub(crate) fn based(base: &Distribution<T>, coords: Vec<T>) -> Self {
        Self::from_parts(base.space().clone(), Some(base.clone()), coords)
    }

    pub fn zero(base: &Distribution<T>) -> Self {
        Self::based(base, vec![T::zero(); base.len()])
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn base(&self) -> Option<&Distribution<T>> {
        self.base.as_ref()
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<T> {
        self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn max_abs(&self) -> T {
        crate::scalar::max_abs(&self.coords)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            space: self.space.clone(),
            base: self.base.clone(),
            coords: self.coords.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.len(), other.len())?;
        Ok(Self {
            space: self.space.clone(),
            base: self.base.clone(),
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-T::one()))
    }

    /// Coordinates divided by `sqrt(p)`; the Fisher-Rao inner product at `p`
    /// becomes the Euclidean dot product in these coordinates.
    pub fn whitened(&self, p: &Distribution<T>) -> Vec<T> {
        whiten(p, &self.coords)
    }
}

pub(crate) fn whiten<T: Real>(p: &Distribution<T>, coords: &[T]) -> Vec<T> {
    coords
        .iter()
        .zip(p.probs())
        .map(|(&a, &px)| a / px.sqrt())
        .collect()
}

/// Fisher-Rao inner product `sum_x A(x) B(x) / p(x)`.
pub fn fisher_inner<T: Real>(
    p: &Distribution<T>,
    a: &TangentVector<T>,
    b: &TangentVector<T>,
) -> Result<T> {
    check_dim(p.len(), a.len())?;
    check_dim(p.len(), b.len())?;
    Ok(fisher_inner_raw(p.probs(), a.coords(), b.coords()))
}

pub(crate) fn fisher_inner_raw<T: Real>(p: &[T], a: &[T], b: &[T]) -> T {
    p.iter()
        .zip(a)
        .zip(b)
        .map(|((&px, &ax), &bx)| ax * bx / px)
        .sum()
}

/// Fisher-Rao length of a tangent vector at `p`.
pub fn fisher_norm<T: Real>(p: &Distribution<T>, a: &TangentVector<T>) -> Result<T> {
    fisher_inner(p, a, a).map(|x| x.max(T::zero()).sqrt())
}

/// `D(q || p) = sum_x q(x) ln(q(x) / p(x))` in nats.
pub fn kl_divergence<T: Real>(q: &Distribution<T>, p: &Distribution<T>) -> Result<T> {
    check_dim(q.len(), p.len())?;
    Ok(kl_raw(q.probs(), p.probs()))
}

pub(crate) fn kl_raw<T: Real>(q: &[T], p: &[T]) -> T {
    q.iter()
        .zip(p)
        .map(|(&qx, &px)| qx * (qx / px).ln())
        .sum()
}

/// Natural gradient of `p -> D(q || p)` at `p`: the vector `p - q`.
pub fn nat_grad_kl_second<T: Real>(
    p: &Distribution<T>,
    q: &Distribution<T>,
) -> Result<TangentVector<T>> {
    p.difference(q)
}

/// Natural gradient of `q -> D(q || p)` at `q`:
/// `q(x) (ln(q(x)/p(x)) - E_q[ln(q/p)])`.
pub fn nat_grad_kl_first<T: Real>(
    q: &Distribution<T>,
    p: &Distribution<T>,
) -> Result<TangentVector<T>> {
    check_dim(q.len(), p.len())?;
    let log_ratio: Vec<T> = q
        .probs()
        .iter()
        .zip(p.probs())
        .map(|(&qx, &px)| (qx / px).ln())
        .collect();
    let mean: T = q.probs().iter().zip(&log_ratio).map(|(&qx, &l)| qx * l).sum();
    let coords = q
        .probs()
        .iter()
        .zip(&log_ratio)
        .map(|(&qx, &l)| qx * (l - mean))
        .collect();
    Ok(TangentVector::based(q, coords))
}

/// Converts Euclidean partials `df/dp(x)` into the Fisher-Rao gradient
/// `p(x) (df/dp(x) - sum_x' p(x') df/dp(x'))`.
pub fn nat_grad_from_partials<T: Real>(
    p: &Distribution<T>,
    partials: &[T],
) -> Result<TangentVector<T>> {
    check_dim(p.len(), partials.len())?;
    let mean: T = p.probs().iter().zip(partials).map(|(&px, &d)| px * d).sum();
    let coords = p
        .probs()
        .iter()
        .zip(partials)
        .map(|(&px, &d)| px * (d - mean))
        .collect();
    Ok(TangentVector::based(p, coords))
}
