//! Joint visible/hidden state spaces and the marginalization fibration.
//!
//! Joint states `(x_V, x_H)` are flattened row-major in `x_V`:
//! `index = v * |H| + h`. Marginalization is then a contiguous block sum.
//!
//! The vertical space at `p` is the kernel of `d pi_V` (zero visible
//! marginal). Its Fisher-orthogonal complement, the horizontal space, is
//! `{ p(x_H | x_V) c(x_V) : sum c = 0 }`, which `hv_decompose` uses directly.

use std::sync::Arc;

use crate::error::{check_dim, Result};
use crate::scalar::Real;
use crate::simplex::{fisher_inner, Distribution, StateSpace, TangentVector};

/// Product state space of visible and hidden units.
#[derive(Clone, Debug, PartialEq)]
pub struct JointSpace {
    visible: Arc<StateSpace>,
    hidden: Arc<StateSpace>,
    joint: Arc<StateSpace>,
}

impl JointSpace {
    pub fn new(n_visible: usize, n_hidden: usize) -> Result<Self> {
        Self::from_spaces(StateSpace::new(n_visible)?, StateSpace::new(n_hidden)?)
    }

    pub fn from_spaces(visible: StateSpace, hidden: StateSpace) -> Result<Self> {
        let joint = StateSpace::new(visible.size() * hidden.size())?;
        Ok(Self {
            visible: visible.shared(),
            hidden: hidden.shared(),
            joint: joint.shared(),
        })
    }

    pub fn visible(&self) -> &Arc<StateSpace> {
        &self.visible
    }

    pub fn hidden(&self) -> &Arc<StateSpace> {
        &self.hidden
    }

    pub fn joint(&self) -> &Arc<StateSpace> {
        &self.joint
    }

    pub fn n_visible(&self) -> usize {
        self.visible.size()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden.size()
    }

    pub fn n_joint(&self) -> usize {
        self.joint.size()
    }

    #[inline]
    pub fn index(&self, v: usize, h: usize) -> usize {
        debug_assert!(v < self.n_visible() && h < self.n_hidden());
        v * self.n_hidden() + h
    }

    #[inline]
    pub fn split(&self, i: usize) -> (usize, usize) {
        (i / self.n_hidden(), i % self.n_hidden())
    }

    fn block_sums<T: Real>(&self, coords: &[T]) -> Vec<T> {
        coords
            .chunks(self.n_hidden())
            .map(|row| row.iter().copied().sum())
            .collect()
    }
}

/// Conditional distributions `p(x_H | x_V)`, one row per visible state.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalTable<T> {
    n_visible: usize,
    n_hidden: usize,
    values: Vec<T>,
}

impl<T: Real> ConditionalTable<T> {
    /// Builds a table from unnormalized positive rows (row-major in `x_V`).
    pub fn from_rows(js: &JointSpace, raw: &[T]) -> Result<Self> {
        check_dim(js.n_joint(), raw.len())?;
        let mut values = Vec::with_capacity(raw.len());
        for row in raw.chunks(js.n_hidden()) {
            let d = Distribution::normalized(js.hidden().clone(), row)?;
            values.extend_from_slice(d.probs());
        }
        Ok(Self {
            n_visible: js.n_visible(),
            n_hidden: js.n_hidden(),
            values,
        })
    }

    pub fn row(&self, v: usize) -> &[T] {
        &self.values[v * self.n_hidden..(v + 1) * self.n_hidden]
    }

    pub fn get(&self, v: usize, h: usize) -> T {
        self.values[v * self.n_hidden + h]
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    /// Flat values in joint index order.
    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Orthogonal splitting `A = A^H + A^V` of a joint tangent vector.
#[derive(Clone, Debug, PartialEq)]
pub struct HVDecomposition<T> {
    pub horizontal: TangentVector<T>,
    pub vertical: TangentVector<T>,
}

/// Visible marginal `p(x_V) = sum_h p(x_V, x_H)`.
pub fn marginalize_v<T: Real>(js: &JointSpace, p: &Distribution<T>) -> Result<Distribution<T>> {
    check_dim(js.n_joint(), p.len())?;
    Distribution::normalized(js.visible().clone(), &js.block_sums(p.probs()))
}

/// Differential of marginalization: `dpi_V(A)(x_V) = sum_h A(x_V, x_H)`.
pub fn dpi_v<T: Real>(js: &JointSpace, a: &TangentVector<T>) -> Result<TangentVector<T>> {
    check_dim(js.n_joint(), a.len())?;
    let coords = js.block_sums(a.coords());
    let base = match a.base() {
        Some(p) => Some(marginalize_v(js, p)?),
        None => None,
    };
    Ok(TangentVector::from_parts(js.visible().clone(), base, coords))
}

/// Table of `p(x_H | x_V) = p(x_V, x_H) / p(x_V)`.
pub fn conditional_h_given_v<T: Real>(
    js: &JointSpace,
    p: &Distribution<T>,
) -> Result<ConditionalTable<T>> {
    check_dim(js.n_joint(), p.len())?;
    let mut values = Vec::with_capacity(p.len());
    for row in p.probs().chunks(js.n_hidden()) {
        let m: T = row.iter().copied().sum();
        values.extend(row.iter().map(|&x| x / m));
    }
    Ok(ConditionalTable {
        n_visible: js.n_visible(),
        n_hidden: js.n_hidden(),
        values,
    })
}

/// Projection onto the data manifold: `pi_Q(p)(x_V, x_H) = p*(x_V) p(x_H | x_V)`.
pub fn project_to_data_manifold<T: Real>(
    js: &JointSpace,
    p: &Distribution<T>,
    pstar: &Distribution<T>,
) -> Result<Distribution<T>> {
    check_dim(js.n_visible(), pstar.len())?;
    let cond = conditional_h_given_v(js, p)?;
    Ok(compose(js, pstar, &cond))
}

/// Joint distribution `m(x_V) k(x_H | x_V)` from a marginal and a conditional table.
pub fn compose<T: Real>(
    js: &JointSpace,
    marginal: &Distribution<T>,
    cond: &ConditionalTable<T>,
) -> Distribution<T> {
    let raw: Vec<T> = (0..js.n_joint())
        .map(|i| {
            let (v, h) = js.split(i);
            marginal.probs()[v] * cond.get(v, h)
        })
        .collect();
    Distribution::normalized(js.joint().clone(), &raw)
        .expect("product of positive factors is positive")
}

/// Splits `A` at `p` into horizontal `p(x_H|x_V) dpi_V(A)(x_V)` and the
/// vertical remainder.
pub fn hv_decompose<T: Real>(
    js: &JointSpace,
    p: &Distribution<T>,
    a: &TangentVector<T>,
) -> Result<HVDecomposition<T>> {
    check_dim(js.n_joint(), p.len())?;
    check_dim(js.n_joint(), a.len())?;
    let cond = conditional_h_given_v(js, p)?;
    let pushed = js.block_sums(a.coords());
    let horizontal: Vec<T> = (0..js.n_joint())
        .map(|i| {
            let (v, h) = js.split(i);
            cond.get(v, h) * pushed[v]
        })
        .collect();
    let vertical: Vec<T> = a
        .coords()
        .iter()
        .zip(&horizontal)
        .map(|(&x, &hx)| x - hx)
        .collect();
    Ok(HVDecomposition {
        horizontal: TangentVector::based(p, horizontal),
        vertical: TangentVector::based(p, vertical),
    })
}

/// Natural gradient of `D(Q || .)` at `p`: `p - pi_Q(p)`.
pub fn nat_grad_dist_to_q<T: Real>(
    js: &JointSpace,
    p: &Distribution<T>,
    pstar: &Distribution<T>,
) -> Result<TangentVector<T>> {
    let projected = project_to_data_manifold(js, p, pstar)?;
    p.difference(&projected)
}

/// Spanning set of the vertical space: `delta(v,h) - delta(v,h+1)` per `v`.
pub fn vertical_spanning_set<T: Real>(js: &JointSpace) -> Vec<TangentVector<T>> {
    let mut out = Vec::with_capacity(js.n_visible() * (js.n_hidden() - 1));
    for v in 0..js.n_visible() {
        for h in 0..js.n_hidden() - 1 {
            let mut c = vec![T::zero(); js.n_joint()];
            c[js.index(v, h)] = T::one();
            c[js.index(v, h + 1)] = -T::one();
            out.push(TangentVector::from_parts(js.joint().clone(), None, c));
        }
    }
    out
}

/// Spanning set of the horizontal space at `p`:
/// `p(x_H|x_V) (delta(v) - delta(last))` lifted, one per non-last `v`.
pub fn horizontal_spanning_set<T: Real>(
    js: &JointSpace,
    p: &Distribution<T>,
) -> Result<Vec<TangentVector<T>>> {
    let cond = conditional_h_given_v(js, p)?;
    let last = js.n_visible() - 1;
    let mut out = Vec::with_capacity(last);
    for v in 0..last {
        let mut c = vec![T::zero(); js.n_joint()];
        for h in 0..js.n_hidden() {
            c[js.index(v, h)] = cond.get(v, h);
            c[js.index(last, h)] = -cond.get(last, h);
        }
        out.push(TangentVector::based(p, c));
    }
    Ok(out)
}

/// Largest `|g_p(A^H, B)|` over the vertical spanning set.
pub fn horizontal_orthogonality_defect<T: Real>(
    js: &JointSpace,
    p: &Distribution<T>,
    horizontal: &TangentVector<T>,
) -> Result<T> {
    let mut worst = T::zero();
    for b in vertical_spanning_set::<T>(js) {
        worst = worst.max(fisher_inner(p, horizontal, &b)?.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::make_distribution;

    fn js(nv: usize, nh: usize) -> JointSpace {
        JointSpace::new(nv, nh).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn index_maps_are_inverse() {
        let j = js(3, 4);
        for i in 0..12 {
            let (v, h) = j.split(i);
            assert_eq!(j.index(v, h), i);
        }
    }

    #[test]
    fn marginal_examples() {
        let j = js(2, 2);
        let p = make_distribution(j.joint(), &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(close(marginalize_v(&j, &p).unwrap().probs(), &[0.3, 0.7], 1e-15));

        let j23 = js(2, 3);
        let u = Distribution::<f64>::uniform(j23.joint().clone());
        assert!(close(marginalize_v(&j23, &u).unwrap().probs(), &[0.5, 0.5], 1e-15));

        let pv = [0.2, 0.8];
        let ph = [0.1, 0.6, 0.3];
        let raw: Vec<f64> = (0..6).map(|i| pv[i / 3] * ph[i % 3]).collect();
        let prod = make_distribution(j23.joint(), &raw).unwrap();
        assert!(close(marginalize_v(&j23, &prod).unwrap().probs(), &pv, 1e-15));
    }

    #[test]
    fn differential_examples() {
        let j = js(2, 2);
        let a = TangentVector::new(j.joint().clone(), vec![0.1, -0.1, 0.0, 0.0]).unwrap();
        assert!(close(dpi_v(&j, &a).unwrap().coords(), &[0.0, 0.0], 0.0));
        let a = TangentVector::new(j.joint().clone(), vec![0.1, 0.1, -0.1, -0.1]).unwrap();
        assert!(close(dpi_v(&j, &a).unwrap().coords(), &[0.2, -0.2], 1e-15));

        let p = make_distribution(j.joint(), &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let q = make_distribution(j.joint(), &[0.25, 0.25, 0.1, 0.4]).unwrap();
        let d = dpi_v(&j, &p.difference(&q).unwrap()).unwrap();
        let mp = marginalize_v(&j, &p).unwrap();
        let mq = marginalize_v(&j, &q).unwrap();
        assert!(close(d.coords(), mp.difference(&mq).unwrap().coords(), 1e-15));
    }

    #[test]
    fn conditional_examples() {
        let j = js(2, 2);
        let p = make_distribution(j.joint(), &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let c = conditional_h_given_v(&j, &p).unwrap();
        assert!(close(c.row(0), &[1.0 / 3.0, 2.0 / 3.0], 1e-15));
        assert!(close(c.row(1), &[3.0 / 7.0, 4.0 / 7.0], 1e-15));

        let u = Distribution::<f64>::uniform(j.joint().clone());
        let c = conditional_h_given_v(&j, &u).unwrap();
        assert!(close(c.row(1), &[0.5, 0.5], 1e-15));
    }

    #[test]
    fn projection_examples() {
        let j = js(2, 2);
        let u = Distribution::<f64>::uniform(j.joint().clone());
        let pstar = make_distribution(j.visible(), &[0.3, 0.7]).unwrap();
        let q = project_to_data_manifold(&j, &u, &pstar).unwrap();
        assert!(close(q.probs(), &[0.15, 0.15, 0.35, 0.35], 1e-15));

        let p = make_distribution(j.joint(), &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let own = marginalize_v(&j, &p).unwrap();
        let fixed = project_to_data_manifold(&j, &p, &own).unwrap();
        assert!(close(fixed.probs(), p.probs(), 1e-15));
    }

    #[test]
    fn dist_to_q_gradient_examples() {
        let j = js(2, 2);
        let u = Distribution::<f64>::uniform(j.joint().clone());
        let pstar = make_distribution(j.visible(), &[0.3, 0.7]).unwrap();
        let g = nat_grad_dist_to_q(&j, &u, &pstar).unwrap();
        assert!(close(g.coords(), &[0.1, 0.1, -0.1, -0.1], 1e-15));
        let dec = hv_decompose(&j, &u, &g).unwrap();
        assert!(dec.vertical.max_abs() <= 1e-15);
        assert!(close(dec.horizontal.coords(), g.coords(), 1e-15));

        let half = make_distribution(j.visible(), &[0.5, 0.5]).unwrap();
        let g = nat_grad_dist_to_q(&j, &u, &half).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn vertical_vector_has_no_horizontal_part() {
        let j = js(2, 3);
        let p = make_distribution(j.joint(), &[0.1, 0.2, 0.1, 0.3, 0.2, 0.1]).unwrap();
        let a = TangentVector::at(&p, vec![0.05, -0.02, -0.03, 0.0, 0.01, -0.01]).unwrap();
        let dec = hv_decompose(&j, &p, &a).unwrap();
        assert!(dec.horizontal.max_abs() <= 1e-17);
    }

    #[test]
    fn horizontal_spanning_set_is_orthogonal_to_vertical() {
        let j = js(3, 2);
        let p = make_distribution(j.joint(), &[0.1, 0.2, 0.15, 0.05, 0.3, 0.2]).unwrap();
        for h in horizontal_spanning_set(&j, &p).unwrap() {
            assert!(horizontal_orthogonality_defect(&j, &p, &h).unwrap() < 1e-15);
        }
    }
}
