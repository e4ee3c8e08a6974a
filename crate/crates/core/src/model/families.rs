use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::ParametricModel;
use crate::error::{check_dim, Error, Result};
use crate::fibration::{compose, ConditionalTable, JointSpace};
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::simplex::{Distribution, StateSpace, TangentVector};

fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let top = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&l| (l - top).exp()).collect();
    let z: T = e.iter().copied().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn normal_matrix<T: Real, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
}

/// `p = softmax(offset + W theta)`.
///
/// [`SoftmaxModel::full`] is the log-odds chart of the whole simplex
/// relative to the last state.
#[derive(Clone, Debug)]
pub struct SoftmaxModel<T> {
    space: Arc<StateSpace>,
    joint: Option<JointSpace>,
    weights: Matrix<T>,
    offset: Vec<T>,
}

impl<T: Real> SoftmaxModel<T> {
    pub fn new(space: Arc<StateSpace>, weights: Matrix<T>, offset: Vec<T>) -> Result<Self> {
        check_dim(space.size(), weights.rows())?;
        check_dim(space.size(), offset.len())?;
        Ok(Self {
            space,
            joint: None,
            weights,
            offset,
        })
    }

    /// Log-odds against the last state; `dim = size - 1`.
    pub fn full(space: Arc<StateSpace>) -> Self {
        let n = space.size();
        let weights = Matrix::from_fn(n, n - 1, |i, j| if i == j { T::one() } else { T::zero() });
        Self {
            space,
            joint: None,
            weights,
            offset: vec![T::zero(); n],
        }
    }

    /// The full model on a joint space, carrying its visible/hidden split.
    pub fn full_joint(js: &JointSpace) -> Self {
        let mut m = Self::full(js.joint().clone());
        m.joint = Some(js.clone());
        m
    }

    /// Random linear-softmax family with standard normal weights.
    pub fn random<R: Rng + ?Sized>(space: Arc<StateSpace>, dim: usize, rng: &mut R) -> Self {
        let n = space.size();
        let weights = normal_matrix(rng, n, dim);
        Self {
            space,
            joint: None,
            weights,
            offset: vec![T::zero(); n],
        }
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    /// Log-odds coordinates of `p` in the [`SoftmaxModel::full`] chart.
    pub fn log_odds(p: &Distribution<T>) -> Vec<T> {
        let probs = p.probs();
        let last = probs[probs.len() - 1];
        probs[..probs.len() - 1].iter().map(|&x| (x / last).ln()).collect()
    }

    fn probs(&self, theta: &[T]) -> Vec<T> {
        let wt = self.weights.mul_vec(theta);
        let logits: Vec<T> = self.offset.iter().zip(&wt).map(|(&o, &w)| o + w).collect();
        softmax(&logits)
    }

    /// Raw derivative columns `d p / d theta_j` at probabilities `p`.
    fn derivative_columns(&self, p: &[T]) -> Vec<Vec<T>> {
        (0..self.weights.cols())
            .map(|j| {
                let mean: T = p.iter().enumerate().map(|(x, &px)| px * self.weights[(x, j)]).sum();
                p.iter()
                    .enumerate()
                    .map(|(x, &px)| px * (self.weights[(x, j)] - mean))
                    .collect()
            })
            .collect()
    }
}

impl<T: Real> ParametricModel<T> for SoftmaxModel<T> {
    fn dim(&self) -> usize {
        self.weights.cols()
    }

    fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    fn joint_space(&self) -> Option<&JointSpace> {
        self.joint.as_ref()
    }

    fn eval(&self, theta: &[T]) -> Result<Distribution<T>> {
        check_dim(self.dim(), theta.len())?;
        Distribution::normalized(self.space.clone(), &self.probs(theta))
    }

    fn jacobian(&self, theta: &[T]) -> Result<Vec<TangentVector<T>>> {
        let p = self.eval(theta)?;
        Ok(self
            .derivative_columns(p.probs())
            .into_iter()
            .map(|c| TangentVector::based(&p, c))
            .collect())
    }
}

/// Conditional family `k(x_H | x_V) = softmax_h(offset_v + W_v beta)`.
#[derive(Clone, Debug)]
pub struct ConditionalSoftmax<T> {
    js: JointSpace,
    /// One `|H| x dim` block per visible state.
    weights: Vec<Matrix<T>>,
    offsets: Vec<T>,
}

impl<T: Real> ConditionalSoftmax<T> {
    pub fn new(js: &JointSpace, weights: Vec<Matrix<T>>, offsets: Vec<T>) -> Result<Self> {
        check_dim(js.n_visible(), weights.len())?;
        check_dim(js.n_joint(), offsets.len())?;
        let dim = weights[0].cols();
        for w in &weights {
            check_dim(js.n_hidden(), w.rows())?;
            check_dim(dim, w.cols())?;
        }
        Ok(Self {
            js: js.clone(),
            weights,
            offsets,
        })
    }

    /// Independent log-odds per row; `dim = |V| (|H| - 1)`.
    pub fn full(js: &JointSpace) -> Self {
        let (nv, nh) = (js.n_visible(), js.n_hidden());
        let dim = nv * (nh - 1);
        let weights = (0..nv)
            .map(|v| {
                Matrix::from_fn(nh, dim, |h, j| {
                    if h < nh - 1 && j == v * (nh - 1) + h {
                        T::one()
                    } else {
                        T::zero()
                    }
                })
            })
            .collect();
        Self {
            js: js.clone(),
            weights,
            offsets: vec![T::zero(); js.n_joint()],
        }
    }

    /// Random low-dimensional conditional family with standard normal
    /// weights and offsets.
    pub fn random<R: Rng + ?Sized>(js: &JointSpace, dim: usize, rng: &mut R) -> Self {
        let weights = (0..js.n_visible())
            .map(|_| normal_matrix(rng, js.n_hidden(), dim))
            .collect();
        let offsets = (0..js.n_joint())
            .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self {
            js: js.clone(),
            weights,
            offsets,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn table(&self, beta: &[T]) -> Result<ConditionalTable<T>> {
        check_dim(self.dim(), beta.len())?;
        let mut raw = Vec::with_capacity(self.js.n_joint());
        for (v, w) in self.weights.iter().enumerate() {
            let wt = w.mul_vec(beta);
            let logits: Vec<T> = (0..self.js.n_hidden())
                .map(|h| self.offsets[self.js.index(v, h)] + wt[h])
                .collect();
            raw.extend(softmax(&logits));
        }
        ConditionalTable::from_rows(&self.js, &raw)
    }

    /// `d k(x_H|x_V) / d beta_j` for every `j`, flat in joint order.
    fn derivative_columns(&self, table: &ConditionalTable<T>) -> Vec<Vec<T>> {
        let nh = self.js.n_hidden();
        (0..self.dim())
            .map(|j| {
                let mut col = Vec::with_capacity(self.js.n_joint());
                for (v, w) in self.weights.iter().enumerate() {
                    let row = table.row(v);
                    let mean: T = (0..nh).map(|h| row[h] * w[(h, j)]).sum();
                    col.extend((0..nh).map(|h| row[h] * (w[(h, j)] - mean)));
                }
                col
            })
            .collect()
    }
}

/// Shared evaluation for models of the form `m(x_V) k(x_H | x_V)`.
fn factored_eval<T: Real>(
    js: &JointSpace,
    visible: &SoftmaxModel<T>,
    conditional: &ConditionalSoftmax<T>,
    alpha: &[T],
    beta: &[T],
) -> Result<(Distribution<T>, Distribution<T>, ConditionalTable<T>)> {
    let m = visible.eval(alpha)?;
    let k = conditional.table(beta)?;
    Ok((compose(js, &m, &k), m, k))
}

/// Columns `(d m) k` for the visible-factor parameters and `m (d k)` for
/// the conditional parameters.
fn factored_columns<T: Real>(
    js: &JointSpace,
    visible: &SoftmaxModel<T>,
    conditional: &ConditionalSoftmax<T>,
    m: &Distribution<T>,
    k: &ConditionalTable<T>,
) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
    let dm = visible.derivative_columns(m.probs());
    let dk = conditional.derivative_columns(k);
    let alpha_cols = dm
        .iter()
        .map(|c| {
            (0..js.n_joint())
                .map(|i| {
                    let (v, h) = js.split(i);
                    c[v] * k.get(v, h)
                })
                .collect()
        })
        .collect();
    let beta_cols = dk
        .iter()
        .map(|c| {
            (0..js.n_joint())
                .map(|i| m.probs()[js.split(i).0] * c[i])
                .collect()
        })
        .collect();
    (alpha_cols, beta_cols)
}

/// Product model `m(x_V; alpha) k(x_H | x_V; beta)` with disjoint parameter
/// blocks `theta = (alpha, beta)`.
///
/// The alpha directions are horizontal and the beta directions vertical,
/// so the model is cylindrical at every point.
#[derive(Clone, Debug)]
pub struct ProductModel<T> {
    js: JointSpace,
    visible: SoftmaxModel<T>,
    conditional: ConditionalSoftmax<T>,
}

impl<T: Real> ProductModel<T> {
    pub fn new(js: &JointSpace, visible: SoftmaxModel<T>, conditional: ConditionalSoftmax<T>) -> Result<Self> {
        check_dim(js.n_visible(), visible.space().size())?;
        Ok(Self {
            js: js.clone(),
            visible,
            conditional,
        })
    }

    /// Full visible log-odds and full conditional log-odds (the V -> H chain).
    pub fn full_chain(js: &JointSpace) -> Self {
        Self {
            js: js.clone(),
            visible: SoftmaxModel::full(js.visible().clone()),
            conditional: ConditionalSoftmax::full(js),
        }
    }

    /// Full visible factor with a random `cond_dim`-dimensional conditional
    /// family, a proper lower-dimensional cylindrical submodel.
    pub fn random_restricted<R: Rng + ?Sized>(js: &JointSpace, cond_dim: usize, rng: &mut R) -> Self {
        Self {
            js: js.clone(),
            visible: SoftmaxModel::full(js.visible().clone()),
            conditional: ConditionalSoftmax::random(js, cond_dim, rng),
        }
    }

    pub fn visible_dim(&self) -> usize {
        self.visible.dim()
    }

    /// The image model `M_V`.
    pub fn visible_model(&self) -> &SoftmaxModel<T> {
        &self.visible
    }

    /// Parameters of `M_V` at the image of `theta`.
    pub fn visible_params<'a>(&self, theta: &'a [T]) -> &'a [T] {
        &theta[..self.visible.dim()]
    }
}

impl<T: Real> ParametricModel<T> for ProductModel<T> {
    fn dim(&self) -> usize {
        self.visible.dim() + self.conditional.dim()
    }

    fn space(&self) -> &Arc<StateSpace> {
        self.js.joint()
    }

    fn joint_space(&self) -> Option<&JointSpace> {
        Some(&self.js)
    }

    fn eval(&self, theta: &[T]) -> Result<Distribution<T>> {
        check_dim(self.dim(), theta.len())?;
        let (alpha, beta) = theta.split_at(self.visible.dim());
        Ok(factored_eval(&self.js, &self.visible, &self.conditional, alpha, beta)?.0)
    }

    fn jacobian(&self, theta: &[T]) -> Result<Vec<TangentVector<T>>> {
        check_dim(self.dim(), theta.len())?;
        let (alpha, beta) = theta.split_at(self.visible.dim());
        let (p, m, k) = factored_eval(&self.js, &self.visible, &self.conditional, alpha, beta)?;
        let (a, b) = factored_columns(&self.js, &self.visible, &self.conditional, &m, &k);
        Ok(a.into_iter()
            .chain(b)
            .map(|c| TangentVector::based(&p, c))
            .collect())
    }
}

/// Tied model `m(x_V; theta) k(x_H | x_V; theta)`: both factors read the
/// same parameters, so tangent directions are generically neither
/// horizontal nor vertical.
#[derive(Clone, Debug)]
pub struct TiedModel<T> {
    js: JointSpace,
    visible: SoftmaxModel<T>,
    conditional: ConditionalSoftmax<T>,
}

impl<T: Real> TiedModel<T> {
    pub fn new(js: &JointSpace, visible: SoftmaxModel<T>, conditional: ConditionalSoftmax<T>) -> Result<Self> {
        check_dim(js.n_visible(), visible.space().size())?;
        if visible.dim() != conditional.dim() {
            return Err(Error::DimensionMismatch {
                expected: visible.dim(),
                found: conditional.dim(),
            });
        }
        Ok(Self {
            js: js.clone(),
            visible,
            conditional,
        })
    }

    /// Random `dim`-parameter tied family (standard normal weights).
    pub fn random<R: Rng + ?Sized>(js: &JointSpace, dim: usize, rng: &mut R) -> Self {
        Self {
            js: js.clone(),
            visible: SoftmaxModel::random(js.visible().clone(), dim, rng),
            conditional: ConditionalSoftmax::random(js, dim, rng),
        }
    }

    pub fn visible_model(&self) -> &SoftmaxModel<T> {
        &self.visible
    }

    pub fn visible_params<'a>(&self, theta: &'a [T]) -> &'a [T] {
        theta
    }
}

impl<T: Real> ParametricModel<T> for TiedModel<T> {
    fn dim(&self) -> usize {
        self.visible.dim()
    }

    fn space(&self) -> &Arc<StateSpace> {
        self.js.joint()
    }

    fn joint_space(&self) -> Option<&JointSpace> {
        Some(&self.js)
    }

    fn eval(&self, theta: &[T]) -> Result<Distribution<T>> {
        check_dim(self.dim(), theta.len())?;
        Ok(factored_eval(&self.js, &self.visible, &self.conditional, theta, theta)?.0)
    }

    fn jacobian(&self, theta: &[T]) -> Result<Vec<TangentVector<T>>> {
        check_dim(self.dim(), theta.len())?;
        let (p, m, k) = factored_eval(&self.js, &self.visible, &self.conditional, theta, theta)?;
        let (a, b) = factored_columns(&self.js, &self.visible, &self.conditional, &m, &k);
        Ok(a.into_iter()
            .zip(b)
            .map(|(x, y)| {
                let c = x.iter().zip(&y).map(|(&u, &w)| u + w).collect();
                TangentVector::based(&p, c)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd_check<M: ParametricModel<f64>>(m: &M, theta: &[f64]) {
        let h = 1e-5;
        let jac = m.jacobian(theta).unwrap();
        for (i, col) in jac.iter().enumerate() {
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[i] += h;
            tm[i] -= h;
            let pp = m.eval(&tp).unwrap();
            let pm = m.eval(&tm).unwrap();
            for x in 0..col.len() {
                let fd = (pp.probs()[x] - pm.probs()[x]) / (2.0 * h);
                let scale = col.max_abs().max(1e-300);
                assert!((fd - col.coords()[x]).abs() / scale < 1e-6, "col {i} state {x}");
            }
            assert!(col.coords().iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let js = JointSpace::new(3, 2).unwrap();
        fd_check(&SoftmaxModel::full_joint(&js), &[0.1, -0.2, 0.3, 0.0, 0.5]);
        let prod = ProductModel::random_restricted(&js, 2, &mut rng);
        fd_check(&prod, &[0.3, -0.4, 0.7, 0.2]);
        fd_check(&ProductModel::full_chain(&js), &[0.3, -0.4, 0.7, 0.2, -1.0]);
        let tied = TiedModel::random(&js, 1, &mut rng);
        fd_check(&tied, &[0.6]);
    }

    #[test]
    fn log_odds_round_trip() {
        let space = StateSpace::new(3).unwrap().shared();
        let m = SoftmaxModel::<f64>::full(space);
        let theta = [0.4, -1.2];
        let back = SoftmaxModel::log_odds(&m.eval(&theta).unwrap());
        assert!((back[0] - 0.4).abs() < 1e-14 && (back[1] + 1.2).abs() < 1e-14);
    }

    #[test]
    fn tied_rejects_mismatched_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let js = JointSpace::new(2, 2).unwrap();
        let v = SoftmaxModel::<f64>::random(js.visible().clone(), 2, &mut rng);
        let c = ConditionalSoftmax::random(&js, 1, &mut rng);
        assert!(TiedModel::new(&js, v, c).is_err());
    }
}
