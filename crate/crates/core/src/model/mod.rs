//! Parametric submodels of the simplex and their induced geometry.
//!
//! A [`ParametricModel`] maps parameters `theta` to distributions and
//! exposes the Jacobian columns `d p / d theta_i` as tangent vectors. From
//! these the Fisher matrix, the Fisher-orthogonal projection onto the model
//! tangent space, parameter-space natural gradients, the cylindricity test
//! and the pushforward invariance gap are computed.
//!
//! All Fisher-metric linear algebra runs in whitened coordinates
//! `A(x) / sqrt(p(x))`, where the Fisher-Rao inner product is Euclidean.

mod families;

pub use families::{ConditionalSoftmax, ProductModel, SoftmaxModel, TiedModel};

use crate::error::{check_dim, Error, Result};
use crate::fibration::{
    conditional_h_given_v, dpi_v, marginalize_v, nat_grad_dist_to_q, JointSpace,
};
use crate::linalg::{
    cholesky, cholesky_solve, orthonormal_basis, residual_after_projection, svd_columns,
    symmetric_eigen, Matrix,
};
use crate::scalar::Real;
use crate::simplex::{
    fisher_inner_raw, fisher_norm, nat_grad_from_partials, whiten, Distribution, StateSpace,
    TangentVector,
};

use std::sync::Arc;

/// A smooth map `theta -> p(.; theta)` into the open simplex.
///
/// Implementations must be pure functions of `theta`.
pub trait ParametricModel<T: Real> {
    /// Number of parameters.
    fn dim(&self) -> usize;

    /// State space the model maps into.
    fn space(&self) -> &Arc<StateSpace>;

    /// Joint visible/hidden structure, when the model lives in `P_{V,H}`.
    fn joint_space(&self) -> Option<&JointSpace> {
        None
    }

    fn eval(&self, theta: &[T]) -> Result<Distribution<T>>;

    /// Columns `d p / d theta_i`, each based at `eval(theta)`.
    fn jacobian(&self, theta: &[T]) -> Result<Vec<TangentVector<T>>>;
}

impl<T: Real, M: ParametricModel<T> + ?Sized> ParametricModel<T> for Box<M> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn space(&self) -> &Arc<StateSpace> {
        (**self).space()
    }
    fn joint_space(&self) -> Option<&JointSpace> {
        (**self).joint_space()
    }
    fn eval(&self, theta: &[T]) -> Result<Distribution<T>> {
        (**self).eval(theta)
    }
    fn jacobian(&self, theta: &[T]) -> Result<Vec<TangentVector<T>>> {
        (**self).jacobian(theta)
    }
}

/// Gram matrix `G_ij = g_p(d_i p, d_j p)` at a parameter point.
#[derive(Clone, Debug)]
pub struct FisherMatrix<T> {
    pub entries: Matrix<T>,
    /// `lambda_max / lambda_min` of `G`.
    pub condition: T,
    /// Singular values of the whitened Jacobian, descending.
    pub jacobian_singular_values: Vec<T>,
    pub theta: Vec<T>,
}

impl<T: Real> FisherMatrix<T> {
    /// Builds the Gram matrix of the given Jacobian columns at `p`,
    /// rejecting rank-deficient Jacobians.
    pub fn from_jacobian(
        p: &Distribution<T>,
        columns: &[TangentVector<T>],
        theta: &[T],
        rank_tol: T,
    ) -> Result<Self> {
        let d = columns.len();
        let white: Vec<Vec<T>> = columns.iter().map(|c| whiten(p, c.coords())).collect();
        let svd = svd_columns(&white);
        let top = svd.s.first().copied().unwrap_or(T::zero());
        let low = svd.s.last().copied().unwrap_or(T::zero());
        if d > 0 && !(low > rank_tol * top) {
            return Err(Error::SingularPoint {
                singular_value: low.as_f64(),
                threshold: rank_tol.as_f64(),
                node: None,
            });
        }
        let mut g = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let v = fisher_inner_raw(p.probs(), columns[i].coords(), columns[j].coords());
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        let condition = if d > 0 { (top / low) * (top / low) } else { T::one() };
        Ok(Self {
            entries: g,
            condition,
            jacobian_singular_values: svd.s,
            theta: theta.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.rows()
    }

    /// Solves `G u = rhs`.
    ///
    /// Uses Cholesky; when `lambda_min < 1e-12 lambda_max` (or Cholesky
    /// fails) it falls back to an eigenvalue-clipped pseudo-solve and logs a
    /// warning.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim(), rhs.len())?;
        if self.dim() == 0 {
            return Ok(Vec::new());
        }
        let well_posed = self.condition.is_finite() && self.condition < T::lit(1e12);
        if well_posed {
            if let Some(l) = cholesky(&self.entries) {
                return Ok(cholesky_solve(&l, rhs));
            }
        }
        log::warn!(
            "Fisher matrix near-singular (condition {:e}); using clipped pseudo-solve",
            self.condition.as_f64()
        );
        Ok(pseudo_solve(&self.entries, rhs, T::lit(1e-12)))
    }
}

/// Pseudo-inverse solve of a symmetric PSD system, dropping eigenvalues
/// below `rel_cut * lambda_max`.
pub(crate) fn pseudo_solve<T: Real>(g: &Matrix<T>, rhs: &[T], rel_cut: T) -> Vec<T> {
    let (vals, vecs) = symmetric_eigen(g);
    let top = vals.first().copied().unwrap_or(T::zero());
    let n = rhs.len();
    let mut x = vec![T::zero(); n];
    for (k, &lam) in vals.iter().enumerate() {
        if !(lam > rel_cut * top) {
            continue;
        }
        let vk = vecs.column(k);
        let c = crate::linalg::dot(&vk, rhs) / lam;
        for (xi, &vi) in x.iter_mut().zip(&vk) {
            *xi = *xi + c * vi;
        }
    }
    x
}

/// Fisher matrix of `m` at `theta`.
pub fn fisher_matrix<T: Real, M: ParametricModel<T> + ?Sized>(
    m: &M,
    theta: &[T],
) -> Result<FisherMatrix<T>> {
    check_dim(m.dim(), theta.len())?;
    let p = m.eval(theta)?;
    let jac = m.jacobian(theta)?;
    FisherMatrix::from_jacobian(&p, &jac, theta, T::default_rank_tol())
}

/// Result of projecting an ambient tangent vector onto `T_p M`.
#[derive(Clone, Debug)]
pub struct TangentProjection<T> {
    /// Coefficients `c` with `projected = sum_i c_i d_i p`.
    pub coefficients: Vec<T>,
    pub projected: TangentVector<T>,
}

fn combine<T: Real>(p: &Distribution<T>, jac: &[TangentVector<T>], coef: &[T]) -> TangentVector<T> {
    let mut coords = vec![T::zero(); p.len()];
    for (col, &c) in jac.iter().zip(coef) {
        for (x, &j) in coords.iter_mut().zip(col.coords()) {
            *x = *x + c * j;
        }
    }
    TangentVector::based(p, coords)
}

/// Fisher-orthogonal projection `Pi_p(A)` onto the model tangent space.
pub fn project_onto_tangent<T: Real, M: ParametricModel<T> + ?Sized>(
    m: &M,
    theta: &[T],
    a: &TangentVector<T>,
) -> Result<TangentProjection<T>> {
    let p = m.eval(theta)?;
    check_dim(p.len(), a.len())?;
    let jac = m.jacobian(theta)?;
    let g = FisherMatrix::from_jacobian(&p, &jac, theta, T::default_rank_tol())?;
    project_with(&p, &jac, &g, a)
}

fn project_with<T: Real>(
    p: &Distribution<T>,
    jac: &[TangentVector<T>],
    g: &FisherMatrix<T>,
    a: &TangentVector<T>,
) -> Result<TangentProjection<T>> {
    let b: Vec<T> = jac
        .iter()
        .map(|c| fisher_inner_raw(p.probs(), c.coords(), a.coords()))
        .collect();
    let coefficients = g.solve(&b)?;
    let projected = combine(p, jac, &coefficients);
    Ok(TangentProjection {
        coefficients,
        projected,
    })
}

/// Solves `G u = grad` for the parameter-space natural gradient.
pub fn natural_param_gradient<T: Real, M: ParametricModel<T> + ?Sized>(
    m: &M,
    theta: &[T],
    euclidean_param_grad: &[T],
) -> Result<Vec<T>> {
    check_dim(m.dim(), euclidean_param_grad.len())?;
    fisher_matrix(m, theta)?.solve(euclidean_param_grad)
}

/// Euclidean parameter gradient of `f o eval` given the ambient Fisher-Rao
/// gradient of `f`: `d_i (f o eval) = g_p(d_i p, grad f)`.
pub fn param_gradient_from_ambient<T: Real, M: ParametricModel<T> + ?Sized>(
    m: &M,
    theta: &[T],
    ambient: &TangentVector<T>,
) -> Result<Vec<T>> {
    let p = m.eval(theta)?;
    check_dim(p.len(), ambient.len())?;
    Ok(m.jacobian(theta)?
        .iter()
        .map(|c| fisher_inner_raw(p.probs(), c.coords(), ambient.coords()))
        .collect())
}

/// Pushes a parameter-space vector forward through the Jacobian.
pub fn pushforward<T: Real, M: ParametricModel<T> + ?Sized>(
    m: &M,
    theta: &[T],
    u: &[T],
) -> Result<TangentVector<T>> {
    check_dim(m.dim(), u.len())?;
    let p = m.eval(theta)?;
    let jac = m.jacobian(theta)?;
    Ok(combine(&p, &jac, u))
}

/// Dimensions of `T_pM`, `T_pM ∩ H_p` and `T_pM ∩ V_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct CylindricityReport {
    pub dim_tangent: usize,
    pub dim_h_intersection: usize,
    pub dim_v_intersection: usize,
    pub is_cylindrical: bool,
    /// Largest principal-angle sine that was counted as an exact
    /// intersection direction (0 when none). Values near `rank_tol` flag a
    /// borderline decision.
    pub residual: f64,
}

/// Orthonormal vectors stored as columns.
pub type Basis<T> = Vec<Vec<T>>;

/// Orthonormal whitened bases of `H_p` and `V_p`.
pub fn horizontal_vertical_bases<T: Real>(js: &JointSpace, p: &Distribution<T>) -> Result<(Basis<T>, Basis<T>)> {
    let h: Vec<Vec<T>> = crate::fibration::horizontal_spanning_set(js, p)?
        .iter()
        .map(|v| v.whitened(p))
        .collect();
    let v: Vec<Vec<T>> = crate::fibration::vertical_spanning_set::<T>(js)
        .iter()
        .map(|v| v.whitened(p))
        .collect();
    let tol = T::default_rank_tol();
    Ok((orthonormal_basis(&h, tol), orthonormal_basis(&v, tol)))
}

/// Dimension of `span(basis) ∩ span(other)` for orthonormal sets, with the
/// largest sine counted as zero.
fn intersection_dim<T: Real>(basis: &[Vec<T>], other: &[Vec<T>], tol: T) -> (usize, T) {
    if basis.is_empty() {
        return (0, T::zero());
    }
    let resid = residual_after_projection(basis, other);
    let sines = svd_columns(&resid).s;
    let mut dim = 0;
    let mut worst = T::zero();
    for s in sines {
        if s <= tol {
            dim += 1;
            worst = worst.max(s);
        }
    }
    (dim, worst)
}

/// Tests `T_pM = (T_pM ∩ H_p) ⊕ (T_pM ∩ V_p)` at `theta`.
///
/// `rank_tol` thresholds the principal-angle sines between `T_pM` and each
/// of `H_p`, `V_p` (orthonormal bases, so the threshold is absolute).
pub fn cylindricity_check<T: Real, M: ParametricModel<T> + ?Sized>(
    m: &M,
    theta: &[T],
    rank_tol: T,
) -> Result<CylindricityReport> {
    let js = m.joint_space().ok_or(Error::NoJointSpace)?;
    let p = m.eval(theta)?;
    let jac = m.jacobian(theta)?;
    FisherMatrix::from_jacobian(&p, &jac, theta, T::default_rank_tol())?;
    let white: Vec<Vec<T>> = jac.iter().map(|c| c.whitened(&p)).collect();
    let tangent = orthonormal_basis(&white, T::default_rank_tol());
    let (h, v) = horizontal_vertical_bases(js, &p)?;
    let (dh, rh) = intersection_dim(&tangent, &h, rank_tol);
    let (dv, rv) = intersection_dim(&tangent, &v, rank_tol);
    let dim_tangent = tangent.len();
    Ok(CylindricityReport {
        dim_tangent,
        dim_h_intersection: dh,
        dim_v_intersection: dv,
        is_cylindrical: dh + dv == dim_tangent,
        residual: rh.max(rv).as_f64(),
    })
}

/// A differentiable objective on the visible simplex, given through its
/// value and Euclidean partials.
pub trait VisibleObjective<T: Real> {
    fn value(&self, p_v: &[T]) -> T;
    fn partials(&self, p_v: &[T]) -> Vec<T>;
}

/// `D(p* || .)` on the visible simplex.
#[derive(Clone, Debug)]
pub struct KlFromTarget<T> {
    pub target: Vec<T>,
}

impl<T: Real> VisibleObjective<T> for KlFromTarget<T> {
    fn value(&self, p_v: &[T]) -> T {
        crate::simplex::kl_raw(&self.target, p_v)
    }
    fn partials(&self, p_v: &[T]) -> Vec<T> {
        self.target.iter().zip(p_v).map(|(&s, &x)| -s / x).collect()
    }
}

/// `D(. || p*)` on the visible simplex (the reverse divergence).
#[derive(Clone, Debug)]
pub struct KlToTarget<T> {
    pub target: Vec<T>,
}

impl<T: Real> VisibleObjective<T> for KlToTarget<T> {
    fn value(&self, p_v: &[T]) -> T {
        crate::simplex::kl_raw(p_v, &self.target)
    }
    fn partials(&self, p_v: &[T]) -> Vec<T> {
        p_v.iter()
            .zip(&self.target)
            .map(|(&x, &s)| (x / s).ln() + T::one())
            .collect()
    }
}

/// Which joint-side objective the invariance gap compares against the
/// visible-side gradient.
pub enum InvarianceMode<'a, T: Real> {
    /// Pullback `L o pi_V` of a visible objective.
    Pullback(&'a dyn VisibleObjective<T>),
    /// `D(Q || .)` on the joint side, `D(p* || .)` on the visible side.
    DataManifold { pstar: &'a Distribution<T> },
    /// `D(q || .)` for a fixed `q` in `Q`; the visible objective is
    /// `D(pi_V(q) || .)`.
    Recognition { q: &'a Distribution<T> },
}

/// Fisher norm at `pi_V(p)` of `dpi_V(grad^M) - grad^{M_V}`.
pub fn pushforward_invariance_gap<T, MJ, MV>(
    m_joint: &MJ,
    m_visible: &MV,
    theta_joint: &[T],
    theta_visible: &[T],
    mode: InvarianceMode<'_, T>,
) -> Result<T>
where
    T: Real,
    MJ: ParametricModel<T> + ?Sized,
    MV: ParametricModel<T> + ?Sized,
{
    let js = m_joint.joint_space().ok_or(Error::NoJointSpace)?;
    check_dim(js.n_visible(), m_visible.space().size())?;
    let p = m_joint.eval(theta_joint)?;
    let pv = m_visible.eval(theta_visible)?;
    let marginal = marginalize_v(js, &p)?;
    let mismatch = marginal.max_abs_diff(&pv);
    if mismatch > T::lit(1e-10).max(T::sum_tol()) {
        return Err(Error::PointMismatch(mismatch.as_f64()));
    }

    let jac = m_joint.jacobian(theta_joint)?;
    let jac_v = m_visible.jacobian(theta_visible)?;
    check_pushforward_range(js, &pv, &jac, &jac_v)?;

    let (ambient_joint, ambient_visible) = match mode {
        InvarianceMode::Pullback(obj) => {
            let partials_v = obj.partials(pv.probs());
            let lifted: Vec<T> = (0..js.n_joint()).map(|i| partials_v[js.split(i).0]).collect();
            (
                nat_grad_from_partials(&p, &lifted)?,
                nat_grad_from_partials(&pv, &partials_v)?,
            )
        }
        InvarianceMode::DataManifold { pstar } => (
            nat_grad_dist_to_q(js, &p, pstar)?,
            pv.difference(pstar)?,
        ),
        InvarianceMode::Recognition { q } => {
            check_dim(js.n_joint(), q.len())?;
            let pstar = marginalize_v(js, q)?;
            (p.difference(q)?, pv.difference(&pstar)?)
        }
    };

    let g = FisherMatrix::from_jacobian(&p, &jac, theta_joint, T::default_rank_tol())?;
    let gv = FisherMatrix::from_jacobian(&pv, &jac_v, theta_visible, T::default_rank_tol())?;
    let grad_m = project_with(&p, &jac, &g, &ambient_joint)?.projected;
    let grad_mv = project_with(&pv, &jac_v, &gv, &ambient_visible)?.projected;
    let pushed = dpi_v(js, &grad_m)?;
    let diff = TangentVector::based(
        &pv,
        pushed
            .coords()
            .iter()
            .zip(grad_mv.coords())
            .map(|(&a, &b)| a - b)
            .collect(),
    );
    fisher_norm(&pv, &diff)
}

/// Verifies `dpi_V(T_pM) = T_{pi(p)} M_V` by rank comparison.
pub fn check_pushforward_range<T: Real>(
    js: &JointSpace,
    pv: &Distribution<T>,
    jac: &[TangentVector<T>],
    jac_v: &[TangentVector<T>],
) -> Result<()> {
    let tol = T::lit(1e-7).max(T::default_rank_tol());
    let pushed: Vec<Vec<T>> = jac
        .iter()
        .map(|c| dpi_v(js, c).map(|v| whiten(pv, v.coords())))
        .collect::<Result<_>>()?;
    let visible: Vec<Vec<T>> = jac_v.iter().map(|c| whiten(pv, c.coords())).collect();
    let r_pushed = svd_columns(&pushed).rank(tol);
    let r_visible = svd_columns(&visible).rank(tol);
    let both: Vec<Vec<T>> = pushed.iter().chain(&visible).cloned().collect();
    let r_both = svd_columns(&both).rank(tol);
    if r_pushed == r_visible && r_both == r_visible {
        Ok(())
    } else {
        Err(Error::RangeMismatch(format!(
            "rank dpi_V(T_pM) = {r_pushed}, rank T M_V = {r_visible}, rank of union = {r_both}"
        )))
    }
}

/// Per-`x_V` spread of `A(x_V, x_H) / p(x_V, x_H)` over `x_H`; zero exactly
/// when `A` is horizontal.
pub fn horizontal_ratio_spread<T: Real>(
    js: &JointSpace,
    p: &Distribution<T>,
    a: &TangentVector<T>,
) -> Result<T> {
    check_dim(js.n_joint(), a.len())?;
    let _ = conditional_h_given_v(js, p)?;
    let mut worst = T::zero();
    for v in 0..js.n_visible() {
        let ratios: Vec<T> = (0..js.n_hidden())
            .map(|h| a.coords()[js.index(v, h)] / p.probs()[js.index(v, h)])
            .collect();
        let lo = ratios.iter().copied().fold(T::infinity(), T::min);
        let hi = ratios.iter().copied().fold(T::neg_infinity(), T::max);
        worst = worst.max(hi - lo);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::make_distribution;

    #[test]
    fn logistic_curve_fisher_value() {
        // p(θ) = (σ(θ), 1-σ(θ)); at 0, ∂p = (0.25, -0.25)
        let brute: f64 = [0.25_f64, -0.25].iter().map(|d| d * d / 0.5).sum();
        assert_eq!(brute, 0.25);
        let m = SoftmaxModel::full(StateSpace::new(2).unwrap().shared());
        let g = fisher_matrix(&m, &[0.0_f64]).unwrap();
        assert!((g.entries[(0, 0)] - brute).abs() < 1e-15);
    }

    #[test]
    fn duplicated_parameter_is_singular() {
        let space = StateSpace::new(3).unwrap().shared();
        let w = Matrix::from_fn(3, 2, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let m = SoftmaxModel::new(space, w, vec![0.0; 3]).unwrap();
        let err = fisher_matrix(&m, &[0.3, -0.1]).unwrap_err();
        assert!(matches!(err, Error::SingularPoint { .. }));
    }

    #[test]
    fn projection_is_identity_on_full_model() {
        let space = StateSpace::new(4).unwrap().shared();
        let m = SoftmaxModel::full(space.clone());
        let theta = [0.2, -0.5, 0.9];
        let p = m.eval(&theta).unwrap();
        let q = make_distribution(&space, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let a = p.difference(&q).unwrap();
        let proj = project_onto_tangent(&m, &theta, &a).unwrap();
        for (x, y) in proj.projected.coords().iter().zip(a.coords()) {
            assert!(f64::abs(x - y) < 1e-12);
        }
    }

    #[test]
    fn projection_of_orthogonal_vector_is_zero() {
        // one-parameter curve in a 3-simplex; pick A ⟂ ∂p
        let space = StateSpace::new(3).unwrap().shared();
        let w = Matrix::from_fn(3, 1, |i, _| [1.0, -0.5, 0.0][i]);
        let m = SoftmaxModel::new(space, w, vec![0.0; 3]).unwrap();
        let theta = [0.4];
        let p = m.eval(&theta).unwrap();
        let d = m.jacobian(&theta).unwrap().remove(0);
        // any zero-sum B, remove its component along d
        let b = TangentVector::at(&p, vec![0.3, -0.1, -0.2]).unwrap();
        let gbd = crate::simplex::fisher_inner(&p, &b, &d).unwrap();
        let gdd = crate::simplex::fisher_inner(&p, &d, &d).unwrap();
        let a = b.sub(&d.scaled(gbd / gdd)).unwrap();
        let proj = project_onto_tangent(&m, &theta, &a).unwrap();
        assert!(proj.projected.max_abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_stays_zero() {
        let m = SoftmaxModel::full(StateSpace::new(3).unwrap().shared());
        let u = natural_param_gradient(&m, &[0.1, 0.2], &[0.0, 0.0]).unwrap();
        assert_eq!(u, vec![0.0, 0.0]);
    }

    #[test]
    fn pseudo_solve_handles_rank_deficiency() {
        let g = Matrix::from_fn(2, 2, |_, _| 1.0_f64);
        let x = pseudo_solve(&g, &[2.0, 2.0], 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_identity_fisher_scales_gradient() {
        // logistic curve at 0 has G = 0.25
        let m = SoftmaxModel::full(StateSpace::new(2).unwrap().shared());
        let u = natural_param_gradient(&m, &[0.0_f64], &[0.3]).unwrap();
        assert!((u[0] - 1.2).abs() < 1e-14);
    }

    #[test]
    fn full_simplex_natural_gradient_is_p_minus_q() {
        let space = StateSpace::new(4).unwrap().shared();
        let m = SoftmaxModel::full(space.clone());
        let theta = [0.3_f64, -0.7, 0.1];
        let p = m.eval(&theta).unwrap();
        let q = make_distribution(&space, &[0.4, 0.1, 0.3, 0.2]).unwrap();
        let ambient = crate::simplex::nat_grad_kl_second(&p, &q).unwrap();
        let b = param_gradient_from_ambient(&m, &theta, &ambient).unwrap();
        let u = natural_param_gradient(&m, &theta, &b).unwrap();
        let pushed = pushforward(&m, &theta, &u).unwrap();
        for ((&x, &pi), &qi) in pushed.coords().iter().zip(p.probs()).zip(q.probs()) {
            assert!((x - (pi - qi)).abs() < 1e-8);
        }
    }

    #[test]
    fn cylindricity_of_standard_models() {
        use crate::sampling::{random_params, rng_from_seed};
        let js = JointSpace::new(3, 2).unwrap();
        let mut rng = rng_from_seed(11);

        let full = SoftmaxModel::<f64>::full_joint(&js);
        let theta = random_params(full.dim(), 1.0, &mut rng);
        let r = cylindricity_check(&full, &theta, 1e-8).unwrap();
        assert!(r.is_cylindrical);
        assert_eq!((r.dim_tangent, r.dim_h_intersection, r.dim_v_intersection), (5, 2, 3));

        let product = ProductModel::<f64>::random_restricted(&js, 2, &mut rng);
        let theta = random_params(product.dim(), 1.0, &mut rng);
        let r = cylindricity_check(&product, &theta, 1e-8).unwrap();
        assert!(r.is_cylindrical);
        assert_eq!((r.dim_h_intersection, r.dim_v_intersection), (2, 2));

        let tied = TiedModel::<f64>::random(&js, 1, &mut rng);
        let r = cylindricity_check(&tied, &[0.4], 1e-8).unwrap();
        assert!(!r.is_cylindrical);
        assert_eq!((r.dim_tangent, r.dim_h_intersection, r.dim_v_intersection), (1, 0, 0));
    }

    #[test]
    fn full_models_have_no_invariance_gap() {
        use crate::sampling::{random_distribution, random_params, rng_from_seed};
        let js = JointSpace::new(2, 3).unwrap();
        let mut rng = rng_from_seed(5);
        let joint = SoftmaxModel::<f64>::full_joint(&js);
        let visible = SoftmaxModel::<f64>::full(js.visible().clone());
        let theta = random_params(joint.dim(), 1.0, &mut rng);
        let pv = marginalize_v(&js, &joint.eval(&theta).unwrap()).unwrap();
        let tv = SoftmaxModel::log_odds(&pv);
        let pstar: Distribution<f64> = random_distribution(js.visible(), &mut rng);
        let k: Distribution<f64> = random_distribution(js.joint(), &mut rng);
        let q = crate::fibration::compose(
            &js,
            &pstar,
            &crate::fibration::ConditionalTable::from_rows(&js, k.probs()).unwrap(),
        );
        let obj = KlToTarget {
            target: pstar.probs().to_vec(),
        };
        for mode in [
            InvarianceMode::Pullback(&obj),
            InvarianceMode::DataManifold { pstar: &pstar },
            InvarianceMode::Recognition { q: &q },
        ] {
            let gap = pushforward_invariance_gap(&joint, &visible, &theta, &tv, mode).unwrap();
            assert!(gap <= 1e-10, "{gap}");
        }
    }

    #[test]
    fn mismatched_points_are_rejected() {
        let js = JointSpace::new(2, 2).unwrap();
        let joint = SoftmaxModel::<f64>::full_joint(&js);
        let visible = SoftmaxModel::<f64>::full(js.visible().clone());
        let pstar = make_distribution(js.visible(), &[0.5, 0.5]).unwrap();
        let err = pushforward_invariance_gap(
            &joint,
            &visible,
            &[0.0, 0.0, 0.0],
            &[1.0],
            InvarianceMode::DataManifold { pstar: &pstar },
        )
        .unwrap_err();
        assert!(matches!(err, Error::PointMismatch(_)));
    }
}
