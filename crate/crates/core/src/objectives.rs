//! Learning objectives on the visible and joint simplices and their
//! Fisher-Rao gradients.
//!
//! With a fixed recognition distribution `q` on the data manifold the
//! expected ELBO and `D(q || p)` differ by the constant `sum p* ln p*`:
//! `ELBO(q, p) + D(q || p) = sum_v p*(v) ln p*(v)`. Their gradients are
//! therefore negatives of each other.

use crate::error::{check_dim, Error, Result};
use crate::fibration::{
    conditional_h_given_v, marginalize_v, nat_grad_dist_to_q, project_to_data_manifold,
    ConditionalTable, JointSpace,
};
use crate::scalar::Real;
use crate::simplex::{kl_divergence, neg_entropy, Distribution, TangentVector};

/// Target and optional recognition distribution for joint objectives.
#[derive(Clone, Debug)]
pub struct ObjectiveContext<T> {
    js: JointSpace,
    pstar: Distribution<T>,
    q: Option<Distribution<T>>,
}

impl<T: Real> ObjectiveContext<T> {
    pub fn new(js: JointSpace, pstar: Distribution<T>) -> Result<Self> {
        check_dim(js.n_visible(), pstar.len())?;
        Ok(Self { js, pstar, q: None })
    }

    /// Attaches a recognition distribution; it must have visible marginal
    /// `p*` within `1e-10`.
    pub fn with_recognition(mut self, q: Distribution<T>) -> Result<Self> {
        check_dim(self.js.n_joint(), q.len())?;
        let err = marginalize_v(&self.js, &q)?.max_abs_diff(&self.pstar);
        if err > T::lit(1e-10).max(T::sum_tol()) {
            return Err(Error::NotOnDataManifold(err.as_f64()));
        }
        self.q = Some(q);
        Ok(self)
    }

    /// Uses `q = pi_Q(p)` as the recognition distribution.
    pub fn with_projection_of(self, p: &Distribution<T>) -> Result<Self> {
        let q = project_to_data_manifold(&self.js, p, &self.pstar)?;
        self.with_recognition(q)
    }

    pub fn joint_space(&self) -> &JointSpace {
        &self.js
    }

    pub fn pstar(&self) -> &Distribution<T> {
        &self.pstar
    }

    pub fn recognition(&self) -> Option<&Distribution<T>> {
        self.q.as_ref()
    }

    fn q(&self) -> Result<&Distribution<T>> {
        self.q.as_ref().ok_or(Error::MissingRecognition)
    }

    /// `sum_v p*(v) ln p*(v)`, the negative entropy of the target.
    pub fn target_neg_entropy(&self) -> T {
        neg_entropy(self.pstar.probs())
    }
}

/// `D(p* || p_V)`.
pub fn kl_visible<T: Real>(ctx: &ObjectiveContext<T>, p_v: &Distribution<T>) -> Result<T> {
    kl_divergence(&ctx.pstar, p_v)
}

/// Natural gradient of [`kl_visible`]: `p_V - p*`.
pub fn kl_visible_gradient<T: Real>(
    ctx: &ObjectiveContext<T>,
    p_v: &Distribution<T>,
) -> Result<TangentVector<T>> {
    crate::simplex::nat_grad_kl_second(p_v, &ctx.pstar)
}

/// `-sum_v p*(v) ln p_V(v)`.
pub fn cross_entropy<T: Real>(ctx: &ObjectiveContext<T>, p_v: &Distribution<T>) -> Result<T> {
    check_dim(ctx.pstar.len(), p_v.len())?;
    Ok(-ctx
        .pstar
        .probs()
        .iter()
        .zip(p_v.probs())
        .map(|(&s, &x)| s * x.ln())
        .sum::<T>())
}

/// Natural gradient of [`cross_entropy`]; identical to that of [`kl_visible`].
pub fn cross_entropy_gradient<T: Real>(
    ctx: &ObjectiveContext<T>,
    p_v: &Distribution<T>,
) -> Result<TangentVector<T>> {
    kl_visible_gradient(ctx, p_v)
}

/// `D(Q || p) = D(p* || pi_V(p))`.
pub fn dist_to_q<T: Real>(ctx: &ObjectiveContext<T>, p: &Distribution<T>) -> Result<T> {
    let m = marginalize_v(&ctx.js, p)?;
    kl_divergence(&ctx.pstar, &m)
}

/// `D(pi_Q(p) || p)`, the second evaluation route of [`dist_to_q`].
pub fn dist_to_q_via_projection<T: Real>(
    ctx: &ObjectiveContext<T>,
    p: &Distribution<T>,
) -> Result<T> {
    let proj = project_to_data_manifold(&ctx.js, p, &ctx.pstar)?;
    kl_divergence(&proj, p)
}

/// Natural gradient of [`dist_to_q`]: `p - pi_Q(p)`.
pub fn dist_to_q_gradient<T: Real>(
    ctx: &ObjectiveContext<T>,
    p: &Distribution<T>,
) -> Result<TangentVector<T>> {
    nat_grad_dist_to_q(&ctx.js, p, &ctx.pstar)
}

/// `D(q || p)` for the fixed recognition distribution.
pub fn dq_objective<T: Real>(ctx: &ObjectiveContext<T>, p: &Distribution<T>) -> Result<T> {
    kl_divergence(ctx.q()?, p)
}

/// Natural gradient of [`dq_objective`]: `p - q`.
pub fn dq_gradient<T: Real>(ctx: &ObjectiveContext<T>, p: &Distribution<T>) -> Result<TangentVector<T>> {
    p.difference(ctx.q()?)
}

/// `ELBO(q, p) = -sum q(v,h) ln(q(h|v) / p(v,h))`.
pub fn elbo_expected<T: Real>(ctx: &ObjectiveContext<T>, p: &Distribution<T>) -> Result<T> {
    let q = ctx.q()?;
    check_dim(q.len(), p.len())?;
    let cond = conditional_h_given_v(&ctx.js, q)?;
    Ok(-q
        .probs()
        .iter()
        .zip(cond.values())
        .zip(p.probs())
        .map(|((&qx, &c), &px)| qx * (c / px).ln())
        .sum::<T>())
}

/// Natural gradient of [`elbo_expected`]: `q - p`.
pub fn elbo_gradient<T: Real>(ctx: &ObjectiveContext<T>, p: &Distribution<T>) -> Result<TangentVector<T>> {
    let q = ctx.q()?;
    check_dim(q.len(), p.len())?;
    let coords = q.probs().iter().zip(p.probs()).map(|(&a, &b)| a - b).collect();
    Ok(TangentVector::based(p, coords))
}

/// Pointwise bound `-sum_h q(h|v) ln(q(h|v) / p(v,h))` on `ln p(v)`.
pub fn elbo_pointwise<T: Real>(
    js: &JointSpace,
    p: &Distribution<T>,
    q_cond: &ConditionalTable<T>,
    x_v: usize,
) -> Result<T> {
    check_dim(js.n_joint(), p.len())?;
    check_dim(js.n_joint(), q_cond.values().len())?;
    if x_v >= js.n_visible() {
        return Err(Error::DimensionMismatch {
            expected: js.n_visible(),
            found: x_v + 1,
        });
    }
    Ok(-(0..js.n_hidden())
        .map(|h| {
            let c = q_cond.get(x_v, h);
            c * (c / p.probs()[js.index(x_v, h)]).ln()
        })
        .sum::<T>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::make_distribution;

    fn setup() -> (JointSpace, ObjectiveContext<f64>) {
        let js = JointSpace::new(2, 2).unwrap();
        let pstar = make_distribution(js.visible(), &[0.5, 0.5]).unwrap();
        let ctx = ObjectiveContext::new(js.clone(), pstar).unwrap();
        (js, ctx)
    }

    #[test]
    fn visible_kl_examples() {
        let (js, ctx) = setup();
        assert_eq!(kl_visible(&ctx, ctx.pstar()).unwrap(), 0.0);
        let p = make_distribution(js.visible(), &[0.25, 0.75]).unwrap();
        let v = kl_visible(&ctx, &p).unwrap();
        assert!((v - 0.5 * (4.0_f64 / 3.0).ln()).abs() < 1e-15);

        let pstar = make_distribution(js.visible(), &[0.3, 0.7]).unwrap();
        let ctx2 = ObjectiveContext::new(js.clone(), pstar).unwrap();
        let u = make_distribution(js.visible(), &[0.5, 0.5]).unwrap();
        let g = kl_visible_gradient(&ctx2, &u).unwrap();
        assert!(f64::abs(g.coords()[0] - 0.2) < 1e-15 && f64::abs(g.coords()[1] + 0.2) < 1e-15);
    }

    #[test]
    fn cross_entropy_uniform_is_ln2() {
        let (js, ctx) = setup();
        let u = make_distribution(js.visible(), &[1.0, 1.0]).unwrap();
        assert!((cross_entropy(&ctx, &u).unwrap() - 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn missing_recognition_is_an_error() {
        let (js, ctx) = setup();
        let p = Distribution::uniform(js.joint().clone());
        assert_eq!(dq_objective(&ctx, &p), Err(Error::MissingRecognition));
        assert_eq!(elbo_expected(&ctx, &p), Err(Error::MissingRecognition));
    }

    #[test]
    fn recognition_must_be_on_data_manifold() {
        let (js, ctx) = setup();
        let q = make_distribution(js.joint(), &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(matches!(
            ctx.with_recognition(q),
            Err(Error::NotOnDataManifold(_))
        ));
    }

    #[test]
    fn elbo_uniform_example() {
        let (js, ctx) = setup();
        let p = Distribution::uniform(js.joint().clone());
        let ctx = ctx.with_projection_of(&p).unwrap();
        // q = p = uniform: -sum 0.25 ln(0.5 / 0.25) = -ln 2
        let e = elbo_expected(&ctx, &p).unwrap();
        assert!((e + 2.0_f64.ln()).abs() < 1e-15);
        assert!((e - ctx.target_neg_entropy()).abs() < 1e-15);
        assert_eq!(dq_objective(&ctx, &p).unwrap(), 0.0);
    }

    #[test]
    fn pointwise_examples() {
        let js = JointSpace::new(2, 2).unwrap();
        let p = Distribution::uniform(js.joint().clone());
        let uniform = ConditionalTable::from_rows(&js, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        let b = elbo_pointwise(&js, &p, &uniform, 0).unwrap();
        assert!((b - 0.5_f64.ln()).abs() < 1e-15);

        let p = make_distribution(js.joint(), &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let post = conditional_h_given_v(&js, &p).unwrap();
        let exact = elbo_pointwise(&js, &p, &post, 1).unwrap();
        assert!((exact - 0.7_f64.ln()).abs() < 1e-15);
        let off = ConditionalTable::from_rows(&js, &[1.0, 2.0, 1.0, 1.0]).unwrap();
        assert!(elbo_pointwise(&js, &p, &off, 1).unwrap() < 0.7_f64.ln());
        assert!(elbo_pointwise(&js, &p, &off, 2).is_err());
    }

    fn random_setup(seed: u64) -> (JointSpace, Distribution<f64>, Distribution<f64>, Distribution<f64>) {
        use crate::sampling::{random_distribution, rng_from_seed};
        let mut rng = rng_from_seed(seed);
        let js = JointSpace::new(3, 2).unwrap();
        let p = random_distribution(js.joint(), &mut rng);
        let pstar = random_distribution(js.visible(), &mut rng);
        let k: Distribution<f64> = random_distribution(js.joint(), &mut rng);
        let q = crate::fibration::compose(&js, &pstar, &ConditionalTable::from_rows(&js, k.probs()).unwrap());
        (js, p, pstar, q)
    }

    #[test]
    fn cross_entropy_minus_kl_is_target_entropy() {
        for seed in 0..10 {
            let (js, p, pstar, _) = random_setup(seed);
            let ctx = ObjectiveContext::new(js.clone(), pstar.clone()).unwrap();
            let pv = marginalize_v(&js, &p).unwrap();
            let lhs = cross_entropy(&ctx, &pv).unwrap() - kl_visible(&ctx, &pv).unwrap();
            assert!((lhs - pstar.entropy()).abs() < 1e-12);
        }
    }

    #[test]
    fn dist_to_q_routes_and_bounds() {
        for seed in 0..50 {
            let (js, p, pstar, q) = random_setup(seed);
            let ctx = ObjectiveContext::new(js.clone(), pstar).unwrap();
            let a = dist_to_q(&ctx, &p).unwrap();
            let b = dist_to_q_via_projection(&ctx, &p).unwrap();
            assert!((a - b).abs() <= 1e-12);
            let ctx = ctx.with_recognition(q).unwrap();
            assert!(a <= dq_objective(&ctx, &p).unwrap() + 1e-15);
        }
        let (js, _, pstar, q) = random_setup(1);
        let ctx = ObjectiveContext::new(js, pstar).unwrap();
        assert!(dist_to_q(&ctx, &q).unwrap().abs() < 1e-15);
    }

    #[test]
    fn dq_chain_decomposition() {
        for seed in 0..20 {
            let (js, p, pstar, q) = random_setup(seed);
            let proj = project_to_data_manifold(&js, &p, &pstar).unwrap();
            let lhs = kl_divergence(&q, &p).unwrap();
            let rhs = kl_divergence(&q, &proj).unwrap() + kl_divergence(&proj, &p).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn dq_gradient_pushes_to_visible_residual() {
        let (js, p, pstar, q) = random_setup(3);
        let ctx = ObjectiveContext::new(js.clone(), pstar.clone()).unwrap().with_recognition(q.clone()).unwrap();
        assert_eq!(dq_objective(&ctx, &q).unwrap(), 0.0);
        let pushed = crate::fibration::dpi_v(&js, &dq_gradient(&ctx, &p).unwrap()).unwrap();
        let pv = marginalize_v(&js, &p).unwrap();
        for v in 0..js.n_visible() {
            assert!((pushed.coords()[v] - (pv.probs()[v] - pstar.probs()[v])).abs() < 1e-15);
        }
    }

    #[test]
    fn elbo_identity_and_evidence_bound() {
        for seed in 0..20 {
            let (js, p, pstar, q) = random_setup(seed);
            let ctx = ObjectiveContext::new(js.clone(), pstar.clone()).unwrap().with_recognition(q).unwrap();
            let e = elbo_expected(&ctx, &p).unwrap();
            let d = dq_objective(&ctx, &p).unwrap();
            assert!((e + d - ctx.target_neg_entropy()).abs() <= 1e-12);
            let pv = marginalize_v(&js, &p).unwrap();
            let evidence: f64 = pstar.probs().iter().zip(pv.probs()).map(|(&s, &x)| s * x.ln()).sum();
            assert!(e <= evidence + 1e-15);
            let g = elbo_gradient(&ctx, &p).unwrap();
            let dg = dq_gradient(&ctx, &p).unwrap();
            for (a, b) in g.coords().iter().zip(dg.coords()) {
                assert_eq!(*a, -*b);
            }
        }
    }

    #[test]
    fn dq_gradient_splits_at_the_projection() {
        for seed in 0..20 {
            let (js, p, pstar, q) = random_setup(seed);
            let ctx = ObjectiveContext::new(js.clone(), pstar.clone()).unwrap().with_recognition(q.clone()).unwrap();
            let d = crate::fibration::hv_decompose(&js, &p, &dq_gradient(&ctx, &p).unwrap()).unwrap();
            let proj = project_to_data_manifold(&js, &p, &pstar).unwrap();
            for i in 0..js.n_joint() {
                assert!((d.horizontal.coords()[i] - (p.probs()[i] - proj.probs()[i])).abs() <= 1e-10);
                assert!((d.vertical.coords()[i] - (proj.probs()[i] - q.probs()[i])).abs() <= 1e-10);
            }
        }
    }
}
