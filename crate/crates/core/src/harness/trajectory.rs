//! Explicit-Euler natural-gradient descent with a visible-side reference
//! flow, per-iteration records and CSV output.

use std::io::Write;
use std::time::Instant;

use crate::error::{check_dim, Error, Result};
use crate::fibration::{marginalize_v, nat_grad_dist_to_q, project_to_data_manifold, JointSpace};
use crate::harness::config::{ExperimentConfig, Integrator, ObjectiveKind, VectorSpec};
use crate::harness::models::ExperimentModel;
use crate::model::{
    fisher_matrix, param_gradient_from_ambient, pushforward, pushforward_invariance_gap,
    InvarianceMode,
};
use crate::objectives::{elbo_expected, ObjectiveContext};
use crate::sampling::{random_distribution, rng_from_seed};
use crate::simplex::{fisher_norm, kl_divergence, make_distribution, Distribution, TangentVector};

pub const CSV_HEADER: &str = "iter,kl_visible,elbo_expected,grad_norm,invariance_gap,wall_time_s";

/// State after iteration `iter`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub iter: usize,
    /// `D(p* || pi_V(p_t))`.
    pub kl_visible: f64,
    /// `ELBO(q_t, p_t)`, with `q_t` the fixed recognition distribution or
    /// `pi_Q(p_t)` for the re-projecting objectives.
    pub elbo_expected: f64,
    /// Fisher norm of the (model) natural gradient at `p_t`.
    pub grad_norm: f64,
    /// Fisher norm of the pushforward mismatch at `pi_V(p_t)`.
    pub invariance_gap: f64,
    /// Seconds since the start; 0 unless timing is enabled.
    pub wall_time_s: f64,
    /// `max |pi_V(p_t) - r_t|` against the visible reference flow.
    pub reference_deviation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
    pub target: Vec<f64>,
    pub final_marginal: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn final_row(&self) -> &TrajectoryRow {
        self.rows.last().expect("trajectories have at least one row")
    }

    pub fn max_reference_deviation(&self) -> f64 {
        self.rows.iter().map(|r| r.reference_deviation).fold(0.0, f64::max)
    }

    pub fn max_invariance_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.invariance_gap).fold(0.0, f64::max)
    }

    /// Fixed columns, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.iter, r.kl_visible, r.elbo_expected, r.grad_norm, r.invariance_gap, r.wall_time_s
            )?;
        }
        Ok(())
    }
}

fn resolve_target(cfg: &ExperimentConfig, js: &JointSpace, rng: &mut crate::sampling::Rng64) -> Result<Distribution<f64>> {
    match &cfg.target {
        VectorSpec::Explicit(v) => {
            check_dim(js.n_visible(), v.len()).map_err(|e| Error::Config(format!("target: {e}")))?;
            Distribution::from_probs(js.visible().clone(), v)
        }
        VectorSpec::Named(_) => Ok(random_distribution(js.visible(), rng)),
    }
}

/// Recognition distribution from `q_init`; `projection` gives `pi_Q(p0)`.
fn resolve_recognition(
    cfg: &ExperimentConfig,
    ctx: ObjectiveContext<f64>,
    p0: &Distribution<f64>,
) -> Result<ObjectiveContext<f64>> {
    match &cfg.q_init {
        VectorSpec::Explicit(v) => {
            let js = ctx.joint_space().clone();
            check_dim(js.n_joint(), v.len()).map_err(|e| Error::Config(format!("q_init: {e}")))?;
            let q = make_distribution(js.joint(), v)?;
            ctx.with_recognition(q)
                .map_err(|e| Error::Config(format!("q_init: {e}")))
        }
        VectorSpec::Named(_) => ctx.with_projection_of(p0),
    }
}

/// Ambient gradient of the configured objective and the recognition
/// distribution it uses at `p`.
fn ambient_gradient(
    cfg: &ExperimentConfig,
    ctx: &ObjectiveContext<f64>,
    p: &Distribution<f64>,
) -> Result<(TangentVector<f64>, Distribution<f64>)> {
    let js = ctx.joint_space();
    if cfg.objective.uses_fixed_q() {
        let q = ctx.recognition().ok_or(Error::MissingRecognition)?.clone();
        Ok((p.difference(&q)?, q))
    } else {
        let q = project_to_data_manifold(js, p, ctx.pstar())?;
        Ok((nat_grad_dist_to_q(js, p, ctx.pstar())?, q))
    }
}

fn elbo_at(ctx: &ObjectiveContext<f64>, q: &Distribution<f64>, p: &Distribution<f64>) -> Result<f64> {
    let c = ObjectiveContext::new(ctx.joint_space().clone(), ctx.pstar().clone())?.with_recognition(q.clone())?;
    elbo_expected(&c, p)
}

/// Runs `cfg.iters` Euler steps and records one row per step.
pub fn run_trajectory(cfg: &ExperimentConfig) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    match cfg.integrator()? {
        Integrator::Ambient => run_ambient(cfg),
        Integrator::Parametric => run_parametric(cfg),
    }
}

/// Euler steps of the visible reference flow `r <- r - step (r - p*)`.
fn reference_step(r: &mut [f64], pstar: &[f64], step: f64) {
    for (x, &s) in r.iter_mut().zip(pstar) {
        *x -= step * (*x - s);
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn run_ambient(cfg: &ExperimentConfig) -> Result<TrajectoryRecord> {
    let model = ExperimentModel::build(cfg)?;
    let js = model.joint_space().clone();
    let mut rng = rng_from_seed(cfg.seed);
    let pstar = resolve_target(cfg, &js, &mut rng)?;
    let mut p: Distribution<f64> = random_distribution(js.joint(), &mut rng);
    let ctx = ObjectiveContext::new(js.clone(), pstar.clone())?;
    let ctx = if cfg.objective.uses_fixed_q() {
        resolve_recognition(cfg, ctx, &p)?
    } else {
        ctx
    };

    let start = Instant::now();
    let mut reference = marginalize_v(&js, &p)?.probs().to_vec();
    let mut rows = Vec::with_capacity(cfg.iters);
    let (mut grad, _) = ambient_gradient(cfg, &ctx, &p)?;
    for iter in 1..=cfg.iters {
        let next: Vec<f64> = p
            .probs()
            .iter()
            .zip(grad.coords())
            .map(|(&x, &g)| x - cfg.step * g)
            .collect();
        if let Some(i) = next.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::StepTooLarge(format!(
                "iteration {iter}: p[{i}] = {:e} after a step of {}",
                next[i], cfg.step
            )));
        }
        p = Distribution::from_probs(js.joint().clone(), &next)?;
        reference_step(&mut reference, pstar.probs(), cfg.step);

        let (g, q) = ambient_gradient(cfg, &ctx, &p)?;
        grad = g;
        let pv = marginalize_v(&js, &p)?;
        let pushed = crate::fibration::dpi_v(&js, &grad)?;
        let mismatch: Vec<f64> = pushed
            .coords()
            .iter()
            .zip(pv.probs().iter().zip(pstar.probs()))
            .map(|(&a, (&x, &s))| a - (x - s))
            .collect();
        rows.push(TrajectoryRow {
            iter,
            kl_visible: kl_divergence(&pstar, &pv)?,
            elbo_expected: elbo_at(&ctx, &q, &p)?,
            grad_norm: fisher_norm(&p, &grad)?,
            invariance_gap: fisher_norm(&pv, &TangentVector::at(&pv, mismatch)?)?,
            wall_time_s: if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 },
            reference_deviation: max_diff(pv.probs(), &reference),
        });
    }
    Ok(TrajectoryRecord {
        rows,
        target: pstar.probs().to_vec(),
        final_marginal: marginalize_v(&js, &p)?.probs().to_vec(),
    })
}

/// Point, natural parameter gradient, its pushforward and the recognition
/// distribution at one parameter value.
struct ParametricStep {
    p: Distribution<f64>,
    u: Vec<f64>,
    model_grad: TangentVector<f64>,
    q: Distribution<f64>,
}

fn run_parametric(cfg: &ExperimentConfig) -> Result<TrajectoryRecord> {
    let model = ExperimentModel::build(cfg)?;
    let joint = model.joint();
    let js = model.joint_space().clone();
    let mut rng = rng_from_seed(cfg.seed);
    let pstar = resolve_target(cfg, &js, &mut rng)?;
    let mut theta = model.initial_params(&mut rng);
    let p0 = joint.eval(&theta)?;
    let ctx = ObjectiveContext::new(js.clone(), pstar.clone())?;
    let ctx = if cfg.objective.uses_fixed_q() {
        resolve_recognition(cfg, ctx, &p0)?
    } else {
        ctx
    };

    let start = Instant::now();
    let mut reference = marginalize_v(&js, &p0)?.probs().to_vec();
    let mut rows = Vec::with_capacity(cfg.iters);
    let natural = |theta: &[f64]| -> Result<ParametricStep> {
        let p = joint.eval(theta)?;
        let (ambient, q) = ambient_gradient(cfg, &ctx, &p)?;
        let b = param_gradient_from_ambient(joint, theta, &ambient)?;
        let u = fisher_matrix(joint, theta)?.solve(&b)?;
        let model_grad = pushforward(joint, theta, &u)?;
        Ok(ParametricStep { p, u, model_grad, q })
    };
    let mut u = natural(&theta)?.u;
    for iter in 1..=cfg.iters {
        for (t, &d) in theta.iter_mut().zip(&u) {
            *t -= cfg.step * d;
        }
        reference_step(&mut reference, pstar.probs(), cfg.step);

        let ParametricStep {
            p,
            u: next_u,
            model_grad,
            q,
        } = natural(&theta)?;
        u = next_u;
        let pv = marginalize_v(&js, &p)?;
        let (mv, tv) = model.visible_point(&theta)?;
        let mode = if cfg.objective.uses_fixed_q() {
            InvarianceMode::Recognition { q: &q }
        } else {
            InvarianceMode::DataManifold { pstar: &pstar }
        };
        let gap = match pushforward_invariance_gap(joint, &mv, &theta, &tv, mode) {
            Ok(g) => g,
            Err(Error::RangeMismatch(msg)) => {
                log::debug!("iteration {iter}: {msg}");
                f64::NAN
            }
            Err(e) => return Err(e),
        };
        rows.push(TrajectoryRow {
            iter,
            kl_visible: kl_divergence(&pstar, &pv)?,
            elbo_expected: elbo_at(&ctx, &q, &p)?,
            grad_norm: fisher_norm(&p, &model_grad)?,
            invariance_gap: gap,
            wall_time_s: if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 },
            reference_deviation: max_diff(pv.probs(), &reference),
        });
    }
    Ok(TrajectoryRecord {
        rows,
        target: pstar.probs().to_vec(),
        final_marginal: marginalize_v(&js, &joint.eval(&theta)?)?.probs().to_vec(),
    })
}

/// Reference-flow deviation at a fixed time horizon for two step sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftStudy {
    pub step: f64,
    /// Final deviation after `iters` steps of size `step`.
    pub deviation: f64,
    /// Final deviation after `2 iters` steps of size `step / 2`.
    pub half_step_deviation: f64,
}

impl DriftStudy {
    pub fn ratio(&self) -> f64 {
        self.deviation / self.half_step_deviation
    }
}

/// Step-halving study of the parametric integrator: both runs cover the
/// same time horizon `iters * step`, so a first-order method shows a ratio
/// near 2.
pub fn drift_study(cfg: &ExperimentConfig) -> Result<DriftStudy> {
    let mut coarse = cfg.clone();
    coarse.integrator = Some(Integrator::Parametric);
    let mut fine = coarse.clone();
    fine.step = cfg.step / 2.0;
    fine.iters = cfg.iters * 2;
    let a = run_trajectory(&coarse)?;
    let b = run_trajectory(&fine)?;
    Ok(DriftStudy {
        step: cfg.step,
        deviation: a.final_row().reference_deviation,
        half_step_deviation: b.final_row().reference_deviation,
    })
}

impl ObjectiveKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::KlVisible => "kl_visible",
            Self::DistToQ => "dist_to_Q",
            Self::Dq => "dq",
            Self::Elbo => "elbo",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(model: &str, objective: ObjectiveKind, iters: usize) -> ExperimentConfig {
        ExperimentConfig {
            model: model.into(),
            objective,
            iters,
            ..Default::default()
        }
    }

    #[test]
    fn ambient_marginals_follow_reference() {
        for obj in [ObjectiveKind::Elbo, ObjectiveKind::DistToQ, ObjectiveKind::KlVisible, ObjectiveKind::Dq] {
            let rec = run_trajectory(&cfg("full", obj, 300)).unwrap();
            assert_eq!(rec.rows.len(), 300);
            assert!(rec.max_reference_deviation() <= 1e-12, "{obj:?}");
            assert!(rec.max_invariance_gap() <= 1e-10, "{obj:?}");
        }
    }

    #[test]
    fn ambient_kl_decreases() {
        let rec = run_trajectory(&cfg("full", ObjectiveKind::Elbo, 500)).unwrap();
        for w in rec.rows.windows(2) {
            if w[0].kl_visible > 1e-12 {
                assert!(w[1].kl_visible < w[0].kl_visible);
            }
        }
    }

    #[test]
    fn ambient_step_of_one_or_more_is_rejected() {
        let mut c = cfg("full", ObjectiveKind::Elbo, 3);
        c.step = 1.5;
        assert!(matches!(run_trajectory(&c), Err(Error::StepTooLarge(_))));
    }

    #[test]
    fn product_parametric_gap_is_small() {
        let rec = run_trajectory(&cfg("product", ObjectiveKind::Elbo, 50)).unwrap();
        assert!(rec.max_invariance_gap() <= 1e-10, "{}", rec.max_invariance_gap());
    }

    #[test]
    fn tied_parametric_gap_exceeds_tol() {
        let rec = run_trajectory(&cfg("tied", ObjectiveKind::Elbo, 50)).unwrap();
        assert!(rec.max_invariance_gap() > 1e-8);
    }

    #[test]
    fn csv_layout() {
        let mut c = cfg("full", ObjectiveKind::Elbo, 4);
        c.target = VectorSpec::Explicit(vec![0.2, 0.3, 0.5]);
        let rec = run_trajectory(&c).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("1,"));
        assert!(lines[1].ends_with(",0.0000000000000000e0"));
    }
}
