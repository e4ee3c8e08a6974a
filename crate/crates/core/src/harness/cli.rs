//! Command-line front end.
//!
//! Exit codes: 0 when every check passes, 1 on an assertion failure or a
//! numerical error, 2 on usage or configuration errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bayesnet::{
    block_natural_gradient_with_stats, orthogonality_audit, topologies, BayesNetModel,
};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Integrator, ObjectiveKind};
use crate::harness::models::ExperimentModel;
use crate::harness::oracle::relative_error;
use crate::harness::suite::run_invariance_suite;
use crate::harness::trajectory::run_trajectory;
use crate::model::{cylindricity_check, natural_param_gradient, ParametricModel};
use crate::sampling::{random_params, rng_from_seed};

#[derive(Parser, Debug)]
#[command(name = "fisher-elbo", version, about = "Natural-gradient invariance checks and training runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the invariance suite.
    Check(Common),
    /// Run natural-gradient descent and write the trajectory CSV.
    Train(Common),
    /// Report cylindricity of a model at given or random parameters.
    Cylinder(Common),
    /// Bayes-net Fisher orthogonality audit and block-vs-dense solve.
    Bayesnet(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long = "step-size")]
    step_size: Option<f64>,
    /// full, product, tied or bayesnet:<file>.
    #[arg(long)]
    model: Option<String>,
    /// kl_visible, dist_to_Q, dq or elbo.
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    nv: Option<usize>,
    #[arg(long)]
    nh: Option<usize>,
    /// Random instances per check.
    #[arg(long)]
    draws: Option<usize>,
    /// ambient or parametric.
    #[arg(long)]
    integrator: Option<String>,
    /// Comma-separated parameters for `cylinder`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Option<Vec<f64>>,
    /// Record wall-clock time in the trajectory CSV.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.steps {
            cfg.iters = v;
        }
        if let Some(v) = self.step_size {
            cfg.step = v;
        }
        if let Some(v) = &self.model {
            cfg.model = v.clone();
        }
        if let Some(v) = &self.objective {
            cfg.objective = v.parse::<ObjectiveKind>()?;
        }
        if let Some(v) = self.nv {
            cfg.nv = v;
        }
        if let Some(v) = self.nh {
            cfg.nh = v;
        }
        if let Some(v) = self.draws {
            cfg.draws = v;
        }
        if let Some(v) = &self.integrator {
            cfg.integrator = Some(v.parse::<Integrator>()?);
        }
        cfg.timing |= self.timing;
        cfg.validate()?;
        Ok(cfg)
    }
}

enum Outcome {
    Pass,
    Fail,
}

fn write_out(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn check(args: &Common) -> Result<Outcome> {
    let cfg = args.resolve()?;
    let report = run_invariance_suite(&cfg)?;
    if !args.quiet {
        print!("{report}");
    }
    if let Some(path) = &args.out {
        write_out(path, |w| report.write_csv(w))?;
    }
    Ok(if report.all_passed() {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}

fn train(args: &Common) -> Result<Outcome> {
    let cfg = args.resolve()?;
    let rec = run_trajectory(&cfg)?;
    if let Some(path) = &args.out {
        write_out(path, |w| rec.write_csv(w))?;
    }
    let last = rec.final_row();
    if !args.quiet {
        println!(
            "model={} objective={} integrator={:?} steps={} step={}",
            cfg.model,
            cfg.objective.label(),
            cfg.integrator()?,
            cfg.iters,
            cfg.step
        );
        println!("final kl_visible       {:.6e}", last.kl_visible);
        println!("final elbo_expected    {:.6e}", last.elbo_expected);
        println!("max reference dev      {:.6e}", rec.max_reference_deviation());
        println!("max invariance gap     {:.6e}", rec.max_invariance_gap());
    }
    Ok(Outcome::Pass)
}

fn cylinder(args: &Common) -> Result<Outcome> {
    let cfg = args.resolve()?;
    let model = ExperimentModel::build(&cfg)?;
    let theta = match &args.theta {
        Some(t) => {
            crate::error::check_dim(model.joint().dim(), t.len())
                .map_err(|e| Error::Config(format!("--theta: {e}")))?;
            t.clone()
        }
        None => model.initial_params(&mut rng_from_seed(cfg.seed)),
    };
    let r = cylindricity_check(model.joint(), &theta, 1e-8)?;
    if !args.quiet {
        println!("model              {}", model.name());
        println!("dim_tangent        {}", r.dim_tangent);
        println!("dim_h_intersection {}", r.dim_h_intersection);
        println!("dim_v_intersection {}", r.dim_v_intersection);
        println!("is_cylindrical     {}", r.is_cylindrical);
        println!("residual           {:.3e}", r.residual);
    }
    if let Some(path) = &args.out {
        write_out(path, |w| {
            writeln!(w, "dim_tangent,dim_h_intersection,dim_v_intersection,is_cylindrical,residual")?;
            writeln!(
                w,
                "{},{},{},{},{:.16e}",
                r.dim_tangent, r.dim_h_intersection, r.dim_v_intersection, r.is_cylindrical, r.residual
            )
        })?;
    }
    Ok(Outcome::Pass)
}

type NamedNetwork = (String, BayesNetModel, Option<Vec<f64>>);

/// Networks audited by the `bayesnet` subcommand: the configured file, or
/// the four standard topologies.
fn audit_networks(cfg: &ExperimentConfig) -> Result<Vec<NamedNetwork>> {
    if cfg.model.starts_with("bayesnet:") {
        if let ExperimentModel::BayesNet { net, theta0 } = ExperimentModel::build(cfg)? {
            return Ok(vec![(cfg.model.clone(), net, theta0)]);
        }
    }
    Ok(vec![
        ("chain".into(), BayesNetModel::fully_visible(topologies::chain(&[2, 3, 2])?)?, None),
        ("fork".into(), BayesNetModel::fully_visible(topologies::fork(&[3, 2, 2])?)?, None),
        ("collider".into(), BayesNetModel::fully_visible(topologies::collider(&[2, 2, 3])?)?, None),
        ("diamond".into(), BayesNetModel::fully_visible(topologies::diamond([2, 2, 2, 2])?)?, None),
    ])
}

fn bayesnet(args: &Common) -> Result<Outcome> {
    let cfg = args.resolve()?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, net, theta0) in audit_networks(&cfg)? {
        let d = ParametricModel::<f64>::dim(&net);
        let (mut audit, mut solve) = (0.0f64, 0.0f64);
        let (mut block_flops, mut dense_flops) = (0, 0);
        for draw in 0..cfg.draws {
            let theta = match &theta0 {
                Some(t) if draw == 0 => t.clone(),
                _ => random_params(d, 1.0, &mut rng),
            };
            audit = audit.max(orthogonality_audit(&net, &theta)?.relative());
            let grad: Vec<f64> = random_params(d, 1.0, &mut rng);
            let stats = block_natural_gradient_with_stats(&net, &theta, &grad)?;
            let dense = natural_param_gradient(&net, &theta, &grad)?;
            solve = solve.max(relative_error(&stats.solution, &dense, 1e-300));
            block_flops = stats.block_flops;
            dense_flops = stats.dense_flops;
        }
        let pass = audit <= 1e-12 && solve <= cfg.tol.min(1e-10);
        ok &= pass;
        if !args.quiet {
            println!(
                "[{}] {:<12} params={:<3} audit={:.3e} block_vs_dense={:.3e} flops block/dense={}/{}",
                if pass { " pass" } else { " FAIL" },
                name,
                d,
                audit,
                solve,
                block_flops,
                dense_flops
            );
        }
        lines.push(format!(
            "{name},{d},{audit:.16e},{solve:.16e},{block_flops},{dense_flops},{}",
            if pass { "pass" } else { "FAIL" }
        ));
    }
    if let Some(path) = &args.out {
        write_out(path, |w| {
            writeln!(w, "network,params,audit_relative,block_vs_dense,block_flops,dense_flops,status")?;
            for l in &lines {
                writeln!(w, "{l}")?;
            }
            Ok(())
        })?;
    }
    Ok(if ok { Outcome::Pass } else { Outcome::Fail })
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Check(a) => check(a),
        Command::Train(a) => train(a),
        Command::Cylinder(a) => cylinder(a),
        Command::Bayesnet(a) => bayesnet(a),
    };
    match result {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::Fail) => 1,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
