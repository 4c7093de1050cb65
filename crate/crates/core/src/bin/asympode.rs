//! Command-line front end. A problem file goes in, a run directory of
//! artifacts comes out; subcommands expose the individual pipeline stages and
//! compose through those artifacts.
//!
//! Exit codes: 0 all verdicts pass, 1 input error (bad problem file, missing
//! artifact), 2 numerical failure (integration breakdown, failed
//! verification), 3 method inapplicable to the problem.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use asympode::pipeline::{self, StageError};
use asympode::problem::ProblemFile;
use asympode::report::{lattice_table, spectral_table};

#[derive(Parser)]
#[command(
    name = "asympode",
    version,
    about = "Asymptotic expansions y(t) = sum of q_n(t) e^{-mu_n t} for decaying ODE solutions"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full pipeline and report the verification verdict.
    Run(Common),
    /// Eigendecomposition of the system matrix.
    Spectral(Common),
    /// Leading elements of the decay-rate lattice.
    Exponents {
        #[command(flatten)]
        common: Common,
        /// Number of lattice elements to list.
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Decay rate and direction detected from the trajectory.
    FirstApprox(Common),
    /// Integrate the system and store the trajectory.
    Simulate(Common),
    /// Compute the series terms and store them.
    Expand(Common),
    /// Check a stored series against the trajectory.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Problem file (JSON).
    #[arg(long, value_name = "FILE")]
    problem: PathBuf,
    /// Run directory for artifacts; defaults to the problem file's `out_dir`
    /// or `<problem>.run` next to it.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Expansion length N.
    #[arg(long, value_name = "N")]
    n_terms: Option<usize>,
    /// Resonant-constant policy.
    #[arg(long, value_enum)]
    resonance: Option<ResonanceArg>,
    /// Integration horizon.
    #[arg(long, value_name = "T")]
    horizon: Option<f64>,
    /// Integrator absolute tolerance.
    #[arg(long, value_name = "TOL")]
    tol_abs: Option<f64>,
    /// Integrator relative tolerance.
    #[arg(long, value_name = "TOL")]
    tol_rel: Option<f64>,
    /// Eigenvalue snapping tolerance.
    #[arg(long, value_name = "TOL")]
    snap_tol: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResonanceArg {
    /// Set every resonant free constant to zero (canonical formal series).
    Zero,
    /// Fit resonant constants to the integrated trajectory.
    Fit,
}

/// A stage failure plus the run directory (when one exists) for the error
/// record.
struct Failure {
    dir: Option<PathBuf>,
    err: StageError,
}

type CmdResult = Result<u8, Failure>;

impl Common {
    /// Reads the problem file, applies flag overrides, validates, and
    /// resolves the run directory.
    fn load(&self) -> Result<(asympode::problem::ValidatedProblem, PathBuf), Failure> {
        let input = |errors: Vec<String>| Failure {
            dir: None,
            err: StageError::Input { stage: "input", errors },
        };
        let mut pf = ProblemFile::from_path(&self.problem).map_err(input)?;
        if let Some(n) = self.n_terms {
            pf.n_terms = n;
        }
        if let Some(r) = self.resonance {
            pf.resonance = match r {
                ResonanceArg::Zero => "zero".into(),
                ResonanceArg::Fit => "fit".into(),
            };
        }
        if let Some(t) = self.horizon {
            pf.horizon = t;
        }
        if let Some(t) = self.tol_abs {
            pf.tolerances.abs = t;
        }
        if let Some(t) = self.tol_rel {
            pf.tolerances.rel = t;
        }
        if let Some(t) = self.snap_tol {
            pf.tolerances.snap = t;
        }
        let dir = self
            .out
            .clone()
            .or_else(|| pf.out_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| self.problem.with_extension("run"));
        pf.out_dir = Some(dir.display().to_string());
        let vp = pf.validate().map_err(input)?;
        Ok((vp, dir))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // Parsed up front so an invalid ASYMPODE_THREADS warns once; every stage
    // currently runs on a single thread, so any cap >= 1 is honored.
    let _ = pipeline::thread_cap();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure { dir, err }) => {
            eprintln!("error[{}]: {}", err.stage(), err.messages().join("\n  "));
            if let Some(d) = dir {
                pipeline::write_error_record(&d, &err);
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> CmdResult {
    match &cli.cmd {
        Cmd::Run(c) => cmd_run(c),
        Cmd::Spectral(c) => cmd_spectral(c),
        Cmd::Exponents { common, count } => cmd_exponents(common, *count),
        Cmd::FirstApprox(c) => cmd_first_approx(c),
        Cmd::Simulate(c) => cmd_simulate(c),
        Cmd::Expand(c) => cmd_expand(c),
        Cmd::Verify(c) => cmd_verify(c),
    }
}

fn staged(dir: &PathBuf) -> impl Fn(StageError) -> Failure + '_ {
    move |err| Failure { dir: Some(dir.clone()), err }
}

fn cmd_run(common: &Common) -> CmdResult {
    let (vp, dir) = common.load()?;
    let summary = pipeline::run_pipeline(vp, &dir).map_err(staged(&dir))?;
    print!("{}", summary.report.render());
    println!("artifacts: {}", summary.run_dir.display());
    if summary.all_pass() {
        println!("verdict: PASS");
        Ok(0)
    } else {
        for f in &summary.failures {
            eprintln!("fail: {f}");
        }
        println!("verdict: FAIL");
        Ok(2)
    }
}

fn cmd_spectral(common: &Common) -> CmdResult {
    let (vp, dir) = common.load()?;
    let fail = staged(&dir);
    pipeline::prepare_run_dir(&dir).map_err(&fail)?;
    pipeline::write_resolved_config(&dir, &vp.file).map_err(&fail)?;
    let sd = pipeline::spectral_stage(&vp, &dir).map_err(&fail)?;
    print!("{}", spectral_table(&sd));
    Ok(0)
}

fn cmd_exponents(common: &Common, count: usize) -> CmdResult {
    let (mut vp, dir) = common.load()?;
    let fail = staged(&dir);
    pipeline::prepare_run_dir(&dir).map_err(&fail)?;
    pipeline::write_resolved_config(&dir, &vp.file).map_err(&fail)?;
    let sd = pipeline::spectral_stage(&vp, &dir).map_err(&fail)?;
    let traj = pipeline::simulate_stage(&vp, &sd, &dir, true).map_err(&fail)?;
    let fa = pipeline::first_approx_stage(&mut vp, &sd, &traj, &dir, true).map_err(&fail)?;
    let lattice = pipeline::lattice_stage(&mut vp, &fa, &sd, count, &dir).map_err(&fail)?;
    print!("{}", lattice_table(&lattice));
    Ok(0)
}

fn cmd_first_approx(common: &Common) -> CmdResult {
    let (mut vp, dir) = common.load()?;
    let fail = staged(&dir);
    pipeline::prepare_run_dir(&dir).map_err(&fail)?;
    pipeline::write_resolved_config(&dir, &vp.file).map_err(&fail)?;
    let sd = pipeline::spectral_stage(&vp, &dir).map_err(&fail)?;
    let traj = pipeline::simulate_stage(&vp, &sd, &dir, true).map_err(&fail)?;
    let fa = pipeline::first_approx_stage(&mut vp, &sd, &traj, &dir, false).map_err(&fail)?;
    println!("lambda* = {} ({})", fa.lambda_star, fa.lambda_star_f64);
    let xi = fa
        .xi_star
        .iter()
        .map(|c| format!("{c:.12}"))
        .collect::<Vec<_>>()
        .join(", ");
    println!("xi*     = ({xi})");
    println!("eigen-residual   = {:.3e}", fa.eigen_residual);
    println!(
        "dirichlet quotient: median {:.12}, spread {:.3e} over [{:.3}, {:.3}]",
        fa.quotient_median, fa.quotient_spread, fa.window.0, fa.window.1
    );
    if let Some(s) = fa.residual_slope {
        println!("settling slope   = {s:.6}");
    }
    Ok(0)
}

fn cmd_simulate(common: &Common) -> CmdResult {
    let (vp, dir) = common.load()?;
    let fail = staged(&dir);
    pipeline::prepare_run_dir(&dir).map_err(&fail)?;
    pipeline::write_resolved_config(&dir, &vp.file).map_err(&fail)?;
    let sd = pipeline::spectral_stage(&vp, &dir).map_err(&fail)?;
    let traj = pipeline::simulate_stage(&vp, &sd, &dir, false).map_err(&fail)?;
    println!(
        "integrated to t = {} ({:?}); {} samples, {} accepted steps, {} rhs evaluations",
        traj.end_time,
        traj.end,
        traj.samples.len(),
        traj.stats.accepted,
        traj.stats.rhs_evals
    );
    Ok(0)
}

fn cmd_expand(common: &Common) -> CmdResult {
    let (mut vp, dir) = common.load()?;
    let fail = staged(&dir);
    pipeline::prepare_run_dir(&dir).map_err(&fail)?;
    pipeline::write_resolved_config(&dir, &vp.file).map_err(&fail)?;
    let sd = pipeline::spectral_stage(&vp, &dir).map_err(&fail)?;
    let traj = pipeline::simulate_stage(&vp, &sd, &dir, true).map_err(&fail)?;
    let fa = pipeline::first_approx_stage(&mut vp, &sd, &traj, &dir, true).map_err(&fail)?;
    pipeline::smoothness_gate(&vp, &fa).map_err(&fail)?;
    let count = vp.file.n_terms + 2;
    let lattice = pipeline::lattice_stage(&mut vp, &fa, &sd, count, &dir).map_err(&fail)?;
    let series =
        pipeline::expand_stage(&mut vp, &sd, &fa, &lattice, &traj, &dir).map_err(&fail)?;
    println!("{:>4}  {:>12}  {:>7}  {:>12}", "n", "mu", "degree", "max|coeff|");
    for term in &series.terms {
        println!(
            "{:>4}  {:>12}  {:>7}  {:>12.6e}",
            term.n,
            term.mu,
            term.poly.degree().map_or("zero".into(), |d| d.to_string()),
            term.poly.max_abs_coeff()
        );
    }
    for r in &series.resonances {
        let how = if r.fitted { "fitted from trajectory" } else { "set to zero" };
        println!(
            "resonance at n = {}, eigenvalue {}: free constant {how}",
            r.n, r.lambda
        );
    }
    Ok(0)
}

fn cmd_verify(common: &Common) -> CmdResult {
    let (vp, dir) = common.load()?;
    let fail = staged(&dir);
    pipeline::prepare_run_dir(&dir).map_err(&fail)?;
    pipeline::write_resolved_config(&dir, &vp.file).map_err(&fail)?;
    let series = pipeline::load_series_artifact(&dir).map_err(&fail)?;
    let sd = pipeline::spectral_stage(&vp, &dir).map_err(&fail)?;
    let traj = pipeline::simulate_stage(&vp, &sd, &dir, true).map_err(&fail)?;
    let report = pipeline::verify_stage(&vp, &sd, &traj, &series, &dir).map_err(&fail)?;
    print!("{}", report.render());
    let failures = pipeline::collect_failures(&report);
    if failures.is_empty() {
        println!("verdict: PASS");
        Ok(0)
    } else {
        for f in &failures {
            eprintln!("fail: {f}");
        }
        println!("verdict: FAIL");
        Ok(2)
    }
}
