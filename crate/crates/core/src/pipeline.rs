//! End-to-end orchestration: problem file in, run directory of artifacts out.
//!
//! The pipeline runs decompose → classify → integrate → first approximation →
//! smoothness gate at the fitted direction → rate lattice → series expansion
//! → verification, writing each stage's artifact into the run directory as it
//! completes. Stages are also exposed individually for the composable
//! subcommands; a later stage reuses an earlier stage's artifact when asked
//! to, so `expand` after `simulate` picks up the stored trajectory instead of
//! integrating again.
//!
//! Every failure carries a stage name and maps to one of three exit classes:
//! input errors (bad file, bad config, missing artifact), numerical failures
//! (integration breakdown, undetectable rate, failed verification), and
//! inapplicability (the framework's hypotheses fail for this problem, e.g. a
//! non-smooth factor at the asymptotic direction).

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::dynamics::{
    decay_bounds_check, first_approximation, integrate, DecayBounds, DynamicsError, EndReason,
    FirstApproximation, IntegrationOptions, Trajectory, TrajectoryFitter,
};
use crate::expansion::{expand, ExpansionError, ExpansionSeries, ResonancePolicy};
use crate::exponents::{build_lattice, ExponentLattice};
use crate::problem::{ProblemFile, ValidatedProblem};
use crate::rational::rat_int;
use crate::report::{
    load_series_json, verify, write_lattice_json, write_residuals_csv, write_series_json,
    FitWindow, ReportError, VerificationReport, REPORT_SCHEMA,
};
use crate::spectral::{decompose, SpectralData};
use crate::termlang::classify::{classify, Classification, RegularityClass};
use crate::termlang::smoothness::smoothness_domain_check;

pub const RESOLVED_CONFIG_JSON: &str = "resolved-config.json";
pub const SPECTRAL_JSON: &str = "spectral.json";
pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const FIRST_APPROX_JSON: &str = "first-approx.json";
pub const LATTICE_JSON: &str = "lattice.json";
pub const SERIES_JSON: &str = "series.json";
pub const RESIDUALS_CSV: &str = "residuals.csv";
pub const REPORT_JSON: &str = "report.json";
pub const ERROR_JSON: &str = "error.json";

pub const SPECTRAL_SCHEMA: &str = "asympode.spectral/1";
pub const FIRST_APPROX_SCHEMA: &str = "asympode.first-approx/1";

/// A failed stage, annotated for exit-code mapping.
#[derive(Debug)]
pub enum StageError {
    /// Bad input: unreadable or invalid problem file, missing artifact.
    Input { stage: &'static str, errors: Vec<String> },
    /// The computation ran and failed: integration breakdown, no detectable
    /// rate, verification verdicts failed.
    Numerical { stage: &'static str, message: String },
    /// The method's hypotheses do not hold for this problem.
    Inapplicable { stage: &'static str, message: String },
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        match self {
            StageError::Input { .. } => 1,
            StageError::Numerical { .. } => 2,
            StageError::Inapplicable { .. } => 3,
        }
    }

    pub fn stage(&self) -> &'static str {
        match self {
            StageError::Input { stage, .. }
            | StageError::Numerical { stage, .. }
            | StageError::Inapplicable { stage, .. } => stage,
        }
    }

    pub fn messages(&self) -> Vec<String> {
        match self {
            StageError::Input { errors, .. } => errors.clone(),
            StageError::Numerical { message, .. } | StageError::Inapplicable { message, .. } => {
                vec![message.clone()]
            }
        }
    }
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.stage(), self.messages().join("; "))
    }
}

fn io_err(stage: &'static str, e: ReportError) -> StageError {
    StageError::Input { stage, errors: vec![e.to_string()] }
}

fn dynamics_err(stage: &'static str, e: DynamicsError) -> StageError {
    match e {
        DynamicsError::ZeroInitial | DynamicsError::Format(_) => {
            StageError::Input { stage, errors: vec![e.to_string()] }
        }
        other => StageError::Numerical { stage, message: other.to_string() },
    }
}

/// Maximum worker threads honored by the pipeline, from `ASYMPODE_THREADS`.
/// Every stage currently runs sequentially, so the cap is satisfied as long
/// as it is at least one; invalid values fall back to one with a warning.
pub fn thread_cap() -> usize {
    match std::env::var("ASYMPODE_THREADS") {
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => {
                eprintln!("warning: ASYMPODE_THREADS={v:?} is not a positive integer; using 1");
                1
            }
        },
    }
}

/// Creates the run directory and clears a stale failure record, so re-running
/// over an existing directory overwrites cleanly instead of merging.
pub fn prepare_run_dir(dir: &Path) -> Result<(), StageError> {
    std::fs::create_dir_all(dir).map_err(|e| StageError::Input {
        stage: "setup",
        errors: vec![format!("creating {}: {e}", dir.display())],
    })?;
    let stale = dir.join(ERROR_JSON);
    if stale.exists() {
        let _ = std::fs::remove_file(stale);
    }
    Ok(())
}

/// Writes the failure record for scripting; called by the binary on the way
/// to a nonzero exit.
pub fn write_error_record(dir: &Path, err: &StageError) {
    let value = json!({
        "schema": "asympode.error/1",
        "stage": err.stage(),
        "exit_code": err.exit_code(),
        "errors": err.messages(),
    });
    if let Ok(body) = serde_json::to_string_pretty(&value) {
        let _ = std::fs::write(dir.join(ERROR_JSON), body + "\n");
    }
}

fn write_json_artifact(dir: &Path, name: &str, value: &Value) -> Result<(), StageError> {
    let path = dir.join(name);
    let body = serde_json::to_string_pretty(value).map_err(|e| StageError::Input {
        stage: "emit",
        errors: vec![format!("{name}: {e}")],
    })?;
    std::fs::write(&path, body + "\n").map_err(|e| StageError::Input {
        stage: "emit",
        errors: vec![format!("writing {}: {e}", path.display())],
    })
}

/// Writes the fully resolved configuration back into the run directory.
pub fn write_resolved_config(dir: &Path, pf: &ProblemFile) -> Result<(), StageError> {
    let value = serde_json::to_value(pf).map_err(|e| StageError::Input {
        stage: "setup",
        errors: vec![e.to_string()],
    })?;
    write_json_artifact(dir, RESOLVED_CONFIG_JSON, &json!({
        "schema": "asympode.config/1",
        "config": value,
    }))
}

/// Eigendecomposition of the system matrix; failure means the problem lies
/// outside the framework (non-symmetric-positive spectrum), not bad input.
pub fn spectral_stage(vp: &ValidatedProblem, dir: &Path) -> Result<SpectralData, StageError> {
    let sd = decompose(&vp.matrix, vp.file.tolerances.snap).map_err(|e| {
        StageError::Inapplicable { stage: "spectral", message: e.to_string() }
    })?;
    write_json_artifact(dir, SPECTRAL_JSON, &json!({
        "schema": SPECTRAL_SCHEMA,
        "spectral": sd.to_json(),
    }))?;
    Ok(sd)
}

fn integration_options(vp: &ValidatedProblem) -> IntegrationOptions {
    IntegrationOptions {
        atol: vp.file.tolerances.abs,
        rtol: vp.file.tolerances.rel,
        n_samples: vp.file.n_samples,
        ..Default::default()
    }
}

/// Integrates the system, or reloads a stored trajectory when `reuse` is set
/// and `trajectory.csv` exists.
pub fn simulate_stage(
    vp: &ValidatedProblem,
    sd: &SpectralData,
    dir: &Path,
    reuse: bool,
) -> Result<Trajectory, StageError> {
    let path = dir.join(TRAJECTORY_CSV);
    if reuse && path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| StageError::Input {
            stage: "simulate",
            errors: vec![format!("reading {}: {e}", path.display())],
        })?;
        return Trajectory::from_csv(&text).map_err(|e| dynamics_err("simulate", e));
    }
    let traj = integrate(
        sd,
        &vp.spec,
        &vp.file.initial_condition,
        vp.file.horizon,
        &integration_options(vp),
    )
    .map_err(|e| dynamics_err("simulate", e))?;
    std::fs::write(&path, traj.to_csv(&sd.matrix)).map_err(|e| StageError::Input {
        stage: "simulate",
        errors: vec![format!("writing {}: {e}", path.display())],
    })?;
    Ok(traj)
}

/// Settling-rate hint for the limit fit: `α₁ = β₁ − 1` from the smallest
/// component degree, once the rule (if any) has materialized a few terms.
fn alpha1_hint(vp: &mut ValidatedProblem) -> Option<f64> {
    let _ = vp.spec.materialize_through(&rat_int(4));
    vp.spec
        .degrees()
        .first()
        .map(|d| crate::rational::rat_to_f64(d) - 1.0)
}

/// Detects `λ*` and `ξ*`, or reloads them when `reuse` is set and the
/// artifact exists.
pub fn first_approx_stage(
    vp: &mut ValidatedProblem,
    sd: &SpectralData,
    traj: &Trajectory,
    dir: &Path,
    reuse: bool,
) -> Result<FirstApproximation, StageError> {
    let path = dir.join(FIRST_APPROX_JSON);
    if reuse && path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| StageError::Input {
            stage: "first-approx",
            errors: vec![format!("reading {}: {e}", path.display())],
        })?;
        let value: Value = serde_json::from_str(&text).map_err(|e| StageError::Input {
            stage: "first-approx",
            errors: vec![format!("{}: {e}", path.display())],
        })?;
        let body = value.get("first_approx").cloned().unwrap_or(Value::Null);
        return serde_json::from_value(body).map_err(|e| StageError::Input {
            stage: "first-approx",
            errors: vec![format!("{}: {e}", path.display())],
        });
    }
    let alpha1 = alpha1_hint(vp);
    let fa = first_approximation(sd, traj, 0.2, alpha1)
        .map_err(|e| dynamics_err("first-approx", e))?;
    let value = serde_json::to_value(&fa).map_err(|e| StageError::Input {
        stage: "first-approx",
        errors: vec![e.to_string()],
    })?;
    write_json_artifact(dir, FIRST_APPROX_JSON, &json!({
        "schema": FIRST_APPROX_SCHEMA,
        "first_approx": value,
    }))?;
    Ok(fa)
}

/// Rejects the run when some factor of the nonlinearity is not smooth at the
/// fitted asymptotic direction.
pub fn smoothness_gate(
    vp: &ValidatedProblem,
    fa: &FirstApproximation,
) -> Result<(), StageError> {
    let report = smoothness_domain_check(&vp.spec, &fa.xi_star);
    if report.applicable {
        Ok(())
    } else {
        Err(StageError::Inapplicable { stage: "smoothness", message: report.to_string() })
    }
}

/// Builds the exponent lattice with `count` elements and stores it.
pub fn lattice_stage(
    vp: &mut ValidatedProblem,
    fa: &FirstApproximation,
    sd: &SpectralData,
    count: usize,
    dir: &Path,
) -> Result<ExponentLattice, StageError> {
    let lattice = build_lattice(sd, &fa.lambda_star, &mut vp.spec, count)
        .map_err(|e| StageError::Numerical { stage: "exponents", message: e.to_string() })?;
    write_lattice_json(&dir.join(LATTICE_JSON), &lattice).map_err(|e| io_err("exponents", e))?;
    Ok(lattice)
}

/// Computes the series terms and stores them.
pub fn expand_stage(
    vp: &mut ValidatedProblem,
    sd: &SpectralData,
    fa: &FirstApproximation,
    lattice: &ExponentLattice,
    traj: &Trajectory,
    dir: &Path,
) -> Result<ExpansionSeries, StageError> {
    let fitter = TrajectoryFitter {
        traj,
        lattice,
        atol: vp.file.tolerances.abs,
        rtol: vp.file.tolerances.rel,
    };
    let policy = if vp.fit_resonance {
        ResonancePolicy::Fit(&fitter)
    } else {
        ResonancePolicy::Zero
    };
    let series = expand(sd, &mut vp.spec, lattice, &fa.xi_star, vp.file.n_terms, &policy)
        .map_err(|e| match e {
            ExpansionError::InapplicableAtXi { .. } => {
                StageError::Inapplicable { stage: "expand", message: e.to_string() }
            }
            ExpansionError::FiniteModeExceeded { .. } => {
                StageError::Input { stage: "expand", errors: vec![e.to_string()] }
            }
            other => StageError::Numerical { stage: "expand", message: other.to_string() },
        })?;
    write_series_json(&dir.join(SERIES_JSON), &series).map_err(|e| io_err("expand", e))?;
    Ok(series)
}

/// Loads a stored series; `verify` run standalone refuses to silently
/// recompute what it is supposed to check.
pub fn load_series_artifact(dir: &Path) -> Result<ExpansionSeries, StageError> {
    let path = dir.join(SERIES_JSON);
    if !path.exists() {
        return Err(StageError::Input {
            stage: "verify",
            errors: vec![format!(
                "missing artifact {}: run the expand stage first",
                path.display()
            )],
        });
    }
    load_series_json(&path).map_err(|e| io_err("verify", e))
}

#[derive(Debug, Serialize)]
pub struct ClassificationSummary {
    pub class: String,
    /// Terms that forced the continuous-only class, with the rule that
    /// failed; uniqueness of the integrated solution is then a hypothesis,
    /// not a consequence.
    pub offending: Vec<String>,
}

impl ClassificationSummary {
    fn of(c: &Classification) -> ClassificationSummary {
        ClassificationSummary {
            class: match c.class {
                RegularityClass::LocallyLipschitz => "locally-lipschitz".into(),
                RegularityClass::ContinuousOnly => "continuous-only".into(),
            },
            offending: c
                .offending()
                .iter()
                .map(|t| {
                    format!(
                        "degree {} term {}: {}",
                        t.component_degree,
                        t.term_index + 1,
                        t.rule
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TrajectorySummary {
    pub end: EndReason,
    pub end_time: f64,
    pub accepted_steps: u64,
    pub rhs_evals: u64,
}

/// Everything `report.json` holds for one run.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub verification: VerificationReport,
    pub decay_bounds: DecayBounds,
    pub classification: ClassificationSummary,
    pub trajectory: TrajectorySummary,
}

impl RunReport {
    /// Terminal summary: one line per residual check, then the decay bounds.
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let v = &self.verification;
        let _ = writeln!(
            out,
            "lambda* = {}   terms = {}   resonance policy = {}",
            v.lambda_star, v.n_terms, v.policy
        );
        for c in &v.checks {
            let verdict = if c.pass { "pass" } else { "FAIL" };
            if c.vacuous {
                let _ = writeln!(
                    out,
                    "  u_{}: residual below resolution before {} usable samples \
                     (vacuous {verdict})",
                    c.n, c.n_samples
                );
                continue;
            }
            let slope = c.slope.map_or("<unfitted>".into(), |s| format!("{s:.6}"));
            let bound = if c.one_sided { "<=" } else { "~" };
            let _ = writeln!(
                out,
                "  u_{}: slope {slope} {bound} -{} (tol {:.4}, {} samples)  {verdict}",
                c.n, c.mu_next, c.tolerance, c.n_samples
            );
        }
        let d = &self.decay_bounds;
        let verdict = if d.pass { "pass" } else { "FAIL" };
        let _ = writeln!(
            out,
            "  decay bounds: slope {:.6} in [{:.6}, {:.6}]  {verdict}",
            d.slope, d.lo, d.hi
        );
        for c in &v.caveats {
            let _ = writeln!(out, "  caveat: {c}");
        }
        out
    }
}

/// Verifies the series against the trajectory, fits the decay bounds, and
/// writes `report.json` and `residuals.csv`.
pub fn verify_stage(
    vp: &ValidatedProblem,
    sd: &SpectralData,
    traj: &Trajectory,
    series: &ExpansionSeries,
    dir: &Path,
) -> Result<RunReport, StageError> {
    let n_max = vp.file.n_terms.saturating_sub(1).max(1);
    let mut v = verify(traj, series, n_max, &FitWindow::default());
    let decay = decay_bounds_check(sd, traj);
    let classification = ClassificationSummary::of(&classify(&vp.spec));
    if classification.class == "continuous-only" {
        v.report.caveats.push(
            "nonlinearity is continuous but not locally Lipschitz: the expansion \
             describes the integrated solution; uniqueness is assumed, not proven"
                .into(),
        );
    }
    write_residuals_csv(&dir.join(RESIDUALS_CSV), &v.streams)
        .map_err(|e| io_err("verify", e))?;
    let report = RunReport {
        schema: REPORT_SCHEMA,
        verification: v.report,
        decay_bounds: decay,
        classification,
        trajectory: TrajectorySummary {
            end: traj.end,
            end_time: traj.end_time,
            accepted_steps: traj.stats.accepted,
            rhs_evals: traj.stats.rhs_evals,
        },
    };
    let value = serde_json::to_value(&report).map_err(|e| StageError::Input {
        stage: "verify",
        errors: vec![e.to_string()],
    })?;
    write_json_artifact(dir, REPORT_JSON, &value)?;
    Ok(report)
}

/// Outcome of a full pipeline run whose stages all completed; the verdicts
/// inside decide between exit 0 and exit 2.
#[derive(Debug)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub report: RunReport,
    pub series: ExpansionSeries,
    pub failures: Vec<String>,
}

impl RunSummary {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Lists failed verdicts (residual checks and decay bounds); empty means the
/// run passes.
pub fn collect_failures(report: &RunReport) -> Vec<String> {
    let mut failures = Vec::new();
    for c in &report.verification.checks {
        if !c.pass {
            failures.push(format!(
                "residual u_{} decays at {} instead of {} (tolerance {:.3})",
                c.n,
                c.slope.map_or("<unfitted>".into(), |s| format!("{s:.6}")),
                -c.mu_next_f64,
                c.tolerance
            ));
        }
    }
    if !report.decay_bounds.pass {
        failures.push(format!(
            "trajectory decay slope {:.6} outside [{:.6}, {:.6}]",
            report.decay_bounds.slope, report.decay_bounds.lo, report.decay_bounds.hi
        ));
    }
    failures
}

/// Runs every stage in order, recomputing and overwriting all artifacts.
pub fn run_pipeline(mut vp: ValidatedProblem, dir: &Path) -> Result<RunSummary, StageError> {
    prepare_run_dir(dir)?;
    write_resolved_config(dir, &vp.file)?;
    let sd = spectral_stage(&vp, dir)?;
    let traj = simulate_stage(&vp, &sd, dir, false)?;
    let fa = first_approx_stage(&mut vp, &sd, &traj, dir, false)?;
    smoothness_gate(&vp, &fa)?;
    let lattice_count = vp.file.n_terms + 2;
    let lattice = lattice_stage(&mut vp, &fa, &sd, lattice_count, dir)?;
    let series = expand_stage(&mut vp, &sd, &fa, &lattice, &traj, dir)?;
    let report = verify_stage(&vp, &sd, &traj, &series, dir)?;
    let failures = collect_failures(&report);
    Ok(RunSummary { run_dir: dir.to_path_buf(), report, series, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic_problem() -> ValidatedProblem {
        let pf: ProblemFile = serde_json::from_value(serde_json::json!({
            "matrix": [["1"]],
            "nonlinearity": "[-x_1^3]",
            "initial_condition": [0.5],
            "horizon": 26.0,
            "n_terms": 4,
        }))
        .unwrap();
        pf.validate().unwrap()
    }

    #[test]
    fn cubic_pipeline_passes_and_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run_pipeline(cubic_problem(), dir.path()).unwrap();
        assert!(summary.all_pass(), "{:?}", summary.failures);
        for name in [
            RESOLVED_CONFIG_JSON,
            SPECTRAL_JSON,
            TRAJECTORY_CSV,
            FIRST_APPROX_JSON,
            LATTICE_JSON,
            SERIES_JSON,
            RESIDUALS_CSV,
            REPORT_JSON,
        ] {
            assert!(dir.path().join(name).exists(), "missing {name}");
        }
        assert!(!dir.path().join(ERROR_JSON).exists());
        // ξ* for y' + y = −y³ from y₀ = 1/2: closed form √(1/5).
        let xi = summary.series.xi_star[0];
        assert!((xi - 0.2_f64.sqrt()).abs() < 1e-7, "xi {xi}");
    }

    #[test]
    fn rerun_reproduces_series_bytes() {
        let dir = tempfile::tempdir().unwrap();
        run_pipeline(cubic_problem(), dir.path()).unwrap();
        let first = std::fs::read(dir.path().join(SERIES_JSON)).unwrap();
        let first_lattice = std::fs::read(dir.path().join(LATTICE_JSON)).unwrap();
        run_pipeline(cubic_problem(), dir.path()).unwrap();
        let second = std::fs::read(dir.path().join(SERIES_JSON)).unwrap();
        let second_lattice = std::fs::read(dir.path().join(LATTICE_JSON)).unwrap();
        assert_eq!(first, second);
        assert_eq!(first_lattice, second_lattice);
    }

    #[test]
    fn stages_compose_through_stored_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut vp = cubic_problem();
        prepare_run_dir(dir.path()).unwrap();
        let sd = spectral_stage(&vp, dir.path()).unwrap();
        let t1 = simulate_stage(&vp, &sd, dir.path(), false).unwrap();
        // Second call with reuse loads the stored CSV.
        let t2 = simulate_stage(&vp, &sd, dir.path(), true).unwrap();
        assert_eq!(t1.samples.len(), t2.samples.len());
        assert_eq!(t1.samples[7].y[0].to_bits(), t2.samples[7].y[0].to_bits());
        let fa1 = first_approx_stage(&mut vp, &sd, &t1, dir.path(), false).unwrap();
        let fa2 = first_approx_stage(&mut vp, &sd, &t2, dir.path(), true).unwrap();
        assert_eq!(fa1.xi_star[0].to_bits(), fa2.xi_star[0].to_bits());
    }

    #[test]
    fn verify_without_expand_is_a_missing_artifact_error() {
        let dir = tempfile::tempdir().unwrap();
        prepare_run_dir(dir.path()).unwrap();
        let err = load_series_artifact(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.messages()[0].contains("missing artifact"), "{err}");
    }

    #[test]
    fn bruno_style_problem_is_inapplicable_at_the_direction() {
        let pf: ProblemFile = serde_json::from_value(serde_json::json!({
            "matrix": [["1", "0"], ["0", "3"]],
            "nonlinearity": "[0, 3/2 * x_1^2 * sgnpow(x_2, 1/3)]",
            "initial_condition": [1.0, 0.0],
            "horizon": 18.0,
            "n_terms": 3,
        }))
        .unwrap();
        let vp = pf.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = run_pipeline(vp, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
        let msg = err.messages().join(" ");
        assert!(msg.contains("sgnpow(x_2, 1/3)"), "{msg}");
        write_error_record(dir.path(), &err);
        assert!(dir.path().join(ERROR_JSON).exists());
    }

    #[test]
    fn nondecaying_problem_fails_numerically() {
        let pf: ProblemFile = serde_json::from_value(serde_json::json!({
            "matrix": [["1"]],
            "nonlinearity": "[2 * x_1^3]",
            "mode": "h2",
            "initial_condition": [1.0],
            "horizon": 10.0,
        }))
        .unwrap();
        let vp = pf.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = run_pipeline(vp, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }

    #[test]
    fn thread_cap_reads_environment() {
        // Not parallel-safe to mutate env in tests broadly; just exercise the
        // default path.
        let n = thread_cap();
        assert!(n >= 1);
    }
}
