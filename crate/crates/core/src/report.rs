//! Verification of a computed series against a trajectory, and the artifact
//! emitters.
//!
//! For each depth `N` the residual `u_N(t) = y(t) − Σ_{n≤N} qₙ(t)e^{−μₙt}`
//! must decay at the next lattice rate `μ_{N+1}`. Residuals are formed in a
//! per-sample scaled frame (everything divided by the largest participating
//! magnitude) so that the cancellation between `y` and the partial sum is
//! computed without underflow at any depth the trajectory itself resolves.
//! The slope of `ln|u_N|` is fitted by least squares over the samples where
//! the residual is both past its pre-asymptotic range and above the noise of
//! the integration, then compared against `−μ_{N+1}`.
//!
//! Emitted artifacts (`series.json`, `lattice.json`, `report.json`,
//! `residuals.csv`) are deterministic: identical inputs produce identical
//! bytes. Floats are printed in shortest round-trip form and no timestamps or
//! environment data are embedded.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::expansion::ExpansionSeries;
use crate::exponents::ExponentLattice;
use crate::linalg::fit_line;
use crate::rational::rat_to_f64;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("artifact {path}: {detail}")]
    Format { path: String, detail: String },
}

/// Sample-selection rule for the slope fits, as fractions of the run's peak
/// magnitude: a residual sample is usable when `|u_N|` lies in
/// `[lo_rel, hi_rel] · scale` and resolvably above the integrator noise.
#[derive(Debug, Clone)]
pub struct FitWindow {
    /// Upper magnitude bound; excludes the pre-asymptotic range.
    pub hi_rel: f64,
    /// Lower magnitude bound; excludes the far noise floor.
    pub lo_rel: f64,
    /// Minimum usable samples for a fit; below this the check is vacuous.
    pub min_samples: usize,
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow { hi_rel: 1e-4, lo_rel: 1e-250, min_samples: 8 }
    }
}

/// Verdict for one residual depth.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualCheck {
    pub n: usize,
    /// Expected decay rate of `u_N`: the next lattice exponent, as text.
    pub mu_next: String,
    pub mu_next_f64: f64,
    /// Fitted decay rate of `ln|u_N|`, when enough samples were usable.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Allowed deviation of `slope + μ_{N+1}`.
    pub tolerance: f64,
    /// Whether only the one-sided bound applies (next term identically zero).
    pub one_sided: bool,
    /// Fit window actually used, in time.
    pub window: Option<(f64, f64)>,
    pub n_samples: usize,
    /// True when the residual sank below usable resolution before enough
    /// samples accumulated; such a check passes vacuously.
    pub vacuous: bool,
    pub pass: bool,
    pub note: Option<String>,
}

/// Outcome of verifying a series against a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub lambda_star: String,
    pub policy: String,
    pub n_terms: usize,
    /// Peak trajectory magnitude; fit-window bounds are relative to it.
    pub scale: f64,
    pub atol: f64,
    pub rtol: f64,
    pub checks: Vec<ResidualCheck>,
    pub caveats: Vec<String>,
    pub all_pass: bool,
}

/// Per-sample residual magnitudes, kept in log form so depth is not limited
/// by double range. `log_abs[k][i]` is `ln|u_{k+1}|` at sample `i`; minus
/// infinity marks a residual that sank below the sample's resolvable range.
#[derive(Debug, Clone)]
pub struct ResidualStreams {
    pub ts: Vec<f64>,
    pub log_abs: Vec<Vec<f64>>,
    /// `ln` of the relative resolution limit at each sample (integration
    /// noise plus round-off of the cancellation).
    pub log_noise: Vec<f64>,
}

pub struct Verification {
    pub report: VerificationReport,
    pub streams: ResidualStreams,
}

/// Computes residual streams for `N = 1..=n_max` and fits their decay rates.
///
/// `n_max` is clamped to one less than the number of computed terms, since
/// the check for depth `N` needs `μ_{N+1}`. The series must come from the
/// same problem as the trajectory; a `zero`-policy series with recorded
/// resonances gets a caveat instead of a hard failure.
pub fn verify(
    traj: &Trajectory,
    series: &ExpansionSeries,
    n_max: usize,
    window: &FitWindow,
) -> Verification {
    let dim = traj.dim;
    let mut caveats = Vec::new();

    let n_terms = series.n_terms();
    let n_checked = n_max.min(n_terms.saturating_sub(1));
    if n_checked < n_max {
        caveats.push(format!(
            "requested {n_max} residual checks but only {n_terms} terms are \
             computed; checking {n_checked}"
        ));
    }
    if series.policy == "zero" && series.resonances.iter().any(|r| !r.fitted) {
        caveats.push(
            "series built with the zero resonance policy while resonant rates \
             are present; the formal series need not match this particular \
             trajectory beyond the first resonant depth"
                .into(),
        );
    }

    let scale = traj
        .samples
        .iter()
        .map(|s| s.log_norm)
        .fold(f64::NEG_INFINITY, f64::max)
        .exp();
    // Relative resolution of one sample: integration tolerances plus a few
    // round-off units of the subtraction chain.
    let rel_noise = 10.0 * (traj.atol + traj.rtol) + (n_checked as f64 + 2.0) * 1e-15;

    let m_samples = traj.samples.len();
    let mut ts = Vec::with_capacity(m_samples);
    let mut log_abs = vec![Vec::with_capacity(m_samples); n_checked];
    let mut log_noise = Vec::with_capacity(m_samples);

    let mut qbuf = vec![0.0; dim];
    for s in &traj.samples {
        ts.push(s.t);
        // Common scale m: the largest participating magnitude at this t.
        let mut m = s.log_norm;
        let mut term_scale = Vec::with_capacity(n_checked);
        for term in series.terms.iter().take(n_checked) {
            term.poly.eval_into(s.t, &mut qbuf);
            let qa = qbuf.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let tl = if qa > 0.0 { -term.mu_f64 * s.t + qa.ln() } else { f64::NEG_INFINITY };
            term_scale.push(tl);
            m = m.max(tl);
        }
        log_noise.push(m + rel_noise.ln());

        // inner = u_N / e^m, updated incrementally over N.
        let wy = (s.log_norm - m).exp();
        let mut inner: Vec<f64> = s.dir.iter().map(|v| v * wy).collect();
        for (k, term) in series.terms.iter().take(n_checked).enumerate() {
            if term_scale[k] > f64::NEG_INFINITY {
                term.poly.eval_into(s.t, &mut qbuf);
                let w = (-term.mu_f64 * s.t - m).exp();
                for (acc, q) in inner.iter_mut().zip(&qbuf) {
                    *acc -= q * w;
                }
            }
            let r = inner.iter().map(|v| v * v).sum::<f64>().sqrt();
            log_abs[k].push(if r > 0.0 { m + r.ln() } else { f64::NEG_INFINITY });
        }
    }

    let streams = ResidualStreams { ts, log_abs, log_noise };

    let lo = (window.lo_rel * scale).ln();
    let hi = (window.hi_rel * scale).ln();
    let mut checks = Vec::with_capacity(n_checked);
    for n in 1..=n_checked {
        let mu_next = &series.terms[n].mu;
        let mu_next_f64 = series.terms[n].mu_f64;
        let mu_cur = series.terms[n - 1].mu_f64;
        // Half the local lattice gap, taking the tighter adjacent spacing.
        let mut gap = mu_next_f64 - mu_cur;
        if n + 1 < n_terms {
            gap = gap.min(series.terms[n + 1].mu_f64 - mu_next_f64);
        }
        let tolerance = (0.05 * mu_next_f64).max(0.5 * gap);
        let one_sided = series.terms[n].poly.is_zero();

        let mut fts = Vec::new();
        let mut fls = Vec::new();
        for (i, &l) in streams.log_abs[n - 1].iter().enumerate() {
            if l <= hi && l >= lo && l > streams.log_noise[i] {
                fts.push(streams.ts[i]);
                fls.push(l);
            }
        }

        let check = if fts.len() < window.min_samples {
            ResidualCheck {
                n,
                mu_next: crate::rational::fmt_rat(mu_next),
                mu_next_f64,
                slope: None,
                intercept: None,
                tolerance,
                one_sided,
                window: fts.first().map(|&a| (a, *fts.last().unwrap())),
                n_samples: fts.len(),
                vacuous: true,
                pass: true,
                note: Some(format!(
                    "residual below usable resolution ({} samples in window); \
                     vacuous pass",
                    fts.len()
                )),
            }
        } else {
            let (slope, intercept) = fit_line(&fts, &fls).unwrap_or((f64::NAN, f64::NAN));
            let dev = slope + mu_next_f64;
            let pass = if one_sided { dev <= tolerance } else { dev.abs() <= tolerance };
            ResidualCheck {
                n,
                mu_next: crate::rational::fmt_rat(mu_next),
                mu_next_f64,
                slope: Some(slope),
                intercept: Some(intercept),
                tolerance,
                one_sided,
                window: Some((fts[0], *fts.last().unwrap())),
                n_samples: fts.len(),
                vacuous: false,
                pass,
                note: if one_sided {
                    Some("next term vanishes; one-sided rate bound".into())
                } else {
                    None
                },
            }
        };
        checks.push(check);
    }

    let all_pass = checks.iter().all(|c| c.pass);
    let report = VerificationReport {
        lambda_star: crate::rational::fmt_rat(&series.lambda_star),
        policy: series.policy.clone(),
        n_terms,
        scale,
        atol: traj.atol,
        rtol: traj.rtol,
        checks,
        caveats,
        all_pass,
    };
    Verification { report, streams }
}

fn write_text(path: &Path, text: &str) -> Result<(), ReportError> {
    std::fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn to_pretty(path: &Path, value: &Value) -> Result<String, ReportError> {
    serde_json::to_string_pretty(value).map_err(|e| ReportError::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Writes the series as JSON. Reloading yields bitwise-identical polynomial
/// coefficients (floats are printed in shortest round-trip form).
pub fn write_series_json(path: &Path, series: &ExpansionSeries) -> Result<(), ReportError> {
    let value = serde_json::to_value(series).map_err(|e| ReportError::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let body = to_pretty(path, &json!({ "schema": SERIES_SCHEMA, "series": value }))?;
    write_text(path, &(body + "\n"))
}

pub const SERIES_SCHEMA: &str = "asympode.series/1";
pub const LATTICE_SCHEMA: &str = "asympode.lattice/1";
pub const REPORT_SCHEMA: &str = "asympode.report/1";

/// Loads a series written by [`write_series_json`].
pub fn load_series_json(path: &Path) -> Result<ExpansionSeries, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| ReportError::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let schema = value.get("schema").and_then(Value::as_str).unwrap_or("");
    if schema != SERIES_SCHEMA {
        return Err(ReportError::Format {
            path: path.display().to_string(),
            detail: format!("schema {schema:?}, expected {SERIES_SCHEMA:?}"),
        });
    }
    let series = value.get("series").cloned().ok_or_else(|| ReportError::Format {
        path: path.display().to_string(),
        detail: "missing series body".into(),
    })?;
    serde_json::from_value(series).map_err(|e| ReportError::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

pub fn write_lattice_json(path: &Path, lattice: &ExponentLattice) -> Result<(), ReportError> {
    let body = to_pretty(path, &json!({ "schema": LATTICE_SCHEMA, "lattice": lattice.to_json() }))?;
    write_text(path, &(body + "\n"))
}

pub fn write_report_json(path: &Path, report: &VerificationReport) -> Result<(), ReportError> {
    let value = serde_json::to_value(report).map_err(|e| ReportError::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let body = to_pretty(path, &json!({ "schema": REPORT_SCHEMA, "report": value }))?;
    write_text(path, &(body + "\n"))
}

/// Writes the residual magnitudes as CSV with columns `t, |u_1|, …, |u_N|`.
/// Values beyond double range are written as 0; this file is plot data, the
/// authoritative magnitudes live in the report's fitted quantities.
pub fn write_residuals_csv(path: &Path, streams: &ResidualStreams) -> Result<(), ReportError> {
    let mut out = String::new();
    out.push('t');
    for k in 1..=streams.log_abs.len() {
        let _ = write!(out, ",|u_{k}|");
    }
    out.push('\n');
    for (i, &t) in streams.ts.iter().enumerate() {
        let _ = write!(out, "{t}");
        for col in &streams.log_abs {
            let v = if col[i] > -745.0 { col[i].exp() } else { 0.0 };
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Plain-text lattice table, shared by the artifact emitters and the
/// command-line `exponents` listing.
pub fn lattice_table(lattice: &ExponentLattice) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>4}  {:>12}  {:>12}  {:>18}", "n", "mu_tilde", "mu", "mu_f64");
    for n in 1..=lattice.len() {
        let _ = writeln!(
            out,
            "{:>4}  {:>12}  {:>12}  {:>18}",
            n,
            crate::rational::fmt_rat(lattice.mu_tilde(n)),
            crate::rational::fmt_rat(lattice.mu(n)),
            rat_to_f64(lattice.mu(n)),
        );
    }
    out
}

/// Renders the eigendecomposition as a text table, one row per eigenspace.
pub fn spectral_table(sd: &crate::spectral::SpectralData) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>12}  {:>5}  basis", "lambda", "mult");
    for space in &sd.spaces {
        let basis = space
            .basis
            .iter()
            .map(|v| {
                let coords =
                    v.iter().map(|c| format!("{c:.6}")).collect::<Vec<_>>().join(", ");
                format!("({coords})")
            })
            .collect::<Vec<_>>()
            .join("  ");
        let snapped = if space.snapped { " (snapped)" } else { "" };
        let _ = writeln!(
            out,
            "{:>12}  {:>5}  {}{}",
            crate::rational::fmt_rat(&space.value),
            space.multiplicity,
            basis,
            snapped,
        );
    }
    for w in &sd.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{first_approximation, integrate, IntegrationOptions, TrajectoryFitter};
    use crate::expansion::{expand, ResonancePolicy};
    use crate::exponents::build_lattice;
    use crate::linalg::Mat;
    use crate::rational::{rat, rat_int};
    use crate::spectral::decompose;
    use crate::termlang::{parser::parse_nonlinearity, NonlinearitySpec, SpecMode};

    fn diag(vals: &[f64]) -> Mat {
        let mut m = Mat::zeros(vals.len(), vals.len());
        for (i, v) in vals.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Full pipeline helper: integrate, detect, expand with the fit policy.
    fn pipeline(
        a: Mat,
        grammar: Option<&str>,
        y0: &[f64],
        horizon: f64,
        n_terms: usize,
    ) -> (Trajectory, ExpansionSeries) {
        let dim = y0.len();
        let sd = decompose(&a, 1e-9).unwrap();
        let mut spec = match grammar {
            Some(g) => parse_nonlinearity(g, dim, SpecMode::Infinite).unwrap(),
            None => NonlinearitySpec::zero(dim),
        };
        let opts = IntegrationOptions::default();
        let traj = integrate(&sd, &spec, y0, horizon, &opts).unwrap();
        // Rule-backed specs materialize components on demand; pull degrees
        // through a small bound for the settling-gap hint.
        spec.materialize_through(&rat_int(4)).unwrap();
        let alpha1 = spec.degrees().first().map(|d| rat_to_f64(d) - 1.0);
        let fa = first_approximation(&sd, &traj, 0.2, alpha1).unwrap();
        let lattice = build_lattice(&sd, &fa.lambda_star, &mut spec, n_terms + 2).unwrap();
        let fitter =
            TrajectoryFitter { traj: &traj, lattice: &lattice, atol: opts.atol, rtol: opts.rtol };
        let series = expand(
            &sd,
            &mut spec,
            &lattice,
            &fa.xi_star,
            n_terms,
            &ResonancePolicy::Fit(&fitter),
        )
        .unwrap();
        (traj, series)
    }

    #[test]
    fn linear_second_mode_slope_is_exact() {
        // diag(1,3), both modes excited: u_1 is exactly the second mode.
        let (traj, series) =
            pipeline(diag(&[1.0, 3.0]), None, &[0.9, 0.4], 30.0, 2);
        let v = verify(&traj, &series, 1, &FitWindow::default());
        assert_eq!(v.report.checks.len(), 1);
        let c = &v.report.checks[0];
        assert!(c.pass, "{c:?}");
        assert!(!c.vacuous);
        let slope = c.slope.unwrap();
        assert!((slope + 3.0).abs() < 0.01, "slope {slope}");
        assert!(v.report.all_pass);
    }

    #[test]
    fn cubic_slopes_match_next_rates() {
        let (traj, series) =
            pipeline(diag(&[1.0]), Some("[-x_1^3]"), &[0.5], 28.0, 3);
        let v = verify(&traj, &series, 2, &FitWindow::default());
        let s1 = v.report.checks[0].slope.unwrap();
        let s2 = v.report.checks[1].slope.unwrap();
        assert!((s1 + 3.0).abs() < 0.05 * 3.0, "u_1 slope {s1}");
        assert!((s2 + 5.0).abs() < 0.05 * 5.0, "u_2 slope {s2}");
        assert!(v.report.all_pass, "{:?}", v.report.checks);
    }

    #[test]
    fn staircase_first_residual_decays_at_four_thirds() {
        let (traj, series) = pipeline(
            diag(&[1.0]),
            Some("comp(norm2(x)^{1/3} * x; norm2(x)^{1/4}; 8)"),
            &[0.4],
            40.0,
            2,
        );
        assert_eq!(series.terms[1].mu, rat(4, 3));
        let v = verify(&traj, &series, 1, &FitWindow::default());
        let c = &v.report.checks[0];
        assert!(!c.vacuous, "{c:?}");
        let slope = c.slope.unwrap();
        assert!((slope + 4.0 / 3.0).abs() < 0.05 * (4.0 / 3.0), "slope {slope}");
        assert!(c.pass);
    }

    #[test]
    fn fitted_linear_residual_underflows_to_vacuous_pass() {
        // With q_2 fitted, u_2 for a linear flow is pure integration noise.
        let (traj, series) =
            pipeline(diag(&[1.0, 2.0]), None, &[0.8, 0.3], 20.0, 3);
        let v = verify(&traj, &series, 2, &FitWindow::default());
        let c2 = &v.report.checks[1];
        assert!(c2.vacuous, "{c2:?}");
        assert!(c2.pass);
        assert!(v.report.all_pass);
    }

    #[test]
    fn zero_policy_with_resonance_is_caveated() {
        let sd = decompose(&diag(&[1.0, 2.0]), 1e-9).unwrap();
        let mut spec = NonlinearitySpec::zero(2);
        let opts = IntegrationOptions::default();
        let traj = integrate(&sd, &spec, &[0.8, 0.3], 20.0, &opts).unwrap();
        let fa = first_approximation(&sd, &traj, 0.2, None).unwrap();
        let mut degrees = crate::termlang::FixedDegrees(vec![]);
        let lattice = build_lattice(&sd, &fa.lambda_star, &mut degrees, 4).unwrap();
        let series =
            expand(&sd, &mut spec, &lattice, &fa.xi_star, 2, &ResonancePolicy::Zero).unwrap();
        let v = verify(&traj, &series, 1, &FitWindow::default());
        assert!(v.report.caveats.iter().any(|c| c.contains("zero resonance policy")));
    }

    #[test]
    fn synthetic_pure_exponential_slope_recovers_rate() {
        // Slope fitting itself: ln of c·e^{−at} over ≥ 20 samples.
        let a = 1.75_f64;
        let ts: Vec<f64> = (0..25).map(|i| 2.0 + 0.37 * i as f64).collect();
        let ls: Vec<f64> = ts.iter().map(|t| 0.6_f64.ln() - a * t).collect();
        let (slope, intercept) = fit_line(&ts, &ls).unwrap();
        assert!((slope + a).abs() < 1e-6);
        assert!((intercept - 0.6_f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn later_terms_never_worsen_the_tail() {
        // Asymptotic improvement, on the final quarter of u_2's fit window.
        let (traj, series) =
            pipeline(diag(&[1.0]), Some("[-x_1^3]"), &[0.5], 28.0, 3);
        let v = verify(&traj, &series, 2, &FitWindow::default());
        let (w0, w1) = v.report.checks[1].window.unwrap();
        let from = w1 - 0.25 * (w1 - w0);
        let mut checked = 0;
        for (i, &t) in v.streams.ts.iter().enumerate() {
            if t >= from && t <= w1 {
                let l1 = v.streams.log_abs[0][i];
                let l2 = v.streams.log_abs[1][i];
                assert!(l2 <= l1, "t = {t}: {l2} > {l1}");
                checked += 1;
            }
        }
        assert!(checked >= 5, "only {checked} tail samples");
    }

    #[test]
    fn series_json_round_trips_bitwise() {
        let (_, series) = pipeline(diag(&[1.0]), Some("[-x_1^3]"), &[0.5], 18.0, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.json");
        write_series_json(&path, &series).unwrap();
        let loaded = load_series_json(&path).unwrap();
        assert_eq!(loaded.terms.len(), series.terms.len());
        for (a, b) in loaded.terms.iter().zip(&series.terms) {
            assert_eq!(a.mu, b.mu);
            assert_eq!(a.poly.coeffs.len(), b.poly.coeffs.len());
            for (ca, cb) in a.poly.coeffs.iter().zip(&b.poly.coeffs) {
                for (x, y) in ca.iter().zip(cb) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
        assert_eq!(loaded.xi_star.len(), series.xi_star.len());
        for (x, y) in loaded.xi_star.iter().zip(&series.xi_star) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn emitters_are_byte_stable() {
        let (traj, series) = pipeline(diag(&[1.0]), Some("[-x_1^3]"), &[0.5], 18.0, 2);
        let sd = decompose(&diag(&[1.0]), 1e-9).unwrap();
        let mut degrees = crate::termlang::FixedDegrees(vec![rat_int(3)]);
        let lattice = build_lattice(&sd, &rat_int(1), &mut degrees, 5).unwrap();
        let v = verify(&traj, &series, 1, &FitWindow::default());

        let dir = tempfile::tempdir().unwrap();
        let mut rounds: Vec<Vec<u8>> = Vec::new();
        for round in 0..2 {
            let p_series = dir.path().join(format!("series-{round}.json"));
            let p_lattice = dir.path().join(format!("lattice-{round}.json"));
            let p_report = dir.path().join(format!("report-{round}.json"));
            let p_resid = dir.path().join(format!("residuals-{round}.csv"));
            write_series_json(&p_series, &series).unwrap();
            write_lattice_json(&p_lattice, &lattice).unwrap();
            write_report_json(&p_report, &v.report).unwrap();
            write_residuals_csv(&p_resid, &v.streams).unwrap();
            let mut all = Vec::new();
            for p in [p_series, p_lattice, p_report, p_resid] {
                all.extend(std::fs::read(p).unwrap());
            }
            rounds.push(all);
        }
        assert_eq!(rounds[0], rounds[1]);
    }

    #[test]
    fn residuals_csv_has_expected_shape() {
        let (traj, series) = pipeline(diag(&[1.0]), Some("[-x_1^3]"), &[0.5], 18.0, 3);
        let v = verify(&traj, &series, 2, &FitWindow::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("residuals.csv");
        write_residuals_csv(&path, &v.streams).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,|u_1|,|u_2|");
        let n_rows = lines.clone().count();
        assert_eq!(n_rows, traj.samples.len());
        for line in lines {
            assert_eq!(line.split(',').count(), 3);
            let u1: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!(u1.is_finite() && u1 >= 0.0);
        }
    }

    #[test]
    fn lattice_table_lists_odd_rates() {
        let sd = decompose(&diag(&[1.0]), 1e-9).unwrap();
        let mut degrees = crate::termlang::FixedDegrees(vec![rat_int(3)]);
        let lattice = build_lattice(&sd, &rat_int(1), &mut degrees, 4).unwrap();
        let table = lattice_table(&lattice);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[1].contains(" 1"));
        assert!(lines[2].contains(" 3"));
        assert!(lines[3].contains(" 5"));
        assert!(lines[4].contains(" 7"));
    }

    #[test]
    fn one_sided_bound_applies_when_next_term_vanishes() {
        // Hand-build a series whose second term is the zero polynomial while
        // the trajectory's first residual decays faster than μ_2.
        let (traj, mut series) = pipeline(diag(&[1.0, 3.0]), None, &[0.9, 0.4], 30.0, 2);
        series.terms[1].poly = crate::vecpoly::VectorPoly::zero(2);
        series.terms[1].mu = rat_int(2);
        series.terms[1].mu_f64 = 2.0;
        let v = verify(&traj, &series, 1, &FitWindow::default());
        let c = &v.report.checks[0];
        assert!(c.one_sided);
        // Residual decays at 3, faster than the stated next rate 2: passes
        // one-sided, would fail two-sided.
        assert!(c.pass, "{c:?}");
        let slope = c.slope.unwrap();
        assert!(slope < -2.5);
    }
}
