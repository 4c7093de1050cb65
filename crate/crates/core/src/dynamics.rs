//! Trajectory integration and first-approximation extraction.
//!
//! The integrator is an embedded Dormand–Prince 5(4) pair with the standard
//! quartic dense-output interpolant. The state is carried in log-magnitude
//! form `(ρ, u)` with `y = e^ρ u`, `|u| = 1` for the whole run: a decaying
//! solution leaves the range where plain coordinates with an absolute
//! tolerance track it long before it leaves the range of doubles, while in
//! log form the standard tolerances control `ln|y|` and the unit direction,
//! which is relative accuracy at any depth of decay. The nonlinearity is
//! evaluated through its per-component homogeneous scaling so no intermediate
//! quantity underflows. Runs stop at the [`MAG_FLOOR`] magnitude.

use crate::exponents::ExponentLattice;
use crate::expansion::{ResonantFitter, SeriesTerm};
use crate::linalg::{dot, fit_line, norm, Mat};
use crate::rational::{rat_to_f64, Rat};
use crate::spectral::SpectralData;
use crate::termlang::NonlinearitySpec;
use crate::vecpoly::VectorPoly;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magnitude at which integration stops.
pub const MAG_FLOOR: f64 = 1e-280;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("initial condition is zero; decay analysis needs a nontrivial solution")]
    ZeroInitial,
    #[error("integration stalled at t = {t:.6e} (step {h:.3e}): {detail}")]
    StepFailure { t: f64, h: f64, detail: String },
    #[error(
        "trajectory decayed only {orders:.2} orders of magnitude (need {need}); \
         extend the horizon"
    )]
    InsufficientDecay { orders: f64, need: f64 },
    #[error(
        "tail decay rate {estimate:.9} is {distance:.3e} from the nearest eigenvalue \
         {nearest:.9}, above the snap tolerance {tol:.3e}"
    )]
    AmbiguousRate {
        estimate: f64,
        nearest: f64,
        distance: f64,
        tol: f64,
    },
    #[error(
        "fitted limit has norm {norm:.3e} below {threshold:.3e}; the solution decays \
         at a higher rate than the detected eigenvalue — retry with a longer horizon"
    )]
    ZeroLimit { norm: f64, threshold: f64 },
    #[error("eigen-residual {residual:.3e} of the fitted limit exceeds 1e-6")]
    EigenResidual { residual: f64 },
    #[error("trajectory has too few usable samples ({have}, need {need})")]
    TooFewSamples { have: usize, need: usize },
    #[error("trajectory data: {0}")]
    Format(String),
}

/// Integrator configuration.
#[derive(Debug, Clone)]
pub struct IntegrationOptions {
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: u64,
    /// Uniform sample-grid size over `[0, horizon]` (endpoints included).
    pub n_samples: usize,
    /// `|y| > nondecay_factor · |y₀|` terminates the run as non-decaying.
    pub nondecay_factor: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            atol: 1e-12,
            rtol: 1e-12,
            max_steps: 10_000_000,
            n_samples: 2001,
            nondecay_factor: 10.0,
        }
    }
}

/// One trajectory sample. `y` is the reconstructed state (zero when the
/// magnitude is below the double range); `log_norm = ln|y|` and the unit
/// direction `dir` stay meaningful down to the magnitude floor.
#[derive(Debug, Clone, Serialize)]
pub struct Sample {
    pub t: f64,
    pub y: Vec<f64>,
    pub log_norm: f64,
    pub dir: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EndReason {
    HorizonReached,
    MagnitudeFloor,
    NonDecay,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
    pub min_step: f64,
    pub max_step: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dim: usize,
    pub samples: Vec<Sample>,
    pub end: EndReason,
    pub end_time: f64,
    pub stats: StepStats,
    pub atol: f64,
    pub rtol: f64,
    pub method: &'static str,
}

/// Dirichlet quotient `(Ay·y)/|y|²` from a unit direction.
pub fn dirichlet_quotient(a: &Mat, dir: &[f64]) -> f64 {
    let nn = dot(dir, dir);
    if nn == 0.0 {
        return f64::NAN;
    }
    dot(&a.matvec(dir), dir) / nn
}

impl Trajectory {
    /// CSV export: comment header with run metadata, then one row per sample
    /// with columns `t, y_1..y_d, |y|, dirichlet_quotient, log_norm,
    /// dir_1..dir_d`.
    pub fn to_csv(&self, a: &Mat) -> String {
        let mut out = String::new();
        out.push_str(&format!("# method: {}\n", self.method));
        out.push_str(&format!("# atol: {:e}\n# rtol: {:e}\n", self.atol, self.rtol));
        out.push_str(&format!("# end: {:?}\n# end_time: {}\n", self.end, self.end_time));
        out.push('t');
        for i in 0..self.dim {
            out.push_str(&format!(",y_{}", i + 1));
        }
        out.push_str(",norm,dirichlet_quotient,log_norm");
        for i in 0..self.dim {
            out.push_str(&format!(",dir_{}", i + 1));
        }
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!("{}", s.t));
            for v in &s.y {
                out.push_str(&format!(",{v}"));
            }
            let q = dirichlet_quotient(a, &s.dir);
            out.push_str(&format!(",{},{},{}", s.log_norm.exp(), q, s.log_norm));
            for v in &s.dir {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Reads a trajectory back from [`Trajectory::to_csv`] output.
    pub fn from_csv(text: &str) -> Result<Trajectory, DynamicsError> {
        let bad = |m: &str| DynamicsError::Format(m.to_string());
        let mut end = EndReason::HorizonReached;
        let mut end_time = None;
        let mut atol = 0.0;
        let mut rtol = 0.0;
        let mut dim = None;
        let mut samples = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("end:") {
                    end = match v.trim() {
                        "HorizonReached" => EndReason::HorizonReached,
                        "MagnitudeFloor" => EndReason::MagnitudeFloor,
                        "NonDecay" => EndReason::NonDecay,
                        other => return Err(bad(&format!("unknown end reason {other}"))),
                    };
                } else if let Some(v) = rest.strip_prefix("end_time:") {
                    end_time = Some(v.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?);
                } else if let Some(v) = rest.strip_prefix("atol:") {
                    atol = v.trim().parse().unwrap_or(0.0);
                } else if let Some(v) = rest.strip_prefix("rtol:") {
                    rtol = v.trim().parse().unwrap_or(0.0);
                }
                continue;
            }
            if line.starts_with('t') {
                let cols = line.split(',').count();
                // t, d state columns, norm, quotient, log_norm, d direction columns.
                if cols < 5 || (cols - 4) % 2 != 0 {
                    return Err(bad("unexpected column count in header"));
                }
                dim = Some((cols - 4) / 2);
                continue;
            }
            let d = dim.ok_or_else(|| bad("data row before header"))?;
            let vals: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(&e.to_string()))?;
            if vals.len() != 2 * d + 4 {
                return Err(bad("row length does not match header"));
            }
            samples.push(Sample {
                t: vals[0],
                y: vals[1..1 + d].to_vec(),
                log_norm: vals[d + 3],
                dir: vals[d + 4..].to_vec(),
            });
        }
        let dim = dim.ok_or_else(|| bad("no header row"))?;
        if samples.is_empty() {
            return Err(bad("no samples"));
        }
        let end_time = end_time.unwrap_or_else(|| samples.last().unwrap().t);
        Ok(Trajectory {
            dim,
            samples,
            end,
            end_time,
            stats: StepStats::default(),
            atol,
            rtol,
            method: "dopri5",
        })
    }

    /// Sample index with `t` closest to the requested time.
    pub fn nearest_sample(&self, t: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, s) in self.samples.iter().enumerate() {
            let d = (s.t - t).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }
}

// Dormand–Prince 5(4) coefficients (autonomous systems: no stage times).
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Error weights b − b̂.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense-output weights.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Right-hand side in log-magnitude form. The state is `z = (ρ, u)` with
/// `y = e^ρ u` and `|u| = 1` up to per-step drift.
struct Rhs<'a> {
    a: &'a Mat,
    spec: &'a NonlinearitySpec,
    tmp: Vec<f64>,
    evals: u64,
}

impl Rhs<'_> {
    fn eval(&mut self, z: &[f64], out: &mut [f64]) {
        self.evals += 1;
        let (rho, u) = (z[0], &z[1..]);
        self.spec.evaluate_scaled_into(rho, u, &mut self.tmp);
        let au = self.a.matvec(u);
        // g = e^{−ρ}(−A e^ρ u + F(e^ρ u)); ρ' = g·u/|u|², u' = g − ρ'u.
        for (g, a) in self.tmp.iter_mut().zip(&au) {
            *g -= a;
        }
        let p = dot(&self.tmp, u) / dot(u, u);
        out[0] = p;
        for i in 0..u.len() {
            out[i + 1] = self.tmp[i] - p * u[i];
        }
    }
}

/// Quartic dense-output interpolant over one accepted step.
struct Dense {
    t: f64,
    h: f64,
    cont: [Vec<f64>; 5],
}

impl Dense {
    fn build(t: f64, h: f64, z: &[f64], z1: &[f64], k: &[Vec<f64>; 7]) -> Dense {
        let n = z.len();
        let mut c0 = vec![0.0; n];
        let mut c1 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        let mut c3 = vec![0.0; n];
        let mut c4 = vec![0.0; n];
        for i in 0..n {
            let dy = z1[i] - z[i];
            let bspl = h * k[0][i] - dy;
            c0[i] = z[i];
            c1[i] = dy;
            c2[i] = bspl;
            c3[i] = dy - h * k[6][i] - bspl;
            c4[i] = h
                * (D1 * k[0][i]
                    + D3 * k[2][i]
                    + D4 * k[3][i]
                    + D5 * k[4][i]
                    + D6 * k[5][i]
                    + D7 * k[6][i]);
        }
        Dense { t, h, cont: [c0, c1, c2, c3, c4] }
    }

    fn eval(&self, t: f64, out: &mut [f64]) {
        let th = ((t - self.t) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let [c0, c1, c2, c3, c4] = &self.cont;
        for i in 0..out.len() {
            out[i] = c0[i] + th * (c1[i] + th1 * (c2[i] + th * (c3[i] + th1 * c4[i])));
        }
    }
}

/// Time within one accepted step at which the interpolated `ln|y|` crosses
/// `target`, found by bisection. Returns the crossed side of the bracket.
fn dense_log_crossing(dense: &Dense, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    let n = dense.cont[0].len();
    let mut buf = vec![0.0; n];
    dense.eval(lo, &mut buf);
    let mut lo_above = buf[0] + norm(&buf[1..]).ln() > target;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        dense.eval(mid, &mut buf);
        let above = buf[0] + norm(&buf[1..]).ln() > target;
        if above == lo_above {
            lo = mid;
            lo_above = above;
        } else {
            hi = mid;
        }
    }
    hi
}

fn sample_from_state(t: f64, z: &[f64]) -> Sample {
    let u = &z[1..];
    let n = norm(u);
    let log_norm = z[0] + n.ln();
    let dir: Vec<f64> = u.iter().map(|v| v / n).collect();
    let mag = if log_norm > -700.0 { log_norm.exp() } else { 0.0 };
    let y = dir.iter().map(|v| v * mag).collect();
    Sample { t, y, log_norm, dir }
}

/// Integrates `y' + Ay = F(y)` from `y₀` over `[0, horizon]`.
///
/// Stops early when the magnitude hits [`MAG_FLOOR`] or exceeds
/// `nondecay_factor · |y₀|`; both outcomes keep the samples collected so far
/// and are recorded in [`Trajectory::end`].
pub fn integrate(
    sd: &SpectralData,
    spec: &NonlinearitySpec,
    y0: &[f64],
    horizon: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory, DynamicsError> {
    let dim = sd.dim;
    assert_eq!(y0.len(), dim, "initial condition dimension mismatch");
    let n0 = norm(y0);
    if n0 == 0.0 {
        return Err(DynamicsError::ZeroInitial);
    }
    if horizon <= 0.0 || horizon.is_nan() || horizon.is_infinite() {
        return Err(DynamicsError::Format(format!("horizon {horizon} is not positive")));
    }
    let log_ceiling = n0.ln() + opts.nondecay_factor.ln();
    let log_floor = MAG_FLOOR.ln();

    let mut rhs = Rhs { a: &sd.matrix, spec, tmp: vec![0.0; dim], evals: 0 };
    // State (ρ, u): the error control then bounds ln|y| and the unit
    // direction, i.e. the relative accuracy, at every depth of decay.
    let mut z: Vec<f64> = Vec::with_capacity(dim + 1);
    z.push(n0.ln());
    z.extend(y0.iter().map(|v| v / n0));
    let mut t = 0.0_f64;
    let mut stats = StepStats { min_step: f64::INFINITY, ..Default::default() };

    let n_samples = opts.n_samples.max(2);
    let grid_dt = horizon / (n_samples - 1) as f64;
    let mut next_sample = 0usize;
    let mut samples: Vec<Sample> = Vec::with_capacity(n_samples);
    samples.push(sample_from_state(0.0, &z));
    next_sample += 1;

    // Initial step size from the RHS magnitude; the log state has scale one.
    let mut k1 = vec![0.0; dim + 1];
    rhs.eval(&z, &mut k1);
    let f_scale = norm(&k1).max(1e-12);
    let mut h = (0.01 / f_scale).min(horizon / 10.0).max(1e-8);

    let mut fsal: Option<Vec<f64>> = Some(k1.clone());
    let mut end = EndReason::HorizonReached;
    let mut steps: u64 = 0;

    'outer: while t < horizon {
        if steps >= opts.max_steps {
            return Err(DynamicsError::StepFailure {
                t,
                h,
                detail: format!("step budget {} exhausted", opts.max_steps),
            });
        }
        steps += 1;
        let hmin = 1e-14 * t.abs().max(1.0);
        if horizon - t <= hmin {
            // Remaining span is below float resolution: the horizon is reached.
            t = horizon;
            break;
        }
        h = h.min(horizon - t);
        if h < hmin {
            return Err(DynamicsError::StepFailure {
                t,
                h,
                detail: "minimum step size reached".into(),
            });
        }

        let n = z.len();
        let mut k: [Vec<f64>; 7] = Default::default();
        k[0] = match fsal.take() {
            Some(v) => v,
            None => {
                let mut v = vec![0.0; n];
                rhs.eval(&z, &mut v);
                v
            }
        };
        let mut stage = vec![0.0; n];
        macro_rules! combine {
            ($($w:expr => $j:expr),+) => {{
                for i in 0..n {
                    stage[i] = z[i] $(+ h * $w * k[$j][i])+;
                }
            }};
        }
        combine!(A21 => 0);
        let mut k1v = vec![0.0; n];
        rhs.eval(&stage, &mut k1v);
        k[1] = k1v;
        combine!(A31 => 0, A32 => 1);
        let mut k2v = vec![0.0; n];
        rhs.eval(&stage, &mut k2v);
        k[2] = k2v;
        combine!(A41 => 0, A42 => 1, A43 => 2);
        let mut k3v = vec![0.0; n];
        rhs.eval(&stage, &mut k3v);
        k[3] = k3v;
        combine!(A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        let mut k4v = vec![0.0; n];
        rhs.eval(&stage, &mut k4v);
        k[4] = k4v;
        combine!(A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        let mut k5v = vec![0.0; n];
        rhs.eval(&stage, &mut k5v);
        k[5] = k5v;
        // Fifth-order solution (b row equals the last a row: FSAL).
        let mut z1 = vec![0.0; n];
        for i in 0..n {
            z1[i] = z[i]
                + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
        }
        k[6] = vec![0.0; n];
        rhs.eval(&z1, &mut k[6]);

        let mut err_acc = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k[0][i]
                    + E3 * k[2][i]
                    + E4 * k[3][i]
                    + E5 * k[4][i]
                    + E6 * k[5][i]
                    + E7 * k[6][i]);
            // ρ carries ln|y|: holding its error to the absolute tolerance is
            // what keeps |y| accurate in relative terms, so its large values
            // must not loosen the scale.
            let sc = if i == 0 {
                opts.atol + opts.rtol
            } else {
                opts.atol + opts.rtol * z[i].abs().max(z1[i].abs())
            };
            err_acc += (e / sc) * (e / sc);
        }
        let err = (err_acc / n as f64).sqrt();

        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.25;
            continue;
        }
        if err > 1.0 {
            stats.rejected += 1;
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            continue;
        }

        // Accepted.
        stats.accepted += 1;
        stats.min_step = stats.min_step.min(h);
        stats.max_step = stats.max_step.max(h);
        let dense = Dense::build(t, h, &z, &z1, &k);
        let t_new = t + h;

        // Far-tail steps grow without bound once the direction settles, so a
        // single step can overshoot the floor or ceiling by a wide margin;
        // locate the crossing on the interpolant instead of stopping at the
        // step endpoint.
        let ln_end = z1[0] + norm(&z1[1..]).ln();
        let mut t_stop = t_new;
        if ln_end < log_floor {
            end = EndReason::MagnitudeFloor;
            t_stop = dense_log_crossing(&dense, t, t_new, log_floor);
        } else if ln_end > log_ceiling {
            end = EndReason::NonDecay;
            t_stop = dense_log_crossing(&dense, t, t_new, log_ceiling);
        }

        let mut interp = vec![0.0; n];
        while next_sample < n_samples {
            let ts = next_sample as f64 * grid_dt;
            if ts > t_stop + 1e-12 * horizon {
                break;
            }
            dense.eval(ts, &mut interp);
            samples.push(sample_from_state(ts, &interp));
            next_sample += 1;
        }

        if end != EndReason::HorizonReached {
            // Close the run with the state at the crossing itself.
            if samples.last().is_none_or(|s| t_stop - s.t > 1e-9 * grid_dt) {
                dense.eval(t_stop, &mut interp);
                samples.push(sample_from_state(t_stop, &interp));
            }
            t = t_stop;
            break 'outer;
        }

        t = t_new;
        z = z1;
        fsal = Some(k[6].clone());

        // Fold the drift of |u| back into ρ. The FSAL derivative only goes
        // stale when the fold moves the state materially.
        let nu = norm(&z[1..]);
        z[0] += nu.ln();
        for v in &mut z[1..] {
            *v /= nu;
        }
        if (nu - 1.0).abs() > 1e-12 {
            fsal = None;
        }

        let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        h *= fac;
    }

    // Exact-horizon sample if the grid endpoint was not emitted inside a step.
    if end == EndReason::HorizonReached && next_sample == n_samples - 1 {
        samples.push(sample_from_state(horizon, &z));
    }
    stats.rhs_evals = rhs.evals;
    if stats.min_step == f64::INFINITY {
        stats.min_step = 0.0;
    }
    Ok(Trajectory {
        dim,
        samples,
        end,
        end_time: t,
        stats,
        atol: opts.atol,
        rtol: opts.rtol,
        method: "dopri5",
    })
}

/// First asymptotic approximation `y(t) ≈ e^{−λ*t} ξ*`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FirstApproximation {
    #[serde(with = "crate::rational::rat_string")]
    pub lambda_star: Rat,
    pub lambda_star_f64: f64,
    /// Index of `λ*` among the distinct eigenvalues.
    pub n0: usize,
    pub xi_star: Vec<f64>,
    pub eigen_residual: f64,
    pub quotient_median: f64,
    /// Max − min of the Dirichlet quotient over the fit window.
    pub quotient_spread: f64,
    /// Decay rate of `|e^{λ*t}y(t) − ξ*|` fitted on the window, when that
    /// residual stays above float noise.
    pub residual_slope: Option<f64>,
    pub window: (f64, f64),
    pub n_samples: usize,
}

impl FirstApproximation {
    /// `ξ*` projected onto the eigenspace of `λ*` (an exact eigenvector).
    pub fn projected_xi(&self, sd: &SpectralData) -> Vec<f64> {
        sd.project(self.n0, &self.xi_star)
    }
}

/// Tail-window indices: the last `window_frac` of the time span, restricted
/// to samples below the convergence gate, with a small-sample fallback.
fn tail_window(traj: &Trajectory, window_frac: f64) -> Vec<usize> {
    let t_end = traj.samples.last().map_or(0.0, |s| s.t);
    let t_from = t_end * (1.0 - window_frac.clamp(0.01, 1.0));
    let gate = 1e-6_f64.ln();
    let picked: Vec<usize> = traj
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.t >= t_from && s.log_norm <= gate && s.log_norm.is_finite())
        .map(|(i, _)| i)
        .collect();
    if picked.len() >= 8 {
        return picked;
    }
    let n = traj.samples.len();
    let take = 8.min(n);
    (n - take..n).collect()
}

/// Detects `(λ*, ξ*)` from the trajectory tail.
///
/// The decay rate comes from the median Dirichlet quotient over the window,
/// snapped to the nearest eigenvalue of `A` (within a quarter of the minimal
/// eigenvalue gap). `ξ*` is the constant of a least-squares fit of
/// `e^{λ*t}y(t)` against `{1, e^{−gt}}`, where the nuisance rate `g` is the
/// expected next exponent gap: the distance to the next eigenvalue, or
/// `α₁λ*` when the lowest homogeneity excess `α₁ = β₁ − 1` is supplied.
pub fn first_approximation(
    sd: &SpectralData,
    traj: &Trajectory,
    window_frac: f64,
    alpha1: Option<f64>,
) -> Result<FirstApproximation, DynamicsError> {
    let first = traj.samples.first().ok_or(DynamicsError::TooFewSamples { have: 0, need: 8 })?;
    let last = traj.samples.last().unwrap();
    let orders = (first.log_norm - last.log_norm) / std::f64::consts::LN_10;
    if orders < 6.0 {
        return Err(DynamicsError::InsufficientDecay { orders, need: 6.0 });
    }

    let idx = tail_window(traj, window_frac);
    if idx.len() < 4 {
        return Err(DynamicsError::TooFewSamples { have: idx.len(), need: 4 });
    }
    let mut quotients: Vec<f64> = idx
        .iter()
        .map(|&i| dirichlet_quotient(&sd.matrix, &traj.samples[i].dir))
        .collect();
    quotients.sort_by(|a, b| a.total_cmp(b));
    let median = quotients[quotients.len() / 2];
    let spread = quotients[quotients.len() - 1] - quotients[0];

    let j = sd.nearest_index(median);
    let nearest = sd.spaces[j].value_f64;
    let distance = (median - nearest).abs();
    let snap_tol = if sd.n_distinct() == 1 { f64::INFINITY } else { 0.25 * sd.min_gap() };
    if distance > snap_tol {
        return Err(DynamicsError::AmbiguousRate {
            estimate: median,
            nearest,
            distance,
            tol: snap_tol,
        });
    }
    let lambda = nearest;

    // w(t) = e^{λ*t} y(t), computed in log form; exact up to rounding since
    // the window magnitudes are O(|ξ*|).
    let t0 = traj.samples[idx[0]].t;
    let w_at = |i: usize| -> Vec<f64> {
        let s = &traj.samples[i];
        let mag = (lambda * s.t + s.log_norm).exp();
        s.dir.iter().map(|v| v * mag).collect()
    };

    let gap_eigen = if j + 1 < sd.n_distinct() {
        Some(sd.spaces[j + 1].value_f64 - lambda)
    } else {
        None
    };
    let gap_alpha = alpha1.map(|a| a * lambda);
    let g = match (gap_eigen, gap_alpha) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (x, None) => x,
        (None, y) => y,
    };

    // Least-squares constant with an optional e^{−gt} nuisance column. The
    // residual sum of squares doubles as a settledness check below.
    let dim = traj.dim;
    let m = idx.len();
    let mut xi = vec![0.0; dim];
    let mut rss = 0.0;
    match g {
        Some(g) if m >= 3 => {
            let mut design = Mat::zeros(m, 2);
            for (r, &i) in idx.iter().enumerate() {
                design[(r, 0)] = 1.0;
                design[(r, 1)] = (-g * (traj.samples[i].t - t0)).exp();
            }
            for (c, xi_c) in xi.iter_mut().enumerate() {
                let ys: Vec<f64> = idx.iter().map(|&i| w_at(i)[c]).collect();
                match crate::linalg::lstsq(&design, &ys) {
                    Some(beta) => {
                        *xi_c = beta[0];
                        for (r, y) in ys.iter().enumerate() {
                            let p = beta[0] + beta[1] * design[(r, 1)];
                            rss += (y - p) * (y - p);
                        }
                    }
                    None => {
                        *xi_c = ys.iter().sum::<f64>() / m as f64;
                        rss += ys.iter().map(|y| (y - *xi_c) * (y - *xi_c)).sum::<f64>();
                    }
                }
            }
        }
        _ => {
            for &i in &idx {
                let w = w_at(i);
                for c in 0..dim {
                    xi[c] += w[c] / m as f64;
                }
            }
            for &i in &idx {
                let w = w_at(i);
                for c in 0..dim {
                    rss += (w[c] - xi[c]) * (w[c] - xi[c]);
                }
            }
        }
    }

    // A fitted constant buried under the window scatter means e^{λ*t}y has
    // no settled limit at this horizon; so does a constant at round-off size.
    let scale = first.log_norm.exp();
    let xi_norm = norm(&xi);
    let fit_rms = (rss / (m as f64 * dim as f64)).sqrt();
    let threshold = (1e-10 * scale).max(0.5 * fit_rms);
    if xi_norm < threshold {
        return Err(DynamicsError::ZeroLimit { norm: xi_norm, threshold });
    }
    let axi = sd.matrix.matvec(&xi);
    let eigen_residual = {
        let mut acc = 0.0;
        for i in 0..dim {
            let r = axi[i] - lambda * xi[i];
            acc += r * r;
        }
        acc.sqrt() / xi_norm
    };
    if eigen_residual > 1e-6 {
        return Err(DynamicsError::EigenResidual { residual: eigen_residual });
    }

    // Diagnostic: decay of |w(t) − ξ*| across the window.
    let mut ts = Vec::new();
    let mut ls = Vec::new();
    for &i in &idx {
        let w = w_at(i);
        let mut acc = 0.0;
        for c in 0..dim {
            let r = w[c] - xi[c];
            acc += r * r;
        }
        let r = acc.sqrt();
        if r > 1e-14 * xi_norm {
            ts.push(traj.samples[i].t);
            ls.push(r.ln());
        }
    }
    let residual_slope = if ts.len() >= 4 { fit_line(&ts, &ls).map(|(s, _)| s) } else { None };

    Ok(FirstApproximation {
        lambda_star: sd.spaces[j].value.clone(),
        lambda_star_f64: lambda,
        n0: j,
        xi_star: xi,
        eigen_residual,
        quotient_median: median,
        quotient_spread: spread,
        residual_slope,
        window: (traj.samples[idx[0]].t, traj.samples[*idx.last().unwrap()].t),
        n_samples: m,
    })
}

/// Two-sided exponential decay bounds fitted on the trajectory tail.
#[derive(Debug, Clone, Serialize)]
pub struct DecayBounds {
    pub slope: f64,
    pub intercept: f64,
    /// Admissible slope interval `[−(Λ_d+δ), −(Λ₁−δ)]`, `δ = 0.05·Λ_d`.
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
    /// `ln` of the measured lower-bound constant: `min ln|y| + Λ_d t`.
    pub log_c1: f64,
    /// `ln` of the measured upper-bound constant: `max ln|y| + Λ₁ t`.
    pub log_c2: f64,
    pub window: (f64, f64),
    pub n_samples: usize,
}

/// Fits `ln|y|` on the tail and checks the slope against the spectral range.
pub fn decay_bounds_check(sd: &SpectralData, traj: &Trajectory) -> DecayBounds {
    let idx = tail_window(traj, 0.2);
    let ts: Vec<f64> = idx.iter().map(|&i| traj.samples[i].t).collect();
    let ls: Vec<f64> = idx.iter().map(|&i| traj.samples[i].log_norm).collect();
    let (slope, intercept) = fit_line(&ts, &ls).unwrap_or((f64::NAN, f64::NAN));
    let l1 = sd.lambda_min();
    let ld = sd.lambda_max();
    let delta = 0.05 * ld;
    let lo = -(ld + delta);
    let hi = -(l1 - delta);
    let mut log_c1 = f64::INFINITY;
    let mut log_c2 = f64::NEG_INFINITY;
    for &i in &idx {
        let s = &traj.samples[i];
        log_c1 = log_c1.min(s.log_norm + ld * s.t);
        log_c2 = log_c2.max(s.log_norm + l1 * s.t);
    }
    DecayBounds {
        slope,
        intercept,
        lo,
        hi,
        pass: slope.is_finite() && lo <= slope && slope <= hi,
        log_c1,
        log_c2,
        window: (ts.first().copied().unwrap_or(0.0), ts.last().copied().unwrap_or(0.0)),
        n_samples: idx.len(),
    }
}

/// Resonant-constant fitter backed by a reference trajectory.
///
/// For a resonant expansion step at rate `μₙ` the free constant is recovered
/// by weighted least squares on `v(t) = e^{μₙt}(y(t) − Σ_{k<n} qₖ(t)e^{−μₖt})
/// − pₙ(t)`. Nuisance columns `t^j e^{−g₁t}, t^j e^{−g₂t}` absorb the next
/// two lattice corrections; the weights combine the integrator noise model
/// (relative accuracy at every depth, growing like e^{(μₙ−λ*)t}) with a
/// model-error floor `B(1+(g₁t)³)e^{−g₂t}` for corrections beyond those
/// columns. `B` is not known a priori, so it is estimated from the fit
/// residuals and the fit repeated: problems whose series terminates keep
/// their full early-sample precision (B stays zero), contaminated ones move
/// the effective window to where model error and integrator noise balance.
pub struct TrajectoryFitter<'a> {
    pub traj: &'a Trajectory,
    pub lattice: &'a ExponentLattice,
    pub atol: f64,
    pub rtol: f64,
}

impl TrajectoryFitter<'_> {
    /// Gaps from μₙ to the next two lattice rates; the lattice is built with
    /// slack, so the fallbacks only fire on degenerate inputs.
    fn gaps_after(&self, n: usize, mu: f64) -> (f64, f64) {
        let gap = |k: usize| -> Option<f64> {
            if k <= self.lattice.len() {
                let g = rat_to_f64(self.lattice.mu(k)) - mu;
                if g > 0.0 {
                    return Some(g);
                }
            }
            None
        };
        let g1 = gap(n + 1).unwrap_or_else(|| {
            if self.lattice.len() >= 2 {
                let g = rat_to_f64(self.lattice.mu(2)) - rat_to_f64(self.lattice.mu(1));
                if g > 0.0 {
                    return g;
                }
            }
            1.0
        });
        let g2 = gap(n + 2).unwrap_or(2.0 * g1).max(g1 * 1.0000001);
        (g1, g2)
    }
}

/// Weighted least squares with greedy forward selection over `cand` columns.
/// Column 0 (the constant) is always included; further columns join only
/// while they cut the weighted residual sum decisively, which keeps the
/// design well conditioned when the data carries no structure beyond the
/// constant. Returns the selected column indices and their coefficients.
fn select_columns(cand: &[Vec<f64>], w: &[f64], v: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let k = v.len();
    let wls = |sel: &[usize]| -> Option<(Vec<f64>, f64)> {
        let mut design = Mat::zeros(k, sel.len());
        for (r, wr) in w.iter().enumerate() {
            for (cidx, &j) in sel.iter().enumerate() {
                design[(r, cidx)] = wr * cand[j][r];
            }
        }
        let ys: Vec<f64> = v.iter().zip(w).map(|(vi, wi)| vi * wi).collect();
        let beta = crate::linalg::lstsq(&design, &ys)?;
        let mut rss = 0.0;
        for (r, (vi, wi)) in v.iter().zip(w).enumerate() {
            let p: f64 = sel.iter().zip(&beta).map(|(&j, b)| b * cand[j][r]).sum();
            let e = wi * (vi - p);
            rss += e * e;
        }
        Some((beta, rss))
    };
    let mut sel = vec![0usize];
    let (mut beta, mut rss) = match wls(&sel) {
        Some(f) => f,
        None => {
            let sw: f64 = w.iter().sum();
            let mean =
                v.iter().zip(w).map(|(vi, wi)| vi * wi).sum::<f64>() / sw.max(1e-300);
            return (sel, vec![mean]);
        }
    };
    let max_cols = 4.min(cand.len());
    while sel.len() < max_cols && k > sel.len() + 3 {
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for j in 1..cand.len() {
            if sel.contains(&j) {
                continue;
            }
            let mut trial = sel.clone();
            trial.push(j);
            if let Some((b, r)) = wls(&trial) {
                if best.as_ref().is_none_or(|(_, _, br)| r < *br) {
                    best = Some((j, b, r));
                }
            }
        }
        let Some((j, b, r)) = best else { break };
        let dof = (k - sel.len() - 1) as f64;
        // The column must explain far more variance than one noise degree of
        // freedom, or it is refused.
        let f_stat = (rss - r) / (r / dof + 1e-300);
        if f_stat <= 25.0 {
            break;
        }
        sel.push(j);
        beta = b;
        rss = r;
    }
    (sel, beta)
}

impl ResonantFitter for TrajectoryFitter<'_> {
    fn constant(
        &self,
        n: usize,
        _block: usize,
        mu: &Rat,
        terms: &[SeriesTerm],
        particular: &VectorPoly,
    ) -> Vec<f64> {
        let dim = self.traj.dim;
        let mu_f = rat_to_f64(mu);
        let (g1, g2) = self.gaps_after(n, mu_f);

        // v(t) and its numeric noise scale per sample. The integrator keeps
        // |y| relatively accurate at any depth, drifting by at most the step
        // tolerance per accepted step, so the envelope grows with the step
        // count up to t.
        let steps_per_unit =
            self.traj.stats.accepted as f64 / self.traj.end_time.max(1e-9);
        let drift = |t: f64| (self.atol + self.rtol) * (1.0 + 0.5 * steps_per_unit * t);
        let mut times = Vec::new();
        let mut vs: Vec<Vec<f64>> = Vec::new();
        let mut noises = Vec::new();
        let mut tmp = vec![0.0; dim];
        for s in &self.traj.samples {
            let exp_y = mu_f * s.t + s.log_norm;
            if exp_y > 600.0 {
                break;
            }
            let mag_y = exp_y.exp();
            let mut v: Vec<f64> = s.dir.iter().map(|d| d * mag_y).collect();
            let mut cancel = mag_y;
            for term in terms {
                let w = ((mu_f - term.mu_f64) * s.t).exp();
                term.poly.eval_into(s.t, &mut tmp);
                let mut tn = 0.0;
                for (vi, pi) in v.iter_mut().zip(&tmp) {
                    *vi -= w * pi;
                    tn += (w * pi) * (w * pi);
                }
                cancel = cancel.max(tn.sqrt());
            }
            particular.eval_into(s.t, &mut tmp);
            for (vi, pi) in v.iter_mut().zip(&tmp) {
                *vi -= pi;
            }
            let noise = drift(s.t) * mag_y + 4e-16 * cancel + 1e-300;
            times.push(s.t);
            vs.push(v);
            noises.push(noise);
        }
        if times.is_empty() {
            return vec![0.0; dim];
        }

        // Usable window: numeric noise small against the signal scale.
        let i_best = (0..noises.len())
            .min_by(|&a, &b| noises[a].total_cmp(&noises[b]))
            .unwrap();
        let signal = norm(&vs[i_best]);
        let mut idx: Vec<usize> = (0..times.len())
            .filter(|&i| noises[i] <= 0.05 * signal + 1e-290)
            .collect();
        if idx.len() < 6 {
            let mut order: Vec<usize> = (0..times.len()).collect();
            order.sort_by(|&a, &b| noises[a].total_cmp(&noises[b]));
            order.truncate(12.min(times.len()));
            order.sort_unstable();
            idx = order;
        }

        let t0 = times[idx[0]];
        let ncols = match idx.len() {
            k if k >= 18 => 6,
            k if k >= 8 => 4,
            k if k >= 4 => 2,
            _ => 1,
        };
        // Raw nuisance columns; the constant is column 0.
        let col = |j: usize, tau: f64| -> f64 {
            match j {
                0 => 1.0,
                1 => (-g1 * tau).exp(),
                2 => tau * (-g1 * tau).exp(),
                3 => (-g2 * tau).exp(),
                4 => tau * tau * (-g1 * tau).exp(),
                _ => tau * (-g2 * tau).exp(),
            }
        };
        // Envelope shape of corrections beyond the columns.
        let shape = |tau: f64| (1.0 + (g1 * tau).powi(3)) * (-g2 * tau).exp();

        let k = idx.len();
        let raw_cols: Vec<Vec<f64>> = (0..ncols)
            .map(|j| idx.iter().map(|&i| col(j, times[i] - t0)).collect())
            .collect();
        let mut c = vec![0.0; dim];
        let mut model_b = 0.0_f64;
        for _pass in 0..3 {
            let weights: Vec<f64> = idx
                .iter()
                .map(|&i| 1.0 / (noises[i] + model_b * shape(times[i] - t0)))
                .collect();
            let mut fits: Vec<(Vec<usize>, Vec<f64>)> = Vec::with_capacity(dim);
            for coord in 0..dim {
                let v: Vec<f64> = idx.iter().map(|&i| vs[i][coord]).collect();
                let fit = select_columns(&raw_cols, &weights, &v);
                c[coord] = fit.1[0];
                fits.push(fit);
            }
            // Estimate the unmodeled-correction amplitude from residuals that
            // stand clear of the numeric noise; refit only if it grew.
            let mut b_next = 0.0_f64;
            for (r, &i) in idx.iter().enumerate() {
                let tau = times[i] - t0;
                let sh = shape(tau);
                if sh < 1e-290 {
                    continue;
                }
                for (coord, (sel, beta)) in fits.iter().enumerate() {
                    let predicted: f64 = sel
                        .iter()
                        .zip(beta)
                        .map(|(&j, b)| b * raw_cols[j][r])
                        .sum();
                    let excess = (vs[i][coord] - predicted).abs() - 3.0 * noises[i];
                    if excess > 0.0 {
                        b_next = b_next.max(excess / sh);
                    }
                }
            }
            let _ = k;
            if b_next <= model_b * 1.0625 {
                break;
            }
            model_b = b_next;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::build_lattice;
    use crate::expansion::{evaluate_series, expand, ResonancePolicy};
    use crate::rational::{rat, rat_int};
    use crate::spectral::decompose;
    use crate::termlang::{parser::parse_nonlinearity, FixedDegrees, SpecMode};

    fn diag(values: &[f64]) -> Mat {
        let n = values.len();
        let mut m = Mat::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    fn sd_of(m: Mat) -> SpectralData {
        decompose(&m, 1e-9).unwrap()
    }

    #[test]
    fn linear_flow_matches_exponentials() {
        let sd = sd_of(diag(&[1.0, 2.0]));
        let spec = NonlinearitySpec::zero(2);
        let opts = IntegrationOptions { n_samples: 11, ..Default::default() };
        let traj = integrate(&sd, &spec, &[1.0, 1.0], 1.0, &opts).unwrap();
        let s = &traj.samples[traj.nearest_sample(1.0)];
        assert!((s.t - 1.0).abs() < 1e-12);
        assert!((s.y[0] - (-1.0f64).exp()).abs() < 1e-10);
        assert!((s.y[1] - (-2.0f64).exp()).abs() < 1e-10);
        assert_eq!(traj.end, EndReason::HorizonReached);
    }

    fn cubic_problem() -> (SpectralData, NonlinearitySpec) {
        let sd = sd_of(diag(&[1.0]));
        let spec = parse_nonlinearity("[-x_1^3]", 1, SpecMode::Finite).unwrap();
        (sd, spec)
    }

    fn cubic_exact(y0: f64, t: f64) -> f64 {
        let c = (1.0 + y0 * y0) / (y0 * y0);
        (-t).exp() / (c - (-2.0 * t).exp()).sqrt()
    }

    #[test]
    fn cubic_matches_bernoulli_solution() {
        let (sd, spec) = cubic_problem();
        let traj = integrate(&sd, &spec, &[0.5], 10.0, &IntegrationOptions::default()).unwrap();
        for s in &traj.samples {
            let exact = cubic_exact(0.5, s.t);
            assert!(
                (s.y[0] - exact).abs() < 1e-9,
                "t = {}: {} vs {}",
                s.t,
                s.y[0],
                exact
            );
        }
    }

    #[test]
    fn ratio_nonlinearity_is_tolerance_consistent() {
        // Scalar version of the norm-ratio system: the scaled solution e^t y
        // must agree across a tolerance halving.
        let sd = sd_of(diag(&[1.0]));
        let spec = parse_nonlinearity(
            "comp(norm2(x)^{1/3} * x; norm2(x)^{1/4}; 6)",
            1,
            SpecMode::Infinite,
        )
        .unwrap();
        let coarse = IntegrationOptions { n_samples: 201, ..Default::default() };
        let fine = IntegrationOptions {
            atol: 5e-13,
            rtol: 5e-13,
            n_samples: 201,
            ..Default::default()
        };
        // Settling of e^t y goes like e^{−t/3} here, so the horizon must be
        // deep enough for the tail check below.
        let ta = integrate(&sd, &spec, &[0.1], 36.0, &coarse).unwrap();
        let tb = integrate(&sd, &spec, &[0.1], 36.0, &fine).unwrap();
        for (sa, sb) in ta.samples.iter().zip(&tb.samples) {
            let wa = sa.t + sa.log_norm;
            let wb = sb.t + sb.log_norm;
            assert!((wa.exp() - wb.exp()).abs() < 1e-9);
        }
        // e^t|y| settles to a positive constant.
        let tail = &ta.samples[150..];
        let w_end = (tail.last().unwrap().t + tail.last().unwrap().log_norm).exp();
        assert!(w_end > 0.0);
        for s in tail {
            let w = (s.t + s.log_norm).exp();
            assert!((w - w_end).abs() < 1e-3 * w_end);
        }
    }

    #[test]
    fn log_phase_extends_past_double_underflow() {
        let sd = sd_of(diag(&[2.0]));
        let spec = NonlinearitySpec::zero(1);
        let opts = IntegrationOptions { n_samples: 2001, ..Default::default() };
        let traj = integrate(&sd, &spec, &[1.0], 400.0, &opts).unwrap();
        assert_eq!(traj.end, EndReason::MagnitudeFloor);
        // ln|y| = −2t crosses ln(1e−280) ≈ −644.8 near t ≈ 322.4.
        assert!((traj.end_time - 322.4).abs() < 2.0, "end at {}", traj.end_time);
        for s in &traj.samples {
            assert!((s.log_norm + 2.0 * s.t).abs() < 1e-6, "t = {}", s.t);
        }
        // Reconstructed coordinates stay meaningful far below the old
        // absolute-tolerance range.
        let deep = &traj.samples[traj.nearest_sample(300.0)];
        let expect = (-2.0 * deep.t).exp();
        assert!((deep.y[0].abs() - expect).abs() < 2e-6 * expect);
        assert!((deep.dir[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn growth_is_flagged_as_nondecay() {
        let sd = sd_of(diag(&[1.0]));
        let spec = parse_nonlinearity("[2 * x_1^3]", 1, SpecMode::Finite).unwrap();
        let traj = integrate(&sd, &spec, &[1.0], 50.0, &IntegrationOptions::default()).unwrap();
        assert_eq!(traj.end, EndReason::NonDecay);
        assert!(traj.end_time < 50.0);
        assert!(!traj.samples.is_empty());
    }

    #[test]
    fn zero_initial_condition_is_rejected() {
        let sd = sd_of(diag(&[1.0, 2.0]));
        let spec = NonlinearitySpec::zero(2);
        let err = integrate(&sd, &spec, &[0.0, 0.0], 1.0, &IntegrationOptions::default());
        assert!(matches!(err, Err(DynamicsError::ZeroInitial)));
    }

    #[test]
    fn eigenvector_start_detects_second_eigenvalue() {
        let sd = sd_of(diag(&[1.0, 3.0]));
        let spec = NonlinearitySpec::zero(2);
        let traj = integrate(&sd, &spec, &[0.0, 0.7], 10.0, &IntegrationOptions::default())
            .unwrap();
        let fa = first_approximation(&sd, &traj, 0.2, None).unwrap();
        assert_eq!(fa.lambda_star, rat_int(3));
        assert_eq!(fa.n0, 1);
        assert!((fa.xi_star[0]).abs() < 1e-9);
        assert!((fa.xi_star[1] - 0.7).abs() < 1e-9);
        assert!(fa.eigen_residual <= 1e-6);
    }

    #[test]
    fn cubic_first_approximation_matches_closed_form() {
        let (sd, spec) = cubic_problem();
        let traj = integrate(&sd, &spec, &[0.5], 30.0, &IntegrationOptions::default()).unwrap();
        let fa = first_approximation(&sd, &traj, 0.2, Some(2.0)).unwrap();
        assert_eq!(fa.lambda_star, rat_int(1));
        // ξ* = y₀/√(1+y₀²) = 5^{−1/2}·... = 0.4472135954999579 for y₀ = 1/2.
        assert!(
            (fa.xi_star[0] - 0.447_213_595_499_957_9).abs() < 1e-7,
            "xi = {}",
            fa.xi_star[0]
        );
        assert!(fa.quotient_spread < 1e-6);
        if let Some(s) = fa.residual_slope {
            assert!(s < -0.5, "residual slope {s}");
        }
    }

    #[test]
    fn tolerance_halving_keeps_rate_and_limit() {
        let (sd, spec) = cubic_problem();
        let base = IntegrationOptions::default();
        let halved = IntegrationOptions { atol: 5e-13, rtol: 5e-13, ..Default::default() };
        let t1 = integrate(&sd, &spec, &[0.5], 30.0, &base).unwrap();
        let t2 = integrate(&sd, &spec, &[0.5], 30.0, &halved).unwrap();
        let f1 = first_approximation(&sd, &t1, 0.2, Some(2.0)).unwrap();
        let f2 = first_approximation(&sd, &t2, 0.2, Some(2.0)).unwrap();
        assert_eq!(f1.lambda_star, f2.lambda_star);
        let rel = (f1.xi_star[0] - f2.xi_star[0]).abs() / f1.xi_star[0].abs();
        assert!(rel <= 1e-7, "relative shift {rel}");
    }

    #[test]
    fn no_sample_is_exactly_zero() {
        let (sd, spec) = cubic_problem();
        let traj = integrate(&sd, &spec, &[0.5], 30.0, &IntegrationOptions::default()).unwrap();
        for s in &traj.samples {
            assert!(s.log_norm.is_finite());
        }
    }

    fn synthetic_trajectory(samples: Vec<Sample>) -> Trajectory {
        Trajectory {
            dim: samples[0].y.len(),
            end_time: samples.last().unwrap().t,
            samples,
            end: EndReason::HorizonReached,
            stats: StepStats::default(),
            atol: 1e-12,
            rtol: 1e-12,
            method: "synthetic",
        }
    }

    #[test]
    fn midgap_rate_is_ambiguous() {
        let sd = sd_of(diag(&[1.0, 2.0]));
        // Decay at rate 3/2 along a mixed direction: the quotient sits in the
        // middle of the gap and must not snap.
        let dir = [0.5f64.sqrt(), 0.5f64.sqrt()];
        let samples: Vec<Sample> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.1;
                let ln = -1.5 * t;
                Sample {
                    t,
                    y: dir.iter().map(|d| d * ln.exp()).collect(),
                    log_norm: ln,
                    dir: dir.to_vec(),
                }
            })
            .collect();
        let traj = synthetic_trajectory(samples);
        let err = first_approximation(&sd, &traj, 0.2, None);
        assert!(matches!(err, Err(DynamicsError::AmbiguousRate { .. })), "{err:?}");
    }

    #[test]
    fn alternating_direction_yields_zero_limit() {
        let sd = sd_of(diag(&[1.0, 2.0]));
        let samples: Vec<Sample> = (0..400)
            .map(|i| {
                let t = i as f64 * 0.1;
                let ln = -t;
                let sgn = if i % 2 == 0 { 1.0 } else { -1.0 };
                Sample {
                    t,
                    y: vec![sgn * ln.exp(), 0.0],
                    log_norm: ln,
                    dir: vec![sgn, 0.0],
                }
            })
            .collect();
        let traj = synthetic_trajectory(samples);
        let err = first_approximation(&sd, &traj, 0.2, None);
        assert!(matches!(err, Err(DynamicsError::ZeroLimit { .. })), "{err:?}");
    }

    #[test]
    fn short_decay_is_reported() {
        let sd = sd_of(diag(&[1.0]));
        let spec = NonlinearitySpec::zero(1);
        let traj = integrate(&sd, &spec, &[1.0], 2.0, &IntegrationOptions::default()).unwrap();
        let err = first_approximation(&sd, &traj, 0.2, None);
        assert!(matches!(err, Err(DynamicsError::InsufficientDecay { .. })), "{err:?}");
    }

    #[test]
    fn decay_bounds_cover_generic_and_fast_starts() {
        let sd = sd_of(diag(&[1.0, 2.0]));
        let spec = NonlinearitySpec::zero(2);
        let generic = integrate(&sd, &spec, &[0.8, 0.4], 25.0, &IntegrationOptions::default())
            .unwrap();
        let b = decay_bounds_check(&sd, &generic);
        assert!(b.pass, "slope {} outside [{}, {}]", b.slope, b.lo, b.hi);
        assert!((b.slope + 1.0).abs() < 0.02);

        let fast = integrate(&sd, &spec, &[0.0, 0.9], 25.0, &IntegrationOptions::default())
            .unwrap();
        let b2 = decay_bounds_check(&sd, &fast);
        assert!(b2.pass);
        assert!((b2.slope + 2.0).abs() < 0.02);
        assert!(b2.log_c1.is_finite() && b2.log_c2.is_finite());
    }

    #[test]
    fn csv_round_trips_samples_exactly() {
        let (sd, spec) = cubic_problem();
        let opts = IntegrationOptions { n_samples: 51, ..Default::default() };
        let traj = integrate(&sd, &spec, &[0.5], 8.0, &opts).unwrap();
        let text = traj.to_csv(&sd.matrix);
        let back = Trajectory::from_csv(&text).unwrap();
        assert_eq!(back.dim, 1);
        assert_eq!(back.end, EndReason::HorizonReached);
        assert_eq!(back.samples.len(), traj.samples.len());
        for (a, b) in traj.samples.iter().zip(&back.samples) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.y, b.y);
            assert_eq!(a.log_norm, b.log_norm);
            assert_eq!(a.dir, b.dir);
        }
    }

    #[test]
    fn fitted_resonance_reproduces_linear_two_mode_flow() {
        // F ≡ 0 with modes e^{−t} and e^{−2t}: rate 2 sits on the gap lattice
        // and resonates with the second eigenvalue, so its constant must be
        // recovered from the trajectory.
        let sd = sd_of(diag(&[1.0, 2.0]));
        let mut spec = NonlinearitySpec::zero(2);
        let traj = integrate(&sd, &spec, &[0.8, 0.3], 20.0, &IntegrationOptions::default())
            .unwrap();
        let fa = first_approximation(&sd, &traj, 0.2, None).unwrap();
        let mut degrees = FixedDegrees(vec![]);
        let lattice = build_lattice(&sd, &fa.lambda_star, &mut degrees, 4).unwrap();
        let fitter = TrajectoryFitter { traj: &traj, lattice: &lattice, atol: 1e-12, rtol: 1e-12 };
        let series = expand(
            &sd,
            &mut spec,
            &lattice,
            &fa.projected_xi(&sd),
            2,
            &ResonancePolicy::Fit(&fitter),
        )
        .unwrap();
        assert_eq!(series.resonances.len(), 1);
        let q2 = &series.terms[1].poly;
        assert!((q2.coeff(0)[0]).abs() < 1e-9, "q2 = {:?}", q2.coeff(0));
        assert!((q2.coeff(0)[1] - 0.3).abs() < 1e-9, "q2 = {:?}", q2.coeff(0));
        // Reconstruction: sup error over the sampled horizon at tolerance scale.
        for s in &traj.samples {
            let v = evaluate_series(&series, s.t, 2);
            for c in 0..2 {
                assert!(
                    (v[c] - s.y[c]).abs() < 1e-10,
                    "t = {}: {:?} vs {:?}",
                    s.t,
                    v,
                    s.y
                );
            }
        }
    }

    #[test]
    fn dirichlet_quotient_settles_within_gate() {
        let (sd, spec) = cubic_problem();
        let traj = integrate(&sd, &spec, &[0.5], 30.0, &IntegrationOptions::default()).unwrap();
        let gate = 1e-6_f64.ln();
        let qs: Vec<f64> = traj
            .samples
            .iter()
            .filter(|s| s.log_norm <= gate)
            .map(|s| dirichlet_quotient(&sd.matrix, &s.dir))
            .collect();
        assert!(qs.len() > 10);
        let lo = qs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo <= 1e-6, "fluctuation {}", hi - lo);
    }

    #[test]
    fn mixed_system_first_approximation_hits_an_eigenvalue() {
        // Triangular system with eigenvalues {1, 2} and a mixed non-smooth
        // nonlinearity; any small start must settle onto an exact eigenvalue.
        let a = Mat::from_rows(&[vec![1.0, 0.0], vec![1.0, 2.0]]);
        let sd = sd_of(a);
        let spec = parse_nonlinearity(
            "[-abs(x_2) * x_1, 0] + [0, -x_1^2 * x_2]",
            2,
            SpecMode::Finite,
        )
        .unwrap();
        for y0 in [[0.2, 0.1], [-0.15, 0.2], [0.1, -0.25]] {
            let traj =
                integrate(&sd, &spec, &y0, 35.0, &IntegrationOptions::default()).unwrap();
            let fa = first_approximation(&sd, &traj, 0.2, Some(1.0)).unwrap();
            assert!(
                fa.lambda_star == rat_int(1) || fa.lambda_star == rat_int(2),
                "λ* = {}",
                fa.lambda_star
            );
            assert!(fa.eigen_residual <= 1e-6);
        }
    }

    #[test]
    fn staircase_gap_hint_uses_fractional_alpha() {
        // α₁ = 1/3 < eigenvalue gap; the hint must not break the fit.
        let sd = sd_of(diag(&[1.0, 2.0]));
        let spec = NonlinearitySpec::zero(2);
        let traj = integrate(&sd, &spec, &[0.5, 0.2], 25.0, &IntegrationOptions::default())
            .unwrap();
        let fa = first_approximation(&sd, &traj, 0.2, Some(rat_to_f64(&rat(1, 3)))).unwrap();
        assert_eq!(fa.lambda_star, rat_int(1));
        assert!((fa.xi_star[0] - 0.5).abs() < 1e-8);
    }
}
