//! The expansion recursion: right-hand sides 𝒥ₙ, polynomial ODE solves,
//! and series assembly.
//!
//! Term n of the series q₁e^{−μ₁t} + q₂e^{−μ₂t} + ... satisfies
//! `qₙ′ + (A − μₙI)qₙ = 𝒥ₙ`, where 𝒥ₙ collects every tensor image
//! `ℱ_{r,m}(q_{k₁}, ..., q_{k_m})` whose rates match exactly:
//! `Σ μ̃_{k_j} + α_r λ* = μ̃ₙ` with α_r = β_r − 1. Rate matching is exact
//! rational arithmetic; the polynomial coefficients are floats.

use crate::exponents::ExponentLattice;
use crate::rational::{rat_to_f64, Rat};
use crate::spectral::SpectralData;
use crate::tensors::{TensorError, TensorLadder};
use crate::termlang::smoothness::smoothness_domain_check;
use crate::termlang::{NonlinearitySpec, SpecMode};
use crate::vecpoly::VectorPoly;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error("term {n} requested before its predecessors were computed")]
    MissingPredecessor { n: usize },
    #[error("the nonlinearity is not smooth at the asymptotic direction: {report}")]
    InapplicableAtXi { report: String },
    #[error("finite-remainder mode supports {max} terms, {requested} requested")]
    FiniteModeExceeded { requested: usize, max: usize },
    #[error("rate lattice holds {have} elements, {need} needed")]
    LatticeTooShort { need: usize, have: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One series term: the polynomial attached to rate μₙ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub n: usize,
    #[serde(with = "crate::rational::rat_string")]
    pub mu: Rat,
    pub mu_f64: f64,
    pub poly: VectorPoly,
}

/// A resonant block encountered while solving term n: λ_block = μₙ, so the
/// solution carries a free constant vector in that eigenspace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Resonance {
    pub n: usize,
    pub block: usize,
    #[serde(with = "crate::rational::rat_string")]
    pub lambda: Rat,
    pub constant: Vec<f64>,
    pub fitted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionSeries {
    #[serde(with = "crate::rational::rat_string")]
    pub lambda_star: Rat,
    pub xi_star: Vec<f64>,
    /// "zero" or "fit".
    pub policy: String,
    pub terms: Vec<SeriesTerm>,
    pub resonances: Vec<Resonance>,
}

impl ExpansionSeries {
    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }
}

/// Supplier of resonant constants when the `fit` policy is active. The
/// constant for (n, block) is estimated from whatever solution data the
/// implementor holds; it is projected onto the eigenspace afterwards.
pub trait ResonantFitter {
    fn constant(
        &self,
        n: usize,
        block: usize,
        mu: &Rat,
        terms: &[SeriesTerm],
        particular: &VectorPoly,
    ) -> Vec<f64>;
}

pub enum ResonancePolicy<'a> {
    /// Free constants are zero: the canonical formal series.
    Zero,
    /// Free constants estimated per resonance from solution data.
    Fit(&'a dyn ResonantFitter),
}

impl ResonancePolicy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            ResonancePolicy::Zero => "zero",
            ResonancePolicy::Fit(_) => "fit",
        }
    }
}

/// Solves `q′ + (A − μI)q = p` blockwise. Nonresonant blocks (λ_j ≠ μ) get
/// the unique polynomial solution of the same degree by highest-degree
/// back-substitution; resonant blocks get the antiderivative plus the given
/// constant (degree rises by one unless the block of p vanishes).
/// Resonance is decided by exact rational equality.
pub fn solve_polynomial_ode(
    sd: &SpectralData,
    mu: &Rat,
    p: &VectorPoly,
    resonant_constants: &BTreeMap<usize, Vec<f64>>,
) -> VectorPoly {
    let d = sd.dim;
    let mut q = VectorPoly::zero(d);
    for (j, space) in sd.spaces.iter().enumerate() {
        let p_j = p.map_matrix(&sd.projections[j]);
        if space.value == *mu {
            let mut block = p_j.antiderivative();
            if let Some(c) = resonant_constants.get(&j) {
                let projected = sd.project(j, c);
                block.add_assign(&VectorPoly::constant(projected));
            }
            q.add_assign(&block);
        } else {
            if p_j.is_zero() {
                continue;
            }
            // (λ_j − μ) exactly, then evaluated once as a float divisor.
            let c = rat_to_f64(&(&space.value - mu));
            let deg = p_j.degree().unwrap_or(0);
            let mut coeffs = vec![vec![0.0; d]; deg + 1];
            for k in (0..=deg).rev() {
                let mut rhs: Vec<f64> = if k < p_j.coeffs.len() {
                    p_j.coeffs[k].clone()
                } else {
                    vec![0.0; d]
                };
                if k < deg {
                    let f = (k + 1) as f64;
                    for (r, u) in rhs.iter_mut().zip(&coeffs[k + 1]) {
                        *r -= f * u;
                    }
                }
                for r in rhs.iter_mut() {
                    *r /= c;
                }
                coeffs[k] = rhs;
            }
            let mut block = VectorPoly { dim: d, coeffs };
            block.add_assign(&VectorPoly::zero(d));
            q.add_assign(&block);
        }
    }
    q
}

/// Max coefficient magnitude of `q′ + (A − μI)q − p`; zero for an exact
/// solution.
pub fn ode_residual(sd: &SpectralData, mu: f64, q: &VectorPoly, p: &VectorPoly) -> f64 {
    let mut r = q.derivative();
    r.add_assign(&q.map_matrix(&sd.matrix));
    r.add_assign(&q.scale(-mu));
    r.add_assign(&p.scale(-1.0));
    r.max_abs_coeff()
}

/// Builds 𝒥ₙ from the terms computed so far. `components` must already be
/// materialized through every degree with α_r λ* ≤ μ̃ₙ; `ladders` is the
/// per-component tensor cache aligned with it.
pub fn build_jn(
    spec: &NonlinearitySpec,
    ladders: &mut Vec<Option<TensorLadder>>,
    lattice: &ExponentLattice,
    terms: &[SeriesTerm],
    n: usize,
    xi: &[f64],
) -> Result<VectorPoly, ExpansionError> {
    let d = xi.len();
    if n == 1 {
        return Ok(VectorPoly::zero(d));
    }
    if terms.len() + 1 < n {
        return Err(ExpansionError::MissingPredecessor { n });
    }
    if lattice.len() < n {
        return Err(ExpansionError::LatticeTooShort {
            need: n,
            have: lattice.len(),
        });
    }
    let mu_tilde_n = lattice.mu_tilde(n);
    ladders.resize_with(spec.components().len().max(ladders.len()), || None);

    let mut jn = VectorPoly::zero(d);
    for (r, component) in spec.components().iter().enumerate() {
        let alpha = &component.degree - Rat::one();
        let target = mu_tilde_n - &alpha * &lattice.lambda_star;
        if target.is_negative() {
            continue;
        }
        let ladder =
            ladders[r].get_or_insert_with(|| TensorLadder::new(component, xi));
        if target.is_zero() {
            // Order-zero contribution F_r(ξ*).
            let t0 = ladder.tensor(component, 0)?;
            jn.add_assign(&t0.apply(&[])?);
            continue;
        }
        // Multisets 2 ≤ k₁ ≤ ... ≤ k_m ≤ n−1 with Σ μ̃_{k_j} = target.
        collect_multisets(lattice, n, &target, &mut |ks| {
            let m = ks.len();
            let tensor = ladders[r]
                .as_mut()
                .expect("ladder initialized above")
                .tensor(component, m)?;
            if tensor.is_zero() {
                return Ok(());
            }
            let args: Vec<&VectorPoly> = ks.iter().map(|&k| &terms[k - 1].poly).collect();
            let image = tensor.apply(&args)?;
            jn.add_assign(&image.scale(multiset_weight(ks)));
            Ok(())
        })?;
    }
    Ok(jn)
}

/// Calls `emit` for every non-decreasing index multiset from [2, n−1] whose
/// shifted rates sum exactly to `target`.
fn collect_multisets(
    lattice: &ExponentLattice,
    n: usize,
    target: &Rat,
    emit: &mut dyn FnMut(&[usize]) -> Result<(), ExpansionError>,
) -> Result<(), ExpansionError> {
    fn rec(
        lattice: &ExponentLattice,
        n: usize,
        start: usize,
        rest: &Rat,
        acc: &mut Vec<usize>,
        emit: &mut dyn FnMut(&[usize]) -> Result<(), ExpansionError>,
    ) -> Result<(), ExpansionError> {
        if rest.is_zero() {
            return emit(acc);
        }
        for k in start..n.min(lattice.len() + 1) {
            let mu_k = lattice.mu_tilde(k);
            if mu_k > rest {
                break;
            }
            acc.push(k);
            let next = rest - mu_k;
            rec(lattice, n, k, &next, acc, emit)?;
            acc.pop();
        }
        Ok(())
    }
    let mut acc = Vec::new();
    rec(lattice, n, 2, target, &mut acc, emit)
}

/// Number of ordered tuples realizing a non-decreasing multiset:
/// m! / Π (multiplicity!).
fn multiset_weight(ks: &[usize]) -> f64 {
    let mut weight = 1.0;
    let mut run = 0.0;
    let mut prev = usize::MAX;
    for (i, &k) in ks.iter().enumerate() {
        if k == prev {
            run += 1.0;
        } else {
            run = 1.0;
            prev = k;
        }
        weight *= (i + 1) as f64 / run;
    }
    weight
}

/// Runs the recursion for `n_terms` terms. The lattice must hold at least
/// `n_terms` elements; the spec must be smooth at ξ*.
pub fn expand(
    sd: &SpectralData,
    spec: &mut NonlinearitySpec,
    lattice: &ExponentLattice,
    xi_star: &[f64],
    n_terms: usize,
    policy: &ResonancePolicy,
) -> Result<ExpansionSeries, ExpansionError> {
    if lattice.len() < n_terms {
        return Err(ExpansionError::LatticeTooShort {
            need: n_terms,
            have: lattice.len(),
        });
    }
    let report = smoothness_domain_check(spec, xi_star);
    if !report.obstructions.is_empty() {
        return Err(ExpansionError::InapplicableAtXi {
            report: report.to_string(),
        });
    }
    if let SpecMode::FiniteWithRemainder { margin } = spec.mode.clone() {
        if let Some(last) = spec.components().last() {
            let bound = &lattice.lambda_star * (&last.degree + &margin);
            let max = lattice
                .elements
                .iter()
                .take_while(|e| e.mu < bound)
                .count();
            if n_terms > max {
                return Err(ExpansionError::FiniteModeExceeded {
                    requested: n_terms,
                    max,
                });
            }
        }
    }
    if n_terms >= 2 {
        // Every component with α_r λ* ≤ μ̃_N can contribute; materialize
        // through that degree once so component indices stay stable.
        let beta_bound = lattice.mu_tilde(n_terms) / &lattice.lambda_star + Rat::one();
        let _ = spec.materialize_through(&beta_bound);
    }

    let mut ladders: Vec<Option<TensorLadder>> = Vec::new();
    let mut terms: Vec<SeriesTerm> = Vec::new();
    let mut resonances: Vec<Resonance> = Vec::new();
    for n in 1..=n_terms {
        let mu = lattice.mu(n).clone();
        let poly = if n == 1 {
            VectorPoly::constant(xi_star.to_vec())
        } else {
            let jn = build_jn(spec, &mut ladders, lattice, &terms, n, xi_star)?;
            let mut q = solve_polynomial_ode(sd, &mu, &jn, &BTreeMap::new());
            for (j, space) in sd.spaces.iter().enumerate() {
                if space.value != mu {
                    continue;
                }
                let (constant, fitted) = match policy {
                    ResonancePolicy::Zero => (vec![0.0; sd.dim], false),
                    ResonancePolicy::Fit(f) => {
                        (f.constant(n, j, &mu, &terms, &q), true)
                    }
                };
                let projected = sd.project(j, &constant);
                // A constant eigenvector solves the homogeneous equation,
                // so adding it preserves the ODE residual exactly.
                q.add_assign(&VectorPoly::constant(projected.clone()));
                resonances.push(Resonance {
                    n,
                    block: j,
                    lambda: space.value.clone(),
                    constant: projected,
                    fitted,
                });
            }
            q
        };
        terms.push(SeriesTerm {
            n,
            mu_f64: rat_to_f64(&mu),
            mu,
            poly,
        });
    }
    Ok(ExpansionSeries {
        lambda_star: lattice.lambda_star.clone(),
        xi_star: xi_star.to_vec(),
        policy: policy.name().to_string(),
        terms,
        resonances,
    })
}

/// Partial sum Σ_{n ≤ N} qₙ(t)e^{−μₙt} with compensated accumulation.
pub fn evaluate_series(series: &ExpansionSeries, t: f64, n_terms: usize) -> Vec<f64> {
    let d = series.xi_star.len();
    let mut sum = vec![0.0; d];
    let mut comp = vec![0.0; d];
    let mut buf = vec![0.0; d];
    for term in series.terms.iter().take(n_terms) {
        let w = (-term.mu_f64 * t).exp();
        if w == 0.0 {
            continue;
        }
        term.poly.eval_into(t, &mut buf);
        for i in 0..d {
            let y = buf[i] * w - comp[i];
            let s = sum[i] + y;
            comp[i] = (s - sum[i]) - y;
            sum[i] = s;
        }
    }
    sum
}

/// Largest N with μ_N below the finite-remainder validity bound
/// λ*(β_last + margin); `None` when the mode carries no remainder bound.
pub fn finite_mode_limit(spec: &NonlinearitySpec, lattice: &ExponentLattice) -> Option<usize> {
    match &spec.mode {
        SpecMode::FiniteWithRemainder { margin } => {
            let last = spec.components().last()?;
            let bound = &lattice.lambda_star * (&last.degree + margin);
            Some(lattice.elements.iter().take_while(|e| e.mu < bound).count())
        }
        _ => None,
    }
}
