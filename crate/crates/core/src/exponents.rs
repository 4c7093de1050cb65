//! Exact enumeration of expansion rate lattices.
//!
//! The shifted rate set S̃ is the additive monoid generated by the
//! eigenvalue gaps `λ_k − λ*` (for eigenvalues above the base rate) and the
//! degree rates `α_j λ*` with `α_j = β_j − 1` for each nonlinearity degree
//! β_j. Its elements `0 = μ̃_1 < μ̃_2 < ...` shift back to the expansion
//! rates `μ_n = μ̃_n + λ*`. All values are exact rationals; equality of
//! rates is a hard arithmetic condition downstream, so floats are never
//! used as keys.

use crate::rational::{fmt_rat, rat_int, rat_to_f64, Rat};
use crate::spectral::SpectralData;
use crate::termlang::DegreeSource;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("base rate {value} is not an eigenvalue of the system matrix")]
    NotAnEigenvalue { value: String },
    #[error("no degree generators and no eigenvalue gaps above the base rate")]
    EmptyDegreeList,
}

/// One way to write a lattice element as a generator combination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    /// Multiplicities of the eigenvalue-gap generators, aligned with
    /// `ExponentLattice::gap_generators`.
    pub gap_mults: Vec<u32>,
    /// Sparse multiplicities `(j, z_j)` of the degree generators `α_j λ*`,
    /// indices into `ExponentLattice::alphas`.
    pub alpha_mults: Vec<(usize, u32)>,
}

#[derive(Debug, Clone)]
pub struct LatticeElement {
    pub mu_tilde: Rat,
    pub mu: Rat,
    pub mu_f64: f64,
    pub decompositions: Vec<Decomposition>,
}

#[derive(Debug, Clone)]
pub struct ExponentLattice {
    pub lambda_star: Rat,
    /// Index of λ* among the distinct eigenvalues.
    pub n0: usize,
    /// Positive gaps λ_k − λ*, ascending.
    pub gap_generators: Vec<Rat>,
    /// Distinct-eigenvalue index behind each gap generator.
    pub gap_eigen_indices: Vec<usize>,
    /// Degrees α_j = β_j − 1 materialized during enumeration, ascending.
    pub alphas: Vec<Rat>,
    /// Strictly increasing elements μ̃_1 = 0 < μ̃_2 < ...
    pub elements: Vec<LatticeElement>,
}

impl ExponentLattice {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// μ̃_n with 1-based n.
    pub fn mu_tilde(&self, n: usize) -> &Rat {
        &self.elements[n - 1].mu_tilde
    }

    /// μ_n with 1-based n.
    pub fn mu(&self, n: usize) -> &Rat {
        &self.elements[n - 1].mu
    }

    pub fn to_json(&self) -> Value {
        json!({
            "lambda_star": fmt_rat(&self.lambda_star),
            "n0": self.n0,
            "gap_generators": self.gap_generators.iter().map(fmt_rat).collect::<Vec<_>>(),
            "alphas": self.alphas.iter().map(fmt_rat).collect::<Vec<_>>(),
            "elements": self.elements.iter().enumerate().map(|(i, e)| json!({
                "n": i + 1,
                "mu_tilde": fmt_rat(&e.mu_tilde),
                "mu": fmt_rat(&e.mu),
                "mu_f64": e.mu_f64,
                "decompositions": e.decompositions.iter().map(|d| json!({
                    "gap_mults": d.gap_mults,
                    "alpha_mults": d.alpha_mults.iter().map(|(j, z)| json!([j, z])).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Pending decomposition with the canonical-extension cursor: a combination
/// may only be extended by generator ids at or above `next_gen`, which makes
/// every multiset of generators reachable along exactly one path.
#[derive(Debug, Clone)]
struct Pending {
    decomp: Decomposition,
    next_gen: usize,
}

struct Enumeration {
    n_gaps: usize,
    /// Generator values: ids 0..n_gaps are gaps, n_gaps+j is degree j.
    gen_values: Vec<Rat>,
    frontier: BTreeMap<Rat, Vec<Pending>>,
    emitted: Vec<LatticeElement>,
}

impl Enumeration {
    fn extend(&mut self, value: &Rat, pending: &Pending) {
        for id in pending.next_gen..self.gen_values.len() {
            let new_value = value + &self.gen_values[id];
            let mut decomp = pending.decomp.clone();
            if id < self.n_gaps {
                decomp.gap_mults[id] += 1;
            } else {
                let j = id - self.n_gaps;
                match decomp.alpha_mults.last_mut() {
                    Some((last, z)) if *last == j => *z += 1,
                    _ => decomp.alpha_mults.push((j, 1)),
                }
            }
            self.frontier
                .entry(new_value)
                .or_default()
                .push(Pending { decomp, next_gen: id });
        }
    }

    /// Registers a new degree generator and retrofits extensions of every
    /// already-emitted element; frontier entries pick the new id up when
    /// they are popped, so each canonical combination still appears once.
    fn add_alpha_generator(&mut self, value: Rat) {
        self.gen_values.push(value.clone());
        let id = self.gen_values.len() - 1;
        let j = id - self.n_gaps;
        for e in &self.emitted {
            for d in &e.decompositions {
                let mut decomp = d.clone();
                decomp.alpha_mults.push((j, 1));
                self.frontier
                    .entry(&e.mu_tilde + &value)
                    .or_default()
                    .push(Pending { decomp, next_gen: id });
            }
        }
    }
}

/// Builds the first `count` elements of the shifted rate lattice for base
/// rate λ*. Degrees are materialized from `degrees` lazily: a degree
/// participates once its generator α λ* falls inside the enumerated window.
pub fn build_lattice(
    sd: &SpectralData,
    lambda_star: &Rat,
    degrees: &mut dyn DegreeSource,
    count: usize,
) -> Result<ExponentLattice, LatticeError> {
    let n0 = sd.index_of(lambda_star).ok_or_else(|| LatticeError::NotAnEigenvalue {
        value: fmt_rat(lambda_star),
    })?;
    let mut gap_generators = Vec::new();
    let mut gap_eigen_indices = Vec::new();
    for (k, s) in sd.spaces.iter().enumerate().skip(n0 + 1) {
        gap_generators.push(&s.value - lambda_star);
        gap_eigen_indices.push(k);
    }

    let mut en = Enumeration {
        n_gaps: gap_generators.len(),
        gen_values: gap_generators.clone(),
        frontier: BTreeMap::new(),
        emitted: Vec::new(),
    };
    en.frontier.insert(
        Rat::zero(),
        vec![Pending {
            decomp: Decomposition {
                gap_mults: vec![0; gap_generators.len()],
                alpha_mults: Vec::new(),
            },
            next_gen: 0,
        }],
    );

    let mut alphas: Vec<Rat> = Vec::new();

    while en.emitted.len() < count {
        // Materialize every degree generator at or below the next value to
        // pop; new generators can lower that value, so iterate to a fixed
        // point.
        loop {
            let v_opt = en.frontier.keys().next().cloned();
            let v = match v_opt {
                Some(v) => v,
                None => {
                    // No generators at all yet: probe widening degree
                    // windows for the first one.
                    if !degrees.has_any() {
                        return Err(LatticeError::EmptyDegreeList);
                    }
                    let mut bound = lambda_star * rat_int(2) + Rat::one();
                    let mut found = false;
                    for _ in 0..64 {
                        let before = alphas.len();
                        register_through(&mut en, &mut alphas, degrees, lambda_star, &bound);
                        if alphas.len() > before {
                            found = true;
                            break;
                        }
                        bound = &bound * rat_int(2);
                    }
                    if !found {
                        return Err(LatticeError::EmptyDegreeList);
                    }
                    continue;
                }
            };
            let before = alphas.len();
            register_through(&mut en, &mut alphas, degrees, lambda_star, &v);
            if alphas.len() == before {
                break;
            }
        }
        let (value, pendings) = en
            .frontier
            .pop_first()
            .expect("frontier nonempty after materialization");
        for p in &pendings {
            en.extend(&value, p);
        }
        let mu = &value + lambda_star;
        en.emitted.push(LatticeElement {
            mu_f64: rat_to_f64(&mu),
            mu,
            mu_tilde: value,
            decompositions: pendings.into_iter().map(|p| p.decomp).collect(),
        });
    }

    Ok(ExponentLattice {
        lambda_star: lambda_star.clone(),
        n0,
        gap_generators,
        gap_eigen_indices,
        alphas,
        elements: en.emitted,
    })
}

/// Materializes every degree whose generator `(β−1)λ*` lies at or below
/// the window value `v`; the matching bound on β is `v/λ* + 1`.
fn register_through(
    en: &mut Enumeration,
    alphas: &mut Vec<Rat>,
    degrees: &mut dyn DegreeSource,
    lambda_star: &Rat,
    v: &Rat,
) {
    let beta_bound = v / lambda_star + Rat::one();
    for beta in degrees.degrees_up_to(&beta_bound) {
        let alpha = &beta - Rat::one();
        if !alpha.is_positive() || alphas.contains(&alpha) {
            continue;
        }
        let gen = &alpha * lambda_star;
        if &gen > v {
            continue;
        }
        alphas.push(alpha);
        en.add_alpha_generator(gen);
    }
}

/// First `count` elements of the candidate rate set
/// `S' = {Σ λ'_j + m α₁ λ₁ : at least one eigenvalue, m ≥ 0}`,
/// strictly increasing. Its head is always λ₁.
pub fn candidate_rates(sd: &SpectralData, alpha1: &Rat, count: usize) -> Vec<Rat> {
    use std::collections::BTreeSet;
    let mut generators: Vec<Rat> = sd.spaces.iter().map(|s| s.value.clone()).collect();
    let step = alpha1 * &sd.spaces[0].value;
    if step.is_positive() && !generators.contains(&step) {
        generators.push(step);
    }
    let mut frontier: BTreeSet<Rat> = sd.spaces.iter().map(|s| s.value.clone()).collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = match frontier.pop_first() {
            Some(v) => v,
            None => break,
        };
        for g in &generators {
            frontier.insert(&v + g);
        }
        out.push(v);
    }
    out
}
