//! Taylor coefficient tensors of homogeneous components at a point.
//!
//! The m-th tensor of a component F at ξ maps arguments (v_1, ..., v_m) to
//! `(1/m!) Σ ∂_{i_1}...∂_{i_m} F(ξ) · v_1[i_1] ... v_m[i_m]`. Derivatives
//! are computed symbolically: every factor product is closed under
//! differentiation within the family
//!
//! `poly(x) · Π_b B_b(x)^{s_b} · Π_l |L_l(x)|^{a_l} sign(L_l(x))^{b_l}`
//!
//! where each base `B` is either a polynomial (even power sums) or a sum
//! `Σ_l |L_l(x)|^p` of absolute powers of linear forms. Entries are stored
//! per sorted multi-index; the `1/m!` weight is computed in exact rational
//! arithmetic before conversion to float.

use crate::rational::{rat_to_f64, Rat};
use crate::termlang::poly::Poly;
use crate::termlang::smoothness::factor_smoothness_obstruction;
use crate::termlang::{HomogeneousComponent, ScalarFactor, SignMode};
use crate::vecpoly::VectorPoly;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

/// Hard cap on the derivative order; factorial weights and multi-index
/// counts stay exact and small below it.
pub const ORDER_CAP: usize = 12;

/// Cap on `dim^order` ordered index tuples in one application.
const TUPLE_CAP: u64 = 20_000_000;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("derivative order {requested} exceeds the supported maximum {cap}")]
    OrderOverflow { requested: usize, cap: usize },
    #[error("factor {factor} is not smooth at the expansion point")]
    SingularBasePoint { factor: String },
    #[error("tensor of order {order} applied to {given} arguments")]
    ArityMismatch { order: usize, given: usize },
}

/// Entries of one derivative tensor, keyed by multi-index σ (|σ| = order):
/// `entry[σ] = ∂^σ F(ξ) / order!` as a vector in output space.
#[derive(Debug, Clone)]
pub struct DerivativeTensor {
    pub order: usize,
    pub dim: usize,
    entries: HashMap<Vec<u32>, Vec<f64>>,
    /// `Σ_σ (order!/σ!) |entry[σ]|_2`, an operator-norm style bound.
    pub norm_bound: f64,
}

impl DerivativeTensor {
    pub fn entry(&self, sigma: &[u32]) -> Option<&[f64]> {
        self.entries.get(sigma).map(|v| v.as_slice())
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Applies the tensor to `order` vector polynomials in t, yielding the
    /// multilinear image as a vector polynomial.
    pub fn apply(&self, args: &[&VectorPoly]) -> Result<VectorPoly, TensorError> {
        if args.len() != self.order {
            return Err(TensorError::ArityMismatch {
                order: self.order,
                given: args.len(),
            });
        }
        let d = self.dim;
        if self.order == 0 {
            let v = self
                .entries
                .get(vec![0u32; d].as_slice())
                .cloned()
                .unwrap_or_else(|| vec![0.0; d]);
            return Ok(VectorPoly::constant(v));
        }
        let tuples = (d as u64).checked_pow(self.order as u32);
        if tuples.is_none_or(|t| t > TUPLE_CAP) {
            return Err(TensorError::OrderOverflow {
                requested: self.order,
                cap: ORDER_CAP,
            });
        }
        let mut out = VectorPoly::zero(d);
        let mut tuple = vec![0usize; self.order];
        loop {
            let mut sigma = vec![0u32; d];
            for &i in &tuple {
                sigma[i] += 1;
            }
            if let Some(val) = self.entries.get(&sigma) {
                // Scalar polynomial Π_j args[j][tuple[j]] in t.
                let mut prod = vec![1.0f64];
                let mut zero = false;
                for (j, &i) in tuple.iter().enumerate() {
                    let col: Vec<f64> =
                        args[j].coeffs.iter().map(|c| c[i]).collect();
                    if col.iter().all(|&v| v == 0.0) {
                        zero = true;
                        break;
                    }
                    prod = conv(&prod, &col);
                }
                if !zero {
                    let add = VectorPoly {
                        dim: d,
                        coeffs: prod
                            .iter()
                            .map(|&w| val.iter().map(|&v| v * w).collect())
                            .collect(),
                    };
                    out.add_assign(&add);
                }
            }
            // Advance the ordered tuple odometer.
            let mut k = self.order;
            loop {
                if k == 0 {
                    return Ok(out);
                }
                k -= 1;
                tuple[k] += 1;
                if tuple[k] < d {
                    break;
                }
                tuple[k] = 0;
            }
        }
    }
}

fn conv(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Differentiation context: interned linear forms and bases.
#[derive(Debug, Clone)]
struct DiffCtx {
    dim: usize,
    /// Coefficient rows of linear forms `L(x) = Σ form[i] x_i`.
    forms: Vec<Vec<f64>>,
    bases: Vec<BaseKind>,
}

#[derive(Debug, Clone, PartialEq)]
enum BaseKind {
    /// Polynomial base `W(x)`.
    Poly(Poly),
    /// `Σ_l |L_l(x)|^p` over interned form ids.
    AbsSum { form_ids: Vec<usize>, p: Rat },
}

impl DiffCtx {
    fn intern_form(&mut self, row: Vec<f64>) -> usize {
        match self.forms.iter().position(|f| f == &row) {
            Some(i) => i,
            None => {
                self.forms.push(row);
                self.forms.len() - 1
            }
        }
    }

    fn intern_base(&mut self, b: BaseKind) -> usize {
        match self.bases.iter().position(|x| x == &b) {
            Some(i) => i,
            None => {
                self.bases.push(b);
                self.bases.len() - 1
            }
        }
    }
}

/// Non-polynomial part of a symbolic term: base powers and linear-form
/// absolute powers, both sorted by id for canonical merging.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    /// (base id, exponent); exponent never zero.
    bases: Vec<(usize, Rat)>,
    /// (form id, exponent, carries sign); never (0, false).
    linabs: Vec<(usize, Rat, bool)>,
}

impl Key {
    fn empty() -> Self {
        Key {
            bases: Vec::new(),
            linabs: Vec::new(),
        }
    }

    fn with_base_shift(&self, id: usize, delta: &Rat) -> Key {
        let mut bases = self.bases.clone();
        match bases.binary_search_by(|(b, _)| b.cmp(&id)) {
            Ok(i) => {
                bases[i].1 = &bases[i].1 + delta;
                if bases[i].1.is_zero() {
                    bases.remove(i);
                }
            }
            Err(i) => {
                if !delta.is_zero() {
                    bases.insert(i, (id, delta.clone()));
                }
            }
        }
        Key {
            bases,
            linabs: self.linabs.clone(),
        }
    }

    fn with_linabs_shift(&self, id: usize, delta: &Rat, flip: bool) -> Key {
        let mut linabs = self.linabs.clone();
        match linabs.binary_search_by(|(f, _, _)| f.cmp(&id)) {
            Ok(i) => {
                linabs[i].1 = &linabs[i].1 + delta;
                if flip {
                    linabs[i].2 = !linabs[i].2;
                }
                if linabs[i].1.is_zero() && !linabs[i].2 {
                    linabs.remove(i);
                }
            }
            Err(i) => {
                if !delta.is_zero() || flip {
                    linabs.insert(i, (id, delta.clone(), flip));
                }
            }
        }
        Key {
            bases: self.bases.clone(),
            linabs,
        }
    }
}

/// Sum of symbolic terms sharing a context, merged by key.
type Sum = BTreeMap<Key, Poly>;

fn sum_add(sum: &mut Sum, key: Key, poly: Poly) {
    if poly.is_zero() {
        return;
    }
    match sum.entry(key) {
        std::collections::btree_map::Entry::Occupied(mut e) => {
            let merged = e.get().add(&poly);
            if merged.is_zero() {
                e.remove();
            } else {
                *e.get_mut() = merged;
            }
        }
        std::collections::btree_map::Entry::Vacant(e) => {
            e.insert(poly);
        }
    }
}

fn differentiate(ctx: &DiffCtx, sum: &Sum, i: usize) -> Sum {
    let mut out = Sum::new();
    for (key, poly) in sum {
        // Product rule, one slot at a time.
        let dp = poly.partial(i);
        sum_add(&mut out, key.clone(), dp);

        for (bid, s) in &key.bases {
            match &ctx.bases[*bid] {
                BaseKind::Poly(w) => {
                    let dw = w.partial(i);
                    if dw.is_zero() {
                        continue;
                    }
                    let factor = poly.mul(&dw).scale(rat_to_f64(s));
                    sum_add(&mut out, key.with_base_shift(*bid, &-Rat::one()), factor);
                }
                BaseKind::AbsSum { form_ids, p } => {
                    for &fid in form_ids {
                        let c = ctx.forms[fid][i];
                        if c == 0.0 {
                            continue;
                        }
                        let coeff = rat_to_f64(&(s * p)) * c;
                        let new_key = key
                            .with_base_shift(*bid, &-Rat::one())
                            .with_linabs_shift(fid, &(p - Rat::one()), true);
                        sum_add(&mut out, new_key, poly.scale(coeff));
                    }
                }
            }
        }

        for (fid, a, _) in &key.linabs {
            let c = ctx.forms[*fid][i];
            if c == 0.0 || a.is_zero() {
                // Pure sign factors are locally constant away from the
                // branch set, which the smoothness gate guarantees.
                continue;
            }
            let coeff = rat_to_f64(a) * c;
            let new_key = key.with_linabs_shift(*fid, &-Rat::one(), true);
            sum_add(&mut out, new_key, poly.scale(coeff));
        }
    }
    out
}

fn eval_sum(ctx: &DiffCtx, sum: &Sum, x: &[f64]) -> f64 {
    let mut total = 0.0;
    for (key, poly) in sum {
        let mut v = poly.eval(x);
        if v == 0.0 {
            continue;
        }
        for (bid, s) in &key.bases {
            let base_val = match &ctx.bases[*bid] {
                BaseKind::Poly(w) => w.eval(x),
                BaseKind::AbsSum { form_ids, p } => {
                    let pf = rat_to_f64(p);
                    form_ids
                        .iter()
                        .map(|&fid| form_eval(ctx, fid, x).abs().powf(pf))
                        .sum()
                }
            };
            let sf = rat_to_f64(s);
            v *= if s.is_integer() {
                base_val.powi(sf as i32)
            } else {
                base_val.powf(sf)
            };
        }
        for (fid, a, sgn) in &key.linabs {
            let lv = form_eval(ctx, *fid, x);
            if !a.is_zero() {
                v *= lv.abs().powf(rat_to_f64(a));
            }
            if *sgn {
                v *= if lv > 0.0 {
                    1.0
                } else if lv < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
        }
        total += v;
    }
    total
}

fn form_eval(ctx: &DiffCtx, fid: usize, x: &[f64]) -> f64 {
    ctx.forms[fid]
        .iter()
        .zip(x)
        .map(|(c, v)| c * v)
        .sum()
}

/// Incremental tensor builder for one homogeneous component at one point.
/// Level m is derived from level m-1, so requesting orders in ascending
/// sequence costs one differentiation sweep per order.
pub struct TensorLadder {
    dim: usize,
    xi: Vec<f64>,
    ctx: DiffCtx,
    tensors: Vec<DerivativeTensor>,
    /// Symbolic expressions at the last computed level: σ -> per-coordinate
    /// sums.
    frontier: BTreeMap<Vec<u32>, Vec<Sum>>,
}

impl TensorLadder {
    pub fn new(component: &HomogeneousComponent, xi: &[f64]) -> TensorLadder {
        let dim = xi.len();
        let mut ctx = DiffCtx {
            dim,
            forms: Vec::new(),
            bases: Vec::new(),
        };
        let mut exprs: Vec<Sum> = vec![Sum::new(); dim];
        for term in &component.terms {
            let mut key = Key::empty();
            let mut poly_mult = Poly::one(dim);
            for factor in &term.factors {
                install_factor(&mut ctx, factor, &mut key, &mut poly_mult);
            }
            for (c, tail) in term.tail.iter().enumerate() {
                if tail.is_zero() {
                    continue;
                }
                sum_add(&mut exprs[c], key.clone(), poly_mult.mul(tail));
            }
        }
        let mut frontier = BTreeMap::new();
        frontier.insert(vec![0u32; dim], exprs);
        TensorLadder {
            dim,
            xi: xi.to_vec(),
            ctx,
            tensors: Vec::new(),
            frontier,
        }
    }

    /// First smooth-at-ξ obstruction among this component's factors.
    fn obstruction(&self, component: &HomogeneousComponent) -> Option<String> {
        for term in &component.terms {
            for factor in &term.factors {
                if factor_smoothness_obstruction(factor, &self.xi).is_some() {
                    return Some(factor.to_string());
                }
            }
        }
        None
    }

    /// The tensor of the given order, computing levels as needed.
    pub fn tensor(
        &mut self,
        component: &HomogeneousComponent,
        order: usize,
    ) -> Result<&DerivativeTensor, TensorError> {
        if order > ORDER_CAP {
            return Err(TensorError::OrderOverflow {
                requested: order,
                cap: ORDER_CAP,
            });
        }
        if order >= 1 && self.tensors.len() <= order {
            if let Some(factor) = self.obstruction(component) {
                return Err(TensorError::SingularBasePoint { factor });
            }
        }
        while self.tensors.len() <= order {
            let level = self.tensors.len();
            if level > 0 {
                self.advance_level(level);
            }
            self.tensors.push(self.collect_level(level));
        }
        Ok(&self.tensors[order])
    }

    /// Replaces the frontier (level-1 expressions) by level expressions.
    fn advance_level(&mut self, level: usize) {
        let mut next: BTreeMap<Vec<u32>, Vec<Sum>> = BTreeMap::new();
        for sigma in multi_indices(self.dim, level) {
            // Differentiate the parent along σ's first active coordinate.
            let i = sigma.iter().position(|&k| k > 0).expect("|σ| = level > 0");
            let mut parent = sigma.clone();
            parent[i] -= 1;
            let parent_exprs = self
                .frontier
                .get(&parent)
                .expect("parent level complete");
            let exprs: Vec<Sum> = parent_exprs
                .iter()
                .map(|s| differentiate(&self.ctx, s, i))
                .collect();
            next.insert(sigma, exprs);
        }
        self.frontier = next;
    }

    fn collect_level(&self, level: usize) -> DerivativeTensor {
        let mut entries = HashMap::new();
        let m_fact = factorial(level);
        let inv_fact = rat_to_f64(&(Rat::one() / Rat::from_integer(m_fact.clone())));
        let mut norm_bound = 0.0;
        for (sigma, exprs) in &self.frontier {
            let val: Vec<f64> = exprs
                .iter()
                .map(|s| eval_sum(&self.ctx, s, &self.xi) * inv_fact)
                .collect();
            if val.iter().all(|&v| v == 0.0) {
                continue;
            }
            // order!/σ! tuples share this entry.
            let mult = multinomial(level, sigma);
            norm_bound += mult * crate::linalg::norm(&val);
            entries.insert(sigma.clone(), val);
        }
        DerivativeTensor {
            order: level,
            dim: self.dim,
            entries,
            norm_bound,
        }
    }
}

fn install_factor(ctx: &mut DiffCtx, factor: &ScalarFactor, key: &mut Key, poly: &mut Poly) {
    let dim = ctx.dim;
    match factor {
        ScalarFactor::NormPower { matrix, p, exponent } => {
            if exponent.is_zero() {
                return;
            }
            let rows: Vec<Vec<f64>> = match matrix {
                None => (0..dim)
                    .map(|i| {
                        let mut r = vec![0.0; dim];
                        r[i] = 1.0;
                        r
                    })
                    .collect(),
                Some(m) => (0..m.rows).map(|i| m.row(i).to_vec()).collect(),
            };
            let s = exponent / p;
            if p.is_integer() && p.numer().is_even() && p.numer().is_positive() {
                let pk = p.numer().to_u32().expect("validated norm order");
                let mut w = Poly::zero(dim);
                for r in &rows {
                    let mut l = Poly::zero(dim);
                    for (j, &c) in r.iter().enumerate() {
                        if c != 0.0 {
                            l = l.add(&Poly::coord(dim, j).scale(c));
                        }
                    }
                    w = w.add(&l.pow(pk));
                }
                let id = ctx.intern_base(BaseKind::Poly(w));
                *key = key.with_base_shift(id, &s);
            } else {
                let form_ids: Vec<usize> =
                    rows.into_iter().map(|r| ctx.intern_form(r)).collect();
                let id = ctx.intern_base(BaseKind::AbsSum {
                    form_ids,
                    p: p.clone(),
                });
                *key = key.with_base_shift(id, &s);
            }
        }
        ScalarFactor::CoordPower { index, mode, exponent } => {
            if exponent.is_zero() && *mode != SignMode::Signed {
                return;
            }
            let integer_fold = match mode {
                SignMode::Plain => true,
                SignMode::Abs => exponent.is_integer() && exponent.numer().is_even(),
                SignMode::Signed => exponent.is_integer() && exponent.numer().is_odd(),
            };
            if integer_fold {
                let n = exponent.numer().to_u32().expect("validated exponent");
                let mut exps = vec![0u32; dim];
                exps[*index] = n;
                *poly = poly.mul(&Poly::monomial(dim, exps, 1.0));
            } else {
                let mut row = vec![0.0; dim];
                row[*index] = 1.0;
                let fid = ctx.intern_form(row);
                *key = key.with_linabs_shift(fid, exponent, *mode == SignMode::Signed);
            }
        }
        ScalarFactor::PolyNormPower { polys, p, exponent } => {
            if exponent.is_zero() {
                return;
            }
            let mut w = Poly::zero(dim);
            for q in polys {
                w = w.add(&q.pow(*p));
            }
            let id = ctx.intern_base(BaseKind::Poly(w));
            let s = exponent / Rat::from_integer((*p).into());
            *key = key.with_base_shift(id, &s);
        }
    }
}

fn factorial(n: usize) -> BigInt {
    let mut f = BigInt::one();
    for k in 2..=n {
        f *= BigInt::from(k);
    }
    f
}

/// `level! / σ!` as f64 (exact for level ≤ ORDER_CAP).
fn multinomial(level: usize, sigma: &[u32]) -> f64 {
    let mut num = factorial(level);
    for &k in sigma {
        num /= factorial(k as usize);
    }
    rat_to_f64(&Rat::from_integer(num))
}

/// All exponent vectors of length `dim` summing to `order`, ascending.
fn multi_indices(dim: usize, order: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; dim];
    fn rec(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            cur[pos] = 0;
            return;
        }
        for k in 0..=left {
            cur[pos] = k;
            rec(out, cur, pos + 1, left - k);
        }
        cur[pos] = 0;
    }
    if dim == 0 {
        return out;
    }
    rec(&mut out, &mut cur, 0, order as u32);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::termlang::parser::parse_nonlinearity;
    use crate::termlang::SpecMode;

    fn component(src: &str, dim: usize) -> HomogeneousComponent {
        parse_nonlinearity(src, dim, SpecMode::Finite)
            .unwrap()
            .component(0)
            .clone()
    }

    /// Oracle: F(x) = |x|^2 x in 1D is x^3; derivatives at ξ are binomial.
    #[test]
    fn cubic_tensors_match_closed_form() {
        let c = component("norm2(x)^2 * x", 1);
        let xi = [0.7f64];
        let mut ladder = TensorLadder::new(&c, &xi);
        // d^m(x^3)/m! at xi: m=0: xi^3, m=1: 3xi^2, m=2: 3xi, m=3: 1, m=4: 0
        let expect = [
            xi[0].powi(3),
            3.0 * xi[0].powi(2),
            3.0 * xi[0],
            1.0,
            0.0,
        ];
        for (m, &e) in expect.iter().enumerate() {
            let t = ladder.tensor(&c, m).unwrap();
            let got = t.entry(&[m as u32]).map(|v| v[0]).unwrap_or(0.0);
            assert!(
                (got - e).abs() < 1e-12,
                "order {m}: got {got}, expected {e}"
            );
        }
    }

    /// Oracle: F(x) = |x|^α x in 1D for x > 0 is x^{1+α}; the k-th Taylor
    /// weight at ξ > 0 is binom(1+α, k) ξ^{1+α-k}.
    #[test]
    fn fractional_power_tensors_match_binomial_series() {
        let c = component("norm2(x)^{1/2} * x", 1);
        let xi = [0.64f64];
        let a = 1.5f64; // 1 + α
        let mut ladder = TensorLadder::new(&c, &xi);
        let mut binom = 1.0; // binom(a, 0)
        for m in 0..6 {
            let t = ladder.tensor(&c, m).unwrap();
            let got = t.entry(&[m as u32]).map(|v| v[0]).unwrap_or(0.0);
            let expect = binom * xi[0].powf(a - m as f64);
            assert!(
                (got - expect).abs() < 1e-10 * expect.abs().max(1.0),
                "order {m}: got {got}, expected {expect}"
            );
            binom *= (a - m as f64) / (m as f64 + 1.0);
        }
    }

    /// Cross-check symbolic derivatives against finite differences for a
    /// genuinely multivariate product with an odd-norm factor.
    #[test]
    fn multivariate_tensors_match_finite_differences() {
        let c = component("lpnorm(3; x)^{1/2} * [x_2, -x_1]", 2);
        let xi = [0.8f64, -0.6];
        let mut ladder = TensorLadder::new(&c, &xi);
        let f = |x: &[f64]| {
            let n = (x[0].abs().powi(3) + x[1].abs().powi(3)).powf(1.0 / 3.0);
            let s = n.sqrt();
            [s * x[1], -s * x[0]]
        };
        let h = 1e-5;
        // First order: ∂_i F_c(ξ) by central differences.
        let t1 = ladder.tensor(&c, 1).unwrap();
        for i in 0..2 {
            let mut xp = xi;
            let mut xm = xi;
            xp[i] += h;
            xm[i] -= h;
            let (fp, fm) = (f(&xp), f(&xm));
            let mut sigma = [0u32; 2];
            sigma[i] = 1;
            let got = t1.entry(&sigma).unwrap();
            for cidx in 0..2 {
                let fd = (fp[cidx] - fm[cidx]) / (2.0 * h);
                assert!(
                    (got[cidx] - fd).abs() < 1e-6,
                    "∂_{i} F_{cidx}: {} vs {fd}",
                    got[cidx]
                );
            }
        }
        // Second order, mixed: ∂_1∂_2 F(ξ)/2.
        let t2 = ladder.tensor(&c, 2).unwrap();
        let got = t2.entry(&[1, 1]).unwrap();
        for (cidx, gc) in got.iter().enumerate() {
            let fpp = f(&[xi[0] + h, xi[1] + h])[cidx];
            let fpm = f(&[xi[0] + h, xi[1] - h])[cidx];
            let fmp = f(&[xi[0] - h, xi[1] + h])[cidx];
            let fmm = f(&[xi[0] - h, xi[1] - h])[cidx];
            let fd = (fpp - fpm - fmp + fmm) / (4.0 * h * h) / 2.0;
            assert!((gc - fd).abs() < 1e-4, "mixed second: {gc} vs {fd}");
        }
    }

    #[test]
    fn singular_point_is_rejected_for_derivatives() {
        let c = component("sgnpow(x_2, 1/3) * [x_1^2, 0]", 2);
        let xi = [1.0f64, 0.0];
        let mut ladder = TensorLadder::new(&c, &xi);
        // Order 0 evaluates fine (the factor is continuous).
        assert!(ladder.tensor(&c, 0).is_ok());
        let err = ladder.tensor(&c, 1).unwrap_err();
        match err {
            TensorError::SingularBasePoint { factor } => {
                assert!(factor.contains("sgnpow"), "{factor}");
            }
            other => panic!("expected SingularBasePoint, got {other:?}"),
        }
    }

    #[test]
    fn order_cap_is_enforced() {
        let c = component("norm2(x)^{1/2} * x", 1);
        let mut ladder = TensorLadder::new(&c, &[1.0]);
        let err = ladder.tensor(&c, ORDER_CAP + 1).unwrap_err();
        assert!(matches!(err, TensorError::OrderOverflow { .. }));
    }

    #[test]
    fn application_contracts_polynomial_arguments() {
        // F(x) = x^3 in 1D; F_2 tensor at ξ: 3ξ. Applied to (q, q) with
        // q(t) = 1 + t: result 3ξ(1+t)^2.
        let c = component("norm2(x)^2 * x", 1);
        let xi = [2.0f64];
        let mut ladder = TensorLadder::new(&c, &xi);
        let t2 = ladder.tensor(&c, 2).unwrap().clone();
        let q = VectorPoly {
            dim: 1,
            coeffs: vec![vec![1.0], vec![1.0]],
        };
        let out = t2.apply(&[&q, &q]).unwrap();
        assert_eq!(out.degree(), Some(2));
        let v = out.eval(3.0);
        assert!((v[0] - 6.0 * 16.0).abs() < 1e-12);
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let c = component("norm2(x)^2 * x", 1);
        let mut ladder = TensorLadder::new(&c, &[1.0]);
        let t2 = ladder.tensor(&c, 2).unwrap().clone();
        let q = VectorPoly::constant(vec![1.0]);
        assert!(matches!(
            t2.apply(&[&q]),
            Err(TensorError::ArityMismatch { order: 2, given: 1 })
        ));
    }

    /// Mixed-sign tensors: F(x) = sgnpow(x_1, 5/2) in 1D output.
    /// For x > 0 this is x^{5/2}; derivative weights are binomial.
    #[test]
    fn signed_power_derivatives() {
        let c = component("sgnpow(x_1, 5/2) * [x_1, 0]", 2);
        // Total: |x_1|^{5/2} sgn(x_1) · x_1 = x_1^{7/2} for x_1 > 0.
        let xi = [0.81f64, 0.3];
        let mut ladder = TensorLadder::new(&c, &xi);
        let a = 3.5f64;
        let mut binom = 1.0;
        for m in 0..4 {
            let t = ladder.tensor(&c, m).unwrap();
            let mut sigma = vec![0u32; 2];
            sigma[0] = m as u32;
            let got = t.entry(&sigma).map(|v| v[0]).unwrap_or(0.0);
            let expect = binom * xi[0].powf(a - m as f64);
            assert!(
                (got - expect).abs() < 1e-9 * expect.abs().max(1.0),
                "order {m}: got {got}, expected {expect}"
            );
            binom *= (a - m as f64) / (m as f64 + 1.0);
        }
    }

    #[test]
    fn norm_bound_is_positive_and_finite() {
        let c = component("norm2(x)^{1/2} * x", 2);
        let mut ladder = TensorLadder::new(&c, &[0.6, 0.8]);
        for m in 0..4 {
            let t = ladder.tensor(&c, m).unwrap();
            assert!(t.norm_bound.is_finite());
            if !t.is_zero() {
                assert!(t.norm_bound > 0.0);
            }
        }
    }
}
