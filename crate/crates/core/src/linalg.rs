//! Dense linear algebra for small systems.
//!
//! Everything here targets matrices of modest dimension (the system matrix
//! of an ODE, design matrices of a few regression columns). Row-major
//! storage, partial-pivot LU, Householder Hessenberg reduction, and a
//! shifted QR eigenvalue iteration are enough; no external solver is pulled
//! in for a d-by-d problem with d in the single digits.

use std::fmt;

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[i * self.cols..(i + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Mat {
            rows: r,
            cols: c,
            data: rows.concat(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| dot(self.row(i), x))
            .collect()
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Max-abs entry; zero for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self - s I` for square matrices.
    pub fn shifted(&self, s: f64) -> Mat {
        assert_eq!(self.rows, self.cols);
        let mut m = self.clone();
        for i in 0..self.rows {
            m[(i, i)] -= s;
        }
        m
    }

    /// Largest singular value, by power iteration on `AᵀA`.
    pub fn op_norm(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        let at = self.transpose();
        let mut v = vec![1.0; self.cols];
        let mut prev = 0.0;
        for _ in 0..200 {
            let w = at.matvec(&self.matvec(&v));
            let n = norm(&w);
            if n == 0.0 {
                return 0.0;
            }
            v = scale(&w, 1.0 / n);
            if (n - prev).abs() <= 1e-13 * n {
                prev = n;
                break;
            }
            prev = n;
        }
        prev.sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// LU factorization with partial pivoting.
pub struct Lu {
    lu: Mat,
    perm: Vec<usize>,
    /// Smallest pivot magnitude encountered.
    pub min_pivot: f64,
}

impl Lu {
    /// Factors a square matrix. Never fails outright; a singular matrix
    /// shows up as `min_pivot == 0` and solves will produce non-finite
    /// values the caller can detect.
    pub fn factor(a: &Mat) -> Lu {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if lu[(i, k)].abs() > lu[(p, k)].abs() {
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            min_pivot = min_pivot.min(pivot.abs());
            if pivot == 0.0 {
                continue;
            }
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                for j in k + 1..n {
                    lu[(i, j)] -= f * lu[(k, j)];
                }
            }
        }
        if n == 0 {
            min_pivot = 0.0;
        }
        Lu { lu, perm, min_pivot }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Solves `A x = b`; `None` when the system is numerically singular.
pub fn solve(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let lu = Lu::factor(a);
    if lu.min_pivot <= f64::MIN_POSITIVE * 16.0 {
        return None;
    }
    let x = lu.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Matrix inverse; `None` when numerically singular.
pub fn inverse(a: &Mat) -> Option<Mat> {
    let n = a.rows;
    let lu = Lu::factor(a);
    if lu.min_pivot <= f64::MIN_POSITIVE * 16.0 {
        return None;
    }
    let mut inv = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = lu.solve(&e);
        if col.iter().any(|v| !v.is_finite()) {
            return None;
        }
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    Some(inv)
}

/// Householder reduction to upper Hessenberg form (similarity transform).
pub fn hessenberg(a: &Mat) -> Mat {
    let n = a.rows;
    let mut h = a.clone();
    for k in 0..n.saturating_sub(2) {
        // Householder vector annihilating h[k+2.., k].
        let mut v: Vec<f64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let alpha = -v[0].signum() * norm(&v);
        if alpha == 0.0 {
            continue;
        }
        v[0] -= alpha;
        let vn = norm(&v);
        if vn == 0.0 {
            continue;
        }
        let v = scale(&v, 1.0 / vn);
        // H ← P H P with P = I - 2vvᵀ acting on rows/cols k+1..n.
        for j in 0..n {
            let s: f64 = (0..v.len()).map(|i| v[i] * h[(k + 1 + i, j)]).sum();
            for i in 0..v.len() {
                h[(k + 1 + i, j)] -= 2.0 * s * v[i];
            }
        }
        for i in 0..n {
            let s: f64 = (0..v.len()).map(|j| v[j] * h[(i, k + 1 + j)]).sum();
            for j in 0..v.len() {
                h[(i, k + 1 + j)] -= 2.0 * s * v[j];
            }
        }
    }
    h
}

/// An eigenvalue as produced by the QR iteration.
#[derive(Debug, Clone, Copy)]
pub struct EigenvalueEstimate {
    pub re: f64,
    pub im: f64,
}

/// Eigenvalues of a square matrix via Hessenberg reduction followed by
/// shifted QR iteration (Wilkinson shift, deflation at negligible
/// subdiagonals). Complex pairs are reported with nonzero imaginary part.
pub fn eigenvalues(a: &Mat) -> Vec<EigenvalueEstimate> {
    let n = a.rows;
    let mut h = hessenberg(a);
    let mut out: Vec<EigenvalueEstimate> = Vec::with_capacity(n);
    let scale_ref = h.max_abs().max(1e-300);
    let eps = f64::EPSILON * scale_ref;
    let mut hi = n; // active block is rows/cols 0..hi
    let mut iters = 0usize;
    while hi > 0 {
        if hi == 1 {
            out.push(EigenvalueEstimate { re: h[(0, 0)], im: 0.0 });
            hi = 0;
            continue;
        }
        // Deflate: find the largest lo with a negligible subdiagonal.
        let mut lo = hi - 1;
        while lo > 0 {
            let off = h[(lo, lo - 1)].abs();
            if off <= f64::EPSILON * (h[(lo, lo)].abs() + h[(lo - 1, lo - 1)].abs()).max(eps) {
                h[(lo, lo - 1)] = 0.0;
                break;
            }
            lo -= 1;
        }
        if lo == hi - 1 {
            out.push(EigenvalueEstimate { re: h[(hi - 1, hi - 1)], im: 0.0 });
            hi -= 1;
            iters = 0;
            continue;
        }
        // Trailing 2x2 of the active block.
        let (a11, a12) = (h[(hi - 2, hi - 2)], h[(hi - 2, hi - 1)]);
        let (a21, a22) = (h[(hi - 1, hi - 2)], h[(hi - 1, hi - 1)]);
        let tr = a11 + a22;
        let det = a11 * a22 - a12 * a21;
        let disc = tr * tr / 4.0 - det;
        if lo == hi - 2 {
            // Resolve the 2x2 block directly.
            if disc >= 0.0 {
                let sq = disc.sqrt();
                out.push(EigenvalueEstimate { re: tr / 2.0 + sq, im: 0.0 });
                out.push(EigenvalueEstimate { re: tr / 2.0 - sq, im: 0.0 });
            } else {
                let sq = (-disc).sqrt();
                out.push(EigenvalueEstimate { re: tr / 2.0, im: sq });
                out.push(EigenvalueEstimate { re: tr / 2.0, im: -sq });
            }
            hi -= 2;
            iters = 0;
            continue;
        }
        // Wilkinson shift: the eigenvalue of the trailing 2x2 closest to a22.
        let shift = if disc >= 0.0 {
            let sq = disc.sqrt();
            let l1 = tr / 2.0 + sq;
            let l2 = tr / 2.0 - sq;
            if (l1 - a22).abs() < (l2 - a22).abs() { l1 } else { l2 }
        } else {
            // Complex pair: use the real part (exceptional for the real
            // positive-spectrum inputs this crate targets).
            tr / 2.0
        };
        iters += 1;
        let shift = if iters.is_multiple_of(12) {
            // Exceptional shift breaks rare cycles.
            shift + h[(hi - 1, hi - 2)].abs()
        } else {
            shift
        };
        qr_step(&mut h, lo, hi, shift);
        if iters > 40 * n {
            // Give up on separating the rest; report diagonal entries.
            for i in 0..hi {
                out.push(EigenvalueEstimate { re: h[(i, i)], im: 0.0 });
            }
            break;
        }
    }
    out.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    out
}

/// One explicit shifted QR step on the active Hessenberg block, via Givens
/// rotations.
fn qr_step(h: &mut Mat, lo: usize, hi: usize, shift: f64) {
    let n = h.rows;
    for i in lo..hi {
        h[(i, i)] -= shift;
    }
    let mut rot: Vec<(f64, f64)> = Vec::with_capacity(hi - lo - 1);
    for k in lo..hi - 1 {
        let (x, y) = (h[(k, k)], h[(k + 1, k)]);
        let r = x.hypot(y);
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (x / r, y / r) };
        rot.push((c, s));
        for j in k..n {
            let (u, v) = (h[(k, j)], h[(k + 1, j)]);
            h[(k, j)] = c * u + s * v;
            h[(k + 1, j)] = -s * u + c * v;
        }
    }
    for (k, &(c, s)) in (lo..hi - 1).zip(&rot) {
        for i in 0..(k + 2).min(n) {
            let (u, v) = (h[(i, k)], h[(i, k + 1)]);
            h[(i, k)] = c * u + s * v;
            h[(i, k + 1)] = -s * u + c * v;
        }
    }
    for i in lo..hi {
        h[(i, i)] += shift;
    }
}

/// Orthonormal basis of the (numerical) nullspace of `a`, by Gauss-Jordan
/// elimination with full pivoting; pivots at or below `tol` count as zero.
pub fn nullspace(a: &Mat, tol: f64) -> Vec<Vec<f64>> {
    let (m, n) = (a.rows, a.cols);
    let mut u = a.clone();
    let mut col_perm: Vec<usize> = (0..n).collect();
    let mut rank = 0usize;
    for k in 0..m.min(n) {
        // Full pivot search in the trailing block.
        let (mut pi, mut pj, mut pv) = (k, k, 0.0f64);
        for i in k..m {
            for j in k..n {
                if u[(i, j)].abs() > pv {
                    pv = u[(i, j)].abs();
                    pi = i;
                    pj = j;
                }
            }
        }
        if pv <= tol {
            break;
        }
        for j in 0..n {
            let tmp = u[(k, j)];
            u[(k, j)] = u[(pi, j)];
            u[(pi, j)] = tmp;
        }
        if pj != k {
            for i in 0..m {
                let tmp = u[(i, k)];
                u[(i, k)] = u[(i, pj)];
                u[(i, pj)] = tmp;
            }
            col_perm.swap(k, pj);
        }
        let pivot = u[(k, k)];
        for i in 0..m {
            if i == k {
                continue;
            }
            let f = u[(i, k)] / pivot;
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                u[(i, j)] -= f * u[(k, j)];
            }
        }
        rank += 1;
    }
    // Free columns rank..n give nullspace vectors in permuted coordinates.
    let mut basis = Vec::with_capacity(n - rank);
    for free in rank..n {
        let mut v = vec![0.0; n];
        v[col_perm[free]] = 1.0;
        for i in 0..rank {
            v[col_perm[i]] = -u[(i, free)] / u[(i, i)];
        }
        basis.push(v);
    }
    orthonormalize(&mut basis);
    basis
}

/// One inverse-iteration refinement of an approximate eigenvector.
///
/// Solves `(A - (λ + perturb) I) w = v` and normalizes; falls back to `v`
/// when the shifted matrix is too singular to solve.
pub fn inverse_iteration_step(a: &Mat, lambda: f64, perturb: f64, v: &[f64]) -> Vec<f64> {
    let shifted = a.shifted(lambda + perturb);
    match solve(&shifted, v) {
        Some(w) => {
            let n = norm(&w);
            if n == 0.0 || !n.is_finite() {
                v.to_vec()
            } else {
                let mut w = scale(&w, 1.0 / n);
                // Fix overall sign for reproducibility: largest-magnitude
                // component positive.
                let lead = w
                    .iter()
                    .cloned()
                    .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                    .unwrap_or(1.0);
                if lead < 0.0 {
                    w = scale(&w, -1.0);
                }
                w
            }
        }
        None => v.to_vec(),
    }
}

/// In-place modified Gram-Schmidt; drops vectors that become negligible.
pub fn orthonormalize(vs: &mut Vec<Vec<f64>>) {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for v in vs.drain(..) {
        let mut w = v;
        for q in &out {
            let c = dot(&w, q);
            axpy(&mut w, -c, q);
        }
        let n = norm(&w);
        if n > 1e-12 {
            out.push(scale(&w, 1.0 / n));
        }
    }
    *vs = out;
}

/// Ordinary least squares `min ‖X c - y‖₂` via normal equations.
///
/// The design matrices here have a handful of well-scaled columns, where
/// the normal equations are entirely adequate.
pub fn lstsq(x: &Mat, y: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(x.rows, y.len());
    // Equilibrate columns before forming normal equations; wildly different
    // column scales otherwise square into the condition number.
    let mut scale = vec![1.0; x.cols];
    for (j, s) in scale.iter_mut().enumerate() {
        let n2: f64 = (0..x.rows).map(|i| x[(i, j)] * x[(i, j)]).sum();
        if n2 > 0.0 {
            *s = n2.sqrt();
        }
    }
    let mut xs = x.clone();
    for i in 0..x.rows {
        for (j, s) in scale.iter().enumerate() {
            xs[(i, j)] /= s;
        }
    }
    let xt = xs.transpose();
    let xtx = xt.matmul(&xs);
    let xty = xt.matvec(y);
    let mut beta = solve(&xtx, &xty)?;
    for (b, s) in beta.iter_mut().zip(&scale) {
        *b /= s;
    }
    Some(beta)
}

/// Slope and intercept of the least-squares line through `(t, v)` samples.
pub fn fit_line(ts: &[f64], vs: &[f64]) -> Option<(f64, f64)> {
    assert_eq!(ts.len(), vs.len());
    let n = ts.len();
    if n < 2 {
        return None;
    }
    let tm = ts.iter().sum::<f64>() / n as f64;
    let vm = vs.iter().sum::<f64>() / n as f64;
    let mut stt = 0.0;
    let mut stv = 0.0;
    for (t, v) in ts.iter().zip(vs) {
        stt += (t - tm) * (t - tm);
        stv += (t - tm) * (v - vm);
    }
    if stt == 0.0 {
        return None;
    }
    let slope = stv / stt;
    Some((slope, vm - slope * tm))
}
