//! Data-oblivious dense linear algebra over [`Arith`]: products, Householder
//! bidiagonalization, fixed-count Demmel–Kahan QR sweeps (zero-shift and
//! shifted with branch-free deflation), and SVD-based solves.
//!
//! Every routine performs the same operations whatever the values: loops run
//! over public dimensions and sweep counts, and degenerate cases are handled
//! by selecting safe operands instead of branching.

use thiserror::Error;

use crate::obliv::Arith;

/// Givens inputs whose magnitudes are both at or below this are treated as
/// zero and rotated by the identity.
pub const GIVENS_TINY: f64 = 1e-30;
/// A Householder tail whose squared norm is at or below this is left alone.
pub const HOUSEHOLDER_TINY: f64 = 1e-30;
/// Relative reciprocal threshold for the pseudo-inverse.
pub const DEFAULT_PINV_TAU: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Dense row-major matrix with public dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct SecretMatrix<T> {
    rows: usize,
    cols: usize,
    elems: Vec<T>,
}

impl<T: Copy> SecretMatrix<T> {
    pub fn from_vec(rows: usize, cols: usize, elems: Vec<T>) -> Result<Self, LinalgError> {
        if elems.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "{} elements for a {rows}x{cols} matrix",
                elems.len()
            )));
        }
        Ok(SecretMatrix { rows, cols, elems })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut elems = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                elems.push(f(r, c));
            }
        }
        SecretMatrix { rows, cols, elems }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn elems(&self) -> &[T] {
        &self.elems
    }
    pub fn into_elems(self) -> Vec<T> {
        self.elems
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.elems[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.elems[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Self {
        SecretMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(&T) -> U) -> SecretMatrix<U> {
        SecretMatrix {
            rows: self.rows,
            cols: self.cols,
            elems: self.elems.iter().map(f).collect(),
        }
    }
}

pub fn identity<A: Arith>(ctx: &mut A, n: usize) -> SecretMatrix<A::Num> {
    let one = ctx.num(1.0);
    let zero = ctx.num(0.0);
    SecretMatrix::from_fn(n, n, |r, c| if r == c { one } else { zero })
}

/// Triple-loop product; each entry is a left-to-right dot product.
pub fn matmul<A: Arith>(
    ctx: &mut A,
    a: &SecretMatrix<A::Num>,
    b: &SecretMatrix<A::Num>,
) -> Result<SecretMatrix<A::Num>, LinalgError> {
    if a.cols != b.rows {
        return Err(LinalgError::Dimension(format!(
            "{}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut elems = Vec::with_capacity(a.rows * b.cols);
    let mut col = Vec::with_capacity(b.rows);
    for r in 0..a.rows {
        let row = &a.elems[r * a.cols..(r + 1) * a.cols];
        for c in 0..b.cols {
            col.clear();
            col.extend((0..b.rows).map(|k| b.get(k, c)));
            elems.push(ctx.dot(row, &col));
        }
    }
    Ok(SecretMatrix {
        rows: a.rows,
        cols: b.cols,
        elems,
    })
}

/// `A·x` for a vector `x`.
pub fn matvec<A: Arith>(
    ctx: &mut A,
    a: &SecretMatrix<A::Num>,
    x: &[A::Num],
) -> Result<Vec<A::Num>, LinalgError> {
    if a.cols != x.len() {
        return Err(LinalgError::Dimension(format!(
            "{}x{} times vector of {}",
            a.rows,
            a.cols,
            x.len()
        )));
    }
    Ok((0..a.rows)
        .map(|r| ctx.dot(&a.elems[r * a.cols..(r + 1) * a.cols], x))
        .collect())
}

/// `Aᵀ·x` without materializing the transpose.
pub fn matvec_transposed<A: Arith>(
    ctx: &mut A,
    a: &SecretMatrix<A::Num>,
    x: &[A::Num],
) -> Result<Vec<A::Num>, LinalgError> {
    if a.rows != x.len() {
        return Err(LinalgError::Dimension(format!(
            "({}x{})ᵀ times vector of {}",
            a.rows,
            a.cols,
            x.len()
        )));
    }
    let mut col = Vec::with_capacity(a.rows);
    Ok((0..a.cols)
        .map(|c| {
            col.clear();
            col.extend((0..a.rows).map(|r| a.get(r, c)));
            ctx.dot(&col, x)
        })
        .collect())
}

/// Upper bidiagonal `B = Uᵀ·A·V` with `U` thin (`rows × k`) and `V` square.
#[derive(Clone, Debug)]
pub struct BidiagonalForm<T> {
    pub diag: Vec<T>,
    pub superdiag: Vec<T>,
    pub u: SecretMatrix<T>,
    pub v: SecretMatrix<T>,
}

/// Elementary reflector `H = I − τ·w·wᵀ` with `w[0] = 1`, mapping `x` to
/// `β·e₁`. The stored `w` omits the leading one.
struct Reflector<T> {
    tail: Vec<T>,
    tau: T,
    beta: T,
}

fn make_reflector<A: Arith>(ctx: &mut A, x: &[A::Num]) -> Reflector<A::Num> {
    let alpha = x[0];
    let tail_sq = ctx.dot(&x[1..], &x[1..]);
    let alpha_sq = ctx.mul(alpha, alpha);
    let norm_sq = ctx.add(alpha_sq, tail_sq);
    let norm = ctx.sqrt(norm_sq);
    let zero = ctx.num(0.0);
    let one = ctx.num(1.0);
    let neg_alpha = ctx.lt(alpha, zero);
    let minus_norm = ctx.neg(norm);
    let beta = ctx.select(neg_alpha, norm, minus_norm);

    let tiny = ctx.num(HOUSEHOLDER_TINY);
    let skip = ctx.le(tail_sq, tiny);
    let denom = ctx.sub(alpha, beta);
    let safe_denom = ctx.select(skip, one, denom);
    let safe_beta = ctx.select(skip, one, beta);
    let tail = x[1..]
        .iter()
        .map(|xi| {
            let w = ctx.div(*xi, safe_denom);
            ctx.select(skip, zero, w)
        })
        .collect();
    let diff = ctx.sub(beta, alpha);
    let tau = ctx.div(diff, safe_beta);
    let tau = ctx.select(skip, zero, tau);
    let beta = ctx.select(skip, alpha, beta);
    Reflector { tail, tau, beta }
}

/// `y ← H·y` for a vector stored as `y[0]` plus the tail.
fn reflect<A: Arith>(ctx: &mut A, h: &Reflector<A::Num>, y: &mut [A::Num]) {
    let tail_dot = ctx.dot(&h.tail, &y[1..]);
    let w = ctx.add(y[0], tail_dot);
    let tw = ctx.mul(h.tau, w);
    y[0] = ctx.sub(y[0], tw);
    for (yi, hi) in y[1..].iter_mut().zip(&h.tail) {
        let d = ctx.mul(tw, *hi);
        *yi = ctx.sub(*yi, d);
    }
}

fn column<T: Copy>(m: &SecretMatrix<T>, c: usize, from: usize) -> Vec<T> {
    (from..m.rows).map(|r| m.get(r, c)).collect()
}

fn set_column<T: Copy>(m: &mut SecretMatrix<T>, c: usize, from: usize, v: &[T]) {
    for (i, x) in v.iter().enumerate() {
        m.set(from + i, c, *x);
    }
}

fn row<T: Copy>(m: &SecretMatrix<T>, r: usize, from: usize) -> Vec<T> {
    (from..m.cols).map(|c| m.get(r, c)).collect()
}

fn set_row<T: Copy>(m: &mut SecretMatrix<T>, r: usize, from: usize, v: &[T]) {
    for (i, x) in v.iter().enumerate() {
        m.set(r, from + i, *x);
    }
}

/// Golub–Kahan reduction by alternating left and right Householder
/// reflectors, then backward accumulation of `U` and `V`.
pub fn householder_bidiagonalize<A: Arith>(
    ctx: &mut A,
    a: &SecretMatrix<A::Num>,
) -> Result<BidiagonalForm<A::Num>, LinalgError> {
    let (m, n) = (a.rows, a.cols);
    if m < n || n == 0 {
        return Err(LinalgError::Dimension(format!(
            "bidiagonalization needs rows >= cols >= 1, got {m}x{n}"
        )));
    }
    let mut w = a.clone();
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n.saturating_sub(2));
    let mut diag = Vec::with_capacity(n);
    let mut superdiag = Vec::with_capacity(n - 1);

    for j in 0..n {
        let h = make_reflector(ctx, &column(&w, j, j));
        for c in j + 1..n {
            let mut y = column(&w, c, j);
            reflect(ctx, &h, &mut y);
            set_column(&mut w, c, j, &y);
        }
        diag.push(h.beta);
        left.push(h);

        if j + 2 < n {
            let g = make_reflector(ctx, &row(&w, j, j + 1));
            for r in j + 1..m {
                let mut y = row(&w, r, j + 1);
                reflect(ctx, &g, &mut y);
                set_row(&mut w, r, j + 1, &y);
            }
            superdiag.push(g.beta);
            right.push(g);
        } else if j + 1 < n {
            superdiag.push(w.get(j, j + 1));
        }
    }

    let one = ctx.num(1.0);
    let zero = ctx.num(0.0);
    let mut u = SecretMatrix::from_fn(m, n, |r, c| if r == c { one } else { zero });
    for (j, h) in left.iter().enumerate().rev() {
        for c in j..n {
            let mut y = column(&u, c, j);
            reflect(ctx, h, &mut y);
            set_column(&mut u, c, j, &y);
        }
    }
    let mut v = SecretMatrix::from_fn(n, n, |r, c| if r == c { one } else { zero });
    for (j, g) in right.iter().enumerate().rev() {
        for c in j + 1..n {
            let mut y = column(&v, c, j + 1);
            reflect(ctx, g, &mut y);
            set_column(&mut v, c, j + 1, &y);
        }
    }
    Ok(BidiagonalForm {
        diag,
        superdiag,
        u,
        v,
    })
}

/// Plane rotation `(cs, sn, r)` with `cs·f + sn·g = r` and `−sn·f + cs·g = 0`.
/// Both branches of the scaled formula are evaluated and the one with the
/// larger denominator is selected; near-zero inputs give the identity.
pub fn givens<A: Arith>(ctx: &mut A, f: A::Num, g: A::Num) -> (A::Num, A::Num, A::Num) {
    let one = ctx.num(1.0);
    let zero = ctx.num(0.0);
    let af = ctx.abs(f);
    let ag = ctx.abs(g);
    let f_dominant = ctx.lt(ag, af);
    let biggest = ctx.max(af, ag);
    let tiny = ctx.num(GIVENS_TINY);
    let degenerate = ctx.le(biggest, tiny);

    // |f| > |g|: t = g/f, cs = 1/sqrt(1+t²), sn = t·cs, r = f·sqrt(1+t²)
    let f_safe = ctx.select(f_dominant, f, one);
    let t1 = ctx.div(g, f_safe);
    let t1_sq = ctx.mul(t1, t1);
    let s1 = ctx.add(one, t1_sq);
    let tt1 = ctx.sqrt(s1);
    let cs1 = ctx.div(one, tt1);
    let sn1 = ctx.mul(t1, cs1);
    let r1 = ctx.mul(f, tt1);

    // |f| <= |g|: t = f/g, sn = 1/sqrt(1+t²), cs = t·sn, r = g·sqrt(1+t²)
    let g_usable = ctx.or(f_dominant, degenerate);
    let g_safe = ctx.select(g_usable, one, g);
    let t2 = ctx.div(f, g_safe);
    let t2_sq = ctx.mul(t2, t2);
    let s2 = ctx.add(one, t2_sq);
    let tt2 = ctx.sqrt(s2);
    let sn2 = ctx.div(one, tt2);
    let cs2 = ctx.mul(t2, sn2);
    let r2 = ctx.mul(g, tt2);

    let cs = ctx.select(f_dominant, cs1, cs2);
    let sn = ctx.select(f_dominant, sn1, sn2);
    let r = ctx.select(f_dominant, r1, r2);
    let cs = ctx.select(degenerate, one, cs);
    let sn = ctx.select(degenerate, zero, sn);
    let r = ctx.select(degenerate, f, r);
    (cs, sn, r)
}

/// `(x, y) ← (c·x + s·y, c·y − s·x)` on columns `i` and `i+1` of `m`.
fn rotate_columns<A: Arith>(
    ctx: &mut A,
    m: &mut SecretMatrix<A::Num>,
    i: usize,
    cs: A::Num,
    sn: A::Num,
) {
    for r in 0..m.rows {
        let x = m.get(r, i);
        let y = m.get(r, i + 1);
        let a = ctx.mul(cs, y);
        let b = ctx.mul(sn, x);
        let y_new = ctx.sub(a, b);
        let a = ctx.mul(sn, y);
        let b = ctx.mul(cs, x);
        let x_new = ctx.add(a, b);
        m.set(r, i + 1, y_new);
        m.set(r, i, x_new);
    }
}

/// One implicit zero-shift QR sweep (Demmel–Kahan) over the whole band, top
/// to bottom, updating `U` and `V`. No deflation and no early exit.
pub fn dk_qr_sweep<A: Arith>(ctx: &mut A, b: &mut BidiagonalForm<A::Num>) {
    let k = b.diag.len();
    if k < 2 {
        return;
    }
    let mut cs = ctx.num(1.0);
    let mut oldcs = cs;
    let mut oldsn = ctx.num(0.0);
    for i in 0..k - 1 {
        let f = ctx.mul(b.diag[i], cs);
        let (c, s, r) = givens(ctx, f, b.superdiag[i]);
        cs = c;
        let sn = s;
        if i > 0 {
            b.superdiag[i - 1] = ctx.mul(oldsn, r);
        }
        let f = ctx.mul(oldcs, r);
        let g = ctx.mul(b.diag[i + 1], sn);
        let (c2, s2, r2) = givens(ctx, f, g);
        oldcs = c2;
        oldsn = s2;
        b.diag[i] = r2;
        rotate_columns(ctx, &mut b.v, i, cs, sn);
        rotate_columns(ctx, &mut b.u, i, oldcs, oldsn);
    }
    let h = ctx.mul(b.diag[k - 1], cs);
    b.diag[k - 1] = ctx.mul(h, oldcs);
    b.superdiag[k - 2] = ctx.mul(h, oldsn);
}

/// Smaller singular value of `[[f, g], [0, h]]`, following the scaled
/// formulas of LAPACK's `dlas2`; both branches are evaluated and selected.
pub fn small_singular_value_2x2<A: Arith>(
    ctx: &mut A,
    f: A::Num,
    g: A::Num,
    h: A::Num,
) -> A::Num {
    let one = ctx.num(1.0);
    let two = ctx.num(2.0);
    let zero = ctx.num(0.0);
    let fa = ctx.abs(f);
    let ga = ctx.abs(g);
    let ha = ctx.abs(h);
    let f_smaller = ctx.lt(fa, ha);
    let fhmn = ctx.select(f_smaller, fa, ha);
    let fhmx = ctx.select(f_smaller, ha, fa);
    let tiny = ctx.num(GIVENS_TINY);
    let min_zero = ctx.le(fhmn, tiny);
    let max_zero = ctx.le(fhmx, tiny);
    let ga_zero = ctx.le(ga, tiny);
    let safe_fhmx = ctx.select(max_zero, one, fhmx);
    let safe_ga = ctx.select(ga_zero, one, ga);

    let ratio = ctx.div(fhmn, safe_fhmx);
    let as_ = ctx.add(one, ratio);
    let gap = ctx.sub(fhmx, fhmn);
    let at = ctx.div(gap, safe_fhmx);

    // |g| < max(|f|, |h|)
    let gq = ctx.div(ga, safe_fhmx);
    let au = ctx.mul(gq, gq);
    let as2 = ctx.mul(as_, as_);
    let at2 = ctx.mul(at, at);
    let p = ctx.add(as2, au);
    let q = ctx.add(at2, au);
    let sp = ctx.sqrt(p);
    let sq = ctx.sqrt(q);
    let den = ctx.add(sp, sq);
    let safe_den = ctx.select(min_zero, one, den);
    let c = ctx.div(two, safe_den);
    let small_g = ctx.mul(fhmn, c);

    // |g| >= max(|f|, |h|)
    let au = ctx.div(fhmx, safe_ga);
    let asau = ctx.mul(as_, au);
    let atau = ctx.mul(at, au);
    let p = ctx.mul(asau, asau);
    let p = ctx.add(one, p);
    let q = ctx.mul(atau, atau);
    let q = ctx.add(one, q);
    let sp = ctx.sqrt(p);
    let sq = ctx.sqrt(q);
    let den = ctx.add(sp, sq);
    let c = ctx.div(one, den);
    let big_g = ctx.mul(fhmn, c);
    let big_g = ctx.mul(big_g, au);
    let big_g = ctx.add(big_g, big_g);

    let g_small = ctx.lt(ga, fhmx);
    let out = ctx.select(g_small, small_g, big_g);
    ctx.select(min_zero, zero, out)
}

/// One implicit shifted QR sweep (Golub–Kahan chase, top to bottom) across
/// the whole band, in the style of LAPACK's `dbdsqr` but without branching.
///
/// A superdiagonal entry is treated as split when it is negligible next to
/// its two diagonal neighbours. Every unreduced block gets its own shift,
/// taken from the block's trailing 2×2, and the chase restarts at each block
/// start. Converged blocks are therefore left alone while the remaining ones
/// keep converging at the shifted rate, all on a fixed op sequence.
pub fn dk_shifted_sweep<A: Arith>(ctx: &mut A, b: &mut BidiagonalForm<A::Num>) {
    let k = b.diag.len();
    if k < 2 {
        return;
    }
    let last = k - 1;
    let one = ctx.num(1.0);
    let zero = ctx.num(0.0);
    let minus_one = ctx.num(-1.0);
    let tiny = ctx.num(GIVENS_TINY);
    let tol = ctx.num(DEFLATE_REL);
    let negligible_shift = ctx.num(SHIFT_NEGLIGIBLE);

    let split: Vec<A::Bit> = (0..last)
        .map(|i| {
            let a = ctx.abs(b.diag[i]);
            let c = ctx.abs(b.diag[i + 1]);
            let local = ctx.add(a, c);
            let bound = ctx.mul(tol, local);
            let e = ctx.abs(b.superdiag[i]);
            ctx.le(e, bound)
        })
        .collect();

    // shift[i]: shift of the unreduced block containing row i.
    let mut shift = vec![zero; k];
    shift[last] = small_singular_value_2x2(ctx, b.diag[last - 1], b.superdiag[last - 1], b.diag[last]);
    for i in (1..last).rev() {
        let own = small_singular_value_2x2(ctx, b.diag[i - 1], b.superdiag[i - 1], b.diag[i]);
        shift[i] = ctx.select(split[i], own, shift[i + 1]);
    }
    shift[0] = shift[1];

    let mut f = zero;
    let mut g = zero;
    for i in 0..last {
        // A block that starts here gets a fresh shifted first column; a
        // singleton block (split on both sides) is run unshifted, which makes
        // its rotations the identity.
        let di = b.diag[i];
        let sll = ctx.abs(di);
        let d_zero = ctx.le(sll, tiny);
        let safe_sll = ctx.select(d_zero, one, sll);
        let rel = ctx.div(shift[i], safe_sll);
        let rel2 = ctx.mul(rel, rel);
        let drop = ctx.lt(rel2, negligible_shift);
        let drop = ctx.or(drop, d_zero);
        let drop = ctx.or(drop, split[i]);
        let sh = ctx.select(drop, zero, shift[i]);
        let d_neg = ctx.lt(di, zero);
        let sign = ctx.select(d_neg, minus_one, one);
        let safe_d = ctx.select(d_zero, one, di);
        let sd = ctx.div(sh, safe_d);
        let x = ctx.sub(sll, sh);
        let y = ctx.add(sign, sd);
        let f_start = ctx.mul(x, y);

        let (f_in, g_in) = if i == 0 {
            (f_start, b.superdiag[0])
        } else {
            let start = split[i - 1];
            let fs = ctx.select(start, f_start, f);
            let gs = ctx.select(start, b.superdiag[i], g);
            (fs, gs)
        };
        // At a split the chase of the block above ends and this position is
        // left untouched.
        let gap = split[i];
        let (cosr, sinr, r) = givens(ctx, f_in, g_in);
        let cosr = ctx.select(gap, one, cosr);
        let sinr = ctx.select(gap, zero, sinr);
        if i > 0 {
            let ended = ctx.select(gap, f, r);
            b.superdiag[i - 1] = ctx.select(split[i - 1], b.superdiag[i - 1], ended);
        }
        let ei = b.superdiag[i];
        let dn = b.diag[i + 1];
        let x = ctx.mul(cosr, di);
        let y = ctx.mul(sinr, ei);
        f = ctx.add(x, y);
        let x = ctx.mul(cosr, ei);
        let y = ctx.mul(sinr, di);
        let ei = ctx.sub(x, y);
        g = ctx.mul(sinr, dn);
        let dn = ctx.mul(cosr, dn);

        let (cosl, sinl, r) = givens(ctx, f, g);
        let cosl = ctx.select(gap, one, cosl);
        let sinl = ctx.select(gap, zero, sinl);
        b.diag[i] = ctx.select(gap, f, r);
        let x = ctx.mul(cosl, ei);
        let y = ctx.mul(sinl, dn);
        f = ctx.add(x, y);
        let x = ctx.mul(cosl, dn);
        let y = ctx.mul(sinl, ei);
        b.diag[i + 1] = ctx.sub(x, y);
        b.superdiag[i] = ei;
        if i + 1 < last {
            let en = b.superdiag[i + 1];
            g = ctx.mul(sinl, en);
            b.superdiag[i + 1] = ctx.mul(cosl, en);
        }
        rotate_columns(ctx, &mut b.v, i, cosr, sinr);
        rotate_columns(ctx, &mut b.u, i, cosl, sinl);
    }
    b.superdiag[last - 1] = f;
}

/// A superdiagonal entry at most this fraction of its diagonal neighbours'
/// magnitude splits the band.
pub const DEFLATE_REL: f64 = 5e-7;

/// Shifts whose square relative to the block's leading diagonal entry falls
/// below this are dropped.
pub const SHIFT_NEGLIGIBLE: f64 = 1e-14;

/// `A = U·diag(sigma)·Vᵀ`. Singular values are non-negative but unordered.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: SecretMatrix<T>,
    pub sigma: Vec<T>,
    pub v: SecretMatrix<T>,
}

/// Bidiagonalization followed by exactly `sweeps` shifted QR sweeps
/// ([`dk_shifted_sweep`]) and a sign fix.
pub fn svd_fixed<A: Arith>(
    ctx: &mut A,
    a: &SecretMatrix<A::Num>,
    sweeps: usize,
) -> Result<Svd<A::Num>, LinalgError> {
    let mut b = householder_bidiagonalize(ctx, a)?;
    for _ in 0..sweeps {
        dk_shifted_sweep(ctx, &mut b);
    }
    Ok(sign_fix(ctx, b))
}

/// Makes the diagonal non-negative by flipping the matching columns of `V`.
pub fn sign_fix<A: Arith>(ctx: &mut A, b: BidiagonalForm<A::Num>) -> Svd<A::Num> {
    let zero = ctx.num(0.0);
    let BidiagonalForm { diag, u, mut v, .. } = b;
    let mut sigma = Vec::with_capacity(diag.len());
    for (i, d) in diag.iter().enumerate() {
        let negative = ctx.lt(*d, zero);
        sigma.push(ctx.abs(*d));
        for r in 0..v.rows {
            let x = v.get(r, i);
            let nx = ctx.neg(x);
            let y = ctx.select(negative, nx, x);
            v.set(r, i, y);
        }
    }
    Svd { u, sigma, v }
}

/// `V·Σ⁺·Uᵀ·b`, where reciprocals of singular values below `tau·σ_max` are
/// replaced by zero.
pub fn svd_apply_pinv<A: Arith>(
    ctx: &mut A,
    svd: &Svd<A::Num>,
    b: &[A::Num],
    tau: f64,
) -> Result<Vec<A::Num>, LinalgError> {
    let utb = matvec_transposed(ctx, &svd.u, b)?;
    let mut sigma_max = svd.sigma[0];
    for s in &svd.sigma[1..] {
        sigma_max = ctx.max(sigma_max, *s);
    }
    let tau = ctx.param(tau);
    let threshold = ctx.mul(tau, sigma_max);
    let one = ctx.num(1.0);
    let zero = ctx.num(0.0);
    let scaled: Vec<_> = svd
        .sigma
        .iter()
        .zip(&utb)
        .map(|(s, y)| {
            let null = ctx.lt(*s, threshold);
            let zero_sigma = ctx.le(*s, zero);
            let unsafe_den = ctx.or(null, zero_sigma);
            let den = ctx.select(unsafe_den, one, *s);
            let q = ctx.div(*y, den);
            ctx.select(unsafe_den, zero, q)
        })
        .collect();
    matvec(ctx, &svd.v, &scaled)
}

/// Solves a symmetric positive semi-definite 6×6 (or any square) system
/// through its SVD.
pub fn solve_spd_via_svd<A: Arith>(
    ctx: &mut A,
    a: &SecretMatrix<A::Num>,
    b: &[A::Num],
    sweeps: usize,
    tau: f64,
) -> Result<Vec<A::Num>, LinalgError> {
    if a.rows != a.cols || a.rows != b.len() {
        return Err(LinalgError::Dimension(format!(
            "system {}x{} with right-hand side of {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    let svd = svd_fixed(ctx, a, sweeps)?;
    svd_apply_pinv(ctx, &svd, b, tau)
}

/// `J⁺·r` for a tall `J`.
pub fn pinv_apply<A: Arith>(
    ctx: &mut A,
    j: &SecretMatrix<A::Num>,
    r: &[A::Num],
    sweeps: usize,
    tau: f64,
) -> Result<Vec<A::Num>, LinalgError> {
    if j.rows != r.len() {
        return Err(LinalgError::Dimension(format!(
            "{}x{} with right-hand side of {}",
            j.rows,
            j.cols,
            r.len()
        )));
    }
    let svd = svd_fixed(ctx, j, sweeps)?;
    svd_apply_pinv(ctx, &svd, r, tau)
}

/// `max |superdiag| < rel · max |diag|`, evaluated in plaintext.
pub fn band_converged(diag: &[f64], superdiag: &[f64], rel: f64) -> bool {
    let dmax = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let emax = superdiag.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    emax < rel * dmax
}

/// Near-degenerate pattern: some diagonal entry within `tol` of its
/// neighbouring superdiagonal entry, the slow case for zero-shift QR.
pub fn has_degenerate_pair(diag: &[f64], superdiag: &[f64], tol: f64) -> bool {
    superdiag
        .iter()
        .enumerate()
        .any(|(i, e)| (diag[i].abs() - e.abs()).abs() <= tol && e.abs() > tol)
}
