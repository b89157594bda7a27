//! Block-sparse slab matrices, a banded LU with partial pivoting and
//! 2-norm condition numbers.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Square-block sparse matrix with a uniform block size.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    block_rows: usize,
    block_cols: usize,
    block_size: usize,
    blocks: BTreeMap<(usize, usize), DMatrix<C64>>,
}

impl BlockMatrix {
    pub fn new(block_rows: usize, block_cols: usize, block_size: usize) -> Self {
        BlockMatrix { block_rows, block_cols, block_size, blocks: BTreeMap::new() }
    }

    pub fn nrows(&self) -> usize {
        self.block_rows * self.block_size
    }

    pub fn ncols(&self) -> usize {
        self.block_cols * self.block_size
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&(usize, usize), &DMatrix<C64>)> {
        self.blocks.iter()
    }

    pub fn block(&self, row: usize, col: usize) -> Option<&DMatrix<C64>> {
        self.blocks.get(&(row, col))
    }

    /// Adds `m` into block `(row, col)`.
    pub fn add_block(&mut self, row: usize, col: usize, m: &DMatrix<C64>) {
        debug_assert!(row < self.block_rows && col < self.block_cols);
        debug_assert_eq!(m.shape(), (self.block_size, self.block_size));
        self.blocks
            .entry((row, col))
            .and_modify(|b| *b += m)
            .or_insert_with(|| m.clone());
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let bs = self.block_size;
        let mut y = vec![ZERO; self.nrows()];
        for (&(r, c), b) in &self.blocks {
            let xs = &x[c * bs..(c + 1) * bs];
            for i in 0..bs {
                let mut acc = ZERO;
                for j in 0..bs {
                    acc += b[(i, j)] * xs[j];
                }
                y[r * bs + i] += acc;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let bs = self.block_size;
        let mut m = DMatrix::zeros(self.nrows(), self.ncols());
        for (&(r, c), b) in &self.blocks {
            m.view_mut((r * bs, c * bs), (bs, bs)).copy_from(b);
        }
        m
    }

    /// Largest `|row − col|` over stored blocks, in scalar entries.
    pub fn bandwidth(&self) -> (usize, usize) {
        let bs = self.block_size;
        let mut kl = 0;
        let mut ku = 0;
        for &(r, c) in self.blocks.keys() {
            if r >= c {
                kl = kl.max((r - c + 1) * bs - 1);
                ku = ku.max(bs - 1);
            }
            if c >= r {
                ku = ku.max((c - r + 1) * bs - 1);
                kl = kl.max(bs - 1);
            }
        }
        (kl, ku)
    }

    /// Stored entries as `(row, col, value)` in row-major block order.
    pub fn entries(&self) -> Vec<(usize, usize, C64)> {
        let bs = self.block_size;
        let mut out = Vec::with_capacity(self.blocks.len() * bs * bs);
        for (&(r, c), b) in &self.blocks {
            for i in 0..bs {
                for j in 0..bs {
                    out.push((r * bs + i, c * bs + j, b[(i, j)]));
                }
            }
        }
        out.sort_by_key(|e| (e.0, e.1));
        out
    }
}

/// LU factorization of a banded matrix with partial pivoting.
///
/// Row `i` stores columns `i − kl ..= i + kl + ku`; the extra `kl`
/// super-diagonals hold the fill-in created by row interchanges.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<C64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    /// Factors `m` with lower/upper bandwidths `(kl, ku)`; entries outside
    /// the band are ignored.
    pub fn factor_block(m: &BlockMatrix) -> Result<Self> {
        let (kl, ku) = m.bandwidth();
        let n = m.nrows();
        let mut lu = BandedLu::empty(n, kl, ku);
        for (i, j, v) in m.entries() {
            let s = lu.slot(i, j);
            lu.band[s] += v;
        }
        lu.factor_in_place()?;
        Ok(lu)
    }

    pub fn factor_dense(m: &DMatrix<C64>, kl: usize, ku: usize) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(invalid("banded LU needs a square matrix"));
        }
        let n = m.nrows();
        let mut lu = BandedLu::empty(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                let s = lu.slot(i, j);
                lu.band[s] = m[(i, j)];
            }
        }
        lu.factor_in_place()?;
        Ok(lu)
    }

    fn empty(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandedLu { n, kl, ku, width, band: vec![ZERO; n * width], pivots: vec![0; n] }
    }

    fn factor_in_place(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let scale = self.band.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.band[self.slot(k, k)].norm();
            for i in k + 1..=last_row {
                let v = self.band[self.slot(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || best <= scale * f64::EPSILON * 1e-4 {
                return Err(Error::Numerical(format!("zero pivot in column {k}")));
            }
            self.pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.band.swap(a, b);
                }
            }
            let pivot = self.band[self.slot(k, k)];
            let inv = 1.0 / pivot;
            for i in k + 1..=last_row {
                let s = self.slot(i, k);
                let m = self.band[s] * inv;
                self.band[s] = m;
                if m == ZERO {
                    continue;
                }
                let (ri, rk) = (self.slot(i, k + 1), self.slot(k, k + 1));
                for off in 0..last_col.saturating_sub(k) {
                    let u = self.band[rk + off];
                    self.band[ri + off] -= m * u;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk == ZERO {
                continue;
            }
            for i in k + 1..=(k + kl).min(n.saturating_sub(1)) {
                x[i] -= self.band[self.slot(i, k)] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                acc -= self.band[self.slot(k, j)] * x[j];
            }
            x[k] = acc / self.band[self.slot(k, k)];
        }
        x
    }

    /// Solves `A^H x = b`.
    pub fn solve_adjoint(&self, b: &[C64]) -> Vec<C64> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut x = b.to_vec();
        // U^H y = b
        for k in 0..n {
            let mut acc = x[k];
            for i in k.saturating_sub(kl + ku)..k {
                acc -= self.band[self.slot(i, k)].conj() * x[i];
            }
            x[k] = acc / self.band[self.slot(k, k)].conj();
        }
        // L^H with interleaved pivots, in reverse.
        for k in (0..n).rev() {
            let mut acc = x[k];
            for i in k + 1..=(k + kl).min(n.saturating_sub(1)) {
                acc -= self.band[self.slot(i, k)].conj() * x[i];
            }
            x[k] = acc;
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
        }
        x
    }
}

/// Dense LU solve via nalgebra.
pub fn dense_solve(m: &DMatrix<C64>, b: &[C64]) -> Result<Vec<C64>> {
    let lu = m.clone().lu();
    lu.solve(&DVector::from_column_slice(b))
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| Error::Numerical("singular matrix".into()))
}

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest dimension for which `condition_number` uses a full SVD.
pub const FULL_SVD_LIMIT: usize = 2000;

/// `κ₂(m) = σ_max / σ_min`; `+∞` when `m` is singular to working precision.
pub fn condition_number(m: &BlockMatrix) -> Result<f64> {
    let n = m.nrows();
    if n == 0 || n != m.ncols() {
        return Err(invalid("condition number needs a nonempty square matrix"));
    }
    if n <= FULL_SVD_LIMIT {
        return Ok(dense_condition_number(&m.to_dense()));
    }
    let lu = match BandedLu::factor_block(m) {
        Ok(lu) => lu,
        Err(_) => return Ok(f64::INFINITY),
    };
    let smax = lanczos_max_eigenvalue(n, |x| {
        let y = m.mul_vec(x);
        adjoint_mul(m, &y)
    })
    .sqrt();
    let inv = lanczos_max_eigenvalue(n, |x| lu.solve(&lu.solve_adjoint(x))).sqrt();
    Ok(smax * inv)
}

pub fn dense_condition_number(m: &DMatrix<C64>) -> f64 {
    let sv = m.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smin <= smax * f64::EPSILON {
        f64::INFINITY
    } else {
        smax / smin
    }
}

fn adjoint_mul(m: &BlockMatrix, y: &[C64]) -> Vec<C64> {
    let bs = m.block_size();
    let mut x = vec![ZERO; m.ncols()];
    for (&(r, c), b) in m.blocks() {
        for j in 0..bs {
            let mut acc = ZERO;
            for i in 0..bs {
                acc += b[(i, j)].conj() * y[r * bs + i];
            }
            x[c * bs + j] += acc;
        }
    }
    x
}

/// Dominant eigenvalue of a Hermitian positive semidefinite operator by
/// Lanczos iteration with full reorthogonalization (at most 300 steps).
fn lanczos_max_eigenvalue(n: usize, apply: impl Fn(&[C64]) -> Vec<C64>) -> f64 {
    let dot = |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
    let mut q: Vec<C64> = (0..n).map(|i| C64::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.05)).collect();
    let nq = norm2(&q);
    q.iter_mut().for_each(|v| *v /= nq);
    let mut basis: Vec<Vec<C64>> = Vec::new();
    let (mut alphas, mut betas) = (Vec::new(), Vec::<f64>::new());
    let mut theta = 0.0;
    let steps = n.min(300);
    for k in 0..steps {
        let mut w = apply(&q);
        alphas.push(dot(&q, &w).re);
        basis.push(q);
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                w.iter_mut().zip(v).for_each(|(x, y)| *x -= c * y);
            }
        }
        let beta = norm2(&w);
        let done = k + 1 == steps || beta <= 1e-14 * alphas.iter().fold(0.0, |a: f64, b| a.max(b.abs()));
        if done || k % 5 == 4 {
            let m = alphas.len();
            let t = DMatrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
                0 => alphas[i],
                1 => betas[i.min(j)],
                _ => 0.0,
            });
            let next = t.symmetric_eigenvalues().max();
            let converged = (next - theta).abs() <= 1e-13 * next;
            theta = next;
            if done || converged {
                break;
            }
        }
        betas.push(beta);
        q = w.into_iter().map(|v| v / beta).collect();
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
        DMatrix::from_fn(n, n, |i, j| {
            if (i as isize - j as isize) <= kl as isize && (j as isize - i as isize) <= ku as isize {
                let shift = if i == j { 2.0 } else { 0.0 };
                C64::new(shift + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } else {
                ZERO
            }
        })
    }

    #[test]
    fn banded_lu_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (n, kl, ku) in [(1, 0, 0), (7, 2, 1), (30, 5, 5), (40, 0, 3), (25, 4, 0)] {
            let m = random_banded(n, kl, ku, &mut rng);
            let b: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), 0.3)).collect();
            let lu = BandedLu::factor_dense(&m, kl, ku).unwrap();
            let x = lu.solve(&b);
            let y = dense_solve(&m, &b).unwrap();
            let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10 * (1.0 + norm2(&y)), "n={n}: {err}");
            let xa = lu.solve_adjoint(&b);
            let ya = dense_solve(&m.adjoint(), &b).unwrap();
            let err: f64 = xa.iter().zip(&ya).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10 * (1.0 + norm2(&ya)), "adjoint n={n}: {err}");
        }
    }

    #[test]
    fn block_matrix_roundtrip() {
        let mut m = BlockMatrix::new(3, 3, 2);
        let b = DMatrix::from_fn(2, 2, |i, j| C64::new((i + 2 * j) as f64 + 1.0, 0.0));
        m.add_block(0, 0, &b);
        m.add_block(1, 0, &b);
        m.add_block(2, 2, &b);
        m.add_block(1, 1, &DMatrix::identity(2, 2));
        m.add_block(0, 0, &b);
        let d = m.to_dense();
        let x: Vec<C64> = (0..6).map(|i| C64::new(i as f64, -1.0)).collect();
        let y = m.mul_vec(&x);
        let yd = &d * DVector::from_column_slice(&x);
        for (a, b) in y.iter().zip(yd.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
        assert_eq!(m.bandwidth(), (3, 1));
        assert_eq!(m.entries().len(), 16);
    }

    #[test]
    fn condition_numbers() {
        let mut id = BlockMatrix::new(3, 3, 1);
        for i in 0..3 {
            id.add_block(i, i, &DMatrix::identity(1, 1));
        }
        assert!((condition_number(&id).unwrap() - 1.0).abs() < 1e-14);
        let mut dg = BlockMatrix::new(1, 1, 2);
        dg.add_block(0, 0, &DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(10.0, 0.0)])));
        assert!((condition_number(&dg).unwrap() - 10.0).abs() < 1e-12);
        let mut one = BlockMatrix::new(1, 1, 1);
        one.add_block(0, 0, &DMatrix::from_element(1, 1, C64::new(-3.0, 2.0)));
        assert_eq!(condition_number(&one).unwrap(), 1.0);
        assert!(condition_number(&BlockMatrix::new(0, 0, 1)).is_err());
    }

    #[test]
    fn iterative_condition_number_agrees_with_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let nb = 40;
        let mut m = BlockMatrix::new(nb, nb, 3);
        for i in 0..nb {
            let diag = DMatrix::from_fn(3, 3, |a, b| {
                C64::new(if a == b { 4.0 } else { 0.0 } + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            m.add_block(i, i, &diag);
            if i > 0 {
                let off = DMatrix::from_fn(3, 3, |_, _| C64::new(rng.gen_range(-1.0..1.0), 0.0));
                m.add_block(i, i - 1, &off);
            }
        }
        let exact = dense_condition_number(&m.to_dense());
        let lu = BandedLu::factor_block(&m).unwrap();
        let smax = lanczos_max_eigenvalue(m.nrows(), |x| adjoint_mul(&m, &m.mul_vec(x))).sqrt();
        let inv = lanczos_max_eigenvalue(m.nrows(), |x| lu.solve(&lu.solve_adjoint(x))).sqrt();
        assert!((smax * inv - exact).abs() < 1e-6 * exact, "{} vs {exact}", smax * inv);
    }
}
