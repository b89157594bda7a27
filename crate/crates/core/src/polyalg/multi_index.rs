use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

/// Largest number of variables a multi-index can carry (3 space + time).
pub const MAX_VARS: usize = 4;

/// Exponent tuple `(j_x1, .., j_xd, j_t)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    exps: [u16; MAX_VARS],
    len: u8,
}

impl MultiIndex {
    pub fn new(exps: &[usize]) -> Self {
        assert!(exps.len() <= MAX_VARS, "at most {MAX_VARS} variables");
        let mut e = [0u16; MAX_VARS];
        for (slot, &v) in e.iter_mut().zip(exps) {
            *slot = v as u16;
        }
        MultiIndex { exps: e, len: exps.len() as u8 }
    }

    pub fn zero(nvars: usize) -> Self {
        MultiIndex::new(&vec![0; nvars])
    }

    pub fn nvars(&self) -> usize {
        self.len as usize
    }

    pub fn get(&self, k: usize) -> usize {
        debug_assert!(k < self.nvars());
        self.exps[k] as usize
    }

    pub fn exps(&self) -> impl Iterator<Item = usize> + '_ {
        self.exps[..self.nvars()].iter().map(|&e| e as usize)
    }

    /// Total degree `|j|`.
    pub fn order(&self) -> usize {
        self.exps().sum()
    }

    /// Spatial exponents (all but the last variable).
    pub fn space_part(&self) -> &[u16] {
        &self.exps[..self.nvars() - 1]
    }

    /// Time exponent (last variable).
    pub fn time_part(&self) -> usize {
        self.exps[self.nvars() - 1] as usize
    }

    /// `j!` as a float.
    pub fn factorial(&self) -> f64 {
        self.exps().map(factorial).product()
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.nvars() == other.nvars() && self.exps().zip(other.exps()).all(|(a, b)| a <= b)
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !other.le(self) {
            return None;
        }
        let mut r = *self;
        for k in 0..self.nvars() {
            r.exps[k] -= other.exps[k];
        }
        Some(r)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.nvars(), other.nvars());
        let mut r = *self;
        for k in 0..self.nvars() {
            r.exps[k] += other.exps[k];
        }
        r
    }

    /// Adds `by` to the exponent of variable `k`.
    pub fn shifted(&self, k: usize, by: usize) -> MultiIndex {
        let mut r = *self;
        r.exps[k] += by as u16;
        r
    }

    /// Multi-index binomial coefficient `(self choose z)`.
    pub fn binomial(&self, z: &MultiIndex) -> f64 {
        self.exps().zip(z.exps()).map(|(a, b)| binomial(a, b)).product()
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &self.exps[..self.nvars()])
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// All multi-indices in `nvars` variables with total degree `<= degree`, in
/// graded lexicographic order: ascending total degree, and within one degree,
/// descending lexicographic order of the exponent tuple (so `x^2, x t, t^2`).
pub struct MonomialSet {
    nvars: usize,
    degree: usize,
    indices: Vec<MultiIndex>,
    lookup: Vec<u32>,
    upto: Vec<usize>,
}

impl fmt::Debug for MonomialSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MonomialSet(nvars={}, degree={})", self.nvars, self.degree)
    }
}

impl MonomialSet {
    fn build(nvars: usize, degree: usize) -> Self {
        assert!((1..=MAX_VARS).contains(&nvars));
        let mut indices = Vec::new();
        let mut upto = Vec::with_capacity(degree + 1);
        for total in 0..=degree {
            let mut cur = vec![0usize; nvars];
            push_with_total(&mut indices, &mut cur, 0, total);
            upto.push(indices.len());
        }
        let radix = degree + 1;
        let mut lookup = vec![u32::MAX; radix.pow(nvars as u32)];
        for (pos, j) in indices.iter().enumerate() {
            lookup[Self::slot(radix, j)] = pos as u32;
        }
        MonomialSet { nvars, degree, indices, lookup, upto }
    }

    fn slot(radix: usize, j: &MultiIndex) -> usize {
        j.exps().fold(0, |acc, e| acc * radix + e)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, pos: usize) -> MultiIndex {
        self.indices[pos]
    }

    /// Position of `j`, or `None` when its order exceeds the set degree.
    pub fn position(&self, j: &MultiIndex) -> Option<usize> {
        if j.nvars() != self.nvars || j.order() > self.degree {
            return None;
        }
        Some(self.lookup[Self::slot(self.degree + 1, j)] as usize)
    }

    /// Number of multi-indices of order `<= k`; they form a prefix.
    pub fn count_upto(&self, k: usize) -> usize {
        self.upto[k.min(self.degree)]
    }
}

fn push_with_total(out: &mut Vec<MultiIndex>, cur: &mut [usize], var: usize, remaining: usize) {
    if var + 1 == cur.len() {
        cur[var] = remaining;
        out.push(MultiIndex::new(cur));
        return;
    }
    for e in (0..=remaining).rev() {
        cur[var] = e;
        push_with_total(out, cur, var + 1, remaining - e);
    }
    cur[var] = 0;
}

/// Shared, cached monomial set.
pub fn monomial_set(nvars: usize, degree: usize) -> Arc<MonomialSet> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<MonomialSet>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("monomial cache poisoned");
    guard
        .entry((nvars, degree))
        .or_insert_with(|| Arc::new(MonomialSet::build(nvars, degree)))
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_order() {
        let s = monomial_set(2, 2);
        let got: Vec<Vec<usize>> = s.indices().iter().map(|j| j.exps().collect()).collect();
        assert_eq!(
            got,
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
    }

    #[test]
    fn counts_match_binomials() {
        for nv in 1..=3 {
            for m in 0..8 {
                let s = monomial_set(nv, m);
                assert_eq!(s.len() as f64, binomial(nv + m, nv));
                for (pos, j) in s.indices().iter().enumerate() {
                    assert_eq!(s.position(j), Some(pos));
                }
            }
        }
    }

    #[test]
    fn order_and_parts() {
        let j = MultiIndex::new(&[2, 1, 3]);
        assert_eq!(j.order(), 6);
        assert_eq!(j.time_part(), 3);
        assert_eq!(j.space_part(), &[2, 1]);
        assert_eq!(j.factorial(), 2.0 * 1.0 * 6.0);
        let z = MultiIndex::new(&[1, 0, 2]);
        assert!(z.le(&j));
        assert_eq!(j.binomial(&z), 2.0 * 1.0 * 3.0);
        assert_eq!(j.checked_sub(&z), Some(MultiIndex::new(&[1, 1, 1])));
    }
}
