use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::multi_index::{monomial_set, MonomialSet, MultiIndex};
use crate::error::{invalid, Error, Result};

/// Truncated multivariate Taylor series `sum_{|j| <= m} c_j (z - center)^j`,
/// where `c_j = D^j f(center) / j!`.
#[derive(Clone, Debug)]
pub struct TaylorJet {
    center: Vec<f64>,
    set: Arc<MonomialSet>,
    coeffs: Vec<C64>,
}

/// Binary or unary truncated-series operation.
#[derive(Clone, Copy, Debug)]
pub enum JetOp {
    Add,
    Mul,
    Neg,
    Scale(C64),
}

impl TaylorJet {
    pub fn constant(center: &[f64], order: usize, value: C64) -> Self {
        let set = monomial_set(center.len(), order);
        let mut coeffs = vec![C64::new(0.0, 0.0); set.len()];
        coeffs[0] = value;
        TaylorJet { center: center.to_vec(), set, coeffs }
    }

    /// Jet of the coordinate function `z_k`.
    pub fn variable(center: &[f64], order: usize, k: usize) -> Self {
        let mut jet = Self::constant(center, order, C64::new(center[k], 0.0));
        if order >= 1 {
            let e = MultiIndex::zero(center.len()).shifted(k, 1);
            let pos = jet.set.position(&e).expect("order >= 1");
            jet.coeffs[pos] = C64::new(1.0, 0.0);
        }
        jet
    }

    pub fn from_coeffs(center: &[f64], order: usize, coeffs: Vec<C64>) -> Result<Self> {
        let set = monomial_set(center.len(), order);
        if coeffs.len() != set.len() {
            return Err(invalid(format!(
                "jet of order {order} in {} variables needs {} coefficients, got {}",
                center.len(),
                set.len(),
                coeffs.len()
            )));
        }
        Ok(TaylorJet { center: center.to_vec(), set, coeffs })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn order(&self) -> usize {
        self.set.degree()
    }

    pub fn nvars(&self) -> usize {
        self.center.len()
    }

    pub fn monomials(&self) -> &MonomialSet {
        &self.set
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Coefficient `D^j f(center) / j!`; zero beyond the truncation order.
    pub fn coeff(&self, j: &MultiIndex) -> C64 {
        self.set.position(j).map_or(C64::new(0.0, 0.0), |p| self.coeffs[p])
    }

    /// `D^j f(center)`.
    pub fn derivative(&self, j: &MultiIndex) -> C64 {
        self.coeff(j) * j.factorial()
    }

    pub fn value(&self) -> C64 {
        self.coeffs[0]
    }

    fn check_compatible(&self, other: &TaylorJet) -> Result<()> {
        if self.center != other.center {
            return Err(invalid("jets have different centers"));
        }
        if self.order() != other.order() {
            return Err(invalid(format!(
                "jets have different orders ({} vs {})",
                self.order(),
                other.order()
            )));
        }
        Ok(())
    }

    fn map(&self, f: impl Fn(C64) -> C64) -> TaylorJet {
        TaylorJet {
            center: self.center.clone(),
            set: self.set.clone(),
            coeffs: self.coeffs.iter().map(|&c| f(c)).collect(),
        }
    }

    pub fn try_add(&self, other: &TaylorJet) -> Result<TaylorJet> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a += *b;
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &TaylorJet) -> Result<TaylorJet> {
        self.try_add(&-other.clone())
    }

    /// Cauchy product truncated at the common order.
    pub fn try_mul(&self, other: &TaylorJet) -> Result<TaylorJet> {
        self.check_compatible(other)?;
        let set = &self.set;
        let m = set.degree();
        let mut out = vec![C64::new(0.0, 0.0); set.len()];
        for (pa, a) in set.indices().iter().enumerate() {
            let ca = self.coeffs[pa];
            if ca == C64::new(0.0, 0.0) {
                continue;
            }
            let room = m - a.order();
            for pb in 0..set.count_upto(room) {
                let cb = other.coeffs[pb];
                if cb == C64::new(0.0, 0.0) {
                    continue;
                }
                let target = set.position(&a.add(&set.get(pb))).expect("within order");
                out[target] += ca * cb;
            }
        }
        Ok(TaylorJet { center: self.center.clone(), set: self.set.clone(), coeffs: out })
    }

    pub fn scale(&self, c: C64) -> TaylorJet {
        self.map(|v| v * c)
    }

    pub fn add_scalar(&self, c: C64) -> TaylorJet {
        let mut out = self.clone();
        out.coeffs[0] += c;
        out
    }

    /// Evaluates `sum_k series[k] (self - self(center))^k`, i.e. composes a
    /// univariate Taylor expansion taken at the constant term with this jet.
    pub fn compose(&self, series: &[C64]) -> TaylorJet {
        let mut nilpotent = self.clone();
        nilpotent.coeffs[0] = C64::new(0.0, 0.0);
        let m = self.order().min(series.len().saturating_sub(1));
        let mut acc = TaylorJet::constant(&self.center, self.order(), series[m]);
        for k in (0..m).rev() {
            acc = acc.try_mul(&nilpotent).expect("same layout").add_scalar(series[k]);
        }
        acc
    }

    pub fn exp(&self) -> TaylorJet {
        let a0 = self.value();
        let e = a0.exp();
        let mut series = Vec::with_capacity(self.order() + 1);
        let mut fact = 1.0;
        for k in 0..=self.order() {
            if k > 0 {
                fact *= k as f64;
            }
            series.push(e / fact);
        }
        self.compose(&series)
    }

    pub fn recip(&self) -> Result<TaylorJet> {
        let a0 = self.value();
        if a0.norm() == 0.0 {
            return Err(Error::Singularity("reciprocal of a jet with zero constant term".into()));
        }
        let inv = 1.0 / a0;
        let mut series = Vec::with_capacity(self.order() + 1);
        let mut term = inv;
        for _ in 0..=self.order() {
            series.push(term);
            term *= -inv;
        }
        Ok(self.compose(&series))
    }

    /// `self^exponent` for a real exponent, expanded around the constant term.
    pub fn powf(&self, exponent: f64) -> Result<TaylorJet> {
        let a0 = self.value();
        let integral = exponent.fract() == 0.0 && exponent >= 0.0;
        if a0.norm() == 0.0 && !integral {
            return Err(Error::Singularity(format!(
                "power {exponent} of a jet with zero constant term"
            )));
        }
        if a0.norm() == 0.0 {
            // Non-negative integer power of a nilpotent jet.
            let mut acc = TaylorJet::constant(&self.center, self.order(), C64::new(1.0, 0.0));
            for _ in 0..exponent as usize {
                acc = acc.try_mul(self)?;
            }
            return Ok(acc);
        }
        let mut series = Vec::with_capacity(self.order() + 1);
        let mut binom = 1.0;
        for k in 0..=self.order() {
            if k > 0 {
                binom *= (exponent - (k - 1) as f64) / k as f64;
            }
            series.push(a0.powf(exponent - k as f64) * binom);
        }
        Ok(self.compose(&series))
    }

    pub fn sin(&self) -> TaylorJet {
        let a0 = self.value();
        let cycle = [a0.sin(), a0.cos(), -a0.sin(), -a0.cos()];
        self.compose(&Self::cyclic_series(&cycle, self.order()))
    }

    pub fn cos(&self) -> TaylorJet {
        let a0 = self.value();
        let cycle = [a0.cos(), -a0.sin(), -a0.cos(), a0.sin()];
        self.compose(&Self::cyclic_series(&cycle, self.order()))
    }

    pub fn sinh(&self) -> TaylorJet {
        let a0 = self.value();
        let cycle = [a0.sinh(), a0.cosh()];
        self.compose(&Self::cyclic_series(&cycle, self.order()))
    }

    pub fn cosh(&self) -> TaylorJet {
        let a0 = self.value();
        let cycle = [a0.cosh(), a0.sinh()];
        self.compose(&Self::cyclic_series(&cycle, self.order()))
    }

    fn cyclic_series(cycle: &[C64], order: usize) -> Vec<C64> {
        let mut fact = 1.0;
        (0..=order)
            .map(|k| {
                if k > 0 {
                    fact *= k as f64;
                }
                cycle[k % cycle.len()] / fact
            })
            .collect()
    }

    /// Univariate Taylor coefficients of `tanh(a0 + s)` from `y' = 1 - y^2`.
    fn tanh_series(a0: C64, order: usize) -> Vec<C64> {
        let mut y = vec![a0.tanh()];
        for k in 0..order {
            let conv: C64 = (0..=k).map(|i| y[i] * y[k - i]).sum();
            let one = if k == 0 { 1.0 } else { 0.0 };
            y.push((one - conv) / (k + 1) as f64);
        }
        y
    }

    pub fn tanh(&self) -> TaylorJet {
        self.compose(&Self::tanh_series(self.value(), self.order()))
    }

    /// `sech` via `y' = -y tanh`.
    pub fn sech(&self) -> TaylorJet {
        let a0 = self.value();
        let th = Self::tanh_series(a0, self.order());
        let mut y = vec![1.0 / a0.cosh()];
        for k in 0..self.order() {
            let conv: C64 = (0..=k).map(|i| y[i] * th[k - i]).sum();
            y.push(-conv / (k + 1) as f64);
        }
        self.compose(&y)
    }

    /// Jet of `D^j f`, truncated at order `m - |j|`.
    pub fn differentiate(&self, j: &MultiIndex) -> Result<TaylorJet> {
        let m = self.order();
        if j.order() > m {
            return Err(invalid("derivative order exceeds jet order"));
        }
        let set = monomial_set(self.nvars(), m - j.order());
        let coeffs = set
            .indices()
            .iter()
            .map(|z| {
                let full = z.add(j);
                self.coeff(&full) * (full.factorial() / z.factorial())
            })
            .collect();
        Ok(TaylorJet { center: self.center.clone(), set, coeffs })
    }

    /// Drops every term of order above `order`.
    pub fn truncate(&self, order: usize) -> TaylorJet {
        let order = order.min(self.order());
        let set = monomial_set(self.nvars(), order);
        let coeffs = self.coeffs[..set.len()].to_vec();
        TaylorJet { center: self.center.clone(), set, coeffs }
    }

    /// Evaluates the truncated polynomial at `point`.
    pub fn eval_polynomial(&self, point: &[f64]) -> C64 {
        self.set
            .indices()
            .iter()
            .zip(&self.coeffs)
            .map(|(j, &c)| {
                let mono: f64 = j
                    .exps()
                    .enumerate()
                    .map(|(k, e)| (point[k] - self.center[k]).powi(e as i32))
                    .product();
                c * mono
            })
            .sum()
    }
}

/// Applies `op` to jets with a shared center and order.
pub fn jet_arithmetic(a: &TaylorJet, b: Option<&TaylorJet>, op: JetOp) -> Result<TaylorJet> {
    let missing = || invalid("binary jet operation needs two operands");
    match op {
        JetOp::Add => a.try_add(b.ok_or_else(missing)?),
        JetOp::Mul => a.try_mul(b.ok_or_else(missing)?),
        JetOp::Neg => Ok(-a.clone()),
        JetOp::Scale(c) => Ok(a.scale(c)),
    }
}

impl TaylorJet {
    pub fn apply(&self, other: Option<&TaylorJet>, op: JetOp) -> Result<TaylorJet> {
        jet_arithmetic(self, other, op)
    }
}

// Operator forms panic on incompatible operands; the fallible `try_*`
// methods are the checked entry points.
impl Add for TaylorJet {
    type Output = TaylorJet;
    fn add(self, rhs: TaylorJet) -> TaylorJet {
        self.try_add(&rhs).expect("incompatible jets")
    }
}

impl Sub for TaylorJet {
    type Output = TaylorJet;
    fn sub(self, rhs: TaylorJet) -> TaylorJet {
        self.try_sub(&rhs).expect("incompatible jets")
    }
}

impl Mul for TaylorJet {
    type Output = TaylorJet;
    fn mul(self, rhs: TaylorJet) -> TaylorJet {
        self.try_mul(&rhs).expect("incompatible jets")
    }
}

impl Neg for TaylorJet {
    type Output = TaylorJet;
    fn neg(self) -> TaylorJet {
        self.map(|c| -c)
    }
}

impl Add<C64> for TaylorJet {
    type Output = TaylorJet;
    fn add(self, rhs: C64) -> TaylorJet {
        self.add_scalar(rhs)
    }
}

impl Mul<C64> for TaylorJet {
    type Output = TaylorJet;
    fn mul(self, rhs: C64) -> TaylorJet {
        self.scale(rhs)
    }
}
