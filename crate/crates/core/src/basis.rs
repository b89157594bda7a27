//! Local discrete spaces: full polynomials, quasi-Trefftz polynomials and
//! complex-exponential Trefftz functions.
//!
//! Polynomial members are expansions in scaled monomials
//! `((x − x_K)/h_K)^{j_x} ((t − t_K)/h_K)^{j_t}` stored as rows of a
//! coefficient matrix over a graded-lex [`MonomialSet`].

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::Element;
use crate::polyalg::{binomial, monomial_set, MonomialSet, MultiIndex, TaylorJet};
use crate::potential::PotentialModel;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExponentialMode {
    /// `κ_ℓ = 2πℓ / h_x`, `ℓ = 1..2p+1`.
    Orthogonal,
    /// `κ = −p, .., p`.
    Nonorthogonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    FullPolynomial,
    QuasiTrefftz,
    ExponentialTrefftz(ExponentialMode),
}

impl SpaceKind {
    pub fn label(&self) -> &'static str {
        match self {
            SpaceKind::FullPolynomial => "full_poly",
            SpaceKind::QuasiTrefftz => "quasi_trefftz",
            SpaceKind::ExponentialTrefftz(ExponentialMode::Orthogonal) => "trefftz_exp_orthogonal",
            SpaceKind::ExponentialTrefftz(ExponentialMode::Nonorthogonal) => "trefftz_exp_nonorthogonal",
        }
    }
}

/// `r_{n,p}`: number of monomials of degree `<= p` in `n` variables.
pub fn monomial_count(nvars: usize, p: usize) -> usize {
    binomial(nvars + p, nvars) as usize
}

/// Dimension of the full polynomial space in `d + 1` variables.
pub fn full_poly_dim(d: usize, p: usize) -> usize {
    monomial_count(d + 1, p)
}

/// `n_{d+1,p} = (p + d − 1)! (2p + d) / (d! p!)`.
pub fn quasi_trefftz_dim(d: usize, p: usize) -> usize {
    if p == 0 {
        return 1;
    }
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    (fact(p + d - 1) * (2 * p + d) as f64 / (fact(d) * fact(p))).round() as usize
}

/// Value and derivatives of one basis member at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisEval {
    pub value: C64,
    pub space_gradient: Vec<C64>,
    /// Row-major `d × d`.
    pub space_hessian: Vec<C64>,
    pub time_derivative: C64,
    pub schrodinger_residual: C64,
}

/// `Σ_j C_j ((z − center)/h)^j` over all `|j| <= degree`.
#[derive(Clone, Debug)]
pub struct ScaledMonomialExpansion {
    pub center: Vec<f64>,
    pub h: f64,
    pub set: Arc<MonomialSet>,
    pub coeffs: Vec<C64>,
}

impl ScaledMonomialExpansion {
    pub fn degree(&self) -> usize {
        self.set.degree()
    }

    /// Full evaluation; `v` is the potential at `point`.
    pub fn evaluate(&self, point: &[f64], v: f64) -> BasisEval {
        let table = MonomialTable::new(&self.set, &[point.to_vec()], &self.center, self.h);
        let d = self.center.len() - 1;
        let dot = |rows: &[C64]| -> C64 { self.coeffs.iter().zip(rows).map(|(c, m)| c * m).sum() };
        let col = |m: &DMatrix<f64>| -> Vec<C64> { m.column(0).iter().map(|&x| C64::new(x, 0.0)).collect() };
        let value = dot(&col(&table.value));
        let space_gradient: Vec<C64> = (0..d).map(|k| dot(&col(&table.first[k]))).collect();
        let mut space_hessian = vec![ZERO; d * d];
        for a in 0..d {
            for b in 0..d {
                space_hessian[a * d + b] = dot(&col(&table.second[a * d + b]));
            }
        }
        let time_derivative = dot(&col(&table.first[d]));
        let lap: C64 = (0..d).map(|k| space_hessian[k * d + k]).sum();
        BasisEval {
            value,
            space_gradient,
            space_hessian,
            time_derivative,
            schrodinger_residual: I * time_derivative + 0.5 * lap - v * value,
        }
    }

    /// Unscaled Taylor jet: coefficient `C_j / h^{|j|}`.
    pub fn to_jet(&self) -> TaylorJet {
        let coeffs = self
            .set
            .indices()
            .iter()
            .zip(&self.coeffs)
            .map(|(j, c)| c / self.h.powi(j.order() as i32))
            .collect();
        TaylorJet::from_coeffs(&self.center, self.degree(), coeffs).expect("layout matches")
    }
}

/// Scaled-monomial values and physical derivatives at a batch of points.
/// Each matrix is `monomials × points`.
pub struct MonomialTable {
    pub value: DMatrix<f64>,
    /// `∂/∂z_k` for every variable, time last.
    pub first: Vec<DMatrix<f64>>,
    /// `∂²/∂x_a∂x_b` over space variables, row-major.
    pub second: Vec<DMatrix<f64>>,
}

impl MonomialTable {
    pub fn new(set: &MonomialSet, points: &[Vec<f64>], center: &[f64], h: f64) -> Self {
        let nv = set.nvars();
        let d = nv - 1;
        let deg = set.degree();
        let nq = points.len();
        let r = set.len();
        let mut value = DMatrix::zeros(r, nq);
        let mut first = vec![DMatrix::zeros(r, nq); nv];
        let mut second = vec![DMatrix::zeros(r, nq); d * d];
        let exps: Vec<Vec<usize>> = set.indices().iter().map(|j| j.exps().collect()).collect();
        let mut powers = vec![vec![0.0; deg + 1]; nv];
        for (q, p) in points.iter().enumerate() {
            for k in 0..nv {
                let x = (p[k] - center[k]) / h;
                powers[k][0] = 1.0;
                for e in 1..=deg {
                    powers[k][e] = powers[k][e - 1] * x;
                }
            }
            for (m, e) in exps.iter().enumerate() {
                // Monomial with exponent `a` lowered by `da` and `b` by `db`.
                let lowered = |a: usize, da: usize, b: usize, db: usize| -> f64 {
                    let mut prod = 1.0;
                    for k in 0..nv {
                        let lower = if k == a { da } else { 0 } + if k == b { db } else { 0 };
                        if e[k] < lower {
                            return 0.0;
                        }
                        prod *= powers[k][e[k] - lower];
                    }
                    prod
                };
                value[(m, q)] = lowered(0, 0, 0, 0);
                for k in 0..nv {
                    if e[k] > 0 {
                        first[k][(m, q)] = e[k] as f64 * lowered(k, 1, k, 0) / h;
                    }
                }
                for a in 0..d {
                    for b in 0..d {
                        let f = if a == b { e[a] * e[a].saturating_sub(1) } else { e[a] * e[b] };
                        if f != 0 {
                            second[a * d + b][(m, q)] = f as f64 * lowered(a, 1, b, 1) / (h * h);
                        }
                    }
                }
            }
        }
        MonomialTable { value, first, second }
    }
}

/// Basis values and derivatives at a batch of points; each matrix is
/// `members × points`.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub value: DMatrix<C64>,
    pub space_gradient: Vec<DMatrix<C64>>,
    pub time_derivative: DMatrix<C64>,
    pub laplacian: DMatrix<C64>,
}

impl Tabulation {
    /// `S b = i ∂_t b + ½ Δ b − V b` given `V` at the points.
    pub fn residual(&self, v: &[f64]) -> DMatrix<C64> {
        let mut out = self.time_derivative.map(|c| I * c) + self.laplacian.map(|c| 0.5 * c);
        for (q, &vq) in v.iter().enumerate() {
            let mut col = out.column_mut(q);
            col -= self.value.column(q).map(|c| c * vq);
        }
        out
    }

    /// Normal derivative along axis `axis` with sign `sign`.
    pub fn normal_derivative(&self, axis: usize, sign: f64) -> DMatrix<C64> {
        self.space_gradient[axis].map(|c| c * sign)
    }
}

#[derive(Clone, Debug)]
enum Repr {
    /// Rows of `coeffs` are members; `None` means the identity (full polynomials).
    Polynomial { set: Arc<MonomialSet>, coeffs: Option<Arc<DMatrix<C64>>> },
    Exponential { kappas: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct LocalBasis {
    kind: SpaceKind,
    degree: usize,
    center: Vec<f64>,
    h: f64,
    repr: Repr,
}

impl LocalBasis {
    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> f64 {
        self.h
    }

    pub fn space_dim(&self) -> usize {
        self.center.len() - 1
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            Repr::Polynomial { set, coeffs } => coeffs.as_ref().map_or(set.len(), |c| c.nrows()),
            Repr::Exponential { kappas } => kappas.len(),
        }
    }

    /// Wavenumbers of an exponential basis.
    pub fn wavenumbers(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Exponential { kappas } => Some(kappas),
            _ => None,
        }
    }

    /// Coefficient matrix (members × monomials) of a polynomial basis.
    pub fn coefficient_matrix(&self) -> Option<DMatrix<C64>> {
        match &self.repr {
            Repr::Polynomial { set, coeffs } => {
                Some(coeffs.as_ref().map_or_else(|| DMatrix::identity(set.len(), set.len()), |c| (**c).clone()))
            }
            Repr::Exponential { .. } => None,
        }
    }

    pub fn monomials(&self) -> Option<&Arc<MonomialSet>> {
        match &self.repr {
            Repr::Polynomial { set, .. } => Some(set),
            Repr::Exponential { .. } => None,
        }
    }

    /// Largest phase rates `(|κ|, κ²/2)` in space and time, zero for polynomials.
    pub fn oscillation_rates(&self) -> (f64, f64) {
        match &self.repr {
            Repr::Polynomial { .. } => (0.0, 0.0),
            Repr::Exponential { kappas } => {
                let k = kappas.iter().fold(0.0f64, |m, k| m.max(k.abs()));
                (k, 0.5 * k * k)
            }
        }
    }

    /// Member `index` as a scaled-monomial expansion.
    pub fn member(&self, index: usize) -> Result<ScaledMonomialExpansion> {
        match &self.repr {
            Repr::Polynomial { set, coeffs } => {
                if index >= self.dim() {
                    return Err(invalid(format!("basis member {index} out of range")));
                }
                let c = match coeffs {
                    Some(c) => c.row(index).iter().copied().collect(),
                    None => {
                        let mut v = vec![ZERO; set.len()];
                        v[index] = ONE;
                        v
                    }
                };
                Ok(ScaledMonomialExpansion { center: self.center.clone(), h: self.h, set: set.clone(), coeffs: c })
            }
            Repr::Exponential { .. } => Err(Error::Unsupported("exponential members are not polynomials".into())),
        }
    }

    /// Evaluates member `index` at `point`; `v` is the potential there.
    pub fn evaluate(&self, index: usize, point: &[f64], v: f64) -> BasisEval {
        match &self.repr {
            Repr::Polynomial { .. } => self.member(index).expect("index in range").evaluate(point, v),
            Repr::Exponential { kappas } => {
                let k = kappas[index];
                let phi = (I * (k * point[0] - 0.5 * k * k * point[1])).exp();
                let dt = -I * 0.5 * k * k * phi;
                let dxx = -k * k * phi;
                BasisEval {
                    value: phi,
                    space_gradient: vec![I * k * phi],
                    space_hessian: vec![dxx],
                    time_derivative: dt,
                    schrodinger_residual: I * dt + 0.5 * dxx - v * phi,
                }
            }
        }
    }

    /// Tabulates every member at `points` (each of length `d + 1`).
    pub fn tabulate(&self, points: &[Vec<f64>]) -> Tabulation {
        match &self.repr {
            Repr::Polynomial { set, coeffs } => {
                let table = MonomialTable::new(set, points, &self.center, self.h);
                self.tabulate_with(&table)
                    .unwrap_or_else(|| unreachable!("polynomial basis {:?}", coeffs.is_some()))
            }
            Repr::Exponential { kappas } => {
                let nq = points.len();
                let n = kappas.len();
                let mut value = DMatrix::zeros(n, nq);
                let mut gx = DMatrix::zeros(n, nq);
                let mut dt = DMatrix::zeros(n, nq);
                let mut lap = DMatrix::zeros(n, nq);
                for (q, p) in points.iter().enumerate() {
                    for (l, &k) in kappas.iter().enumerate() {
                        let phi = (I * (k * p[0] - 0.5 * k * k * p[1])).exp();
                        value[(l, q)] = phi;
                        gx[(l, q)] = I * k * phi;
                        dt[(l, q)] = -I * 0.5 * k * k * phi;
                        lap[(l, q)] = -k * k * phi;
                    }
                }
                Tabulation { value, space_gradient: vec![gx], time_derivative: dt, laplacian: lap }
            }
        }
    }

    /// Maps a monomial tabulation (`monomials × points`) to members
    /// (polynomial bases only).
    pub fn apply_coefficients(&self, m: &DMatrix<f64>) -> Option<DMatrix<C64>> {
        let Repr::Polynomial { coeffs, .. } = &self.repr else {
            return None;
        };
        let cplx = m.map(|x| C64::new(x, 0.0));
        Some(match coeffs {
            Some(c) => &**c * cplx,
            None => cplx,
        })
    }

    /// Monomial coefficients of `Σ c_i b_i` (polynomial bases only).
    pub fn monomial_coefficients(&self, c: &[C64]) -> Option<Vec<C64>> {
        let Repr::Polynomial { coeffs, .. } = &self.repr else {
            return None;
        };
        Some(match coeffs {
            Some(m) => (0..m.ncols()).map(|j| (0..m.nrows()).map(|i| m[(i, j)] * c[i]).sum()).collect(),
            None => c.to_vec(),
        })
    }

    /// Tabulation from a precomputed monomial table (polynomial bases only).
    pub fn tabulate_with(&self, table: &MonomialTable) -> Option<Tabulation> {
        let Repr::Polynomial { coeffs, .. } = &self.repr else {
            return None;
        };
        let d = self.space_dim();
        let cplx = |m: &DMatrix<f64>| m.map(|x| C64::new(x, 0.0));
        let apply = |m: &DMatrix<f64>| match coeffs {
            Some(c) => &**c * cplx(m),
            None => cplx(m),
        };
        let mut lap_real = table.second[0].clone();
        for k in 1..d {
            lap_real += &table.second[k * d + k];
        }
        Some(Tabulation {
            value: apply(&table.value),
            space_gradient: (0..d).map(|k| apply(&table.first[k])).collect(),
            time_derivative: apply(&table.first[d]),
            laplacian: apply(&lap_real),
        })
    }

    /// Evaluates `Σ c_i b_i` at `point`, returning value and space gradient.
    pub fn combine(&self, coeffs: &[C64], point: &[f64]) -> (C64, Vec<C64>) {
        let tab = self.tabulate(&[point.to_vec()]);
        let v: C64 = tab.value.column(0).iter().zip(coeffs).map(|(b, c)| b * c).sum();
        let g = tab
            .space_gradient
            .iter()
            .map(|m| m.column(0).iter().zip(coeffs).map(|(b, c)| b * c).sum())
            .collect();
        (v, g)
    }
}

/// Full polynomial space `P^p(K)`.
pub fn build_full_poly_basis(element: &Element, p: usize) -> Result<LocalBasis> {
    if p < 1 {
        return Err(invalid("polynomial degree must be at least 1"));
    }
    let nv = element.dim() + 1;
    Ok(LocalBasis {
        kind: SpaceKind::FullPolynomial,
        degree: p,
        center: element.center.clone(),
        h: element.h_k,
        repr: Repr::Polynomial { set: monomial_set(nv, p), coeffs: None },
    })
}

/// Quasi-Trefftz space `QT^p(K)` for the potential's jet at the element center.
pub fn build_quasi_trefftz_basis(element: &Element, p: usize, potential: &PotentialModel) -> Result<LocalBasis> {
    if p < 1 {
        return Err(invalid("polynomial degree must be at least 1"));
    }
    let order = p.saturating_sub(2);
    let vjet = potential.jet_for_element(element, order)?;
    let coeffs = quasi_trefftz_coefficients(element.dim(), p, element.h_k, &vjet)?;
    Ok(quasi_trefftz_from_coefficients(element, p, Arc::new(coeffs)))
}

/// Wraps a precomputed quasi-Trefftz coefficient matrix (shared between
/// elements with identical potential jets and sizes).
pub fn quasi_trefftz_from_coefficients(element: &Element, p: usize, coeffs: Arc<DMatrix<C64>>) -> LocalBasis {
    LocalBasis {
        kind: SpaceKind::QuasiTrefftz,
        degree: p,
        center: element.center.clone(),
        h: element.h_k,
        repr: Repr::Polynomial { set: monomial_set(element.dim() + 1, p), coeffs: Some(coeffs) },
    }
}

/// Coefficient matrix (`n_{d+1,p} × r_{d+1,p}`) of the quasi-Trefftz basis
/// with scale `h` and potential jet `vjet` (unscaled Taylor coefficients).
///
/// Members `J <= r_{d,p}` restrict on `x_1 = x_K^{(1)}` to one scaled
/// monomial in `(x_2, .., x_d, t)` and have zero `∂_{x_1}` restriction; the
/// others have zero restriction and a monomial `∂_{x_1}` restriction of
/// degree `<= p − 1`. Coefficients with `j_{x_1} >= 2` follow from the
/// Taylor-coefficient recurrence of `S`.
pub fn quasi_trefftz_coefficients(d: usize, p: usize, h: f64, vjet: &TaylorJet) -> Result<DMatrix<C64>> {
    let nv = d + 1;
    let set = monomial_set(nv, p);
    let need = p.saturating_sub(2);
    if p >= 2 && vjet.order() < need {
        return Err(Error::Capability(format!(
            "quasi-Trefftz degree {p} needs potential derivatives up to order {need}"
        )));
    }
    if vjet.nvars() != nv {
        return Err(invalid("potential jet has the wrong number of variables"));
    }
    let hat = monomial_set(d, p);
    let tilde = monomial_set(d, p - 1);
    let n = hat.len() + tilde.len();
    let lift = |j1: usize, m: &MultiIndex| -> MultiIndex {
        let mut e = vec![j1];
        e.extend(m.exps());
        MultiIndex::new(&e)
    };
    // Scaled potential coefficients h^{|m|+2} v_m.
    let vset = monomial_set(nv, need);
    let vscaled: Vec<C64> =
        vset.indices().iter().map(|m| vjet.coeff(m) * h.powi(m.order() as i32 + 2)).collect();
    // Relations ordered by j1 so every right-hand side is known when used.
    let mut relations: Vec<MultiIndex> =
        monomial_set(nv, need).indices().iter().copied().filter(|_| p >= 2).collect();
    relations.sort_by_key(|j| j.get(0));

    let mut out = DMatrix::zeros(n, set.len());
    for member in 0..n {
        let mut c = vec![ZERO; set.len()];
        if member < hat.len() {
            c[set.position(&lift(0, &hat.get(member))).unwrap()] = ONE;
        } else {
            c[set.position(&lift(1, &tilde.get(member - hat.len()))).unwrap()] = ONE;
        }
        for j in &relations {
            let j1 = j.get(0);
            let mut acc = ZERO;
            let jt = j.time_part();
            acc -= 2.0 * I * h * (jt + 1) as f64 * c[set.position(&j.shifted(d, 1)).unwrap()];
            for l in 1..d {
                let jl = j.get(l);
                acc -= ((jl + 1) * (jl + 2)) as f64 * c[set.position(&j.shifted(l, 2)).unwrap()];
            }
            // Σ_{z <= j} h^{|j−z|+2} v_{j−z} C_z
            for (zpos, z) in set.indices()[..set.count_upto(j.order())].iter().enumerate() {
                if let Some(m) = j.checked_sub(z) {
                    let cz = c[zpos];
                    if cz != ZERO {
                        acc += 2.0 * vscaled[vset.position(&m).unwrap()] * cz;
                    }
                }
            }
            let target = set.position(&j.shifted(0, 2)).unwrap();
            c[target] = acc / ((j1 + 1) * (j1 + 2)) as f64;
        }
        for (k, v) in c.into_iter().enumerate() {
            out[(member, k)] = v;
        }
    }
    Ok(out)
}

/// Complex-exponential Trefftz functions `exp(i(κ x − κ² t / 2))` (d = 1, V = 0).
pub fn build_exponential_trefftz_basis(element: &Element, p: usize, mode: ExponentialMode) -> Result<LocalBasis> {
    if element.dim() != 1 {
        return Err(Error::Unsupported("exponential Trefftz bases exist only for d = 1".into()));
    }
    if p < 1 {
        return Err(invalid("polynomial degree must be at least 1"));
    }
    let kappas = exponential_wavenumbers(p, element.h_x, mode);
    Ok(LocalBasis {
        kind: SpaceKind::ExponentialTrefftz(mode),
        degree: p,
        center: element.center.clone(),
        h: element.h_k,
        repr: Repr::Exponential { kappas },
    })
}

pub fn exponential_wavenumbers(p: usize, h_x: f64, mode: ExponentialMode) -> Vec<f64> {
    match mode {
        ExponentialMode::Nonorthogonal => (-(p as i64)..=p as i64).map(|k| k as f64).collect(),
        ExponentialMode::Orthogonal => (1..=2 * p + 1).map(|l| 2.0 * PI * l as f64 / h_x).collect(),
    }
}

/// Builds the basis of `kind` on `element`.
pub fn build_basis(element: &Element, kind: SpaceKind, p: usize, potential: &PotentialModel) -> Result<LocalBasis> {
    match kind {
        SpaceKind::FullPolynomial => build_full_poly_basis(element, p),
        SpaceKind::QuasiTrefftz => build_quasi_trefftz_basis(element, p, potential),
        SpaceKind::ExponentialTrefftz(mode) => {
            if !potential.is_zero() {
                return Err(Error::Unsupported("exponential Trefftz bases require V = 0".into()));
            }
            build_exponential_trefftz_basis(element, p, mode)
        }
    }
}

/// Order-`m` Taylor polynomial of `solution` at the element center as a
/// scaled-monomial expansion (coefficients `h^{|j|} D^j ψ / j!`).
pub fn taylor_of_exact_solution(
    solution: &crate::problems::ExactSolution,
    element: &Element,
    m: usize,
) -> Result<ScaledMonomialExpansion> {
    let jet = solution.jet_at(&element.center, m)?;
    let set = monomial_set(element.dim() + 1, m);
    let coeffs =
        set.indices().iter().map(|j| jet.coeff(j) * element.h_k.powi(j.order() as i32)).collect();
    Ok(ScaledMonomialExpansion { center: element.center.clone(), h: element.h_k, set, coeffs })
}

/// Jet of `S q` for the polynomial `q`, composed with the potential's jet.
pub fn residual_jet(q: &ScaledMonomialExpansion, vjet: &TaylorJet) -> Result<TaylorJet> {
    let jet = q.to_jet();
    let d = q.center.len() - 1;
    let m = jet.order();
    if m < 2 {
        return Err(invalid("residual jets need degree at least 2"));
    }
    let keep = m - 2;
    let mut e = vec![0usize; d + 1];
    e[d] = 1;
    let dt = jet.differentiate(&MultiIndex::new(&e))?.truncate(keep);
    let mut out = dt.scale(I);
    for k in 0..d {
        let mut e = vec![0usize; d + 1];
        e[k] = 2;
        out = out.try_add(&jet.differentiate(&MultiIndex::new(&e))?.scale(C64::new(0.5, 0.0)))?;
    }
    let v = vjet.truncate(keep);
    if v.order() < keep {
        return Err(Error::Capability("potential jet order too low".into()));
    }
    out.try_sub(&v.try_mul(&jet.truncate(keep))?)
}

/// Linear map from scaled-monomial coefficients of `q ∈ P^p` to the scaled
/// Taylor coefficients of `S q` of order `<= p − 2` at the center.
pub fn constraint_matrix(d: usize, p: usize, h: f64, vjet: &TaylorJet) -> Result<DMatrix<C64>> {
    let nv = d + 1;
    let set = monomial_set(nv, p);
    if p < 2 {
        return Ok(DMatrix::zeros(0, set.len()));
    }
    let rows = monomial_set(nv, p - 2);
    let mut out = DMatrix::zeros(rows.len(), set.len());
    let center = vjet.center().to_vec();
    for col in 0..set.len() {
        let mut c = vec![ZERO; set.len()];
        c[col] = ONE;
        let q = ScaledMonomialExpansion { center: center.clone(), h, set: set.clone(), coeffs: c };
        let r = residual_jet(&q, vjet)?;
        for (row, j) in rows.indices().iter().enumerate() {
            out[(row, col)] = r.coeff(j) * h.powi(j.order() as i32 + 2);
        }
    }
    Ok(out)
}

/// Least-squares projection residual `‖c − P c‖ / ‖c‖` of `c` (scaled
/// coefficients) onto the span of the polynomial basis rows.
pub fn span_residual(basis: &LocalBasis, c: &[C64]) -> Result<f64> {
    let m = basis
        .coefficient_matrix()
        .ok_or_else(|| Error::Unsupported("span residual needs a polynomial basis".into()))?;
    let a = m.transpose();
    let b = DVector::from_column_slice(c);
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-13).map_err(|e| Error::Numerical(e.to_string()))?;
    let r = &a * x - &b;
    Ok(r.norm() / b.norm())
}
