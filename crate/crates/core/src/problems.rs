//! Benchmark problems: exact solutions, boundary and initial data, and the
//! square-well eigenvalue root-find.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::mesh::{BoundaryCondition, SpaceTimeDomain};
use crate::polyalg::{Field, TaylorJet};
use crate::potential::PotentialModel;

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn hermite_field<F: Field>(n: usize, y: &F) -> F {
    let mut h0 = y.constant_like(C64::new(1.0, 0.0));
    if n == 0 {
        return h0;
    }
    let mut h1 = y.scale(2.0);
    for k in 1..n {
        let h2 = y.clone() * h1.clone() * C64::new(2.0, 0.0) - h0.scale(2.0 * k as f64);
        h0 = h1;
        h1 = h2;
    }
    h1
}

fn laguerre_field<F: Field>(n: usize, alpha: f64, y: &F) -> F {
    let mut l0 = y.constant_like(C64::new(1.0, 0.0));
    if n == 0 {
        return l0;
    }
    let mut l1 = (-y.clone()).shift(1.0 + alpha);
    for k in 1..n {
        let kf = k as f64;
        let l2 = (l1.clone() * ((-y.clone()).shift(2.0 * kf + 1.0 + alpha)) - l0.scale(kf + alpha))
            * C64::new(1.0 / (kf + 1.0), 0.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// Physicist's Hermite polynomial `H_n(y)`.
pub fn hermite(n: usize, y: f64) -> f64 {
    hermite_field(n, &C64::new(y, 0.0)).re
}

/// Generalized Laguerre polynomial `L_n^{(α)}(y)`.
pub fn laguerre(n: usize, alpha: f64, y: f64) -> f64 {
    laguerre_field(n, alpha, &C64::new(y, 0.0)).re
}

fn square_well_residual(depth: f64, k: f64) -> f64 {
    let s = (depth - k * k).sqrt();
    s - k * k.tan() * s.tanh()
}

/// Largest root in `(0, √V*)` of `√(V*−k²) − k tan(k) tanh(√(V*−k²))`.
pub fn square_well_wavenumber(depth: f64) -> Result<f64> {
    if !(depth > 0.0) {
        return Err(invalid("square-well depth must be positive"));
    }
    let f = |k: f64| square_well_residual(depth, k);
    let kmax = depth.sqrt();
    let n = 20_000;
    let mut best = None;
    let grid: Vec<f64> = (1..n).map(|i| kmax * i as f64 / n as f64).collect();
    for w in grid.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (mut fa, fb) = (f(a), f(b));
        if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
            continue;
        }
        loop {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = f(m);
            if fm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        let root = if f(a).abs() <= f(b).abs() { a } else { b };
        // A sign change across a pole of tan is not a root.
        if f(root).abs() < 1e-9 {
            best = Some(root);
        }
    }
    best.ok_or_else(|| Error::Numerical(format!("no square-well root found for V* = {depth}")))
}

/// Closed-form solutions of `S ψ = 0` for the built-in potentials, written in
/// the variables `(x_1, .., x_d, t)`.
#[derive(Clone, Debug, PartialEq)]
pub enum ExactSolution {
    /// `ψ_n` of the harmonic oscillator with frequency `omega`.
    Harmonic { omega: f64, n: usize },
    /// Transmitted wave for the reflectionless potential `−a² sech²(a x)`.
    Reflectionless { a: f64 },
    /// Morse state `ψ_{λ, n}` with `λ = √(2D)/α`.
    Morse { depth: f64, alpha: f64, n: usize },
    /// Bound state of the square well `|x| < 1/√2` in `(−√2, √2)`.
    SquareWell { depth: f64, k: f64 },
    /// `x² y² e^{it}`.
    Rational,
    /// `i e^{i(t−1/2)⁴} sech(√2 x) sech(√2 y)`.
    TanhTimeDependent,
    /// `exp(i(κ x − κ² t / 2))`, a free-particle wave.
    PlaneWave { kappa: f64 },
    /// A constant, exact for `V = 0`.
    Constant { value: C64, dim: usize },
}

impl ExactSolution {
    pub fn dim(&self) -> usize {
        match self {
            ExactSolution::Rational | ExactSolution::TanhTimeDependent => 2,
            ExactSolution::Constant { dim, .. } => *dim,
            _ => 1,
        }
    }

    /// Whether the solution is a polynomial in space–time.
    pub fn is_polynomial(&self) -> bool {
        matches!(self, ExactSolution::Constant { .. })
    }

    fn formula<F: Field>(&self, z: &[F]) -> Result<F> {
        let c = |v: C64| z[0].constant_like(v);
        let t = &z[z.len() - 1];
        Ok(match *self {
            ExactSolution::Harmonic { omega, n } => {
                let fact: f64 = (1..=n).map(|k| k as f64).product();
                let norm = (omega / PI).powf(0.25) / (2f64.powi(n as i32) * fact).sqrt();
                let h = hermite_field(n, &z[0].scale(omega.sqrt()));
                let phase = (z[0].clone() * z[0].clone()).scale(omega) + t.clone() * (I * ((2 * n + 1) as f64 * omega));
                h * phase.scale(-0.5).exp() * C64::new(norm, 0.0)
            }
            ExactSolution::Reflectionless { a } => {
                let s2 = 2f64.sqrt();
                let num = z[0].scale(a).tanh().scale(-a) + I * s2;
                let wave = (z[0].scale(s2) - t.clone()) * I;
                num * wave.exp() * (1.0 / (I * s2 + a))
            }
            ExactSolution::Morse { depth, alpha, n } => {
                let (lambda, omega0) = morse_constants(depth, alpha);
                let nn = n as f64;
                let norm = ((2.0 * lambda - 2.0 * nn - 1.0) * statrs::function::gamma::gamma(nn + 1.0)
                    / statrs::function::gamma::gamma(2.0 * lambda - nn))
                .abs()
                .sqrt();
                let energy = ((nn + 0.5) - (nn + 0.5).powi(2) / (2.0 * lambda)) * omega0;
                let xi = z[0].scale(-alpha).exp().scale(2.0 * lambda);
                let lag = laguerre_field(n, 2.0 * lambda - 2.0 * nn - 1.0, &xi);
                let pow = xi.powf(lambda - nn - 0.5)?;
                let arg = xi.scale(-0.5) + t.clone() * (-I * energy);
                pow * lag * arg.exp() * C64::new(norm, 0.0)
            }
            ExactSolution::SquareWell { depth, k } => {
                let s = (depth - k * k).sqrt();
                let x = &z[0];
                let r = 2f64.sqrt();
                let space = if x.value().re.abs() < 1.0 / r {
                    x.scale(k * r).cos()
                } else {
                    let ax = if x.value().re < 0.0 { -x.clone() } else { x.clone() };
                    (-ax).scale(r * s).shift(2.0 * s).sinh() * C64::new(k.cos() / s.sinh(), 0.0)
                };
                space * (t.clone() * (-I * k * k)).exp()
            }
            ExactSolution::Rational => {
                (z[0].clone() * z[0].clone() * z[1].clone() * z[1].clone()) * (t.clone() * I).exp()
            }
            ExactSolution::TanhTimeDependent => {
                let s2 = 2f64.sqrt();
                let phase = (t.shift(-0.5).powi(4) * I).exp();
                phase * z[0].scale(s2).sech() * z[1].scale(s2).sech() * I
            }
            ExactSolution::PlaneWave { kappa } => ((z[0].scale(kappa) - t.scale(0.5 * kappa * kappa)) * I).exp(),
            ExactSolution::Constant { value, .. } => c(value),
        })
    }

    fn check(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim() + 1 {
            return Err(invalid(format!(
                "exact solution is defined in {} + 1 dimensions, got a point with {} coordinates",
                self.dim(),
                point.len()
            )));
        }
        Ok(())
    }

    pub fn value(&self, point: &[f64]) -> Result<C64> {
        self.check(point)?;
        let z: Vec<C64> = point.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.formula(&z)
    }

    pub fn jet_at(&self, center: &[f64], order: usize) -> Result<TaylorJet> {
        self.check(center)?;
        let z: Vec<TaylorJet> = (0..center.len()).map(|k| TaylorJet::variable(center, order, k)).collect();
        self.formula(&z)
    }

    /// Value and spatial gradient.
    pub fn value_and_gradient(&self, point: &[f64]) -> Result<(C64, Vec<C64>)> {
        let jet = self.jet_at(point, 1)?;
        let c = jet.coeffs();
        Ok((c[0], c[1..=self.dim()].to_vec()))
    }

    pub fn space_gradient(&self, point: &[f64]) -> Result<Vec<C64>> {
        Ok(self.value_and_gradient(point)?.1)
    }
}

fn morse_constants(depth: f64, alpha: f64) -> (f64, f64) {
    let s = (2.0 * depth).sqrt();
    (s / alpha, s * alpha)
}

/// `(point, outward spatial normal) -> value`.
pub type BoundaryFn = Arc<dyn Fn(&[f64], &[f64]) -> Result<C64> + Send + Sync>;
pub type InitialFn = Arc<dyn Fn(&[f64]) -> Result<C64> + Send + Sync>;

#[derive(Clone)]
pub struct ProblemData {
    pub initial: InitialFn,
    pub dirichlet: Option<BoundaryFn>,
    pub neumann: Option<BoundaryFn>,
    pub robin: Option<BoundaryFn>,
}

#[derive(Clone)]
pub struct BenchmarkProblem {
    pub name: String,
    pub domain: SpaceTimeDomain,
    pub potential: PotentialModel,
    pub exact: Option<ExactSolution>,
    pub data: ProblemData,
    /// Robin impedance `θ`.
    pub impedance: f64,
}

impl fmt::Debug for BenchmarkProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkProblem")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("potential", &self.potential)
            .field("exact", &self.exact)
            .field("impedance", &self.impedance)
            .finish()
    }
}

impl BenchmarkProblem {
    /// Problem whose initial and boundary data are the traces of `exact`.
    pub fn from_exact(
        name: &str,
        domain: SpaceTimeDomain,
        potential: PotentialModel,
        exact: ExactSolution,
        impedance: f64,
    ) -> Result<Self> {
        if exact.dim() != domain.dim() {
            return Err(invalid(format!(
                "exact solution is {}-dimensional but the domain is {}-dimensional",
                exact.dim(),
                domain.dim()
            )));
        }
        if !(impedance > 0.0) {
            return Err(invalid("Robin impedance must be positive"));
        }
        let ex = Arc::new(exact.clone());
        let e0 = ex.clone();
        let initial: InitialFn = Arc::new(move |x: &[f64]| {
            let mut p = x.to_vec();
            p.push(0.0);
            e0.value(&p)
        });
        let e1 = ex.clone();
        let dirichlet: BoundaryFn = Arc::new(move |p: &[f64], _n: &[f64]| e1.value(p));
        let e2 = ex.clone();
        let neumann: BoundaryFn = Arc::new(move |p: &[f64], n: &[f64]| {
            let g = e2.space_gradient(p)?;
            Ok(g.iter().zip(n).map(|(g, n)| g * n).sum())
        });
        let e3 = ex;
        let robin: BoundaryFn = Arc::new(move |p: &[f64], n: &[f64]| {
            let (v, g) = e3.value_and_gradient(p)?;
            let dn: C64 = g.iter().zip(n).map(|(g, n)| g * n).sum();
            Ok(dn - I * impedance * v)
        });
        Ok(BenchmarkProblem {
            name: name.to_string(),
            domain,
            potential,
            exact: Some(exact),
            data: ProblemData { initial, dirichlet: Some(dirichlet), neumann: Some(neumann), robin: Some(robin) },
            impedance,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }
}

pub type ProblemParams = BTreeMap<String, f64>;

fn param(params: &ProblemParams, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn int_param(params: &ProblemParams, key: &str, default: usize) -> Result<usize> {
    let v = param(params, key, default as f64);
    if v < 0.0 || v.fract() != 0.0 {
        return Err(invalid(format!("parameter `{key}` must be a nonnegative integer, got {v}")));
    }
    Ok(v as usize)
}

/// Names accepted by [`make_problem`].
pub const PROBLEM_NAMES: &[&str] = &[
    "harmonic",
    "reflectionless",
    "morse",
    "square_well",
    "rational",
    "tanh_time_dependent",
    "free",
    "constant",
    "robin_harmonic",
];

/// Built-in problem by name. Unknown parameter keys are rejected.
pub fn make_problem(name: &str, params: &ProblemParams) -> Result<BenchmarkProblem> {
    let allowed: &[&str] = match name {
        "harmonic" => &["omega", "n"],
        "reflectionless" => &["a"],
        "morse" => &["depth", "alpha", "n"],
        "square_well" => &["depth"],
        "rational" | "tanh_time_dependent" => &[],
        "free" => &["kappa"],
        "constant" => &["value", "dim"],
        "robin_harmonic" => &["omega", "n", "theta"],
        _ => {
            return Err(invalid(format!(
                "unknown problem `{name}` (expected one of {})",
                PROBLEM_NAMES.join(", ")
            )))
        }
    };
    if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(invalid(format!("problem `{name}` has no parameter `{k}`")));
    }
    let line = |a: f64, b: f64| SpaceTimeDomain::new(&[(a, b)], 1.0);
    let square = || SpaceTimeDomain::new(&[(0.0, 1.0), (0.0, 1.0)], 1.0);
    match name {
        "harmonic" | "robin_harmonic" => {
            let omega = param(params, "omega", 10.0);
            let n = int_param(params, "n", 2)?;
            if !(omega > 0.0) {
                return Err(invalid("omega must be positive"));
            }
            let mut domain = line(-3.0, 3.0)?;
            let mut theta = 1.0;
            if name == "robin_harmonic" {
                theta = param(params, "theta", 1.0);
                domain = domain.with_all_conditions(BoundaryCondition::Robin);
            }
            BenchmarkProblem::from_exact(
                name,
                domain,
                PotentialModel::HarmonicOscillator { omega },
                ExactSolution::Harmonic { omega, n },
                theta,
            )
        }
        "reflectionless" => {
            let a = param(params, "a", 1.0);
            BenchmarkProblem::from_exact(
                name,
                line(-5.0, 5.0)?,
                PotentialModel::Reflectionless { a },
                ExactSolution::Reflectionless { a },
                1.0,
            )
        }
        "morse" => {
            let depth = param(params, "depth", 8.0);
            let alpha = param(params, "alpha", 4.0);
            let n = int_param(params, "n", 1)?;
            if !(depth > 0.0 && alpha > 0.0) {
                return Err(invalid("Morse depth and alpha must be positive"));
            }
            BenchmarkProblem::from_exact(
                name,
                line(-0.5, 1.5)?,
                PotentialModel::Morse { depth, alpha },
                ExactSolution::Morse { depth, alpha, n },
                1.0,
            )
        }
        "square_well" => {
            let depth = param(params, "depth", 20.0);
            let k = square_well_wavenumber(depth)?;
            let r = 2f64.sqrt();
            BenchmarkProblem::from_exact(
                name,
                line(-r, r)?,
                PotentialModel::SquareWell { depth, half_width: 1.0 / r },
                ExactSolution::SquareWell { depth, k },
                1.0,
            )
        }
        "rational" => BenchmarkProblem::from_exact(
            name,
            square()?,
            PotentialModel::RationalSingular,
            ExactSolution::Rational,
            1.0,
        ),
        "tanh_time_dependent" => BenchmarkProblem::from_exact(
            name,
            square()?,
            PotentialModel::TanhTimeDependent,
            ExactSolution::TanhTimeDependent,
            1.0,
        ),
        "free" => {
            let kappa = param(params, "kappa", 1.0);
            BenchmarkProblem::from_exact(
                name,
                line(0.0, 1.0)?,
                PotentialModel::Zero,
                ExactSolution::PlaneWave { kappa },
                1.0,
            )
        }
        "constant" => {
            let value = param(params, "value", 1.0);
            let dim = int_param(params, "dim", 1)?;
            let domain = match dim {
                1 => line(0.0, 1.0)?,
                2 => square()?,
                _ => return Err(invalid("constant problem supports dim 1 or 2")),
            };
            BenchmarkProblem::from_exact(
                name,
                domain,
                PotentialModel::Zero,
                ExactSolution::Constant { value: C64::new(value, 0.0), dim },
                1.0,
            )
        }
        _ => unreachable!(),
    }
}

/// `S ψ` at `point` from jets of `ψ` and `V`.
pub fn pde_residual(exact: &ExactSolution, potential: &PotentialModel, point: &[f64]) -> Result<(C64, f64)> {
    let d = exact.dim();
    let jet = exact.jet_at(point, 2)?;
    let mut dt = vec![0usize; d + 1];
    dt[d] = 1;
    let mut lap = C64::new(0.0, 0.0);
    for k in 0..d {
        let mut e = vec![0usize; d + 1];
        e[k] = 2;
        lap += jet.derivative(&crate::polyalg::MultiIndex::new(&e));
    }
    let psi = jet.value();
    let v = potential.eval(point)?;
    let res = I * jet.derivative(&crate::polyalg::MultiIndex::new(&dt)) + 0.5 * lap - v * psi;
    let scale = psi.norm() + jet.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok((res, scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_and_laguerre_values() {
        for y in [-1.2, 0.0, 0.7, 2.5] {
            assert!((hermite(2, y) - (4.0 * y * y - 2.0)).abs() < 1e-13);
            assert_eq!(laguerre(0, 0.3, y), 1.0);
            assert!((laguerre(1, 0.3, y) - (1.3 - y)).abs() < 1e-14);
        }
        let y: f64 = 1.3;
        let h5 = 32.0 * y.powi(5) - 160.0 * y.powi(3) + 120.0 * y;
        assert!((hermite(5, y) - h5).abs() < 1e-12 * h5.abs());
        // L_2^{(a)}(y) = ((y^2 - 2(a+2) y + (a+1)(a+2)) / 2
        let a = 0.5;
        let l2 = (y * y - 2.0 * (a + 2.0) * y + (a + 1.0) * (a + 2.0)) / 2.0;
        assert!((laguerre(2, a, y) - l2).abs() < 1e-13);
    }

    #[test]
    fn square_well_root() {
        let k = square_well_wavenumber(20.0).unwrap();
        assert!((k - 3.73188).abs() < 1e-4, "{k}");
        assert!(square_well_residual(20.0, k).abs() < 1e-12);
        // No sign change between k and √V* apart from poles of tan.
        let kmax = 20f64.sqrt();
        let mut prev = square_well_residual(20.0, k + 1e-6);
        for i in 1..20_000 {
            let x = k + 1e-6 + (kmax - k - 2e-6) * i as f64 / 20_000.0;
            let cur = square_well_residual(20.0, x);
            if cur.signum() != prev.signum() {
                // Must be a pole: |f| is large on both sides.
                assert!(cur.abs() > 1.0 && prev.abs() > 1.0, "root near {x}");
            }
            prev = cur;
        }
        assert!(square_well_wavenumber(-1.0).is_err());
    }

    #[test]
    fn taylor_of_shifted_exponential_like_solution() {
        // Remark example in the constant potential case: exp(x + i t / 2)
        // has Taylor polynomial 1 + x + i t / 2 at the origin.
        let z = [TaylorJet::variable(&[0.0, 0.0], 1, 0), TaylorJet::variable(&[0.0, 0.0], 1, 1)];
        let f = (z[0].clone() + z[1].clone() * C64::new(0.0, 0.5)).exp();
        let c = f.coeffs();
        assert_eq!(c[0], C64::new(1.0, 0.0));
        assert_eq!(c[1], C64::new(1.0, 0.0));
        assert_eq!(c[2], C64::new(0.0, 0.5));
    }

    #[test]
    fn morse_constants_for_table_parameters() {
        let (lambda, omega0) = morse_constants(8.0, 4.0);
        assert_eq!(lambda, 1.0);
        assert_eq!(omega0, 16.0);
    }

    #[test]
    fn unknown_names_and_parameters_are_rejected() {
        assert!(make_problem("nope", &ProblemParams::new()).is_err());
        let mut p = ProblemParams::new();
        p.insert("bogus".into(), 1.0);
        assert!(make_problem("harmonic", &p).is_err());
        let h = make_problem("harmonic", &ProblemParams::new()).unwrap();
        assert_eq!(h.potential.eval(&[1.0, 0.0]).unwrap(), 50.0);
    }
}
