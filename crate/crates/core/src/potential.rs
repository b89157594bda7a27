//! Potentials `V(x, t)` with point values, elementwise sup bounds and Taylor
//! jets at element centers.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::mesh::Element;
use crate::polyalg::{Field, TaylorJet};

/// User-supplied potential. Jet accuracy is the implementor's responsibility.
pub trait CustomPotential: Send + Sync + fmt::Debug {
    fn eval(&self, point: &[f64]) -> Result<f64>;
    fn jet_at(&self, center: &[f64], order: usize) -> Result<TaylorJet>;
    fn max_jet_order(&self) -> usize;
    fn is_time_dependent(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug)]
pub enum PotentialModel {
    Zero,
    Constant(f64),
    /// `ω² |x|² / 2`.
    HarmonicOscillator { omega: f64 },
    /// `−a² sech²(a x)`.
    Reflectionless { a: f64 },
    /// `D (1 − exp(−α x))²`.
    Morse { depth: f64, alpha: f64 },
    /// `0` for `|x| < half_width`, `depth` elsewhere.
    SquareWell { depth: f64, half_width: f64 },
    /// `1/x² + 1/y² − 1`.
    RationalSingular,
    /// `2 tanh²(√2 x) + 2 tanh²(√2 y) − 4 (t − 1/2)³ − 2`.
    TanhTimeDependent,
    Custom(Arc<dyn CustomPotential>),
}

impl PotentialModel {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialModel::Zero => "zero",
            PotentialModel::Constant(_) => "constant",
            PotentialModel::HarmonicOscillator { .. } => "harmonic",
            PotentialModel::Reflectionless { .. } => "reflectionless",
            PotentialModel::Morse { .. } => "morse",
            PotentialModel::SquareWell { .. } => "square_well",
            PotentialModel::RationalSingular => "rational",
            PotentialModel::TanhTimeDependent => "tanh_time_dependent",
            PotentialModel::Custom(_) => "custom",
        }
    }

    /// Spatial dimension the formula is written for, if fixed.
    pub fn required_dim(&self) -> Option<usize> {
        match self {
            PotentialModel::Reflectionless { .. }
            | PotentialModel::Morse { .. }
            | PotentialModel::SquareWell { .. } => Some(1),
            PotentialModel::RationalSingular | PotentialModel::TanhTimeDependent => Some(2),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, PotentialModel::Zero) || matches!(self, PotentialModel::Constant(c) if *c == 0.0)
    }

    pub fn is_time_dependent(&self) -> bool {
        match self {
            PotentialModel::TanhTimeDependent => true,
            PotentialModel::Custom(c) => c.is_time_dependent(),
            _ => false,
        }
    }

    /// Polynomial in the space–time variables (so low-order quadrature is exact).
    pub fn is_polynomial(&self) -> bool {
        matches!(
            self,
            PotentialModel::Zero | PotentialModel::Constant(_) | PotentialModel::HarmonicOscillator { .. }
        )
    }

    /// Largest jet order `jet_at` can supply.
    pub fn max_jet_order(&self) -> usize {
        match self {
            PotentialModel::Custom(c) => c.max_jet_order(),
            _ => usize::MAX,
        }
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() < 2 {
            return Err(invalid("potential points need at least one space and one time coordinate"));
        }
        if let Some(d) = self.required_dim() {
            if point.len() != d + 1 {
                return Err(invalid(format!(
                    "{} potential is defined for d = {d}, got a point with {} coordinates",
                    self.name(),
                    point.len()
                )));
            }
        }
        if let PotentialModel::SquareWell { half_width, .. } = self {
            if point[0].abs() == *half_width {
                return Err(Error::Singularity(format!(
                    "square-well potential is discontinuous at x = {}",
                    point[0]
                )));
            }
        }
        Ok(())
    }

    /// The closed-form expression in the variables `(x_1, .., x_d, t)`.
    fn formula<F: Field>(&self, z: &[F]) -> Result<F> {
        let d = z.len() - 1;
        let c = |v: f64| z[0].constant_like(C64::new(v, 0.0));
        Ok(match self {
            PotentialModel::Zero => c(0.0),
            PotentialModel::Constant(v) => c(*v),
            PotentialModel::HarmonicOscillator { omega } => {
                let mut r2 = c(0.0);
                for x in &z[..d] {
                    r2 = r2 + x.clone() * x.clone();
                }
                r2.scale(0.5 * omega * omega)
            }
            PotentialModel::Reflectionless { a } => z[0].scale(*a).sech().powi(2).scale(-a * a),
            PotentialModel::Morse { depth, alpha } => {
                let e = z[0].scale(-alpha).exp();
                (-e).shift(1.0).powi(2).scale(*depth)
            }
            PotentialModel::SquareWell { depth, half_width } => {
                if z[0].value().re.abs() < *half_width {
                    c(0.0)
                } else {
                    c(*depth)
                }
            }
            PotentialModel::RationalSingular => {
                let ix = z[0].powi(2).recip()?;
                let iy = z[1].powi(2).recip()?;
                (ix + iy).shift(-1.0)
            }
            PotentialModel::TanhTimeDependent => {
                let s = 2f64.sqrt();
                let tx = z[0].scale(s).tanh().powi(2).scale(2.0);
                let ty = z[1].scale(s).tanh().powi(2).scale(2.0);
                let tt = z[2].shift(-0.5).powi(3).scale(-4.0);
                (tx + ty + tt).shift(-2.0)
            }
            PotentialModel::Custom(_) => unreachable!("custom potentials bypass the formula"),
        })
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if let PotentialModel::Custom(c) = self {
            return c.eval(point);
        }
        self.check_point(point)?;
        let z: Vec<C64> = point.iter().map(|&v| C64::new(v, 0.0)).collect();
        Ok(self.formula(&z)?.re)
    }

    /// Taylor jet of `V` at `center` truncated at `order`.
    pub fn jet_at(&self, center: &[f64], order: usize) -> Result<TaylorJet> {
        if order > self.max_jet_order() {
            return Err(Error::Capability(format!(
                "potential supplies jets up to order {}, requested {order}",
                self.max_jet_order()
            )));
        }
        if let PotentialModel::Custom(c) = self {
            return c.jet_at(center, order);
        }
        self.check_point(center)?;
        let z: Vec<TaylorJet> = (0..center.len()).map(|k| TaylorJet::variable(center, order, k)).collect();
        let mut jet = self.formula(&z)?;
        // The constant term must reproduce the point value bit for bit.
        let v = self.eval(center)?;
        let mut coeffs = jet.coeffs().to_vec();
        coeffs[0] = C64::new(v, 0.0);
        jet = TaylorJet::from_coeffs(center, order, coeffs)?;
        Ok(jet)
    }

    /// Jet at the element center; rejects elements whose interior crosses a
    /// discontinuity of the potential.
    pub fn jet_for_element(&self, element: &Element, order: usize) -> Result<TaylorJet> {
        if let PotentialModel::SquareWell { half_width, .. } = self {
            let (a, b) = element.bounds[0];
            // Nodes within rounding of a discontinuity count as aligned.
            let tol = 1e-10 * (b - a);
            if [-half_width, *half_width].iter().any(|&x| a + tol < x && x < b - tol) {
                return Err(Error::Singularity(format!(
                    "element [{a}, {b}] is not aligned with the square-well discontinuities"
                )));
            }
        }
        self.jet_at(&element.center, order)
    }

    /// Upper bound for `sup_K |V|`.
    pub fn sup_bound(&self, element: &Element) -> Result<f64> {
        let d = element.dim();
        let corners = || {
            (0..1usize << (d + 1)).map(move |mask| {
                element
                    .bounds
                    .iter()
                    .enumerate()
                    .map(|(k, &(a, b))| if mask >> k & 1 == 1 { b } else { a })
                    .collect::<Vec<f64>>()
            })
        };
        match self {
            PotentialModel::Zero => Ok(0.0),
            PotentialModel::Constant(v) => Ok(v.abs()),
            PotentialModel::HarmonicOscillator { .. } => {
                // Convex and nonnegative: the maximum sits at a corner.
                corners().map(|p| self.eval(&p)).try_fold(0.0, |m, v| v.map(|v| f64::max(m, v)))
            }
            PotentialModel::SquareWell { depth, half_width } => {
                let (a, b) = element.bounds[0];
                Ok(if a >= -half_width && b <= *half_width { 0.0 } else { depth.abs() })
            }
            PotentialModel::RationalSingular => {
                let (ax, _) = element.bounds[0];
                let (ay, _) = element.bounds[1];
                if ax <= 0.0 && element.bounds[0].1 >= 0.0 || ay <= 0.0 && element.bounds[1].1 >= 0.0 {
                    return Err(Error::Singularity("element touches the singular lines x = 0 or y = 0".into()));
                }
                // |V| <= 1/x^2 + 1/y^2 + 1, maximized at the corner nearest the axes.
                let nx = element.bounds[0].0.abs().min(element.bounds[0].1.abs());
                let ny = element.bounds[1].0.abs().min(element.bounds[1].1.abs());
                Ok(1.0 / (nx * nx) + 1.0 / (ny * ny) + 1.0)
            }
            _ => {
                let n = 5usize;
                let total = n.pow((d + 1) as u32);
                let mut best: f64 = 0.0;
                for idx in 0..total {
                    let mut rem = idx;
                    let p: Vec<f64> = element
                        .bounds
                        .iter()
                        .map(|&(a, b)| {
                            let i = rem % n;
                            rem /= n;
                            a + (b - a) * i as f64 / (n - 1) as f64
                        })
                        .collect();
                    best = best.max(self.eval(&p)?.abs());
                }
                Ok(1.05 * best)
            }
        }
    }
}
