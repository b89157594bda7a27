//! Error norms, energy evolution and convergence rates.
//!
//! Everything here evaluates the discrete solution pointwise at quadrature
//! nodes; nothing is shared with the assembled matrices, so identities such
//! as `Im A(w, w) = |||w|||²` compare two independent computations.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::assembly::{robin_delta, rule_for, StabilizationConfig, TableCache};
use crate::basis::SpaceKind;
use crate::polyalg::QuadratureRule;
use crate::error::{invalid, Error, Result};
use crate::mesh::{Facet, FacetKind};
use crate::problems::{BenchmarkProblem, ExactSolution};
use crate::solver::DiscreteSolution;

/// Sum in a fixed pairwise order, independent of thread scheduling.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

fn combine_rows(m: &DMatrix<C64>, c: &[C64]) -> Vec<C64> {
    (0..m.ncols()).map(|q| (0..m.nrows()).map(|i| m[(i, q)] * c[i]).sum()).collect()
}

/// Values of the solution restricted to one element at a set of points.
/// The time derivative and Laplacian are only filled for volume samples.
struct Samples {
    value: Vec<C64>,
    gradient: Vec<Vec<C64>>,
    time_derivative: Vec<C64>,
    laplacian: Vec<C64>,
}

fn combine_real(m: &DMatrix<f64>, c: &[C64]) -> Vec<C64> {
    (0..m.ncols()).map(|q| (0..m.nrows()).map(|i| c[i] * m[(i, q)]).sum()).collect()
}

/// Solution on `element` (`face = None`) or on one of its faces, with the
/// quadrature rule used.
fn element_samples(
    sol: &DiscreteSolution,
    cache: &TableCache,
    element: usize,
    face: Option<(usize, bool)>,
    points: usize,
) -> (QuadratureRule, Samples) {
    let el = sol.mesh().element(element);
    let basis = sol.basis(element);
    let c = sol.coefficients(element);
    let d = sol.mesh().dim();
    let (rule, table) = cache.monomial_table(el, basis, face, points);
    let volume = face.is_none();
    let samples = match (table, basis.monomial_coefficients(c)) {
        (Some(t), Some(m)) => {
            let lap = volume.then(|| {
                let mut l = t.second[0].clone();
                for k in 1..d {
                    l += &t.second[k * d + k];
                }
                combine_real(&l, &m)
            });
            Samples {
                value: combine_real(&t.value, &m),
                gradient: (0..d).map(|k| combine_real(&t.first[k], &m)).collect(),
                time_derivative: if volume { combine_real(&t.first[d], &m) } else { Vec::new() },
                laplacian: lap.unwrap_or_default(),
            }
        }
        _ => {
            let pts: Vec<Vec<f64>> = rule.points().map(|p| p.to_vec()).collect();
            let tab = basis.tabulate(&pts);
            Samples {
                value: combine_rows(&tab.value, c),
                gradient: tab.space_gradient.iter().map(|g| combine_rows(g, c)).collect(),
                time_derivative: if volume { combine_rows(&tab.time_derivative, c) } else { Vec::new() },
                laplacian: if volume { combine_rows(&tab.laplacian, c) } else { Vec::new() },
            }
        }
    };
    (rule, samples)
}

/// Solution on face `(axis, high)` of `element`, with quadrature points and
/// weights.
fn face_samples(
    sol: &DiscreteSolution,
    cache: &TableCache,
    element: usize,
    axis: usize,
    high: bool,
    points: usize,
) -> (Samples, Vec<Vec<f64>>, Vec<f64>) {
    let (rule, s) = element_samples(sol, cache, element, Some((axis, high)), points);
    let pts = rule.points().map(|p| p.to_vec()).collect();
    (s, pts, rule.weights().to_vec())
}

/// Face of the owner element that carries `facet`.
fn owner_face(facet: &Facet) -> (usize, bool) {
    let sign = facet.orientation(facet.owner).expect("owner is adjacent");
    (facet.normal_axis, sign > 0.0)
}

fn reference_values(reference: Option<&ExactSolution>, points: &[Vec<f64>]) -> Result<Samples> {
    let d = points.first().map_or(0, |p| p.len() - 1);
    let n = points.len();
    let mut out = Samples {
        value: vec![C64::new(0.0, 0.0); n],
        gradient: vec![vec![C64::new(0.0, 0.0); n]; d],
        time_derivative: Vec::new(),
        laplacian: Vec::new(),
    };
    if let Some(ex) = reference {
        for (q, p) in points.iter().enumerate() {
            let (v, g) = ex.value_and_gradient(p)?;
            out.value[q] = v;
            for k in 0..d {
                out.gradient[k][q] = g[k];
            }
        }
    }
    Ok(out)
}

/// Weighted squared contributions to the DG norm of `reference − u_h`
/// (or of `u_h` itself when there is no reference). Each field already
/// includes its weight and factor ½.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NormTerms {
    pub volume: f64,
    pub spacelike_jump: f64,
    pub final_time: f64,
    pub initial: f64,
    pub timelike_value: f64,
    pub timelike_gradient: f64,
    pub dirichlet: f64,
    pub neumann: f64,
    pub robin_value: f64,
    pub robin_gradient: f64,
}

impl NormTerms {
    pub fn dg_squared(&self) -> f64 {
        self.dissipation()
            + self.final_time
            + self.initial
            + self.robin_value
            + self.robin_gradient
    }

    /// Every term except the initial, final and Robin ones.
    pub fn dissipation(&self) -> f64 {
        self.volume
            + self.spacelike_jump
            + self.timelike_value
            + self.timelike_gradient
            + self.dirichlet
            + self.neumann
    }
}

fn integrate_sq(w: &[f64], f: impl Fn(usize) -> C64) -> f64 {
    w.iter().enumerate().map(|(q, w)| w * f(q).norm_sqr()).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TermKind {
    SpaceLike,
    Final,
    Initial,
    TimeValue,
    TimeGradient,
    Dirichlet,
    Neumann,
    RobinValue,
    RobinGradient,
}

fn facet_terms(
    sol: &DiscreteSolution,
    facet: &Facet,
    reference: Option<&ExactSolution>,
    problem: &BenchmarkProblem,
    stab: &StabilizationConfig,
    cache: &TableCache,
    points: usize,
) -> Result<Vec<(TermKind, f64)>> {
    let own = facet.owner;
    let (ax, high) = owner_face(facet);
    let (a, pts, w) = face_samples(sol, cache, own, ax, high, points);
    let half = 0.5;
    Ok(match facet.kind {
        FacetKind::SpaceLikeInternal | FacetKind::TimeLikeInternal => {
            let nb = facet.neighbor.ok_or_else(|| invalid("internal facet without neighbor"))?;
            let (b, _, _) = face_samples(sol, cache, nb, ax, !high, points);
            let jump = integrate_sq(&w, |q| a.value[q] - b.value[q]);
            if facet.kind == FacetKind::SpaceLikeInternal {
                vec![(TermKind::SpaceLike, half * jump)]
            } else {
                let gj = integrate_sq(&w, |q| a.gradient[ax][q] - b.gradient[ax][q]);
                vec![
                    (TermKind::TimeValue, half * stab.alpha(facet.h_fx) * jump),
                    (TermKind::TimeGradient, half * stab.beta(facet.h_fx) * gj),
                ]
            }
        }
        kind => {
            let r = reference_values(reference, &pts)?;
            let e = integrate_sq(&w, |q| r.value[q] - a.value[q]);
            let en = || integrate_sq(&w, |q| r.gradient[ax][q] - a.gradient[ax][q]);
            match kind {
                FacetKind::Final => vec![(TermKind::Final, half * e)],
                FacetKind::Initial => vec![(TermKind::Initial, half * e)],
                FacetKind::Dirichlet => vec![(TermKind::Dirichlet, half * stab.alpha(facet.h_fx) * e)],
                FacetKind::Neumann => vec![(TermKind::Neumann, half * stab.beta(facet.h_fx) * en())],
                FacetKind::Robin => {
                    let theta = problem.impedance;
                    let delta = robin_delta(theta, sol.mesh().element(own).h_x);
                    vec![
                        (TermKind::RobinValue, half * theta * (1.0 - delta) * e),
                        (TermKind::RobinGradient, half * delta / theta * en()),
                    ]
                }
                _ => unreachable!(),
            }
        }
    })
}

fn volume_term(
    sol: &DiscreteSolution,
    element: usize,
    problem: &BenchmarkProblem,
    stab: &StabilizationConfig,
    cache: &TableCache,
    points: usize,
) -> Result<f64> {
    let el = sol.mesh().element(element);
    let mu = stab.mu(el);
    if mu == 0.0 || matches!(sol.kind(), SpaceKind::ExponentialTrefftz(_)) {
        return Ok(0.0);
    }
    let (rule, s) = element_samples(sol, cache, element, None, points);
    let (dt, lap) = (&s.time_derivative, &s.laplacian);
    let mut acc = 0.0;
    for (q, p) in rule.points().enumerate() {
        let v = problem.potential.eval(p)?;
        let res = C64::new(0.0, 1.0) * dt[q] + 0.5 * lap[q] - v * s.value[q];
        acc += rule.weights()[q] * res.norm_sqr();
    }
    Ok(mu * acc)
}

/// DG-norm contributions of `reference − u_h` (the exact solution's
/// residual vanishes, so the volume term uses `S u_h` only).
pub fn norm_terms(
    sol: &DiscreteSolution,
    reference: Option<&ExactSolution>,
    problem: &BenchmarkProblem,
    stab: &StabilizationConfig,
    points: usize,
) -> Result<NormTerms> {
    let mesh = sol.mesh();
    let cache = TableCache::default();
    let volumes = (0..mesh.elements().len())
        .into_par_iter()
        .map(|e| volume_term(sol, e, problem, stab, &cache, points))
        .collect::<Result<Vec<f64>>>()?;
    let facets = mesh
        .facets()
        .par_iter()
        .map(|f| facet_terms(sol, f, reference, problem, stab, &cache, points))
        .collect::<Result<Vec<_>>>()?;
    let pick = |kind: TermKind| {
        let v: Vec<f64> = facets.iter().flatten().filter(|t| t.0 == kind).map(|t| t.1).collect();
        pairwise_sum(&v)
    };
    Ok(NormTerms {
        volume: pairwise_sum(&volumes),
        spacelike_jump: pick(TermKind::SpaceLike),
        final_time: pick(TermKind::Final),
        initial: pick(TermKind::Initial),
        timelike_value: pick(TermKind::TimeValue),
        timelike_gradient: pick(TermKind::TimeGradient),
        dirichlet: pick(TermKind::Dirichlet),
        neumann: pick(TermKind::Neumann),
        robin_value: pick(TermKind::RobinValue),
        robin_gradient: pick(TermKind::RobinGradient),
    })
}

/// `|||ψ − u_h|||_DG`.
pub fn dg_norm_error(
    sol: &DiscreteSolution,
    problem: &BenchmarkProblem,
    stab: &StabilizationConfig,
    points: usize,
) -> Result<f64> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Unsupported(format!("problem '{}' has no exact solution", problem.name)))?;
    Ok(norm_terms(sol, Some(exact), problem, stab, points)?.dg_squared().sqrt())
}

/// `|||u_h|||_DG` of a discrete function.
pub fn dg_norm(sol: &DiscreteSolution, problem: &BenchmarkProblem, stab: &StabilizationConfig, points: usize) -> Result<f64> {
    Ok(norm_terms(sol, None, problem, stab, points)?.dg_squared().sqrt())
}

/// `|||ψ − u_h|||_{DG+}`: the DG norm plus the weighted terms that bound
/// the best-approximation error. Infinite when a weight vanishes.
pub fn dgplus_norm_error(
    sol: &DiscreteSolution,
    problem: &BenchmarkProblem,
    stab: &StabilizationConfig,
    points: usize,
) -> Result<f64> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Unsupported(format!("problem '{}' has no exact solution", problem.name)))?;
    let base = norm_terms(sol, Some(exact), problem, stab, points)?.dg_squared();
    let mesh = sol.mesh();
    let cache = TableCache::default();
    let mut extra = Vec::new();
    for (e, el) in mesh.elements().iter().enumerate() {
        let (rule, s) = element_samples(sol, &cache, e, None, points);
        let pts: Vec<Vec<f64>> = rule.points().map(|p| p.to_vec()).collect();
        let r = reference_values(Some(exact), &pts)?;
        extra.push(integrate_sq(rule.weights(), |q| r.value[q] - s.value[q]) / stab.mu(el));
    }
    for facet in mesh.facets() {
        let own = facet.owner;
        let (ax, high) = owner_face(facet);
        let (a, pts, w) = face_samples(sol, &cache, own, ax, high, points);
        let r = reference_values(Some(exact), &pts)?;
        let (alpha, beta) = (stab.alpha(facet.h_fx), stab.beta(facet.h_fx));
        let e = |q: usize| r.value[q] - a.value[q];
        let en = |q: usize| r.gradient[ax][q] - a.gradient[ax][q];
        match facet.kind {
            FacetKind::SpaceLikeInternal => extra.push(0.5 * integrate_sq(&w, e)),
            FacetKind::TimeLikeInternal => {
                let nb = facet.neighbor.ok_or_else(|| invalid("internal facet without neighbor"))?;
                let (b, _, _) = face_samples(sol, &cache, nb, ax, !high, points);
                let avg = |q: usize| r.value[q] - 0.5 * (a.value[q] + b.value[q]);
                let gavg = |q: usize| r.gradient[ax][q] - 0.5 * (a.gradient[ax][q] + b.gradient[ax][q]);
                extra.push(0.5 * integrate_sq(&w, gavg) / alpha + 0.5 * integrate_sq(&w, avg) / beta);
            }
            FacetKind::Dirichlet => extra.push(0.5 * integrate_sq(&w, en) / alpha),
            FacetKind::Neumann => extra.push(0.5 * integrate_sq(&w, e) / beta),
            FacetKind::Robin => {
                let theta = problem.impedance;
                let delta = robin_delta(theta, mesh.element(own).h_x);
                extra.push(0.5 * theta / delta * integrate_sq(&w, e));
            }
            FacetKind::Initial | FacetKind::Final => {}
        }
    }
    Ok((base + pairwise_sum(&extra)).sqrt())
}

/// `‖ψ − u_h‖_{L²(F_T)}`.
pub fn l2_final_error(sol: &DiscreteSolution, exact: &ExactSolution, points: usize) -> Result<f64> {
    let mesh = sol.mesh();
    let cache = TableCache::default();
    let d = mesh.dim();
    let parts = mesh.slabs().final_facets
        .iter()
        .map(|&f| {
            let (a, pts, w) = face_samples(sol, &cache, mesh.facet(f).owner, d, true, points);
            let r = reference_values(Some(exact), &pts)?;
            Ok(integrate_sq(&w, |q| r.value[q] - a.value[q]))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&parts).sqrt())
}

/// `E(t) = ½ ‖u_h(·, t)‖²` at every slab boundary, using the trace from
/// the later slab (the earlier one at the final time).
pub fn energy_series(sol: &DiscreteSolution, points: usize) -> Result<Vec<(f64, f64)>> {
    let mesh = sol.mesh();
    let slabs = mesh.slabs();
    let mut out = Vec::with_capacity(slabs.len() + 1);
    let cache = TableCache::default();
    let d = mesh.dim();
    let level = |ids: &[usize]| -> f64 {
        let parts: Vec<f64> = ids
            .iter()
            .map(|&f| {
                let facet = mesh.facet(f);
                // The trace comes from the element above the facet, if any.
                let (el, high) = match (facet.kind, facet.neighbor) {
                    (FacetKind::Final, _) => (facet.owner, true),
                    (_, Some(nb)) => (nb, false),
                    _ => (facet.owner, false),
                };
                let (a, _, w) = face_samples(sol, &cache, el, d, high, points);
                integrate_sq(&w, |q| a.value[q])
            })
            .collect();
        0.5 * pairwise_sum(&parts)
    };
    for n in 0..slabs.len() {
        out.push((slabs.boundaries[n], level(&slabs.bottom_facets[n])));
    }
    out.push((slabs.boundaries[slabs.len()], level(&slabs.final_facets)));
    Ok(out)
}

/// `E(0; ψ₀) = ½ ‖ψ₀‖²_Ω`.
pub fn initial_energy(sol: &DiscreteSolution, problem: &BenchmarkProblem, points: usize) -> Result<f64> {
    let mesh = sol.mesh();
    let mut parts = Vec::new();
    for &f in &mesh.slabs().bottom_facets[0] {
        let facet = mesh.facet(f);
        let rule = rule_for(&facet.bounds, sol.basis(facet.owner), points);
        let pts: Vec<Vec<f64>> = rule.points().map(|p| p.to_vec()).collect();
        let w = rule.weights();
        let vals = pts
            .iter()
            .map(|p| (problem.data.initial)(&p[..p.len() - 1]))
            .collect::<Result<Vec<C64>>>()?;
        parts.push(integrate_sq(w, |q| vals[q]));
    }
    Ok(0.5 * pairwise_sum(&parts))
}

/// Energy loss `δ_E + ½ ‖ψ₀ − u_h‖²_{F₀}` together with the directly
/// measured `E(0; ψ₀) − E(T; u_h)`. The two agree when the boundary data
/// vanish.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBalance {
    pub loss: f64,
    pub dissipation: f64,
    pub initial_mismatch: f64,
    pub measured_drop: f64,
}

pub fn energy_balance(
    sol: &DiscreteSolution,
    problem: &BenchmarkProblem,
    stab: &StabilizationConfig,
    points: usize,
) -> Result<EnergyBalance> {
    let mesh = sol.mesh();
    if mesh.facets().iter().any(|f| f.kind == FacetKind::Robin) {
        return Err(Error::Unsupported("energy loss is not defined with Robin boundaries".into()));
    }
    // Boundary terms measure the mismatch with the data; the exact solution
    // carries the data when present, otherwise the data are zero.
    let terms = norm_terms(sol, problem.exact.as_ref(), problem, stab, points)?;
    let mut mismatch = Vec::new();
    let cache = TableCache::default();
    let d = mesh.dim();
    for &f in &mesh.slabs().bottom_facets[0] {
        let (a, pts, w) = face_samples(sol, &cache, mesh.facet(f).owner, d, false, points);
        let psi0 = pts
            .iter()
            .map(|p| (problem.data.initial)(&p[..p.len() - 1]))
            .collect::<Result<Vec<C64>>>()?;
        mismatch.push(integrate_sq(&w, |q| psi0[q] - a.value[q]));
    }
    let initial_mismatch = 0.5 * pairwise_sum(&mismatch);
    let series = energy_series(sol, points)?;
    let e_t = series.last().map_or(0.0, |x| x.1);
    let measured_drop = initial_energy(sol, problem, points)? - e_t;
    Ok(EnergyBalance {
        loss: terms.dissipation() + initial_mismatch,
        dissipation: terms.dissipation(),
        initial_mismatch,
        measured_drop,
    })
}

/// `rate_i = log(e_i / e_{i+1}) / log(h_i / h_{i+1})`; `None` where an
/// error is not positive.
pub fn convergence_rates(series: &[(f64, f64)]) -> Result<Vec<Option<f64>>> {
    if series.len() < 2 {
        return Err(invalid("convergence rates need at least two entries"));
    }
    if series.windows(2).any(|w| !(w[1].0 < w[0].0) || !(w[1].0 > 0.0)) {
        return Err(invalid("mesh sizes must be positive and strictly decreasing"));
    }
    Ok(series
        .windows(2)
        .map(|w| {
            let ((h0, e0), (h1, e1)) = (w[0], w[1]);
            (e0 > 0.0 && e1 > 0.0 && e0.is_finite() && e1.is_finite()).then(|| (e0 / e1).ln() / (h0 / h1).ln())
        })
        .collect())
}

/// Per-run summary.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub h: f64,
    pub dofs: usize,
    pub dg_error: f64,
    pub l2_final: f64,
    pub energy_series: Vec<(f64, f64)>,
    /// `None` when the energy identity does not apply (Robin boundaries).
    pub energy_loss: Option<f64>,
}

pub fn error_report(
    sol: &DiscreteSolution,
    problem: &BenchmarkProblem,
    stab: &StabilizationConfig,
    points: usize,
) -> Result<ErrorReport> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Unsupported(format!("problem '{}' has no exact solution", problem.name)))?;
    let has_robin = sol.mesh().facets().iter().any(|f| f.kind == FacetKind::Robin);
    Ok(ErrorReport {
        h: sol.mesh().max_h_k(),
        dofs: sol.dofs(),
        dg_error: dg_norm_error(sol, problem, stab, points)?,
        l2_final: l2_final_error(sol, exact, points)?,
        energy_series: energy_series(sol, points)?,
        energy_loss: if has_robin { None } else { Some(energy_balance(sol, problem, stab, points)?.loss) },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates() {
        let r = convergence_rates(&[(1.0, 1.0), (0.5, 0.25)]).unwrap();
        assert!((r[0].unwrap() - 2.0).abs() < 1e-15);
        let r = convergence_rates(&[(1.0, 3.0), (0.5, 3.0), (0.25, 3.0)]).unwrap();
        assert!(r.iter().all(|x| x.unwrap().abs() < 1e-15));
        assert_eq!(convergence_rates(&[(1.0, 0.0), (0.5, 1.0)]).unwrap(), vec![None]);
        assert!(convergence_rates(&[(1.0, 1.0)]).is_err());
        assert!(convergence_rates(&[(0.5, 1.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn table_rates() {
        let h = [7.07e-2, 3.54e-2, 1.77e-2];
        let e = [4.47e-1, 1.27e-1, 3.28e-2];
        let series: Vec<(f64, f64)> = h.iter().copied().zip(e).collect();
        let r = convergence_rates(&series).unwrap();
        assert!((r[0].unwrap() - 1.82).abs() < 0.01);
        assert!((r[1].unwrap() - 1.95).abs() < 0.01);
    }

    #[test]
    fn pairwise_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sqrt()).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-9 * naive);
    }
}
