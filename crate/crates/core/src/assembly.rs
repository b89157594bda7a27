//! Assembly of the per-slab systems `K_n Ψ_n = b_n + R_n Ψ_{n−1}`.
//!
//! Local matrices follow one convention throughout: entry `[J, L]` is the
//! form evaluated with trial member `L` and test member `J`, the test slot
//! carrying the complex conjugate.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{LocalBasis, MonomialTable, SpaceKind, Tabulation};
use crate::error::{invalid, Error, Result};
use crate::linalg::BlockMatrix;
use crate::mesh::{Element, Facet, FacetKind, SpaceTimeMesh};
use crate::polyalg::{gauss_rule, gauss_rule_composite, QuadratureRule};
use crate::potential::PotentialModel;
use crate::problems::{BenchmarkProblem, BoundaryFn};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// `α = 1 / h_Fx`.
    ReciprocalHfx,
    Zero,
    Constant(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRule {
    /// `β = h_Fx`.
    Hfx,
    Zero,
    Constant(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuRule {
    /// `μ = max{h_t, h_x}` on each element.
    MaxH,
    /// `μ = max{h_t², h_x²}`.
    MaxSquared,
    /// `μ = min{h_t², h_x²}`.
    MinSquared,
    Zero,
    Constant(f64),
}

/// Stabilization weights of the form. The Robin splitting parameter is
/// always `δ = min(θ h_x, ½)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilizationConfig {
    pub alpha: AlphaRule,
    pub beta: BetaRule,
    pub mu: MuRule,
}

impl Default for StabilizationConfig {
    fn default() -> Self {
        StabilizationConfig { alpha: AlphaRule::ReciprocalHfx, beta: BetaRule::Hfx, mu: MuRule::MaxSquared }
    }
}

impl StabilizationConfig {
    pub fn zero() -> Self {
        StabilizationConfig { alpha: AlphaRule::Zero, beta: BetaRule::Zero, mu: MuRule::Zero }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |c: f64| !(c.is_finite() && c >= 0.0);
        let msg = |what: &str| Error::Config(format!("{what} constant must be finite and nonnegative"));
        if let AlphaRule::Constant(c) = self.alpha {
            if bad(c) {
                return Err(msg("alpha"));
            }
        }
        if let BetaRule::Constant(c) = self.beta {
            if bad(c) {
                return Err(msg("beta"));
            }
        }
        if let MuRule::Constant(c) = self.mu {
            if bad(c) {
                return Err(msg("mu"));
            }
        }
        Ok(())
    }

    pub fn alpha(&self, h_fx: f64) -> f64 {
        match self.alpha {
            AlphaRule::ReciprocalHfx => 1.0 / h_fx,
            AlphaRule::Zero => 0.0,
            AlphaRule::Constant(c) => c,
        }
    }

    pub fn beta(&self, h_fx: f64) -> f64 {
        match self.beta {
            BetaRule::Hfx => h_fx,
            BetaRule::Zero => 0.0,
            BetaRule::Constant(c) => c,
        }
    }

    pub fn mu(&self, element: &Element) -> f64 {
        let (ht, hx) = (element.h_t, element.h_x);
        match self.mu {
            MuRule::MaxH => ht.max(hx),
            MuRule::MaxSquared => (ht * ht).max(hx * hx),
            MuRule::MinSquared => (ht * ht).min(hx * hx),
            MuRule::Zero => 0.0,
            MuRule::Constant(c) => c,
        }
    }
}

/// `δ = min(θ h_x, ½)`.
pub fn robin_delta(theta: f64, h_x: f64) -> f64 {
    (theta * h_x).min(0.5)
}

/// Gauss points per axis: `p + 2` when every coefficient is polynomial,
/// `p + 4` otherwise.
pub fn default_quadrature_points(p: usize, problem: &BenchmarkProblem) -> usize {
    let smooth_data = problem.exact.as_ref().is_some_and(|e| !e.is_polynomial());
    if problem.potential.is_polynomial() && !smooth_data {
        p + 2
    } else {
        p + 4
    }
}

/// Quadrature rule on `bounds` suited to `basis`: plain Gauss for
/// polynomials, composite Gauss resolving the phase of products of
/// exponential members.
pub fn rule_for(bounds: &[(f64, f64)], basis: &LocalBasis, points: usize) -> QuadratureRule {
    let (kx, kt) = basis.oscillation_rates();
    if kx == 0.0 && kt == 0.0 {
        return gauss_rule(bounds, points);
    }
    let last = bounds.len() - 1;
    let pieces: Vec<usize> = bounds
        .iter()
        .enumerate()
        .map(|(k, (a, b))| {
            let rate = if k == last { kt } else { kx };
            // Products of two members oscillate at up to twice the member rate.
            ((2.0 * rate * (b - a)).abs() / 2.0).ceil().max(1.0) as usize
        })
        .collect();
    gauss_rule_composite(bounds, points.max(8), &pieces)
}

/// `Σ_q w_q trial[L,q] conj(test[J,q])`, as a `tests × trials` matrix.
pub fn pair_integral(test: &DMatrix<C64>, trial: &DMatrix<C64>, weights: &[f64]) -> DMatrix<C64> {
    let mut tw = trial.clone();
    for (q, &w) in weights.iter().enumerate() {
        tw.column_mut(q).scale_mut(w);
    }
    test.conjugate() * tw.transpose()
}

/// `Σ_q w_q g_q conj(test[J,q])`.
pub fn load_integral(test: &DMatrix<C64>, g: &[C64], weights: &[f64]) -> Vec<C64> {
    (0..test.nrows())
        .map(|j| (0..test.ncols()).map(|q| weights[q] * g[q] * test[(j, q)].conj()).sum())
        .collect()
}

/// Trace of a basis on one face of its element.
#[derive(Clone, Debug)]
pub struct FaceTrace {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub value: DMatrix<C64>,
    /// Unsigned derivative along the face's normal axis (spatial faces only).
    pub derivative: Option<DMatrix<C64>>,
}

/// Face `(axis, high side)` of an element box.
pub fn face_bounds(element: &Element, axis: usize, high: bool) -> Vec<(f64, f64)> {
    let mut b = element.bounds.clone();
    let x = if high { b[axis].1 } else { b[axis].0 };
    b[axis] = (x, x);
    b
}

type TableKey = (Vec<u64>, u64, u8, usize, usize);

/// Cache of monomial tabulations relative to element centers; elements of
/// equal size share the same tables.
#[derive(Default)]
pub struct TableCache {
    tables: Mutex<HashMap<TableKey, Arc<MonomialTable>>>,
}

impl TableCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn get(
        &self,
        element: &Element,
        basis: &LocalBasis,
        face: Option<(usize, bool)>,
        rule: &QuadratureRule,
        points: usize,
    ) -> Arc<MonomialTable> {
        let set = basis.monomials().expect("polynomial basis");
        let widths = element.bounds.iter().map(|(a, b)| (b - a).to_bits()).collect();
        let code = face.map_or(u8::MAX, |(k, hi)| (2 * k + hi as usize) as u8);
        let key = (widths, basis.scale().to_bits(), code, points, set.degree());
        if let Some(t) = self.tables.lock().expect("table cache").get(&key) {
            return t.clone();
        }
        let pts: Vec<Vec<f64>> = rule.points().map(|p| p.to_vec()).collect();
        let table = Arc::new(MonomialTable::new(set, &pts, basis.center(), basis.scale()));
        self.tables.lock().expect("table cache").entry(key).or_insert(table).clone()
    }
}

impl TableCache {
    /// Quadrature rule on the element (`face = None`) or on one face
    /// `(axis, high side)`, with the monomial table of a polynomial basis.
    pub fn monomial_table(
        &self,
        element: &Element,
        basis: &LocalBasis,
        face: Option<(usize, bool)>,
        points: usize,
    ) -> (QuadratureRule, Option<Arc<MonomialTable>>) {
        let bounds = match face {
            Some((k, hi)) => face_bounds(element, k, hi),
            None => element.bounds.clone(),
        };
        let rule = rule_for(&bounds, basis, points);
        let table = basis.monomials().is_some().then(|| self.get(element, basis, face, &rule, points));
        (rule, table)
    }

    /// Full tabulation of `basis`, see [`TableCache::monomial_table`].
    pub fn tabulate(
        &self,
        element: &Element,
        basis: &LocalBasis,
        face: Option<(usize, bool)>,
        points: usize,
    ) -> (QuadratureRule, Tabulation) {
        let (rule, table) = self.monomial_table(element, basis, face, points);
        let tab = match table {
            Some(t) => basis.tabulate_with(&t).expect("polynomial basis"),
            None => {
                let pts: Vec<Vec<f64>> = rule.points().map(|p| p.to_vec()).collect();
                basis.tabulate(&pts)
            }
        };
        (rule, tab)
    }
}

/// Tabulates `basis` on a face of `element`.
pub fn face_trace(
    element: &Element,
    basis: &LocalBasis,
    axis: usize,
    high: bool,
    points: usize,
    cache: Option<&TableCache>,
) -> FaceTrace {
    let bounds = face_bounds(element, axis, high);
    let rule = rule_for(&bounds, basis, points);
    let pts: Vec<Vec<f64>> = rule.points().map(|p| p.to_vec()).collect();
    let spatial = axis < element.dim();
    let (value, derivative) = match (basis.monomials(), cache) {
        (Some(_), Some(cache)) => {
            let table = cache.get(element, basis, Some((axis, high)), &rule, points);
            let value = basis.apply_coefficients(&table.value).expect("polynomial basis");
            let derivative = spatial.then(|| basis.apply_coefficients(&table.first[axis]).expect("polynomial basis"));
            (value, derivative)
        }
        _ => {
            let tab = basis.tabulate(&pts);
            let derivative = spatial.then(|| tab.space_gradient[axis].clone());
            (tab.value, derivative)
        }
    };
    FaceTrace { points: pts, weights: rule.weights().to_vec(), value, derivative }
}

fn volume_from_rule(
    element: &Element,
    basis: &LocalBasis,
    potential: &PotentialModel,
    mu: f64,
    points: usize,
    cache: Option<&TableCache>,
) -> Result<DMatrix<C64>> {
    let n = basis.dim();
    if matches!(basis.kind(), SpaceKind::ExponentialTrefftz(_)) {
        // Exponential members solve the free equation exactly.
        return Ok(DMatrix::zeros(n, n));
    }
    let rule = rule_for(&element.bounds, basis, points);
    let tab = match cache {
        Some(cache) if basis.monomials().is_some() => {
            let table = cache.get(element, basis, None, &rule, points);
            basis.tabulate_with(&table).expect("polynomial basis")
        }
        _ => {
            let pts: Vec<Vec<f64>> = rule.points().map(|p| p.to_vec()).collect();
            basis.tabulate(&pts)
        }
    };
    let v: Vec<f64> = rule.points().map(|p| potential.eval(p)).collect::<Result<_>>()?;
    let res = tab.residual(&v);
    let mut m = pair_integral(&res, &tab.value, rule.weights());
    if mu != 0.0 {
        m += pair_integral(&res, &res, rule.weights()) * (I * mu);
    }
    Ok(m)
}

/// `∫_K b_L conj(S b_J) + i μ (S b_L) conj(S b_J)`.
pub fn assemble_volume(
    element: &Element,
    basis: &LocalBasis,
    potential: &PotentialModel,
    mu: f64,
    points: usize,
) -> Result<DMatrix<C64>> {
    volume_from_rule(element, basis, potential, mu, points, None)
}

/// Couplings of a space-like facet: the "before" diagonal block
/// `i ∫ u⁻ conj(s⁻)` and, for internal facets, the "after"-row block
/// `−i ∫ u⁻ conj(s⁺)`.
#[derive(Clone, Debug)]
pub struct SpaceLikeCoupling {
    pub before_before: DMatrix<C64>,
    pub after_before: Option<DMatrix<C64>>,
}

pub fn assemble_spacelike(
    mesh: &SpaceTimeMesh,
    facet: &Facet,
    before: &LocalBasis,
    after: Option<&LocalBasis>,
    points: usize,
) -> Result<SpaceLikeCoupling> {
    let d = mesh.dim();
    let owner = mesh.element(facet.owner);
    let top = face_trace(owner, before, d, true, points, None);
    let before_before = pair_integral(&top.value, &top.value, &top.weights) * I;
    match facet.kind {
        FacetKind::Final => Ok(SpaceLikeCoupling { before_before, after_before: None }),
        FacetKind::SpaceLikeInternal => {
            let after = after.ok_or_else(|| invalid("internal space-like facet needs the later basis"))?;
            let nb = mesh.element(facet.neighbor.ok_or_else(|| invalid("internal facet without neighbor"))?);
            let bottom = face_trace(nb, after, d, false, points, None);
            let ab = pair_integral(&bottom.value, &top.value, &top.weights) * (-I);
            Ok(SpaceLikeCoupling { before_before, after_before: Some(ab) })
        }
        k => Err(invalid(format!("facet kind {k:?} is not space-like"))),
    }
}

/// Time-like internal blocks indexed `[test side][trial side]`, side 0 the
/// owner (low side) and side 1 the neighbor.
pub fn timelike_blocks(
    owner: &FaceTrace,
    neighbor: &FaceTrace,
    alpha: f64,
    beta: f64,
) -> [[DMatrix<C64>; 2]; 2] {
    let w = &owner.weights;
    let sides = [owner, neighbor];
    let sigma = [1.0, -1.0];
    let block = |b: usize, a: usize| {
        let (tb, ta) = (sides[b], sides[a]);
        let (db, da) = (tb.derivative.as_ref().expect("spatial face"), ta.derivative.as_ref().expect("spatial face"));
        let (sa, sb) = (sigma[a], sigma[b]);
        let mut m = pair_integral(&tb.value, da, w) * C64::from(0.5 * sb);
        m -= pair_integral(db, &ta.value, w) * C64::from(0.5 * sb);
        if alpha != 0.0 {
            m += pair_integral(&tb.value, &ta.value, w) * (I * alpha * sa * sb);
        }
        if beta != 0.0 {
            m += pair_integral(db, da, w) * (I * beta * sa * sb);
        }
        m * C64::from(0.5)
    };
    [[block(0, 0), block(0, 1)], [block(1, 0), block(1, 1)]]
}

pub fn assemble_timelike(
    mesh: &SpaceTimeMesh,
    facet: &Facet,
    owner_basis: &LocalBasis,
    neighbor_basis: &LocalBasis,
    alpha: f64,
    beta: f64,
    points: usize,
) -> Result<[[DMatrix<C64>; 2]; 2]> {
    if facet.kind != FacetKind::TimeLikeInternal {
        return Err(invalid(format!("facet kind {:?} is not time-like internal", facet.kind)));
    }
    let nb = facet.neighbor.ok_or_else(|| invalid("internal facet without neighbor"))?;
    let k = facet.normal_axis;
    let a = face_trace(mesh.element(facet.owner), owner_basis, k, true, points, None);
    let b = face_trace(mesh.element(nb), neighbor_basis, k, false, points, None);
    Ok(timelike_blocks(&a, &b, alpha, beta))
}

fn sample(g: &BoundaryFn, trace: &FaceTrace, normal: &[f64]) -> Result<Vec<C64>> {
    trace.points.iter().map(|p| g(p, normal)).collect()
}

/// Matrix and load of a spatial-boundary or initial facet on the trace of
/// its single element; `sign` is the outward direction along the normal
/// axis.
pub fn boundary_terms(
    kind: FacetKind,
    trace: &FaceTrace,
    axis: usize,
    sign: f64,
    weights: (f64, f64, f64, f64),
    problem: &BenchmarkProblem,
) -> Result<(DMatrix<C64>, Vec<C64>)> {
    let (alpha, beta, delta, theta) = weights;
    let n = trace.value.nrows();
    let w = &trace.weights;
    let half = C64::from(0.5);
    let missing = |what: &str| Error::Config(format!("problem '{}' has no {what} data", problem.name));
    if kind == FacetKind::Initial {
        let g: Vec<C64> = trace
            .points
            .iter()
            .map(|p| (problem.data.initial)(&p[..p.len() - 1]).map(|v| I * v))
            .collect::<Result<_>>()?;
        return Ok((DMatrix::zeros(n, n), load_integral(&trace.value, &g, w)));
    }
    let d = trace.points.first().map_or(0, |p| p.len() - 1);
    let mut normal = vec![0.0; d];
    normal[axis] = sign;
    let val = &trace.value;
    let dn = trace.derivative.as_ref().ok_or_else(|| invalid("boundary facet must be spatial"))? * C64::from(sign);
    match kind {
        FacetKind::Dirichlet => {
            let g = problem.data.dirichlet.as_ref().ok_or_else(|| missing("Dirichlet"))?;
            let mut m = pair_integral(val, &dn, w);
            m += pair_integral(val, val, w) * (I * alpha);
            let test = &dn - val * (I * alpha);
            let load = load_integral(&test, &sample(g, trace, &normal)?, w);
            Ok((m * half, load.into_iter().map(|x| x * half).collect()))
        }
        FacetKind::Neumann => {
            let g = problem.data.neumann.as_ref().ok_or_else(|| missing("Neumann"))?;
            let mut m = -pair_integral(&dn, val, w);
            m += pair_integral(&dn, &dn, w) * (I * beta);
            let test = -val - &dn * (I * beta);
            let load = load_integral(&test, &sample(g, trace, &normal)?, w);
            Ok((m * half, load.into_iter().map(|x| x * half).collect()))
        }
        FacetKind::Robin => {
            let g = problem.data.robin.as_ref().ok_or_else(|| missing("Robin"))?;
            let trial = &dn * C64::from(delta) + val * (I * ((1.0 - delta) * theta));
            let test = val - &dn * (I / theta);
            let m = pair_integral(&test, &trial, w);
            let ltest = val * C64::from(delta - 1.0) - &dn * (I * delta / theta);
            let load = load_integral(&ltest, &sample(g, trace, &normal)?, w);
            Ok((m * half, load.into_iter().map(|x| x * half).collect()))
        }
        k => Err(invalid(format!("facet kind {k:?} is not a boundary facet"))),
    }
}

/// Matrix and load contributions of an initial or spatial-boundary facet.
pub fn assemble_boundary(
    mesh: &SpaceTimeMesh,
    facet: &Facet,
    basis: &LocalBasis,
    problem: &BenchmarkProblem,
    stabilization: &StabilizationConfig,
    points: usize,
) -> Result<(DMatrix<C64>, Vec<C64>)> {
    let el = mesh.element(facet.owner);
    let sign = facet.orientation(facet.owner).expect("owner is adjacent");
    let k = facet.normal_axis;
    let high = sign > 0.0;
    let trace = face_trace(el, basis, k, high, points, None);
    let weights = (
        stabilization.alpha(facet.h_fx),
        stabilization.beta(facet.h_fx),
        robin_delta(problem.impedance, el.h_x),
        problem.impedance,
    );
    boundary_terms(facet.kind, &trace, k, sign, weights, problem)
}

/// Linear system of one time slab. `b` holds the initial and boundary
/// loads; the solver adds `R Ψ_{n−1}`.
#[derive(Clone, Debug)]
pub struct SlabSystem {
    pub slab: usize,
    pub k: BlockMatrix,
    /// Rows: this slab's dofs; columns: the previous slab's dofs.
    pub r: Option<BlockMatrix>,
    pub b: Vec<C64>,
    pub dof_map: Vec<Range<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AssemblyOptions {
    pub stabilization: StabilizationConfig,
    /// Gauss points per axis; `None` picks the default for the problem.
    pub quadrature_points: Option<usize>,
}

struct ElementWork {
    volume: DMatrix<C64>,
    /// Indexed `2 * axis + high`.
    faces: Vec<FaceTrace>,
}

/// Builds slab systems for one mesh and problem.
pub struct SlabAssembler<'a> {
    mesh: &'a SpaceTimeMesh,
    problem: &'a BenchmarkProblem,
    stabilization: StabilizationConfig,
    points: usize,
    cache: TableCache,
}

impl<'a> SlabAssembler<'a> {
    pub fn new(mesh: &'a SpaceTimeMesh, problem: &'a BenchmarkProblem, p: usize, options: &AssemblyOptions) -> Result<Self> {
        options.stabilization.validate()?;
        if mesh.dim() != problem.dim() {
            return Err(invalid("mesh and problem dimensions differ"));
        }
        let points = options.quadrature_points.unwrap_or_else(|| default_quadrature_points(p, problem));
        if points == 0 {
            return Err(Error::Config("quadrature needs at least one point per axis".into()));
        }
        Ok(SlabAssembler { mesh, problem, stabilization: options.stabilization, points, cache: TableCache::new() })
    }

    pub fn quadrature_points(&self) -> usize {
        self.points
    }

    pub fn mesh(&self) -> &SpaceTimeMesh {
        self.mesh
    }

    fn local_index(&self, slab: usize) -> HashMap<usize, usize> {
        self.mesh.slabs().elements[slab].iter().enumerate().map(|(i, &e)| (e, i)).collect()
    }

    fn check_bases(&self, slab: usize, bases: &[LocalBasis]) -> Result<usize> {
        let els = &self.mesh.slabs().elements[slab];
        if bases.len() != els.len() {
            return Err(invalid(format!("slab {slab} has {} elements but {} bases", els.len(), bases.len())));
        }
        let bs = bases.first().map_or(0, |b| b.dim());
        if bases.iter().any(|b| b.dim() != bs) {
            return Err(invalid("all bases in a slab must have the same dimension"));
        }
        Ok(bs)
    }

    fn work(&self, slab: usize, bases: &[LocalBasis], volume: bool) -> Result<Vec<ElementWork>> {
        let d = self.mesh.dim();
        let els = &self.mesh.slabs().elements[slab];
        els.par_iter()
            .zip(bases)
            .map(|(&e, basis)| {
                let el = self.mesh.element(e);
                let volume = if volume {
                    let mu = self.stabilization.mu(el);
                    volume_from_rule(el, basis, &self.problem.potential, mu, self.points, Some(&self.cache))?
                } else {
                    DMatrix::zeros(0, 0)
                };
                let faces = (0..=d)
                    .flat_map(|k| [false, true].map(|hi| (k, hi)))
                    .map(|(k, hi)| face_trace(el, basis, k, hi, self.points, Some(&self.cache)))
                    .collect();
                Ok(ElementWork { volume, faces })
            })
            .collect()
    }

    /// Full system of slab `slab`; `previous` are the bases of the slab
    /// below (required for `slab > 0`).
    pub fn assemble(&self, slab: usize, previous: Option<&[LocalBasis]>, bases: &[LocalBasis]) -> Result<SlabSystem> {
        self.build(slab, previous, bases, true)
    }

    /// Loads of slab `slab` only, for reuse of `K` and `R`.
    pub fn assemble_load(&self, slab: usize, bases: &[LocalBasis]) -> Result<Vec<C64>> {
        Ok(self.build(slab, None, bases, false)?.b)
    }

    fn build(&self, slab: usize, previous: Option<&[LocalBasis]>, bases: &[LocalBasis], matrices: bool) -> Result<SlabSystem> {
        let mesh = self.mesh;
        if slab >= mesh.slabs().len() {
            return Err(invalid(format!("slab {slab} out of range")));
        }
        let bs = self.check_bases(slab, bases)?;
        let d = mesh.dim();
        let nel = bases.len();
        let local = self.local_index(slab);
        let work = self.work(slab, bases, matrices)?;
        let mut k = BlockMatrix::new(nel, nel, bs);
        let mut b = vec![C64::new(0.0, 0.0); nel * bs];
        if matrices {
            for (i, w) in work.iter().enumerate() {
                k.add_block(i, i, &w.volume);
                let top = &w.faces[2 * d + 1];
                k.add_block(i, i, &(pair_integral(&top.value, &top.value, &top.weights) * I));
            }
        }
        for &f in &mesh.slabs().lateral_facets[slab] {
            let facet = mesh.facet(f);
            let ax = facet.normal_axis;
            let io = local[&facet.owner];
            match facet.kind {
                FacetKind::TimeLikeInternal => {
                    if !matrices {
                        continue;
                    }
                    let nb = facet.neighbor.ok_or_else(|| invalid("internal facet without neighbor"))?;
                    let ib = local[&nb];
                    let alpha = self.stabilization.alpha(facet.h_fx);
                    let beta = self.stabilization.beta(facet.h_fx);
                    let blocks =
                        timelike_blocks(&work[io].faces[2 * ax + 1], &work[ib].faces[2 * ax], alpha, beta);
                    let ids = [io, ib];
                    for (t, row) in blocks.iter().enumerate() {
                        for (s, m) in row.iter().enumerate() {
                            k.add_block(ids[t], ids[s], m);
                        }
                    }
                }
                kind => {
                    let el = mesh.element(facet.owner);
                    let sign = facet.orientation(facet.owner).expect("owner is adjacent");
                    let trace = &work[io].faces[2 * ax + (sign > 0.0) as usize];
                    let weights = (
                        self.stabilization.alpha(facet.h_fx),
                        self.stabilization.beta(facet.h_fx),
                        robin_delta(self.problem.impedance, el.h_x),
                        self.problem.impedance,
                    );
                    let (m, load) = boundary_terms(kind, trace, ax, sign, weights, self.problem)?;
                    if matrices {
                        k.add_block(io, io, &m);
                    }
                    for (j, v) in load.into_iter().enumerate() {
                        b[io * bs + j] += v;
                    }
                }
            }
        }
        let mut r = None;
        if slab == 0 {
            for (i, w) in work.iter().enumerate() {
                let trace = &w.faces[2 * d];
                let (_, load) = boundary_terms(FacetKind::Initial, trace, d, -1.0, (0.0, 0.0, 0.0, 1.0), self.problem)?;
                for (j, v) in load.into_iter().enumerate() {
                    b[i * bs + j] += v;
                }
            }
        } else if matrices {
            let prev = previous.ok_or_else(|| invalid(format!("slab {slab} needs the previous slab's bases")))?;
            let pbs = self.check_bases(slab - 1, prev)?;
            let prev_els = &mesh.slabs().elements[slab - 1];
            let tops: Vec<FaceTrace> = prev_els
                .par_iter()
                .zip(prev)
                .map(|(&e, basis)| face_trace(mesh.element(e), basis, d, true, self.points, Some(&self.cache)))
                .collect();
            let prev_local: HashMap<usize, usize> = prev_els.iter().enumerate().map(|(i, &e)| (e, i)).collect();
            if pbs != bs {
                return Err(invalid("consecutive slabs must share the basis dimension"));
            }
            let mut rm = BlockMatrix::new(nel, prev_els.len(), bs);
            for &f in &mesh.slabs().bottom_facets[slab] {
                let facet = mesh.facet(f);
                let below = prev_local[&facet.owner];
                let above = local[&facet.neighbor.ok_or_else(|| invalid("space-like facet without neighbor"))?];
                let cur = &work[above].faces[2 * d];
                rm.add_block(above, below, &(pair_integral(&cur.value, &tops[below].value, &cur.weights) * I));
            }
            r = Some(rm);
        }
        let dof_map = (0..nel).map(|i| i * bs..(i + 1) * bs).collect();
        Ok(SlabSystem { slab, k, r, b, dof_map })
    }
}
