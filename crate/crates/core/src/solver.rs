//! Sequential time-slab solution and a monolithic reference solver.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::assembly::{AssemblyOptions, SlabAssembler, SlabSystem};
use crate::basis::{
    build_basis, quasi_trefftz_coefficients, quasi_trefftz_from_coefficients, LocalBasis, SpaceKind,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dense_solve, norm2, BandedLu, BlockMatrix};
use crate::mesh::SpaceTimeMesh;
use crate::potential::PotentialModel;
use crate::problems::BenchmarkProblem;

/// Builds the local basis of every element, in element order. Quasi-Trefftz
/// coefficient matrices are shared between elements with identical
/// potential jets and sizes.
pub fn build_bases(mesh: &SpaceTimeMesh, kind: SpaceKind, p: usize, potential: &PotentialModel) -> Result<Vec<LocalBasis>> {
    if kind != SpaceKind::QuasiTrefftz {
        return mesh.elements().par_iter().map(|el| build_basis(el, kind, p, potential)).collect();
    }
    if p < 1 {
        return Err(invalid("polynomial degree must be at least 1"));
    }
    let d = mesh.dim();
    let order = p.saturating_sub(2);
    let jets = mesh
        .elements()
        .par_iter()
        .map(|el| potential.jet_for_element(el, order))
        .collect::<Result<Vec<_>>>()?;
    let keys: Vec<Vec<u64>> = mesh
        .elements()
        .iter()
        .zip(&jets)
        .map(|(el, jet)| {
            let mut key = vec![el.h_k.to_bits()];
            key.extend(jet.coeffs().iter().flat_map(|c| [c.re.to_bits(), c.im.to_bits()]));
            key
        })
        .collect();
    let mut first: HashMap<&[u64], usize> = HashMap::new();
    for (i, k) in keys.iter().enumerate() {
        first.entry(k.as_slice()).or_insert(i);
    }
    let mut unique: Vec<usize> = first.values().copied().collect();
    unique.sort_unstable();
    let coeffs = unique
        .par_iter()
        .map(|&i| {
            let el = mesh.element(i);
            quasi_trefftz_coefficients(d, p, el.h_k, &jets[i]).map(|c| (i, Arc::new(c)))
        })
        .collect::<Result<HashMap<usize, Arc<_>>>>()?;
    Ok(mesh
        .elements()
        .iter()
        .zip(&keys)
        .map(|(el, k)| quasi_trefftz_from_coefficients(el, p, coeffs[&first[k.as_slice()]].clone()))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub assembly: AssemblyOptions,
    /// Reuse `K` and `R` across slabs when they are provably identical.
    pub reuse_matrices: bool,
    /// Keep the system of the first slab in the solution.
    pub keep_first_system: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { assembly: AssemblyOptions::default(), reuse_matrices: true, keep_first_system: false }
    }
}

/// Coefficients of the discrete solution in every element's local basis.
#[derive(Clone, Debug)]
pub struct DiscreteSolution {
    mesh: Arc<SpaceTimeMesh>,
    kind: SpaceKind,
    degree: usize,
    bases: Vec<LocalBasis>,
    coefficients: Vec<Vec<C64>>,
    slab_residuals: Vec<f64>,
    reused_slabs: usize,
    first_system: Option<SlabSystem>,
}

impl DiscreteSolution {
    /// Wraps externally computed coefficients.
    pub fn from_parts(
        mesh: Arc<SpaceTimeMesh>,
        kind: SpaceKind,
        degree: usize,
        bases: Vec<LocalBasis>,
        coefficients: Vec<Vec<C64>>,
    ) -> Result<Self> {
        if bases.len() != mesh.elements().len() || coefficients.len() != bases.len() {
            return Err(invalid("one basis and one coefficient vector per element are required"));
        }
        if bases.iter().zip(&coefficients).any(|(b, c)| b.dim() != c.len()) {
            return Err(invalid("coefficient vector length differs from the basis dimension"));
        }
        Ok(DiscreteSolution {
            mesh,
            kind,
            degree,
            bases,
            coefficients,
            slab_residuals: Vec::new(),
            reused_slabs: 0,
            first_system: None,
        })
    }

    pub fn mesh(&self) -> &SpaceTimeMesh {
        &self.mesh
    }

    pub fn shared_mesh(&self) -> &Arc<SpaceTimeMesh> {
        &self.mesh
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn bases(&self) -> &[LocalBasis] {
        &self.bases
    }

    pub fn basis(&self, element: usize) -> &LocalBasis {
        &self.bases[element]
    }

    pub fn coefficients(&self, element: usize) -> &[C64] {
        &self.coefficients[element]
    }

    pub fn dofs(&self) -> usize {
        self.coefficients.iter().map(Vec::len).sum()
    }

    /// Relative residual `‖K Ψ − b‖ / ‖b‖` of every slab solve.
    pub fn slab_residuals(&self) -> &[f64] {
        &self.slab_residuals
    }

    /// Number of slabs that reused the factorization of the first slab.
    pub fn reused_slabs(&self) -> usize {
        self.reused_slabs
    }

    pub fn first_system(&self) -> Option<&SlabSystem> {
        self.first_system.as_ref()
    }

    /// All coefficients in the unknown ordering of [`assemble_global`].
    pub fn global_coefficients(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.dofs());
        for slab in &self.mesh.slabs().elements {
            for &e in slab {
                out.extend_from_slice(&self.coefficients[e]);
            }
        }
        out
    }

    /// Value and space gradient of the solution restricted to `element`.
    pub fn evaluate(&self, element: usize, point: &[f64]) -> (C64, Vec<C64>) {
        self.bases[element].combine(&self.coefficients[element], point)
    }
}

fn slab_bases(mesh: &SpaceTimeMesh, bases: &[LocalBasis], slab: usize) -> Vec<LocalBasis> {
    mesh.slabs().elements[slab].iter().map(|&e| bases[e].clone()).collect()
}

fn relative_residual(k: &BlockMatrix, x: &[C64], b: &[C64]) -> (Vec<C64>, f64) {
    let kx = k.mul_vec(x);
    let r: Vec<C64> = b.iter().zip(&kx).map(|(b, a)| b - a).collect();
    let nb = norm2(b);
    let nr = norm2(&r);
    (r, if nb > 0.0 { nr / nb } else { nr })
}

/// Solves with up to three steps of iterative refinement; returns the
/// solution and its relative residual.
fn solve_refined(lu: &BandedLu, k: &BlockMatrix, b: &[C64]) -> (Vec<C64>, f64) {
    let mut x = lu.solve(b);
    let (mut r, mut res) = relative_residual(k, &x, b);
    for _ in 0..3 {
        if res < 1e-13 {
            break;
        }
        let dx = lu.solve(&r);
        let trial: Vec<C64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let (r2, res2) = relative_residual(k, &trial, b);
        if !(res2 < res) {
            break;
        }
        x = trial;
        r = r2;
        res = res2;
    }
    (x, res)
}

/// Whether `K_n` and `R_n` coincide for all slabs.
pub fn matrices_reusable(mesh: &SpaceTimeMesh, problem: &BenchmarkProblem, kind: SpaceKind) -> bool {
    !problem.potential.is_time_dependent()
        && mesh.uniform_slabs()
        && !matches!(kind, SpaceKind::ExponentialTrefftz(_))
}

/// Sequential slab solve.
pub fn solve(
    mesh: Arc<SpaceTimeMesh>,
    problem: &BenchmarkProblem,
    kind: SpaceKind,
    p: usize,
    options: &SolverOptions,
) -> Result<DiscreteSolution> {
    let bases = build_bases(&mesh, kind, p, &problem.potential)?;
    solve_with_bases(mesh, problem, kind, p, bases, options)
}

pub fn solve_with_bases(
    mesh: Arc<SpaceTimeMesh>,
    problem: &BenchmarkProblem,
    kind: SpaceKind,
    p: usize,
    bases: Vec<LocalBasis>,
    options: &SolverOptions,
) -> Result<DiscreteSolution> {
    if bases.len() != mesh.elements().len() {
        return Err(invalid("one basis per element is required"));
    }
    let asm = SlabAssembler::new(&mesh, problem, p, &options.assembly)?;
    let reuse = options.reuse_matrices && matrices_reusable(&mesh, problem, kind);
    let nslabs = mesh.slabs().len();
    let mut coefficients: Vec<Vec<C64>> = vec![Vec::new(); mesh.elements().len()];
    let mut residuals = Vec::with_capacity(nslabs);
    let mut prev_bases: Option<Vec<LocalBasis>> = None;
    let mut prev_x: Vec<C64> = Vec::new();
    let mut cached: Option<(BlockMatrix, BandedLu, BlockMatrix)> = None;
    let mut first_k: Option<(BlockMatrix, BandedLu)> = None;
    let mut first_system = None;
    let mut reused = 0;
    for n in 0..nslabs {
        let sb = slab_bases(&mesh, &bases, n);
        let (k, lu, r, mut b);
        if let (true, Some((ck, clu, cr))) = (reuse, cached.as_ref()) {
            b = asm.assemble_load(n, &sb)?;
            k = ck.clone();
            lu = clu.clone();
            r = Some(cr.clone());
            reused += 1;
        } else {
            let sys = asm.assemble(n, prev_bases.as_deref(), &sb)?;
            if n == 0 && options.keep_first_system {
                first_system = Some(sys.clone());
            }
            let factor = match (&first_k, reuse) {
                (Some((_, flu)), true) => {
                    reused += 1;
                    flu.clone()
                }
                _ => BandedLu::factor_block(&sys.k).map_err(|e| Error::Solver { slab: n, reason: e.to_string() })?,
            };
            if reuse && n == 0 {
                first_k = Some((sys.k.clone(), factor.clone()));
            }
            if reuse {
                if let Some(rm) = &sys.r {
                    cached = Some((sys.k.clone(), factor.clone(), rm.clone()));
                }
            }
            k = sys.k;
            lu = factor;
            r = sys.r;
            b = sys.b;
        }
        if let Some(r) = &r {
            let coupling = r.mul_vec(&prev_x);
            for (bi, ci) in b.iter_mut().zip(coupling) {
                *bi += ci;
            }
        }
        let (x, res) = solve_refined(&lu, &k, &b);
        if !res.is_finite() || x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Solver { slab: n, reason: "non-finite solution".into() });
        }
        residuals.push(res);
        let bs = sb.first().map_or(0, |b| b.dim());
        for (i, &e) in mesh.slabs().elements[n].iter().enumerate() {
            coefficients[e] = x[i * bs..(i + 1) * bs].to_vec();
        }
        prev_x = x;
        prev_bases = Some(sb);
    }
    Ok(DiscreteSolution {
        mesh,
        kind,
        degree: p,
        bases,
        coefficients,
        slab_residuals: residuals,
        reused_slabs: reused,
        first_system,
    })
}

/// Whole space-time system: blocks `K_n` on the diagonal and `−R_n` below
/// it. Unknowns are ordered by slab, then element, then basis member.
#[derive(Clone, Debug)]
pub struct GlobalSystem {
    pub matrix: DMatrix<C64>,
    pub rhs: Vec<C64>,
}

pub fn assemble_global(
    mesh: &SpaceTimeMesh,
    problem: &BenchmarkProblem,
    p: usize,
    bases: &[LocalBasis],
    options: &AssemblyOptions,
) -> Result<GlobalSystem> {
    if bases.len() != mesh.elements().len() {
        return Err(invalid("one basis per element is required"));
    }
    let asm = SlabAssembler::new(mesh, problem, p, options)?;
    let nslabs = mesh.slabs().len();
    let sizes: Vec<usize> = (0..nslabs)
        .map(|n| mesh.slabs().elements[n].iter().map(|&e| bases[e].dim()).sum())
        .collect();
    let offsets: Vec<usize> = sizes.iter().scan(0, |acc, s| Some(std::mem::replace(acc, *acc + s))).collect();
    let total: usize = sizes.iter().sum();
    let mut a = DMatrix::<C64>::zeros(total, total);
    let mut rhs = vec![C64::new(0.0, 0.0); total];
    let mut prev: Option<Vec<LocalBasis>> = None;
    for n in 0..nslabs {
        let sb = slab_bases(mesh, bases, n);
        let sys = asm.assemble(n, prev.as_deref(), &sb)?;
        let o = offsets[n];
        a.view_mut((o, o), (sizes[n], sizes[n])).copy_from(&sys.k.to_dense());
        if let Some(r) = &sys.r {
            let po = offsets[n - 1];
            let rd = -r.to_dense();
            a.view_mut((o, po), (sizes[n], sizes[n - 1])).copy_from(&rd);
        }
        rhs[o..o + sizes[n]].copy_from_slice(&sys.b);
        prev = Some(sb);
    }
    Ok(GlobalSystem { matrix: a, rhs })
}

/// Assembles the global system and solves it densely.
pub fn solve_monolithic(
    mesh: Arc<SpaceTimeMesh>,
    problem: &BenchmarkProblem,
    kind: SpaceKind,
    p: usize,
    options: &SolverOptions,
) -> Result<DiscreteSolution> {
    let bases = build_bases(&mesh, kind, p, &problem.potential)?;
    let sys = assemble_global(&mesh, problem, p, &bases, &options.assembly)?;
    let x = dense_solve(&sys.matrix, &sys.rhs).map_err(|e| Error::Solver { slab: 0, reason: e.to_string() })?;
    let mut coefficients = vec![Vec::new(); mesh.elements().len()];
    let mut o = 0;
    for slab in &mesh.slabs().elements {
        for &e in slab {
            let m = bases[e].dim();
            coefficients[e] = x[o..o + m].to_vec();
            o += m;
        }
    }
    DiscreteSolution::from_parts(mesh, kind, p, bases, coefficients)
}

/// System of the first slab, e.g. for conditioning studies.
pub fn first_slab_system(
    mesh: &SpaceTimeMesh,
    problem: &BenchmarkProblem,
    kind: SpaceKind,
    p: usize,
    options: &AssemblyOptions,
) -> Result<SlabSystem> {
    let bases = build_bases(mesh, kind, p, &problem.potential)?;
    let asm = SlabAssembler::new(mesh, problem, p, options)?;
    asm.assemble(0, None, &slab_bases(mesh, &bases, 0))
}
