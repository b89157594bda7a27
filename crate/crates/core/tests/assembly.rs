use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qtdg::analysis::dg_norm;
use qtdg::assembly::{
    assemble_volume, load_integral, pair_integral, AlphaRule, AssemblyOptions, BetaRule, MuRule, StabilizationConfig,
};
use qtdg::basis::{build_basis, SpaceKind};
use qtdg::mesh::{build_cartesian_mesh, BoundaryCondition};
use qtdg::polyalg::gauss_legendre;
use qtdg::problems::{make_problem, BenchmarkProblem, ExactSolution, ProblemParams};
use qtdg::solver::{assemble_global, build_bases, DiscreteSolution};

fn random_c64(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Tensor Gauss rule on a box, built directly from the 1D nodes.
fn box_rule(bounds: &[(f64, f64)], n: usize) -> Vec<(Vec<f64>, f64)> {
    let gl = gauss_legendre(n);
    let mut out = vec![(Vec::new(), 1.0)];
    for &(a, b) in bounds {
        let mut next = Vec::new();
        for (p, w) in &out {
            for (x, wx) in gl.0.iter().zip(&gl.1) {
                let mut q = p.clone();
                q.push(0.5 * (a + b) + 0.5 * (b - a) * x);
                next.push((q, w * wx * 0.5 * (b - a)));
            }
        }
        out = next;
    }
    out
}

#[test]
fn volume_block_matches_pointwise_oracle() {
    let problem = make_problem("harmonic", &ProblemParams::new()).unwrap();
    let mesh = build_cartesian_mesh(&problem.domain, &[12], 4).unwrap();
    let el = mesh.element(17);
    let mu = 0.013;
    for kind in [SpaceKind::QuasiTrefftz, SpaceKind::FullPolynomial] {
        let basis = build_basis(el, kind, 3, &problem.potential).unwrap();
        let got = assemble_volume(el, &basis, &problem.potential, mu, 8).unwrap();
        let rule = box_rule(&el.bounds, 12);
        let n = basis.dim();
        let mut want = DMatrix::<C64>::zeros(n, n);
        for (pt, w) in &rule {
            let v = problem.potential.eval(pt).unwrap();
            let ev: Vec<_> = (0..n).map(|i| basis.evaluate(i, pt, v)).collect();
            for j in 0..n {
                for l in 0..n {
                    let s_test = ev[j].schrodinger_residual.conj();
                    want[(j, l)] += w * (ev[l].value * s_test + C64::i() * mu * ev[l].schrodinger_residual * s_test);
                }
            }
        }
        let scale = want.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!((got - &want).iter().all(|c| c.norm() <= 1e-12 * scale), "{kind:?}");
    }
}

#[test]
fn pair_and_load_integrals_match_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (nt, nl, nq) = (3, 4, 5);
    let test = DMatrix::from_fn(nt, nq, |_, _| random_c64(&mut rng));
    let trial = DMatrix::from_fn(nl, nq, |_, _| random_c64(&mut rng));
    let w: Vec<f64> = (0..nq).map(|_| rng.gen_range(0.0..1.0)).collect();
    let g: Vec<C64> = (0..nq).map(|_| random_c64(&mut rng)).collect();
    let m = pair_integral(&test, &trial, &w);
    let b = load_integral(&test, &g, &w);
    for j in 0..nt {
        let mut bj = C64::new(0.0, 0.0);
        for q in 0..nq {
            bj += w[q] * g[q] * test[(j, q)].conj();
        }
        assert!((b[j] - bj).norm() < 1e-14);
        for l in 0..nl {
            let s: C64 = (0..nq).map(|q| w[q] * trial[(l, q)] * test[(j, q)].conj()).sum();
            assert!((m[(j, l)] - s).norm() < 1e-14);
        }
    }
}

fn harmonic_with(bc: BoundaryCondition) -> BenchmarkProblem {
    let base = make_problem("harmonic", &ProblemParams::new()).unwrap();
    let domain = base.domain.clone().with_all_conditions(bc);
    BenchmarkProblem::from_exact("harmonic", domain, base.potential, ExactSolution::Harmonic { omega: 10.0, n: 2 }, 2.0)
        .unwrap()
}

fn stabilizations() -> Vec<StabilizationConfig> {
    vec![
        StabilizationConfig::default(),
        StabilizationConfig { mu: MuRule::MaxH, ..StabilizationConfig::default() },
        StabilizationConfig { alpha: AlphaRule::Constant(3.0), beta: BetaRule::Zero, mu: MuRule::Zero },
    ]
}

/// `Im A(w, w)` from the assembled global matrix and `|||w|||²` from the
/// analysis module, for random coefficients.
fn coercivity_gap(problem: &BenchmarkProblem, cells: &[usize], slabs: usize, kind: SpaceKind, p: usize, stab: StabilizationConfig, seed: u64) -> (f64, f64) {
    let mesh = Arc::new(build_cartesian_mesh(&problem.domain, cells, slabs).unwrap());
    let bases = build_bases(&mesh, kind, p, &problem.potential).unwrap();
    let points = p + 3;
    let opts = AssemblyOptions { stabilization: stab, quadrature_points: Some(points) };
    let global = assemble_global(&mesh, problem, p, &bases, &opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<Vec<C64>> = bases.iter().map(|b| (0..b.dim()).map(|_| random_c64(&mut rng)).collect()).collect();
    let sol = DiscreteSolution::from_parts(mesh, kind, p, bases, coeffs).unwrap();
    let c = sol.global_coefficients();
    let mc = &global.matrix * nalgebra::DVector::from_vec(c.clone());
    let form: C64 = c.iter().zip(mc.iter()).map(|(a, b)| a.conj() * b).sum();
    let norm = dg_norm(&sol, problem, &stab, points).unwrap();
    ((form.im - norm * norm).abs(), norm * norm)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn imaginary_part_of_form_is_dg_norm(
        bc in prop_oneof![
            Just(BoundaryCondition::Dirichlet),
            Just(BoundaryCondition::Neumann),
            Just(BoundaryCondition::Robin),
        ],
        fine in any::<bool>(),
        quasi in any::<bool>(),
        p in 1usize..=3,
        stab in 0usize..3,
        seed in any::<u64>(),
    ) {
        let problem = harmonic_with(bc);
        let n = if fine { 4 } else { 2 };
        let kind = if quasi { SpaceKind::QuasiTrefftz } else { SpaceKind::FullPolynomial };
        let (gap, nsq) = coercivity_gap(&problem, &[n], n, kind, p, stabilizations()[stab], seed);
        prop_assert!(gap <= 1e-10 * nsq, "gap {gap:e} norm² {nsq:e}");
    }
}

#[test]
fn coercivity_in_two_space_dimensions() {
    let problem = make_problem("tanh_time_dependent", &ProblemParams::new()).unwrap();
    for kind in [SpaceKind::QuasiTrefftz, SpaceKind::FullPolynomial] {
        for stab in stabilizations() {
            let (gap, nsq) = coercivity_gap(&problem, &[2, 2], 2, kind, 2, stab, 11);
            assert!(gap <= 1e-10 * nsq, "{kind:?} {stab:?}: {gap:e}");
        }
    }
}

#[test]
fn refined_quadrature_leaves_polynomial_systems_unchanged() {
    let mut params = ProblemParams::new();
    params.insert("dim".into(), 1.0);
    let problem = make_problem("constant", &params).unwrap();
    let mesh = build_cartesian_mesh(&problem.domain, &[3], 2).unwrap();
    let p = 3;
    let bases = build_bases(&mesh, SpaceKind::FullPolynomial, p, &problem.potential).unwrap();
    let at = |points| {
        let opts = AssemblyOptions { quadrature_points: Some(points), ..AssemblyOptions::default() };
        assemble_global(&mesh, &problem, p, &bases, &opts).unwrap()
    };
    let (a, b) = (at(p + 2), at(p + 8));
    let scale = b.matrix.iter().map(|c| c.norm()).fold(0.0, f64::max);
    assert!((&a.matrix - &b.matrix).iter().all(|c| c.norm() <= 1e-12 * scale));
    assert!(a.rhs.iter().zip(&b.rhs).all(|(x, y)| (x - y).norm() <= 1e-12 * scale));
}
