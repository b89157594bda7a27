use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use qtdg::basis::{
    build_basis, build_full_poly_basis, build_quasi_trefftz_basis, constraint_matrix, monomial_count,
    quasi_trefftz_dim, residual_jet, span_residual, taylor_of_exact_solution, SpaceKind,
};
use qtdg::mesh::{build_cartesian_mesh, build_cartesian_mesh_from_nodes, Element, SpaceTimeDomain};
use qtdg::polyalg::gauss_rule;
use qtdg::potential::PotentialModel;
use qtdg::problems::{make_problem, ProblemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn element_at(bounds: &[(f64, f64)], t: (f64, f64)) -> Element {
    let dom = SpaceTimeDomain::new(bounds, t.1).unwrap();
    let nodes = bounds.iter().map(|&(a, b)| vec![a, b]).collect();
    // The second slab is the element of interest.
    let mesh = build_cartesian_mesh_from_nodes(&dom, nodes, vec![0.0, t.0, t.1]).unwrap();
    mesh.element(1).clone()
}

fn smooth_potentials(d: usize) -> Vec<PotentialModel> {
    if d == 1 {
        vec![
            PotentialModel::Zero,
            PotentialModel::HarmonicOscillator { omega: 10.0 },
            PotentialModel::Reflectionless { a: 1.0 },
            PotentialModel::Morse { depth: 8.0, alpha: 4.0 },
            PotentialModel::SquareWell { depth: 20.0, half_width: 0.5f64.sqrt() },
        ]
    } else {
        vec![
            PotentialModel::Zero,
            PotentialModel::HarmonicOscillator { omega: 3.0 },
            PotentialModel::RationalSingular,
            PotentialModel::TanhTimeDependent,
        ]
    }
}

#[test]
fn quasi_trefftz_members_annihilate_low_order_residual_derivatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for d in 1..=2 {
        for pot in smooth_potentials(d) {
            for p in 2..=5 {
                let lo: Vec<(f64, f64)> = (0..d)
                    .map(|_| {
                        let a = rng.gen_range(0.15..0.6);
                        (a, a + 0.1)
                    })
                    .collect();
                let t0 = rng.gen_range(0.1..0.8);
                let el = element_at(&lo, (t0, t0 + 0.1));
                let basis = build_quasi_trefftz_basis(&el, p, &pot).unwrap();
                let vjet = pot.jet_at(&el.center, p).unwrap();
                for j in 0..basis.dim() {
                    let member = basis.member(j).unwrap();
                    let scale = member.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
                    let r = residual_jet(&member, &vjet).unwrap();
                    for (m, c) in r.monomials().indices().iter().zip(r.coeffs()) {
                        // Compare D^m(S b) in the scaled variables, where coefficients are O(1).
                        let scaled = c * el.h_k.powi(m.order() as i32 + 2) * m.factorial();
                        assert!(
                            scaled.norm() <= 1e-12 * scale,
                            "d={d} p={p} {} member {j} index {m:?}: {}",
                            pot.name(),
                            scaled.norm()
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn dimension_counts() {
    assert_eq!(quasi_trefftz_dim(1, 7), 15);
    assert_eq!(monomial_count(2, 7), 36);
    assert_eq!(monomial_count(2, 7) - quasi_trefftz_dim(1, 7), 21);
    assert_eq!(quasi_trefftz_dim(2, 5), 36);
    for d in 1..=2 {
        let center = vec![0.3; d + 1];
        let pot = if d == 1 {
            PotentialModel::HarmonicOscillator { omega: 2.0 }
        } else {
            PotentialModel::TanhTimeDependent
        };
        for p in 1..=6 {
            let vjet = pot.jet_at(&center, p).unwrap();
            let a = constraint_matrix(d, p, 0.2, &vjet).unwrap();
            let rank = if a.nrows() == 0 { 0 } else { a.rank(1e-10) };
            assert_eq!(monomial_count(d + 1, p) - rank, quasi_trefftz_dim(d, p), "d={d} p={p}");
        }
    }
}

#[test]
fn gram_matrices_are_nonsingular() {
    for d in 1..=2 {
        let el = element_at(&vec![(0.2, 0.3); d], (0.4, 0.5));
        for pot in smooth_potentials(d) {
            for p in 1..=4 {
                for kind in [SpaceKind::FullPolynomial, SpaceKind::QuasiTrefftz] {
                    let b = build_basis(&el, kind, p, &pot).unwrap();
                    let rule = gauss_rule(&el.bounds, p + 2);
                    let pts: Vec<Vec<f64>> = rule.points().map(|x| x.to_vec()).collect();
                    let tab = b.tabulate(&pts);
                    let w = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                        rule.len(),
                        rule.weights().iter().map(|&w| C64::new(w, 0.0)),
                    ));
                    let gram = &tab.value * w * tab.value.adjoint();
                    let sv = gram.singular_values();
                    assert!(sv.min() > 0.0 && sv.min() / sv.max() > 1e-14, "d={d} p={p} {kind:?}");
                }
            }
        }
    }
}

#[test]
fn taylor_polynomials_of_exact_solutions_lie_in_the_span() {
    for name in ["harmonic", "reflectionless", "morse", "rational", "tanh_time_dependent"] {
        let prob = make_problem(name, &ProblemParams::new()).unwrap();
        let d = prob.dim();
        let cells = vec![8; d];
        let mesh = build_cartesian_mesh(&prob.domain, &cells, 4).unwrap();
        let exact = prob.exact.as_ref().unwrap();
        for p in 1..=4 {
            let el = mesh.element(mesh.elements().len() / 2 + 1);
            let basis = build_quasi_trefftz_basis(el, p, &prob.potential).unwrap();
            // The order-p Taylor polynomial lies in QT^p.
            let taylor = taylor_of_exact_solution(exact, el, p).unwrap();
            let r = span_residual(&basis, &taylor.coeffs).unwrap();
            assert!(r < 1e-10, "{name} p={p}: {r}");
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let el = element_at(&[(0.2, 0.5)], (0.1, 0.4));
    let b = build_full_poly_basis(&el, 3).unwrap();
    let coeffs: Vec<C64> = (0..b.dim()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let p = [0.33, 0.21];
    let (_, g) = b.combine(&coeffs, &p);
    let h = 1e-5;
    let f = |x: f64| b.combine(&coeffs, &[x, p[1]]).0;
    let fd = (f(p[0] + h) - f(p[0] - h)) / (2.0 * h);
    assert!((fd - g[0]).norm() < 1e-7 * g[0].norm(), "{fd} vs {}", g[0]);
}
