use num_complex::Complex64 as C64;
use qtdg::problems::{make_problem, pde_residual, ExactSolution, ProblemParams};
use qtdg::polyalg::gauss_rule_composite;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_interior(rng: &mut ChaCha8Rng, bounds: &[(f64, f64)], t_final: f64) -> Vec<f64> {
    let mut p: Vec<f64> = bounds.iter().map(|&(a, b)| a + (b - a) * rng.gen_range(0.02..0.98)).collect();
    p.push(t_final * rng.gen_range(0.0..1.0));
    p
}

#[test]
fn every_builtin_solution_solves_the_equation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in ["harmonic", "reflectionless", "morse", "square_well", "rational", "tanh_time_dependent", "free", "constant"] {
        let prob = make_problem(name, &ProblemParams::new()).unwrap();
        let exact = prob.exact.as_ref().unwrap();
        for _ in 0..100 {
            let mut p = random_interior(&mut rng, prob.domain.space_box(), prob.domain.final_time());
            if name == "square_well" && (p[0].abs() - 0.5f64.sqrt()).abs() < 1e-9 {
                p[0] += 1e-3;
            }
            let (res, scale) = pde_residual(exact, &prob.potential, &p).unwrap();
            assert!(res.norm() < 1e-8 * scale.max(1e-300), "{name} at {p:?}: residual {res} (scale {scale})");
        }
    }
}

#[test]
fn reflectionless_solution_for_other_depths() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for a in [0.5, 1.0, 2.0] {
        let mut params = ProblemParams::new();
        params.insert("a".into(), a);
        let prob = make_problem("reflectionless", &params).unwrap();
        for _ in 0..20 {
            let p = random_interior(&mut rng, prob.domain.space_box(), 1.0);
            let (res, scale) = pde_residual(prob.exact.as_ref().unwrap(), &prob.potential, &p).unwrap();
            assert!(res.norm() < 1e-8 * scale);
        }
    }
}

#[test]
fn square_well_solution_is_c1_at_the_well_edges() {
    let prob = make_problem("square_well", &ProblemParams::new()).unwrap();
    let exact = prob.exact.as_ref().unwrap();
    let edge = 0.5f64.sqrt();
    for x0 in [-edge, edge] {
        for t in [0.0, 0.37, 1.0] {
            let eps = 1e-13;
            let (vl, gl) = exact.value_and_gradient(&[x0 - eps, t]).unwrap();
            let (vr, gr) = exact.value_and_gradient(&[x0 + eps, t]).unwrap();
            assert!((vl - vr).norm() < 1e-12, "value jump {} at {x0}", (vl - vr).norm());
            assert!((gl[0] - gr[0]).norm() < 1e-11, "derivative jump {} at {x0}", (gl[0] - gr[0]).norm());
        }
    }
}

#[test]
fn harmonic_energy_is_time_invariant() {
    let prob = make_problem("harmonic", &ProblemParams::new()).unwrap();
    let exact = prob.exact.as_ref().unwrap();
    let rule = gauss_rule_composite(&[(-3.0, 3.0)], 10, &[60]);
    let energy = |t: f64| -> f64 {
        0.5 * rule
            .points()
            .zip(rule.weights())
            .map(|(x, w)| w * exact.value(&[x[0], t]).unwrap().norm_sqr())
            .sum::<f64>()
    };
    let e0 = energy(0.0);
    for t in [0.1, 0.33, 0.5, 0.9, 1.0] {
        assert!((energy(t) - e0).abs() < 1e-10);
    }
}

#[test]
fn harmonic_jet_matches_finite_differences() {
    let exact = ExactSolution::Harmonic { omega: 10.0, n: 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = [rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0)];
    let jet = exact.jet_at(&c, 4).unwrap();
    let f = |x: f64, t: f64| exact.value(&[x, t]).unwrap();
    let dxx = |h: f64| (f(c[0] + h, c[1]) - 2.0 * f(c[0], c[1]) + f(c[0] - h, c[1])) / (h * h);
    let dxt = |h: f64| {
        (f(c[0] + h, c[1] + h) - f(c[0] + h, c[1] - h) - f(c[0] - h, c[1] + h) + f(c[0] - h, c[1] - h))
            / (4.0 * h * h)
    };
    // Two Richardson levels remove the h^2 and h^4 error terms.
    let extrapolate = |d: &dyn Fn(f64) -> C64| {
        let h = 0.02;
        let r1 = |h: f64| (d(h / 2.0) * 4.0 - d(h)) / 3.0;
        (r1(h / 2.0) * 16.0 - r1(h)) / 15.0
    };
    let jxx = jet.derivative(&qtdg::polyalg::MultiIndex::new(&[2, 0]));
    let jxt = jet.derivative(&qtdg::polyalg::MultiIndex::new(&[1, 1]));
    let exx = extrapolate(&dxx);
    let ext = extrapolate(&dxt);
    assert!((exx - jxx).norm() < 1e-6 * jxx.norm(), "{exx} {jxx}");
    assert!((ext - jxt).norm() < 1e-6 * jxt.norm(), "{ext} {jxt}");
}
