use irs_solvers::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_psd(rng: &mut impl Rng, n: usize, rank: usize) -> DMatrix<f64> {
    let f = DMatrix::from_fn(n, rank, |_, _| rng.gen_range(-1.0..1.0));
    &f * f.transpose()
}

/// Long-run projected gradient on `min ½xᵀPx + qᵀx` over a box.
fn projected_gradient(p: &DMatrix<f64>, q: &DVector<f64>, lo: f64, hi: f64) -> DVector<f64> {
    let lipschitz = p.clone().symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lipschitz;
    let mut x = DVector::from_element(q.len(), 0.5 * (lo + hi));
    for _ in 0..200_000 {
        let g = p * &x + q;
        let next = (&x - g * step).map(|v| v.clamp(lo, hi));
        let moved = (&next - &x).amax();
        x = next;
        if moved < 1e-15 {
            break;
        }
    }
    x
}

#[test]
fn box_qp_matches_projected_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let n = 6;
        let p = random_psd(&mut rng, n, 4) + DMatrix::identity(n, n) * 0.05;
        let q = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let mut prob = ConvexQP::new(n);
        prob.objective = Quadratic { form: QuadForm::dense(p.clone()).unwrap(), linear: q.clone(), constant: 0.0 };
        for i in 0..n {
            prob.push(Constraint::Bound { index: i, lower: -1.0, upper: 1.0 });
        }
        let sol = solve_convex(&prob, 1e-10).unwrap().optimal().unwrap();
        let oracle = projected_gradient(&p, &q, -1.0, 1.0);
        assert!((&sol.x - &oracle).amax() < 1e-5, "{} vs {}", sol.x, oracle);
        assert!(prob.max_violation(&sol.x) <= 1e-10);
    }
}

#[test]
fn quadratic_constraints_keep_optimality_conditions() {
    // min ‖x − c‖² over the unit ball: solution c/‖c‖ when ‖c‖ > 1.
    let c = DVector::from_vec(vec![3.0, -1.0, 2.0]);
    let mut prob = ConvexQP::new(3);
    prob.objective = Quadratic {
        form: QuadForm::scaled_identity(vec![0, 1, 2], 2.0).unwrap(),
        linear: -2.0 * &c,
        constant: c.norm_squared(),
    };
    prob.push(Constraint::Quadratic(Quadratic {
        form: QuadForm::scaled_identity(vec![0, 1, 2], 2.0).unwrap(),
        linear: DVector::zeros(3),
        constant: -1.0,
    }));
    let sol = solve_convex(&prob, 1e-11).unwrap().optimal().unwrap();
    let expected = &c / c.norm();
    assert!((&sol.x - expected).amax() < 1e-6);
}

/// Random SDP with a trace row, so `bᵀy + T·λ_min(C − Σ y_i A_i)` is a valid
/// lower bound for any multiplier vector.
#[test]
fn random_sdp_matches_dual_certificate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let n = 8;
        let trace = 8.0;
        let c = {
            let a: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            0.5 * (&a + a.transpose())
        };
        let mut prob = SDProblem::new(n, SymMatrix::dense(c.clone()));
        prob.push(SymMatrix::dense(DMatrix::identity(n, n)), Sense::Equal, trace);
        let x0 = DMatrix::<f64>::identity(n, n);
        for _ in 0..4 {
            let a = {
                let m: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                0.5 * (&m + m.transpose())
            };
            let rhs = (&a * &x0).trace();
            prob.push(SymMatrix::dense(a), Sense::Equal, rhs);
        }
        let f = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let rhs = (&f * f.transpose()).trace() - 1.0;
        prob.push(SymMatrix::low_rank(f), Sense::GreaterEqual, rhs);

        let sol = solve_sdp(&prob, 1e-9).unwrap().optimal().unwrap();
        let mut z = c.clone();
        for (row, yi) in prob.constraints.iter().zip(sol.y.iter()) {
            z -= row.matrix.to_dense() * *yi;
        }
        let ineq_dual = sol.y[prob.constraints.len() - 1];
        assert!(ineq_dual >= -1e-9);
        let lmin = z.symmetric_eigenvalues().min();
        let bound: f64 = prob.constraints.iter().zip(sol.y.iter()).map(|(r, y)| r.rhs * y).sum::<f64>()
            + trace * lmin;
        let obj = (&c * &sol.x).trace();
        assert!(bound <= obj + 1e-7);
        assert!(obj - bound < 1e-5 * (1.0 + obj.abs()), "obj {obj} bound {bound}");
        assert!(prob.max_violation(&sol.x) < 1e-7);
        let xmin = sol.x.clone().symmetric_eigenvalues().min();
        assert!(xmin >= -1e-9 * sol.x.trace());
    }
}

#[test]
fn unit_modulus_relaxation_of_rank_one_problem() {
    // max |aᴴv|² over |v_i| = 1 relaxes to max tr(a aᴴ V), diag V = 1, whose
    // optimum (Σ|a_i|)² is attained by aligned phases.
    let a = DMatrix::from_column_slice(
        3,
        1,
        &[Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.8), Complex64::new(0.0, -1.2)],
    );
    let outer = &a * a.adjoint();
    let embedded = complex_embed(&outer) * -0.5;
    let mut prob = SDProblem::new(6, SymMatrix::dense(embedded));
    for i in 0..3 {
        prob.push(SymMatrix::sparse(6, [(i, i, 0.5), (i + 3, i + 3, 0.5)]), Sense::Equal, 1.0);
    }
    let sol = solve_sdp(&prob, 1e-10).unwrap().optimal().unwrap();
    let v = hermitian_from_embedding(&sol.x);
    let value = (a.adjoint() * &v * &a)[(0, 0)].re;
    let expected = a.iter().map(|z| z.norm()).sum::<f64>().powi(2);
    assert!((value - expected).abs() < 1e-6 * expected);
}

#[test]
fn solvers_are_deterministic() {
    let mut prob = SDProblem::new(3, SymMatrix::dense(DMatrix::from_fn(3, 3, |i, j| (i + j) as f64)));
    prob.push(SymMatrix::dense(DMatrix::identity(3, 3)), Sense::Equal, 1.0);
    let a = solve_sdp(&prob, 1e-9).unwrap();
    let b = solve_sdp(&prob, 1e-9).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.y, b.y);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn embed_round_trip(vals in proptest::collection::vec(-10.0f64..10.0, 12)) {
        let h = DMatrix::from_fn(2, 3, |i, j| Complex64::new(vals[2 * (3 * i + j)], vals[2 * (3 * i + j) + 1]));
        prop_assert_eq!(complex_extract(&complex_embed(&h)), h);
    }

    #[test]
    fn embedding_preserves_hermitian_trace_products(
        vals in proptest::collection::vec(-2.0f64..2.0, 16),
    ) {
        let a = DMatrix::from_fn(2, 2, |i, j| Complex64::new(vals[4 * i + 2 * j], vals[4 * i + 2 * j + 1]));
        let b = DMatrix::from_fn(2, 2, |i, j| Complex64::new(vals[8 + 4 * i + 2 * j], vals[9 + 4 * i + 2 * j]));
        let h = &a + a.adjoint();
        let v = &b * b.adjoint();
        let complex = (&h * &v).trace().re;
        let real = (complex_embed(&h) * complex_embed(&v)).trace();
        prop_assert!((real - 2.0 * complex).abs() < 1e-9 * (1.0 + complex.abs()));
    }

    #[test]
    fn box_qp_solution_is_feasible_and_no_worse_than_vertices(
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3;
        let p = random_psd(&mut rng, n, 2);
        let q = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let mut prob = ConvexQP::new(n);
        prob.objective = Quadratic { form: QuadForm::dense(p).unwrap(), linear: q, constant: 0.0 };
        for i in 0..n {
            prob.push(Constraint::Bound { index: i, lower: 0.0, upper: 1.0 });
        }
        let sol = solve_convex(&prob, 1e-9).unwrap().optimal().unwrap();
        prop_assert!(prob.max_violation(&sol.x) == 0.0);
        for mask in 0..(1 << n) {
            let vx = DVector::from_fn(n, |i, _| ((mask >> i) & 1) as f64);
            prop_assert!(sol.objective <= prob.objective_value(&vx) + 1e-8);
        }
    }
}
