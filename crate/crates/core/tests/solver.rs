use nalgebra::DVector;
use rbocp::oracle::double_integrator;
use rbocp::presets::{foot_contact_problem, reaching_problem, FOOT_Q_NOMINAL, FOOT_TORQUE_LIMIT};
use rbocp::{
    builtin, chain, eval_constraints, rnea, solve, Horizon, NewtonSolver, OcpProblem, QuadraticCost, SolveStatus,
    SolverIterate, SolverOptions,
};

fn integrator_problem(stages: usize) -> OcpProblem {
    let mut cost = QuadraticCost::zeros(1, 0);
    cost.q_weight[(0, 0)] = 2.0;
    cost.v_weight[(0, 0)] = 0.5;
    cost.a_weight[(0, 0)] = 0.1;
    cost.u_weight[(0, 0)] = 0.01;
    cost.terminal_q_weight[(0, 0)] = 5.0;
    cost.terminal_v_weight[(0, 0)] = 1.0;
    cost.q_ref[0] = -0.3;
    OcpProblem::unconstrained(double_integrator(1.5), Horizon::new(1.0, stages).unwrap(), cost).unwrap()
}

fn scalar(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

#[test]
fn linear_quadratic_problem_converges_in_one_step() {
    let problem = integrator_problem(20);
    let res = solve(&problem, &scalar(1.0), &scalar(0.5), SolverOptions::default()).unwrap();
    assert_eq!(res.status, SolveStatus::Converged);
    assert_eq!(res.trace.steps(), 1);
    assert!(res.trace.final_error().unwrap() < 1e-10);
}

#[test]
fn converged_iterate_is_a_fixed_point() {
    let problem = integrator_problem(10);
    let (q0, v0) = (scalar(0.2), scalar(-1.0));
    let res = solve(&problem, &q0, &v0, SolverOptions::default()).unwrap();
    let solver = NewtonSolver::new(&problem, SolverOptions::default()).unwrap();
    let mut it = res.iterate.clone();
    solver.newton_iteration(&mut it, &q0, &v0, 0).unwrap();
    for i in 0..problem.stages() {
        let d = it.stage_vector(i) - res.iterate.stage_vector(i);
        assert!(d.amax() < 1e-12, "stage {i}: {}", d.amax());
    }
}

#[test]
fn unconstrained_steps_are_full() {
    let problem = reaching_problem(builtin("double_pendulum").unwrap(), 0.5, 10).unwrap();
    let res = solve(&problem, &DVector::from_vec(vec![0.3, -0.2]), &DVector::zeros(2), SolverOptions::default()).unwrap();
    assert_eq!(res.status, SolveStatus::Converged);
    for r in &res.trace.records[..res.trace.records.len() - 1] {
        assert_eq!((r.alpha_primal, r.alpha_dual), (1.0, 1.0));
    }
}

#[test]
fn resting_at_gravity_compensated_target_is_immediate() {
    let tree = builtin("double_pendulum").unwrap();
    let q_ref = DVector::from_vec(vec![0.4, -0.9]);
    let mut cost = QuadraticCost::zeros(2, 0);
    cost.q_weight.fill_with_identity();
    cost.v_weight.fill_with_identity();
    cost.u_weight.fill_with_identity();
    cost.terminal_q_weight.fill_with_identity();
    cost.q_ref = q_ref.clone();
    cost.u_ref = rnea(&tree, &q_ref, &DVector::zeros(2), &DVector::zeros(2), &[]).unwrap();
    let problem = OcpProblem::unconstrained(tree, Horizon::new(1.0, 20).unwrap(), cost).unwrap();
    let res = solve(&problem, &q_ref, &DVector::zeros(2), SolverOptions::default()).unwrap();
    assert_eq!(res.status, SolveStatus::Converged);
    assert!(res.trace.steps() <= 5);
    assert!(res.trace.final_error().unwrap() < 1e-8);
}

#[test]
fn single_stage_pendulum_matches_brute_force() {
    let tree = builtin("pendulum").unwrap();
    let mut cost = QuadraticCost::zeros(1, 0);
    cost.u_weight[(0, 0)] = 0.3;
    cost.terminal_v_weight[(0, 0)] = 2.0;
    cost.v_ref[0] = 1.0;
    let problem = OcpProblem::unconstrained(tree.clone(), Horizon::new(0.1, 1).unwrap(), cost).unwrap();
    let (q0, v0) = (scalar(0.7), scalar(-0.4));
    let res = solve(&problem, &q0, &v0, SolverOptions::default()).unwrap();
    assert_eq!(res.status, SolveStatus::Converged);

    // Only a_0 is free: q_1 is pinned and v_1 = v̄ + dt·a_0.
    let dt = 0.1;
    let objective = |a: f64| {
        let u = rnea(&tree, &q0, &v0, &scalar(a), &[]).unwrap()[0];
        let v1 = v0[0] + dt * a;
        dt * 0.3 * u * u / 2.0 + 2.0 * (v1 - 1.0).powi(2) / 2.0
    };
    let mut best = (-50..=50)
        .map(f64::from)
        .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
        .unwrap();
    let mut width = 1.0;
    while width > 1e-12 {
        let (lo, hi) = (best - width, best + width);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let (c, d) = (b - g * (b - a), a + g * (b - a));
            if objective(c) < objective(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best = 0.5 * (a + b);
        width *= 1e-3;
    }
    assert!((res.iterate.stages[0].a[0] - best).abs() < 1e-6, "{} vs {best}", res.iterate.stages[0].a[0]);
}

#[test]
fn contact_problem_converges_with_interior_slacks() {
    let problem = foot_contact_problem(0.5, 25).unwrap();
    let q0 = DVector::from_column_slice(&FOOT_Q_NOMINAL);
    let v0 = DVector::zeros(4);
    let solver = NewtonSolver::new(&problem, SolverOptions::default()).unwrap();
    let res = solver.solve(&q0, &v0, None).unwrap();
    assert_eq!(res.status, SolveStatus::Converged, "{:?}", res.trace.final_error());
    assert!(res.trace.final_error().unwrap() < 1e-6);
    for (i, st) in res.iterate.stages.iter().enumerate() {
        assert!(st.s.iter().all(|&s| s > 0.0) && st.nu.iter().all(|&n| n > 0.0), "stage {i}");
        let ce = eval_constraints(&problem, i, &res.iterate.stage_vector(i)).unwrap();
        assert!(ce.c.rows(0, 3).amax() < 1e-6, "stage {i}: {}", ce.c.rows(0, 3).amax());
        assert!(ce.g.iter().all(|&g| g <= 1e-9));
        assert!(st.u.amax() <= FOOT_TORQUE_LIMIT + 1e-9);
        assert!(st.u[0].abs() < 1e-6);
    }
}

#[test]
fn every_iterate_stays_interior() {
    let problem = foot_contact_problem(0.5, 10).unwrap();
    let q0 = DVector::from_column_slice(&FOOT_Q_NOMINAL);
    let v0 = DVector::zeros(4);
    let opts = SolverOptions::default();
    let solver = NewtonSolver::new(&problem, opts.clone()).unwrap();
    let mut it = SolverIterate::initial_guess(&problem, &q0, &v0, opts.barrier_init).unwrap();
    for k in 0..15 {
        solver.newton_iteration(&mut it, &q0, &v0, k).unwrap();
        assert_eq!(it.first_non_interior(), None, "iteration {k}");
    }
}

#[test]
fn trace_does_not_depend_on_thread_count() {
    let problem = reaching_problem(chain(7), 1.0, 12).unwrap();
    let q0 = DVector::from_fn(7, |i, _| 0.1 * i as f64 - 0.3);
    let v0 = DVector::from_fn(7, |i, _| (i as f64 * 0.7).sin());
    let run = |threads| {
        let opts = SolverOptions { thread_count: threads, ..SolverOptions::default() };
        let r = solve(&problem, &q0, &v0, opts).unwrap();
        r.trace.records.iter().map(|t| (t.kkt_error.to_bits(), t.cost.to_bits())).collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn zero_threads_is_rejected() {
    let problem = integrator_problem(3);
    let opts = SolverOptions { thread_count: 0, ..SolverOptions::default() };
    assert!(NewtonSolver::new(&problem, opts).is_err());
}

#[test]
fn non_interior_guess_is_rejected() {
    let problem = foot_contact_problem(0.2, 4).unwrap();
    let q0 = DVector::from_column_slice(&FOOT_Q_NOMINAL);
    let v0 = DVector::zeros(4);
    let mut guess = SolverIterate::initial_guess(&problem, &q0, &v0, 1e-2).unwrap();
    guess.stages[2].s[0] = 0.0;
    let solver = NewtonSolver::new(&problem, SolverOptions::default()).unwrap();
    assert!(matches!(solver.solve(&q0, &v0, Some(guess)), Err(rbocp::Error::NonInterior { stage: 2 })));
}
