use nalgebra::DVector;
use rbocp::oracle::{double_integrator, scalar_riccati};
use rbocp::presets::reaching_problem;
use rbocp::{aba, builtin, ilqr_solve, Horizon, IlqrOptions, IlqrStatus, OcpProblem, QuadraticCost};

const MASS: f64 = 2.0;
const W: (f64, f64, f64, f64, f64, f64) = (1.5, 0.3, 0.05, 0.2, 4.0, 1.0);

fn integrator_problem(stages: usize) -> OcpProblem {
    let (wq, wv, wa, wu, tq, tv) = W;
    let mut cost = QuadraticCost::zeros(1, 0);
    cost.q_weight[(0, 0)] = wq;
    cost.v_weight[(0, 0)] = wv;
    cost.a_weight[(0, 0)] = wa;
    cost.u_weight[(0, 0)] = wu;
    cost.terminal_q_weight[(0, 0)] = tq;
    cost.terminal_v_weight[(0, 0)] = tv;
    OcpProblem::unconstrained(double_integrator(MASS), Horizon::new(0.6, stages).unwrap(), cost).unwrap()
}

#[test]
fn linear_quadratic_problem_matches_scalar_lqr() {
    let stages = 12;
    let problem = integrator_problem(stages);
    let dt = problem.dt();
    let (q0, v0) = (DVector::from_element(1, 1.0), DVector::from_element(1, -0.5));
    let res = ilqr_solve(&problem, &q0, &v0, None, &IlqrOptions::default()).unwrap();
    assert_eq!(res.status, IlqrStatus::Converged);
    assert_eq!(res.trace.len(), 2);

    let (wq, wv, wa, wu, tq, tv) = W;
    let p = scalar_riccati(dt, wq * dt, wv * dt, (wa + MASS * MASS * wu) * dt, tq, tv, stages);
    let r = (wa + MASS * MASS * wu) * dt;
    let (mut q, mut v) = (q0[0], v0[0]);
    for (i, a_ilqr) in res.a.iter().enumerate() {
        let [_, p12, p22] = p[i + 1];
        let b1 = dt * p12;
        let b2 = dt * (dt * p12 + p22);
        let a = -(b1 * q + b2 * v) / (dt * dt * p22 + r);
        assert!((a_ilqr[0] - a).abs() < 1e-10, "stage {i}: {} vs {a}", a_ilqr[0]);
        q += dt * v;
        v += dt * a;
    }
}

#[test]
fn zero_weights_converge_immediately() {
    let problem = OcpProblem::unconstrained(
        builtin("double_pendulum").unwrap(),
        Horizon::new(0.5, 10).unwrap(),
        QuadraticCost::zeros(2, 0),
    )
    .unwrap();
    let q0 = DVector::from_vec(vec![0.3, 0.1]);
    let res = ilqr_solve(&problem, &q0, &DVector::zeros(2), None, &IlqrOptions::default()).unwrap();
    assert_eq!(res.status, IlqrStatus::Converged);
    assert_eq!(res.trace.len(), 1);
    assert_eq!(res.trace[0].kkt_error, 0.0);
}

#[test]
fn trajectory_satisfies_the_state_equation() {
    let problem = reaching_problem(builtin("double_pendulum").unwrap(), 1.0, 20).unwrap();
    let dt = problem.dt();
    let q0 = DVector::from_vec(vec![0.5, -0.5]);
    let v0 = DVector::from_vec(vec![1.0, 0.0]);
    let res = ilqr_solve(&problem, &q0, &v0, None, &IlqrOptions::default()).unwrap();
    assert_eq!(res.status, IlqrStatus::Converged);
    for i in 0..problem.stages() {
        let a = aba(&problem.tree, &res.q[i], &res.v[i], &res.u[i], &[]).unwrap();
        assert!((&a - &res.a[i]).amax() < 1e-14);
        assert!((&res.q[i] + &res.v[i] * dt - &res.q[i + 1]).amax() < 1e-14);
        assert!((&res.v[i] + &res.a[i] * dt - &res.v[i + 1]).amax() < 1e-14);
    }
}

#[test]
fn accepted_steps_decrease_cost() {
    let problem = reaching_problem(builtin("double_pendulum").unwrap(), 1.0, 30).unwrap();
    let q0 = DVector::from_vec(vec![-0.8, 0.9]);
    let v0 = DVector::from_vec(vec![2.0, -3.0]);
    let res = ilqr_solve(&problem, &q0, &v0, None, &IlqrOptions::default()).unwrap();
    assert!(res.trace.len() > 2);
    for pair in res.trace.windows(2) {
        assert!(pair[1].cost < pair[0].cost);
        assert!(pair[0].alpha > 0.0);
    }
}

#[test]
fn constrained_problems_are_rejected() {
    let problem = rbocp::presets::foot_contact_problem(0.2, 4).unwrap();
    let q0 = DVector::from_column_slice(&rbocp::presets::FOOT_Q_NOMINAL);
    assert!(ilqr_solve(&problem, &q0, &DVector::zeros(4), None, &IlqrOptions::default()).is_err());
}
