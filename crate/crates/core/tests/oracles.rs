use rbocp::oracle::{
    check_condensing, check_derivatives, check_riccati, check_scalar_riccati, fd_kkt_error, random_instance,
};
use rbocp::{kkt_error, solve, SolverOptions};

#[test]
fn condensed_step_matches_uncondensed_system() {
    let rep = check_condensing(40, 100).unwrap();
    assert!(rep.max_error <= 1e-8, "{rep:?}");
}

#[test]
fn riccati_matches_dense_on_random_instances() {
    let rep = check_riccati(40, 500).unwrap();
    assert!(rep.max_error <= 1e-8, "{rep:?}");
}

#[test]
fn riccati_matches_scalar_recursion() {
    let err = check_scalar_riccati().unwrap();
    assert!(err <= 1e-10, "{err}");
}

#[test]
fn analytic_derivatives_match_finite_differences() {
    let rep = check_derivatives(10, 3, 1e-6).unwrap();
    assert!(rep.rnea_fd < 1e-5 && rep.contact_fd < 1e-5, "{rep:?}");
    assert!(rep.crba < 1e-10 && rep.jacobian_transpose < 1e-10, "{rep:?}");
}

#[test]
fn kkt_error_matches_independent_evaluation() {
    for seed in 0..12 {
        let inst = random_instance(seed).unwrap();
        let a = kkt_error(&inst.problem, &inst.iterate, &inst.q0, &inst.v0).unwrap();
        let b = fd_kkt_error(&inst.problem, &inst.iterate, &inst.q0, &inst.v0).unwrap();
        assert!((a - b).abs() <= 1e-6 * a.max(1.0), "seed {seed}: {a} vs {b}");
    }
}

#[test]
fn kkt_error_vanishes_at_a_solution() {
    let inst = random_instance(21).unwrap();
    let res = solve(&inst.problem, &inst.q0, &inst.v0, SolverOptions::default()).unwrap();
    let b = fd_kkt_error(&inst.problem, &res.iterate, &inst.q0, &inst.v0).unwrap();
    assert!(b < 1e-6, "{b}");
}
