mod common;

use mrp::admm::{solve_subproblem, AdmmConfig};
use mrp::criteria::{eval_f, eval_u, grad_f};
use mrp::l1_projection::project_l1;
use mrp::market_data::SpreadBasis;
use mrp::moments::{build_criterion, CriterionKind, LaggedMoments};
use mrp::sca::{design_mrp, step_armijo, DesignOptions, StepRule, StopReason};
use mrp::surrogate::build_surrogate;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use common::*;

#[test]
fn projection_matches_bisection() {
    let mut r = rng(10);
    for n in [2, 5, 50] {
        for _ in 0..20 {
            let h = normal_vector(&mut r, n) * 3.0;
            let radius = 0.5 + h.lp_norm(1) * 0.3;
            let z = project_l1(&h, radius).unwrap().z;
            let oracle = bisection_projection(&h, radius);
            assert!((&z - &oracle).amax() < 1e-10);
        }
    }
}

#[test]
fn admm_matches_projected_gradient() {
    let mut r = rng(11);
    for trial in 0..20 {
        let n = [2, 5, 10][trial % 3];
        let a = random_spd(&mut r, n, 0.05);
        let b = normal_vector(&mut r, n) * 4.0;
        let basis = random_square_basis(&mut r, n, 1.0);
        let (w, _) = solve_subproblem(&a, &b, &basis, &AdmmConfig::for_dim(n), None).unwrap();
        let oracle = projected_gradient_oracle(&a, &b, &basis, 1_000_000);
        let (f, f_star) = (quadratic(&a, &b, &w), quadratic(&a, &b, &oracle));
        assert!((f - f_star).abs() <= 1e-6 * f_star.abs().max(1.0), "trial {trial}: {f} vs {f_star}");
    }
}

#[test]
fn admm_with_tall_basis_satisfies_budget() {
    let mut r = rng(12);
    let a = random_spd(&mut r, 3, 0.1);
    let b = normal_vector(&mut r, 3) * 5.0;
    let basis = SpreadBasis::new(normal_matrix(&mut r, 6, 3), 2.0).unwrap();
    let (w, state) = solve_subproblem(&a, &b, &basis, &AdmmConfig::for_dim(3), None).unwrap();
    assert!(state.converged);
    assert!((basis.matrix() * &w).lp_norm(1) <= 2.0 + 1e-7);
    // no feasible point along a random direction improves the objective
    let f = quadratic(&a, &b, &w);
    for _ in 0..200 {
        let mut cand = &w + normal_vector(&mut r, 3) * 0.05;
        let lev = (basis.matrix() * &cand).lp_norm(1);
        if lev > 2.0 {
            cand *= 2.0 / lev;
        }
        assert!(quadratic(&a, &b, &cand) >= f - 1e-6);
    }
}

#[test]
fn predictability_with_identity_basis_hits_eigen_oracle() {
    let mut r = rng(13);
    for _ in 0..5 {
        let m = random_moments(&mut r, 4, 1);
        let spec = build_criterion(&m, CriterionKind::Predictability, 0.0).unwrap();
        let basis = SpreadBasis::identity(4, 1.7).unwrap();
        let report = design_mrp(&spec, &m, &basis, &DesignOptions::default()).unwrap();
        let lam = min_generalized_eigenvalue(&spec.h_matrix, m.m0());
        let u = eval_u(&report.weights.spread_weights(), &spec, &m).unwrap();
        assert!((u - lam).abs() <= 1e-4 * lam.abs(), "{u} vs {lam}");
    }
}

#[test]
fn crossing_without_lag_maximizes_variance() {
    let m0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let m = LaggedMoments::from_matrices(vec![m0.clone(), DMatrix::zeros(2, 2)]).unwrap();
    let spec = build_criterion(&m, CriterionKind::Crossing, 0.0).unwrap();
    let basis = SpreadBasis::identity(2, 1.0).unwrap();
    let opts = DesignOptions {
        mu: 1.0,
        ..DesignOptions::default()
    };
    let report = design_mrp(&spec, &m, &basis, &opts).unwrap();

    let mut best: f64 = 0.0;
    for k in 0..=20_000 {
        let t = k as f64 / 20_000.0;
        for (sx, sy) in [(1.0, 1.0), (1.0, -1.0)] {
            let w = DVector::from_vec(vec![sx * t, sy * (1.0 - t)]);
            best = best.max(w.dot(&(&m0 * &w)));
        }
    }
    assert!((report.variance - best).abs() <= 1e-6 * best, "{} vs {best}", report.variance);
}

#[test]
fn stationary_start_is_a_fixed_point() {
    let mut r = rng(14);
    let m = random_moments(&mut r, 3, 1);
    let spec = build_criterion(&m, CriterionKind::Predictability, 0.0).unwrap();
    let l = m.m0().clone().cholesky().unwrap().l();
    let li = l.clone().try_inverse().unwrap();
    let c = &li * &spec.h_matrix * li.transpose();
    let eig = ((&c + c.transpose()) * 0.5).symmetric_eigen();
    let y = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
    let x = li.transpose() * y;
    let w0 = &x * (0.5 / x.lp_norm(1));
    let basis = SpreadBasis::identity(3, 1.0).unwrap();
    let report = design_mrp(
        &spec,
        &m,
        &basis,
        &DesignOptions {
            w0: Some(w0.clone()),
            tau: Some(0.1),
            ..DesignOptions::default()
        },
    )
    .unwrap();
    assert!(report.converged);
    assert_eq!(report.reason, StopReason::FixedPoint);
    assert!((report.weights.spread_weights() - &w0).norm() < 1e-7 * w0.norm());
}

#[test]
fn surrogate_minimizer_is_descent_direction() {
    let mut r = rng(15);
    for _ in 0..30 {
        let (data, m) = synthetic_fixture(r.random_range(0..1000), 3, 3, 0.6);
        let spec = build_criterion(&m, CriterionKind::PenalizedCrossing, 0.5).unwrap();
        let w = random_feasible(&mut r, &data.basis);
        let model = build_surrogate(&w, &spec, &m, 0.0, 0.1).unwrap();
        let (w_hat, _) = solve_subproblem(&model.a, &model.b, &data.basis, &AdmmConfig::for_dim(3), None).unwrap();
        let g = grad_f(&w, &spec, &m, 0.0).unwrap();
        assert!(g.dot(&(&w_hat - &w)) <= 1e-8);
    }
}

#[test]
fn armijo_hand_example() {
    let w = DVector::from_vec(vec![1.0, 0.0]);
    let d = DVector::from_vec(vec![-1.0, 0.0]);
    let step = step_armijo(&w, &d, |x| Ok(x.norm_squared()), 0.1, 0.5).unwrap();
    assert!(step.accepted);
    assert_eq!(step.gamma, 1.0);
    assert!(step_armijo(&w, &DVector::zeros(2), |x| Ok(x.norm_squared()), 0.1, 0.5).is_err());
}

#[test]
fn every_step_rule_keeps_iterates_feasible() {
    let (data, m) = synthetic_fixture(31, 3, 2, 0.5);
    let spec = build_criterion(&m, CriterionKind::Portmanteau, 0.0).unwrap();
    for step in [
        StepRule::Constant { gamma: 0.5 },
        StepRule::Diminishing { gamma0: 1.0, theta: 0.5 },
        StepRule::default(),
    ] {
        let opts = DesignOptions {
            step,
            max_iters: 200,
            ..DesignOptions::default()
        };
        let report = design_mrp(&spec, &m, &data.basis, &opts).unwrap();
        assert!(report.leverage_trace.iter().all(|&l| l <= 1.0 + 1e-8), "{step:?}");
        let f = eval_f(&report.weights.spread_weights(), &spec, &m, 0.0).unwrap().f;
        assert!(f <= report.objective_trace[0] + 1e-12);
    }
}

#[test]
fn solves_are_bitwise_deterministic() {
    let (data, m) = synthetic_fixture(8, 5, 3, 0.7);
    let spec = build_criterion(&m, CriterionKind::PenalizedCrossing, 0.3).unwrap();
    let opts = DesignOptions {
        mu: 0.05,
        ..DesignOptions::default()
    };
    let a = design_mrp(&spec, &m, &data.basis, &opts).unwrap();
    let b = design_mrp(&spec, &m, &data.basis, &opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn infeasible_start_rejected() {
    let (data, m) = synthetic_fixture(8, 3, 1, 0.5);
    let spec = build_criterion(&m, CriterionKind::Crossing, 0.0).unwrap();
    let opts = DesignOptions {
        w0: Some(DVector::from_element(3, 100.0)),
        ..DesignOptions::default()
    };
    assert!(matches!(
        design_mrp(&spec, &m, &data.basis, &opts),
        Err(mrp::MrpError::InfeasibleStart { .. })
    ));
}
