use super::*;
use crate::{C64, CMat, RMat, RVec};

use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn diag_coef(dim: usize) -> MatCoef {
    MatCoef::Diagonal((0..dim).map(|i| (i, 1.0)).collect())
}

#[test]
fn lambda_max_program() {
    // maximize Tr(C X) s.t. Tr(X) <= 1, X >= 0, C = diag(2, 1): value 2 at
    // X = e1 e1^T.
    let mut c = RMat::zeros(2, 2);
    c[(0, 0)] = 2.0;
    c[(1, 1)] = 1.0;
    let problem = ConicProblem {
        num_scalars: 0,
        block_dims: vec![2],
        objective: vec![ObjTerm::Linear(
            LinExpr::default().with_mat(0, MatCoef::Dense(c)),
        )],
        constraints: vec![Constraint::LinLe(
            LinExpr::default().with_mat(0, diag_coef(2)),
            1.0,
        )],
    };
    let start = Point {
        x: RVec::zeros(0),
        mats: vec![RMat::identity(2, 2) * 0.4],
    };
    let solved = solve(&problem, Some(&start), &SolveOptions::default()).unwrap();
    assert_eq!(solved.report.status, SolveStatus::Optimal);
    assert_relative_eq!(solved.report.objective_value, 2.0, epsilon = 1e-7);
    assert_relative_eq!(solved.point.mats[0][(0, 0)], 1.0, epsilon = 1e-6);
    assert!(solved.point.mats[0][(1, 1)] < 1e-6);
    assert!(solved.report.duality_gap_estimate <= 1e-7);
}

#[test]
fn infeasible_pair_detected() {
    // {x <= -1, x >= 0} has no feasible point.
    let problem = ConicProblem {
        num_scalars: 1,
        block_dims: vec![],
        objective: vec![ObjTerm::Linear(LinExpr::from_scalar(vec![(0, 1.0)]))],
        constraints: vec![
            Constraint::LinLe(LinExpr::from_scalar(vec![(0, 1.0)]), -1.0),
            Constraint::LinLe(LinExpr::from_scalar(vec![(0, -1.0)]), 0.0),
        ],
    };
    let solved = solve(&problem, None, &SolveOptions::default()).unwrap();
    assert_eq!(solved.report.status, SolveStatus::Infeasible);
}

#[test]
fn phase_one_finds_interior_point() {
    // maximize x s.t. 0 <= x <= 2, no start supplied.
    let problem = ConicProblem {
        num_scalars: 1,
        block_dims: vec![],
        objective: vec![ObjTerm::Linear(LinExpr::from_scalar(vec![(0, 1.0)]))],
        constraints: vec![
            Constraint::LinLe(LinExpr::from_scalar(vec![(0, 1.0)]), 2.0),
            Constraint::LinLe(LinExpr::from_scalar(vec![(0, -1.0)]), 0.0),
        ],
    };
    let solved = solve(&problem, None, &SolveOptions::default()).unwrap();
    assert_eq!(solved.report.status, SolveStatus::Optimal);
    assert_relative_eq!(solved.report.objective_value, 2.0, epsilon = 1e-6);
}

#[test]
fn qcqp_circle() {
    // maximize x + y s.t. x^2 + y^2 <= 2: optimum (1, 1).
    let problem = ConicProblem {
        num_scalars: 2,
        block_dims: vec![],
        objective: vec![ObjTerm::Linear(LinExpr::from_scalar(vec![
            (0, 1.0),
            (1, 1.0),
        ]))],
        constraints: vec![Constraint::QuadLe {
            q: QuadForm::Diag(vec![(0, 1.0), (1, 1.0)]),
            lin: vec![],
            ub: 2.0,
        }],
    };
    let start = Point {
        x: RVec::zeros(2),
        mats: vec![],
    };
    let solved = solve(&problem, Some(&start), &SolveOptions::default()).unwrap();
    assert_eq!(solved.report.status, SolveStatus::Optimal);
    assert_relative_eq!(solved.report.objective_value, 2.0, epsilon = 1e-6);
    assert_relative_eq!(solved.point.x[0], 1.0, epsilon = 1e-5);
}

#[test]
fn equality_constrained_lp() {
    // maximize x + 2y s.t. x + y = 1, x, y >= 0: optimum (0, 1), value 2,
    // equality multiplier 2.
    let problem = ConicProblem {
        num_scalars: 2,
        block_dims: vec![],
        objective: vec![ObjTerm::Linear(LinExpr::from_scalar(vec![
            (0, 1.0),
            (1, 2.0),
        ]))],
        constraints: vec![
            Constraint::LinEq(LinExpr::from_scalar(vec![(0, 1.0), (1, 1.0)]), 1.0),
            Constraint::LinLe(LinExpr::from_scalar(vec![(0, -1.0)]), 0.0),
            Constraint::LinLe(LinExpr::from_scalar(vec![(1, -1.0)]), 0.0),
        ],
    };
    let start = Point {
        x: RVec::from_vec(vec![0.5, 0.5]),
        mats: vec![],
    };
    let solved = solve(&problem, Some(&start), &SolveOptions::default()).unwrap();
    assert_eq!(solved.report.status, SolveStatus::Optimal);
    assert_relative_eq!(solved.report.objective_value, 2.0, epsilon = 1e-6);
    assert_relative_eq!(solved.report.eq_multipliers[0], 2.0, epsilon = 1e-3);
    // without a start, equality-constrained problems refuse to run phase-I
    assert!(matches!(
        solve(&problem, None, &SolveOptions::default()),
        Err(ConicError::StartRequired)
    ));
}

#[test]
fn perspective_log_matches_grid_oracle() {
    // maximize t1 log2(1 + 2 e1/t1) + t2 log2(1 + 8 e2/t2)
    // s.t. t1 + t2 <= 1, e1 + e2 <= 1, all nonnegative.
    let problem = ConicProblem {
        num_scalars: 4, // t1 e1 t2 e2
        block_dims: vec![],
        objective: vec![
            ObjTerm::PerspectiveLog {
                eps: 2.0,
                num: vec![1],
                den: vec![0],
            },
            ObjTerm::PerspectiveLog {
                eps: 8.0,
                num: vec![3],
                den: vec![2],
            },
        ],
        constraints: vec![
            Constraint::LinLe(LinExpr::from_scalar(vec![(0, 1.0), (2, 1.0)]), 1.0),
            Constraint::LinLe(LinExpr::from_scalar(vec![(1, 1.0), (3, 1.0)]), 1.0),
            Constraint::LinLe(LinExpr::from_scalar(vec![(0, -1.0)]), -1e-9),
            Constraint::LinLe(LinExpr::from_scalar(vec![(2, -1.0)]), -1e-9),
            Constraint::LinLe(LinExpr::from_scalar(vec![(1, -1.0)]), 0.0),
            Constraint::LinLe(LinExpr::from_scalar(vec![(3, -1.0)]), 0.0),
        ],
    };
    let start = Point {
        x: RVec::from_vec(vec![0.4, 0.4, 0.4, 0.4]),
        mats: vec![],
    };
    let solved = solve(&problem, Some(&start), &SolveOptions::default()).unwrap();
    assert_eq!(solved.report.status, SolveStatus::Optimal);

    // Independent oracle: dense grid over (t1, e1); the binding budgets give
    // t2 = 1 - t1, e2 = 1 - e1 (objective is increasing in every variable).
    let rate = |t1: f64, e1: f64| {
        let t2 = 1.0 - t1;
        let e2 = 1.0 - e1;
        let a = if t1 > 0.0 {
            t1 * (1.0 + 2.0 * e1 / t1).log2()
        } else {
            0.0
        };
        let b = if t2 > 0.0 {
            t2 * (1.0 + 8.0 * e2 / t2).log2()
        } else {
            0.0
        };
        a + b
    };
    let mut best = 0.0f64;
    let res = 2000;
    for i in 1..res {
        for j in 0..=res {
            let v = rate(i as f64 / res as f64, j as f64 / res as f64);
            if v > best {
                best = v;
            }
        }
    }
    assert!(
        (solved.report.objective_value - best).abs() <= 1e-3 * best,
        "solver {} vs grid {best}",
        solved.report.objective_value
    );
    // every grid point is feasible, so the solver can never fall below
    assert!(solved.report.objective_value >= best - 1e-6);
}

fn random_sym(n: usize, rng: &mut ChaCha12Rng) -> RMat {
    let a = RMat::from_fn(n, n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    (&a + a.transpose()) * 0.5
}

/// 50 random small SDPs with a known optimum, constructed from a strictly
/// complementary primal-dual pair: pick `X* >= 0` of rank `r` and
/// `Z* >= 0` with `Z* X* = 0`, multipliers `l* > 0`, constraint matrices
/// `A_i`, and set `C = sum_i l*_i A_i - Z*` with `b_i = Tr(A_i X*)`. Then
/// `X*` is optimal with value `Tr(C X*)`. The solver must reproduce the
/// value and certify it through an independently verified dual bound.
#[test]
fn random_sdp_duality_certificates() {
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    for trial in 0..50 {
        let n = 2 + (trial % 3);
        let r = 1 + (trial % n); // rank of X*
        // random orthonormal frame via QR of a random matrix
        let q = {
            let m = random_sym(n, &mut rng) + RMat::identity(n, n) * 0.1;
            let qr = m.qr();
            qr.q()
        };
        let mut xstar = RMat::zeros(n, n);
        let mut zstar = RMat::zeros(n, n);
        for i in 0..n {
            let col = q.column(i).into_owned();
            if i < r {
                // eigenvalues of X* in [0.5, 1.5]
                xstar.ger(0.5 + rng.gen::<f64>(), &col, &col, 1.0);
            } else {
                zstar.ger(0.5 + rng.gen::<f64>(), &col, &col, 1.0);
            }
        }
        let a1 = {
            let m = random_sym(n, &mut rng);
            &m * m.transpose() + RMat::identity(n, n) * 0.2
        };
        let lstar = [0.3 + rng.gen::<f64>(), 0.2 + rng.gen::<f64>()];
        let c = &a1 * lstar[0] + RMat::identity(n, n) * lstar[1] - &zstar;
        let b1 = a1.dot(&xstar);
        let trace_cap = xstar.diagonal().sum();
        let known = c.dot(&xstar);

        let problem = ConicProblem {
            num_scalars: 0,
            block_dims: vec![n],
            objective: vec![ObjTerm::Linear(
                LinExpr::default().with_mat(0, MatCoef::Dense(c.clone())),
            )],
            constraints: vec![
                Constraint::LinLe(
                    LinExpr::default().with_mat(0, MatCoef::Dense(a1.clone())),
                    b1,
                ),
                Constraint::LinLe(LinExpr::default().with_mat(0, diag_coef(n)), trace_cap),
            ],
        };
        let start = Point {
            x: RVec::zeros(0),
            mats: vec![RMat::identity(n, n) * (0.1 * trace_cap / n as f64)],
        };
        // request some headroom below the 1e-7 certificate tolerance
        let opts = SolveOptions {
            tol_gap: 4e-8,
            ..SolveOptions::default()
        };
        let solved = solve(&problem, Some(&start), &opts).unwrap();
        assert_eq!(solved.report.status, SolveStatus::Optimal, "trial {trial}");
        let primal = solved.report.objective_value;
        assert!(
            (primal - known).abs() <= 1e-7 * known.abs().max(1.0),
            "trial {trial}: value {primal} vs known optimum {known}"
        );
        assert!(solved.report.duality_gap_estimate <= 1e-7);

        // weak-duality certificate: Z = l1 A1 + l2 I - C must be (nearly)
        // PSD and then b^T l + max(0, -lmin(Z)) * trace_cap bounds the
        // primal from above.
        let l = &solved.report.ineq_multipliers;
        assert!(l.iter().all(|&v| v >= -1e-9), "multiplier negative: {l:?}");
        let z = &a1 * l[0] + RMat::identity(n, n) * l[1] - &c;
        let zmin = z
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        let bound = l[0] * b1 + l[1] * trace_cap + (-zmin).max(0.0) * trace_cap;
        assert!(
            primal <= bound + 1e-9,
            "weak duality violated: {primal} > {bound}"
        );
        assert!(
            bound - primal <= 1e-7,
            "gap {} too large (trial {trial})",
            bound - primal
        );

        // complementary slackness: multiplier * slack <= 1e-6
        let s1 = b1 - a1.dot(&solved.point.mats[0]);
        let s2 = trace_cap - solved.point.mats[0].diagonal().sum();
        assert!(l[0] * s1 <= 1e-6, "compl slack 1: {}", l[0] * s1);
        assert!(l[1] * s2 <= 1e-6, "compl slack 2: {}", l[1] * s2);

        // the objective recorded at each barrier-stage center is monotone
        let co = &solved.report.centering_objectives;
        for w in co.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-12,
                "centering objective decreased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }
}

#[test]
fn hermitian_sdp_through_embedding() {
    // maximize Tr(C X) over complex Hermitian X >= 0 with Tr(X) <= 1:
    // the value is lambda_max(C) and X is the dominant eigenprojector.
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    for _ in 0..5 {
        let n = 3;
        let a = CMat::from_fn(n, n, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let c = (&a + a.adjoint()) * C64::new(0.5, 0.0);
        let c_emb = embed_hermitian(&c).unwrap() * 0.5; // so Tr(.) = Tr(C X_c)
        let problem = ConicProblem {
            num_scalars: 0,
            block_dims: vec![2 * n],
            objective: vec![ObjTerm::Linear(
                LinExpr::default().with_mat(0, MatCoef::Dense(c_emb)),
            )],
            constraints: vec![Constraint::LinLe(
                LinExpr::default().with_mat(0, diag_coef(2 * n)),
                2.0, // embedded trace doubles
            )],
        };
        let start = Point {
            x: RVec::zeros(0),
            mats: vec![RMat::identity(2 * n, 2 * n) * (0.5 / n as f64)],
        };
        let solved = solve(&problem, Some(&start), &SolveOptions::default()).unwrap();
        assert_eq!(solved.report.status, SolveStatus::Optimal);
        let lmax = hermitian_eigenvalues(&c).unwrap()[0];
        assert_relative_eq!(solved.report.objective_value, lmax, epsilon = 1e-6);

        let xc = reconstruct_hermitian(&solved.point.mats[0]).unwrap();
        let (v, residual) = extract_rank_one(&xc).unwrap();
        assert!(residual < 1e-5, "residual {residual}");
        // v should align with the dominant eigenvector of C
        let cv = &c * &v;
        let rayleigh = v.dotc(&cv).re / v.norm_squared();
        assert_relative_eq!(rayleigh, lmax, epsilon = 1e-5);
    }
}

#[test]
fn max_iter_status() {
    let problem = ConicProblem {
        num_scalars: 1,
        block_dims: vec![],
        objective: vec![ObjTerm::Linear(LinExpr::from_scalar(vec![(0, 1.0)]))],
        constraints: vec![
            Constraint::LinLe(LinExpr::from_scalar(vec![(0, 1.0)]), 1.0),
            Constraint::LinLe(LinExpr::from_scalar(vec![(0, -1.0)]), 0.0),
        ],
    };
    let start = Point {
        x: RVec::from_vec(vec![0.5]),
        mats: vec![],
    };
    let opts = SolveOptions {
        max_newton: 2,
        ..SolveOptions::default()
    };
    let solved = solve(&problem, Some(&start), &opts).unwrap();
    assert_eq!(solved.report.status, SolveStatus::MaxIter);
}

#[test]
fn validation_rejects_bad_problems() {
    // out-of-range scalar index
    let p = ConicProblem {
        num_scalars: 1,
        block_dims: vec![],
        objective: vec![],
        constraints: vec![Constraint::LinLe(LinExpr::from_scalar(vec![(3, 1.0)]), 0.0)],
    };
    assert!(p.validate().is_err());
    // indefinite quadratic form
    let mut q = RMat::zeros(1, 1);
    q[(0, 0)] = -1.0;
    let p = ConicProblem {
        num_scalars: 1,
        block_dims: vec![],
        objective: vec![],
        constraints: vec![Constraint::QuadLe {
            q: QuadForm::Dense(q),
            lin: vec![],
            ub: 1.0,
        }],
    };
    assert!(p.validate().is_err());
}
