use wpcn_core::conic::*;
use wpcn_core::{RMat, RVec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn random_sym(n: usize, rng: &mut ChaCha12Rng) -> RMat {
    let a = RMat::from_fn(n, n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    (&a + a.transpose()) * 0.5
}

fn main() {
    for tol in [4e-8f64] {
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        let mut worst_gap = 0.0f64;
        let mut fails = 0;
        for trial in 0..50 {
            let n = 2 + (trial % 3);
            let r = 1 + (trial % n);
            let q = {
                let m = random_sym(n, &mut rng) + RMat::identity(n, n) * 0.1;
                m.qr().q()
            };
            let mut xstar = RMat::zeros(n, n);
            let mut zstar = RMat::zeros(n, n);
            for i in 0..n {
                let col = q.column(i).into_owned();
                if i < r {
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
                objective: vec![ObjTerm::Linear(LinExpr::default().with_mat(0, MatCoef::Dense(c.clone())))],
                constraints: vec![
                    Constraint::LinLe(LinExpr::default().with_mat(0, MatCoef::Dense(a1.clone())), b1),
                    Constraint::LinLe(LinExpr::default().with_mat(0, MatCoef::Diagonal((0..n).map(|i|(i,1.0)).collect())), trace_cap),
                ],
            };
            let start = Point { x: RVec::zeros(0), mats: vec![RMat::identity(n, n) * (0.1 * trace_cap / n as f64)] };
            let opts = SolveOptions { tol_gap: tol, ..Default::default() };
            let solved = solve(&problem, Some(&start), &opts).unwrap();
            let l = &solved.report.ineq_multipliers;
            let z = &a1 * l[0] + RMat::identity(n, n) * l[1] - &c;
            let zmin = z.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let bound = l[0] * b1 + l[1] * trace_cap + (-zmin).max(0.0) * trace_cap;
            let gap = bound - solved.report.objective_value;
            let verr = (solved.report.objective_value - known).abs();
            if solved.report.status != SolveStatus::Optimal || gap > 1e-7 || verr > 1e-7 * known.abs().max(1.0) {
                fails += 1;
                println!("  trial {trial} {:?} rho={:.2e} gap={:.3e} verr={:.2e}", solved.report.status,
                    solved.report.stationarity_residual, gap, verr);
            }
            if gap > worst_gap { worst_gap = gap; }
        }
        println!("tol {tol:.1e}: fails={fails} worst gap={worst_gap:.3e}");
    }
}
