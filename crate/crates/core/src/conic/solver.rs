//! Primal log-barrier interior-point method with damped Newton centering.
//!
//! The Newton system `H d = -g` has `H = K + sum_r w_r a_r a_r^T` where `K`
//! collects the PSD-block barrier Hessians (whose inverse acts as
//! `D -> X D X`), the quadratic-constraint curvature and single-variable
//! bound barriers on the scalars; every remaining inequality barrier and
//! every perspective-log objective term contributes exactly one rank-one
//! term. The step is computed by the matrix-inversion lemma over those
//! rank-one terms, so the per-iteration cost stays near `O(d^3)` in the
//! largest block dimension rather than the square of the variable count.

use super::problem::{ConicProblem, Constraint, LinExpr, MatCoef, ObjTerm, Point, QuadForm};
use super::ConicError;
use crate::{RMat, RVec};

use super::dd::{self, Dd, DdChol};
use nalgebra::Cholesky;

const LN2: f64 = std::f64::consts::LN_2;

/// `y += a * x` for matrices without a temporary.
fn mat_axpy(y: &mut RMat, a: f64, x: &RMat) {
    y.zip_apply(x, |yi, xi| *yi += a * xi);
}

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
    NumericalFailure,
}

/// Solver diagnostics and dual information.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub status: SolveStatus,
    /// Achieved (maximized) objective value.
    pub objective_value: f64,
    /// Total Newton iterations.
    pub iterations: usize,
    /// `nu * mu_final`, the barrier bound on the suboptimality.
    pub duality_gap_estimate: f64,
    pub barrier_parameter_final: f64,
    /// Scaled Newton decrement at the final center.
    pub stationarity_residual: f64,
    /// One multiplier per inequality constraint, in problem order
    /// (`mu / slack`, original units).
    pub ineq_multipliers: Vec<f64>,
    /// One multiplier per equality constraint, in problem order.
    pub eq_multipliers: Vec<f64>,
    /// Dual matrix `mu * X_b^{-1}` per PSD block.
    pub psd_duals: Vec<RMat>,
    /// Objective at each barrier-stage center; nondecreasing along the path.
    pub centering_objectives: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Target duality-gap bound `nu * mu_final`.
    pub tol_gap: f64,
    pub mu_init: f64,
    pub mu_factor: f64,
    pub max_newton: usize,
    pub max_newton_per_stage: usize,
    /// Constraint-wise feasibility tolerance for accepting a caller start
    /// and for the final report.
    pub feas_tol: f64,
    /// Early exit once scalar `idx` drops below the threshold (phase-I).
    pub stop_scalar_below: Option<(usize, f64)>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_gap: 1e-7,
            mu_init: 1.0,
            mu_factor: 0.1,
            max_newton: 800,
            max_newton_per_stage: 80,
            feas_tol: 1e-8,
            stop_scalar_below: None,
        }
    }
}

/// Result of [`solve`]: the final iterate and the report.
#[derive(Debug, Clone)]
pub struct Solved {
    pub point: Point,
    pub report: SolverReport,
}

// ---------------------------------------------------------------------------
// preprocessed problem
// ---------------------------------------------------------------------------

struct IneqLin<'p> {
    expr: &'p LinExpr,
    ub: f64,
    scale: f64,
    orig: usize,
    /// `Some((i, c))` when the constraint touches exactly one scalar and no
    /// blocks; folded into the scalar base Hessian.
    foldable: Option<(usize, f64)>,
}

struct IneqQuad<'p> {
    q: &'p QuadForm,
    lin: &'p [(usize, f64)],
    ub: f64,
    scale: f64,
    orig: usize,
}

struct EqRow<'p> {
    expr: &'p LinExpr,
    rhs: f64,
    scale: f64,
}

struct Prep<'p> {
    problem: &'p ConicProblem,
    lins: Vec<IneqLin<'p>>,
    quads: Vec<IneqQuad<'p>>,
    eqs: Vec<EqRow<'p>>,
    persp: Vec<(f64, &'p [usize], &'p [usize])>,
    obj_x: RVec,
    obj_mats: Vec<RMat>,
    /// Barrier parameter: one per inequality plus the block dimensions.
    nu: f64,
}

impl<'p> Prep<'p> {
    fn build(problem: &'p ConicProblem) -> Result<Self, ConicError> {
        problem.validate()?;
        let ns = problem.num_scalars;
        let mut obj_x = RVec::zeros(ns);
        let mut obj_mats: Vec<RMat> = problem
            .block_dims
            .iter()
            .map(|&d| RMat::zeros(d, d))
            .collect();
        let mut persp = Vec::new();
        for t in &problem.objective {
            match t {
                ObjTerm::Linear(e) => {
                    for &(i, c) in &e.scalar {
                        obj_x[i] += c;
                    }
                    for (b, a) in &e.mats {
                        a.accumulate(1.0, &mut obj_mats[*b]);
                    }
                }
                ObjTerm::PerspectiveLog { eps, num, den } => {
                    if *eps > 0.0 {
                        persp.push((*eps, num.as_slice(), den.as_slice()));
                    }
                }
            }
        }

        let mut lins = Vec::new();
        let mut quads = Vec::new();
        let mut eqs = Vec::new();
        for (orig, c) in problem.constraints.iter().enumerate() {
            match c {
                Constraint::LinLe(expr, ub) => {
                    let m = expr.max_abs();
                    if m == 0.0 {
                        if *ub < 0.0 {
                            return Err(ConicError::TriviallyInfeasible(orig));
                        }
                        continue; // vacuous
                    }
                    let foldable = if expr.mats.is_empty() && expr.scalar.len() == 1 {
                        Some(expr.scalar[0])
                    } else {
                        None
                    };
                    lins.push(IneqLin {
                        expr,
                        ub: *ub,
                        scale: 1.0 / m,
                        orig,
                        foldable,
                    });
                }
                Constraint::QuadLe { q, lin, ub } => {
                    let qmax = match q {
                        QuadForm::Diag(d) => d.iter().map(|&(_, v)| v.abs()).fold(0.0, f64::max),
                        QuadForm::Dense(m) => m.iter().map(|v| v.abs()).fold(0.0, f64::max),
                    };
                    let lmax = lin.iter().map(|&(_, v)| v.abs()).fold(0.0, f64::max);
                    let m = qmax.max(lmax);
                    if m == 0.0 {
                        if *ub < 0.0 {
                            return Err(ConicError::TriviallyInfeasible(orig));
                        }
                        continue;
                    }
                    quads.push(IneqQuad {
                        q,
                        lin,
                        ub: *ub,
                        scale: 1.0 / m,
                        orig,
                    });
                }
                Constraint::LinEq(expr, rhs) => {
                    let m = expr.max_abs();
                    if m == 0.0 {
                        if rhs.abs() > 1e-12 {
                            return Err(ConicError::TriviallyInfeasible(orig));
                        }
                        continue;
                    }
                    let _ = orig;
                    eqs.push(EqRow {
                        expr,
                        rhs: *rhs,
                        scale: 1.0 / m,
                    });
                }
            }
        }
        let nu = (lins.len() + quads.len()) as f64
            + problem.block_dims.iter().sum::<usize>() as f64;
        Ok(Prep {
            problem,
            lins,
            quads,
            eqs,
            persp,
            obj_x,
            obj_mats,
            nu,
        })
    }

    fn quad_lhs(&self, qi: &IneqQuad, x: &RVec) -> f64 {
        let quad = match qi.q {
            QuadForm::Diag(d) => d.iter().map(|&(i, v)| v * x[i] * x[i]).sum::<f64>(),
            QuadForm::Dense(m) => (m * x).dot(x),
        };
        quad + qi.lin.iter().map(|&(i, v)| v * x[i]).sum::<f64>()
    }

    fn quad_grad(&self, qi: &IneqQuad, x: &RVec) -> RVec {
        let mut g = RVec::zeros(x.len());
        match qi.q {
            QuadForm::Diag(d) => {
                for &(i, v) in d {
                    g[i] += 2.0 * v * x[i];
                }
            }
            QuadForm::Dense(m) => g += m * x * 2.0,
        }
        for &(i, v) in qi.lin {
            g[i] += v;
        }
        g
    }

    /// Scaled slacks of every inequality, linear first, then quadratic.
    /// Returns `None` if any slack is nonpositive.
    fn slacks(&self, p: &Point) -> Option<Vec<f64>> {
        let mut s = Vec::with_capacity(self.lins.len() + self.quads.len());
        for l in &self.lins {
            let v = (l.ub - l.expr.eval(p)) * l.scale;
            if !(v > 0.0) {
                return None;
            }
            s.push(v);
        }
        for q in &self.quads {
            let v = (q.ub - self.quad_lhs(q, &p.x)) * q.scale;
            if !(v > 0.0) {
                return None;
            }
            s.push(v);
        }
        Some(s)
    }

    fn eq_residuals(&self, p: &Point) -> Vec<f64> {
        self.eqs
            .iter()
            .map(|e| (e.expr.eval(p) - e.rhs) * e.scale)
            .collect()
    }

    fn objective(&self, p: &Point) -> f64 {
        self.problem.objective_value(p)
    }
}

// ---------------------------------------------------------------------------
// structured SMW columns, in Cholesky-scaled block coordinates
// ---------------------------------------------------------------------------
//
// Block directions are expressed as Delta = L Dt L^T with X = L L^T, so the
// log-det barrier Hessian is exactly mu * I and no explicit X^{-1} appears
// anywhere in the Newton system. Constraint coefficients transform by the
// congruence A~ = L^T A L, which keeps diagonal and low-rank structure
// low-rank (rows of L).

/// A transformed coefficient `L^T A L`, kept as a weighted sum of outer
/// products whenever the original coefficient was structured.
enum TAtom {
    /// `sum_i w_i v_i v_i^T`, columns of `v`.
    LowRank { v: RMat, w: Vec<f64> },
    Dense(RMat),
}

impl TAtom {
    fn from_coef(a: &MatCoef, l: &RMat) -> TAtom {
        match a {
            MatCoef::Diagonal(d) => {
                let dim = l.nrows();
                let mut v = RMat::zeros(dim, d.len());
                let mut w = Vec::with_capacity(d.len());
                for (idx, &(p, wp)) in d.iter().enumerate() {
                    // L^T e_p = p-th row of L
                    for c in 0..=p {
                        v[(c, idx)] = l[(p, c)];
                    }
                    w.push(wp);
                }
                TAtom::LowRank { v, w }
            }
            MatCoef::Rank1 { u, alpha } => TAtom::LowRank {
                v: RMat::from_columns(&[l.tr_mul(u).column(0).into_owned()]),
                w: vec![*alpha],
            },
            MatCoef::LowRank { u, alpha } => TAtom::LowRank {
                v: l.tr_mul(u),
                w: alpha.clone(),
            },
            MatCoef::Dense(a) => TAtom::Dense(l.tr_mul(a) * l),
        }
    }

    /// `Tr(A~ M)` for symmetric `M`.
    fn dot_mat(&self, m: &RMat) -> f64 {
        match self {
            TAtom::LowRank { v, w } => w
                .iter()
                .enumerate()
                .map(|(i, wi)| {
                    let col = v.column(i);
                    wi * (m * col).dot(&col)
                })
                .sum(),
            TAtom::Dense(a) => a.dot(m),
        }
    }

    /// `Tr(A~ B~)`.
    fn gram(&self, other: &TAtom) -> f64 {
        match (self, other) {
            (TAtom::LowRank { v, w }, TAtom::LowRank { v: v2, w: w2 }) => {
                let mut acc = 0.0;
                for (i, wi) in w.iter().enumerate() {
                    for (j, wj) in w2.iter().enumerate() {
                        let t = v.column(i).dot(&v2.column(j));
                        acc += wi * wj * t * t;
                    }
                }
                acc
            }
            (lr @ TAtom::LowRank { .. }, TAtom::Dense(a))
            | (TAtom::Dense(a), lr @ TAtom::LowRank { .. }) => lr.dot_mat(a),
            (TAtom::Dense(a), TAtom::Dense(b)) => a.dot(b),
        }
    }

    /// `Tr(A~ M)` accumulated in double-double.
    fn dot_mat_dd(&self, m: &RMat) -> super::dd::Dd {
        use super::dd::{dot as dd_dot, Dd};
        match self {
            TAtom::LowRank { v, w } => {
                let rows = v.nrows();
                let mut acc = Dd::ZERO;
                for (i, wi) in w.iter().enumerate() {
                    let ci = &v.as_slice()[i * rows..(i + 1) * rows];
                    let mv = m * v.column(i);
                    acc = acc.add(dd_dot(ci, mv.as_slice()).mul(Dd::from(*wi)));
                }
                acc
            }
            TAtom::Dense(a) => dd_dot(a.as_slice(), m.as_slice()),
        }
    }

    /// `Tr(A~ B~)` accumulated in double-double.
    fn gram_dd(&self, other: &TAtom) -> super::dd::Dd {
        use super::dd::{dot as dd_dot, Dd};
        match (self, other) {
            (TAtom::LowRank { v, w }, TAtom::LowRank { v: v2, w: w2 }) => {
                let mut acc = Dd::ZERO;
                let (rows, rows2) = (v.nrows(), v2.nrows());
                for (i, wi) in w.iter().enumerate() {
                    let ci = &v.as_slice()[i * rows..(i + 1) * rows];
                    for (j, wj) in w2.iter().enumerate() {
                        let cj = &v2.as_slice()[j * rows2..(j + 1) * rows2];
                        let t = dd_dot(ci, cj);
                        acc = acc.add(t.mul(t).mul(Dd::from(wi * wj)));
                    }
                }
                acc
            }
            (lr @ TAtom::LowRank { v, w }, TAtom::Dense(a))
            | (TAtom::Dense(a), lr @ TAtom::LowRank { v, w }) => {
                let _ = (v, w);
                let mut acc = Dd::ZERO;
                if let TAtom::LowRank { v, w } = lr {
                    let rows = v.nrows();
                    for (i, wi) in w.iter().enumerate() {
                        let ci = &v.as_slice()[i * rows..(i + 1) * rows];
                        let av = a * v.column(i);
                        let q = dd_dot(ci, av.as_slice());
                        acc = acc.add(q.mul(Dd::from(*wi)));
                    }
                }
                acc
            }
            (TAtom::Dense(a), TAtom::Dense(b)) => dd_dot(a.as_slice(), b.as_slice()),
        }
    }

    /// Adds `coef * A~` into a double-double accumulator (column-major).
    fn accumulate_dd(&self, coef: f64, dim: usize, into: &mut [super::dd::Dd]) {
        match self {
            TAtom::LowRank { v, w } => {
                for (i, wi) in w.iter().enumerate() {
                    let c = coef * wi;
                    let col = v.column(i);
                    for q in 0..dim {
                        let cq = c * col[q];
                        for r in 0..dim {
                            into[q * dim + r] = into[q * dim + r].fma(cq, col[r]);
                        }
                    }
                }
            }
            TAtom::Dense(a) => {
                for (idx, val) in a.as_slice().iter().enumerate() {
                    into[idx] = into[idx].fma(coef, *val);
                }
            }
        }
    }

    /// Adds `coef * A~` into a dense accumulator.
    fn accumulate(&self, coef: f64, into: &mut RMat) {
        match self {
            TAtom::LowRank { v, w } => {
                for (i, wi) in w.iter().enumerate() {
                    let col = v.column(i).into_owned();
                    into.ger(coef * wi, &col, &col, 1.0);
                }
            }
            TAtom::Dense(a) => mat_axpy(into, coef, a),
        }
    }
}

enum ColKind<'p> {
    /// Multi-variable linear inequality.
    Lin(&'p LinExpr),
    /// Quadratic inequality; gradient at the current x.
    Quad(RVec),
    /// Perspective-log curvature; sparse scalar vector.
    Persp(Vec<(usize, f64)>),
    /// Equality row `idx` (into `prep.eqs`).
    Eq(usize, &'p LinExpr),
}

struct Col<'p> {
    kind: ColKind<'p>,
    /// SMW weight; `None` marks an equality row.
    weight: Option<f64>,
    /// Transformed block coefficients `(block, L^T A L)`.
    tatoms: Vec<(usize, TAtom)>,
}

impl<'p> Col<'p> {
    fn mats(&self) -> &[(usize, MatCoef)] {
        match &self.kind {
            ColKind::Lin(e) | ColKind::Eq(_, e) => &e.mats,
            _ => &[],
        }
    }

    fn scalar_terms(&self) -> ScalarTerms<'_> {
        match &self.kind {
            ColKind::Lin(e) | ColKind::Eq(_, e) => ScalarTerms::Sparse(&e.scalar),
            ColKind::Quad(g) => ScalarTerms::DenseVec(g),
            ColKind::Persp(v) => ScalarTerms::Sparse(v),
        }
    }

    fn build_tatoms(&mut self, ls: &[RMat]) {
        self.tatoms = self
            .mats()
            .iter()
            .map(|(b, a)| (*b, TAtom::from_coef(a, &ls[*b])))
            .collect();
    }

    /// Scalar-part dense vector (for D-solves).
    fn scalar_dense(&self, ns: usize) -> RVec {
        let mut v = RVec::zeros(ns);
        match self.scalar_terms() {
            ScalarTerms::Sparse(t) => {
                for &(i, c) in t {
                    v[i] += c;
                }
            }
            ScalarTerms::DenseVec(g) => v += g,
        }
        v
    }

    /// Dot of this column with a tilde-space structured vector, accumulated
    /// in double-double.
    fn dot_tilde_dd(&self, vx: &RVec, vmats: &[RMat]) -> super::dd::Dd {
        use super::dd::Dd;
        let mut acc = match self.scalar_terms() {
            ScalarTerms::Sparse(t) => {
                let mut a = Dd::ZERO;
                for &(i, c) in t {
                    a = a.fma(c, vx[i]);
                }
                a
            }
            ScalarTerms::DenseVec(g) => super::dd::dot(g.as_slice(), vx.as_slice()),
        };
        for (b, a) in &self.tatoms {
            acc = acc.add(a.dot_mat_dd(&vmats[*b]));
        }
        acc
    }

    /// Dot of this column with a tilde-space structured vector.
    fn dot_tilde(&self, vx: &RVec, vmats: &[RMat]) -> f64 {
        let mut acc = match self.scalar_terms() {
            ScalarTerms::Sparse(t) => t.iter().map(|&(i, c)| c * vx[i]).sum::<f64>(),
            ScalarTerms::DenseVec(g) => g.dot(vx),
        };
        for (b, a) in &self.tatoms {
            acc += a.dot_mat(&vmats[*b]);
        }
        acc
    }
}

enum ScalarTerms<'a> {
    Sparse(&'a [(usize, f64)]),
    DenseVec(&'a RVec),
}


// ---------------------------------------------------------------------------
// solver state
// ---------------------------------------------------------------------------

struct State {
    z: Point,
    slacks: Vec<f64>,
    chols: Vec<Cholesky<f64, nalgebra::Dyn>>,
    logdets: Vec<f64>,
}

fn try_state(prep: &Prep, z: Point) -> Option<State> {
    let slacks = prep.slacks(&z)?;
    let mut chols = Vec::with_capacity(z.mats.len());
    let mut logdets = Vec::with_capacity(z.mats.len());
    for m in &z.mats {
        let ch = Cholesky::new(m.clone())?;
        let ld: f64 = ch.l_dirty().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        chols.push(ch);
        logdets.push(ld);
    }
    Some(State {
        z,
        slacks,
        chols,
        logdets,
    })
}

fn barrier_value(prep: &Prep, st: &State, mu: f64) -> f64 {
    let mut psi = -prep.objective(&st.z);
    psi -= mu * st.slacks.iter().map(|s| s.ln()).sum::<f64>();
    psi -= mu * st.logdets.iter().sum::<f64>();
    psi
}

struct PerspEval {
    /// d pl / d tau (log2 units)
    dtau: f64,
    /// d pl / d e
    de: f64,
    /// curvature weight of the rank-one Hessian term
    w: f64,
    /// rank-one direction entries: `r` on den indices, `-eps` on num indices
    r: f64,
    eps: f64,
}

fn persp_eval(eps: f64, num: &[usize], den: &[usize], x: &RVec) -> PerspEval {
    let tau: f64 = den.iter().map(|&i| x[i]).sum();
    let e: f64 = num.iter().map(|&i| x[i]).sum();
    let r = eps * e / tau;
    let u = 1.0 + r;
    PerspEval {
        dtau: (u.ln() - r / u) / LN2,
        de: eps / (u * LN2),
        w: 1.0 / (tau * u * u * LN2),
        r,
        eps,
    }
}

// ---------------------------------------------------------------------------
// main entry
// ---------------------------------------------------------------------------

/// Maximizes the problem objective with a primal log-barrier method
/// (`mu <- mu * mu_factor` from `mu_init`, damped Newton centering with
/// backtracking line search).
///
/// A strictly feasible `start` should be supplied whenever available; without
/// one a phase-I pass minimizes a uniform infeasibility slack (only supported
/// for problems without equality constraints — every in-crate caller of an
/// equality-constrained program supplies its start).
pub fn solve(
    problem: &ConicProblem,
    start: Option<&Point>,
    opts: &SolveOptions,
) -> Result<Solved, ConicError> {
    let prep = Prep::build(problem)?;

    let state = match start.and_then(|p| {
        if prep.eq_residuals(p).iter().all(|r| r.abs() <= 1e-7) {
            try_state(&prep, p.clone())
        } else {
            None
        }
    }) {
        Some(st) => st,
        None => {
            if !prep.eqs.is_empty() {
                return Err(ConicError::StartRequired);
            }
            match phase_one(problem, start, opts)? {
                PhaseOne::Feasible(p) => try_state(&prep, p).ok_or(ConicError::StartRequired)?,
                PhaseOne::Infeasible(report) => {
                    return Ok(Solved {
                        point: start.cloned().unwrap_or_else(|| Point::zeros(problem)),
                        report,
                    })
                }
            }
        }
    };

    barrier_loop(&prep, state, opts)
}

/// Relative norm of the barrier gradient at the current point, in the
/// Cholesky-scaled block metric. Unlike the Newton decrement this is a
/// direct evaluation, so it stays meaningful when the Newton system is at
/// its numerical floor.
fn stationarity(prep: &Prep, st: &State, mu: f64, eq_nu: &[f64]) -> f64 {
    let (gx, gt, fscale) = assemble_gradient(prep, st, mu, eq_nu);
    let mut n2 = gx.norm_squared();
    for m in &gt {
        n2 += m.norm_squared();
    }
    n2.sqrt() / fscale
}

/// Gradient of `psi_mu` (scalar part, scaled block parts) and the objective
/// scale used for normalization.
fn assemble_gradient(prep: &Prep, st: &State, mu: f64, eq_nu: &[f64]) -> (RVec, Vec<RMat>, f64) {
    let nb = prep.problem.block_dims.len();
    let x = &st.z.x;
    let mut gx = -&prep.obj_x;
    let mut gmats_orig: Vec<RMat> = prep.obj_mats.iter().map(|m| -m).collect();
    let mut fscale = 1.0 + prep.obj_x.norm();
    for m in &prep.obj_mats {
        fscale += m.norm();
    }
    for &(eps, num, den) in &prep.persp {
        let pe = persp_eval(eps, num, den, x);
        for &i in den {
            gx[i] -= pe.dtau;
        }
        for &i in num {
            gx[i] -= pe.de;
        }
        fscale += pe.dtau.abs() + pe.de.abs();
    }
    for (j, l) in prep.lins.iter().enumerate() {
        let gcoef = mu / st.slacks[j] * l.scale;
        for &(i, c) in &l.expr.scalar {
            gx[i] += gcoef * c;
        }
        for (b, a) in &l.expr.mats {
            a.accumulate(gcoef, &mut gmats_orig[*b]);
        }
    }
    for (j, qc) in prep.quads.iter().enumerate() {
        let gcoef = mu / st.slacks[prep.lins.len() + j] * qc.scale;
        let grad = prep.quad_grad(qc, x);
        gx.axpy(gcoef, &grad, 1.0);
    }
    // at a constrained center grad psi = -sum nu_e a_e, so add it back
    for (j, e) in prep.eqs.iter().enumerate() {
        let gcoef = eq_nu[j] * e.scale;
        for &(i, c) in &e.expr.scalar {
            gx[i] += gcoef * c;
        }
        for (b, a) in &e.expr.mats {
            a.accumulate(gcoef, &mut gmats_orig[*b]);
        }
    }
    let gt: Vec<RMat> = (0..nb)
        .map(|b| {
            let l = st.chols[b].l();
            let mut m = l.tr_mul(&gmats_orig[b]) * &l;
            for i in 0..m.nrows() {
                m[(i, i)] -= mu;
            }
            m
        })
        .collect();
    (gx, gt, fscale)
}

fn barrier_loop(prep: &Prep, mut st: State, opts: &SolveOptions) -> Result<Solved, ConicError> {
    let mu_target = (opts.tol_gap / prep.nu.max(1.0)).min(opts.mu_init);
    let mut mu = opts.mu_init;
    let mut total_newton = 0usize;
    let mut centering_objectives = Vec::new();
    let mut status = SolveStatus::Optimal;
    let mut last_eq_nu = vec![0.0; prep.eqs.len()];
    let mut stop_early = false;

    'stages: loop {
        let mut stage_newton = 0usize;
        loop {
            if total_newton >= opts.max_newton || stage_newton >= opts.max_newton_per_stage {
                status = SolveStatus::MaxIter;
                break 'stages;
            }
            let step = match newton_step(prep, &st, mu) {
                Some(s) => s,
                None => {
                    status = SolveStatus::NumericalFailure;
                    break 'stages;
                }
            };
            total_newton += 1;
            stage_newton += 1;
            last_eq_nu.clone_from(&step.eq_nu);
            if std::env::var("CONIC_TRACE").is_ok() {
                eprintln!(
                    "stage mu={mu:.2e} it={total_newton} lam2={:.3e} psi={:.9e}",
                    step.lambda2,
                    barrier_value(prep, &st, mu)
                );
            }

            // Centered, or the decrement is at its numerical floor: either
            // way this stage cannot productively continue.
            if step.lambda2 <= (2.5e-3 * mu).max(step.noise) && step.eq_res_norm <= 1e-9 {
                break;
            }
            if step.lambda2 < 0.0 || !line_search(prep, &mut st, mu, &step) {
                if std::env::var("CONIC_TRACE").is_ok() {
                    eprintln!("stage mu={mu:.2e}: floor exit (lam2={:.3e} noise={:.3e})",
                        step.lambda2, step.noise);
                }
                break;
            }
            if let Some((idx, thr)) = opts.stop_scalar_below {
                if st.z.x[idx] < thr {
                    stop_early = true;
                    break 'stages;
                }
            }
        }
        centering_objectives.push(prep.objective(&st.z));
        if std::env::var("CONIC_TRACE").is_ok() {
            eprintln!("stage mu={mu:.2e} END rho={:.3e}", stationarity(prep, &st, mu, &last_eq_nu));
        }
        if mu <= mu_target {
            break;
        }
        mu = (mu * opts.mu_factor).max(mu_target);
    }

    // Final polish: walk the stationarity residual down directly. The
    // Newton decrement can be below its own roundoff here, but the gradient
    // norm is still exactly evaluable, so acceptance is judged on it.
    let mut rho = stationarity(prep, &st, mu, &last_eq_nu);
    if status == SolveStatus::Optimal && !stop_early {
        let mut stall = 0;
        for _ in 0..opts.max_newton_per_stage {
            if rho <= 3e-10 || stall >= 5 || total_newton >= opts.max_newton {
                break;
            }
            let step = match newton_step(prep, &st, mu) {
                Some(s) => s,
                None => break,
            };
            total_newton += 1;
            let mut alpha = 1.0 / (1.0 + (step.lambda2.max(0.0) / mu).sqrt());
            let mut improved = false;
            for _ in 0..24 {
                let mut trial = st.z.clone();
                trial.x.axpy(alpha, &step.dx, 1.0);
                for (b, m) in trial.mats.iter_mut().enumerate() {
                    mat_axpy(m, alpha, &step.dmats[b]);
                }
                if let Some(tst) = try_state(prep, trial) {
                    let trho = stationarity(prep, &tst, mu, &step.eq_nu);
                    if trho < rho * (1.0 - 1e-4) {
                        st = tst;
                        rho = trho;
                        improved = true;
                        break;
                    }
                }
                alpha *= 0.25;
                if alpha < 1e-12 {
                    break;
                }
            }
            if std::env::var("CONIC_TRACE").is_ok() {
                eprintln!("polish: rho={rho:.3e} improved={improved} lam2={:.3e}", step.lambda2);
            }
            if improved {
                stall = 0;
                last_eq_nu.clone_from(&step.eq_nu);
            } else {
                stall += 1;
            }
        }
        if rho > 1e-6 {
            status = SolveStatus::NumericalFailure;
        }
    }

    let obj = prep.objective(&st.z);
    if stop_early {
        status = SolveStatus::Optimal;
    }

    // Multipliers in original constraint units.
    let mut ineq_multipliers = vec![0.0; prep.problem.constraints.len()];
    for (j, l) in prep.lins.iter().enumerate() {
        ineq_multipliers[l.orig] = mu / (st.slacks[j] / l.scale).max(1e-300);
    }
    for (j, q) in prep.quads.iter().enumerate() {
        let s = st.slacks[prep.lins.len() + j] / q.scale;
        ineq_multipliers[q.orig] = mu / s.max(1e-300);
    }
    let eq_multipliers: Vec<f64> = prep
        .eqs
        .iter()
        .zip(&last_eq_nu)
        .map(|(e, nu)| nu * e.scale)
        .collect();
    let psd_duals: Vec<RMat> = st.chols.iter().map(|ch| ch.inverse() * mu).collect();

    let report = SolverReport {
        status,
        objective_value: obj,
        iterations: total_newton,
        duality_gap_estimate: prep.nu * mu,
        barrier_parameter_final: mu,
        stationarity_residual: rho,
        ineq_multipliers,
        eq_multipliers,
        psd_duals,
        centering_objectives,
    };
    Ok(Solved {
        point: st.z,
        report,
    })
}

// ---------------------------------------------------------------------------
// Newton step
// ---------------------------------------------------------------------------

struct NewtonStep {
    dx: RVec,
    dmats: Vec<RMat>,
    lambda2: f64,
    /// g . d, the directional derivative of the barrier objective.
    descent: f64,
    eq_res_norm: f64,
    /// Equality-constraint multipliers of the KKT solve (scaled units).
    eq_nu: Vec<f64>,
    /// Roundoff floor of `lambda2`.
    noise: f64,
}

fn newton_step(prep: &Prep, st: &State, mu: f64) -> Option<NewtonStep> {
    let ns = prep.problem.num_scalars;
    let nb = prep.problem.block_dims.len();
    let x = &st.z.x;
    let inv_mu = 1.0 / mu;

    // Cholesky factors of the blocks; all block work happens in the scaled
    // coordinates Delta = L Dt L^T.
    let ls: Vec<RMat> = st.chols.iter().map(|c| c.l()).collect();

    // ---- gradient: g = -grad F + mu * grad phi ----------------------------
    // Block parts are accumulated in original coordinates without the
    // barrier term, then transformed; the barrier gradient is exactly -mu I
    // in scaled coordinates.
    let mut gx = -&prep.obj_x;
    let mut gmats_orig: Vec<RMat> = prep.obj_mats.iter().map(|m| -m).collect();

    let mut pevals = Vec::with_capacity(prep.persp.len());
    for &(eps, num, den) in &prep.persp {
        let pe = persp_eval(eps, num, den, x);
        for &i in den {
            gx[i] -= pe.dtau;
        }
        for &i in num {
            gx[i] -= pe.de;
        }
        pevals.push(pe);
    }

    // Scalar base Hessian D, and the rank-one column list.
    let mut d_mat = RMat::zeros(ns, ns);
    let mut cols: Vec<Col> = Vec::new();

    for (j, l) in prep.lins.iter().enumerate() {
        let s = st.slacks[j];
        let w = mu / (s * s);
        let gcoef = mu / s * l.scale; // d/dz of -mu ln(s(z)), original coords
        for &(i, c) in &l.expr.scalar {
            gx[i] += gcoef * c;
        }
        for (b, a) in &l.expr.mats {
            a.accumulate(gcoef, &mut gmats_orig[*b]);
        }
        if let Some((i, c)) = l.foldable {
            let cs = c * l.scale;
            d_mat[(i, i)] += w * cs * cs;
        } else {
            cols.push(Col {
                kind: ColKind::Lin(l.expr),
                weight: Some(w * l.scale * l.scale),
                tatoms: Vec::new(),
            });
        }
    }
    for (j, qc) in prep.quads.iter().enumerate() {
        let s = st.slacks[prep.lins.len() + j];
        let w = mu / (s * s);
        let grad = prep.quad_grad(qc, x);
        let gcoef = mu / s * qc.scale;
        gx.axpy(gcoef, &grad, 1.0);
        // curvature: mu * 2Q / s
        match qc.q {
            QuadForm::Diag(d) => {
                for &(i, v) in d {
                    d_mat[(i, i)] += gcoef * 2.0 * v;
                }
            }
            QuadForm::Dense(m) => mat_axpy(&mut d_mat, gcoef * 2.0, m),
        }
        cols.push(Col {
            kind: ColKind::Quad(grad),
            weight: Some(w * qc.scale * qc.scale),
            tatoms: Vec::new(),
        });
    }
    for (p, pe) in pevals.iter().enumerate() {
        let (_, num, den) = prep.persp[p];
        let mut v = Vec::with_capacity(num.len() + den.len());
        for &i in den {
            v.push((i, pe.r));
        }
        for &i in num {
            v.push((i, -pe.eps));
        }
        if pe.w > 0.0 {
            cols.push(Col {
                kind: ColKind::Persp(v),
                weight: Some(pe.w),
                tatoms: Vec::new(),
            });
        }
    }
    let eq_res = prep.eq_residuals(&st.z);
    for (j, e) in prep.eqs.iter().enumerate() {
        cols.push(Col {
            kind: ColKind::Eq(j, e.expr),
            weight: None,
            tatoms: Vec::new(),
        });
    }

    // Scaled-coordinate block gradients: g~ = L^T G L - mu I.
    let gmats_tilde: Vec<RMat> = (0..nb)
        .map(|b| {
            let mut gt = ls[b].tr_mul(&gmats_orig[b]) * &ls[b];
            let d = gt.nrows();
            for i in 0..d {
                gt[(i, i)] -= mu;
            }
            gt
        })
        .collect();

    if std::env::var("CONIC_FDCHECK").is_ok() {
        fd_check(prep, st, mu, &gx, &gmats_tilde, &ls);
    }

    // Ridge keeps the scalar base invertible when a variable has no
    // curvature of its own.
    let dmax = d_mat.diagonal().iter().fold(0.0f64, |a, &b| a.max(b));
    let ridge = 1e-12 * dmax.max(1.0);
    for i in 0..ns {
        d_mat[(i, i)] += ridge;
    }
    let d_keep = d_mat.clone();
    let d_chol = Cholesky::new(d_mat)?;

    // ---- capacitance system (factored once) -------------------------------
    for c in cols.iter_mut() {
        c.build_tatoms(&ls);
    }
    let m_tot = cols.len();
    let sdense: Vec<RVec> = cols.iter().map(|c| c.scalar_dense(ns)).collect();
    let dsolved: Vec<RVec> = sdense.iter().map(|v| d_chol.solve(v)).collect();
    // Raw Gram B_ij = a_i^T K^{-1} a_j.
    let gram = |i: usize, j: usize| -> f64 {
        let mut v = sdense[j].dot(&dsolved[i]);
        for (bi, ai) in &cols[i].tatoms {
            for (bj, aj) in &cols[j].tatoms {
                if bi == bj {
                    v += inv_mu * ai.gram(aj);
                }
            }
        }
        v
    };
    // Columns are normalized to unit K-metric length, so the Gram block of
    // the capacitance has unit diagonal and the barrier weights appear as
    // small diagonal entries 1/(w_i B_ii); that keeps the system
    // representable and the right-hand side unamplified no matter how tiny
    // the slacks get.
    let bdiag: Vec<f64> = (0..m_tot).map(|i| gram(i, i).max(0.0)).collect();
    let sigma: Vec<f64> = bdiag
        .iter()
        .map(|&b| if b > 0.0 { 1.0 / b.sqrt() } else { 1.0 })
        .collect();
    let mut wdiag_min = f64::INFINITY;
    let mut cap = RMat::zeros(m_tot, m_tot);
    for i in 0..m_tot {
        for j in 0..=i {
            let v = gram(i, j) * sigma[i] * sigma[j];
            cap[(i, j)] = v;
            cap[(j, i)] = v;
        }
        if let Some(w) = cols[i].weight {
            let d = sigma[i] * sigma[i] / w;
            cap[(i, i)] += d;
            wdiag_min = wdiag_min.min(d);
        }
    }
    // Once the weight entries fall below the f64 rounding grain of the
    // unit-diagonal Gram block, factor in double-double instead.
    let cap_solver = if m_tot == 0 {
        CapSolver::None
    } else if wdiag_min < 1e-12 {
        let mut add = vec![Dd::ZERO; m_tot * m_tot];
        for i in 0..m_tot {
            for j in 0..=i {
                let mut v = dd::dot(sdense[j].as_slice(), dsolved[i].as_slice());
                for (bi, ai) in &cols[i].tatoms {
                    for (bj, aj) in &cols[j].tatoms {
                        if bi == bj {
                            v = v.add(ai.gram_dd(aj).mul(Dd::from(inv_mu)));
                        }
                    }
                }
                v = v.mul(Dd::from(sigma[i] * sigma[j]));
                add[i * m_tot + j] = v;
                add[j * m_tot + i] = v;
            }
            if let Some(w) = cols[i].weight {
                let idx = i * m_tot + i;
                add[idx] = add[idx].add(Dd::from(sigma[i] * sigma[i]).div(Dd::from(w)));
            }
        }
        match DdChol::new(m_tot, &add) {
            Some(ch) => CapSolver::Extended(ch),
            None => CapSolver::Plain(nalgebra::LU::new(cap)),
        }
    } else {
        CapSolver::Plain(nalgebra::LU::new(cap))
    };

    // KKT solve in scaled coordinates for a right-hand side (vx, vmats, t).
    let smw_solve = |vx: &RVec, vmats: &[RMat], t: &[f64]| -> Option<(RVec, Vec<RMat>, RVec)> {
        let hx = d_chol.solve(vx);
        let hmats: Vec<RMat> = (0..nb).map(|b| &vmats[b] * inv_mu).collect();
        let extended = matches!(cap_solver, CapSolver::Extended(_));
        let beta = if matches!(cap_solver, CapSolver::None) {
            RVec::zeros(0)
        } else {
            let mut rhs = RVec::zeros(m_tot);
            for i in 0..m_tot {
                let d = if extended {
                    cols[i].dot_tilde_dd(&hx, &hmats).to_f64()
                } else {
                    cols[i].dot_tilde(&hx, &hmats)
                };
                rhs[i] = sigma[i] * d;
                if cols[i].weight.is_none() {
                    if let ColKind::Eq(j, _) = cols[i].kind {
                        rhs[i] -= sigma[i] * t[j];
                    }
                }
            }
            cap_solver.solve(&rhs)?
        };
        let mut rx = vx.clone();
        for (i, c) in cols.iter().enumerate() {
            let bi = sigma[i] * beta[i];
            match c.scalar_terms() {
                ScalarTerms::Sparse(terms) => {
                    for &(k, v) in terms {
                        rx[k] -= bi * v;
                    }
                }
                ScalarTerms::DenseVec(g) => rx.axpy(-bi, g, 1.0),
            }
        }
        let dx = d_chol.solve(&rx);
        // On small stiff problems the block assembly cancels below f64;
        // accumulate it in double-double there (large production solves do
        // not require polished stationarity and keep the fast path).
        let dd_assembly = extended
            && prep.problem.block_dims.iter().sum::<usize>() <= 32
            && m_tot <= 48;
        let dmats = if dd_assembly {
            (0..nb)
                .map(|b| {
                    let dim = vmats[b].nrows();
                    let mut acc: Vec<Dd> = vmats[b]
                        .as_slice()
                        .iter()
                        .map(|&v| Dd::from(v).div(Dd::from(mu)))
                        .collect();
                    for (i, c) in cols.iter().enumerate() {
                        let coef = -sigma[i] * beta[i] * inv_mu;
                        for (bb, a) in &c.tatoms {
                            if *bb == b {
                                a.accumulate_dd(coef, dim, &mut acc);
                            }
                        }
                    }
                    RMat::from_iterator(dim, dim, acc.into_iter().map(Dd::to_f64))
                })
                .collect()
        } else {
            let mut dmats = hmats;
            for (i, c) in cols.iter().enumerate() {
                let coef = -sigma[i] * beta[i] * inv_mu;
                for (b, a) in &c.tatoms {
                    a.accumulate(coef, &mut dmats[*b]);
                }
            }
            dmats
        };
        Some((dx, dmats, beta))
    };

    // H d in scaled coordinates (inequality part; equalities go through nu).
    let h_apply = |dx: &RVec, dmats: &[RMat]| -> (RVec, Vec<RMat>) {
        let mut ox = &d_keep * dx;
        let mut omats: Vec<RMat> = (0..nb).map(|b| &dmats[b] * mu).collect();
        for c in cols.iter() {
            if let Some(w) = c.weight {
                let ad = c.dot_tilde(dx, dmats);
                let coef = w * ad;
                match c.scalar_terms() {
                    ScalarTerms::Sparse(terms) => {
                        for &(k, v) in terms {
                            ox[k] += coef * v;
                        }
                    }
                    ScalarTerms::DenseVec(g) => ox.axpy(coef, g, 1.0),
                }
                for (b, a) in &c.tatoms {
                    a.accumulate(coef, &mut omats[*b]);
                }
            }
        }
        (ox, omats)
    };

    // ---- solve, with iterative refinement against the KKT residual -------
    let negx = -&gx;
    let negmats: Vec<RMat> = gmats_tilde.iter().map(|m| -m).collect();
    let t: Vec<f64> = eq_res.iter().map(|r| -r).collect();
    let (mut dx, mut dmats, mut beta) = smw_solve(&negx, &negmats, &t)?;

    let g_scale = {
        let mut n2 = gx.norm_squared();
        for m in &gmats_tilde {
            n2 += m.norm_squared();
        }
        n2.sqrt().max(1e-300)
    };
    // Refinement helps only while H d is computable without catastrophic
    // cancellation; on the extended-precision path the factorization is
    // already accurate and the f64 residual would only inject noise.
    let rounds = if matches!(cap_solver, CapSolver::Extended(_)) {
        0
    } else {
        3
    };
    for _round in 0..rounds {
        let (hdx, hdmats) = h_apply(&dx, &dmats);
        let mut r1x = &negx - &hdx;
        let mut r1m: Vec<RMat> = (0..nb).map(|b| &negmats[b] - &hdmats[b]).collect();
        let mut t2 = vec![0.0; prep.eqs.len()];
        for (i, c) in cols.iter().enumerate() {
            if c.weight.is_none() {
                if let ColKind::Eq(j, _) = c.kind {
                    // subtract nu_e * a_e and form the equality residual
                    let nu = sigma[i] * beta[i];
                    match c.scalar_terms() {
                        ScalarTerms::Sparse(terms) => {
                            for &(k, v) in terms {
                                r1x[k] -= nu * v;
                            }
                        }
                        ScalarTerms::DenseVec(g) => r1x.axpy(-nu, g, 1.0),
                    }
                    for (b, a) in &c.tatoms {
                        a.accumulate(-nu, &mut r1m[*b]);
                    }
                    t2[j] = t[j] - c.dot_tilde(&dx, &dmats);
                }
            }
        }
        let mut rnorm2 = r1x.norm_squared();
        for m in &r1m {
            rnorm2 += m.norm_squared();
        }
        let rnorm = rnorm2.sqrt() + t2.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if rnorm <= 1e-10 * g_scale {
            break;
        }
        let (cx, cmats, cbeta) = smw_solve(&r1x, &r1m, &t2)?;
        dx += &cx;
        for (b, m) in dmats.iter_mut().enumerate() {
            mat_axpy(m, 1.0, &cmats[b]);
        }
        beta += &cbeta;
    }

    // Newton decrement and directional derivative (scaled coordinates pair
    // exactly like the original ones). The absolute-value pairing estimates
    // the cancellation floor of the decrement.
    let mut gdot = gx.dot(&dx);
    let mut absdot = gx.iter().zip(dx.iter()).map(|(a, b)| (a * b).abs()).sum::<f64>();
    for b in 0..nb {
        gdot += gmats_tilde[b].dot(&dmats[b]);
        absdot += gmats_tilde[b]
            .iter()
            .zip(dmats[b].iter())
            .map(|(a, c)| (a * c).abs())
            .sum::<f64>();
    }
    let mut lambda2 = -gdot;
    let mut eq_nu = vec![0.0; prep.eqs.len()];
    let mut eq_noise = 0.0;
    for (i, c) in cols.iter().enumerate() {
        if c.weight.is_none() {
            if let ColKind::Eq(j, _) = c.kind {
                let nu = sigma[i] * beta[i];
                lambda2 += nu * eq_res[j];
                eq_nu[j] = nu;
                eq_noise += (nu * eq_res[j]).abs();
            }
        }
    }
    if !lambda2.is_finite() {
        return None;
    }
    let eq_res_norm = eq_res.iter().fold(0.0f64, |a, &b| a.max(b.abs()));

    // Back to original block coordinates for the line search.
    let dmats_orig: Vec<RMat> = (0..nb)
        .map(|b| {
            let ldt = &ls[b] * &dmats[b];
            &ldt * ls[b].transpose()
        })
        .collect();

    Some(NewtonStep {
        dx,
        dmats: dmats_orig,
        lambda2,
        descent: gdot,
        eq_res_norm,
        eq_nu,
        noise: 64.0 * f64::EPSILON * absdot + eq_noise,
    })
}

/// Finite-difference check of the scaled-coordinate gradient (diagnostics,
/// enabled by CONIC_FDCHECK).
fn fd_check(prep: &Prep, st: &State, mu: f64, gx: &RVec, gt: &[RMat], ls: &[RMat]) {
    let psi_at = |z: &Point| -> f64 {
        let stt = try_state(prep, z.clone()).expect("fd point infeasible");
        barrier_value(prep, &stt, mu)
    };
    let h = 1e-7;
    for (b, l) in ls.iter().enumerate() {
        let d = st.z.mats[b].nrows();
        for i in 0..d {
            for j in 0..=i {
                // perturb in scaled coords: Delta = L (E_ij + E_ji) L^T
                let mut e = RMat::zeros(d, d);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                let de = l * &e * l.transpose();
                let mut zp = st.z.clone();
                mat_axpy(&mut zp.mats[b], h, &de);
                let mut zm = st.z.clone();
                mat_axpy(&mut zm.mats[b], -h, &de);
                let fd = (psi_at(&zp) - psi_at(&zm)) / (2.0 * h);
                let an = gt[b][(i, j)] + gt[b][(j, i)];
                if (fd - an).abs() > 1e-4 * an.abs().max(1.0) {
                    eprintln!("  FD mismatch block {b} ({i},{j}): fd={fd:.6e} an={an:.6e}");
                }
            }
        }
    }
    for i in 0..gx.len() {
        let mut zp = st.z.clone();
        zp.x[i] += h;
        let mut zm = st.z.clone();
        zm.x[i] -= h;
        let fd = (psi_at(&zp) - psi_at(&zm)) / (2.0 * h);
        if (fd - gx[i]).abs() > 1e-4 * gx[i].abs().max(1.0) {
            eprintln!("  FD mismatch scalar {i}: fd={fd:.6e} an={:.6e}", gx[i]);
        }
    }
}

// ---------------------------------------------------------------------------
// line search
// ---------------------------------------------------------------------------

fn line_search(prep: &Prep, st: &mut State, mu: f64, step: &NewtonStep) -> bool {
    // Damped Newton: full steps only once the scaled decrement is small.
    let lambda_t = (step.lambda2.max(0.0) / mu).sqrt();
    let mut alpha = 1.0 / (1.0 + lambda_t);
    let dpoint = Point {
        x: step.dx.clone(),
        mats: step.dmats.clone(),
    };
    for (j, l) in prep.lins.iter().enumerate() {
        let dd = l.expr.eval(&dpoint) * l.scale;
        if dd > 0.0 {
            alpha = alpha.min(0.995 * st.slacks[j] / dd);
        }
    }
    for (j, qc) in prep.quads.iter().enumerate() {
        let s = st.slacks[prep.lins.len() + j];
        let b = prep.quad_grad(qc, &st.z.x).dot(&step.dx) * qc.scale;
        let c = match qc.q {
            QuadForm::Diag(d) => d
                .iter()
                .map(|&(i, v)| v * step.dx[i] * step.dx[i])
                .sum::<f64>(),
            QuadForm::Dense(m) => (m * &step.dx).dot(&step.dx),
        } * qc.scale;
        if c > 0.0 {
            let root = (-b + (b * b + 4.0 * c * s).sqrt()) / (2.0 * c);
            alpha = alpha.min(0.995 * root);
        } else if b > 0.0 {
            alpha = alpha.min(0.995 * s / b);
        }
    }
    if !(alpha > 0.0) {
        return false;
    }

    let psi0 = barrier_value(prep, st, mu);
    let descent = step.descent;
    for _ in 0..60 {
        let mut trial = st.z.clone();
        trial.x.axpy(alpha, &step.dx, 1.0);
        for (b, m) in trial.mats.iter_mut().enumerate() {
            mat_axpy(m, alpha, &step.dmats[b]);
        }
        if let Some(new_state) = try_state(prep, trial) {
            let psi1 = barrier_value(prep, &new_state, mu);
            if psi1 <= psi0 + 0.1 * alpha * descent {
                if std::env::var("CONIC_TRACE").is_ok() {
                    eprintln!("  accepted alpha={alpha:.3e}");
                }
                *st = new_state;
                return true;
            }
        }
        if std::env::var("CONIC_TRACE").is_ok() {
            let mut trial = st.z.clone();
            trial.x.axpy(alpha, &step.dx, 1.0);
            for (b, m) in trial.mats.iter_mut().enumerate() {
                mat_axpy(m, alpha, &step.dmats[b]);
            }
            match try_state(prep, trial) {
                Some(ns) => eprintln!("  reject alpha={alpha:.3e} psi1={:.12e} psi0={:.12e} need<={:.12e}",
                    barrier_value(prep, &ns, mu), psi0, psi0 + 0.1 * alpha * descent),
                None => eprintln!("  reject alpha={alpha:.3e} (infeasible)"),
            }
        }
        alpha *= 0.5;
        if alpha < 1e-13 {
            return false;
        }
    }
    false
}

// ---------------------------------------------------------------------------
// phase I
// ---------------------------------------------------------------------------

enum PhaseOne {
    Feasible(Point),
    Infeasible(SolverReport),
}

/// Minimizes a uniform infeasibility slack `u`: every inequality is relaxed
/// by `u * omega_j` and each PSD block is shifted to `X + u I`; a strictly
/// feasible point of the original problem exists iff the optimum is
/// negative.
fn phase_one(
    problem: &ConicProblem,
    start: Option<&Point>,
    opts: &SolveOptions,
) -> Result<PhaseOne, ConicError> {
    let ns = problem.num_scalars;
    let u_idx = ns;
    let mut p1 = ConicProblem {
        num_scalars: ns + 1,
        block_dims: problem.block_dims.clone(),
        objective: vec![ObjTerm::Linear(LinExpr::from_scalar(vec![(u_idx, -1.0)]))],
        constraints: Vec::new(),
    };

    // Transformed constraints over (x, X' = X + uI, u).
    let mut omegas = Vec::new();
    for c in &problem.constraints {
        match c {
            Constraint::LinLe(expr, ub) => {
                let tr: f64 = expr
                    .mats
                    .iter()
                    .map(|(b, a)| a.trace(problem.block_dims[*b]))
                    .sum();
                let omega = 1.0 + (-tr).max(0.0);
                let mut e = expr.clone();
                e.scalar.push((u_idx, -(tr + omega)));
                omegas.push(omega);
                p1.constraints.push(Constraint::LinLe(e, *ub));
            }
            Constraint::QuadLe { q, lin, ub } => {
                let mut lin = lin.clone();
                lin.push((u_idx, -1.0));
                omegas.push(1.0);
                // pad a dense quadratic form to the widened scalar space
                let q1 = match q {
                    QuadForm::Diag(d) => QuadForm::Diag(d.clone()),
                    QuadForm::Dense(m) => {
                        QuadForm::Dense(m.clone().insert_row(ns, 0.0).insert_column(ns, 0.0))
                    }
                };
                p1.constraints.push(Constraint::QuadLe {
                    q: q1,
                    lin,
                    ub: *ub,
                });
            }
            Constraint::LinEq(..) => return Err(ConicError::StartRequired),
        }
    }

    // Start: x from the caller guess (or zeros), X' = I, u large enough.
    let x0 = match start {
        Some(p) => p.x.clone(),
        None => RVec::zeros(ns),
    };
    let mut z0 = Point {
        x: x0.clone().insert_row(ns, 0.0),
        mats: problem
            .block_dims
            .iter()
            .map(|&d| RMat::identity(d, d))
            .collect(),
    };
    // pick u0 so every transformed slack is >= 1
    let mut u0 = 1.0f64;
    for (c, _omega) in p1.constraints.iter().zip(&omegas) {
        match c {
            Constraint::LinLe(e, ub) => {
                let ucoef = e
                    .scalar
                    .iter()
                    .rev()
                    .find(|&&(i, _)| i == u_idx)
                    .map(|&(_, v)| v)
                    .unwrap_or(0.0);
                // value(u) = base + ucoef * u, need ub - value >= 1
                let base = {
                    let mut tmp = z0.clone();
                    tmp.x[u_idx] = 0.0;
                    e.eval(&tmp)
                };
                if ucoef < 0.0 {
                    u0 = u0.max((base + 1.0 - ub) / (-ucoef));
                }
            }
            Constraint::QuadLe { q, lin, ub } => {
                let quad = match q {
                    QuadForm::Diag(d) => {
                        d.iter().map(|&(i, v)| v * z0.x[i] * z0.x[i]).sum::<f64>()
                    }
                    QuadForm::Dense(m) => (m * &z0.x).dot(&z0.x),
                };
                let base = quad
                    + lin
                        .iter()
                        .filter(|&&(i, _)| i != u_idx)
                        .map(|&(i, v)| v * z0.x[i])
                        .sum::<f64>();
                u0 = u0.max(base + 1.0 - ub);
            }
            Constraint::LinEq(..) => unreachable!(),
        }
    }
    z0.x[u_idx] = u0;
    // Keep u bounded below so phase-I itself is bounded.
    p1.constraints
        .push(Constraint::LinLe(LinExpr::from_scalar(vec![(u_idx, -1.0)]), 10.0 * u0));

    let mut p1_opts = opts.clone();
    p1_opts.stop_scalar_below = Some((u_idx, -1e-3));
    p1_opts.tol_gap = 1e-9;
    let solved = solve(&p1, Some(&z0), &p1_opts)?;
    let u = solved.point.x[u_idx];
    if u < -1e-9 {
        let x = solved.point.x.clone().remove_row(ns);
        let mats = solved
            .point
            .mats
            .iter()
            .map(|m| {
                let d = m.nrows();
                m - RMat::identity(d, d) * u
            })
            .collect();
        Ok(PhaseOne::Feasible(Point { x, mats }))
    } else {
        let mut report = solved.report;
        report.status = SolveStatus::Infeasible;
        Ok(PhaseOne::Infeasible(report))
    }
}

#[cfg(test)]
mod internal_tests {
    use super::*;
    use crate::conic::{Constraint, LinExpr, MatCoef, ObjTerm};

    #[test]
    fn newton_direction_matches_dense_solve() {
        let n = 2usize;
        let c = RMat::from_row_slice(n, n, &[0.8, 0.3, 0.3, -0.2]);
        let a1 = RMat::from_row_slice(n, n, &[1.5, 0.4, 0.4, 0.9]);
        let b1 = 1.3;
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
                Constraint::LinLe(
                    LinExpr::default()
                        .with_mat(0, MatCoef::Diagonal(vec![(0, 1.0), (1, 1.0)])),
                    2.0,
                ),
            ],
        };
        let prep = Prep::build(&problem).unwrap();
        let x = RMat::from_row_slice(n, n, &[0.3, 0.05, 0.05, 0.2]);
        let st = try_state(&prep, Point { x: RVec::zeros(0), mats: vec![x.clone()] }).unwrap();
        let mu = 0.1;
        let step = newton_step(&prep, &st, mu).unwrap();

        // dense reference (constraint scaling replicated: scale_j = 1/max|coef|)
        let s1 = (b1 - a1.dot(&x)) * (1.0 / 1.5);
        let s2 = 2.0 - x.diagonal().sum();
        let xinv = x.clone().try_inverse().unwrap();
        let sc1 = 1.0 / 1.5;
        let g = -&c - &xinv * mu + &a1 * (mu / s1 * sc1) + RMat::identity(n, n) * (mu / s2);
        let d2 = n * n;
        let mut h = RMat::zeros(d2, d2);
        for i in 0..d2 {
            let mut e = RMat::zeros(n, n);
            e[(i % n, i / n)] = 1.0;
            let hd = &xinv * e * &xinv * mu;
            for j in 0..d2 {
                h[(j, i)] += hd[(j % n, j / n)];
            }
        }
        let vecm = |m: &RMat| RVec::from_iterator(m.len(), m.iter().copied());
        let av1 = vecm(&a1);
        let av2 = vecm(&RMat::identity(n, n));
        h.ger(mu / (s1 * s1) * sc1 * sc1, &av1, &av1, 1.0);
        h.ger(mu / (s2 * s2), &av2, &av2, 1.0);
        let gv = vecm(&g);
        let dref = nalgebra::LU::new(h).solve(&(-&gv)).unwrap();
        let dgot = vecm(&step.dmats[0]);
        let diff = (&dgot - &dref).norm();
        assert!(
            diff < 1e-10 * dref.norm().max(1.0),
            "newton direction mismatch: got {:?} want {:?}",
            dgot.as_slice(),
            dref.as_slice()
        );
        let lref = gv.dot(&dref) * -1.0;
        assert!((step.lambda2 - lref).abs() < 1e-9 * lref.abs().max(1.0),
            "lambda2 {} vs {}", step.lambda2, lref);
    }
}

/// Capacitance-system factorization, switching to double-double past the
/// f64 representability cliff.
enum CapSolver {
    None,
    Plain(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Extended(DdChol),
}

impl CapSolver {
    fn solve(&self, rhs: &RVec) -> Option<RVec> {
        match self {
            CapSolver::None => Some(RVec::zeros(0)),
            CapSolver::Plain(lu) => lu.solve(rhs),
            CapSolver::Extended(ch) => {
                let b: Vec<Dd> = rhs.iter().map(|&v| Dd::from(v)).collect();
                Some(RVec::from_vec(ch.solve(&b)))
            }
        }
    }
}
