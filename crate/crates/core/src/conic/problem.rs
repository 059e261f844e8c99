//! Problem container for the log-barrier solver: scalar variables plus
//! symmetric PSD matrix-variable blocks, a maximized objective built from
//! linear and perspective-log terms, and linear / convex-quadratic / equality
//! constraints.

use super::ConicError;
use crate::{RMat, RVec};

/// Coefficient of a linear functional on one PSD block, representing
/// `Tr(A X)`. The structure tags let the solver exploit low-rank and
/// diagonal constraint matrices; all variants mean the same thing
/// mathematically.
#[derive(Debug, Clone)]
pub enum MatCoef {
    /// Sparse diagonal: `A = sum_p d_p e_p e_p^T`.
    Diagonal(Vec<(usize, f64)>),
    /// `A = alpha u u^T`.
    Rank1 { u: RVec, alpha: f64 },
    /// `A = sum_i alpha_i u_i u_i^T` with the `u_i` as columns.
    LowRank { u: RMat, alpha: Vec<f64> },
    /// Explicit symmetric matrix.
    Dense(RMat),
}

impl MatCoef {
    /// Trace of `A` itself.
    pub fn trace(&self, dim: usize) -> f64 {
        match self {
            MatCoef::Diagonal(d) => d.iter().map(|&(_, v)| v).sum(),
            MatCoef::Rank1 { u, alpha } => alpha * u.norm_squared(),
            MatCoef::LowRank { u, alpha } => alpha
                .iter()
                .enumerate()
                .map(|(i, a)| a * u.column(i).norm_squared())
                .sum(),
            MatCoef::Dense(a) => {
                debug_assert_eq!(a.nrows(), dim);
                a.diagonal().sum()
            }
        }
    }

    /// `Tr(A X)`.
    pub fn dot(&self, x: &RMat) -> f64 {
        match self {
            MatCoef::Diagonal(d) => d.iter().map(|&(p, v)| v * x[(p, p)]).sum(),
            MatCoef::Rank1 { u, alpha } => alpha * (x * u).dot(u),
            MatCoef::LowRank { u, alpha } => {
                let xu = x * u;
                alpha
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a * xu.column(i).dot(&u.column(i)))
                    .sum()
            }
            MatCoef::Dense(a) => a.dot(x),
        }
    }

    /// Adds `w * A` into a dense accumulator.
    pub fn accumulate(&self, w: f64, into: &mut RMat) {
        match self {
            MatCoef::Diagonal(d) => {
                for &(p, v) in d {
                    into[(p, p)] += w * v;
                }
            }
            MatCoef::Rank1 { u, alpha } => into.ger(w * alpha, u, u, 1.0),
            MatCoef::LowRank { u, alpha } => {
                for (i, a) in alpha.iter().enumerate() {
                    let col = u.column(i).into_owned();
                    into.ger(w * a, &col, &col, 1.0);
                }
            }
            MatCoef::Dense(a) => *into += a * w,
        }
    }

    /// Largest absolute entry, used for constraint normalization.
    pub fn max_abs(&self) -> f64 {
        match self {
            MatCoef::Diagonal(d) => d.iter().map(|&(_, v)| v.abs()).fold(0.0, f64::max),
            MatCoef::Rank1 { u, alpha } => {
                let m = u.iter().map(|v| v.abs()).fold(0.0, f64::max);
                alpha.abs() * m * m
            }
            MatCoef::LowRank { u, alpha } => alpha
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let m = u.column(i).iter().map(|v| v.abs()).fold(0.0, f64::max);
                    a.abs() * m * m
                })
                .fold(0.0, f64::max),
            MatCoef::Dense(a) => a.iter().map(|v| v.abs()).fold(0.0, f64::max),
        }
    }

    fn validate(&self, dim: usize) -> Result<(), ConicError> {
        let ok = match self {
            MatCoef::Diagonal(d) => d.iter().all(|&(p, _)| p < dim),
            MatCoef::Rank1 { u, .. } => u.len() == dim,
            MatCoef::LowRank { u, alpha } => u.nrows() == dim && u.ncols() == alpha.len(),
            MatCoef::Dense(a) => {
                if a.shape() != (dim, dim) {
                    false
                } else {
                    let dev = (a - a.transpose()).norm();
                    if dev > 1e-10 * a.norm().max(1e-300) {
                        return Err(ConicError::NotSymmetric(format!(
                            "dense coefficient asymmetry {dev:.3e}"
                        )));
                    }
                    true
                }
            }
        };
        if ok {
            Ok(())
        } else {
            Err(ConicError::BadDimension(
                "matrix coefficient does not match block dimension".into(),
            ))
        }
    }
}

/// A linear functional `sum_i c_i x_i + sum_b Tr(A_b X_b)`.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub scalar: Vec<(usize, f64)>,
    pub mats: Vec<(usize, MatCoef)>,
}

impl LinExpr {
    pub fn from_scalar(terms: Vec<(usize, f64)>) -> Self {
        LinExpr {
            scalar: terms,
            mats: Vec::new(),
        }
    }

    pub fn with_mat(mut self, block: usize, coef: MatCoef) -> Self {
        self.mats.push((block, coef));
        self
    }

    pub fn eval(&self, p: &Point) -> f64 {
        let s: f64 = self.scalar.iter().map(|&(i, c)| c * p.x[i]).sum();
        let m: f64 = self.mats.iter().map(|(b, a)| a.dot(&p.mats[*b])).sum();
        s + m
    }

    pub fn max_abs(&self) -> f64 {
        let s = self.scalar.iter().map(|&(_, c)| c.abs()).fold(0.0, f64::max);
        self.mats
            .iter()
            .map(|(_, a)| a.max_abs())
            .fold(s, f64::max)
    }

    /// Scales all coefficients in place.
    pub fn scale(&mut self, w: f64) {
        for (_, c) in &mut self.scalar {
            *c *= w;
        }
        for (_, a) in &mut self.mats {
            match a {
                MatCoef::Diagonal(d) => d.iter_mut().for_each(|(_, v)| *v *= w),
                MatCoef::Rank1 { alpha, .. } => *alpha *= w,
                MatCoef::LowRank { alpha, .. } => alpha.iter_mut().for_each(|v| *v *= w),
                MatCoef::Dense(m) => *m *= w,
            }
        }
    }
}

/// Quadratic form over the scalar variables.
#[derive(Debug, Clone)]
pub enum QuadForm {
    /// `sum_p d_p x_p^2`, all `d_p >= 0`.
    Diag(Vec<(usize, f64)>),
    /// Dense symmetric PSD matrix over all scalars.
    Dense(RMat),
}

/// One constraint of the problem. PSD cone membership of every declared
/// block is implicit.
#[derive(Debug, Clone)]
pub enum Constraint {
    /// `expr <= ub`
    LinLe(LinExpr, f64),
    /// `expr = rhs`
    LinEq(LinExpr, f64),
    /// `x^T Q x + sum_i q_i x_i <= ub` with `Q` PSD, scalars only.
    QuadLe {
        q: QuadForm,
        lin: Vec<(usize, f64)>,
        ub: f64,
    },
}

/// Objective terms; the solver maximizes their sum.
#[derive(Debug, Clone)]
pub enum ObjTerm {
    Linear(LinExpr),
    /// `tau log2(1 + eps * e / tau)` where `tau = sum_{i in den} x_i` and
    /// `e = sum_{i in num} x_i`, with the continuous extension at `tau -> 0+`.
    PerspectiveLog {
        eps: f64,
        num: Vec<usize>,
        den: Vec<usize>,
    },
}

/// A small dense conic problem: `num_scalars` real variables plus one real
/// symmetric PSD matrix variable per entry of `block_dims`.
#[derive(Debug, Clone, Default)]
pub struct ConicProblem {
    pub num_scalars: usize,
    pub block_dims: Vec<usize>,
    pub objective: Vec<ObjTerm>,
    pub constraints: Vec<Constraint>,
}

/// A point in the variable space.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: RVec,
    pub mats: Vec<RMat>,
}

impl Point {
    pub fn zeros(problem: &ConicProblem) -> Self {
        Point {
            x: RVec::zeros(problem.num_scalars),
            mats: problem
                .block_dims
                .iter()
                .map(|&d| RMat::zeros(d, d))
                .collect(),
        }
    }
}

impl ConicProblem {
    /// Structural validation: index ranges, dimensions, symmetry of dense
    /// coefficients, and PSD-ness of quadratic forms (eigenvalue floor
    /// -1e-10).
    pub fn validate(&self) -> Result<(), ConicError> {
        let ns = self.num_scalars;
        let check_scalar = |terms: &[(usize, f64)]| -> Result<(), ConicError> {
            if terms.iter().all(|&(i, _)| i < ns) {
                Ok(())
            } else {
                Err(ConicError::BadDimension(
                    "scalar index out of range".into(),
                ))
            }
        };
        let check_expr = |e: &LinExpr| -> Result<(), ConicError> {
            check_scalar(&e.scalar)?;
            for (b, a) in &e.mats {
                let dim = *self
                    .block_dims
                    .get(*b)
                    .ok_or_else(|| ConicError::BadDimension("block index out of range".into()))?;
                a.validate(dim)?;
            }
            Ok(())
        };
        for t in &self.objective {
            match t {
                ObjTerm::Linear(e) => check_expr(e)?,
                ObjTerm::PerspectiveLog { eps, num, den } => {
                    if *eps < 0.0 {
                        return Err(ConicError::BadProblem(
                            "perspective-log weight must be nonnegative".into(),
                        ));
                    }
                    if num.iter().chain(den).any(|&i| i >= ns) || den.is_empty() {
                        return Err(ConicError::BadProblem(
                            "perspective-log term references invalid indices".into(),
                        ));
                    }
                }
            }
        }
        for c in &self.constraints {
            match c {
                Constraint::LinLe(e, _) | Constraint::LinEq(e, _) => check_expr(e)?,
                Constraint::QuadLe { q, lin, .. } => {
                    check_scalar(lin)?;
                    match q {
                        QuadForm::Diag(d) => {
                            check_scalar(d)?;
                            if d.iter().any(|&(_, v)| v < -1e-10) {
                                return Err(ConicError::NotPsd(
                                    "diagonal quadratic form has a negative entry".into(),
                                ));
                            }
                        }
                        QuadForm::Dense(m) => {
                            if m.shape() != (ns, ns) {
                                return Err(ConicError::BadDimension(
                                    "dense quadratic form must be num_scalars square".into(),
                                ));
                            }
                            let min = m
                                .symmetric_eigenvalues()
                                .iter()
                                .fold(f64::INFINITY, |a, &b| a.min(b));
                            if min < -1e-10 * m.norm().max(1.0) {
                                return Err(ConicError::NotPsd(format!(
                                    "quadratic form min eigenvalue {min:.3e}"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Objective value at a point.
    pub fn objective_value(&self, p: &Point) -> f64 {
        self.objective
            .iter()
            .map(|t| match t {
                ObjTerm::Linear(e) => e.eval(p),
                ObjTerm::PerspectiveLog { eps, num, den } => {
                    let tau: f64 = den.iter().map(|&i| p.x[i]).sum();
                    let e: f64 = num.iter().map(|&i| p.x[i]).sum();
                    if tau <= 0.0 {
                        0.0
                    } else {
                        tau * (1.0 + eps * e / tau).log2()
                    }
                }
            })
            .sum()
    }
}
