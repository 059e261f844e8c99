//! Minimal double-double arithmetic for the capacitance system of the
//! Newton solver. Near the end of the barrier path the rank-one weights
//! reach ~1/slack^2, which overflows the 52-bit alignment between the
//! identity block and the Gram block; 106 bits keep the factorization
//! meaningful. Only the handful of operations the solver needs are
//! implemented.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    #[inline]
    pub fn from(a: f64) -> Dd {
        Dd { hi: a, lo: 0.0 }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn sub(self, o: Dd) -> Dd {
        self.add(Dd {
            hi: -o.hi,
            lo: -o.lo,
        })
    }

    #[inline]
    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }

    #[inline]
    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let (hi, lo) = two_sum(q1, q2);
        Dd { hi, lo }
    }

    #[inline]
    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let q1 = self.hi.sqrt();
        let r = self.sub(Dd::from(q1).mul(Dd::from(q1)));
        let q2 = r.hi / (2.0 * q1);
        let (hi, lo) = two_sum(q1, q2);
        Dd { hi, lo }
    }

    /// `self + a * b` with one rounding.
    #[inline]
    pub fn fma(self, a: f64, b: f64) -> Dd {
        let (p, e) = two_prod(a, b);
        self.add(Dd { hi: p, lo: e })
    }
}

/// Dot product of two f64 slices accumulated in double-double.
pub fn dot(a: &[f64], b: &[f64]) -> Dd {
    let mut acc = Dd::ZERO;
    for (x, y) in a.iter().zip(b) {
        acc = acc.fma(*x, *y);
    }
    acc
}

/// Cholesky factorization and solves of a symmetric positive definite
/// matrix held in double-double, stored dense row-major.
pub struct DdChol {
    n: usize,
    l: Vec<Dd>,
}

impl DdChol {
    /// Factors `a` (row-major, symmetric). Returns `None` when a pivot is
    /// nonpositive.
    pub fn new(n: usize, a: &[Dd]) -> Option<DdChol> {
        let mut l = vec![Dd::ZERO; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum = sum.sub(l[i * n + k].mul(l[j * n + k]));
                }
                if i == j {
                    if sum.hi <= 0.0 {
                        return None;
                    }
                    l[i * n + j] = sum.sqrt();
                } else {
                    l[i * n + j] = sum.div(l[j * n + j]);
                }
            }
        }
        Some(DdChol { n, l })
    }

    /// Solves `A x = b`, returning the result rounded to f64.
    pub fn solve(&self, b: &[Dd]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![Dd::ZERO; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum = sum.sub(self.l[i * n + k].mul(y[k]));
            }
            y[i] = sum.div(self.l[i * n + i]);
        }
        let mut x = vec![Dd::ZERO; n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in i + 1..n {
                sum = sum.sub(self.l[k * n + i].mul(x[k]));
            }
            x[i] = sum.div(self.l[i * n + i]);
        }
        x.into_iter().map(Dd::to_f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dd_arithmetic_extends_precision() {
        // (1 + 1e-20) - 1 is lost in f64 but kept in dd
        let a = Dd::from(1.0).add(Dd::from(1e-20));
        let d = a.sub(Dd::from(1.0));
        assert!((d.to_f64() - 1e-20).abs() < 1e-32);
        let p = Dd::from(1e8).add(Dd::from(1e-9));
        let sq = p.mul(p);
        // (1e8 + 1e-9)^2 = 1e16 + 2*0.1 + 1e-18
        let expect_lo = 0.2;
        assert!((sq.sub(Dd::from(1e16)).to_f64() - expect_lo).abs() < 1e-10);
    }

    #[test]
    fn dd_chol_solves_stiff_system() {
        // [[1e16 + 1, 1e8], [1e8, 2]] is barely representable in f64 but
        // its dd Cholesky reproduces a known solution accurately.
        let n = 2;
        let a = vec![
            Dd::from(1e16).add(Dd::from(1.0)),
            Dd::from(1e8),
            Dd::from(1e8),
            Dd::from(2.0),
        ];
        let ch = DdChol::new(n, &a).unwrap();
        // pick x = [1e-8, 1], b = A x
        let b = vec![
            Dd::from(1e16).add(Dd::from(1.0)).mul(Dd::from(1e-8)).add(Dd::from(1e8)),
            Dd::from(1e8).mul(Dd::from(1e-8)).add(Dd::from(2.0)),
        ];
        let x = ch.solve(&b);
        assert!((x[0] - 1e-8).abs() < 1e-20, "{}", x[0]);
        assert!((x[1] - 1.0).abs() < 1e-12, "{}", x[1]);
    }
}
