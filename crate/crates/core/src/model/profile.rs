use crate::{C64, CVec};

use std::f64::consts::TAU;

/// Slot durations below this are treated as zero when recovering per-user
/// powers `p_k = e_k / tau_k`.
pub const TAU_MIN: f64 = 1e-9;

/// Per-element complex reflection coefficients for one time slot:
/// `phi_n = amp[n] * exp(j * phase[n])`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisProfile {
    /// Amplitude reflection coefficients, `0 <= amp[n] <= a_max`.
    pub amp: Vec<f64>,
    /// Phase shifts in radians, wrapped to `[0, 2*pi)`.
    pub phase: Vec<f64>,
}

impl RisProfile {
    pub fn new(amp: Vec<f64>, phase: Vec<f64>) -> Self {
        assert_eq!(amp.len(), phase.len());
        let phase = phase.into_iter().map(wrap_phase).collect();
        RisProfile { amp, phase }
    }

    /// All-zero amplitudes (the surface is effectively absent).
    pub fn zeros(n: usize) -> Self {
        RisProfile {
            amp: vec![0.0; n],
            phase: vec![0.0; n],
        }
    }

    /// Uniform amplitude `a`, zero phases.
    pub fn uniform(n: usize, a: f64) -> Self {
        RisProfile {
            amp: vec![a; n],
            phase: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.amp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amp.is_empty()
    }

    /// The reflection coefficients `a_n e^{j theta_n}` as a vector.
    pub fn coefficients(&self) -> CVec {
        CVec::from_iterator(
            self.amp.len(),
            self.amp
                .iter()
                .zip(&self.phase)
                .map(|(&a, &th)| C64::from_polar(a, th)),
        )
    }

    /// True if every amplitude lies in `[0, a_max]` (with slack `tol`).
    pub fn amplitudes_within(&self, a_max: f64, tol: f64) -> bool {
        self.amp.iter().all(|&a| a >= -tol && a <= a_max + tol)
    }
}

/// Wraps an angle to `[0, 2*pi)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let mut t = theta % TAU;
    if t < 0.0 {
        t += TAU;
    }
    // rem_euclid-style wrap can round up to exactly 2*pi
    if t >= TAU {
        t = 0.0;
    }
    t
}

/// Block time/energy allocation: the energy slot `tau0`, per-user slots
/// `tau[k]`, and per-user transmit energies `e[k]` (joules per block).
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub tau0: f64,
    pub tau: Vec<f64>,
    pub e: Vec<f64>,
}

impl Allocation {
    /// Transmit power of user `k`: `e[k] / tau[k]`, or 0 when the slot is
    /// (numerically) empty.
    pub fn power(&self, k: usize) -> f64 {
        if self.tau[k] > TAU_MIN {
            self.e[k] / self.tau[k]
        } else {
            0.0
        }
    }

    pub fn powers(&self) -> Vec<f64> {
        (0..self.tau.len()).map(|k| self.power(k)).collect()
    }

    /// Total scheduled time `tau0 + sum_k tau[k]`.
    pub fn total_time(&self) -> f64 {
        self.tau0 + self.tau.iter().sum::<f64>()
    }

    /// Nonnegativity and the unit time budget, with slack `tol`.
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.tau0 >= -tol
            && self.tau.iter().all(|&t| t >= -tol)
            && self.e.iter().all(|&e| e >= -tol)
            && self.total_time() <= 1.0 + tol
    }
}
