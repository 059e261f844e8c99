use super::ModelError;

/// Node placement for the 2-D simulation plane. The PS sits at the origin,
/// the RIS at `(x_r, 0)`, the RS at `(x_s, 0)`, and users are drawn uniformly
/// from the disk of radius `user_radius` centered at `(x_u, x_h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub x_r: f64,
    pub x_u: f64,
    pub x_s: f64,
    pub x_h: f64,
    pub user_radius: f64,
}

impl Geometry {
    pub fn ps(&self) -> (f64, f64) {
        (0.0, 0.0)
    }
    pub fn ris(&self) -> (f64, f64) {
        (self.x_r, 0.0)
    }
    pub fn rs(&self) -> (f64, f64) {
        (self.x_s, 0.0)
    }
}

/// All scalars of the scenario.
///
/// Powers are in watts, noise variances in watts, distances in meters,
/// amplitude caps and Rician factors linear. `a_max` may exceed 1 (active
/// elements amplify); `a_max = 1` with `sigma_v2 = 0` models a passive
/// surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Antennas at the power station.
    pub m: usize,
    /// Antennas at the receiving station.
    pub l: usize,
    /// RIS reflecting elements.
    pub n: usize,
    /// Users.
    pub k: usize,
    /// Maximum PS transmit power (W).
    pub p0: f64,
    /// Maximum RIS reflect power budget (W).
    pub pr: f64,
    /// Maximum amplitude reflection coefficient per element (uniform).
    pub a_max: f64,
    /// RIS-injected noise power (W). Zero for a passive surface.
    pub sigma_v2: f64,
    /// RS noise power (W).
    pub sigma_r2: f64,
    /// User thermal noise power (W). Stored but excluded from the energy and
    /// SNR expressions, which neglect it.
    pub sigma_u2: f64,
    /// Energy conversion efficiency in (0, 1].
    pub beta: f64,
    /// Rician factor for RIS-related links (linear).
    pub rician_k: f64,
    /// Path loss at the 1 m reference distance (linear power ratio).
    pub pathloss_ref: f64,
    /// Path-loss exponent for RIS-related links.
    pub alpha_ris: f64,
    /// Path-loss exponent for direct links.
    pub alpha_direct: f64,
    pub geometry: Geometry,
}

impl SystemParams {
    /// Checks the structural invariants. `p0 = 0` is tolerated so that the
    /// no-transmit-power limit can be exercised.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut errs: Vec<String> = Vec::new();
        if self.m < 1 || self.l < 1 || self.n < 1 || self.k < 1 {
            errs.push("m, l, n, k must all be >= 1".into());
        }
        if self.p0 < 0.0 {
            errs.push(format!("p0 must be >= 0, got {}", self.p0));
        }
        for (name, v) in [
            ("pr", self.pr),
            ("sigma_r2", self.sigma_r2),
            ("a_max", self.a_max),
            ("alpha_ris", self.alpha_ris),
            ("alpha_direct", self.alpha_direct),
            ("pathloss_ref", self.pathloss_ref),
        ] {
            if !(v > 0.0) {
                errs.push(format!("{name} must be > 0, got {v}"));
            }
        }
        if self.sigma_v2 < 0.0 {
            errs.push(format!("sigma_v2 must be >= 0, got {}", self.sigma_v2));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            errs.push(format!("beta must be in (0, 1], got {}", self.beta));
        }
        if self.rician_k < 0.0 {
            errs.push(format!("rician_k must be >= 0, got {}", self.rician_k));
        }
        if !(self.geometry.user_radius > 0.0) {
            errs.push("user_radius must be > 0".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidParams(errs.join("; ")))
        }
    }

    /// Default scenario: M = L = 4, N = 10, K = 4, P0 = Pr = 20 dBm,
    /// a_max = 25 dB, sigma_v2 = sigma_r2 = -90 dBm, beta = 0.8, Rician
    /// factor 10, -30 dB reference path loss, exponents 2.2 / 3.5, PS at the
    /// origin, RIS at (10, 0), RS at (20, 0), users around (10, 2).
    pub fn default_scenario() -> Self {
        SystemParams {
            m: 4,
            l: 4,
            n: 10,
            k: 4,
            p0: dbm_to_watts(20.0),
            pr: dbm_to_watts(20.0),
            a_max: db_to_amplitude(25.0),
            sigma_v2: dbm_to_watts(-90.0),
            sigma_r2: dbm_to_watts(-90.0),
            sigma_u2: dbm_to_watts(-100.0),
            beta: 0.8,
            rician_k: 10.0,
            pathloss_ref: db_to_linear(-30.0),
            alpha_ris: 2.2,
            alpha_direct: 3.5,
            geometry: Geometry {
                x_r: 10.0,
                x_u: 10.0,
                x_s: 20.0,
                x_h: 2.0,
                user_radius: 1.0,
            },
        }
    }
}

/// dBm to watts: `10^((dBm - 30) / 10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// dB to a linear power ratio: `10^(dB / 10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// dB to a linear amplitude ratio: `10^(dB / 20)`.
pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}
