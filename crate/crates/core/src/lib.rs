//! Active-RIS-assisted multi-antenna wireless powered communication network
//! (WPCN) simulator core.
//!
//! A power station (PS) with `M` antennas wirelessly charges `K` single-antenna
//! users through an active reconfigurable intelligent surface (RIS) with `N`
//! amplifying elements; the users then transmit their data to an `L`-antenna
//! receiving station (RS) in TDMA, again assisted by the RIS. The crate
//! provides:
//!
//! - [`model`]: scenario geometry, Rician/Rayleigh channel generation and all
//!   signal-model quantities (harvested energy, amplification power, SNR,
//!   rate),
//! - [`conic`]: a self-contained log-barrier interior-point solver for the
//!   small dense conic programs (PSD, convex-quadratic and linear constraints,
//!   linear plus perspective-log objectives) that arise in the beamforming
//!   subproblems,
//! - [`wet`]: the semidefinite-relaxation subproblems of the energy-transfer
//!   phase (transmit beamforming, RIS reflection and time/energy allocation),
//! - [`wit`]: the information-transmission phase (closed-form MMSE receive
//!   beamforming, closed-form RIS phases, successive convex approximation for
//!   the RIS amplitudes),
//! - [`ao`]: the four-block alternating optimizer for the sum-rate problem,
//!   baseline schemes, and independent solution evaluation.

pub mod ao;
pub mod conic;
pub mod model;
pub mod wet;
pub mod wit;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;
/// Dense real matrix.
pub type RMat = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type RVec = nalgebra::DVector<f64>;
