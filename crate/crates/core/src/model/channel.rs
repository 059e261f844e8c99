use super::{path_loss, ModelError, SystemParams};
use crate::{C64, CMat, CVec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use std::f64::consts::PI;

/// One realization of all six channel blocks.
///
/// Conventions follow the downlink/uplink definitions of the model: `h_r` is
/// PS-to-RIS (`N x M`), `h_u[k]` RIS-to-user (`N`), `h_d[k]` PS-to-user (`M`),
/// `g_u[k]` user-to-RIS (`N`), `g_r` RIS-to-RS (`L x N`), `g_d[k]` user-to-RS
/// (`L`). Channel vectors are stored as columns; expressions that use their
/// conjugate transpose (`h_{u,k}^H`, …) take the adjoint at the point of use.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h_r: CMat,
    pub h_u: Vec<CVec>,
    pub h_d: Vec<CVec>,
    pub g_u: Vec<CVec>,
    pub g_r: CMat,
    pub g_d: Vec<CVec>,
    /// Sampled user coordinates, one per user.
    pub user_positions: Vec<(f64, f64)>,
}

impl ChannelSet {
    /// Verifies that dimensions match `params` and all entries are finite.
    pub fn validate(&self, params: &SystemParams) -> Result<(), ModelError> {
        let (m, l, n, k) = (params.m, params.l, params.n, params.k);
        let dims_ok = self.h_r.shape() == (n, m)
            && self.g_r.shape() == (l, n)
            && self.h_u.len() == k
            && self.h_d.len() == k
            && self.g_u.len() == k
            && self.g_d.len() == k
            && self.user_positions.len() == k
            && self.h_u.iter().all(|v| v.len() == n)
            && self.h_d.iter().all(|v| v.len() == m)
            && self.g_u.iter().all(|v| v.len() == n)
            && self.g_d.iter().all(|v| v.len() == l);
        if !dims_ok {
            return Err(ModelError::DimensionMismatch(
                "channel dimensions do not match params".into(),
            ));
        }
        let finite = |v: &C64| v.re.is_finite() && v.im.is_finite();
        let all_finite = self.h_r.iter().all(finite)
            && self.g_r.iter().all(finite)
            && self
                .h_u
                .iter()
                .chain(&self.h_d)
                .chain(&self.g_u)
                .chain(&self.g_d)
                .all(|v| v.iter().all(finite));
        if !all_finite {
            return Err(ModelError::DimensionMismatch(
                "channel entries must be finite".into(),
            ));
        }
        Ok(())
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Half-wavelength ULA steering vector for an array at `here` seen from
/// `there`; the array axis is the x-axis, so the phase ramp is
/// `pi * i * cos(azimuth)`.
fn steering(len: usize, here: (f64, f64), there: (f64, f64)) -> CVec {
    let az = (there.1 - here.1).atan2(there.0 - here.0);
    let c = az.cos();
    CVec::from_iterator(len, (0..len).map(|i| C64::from_polar(1.0, PI * i as f64 * c)))
}

fn sample_cn(rng: &mut ChaCha12Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rician mixture entry: `sqrt(k/(k+1)) los + sqrt(1/(k+1)) cn`.
fn rician_entry(rng: &mut ChaCha12Rng, los: C64, kappa: f64) -> C64 {
    let los_w = (kappa / (kappa + 1.0)).sqrt();
    let nlos_w = (1.0 / (kappa + 1.0)).sqrt();
    los * los_w + sample_cn(rng) * nlos_w
}

fn rician_matrix(
    rng: &mut ChaCha12Rng,
    rows: usize,
    cols: usize,
    rx: (f64, f64),
    tx: (f64, f64),
    gain: f64,
    kappa: f64,
) -> CMat {
    let a_rx = steering(rows, rx, tx);
    let a_tx = steering(cols, tx, rx);
    let amp = gain.sqrt();
    let mut mat = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            let los = a_rx[i] * a_tx[j].conj();
            mat[(i, j)] = rician_entry(rng, los, kappa) * amp;
        }
    }
    mat
}

fn rician_vector(
    rng: &mut ChaCha12Rng,
    len: usize,
    rx_array: (f64, f64),
    other: (f64, f64),
    gain: f64,
    kappa: f64,
) -> CVec {
    let a = steering(len, rx_array, other);
    let amp = gain.sqrt();
    CVec::from_iterator(
        len,
        (0..len).map(|i| rician_entry(rng, a[i], kappa) * amp),
    )
}

fn rayleigh_vector(rng: &mut ChaCha12Rng, len: usize, gain: f64) -> CVec {
    let amp = gain.sqrt();
    CVec::from_iterator(len, (0..len).map(|_| sample_cn(rng) * amp))
}

/// Draws one channel realization. User positions are sampled uniformly in the
/// configured disk; RIS-related links are Rician with factor
/// `params.rician_k` (deterministic geometry-derived LoS steering), direct
/// links are Rayleigh. Deterministic given `(params, seed)`.
pub fn generate_channels(params: &SystemParams, seed: u64) -> Result<ChannelSet, ModelError> {
    params.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let geo = &params.geometry;
    let ps = geo.ps();
    let ris = geo.ris();
    let rs = geo.rs();

    // Uniform sampling in the user disk.
    let mut user_positions = Vec::with_capacity(params.k);
    for _ in 0..params.k {
        let r = geo.user_radius * rng.gen::<f64>().sqrt();
        let ang = rng.gen::<f64>() * 2.0 * PI;
        user_positions.push((geo.x_u + r * ang.cos(), geo.x_h + r * ang.sin()));
    }

    let pl_ris = |d: f64| path_loss(d, params.alpha_ris, params);
    let pl_dir = |d: f64| path_loss(d, params.alpha_direct, params);

    let h_r = rician_matrix(
        &mut rng,
        params.n,
        params.m,
        ris,
        ps,
        pl_ris(dist(ps, ris))?,
        params.rician_k,
    );

    let mut h_u = Vec::with_capacity(params.k);
    let mut h_d = Vec::with_capacity(params.k);
    let mut g_u = Vec::with_capacity(params.k);
    let mut g_d = Vec::with_capacity(params.k);
    for &pos in &user_positions {
        let g_ris_user = pl_ris(dist(ris, pos))?;
        // RIS->user and user->RIS: the array sits at the RIS on both.
        h_u.push(rician_vector(
            &mut rng,
            params.n,
            ris,
            pos,
            g_ris_user,
            params.rician_k,
        ));
        h_d.push(rayleigh_vector(&mut rng, params.m, pl_dir(dist(ps, pos))?));
        g_u.push(rician_vector(
            &mut rng,
            params.n,
            ris,
            pos,
            g_ris_user,
            params.rician_k,
        ));
        g_d.push(rayleigh_vector(&mut rng, params.l, pl_dir(dist(pos, rs))?));
    }

    let g_r = rician_matrix(
        &mut rng,
        params.l,
        params.n,
        rs,
        ris,
        pl_ris(dist(ris, rs))?,
        params.rician_k,
    );

    let set = ChannelSet {
        h_r,
        h_u,
        h_d,
        g_u,
        g_r,
        g_d,
        user_positions,
    };
    set.validate(params)?;
    Ok(set)
}
