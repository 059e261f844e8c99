use super::{ChannelSet, ModelError, RisProfile, SystemParams};
use crate::CVec;

/// Large-scale path loss `pathloss_ref * (d / 1m)^(-alpha)` (linear power
/// ratio).
pub fn path_loss(d: f64, alpha: f64, params: &SystemParams) -> Result<f64, ModelError> {
    if !(d > 0.0) {
        return Err(ModelError::NonpositiveDistance(d));
    }
    Ok(params.pathloss_ref * d.powf(-alpha))
}

/// Equivalent downlink channel of user `k`:
/// `h_k = (h_{u,k}^H Phi_0 H_r + h_{d,k}^H)^H`, returned as a column vector
/// of length `M`; users of `h_k^H` take its adjoint.
pub fn effective_downlink_channel(
    channels: &ChannelSet,
    phi0: &RisProfile,
    k: usize,
) -> Result<CVec, ModelError> {
    let users = channels.h_u.len();
    if k >= users {
        return Err(ModelError::UserIndexOutOfRange { index: k, k: users });
    }
    let phi = phi0.coefficients();
    // row = h_{u,k}^H Phi_0 H_r: row_m = sum_n conj(h_u[n]) phi_n H_r[n, m]
    let weighted = CVec::from_iterator(
        channels.h_r.nrows(),
        channels.h_u[k]
            .iter()
            .zip(phi.iter())
            .map(|(h, p)| h.conj() * p),
    );
    let row = channels.h_r.transpose() * weighted; // (h_u^H Phi H_r)^T as column
    let mut h = CVec::from_iterator(channels.h_d[k].len(), row.iter().map(|v| v.conj()));
    h += &channels.h_d[k];
    Ok(h)
}

/// Equivalent uplink channel of user `k`:
/// `g_k = g_{d,k} + G_r Phi_k g_{u,k}`, length `L`.
pub fn effective_uplink_channel(
    channels: &ChannelSet,
    phik: &RisProfile,
    k: usize,
) -> Result<CVec, ModelError> {
    let users = channels.g_u.len();
    if k >= users {
        return Err(ModelError::UserIndexOutOfRange { index: k, k: users });
    }
    let phi = phik.coefficients();
    let scaled = CVec::from_iterator(
        channels.g_u[k].len(),
        channels.g_u[k].iter().zip(phi.iter()).map(|(g, p)| g * p),
    );
    Ok(&channels.g_d[k] + &channels.g_r * scaled)
}

/// Energy harvested by user `k` during the energy slot:
/// `E_k = beta |h_k^H w0|^2 tau0 + beta ||h_{u,k}^H Phi_0||^2 sigma_v^2 tau0`
/// (user thermal noise neglected).
pub fn harvested_energy(
    channels: &ChannelSet,
    w0: &CVec,
    phi0: &RisProfile,
    tau0: f64,
    k: usize,
    params: &SystemParams,
) -> Result<f64, ModelError> {
    let h_k = effective_downlink_channel(channels, phi0, k)?;
    let signal = h_k.dotc(w0).norm_sqr();
    let noise_gain: f64 = channels.h_u[k]
        .iter()
        .zip(&phi0.amp)
        .map(|(h, &a)| h.norm_sqr() * a * a)
        .sum();
    Ok(params.beta * tau0 * (signal + noise_gain * params.sigma_v2))
}

/// Reflect power spent by the RIS during the energy slot, with the transmit
/// power budget `P_0` in place of the realized `||w_0||^2`:
/// `P_0 ||Phi_0 H_r||_F^2 + sigma_v^2 ||Phi_0||_F^2`. Feasible when the
/// result is at most `params.pr`.
pub fn wet_amplification_power(
    channels: &ChannelSet,
    phi0: &RisProfile,
    params: &SystemParams,
) -> f64 {
    let mut signal = 0.0;
    let mut noise = 0.0;
    for (n, &a) in phi0.amp.iter().enumerate() {
        let row_sq: f64 = channels.h_r.row(n).iter().map(|v| v.norm_sqr()).sum();
        signal += a * a * row_sq;
        noise += a * a;
    }
    params.p0 * signal + params.sigma_v2 * noise
}

/// Reflect power spent by the RIS during user `k`'s slot:
/// `p_k ||Phi_k g_{u,k}||^2 + sigma_v^2 ||Phi_k||_F^2`.
pub fn wit_amplification_power(
    channels: &ChannelSet,
    phik: &RisProfile,
    p_k: f64,
    k: usize,
    params: &SystemParams,
) -> f64 {
    let mut signal = 0.0;
    let mut noise = 0.0;
    for (n, &a) in phik.amp.iter().enumerate() {
        signal += a * a * channels.g_u[k][n].norm_sqr();
        noise += a * a;
    }
    p_k * signal + params.sigma_v2 * noise
}

/// Uplink SNR of user `k` at the RS:
/// `gamma_k = p_k |w^H (G_r Phi_k g_u + g_d)|^2 /
///            (||w^H G_r Phi_k||^2 sigma_v^2 + ||w||^2 sigma_r^2)`.
/// Invariant under nonzero complex scaling of `w_k`.
pub fn uplink_snr(
    channels: &ChannelSet,
    phik: &RisProfile,
    w_k: &CVec,
    p_k: f64,
    k: usize,
    params: &SystemParams,
) -> Result<f64, ModelError> {
    let w_norm_sq = w_k.norm_squared();
    if w_norm_sq == 0.0 {
        return Err(ModelError::ZeroReceiveVector);
    }
    let g_k = effective_uplink_channel(channels, phik, k)?;
    let signal = w_k.dotc(&g_k).norm_sqr() * p_k;
    // w^H G_r Phi_k: entry n = (w^H G_r)_n phi_n
    let wg = channels.g_r.ad_mul(w_k); // (G_r^H w), so (w^H G_r)_n = conj(wg_n)
    let phi = phik.coefficients();
    let ris_noise: f64 = wg
        .iter()
        .zip(phi.iter())
        .map(|(v, p)| (v.conj() * p).norm_sqr())
        .sum();
    let denom = ris_noise * params.sigma_v2 + w_norm_sq * params.sigma_r2;
    Ok(signal / denom)
}

/// Achievable rate `tau_k log2(1 + gamma_k)` in bits per block; continuous
/// extension 0 at `tau_k = 0`.
pub fn user_rate(tau_k: f64, gamma_k: f64) -> f64 {
    if tau_k <= 0.0 {
        0.0
    } else {
        tau_k * (1.0 + gamma_k).log2()
    }
}
