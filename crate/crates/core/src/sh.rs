//! Degree-1 spherical harmonics color model and activation functions.
//!
//! Colors are stored as 3 channels × 4 coefficients, channel-major:
//! `[r0, r1, r2, r3, g0, ..., b3]`. Channel `c` evaluates to
//! `sigmoid(Y00·k0 + Y1·(k1·dx + k2·dy + k3·dz))`.

pub const SH_C0: f64 = 0.282_094_8;
pub const SH_C1: f64 = 0.488_602_5;
pub const SH_COEFFS: usize = 12;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Evaluates the pre-activation SH sum per channel.
#[inline]
pub fn sh_preactivation(coeffs: &[f64], dir: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let k = &coeffs[c * 4..c * 4 + 4];
        *o = SH_C0 * k[0] + SH_C1 * (k[1] * dir[0] + k[2] * dir[1] + k[3] * dir[2]);
    }
    out
}

/// Activated RGB.
#[inline]
pub fn sh_color(coeffs: &[f64], dir: [f64; 3]) -> [f64; 3] {
    sh_preactivation(coeffs, dir).map(sigmoid)
}

/// Degree-0 coefficient producing `value` in `[0, 1]` (clamped away from
/// the asymptotes).
pub fn dc_from_color(value: f64) -> f64 {
    logit(value.clamp(1e-3, 1.0 - 1e-3)) / SH_C0
}
