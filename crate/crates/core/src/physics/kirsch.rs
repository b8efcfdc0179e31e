//! Closed-form stresses around a circular hole in an infinite plate under
//! remote uniaxial tension along x.

use crate::error::{Error, Result};

/// `(σ_rr, σ_θθ, σ_rθ)` at polar position `(r, θ)` for hole radius `radius`
/// and remote tension `t`.
pub fn kirsch_reference(r: f64, theta: f64, radius: f64, t: f64) -> Result<[f64; 3]> {
    if r < radius {
        return Err(Error::Domain(format!(
            "r = {r} lies inside the hole of radius {radius}"
        )));
    }
    let a2 = (radius / r).powi(2);
    let a4 = a2 * a2;
    let (c2, s2) = ((2.0 * theta).cos(), (2.0 * theta).sin());
    let h = 0.5 * t;
    Ok([
        h * (1.0 - a2) + h * (1.0 - 4.0 * a2 + 3.0 * a4) * c2,
        h * (1.0 + a2) - h * (1.0 + 3.0 * a4) * c2,
        -h * (1.0 + 2.0 * a2 - 3.0 * a4) * s2,
    ])
}

/// Cartesian `(σ_xx, σ_yy, σ_xy)` to polar `(σ_rr, σ_θθ, σ_rθ)`.
pub fn to_polar(s: [f64; 3], theta: f64) -> [f64; 3] {
    let (c, s_) = (theta.cos(), theta.sin());
    let [xx, yy, xy] = s;
    [
        xx * c * c + yy * s_ * s_ + 2.0 * xy * s_ * c,
        xx * s_ * s_ + yy * c * c - 2.0 * xy * s_ * c,
        (yy - xx) * s_ * c + xy * (c * c - s_ * s_),
    ]
}
