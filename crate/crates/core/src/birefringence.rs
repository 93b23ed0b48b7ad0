//! Geometry of a uniaxial element at a given cut angle: walk-off angle,
//! effective extraordinary index, and its temperature derivative.
//!
//! Angles cross the API boundary in degrees and are converted to radians
//! internally.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BirefringenceError {
    #[error("non-physical refractive index {value} (must be > 0)")]
    NonPhysicalIndex { value: f64 },
    #[error("angle {value} deg outside [{min}, {max}] deg")]
    AngleOutOfRange { value: f64, min: f64, max: f64 },
}

fn check_index(n: f64) -> Result<(), BirefringenceError> {
    if !(n.is_finite() && n > 0.0) {
        return Err(BirefringenceError::NonPhysicalIndex { value: n });
    }
    Ok(())
}

fn check_angle(deg: f64, min: f64, max: f64) -> Result<(), BirefringenceError> {
    if !(deg.is_finite() && deg >= min && deg <= max) {
        return Err(BirefringenceError::AngleOutOfRange {
            value: deg,
            min,
            max,
        });
    }
    Ok(())
}

/// Cut geometry of a uniaxial element: `theta_deg` is the angle between the
/// optic axis and the incident wavevector. The extraordinary-ray angle
/// θ_e = ψ + θ is always derived, never set directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutGeometry {
    theta_deg: f64,
}

impl CutGeometry {
    pub fn new(theta_deg: f64) -> Result<Self, BirefringenceError> {
        if !(theta_deg.is_finite() && theta_deg > 0.0 && theta_deg < 90.0) {
            return Err(BirefringenceError::AngleOutOfRange {
                value: theta_deg,
                min: 0.0,
                max: 90.0,
            });
        }
        Ok(Self { theta_deg })
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta_deg
    }

    /// θ_e = ψ + θ for a walk-off angle computed at this cut.
    pub fn extraordinary_angle_deg(&self, psi_deg: f64) -> f64 {
        self.theta_deg + psi_deg
    }
}

/// Walk-off angle ψ (degrees) between the ordinary and extraordinary rays:
///
/// tan ψ = (n_e² − n_o²)·cosθ·sinθ / (n_e²cos²θ + n_o²sin²θ)
///
/// The sign follows the sign of (n_e² − n_o²): negative for negative
/// uniaxial crystals such as calcite.
pub fn walkoff_angle(n_o: f64, n_e: f64, theta_deg: f64) -> Result<f64, BirefringenceError> {
    check_index(n_o)?;
    check_index(n_e)?;
    check_angle(theta_deg, 0.0, 90.0)?;
    let t = theta_deg.to_radians();
    let (s, c) = t.sin_cos();
    let num = (n_e * n_e - n_o * n_o) * c * s;
    let den = n_e * n_e * c * c + n_o * n_o * s * s;
    Ok(num.atan2(den).to_degrees())
}

/// Effective extraordinary index at wave angle θ_e:
///
/// 1/n_eff² = sin²θ_e/n_e² + cos²θ_e/n_o²
///
/// Monotone between n_o (θ_e = 0) and n_e (θ_e = 90°).
pub fn effective_index(n_o: f64, n_e: f64, theta_e_deg: f64) -> Result<f64, BirefringenceError> {
    check_index(n_o)?;
    check_index(n_e)?;
    check_angle(theta_e_deg, 0.0, 90.0)?;
    let t = theta_e_deg.to_radians();
    let (s, c) = t.sin_cos();
    let d = n_o * n_o * s * s + n_e * n_e * c * c;
    Ok(n_o * n_e / d.sqrt())
}

/// Temperature derivative of the effective extraordinary index, from
/// differentiating the effective-index expression at fixed θ_e:
///
/// dn_eff/dT = (n_e³cos²θ_e·dn_o/dT + n_o³sin²θ_e·dn_e/dT) / D^{3/2},
/// D = n_o²sin²θ_e + n_e²cos²θ_e.
///
/// Reduces to dn_o/dT at θ_e = 0 and dn_e/dT at θ_e = 90°.
pub fn effective_thermo_optic(
    n_o: f64,
    n_e: f64,
    dn_o_dt: f64,
    dn_e_dt: f64,
    theta_e_deg: f64,
) -> Result<f64, BirefringenceError> {
    check_index(n_o)?;
    check_index(n_e)?;
    check_angle(theta_e_deg, 0.0, 90.0)?;
    let t = theta_e_deg.to_radians();
    let (s, c) = t.sin_cos();
    let (s2, c2) = (s * s, c * c);
    let d = n_o * n_o * s2 + n_e * n_e * c2;
    Ok((n_e.powi(3) * c2 * dn_o_dt + n_o.powi(3) * s2 * dn_e_dt) / d.powf(1.5))
}
