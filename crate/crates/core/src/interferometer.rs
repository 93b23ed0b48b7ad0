//! Figures of merit of the assembled beam-displacer interferometer:
//! chromatic spatial and temporal walk-offs between pump and daughter
//! photons, Gaussian mode-overlap factors, the temperature sensitivity of
//! the entangled-state phase, and its sensitivity to pump-wavelength drift.
//!
//! Conventions (fixed by reproducing the reference design values):
//! the walk-off angle ψ carries the sign of (n_e² − n_o²); the
//! extraordinary wave angle is θ_e = θ + ψ(λ); walk-off differences are
//! daughter minus pump; the extraordinary group index derives from the
//! effective index with its full wavelength dependence (including the
//! chromatic walk-off angle); both rays are assigned the element length L
//! as their path.

use serde::Serialize;
use thiserror::Error;

use crate::birefringence::{self, BirefringenceError};
use crate::materials::{Material, MaterialError, Ray, STENCIL_MARGIN_NM};
use crate::numeric;
use crate::SPEED_OF_LIGHT_MM_PER_PS;

/// Reference temperature (kelvin) at which element lengths are quoted.
pub const REFERENCE_TEMPERATURE_K: f64 = 295.0;

/// Relative tolerance on SFWM energy conservation, loose enough to admit
/// wavelength triples quoted to the nanometer.
pub const ENERGY_CONSERVATION_REL_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Geometry(#[from] BirefringenceError),
    #[error("wavelength set violates SFWM energy conservation: |2/{pump} - 1/{signal} - 1/{idler}| exceeds {tol} relative")]
    EnergyConservation {
        pump: f64,
        signal: f64,
        idler: f64,
        tol: f64,
    },
    #[error("non-positive {what}: {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("compensator arm {arm:?} requires a compensator material")]
    CompensatorMaterialMissing { arm: CompensatedArm },
}

/// Pump/signal/idler wavelength triple obeying 2/λ_P = 1/λ_S + 1/λ_I.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WavelengthSet {
    pub pump_nm: f64,
    pub signal_nm: f64,
    pub idler_nm: f64,
}

impl WavelengthSet {
    pub fn new(pump_nm: f64, signal_nm: f64, idler_nm: f64) -> Result<Self, DesignError> {
        for (what, v) in [
            ("pump wavelength", pump_nm),
            ("signal wavelength", signal_nm),
            ("idler wavelength", idler_nm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(DesignError::NonPositive { what, value: v });
            }
        }
        let lhs = 2.0 / pump_nm;
        let mismatch = (lhs - 1.0 / signal_nm - 1.0 / idler_nm).abs();
        if mismatch > ENERGY_CONSERVATION_REL_TOL * lhs {
            return Err(DesignError::EnergyConservation {
                pump: pump_nm,
                signal: signal_nm,
                idler: idler_nm,
                tol: ENERGY_CONSERVATION_REL_TOL,
            });
        }
        Ok(Self {
            pump_nm,
            signal_nm,
            idler_nm,
        })
    }

    pub fn degenerate(wavelength_nm: f64) -> Result<Self, DesignError> {
        Self::new(wavelength_nm, wavelength_nm, wavelength_nm)
    }
}

/// A birefringent beam displacer: material, length and optic-axis cut angle.
#[derive(Debug, Clone)]
pub struct BeamDisplacer {
    pub material: Material,
    pub length_mm: f64,
    pub cut_angle_deg: f64,
}

impl BeamDisplacer {
    pub fn new(material: Material, length_mm: f64, cut_angle_deg: f64) -> Result<Self, DesignError> {
        if !(length_mm.is_finite() && length_mm > 0.0) {
            return Err(DesignError::NonPositive {
                what: "displacer length",
                value: length_mm,
            });
        }
        birefringence::CutGeometry::new(cut_angle_deg)?;
        Ok(Self {
            material,
            length_mm,
            cut_angle_deg,
        })
    }

    /// Length at temperature `t_k`, expanded from the reference temperature.
    pub fn length_at_mm(&self, t_k: f64) -> f64 {
        self.length_mm
            * (1.0 + self.material.thermal_expansion_per_k * (t_k - REFERENCE_TEMPERATURE_K))
    }

    fn walkoff_deg(&self, wavelength_nm: f64) -> Result<f64, DesignError> {
        let n_o = self.material.refractive_index(Ray::Ordinary, wavelength_nm)?;
        let n_e = self
            .material
            .refractive_index(Ray::Extraordinary, wavelength_nm)?;
        Ok(birefringence::walkoff_angle(n_o, n_e, self.cut_angle_deg)?)
    }

    /// Effective extraordinary index at θ_e(λ) = θ + ψ(λ).
    fn effective_index_at(&self, wavelength_nm: f64) -> Result<f64, DesignError> {
        let n_o = self.material.refractive_index(Ray::Ordinary, wavelength_nm)?;
        let n_e = self
            .material
            .refractive_index(Ray::Extraordinary, wavelength_nm)?;
        let theta_e = self.cut_angle_deg + birefringence::walkoff_angle(n_o, n_e, self.cut_angle_deg)?;
        Ok(birefringence::effective_index(n_o, n_e, theta_e)?)
    }

    /// Group index of the extraordinary ray, n_g = n_eff − λ·dn_eff/dλ,
    /// with the full wavelength dependence of θ_e(λ) retained.
    fn effective_group_index(&self, wavelength_nm: f64) -> Result<f64, DesignError> {
        self.check_stencil(wavelength_nm)?;
        let n = self.effective_index_at(wavelength_nm)?;
        let dn_dlam =
            numeric::richardson_derivative(|l| self.effective_index_at(l), wavelength_nm, 0.5, 1e-10)?;
        Ok(n - wavelength_nm * dn_dlam)
    }

    fn check_stencil(&self, wavelength_nm: f64) -> Result<(), DesignError> {
        let (lo, hi) = self.material.valid_range_nm;
        if wavelength_nm - lo < STENCIL_MARGIN_NM || hi - wavelength_nm < STENCIL_MARGIN_NM {
            return Err(MaterialError::StencilClearance {
                material: self.material.name.clone(),
                wavelength_nm,
                margin_nm: STENCIL_MARGIN_NM,
            }
            .into());
        }
        Ok(())
    }

    /// Per-wavelength arrival-time metric L·(n_g,e − n_g,o) in millimeters
    /// of optical path.
    fn arrival_metric_mm(&self, wavelength_nm: f64) -> Result<f64, DesignError> {
        let n_ge = self.effective_group_index(wavelength_nm)?;
        let n_go = self.material.group_index(Ray::Ordinary, wavelength_nm)?;
        Ok(self.length_mm * (n_ge - n_go))
    }

    /// Per-wavelength birefringent phase Δφ(λ) = (2π/λ)·L·(n_eff − n_o),
    /// in radians.
    fn relative_phase_rad(&self, wavelength_nm: f64) -> Result<f64, DesignError> {
        let n_eff = self.effective_index_at(wavelength_nm)?;
        let n_o = self.material.refractive_index(Ray::Ordinary, wavelength_nm)?;
        let length_nm = self.length_mm * 1e6;
        Ok(2.0 * std::f64::consts::PI * length_nm / wavelength_nm * (n_eff - n_o))
    }
}

/// Which interferometer arm a birefringent compensator plate sits in.
/// `Both` places the given plate in the signal arm and auto-sizes an idler
/// plate to null the idler's temporal walk-off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CompensatedArm {
    None,
    Signal,
    Idler,
    Both,
}

/// A birefringent compensator plate (a-cut; the beam sees the principal
/// indices with no walk-off). Orientation is resolved per arm so that the
/// plate's group delay opposes that arm's temporal walk-off.
#[derive(Debug, Clone)]
pub struct Compensator {
    pub material: Option<Material>,
    pub length_mm: f64,
    pub arm: CompensatedArm,
}

impl Compensator {
    pub fn none() -> Self {
        Self {
            material: None,
            length_mm: 0.0,
            arm: CompensatedArm::None,
        }
    }

    pub fn new(material: Material, length_mm: f64, arm: CompensatedArm) -> Result<Self, DesignError> {
        if !(length_mm.is_finite() && length_mm >= 0.0) {
            return Err(DesignError::NonPositive {
                what: "compensator length",
                value: length_mm,
            });
        }
        Ok(Self {
            material: Some(material),
            length_mm,
            arm,
        })
    }

    fn describe(&self) -> String {
        match (self.arm, &self.material) {
            (CompensatedArm::None, _) | (_, None) => "none".to_string(),
            (arm, Some(m)) => format!("{:?} arm(s), {} {:.3} mm", arm, m.name, self.length_mm),
        }
    }
}

/// One resolved compensator plate: arm wavelength, length, orientation.
struct CompensatorLeg {
    material: Material,
    length_mm: f64,
    sign: f64,
    on_signal: bool,
}

fn plate_group_birefringence(material: &Material, wavelength_nm: f64) -> Result<f64, DesignError> {
    Ok(material.group_index(Ray::Extraordinary, wavelength_nm)?
        - material.group_index(Ray::Ordinary, wavelength_nm)?)
}

fn resolve_compensator_legs(
    bd: &BeamDisplacer,
    wl: &WavelengthSet,
    comp: &Compensator,
) -> Result<Vec<CompensatorLeg>, DesignError> {
    if comp.arm == CompensatedArm::None {
        return Ok(Vec::new());
    }
    let material = comp
        .material
        .clone()
        .ok_or(DesignError::CompensatorMaterialMissing { arm: comp.arm })?;
    let (dt_s, dt_i) = temporal_walkoff(bd, wl)?;
    let mut legs = Vec::new();
    let mut push = |on_signal: bool, length_mm: f64| -> Result<(), DesignError> {
        let (lam, dt) = if on_signal {
            (wl.signal_nm, dt_s)
        } else {
            (wl.idler_nm, dt_i)
        };
        let dng = plate_group_birefringence(&material, lam)?;
        // orientation that drives the arm's arrival residual toward zero
        let sign = if dt * dng >= 0.0 { -1.0 } else { 1.0 };
        legs.push(CompensatorLeg {
            material: material.clone(),
            length_mm,
            sign,
            on_signal,
        });
        Ok(())
    };
    match comp.arm {
        CompensatedArm::Signal => push(true, comp.length_mm)?,
        CompensatedArm::Idler => push(false, comp.length_mm)?,
        CompensatedArm::Both => {
            push(true, comp.length_mm)?;
            let dng_i = plate_group_birefringence(&material, wl.idler_nm)?;
            let null_len = (dt_i * SPEED_OF_LIGHT_MM_PER_PS / dng_i).abs();
            push(false, null_len)?;
        }
        CompensatedArm::None => unreachable!(),
    }
    Ok(legs)
}

/// How the daughter wavelengths respond when the pump wavelength is varied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PumpTuning {
    /// Signal and idler held fixed (energy conservation abandoned away
    /// from the design point).
    Fixed,
    /// Signal held fixed; idler re-solved from energy conservation.
    PinSignal,
    /// Both daughters shift by the pump's frequency shift (constant
    /// phase-matched detuning); energy conservation holds identically.
    #[default]
    PinDetuning,
}

impl PumpTuning {
    pub fn label(&self) -> &'static str {
        match self {
            PumpTuning::Fixed => "fixed",
            PumpTuning::PinSignal => "pin-signal",
            PumpTuning::PinDetuning => "pin-detuning",
        }
    }
}

/// Spatial walk-off mismatch (Δd_S, Δd_I) in millimeters:
/// Δd_x = L·tanψ(λ_x) − L·tanψ(λ_P).
pub fn spatial_walkoff(bd: &BeamDisplacer, wl: &WavelengthSet) -> Result<(f64, f64), DesignError> {
    let disp = |lam: f64| -> Result<f64, DesignError> {
        Ok(bd.length_mm * bd.walkoff_deg(lam)?.to_radians().tan())
    };
    let pump = disp(wl.pump_nm)?;
    Ok((disp(wl.signal_nm)? - pump, disp(wl.idler_nm)? - pump))
}

/// Temporal walk-off (ΔT_S, ΔT_I) in picoseconds:
/// ΔT_x = [L·Δn_g(λ_x) − L·Δn_g(λ_P)]/c with Δn_g = n_g,e − n_g,o.
pub fn temporal_walkoff(bd: &BeamDisplacer, wl: &WavelengthSet) -> Result<(f64, f64), DesignError> {
    let pump = bd.arrival_metric_mm(wl.pump_nm)?;
    let signal = bd.arrival_metric_mm(wl.signal_nm)?;
    let idler = bd.arrival_metric_mm(wl.idler_nm)?;
    Ok((
        (signal - pump) / SPEED_OF_LIGHT_MM_PER_PS,
        (idler - pump) / SPEED_OF_LIGHT_MM_PER_PS,
    ))
}

/// Temperature sensitivity of the entangled-state phase, in degrees per
/// kelvin: dφ/dT = 2·dΔφ(λ_P)/dT − dΔφ(λ_S)/dT − dΔφ(λ_I)/dT with
/// dΔφ(λ)/dT = (2π/λ)·L(T)·[(dn_eff/dT − dn_o/dT) + (n_eff − n_o)·α].
pub fn thermal_phase_sensitivity(
    bd: &BeamDisplacer,
    wl: &WavelengthSet,
    temperature_k: f64,
) -> Result<f64, DesignError> {
    let alpha = bd.material.thermal_expansion_per_k;
    let length_nm = bd.length_at_mm(temperature_k) * 1e6;
    let term = |lam: f64| -> Result<f64, DesignError> {
        let n_o = bd.material.refractive_index(Ray::Ordinary, lam)?;
        let n_e = bd.material.refractive_index(Ray::Extraordinary, lam)?;
        let dn_o = bd.material.thermo_optic(Ray::Ordinary, lam)?;
        let dn_e = bd.material.thermo_optic(Ray::Extraordinary, lam)?;
        let theta_e = bd.cut_angle_deg + birefringence::walkoff_angle(n_o, n_e, bd.cut_angle_deg)?;
        let n_eff = birefringence::effective_index(n_o, n_e, theta_e)?;
        let dn_eff = birefringence::effective_thermo_optic(n_o, n_e, dn_o, dn_e, theta_e)?;
        let bracket = (dn_eff - dn_o) + (n_eff - n_o) * alpha;
        Ok(2.0 * std::f64::consts::PI * length_nm / lam * bracket)
    };
    let rad_per_k = 2.0 * term(wl.pump_nm)? - term(wl.signal_nm)? - term(wl.idler_nm)?;
    Ok(rad_per_k.to_degrees())
}

/// Overlap of two equal, laterally displaced Gaussian amplitude modes with
/// the quoted width taken as the 1/e-intensity full width:
/// ∫F₁F₂ = exp(−(Δd/D)²).
pub fn gaussian_overlap_spatial(delta_mm: f64, beam_diameter_1e_mm: f64) -> Result<f64, DesignError> {
    if !(beam_diameter_1e_mm.is_finite() && beam_diameter_1e_mm > 0.0) {
        return Err(DesignError::NonPositive {
            what: "beam diameter",
            value: beam_diameter_1e_mm,
        });
    }
    let r = delta_mm / beam_diameter_1e_mm;
    Ok((-r * r).exp())
}

/// One-dimensional analogue for temporally displaced wavepackets.
pub fn gaussian_overlap_temporal(delta_ps: f64, width_1e_ps: f64) -> Result<f64, DesignError> {
    if !(width_1e_ps.is_finite() && width_1e_ps > 0.0) {
        return Err(DesignError::NonPositive {
            what: "pulse width",
            value: width_1e_ps,
        });
    }
    let r = delta_ps / width_1e_ps;
    Ok((-r * r).exp())
}

/// Total relative phase of the entangled state (radians) for a trial pump
/// wavelength, with daughter wavelengths resolved per `tuning` and the
/// compensator legs already resolved at the design point.
fn total_phase_rad(
    bd: &BeamDisplacer,
    design: &WavelengthSet,
    legs: &[CompensatorLeg],
    tuning: PumpTuning,
    pump_nm: f64,
) -> Result<f64, DesignError> {
    let (signal, idler) = match tuning {
        PumpTuning::Fixed => (design.signal_nm, design.idler_nm),
        PumpTuning::PinSignal => (
            design.signal_nm,
            1.0 / (2.0 / pump_nm - 1.0 / design.signal_nm),
        ),
        PumpTuning::PinDetuning => {
            let dv = 1.0 / pump_nm - 1.0 / design.pump_nm;
            (
                1.0 / (1.0 / design.signal_nm + dv),
                1.0 / (1.0 / design.idler_nm + dv),
            )
        }
    };
    let mut phi = 2.0 * bd.relative_phase_rad(pump_nm)?
        - bd.relative_phase_rad(signal)?
        - bd.relative_phase_rad(idler)?;
    for leg in legs {
        let lam = if leg.on_signal { signal } else { idler };
        let n_o = leg.material.refractive_index(Ray::Ordinary, lam)?;
        let n_e = leg.material.refractive_index(Ray::Extraordinary, lam)?;
        let length_nm = leg.length_mm * 1e6;
        phi += leg.sign * 2.0 * std::f64::consts::PI * length_nm / lam * (n_e - n_o);
    }
    Ok(phi)
}

/// Sensitivity of the entangled-state phase to pump-wavelength drift, in
/// radians per nanometer: a Richardson-refined central difference of the
/// total relative phase with a 0.01 nm step.
pub fn pump_phase_sensitivity(
    bd: &BeamDisplacer,
    wl: &WavelengthSet,
    comp: &Compensator,
    tuning: PumpTuning,
) -> Result<f64, DesignError> {
    let legs = resolve_compensator_legs(bd, wl, comp)?;
    numeric::richardson_fixed_step(
        |pump_nm| total_phase_rad(bd, wl, &legs, tuning, pump_nm),
        wl.pump_nm,
        0.01,
    )
}

/// Inputs beyond the displacer and wavelengths needed for a full report.
#[derive(Debug, Clone)]
pub struct DesignOptions {
    pub beam_diameter_1e_mm: f64,
    pub pulse_width_1e_ps: f64,
    pub temperature_k: f64,
    pub pump_tuning: PumpTuning,
    pub compensator: Compensator,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            beam_diameter_1e_mm: 1.1,
            pulse_width_1e_ps: 1.3,
            temperature_k: REFERENCE_TEMPERATURE_K,
            pump_tuning: PumpTuning::default(),
            compensator: Compensator::none(),
        }
    }
}

/// Aggregated design figures of merit, with the parameters echoed.
#[derive(Debug, Clone, Serialize)]
pub struct WalkoffReport {
    pub material: String,
    pub length_mm: f64,
    pub cut_angle_deg: f64,
    pub pump_nm: f64,
    pub signal_nm: f64,
    pub idler_nm: f64,
    pub temperature_k: f64,
    pub beam_diameter_1e_mm: f64,
    pub pulse_width_1e_ps: f64,
    pub width_convention: String,
    pub compensator: String,
    pub pump_tuning: String,
    pub delta_d_signal_mm: f64,
    pub delta_d_idler_mm: f64,
    pub delta_t_signal_ps: f64,
    pub delta_t_idler_ps: f64,
    pub dphi_dt_deg_per_k: f64,
    pub overlap_spatial_signal: f64,
    pub overlap_spatial_idler: f64,
    pub overlap_temporal_signal: f64,
    pub overlap_temporal_idler: f64,
    pub dphi_dpump_rad_per_nm: f64,
}

/// Runs every design figure of merit and aggregates them; each field equals
/// the corresponding standalone operation's output bitwise.
pub fn design_report(
    bd: &BeamDisplacer,
    wl: &WavelengthSet,
    opts: &DesignOptions,
) -> Result<WalkoffReport, DesignError> {
    let (dd_s, dd_i) = spatial_walkoff(bd, wl)?;
    let (dt_s, dt_i) = temporal_walkoff(bd, wl)?;
    let dphi_dt = thermal_phase_sensitivity(bd, wl, opts.temperature_k)?;
    let dphi_dpump = pump_phase_sensitivity(bd, wl, &opts.compensator, opts.pump_tuning)?;
    Ok(WalkoffReport {
        material: bd.material.name.clone(),
        length_mm: bd.length_mm,
        cut_angle_deg: bd.cut_angle_deg,
        pump_nm: wl.pump_nm,
        signal_nm: wl.signal_nm,
        idler_nm: wl.idler_nm,
        temperature_k: opts.temperature_k,
        beam_diameter_1e_mm: opts.beam_diameter_1e_mm,
        pulse_width_1e_ps: opts.pulse_width_1e_ps,
        width_convention: "1/e-intensity full width".to_string(),
        compensator: opts.compensator.describe(),
        pump_tuning: opts.pump_tuning.label().to_string(),
        delta_d_signal_mm: dd_s,
        delta_d_idler_mm: dd_i,
        delta_t_signal_ps: dt_s,
        delta_t_idler_ps: dt_i,
        dphi_dt_deg_per_k: dphi_dt,
        overlap_spatial_signal: gaussian_overlap_spatial(dd_s, opts.beam_diameter_1e_mm)?,
        overlap_spatial_idler: gaussian_overlap_spatial(dd_i, opts.beam_diameter_1e_mm)?,
        overlap_temporal_signal: gaussian_overlap_temporal(dt_s, opts.pulse_width_1e_ps)?,
        overlap_temporal_idler: gaussian_overlap_temporal(dt_i, opts.pulse_width_1e_ps)?,
        dphi_dpump_rad_per_nm: dphi_dpump,
    })
}

/// Fixed-width text table over a set of reports, one row per material.
pub fn format_table(reports: &[WalkoffReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>9} {:>9} {:>9} {:>9} {:>14}\n",
        "Material", "dT_S(ps)", "dT_I(ps)", "dd_S(mm)", "dd_I(mm)", "dphi/dT(deg/K)"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<12} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>14.2}\n",
            r.material,
            r.delta_t_signal_ps,
            r.delta_t_idler_ps,
            r.delta_d_signal_mm,
            r.delta_d_idler_mm,
            r.dphi_dt_deg_per_k,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::MaterialDb;
    use approx::assert_relative_eq;

    fn db() -> MaterialDb {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/materials.toml");
        MaterialDb::load(path).expect("database loads")
    }

    fn calcite_bd() -> BeamDisplacer {
        BeamDisplacer::new(db().get("calcite").unwrap().clone(), 40.0, 45.0).unwrap()
    }

    fn paper_wavelengths() -> WavelengthSet {
        WavelengthSet::new(940.0, 764.0, 1221.0).unwrap()
    }

    #[test]
    fn wavelength_set_accepts_quoted_triple_and_rejects_garbage() {
        assert!(WavelengthSet::new(940.0, 764.0, 1221.0).is_ok());
        assert!(WavelengthSet::new(940.0, 764.0, 900.0).is_err());
        assert!(WavelengthSet::new(-940.0, 764.0, 1221.0).is_err());
    }

    #[test]
    fn degenerate_wavelengths_cancel_everything() {
        let bd = calcite_bd();
        let wl = WavelengthSet::degenerate(940.0).unwrap();
        let (dd_s, dd_i) = spatial_walkoff(&bd, &wl).unwrap();
        assert_eq!((dd_s, dd_i), (0.0, 0.0));
        let (dt_s, dt_i) = temporal_walkoff(&bd, &wl).unwrap();
        assert!(dt_s.abs() < 1e-12 && dt_i.abs() < 1e-12);
        let dphi = thermal_phase_sensitivity(&bd, &wl, REFERENCE_TEMPERATURE_K).unwrap();
        assert!(dphi.abs() < 1e-12, "dphi/dT = {dphi}");
        let sens =
            pump_phase_sensitivity(&bd, &wl, &Compensator::none(), PumpTuning::PinDetuning)
                .unwrap();
        assert!(sens.abs() < 1e-9, "dphi/dlambda = {sens}");
    }

    #[test]
    fn calcite_walkoffs_match_frozen_reference() {
        // frozen from the pre-build high-precision evaluation
        let bd = calcite_bd();
        let wl = paper_wavelengths();
        let (dd_s, dd_i) = spatial_walkoff(&bd, &wl).unwrap();
        assert_relative_eq!(dd_s, -0.066896, epsilon = 5e-5);
        assert_relative_eq!(dd_i, 0.090816, epsilon = 5e-5);
        let (dt_s, dt_i) = temporal_walkoff(&bd, &wl).unwrap();
        assert_relative_eq!(dt_s, -0.203794, epsilon = 2e-4);
        assert_relative_eq!(dt_i, 0.064976, epsilon = 2e-4);
    }

    #[test]
    fn walkoffs_scale_linearly_with_length() {
        let db = db();
        let wl = paper_wavelengths();
        let bd1 = BeamDisplacer::new(db.get("calcite").unwrap().clone(), 40.0, 45.0).unwrap();
        let bd2 = BeamDisplacer::new(db.get("calcite").unwrap().clone(), 80.0, 45.0).unwrap();
        let (a1, b1) = spatial_walkoff(&bd1, &wl).unwrap();
        let (a2, b2) = spatial_walkoff(&bd2, &wl).unwrap();
        assert_relative_eq!(a2 / a1, 2.0, max_relative = 1e-10);
        assert_relative_eq!(b2 / b1, 2.0, max_relative = 1e-10);
        let (t1, u1) = temporal_walkoff(&bd1, &wl).unwrap();
        let (t2, u2) = temporal_walkoff(&bd2, &wl).unwrap();
        assert_relative_eq!(t2 / t1, 2.0, max_relative = 1e-8);
        assert_relative_eq!(u2 / u1, 2.0, max_relative = 1e-8);
        let p1 = thermal_phase_sensitivity(&bd1, &wl, REFERENCE_TEMPERATURE_K).unwrap();
        let p2 = thermal_phase_sensitivity(&bd2, &wl, REFERENCE_TEMPERATURE_K).unwrap();
        assert_relative_eq!(p2 / p1, 2.0, max_relative = 1e-10);
    }

    #[test]
    fn overlap_trivials_and_monotonicity() {
        assert_eq!(gaussian_overlap_spatial(0.0, 1.1).unwrap(), 1.0);
        assert_eq!(gaussian_overlap_temporal(0.0, 1.3).unwrap(), 1.0);
        let mut prev = 1.0;
        for i in 1..=50 {
            let d = i as f64 * 0.02;
            let o = gaussian_overlap_spatial(d, 1.1).unwrap();
            assert!(o < prev);
            prev = o;
        }
        assert!(gaussian_overlap_spatial(0.1, 0.0).is_err());
        assert!(gaussian_overlap_temporal(0.1, -1.0).is_err());
    }

    #[test]
    fn overlap_published_values() {
        // spatial overlaps above 99% at the 1.1 mm beam diameter
        assert!(gaussian_overlap_spatial(0.09, 1.1).unwrap() > 0.99);
        assert!(gaussian_overlap_spatial(0.07, 1.1).unwrap() > 0.99);
        // idler temporal overlap 0.998 within 0.002 at 1.3 ps
        let idler = gaussian_overlap_temporal(0.06, 1.3).unwrap();
        assert!((idler - 0.998).abs() < 0.002, "idler overlap {idler}");
    }

    #[test]
    fn pump_sensitivity_matches_temporal_residual_identity() {
        // Under pin-detuning, dφ/dλ_P = (2πc/λ_P²)·Σ(arm temporal residual
        // minus compensator delay) exactly; an independent cross-check of
        // the whole phase chain against the temporal chain.
        let db = db();
        let bd = calcite_bd();
        let wl = paper_wavelengths();
        let quartz = db.get("quartz").unwrap().clone();
        let comp = Compensator::new(quartz.clone(), 16.0, CompensatedArm::Signal).unwrap();
        let sens = pump_phase_sensitivity(&bd, &wl, &comp, PumpTuning::PinDetuning).unwrap();

        let (dt_s, dt_i) = temporal_walkoff(&bd, &wl).unwrap();
        let dng = plate_group_birefringence(&quartz, wl.signal_nm).unwrap();
        let dt_q = 16.0 * dng / SPEED_OF_LIGHT_MM_PER_PS; // ps, nulling sign = +
        let c_nm_per_ps = SPEED_OF_LIGHT_MM_PER_PS * 1e6;
        let expected = 2.0 * std::f64::consts::PI * c_nm_per_ps / (wl.pump_nm * wl.pump_nm)
            * ((dt_s - dt_q) + dt_i);
        assert_relative_eq!(sens, expected, max_relative = 1e-5);
    }

    #[test]
    fn pump_sensitivity_frozen_values() {
        let db = db();
        let bd = calcite_bd();
        let wl = paper_wavelengths();
        let quartz = db.get("quartz").unwrap().clone();
        let bare =
            pump_phase_sensitivity(&bd, &wl, &Compensator::none(), PumpTuning::PinDetuning)
                .unwrap();
        assert_relative_eq!(bare, -0.295930, epsilon = 5e-4);
        let sig16 = Compensator::new(quartz.clone(), 16.0, CompensatedArm::Signal).unwrap();
        let s = pump_phase_sensitivity(&bd, &wl, &sig16, PumpTuning::PinDetuning).unwrap();
        assert_relative_eq!(s, -1.378502, epsilon = 1e-3);
        let both = Compensator::new(quartz, 16.0, CompensatedArm::Both).unwrap();
        let b = pump_phase_sensitivity(&bd, &wl, &both, PumpTuning::PinDetuning).unwrap();
        assert_relative_eq!(b, -1.239986, epsilon = 1e-3);
    }

    #[test]
    fn fixed_tuning_is_dominated_by_the_pump_leg() {
        let bd = calcite_bd();
        let wl = paper_wavelengths();
        let sens = pump_phase_sensitivity(&bd, &wl, &Compensator::none(), PumpTuning::Fixed)
            .unwrap();
        assert!(sens > 40.0 && sens < 50.0, "fixed-tuning sens {sens}");
    }

    #[test]
    fn report_fields_equal_component_outputs_bitwise() {
        let bd = calcite_bd();
        let wl = paper_wavelengths();
        let opts = DesignOptions::default();
        let report = design_report(&bd, &wl, &opts).unwrap();
        let (dd_s, dd_i) = spatial_walkoff(&bd, &wl).unwrap();
        let (dt_s, dt_i) = temporal_walkoff(&bd, &wl).unwrap();
        assert_eq!(report.delta_d_signal_mm.to_bits(), dd_s.to_bits());
        assert_eq!(report.delta_d_idler_mm.to_bits(), dd_i.to_bits());
        assert_eq!(report.delta_t_signal_ps.to_bits(), dt_s.to_bits());
        assert_eq!(report.delta_t_idler_ps.to_bits(), dt_i.to_bits());
        assert_eq!(
            report.dphi_dt_deg_per_k.to_bits(),
            thermal_phase_sensitivity(&bd, &wl, opts.temperature_k)
                .unwrap()
                .to_bits()
        );
        assert_eq!(
            report.overlap_spatial_signal.to_bits(),
            gaussian_overlap_spatial(dd_s, 1.1).unwrap().to_bits()
        );
    }

    #[test]
    fn report_survives_database_round_trip_bit_identically() {
        let db1 = db();
        let db2 = MaterialDb::parse(&db1.to_toml_string()).unwrap();
        let wl = paper_wavelengths();
        for name in ["calcite", "alpha-bbo", "yvo4"] {
            let bd1 = BeamDisplacer::new(db1.get(name).unwrap().clone(), 40.0, 45.0).unwrap();
            let bd2 = BeamDisplacer::new(db2.get(name).unwrap().clone(), 40.0, 45.0).unwrap();
            let r1 = design_report(&bd1, &wl, &DesignOptions::default()).unwrap();
            let r2 = design_report(&bd2, &wl, &DesignOptions::default()).unwrap();
            assert_eq!(r1.delta_d_signal_mm.to_bits(), r2.delta_d_signal_mm.to_bits());
            assert_eq!(r1.delta_t_signal_ps.to_bits(), r2.delta_t_signal_ps.to_bits());
            assert_eq!(r1.delta_t_idler_ps.to_bits(), r2.delta_t_idler_ps.to_bits());
            assert_eq!(r1.dphi_dt_deg_per_k.to_bits(), r2.dphi_dt_deg_per_k.to_bits());
        }
    }

    #[test]
    fn out_of_range_wavelength_is_reported() {
        let bd = calcite_bd();
        // 470 nm pump keeps energy conservation with 400/570-ish daughters
        let wl = WavelengthSet::new(100.0, 100.0, 100.0);
        assert!(wl.is_err() || spatial_walkoff(&bd, &wl.unwrap()).is_err());
        // inside the valid range but within the derivative stencil margin
        let wl = WavelengthSet::degenerate(205.0).unwrap();
        assert!(matches!(
            temporal_walkoff(&bd, &wl),
            Err(DesignError::Material(MaterialError::StencilClearance { .. }))
        ));
    }

    #[test]
    fn table_formatting_is_fixed_width() {
        let bd = calcite_bd();
        let wl = paper_wavelengths();
        let r = design_report(&bd, &wl, &DesignOptions::default()).unwrap();
        let text = format_table(&[r]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("Material"));
        assert!(lines[1].starts_with("calcite"));
    }
}
