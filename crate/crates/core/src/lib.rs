//! Design and analysis toolkit for beam-displacer Sagnac entangled-photon
//! sources.
//!
//! The crate models the optical train of a photon-pair source built from two
//! birefringent beam displacers around a Sagnac loop, and the counting-side
//! analysis of the photons it produces:
//!
//! * [`materials`] — refractive index, group index and thermo-optic data for
//!   uniaxial crystals, loaded from a versioned database file.
//! * [`birefringence`] — walk-off angle, effective extraordinary index and
//!   its temperature derivative for a given cut angle.
//! * [`interferometer`] — chromatic spatial/temporal walk-offs, mode-overlap
//!   factors, thermal and pump-wavelength phase sensitivities of the
//!   assembled source.
//! * [`counting`] — the pair + Raman + dark counting-rate model, derived
//!   metrics, a global nonlinear fit, and a Poissonian simulator.
//! * [`entanglement`] — polarization-correlation fringes, visibility, CHSH,
//!   and phase extraction from symmetrized heralding efficiencies.
//! * [`stability`] — overlapping-lag Allan deviation of a phase series and
//!   power-law slope identification.

pub mod birefringence;
pub mod counting;
pub mod entanglement;
pub mod interferometer;
pub mod materials;
pub mod numeric;
pub mod stability;

/// Speed of light in mm/ps (= m/µs = km/ms).
pub const SPEED_OF_LIGHT_MM_PER_PS: f64 = 0.299_792_458;
