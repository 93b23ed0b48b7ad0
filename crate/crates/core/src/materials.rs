//! Wavelength- and temperature-dependent refractive properties of uniaxial
//! birefringent materials, loaded from a versioned database file.
//!
//! The database is a human-editable TOML document. Every material carries
//! two dispersion models (ordinary and extraordinary ray), two tabulated
//! thermo-optic coefficient sets, a linear thermal-expansion coefficient
//! along the propagation direction, a validity range and a citation string.
//! Dispersion coefficients take wavelengths in micrometers; the public API
//! takes nanometers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric;

/// Schema version this build understands. Database files declaring any
/// other version are rejected.
pub const SCHEMA_VERSION: u32 = 1;

/// Clearance (in nm) required between a group-index evaluation point and
/// the edge of the valid range, so the derivative stencil stays in range.
pub const STENCIL_MARGIN_NM: f64 = 2.0;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("wavelength {wavelength_nm} nm is outside the valid range [{min_nm}, {max_nm}] nm of {material}")]
    WavelengthOutOfRange {
        material: String,
        wavelength_nm: f64,
        min_nm: f64,
        max_nm: f64,
    },
    #[error("wavelength {wavelength_nm} nm is within {margin_nm} nm of a valid-range boundary of {material}; the derivative stencil needs clearance")]
    StencilClearance {
        material: String,
        wavelength_nm: f64,
        margin_nm: f64,
    },
    #[error("material not found in database: {0}")]
    NotFound(String),
    #[error("unsupported database schema version {found} (this build reads version {supported})")]
    SchemaVersion { found: u32, supported: u32 },
    #[error("material database: {0}")]
    Database(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Polarization eigenmode of a uniaxial crystal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ray {
    Ordinary,
    Extraordinary,
}

impl fmt::Display for Ray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ray::Ordinary => write!(f, "o"),
            Ray::Extraordinary => write!(f, "e"),
        }
    }
}

/// Functional form of a dispersion model. The coefficient layout depends on
/// the tag; wavelength arguments are in micrometers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionForm {
    /// n² = 1 + A + Σᵢ Bᵢλ²/(λ² − Cᵢ); coefficients `[A, B₁, C₁, B₂, C₂, …]`.
    Sellmeier,
    /// n² = A + B/(λ² − C) + Dλ²; coefficients `[A, B, C, D]`.
    PoleQuadratic,
}

/// One ray's dispersion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub form: DispersionForm,
    pub coefficients: Vec<f64>,
}

impl Dispersion {
    fn validate(&self, what: &str) -> Result<(), MaterialError> {
        let n = self.coefficients.len();
        let ok = match self.form {
            DispersionForm::Sellmeier => n >= 1 && n % 2 == 1,
            DispersionForm::PoleQuadratic => n == 4,
        };
        if !ok {
            return Err(MaterialError::Database(format!(
                "{what}: form {:?} does not accept {n} coefficients",
                self.form
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(MaterialError::Database(format!(
                "{what}: non-finite coefficient"
            )));
        }
        Ok(())
    }

    fn n_squared(&self, lambda_um: f64) -> f64 {
        let l2 = lambda_um * lambda_um;
        match self.form {
            DispersionForm::Sellmeier => {
                let mut acc = 1.0 + self.coefficients[0];
                for pair in self.coefficients[1..].chunks_exact(2) {
                    acc += pair[0] * l2 / (l2 - pair[1]);
                }
                acc
            }
            DispersionForm::PoleQuadratic => {
                let [a, b, c, d] = [
                    self.coefficients[0],
                    self.coefficients[1],
                    self.coefficients[2],
                    self.coefficients[3],
                ];
                a + b / (l2 - c) + d * l2
            }
        }
    }

    fn index(&self, lambda_um: f64) -> f64 {
        self.n_squared(lambda_um).sqrt()
    }

    /// Analytic dn/dλ in 1/µm.
    fn dn_dlambda(&self, lambda_um: f64) -> f64 {
        let l2 = lambda_um * lambda_um;
        // d(n²)/d(λ²)
        let dn2_dl2 = match self.form {
            DispersionForm::Sellmeier => self.coefficients[1..]
                .chunks_exact(2)
                .map(|pair| -pair[0] * pair[1] / ((l2 - pair[1]) * (l2 - pair[1])))
                .sum::<f64>(),
            DispersionForm::PoleQuadratic => {
                let b = self.coefficients[1];
                let c = self.coefficients[2];
                let d = self.coefficients[3];
                d - b / ((l2 - c) * (l2 - c))
            }
        };
        lambda_um * dn2_dl2 / self.index(lambda_um)
    }
}

/// Tabulated dn/dT samples: `(wavelength_um, per kelvin)`, strictly
/// increasing in wavelength. Evaluation is piecewise linear inside the
/// table span and extrapolates with the nearest segment's slope outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoOpticTable {
    pub samples: Vec<(f64, f64)>,
}

impl ThermoOpticTable {
    fn validate(&self, what: &str) -> Result<(), MaterialError> {
        if self.samples.is_empty() {
            return Err(MaterialError::Database(format!(
                "{what}: thermo-optic table is empty"
            )));
        }
        if self
            .samples
            .iter()
            .any(|(w, v)| !w.is_finite() || !v.is_finite())
        {
            return Err(MaterialError::Database(format!(
                "{what}: non-finite thermo-optic sample"
            )));
        }
        if self.samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(MaterialError::Database(format!(
                "{what}: thermo-optic wavelengths must be strictly increasing"
            )));
        }
        Ok(())
    }

    fn evaluate(&self, lambda_um: f64) -> f64 {
        let s = &self.samples;
        if s.len() == 1 {
            return s[0].1;
        }
        let seg = if lambda_um <= s[0].0 {
            (s[0], s[1])
        } else if lambda_um >= s[s.len() - 1].0 {
            (s[s.len() - 2], s[s.len() - 1])
        } else {
            let i = s.partition_point(|(w, _)| *w <= lambda_um);
            (s[i - 1], s[i])
        };
        let ((w0, v0), (w1, v1)) = seg;
        v0 + (v1 - v0) * (lambda_um - w0) / (w1 - w0)
    }
}

/// One uniaxial material: dispersion for both rays, thermo-optic tables,
/// scalar thermal expansion along the propagation direction, and the
/// wavelength range over which the models are trusted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    #[serde(default)]
    pub name: String,
    pub citation: String,
    /// `[min, max]` in nanometers.
    pub valid_range_nm: (f64, f64),
    pub thermal_expansion_per_k: f64,
    pub sellmeier_o: Dispersion,
    pub sellmeier_e: Dispersion,
    pub thermo_optic_o: ThermoOpticTable,
    pub thermo_optic_e: ThermoOpticTable,
}

impl Material {
    /// Validates the structural invariants plus a grid scan of both indices
    /// over the valid range (finite and > 1 everywhere).
    pub fn validate(&self) -> Result<(), MaterialError> {
        let name = &self.name;
        let (lo, hi) = self.valid_range_nm;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
            return Err(MaterialError::Database(format!(
                "{name}: valid_range_nm [{lo}, {hi}] is empty or non-finite"
            )));
        }
        if !self.thermal_expansion_per_k.is_finite() {
            return Err(MaterialError::Database(format!(
                "{name}: thermal expansion coefficient is not finite"
            )));
        }
        self.sellmeier_o.validate(&format!("{name}.sellmeier_o"))?;
        self.sellmeier_e.validate(&format!("{name}.sellmeier_e"))?;
        self.thermo_optic_o
            .validate(&format!("{name}.thermo_optic_o"))?;
        self.thermo_optic_e
            .validate(&format!("{name}.thermo_optic_e"))?;
        for i in 0..=64 {
            let lam = lo + (hi - lo) * (i as f64) / 64.0;
            for (tag, disp) in [("o", &self.sellmeier_o), ("e", &self.sellmeier_e)] {
                let n = disp.index(lam / 1000.0);
                if !n.is_finite() || n <= 1.0 {
                    return Err(MaterialError::Database(format!(
                        "{name}: n_{tag}({lam:.1} nm) = {n} is not a physical index"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_range(&self, wavelength_nm: f64) -> Result<(), MaterialError> {
        let (lo, hi) = self.valid_range_nm;
        if wavelength_nm < lo || wavelength_nm > hi || !wavelength_nm.is_finite() {
            return Err(MaterialError::WavelengthOutOfRange {
                material: self.name.clone(),
                wavelength_nm,
                min_nm: lo,
                max_nm: hi,
            });
        }
        Ok(())
    }

    fn dispersion(&self, ray: Ray) -> &Dispersion {
        match ray {
            Ray::Ordinary => &self.sellmeier_o,
            Ray::Extraordinary => &self.sellmeier_e,
        }
    }

    /// Principal refractive index at `wavelength_nm`.
    pub fn refractive_index(&self, ray: Ray, wavelength_nm: f64) -> Result<f64, MaterialError> {
        self.check_range(wavelength_nm)?;
        Ok(self.dispersion(ray).index(wavelength_nm / 1000.0))
    }

    /// Group index n_g = n − λ·dn/dλ. Requires [`STENCIL_MARGIN_NM`] of
    /// clearance from the range boundaries so that derivative stencils
    /// (this analytic path and any finite-difference cross-check) share a
    /// domain.
    pub fn group_index(&self, ray: Ray, wavelength_nm: f64) -> Result<f64, MaterialError> {
        self.check_range(wavelength_nm)?;
        let (lo, hi) = self.valid_range_nm;
        if wavelength_nm - lo < STENCIL_MARGIN_NM || hi - wavelength_nm < STENCIL_MARGIN_NM {
            return Err(MaterialError::StencilClearance {
                material: self.name.clone(),
                wavelength_nm,
                margin_nm: STENCIL_MARGIN_NM,
            });
        }
        let disp = self.dispersion(ray);
        let lambda_um = wavelength_nm / 1000.0;
        Ok(disp.index(lambda_um) - lambda_um * disp.dn_dlambda(lambda_um))
    }

    /// Numeric dn/dλ (per µm) by adaptive Richardson extrapolation; the
    /// independent cross-check of the analytic path used by `group_index`.
    pub fn dn_dlambda_numeric(&self, ray: Ray, wavelength_nm: f64) -> Result<f64, MaterialError> {
        self.check_range(wavelength_nm)?;
        let disp = self.dispersion(ray);
        numeric::richardson_derivative(
            |l_um| Ok::<_, MaterialError>(disp.index(l_um)),
            wavelength_nm / 1000.0,
            5e-4,
            1e-11,
        )
    }

    /// dn/dT at `wavelength_nm` by linear interpolation of the tabulated
    /// samples, extrapolating with the end-segment slope outside the table.
    pub fn thermo_optic(&self, ray: Ray, wavelength_nm: f64) -> Result<f64, MaterialError> {
        let table = match ray {
            Ray::Ordinary => &self.thermo_optic_o,
            Ray::Extraordinary => &self.thermo_optic_e,
        };
        if table.samples.is_empty() {
            return Err(MaterialError::Database(format!(
                "{}: thermo-optic table for ray {ray} is empty",
                self.name
            )));
        }
        Ok(table.evaluate(wavelength_nm / 1000.0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DbFile {
    schema_version: u32,
    #[serde(default)]
    version: String,
    materials: BTreeMap<String, Material>,
}

/// The material database: loaded once, immutable afterwards.
#[derive(Debug, Clone)]
pub struct MaterialDb {
    version: String,
    materials: BTreeMap<String, Material>,
}

impl MaterialDb {
    pub fn parse(toml_text: &str) -> Result<Self, MaterialError> {
        let file: DbFile =
            toml::from_str(toml_text).map_err(|e| MaterialError::Database(e.to_string()))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(MaterialError::SchemaVersion {
                found: file.schema_version,
                supported: SCHEMA_VERSION,
            });
        }
        let mut materials = file.materials;
        for (key, mat) in materials.iter_mut() {
            mat.name = key.clone();
            mat.validate()?;
        }
        Ok(Self {
            version: file.version,
            materials,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MaterialError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Serializes back to the database file format (round-trip exact for
    /// f64 values).
    pub fn to_toml_string(&self) -> String {
        let file = DbFile {
            schema_version: SCHEMA_VERSION,
            version: self.version.clone(),
            materials: self.materials.clone(),
        };
        toml::to_string(&file).expect("database serialization cannot fail")
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn get(&self, name: &str) -> Result<&Material, MaterialError> {
        self.materials
            .get(name)
            .ok_or_else(|| MaterialError::NotFound(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.materials.keys().map(String::as_str)
    }

    pub fn materials(&self) -> impl Iterator<Item = &Material> {
        self.materials.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Dispersionless test material: n² = 2.25 for both rays.
    pub(crate) fn constant_material() -> Material {
        Material {
            name: "testglass".into(),
            citation: "synthetic".into(),
            valid_range_nm: (300.0, 2000.0),
            thermal_expansion_per_k: 5e-6,
            sellmeier_o: Dispersion {
                form: DispersionForm::Sellmeier,
                coefficients: vec![1.25],
            },
            sellmeier_e: Dispersion {
                form: DispersionForm::Sellmeier,
                coefficients: vec![1.25],
            },
            thermo_optic_o: ThermoOpticTable {
                samples: vec![(1.0, 1e-6)],
            },
            thermo_optic_e: ThermoOpticTable {
                samples: vec![(1.0, 2e-6)],
            },
        }
    }

    #[test]
    fn constant_material_index_is_exact() {
        let m = constant_material();
        for lam in [310.0, 700.0, 1555.5, 1999.0] {
            assert_eq!(m.refractive_index(Ray::Ordinary, lam).unwrap(), 1.5);
            assert_eq!(m.refractive_index(Ray::Extraordinary, lam).unwrap(), 1.5);
        }
    }

    #[test]
    fn constant_material_group_index_equals_index() {
        let m = constant_material();
        assert_eq!(m.group_index(Ray::Ordinary, 940.0).unwrap(), 1.5);
    }

    #[test]
    fn out_of_range_error_names_material_and_bounds() {
        let m = constant_material();
        let err = m.refractive_index(Ray::Ordinary, 250.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("testglass"), "{msg}");
        assert!(msg.contains("300"), "{msg}");
        assert!(msg.contains("2000"), "{msg}");
    }

    #[test]
    fn group_index_needs_stencil_clearance() {
        let m = constant_material();
        assert!(matches!(
            m.group_index(Ray::Ordinary, 300.5),
            Err(MaterialError::StencilClearance { .. })
        ));
        assert!(matches!(
            m.group_index(Ray::Ordinary, 1999.5),
            Err(MaterialError::StencilClearance { .. })
        ));
    }

    #[test]
    fn thermo_optic_single_sample_is_constant() {
        let m = constant_material();
        for lam in [400.0, 900.0, 1600.0] {
            assert_eq!(m.thermo_optic(Ray::Ordinary, lam).unwrap(), 1e-6);
        }
    }

    #[test]
    fn thermo_optic_midpoint_and_extrapolation() {
        let mut m = constant_material();
        m.thermo_optic_o = ThermoOpticTable {
            samples: vec![(0.9, 2e-6), (1.1, 6e-6)],
        };
        // midpoint of the linear segment
        assert_relative_eq!(
            m.thermo_optic(Ray::Ordinary, 1000.0).unwrap(),
            4e-6,
            max_relative = 1e-14
        );
        // end-segment slope extrapolation on both sides
        assert_relative_eq!(
            m.thermo_optic(Ray::Ordinary, 1300.0).unwrap(),
            10e-6,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            m.thermo_optic(Ray::Ordinary, 700.0).unwrap(),
            -2e-6,
            max_relative = 1e-12
        );
    }

    #[test]
    fn thermo_optic_three_point_interpolation() {
        let mut m = constant_material();
        let (a, b, c) = (1e-6, 2e-6, 4e-6);
        m.thermo_optic_o = ThermoOpticTable {
            samples: vec![(0.9, a), (1.1, b), (1.3, c)],
        };
        let expected = b + (c - b) * (1.221 - 1.1) / 0.2;
        assert_relative_eq!(
            m.thermo_optic(Ray::Ordinary, 1221.0).unwrap(),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn empty_thermo_table_is_database_error() {
        let mut m = constant_material();
        m.thermo_optic_e = ThermoOpticTable { samples: vec![] };
        assert!(matches!(
            m.thermo_optic(Ray::Extraordinary, 900.0),
            Err(MaterialError::Database(_))
        ));
        assert!(m.validate().is_err());
    }

    #[test]
    fn malformed_coefficients_rejected() {
        let mut m = constant_material();
        m.sellmeier_o.coefficients = vec![1.25, 0.5]; // dangling pole
        assert!(matches!(m.validate(), Err(MaterialError::Database(_))));
        let mut m = constant_material();
        m.sellmeier_e.coefficients = vec![f64::NAN];
        assert!(m.validate().is_err());
        let mut m = constant_material();
        m.sellmeier_o = Dispersion {
            form: DispersionForm::PoleQuadratic,
            coefficients: vec![1.0, 2.0, 3.0],
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn unknown_schema_version_rejected() {
        let text = "schema_version = 99\nversion = \"x\"\n[materials]\n";
        match MaterialDb::parse(text) {
            Err(MaterialError::SchemaVersion { found, supported }) => {
                assert_eq!(found, 99);
                assert_eq!(supported, SCHEMA_VERSION);
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_material_not_found() {
        let db = MaterialDb::parse("schema_version = 1\n[materials]\n").unwrap();
        assert!(matches!(
            db.get("unobtainium"),
            Err(MaterialError::NotFound(_))
        ));
    }
}
