//! Subcommand configuration documents. Every struct rejects unknown keys and
//! fills missing ones from its `Default`.

use magjunction::magnetostatic3d::{GridOptions, StructureKind};
use magjunction::mesh2d::{polygon_from_disc, CrossSection};
use magjunction::shape_coeffs::{coefficients, CoefficientParams, ShapeCoefficients};
use magjunction::sphere_field::{AnisotropyModel, MinimizeOptions};
use magjunction::vector::{Vec2, Vec3};
use magjunction::{Error, Result};
use serde::{Deserialize, Serialize};

/// Either `{"vertices": [[x, y], ...]}` or `{"disc": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SectionSpec {
    Polygon(PolygonSpec),
    Disc(DiscWrapper),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolygonSpec {
    pub vertices: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscWrapper {
    pub disc: DiscSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscSpec {
    pub center: Vec2,
    pub radius: f64,
    pub n_segments: usize,
}

impl SectionSpec {
    pub fn disc(center: Vec2, radius: f64, n_segments: usize) -> Self {
        SectionSpec::Disc(DiscWrapper { disc: DiscSpec { center, radius, n_segments } })
    }

    pub fn unit_square() -> Self {
        SectionSpec::Polygon(PolygonSpec { vertices: CrossSection::unit_square().vertices().to_vec() })
    }

    pub fn build(&self) -> Result<CrossSection> {
        match self {
            SectionSpec::Polygon(p) => CrossSection::from_unoriented(p.vertices.clone()),
            SectionSpec::Disc(d) => polygon_from_disc(d.disc.center, d.disc.radius, d.disc.n_segments),
        }
    }
}

/// A constant vector or one sample per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(Vec3),
    Samples(Vec<Vec3>),
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Constant([0.0; 3])
    }
}

impl FieldSpec {
    pub fn samples(&self, n: usize, name: &str) -> Result<Vec<Vec3>> {
        let out = match self {
            FieldSpec::Constant(v) => vec![*v; n],
            FieldSpec::Samples(s) if s.len() == n => s.clone(),
            FieldSpec::Samples(s) => {
                return Err(Error::InvalidArgument(format!("{name} has {} samples, expected {n}", s.len())))
            }
        };
        if out.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GivenCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Shape coefficients computed from a cross-section or supplied directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSource {
    Compute(CoefficientParams),
    Given(GivenCoefficients),
}

impl Default for CoefficientSource {
    fn default() -> Self {
        CoefficientSource::Compute(CoefficientParams::default())
    }
}

impl CoefficientSource {
    pub fn validate(&self) -> Result<()> {
        match self {
            CoefficientSource::Compute(p) => validate_coefficient_params(p),
            CoefficientSource::Given(g) => ShapeCoefficients::exact(g.alpha, g.beta, g.gamma).validate(),
        }
    }

    pub fn resolve(&self, section: &CrossSection) -> Result<ShapeCoefficients> {
        match self {
            CoefficientSource::Compute(p) => coefficients(section, p),
            CoefficientSource::Given(g) => Ok(ShapeCoefficients::exact(g.alpha, g.beta, g.gamma)),
        }
    }
}

fn validate_coefficient_params(p: &CoefficientParams) -> Result<()> {
    if p.r_levels.len() < 2 || p.r_levels.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(invalid("r_levels needs at least two positive radii"));
    }
    if !(p.h > 0.0 && p.h.is_finite()) || !(p.tol > 0.0 && p.tol < 1.0) {
        return Err(invalid("coefficient h must be positive and tol in (0, 1)"));
    }
    Ok(())
}

fn invalid(msg: &str) -> Error {
    Error::InvalidArgument(msg.to_string())
}

fn positive(x: f64, name: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {x}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoeffsConfig {
    pub section: SectionSpec,
    pub params: CoefficientParams,
}

impl Default for CoeffsConfig {
    fn default() -> Self {
        Self { section: SectionSpec::disc([0.0, 0.0], 1.0, 64), params: CoefficientParams::default() }
    }
}

impl CoeffsConfig {
    pub fn validate(&self) -> Result<CrossSection> {
        validate_coefficient_params(&self.params)?;
        self.section.build()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WireFilmConfig {
    pub lambda: f64,
    /// Wire cross-section, also the film footprint.
    pub theta: SectionSpec,
    /// Number of wire intervals.
    pub n: usize,
    /// Target edge length of the film mesh.
    pub film_h: f64,
    pub coefficients: CoefficientSource,
    pub anisotropy: AnisotropyModel,
    /// Cross-sectional average of the applied field along the wire.
    pub f_a: FieldSpec,
    /// Thickness integral of the applied field at the film vertices.
    pub f_b: FieldSpec,
    pub optimizer: MinimizeOptions,
}

impl Default for WireFilmConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            theta: SectionSpec::disc([0.0, 0.0], 0.5, 32),
            n: 64,
            film_h: 0.1,
            coefficients: CoefficientSource::default(),
            anisotropy: AnisotropyModel::Zero,
            f_a: FieldSpec::default(),
            f_b: FieldSpec::default(),
            optimizer: MinimizeOptions::default(),
        }
    }
}

impl WireFilmConfig {
    pub fn validate(&self) -> Result<CrossSection> {
        positive(self.lambda, "lambda")?;
        positive(self.film_h, "film_h")?;
        if self.n < 2 {
            return Err(invalid("n must be at least 2"));
        }
        self.f_a.samples(self.n + 1, "f_a")?;
        if let FieldSpec::Constant(_) = self.f_b {
            self.f_b.samples(1, "f_b")?;
        }
        self.anisotropy.validate()?;
        self.optimizer.validate()?;
        self.coefficients.validate()?;
        self.theta.build()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WireWireConfig {
    pub lambda: f64,
    /// Coefficients shared by both wires; computed on the unit square when
    /// `compute` is chosen.
    pub coefficients: CoefficientSource,
    pub anisotropy: AnisotropyModel,
    pub n_a: usize,
    pub n_b: usize,
    /// Applied field along wire a, sampled at `x₃ = j/n_a`.
    pub f_a: FieldSpec,
    /// Applied field along wire b, sampled at `x₁ = j/n_b`.
    pub f_bl: FieldSpec,
    pub optimizer: MinimizeOptions,
}

impl Default for WireWireConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            coefficients: CoefficientSource::Given(GivenCoefficients { alpha: 0.5, beta: 0.5, gamma: 0.0 }),
            anisotropy: AnisotropyModel::Zero,
            n_a: 64,
            n_b: 64,
            f_a: FieldSpec::default(),
            f_bl: FieldSpec::default(),
            optimizer: MinimizeOptions::default(),
        }
    }
}

impl WireWireConfig {
    pub fn validate(&self) -> Result<()> {
        positive(self.lambda, "lambda")?;
        if self.n_a < 2 || self.n_b < 2 {
            return Err(invalid("n_a and n_b must be at least 2"));
        }
        self.f_a.samples(self.n_a + 1, "f_a")?;
        self.f_bl.samples(self.n_b + 1, "f_bl")?;
        self.anisotropy.validate()?;
        self.optimizer.validate()?;
        self.coefficients.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Validate3dConfig {
    pub kind: StructureKind,
    /// Film footprint and wire cross-section for `wire_film`; ignored for
    /// `wire_wire`, whose sections are unit squares.
    pub theta: SectionSpec,
    /// Strictly decreasing thicknesses.
    pub h_list: Vec<f64>,
    pub m_a: Vec3,
    pub m_b: Vec3,
    /// Coefficients entering the limit value.
    pub coefficients: CoefficientSource,
    pub grid: GridOptions,
}

impl Default for Validate3dConfig {
    fn default() -> Self {
        Self {
            kind: StructureKind::WireWire,
            theta: SectionSpec::unit_square(),
            h_list: vec![0.4, 0.2, 0.1],
            m_a: [0.0, 1.0, 0.0],
            m_b: [0.0, 1.0, 0.0],
            coefficients: CoefficientSource::Given(GivenCoefficients { alpha: 0.5, beta: 0.5, gamma: 0.0 }),
            grid: GridOptions { delta_fraction: 0.125, grading: 1.3, ..GridOptions::default() },
        }
    }
}

impl Validate3dConfig {
    pub fn validate(&self) -> Result<CrossSection> {
        if self.h_list.is_empty() || self.h_list.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(invalid("h_list must be nonempty and strictly decreasing"));
        }
        for &h in &self.h_list {
            positive(h, "h")?;
        }
        for v in [self.m_a, self.m_b] {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !((n - 1.0).abs() <= 1e-12) {
                return Err(invalid("m_a and m_b must be unit vectors"));
            }
        }
        self.grid.validate()?;
        self.coefficients.validate()?;
        match self.kind {
            StructureKind::WireFilm => self.theta.build(),
            StructureKind::WireWire => Ok(CrossSection::unit_square()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GradcheckModel {
    #[default]
    WireFilm,
    WireWire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub model: GradcheckModel,
    pub wire_film: WireFilmConfig,
    pub wire_wire: WireWireConfig,
    /// Number of random (field, direction) pairs per functional.
    pub samples: usize,
    pub h_fd: f64,
    pub seed: u64,
    /// Largest acceptable relative error.
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            model: GradcheckModel::WireFilm,
            wire_film: WireFilmConfig {
                coefficients: CoefficientSource::Given(GivenCoefficients { alpha: 0.4, beta: 0.35, gamma: 0.1 }),
                anisotropy: AnisotropyModel::Uniaxial { axis: [0.0, 0.0, 1.0], strength: 0.5 },
                f_a: FieldSpec::Constant([0.3, -0.2, 0.5]),
                f_b: FieldSpec::Constant([0.1, 0.4, -0.3]),
                n: 32,
                film_h: 0.15,
                ..WireFilmConfig::default()
            },
            wire_wire: WireWireConfig {
                coefficients: CoefficientSource::Given(GivenCoefficients { alpha: 0.4, beta: 0.6, gamma: 0.2 }),
                anisotropy: AnisotropyModel::Uniaxial { axis: [1.0, 0.0, 0.0], strength: 0.5 },
                f_a: FieldSpec::Constant([0.3, -0.2, 0.5]),
                f_bl: FieldSpec::Constant([0.1, 0.4, -0.3]),
                n_a: 24,
                n_b: 16,
                ..WireWireConfig::default()
            },
            samples: 8,
            h_fd: 1e-6,
            seed: 0,
            tolerance: 1e-5,
        }
    }
}

impl GradcheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(invalid("samples must be positive"));
        }
        if !(1e-8..=1e-4).contains(&self.h_fd) {
            return Err(invalid("h_fd must lie in [1e-8, 1e-4]"));
        }
        positive(self.tolerance, "tolerance")?;
        match self.model {
            GradcheckModel::WireFilm => self.wire_film.validate().map(|_| ()),
            GradcheckModel::WireWire => self.wire_wire.validate(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let wf = WireFilmConfig::default();
        let s = serde_json::to_string(&wf).unwrap();
        assert_eq!(serde_json::from_str::<WireFilmConfig>(&s).unwrap(), wf);
        assert!(wf.validate().is_ok());
        assert!(WireWireConfig::default().validate().is_ok());
        assert!(Validate3dConfig::default().validate().is_ok());
        assert!(GradcheckConfig::default().validate().is_ok());
        assert!(CoeffsConfig::default().validate().is_ok());
    }

    #[test]
    fn sections_parse_from_either_form() {
        let p: SectionSpec = serde_json::from_str(r#"{"vertices": [[0,0],[1,0],[0,1]]}"#).unwrap();
        assert!((p.build().unwrap().area() - 0.5).abs() < 1e-15);
        let d: SectionSpec =
            serde_json::from_str(r#"{"disc": {"center": [0,0], "radius": 1, "n_segments": 8}}"#).unwrap();
        assert_eq!(d.build().unwrap().vertices().len(), 8);
        assert!(serde_json::from_str::<SectionSpec>(r#"{"vertices": [[0,0]], "extra": 1}"#).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<WireFilmConfig>(r#"{"lamda": 1.0}"#).is_err());
        assert!(serde_json::from_str::<WireFilmConfig>(r#"{"optimizer": {"seeed": 1}}"#).is_err());
    }

    #[test]
    fn field_specs() {
        let c: FieldSpec = serde_json::from_str("[1, 0, 0]").unwrap();
        assert_eq!(c.samples(3, "f").unwrap().len(), 3);
        let s: FieldSpec = serde_json::from_str("[[1, 0, 0], [0, 1, 0]]").unwrap();
        assert!(s.samples(3, "f").is_err());
        assert_eq!(s.samples(2, "f").unwrap()[1], [0.0, 1.0, 0.0]);
    }

    #[test]
    fn bad_numbers_fail_validation() {
        let wf = WireFilmConfig { lambda: -1.0, ..Default::default() };
        assert!(wf.validate().is_err());
        let v = Validate3dConfig { h_list: vec![0.1, 0.2], ..Default::default() };
        assert!(v.validate().is_err());
        let g = GradcheckConfig { h_fd: 1e-2, ..Default::default() };
        assert!(g.validate().is_err());
    }
}
