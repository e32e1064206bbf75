use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::IoError;
use crate::material::MaterialParams;
use crate::mesh::{
    generate_quarter_plate_with_hole, generate_structured_cube, import_mesh, FacetPredicate, Mesh,
    MeshFormat, PlateGeometry, TagKind, UNCLASSIFIED,
};
use crate::penalty::PenaltyParams;
use crate::solver::{BoundaryConditions, LoadProgram, NewtonOptions};

/// Overrides `output.dir`.
pub const ENV_OUTPUT_DIR: &str = "GDFE_OUTPUT_DIR";
/// Number of worker threads; unset or 0 uses all cores.
pub const ENV_THREADS: &str = "GDFE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Count test on the unit cube refinements listed in `mesh.refinements`.
    CubeCountTest,
    PlateWithHole,
    CustomMesh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FormulationConfig {
    #[default]
    LagrangeMixed,
    Penalty {
        p: f64,
    },
    /// The mixed formulation with `c = 0`.
    Local,
    /// Undamaged P2 Neo-Hooke reference without damage unknowns.
    Elastic,
}

impl FormulationConfig {
    pub fn label(&self) -> String {
        match self {
            FormulationConfig::LagrangeMixed => "lagrange-mixed".into(),
            FormulationConfig::Penalty { p } => format!("penalty(p={p})"),
            FormulationConfig::Local => "local".into(),
            FormulationConfig::Elastic => "elastic".into(),
        }
    }
}

/// Boundary facets whose centroid lies on the plane `x[axis] = value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneTag {
    pub name: String,
    pub axis: usize,
    pub value: f64,
    #[serde(default = "default_plane_tol")]
    pub tol: f64,
}

fn default_plane_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Refinement level of the generated plate.
    pub refinement: u32,
    /// Cube refinements `s` (2^s cells per axis) of the count test.
    pub refinements: Vec<u32>,
    pub plate: PlateGeometry,
    /// Mesh file of a custom scenario, relative to the config file.
    pub path: Option<PathBuf>,
    pub format: MeshFormat,
    /// Boundary tags of a custom mesh; unmatched facets are tagged `boundary`.
    pub planes: Vec<PlaneTag>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            refinement: 0,
            refinements: vec![1, 2, 3],
            plate: PlateGeometry::default(),
            path: None,
            format: MeshFormat::GmshAscii,
            planes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write a field snapshot every this many steps (0: final step only).
    pub snapshot_every: usize,
    /// Write no field snapshots at all.
    pub snapshots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("output"),
            snapshot_every: 0,
            snapshots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub scenario: Scenario,
    #[serde(default)]
    pub mesh: MeshConfig,
    pub material: Option<MaterialParams>,
    #[serde(default)]
    pub formulation: FormulationConfig,
    pub load: Option<LoadProgram>,
    #[serde(default)]
    pub newton: NewtonOptions,
    /// Required for custom meshes; the plate uses its standard conditions.
    pub boundary: Option<BoundaryConditions>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_name() -> String {
    "run".into()
}

fn invalid(key: &str, msg: impl Into<String>) -> IoError {
    IoError::Config {
        key: key.into(),
        msg: msg.into(),
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let config: Self = toml::from_str(text).map_err(|e| IoError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file, resolves the mesh path against its directory and
    /// applies the environment overrides.
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::File {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = &config.mesh.path {
            if p.is_relative() {
                config.mesh.path = Some(base.join(p));
            }
        }
        if config.output.dir.is_relative() {
            config.output.dir = base.join(&config.output.dir);
        }
        config.apply_env();
        if let Some(p) = &config.mesh.path {
            if !p.exists() {
                return Err(invalid(
                    "mesh.path",
                    format!("{} does not exist", p.display()),
                ));
            }
        }
        Ok(config)
    }

    pub fn apply_env(&mut self) {
        if let Ok(dir) = std::env::var(ENV_OUTPUT_DIR) {
            if !dir.is_empty() {
                self.output.dir = PathBuf::from(dir);
            }
        }
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(invalid("name", "must be a non-empty file stem"));
        }
        if self.scenario == Scenario::CubeCountTest {
            if self.mesh.refinements.is_empty() {
                return Err(invalid("mesh.refinements", "list at least one refinement"));
            }
            if self.mesh.refinements.iter().any(|&s| s > 6) {
                return Err(invalid(
                    "mesh.refinements",
                    "refinements above 6 are not supported",
                ));
            }
            return Ok(());
        }
        let material = self
            .material
            .as_ref()
            .ok_or_else(|| invalid("material", "missing"))?;
        match self.formulation {
            FormulationConfig::Local if material.c != 0.0 => {
                return Err(invalid("material.c", "the local formulation needs c = 0"));
            }
            FormulationConfig::LagrangeMixed if material.c == 0.0 => {
                return Err(invalid(
                    "formulation.kind",
                    "c = 0 is the local formulation; say so explicitly",
                ));
            }
            FormulationConfig::Penalty { p } => {
                PenaltyParams::new(*material, p)
                    .map_err(|e| invalid("formulation.p", e.to_string()))?;
            }
            _ => {}
        }
        let load = self
            .load
            .as_ref()
            .ok_or_else(|| invalid("load", "missing"))?;
        load.validate()
            .map_err(|e| invalid("load", e.to_string()))?;
        let n = &self.newton;
        if !(n.tolerance > 0.0) || n.max_iterations == 0 {
            return Err(invalid(
                "newton",
                "need tolerance > 0 and max_iterations > 0",
            ));
        }
        match self.scenario {
            Scenario::PlateWithHole => {
                let g = &self.mesh.plate;
                if !(g.radius > 0.0 && g.radius < g.length && g.thickness > 0.0) {
                    return Err(invalid(
                        "mesh.plate",
                        "need 0 < radius < length and thickness > 0",
                    ));
                }
                if self.mesh.refinement > 4 {
                    return Err(invalid(
                        "mesh.refinement",
                        "refinements above 4 are not supported",
                    ));
                }
            }
            Scenario::CustomMesh => {
                if self.mesh.path.is_none() {
                    return Err(invalid("mesh.path", "a custom mesh needs a file"));
                }
                if self.boundary.is_none() {
                    return Err(invalid(
                        "boundary",
                        "a custom mesh needs boundary conditions",
                    ));
                }
                if let Some(p) = self.mesh.planes.iter().find(|p| p.axis > 2) {
                    return Err(invalid(
                        "mesh.planes",
                        format!("axis {} of '{}' out of range", p.axis, p.name),
                    ));
                }
            }
            Scenario::CubeCountTest => unreachable!(),
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization, first 16 hex digits.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).unwrap_or_default();
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn boundary_conditions(&self) -> Result<BoundaryConditions, IoError> {
        match self.scenario {
            Scenario::PlateWithHole => Ok(self
                .boundary
                .clone()
                .unwrap_or_else(BoundaryConditions::plate)),
            Scenario::CustomMesh => self
                .boundary
                .clone()
                .ok_or_else(|| invalid("boundary", "missing")),
            Scenario::CubeCountTest => Ok(BoundaryConditions::cube_tension()),
        }
    }

    /// Builds the mesh of a plate or custom scenario.
    pub fn build_mesh(&self) -> Result<Mesh, IoError> {
        match self.scenario {
            Scenario::PlateWithHole => {
                let g = &self.mesh.plate;
                Ok(generate_quarter_plate_with_hole(
                    g.radius,
                    g.length,
                    g.thickness,
                    self.mesh.refinement,
                )?)
            }
            Scenario::CustomMesh => {
                let path = self
                    .mesh
                    .path
                    .as_ref()
                    .ok_or_else(|| invalid("mesh.path", "missing"))?;
                let mesh = import_mesh(path, self.mesh.format)?;
                if self.mesh.planes.is_empty() {
                    return Ok(mesh);
                }
                let planes = self.mesh.planes.clone();
                let mut predicates: Vec<FacetPredicate> = planes
                    .iter()
                    .map(|p| {
                        FacetPredicate::plane(
                            &p.name,
                            TagKind::DirichletComponent,
                            p.axis,
                            p.value,
                            p.tol,
                        )
                    })
                    .collect();
                predicates.push(FacetPredicate::new(
                    UNCLASSIFIED,
                    TagKind::Neumann,
                    move |c| !planes.iter().any(|p| (c[p.axis] - p.value).abs() <= p.tol),
                ));
                Ok(mesh.classify_boundary(&predicates)?)
            }
            Scenario::CubeCountTest => {
                let s = self.mesh.refinements.last().copied().unwrap_or(1);
                Ok(generate_structured_cube(1 << s, 1.0)?)
            }
        }
    }
}
