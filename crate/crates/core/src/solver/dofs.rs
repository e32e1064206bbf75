use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::mesh::Mesh;

/// Global numbering of the external unknowns.
///
/// Displacements come first, three per P2 node (vertices, then edge nodes),
/// followed by one damage value per vertex. Bubble amplitudes and multipliers
/// live inside the elements and never enter the global vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    n_nodes: usize,
    n_vertices: usize,
    damage: bool,
}

impl DofMap {
    pub fn new(mesh: &Mesh, damage: bool) -> Self {
        Self {
            n_nodes: mesh.n_p2_nodes(),
            n_vertices: mesh.n_vertices(),
            damage,
        }
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.n_nodes + if self.damage { self.n_vertices } else { 0 }
    }

    pub fn n_displacement_dofs(&self) -> usize {
        3 * self.n_nodes
    }

    pub fn has_damage(&self) -> bool {
        self.damage
    }

    pub fn u(&self, node: usize, component: usize) -> usize {
        3 * node + component
    }

    pub fn alpha(&self, vertex: usize) -> Option<usize> {
        self.damage.then_some(3 * self.n_nodes + vertex)
    }

    pub fn n_element_dofs(&self) -> usize {
        if self.damage {
            34
        } else {
            30
        }
    }

    /// Global ids of the external dofs of `tet` in local element order.
    pub fn element_dofs(&self, mesh: &Mesh, tet: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n_element_dofs());
        for node in mesh.p2_nodes(tet) {
            out.extend((0..3).map(|c| 3 * node + c));
        }
        if self.damage {
            out.extend(mesh.tets()[tet].iter().map(|&v| 3 * self.n_nodes + v));
        }
        out
    }
}

/// Displacement component on a tagged surface prescribed as
/// `factor * load`, where `load` is the current value of the load program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletCondition {
    pub tag: String,
    pub component: usize,
    #[serde(default)]
    pub factor: f64,
}

impl DirichletCondition {
    pub fn fixed(tag: &str, component: usize) -> Self {
        Self {
            tag: tag.into(),
            component,
            factor: 0.0,
        }
    }

    pub fn driven(tag: &str, component: usize, factor: f64) -> Self {
        Self {
            tag: tag.into(),
            component,
            factor,
        }
    }
}

/// Dead loads, scaled by the load program value like the prescribed displacements.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExternalLoads {
    /// Body force per reference volume (N/mm^3).
    #[serde(default)]
    pub body_force: [f64; 3],
    /// Nominal tractions (MPa) on tagged surfaces.
    #[serde(default)]
    pub tractions: Vec<(String, [f64; 3])>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub dirichlet: Vec<DirichletCondition>,
    #[serde(default)]
    pub loads: ExternalLoads,
    /// Surface whose reaction force is reported.
    pub observation_tag: String,
    pub observation_component: usize,
}

impl BoundaryConditions {
    /// Quarter plate: symmetry on `x0` and `y0`, `u_z = 0` on `z0`, and the
    /// full displacement vector `(0, load, 0)` on `yL`.
    pub fn plate() -> Self {
        Self {
            dirichlet: vec![
                DirichletCondition::fixed("x0", 0),
                DirichletCondition::fixed("y0", 1),
                DirichletCondition::fixed("z0", 2),
                DirichletCondition::fixed("yL", 0),
                DirichletCondition::driven("yL", 1, 1.0),
                DirichletCondition::fixed("yL", 2),
            ],
            loads: ExternalLoads::default(),
            observation_tag: "yL".into(),
            observation_component: 1,
        }
    }

    /// Unit-cube tension test on a box mesh classified with
    /// [`crate::mesh::FacetPredicate::box_faces`].
    pub fn cube_tension() -> Self {
        Self {
            dirichlet: vec![
                DirichletCondition::fixed("x0", 0),
                DirichletCondition::fixed("y0", 1),
                DirichletCondition::fixed("z0", 2),
                DirichletCondition::driven("y1", 1, 1.0),
            ],
            loads: ExternalLoads::default(),
            observation_tag: "y1".into(),
            observation_component: 1,
        }
    }

    /// Constrained displacement dofs with their load factors, sorted by dof.
    pub fn resolve(&self, mesh: &Mesh, dofmap: &DofMap) -> Result<Vec<(usize, f64)>, SolverError> {
        let mut map = std::collections::BTreeMap::new();
        for c in &self.dirichlet {
            let tag = mesh
                .tag_id(&c.tag)
                .ok_or_else(|| SolverError::InvalidSetup(format!("unknown tag '{}'", c.tag)))?;
            if c.component > 2 {
                return Err(SolverError::InvalidSetup(format!(
                    "component {} out of range",
                    c.component
                )));
            }
            for node in mesh.nodes_on_tag(tag) {
                let dof = dofmap.u(node, c.component);
                if let Some(prev) = map.insert(dof, c.factor) {
                    if prev != c.factor {
                        return Err(SolverError::InvalidSetup(format!(
                            "node {node} component {} prescribed twice with factors {prev} and {}",
                            c.component, c.factor
                        )));
                    }
                }
            }
        }
        if mesh.tag_id(&self.observation_tag).is_none() {
            return Err(SolverError::InvalidSetup(format!(
                "unknown observation tag '{}'",
                self.observation_tag
            )));
        }
        Ok(map.into_iter().collect())
    }

    /// Consistent nodal force vector for a unit load value.
    pub fn load_vector(&self, mesh: &Mesh, dofmap: &DofMap) -> Result<Vec<f64>, SolverError> {
        let mut f = vec![0.0; dofmap.n_dofs()];
        let b = self.loads.body_force;
        if b.iter().any(|x| *x != 0.0) {
            // integrals of the P2 functions: -V/20 at vertices, V/5 at edge nodes
            for tet in 0..mesh.n_tets() {
                let v = mesh.tet_volume(tet);
                for (a, node) in mesh.p2_nodes(tet).into_iter().enumerate() {
                    let w = if a < 4 { -v / 20.0 } else { v / 5.0 };
                    for c in 0..3 {
                        f[dofmap.u(node, c)] += w * b[c];
                    }
                }
            }
        }
        for (name, t) in &self.loads.tractions {
            let tag = mesh
                .tag_id(name)
                .ok_or_else(|| SolverError::InvalidSetup(format!("unknown tag '{name}'")))?;
            for facet in mesh.facets_with_tag(tag) {
                let n = mesh.facet_area_vector(facet);
                let area = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                // quadratic triangle: vertex functions integrate to zero, edge functions to A/3
                for node in &mesh.facet_p2_nodes(facet)[3..] {
                    for c in 0..3 {
                        f[dofmap.u(*node, c)] += area / 3.0 * t[c];
                    }
                }
            }
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured_cube, FacetPredicate};

    fn cube() -> Mesh {
        generate_structured_cube(2, 1.0)
            .unwrap()
            .classify_boundary(&FacetPredicate::box_faces([0.0; 3], [1.0; 3]))
            .unwrap()
    }

    #[test]
    fn dimensions() {
        let m = cube();
        let d = DofMap::new(&m, true);
        assert_eq!(
            d.n_dofs(),
            3 * (m.n_vertices() + m.n_edges()) + m.n_vertices()
        );
        assert_eq!(
            DofMap::new(&m, false).n_dofs(),
            3 * (m.n_vertices() + m.n_edges())
        );
        let e = d.element_dofs(&m, 3);
        assert_eq!(e.len(), 34);
        let mut s = e.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 34);
    }

    #[test]
    fn resultant_of_loads() {
        let m = cube();
        let d = DofMap::new(&m, false);
        let bc = BoundaryConditions {
            loads: ExternalLoads {
                body_force: [0.0, 0.0, -2.0],
                tractions: vec![("x1".into(), [3.0, 0.0, 0.0])],
            },
            ..BoundaryConditions::cube_tension()
        };
        let f = bc.load_vector(&m, &d).unwrap();
        let sum = |c: usize| (0..m.n_p2_nodes()).map(|n| f[d.u(n, c)]).sum::<f64>();
        assert!((sum(0) - 3.0).abs() < 1e-12);
        assert!(sum(1).abs() < 1e-12);
        assert!((sum(2) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn conflicting_prescriptions_rejected() {
        let m = cube();
        let d = DofMap::new(&m, false);
        let mut bc = BoundaryConditions::cube_tension();
        bc.dirichlet.push(DirichletCondition::driven("x0", 1, 1.0));
        assert!(matches!(
            bc.resolve(&m, &d),
            Err(SolverError::InvalidSetup(_))
        ));
    }
}
