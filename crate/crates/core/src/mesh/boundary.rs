use super::{BoundaryTag, Mesh, MeshError, PlateGeometry, TagKind};

/// A named region of the boundary, selected by the facet centroid.
pub struct FacetPredicate {
    pub name: String,
    pub kind: TagKind,
    pub test: Box<dyn Fn([f64; 3]) -> bool + Send + Sync>,
}

impl FacetPredicate {
    pub fn new<F>(name: &str, kind: TagKind, test: F) -> Self
    where
        F: Fn([f64; 3]) -> bool + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            kind,
            test: Box::new(test),
        }
    }

    /// Facets whose centroid satisfies `|x[axis] - value| <= tol`.
    pub fn plane(name: &str, kind: TagKind, axis: usize, value: f64, tol: f64) -> Self {
        Self::new(name, kind, move |c| (c[axis] - value).abs() <= tol)
    }

    /// The six faces of the box `[lo, hi]`, tagged `x0 y0 z0 x1 y1 z1`.
    pub fn box_faces(lo: [f64; 3], hi: [f64; 3]) -> Vec<Self> {
        let tol = 1e-9 * (0..3).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
        let mut out = Vec::with_capacity(6);
        for (axis, name) in ["x0", "y0", "z0"].iter().enumerate() {
            out.push(Self::plane(name, TagKind::Neumann, axis, lo[axis], tol));
        }
        for (axis, name) in ["x1", "y1", "z1"].iter().enumerate() {
            out.push(Self::plane(name, TagKind::Neumann, axis, hi[axis], tol));
        }
        out
    }
}

impl std::fmt::Debug for FacetPredicate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FacetPredicate")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .finish()
    }
}

pub trait PlatePredicates {
    fn predicates(&self) -> Vec<FacetPredicate>;
}

impl PlatePredicates for PlateGeometry {
    fn predicates(&self) -> Vec<FacetPredicate> {
        let PlateGeometry {
            radius,
            length,
            thickness,
        } = *self;
        let tol = 1e-9 * length;
        vec![
            FacetPredicate::plane("x0", TagKind::DirichletComponent, 0, 0.0, tol),
            FacetPredicate::plane("y0", TagKind::DirichletComponent, 1, 0.0, tol),
            FacetPredicate::plane("xL", TagKind::Neumann, 0, length, tol),
            FacetPredicate::plane("yL", TagKind::Observation, 1, length, tol),
            FacetPredicate::plane("z0", TagKind::DirichletComponent, 2, 0.0, tol),
            FacetPredicate::plane("zH", TagKind::Neumann, 2, thickness, tol),
            // chord facets sit slightly inside the true arc
            FacetPredicate::new("hole", TagKind::Neumann, move |c| {
                c[0].hypot(c[1]) <= radius + tol && c[2] > tol && c[2] < thickness - tol
            }),
        ]
    }
}

impl Mesh {
    /// Replaces the boundary tags. Every boundary facet must satisfy exactly
    /// one predicate.
    pub fn classify_boundary(mut self, predicates: &[FacetPredicate]) -> Result<Self, MeshError> {
        let mut names: Vec<&str> = predicates.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(MeshError::Classification("tag names must be unique".into()));
        }
        let mut assigned = Vec::with_capacity(self.boundary_facets.len());
        for facet in &self.boundary_facets {
            let c = self.facet_centroid(facet);
            let hits: Vec<usize> = predicates
                .iter()
                .enumerate()
                .filter(|(_, p)| (p.test)(c))
                .map(|(i, _)| i)
                .collect();
            match hits.as_slice() {
                [one] => assigned.push(*one),
                [] => {
                    return Err(MeshError::Classification(format!(
                        "facet at {c:?} is not covered"
                    )))
                }
                many => {
                    let names: Vec<&str> =
                        many.iter().map(|&i| predicates[i].name.as_str()).collect();
                    return Err(MeshError::Classification(format!(
                        "facet at {c:?} covered by {names:?}"
                    )));
                }
            }
        }
        for (facet, tag) in self.boundary_facets.iter_mut().zip(assigned) {
            facet.tag = tag;
        }
        self.tags = predicates
            .iter()
            .map(|p| BoundaryTag {
                name: p.name.clone(),
                kind: p.kind,
            })
            .collect();
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_structured_cube;

    #[test]
    fn cube_axis_planes() {
        let m = generate_structured_cube(2, 1.0).unwrap();
        let m = m
            .classify_boundary(&FacetPredicate::box_faces([0.0; 3], [1.0; 3]))
            .unwrap();
        assert_eq!(m.tags().len(), 6);
        for t in 0..6 {
            assert_eq!(m.facets_with_tag(t).count(), 8);
        }
    }

    #[test]
    fn empty_predicates_fail() {
        let m = generate_structured_cube(2, 1.0).unwrap();
        assert!(matches!(
            m.classify_boundary(&[]),
            Err(MeshError::Classification(_))
        ));
    }

    #[test]
    fn overlapping_predicates_fail() {
        let m = generate_structured_cube(2, 1.0).unwrap();
        let mut preds = FacetPredicate::box_faces([0.0; 3], [1.0; 3]);
        preds.push(FacetPredicate::new("all", TagKind::Neumann, |_| true));
        let err = m.classify_boundary(&preds).unwrap_err().to_string();
        assert!(err.contains("covered by"), "{err}");
    }
}
