//! Tetrahedral meshes carrying the node sets needed by the P2 displacement,
//! P1+bubble damage and P0 multiplier fields.
//!
//! A [`Mesh`] stores vertices and 4-node connectivity only. Edge-midpoint
//! nodes, boundary facets and the mid-volume (bubble) node of every tet are
//! derived on construction, so files never have to carry them.

mod boundary;
mod generate;
mod io;

use std::collections::HashMap;

use thiserror::Error;

pub use boundary::{FacetPredicate, PlatePredicates};
pub use generate::{generate_quarter_plate_with_hole, generate_structured_cube, PlateGeometry};
pub use io::{import_mesh, parse_gmsh_v4, parse_simple, write_simple, MeshFormat};

/// Local vertex pairs of the six tet edges, in P2 node order 4..10.
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [1, 2], [0, 2], [0, 3], [1, 3], [2, 3]];

/// Local vertices of face `f`; face `f` is opposite vertex `f`.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("tet {tet} has non-positive volume ({volume:e})")]
    Orientation { tet: usize, volume: f64 },
    #[error("tet {tet} references vertex {vertex}, but the mesh has {n_vertices} vertices")]
    BadVertex {
        tet: usize,
        vertex: usize,
        n_vertices: usize,
    },
    #[error("face {face:?} is shared by {count} tets")]
    NonManifold { face: [usize; 3], count: usize },
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("boundary classification failed: {0}")]
    Classification(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TagKind {
    DirichletComponent,
    Neumann,
    Observation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryTag {
    pub name: String,
    pub kind: TagKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFacet {
    pub tet: usize,
    pub local_face: usize,
    pub tag: usize,
}

/// Name of the tag every facet carries before [`Mesh::classify_boundary`].
pub const UNCLASSIFIED: &str = "boundary";

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 3]>,
    tets: Vec<[usize; 4]>,
    edges: Vec<[usize; 2]>,
    edge_index: HashMap<(usize, usize), usize>,
    tet_edges: Vec<[usize; 6]>,
    boundary_facets: Vec<BoundaryFacet>,
    tags: Vec<BoundaryTag>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn det3(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
}

/// Six times the signed volume of the tet `(p0, p1, p2, p3)`.
pub fn signed_volume6(p: [[f64; 3]; 4]) -> f64 {
    det3(sub(p[1], p[0]), sub(p[2], p[0]), sub(p[3], p[0]))
}

impl Mesh {
    /// Builds a mesh from vertices and positively oriented tets.
    pub fn new(vertices: Vec<[f64; 3]>, tets: Vec<[usize; 4]>) -> Result<Self, MeshError> {
        let n_vertices = vertices.len();
        for (t, tet) in tets.iter().enumerate() {
            for &v in tet {
                if v >= n_vertices {
                    return Err(MeshError::BadVertex {
                        tet: t,
                        vertex: v,
                        n_vertices,
                    });
                }
            }
            let vol6 = signed_volume6(tet.map(|v| vertices[v]));
            if vol6 <= 0.0 {
                return Err(MeshError::Orientation {
                    tet: t,
                    volume: vol6 / 6.0,
                });
            }
        }

        let mut edges = Vec::new();
        let mut edge_index = HashMap::new();
        let mut tet_edges = Vec::with_capacity(tets.len());
        for tet in &tets {
            let mut local = [0usize; 6];
            for (k, [a, b]) in LOCAL_EDGES.iter().enumerate() {
                let (va, vb) = (tet[*a], tet[*b]);
                let key = (va.min(vb), va.max(vb));
                let id = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edges.len() - 1
                });
                local[k] = id;
            }
            tet_edges.push(local);
        }

        let mut faces: HashMap<[usize; 3], (usize, usize, usize)> = HashMap::new();
        for (t, tet) in tets.iter().enumerate() {
            for (f, lf) in LOCAL_FACES.iter().enumerate() {
                let mut key = lf.map(|l| tet[l]);
                key.sort_unstable();
                let e = faces.entry(key).or_insert((0, t, f));
                e.0 += 1;
            }
        }
        let mut boundary_facets = Vec::new();
        for (key, (count, t, f)) in &faces {
            match count {
                1 => boundary_facets.push(BoundaryFacet {
                    tet: *t,
                    local_face: *f,
                    tag: 0,
                }),
                2 => {}
                _ => {
                    return Err(MeshError::NonManifold {
                        face: *key,
                        count: *count,
                    })
                }
            }
        }
        boundary_facets.sort_by_key(|b| (b.tet, b.local_face));

        Ok(Self {
            vertices,
            tets,
            edges,
            edge_index,
            tet_edges,
            boundary_facets,
            tags: vec![BoundaryTag {
                name: UNCLASSIFIED.into(),
                kind: TagKind::Neumann,
            }],
        })
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of P2 nodes: vertices followed by edge midpoints.
    pub fn n_p2_nodes(&self) -> usize {
        self.vertices.len() + self.edges.len()
    }

    /// Node id of the midpoint of the edge `(a, b)`, if that edge exists.
    pub fn edge_node(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index
            .get(&(a.min(b), a.max(b)))
            .map(|e| self.vertices.len() + e)
    }

    pub fn tet_edges(&self, tet: usize) -> &[usize; 6] {
        &self.tet_edges[tet]
    }

    /// The ten P2 node ids of a tet: four vertices, then the edge nodes in
    /// [`LOCAL_EDGES`] order.
    pub fn p2_nodes(&self, tet: usize) -> [usize; 10] {
        let v = self.tets[tet];
        let e = self.tet_edges[tet];
        let nv = self.vertices.len();
        [
            v[0],
            v[1],
            v[2],
            v[3],
            nv + e[0],
            nv + e[1],
            nv + e[2],
            nv + e[3],
            nv + e[4],
            nv + e[5],
        ]
    }

    /// Reference coordinates of a P2 node (midpoint for edge nodes).
    pub fn node_coords(&self, node: usize) -> [f64; 3] {
        let nv = self.vertices.len();
        if node < nv {
            self.vertices[node]
        } else {
            let [a, b] = self.edges[node - nv];
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            [
                0.5 * (pa[0] + pb[0]),
                0.5 * (pa[1] + pb[1]),
                0.5 * (pa[2] + pb[2]),
            ]
        }
    }

    pub fn tet_coords(&self, tet: usize) -> [[f64; 3]; 4] {
        self.tets[tet].map(|v| self.vertices[v])
    }

    pub fn tet_volume(&self, tet: usize) -> f64 {
        signed_volume6(self.tet_coords(tet)) / 6.0
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    pub fn element_centroid(&self, tet: usize) -> [f64; 3] {
        let p = self.tet_coords(tet);
        let mut c = [0.0; 3];
        for q in p {
            for i in 0..3 {
                c[i] += 0.25 * q[i];
            }
        }
        c
    }

    pub fn element_centroids(&self) -> Vec<[f64; 3]> {
        (0..self.tets.len())
            .map(|t| self.element_centroid(t))
            .collect()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|[a, b]| {
                let d = sub(self.vertices[*a], self.vertices[*b]);
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.boundary_facets
    }

    pub fn tags(&self) -> &[BoundaryTag] {
        &self.tags
    }

    pub fn tag_id(&self, name: &str) -> Option<usize> {
        self.tags.iter().position(|t| t.name == name)
    }

    /// Vertex ids of a boundary facet.
    pub fn facet_vertices(&self, facet: &BoundaryFacet) -> [usize; 3] {
        LOCAL_FACES[facet.local_face].map(|l| self.tets[facet.tet][l])
    }

    /// The six P2 nodes of a boundary facet: three vertices then three edge nodes.
    pub fn facet_p2_nodes(&self, facet: &BoundaryFacet) -> [usize; 6] {
        let [a, b, c] = self.facet_vertices(facet);
        let e = |x, y| self.edge_node(x, y).expect("facet edge belongs to its tet");
        [a, b, c, e(a, b), e(b, c), e(a, c)]
    }

    pub fn facet_centroid(&self, facet: &BoundaryFacet) -> [f64; 3] {
        let vs = self.facet_vertices(facet);
        let mut c = [0.0; 3];
        for v in vs {
            for i in 0..3 {
                c[i] += self.vertices[v][i] / 3.0;
            }
        }
        c
    }

    /// Area vector (outward normal times area) of a boundary facet.
    pub fn facet_area_vector(&self, facet: &BoundaryFacet) -> [f64; 3] {
        let [a, b, c] = self.facet_vertices(facet).map(|v| self.vertices[v]);
        let (u, v) = (sub(b, a), sub(c, a));
        let mut n = [
            0.5 * (u[1] * v[2] - u[2] * v[1]),
            0.5 * (u[2] * v[0] - u[0] * v[2]),
            0.5 * (u[0] * v[1] - u[1] * v[0]),
        ];
        // orient away from the opposite vertex
        let opp = self.vertices[self.tets[facet.tet][facet.local_face]];
        let d = sub(opp, a);
        if n[0] * d[0] + n[1] * d[1] + n[2] * d[2] > 0.0 {
            n = n.map(|x| -x);
        }
        n
    }

    /// Sorted, deduplicated P2 nodes lying on facets with the given tag.
    pub fn nodes_on_tag(&self, tag: usize) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .boundary_facets
            .iter()
            .filter(|f| f.tag == tag)
            .flat_map(|f| self.facet_p2_nodes(f))
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    pub fn facets_with_tag(&self, tag: usize) -> impl Iterator<Item = &BoundaryFacet> {
        self.boundary_facets.iter().filter(move |f| f.tag == tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn reference_tet() -> Mesh {
        Mesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            vec![[0, 1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn single_tet_node_sets() {
        let m = reference_tet();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_edges(), 6);
        assert_eq!(m.boundary_facets().len(), 4);
        assert!((m.total_volume() - 1.0 / 6.0).abs() < 1e-15);
        let n = m.edge_node(2, 0).unwrap();
        assert_eq!(m.node_coords(n), [0.0, 0.5, 0.0]);
    }

    #[test]
    fn inverted_tet_rejected() {
        let err = Mesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            vec![[0, 2, 1, 3]],
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::Orientation { tet: 0, .. }));
    }

    #[test]
    fn facet_normals_point_outward() {
        let m = reference_tet();
        let mut total = [0.0; 3];
        for f in m.boundary_facets() {
            let n = m.facet_area_vector(f);
            let c = m.facet_centroid(f);
            // centroid of the tet is (1/4,1/4,1/4)
            let d = [c[0] - 0.25, c[1] - 0.25, c[2] - 0.25];
            assert!(n[0] * d[0] + n[1] * d[1] + n[2] * d[2] > 0.0);
            for i in 0..3 {
                total[i] += n[i];
            }
        }
        assert!(total.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn edge_midpoints_are_means() {
        let m = generate_structured_cube(2, 1.0).unwrap();
        for (e, [a, b]) in m.edges().iter().enumerate() {
            let mid = m.node_coords(m.n_vertices() + e);
            let (pa, pb) = (m.vertices()[*a], m.vertices()[*b]);
            for i in 0..3 {
                assert_eq!(mid[i], 0.5 * (pa[i] + pb[i]));
            }
        }
    }
}
