use std::f64::consts::FRAC_PI_2;

use super::{signed_volume6, Mesh, MeshError, PlatePredicates};

/// Corner `c` of a hex has offsets `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
/// Even cells keep corners 1, 2, 4, 7 as the interior tet; odd cells use the
/// complementary set, so neighbouring cells agree on every face diagonal.
const FIVE_TET_EVEN: [[usize; 4]; 5] = [
    [0, 1, 2, 4],
    [3, 1, 2, 7],
    [5, 1, 4, 7],
    [6, 2, 4, 7],
    [1, 2, 4, 7],
];
const FIVE_TET_ODD: [[usize; 4]; 5] = [
    [1, 0, 3, 5],
    [2, 0, 3, 6],
    [4, 0, 5, 6],
    [7, 3, 5, 6],
    [0, 3, 5, 6],
];

/// Splits a structured grid of hexahedra into five tets each. `point(i,j,k)`
/// gives the coordinates of grid vertex `(i, j, k)`.
fn split_grid<P>(n: [usize; 3], point: P) -> Result<Mesh, MeshError>
where
    P: Fn(usize, usize, usize) -> [f64; 3],
{
    let [nx, ny, nz] = n;
    let id = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(point(i, j, k));
            }
        }
    }
    let mut tets = Vec::with_capacity(5 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let corner = |c: usize| id(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                let pattern = if (i + j + k) % 2 == 0 {
                    &FIVE_TET_EVEN
                } else {
                    &FIVE_TET_ODD
                };
                for local in pattern {
                    let mut tet = local.map(corner);
                    if signed_volume6(tet.map(|v| vertices[v])) < 0.0 {
                        tet.swap(2, 3);
                    }
                    tets.push(tet);
                }
            }
        }
    }
    Mesh::new(vertices, tets)
}

/// Uniform cube `[0, edge_length]^3` with `subdivisions_per_axis` cells per
/// axis, each cell split into five tets.
pub fn generate_structured_cube(
    subdivisions_per_axis: usize,
    edge_length: f64,
) -> Result<Mesh, MeshError> {
    if subdivisions_per_axis == 0 {
        return Err(MeshError::InvalidArgument(
            "subdivisions_per_axis must be positive".into(),
        ));
    }
    if !(edge_length > 0.0) {
        return Err(MeshError::InvalidArgument(format!(
            "edge length {edge_length} must be positive"
        )));
    }
    let n = subdivisions_per_axis;
    let h = edge_length / n as f64;
    split_grid([n, n, n], |i, j, k| {
        [i as f64 * h, j as f64 * h, k as f64 * h]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PlateGeometry {
    pub radius: f64,
    pub length: f64,
    pub thickness: f64,
}

impl Default for PlateGeometry {
    fn default() -> Self {
        Self {
            radius: 50.0,
            length: 100.0,
            thickness: 10.0,
        }
    }
}

/// Cells at refinement 0: around the hole, radially, through the thickness.
const PLATE_BASE_CELLS: [usize; 3] = [8, 4, 1];

/// Power-law exponent of the cell grading towards the ligament `y = 0`.
const LIGAMENT_GRADING: f64 = 2.0;

/// Maps the uniform grid parameter to the boundary parameter `s`. The half
/// next to `y = 0` is graded, the other half stays uniform, and `t = 1/2`
/// still lands on the corner.
fn boundary_parameter(t: f64) -> f64 {
    if t <= 0.5 {
        0.5 * (2.0 * t).powf(LIGAMENT_GRADING)
    } else {
        t
    }
}

/// Quarter plate `[0,L]^2 x [0,H]` minus the quarter cylinder of radius `R`
/// around the Z axis.
///
/// The domain is one structured block: the hole arc (parameter `s`, angle
/// `s * pi/2`) is blended linearly into the outer boundary, which runs from
/// `(L,0)` up to the corner `(L,L)` at `s = 1/2` and over to `(0,L)`. Cells
/// are graded towards `y = 0`, where the damage band forms. Every refinement
/// step doubles the cell count per direction. Facets are tagged
/// `x0`, `y0`, `xL`, `yL`, `z0`, `zH` and `hole`.
pub fn generate_quarter_plate_with_hole(
    radius: f64,
    length: f64,
    thickness: f64,
    refinement: u32,
) -> Result<Mesh, MeshError> {
    if !(radius > 0.0) || !(thickness > 0.0) {
        return Err(MeshError::InvalidArgument(
            "radius and thickness must be positive".into(),
        ));
    }
    if radius >= length {
        return Err(MeshError::InvalidArgument(format!(
            "hole radius {radius} must be smaller than plate length {length}"
        )));
    }
    let scale = 1usize << refinement;
    let [ns, nr, nz] = PLATE_BASE_CELLS.map(|n| n * scale);
    let outer = |s: f64| -> [f64; 2] {
        if s <= 0.5 {
            [length, 2.0 * s * length]
        } else {
            [2.0 * (1.0 - s) * length, length]
        }
    };
    let mesh = split_grid([ns, nr, nz], |i, j, k| {
        let s = boundary_parameter(i as f64 / ns as f64);
        let r = j as f64 / nr as f64;
        let theta = s * FRAC_PI_2;
        // exact endpoints keep the symmetry planes exactly planar
        let arc = match i {
            0 => [radius, 0.0],
            _ if i == ns => [0.0, radius],
            _ => [radius * theta.cos(), radius * theta.sin()],
        };
        let o = outer(s);
        let x = (1.0 - r) * arc[0] + r * o[0];
        let y = (1.0 - r) * arc[1] + r * o[1];
        [x, y, thickness * k as f64 / nz as f64]
    })?;
    let geometry = PlateGeometry {
        radius,
        length,
        thickness,
    };
    mesh.classify_boundary(&geometry.predicates())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_counts_follow_refinement() {
        for (s, nv, nt) in [(1u32, 27, 40), (2, 125, 320), (3, 729, 2560)] {
            let m = generate_structured_cube(1 << s, 1.0).unwrap();
            assert_eq!(m.n_vertices(), nv);
            assert_eq!(m.n_tets(), nt);
            assert_eq!(m.n_vertices(), (2usize.pow(s) + 1).pow(3));
            assert_eq!(m.n_tets(), 5 * 2usize.pow(3 * s));
        }
    }

    #[test]
    fn cube_volume_exact() {
        let m = generate_structured_cube(4, 2.0).unwrap();
        assert!((m.total_volume() - 8.0).abs() < 1e-10 * 8.0);
        // 6 faces, 2*16 triangles each
        assert_eq!(m.boundary_facets().len(), 6 * 2 * 16);
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert!(matches!(
            generate_structured_cube(0, 1.0),
            Err(MeshError::InvalidArgument(_))
        ));
    }

    #[test]
    fn plate_volume_within_polygon_bound() {
        let g = PlateGeometry::default();
        for refinement in 0..3 {
            let m = generate_quarter_plate_with_hole(g.radius, g.length, g.thickness, refinement)
                .unwrap();
            let exact = (g.length * g.length - std::f64::consts::PI * g.radius * g.radius / 4.0)
                * g.thickness;
            let n_arc = PLATE_BASE_CELLS[0] << refinement;
            // segment area lost to the chords
            let bound: f64 = (0..n_arc)
                .map(|i| {
                    let a = boundary_parameter(i as f64 / n_arc as f64);
                    let b = boundary_parameter((i + 1) as f64 / n_arc as f64);
                    let dtheta = (b - a) * FRAC_PI_2;
                    0.5 * g.radius * g.radius * (dtheta - dtheta.sin()) * g.thickness
                })
                .sum();
            let err = m.total_volume() - exact;
            assert!(
                err >= 0.0 && err <= bound * (1.0 + 1e-9),
                "refinement {refinement}: {err} vs {bound}"
            );
        }
    }

    #[test]
    fn plate_element_size_halves() {
        let g = PlateGeometry::default();
        let h: Vec<f64> = (0..3)
            .map(|r| {
                generate_quarter_plate_with_hole(g.radius, g.length, g.thickness, r)
                    .unwrap()
                    .max_edge_length()
            })
            .collect();
        // graded cells reach the halving ratio asymptotically
        for w in h.windows(2) {
            let ratio = w[1] / w[0];
            assert!(ratio > 0.45 && ratio < 0.6, "{h:?}");
        }
    }

    #[test]
    fn thin_ligament_stays_valid() {
        let m = generate_quarter_plate_with_hole(99.0, 100.0, 10.0, 1).unwrap();
        assert!((0..m.n_tets()).all(|t| m.tet_volume(t) > 0.0));
    }

    #[test]
    fn hole_must_fit() {
        assert!(generate_quarter_plate_with_hole(100.0, 100.0, 10.0, 0).is_err());
    }

    #[test]
    fn plate_tags_cover_boundary() {
        let m = generate_quarter_plate_with_hole(50.0, 100.0, 10.0, 0).unwrap();
        for name in ["x0", "y0", "xL", "yL", "z0", "zH", "hole"] {
            let id = m.tag_id(name).unwrap();
            assert!(m.facets_with_tag(id).count() > 0, "{name}");
        }
        assert!(m.tag_id(super::super::UNCLASSIFIED).is_none());
    }
}
