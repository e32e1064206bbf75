use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::VerifyError;
use crate::element::gd::{element_residual_tangent, ElementDofs, ElementHistory, MULTIPLIER};
use crate::element::{ElementError, N_U};
use crate::interpolation::{physical_gradients, ShapeTable};
use crate::material::MaterialParams;
use crate::mesh::Mesh;

/// Largest number of damage dofs accepted by the dense probe.
pub const PROBE_DOF_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub n_damage_dofs: usize,
    pub n_multiplier_dofs: usize,
    pub with_bubble: bool,
    /// Smallest of the `n_multiplier_dofs` singular values; zero when the
    /// block has fewer rows than columns.
    pub smallest_singular_value: f64,
    pub largest_singular_value: f64,
    pub rank: usize,
    pub max_edge_length: f64,
}

impl ProbeReport {
    pub fn full_column_rank(&self) -> bool {
        self.rank == self.n_multiplier_dofs
    }
}

/// Assembled `d^2 L / d alpha d lambda` block. Rows are the vertex damage
/// dofs followed by one bubble dof per element (if `with_bubble`), columns
/// the element multipliers. The block does not depend on the state, so it is
/// evaluated at the intact reference state.
pub fn coupling_block(
    mesh: &Mesh,
    params: &MaterialParams,
    with_bubble: bool,
) -> Result<DMatrix<f64>, VerifyError> {
    let (nv, ne) = (mesh.n_vertices(), mesh.n_tets());
    let rows = if with_bubble { nv + ne } else { nv };
    if rows > PROBE_DOF_LIMIT {
        return Err(VerifyError::TooLarge {
            size: rows,
            limit: PROBE_DOF_LIMIT,
        });
    }
    let shapes = ShapeTable::four_point();
    let mut b = DMatrix::zeros(rows, ne);
    for (e, tet) in mesh.tets().iter().enumerate() {
        let geo =
            physical_gradients(&shapes, &mesh.tet_coords(e)).map_err(|g| VerifyError::Element {
                element: e,
                source: ElementError::from(g),
            })?;
        let (_, k) = element_residual_tangent(
            &shapes,
            &geo,
            &ElementDofs::default(),
            &ElementHistory::default(),
            params,
        )
        .map_err(|source| VerifyError::Element { element: e, source })?;
        for (j, &v) in tet.iter().enumerate() {
            b[(v, e)] += k[(N_U + j, MULTIPLIER)];
        }
        if with_bubble {
            b[(nv + e, e)] += k[(N_U + 4, MULTIPLIER)];
        }
    }
    Ok(b)
}

/// Dense singular values of the coupling block.
pub fn coupling_block_probe(
    mesh: &Mesh,
    params: &MaterialParams,
    with_bubble: bool,
) -> Result<ProbeReport, VerifyError> {
    let b = coupling_block(mesh, params, with_bubble)?;
    let (rows, cols) = b.shape();
    let sv = b.singular_values();
    let largest = sv.max();
    let tol = largest * rows.max(cols) as f64 * f64::EPSILON;
    let rank = sv.iter().filter(|s| **s > tol).count();
    let smallest = if rows < cols { 0.0 } else { sv.min() };
    Ok(ProbeReport {
        n_damage_dofs: rows,
        n_multiplier_dofs: cols,
        with_bubble,
        smallest_singular_value: smallest,
        largest_singular_value: largest,
        rank,
        max_edge_length: mesh.max_edge_length(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_structured_cube;

    fn params() -> MaterialParams {
        MaterialParams::plate(0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn cube_with_bubble_has_full_rank() {
        let m = generate_structured_cube(2, 1.0).unwrap();
        let r = coupling_block_probe(&m, &params(), true).unwrap();
        assert!(r.full_column_rank());
        assert!(r.smallest_singular_value > 0.0);
    }

    #[test]
    fn removing_the_bubble_is_rank_deficient() {
        let m = generate_structured_cube(2, 1.0).unwrap();
        let r = coupling_block_probe(&m, &params(), false).unwrap();
        assert!(!r.full_column_rank());
        assert!(r.rank <= m.n_vertices());
        assert_eq!(r.smallest_singular_value, 0.0);
    }

    #[test]
    fn single_element() {
        let m = Mesh::new(
            vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![[0, 1, 2, 3]],
        )
        .unwrap();
        let b = coupling_block(&m, &params(), true).unwrap();
        assert_eq!(b.shape(), (5, 1));
        // int N_i = V/4 for the vertex functions
        let v = 1.0 / 6.0;
        for i in 0..4 {
            assert!((b[(i, 0)] - v / 4.0).abs() < 1e-14);
        }
        assert!(b[(4, 0)] > 0.0);
        assert_eq!(coupling_block_probe(&m, &params(), true).unwrap().rank, 1);
    }

    #[test]
    fn size_limit() {
        let m = generate_structured_cube(8, 1.0).unwrap();
        assert!(matches!(
            coupling_block_probe(&m, &params(), true),
            Err(VerifyError::TooLarge { .. })
        ));
    }
}
