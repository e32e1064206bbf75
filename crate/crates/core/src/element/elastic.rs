//! Plain P2 Neo-Hooke tet, used as the elastic reference.

use nalgebra::{SMatrix, SVector};

use super::{add_material_stiffness, add_stress_residual, deformation_gradient, ElementError, N_U};
use crate::interpolation::ElementGeometry;
use crate::material::{neo_hooke, MaterialParams};

pub type ElasticVector = SVector<f64, N_U>;
pub type ElasticMatrix = SMatrix<f64, N_U, N_U>;

pub fn elastic_energy(
    geo: &ElementGeometry,
    u: &[f64; N_U],
    params: &MaterialParams,
) -> Result<f64, ElementError> {
    let mut e = 0.0;
    for (gp, point) in geo.points.iter().enumerate() {
        let f = deformation_gradient(u, point);
        let resp = neo_hooke(&f, params)
            .map_err(|source| ElementError::InvertedState { point: gp, source })?;
        e += point.weight * resp.psi0;
    }
    Ok(e)
}

pub fn elastic_residual_tangent(
    geo: &ElementGeometry,
    u: &[f64; N_U],
    params: &MaterialParams,
) -> Result<(ElasticVector, Box<ElasticMatrix>), ElementError> {
    let mut r = ElasticVector::zeros();
    let mut k = Box::new(ElasticMatrix::zeros());
    for (gp, point) in geo.points.iter().enumerate() {
        let f = deformation_gradient(u, point);
        let resp = neo_hooke(&f, params)
            .map_err(|source| ElementError::InvertedState { point: gp, source })?;
        add_stress_residual(&mut r, point, &resp.p0);
        add_material_stiffness(&mut k, point, &resp.a0);
    }
    Ok((r, k))
}
