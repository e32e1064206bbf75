//! Element kernels. All of them share the P2 displacement interpolation and
//! integrate with the four-point rule.

pub mod elastic;
pub mod gd;

use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector3};
use thiserror::Error;

use crate::interpolation::{InterpolationError, PhysicalPoint};
use crate::material::{MaterialError, Tangent};

pub const N_U: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElementError {
    #[error("inverted state at Gauss point {point}: {source}")]
    InvertedState {
        point: usize,
        #[source]
        source: MaterialError,
    },
    #[error("singular internal block ({0}); check c > 0 or the damage parameters")]
    SingularInternal(String),
    #[error("Gauss point {point}: damage decreased by {decrease:e} below its committed value")]
    Irreversibility { point: usize, decrease: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct GeometryError(pub String);

impl From<InterpolationError> for ElementError {
    fn from(e: InterpolationError) -> Self {
        ElementError::Geometry(GeometryError(e.to_string()))
    }
}

/// `F = I + sum_a u_a (x) grad N_a` at one quadrature point.
pub fn deformation_gradient(u: &[f64], point: &PhysicalPoint) -> Matrix3<f64> {
    let mut f = Matrix3::identity();
    for (a, g) in point.p2_grad.iter().enumerate() {
        let ua = Vector3::new(u[3 * a], u[3 * a + 1], u[3 * a + 2]);
        f += ua * g.transpose();
    }
    f
}

/// Adds `w P : grad N_a` to the 30 displacement rows of `r`.
pub fn add_stress_residual<const N: usize>(
    r: &mut SVector<f64, N>,
    point: &PhysicalPoint,
    p: &Matrix3<f64>,
) {
    let w = point.weight;
    for (a, g) in point.p2_grad.iter().enumerate() {
        let pg = p * g;
        for i in 0..3 {
            r[3 * a + i] += w * pg[i];
        }
    }
}

/// Adds `w A : (grad N_a, grad N_b)` to the displacement block of `k`.
pub fn add_material_stiffness<const N: usize>(
    k: &mut SMatrix<f64, N, N>,
    point: &PhysicalPoint,
    a: &Tangent,
) {
    let w = point.weight;
    let g = &point.p2_grad;
    // t[a][i][kl] = sum_J A[iJ, kl] g_a[J]
    let mut t = [[[0.0; 9]; 3]; 10];
    for (na, ga) in g.iter().enumerate() {
        for i in 0..3 {
            for kl in 0..9 {
                t[na][i][kl] = a[(3 * i, kl)] * ga[0]
                    + a[(3 * i + 1, kl)] * ga[1]
                    + a[(3 * i + 2, kl)] * ga[2];
            }
        }
    }
    for na in 0..10 {
        for i in 0..3 {
            let row = 3 * na + i;
            let ti = &t[na][i];
            for (nb, gb) in g.iter().enumerate() {
                for kk in 0..3 {
                    let v = ti[3 * kk] * gb[0] + ti[3 * kk + 1] * gb[1] + ti[3 * kk + 2] * gb[2];
                    k[(row, 3 * nb + kk)] += w * v;
                }
            }
        }
    }
}

/// Condensed element contribution in the external (global) dof ordering.
#[derive(Debug, Clone)]
pub struct ElementSystem<R> {
    pub k: DMatrix<f64>,
    pub r: Vec<f64>,
    pub recovery: R,
}

/// Maximum absolute asymmetry of `k` relative to its largest entry.
pub fn relative_asymmetry<const N: usize>(k: &SMatrix<f64, N, N>) -> f64 {
    let scale = k.amax().max(f64::MIN_POSITIVE);
    (k - k.transpose()).amax() / scale
}
