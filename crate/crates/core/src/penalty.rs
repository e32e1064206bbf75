//! Penalty (micromorphic) reference formulation: quadratic displacements and
//! linear nodal damage coupled to a Gauss-point damage variable through
//! `p/2 (alpha - alpha_bar)^2`.
//!
//! The Gauss-point variable `alpha_bar` only enters the penalty coupling and
//! the local part of the dissipation; the stored energy and the gradient
//! term use the nodal field. `alpha_bar` is frozen during each linearization
//! and updated in closed form after every global solve.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element::gd::N_GAUSS;
use crate::element::{
    add_material_stiffness, add_stress_residual, deformation_gradient, ElementError, N_U,
};
use crate::interpolation::{ElementGeometry, ShapeTable};
use crate::material::{point_response, MaterialError, MaterialParams, PointState};

pub const N_PEN: usize = 34;
pub type PenaltyVector = SVector<f64, N_PEN>;
pub type PenaltyMatrix = SMatrix<f64, N_PEN, N_PEN>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PenaltyError {
    #[error("penalty parameter must be positive, got {0}")]
    InvalidPenalty(f64),
    #[error("need at least two refinement results, got {0}")]
    TooFewResults(usize),
    #[error(transparent)]
    Material(#[from] MaterialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub base: MaterialParams,
    pub p: f64,
}

impl PenaltyParams {
    pub fn new(base: MaterialParams, p: f64) -> Result<Self, PenaltyError> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(PenaltyError::InvalidPenalty(p));
        }
        Ok(Self { base, p })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PenaltyHistory {
    pub alpha_bar: [f64; N_GAUSS],
    pub alpha_bar_n: [f64; N_GAUSS],
}

/// Nodal damage at the Gauss points.
pub fn nodal_alpha_at_points(shapes: &ShapeTable, alpha_v: &[f64]) -> [f64; N_GAUSS] {
    std::array::from_fn(|gp| (0..4).map(|k| shapes.points[gp].p1[k] * alpha_v[k]).sum())
}

fn state_at(shapes: &ShapeTable, geo: &ElementGeometry, dofs: &[f64], gp: usize) -> PointState {
    let point = &geo.points[gp];
    let a = &dofs[N_U..N_PEN];
    let alpha = (0..4).map(|k| shapes.points[gp].p1[k] * a[k]).sum();
    let mut grad = [0.0; 3];
    for k in 0..4 {
        for i in 0..3 {
            grad[i] += point.p1_grad[k][i] * a[k];
        }
    }
    PointState {
        f: deformation_gradient(&dofs[..N_U], point),
        alpha,
        grad_alpha: grad,
    }
}

/// Element share of the penalty potential, `alpha_bar` held fixed.
pub fn penalty_energy(
    shapes: &ShapeTable,
    geo: &ElementGeometry,
    dofs: &[f64],
    history: &PenaltyHistory,
    params: &PenaltyParams,
) -> Result<f64, ElementError> {
    let m = &params.base;
    let mut e = 0.0;
    for gp in 0..N_GAUSS {
        let s = state_at(shapes, geo, dofs, gp);
        let resp = point_response(&s, m)
            .map_err(|source| ElementError::InvertedState { point: gp, source })?;
        let ab = history.alpha_bar[gp];
        let g2: f64 = s.grad_alpha.iter().map(|x| x * x).sum();
        let local = 0.5 * m.d1 * ab * ab + m.d0 * ab;
        e += geo.points[gp].weight
            * (resp.psi + 0.5 * m.c * g2 + local + 0.5 * params.p * (s.alpha - ab).powi(2));
    }
    Ok(e)
}

pub fn penalty_element(
    shapes: &ShapeTable,
    geo: &ElementGeometry,
    dofs: &[f64],
    history: &PenaltyHistory,
    params: &PenaltyParams,
) -> Result<(PenaltyVector, Box<PenaltyMatrix>), ElementError> {
    let m = &params.base;
    let mut r = PenaltyVector::zeros();
    let mut k = Box::new(PenaltyMatrix::zeros());
    for gp in 0..N_GAUSS {
        let s = state_at(shapes, geo, dofs, gp);
        let resp = point_response(&s, m)
            .map_err(|source| ElementError::InvertedState { point: gp, source })?;
        let point = &geo.points[gp];
        let w = point.weight;
        let n = &shapes.points[gp].p1;
        let g = &point.p1_grad;

        add_stress_residual(&mut r, point, &resp.p);
        add_material_stiffness(&mut k, point, &resp.a);

        let local = resp.dpsi_dalpha + params.p * (s.alpha - history.alpha_bar[gp]);
        let curv = resp.d2psi_dalpha2 + params.p;
        for j in 0..4 {
            let gd =
                g[j][0] * s.grad_alpha[0] + g[j][1] * s.grad_alpha[1] + g[j][2] * s.grad_alpha[2];
            r[N_U + j] += w * (local * n[j] + m.c * gd);
            for l in 0..4 {
                k[(N_U + j, N_U + l)] += w * (curv * n[j] * n[l] + m.c * g[j].dot(&g[l]));
            }
        }
        for (a, ga) in point.p2_grad.iter().enumerate() {
            let dpg = resp.d2psi_dfdalpha * ga;
            for i in 0..3 {
                for j in 0..4 {
                    let v = w * dpg[i] * n[j];
                    k[(3 * a + i, N_U + j)] += v;
                    k[(N_U + j, 3 * a + i)] += v;
                }
            }
        }
    }
    Ok((r, k))
}

/// Closed-form update of one Gauss-point history value.
///
/// The trial function `p (alpha - alpha_bar_n) - (d1 alpha_bar_n + d0)` is
/// linear in `alpha_bar`, so a positive trial value is resolved by its root
/// without sub-iterations.
pub fn penalty_history_update(alpha: f64, alpha_bar_n: f64, params: &PenaltyParams) -> f64 {
    let m = &params.base;
    let trial = params.p * (alpha - alpha_bar_n) - (m.d1 * alpha_bar_n + m.d0);
    if trial > 0.0 {
        (params.p * alpha - m.d0) / (params.p + m.d1)
    } else {
        alpha_bar_n
    }
}

/// Adds the linearization of the history map to a frozen-history tangent.
///
/// Where the stored `alpha_bar` has moved past `alpha_bar_n`, it follows the
/// closed-form root `(p alpha - d0) / (p + d1)`, so `d alpha_bar / d alpha`
/// is `p / (p + d1)`. With the correction the Newton matrix is the tangent of
/// the residual with the history eliminated and the staggered update keeps
/// quadratic convergence.
pub fn add_history_tangent(
    shapes: &ShapeTable,
    geo: &ElementGeometry,
    history: &PenaltyHistory,
    params: &PenaltyParams,
    k: &mut PenaltyMatrix,
) {
    let p = params.p;
    let slope = p * p / (p + params.base.d1);
    for gp in 0..N_GAUSS {
        if history.alpha_bar[gp] <= history.alpha_bar_n[gp] {
            continue;
        }
        let w = geo.points[gp].weight;
        let n = &shapes.points[gp].p1;
        for j in 0..4 {
            for l in 0..4 {
                k[(N_U + j, N_U + l)] -= w * slope * n[j] * n[l];
            }
        }
    }
}

/// Updates all Gauss points of an element; returns whether any value changed.
pub fn update_penalty_history(
    shapes: &ShapeTable,
    alpha_v: &[f64],
    history: &mut PenaltyHistory,
    params: &PenaltyParams,
) -> bool {
    let alpha = nodal_alpha_at_points(shapes, alpha_v);
    let mut changed = false;
    for gp in 0..N_GAUSS {
        let next = penalty_history_update(alpha[gp], history.alpha_bar_n[gp], params);
        changed |= next != history.alpha_bar[gp];
        history.alpha_bar[gp] = next;
    }
    changed
}

pub fn commit_penalty_history(history: &mut PenaltyHistory) {
    history.alpha_bar_n = history.alpha_bar;
}

/// Consecutive differences of displacement norms over refinements.
pub fn rate_of_change_metric(norms: &[f64]) -> Result<Vec<f64>, PenaltyError> {
    if norms.len() < 2 {
        return Err(PenaltyError::TooFewResults(norms.len()));
    }
    Ok(norms.windows(2).map(|w| w[1] - w[0]).collect())
}

/// True when the magnitudes of the differences decrease strictly.
pub fn is_converging(differences: &[f64]) -> bool {
    differences.windows(2).all(|w| w[1].abs() < w[0].abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::gd::{element_residual_tangent, ElementDofs, ElementHistory};
    use crate::interpolation::physical_gradients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(d0: f64, d1: f64, p: f64) -> PenaltyParams {
        PenaltyParams::new(MaterialParams::new(1000.0, 0.3, d0, d1, 5.0).unwrap(), p).unwrap()
    }

    fn geometry() -> (ShapeTable, ElementGeometry) {
        let shapes = ShapeTable::four_point();
        let geo = physical_gradients(
            &shapes,
            &[
                [0.1, 0.0, 0.0],
                [1.3, 0.2, 0.0],
                [0.0, 1.1, 0.1],
                [0.2, 0.1, 0.9],
            ],
        )
        .unwrap();
        (shapes, geo)
    }

    #[test]
    fn hand_solved_root() {
        let pp = params(0.0, 1.0, 10.0);
        assert!((penalty_history_update(0.11, 0.0, &pp) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn small_trial_keeps_history() {
        let pp = params(1.0, 1.0, 10.0);
        assert_eq!(penalty_history_update(0.05, 0.02, &pp), 0.02);
    }

    #[test]
    fn large_penalty_limit() {
        let alpha = 0.7;
        for p in [1e3, 1e6, 1e9] {
            let ab = penalty_history_update(alpha, 0.0, &params(1.0, 0.0, p));
            assert!((ab - (alpha - 1.0 / p)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_nonpositive_penalty() {
        let m = MaterialParams::new(1000.0, 0.3, 1.0, 1.0, 5.0).unwrap();
        assert!(PenaltyParams::new(m, 0.0).is_err());
        assert!(PenaltyParams::new(m, -1.0).is_err());
    }

    #[test]
    fn rate_of_change() {
        let d = rate_of_change_metric(&[1.0, 1.5, 1.7]).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 0.2).abs() < 1e-15);
        assert_eq!(
            rate_of_change_metric(&[2.0, 2.0, 2.0]).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(rate_of_change_metric(&[1.0]).is_err());
        assert!(is_converging(&d));
        assert!(!is_converging(&[0.1, 0.3]));
    }

    #[test]
    fn tangent_matches_differences() {
        let (shapes, geo) = geometry();
        let pp = params(1.0, 1.0, 50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dofs: Vec<f64> = (0..N_PEN)
            .map(|i| {
                if i < N_U {
                    rng.random_range(-0.03..0.03)
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let hist = PenaltyHistory {
            alpha_bar: [0.2, 0.4, 0.1, 0.3],
            alpha_bar_n: [0.0; 4],
        };
        let (r, k) = penalty_element(&shapes, &geo, &dofs, &hist, &pp).unwrap();
        let h = 1e-6;
        for j in 0..N_PEN {
            let mut xp = dofs.clone();
            let mut xm = dofs.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (penalty_energy(&shapes, &geo, &xp, &hist, &pp).unwrap()
                - penalty_energy(&shapes, &geo, &xm, &hist, &pp).unwrap())
                / (2.0 * h);
            assert!((fd - r[j]).abs() < 1e-6 * (1.0 + r.amax()));
            let col = (penalty_element(&shapes, &geo, &xp, &hist, &pp).unwrap().0
                - penalty_element(&shapes, &geo, &xm, &hist, &pp).unwrap().0)
                / (2.0 * h);
            for i in 0..N_PEN {
                assert!((col[i] - k[(i, j)]).abs() < 1e-5 * (1.0 + k.amax()));
            }
        }
    }

    #[test]
    fn history_tangent_matches_reduced_residual() {
        let (shapes, geo) = geometry();
        let pp = params(0.5, 1.0, 100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut dofs: Vec<f64> = (0..N_U).map(|_| rng.random_range(-0.03..0.03)).collect();
        dofs.extend_from_slice(&[0.4, 0.6, 0.5, 0.7]);
        let alpha_bar_n = [0.1; N_GAUSS];
        // residual with the history at its updated value for the given dofs
        let reduced = |x: &[f64]| {
            let mut h = PenaltyHistory {
                alpha_bar: alpha_bar_n,
                alpha_bar_n,
            };
            update_penalty_history(&shapes, &x[N_U..], &mut h, &pp);
            (penalty_element(&shapes, &geo, x, &h, &pp).unwrap(), h)
        };
        let ((_, mut k), h) = reduced(&dofs);
        assert!((0..N_GAUSS).all(|g| h.alpha_bar[g] > alpha_bar_n[g]));
        add_history_tangent(&shapes, &geo, &h, &pp, &mut k);
        let step = 1e-6;
        for j in 0..N_PEN {
            let (mut xp, mut xm) = (dofs.clone(), dofs.clone());
            xp[j] += step;
            xm[j] -= step;
            let col = (reduced(&xp).0 .0 - reduced(&xm).0 .0) / (2.0 * step);
            for i in 0..N_PEN {
                assert!((col[i] - k[(i, j)]).abs() < 1e-5 * k.amax(), "({i}, {j})");
            }
        }
    }

    #[test]
    fn matching_history_removes_penalty_contribution() {
        let (shapes, geo) = geometry();
        let mut dofs = vec![0.0; N_PEN];
        dofs[N_U..].copy_from_slice(&[0.3, 0.3, 0.3, 0.3]);
        let hist = PenaltyHistory {
            alpha_bar: [0.3; 4],
            alpha_bar_n: [0.0; 4],
        };
        let (r10, k10) =
            penalty_element(&shapes, &geo, &dofs, &hist, &params(1.0, 1.0, 10.0)).unwrap();
        let (r99, k99) =
            penalty_element(&shapes, &geo, &dofs, &hist, &params(1.0, 1.0, 990.0)).unwrap();
        assert!((r10 - r99).amax() < 1e-12);
        // only the p N N block differs
        let vol = geo.volume;
        let diff = *k99 - *k10;
        assert!(diff.view((0, 0), (N_U, N_PEN)).amax() == 0.0);
        let nn: f64 = diff.view((N_U, N_U), (4, 4)).sum();
        assert!((nn - 980.0 * vol).abs() < 1e-9 * 980.0 * vol);
    }

    #[test]
    fn displacement_block_agrees_with_mixed_element() {
        let (shapes, geo) = geometry();
        let pp = params(1.0, 1.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u: [f64; N_U] = std::array::from_fn(|_| rng.random_range(-0.03..0.03));
        let av = [0.2, 0.5, 0.1, 0.3];
        let mut dofs = u.to_vec();
        dofs.extend_from_slice(&av);
        let (rp, kp) =
            penalty_element(&shapes, &geo, &dofs, &PenaltyHistory::default(), &pp).unwrap();
        let gd = ElementDofs {
            u,
            alpha_v: av,
            alpha_b: 0.0,
            lambda: 0.0,
        };
        let (rg, kg) =
            element_residual_tangent(&shapes, &geo, &gd, &ElementHistory::default(), &pp.base)
                .unwrap();
        for i in 0..N_U {
            assert!((rp[i] - rg[i]).abs() < 1e-12);
            for j in 0..N_PEN {
                assert!((kp[(i, j)] - kg[(i, j)]).abs() < 1e-10);
            }
        }
    }
}
