//! The mixed gradient-damage tet: quadratic displacements (30 dofs), linear
//! vertex damage plus a quartic volume bubble (4 + 1 dofs) and an
//! elementwise constant Lagrange multiplier (1 dof).
//!
//! The element integrand is
//!
//! ```text
//! psi(F, alpha) + c/2 |grad alpha|^2 + phi(alpha) + lambda (alpha - alpha_bar)
//! ```
//!
//! where the last term is present only while the irreversibility constraint
//! of the element is switched on. The bubble amplitude and the multiplier
//! are internal: [`condense`] eliminates them so that only the 34 external
//! dofs reach the global system.
//!
//! Local dof order: `u` of the ten P2 nodes (node-major, 3 components),
//! the four vertex damage values, the bubble amplitude, the multiplier.

use nalgebra::{Matrix2, SMatrix, SVector, Vector2};

use super::{add_material_stiffness, add_stress_residual, deformation_gradient, ElementError, N_U};
use crate::interpolation::{ElementGeometry, ShapeTable};
use crate::material::{point_response, MaterialParams, PointState};

pub const N_EXT: usize = 34;
pub const N_FULL: usize = 36;
pub const BUBBLE: usize = 34;
pub const MULTIPLIER: usize = 35;
pub const N_GAUSS: usize = 4;

pub type FullVector = SVector<f64, N_FULL>;
pub type FullMatrix = SMatrix<f64, N_FULL, N_FULL>;
pub type ExtVector = SVector<f64, N_EXT>;
pub type ExtMatrix = SMatrix<f64, N_EXT, N_EXT>;

/// Tolerance used when checking irreversibility at commit.
pub const IRREVERSIBILITY_TOL: f64 = 1e-8;

/// Drop of the mean Gauss-point damage below its committed value that
/// switches a released element back on.
pub const UNLOADING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ElementDofs {
    pub u: [f64; N_U],
    pub alpha_v: [f64; 4],
    pub alpha_b: f64,
    pub lambda: f64,
}

impl Default for ElementDofs {
    fn default() -> Self {
        Self {
            u: [0.0; N_U],
            alpha_v: [0.0; 4],
            alpha_b: 0.0,
            lambda: 0.0,
        }
    }
}

impl ElementDofs {
    pub fn to_vector(&self) -> FullVector {
        let mut v = FullVector::zeros();
        v.as_mut_slice()[..N_U].copy_from_slice(&self.u);
        v.as_mut_slice()[N_U..N_U + 4].copy_from_slice(&self.alpha_v);
        v[BUBBLE] = self.alpha_b;
        v[MULTIPLIER] = self.lambda;
        v
    }

    pub fn from_vector(v: &FullVector) -> Self {
        let s = v.as_slice();
        Self {
            u: s[..N_U].try_into().unwrap(),
            alpha_v: s[N_U..N_U + 4].try_into().unwrap(),
            alpha_b: v[BUBBLE],
            lambda: v[MULTIPLIER],
        }
    }

    pub fn from_parts(ext: &[f64], alpha_b: f64, lambda: f64) -> Self {
        Self {
            u: ext[..N_U].try_into().unwrap(),
            alpha_v: ext[N_U..N_EXT].try_into().unwrap(),
            alpha_b,
            lambda,
        }
    }
}

/// Irreversibility bookkeeping of one element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementHistory {
    /// History value at each Gauss point.
    pub alpha_bar: [f64; N_GAUSS],
    /// Damage at each Gauss point at the end of the last converged step.
    pub alpha_n: [f64; N_GAUSS],
    pub constraint_active: bool,
    /// Multiplier value kept while the constraint is off.
    pub lambda_frozen: f64,
}

impl Default for ElementHistory {
    fn default() -> Self {
        Self {
            alpha_bar: [0.0; N_GAUSS],
            alpha_n: [0.0; N_GAUSS],
            constraint_active: true,
            lambda_frozen: 0.0,
        }
    }
}

/// Damage and its test functions at one Gauss point.
struct DamagePoint {
    /// vertex functions then the bubble
    n: [f64; 5],
    g: [[f64; 3]; 5],
}

fn damage_point(shapes: &ShapeTable, geo: &ElementGeometry, gp: usize) -> DamagePoint {
    let s = &shapes.points[gp];
    let p = &geo.points[gp];
    let mut n = [0.0; 5];
    let mut g = [[0.0; 3]; 5];
    for k in 0..4 {
        n[k] = s.p1[k];
        g[k] = [p.p1_grad[k][0], p.p1_grad[k][1], p.p1_grad[k][2]];
    }
    n[4] = s.bubble;
    g[4] = [p.bubble_grad[0], p.bubble_grad[1], p.bubble_grad[2]];
    DamagePoint { n, g }
}

fn alpha_coeffs(dofs: &ElementDofs) -> [f64; 5] {
    [
        dofs.alpha_v[0],
        dofs.alpha_v[1],
        dofs.alpha_v[2],
        dofs.alpha_v[3],
        dofs.alpha_b,
    ]
}

/// Damage at the Gauss points.
pub fn alpha_at_points(shapes: &ShapeTable, dofs: &ElementDofs) -> [f64; N_GAUSS] {
    let a = alpha_coeffs(dofs);
    std::array::from_fn(|gp| {
        let s = &shapes.points[gp];
        (0..4).map(|k| s.p1[k] * a[k]).sum::<f64>() + s.bubble * a[4]
    })
}

fn point_state(
    shapes: &ShapeTable,
    geo: &ElementGeometry,
    dofs: &ElementDofs,
    gp: usize,
) -> (PointState, DamagePoint) {
    let dp = damage_point(shapes, geo, gp);
    let a = alpha_coeffs(dofs);
    let mut alpha = 0.0;
    let mut grad = [0.0; 3];
    for j in 0..5 {
        alpha += dp.n[j] * a[j];
        for i in 0..3 {
            grad[i] += dp.g[j][i] * a[j];
        }
    }
    let f = deformation_gradient(&dofs.u, &geo.points[gp]);
    (
        PointState {
            f,
            alpha,
            grad_alpha: grad,
        },
        dp,
    )
}

/// Element share of the discrete Lagrangian (without external work).
pub fn element_lagrangian(
    shapes: &ShapeTable,
    geo: &ElementGeometry,
    dofs: &ElementDofs,
    history: &ElementHistory,
    params: &MaterialParams,
) -> Result<f64, ElementError> {
    let mut l = 0.0;
    for gp in 0..N_GAUSS {
        let (state, _) = point_state(shapes, geo, dofs, gp);
        let resp = point_response(&state, params)
            .map_err(|source| ElementError::InvertedState { point: gp, source })?;
        let g2: f64 = state.grad_alpha.iter().map(|x| x * x).sum();
        let mut integrand = resp.psi + 0.5 * params.c * g2 + resp.phi;
        if history.constraint_active {
            integrand += dofs.lambda * (state.alpha - history.alpha_bar[gp]);
        }
        l += geo.points[gp].weight * integrand;
    }
    Ok(l)
}

/// Residual and tangent of the element Lagrangian with respect to all 36
/// element dofs. With the constraint off, the multiplier row and column are
/// identically zero.
pub fn element_residual_tangent(
    shapes: &ShapeTable,
    geo: &ElementGeometry,
    dofs: &ElementDofs,
    history: &ElementHistory,
    params: &MaterialParams,
) -> Result<(FullVector, Box<FullMatrix>), ElementError> {
    let mut r = FullVector::zeros();
    let mut k = Box::new(FullMatrix::zeros());
    let active = history.constraint_active;
    let c = params.c;
    for gp in 0..N_GAUSS {
        let (state, dp) = point_state(shapes, geo, dofs, gp);
        let resp = point_response(&state, params)
            .map_err(|source| ElementError::InvertedState { point: gp, source })?;
        let point = &geo.points[gp];
        let w = point.weight;

        add_stress_residual(&mut r, point, &resp.p);
        add_material_stiffness(&mut k, point, &resp.a);

        let lam = if active { dofs.lambda } else { 0.0 };
        let local = resp.dpsi_dalpha + resp.dphi_dalpha + lam;
        let curv = resp.d2psi_dalpha2 + resp.d2phi_dalpha2;
        for j in 0..5 {
            let gj = dp.g[j];
            let grad_dot = gj[0] * state.grad_alpha[0]
                + gj[1] * state.grad_alpha[1]
                + gj[2] * state.grad_alpha[2];
            r[N_U + j] += w * (local * dp.n[j] + c * grad_dot);
            for m in 0..5 {
                let gm = dp.g[m];
                let gg = gj[0] * gm[0] + gj[1] * gm[1] + gj[2] * gm[2];
                k[(N_U + j, N_U + m)] += w * (curv * dp.n[j] * dp.n[m] + c * gg);
            }
        }

        // d P / d alpha coupled with grad N_a and the damage test functions
        for (a, ga) in point.p2_grad.iter().enumerate() {
            let dpg = resp.d2psi_dfdalpha * ga;
            for i in 0..3 {
                for j in 0..5 {
                    let v = w * dpg[i] * dp.n[j];
                    k[(3 * a + i, N_U + j)] += v;
                    k[(N_U + j, 3 * a + i)] += v;
                }
            }
        }

        if active {
            r[MULTIPLIER] += w * (state.alpha - history.alpha_bar[gp]);
            for j in 0..5 {
                k[(N_U + j, MULTIPLIER)] += w * dp.n[j];
                k[(MULTIPLIER, N_U + j)] += w * dp.n[j];
            }
        }
    }
    Ok((r, k))
}

/// Data needed to recover the internal increments from the external ones.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub active: bool,
    inv: Matrix2<f64>,
    k_ie: SMatrix<f64, 2, N_EXT>,
    r_i: Vector2<f64>,
}

impl Recovery {
    /// `(d alpha_B, d lambda)` for the external increment `d_ext`.
    pub fn internal_increment(&self, d_ext: &[f64]) -> (f64, f64) {
        let mut rhs = self.r_i;
        for j in 0..N_EXT {
            rhs[0] += self.k_ie[(0, j)] * d_ext[j];
            rhs[1] += self.k_ie[(1, j)] * d_ext[j];
        }
        let d = -(self.inv * rhs);
        (d[0], d[1])
    }
}

#[derive(Debug, Clone)]
pub struct CondensedElement {
    pub k_ext: Box<ExtMatrix>,
    pub r_ext: ExtVector,
    pub recovery: Recovery,
}

/// Static condensation of the bubble and multiplier.
///
/// With the constraint on, the internal block is the saddle matrix
/// `[[K_BB, K_BL], [K_BL, 0]]` and is invertible whenever `K_BL = int N_B`
/// is nonzero. With the constraint off only the bubble is eliminated and the
/// multiplier increment is zero.
pub fn condense(
    r: &FullVector,
    k: &FullMatrix,
    active: bool,
) -> Result<CondensedElement, ElementError> {
    let kbb = k[(BUBBLE, BUBBLE)];
    let scale = k.view((N_U, N_U), (5, 5)).amax().max(f64::MIN_POSITIVE);
    let inv = if active {
        let kbl = k[(BUBBLE, MULTIPLIER)];
        if !(kbl.abs() > 1e-13 * scale.max(kbl.abs()) * 1e-3) || !kbl.is_finite() {
            return Err(ElementError::SingularInternal(format!(
                "bubble-multiplier coupling {kbl:e}"
            )));
        }
        Matrix2::new(0.0, 1.0 / kbl, 1.0 / kbl, -kbb / (kbl * kbl))
    } else {
        if !(kbb.abs() > 1e-13 * scale) || !kbb.is_finite() {
            return Err(ElementError::SingularInternal(format!(
                "bubble stiffness {kbb:e}"
            )));
        }
        Matrix2::new(1.0 / kbb, 0.0, 0.0, 0.0)
    };

    let mut k_ie = SMatrix::<f64, 2, N_EXT>::zeros();
    for j in 0..N_EXT {
        k_ie[(0, j)] = k[(BUBBLE, j)];
        if active {
            k_ie[(1, j)] = k[(MULTIPLIER, j)];
        }
    }
    let r_i = if active {
        Vector2::new(r[BUBBLE], r[MULTIPLIER])
    } else {
        Vector2::new(r[BUBBLE], 0.0)
    };

    // K_ei inv = (inv^T K_ie)^T, and inv is symmetric
    let m = inv * k_ie; // 2 x 34
    let mut k_ext = Box::new(ExtMatrix::zeros());
    for i in 0..N_EXT {
        for j in 0..N_EXT {
            k_ext[(i, j)] = k[(i, j)] - (k_ie[(0, i)] * m[(0, j)] + k_ie[(1, i)] * m[(1, j)]);
        }
    }
    let mr = inv * r_i;
    let mut r_ext = ExtVector::zeros();
    for i in 0..N_EXT {
        r_ext[i] = r[i] - (k_ie[(0, i)] * mr[0] + k_ie[(1, i)] * mr[1]);
    }
    Ok(CondensedElement {
        k_ext,
        r_ext,
        recovery: Recovery {
            active,
            inv,
            k_ie,
            r_i,
        },
    })
}

/// Outcome of one history update of an element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HistoryUpdate {
    /// The constraint flag changed.
    pub flipped: bool,
    /// The constraint is on although the multiplier is positive (forced re-activation).
    pub pending_release: bool,
}

/// Active-set update after a global solve. `iteration` counts solves from
/// zero; after the second solve (`iteration == 1`) the constraint is switched
/// on regardless of the multiplier so that unloading can be detected.
///
/// A positive multiplier releases the constraint. While released the
/// multiplier is frozen and carries no information, so a released element is
/// also switched back on as soon as its damage integral drops below the
/// committed one.
pub fn update_history(
    shapes: &ShapeTable,
    dofs: &ElementDofs,
    history: &mut ElementHistory,
    iteration: usize,
) -> HistoryUpdate {
    let was_active = history.constraint_active;
    let wants_release = dofs.lambda > 0.0;
    let alpha = alpha_at_points(shapes, dofs);
    let unloading = !was_active && {
        let w = &shapes.rule.weights;
        let drop: f64 = (0..N_GAUSS)
            .map(|g| w[g] * (history.alpha_n[g] - alpha[g]))
            .sum();
        drop > UNLOADING_TOL
    };
    if wants_release && iteration != 1 && !unloading {
        history.alpha_bar = alpha;
        history.constraint_active = false;
        history.lambda_frozen = dofs.lambda;
    } else {
        history.alpha_bar = history.alpha_n;
        history.constraint_active = true;
    }
    HistoryUpdate {
        flipped: was_active != history.constraint_active,
        pending_release: iteration == 1 && wants_release,
    }
}

/// Commits a converged step. Released elements take over the converged
/// Gauss-point damage as their new history; constrained elements keep theirs.
/// A released Gauss point whose damage fell below its committed value by more
/// than [`IRREVERSIBILITY_TOL`] is reported, after committing.
pub fn commit_step(
    shapes: &ShapeTable,
    dofs: &ElementDofs,
    history: &mut ElementHistory,
) -> Result<(), ElementError> {
    history.lambda_frozen = dofs.lambda;
    if history.constraint_active {
        history.alpha_bar = history.alpha_n;
        return Ok(());
    }
    let alpha = alpha_at_points(shapes, dofs);
    let mut worst: Option<(usize, f64)> = None;
    for gp in 0..N_GAUSS {
        let decrease = history.alpha_n[gp] - alpha[gp];
        if decrease > IRREVERSIBILITY_TOL && worst.is_none_or(|(_, d)| decrease > d) {
            worst = Some((gp, decrease));
        }
    }
    history.alpha_n = alpha;
    history.alpha_bar = alpha;
    match worst {
        Some((point, decrease)) => Err(ElementError::Irreversibility { point, decrease }),
        None => Ok(()),
    }
}

/// Multiplier and constraint integral `int (alpha - alpha_bar) dX` of an element.
pub fn constraint_residual(
    shapes: &ShapeTable,
    geo: &ElementGeometry,
    dofs: &ElementDofs,
    history: &ElementHistory,
) -> f64 {
    let alpha = alpha_at_points(shapes, dofs);
    (0..N_GAUSS)
        .map(|gp| geo.points[gp].weight * (alpha[gp] - history.alpha_bar[gp]))
        .sum()
}
