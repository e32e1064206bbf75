//! Pointwise constitutive response: compressible Neo-Hooke energy softened by
//! `1 - D(alpha)` with `D = 1 - exp(-alpha)`, and the dissipation function
//! `d1/2 alpha^2 + d0 alpha`.
//!
//! Fourth-order tangents are stored as 9x9 matrices with row `3i + J` and
//! column `3k + L` holding `dP_iJ / dF_kL`.

use nalgebra::{Matrix3, SMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Tangent = SMatrix<f64, 9, 9>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("invalid material parameters: {0}")]
    InvalidParams(String),
    #[error("deformation gradient has det F = {0:e} <= 0")]
    InvertedState(f64),
    #[error("damage variable {0} is negative")]
    Domain(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MaterialInput", into = "MaterialInput")]
pub struct MaterialParams {
    /// Young's modulus, MPa.
    pub youngs: f64,
    pub poisson: f64,
    /// Constant part of the damage threshold, MPa.
    pub d0: f64,
    /// Linear hardening of the threshold, MPa.
    pub d1: f64,
    /// Nonlocal (gradient) parameter, N mm.
    pub c: f64,
    pub lambda: f64,
    pub mu: f64,
}

/// Serialized form: either `youngs`/`poisson` or `lambda`/`mu`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub youngs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub d0: f64,
    pub d1: f64,
    pub c: f64,
}

impl TryFrom<MaterialInput> for MaterialParams {
    type Error = MaterialError;

    fn try_from(m: MaterialInput) -> Result<Self, Self::Error> {
        match (m.youngs, m.poisson, m.lambda, m.mu) {
            (Some(e), Some(nu), None, None) => Self::new(e, nu, m.d0, m.d1, m.c),
            (None, None, Some(l), Some(mu)) => Self::from_lame(l, mu, m.d0, m.d1, m.c),
            _ => Err(MaterialError::InvalidParams(
                "give either youngs+poisson or lambda+mu".into(),
            )),
        }
    }
}

impl From<MaterialParams> for MaterialInput {
    fn from(p: MaterialParams) -> Self {
        Self {
            youngs: Some(p.youngs),
            poisson: Some(p.poisson),
            lambda: None,
            mu: None,
            d0: p.d0,
            d1: p.d1,
            c: p.c,
        }
    }
}

impl MaterialParams {
    pub fn new(youngs: f64, poisson: f64, d0: f64, d1: f64, c: f64) -> Result<Self, MaterialError> {
        if !(youngs > 0.0) {
            return Err(MaterialError::InvalidParams(format!(
                "E = {youngs} must be positive"
            )));
        }
        if !(0.0..0.5).contains(&poisson) {
            return Err(MaterialError::InvalidParams(format!(
                "nu = {poisson} must lie in [0, 0.5)"
            )));
        }
        let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
        let mu = youngs / (2.0 * (1.0 + poisson));
        Self {
            youngs,
            poisson,
            d0,
            d1,
            c,
            lambda,
            mu,
        }
        .checked()
    }

    pub fn from_lame(
        lambda: f64,
        mu: f64,
        d0: f64,
        d1: f64,
        c: f64,
    ) -> Result<Self, MaterialError> {
        if !(mu > 0.0) || !(lambda >= 0.0) {
            return Err(MaterialError::InvalidParams(format!(
                "lambda = {lambda}, mu = {mu}"
            )));
        }
        let poisson = lambda / (2.0 * (lambda + mu));
        let youngs = mu * (3.0 * lambda + 2.0 * mu) / (lambda + mu);
        Self {
            youngs,
            poisson,
            d0,
            d1,
            c,
            lambda,
            mu,
        }
        .checked()
    }

    fn checked(self) -> Result<Self, MaterialError> {
        if !(self.d0 >= 0.0 && self.d1 >= 0.0) || !(self.d0 + self.d1 > 0.0) {
            return Err(MaterialError::InvalidParams(format!(
                "need d0, d1 >= 0 with d0 + d1 > 0 (got {}, {})",
                self.d0, self.d1
            )));
        }
        if !(self.c >= 0.0) {
            return Err(MaterialError::InvalidParams(format!(
                "c = {} must be non-negative",
                self.c
            )));
        }
        Ok(self)
    }

    /// Parameters of the plate benchmark: E = 1000 MPa, nu = 0.3.
    pub fn plate(d0: f64, d1: f64, c: f64) -> Result<Self, MaterialError> {
        Self::new(1000.0, 0.3, d0, d1, c)
    }
}

#[derive(Debug, Clone)]
pub struct ElasticResponse {
    pub psi0: f64,
    pub p0: Matrix3<f64>,
    pub a0: Tangent,
}

/// Undamaged energy `mu/2 (I_C - 3) + lambda/4 (J^2 - 1) - lambda/2 ln J - mu ln J`,
/// its first Piola-Kirchhoff stress and the material tangent.
pub fn neo_hooke(
    f: &Matrix3<f64>,
    params: &MaterialParams,
) -> Result<ElasticResponse, MaterialError> {
    let (lam, mu) = (params.lambda, params.mu);
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(MaterialError::InvertedState(j));
    }
    let f_inv = f.try_inverse().ok_or(MaterialError::InvertedState(j))?;
    let f_inv_t = f_inv.transpose();
    let ln_j = j.ln();
    let i_c = f.norm_squared();
    let psi0 = 0.5 * mu * (i_c - 3.0) + 0.25 * lam * (j * j - 1.0) - (0.5 * lam + mu) * ln_j;
    let beta = 0.5 * lam * (j * j - 1.0) - mu;
    let p0 = f * mu + f_inv_t * beta;

    let mut a0 = Tangent::zeros();
    for i in 0..3 {
        for jj in 0..3 {
            let row = 3 * i + jj;
            for k in 0..3 {
                for l in 0..3 {
                    let mut v = lam * j * j * f_inv_t[(i, jj)] * f_inv_t[(k, l)]
                        - beta * f_inv[(jj, k)] * f_inv[(l, i)];
                    if i == k && jj == l {
                        v += mu;
                    }
                    a0[(row, 3 * k + l)] = v;
                }
            }
        }
    }
    Ok(ElasticResponse { psi0, p0, a0 })
}

/// `(D, D', D'')` of `D = 1 - exp(-alpha)`.
pub fn damage_function(alpha: f64) -> Result<[f64; 3], MaterialError> {
    if alpha < 0.0 {
        return Err(MaterialError::Domain(alpha));
    }
    Ok(damage_unchecked(alpha))
}

/// Same formula without the domain check. Newton iterates and the
/// zero-mean fluctuations of the bubble field can dip below zero; the
/// analytic continuation keeps the linearization consistent there.
pub fn damage_unchecked(alpha: f64) -> [f64; 3] {
    let e = (-alpha).exp();
    [1.0 - e, e, -e]
}

/// `(phi, phi', phi'')` of `phi = d1/2 alpha^2 + d0 alpha`.
pub fn dissipation(alpha: f64, params: &MaterialParams) -> [f64; 3] {
    [
        0.5 * params.d1 * alpha * alpha + params.d0 * alpha,
        params.d1 * alpha + params.d0,
        params.d1,
    ]
}

#[derive(Debug, Clone, Copy)]
pub struct PointState {
    pub f: Matrix3<f64>,
    pub alpha: f64,
    pub grad_alpha: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct PointResponse {
    pub psi0: f64,
    pub psi: f64,
    pub p: Matrix3<f64>,
    pub dpsi_dalpha: f64,
    pub d2psi_dalpha2: f64,
    pub d2psi_dfdalpha: Matrix3<f64>,
    pub a: Tangent,
    pub phi: f64,
    pub dphi_dalpha: f64,
    pub d2phi_dalpha2: f64,
}

/// Full response of `psi = (1 - D(alpha)) psi0(F)` plus the dissipation terms.
pub fn point_response(
    state: &PointState,
    params: &MaterialParams,
) -> Result<PointResponse, MaterialError> {
    let el = neo_hooke(&state.f, params)?;
    let [d, dd, ddd] = damage_unchecked(state.alpha);
    let [phi, dphi, ddphi] = dissipation(state.alpha, params);
    let g = 1.0 - d;
    Ok(PointResponse {
        psi0: el.psi0,
        psi: g * el.psi0,
        p: el.p0 * g,
        dpsi_dalpha: -dd * el.psi0,
        d2psi_dalpha2: -ddd * el.psi0,
        d2psi_dfdalpha: el.p0 * (-dd),
        a: el.a0 * g,
        phi,
        dphi_dalpha: dphi,
        d2phi_dalpha2: ddphi,
    })
}

/// Damage evolution criterion `D' psi0 + c Lap(alpha) - phi'`; the caller
/// supplies `c Lap(alpha)`.
pub fn yield_value(
    state: &PointState,
    laplacian_term: f64,
    params: &MaterialParams,
) -> Result<f64, MaterialError> {
    let el = neo_hooke(&state.f, params)?;
    let [_, dd, _] = damage_unchecked(state.alpha);
    Ok(dd * el.psi0 + laplacian_term - dissipation(state.alpha, params)[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> MaterialParams {
        MaterialParams::new(1000.0, 0.3, 1.0, 1.0, 100.0).unwrap()
    }

    pub(crate) fn random_f(rng: &mut impl Rng) -> Matrix3<f64> {
        loop {
            let f = Matrix3::identity() + Matrix3::from_fn(|_, _| rng.random_range(-0.3..0.3));
            if f.determinant() > 0.2 {
                return f;
            }
        }
    }

    #[test]
    fn lame_constants() {
        let p = params();
        assert!((p.mu - 384.6153846153846).abs() < 1e-9);
        assert!((p.lambda - 576.9230769230769).abs() < 1e-9);
        let q = MaterialParams::from_lame(p.lambda, p.mu, 1.0, 1.0, 100.0).unwrap();
        assert!((q.youngs - 1000.0).abs() < 1e-9 && (q.poisson - 0.3).abs() < 1e-12);
    }

    #[test]
    fn invalid_params() {
        assert!(MaterialParams::new(-1.0, 0.3, 1.0, 0.0, 0.0).is_err());
        assert!(MaterialParams::new(1.0, 0.5, 1.0, 0.0, 0.0).is_err());
        assert!(MaterialParams::new(1.0, 0.3, 0.0, 0.0, 0.0).is_err());
        assert!(MaterialParams::new(1.0, 0.3, 1.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn stress_free_reference() {
        let r = neo_hooke(&Matrix3::identity(), &params()).unwrap();
        assert_eq!(r.psi0, 0.0);
        assert!(r.p0.norm() < 1e-13);
    }

    #[test]
    fn uniaxial_stretch_direct_evaluation() {
        let p = params();
        let f = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.1, 1.0, 1.0));
        let (mu, lam) = (384.6153846153846, 576.9230769230769);
        let (i_c, j) = (1.21 + 2.0, 1.1f64);
        let expect =
            mu / 2.0 * (i_c - 3.0) + lam / 4.0 * (j * j - 1.0) - lam / 2.0 * j.ln() - mu * j.ln();
        let r = neo_hooke(&f, &p).unwrap();
        assert!((r.psi0 - expect).abs() < 1e-10);
    }

    #[test]
    fn inverted_state() {
        let f = Matrix3::from_diagonal(&nalgebra::Vector3::new(-1.0, 1.0, 1.0));
        assert!(matches!(
            neo_hooke(&f, &params()),
            Err(MaterialError::InvertedState(_))
        ));
    }

    #[test]
    fn stress_and_tangent_match_differences() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..50 {
            let f = random_f(&mut rng);
            let r = neo_hooke(&f, &p).unwrap();
            for k in 0..3 {
                for l in 0..3 {
                    let mut fp = f;
                    let mut fm = f;
                    fp[(k, l)] += h;
                    fm[(k, l)] -= h;
                    let rp = neo_hooke(&fp, &p).unwrap();
                    let rm = neo_hooke(&fm, &p).unwrap();
                    let dpsi = (rp.psi0 - rm.psi0) / (2.0 * h);
                    assert!((dpsi - r.p0[(k, l)]).abs() < 1e-6 * (1.0 + r.p0.norm()));
                    let dp = (rp.p0 - rm.p0) / (2.0 * h);
                    for i in 0..3 {
                        for j in 0..3 {
                            let a = r.a0[(3 * i + j, 3 * k + l)];
                            assert!((dp[(i, j)] - a).abs() < 1e-5 * (1.0 + r.a0.norm()));
                        }
                    }
                }
            }
            assert!((r.a0 - r.a0.transpose()).norm() < 1e-10 * r.a0.norm());
        }
    }

    #[test]
    fn damage_function_values() {
        assert_eq!(damage_function(0.0).unwrap()[0], 0.0);
        assert!((damage_function(2f64.ln()).unwrap()[0] - 0.5).abs() < 1e-15);
        let mut last = 0.0;
        for k in 1..30 {
            let d = damage_function(k as f64).unwrap()[0];
            assert!(d > last && d < 1.0);
            last = d;
        }
        assert!(matches!(
            damage_function(-1e-3),
            Err(MaterialError::Domain(_))
        ));
    }

    #[test]
    fn dissipation_values() {
        let p = MaterialParams::new(1000.0, 0.3, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(dissipation(0.0, &p)[0], 0.0);
        for a in [0.0, 0.5, 3.0] {
            assert_eq!(dissipation(a, &p)[1], 1.0);
        }
        let q = MaterialParams::new(1000.0, 0.3, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(dissipation(2.0, &q), [2.0, 2.0, 1.0]);
    }

    #[test]
    fn intact_response_is_elastic() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_f(&mut rng);
        let el = neo_hooke(&f, &p).unwrap();
        let r = point_response(
            &PointState {
                f,
                alpha: 0.0,
                grad_alpha: [0.0; 3],
            },
            &p,
        )
        .unwrap();
        assert_eq!(r.psi, el.psi0);
        assert_eq!(r.p, el.p0);
        assert_eq!(r.a, el.a0);
    }

    #[test]
    fn severe_damage_removes_stress() {
        let p = params();
        let f = Matrix3::new(1.2, 0.1, 0.0, 0.0, 0.9, 0.05, 0.0, 0.0, 1.1);
        let r = point_response(
            &PointState {
                f,
                alpha: 40.0,
                grad_alpha: [0.0; 3],
            },
            &p,
        )
        .unwrap();
        assert!(r.p.amax() < 1e-12);
    }

    #[test]
    fn alpha_derivatives_match_differences() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-6;
        for _ in 0..100 {
            let f = random_f(&mut rng);
            let alpha = rng.random_range(0.0..3.0);
            let at = |a: f64| {
                point_response(
                    &PointState {
                        f,
                        alpha: a,
                        grad_alpha: [0.0; 3],
                    },
                    &p,
                )
                .unwrap()
            };
            let (r, rp, rm) = (at(alpha), at(alpha + h), at(alpha - h));
            let rel = |x: f64, y: f64| (x - y).abs() / (1.0 + y.abs());
            assert!(rel((rp.psi - rm.psi) / (2.0 * h), r.dpsi_dalpha) < 1e-6);
            assert!(
                rel(
                    (rp.dpsi_dalpha - rm.dpsi_dalpha) / (2.0 * h),
                    r.d2psi_dalpha2
                ) < 1e-6
            );
            assert!(
                ((rp.p - rm.p) / (2.0 * h) - r.d2psi_dfdalpha).norm() < 1e-6 * (1.0 + r.p.norm())
            );
            assert!(rel((rp.phi - rm.phi) / (2.0 * h), r.dphi_dalpha) < 1e-6);
        }
    }

    #[test]
    fn energy_is_objective() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let f = random_f(&mut rng);
            let axis =
                nalgebra::Vector3::new(rng.random::<f64>() - 0.5, rng.random(), rng.random());
            let q = Rotation3::from_axis_angle(
                &nalgebra::Unit::new_normalize(axis),
                rng.random_range(0.0..6.0),
            );
            let alpha = rng.random_range(0.0..2.0);
            let psi = |f| {
                point_response(
                    &PointState {
                        f,
                        alpha,
                        grad_alpha: [0.0; 3],
                    },
                    &p,
                )
                .unwrap()
                .psi
            };
            let (a, b) = (psi(f), psi(q.matrix() * f));
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn yield_value_cases() {
        let p = MaterialParams::new(1000.0, 0.3, 1.0, 0.0, 0.0).unwrap();
        let rest = PointState {
            f: Matrix3::identity(),
            alpha: 0.0,
            grad_alpha: [0.0; 3],
        };
        assert_eq!(yield_value(&rest, 0.0, &p).unwrap(), -1.0);
        let stretched = |s: f64| PointState {
            f: Matrix3::from_diagonal(&nalgebra::Vector3::new(s, 1.0, 1.0)),
            alpha: 0.3,
            grad_alpha: [0.0; 3],
        };
        let a = yield_value(&stretched(1.05), 0.0, &p).unwrap();
        let b = yield_value(&stretched(1.10), 0.0, &p).unwrap();
        assert!(b > a);
    }
}
