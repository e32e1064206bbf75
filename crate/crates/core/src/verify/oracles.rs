use std::fmt::Write;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::element::gd::{
    element_lagrangian, element_residual_tangent, ElementDofs, ElementHistory, N_FULL,
};
use crate::element::N_U;
use crate::interpolation::{physical_gradients, ElementGeometry, ShapeTable};
use crate::material::{neo_hooke, ElasticResponse, MaterialError, MaterialParams};
use crate::penalty::{penalty_element, penalty_energy, PenaltyHistory, PenaltyParams, N_PEN};

/// Undamaged constitutive law under test.
pub type StressModel = fn(&Matrix3<f64>, &MaterialParams) -> Result<ElasticResponse, MaterialError>;

const STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub samples: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(OracleCheck::passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed())
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn check(&self, name: &str) -> Option<&OracleCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("finite-difference oracles, seed {}\n", self.seed);
        for c in &self.checks {
            let verdict = if c.passed() { "pass" } else { "FAIL" };
            writeln!(
                out,
                "{verdict}  {:<28} max rel err {:.3e} (tol {:.0e}, {} samples)",
                c.name, c.max_rel_error, c.tolerance, c.samples
            )
            .unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,samples,max_rel_error,tolerance,passed\n");
        for c in &self.checks {
            writeln!(
                out,
                "{},{},{:e},{:e},{}",
                c.name,
                c.samples,
                c.max_rel_error,
                c.tolerance,
                c.passed()
            )
            .unwrap();
        }
        out
    }
}

/// Seeded finite-difference checks. `stress` replaces the Neo-Hooke law in
/// the pointwise checks, which lets a deliberately broken law be fed in.
#[derive(Debug, Clone, Copy)]
pub struct OracleSuite {
    pub samples: usize,
    pub stress: StressModel,
}

impl Default for OracleSuite {
    fn default() -> Self {
        Self {
            samples: 1000,
            stress: neo_hooke,
        }
    }
}

/// All checks with 1000 samples each.
pub fn fd_oracle_suite(seed: u64) -> OracleReport {
    OracleSuite::default().run(seed)
}

fn sample_rng(seed: u64, check: u64, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(check << 32 | sample as u64);
    rng
}

fn random_f(rng: &mut impl Rng) -> Matrix3<f64> {
    loop {
        let f = Matrix3::identity() + Matrix3::from_fn(|_, _| rng.random_range(-0.3..0.3));
        if f.determinant() > 0.2 {
            return f;
        }
    }
}

fn random_geometry(rng: &mut impl Rng, shapes: &ShapeTable) -> ElementGeometry {
    loop {
        let mut coords = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let scale = rng.random_range(0.5..2.0);
        for p in coords.iter_mut() {
            for x in p.iter_mut() {
                *x = scale * (*x + rng.random_range(-0.2..0.2));
            }
        }
        if let Ok(geo) = physical_gradients(shapes, &coords) {
            if geo.det_j > 0.3 * scale.powi(3) {
                return geo;
            }
        }
    }
}

fn random_params(rng: &mut impl Rng) -> MaterialParams {
    MaterialParams::new(
        rng.random_range(100.0..2000.0),
        rng.random_range(0.0..0.45),
        rng.random_range(0.0..2.0),
        rng.random_range(0.1..2.0),
        rng.random_range(0.0..50.0),
    )
    .expect("sampled inside the valid ranges")
}

fn max_abs(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |m, x| m.max(x.abs()))
}

fn rel(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

impl OracleSuite {
    pub fn run(&self, seed: u64) -> OracleReport {
        let checks = vec![
            self.check("P vs FD(psi0)", 1e-6, seed, 0, |rng| self.stress_error(rng)),
            self.check("A vs FD(P)", 1e-5, seed, 1, |rng| self.tangent_error(rng)),
            self.check("element R vs FD(L)", 1e-6, seed, 2, element_residual_error),
            self.check("element K vs FD(R)", 1e-5, seed, 3, element_tangent_error),
            self.check("penalty R vs FD(energy)", 1e-6, seed, 4, |rng| {
                penalty_errors(rng).0
            }),
            self.check("penalty K vs FD(R)", 1e-5, seed, 5, |rng| {
                penalty_errors(rng).1
            }),
        ];
        OracleReport { seed, checks }
    }

    fn check<E>(&self, name: &str, tolerance: f64, seed: u64, id: u64, error: E) -> OracleCheck
    where
        E: Fn(&mut ChaCha8Rng) -> f64 + Sync,
    {
        let max_rel_error = (0..self.samples)
            .into_par_iter()
            .map(|i| error(&mut sample_rng(seed, id, i)))
            // NaN must fail the check
            .map(|e| if e.is_nan() { f64::INFINITY } else { e })
            .reduce(|| 0.0, f64::max);
        OracleCheck {
            name: name.into(),
            samples: self.samples,
            max_rel_error,
            tolerance,
        }
    }

    fn stress_error(&self, rng: &mut ChaCha8Rng) -> f64 {
        let params = random_params(rng);
        let f = random_f(rng);
        let Ok(resp) = (self.stress)(&f, &params) else {
            return f64::INFINITY;
        };
        let mut diff: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let (mut fp, mut fm) = (f, f);
                fp[(i, j)] += STEP;
                fm[(i, j)] -= STEP;
                let (Ok(p), Ok(m)) = ((self.stress)(&fp, &params), (self.stress)(&fm, &params))
                else {
                    return f64::INFINITY;
                };
                let fd = (p.psi0 - m.psi0) / (2.0 * STEP);
                diff = diff.max((fd - resp.p0[(i, j)]).abs());
            }
        }
        rel(diff, resp.p0.amax())
    }

    fn tangent_error(&self, rng: &mut ChaCha8Rng) -> f64 {
        let params = random_params(rng);
        let f = random_f(rng);
        let Ok(resp) = (self.stress)(&f, &params) else {
            return f64::INFINITY;
        };
        let mut diff: f64 = 0.0;
        for k in 0..3 {
            for l in 0..3 {
                let (mut fp, mut fm) = (f, f);
                fp[(k, l)] += STEP;
                fm[(k, l)] -= STEP;
                let (Ok(p), Ok(m)) = ((self.stress)(&fp, &params), (self.stress)(&fm, &params))
                else {
                    return f64::INFINITY;
                };
                let col = (p.p0 - m.p0) / (2.0 * STEP);
                for i in 0..3 {
                    for j in 0..3 {
                        diff = diff.max((col[(i, j)] - resp.a0[(3 * i + j, 3 * k + l)]).abs());
                    }
                }
            }
        }
        rel(diff, resp.a0.amax())
    }
}

struct ElementSample {
    shapes: ShapeTable,
    geo: ElementGeometry,
    dofs: ElementDofs,
    history: ElementHistory,
    params: MaterialParams,
}

/// Draws until every Gauss point has `det F > 0`; inverted states lie
/// outside the element's domain.
fn element_sample(rng: &mut ChaCha8Rng) -> ElementSample {
    let shapes = ShapeTable::four_point();
    loop {
        let geo = random_geometry(rng, &shapes);
        let params = random_params(rng);
        let dofs = ElementDofs {
            u: std::array::from_fn(|_| rng.random_range(-0.04..0.04)),
            alpha_v: std::array::from_fn(|_| rng.random_range(0.0..2.0)),
            alpha_b: rng.random_range(-0.2..0.5),
            lambda: rng.random_range(-2.0..2.0),
        };
        let alpha_n: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let history = ElementHistory {
            alpha_bar: alpha_n,
            alpha_n,
            constraint_active: rng.random::<bool>(),
            lambda_frozen: 0.0,
        };
        if element_residual_tangent(&shapes, &geo, &dofs, &history, &params).is_ok() {
            return ElementSample {
                shapes,
                geo,
                dofs,
                history,
                params,
            };
        }
    }
}

fn element_residual_error(rng: &mut ChaCha8Rng) -> f64 {
    let s = element_sample(rng);
    let Ok((r, _)) = element_residual_tangent(&s.shapes, &s.geo, &s.dofs, &s.history, &s.params)
    else {
        return f64::INFINITY;
    };
    let x = s.dofs.to_vector();
    let mut diff: f64 = 0.0;
    for j in 0..N_FULL {
        let (mut xp, mut xm) = (x, x);
        xp[j] += STEP;
        xm[j] -= STEP;
        let lp = element_lagrangian(
            &s.shapes,
            &s.geo,
            &ElementDofs::from_vector(&xp),
            &s.history,
            &s.params,
        );
        let lm = element_lagrangian(
            &s.shapes,
            &s.geo,
            &ElementDofs::from_vector(&xm),
            &s.history,
            &s.params,
        );
        let (Ok(lp), Ok(lm)) = (lp, lm) else {
            return f64::INFINITY;
        };
        diff = diff.max(((lp - lm) / (2.0 * STEP) - r[j]).abs());
    }
    rel(diff, r.amax())
}

fn element_tangent_error(rng: &mut ChaCha8Rng) -> f64 {
    let s = element_sample(rng);
    let Ok((_, k)) = element_residual_tangent(&s.shapes, &s.geo, &s.dofs, &s.history, &s.params)
    else {
        return f64::INFINITY;
    };
    let x = s.dofs.to_vector();
    let mut diff: f64 = 0.0;
    for j in 0..N_FULL {
        let (mut xp, mut xm) = (x, x);
        xp[j] += STEP;
        xm[j] -= STEP;
        let rp = element_residual_tangent(
            &s.shapes,
            &s.geo,
            &ElementDofs::from_vector(&xp),
            &s.history,
            &s.params,
        );
        let rm = element_residual_tangent(
            &s.shapes,
            &s.geo,
            &ElementDofs::from_vector(&xm),
            &s.history,
            &s.params,
        );
        let (Ok((rp, _)), Ok((rm, _))) = (rp, rm) else {
            return f64::INFINITY;
        };
        diff = diff.max(max_abs(
            (0..N_FULL).map(|i| (rp[i] - rm[i]) / (2.0 * STEP) - k[(i, j)]),
        ));
    }
    rel(diff, k.amax())
}

/// Residual and tangent errors of the penalty element at one sample.
fn penalty_errors(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let shapes = ShapeTable::four_point();
    let (geo, params, dofs, history, r, k) = loop {
        let geo = random_geometry(rng, &shapes);
        let Ok(params) = PenaltyParams::new(random_params(rng), rng.random_range(1.0..1000.0))
        else {
            return (f64::INFINITY, f64::INFINITY);
        };
        let dofs: Vec<f64> = (0..N_PEN)
            .map(|i| {
                if i < N_U {
                    rng.random_range(-0.04..0.04)
                } else {
                    rng.random_range(0.0..2.0)
                }
            })
            .collect();
        let alpha_bar: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..2.0));
        let history = PenaltyHistory {
            alpha_bar,
            alpha_bar_n: alpha_bar,
        };
        if let Ok((r, k)) = penalty_element(&shapes, &geo, &dofs, &history, &params) {
            break (geo, params, dofs, history, r, k);
        }
    };
    let (mut dr, mut dk): (f64, f64) = (0.0, 0.0);
    for j in 0..N_PEN {
        let (mut xp, mut xm) = (dofs.clone(), dofs.clone());
        xp[j] += STEP;
        xm[j] -= STEP;
        let ep = penalty_energy(&shapes, &geo, &xp, &history, &params);
        let em = penalty_energy(&shapes, &geo, &xm, &history, &params);
        let rp = penalty_element(&shapes, &geo, &xp, &history, &params);
        let rm = penalty_element(&shapes, &geo, &xm, &history, &params);
        let (Ok(ep), Ok(em), Ok((rp, _)), Ok((rm, _))) = (ep, em, rp, rm) else {
            return (f64::INFINITY, f64::INFINITY);
        };
        dr = dr.max(((ep - em) / (2.0 * STEP) - r[j]).abs());
        dk = dk.max(max_abs(
            (0..N_PEN).map(|i| (rp[i] - rm[i]) / (2.0 * STEP) - k[(i, j)]),
        ));
    }
    (rel(dr, r.amax()), rel(dk, k.amax()))
}
