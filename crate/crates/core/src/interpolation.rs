//! Shape functions on the reference tet and the four-point Gauss rule.
//!
//! Points are given in barycentric (volume) coordinates `(l0, l1, l2, l3)`.
//! The reference tet has vertices `(0,0,0), (1,0,0), (0,1,0), (0,0,1)`, so
//! `l0 = 1 - x - y - z`, `l1 = x`, `l2 = y`, `l3 = z`. Reference gradients are
//! taken with respect to `(x, y, z)`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::mesh::LOCAL_EDGES;

#[derive(Debug, Error)]
pub enum InterpolationError {
    #[error("element has non-positive Jacobian determinant {0:e}")]
    InvertedElement(f64),
}

/// Barycentric coordinates on the reference tet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefPoint(pub [f64; 4]);

impl RefPoint {
    pub fn new(l: [f64; 4]) -> Self {
        debug_assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        Self(l)
    }

    pub fn centroid() -> Self {
        Self([0.25; 4])
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Self {
        Self([1.0 - x - y - z, x, y, z])
    }
}

/// d l_k / d(x, y, z) on the reference tet.
const BARY_GRAD: [[f64; 3]; 4] = [
    [-1.0, -1.0, -1.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
];

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<RefPoint>,
    /// Fractions of the element volume; they sum to one.
    pub weights: Vec<f64>,
}

/// The symmetric degree-2 rule: the four permutations of `(a, b, b, b)` with
/// equal weights.
///
/// Equal weights make degree 1 exact for any `a + 3b = 1`. Degree 2 needs
/// `mean(l0^2) = 1/10`, i.e. `(a^2 + 3b^2)/4 = 1/10`; with `b = (1 - a)/3`
/// this is `12a^2 - 6a - 1 = 0`, whose root in `(1/4, 1)` is
/// `a = (5 + 3 sqrt 5)/20`.
pub fn four_point_rule() -> QuadratureRule {
    let s5 = 5f64.sqrt();
    let a = (5.0 + 3.0 * s5) / 20.0;
    let b = (5.0 - s5) / 20.0;
    let points = (0..4)
        .map(|k| {
            let mut l = [b; 4];
            l[k] = a;
            RefPoint(l)
        })
        .collect();
    QuadratureRule {
        points,
        weights: vec![0.25; 4],
    }
}

impl QuadratureRule {
    /// Integral over the reference tet divided by its volume.
    pub fn mean<F: Fn(&RefPoint) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }
}

/// Quartic volume bubble `256 l0 l1 l2 l3` and its reference gradient.
pub fn eval_bubble(p: &RefPoint) -> (f64, [f64; 3]) {
    let l = p.0;
    let value = 256.0 * l[0] * l[1] * l[2] * l[3];
    let dl = [
        256.0 * l[1] * l[2] * l[3],
        256.0 * l[0] * l[2] * l[3],
        256.0 * l[0] * l[1] * l[3],
        256.0 * l[0] * l[1] * l[2],
    ];
    (value, bary_to_ref(&dl))
}

/// Gradient of the bubble with respect to the four barycentric coordinates.
pub fn bubble_bary_gradient(p: &RefPoint) -> [f64; 4] {
    let l = p.0;
    [
        256.0 * l[1] * l[2] * l[3],
        256.0 * l[0] * l[2] * l[3],
        256.0 * l[0] * l[1] * l[3],
        256.0 * l[0] * l[1] * l[2],
    ]
}

fn bary_to_ref(dl: &[f64; 4]) -> [f64; 3] {
    let mut g = [0.0; 3];
    for k in 0..4 {
        for i in 0..3 {
            g[i] += dl[k] * BARY_GRAD[k][i];
        }
    }
    g
}

/// Linear vertex functions (the barycentric coordinates themselves).
pub fn eval_p1(p: &RefPoint) -> ([f64; 4], [[f64; 3]; 4]) {
    (p.0, BARY_GRAD)
}

/// Ten-node quadratic Lagrange basis: vertex functions `l(2l - 1)`, then the
/// edge functions `4 l_a l_b` in [`LOCAL_EDGES`] order.
pub fn eval_p2(p: &RefPoint) -> ([f64; 10], [[f64; 3]; 10]) {
    let l = p.0;
    let mut n = [0.0; 10];
    let mut g = [[0.0; 3]; 10];
    for k in 0..4 {
        n[k] = l[k] * (2.0 * l[k] - 1.0);
        let d = 4.0 * l[k] - 1.0;
        g[k] = BARY_GRAD[k].map(|x| d * x);
    }
    for (e, [a, b]) in LOCAL_EDGES.iter().enumerate() {
        n[4 + e] = 4.0 * l[*a] * l[*b];
        for i in 0..3 {
            g[4 + e][i] = 4.0 * (l[*b] * BARY_GRAD[*a][i] + l[*a] * BARY_GRAD[*b][i]);
        }
    }
    (n, g)
}

/// Barycentric coordinates of the ten P2 nodes.
pub fn p2_node_points() -> [RefPoint; 10] {
    let mut pts = [RefPoint([0.0; 4]); 10];
    for k in 0..4 {
        pts[k].0[k] = 1.0;
    }
    for (e, [a, b]) in LOCAL_EDGES.iter().enumerate() {
        pts[4 + e].0[*a] = 0.5;
        pts[4 + e].0[*b] = 0.5;
    }
    pts
}

/// Tabulated values at one quadrature point.
#[derive(Debug, Clone)]
pub struct PointShapes {
    pub p2: [f64; 10],
    pub p2_grad: [[f64; 3]; 10],
    pub p1: [f64; 4],
    pub p1_grad: [[f64; 3]; 4],
    pub bubble: f64,
    pub bubble_grad: [f64; 3],
    /// The P0 function; always one.
    pub p0: f64,
}

/// Shape values and reference gradients of every family at every point of a
/// rule. Built once and shared read-only.
#[derive(Debug, Clone)]
pub struct ShapeTable {
    pub rule: QuadratureRule,
    pub points: Vec<PointShapes>,
}

impl ShapeTable {
    pub fn new(rule: QuadratureRule) -> Self {
        let points = rule
            .points
            .iter()
            .map(|p| {
                let (p2, p2_grad) = eval_p2(p);
                let (p1, p1_grad) = eval_p1(p);
                let (bubble, bubble_grad) = eval_bubble(p);
                PointShapes {
                    p2,
                    p2_grad,
                    p1,
                    p1_grad,
                    bubble,
                    bubble_grad,
                    p0: 1.0,
                }
            })
            .collect();
        Self { rule, points }
    }

    pub fn four_point() -> Self {
        Self::new(four_point_rule())
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }
}

/// Physical (material-coordinate) gradients at one quadrature point.
#[derive(Debug, Clone)]
pub struct PhysicalPoint {
    /// Integration weight: rule weight times element volume.
    pub weight: f64,
    pub p2_grad: [Vector3<f64>; 10],
    pub p1_grad: [Vector3<f64>; 4],
    pub bubble_grad: Vector3<f64>,
}

/// Per-element mapping data for an affine tet.
#[derive(Debug, Clone)]
pub struct ElementGeometry {
    pub det_j: f64,
    pub volume: f64,
    pub points: Vec<PhysicalPoint>,
}

/// Maps reference gradients to the tet with the given vertex coordinates.
/// `det_j` equals six times the tet volume.
pub fn physical_gradients(
    shape: &ShapeTable,
    coords: &[[f64; 3]; 4],
) -> Result<ElementGeometry, InterpolationError> {
    let col = |k: usize| {
        Vector3::new(
            coords[k][0] - coords[0][0],
            coords[k][1] - coords[0][1],
            coords[k][2] - coords[0][2],
        )
    };
    let jac = Matrix3::from_columns(&[col(1), col(2), col(3)]);
    let det_j = jac.determinant();
    if !(det_j > 0.0) {
        return Err(InterpolationError::InvertedElement(det_j));
    }
    let inv_t = jac
        .try_inverse()
        .ok_or(InterpolationError::InvertedElement(det_j))?
        .transpose();
    let map = |g: &[f64; 3]| inv_t * Vector3::new(g[0], g[1], g[2]);
    let volume = det_j / 6.0;
    let points = shape
        .points
        .iter()
        .zip(&shape.rule.weights)
        .map(|(s, w)| PhysicalPoint {
            weight: w * volume,
            p2_grad: std::array::from_fn(|a| map(&s.p2_grad[a])),
            p1_grad: std::array::from_fn(|a| map(&s.p1_grad[a])),
            bubble_grad: map(&s.bubble_grad),
        })
        .collect();
    Ok(ElementGeometry {
        det_j,
        volume,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Mean of l0^a l1^b l2^c l3^d over the tet: a! b! c! d! 3! / (a+b+c+d+3)!.
    fn monomial_mean(e: [u32; 4]) -> f64 {
        e.iter().map(|&k| factorial(k)).product::<f64>() * 6.0
            / factorial(e.iter().sum::<u32>() + 3)
    }

    #[test]
    fn rule_is_exact_to_degree_two() {
        let rule = four_point_rule();
        assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let mut checked = 0;
        for a in 0..=2u32 {
            for b in 0..=2 - a {
                for c in 0..=2 - a - b {
                    for d in 0..=2 - a - b - c {
                        let e = [a, b, c, d];
                        let q = rule.mean(|p| (0..4).map(|k| p.0[k].powi(e[k] as i32)).product());
                        assert!((q - monomial_mean(e)).abs() < 1e-12, "{e:?}");
                        checked += 1;
                    }
                }
            }
        }
        assert_eq!(checked, 15);
        assert!((rule.mean(|p| p.0[0]) - 0.25).abs() < 1e-15);
        assert!((rule.mean(|p| p.0[0] * p.0[1]) - 1.0 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn rule_is_not_exact_for_cubics() {
        let rule = four_point_rule();
        let q = rule.mean(|p| p.0[0].powi(3));
        assert!((q - monomial_mean([3, 0, 0, 0])).abs() > 1e-6);
    }

    #[test]
    fn bubble_values() {
        assert!((eval_bubble(&RefPoint::centroid()).0 - 1.0).abs() < 1e-15);
        assert_eq!(eval_bubble(&RefPoint([1.0, 0.0, 0.0, 0.0])).0, 0.0);
        assert_eq!(eval_bubble(&RefPoint([0.5, 0.5, 0.0, 0.0])).0, 0.0);
        // stationary at the centre
        let g = eval_bubble(&RefPoint::centroid()).1;
        assert!(g.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn bubble_vanishes_on_faces() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..100 {
            let mut l = [
                rng.random::<f64>(),
                rng.random(),
                rng.random(),
                rng.random(),
            ];
            l[i % 4] = 0.0;
            let s: f64 = l.iter().sum();
            let p = RefPoint(l.map(|x| x / s));
            assert_eq!(eval_bubble(&p).0, 0.0);
        }
    }

    #[test]
    fn bubble_gradient_matches_differences() {
        let p = RefPoint::from_xyz(0.2, 0.3, 0.1);
        let (_, g) = eval_bubble(&p);
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = [0.2, 0.3, 0.1];
            let mut xm = xp;
            xp[i] += h;
            xm[i] -= h;
            let fp = eval_bubble(&RefPoint::from_xyz(xp[0], xp[1], xp[2])).0;
            let fm = eval_bubble(&RefPoint::from_xyz(xm[0], xm[1], xm[2])).0;
            assert!((g[i] - (fp - fm) / (2.0 * h)).abs() < 1e-8);
        }
        let gb = bubble_bary_gradient(&RefPoint::centroid());
        assert!(gb.iter().all(|x| (x - 4.0).abs() < 1e-14));
    }

    #[test]
    fn p2_kronecker_and_partition() {
        let nodes = p2_node_points();
        for (j, p) in nodes.iter().enumerate() {
            let (n, _) = eval_p2(p);
            for (i, v) in n.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-15, "N{i} at node {j} = {v}");
            }
        }
        let table = ShapeTable::four_point();
        for s in &table.points {
            assert!((s.p2.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!((s.p1.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for i in 0..3 {
                assert!(s.p2_grad.iter().map(|g| g[i]).sum::<f64>().abs() < 1e-13);
                assert!(s.p1_grad.iter().map(|g| g[i]).sum::<f64>().abs() < 1e-15);
            }
        }
    }

    #[test]
    fn p2_gradients_match_differences() {
        let h = 1e-6;
        let x0 = [0.15, 0.25, 0.35];
        let (_, g) = eval_p2(&RefPoint::from_xyz(x0[0], x0[1], x0[2]));
        for i in 0..3 {
            let mut xp = x0;
            let mut xm = x0;
            xp[i] += h;
            xm[i] -= h;
            let (np, _) = eval_p2(&RefPoint::from_xyz(xp[0], xp[1], xp[2]));
            let (nm, _) = eval_p2(&RefPoint::from_xyz(xm[0], xm[1], xm[2]));
            for a in 0..10 {
                assert!((g[a][i] - (np[a] - nm[a]) / (2.0 * h)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn identity_map_keeps_gradients() {
        let table = ShapeTable::four_point();
        let coords = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let geo = physical_gradients(&table, &coords).unwrap();
        assert!((geo.det_j - 1.0).abs() < 1e-15);
        for (pp, s) in geo.points.iter().zip(&table.points) {
            for a in 0..10 {
                for i in 0..3 {
                    assert!((pp.p2_grad[a][i] - s.p2_grad[a][i]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn scaled_tet() {
        let table = ShapeTable::four_point();
        let coords = [
            [0.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [0.0, 2.0, 0.0],
            [0.0, 0.0, 2.0],
        ];
        let geo = physical_gradients(&table, &coords).unwrap();
        assert!((geo.det_j - 8.0).abs() < 1e-14);
        for (pp, s) in geo.points.iter().zip(&table.points) {
            for a in 0..4 {
                for i in 0..3 {
                    assert!((pp.p1_grad[a][i] - 0.5 * s.p1_grad[a][i]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn inverted_tet_rejected() {
        let table = ShapeTable::four_point();
        let coords = [
            [0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        assert!(physical_gradients(&table, &coords).is_err());
    }

    /// Divergence theorem: the integral of grad l_k is `sum_f A_f n_f
    /// mean_f(l_k)`, where l_k has mean 1/3 on the three faces touching
    /// vertex k and vanishes on the opposite one.
    #[test]
    fn p1_gradient_integral_matches_face_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let table = ShapeTable::four_point();
        for _ in 0..20 {
            let mut coords = [[0.0; 3]; 4];
            for p in coords.iter_mut() {
                *p = [rng.random::<f64>(), rng.random(), rng.random()];
            }
            if crate::mesh::signed_volume6(coords) < 0.0 {
                coords.swap(2, 3);
            }
            if crate::mesh::signed_volume6(coords).abs() < 1e-3 {
                continue;
            }
            let mesh = crate::mesh::Mesh::new(coords.to_vec(), vec![[0, 1, 2, 3]]).unwrap();
            let geo = physical_gradients(&table, &coords).unwrap();
            for k in 0..4 {
                let integral: Vector3<f64> =
                    geo.points.iter().map(|p| p.p1_grad[k] * p.weight).sum();
                let mut oracle = Vector3::zeros();
                for f in mesh.boundary_facets() {
                    if f.local_face != k {
                        let n = mesh.facet_area_vector(f);
                        oracle += Vector3::new(n[0], n[1], n[2]) / 3.0;
                    }
                }
                assert!((integral - oracle).norm() < 1e-12 * (1.0 + oracle.norm()));
            }
        }
    }
}
