use gdfe::element::gd::{
    condense, element_residual_tangent, ElementDofs, ElementHistory, BUBBLE, MULTIPLIER, N_EXT,
};
use gdfe::interpolation::{physical_gradients, ShapeTable};
use gdfe::material::{damage_function, neo_hooke, MaterialParams};
use gdfe::mesh::generate_structured_cube;
use gdfe::penalty::{penalty_history_update, PenaltyParams};
use gdfe::solver::LoadProgram;
use gdfe::verify::count_test;
use nalgebra::{Matrix3, Rotation3, Vector3};
use proptest::prelude::*;

fn deformation() -> impl Strategy<Value = Matrix3<f64>> {
    prop::array::uniform9(-0.25..0.25f64)
        .prop_map(|a| Matrix3::identity() + Matrix3::from_row_slice(&a))
        .prop_filter("positive determinant", |f| f.determinant() > 0.3)
}

fn material() -> impl Strategy<Value = MaterialParams> {
    (
        100.0..5000.0f64,
        0.0..0.45f64,
        0.0..2.0f64,
        0.0..2.0f64,
        0.0..100.0f64,
    )
        .prop_map(|(e, nu, d0, d1, c)| MaterialParams::new(e, nu, d0, d1, c).unwrap())
}

fn rotation() -> impl Strategy<Value = Rotation3<f64>> {
    (
        prop::array::uniform3(-1.0..1.0f64),
        0.0..std::f64::consts::TAU,
    )
        .prop_filter("axis", |(a, _)| Vector3::from(*a).norm() > 0.1)
        .prop_map(|(a, angle)| {
            Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(a)), angle)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn energy_is_objective(f in deformation(), q in rotation(), m in material()) {
        let a = neo_hooke(&f, &m).unwrap();
        let b = neo_hooke(&(q.matrix() * f), &m).unwrap();
        prop_assert!((a.psi0 - b.psi0).abs() <= 1e-9 * (1.0 + a.psi0.abs()));
        let rotated = q.matrix() * a.p0;
        prop_assert!((rotated - b.p0).amax() <= 1e-9 * (1.0 + a.p0.amax()));
    }

    #[test]
    fn kirchhoff_stress_is_symmetric(f in deformation(), m in material()) {
        let tau = neo_hooke(&f, &m).unwrap().p0 * f.transpose();
        prop_assert!((tau - tau.transpose()).amax() <= 1e-9 * (1.0 + tau.amax()));
    }

    #[test]
    fn energy_is_nonnegative(f in deformation(), m in material()) {
        prop_assert!(neo_hooke(&f, &m).unwrap().psi0 >= -1e-9);
    }

    #[test]
    fn damage_function_is_bounded_and_increasing(a in 0.0..50.0f64, da in 1e-6..5.0f64) {
        let [d, dd, _] = damage_function(a).unwrap();
        prop_assert!((0.0..=1.0).contains(&d) && dd > 0.0);
        prop_assert!(damage_function(a + da).unwrap()[0] >= d);
    }

    #[test]
    fn penalty_history_never_decreases(alpha in -1.0..5.0f64, prev in 0.0..3.0f64, m in material(), p in 1.0..1e4f64) {
        let params = PenaltyParams::new(m, p).unwrap();
        let next = penalty_history_update(alpha, prev, &params);
        prop_assert!(next >= prev);
        if next != prev {
            // the new value is the root of the linear yield function
            let yield_value = p * (alpha - next) - (m.d1 * next + m.d0);
            prop_assert!(yield_value.abs() <= 1e-9 * p * (1.0 + alpha.abs()));
        }
    }

    #[test]
    fn load_programs_stay_in_range(n in 1usize..400, u_max in 0.1..100.0f64) {
        let ramp = LoadProgram::MonotoneRamp { n_steps: n, u_max };
        let cyclic = LoadProgram::Cyclic { n_steps: n, u_max };
        prop_assert_eq!(ramp.value(0), 0.0);
        prop_assert!((ramp.value(n) - u_max).abs() <= 1e-12 * u_max);
        for s in 1..=n {
            prop_assert!(ramp.value(s) > ramp.value(s - 1));
            let v = cyclic.value(s);
            prop_assert!(v >= -1e-12 && v <= u_max * (1.0 + 1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn cube_count_follows_closed_form(n in 1usize..6) {
        let mesh = generate_structured_cube(n, 1.0).unwrap();
        let e = count_test(&mesh, n as u32);
        let (nv, nt) = (((n + 1) * (n + 1) * (n + 1)) as i64, (5 * n * n * n) as i64);
        prop_assert_eq!(e.count_without_bubble, nv - nt);
        prop_assert_eq!(e.count_with_bubble, nv);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn condensation_solves_the_internal_rows(
        u in prop::collection::vec(-0.03..0.03f64, 30),
        alpha_v in prop::array::uniform4(0.0..1.5f64),
        alpha_b in -0.2..0.4f64,
        lambda in -1.0..1.0f64,
        d_ext in prop::collection::vec(-0.01..0.01f64, N_EXT),
        active in any::<bool>(),
        m in material(),
    ) {
        let shapes = ShapeTable::four_point();
        let geo = physical_gradients(&shapes, &[[0.0, 0.0, 0.0], [1.2, 0.1, 0.0], [0.1, 0.9, 0.0], [0.2, 0.1, 1.1]]).unwrap();
        let dofs = ElementDofs { u: u.clone().try_into().unwrap(), alpha_v, alpha_b, lambda };
        let history = ElementHistory { constraint_active: active, ..ElementHistory::default() };
        let (r, k) = element_residual_tangent(&shapes, &geo, &dofs, &history, &m).unwrap();
        let ce = condense(&r, &k, active).unwrap();
        let (db, dl) = ce.recovery.internal_increment(&d_ext);
        let row = |i: usize| r[i] + (0..N_EXT).map(|j| k[(i, j)] * d_ext[j]).sum::<f64>() + k[(i, BUBBLE)] * db + k[(i, MULTIPLIER)] * dl;
        let scale = 1.0 + k.amax();
        prop_assert!(row(BUBBLE).abs() <= 1e-9 * scale);
        if active {
            prop_assert!(row(MULTIPLIER).abs() <= 1e-9 * scale);
        } else {
            prop_assert_eq!(dl, 0.0);
        }
        // external rows agree with the condensed system
        for i in 0..N_EXT {
            let condensed = ce.r_ext[i] + (0..N_EXT).map(|j| ce.k_ext[(i, j)] * d_ext[j]).sum::<f64>();
            prop_assert!((row(i) - condensed).abs() <= 1e-9 * scale);
        }
    }
}
