use proptest::prelude::*;
use separatrix_lab::charts_flows::*;
use separatrix_lab::nf_algebra::PolyQ;

fn close(a: PlanePoint, b: PlanePoint, tol: f64) -> bool {
    a.dist(&b) <= tol
}

fn quadratic_q() -> PolyQ {
    PolyQ::new(1.0, vec![1.0])
}

#[test]
fn xi1_direct_formula() {
    let c = xi1(PlanePoint::new(2.0, 3.0)).unwrap();
    assert_eq!(c.u, 2f64.ln());
    assert_eq!(c.v, 6.0);
}

#[test]
fn chart_transition_at_unit_point() {
    let c = xi2(xi1_inv(ChartPoint { u: 0.0, v: 1.0 })).unwrap();
    assert!((c.u - 0.0).abs() < 1e-15 && (c.v - 1.0).abs() < 1e-15);
}

#[test]
fn xi1_inverse_of_origin_chart_point() {
    assert_eq!(xi1_inv(ChartPoint { u: 0.0, v: 1.0 }), PlanePoint::new(1.0, 1.0));
}

#[test]
fn charts_reject_nonpositive_coordinates() {
    assert!(matches!(xi1(PlanePoint::new(0.0, 1.0)), Err(FlowError::ChartDomain { .. })));
    assert!(matches!(xi2(PlanePoint::new(1.0, -1.0)), Err(FlowError::ChartDomain { .. })));
}

#[test]
fn linear_flow_exponentials() {
    let p = local_flow(&PolyQ::linear(1.0), 2.0, PlanePoint::new(1.0, 1.0)).unwrap();
    assert!(close(p, PlanePoint::new((-2f64).exp(), 2f64.exp()), 1e-14));
}

#[test]
fn quadratic_flow_direct_formula() {
    let p = local_flow(&quadratic_q(), 1.0, PlanePoint::new(1.0, 0.1)).unwrap();
    assert!(close(p, PlanePoint::new((-1.2f64).exp(), 0.1 * 1.2f64.exp()), 1e-15));
}

#[test]
fn zero_time_flow_is_identity() {
    let p = PlanePoint::new(0.3, -0.7);
    assert_eq!(local_flow(&quadratic_q(), 0.0, p).unwrap(), p);
}

#[test]
fn flow_rejects_points_outside_validity() {
    let q = PolyQ::new(1.0, vec![-1.0]);
    let r = q.validity_radius;
    assert!(r.is_finite());
    assert!(matches!(
        local_flow(&q, 1.0, PlanePoint::new(1.0, 2.0 * r)),
        Err(FlowError::OutsideValidity { .. })
    ));
}

#[test]
fn transit_time_examples() {
    let lin = PolyQ::linear(1.0);
    assert!((transit_time(&lin, 10.0, 0.01).unwrap() - 14.605_170_185_988_09).abs() < 1e-12);
    assert_eq!(transit_time(&lin, 0.0, 1.0).unwrap(), 0.0);
    assert!((transit_time(&quadratic_q(), 5.0, 0.1).unwrap() - 8.302_585_092_994_046).abs() < 1e-12);
    assert!(matches!(transit_time(&lin, 1.0, 0.0), Err(FlowError::NonPositiveFiber(_))));
}

fn hyperbolic(_t: f64, x: f64, y: f64) -> (f64, (f64, f64)) {
    (x * y, (y, x))
}

fn oscillator(_t: f64, x: f64, y: f64) -> (f64, (f64, f64)) {
    (0.5 * (x * x + y * y), (x, y))
}

#[test]
fn integrator_matches_exact_flow() {
    let q = PolyQ::linear(1.0);
    for &(x, y) in &[(0.2, 0.1), (-0.3, 0.05), (0.01, -0.4)] {
        let p = PlanePoint::new(x, y);
        let num = integrate_time1(&hyperbolic, p, 1e-13, 10.0).unwrap();
        let exact = local_flow(&q, 1.0, p).unwrap();
        assert!(close(num, exact, 1e-10), "{num:?} vs {exact:?}");
    }
}

#[test]
fn integrator_rotates_oscillator() {
    let p = integrate_time1(&oscillator, PlanePoint::new(1.0, 0.0), 1e-13, 10.0).unwrap();
    assert!(close(p, PlanePoint::new(1f64.cos(), 1f64.sin()), 1e-11));
}

#[test]
fn integrator_conserves_energy_and_area() {
    // A non-integrable-looking autonomous Hamiltonian.
    let h = |_t: f64, x: f64, y: f64| {
        let v = x * y + x.powi(4) + y.powi(4);
        (v, (y + 4.0 * x.powi(3), x + 4.0 * y.powi(3)))
    };
    let tol = 1e-12;
    for &(x, y) in &[(0.3, -0.2), (-0.5, 0.1), (0.05, 0.4)] {
        let p = PlanePoint::new(x, y);
        let out = integrate_time1(&h, p, tol, 10.0).unwrap();
        assert!((h(0.0, out.x, out.y).0 - h(0.0, x, y).0).abs() <= 100.0 * tol);
        let det = jacobian_det(|z| integrate_time1(&h, z, tol, 10.0), p).unwrap();
        assert!((det - 1.0).abs() < DET_TOL);
    }
}

#[test]
fn integrator_reports_escape() {
    let expanding = |_t: f64, x: f64, y: f64| (x * y, (y, x));
    assert!(integrate_time1(&expanding, PlanePoint::new(1e-3, 5.0), 1e-12, 6.0).is_err());
}

#[test]
fn extension_of_identity_is_identity() {
    let ext = SymplecticExtension::new(|p: PlanePoint| p, 0.5);
    for &(x, y) in &[(0.0, 0.0), (0.1, -0.05), (0.3, 0.2), (1.0, 1.0)] {
        let p = PlanePoint::new(x, y);
        assert!(close(ext.apply(p).unwrap(), p, 1e-15));
    }
}

#[test]
fn extension_of_shear() {
    let eps = 0.01;
    let shear = move |p: PlanePoint| PlanePoint::new(p.x, p.y + eps * p.x);
    let ext = SymplecticExtension::new(shear, 0.5);
    assert!(close(ext.apply(PlanePoint::ORIGIN).unwrap(), PlanePoint::ORIGIN, 1e-15));
    // Equal to the germ well inside, the identity far outside.
    let inner = PlanePoint::new(0.05, -0.04);
    assert!(close(ext.apply(inner).unwrap(), shear(inner), 1e-12));
    let outer = PlanePoint::new(0.9, 0.3);
    assert_eq!(ext.apply(outer).unwrap(), outer);
    for i in 0..12 {
        for j in 0..12 {
            let p = PlanePoint::new(-0.6 + 0.1 * i as f64, -0.6 + 0.1 * j as f64);
            let det = jacobian_det(|z| ext.apply(z), p).unwrap();
            assert!((det - 1.0).abs() < 1e-6, "det {det} at {p:?}");
        }
    }
}

#[test]
fn fourth_order_jacobian_of_linear_map_is_exact() {
    let m = |p: PlanePoint| -> Result<PlanePoint, ()> { Ok(PlanePoint::new(2.0 * p.x + p.y, 3.0 * p.y)) };
    let j = jacobian_fd(m, PlanePoint::new(0.4, -1.0), FD_STEP).unwrap();
    assert!((j[0][0] - 2.0).abs() < 1e-9 && (j[0][1] - 1.0).abs() < 1e-9);
    assert!(j[1][0].abs() < 1e-9 && (j[1][1] - 3.0).abs() < 1e-9);
}

proptest! {
    #[test]
    fn chart_round_trips(x in 1e-3f64..10.0, y in 1e-3f64..10.0) {
        let p = PlanePoint::new(x, y);
        let a = xi1_inv(xi1(p).unwrap());
        let b = xi2_inv(xi2(p).unwrap());
        prop_assert!((a.x - x).abs() <= 1e-14 * x.max(1.0) && (a.y - y).abs() <= 1e-14 * y.max(1.0));
        prop_assert!((b.x - x).abs() <= 1e-14 * x.max(1.0) && (b.y - y).abs() <= 1e-14 * y.max(1.0));
    }

    #[test]
    fn charts_are_symplectic(x in 0.1f64..3.0, y in 0.1f64..3.0) {
        let p = PlanePoint::new(x, y);
        let as_plane = |c: ChartPoint| PlanePoint::new(c.u, c.v);
        let d1 = jacobian_det(|z| xi1(z).map(as_plane), p).unwrap();
        let d2 = jacobian_det(|z| xi2(z).map(as_plane), p).unwrap();
        prop_assert!((d1 - 1.0).abs() < 1e-6);
        prop_assert!((d2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flow_conserves_product(x in -1.0f64..1.0, y in -1.0f64..1.0, t in -3.0f64..3.0) {
        let p = PlanePoint::new(x, y);
        let out = local_flow(&PolyQ::linear(1.3), t, p).unwrap();
        prop_assert!((out.x * out.y - x * y).abs() < 1e-12);
    }

    #[test]
    fn flow_semigroup(x in -0.4f64..0.4, y in -0.4f64..0.4, t in -2.0f64..2.0, s in -2.0f64..2.0) {
        let q = quadratic_q();
        let p = PlanePoint::new(x, y);
        let a = local_flow(&q, t + s, p).unwrap();
        let b = local_flow(&q, t, local_flow(&q, s, p).unwrap()).unwrap();
        prop_assert!(a.dist(&b) < 1e-12 * (1.0 + a.norm()));
    }

    #[test]
    fn transit_time_is_chart_translation(u in -3.0f64..0.0, v in 1e-6f64..0.2, t in 0.0f64..4.0) {
        let q = quadratic_q();
        let p = local_flow(&q, t, xi1_inv(ChartPoint { u, v })).unwrap();
        let c = xi2(p).unwrap();
        let tau = transit_time(&q, -t, v).unwrap();
        prop_assert!((c.u - (u + tau)).abs() < 1e-12 * (1.0 + tau.abs()));
        prop_assert!((c.v - v).abs() < 1e-12);
    }
}
