use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use separatrix_lab::charts_flows::{jacobian_det, jacobian_fd, local_flow, PlanePoint};
use separatrix_lab::curves::hausdorff;
use separatrix_lab::model::*;
use separatrix_lab::return_renorm::{DEFAULT_C, DEFAULT_X_STAR};

fn model() -> &'static ModelFamily {
    static M: OnceLock<ModelFamily> = OnceLock::new();
    M.get_or_init(|| build_model(1.0, DEFAULT_R0, GlueSpec::default()).unwrap())
}

fn sigma() -> &'static Polyline {
    static S: OnceLock<Polyline> = OnceLock::new();
    S.get_or_init(|| trace_separatrix(model(), 0.01).unwrap())
}

fn bump(m: f64) -> BumpParams {
    build_bump(1.0 / 12.0, m, Chi::default()).unwrap()
}

#[test]
fn lobe_in_first_quadrant_and_bounded() {
    let s = sigma();
    assert!(s.iter().all(|p| p.x >= 0.0 && p.y >= 0.0));
    assert!(s.iter().all(|p| p.x.max(p.y) < 1.0));
    assert!(s.iter().any(|p| p.x > 0.1 && p.y > 0.1));
}

#[test]
fn saddle_at_origin() {
    let m = model();
    let (h, hx, hy) = m.h0_full(0.0, 0.0);
    assert_eq!((h, hx, hy), (0.0, 0.0, 0.0));
    let j = jacobian_fd(|p| m.f_eps(p), PlanePoint::ORIGIN, 1e-5).unwrap();
    assert!((j[0][0] - (-1f64).exp()).abs() < 1e-9);
    assert!((j[1][1] - 1f64.exp()).abs() < 1e-9);
    assert!(j[0][1].abs() < 1e-9 && j[1][0].abs() < 1e-9);
}

#[test]
fn traced_points_are_on_zero_level() {
    let m = model();
    for p in sigma() {
        assert!(m.h0(*p).abs() < 1e-10, "H0 = {} at {p:?}", m.h0(*p));
    }
}

#[test]
fn trace_is_closed_with_positive_area() {
    let s = sigma();
    assert_eq!(s.first(), Some(&PlanePoint::ORIGIN));
    assert_eq!(s.last(), Some(&PlanePoint::ORIGIN));
    assert!(polygon_area(s).abs() > 1e-3);
    assert!(s.windows(2).all(|w| w[0].dist(&w[1]) <= 0.01 + 1e-12));
}

#[test]
fn trace_self_converges() {
    let m = model();
    let coarse = trace_separatrix(m, 0.02).unwrap();
    let fine = trace_separatrix(m, 0.01).unwrap();
    assert!(hausdorff(&coarse, &fine) < 0.02);
}

#[test]
fn separatrix_is_invariant() {
    let m = model();
    let s = sigma();
    let image: Vec<PlanePoint> = s.iter().map(|p| m.f_eps(*p).unwrap()).collect();
    // The image is a reparameterization, so compare points against the curve.
    for p in &image {
        assert!(m.distance_to_sigma(*p) < 1e-6);
    }
    assert!(hausdorff(&image, s) < 0.02);
}

#[test]
fn stable_axis_contracts() {
    let m = model();
    let z = m.f_eps(PlanePoint::new(DEFAULT_R0 / 2.0, 0.0)).unwrap();
    assert_eq!(z.y, 0.0);
    assert!((z.x - (-1f64).exp() * DEFAULT_R0 / 2.0).abs() < 1e-17);
}

#[test]
fn normal_form_region_is_exact() {
    let m = model().with_epsilon(1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let r = DEFAULT_R0 * rng.gen::<f64>().sqrt();
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        let z = PlanePoint::new(r * th.cos(), r * th.sin());
        let a = m.f_eps(z).unwrap();
        let b = local_flow(&m.q, 1.0, z).unwrap();
        assert_eq!(a, b);
        assert!((a.x * a.y - z.x * z.y).abs() <= 1e-14 * (z.x * z.y).abs().max(1e-300) + 1e-18);
    }
}

#[test]
fn rejects_bad_parameters() {
    assert!(matches!(build_model(-1.0, 0.1, GlueSpec::default()), Err(ModelError::Invalid(_))));
    let glue = GlueSpec { r_exact: 0.6, r_outer: 0.3, ..GlueSpec::default() };
    assert!(matches!(build_model(1.0, 0.1, glue), Err(ModelError::Invalid(_))));
    // One step from D(o, r0) must stay in the exact region.
    assert!(matches!(build_model(1.0, 0.2, GlueSpec::default()), Err(ModelError::Invalid(_))));
}

#[test]
fn model_spec_rejects_unknown_fields() {
    let err = toml::from_str::<ModelSpec>("lambda = 1.0\nr0 = 0.1\nradius = 3\n").unwrap_err();
    assert!(err.to_string().contains("radius"));
}

#[test]
fn bump_normalization() {
    let bp = bump(6.0);
    assert_eq!(bp.s(0.0), 0.0);
    assert_eq!(bp.s(1.0), 1.0);
    assert!((bp.total_mass() - 1.0).abs() < 1e-12);
    assert!((bp.s_increment(0.0, 1.0) - 1.0).abs() < 1e-12);
}

#[test]
fn bump_interval_from_alpha() {
    let bp = bump(6.0);
    let rho = 1.0 / 12.0;
    assert_eq!(bp.rho, rho);
    assert!((bp.interval.0 - (2.0 / 3.0 - 2.0 * bp.alpha * rho)).abs() < 1e-15);
    assert!((bp.interval.1 - (2.0 / 3.0 - bp.alpha * rho)).abs() < 1e-15);
    // chi > 1/2 exactly on (-2 alpha, 2 alpha), and chi' > 0 on [-2 alpha, -alpha].
    assert!((bp.chi.value(2.0 * bp.alpha) - 0.5).abs() < 1e-12);
    assert!(bp.beta_min > 0.0 && bp.beta_min <= bp.beta_max);
    assert!((bp.c_m - 6.0 / (bp.alpha * bp.beta_min)).abs() < 1e-12 * bp.c_m);
    assert!(bp.b > 0.0 && bp.b < 1.0);
}

#[test]
fn bump_without_depth_is_a_diffeomorphism() {
    let bp = bump(0.0);
    assert!((bp.total_mass() - 1.0).abs() < 1e-12);
    for i in 0..=10_000 {
        assert!(bp.ds(i as f64 / 10_000.0) > 0.0);
    }
}

#[test]
fn bump_rejects_bad_parameters() {
    assert!(build_bump(0.2, 1.0, Chi::default()).is_err());
    assert!(build_bump(1.0 / 12.0, -1.0, Chi::default()).is_err());
}

#[test]
fn s_is_a_diffeomorphism() {
    let bp = bump(6.6);
    let mut prev = bp.s(0.0);
    for i in 1..=10_000 {
        let t = i as f64 / 10_000.0;
        assert!(bp.ds(t) > 0.0);
        let s = bp.s(t);
        assert!(s > prev);
        prev = s;
        // s_inv is badly conditioned where ds is tiny; compare in the image.
        assert!((bp.s_inv(s) - t).abs() * bp.ds(t) < 1e-12, "s_inv(s({t})) off");
    }
    assert_eq!(bp.s(1.5), 1.5);
    assert_eq!(bp.s(-0.25), -0.25);
}

#[test]
fn lemma_items_on_interval() {
    let bp = bump(6.6);
    let (lo, hi) = bp.interval;
    let len = bp.interval_len();
    let bm = bp.b * bp.m;
    for i in 0..=2000 {
        let t = lo + (hi - lo) * i as f64 / 2000.0;
        assert!(bp.phi(t) <= -bm + 1e-12);
        let d = -bp.dphi(t);
        assert!(d >= bp.m / len * (1.0 - 1e-12), "-phi' = {d} below M/|I|");
        assert!(d <= bp.m / (bp.b * len) * (1.0 + 1e-12), "-phi' = {d} above M/(b|I|)");
    }
}

fn gmap(m: f64) -> GMap {
    GMap::new(bump(m), DEFAULT_C, GMap::DEFAULT_KAPPA).unwrap()
}

#[test]
fn g_preserves_the_axis() {
    let g = gmap(6.6);
    for i in 0..100 {
        let x = i as f64 / 100.0;
        let p = g.apply(PlanePoint::new(x, 0.0)).unwrap();
        assert_eq!(p.y, 0.0);
        assert!((p.x - g.bump.s_inv(x)).abs() < 1e-15);
    }
}

#[test]
fn g_is_symplectic_in_the_ramp() {
    let g = gmap(6.6);
    let det = jacobian_det(|p| g.apply(p), PlanePoint::new(0.5, DEFAULT_C / 4.0)).unwrap();
    assert!((det - 1.0).abs() < 1e-6, "det = {det}");
}

#[test]
fn g_is_identity_outside_the_strip() {
    let g = gmap(6.6);
    for p in [
        PlanePoint::new(0.5, 1.5 * DEFAULT_C),
        PlanePoint::new(0.5, -DEFAULT_C),
        PlanePoint::new(-0.3, 0.0),
        PlanePoint::new(1.2, DEFAULT_C / 4.0),
    ] {
        assert_eq!(g.apply(p).unwrap(), p);
    }
}

#[test]
fn g_explicit_formula_near_axis() {
    let g = gmap(6.6);
    let y = DEFAULT_C / 64.0;
    for &x in &[0.1, 0.4, 0.65, 0.9] {
        let p = g.apply(PlanePoint::new(x, y)).unwrap();
        let t = g.bump.s_inv(x);
        assert!((p.x - t).abs() < 1e-15);
        assert!((p.y - g.bump.ds(t) * y).abs() < 1e-18);
    }
}

fn fpert() -> FPert {
    build_fpert(model(), gmap(6.6), DEFAULT_X_STAR).unwrap()
}

#[test]
fn fpert_equals_f_off_support() {
    let fp = fpert();
    let m = model();
    for p in [PlanePoint::new(0.5, 0.2), PlanePoint::new(0.02, 0.05), PlanePoint::new(-0.1, 0.3)] {
        assert!(!fp.in_support(p));
        assert_eq!(fp.apply(p).unwrap(), m.f_eps(p).unwrap());
    }
}

#[test]
fn fpert_keeps_separatrix() {
    let fp = fpert();
    let m = model();
    let mut inside = 0;
    for i in 0..200 {
        let p = PlanePoint::new(DEFAULT_X_STAR * (1.0 + 1.7 * i as f64 / 200.0), 0.0);
        inside += fp.in_support(p) as usize;
        assert!(m.distance_to_sigma(fp.apply(p).unwrap()) < 1e-8);
    }
    assert!(inside > 50);
    for p in sigma().iter().step_by(7) {
        assert!(m.distance_to_sigma(fp.apply(*p).unwrap()) < 1e-8);
    }
}

#[test]
fn fpert_is_symplectic() {
    let fp = fpert();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut hits = 0;
    while hits < 50 {
        let x = DEFAULT_X_STAR * rng.gen_range(1.0..2.7);
        let p = PlanePoint::new(x, rng.gen_range(-0.9..0.9) * DEFAULT_C / x);
        if !fp.in_support(p) {
            continue;
        }
        hits += 1;
        let det = jacobian_det(|z| fp.apply(z), p).unwrap();
        assert!((det - 1.0).abs() < 1e-4, "det = {det} at {p:?}");
    }
}

#[test]
fn fpert_needs_linear_q() {
    let m = build_model_spec(&ModelSpec { q_higher: vec![0.05], ..ModelSpec::default() }).unwrap();
    assert!(matches!(build_fpert(&m, gmap(6.6), DEFAULT_X_STAR), Err(ModelError::Invalid(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn perturbation_keeps_separatrix(eps in -1e-2f64..1e-2, k in 0usize..1000) {
        let s = sigma();
        let p = s[k % s.len()];
        let m = model().with_epsilon(eps);
        prop_assert!(m.distance_to_sigma(m.f_eps(p).unwrap()) < 1e-8);
    }
}
