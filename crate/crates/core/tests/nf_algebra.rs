use std::f64::consts::PI;

use proptest::prelude::*;
use separatrix_lab::cli::bnf_remainder_profile;
use separatrix_lab::nf_algebra::*;
use separatrix_lab::numerics::gauss16_composite;

const DEG: u32 = 8;
const FOURIER: usize = 4;

fn mono(i1: u32, i2: u32, v: f64) -> TrigTaylorSeries {
    TrigTaylorSeries::monomial(i1, i2, v, DEG, FOURIER)
}

fn hyperbolic() -> TrigTaylorSeries {
    mono(1, 1, 1.0)
}

/// Integral form of the periodic solution of `h + g' - mu g = 0`, by quadrature.
fn homological_oracle(h: &TrigPoly, mu: f64, t: f64) -> f64 {
    let c = gauss16_composite(|s| ((1.0 - s) * mu).exp() * h.eval(s), 0.0, 1.0, 64) / (mu.exp() - 1.0);
    (mu * t).exp() * c - gauss16_composite(|s| ((t - s) * mu).exp() * h.eval(s), 0.0, t, 64)
}

fn residual(h: &TrigPoly, g: &TrigPoly, mu: f64) -> f64 {
    let dg = g.derivative();
    (0..256)
        .map(|i| {
            let t = i as f64 / 256.0;
            (h.eval(t) + dg.eval(t) - mu * g.eval(t)).abs()
        })
        .fold(0.0, f64::max)
}

fn assert_series_eq(a: &TrigTaylorSeries, b: &TrigTaylorSeries, tol: f64) {
    let d = a.sub(b);
    assert!(d.max_abs_coeff() <= tol, "series differ by {}", d.max_abs_coeff());
}

#[test]
fn bracket_of_hyperbolic_with_z1() {
    let got = poisson(&hyperbolic(), &mono(1, 0, 1.0));
    assert_series_eq(&got, &mono(1, 0, -1.0), 0.0);
}

#[test]
fn bracket_with_itself_vanishes() {
    assert!(poisson(&hyperbolic(), &hyperbolic()).is_zero());
}

#[test]
fn bracket_of_squares() {
    let got = poisson(&mono(2, 0, 1.0), &mono(0, 2, 1.0));
    assert_series_eq(&got, &mono(1, 1, 4.0), 0.0);
}

#[test]
fn average_constant_lambda() {
    let (mean, a0) = average_quadratic(&TrigPoly::constant(1.0, FOURIER)).unwrap();
    assert_eq!(mean, 1.0);
    assert!(a0.is_zero());
}

#[test]
fn average_cosine_lambda() {
    let lam = TrigPoly::from_coeffs(&[1.0, 1.0], &[0.0, 0.0], FOURIER);
    let (mean, a0) = average_quadratic(&lam).unwrap();
    assert!((mean - 1.0).abs() < 1e-15);
    for i in 0..50 {
        let t = i as f64 / 50.0;
        assert!((a0.eval(t) + (2.0 * PI * t).sin() / (2.0 * PI)).abs() < 1e-14);
    }
}

#[test]
fn average_sine_lambda_matches_quadrature() {
    let lam = TrigPoly::from_coeffs(&[2.0, 0.0], &[0.0, 1.0], FOURIER);
    let (mean, a0) = average_quadratic(&lam).unwrap();
    assert!((mean - 2.0).abs() < 1e-15);
    for i in 0..50 {
        let t = i as f64 / 50.0;
        let expected = ((2.0 * PI * t).cos() - 1.0) / (2.0 * PI);
        assert!((a0.eval(t) - expected).abs() < 1e-14);
        let quad = -gauss16_composite(|s| lam.eval(s) - 2.0, 0.0, t, 8);
        assert!((a0.eval(t) - quad).abs() < 1e-12);
    }
}

#[test]
fn average_rejects_nonpositive_mean() {
    let lam = TrigPoly::from_coeffs(&[-0.5, 1.0], &[0.0, 0.0], FOURIER);
    assert!(matches!(average_quadratic(&lam), Err(NfError::NonPositiveMean(_))));
}

#[test]
fn offdiag_constant_forcing() {
    let g = solve_homological_offdiag(&TrigPoly::constant(1.0, FOURIER), 2.0).unwrap();
    assert!((g.eval(0.3) - 0.5).abs() < 1e-15);
    assert!(g.is_constant());
}

#[test]
fn offdiag_cosine_forcing() {
    let h = TrigPoly::from_coeffs(&[0.0, 1.0], &[0.0, 0.0], FOURIER);
    let g = solve_homological_offdiag(&h, 1.0).unwrap();
    let d = 1.0 + 4.0 * PI * PI;
    for i in 0..64 {
        let t = i as f64 / 64.0;
        let expected = ((2.0 * PI * t).cos() - 2.0 * PI * (2.0 * PI * t).sin()) / d;
        assert!((g.eval(t) - expected).abs() < 1e-15);
        assert!((g.eval(t) - homological_oracle(&h, 1.0, t)).abs() < 1e-12);
    }
    assert!(residual(&h, &g, 1.0) < 1e-12);
}

#[test]
fn offdiag_zero_forcing() {
    let g = solve_homological_offdiag(&TrigPoly::zero(FOURIER), 3.0).unwrap();
    assert!(g.is_zero());
}

#[test]
fn offdiag_refuses_degenerate_mu() {
    let h = TrigPoly::constant(1.0, FOURIER);
    assert!(matches!(solve_homological_offdiag(&h, 0.0), Err(NfError::Degenerate(_))));
    assert!(matches!(solve_homological_offdiag(&h, 1e-14), Err(NfError::Degenerate(_))));
}

#[test]
fn diag_cosine() {
    let h = TrigPoly::from_coeffs(&[0.0, 1.0], &[0.0, 0.0], FOURIER);
    let (a, g) = solve_homological_diag(&h);
    assert_eq!(a, 0.0);
    for i in 0..64 {
        let t = i as f64 / 64.0;
        assert!((g.eval(t) + (2.0 * PI * t).sin() / (2.0 * PI)).abs() < 1e-15);
    }
}

#[test]
fn diag_constant() {
    let (a, g) = solve_homological_diag(&TrigPoly::constant(3.0, FOURIER));
    assert_eq!(a, 3.0);
    assert!(g.is_zero());
}

#[test]
fn diag_shifted_sine() {
    let h = TrigPoly::from_coeffs(&[1.0, 0.0], &[0.0, 1.0], FOURIER);
    let (a, g) = solve_homological_diag(&h);
    assert!((a - 1.0).abs() < 1e-15);
    assert!(g.eval(0.0).abs() < 1e-15);
    let dg = g.derivative();
    for i in 0..64 {
        let t = i as f64 / 64.0;
        assert!((dg.eval(t) + (h.eval(t) - a)).abs() < 1e-13);
        assert!((g.eval(t) - ((2.0 * PI * t).cos() - 1.0) / (2.0 * PI)).abs() < 1e-15);
    }
}

#[test]
fn bnf_already_normal() {
    let h = hyperbolic().add(&mono(2, 2, 1.0));
    let r = bnf_normalize(&h, 5).unwrap();
    assert_eq!(r.q.lambda, 1.0);
    assert_eq!(r.q.higher, vec![1.0]);
    assert!(r.generators.iter().all(|g| g.is_zero()));
    assert!(r.averaging.is_none());
}

#[test]
fn bnf_cubic_generator() {
    let h = hyperbolic().add(&mono(3, 0, 1.0));
    let r = bnf_normalize(&h, 3).unwrap();
    assert!(r.q.higher.is_empty());
    let nonzero: Vec<_> = r.generators.iter().filter(|g| !g.is_zero()).collect();
    assert_eq!(nonzero.len(), 1);
    let g = nonzero[0];
    // Only z1^3 with coefficient 1/3, as from mu = 3, h = 1.
    assert!((g.coeff_value(3, 0, 0, Phase::Cos) - 1.0 / 3.0).abs() < 1e-15);
    assert_series_eq(g, &mono(3, 0, 1.0 / 3.0), 1e-15);
    // The cubic is removed at first order.
    let first = hyperbolic().add(&mono(3, 0, 1.0)).add(&poisson(&hyperbolic(), g));
    assert!(first.homogeneous(3).max_abs_coeff() < 1e-15);
    assert!(r.residual < 1e-14);
}

#[test]
fn bnf_periodic_diagonal_term() {
    let mut h = hyperbolic();
    h.add_coeff(2, 2, 1, Phase::Cos, 1.0);
    let r = bnf_normalize(&h, 5).unwrap();
    assert!(r.q.higher.iter().all(|&a| a.abs() < 1e-15));
    let g = r.generators.iter().find(|g| !g.is_zero()).expect("a generator");
    assert!((g.coeff_value(2, 2, 1, Phase::Sin).abs() - 1.0 / (2.0 * PI)).abs() < 1e-14);
    assert!(r.residual < 1e-12);
}

#[test]
fn bnf_rejects_order_above_truncation() {
    let h = TrigTaylorSeries::monomial(1, 1, 1.0, 4, 2);
    assert!(matches!(bnf_normalize(&h, 5), Err(NfError::Truncation { .. })));
}

#[test]
fn coefficient_table_round_trip() {
    let mut h = hyperbolic().add(&mono(3, 1, -0.25));
    h.add_coeff(2, 1, 2, Phase::Sin, 0.125);
    let text = h.to_table();
    assert!(text.lines().any(|l| l.split_whitespace().count() == 5));
    let back = TrigTaylorSeries::from_table(&text, DEG, FOURIER).unwrap();
    assert_eq!(back, h);
}

#[test]
fn coefficient_table_reports_line() {
    let err = TrigTaylorSeries::from_table("1 1 0 cos 1.0\n1 1 x cos 2\n", DEG, FOURIER).unwrap_err();
    assert!(matches!(err, NfError::Parse { line: 2, .. }));
}

fn series_strategy(min_deg: u32, max_deg: u32, autonomous: bool) -> impl Strategy<Value = TrigTaylorSeries> {
    let term = (min_deg..=max_deg, 0u32..=4, 0usize..=FOURIER, any::<bool>(), -1.0f64..1.0);
    prop::collection::vec(term, 1..6).prop_map(move |terms| {
        let mut s = TrigTaylorSeries::zero(DEG, FOURIER);
        for (d, i1, k, sin, v) in terms {
            let i1 = i1.min(d);
            let (k, phase) = if autonomous || k == 0 {
                (0, Phase::Cos)
            } else if sin {
                (k, Phase::Sin)
            } else {
                (k, Phase::Cos)
            };
            s.add_coeff(i1, d - i1, k, phase, v);
        }
        s
    })
}

fn trig_strategy() -> impl Strategy<Value = TrigPoly> {
    (prop::collection::vec(-1.0f64..1.0, 5), prop::collection::vec(-1.0f64..1.0, 5))
        .prop_map(|(c, s)| TrigPoly::from_coeffs(&c, &s, FOURIER))
}

proptest! {
    #[test]
    fn bracket_antisymmetry(a in series_strategy(1, 4, false), b in series_strategy(1, 4, false)) {
        let s = poisson(&a, &b).add(&poisson(&b, &a));
        prop_assert!(s.max_abs_coeff() <= 1e-15);
    }

    #[test]
    fn homological_residual(h in trig_strategy(), mu in prop_oneof![0.3f64..6.0, -6.0f64..-0.3]) {
        let g = solve_homological_offdiag(&h, mu).unwrap();
        prop_assert!(residual(&h, &g, mu) < 1e-10);
        for i in 0..8 {
            let t = i as f64 / 8.0;
            prop_assert!((g.eval(t) - homological_oracle(&h, mu, t)).abs() < 1e-10);
        }
    }

    #[test]
    fn diagonal_residual(h in trig_strategy()) {
        let (a, g) = solve_homological_diag(&h);
        let dg = g.derivative();
        for i in 0..64 {
            let t = i as f64 / 64.0;
            prop_assert!((h.eval(t) + dg.eval(t) - a).abs() < 1e-12);
        }
        prop_assert!(g.eval(0.0).abs() < 1e-14);
    }

    #[test]
    fn autonomous_input_gives_autonomous_generators(p in series_strategy(3, 6, true)) {
        let h = hyperbolic().add(&p.scaled(0.1));
        let r = bnf_normalize(&h, 6).unwrap();
        prop_assert!(r.averaging.is_none());
        for g in &r.generators {
            prop_assert!(g.is_autonomous());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn remainder_order(p in series_strategy(3, 4, true)) {
        let h = hyperbolic().add(&p.scaled(0.5));
        let rhos: Vec<f64> = (0..9).map(|i| 10f64.powf(-3.0 + 2.0 * i as f64 / 8.0)).collect();
        let prof = bnf_remainder_profile(&h, 5, &rhos).unwrap();
        // Least-squares slope over the points above the rounding floor, which
        // sits near eps_mach * |H| ~ 1e-16 rho^2.
        let pts: Vec<(f64, f64)> = prof.iter().filter(|(x, r)| *r > 1e-13 * x * x).map(|(x, r)| (x.ln(), r.ln())).collect();
        prop_assume!(pts.len() >= 4);
        let n = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / n, sy / n);
        let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
        prop_assert!(num / den >= 5.5, "slope {}", num / den);
    }
}
