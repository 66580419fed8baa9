mod common;

use common::t6_two_sided_inner;
use pdcov::stats::{f_cdf, f_sf, levene_test, matrix_element_groups, spearman_rho};
use pdcov::SymmetricMatrix;
use proptest::prelude::*;

/// ln Gamma by recurrence up to x >= 15 and the Stirling series there.
fn ln_gamma_stirling(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 15.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
    shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const PANELS: usize = 64;
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| simpson(f, a + i as f64 * h, a + (i + 1) as f64 * h, 1e-14))
        .sum()
}

/// `int_0^t u^(a-1) (1-u)^(b-1) du / B(a, b)` by quadrature. For `a < 1` the
/// substitution `u = v^(1/a)` removes the endpoint singularity.
fn lower_tail(t: f64, a: f64, b: f64) -> f64 {
    let ln_b = ln_gamma_stirling(a) + ln_gamma_stirling(b) - ln_gamma_stirling(a + b);
    if a >= 1.0 {
        let f = |u: f64| {
            if u <= 0.0 || u >= 1.0 {
                if a == 1.0 && u <= 0.0 { (-ln_b).exp() } else { 0.0 }
            } else {
                ((a - 1.0) * u.ln() + (b - 1.0) * (1.0 - u).ln() - ln_b).exp()
            }
        };
        integrate(&f, 0.0, t)
    } else {
        let f = |v: f64| {
            let u = v.powf(1.0 / a);
            if u >= 1.0 { 0.0 } else { ((b - 1.0) * (1.0 - u).ln() - ln_b).exp() / a }
        };
        integrate(&f, 0.0, t.powf(a))
    }
}

/// `I_t(a, b)`, integrating from whichever end is nearer.
fn beta_reg_quadrature(t: f64, a: f64, b: f64) -> f64 {
    if t <= 0.5 {
        lower_tail(t, a, b)
    } else {
        1.0 - lower_tail(1.0 - t, b, a)
    }
}

fn f_sf_oracle(x: f64, d1: f64, d2: f64) -> f64 {
    beta_reg_quadrature(d2 / (d2 + d1 * x), d2 / 2.0, d1 / 2.0)
}

#[test]
fn f_tail_matches_quadrature() {
    for &d1 in &[1.0, 2.0, 3.0, 7.0, 30.0, 120.0] {
        for &d2 in &[2.0, 5.0, 12.0, 60.0, 250.0, 500.0] {
            for &x in &[0.05, 0.3, 1.0, 2.5, 6.0, 20.0] {
                let got = f_sf(x, d1, d2);
                let want = f_sf_oracle(x, d1, d2);
                assert!((got - want).abs() < 1e-8, "F({d1},{d2}) at {x}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn f_tail_edge_values() {
    assert_eq!(f_sf(0.0, 3.0, 4.0), 1.0);
    assert_eq!(f_sf(f64::INFINITY, 3.0, 4.0), 0.0);
    assert_eq!(f_cdf(0.0, 3.0, 4.0), 0.0);
}

#[test]
fn levene_exact_oracle() {
    // deviations |x - mean|: {1.5, .5, .5, 1.5} and {15, 5, 5, 15}; means 1 and 10,
    // grand mean 5.5; between = 8 * 4.5^2 = 162; within = 1 + 100 = 101
    let r = levene_test(&[[1.0, 2.0, 3.0, 4.0], [10.0, 20.0, 30.0, 40.0]]).unwrap();
    let w = 972.0 / 101.0;
    assert!((r.statistic - w).abs() < 1e-10);
    assert_eq!((r.df1, r.df2), (1, 6));
    // F(1, 6) at w is T^2 with 6 df
    let p = 1.0 - t6_two_sided_inner(w.sqrt());
    assert!((r.p_value - p).abs() < 1e-8, "{} vs {p}", r.p_value);
    assert!(!r.p_underflow);
}

#[test]
fn levene_identical_groups() {
    let g = [0.3, 1.7, -2.0, 5.5];
    let r = levene_test(&[g, g]).unwrap();
    assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
}

#[test]
fn levene_underflow_flag() {
    let a: Vec<f64> = (0..400).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let b: Vec<f64> = (0..400)
        .map(|i| if i % 2 == 0 { 100.0 + (i % 7) as f64 } else { -100.0 - (i % 5) as f64 })
        .collect();
    let r = levene_test(&[a, b]).unwrap();
    assert!(r.p_underflow);
    assert_eq!(r.p_value, 0.0);
}

#[test]
fn matrix_groups_identical_estimates() {
    let m = pdcov::simlab::generate_population_sigma(6, 3).unwrap();
    let (diag, off) = matrix_element_groups(&m, &m).unwrap();
    assert_eq!(levene_test(&diag).unwrap().statistic, 0.0);
    assert_eq!(levene_test(&off).unwrap().statistic, 0.0);
    assert!(matrix_element_groups(&m, &SymmetricMatrix::identity(5)).is_err());
}

#[test]
fn spearman_reference() {
    assert_eq!(spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[8.0, 6.0, 4.0, 1.0]).unwrap(), -1.0);
}

proptest! {
    #[test]
    fn sf_and_cdf_complement(x in 0.0f64..50.0, d1 in 1u32..200, d2 in 1u32..500) {
        let (d1, d2) = (d1 as f64, d2 as f64);
        prop_assert!((f_sf(x, d1, d2) + f_cdf(x, d1, d2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sf_is_monotone(x in 0.0f64..20.0, dx in 0.0f64..5.0, d1 in 1u32..50, d2 in 1u32..200) {
        let (d1, d2) = (d1 as f64, d2 as f64);
        prop_assert!(f_sf(x + dx, d1, d2) <= f_sf(x, d1, d2) + 1e-15);
    }

    #[test]
    fn levene_is_symmetric_in_groups(a in prop::collection::vec(-10.0f64..10.0, 3..12), b in prop::collection::vec(-10.0f64..10.0, 3..12)) {
        let r1 = levene_test(&[a.clone(), b.clone()]).unwrap();
        let r2 = levene_test(&[b, a]).unwrap();
        prop_assert!((r1.statistic - r2.statistic).abs() <= 1e-12 * r1.statistic.abs().max(1.0));
    }
}
