use binet::analytic::{brgp_optimal_form, brgp_uni_general};
use binet::measurements::quality_factor;
use binet::protocol::BilocalReport;
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

/// The explicit one-, two- and three-round expressions: `(I, J)` with the
/// per-round setting average left out, i.e. `2^{n-1}` times the normalized value.
fn explicit(g: &[f64], theta: &[f64], phi: f64) -> (f64, f64) {
    let f: Vec<f64> = g.iter().map(|&x| quality_factor(x)).collect();
    let c2: Vec<f64> = theta.iter().map(|t| (2.0 * t).cos()).collect();
    let (bracket_i, bracket_j) = match g.len() {
        1 => (1.0, 1.0),
        2 => ((1.0 + f[0]) + (1.0 - f[0]) * c2[0], (1.0 + f[0]) - (1.0 - f[0]) * c2[0]),
        3 => (
            (1.0 + f[0]) * (1.0 + f[1])
                + (1.0 - f[0]) * (1.0 + f[1]) * c2[0]
                + (1.0 + f[0]) * (1.0 - f[1]) * c2[1]
                + (1.0 - f[0]) * (1.0 - f[1]) * c2[0] * c2[1],
            (1.0 + f[0]) * (1.0 + f[1])
                - (1.0 - f[0]) * (1.0 + f[1]) * c2[0]
                - (1.0 + f[0]) * (1.0 - f[1]) * c2[1]
                + (1.0 - f[0]) * (1.0 - f[1]) * c2[0] * c2[1],
        ),
        _ => unreachable!(),
    };
    let n = g.len() - 1;
    (
        g[n] * theta[n].cos() * phi.cos() * bracket_i,
        g[n] * theta[n].sin() * phi.sin() * bracket_j,
    )
}

fn ij(report: BilocalReport) -> (f64, f64) {
    match report {
        BilocalReport::Brgp { i, j, .. } => (i, j),
        BilocalReport::Tgb { .. } => panic!("expected BRGP"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn general_form_matches_explicit_rounds(
        g in proptest::collection::vec(0.01f64..=1.0, 3),
        theta in proptest::collection::vec(0.0f64..FRAC_PI_2, 3),
        phi in 0.0f64..FRAC_PI_2,
    ) {
        for n in 1..=3 {
            let (i, j) = ij(brgp_uni_general(&g[..n], &theta[..n], phi).unwrap());
            let (ei, ej) = explicit(&g[..n], &theta[..n], phi);
            let scale = 2f64.powi(n as i32 - 1);
            prop_assert!((scale * i - ei).abs() < 1e-12);
            prop_assert!((scale * j - ej).abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_angles_give_the_optimal_form(g in proptest::collection::vec(0.01f64..=1.0, 1..=5)) {
        let q = vec![FRAC_PI_4; g.len()];
        let general = brgp_uni_general(&g, &q, FRAC_PI_4).unwrap().value();
        prop_assert!((general - brgp_optimal_form(&[1.0], &g).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn mismatched_lengths_are_rejected() {
    assert!(brgp_uni_general(&[0.5, 0.6], &[0.1], 0.2).is_err());
    assert!(brgp_uni_general(&[1.3], &[0.1], 0.2).is_err());
}
