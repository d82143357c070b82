//! Closed-form BRGP and TGB expressions for the strategies studied, used as
//! the fast path of the solver and as the oracle for the simulation engine.

use crate::error::{check_range, Error, Result};
use crate::measurements::quality_factor;
use crate::protocol::{brgp_report, tgb_report, BilocalReport};

fn check_sharpness(list: &[f64]) -> Result<()> {
    if list.is_empty() {
        return Err(Error::Config("a chain needs at least one round".into()));
    }
    for &g in list {
        if !(g > 0.0 && g <= 1.0) {
            return Err(Error::Param { name: "G", value: g });
        }
    }
    Ok(())
}

/// `prod_i (1 + F_i)` over all but the last round.
fn disturbance_product(sharpness: &[f64]) -> f64 {
    sharpness[..sharpness.len() - 1]
        .iter()
        .map(|&g| 1.0 + quality_factor(g))
        .product()
}

/// `prod_i K_i` with `K_i = (1 + 2 F_i)/3` over all but the last round.
pub fn pauli_disturbance_product(sharpness: &[f64]) -> f64 {
    sharpness[..sharpness.len() - 1]
        .iter()
        .map(|&g| (1.0 + 2.0 * quality_factor(g)) / 3.0)
        .product()
}

/// Unidirectional BRGP value for maximally entangled sources, one sharp Alice
/// at angle `phi` and Charus at arbitrary angles.
///
/// `I = G_n cos(theta_n) cos(phi) 2^{1-n} sum_l prod_i (1 + (-1)^{l_i} F_i) cos(2 theta_i)^{l_i}`
/// and `J` likewise with `sin` and an extra `(-1)^{l_i}`.
pub fn brgp_uni_general(charu_g: &[f64], charu_angles: &[f64], phi: f64) -> Result<BilocalReport> {
    check_sharpness(charu_g)?;
    if charu_angles.len() != charu_g.len() {
        return Err(Error::Config(format!(
            "{} Charu angles for {} rounds",
            charu_angles.len(),
            charu_g.len()
        )));
    }
    let n = charu_g.len();
    let prior = n - 1;
    let mut sum_i = 0.0;
    let mut sum_j = 0.0;
    for pattern in 0..(1usize << prior) {
        let mut term_i = 1.0;
        let mut term_j = 1.0;
        for k in 0..prior {
            let f = quality_factor(charu_g[k]);
            let cos2 = (2.0 * charu_angles[k]).cos();
            if pattern >> k & 1 == 1 {
                term_i *= (1.0 - f) * cos2;
                term_j *= -(1.0 - f) * cos2;
            } else {
                term_i *= 1.0 + f;
                term_j *= 1.0 + f;
            }
        }
        sum_i += term_i;
        sum_j += term_j;
    }
    let norm = 0.5f64.powi(prior as i32);
    let g_last = charu_g[n - 1];
    let theta_last = charu_angles[n - 1];
    let i = g_last * theta_last.cos() * phi.cos() * sum_i * norm;
    let j = g_last * theta_last.sin() * phi.sin() * sum_j * norm;
    Ok(brgp_report(i, j))
}

/// BRGP value at the optimal angles for maximally entangled sources:
/// `2 sqrt(2^{-(n+m-1)} prod(1+F_i) prod(1+F'_j) G_m G'_n)`.
pub fn brgp_optimal_form(alice_g: &[f64], charu_g: &[f64]) -> Result<f64> {
    check_sharpness(alice_g)?;
    check_sharpness(charu_g)?;
    let m = alice_g.len() as i32;
    let n = charu_g.len() as i32;
    let inner = 0.5f64.powi(n + m - 1)
        * disturbance_product(alice_g)
        * disturbance_product(charu_g)
        * alice_g[alice_g.len() - 1]
        * charu_g[charu_g.len() - 1];
    Ok(2.0 * inner.sqrt())
}

/// Resource factor `sqrt(v1 v2) (1 + 2 (alpha(1-alpha) beta(1-beta))^{1/4})`; 2 for two Bell pairs.
pub fn resource_factor(v1: f64, v2: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_range("v1", v1, 0.0, 1.0)?;
    check_range("v2", v2, 0.0, 1.0)?;
    check_range("alpha", alpha, 0.0, 1.0)?;
    check_range("beta", beta, 0.0, 1.0)?;
    let overlap = (alpha * (1.0 - alpha) * beta * (1.0 - beta)).powf(0.25);
    Ok((v1 * v2).sqrt() * (1.0 + 2.0 * overlap))
}

/// BRGP value at the optimal angles for noisy non-maximally entangled sources.
pub fn brgp_noisy_nme(alice_g: &[f64], charu_g: &[f64], v1: f64, v2: f64, alpha: f64, beta: f64) -> Result<f64> {
    let factor = resource_factor(v1, v2, alpha, beta)?;
    // optimal form carries the factor 2 of two Bell pairs
    Ok(brgp_optimal_form(alice_g, charu_g)? / 2.0 * factor)
}

/// TGB value for singlet-based Werner sources, Pauli settings and an EJM at `ejm_theta`.
///
/// For a single sharp Alice this is
/// `(cos(theta)/2)[v1 + v2 G'_n prod K'_i] + 3 v1 v2 G'_n prod K'_i`.
/// An Alice chain enters symmetrically through `G_m prod K_i`.
pub fn tgb_closed_form(alice_g: &[f64], charu_g: &[f64], v1: f64, v2: f64, ejm_theta: f64) -> Result<f64> {
    check_sharpness(alice_g)?;
    check_sharpness(charu_g)?;
    check_range("v1", v1, 0.0, 1.0)?;
    check_range("v2", v2, 0.0, 1.0)?;
    let alice = alice_g[alice_g.len() - 1] * pauli_disturbance_product(alice_g);
    let charu = charu_g[charu_g.len() - 1] * pauli_disturbance_product(charu_g);
    Ok(ejm_theta.cos() / 2.0 * (v1 * alice + v2 * charu) + 3.0 * v1 * v2 * alice * charu)
}

/// Report for the closed-form TGB strategy, whose marginals all vanish (`Z = 0`).
pub fn tgb_closed_report(alice_g: &[f64], charu_g: &[f64], v1: f64, v2: f64, ejm_theta: f64) -> Result<BilocalReport> {
    Ok(tgb_report(tgb_closed_form(alice_g, charu_g, v1, v2, ejm_theta)?, 0.0))
}

/// Smallest `G'_n` at which `BE` reaches 3 for equal visibilities `v`, given
/// the product of earlier `K'_i`. Infinite when no precision suffices.
pub fn tgb_critical_g(v: f64, ejm_theta: f64, k_product: f64) -> f64 {
    tgb_critical_g_asymmetric(v, v, ejm_theta, k_product)
}

/// As [`tgb_critical_g`] with separate visibilities for the Alice and Charu sources.
pub fn tgb_critical_g_asymmetric(v1: f64, v2: f64, ejm_theta: f64, k_product: f64) -> f64 {
    let c = ejm_theta.cos();
    let numerator = 3.0 - v1 * c / 2.0;
    let denominator = (v2 * c / 2.0 + 3.0 * v1 * v2) * k_product;
    if denominator <= 0.0 {
        f64::INFINITY
    } else {
        numerator / denominator
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, SQRT_2};

    #[test]
    fn uni_general_examples() {
        let q = FRAC_PI_4;
        assert_relative_eq!(brgp_uni_general(&[1.0], &[q], q).unwrap().value(), SQRT_2, epsilon = 1e-14);
        assert_relative_eq!(brgp_uni_general(&[0.5], &[q], q).unwrap().value(), 1.0, epsilon = 1e-14);
        let b = brgp_uni_general(&[0.5, 0.536], &[q, q], q).unwrap().value();
        assert!((b - 1.0).abs() < 1e-3, "{b}");
    }

    #[test]
    fn uni_general_matches_optimal_form_at_pi_over_4() {
        let q = FRAC_PI_4;
        let g = [0.3, 0.55, 0.8, 0.65];
        for n in 1..=g.len() {
            let general = brgp_uni_general(&g[..n], &vec![q; n], q).unwrap().value();
            let optimal = brgp_optimal_form(&[1.0], &g[..n]).unwrap();
            assert_relative_eq!(general, optimal, epsilon = 1e-12);
        }
    }

    #[test]
    fn optimal_form_examples() {
        assert_relative_eq!(brgp_optimal_form(&[1.0], &[1.0]).unwrap(), SQRT_2, epsilon = 1e-15);
        assert_relative_eq!(
            brgp_optimal_form(&[FRAC_1_SQRT_2], &[FRAC_1_SQRT_2]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn noisy_nme_reduces_to_optimal_form() {
        let a = [0.7, 0.9];
        let c = [0.6, 0.8, 0.95];
        assert_relative_eq!(
            brgp_noisy_nme(&a, &c, 1.0, 1.0, 0.5, 0.5).unwrap(),
            brgp_optimal_form(&a, &c).unwrap(),
            epsilon = 1e-15
        );
        let v = 0.8;
        assert_relative_eq!(brgp_noisy_nme(&[1.0], &[1.0], v, v, 0.5, 0.5).unwrap(), SQRT_2 * v, epsilon = 1e-15);
        let alpha: f64 = 0.3;
        assert_relative_eq!(
            brgp_noisy_nme(&[1.0], &[1.0], 1.0, 1.0, alpha, alpha).unwrap(),
            FRAC_1_SQRT_2 * (1.0 + 2.0 * (alpha * (1.0 - alpha)).sqrt()),
            epsilon = 1e-15
        );
        assert!(brgp_noisy_nme(&[1.0], &[1.0], 1.2, 1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn tgb_examples() {
        assert_relative_eq!(tgb_closed_form(&[1.0], &[1.0], 1.0, 1.0, 0.0).unwrap(), 4.0, epsilon = 1e-15);
        assert_relative_eq!(tgb_closed_form(&[1.0], &[5.0 / 7.0], 1.0, 1.0, 0.0).unwrap(), 3.0, epsilon = 1e-14);
        assert_relative_eq!(tgb_critical_g(1.0, 0.0, 1.0), 5.0 / 7.0, epsilon = 1e-15);
        let k1 = pauli_disturbance_product(&[5.0 / 7.0, 1.0]);
        assert!((tgb_critical_g(1.0, 0.0, k1) - 0.893).abs() < 1e-3);
        assert!(tgb_critical_g(0.05, 0.0, 1.0) > 1.0);
        assert_eq!(tgb_critical_g(0.0, 0.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn tgb_critical_g_is_the_root_of_the_closed_form() {
        for &(v, theta) in &[(1.0, 0.0), (0.9, 0.3), (0.95, 1.0)] {
            let g = tgb_critical_g(v, theta, 1.0);
            if g <= 1.0 {
                assert_relative_eq!(tgb_closed_form(&[1.0], &[g], v, v, theta).unwrap(), 3.0, epsilon = 1e-12);
            }
        }
    }
}
