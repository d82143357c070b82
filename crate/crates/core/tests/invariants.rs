use binet::measurements::{observable, weak_map_conditional, weak_map_unconditional, JointKind, Party, RoundSpec};
use binet::protocol::{averaged_table, label_map_scores, report_from_table, simulate, ScenarioConfig};
use binet::qmath::{entanglement_entropy, kron, kron_vec, partial_trace, pauli_y, pauli_z, ComplexMatrix};
use binet::states::{BaseState, SourceSpec};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_4, SQRT_2};

fn matrix(values: &[f64], dim: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(dim, |r, c| Complex64::new(values[2 * (r * dim + c)], values[2 * (r * dim + c) + 1]))
}

fn rotation(angle: f64, axis: &ComplexMatrix) -> ComplexMatrix {
    // exp(-i angle axis / 2) for a Pauli axis
    let id = ComplexMatrix::identity(2);
    &id.scale((angle / 2.0).cos()) + &axis.scale_complex(Complex64::new(0.0, -(angle / 2.0).sin()))
}

fn brgp(source: SourceSpec, alice: &[(f64, f64)], charu: &[(f64, f64)]) -> ScenarioConfig {
    ScenarioConfig {
        source1: source,
        source2: source,
        joint: JointKind::Bsm,
        alice_rounds: alice.iter().map(|&(a, g)| RoundSpec::in_plane(a, g).unwrap()).collect(),
        charu_rounds: charu.iter().map(|&(a, g)| RoundSpec::in_plane(a, g).unwrap()).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn kron_is_associative(a in proptest::collection::vec(-1.0f64..1.0, 8),
                           b in proptest::collection::vec(-1.0f64..1.0, 8),
                           c in proptest::collection::vec(-1.0f64..1.0, 8)) {
        let (a, b, c) = (matrix(&a, 2), matrix(&b, 2), matrix(&c, 2));
        let left = kron(&kron(&a, &b), &c);
        let right = kron(&a, &kron(&b, &c));
        prop_assert!(left.max_abs_diff(&right) < 1e-14);
    }

    #[test]
    fn partial_trace_of_product(t in 0.0f64..3.0, s in 0.0f64..3.0) {
        let a = binet::qmath::DensityMatrix::pure(&[Complex64::new(t.cos(), 0.0), Complex64::new(0.0, t.sin())]).unwrap();
        let b = binet::qmath::DensityMatrix::pure(&[Complex64::new(s.cos(), 0.0), Complex64::new(s.sin(), 0.0)]).unwrap();
        let ab = kron(a.matrix(), b.matrix());
        prop_assert!(partial_trace(&ab, &[0], &[2, 2]).unwrap().max_abs_diff(a.matrix()) < 1e-14);
        prop_assert!(partial_trace(&ab, &[1], &[2, 2]).unwrap().max_abs_diff(b.matrix()) < 1e-14);
    }

    #[test]
    fn entropy_is_invariant_under_local_unitaries(eta in 0.0f64..=1.0, t1 in 0.0f64..6.3, t2 in 0.0f64..6.3) {
        let psi = binet::states::nme_pure(eta).unwrap();
        let u = kron(&rotation(t1, &pauli_y()), &rotation(t2, &pauli_z()));
        let moved = u.apply(&psi);
        let before = entanglement_entropy(&psi).unwrap();
        let after = entanglement_entropy(&moved).unwrap();
        prop_assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn outcome_sum_is_the_unconditional_map(eta in 0.0f64..=1.0, v in 0.0f64..=1.0, g in 0.01f64..=1.0,
                                            angle in 0.0f64..3.2, qubit in 0usize..2) {
        let rho = SourceSpec::new(eta, v, BaseState::PhiPlus).unwrap().state().unwrap();
        let dir = observable(angle, 1, Party::Alice).unwrap();
        let sum = &weak_map_conditional(rho.matrix(), qubit, &dir, g, 0).unwrap()
            + &weak_map_conditional(rho.matrix(), qubit, &dir, g, 1).unwrap();
        let f = (1.0 - g * g).sqrt();
        let unconditional = weak_map_unconditional(rho.matrix(), qubit, &dir, f).unwrap();
        prop_assert!(sum.max_abs_diff(&unconditional) < 1e-12);
        prop_assert!((unconditional.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn source_swap_mirrors_the_table(e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0, v1 in 0.0f64..=1.0, v2 in 0.0f64..=1.0,
                                     g in proptest::collection::vec(0.05f64..=1.0, 3),
                                     angles in proptest::collection::vec(0.0f64..1.6, 3)) {
        let cfg = ScenarioConfig {
            source1: SourceSpec::new(e1, v1, BaseState::PhiPlus).unwrap(),
            source2: SourceSpec::new(e2, v2, BaseState::PhiPlus).unwrap(),
            joint: JointKind::Bsm,
            alice_rounds: vec![RoundSpec::in_plane(angles[0], g[0]).unwrap()],
            charu_rounds: vec![RoundSpec::in_plane(angles[1], g[1]).unwrap(), RoundSpec::in_plane(angles[2], g[2]).unwrap()],
        };
        let table = averaged_table(&cfg).unwrap();
        let mirror = averaged_table(&cfg.mirrored()).unwrap();
        for x in 0..2 { for z in 0..2 { for a in 0..2 { for b in 0..4 { for c in 0..2 {
            let p = table.get(x, z, a, b, c);
            let q = mirror.get(1 - z, 1 - x, c, b, a);
            prop_assert!((p - q).abs() < 1e-12);
        }}}}}
        let lhs = report_from_table(&table).unwrap().value();
        let rhs = report_from_table(&mirror).unwrap().value();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn sharper_final_rounds_never_lower_the_value(g in 0.05f64..0.95, dg in 0.0f64..0.05, prior in 0.05f64..=1.0) {
        let me = SourceSpec::maximally_entangled(BaseState::PhiPlus);
        let q = FRAC_PI_4;
        let low = simulate(&brgp(me, &[(q, 1.0)], &[(q, prior), (q, g)])).unwrap().value();
        let high = simulate(&brgp(me, &[(q, 1.0)], &[(q, prior), (q, g + dg)])).unwrap().value();
        prop_assert!(high >= low - 1e-12);
    }

    #[test]
    fn gentler_intermediate_rounds_never_lower_the_value(g in 0.06f64..=1.0, dg in 0.0f64..0.05, last in 0.05f64..=1.0) {
        // smaller intermediate G means larger F, less disturbance
        let me = SourceSpec::maximally_entangled(BaseState::PhiPlus);
        let q = FRAC_PI_4;
        let gentle = simulate(&brgp(me, &[(q, 1.0)], &[(q, g - dg.min(g - 0.05)), (q, last)])).unwrap().value();
        let rough = simulate(&brgp(me, &[(q, 1.0)], &[(q, g), (q, last)])).unwrap().value();
        prop_assert!(gentle >= rough - 1e-12);
    }
}

#[test]
fn every_bob_outcome_sees_the_same_violation() {
    let me = SourceSpec::maximally_entangled(BaseState::PhiPlus);
    let q = FRAC_PI_4;
    let table = averaged_table(&brgp(me, &[(q, 1.0)], &[(q, 1.0)])).unwrap();
    for b in 0..4 {
        let value = report_from_table(&table.conditioned_on(b)).unwrap().value();
        assert!((value - SQRT_2).abs() < 1e-12, "outcome {b}: {value}");
    }
}

#[test]
fn standard_labels_are_optimal_for_both_bases() {
    let q = FRAC_PI_4;
    for base in [BaseState::PhiPlus, BaseState::PsiMinus] {
        let cfg = brgp(SourceSpec::maximally_entangled(base), &[(q, 1.0)], &[(q, 1.0)]);
        let scores = label_map_scores(&cfg).unwrap();
        assert_eq!(scores.len(), 24);
        let identity = scores.iter().find(|(p, _)| p == &vec![0, 1, 2, 3]).unwrap().1;
        let best = scores.iter().map(|s| s.1).fold(0.0, f64::max);
        assert!((identity - SQRT_2).abs() < 1e-12);
        assert!((best - identity).abs() < 1e-12);
    }
}

#[test]
fn kron_vec_matches_kron_of_projectors() {
    let a = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
    let b = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let outer = ComplexMatrix::outer(&kron_vec(&a, &b));
    let product = kron(&ComplexMatrix::outer(&a), &ComplexMatrix::outer(&b));
    assert!(outer.max_abs_diff(&product) < 1e-15);
}
