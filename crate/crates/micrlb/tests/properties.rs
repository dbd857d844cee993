//! Randomized structural laws of the public surface.
//!
//! Each property draws fresh inputs per case and asserts an exact or
//! near-exact invariant: channel monotonicity, coupling proportionality,
//! symmetry and positive semidefiniteness of the information matrix, the
//! noise scaling law at matrix level, and the scene text fixed point.

use proptest::prelude::*;

use micrlb::channel::{coupling_constant, received_power};
use micrlb::deployment::{parse_scene, write_scene};
use micrlb::experiments::six_anchor_scenario;
use micrlb::fim::fim_standard;
use micrlb::{ChannelParams, CoilSpec, PathLossExponent};

fn exponents() -> impl Strategy<Value = PathLossExponent> {
    prop_oneof![Just(PathLossExponent::Six), Just(PathLossExponent::Three)]
}

proptest! {
    #[test]
    fn received_power_falls_with_distance(
        k in 1e-12f64..1e-3,
        near_d in 1.0f64..50.0,
        gap in 0.1f64..10.0,
        exponent in exponents(),
    ) {
        let near = received_power(k, near_d, exponent).unwrap();
        let far = received_power(k, near_d + gap, exponent).unwrap();
        prop_assert!(far < near, "power rose from {near} to {far} over a {gap} m gap");
    }

    #[test]
    fn coupling_is_positive_and_linear_in_transmit_power(
        turns in 1u32..200,
        radius in 1e-3f64..0.9,
        power in 1e-3f64..10.0,
        scale in 1.1f64..5.0,
    ) {
        let coil = CoilSpec::new(turns, radius).unwrap();
        let params = ChannelParams { transmit_power: power, ..ChannelParams::default() };
        let k = coupling_constant(&coil, &coil, &params).unwrap();
        prop_assert!(k > 0.0);
        let boosted_params =
            ChannelParams { transmit_power: power * scale, ..ChannelParams::default() };
        let boosted = coupling_constant(&coil, &coil, &boosted_params).unwrap();
        prop_assert!((boosted / (k * scale) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn information_matrices_are_symmetric_and_positive_semidefinite(seed: u64) {
        let (dep, graph) = six_anchor_scenario().realize(seed).unwrap();
        let fim = fim_standard(&graph, &dep.positions()).unwrap();
        prop_assert_eq!(fim.symmetry_defect(), 0.0);
        let eig = fim.matrix().clone().symmetric_eigen();
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for &lambda in eig.eigenvalues.iter() {
            prop_assert!(lambda >= -1e-12 * top, "eigenvalue {lambda} below -1e-12 * {top}");
        }
    }

    #[test]
    fn scaling_every_sigma_rescales_the_matrix_exactly(seed: u64, c in 1.01f64..10.0) {
        let (dep, graph) = six_anchor_scenario().realize(seed).unwrap();
        let pos = dep.positions();
        let base = fim_standard(&graph, &pos).unwrap();
        let mut louder = graph.clone();
        for e in &mut louder.edges {
            e.sigma *= c;
        }
        let scaled = fim_standard(&louder, &pos).unwrap();
        let tol = 1e-12 * base.matrix().amax();
        for r in 0..base.matrix().nrows() {
            for col in 0..base.matrix().ncols() {
                let rebuilt = scaled.matrix()[(r, col)] * c * c;
                prop_assert!((rebuilt - base.matrix()[(r, col)]).abs() <= tol);
            }
        }
    }

    #[test]
    fn scene_text_is_a_fixed_point_after_one_cycle(seed: u64) {
        let (dep, graph) = six_anchor_scenario().realize(seed).unwrap();
        let text = write_scene(&dep, &graph);
        let (dep2, graph2) = parse_scene(&text).unwrap();
        let text2 = write_scene(&dep2, &graph2);
        prop_assert_eq!(text, text2);
    }
}
