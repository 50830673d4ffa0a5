mod common;

use ia_kit::hall::{from_vector, jacobian, reconstruct, residual, to_vector, HallData};
use ia_kit::{
    build_hall, hall_dims, sample_channels, HallLayout, NetworkConfig, ReducedTransceivers, ScalarField, C64,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn arb_config() -> impl Strategy<Value = NetworkConfig> {
    (2usize..=4, any::<u64>()).prop_map(|(k, seed)| {
        let b = common::Bounds {
            k: (k, k),
            ..common::SMALL
        };
        common::corpus(seed, 1, b).remove(0)
    })
}

fn complex(h: &ia_kit::HallMatrix) -> &DMatrix<C64> {
    match &h.data {
        HallData::Complex(m) => m,
        HallData::Prime { .. } => panic!("expected complex data"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn row_and_column_maps_are_bijections(cfg in arb_config()) {
        let layout = HallLayout::new(&cfg).unwrap();
        prop_assert_eq!((layout.rows(), layout.cols()), hall_dims(&cfg));
        for (r, link) in layout.links().enumerate() {
            prop_assert_eq!(layout.row_index(link).unwrap(), r + 1);
        }
        for c in 1..=layout.cols() {
            prop_assert_eq!(layout.col_index(layout.variable(c).unwrap()).unwrap(), c);
        }
    }

    #[test]
    fn nonzeros_match_row_support(cfg in arb_config(), seed in any::<u64>()) {
        let ch = sample_channels(&cfg, seed, ScalarField::Complex).unwrap();
        let h = build_hall(&cfg, &ch).unwrap();
        // row (k, j, p, q) touches N_k - d_k columns of U_k and M_j - d_j of V_j
        let expected: usize = HallLayout::new(&cfg)
            .unwrap()
            .links()
            .map(|l| cfg.pair(l.k - 1).rx_free() + cfg.pair(l.j - 1).tx_free())
            .sum();
        prop_assert_eq!(h.nonzero_count(), expected);
    }

    #[test]
    fn residual_equals_projected_interference(cfg in arb_config(), seed in any::<u64>()) {
        let ch = sample_channels(&cfg, seed, ScalarField::Complex).unwrap();
        let tilde = ReducedTransceivers::random(&cfg, seed ^ 0x55);
        let f = residual(&cfg, &ch, &tilde).unwrap();
        let t = reconstruct(&cfg, &tilde).unwrap();
        let layout = HallLayout::new(&cfg).unwrap();
        for (r, l) in layout.links().enumerate() {
            let block = t.u[l.k - 1].adjoint() * ch.complex(l.k - 1, l.j - 1) * &t.v[l.j - 1];
            let want = block[(l.p - 1, l.q - 1)];
            prop_assert!((f[r] - want).norm() <= 1e-9 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn variable_vector_round_trips(cfg in arb_config(), seed in any::<u64>()) {
        let layout = HallLayout::new(&cfg).unwrap();
        let tilde = ReducedTransceivers::random(&cfg, seed);
        let back = from_vector(&layout, &to_vector(&layout, &tilde)).unwrap();
        prop_assert_eq!(back, tilde);
    }
}

/// Central differences on a bilinear map are exact up to rounding.
fn finite_difference_jacobian(cfg: &NetworkConfig, ch: &ia_kit::ChannelSet, at: &ReducedTransceivers) -> DMatrix<C64> {
    let layout = HallLayout::new(cfg).unwrap();
    let x0 = to_vector(&layout, at);
    let step = 1e-4;
    let mut out = DMatrix::zeros(layout.rows(), layout.cols());
    for c in 0..layout.cols() {
        let mut plus = x0.clone();
        let mut minus = x0.clone();
        plus[c] += C64::new(step, 0.0);
        minus[c] -= C64::new(step, 0.0);
        let fp = residual(cfg, ch, &from_vector(&layout, &plus).unwrap()).unwrap();
        let fm = residual(cfg, ch, &from_vector(&layout, &minus).unwrap()).unwrap();
        for r in 0..layout.rows() {
            out[(r, c)] = (fp[r] - fm[r]) / (2.0 * step);
        }
    }
    out
}

#[test]
fn coefficient_matrix_is_the_jacobian_at_zero() {
    for (i, cfg) in common::corpus(0x1ac0, 12, common::SMALL).iter().enumerate() {
        let ch = sample_channels(cfg, i as u64, ScalarField::Complex).unwrap();
        let h = build_hall(cfg, &ch).unwrap();
        let fd = finite_difference_jacobian(cfg, &ch, &ReducedTransceivers::zeros(cfg));
        let err = (&fd - complex(&h)).norm() / complex(&h).norm();
        assert!(err < 1e-9, "{cfg}: relative error {err}");
    }
}

#[test]
fn analytic_jacobian_matches_away_from_zero() {
    for (i, cfg) in common::corpus(0x1ac1, 12, common::SMALL).iter().enumerate() {
        let ch = sample_channels(cfg, i as u64, ScalarField::Complex).unwrap();
        let at = ReducedTransceivers::random(cfg, 99 + i as u64);
        let j = jacobian(cfg, &ch, &at).unwrap();
        let fd = finite_difference_jacobian(cfg, &ch, &at);
        let err = (&fd - &j).norm() / j.norm();
        assert!(err < 1e-8, "{cfg}: relative error {err}");
    }
}

#[test]
fn prime_channels_are_rejected_by_the_residual() {
    let cfg = NetworkConfig::symmetric(3, 2, 2, 1).unwrap();
    let ch = sample_channels(&cfg, 0, ScalarField::Prime(ia_kit::field::DEFAULT_PRIME)).unwrap();
    assert!(residual(&cfg, &ch, &ReducedTransceivers::zeros(&cfg)).is_err());
    assert_eq!(
        build_hall(&cfg, &ch).unwrap().field(),
        ScalarField::Prime(ia_kit::field::DEFAULT_PRIME)
    );
}
