use dtqw::bloch::Gap;
use dtqw::coin_field::{ring_wall_field, CoinField, OpticsConfig};
use dtqw::decoherence::{channel_step, Channel, DecoherenceConfig};
use dtqw::edge::{decay_rate, find_edge_states, wall_angles, wall_edge_state};
use dtqw::lattice::LatticeGeometry;
use dtqw::protocol::WalkProtocol;
use dtqw::state::DensityOperator;

fn frames() -> [WalkProtocol; 4] {
    [
        WalkProtocol::split_step_1d(),
        WalkProtocol::frame_prime(),
        WalkProtocol::frame_double_prime(),
        WalkProtocol::sigma_z_frame(),
    ]
}

#[test]
fn edge_states_are_eigenstates_at_both_walls() {
    let g = LatticeGeometry::ring(120).unwrap();
    let (left, right) = wall_angles();
    let optics = OpticsConfig::setup_2d();
    let field = ring_wall_field(&g, left, right, Some(&optics)).unwrap();
    for p in frames() {
        let found = find_edge_states(&p, &field, Gap::Zero, 1e-6).unwrap();
        assert_eq!(found.states.len(), 2);
        assert!(found.warnings.is_empty());
        for e in &found.states {
            assert!(e.residual <= 1e-8, "{}", e.residual);
            assert!(e.epsilon.abs() <= 1e-6);
            assert!(g.displacement(0, e.wall, e.center).abs() <= 5.0);
        }
        // No pi-gap states for the (0,0) | (1,0) landscape.
        assert!(find_edge_states(&p, &field, Gap::Pi, 1e-6).unwrap().states.is_empty());
    }
}

#[test]
fn sigma_z_edge_spins_are_pinned() {
    let g = LatticeGeometry::ring(120).unwrap();
    let (left, right) = wall_angles();
    let field = ring_wall_field(&g, left, right, Some(&OpticsConfig::setup_1d())).unwrap();
    let found = find_edge_states(&WalkProtocol::sigma_z_frame(), &field, Gap::Zero, 1e-6).unwrap();
    for e in &found.states {
        let up = e.spin_factor[0].norm();
        assert!(up < 1e-6 || (up - 1.0).abs() < 1e-6, "{up}");
        assert_eq!(decay_rate(e, Channel::Spin, 0.3).gamma.abs() < 1e-12, true);
    }
}

#[test]
fn spin_rate_matches_compact_form_for_product_states() {
    for p in frames() {
        let (_, e) = wall_edge_state(&p, Some(0.8)).unwrap();
        let e = e.unwrap();
        assert!(e.is_factorized());
        let s4: f64 = e.spin_factor.iter().map(|z| z.norm_sqr().powi(2)).sum();
        for prob in [0.01, 0.2, 1.0] {
            let g = decay_rate(&e, Channel::Spin, prob).gamma;
            assert!((g - prob * (1.0 - s4)).abs() <= 1e-10);
            assert!((0.0..=prob).contains(&g));
            let gp = decay_rate(&e, Channel::Position, prob).gamma;
            assert!((0.0..=prob).contains(&gp));
        }
    }
}

#[test]
fn one_step_survival_is_exact_for_both_channels() {
    let p = WalkProtocol::split_step_1d();
    let (field, e) = wall_edge_state(&p, Some(0.8)).unwrap();
    let e = e.unwrap();
    let rho = DensityOperator::from_pure(&e.state).unwrap();
    for ch in [Channel::Spin, Channel::Position] {
        for prob in [0.01, 0.3] {
            let cfg = DecoherenceConfig::new(ch, prob).unwrap();
            let out = channel_step(&rho, &p, &field, &cfg).unwrap();
            let pi1 = out.expectation(&e.state).unwrap();
            assert!((pi1 - (1.0 - decay_rate(&e, ch, prob).gamma)).abs() <= 1e-10, "{ch:?} {prob}");
        }
    }
}

#[test]
fn coarser_optics_give_larger_edge_states() {
    let p = WalkProtocol::split_step_1d();
    let wide = wall_edge_state(&p, Some(4.8)).unwrap().1.unwrap();
    let narrow = wall_edge_state(&p, Some(0.8)).unwrap().1.unwrap();
    assert!(wide.rms_size > narrow.rms_size);
    assert!((narrow.rms_size - 1.0).abs() < 0.5);
}

#[test]
fn identical_bulks_have_no_edge_states() {
    let g = LatticeGeometry::ring(60).unwrap();
    let (_, right) = wall_angles();
    let f = CoinField::homogeneous(&g, right);
    assert!(find_edge_states(&WalkProtocol::frame_prime(), &f, Gap::Zero, 1e-6).unwrap().states.is_empty());
}
