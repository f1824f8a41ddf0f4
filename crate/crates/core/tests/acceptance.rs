//! Acceptance criteria, one line each. Runs as a plain binary so the report
//! is always printed; exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dtqw::bloch::{edge_mode_count, invariants_1d, strip_spectrum, winding_number, Gap, KGrid};
use dtqw::coin_field::{abbe_ratio, domain_profile, ring_wall_field, AnglePair, CoinField, OpticsConfig};
use dtqw::decoherence::{channel_step, evolve, Channel, DecoherenceConfig, EvolveOptions, Initial};
use dtqw::edge::{
    decay_rate, droplet_transport, edge_state_size_sweep, island_angles, linear_fit, measure_decay, r_squared,
    wall_angles, wall_edge_state, DropletSetup, EdgeState,
};
use dtqw::lattice::{LatticeGeometry, Spin};
use dtqw::protocol::{ChiralFrame, StepOperator, WalkProtocol};
use dtqw::state::{DensityOperator, SpinorState};
use dtqw::Complex64;
use nalgebra::DMatrix;

type Checks = Vec<(bool, String)>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> dtqw::Result<Checks>,
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn check(ok: bool, detail: String) -> (bool, String) {
    (ok, detail)
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn fig3_ratio() -> f64 {
    abbe_ratio(&OpticsConfig::setup_2d()).unwrap()
}

fn fig3_edge(protocol: &WalkProtocol) -> dtqw::Result<(CoinField, EdgeState)> {
    let (field, e) = wall_edge_state(protocol, Some(fig3_ratio()))?;
    Ok((field, e.ok_or_else(|| dtqw::Error::Invariant("no edge state at the wall".into()))?))
}

fn chiral_symmetry() -> dtqw::Result<Checks> {
    let g = LatticeGeometry::ring(16)?;
    let mut out = Vec::new();
    for frame in [ChiralFrame::Prime, ChiralFrame::DoublePrime, ChiralFrame::SigmaZ] {
        let mut worst = 0.0f64;
        for angles in [(PI / 2.0, 0.0), (0.3, -1.1), (-PI / 2.0, 3.0 * PI / 4.0), (2.0, 2.9)] {
            let f = CoinField::homogeneous(&g, AnglePair::new(angles.0, angles.1));
            let w = StepOperator::compile(&frame.protocol(), &f)?.matrix();
            let gamma: DMatrix<Complex64> = frame.gamma().dense(g.basis_size());
            let diff = &gamma * &w * gamma.adjoint() - w.adjoint();
            worst = worst.max(diff.norm());
        }
        out.push(check(worst <= 1e-12, format!("{:?} max |GWG+ - W+| = {worst:.1e}", frame)));
    }
    Ok(out)
}

fn winding_anchors() -> dtqw::Result<Checks> {
    let h = AnglePair::new(PI / 2.0, 0.0);
    let mut out = Vec::new();
    for n in [128, 512] {
        let grid = KGrid::uniform(n);
        let a = winding_number(ChiralFrame::Prime, h, &grid)?;
        let b = winding_number(ChiralFrame::DoublePrime, h, &grid)?;
        out.push(check(a == 1 && b == 0, format!("{n} k: nu' = {a}, nu'' = {b}")));
    }
    Ok(out)
}

fn invariant_anchors() -> dtqw::Result<Checks> {
    let (left, right) = wall_angles();
    let l = invariants_1d(left)?;
    let r = invariants_1d(right)?;
    Ok(vec![check(l == (0, 0) && r == (1, 0), format!("left {l:?}, right {r:?}"))])
}

fn strip_edges() -> dtqw::Result<Checks> {
    let (inside, outside) = island_angles();
    let g = LatticeGeometry::ring(100)?;
    let field = domain_profile(&g, -20, 40, inside, outside, None)?;
    let strip = strip_spectrum(&field, 256)?;
    let mut out = Vec::new();
    for gap in [Gap::Zero, Gap::Pi] {
        let c = edge_mode_count(&strip, gap)?;
        let ok = c.len() == 2 && c[0].abs() == 2 && c[0] == -c[1];
        out.push(check(ok, format!("{gap:?} gap modes per edge {c:?}")));
        let vg: Vec<f64> = strip.edge_states().filter(|(_, s)| s.gap == Some(gap)).filter_map(|(_, s)| s.v_g).collect();
        let unit = vg.iter().filter(|v| within(v.abs(), 1.0, 1e-3)).count();
        let frac = unit as f64 / vg.len().max(1) as f64;
        out.push(check(frac >= 0.8, format!("{gap:?} gap |v_g| = 1 for {unit}/{} in-gap edge states", vg.len())));
    }
    Ok(out)
}

fn one_step_decay() -> dtqw::Result<Checks> {
    let protocol = WalkProtocol::split_step_1d();
    let (field, e) = fig3_edge(&protocol)?;
    let op = StepOperator::compile(&protocol, &field)?;
    let mut stepped = e.state.clone();
    op.apply_state(&mut stepped)?;
    let rho = DensityOperator::from_pure(&e.state)?;
    let mut out = Vec::new();
    for p in [0.01, 0.05, 0.2] {
        let cfg = DecoherenceConfig::new(Channel::Spin, p)?;
        let channel = channel_step(&rho, &protocol, &field, &cfg)?.expectation(&e.state)?;
        // Unitary step followed by a spin measurement with probability p, by hand.
        let projected: f64 = [Spin::Up, Spin::Down]
            .iter()
            .map(|&s| {
                let mut part = stepped.clone();
                for (i, a) in part.amplitudes_mut().iter_mut().enumerate() {
                    if i % 2 != s.index() {
                        *a = Complex64::new(0.0, 0.0);
                    }
                }
                e.state.inner(&part).unwrap().norm_sqr()
            })
            .sum();
        let direct = (1.0 - p) * e.state.inner(&stepped)?.norm_sqr() + p * projected;
        let gamma = decay_rate(&e, Channel::Spin, p).gamma;
        let dev = (channel - (1.0 - gamma)).abs().max((direct - (1.0 - gamma)).abs());
        out.push(check(dev <= 1e-10, format!("p {p}: Pi(1) = {channel:.12}, 1 - gamma = {:.12}", 1.0 - gamma)));
    }
    Ok(out)
}

fn decay_law() -> dtqw::Result<Checks> {
    let protocol = WalkProtocol::split_step_1d();
    let (field, e) = fig3_edge(&protocol)?;
    let mut out = Vec::new();
    for p in [0.01, 0.02, 0.05] {
        let m = measure_decay(&e, &protocol, &field, &DecoherenceConfig::new(Channel::Spin, p)?, 50)?;
        let rel = m.fitted_gamma / m.prediction.gamma - 1.0;
        out.push(check(
            rel.abs() <= 0.10,
            format!("p {p}: fitted {:.5} vs {:.5} ({:+.1}%)", m.fitted_gamma, m.prediction.gamma, 100.0 * rel),
        ));
    }
    let m = measure_decay(&e, &protocol, &field, &DecoherenceConfig::new(Channel::Spin, 0.5)?, 100)?;
    let excess: Vec<f64> = (0..=100).map(|n| (m.survival[n] / m.prediction.survival(n)).ln()).collect();
    let above = (10..=100).all(|n| excess[n] > 0.0);
    let growing = excess[100] > excess[50] && excess[50] > excess[20];
    out.push(check(
        above && growing,
        format!(
            "p 0.5: ln(Pi / (1 - gamma)^n) = {:.2}, {:.2}, {:.2} at n = 20, 50, 100",
            excess[20], excess[50], excess[100]
        ),
    ));
    Ok(out)
}

fn sigma_z_immunity() -> dtqw::Result<Checks> {
    let protocol = WalkProtocol::sigma_z_frame();
    let (field, e) = fig3_edge(&protocol)?;
    let cfg = DecoherenceConfig::new(Channel::Spin, 0.5)?;
    let stroboscopic = measure_decay(&e, &protocol, &field, &cfg, 100)?;
    let worst = stroboscopic.survival.iter().map(|s| (1.0 - s).abs()).fold(0.0, f64::max);
    let per_primitive = measure_decay(&e, &protocol, &field, &cfg.per_primitive(true), 100)?;
    let last = per_primitive.survival[100];
    Ok(vec![
        check(worst <= 1e-8, format!("per step: max |1 - Pi(n)| = {worst:.1e}")),
        check(last < 1.0 - 1e-3, format!("per primitive: Pi(100) = {last:.4}")),
    ])
}

fn edge_overlap() -> dtqw::Result<Checks> {
    let (field, e) = fig3_edge(&WalkProtocol::split_step_1d())?;
    let site = field.geometry().site_at(&[0])?;
    let overlap = e.state.amplitude(site, Spin::Down).norm_sqr() / e.state.norm_sqr();
    Ok(vec![check(within(overlap, 0.30, 0.05), format!("|<E|0,down>|^2 = {overlap:.4}"))])
}

fn droplet() -> dtqw::Result<Checks> {
    let setup = DropletSetup::standard();
    let clean = droplet_transport(&setup, &DecoherenceConfig::new(Channel::None, 0.0)?, 400)?;
    let plateau = clean.plateau(200, 400);
    let mut out = vec![
        check(within(clean.front_speed, 1.0, 0.1), format!("front speed {:.3} sites/step", clean.front_speed)),
        check(within(plateau, 0.53, 0.08), format!("P(F) plateau over [200, 400] = {plateau:.4}")),
    ];
    let period = clean.period.unwrap_or(f64::NAN);
    out.push(check(
        (period / clean.contour_length - 1.0).abs() <= 0.10,
        format!("L period {period} vs contour length {:.2}", clean.contour_length),
    ));
    let cfg = DecoherenceConfig::new(Channel::Spin, 0.05)?.with_trajectories(2000, 20);
    let noisy = droplet_transport(&setup, &cfg, 400)?;
    let xs: Vec<f64> = (100..=400).map(|n| n as f64).collect();
    let ys: Vec<f64> = (100..=400).map(|n| noisy.p_f[n].ln()).collect();
    let (slope, _) = linear_fit(&xs, &ys);
    let r2 = r_squared(&xs, &ys);
    out.push(check(slope < 0.0 && r2 >= 0.9, format!("p 0.05: ln P(F) slope {slope:.5}, R^2 {r2:.3}")));
    let noisy_period = noisy.period.unwrap_or(f64::NAN);
    out.push(check(
        (noisy_period / period - 1.0).abs() <= 0.10,
        format!("p 0.05: L period {noisy_period} vs {period}"),
    ));
    Ok(out)
}

fn trajectory_oracle() -> dtqw::Result<Checks> {
    let g = LatticeGeometry::ring(8)?;
    let (left, right) = wall_angles();
    let field = ring_wall_field(&g, left, right, None)?;
    let protocol = WalkProtocol::split_step_1d();
    let init = Initial::Pure(SpinorState::basis(&g, &[0], Spin::Down)?);
    let mut opts = EvolveOptions::new(10);
    opts.distribution_every = Some(10);
    let n_traj = 10_000;
    let dense = evolve(&init, &protocol, &field, &DecoherenceConfig::new(Channel::Spin, 0.1)?, &opts, &[])?;
    let sampled = evolve(
        &init,
        &protocol,
        &field,
        &DecoherenceConfig::new(Channel::Spin, 0.1)?.with_trajectories(n_traj, 11),
        &opts,
        &[],
    )?;
    let (d, t) = (&dense.distributions.last().unwrap().1, &sampled.distributions.last().unwrap().1);
    let mut worst = 0.0f64;
    for (p, q) in d.iter().zip(t) {
        let sigma = (p * (1.0 - p) / n_traj as f64).sqrt();
        worst = worst.max((p - q).abs() / sigma.max(1e-300));
    }
    Ok(vec![check(worst <= 3.0, format!("max site deviation {worst:.2} sigma"))])
}

fn optics_anchors() -> dtqw::Result<Checks> {
    let r1 = abbe_ratio(&OpticsConfig::setup_1d())?;
    let r2 = abbe_ratio(&OpticsConfig::setup_2d())?;
    Ok(vec![
        check((r1 / 4.8 - 1.0).abs() <= 0.02, format!("1D setup R_A/a = {r1:.4} vs 4.8")),
        check((r2 / 0.8 - 1.0).abs() <= 0.02, format!("2D setup R_A/a = {r2:.4} vs 0.8")),
    ])
}

fn size_trend() -> dtqw::Result<Checks> {
    let ratios = [0.2, 0.5, 1.0, 1.25, 2.0];
    let rows = edge_state_size_sweep(&WalkProtocol::split_step_1d(), &ratios)?;
    let sizes: Vec<f64> = rows.iter().map(|r| r.rms_size.unwrap_or(f64::NAN)).collect();
    let monotone = sizes.windows(2).all(|w| w[1] <= w[0]);
    Ok(vec![
        check(monotone, format!("RMS sizes {sizes:.4?} for a/R_A {ratios:?}")),
        check(sizes[3] <= 1.5, format!("RMS size at a/R_A = 1.25: {:.4}", sizes[3])),
    ])
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "chiral symmetry identities", budget: secs(1), run: chiral_symmetry },
        Criterion { id: 2, name: "winding anchors", budget: secs(1), run: winding_anchors },
        Criterion { id: 3, name: "1D invariant anchors", budget: secs(1), run: invariant_anchors },
        Criterion { id: 4, name: "strip edge modes", budget: secs(120), run: strip_edges },
        Criterion { id: 5, name: "one-step decay exactness", budget: secs(10), run: one_step_decay },
        Criterion { id: 6, name: "decay-law regression", budget: secs(60), run: decay_law },
        Criterion { id: 7, name: "sigma_z frame immunity", budget: secs(30), run: sigma_z_immunity },
        Criterion { id: 8, name: "edge overlap anchor", budget: secs(10), run: edge_overlap },
        Criterion { id: 9, name: "droplet transport", budget: secs(20 * 60), run: droplet },
        Criterion { id: 10, name: "trajectory/channel equivalence", budget: secs(30), run: trajectory_oracle },
        Criterion { id: 11, name: "optics anchors", budget: secs(1), run: optics_anchors },
        Criterion { id: 12, name: "edge-size trend", budget: secs(120), run: size_trend },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for c in &criteria {
        let tag = format!("AC{:02}", c.id);
        if !filter.is_empty() && !filter.iter().any(|f| tag.contains(f.as_str()) || c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let mut checks = match result {
            Ok(checks) => checks,
            Err(e) => vec![(false, format!("error: {e}"))],
        };
        checks.push(check(
            elapsed <= c.budget,
            format!("runtime {:.2} s (budget {} s)", elapsed.as_secs_f64(), c.budget.as_secs()),
        ));
        let pass = checks.iter().all(|(ok, _)| *ok);
        let details: Vec<String> =
            checks.iter().map(|(ok, d)| if *ok { d.clone() } else { format!("[x] {d}") }).collect();
        println!("{tag} {} {}: {}", if pass { "PASS" } else { "FAIL" }, c.name, details.join("; "));
        if !pass {
            failed.push(tag);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
