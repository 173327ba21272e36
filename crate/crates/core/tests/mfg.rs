use islsim_core::mfg::*;
use islsim_core::Scenario;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_scenario() -> Scenario {
    Scenario {
        num_satellites: 4,
        num_planes: 1,
        num_slots: 40,
        grid_cells: 50,
        ..Scenario::default()
    }
}

fn model(scn: &Scenario) -> MfgModel<f64> {
    let eph = scn.ephemeris(3).unwrap();
    MfgModel::from_scenario(scn, &eph, 0).unwrap()
}

fn mass_sup(a: &[f64], b: &[f64], dc: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() * dc).fold(0.0, f64::max)
}

#[test]
fn one_step_value_is_dt_times_best_reward() {
    let mut scn = small_scenario();
    scn.penalty_weight = 0.0;
    scn.coupling = 0.0;
    let mut m = model(&scn);
    m.env.truncate(1);
    let mu = vec![uniform_density(&m.grid, 100e3, 300e3)];
    let v = solve_hjb(&m, &mu, 0.0).unwrap();

    let (b, u, kappa) = (m.bandwidth, m.game.rate_unit, m.kappa);
    let c = m.game.energy_weight * m.game.slot_duration;
    let e = m.env[0];
    for i in 0..m.grid.cells {
        let charge = m.grid.center(i);
        let ceiling = if e.illuminated { e.harvest + charge / e.remaining_eclipse } else { charge / e.remaining_eclipse };
        let cap = b * (1.0 + ceiling.min(m.energy.static_cap) / kappa).log2();
        let r = (b * (b / (u * c * kappa * std::f64::consts::LN_2)).log2()).clamp(0.0, cap);
        let power = kappa * ((r / b).exp2() - 1.0);
        let expected = m.dt * (r / u - c * power) / m.game.slot_duration;
        assert!((v.policy[0][i] - r).abs() <= 1e-9 * r.max(1.0), "cell {i}");
        assert!((v.values[0][i] - expected).abs() <= 1e-12 * expected.abs().max(1.0), "cell {i}");
    }
    assert!(v.values[1].iter().all(|x| *x == 0.0));
}

#[test]
fn zero_reward_gives_zero_value() {
    let mut scn = small_scenario();
    scn.coupling = 0.0;
    let mut m = model(&scn);
    m.dual = 1.0;
    let mu = vec![uniform_density(&m.grid, 100e3, 300e3); m.steps()];
    let v = solve_hjb(&m, &mu, 0.0).unwrap();
    assert!(v.values.iter().flatten().all(|x| *x == 0.0));
    assert!(v.policy.iter().flatten().all(|x| *x == 0.0));
}

#[test]
fn value_nonincreasing_in_coupling() {
    let scn = small_scenario();
    let mut m = model(&scn);
    let mu = vec![uniform_density(&m.grid, 100e3, 300e3); m.steps()];
    let mut prev: Option<Vec<Vec<f64>>> = None;
    for k in [0.0, 1.0, 10.0, 50.0] {
        m.coupling = k;
        let v = solve_hjb(&m, &mu, 0.0).unwrap().values;
        if let Some(p) = &prev {
            for (a, b) in p.iter().flatten().zip(v.iter().flatten()) {
                assert!(*b <= *a + 1e-12 * a.abs().max(1.0));
            }
        }
        prev = Some(v);
    }
}

#[test]
fn hjb_rejects_unstable_viscosity() {
    let m = model(&small_scenario());
    let mu = vec![uniform_density(&m.grid, 100e3, 300e3); m.steps()];
    let dc = m.grid.width();
    let nu = dc * dc / m.dt;
    match solve_hjb(&m, &mu, nu) {
        Err(MfgError::Cfl { max_dt, .. }) => assert!((max_dt - 0.5 * dc * dc / nu).abs() < 1e-9 * max_dt),
        other => panic!("expected CFL error, got {other:?}"),
    }
    assert!(solve_hjb(&m, &mu, 0.4 * dc * dc / m.dt).is_ok());
}

const SCHEMES: [FpkScheme; 2] = [FpkScheme::Upwind, FpkScheme::Characteristics { particles_per_cell: 8 }];

#[test]
fn zero_drift_leaves_density_unchanged() {
    let g = Grid::new(0.0, 100.0, 100).unwrap();
    let mu0 = uniform_density(&g, 20.0, 60.0);
    for scheme in SCHEMES {
        let out = advect_fpk(&mu0, &vec![vec![0.0; 100]; 50], &g, 0.5, scheme).unwrap();
        assert!(mass_sup(out.last().unwrap(), &mu0, g.width()) < 1e-15);
    }
}

#[test]
fn dirac_follows_characteristic() {
    let g = Grid::new(0.0, 100.0, 100).unwrap();
    let (c0, v, dt, steps) = (20.5, 3.0, 0.25, 40);
    for scheme in SCHEMES {
        let out = advect_fpk(&g.dirac(c0), &vec![vec![v; 100]; steps], &g, dt, scheme).unwrap();
        let last = out.last().unwrap();
        let target = c0 + v * dt * steps as f64;
        assert!((g.mean(last) - target).abs() <= g.width(), "{scheme:?}");
        let peak = (0..100).max_by(|&a, &b| last[a].total_cmp(&last[b])).unwrap();
        assert!((g.center(peak) - target).abs() <= g.width(), "{scheme:?}");
    }
}

#[test]
fn mass_conserved_over_thousand_steps() {
    let g = Grid::new(40e3, 400e3, 200).unwrap();
    let dt = 1.0;
    let drift: Vec<Vec<f64>> = (0..1000)
        .map(|k| (0..200).map(|i| 900.0 * ((k as f64) / 80.0 + i as f64 / 30.0).sin()).collect())
        .collect();
    let mu0 = uniform_density(&g, 100e3, 300e3);
    for scheme in SCHEMES {
        let out = advect_fpk(&mu0, &drift, &g, dt, scheme).unwrap();
        assert_eq!(out.len(), 1001);
        for mu in &out {
            assert!((g.mass(mu) - 1.0).abs() <= 1e-6);
            assert!(mu.iter().all(|x| *x >= 0.0));
        }
    }
}

#[test]
fn fpk_rejects_cfl_violation() {
    let g = Grid::new(0.0, 10.0, 10).unwrap();
    let mu0 = g.dirac(5.0);
    for scheme in SCHEMES {
        assert!(matches!(advect_fpk(&mu0, &[vec![5.0; 10]], &g, 1.0, scheme), Err(MfgError::Cfl { .. })));
    }
}

#[test]
fn decoupled_equilibrium_is_one_pass() {
    let mut scn = small_scenario();
    scn.coupling = 0.0;
    let m = model(&scn);
    let mu0 = uniform_density(&m.grid, 100e3, 300e3);
    let sol = solve_mfe(&m, &mu0, 0.0, 20, 1e-6).unwrap();
    assert_eq!(sol.iterations, 1);
    assert!(sol.converged);
    let pushed = advect_fpk(&mu0, &policy_drift(&m, &sol.value.policy), &m.grid, m.dt, m.fpk).unwrap();
    assert_eq!(pushed, sol.density);
}

#[test]
fn equilibrium_is_a_fixed_point() {
    let m = model(&small_scenario());
    let mu0 = uniform_density(&m.grid, 100e3, 300e3);
    let tol = 1e-7;
    let sol = solve_mfe(&m, &mu0, m.default_viscosity(1e-3), 80, tol).unwrap();
    assert!(sol.converged, "change {}", sol.change);
    let again = solve_hjb(&m, &sol.density, 0.0).unwrap();
    assert_eq!(again.policy, sol.value.policy);
    let pushed = advect_fpk(&mu0, &policy_drift(&m, &again.policy), &m.grid, m.dt, m.fpk).unwrap();
    let gap = pushed.iter().zip(&sol.density).map(|(a, b)| mass_sup(a, b, m.grid.width())).fold(0.0, f64::max);
    assert!(gap <= 10.0 * tol, "pushforward moved μ* by {gap}");
    for mu in &sol.density {
        assert!((m.grid.mass(mu) - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn equilibrium_policy_nondecreasing_in_charge() {
    let m = model(&small_scenario());
    let mu0 = uniform_density(&m.grid, 100e3, 300e3);
    let sol = solve_mfe(&m, &mu0, m.default_viscosity(1e-3), 60, 1e-6).unwrap();
    for (k, row) in sol.value.policy.iter().enumerate() {
        for i in 1..row.len() {
            assert!(row[i] >= row[i - 1] * (1.0 - 1e-12), "step {k} cell {i}: {} < {}", row[i], row[i - 1]);
        }
    }
}

/// Optimal transport cost between two discrete measures by linear programming.
fn lp_transport(xs: &[f64], a: &[f64], ys: &[f64], b: &[f64]) -> f64 {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = xs
        .iter()
        .map(|x| ys.iter().map(|y| p.add_var((x - y).abs(), (0.0, f64::INFINITY))).collect())
        .collect();
    for (i, ai) in a.iter().enumerate() {
        let row: Vec<_> = vars[i].iter().map(|v| (*v, 1.0)).collect();
        p.add_constraint(&row, ComparisonOp::Eq, *ai);
    }
    for (j, bj) in b.iter().enumerate() {
        let col: Vec<_> = vars.iter().map(|r| (r[j], 1.0)).collect();
        p.add_constraint(&col, ComparisonOp::Eq, *bj);
    }
    p.solve().unwrap().objective()
}

fn five_point(g: &Grid<f64>, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut cells: Vec<usize> = Vec::new();
    while cells.len() < 5 {
        let c = rng.random_range(0..g.cells);
        if !cells.contains(&c) {
            cells.push(c);
        }
    }
    let w: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|x| x / total).collect();
    let mut mu = vec![0.0; g.cells];
    for (c, wi) in cells.iter().zip(&w) {
        mu[*c] += wi / g.width();
    }
    (cells.iter().map(|&c| g.center(c)).collect(), w, mu)
}

#[test]
fn w1_matches_transport_lp() {
    let g = Grid::new(0.0, 1.0, 40).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (xa, wa, ma) = five_point(&g, &mut rng);
        let (xb, wb, mb) = five_point(&g, &mut rng);
        let lp = lp_transport(&xa, &wa, &xb, &wb);
        let w = wasserstein1(&ma, &mb, &g).unwrap();
        assert!((w - lp).abs() <= 1e-8, "W1 {w} vs LP {lp}");
    }
}

#[test]
fn lipschitz_ratio_below_theory() {
    let scn = Scenario::default();
    let game = scn.game_params();
    let g = Grid::new(scn.floor_j, scn.capacity_j, 200).unwrap();
    let (emp, theory) = lipschitz_bound_check(&g, &game, 0.2, 10.0, 1000, 5).unwrap();
    assert!(emp > 0.0);
    assert!(emp <= theory, "{emp} > {theory}");
    let (_, doubled) = lipschitz_bound_check(&g, &game, 0.4, 10.0, 10, 5).unwrap();
    assert!((doubled - 2.0 * theory).abs() <= 1e-12 * doubled);
}

#[test]
fn gap_study_rejects_bad_sizes() {
    let m = model(&small_scenario());
    let cfg = GapConfig { initial_low: 100e3, initial_high: 300e3, viscosity: 0.0, max_picard: 5, tol: 1e-6, repetitions: 1, seed: 1 };
    assert!(matches!(gap_study(&m, &[8], &cfg), Err(MfgError::TooFewSizes(_))));
    assert!(gap_study(&m, &[16, 8], &cfg).is_err());
    let gs = gap_study(&m, &[8, 32], &cfg).unwrap();
    assert!(gs.gaps.iter().all(|g| *g > 0.0 && g.is_finite()));
    assert!(gs.slope.is_finite());
}

fn density(g: &Grid<f64>, raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total / g.width()).collect()
}

proptest! {
    #[test]
    fn w1_metric_axioms(
        a in prop::collection::vec(0.0f64..1.0, 30),
        b in prop::collection::vec(0.0f64..1.0, 30),
        c in prop::collection::vec(0.0f64..1.0, 30),
    ) {
        prop_assume!(a.iter().sum::<f64>() > 0.1 && b.iter().sum::<f64>() > 0.1 && c.iter().sum::<f64>() > 0.1);
        let g = Grid::new(0.0, 3.0, 30).unwrap();
        let (a, b, c) = (density(&g, &a), density(&g, &b), density(&g, &c));
        let ab = wasserstein1(&a, &b, &g).unwrap();
        let ba = wasserstein1(&b, &a, &g).unwrap();
        let bc = wasserstein1(&b, &c, &g).unwrap();
        let ac = wasserstein1(&a, &c, &g).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab >= 0.0);
        prop_assert!(wasserstein1(&a, &a, &g).unwrap() == 0.0);
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn empirical_measure_is_normalized(charges in prop::collection::vec(0.0f64..400e3, 1..300)) {
        let g = Grid::new(40e3, 400e3, 200).unwrap();
        let mu = empirical_measure(&charges, &g);
        prop_assert!((g.mass(&mu) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn upwind_step_conserves_mass(raw in prop::collection::vec(0.0f64..1.0, 20), drift in prop::collection::vec(-1.0f64..1.0, 20)) {
        prop_assume!(raw.iter().sum::<f64>() > 0.1);
        let g = Grid::new(0.0, 20.0, 20).unwrap();
        let mu0 = density(&g, &raw);
        let out = advect_fpk(&mu0, &[drift], &g, 0.45, FpkScheme::Upwind).unwrap();
        prop_assert!((g.mass(&out[1]) - 1.0).abs() <= 1e-12);
        prop_assert!(out[1].iter().all(|x| *x >= 0.0));
    }
}
