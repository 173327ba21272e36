use islsim_core::constellation::{build_topology, propagate, ConstellationConfig};
use islsim_core::energy::{dynamic_power_bound, step_battery, step_battery_with_loss, BatteryTrace, EnergyParams};
use islsim_core::link::{capacity, power_for_rate, LinkParams, BOLTZMANN, SPEED_OF_LIGHT};
use islsim_core::metrics::{energy_efficiency, esr, fvr};
use islsim_core::solvers::{dual_update, hbag_slot, slot_game, Variant};
use islsim_core::traffic::{conservation_residual, delivered, FlowAllocation, LinkSet};
use islsim_core::Scenario;
use proptest::prelude::*;

fn constellation(m: usize, planes: usize, theta: f64, slots: usize) -> ConstellationConfig<f64> {
    ConstellationConfig {
        num_satellites: m,
        num_planes: planes,
        altitude: 550e3,
        inclination: 53f64.to_radians(),
        orbit_period: 5400.0,
        eclipse_fraction: theta,
        slot_duration: 5400.0 / slots as f64,
        num_slots: slots,
        earth_radius: 6371e3,
    }
}

fn link() -> LinkParams<f64> {
    LinkParams {
        carrier_frequency: SPEED_OF_LIGHT / 1.55e-6,
        bandwidth: 1e10,
        tx_gain: 1e3,
        rx_gain: 1e3,
        boltzmann: BOLTZMANN,
        noise_temperature: 290.0,
        speed_of_light: SPEED_OF_LIGHT,
        budget_offset: 1e18,
    }
}

fn energy() -> EnergyParams<f64> {
    EnergyParams {
        panel_efficiency: 0.3,
        irradiance: 1361.0,
        panel_area: 2.5,
        capacity: 400e3,
        floor: 40e3,
        initial_charge: 320e3,
        base_load: 55.0,
        static_cap: 10.0,
    }
}

fn small_scenario(m: usize, flows: usize, seed: u64) -> Scenario {
    let mut s = Scenario::default();
    s.num_satellites = m;
    s.num_planes = 2;
    s.num_slots = 3;
    s.num_flows = flows;
    s.max_iterations = 30;
    s.seed = seed;
    s
}

proptest! {
    #[test]
    fn eclipse_share_matches_theta(theta in 0.0f64..=1.0, planes in 1usize..4, per in 2usize..6, seed in any::<u64>()) {
        let slots = 60;
        let eph = propagate(&constellation(planes * per, planes, theta, slots), seed).unwrap();
        for m in 0..eph.num_satellites {
            let dark = (0..slots).filter(|&t| !eph.illuminated(m, t)).count() as f64 / slots as f64;
            prop_assert!((dark - theta).abs() <= 1.0 / slots as f64 + 1e-12, "m {m}: {dark} vs {theta}");
        }
    }

    #[test]
    fn remaining_eclipse_counts_down_inside_an_eclipse(theta in 0.1f64..0.9, seed in any::<u64>()) {
        let slots = 90;
        let cfg = constellation(8, 2, theta, slots);
        let eph = propagate(&cfg, seed).unwrap();
        for m in 0..8 {
            for t in 1..slots {
                if !eph.illuminated(m, t - 1) && !eph.illuminated(m, t) {
                    let drop = eph.remaining_eclipse(m, t - 1) - eph.remaining_eclipse(m, t);
                    prop_assert!((drop - cfg.slot_duration).abs() <= 1e-6 * cfg.orbit_period);
                }
            }
        }
    }

    #[test]
    fn topology_degree_at_most_four(planes in 1usize..5, per in 2usize..8, t in 0usize..10, seed in any::<u64>()) {
        let eph = propagate(&constellation(planes * per, planes, 0.38, 10), seed).unwrap();
        let topo = build_topology(&eph, t);
        for m in 0..topo.num_satellites {
            prop_assert!(topo.degree(m) <= 4);
            for &n in &topo.neighbors[m] {
                prop_assert!(topo.is_adjacent(n, m));
            }
        }
    }

    #[test]
    fn power_for_rate_is_strictly_convex(a in 0.0f64..3e10, b in 0.0f64..3e10, kappa in 1e-3f64..10.0) {
        prop_assume!((a - b).abs() > 1e6);
        let mid = power_for_rate(0.5 * (a + b), kappa, 1e10);
        prop_assert!(mid < 0.5 * (power_for_rate(a, kappa, 1e10) + power_for_rate(b, kappa, 1e10)));
    }

    #[test]
    fn capacity_inverts_power_for_rate(p in 1e-3f64..100.0, d in 1e5f64..5e6) {
        let lp = link();
        let r = capacity(p, d, &lp).unwrap();
        let back = power_for_rate(r, lp.kappa(d).unwrap(), lp.bandwidth);
        prop_assert!((back - p).abs() <= 1e-10 * p);
    }

    #[test]
    fn battery_step_stays_in_range(c in 0.0f64..=400e3, isl in 0.0f64..50.0, harvest in 0.0f64..1100.0, slot in 1.0f64..300.0) {
        let next = step_battery(c, isl, harvest, &energy(), slot).unwrap();
        prop_assert!((0.0..=400e3).contains(&next));
    }

    #[test]
    fn dynamic_bound_capped_and_monotone(c1 in 0.0f64..400e3, c2 in 0.0f64..400e3, lit in any::<bool>(), h in 0.0f64..1000.0, rem in 1.0f64..3000.0) {
        let p = energy();
        let (lo, hi) = (c1.min(c2), c1.max(c2));
        let b_lo = dynamic_power_bound(lo, lit, h, rem, &p).unwrap();
        let b_hi = dynamic_power_bound(hi, lit, h, rem, &p).unwrap();
        prop_assert!(b_hi <= p.static_cap);
        prop_assert!(b_lo <= b_hi);
    }

    #[test]
    fn eclipse_spending_at_the_bound_never_overdraws(c in 0.0f64..400e3, slots_left in 1usize..40) {
        // Spending the bound each slot with no harvest and no base load drains at most C.
        let mut p = energy();
        p.base_load = 0.0;
        p.static_cap = f64::INFINITY;
        let dt = 30.0;
        let (mut charge, mut spent) = (c, 0.0);
        for k in 0..slots_left {
            let rem = dt * (slots_left - k) as f64;
            let b = dynamic_power_bound(charge, false, 0.0, rem, &p).unwrap();
            spent += b * dt;
            charge = step_battery(charge, b, 0.0, &p, dt).unwrap();
        }
        prop_assert!(spent <= c * (1.0 + 1e-12));
    }

    #[test]
    fn battery_energy_balance(steps in prop::collection::vec((0.0f64..30.0, 0.0f64..1100.0), 1..60), c0 in 0.0f64..=400e3) {
        let p = energy();
        let dt = 60.0;
        let (mut c, mut net, mut clamped, mut lost) = (c0, 0.0, 0.0, 0.0);
        for (isl, h) in steps {
            let (next, loss) = step_battery_with_loss(c, isl, h, &p, dt).unwrap();
            let delta = dt * (h - isl - p.base_load);
            prop_assert!(loss >= 0.0);
            prop_assert!(((c + delta - next).abs() - loss).abs() <= 1e-9);
            net += delta;
            clamped += c + delta - next;
            lost += loss;
            c = next;
        }
        prop_assert!(((c - c0) - (net - clamped)).abs() <= 1e-6);
        prop_assert!(clamped.abs() <= lost + 1e-9);
    }

    #[test]
    fn dual_update_is_nonnegative(duals in prop::collection::vec(0.0f64..10.0, 1..30), seed in any::<u64>(), rho in 0.01f64..10.0) {
        let res: Vec<f64> = duals.iter().enumerate().map(|(i, _)| ((seed.rotate_left(i as u32) % 2001) as f64 - 1000.0) / 100.0).collect();
        prop_assert!(dual_update(&duals, &res, rho, None).iter().all(|v| *v >= 0.0));
        prop_assert!(dual_update(&duals, &res, rho, Some(1.0)).iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn esr_is_one_without_depletion(charges in prop::collection::vec(40_001.0f64..400e3, 4..40)) {
        let mut tr = BatteryTrace::new(4, 40e3);
        for row in charges.chunks_exact(4) {
            tr.push_slot(row, &[true; 4]);
        }
        prop_assume!(tr.num_slots > 0);
        prop_assert_eq!(esr(&tr).unwrap(), 1.0);
    }

    #[test]
    fn energy_efficiency_ignores_slot_length(
        pairs in prop::collection::vec((0.0f64..1e11, 0.1f64..40.0), 1..30),
        d in 0.1f64..600.0,
        k in 0.01f64..100.0,
    ) {
        let (thr, pw): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let a = energy_efficiency(&thr, &pw, d).unwrap();
        let b = energy_efficiency(&thr, &pw, d * k).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn residual_sums_to_zero_over_satellites(m in 2usize..6, flows in 1usize..5, seed in any::<u64>(), fill in 0.0f64..1.0) {
        let scn = small_scenario(2 * m, flows, seed);
        let inputs = scn.assemble(scn.run_seed(0)).unwrap();
        let eph = &inputs.ephemeris;
        let links = LinkSet::from_topology(&build_topology(eph, 0));
        let mut y = FlowAllocation::zeros(inputs.flows.len(), links.num_edges());
        for (i, v) in y.y.iter_mut().enumerate() {
            *v = fill * 1e9 * ((i * 7919 % 13) as f64);
        }
        let r = conservation_residual(&y, &inputs.flows, &links);
        let n = links.num_nodes;
        for w in 0..inputs.flows.len() {
            let s: f64 = r[w * n..(w + 1) * n].iter().sum();
            let scale: f64 = r[w * n..(w + 1) * n].iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            prop_assert!(s.abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn hbag_outputs_are_feasible(m in 2usize..6, flows in 1usize..5, seed in any::<u64>(), v in 0usize..4) {
        let scn = small_scenario(2 * m, flows, seed);
        let inputs = scn.assemble(scn.run_seed(0)).unwrap();
        let setup = inputs.setup();
        let variant = Variant::ALL[v];
        let (game, _) = slot_game(&setup, variant, 0, &inputs.initial_charge).unwrap();
        let mut cfg = scn.solver_config();
        cfg.variant = variant;
        let sol = hbag_slot(&game, &FlowAllocation::zeros(game.flows.len(), game.links.num_edges()), &cfg, false).unwrap();
        prop_assert!(game.is_feasible(&sol.allocation, 1e-9));
        prop_assert!(sol.duals.iter().all(|d| *d >= 0.0));
        for (m, p) in sol.satellite_power.iter().enumerate() {
            prop_assert!(*p <= game.bound[m] + 1e-9);
        }
    }

    #[test]
    fn fully_delivered_flows_have_no_shortfall(m in 2usize..6, flows in 1usize..4, seed in any::<u64>()) {
        // Route each flow along a shortest hop path at exactly its demand.
        let scn = small_scenario(2 * m, flows, seed);
        let inputs = scn.assemble(scn.run_seed(0)).unwrap();
        let topo = build_topology(&inputs.ephemeris, 0);
        let links = LinkSet::from_topology(&topo);
        let mut y = FlowAllocation::zeros(inputs.flows.len(), links.num_edges());
        for (w, f) in inputs.flows.iter().enumerate() {
            let mut prev = vec![usize::MAX; topo.num_satellites];
            let mut queue = std::collections::VecDeque::from([f.source]);
            prev[f.source] = f.source;
            while let Some(u) = queue.pop_front() {
                for &n in &topo.neighbors[u] {
                    if prev[n] == usize::MAX {
                        prev[n] = u;
                        queue.push_back(n);
                    }
                }
            }
            prop_assume!(prev[f.sink] != usize::MAX);
            let mut node = f.sink;
            while node != f.source {
                let e = links.edge(prev[node], node).unwrap();
                y.set(w, e, f.demand);
                node = prev[node];
            }
        }
        prop_assert!(conservation_residual(&y, &inputs.flows, &links).iter().all(|r| r.abs() <= 1e-6));
        let del = delivered(&y, &inputs.flows, &links);
        prop_assert!(fvr(&inputs.flows, &del).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn scenario_save_load_round_trip(m in 1usize..20, theta in 0.0f64..=1.0, cap in 1e5f64..1e6, seed in any::<u64>(), v in 0usize..4) {
        let mut s = Scenario::default();
        s.num_planes = 2;
        s.num_satellites = 2 * m;
        s.eclipse_fraction = theta;
        s.capacity_j = cap;
        s.initial_charge_j = 0.5 * cap;
        s.floor_j = 0.1 * cap;
        s.seed = seed;
        s.variant = Variant::ALL[v];
        let back = Scenario::parse(&s.save()).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.content_hash(), s.content_hash());
    }
}
