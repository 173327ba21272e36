//! Self-checks run by `islsim verify`: exact potential, gradient, concavity, W1 and FPK.

use std::time::Instant;

use islsim_core::mfg::{advect_fpk, uniform_density, wasserstein1, FpkScheme, Grid};
use islsim_core::solvers::{slot_game, Variant};
use islsim_core::traffic::FlowAllocation;
use islsim_core::{Scenario, SlotGame};
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ExperimentError;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed statistic and its threshold, human readable.
    pub detail: String,
    pub seconds: f64,
}

impl SuiteReport {
    /// `PASS name: detail`; timing is left out so reports compare equal across runs.
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// A frozen slot game on a small random constellation with random prices and batteries.
pub fn random_game(base: &Scenario, rng: &mut ChaCha8Rng, max_satellites: usize) -> Result<SlotGame, ExperimentError> {
    let sizes: Vec<usize> = (4..=max_satellites.max(4)).step_by(2).collect();
    let mut scn = base.clone();
    scn.num_satellites = sizes[rng.random_range(0..sizes.len())];
    scn.num_planes = 2;
    scn.num_slots = 2;
    scn.num_flows = rng.random_range(1..=4);
    scn.validate()?;
    let inputs = scn.assemble(rng.random())?;
    let setup = inputs.setup();
    let charges: Vec<f64> =
        (0..scn.num_satellites).map(|_| rng.random_range(scn.floor_j..=scn.capacity_j)).collect();
    let (mut game, _) = slot_game(&setup, Variant::V3, 0, &charges)?;
    for d in &mut game.duals {
        *d = rng.random_range(0.0..2.0);
    }
    Ok(game)
}

/// Uniform point in the box, projected onto the power budgets.
pub fn random_feasible(game: &SlotGame, rng: &mut ChaCha8Rng) -> FlowAllocation<f64> {
    let ne = game.links.num_edges();
    let mut y = FlowAllocation::zeros(game.flows.len(), ne);
    for (w, f) in game.flows.iter().enumerate() {
        for e in 0..ne {
            y.set(w, e, rng.random::<f64>() * f.demand);
        }
    }
    game.project_feasible(&y)
}

/// `max |ΔU_m − ΔΦ| / (1 + |ΔΦ|)` over unilateral single-coordinate deviations.
pub fn exact_potential_suite(base: &Scenario, scenarios: usize, deviations: usize, seed: u64) -> Result<SuiteReport, ExperimentError> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..scenarios {
        let game = random_game(base, &mut rng, 10)?;
        let y = random_feasible(&game, &mut rng);
        let ne = game.links.num_edges();
        let mut done = 0;
        let mut attempts = 0;
        while done < deviations && attempts < deviations * 50 {
            attempts += 1;
            let e = rng.random_range(0..ne);
            let w = rng.random_range(0..game.flows.len());
            let m = game.links.from[e];
            let span = game.flows[w].demand;
            let mut delta = (rng.random::<f64>() - 0.5) * span;
            let mut z = y.clone();
            // Budgets are often tight after projection: try the opposite sign, then shorter steps.
            let mut feasible = false;
            for _ in 0..40 {
                for d in [delta, -delta] {
                    z.set(w, e, y.get(w, e) + d);
                    if game.is_feasible(&z, 1e-9) {
                        feasible = true;
                        break;
                    }
                }
                if feasible {
                    break;
                }
                delta *= 0.5;
            }
            if !feasible {
                continue;
            }
            let du = game.utility(m, &z) - game.utility(m, &y);
            let dphi = game.potential(&z) - game.potential(&y);
            worst = worst.max((du - dphi).abs() / (1.0 + dphi.abs()));
            done += 1;
            checked += 1;
        }
    }
    Ok(SuiteReport {
        name: "exact-potential",
        passed: worst <= 1e-8 && checked == scenarios * deviations,
        detail: format!("max |dU - dPhi|/(1+|dPhi|) = {worst:.3e} <= 1e-8 over {checked} deviations"),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Analytic `∇Φ` against central differences, relative error in the sup norm per point.
pub fn gradient_suite(base: &Scenario, points: usize, seed: u64) -> Result<SuiteReport, ExperimentError> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut game = random_game(base, &mut rng, 10)?;
    for p in 0..points {
        if p % 50 == 0 {
            game = random_game(base, &mut rng, 10)?;
        }
        let y = random_feasible(&game, &mut rng);
        let g = game.potential_gradient(&y);
        let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let h = 1e-4 * game.rate_unit;
        let mut err: f64 = 0.0;
        for i in 0..g.len() {
            let mut up = y.clone();
            up.y[i] += h;
            let mut dn = y.clone();
            dn.y[i] -= h;
            let fd = (game.potential(&up) - game.potential(&dn)) / (2.0 * h);
            err = err.max((fd - g[i]).abs());
        }
        if scale > 0.0 {
            worst = worst.max(err / scale);
        }
    }
    Ok(SuiteReport {
        name: "gradient",
        passed: worst <= 1e-6,
        detail: format!("max relative error {worst:.3e} <= 1e-6 over {points} points"),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Per-coordinate `Φ'' < 0` and `min |Φ''|` against the strong-concavity bound.
pub fn concavity_suite(base: &Scenario, points: usize, seed: u64) -> Result<SuiteReport, ExperimentError> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all_negative = true;
    let mut bound_ok = true;
    let mut worst_ratio = f64::INFINITY;
    let mut game = random_game(base, &mut rng, 10)?;
    for p in 0..points {
        if p % 50 == 0 {
            game = random_game(base, &mut rng, 10)?;
        }
        let y = random_feasible(&game, &mut rng);
        let d2 = game.potential_second_derivative(&y);
        all_negative &= d2.iter().all(|v| *v < 0.0);
        let min_abs = d2.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        let bound = game.concavity_bound(&y);
        bound_ok &= min_abs >= bound - 1e-9;
        worst_ratio = worst_ratio.min(min_abs / bound);
    }
    Ok(SuiteReport {
        name: "concavity",
        passed: all_negative && bound_ok,
        detail: format!("all Phi'' < 0: {all_negative}; min |Phi''|/bound = {worst_ratio:.6}"),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Transport cost between two discrete measures by linear programming.
pub fn transport_lp(xs: &[f64], a: &[f64], ys: &[f64], b: &[f64]) -> Option<f64> {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> =
        xs.iter().map(|x| ys.iter().map(|y| p.add_var((x - y).abs(), (0.0, f64::INFINITY))).collect()).collect();
    for (i, ai) in a.iter().enumerate() {
        let row: Vec<_> = vars[i].iter().map(|v| (*v, 1.0)).collect();
        p.add_constraint(row.as_slice(), ComparisonOp::Eq, *ai);
    }
    for (j, bj) in b.iter().enumerate() {
        let col: Vec<_> = vars.iter().map(|r| (r[j], 1.0)).collect();
        p.add_constraint(col.as_slice(), ComparisonOp::Eq, *bj);
    }
    p.solve().ok().map(|s| s.objective())
}

/// Random measure on `grid` supported on five cells, as (density, support centres, masses).
pub fn five_point_measure(grid: &Grid<f64>, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut cells = Vec::with_capacity(5);
    while cells.len() < 5 {
        let c = rng.random_range(0..grid.cells);
        if !cells.contains(&c) {
            cells.push(c);
        }
    }
    let w: Vec<f64> = (0..5).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = w.iter().sum();
    let masses: Vec<f64> = w.iter().map(|v| v / total).collect();
    let mut mu = vec![0.0; grid.cells];
    for (c, m) in cells.iter().zip(&masses) {
        mu[*c] += m / grid.width();
    }
    (mu, cells.iter().map(|c| grid.center(*c)).collect(), masses)
}

pub fn w1_suite(pairs: usize, triples: usize, seed: u64) -> Result<SuiteReport, ExperimentError> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new(0.0, 1.0, 64)?;
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let (m1, x, a) = five_point_measure(&grid, &mut rng);
        let (m2, y, b) = five_point_measure(&grid, &mut rng);
        let lp = transport_lp(&x, &a, &y, &b).ok_or(ExperimentError::Check("transport LP failed"))?;
        worst = worst.max((wasserstein1(&m1, &m2, &grid)? - lp).abs());
    }
    let mut axioms = true;
    for _ in 0..triples {
        let (p, _, _) = five_point_measure(&grid, &mut rng);
        let (q, _, _) = five_point_measure(&grid, &mut rng);
        let (r, _, _) = five_point_measure(&grid, &mut rng);
        let (pq, qp, pr, qr) =
            (wasserstein1(&p, &q, &grid)?, wasserstein1(&q, &p, &grid)?, wasserstein1(&p, &r, &grid)?, wasserstein1(&q, &r, &grid)?);
        axioms &= pq >= 0.0 && wasserstein1(&p, &p, &grid)? == 0.0 && (pq - qp).abs() <= 1e-15;
        axioms &= pr <= pq + qr + 1e-12;
    }
    Ok(SuiteReport {
        name: "w1",
        passed: worst <= 1e-8 && axioms,
        detail: format!("max |W1 - LP| = {worst:.3e} <= 1e-8 over {pairs} pairs; metric axioms on {triples} triples: {axioms}"),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Mass after 10³ upwind steps under a varying drift, and a Dirac under constant drift.
pub fn fpk_suite() -> Result<SuiteReport, ExperimentError> {
    let start = Instant::now();
    let grid = Grid::new(40e3, 400e3, 200)?;
    let drift: Vec<Vec<f64>> =
        (0..1000).map(|k| (0..200).map(|i| 900.0 * (k as f64 / 80.0 + i as f64 / 30.0).sin()).collect()).collect();
    let out = advect_fpk(&uniform_density(&grid, 100e3, 300e3), &drift, &grid, 1.0, FpkScheme::Upwind)?;
    let mass_err = out.iter().map(|mu| (grid.mass(mu) - 1.0).abs()).fold(0.0, f64::max);

    let line: Grid<f64> = Grid::new(0.0, 100.0, 100)?;
    let (c0, v, dt, steps) = (20.5, 3.0, 0.25, 40);
    let mut landed = true;
    for scheme in [FpkScheme::Upwind, FpkScheme::Characteristics { particles_per_cell: 8 }] {
        let run = advect_fpk(&line.dirac(c0), &vec![vec![v; 100]; steps], &line, dt, scheme)?;
        let last = run.last().expect("nonempty");
        let peak = (0..line.cells).max_by(|&a, &b| last[a].total_cmp(&last[b])).unwrap_or(0);
        landed &= (line.center(peak) - (c0 + v * dt * steps as f64)).abs() <= line.width();
    }
    Ok(SuiteReport {
        name: "fpk",
        passed: mass_err <= 1e-4 && landed,
        detail: format!("max |mass - 1| = {mass_err:.3e} <= 1e-4 over 1000 steps; Dirac within one cell: {landed}"),
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all(base: &Scenario, seed: u64) -> Result<Vec<SuiteReport>, ExperimentError> {
    Ok(vec![
        exact_potential_suite(base, 20, 50, seed)?,
        gradient_suite(base, 1000, seed ^ 1)?,
        concavity_suite(base, 1000, seed ^ 2)?,
        w1_suite(200, 100, seed ^ 3)?,
        fpk_suite()?,
    ])
}
