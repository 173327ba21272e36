//! Mean-field limit on a one-dimensional battery grid: empirical measures, W1, the HJB
//! backward sweep, the advective FPK forward sweep, the coupled equilibrium and the
//! finite-population gap study.
//!
//! Densities are per joule on cell centres `c_i = C_min + (i + ½)Δc`; a normalized density
//! has `Σ μ_i Δc = 1`. Values are in utility units (per-slot utility integrated over
//! seconds divided by `D_e`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constellation::Ephemeris;
use crate::energy::{dynamic_power_bound, harvest_power, EnergyError, EnergyParams};
use crate::game::{analytic_best_response, GameParams};
use crate::link::{max_rate_under_bound, power_for_rate};
use crate::metrics::loglog_slope;
use crate::Real;

/// Mass tolerance of a normalized density.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum MfgError {
    #[error("density not normalized: mass {0}")]
    Unnormalized(f64),
    #[error("dimension mismatch: {0}")]
    Shape(&'static str),
    #[error("invalid grid: {0}")]
    Grid(&'static str),
    #[error("CFL violated: dt = {dt} s, stable dt ≤ {max_dt} s")]
    Cfl { dt: f64, max_dt: f64 },
    #[error("need at least {0} sizes")]
    TooFewSizes(usize),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Uniform cells over `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    pub lower: T,
    pub upper: T,
    pub cells: usize,
}

impl<T: Real> Grid<T> {
    pub fn new(lower: T, upper: T, cells: usize) -> Result<Self, MfgError> {
        if cells < 2 {
            return Err(MfgError::Grid("need at least two cells"));
        }
        if !(upper > lower) {
            return Err(MfgError::Grid("upper bound must exceed lower bound"));
        }
        Ok(Grid { lower, upper, cells })
    }

    pub fn width(&self) -> T {
        (self.upper - self.lower) / T::from_usize_lossy(self.cells)
    }

    pub fn center(&self, i: usize) -> T {
        self.lower + (T::from_usize_lossy(i) + T::lit(0.5)) * self.width()
    }

    pub fn centers(&self) -> Vec<T> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }

    /// Cell containing `c`; values outside the grid go to the nearest end cell.
    pub fn cell_of(&self, c: T) -> usize {
        let x = ((c - self.lower) / self.width()).floor();
        if !(x > T::zero()) {
            0
        } else {
            x.to_usize().unwrap_or(usize::MAX).min(self.cells - 1)
        }
    }

    pub fn mass(&self, mu: &[T]) -> T {
        mu.iter().copied().sum::<T>() * self.width()
    }

    /// Unit mass in the cell containing `c`.
    pub fn dirac(&self, c: T) -> Vec<T> {
        let mut mu = vec![T::zero(); self.cells];
        mu[self.cell_of(c)] = T::one() / self.width();
        mu
    }

    /// Mean of a density, joules.
    pub fn mean(&self, mu: &[T]) -> T {
        mu.iter().enumerate().map(|(i, &m)| m * self.center(i)).sum::<T>() * self.width()
    }

    /// Linear interpolation of nodal values at `c`, constant beyond the end centres.
    pub fn interpolate(&self, values: &[T], c: T) -> T {
        let n = self.cells;
        let x = (c - self.lower) / self.width() - T::lit(0.5);
        if !(x > T::zero()) {
            return values[0];
        }
        let last = T::from_usize_lossy(n - 1);
        if x >= last {
            return values[n - 1];
        }
        let i = x.floor().to_usize().unwrap_or(0).min(n - 2);
        let w = x - T::from_usize_lossy(i);
        values[i] * (T::one() - w) + values[i + 1] * w
    }

    fn check(&self, mu: &[T]) -> Result<(), MfgError> {
        if mu.len() != self.cells {
            return Err(MfgError::Shape("density length differs from cell count"));
        }
        let mass = self.mass(mu);
        if !((mass - T::one()).abs() <= T::lit(MASS_TOLERANCE)) || mu.iter().any(|m| *m < T::zero()) {
            return Err(MfgError::Unnormalized(mass.to_f64_lossy()));
        }
        Ok(())
    }
}

/// `(1/M) Σ δ_{C_m}` histogrammed; charges outside the grid land in the end cells.
pub fn empirical_measure<T: Real>(charges: &[T], grid: &Grid<T>) -> Vec<T> {
    let mut mu = vec![T::zero(); grid.cells];
    if charges.is_empty() {
        return mu;
    }
    let w = T::one() / (T::from_usize_lossy(charges.len()) * grid.width());
    for &c in charges {
        mu[grid.cell_of(c)] += w;
    }
    mu
}

/// CDF at the right edge of each cell.
pub fn cdf<T: Real>(mu: &[T], grid: &Grid<T>) -> Vec<T> {
    let dc = grid.width();
    let mut acc = T::zero();
    mu.iter()
        .map(|&m| {
            acc += m * dc;
            acc
        })
        .collect()
}

/// `∫ |F₁ − F₂| dc`.
pub fn wasserstein1<T: Real>(mu1: &[T], mu2: &[T], grid: &Grid<T>) -> Result<T, MfgError> {
    grid.check(mu1)?;
    grid.check(mu2)?;
    let (f1, f2) = (cdf(mu1, grid), cdf(mu2, grid));
    Ok(f1.iter().zip(&f2).map(|(a, b)| (*a - *b).abs()).sum::<T>() * grid.width())
}

/// `d(c_i, μ) = W1(δ_{c_i}, μ)` for every cell, by prefix sums.
pub fn distance_to_cells<T: Real>(mu: &[T], grid: &Grid<T>) -> Vec<T> {
    let f = cdf(mu, grid);
    let dc = grid.width();
    let n = grid.cells;
    // δ_{c_i} has CDF 0 left of cell i and 1 from cell i on.
    let mut below = vec![T::zero(); n + 1];
    let mut above = vec![T::zero(); n + 1];
    for j in 0..n {
        below[j + 1] = below[j] + f[j];
    }
    for j in (0..n).rev() {
        above[j] = above[j + 1] + (T::one() - f[j]);
    }
    (0..n).map(|i| (below[i] + above[i]) * dc).collect()
}

/// Harvest, illumination and eclipse horizon seen by the representative satellite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSample<T> {
    pub illuminated: bool,
    pub harvest: T,
    pub remaining_eclipse: T,
}

/// Representative-satellite control problem.
#[derive(Debug, Clone)]
pub struct MfgModel<T> {
    pub grid: Grid<T>,
    /// Time step, seconds.
    pub dt: T,
    /// One sample per time step.
    pub env: Vec<EnvSample<T>>,
    pub game: GameParams<T>,
    pub energy: EnergyParams<T>,
    /// Link κ of the representative ISL.
    pub kappa: T,
    pub bandwidth: T,
    /// Price per rate unit subtracted from throughput.
    pub dual: T,
    /// κ_mfg, utility per slot per energy unit of `d(C, μ)`.
    pub coupling: T,
    pub dynamic_bound: bool,
    pub fpk: FpkScheme,
}

impl<T: Real> MfgModel<T> {
    pub fn steps(&self) -> usize {
        self.env.len()
    }

    pub fn horizon(&self) -> T {
        self.dt * T::from_usize_lossy(self.steps())
    }

    /// `αD_e + λ/margin`.
    pub fn cost_weight(&self, c: T) -> T {
        self.game.energy_cost() + self.game.penalty_coefficient_floored(self.game.penalty_weight, c)
    }

    pub fn rate_cap(&self, c: T, k: usize) -> Result<T, MfgError> {
        let e = &self.env[k];
        let p = if self.dynamic_bound {
            dynamic_power_bound(c, e.illuminated, e.harvest, e.remaining_eclipse, &self.energy)?
        } else {
            self.energy.static_cap
        };
        Ok(max_rate_under_bound(p, self.kappa, self.bandwidth))
    }

    /// Maximizer of the Hamiltonian given `∂V/∂c` (utility per joule).
    pub fn best_response(&self, c: T, value_slope: T, k: usize) -> Result<T, MfgError> {
        let cap = self.rate_cap(c, k)?;
        let weight = self.cost_weight(c) + self.game.slot_duration * value_slope;
        if !(weight > T::zero()) {
            return Ok(if self.dual < T::one() { cap } else { T::zero() });
        }
        Ok(analytic_best_response(weight, self.dual, self.kappa, self.bandwidth, self.game.rate_unit, cap))
    }

    pub fn power(&self, rate: T) -> T {
        power_for_rate(rate, self.kappa, self.bandwidth)
    }

    /// Reward per second at rate `r`.
    pub fn reward(&self, c: T, r: T, distance: T) -> T {
        let x = r / self.game.rate_unit;
        let slot = x * (T::one() - self.dual) - self.cost_weight(c) * self.power(r)
            - self.coupling * distance / self.game.energy_unit;
        slot / self.game.slot_duration
    }

    /// `dC/dt = harvest − P(R) − P_base`.
    pub fn drift(&self, r: T, k: usize) -> T {
        self.env[k].harvest - self.power(r) - self.energy.base_load
    }

    /// Upper bound on |drift| over admissible controls.
    pub fn max_speed(&self) -> T {
        let h = self.env.iter().map(|e| e.harvest).fold(T::zero(), T::max);
        (h - self.energy.base_load).abs().max(self.energy.static_cap + self.energy.base_load)
    }
}

impl MfgModel<f64> {
    /// Model for `satellite`'s illumination schedule, with `D_e` split into sub-steps fine
    /// enough for the upwind CFL limit.
    pub fn from_scenario(scn: &crate::Scenario, eph: &Ephemeris<f64>, satellite: usize) -> Result<Self, MfgError> {
        let energy = scn.energy_params();
        let link = scn.link_params();
        let grid = Grid::new(scn.floor_j, scn.capacity_j, scn.grid_cells)?;
        let peak = energy.peak_harvest();
        let speed = (peak - energy.base_load).abs().max(energy.static_cap + energy.base_load);
        let sub = (speed * scn.slot_duration_s / (0.9 * grid.width())).ceil().max(1.0) as usize;
        let mut env = Vec::with_capacity(eph.num_slots * sub);
        for t in 0..eph.num_slots {
            let sample = EnvSample {
                illuminated: eph.illuminated(satellite, t),
                harvest: harvest_power(eph.illuminated(satellite, t), eph.panel_angle(satellite, t), &energy),
                remaining_eclipse: eph.remaining_eclipse(satellite, t),
            };
            env.extend(std::iter::repeat_n(sample, sub));
        }
        Ok(MfgModel {
            grid,
            dt: scn.slot_duration_s / sub as f64,
            env,
            game: scn.game_params(),
            energy,
            kappa: link.kappa(scn.reference_distance_m).map_err(|_| MfgError::Grid("reference distance"))?,
            bandwidth: scn.bandwidth_hz,
            dual: 0.0,
            coupling: scn.coupling,
            dynamic_bound: true,
            fpk: FpkScheme::Characteristics { particles_per_cell: 8 },
        })
    }

    /// Default ν: `scale · (C range)² / T`.
    pub fn default_viscosity(&self, scale: f64) -> f64 {
        let range = self.grid.upper - self.grid.lower;
        scale * range * range / self.horizon()
    }
}

/// `V(c_i, t_k)` for `k = 0..=steps` and the maximizing rate for `k < steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid<T> {
    pub values: Vec<Vec<T>>,
    /// Rate policy, bits/s.
    pub policy: Vec<Vec<T>>,
    pub viscosity: T,
    pub coupling: T,
}

fn slope_at<T: Real>(v: &[T], i: usize, dc: T) -> T {
    let n = v.len();
    if i == 0 {
        (v[1] - v[0]) / dc
    } else if i == n - 1 {
        (v[n - 1] - v[n - 2]) / dc
    } else {
        (v[i + 1] - v[i - 1]) / (dc + dc)
    }
}

/// Backward semi-Lagrangian sweep from `V(·, T) = 0` against the density trajectory `mu`
/// (one density per step, or `steps + 1`).
pub fn solve_hjb<T: Real>(model: &MfgModel<T>, mu: &[Vec<T>], viscosity: T) -> Result<ValueGrid<T>, MfgError> {
    let grid = &model.grid;
    let n = grid.cells;
    let steps = model.steps();
    if mu.len() < steps {
        return Err(MfgError::Shape("density trajectory shorter than the horizon"));
    }
    let dc = grid.width();
    if viscosity < T::zero() {
        return Err(MfgError::Grid("negative viscosity"));
    }
    if viscosity > T::zero() {
        let max_dt = T::lit(0.5) * dc * dc / viscosity;
        if model.dt > max_dt {
            return Err(MfgError::Cfl { dt: model.dt.to_f64_lossy(), max_dt: max_dt.to_f64_lossy() });
        }
    }
    let centers = grid.centers();
    let mut values = vec![vec![T::zero(); n]; steps + 1];
    let mut policy = vec![vec![T::zero(); n]; steps];
    for k in (0..steps).rev() {
        let distance = if model.coupling > T::zero() { distance_to_cells(&mu[k], grid) } else { vec![T::zero(); n] };
        let (head, tail) = values.split_at_mut(k + 1);
        let next = &tail[0];
        let cur = &mut head[k];
        for i in 0..n {
            let c = centers[i];
            let r = model.best_response(c, slope_at(next, i, dc), k)?;
            let foot = c + model.dt * model.drift(r, k);
            let mut v = model.dt * model.reward(c, r, distance[i]) + grid.interpolate(next, foot);
            if viscosity > T::zero() {
                // Zero-flux ends.
                let left = next[i.saturating_sub(1)];
                let right = next[(i + 1).min(n - 1)];
                v += model.dt * viscosity * (left - next[i] - next[i] + right) / (dc * dc);
            }
            cur[i] = v;
            policy[k][i] = r;
        }
    }
    Ok(ValueGrid { values, policy, viscosity, coupling: model.coupling })
}

/// Drift of every cell under a rate policy.
pub fn policy_drift<T: Real>(model: &MfgModel<T>, policy: &[Vec<T>]) -> Vec<Vec<T>> {
    policy.iter().enumerate().map(|(k, row)| row.iter().map(|&r| model.drift(r, k)).collect()).collect()
}

/// Discretization of the transport equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpkScheme {
    /// First-order upwind finite volumes; numerically diffusive.
    Upwind,
    /// Mass points carried along interpolated characteristics, re-binned every step.
    Characteristics { particles_per_cell: usize },
}

/// Transport `mu0` under a per-step, per-cell drift with reflecting ends.
/// Returns `drift.len() + 1` densities starting with `mu0`.
pub fn advect_fpk<T: Real>(
    mu0: &[T],
    drift: &[Vec<T>],
    grid: &Grid<T>,
    dt: T,
    scheme: FpkScheme,
) -> Result<Vec<Vec<T>>, MfgError> {
    grid.check(mu0)?;
    if drift.iter().any(|b| b.len() != grid.cells) {
        return Err(MfgError::Shape("drift length differs from cell count"));
    }
    match scheme {
        FpkScheme::Upwind => advect_upwind(mu0, drift, grid, dt),
        FpkScheme::Characteristics { particles_per_cell } => {
            advect_characteristics(mu0, drift, grid, dt, particles_per_cell.max(1))
        }
    }
}

fn cfl<T: Real>(drift: &[T], grid: &Grid<T>, dt: T) -> Result<(), MfgError> {
    let speed = drift.iter().fold(T::zero(), |a, b| a.max(b.abs()));
    if dt * speed > grid.width() {
        return Err(MfgError::Cfl { dt: dt.to_f64_lossy(), max_dt: (grid.width() / speed).to_f64_lossy() });
    }
    Ok(())
}

fn advect_characteristics<T: Real>(
    mu0: &[T],
    drift: &[Vec<T>],
    grid: &Grid<T>,
    dt: T,
    per_cell: usize,
) -> Result<Vec<Vec<T>>, MfgError> {
    let dc = grid.width();
    let p = T::from_usize_lossy(per_cell);
    let mut pos = Vec::new();
    let mut weight = Vec::new();
    for (i, &m) in mu0.iter().enumerate() {
        if m > T::zero() {
            for j in 0..per_cell {
                let offset = (T::from_usize_lossy(j) + T::lit(0.5)) / p - T::lit(0.5);
                pos.push(grid.center(i) + offset * dc);
                weight.push(m / p);
            }
        }
    }
    let mut out = Vec::with_capacity(drift.len() + 1);
    out.push(mu0.to_vec());
    for b in drift {
        cfl(b, grid, dt)?;
        for x in pos.iter_mut() {
            *x = (*x + dt * grid.interpolate(b, *x)).max(grid.lower).min(grid.upper);
        }
        let mut mu = vec![T::zero(); grid.cells];
        for (x, w) in pos.iter().zip(&weight) {
            mu[grid.cell_of(*x)] += *w;
        }
        out.push(mu);
    }
    Ok(out)
}

fn advect_upwind<T: Real>(mu0: &[T], drift: &[Vec<T>], grid: &Grid<T>, dt: T) -> Result<Vec<Vec<T>>, MfgError> {
    let n = grid.cells;
    let dc = grid.width();
    let half = T::lit(0.5);
    let mut out = Vec::with_capacity(drift.len() + 1);
    out.push(mu0.to_vec());
    let mut flux = vec![T::zero(); n + 1];
    let mut speed = vec![T::zero(); n + 1];
    for b in drift {
        let mu = out.last().expect("seeded with mu0");
        for i in 0..n - 1 {
            let a = (b[i] + b[i + 1]) * half;
            flux[i + 1] = a.max(T::zero()) * mu[i] + a.min(T::zero()) * mu[i + 1];
            speed[i + 1] = a;
        }
        for i in 0..n {
            let outflow = speed[i + 1].max(T::zero()) - speed[i].min(T::zero());
            if dt * outflow > dc {
                return Err(MfgError::Cfl { dt: dt.to_f64_lossy(), max_dt: (dc / outflow).to_f64_lossy() });
            }
        }
        let next: Vec<T> = (0..n).map(|i| mu[i] - dt / dc * (flux[i + 1] - flux[i])).collect();
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MfeSolution<T> {
    pub value: ValueGrid<T>,
    /// μ*, `steps + 1` densities.
    pub density: Vec<Vec<T>>,
    pub iterations: usize,
    pub converged: bool,
    /// Last sup-norm change in cell mass.
    pub change: T,
}

/// Damped Picard iteration between [`solve_hjb`] and [`advect_fpk`]. ν starts at `viscosity`
/// and halves every iteration; the reported policy is the ν = 0 response to μ*.
pub fn solve_mfe<T: Real>(
    model: &MfgModel<T>,
    mu0: &[T],
    viscosity: T,
    max_picard: usize,
    tol: T,
) -> Result<MfeSolution<T>, MfgError> {
    let grid = &model.grid;
    grid.check(mu0)?;
    let steps = model.steps();
    if model.coupling == T::zero() {
        let value = solve_hjb(model, &vec![mu0.to_vec(); steps], T::zero())?;
        let density = advect_fpk(mu0, &policy_drift(model, &value.policy), grid, model.dt, model.fpk)?;
        return Ok(MfeSolution { value, density, iterations: 1, converged: true, change: T::zero() });
    }
    let dc = grid.width();
    let half = T::lit(0.5);
    let mut mu = vec![mu0.to_vec(); steps + 1];
    let mut nu = viscosity;
    let mut change = T::infinity();
    let mut iterations = 0;
    while iterations < max_picard.max(1) {
        iterations += 1;
        let value = solve_hjb(model, &mu, nu)?;
        let pushed = advect_fpk(mu0, &policy_drift(model, &value.policy), grid, model.dt, model.fpk)?;
        change = T::zero();
        for (row, new) in mu.iter_mut().zip(&pushed) {
            for (m, p) in row.iter_mut().zip(new) {
                change = change.max((*p - *m).abs() * dc);
                *m = half * *m + half * *p;
            }
        }
        nu *= half;
        if change <= tol {
            break;
        }
    }
    let value = solve_hjb(model, &mu, T::zero())?;
    Ok(MfeSolution { value, density: mu, iterations, converged: change <= tol, change })
}

/// Gap of the finite population at each size and the fitted log–log slope.
#[derive(Debug, Clone, PartialEq)]
pub struct GapStudy<T> {
    pub sizes: Vec<usize>,
    /// [`binned_policy_gap`] per size.
    pub gaps: Vec<T>,
    pub slope: T,
    pub converged: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapConfig<T> {
    /// Initial charges are i.i.d. uniform on `[initial_low, initial_high]`.
    pub initial_low: T,
    pub initial_high: T,
    pub viscosity: T,
    pub max_picard: usize,
    pub tol: T,
    /// Independent populations averaged per size.
    pub repetitions: usize,
    pub seed: u64,
}

/// μ₀ of the gap study: uniform over the cells spanning `[low, high]`.
pub fn uniform_density<T: Real>(grid: &Grid<T>, low: T, high: T) -> Vec<T> {
    let (a, b) = (grid.cell_of(low), grid.cell_of(high));
    let mut mu = vec![T::zero(); grid.cells];
    let w = T::one() / (T::from_usize_lossy(b - a + 1) * grid.width());
    for m in mu.iter_mut().take(b + 1).skip(a) {
        *m = w;
    }
    mu
}

/// Finite population of `M` satellites with i.i.d. initial charges, each best-responding
/// to the value computed against the population's own empirical measure, iterated to a
/// fixed point with the same damping as [`solve_mfe`].
pub struct FinitePopulation<T> {
    /// `trajectory[k][m]`, joules.
    pub trajectory: Vec<Vec<T>>,
    /// `rates[k][m]`, bits/s.
    pub rates: Vec<Vec<T>>,
    pub converged: bool,
}

pub fn finite_population<T: Real>(
    model: &MfgModel<T>,
    initial: &[T],
    viscosity: T,
    max_picard: usize,
    tol: T,
) -> Result<FinitePopulation<T>, MfgError> {
    let grid = &model.grid;
    let steps = model.steps();
    let dc = grid.width();
    let half = T::lit(0.5);
    let mut mu = vec![empirical_measure(initial, grid); steps + 1];
    let mut nu = viscosity;
    let mut converged = false;
    let mut last = None;
    for _ in 0..max_picard.max(1) {
        let value = solve_hjb(model, &mu, nu)?;
        let sim = simulate(model, &value, initial)?;
        let mut change = T::zero();
        for (row, charges) in mu.iter_mut().zip(&sim.trajectory) {
            let emp = empirical_measure(charges, grid);
            for (m, p) in row.iter_mut().zip(&emp) {
                change = change.max((*p - *m).abs() * dc);
                *m = half * *m + half * *p;
            }
        }
        nu *= half;
        last = Some(sim);
        if change <= tol {
            converged = true;
            break;
        }
    }
    let value = solve_hjb(model, &mu, T::zero())?;
    let sim = simulate(model, &value, initial)?;
    drop(last);
    Ok(FinitePopulation { converged, ..sim })
}

/// Evaluates a value's optimal rate at arbitrary charges from interpolated `∂V/∂c`.
pub struct PolicyEvaluator<'a, T> {
    model: &'a MfgModel<T>,
    slopes: Vec<Vec<T>>,
}

impl<'a, T: Real> PolicyEvaluator<'a, T> {
    pub fn new(model: &'a MfgModel<T>, value: &ValueGrid<T>) -> Self {
        let grid = &model.grid;
        let dc = grid.width();
        let slopes = value.values[1..]
            .iter()
            .map(|v| (0..grid.cells).map(|i| slope_at(v, i, dc)).collect())
            .collect();
        PolicyEvaluator { model, slopes }
    }

    pub fn rate(&self, c: T, k: usize) -> Result<T, MfgError> {
        self.model.best_response(c, self.model.grid.interpolate(&self.slopes[k], c), k)
    }
}

fn simulate<T: Real>(model: &MfgModel<T>, value: &ValueGrid<T>, initial: &[T]) -> Result<FinitePopulation<T>, MfgError> {
    let grid = &model.grid;
    let steps = model.steps();
    let eval = PolicyEvaluator::new(model, value);
    let mut charges: Vec<T> = initial.iter().map(|c| c.max(grid.lower).min(grid.upper)).collect();
    let mut trajectory = Vec::with_capacity(steps + 1);
    let mut rates = Vec::with_capacity(steps);
    trajectory.push(charges.clone());
    for k in 0..steps {
        let mut row = Vec::with_capacity(charges.len());
        for c in charges.iter_mut() {
            let r = eval.rate(*c, k)?;
            *c = (*c + model.dt * model.drift(r, k)).max(grid.lower).min(grid.upper);
            row.push(r);
        }
        rates.push(row);
        trajectory.push(charges.clone());
    }
    Ok(FinitePopulation { trajectory, rates, converged: true })
}

/// `Σ |R^M − R*| / Σ R*` over the population's realized (satellite, step) states.
pub fn state_policy_gap<T: Real>(model: &MfgModel<T>, pop: &FinitePopulation<T>, mfe: &ValueGrid<T>) -> Result<T, MfgError> {
    let eval = PolicyEvaluator::new(model, mfe);
    let (mut num, mut den) = (T::zero(), T::zero());
    for (k, rates) in pop.rates.iter().enumerate() {
        for (c, r) in pop.trajectory[k].iter().zip(rates) {
            let star = eval.rate(*c, k)?;
            num += (*r - star).abs();
            den += star;
        }
    }
    Ok(if den > T::zero() { num / den } else { T::zero() })
}

/// Per time step, bin the population by cell and compare each occupied cell's mean realized
/// rate with the mean MFE rate at the same charges; occupancy-weighted L1 over all steps,
/// divided by the total MFE rate.
pub fn binned_policy_gap<T: Real>(model: &MfgModel<T>, pop: &FinitePopulation<T>, mfe: &ValueGrid<T>) -> Result<T, MfgError> {
    let grid = &model.grid;
    let eval = PolicyEvaluator::new(model, mfe);
    let mut diff = vec![T::zero(); grid.cells];
    let (mut num, mut den) = (T::zero(), T::zero());
    for (k, rates) in pop.rates.iter().enumerate() {
        diff.iter_mut().for_each(|d| *d = T::zero());
        for (c, r) in pop.trajectory[k].iter().zip(rates) {
            let star = eval.rate(*c, k)?;
            diff[grid.cell_of(*c)] += *r - star;
            den += star;
        }
        num += diff.iter().map(|d| d.abs()).sum::<T>();
    }
    Ok(if den > T::zero() { num / den } else { T::zero() })
}

/// Solve the MFE once, then for every size sample a population, find its fixed point and
/// record the binned policy gap.
pub fn gap_study<T: Real>(model: &MfgModel<T>, sizes: &[usize], cfg: &GapConfig<T>) -> Result<GapStudy<T>, MfgError> {
    if sizes.len() < 2 {
        return Err(MfgError::TooFewSizes(2));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MfgError::Shape("sizes must be strictly increasing"));
    }
    let mu0 = uniform_density(&model.grid, cfg.initial_low, cfg.initial_high);
    let mfe = solve_mfe(model, &mu0, cfg.viscosity, cfg.max_picard, cfg.tol)?;
    let mut gaps = Vec::with_capacity(sizes.len());
    let mut converged = Vec::with_capacity(sizes.len());
    let (a, b) = (model.grid.cell_of(cfg.initial_low), model.grid.cell_of(cfg.initial_high));
    let (lo, hi) = (model.grid.center(a) - model.grid.width() * T::lit(0.5), model.grid.center(b) + model.grid.width() * T::lit(0.5));
    for (j, &m) in sizes.iter().enumerate() {
        let mut total = T::zero();
        let mut ok = mfe.converged;
        for rep in 0..cfg.repetitions.max(1) {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((j as u64 + 1) << 40) ^ ((rep as u64) << 20) ^ m as u64);
            let initial: Vec<T> = (0..m).map(|_| lo + (hi - lo) * T::lit(rng.random::<f64>())).collect();
            let pop = finite_population(model, &initial, cfg.viscosity, cfg.max_picard, cfg.tol)?;
            total += binned_policy_gap(model, &pop, &mfe.value)?;
            ok &= pop.converged;
        }
        gaps.push(total / T::from_usize_lossy(cfg.repetitions.max(1)));
        converged.push(ok);
    }
    let xs: Vec<T> = sizes.iter().map(|&m| T::from_usize_lossy(m)).collect();
    let slope = loglog_slope(&xs, &gaps).unwrap_or(T::nan());
    Ok(GapStudy { sizes: sizes.to_vec(), gaps, slope, converged })
}

/// `L_U = λ_max · P_max / (margin_min² · E_unit)` per joule of W1.
pub fn lipschitz_constant<T: Real>(lambda_max: T, p_max: T, game: &GameParams<T>) -> T {
    lambda_max * p_max / (game.safety_margin * game.safety_margin * game.energy_unit)
}

/// Utility of a satellite whose battery is the mean of `μ` (the linear battery map),
/// at transmit power `power`.
pub fn linear_coupling_utility<T: Real>(rate_units: T, power: T, mu: &[T], grid: &Grid<T>, game: &GameParams<T>, lambda: T) -> T {
    let charge = grid.mean(mu);
    rate_units - (game.energy_cost() + game.penalty_coefficient_floored(lambda, charge)) * power
}

/// Largest `|U(R; μ₁) − U(R; μ₂)| / W1(μ₁, μ₂)` over `pairs` random measure pairs at `P = P_max`,
/// paired with the theoretical `L_U`.
pub fn lipschitz_bound_check<T: Real>(
    grid: &Grid<T>,
    game: &GameParams<T>,
    lambda_max: T,
    p_max: T,
    pairs: usize,
    seed: u64,
) -> Result<(T, T), MfgError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Sparse random weights; at least one cell is always occupied.
    let random_measure = |rng: &mut ChaCha8Rng| -> Vec<T> {
        let mut raw: Vec<f64> = (0..grid.cells).map(|_| if rng.random::<f64>() < 0.1 { rng.random::<f64>() } else { 0.0 }).collect();
        raw[rng.random_range(0..grid.cells)] += rng.random::<f64>() + 1e-3;
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| T::lit(x / total) / grid.width()).collect()
    };
    let mut worst = T::zero();
    for _ in 0..pairs {
        let (a, b) = (random_measure(&mut rng), random_measure(&mut rng));
        let w = wasserstein1(&a, &b, grid)?;
        if !(w > T::zero()) {
            continue;
        }
        let ua = linear_coupling_utility(T::one(), p_max, &a, grid, game, lambda_max);
        let ub = linear_coupling_utility(T::one(), p_max, &b, grid, game, lambda_max);
        worst = worst.max((ua - ub).abs() / w);
    }
    Ok((worst, lipschitz_constant(lambda_max, p_max, game)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid<f64> {
        Grid::new(40e3, 400e3, 200).unwrap()
    }

    #[test]
    fn empirical_two_charges() {
        let g = grid();
        let mu = empirical_measure(&[100e3, 300e3], &g);
        let masses: Vec<f64> = mu.iter().map(|m| m * g.width()).filter(|m| *m > 0.0).collect();
        assert_eq!(masses.len(), 2);
        for m in masses {
            assert!((m - 0.5).abs() < 1e-12);
        }
        assert!((g.mass(&mu) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn w1_diracs() {
        let g = grid();
        let (a, b) = (g.center(10), g.center(150));
        let w = wasserstein1(&g.dirac(a), &g.dirac(b), &g).unwrap();
        assert!((w - (b - a)).abs() < 1e-6);
        assert_eq!(wasserstein1(&g.dirac(a), &g.dirac(a), &g).unwrap(), 0.0);
    }

    #[test]
    fn w1_rejects_unnormalized() {
        let g = grid();
        let mut mu = g.dirac(100e3);
        mu[0] += 1.0;
        assert!(matches!(wasserstein1(&mu, &g.dirac(100e3), &g), Err(MfgError::Unnormalized(_))));
    }

    #[test]
    fn distance_matches_w1_to_dirac() {
        let g = Grid::<f64>::new(0.0, 10.0, 10).unwrap();
        let mu = empirical_measure(&[1.2, 3.3, 3.4, 8.9], &g);
        let d = distance_to_cells(&mu, &g);
        for i in 0..10 {
            let w = wasserstein1(&g.dirac(g.center(i)), &mu, &g).unwrap();
            assert!((d[i] - w).abs() < 1e-12, "{i}");
        }
    }

    #[test]
    fn interpolation_is_linear() {
        let g = Grid::<f64>::new(0.0, 4.0, 4).unwrap();
        let v = [1.0, 3.0, 5.0, 7.0];
        assert_eq!(g.interpolate(&v, 0.0), 1.0);
        assert!((g.interpolate(&v, 1.0) - 2.0).abs() < 1e-12);
        assert_eq!(g.interpolate(&v, 4.0), 7.0);
    }

    #[test]
    fn lipschitz_linear_in_lambda() {
        let gp = GameParams {
            energy_weight: 1.0 / 15.0,
            slot_duration: 15.0,
            penalty_weight: 0.2,
            safety_margin: 0.2,
            rate_unit: 1e10,
            energy_unit: 400e3,
            floor: 40e3,
        };
        let a: f64 = lipschitz_constant(0.2, 10.0, &gp);
        let b: f64 = lipschitz_constant(0.4, 10.0, &gp);
        assert!((b - 2.0 * a).abs() <= 1e-15 * b);
    }
}
