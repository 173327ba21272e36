//! HBAG: distributed augmented-Lagrangian solver for one slot, the V0–V3
//! ablation ladder, and the slot-by-slot episode driver.
//!
//! Internally every rate is expressed in rate units (`Y / rate_unit`), so `ρ`, `c₀`
//! and the flow prices are dimensionless.

use rayon::prelude::*;

use crate::constellation::{build_topology, ConstellationError, Ephemeris};
use crate::energy::{dynamic_power_bound, harvest_power, step_battery_with_loss, BatteryTrace, EnergyError, EnergyParams};
use crate::game::{GameError, GameParams, PenaltyMode, SlotGame};
use crate::link::{power_for_rate, power_rate_derivatives, LinkError, LinkParams};
use crate::traffic::{delivered, Flow, FlowAllocation, LinkSet};
use crate::Real;

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Constellation(#[from] ConstellationError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("invalid solver configuration: {0}")]
    Config(&'static str),
}

/// Rungs of the ablation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Static `P_max`, no penalty (baseline).
    V0,
    /// Dynamic bound, no penalty.
    V1,
    /// Static `P_max`, battery penalty.
    V2,
    /// Dynamic bound and penalty.
    V3,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::V0, Variant::V1, Variant::V2, Variant::V3];

    pub fn dynamic_bound(self) -> bool {
        matches!(self, Variant::V1 | Variant::V3)
    }

    pub fn penalized(self) -> bool {
        matches!(self, Variant::V2 | Variant::V3)
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::V0 => "v0",
            Variant::V1 => "v1",
            Variant::V2 => "v2",
            Variant::V3 => "v3",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s.trim().to_ascii_lowercase().as_str() {
            "v0" | "v0_static" | "static" => Some(Variant::V0),
            "v1" | "v1_dynamic_only" => Some(Variant::V1),
            "v2" | "v2_penalty_only" => Some(Variant::V2),
            "v3" | "v3_full" | "hbag" => Some(Variant::V3),
            _ => None,
        }
    }

    /// Penalty weight the variant feeds into the utility.
    pub fn penalty_weight<T: Real>(self, lambda: T) -> T {
        if self.penalized() { lambda } else { T::zero() }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-satellite ISL power ceiling used by `variant`.
pub fn variant_bound<T: Real>(
    variant: Variant,
    charge: T,
    illuminated: bool,
    harvest: T,
    remaining_eclipse: T,
    p: &EnergyParams<T>,
) -> Result<T, EnergyError> {
    if variant.dynamic_bound() {
        dynamic_power_bound(charge, illuminated, harvest, remaining_eclipse, p)
    } else {
        Ok(p.static_cap)
    }
}

/// ISL power the battery can physically supply over one slot after the base load:
/// `max(0, C/D_e + harvest − P_base)`. Applies to every variant.
pub fn available_power<T: Real>(charge: T, harvest: T, p: &EnergyParams<T>, slot: T) -> T {
    (charge.max(T::zero()) / slot + harvest - p.base_load).max(T::zero())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    pub rho: T,
    /// `η_k = c₀/√k`.
    pub step_c0: T,
    /// Inner projected-gradient limit `k_sg`.
    pub inner_steps: usize,
    /// Initial inner step before backtracking.
    pub inner_step: T,
    /// Outer limit `k_max`.
    pub max_iterations: usize,
    /// Stop when `Σ_m ‖ΔR_m‖` (rate units) and the total price movement both fall to this.
    pub tolerance: T,
    /// Upper clamp on flow prices; `None` leaves them unbounded above.
    pub dual_cap: Option<T>,
    pub variant: Variant,
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.rho > T::zero()) {
            return Err(SolverError::Config("rho must be positive"));
        }
        if !(self.step_c0 > T::zero()) {
            return Err(SolverError::Config("c0 must be positive"));
        }
        if self.inner_steps == 0 || self.max_iterations == 0 {
            return Err(SolverError::Config("iteration limits must be at least 1"));
        }
        if !(self.tolerance > T::zero()) {
            return Err(SolverError::Config("tolerance must be positive"));
        }
        if !(self.inner_step > T::zero()) {
            return Err(SolverError::Config("inner step must be positive"));
        }
        Ok(())
    }
}

/// `[λ + ρ r]⁺`, optionally clamped above.
pub fn dual_update<T: Real>(duals: &[T], residuals: &[T], rho: T, cap: Option<T>) -> Vec<T> {
    duals
        .iter()
        .zip(residuals)
        .map(|(&l, &r)| {
            let v = (l + rho * r).max(T::zero());
            match cap {
                Some(c) => v.min(c),
                None => v,
            }
        })
        .collect()
}

/// Read-only view of a slot problem in rate units.
struct Scaled<'a, T> {
    game: &'a SlotGame<T>,
    /// Demand per flow in rate units.
    demand: Vec<T>,
    /// `1/q_l`.
    inv_q: Vec<T>,
}

impl<'a, T: Real> Scaled<'a, T> {
    fn new(game: &'a SlotGame<T>) -> Self {
        let u = game.rate_unit;
        let n = game.num_satellites();
        Scaled {
            game,
            demand: game.flows.iter().map(|f| f.demand / u).collect(),
            inv_q: (0..n).map(|l| T::one() / T::from_usize_lossy(game.links.coupling_count(l))).collect(),
        }
    }

    fn ne(&self) -> usize {
        self.game.links.num_edges()
    }

    fn nf(&self) -> usize {
        self.game.flows.len()
    }

    #[inline]
    fn power(&self, x: T, e: usize) -> T {
        power_for_rate(x * self.game.rate_unit, self.game.kappa[e], self.game.bandwidth)
    }

    /// dP/dx with x in rate units.
    #[inline]
    fn dpower(&self, x: T, e: usize) -> T {
        power_rate_derivatives(x * self.game.rate_unit, self.game.kappa[e], self.game.bandwidth).0 * self.game.rate_unit
    }

    /// Residuals in rate units, `[flow][node]`.
    fn residual(&self, x: &[T]) -> Vec<T> {
        let links = &self.game.links;
        let n = links.num_nodes;
        let ne = self.ne();
        let u = self.game.rate_unit;
        let mut r = vec![T::zero(); self.nf() * n];
        for (w, f) in self.game.flows.iter().enumerate() {
            let xw = &x[w * ne..(w + 1) * ne];
            for l in 0..n {
                let out: T = links.out_range(l).map(|e| xw[e]).sum();
                let inn: T = links.incoming[l].iter().map(|&e| xw[e]).sum();
                r[w * n + l] = out - inn - f.balance(l) / u;
            }
        }
        r
    }

    fn project_box(&self, x: &mut [T]) {
        let ne = self.ne();
        for w in 0..self.nf() {
            let d = self.demand[w];
            for v in &mut x[w * ne..(w + 1) * ne] {
                *v = v.max(T::zero()).min(d);
            }
        }
    }

    fn project(&self, x: &mut [T]) {
        self.project_box(x);
        let g = self.game;
        // Scaled rates: the shared projection works in bits/s, so convert per satellite.
        let u = g.rate_unit;
        let ne = self.ne();
        let nf = self.nf();
        for m in 0..g.num_satellites() {
            let range = g.links.out_range(m);
            let total: T = range.clone().map(|e| self.power((0..nf).map(|w| x[w * ne + e]).sum(), e)).sum();
            if total <= g.bound[m] {
                continue;
            }
            let scale = if total > T::zero() { g.bound[m].max(T::zero()) / total } else { T::zero() };
            for e in range {
                let r: T = (0..nf).map(|w| x[w * ne + e]).sum();
                if r <= T::zero() {
                    continue;
                }
                let p = self.power(r, e) * scale;
                let r_new = crate::link::max_rate_under_bound(p, g.kappa[e], g.bandwidth) / u;
                let ratio = r_new.min(r) / r;
                for w in 0..nf {
                    x[w * ne + e] *= ratio;
                }
            }
        }
    }
}

/// Block of satellite `m`'s coordinates: `[flow][local edge]` in rate units.
struct LocalProblem<'s, 'a, T> {
    s: &'s Scaled<'a, T>,
    m: usize,
    edges: std::ops::Range<usize>,
    /// `λ^ω_m − λ^ω_n` per `[flow][local edge]`.
    price: Vec<T>,
    /// Current global values on the block.
    base: Vec<T>,
    /// `r^ω_m / q_m`.
    own_avg: Vec<T>,
    /// `r^ω_n / q_n` per `[flow][local edge]`.
    nbr_avg: Vec<T>,
    cost: T,
    rho: T,
}

impl<'s, 'a, T: Real> LocalProblem<'s, 'a, T> {
    fn new(s: &'s Scaled<'a, T>, m: usize, x: &[T], r: &[T], duals: &[T], rho: T) -> Self {
        let g = s.game;
        let n = g.num_satellites();
        let ne = s.ne();
        let nf = s.nf();
        let edges = g.links.out_range(m);
        let deg = edges.len();
        let mut price = Vec::with_capacity(nf * deg);
        let mut base = Vec::with_capacity(nf * deg);
        let mut nbr_avg = Vec::with_capacity(nf * deg);
        let mut own_avg = Vec::with_capacity(nf);
        for w in 0..nf {
            own_avg.push(r[w * n + m] * s.inv_q[m]);
            for e in edges.clone() {
                let to = g.links.to[e];
                price.push(duals[w * n + m] - duals[w * n + to]);
                base.push(x[w * ne + e]);
                nbr_avg.push(r[w * n + to] * s.inv_q[to]);
            }
        }
        LocalProblem { s, m, edges, price, base, own_avg, nbr_avg, cost: g.cost_weight(m), rho }
    }

    fn deg(&self) -> usize {
        self.edges.len()
    }

    /// Per-link totals of `z` into `out`.
    fn link_rates(&self, z: &[T], out: &mut [T]) {
        let d = self.deg();
        out.iter_mut().for_each(|v| *v = T::zero());
        for zw in (0..self.s.nf()).map(|w| &z[w * d..(w + 1) * d]) {
            for (o, v) in out.iter_mut().zip(zw) {
                *o += *v;
            }
        }
    }

    /// Terms of the local Lagrangian that depend on the block.
    fn objective(&self, z: &[T], rates: &mut [T]) -> T {
        let d = self.deg();
        self.link_rates(z, rates);
        let mut v = T::zero();
        for (r, e) in rates.iter().zip(self.edges.clone()) {
            v += self.cost * self.s.power(*r, e);
        }
        let half = T::lit(0.5) * self.rho;
        for w in 0..self.s.nf() {
            let zw = &z[w * d..(w + 1) * d];
            let mut own = self.own_avg[w];
            let lo = w * d;
            let (base, price, nbr) = (&self.base[lo..lo + d], &self.price[lo..lo + d], &self.nbr_avg[lo..lo + d]);
            for j in 0..d {
                let delta = zw[j] - base[j];
                v += zw[j] * price[j];
                own += delta;
                let sn = nbr[j] - delta;
                v += half * sn * sn;
            }
            v += half * own * own;
        }
        v
    }

    fn gradient(&self, z: &[T], g: &mut [T], rates: &mut [T]) {
        let d = self.deg();
        self.link_rates(z, rates);
        for (r, e) in rates.iter_mut().zip(self.edges.clone()) {
            *r = self.cost * self.s.dpower(*r, e);
        }
        for w in 0..self.s.nf() {
            let lo = w * d;
            let (zw, gw) = (&z[lo..lo + d], &mut g[lo..lo + d]);
            let base = &self.base[lo..lo + d];
            let own = self.own_avg[w] + zw.iter().zip(base).map(|(a, b)| *a - *b).sum::<T>();
            for j in 0..d {
                let sn = self.nbr_avg[lo + j] - (zw[j] - base[j]);
                gw[j] = rates[j] + self.price[lo + j] + self.rho * (own - sn);
            }
        }
    }

    fn project(&self, z: &mut [T], rates: &mut [T], powers: &mut [T]) {
        let d = self.deg();
        for w in 0..self.s.nf() {
            let cap = self.s.demand[w];
            for v in &mut z[w * d..(w + 1) * d] {
                *v = v.max(T::zero()).min(cap);
            }
        }
        let game = self.s.game;
        let bound = game.bound[self.m];
        self.link_rates(z, rates);
        let mut total = T::zero();
        for ((p, r), e) in powers.iter_mut().zip(rates.iter()).zip(self.edges.clone()) {
            *p = self.s.power(*r, e);
            total += *p;
        }
        if total <= bound {
            return;
        }
        let scale = if total > T::zero() { bound.max(T::zero()) / total } else { T::zero() };
        for (j, e) in self.edges.clone().enumerate() {
            let r = rates[j];
            if r <= T::zero() {
                continue;
            }
            let r_new = crate::link::max_rate_under_bound(powers[j] * scale, game.kappa[e], game.bandwidth) / game.rate_unit;
            let ratio = r_new.min(r) / r;
            for w in 0..self.s.nf() {
                z[w * d + j] *= ratio;
            }
        }
    }

    /// Projected gradient with halving backtracking; objective never increases.
    fn solve(&self, steps: usize, step0: T) -> (Vec<T>, usize) {
        let mut rates = vec![T::zero(); self.deg()];
        let mut powers = rates.clone();
        let mut z = self.base.clone();
        self.project(&mut z, &mut rates, &mut powers);
        let mut fz = self.objective(&z, &mut rates);
        let mut g = vec![T::zero(); z.len()];
        let mut trial = vec![T::zero(); z.len()];
        let mut used = 0;
        let eps = T::lit(1e-13);
        // Backtracking shrinks the step for the rest of the solve.
        let mut step = step0;
        for _ in 0..steps {
            used += 1;
            self.gradient(&z, &mut g, &mut rates);
            let mut accepted = false;
            for _ in 0..40 {
                for i in 0..z.len() {
                    trial[i] = z[i] - step * g[i];
                }
                self.project(&mut trial, &mut rates, &mut powers);
                let ft = self.objective(&trial, &mut rates);
                if ft <= fz {
                    let moved = z.iter().zip(&trial).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
                    std::mem::swap(&mut z, &mut trial);
                    fz = ft;
                    accepted = moved > eps;
                    break;
                }
                step = step * T::lit(0.5);
            }
            if !accepted {
                break;
            }
        }
        (z, used)
    }
}

/// Full local Lagrangian of satellite `m` (all nodes' augmented terms included), with
/// `candidate` supplying `Ŷ_m` on `m`'s edges and `current` supplying `Y^{(k)}`.
pub fn local_lagrangian<T: Real>(
    game: &SlotGame<T>,
    m: usize,
    candidate: &FlowAllocation<T>,
    current: &FlowAllocation<T>,
    duals: &[T],
    rho: T,
) -> T {
    let s = Scaled::new(game);
    let u = game.rate_unit;
    let x: Vec<T> = current.y.iter().map(|v| *v / u).collect();
    let r = s.residual(&x);
    let lp = LocalProblem::new(&s, m, &x, &r, duals, rho);
    let d = lp.deg();
    let nf = s.nf();
    let ne = s.ne();
    let mut z = vec![T::zero(); nf * d];
    for w in 0..nf {
        for (j, e) in lp.edges.clone().enumerate() {
            z[w * d + j] = candidate.y[w * ne + e] / u;
        }
    }
    let n = game.num_satellites();
    let touched = |l: usize| l == m || game.links.to[lp.edges.clone()].contains(&l);
    let mut rest = T::zero();
    for w in 0..nf {
        for l in 0..n {
            if !touched(l) {
                let a = r[w * n + l] * s.inv_q[l];
                rest += a * a;
            }
        }
    }
    let mut rates = vec![T::zero(); d];
    lp.objective(&z, &mut rates) + T::lit(0.5) * rho * rest
}

/// Minimizer of `m`'s local Lagrangian given the current global profile and prices.
pub fn solve_local<T: Real>(
    game: &SlotGame<T>,
    m: usize,
    current: &FlowAllocation<T>,
    duals: &[T],
    config: &SolverConfig<T>,
) -> FlowAllocation<T> {
    let s = Scaled::new(game);
    let u = game.rate_unit;
    let x: Vec<T> = current.y.iter().map(|v| *v / u).collect();
    let r = s.residual(&x);
    let lp = LocalProblem::new(&s, m, &x, &r, duals, config.rho);
    let (z, _) = lp.solve(config.inner_steps, config.inner_step);
    let mut out = current.clone();
    let d = lp.deg();
    let ne = s.ne();
    for w in 0..s.nf() {
        for (j, e) in lp.edges.clone().enumerate() {
            out.y[w * ne + e] = z[w * d + j] * u;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotSolution<T> {
    pub allocation: FlowAllocation<T>,
    /// Link rates per edge, bits/s.
    pub rates: Vec<T>,
    /// Transmit power per edge, watts.
    pub edge_power: Vec<T>,
    /// ISL power per satellite, watts.
    pub satellite_power: Vec<T>,
    pub duals: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Final `Σ_m ‖ΔR_m‖` in rate units.
    pub final_step: T,
    /// `Σ_m ‖ΔR_m‖` after each outer iteration.
    pub step_history: Vec<T>,
    /// Link rates (rate units) after each outer iteration, if requested.
    pub iterates: Vec<Vec<T>>,
}

/// Algorithm 1 on one slot, starting from `init` (projected first) with zero prices.
pub fn hbag_slot<T: Real>(
    game: &SlotGame<T>,
    init: &FlowAllocation<T>,
    config: &SolverConfig<T>,
    record_iterates: bool,
) -> Result<SlotSolution<T>, SolverError> {
    config.validate()?;
    let s = Scaled::new(game);
    let u = game.rate_unit;
    let ne = s.ne();
    let nf = s.nf();
    let n = game.num_satellites();
    if init.y.len() != nf * ne {
        return Err(SolverError::Game(GameError::Shape("initial allocation")));
    }
    let mut x: Vec<T> = init.y.iter().map(|v| *v / u).collect();
    s.project(&mut x);
    let mut duals = vec![T::zero(); nf * n];
    let rates_of = |x: &[T]| -> Vec<T> { (0..ne).map(|e| (0..nf).map(|w| x[w * ne + e]).sum()).collect() };
    let mut rates = rates_of(&x);
    let mut history = Vec::new();
    let mut iterates = Vec::new();
    if record_iterates {
        iterates.push(rates.clone());
    }
    let mut converged = false;
    let mut best = (T::infinity(), x.clone(), duals.clone());
    let mut iterations = 0;

    for k in 1..=config.max_iterations {
        iterations = k;
        let r = s.residual(&x);
        let blocks: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|m| {
                let lp = LocalProblem::new(&s, m, &x, &r, &duals, config.rho);
                lp.solve(config.inner_steps, config.inner_step).0
            })
            .collect();
        let mut xhat = x.clone();
        for (m, z) in blocks.iter().enumerate() {
            let range = game.links.out_range(m);
            let d = range.len();
            for w in 0..nf {
                for (j, e) in range.clone().enumerate() {
                    xhat[w * ne + e] = z[w * d + j];
                }
            }
        }
        let rhat = s.residual(&xhat);
        let updated = dual_update(&duals, &rhat, config.rho, config.dual_cap);
        let dual_move: T = updated.iter().zip(&duals).map(|(a, b)| (*a - *b).abs()).sum();
        duals = updated;

        // Primal projected step on the augmented Lagrangian at the current iterate.
        let eta = config.step_c0 / T::from_usize_lossy(k).sqrt();
        let mut next = x.clone();
        for e in 0..ne {
            let m = game.links.from[e];
            let to = game.links.to[e];
            let marg = game.cost_weight(m) * s.dpower(rates[e], e);
            for w in 0..nf {
                let grad = marg + duals[w * n + m] - duals[w * n + to]
                    + config.rho * (r[w * n + m] * s.inv_q[m] - r[w * n + to] * s.inv_q[to]);
                next[w * ne + e] = x[w * ne + e] - eta * grad;
            }
        }
        s.project(&mut next);
        let next_rates = rates_of(&next);
        let mut total = T::zero();
        for m in 0..n {
            let sq: T = game.links.out_range(m).map(|e| (next_rates[e] - rates[e]) * (next_rates[e] - rates[e])).sum();
            total += sq.sqrt();
        }
        x = next;
        rates = next_rates;
        history.push(total);
        if record_iterates {
            iterates.push(rates.clone());
        }
        let infeas: T = s.residual(&x).iter().map(|v| *v * *v).sum();
        if infeas < best.0 {
            best = (infeas, x.clone(), duals.clone());
        }
        if total <= config.tolerance && dual_move <= config.tolerance {
            converged = true;
            break;
        }
    }
    let final_step = *history.last().unwrap_or(&T::zero());
    // Without convergence, fall back to the iterate with the smallest conservation residual.
    let (x, duals) = if converged { (x, duals) } else { (best.1, best.2) };
    let allocation = FlowAllocation { num_flows: nf, num_edges: ne, y: x.iter().map(|v| *v * u).collect() };
    let rates: Vec<T> = allocation.link_rates();
    let edge_power: Vec<T> = (0..ne).map(|e| game.edge_power(rates[e], e)).collect();
    let satellite_power = (0..n).map(|m| game.links.out_range(m).map(|e| edge_power[e]).sum()).collect();
    Ok(SlotSolution {
        allocation,
        rates,
        edge_power,
        satellite_power,
        duals,
        iterations,
        converged,
        final_step,
        step_history: history,
        iterates,
    })
}

/// Everything fixed for an episode.
#[derive(Debug, Clone)]
pub struct EpisodeSetup<'a, T> {
    pub ephemeris: &'a Ephemeris<T>,
    pub link: &'a LinkParams<T>,
    pub energy: &'a EnergyParams<T>,
    pub game: &'a GameParams<T>,
    pub flows: &'a [Flow<T>],
    pub slot_duration: T,
    /// Initial charge per satellite.
    pub initial_charge: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord<T> {
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    pub rates: Vec<T>,
    pub edge_power: Vec<T>,
    pub satellite_power: Vec<T>,
    pub delivered: Vec<T>,
    pub bound: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub step_history: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult<T> {
    pub variant: Variant,
    pub trace: BatteryTrace<T>,
    pub slots: Vec<SlotRecord<T>>,
}

impl<T: Real> EpisodeResult<T> {
    pub fn all_converged(&self) -> bool {
        self.slots.iter().all(|s| s.converged)
    }
}

/// Build the frozen game for slot `t` given the batteries at its start.
pub fn slot_game<T: Real>(
    setup: &EpisodeSetup<'_, T>,
    variant: Variant,
    t: usize,
    charges: &[T],
) -> Result<(SlotGame<T>, Vec<T>), SolverError> {
    let eph = setup.ephemeris;
    let topo = build_topology(eph, t);
    let links = LinkSet::from_topology(&topo);
    let mut kappa = Vec::with_capacity(links.num_edges());
    for e in 0..links.num_edges() {
        kappa.push(setup.link.kappa(eph.distance(links.from[e], links.to[e], t)?)?);
    }
    let n = eph.num_satellites;
    let mut bound = Vec::with_capacity(n);
    let mut harvest = Vec::with_capacity(n);
    for m in 0..n {
        let lit = eph.illuminated(m, t);
        let h = harvest_power(lit, eph.panel_angle(m, t), setup.energy);
        harvest.push(h);
        let policy = variant_bound(variant, charges[m], lit, h, eph.remaining_eclipse(m, t), setup.energy)?;
        bound.push(policy.min(available_power(charges[m], h, setup.energy, setup.slot_duration)));
    }
    let weights = vec![variant.penalty_weight(setup.game.penalty_weight); n];
    let game = SlotGame::new(
        links,
        kappa,
        setup.flows.to_vec(),
        setup.link.bandwidth,
        setup.game,
        charges,
        &weights,
        bound,
        PenaltyMode::Floored,
    )?;
    Ok((game, harvest))
}

/// Slot loop: bounds → HBAG → battery step. The previous slot's allocation seeds the next
/// whenever the directed edge list is unchanged.
pub fn run_episode<T: Real>(
    setup: &EpisodeSetup<'_, T>,
    config: &SolverConfig<T>,
) -> Result<EpisodeResult<T>, SolverError> {
    config.validate()?;
    let eph = setup.ephemeris;
    let n = eph.num_satellites;
    let mut charges = setup.initial_charge.clone();
    let mut trace = BatteryTrace::new(n, setup.energy.floor);
    let mut slots = Vec::with_capacity(eph.num_slots);
    let mut warm: Option<(Vec<usize>, Vec<usize>, FlowAllocation<T>)> = None;
    for t in 0..eph.num_slots {
        let (game, harvest) = slot_game(setup, config.variant, t, &charges)?;
        let init = match &warm {
            Some((f, to, a)) if *f == game.links.from && *to == game.links.to => a.clone(),
            _ => FlowAllocation::zeros(game.flows.len(), game.links.num_edges()),
        };
        let sol = hbag_slot(&game, &init, config, false)?;
        let mut lit = Vec::with_capacity(n);
        for m in 0..n {
            let (c, loss) =
                step_battery_with_loss(charges[m], sol.satellite_power[m], harvest[m], setup.energy, setup.slot_duration)?;
            charges[m] = c;
            trace.clamp_loss[m] += loss;
            lit.push(eph.illuminated(m, t));
        }
        trace.push_slot(&charges, &lit);
        let del = delivered(&sol.allocation, &game.flows, &game.links);
        slots.push(SlotRecord {
            from: game.links.from.clone(),
            to: game.links.to.clone(),
            rates: sol.rates.clone(),
            edge_power: sol.edge_power.clone(),
            satellite_power: sol.satellite_power.clone(),
            delivered: del,
            bound: game.bound.clone(),
            iterations: sol.iterations,
            converged: sol.converged,
            step_history: sol.step_history.clone(),
        });
        warm = Some((game.links.from.clone(), game.links.to.clone(), sol.allocation));
    }
    Ok(EpisodeResult { variant: config.variant, trace, slots })
}
