//! Battery-penalized utility, its exact potential, gradients, the strategy-set
//! projection and the closed-form per-coordinate best response.
//!
//! Throughput and flow prices are measured in rate units of `rate_unit` bits/s, power
//! terms in watts scaled by `αD_e + λ/margin`. With `rate_unit = 1` the expressions
//! reduce to the raw bits/s forms.

use crate::link::{max_rate_under_bound, power_for_rate, power_rate_derivatives};
use crate::traffic::{Flow, FlowAllocation, LinkSet};
use crate::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GameError {
    #[error("battery of satellite {satellite} leaves a nonpositive penalty margin {margin}")]
    PenaltyPole { satellite: usize, margin: f64 },
    #[error("deviation leaves the strategy set: {0}")]
    Infeasible(&'static str),
    #[error("coordinate (flow {flow}, edge {edge}) is not controlled by satellite {satellite}")]
    NotOwned { satellite: usize, flow: usize, edge: usize },
    #[error("dimension mismatch: {0}")]
    Shape(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameParams<T> {
    /// α, per joule of ISL energy.
    pub energy_weight: T,
    pub slot_duration: T,
    /// Default λ_m(t).
    pub penalty_weight: T,
    /// ε, in energy units.
    pub safety_margin: T,
    pub rate_unit: T,
    /// Battery energies are divided by this before entering the penalty.
    pub energy_unit: T,
    /// C^B_min in joules.
    pub floor: T,
}

impl<T: Real> GameParams<T> {
    /// `(C − C_min)/E_unit + ε`.
    pub fn margin(&self, charge: T) -> T {
        (charge - self.floor) / self.energy_unit + self.safety_margin
    }

    /// `λ / margin`, failing at or past the pole.
    pub fn penalty_coefficient(&self, weight: T, charge: T, satellite: usize) -> Result<T, GameError> {
        let margin = self.margin(charge);
        if !(margin > T::zero()) {
            return Err(GameError::PenaltyPole { satellite, margin: margin.to_f64_lossy() });
        }
        Ok(weight / margin)
    }

    /// `λ / max(margin, ε)`; used when simulating baselines that pierce the floor.
    pub fn penalty_coefficient_floored(&self, weight: T, charge: T) -> T {
        weight / self.margin(charge).max(self.safety_margin)
    }

    pub fn energy_cost(&self) -> T {
        self.energy_weight * self.slot_duration
    }
}

/// Everything a slot's game needs, with batteries frozen.
#[derive(Debug, Clone)]
pub struct SlotGame<T> {
    pub links: LinkSet,
    /// κ per directed edge.
    pub kappa: Vec<T>,
    pub flows: Vec<Flow<T>>,
    pub bandwidth: T,
    pub rate_unit: T,
    /// `αD_e` shared by all satellites.
    pub energy_cost: T,
    /// `λ_m(t)/margin_m` per satellite.
    pub penalty: Vec<T>,
    /// `λ_m(t)` per satellite (kept for the strong-concavity bound).
    pub penalty_weight: Vec<T>,
    /// Margin `(C − C_min)/E_unit + ε` per satellite.
    pub margin: Vec<T>,
    /// Per-satellite ISL power budget.
    pub bound: Vec<T>,
    /// `λ^ω_l`, row-major `[flow][node]`, in utility per rate unit.
    pub duals: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyMode {
    /// Reject batteries at or below the pole.
    Strict,
    /// Floor the margin at ε.
    Floored,
}

impl<T: Real> SlotGame<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        links: LinkSet,
        kappa: Vec<T>,
        flows: Vec<Flow<T>>,
        bandwidth: T,
        params: &GameParams<T>,
        charges: &[T],
        penalty_weight: &[T],
        bound: Vec<T>,
        mode: PenaltyMode,
    ) -> Result<Self, GameError> {
        let n = links.num_nodes;
        if kappa.len() != links.num_edges() || charges.len() != n || penalty_weight.len() != n || bound.len() != n {
            return Err(GameError::Shape("per-edge or per-satellite vector length"));
        }
        let mut penalty = Vec::with_capacity(n);
        let mut margin = Vec::with_capacity(n);
        for m in 0..n {
            let (p, mg) = match mode {
                PenaltyMode::Strict => (params.penalty_coefficient(penalty_weight[m], charges[m], m)?, params.margin(charges[m])),
                PenaltyMode::Floored => (
                    params.penalty_coefficient_floored(penalty_weight[m], charges[m]),
                    params.margin(charges[m]).max(params.safety_margin),
                ),
            };
            penalty.push(p);
            margin.push(mg);
        }
        let duals = vec![T::zero(); flows.len() * n];
        Ok(SlotGame {
            links,
            kappa,
            flows,
            bandwidth,
            rate_unit: params.rate_unit,
            energy_cost: params.energy_cost(),
            penalty,
            penalty_weight: penalty_weight.to_vec(),
            margin,
            bound,
            duals,
        })
    }

    pub fn num_satellites(&self) -> usize {
        self.links.num_nodes
    }

    pub fn num_coordinates(&self) -> usize {
        self.flows.len() * self.links.num_edges()
    }

    /// Effective power weight `αD_e + λ_m/margin_m`.
    #[inline]
    pub fn cost_weight(&self, m: usize) -> T {
        self.energy_cost + self.penalty[m]
    }

    #[inline]
    pub fn dual(&self, flow: usize, node: usize) -> T {
        self.duals[flow * self.links.num_nodes + node]
    }

    /// Price difference `λ^ω_m − λ^ω_n` carried by edge `m → n`.
    #[inline]
    pub fn edge_price(&self, flow: usize, edge: usize) -> T {
        self.dual(flow, self.links.from[edge]) - self.dual(flow, self.links.to[edge])
    }

    pub fn edge_power(&self, rate: T, edge: usize) -> T {
        power_for_rate(rate, self.kappa[edge], self.bandwidth)
    }

    pub fn satellite_power(&self, y: &FlowAllocation<T>, m: usize) -> T {
        self.links.out_range(m).map(|e| self.edge_power(y.link_rate(e), e)).sum()
    }

    /// Eq. (9) utility of satellite `m` for one slot.
    pub fn utility(&self, m: usize, y: &FlowAllocation<T>) -> T {
        let c = self.cost_weight(m);
        let mut u = T::zero();
        for e in self.links.out_range(m) {
            let r = y.link_rate(e);
            u += r / self.rate_unit - c * self.edge_power(r, e);
            for w in 0..self.flows.len() {
                u -= self.edge_price(w, e) * y.get(w, e) / self.rate_unit;
            }
        }
        u
    }

    /// Potential: throughput − energy cost − battery penalty − flow Lagrangian, each
    /// accumulated as a separate global sum.
    pub fn potential(&self, y: &FlowAllocation<T>) -> T {
        let rates = y.link_rates();
        let throughput: T = rates.iter().copied().sum::<T>() / self.rate_unit;
        let energy: T = self.energy_cost * (0..rates.len()).map(|e| self.edge_power(rates[e], e)).sum::<T>();
        let penalty: T = (0..self.num_satellites())
            .map(|m| self.penalty[m] * self.links.out_range(m).map(|e| self.edge_power(rates[e], e)).sum::<T>())
            .sum();
        let n = self.links.num_nodes;
        let mut lagr = T::zero();
        for w in 0..self.flows.len() {
            for l in 0..n {
                let out: T = self.links.out_range(l).map(|e| y.get(w, e)).sum();
                let inn: T = self.links.incoming[l].iter().map(|&e| y.get(w, e)).sum();
                lagr += self.duals[w * n + l] * (out - inn);
            }
        }
        throughput - energy - penalty - lagr / self.rate_unit
    }

    /// `∂Φ/∂Y^ω_e` for every coordinate, row-major `[flow][edge]`, per bits/s.
    pub fn potential_gradient(&self, y: &FlowAllocation<T>) -> Vec<T> {
        let ne = self.links.num_edges();
        let mut g = vec![T::zero(); self.num_coordinates()];
        for e in 0..ne {
            let m = self.links.from[e];
            let (d1, _) = power_rate_derivatives(y.link_rate(e), self.kappa[e], self.bandwidth);
            let marginal = self.cost_weight(m) * d1;
            for w in 0..self.flows.len() {
                g[w * ne + e] = (T::one() - self.edge_price(w, e)) / self.rate_unit - marginal;
            }
        }
        g
    }

    /// `∂²Φ/∂(Y^ω_e)²`, identical for every flow on an edge; one entry per edge.
    pub fn potential_second_derivative(&self, y: &FlowAllocation<T>) -> Vec<T> {
        (0..self.links.num_edges())
            .map(|e| {
                let (_, d2) = power_rate_derivatives(y.link_rate(e), self.kappa[e], self.bandwidth);
                -self.cost_weight(self.links.from[e]) * d2
            })
            .collect()
    }

    /// Strong-concavity lower bound `min_{m,n} min{P''(R_{m,n}), λ_m/margin_m²}` at `y`.
    pub fn concavity_bound(&self, y: &FlowAllocation<T>) -> T {
        let mut best = T::infinity();
        for e in 0..self.links.num_edges() {
            let m = self.links.from[e];
            let (_, d2) = power_rate_derivatives(y.link_rate(e), self.kappa[e], self.bandwidth);
            let pen = self.penalty_weight[m] / (self.margin[m] * self.margin[m]);
            best = best.min(d2.min(pen));
        }
        best
    }

    /// Box `[0, d_ω]` and per-satellite budget check, with absolute slack `tol` on the budget.
    pub fn is_feasible(&self, y: &FlowAllocation<T>, tol: T) -> bool {
        let ne = self.links.num_edges();
        for (w, f) in self.flows.iter().enumerate() {
            for e in 0..ne {
                let v = y.get(w, e);
                if !(v >= T::zero() && v <= f.demand) {
                    return false;
                }
            }
        }
        (0..self.num_satellites()).all(|m| self.satellite_power(y, m) <= self.bound[m] + tol)
    }

    /// `|ΔU_m − ΔΦ|` for moving coordinate `(flow, edge)` of satellite `m` by `delta` bits/s.
    pub fn verify_exact_potential(
        &self,
        y: &FlowAllocation<T>,
        m: usize,
        flow: usize,
        edge: usize,
        delta: T,
    ) -> Result<T, GameError> {
        if !self.links.out_range(m).contains(&edge) || flow >= self.flows.len() {
            return Err(GameError::NotOwned { satellite: m, flow, edge });
        }
        let mut z = y.clone();
        z.set(flow, edge, y.get(flow, edge) + delta);
        let tol = T::lit(1e-9);
        if !self.is_feasible(y, tol) {
            return Err(GameError::Infeasible("base profile"));
        }
        if !self.is_feasible(&z, tol) {
            return Err(GameError::Infeasible("perturbed profile"));
        }
        let du = self.utility(m, &z) - self.utility(m, y);
        let dphi = self.potential(&z) - self.potential(y);
        Ok((du - dphi).abs())
    }

    /// Clip to the box, then rescale each over-budget satellite's link powers.
    pub fn project_feasible(&self, y: &FlowAllocation<T>) -> FlowAllocation<T> {
        let mut z = y.clone();
        project_in_place(&self.links, &self.kappa, &self.flows, self.bandwidth, &self.bound, &mut z);
        z
    }
}

/// Projection used by [`SlotGame::project_feasible`] and the solvers.
pub fn project_in_place<T: Real>(
    links: &LinkSet,
    kappa: &[T],
    flows: &[Flow<T>],
    bandwidth: T,
    bound: &[T],
    y: &mut FlowAllocation<T>,
) {
    let ne = links.num_edges();
    for (w, f) in flows.iter().enumerate() {
        for e in 0..ne {
            let v = y.y[w * ne + e];
            y.y[w * ne + e] = if v > f.demand { f.demand } else if v > T::zero() { v } else { T::zero() };
        }
    }
    for m in 0..links.num_nodes {
        project_satellite(links, kappa, flows.len(), bandwidth, bound[m], m, &mut y.y);
    }
}

/// Budget rescaling for satellite `m` on a raw `[flow][edge]` buffer already inside the box.
pub(crate) fn project_satellite<T: Real>(
    links: &LinkSet,
    kappa: &[T],
    num_flows: usize,
    bandwidth: T,
    bound: T,
    m: usize,
    y: &mut [T],
) {
    let ne = links.num_edges();
    let range = links.out_range(m);
    let rate = |y: &[T], e: usize| -> T { (0..num_flows).map(|w| y[w * ne + e]).sum() };
    let total: T = range.clone().map(|e| power_for_rate(rate(y, e), kappa[e], bandwidth)).sum();
    if total <= bound {
        return;
    }
    let scale = if total > T::zero() { bound.max(T::zero()) / total } else { T::zero() };
    for e in range {
        let r = rate(y, e);
        if r <= T::zero() {
            continue;
        }
        let p = power_for_rate(r, kappa[e], bandwidth) * scale;
        let r_new = max_rate_under_bound(p, kappa[e], bandwidth).min(r);
        let ratio = r_new / r;
        for w in 0..num_flows {
            y[w * ne + e] *= ratio;
        }
    }
}

/// Stationary point of `x/u − dual·x/u − c κ (2^{x/B} − 1)` clipped to `[0, r_cap]`.
pub fn analytic_best_response<T: Real>(c_eff: T, dual: T, kappa: T, bandwidth: T, rate_unit: T, r_cap: T) -> T {
    let value = T::one() - dual;
    if !(value > T::zero()) {
        return T::zero();
    }
    let arg = value * bandwidth / (rate_unit * c_eff * kappa * T::LN_2());
    let r = bandwidth * arg.log2();
    r.max(T::zero()).min(r_cap.max(T::zero()))
}
